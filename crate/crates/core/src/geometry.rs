use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A point of the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(radius * c, radius * s)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Observation region of a pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Window {
    Disk { center: Point, radius: f64 },
    Rect { min: Point, max: Point },
}

impl Window {
    pub fn disk(radius: f64) -> Self {
        Window::Disk {
            center: Point::ORIGIN,
            radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Window::Disk { radius, .. } if !(radius >= 0.0 && radius.is_finite()) => {
                Err(domain("disk radius must be finite and nonnegative"))
            }
            Window::Rect { min, max } if !(max.x >= min.x && max.y >= min.y) => {
                Err(domain("rectangle corners out of order"))
            }
            _ => Ok(()),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Window::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Window::Rect { min, max } => (max.x - min.x) * (max.y - min.y),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Window::Disk { center, radius } => (p - center).norm_sq() <= radius * radius,
            Window::Rect { min, max } => {
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y
            }
        }
    }
}
