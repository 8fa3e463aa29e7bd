//! Samplers for planar Poisson and Poisson cluster processes.
//!
//! Cluster patterns are generated ring by ring: parents are drawn in
//! concentric annuli of unit width, each annulus (with all of its clusters)
//! from its own keyed sub-stream. Enlarging the sampling disk therefore only
//! appends points; the inner part of the pattern is unchanged. Window-size
//! convergence checks rely on this coupling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::{Point, Window};
use crate::mc::Execution;
use crate::offspring::OffspringKernel;
use crate::rng::{SimRng, StreamKey};

/// A stationary Poisson–Poisson cluster process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Parent intensity per unit area.
    pub lambda_parent: f64,
    /// Mean cluster size.
    pub mu: f64,
    pub kernel: OffspringKernel,
}

impl ClusterSpec {
    pub fn new(lambda_parent: f64, mu: f64, kernel: OffspringKernel) -> Result<Self> {
        let s = Self {
            lambda_parent,
            mu,
            kernel,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_parent > 0.0 && self.lambda_parent.is_finite()) {
            return Err(domain(format!(
                "parent intensity must be positive, got {}",
                self.lambda_parent
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(domain(format!("mean cluster size must be positive, got {}", self.mu)));
        }
        self.kernel.validate()
    }

    /// Intensity of the cluster process, `lambda_parent * mu`.
    pub fn lambda_total(&self) -> f64 {
        self.lambda_parent * self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub cluster_id: u64,
    pub is_transmitter: bool,
    pub fading: f64,
}

/// Cluster id of the extra cluster holding the Palm point, and of the parent
/// cluster at the origin under the parent Palm distribution.
pub const TYPICAL_CLUSTER: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub window: Window,
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marks: Option<Vec<Mark>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_index: Option<usize>,
}

impl PointPattern {
    pub fn empty(window: Window) -> Self {
        Self {
            window,
            points: Vec::new(),
            marks: None,
            origin_index: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The pattern without its distinguished origin point.
    pub fn reduced(&self) -> PointPattern {
        let Some(o) = self.origin_index else {
            return self.clone();
        };
        let keep = |i: usize| i != o;
        PointPattern {
            window: self.window,
            points: self.points.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, p)| *p).collect(),
            marks: self.marks.as_ref().map(|m| {
                m.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, m)| *m).collect()
            }),
            origin_index: None,
        }
    }

    /// Points inside `window`, marks and origin index carried along.
    pub fn restrict(&self, window: Window) -> PointPattern {
        let mut out = PointPattern::empty(window);
        let mut marks = self.marks.as_ref().map(|_| Vec::new());
        for (i, &p) in self.points.iter().enumerate() {
            if !window.contains(p) {
                continue;
            }
            if self.origin_index == Some(i) {
                out.origin_index = Some(out.points.len());
            }
            out.points.push(p);
            if let (Some(dst), Some(src)) = (marks.as_mut(), self.marks.as_ref()) {
                dst.push(src[i]);
            }
        }
        out.marks = marks;
        out
    }

    pub fn count_within(&self, center: Point, r: f64, skip: Option<usize>) -> usize {
        let r2 = r * r;
        self.points
            .iter()
            .enumerate()
            .filter(|&(i, p)| Some(i) != skip && (*p - center).norm_sq() <= r2)
            .count()
    }
}

fn default_tail_eps() -> f64 {
    1e-6
}
fn default_confidence() -> f64 {
    0.95
}

/// Monte Carlo settings shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Radius of the observation disk around the origin.
    pub window_radius: f64,
    /// Parents are sampled out to `window_radius + rho(tail_eps)`.
    #[serde(default = "default_tail_eps")]
    pub tail_eps: f64,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence_level: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(window_radius: f64, replications: u64, seed: u64) -> Self {
        Self {
            window_radius,
            tail_eps: default_tail_eps(),
            replications,
            seed,
            confidence_level: default_confidence(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_radius > 0.0 && self.window_radius.is_finite()) {
            return Err(domain("window_radius must be positive"));
        }
        if !(self.tail_eps > 0.0 && self.tail_eps < 1.0) {
            return Err(domain("tail_eps must be in (0,1)"));
        }
        if self.replications == 0 {
            return Err(domain("replications must be at least 1"));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(domain("confidence_level must be in (0,1)"));
        }
        Ok(())
    }

    /// Default interference window for SINR estimation.
    pub fn default_sinr_window(spec: &ClusterSpec) -> f64 {
        (10.0 / spec.lambda_total().sqrt()).max(30.0)
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as u64
}

fn uniform_in_annulus<R: Rng + ?Sized>(r0: f64, r1: f64, rng: &mut R) -> Point {
    let u: f64 = rng.random();
    let radius = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
    let angle = rng.random::<f64>() * 2.0 * PI;
    Point::from_polar(radius, angle)
}

/// Homogeneous Poisson process of intensity `lambda` in `region`.
pub fn sample_parent_ppp<R: Rng + ?Sized>(lambda: f64, region: &Window, rng: &mut R) -> Result<PointPattern> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("intensity must be positive, got {lambda}")));
    }
    region.validate()?;
    let n = poisson_count(lambda * region.area(), rng);
    let mut pat = PointPattern::empty(*region);
    pat.points.reserve(n as usize);
    for _ in 0..n {
        let p = match *region {
            Window::Disk { center, radius } => center + uniform_in_annulus(0.0, radius, rng),
            Window::Rect { min, max } => Point::new(
                min.x + rng.random::<f64>() * (max.x - min.x),
                min.y + rng.random::<f64>() * (max.y - min.y),
            ),
        };
        pat.points.push(p);
    }
    Ok(pat)
}

/// One finite Poisson offspring cluster around `center`.
pub fn sample_cluster<R: Rng + ?Sized>(
    mu: f64,
    kernel: &OffspringKernel,
    center: Point,
    rng: &mut R,
) -> Result<PointPattern> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(domain(format!("mean cluster size must be positive, got {mu}")));
    }
    kernel.validate()?;
    let n = poisson_count(mu, rng);
    let points: Vec<Point> = (0..n).map(|_| center + kernel.sample_offset(rng)).collect();
    let reach = points
        .iter()
        .map(|p| p.dist(center))
        .fold(kernel.truncation_radius(1e-12), f64::max);
    Ok(PointPattern {
        window: Window::Disk {
            center,
            radius: reach,
        },
        points,
        marks: None,
        origin_index: None,
    })
}

const RING_WIDTH: f64 = 1.0;
const STREAM_TYPICAL: u64 = 0;
pub(crate) const STREAM_MARKS: u64 = 1;
const STREAM_RING0: u64 = 2;

/// Emits every offspring point of every parent in the disk of radius
/// `outer` (rounded up to whole rings), as `(point, cluster_id)`.
pub(crate) fn for_each_stationary_point<F>(spec: &ClusterSpec, outer: f64, key: &StreamKey, mut emit: F)
where
    F: FnMut(Point, u64),
{
    let rings = (outer / RING_WIDTH).ceil().max(1.0) as u64;
    let cluster_size = Poisson::new(spec.mu).expect("validated mu");
    for k in 0..rings {
        let mut rng = key.stream(STREAM_RING0 + k);
        let r0 = k as f64 * RING_WIDTH;
        let r1 = r0 + RING_WIDTH;
        let parents = poisson_count(spec.lambda_parent * PI * (r1 * r1 - r0 * r0), &mut rng);
        for j in 0..parents {
            let id = ((k + 1) << 32) | j;
            let parent = uniform_in_annulus(r0, r1, &mut rng);
            let n = cluster_size.sample(&mut rng) as u64;
            for _ in 0..n {
                emit(parent + spec.kernel.sample_offset(&mut rng), id);
            }
        }
    }
}

/// Emits the typical cluster of the Palm version: the origin itself first,
/// then the extra Poisson(mu) offspring of the parent at `-z`, `z ~ Q`.
/// Returns the parent position.
pub(crate) fn for_each_typical_point<F>(spec: &ClusterSpec, key: &StreamKey, mut emit: F) -> Point
where
    F: FnMut(Point, u64),
{
    let mut rng = key.stream(STREAM_TYPICAL);
    let parent = -spec.kernel.sample_offset(&mut rng);
    emit(Point::ORIGIN, TYPICAL_CLUSTER);
    let n = poisson_count(spec.mu, &mut rng);
    for _ in 0..n {
        emit(parent + spec.kernel.sample_offset(&mut rng), TYPICAL_CLUSTER);
    }
    parent
}

pub(crate) fn sampling_radius(spec: &ClusterSpec, window_radius: f64, tail_eps: f64) -> f64 {
    window_radius + spec.kernel.truncation_radius(tail_eps)
}

fn collect_marked(window_radius: f64) -> (PointPattern, Vec<Mark>) {
    (PointPattern::empty(Window::disk(window_radius)), Vec::new())
}

fn cluster_mark(cluster_id: u64) -> Mark {
    Mark {
        cluster_id,
        is_transmitter: false,
        fading: 1.0,
    }
}

/// Stationary cluster process observed in the disk of radius
/// `cfg.window_radius`, cluster ids in the marks.
pub fn sample_ppcp<R: Rng + ?Sized>(spec: &ClusterSpec, cfg: &SimConfig, rng: &mut R) -> Result<PointPattern> {
    spec.validate()?;
    cfg.validate()?;
    let key = StreamKey::from_rng(rng);
    Ok(sample_ppcp_keyed(spec, cfg.window_radius, cfg.tail_eps, &key))
}

pub(crate) fn sample_ppcp_keyed(spec: &ClusterSpec, window_radius: f64, tail_eps: f64, key: &StreamKey) -> PointPattern {
    let (mut pat, mut marks) = collect_marked(window_radius);
    let r2 = window_radius * window_radius;
    for_each_stationary_point(spec, sampling_radius(spec, window_radius, tail_eps), key, |p, id| {
        if p.norm_sq() <= r2 {
            pat.points.push(p);
            marks.push(cluster_mark(id));
        }
    });
    pat.marks = Some(marks);
    pat
}

/// Palm version of the cluster process: a stationary sample superposed with
/// an independent cluster whose parent sits at `-z`, `z ~ Q`, so that one of
/// its points is at the origin. The origin point is `origin_index`.
pub fn sample_palm_ppcp<R: Rng + ?Sized>(spec: &ClusterSpec, cfg: &SimConfig, rng: &mut R) -> Result<PointPattern> {
    spec.validate()?;
    cfg.validate()?;
    let key = StreamKey::from_rng(rng);
    Ok(sample_palm_ppcp_keyed(spec, cfg.window_radius, cfg.tail_eps, &key))
}

pub(crate) fn sample_palm_ppcp_keyed(
    spec: &ClusterSpec,
    window_radius: f64,
    tail_eps: f64,
    key: &StreamKey,
) -> PointPattern {
    let (mut pat, mut marks) = collect_marked(window_radius);
    let r2 = window_radius * window_radius;
    let mut push = |p: Point, id: u64| {
        if p.norm_sq() <= r2 {
            pat.points.push(p);
            marks.push(cluster_mark(id));
        }
    };
    for_each_typical_point(spec, key, &mut push);
    for_each_stationary_point(spec, sampling_radius(spec, window_radius, tail_eps), key, &mut push);
    pat.marks = Some(marks);
    pat.origin_index = Some(0);
    pat
}

/// Palm version with respect to the parent process: a parent at the origin
/// with its own Poisson(mu) cluster (id `TYPICAL_CLUSTER`, listed first and
/// never clipped), superposed on a stationary sample.
pub fn sample_parent_palm_ppcp<R: Rng + ?Sized>(
    spec: &ClusterSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PointPattern> {
    spec.validate()?;
    cfg.validate()?;
    let key = StreamKey::from_rng(rng);
    Ok(sample_parent_palm_ppcp_keyed(spec, cfg.window_radius, cfg.tail_eps, &key))
}

pub(crate) fn sample_parent_palm_ppcp_keyed(
    spec: &ClusterSpec,
    window_radius: f64,
    tail_eps: f64,
    key: &StreamKey,
) -> PointPattern {
    let (mut pat, mut marks) = collect_marked(window_radius);
    let mut rng = key.stream(STREAM_TYPICAL);
    let n = poisson_count(spec.mu, &mut rng);
    for _ in 0..n {
        pat.points.push(spec.kernel.sample_offset(&mut rng));
        marks.push(cluster_mark(TYPICAL_CLUSTER));
    }
    let r2 = window_radius * window_radius;
    for_each_stationary_point(spec, sampling_radius(spec, window_radius, tail_eps), key, |p, id| {
        if p.norm_sq() <= r2 {
            pat.points.push(p);
            marks.push(cluster_mark(id));
        }
    });
    pat.marks = Some(marks);
    pat
}

fn check_access_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("transmit probability must be in (0,1), got {p}")))
    }
}

/// Independent Bernoulli(p) transmit marks, one uniform per point in order.
/// The origin point is marked as well; callers decide whether to use it.
pub fn thin<R: Rng + ?Sized>(pat: &PointPattern, p: f64, rng: &mut R) -> Result<PointPattern> {
    check_access_prob(p)?;
    let mut out = pat.clone();
    let marks = out
        .marks
        .get_or_insert_with(|| vec![cluster_mark(u64::MAX); pat.points.len()]);
    for m in marks.iter_mut() {
        m.is_transmitter = rng.random::<f64>() < p;
    }
    Ok(out)
}

/// Transmit mark and unit-mean exponential fading for every point, two
/// uniforms per point in order, so that extending a pattern at its end never
/// changes the marks of the earlier points.
pub fn thin_and_fade<R: Rng + ?Sized>(pat: &mut PointPattern, p: f64, rng: &mut R) -> Result<()> {
    check_access_prob(p)?;
    let n = pat.points.len();
    let marks = pat.marks.get_or_insert_with(|| vec![cluster_mark(u64::MAX); n]);
    for m in marks.iter_mut() {
        let (tx, fade) = draw_mark(p, rng);
        m.is_transmitter = tx;
        m.fading = fade;
    }
    Ok(())
}

#[inline]
pub(crate) fn draw_mark<R: Rng + ?Sized>(p: f64, rng: &mut R) -> (bool, f64) {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    (u < p, -(1.0 - v).ln())
}

pub(crate) fn marks_rng(key: &StreamKey) -> SimRng {
    key.stream(STREAM_MARKS)
}

/// Transmitter nearest to the origin, excluding the origin point itself.
/// `None` when the pattern has no such transmitter (a censored replication).
pub fn nearest_transmitter(pat: &PointPattern) -> Option<(usize, f64)> {
    let marks = pat.marks.as_ref()?;
    let mut best: Option<(usize, f64)> = None;
    for (i, (p, m)) in pat.points.iter().zip(marks).enumerate() {
        if !m.is_transmitter || Some(i) == pat.origin_index {
            continue;
        }
        let d2 = p.norm_sq();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, d2)| (i, d2.sqrt()))
}
