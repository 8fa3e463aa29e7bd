//! Offspring displacement laws and the radial kernels derived from them.
//!
//! Both kernels are isotropic and diffuse, so the displacement law `Q` has a
//! radial density `f(|y|)` and coincides with its reflection. Everything the
//! analytic code needs reduces to three scalar functions of distances:
//! the density itself, the probability that a displaced offspring lands in a
//! centered ball, and the ring kernel `g(s | r)`, i.e. the density of the
//! distance from the origin to an offspring whose parent sits at distance `r`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::Point;
use crate::quadrature::{try_integrate_pieces, QuadPolicy};
use crate::special::bessel_i0e;

/// Tolerance for the Thomas ball probability, obtained by integrating the
/// ring kernel.
const BALL_POLICY: QuadPolicy = QuadPolicy {
    rel_tol: 1e-10,
    abs_tol: 1e-13,
    trunc_factor: 9.0,
    max_depth: 40,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum OffspringKernel {
    /// Isotropic normal displacement with per-coordinate variance `sigma2`.
    Thomas { sigma2: f64 },
    /// Uniform displacement on the disk of the given radius.
    Matern { radius: f64 },
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

impl OffspringKernel {
    pub fn thomas(sigma2: f64) -> Result<Self> {
        let k = OffspringKernel::Thomas { sigma2 };
        k.validate()?;
        Ok(k)
    }

    pub fn matern(radius: f64) -> Result<Self> {
        let k = OffspringKernel::Matern { radius };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OffspringKernel::Thomas { sigma2 } if !(sigma2 > 0.0 && sigma2.is_finite()) => {
                Err(domain(format!("Thomas sigma2 must be positive, got {sigma2}")))
            }
            OffspringKernel::Matern { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(domain(format!("Matern radius must be positive, got {radius}")))
            }
            _ => Ok(()),
        }
    }

    /// Natural length scale: `sigma` for Thomas, the disk radius for Matérn.
    pub fn scale(&self) -> f64 {
        match *self {
            OffspringKernel::Thomas { sigma2 } => sigma2.sqrt(),
            OffspringKernel::Matern { radius } => radius,
        }
    }

    /// Smallest radius whose complement carries at most `eps` of the mass.
    pub fn truncation_radius(&self, eps: f64) -> f64 {
        match *self {
            OffspringKernel::Thomas { sigma2 } => {
                let eps = eps.clamp(f64::MIN_POSITIVE, 1.0);
                (sigma2 * -2.0 * eps.ln()).sqrt()
            }
            OffspringKernel::Matern { radius } => radius,
        }
    }

    /// Radius beyond which offspring mass is ignored by quadrature:
    /// `trunc_factor * sigma` for Thomas, the exact support for Matérn.
    pub fn quadrature_radius(&self, trunc_factor: f64) -> f64 {
        match *self {
            OffspringKernel::Thomas { sigma2 } => trunc_factor * sigma2.sqrt(),
            OffspringKernel::Matern { radius } => radius,
        }
    }

    /// Radial density `f(s)` of the displacement law.
    pub fn density(&self, s: f64) -> Result<f64> {
        check_nonneg("distance", s)?;
        Ok(self.density_unchecked(s))
    }

    pub(crate) fn density_unchecked(&self, s: f64) -> f64 {
        match *self {
            OffspringKernel::Thomas { sigma2 } => {
                (-s * s / (2.0 * sigma2)).exp() / (2.0 * PI * sigma2)
            }
            OffspringKernel::Matern { radius } => {
                if s <= radius {
                    1.0 / (PI * radius * radius)
                } else {
                    0.0
                }
            }
        }
    }

    /// Ring kernel `g(s | r)`.
    pub fn ring_kernel(&self, s: f64, r: f64) -> Result<f64> {
        check_nonneg("s", s)?;
        check_nonneg("r", r)?;
        Ok(self.ring(s, r))
    }

    pub(crate) fn ring(&self, s: f64, r: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            OffspringKernel::Thomas { sigma2 } => {
                // Rice density, with exp(-(s^2+r^2)/2v) I0(sr/v) rewritten as
                // exp(-(s-r)^2/2v) * i0e(sr/v) so that nothing overflows.
                let d = s - r;
                s / sigma2 * (-d * d / (2.0 * sigma2)).exp() * bessel_i0e(s * r / sigma2)
            }
            OffspringKernel::Matern { radius } => {
                // Angle of the arc of the circle |y| = s that lies inside the
                // displaced disk.
                let arc = if r <= 0.0 {
                    if s <= radius {
                        PI
                    } else {
                        0.0
                    }
                } else {
                    let c = (s * s + r * r - radius * radius) / (2.0 * s * r);
                    c.clamp(-1.0, 1.0).acos()
                };
                2.0 * s * arc / (PI * radius * radius)
            }
        }
    }

    /// Breakpoints for integrating `g(s | a)` over `s`, or equivalently over
    /// the parent distance with `s = a` fixed: the truncated support plus the
    /// Matérn kink. `radius` is the truncation radius for Thomas.
    pub(crate) fn ring_breaks(&self, a: f64, radius: f64) -> Vec<f64> {
        match *self {
            OffspringKernel::Thomas { .. } => vec![(a - radius).max(0.0), a + radius],
            OffspringKernel::Matern { radius: big_r } => {
                if a < big_r {
                    vec![0.0, big_r - a, big_r + a]
                } else {
                    vec![a - big_r, a + big_r]
                }
            }
        }
    }

    /// `Q(b_0(r) - x)`: probability that an offspring of a parent at distance
    /// `x_dist` from the origin falls within distance `r` of the origin.
    pub fn ball_prob(&self, x_dist: f64, r: f64) -> Result<f64> {
        check_nonneg("x_dist", x_dist)?;
        check_nonneg("r", r)?;
        match *self {
            OffspringKernel::Thomas { .. } => {
                let rho = self.quadrature_radius(BALL_POLICY.trunc_factor);
                let mut breaks = self.ring_breaks(x_dist, rho);
                breaks.retain(|&b| b < r);
                if breaks.is_empty() {
                    return Ok(0.0);
                }
                breaks.push(r.min(x_dist + rho));
                let q = try_integrate_pieces(|s| Ok(self.ring(s, x_dist)), &breaks, &BALL_POLICY)?;
                Ok(q.converged_value()?.clamp(0.0, 1.0))
            }
            OffspringKernel::Matern { radius } => Ok(if x_dist >= r + radius {
                0.0
            } else if x_dist + radius <= r {
                1.0
            } else if x_dist + r <= radius {
                (r / radius) * (r / radius)
            } else {
                lens_area(x_dist, r, radius) / (PI * radius * radius)
            }),
        }
    }

    /// One draw from the displacement law.
    pub fn sample_offset<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match *self {
            OffspringKernel::Thomas { sigma2 } => {
                let sd = sigma2.sqrt();
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                Point::new(sd * x, sd * y)
            }
            OffspringKernel::Matern { radius } => {
                let u: f64 = rng.random();
                let a: f64 = rng.random::<f64>() * 2.0 * PI;
                Point::from_polar(radius * u.sqrt(), a)
            }
        }
    }
}

/// Area of the intersection of a disk of radius `r` at the origin with a
/// disk of radius `big_r` whose center is at distance `d`.
fn lens_area(d: f64, r: f64, big_r: f64) -> f64 {
    if d >= r + big_r {
        return 0.0;
    }
    if d <= (big_r - r).abs() {
        let m = r.min(big_r);
        return PI * m * m;
    }
    let a1 = ((d * d + r * r - big_r * big_r) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + big_r * big_r - r * r) / (2.0 * d * big_r)).clamp(-1.0, 1.0).acos();
    let k = (-d + r + big_r) * (d + r - big_r) * (d - r + big_r) * (d + r + big_r);
    r * r * a1 + big_r * big_r * a2 - 0.5 * k.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_semi_infinite};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thomas(s2: f64) -> OffspringKernel {
        OffspringKernel::thomas(s2).unwrap()
    }
    fn matern(r: f64) -> OffspringKernel {
        OffspringKernel::matern(r).unwrap()
    }

    // Definitional angular integral 2s * int_0^pi f(sqrt(s^2+r^2-2sr cos phi)) dphi.
    fn ring_by_angle(k: &OffspringKernel, s: f64, r: f64) -> f64 {
        let p = QuadPolicy::new(1e-13, 1e-300);
        let f = |phi: f64| {
            let d2 = (s * s + r * r - 2.0 * s * r * phi.cos()).max(0.0);
            k.density_unchecked(d2.sqrt())
        };
        2.0 * s * integrate(f, 0.0, PI, &p).unwrap().value
    }

    #[test]
    fn density_values() {
        assert!((thomas(1.0).density(0.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert_eq!(matern(2.0).density(3.0).unwrap(), 0.0);
        assert!(thomas(1.0).density(-1.0).is_err());
    }

    #[test]
    fn density_normalized() {
        let k = thomas(1.0);
        let p = QuadPolicy::new(1e-12, 1e-15);
        let mass = integrate_semi_infinite(|s| 2.0 * PI * s * k.density_unchecked(s), 0.0, 1.0, &p)
            .unwrap()
            .value;
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(OffspringKernel::thomas(0.0).is_err());
        assert!(OffspringKernel::matern(-1.0).is_err());
        assert!(OffspringKernel::thomas(f64::NAN).is_err());
    }

    #[test]
    fn config_shape() {
        let k: OffspringKernel = serde_json::from_str(r#"{"type":"thomas","sigma2":0.25}"#).unwrap();
        assert_eq!(k, OffspringKernel::Thomas { sigma2: 0.25 });
        let m: OffspringKernel = serde_json::from_str(r#"{"type":"matern","radius":2}"#).unwrap();
        assert_eq!(m, OffspringKernel::Matern { radius: 2.0 });
    }

    #[test]
    fn thomas_centered_ball_is_rayleigh_cdf() {
        let v = thomas(1.0).ball_prob(0.0, 1.0).unwrap();
        assert!((v - (1.0 - (-0.5f64).exp())).abs() < 1e-10, "{v}");
    }

    #[test]
    fn thomas_centered_ball_matches_rejection_sampling() {
        // Oracle: 10^6 draws of Q, fraction inside the unit disk.
        let k = thomas(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| k.sample_offset(&mut rng).norm() <= 1.0).count();
        let frac = hits as f64 / n as f64;
        let se = (frac * (1.0 - frac) / n as f64).sqrt();
        let v = k.ball_prob(0.0, 1.0).unwrap();
        assert!((frac - v).abs() < 4.0 * se, "{frac} vs {v}");
        assert!((v - 0.393_469).abs() < 1e-6);
    }

    #[test]
    fn matern_ball_boundary_cases() {
        let k = matern(1.0);
        assert_eq!(k.ball_prob(3.0, 1.0).unwrap(), 0.0);
        assert_eq!(k.ball_prob(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(k.ball_prob(0.5, 2.0).unwrap(), 1.0);
        assert_eq!(k.ball_prob(1.0, 2.0).unwrap(), 1.0);
        // Small centered ball: (r/R)^2.
        assert!((k.ball_prob(0.0, 0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn matern_lens_matches_integrated_ring_kernel() {
        let k = matern(1.0);
        let p = QuadPolicy::new(1e-12, 1e-15);
        for &(x, r) in &[(0.3, 0.5), (1.0, 1.0), (1.5, 0.8), (0.2, 1.1)] {
            let mut br = k.ring_breaks(x, 1.0);
            br.retain(|&b| b < r);
            br.push(r.min(x + 1.0));
            let q = try_integrate_pieces(|s| Ok(k.ring(s, x)), &br, &p).unwrap().value;
            let lens = k.ball_prob(x, r).unwrap();
            assert!((q - lens).abs() < 1e-9, "x={x} r={r}: {q} vs {lens}");
        }
    }

    #[test]
    fn ring_at_zero_offset_is_radial_density() {
        for k in [thomas(0.7), matern(1.3)] {
            for &s in &[0.1, 0.5, 1.0, 1.2, 2.0] {
                let want = 2.0 * PI * s * k.density_unchecked(s);
                let got = k.ring_kernel(s, 0.0).unwrap();
                assert!((got - want).abs() < 1e-14 * want.max(1.0), "{k:?} s={s}");
            }
        }
    }

    #[test]
    fn rice_form_matches_angular_definition() {
        let k = thomas(1.0);
        let want = ring_by_angle(&k, 1.0, 1.0);
        let got = k.ring_kernel(1.0, 1.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-10);
    }

    #[test]
    fn matern_closed_arc_matches_angular_definition() {
        let k = matern(1.0);
        for &(s, r) in &[(0.2, 0.3), (0.5, 1.0), (1.2, 0.9), (0.9, 0.05)] {
            let want = ring_by_angle(&k, s, r);
            let got = k.ring(s, r);
            assert!((got - want).abs() < 1e-8, "s={s} r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn ring_kernel_far_parent_does_not_overflow() {
        let k = thomas(0.01);
        let v = k.ring_kernel(100.0, 100.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn ring_kernel_integrates_to_one() {
        let p = QuadPolicy::new(1e-12, 1e-15);
        for k in [thomas(1.0), thomas(0.25), matern(1.0)] {
            for &r in &[0.0, 0.3, 1.0, 2.5, 7.0] {
                let br = k.ring_breaks(r, k.quadrature_radius(9.0));
                let mass = try_integrate_pieces(|s| Ok(k.ring(s, r)), &br, &p).unwrap().value;
                assert!((mass - 1.0).abs() < 1e-8, "{k:?} r={r}: {mass}");
            }
        }
    }

    #[test]
    fn ball_prob_derivative_is_ring_kernel() {
        let h = 1e-4;
        for k in [thomas(1.0), matern(1.0)] {
            for &(x, r) in &[(0.0, 0.7), (0.8, 0.5), (1.5, 1.2), (2.0, 2.6)] {
                let fd = (k.ball_prob(x, r + h).unwrap() - k.ball_prob(x, r - h).unwrap()) / (2.0 * h);
                let g = k.ring(r, x);
                assert!((fd - g).abs() < 1e-5, "{k:?} x={x} r={r}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn truncation_radius_bounds_tail() {
        let k = thomas(4.0);
        let rho = k.truncation_radius(1e-6);
        // Rayleigh tail exp(-rho^2 / 2 sigma^2).
        assert!(((-rho * rho / 8.0).exp() - 1e-6).abs() < 1e-15);
        assert_eq!(matern(1.5).truncation_radius(1e-6), 1.5);
    }

    #[test]
    fn thomas_offsets_are_centered() {
        let k = thomas(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let p = k.sample_offset(&mut rng);
            sx += p.x;
            sy += p.y;
        }
        let se = (1.0 / n as f64).sqrt();
        assert!((sx / n as f64).abs() < 3.0 * se);
        assert!((sy / n as f64).abs() < 3.0 * se);
    }

    #[test]
    fn thomas_second_moment() {
        let k = thomas(4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let vals: Vec<f64> = (0..n).map(|_| k.sample_offset(&mut rng).norm_sq()).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 8.0).abs() < 3.0 * se, "{mean} (se {se})");
    }

    #[test]
    fn matern_offsets_stay_in_support() {
        let k = matern(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..50_000).all(|_| k.sample_offset(&mut rng).norm() <= 1.0));
    }

    #[test]
    fn shifted_offset_distance_follows_ring_kernel() {
        let n = 100_000;
        let p = QuadPolicy::new(1e-10, 1e-14);
        for (k, r) in [(thomas(1.0), 1.5), (matern(1.0), 0.6)] {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut d: Vec<f64> = (0..n)
                .map(|_| (k.sample_offset(&mut rng) + Point::new(r, 0.0)).norm())
                .collect();
            d.sort_by(f64::total_cmp);
            let mut worst: f64 = 0.0;
            for i in 1..40 {
                let q = d[i * n / 40];
                let mut br = k.ring_breaks(r, k.quadrature_radius(9.0));
                br.retain(|&b| b < q);
                br.push(q);
                let cdf = try_integrate_pieces(|s| Ok(k.ring(s, r)), &br, &p).unwrap().value;
                worst = worst.max((cdf - (i * n / 40) as f64 / n as f64).abs());
            }
            assert!(worst < 0.01, "{k:?}: {worst}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kernel() -> impl Strategy<Value = OffspringKernel> {
            prop_oneof![
                (0.05f64..5.0).prop_map(|s2| OffspringKernel::Thomas { sigma2: s2 }),
                (0.2f64..3.0).prop_map(|r| OffspringKernel::Matern { radius: r }),
            ]
        }

        proptest! {
            #[test]
            fn ball_prob_monotone(k in kernel(), x in 0.0f64..4.0, r in 0.0f64..4.0, dx in 0.0f64..1.0, dr in 0.0f64..1.0) {
                let base = k.ball_prob(x, r).unwrap();
                prop_assert!((0.0..=1.0).contains(&base));
                prop_assert!(k.ball_prob(x, r + dr).unwrap() >= base - 1e-10);
                prop_assert!(k.ball_prob(x + dx, r).unwrap() <= base + 1e-10);
            }
        }
    }
}
