//! Palm characteristics of the stationary cluster process.
//!
//! Closed forms reduced to one-dimensional radial quadrature: the intensity
//! measure of the reduced Palm version on centered balls, the offspring,
//! stationary and Palm generating functionals for radial test functions, and
//! the nearest-neighbor distance distribution. `verify_exchange` checks the
//! exchange identity between the two Palm distributions by simulation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Result};
use crate::geometry::Point;
use crate::mc::{run_batched, z_value, EstimateCI, Moments};
use crate::pointproc::{
    sample_palm_ppcp_keyed, sample_parent_palm_ppcp_keyed, ClusterSpec, SimConfig, TYPICAL_CLUSTER,
};
use crate::quadrature::{try_integrate_pieces, QuadPolicy};
use crate::rng::StreamKey;

/// Policy for the Palm evaluators; inner integrals run 100x tighter.
pub const PALM_POLICY: QuadPolicy = QuadPolicy {
    rel_tol: 1e-9,
    abs_tol: 1e-13,
    trunc_factor: 8.0,
    max_depth: 40,
};

/// A radial test function `h: [0, inf) -> [0, 1]` with `h = 1` beyond its
/// support radius.
#[derive(Clone)]
pub struct RadialTestFunction {
    h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: f64,
    breaks: Vec<f64>,
}

impl fmt::Debug for RadialTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialTestFunction")
            .field("support", &self.support)
            .field("breaks", &self.breaks)
            .finish_non_exhaustive()
    }
}

impl RadialTestFunction {
    /// `h` is only consulted on `[0, support]`; values are clamped to [0,1].
    pub fn new<F>(support: f64, h: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(support >= 0.0 && support.is_finite()) {
            return Err(domain("test-function support must be finite and nonnegative"));
        }
        Ok(Self {
            h: Arc::new(h),
            support,
            breaks: Vec::new(),
        })
    }

    /// Declares discontinuities or kinks of `h`, used as quadrature breakpoints.
    pub fn with_breaks(mut self, breaks: &[f64]) -> Self {
        self.breaks = breaks.iter().copied().filter(|b| *b > 0.0 && *b < self.support).collect();
        self
    }

    pub fn one() -> Self {
        Self::new(0.0, |_| 1.0).expect("valid")
    }

    /// `1 - 1{s <= r}`: the void indicator of the centered ball of radius `r`.
    pub fn ball_void(r: f64) -> Result<Self> {
        Self::new(r, |_| 0.0)
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s > self.support {
            1.0
        } else {
            (self.h)(s).clamp(0.0, 1.0)
        }
    }
}

fn sorted_breaks(lo: f64, hi: f64, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = extra.into_iter().filter(|b| *b > lo && *b < hi).collect();
    v.push(lo);
    v.push(hi);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("radius must be finite and nonnegative, got {r}")))
    }
}

/// `E^0[Psi^!(b_0(r))]` for the reduced Palm version.
pub fn palm_intensity_ball(spec: &ClusterSpec, r: f64) -> Result<f64> {
    spec.validate()?;
    check_radius(r)?;
    Ok(spec.lambda_total() * PI * r * r + same_cluster_intensity(spec, r, &PALM_POLICY)?)
}

/// Second term of the Palm intensity: `mu * int Q(b_0(r) - y) Q(dy)`, the
/// expected number of other points of the origin's own cluster within `r`.
pub fn same_cluster_intensity(spec: &ClusterSpec, r: f64, policy: &QuadPolicy) -> Result<f64> {
    check_radius(r)?;
    let k = &spec.kernel;
    let rho = k.quadrature_radius(policy.trunc_factor);
    let big_r = k.scale();
    let breaks = match k {
        crate::offspring::OffspringKernel::Matern { .. } => {
            sorted_breaks(0.0, rho, [(r - big_r).abs(), r + big_r])
        }
        _ => sorted_breaks(0.0, rho, []),
    };
    let q = try_integrate_pieces(
        |u| Ok(k.ball_prob(u, r)? * k.density_unchecked(u) * u),
        &breaks,
        policy,
    )?;
    Ok(spec.mu * 2.0 * PI * q.converged_value()?)
}

/// `int [1 - h(s)] g(s | u) ds`: mean fraction of an offspring cluster with
/// parent at distance `u` that the test function discounts.
fn discounted_mass(spec: &ClusterSpec, h: &RadialTestFunction, u: f64, policy: &QuadPolicy) -> Result<f64> {
    let k = &spec.kernel;
    let rho = k.quadrature_radius(policy.trunc_factor);
    let ring = k.ring_breaks(u, rho);
    let lo = ring[0];
    let hi = ring[ring.len() - 1].min(h.support());
    if hi <= lo {
        return Ok(0.0);
    }
    let breaks = sorted_breaks(lo, hi, ring.iter().copied().chain(h.breaks.iter().copied()));
    let q = try_integrate_pieces(|s| Ok((1.0 - h.eval(s)) * k.ring(s, u)), &breaks, policy)?;
    Ok(q.converged_value()?.clamp(0.0, 1.0))
}

fn offspring_pgfl_radial(spec: &ClusterSpec, h: &RadialTestFunction, u: f64, policy: &QuadPolicy) -> Result<f64> {
    Ok((-spec.mu * discounted_mass(spec, h, u, policy)?).exp())
}

/// `h~(x)`: generating functional of one offspring cluster whose parent is at `x`.
pub fn offspring_pgfl(spec: &ClusterSpec, h: &RadialTestFunction, x: Point) -> Result<f64> {
    spec.validate()?;
    offspring_pgfl_radial(spec, h, x.norm(), &PALM_POLICY.scaled(1e-2))
}

/// Parent distances at which `u -> h~(u)` may have kinks.
fn parent_breaks(spec: &ClusterSpec, h: &RadialTestFunction) -> Vec<f64> {
    match spec.kernel {
        crate::offspring::OffspringKernel::Matern { radius } => h
            .breaks
            .iter()
            .chain(std::iter::once(&h.support))
            .flat_map(|&b| [(b - radius).abs(), b + radius])
            .chain(std::iter::once(radius))
            .collect(),
        _ => Vec::new(),
    }
}

fn stationary_pgfl_with(spec: &ClusterSpec, h: &RadialTestFunction, policy: &QuadPolicy) -> Result<f64> {
    let inner = policy.scaled(1e-2);
    let reach = h.support() + spec.kernel.quadrature_radius(policy.trunc_factor);
    if h.support() == 0.0 {
        return Ok(1.0);
    }
    let breaks = sorted_breaks(0.0, reach, parent_breaks(spec, h));
    let q = try_integrate_pieces(
        |u| {
            let m = discounted_mass(spec, h, u, &inner)?;
            Ok(-(-spec.mu * m).exp_m1() * u)
        },
        &breaks,
        policy,
    )?;
    Ok((-spec.lambda_parent * 2.0 * PI * q.converged_value()?).exp())
}

/// Generating functional `E[prod h(|Y_m|)]` of the stationary process.
pub fn stationary_pgfl(spec: &ClusterSpec, h: &RadialTestFunction) -> Result<f64> {
    spec.validate()?;
    stationary_pgfl_with(spec, h, &PALM_POLICY)
}

/// `int h~(z) Q(dz)`: generating functional of the cluster holding the origin.
fn typical_cluster_pgfl(spec: &ClusterSpec, h: &RadialTestFunction, policy: &QuadPolicy) -> Result<f64> {
    if h.support() == 0.0 {
        return Ok(1.0);
    }
    let inner = policy.scaled(1e-2);
    let k = &spec.kernel;
    let rho = k.quadrature_radius(policy.trunc_factor);
    let breaks = sorted_breaks(0.0, rho, parent_breaks(spec, h));
    // Integrating 1 - h~ keeps the result exact for h = 1 and accurate
    // near it.
    let q = try_integrate_pieces(
        |u| {
            let m = discounted_mass(spec, h, u, &inner)?;
            Ok(-(-spec.mu * m).exp_m1() * k.density_unchecked(u) * u)
        },
        &breaks,
        policy,
    )?;
    Ok((1.0 - 2.0 * PI * q.converged_value()?).clamp(0.0, 1.0))
}

/// Generating functional `E^0[prod h(|Y_m|)]` of the reduced Palm version.
pub fn palm_pgfl(spec: &ClusterSpec, h: &RadialTestFunction) -> Result<f64> {
    spec.validate()?;
    Ok(stationary_pgfl_with(spec, h, &PALM_POLICY)? * typical_cluster_pgfl(spec, h, &PALM_POLICY)?)
}

/// `P^0(nearest neighbor distance > r)`.
pub fn nnd_ccdf(spec: &ClusterSpec, r: f64) -> Result<f64> {
    check_radius(r)?;
    palm_pgfl(spec, &RadialTestFunction::ball_void(r)?)
}

/// A nonnegative functional of a pattern seen from one of its points.
pub trait PalmFunctional: Sync {
    fn name(&self) -> String;

    /// Value on `points` shifted so that `points[origin]` sits at the origin.
    fn eval(&self, points: &[Point], origin: usize) -> f64;

    /// Distance from the distinguished point beyond which `eval` ignores the
    /// pattern.
    fn reach(&self) -> f64;
}

/// `W = 1`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOne;

impl PalmFunctional for ConstantOne {
    fn name(&self) -> String {
        "one".into()
    }
    fn eval(&self, _: &[Point], _: usize) -> f64 {
        1.0
    }
    fn reach(&self) -> f64 {
        0.0
    }
}

/// Number of other points within `radius` of the distinguished point.
#[derive(Debug, Clone, Copy)]
pub struct BallCount {
    pub radius: f64,
}

impl PalmFunctional for BallCount {
    fn name(&self) -> String {
        format!("ball_count(r={})", self.radius)
    }
    fn eval(&self, points: &[Point], origin: usize) -> f64 {
        let c = points[origin];
        let r2 = self.radius * self.radius;
        points
            .iter()
            .enumerate()
            .filter(|&(i, p)| i != origin && (*p - c).norm_sq() <= r2)
            .count() as f64
    }
    fn reach(&self) -> f64 {
        self.radius
    }
}

/// `prod h(|Y - Y_origin|)` over the other points.
#[derive(Debug, Clone)]
pub struct PgflProduct {
    pub h: RadialTestFunction,
}

impl PalmFunctional for PgflProduct {
    fn name(&self) -> String {
        format!("pgfl_product(support={})", self.h.support())
    }
    fn eval(&self, points: &[Point], origin: usize) -> f64 {
        let c = points[origin];
        let s2 = self.h.support() * self.h.support();
        points
            .iter()
            .enumerate()
            .filter(|&(i, p)| i != origin && (*p - c).norm_sq() <= s2)
            .map(|(_, p)| self.h.eval(p.dist(c)))
            .product()
    }
    fn reach(&self) -> f64 {
        self.h.support()
    }
}

/// Both sides of the exchange identity for one functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExchangeEstimate {
    /// `lambda_total * E^0_Psi[W]`.
    pub lhs: EstimateCI,
    /// `lambda_parent * E^0_Phi[sum_k W o theta_{Y_{0,k}}]`.
    pub rhs: EstimateCI,
    /// Set when either sample looks heavy-tailed; no assertion should be made.
    pub flagged: bool,
}

impl ExchangeEstimate {
    pub fn overlaps(&self) -> bool {
        self.lhs.overlaps(&self.rhs)
    }
}

/// Offset separating the parent-Palm replication keys from the point-Palm ones.
const PARENT_SIDE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Estimates both sides of the exchange identity
/// `lambda_Psi E^0_Psi[W] = lambda_Phi E^0_Phi[sum_k W o theta_{Y_{0,k}}]`.
pub fn verify_exchange(spec: &ClusterSpec, w: &dyn PalmFunctional, cfg: &SimConfig) -> Result<ExchangeEstimate> {
    Ok(verify_exchange_many(spec, &[w], cfg)?.remove(0))
}

/// `verify_exchange` for several functionals on common samples.
pub fn verify_exchange_many(
    spec: &ClusterSpec,
    ws: &[&dyn PalmFunctional],
    cfg: &SimConfig,
) -> Result<Vec<ExchangeEstimate>> {
    spec.validate()?;
    cfg.validate()?;
    let rho = spec.kernel.truncation_radius(cfg.tail_eps);
    for w in ws {
        if w.reach() + rho > cfg.window_radius {
            return Err(domain(format!(
                "window radius {} is too small for {} (needs {})",
                cfg.window_radius,
                w.name(),
                w.reach() + rho
            )));
        }
    }
    let nw = ws.len();
    let parts = run_batched(cfg.replications, cfg.execution, |range| {
        let mut lhs = vec![Moments::default(); nw];
        let mut rhs = vec![Moments::default(); nw];
        for rep in range {
            let key = StreamKey::for_replication(cfg.seed, rep);
            let pat = sample_palm_ppcp_keyed(spec, cfg.window_radius, cfg.tail_eps, &key);
            let o = pat.origin_index.expect("palm sample has an origin");
            for (m, w) in lhs.iter_mut().zip(ws) {
                m.push(w.eval(&pat.points, o));
            }

            let key = StreamKey::for_replication(cfg.seed.wrapping_add(PARENT_SIDE_SEED), rep);
            let pat = sample_parent_palm_ppcp_keyed(spec, cfg.window_radius, cfg.tail_eps, &key);
            let marks = pat.marks.as_ref().expect("cluster marks");
            let own: Vec<usize> = (0..pat.len()).filter(|&i| marks[i].cluster_id == TYPICAL_CLUSTER).collect();
            for (m, w) in rhs.iter_mut().zip(ws) {
                m.push(own.iter().map(|&k| w.eval(&pat.points, k)).sum());
            }
        }
        (lhs, rhs)
    });
    let mut lhs = vec![Moments::default(); nw];
    let mut rhs = vec![Moments::default(); nw];
    for (l, r) in &parts {
        for i in 0..nw {
            lhs[i].merge(&l[i]);
            rhs[i].merge(&r[i]);
        }
    }
    let z = z_value(cfg.confidence_level)?;
    Ok((0..nw)
        .map(|i| ExchangeEstimate {
            lhs: EstimateCI::from_moments(&lhs[i], spec.lambda_total(), 0, cfg.seed, z),
            rhs: EstimateCI::from_moments(&rhs[i], spec.lambda_parent, 0, cfg.seed, z),
            flagged: lhs[i].looks_divergent() || rhs[i].looks_divergent(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::OffspringKernel;
    use crate::pointproc::{sample_palm_ppcp, sample_ppcp};
    use crate::quadrature::integrate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thomas_spec(sigma2: f64) -> ClusterSpec {
        ClusterSpec::new(1.0 / PI, 10.0, OffspringKernel::thomas(sigma2).unwrap()).unwrap()
    }

    fn matern_spec(r: f64) -> ClusterSpec {
        ClusterSpec::new(1.0 / PI, 10.0, OffspringKernel::matern(r).unwrap()).unwrap()
    }

    fn smooth_h() -> RadialTestFunction {
        RadialTestFunction::new(1.5, |s| 0.3 + 0.7 * (s / 1.5).powi(2)).unwrap()
    }

    #[test]
    fn intensity_at_zero_radius() {
        assert_eq!(palm_intensity_ball(&thomas_spec(1.0), 0.0).unwrap(), 0.0);
        assert!(palm_intensity_ball(&thomas_spec(1.0), -1.0).is_err());
    }

    #[test]
    fn thomas_same_cluster_term_closed_form() {
        // Difference of two independent N(0, s2 I) offsets is N(0, 2 s2 I).
        let v = same_cluster_intensity(&thomas_spec(1.0), 2.0, &PALM_POLICY).unwrap();
        let want = 10.0 * (1.0 - (-1.0f64).exp());
        assert!((v - want).abs() < 1e-8, "{v} vs {want}");
    }

    #[test]
    fn same_cluster_term_saturates_at_mu() {
        for spec in [thomas_spec(1.0), matern_spec(1.0)] {
            let v = same_cluster_intensity(&spec, 40.0, &PALM_POLICY).unwrap();
            assert!((v - 10.0).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn matern_same_cluster_term_matches_monte_carlo() {
        let spec = matern_spec(1.0);
        let v = same_cluster_intensity(&spec, 0.8, &PALM_POLICY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| (spec.kernel.sample_offset(&mut rng) - spec.kernel.sample_offset(&mut rng)).norm() <= 0.8)
            .count();
        let f = hits as f64 / n as f64;
        let se = (f * (1.0 - f) / n as f64).sqrt();
        assert!((v / 10.0 - f).abs() < 4.0 * se);
    }

    #[test]
    fn offspring_pgfl_of_one_is_one() {
        let spec = thomas_spec(1.0);
        let v = offspring_pgfl(&spec, &RadialTestFunction::one(), Point::new(0.7, 0.2)).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn offspring_pgfl_void_limit() {
        let spec = thomas_spec(1.0);
        let h = RadialTestFunction::ball_void(60.0).unwrap();
        let v = offspring_pgfl(&spec, &h, Point::new(1.0, 0.0)).unwrap();
        assert!((v - (-10.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn offspring_pgfl_of_ball_void_is_h_star() {
        for spec in [thomas_spec(1.0), matern_spec(1.0)] {
            for &(u, r) in &[(0.0, 0.5), (0.8, 1.0), (2.0, 1.5)] {
                let h = RadialTestFunction::ball_void(r).unwrap();
                let got = offspring_pgfl(&spec, &h, Point::new(0.0, u)).unwrap();
                let want = (-spec.mu * spec.kernel.ball_prob(u, r).unwrap()).exp();
                assert!((got - want).abs() < 1e-9, "{spec:?} u={u} r={r}");
            }
        }
    }

    #[test]
    fn pgfls_of_one() {
        let spec = thomas_spec(1.0);
        assert_eq!(stationary_pgfl(&spec, &RadialTestFunction::one()).unwrap(), 1.0);
        assert_eq!(palm_pgfl(&spec, &RadialTestFunction::one()).unwrap(), 1.0);
    }

    #[test]
    fn stationary_pgfl_of_ball_void_is_contact_distribution() {
        // Contact distribution of the cluster process computed independently:
        // exp(-lambda_parent * int over parents of (1 - exp(-mu Q(b - x))) dx).
        let spec = thomas_spec(1.0);
        let r = 0.8;
        let p = QuadPolicy::new(1e-11, 1e-14);
        let f = |u: f64| 2.0 * PI * u * -(-spec.mu * spec.kernel.ball_prob(u, r).unwrap()).exp_m1();
        let want = (-spec.lambda_parent * integrate(f, 0.0, r + 9.0, &p).unwrap().value).exp();
        let got = stationary_pgfl(&spec, &RadialTestFunction::ball_void(r).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn nnd_ccdf_basics() {
        let spec = thomas_spec(1.0);
        assert_eq!(nnd_ccdf(&spec, 0.0).unwrap(), 1.0);
        let mut prev = 1.0;
        for i in 1..=30 {
            let v = nnd_ccdf(&spec, i as f64 * 0.1).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        assert!(nnd_ccdf(&spec, 4.0).unwrap() < 1e-6);
        assert!(nnd_ccdf(&spec, -0.1).is_err());
    }

    #[test]
    fn nnd_ccdf_is_palm_pgfl_of_ball_void() {
        for spec in [thomas_spec(0.25), matern_spec(1.0)] {
            for i in 1..=30 {
                let r = i as f64 * 0.1;
                let a = nnd_ccdf(&spec, r).unwrap();
                let b = palm_pgfl(&spec, &RadialTestFunction::ball_void(r).unwrap()).unwrap();
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pgfl_ordering() {
        for spec in [thomas_spec(1.0), matern_spec(0.7)] {
            for h in [smooth_h(), RadialTestFunction::ball_void(0.6).unwrap()] {
                let st = stationary_pgfl(&spec, &h).unwrap();
                let pa = palm_pgfl(&spec, &h).unwrap();
                assert!(0.0 <= pa && pa <= st && st <= 1.0, "{pa} {st}");
            }
        }
    }

    #[test]
    fn palm_intensity_dominates_stationary() {
        let spec = matern_spec(1.0);
        for &r in &[0.1, 0.5, 1.0, 2.0, 3.0] {
            let v = palm_intensity_ball(&spec, r).unwrap();
            assert!(v >= spec.lambda_total() * PI * r * r);
        }
    }

    #[test]
    fn stationary_pgfl_matches_simulation() {
        let spec = thomas_spec(1.0);
        let h = smooth_h();
        let want = stationary_pgfl(&spec, &h).unwrap();
        let cfg = SimConfig::new(1.5, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut m = Moments::default();
        for _ in 0..10_000 {
            let pat = sample_ppcp(&spec, &cfg, &mut rng).unwrap();
            m.push(pat.points.iter().map(|p| h.eval(p.norm())).product());
        }
        let se = (m.variance() / m.n as f64).sqrt();
        assert!((m.mean() - want).abs() < 3.0 * se, "{} vs {want} (se {se})", m.mean());
    }

    #[test]
    fn palm_pgfl_matches_simulation() {
        let spec = thomas_spec(1.0);
        let h = smooth_h();
        let want = palm_pgfl(&spec, &h).unwrap();
        let cfg = SimConfig::new(1.5, 1, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut m = Moments::default();
        for _ in 0..10_000 {
            let pat = sample_palm_ppcp(&spec, &cfg, &mut rng).unwrap().reduced();
            m.push(pat.points.iter().map(|p| h.eval(p.norm())).product());
        }
        let se = (m.variance() / m.n as f64).sqrt();
        assert!((m.mean() - want).abs() < 3.0 * se, "{} vs {want} (se {se})", m.mean());
    }

    #[test]
    fn exchange_rejects_small_window() {
        let spec = thomas_spec(1.0);
        let cfg = SimConfig::new(2.0, 10, 1);
        assert!(verify_exchange(&spec, &BallCount { radius: 1.0 }, &cfg).is_err());
    }

    #[test]
    fn exchange_small_run() {
        let spec = thomas_spec(1.0);
        let cfg = SimConfig::new(7.5, 4000, 5);
        let w = BallCount { radius: 1.0 };
        let est = verify_exchange(&spec, &w, &cfg).unwrap();
        assert!(!est.flagged);
        assert!(est.overlaps(), "{est:?}");
        let want = palm_intensity_ball(&spec, 1.0).unwrap();
        assert!(est.lhs.z_score(spec.lambda_total() * want) < 3.0);
    }
}
