//! Monte Carlo SINR estimators at the typical device.
//!
//! The typical device is the origin of the Palm version. Every device,
//! including the origin, independently transmits with probability `p`; the
//! origin counts as a receiver only when it does not transmit, which enters
//! every estimate as the factor `1 - p`. Fading is unit-mean exponential and
//! path loss `s^-beta`. Interference is summed over transmitters in the disk
//! of radius `window_radius`.

use std::f64::consts::PI;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::Point;
use crate::mc::{run_batched, z_value, EstimateCI, Moments};
use crate::pointproc::{
    draw_mark, for_each_stationary_point, for_each_typical_point, marks_rng, nearest_transmitter,
    sample_palm_ppcp_keyed, sampling_radius, ClusterSpec, PointPattern, SimConfig,
};
use crate::rng::StreamKey;

/// Largest tolerated fraction of replications without any transmitter.
pub const CENSORING_BUDGET: f64 = 1e-3;

/// Medium access and propagation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Transmit probability.
    pub p: f64,
    /// Path-loss exponent.
    pub beta: f64,
    /// Noise power.
    #[serde(default)]
    pub noise: f64,
}

impl NetworkSpec {
    pub fn new(p: f64, beta: f64, noise: f64) -> Result<Self> {
        let s = Self { p, beta, noise };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(domain(format!("transmit probability must be in (0,1), got {}", self.p)));
        }
        if !(self.beta > 2.0 && self.beta.is_finite()) {
            return Err(domain(format!("path-loss exponent must exceed 2, got {}", self.beta)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(domain(format!("noise must be finite and nonnegative, got {}", self.noise)));
        }
        Ok(())
    }

    #[inline]
    pub fn path_loss(&self, s: f64) -> f64 {
        s.powf(-self.beta)
    }
}

pub(crate) fn check_thetas(thetas: &[f64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(domain("threshold grid is empty"));
    }
    match thetas.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        Some(t) => Err(domain(format!("SINR threshold must be positive and finite, got {t}"))),
        None => Ok(()),
    }
}

/// SINR at the origin from transmitter `m` of a marked pattern, all other
/// transmitters except the origin point interfering.
pub fn sinr_at_origin(pat: &PointPattern, net: &NetworkSpec, m: usize) -> Result<f64> {
    net.validate()?;
    let marks = pat.marks.as_ref().ok_or_else(|| domain("pattern has no marks"))?;
    if m >= pat.len() || Some(m) == pat.origin_index || !marks[m].is_transmitter {
        return Err(domain(format!("point {m} is not a transmitter other than the origin")));
    }
    let power = |i: usize| -> Result<f64> {
        let d = pat.points[i].norm();
        if d == 0.0 {
            return Err(domain("transmitter located at the receiver"));
        }
        Ok(marks[i].fading * net.path_loss(d))
    };
    let signal = power(m)?;
    let mut interference = 0.0;
    for (i, mk) in marks.iter().enumerate() {
        if mk.is_transmitter && i != m && Some(i) != pat.origin_index {
            interference += power(i)?;
        }
    }
    Ok(signal / (interference + net.noise))
}

/// Coverage and discovery estimates over a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrGridEstimate {
    pub thetas: Vec<f64>,
    /// `P(origin listens and decodes its nearest transmitter)`.
    pub coverage: Vec<EstimateCI>,
    /// `E[number of transmitters the origin listens to and decodes]`.
    pub discovery: Vec<EstimateCI>,
}

/// Received powers of one replication.
#[derive(Default)]
struct Snapshot {
    powers: Vec<f64>,
    dist2: Vec<f64>,
}

impl Snapshot {
    fn clear(&mut self) {
        self.powers.clear();
        self.dist2.clear();
    }

    /// Adds the per-threshold indicators to the accumulators, or returns
    /// `false` for a replication without transmitters.
    fn score(&self, thetas: &[f64], noise: f64, cov: &mut [Moments], disc: &mut [Moments]) -> bool {
        let Some(nearest) = (0..self.dist2.len()).min_by(|&a, &b| self.dist2[a].total_cmp(&self.dist2[b])) else {
            return false;
        };
        let total: f64 = self.powers.iter().sum();
        let others: f64 = self
            .powers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != nearest)
            .map(|(_, p)| p)
            .sum();
        let s = self.powers[nearest];
        for (k, &theta) in thetas.iter().enumerate() {
            cov[k].push(if s > theta * (others + noise) { 1.0 } else { 0.0 });
            // P > theta (S - P + N) rearranged to avoid the subtraction.
            let bar = theta * (total + noise);
            let n = self.powers.iter().filter(|&&p| (1.0 + theta) * p > bar).count();
            disc[k].push(n as f64);
        }
        true
    }
}

fn finish_grid(
    thetas: &[f64],
    parts: Vec<(Vec<Moments>, Vec<Moments>, u64)>,
    scale: f64,
    cfg: &SimConfig,
) -> Result<SinrGridEstimate> {
    let nt = thetas.len();
    let mut cov = vec![Moments::default(); nt];
    let mut disc = vec![Moments::default(); nt];
    let mut censored = 0;
    for (c, d, n) in &parts {
        for k in 0..nt {
            cov[k].merge(&c[k]);
            disc[k].merge(&d[k]);
        }
        censored += n;
    }
    if censored as f64 > CENSORING_BUDGET * cfg.replications as f64 {
        return Err(Error::CensoringExceeded {
            censored,
            total: cfg.replications,
            budget: CENSORING_BUDGET,
        });
    }
    let z = z_value(cfg.confidence_level)?;
    Ok(SinrGridEstimate {
        thetas: thetas.to_vec(),
        coverage: cov
            .iter()
            .map(|m| EstimateCI::from_moments(m, scale, censored, cfg.seed, z))
            .collect(),
        discovery: disc
            .iter()
            .map(|m| EstimateCI::from_moments(m, scale, censored, cfg.seed, z))
            .collect(),
    })
}

/// Coverage and discovery at every threshold, on common samples.
///
/// Replication `i` depends only on `(cfg.seed, i)`, and the pattern inside a
/// window is unchanged when the window grows, so runs differing only in
/// `window_radius` are coupled.
pub fn estimate_sinr_grid(
    spec: &ClusterSpec,
    net: &NetworkSpec,
    thetas: &[f64],
    cfg: &SimConfig,
) -> Result<SinrGridEstimate> {
    estimate_sinr_grid_scaled(spec, net, thetas, cfg, 1.0)
}

/// `estimate_sinr_grid` with every fading mark multiplied by `fading_scale`.
pub(crate) fn estimate_sinr_grid_scaled(
    spec: &ClusterSpec,
    net: &NetworkSpec,
    thetas: &[f64],
    cfg: &SimConfig,
    fading_scale: f64,
) -> Result<SinrGridEstimate> {
    spec.validate()?;
    net.validate()?;
    cfg.validate()?;
    check_thetas(thetas)?;
    let nt = thetas.len();
    let r2 = cfg.window_radius * cfg.window_radius;
    let outer = sampling_radius(spec, cfg.window_radius, cfg.tail_eps);
    let parts = run_batched(cfg.replications, cfg.execution, |range| {
        let mut cov = vec![Moments::default(); nt];
        let mut disc = vec![Moments::default(); nt];
        let mut censored = 0u64;
        let mut snap = Snapshot::default();
        for rep in range {
            let key = StreamKey::for_replication(cfg.seed, rep);
            let mut marks = marks_rng(&key);
            snap.clear();
            let mut origin = true;
            let mut push = |x: Point, _id: u64| {
                // Every raw point consumes its mark draws, inside the window
                // or not, so that marks stay aligned when the window grows.
                let (tx, fade) = draw_mark(net.p, &mut marks);
                if std::mem::take(&mut origin) {
                    return;
                }
                let d2 = x.norm_sq();
                if tx && d2 <= r2 && d2 > 0.0 {
                    snap.dist2.push(d2);
                    snap.powers.push(fading_scale * fade * d2.powf(-0.5 * net.beta));
                }
            };
            for_each_typical_point(spec, &key, &mut push);
            for_each_stationary_point(spec, outer, &key, &mut push);
            if !snap.score(thetas, net.noise, &mut cov, &mut disc) {
                censored += 1;
            }
        }
        (cov, disc, censored)
    });
    finish_grid(thetas, parts, 1.0 - net.p, cfg)
}

/// Monte Carlo coverage probability at one threshold.
pub fn estimate_coverage(spec: &ClusterSpec, net: &NetworkSpec, theta: f64, cfg: &SimConfig) -> Result<EstimateCI> {
    Ok(estimate_sinr_grid(spec, net, &[theta], cfg)?.coverage[0])
}

/// Monte Carlo mean number of discovered transmitters at one threshold.
pub fn estimate_discovery(spec: &ClusterSpec, net: &NetworkSpec, theta: f64, cfg: &SimConfig) -> Result<EstimateCI> {
    Ok(estimate_sinr_grid(spec, net, &[theta], cfg)?.discovery[0])
}

/// Same estimators for a homogeneous Poisson network of device intensity
/// `lambda`: transmitters form a Poisson process of intensity `p lambda`.
pub fn estimate_ppp_sinr_grid(lambda: f64, net: &NetworkSpec, thetas: &[f64], cfg: &SimConfig) -> Result<SinrGridEstimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(domain(format!("intensity must be positive, got {lambda}")));
    }
    net.validate()?;
    cfg.validate()?;
    check_thetas(thetas)?;
    let nt = thetas.len();
    let rings = cfg.window_radius.ceil() as u64;
    let r2 = cfg.window_radius * cfg.window_radius;
    let parts = run_batched(cfg.replications, cfg.execution, |range| {
        let mut cov = vec![Moments::default(); nt];
        let mut disc = vec![Moments::default(); nt];
        let mut censored = 0u64;
        let mut snap = Snapshot::default();
        for rep in range {
            let key = StreamKey::for_replication(cfg.seed, rep);
            snap.clear();
            for k in 0..rings {
                let mut rng = key.stream(2 + k);
                let (r0, r1) = (k as f64, k as f64 + 1.0);
                let mean = net.p * lambda * PI * (r1 * r1 - r0 * r0);
                let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64;
                for _ in 0..n {
                    let u: f64 = rand::Rng::random(&mut rng);
                    let d2 = r0 * r0 + u * (r1 * r1 - r0 * r0);
                    let fade = -(1.0 - rand::Rng::random::<f64>(&mut rng)).ln();
                    if d2 <= r2 && d2 > 0.0 {
                        snap.dist2.push(d2);
                        snap.powers.push(fade * d2.powf(-0.5 * net.beta));
                    }
                }
            }
            if !snap.score(thetas, net.noise, &mut cov, &mut disc) {
                censored += 1;
            }
        }
        (cov, disc, censored)
    });
    finish_grid(thetas, parts, 1.0 - net.p, cfg)
}

/// Monte Carlo estimate of `P^0(nearest neighbor distance > r)` on a grid of
/// radii, all no larger than the window radius.
pub fn estimate_nnd(spec: &ClusterSpec, r_grid: &[f64], cfg: &SimConfig) -> Result<Vec<EstimateCI>> {
    spec.validate()?;
    cfg.validate()?;
    if let Some(r) = r_grid.iter().find(|r| !(**r >= 0.0 && **r <= cfg.window_radius)) {
        return Err(domain(format!(
            "radius {r} must lie in [0, window_radius = {}]",
            cfg.window_radius
        )));
    }
    let nr = r_grid.len();
    let parts = run_batched(cfg.replications, cfg.execution, |range| {
        let mut acc = vec![Moments::default(); nr];
        for rep in range {
            let key = StreamKey::for_replication(cfg.seed, rep);
            let pat = sample_palm_ppcp_keyed(spec, cfg.window_radius, cfg.tail_eps, &key);
            let d2 = pat.points[1..].iter().map(|p| p.norm_sq()).fold(f64::INFINITY, f64::min);
            for (m, &r) in acc.iter_mut().zip(r_grid) {
                m.push(if d2 > r * r { 1.0 } else { 0.0 });
            }
        }
        acc
    });
    let mut acc = vec![Moments::default(); nr];
    for part in &parts {
        for (a, b) in acc.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    let z = z_value(cfg.confidence_level)?;
    Ok(acc.iter().map(|m| EstimateCI::from_moments(m, 1.0, 0, cfg.seed, z)).collect())
}

/// SINR of the nearest transmitter in an already marked Palm pattern.
pub fn nearest_sinr(pat: &PointPattern, net: &NetworkSpec) -> Result<Option<f64>> {
    match nearest_transmitter(pat) {
        Some((m, _)) => sinr_at_origin(pat, net, m).map(Some),
        None => Ok(None),
    }
}
