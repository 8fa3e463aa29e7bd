//! Coverage probability and expected discovery count by nested quadrature.
//!
//! For path loss `s^-beta` and Rayleigh fading,
//!
//! ```text
//! CP(theta) = 2 pi (1-p) p mu  int_0^inf ds  exp(-theta N s^beta) E(s)
//!             int_0^inf C(s,u) [g(s|u) + J(s)] f(u) u du
//! ```
//!
//! with `C(s,r) = exp(-p mu B(s,r))`, `E(s) = exp(-2 pi lambda int [1 - C(s,v)] v dv)`
//! and `J(s) = 2 pi lambda int C(s,r) g(s|r) r dr`. `B(s,r)` is the mean
//! fraction of a cluster with parent at distance `r` that blocks a link of
//! length `s`: offspring closer than `s` always block (nearest-transmitter
//! mode), offspring at `q` otherwise block with probability
//! `theta s^beta / (q^beta + theta s^beta)`. In discovery mode no offspring
//! blocks unconditionally, and the same pipeline yields the expected number
//! of decodable transmitters.
//!
//! The outer integral runs over the link length `s`, so `E(s)` and `J(s)`,
//! which do not depend on `u`, are evaluated once per outer node. Tolerances
//! tighten tenfold per nesting level.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{map_items, Execution};
use crate::offspring::OffspringKernel;
use crate::pointproc::ClusterSpec;
use crate::quadrature::{integrate, try_integrate_pieces, try_integrate_semi_infinite, QuadPolicy};
use crate::sinr::NetworkSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Success towards the nearest transmitter.
    #[default]
    Nearest,
    /// Success towards any transmitter.
    Discovery,
}

/// One evaluated point of a coverage or discovery curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticValue {
    pub theta: f64,
    pub value: f64,
    /// Error estimate of the outermost integral, scaled like `value`.
    pub achieved_tol: f64,
}

/// The integrands of the coverage formula at a fixed threshold.
#[derive(Debug, Clone)]
pub struct CoverageIntegrand {
    spec: ClusterSpec,
    net: NetworkSpec,
    theta: f64,
    mode: Mode,
    outer: QuadPolicy,
    middle: QuadPolicy,
    inner: QuadPolicy,
    rho: f64,
}

fn sorted_breaks(lo: f64, hi: f64, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = extra.into_iter().filter(|b| *b > lo && *b < hi).collect();
    v.push(lo);
    v.push(hi);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("SINR threshold must be positive and finite, got {theta}")))
    }
}

fn check_link(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("link length must be positive and finite, got {s}")))
    }
}

fn check_dist(name: &str, r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and nonnegative, got {r}")))
    }
}

impl CoverageIntegrand {
    pub fn new(
        spec: &ClusterSpec,
        net: &NetworkSpec,
        theta: f64,
        mode: Mode,
        policy: &QuadPolicy,
    ) -> Result<Self> {
        spec.validate()?;
        net.validate()?;
        policy.validate()?;
        check_theta(theta)?;
        Ok(Self {
            spec: *spec,
            net: *net,
            theta,
            mode,
            outer: *policy,
            middle: policy.scaled(0.1),
            inner: policy.scaled(0.01),
            rho: spec.kernel.quadrature_radius(policy.trunc_factor),
        })
    }

    /// Probability that an interferer at distance `q` breaks a link of
    /// length `s`, averaged over its fading.
    #[inline]
    fn blocking(&self, q: f64, s: f64) -> f64 {
        let t = (q / s).powf(self.net.beta);
        self.theta / (t + self.theta)
    }

    /// `B(s, r)` in `[0, 1]`.
    fn bracket(&self, s: f64, r: f64) -> Result<f64> {
        let k = &self.spec.kernel;
        let ring = k.ring_breaks(r, self.rho);
        let (lo, hi) = (ring[0], ring[ring.len() - 1]);
        let knee = s * self.theta.powf(1.0 / self.net.beta);
        let breaks = sorted_breaks(lo, hi, ring.iter().copied().chain([s, knee]));
        let q = match self.mode {
            Mode::Nearest => try_integrate_pieces(
                |q| {
                    let g = k.ring(q, r);
                    Ok(if q < s { g } else { self.blocking(q, s) * g })
                },
                &breaks,
                &self.inner,
            )?,
            Mode::Discovery => {
                try_integrate_pieces(|q| Ok(self.blocking(q, s) * k.ring(q, r)), &breaks, &self.inner)?
            }
        };
        Ok(q.converged_value()?.clamp(0.0, 1.0))
    }

    fn c(&self, s: f64, r: f64) -> Result<f64> {
        Ok((-self.net.p * self.spec.mu * self.bracket(s, r)?).exp())
    }

    fn one_minus_c(&self, s: f64, r: f64) -> Result<f64> {
        Ok(-(-self.net.p * self.spec.mu * self.bracket(s, r)?).exp_m1())
    }

    /// Probability that a cluster with parent at distance `r` leaves a link
    /// of length `s` unblocked.
    pub fn c_hat(&self, s: f64, r: f64) -> Result<f64> {
        check_link(s)?;
        check_dist("parent distance", r)?;
        self.c(s, r)
    }

    /// Parent distances where `v -> C(s, v)` may have kinks.
    fn parent_breaks(&self, s: f64) -> Vec<f64> {
        match self.spec.kernel {
            OffspringKernel::Matern { radius } => vec![s, (s - radius).abs(), s + radius, radius],
            OffspringKernel::Thomas { .. } => vec![s],
        }
    }

    /// `-ln E(s)` is at least this large, from parents whose whole cluster
    /// lies inside the disk of radius `s`.
    fn e_log_lower_bound(&self, s: f64) -> f64 {
        let inner = s - self.rho;
        if inner <= 0.0 {
            return 0.0;
        }
        let b = match self.mode {
            Mode::Nearest => 0.99,
            Mode::Discovery => 0.99 * self.theta / (1.0 + self.theta),
        };
        PI * self.spec.lambda_parent * inner * inner * -(-self.net.p * self.spec.mu * b).exp_m1()
    }

    fn e(&self, s: f64) -> Result<f64> {
        if self.e_log_lower_bound(s) > 750.0 {
            return Ok(0.0);
        }
        let split = s + 2.0 * self.rho;
        let breaks = sorted_breaks(0.0, split, self.parent_breaks(s));
        let near = try_integrate_pieces(|v| Ok(self.one_minus_c(s, v)? * v), &breaks, &self.middle)?;
        let far = try_integrate_semi_infinite(|v| Ok(self.one_minus_c(s, v)? * v), split, split, &self.middle)?;
        let total = near.converged_value()? + far.converged_value()?;
        Ok((-2.0 * PI * self.spec.lambda_parent * total.max(0.0)).exp())
    }

    /// Probability that no other cluster blocks a link of length `s`.
    pub fn e_hat(&self, s: f64) -> Result<f64> {
        check_link(s)?;
        self.e(s)
    }

    /// `J(s)`: density at distance `s` of unblocked points of other clusters.
    fn j(&self, s: f64) -> Result<f64> {
        let k = &self.spec.kernel;
        let ring = k.ring_breaks(s, self.rho);
        let breaks = sorted_breaks(ring[0], ring[ring.len() - 1], ring.iter().copied().chain([s]));
        let q = try_integrate_pieces(|r| Ok(self.c(s, r)? * k.ring(s, r) * r), &breaks, &self.middle)?;
        Ok(2.0 * PI * self.spec.lambda_parent * q.converged_value()?.max(0.0))
    }

    /// Density of candidate transmitters at distance `s` given the parent of
    /// the receiver's own cluster at distance `u`.
    pub fn i_hat(&self, s: f64, u: f64) -> Result<f64> {
        check_link(s)?;
        check_dist("parent distance", u)?;
        Ok(self.spec.kernel.ring(s, u) + self.j(s)?)
    }

    /// Integrand of the outer `s` integral, without the constant prefactor.
    pub fn link_density(&self, s: f64) -> Result<f64> {
        check_link(s)?;
        let noise = if self.net.noise > 0.0 {
            (-self.theta * self.net.noise * s.powf(self.net.beta)).exp()
        } else {
            1.0
        };
        if noise == 0.0 {
            return Ok(0.0);
        }
        let e = self.e(s)?;
        if e < 1e-300 {
            return Ok(0.0);
        }
        let j = self.j(s)?;
        let k = &self.spec.kernel;
        let ring = k.ring_breaks(s, self.rho);
        let breaks = sorted_breaks(0.0, self.rho, ring.iter().copied());
        let q = try_integrate_pieces(
            |u| {
                let f = k.density_unchecked(u) * u;
                if f == 0.0 {
                    return Ok(0.0);
                }
                Ok(f * self.c(s, u)? * (k.ring(s, u) + j))
            },
            &breaks,
            &self.middle,
        )?;
        Ok(noise * e * q.converged_value()?)
    }

    /// Evaluates the outer integral.
    pub fn evaluate(&self) -> Result<AnalyticValue> {
        let prefactor = 2.0 * PI * (1.0 - self.net.p) * self.net.p * self.spec.mu;
        let k = &self.spec.kernel;
        let scale = k.scale().min(1.0 / (self.net.p * self.spec.lambda_total()).sqrt());
        let f = |s: f64| if s > 0.0 { self.link_density(s) } else { Ok(0.0) };
        let q = match *k {
            OffspringKernel::Matern { radius } => {
                let head = try_integrate_pieces(f, &[0.0, radius, 2.0 * radius], &self.outer)?;
                let tail = try_integrate_semi_infinite(f, 2.0 * radius, scale, &self.outer)?;
                crate::quadrature::QuadResult {
                    value: head.value + tail.value,
                    abs_err_est: head.abs_err_est + tail.abs_err_est,
                    evaluations: head.evaluations + tail.evaluations,
                    converged: head.converged && tail.converged,
                }
            }
            OffspringKernel::Thomas { .. } => try_integrate_semi_infinite(f, 0.0, scale, &self.outer)?,
        };
        if !q.converged {
            return Err(Error::NoConvergence {
                value: prefactor * q.value,
                abs_err: prefactor * q.abs_err_est,
            });
        }
        Ok(AnalyticValue {
            theta: self.theta,
            value: prefactor * q.value,
            achieved_tol: prefactor * q.abs_err_est,
        })
    }
}

/// Value at one threshold in the given mode.
pub fn evaluate(theta: f64, spec: &ClusterSpec, net: &NetworkSpec, policy: &QuadPolicy, mode: Mode) -> Result<AnalyticValue> {
    CoverageIntegrand::new(spec, net, theta, mode, policy)?.evaluate()
}

/// Coverage probability of the typical device towards its nearest transmitter.
pub fn coverage(theta: f64, spec: &ClusterSpec, net: &NetworkSpec, policy: &QuadPolicy) -> Result<f64> {
    Ok(evaluate(theta, spec, net, policy, Mode::Nearest)?.value)
}

/// Expected number of transmitters the typical device decodes.
pub fn discovery(theta: f64, spec: &ClusterSpec, net: &NetworkSpec, policy: &QuadPolicy) -> Result<f64> {
    Ok(evaluate(theta, spec, net, policy, Mode::Discovery)?.value)
}

/// Evaluates a threshold grid, one threshold per task.
pub fn evaluate_grid(
    thetas: &[f64],
    spec: &ClusterSpec,
    net: &NetworkSpec,
    policy: &QuadPolicy,
    mode: Mode,
    exec: Execution,
) -> Result<Vec<AnalyticValue>> {
    map_items(thetas, exec, |&t| evaluate(t, spec, net, policy, mode))
        .into_iter()
        .collect()
}

/// `C(s, r)` at the default policy.
pub fn c_hat(s: f64, r: f64, theta: f64, spec: &ClusterSpec, net: &NetworkSpec, mode: Mode) -> Result<f64> {
    CoverageIntegrand::new(spec, net, theta, mode, &QuadPolicy::default())?.c_hat(s, r)
}

/// `E(s)` at the default policy.
pub fn e_hat(s: f64, theta: f64, spec: &ClusterSpec, net: &NetworkSpec, mode: Mode) -> Result<f64> {
    CoverageIntegrand::new(spec, net, theta, mode, &QuadPolicy::default())?.e_hat(s)
}

/// `g(s|u) + J(s)` at the default policy.
pub fn i_hat(s: f64, u: f64, theta: f64, spec: &ClusterSpec, net: &NetworkSpec, mode: Mode) -> Result<f64> {
    CoverageIntegrand::new(spec, net, theta, mode, &QuadPolicy::default())?.i_hat(s, u)
}

fn check_ppp(theta: f64, p: f64, beta: f64) -> Result<()> {
    check_theta(theta)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("transmit probability must be in (0,1), got {p}")));
    }
    if !(beta > 2.0 && beta.is_finite()) {
        return Err(domain(format!("path-loss exponent must exceed 2, got {beta}")));
    }
    Ok(())
}

/// Expected number of decodable transmitters when devices form a
/// homogeneous Poisson process, without noise.
pub fn ppp_discovery(theta: f64, p: f64, beta: f64) -> Result<f64> {
    check_ppp(theta, p, beta)?;
    Ok((1.0 - p) * beta / (2.0 * PI) * (2.0 * PI / beta).sin() * theta.powf(-2.0 / beta))
}

/// Nearest-transmitter coverage when devices form a homogeneous Poisson
/// process of intensity `lambda_total`, without noise. Does not depend on
/// the intensity.
pub fn ppp_coverage(theta: f64, p: f64, lambda_total: f64, beta: f64) -> Result<f64> {
    check_ppp(theta, p, beta)?;
    if !(lambda_total > 0.0 && lambda_total.is_finite()) {
        return Err(domain(format!("intensity must be positive, got {lambda_total}")));
    }
    let a = theta.powf(-2.0 / beta);
    let pol = QuadPolicy::new(1e-12, 1e-15);
    let k = 0.5 * beta;
    let b = a.max(1.0);
    let head = if a < b { integrate(|u| 1.0 / (1.0 + u.powf(k)), a, b, &pol)?.value } else { 0.0 };
    // Tail u = b w^{-1/(k-1)} turns the algebraic decay into a smooth integrand on [0, 1].
    let tail = integrate(|w| 1.0 / (1.0 + b.powf(-k) * w.powf(k / (k - 1.0))), 0.0, 1.0, &pol)?.value
        * b.powf(1.0 - k)
        / (k - 1.0);
    let rho = theta.powf(2.0 / beta) * (head + tail);
    Ok((1.0 - p) / (1.0 + rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_spec(sigma2: f64) -> ClusterSpec {
        ClusterSpec::new(1.0 / PI, 10.0, OffspringKernel::thomas(sigma2).unwrap()).unwrap()
    }

    fn fig_net() -> NetworkSpec {
        NetworkSpec::new(0.5, 4.0, 0.0).unwrap()
    }

    #[test]
    fn c_hat_bounds_and_limits() {
        let spec = fig_spec(1.0);
        let net = fig_net();
        let floor = (-net.p * spec.mu).exp();
        for &mode in &[Mode::Nearest, Mode::Discovery] {
            for &s in &[0.05, 0.5, 1.0, 3.0] {
                for &r in &[0.0, 0.5, 2.0, 10.0] {
                    let c = c_hat(s, r, 1.0, &spec, &net, mode).unwrap();
                    assert!(c >= floor * (1.0 - 1e-12) && c <= 1.0, "{c}");
                }
            }
        }
        let c = c_hat(1.0, 1.0, 1e-24, &spec, &net, Mode::Discovery).unwrap();
        assert!((c - 1.0).abs() < 1e-9);
        assert!(c_hat(0.0, 1.0, 1.0, &spec, &net, Mode::Nearest).is_err());
        assert!(c_hat(1.0, -1.0, 1.0, &spec, &net, Mode::Nearest).is_err());
    }

    #[test]
    fn discovery_mode_dominates_pointwise() {
        let spec = fig_spec(0.25);
        let net = fig_net();
        for &s in &[0.1, 0.7, 2.0] {
            for &r in &[0.0, 0.6, 1.5, 4.0] {
                for &t in &[0.1, 1.0, 10.0] {
                    let n = c_hat(s, r, t, &spec, &net, Mode::Nearest).unwrap();
                    let d = c_hat(s, r, t, &spec, &net, Mode::Discovery).unwrap();
                    assert!(d >= n * (1.0 - 1e-12), "s={s} r={r} t={t}");
                }
            }
        }
    }

    #[test]
    fn c_hat_matches_planar_quadrature() {
        // Blocking mass of a cluster with parent at x = (1, 0), integrated
        // over the plane in polar coordinates around the receiver.
        let spec = fig_spec(1.0);
        let net = fig_net();
        let (s, theta) = (1.0, 1.0);
        let pol = QuadPolicy::new(1e-11, 1e-14);
        let dens = |q: f64, phi: f64| {
            let d2 = q * q + 1.0 - 2.0 * q * phi.cos();
            (-d2 / 2.0).exp() / (2.0 * PI)
        };
        let angular = |q: f64| 2.0 * integrate(|phi| dens(q, phi), 0.0, PI, &pol).unwrap().value * q;
        let near = integrate(angular, 0.0, s, &pol).unwrap().value;
        let far = integrate(
            |q| angular(q) * theta * s.powi(4) / (q.powi(4) + theta * s.powi(4)),
            s,
            12.0,
            &pol,
        )
        .unwrap()
        .value;
        let want = (-net.p * spec.mu * (near + far)).exp();
        let got = c_hat(s, 1.0, theta, &spec, &net, Mode::Nearest).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn e_hat_limits_and_monotonicity() {
        let net = fig_net();
        let sparse = ClusterSpec::new(1e-12, 10.0, OffspringKernel::thomas(1.0).unwrap()).unwrap();
        assert!((e_hat(1.0, 1.0, &sparse, &net, Mode::Nearest).unwrap() - 1.0).abs() < 1e-9);
        let spec = fig_spec(1.0);
        let mut prev = 1.0;
        for &t in &[0.01, 0.1, 1.0, 10.0] {
            let e = e_hat(1.0, t, &spec, &net, Mode::Nearest).unwrap();
            assert!(e <= prev && e > 0.0);
            prev = e;
        }
    }

    #[test]
    fn i_hat_bounds() {
        let spec = fig_spec(1.0);
        let net = fig_net();
        let pol = QuadPolicy::new(1e-10, 1e-13);
        for &s in &[0.2, 1.0, 3.0] {
            let bound = 2.0
                * PI
                * spec.lambda_parent
                * integrate(|r| spec.kernel.ring(s, r) * r, 0.0, s + 10.0, &pol).unwrap().value;
            for &u in &[0.0, 1.0, 2.5] {
                let i = i_hat(s, u, 1.0, &spec, &net, Mode::Nearest).unwrap();
                let g = spec.kernel.ring(s, u);
                assert!(i >= g);
                assert!(i - g <= bound * (1.0 + 1e-9));
            }
        }
        let sparse = ClusterSpec::new(1e-14, 10.0, OffspringKernel::thomas(1.0).unwrap()).unwrap();
        let i = i_hat(1.0, 0.5, 1.0, &sparse, &net, Mode::Nearest).unwrap();
        assert!((i - sparse.kernel.ring(1.0, 0.5)).abs() < 1e-10);
    }

    #[test]
    fn ppp_discovery_values() {
        let v = ppp_discovery(1.0, 0.5, 4.0).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-12);
        let v16 = ppp_discovery(16.0, 0.5, 4.0).unwrap();
        assert!((v16 - v / 4.0).abs() < 1e-15);
        let small_p = ppp_discovery(1.0, 1e-12, 4.0).unwrap();
        assert!((v - 0.5 * small_p).abs() < 1e-12);
        assert!(ppp_discovery(0.0, 0.5, 4.0).is_err());
        assert!(ppp_discovery(1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn ppp_coverage_values() {
        let v = ppp_coverage(1.0, 0.5, 1.0, 4.0).unwrap();
        assert!((v - 0.5 / (1.0 + PI / 4.0)).abs() < 1e-10);
        assert_eq!(v, ppp_coverage(1.0, 0.5, 123.0, 4.0).unwrap());
        assert!((ppp_coverage(1e-10, 0.5, 1.0, 4.0).unwrap() - 0.5).abs() < 1e-4);
        assert!(ppp_coverage(1.0, 0.5, 0.0, 4.0).is_err());
    }

    #[test]
    fn ppp_coverage_for_other_exponents() {
        // beta = 3 has no elementary antiderivative; integrate directly.
        let theta: f64 = 2.0;
        let beta: f64 = 3.0;
        let pol = QuadPolicy::new(1e-10, 1e-12);
        let a = theta.powf(-2.0 / beta);
        let direct = integrate(|t| {
            let v = t / (1.0 - t);
            let u = a + v * v;
            2.0 * v / (1.0 + u.powf(1.5)) / ((1.0 - t) * (1.0 - t))
        }, 0.0, 1.0, &pol)
        .unwrap()
        .value;
        let want = 0.5 / (1.0 + theta.powf(2.0 / beta) * direct);
        assert!((ppp_coverage(theta, 0.5, 1.0, beta).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn access_probability_limits() {
        let spec = fig_spec(1.0);
        let pol = QuadPolicy::default();
        let net = NetworkSpec::new(1.0 - 1e-4, 4.0, 0.0).unwrap();
        assert!(coverage(1.0, &spec, &net, &pol).unwrap() < 1e-4);
        // Sparse transmitters see the clusters as a homogeneous process.
        let net = NetworkSpec::new(1e-4, 4.0, 0.0).unwrap();
        let v = coverage(1.0, &spec, &net, &pol).unwrap();
        let ppp = ppp_coverage(1.0, net.p, spec.lambda_total(), 4.0).unwrap();
        assert!((v - ppp).abs() < 1e-3, "{v} vs {ppp}");
    }

    #[test]
    fn noise_lowers_coverage() {
        let spec = fig_spec(1.0);
        let pol = QuadPolicy::default();
        let quiet = coverage(1.0, &spec, &fig_net(), &pol).unwrap();
        let noisy = coverage(1.0, &spec, &NetworkSpec::new(0.5, 4.0, 0.5).unwrap(), &pol).unwrap();
        assert!(noisy < quiet);
    }

    #[test]
    fn matern_coverage_is_a_probability() {
        let spec = ClusterSpec::new(1.0 / PI, 10.0, OffspringKernel::matern(1.0).unwrap()).unwrap();
        let pol = QuadPolicy::default();
        let cp = coverage(1.0, &spec, &fig_net(), &pol).unwrap();
        let nd = discovery(1.0, &spec, &fig_net(), &pol).unwrap();
        assert!(cp > 0.0 && cp <= 0.5);
        assert!(nd >= cp * (1.0 - 1e-6) && nd <= 1.0);
    }
}
