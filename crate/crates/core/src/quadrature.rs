//! One-dimensional adaptive integration.
//!
//! A single engine serves every integral in the crate: the 21-point
//! Gauss–Kronrod rule with its embedded 10-point Gauss rule, applied with
//! global adaptive bisection of the interval carrying the largest error
//! estimate. Error estimates use the QUADPACK rescaling. Semi-infinite
//! ranges are mapped onto `(0, 1)` by `x = a + c t / (1 - t)`; the rule never
//! samples an endpoint, so integrable endpoint singularities are tolerated.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Tolerances and truncation settings shared by the analytic evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadPolicy {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Multiple of the kernel scale beyond which offspring mass is dropped.
    pub trunc_factor: f64,
    /// Maximum bisection depth of any subinterval.
    pub max_depth: u32,
}

impl Default for QuadPolicy {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            trunc_factor: 8.0,
            max_depth: 40,
        }
    }
}

impl QuadPolicy {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(domain("quadrature tolerances must be positive"));
        }
        if !(self.trunc_factor >= 4.0) {
            return Err(domain("trunc_factor must be at least 4"));
        }
        if self.max_depth == 0 {
            return Err(domain("max_depth must be positive"));
        }
        Ok(())
    }

    /// The same policy with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err_est: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl QuadResult {
    const ZERO: Self = Self {
        value: 0.0,
        abs_err_est: 0.0,
        evaluations: 0,
        converged: true,
    };

    /// The value, or `NoConvergence` carrying the partial estimate.
    pub fn converged_value(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NoConvergence {
                value: self.value,
                abs_err: self.abs_err_est,
            })
        }
    }

    fn merge(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            abs_err_est: self.abs_err_est + other.abs_err_est,
            evaluations: self.evaluations + other.evaluations,
            converged: self.converged && other.converged,
        }
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const EVALS_PER_RULE: usize = 21;
const MAX_INTERVALS: usize = 4000;

fn checked<F>(f: &mut F, x: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let v = f(x)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { abscissa: x })
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = err.abs();
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

/// (kronrod estimate, error estimate)
fn gk21<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = checked(f, center)?;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[10];
    let mut res_abs = res_kronrod.abs();
    for j in 0..5 {
        let k = 2 * j + 1;
        let dx = half * XGK[k];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv1[k] = f1;
        fv2[k] = f2;
        res_gauss += WG[j] * (f1 + f2);
        res_kronrod += WGK[k] * (f1 + f2);
        res_abs += WGK[k] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let k = 2 * j;
        let dx = half * XGK[k];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv1[k] = f1;
        fv2[k] = f2;
        res_kronrod += WGK[k] * (f1 + f2);
        res_abs += WGK[k] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for k in 0..10 {
        res_asc += WGK[k] * ((fv1[k] - mean).abs() + (fv2[k] - mean).abs());
    }
    let h = half.abs();
    let err = rescale_error((res_kronrod - res_gauss) * half, res_abs * h, res_asc * h);
    Ok((res_kronrod * half, err))
}

struct Interval {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    depth: u32,
}

/// Adaptive integration of a fallible integrand over `[a, b]`.
///
/// Errors returned by `f` propagate unchanged; nested integrals use this to
/// surface inner convergence failures.
pub fn try_integrate<F>(mut f: F, a: f64, b: f64, policy: &QuadPolicy) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(domain("integration bounds must be finite"));
    }
    if a > b {
        return Err(domain(format!("empty interval: a = {a} > b = {b}")));
    }
    if a == b {
        return Ok(QuadResult::ZERO);
    }

    let (value, err) = gk21(&mut f, a, b)?;
    let mut evaluations = EVALS_PER_RULE;
    let mut intervals = vec![Interval {
        a,
        b,
        value,
        err,
        depth: 0,
    }];
    let mut total = value;
    let mut total_err = err;

    loop {
        let tol = policy.abs_tol.max(policy.rel_tol * total.abs());
        if total_err <= tol {
            return Ok(QuadResult {
                value: total,
                abs_err_est: total_err,
                evaluations,
                converged: true,
            });
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("at least one interval");
        let iv = &intervals[worst];
        let mid = 0.5 * (iv.a + iv.b);
        let too_narrow = (iv.b - iv.a) <= 1e3 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE);
        if iv.depth >= policy.max_depth || intervals.len() >= MAX_INTERVALS || too_narrow {
            return Ok(QuadResult {
                value: total,
                abs_err_est: total_err,
                evaluations,
                converged: false,
            });
        }
        let (ia, ib, depth) = (iv.a, iv.b, iv.depth + 1);
        let (v1, e1) = gk21(&mut f, ia, mid)?;
        let (v2, e2) = gk21(&mut f, mid, ib)?;
        evaluations += 2 * EVALS_PER_RULE;

        let old = intervals.swap_remove(worst);
        total += v1 + v2 - old.value;
        intervals.push(Interval {
            a: ia,
            b: mid,
            value: v1,
            err: e1,
            depth,
        });
        intervals.push(Interval {
            a: mid,
            b: ib,
            value: v2,
            err: e2,
            depth,
        });
        // Re-summing avoids drift from repeated add/subtract of large terms.
        total_err = intervals.iter().map(|i| i.err).sum();
        if intervals.len() % 64 == 0 {
            total = intervals.iter().map(|i| i.value).sum();
        }
    }
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, policy: &QuadPolicy) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    try_integrate(|x| Ok(f(x)), a, b, policy)
}

/// Integrates over consecutive pieces `[breaks[i], breaks[i+1]]`, so that
/// known kinks and jumps of `f` fall on subinterval boundaries. Breaks must
/// be nondecreasing; zero-length pieces are skipped.
pub fn try_integrate_pieces<F>(mut f: F, breaks: &[f64], policy: &QuadPolicy) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut acc = QuadResult::ZERO;
    for w in breaks.windows(2) {
        acc = acc.merge(try_integrate(&mut f, w[0], w[1], policy)?);
    }
    Ok(acc)
}

/// Integral of `f` over `[a, inf)` through the map `x = a + scale t/(1-t)`.
pub fn try_integrate_semi_infinite<F>(
    mut f: F,
    a: f64,
    scale: f64,
    policy: &QuadPolicy,
) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(domain("semi-infinite map scale must be positive"));
    }
    try_integrate(
        |t| {
            let one_minus = 1.0 - t;
            let x = a + scale * t / one_minus;
            if !x.is_finite() {
                return Ok(0.0);
            }
            let jac = scale / (one_minus * one_minus);
            let v = f(x)?;
            // Integrand decays to zero faster than the Jacobian grows.
            Ok(if v == 0.0 { 0.0 } else { v * jac })
        },
        0.0,
        1.0,
        policy,
    )
}

pub fn integrate_semi_infinite<F>(f: F, a: f64, scale: f64, policy: &QuadPolicy) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    try_integrate_semi_infinite(|x| Ok(f(x)), a, scale, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tight() -> QuadPolicy {
        QuadPolicy::new(1e-12, 1e-14)
    }

    #[test]
    fn constant_on_unit_interval() {
        let r = integrate(|_| 1.0, 0.0, 1.0, &tight()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(r.converged);
        assert_eq!(r.evaluations, 21);
    }

    #[test]
    fn exponential_tail_through_map() {
        let r = integrate_semi_infinite(|x| (-x).exp(), 0.0, 1.0, &tight()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn arctan_tail_is_quarter_pi() {
        let r = integrate_semi_infinite(|u| 1.0 / (1.0 + u * u), 1.0, 1.0, &tight()).unwrap();
        assert!((r.value - PI / 4.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn gaussian_upper_tail() {
        let phi = |s: f64| (-0.5 * s * s).exp() / (2.0 * PI).sqrt();
        let r = integrate_semi_infinite(phi, 2.0, 1.0, &tight()).unwrap();
        // 1 - Phi(2)
        assert!((r.value - 0.022_750_131_948_179_2).abs() < 1e-7, "{}", r.value);
    }

    #[test]
    fn zero_integrand() {
        let r = integrate_semi_infinite(|_| 0.0, 0.0, 3.0, &tight()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn open_rule_tolerates_endpoint_singularity() {
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, &QuadPolicy::new(1e-8, 1e-12)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn nan_reports_abscissa() {
        let err = integrate(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, &tight()).unwrap_err();
        match err {
            Error::NonFinite { abscissa } => assert!(abscissa > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reversed_bounds_rejected() {
        assert!(matches!(
            integrate(|x| x, 1.0, 0.0, &tight()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn depth_cap_reports_non_convergence() {
        let policy = QuadPolicy {
            max_depth: 1,
            ..QuadPolicy::new(1e-15, 1e-300)
        };
        let r = integrate(|x| (1.0 / x).sin(), 1e-3, 1.0, &policy).unwrap();
        assert!(!r.converged);
        assert!(matches!(r.converged_value(), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn pieces_handle_jumps() {
        let f = |x: f64| Ok(if x < 0.3 { 1.0 } else { 2.0 });
        let r = try_integrate_pieces(f, &[0.0, 0.3, 1.0], &tight()).unwrap();
        assert!((r.value - (0.3 + 1.4)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn additive_over_split(c in 0.05f64..0.95, k in 0.5f64..5.0) {
                let f = |x: f64| (k * x).cos() + x * x;
                let p = tight();
                let whole = integrate(f, 0.0, 1.0, &p).unwrap();
                let left = integrate(f, 0.0, c, &p).unwrap();
                let right = integrate(f, c, 1.0, &p).unwrap();
                let slack = whole.abs_err_est + left.abs_err_est + right.abs_err_est + 1e-13;
                prop_assert!((left.value + right.value - whole.value).abs() <= slack);
            }

            #[test]
            fn linear_in_integrand(alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
                let p = tight();
                let f = |x: f64| (-x).exp();
                let g = |x: f64| x.sin();
                let combo = integrate(|x| alpha * f(x) + beta * g(x), 0.0, 2.0, &p).unwrap();
                let sep = alpha * integrate(f, 0.0, 2.0, &p).unwrap().value
                    + beta * integrate(g, 0.0, 2.0, &p).unwrap().value;
                prop_assert!((combo.value - sep).abs() < 1e-11);
            }
        }
    }
}
