//! Quick verification suites printing one line per check.

use std::f64::consts::PI;

use palmcluster::coverage;
use palmcluster::palm::{palm_intensity_ball, verify_exchange_many, PalmFunctional};
use palmcluster::sinr::{estimate_nnd, estimate_ppp_sinr_grid, estimate_sinr_grid};
use palmcluster::{nnd_ccdf, ClusterSpec, NetworkSpec, OffspringKernel, QuadPolicy, SimConfig};

use crate::run::canonical_functionals;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Palm,
    Exchange,
    Coverage,
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub pass: bool,
    pub text: String,
}

fn line(pass: bool, text: String) -> CheckLine {
    CheckLine { pass, text }
}

fn fig_spec() -> ClusterSpec {
    ClusterSpec::new(1.0 / PI, 10.0, OffspringKernel::thomas(1.0).expect("valid")).expect("valid")
}

fn palm_suite(reps: u64, seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let spec = ClusterSpec::new(0.05, 2.0, OffspringKernel::thomas(0.25)?)?;
    let grid = [0.25, 0.5, 1.0, 2.0, 3.0];
    let est = estimate_nnd(&spec, &grid, &SimConfig::new(3.0, reps, seed))?;
    let mut out = Vec::new();
    for (r, e) in grid.iter().zip(&est) {
        let a = nnd_ccdf(&spec, *r)?;
        out.push(line(
            e.contains(a),
            format!("nnd ccdf r={r}: analytic {a:.6}, mc {:.6} [{:.6}, {:.6}]", e.mean, e.ci_low, e.ci_high),
        ));
    }
    let spec = fig_spec();
    let radii = [0.5, 1.0, 2.0];
    let cfg = SimConfig::new(2.0 + spec.kernel.truncation_radius(1e-6), reps, seed);
    // The ball count functional's exchange lhs is lambda times the Palm intensity.
    let ws: Vec<_> = radii.iter().map(|&r| palmcluster::palm::BallCount { radius: r }).collect();
    let refs: Vec<&dyn PalmFunctional> = ws.iter().map(|w| w as &dyn PalmFunctional).collect();
    let est = verify_exchange_many(&spec, &refs, &cfg)?;
    for (r, e) in radii.iter().zip(&est) {
        let want = spec.lambda_total() * palm_intensity_ball(&spec, *r)?;
        out.push(line(
            e.lhs.contains(want),
            format!(
                "palm intensity r={r}: analytic {:.5}, mc {:.5} [{:.5}, {:.5}]",
                want / spec.lambda_total(),
                e.lhs.mean / spec.lambda_total(),
                e.lhs.ci_low / spec.lambda_total(),
                e.lhs.ci_high / spec.lambda_total()
            ),
        ));
    }
    Ok(out)
}

fn exchange_suite(reps: u64, seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let spec = fig_spec();
    let ws = canonical_functionals(1.0)?;
    let refs: Vec<&dyn PalmFunctional> = ws.iter().map(|w| w.as_ref()).collect();
    let cfg = SimConfig::new(1.0 + spec.kernel.truncation_radius(1e-6), reps, seed);
    let est = verify_exchange_many(&spec, &refs, &cfg)?;
    Ok(ws
        .iter()
        .zip(&est)
        .map(|(w, e)| {
            line(
                e.overlaps() && !e.flagged,
                format!(
                    "exchange {}: lhs {:.5} [{:.5}, {:.5}], rhs {:.5} [{:.5}, {:.5}]{}",
                    w.name(),
                    e.lhs.mean,
                    e.lhs.ci_low,
                    e.lhs.ci_high,
                    e.rhs.mean,
                    e.rhs.ci_low,
                    e.rhs.ci_high,
                    if e.flagged { " (heavy tail)" } else { "" }
                ),
            )
        })
        .collect())
}

fn coverage_suite(reps: u64, seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let spec = fig_spec();
    let net = NetworkSpec::new(0.5, 4.0, 0.0)?;
    let pol = QuadPolicy::default();
    let thetas = [0.1, 1.0, 10.0];
    let mc = estimate_sinr_grid(&spec, &net, &thetas, &SimConfig::new(30.0, reps, seed))?;
    let mut out = Vec::new();
    for (i, &t) in thetas.iter().enumerate() {
        let cp = coverage::coverage(t, &spec, &net, &pol)?;
        let nd = coverage::discovery(t, &spec, &net, &pol)?;
        let (c, d) = (&mc.coverage[i], &mc.discovery[i]);
        out.push(line(
            c.contains(cp),
            format!("coverage theta={t}: analytic {cp:.5}, mc {:.5} [{:.5}, {:.5}]", c.mean, c.ci_low, c.ci_high),
        ));
        out.push(line(
            d.contains(nd),
            format!("discovery theta={t}: analytic {nd:.5}, mc {:.5} [{:.5}, {:.5}]", d.mean, d.ci_low, d.ci_high),
        ));
    }
    let cp = coverage::ppp_coverage(1.0, 0.5, spec.lambda_total(), 4.0)?;
    let ppp = estimate_ppp_sinr_grid(spec.lambda_total(), &net, &[1.0], &SimConfig::new(30.0, reps, seed))?;
    let e = &ppp.coverage[0];
    out.push(line(
        e.contains(cp),
        format!("ppp coverage theta=1: analytic {cp:.5}, mc {:.5} [{:.5}, {:.5}]", e.mean, e.ci_low, e.ci_high),
    ));
    Ok(out)
}

pub fn run_suite(suite: Suite, reps: u64, seed: u64) -> Result<Vec<CheckLine>, CliError> {
    match suite {
        Suite::Palm => palm_suite(reps, seed),
        Suite::Exchange => exchange_suite(reps, seed),
        Suite::Coverage => coverage_suite(reps, seed),
    }
}
