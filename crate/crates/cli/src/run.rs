//! Experiment execution and output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use palmcluster::coverage::{self, AnalyticValue, Mode};
use palmcluster::palm::{verify_exchange_many, BallCount, ConstantOne, ExchangeEstimate, PalmFunctional, PgflProduct};
use palmcluster::sinr::{estimate_nnd, estimate_sinr_grid};
use palmcluster::{nnd_ccdf, ClusterSpec, EstimateCI, Execution, OffspringKernel, RadialTestFunction};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentMode, Manifest};
use crate::CliError;

/// Fixed-width scientific notation with 10 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.9e}")
}

fn sigma2_of(spec: &ClusterSpec) -> String {
    match spec.kernel {
        OffspringKernel::Thomas { sigma2 } => num(sigma2),
        OffspringKernel::Matern { .. } => String::new(),
    }
}

/// One curve point: an analytic value and its Monte Carlo counterpart.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub x: f64,
    pub sigma2: String,
    pub analytic: Option<AnalyticValue>,
    pub mc: Option<EstimateCI>,
    pub ppp: Option<f64>,
}

/// Results of one run, ready to be written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: String,
    pub gnuplot: Option<String>,
    pub failures: Vec<String>,
    /// Whether a failure came from quadrature or censoring.
    pub numeric_failure: bool,
}

fn curve_csv(x_name: &str, with_ppp: bool, rows: &[CurveRow]) -> String {
    let mut out = format!(
        "{x_name},sigma2,analytic,achieved_tol,mc_mean,mc_ci_low,mc_ci_high,n,n_censored{}\n",
        if with_ppp { ",ppp" } else { "" }
    );
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            num(r.x),
            r.sigma2,
            opt(r.analytic.map(|a| a.value)),
            opt(r.analytic.map(|a| a.achieved_tol)),
            opt(r.mc.map(|m| m.mean)),
            opt(r.mc.map(|m| m.ci_low)),
            opt(r.mc.map(|m| m.ci_high)),
            r.mc.map(|m| m.n_effective.to_string()).unwrap_or_default(),
            r.mc.map(|m| m.n_censored.to_string()).unwrap_or_default(),
        );
        if with_ppp {
            let _ = write!(out, ",{}", opt(r.ppp));
        }
        out.push('\n');
    }
    out
}

fn exchange_csv(names: &[String], est: &[ExchangeEstimate]) -> String {
    let mut out = String::from("functional,lhs_mean,lhs_ci_low,lhs_ci_high,rhs_mean,rhs_ci_low,rhs_ci_high,n,flagged\n");
    for (name, e) in names.iter().zip(est) {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{},{},{}",
            num(e.lhs.mean),
            num(e.lhs.ci_low),
            num(e.lhs.ci_high),
            num(e.rhs.mean),
            num(e.rhs.ci_low),
            num(e.rhs.ci_high),
            e.lhs.n_effective,
            e.flagged
        );
    }
    out
}

fn gnuplot_script(cfg: &ExperimentConfig, csv_name: &str, groups: &[String]) -> String {
    let (xlabel, ylabel, logx) = match cfg.mode {
        ExperimentMode::Coverage => ("SINR threshold", "coverage probability", true),
        ExperimentMode::Discovery => ("SINR threshold", "expected number of discovered devices", true),
        _ => ("r", "P(nearest neighbor distance > r)", false),
    };
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    if logx {
        let _ = writeln!(s, "set logscale x");
    }
    let mut plots = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let filter = if g.is_empty() {
            "($3)".to_string()
        } else {
            format!("(strcol(2) eq '{g}' ? $3 : 1/0)")
        };
        let label = if g.is_empty() { "analytic".into() } else { format!("sigma2 = {}", g.parse::<f64>().unwrap_or(f64::NAN)) };
        plots.push(format!("'{csv_name}' using 1:{filter} with lines lt {} title '{label}'", i + 1));
        let mc_filter = if g.is_empty() {
            "5:6:7".to_string()
        } else {
            format!("(strcol(2) eq '{g}' ? $5 : 1/0):6:7")
        };
        plots.push(format!("'{csv_name}' using 1:{mc_filter} with yerrorbars lt {} notitle", i + 1));
    }
    if matches!(cfg.mode, ExperimentMode::Coverage | ExperimentMode::Discovery) {
        plots.push(format!("'{csv_name}' using 1:10 with lines dt 2 lc 'black' title 'PPP'"));
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

fn map_exec<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match exec {
        Execution::Parallel => items.par_iter().map(f).collect(),
        Execution::Sequential => items.iter().map(f).collect(),
    }
}

fn run_curves(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mode = match cfg.mode {
        ExperimentMode::Discovery => Mode::Discovery,
        _ => Mode::Nearest,
    };
    let net = &cfg.network;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut groups = Vec::new();
    for spec in cfg.cluster_specs()? {
        let sigma2 = sigma2_of(&spec);
        groups.push(sigma2.clone());
        let analytic = map_exec(&cfg.theta_grid, cfg.sim.execution, |&t| {
            coverage::evaluate(t, &spec, net, &cfg.quad, mode)
        });
        let sim = cfg.sim_config(&spec);
        let mc = match estimate_sinr_grid(&spec, net, &cfg.theta_grid, &sim) {
            Ok(est) => Some(match mode {
                Mode::Nearest => est.coverage,
                Mode::Discovery => est.discovery,
            }),
            Err(e) => {
                failures.push(format!("sigma2={sigma2}: monte carlo: {e}"));
                None
            }
        };
        for (i, (&theta, a)) in cfg.theta_grid.iter().zip(analytic).enumerate() {
            let analytic = match a {
                Ok(v) => Some(v),
                Err(e) => {
                    failures.push(format!("sigma2={sigma2} theta={theta}: analytic: {e}"));
                    None
                }
            };
            let ppp = match mode {
                Mode::Nearest if net.noise == 0.0 => {
                    Some(coverage::ppp_coverage(theta, net.p, spec.lambda_total(), net.beta)?)
                }
                Mode::Nearest => None,
                Mode::Discovery if net.noise == 0.0 => Some(coverage::ppp_discovery(theta, net.p, net.beta)?),
                Mode::Discovery => None,
            };
            rows.push(CurveRow {
                x: theta,
                sigma2: sigma2.clone(),
                analytic,
                mc: mc.as_ref().map(|m| m[i]),
                ppp,
            });
        }
    }
    Ok(RunOutput {
        csv: curve_csv("theta", true, &rows),
        gnuplot: cfg.gnuplot.then(|| gnuplot_script(cfg, &csv_name(cfg), &groups)),
        numeric_failure: !failures.is_empty(),
        failures,
    })
}

fn run_nnd(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut groups = Vec::new();
    for spec in cfg.cluster_specs()? {
        let sigma2 = sigma2_of(&spec);
        groups.push(sigma2.clone());
        let analytic = map_exec(&cfg.r_grid, cfg.sim.execution, |&r| nnd_ccdf(&spec, r));
        let mc = match estimate_nnd(&spec, &cfg.r_grid, &cfg.sim_config(&spec)) {
            Ok(v) => Some(v),
            Err(e) => {
                failures.push(format!("sigma2={sigma2}: monte carlo: {e}"));
                None
            }
        };
        for (i, (&r, a)) in cfg.r_grid.iter().zip(analytic).enumerate() {
            let analytic = match a {
                Ok(value) => Some(AnalyticValue {
                    theta: r,
                    value,
                    achieved_tol: f64::NAN,
                }),
                Err(e) => {
                    failures.push(format!("sigma2={sigma2} r={r}: analytic: {e}"));
                    None
                }
            };
            rows.push(CurveRow {
                x: r,
                sigma2: sigma2.clone(),
                analytic,
                mc: mc.as_ref().map(|m| m[i]),
                ppp: None,
            });
        }
    }
    Ok(RunOutput {
        csv: curve_csv("r", false, &rows),
        gnuplot: cfg.gnuplot.then(|| gnuplot_script(cfg, &csv_name(cfg), &groups)),
        numeric_failure: !failures.is_empty(),
        failures,
    })
}

/// The three canonical functionals: `1`, the ball count and a radial product.
pub fn canonical_functionals(radius: f64) -> Result<Vec<Box<dyn PalmFunctional>>, CliError> {
    let h = RadialTestFunction::new(radius, move |s| 0.2 + 0.8 * (s / radius).powi(2))?;
    Ok(vec![Box::new(ConstantOne), Box::new(BallCount { radius }), Box::new(PgflProduct { h })])
}

fn run_palm_verify(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let ws = canonical_functionals(cfg.ball_radius)?;
    let refs: Vec<&dyn PalmFunctional> = ws.iter().map(|w| w.as_ref()).collect();
    let names: Vec<String> = ws.iter().map(|w| w.name()).collect();
    let mut csv = String::new();
    let mut failures = Vec::new();
    for spec in cfg.cluster_specs()? {
        let est = verify_exchange_many(&spec, &refs, &cfg.sim_config(&spec))?;
        for (n, e) in names.iter().zip(&est) {
            if !e.overlaps() {
                failures.push(format!("{n}: confidence intervals do not overlap"));
            }
        }
        let table = exchange_csv(&names, &est);
        if csv.is_empty() {
            csv = table;
        } else {
            csv.extend(table.lines().skip(1).map(|l| format!("{l}\n")));
        }
    }
    Ok(RunOutput {
        csv,
        gnuplot: None,
        failures,
        numeric_failure: false,
    })
}

fn csv_name(cfg: &ExperimentConfig) -> String {
    csv_path(cfg)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn csv_path(cfg: &ExperimentConfig) -> PathBuf {
    with_suffix(&cfg.output_path, ".csv")
}

pub fn manifest_path(cfg: &ExperimentConfig) -> PathBuf {
    with_suffix(&cfg.output_path, ".manifest.json")
}

/// Computes the experiment without touching the file system.
pub fn compute(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    match cfg.mode {
        ExperimentMode::Coverage | ExperimentMode::Discovery => run_curves(cfg),
        ExperimentMode::Nnd => run_nnd(cfg),
        ExperimentMode::PalmVerify => run_palm_verify(cfg),
    }
}

/// Runs the experiment and writes the CSV, the manifest and, if requested,
/// the gnuplot script. Outputs are written even when some points failed;
/// the failures are listed in the manifest and returned as an error.
pub fn run(cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    let t0 = Instant::now();
    let out = compute(cfg)?;
    if let Some(dir) = cfg.output_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut outputs = vec![csv_path(cfg)];
    std::fs::write(&outputs[0], &out.csv)?;
    if let Some(gp) = &out.gnuplot {
        let path = with_suffix(&cfg.output_path, ".gp");
        std::fs::write(&path, gp)?;
        outputs.push(path);
    }
    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.sim.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: t0.elapsed().as_secs_f64(),
        outputs,
        failures: out.failures.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(manifest_path(cfg), text)?;
    if out.failures.is_empty() {
        Ok(manifest)
    } else if out.numeric_failure {
        Err(CliError::Numeric(out.failures.join("; ")))
    } else {
        Err(CliError::Verification(out.failures.join("; ")))
    }
}
