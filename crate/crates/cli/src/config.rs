//! Experiment configuration files.

use std::path::{Path, PathBuf};

use palmcluster::{ClusterSpec, Execution, NetworkSpec, OffspringKernel, QuadPolicy, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    Coverage,
    Discovery,
    Nnd,
    PalmVerify,
}

impl ExperimentMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::Discovery => "discovery",
            Self::Nnd => "nnd",
            Self::PalmVerify => "palm-verify",
        }
    }
}

fn default_tail_eps() -> f64 {
    1e-6
}

fn default_confidence() -> f64 {
    0.95
}

/// Monte Carlo settings; the window defaults to a mode-dependent radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_radius: Option<f64>,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_tail_eps")]
    pub tail_eps: f64,
    #[serde(default = "default_confidence")]
    pub confidence_level: f64,
    #[serde(default)]
    pub execution: Execution,
}

impl SimSection {
    pub fn resolve(&self, default_window: f64) -> SimConfig {
        SimConfig {
            window_radius: self.window_radius.unwrap_or(default_window),
            tail_eps: self.tail_eps,
            replications: self.replications,
            seed: self.seed,
            confidence_level: self.confidence_level,
            execution: self.execution,
        }
    }
}

fn default_ball_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub cluster: ClusterSpec,
    pub network: NetworkSpec,
    /// SINR thresholds (coverage and discovery modes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta_grid: Vec<f64>,
    /// Distances for the nearest-neighbor mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r_grid: Vec<f64>,
    /// Sweep over Thomas variances, replacing the kernel of `cluster`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_list: Option<Vec<f64>>,
    pub sim: SimSection,
    #[serde(default)]
    pub quad: QuadPolicy,
    /// Output files are `<output_path>.csv`, `.manifest.json` and `.gp`.
    pub output_path: PathBuf,
    /// Radius of the ball-count and product functionals in palm-verify mode.
    #[serde(default = "default_ball_radius")]
    pub ball_radius: f64,
    #[serde(default)]
    pub gnuplot: bool,
}

/// A manifest written next to the outputs of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub version: String,
    pub wall_time_secs: f64,
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<String>,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn check_grid(field: &str, grid: &[f64], allow_zero: bool) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(bad(field, "must not be empty"));
    }
    for &x in grid {
        let ok = x.is_finite() && (x > 0.0 || (allow_zero && x == 0.0));
        if !ok {
            return Err(bad(field, format!("invalid value {x}")));
        }
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad(field, "must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.cluster.validate().map_err(|e| bad("cluster", e))?;
        self.network.validate().map_err(|e| bad("network", e))?;
        self.quad.validate().map_err(|e| bad("quad", e))?;
        match self.mode {
            ExperimentMode::Coverage | ExperimentMode::Discovery => check_grid("theta_grid", &self.theta_grid, false)?,
            ExperimentMode::Nnd => check_grid("r_grid", &self.r_grid, true)?,
            ExperimentMode::PalmVerify => {
                if !(self.ball_radius > 0.0 && self.ball_radius.is_finite()) {
                    return Err(bad("ball_radius", "must be positive"));
                }
            }
        }
        if let Some(list) = &self.sigma2_list {
            check_grid("sigma2_list", list, false)?;
            if !matches!(self.cluster.kernel, OffspringKernel::Thomas { .. }) {
                return Err(bad("sigma2_list", "only applies to a thomas kernel"));
            }
        }
        for spec in self.cluster_specs()? {
            self.sim_config(&spec).validate().map_err(|e| bad("sim", e))?;
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(bad("output_path", "must not be empty"));
        }
        Ok(())
    }

    /// One cluster specification per sweep entry.
    pub fn cluster_specs(&self) -> Result<Vec<ClusterSpec>, CliError> {
        match &self.sigma2_list {
            None => Ok(vec![self.cluster]),
            Some(list) => list
                .iter()
                .map(|&s2| {
                    let kernel = OffspringKernel::thomas(s2).map_err(|e| bad("sigma2_list", e))?;
                    Ok(ClusterSpec {
                        kernel,
                        ..self.cluster
                    })
                })
                .collect(),
        }
    }

    pub fn default_window(&self, spec: &ClusterSpec) -> f64 {
        match self.mode {
            ExperimentMode::Coverage | ExperimentMode::Discovery => SimConfig::default_sinr_window(spec),
            ExperimentMode::Nnd => self.r_grid.last().copied().unwrap_or(1.0),
            ExperimentMode::PalmVerify => self.ball_radius + spec.kernel.truncation_radius(self.sim.tail_eps),
        }
    }

    pub fn sim_config(&self, spec: &ClusterSpec) -> SimConfig {
        self.sim.resolve(self.default_window(spec))
    }

    pub fn with_output(mut self, stem: PathBuf) -> Self {
        self.output_path = stem;
        self
    }
}

/// Reads a TOML config, or the `config` of a JSON run manifest.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        m.config
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `n` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| {
            let e = a + (b - a) * i as f64 / (n - 1) as f64;
            // Keep the decades exact.
            if (e - e.round()).abs() < 1e-12 {
                10f64.powi(e.round() as i32)
            } else {
                10f64.powf(e)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
}

/// Figure parameters: lambda = 1/pi, mu = 10, p = 0.5, beta = 4, no noise,
/// 13 thresholds from 0.01 to 100 and sigma2 in {0.25, 1, 4}.
pub fn figure_config(fig: Figure, seed: u64, reps: u64, out_dir: &Path) -> ExperimentConfig {
    let (mode, stem) = match fig {
        Figure::Fig2 => (ExperimentMode::Coverage, "fig2"),
        Figure::Fig3 => (ExperimentMode::Discovery, "fig3"),
    };
    ExperimentConfig {
        mode,
        cluster: ClusterSpec {
            lambda_parent: std::f64::consts::FRAC_1_PI,
            mu: 10.0,
            kernel: OffspringKernel::Thomas { sigma2: 1.0 },
        },
        network: NetworkSpec {
            p: 0.5,
            beta: 4.0,
            noise: 0.0,
        },
        theta_grid: log_grid(0.01, 100.0, 13),
        r_grid: Vec::new(),
        sigma2_list: Some(vec![0.25, 1.0, 4.0]),
        sim: SimSection {
            window_radius: None,
            replications: reps,
            seed,
            tail_eps: default_tail_eps(),
            confidence_level: default_confidence(),
            execution: Execution::Parallel,
        },
        quad: QuadPolicy::default(),
        output_path: out_dir.join(stem),
        ball_radius: default_ball_radius(),
        gnuplot: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "coverage"
theta_grid = [0.1, 1.0, 10.0]
output_path = "out/run"

[cluster]
lambda_parent = 0.3
mu = 10
kernel = { type = "thomas", sigma2 = 1.0 }

[network]
p = 0.5
beta = 4

[sim]
replications = 100
seed = 3
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.quad, QuadPolicy::default());
        assert_eq!(cfg.network.noise, 0.0);
        let spec = cfg.cluster_specs().unwrap()[0];
        assert_eq!(cfg.sim_config(&spec).window_radius, 30.0);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\nsede = 4");
        let err = toml::from_str::<ExperimentConfig>(&text).unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.theta_grid = vec![1.0, 0.5];
        assert!(cfg.validate().unwrap_err().to_string().contains("theta_grid"));
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.network.p = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("network"));
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.cluster.kernel = OffspringKernel::Matern { radius: 1.0 };
        cfg.sigma2_list = Some(vec![1.0]);
        assert!(cfg.validate().unwrap_err().to_string().contains("sigma2_list"));
        let mut cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.mode = ExperimentMode::Nnd;
        assert!(cfg.validate().unwrap_err().to_string().contains("r_grid"));
    }

    #[test]
    fn figure_grid() {
        let g = log_grid(0.01, 100.0, 13);
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[3], 0.1);
        assert_eq!(g[6], 1.0);
        assert_eq!(g[12], 100.0);
        let cfg = figure_config(Figure::Fig3, 1, 10, Path::new("x"));
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, ExperimentMode::Discovery);
        assert_eq!(cfg.cluster_specs().unwrap().len(), 3);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = figure_config(Figure::Fig2, 5, 10, Path::new("out"));
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
