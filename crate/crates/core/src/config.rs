//! Strict JSON experiment configuration: schema, parsing, and parse-only
//! validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    spline::CubicSpline, Confining, Diagnostic, Domain, Interaction, PotentialSpec, Severity,
};

/// Named experiment dispatched by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Gibbs,
    Meanfield,
    SteadyStates,
    PhaseScan,
    Lsi,
    Poc,
    Talagrand,
    Fluctuations,
    Spde,
    Lln,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Simulate,
        Experiment::Gibbs,
        Experiment::Meanfield,
        Experiment::SteadyStates,
        Experiment::PhaseScan,
        Experiment::Lsi,
        Experiment::Poc,
        Experiment::Talagrand,
        Experiment::Fluctuations,
        Experiment::Spde,
        Experiment::Lln,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Gibbs => "gibbs",
            Experiment::Meanfield => "meanfield",
            Experiment::SteadyStates => "steady-states",
            Experiment::PhaseScan => "phase-scan",
            Experiment::Lsi => "lsi",
            Experiment::Poc => "poc",
            Experiment::Talagrand => "talagrand",
            Experiment::Fluctuations => "fluctuations",
            Experiment::Spde => "spde",
            Experiment::Lln => "lln",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Torus,
    Line { half_width: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConfiningConfig {
    Zero,
    Quadratic { a: f64 },
    DoubleWell,
    /// Two-column CSV (x, value) on equispaced nodes.
    Custom { csv: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InteractionConfig {
    Zero,
    Quadratic,
    CosineSum { coeffs: Vec<f64> },
    /// Two-column CSV (x, value) of the displacement profile.
    Custom { csv: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub domain: DomainConfig,
    pub confining: ConfiningConfig,
    pub interaction: InteractionConfig,
    pub beta: f64,
}

/// Uniform beta grid for scans.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut b = self.start;
        let mut i = 0u32;
        while b <= self.stop + 1e-12 {
            out.push(b);
            i += 1;
            b = self.start + self.step * i as f64;
        }
        out
    }
}

fn default_n() -> usize {
    64
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t_end() -> f64 {
    1.0
}
fn default_grid_m() -> usize {
    128
}
fn default_k_max() -> usize {
    16
}
fn default_replicas() -> usize {
    16
}
fn default_tol() -> f64 {
    1e-8
}
fn default_record_every() -> usize {
    10
}
fn default_n_samples() -> usize {
    100_000
}
fn default_mcmc_step() -> f64 {
    0.05
}
fn default_burn_in() -> usize {
    1_000
}
fn default_thin() -> usize {
    10
}
fn default_s() -> f64 {
    2.0
}
fn default_lambda_single() -> f64 {
    1.0
}
fn default_perturbation() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Particle count.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Spatial grid size (power of two).
    #[serde(default = "default_grid_m")]
    pub grid_m: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_mcmc_step")]
    pub mcmc_step: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Negative Sobolev exponent for the decay experiment.
    #[serde(default = "default_s")]
    pub s: f64,
    /// LSI constant of the single-site reference measure.
    #[serde(default = "default_lambda_single")]
    pub lambda_single: f64,
    /// Talagrand constant; defaults to the linearized spectral gap.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Perturbation amplitude for scans and steady-state starts.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    /// System sizes for N-sweeps (lsi, poc, lln).
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Beta grid for phase scans.
    #[serde(default)]
    pub betas: Option<BetaGrid>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all numerics fields have defaults")
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Build the runtime model, loading custom potential tables relative to
    /// `base` (the config file's directory).
    pub fn build_model(&self, base: &Path) -> Result<PotentialSpec<f64>> {
        let domain = match &self.model.domain {
            DomainConfig::Torus => Domain::Torus1d,
            DomainConfig::Line { half_width } => {
                if !(*half_width > 0.0) {
                    return Err(Error::Config(format!(
                        "line half_width must be positive, got {half_width}"
                    )));
                }
                Domain::Line1d {
                    half_width: *half_width,
                }
            }
            DomainConfig::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(Error::Config(
                        "box bounds must be non-empty and matched in length".into(),
                    ));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| l >= u) {
                    return Err(Error::Config("box bounds must satisfy lower < upper".into()));
                }
                Domain::Box {
                    lower: lower.clone(),
                    upper: upper.clone(),
                }
            }
        };
        let confining = match &self.model.confining {
            ConfiningConfig::Zero => Confining::Zero,
            ConfiningConfig::Quadratic { a } => Confining::Quadratic { a: *a },
            ConfiningConfig::DoubleWell => Confining::DoubleWell,
            ConfiningConfig::Custom { csv } => {
                Confining::Custom(load_spline_csv(&base.join(csv), false)?)
            }
        };
        let interaction = match &self.model.interaction {
            InteractionConfig::Zero => Interaction::Zero,
            InteractionConfig::Quadratic => Interaction::Quadratic,
            InteractionConfig::CosineSum { coeffs } => Interaction::CosineSum {
                coeffs: coeffs.clone(),
            },
            InteractionConfig::Custom { csv } => {
                let periodic = matches!(domain, Domain::Torus1d);
                Interaction::Custom(load_spline_csv(&base.join(csv), periodic)?)
            }
        };
        PotentialSpec::new(domain, confining, interaction, self.model.beta)
    }
}

/// Load a two-column (x, value) CSV on equispaced nodes into a spline.
pub fn load_spline_csv(path: &Path, periodic: bool) -> Result<CubicSpline<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b) = (parts.next(), parts.next());
        let (a, b) = match (a, b) {
            (Some(a), Some(b)) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Config(format!(
                    "{}:{}: expected two comma-separated columns",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        // skip a header row
        if lineno == 0 && a.parse::<f64>().is_err() {
            continue;
        }
        let x: f64 = a.parse().map_err(|_| {
            Error::Config(format!("{}:{}: bad x value {a:?}", path.display(), lineno + 1))
        })?;
        let v: f64 = b.parse().map_err(|_| {
            Error::Config(format!("{}:{}: bad value {b:?}", path.display(), lineno + 1))
        })?;
        xs.push(x);
        vs.push(v);
    }
    if xs.len() < 3 {
        return Err(Error::Config(format!(
            "{}: need at least 3 rows, got {}",
            path.display(),
            xs.len()
        )));
    }
    let h = xs[1] - xs[0];
    if h <= 0.0 {
        return Err(Error::Config(format!(
            "{}: x column must be strictly increasing",
            path.display()
        )));
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::Config(format!(
                "{}: x column must be equispaced",
                path.display()
            )));
        }
    }
    Ok(if periodic {
        CubicSpline::periodic(xs[0], h, vs)
    } else {
        CubicSpline::natural(xs[0], h, vs)
    })
}

/// Parse-only validation: schema problems become error diagnostics, model
/// pathologies are forwarded from the structural checks. Never executes.
pub fn validate(path: &Path) -> Result<Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = match serde_json::from_str(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            return Ok(vec![Diagnostic {
                severity: Severity::Error,
                message: format!("config parse error: {e}"),
            }])
        }
    };
    let mut out = Vec::new();
    if !(cfg.model.beta > 0.0) {
        out.push(Diagnostic {
            severity: Severity::Error,
            message: format!("beta must be positive, got {}", cfg.model.beta),
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    match cfg.build_model(base) {
        Ok(model) => out.extend(model.validate()),
        Err(e) => {
            // beta problems already reported above
            if !matches!(e, Error::Config(ref m) if m.contains("beta")) {
                out.push(Diagnostic {
                    severity: Severity::Error,
                    message: e.to_string(),
                });
            }
        }
    }
    if !cfg.numerics.grid_m.is_power_of_two() || cfg.numerics.grid_m < 8 {
        out.push(Diagnostic {
            severity: Severity::Error,
            message: format!(
                "grid_m must be a power of two >= 8, got {}",
                cfg.numerics.grid_m
            ),
        });
    }
    if !(cfg.numerics.dt > 0.0) {
        out.push(Diagnostic {
            severity: Severity::Error,
            message: format!("dt must be positive, got {}", cfg.numerics.dt),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    const KURAMOTO: &str = r#"{
        "experiment": "phase-scan",
        "model": {
            "domain": {"type": "torus"},
            "confining": {"type": "zero"},
            "interaction": {"type": "cosine-sum", "coeffs": [1.0]},
            "beta": 1.0
        },
        "seed": 42
    }"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let (_dir, path) = write_tmp(KURAMOTO);
        let cfg = ExperimentConfig::from_path(&path).unwrap();
        assert_eq!(cfg.experiment, Experiment::PhaseScan);
        assert_eq!(cfg.numerics.grid_m, 128);
        assert_eq!(cfg.seed, 42);
        let model = cfg.build_model(path.parent().unwrap()).unwrap();
        assert!(model.domain.is_torus());
        let diags = validate(&path).unwrap();
        assert!(diags.is_empty(), "{diags:?}");
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = KURAMOTO.replace("\"seed\": 42", "\"seed\": 42, \"wat\": 1");
        let (_dir, path) = write_tmp(&bad);
        assert!(ExperimentConfig::from_path(&path).is_err());
    }

    #[test]
    fn missing_beta_names_the_key() {
        let bad = KURAMOTO.replace("\"beta\": 1.0", "\"beta2\": 1.0");
        let (_dir, path) = write_tmp(&bad);
        let err = ExperimentConfig::from_path(&path).unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
        let diags = validate(&path).unwrap();
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("beta"));
    }

    #[test]
    fn negative_beta_diagnostic() {
        let bad = KURAMOTO.replace("\"beta\": 1.0", "\"beta\": -2.0");
        let (_dir, path) = write_tmp(&bad);
        let diags = validate(&path).unwrap();
        assert!(diags
            .iter()
            .any(|d| d.severity == Severity::Error && d.message.contains("beta")));
    }

    #[test]
    fn beta_grid_values() {
        let grid = BetaGrid {
            start: 1.0,
            stop: 3.0,
            step: 0.5,
        };
        assert_eq!(grid.values(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn custom_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("v.csv");
        let mut rows = String::from("x,value\n");
        for i in 0..65 {
            let x = -2.0 + 4.0 * i as f64 / 64.0;
            rows.push_str(&format!("{x},{}\n", x * x));
        }
        std::fs::write(&csv, rows).unwrap();
        let sp = load_spline_csv(&csv, false).unwrap();
        assert!((sp.value(0.5) - 0.25).abs() < 1e-3);
        // non-equispaced rejected
        std::fs::write(&csv, "0,0\n1,1\n3,9\n").unwrap();
        assert!(load_spline_csv(&csv, false).is_err());
    }
}
