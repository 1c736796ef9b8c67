//! Experiment dispatch: runs a parsed configuration, writes CSV/JSON
//! artifacts, and records a manifest with per-file checksums.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fluctuations::{
    compute_fluctuation_field, empirical_mode_covariance, lln_decay_experiment, simulate_spde,
    stationary_covariance_theory, FluctuationField,
};
use crate::meanfield::{
    find_steady_state, free_energy, linearized_spectrum_flat, multi_start_steady_states,
    scan_phase_transition, GridDensity, MeanFieldFlow,
};
use crate::metrics::{
    fit_loglog_slope, gronwall_bound, lsi_witness_ratio, talagrand_check,
};
use crate::model::PotentialSpec;
use crate::particle::{
    sample_gibbs, single_site_density, synchronous_coupling_run, GibbsScheme, ParticleEnsemble,
};
use crate::rng::StreamKey;
use crate::scalar::Real;

/// Cap the rayon worker count from MCKEAN_LAB_THREADS; first call wins.
pub fn init_threads() {
    if let Ok(v) = std::env::var("MCKEAN_LAB_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub wall_time_seconds: f64,
    pub files: Vec<FileEntry>,
    /// True when the run failed after emitting some outputs.
    pub partial: bool,
}

struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), content.as_bytes())?;
        let digest = Sha256::digest(content.as_bytes());
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: format!("{digest:x}"),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Execute the configured experiment, writing artifacts plus `manifest.json`
/// into the output directory. On failure a partial manifest is still
/// emitted before the error is returned.
pub fn run(cfg: &ExperimentConfig, base: &Path) -> Result<Manifest> {
    init_threads();
    let start = Instant::now();
    let out_dir = if cfg.out.is_absolute() {
        cfg.out.clone()
    } else {
        base.join(&cfg.out)
    };
    let mut w = ArtifactWriter::new(&out_dir)?;
    let model = Arc::new(cfg.build_model(base)?);
    let key = StreamKey::new(cfg.seed);

    let result = dispatch(cfg, &model, &key, &mut w);
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg)?,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files: w.files.clone(),
        partial: result.is_err(),
    };
    let text = format!("{}\n", serde_json::to_string_pretty(&manifest)?);
    std::fs::write(out_dir.join("manifest.json"), text)?;
    result.map(|_| manifest)
}

fn dispatch(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    match cfg.experiment {
        Experiment::Simulate => run_simulate(cfg, model, key, w),
        Experiment::Gibbs => run_gibbs(cfg, model, key, w),
        Experiment::Meanfield => run_meanfield(cfg, model, w),
        Experiment::SteadyStates => run_steady_states(cfg, model, w),
        Experiment::PhaseScan => run_phase_scan(cfg, model, w),
        Experiment::Lsi => run_lsi(cfg, model, w),
        Experiment::Poc => run_poc(cfg, model, key, w),
        Experiment::Talagrand => run_talagrand(cfg, model, key, w),
        Experiment::Fluctuations => run_fluctuations(cfg, model, key, w),
        Experiment::Spde => run_spde(cfg, model, key, w),
        Experiment::Lln => run_lln(cfg, model, key, w),
    }
}

fn initial_density(model: &PotentialSpec<f64>, m: usize) -> Result<GridDensity<f64>> {
    if model.domain.is_torus() {
        Ok(GridDensity::flat(m))
    } else {
        single_site_density(model, m)
    }
}

fn density_csv(rho: &GridDensity<f64>) -> String {
    let mut out = String::from("x,rho\n");
    for (i, v) in rho.values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", rho.grid.x(i), v);
    }
    out
}

/// The unique (or first found) steady state used as the reference density.
fn reference_steady_state(
    model: &PotentialSpec<f64>,
    m: usize,
    tol: f64,
) -> Result<GridDensity<f64>> {
    let init = initial_density(model, m)?;
    let run = find_steady_state(model, &init, 0.5, tol, 10_000);
    if !run.converged {
        return Err(Error::Dependency(
            "steady-state iteration did not converge for the reference density".into(),
        ));
    }
    Ok(run.density)
}

fn run_simulate(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let rho0 = initial_density(model, num.grid_m)?;
    let mut ens = ParticleEnsemble::sample_iid(model.clone(), num.n, &rho0, key, 0)?;
    let steps = (num.t_end / num.dt).round() as usize;
    let mut csv = String::from("time,energy_per_particle,order_parameter\n");
    let order = |e: &ParticleEnsemble<f64>| {
        if model.domain.is_torus() {
            e.order_parameter()
        } else {
            0.0
        }
    };
    let _ = writeln!(csv, "{},{},{}", ens.time, ens.energy_per_particle(), order(&ens));
    for s in 1..=steps {
        ens.step_euler_maruyama(num.dt)?;
        if s % num.record_every.max(1) == 0 || s == steps {
            let _ = writeln!(csv, "{},{},{}", ens.time, ens.energy_per_particle(), order(&ens));
        }
    }
    w.write("trajectory.csv", &csv)?;
    let dim = ens.dim();
    let mut pos = String::from("particle");
    for d in 0..dim {
        let _ = write!(pos, ",x{d}");
    }
    pos.push('\n');
    for i in 0..ens.n {
        let _ = write!(pos, "{i}");
        for c in ens.pos(i) {
            let _ = write!(pos, ",{c}");
        }
        pos.push('\n');
    }
    w.write("final_positions.csv", &pos)
}

fn run_gibbs(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let run = sample_gibbs(
        model,
        num.n,
        num.n_samples.min(100_000),
        GibbsScheme::Mala,
        num.mcmc_step,
        num.burn_in,
        num.thin,
        key,
        0,
    )?;
    let all: Vec<f64> = run
        .samples
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    let count = all.len() as f64;
    let mean = all.iter().sum::<f64>() / count;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count;
    let mut csv = String::from("samples,acceptance_rate,mixing_warning,mean,variance\n");
    let _ = writeln!(
        csv,
        "{},{},{},{mean},{var}",
        run.samples.len(),
        run.acceptance_rate,
        run.mixing_warning
    );
    w.write("gibbs_summary.csv", &csv)?;
    let last = run.samples.last().ok_or_else(|| {
        Error::InsufficientData("gibbs sampler produced no samples".into())
    })?;
    let mut pos = String::from("particle,x0\n");
    for (i, x) in last.iter().enumerate() {
        let _ = writeln!(pos, "{i},{x}");
    }
    w.write("final_sample.csv", &pos)
}

fn run_meanfield(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let rho0 = if model.domain.is_torus() {
        GridDensity::perturbed_flat(num.grid_m, num.perturbation, 1, 0.0)
    } else {
        initial_density(model, num.grid_m)?
    };
    let flow = MeanFieldFlow::evolve(model, rho0, num.dt, num.t_end, num.record_every)?;
    let mut csv = String::from("time,free_energy,order_parameter\n");
    for (t, rho) in flow.times.iter().zip(flow.densities.iter()) {
        let _ = writeln!(csv, "{t},{},{}", free_energy(rho, model), rho.order_parameter());
    }
    w.write("flow.csv", &csv)?;
    w.write("final_density.csv", &density_csv(flow.densities.last().unwrap()))
}

fn run_steady_states(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let runs = multi_start_steady_states(model, num.grid_m, num.tol, cfg.seed);
    let mut csv =
        String::from("index,converged,iterations,residual,free_energy,order_parameter\n");
    for (i, run) in runs.iter().enumerate() {
        let residual = run.residuals.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            csv,
            "{i},{},{},{residual},{},{}",
            run.converged,
            run.iterations,
            free_energy(&run.density, model),
            run.density.order_parameter()
        );
    }
    w.write("steady_states.csv", &csv)?;
    for (i, run) in runs.iter().enumerate() {
        w.write(&format!("density_{i}.csv"), &density_csv(&run.density))?;
    }
    Ok(())
}

fn run_phase_scan(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let betas: Vec<f64> = match &num.betas {
        Some(grid) => grid.values(),
        None => (10..=30).map(|i| i as f64 / 10.0).collect(),
    };
    let scan = scan_phase_transition(model, &betas, num.perturbation, num.grid_m)?;
    let mut csv = String::from("beta,r,energy_gap,lambda1,converged\n");
    for row in &scan.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.beta, row.order_parameter, row.energy_gap, row.lambda1, row.converged
        );
    }
    w.write("scan.csv", &csv)?;
    #[derive(Serialize)]
    struct Summary {
        estimated_beta_c: Option<f64>,
        beta_sharp: f64,
    }
    w.write_json(
        "scan_summary.json",
        &Summary {
            estimated_beta_c: scan.estimated_beta_c,
            beta_sharp: model.beta_sharp(num.k_max)?,
        },
    )
}

fn run_lsi(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let n_grid = num
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![4, 8, 16, 32, 64]);
    let states: Vec<GridDensity<f64>> =
        multi_start_steady_states(model, num.grid_m, 1e-10, cfg.seed)
            .into_iter()
            .filter(|s| s.converged)
            .map(|s| s.density)
            .collect();
    let witness = GridDensity::flat(num.grid_m);
    let mut csv = String::from("N,witness_ratio,lower_bound,regime\n");
    let mut ns = Vec::new();
    let mut ratios = Vec::new();
    for &n in &n_grid {
        let report = lsi_witness_ratio(model, n, &witness, &states, num.lambda_single)?;
        let _ = writeln!(
            csv,
            "{n},{},{},{}",
            report.witness_ratio,
            report.lower_bound,
            report.regime.tag()
        );
        ns.push(n as f64);
        ratios.push(report.witness_ratio);
    }
    w.write("lsi.csv", &csv)?;
    #[derive(Serialize)]
    struct Summary {
        slope: f64,
    }
    w.write_json(
        "lsi_summary.json",
        &Summary {
            slope: fit_loglog_slope(&ns, &ratios)?,
        },
    )
}

fn run_poc(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let n_grid = num
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![16, 64, 256, 1024]);
    let rho0 = initial_density(model, num.grid_m)?;
    let flow = MeanFieldFlow::evolve(model, rho0, num.dt, num.t_end, num.record_every)?;
    let s = flow.interaction_l2_sup(model);
    let mut csv = String::from("N,t,mean_distance,stderr,gronwall\n");
    let mut ns = Vec::new();
    let mut finals = Vec::new();
    for &n in &n_grid {
        let k = model.k_v + model.k_w * (1.0 - 1.0 / n as f64);
        let mut series: Vec<Vec<(f64, f64)>> = Vec::with_capacity(num.replicas);
        for r in 0..num.replicas {
            series.push(synchronous_coupling_run(
                model,
                n,
                num.dt,
                num.t_end,
                &flow,
                key,
                r as u64,
                num.record_every,
            )?);
        }
        for ti in 0..series[0].len() {
            let t = series[0][ti].0;
            let vals: Vec<f64> = series.iter().map(|s| s[ti].1).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (vals.len() as f64 - 1.0).max(1.0);
            let stderr = (var / vals.len() as f64).sqrt();
            let bound = gronwall_bound(k, t, s, n);
            let _ = writeln!(csv, "{n},{t},{mean},{stderr},{bound}");
            if ti + 1 == series[0].len() {
                ns.push(n as f64);
                finals.push(mean);
            }
        }
    }
    w.write("poc.csv", &csv)?;
    #[derive(Serialize)]
    struct Summary {
        slope: f64,
        interaction_l2_sup: f64,
    }
    w.write_json(
        "poc_summary.json",
        &Summary {
            slope: fit_loglog_slope(&ns, &finals)?,
            interaction_l2_sup: s,
        },
    )
}

fn run_talagrand(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let states: Vec<GridDensity<f64>> =
        multi_start_steady_states(model, num.grid_m, 1e-10, cfg.seed)
            .into_iter()
            .filter(|s| s.converged)
            .map(|s| s.density)
            .collect();
    let lambda = match num.lambda {
        Some(l) => l,
        None => linearized_spectrum_flat(model.as_ref(), 1)?[0].abs(),
    };
    let mut rng = key.stream("talagrand-samples", &[]);
    let mut samples = Vec::with_capacity(100);
    for _ in 0..100 {
        let amp = 0.3 * f64::uniform_01(&mut rng);
        let phase = f64::uniform_01(&mut rng);
        let k = 1 + (f64::uniform_01(&mut rng) * 3.0) as usize;
        samples.push(GridDensity::perturbed_flat(num.grid_m, amp, k, phase));
    }
    let margins = talagrand_check(model, &samples, lambda, &states)?;
    w.write_json("margins.json", &margins)?;
    #[derive(Serialize)]
    struct Summary {
        lambda: f64,
        min_margin: f64,
    }
    w.write_json(
        "talagrand_summary.json",
        &Summary {
            lambda,
            min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        },
    )
}

fn run_fluctuations(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let rho_beta = reference_steady_state(model, num.grid_m, 1e-12)?;
    // one Gibbs-distributed starting configuration for stationarity
    let init = sample_gibbs(
        model,
        num.n,
        1,
        GibbsScheme::Mala,
        num.mcmc_step,
        num.burn_in,
        1,
        key,
        0,
    )?;
    let mut ens = ParticleEnsemble::new(model.clone(), init.samples[0].clone(), key, 1)?;
    let steps = (num.t_end / num.dt).round() as usize;
    let mut fields: Vec<FluctuationField<f64>> = Vec::new();
    for s in 1..=steps {
        ens.step_euler_maruyama(num.dt)?;
        if s % num.record_every.max(1) == 0 {
            fields.push(compute_fluctuation_field(
                &ens.empirical_measure(),
                &rho_beta,
                num.k_max,
                ens.time,
            )?);
        }
    }
    let stats = empirical_mode_covariance(&fields, num.k_max)?;
    let theory = stationary_covariance_theory(model, num.k_max)?;
    let mut csv = String::from("k,empirical_var,stderr,theory_weight,ratio\n");
    for k in 1..=num.k_max as i64 {
        let s = &stats[&k];
        let t = theory[&k];
        let _ = writeln!(csv, "{k},{},{},{t},{}", s.variance, s.stderr, s.variance / t);
    }
    w.write("covariance.csv", &csv)
}

fn run_spde(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let traj = simulate_spde(model, num.k_max, None, num.dt, num.t_end, key, true)?;
    let mut csv = String::from("time");
    for k in 1..=num.k_max {
        let _ = write!(csv, ",re_{k},im_{k}");
    }
    csv.push('\n');
    for field in traj.iter().step_by(num.record_every.max(1)) {
        let _ = write!(csv, "{}", field.time);
        for k in 1..=num.k_max as i64 {
            let c = field.coefficients[&k];
            let _ = write!(csv, ",{},{}", c.re, c.im);
        }
        csv.push('\n');
    }
    w.write("spde.csv", &csv)
}

fn run_lln(
    cfg: &ExperimentConfig,
    model: &Arc<PotentialSpec<f64>>,
    key: &StreamKey,
    w: &mut ArtifactWriter,
) -> Result<()> {
    let num = &cfg.numerics;
    let n_grid = num
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![32, 64, 128, 256, 512, 1024, 2048]);
    let rho_beta = reference_steady_state(model, num.grid_m, 1e-12)?;
    let result = lln_decay_experiment(
        model,
        &rho_beta,
        &n_grid,
        num.s,
        num.replicas,
        num.k_max,
        key,
        num.mcmc_step,
    )?;
    let mut csv = String::from("N,mean_sq_hminus_s,stderr\n");
    for row in &result.rows {
        let _ = writeln!(csv, "{},{},{}", row.n, row.mean_sq_norm, row.stderr);
    }
    w.write("lln.csv", &csv)?;
    #[derive(Serialize)]
    struct Summary {
        slope: f64,
        s: f64,
        k_max: usize,
    }
    w.write_json(
        "lln_summary.json",
        &Summary {
            slope: result.slope,
            s: result.s,
            k_max: result.k_max,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> (tempfile::TempDir, ExperimentConfig) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, json).unwrap();
        let cfg = ExperimentConfig::from_path(&path).unwrap();
        (dir, cfg)
    }

    #[test]
    fn phase_scan_run_emits_manifest_and_csv() {
        let (dir, cfg) = config(
            r#"{
            "experiment": "phase-scan",
            "model": {
                "domain": {"type": "torus"},
                "confining": {"type": "zero"},
                "interaction": {"type": "cosine-sum", "coeffs": [1.0]},
                "beta": 1.0
            },
            "numerics": {"grid_m": 64, "betas": {"start": 1.5, "stop": 2.5, "step": 0.5}},
            "seed": 7,
            "out": "results"
        }"#,
        );
        let manifest = run(&cfg, dir.path()).unwrap();
        assert!(!manifest.partial);
        assert!(manifest.files.iter().any(|f| f.name == "scan.csv"));
        let scan = std::fs::read_to_string(dir.path().join("results/scan.csv")).unwrap();
        assert!(scan.starts_with("beta,r,energy_gap,lambda1,converged\n"));
        assert!(dir.path().join("results/manifest.json").exists());
    }

    #[test]
    fn same_seed_same_checksums() {
        let json = r#"{
            "experiment": "simulate",
            "model": {
                "domain": {"type": "torus"},
                "confining": {"type": "zero"},
                "interaction": {"type": "cosine-sum", "coeffs": [1.0]},
                "beta": 1.0
            },
            "numerics": {"n": 16, "dt": 0.001, "t_end": 0.05, "grid_m": 32},
            "seed": 99
        }"#;
        let (dir_a, cfg_a) = config(json);
        let (dir_b, cfg_b) = config(json);
        let ma = run(&cfg_a, dir_a.path()).unwrap();
        let mb = run(&cfg_b, dir_b.path()).unwrap();
        let checks = |m: &Manifest| -> Vec<(String, String)> {
            m.files
                .iter()
                .map(|f| (f.name.clone(), f.sha256.clone()))
                .collect()
        };
        assert_eq!(checks(&ma), checks(&mb));
    }
}
