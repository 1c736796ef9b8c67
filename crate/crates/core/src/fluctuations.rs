//! Equilibrium fluctuation fields: extraction from particle ensembles,
//! the theoretical Gaussian covariance at the flat state, windowed empirical
//! mode statistics, the limiting SPDE by spectral Galerkin, and the
//! law-of-large-numbers decay experiment.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::meanfield::{linearized_spectrum_flat, GridDensity};
use crate::metrics::{fit_loglog_slope, hminus_s_norm};
use crate::model::PotentialSpec;
use crate::particle::{sample_gibbs, EmpiricalMeasure, GibbsScheme};
use crate::rng::StreamKey;
use crate::scalar::{rf, tf, Real};

/// Fourier modes of the fluctuation field `eta^N` on the torus,
/// `1 <= |k| <= k_max`, with conjugate symmetry (the field is real).
#[derive(Debug, Clone)]
pub struct FluctuationField<F: Real> {
    pub coefficients: BTreeMap<i64, Complex<F>>,
    pub n: usize,
    pub time: F,
}

impl<F: Real> FluctuationField<F> {
    pub fn zero(k_max: usize, n: usize) -> Self {
        let mut coefficients = BTreeMap::new();
        for k in 1..=k_max as i64 {
            coefficients.insert(k, Complex::new(F::zero(), F::zero()));
            coefficients.insert(-k, Complex::new(F::zero(), F::zero()));
        }
        Self {
            coefficients,
            n,
            time: F::zero(),
        }
    }

    /// Single excited mode `h_hat(k) = c`, `h_hat(-k) = conj(c)`.
    pub fn single_mode(k: i64, c: Complex<F>, k_max: usize, n: usize) -> Self {
        let mut field = Self::zero(k_max, n);
        field.coefficients.insert(k, c);
        field.coefficients.insert(-k, c.conj());
        field
    }

    pub fn k_max(&self) -> usize {
        self.coefficients
            .keys()
            .map(|k| k.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn conjugate_symmetry_defect(&self) -> F {
        let mut worst = F::zero();
        for (k, c) in &self.coefficients {
            if let Some(d) = self.coefficients.get(&-k) {
                worst = worst.max((*c - d.conj()).norm());
            }
        }
        worst
    }
}

/// `h_hat(k) = sqrt(N) [(1/N) sum_j e^{-2 pi i k X_j} - rho_beta_hat(k)]`.
pub fn compute_fluctuation_field<F: Real>(
    mu: &EmpiricalMeasure<F>,
    rho_beta: &GridDensity<F>,
    k_max: usize,
    time: F,
) -> Result<FluctuationField<F>> {
    if mu.dim != 1 || !rho_beta.grid.is_torus() {
        return Err(Error::UnsupportedModel(
            "fluctuation fields are defined on the one-dimensional torus".into(),
        ));
    }
    let scale = rf::<F>(mu.n as f64).sqrt();
    let mut coefficients = BTreeMap::new();
    for k in 1..=k_max as i64 {
        let c = (mu.fourier_mode(k) - rho_beta.fourier_mode(k)) * scale;
        coefficients.insert(k, c);
        coefficients.insert(-k, c.conj());
    }
    Ok(FluctuationField {
        coefficients,
        n: mu.n,
        time,
    })
}

/// Theoretical per-mode covariance weight at the flat state:
/// `c(k) = 1/(8 pi^2 (beta^-1 + W_hat(k)))`. The absolute normalization is
/// tied to the test-function pairing `Q_G(phi, psi)` of the limiting
/// Gaussian; variance RATIOS across modes are normalization-free.
pub fn stationary_covariance_theory<F: Real>(
    model: &PotentialSpec<F>,
    k_max: usize,
) -> Result<BTreeMap<i64, F>> {
    if !model.domain.is_torus() || !matches!(model.confining, crate::model::Confining::Zero) {
        return Err(Error::UnsupportedModel(
            "the stationary covariance formula needs the flat case (torus, V = 0)".into(),
        ));
    }
    let coef = model.fourier_coefficients(k_max)?;
    let eight_pi_sq = rf::<F>(2.0) * F::two_pi() * F::two_pi();
    let mut out = BTreeMap::new();
    for k in 1..=k_max {
        let denom = model.inv_beta() + coef[k];
        if denom <= F::zero() {
            return Err(Error::Coercivity {
                mode: k as i64,
                value: tf(denom),
            });
        }
        let c = F::one() / (eight_pi_sq * denom);
        out.insert(k as i64, c);
        out.insert(-(k as i64), c);
    }
    Ok(out)
}

/// Windowed statistics of one mode of a stationary run.
#[derive(Debug, Clone, Copy)]
pub struct ModeStats<F: Real> {
    pub mean: Complex<F>,
    pub variance: F,
    pub stderr: F,
    /// Integrated autocorrelation time in units of the sampling lag.
    pub tau: F,
}

/// Integrated autocorrelation time by the self-consistent window
/// (smallest window exceeding 5 tau).
fn integrated_autocorrelation<F: Real>(series: &[F]) -> F {
    let n = series.len();
    let mean = series.iter().copied().sum::<F>() / rf(n as f64);
    let var: F = series.iter().map(|x| (*x - mean) * (*x - mean)).sum::<F>() / rf(n as f64);
    if var <= F::zero() {
        return F::one();
    }
    let mut tau = F::one();
    for lag in 1..n / 2 {
        let mut acf = F::zero();
        for i in 0..n - lag {
            acf = acf + (series[i] - mean) * (series[i + lag] - mean);
        }
        acf = acf / (rf::<F>((n - lag) as f64) * var);
        tau = tau + rf::<F>(2.0) * acf;
        if rf::<F>(lag as f64) >= rf::<F>(5.0) * tau {
            break;
        }
    }
    tau.max(F::one())
}

/// Time-averaged per-mode mean and variance of a stationary fluctuation run,
/// with batch-means standard errors (batch length >= 10 autocorrelation
/// times). The run must cover at least 20 autocorrelation times.
pub fn empirical_mode_covariance<F: Real>(
    run: &[FluctuationField<F>],
    k_max: usize,
) -> Result<BTreeMap<i64, ModeStats<F>>> {
    if run.len() < 40 {
        return Err(Error::InsufficientData(format!(
            "run of {} fields is too short for windowed statistics",
            run.len()
        )));
    }
    let mut out = BTreeMap::new();
    for k in 1..=k_max as i64 {
        let series: Vec<Complex<F>> = run
            .iter()
            .map(|f| *f.coefficients.get(&k).unwrap_or(&Complex::new(F::zero(), F::zero())))
            .collect();
        let n = series.len();
        let nf = rf::<F>(n as f64);
        let mean = series
            .iter()
            .fold(Complex::new(F::zero(), F::zero()), |a, b| a + *b)
            / nf;
        let sq: Vec<F> = series.iter().map(|z| (*z - mean).norm_sqr()).collect();
        let variance = sq.iter().copied().sum::<F>() / nf;
        let tau = integrated_autocorrelation(&series.iter().map(|z| z.re).collect::<Vec<F>>());
        if rf::<F>(n as f64) < rf::<F>(20.0) * tau {
            return Err(Error::InsufficientData(format!(
                "mode {k}: run covers {n} samples < 20 autocorrelation times (tau = {tau})"
            )));
        }
        let batch_len = (tf(tau * rf(10.0)).ceil() as usize).max(2).min(n / 4);
        let n_batches = n / batch_len;
        let batch_means: Vec<F> = (0..n_batches)
            .map(|b| {
                sq[b * batch_len..(b + 1) * batch_len]
                    .iter()
                    .copied()
                    .sum::<F>()
                    / rf(batch_len as f64)
            })
            .collect();
        let bm = batch_means.iter().copied().sum::<F>() / rf(n_batches as f64);
        let bvar = batch_means
            .iter()
            .map(|x| (*x - bm) * (*x - bm))
            .sum::<F>()
            / rf((n_batches - 1).max(1) as f64);
        let stderr = (bvar / rf(n_batches as f64)).sqrt();
        out.insert(
            k,
            ModeStats {
                mean,
                variance,
                stderr,
                tau,
            },
        );
        out.insert(
            -k,
            ModeStats {
                mean: mean.conj(),
                variance,
                stderr,
                tau,
            },
        );
    }
    Ok(out)
}

/// Spectral-Galerkin simulation of the limiting SPDE: each complex mode is
/// an Ornstein-Uhlenbeck process `dh(k) = lambda_k h(k) dt + 2 pi |k| dxi_k`
/// integrated exactly per step; the complex noise has `E|dxi|^2 = dt`.
/// Conjugate symmetry is enforced by evolving k >= 1 and mirroring.
pub fn simulate_spde<F: Real>(
    model: &PotentialSpec<F>,
    k_max: usize,
    init: Option<&FluctuationField<F>>,
    dt: F,
    t_end: F,
    key: &StreamKey,
    with_noise: bool,
) -> Result<Vec<FluctuationField<F>>> {
    let lambdas = linearized_spectrum_flat(model, k_max)?;
    for (i, l) in lambdas.iter().enumerate() {
        if *l >= F::zero() {
            let k = (i + 1) as i64;
            return Err(Error::Coercivity {
                mode: k,
                value: tf(-*l),
            });
        }
    }
    let steps = (tf(t_end / dt)).round() as usize;
    let mut state: Vec<Complex<F>> = (1..=k_max as i64)
        .map(|k| match init {
            Some(f) => *f
                .coefficients
                .get(&k)
                .unwrap_or(&Complex::new(F::zero(), F::zero())),
            None => Complex::new(F::zero(), F::zero()),
        })
        .collect();
    let mut rngs: Vec<_> = (1..=k_max as u64).map(|k| key.stream("spde-mode", &[k])).collect();

    let snapshot = |state: &[Complex<F>], t: F| -> FluctuationField<F> {
        let mut coefficients = BTreeMap::new();
        for (i, c) in state.iter().enumerate() {
            let k = (i + 1) as i64;
            coefficients.insert(k, *c);
            coefficients.insert(-k, c.conj());
        }
        FluctuationField {
            coefficients,
            n: 0,
            time: t,
        }
    };

    let mut out = Vec::with_capacity(steps + 1);
    out.push(snapshot(&state, F::zero()));
    for s in 1..=steps {
        for (i, c) in state.iter_mut().enumerate() {
            let lambda = lambdas[i];
            let decay = (lambda * dt).exp();
            let mut next = *c * decay;
            if with_noise {
                let sigma = F::two_pi() * rf::<F>((i + 1) as f64);
                // stationary-consistent exact OU increment: per complex mode
                // E|eta|^2 = sigma^2 (1 - e^{2 lambda dt}) / (2 |lambda|)
                let var = sigma * sigma * (F::one() - decay * decay)
                    / (rf::<F>(2.0) * lambda.abs());
                let amp = (var / rf::<F>(2.0)).sqrt(); // per real component
                let g_re = F::standard_normal(&mut rngs[i]);
                let g_im = F::standard_normal(&mut rngs[i]);
                next = next + Complex::new(amp * g_re, amp * g_im);
            }
            *c = next;
        }
        out.push(snapshot(&state, dt * rf(s as f64)));
    }
    Ok(out)
}

/// One row of the law-of-large-numbers decay table.
#[derive(Debug, Clone, Copy)]
pub struct LlnRow<F: Real> {
    pub n: usize,
    pub mean_sq_norm: F,
    pub stderr: F,
}

#[derive(Debug, Clone)]
pub struct LlnResult<F: Real> {
    pub rows: Vec<LlnRow<F>>,
    pub slope: F,
    pub s: F,
    pub k_max: usize,
}

/// For each N, draw Gibbs-distributed configurations and average the squared
/// `H^{-s}` norm of `mu^N - rho_beta` over replicas; fits the log-log slope
/// across N.
#[allow(clippy::too_many_arguments)]
pub fn lln_decay_experiment<F: Real>(
    model: &Arc<PotentialSpec<F>>,
    rho_beta: &GridDensity<F>,
    n_grid: &[usize],
    s: F,
    replicas: usize,
    k_max: usize,
    key: &StreamKey,
    mcmc_step: F,
) -> Result<LlnResult<F>> {
    if tf(s) <= 1.5 {
        return Err(Error::Precondition(format!(
            "H^-s decay needs s > d/2 + 1 = 1.5, got {s}"
        )));
    }
    if !model.domain.is_torus() {
        return Err(Error::UnsupportedModel(
            "the decay experiment runs on the torus".into(),
        ));
    }
    if replicas < 8 {
        return Err(Error::InsufficientReplicas(replicas));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let run = sample_gibbs(
            model,
            n,
            replicas,
            GibbsScheme::Mala,
            mcmc_step,
            500,
            20,
            key,
            n as u64,
        )?;
        let mut norms = Vec::with_capacity(replicas);
        for sample in &run.samples {
            let mu = EmpiricalMeasure {
                points: sample.clone(),
                n,
                dim: 1,
            };
            let mut coeffs = BTreeMap::new();
            for k in 1..=k_max as i64 {
                let c = mu.fourier_mode(k) - rho_beta.fourier_mode(k);
                coeffs.insert(k, c);
                coeffs.insert(-k, c.conj());
            }
            let norm = hminus_s_norm(&coeffs, s)?;
            norms.push(norm * norm);
        }
        let r = rf::<F>(norms.len() as f64);
        let mean = norms.iter().copied().sum::<F>() / r;
        let var = norms.iter().map(|x| (*x - mean) * (*x - mean)).sum::<F>()
            / (r - F::one());
        rows.push(LlnRow {
            n,
            mean_sq_norm: mean,
            stderr: (var / r).sqrt(),
        });
    }
    let xs: Vec<F> = rows.iter().map(|r| rf(r.n as f64)).collect();
    let ys: Vec<F> = rows.iter().map(|r| r.mean_sq_norm).collect();
    let slope = fit_loglog_slope(&xs, &ys)?;
    Ok(LlnResult {
        rows,
        slope,
        s,
        k_max,
    })
}

/// Exact i.i.d. expectation of the squared truncated `H^{-s}` norm for
/// uniform samples (W = 0, V = 0): `(1/N) sum_{0 < |k| <= k_max} (1 + 4 pi^2 k^2)^{-s}`.
pub fn lln_iid_uniform_expectation<F: Real>(n: usize, s: F, k_max: usize) -> F {
    let four_pi_sq = F::two_pi() * F::two_pi();
    let mut acc = F::zero();
    for k in 1..=k_max {
        let ksq = rf::<F>((k * k) as f64);
        acc = acc + rf::<F>(2.0) * (F::one() + four_pi_sq * ksq).powf(-s);
    }
    acc / rf(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::Grid;
    use approx::assert_abs_diff_eq;

    fn key() -> StreamKey {
        StreamKey::new(2024)
    }

    #[test]
    fn field_from_quantile_particles_vanishes() {
        let flat = GridDensity::<f64>::flat(64);
        // particles exactly at the quantiles of the flat density
        let n = 64;
        let points: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
        let mu = EmpiricalMeasure { points, n, dim: 1 };
        let field = compute_fluctuation_field(&mu, &flat, 8, 0.0).unwrap();
        for (k, c) in &field.coefficients {
            assert!(c.norm() < 1e-10, "mode {k} should vanish, got {c}");
        }
    }

    #[test]
    fn field_single_particle_flat_reference() {
        let flat = GridDensity::<f64>::flat(64);
        let x0 = 0.3;
        let mu = EmpiricalMeasure {
            points: vec![x0],
            n: 1,
            dim: 1,
        };
        let field = compute_fluctuation_field(&mu, &flat, 4, 0.0).unwrap();
        for k in 1..=4i64 {
            let expected = Complex::from_polar(1.0, -std::f64::consts::TAU * k as f64 * x0);
            let got = field.coefficients[&k];
            assert_abs_diff_eq!((got - expected).norm(), 0.0, epsilon = 1e-12);
        }
        assert!(field.conjugate_symmetry_defect() < 1e-15);
    }

    #[test]
    fn field_rejects_non_torus_reference() {
        let line = GridDensity::gaussian_line(64, 8.0, 0.0, 1.0);
        let mu = EmpiricalMeasure {
            points: vec![0.0],
            n: 1,
            dim: 1,
        };
        assert!(compute_fluctuation_field(&mu, &line, 4, 0.0).is_err());
        assert!(matches!(line.grid, Grid::Line { .. }));
    }

    #[test]
    fn covariance_theory_values() {
        // W = 0: all modes equal 1/(8 pi^2 beta^-1)
        let free = PotentialSpec::<f64>::new(
            crate::model::Domain::Torus1d,
            crate::model::Confining::Zero,
            crate::model::Interaction::Zero,
            2.0,
        )
        .unwrap();
        let cov = stationary_covariance_theory(&free, 3).unwrap();
        let expected = 1.0 / (8.0 * std::f64::consts::PI.powi(2) * 0.5);
        for k in 1..=3i64 {
            assert_abs_diff_eq!(cov[&k], expected, epsilon = 1e-12);
            assert_abs_diff_eq!(cov[&-k], expected, epsilon = 1e-12);
        }
        // Kuramoto beta = 1, k = 1: 1/(8 pi^2 (1 - 1/2)) = 1/(4 pi^2)
        let kuramoto = PotentialSpec::<f64>::kuramoto(1.0);
        let cov = stationary_covariance_theory(&kuramoto, 2).unwrap();
        assert_abs_diff_eq!(
            cov[&1],
            1.0 / (4.0 * std::f64::consts::PI.powi(2)),
            epsilon = 1e-10
        );
        // mode 2 decouples (W_hat(2) = 0) and matches the free value
        assert_abs_diff_eq!(
            cov[&2],
            1.0 / (8.0 * std::f64::consts::PI.powi(2)),
            epsilon = 1e-10
        );
        // coercivity violation above the transition
        let super_critical = PotentialSpec::<f64>::kuramoto(3.0);
        assert!(matches!(
            stationary_covariance_theory(&super_critical, 2),
            Err(Error::Coercivity { mode: 1, .. })
        ));
    }

    #[test]
    fn spde_deterministic_decay_is_exact() {
        let model = PotentialSpec::<f64>::kuramoto(1.0);
        let k = 1i64;
        let init = FluctuationField::single_mode(k, Complex::new(1.0, 0.0), 3, 0);
        let dt = 0.01;
        let traj = simulate_spde(&model, 3, Some(&init), dt, 0.2, &key(), false).unwrap();
        let lambda = linearized_spectrum_flat(&model, 1).unwrap()[0];
        for field in &traj {
            let expected = (lambda * field.time).exp();
            let got = field.coefficients[&k].re;
            assert_abs_diff_eq!(got, expected, epsilon = 1e-10);
            // unexcited mode stays zero
            assert_abs_diff_eq!(field.coefficients[&2].norm(), 0.0, epsilon = 1e-14);
            assert!(field.conjugate_symmetry_defect() < 1e-14);
        }
    }

    #[test]
    fn spde_stationary_variance_matches_ou_oracle() {
        let model = PotentialSpec::<f64>::kuramoto(1.0);
        let k_max = 2;
        let dt = 0.002;
        let traj = simulate_spde(&model, k_max, None, dt, 60.0, &key(), true).unwrap();
        let lambdas = linearized_spectrum_flat(&model, k_max).unwrap();
        // discard the burn-in half, thin to roughly independent samples
        let tail: Vec<&FluctuationField<f64>> =
            traj.iter().skip(traj.len() / 2).step_by(50).collect();
        for k in 1..=k_max as i64 {
            let lambda: f64 = lambdas[(k - 1) as usize];
            let sigma = std::f64::consts::TAU * k as f64;
            let oracle = sigma * sigma / (2.0 * lambda.abs());
            let sq: Vec<f64> = tail.iter().map(|f| f.coefficients[&k].norm_sqr()).collect();
            let mean = sq.iter().sum::<f64>() / sq.len() as f64;
            let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                / (sq.len() as f64 - 1.0);
            let stderr = (var / sq.len() as f64).sqrt();
            assert!(
                (mean - oracle).abs() < 3.0 * stderr,
                "mode {k}: variance {mean} +- {stderr} vs oracle {oracle}"
            );
        }
        // cross-check: variance ratio across modes matches the theory ratio
        let theory = stationary_covariance_theory(&model, k_max).unwrap();
        let v: Vec<f64> = (1..=k_max as i64)
            .map(|k| {
                let sq: Vec<f64> =
                    tail.iter().map(|f| f.coefficients[&k].norm_sqr()).collect();
                sq.iter().sum::<f64>() / sq.len() as f64
            })
            .collect();
        let got_ratio = v[0] / v[1];
        let theory_ratio = theory[&1] / theory[&2];
        assert!(
            (got_ratio / theory_ratio - 1.0).abs() < 0.15,
            "ratio {got_ratio} vs theory {theory_ratio}"
        );
    }

    #[test]
    fn spde_rejects_supercritical_beta() {
        let model = PotentialSpec::<f64>::kuramoto(3.0);
        assert!(matches!(
            simulate_spde(&model, 2, None, 0.01, 1.0, &key(), true),
            Err(Error::Coercivity { .. })
        ));
    }

    #[test]
    fn empirical_mode_covariance_of_spde_run() {
        let model = PotentialSpec::<f64>::kuramoto(1.0);
        let traj = simulate_spde(&model, 2, None, 0.01, 200.0, &key(), true).unwrap();
        let tail: Vec<FluctuationField<f64>> =
            traj.into_iter().skip(2_000).step_by(5).collect();
        let stats = empirical_mode_covariance(&tail, 2).unwrap();
        for k in 1..=2i64 {
            let s = &stats[&k];
            // centred field at stationarity
            assert!(
                s.mean.norm() < 3.0 * (s.variance / (tail.len() as f64 / s.tau)).sqrt() + 0.05,
                "mode {k} mean {} too large",
                s.mean.norm()
            );
            assert!(s.variance > 0.0 && s.stderr > 0.0 && s.tau >= 1.0);
        }
        // variance ratio within 10% of theory
        let theory = stationary_covariance_theory(&model, 2).unwrap();
        let got = stats[&1].variance / stats[&2].variance;
        let want = theory[&1] / theory[&2];
        assert!(
            (got / want - 1.0).abs() < 0.2,
            "variance ratio {got} vs {want}"
        );
    }

    #[test]
    fn empirical_mode_covariance_needs_data() {
        let run: Vec<FluctuationField<f64>> =
            (0..10).map(|_| FluctuationField::zero(2, 8)).collect();
        assert!(matches!(
            empirical_mode_covariance(&run, 2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn lln_iid_uniform_matches_exact_expectation() {
        let model = Arc::new(
            PotentialSpec::<f64>::new(
                crate::model::Domain::Torus1d,
                crate::model::Confining::Zero,
                crate::model::Interaction::Zero,
                1.0,
            )
            .unwrap(),
        );
        let flat = GridDensity::flat(128);
        let result = lln_decay_experiment(
            &model,
            &flat,
            &[32, 128],
            2.0,
            48,
            16,
            &key(),
            0.25,
        )
        .unwrap();
        for row in &result.rows {
            let exact = lln_iid_uniform_expectation(row.n, 2.0, 16);
            assert!(
                (row.mean_sq_norm - exact).abs() < 3.0 * row.stderr,
                "N = {}: {} +- {} vs exact {}",
                row.n,
                row.mean_sq_norm,
                row.stderr,
                exact
            );
        }
        assert!((result.slope + 1.0).abs() < 0.4, "slope {}", result.slope);
    }

    #[test]
    fn lln_guards() {
        let model = Arc::new(PotentialSpec::<f64>::kuramoto(1.0));
        let flat = GridDensity::flat(64);
        assert!(matches!(
            lln_decay_experiment(&model, &flat, &[16], 1.0, 16, 8, &key(), 0.1),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            lln_decay_experiment(&model, &flat, &[16], 2.0, 2, 8, &key(), 0.1),
            Err(Error::InsufficientReplicas(_))
        ));
    }
}
