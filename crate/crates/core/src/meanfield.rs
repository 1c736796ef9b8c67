//! McKean-Vlasov PDE solver and mean-field analysis: grid densities,
//! free energy and dissipation, self-consistency fixed points, linearized
//! spectra, and phase-transition scans.
//!
//! Torus discretization is spectral (FFT convolution, semi-implicit
//! diffusion); the truncated line uses a Scharfetter-Gummel finite-volume
//! flux whose discrete steady state reproduces the Gibbs weights exactly.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{Confining, Domain, PotentialSpec};
use crate::scalar::{rf, tf, Real};

/// Default number of grid nodes.
pub const DEFAULT_GRID_M: usize = 256;
/// Mass drift tolerance per the density invariant.
pub const MASS_TOL: f64 = 1e-10;

/// Spatial grid: equispaced nodes on the torus [0,1) or line [-L, L].
#[derive(Debug, Clone, PartialEq)]
pub enum Grid<F: Real> {
    Torus { m: usize },
    Line { m: usize, half_width: F },
}

impl<F: Real> Grid<F> {
    pub fn len(&self) -> usize {
        match self {
            Grid::Torus { m } | Grid::Line { m, .. } => *m,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Grid::Torus { .. })
    }

    pub fn dx(&self) -> F {
        match self {
            Grid::Torus { m } => F::one() / rf(*m as f64),
            Grid::Line { m, half_width } => rf::<F>(2.0) * *half_width / rf(*m as f64),
        }
    }

    /// Node coordinate (cell center on the line).
    pub fn x(&self, i: usize) -> F {
        match self {
            Grid::Torus { m } => rf::<F>(i as f64) / rf(*m as f64),
            Grid::Line { m: _, half_width } => {
                -*half_width + self.dx() * (rf::<F>(i as f64) + rf(0.5))
            }
        }
    }

    pub fn for_model(model: &PotentialSpec<F>, m: usize) -> Result<Self> {
        match &model.domain {
            Domain::Torus1d => Ok(Grid::Torus { m }),
            Domain::Line1d { half_width } => Ok(Grid::Line {
                m,
                half_width: *half_width,
            }),
            Domain::Box { .. } => Err(Error::UnsupportedModel(
                "grid densities are one-dimensional (torus or line)".into(),
            )),
        }
    }
}

/// Discretized probability density on a 1-d grid; values are cell averages
/// and `sum(values) * dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity<F: Real> {
    pub grid: Grid<F>,
    pub values: Vec<F>,
}

impl<F: Real> GridDensity<F> {
    pub fn new(grid: Grid<F>, values: Vec<F>) -> Result<Self> {
        let m = grid.len();
        if values.len() != m {
            return Err(Error::Config(format!(
                "grid has {m} nodes but {} values supplied",
                values.len()
            )));
        }
        if !m.is_power_of_two() || m < 8 {
            return Err(Error::Config(format!(
                "grid size must be a power of two >= 8, got {m}"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::Config("density values must be finite and >= 0".into()));
        }
        let mut rho = Self { grid, values };
        let mass = rho.mass();
        if mass <= F::zero() {
            return Err(Error::Config("density has zero mass".into()));
        }
        if (mass - F::one()).abs() > rf(MASS_TOL) {
            rho.normalize();
        }
        Ok(rho)
    }

    /// Uniform density on the torus.
    pub fn flat(m: usize) -> Self {
        Self {
            grid: Grid::Torus { m },
            values: vec![F::one(); m],
        }
    }

    /// Flat state plus `amp * cos(2 pi k (x - phase))`, clipped nonnegative.
    pub fn perturbed_flat(m: usize, amp: F, k: usize, phase: F) -> Self {
        let grid = Grid::Torus { m };
        let values: Vec<F> = (0..m)
            .map(|i| {
                let x = grid.x(i);
                (F::one() + amp * (F::two_pi() * rf(k as f64) * (x - phase)).cos()).max(F::zero())
            })
            .collect();
        let mut rho = Self { grid, values };
        rho.normalize();
        rho
    }

    /// Discretized Gaussian on a line grid.
    pub fn gaussian_line(m: usize, half_width: F, mean: F, variance: F) -> Self {
        let grid = Grid::Line { m, half_width };
        let values: Vec<F> = (0..m)
            .map(|i| {
                let z = grid.x(i) - mean;
                (-z * z / (rf::<F>(2.0) * variance)).exp()
            })
            .collect();
        let mut rho = Self { grid, values };
        rho.normalize();
        rho
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dx(&self) -> F {
        self.grid.dx()
    }

    pub fn mass(&self) -> F {
        self.values.iter().copied().sum::<F>() * self.dx()
    }

    pub fn normalize(&mut self) {
        let mass = self.mass();
        for v in &mut self.values {
            *v = *v / mass;
        }
    }

    /// Fourier mode rho_hat(k) = dx * sum_j rho_j e^{-2 pi i k x_j} (torus).
    pub fn fourier_mode(&self, k: i64) -> Complex<F> {
        let dx = self.dx();
        let mut acc = Complex::new(F::zero(), F::zero());
        for (i, v) in self.values.iter().enumerate() {
            let phase = -F::two_pi() * rf::<F>(k as f64) * self.grid.x(i);
            acc = acc + Complex::new(phase.cos(), phase.sin()) * *v;
        }
        acc * dx
    }

    /// Magnitude of the first Fourier mode; nonzero signals clustering.
    pub fn order_parameter(&self) -> F {
        self.fourier_mode(1).norm()
    }

    pub fn l1_distance(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (*a - *b).abs())
            .sum::<F>()
            * self.dx()
    }

    pub fn sup_distance(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), |a, b| a.max(b))
    }

    /// Differential entropy term `sum rho log rho dx` with 0 log 0 := 0.
    pub fn neg_entropy(&self) -> F {
        self.values
            .iter()
            .map(|v| if *v > F::zero() { *v * v.ln() } else { F::zero() })
            .sum::<F>()
            * self.dx()
    }

    /// Quantile function by linear interpolation of the piecewise-constant
    /// CDF; q in [0, 1).
    pub fn quantile(&self, q: F) -> F {
        let dx = self.dx();
        let target = q;
        let mut acc = F::zero();
        for (i, v) in self.values.iter().enumerate() {
            let cell = *v * dx;
            if acc + cell >= target || i + 1 == self.values.len() {
                let frac = if cell > F::zero() {
                    ((target - acc) / cell).max(F::zero()).min(F::one())
                } else {
                    F::zero()
                };
                let left = match &self.grid {
                    Grid::Torus { .. } => self.grid.x(i),
                    Grid::Line { .. } => self.grid.x(i) - dx / rf(2.0),
                };
                return left + frac * dx;
            }
            acc = acc + cell;
        }
        self.grid.x(self.values.len() - 1)
    }

    /// Inverse-CDF sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        self.quantile(F::uniform_01(rng))
    }

    /// Linear interpolation of the density values at an arbitrary point.
    pub fn interp(&self, x: F) -> F {
        interp_grid(&self.grid, &self.values, x)
    }
}

/// Linear interpolation on a grid-indexed table (periodic on the torus,
/// clamped on the line).
pub fn interp_grid<F: Real>(grid: &Grid<F>, table: &[F], x: F) -> F {
    let m = grid.len();
    let dx = grid.dx();
    match grid {
        Grid::Torus { .. } => {
            let mut t = x - x.floor();
            t = t / dx;
            let i = t.floor().to_usize().unwrap_or(0).min(m - 1);
            let frac = t - rf(i as f64);
            let j = (i + 1) % m;
            table[i] * (F::one() - frac) + table[j] * frac
        }
        Grid::Line { half_width, .. } => {
            let t = (x + *half_width) / dx - rf(0.5);
            if t <= F::zero() {
                return table[0];
            }
            let i = t.floor().to_usize().unwrap_or(0);
            if i + 1 >= m {
                return table[m - 1];
            }
            let frac = t - rf(i as f64);
            table[i] * (F::one() - frac) + table[i + 1] * frac
        }
    }
}

fn fft<F: Real>(values: &mut [Complex<F>], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(values.len())
    } else {
        planner.plan_fft_forward(values.len())
    };
    plan.process(values);
}

/// Circular convolution `(profile * rho)(x_i) = dx sum_j profile(x_i - x_j) rho_j`
/// via FFT on the torus, direct summation on the line.
pub fn convolve_profile<F: Real>(
    rho: &GridDensity<F>,
    profile: impl Fn(F) -> F,
) -> Vec<F> {
    let m = rho.len();
    let dx = rho.dx();
    match &rho.grid {
        Grid::Torus { .. } => {
            let mut w: Vec<Complex<F>> = (0..m)
                .map(|j| {
                    let mut r = rf::<F>(j as f64) * dx;
                    r = r - r.round(); // min-image displacement
                    Complex::new(profile(r), F::zero())
                })
                .collect();
            let mut r: Vec<Complex<F>> = rho
                .values
                .iter()
                .map(|v| Complex::new(*v, F::zero()))
                .collect();
            fft(&mut w, false);
            fft(&mut r, false);
            for (a, b) in r.iter_mut().zip(w.iter()) {
                *a = *a * *b;
            }
            fft(&mut r, true);
            let scale = dx / rf(m as f64);
            r.into_iter().map(|c| c.re * scale).collect()
        }
        Grid::Line { .. } => (0..m)
            .map(|i| {
                let xi = rho.grid.x(i);
                rho.values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| profile(xi - rho.grid.x(j)) * *v)
                    .sum::<F>()
                    * dx
            })
            .collect(),
    }
}

/// `W * rho` on the grid (raw profile).
pub fn conv_w<F: Real>(model: &PotentialSpec<F>, rho: &GridDensity<F>) -> Vec<F> {
    convolve_profile(rho, |r| model.interaction.profile(r))
}

/// `(grad_1 W) * rho` on the grid.
pub fn conv_grad_w<F: Real>(model: &PotentialSpec<F>, rho: &GridDensity<F>) -> Vec<F> {
    convolve_profile(rho, |r| model.interaction.profile_grad(r))
}

/// `|grad_1 W|^2 * rho` on the grid.
pub fn conv_grad_w_sq<F: Real>(model: &PotentialSpec<F>, rho: &GridDensity<F>) -> Vec<F> {
    convolve_profile(rho, |r| {
        let g = model.interaction.profile_grad(r);
        g * g
    })
}

/// Total drift field u = grad V + grad(W * rho) on the grid.
pub fn drift_field<F: Real>(model: &PotentialSpec<F>, rho: &GridDensity<F>) -> Vec<F> {
    let mut u = conv_grad_w(model, rho);
    for (i, ui) in u.iter_mut().enumerate() {
        *ui = *ui + model.confining.grad(rho.grid.x(i));
    }
    u
}

/// One step of `d_t rho = beta^-1 Lap rho + div(rho (grad V + grad W * rho))`.
pub fn mckean_vlasov_step<F: Real>(
    rho: &GridDensity<F>,
    model: &PotentialSpec<F>,
    dt: F,
) -> Result<GridDensity<F>> {
    if !(dt > F::zero()) {
        return Err(Error::StepSize(format!("dt must be positive, got {dt}")));
    }
    let m = rho.len();
    let dx = rho.dx();
    let inv_beta = model.inv_beta();
    let u = drift_field(model, rho);
    let u_max = u.iter().fold(F::zero(), |a, b| a.max(b.abs()));
    if u_max * dt / dx > F::one() {
        return Err(Error::StepSize(format!(
            "CFL violation: max|drift| dt / dx = {} > 1",
            tf(u_max * dt / dx)
        )));
    }

    let mut next = match &rho.grid {
        Grid::Torus { .. } => {
            // Explicit spectral transport in flux form, implicit diffusion.
            let mut flux: Vec<Complex<F>> = rho
                .values
                .iter()
                .zip(u.iter())
                .map(|(r, ui)| Complex::new(*r * *ui, F::zero()))
                .collect();
            let mut rho_hat: Vec<Complex<F>> = rho
                .values
                .iter()
                .map(|v| Complex::new(*v, F::zero()))
                .collect();
            fft(&mut flux, false);
            fft(&mut rho_hat, false);
            for j in 0..m {
                let k = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
                let omega = F::two_pi() * rf::<F>(k);
                // d/dx -> multiplication by i omega
                let dflux = Complex::new(F::zero(), omega) * flux[j];
                let denom = F::one() + dt * inv_beta * omega * omega;
                rho_hat[j] = (rho_hat[j] + dflux * dt) / Complex::new(denom, F::zero());
            }
            fft(&mut rho_hat, true);
            let scale = F::one() / rf(m as f64);
            rho_hat.into_iter().map(|c| c.re * scale).collect::<Vec<F>>()
        }
        Grid::Line { .. } => {
            // Scharfetter-Gummel finite volume, no-flux boundary. The
            // discrete steady state matches the Gibbs weights exactly.
            if inv_beta > F::zero() {
                let diff_cfl = dt * inv_beta / (dx * dx);
                if diff_cfl > rf(0.5) {
                    return Err(Error::StepSize(format!(
                        "diffusive CFL violation: beta^-1 dt / dx^2 = {} > 0.5",
                        tf(diff_cfl)
                    )));
                }
            }
            let mut flux = vec![F::zero(); m + 1]; // faces, zero at both ends
            for f in 1..m {
                // face between cells f-1 and f
                let u_face = (u[f - 1] + u[f]) / rf(2.0);
                if inv_beta > F::zero() {
                    // flux = -beta^-1 d_x rho - rho u, advection velocity -u
                    let pe = -u_face * dx / inv_beta;
                    let (bm, bp) = bernoulli_pair(pe);
                    flux[f] = inv_beta / dx * (bm * rho.values[f - 1] - bp * rho.values[f]);
                } else {
                    // pure transport: upwind on velocity -u
                    let v = -u_face;
                    flux[f] = if v >= F::zero() {
                        v * rho.values[f - 1]
                    } else {
                        v * rho.values[f]
                    };
                }
            }
            (0..m)
                .map(|i| rho.values[i] - dt / dx * (flux[i + 1] - flux[i]))
                .collect::<Vec<F>>()
        }
    };

    // Clip tiny negatives from the spectral step, then renormalize.
    for v in &mut next {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    let mut out = GridDensity {
        grid: rho.grid.clone(),
        values: next,
    };
    out.normalize();
    Ok(out)
}

/// Bernoulli-function pair (B(-pe), B(pe)) with B(x) = x / (e^x - 1).
fn bernoulli_pair<F: Real>(pe: F) -> (F, F) {
    let abs = pe.abs();
    if abs < rf(1e-8) {
        let half = pe / rf(2.0);
        (F::one() + half, F::one() - half)
    } else {
        let b_plus = pe / (pe.exp() - F::one());
        (b_plus + pe, b_plus)
    }
}

/// Mean-field free energy `beta^-1 int rho log rho + 1/2 iint W drho drho + int V drho`.
pub fn free_energy<F: Real>(rho: &GridDensity<F>, model: &PotentialSpec<F>) -> F {
    let dx = rho.dx();
    let entropy = model.inv_beta() * rho.neg_entropy();
    let wconv = conv_w(model, rho);
    let mut inter = F::zero();
    let mut conf = F::zero();
    for (i, v) in rho.values.iter().enumerate() {
        inter = inter + wconv[i] * *v;
        conf = conf + model.confining.value(rho.grid.x(i)) * *v;
    }
    entropy + inter * dx / rf(2.0) + conf * dx
}

/// Energy per particle of the product law `rho^{tensor N}`:
/// `beta^-1 int rho log rho + int V rho + (1 - 1/N)/2 iint W drho drho`.
pub fn energy_per_particle_product<F: Real>(
    rho: &GridDensity<F>,
    model: &PotentialSpec<F>,
    n: usize,
) -> F {
    let dx = rho.dx();
    let entropy = model.inv_beta() * rho.neg_entropy();
    let wconv = conv_w(model, rho);
    let mut inter = F::zero();
    let mut conf = F::zero();
    for (i, v) in rho.values.iter().enumerate() {
        inter = inter + wconv[i] * *v;
        conf = conf + model.confining.value(rho.grid.x(i)) * *v;
    }
    let factor = (F::one() - F::one() / rf(n as f64)) / rf(2.0);
    entropy + conf * dx + factor * inter * dx
}

/// Free-energy dissipation `int |beta^-1 grad log rho + grad W * rho + grad V|^2 rho`.
pub fn dissipation<F: Real>(rho: &GridDensity<F>, model: &PotentialSpec<F>) -> Result<F> {
    let m = rho.len();
    let dx = rho.dx();
    let inv_beta = model.inv_beta();
    if rho.grid.is_torus() {
        if let Some(node) = rho.values.iter().position(|v| *v <= F::zero()) {
            return Err(Error::Positivity { node });
        }
    }
    let u = drift_field(model, rho);
    let floor = rf::<F>(1e-15);
    let mut acc = F::zero();
    for i in 0..m {
        let v = rho.values[i];
        if v < floor {
            continue;
        }
        // centered difference of rho (periodic wrap on the torus)
        let (prev, next) = if rho.grid.is_torus() {
            (rho.values[(i + m - 1) % m], rho.values[(i + 1) % m])
        } else {
            if i == 0 || i + 1 == m {
                continue; // negligible boundary cells on the truncated line
            }
            (rho.values[i - 1], rho.values[i + 1])
        };
        let drho = (next - prev) / (rf::<F>(2.0) * dx);
        let g = inv_beta * drho / v + u[i];
        acc = acc + g * g * v;
    }
    Ok(acc * dx)
}

/// Gibbs map `G(rho) = exp(-beta (W * rho + V)) / Z` (overflow-safe).
pub fn gibbs_map<F: Real>(rho: &GridDensity<F>, model: &PotentialSpec<F>) -> GridDensity<F> {
    let m = rho.len();
    let dx = rho.dx();
    let wconv = conv_w(model, rho);
    let mut exponent: Vec<F> = (0..m)
        .map(|i| -model.beta * (wconv[i] + model.confining.value(rho.grid.x(i))))
        .collect();
    let max = exponent.iter().copied().fold(F::neg_infinity(), F::max);
    let mut z = F::zero();
    for e in &mut exponent {
        *e = (*e - max).exp();
        z = z + *e;
    }
    z = z * dx;
    GridDensity {
        grid: rho.grid.clone(),
        values: exponent.into_iter().map(|e| e / z).collect(),
    }
}

/// Residual image `T(rho) = rho - G(rho)` of the self-consistency map.
pub fn self_consistency_map<F: Real>(
    rho: &GridDensity<F>,
    model: &PotentialSpec<F>,
) -> Vec<F> {
    let g = gibbs_map(rho, model);
    rho.values
        .iter()
        .zip(g.values.iter())
        .map(|(a, b)| *a - *b)
        .collect()
}

/// Sup norm of the self-consistency residual.
pub fn self_consistency_residual<F: Real>(rho: &GridDensity<F>, model: &PotentialSpec<F>) -> F {
    self_consistency_map(rho, model)
        .iter()
        .fold(F::zero(), |a, b| a.max(b.abs()))
}

/// Result of the damped fixed-point iteration.
#[derive(Debug, Clone)]
pub struct SteadyState<F: Real> {
    pub density: GridDensity<F>,
    pub iterations: usize,
    pub residuals: Vec<F>,
    pub converged: bool,
}

/// Damped fixed point `rho <- (1 - theta) rho + theta G(rho)` until the
/// sup-norm residual drops below `tol`. Non-convergence is a result, not
/// an error.
pub fn find_steady_state<F: Real>(
    model: &PotentialSpec<F>,
    init: &GridDensity<F>,
    theta: F,
    tol: F,
    max_iter: usize,
) -> SteadyState<F> {
    assert!(theta > F::zero() && theta <= F::one(), "damping in (0, 1]");
    let mut rho = init.clone();
    let mut residuals = Vec::new();
    for iter in 1..=max_iter {
        let g = gibbs_map(&rho, model);
        let res = rho.sup_distance(&g);
        residuals.push(res);
        for (v, gv) in rho.values.iter_mut().zip(g.values.iter()) {
            *v = (F::one() - theta) * *v + theta * *gv;
        }
        rho.normalize();
        if res < tol {
            return SteadyState {
                density: rho,
                iterations: iter,
                residuals,
                converged: true,
            };
        }
    }
    SteadyState {
        density: rho,
        iterations: max_iter,
        residuals,
        converged: false,
    }
}

fn require_flat_case<F: Real>(model: &PotentialSpec<F>) -> Result<()> {
    if !model.domain.is_torus() {
        return Err(Error::UnsupportedModel(
            "flat-state analysis needs the torus domain".into(),
        ));
    }
    if !matches!(model.confining, Confining::Zero) {
        return Err(Error::UnsupportedModel(
            "flat-state analysis needs V = 0".into(),
        ));
    }
    Ok(())
}

/// Eigenvalues of the McKean-Vlasov linearisation at the flat state:
/// `lambda_k = -4 pi^2 k^2 (beta^-1 + W_hat(k))` for 1 <= k <= k_max.
pub fn linearized_spectrum_flat<F: Real>(
    model: &PotentialSpec<F>,
    k_max: usize,
) -> Result<Vec<F>> {
    require_flat_case(model)?;
    let coef = model.fourier_coefficients(k_max)?;
    let four_pi_sq = F::two_pi() * F::two_pi();
    Ok((1..=k_max)
        .map(|k| {
            let ksq = rf::<F>((k * k) as f64);
            -four_pi_sq * ksq * (model.inv_beta() + coef[k])
        })
        .collect())
}

/// Dense discretization of the linearised operator at the flat state,
/// restricted to mean-zero functions: `L h = beta^-1 h'' + (W * h)''`,
/// assembled with centered second differences and trapezoid convolution.
/// Constants are deflated far into the negative spectrum.
pub fn linearized_matrix_flat(model: &PotentialSpec<f64>, m: usize) -> Result<DMatrix<f64>> {
    require_flat_case(model)?;
    let dx = 1.0 / m as f64;
    let inv_beta = model.inv_beta();
    // inner matrix: (beta^-1 I + C) with C_{ij} = w(x_i - x_j) dx
    let mut inner = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        inner[(i, i)] += inv_beta;
        for j in 0..m {
            let mut r = (i as f64 - j as f64) * dx;
            r -= r.round();
            inner[(i, j)] += model.interaction.profile(r) * dx;
        }
    }
    // periodic centered second difference
    let mut d2 = DMatrix::<f64>::zeros(m, m);
    let c = 1.0 / (dx * dx);
    for i in 0..m {
        d2[(i, i)] = -2.0 * c;
        d2[(i, (i + 1) % m)] += c;
        d2[(i, (i + m - 1) % m)] += c;
    }
    let mut l = d2 * inner;
    // project out constants and deflate them to -1e6
    let p = DMatrix::<f64>::identity(m, m) - DMatrix::<f64>::from_element(m, m, 1.0 / m as f64);
    l = &p * l * &p;
    l -= DMatrix::<f64>::from_element(m, m, 1e6 / m as f64);
    Ok(l)
}

/// Leading (largest real part) eigenvalue of the discretized flat-state
/// linearisation; for beta near the threshold this is the k = +-1 mode.
pub fn flat_leading_eigenvalue_grid(model: &PotentialSpec<f64>, m: usize) -> Result<f64> {
    let l = linearized_matrix_flat(model, m)?;
    let eigs = l.complex_eigenvalues();
    Ok(eigs.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Report of the structural properties of the flat case.
#[derive(Debug, Clone)]
pub struct PropertiesReport<F: Real> {
    /// Spectral gap of the linearisation (Property A).
    pub a: bool,
    /// Trivial kernel of the linearisation (Property B).
    pub b: bool,
    pub beta_sharp: F,
    /// A critical point that is not a minimiser, if the multi-start search
    /// found one (violates positivity of the limiting LSI constant).
    pub c_witness: Option<GridDensity<F>>,
    /// All converged steady states found by the multi-start search.
    pub steady_states: Vec<GridDensity<F>>,
}

/// Multi-start protocol for steady states: flat, flat +- first harmonic,
/// and four random-phase perturbations.
pub fn multi_start_steady_states<F: Real>(
    model: &PotentialSpec<F>,
    m: usize,
    tol: F,
    seed: u64,
) -> Vec<SteadyState<F>> {
    let key = crate::rng::StreamKey::new(seed);
    let mut rng = key.stream("steady-state-multistart", &[]);
    let mut inits = vec![
        GridDensity::flat(m),
        GridDensity::perturbed_flat(m, rf(0.1), 1, F::zero()),
        GridDensity::perturbed_flat(m, rf(-0.1), 1, F::zero()),
    ];
    for _ in 0..4 {
        let phase = F::uniform_01(&mut rng);
        let amp = rf::<F>(0.05) + rf::<F>(0.2) * F::uniform_01(&mut rng);
        inits.push(GridDensity::perturbed_flat(m, amp, 1, phase));
    }
    inits
        .iter()
        .map(|init| find_steady_state(model, init, rf(0.5), tol, 5000))
        .collect()
}

/// Evaluate Properties A and B through the spectral threshold and search
/// for a Property-C violation witness (a non-minimising critical point).
pub fn check_properties<F: Real>(
    model: &PotentialSpec<F>,
    k_max: usize,
    m: usize,
    seed: u64,
) -> Result<PropertiesReport<F>> {
    require_flat_case(model)?;
    let beta_sharp = model.beta_sharp(k_max)?;
    let linear_ok = model.beta < beta_sharp;
    let tol = rf::<F>(1e-10);
    let runs = multi_start_steady_states(model, m, tol, seed);
    let converged: Vec<GridDensity<F>> = runs
        .into_iter()
        .filter(|r| r.converged)
        .map(|r| r.density)
        .collect();
    let energies: Vec<F> = converged.iter().map(|d| free_energy(d, model)).collect();
    let min_energy = energies
        .iter()
        .copied()
        .fold(F::infinity(), F::min);
    let gap_tol = rf::<F>(1e-6);
    let witness = converged
        .iter()
        .zip(energies.iter())
        .find(|(_, e)| **e > min_energy + gap_tol)
        .map(|(d, _)| d.clone());
    Ok(PropertiesReport {
        a: linear_ok,
        b: linear_ok,
        beta_sharp,
        c_witness: witness,
        steady_states: converged,
    })
}

/// One row of the phase-transition scan.
#[derive(Debug, Clone)]
pub struct ScanRow<F: Real> {
    pub beta: F,
    pub order_parameter: F,
    pub energy_gap: F,
    pub lambda1: F,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ScanResult<F: Real> {
    pub rows: Vec<ScanRow<F>>,
    pub estimated_beta_c: Option<F>,
}

/// Sweep beta, relaxing a perturbed flat state to a steady state at each
/// value; the estimated critical temperature is the first grid beta whose
/// order parameter exceeds 10x the fixed-point tolerance.
pub fn scan_phase_transition<F: Real>(
    model: &PotentialSpec<F>,
    betas: &[F],
    perturbation: F,
    m: usize,
) -> Result<ScanResult<F>> {
    require_flat_case(model)?;
    let tol = rf::<F>(1e-8);
    let threshold = rf::<F>(10.0) * tol;
    let flat = GridDensity::flat(m);
    let mut rows = Vec::with_capacity(betas.len());
    let mut estimated = None;
    for &beta in betas {
        let spec = PotentialSpec::new(
            model.domain.clone(),
            model.confining.clone(),
            model.interaction.clone(),
            beta,
        )?;
        let init = GridDensity::perturbed_flat(m, perturbation, 1, F::zero());
        // the damped fixed-point gain on mode k is (1 - theta) - theta beta
        // W_hat(k); positive Fourier modes (H-stable part) need extra damping
        // at large beta to stay contractive
        let wmax = spec
            .fourier_coefficients(crate::model::DEFAULT_K_MAX)?
            .iter()
            .skip(1)
            .fold(F::zero(), |a, c| a.max(*c));
        let theta = rf::<F>(0.5).min(F::one() / (F::one() + beta * wmax));
        let run = find_steady_state(&spec, &init, theta, tol, 5000);
        let r = run.density.order_parameter();
        let energy_gap = free_energy(&flat, &spec) - free_energy(&run.density, &spec);
        let lambda1 = linearized_spectrum_flat(&spec, 1)?[0];
        if estimated.is_none() && run.converged && r > threshold {
            estimated = Some(beta);
        }
        rows.push(ScanRow {
            beta,
            order_parameter: r,
            energy_gap,
            lambda1,
            converged: run.converged,
        });
    }
    Ok(ScanResult {
        rows,
        estimated_beta_c: estimated,
    })
}

/// Mean-field trajectory with precomputed drift grids, consumed by the
/// synchronous coupling and the Gronwall bound.
#[derive(Debug, Clone)]
pub struct MeanFieldFlow<F: Real> {
    pub times: Vec<F>,
    pub densities: Vec<GridDensity<F>>,
    drift_grids: Vec<Vec<F>>,
}

impl<F: Real> MeanFieldFlow<F> {
    pub fn new(model: &PotentialSpec<F>, times: Vec<F>, densities: Vec<GridDensity<F>>) -> Self {
        assert_eq!(times.len(), densities.len());
        assert!(!times.is_empty());
        let drift_grids = densities.iter().map(|d| conv_grad_w(model, d)).collect();
        Self {
            times,
            densities,
            drift_grids,
        }
    }

    /// Evolve `rho0` to `t_end`, recording every `record_every` steps.
    pub fn evolve(
        model: &PotentialSpec<F>,
        rho0: GridDensity<F>,
        dt: F,
        t_end: F,
        record_every: usize,
    ) -> Result<Self> {
        let steps = (tf(t_end / dt)).round() as usize;
        let mut times = vec![F::zero()];
        let mut densities = vec![rho0.clone()];
        let mut rho = rho0;
        for s in 1..=steps {
            rho = mckean_vlasov_step(&rho, model, dt)?;
            if s % record_every.max(1) == 0 || s == steps {
                times.push(dt * rf(s as f64));
                densities.push(rho.clone());
            }
        }
        Ok(Self::new(model, times, densities))
    }

    pub fn t_end(&self) -> F {
        *self.times.last().unwrap()
    }

    pub fn initial(&self) -> &GridDensity<F> {
        &self.densities[0]
    }

    /// Density snapshot nearest to `t`.
    pub fn density_at(&self, t: F) -> &GridDensity<F> {
        let idx = self.nearest_index(t);
        &self.densities[idx]
    }

    fn nearest_index(&self, t: F) -> usize {
        let mut best = 0;
        let mut dist = F::infinity();
        for (i, ti) in self.times.iter().enumerate() {
            let d = (*ti - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Mean-field drift `-(grad V + grad W * rho(t))(y)`; linear in time
    /// between snapshots, linear in space on the grid.
    pub fn drift(&self, model: &PotentialSpec<F>, t: F, y: F) -> Result<F> {
        let n = self.times.len();
        if t < self.times[0] - rf(1e-9) || t > self.t_end() + rf(1e-9) {
            return Err(Error::Config(format!(
                "time {t} outside the mean-field flow range [{}, {}]",
                self.times[0],
                self.t_end()
            )));
        }
        // first index with times[hi] >= t
        let mut lo_idx = 0usize;
        let mut hi = n - 1;
        if self.times[0] >= t {
            hi = 0;
        } else {
            while hi - lo_idx > 1 {
                let mid = (lo_idx + hi) / 2;
                if self.times[mid] >= t {
                    hi = mid;
                } else {
                    lo_idx = mid;
                }
            }
        }
        let conv = if hi == 0 {
            interp_grid(&self.densities[0].grid, &self.drift_grids[0], y)
        } else {
            let lo = hi - 1;
            let span = self.times[hi] - self.times[lo];
            let frac = if span > F::zero() {
                ((t - self.times[lo]) / span).max(F::zero()).min(F::one())
            } else {
                F::one()
            };
            let a = interp_grid(&self.densities[lo].grid, &self.drift_grids[lo], y);
            let b = interp_grid(&self.densities[hi].grid, &self.drift_grids[hi], y);
            a * (F::one() - frac) + b * frac
        };
        Ok(-(model.confining.grad(y) + conv))
    }

    /// `sup_t (int |grad_1 W|^2 * rho(t) rho(t) dx)^{1/2}` over the recorded
    /// trajectory; the `S` entering the Gronwall bound.
    pub fn interaction_l2_sup(&self, model: &PotentialSpec<F>) -> F {
        let mut sup = F::zero();
        for rho in &self.densities {
            let conv = conv_grad_w_sq(model, rho);
            let dx = rho.dx();
            let val = conv
                .iter()
                .zip(rho.values.iter())
                .map(|(c, v)| *c * *v)
                .sum::<F>()
                * dx;
            sup = sup.max(val.max(F::zero()).sqrt());
        }
        sup
    }
}
