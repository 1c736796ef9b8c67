//! Potential families: confining potential `V`, pairwise interaction `W`,
//! their gradients, convexity constants, Fourier data, and the spectral
//! threshold `beta_sharp` at which the flat state loses linear stability.

use crate::error::{Error, Result};
use crate::scalar::{rf, tf, Real};

pub mod spline;

use spline::CubicSpline;

/// Number of quadrature nodes for non-analytic Fourier coefficients.
const FOURIER_QUAD_NODES: usize = 4096;
/// Default mode cutoff; every built-in family is band-limited far below this.
pub const DEFAULT_K_MAX: usize = 64;
/// Tolerance for the H-stability test.
pub const H_STABLE_TOL: f64 = 1e-12;

/// State space of the particle system / PDE.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain<F: Real> {
    /// One-dimensional torus of period 1, coordinates in [0, 1).
    Torus1d,
    /// Real line, truncated to [-half_width, half_width] for grid work.
    Line1d { half_width: F },
    /// Axis-aligned box with reflecting boundary, dimension = bounds.len().
    Box { lower: Vec<F>, upper: Vec<F> },
}

impl<F: Real> Domain<F> {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Torus1d | Domain::Line1d { .. } => 1,
            Domain::Box { lower, .. } => lower.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::Torus1d => "torus",
            Domain::Line1d { .. } => "line",
            Domain::Box { .. } => "box",
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus1d)
    }

    pub fn contains(&self, x: &[F]) -> bool {
        if x.len() != self.dim() || x.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self {
            Domain::Torus1d => x[0] >= F::zero() && x[0] < F::one(),
            Domain::Line1d { .. } => true,
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(c, (lo, hi))| *c >= *lo && *c <= *hi),
        }
    }

    /// Coordinate-wise displacement x - y, min-image on the torus.
    pub fn displacement(&self, x: &[F], y: &[F]) -> Vec<F> {
        match self {
            Domain::Torus1d => {
                let mut d = x[0] - y[0];
                d = d - d.round();
                vec![d]
            }
            _ => x.iter().zip(y.iter()).map(|(a, b)| *a - *b).collect(),
        }
    }

    /// Map a point back into the domain: torus wrap, box reflection.
    pub fn project(&self, x: &mut [F]) {
        match self {
            Domain::Torus1d => {
                x[0] = x[0] - x[0].floor();
                // Guard the half-open interval against rounding to 1.0.
                if x[0] >= F::one() {
                    x[0] = F::zero();
                }
            }
            Domain::Line1d { .. } => {}
            Domain::Box { lower, upper } => {
                for ((c, lo), hi) in x.iter_mut().zip(lower.iter()).zip(upper.iter()) {
                    let width = *hi - *lo;
                    if width <= F::zero() {
                        continue;
                    }
                    // Fold into the doubled period, then reflect.
                    let two = rf::<F>(2.0);
                    let mut t = (*c - *lo) % (two * width);
                    if t < F::zero() {
                        t = t + two * width;
                    }
                    *c = if t > width { *hi - (t - width) } else { *lo + t };
                }
            }
        }
    }

    /// Truncation half-width such that exp(-beta V(L)) < 1e-14.
    pub fn line_for(confining: &Confining<F>, beta: F) -> Self {
        let target = rf::<F>(32.24); // ln(1e14)
        let mut l = rf::<F>(1.0);
        while beta * confining.value(l).max(confining.value(-l)) < target && tf(l) < 50.0 {
            l = l + rf(0.25);
        }
        Domain::Line1d { half_width: l }
    }
}

/// Confining potential family.
#[derive(Debug, Clone, PartialEq)]
pub enum Confining<F: Real> {
    Zero,
    /// V(x) = a x^2 / 2 per coordinate.
    Quadratic { a: F },
    /// V(x) = (1 - x^2)^2, one-dimensional.
    DoubleWell,
    /// Tabulated, cubic interpolation.
    Custom(CubicSpline<F>),
}

impl<F: Real> Confining<F> {
    /// Value at a scalar coordinate (summed per coordinate for d > 1).
    pub fn value(&self, x: F) -> F {
        match self {
            Confining::Zero => F::zero(),
            Confining::Quadratic { a } => *a * x * x / rf(2.0),
            Confining::DoubleWell => {
                let s = F::one() - x * x;
                s * s
            }
            Confining::Custom(sp) => sp.value(x),
        }
    }

    pub fn grad(&self, x: F) -> F {
        match self {
            Confining::Zero => F::zero(),
            Confining::Quadratic { a } => *a * x,
            Confining::DoubleWell => -rf::<F>(4.0) * x * (F::one() - x * x),
            Confining::Custom(sp) => sp.derivative(x),
        }
    }

    /// Hessian lower bound (per coordinate).
    pub fn convexity_constant(&self) -> F {
        match self {
            Confining::Zero => F::zero(),
            Confining::Quadratic { a } => *a,
            Confining::DoubleWell => rf(-4.0), // V'' = 12x^2 - 4
            Confining::Custom(sp) => sp.min_second_derivative(),
        }
    }
}

/// Pairwise interaction family, translation invariant: W(x, y) = w(x - y).
#[derive(Debug, Clone, PartialEq)]
pub enum Interaction<F: Real> {
    Zero,
    /// w(r) = |r|^2 / 2.
    Quadratic,
    /// w(r) = sum_m c_m (-cos(2 pi m r)), one-dimensional torus family.
    CosineSum { coeffs: Vec<F> },
    /// Tabulated profile of the displacement, cubic interpolation.
    Custom(CubicSpline<F>),
}

impl<F: Real> Interaction<F> {
    /// Raw profile w(r) evaluated on the scalar displacement.
    pub fn profile(&self, r: F) -> F {
        match self {
            Interaction::Zero => F::zero(),
            Interaction::Quadratic => r * r / rf(2.0),
            Interaction::CosineSum { coeffs } => {
                let mut acc = F::zero();
                for (m, c) in coeffs.iter().enumerate() {
                    let freq = F::two_pi() * rf((m + 1) as f64);
                    acc = acc - *c * (freq * r).cos();
                }
                acc
            }
            Interaction::Custom(sp) => sp.value(r),
        }
    }

    /// d/dr of the profile.
    pub fn profile_grad(&self, r: F) -> F {
        match self {
            Interaction::Zero => F::zero(),
            Interaction::Quadratic => r,
            Interaction::CosineSum { coeffs } => {
                let mut acc = F::zero();
                for (m, c) in coeffs.iter().enumerate() {
                    let freq = F::two_pi() * rf((m + 1) as f64);
                    acc = acc + *c * freq * (freq * r).sin();
                }
                acc
            }
            Interaction::Custom(sp) => sp.derivative(r),
        }
    }

    /// Value on the diagonal, w(0).
    pub fn diagonal(&self) -> F {
        self.profile(F::zero())
    }

    /// Second-derivative range (min, max) of the profile.
    pub fn profile_hessian_range(&self) -> (F, F) {
        match self {
            Interaction::Zero => (F::zero(), F::zero()),
            Interaction::Quadratic => (F::one(), F::one()),
            Interaction::CosineSum { coeffs } => {
                // w'' = sum c_m (2 pi m)^2 cos(2 pi m r); bound by the
                // coefficient sum, attained at r = 0 when signs align.
                let mut lo = F::zero();
                let mut hi = F::zero();
                for (m, c) in coeffs.iter().enumerate() {
                    let f2 = F::two_pi() * rf((m + 1) as f64);
                    let amp = (*c * f2 * f2).abs();
                    lo = lo - amp;
                    hi = hi + amp;
                }
                (lo, hi)
            }
            Interaction::Custom(sp) => sp.second_derivative_range(),
        }
    }

    /// Joint convexity constant of (x, y) -> W(x, y): min(0, 2 min w'').
    pub fn convexity_constant(&self) -> F {
        let (lo, _) = self.profile_hessian_range();
        (rf::<F>(2.0) * lo).min(F::zero())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Interaction::Zero => true,
            Interaction::CosineSum { coeffs } => coeffs.iter().all(|c| *c == F::zero()),
            _ => false,
        }
    }
}

/// Full model: domain, potentials, inverse temperature, convexity data.
#[derive(Debug, Clone)]
pub struct PotentialSpec<F: Real> {
    pub domain: Domain<F>,
    pub confining: Confining<F>,
    pub interaction: Interaction<F>,
    /// Inverse temperature; +inf encodes the zero-temperature gradient flow.
    pub beta: F,
    /// Hessian lower bound of V.
    pub k_v: F,
    /// Joint Hessian lower bound of W.
    pub k_w: F,
}

impl<F: Real> PotentialSpec<F> {
    pub fn new(
        domain: Domain<F>,
        confining: Confining<F>,
        interaction: Interaction<F>,
        beta: F,
    ) -> Result<Self> {
        if !(beta > F::zero()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        let k_v = confining.convexity_constant();
        let k_w = interaction.convexity_constant();
        Ok(Self {
            domain,
            confining,
            interaction,
            beta,
            k_v,
            k_w,
        })
    }

    /// Convenience constructor for the noisy Kuramoto model on the torus.
    pub fn kuramoto(beta: F) -> Self {
        Self::new(
            Domain::Torus1d,
            Confining::Zero,
            Interaction::CosineSum {
                coeffs: vec![F::one()],
            },
            beta,
        )
        .expect("valid kuramoto model")
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn inv_beta(&self) -> F {
        if self.beta.is_infinite() {
            F::zero()
        } else {
            F::one() / self.beta
        }
    }

    fn check_point(&self, x: &[F]) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                domain: self.domain.name().to_string(),
                point: x.iter().map(|c| tf(*c)).collect(),
            })
        }
    }

    /// V(x), summed per coordinate.
    pub fn confining_value(&self, x: &[F]) -> Result<F> {
        self.check_point(x)?;
        Ok(x.iter().map(|c| self.confining.value(*c)).sum())
    }

    /// grad V(x).
    pub fn grad_confining(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_point(x)?;
        Ok(x.iter().map(|c| self.confining.grad(*c)).collect())
    }

    /// Raw W(x, y) = w(x - y) (radial profile of the displacement norm in
    /// d > 1 for the quadratic family; one-dimensional otherwise).
    pub fn interaction_value(&self, x: &[F], y: &[F]) -> Result<F> {
        self.check_point(x)?;
        self.check_point(y)?;
        let d = self.domain.displacement(x, y);
        Ok(self.profile_of_displacement(&d))
    }

    /// W with the constant diagonal value removed, so W(x, x) = 0.
    /// Used for the N-particle Hamiltonian; the shift leaves gradients,
    /// dynamics, and the Gibbs measure unchanged.
    pub fn pair_energy(&self, x: &[F], y: &[F]) -> Result<F> {
        Ok(self.interaction_value(x, y)? - self.interaction_diagonal())
    }

    pub fn interaction_diagonal(&self) -> F {
        match &self.interaction {
            Interaction::Quadratic => F::zero(),
            other => other.diagonal(),
        }
    }

    fn profile_of_displacement(&self, d: &[F]) -> F {
        match &self.interaction {
            Interaction::Quadratic => {
                let sq: F = d.iter().map(|c| *c * *c).sum();
                sq / rf(2.0)
            }
            other => {
                debug_assert_eq!(d.len(), 1);
                other.profile(d[0])
            }
        }
    }

    /// grad_1 W(x, y), the gradient in the first slot.
    pub fn grad1_interaction(&self, x: &[F], y: &[F]) -> Result<Vec<F>> {
        self.check_point(x)?;
        self.check_point(y)?;
        let d = self.domain.displacement(x, y);
        Ok(match &self.interaction {
            Interaction::Quadratic => d,
            other => {
                debug_assert_eq!(d.len(), 1);
                vec![other.profile_grad(d[0])]
            }
        })
    }

    /// Scalar fast path for 1-d models: w'(x - y) with min-image on the torus.
    #[inline]
    pub fn grad1_interaction_1d(&self, x: F, y: F) -> F {
        let mut r = x - y;
        if self.domain.is_torus() {
            r = r - r.round();
        }
        self.interaction.profile_grad(r)
    }

    fn require_torus_translation_invariant(&self) -> Result<()> {
        if !self.domain.is_torus() {
            return Err(Error::UnsupportedModel(format!(
                "Fourier data needs the torus domain, got {}",
                self.domain.name()
            )));
        }
        Ok(())
    }

    /// Fourier coefficients W_hat(k) = int_0^1 w(x) e^{-2 pi i k x} dx for
    /// 0 <= k <= k_max (real and symmetric: W_hat(-k) = W_hat(k)).
    /// Analytic for the cosine family, periodic trapezoid otherwise.
    pub fn fourier_coefficients(&self, k_max: usize) -> Result<Vec<F>> {
        self.require_torus_translation_invariant()?;
        let mut coef = vec![F::zero(); k_max + 1];
        match &self.interaction {
            Interaction::Zero => {}
            Interaction::CosineSum { coeffs } => {
                for (m, c) in coeffs.iter().enumerate() {
                    if m + 1 <= k_max {
                        coef[m + 1] = -*c / rf(2.0);
                    }
                }
            }
            _ => {
                let n = FOURIER_QUAD_NODES;
                let inv_n = F::one() / rf(n as f64);
                for (k, ck) in coef.iter_mut().enumerate() {
                    let mut acc = F::zero();
                    for j in 0..n {
                        let x = rf::<F>(j as f64) * inv_n;
                        // min-image displacement from 0
                        let r = x - x.round();
                        let w = self.interaction.profile(r);
                        acc = acc + w * (F::two_pi() * rf(k as f64) * x).cos();
                    }
                    *ck = acc * inv_n;
                }
            }
        }
        Ok(coef)
    }

    /// Spectral threshold: 1 / (-min_{k != 0} W_hat(k)) when that minimum is
    /// negative, +inf in the H-stable case.
    pub fn beta_sharp(&self, k_max: usize) -> Result<F> {
        let coef = self.fourier_coefficients(k_max)?;
        let min = coef[1..]
            .iter()
            .copied()
            .fold(F::infinity(), |a, b| a.min(b));
        if min < F::zero() {
            Ok(-F::one() / min)
        } else {
            Ok(F::infinity())
        }
    }

    /// True iff W_hat(k) >= -tol for all 0 < |k| <= k_max.
    pub fn is_h_stable(&self, k_max: usize) -> Result<bool> {
        let coef = self.fourier_coefficients(k_max)?;
        let tol = rf::<F>(H_STABLE_TOL);
        Ok(coef[1..].iter().all(|c| *c >= -tol))
    }

    /// Sup norm of the raw interaction over the sampled domain (n grid
    /// points of displacement).
    pub fn interaction_sup(&self, n: usize) -> F {
        let (lo, hi) = self.displacement_range();
        let mut sup = F::zero();
        for i in 0..=n {
            let r = lo + (hi - lo) * rf(i as f64) / rf(n as f64);
            sup = sup.max(self.interaction.profile(r).abs());
        }
        sup
    }

    /// Sup norm of the cross second derivative |D^2_{xy} W| = |w''|.
    pub fn interaction_cross_hessian_sup(&self) -> F {
        let (lo, hi) = self.interaction.profile_hessian_range();
        lo.abs().max(hi.abs())
    }

    /// Sup norm of V over the sampled domain.
    pub fn confining_sup(&self, n: usize) -> F {
        let (lo, hi) = self.coordinate_range();
        let mut sup = F::zero();
        for i in 0..=n {
            let x = lo + (hi - lo) * rf(i as f64) / rf(n as f64);
            sup = sup.max(self.confining.value(x).abs());
        }
        sup
    }

    /// Coordinate range spanned by the domain (first axis).
    pub fn coordinate_range(&self) -> (F, F) {
        match &self.domain {
            Domain::Torus1d => (F::zero(), F::one()),
            Domain::Line1d { half_width } => (-*half_width, *half_width),
            Domain::Box { lower, upper } => (lower[0], upper[0]),
        }
    }

    fn displacement_range(&self) -> (F, F) {
        match &self.domain {
            Domain::Torus1d => (rf(-0.5), rf(0.5)),
            Domain::Line1d { half_width } => (-rf::<F>(2.0) * *half_width, rf::<F>(2.0) * *half_width),
            Domain::Box { lower, upper } => (lower[0] - upper[0], upper[0] - lower[0]),
        }
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl<F: Real> PotentialSpec<F> {
    /// Structural checks on sampled grids: interaction symmetry, vanishing
    /// normalized diagonal, finite-difference Hessian bounds against the
    /// declared convexity constants, V bounded below.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = 64usize;
        let (lo, hi) = self.coordinate_range();
        let span = hi - lo;
        let tol = rf::<F>(1e-10);

        // symmetry and diagonal of the normalized pair energy
        let mut max_asym = F::zero();
        let mut max_diag = F::zero();
        for i in 0..n {
            let x = lo + span * rf(i as f64) / rf(n as f64);
            let d = self.interaction_diagonal();
            max_diag = max_diag.max((self.interaction.profile(F::zero()) - d).abs());
            for j in 0..n {
                let y = lo + span * rf(j as f64) / rf(n as f64);
                let mut r = x - y;
                if self.domain.is_torus() {
                    r = r - r.round();
                }
                let asym = (self.interaction.profile(r) - self.interaction.profile(-r)).abs();
                max_asym = max_asym.max(asym);
            }
        }
        if max_asym > tol {
            out.push(Diagnostic {
                severity: Severity::Error,
                message: format!("interaction asymmetry up to {max_asym} on sampled pairs"),
            });
        }
        if max_diag > tol {
            out.push(Diagnostic {
                severity: Severity::Error,
                message: format!("normalized interaction diagonal up to {max_diag}"),
            });
        }

        // finite-difference Hessian of V against K_V
        let h = span / rf(512.0);
        let fd_tol = rf::<F>(1e-3) * (F::one() + self.k_v.abs());
        let mut min_v = F::infinity();
        let mut min_hess = F::infinity();
        for i in 1..512 {
            let x = lo + span * rf(i as f64) / rf(512.0);
            let v = self.confining.value(x);
            min_v = min_v.min(v);
            let hess =
                (self.confining.value(x + h) - rf::<F>(2.0) * v + self.confining.value(x - h))
                    / (h * h);
            min_hess = min_hess.min(hess);
        }
        if min_hess < self.k_v - fd_tol {
            out.push(Diagnostic {
                severity: Severity::Warning,
                message: format!(
                    "sampled V Hessian minimum {min_hess} below declared K_V = {}",
                    self.k_v
                ),
            });
        }
        if !min_v.is_finite() {
            out.push(Diagnostic {
                severity: Severity::Error,
                message: "V unbounded below on the sampled domain".into(),
            });
        }

        // finite-difference profile Hessian of W against K_W
        let (dlo, dhi) = self.displacement_range();
        let dh = (dhi - dlo) / rf(512.0);
        let mut min_w_hess = F::infinity();
        for i in 1..512 {
            let r = dlo + (dhi - dlo) * rf(i as f64) / rf(512.0);
            let hess = (self.interaction.profile(r + dh) - rf::<F>(2.0) * self.interaction.profile(r)
                + self.interaction.profile(r - dh))
                / (dh * dh);
            min_w_hess = min_w_hess.min(hess);
        }
        let k_w_profile = self.k_w / rf(2.0);
        let fd_tol_w = rf::<F>(1e-2) * (F::one() + k_w_profile.abs());
        if min_w_hess < k_w_profile - fd_tol_w {
            out.push(Diagnostic {
                severity: Severity::Warning,
                message: format!(
                    "sampled W profile Hessian minimum {min_w_hess} below declared K_W/2 = {k_w_profile}"
                ),
            });
        }

        out
    }
}
