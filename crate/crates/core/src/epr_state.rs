//! The `(r+1)`-particle entangled oscillator state.
//!
//! A parameter vector `f` inside the open unit ball fixes the Schmidt weights
//! of every joint occupation, the Gaussian vacuum form `A` whose density equals
//! the squared wavefunction, and from that the covariance `Σ = A⁻¹/2`.
//!
//! ```
//! use thermo_entangle::epr_state::{build_matrix_a, ParamVector};
//! use thermo_entangle::linalg::determinant;
//!
//! let f = ParamVector::new(vec![0.4, 0.3, 0.2]).unwrap();
//! let form = build_matrix_a(&f);
//! assert!((determinant(&form.a).unwrap() - 1.0).abs() < 1e-12);
//! ```

use std::f64::consts::PI;

use thiserror::Error;

use crate::hermite::osc_eigenfunctions;
use crate::linalg::{eigh_symmetric, LinalgError, SymMatrix};
use crate::multi_index::{ln_multinomial, up_to_total, MultiIndex};

/// Largest admissible `f²`; the vacuum form diverges at `f² = 1`.
pub const MAX_NORM_SQ: f64 = 1.0 - 1e-9;

/// Hard cap on the truncation order of the Schmidt sum.
pub const MAX_TRUNCATION: u32 = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("parameter outside hypersphere: f² = {norm_sq} must be below 1 − 1e-9")]
    OutsideHypersphere { norm_sq: f64 },
    #[error("parameter vector must have at least one component")]
    Empty,
    #[error("parameter vector contains a non-finite entry")]
    NonFinite,
    #[error("f² = 0: the entangled eigenvector direction is undefined")]
    ZeroNorm,
    #[error("expected length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("truncation order {0} exceeds the cap of {MAX_TRUNCATION}")]
    TruncationTooLarge(u32),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Real Schmidt parameters `f_1..f_r` with `Σ f_i² < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    f: Vec<f64>,
    norm_sq: f64,
}

impl ParamVector {
    pub fn new(f: Vec<f64>) -> Result<Self, StateError> {
        if f.is_empty() {
            return Err(StateError::Empty);
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let norm_sq: f64 = f.iter().map(|v| v * v).sum();
        if norm_sq >= MAX_NORM_SQ {
            return Err(StateError::OutsideHypersphere { norm_sq });
        }
        Ok(ParamVector { f, norm_sq })
    }

    /// Parameters with `f² = g` split according to non-negative weights `p`
    /// (`f_j = √(g p_j / Σp)`).
    pub fn from_thermal(g: f64, p: &[f64]) -> Result<Self, StateError> {
        let total: f64 = p.iter().sum();
        if p.is_empty() {
            return Err(StateError::Empty);
        }
        if !(total > 0.0) || p.iter().any(|v| !(*v >= 0.0)) || !(g >= 0.0) {
            return Err(StateError::NonFinite);
        }
        Self::new(p.iter().map(|pj| (g * pj / total).sqrt()).collect())
    }

    /// Number of primary oscillators `r`.
    pub fn r(&self) -> usize {
        self.f.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.f
    }

    /// `f² = Σ f_i²`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// Measurement weights `p_j = f_j² / f²`; `None` when `f² = 0`.
    pub fn weights(&self) -> Option<Vec<f64>> {
        if self.norm_sq == 0.0 {
            return None;
        }
        Some(self.f.iter().map(|v| v * v / self.norm_sq).collect())
    }

    /// Smallest order whose geometric weight tail `(f²)^{n+1}` drops below
    /// `1e-10`, capped at [`MAX_TRUNCATION`].
    pub fn default_truncation(&self) -> u32 {
        if self.norm_sq == 0.0 {
            return 0;
        }
        let n = (1e-10f64.ln() / self.norm_sq.ln()).ceil() - 1.0;
        (n.max(0.0) as u32).min(MAX_TRUNCATION)
    }
}

fn ensure_len(f: &ParamVector, idx: &MultiIndex) -> Result<(), StateError> {
    if idx.len() != f.r() {
        return Err(StateError::LengthMismatch {
            expected: f.r(),
            got: idx.len(),
        });
    }
    Ok(())
}

/// Natural log of the Schmidt weight, `-∞` for impossible outcomes.
fn ln_weight(f: &ParamVector, idx: &MultiIndex) -> f64 {
    let mut s = (1.0 - f.norm_sq()).ln() + ln_multinomial(idx);
    for (&fi, &n) in f.as_slice().iter().zip(idx.as_slice()) {
        if n > 0 {
            s += 2.0 * n as f64 * fi.abs().ln();
        }
    }
    s
}

/// Schmidt weight `λ_idx = (1−f²) Π (f_i²)^{n_i} · (Σn)!/Π n_i!`.
pub fn schmidt_weight(f: &ParamVector, idx: &MultiIndex) -> Result<f64, StateError> {
    ensure_len(f, idx)?;
    Ok(ln_weight(f, idx).exp())
}

/// Signed coefficient `c_idx`: `√λ_idx` times the sign of `Π f_i^{n_i}`.
pub fn schmidt_coefficient(f: &ParamVector, idx: &MultiIndex) -> Result<f64, StateError> {
    ensure_len(f, idx)?;
    let negative = f
        .as_slice()
        .iter()
        .zip(idx.as_slice())
        .filter(|(fi, n)| **fi < 0.0 && **n % 2 == 1)
        .count()
        % 2
        == 1;
    let magnitude = (0.5 * ln_weight(f, idx)).exp();
    Ok(if negative { -magnitude } else { magnitude })
}

/// Gaussian vacuum form: `|ψ|² = π^{-(r+1)/2} exp(−xᵀ A x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VacuumForm {
    pub a: SymMatrix,
    pub r: usize,
}

impl VacuumForm {
    pub fn dim(&self) -> usize {
        self.r + 1
    }
}

/// Assembles `A` for the given parameters; the last row/column belongs to the
/// distinguished particle.
pub fn build_matrix_a(f: &ParamVector) -> VacuumForm {
    let r = f.r();
    let fs = f.as_slice();
    let denom = 1.0 - f.norm_sq();
    let a = SymMatrix::from_lower_fn(r + 1, |i, j| {
        if i == r && j == r {
            (1.0 + f.norm_sq()) / denom
        } else if i == r {
            -2.0 * fs[j] / denom
        } else {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta + 2.0 * fs[i] * fs[j] / denom
        }
    });
    VacuumForm { a, r }
}

/// The two eigenpairs of `A` that involve the distinguished particle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSpectrum {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub v_max: Vec<f64>,
    pub v_min: Vec<f64>,
}

/// Closed-form extreme eigenvalues `(1 ± |f|)²/(1 − f²)` and their eigenvectors.
/// The remaining `r − 1` eigenvalues are exactly 1.
pub fn analytic_spectrum(f: &ParamVector) -> Result<AnalyticSpectrum, StateError> {
    let f2 = f.norm_sq();
    if f2 == 0.0 {
        return Err(StateError::ZeroNorm);
    }
    let norm = f2.sqrt();
    let scale = (2.0 * f2).sqrt();
    let last = std::f64::consts::FRAC_1_SQRT_2;
    let v_max = f
        .as_slice()
        .iter()
        .map(|fi| -fi / scale)
        .chain(std::iter::once(last))
        .collect();
    let v_min = f
        .as_slice()
        .iter()
        .map(|fi| fi / scale)
        .chain(std::iter::once(last))
        .collect();
    Ok(AnalyticSpectrum {
        lambda_max: (1.0 + norm).powi(2) / (1.0 - f2),
        lambda_min: (1.0 - norm).powi(2) / (1.0 - f2),
        v_max,
        v_min,
    })
}

/// `Σ = A⁻¹ / 2`, via the eigendecomposition of `A`.
pub fn covariance(form: &VacuumForm) -> Result<SymMatrix, StateError> {
    let spec = eigh_symmetric(&form.a)?;
    Ok(spec.reconstruct_with(|d| 0.5 / d))
}

fn ensure_coords(form: &VacuumForm, x: &[f64]) -> Result<(), StateError> {
    if x.len() != form.dim() {
        return Err(StateError::LengthMismatch {
            expected: form.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `π^{-(r+1)/2} exp(−xᵀ A x)`; the prefactor relies on `det A = 1`.
pub fn gaussian_density(form: &VacuumForm, x: &[f64]) -> Result<f64, StateError> {
    ensure_coords(form, x)?;
    let q = form.a.quadratic_form(x);
    Ok(PI.powf(-(form.dim() as f64) / 2.0) * (-q).exp())
}

/// The same density evaluated as a product of independent 1-D Gaussians in the
/// eigenbasis of `A`, with per-mode normalization `√(d/π)`.
pub fn gaussian_density_eigenbasis(form: &VacuumForm, x: &[f64]) -> Result<f64, StateError> {
    ensure_coords(form, x)?;
    let spec = eigh_symmetric(&form.a)?;
    let rotated = spec.eigenvectors.transpose().mul_vec(x);
    Ok(spec
        .eigenvalues
        .iter()
        .zip(&rotated)
        .map(|(&d, &y)| (d / PI).sqrt() * (-d * y * y).exp())
        .product())
}

/// Partial sum of the Schmidt expansion over all occupations with total at most
/// `n_max`: `Σ c_idx ψ_{n_1}(x_1)…ψ_{n_r}(x_r) ψ_{Σn}(x_{r+1})`.
pub fn truncated_wavefunction(f: &ParamVector, x: &[f64], n_max: u32) -> Result<f64, StateError> {
    let r = f.r();
    if x.len() != r + 1 {
        return Err(StateError::LengthMismatch {
            expected: r + 1,
            got: x.len(),
        });
    }
    if n_max > MAX_TRUNCATION {
        return Err(StateError::TruncationTooLarge(n_max));
    }
    let tables: Vec<Vec<f64>> = x.iter().map(|&xi| osc_eigenfunctions(n_max, xi)).collect();
    let mut sum = 0.0;
    for idx in up_to_total(n_max, r) {
        let c = schmidt_coefficient(f, &idx)?;
        if c == 0.0 {
            continue;
        }
        let mut term = c * tables[r][idx.total() as usize];
        for (j, &n) in idx.as_slice().iter().enumerate() {
            term *= tables[j][n as usize];
        }
        sum += term;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::determinant;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn admissibility() {
        assert!(matches!(
            ParamVector::new(vec![0.9, 0.5]),
            Err(StateError::OutsideHypersphere { .. })
        ));
        assert!(ParamVector::new(vec![]).is_err());
        assert!(ParamVector::new(vec![f64::NAN]).is_err());
        assert!(ParamVector::new(vec![0.0, 0.0]).is_ok());
        let f = ParamVector::from_thermal(0.5, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(f.norm_sq(), 0.5, epsilon = 1e-15);
        assert_eq!(f.weights().unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn weight_examples() {
        let f = pv(&[0.5, 0.5]);
        assert_relative_eq!(schmidt_weight(&f, &MultiIndex::zeros(2)).unwrap(), 0.5, epsilon = 1e-15);
        let f = pv(&[0.3f64.sqrt(), 0.2f64.sqrt()]);
        let w = schmidt_weight(&f, &MultiIndex::new(vec![1, 1])).unwrap();
        assert_relative_eq!(w, 0.06, epsilon = 1e-14);
        assert!(schmidt_weight(&f, &MultiIndex::zeros(3)).is_err());
    }

    #[test]
    fn coefficient_sign_follows_parameters() {
        let f = pv(&[-0.4, 0.3]);
        let c = schmidt_coefficient(&f, &MultiIndex::new(vec![1, 2])).unwrap();
        assert!(c < 0.0);
        let c = schmidt_coefficient(&f, &MultiIndex::new(vec![2, 1])).unwrap();
        assert!(c > 0.0);
        let w = schmidt_weight(&f, &MultiIndex::new(vec![2, 1])).unwrap();
        assert_relative_eq!(c * c, w, max_relative = 1e-14);
        let zero = pv(&[0.0, 0.3]);
        assert_eq!(schmidt_coefficient(&zero, &MultiIndex::new(vec![1, 0])).unwrap(), 0.0);
    }

    #[test]
    fn single_oscillator_matrix() {
        let f = pv(&[std::f64::consts::FRAC_1_SQRT_2]);
        let form = build_matrix_a(&f);
        let r8 = 2.0 * 2f64.sqrt();
        let expected = SymMatrix::from_rows(&[vec![3.0, -r8], vec![-r8, 3.0]]).unwrap();
        assert!(form.a.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn unentangled_limit_is_identity() {
        let form = build_matrix_a(&pv(&[1e-8, 1e-8, 1e-8]));
        assert!(form.a.max_abs_diff(&SymMatrix::identity(4)) < 1e-7);
    }

    #[test]
    fn analytic_spectrum_values() {
        let s = analytic_spectrum(&pv(&[std::f64::consts::FRAC_1_SQRT_2])).unwrap();
        assert_relative_eq!(s.lambda_max, 5.828_427_124_746_19, epsilon = 1e-12);
        assert_relative_eq!(s.lambda_min, 0.171_572_875_253_809_9, epsilon = 1e-12);
        assert!((s.lambda_max * s.lambda_min - 1.0).abs() < 1e-12);
        assert_eq!(analytic_spectrum(&pv(&[0.0])), Err(StateError::ZeroNorm));
    }

    #[test]
    fn analytic_eigenvectors_are_eigenvectors() {
        let f = pv(&[0.4, -0.3, 0.2]);
        let a = build_matrix_a(&f).a;
        let s = analytic_spectrum(&f).unwrap();
        for (lam, v) in [(s.lambda_max, &s.v_max), (s.lambda_min, &s.v_min)] {
            let av = a.mul_vec(v);
            for (x, y) in av.iter().zip(v.iter()) {
                assert!((x - lam * y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn covariance_cases() {
        let id = VacuumForm {
            a: SymMatrix::identity(3),
            r: 2,
        };
        assert!(
            covariance(&id)
                .unwrap()
                .max_abs_diff(&SymMatrix::identity(3).scaled(0.5))
                < 1e-15
        );
        let form = build_matrix_a(&pv(&[std::f64::consts::FRAC_1_SQRT_2]));
        let r8 = 2.0 * 2f64.sqrt();
        let expected = SymMatrix::from_rows(&[vec![1.5, r8 / 2.0], vec![r8 / 2.0, 1.5]]).unwrap();
        assert!(covariance(&form).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn density_examples() {
        let form = build_matrix_a(&pv(&[std::f64::consts::FRAC_1_SQRT_2]));
        assert_relative_eq!(gaussian_density(&form, &[0.0, 0.0]).unwrap(), 1.0 / PI, epsilon = 1e-15);
        // Q = 0.09·(3 + 3 − 4√2)
        let q = 0.09 * (6.0 - 4.0 * 2f64.sqrt());
        assert_relative_eq!(q, 0.030_883, epsilon = 1e-6);
        assert_relative_eq!(
            gaussian_density(&form, &[0.3, 0.3]).unwrap(),
            (-q).exp() / PI,
            max_relative = 1e-14
        );
        assert!(gaussian_density(&form, &[0.0]).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        // r = 1 and r = 2 on a trapezoid grid over [−8, 8]^{r+1}
        let points = 97usize;
        let h = 16.0 / (points - 1) as f64;
        let node = |i: usize| -8.0 + i as f64 * h;
        let w = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };

        let form = build_matrix_a(&pv(&[std::f64::consts::FRAC_1_SQRT_2]));
        let mut s = 0.0;
        for i in 0..points {
            for j in 0..points {
                s += w(i) * w(j) * gaussian_density(&form, &[node(i), node(j)]).unwrap();
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-6);

        let form = build_matrix_a(&pv(&[0.5, 0.4]));
        let mut s = 0.0;
        for i in 0..points {
            for j in 0..points {
                for k in 0..points {
                    s += w(i) * w(j) * w(k) * gaussian_density(&form, &[node(i), node(j), node(k)]).unwrap();
                }
            }
        }
        assert!((s * h * h * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn wavefunction_unentangled_limit() {
        let f = pv(&[0.0, 0.0]);
        let x = [0.3, -0.7, 1.1];
        let psi = truncated_wavefunction(&f, &x, 5).unwrap();
        let product: f64 = x.iter().map(|&v| crate::hermite::osc_eigenfunction(0, v)).product();
        assert_relative_eq!(psi, product, epsilon = 1e-15);
    }

    #[test]
    fn wavefunction_squares_to_density() {
        let f = pv(&[std::f64::consts::FRAC_1_SQRT_2]);
        let form = build_matrix_a(&f);
        let x = [0.3, 0.3];
        let rho = gaussian_density(&form, &x).unwrap();
        // The tail at f^2 = 1/2 is still ~5e-8 at 40 terms.
        let psi = truncated_wavefunction(&f, &x, 40).unwrap();
        assert!((psi * psi - rho).abs() <= 1e-6);
        let psi = truncated_wavefunction(&f, &x, 60).unwrap();
        assert!((psi * psi - rho).abs() <= 1e-8);

        let f = pv(&[0.4, 0.3, 0.2]);
        let form = build_matrix_a(&f);
        let x = [0.5, -0.2, 0.1, 0.7];
        let psi = truncated_wavefunction(&f, &x, 30).unwrap();
        assert!((psi * psi - gaussian_density(&form, &x).unwrap()).abs() <= 1e-6);
    }

    #[test]
    fn truncation_cap() {
        let f = pv(&[0.5]);
        assert!(matches!(
            truncated_wavefunction(&f, &[0.0, 0.0], 61),
            Err(StateError::TruncationTooLarge(61))
        ));
        assert_eq!(pv(&[0.0]).default_truncation(), 0);
        let n = pv(&[0.5f64.sqrt()]).default_truncation();
        assert!(0.5f64.powi(n as i32 + 1) < 1e-10 && 0.5f64.powi(n as i32) >= 1e-10);
        assert_eq!(pv(&[0.99]).default_truncation(), MAX_TRUNCATION);
    }

    fn admissible() -> impl Strategy<Value = ParamVector> {
        (1usize..=8)
            .prop_flat_map(|r| (prop::collection::vec(-1.0f64..1.0, r), 0.0f64..0.95))
            .prop_map(|(dir, radius)| {
                let n: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                ParamVector::new(dir.iter().map(|v| v / n * radius).collect()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn determinant_is_one(f in admissible()) {
            let a = build_matrix_a(&f).a;
            prop_assert!((determinant(&a).unwrap() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn weight_partial_sums_have_geometric_tail(f in admissible().prop_filter("small r", |f| f.r() <= 4), n in 0u32..=30) {
            let s: f64 = up_to_total(n, f.r()).map(|idx| schmidt_weight(&f, &idx).unwrap()).sum();
            let expected = 1.0 - f.norm_sq().powi(n as i32 + 1);
            prop_assert!((s - expected).abs() <= 1e-12, "{} vs {}", s, expected);
        }

        #[test]
        fn eigenbasis_factorization(f in admissible(), seed in prop::collection::vec(-1.5f64..1.5, 9)) {
            let form = build_matrix_a(&f);
            let x = &seed[..form.dim()];
            let direct = gaussian_density(&form, x).unwrap();
            let factored = gaussian_density_eigenbasis(&form, x).unwrap();
            prop_assert!((direct - factored).abs() <= 1e-12);
        }
    }
}
