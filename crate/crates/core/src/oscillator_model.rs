//! `r` identical oscillators (mass `m`, spring `k`) attached to a movable
//! partition of mass `m0`, plus a detector oscillator (mass `M`, spring `χ`)
//! on the other side.
//!
//! Coordinates are the spring deformations `z_1..z_r, z_{r+1}`. The partition
//! coordinate is eliminated with the centre of mass at rest, which leaves a
//! dense mass matrix and a diagonal rigidity matrix. Frequencies are reported
//! through the dimensionless `λ = ω² m / k`.

use thiserror::Error;

use crate::linalg::{schur_complement, solve_generalized_eig, LinalgError, Matrix, SymMatrix};

/// Absolute tolerance for calling a dimensionless eigenvalue "equal to 1".
pub const UNIT_LAMBDA_TOLERANCE: f64 = 1e-9;

/// Negative secular discriminants down to this value are rounding noise.
pub const DISCRIMINANT_TOLERANCE: f64 = 1e-12;

/// Eigenvalues below this (relative to the largest) are reported as soft modes.
pub const SOFT_MODE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-physical parameter {name} = {value}")]
    NonPhysical { name: &'static str, value: f64 },
    #[error("secular discriminant {0:e} is negative")]
    NegativeDiscriminant(f64),
    #[error("λ = 0 has no finite displacement ratio (soft mode)")]
    SoftMode,
    #[error("vacuum form needs every λ > 0, got {0:e}")]
    NonPositiveLambda(f64),
    #[error("ξ = {0} must be positive")]
    NonPositiveXi(f64),
    #[error("energy unit must be positive, got {0}")]
    InvalidEnergyUnit(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Physical parameters of the partition-coupled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorSystem {
    pub r: usize,
    pub m: f64,
    pub m0: f64,
    /// Detector mass `M`.
    pub big_m: f64,
    pub k: f64,
    pub chi: f64,
}

impl OscillatorSystem {
    pub fn new(r: usize, m: f64, m0: f64, big_m: f64, k: f64, chi: f64) -> Result<Self, ModelError> {
        if r == 0 {
            return Err(ModelError::NonPhysical { name: "r", value: 0.0 });
        }
        for (name, value) in [("m", m), ("m0", m0), ("M", big_m), ("k", k)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::NonPhysical { name, value });
            }
        }
        if !(chi >= 0.0 && chi.is_finite()) {
            return Err(ModelError::NonPhysical {
                name: "chi",
                value: chi,
            });
        }
        Ok(OscillatorSystem {
            r,
            m,
            m0,
            big_m,
            k,
            chi,
        })
    }

    /// `r = m = m0 = M = k = χ = 1`.
    pub fn unit() -> Self {
        OscillatorSystem {
            r: 1,
            m: 1.0,
            m0: 1.0,
            big_m: 1.0,
            k: 1.0,
            chi: 1.0,
        }
    }

    /// Total mass `M + r m + m0`.
    pub fn total_mass(&self) -> f64 {
        self.big_m + self.r as f64 * self.m + self.m0
    }

    /// `ξ = r m / m0`.
    pub fn xi(&self) -> f64 {
        self.r as f64 * self.m / self.m0
    }

    pub fn dim(&self) -> usize {
        self.r + 1
    }
}

/// Reduced mass matrix in the deformation coordinates.
pub fn mass_matrix(sys: &OscillatorSystem) -> SymMatrix {
    let r = sys.r;
    let (m, big_m) = (sys.m, sys.big_m);
    let t = sys.total_mass();
    SymMatrix::from_lower_fn(r + 1, |i, j| match (i == r, j == r) {
        (true, true) => big_m * (r as f64 * m + sys.m0) / t,
        (true, false) | (false, true) => big_m * m / t,
        _ if i == j => m * (1.0 - m / t),
        _ => -m * m / t,
    })
}

/// Kinetic form in `(x0, z_1, ..., z_{r+1})` before the partition is eliminated,
/// with oscillator positions `x0 + z_i` and detector position `x0 − z_{r+1}`.
pub fn kinetic_matrix(sys: &OscillatorSystem) -> SymMatrix {
    let r = sys.r;
    // velocity of each body as coefficients over (x0', z1', ..., z_{r+1}')
    let mut bodies: Vec<(f64, Vec<f64>)> = Vec::with_capacity(r + 2);
    let mut partition = vec![0.0; r + 2];
    partition[0] = 1.0;
    bodies.push((sys.m0, partition));
    for i in 0..r {
        let mut v = vec![0.0; r + 2];
        v[0] = 1.0;
        v[i + 1] = 1.0;
        bodies.push((sys.m, v));
    }
    let mut det = vec![0.0; r + 2];
    det[0] = 1.0;
    det[r + 1] = -1.0;
    bodies.push((sys.big_m, det));

    SymMatrix::from_lower_fn(r + 2, |i, j| bodies.iter().map(|(mass, v)| mass * v[i] * v[j]).sum())
}

/// Mass matrix obtained by eliminating the partition from the kinetic form.
pub fn reduced_kinetic_matrix(sys: &OscillatorSystem) -> Result<SymMatrix, ModelError> {
    Ok(schur_complement(&kinetic_matrix(sys), 0)?)
}

/// `diag(k, ..., k, χ)`.
pub fn stiffness_matrix(sys: &OscillatorSystem) -> SymMatrix {
    let mut d = vec![sys.k; sys.r];
    d.push(sys.chi);
    SymMatrix::diagonal(&d)
}

/// Coefficients of the quadratic `a λ² + b λ + c = 0` for the two modes that
/// move the detector.
pub fn secular_coefficients(sys: &OscillatorSystem) -> (f64, f64, f64) {
    let r = sys.r as f64;
    let (m, m0, big_m, k, chi) = (sys.m, sys.m0, sys.big_m, sys.k, sys.chi);
    let t = sys.total_mass();
    let a = (r * m + m0) / m - big_m * r / (big_m + m0);
    let b = -t * (chi / k / big_m + (r * m + m0) / (m * (big_m + m0)));
    let c = chi / k * t * t / (big_m * (big_m + m0));
    (a, b, c)
}

/// The two coupled-mode roots, larger first.
///
/// The larger-magnitude root comes from the cancellation-free branch; the
/// other is `c / (a λ₁)`.
pub fn coupled_lambdas(sys: &OscillatorSystem) -> Result<(f64, f64), ModelError> {
    let (a, b, c) = secular_coefficients(sys);
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc < -DISCRIMINANT_TOLERANCE {
            return Err(ModelError::NegativeDiscriminant(disc));
        }
        disc = 0.0;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let big = q / a;
    let small = if big == 0.0 { 0.0 } else { c / (a * big) };
    Ok(if big >= small { (big, small) } else { (small, big) })
}

/// `z_{r+1} / z_1` for the coupled mode with eigenvalue `lambda`.
pub fn displacement_ratio(sys: &OscillatorSystem, lambda: f64) -> Result<f64, ModelError> {
    if lambda == 0.0 {
        return Err(ModelError::SoftMode);
    }
    Ok((sys.total_mass() / lambda - (sys.big_m + sys.m0)) / sys.big_m)
}

/// How a normal mode involves the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    /// Moves the detector; root of the secular quadratic.
    Coupled,
    /// `λ = 1`, detector at rest, primary displacements summing to zero.
    Internal,
    /// `λ = 0`, only possible with `χ = 0`.
    Soft,
}

/// Normal modes ordered by descending `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub lambdas: Vec<f64>,
    /// Columns are the amplitude vectors `z_s`, normalized so `z_sᵀ μ z_s = 1`.
    pub modes: Matrix,
    pub modal_masses: Vec<f64>,
    pub modal_rigidities: Vec<f64>,
    pub kinds: Vec<ModeKind>,
}

impl ModeSet {
    pub fn mode(&self, s: usize) -> Vec<f64> {
        self.modes.column(s)
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn count_unit(&self) -> usize {
        self.lambdas
            .iter()
            .filter(|l| (*l - 1.0).abs() <= UNIT_LAMBDA_TOLERANCE)
            .count()
    }
}

fn classify(sys: &OscillatorSystem, lambda: f64, z: &[f64], lambda_scale: f64) -> ModeKind {
    if lambda.abs() <= SOFT_MODE_TOLERANCE * lambda_scale.max(1.0) {
        return ModeKind::Soft;
    }
    let norm = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if sys.r > 1 && z[sys.r].abs() <= 1e-9 * norm && (lambda - 1.0).abs() <= UNIT_LAMBDA_TOLERANCE {
        ModeKind::Internal
    } else {
        ModeKind::Coupled
    }
}

/// Solves `ω² μ z = κ z` and derives modal masses and rigidities.
pub fn normal_modes(sys: &OscillatorSystem) -> Result<ModeSet, ModelError> {
    let mu = mass_matrix(sys);
    let kappa = stiffness_matrix(sys);
    let spec = solve_generalized_eig(&kappa, &mu)?;
    let n = sys.dim();
    let scale = sys.m / sys.k;
    let top = spec.eigenvalues.last().copied().unwrap_or(0.0) * scale;

    let mut lambdas = Vec::with_capacity(n);
    let mut modes = Matrix::zeros(n, n);
    let mut modal_masses = Vec::with_capacity(n);
    let mut modal_rigidities = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);
    for (dst, s) in (0..n).rev().enumerate() {
        let z = spec.vector(s);
        let mut lambda = spec.eigenvalues[s] * scale;
        let kind = classify(sys, lambda, &z, top);
        if kind == ModeKind::Soft {
            lambda = 0.0;
        }
        for i in 0..n {
            modes[(i, dst)] = z[i];
        }
        modal_masses.push(mu.quadratic_form(&z));
        modal_rigidities.push(kappa.quadratic_form(&z));
        lambdas.push(lambda);
        kinds.push(kind);
    }
    Ok(ModeSet {
        lambdas,
        modes,
        modal_masses,
        modal_rigidities,
        kinds,
    })
}

/// Largest `|z_sᵀ μ z_j|` and `|z_sᵀ κ z_j|` over distinct mode pairs.
pub fn orthogonality_defect(sys: &OscillatorSystem, modes: &ModeSet) -> (f64, f64) {
    let mu = mass_matrix(sys);
    let kappa = stiffness_matrix(sys);
    let mut worst = (0.0f64, 0.0f64);
    for s in 0..modes.len() {
        for j in 0..modes.len() {
            if s == j {
                continue;
            }
            let (zs, zj) = (modes.mode(s), modes.mode(j));
            worst.0 = worst.0.max(mu.bilinear(&zs, &zj).abs());
            worst.1 = worst.1.max(kappa.bilinear(&zs, &zj).abs());
        }
    }
    worst
}

/// Vacuum form `A = V √D Vᵀ` from the dimensionless problem
/// `(κ/k) v = λ (μ/m) v` with `vᵀ (μ/m) v = 1`.
///
/// With this normalization, `A (μ/m)` has eigenvalues `√λ`, and a decoupled
/// system of equal unit oscillators gives `A = I`.
pub fn vacuum_matrix(sys: &OscillatorSystem) -> Result<SymMatrix, ModelError> {
    let mu = mass_matrix(sys).scaled(1.0 / sys.m);
    let kappa = stiffness_matrix(sys).scaled(1.0 / sys.k);
    let spec = solve_generalized_eig(&kappa, &mu)?;
    if let Some(&lowest) = spec.eigenvalues.first() {
        let top = spec.eigenvalues.last().copied().unwrap_or(1.0).abs().max(1.0);
        if lowest <= SOFT_MODE_TOLERANCE * top {
            return Err(ModelError::NonPositiveLambda(lowest));
        }
    }
    Ok(spec.reconstruct_with(f64::sqrt))
}

/// Boltzmann factor induced by the partition: `((1+ξ)^{3/2} − 1)/((1+ξ)^{3/2} + 1)`.
pub fn boltzmann_factor_from_xi(xi: f64) -> Result<f64, ModelError> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(ModelError::NonPositiveXi(xi));
    }
    let s = (1.0 + xi).powf(1.5);
    Ok((s - 1.0) / (s + 1.0))
}

/// Entanglement temperature `θ = ħω / ln(((1+ξ)^{3/2}+1)/((1+ξ)^{3/2}−1))`.
pub fn temperature_from_xi(xi: f64, hbar_omega: f64) -> Result<f64, ModelError> {
    if !(hbar_omega > 0.0 && hbar_omega.is_finite()) {
        return Err(ModelError::InvalidEnergyUnit(hbar_omega));
    }
    let g = boltzmann_factor_from_xi(xi)?;
    Ok(-hbar_omega / g.ln())
}

/// One row of the temperature/energy curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig2Row {
    pub xi: f64,
    pub theta: f64,
    pub mean_energy: f64,
}

/// Temperature and Planck excitation energy `ħω/(e^{ħω/θ} − 1)` per `ξ`.
pub fn fig2_curve(xi_grid: &[f64], hbar_omega: f64) -> Result<Vec<Fig2Row>, ModelError> {
    xi_grid
        .iter()
        .map(|&xi| {
            let theta = temperature_from_xi(xi, hbar_omega)?;
            let g = boltzmann_factor_from_xi(xi)?;
            Ok(Fig2Row {
                xi,
                theta,
                mean_energy: hbar_omega * g / (1.0 - g),
            })
        })
        .collect()
}

/// `points` values from `min` to `max` inclusive, linear or logarithmic.
pub fn xi_grid(min: f64, max: f64, points: usize, log: bool) -> Result<Vec<f64>, ModelError> {
    if !(min > 0.0 && min.is_finite()) {
        return Err(ModelError::NonPositiveXi(min));
    }
    if !(max > 0.0 && max.is_finite()) {
        return Err(ModelError::NonPositiveXi(max));
    }
    if points <= 1 {
        return Ok(vec![min; points]);
    }
    let step = |i: usize| i as f64 / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                min
            } else if i == points - 1 {
                max
            } else if log {
                (min.ln() + (max.ln() - min.ln()) * step(i)).exp()
            } else {
                min + (max - min) * step(i)
            }
        })
        .collect())
}
