//! Hermite polynomials, oscillator eigenfunctions, and the two Hermite identities
//! behind the closed-form Schmidt sum.

use std::f64::consts::PI;

use thiserror::Error;

use crate::multi_index::Compositions;

/// Highest degree accepted by [`hermite_poly`]; raw values overflow soon after.
pub const MAX_RAW_DEGREE: u32 = 300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HermiteError {
    #[error("degree {0} exceeds {MAX_RAW_DEGREE}; use osc_eigenfunction for high orders")]
    DegreeTooLarge(u32),
    #[error("Mehler kernel needs |x| < 1, got {0}")]
    OutsideUnitInterval(f64),
}

/// A quantum number together with the coordinate it is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPoint {
    pub k: u32,
    pub x: f64,
}

impl BasisPoint {
    pub fn eigenfunction(&self) -> f64 {
        osc_eigenfunction(self.k, self.x)
    }
}

/// Physicists' Hermite polynomial `H_k(x)` by the three-term recurrence.
pub fn hermite_poly(k: u32, x: f64) -> Result<f64, HermiteError> {
    if k > MAX_RAW_DEGREE {
        return Err(HermiteError::DegreeTooLarge(k));
    }
    let mut prev = 1.0;
    if k == 0 {
        return Ok(prev);
    }
    let mut cur = 2.0 * x;
    for n in 1..k {
        let next = 2.0 * x * cur - 2.0 * n as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Normalized oscillator eigenfunction `ψ_k(x)`.
///
/// Uses the orthonormal recurrence, so neither `k!` nor `2^k` is ever formed.
pub fn osc_eigenfunction(k: u32, x: f64) -> f64 {
    *osc_eigenfunctions(k, x).last().expect("at least one value")
}

/// `ψ_0(x), ..., ψ_{k_max}(x)`.
pub fn osc_eigenfunctions(k_max: u32, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max as usize + 1);
    let psi0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(psi0);
    if k_max == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * x * psi0);
    for k in 1..k_max as usize {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Closed form of the bilinear generating function
/// `Σ_k x^k H_k(y) H_k(z) / (2^k k!)`.
pub fn mehler_kernel(x: f64, y: f64, z: f64) -> Result<f64, HermiteError> {
    if !(x.abs() < 1.0) {
        return Err(HermiteError::OutsideUnitInterval(x));
    }
    let one_minus = 1.0 - x * x;
    Ok(one_minus.powf(-0.5) * ((2.0 * x * y * z - (y * y + z * z) * x * x) / one_minus).exp())
}

/// The first `terms` terms of the Mehler series.
///
/// Each term is rewritten as `√π e^{(y²+z²)/2} ψ_k(y) ψ_k(z) x^k` so it stays
/// bounded for large `k`.
pub fn mehler_partial_sum(x: f64, y: f64, z: f64, terms: u32) -> f64 {
    if terms == 0 {
        return 0.0;
    }
    let py = osc_eigenfunctions(terms - 1, y);
    let pz = osc_eigenfunctions(terms - 1, z);
    let mut power = 1.0;
    let mut s = 0.0;
    for (a, b) in py.iter().zip(&pz) {
        s += power * a * b;
        power *= x;
    }
    s * PI.sqrt() * (0.5 * (y * y + z * z)).exp()
}

/// Residual of the Hermite addition identity
///
/// `(f²)^{n/2}/n! · H_n(Σ f_k x_k / √f²) = Σ_{|m|=n} Π f_k^{m_k} H_{m_k}(x_k) / m_k!`
///
/// with the right side enumerated over all compositions of `n`.
///
/// # Panics
/// If `f` and `coords` differ in length.
pub fn verify_hermite_sum(f: &[f64], coords: &[f64], n: u32) -> f64 {
    assert_eq!(f.len(), coords.len(), "f and coords must have equal length");
    let r = f.len();
    let f2: f64 = f.iter().map(|v| v * v).sum();
    let factorial = |k: u32| (1..=k).fold(1.0f64, |acc, i| acc * i as f64);

    let lhs = if n == 0 {
        1.0
    } else if f2 == 0.0 {
        0.0
    } else {
        let norm = f2.sqrt();
        let arg = f.iter().zip(coords).map(|(a, b)| a * b).sum::<f64>() / norm;
        norm.powi(n as i32) / factorial(n) * hermite_poly(n, arg).expect("n is small")
    };

    // Per-coordinate tables of f_k^m H_m(x_k) / m!.
    let tables: Vec<Vec<f64>> = (0..r)
        .map(|k| {
            (0..=n)
                .map(|m| f[k].powi(m as i32) * hermite_poly(m, coords[k]).expect("n is small") / factorial(m))
                .collect()
        })
        .collect();
    let rhs: f64 = Compositions::new(n, r)
        .map(|idx| {
            idx.as_slice()
                .iter()
                .enumerate()
                .map(|(k, &m)| tables[k][m as usize])
                .product::<f64>()
        })
        .sum();
    (lhs - rhs).abs()
}

/// Composite trapezoid rule on `[a, b]` with `points` nodes.
pub fn trapezoid(a: f64, b: f64, points: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(points >= 2);
    let h = (b - a) / (points - 1) as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..points - 1 {
        s += f(a + i as f64 * h);
    }
    s * h
}
