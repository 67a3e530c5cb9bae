//! Statistics produced by measuring the entangled state.
//!
//! Measuring the distinguished particle yields a total excitation `n` with
//! geometric law `(1−g) gⁿ`, `g = f²`. Given `n`, the primary occupations are
//! multinomial with weights `p_j = f_j²/f²`. Mixing over `n` gives the joint
//! thermal law, whose one-particle marginals are again geometric.
//!
//! Sampling is deterministic: sample `i` draws from ChaCha8 seeded with the
//! run seed on stream `i`, so serial and parallel runs agree bit-for-bit.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::epr_state::ParamVector;
use crate::multi_index::{ln_multinomial, Compositions, MultiIndex};

/// Tolerance on `g = f²` when pairing a state with thermal parameters.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-12;

/// Minimum expected count for a histogram bin to stand on its own.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasurementError {
    #[error("Boltzmann factor g = {0} must lie in (0, 1)")]
    FactorOutOfRange(f64),
    #[error("energy unit must be positive and finite, got {0}")]
    InvalidEnergyUnit(f64),
    #[error("temperature must be non-negative and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("thermal parameters g = {g} disagree with the state's f² = {norm_sq}")]
    Inconsistent { g: f64, norm_sq: f64 },
    #[error("particle index {index} out of range 1..={r}")]
    IndexOutOfRange { index: usize, r: usize },
    #[error("occupation vector has length {got}, state has r = {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no histogram bin reaches an expected count of {MIN_EXPECTED_COUNT}; draw more samples")]
    TooFewCounts,
    #[error("histogram is empty")]
    EmptyHistogram,
}

/// Thermodynamic view of a state: `g = exp(−ħω/θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    g: f64,
    hbar_omega: f64,
    theta: f64,
}

impl ThermalParams {
    /// `g ∈ [0, 1)`; `g = 0` means zero temperature.
    pub fn from_g(g: f64, hbar_omega: f64) -> Result<Self, MeasurementError> {
        if !(hbar_omega > 0.0 && hbar_omega.is_finite()) {
            return Err(MeasurementError::InvalidEnergyUnit(hbar_omega));
        }
        if g == 0.0 {
            return Ok(ThermalParams {
                g,
                hbar_omega,
                theta: 0.0,
            });
        }
        Ok(ThermalParams {
            g,
            hbar_omega,
            theta: temperature_from_g(g, hbar_omega)?,
        })
    }

    pub fn from_theta(theta: f64, hbar_omega: f64) -> Result<Self, MeasurementError> {
        if !(hbar_omega > 0.0 && hbar_omega.is_finite()) {
            return Err(MeasurementError::InvalidEnergyUnit(hbar_omega));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(MeasurementError::InvalidTemperature(theta));
        }
        let g = if theta == 0.0 { 0.0 } else { (-hbar_omega / theta).exp() };
        Ok(ThermalParams { g, hbar_omega, theta })
    }

    /// The parameters a state induces on its own measurement statistics.
    pub fn for_state(f: &ParamVector, hbar_omega: f64) -> Result<Self, MeasurementError> {
        Self::from_g(f.norm_sq(), hbar_omega)
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn hbar_omega(&self) -> f64 {
        self.hbar_omega
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// `θ = −ħω / ln g`.
pub fn temperature_from_g(g: f64, hbar_omega: f64) -> Result<f64, MeasurementError> {
    if !(g > 0.0 && g < 1.0) {
        return Err(MeasurementError::FactorOutOfRange(g));
    }
    if !(hbar_omega > 0.0 && hbar_omega.is_finite()) {
        return Err(MeasurementError::InvalidEnergyUnit(hbar_omega));
    }
    Ok(-hbar_omega / g.ln())
}

/// Probability that the distinguished particle is found in level `n`.
pub fn pmf_total(params: &ThermalParams, n: u64) -> f64 {
    let g = params.g;
    if n == 0 {
        return 1.0 - g;
    }
    if g == 0.0 {
        return 0.0;
    }
    (1.0 - g) * (n as f64 * g.ln()).exp()
}

/// Mean total occupation `g/(1−g) = 1/(e^{ħω/θ} − 1)`.
pub fn planck_mean(params: &ThermalParams) -> f64 {
    params.g / (1.0 - params.g)
}

fn check_len(f: &ParamVector, idx: &MultiIndex) -> Result<(), MeasurementError> {
    if idx.len() != f.r() {
        return Err(MeasurementError::LengthMismatch {
            expected: f.r(),
            got: idx.len(),
        });
    }
    Ok(())
}

fn check_consistent(f: &ParamVector, params: &ThermalParams) -> Result<(), MeasurementError> {
    if (params.g - f.norm_sq()).abs() > CONSISTENCY_TOLERANCE {
        return Err(MeasurementError::Inconsistent {
            g: params.g,
            norm_sq: f.norm_sq(),
        });
    }
    Ok(())
}

fn ln_conditional(f: &ParamVector, idx: &MultiIndex) -> f64 {
    let Some(p) = f.weights() else {
        return if idx.total() == 0 { 0.0 } else { f64::NEG_INFINITY };
    };
    let mut s = ln_multinomial(idx);
    for (&pj, &n) in p.iter().zip(idx.as_slice()) {
        if n > 0 {
            s += n as f64 * pj.ln();
        }
    }
    s
}

/// Multinomial law of the primary occupations given their total `Σ idx`.
pub fn pmf_conditional(f: &ParamVector, idx: &MultiIndex) -> Result<f64, MeasurementError> {
    check_len(f, idx)?;
    Ok(ln_conditional(f, idx).exp())
}

/// Joint law `(1−g) · multinomial(idx) · g^{Σidx} · Π p_j^{k_j}`.
pub fn pmf_joint(f: &ParamVector, params: &ThermalParams, idx: &MultiIndex) -> Result<f64, MeasurementError> {
    check_len(f, idx)?;
    check_consistent(f, params)?;
    let n = idx.total();
    if n == 0 {
        return Ok(1.0 - params.g);
    }
    if params.g == 0.0 {
        return Ok(0.0);
    }
    let ln = (1.0 - params.g).ln() + n as f64 * params.g.ln() + ln_conditional(f, idx);
    Ok(ln.exp())
}

/// Success probability `π_j = (1−g)/(1 − g q_j)` of particle `j`'s geometric
/// marginal, `j` counted from 1.
pub fn marginal_success(f: &ParamVector, params: &ThermalParams, j: usize) -> Result<f64, MeasurementError> {
    let r = f.r();
    if j == 0 || j > r {
        return Err(MeasurementError::IndexOutOfRange { index: j, r });
    }
    check_consistent(f, params)?;
    let pj = f.weights().map_or(1.0 / r as f64, |p| p[j - 1]);
    let q = 1.0 - pj;
    Ok((1.0 - params.g) / (1.0 - params.g * q))
}

/// `P_j(k) = π_j (1−π_j)^k`.
pub fn pmf_marginal(f: &ParamVector, params: &ThermalParams, j: usize, k: u64) -> Result<f64, MeasurementError> {
    let pi = marginal_success(f, params, j)?;
    Ok(geometric_pmf(1.0 - pi, k))
}

fn geometric_pmf(ratio: f64, k: u64) -> f64 {
    if k == 0 {
        1.0 - ratio
    } else if ratio == 0.0 {
        0.0
    } else {
        (1.0 - ratio) * (k as f64 * ratio.ln()).exp()
    }
}

/// `n̄_j = p_j g/(1−g)`.
pub fn mean_occupation(f: &ParamVector, params: &ThermalParams, j: usize) -> Result<f64, MeasurementError> {
    let r = f.r();
    if j == 0 || j > r {
        return Err(MeasurementError::IndexOutOfRange { index: j, r });
    }
    check_consistent(f, params)?;
    let pj = f.weights().map_or(1.0 / r as f64, |p| p[j - 1]);
    Ok(pj * planck_mean(params))
}

/// `ε̄_j = ħω n̄_j`.
pub fn mean_energy(f: &ParamVector, params: &ThermalParams, j: usize) -> Result<f64, MeasurementError> {
    Ok(params.hbar_omega * mean_occupation(f, params, j)?)
}

/// One measurement record: detector level and the primary occupations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementSample {
    pub n_total: u64,
    pub occupations: MultiIndex,
}

/// Per-sample generator: ChaCha8 keyed by `seed`, stream `index`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Inverse-CDF geometric draw: `⌊ln u / ln g⌋`, `u ∈ (0, 1]`.
fn draw_geometric<R: Rng>(rng: &mut R, g: f64) -> u64 {
    if g == 0.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    (u.ln() / g.ln()).floor() as u64
}

/// Sequential conditional binomials.
fn draw_multinomial<R: Rng>(rng: &mut R, n: u64, p: &[f64]) -> Vec<u32> {
    let mut out = vec![0u32; p.len()];
    let mut remaining = n;
    let mut mass_left = 1.0;
    for (j, &pj) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == p.len() {
            out[j] = remaining as u32;
            break;
        }
        let prob = if mass_left > 0.0 {
            (pj / mass_left).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let k = Binomial::new(remaining, prob)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        out[j] = k as u32;
        remaining -= k;
        mass_left -= pj;
    }
    out
}

/// One measurement sample: detector level first, then the split among the
/// primary oscillators.
pub fn sample_one(f: &ParamVector, seed: u64, index: u64) -> MeasurementSample {
    let mut rng = sample_rng(seed, index);
    let n_total = draw_geometric(&mut rng, f.norm_sq());
    let r = f.r();
    let p = f.weights().unwrap_or_else(|| vec![1.0 / r as f64; r]);
    let occupations = MultiIndex::new(draw_multinomial(&mut rng, n_total, &p));
    MeasurementSample { n_total, occupations }
}

/// `count` i.i.d. measurement samples, ordered by sample index.
///
/// Runs on the ambient rayon pool; output does not depend on thread count.
pub fn sample(
    f: &ParamVector,
    params: &ThermalParams,
    count: usize,
    seed: u64,
) -> Result<Vec<MeasurementSample>, MeasurementError> {
    check_consistent(f, params)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| sample_one(f, seed, i))
        .collect())
}

/// Observed counts per outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram<K: Ord> {
    counts: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for Histogram<K> {
    fn default() -> Self {
        Histogram {
            counts: BTreeMap::new(),
            total: 0,
        }
    }
}

impl<K: Ord> Histogram<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: K) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &u64)> {
        self.counts.iter()
    }
}

impl<K: Ord> FromIterator<K> for Histogram<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut h = Histogram::new();
        for k in iter {
            h.add(k);
        }
        h
    }
}

/// A discrete law whose support can be walked in order of decreasing
/// relevance (for our laws, increasing total occupation).
pub trait DiscreteLaw {
    type Outcome: Ord + Clone;
    fn pmf(&self, outcome: &Self::Outcome) -> f64;
    fn outcomes(&self) -> Box<dyn Iterator<Item = Self::Outcome> + '_>;
}

/// Geometric law on `0, 1, 2, ...` with `P(k) = (1−ratio) ratio^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricLaw {
    pub ratio: f64,
}

impl GeometricLaw {
    pub fn total(params: &ThermalParams) -> Self {
        GeometricLaw { ratio: params.g }
    }

    pub fn marginal(f: &ParamVector, params: &ThermalParams, j: usize) -> Result<Self, MeasurementError> {
        Ok(GeometricLaw {
            ratio: 1.0 - marginal_success(f, params, j)?,
        })
    }

    pub fn mean(&self) -> f64 {
        self.ratio / (1.0 - self.ratio)
    }
}

impl DiscreteLaw for GeometricLaw {
    type Outcome = u64;
    fn pmf(&self, k: &u64) -> f64 {
        geometric_pmf(self.ratio, *k)
    }
    fn outcomes(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        Box::new(0u64..)
    }
}

/// Joint law of the primary occupations.
#[derive(Debug, Clone)]
pub struct JointLaw {
    f: ParamVector,
    params: ThermalParams,
}

impl JointLaw {
    pub fn new(f: ParamVector, params: ThermalParams) -> Result<Self, MeasurementError> {
        check_consistent(&f, &params)?;
        Ok(JointLaw { f, params })
    }
}

impl DiscreteLaw for JointLaw {
    type Outcome = MultiIndex;
    fn pmf(&self, idx: &MultiIndex) -> f64 {
        pmf_joint(&self.f, &self.params, idx).unwrap_or(0.0)
    }
    fn outcomes(&self) -> Box<dyn Iterator<Item = MultiIndex> + '_> {
        let r = self.f.r();
        Box::new((0u32..).flat_map(move |n| Compositions::new(n, r)))
    }
}

/// Result of a Pearson goodness-of-fit comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub chi2: f64,
    pub dof: usize,
    /// Largest `|observed/total − expected probability|` over the bins used.
    pub max_abs_dev: f64,
}

impl FitSummary {
    /// Upper-tail probability of `chi2` under `dof` degrees of freedom.
    pub fn p_value(&self) -> f64 {
        if self.dof == 0 {
            return 1.0;
        }
        ChiSquared::new(self.dof as f64)
            .map(|d| d.sf(self.chi2))
            .unwrap_or(f64::NAN)
    }
}

/// Support walk stops once this much probability mass is covered.
const COVERED_MASS: f64 = 1.0 - 1e-13;
const MAX_OUTCOMES: usize = 2_000_000;

/// Pearson χ² of a histogram against an analytic law.
///
/// Outcomes with expected count at least five get their own bin. Everything
/// else, including outcomes never enumerated, is pooled into one tail bin; a
/// tail below five is folded into the last kept bin.
pub fn compare_histogram<L: DiscreteLaw>(h: &Histogram<L::Outcome>, law: &L) -> Result<FitSummary, MeasurementError> {
    if h.total() == 0 {
        return Err(MeasurementError::EmptyHistogram);
    }
    let total = h.total() as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut covered = 0.0;
    for (walked, outcome) in law.outcomes().enumerate() {
        if covered >= COVERED_MASS || walked >= MAX_OUTCOMES {
            break;
        }
        let p = law.pmf(&outcome);
        covered += p;
        let expected = p * total;
        if expected >= MIN_EXPECTED_COUNT {
            bins.push((h.count(&outcome) as f64, expected));
        }
    }
    if bins.is_empty() {
        return Err(MeasurementError::TooFewCounts);
    }
    let kept_observed: f64 = bins.iter().map(|b| b.0).sum();
    let kept_expected: f64 = bins.iter().map(|b| b.1).sum();
    let tail_observed = total - kept_observed;
    let tail_expected = (total - kept_expected).max(0.0);
    if tail_expected >= MIN_EXPECTED_COUNT {
        bins.push((tail_observed, tail_expected));
    } else if tail_observed > 0.0 || tail_expected > 0.0 {
        let last = bins.last_mut().expect("non-empty");
        last.0 += tail_observed;
        last.1 += tail_expected;
    }

    let mut chi2 = 0.0;
    let mut max_abs_dev = 0.0f64;
    for &(obs, exp) in &bins {
        if exp > 0.0 {
            chi2 += (obs - exp).powi(2) / exp;
        }
        max_abs_dev = max_abs_dev.max((obs - exp).abs() / total);
    }
    Ok(FitSummary {
        chi2,
        dof: bins.len() - 1,
        max_abs_dev,
    })
}
