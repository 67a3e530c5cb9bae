//! Command implementations behind the `thermo-entangle` binary.
//!
//! Each command maps a [`RunConfig`] to the bytes it writes, so output is a
//! pure function of the config.

// `!(x > 0.0)` style comparisons are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fmt::Write as _;

use serde_json::{json, Value};
use thermo_entangle::epr_state::{
    analytic_spectrum, build_matrix_a, covariance, schmidt_weight, ParamVector, StateError, MAX_TRUNCATION,
};
use thermo_entangle::linalg::{determinant, eigh_symmetric, SymMatrix};
use thermo_entangle::measurement::{planck_mean, sample, MeasurementError, ThermalParams};
use thermo_entangle::multi_index::{composition_count, up_to_total};
use thermo_entangle::oscillator_model::{
    coupled_lambdas, displacement_ratio, fig2_curve, mass_matrix, normal_modes, orthogonality_defect,
    reduced_kinetic_matrix, secular_coefficients, vacuum_matrix, xi_grid, ModeKind, ModelError, OscillatorSystem,
};
use thermo_entangle::verify::{self, CheckKind, Fault, VerifyOptions};

pub use config::{CommandConfig, Format, RunConfig};
use config::{Split, SplitName, StateSource};

/// Largest weight lattice `state` will enumerate.
pub const LATTICE_LIMIT: u64 = 2_000_000;

pub const DEFAULT_TOP: usize = 20;
pub const DEFAULT_COUNT: usize = 1000;
pub const DEFAULT_XI_MIN: f64 = 0.05;
pub const DEFAULT_XI_MAX: f64 = 100.0;
pub const DEFAULT_POINTS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What a command produced: the rendered output and any failed checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub failures: Vec<String>,
}

impl Outcome {
    fn ok(output: String) -> Self {
        Outcome {
            output,
            failures: Vec::new(),
        }
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match &cfg.command {
        CommandConfig::State(c) => cmd_state(cfg, c),
        CommandConfig::Sample(c) => cmd_sample(cfg, c),
        CommandConfig::Spectrum(c) => cmd_spectrum(cfg, c),
        CommandConfig::Fig2(c) => cmd_fig2(cfg, c),
        CommandConfig::Verify(c) => cmd_verify(cfg, c),
    }
}

fn hbar_omega(cfg: &RunConfig) -> Result<f64, CliError> {
    let h = cfg.hbar_omega.unwrap_or(1.0);
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("hbar_omega must be positive, got {h}")));
    }
    Ok(h)
}

fn only_json(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.format {
        Some(Format::Csv) => Err(invalid(format!("{} writes JSON only", cfg.command.name()))),
        _ => Ok(()),
    }
}

/// Resolves `f`, or `g` with a split, into a parameter vector.
pub fn resolve_state(src: &StateSource) -> Result<ParamVector, CliError> {
    match (&src.f, src.g) {
        (Some(_), Some(_)) => Err(invalid("give either f or g, not both")),
        (Some(f), None) => {
            if src.p.is_some() {
                return Err(invalid("p only applies together with g"));
            }
            if let Some(r) = src.r {
                if r != f.len() {
                    return Err(invalid(format!("r = {r} but f has {} components", f.len())));
                }
            }
            Ok(ParamVector::new(f.clone())?)
        }
        (None, Some(g)) => {
            if !(0.0..1.0).contains(&g) {
                return Err(invalid(format!("g must lie in [0, 1), got {g}")));
            }
            let p = match (&src.p, src.r) {
                (Some(Split::Weights(w)), Some(r)) if r != w.len() => {
                    return Err(invalid(format!("r = {r} but p has {} components", w.len())));
                }
                (Some(Split::Weights(w)), _) => w.clone(),
                (Some(Split::Named(SplitName::Equal)) | None, Some(r)) if r > 0 => vec![1.0; r],
                (Some(Split::Named(SplitName::Equal)) | None, _) => {
                    return Err(invalid("an equal split needs r >= 1"));
                }
            };
            if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !(p.iter().sum::<f64>() > 0.0) {
                return Err(invalid("p must be non-negative with a positive sum"));
            }
            Ok(ParamVector::from_thermal(g, &p)?)
        }
        (None, None) => Err(invalid("no state given: pass f, or g with p")),
    }
}

fn lattice_size(n: u32, r: usize) -> u64 {
    composition_count(n as u64, r + 1)
}

fn cmd_state(cfg: &RunConfig, c: &config::StateConfig) -> Result<Outcome, CliError> {
    only_json(cfg)?;
    let f = resolve_state(&c.source)?;
    if f.norm_sq() == 0.0 {
        return Err(StateError::ZeroNorm.into());
    }
    let r = f.r();
    let trunc = match cfg.trunc {
        Some(n) if n > MAX_TRUNCATION => return Err(StateError::TruncationTooLarge(n).into()),
        Some(n) if lattice_size(n, r) > LATTICE_LIMIT => {
            return Err(invalid(format!(
                "truncation {n} at r = {r} needs {} weights (limit {LATTICE_LIMIT})",
                lattice_size(n, r)
            )))
        }
        Some(n) => n,
        None => {
            let mut n = f.default_truncation();
            while n > 0 && lattice_size(n, r) > LATTICE_LIMIT {
                n -= 1;
            }
            n
        }
    };

    let form = build_matrix_a(&f);
    let det = determinant(&form.a).map_err(StateError::from)?;
    let numeric = eigh_symmetric(&form.a).map_err(StateError::from)?;
    let analytic = analytic_spectrum(&f)?;
    let sigma = covariance(&form)?;

    let mut weights = Vec::new();
    for idx in up_to_total(trunc, r) {
        let w = schmidt_weight(&f, &idx)?;
        weights.push((idx, w));
    }
    let captured: f64 = weights.iter().map(|(_, w)| w).sum();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top: Vec<Value> = weights
        .iter()
        .take(c.top.unwrap_or(DEFAULT_TOP))
        .map(|(idx, w)| json!({ "n": idx.as_slice(), "weight": w }))
        .collect();

    let eigs = &numeric.eigenvalues;
    let lambda_min = eigs[0];
    let lambda_max = eigs[eigs.len() - 1];
    let v = json!({
        "r": r,
        "f": f.as_slice(),
        "f_squared": f.norm_sq(),
        "matrix_a": form.a.to_rows(),
        "det_a": det,
        "spectrum": {
            "numeric": eigs,
            "analytic": {
                "lambda_max": analytic.lambda_max,
                "lambda_min": analytic.lambda_min,
                "unit_multiplicity": r - 1,
            },
            "max_error": (lambda_max - analytic.lambda_max).abs().max((lambda_min - analytic.lambda_min).abs()),
            "product_extremes": lambda_max * lambda_min,
        },
        "covariance": sigma.to_rows(),
        "truncation": trunc,
        "captured_weight": captured,
        "top_weights": top,
    });
    Ok(Outcome::ok(pretty(&v)))
}

fn cmd_sample(cfg: &RunConfig, c: &config::SampleConfig) -> Result<Outcome, CliError> {
    let seed = cfg
        .seed
        .ok_or_else(|| invalid("sample needs an explicit seed (--seed)"))?;
    let count = c.count.unwrap_or(DEFAULT_COUNT);
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let f = resolve_state(&c.source)?;
    let params = ThermalParams::for_state(&f, hbar_omega(cfg)?)?;
    let draws = sample(&f, &params, count, seed)?;

    let n = draws.len() as f64;
    let mean = draws.iter().map(|d| d.n_total as f64).sum::<f64>() / n;
    let var = draws.iter().map(|d| (d.n_total as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let planck = planck_mean(&params);
    let std_error = (var / n).sqrt();

    let out = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::with_capacity(count * 16);
            let _ = writeln!(
                s,
                "# sample r={} g={} seed={} count={}",
                f.r(),
                csv_float(params.g()),
                seed,
                count
            );
            s.push_str("sample_index,n_total");
            for j in 1..=f.r() {
                let _ = write!(s, ",n_{j}");
            }
            s.push('\n');
            for (i, d) in draws.iter().enumerate() {
                let _ = write!(s, "{i},{}", d.n_total);
                for n in d.occupations.as_slice() {
                    let _ = write!(s, ",{n}");
                }
                s.push('\n');
            }
            let _ = writeln!(s, "# mean_n_total={}", csv_float(mean));
            let _ = writeln!(s, "# std_error={}", csv_float(std_error));
            let _ = writeln!(s, "# planck_mean={}", csv_float(planck));
            s
        }
        Format::Json => pretty(&json!({
            "r": f.r(),
            "g": params.g(),
            "seed": seed,
            "samples": draws
                .iter()
                .map(|d| json!({ "n_total": d.n_total, "occupations": d.occupations.as_slice() }))
                .collect::<Vec<_>>(),
            "mean_n_total": mean,
            "std_error": std_error,
            "planck_mean": planck,
        })),
    };
    Ok(Outcome::ok(out))
}

/// Builds the system, defaulting every parameter to 1.
pub fn resolve_system(c: &config::SpectrumConfig) -> Result<OscillatorSystem, CliError> {
    Ok(OscillatorSystem::new(
        c.r.unwrap_or(1),
        c.m.unwrap_or(1.0),
        c.m0.unwrap_or(1.0),
        c.big_m.unwrap_or(1.0),
        c.k.unwrap_or(1.0),
        c.chi.unwrap_or(1.0),
    )?)
}

fn kind_label(k: ModeKind) -> &'static str {
    match k {
        ModeKind::Coupled => "coupled",
        ModeKind::Internal => "internal",
        ModeKind::Soft => "soft mode",
    }
}

fn cmd_spectrum(cfg: &RunConfig, c: &config::SpectrumConfig) -> Result<Outcome, CliError> {
    only_json(cfg)?;
    let sys = resolve_system(c)?;
    let modes = normal_modes(&sys)?;
    let (a, b, cc) = secular_coefficients(&sys);
    let roots = coupled_lambdas(&sys)?;
    let ratio = |l: f64| displacement_ratio(&sys, l).ok();

    // Each secular root against the nearest generalized eigenvalue.
    let secular_residual = [roots.0, roots.1]
        .iter()
        .map(|&l| {
            modes
                .lambdas
                .iter()
                .map(|&x| (x - l).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let (mass_defect, stiffness_defect) = orthogonality_defect(&sys, &modes);
    let schur_residual = reduced_kinetic_matrix(&sys)
        .map(|s| s.max_abs_diff(&mass_matrix(&sys)))
        .ok();
    let vacuum = vacuum_matrix(&sys).ok().map(|m: SymMatrix| m.to_rows());

    let v = json!({
        "system": {
            "r": sys.r, "m": sys.m, "m0": sys.m0, "M": sys.big_m, "k": sys.k, "chi": sys.chi,
            "xi": sys.xi(),
        },
        "lambdas": modes.lambdas,
        "kinds": modes.kinds.iter().map(|k| kind_label(*k)).collect::<Vec<_>>(),
        "modes": (0..modes.len()).map(|s| modes.mode(s)).collect::<Vec<_>>(),
        "modal_masses": modes.modal_masses,
        "modal_rigidities": modes.modal_rigidities,
        "secular": {
            "coefficients": [a, b, cc],
            "roots": [roots.0, roots.1],
            "ratios": [ratio(roots.0), ratio(roots.1)],
        },
        "residuals": {
            "secular_vs_generalized": secular_residual,
            "mass_orthogonality": mass_defect,
            "stiffness_orthogonality": stiffness_defect,
            "mass_matrix_vs_schur": schur_residual,
        },
        "vacuum_matrix": vacuum,
    });
    Ok(Outcome::ok(pretty(&v)))
}

fn cmd_fig2(cfg: &RunConfig, c: &config::Fig2Config) -> Result<Outcome, CliError> {
    let h = hbar_omega(cfg)?;
    let grid = xi_grid(
        c.xi_min.unwrap_or(DEFAULT_XI_MIN),
        c.xi_max.unwrap_or(DEFAULT_XI_MAX),
        c.points.unwrap_or(DEFAULT_POINTS),
        c.log.unwrap_or(false),
    )?;
    let rows = fig2_curve(&grid, h)?;
    let out = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "# theta and mean_energy in energy units with hbar_omega={}",
                csv_float(h)
            );
            s.push_str("xi,theta,mean_energy\n");
            for row in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    csv_float(row.xi),
                    csv_float(row.theta),
                    csv_float(row.mean_energy)
                );
            }
            s
        }
        Format::Json => pretty(&json!({
            "hbar_omega": h,
            "rows": rows
                .iter()
                .map(|r| json!({ "xi": r.xi, "theta": r.theta, "mean_energy": r.mean_energy }))
                .collect::<Vec<_>>(),
        })),
    };
    Ok(Outcome::ok(out))
}

fn kind_name(k: CheckKind) -> &'static str {
    match k {
        CheckKind::Numerical => "numerical",
        CheckKind::Statistical => "statistical",
        CheckKind::Qualitative => "qualitative",
    }
}

fn cmd_verify(cfg: &RunConfig, c: &config::VerifyConfig) -> Result<Outcome, CliError> {
    only_json(cfg)?;
    let fault = c
        .fault
        .as_deref()
        .map(|s| s.parse::<Fault>())
        .transpose()
        .map_err(CliError::Invalid)?;
    if let Some(t) = cfg.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("tolerance must be positive, got {t}")));
        }
    }
    let mut options = VerifyOptions {
        tolerance_override: cfg.tol,
        fault,
        ..VerifyOptions::default()
    };
    if let Some(seed) = cfg.seed {
        options.seed = seed;
    }
    let report = verify::run(&options);
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "kind": kind_name(c.kind),
                "metric": c.metric,
                "tolerance": c.tolerance,
                "status": if c.passed { "pass" } else { "fail" },
            })
        })
        .collect();
    let failures: Vec<String> = report.failures().into_iter().map(String::from).collect();
    let v = json!({
        "seed": options.seed,
        "tolerance_override": options.tolerance_override,
        "all_passed": report.all_passed(),
        "checks": checks,
        "failures": failures,
    });
    Ok(Outcome {
        output: pretty(&v),
        failures,
    })
}
