//! Column layouts of every CSV the binary writes. See `SCHEMAS.md`.

pub const ROUNDS: &[&str] = &[
    "round",
    "n_pr",
    "n_du",
    "selected",
    "kappa1",
    "kappa2",
    "max_estimate",
    "max_relative",
    "argmax",
    "max_err_primal",
    "max_err_output",
];

pub const ONLINE: &[&str] = &[
    "kappa1",
    "kappa2",
    "horizon",
    "n_pr",
    "n_du",
    "alpha_lb",
    "s_plain",
    "s_corrected",
    "delta_pr",
    "delta_du",
    "delta_s",
    "delta_s_tilde",
    "gho_pr",
    "gho_s",
    "gho_new",
];

pub const VALIDATE: &[&str] = &[
    "kappa1",
    "kappa2",
    "n_pr",
    "n_du",
    "s_true",
    "s_plain",
    "s_corrected",
    "err_primal",
    "err_dual",
    "err_corrected",
    "err_plain",
    "bound_primal",
    "bound_dual",
    "bound_corrected",
    "bound_plain",
    "eff_primal",
    "eff_dual",
    "eff_corrected",
    "eff_plain",
    "reliable",
];

pub const EFFECTIVITY: &[&str] = &[
    "source",
    "n_pr",
    "n_du",
    "points",
    "violations",
    "max_err_primal",
    "max_bound_primal",
    "max_eff_primal",
    "mean_eff_primal",
    "max_err_corrected",
    "max_bound_corrected",
    "max_eff_corrected",
    "max_err_plain",
    "max_bound_plain",
    "max_eff_plain",
    "mean_eff_plain",
];

pub const CURVES: &[&str] = &["source", "round", "n_pr", "n_du", "max_estimate", "max_relative", "max_err_primal", "max_err_output"];

/// Shortest round-trip representation; missing values are empty cells.
pub fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:e}"),
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}
