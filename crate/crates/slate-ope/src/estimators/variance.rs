//! Population variance constants and log-RMSE standard errors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric;
use crate::oracle::PopulationMoments;

use super::DEGENERATE_DENOMINATOR;

/// Tolerance for the variance ordering `V* <= Vdagger <= min(V0, Vtheta)`.
const ORDERING_TOL: f64 = 1e-10;

/// Closed-form variance improvements between estimators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Improvements {
    /// `V0 - Vdagger = E[GR(G-1)]^2 / E[(G-1)^2]`.
    pub single_over_pi: f64,
    /// `Vtheta - Vdagger`.
    pub single_over_wpi: f64,
    /// `V0 - V* = sum_k E[GR(Y_k-1)]^2 / E[(Y_k-1)^2]`.
    pub multi_over_pi: f64,
    /// `Vdagger - V*`.
    pub multi_over_single: f64,
}

/// Asymptotic variance constants of the estimator family, computed from
/// exact population moments.
///
/// * `v0` — variance of the per-record PI term `G R`.
/// * `v_theta` — variance at the broadcast weight `beta = theta`; this is
///   the asymptotic variance of the self-normalized estimator.
/// * `v_dagger` — the best variance achievable with one shared weight,
///   attained at `beta_star`.
/// * `v_star` — the best variance over per-slot weights, attained at
///   `w_star`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    pub v0: f64,
    pub v_theta: f64,
    pub v_dagger: f64,
    pub v_star: f64,
    pub beta_star: f64,
    pub w_star: Vec<f64>,
    pub improvements: Improvements,
}

/// Evaluates the optimal weights and variance constants from enumerated
/// moments and checks the ordering `V* <= Vdagger <= min(V0, Vtheta)` to
/// within 1e-10.
pub fn variance_report(moments: &PopulationMoments) -> Result<VarianceReport> {
    let bad = |what: &str, v: f64| {
        Error::InconsistentMoments(format!("{what} = {v} is negative beyond tolerance"))
    };
    if moments.var_gr < -1e-12 {
        return Err(bad("Var(GR)", moments.var_gr));
    }
    if moments.e_gm1_sq < -1e-12 {
        return Err(bad("E[(G-1)^2]", moments.e_gm1_sq));
    }
    for (k, &v) in moments.var_yk.iter().enumerate() {
        if v < -1e-12 {
            return Err(bad(&format!("Var(Y_{k})"), v));
        }
    }

    let theta = moments.theta;
    let v0 = moments.var_gr.max(0.0);
    let a = moments.e_gr_gm1; // E[GR(G-1)]
    let s = moments.e_gm1_sq.max(0.0); // E[(G-1)^2] = sum_k Var(Y_k)

    // Variance at any broadcast weight b: V0 - 2 b a + b^2 s.
    let v_theta = v0 - 2.0 * theta * a + theta * theta * s;

    let (beta_star, single_gain) = if s < DEGENERATE_DENOMINATOR {
        (0.0, 0.0)
    } else {
        (a / s, a * a / s)
    };
    let v_dagger = v0 - single_gain;

    let mut w_star = Vec::with_capacity(moments.var_yk.len());
    let mut multi_gain = 0.0;
    for (&cov, &var) in moments.e_gr_yk.iter().zip(&moments.var_yk) {
        if var < DEGENERATE_DENOMINATOR {
            w_star.push(0.0);
        } else {
            w_star.push(cov / var);
            multi_gain += cov * cov / var;
        }
    }
    let v_star = v0 - multi_gain;

    let improvements = Improvements {
        single_over_pi: single_gain,
        single_over_wpi: single_gain - 2.0 * theta * moments.e_g2r
            + theta * theta * (2.0 + s),
        multi_over_pi: multi_gain,
        multi_over_single: multi_gain - single_gain,
    };

    let min_base = v0.min(v_theta);
    if v_star > v_dagger + ORDERING_TOL || v_dagger > min_base + ORDERING_TOL {
        return Err(Error::InconsistentMoments(format!(
            "variance ordering violated: V*={v_star}, Vdagger={v_dagger}, \
             min(V0, Vtheta)={min_base}"
        )));
    }

    Ok(VarianceReport {
        v0,
        v_theta,
        v_dagger,
        v_star,
        beta_star,
        w_star,
        improvements,
    })
}

/// Log-RMSE with a delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaMethodSummary {
    /// `log10(MSE) / 2`; negative infinity when the MSE is zero.
    pub log10_rmse: f64,
    /// Standard error of `log10_rmse`; `None` when the MSE is zero.
    pub se: Option<f64>,
}

/// Summarizes replicate squared errors as `log10(RMSE)` with the
/// delta-method standard error
/// `se = (sd(sq_errors) / sqrt(m)) / (MSE * 2 ln 10)`.
///
/// Needs at least two finite, nonnegative squared errors. A zero MSE
/// yields `log10_rmse = -inf` with no standard error.
pub fn delta_method_se(squared_errors: &[f64]) -> Result<DeltaMethodSummary> {
    if squared_errors.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 squared errors, got {}",
            squared_errors.len()
        )));
    }
    if let Some(bad) = squared_errors.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Config(format!(
            "squared error {bad} is not a finite nonnegative number"
        )));
    }
    let mse = numeric::mean(squared_errors);
    if mse <= 0.0 {
        return Ok(DeltaMethodSummary { log10_rmse: f64::NEG_INFINITY, se: None });
    }
    let m = squared_errors.len() as f64;
    let sd = numeric::sample_std(squared_errors).expect("len >= 2");
    let se = (sd / m.sqrt()) / (mse * 2.0 * std::f64::consts::LN_10);
    Ok(DeltaMethodSummary { log10_rmse: mse.log10() / 2.0, se: Some(se) })
}
