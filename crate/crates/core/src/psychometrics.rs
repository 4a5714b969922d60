//! Reliability and sampling-adequacy diagnostics run before factor analysis.

use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{chi2_sf, correlation, inverse_spd, log_det_spd, mean_var};

pub const ALPHA_GATE: f64 = 0.7;
pub const KMO_GATE: f64 = 0.6;
pub const BARTLETT_GATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BartlettTest {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AdequacyReport {
    pub n: usize,
    pub items: usize,
    pub cronbach_alpha: f64,
    pub kmo: Option<f64>,
    pub bartlett: Option<BartlettTest>,
    pub alpha_pass: bool,
    pub kmo_pass: bool,
    pub bartlett_pass: bool,
    pub notes: Vec<String>,
}

/// Cronbach's alpha of a respondents-by-items matrix.
pub fn cronbach_alpha(items: &DMatrix<f64>) -> Result<f64> {
    let (n, k) = items.shape();
    if k < 2 || n < 2 {
        return Err(Error::InvalidInput(format!(
            "cronbach alpha needs at least 2 items and 2 respondents (got {k} items, {n} rows)"
        )));
    }
    let item_var_sum: f64 = (0..k).map(|j| mean_var(items.column(j).as_slice()).1).sum();
    let totals: Vec<f64> = items.row_iter().map(|r| r.sum()).collect();
    let total_var = mean_var(&totals).1;
    if !(total_var > 0.0) {
        return Err(Error::InvalidInput("total score has zero variance".into()));
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var_sum / total_var))
}

/// Kaiser-Meyer-Olkin measure of sampling adequacy.
///
/// Partial correlations come from the anti-image of `r`:
/// `q_ij = -inv_ij / sqrt(inv_ii * inv_jj)`.
pub fn kmo(r: &DMatrix<f64>) -> Result<f64> {
    let p = r.nrows();
    let inv = inverse_spd(r).ok_or_else(|| Error::InsufficientCorrelation("correlation matrix is singular".into()))?;
    let (mut r2, mut q2) = (0.0, 0.0);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            r2 += r[(i, j)].powi(2);
            let q = -inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt();
            q2 += q * q;
        }
    }
    if r2 + q2 <= f64::EPSILON {
        return Err(Error::InsufficientCorrelation("no off-diagonal correlation".into()));
    }
    Ok(r2 / (r2 + q2))
}

/// Bartlett's test of sphericity for a correlation matrix from `n` rows.
pub fn bartlett(r: &DMatrix<f64>, n: usize) -> Result<BartlettTest> {
    let p = r.nrows();
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "bartlett test needs N > p (N = {n}, p = {p})"
        )));
    }
    let ln_det = log_det_spd(r).ok_or_else(|| Error::NotPositiveDefinite("correlation matrix".into()))?;
    let factor = n as f64 - 1.0 - (2.0 * p as f64 + 5.0) / 6.0;
    let chi2 = (-factor * ln_det).max(0.0);
    let df = p * (p - 1) / 2;
    Ok(BartlettTest {
        chi2,
        df,
        p_value: chi2_sf(chi2, df as f64),
    })
}

/// All three gates on one item matrix.
pub fn adequacy(items: &DMatrix<f64>) -> Result<AdequacyReport> {
    let (n, k) = items.shape();
    let alpha = cronbach_alpha(items)?;
    let mut notes = Vec::new();
    let (kmo_value, bart) = match correlation(items) {
        Ok(r) => {
            let kv = kmo(&r).map_err(|e| notes.push(format!("kmo: {e}"))).ok();
            let b = bartlett(&r, n).map_err(|e| notes.push(format!("bartlett: {e}"))).ok();
            (kv, b)
        }
        Err(e) => {
            notes.push(format!("correlation: {e}"));
            (None, None)
        }
    };
    Ok(AdequacyReport {
        n,
        items: k,
        cronbach_alpha: alpha,
        kmo: kmo_value,
        bartlett: bart,
        alpha_pass: alpha >= ALPHA_GATE,
        kmo_pass: kmo_value.is_some_and(|v| v >= KMO_GATE),
        bartlett_pass: bart.is_some_and(|b| b.p_value < BARTLETT_GATE),
        notes,
    })
}
