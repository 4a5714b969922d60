//! Goodness-of-fit indices and construct validity of a fitted model.

use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::estimate::SemEstimate;
use crate::error::{Error, Result};
use crate::numeric::{inverse_spd, log_det_spd, serde_rows};

pub const CMIN_DF_GATE: f64 = 3.0;
pub const RMSEA_GATE: f64 = 0.08;
pub const INCREMENTAL_GATE: f64 = 0.8;
pub const CR_GATE: f64 = 0.7;
pub const AVE_GATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GateCheck {
    pub index: String,
    pub value: Option<f64>,
    /// `"<"` or `">"`.
    pub direction: String,
    pub threshold: f64,
    /// `None` when the index is undefined for this model.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FitIndices {
    pub n: usize,
    pub chi2: f64,
    pub df: usize,
    pub p_value: Option<f64>,
    pub cmin_df: Option<f64>,
    pub rmsea: Option<f64>,
    pub gfi: f64,
    pub agfi: Option<f64>,
    pub nfi: Option<f64>,
    pub cfi: f64,
    pub tli: Option<f64>,
    pub ifi: Option<f64>,
    pub baseline_chi2: f64,
    pub baseline_df: usize,
    pub gates: Vec<GateCheck>,
}

impl FitIndices {
    /// True when no defined index fails its gate.
    pub fn all_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass != Some(false))
    }

    /// Indices from the model and independence-model statistics.
    pub fn from_statistics(
        chi2: f64,
        df: usize,
        baseline_chi2: f64,
        baseline_df: usize,
        n: usize,
        p: usize,
        gfi: f64,
    ) -> Self {
        let dff = df as f64;
        let bdf = baseline_df as f64;
        let positive = |v: f64| (v > 0.0).then_some(v);
        let cmin_df = (df > 0).then(|| chi2 / dff);
        let rmsea = (df > 0 && n > 1).then(|| ((chi2 - dff).max(0.0) / (dff * (n as f64 - 1.0))).sqrt());
        let nfi = positive(baseline_chi2).map(|b| 1.0 - chi2 / b);
        let model_excess = (chi2 - dff).max(0.0);
        let denom = model_excess.max(baseline_chi2 - bdf).max(0.0);
        let cfi = if denom > 0.0 { 1.0 - model_excess / denom } else { 1.0 };
        let tli = match (df > 0, baseline_df > 0) {
            (true, true) => {
                let base_ratio = baseline_chi2 / bdf;
                positive(base_ratio - 1.0).map(|d| (base_ratio - chi2 / dff) / d)
            }
            _ => None,
        };
        let ifi = positive(baseline_chi2 - dff).map(|d| (baseline_chi2 - chi2) / d);
        let moments = (p * (p + 1)) as f64 / 2.0;
        let agfi = (df > 0).then(|| 1.0 - moments / dff * (1.0 - gfi));

        let mut gates = vec![
            gate("CMIN/DF", cmin_df, "<", CMIN_DF_GATE),
            gate("RMSEA", rmsea, "<", RMSEA_GATE),
        ];
        for (name, v) in [
            ("GFI", Some(gfi)),
            ("AGFI", agfi),
            ("NFI", nfi),
            ("TLI", tli),
            ("IFI", ifi),
            ("CFI", Some(cfi)),
        ] {
            gates.push(gate(name, v, ">", INCREMENTAL_GATE));
        }
        Self {
            n,
            chi2,
            df,
            p_value: (df > 0).then(|| crate::numeric::chi2_sf(chi2, dff)),
            cmin_df,
            rmsea,
            gfi,
            agfi,
            nfi,
            cfi,
            tli,
            ifi,
            baseline_chi2,
            baseline_df,
            gates,
        }
    }
}

fn gate(index: &str, value: Option<f64>, direction: &str, threshold: f64) -> GateCheck {
    let pass = value.map(|v| if direction == "<" { v < threshold } else { v > threshold });
    GateCheck {
        index: index.to_string(),
        value,
        direction: direction.to_string(),
        threshold,
        pass,
    }
}

/// Chi-square of the independence model `Σ = diag(S)`.
pub fn baseline_chi2(sample: &DMatrix<f64>, n: usize) -> Result<f64> {
    let ln_det = log_det_spd(sample).ok_or_else(|| Error::NotPositiveDefinite("sample covariance".into()))?;
    let ln_diag: f64 = (0..sample.nrows()).map(|i| sample[(i, i)].ln()).sum();
    Ok((n as f64 - 1.0) * (ln_diag - ln_det).max(0.0))
}

/// `1 - tr((Σ⁻¹S - I)²) / tr((Σ⁻¹S)²)`.
pub fn gfi(sample: &DMatrix<f64>, implied: &DMatrix<f64>) -> Result<f64> {
    let inv = inverse_spd(implied).ok_or_else(|| Error::NotPositiveDefinite("implied covariance".into()))?;
    let m = inv * sample;
    let p = m.nrows();
    let resid = &m - DMatrix::identity(p, p);
    let num = (&resid * &resid).trace();
    let den = (&m * &m).trace();
    Ok(1.0 - num / den)
}

pub fn fit_indices(est: &SemEstimate) -> Result<FitIndices> {
    let p = est.observed.len();
    Ok(FitIndices::from_statistics(
        est.chi2,
        est.df,
        baseline_chi2(&est.sample, est.n)?,
        p * (p - 1) / 2,
        est.n,
        p,
        gfi(&est.sample, &est.implied)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FactorValidity {
    pub latent: String,
    pub composite_reliability: f64,
    pub ave: f64,
    pub sqrt_ave: f64,
    pub cr_pass: bool,
    pub ave_pass: bool,
    /// sqrt(AVE) exceeds every correlation with another latent.
    pub discriminant_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidityReport {
    pub factors: Vec<FactorValidity>,
    /// Latent correlations with sqrt(AVE) on the diagonal, in `factors` order.
    #[serde(with = "serde_rows")]
    #[schemars(with = "Vec<Vec<f64>>")]
    pub fornell_larcker: DMatrix<f64>,
    pub all_pass: bool,
}

/// `(Σλ)² / ((Σλ)² + Σ(1 - λ²))` over standardized loadings.
pub fn composite_reliability(std_loadings: &[f64]) -> f64 {
    let sum: f64 = std_loadings.iter().sum();
    let err: f64 = std_loadings.iter().map(|l| 1.0 - l * l).sum();
    sum * sum / (sum * sum + err)
}

/// Mean squared standardized loading.
pub fn average_variance_extracted(std_loadings: &[f64]) -> f64 {
    std_loadings.iter().map(|l| l * l).sum::<f64>() / std_loadings.len() as f64
}

/// Validity from per-latent standardized loadings and the latent
/// correlation matrix (same order).
pub fn validity_from_loadings(
    names: &[String],
    loadings: &[Vec<f64>],
    correlation: &DMatrix<f64>,
) -> Result<ValidityReport> {
    let k = names.len();
    if loadings.len() != k || correlation.nrows() != k || correlation.ncols() != k {
        return Err(Error::InvalidInput("validity inputs disagree in size".into()));
    }
    if let Some(i) = loadings.iter().position(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("latent `{}` has no loadings", names[i])));
    }
    let ave: Vec<f64> = loadings.iter().map(|l| average_variance_extracted(l)).collect();
    let mut table = correlation.clone();
    let mut factors = Vec::with_capacity(k);
    for j in 0..k {
        let sqrt_ave = ave[j].sqrt();
        table[(j, j)] = sqrt_ave;
        let cr = composite_reliability(&loadings[j]);
        let discriminant_pass = (0..k).filter(|&o| o != j).all(|o| sqrt_ave > correlation[(j, o)].abs());
        factors.push(FactorValidity {
            latent: names[j].clone(),
            composite_reliability: cr,
            ave: ave[j],
            sqrt_ave,
            cr_pass: cr >= CR_GATE,
            ave_pass: ave[j] >= AVE_GATE,
            discriminant_pass,
        });
    }
    let all_pass = factors.iter().all(|f| f.cr_pass && f.ave_pass && f.discriminant_pass);
    Ok(ValidityReport {
        factors,
        fornell_larcker: table,
        all_pass,
    })
}

/// Construct validity of every latent that has observed indicators.
pub fn construct_validity(est: &SemEstimate) -> Result<ValidityReport> {
    let corr = est.latent_correlation();
    let mut names = Vec::new();
    let mut loadings = Vec::new();
    let mut keep = Vec::new();
    for (j, l) in est.model.latents.iter().enumerate() {
        if l.indicators.is_empty() {
            continue;
        }
        let std: Vec<f64> = est.standardized_loadings(&l.name).into_iter().map(|(_, v)| v).collect();
        names.push(l.name.clone());
        loadings.push(std);
        keep.push(j);
    }
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |a, b| corr[(keep[a], keep[b])]);
    validity_from_loadings(&names, &loadings, &sub)
}
