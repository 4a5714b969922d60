//! Maximum-likelihood estimation by quasi-Newton descent.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::model::{MeasurementModel, ModelSpec, ParamKind, ParamLayout, SemMatrices, Slot};
use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::numeric::{chi2_sf, covariance, inverse_spd, log_det_spd, serde_rows, two_sided_p};

/// A residual variance below this share of the observed variance is
/// reported as a boundary (Heywood) solution.
pub const HEYWOOD_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence when the largest absolute gradient entry drops below this.
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ParamEstimate {
    #[serde(flatten)]
    pub kind: ParamKind,
    pub free: bool,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub standardized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SemEstimate {
    pub model: ModelSpec,
    /// Item ids of the rows/columns of `sample` and `implied`.
    pub observed: Vec<usize>,
    pub n: usize,
    pub params: Vec<ParamEstimate>,
    /// Free parameters on their natural scale, in layout order.
    pub free_values: Vec<f64>,
    pub f_min: f64,
    pub chi2: f64,
    pub df: usize,
    pub p_value: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max: f64,
    /// Objective after every accepted step, starting with the start values.
    pub objective_trace: Vec<f64>,
    #[serde(with = "serde_rows")]
    #[schemars(with = "Vec<Vec<f64>>")]
    pub sample: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    #[schemars(with = "Vec<Vec<f64>>")]
    pub implied: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    #[schemars(with = "Vec<Vec<f64>>")]
    pub latent_covariance: DMatrix<f64>,
    /// Items whose residual variance sits at the lower boundary.
    pub heywood: Vec<usize>,
    /// Squared multiple correlation of every observed item.
    pub item_r2: BTreeMap<usize, f64>,
    /// Explained share of variance of every endogenous latent.
    pub latent_r2: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl SemEstimate {
    pub fn require_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                gradient: self.gradient_max,
            })
        }
    }

    pub fn param(&self, kind: &ParamKind) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| &p.kind == kind)
    }

    /// Standardized loadings of one latent, in indicator order.
    pub fn standardized_loadings(&self, latent: &str) -> Vec<(usize, f64)> {
        self.params
            .iter()
            .filter_map(|p| match &p.kind {
                ParamKind::Loading { latent: l, item } if l == latent => {
                    Some((*item, p.standardized.unwrap_or(f64::NAN)))
                }
                _ => None,
            })
            .collect()
    }

    /// Standardized structural coefficients as `(from, to, value)`.
    pub fn standardized_paths(&self) -> Vec<(String, String, f64)> {
        self.params
            .iter()
            .filter_map(|p| match &p.kind {
                ParamKind::Path { from, to } => Some((from.clone(), to.clone(), p.standardized.unwrap_or(f64::NAN))),
                _ => None,
            })
            .collect()
    }

    /// Model-implied latent correlation matrix.
    pub fn latent_correlation(&self) -> DMatrix<f64> {
        let c = &self.latent_covariance;
        DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] / (c[(i, i)] * c[(j, j)]).sqrt())
    }
}

/// Shape of a derivative `∂Σ/∂θ_k`.
enum Deriv {
    /// `u vᵀ + v uᵀ`.
    Sym(DVector<f64>, DVector<f64>),
    /// `u uᵀ`.
    Outer(DVector<f64>),
    /// `e_i e_iᵀ`.
    Diag(usize),
}

impl Deriv {
    /// `tr(W ∂Σ)` for symmetric `W`.
    fn trace_with(&self, w: &DMatrix<f64>) -> f64 {
        match self {
            Deriv::Sym(u, v) => 2.0 * u.dot(&(w * v)),
            Deriv::Outer(u) => u.dot(&(w * u)),
            Deriv::Diag(i) => w[(*i, *i)],
        }
    }

    /// `A ∂Σ` as a dense matrix.
    fn left_mul(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Deriv::Sym(u, v) => (a * u) * v.transpose() + (a * v) * u.transpose(),
            Deriv::Outer(u) => (a * u) * u.transpose(),
            Deriv::Diag(i) => {
                let mut out = DMatrix::zeros(a.nrows(), a.ncols());
                out.set_column(*i, &a.column(*i));
                out
            }
        }
    }
}

fn derivatives(layout: &ParamLayout, mats: &SemMatrices) -> Result<Vec<Deriv>> {
    let a = mats.total_effects()?;
    let c = &a * &mats.psi * a.transpose();
    let la = &mats.lambda * &a;
    let lc = &mats.lambda * &c;
    let p = layout.p;
    Ok(layout
        .free_slots()
        .map(|slot| match slot {
            Slot::Lambda(i, j) => {
                let mut e = DVector::zeros(p);
                e[i] = 1.0;
                Deriv::Sym(e, lc.column(j).into_owned())
            }
            Slot::Beta(t, f) => Deriv::Sym(la.column(t).into_owned(), lc.column(f).into_owned()),
            Slot::PsiDiag(j) => Deriv::Outer(la.column(j).into_owned()),
            Slot::PsiOff(x, y) => Deriv::Sym(la.column(x).into_owned(), la.column(y).into_owned()),
            Slot::Theta(i) => Deriv::Diag(i),
        })
        .collect())
}

/// Discrepancy function and its pieces for one sample covariance.
pub struct MlObjective<'a> {
    layout: &'a ParamLayout,
    sample: &'a DMatrix<f64>,
    ln_det_sample: f64,
    variance_mask: Vec<bool>,
}

struct Evaluation {
    value: f64,
    /// Gradient with respect to the natural parameters.
    gradient: DVector<f64>,
    sigma_inv: DMatrix<f64>,
    mats: SemMatrices,
}

impl<'a> MlObjective<'a> {
    pub fn new(layout: &'a ParamLayout, sample: &'a DMatrix<f64>) -> Result<Self> {
        if sample.nrows() != layout.p || sample.ncols() != layout.p {
            return Err(Error::InvalidInput(format!(
                "sample covariance is {}x{}, model has {} observed variables",
                sample.nrows(),
                sample.ncols(),
                layout.p
            )));
        }
        let ln_det_sample =
            log_det_spd(sample).ok_or_else(|| Error::NotPositiveDefinite("sample covariance".into()))?;
        Ok(Self {
            layout,
            sample,
            ln_det_sample,
            variance_mask: layout.free_slots().map(Slot::is_variance).collect(),
        })
    }

    /// `F = ln|Σ| + tr(SΣ⁻¹) - ln|S| - p`; `None` when Σ is not positive
    /// definite or a variance parameter is not positive.
    pub fn value(&self, theta: &[f64]) -> Option<f64> {
        self.evaluate(theta, false).map(|e| e.value)
    }

    /// Analytic gradient with respect to the natural parameters.
    pub fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.evaluate(theta, true).map(|e| e.gradient.iter().copied().collect())
    }

    fn evaluate(&self, theta: &[f64], with_gradient: bool) -> Option<Evaluation> {
        if theta
            .iter()
            .zip(&self.variance_mask)
            .any(|(v, &is_var)| !v.is_finite() || (is_var && *v <= 0.0))
        {
            return None;
        }
        let mats = self.layout.matrices(theta);
        let sigma = mats.implied_sigma().ok()?;
        let ln_det = log_det_spd(&sigma)?;
        let sigma_inv = inverse_spd(&sigma)?;
        let p = self.layout.p as f64;
        let trace = (self.sample * &sigma_inv).trace();
        let value = ln_det + trace - self.ln_det_sample - p;
        if !value.is_finite() {
            return None;
        }
        let gradient = if with_gradient {
            let w = &sigma_inv * (&sigma - self.sample) * &sigma_inv;
            let derivs = derivatives(self.layout, &mats).ok()?;
            DVector::from_iterator(derivs.len(), derivs.iter().map(|d| d.trace_with(&w)))
        } else {
            DVector::zeros(0)
        };
        Some(Evaluation {
            value,
            gradient,
            sigma_inv,
            mats,
        })
    }

    fn to_natural(&self, x: &DVector<f64>) -> Vec<f64> {
        x.iter()
            .zip(&self.variance_mask)
            .map(|(v, &is_var)| if is_var { v.exp() } else { *v })
            .collect()
    }

    /// Chain-rule factors `dθ/dx` for the log-variance parameterization.
    fn jacobian(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            theta.len(),
            theta
                .iter()
                .zip(&self.variance_mask)
                .map(|(v, &is_var)| if is_var { *v } else { 1.0 }),
        )
    }
}

/// Expected information `H_kl = tr(Σ⁻¹ ∂_kΣ Σ⁻¹ ∂_lΣ)`.
fn information(layout: &ParamLayout, mats: &SemMatrices, sigma_inv: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let derivs = derivatives(layout, mats)?;
    let g: Vec<DMatrix<f64>> = derivs.iter().map(|d| d.left_mul(sigma_inv)).collect();
    let q = g.len();
    let mut h = DMatrix::zeros(q, q);
    for k in 0..q {
        for l in k..q {
            let v = g[k].component_mul(&g[l].transpose()).sum();
            h[(k, l)] = v;
            h[(l, k)] = v;
        }
    }
    Ok(h)
}

fn start_values(model: &MeasurementModel, layout: &ParamLayout, s: &DMatrix<f64>) -> Vec<f64> {
    let observed = model.observed();
    let row_of = |item: usize| observed.iter().position(|&o| o == item).expect("observed");
    let unit_variance = model.identification() == super::model::Identification::UnitVariance;
    layout
        .free_slots()
        .map(|slot| match slot {
            Slot::Lambda(i, _) if unit_variance => (0.5 * s[(i, i)]).sqrt(),
            Slot::Lambda(..) => 1.0,
            Slot::Beta(..) | Slot::PsiOff(..) => 0.0,
            Slot::PsiDiag(j) => {
                let ind = model.indicators(j);
                let r = row_of(ind[0]);
                if ind.len() == 1 {
                    s[(r, r)]
                } else {
                    0.5 * s[(r, r)]
                }
            }
            Slot::Theta(i) => 0.5 * s[(i, i)],
        })
        .collect()
}

/// Inverse of `D H D`, or `None` when it is not positive definite.
fn scaled_inverse(h: &DMatrix<f64>, d: &DVector<f64>) -> Option<DMatrix<f64>> {
    let scaled = DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * d[i] * d[j]);
    inverse_spd(&scaled)
}

/// Fits `model` to a sample covariance matrix from `n` respondents.
///
/// `sample` must follow [`MeasurementModel::observed`] order. A run that
/// stops before the gradient tolerance is reached is returned with
/// `converged = false`.
pub fn fit_ml(model: &MeasurementModel, sample: &DMatrix<f64>, n: usize, opts: &FitOptions) -> Result<SemEstimate> {
    let layout = ParamLayout::new(model);
    let df = layout.degrees_of_freedom();
    if df < 0 {
        return Err(Error::NotIdentified(format!(
            "{} free parameters for {} moments",
            layout.n_free(),
            layout.p * (layout.p + 1) / 2
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 respondents".into()));
    }
    let objective = MlObjective::new(&layout, sample)?;
    let start = start_values(model, &layout, sample);
    let mut x = DVector::from_iterator(
        start.len(),
        start
            .iter()
            .zip(&objective.variance_mask)
            .map(|(v, &is_var)| if is_var { v.ln() } else { *v }),
    );

    let mut eval = objective
        .evaluate(&start, true)
        .ok_or_else(|| Error::NotPositiveDefinite("implied covariance at start values".into()))?;
    let mut jac = objective.jacobian(&start);
    let mut grad = eval.gradient.component_mul(&jac);
    let fisher_inverse = |e: &Evaluation, jac: &DVector<f64>| -> DMatrix<f64> {
        information(&layout, &e.mats, &e.sigma_inv)
            .ok()
            .and_then(|h| scaled_inverse(&h, jac))
            .unwrap_or_else(|| DMatrix::identity(jac.len(), jac.len()))
    };
    let mut hinv = fisher_inverse(&eval, &jac);
    let mut trace = vec![eval.value];
    let mut iterations = 0;
    let mut just_reset = true;
    let mut converged = crate::numeric::max_abs(&grad) < opts.gradient_tolerance;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let mut dir = -(&hinv * &grad);
        if grad.dot(&dir) >= 0.0 {
            hinv = fisher_inverse(&eval, &jac);
            just_reset = true;
            dir = -(&hinv * &grad);
            if grad.dot(&dir) >= 0.0 {
                dir = -grad.clone();
            }
        }
        // Keep log-variance moves bounded so exp() stays finite.
        let largest = crate::numeric::max_abs(&dir);
        let mut step = if largest > 5.0 { 5.0 / largest } else { 1.0 };
        let slope = grad.dot(&dir);
        let mut accepted = None;
        while step > 1e-14 {
            let x_new = &x + &dir * step;
            let theta_new = objective.to_natural(&x_new);
            if let Some(e) = objective.evaluate(&theta_new, true) {
                if e.value <= eval.value + 1e-4 * step * slope {
                    accepted = Some((x_new, theta_new, e));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, theta_new, e_new)) = accepted else {
            if just_reset {
                break;
            }
            hinv = fisher_inverse(&eval, &jac);
            just_reset = true;
            continue;
        };
        just_reset = false;
        let jac_new = objective.jacobian(&theta_new);
        let grad_new = e_new.gradient.component_mul(&jac_new);
        let s = &x_new - &x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let q = s.len();
            let left = DMatrix::identity(q, q) - (&s * y.transpose()) * rho;
            hinv = &left * &hinv * left.transpose() + (&s * s.transpose()) * rho;
        }
        x = x_new;
        eval = e_new;
        jac = jac_new;
        grad = grad_new;
        trace.push(eval.value);
        converged = crate::numeric::max_abs(&grad) < opts.gradient_tolerance;
    }

    let theta = objective.to_natural(&x);
    finish(
        model,
        &layout,
        sample,
        n,
        theta,
        eval,
        FinishInfo {
            converged,
            iterations,
            gradient_max: crate::numeric::max_abs(&grad),
            trace,
            df: df as usize,
        },
    )
}

struct FinishInfo {
    converged: bool,
    iterations: usize,
    gradient_max: f64,
    trace: Vec<f64>,
    df: usize,
}

fn finish(
    model: &MeasurementModel,
    layout: &ParamLayout,
    sample: &DMatrix<f64>,
    n: usize,
    theta: Vec<f64>,
    eval: Evaluation,
    info: FinishInfo,
) -> Result<SemEstimate> {
    let mats = eval.mats;
    let implied = mats.implied_sigma()?;
    let c = mats.latent_covariance()?;
    let mut warnings = Vec::new();
    if !info.converged {
        warnings.push(format!(
            "optimizer stopped after {} iterations with gradient {:.3e}",
            info.iterations, info.gradient_max
        ));
    }

    let acov = information(layout, &mats, &eval.sigma_inv)
        .ok()
        .and_then(|h| inverse_spd(&h))
        .map(|hinv| hinv * (2.0 / (n as f64 - 1.0)));
    if acov.is_none() {
        warnings.push("information matrix is singular; standard errors unavailable".into());
    }

    let chi2 = (n as f64 - 1.0) * eval.value.max(0.0);
    let mut params = Vec::with_capacity(layout.entries.len());
    let mut free_pos = 0;
    for entry in &layout.entries {
        let (estimate, se) = match entry.fixed {
            Some(v) => (v, None),
            None => {
                let k = free_pos;
                free_pos += 1;
                let se = acov.as_ref().map(|a| a[(k, k)]).filter(|v| *v > 0.0).map(f64::sqrt);
                (theta[k], se)
            }
        };
        let z = se.map(|s| estimate / s);
        params.push(ParamEstimate {
            kind: entry.kind.clone(),
            free: entry.fixed.is_none(),
            estimate,
            se,
            z,
            p_value: z.map(two_sided_p),
            standardized: standardized_value(entry.slot, &mats, &c, &implied),
        });
    }

    let observed = model.observed();
    let mut heywood = Vec::new();
    let mut item_r2 = BTreeMap::new();
    for (i, &item) in observed.iter().enumerate() {
        if !model.is_single_indicator(item) && mats.theta[i] < HEYWOOD_RATIO * sample[(i, i)] {
            heywood.push(item);
        }
        item_r2.insert(item, 1.0 - mats.theta[i] / implied[(i, i)]);
    }
    if !heywood.is_empty() {
        warnings.push(format!("residual variance at the boundary for items {heywood:?}"));
    }
    let mut latent_r2 = BTreeMap::new();
    for (j, name) in model.latent_names().iter().enumerate() {
        if model.is_endogenous(j) {
            latent_r2.insert(name.clone(), 1.0 - mats.psi[(j, j)] / c[(j, j)]);
        }
        if mats.psi[(j, j)] < 1e-8 * c[(j, j)].abs().max(1e-300) {
            warnings.push(format!("variance of `{name}` is at the boundary"));
        }
    }

    Ok(SemEstimate {
        model: model.spec(),
        observed,
        n,
        params,
        free_values: theta,
        f_min: eval.value,
        chi2,
        df: info.df,
        p_value: (info.df > 0).then(|| chi2_sf(chi2, info.df as f64)),
        converged: info.converged,
        iterations: info.iterations,
        gradient_max: info.gradient_max,
        objective_trace: info.trace,
        sample: sample.clone(),
        implied,
        latent_covariance: c,
        heywood,
        item_r2,
        latent_r2,
        warnings,
    })
}

fn standardized_value(slot: Slot, mats: &SemMatrices, c: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Option<f64> {
    let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
    match slot {
        Slot::Lambda(i, j) => ratio(mats.lambda[(i, j)] * c[(j, j)].sqrt(), sigma[(i, i)].sqrt()),
        Slot::Beta(t, f) => ratio(mats.beta[(t, f)] * c[(f, f)].sqrt(), c[(t, t)].sqrt()),
        Slot::PsiDiag(j) => ratio(mats.psi[(j, j)], c[(j, j)]),
        Slot::PsiOff(a, b) => ratio(mats.psi[(a, b)], (c[(a, a)] * c[(b, b)]).sqrt()),
        Slot::Theta(i) => ratio(mats.theta[i], sigma[(i, i)]),
    }
}

/// Builds the sample covariance of the model's observed items from a
/// dataset (listwise deletion) and fits it.
pub fn fit_dataset(model: &MeasurementModel, data: &SurveyDataset, opts: &FitOptions) -> Result<SemEstimate> {
    let observed = model.observed();
    let m = data.matrix(&observed);
    if m.data.nrows() <= observed.len() {
        return Err(Error::InvalidInput(format!(
            "{} complete respondents for {} observed variables",
            m.data.nrows(),
            observed.len()
        )));
    }
    let s = covariance(&m.data);
    fit_ml(model, &s, m.data.nrows(), opts)
}
