//! Ordered-probit regression, likelihood-ratio diagnostics and backward
//! elimination of insignificant predictors.

use nalgebra::{DMatrix, DVector};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dataset::VariableCatalog;
use crate::error::{Error, Result};
use crate::numeric::{
    chi2_sf, inverse_spd, max_abs, norm_interval, norm_pdf, norm_quantile, sym_eigen_desc, two_sided_p,
};

pub const DEFAULT_ALPHA: f64 = 0.01;
/// Largest accepted condition number of the predictor correlation matrix.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProbitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProbitModel {
    pub coefficients: Vec<Coefficient>,
    pub cutpoints: Vec<f64>,
    pub cutpoint_se: Vec<f64>,
    pub n_obs: usize,
    pub n_categories: usize,
    pub loglik: f64,
    pub loglik_null: f64,
    pub pseudo_r2: f64,
    pub lr_chi2: f64,
    pub lr_df: usize,
    pub lr_p_value: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max: f64,
}

impl ProbitModel {
    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.coefficients.iter().map(|c| c.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NullFit {
    pub loglik: f64,
    pub cutpoints: Vec<f64>,
    pub counts: Vec<usize>,
}

fn category_counts(y: &[usize], n_categories: usize) -> Result<Vec<usize>> {
    if n_categories < 3 {
        return Err(Error::InvalidInput(format!(
            "ordered probit needs at least 3 categories, got {n_categories}"
        )));
    }
    let mut counts = vec![0usize; n_categories];
    for &v in y {
        if v == 0 || v > n_categories {
            return Err(Error::InvalidInput(format!("outcome {v} outside 1..={n_categories}")));
        }
        counts[v - 1] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::UnobservedCategory(c + 1));
    }
    Ok(counts)
}

/// Intercept-only model in closed form: cutpoints are normal quantiles of
/// the cumulative category shares.
pub fn null_fit(y: &[usize], n_categories: usize) -> Result<NullFit> {
    let counts = category_counts(y, n_categories)?;
    let n = y.len() as f64;
    let mut acc = 0usize;
    let cutpoints = counts[..n_categories - 1]
        .iter()
        .map(|&c| {
            acc += c;
            norm_quantile(acc as f64 / n)
        })
        .collect();
    let loglik = counts.iter().map(|&c| c as f64 * (c as f64 / n).ln()).sum();
    Ok(NullFit {
        loglik,
        cutpoints,
        counts,
    })
}

fn bounds(kappa: &[f64], category: usize, eta: f64) -> (f64, f64) {
    let upper = if category > kappa.len() {
        f64::INFINITY
    } else {
        kappa[category - 1] - eta
    };
    let lower = if category == 1 {
        f64::NEG_INFINITY
    } else {
        kappa[category - 2] - eta
    };
    (lower, upper)
}

/// Probability of every category for one linear predictor value.
pub fn category_probabilities(eta: f64, kappa: &[f64]) -> Vec<f64> {
    (1..=kappa.len() + 1)
        .map(|c| {
            let (l, u) = bounds(kappa, c, eta);
            norm_interval(l, u)
        })
        .collect()
}

fn linear_predictor(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum())
        .collect()
}

/// Log-likelihood at `(beta, kappa)`; `-inf` when an observation has zero
/// probability or the cutpoints are not ascending.
pub fn loglik(x: &DMatrix<f64>, y: &[usize], beta: &[f64], kappa: &[f64]) -> f64 {
    if kappa.windows(2).any(|w| w[1] <= w[0]) {
        return f64::NEG_INFINITY;
    }
    linear_predictor(x, beta)
        .iter()
        .zip(y)
        .map(|(&eta, &c)| {
            let (l, u) = bounds(kappa, c, eta);
            norm_interval(l, u).ln()
        })
        .sum()
}

/// Gradient and Hessian of the log-likelihood in `(beta, kappa)`.
fn derivatives(x: &DMatrix<f64>, y: &[usize], beta: &[f64], kappa: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = beta.len();
    let q = k + kappa.len();
    let mut g = DVector::zeros(q);
    let mut h = DMatrix::zeros(q, q);
    let eta = linear_predictor(x, beta);
    let mut du = DVector::zeros(q);
    let mut dl = DVector::zeros(q);
    for (i, (&e, &c)) in eta.iter().zip(y).enumerate() {
        let (l, u) = bounds(kappa, c, e);
        let p = norm_interval(l, u);
        let (a, ua) = if u.is_finite() {
            (norm_pdf(u), u * norm_pdf(u))
        } else {
            (0.0, 0.0)
        };
        let (b, lb) = if l.is_finite() {
            (norm_pdf(l), l * norm_pdf(l))
        } else {
            (0.0, 0.0)
        };
        du.fill(0.0);
        dl.fill(0.0);
        for j in 0..k {
            du[j] = -x[(i, j)];
            dl[j] = -x[(i, j)];
        }
        if u.is_finite() {
            du[k + c - 1] = 1.0;
        } else {
            du.fill(0.0);
        }
        if l.is_finite() {
            dl[k + c - 2] = 1.0;
        } else {
            dl.fill(0.0);
        }
        g += &du * (a / p) - &dl * (b / p);
        let g_uu = -ua / p - a * a / (p * p);
        let g_ll = lb / p - b * b / (p * p);
        let g_ul = a * b / (p * p);
        h += &du * du.transpose() * g_uu
            + &dl * dl.transpose() * g_ll
            + (&du * dl.transpose() + &dl * du.transpose()) * g_ul;
    }
    (g, h)
}

/// Analytic gradient of the log-likelihood in `(beta, kappa)` order.
pub fn loglik_gradient(x: &DMatrix<f64>, y: &[usize], beta: &[f64], kappa: &[f64]) -> Vec<f64> {
    derivatives(x, y, beta, kappa).0.iter().copied().collect()
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn softplus_inverse(d: f64) -> f64 {
    if d > 30.0 {
        d
    } else {
        d.exp_m1().ln()
    }
}

fn kappa_from(t: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    t.iter()
        .enumerate()
        .map(|(j, &v)| {
            acc = if j == 0 { v } else { acc + softplus(v) };
            acc
        })
        .collect()
}

fn t_from(kappa: &[f64]) -> Vec<f64> {
    kappa
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == 0 { v } else { softplus_inverse(v - kappa[j - 1]) })
        .collect()
}

/// Rejects constant or (nearly) collinear predictor columns.
fn check_collinearity(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let (n, k) = x.shape();
    if k == 0 {
        return Ok(());
    }
    let mut z = x.clone();
    for j in 0..k {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let (mean, var) = crate::numeric::mean_var(&col);
        if !(var > 0.0) {
            return Err(Error::Collinearity(format!("predictor `{}` is constant", names[j])));
        }
        let sd = var.sqrt();
        for i in 0..n {
            z[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    let xtx = z.transpose() * &z;
    let (values, _) = sym_eigen_desc(&xtx);
    let largest = values[0];
    let smallest = *values.last().expect("k > 0");
    if !(smallest > 0.0) || largest / smallest > MAX_CONDITION {
        return Err(Error::Collinearity(format!(
            "condition number {:.3e} of standardized predictors",
            largest / smallest.max(0.0)
        )));
    }
    Ok(())
}

/// Maximum-likelihood ordered probit of `y` (1..=C) on the columns of `x`
/// (no intercept).
pub fn fit(
    x: &DMatrix<f64>,
    y: &[usize],
    names: &[String],
    n_categories: usize,
    opts: &ProbitOptions,
) -> Result<ProbitModel> {
    let (n, k) = x.shape();
    if y.len() != n || names.len() != k {
        return Err(Error::InvalidInput(format!(
            "{n} rows, {} outcomes, {k} columns, {} names",
            y.len(),
            names.len()
        )));
    }
    let null = null_fit(y, n_categories)?;
    check_collinearity(x, names)?;
    let m = n_categories - 1;

    let mut beta = vec![0.0; k];
    let mut t = t_from(&null.cutpoints);
    let mut ll = loglik(x, y, &beta, &kappa_from(&t));
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_max;
    let mut hessian_nat;
    loop {
        let kappa = kappa_from(&t);
        let (g_nat, h_nat) = derivatives(x, y, &beta, &kappa);
        hessian_nat = h_nat.clone();
        // Chain rule to (beta, t).
        let mut jac = DMatrix::<f64>::identity(k + m, k + m);
        for r in 0..m {
            for c in 1..=r {
                jac[(k + r, k + c)] = sigmoid(t[c]);
            }
        }
        for r in 1..m {
            jac[(k + r, k)] = 1.0;
        }
        let g = jac.transpose() * &g_nat;
        let mut h = jac.transpose() * &h_nat * &jac;
        for c in 1..m {
            let s = sigmoid(t[c]);
            let curvature: f64 = (c..m).map(|r| g_nat[k + r]).sum();
            h[(k + c, k + c)] += curvature * s * (1.0 - s);
        }
        grad_max = max_abs(&g);
        if grad_max < opts.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;
        let neg_h = -&h;
        let dir = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                let ridge = neg_h.diagonal().amax().max(1.0) * 1e-3;
                let damped = &neg_h + DMatrix::identity(k + m, k + m) * ridge;
                match damped.cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => g.clone() / g.norm().max(1.0),
                }
            }
        };
        let mut step = 1.0;
        let slope = g.dot(&dir);
        // Below this predicted gain the likelihood cannot resolve the step,
        // so a full Newton step is taken on the derivative information alone.
        let noise_floor = 1e-11 * ll.abs().max(1.0);
        let mut moved = false;
        while step > 1e-12 {
            let b_new: Vec<f64> = (0..k).map(|j| beta[j] + step * dir[j]).collect();
            let t_new: Vec<f64> = (0..m).map(|j| t[j] + step * dir[k + j]).collect();
            let ll_new = loglik(x, y, &b_new, &kappa_from(&t_new));
            let accept = ll_new >= ll + 1e-4 * step * slope || slope < noise_floor;
            if ll_new.is_finite() && accept {
                beta = b_new;
                t = t_new;
                ll = ll_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            gradient: grad_max,
        });
    }

    let kappa = kappa_from(&t);
    let cov = inverse_spd(&(-&hessian_nat))
        .ok_or_else(|| Error::Singular("observed information; the outcome may be perfectly separated".into()))?;
    let se: Vec<f64> = (0..k + m).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let coefficients = (0..k)
        .map(|j| {
            let z = beta[j] / se[j];
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                se: se[j],
                z,
                p_value: two_sided_p(z),
            }
        })
        .collect();
    let lr_chi2 = (2.0 * (ll - null.loglik)).max(0.0);
    Ok(ProbitModel {
        coefficients,
        cutpoints: kappa,
        cutpoint_se: se[k..].to_vec(),
        n_obs: n,
        n_categories,
        loglik: ll,
        loglik_null: null.loglik,
        pseudo_r2: if null.loglik < 0.0 { 1.0 - ll / null.loglik } else { 0.0 },
        lr_chi2,
        lr_df: k,
        lr_p_value: (k > 0).then(|| chi2_sf(lr_chi2, k as f64)),
        converged,
        iterations,
        gradient_max: grad_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Elimination {
    /// Drop the single worst predictor and refit until all are significant.
    #[default]
    Stepwise,
    /// Drop every insignificant predictor at once and refit once.
    SingleShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EliminationStep {
    pub dropped: Vec<String>,
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EliminationResult {
    pub alpha: f64,
    pub mode: Elimination,
    pub initial: ProbitModel,
    pub final_model: ProbitModel,
    pub steps: Vec<EliminationStep>,
    /// Predictors significant at `alpha` in the final model.
    pub survivors: Vec<String>,
    pub warnings: Vec<String>,
}

/// Backward elimination starting from the full model.
pub fn backward_eliminate(
    x: &DMatrix<f64>,
    y: &[usize],
    names: &[String],
    n_categories: usize,
    alpha: f64,
    mode: Elimination,
    opts: &ProbitOptions,
) -> Result<EliminationResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let initial = fit(x, y, names, n_categories, opts)?;
    let mut keep: Vec<usize> = (0..names.len()).collect();
    let mut current = initial.clone();
    let mut steps = Vec::new();
    loop {
        let worst: Vec<(usize, f64)> = current
            .coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| !(c.p_value < alpha))
            .map(|(i, c)| (i, c.p_value))
            .collect();
        if worst.is_empty() {
            break;
        }
        let drop: Vec<(usize, f64)> = match mode {
            Elimination::Stepwise => {
                let (i, p) = worst
                    .iter()
                    .copied()
                    .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                        if cur.1.total_cmp(&best.1).is_gt() {
                            cur
                        } else {
                            best
                        }
                    });
                vec![(i, p)]
            }
            Elimination::SingleShot => worst,
        };
        steps.push(EliminationStep {
            dropped: drop.iter().map(|&(i, _)| names[keep[i]].clone()).collect(),
            p_values: drop.iter().map(|&(_, p)| p).collect(),
        });
        let gone: Vec<usize> = drop.iter().map(|&(i, _)| i).collect();
        keep = keep
            .iter()
            .enumerate()
            .filter(|(pos, _)| !gone.contains(pos))
            .map(|(_, &c)| c)
            .collect();
        let sub = x.select_columns(&keep);
        let sub_names: Vec<String> = keep.iter().map(|&c| names[c].clone()).collect();
        current = fit(&sub, y, &sub_names, n_categories, opts)?;
        if mode == Elimination::SingleShot {
            break;
        }
    }
    let survivors: Vec<String> = current
        .coefficients
        .iter()
        .filter(|c| c.p_value < alpha)
        .map(|c| c.name.clone())
        .collect();
    let mut warnings = Vec::new();
    if survivors.is_empty() {
        warnings.push("every predictor was eliminated".into());
    }
    Ok(EliminationResult {
        alpha,
        mode,
        initial,
        final_model: current,
        steps,
        survivors,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct QuestionRow {
    pub construct: String,
    pub question_number: usize,
    pub description: String,
    pub abbreviation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SimplifiedQuestionnaire {
    pub rows: Vec<QuestionRow>,
}

impl SimplifiedQuestionnaire {
    /// One row per surviving item, ordered by item number. `construct_of`
    /// names the factor of an item (falls back to the catalog hint).
    pub fn build(items: &[usize], catalog: &VariableCatalog, construct_of: impl Fn(usize) -> Option<String>) -> Self {
        let mut items = items.to_vec();
        items.sort_unstable();
        let rows = items
            .into_iter()
            .map(|i| {
                let entry = catalog.get(i);
                QuestionRow {
                    construct: construct_of(i)
                        .or_else(|| entry.and_then(|e| e.latent_hint.clone()))
                        .unwrap_or_default(),
                    question_number: i,
                    description: entry.and_then(|e| e.description.clone()).unwrap_or_default(),
                    abbreviation: entry.map(|e| e.abbreviation.clone()).unwrap_or_else(|| format!("q{i}")),
                }
            })
            .collect();
        Self { rows }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Parse(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::io("questionnaire", e))?;
        Ok(())
    }
}
