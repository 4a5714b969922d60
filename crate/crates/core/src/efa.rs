//! Exploratory factor analysis: principal-component extraction under the
//! Kaiser criterion, varimax rotation and loading-based item pruning.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dataset::VariableCatalog;
use crate::error::{Error, Result};
use crate::numeric::{serde_rows, sym_eigen_desc};
use crate::psychometrics::cronbach_alpha;

/// Eigenvalues must exceed 1 by more than this to count as a factor.
pub const KAISER_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_LOADING_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CROSS_MARGIN: f64 = 0.2;
const VARIMAX_TOLERANCE: f64 = 1e-8;
const VARIMAX_MAX_SWEEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LoadingMatrix {
    /// Item index of each row.
    pub items: Vec<usize>,
    /// Items by factors.
    #[serde(with = "serde_rows")]
    #[schemars(with = "Vec<Vec<f64>>")]
    pub loadings: DMatrix<f64>,
    /// Eigenvalues of the retained components, descending.
    pub eigenvalues: Vec<f64>,
    /// Every eigenvalue of the input correlation matrix, descending.
    pub all_eigenvalues: Vec<f64>,
    /// Percentage of total variance carried by each factor column.
    pub variance_explained: Vec<f64>,
    pub cumulative_explained: Vec<f64>,
    pub rotated: bool,
}

impl LoadingMatrix {
    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// Row sums of squared loadings.
    pub fn communalities(&self) -> Vec<f64> {
        self.loadings
            .row_iter()
            .map(|r| r.iter().map(|x| x * x).sum())
            .collect()
    }

    fn refresh_variance(&mut self) {
        let p = self.loadings.nrows() as f64;
        self.variance_explained = self
            .loadings
            .column_iter()
            .map(|c| c.iter().map(|x| x * x).sum::<f64>() / p * 100.0)
            .collect();
        let mut acc = 0.0;
        self.cumulative_explained = self
            .variance_explained
            .iter()
            .map(|v| {
                acc += v;
                acc.min(100.0)
            })
            .collect();
    }

    /// Flips each column so its largest-magnitude entry is positive.
    fn normalize_signs(&mut self) {
        for mut col in self.loadings.column_iter_mut() {
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Principal-component extraction keeping eigenvalues strictly above 1.
pub fn extract_pca(r: &DMatrix<f64>, items: &[usize]) -> Result<LoadingMatrix> {
    let p = r.nrows();
    if r.ncols() != p || items.len() != p {
        return Err(Error::InvalidInput(format!(
            "correlation matrix is {}x{} for {} items",
            r.nrows(),
            r.ncols(),
            items.len()
        )));
    }
    let (values, vectors) = sym_eigen_desc(r);
    let k = values.iter().take_while(|&&v| v > 1.0 + KAISER_TOLERANCE).count();
    if k == 0 {
        return Err(Error::NoFactors);
    }
    let loadings = DMatrix::from_fn(p, k, |i, j| vectors[(i, j)] * values[j].sqrt());
    let mut lm = LoadingMatrix {
        items: items.to_vec(),
        loadings,
        eigenvalues: values[..k].to_vec(),
        all_eigenvalues: values,
        variance_explained: Vec::new(),
        cumulative_explained: Vec::new(),
        rotated: false,
    };
    lm.normalize_signs();
    lm.refresh_variance();
    Ok(lm)
}

/// Raw varimax criterion: sum over columns of the variance of squared loadings.
pub fn varimax_criterion(l: &DMatrix<f64>) -> f64 {
    let p = l.nrows() as f64;
    l.column_iter()
        .map(|c| {
            let s2: f64 = c.iter().map(|x| x * x).sum();
            let s4: f64 = c.iter().map(|x| x.powi(4)).sum();
            (p * s4 - s2 * s2) / (p * p)
        })
        .sum()
}

/// Outcome of a varimax run, with the criterion after every sweep.
#[derive(Debug, Clone)]
pub struct VarimaxTrace {
    pub rotated: LoadingMatrix,
    pub criterion: Vec<f64>,
    pub sweeps: usize,
}

/// Varimax with Kaiser row normalization, by pairwise planar rotations.
///
/// Columns come back ordered by explained variance with the sign
/// convention of [`extract_pca`]. A single factor is returned unchanged.
pub fn rotate_varimax(l: &LoadingMatrix) -> LoadingMatrix {
    rotate_varimax_traced(l).rotated
}

pub fn rotate_varimax_traced(l: &LoadingMatrix) -> VarimaxTrace {
    let k = l.n_factors();
    let p = l.loadings.nrows();
    if k < 2 {
        let mut out = l.clone();
        out.rotated = true;
        return VarimaxTrace {
            criterion: vec![varimax_criterion(&out.loadings)],
            rotated: out,
            sweeps: 0,
        };
    }
    let h: Vec<f64> = l
        .loadings
        .row_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut a = DMatrix::from_fn(p, k, |i, j| if h[i] > 0.0 { l.loadings[(i, j)] / h[i] } else { 0.0 });
    let pf = p as f64;
    let mut history = vec![varimax_criterion(&a)];
    let mut sweeps = 0;
    while sweeps < VARIMAX_MAX_SWEEPS {
        sweeps += 1;
        for j in 0..k - 1 {
            for m in j + 1..k {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (x, y) = (a[(i, j)], a[(i, m)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = 0.25 * num.atan2(den);
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for i in 0..p {
                    let (x, y) = (a[(i, j)], a[(i, m)]);
                    a[(i, j)] = x * c + y * s;
                    a[(i, m)] = -x * s + y * c;
                }
            }
        }
        let value = varimax_criterion(&a);
        let gain = value - history.last().copied().unwrap_or(0.0);
        history.push(value);
        if gain < VARIMAX_TOLERANCE {
            break;
        }
    }
    for i in 0..p {
        for j in 0..k {
            a[(i, j)] *= h[i];
        }
    }
    // Order columns by sum of squared loadings.
    let ss: Vec<f64> = a.column_iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| ss[y].total_cmp(&ss[x]).then(x.cmp(&y)));
    let loadings = DMatrix::from_fn(p, k, |i, j| a[(i, order[j])]);
    let mut out = LoadingMatrix {
        loadings,
        rotated: true,
        ..l.clone()
    };
    out.normalize_signs();
    out.refresh_variance();
    VarimaxTrace {
        rotated: out,
        criterion: history,
        sweeps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    LowLoading,
    CrossLoading,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropReason::LowLoading => "low loading",
            DropReason::CrossLoading => "cross-loading",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DroppedItem {
    pub item: usize,
    pub reason: DropReason,
    pub max_abs_loading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PruneOptions {
    pub threshold: f64,
    pub cross_margin: f64,
}

impl Default for PruneOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_LOADING_THRESHOLD,
            cross_margin: DEFAULT_CROSS_MARGIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FactorAssignment {
    pub n_factors: usize,
    pub retained: Vec<usize>,
    pub dropped: Vec<DroppedItem>,
    /// Retained item to 0-based factor column.
    pub factor_of: BTreeMap<usize, usize>,
    /// Cronbach alpha of each factor's items (`None` with fewer than 2).
    pub per_factor_alpha: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl FactorAssignment {
    /// Items of factor `f` in ascending item order.
    pub fn items_of(&self, f: usize) -> Vec<usize> {
        self.factor_of
            .iter()
            .filter(|(_, &g)| g == f)
            .map(|(&i, _)| i)
            .collect()
    }
}

/// Drops weak and cross-loading items and assigns the rest to their
/// highest-loading factor.
///
/// Ties on the maximum loading go to the lower factor index. When `data`
/// is given (respondents by the rows of `l`, same order), per-factor alphas
/// are computed from it.
pub fn prune(l: &LoadingMatrix, opts: &PruneOptions, data: Option<&DMatrix<f64>>) -> FactorAssignment {
    let k = l.n_factors();
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut factor_of = BTreeMap::new();
    for (row, &item) in l.items.iter().enumerate() {
        let abs: Vec<f64> = (0..k).map(|j| l.loadings[(row, j)].abs()).collect();
        let mut best = 0;
        for j in 1..k {
            if abs[j] > abs[best] {
                best = j;
            }
        }
        let top = abs[best];
        let second = (0..k).filter(|&j| j != best).map(|j| abs[j]).fold(0.0f64, f64::max);
        if top < opts.threshold {
            dropped.push(DroppedItem {
                item,
                reason: DropReason::LowLoading,
                max_abs_loading: top,
            });
        } else if k > 1 && top - second < opts.cross_margin {
            dropped.push(DroppedItem {
                item,
                reason: DropReason::CrossLoading,
                max_abs_loading: top,
            });
        } else {
            retained.push(item);
            factor_of.insert(item, best);
        }
    }
    let mut assignment = FactorAssignment {
        n_factors: k,
        retained,
        dropped,
        factor_of,
        per_factor_alpha: vec![None; k],
        warnings: Vec::new(),
    };
    for f in 0..k {
        let items = assignment.items_of(f);
        if items.len() < 2 {
            assignment
                .warnings
                .push(format!("factor {} keeps {} item(s) after pruning", f + 1, items.len()));
            continue;
        }
        if let Some(data) = data {
            let cols: Vec<usize> = items
                .iter()
                .map(|i| l.items.iter().position(|x| x == i).expect("item row"))
                .collect();
            let sub = data.select_columns(&cols);
            assignment.per_factor_alpha[f] = cronbach_alpha(&sub).ok();
        }
    }
    assignment
}

/// Labels each factor with the majority a-priori group of its items and
/// lists the items whose group disagrees with that label.
pub fn name_factors(assignment: &FactorAssignment, catalog: &VariableCatalog) -> (Vec<String>, Vec<HintMismatch>) {
    let mut names: Vec<String> = Vec::with_capacity(assignment.n_factors);
    let mut mismatches = Vec::new();
    for f in 0..assignment.n_factors {
        let items = assignment.items_of(f);
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for &i in &items {
            if let Some(h) = catalog.get(i).and_then(|c| c.latent_hint.as_deref()) {
                let e = counts.entry(h).or_insert((0, i));
                e.0 += 1;
                e.1 = e.1.min(i);
            }
        }
        let label = counts
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(h, _)| h.to_string())
            .unwrap_or_else(|| format!("Factor {}", f + 1));
        let mut unique = label.clone();
        let mut n = 2;
        while names.contains(&unique) {
            unique = format!("{label} ({n})");
            n += 1;
        }
        for &i in &items {
            if let Some(h) = catalog.get(i).and_then(|c| c.latent_hint.as_deref()) {
                if h != label {
                    mismatches.push(HintMismatch {
                        item: i,
                        hint: h.to_string(),
                        factor: unique.clone(),
                    });
                }
            }
        }
        names.push(unique);
    }
    (names, mismatches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct HintMismatch {
    pub item: usize,
    pub hint: String,
    pub factor: String,
}
