//! Measurement/structural model description, its JSON file form and the
//! mapping between free parameters and the model matrices.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Identification {
    /// First loading of every latent fixed to 1.
    #[default]
    Marker,
    /// Every latent (disturbance) variance fixed to 1, all loadings free.
    UnitVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LatentSpec {
    pub name: String,
    pub indicators: Vec<usize>,
    /// Indicator whose loading is fixed to 1; defaults to the first one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PathSpec {
    pub from: String,
    pub to: String,
}

/// File form of a model: `{latents, paths, covariances}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub latents: Vec<LatentSpec>,
    #[serde(default)]
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub covariances: Vec<[String; 2]>,
    #[serde(default)]
    pub identification: Identification,
}

/// A validated congeneric measurement model with an acyclic structural part.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    names: Vec<String>,
    /// Indicator item ids per latent, marker first.
    indicators: Vec<Vec<usize>>,
    /// (from, to) latent indices.
    paths: Vec<(usize, usize)>,
    /// Free covariance pairs (a < b).
    covariances: Vec<(usize, usize)>,
    identification: Identification,
}

impl MeasurementModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, l) in spec.latents.iter().enumerate() {
            if l.name.is_empty() {
                return Err(Error::InvalidInput("latent with empty name".into()));
            }
            if index.insert(l.name.as_str(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate latent `{}`", l.name)));
            }
        }
        if spec.latents.is_empty() {
            return Err(Error::InvalidInput("model has no latents".into()));
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("unknown latent `{name}`")))
        };

        let mut seen_items = BTreeSet::new();
        let mut indicators = Vec::with_capacity(spec.latents.len());
        for l in &spec.latents {
            let mut ind = l.indicators.clone();
            for &item in &ind {
                if !seen_items.insert(item) {
                    return Err(Error::InvalidInput(format!(
                        "item {item} loads on more than one latent"
                    )));
                }
            }
            if let Some(marker) = l.marker {
                let pos = ind.iter().position(|&i| i == marker).ok_or_else(|| {
                    Error::InvalidInput(format!("marker {marker} is not an indicator of `{}`", l.name))
                })?;
                let m = ind.remove(pos);
                ind.insert(0, m);
            }
            indicators.push(ind);
        }

        let mut paths = Vec::new();
        for p in &spec.paths {
            let (f, t) = (lookup(&p.from)?, lookup(&p.to)?);
            if f == t {
                return Err(Error::InvalidInput(format!("self-loop on `{}`", p.from)));
            }
            if paths.contains(&(f, t)) {
                return Err(Error::InvalidInput(format!("duplicate path {} -> {}", p.from, p.to)));
            }
            paths.push((f, t));
        }
        let m = spec.latents.len();
        if !is_acyclic(m, &paths) {
            return Err(Error::InvalidInput("structural paths contain a cycle".into()));
        }

        let endogenous: BTreeSet<usize> = paths.iter().map(|&(_, t)| t).collect();
        let mut covariances = Vec::new();
        for [a, b] in &spec.covariances {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if a == b {
                return Err(Error::InvalidInput("covariance of a latent with itself".into()));
            }
            if endogenous.contains(&a) || endogenous.contains(&b) {
                return Err(Error::InvalidInput(
                    "covariances are only allowed among exogenous latents".into(),
                ));
            }
            let pair = (a.min(b), a.max(b));
            if !covariances.contains(&pair) {
                covariances.push(pair);
            }
        }

        for (j, ind) in indicators.iter().enumerate() {
            let in_path = paths.iter().any(|&(f, t)| f == j || t == j);
            if ind.len() < 2 && !in_path {
                return Err(Error::InvalidInput(format!(
                    "latent `{}` needs at least 2 indicators or a structural path",
                    spec.latents[j].name
                )));
            }
        }

        Ok(Self {
            names: spec.latents.iter().map(|l| l.name.clone()).collect(),
            indicators,
            paths,
            covariances,
            identification: spec.identification,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Confirmatory model: one latent per group, all pairs covarying.
    pub fn cfa(groups: &[(String, Vec<usize>)]) -> Result<Self> {
        let latents: Vec<LatentSpec> = groups
            .iter()
            .map(|(n, ind)| LatentSpec {
                name: n.clone(),
                indicators: ind.clone(),
                marker: None,
            })
            .collect();
        let mut covariances = Vec::new();
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                covariances.push([groups[a].0.clone(), groups[b].0.clone()]);
            }
        }
        Self::from_spec(&ModelSpec {
            latents,
            paths: Vec::new(),
            covariances,
            identification: Identification::Marker,
        })
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            latents: self
                .names
                .iter()
                .zip(&self.indicators)
                .map(|(n, ind)| LatentSpec {
                    name: n.clone(),
                    indicators: ind.clone(),
                    marker: ind.first().copied(),
                })
                .collect(),
            paths: self
                .paths
                .iter()
                .map(|&(f, t)| PathSpec {
                    from: self.names[f].clone(),
                    to: self.names[t].clone(),
                })
                .collect(),
            covariances: self
                .covariances
                .iter()
                .map(|&(a, b)| [self.names[a].clone(), self.names[b].clone()])
                .collect(),
            identification: self.identification,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec()).expect("model spec serializes")
    }

    pub fn latent_names(&self) -> &[String] {
        &self.names
    }

    pub fn latent_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn indicators(&self, latent: usize) -> &[usize] {
        &self.indicators[latent]
    }

    pub fn paths(&self) -> &[(usize, usize)] {
        &self.paths
    }

    pub fn covariances(&self) -> &[(usize, usize)] {
        &self.covariances
    }

    pub fn identification(&self) -> Identification {
        self.identification
    }

    pub fn n_latents(&self) -> usize {
        self.names.len()
    }

    /// Observed variables in model order: indicators of latent 0, then 1, ...
    pub fn observed(&self) -> Vec<usize> {
        self.indicators.iter().flatten().copied().collect()
    }

    /// True when `item` is the only indicator of its latent.
    pub fn is_single_indicator(&self, item: usize) -> bool {
        self.indicators.iter().any(|ind| ind.len() == 1 && ind[0] == item)
    }

    pub fn is_endogenous(&self, latent: usize) -> bool {
        self.paths.iter().any(|&(_, t)| t == latent)
    }
}

fn is_acyclic(m: usize, edges: &[(usize, usize)]) -> bool {
    let mut indeg = vec![0usize; m];
    for &(_, t) in edges {
        indeg[t] += 1;
    }
    let mut stack: Vec<usize> = (0..m).filter(|&v| indeg[v] == 0).collect();
    let mut visited = 0;
    while let Some(v) = stack.pop() {
        visited += 1;
        for &(f, t) in edges {
            if f == v {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
    }
    visited == m
}

/// Model matrices of the all-latent linear structure
/// `x = Λη + ε`, `η = Bη + ζ`, `Cov(ζ) = Ψ`, `Cov(ε) = diag(Θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemMatrices {
    pub lambda: DMatrix<f64>,
    /// `beta[(to, from)]` is the effect of latent `from` on latent `to`.
    pub beta: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub theta: DVector<f64>,
}

impl SemMatrices {
    /// `(I - B)^{-1}`.
    pub fn total_effects(&self) -> Result<DMatrix<f64>> {
        let m = self.beta.nrows();
        (DMatrix::identity(m, m) - &self.beta)
            .try_inverse()
            .ok_or_else(|| Error::Singular("I - B".into()))
    }

    /// Model-implied covariance of the latent variables.
    pub fn latent_covariance(&self) -> Result<DMatrix<f64>> {
        let a = self.total_effects()?;
        Ok(&a * &self.psi * a.transpose())
    }

    /// `Σ = Λ (I-B)^{-1} Ψ (I-B)^{-T} Λ' + Θ`.
    pub fn implied_sigma(&self) -> Result<DMatrix<f64>> {
        let c = self.latent_covariance()?;
        let mut sigma = &self.lambda * c * self.lambda.transpose();
        for i in 0..sigma.nrows() {
            sigma[(i, i)] += self.theta[i];
        }
        Ok(crate::numeric::symmetrize(&sigma))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamKind {
    Loading { latent: String, item: usize },
    Path { from: String, to: String },
    Variance { latent: String },
    Covariance { a: String, b: String },
    Residual { item: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Slot {
    Lambda(usize, usize),
    Beta(usize, usize),
    PsiDiag(usize),
    PsiOff(usize, usize),
    Theta(usize),
}

impl Slot {
    pub(crate) fn is_variance(self) -> bool {
        matches!(self, Slot::PsiDiag(_) | Slot::Theta(_))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ParamEntry {
    pub slot: Slot,
    pub kind: ParamKind,
    /// `Some(value)` for fixed entries.
    pub fixed: Option<f64>,
}

/// Ordering of the free parameters and the fixed entries of a model.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub(crate) entries: Vec<ParamEntry>,
    pub(crate) free: Vec<usize>,
    pub(crate) p: usize,
    pub(crate) m: usize,
}

impl ParamLayout {
    pub fn new(model: &MeasurementModel) -> Self {
        let names = model.latent_names();
        let observed = model.observed();
        let row_of: HashMap<usize, usize> = observed.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let mut entries = Vec::new();
        let marker = model.identification() == Identification::Marker;

        for (j, name) in names.iter().enumerate() {
            for (k, &item) in model.indicators(j).iter().enumerate() {
                entries.push(ParamEntry {
                    slot: Slot::Lambda(row_of[&item], j),
                    kind: ParamKind::Loading {
                        latent: name.clone(),
                        item,
                    },
                    fixed: (marker && k == 0).then_some(1.0),
                });
            }
        }
        for &(f, t) in model.paths() {
            entries.push(ParamEntry {
                slot: Slot::Beta(t, f),
                kind: ParamKind::Path {
                    from: names[f].clone(),
                    to: names[t].clone(),
                },
                fixed: None,
            });
        }
        for (j, name) in names.iter().enumerate() {
            let fix = !marker || model.indicators(j).is_empty();
            entries.push(ParamEntry {
                slot: Slot::PsiDiag(j),
                kind: ParamKind::Variance { latent: name.clone() },
                fixed: fix.then_some(1.0),
            });
        }
        for &(a, b) in model.covariances() {
            entries.push(ParamEntry {
                slot: Slot::PsiOff(a, b),
                kind: ParamKind::Covariance {
                    a: names[a].clone(),
                    b: names[b].clone(),
                },
                fixed: None,
            });
        }
        // A lone indicator cannot separate its residual from the latent
        // variance; it measures the latent without error.
        for (r, &item) in observed.iter().enumerate() {
            entries.push(ParamEntry {
                slot: Slot::Theta(r),
                kind: ParamKind::Residual { item },
                fixed: model.is_single_indicator(item).then_some(0.0),
            });
        }
        let free = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.fixed.is_none())
            .map(|(i, _)| i)
            .collect();
        Self {
            entries,
            free,
            p: observed.len(),
            m: names.len(),
        }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_observed(&self) -> usize {
        self.p
    }

    /// Degrees of freedom `p(p+1)/2 - q` (may be negative).
    pub fn degrees_of_freedom(&self) -> i64 {
        (self.p * (self.p + 1) / 2) as i64 - self.n_free() as i64
    }

    pub fn free_kinds(&self) -> Vec<ParamKind> {
        self.free.iter().map(|&e| self.entries[e].kind.clone()).collect()
    }

    pub(crate) fn free_slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.free.iter().map(|&e| self.entries[e].slot)
    }

    /// Builds the model matrices from a natural-scale free-parameter vector.
    pub fn matrices(&self, theta: &[f64]) -> SemMatrices {
        assert_eq!(theta.len(), self.n_free(), "parameter vector length");
        let mut mats = SemMatrices {
            lambda: DMatrix::zeros(self.p, self.m),
            beta: DMatrix::zeros(self.m, self.m),
            psi: DMatrix::zeros(self.m, self.m),
            theta: DVector::zeros(self.p),
        };
        let mut next = theta.iter();
        for e in &self.entries {
            let v = match e.fixed {
                Some(v) => v,
                None => *next.next().expect("free parameter"),
            };
            match e.slot {
                Slot::Lambda(i, j) => mats.lambda[(i, j)] = v,
                Slot::Beta(t, f) => mats.beta[(t, f)] = v,
                Slot::PsiDiag(j) => mats.psi[(j, j)] = v,
                Slot::PsiOff(a, b) => {
                    mats.psi[(a, b)] = v;
                    mats.psi[(b, a)] = v;
                }
                Slot::Theta(i) => mats.theta[i] = v,
            }
        }
        mats
    }

    /// Reads the free parameters back out of a set of matrices.
    pub fn pack(&self, mats: &SemMatrices) -> Vec<f64> {
        self.free_slots()
            .map(|slot| match slot {
                Slot::Lambda(i, j) => mats.lambda[(i, j)],
                Slot::Beta(t, f) => mats.beta[(t, f)],
                Slot::PsiDiag(j) => mats.psi[(j, j)],
                Slot::PsiOff(a, b) => mats.psi[(a, b)],
                Slot::Theta(i) => mats.theta[i],
            })
            .collect()
    }
}

/// Implied covariance for a model and a natural-scale parameter vector.
pub fn implied_sigma(model: &MeasurementModel, theta: &[f64]) -> Result<DMatrix<f64>> {
    let layout = ParamLayout::new(model);
    if theta.len() != layout.n_free() {
        return Err(Error::InvalidInput(format!(
            "expected {} parameters, got {}",
            layout.n_free(),
            theta.len()
        )));
    }
    let mats = layout.matrices(theta);
    if mats.theta.iter().any(|v| *v <= 0.0) || (0..mats.psi.nrows()).any(|j| mats.psi[(j, j)] <= 0.0) {
        return Err(Error::InvalidInput("variances must be positive".into()));
    }
    mats.implied_sigma()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(json: &str) -> Result<MeasurementModel> {
        MeasurementModel::from_json(json)
    }

    #[test]
    fn single_factor_two_indicators() {
        let m = spec(r#"{"latents":[{"name":"F","indicators":[1,2]}]}"#).unwrap();
        let layout = ParamLayout::new(&m);
        // loading 2, variance F, two residuals
        assert_eq!(layout.n_free(), 4);
        let sigma = layout.matrices(&[1.0, 1.0, 0.5, 0.5]).implied_sigma().unwrap();
        assert_relative_eq!(sigma, DMatrix::from_row_slice(2, 2, &[1.5, 1.0, 1.0, 1.5]));
    }

    #[test]
    fn marker_is_moved_first() {
        let m = spec(r#"{"latents":[{"name":"F","indicators":[1,2,3],"marker":3}]}"#).unwrap();
        assert_eq!(m.indicators(0), &[3, 1, 2]);
        assert!(spec(r#"{"latents":[{"name":"F","indicators":[1,2],"marker":9}]}"#).is_err());
    }

    #[test]
    fn rejects_structural_defects() {
        assert!(spec(r#"{"latents":[{"name":"A","indicators":[1,2]},{"name":"B","indicators":[2,3]}]}"#).is_err());
        assert!(spec(r#"{"latents":[{"name":"A","indicators":[1]}]}"#).is_err());
        let cyc = r#"{"latents":[{"name":"A","indicators":[1,2]},{"name":"B","indicators":[3,4]}],
                     "paths":[{"from":"A","to":"B"},{"from":"B","to":"A"}]}"#;
        assert!(spec(cyc).is_err());
        let endo_cov = r#"{"latents":[{"name":"A","indicators":[1,2]},{"name":"B","indicators":[3,4]}],
                     "paths":[{"from":"A","to":"B"}],"covariances":[["A","B"]]}"#;
        assert!(spec(endo_cov).is_err());
        assert!(spec(r#"{"latents":[{"name":"A","indicators":[1,2]}],"bogus":1}"#).is_err());
    }

    #[test]
    fn single_indicator_allowed_with_path() {
        let m = spec(
            r#"{"latents":[{"name":"A","indicators":[1,2]},{"name":"Q","indicators":[3]}],
                "paths":[{"from":"A","to":"Q"}]}"#,
        )
        .unwrap();
        assert!(m.is_endogenous(1));
        assert_eq!(m.observed(), vec![1, 2, 3]);
    }

    #[test]
    fn json_round_trip() {
        let m = spec(
            r#"{"latents":[{"name":"A","indicators":[1,2]},{"name":"B","indicators":[3,4]},
                           {"name":"Q","indicators":[0,33]}],
                "paths":[{"from":"A","to":"Q"},{"from":"B","to":"Q"}],
                "covariances":[["B","A"]]}"#,
        )
        .unwrap();
        let back = MeasurementModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.covariances(), &[(0, 1)]);
    }

    #[test]
    fn pack_inverts_matrices() {
        let m = MeasurementModel::cfa(&[("A".into(), vec![1, 2, 3]), ("B".into(), vec![4, 5])]).unwrap();
        let layout = ParamLayout::new(&m);
        let theta: Vec<f64> = (0..layout.n_free()).map(|i| 0.3 + i as f64 * 0.1).collect();
        assert_eq!(layout.pack(&layout.matrices(&theta)), theta);
        // 3 free loadings, 2 variances, 1 covariance, 5 residuals
        assert_eq!(layout.n_free(), 11);
        assert_eq!(layout.degrees_of_freedom(), 15 - 11);
    }
}
