//! Seeded synthetic data with known ground truth: Likert surveys from a
//! standardized SEM, pairwise-comparison judgments and ordered-probit
//! samples.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::ahp::{self, Hierarchy, JudgmentMatrix, JudgmentRow, RespondentJudgments, WeightVector};
use crate::dataset::{CatalogItem, ItemKind, RespondentRecord, SurveyDataset, VariableCatalog};
use crate::error::{Error, Result};
use crate::sem::{Identification, LatentSpec, MeasurementModel, ModelSpec, ParamLayout, PathSpec, SemMatrices};

/// Recorded in generator metadata so streams can be reproduced elsewhere.
pub const GENERATOR: &str = "ChaCha8Rng";
pub const DEFAULT_THRESHOLDS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

fn default_thresholds() -> [f64; 4] {
    DEFAULT_THRESHOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrueLoading {
    pub item: usize,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrueLatent {
    pub name: String,
    /// Standardized loadings; the first indicator becomes the marker.
    pub loadings: Vec<TrueLoading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TrueCorrelation {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TruePath {
    pub from: String,
    pub to: String,
    /// Standardized coefficient.
    pub value: f64,
}

/// An item generated from the latents but left out of the model, e.g. a
/// weak or cross-loading item that factor analysis should discard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExtraItem {
    pub item: usize,
    /// `(latent, standardized loading)` pairs.
    pub loadings: Vec<(String, f64)>,
}

/// Log-normal waiting time whose log is correlated with one latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DelayTruth {
    pub factor: String,
    pub correlation: f64,
    pub median_hours: f64,
    pub log_sd: f64,
    #[serde(default)]
    pub missing_rate: f64,
}

/// Structure of a standardized SEM: every latent and every indicator has
/// unit variance, so loadings, correlations and paths are all on the
/// standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SemTruth {
    /// Catalog size; the reference questionnaire is used when it has 32 items.
    pub n_items: usize,
    pub latents: Vec<TrueLatent>,
    #[serde(default)]
    pub correlations: Vec<TrueCorrelation>,
    #[serde(default)]
    pub paths: Vec<TruePath>,
    #[serde(default)]
    pub extra_items: Vec<ExtraItem>,
    #[serde(default)]
    pub delay: Option<DelayTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SemGenerator {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_thresholds")]
    pub likert_thresholds: [f64; 4],
    pub true_parameters: SemTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AhpTruth {
    #[serde(default = "Hierarchy::reference")]
    pub hierarchy: Hierarchy,
    pub criteria_weights: Vec<f64>,
    /// Local leaf weights per criterion, in hierarchy order.
    pub leaf_weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AhpGenerator {
    /// Number of respondents.
    pub n: usize,
    pub seed: u64,
    pub true_parameters: AhpTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ProbitTruth {
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ProbitGenerator {
    pub n: usize,
    pub seed: u64,
    pub true_parameters: ProbitTruth,
}

/// Generator specification file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Sem(SemGenerator),
    Ahp(AhpGenerator),
    Probit(ProbitGenerator),
}

impl GeneratorSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::Sem(g) => {
                check_thresholds(&g.likert_thresholds)?;
                g.true_parameters.model()?;
                Ok(())
            }
            GeneratorSpec::Ahp(g) => g.true_parameters.check(),
            GeneratorSpec::Probit(g) => check_ascending(&g.true_parameters.kappa, "kappa"),
        }
    }
}

/// Provenance written next to generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GeneratorMetadata {
    pub generator: String,
    pub seed: u64,
    pub n: usize,
    pub kind: String,
}

impl GeneratorMetadata {
    fn new(kind: &str, seed: u64, n: usize) -> Self {
        Self {
            generator: GENERATOR.into(),
            seed,
            n,
            kind: kind.into(),
        }
    }
}

fn check_ascending(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "{what} must be finite and strictly ascending"
        )));
    }
    Ok(())
}

fn check_thresholds(t: &[f64; 4]) -> Result<()> {
    check_ascending(t, "likert_thresholds")
}

/// Likert category 1..=5 for a continuous response.
pub fn discretize(z: f64, thresholds: &[f64; 4]) -> u8 {
    1 + thresholds.iter().filter(|&&t| z > t).count() as u8
}

impl SemTruth {
    /// The marker-identified model implied by the truth.
    pub fn model(&self) -> Result<MeasurementModel> {
        let spec = ModelSpec {
            latents: self
                .latents
                .iter()
                .map(|l| LatentSpec {
                    name: l.name.clone(),
                    indicators: l.loadings.iter().map(|x| x.item).collect(),
                    marker: None,
                })
                .collect(),
            paths: self
                .paths
                .iter()
                .map(|p| PathSpec {
                    from: p.from.clone(),
                    to: p.to.clone(),
                })
                .collect(),
            covariances: self.correlations.iter().map(|c| [c.a.clone(), c.b.clone()]).collect(),
            identification: Identification::Marker,
        };
        let model = MeasurementModel::from_spec(&spec)?;
        let max_item = self.n_items + 1;
        for item in model
            .observed()
            .into_iter()
            .chain(self.extra_items.iter().map(|e| e.item))
        {
            if item > max_item {
                return Err(Error::InvalidInput(format!(
                    "item {item} outside a {}-item catalog",
                    self.n_items
                )));
            }
        }
        for l in &self.latents {
            if l.loadings.len() == 1 {
                return Err(Error::InvalidInput(format!(
                    "latent `{}` has a single indicator; the generator needs at least two",
                    l.name
                )));
            }
            if l.loadings.iter().any(|x| !(x.loading.abs() < 1.0) || x.loading == 0.0) {
                return Err(Error::InvalidInput(format!(
                    "standardized loadings of `{}` must be non-zero and inside (-1, 1)",
                    l.name
                )));
            }
        }
        Ok(model)
    }

    /// Matrices on the standardized scale: unit latent and indicator
    /// variances.
    pub fn standardized_matrices(&self) -> Result<(MeasurementModel, SemMatrices)> {
        let model = self.model()?;
        let m = model.n_latents();
        let observed = model.observed();
        let p = observed.len();
        let mut lambda = DMatrix::zeros(p, m);
        let mut row = 0;
        for (j, l) in self.latents.iter().enumerate() {
            for x in &l.loadings {
                lambda[(row, j)] = x.loading;
                row += 1;
            }
        }
        let idx = |name: &str| {
            model
                .latent_index(name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown latent `{name}`")))
        };
        let mut beta = DMatrix::zeros(m, m);
        for path in &self.paths {
            beta[(idx(&path.to)?, idx(&path.from)?)] = path.value;
        }
        let mut psi = DMatrix::identity(m, m);
        for c in &self.correlations {
            let (a, b) = (idx(&c.a)?, idx(&c.b)?);
            psi[(a, b)] = c.value;
            psi[(b, a)] = c.value;
        }
        let theta = DVector::from_iterator(p, (0..p).map(|i| 1.0 - lambda.row(i).norm_squared()));
        let mut mats = SemMatrices {
            lambda,
            beta,
            psi,
            theta,
        };
        for t in topological_order(m, model.paths()) {
            if !model.is_endogenous(t) {
                continue;
            }
            let cov = mats.latent_covariance()?;
            let b = mats.beta.row(t).transpose();
            let explained = (b.transpose() * &cov * &b)[(0, 0)];
            let disturbance = 1.0 - explained;
            if !(disturbance > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "paths into `{}` explain {explained:.3} of a unit variance",
                    model.latent_names()[t]
                )));
            }
            mats.psi[(t, t)] = disturbance;
        }
        if crate::numeric::inverse_spd(&mats.psi).is_none() {
            return Err(Error::NotPositiveDefinite("latent correlation matrix".into()));
        }
        Ok((model, mats))
    }

    /// Natural-scale free parameters of the marker-identified model, in
    /// [`ParamLayout`] order.
    pub fn marker_parameters(&self) -> Result<(MeasurementModel, Vec<f64>)> {
        let (model, std) = self.standardized_matrices()?;
        let m = model.n_latents();
        let mut scale = vec![1.0; m];
        let mut row = 0;
        for (j, s) in scale.iter_mut().enumerate() {
            let k = model.indicators(j).len();
            if k > 0 {
                *s = std.lambda[(row, j)];
            }
            row += k;
        }
        let mut mats = std.clone();
        for j in 0..m {
            for i in 0..mats.lambda.nrows() {
                mats.lambda[(i, j)] /= scale[j];
            }
            for k in 0..m {
                mats.psi[(j, k)] = std.psi[(j, k)] * scale[j] * scale[k];
                mats.beta[(j, k)] = std.beta[(j, k)] * scale[j] / scale[k];
            }
        }
        let layout = ParamLayout::new(&model);
        Ok((model, layout.pack(&mats)))
    }

    /// Standardized loading of every modelled item.
    pub fn loading_map(&self) -> BTreeMap<usize, (String, f64)> {
        self.latents
            .iter()
            .flat_map(|l| l.loadings.iter().map(move |x| (x.item, (l.name.clone(), x.loading))))
            .collect()
    }

    fn catalog(&self) -> Result<VariableCatalog> {
        let reference = VariableCatalog::reference();
        if self.n_items == reference.len() {
            return Ok(reference);
        }
        let mut hint: HashMap<usize, &str> = HashMap::new();
        for l in &self.latents {
            for x in &l.loadings {
                hint.insert(x.item, &l.name);
            }
        }
        VariableCatalog::new(
            (1..=self.n_items)
                .map(|i| CatalogItem {
                    index: i,
                    abbreviation: format!("item_{i:02}"),
                    kind: ItemKind::Satisfaction,
                    latent_hint: hint.get(&i).map(|s| s.to_string()),
                    description: None,
                })
                .collect(),
        )
    }
}

fn topological_order(m: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut indeg = vec![0usize; m];
    for &(_, t) in edges {
        indeg[t] += 1;
    }
    let mut order = Vec::with_capacity(m);
    let mut ready: Vec<usize> = (0..m).rev().filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = ready.pop() {
        order.push(v);
        for &(f, t) in edges {
            if f == v {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
    }
    order
}

/// Output of the survey generator.
#[derive(Debug, Clone)]
pub struct SyntheticSurvey {
    pub dataset: SurveyDataset,
    /// Modelled items, in model order.
    pub observed: Vec<usize>,
    /// Continuous responses before discretization (respondents x `observed`).
    pub continuous: DMatrix<f64>,
    /// Implied covariance of the continuous responses.
    pub sigma: DMatrix<f64>,
    pub metadata: GeneratorMetadata,
}

const AGE_BANDS: [&str; 5] = ["18-30", "31-40", "41-50", "51-60", "60+"];
const EXPERIENCE_BANDS: [&str; 4] = ["<5", "5-10", "10-20", "20+"];
const VESSEL_TYPES: [&str; 4] = ["bulk", "container", "tanker", "other"];
const DWT_BANDS: [&str; 4] = ["<1000", "1000-3000", "3000-5000", "5000+"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn cholesky_lower(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(a.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(what.into()))
}

/// Draws a Likert survey from a standardized SEM.
///
/// Latent scores come from the Cholesky factor of the latent covariance;
/// each indicator adds an independent residual. The responses therefore
/// have covariance Σ(θ*) exactly.
pub fn gen_sem_survey(g: &SemGenerator) -> Result<SyntheticSurvey> {
    check_thresholds(&g.likert_thresholds)?;
    let truth = &g.true_parameters;
    let (model, mats) = truth.standardized_matrices()?;
    let sigma = mats.implied_sigma()?;
    cholesky_lower(&sigma, "implied covariance of the generator")?;
    let latent_cov = mats.latent_covariance()?;
    let chol = cholesky_lower(&latent_cov, "latent covariance")?;
    let catalog = truth.catalog()?;
    let observed = model.observed();
    let m = model.n_latents();
    let p = observed.len();

    let mut extras = Vec::new();
    for e in &truth.extra_items {
        if observed.contains(&e.item) {
            return Err(Error::InvalidInput(format!("extra item {} is also modelled", e.item)));
        }
        let mut w = DVector::zeros(m);
        for (name, l) in &e.loadings {
            let j = model
                .latent_index(name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown latent `{name}`")))?;
            w[j] += l;
        }
        let resid = 1.0 - (w.transpose() * &latent_cov * &w)[(0, 0)];
        if !(resid > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "extra item {} has non-positive residual variance",
                e.item
            )));
        }
        extras.push((e.item, w, resid.sqrt()));
    }
    let delay = match &truth.delay {
        Some(d) => {
            let j = model
                .latent_index(&d.factor)
                .ok_or_else(|| Error::InvalidInput(format!("unknown delay factor `{}`", d.factor)))?;
            if !(d.correlation.abs() <= 1.0) || !(d.median_hours > 0.0) || !(d.log_sd >= 0.0) {
                return Err(Error::InvalidInput("delay parameters out of range".into()));
            }
            Some((d, j, latent_cov[(j, j)].sqrt()))
        }
        None => None,
    };
    let resid_sd: Vec<f64> = mats.theta.iter().map(|v| v.sqrt()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut continuous = DMatrix::zeros(g.n, p);
    let mut respondents = Vec::with_capacity(g.n);
    let width = g.n.max(1).to_string().len().max(4);
    for r in 0..g.n {
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eta = &chol * z;
        let mut ratings = BTreeMap::new();
        let mut sati_before = None;
        let mut sati_after = None;
        let mut put = |item: usize, v: f64| {
            let level = discretize(v, &g.likert_thresholds);
            if item == 0 {
                sati_before = Some(level);
            } else if item == catalog.sati_after_index() {
                sati_after = Some(level);
            } else {
                ratings.insert(item, level);
            }
        };
        for (i, &item) in observed.iter().enumerate() {
            let v = (mats.lambda.row(i) * &eta)[(0, 0)] + resid_sd[i] * rng.sample::<f64, _>(StandardNormal);
            continuous[(r, i)] = v;
            put(item, v);
        }
        for (item, w, sd) in &extras {
            let v = w.dot(&eta) + sd * rng.sample::<f64, _>(StandardNormal);
            put(*item, v);
        }
        let delay_hours = delay.map(|(d, j, sd)| {
            let noise: f64 = rng.sample(StandardNormal);
            let missing = rng.random_bool(d.missing_rate.clamp(0.0, 1.0));
            let score = d.correlation * eta[j] / sd + (1.0 - d.correlation.powi(2)).sqrt() * noise;
            let hours = d.median_hours * (d.log_sd * score).exp();
            (!missing).then_some((hours * 10.0).round() / 10.0)
        });
        respondents.push(RespondentRecord {
            id: format!("R{:0width$}", r + 1),
            age_band: pick(&mut rng, &AGE_BANDS).into(),
            gender: if rng.random_bool(0.85) { "male" } else { "female" }.into(),
            experience_band: pick(&mut rng, &EXPERIENCE_BANDS).into(),
            vessel_type: pick(&mut rng, &VESSEL_TYPES).into(),
            dwt_band: pick(&mut rng, &DWT_BANDS).into(),
            delay_hours: delay_hours.flatten(),
            ratings,
            sati_before,
            sati_after,
        });
    }
    Ok(SyntheticSurvey {
        dataset: SurveyDataset::new(respondents, catalog),
        observed,
        continuous,
        sigma,
        metadata: GeneratorMetadata::new("sem", g.seed, g.n),
    })
}

/// Judgment ladder from `1/9` to `9`.
const LADDER: [f64; 9] = [1.0 / 9.0, 1.0 / 7.0, 0.2, 1.0 / 3.0, 1.0, 3.0, 5.0, 7.0, 9.0];

fn ladder_step(ratio: f64) -> usize {
    let target = ahp::selection_for(ratio).value();
    LADDER
        .iter()
        .position(|v| (v - target).abs() < 1e-12)
        .expect("selection values lie on the ladder")
}

/// One ladder step up or down. The direction is drawn so the expected log
/// judgment stays put: the ladder is uneven on the log scale (1 to 3 is a
/// longer move than 3 to 5), and a fair coin would bias pooled weights
/// toward equality. The end rungs can only move inward.
fn bump(step: usize, rng: &mut ChaCha8Rng) -> usize {
    let last = LADDER.len() - 1;
    if step == 0 {
        return 1;
    }
    if step == last {
        return last - 1;
    }
    let down = (LADDER[step] / LADDER[step - 1]).ln();
    let up = (LADDER[step + 1] / LADDER[step]).ln();
    if rng.random_bool(down / (down + up)) {
        step + 1
    } else {
        step - 1
    }
}

fn perturbed_matrix(labels: &[String], w: &[f64], noise_level: f64, rng: &mut ChaCha8Rng) -> JudgmentMatrix {
    let n = w.len();
    let mut values = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in i + 1..n {
            let mut step = ladder_step(w[i] / w[j]);
            if noise_level > 0.0 && rng.random_bool(noise_level.clamp(0.0, 1.0)) {
                step = bump(step, rng);
            }
            let v = LADDER[step];
            values[(i, j)] = v;
            values[(j, i)] = 1.0 / v;
        }
    }
    JudgmentMatrix {
        labels: labels.to_vec(),
        values,
    }
}

/// `m` judgment matrices over `true_w`'s items: every ratio rounded to the
/// nearest admissible value, then bumped one ladder step with probability
/// `noise_level`; the bump direction keeps the expected log judgment unbiased.
pub fn gen_ahp_judgments(true_w: &WeightVector, noise_level: f64, m: usize, seed: u64) -> Vec<JudgmentMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| perturbed_matrix(&true_w.names, &true_w.weights, noise_level, &mut rng))
        .collect()
}

impl AhpTruth {
    fn check(&self) -> Result<()> {
        let h = &self.hierarchy;
        if self.criteria_weights.len() != h.criteria.len()
            || self.leaf_weights.len() != h.leaves.len()
            || self.leaf_weights.iter().zip(&h.leaves).any(|(w, l)| w.len() != l.len())
        {
            return Err(Error::InvalidInput("weight vectors do not match the hierarchy".into()));
        }
        let all = self.criteria_weights.iter().chain(self.leaf_weights.iter().flatten());
        if all.into_iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("true weights must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::InvalidInput("noise_level must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Judgments for a whole hierarchy, plus their CSV rows.
pub fn gen_hierarchy_judgments(g: &AhpGenerator) -> Result<(Vec<RespondentJudgments>, Vec<JudgmentRow>)> {
    let truth = &g.true_parameters;
    truth.check()?;
    let h = &truth.hierarchy;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let width = g.n.max(1).to_string().len().max(2);
    let mut sets = Vec::with_capacity(g.n);
    let mut rows = Vec::new();
    for r in 0..g.n {
        let criteria = perturbed_matrix(&h.criteria, &truth.criteria_weights, truth.noise_level, &mut rng);
        let leaves = h
            .leaves
            .iter()
            .zip(&truth.leaf_weights)
            .map(|(labels, w)| perturbed_matrix(labels, w, truth.noise_level, &mut rng))
            .collect();
        let set = RespondentJudgments {
            respondent_id: format!("E{:0width$}", r + 1),
            criteria,
            leaves,
        };
        rows.extend(ahp::judgment_rows(&set, h));
        sets.push(set);
    }
    Ok((sets, rows))
}

/// `X` with independent standard-normal columns and `y` in `1..=kappa.len()+1`
/// from the latent-threshold model `y* = Xβ + ε`.
pub fn gen_probit(beta: &[f64], kappa: &[f64], n: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    check_ascending(kappa, "kappa")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = beta.len();
    let mut x = DMatrix::zeros(n, k);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut eta = 0.0;
        for j in 0..k {
            let v: f64 = rng.sample(StandardNormal);
            x[(i, j)] = v;
            eta += v * beta[j];
        }
        let latent = eta + rng.sample::<f64, _>(StandardNormal);
        y.push(1 + kappa.iter().filter(|&&c| latent > c).count());
    }
    Ok((x, y))
}

/// Names of the six factors of the reference questionnaire, in fixture order.
pub const REFERENCE_FACTORS: [&str; 6] = [
    "Safe & security",
    "Time & convenience",
    "Lockage regulation",
    "Supporting facilities",
    "Comfortable conditions",
    "Staff skills",
];
pub const QUALITY_LATENT: &str = "Service quality";

/// Standardized loadings of the reference fixture, by catalog item.
const REFERENCE_LOADINGS: [&[(usize, f64)]; 6] = [
    &[(1, 0.759), (2, 0.827), (3, 0.665)],
    &[(5, 0.876), (6, 0.731), (7, 0.667), (8, 0.763), (9, 0.808), (10, 0.740)],
    &[(11, 0.728), (12, 0.760), (13, 0.846), (14, 0.573)],
    &[
        (15, 0.700),
        (16, 0.722),
        (17, 0.608),
        (18, 0.654),
        (19, 0.597),
        (20, 0.765),
        (21, 0.636),
    ],
    &[(22, 0.743), (23, 0.767), (24, 0.846)],
    &[
        (25, 0.757),
        (26, 0.573),
        (29, 0.624),
        (30, 0.617),
        (31, 0.667),
        (32, 0.756),
    ],
];

/// Lower triangle of the factor correlations in `REFERENCE_FACTORS` order.
const REFERENCE_CORRELATIONS: [(usize, usize, f64); 15] = [
    (1, 0, 0.276),
    (2, 0, 0.298),
    (2, 1, 0.308),
    (3, 0, 0.231),
    (3, 1, 0.199),
    (3, 2, 0.424),
    (4, 0, 0.146),
    (4, 1, 0.213),
    (4, 2, 0.465),
    (4, 3, 0.321),
    (5, 0, 0.272),
    (5, 1, 0.262),
    (5, 2, 0.562),
    (5, 3, 0.463),
    (5, 4, 0.588),
];

/// Standardized effects of each factor on overall quality.
const REFERENCE_PATHS: [f64; 6] = [0.235, 0.417, 0.151, 0.300, 0.179, 0.247];
/// Shrinks the structural paths so the quality disturbance stays positive.
const REFERENCE_PATH_SCALE: f64 = 0.8;

/// Truth behind the bundled fixture: six correlated factors over 29 items,
/// an overall-quality latent measured by the two overall ratings, and three
/// items (4, 27, 28) that are weak or cross-loading.
pub fn reference_truth() -> SemTruth {
    let mut latents: Vec<TrueLatent> = REFERENCE_FACTORS
        .iter()
        .zip(REFERENCE_LOADINGS)
        .map(|(name, ls)| TrueLatent {
            name: name.to_string(),
            loadings: ls
                .iter()
                .map(|&(item, loading)| TrueLoading { item, loading })
                .collect(),
        })
        .collect();
    latents.push(TrueLatent {
        name: QUALITY_LATENT.into(),
        loadings: vec![
            TrueLoading {
                item: 0,
                loading: 0.735,
            },
            TrueLoading {
                item: 33,
                loading: 0.822,
            },
        ],
    });
    let f = |i: usize| REFERENCE_FACTORS[i].to_string();
    SemTruth {
        n_items: 32,
        latents,
        correlations: REFERENCE_CORRELATIONS
            .iter()
            .map(|&(a, b, value)| TrueCorrelation {
                a: f(a),
                b: f(b),
                value,
            })
            .collect(),
        paths: REFERENCE_PATHS
            .iter()
            .enumerate()
            .map(|(i, &v)| TruePath {
                from: f(i),
                to: QUALITY_LATENT.into(),
                value: v * REFERENCE_PATH_SCALE,
            })
            .collect(),
        extra_items: vec![
            ExtraItem {
                item: 4,
                loadings: vec![(f(1), 0.3)],
            },
            ExtraItem {
                item: 27,
                loadings: vec![(f(4), 0.5), (f(5), 0.5)],
            },
            ExtraItem {
                item: 28,
                loadings: vec![(f(3), 0.45), (f(5), 0.45)],
            },
        ],
        delay: Some(DelayTruth {
            factor: f(1),
            correlation: -0.5,
            median_hours: 4.0,
            log_sd: 1.0,
            missing_rate: 0.02,
        }),
    }
}

/// Generator spec of the bundled fixture.
pub fn reference_fixture(n: usize, seed: u64) -> SemGenerator {
    SemGenerator {
        n,
        seed,
        likert_thresholds: DEFAULT_THRESHOLDS,
        true_parameters: reference_truth(),
    }
}

/// Supplier-side truth used for the bundled judgment fixture.
pub fn reference_ahp(n: usize, seed: u64, noise_level: f64) -> AhpGenerator {
    AhpGenerator {
        n,
        seed,
        true_parameters: AhpTruth {
            hierarchy: Hierarchy::reference(),
            criteria_weights: vec![0.6, 0.2, 0.2],
            leaf_weights: vec![vec![0.75, 0.25], vec![0.5, 0.5], vec![0.25, 0.75]],
            noise_level,
        },
    }
}
