//! End-to-end evaluation run: survey ingestion through the simplified
//! questionnaire, collected into one JSON bundle with a Markdown summary
//! rendered from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::ahp::{self, AhpReport, BiasReport, Hierarchy, WeightVector};
use crate::dataset::{self, DescriptiveReport, RejectedRow, SurveyDataset, VariableCatalog};
use crate::efa::{self, FactorAssignment, HintMismatch, LoadingMatrix, PruneOptions};
use crate::error::{Error, Result};
use crate::numeric::correlation;
use crate::oprobit::{self, Elimination, EliminationResult, ProbitOptions, SimplifiedQuestionnaire};
use crate::psychometrics::{self, AdequacyReport};
use crate::scoring::{self, DelayStrata, EntropyReport, ScoreWeights, ValidationReport};
use crate::sem::{
    self, FitIndices, FitOptions, Identification, LatentSpec, MeasurementModel, ModelSpec, PathSpec, SemEstimate,
    ValidityReport,
};

pub const DEFAULT_QUALITY_LATENT: &str = "Service quality";
pub const DEFAULT_SEED: u64 = 7;
/// Share of respondents used for estimation when `n_train` is not given.
pub const DEFAULT_TRAIN_SHARE: f64 = 0.6;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

/// Every gate and cut-off the pipeline applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub alpha_gate: f64,
    pub kmo_gate: f64,
    pub bartlett_gate: f64,
    pub loading: f64,
    pub cross_margin: f64,
    pub cr_gate: f64,
    pub probit_alpha: f64,
    pub cmin_df_gate: f64,
    pub rmsea_gate: f64,
    pub incremental_gate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alpha_gate: psychometrics::ALPHA_GATE,
            kmo_gate: psychometrics::KMO_GATE,
            bartlett_gate: psychometrics::BARTLETT_GATE,
            loading: efa::DEFAULT_LOADING_THRESHOLD,
            cross_margin: efa::DEFAULT_CROSS_MARGIN,
            cr_gate: ahp::CR_GATE,
            probit_alpha: oprobit::DEFAULT_ALPHA,
            cmin_df_gate: sem::CMIN_DF_GATE,
            rmsea_gate: sem::RMSEA_GATE,
            incremental_gate: sem::INCREMENTAL_GATE,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let open_unit = [
            ("alpha_gate", self.alpha_gate),
            ("kmo_gate", self.kmo_gate),
            ("bartlett_gate", self.bartlett_gate),
            ("loading", self.loading),
            ("probit_alpha", self.probit_alpha),
            ("incremental_gate", self.incremental_gate),
        ];
        for (name, v) in open_unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidInput(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.cross_margin) {
            return Err(Error::InvalidInput(format!(
                "cross_margin = {} must lie in [0, 1)",
                self.cross_margin
            )));
        }
        for (name, v) in [
            ("cr_gate", self.cr_gate),
            ("cmin_df_gate", self.cmin_df_gate),
            ("rmsea_gate", self.rmsea_gate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub survey: PathBuf,
    /// Reference questionnaire when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Synthesized from the factor analysis when absent.
    #[serde(default)]
    pub model_spec: Option<PathBuf>,
    /// Supplier-side sections are skipped when absent.
    #[serde(default)]
    pub judgments: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_quality")]
    pub quality_latent: String,
    #[serde(default = "default_exclusions")]
    pub stratum_exclusions: Vec<String>,
    #[serde(default)]
    pub elimination: Elimination,
    #[serde(default)]
    pub exclude_inconsistent: bool,
    /// Destination of the report bundle. Empty leaves the choice to the caller.
    #[serde(default)]
    pub out_dir: PathBuf,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_quality() -> String {
    DEFAULT_QUALITY_LATENT.into()
}

fn default_exclusions() -> Vec<String> {
    vec![scoring::DEFAULT_STRATUM_EXCLUSION.into()]
}

impl PipelineConfig {
    pub fn new(survey: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            survey: survey.into(),
            catalog: None,
            model_spec: None,
            judgments: None,
            seed: DEFAULT_SEED,
            n_train: None,
            thresholds: Thresholds::default(),
            quality_latent: default_quality(),
            stratum_exclusions: default_exclusions(),
            elimination: Elimination::default(),
            exclude_inconsistent: false,
            out_dir: out_dir.into(),
        }
    }

    /// Reads a config file. Relative input paths are taken relative to the
    /// file's directory; `out_dir` is left as written.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.survey);
        for p in [&mut cfg.catalog, &mut cfg.model_spec, &mut cfg.judgments]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        Ok(cfg)
    }
}

/// Run provenance. `generated_at_unix` is the only field that varies
/// between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub generated_at_unix: u64,
    pub seed: u64,
    /// Input file names (without directories).
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DataSection {
    pub n_valid: usize,
    pub n_rejected: usize,
    pub valid_rate: f64,
    pub rejected: Vec<RejectedRow>,
    pub descriptive: DescriptiveReport,
    pub n_train: usize,
    pub n_holdout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EfaSection {
    pub n_respondents: usize,
    pub rotated: LoadingMatrix,
    pub assignment: FactorAssignment,
    pub factor_names: Vec<String>,
    pub hint_mismatches: Vec<HintMismatch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSource {
    File,
    FactorAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SemSection {
    pub source: ModelSource,
    pub estimate: SemEstimate,
    pub fit: FitIndices,
    pub validity: Option<ValidityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EntropySection {
    pub latents: EntropyReport,
    /// Entropy of the closing overall rating over all respondents.
    pub sati_after: Option<f64>,
    pub strata: Option<DelayStrata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SupplierSection {
    pub ahp: AhpReport,
    /// Normalized standardized structural weights of the fitted model.
    pub objective_weights: Option<WeightVector>,
    pub bias: Option<BiasReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ProbitSection {
    pub outcome: String,
    /// Observed rating to model category, when some ratings never occur.
    pub category_map: BTreeMap<u8, usize>,
    pub elimination: EliminationResult,
    pub questionnaire: SimplifiedQuestionnaire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GateOutcome {
    pub stage: String,
    pub gate: String,
    pub value: Option<f64>,
    pub direction: String,
    pub threshold: f64,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub thresholds: Thresholds,
    pub data: DataSection,
    pub reliability: Option<AdequacyReport>,
    pub efa: Option<EfaSection>,
    pub model: Option<ModelSpec>,
    pub sem: Option<SemSection>,
    pub validation: Option<ValidationReport>,
    pub entropy: Option<EntropySection>,
    pub supplier: Option<SupplierSection>,
    pub probit: Option<ProbitSection>,
    pub gates: Vec<GateOutcome>,
    /// Sections that could not be produced.
    pub absent: Vec<String>,
    pub warnings: Vec<String>,
}

impl EvaluationReport {
    /// Gates that failed; `--strict` turns a non-empty list into exit code 2.
    pub fn failed_gates(&self) -> Vec<&GateOutcome> {
        self.gates.iter().filter(|g| g.pass == Some(false)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the timestamp zeroed, for run-to-run comparison.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.metadata.generated_at_unix = 0;
        copy.to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn gate(stage: &str, name: &str, value: Option<f64>, direction: &str, threshold: f64) -> GateOutcome {
    let pass = value.map(|v| match direction {
        "<" => v < threshold,
        ">" => v > threshold,
        _ => v >= threshold,
    });
    GateOutcome {
        stage: stage.into(),
        gate: name.into(),
        value,
        direction: direction.into(),
        threshold,
        pass,
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// CFA spec from an EFA assignment: one latent per factor with at least two
/// items (lowest item number as marker), all factors correlated, and a
/// quality latent measured by the two overall ratings with a path from
/// every factor.
pub fn spec_from_assignment(
    assignment: &FactorAssignment,
    names: &[String],
    catalog: &VariableCatalog,
    quality: &str,
) -> (ModelSpec, Vec<String>) {
    let mut warnings = Vec::new();
    let mut latents = Vec::new();
    for f in 0..assignment.n_factors {
        let items = assignment.items_of(f);
        if items.len() < 2 {
            warnings.push(format!(
                "factor `{}` has {} item(s) and is left out of the model",
                names[f],
                items.len()
            ));
            continue;
        }
        latents.push(LatentSpec {
            name: names[f].clone(),
            indicators: items,
            marker: None,
        });
    }
    let mut covariances = Vec::new();
    for a in 0..latents.len() {
        for b in a + 1..latents.len() {
            covariances.push([latents[a].name.clone(), latents[b].name.clone()]);
        }
    }
    let paths = latents
        .iter()
        .map(|l| PathSpec {
            from: l.name.clone(),
            to: quality.into(),
        })
        .collect();
    latents.push(LatentSpec {
        name: quality.into(),
        indicators: vec![catalog.sati_before_index(), catalog.sati_after_index()],
        marker: None,
    });
    (
        ModelSpec {
            latents,
            paths,
            covariances,
            identification: Identification::Marker,
        },
        warnings,
    )
}

fn check_spec_against_catalog(model: &MeasurementModel, catalog: &VariableCatalog) -> Result<()> {
    let max = catalog.sati_after_index();
    if let Some(bad) = model.observed().into_iter().find(|&i| i > max) {
        return Err(Error::InvalidInput(format!(
            "model spec uses item {bad}, but the catalog ends at {max}"
        )));
    }
    Ok(())
}

/// Factor name to item list for every latent with indicators except `quality`.
fn factor_groups(spec: &ModelSpec, quality: &str) -> Vec<(String, Vec<usize>)> {
    spec.latents
        .iter()
        .filter(|l| l.name != quality && !l.indicators.is_empty())
        .map(|l| (l.name.clone(), l.indicators.clone()))
        .collect()
}

/// Runs every stage. Input problems are errors; stage failures become
/// warnings and absent sections.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    cfg.thresholds.validate()?;
    let th = &cfg.thresholds;
    let catalog = match &cfg.catalog {
        Some(p) => VariableCatalog::load(p)?,
        None => VariableCatalog::reference(),
    };
    let loaded = dataset::load_survey(&cfg.survey, &catalog)?;
    let supplied_model = match &cfg.model_spec {
        Some(p) => {
            let m = MeasurementModel::load(p)?;
            check_spec_against_catalog(&m, &catalog)?;
            Some(m)
        }
        None => None,
    };
    let hierarchy = Hierarchy::reference();
    let judgments = match &cfg.judgments {
        Some(p) => Some(ahp::load_judgments(p, &hierarchy)?),
        None => None,
    };

    let mut inputs = BTreeMap::new();
    inputs.insert("survey".to_string(), file_name(&cfg.survey));
    for (key, path) in [
        ("catalog", &cfg.catalog),
        ("model_spec", &cfg.model_spec),
        ("judgments", &cfg.judgments),
    ] {
        if let Some(p) = path {
            inputs.insert(key.to_string(), file_name(p));
        }
    }
    let generated_at_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let mut warnings = Vec::new();
    let mut absent = Vec::new();
    let mut gates = Vec::new();
    let d = &loaded.dataset;
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !loaded.rejected.is_empty() {
        warnings.push(format!("{} survey row(s) rejected", loaded.rejected.len()));
    }
    let descriptive = dataset::describe(d)?;
    let n_train = cfg
        .n_train
        .unwrap_or_else(|| ((d.len() as f64) * DEFAULT_TRAIN_SHARE).round() as usize);
    let (train, holdout) = dataset::split(d, n_train, cfg.seed)?;
    let data = DataSection {
        n_valid: d.len(),
        n_rejected: loaded.rejected.len(),
        valid_rate: loaded.valid_rate(),
        rejected: loaded.rejected.clone(),
        descriptive,
        n_train: train.len(),
        n_holdout: holdout.len(),
    };

    let items: Vec<usize> = (1..=catalog.len()).collect();
    let full_items = d.matrix(&items);
    let reliability = match psychometrics::adequacy(&full_items.data) {
        Ok(r) => {
            gates.push(gate(
                "reliability",
                "Cronbach alpha",
                Some(r.cronbach_alpha),
                ">=",
                th.alpha_gate,
            ));
            gates.push(gate("reliability", "KMO", r.kmo, ">=", th.kmo_gate));
            gates.push(gate(
                "reliability",
                "Bartlett p",
                r.bartlett.map(|b| b.p_value),
                "<",
                th.bartlett_gate,
            ));
            warnings.extend(r.notes.iter().map(|n| format!("reliability: {n}")));
            Some(r)
        }
        Err(e) => {
            warnings.push(format!("reliability: {e}"));
            absent.push("reliability".into());
            None
        }
    };

    let efa_section = run_efa(&train, &items, th).map_err(|e| {
        warnings.push(format!("efa: {e}"));
        absent.push("efa".into());
    });
    let efa_section = efa_section.ok();
    if let Some(s) = &efa_section {
        warnings.extend(s.assignment.warnings.iter().map(|w| format!("efa: {w}")));
    }

    let (model, source) = match supplied_model {
        Some(m) => (Some(m), ModelSource::File),
        None => match &efa_section {
            Some(s) => {
                let (spec, w) = spec_from_assignment(&s.assignment, &s.factor_names, &catalog, &cfg.quality_latent);
                warnings.extend(w);
                match MeasurementModel::from_spec(&spec) {
                    Ok(m) => (Some(m), ModelSource::FactorAnalysis),
                    Err(e) => {
                        warnings.push(format!("model synthesis: {e}"));
                        (None, ModelSource::FactorAnalysis)
                    }
                }
            }
            None => (None, ModelSource::FactorAnalysis),
        },
    };
    let model = model.and_then(|m| match drop_constant_indicators(&m, &train) {
        Ok((m, w)) => {
            warnings.extend(w);
            Some(m)
        }
        Err(e) => {
            warnings.push(format!("model: {e}"));
            None
        }
    });
    let model_spec = model.as_ref().map(MeasurementModel::spec);

    let sem_section = model.as_ref().and_then(|m| match run_sem(m, &train, source, th) {
        Ok((s, g)) => {
            gates.extend(g);
            warnings.extend(s.estimate.warnings.iter().map(|w| format!("sem: {w}")));
            Some(s)
        }
        Err(e) => {
            warnings.push(format!("sem: {e}"));
            None
        }
    });
    if sem_section.is_none() {
        absent.push("sem".into());
    }

    let weights = sem_section.as_ref().and_then(|s| {
        ScoreWeights::from_estimate(&s.estimate, &cfg.quality_latent)
            .map_err(|e| warnings.push(format!("scoring: {e}")))
            .ok()
    });
    let validation = weights.as_ref().and_then(|w| {
        warnings.extend(w.warnings.iter().map(|x| format!("scoring: {x}")));
        scoring::validation_error(&holdout, w)
            .map_err(|e| warnings.push(format!("validation: {e}")))
            .ok()
    });
    if validation.is_none() {
        absent.push("validation".into());
    }

    let groups = model_spec
        .as_ref()
        .map(|s| factor_groups(s, &cfg.quality_latent))
        .unwrap_or_default();
    let entropy = if groups.is_empty() {
        warnings.push("entropy: no factor structure available".into());
        None
    } else {
        match scoring::entropy_report(d, &groups, &[]) {
            Ok(latents) => {
                let sati_after = scoring::item_entropy(d, catalog.sati_after_index())
                    .map_err(|e| warnings.push(format!("entropy: sati_after: {e}")))
                    .ok();
                let strata = scoring::delay_strata(d, &groups, &cfg.stratum_exclusions)
                    .map_err(|e| warnings.push(format!("strata: {e}")))
                    .ok();
                Some(EntropySection {
                    latents,
                    sati_after,
                    strata,
                })
            }
            Err(e) => {
                warnings.push(format!("entropy: {e}"));
                None
            }
        }
    };
    if entropy.is_none() {
        absent.push("entropy".into());
    }

    let supplier = match &judgments {
        None => {
            absent.push("supplier".into());
            None
        }
        Some(js) => match ahp::analyze(js, &hierarchy, th.cr_gate, cfg.exclude_inconsistent) {
            Ok(report) => {
                for level in std::iter::once(&report.criteria).chain(&report.leaves) {
                    gates.push(gate(
                        "ahp",
                        &format!("CR {}", level.level),
                        Some(level.consistency.cr),
                        "<",
                        th.cr_gate,
                    ));
                }
                warnings.extend(report.warnings.iter().map(|w| format!("ahp: {w}")));
                let objective_weights = sem_section.as_ref().and_then(|s| {
                    objective_weights(&s.estimate, &cfg.quality_latent)
                        .map_err(|e| warnings.push(format!("objective weights: {e}")))
                        .ok()
                });
                let bias = objective_weights.as_ref().and_then(|ow| {
                    let map = ow.names.iter().cloned().zip(ow.weights.iter().copied()).collect();
                    ahp::bias_report(&map, &report.global, &hierarchy)
                        .map_err(|e| warnings.push(format!("bias: {e}")))
                        .ok()
                });
                Some(SupplierSection {
                    ahp: report,
                    objective_weights,
                    bias,
                })
            }
            Err(e) => {
                warnings.push(format!("ahp: {e}"));
                absent.push("supplier".into());
                None
            }
        },
    };

    let predictors: Vec<usize> = match &model_spec {
        Some(s) => {
            let mut v: Vec<usize> = factor_groups(s, &cfg.quality_latent)
                .into_iter()
                .flat_map(|(_, g)| g)
                .filter(|&i| i >= 1 && i <= catalog.len())
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => items.clone(),
    };
    let construct_of: BTreeMap<usize, String> = groups
        .iter()
        .flat_map(|(n, g)| g.iter().map(move |&i| (i, n.clone())))
        .collect();
    let probit = run_probit(d, &predictors, &construct_of, cfg, &mut warnings)
        .map_err(|e| warnings.push(format!("probit: {e}")))
        .ok();
    if probit.is_none() {
        absent.push("probit".into());
    }

    Ok(EvaluationReport {
        metadata: ReportMetadata {
            tool: "servqual".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            generated_at_unix,
            seed: cfg.seed,
            inputs,
        },
        thresholds: *th,
        data,
        reliability,
        efa: efa_section,
        model: model_spec,
        sem: sem_section,
        validation,
        entropy,
        supplier,
        probit,
        gates,
        absent,
        warnings,
    })
}

/// Removes indicators that never vary in `train`; their sample variance
/// would make the covariance matrix singular.
fn drop_constant_indicators(
    model: &MeasurementModel,
    train: &SurveyDataset,
) -> Result<(MeasurementModel, Vec<String>)> {
    let constant: Vec<usize> = model
        .observed()
        .into_iter()
        .filter(|&item| {
            let mut values = train.respondents.iter().filter_map(|r| train.value(r, item));
            match values.next() {
                Some(first) => values.all(|v| v == first),
                None => false,
            }
        })
        .collect();
    if constant.is_empty() {
        return Ok((model.clone(), Vec::new()));
    }
    let mut spec = model.spec();
    for l in &mut spec.latents {
        l.indicators.retain(|i| !constant.contains(i));
        if l.marker.is_some_and(|m| constant.contains(&m)) {
            l.marker = None;
        }
    }
    let warnings = constant
        .iter()
        .map(|i| format!("model: item {i} is constant in the training set and was dropped"))
        .collect();
    Ok((MeasurementModel::from_spec(&spec)?, warnings))
}

fn run_efa(train: &SurveyDataset, items: &[usize], th: &Thresholds) -> Result<EfaSection> {
    let m = train.matrix(items);
    let r = correlation(&m.data)?;
    let unrotated = efa::extract_pca(&r, &m.items)?;
    let rotated = efa::rotate_varimax(&unrotated);
    let opts = PruneOptions {
        threshold: th.loading,
        cross_margin: th.cross_margin,
    };
    let assignment = efa::prune(&rotated, &opts, Some(&m.data));
    let (factor_names, hint_mismatches) = efa::name_factors(&assignment, &train.catalog);
    Ok(EfaSection {
        n_respondents: m.data.nrows(),
        rotated,
        assignment,
        factor_names,
        hint_mismatches,
    })
}

fn run_sem(
    model: &MeasurementModel,
    train: &SurveyDataset,
    source: ModelSource,
    th: &Thresholds,
) -> Result<(SemSection, Vec<GateOutcome>)> {
    let estimate = sem::fit_dataset(model, train, &FitOptions::default())?;
    let fit = sem::fit_indices(&estimate)?;
    let validity = sem::construct_validity(&estimate).ok();
    let mut gates = Vec::new();
    for g in &fit.gates {
        let threshold = match g.index.as_str() {
            "CMIN/DF" => th.cmin_df_gate,
            "RMSEA" => th.rmsea_gate,
            _ => th.incremental_gate,
        };
        gates.push(gate("sem fit", &g.index, g.value, &g.direction, threshold));
    }
    Ok((
        SemSection {
            source,
            estimate,
            fit,
            validity,
        },
        gates,
    ))
}

/// Standardized structural weights of the paths into (or out of) `quality`,
/// normalized to sum to one.
pub fn objective_weights(est: &SemEstimate, quality: &str) -> Result<WeightVector> {
    let mut names = Vec::new();
    let mut weights = Vec::new();
    for (from, to, w) in est.standardized_paths() {
        if to == quality {
            names.push(from);
        } else if from == quality {
            names.push(to);
        } else {
            continue;
        }
        weights.push(w);
    }
    if names.is_empty() {
        return Err(Error::InvalidInput(format!("no structural paths involve `{quality}`")));
    }
    WeightVector::new(names, weights)
}

/// Relabels observed ratings to consecutive categories `1..=K`.
pub fn collapse_categories(y: &[u8]) -> (Vec<usize>, BTreeMap<u8, usize>) {
    let mut seen: Vec<u8> = y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    let map: BTreeMap<u8, usize> = seen.iter().enumerate().map(|(i, &v)| (v, i + 1)).collect();
    (y.iter().map(|v| map[v]).collect(), map)
}

fn run_probit(
    d: &SurveyDataset,
    predictors: &[usize],
    construct_of: &BTreeMap<usize, String>,
    cfg: &PipelineConfig,
    warnings: &mut Vec<String>,
) -> Result<ProbitSection> {
    if predictors.is_empty() {
        return Err(Error::InvalidInput("no predictors".into()));
    }
    let after = d.catalog.sati_after_index();
    let mut cols = predictors.to_vec();
    cols.push(after);
    let m = d.matrix(&cols);
    let k = predictors.len();
    let x = m.data.columns(0, k).into_owned();
    let raw: Vec<u8> = m.data.column(k).iter().map(|v| *v as u8).collect();
    let (y, category_map) = collapse_categories(&raw);
    let n_categories = category_map.len();
    if n_categories < 5 {
        warnings.push(format!(
            "probit: sati_after uses {n_categories} of 5 categories; unobserved ones were collapsed"
        ));
    }
    let names: Vec<String> = predictors.iter().map(|&i| d.catalog.label(i)).collect();
    let elimination = oprobit::backward_eliminate(
        &x,
        &y,
        &names,
        n_categories,
        cfg.thresholds.probit_alpha,
        cfg.elimination,
        &ProbitOptions::default(),
    )?;
    warnings.extend(elimination.warnings.iter().map(|w| format!("probit: {w}")));
    let survivors: Vec<usize> = predictors
        .iter()
        .zip(&names)
        .filter(|(_, n)| elimination.survivors.contains(n))
        .map(|(&i, _)| i)
        .collect();
    let questionnaire = SimplifiedQuestionnaire::build(&survivors, &d.catalog, |i| construct_of.get(&i).cloned());
    Ok(ProbitSection {
        outcome: "sati_after".into(),
        category_map,
        elimination,
        questionnaire,
    })
}

/// Writes `report.json` and `report.md` into the configured directory.
pub fn write_report(report: &EvaluationReport, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let json_path = out_dir.join(REPORT_JSON);
    let md_path = out_dir.join(REPORT_MD);
    let mut json = report.to_json();
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| Error::io(json_path.display().to_string(), e))?;
    std::fs::write(&md_path, render_markdown(report)).map_err(|e| Error::io(md_path.display().to_string(), e))?;
    Ok((json_path, md_path))
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "n/a".into())
}

fn fmt_pass(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "n/a",
    }
}

/// Human-readable summary built only from the report contents.
pub fn render_markdown(r: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Service quality evaluation\n");
    let _ = writeln!(
        s,
        "{} v{}, seed {}. Survey: {} valid respondents ({} rejected), {} for estimation and {} held out.\n",
        r.metadata.tool,
        r.metadata.version,
        r.metadata.seed,
        r.data.n_valid,
        r.data.n_rejected,
        r.data.n_train,
        r.data.n_holdout
    );

    let _ = writeln!(s, "## Gates\n");
    let _ = writeln!(s, "| Stage | Gate | Value | Threshold | Result |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for g in &r.gates {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} {} | {} |",
            g.stage,
            g.gate,
            fmt_opt(g.value, 3),
            g.direction,
            g.threshold,
            fmt_pass(g.pass)
        );
    }
    s.push('\n');

    if let Some(e) = &r.efa {
        let _ = writeln!(s, "## Factor analysis\n");
        let _ = writeln!(
            s,
            "{} factors retained from {} respondents; {} item(s) dropped.\n",
            e.assignment.n_factors,
            e.n_respondents,
            e.assignment.dropped.len()
        );
        let _ = writeln!(s, "| Factor | Items | Alpha |");
        let _ = writeln!(s, "|---|---|---|");
        for (f, name) in e.factor_names.iter().enumerate() {
            let items: Vec<String> = e.assignment.items_of(f).iter().map(|i| i.to_string()).collect();
            let _ = writeln!(
                s,
                "| {} | {} | {} |",
                name,
                items.join(", "),
                fmt_opt(e.assignment.per_factor_alpha.get(f).copied().flatten(), 3)
            );
        }
        s.push('\n');
    }

    if let Some(sem) = &r.sem {
        let f = &sem.fit;
        let _ = writeln!(s, "## Structural model\n");
        let _ = writeln!(
            s,
            "chi2 = {:.3} on {} df, CMIN/DF = {}, RMSEA = {}, CFI = {:.3}, GFI = {:.3}, TLI = {}. Converged: {}.\n",
            f.chi2,
            f.df,
            fmt_opt(f.cmin_df, 3),
            fmt_opt(f.rmsea, 3),
            f.cfi,
            f.gfi,
            fmt_opt(f.tli, 3),
            sem.estimate.converged
        );
        let paths = sem.estimate.standardized_paths();
        if !paths.is_empty() {
            let _ = writeln!(s, "| From | To | Standardized |");
            let _ = writeln!(s, "|---|---|---|");
            for (from, to, w) in paths {
                let _ = writeln!(s, "| {from} | {to} | {w:.3} |");
            }
            s.push('\n');
        }
        if let Some(v) = &sem.validity {
            let _ = writeln!(s, "| Latent | CR | AVE | Discriminant |");
            let _ = writeln!(s, "|---|---|---|---|");
            for f in &v.factors {
                let _ = writeln!(
                    s,
                    "| {} | {:.3} | {:.3} | {} |",
                    f.latent,
                    f.composite_reliability,
                    f.ave,
                    fmt_pass(Some(f.discriminant_pass))
                );
            }
            s.push('\n');
        }
    }

    if let Some(v) = &r.validation {
        let _ = writeln!(s, "## Holdout validation\n");
        let _ = writeln!(
            s,
            "{} respondents scored ({} skipped). Mean error {:.4}, mean signed error {:.4}, share within the error band {:.3}.\n",
            v.n_scored, v.n_skipped, v.mean_error, v.mean_signed_error, v.within_band_share
        );
    }

    if let Some(e) = &r.entropy {
        let _ = writeln!(s, "## Entropy\n");
        let _ = writeln!(s, "| Latent | Entropy | Variability |");
        let _ = writeln!(s, "|---|---|---|");
        for l in &e.latents.latents {
            let _ = writeln!(s, "| {} | {:.4} | {:.4} |", l.latent, l.entropy, l.variability);
        }
        s.push('\n');
        if let Some(st) = &e.strata {
            let _ = writeln!(s, "| Delay (h) | Count | Share % | S | S (retained items) |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for b in &st.bins {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.1} | {} | {} |",
                    b.label,
                    b.count,
                    b.share_pct,
                    fmt_opt(b.s, 3),
                    fmt_opt(b.s_retained_items, 3)
                );
            }
            s.push('\n');
        }
    }

    if let Some(sup) = &r.supplier {
        let _ = writeln!(s, "## Supplier weights\n");
        let _ = writeln!(s, "{} of {} respondents used.\n", sup.ahp.used, sup.ahp.respondents);
        match &sup.bias {
            Some(b) => {
                let _ = writeln!(s, "| Factor | OW | OW rank | SW | SW rank |");
                let _ = writeln!(s, "|---|---|---|---|---|");
                for row in &b.rows {
                    let _ = writeln!(
                        s,
                        "| {} | {:.3} | {} | {:.3} | {} |",
                        row.factor, row.ow, row.ow_rank, row.sw, row.sw_rank
                    );
                }
                let _ = writeln!(s, "\nSpearman rank correlation: {:.3}.\n", b.spearman);
            }
            None => {
                let _ = writeln!(s, "| Factor | SW | Rank |");
                let _ = writeln!(s, "|---|---|---|");
                let g = &sup.ahp.global;
                for i in 0..g.names.len() {
                    let _ = writeln!(s, "| {} | {:.3} | {} |", g.names[i], g.weights[i], g.ranks[i]);
                }
                s.push('\n');
            }
        }
    }

    if let Some(p) = &r.probit {
        let m = &p.elimination.final_model;
        let _ = writeln!(s, "## Ordered probit\n");
        let _ = writeln!(
            s,
            "Outcome {}: LL = {:.3}, null LL = {:.3}, pseudo R2 = {:.4}, LR chi2({}) = {:.2}. {} of {} predictors survive.\n",
            p.outcome,
            m.loglik,
            m.loglik_null,
            m.pseudo_r2,
            m.lr_df,
            m.lr_chi2,
            p.elimination.survivors.len(),
            p.elimination.initial.coefficients.len()
        );
        if !p.questionnaire.rows.is_empty() {
            let _ = writeln!(s, "| Construct | Question | Abbreviation |");
            let _ = writeln!(s, "|---|---|---|");
            for q in &p.questionnaire.rows {
                let _ = writeln!(s, "| {} | {} | {} |", q.construct, q.question_number, q.abbreviation);
            }
            s.push('\n');
        }
    }

    if !r.absent.is_empty() {
        let _ = writeln!(s, "## Absent sections\n\n{}\n", r.absent.join(", "));
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "## Warnings\n");
        for w in &r.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn thresholds_domain() {
        assert!(Thresholds::default().validate().is_ok());
        let bad = Thresholds {
            alpha_gate: 1.2,
            ..Thresholds::default()
        };
        assert!(bad.validate().is_err());
        let bad = Thresholds {
            cr_gate: 0.0,
            ..Thresholds::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn collapse_keeps_order() {
        let (y, map) = collapse_categories(&[5, 2, 2, 4, 5]);
        assert_eq!(y, vec![3, 1, 1, 2, 3]);
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn spec_from_assignment_skips_thin_factors() {
        let mut factor_of = BTreeMap::new();
        for (i, f) in [(1, 0), (2, 0), (3, 1), (4, 2), (5, 2)] {
            factor_of.insert(i, f);
        }
        let a = FactorAssignment {
            n_factors: 3,
            retained: vec![1, 2, 3, 4, 5],
            dropped: vec![],
            factor_of,
            per_factor_alpha: vec![None; 3],
            warnings: vec![],
        };
        let names = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let catalog = VariableCatalog::reference();
        let (spec, warnings) = spec_from_assignment(&a, &names, &catalog, "Q");
        assert_eq!(warnings.len(), 1);
        assert_eq!(spec.latents.len(), 3);
        assert_eq!(spec.latents[2].indicators, vec![0, 33]);
        assert_eq!(spec.paths.len(), 2);
        assert_eq!(spec.covariances.len(), 1);
        assert!(MeasurementModel::from_spec(&spec).is_ok());
    }

    #[test]
    fn objective_weights_normalize_paths() {
        let s = synth::gen_sem_survey(&synth::reference_fixture(600, 3)).unwrap();
        let model = synth::reference_truth().model().unwrap();
        let est = sem::fit_dataset(&model, &s.dataset, &FitOptions::default()).unwrap();
        let w = objective_weights(&est, synth::QUALITY_LATENT).unwrap();
        assert_eq!(w.names.len(), 6);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
