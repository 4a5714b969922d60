use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use servqual::ahp::{self, Hierarchy, WeightVector};
use servqual::dataset::{self, SurveyDataset, VariableCatalog};
use servqual::oprobit::{self, Elimination, ProbitOptions, SimplifiedQuestionnaire};
use servqual::pipeline::{self, PipelineConfig, Thresholds};
use servqual::scoring::{self, ScoreWeights};
use servqual::sem::{self, FitOptions, MeasurementModel, SemEstimate};
use servqual::{efa, numeric, psychometrics, synth};

const EXIT_INPUT: u8 = 1;
const EXIT_GATE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "servqual",
    version,
    about = "Service-quality evaluation from survey and expert-judgment data"
)]
struct Cli {
    /// Exit with status 2 when a documented gate fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Write JSON output to this file instead of stdout.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SurveyArgs {
    /// Survey CSV.
    #[arg(long, short)]
    input: PathBuf,
    /// Item catalog JSON; the reference questionnaire when omitted.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

impl SurveyArgs {
    fn catalog(&self) -> anyhow::Result<VariableCatalog> {
        Ok(match &self.catalog {
            Some(p) => VariableCatalog::load(p)?,
            None => VariableCatalog::reference(),
        })
    }

    fn load(&self) -> anyhow::Result<dataset::LoadedSurvey> {
        let catalog = self.catalog()?;
        Ok(dataset::load_survey(&self.input, &catalog)?)
    }

    fn dataset(&self) -> anyhow::Result<SurveyDataset> {
        let loaded = self.load()?;
        if !loaded.rejected.is_empty() {
            eprintln!("warning: {} row(s) rejected", loaded.rejected.len());
        }
        Ok(loaded.dataset)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sem,
    Ahp,
    Probit,
}

#[derive(Subcommand)]
enum Command {
    /// Check a survey file against the catalog and list rejected rows.
    Validate(SurveyArgs),
    /// Per-item descriptive statistics and normality checks.
    Describe(SurveyArgs),
    /// Cronbach alpha, KMO and Bartlett's test.
    Reliability {
        #[command(flatten)]
        survey: SurveyArgs,
        /// Items to include (default: every catalog item).
        #[arg(long, value_delimiter = ',')]
        items: Vec<usize>,
    },
    /// Principal components, varimax rotation and item pruning.
    Efa {
        #[command(flatten)]
        survey: SurveyArgs,
        #[arg(long, default_value_t = efa::DEFAULT_LOADING_THRESHOLD)]
        loading: f64,
        #[arg(long, default_value_t = efa::DEFAULT_CROSS_MARGIN)]
        cross_margin: f64,
    },
    /// Maximum-likelihood SEM fit, fit indices and construct validity.
    Sem {
        #[command(flatten)]
        survey: SurveyArgs,
        /// Model spec JSON; synthesized from the factor analysis when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = pipeline::DEFAULT_QUALITY_LATENT)]
        quality: String,
    },
    /// Score respondents with the weights of a fitted model.
    Score {
        #[command(flatten)]
        survey: SurveyArgs,
        /// Output of the `sem` subcommand.
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long, default_value = pipeline::DEFAULT_QUALITY_LATENT)]
        quality: String,
        /// Also write per-respondent scores as CSV.
        #[arg(long)]
        scores_csv: Option<PathBuf>,
    },
    /// Item and latent entropy plus delay strata.
    Entropy {
        #[command(flatten)]
        survey: SurveyArgs,
        /// Model spec JSON defining the groups; catalog hints when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Groups left out of the stratum scores.
        #[arg(long, default_values_t = [scoring::DEFAULT_STRATUM_EXCLUSION.to_string()])]
        exclude: Vec<String>,
    },
    /// Pairwise-comparison weights and consistency ratios.
    Ahp {
        /// Judgment CSV.
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long, default_value_t = ahp::CR_GATE)]
        cr_gate: f64,
        #[arg(long)]
        exclude_inconsistent: bool,
    },
    /// Ordered probit of sati_after on item ratings with backward elimination.
    Probit {
        #[command(flatten)]
        survey: SurveyArgs,
        /// Predictor items (default: every catalog item).
        #[arg(long, value_delimiter = ',')]
        items: Vec<usize>,
        #[arg(long, default_value_t = oprobit::DEFAULT_ALPHA)]
        alpha: f64,
        /// Drop every insignificant predictor at once instead of one at a time.
        #[arg(long)]
        single_shot: bool,
        /// Also write the simplified questionnaire as CSV.
        #[arg(long)]
        questionnaire_csv: Option<PathBuf>,
    },
    /// Compare model-derived and expert weights.
    Bias {
        /// `sem` output, or a JSON object of factor weights.
        #[arg(long)]
        ow: PathBuf,
        /// `ahp` output, or a JSON object of factor weights.
        #[arg(long)]
        sw: PathBuf,
        #[arg(long, default_value = pipeline::DEFAULT_QUALITY_LATENT)]
        quality: String,
    },
    /// Generate synthetic data with known structure.
    Synth {
        #[arg(long, value_enum, conflicts_with = "spec")]
        kind: Option<Kind>,
        /// Generator spec JSON (overrides --kind).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 750)]
        n: usize,
        /// Judgment noise for `--kind ahp`.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Write generator metadata JSON here.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
    /// Write a JSON Schema for every input and output document.
    Schemas {
        #[arg(long, default_value = "schemas")]
        dir: PathBuf,
    },
    /// Run the whole pipeline and write report.json and report.md.
    Report {
        /// Pipeline config JSON. Input flags are ignored; --out-dir applies
        /// only when the config names no output directory.
        #[arg(long, conflicts_with_all = ["input", "render"])]
        config: Option<PathBuf>,
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        judgments: Option<PathBuf>,
        #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        single_shot: bool,
        #[arg(long, env = "SERVQUAL_OUT_DIR", default_value = "servqual-out")]
        out_dir: PathBuf,
        /// Re-render the Markdown summary of an existing report.json.
        #[arg(long, conflicts_with = "input")]
        render: Option<PathBuf>,
    },
}

/// Outcome of a subcommand: JSON to emit and whether a gate failed.
struct Outcome {
    json: Value,
    gate_failed: bool,
}

impl Outcome {
    fn ok(v: impl serde::Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            json: serde_json::to_value(v)?,
            gate_failed: false,
        })
    }
}

fn emit(json: &Value, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(json)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| servqual::Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(servqual::Error::from)?)
}

fn load_model(path: &Path) -> anyhow::Result<MeasurementModel> {
    Ok(MeasurementModel::load(path)?)
}

/// A fitted estimate from `sem` output (full section or bare estimate).
fn estimate_from(v: Value) -> anyhow::Result<SemEstimate> {
    let inner = v.get("estimate").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner).map_err(servqual::Error::from)?)
}

fn objective_map(v: Value, quality: &str) -> anyhow::Result<BTreeMap<String, f64>> {
    if v.get("estimate").is_some() || v.get("params").is_some() {
        let w = pipeline::objective_weights(&estimate_from(v)?, quality)?;
        return Ok(w.names.into_iter().zip(w.weights).collect());
    }
    weight_map(v)
}

fn weight_map(v: Value) -> anyhow::Result<BTreeMap<String, f64>> {
    Ok(serde_json::from_value(v).map_err(servqual::Error::from)?)
}

fn subjective_weights(v: Value) -> anyhow::Result<WeightVector> {
    if let Some(global) = v.get("global") {
        return Ok(serde_json::from_value(global.clone()).map_err(servqual::Error::from)?);
    }
    let map = weight_map(v)?;
    let (names, weights): (Vec<_>, Vec<_>) = map.into_iter().unzip();
    Ok(WeightVector::new(names, weights)?)
}

fn groups_from_catalog(catalog: &VariableCatalog) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for item in catalog.items() {
        let Some(h) = &item.latent_hint else { continue };
        match groups.iter_mut().find(|(n, _)| n == h) {
            Some((_, v)) => v.push(item.index),
            None => groups.push((h.clone(), vec![item.index])),
        }
    }
    groups
}

fn default_items(catalog: &VariableCatalog, items: &[usize]) -> Vec<usize> {
    if items.is_empty() {
        (1..=catalog.len()).collect()
    } else {
        items.to_vec()
    }
}

fn run(cli: &Cli) -> anyhow::Result<Option<Outcome>> {
    let outcome = match &cli.command {
        Command::Validate(s) => Outcome::ok(s.load()?.summary())?,
        Command::Describe(s) => Outcome::ok(dataset::describe(&s.dataset()?)?)?,
        Command::Reliability { survey, items } => {
            let d = survey.dataset()?;
            let items = default_items(&d.catalog, items);
            let r = psychometrics::adequacy(&d.matrix(&items).data)?;
            let failed = !(r.alpha_pass && r.kmo_pass && r.bartlett_pass);
            Outcome {
                json: serde_json::to_value(&r)?,
                gate_failed: failed,
            }
        }
        Command::Efa {
            survey,
            loading,
            cross_margin,
        } => {
            let th = Thresholds {
                loading: *loading,
                cross_margin: *cross_margin,
                ..Thresholds::default()
            };
            th.validate()?;
            let d = survey.dataset()?;
            let items: Vec<usize> = (1..=d.catalog.len()).collect();
            let m = d.matrix(&items);
            let r = numeric::correlation(&m.data)?;
            let rotated = efa::rotate_varimax(&efa::extract_pca(&r, &m.items)?);
            let opts = efa::PruneOptions {
                threshold: *loading,
                cross_margin: *cross_margin,
            };
            let assignment = efa::prune(&rotated, &opts, Some(&m.data));
            let (names, mismatches) = efa::name_factors(&assignment, &d.catalog);
            Outcome::ok(pipeline::EfaSection {
                n_respondents: m.data.nrows(),
                rotated,
                assignment,
                factor_names: names,
                hint_mismatches: mismatches,
            })?
        }
        Command::Sem { survey, model, quality } => {
            let d = survey.dataset()?;
            let (model, source) = match model {
                Some(p) => (load_model(p)?, pipeline::ModelSource::File),
                None => {
                    let items: Vec<usize> = (1..=d.catalog.len()).collect();
                    let m = d.matrix(&items);
                    let r = numeric::correlation(&m.data)?;
                    let rotated = efa::rotate_varimax(&efa::extract_pca(&r, &m.items)?);
                    let a = efa::prune(&rotated, &efa::PruneOptions::default(), None);
                    let (names, _) = efa::name_factors(&a, &d.catalog);
                    let (spec, warnings) = pipeline::spec_from_assignment(&a, &names, &d.catalog, quality);
                    for w in warnings {
                        eprintln!("warning: {w}");
                    }
                    (
                        MeasurementModel::from_spec(&spec)?,
                        pipeline::ModelSource::FactorAnalysis,
                    )
                }
            };
            let estimate = sem::fit_dataset(&model, &d, &FitOptions::default())?;
            for w in &estimate.warnings {
                eprintln!("warning: {w}");
            }
            let fit = sem::fit_indices(&estimate)?;
            let validity = sem::construct_validity(&estimate).ok();
            let failed = !fit.all_pass();
            Outcome {
                json: serde_json::to_value(pipeline::SemSection {
                    source,
                    estimate,
                    fit,
                    validity,
                })?,
                gate_failed: failed,
            }
        }
        Command::Score {
            survey,
            estimate,
            quality,
            scores_csv,
        } => {
            let d = survey.dataset()?;
            let est = estimate_from(read_json(estimate)?)?;
            let w = ScoreWeights::from_estimate(&est, quality)?;
            for x in &w.warnings {
                eprintln!("warning: {x}");
            }
            let report = scoring::validation_error(&d, &w)?;
            if let Some(p) = scores_csv {
                let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                scoring::write_scores_csv(&report.scores, w.latents.len(), f)?;
            }
            Outcome::ok(report)?
        }
        Command::Entropy { survey, model, exclude } => {
            let d = survey.dataset()?;
            let groups = match model {
                Some(p) => {
                    let m = load_model(p)?;
                    m.spec()
                        .latents
                        .into_iter()
                        .map(|l| (l.name, l.indicators))
                        .filter(|(_, g)| g.iter().all(|&i| i >= 1 && i <= d.catalog.len()))
                        .collect()
                }
                None => groups_from_catalog(&d.catalog),
            };
            let latents = scoring::entropy_report(&d, &groups, &[])?;
            let strata = scoring::delay_strata(&d, &groups, exclude).ok();
            Outcome::ok(pipeline::EntropySection {
                latents,
                sati_after: scoring::item_entropy(&d, d.catalog.sati_after_index()).ok(),
                strata,
            })?
        }
        Command::Ahp {
            judgments,
            cr_gate,
            exclude_inconsistent,
        } => {
            let h = Hierarchy::reference();
            let js = ahp::load_judgments(judgments, &h)?;
            let report = ahp::analyze(&js, &h, *cr_gate, *exclude_inconsistent)?;
            let failed = std::iter::once(&report.criteria)
                .chain(&report.leaves)
                .any(|l| !l.consistency.pass);
            Outcome {
                json: serde_json::to_value(&report)?,
                gate_failed: failed,
            }
        }
        Command::Probit {
            survey,
            items,
            alpha,
            single_shot,
            questionnaire_csv,
        } => {
            let d = survey.dataset()?;
            let items = default_items(&d.catalog, items);
            let mut cols = items.clone();
            cols.push(d.catalog.sati_after_index());
            let m = d.matrix(&cols);
            let k = items.len();
            let x = m.data.columns(0, k).into_owned();
            let raw: Vec<u8> = m.data.column(k).iter().map(|v| *v as u8).collect();
            let (y, map) = pipeline::collapse_categories(&raw);
            if map.len() < 5 {
                eprintln!(
                    "warning: sati_after uses {} of 5 categories; unobserved ones were collapsed",
                    map.len()
                );
            }
            let names: Vec<String> = items.iter().map(|&i| d.catalog.label(i)).collect();
            let mode = if *single_shot {
                Elimination::SingleShot
            } else {
                Elimination::Stepwise
            };
            let result =
                oprobit::backward_eliminate(&x, &y, &names, map.len(), *alpha, mode, &ProbitOptions::default())?;
            let survivors: Vec<usize> = items
                .iter()
                .zip(&names)
                .filter(|(_, n)| result.survivors.contains(n))
                .map(|(&i, _)| i)
                .collect();
            let questionnaire = SimplifiedQuestionnaire::build(&survivors, &d.catalog, |_| None);
            if let Some(p) = questionnaire_csv {
                let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                questionnaire.write_csv(f)?;
            }
            Outcome::ok(pipeline::ProbitSection {
                outcome: "sati_after".into(),
                category_map: map,
                elimination: result,
                questionnaire,
            })?
        }
        Command::Bias { ow, sw, quality } => {
            let ow = objective_map(read_json(ow)?, quality)?;
            let sw = subjective_weights(read_json(sw)?)?;
            Outcome::ok(ahp::bias_report(&ow, &sw, &Hierarchy::reference())?)?
        }
        Command::Synth {
            kind,
            spec,
            seed,
            n,
            noise,
            metadata,
        } => {
            let spec = match (spec, kind) {
                (Some(p), _) => synth::GeneratorSpec::load(p)?,
                (None, Some(Kind::Sem)) | (None, None) => {
                    synth::GeneratorSpec::Sem(synth::reference_fixture(*n, *seed))
                }
                (None, Some(Kind::Ahp)) => synth::GeneratorSpec::Ahp(synth::reference_ahp(*n, *seed, *noise)),
                (None, Some(Kind::Probit)) => synth::GeneratorSpec::Probit(synth::ProbitGenerator {
                    n: *n,
                    seed: *seed,
                    true_parameters: synth::ProbitTruth {
                        beta: vec![0.8, -0.5, 0.0],
                        kappa: vec![-1.0, 0.0, 1.0],
                    },
                }),
            };
            write_synthetic(&spec, cli.out.as_deref(), metadata.as_deref())?;
            return Ok(None);
        }
        Command::Schemas { dir } => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (stem, schema) in servqual::schema::all() {
                let p = dir.join(format!("{stem}.schema.json"));
                std::fs::write(&p, servqual::schema::render(&schema))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            return Ok(None);
        }
        Command::Report {
            config,
            input,
            catalog,
            model,
            judgments,
            seed,
            n_train,
            single_shot,
            out_dir,
            render,
        } => {
            if let Some(p) = render {
                let text = std::fs::read_to_string(p).map_err(|e| servqual::Error::Io {
                    path: p.display().to_string(),
                    source: e,
                })?;
                let report = pipeline::EvaluationReport::from_json(&text)?;
                let md = pipeline::render_markdown(&report);
                match &cli.out {
                    Some(o) => std::fs::write(o, md)?,
                    None => print!("{md}"),
                }
                return Ok(None);
            }
            let cfg = match (config, input) {
                (Some(c), _) => {
                    let mut cfg = PipelineConfig::load(c)?;
                    if cfg.out_dir.as_os_str().is_empty() {
                        cfg.out_dir = out_dir.clone();
                    }
                    cfg
                }
                (None, Some(i)) => PipelineConfig {
                    catalog: catalog.clone(),
                    model_spec: model.clone(),
                    judgments: judgments.clone(),
                    seed: *seed,
                    n_train: *n_train,
                    elimination: if *single_shot {
                        Elimination::SingleShot
                    } else {
                        Elimination::Stepwise
                    },
                    ..PipelineConfig::new(i, out_dir)
                },
                (None, None) => bail!(servqual::Error::InvalidInput("report needs --input or --config".into())),
            };
            let report = pipeline::run_pipeline(&cfg)?;
            let (json_path, md_path) = pipeline::write_report(&report, &cfg.out_dir)?;
            eprintln!("wrote {} and {}", json_path.display(), md_path.display());
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let failed = report.failed_gates();
            for g in &failed {
                eprintln!("gate failed: {} {} (value {:?})", g.stage, g.gate, g.value);
            }
            let gate_failed = !failed.is_empty();
            return Ok(Some(Outcome {
                json: Value::Null,
                gate_failed,
            }));
        }
    };
    emit(&outcome.json, cli.out.as_deref())?;
    Ok(Some(outcome))
}

fn write_synthetic(spec: &synth::GeneratorSpec, out: Option<&Path>, metadata: Option<&Path>) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    let meta = match spec {
        synth::GeneratorSpec::Sem(g) => {
            let s = synth::gen_sem_survey(g)?;
            s.dataset.write_csv(&mut buf)?;
            s.metadata
        }
        synth::GeneratorSpec::Ahp(g) => {
            let (_, rows) = synth::gen_hierarchy_judgments(g)?;
            ahp::write_judgments_csv(&rows, &mut buf)?;
            synth::GeneratorMetadata {
                generator: synth::GENERATOR.into(),
                seed: g.seed,
                n: g.n,
                kind: "ahp".into(),
            }
        }
        synth::GeneratorSpec::Probit(g) => {
            let t = &g.true_parameters;
            let (x, y) = synth::gen_probit(&t.beta, &t.kappa, g.n, g.seed)?;
            let mut w = String::new();
            let mut header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
            header.push("y".into());
            w.push_str(&header.join(","));
            w.push('\n');
            for i in 0..x.nrows() {
                let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
                w.push_str(&row.join(","));
                w.push_str(&format!(",{}\n", y[i]));
            }
            buf.extend_from_slice(w.as_bytes());
            synth::GeneratorMetadata {
                generator: synth::GENERATOR.into(),
                seed: g.seed,
                n: g.n,
                kind: "probit".into(),
            }
        }
    };
    match out {
        Some(p) => std::fs::write(p, &buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    let meta = serde_json::to_string_pretty(&meta)? + "\n";
    match metadata {
        Some(p) => std::fs::write(p, meta)?,
        None => eprint!("{meta}"),
    }
    Ok(())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<servqual::Error>() {
        Some(e) if !e.is_input_error() => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(Some(o)) if cli.strict && o.gate_failed => ExitCode::from(EXIT_GATE),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
