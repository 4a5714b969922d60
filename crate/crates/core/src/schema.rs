//! JSON Schemas for every file the library reads or writes.

use schemars::schema::RootSchema;
use schemars::schema_for;

use crate::{ahp, dataset, pipeline, psychometrics, scoring, sem, synth};

/// `(file stem, schema)` pairs, one per document type.
pub fn all() -> Vec<(&'static str, RootSchema)> {
    vec![
        ("catalog", schema_for!(dataset::VariableCatalog)),
        ("model-spec", schema_for!(sem::ModelSpec)),
        ("generator-spec", schema_for!(synth::GeneratorSpec)),
        ("generator-metadata", schema_for!(synth::GeneratorMetadata)),
        ("pipeline-config", schema_for!(pipeline::PipelineConfig)),
        ("validation", schema_for!(dataset::ValidationSummary)),
        ("describe", schema_for!(dataset::DescriptiveReport)),
        ("reliability", schema_for!(psychometrics::AdequacyReport)),
        ("efa", schema_for!(pipeline::EfaSection)),
        ("sem", schema_for!(pipeline::SemSection)),
        ("score", schema_for!(scoring::ValidationReport)),
        ("entropy", schema_for!(pipeline::EntropySection)),
        ("ahp", schema_for!(ahp::AhpReport)),
        ("probit", schema_for!(pipeline::ProbitSection)),
        ("bias", schema_for!(ahp::BiasReport)),
        ("report", schema_for!(pipeline::EvaluationReport)),
    ]
}

/// Pretty-printed schema text with a trailing newline.
pub fn render(schema: &RootSchema) -> String {
    serde_json::to_string_pretty(schema).expect("schemas serialize") + "\n"
}
