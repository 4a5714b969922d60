//! Replays the checked-in fuzz corpus through the parser entry points on
//! the stable toolchain.

use std::path::PathBuf;

use servqual::ahp::{self, Hierarchy, Selection};
use servqual::dataset::{parse_survey, VariableCatalog};
use servqual::pipeline::{EvaluationReport, PipelineConfig};
use servqual::sem::MeasurementModel;
use servqual::synth::GeneratorSpec;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn survey_seeds_round_trip() {
    let catalog = VariableCatalog::reference();
    let mut accepted = 0;
    for (name, data) in seeds("survey_csv") {
        if let Ok(loaded) = parse_survey(&data, &catalog) {
            let again = parse_survey(loaded.dataset.to_csv_string().as_bytes(), &catalog).unwrap();
            assert_eq!(again.dataset, loaded.dataset, "{name}");
            assert!(again.rejected.is_empty());
            accepted += loaded.dataset.len();
        }
    }
    assert!(accepted > 0);
}

#[test]
fn judgment_seeds_parse() {
    let h = Hierarchy::reference();
    let parsed: usize = seeds("judgments_csv")
        .iter()
        .filter_map(|(_, d)| ahp::parse_judgments(d, &h).ok())
        .map(|rows| rows.len())
        .sum();
    assert_eq!(parsed, 3);
}

#[test]
fn selection_seeds() {
    let ok: Vec<bool> = seeds("selection")
        .iter()
        .map(|(_, d)| Selection::parse(text(d)).is_ok())
        .collect();
    assert_eq!(ok.iter().filter(|&&b| b).count(), 4);
}

#[test]
fn json_seeds_decode() {
    for (name, d) in seeds("catalog_json") {
        VariableCatalog::from_json(text(&d)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, d) in seeds("model_spec_json") {
        MeasurementModel::from_json(text(&d)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, d) in seeds("generator_spec_json") {
        GeneratorSpec::from_json(text(&d)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, d) in seeds("pipeline_config_json") {
        serde_json::from_slice::<PipelineConfig>(&d).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, d) in seeds("report_json") {
        let r = EvaluationReport::from_json(text(&d)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(EvaluationReport::from_json(&r.to_json()).unwrap(), r);
    }
}
