//! Customer survey ingestion, the item catalog, descriptive statistics and
//! the seeded train/holdout split.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

/// Bounds of the normality gate applied to skewness and excess kurtosis.
pub const NORMALITY_BOUND: f64 = 1.5;

const DEMOGRAPHIC_COLUMNS: [&str; 7] = [
    "id",
    "age_band",
    "gender",
    "experience_band",
    "vessel_type",
    "dwt_band",
    "delay_hours",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Frequency,
    Subjective,
    Satisfaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CatalogItem {
    pub index: usize,
    pub abbreviation: String,
    pub kind: ItemKind,
    #[serde(default)]
    pub latent_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// The questionnaire's observed variables, indexed contiguously from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct VariableCatalog {
    items: Vec<CatalogItem>,
}

impl VariableCatalog {
    pub fn new(mut items: Vec<CatalogItem>) -> Result<Self> {
        items.sort_by_key(|it| it.index);
        for (pos, item) in items.iter().enumerate() {
            if item.index != pos + 1 {
                return Err(Error::InvalidInput(format!(
                    "catalog indices must be unique and contiguous from 1 (found {} at position {})",
                    item.index,
                    pos + 1
                )));
            }
        }
        if items.is_empty() {
            return Err(Error::InvalidInput("catalog is empty".into()));
        }
        Ok(Self { items })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let items: Vec<CatalogItem> = serde_json::from_str(text)?;
        Self::new(items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.items).expect("catalog serializes")
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&CatalogItem> {
        index.checked_sub(1).and_then(|i| self.items.get(i))
    }

    /// Column index used for the overall rating asked before the item block.
    pub fn sati_before_index(&self) -> usize {
        0
    }

    /// Column index used for the overall rating asked after the item block.
    pub fn sati_after_index(&self) -> usize {
        self.items.len() + 1
    }

    /// Short label for any column, including the two overall ratings.
    pub fn label(&self, index: usize) -> String {
        if index == 0 {
            "sati_before".into()
        } else if index == self.sati_after_index() {
            "sati_after".into()
        } else {
            self.get(index)
                .map(|it| it.abbreviation.clone())
                .unwrap_or_else(|| format!("q{index}"))
        }
    }

    /// The 32-item lock-service questionnaire.
    ///
    /// Items 4, 27 and 28 have no published abbreviation; they carry
    /// positional placeholders. Latent hints follow the seven a-priori
    /// attribute groups.
    pub fn reference() -> Self {
        use ItemKind::*;
        const SAFE: &str = "Safe & security";
        const TIME: &str = "Time & convenience";
        const REG: &str = "Lockage regulation";
        const FAC: &str = "Supporting facilities";
        const COMF: &str = "Comfortable conditions";
        const PROF: &str = "Service professional";
        const STAFF: &str = "Staff skills";
        let rows: [(&str, &str, Option<&str>); 32] = [
            ("wea_deal", SAFE, None),
            ("acc_deal", SAFE, Some("Numbers of No Service due to the accidents.")),
            ("inc_deal", SAFE, None),
            ("item_04", TIME, None),
            ("wait_time", TIME, Some("Satisfaction with the vessel's waiting time.")),
            ("oprt_eff", TIME, None),
            ("waitime_change", TIME, Some("Is the waiting time short than before?")),
            (
                "lock_wktime",
                TIME,
                Some("Satisfaction with the lock's working duration per day."),
            ),
            ("lock_cnvnt", TIME, None),
            (
                "cong_deal",
                TIME,
                Some("Satisfaction with dealing with the congestion."),
            ),
            ("cmprhn_regu", REG, None),
            ("travel_info", REG, None),
            ("info_pub", REG, None),
            (
                "auto_intlgnt",
                REG,
                Some("Satisfaction with the automatic and Lockage regulation."),
            ),
            ("waste_dispo", FAC, Some("Convenient for waste disposal?")),
            ("sewage_dispo", FAC, Some("Convenient for sewage disposal?")),
            ("clear_sig", FAC, None),
            ("lay_manag", FAC, None),
            ("light_mark", FAC, None),
            ("add_cnvnt", FAC, Some("Convenient for adding oil and water?")),
            ("support_ser", FAC, None),
            ("env_cln", COMF, None),
            (
                "eco_env",
                COMF,
                Some("Satisfaction with the ecological environment in lock."),
            ),
            ("cmplt_sign", COMF, None),
            ("ser_att", PROF, None),
            ("uni_drs", PROF, None),
            ("item_27", PROF, None),
            ("item_28", PROF, None),
            ("policy_imple", STAFF, None),
            ("policy_anno", STAFF, None),
            (
                "cmpln_handle",
                STAFF,
                Some("Satisfaction with staff's skill of complaint-handling."),
            ),
            ("solv_prob", STAFF, None),
        ];
        let subjective = [7, 11, 15, 16, 17, 20, 22, 24, 26, 27, 29, 30];
        let items = rows
            .iter()
            .enumerate()
            .map(|(i, (abbr, hint, desc))| {
                let index = i + 1;
                let kind = if index <= 3 {
                    Frequency
                } else if subjective.contains(&index) {
                    Subjective
                } else {
                    Satisfaction
                };
                CatalogItem {
                    index,
                    abbreviation: (*abbr).to_string(),
                    kind,
                    latent_hint: Some((*hint).to_string()),
                    description: desc.map(str::to_string),
                }
            })
            .collect();
        Self::new(items).expect("reference catalog is contiguous")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondentRecord {
    pub id: String,
    pub age_band: String,
    pub gender: String,
    pub experience_band: String,
    pub vessel_type: String,
    pub dwt_band: String,
    pub delay_hours: Option<f64>,
    /// Item index to Likert rating; absent keys are missing answers.
    pub ratings: BTreeMap<usize, u8>,
    pub sati_before: Option<u8>,
    pub sati_after: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    pub respondents: Vec<RespondentRecord>,
    pub catalog: VariableCatalog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RejectedRow {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedSurvey {
    pub dataset: SurveyDataset,
    pub rejected: Vec<RejectedRow>,
}

impl LoadedSurvey {
    /// Share of submitted rows that passed validation.
    pub fn valid_rate(&self) -> f64 {
        let valid = self.dataset.len();
        let total = valid + self.rejected.len();
        if total == 0 {
            0.0
        } else {
            valid as f64 / total as f64
        }
    }

    pub fn summary(&self) -> ValidationSummary {
        ValidationSummary {
            n_valid: self.dataset.len(),
            n_rejected: self.rejected.len(),
            valid_rate: self.valid_rate(),
            rejected: self.rejected.clone(),
        }
    }
}

/// Outcome of checking a survey file against its catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationSummary {
    pub n_valid: usize,
    pub n_rejected: usize,
    pub valid_rate: f64,
    pub rejected: Vec<RejectedRow>,
}

/// Respondent-by-item matrix after listwise deletion.
#[derive(Debug, Clone)]
pub struct ItemMatrix {
    pub data: DMatrix<f64>,
    pub items: Vec<usize>,
    pub respondent_ids: Vec<String>,
}

impl SurveyDataset {
    pub fn new(respondents: Vec<RespondentRecord>, catalog: VariableCatalog) -> Self {
        Self { respondents, catalog }
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    /// Rating in any column: 0 is sati_before, `p + 1` is sati_after.
    pub fn value(&self, r: &RespondentRecord, item: usize) -> Option<u8> {
        if item == 0 {
            r.sati_before
        } else if item == self.catalog.sati_after_index() {
            r.sati_after
        } else {
            r.ratings.get(&item).copied()
        }
    }

    /// Columns q1..qp.
    pub fn item_indices(&self) -> Vec<usize> {
        (1..=self.catalog.len()).collect()
    }

    /// Builds the rating matrix for `items`, dropping every respondent with
    /// a missing answer on any of them.
    pub fn matrix(&self, items: &[usize]) -> ItemMatrix {
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for r in &self.respondents {
            let vals: Option<Vec<f64>> = items.iter().map(|&i| self.value(r, i).map(f64::from)).collect();
            if let Some(v) = vals {
                rows.extend(v);
                ids.push(r.id.clone());
            }
        }
        ItemMatrix {
            data: DMatrix::from_row_slice(ids.len(), items.len(), &rows),
            items: items.to_vec(),
            respondent_ids: ids,
        }
    }

    pub fn subset(&self, keep: impl Fn(&RespondentRecord) -> bool) -> SurveyDataset {
        SurveyDataset {
            respondents: self.respondents.iter().filter(|r| keep(r)).cloned().collect(),
            catalog: self.catalog.clone(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols: Vec<String> = DEMOGRAPHIC_COLUMNS.iter().map(|s| s.to_string()).collect();
        cols.extend((0..=self.catalog.sati_after_index()).map(|i| format!("q{i}")));
        cols
    }

    /// Writes the survey CSV layout; `parse_survey` reads it back exactly.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(self.header()).map_err(csv_err)?;
        for r in &self.respondents {
            let mut rec = vec![
                r.id.clone(),
                r.age_band.clone(),
                r.gender.clone(),
                r.experience_band.clone(),
                r.vessel_type.clone(),
                r.dwt_band.clone(),
                r.delay_hours.map(|d| d.to_string()).unwrap_or_default(),
            ];
            for i in 0..=self.catalog.sati_after_index() {
                rec.push(self.value(r, i).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn expected_header(catalog: &VariableCatalog) -> Vec<String> {
    SurveyDataset::new(Vec::new(), catalog.clone()).header()
}

fn parse_rating(cell: &str) -> std::result::Result<Option<u8>, &'static str> {
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<i64>() {
        Ok(v) if (LIKERT_MIN as i64..=LIKERT_MAX as i64).contains(&v) => Ok(Some(v as u8)),
        Ok(_) => Err("rating out of range"),
        Err(_) => Err("rating not an integer"),
    }
}

/// Parses survey CSV bytes against `catalog`.
///
/// A bad header is fatal. Rows that violate a record invariant are skipped
/// and reported in [`LoadedSurvey::rejected`].
pub fn parse_survey(input: &[u8], catalog: &VariableCatalog) -> Result<LoadedSurvey> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = expected_header(catalog);
    if header != expected {
        let detail = header
            .iter()
            .zip(&expected)
            .position(|(a, b)| a != b)
            .map(|i| format!("column {} is `{}`, expected `{}`", i + 1, header[i], expected[i]))
            .unwrap_or_else(|| format!("expected {} columns, found {}", expected.len(), header.len()));
        return Err(Error::MalformedHeader(detail));
    }

    let after = catalog.sati_after_index();
    let mut seen = HashSet::new();
    let mut respondents = Vec::new();
    let mut rejected = Vec::new();
    for (row_no, rec) in reader.records().enumerate() {
        let line = row_no + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow {
                    line,
                    id: String::new(),
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let id = rec.get(0).unwrap_or("").to_string();
        let mut reject = |reason: &str| {
            rejected.push(RejectedRow {
                line,
                id: id.clone(),
                reason: reason.to_string(),
            })
        };
        if rec.len() != expected.len() {
            reject("wrong field count");
            continue;
        }
        if id.is_empty() {
            reject("missing id");
            continue;
        }
        let delay_hours = match &rec[6] {
            "" => None,
            s => match s.parse::<f64>() {
                Ok(d) if d.is_finite() && d >= 0.0 => Some(d),
                Ok(d) if d < 0.0 => {
                    reject("negative delay");
                    continue;
                }
                _ => {
                    reject("delay not a number");
                    continue;
                }
            },
        };
        let mut ratings = BTreeMap::new();
        let mut sati_before = None;
        let mut sati_after = None;
        let mut bad = None;
        for col in 0..=after {
            match parse_rating(&rec[7 + col]) {
                Ok(v) => {
                    if col == 0 {
                        sati_before = v;
                    } else if col == after {
                        sati_after = v;
                    } else if let Some(v) = v {
                        ratings.insert(col, v);
                    }
                }
                Err(reason) => {
                    bad = Some(reason);
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            reject(reason);
            continue;
        }
        if !seen.insert(id.clone()) {
            reject("duplicate respondent id");
            continue;
        }
        respondents.push(RespondentRecord {
            id: id.clone(),
            age_band: rec[1].to_string(),
            gender: rec[2].to_string(),
            experience_band: rec[3].to_string(),
            vessel_type: rec[4].to_string(),
            dwt_band: rec[5].to_string(),
            delay_hours,
            ratings,
            sati_before,
            sati_after,
        });
    }
    Ok(LoadedSurvey {
        dataset: SurveyDataset::new(respondents, catalog.clone()),
        rejected,
    })
}

pub fn load_survey(path: impl AsRef<Path>, catalog: &VariableCatalog) -> Result<LoadedSurvey> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_survey(&bytes, catalog)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ItemStats {
    pub item: usize,
    pub label: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// `None` when the item has fewer than two distinct observed values.
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub normality: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DescriptiveReport {
    pub n_respondents: usize,
    /// Q0, Q1..Qp and the closing overall rating, in column order.
    pub items: Vec<ItemStats>,
    pub sati_after_mean: Option<f64>,
    pub non_normal_items: Vec<usize>,
}

/// Mean, sample sd, moment skewness and excess kurtosis of a column.
pub fn column_stats(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = if values.len() >= 2 {
        Some((m2 / (n - 1.0)).sqrt())
    } else {
        None
    };
    let distinct = values.iter().any(|v| *v != values[0]);
    if !distinct {
        return (Some(mean), std, None, None);
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    (Some(mean), std, Some(skew), Some(kurt))
}

pub fn describe(d: &SurveyDataset) -> Result<DescriptiveReport> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let after = d.catalog.sati_after_index();
    let mut items = Vec::with_capacity(after + 1);
    let mut sati_after_mean = None;
    for item in 0..=after {
        let values: Vec<f64> = d
            .respondents
            .iter()
            .filter_map(|r| d.value(r, item).map(f64::from))
            .collect();
        let (mean, std, skewness, excess_kurtosis) = column_stats(&values);
        let normality = match (skewness, excess_kurtosis) {
            (Some(s), Some(k)) => Some(s.abs() <= NORMALITY_BOUND && k.abs() <= NORMALITY_BOUND),
            _ => None,
        };
        if item == after {
            sati_after_mean = mean;
        }
        items.push(ItemStats {
            item,
            label: d.catalog.label(item),
            n: values.len(),
            mean,
            std,
            skewness,
            excess_kurtosis,
            normality,
        });
    }
    let non_normal_items = items
        .iter()
        .filter(|s| s.normality == Some(false))
        .map(|s| s.item)
        .collect();
    Ok(DescriptiveReport {
        n_respondents: d.len(),
        items,
        sati_after_mean,
        non_normal_items,
    })
}

/// Seeded random partition into `n_train` and `N - n_train` respondents.
///
/// Ids are sorted before shuffling so the result depends only on the set of
/// ids and the seed. Each half keeps the input order.
pub fn split(d: &SurveyDataset, n_train: usize, seed: u64) -> Result<(SurveyDataset, SurveyDataset)> {
    let n = d.len();
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidInput(format!(
            "n_train must satisfy 0 < n_train < {n}, got {n_train}"
        )));
    }
    let mut ids: Vec<&str> = d.respondents.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train_ids: HashSet<&str> = ids[..n_train].iter().copied().collect();
    let train = d.subset(|r| train_ids.contains(r.id.as_str()));
    let holdout = d.subset(|r| !train_ids.contains(r.id.as_str()));
    Ok((train, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_catalog(p: usize) -> VariableCatalog {
        VariableCatalog::new(
            (1..=p)
                .map(|i| CatalogItem {
                    index: i,
                    abbreviation: format!("v{i}"),
                    kind: ItemKind::Satisfaction,
                    latent_hint: None,
                    description: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn csv_for(rows: &[&str], p: usize) -> String {
        let cat = small_catalog(p);
        let mut s = expected_header(&cat).join(",");
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn reference_catalog_shape() {
        let c = VariableCatalog::reference();
        assert_eq!(c.len(), 32);
        assert_eq!(c.sati_after_index(), 33);
        assert_eq!(c.get(9).unwrap().abbreviation, "lock_cnvnt");
        assert_eq!(c.get(2).unwrap().kind, ItemKind::Frequency);
        assert_eq!(c.get(15).unwrap().kind, ItemKind::Subjective);
        assert_eq!(c.get(5).unwrap().kind, ItemKind::Satisfaction);
        let back = VariableCatalog::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn catalog_rejects_gaps() {
        let json = r#"[{"index":1,"abbreviation":"a","kind":"frequency"},
                       {"index":3,"abbreviation":"b","kind":"satisfaction"}]"#;
        assert!(VariableCatalog::from_json(json).is_err());
    }

    #[test]
    fn three_well_formed_rows() {
        let text = csv_for(
            &[
                "a,30-40,m,5-10,bulk,<1000,1.5,4,5,3,4",
                "b,40-50,f,>10,oil,<1000,0,3,2,2,3",
                "c,20-30,m,<5,bulk,>1000,12,5,5,5,5",
            ],
            2,
        );
        let loaded = parse_survey(text.as_bytes(), &small_catalog(2)).unwrap();
        assert_eq!(loaded.dataset.len(), 3);
        assert!(loaded.rejected.is_empty());
        let b = &loaded.dataset.respondents[1];
        assert_eq!(b.sati_before, Some(3));
        assert_eq!(b.sati_after, Some(3));
        assert_eq!(b.ratings[&1], 2);
    }

    #[test]
    fn rejects_out_of_range_negative_delay_and_duplicates() {
        let text = csv_for(
            &[
                "a,x,x,x,x,x,1,4,6,3,4",
                "b,x,x,x,x,x,-2,4,4,3,4",
                "c,x,x,x,x,x,1,4,4,3,4",
                "c,x,x,x,x,x,1,4,4,3,4",
                "d,x,x,x,x,x,1,4,4",
            ],
            2,
        );
        let loaded = parse_survey(text.as_bytes(), &small_catalog(2)).unwrap();
        assert_eq!(loaded.dataset.len(), 1);
        let reasons: Vec<_> = loaded.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            vec![
                "rating out of range",
                "negative delay",
                "duplicate respondent id",
                "wrong field count"
            ]
        );
        assert_eq!(loaded.rejected[0].line, 2);
    }

    #[test]
    fn empty_cells_are_missing() {
        let text = csv_for(&["a,x,x,x,x,x,,4,,3,"], 2);
        let loaded = parse_survey(text.as_bytes(), &small_catalog(2)).unwrap();
        let r = &loaded.dataset.respondents[0];
        assert_eq!(r.delay_hours, None);
        assert_eq!(r.sati_after, None);
        assert!(!r.ratings.contains_key(&1));
        assert_eq!(loaded.dataset.matrix(&[1, 2]).data.nrows(), 0);
        assert_eq!(loaded.dataset.matrix(&[2]).data.nrows(), 1);
    }

    #[test]
    fn malformed_header_is_fatal() {
        let text = "id,age,gender\n1,2,3\n";
        assert!(matches!(
            parse_survey(text.as_bytes(), &small_catalog(2)),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn describe_one_to_five() {
        let rows: Vec<String> = (1..=5).map(|v| format!("r{v},x,x,x,x,x,1,3,{v},4,4")).collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let text = csv_for(&refs, 2);
        let d = parse_survey(text.as_bytes(), &small_catalog(2)).unwrap().dataset;
        let rep = describe(&d).unwrap();
        let item1 = &rep.items[1];
        assert_relative_eq!(item1.mean.unwrap(), 3.0);
        assert_relative_eq!(item1.std.unwrap(), 1.581_138_830_084_19, epsilon = 1e-12);
        assert_relative_eq!(item1.skewness.unwrap(), 0.0, epsilon = 1e-12);
        // Uniform 1..5: m4/m2^2 = 6.8/4 = 1.7.
        assert_relative_eq!(item1.excess_kurtosis.unwrap(), -1.3, epsilon = 1e-12);
        assert_eq!(item1.normality, Some(true));
        // Constant item: sd 0, shape undefined.
        let item2 = &rep.items[2];
        assert_eq!(item2.std, Some(0.0));
        assert_eq!(item2.skewness, None);
        assert_eq!(item2.normality, None);
        assert_eq!(rep.sati_after_mean, Some(4.0));
    }

    #[test]
    fn describe_rejects_empty() {
        let d = SurveyDataset::new(vec![], small_catalog(2));
        assert!(matches!(describe(&d), Err(Error::EmptyDataset)));
    }

    fn dataset_with_ids(n: usize) -> SurveyDataset {
        let rows: Vec<String> = (0..n).map(|i| format!("id{i:03},x,x,x,x,x,1,3,3,4,4")).collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        parse_survey(csv_for(&refs, 2).as_bytes(), &small_catalog(2))
            .unwrap()
            .dataset
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let d = dataset_with_ids(750);
        let (train, hold) = split(&d, 450, 11).unwrap();
        assert_eq!((train.len(), hold.len()), (450, 300));
        let mut all: Vec<_> = train
            .respondents
            .iter()
            .chain(&hold.respondents)
            .map(|r| r.id.clone())
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 750);
        let (train2, _) = split(&d, 450, 11).unwrap();
        assert_eq!(train, train2);
        let (train3, _) = split(&d, 450, 12).unwrap();
        assert_ne!(train, train3);
    }

    #[test]
    fn split_bounds() {
        let d = dataset_with_ids(10);
        assert!(split(&d, 10, 1).is_err());
        assert!(split(&d, 0, 1).is_err());
        assert!(split(&d, 9, 1).is_ok());
    }
}
