//! Pairwise-comparison weighting: judgment ingestion, group aggregation,
//! principal-eigenvector weights, consistency ratios, hierarchical
//! composition and the comparison against model-derived weights.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::serde_rows;

/// Admissible judgment intensities.
pub const SCALE: [u8; 5] = [1, 3, 5, 7, 9];
/// Random consistency index by matrix order (1-based).
pub const RANDOM_INDEX: [f64; 10] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];
pub const CR_GATE: f64 = 0.1;
/// Level name used for the comparisons between top-level criteria.
pub const CRITERIA_LEVEL: &str = "criteria";

const RECIPROCITY_TOLERANCE: f64 = 1e-9;
const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct JudgmentMatrix {
    pub labels: Vec<String>,
    #[serde(with = "serde_rows")]
    #[schemars(with = "Vec<Vec<f64>>")]
    pub values: DMatrix<f64>,
}

impl JudgmentMatrix {
    pub fn new(labels: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let n = labels.len();
        if values.nrows() != n || values.ncols() != n || n == 0 {
            return Err(Error::InvalidInput(format!(
                "{}x{} judgment matrix for {n} labels",
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let a = values[(i, j)];
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::InvalidInput(format!("entry ({i},{j}) is not positive")));
                }
                if (a * values[(j, i)] - 1.0).abs() > RECIPROCITY_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i},{j}) and ({j},{i}) are not reciprocal"
                    )));
                }
            }
        }
        Ok(Self { labels, values })
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            values: DMatrix::from_element(n, n, 1.0),
        }
    }

    /// `a_ij = w_i / w_j`.
    pub fn consistent(labels: Vec<String>, w: &[f64]) -> Result<Self> {
        if w.len() != labels.len() || w.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidInput("weights must be positive, one per label".into()));
        }
        let n = w.len();
        Self::new(labels, DMatrix::from_fn(n, n, |i, j| w[i] / w[j]))
    }

    pub fn order(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WeightVector {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    /// 1 is the largest weight; ties go to the lexicographically smaller name.
    pub ranks: Vec<usize>,
}

impl WeightVector {
    /// Normalizes non-negative weights to sum 1 and ranks them.
    pub fn new(names: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if names.len() != weights.len() || names.is_empty() {
            return Err(Error::InvalidInput("one weight per name required".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let ranks = rank_descending(&names, &weights);
        Ok(Self { names, weights, ranks })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.weights[i])
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name).map(|i| self.ranks[i])
    }
}

fn rank_descending(names: &[String], weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then_with(|| names[a].cmp(&names[b])));
    let mut ranks = vec![0; weights.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Consistency {
    pub lambda_max: f64,
    pub ci: f64,
    pub cr: f64,
    pub pass: bool,
}

/// Principal right eigenvector by power iteration, normalized to sum 1,
/// and the Perron root.
pub fn weights_eigen(m: &JudgmentMatrix) -> Result<(WeightVector, f64)> {
    let n = m.order();
    let a = &m.values;
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut converged = false;
    for _ in 0..POWER_MAX_ITER {
        let av = a * &v;
        let norm = av.sum();
        let next = av / norm;
        let delta = (&next - &v).amax();
        v = next;
        if delta < POWER_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: POWER_MAX_ITER,
            gradient: f64::NAN,
        });
    }
    let lambda = (a * &v).sum() / v.sum();
    let w = WeightVector::new(m.labels.clone(), v.iter().copied().collect())?;
    Ok((w, lambda))
}

pub fn random_index(n: usize) -> f64 {
    RANDOM_INDEX
        .get(n.saturating_sub(1))
        .copied()
        .unwrap_or(*RANDOM_INDEX.last().expect("non-empty table"))
}

/// Consistency index and ratio; orders up to 2 are always consistent.
pub fn consistency(m: &JudgmentMatrix, lambda_max: f64, gate: f64) -> Consistency {
    let n = m.order();
    if n <= 2 {
        return Consistency {
            lambda_max,
            ci: 0.0,
            cr: 0.0,
            pass: true,
        };
    }
    let ci = ((lambda_max - n as f64) / (n as f64 - 1.0)).max(0.0);
    let cr = ci / random_index(n);
    Consistency {
        lambda_max,
        ci,
        cr,
        pass: cr < gate,
    }
}

/// Element-wise geometric mean.
pub fn aggregate_geomean(ms: &[JudgmentMatrix]) -> Result<JudgmentMatrix> {
    let first = ms
        .first()
        .ok_or_else(|| Error::InvalidInput("no judgment matrices".into()))?;
    let n = first.order();
    if ms.iter().any(|m| m.labels != first.labels) {
        return Err(Error::InvalidInput("judgment matrices disagree in labels".into()));
    }
    let k = ms.len() as f64;
    let mut values = DMatrix::from_fn(n, n, |i, j| {
        (ms.iter().map(|m| m.values[(i, j)].ln()).sum::<f64>() / k).exp()
    });
    // Exact reciprocity from the upper triangle.
    for i in 0..n {
        values[(i, i)] = 1.0;
        for j in i + 1..n {
            values[(j, i)] = 1.0 / values[(i, j)];
        }
    }
    JudgmentMatrix::new(first.labels.clone(), values)
}

/// Two-level hierarchy: criteria, each with its own leaf factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Hierarchy {
    pub criteria: Vec<String>,
    /// Leaves of each criterion, in `criteria` order.
    pub leaves: Vec<Vec<String>>,
}

impl Hierarchy {
    pub fn new(criteria: Vec<String>, leaves: Vec<Vec<String>>) -> Result<Self> {
        if criteria.len() != leaves.len() || criteria.is_empty() {
            return Err(Error::InvalidInput("one leaf list per criterion required".into()));
        }
        let mut seen = BTreeSet::new();
        for name in criteria.iter().chain(leaves.iter().flatten()) {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("`{name}` appears twice in the hierarchy")));
            }
        }
        if leaves.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("criterion without leaves".into()));
        }
        Ok(Self { criteria, leaves })
    }

    /// Lock operation efficiency, facilities and policy, management and
    /// service, each with two factors.
    pub fn reference() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self::new(
            s(&["WLOE", "WLFP", "WLMS"]),
            vec![
                s(&["Safe & security", "Time & convenience"]),
                s(&["Lockage regulation", "Supporting facilities"]),
                s(&["Comfortable conditions", "Staff skills"]),
            ],
        )
        .expect("reference hierarchy is valid")
    }

    /// Leaves in hierarchy order.
    pub fn factors(&self) -> Vec<String> {
        self.leaves.iter().flatten().cloned().collect()
    }

    fn level_labels(&self, level: &str) -> Option<&[String]> {
        if level.eq_ignore_ascii_case(CRITERIA_LEVEL) {
            return Some(&self.criteria);
        }
        self.criteria
            .iter()
            .position(|c| c == level)
            .map(|i| self.leaves[i].as_slice())
    }
}

/// One cell of the judgment form: `L9..L3`, `E`, `R3..R9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Left(u8),
    Equal,
    Right(u8),
}

impl Selection {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("selection `{s}` is not one of L9..L3, E, R3..R9"));
        if s.eq_ignore_ascii_case("E") {
            return Ok(Selection::Equal);
        }
        let (side, digits) = s.split_at_checked(1).ok_or_else(bad)?;
        let v: u8 = digits.parse().map_err(|_| bad())?;
        if v == 1 {
            return Ok(Selection::Equal);
        }
        if !SCALE.contains(&v) {
            return Err(bad());
        }
        match side {
            "L" | "l" => Ok(Selection::Left(v)),
            "R" | "r" => Ok(Selection::Right(v)),
            _ => Err(bad()),
        }
    }

    /// Entry `a_{left,right}`.
    pub fn value(self) -> f64 {
        match self {
            Selection::Left(v) => f64::from(v),
            Selection::Equal => 1.0,
            Selection::Right(v) => 1.0 / f64::from(v),
        }
    }

    pub fn code(self) -> String {
        match self {
            Selection::Left(v) => format!("L{v}"),
            Selection::Equal => "E".into(),
            Selection::Right(v) => format!("R{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRow {
    pub respondent_id: String,
    pub level: String,
    pub left_factor: String,
    pub right_factor: String,
    pub selection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RespondentJudgments {
    pub respondent_id: String,
    pub criteria: JudgmentMatrix,
    /// One matrix per criterion, in hierarchy order.
    pub leaves: Vec<JudgmentMatrix>,
}

/// `(i, j) -> value` for one matrix of one respondent.
type Cells = BTreeMap<(usize, usize), f64>;

/// Parses judgment CSV text into one set of matrices per respondent.
///
/// Every pair of every level must be compared exactly once per respondent.
pub fn parse_judgments(input: &[u8], h: &Hierarchy) -> Result<Vec<RespondentJudgments>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .clone();
    let expected = ["respondent_id", "level", "left_factor", "right_factor", "selection"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::MalformedHeader(format!(
            "expected `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cells: BTreeMap<String, BTreeMap<String, Cells>> = BTreeMap::new();
    let mut order = Vec::new();
    for (line, rec) in reader.deserialize::<JudgmentRow>().enumerate() {
        let line = line + 2;
        let row = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let labels = h
            .level_labels(&row.level)
            .ok_or_else(|| Error::Parse(format!("line {line}: unknown level `{}`", row.level)))?;
        let find = |name: &str| {
            labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::Parse(format!("line {line}: `{name}` is not in level `{}`", row.level)))
        };
        let (i, j) = (find(&row.left_factor)?, find(&row.right_factor)?);
        if i == j {
            return Err(Error::Parse(format!("line {line}: factor compared with itself")));
        }
        let sel = Selection::parse(&row.selection).map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let (key, value) = if i < j {
            ((i, j), sel.value())
        } else {
            ((j, i), 1.0 / sel.value())
        };
        let level_key = if row.level.eq_ignore_ascii_case(CRITERIA_LEVEL) {
            CRITERIA_LEVEL.to_string()
        } else {
            row.level.clone()
        };
        if !cells.contains_key(&row.respondent_id) {
            order.push(row.respondent_id.clone());
        }
        let slot = cells
            .entry(row.respondent_id.clone())
            .or_default()
            .entry(level_key)
            .or_default();
        if slot.insert(key, value).is_some() {
            return Err(Error::Parse(format!(
                "line {line}: respondent `{}` answered `{}` vs `{}` more than once",
                row.respondent_id, row.left_factor, row.right_factor
            )));
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let build = |id: &str, level: &str, labels: &[String], got: Option<&BTreeMap<(usize, usize), f64>>| {
        let n = labels.len();
        let mut m = DMatrix::from_element(n, n, 1.0);
        for i in 0..n {
            for j in i + 1..n {
                let v = got.and_then(|g| g.get(&(i, j))).ok_or_else(|| {
                    Error::Missing(format!(
                        "respondent `{id}` has no `{}` vs `{}` comparison at level `{level}`",
                        labels[i], labels[j]
                    ))
                })?;
                m[(i, j)] = *v;
                m[(j, i)] = 1.0 / v;
            }
        }
        JudgmentMatrix::new(labels.to_vec(), m)
    };
    order
        .iter()
        .map(|id| {
            let levels = &cells[id];
            let criteria = build(id, CRITERIA_LEVEL, &h.criteria, levels.get(CRITERIA_LEVEL))?;
            let leaves = h
                .criteria
                .iter()
                .zip(&h.leaves)
                .map(|(c, ls)| build(id, c, ls, levels.get(c)))
                .collect::<Result<Vec<_>>>()?;
            Ok(RespondentJudgments {
                respondent_id: id.clone(),
                criteria,
                leaves,
            })
        })
        .collect()
}

pub fn load_judgments(path: impl AsRef<std::path::Path>, h: &Hierarchy) -> Result<Vec<RespondentJudgments>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_judgments(&bytes, h)
}

/// Rows of the judgment CSV for one set of matrices (upper triangle only).
pub fn judgment_rows(j: &RespondentJudgments, h: &Hierarchy) -> Vec<JudgmentRow> {
    let mut rows = Vec::new();
    let levels =
        std::iter::once((CRITERIA_LEVEL.to_string(), &j.criteria)).chain(h.criteria.iter().cloned().zip(&j.leaves));
    for (level, m) in levels {
        for a in 0..m.order() {
            for b in a + 1..m.order() {
                rows.push(JudgmentRow {
                    respondent_id: j.respondent_id.clone(),
                    level: level.clone(),
                    left_factor: m.labels[a].clone(),
                    right_factor: m.labels[b].clone(),
                    selection: selection_for(m.values[(a, b)]).code(),
                });
            }
        }
    }
    rows
}

/// Nearest form cell for a ratio, on the log scale.
pub fn selection_for(ratio: f64) -> Selection {
    let mut best = Selection::Equal;
    let mut dist = ratio.ln().abs();
    for &v in &SCALE[1..] {
        for sel in [Selection::Left(v), Selection::Right(v)] {
            let d = (ratio.ln() - sel.value().ln()).abs();
            if d < dist {
                dist = d;
                best = sel;
            }
        }
    }
    best
}

pub fn write_judgments_csv<W: std::io::Write>(rows: &[JudgmentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("judgments", e))?;
    Ok(())
}

/// Leaf weight = parent criterion weight times local leaf weight.
pub fn global_weights(h: &Hierarchy, criteria_w: &WeightVector, leaf_w: &[WeightVector]) -> Result<WeightVector> {
    if leaf_w.len() != h.criteria.len() {
        return Err(Error::InvalidInput(
            "one leaf weight vector per criterion required".into(),
        ));
    }
    let mut names = Vec::new();
    let mut weights = Vec::new();
    for (c, (leaves, lw)) in h.criteria.iter().zip(h.leaves.iter().zip(leaf_w)) {
        let cw = criteria_w
            .get(c)
            .ok_or_else(|| Error::InvalidInput(format!("no weight for criterion `{c}`")))?;
        for leaf in leaves {
            let w = lw
                .get(leaf)
                .ok_or_else(|| Error::InvalidInput(format!("no local weight for `{leaf}`")))?;
            names.push(leaf.clone());
            weights.push(cw * w);
        }
    }
    WeightVector::new(names, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LevelResult {
    pub level: String,
    pub aggregated: JudgmentMatrix,
    pub weights: WeightVector,
    pub consistency: Consistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RespondentConsistency {
    pub respondent_id: String,
    /// Largest consistency ratio over the respondent's matrices.
    pub max_cr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AhpReport {
    pub respondents: usize,
    pub used: usize,
    pub cr_gate: f64,
    pub per_respondent: Vec<RespondentConsistency>,
    pub criteria: LevelResult,
    pub leaves: Vec<LevelResult>,
    pub global: WeightVector,
    pub warnings: Vec<String>,
}

fn level_result(level: &str, ms: &[JudgmentMatrix], gate: f64) -> Result<LevelResult> {
    let aggregated = aggregate_geomean(ms)?;
    let (weights, lambda) = weights_eigen(&aggregated)?;
    Ok(LevelResult {
        level: level.to_string(),
        consistency: consistency(&aggregated, lambda, gate),
        aggregated,
        weights,
    })
}

/// Group weights from all respondents. Inconsistent respondents are
/// flagged; with `exclude_inconsistent` they are also left out.
pub fn analyze(
    judgments: &[RespondentJudgments],
    h: &Hierarchy,
    cr_gate: f64,
    exclude_inconsistent: bool,
) -> Result<AhpReport> {
    let mut per_respondent = Vec::new();
    for j in judgments {
        let mut max_cr: f64 = 0.0;
        for m in std::iter::once(&j.criteria).chain(&j.leaves) {
            let (_, lambda) = weights_eigen(m)?;
            max_cr = max_cr.max(consistency(m, lambda, cr_gate).cr);
        }
        per_respondent.push(RespondentConsistency {
            respondent_id: j.respondent_id.clone(),
            max_cr,
            pass: max_cr < cr_gate,
        });
    }
    let used: Vec<&RespondentJudgments> = judgments
        .iter()
        .zip(&per_respondent)
        .filter(|(_, c)| c.pass || !exclude_inconsistent)
        .map(|(j, _)| j)
        .collect();
    if used.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut warnings = Vec::new();
    let failing = per_respondent.iter().filter(|c| !c.pass).count();
    if failing > 0 {
        warnings.push(format!(
            "{failing} respondent(s) exceed CR {cr_gate}{}",
            if exclude_inconsistent { " and were excluded" } else { "" }
        ));
    }
    let crit: Vec<JudgmentMatrix> = used.iter().map(|j| j.criteria.clone()).collect();
    let criteria = level_result(CRITERIA_LEVEL, &crit, cr_gate)?;
    let leaves = h
        .criteria
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let ms: Vec<JudgmentMatrix> = used.iter().map(|j| j.leaves[k].clone()).collect();
            level_result(c, &ms, cr_gate)
        })
        .collect::<Result<Vec<_>>>()?;
    for l in std::iter::once(&criteria).chain(&leaves) {
        if !l.consistency.pass {
            warnings.push(format!(
                "aggregated `{}` matrix has CR {:.3}",
                l.level, l.consistency.cr
            ));
        }
    }
    let leaf_w: Vec<WeightVector> = leaves.iter().map(|l| l.weights.clone()).collect();
    let global = global_weights(h, &criteria.weights, &leaf_w)?;
    Ok(AhpReport {
        respondents: judgments.len(),
        used: used.len(),
        cr_gate,
        per_respondent,
        criteria,
        leaves,
        global,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BiasRow {
    pub factor: String,
    pub ow: f64,
    pub ow_rank: usize,
    pub sw: f64,
    pub sw_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Dominance {
    pub criterion: String,
    pub ow_dominant: String,
    pub sw_dominant: String,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct BiasReport {
    pub rows: Vec<BiasRow>,
    pub spearman: f64,
    pub dominance: Vec<Dominance>,
    /// Criteria whose weightier factor differs between the two views.
    pub bias_flags: Vec<String>,
}

/// Spearman correlation of two strict rankings.
pub fn spearman_ranks(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 1.0;
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Compares model-derived weights (normalized to sum 1) with judgment
/// weights, factor by factor in hierarchy order.
pub fn bias_report(ow: &BTreeMap<String, f64>, sw: &WeightVector, h: &Hierarchy) -> Result<BiasReport> {
    let factors = h.factors();
    let ow_names: BTreeSet<&String> = ow.keys().collect();
    let sw_names: BTreeSet<&String> = sw.names.iter().collect();
    let expected: BTreeSet<&String> = factors.iter().collect();
    if ow_names != expected || sw_names != expected {
        return Err(Error::InvalidInput(format!(
            "factor names disagree: hierarchy {:?}, objective {:?}, subjective {:?}",
            expected, ow_names, sw_names
        )));
    }
    let ow_w = WeightVector::new(factors.clone(), factors.iter().map(|f| ow[f]).collect())?;
    let sw_w = WeightVector::new(
        factors.clone(),
        factors.iter().map(|f| sw.get(f).expect("checked")).collect(),
    )?;
    let rows: Vec<BiasRow> = factors
        .iter()
        .enumerate()
        .map(|(i, f)| BiasRow {
            factor: f.clone(),
            ow: ow_w.weights[i],
            ow_rank: ow_w.ranks[i],
            sw: sw_w.weights[i],
            sw_rank: sw_w.ranks[i],
        })
        .collect();
    let mut dominance = Vec::new();
    let mut bias_flags = Vec::new();
    for (c, leaves) in h.criteria.iter().zip(&h.leaves) {
        let top = |w: &WeightVector| {
            leaves
                .iter()
                .min_by_key(|l| w.rank_of(l).expect("leaf present"))
                .expect("non-empty leaves")
                .clone()
        };
        let (o, s) = (top(&ow_w), top(&sw_w));
        let agree = o == s;
        if !agree {
            bias_flags.push(c.clone());
        }
        dominance.push(Dominance {
            criterion: c.clone(),
            ow_dominant: o,
            sw_dominant: s,
            agree,
        });
    }
    Ok(BiasReport {
        spearman: spearman_ranks(&ow_w.ranks, &sw_w.ranks),
        rows,
        dominance,
        bias_flags,
    })
}
