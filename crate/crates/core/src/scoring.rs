//! Weighted satisfaction scores, holdout validation, rating entropy and
//! delay-stratum summaries.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::dataset::SurveyDataset;
use crate::error::{Error, Result};
use crate::sem::{ParamKind, SemEstimate};

/// Signed relative errors inside `[-BAND, BAND]` count as accurate.
pub const ERROR_BAND: f64 = 0.1;

/// Factor whose items are left out of the stratified analysis by default.
pub const DEFAULT_STRATUM_EXCLUSION: &str = "Time & convenience";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LatentWeights {
    pub latent: String,
    /// `(item, standardized loading)` per indicator.
    pub indicators: Vec<(usize, f64)>,
    /// Standardized structural weight linking this latent to overall quality.
    pub structural: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScoreWeights {
    pub latents: Vec<LatentWeights>,
    pub warnings: Vec<String>,
}

impl ScoreWeights {
    pub fn new(latents: Vec<LatentWeights>) -> Self {
        let mut warnings = Vec::new();
        for l in &latents {
            for (item, w) in &l.indicators {
                if !(*w > 0.0) {
                    warnings.push(format!("non-positive weight {w} for item {item} of `{}`", l.latent));
                }
            }
            if !(l.structural > 0.0) {
                warnings.push(format!(
                    "non-positive structural weight {} for `{}`",
                    l.structural, l.latent
                ));
            }
        }
        Self { latents, warnings }
    }

    /// Weights from a fitted model: every latent with a structural path to
    /// or from `quality` contributes its standardized loadings and the
    /// standardized path coefficient.
    pub fn from_estimate(est: &SemEstimate, quality: &str) -> Result<Self> {
        if !est.model.latents.iter().any(|l| l.name == quality) {
            return Err(Error::InvalidInput(format!("model has no latent `{quality}`")));
        }
        let mut latents = Vec::new();
        for p in &est.params {
            let ParamKind::Path { from, to } = &p.kind else {
                continue;
            };
            let other = if to == quality {
                from
            } else if from == quality {
                to
            } else {
                continue;
            };
            let structural = p
                .standardized
                .ok_or_else(|| Error::InvalidInput(format!("no standardized weight for `{other}`")))?;
            let indicators = est.standardized_loadings(other);
            if indicators.is_empty() {
                return Err(Error::InvalidInput(format!("latent `{other}` has no indicators")));
            }
            latents.push(LatentWeights {
                latent: other.clone(),
                indicators,
                structural,
            });
        }
        if latents.is_empty() {
            return Err(Error::InvalidInput(format!("no structural paths involve `{quality}`")));
        }
        Ok(Self::new(latents))
    }

    pub fn names(&self) -> Vec<String> {
        self.latents.iter().map(|l| l.latent.clone()).collect()
    }
}

/// Weighted mean of indicator ratings for one latent.
pub fn lvr(ratings: &BTreeMap<usize, f64>, w: &LatentWeights) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(item, weight) in &w.indicators {
        let r = ratings
            .get(&item)
            .ok_or(Error::Missing(format!("rating of item {item} for `{}`", w.latent)))?;
        num += r * weight;
        den += weight;
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(format!("weights of `{}` sum to zero", w.latent)));
    }
    Ok(num / den)
}

/// Weighted mean of latent ratings, in `w.latents` order.
pub fn sqr(lvrs: &[f64], w: &ScoreWeights) -> Result<f64> {
    if lvrs.len() != w.latents.len() {
        return Err(Error::InvalidInput(format!(
            "{} latent ratings for {} weighted latents",
            lvrs.len(),
            w.latents.len()
        )));
    }
    let den: f64 = w.latents.iter().map(|l| l.structural).sum();
    if den == 0.0 {
        return Err(Error::InvalidInput("structural weights sum to zero".into()));
    }
    let num: f64 = lvrs.iter().zip(&w.latents).map(|(r, l)| r * l.structural).sum();
    Ok(num / den)
}

/// `(observed - predicted) / observed`.
pub fn signed_error(observed: f64, predicted: f64) -> f64 {
    (observed - predicted) / observed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RespondentScore {
    pub id: String,
    pub lvr: Vec<f64>,
    pub sqr: f64,
    pub sati_after: Option<f64>,
    pub signed_error: Option<f64>,
    pub error: Option<f64>,
}

/// Scores every respondent with complete indicator ratings.
///
/// Returns the scores and the number of respondents skipped for missing
/// ratings.
pub fn score_dataset(d: &SurveyDataset, w: &ScoreWeights) -> Result<(Vec<RespondentScore>, usize)> {
    let items: Vec<usize> = w
        .latents
        .iter()
        .flat_map(|l| l.indicators.iter().map(|(i, _)| *i))
        .collect();
    let mut out = Vec::new();
    let mut skipped = 0;
    for r in &d.respondents {
        let ratings: Option<BTreeMap<usize, f64>> = items
            .iter()
            .map(|&i| d.value(r, i).map(|v| (i, f64::from(v))))
            .collect();
        let Some(ratings) = ratings else {
            skipped += 1;
            continue;
        };
        let lvrs = w.latents.iter().map(|l| lvr(&ratings, l)).collect::<Result<Vec<_>>>()?;
        let total = sqr(&lvrs, w)?;
        let sati = r.sati_after.map(f64::from);
        let signed = sati.map(|s| signed_error(s, total));
        out.push(RespondentScore {
            id: r.id.clone(),
            lvr: lvrs,
            sqr: total,
            sati_after: sati,
            signed_error: signed,
            error: signed.map(f64::abs),
        });
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub latents: Vec<String>,
    pub n_scored: usize,
    pub n_skipped: usize,
    pub mean_error: f64,
    pub mean_signed_error: f64,
    /// Share of respondents whose signed error lies in `[-0.1, 0.1]`.
    pub within_band_share: f64,
    pub scores: Vec<RespondentScore>,
}

/// Scores a holdout set and compares the overall rating with sati_after.
pub fn validation_error(holdout: &SurveyDataset, w: &ScoreWeights) -> Result<ValidationReport> {
    let (scores, missing_items) = score_dataset(holdout, w)?;
    let (scores, no_outcome): (Vec<_>, Vec<_>) = scores.into_iter().partition(|s| s.error.is_some());
    if scores.is_empty() {
        return Err(Error::Missing(
            "no holdout respondent has sati_after and complete ratings".into(),
        ));
    }
    let n = scores.len() as f64;
    let mean_error = scores.iter().filter_map(|s| s.error).sum::<f64>() / n;
    let mean_signed_error = scores.iter().filter_map(|s| s.signed_error).sum::<f64>() / n;
    let inside = scores
        .iter()
        .filter_map(|s| s.signed_error)
        .filter(|e| e.abs() <= ERROR_BAND + 1e-12)
        .count();
    Ok(ValidationReport {
        latents: w.names(),
        n_scored: scores.len(),
        n_skipped: missing_items + no_outcome.len(),
        mean_error,
        mean_signed_error,
        within_band_share: inside as f64 / n,
        scores,
    })
}

/// Per-respondent scores as `id,lvr_1..lvr_k,sqr,error`.
pub fn write_scores_csv<W: std::io::Write>(scores: &[RespondentScore], k: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((1..=k).map(|i| format!("lvr_{i}")));
    header.push("sqr".into());
    header.push("error".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in scores {
        let mut row = vec![s.id.clone()];
        row.extend(s.lvr.iter().map(|v| v.to_string()));
        row.push(s.sqr.to_string());
        row.push(s.error.map(|e| e.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("scores", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Normalized Shannon entropy of one item's ratings across respondents.
pub fn entropy(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput("entropy needs at least 2 ratings".into()));
    }
    if values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("entropy needs non-negative ratings".into()));
    }
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("ratings sum to zero".into()));
    }
    let h: f64 = values
        .iter()
        .map(|v| v / total)
        .filter(|p| *p > 0.0)
        .map(|p| p * p.ln())
        .sum();
    Ok((-h / (n as f64).ln()).clamp(0.0, 1.0))
}

pub fn item_entropy(d: &SurveyDataset, item: usize) -> Result<f64> {
    let values: Vec<f64> = d
        .respondents
        .iter()
        .filter_map(|r| d.value(r, item).map(f64::from))
        .collect();
    entropy(&values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ItemEntropy {
    pub item: usize,
    pub latent: String,
    pub entropy: f64,
    pub variability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LatentEntropy {
    pub latent: String,
    pub entropy: f64,
    pub variability: f64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EntropyReport {
    /// How the entropy index runs: per item over respondents.
    pub reading: String,
    pub items: Vec<ItemEntropy>,
    pub latents: Vec<LatentEntropy>,
    pub excluded: Vec<String>,
}

/// Entropy of every item of every group not listed in `exclude`, and the
/// unweighted mean per group.
pub fn entropy_report(d: &SurveyDataset, groups: &[(String, Vec<usize>)], exclude: &[String]) -> Result<EntropyReport> {
    let mut items = Vec::new();
    let mut latents = Vec::new();
    for (name, group) in groups {
        if exclude.contains(name) || group.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for &item in group {
            let e = item_entropy(d, item)?;
            sum += e;
            items.push(ItemEntropy {
                item,
                latent: name.clone(),
                entropy: e,
                variability: 1.0 - e,
            });
        }
        let mean = sum / group.len() as f64;
        latents.push(LatentEntropy {
            latent: name.clone(),
            entropy: mean,
            variability: 1.0 - mean,
            items: group.len(),
        });
    }
    let mut excluded: Vec<String> = exclude
        .iter()
        .filter(|e| groups.iter().any(|(n, _)| n == *e))
        .cloned()
        .collect();
    excluded.sort();
    Ok(EntropyReport {
        reading: "per observed item across respondents, averaged per latent".into(),
        items,
        latents,
        excluded,
    })
}

/// Upper edges of the delay bins in hours; the last bin is open.
pub const DELAY_EDGES: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
pub const DELAY_LABELS: [&str; 5] = ["[0,2]", "(2,4]", "(4,8]", "(8,16]", "(16,inf)"];

pub fn delay_bin(hours: f64) -> usize {
    DELAY_EDGES
        .iter()
        .position(|&e| hours <= e)
        .unwrap_or(DELAY_EDGES.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DelayBin {
    pub label: String,
    pub count: usize,
    pub share_pct: f64,
    /// Mean sati_after; `None` for an empty bin.
    pub s: Option<f64>,
    /// Mean rating over the non-excluded items.
    pub s_retained_items: Option<f64>,
    pub entropy: Option<EntropyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DelayStrata {
    pub bins: Vec<DelayBin>,
    pub n_binned: usize,
    pub n_missing_delay: usize,
    pub excluded: Vec<String>,
}

/// Bins respondents by delay and summarizes each bin.
///
/// `groups` and `exclude` drive the per-bin entropy and the alternative
/// stratum score computed from the retained items only.
pub fn delay_strata(d: &SurveyDataset, groups: &[(String, Vec<usize>)], exclude: &[String]) -> Result<DelayStrata> {
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); DELAY_LABELS.len()];
    let mut missing = 0;
    for (i, r) in d.respondents.iter().enumerate() {
        match r.delay_hours {
            Some(h) => bins[delay_bin(h)].push(i),
            None => missing += 1,
        }
    }
    let n_binned: usize = bins.iter().map(Vec::len).sum();
    if n_binned == 0 {
        return Err(Error::Missing("no respondent has delay_hours".into()));
    }
    let retained: Vec<usize> = groups
        .iter()
        .filter(|(n, _)| !exclude.contains(n))
        .flat_map(|(_, g)| g.iter().copied())
        .collect();
    let mut out = Vec::with_capacity(bins.len());
    for (label, members) in DELAY_LABELS.iter().zip(&bins) {
        let sub = SurveyDataset::new(
            members.iter().map(|&i| d.respondents[i].clone()).collect(),
            d.catalog.clone(),
        );
        let sati: Vec<f64> = sub
            .respondents
            .iter()
            .filter_map(|r| r.sati_after.map(f64::from))
            .collect();
        let ratings: Vec<f64> = sub
            .respondents
            .iter()
            .flat_map(|r| retained.iter().filter_map(|&i| sub.value(r, i).map(f64::from)))
            .collect();
        let entropy = if sub.len() >= 2 && !groups.is_empty() {
            entropy_report(&sub, groups, exclude).ok()
        } else {
            None
        };
        out.push(DelayBin {
            label: (*label).to_string(),
            count: members.len(),
            share_pct: members.len() as f64 / n_binned as f64 * 100.0,
            s: mean(&sati),
            s_retained_items: mean(&ratings),
            entropy,
        });
    }
    let mut excluded = exclude.to_vec();
    excluded.sort();
    Ok(DelayStrata {
        bins: out,
        n_binned,
        n_missing_delay: missing,
        excluded,
    })
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Published stratum shares (%) and scores, kept as a reference table.
pub const REFERENCE_STRATA: [(f64, f64); 5] = [(37.1, 4.45), (27.0, 4.12), (11.2, 3.35), (13.5, 2.84), (11.2, 2.13)];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{RespondentRecord, VariableCatalog};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn respondent(id: &str, delay: f64, sati: u8, ratings: &[(usize, u8)]) -> RespondentRecord {
        RespondentRecord {
            id: id.into(),
            age_band: String::new(),
            gender: String::new(),
            experience_band: String::new(),
            vessel_type: String::new(),
            dwt_band: String::new(),
            delay_hours: Some(delay),
            ratings: ratings.iter().copied().collect(),
            sati_before: Some(sati),
            sati_after: Some(sati),
        }
    }

    fn weights() -> ScoreWeights {
        ScoreWeights::new(vec![
            LatentWeights {
                latent: "A".into(),
                indicators: vec![(1, 0.8), (2, 0.6)],
                structural: 0.417,
            },
            LatentWeights {
                latent: "B".into(),
                indicators: vec![(3, 0.7)],
                structural: 0.300,
            },
        ])
    }

    #[test]
    fn lvr_by_hand() {
        let w = weights();
        let r: BTreeMap<usize, f64> = [(1, 5.0), (2, 3.0)].into_iter().collect();
        assert_relative_eq!(lvr(&r, &w.latents[0]).unwrap(), 5.8 / 1.4, epsilon = 1e-12);
        let missing: BTreeMap<usize, f64> = [(1, 5.0)].into_iter().collect();
        assert!(matches!(lvr(&missing, &w.latents[0]), Err(Error::Missing(_))));
    }

    #[test]
    fn sqr_by_hand() {
        assert_relative_eq!(sqr(&[4.0, 2.0], &weights()).unwrap(), 2.268 / 0.717, epsilon = 1e-12);
        assert!(sqr(&[4.0], &weights()).is_err());
    }

    #[test]
    fn error_by_hand() {
        assert_relative_eq!(signed_error(4.0, 3.6).abs(), 0.1, epsilon = 1e-12);
        assert_eq!(signed_error(3.0, 3.0), 0.0);
    }

    #[test]
    fn nonpositive_weights_warn() {
        let w = ScoreWeights::new(vec![LatentWeights {
            latent: "A".into(),
            indicators: vec![(1, -0.1)],
            structural: 0.0,
        }]);
        assert_eq!(w.warnings.len(), 2);
    }

    #[test]
    fn entropy_cases() {
        assert_relative_eq!(entropy(&[3.0; 10]).unwrap(), 1.0, epsilon = 1e-12);
        let expected = -(0.2f64 * 0.2f64.ln() + 0.8 * 0.8f64.ln()) / 2f64.ln();
        assert_relative_eq!(entropy(&[1.0, 4.0]).unwrap(), expected, epsilon = 1e-12);
        assert!((expected - 0.7219).abs() < 1e-4);
        assert!(entropy(&[1.0]).is_err());
        assert!(entropy(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn strata_by_hand() {
        let d = SurveyDataset::new(
            vec![respondent("a", 3.0, 4, &[]), respondent("b", 20.0, 2, &[])],
            VariableCatalog::reference(),
        );
        let s = delay_strata(&d, &[], &[]).unwrap();
        assert_eq!(s.bins[1].s, Some(4.0));
        assert_eq!(s.bins[4].s, Some(2.0));
        assert_eq!(s.bins[0].s, None);
        assert_relative_eq!(s.bins.iter().map(|b| b.share_pct).sum::<f64>(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn bin_edges_are_closed_above() {
        assert_eq!(delay_bin(0.0), 0);
        assert_eq!(delay_bin(2.0), 0);
        assert_eq!(delay_bin(2.0001), 1);
        assert_eq!(delay_bin(16.0), 3);
        assert_eq!(delay_bin(16.5), 4);
    }

    #[test]
    fn excluded_group_never_reported() {
        let d = SurveyDataset::new(
            (0..6)
                .map(|i| respondent(&i.to_string(), i as f64 * 4.0, 3, &[(1, 1 + (i % 5) as u8), (5, 3)]))
                .collect(),
            VariableCatalog::reference(),
        );
        let groups = vec![
            ("Safe".to_string(), vec![1]),
            (DEFAULT_STRATUM_EXCLUSION.to_string(), vec![5]),
        ];
        let excl = vec![DEFAULT_STRATUM_EXCLUSION.to_string()];
        let s = delay_strata(&d, &groups, &excl).unwrap();
        for b in &s.bins {
            if let Some(e) = &b.entropy {
                assert!(e.items.iter().all(|i| i.item != 5));
                assert!(e.latents.iter().all(|l| l.latent != DEFAULT_STRATUM_EXCLUSION));
            }
        }
    }

    #[test]
    fn reference_strata_decrease() {
        assert!(REFERENCE_STRATA.windows(2).all(|w| w[1].1 <= w[0].1));
        let total: f64 = REFERENCE_STRATA.iter().map(|r| r.0).sum();
        assert!((total - 100.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_invariant(mut xs in proptest::collection::vec(1u8..=5, 2..40), seed in any::<u64>()) {
            let a: Vec<f64> = xs.iter().map(|&x| f64::from(x)).collect();
            let e1 = entropy(&a).unwrap();
            let k = (seed as usize) % xs.len();
            xs.rotate_left(k);
            xs.reverse();
            let b: Vec<f64> = xs.iter().map(|&x| f64::from(x)).collect();
            let e2 = entropy(&b).unwrap();
            prop_assert!((e1 - e2).abs() < 1e-12);
            prop_assert!(1.0 - e1 >= 0.0);
        }

        #[test]
        fn sqr_is_scale_invariant(l1 in 1.0f64..5.0, l2 in 1.0f64..5.0, c in 0.01f64..100.0) {
            let w = weights();
            let mut scaled = w.clone();
            for l in &mut scaled.latents {
                l.structural *= c;
            }
            let a = sqr(&[l1, l2], &w).unwrap();
            let b = sqr(&[l1, l2], &scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= l1.min(l2) - 1e-12 && a <= l1.max(l2) + 1e-12);
        }
    }
}
