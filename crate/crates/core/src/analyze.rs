//! Corpus-level statistics over annotation records.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::cli::AnnotationRecord;
use crate::error::{Error, Result};
use crate::measures::Ratio;
use crate::normalize::{is_punctuation, normalize_token, tokenize, NormalizationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub mode: f64,
}

impl SummaryStats {
    /// Population statistics. The mode is taken over values rounded to two
    /// decimals; ties go to the smallest value.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for v in &sorted {
            *counts.entry((v * 100.0).round() as i64).or_insert(0) += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let mode = counts
            .iter()
            .find(|(_, &c)| c == best)
            .map(|(&k, _)| k as f64 / 100.0)
            .unwrap_or(f64::NAN);
        Some(SummaryStats {
            count: values.len(),
            mean,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            median,
            mode,
        })
    }
}

fn to_f64(r: Ratio) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElsDistribution {
    pub dialogues: usize,
    pub histogram: BTreeMap<usize, usize>,
    pub mean: f64,
    pub zero_count: usize,
    pub max: usize,
}

pub fn els_distribution(records: &[AnnotationRecord]) -> Result<ElsDistribution> {
    if records.is_empty() {
        return Err(Error::Analysis("corpus is empty".into()));
    }
    let mut histogram = BTreeMap::new();
    for r in records {
        *histogram.entry(r.measures.els).or_insert(0) += 1;
    }
    let total: usize = records.iter().map(|r| r.measures.els).sum();
    Ok(ElsDistribution {
        dialogues: records.len(),
        mean: total as f64 / records.len() as f64,
        zero_count: histogram.get(&0).copied().unwrap_or(0),
        max: histogram.keys().next_back().copied().unwrap_or(0),
        histogram,
    })
}

/// Summaries of every expression measure over all established expressions,
/// plus per-dialogue speaker measures.
pub fn measure_summaries(records: &[AnnotationRecord]) -> Result<BTreeMap<String, SummaryStats>> {
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        for m in r.measures.per_expression.values() {
            columns
                .entry("frequency")
                .or_default()
                .push(m.frequency as f64);
            columns.entry("size").or_default().push(m.size as f64);
            columns.entry("span").or_default().push(m.span as f64);
            columns
                .entry("density")
                .or_default()
                .push(to_f64(m.density));
            columns.entry("priming").or_default().push(m.priming as f64);
            columns
                .entry("priming_distance")
                .or_default()
                .push(m.priming_distance as f64);
        }
    }
    if columns.is_empty() {
        return Err(Error::Analysis(
            "no established expressions in corpus".into(),
        ));
    }
    for r in records {
        let m = &r.measures;
        columns.entry("els").or_default().push(m.els as f64);
        for (name, value) in [
            ("entr_user", m.entr_user),
            ("entr_agent", m.entr_agent),
            ("ier_user", m.ier_user),
            ("ier_agent", m.ier_agent),
            ("err_user", Some(m.err_user)),
            ("err_agent", Some(m.err_agent)),
        ] {
            if let Some(v) = value {
                columns.entry(name).or_default().push(to_f64(v));
            }
        }
    }
    Ok(columns
        .into_iter()
        .filter_map(|(k, v)| Some((k.to_string(), SummaryStats::from_values(&v)?)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub group_sizes: BTreeMap<String, usize>,
}

/// Classical one-way ANOVA.
pub fn anova(groups: &BTreeMap<String, Vec<f64>>) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::Analysis(format!(
            "need ≥2 groups for ANOVA, found {}",
            groups.len()
        )));
    }
    if let Some((name, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::Analysis(format!(
            "group '{name}' has {} sample(s); ANOVA needs at least 2",
            g.len()
        )));
    }
    let n: usize = groups.values().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.values().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups.values() {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_b = (k - 1) as f64;
    let df_w = (n - k) as f64;
    let group_sizes = groups.iter().map(|(k, g)| (k.clone(), g.len())).collect();
    let scale = 1e-12 * (1.0 + grand.abs()).powi(2) * n as f64;
    if ss_between <= scale {
        return Ok(AnovaResult {
            f_statistic: 0.0,
            p_value: 1.0,
            group_sizes,
        });
    }
    if ss_within <= 0.0 {
        return Err(Error::Analysis(
            "zero within-group variance; F is unbounded".into(),
        ));
    }
    let f = (ss_between / df_b) / (ss_within / df_w);
    let dist = FisherSnedecor::new(df_b, df_w).map_err(|e| Error::Analysis(e.to_string()))?;
    Ok(AnovaResult {
        f_statistic: f,
        p_value: dist.sf(f).clamp(0.0, 1.0),
        group_sizes,
    })
}

/// ANOVA of per-dialogue ELS grouped by domain. A dialogue with several
/// domains contributes to each of them.
pub fn anova_domains(records: &[AnnotationRecord]) -> Result<AnovaResult> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        for d in &r.domains {
            groups
                .entry(d.clone())
                .or_default()
                .push(r.measures.els as f64);
        }
    }
    if groups.is_empty() {
        return Err(Error::Analysis(
            "--anova requires domain tags, and no record carries any".into(),
        ));
    }
    anova(&groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (
        m,
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

/// Two-sided Welch t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Analysis(
            "each sample needs at least 2 values for a t-test".into(),
        ));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if (ma - mb).abs() <= 1e-12 * (1.0 + ma.abs().max(mb.abs())) {
        return Ok(TTestResult {
            t: 0.0,
            df: if se2 > 0.0 {
                se2.powi(2)
                    / (sa.powi(2) / (a.len() - 1) as f64 + sb.powi(2) / (b.len() - 1) as f64)
            } else {
                (a.len() + b.len() - 2) as f64
            },
            p_value: 1.0,
        });
    }
    if se2 <= 0.0 {
        return Err(Error::Analysis(
            "both samples are constant with different means; t is unbounded".into(),
        ));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / (sa.powi(2) / (a.len() - 1) as f64 + sb.powi(2) / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Analysis(e.to_string()))?;
    Ok(TTestResult {
        t,
        df,
        p_value: (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActOverlap {
    pub act_tokens: usize,
    pub expression_tokens: usize,
    pub shared: usize,
}

/// Vocabulary overlap between dialogue-act slot values and the tokens of
/// established expressions, after normalization.
pub fn act_overlap(records: &[AnnotationRecord], cfg: &NormalizationConfig) -> Result<ActOverlap> {
    let mut acts: HashSet<String> = HashSet::new();
    let mut any_acts = false;
    for u in records.iter().flat_map(|r| &r.utterances) {
        let Some(slots) = &u.dialogue_act else {
            continue;
        };
        any_acts = true;
        for s in slots {
            acts.extend(
                tokenize(&s.value)
                    .into_iter()
                    .filter(|(t, _)| !is_punctuation(t))
                    .map(|(t, _)| normalize_token(&t, cfg)),
            );
        }
    }
    if !any_acts {
        return Err(Error::Analysis(
            "--overlap requires dialogue acts, and the annotations carry none".into(),
        ));
    }
    let exprs: HashSet<String> = records
        .iter()
        .flat_map(|r| &r.entries)
        .filter(|e| e.is_established())
        .flat_map(|e| e.key.tokens().iter().cloned())
        .collect();
    Ok(ActOverlap {
        act_tokens: acts.len(),
        expression_tokens: exprs.len(),
        shared: acts.intersection(&exprs).count(),
    })
}

/// Normalized Gaussian weights for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as usize;
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Smooths a series laid out on consecutive integer positions. Missing
/// positions (`None`) and positions beyond the ends are left out and the
/// remaining weights renormalized.
pub fn gaussian_smooth(series: &[Option<f64>], sigma: f64) -> Vec<Option<f64>> {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    (0..series.len())
        .map(|i| {
            series[i]?;
            let (mut acc, mut weight) = (0.0, 0.0);
            for (k, w) in kernel.iter().enumerate() {
                let Some(j) = (i + k).checked_sub(radius) else {
                    continue;
                };
                if let Some(Some(v)) = series.get(j) {
                    acc += w * v;
                    weight += w;
                }
            }
            Some(acc / weight)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub turn_count: usize,
    pub dialogues: usize,
    pub raw_mean: f64,
    pub smoothed_mean: f64,
    pub std: f64,
}

/// Mean ENTR_agent per dialogue length, smoothed along the length axis.
pub fn entr_by_turncount(records: &[AnnotationRecord], sigma: f64) -> Result<Vec<CurveRow>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Analysis(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut buckets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(e) = r.measures.entr_agent {
            buckets.entry(r.turn_count()).or_default().push(to_f64(e));
        }
    }
    let (Some(&lo), Some(&hi)) = (buckets.keys().next(), buckets.keys().next_back()) else {
        return Ok(Vec::new());
    };
    let stats: BTreeMap<usize, SummaryStats> = buckets
        .iter()
        .map(|(k, v)| (*k, SummaryStats::from_values(v).expect("bucket non-empty")))
        .collect();
    let series: Vec<Option<f64>> = (lo..=hi).map(|t| stats.get(&t).map(|s| s.mean)).collect();
    let smoothed = gaussian_smooth(&series, sigma);
    Ok(stats
        .iter()
        .map(|(&t, s)| CurveRow {
            turn_count: t,
            dialogues: s.count,
            raw_mean: s.mean,
            smoothed_mean: smoothed[t - lo].expect("present bucket"),
            std: s.std,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub dialogues: usize,
    pub mean_entr_agent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub warnings: Vec<String>,
}

fn entr_agent_values(records: &[AnnotationRecord]) -> Vec<f64> {
    records
        .iter()
        .filter_map(|r| r.measures.entr_agent.map(to_f64))
        .collect()
}

/// Mean ENTR_agent of a reference corpus and of each system corpus, with a
/// Welch test of every system against the reference.
pub fn compare(
    reference: (&str, &[AnnotationRecord]),
    systems: &[(&str, &[AnnotationRecord])],
) -> Result<Comparison> {
    let ids = |rs: &[AnnotationRecord]| -> BTreeSet<String> {
        rs.iter().map(|r| r.dialogue_id.clone()).collect()
    };
    let ref_values = entr_agent_values(reference.1);
    if ref_values.is_empty() {
        return Err(Error::Analysis(format!(
            "corpus '{}' is empty",
            reference.0
        )));
    }
    let ref_ids = ids(reference.1);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut rows = vec![CompareRow {
        name: reference.0.to_string(),
        dialogues: ref_values.len(),
        mean_entr_agent: mean(&ref_values),
        test: None,
    }];
    let mut warnings = Vec::new();
    for (name, recs) in systems {
        let values = entr_agent_values(recs);
        if values.is_empty() {
            return Err(Error::Analysis(format!("corpus '{name}' is empty")));
        }
        if ids(recs) != ref_ids {
            warnings.push(format!(
                "corpus '{name}' covers different dialogues than '{}'",
                reference.0
            ));
        }
        rows.push(CompareRow {
            name: name.to_string(),
            dialogues: values.len(),
            mean_entr_agent: mean(&values),
            test: Some(welch_t(&ref_values, &values)?),
        });
    }
    Ok(Comparison { rows, warnings })
}
