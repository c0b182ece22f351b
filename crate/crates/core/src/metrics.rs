//! Aggregate bias metrics over scored instances.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::numeric::{mean, CompensatedSum};
use crate::scoring::{BiasResult, Winner};

/// Smoothing value substituted for zero distribution components in KL.
pub const KL_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioAggregation {
    /// Mean over instances of the normalized per-instance ratio.
    #[default]
    MeanRatio,
    /// Share of instances won, ties split evenly.
    WinCount,
}

fn check_labels(results: &[BiasResult]) -> Result<Vec<&str>> {
    let first = results
        .first()
        .ok_or_else(|| Error::Degenerate("no results to aggregate".to_string()))?;
    let labels = first.labels();
    if let Some(bad) = results.iter().find(|r| r.labels() != labels) {
        return Err(Error::Validation(format!(
            "instance {} has labels {:?}, expected {:?}",
            bad.instance_id,
            bad.labels(),
            labels
        )));
    }
    Ok(labels)
}

/// Bias amplification ratio of one label.
pub fn bias_ratio(results: &[BiasResult], label: &str, aggregation: RatioAggregation) -> Result<f64> {
    let labels = check_labels(results)?;
    if !labels.contains(&label) {
        return Err(Error::Validation(format!("label {label:?} not among {labels:?}")));
    }
    let values = results.iter().map(|r| match aggregation {
        RatioAggregation::MeanRatio => r.variant(label).map_or(0.0, |v| v.ratio),
        RatioAggregation::WinCount => r.winner.credit(label),
    });
    Ok(mean(values).unwrap_or(0.0))
}

/// Ratios of every label, in the label order of the results.
pub fn bias_ratios(results: &[BiasResult], aggregation: RatioAggregation) -> Result<Vec<(String, f64)>> {
    let labels = check_labels(results)?;
    labels
        .iter()
        .map(|l| Ok((l.to_string(), bias_ratio(results, l, aggregation)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// KL(baseline ‖ adjusted).
    #[default]
    Update,
    /// KL(adjusted ‖ baseline).
    Reverse,
    /// Mean of both directions.
    Jeffreys,
    /// KL between the two labels' sentences, each taken as a Bernoulli
    /// distribution over its adjusted score.
    Pair,
}

/// `Σ p ln(p / q)` in nats. Zero components are replaced by
/// [`KL_EPSILON`]; the second value reports whether that happened.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<(f64, bool)> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut smoothed = false;
    let mut acc = CompensatedSum::new();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi < 0.0 || qi < 0.0 || !pi.is_finite() || !qi.is_finite() {
            return Err(Error::Precondition(format!("invalid distribution component ({pi}, {qi})")));
        }
        let pi = if pi == 0.0 {
            smoothed = true;
            KL_EPSILON
        } else {
            pi
        };
        let qi = if qi == 0.0 {
            smoothed = true;
            KL_EPSILON
        } else {
            qi
        };
        if pi != qi {
            acc.add(pi * libm::log(pi / qi));
        }
    }
    // Gibbs' inequality; rounding can leave a tiny negative residue.
    Ok((acc.value().max(0.0), smoothed))
}

/// Mean KL over instances plus the ids that needed smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub value: f64,
    pub smoothed: Vec<String>,
}

pub fn kl_bias(results: &[BiasResult], direction: KlDirection) -> Result<KlSummary> {
    check_labels(results)?;
    let mut acc = CompensatedSum::new();
    let mut smoothed = Vec::new();
    for r in results {
        let p: Vec<f64> = r.variants.iter().map(|v| v.baseline_ratio).collect();
        let q: Vec<f64> = r.variants.iter().map(|v| v.ratio).collect();
        let (value, was_smoothed) = match direction {
            KlDirection::Update => kl_divergence(&p, &q)?,
            KlDirection::Reverse => kl_divergence(&q, &p)?,
            KlDirection::Jeffreys => {
                let (a, sa) = kl_divergence(&p, &q)?;
                let (b, sb) = kl_divergence(&q, &p)?;
                ((a + b) / 2.0, sa || sb)
            }
            KlDirection::Pair => {
                if r.variants.len() != 2 {
                    return Err(Error::Precondition(format!(
                        "pair KL needs exactly two labels, instance {} has {}",
                        r.instance_id,
                        r.variants.len()
                    )));
                }
                let a = r.variants[0].cgs;
                let b = r.variants[1].cgs;
                kl_divergence(&[a, 1.0 - a], &[b, 1.0 - b])?
            }
        };
        if was_smoothed {
            smoothed.push(r.instance_id.clone());
        }
        acc.add(value);
    }
    Ok(KlSummary {
        value: acc.value() / results.len() as f64,
        smoothed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeatStatistic {
    /// Difference of mean associations.
    #[default]
    Raw,
    /// Difference of means over the sample standard deviation of all
    /// target associations.
    EffectSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatScore {
    pub value: f64,
    pub statistic: WeatStatistic,
    /// Words dropped because the table has no vector for them.
    pub dropped: Vec<String>,
}

/// Target and attribute word multisets for WEAT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeatSets {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

fn resolve(table: &EmbeddingTable, name: &str, words: &[String], dropped: &mut Vec<String>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        match table.get_f64(w) {
            Some(v) => out.push(v),
            None => dropped.push(w.clone()),
        }
    }
    if out.is_empty() {
        return Err(Error::Oov {
            words: alloc::vec![format!("set {name}: {}", words.join(" "))],
        });
    }
    Ok(out)
}

fn mean_cosine(w: &[f64], set: &[Vec<f64>]) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for v in set {
        acc.add(cosine(w, v)?);
    }
    Ok(acc.value() / set.len() as f64)
}

fn association(w: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    Ok(mean_cosine(w, a)? - mean_cosine(w, b)?)
}

/// Differential association of targets `x` and `y` with attributes `a`
/// and `b`. Missing words are dropped; an emptied set is an error.
pub fn weat(sets: &WeatSets, table: &EmbeddingTable, statistic: WeatStatistic) -> Result<WeatScore> {
    let mut dropped = Vec::new();
    let x = resolve(table, "X", &sets.x, &mut dropped)?;
    let y = resolve(table, "Y", &sets.y, &mut dropped)?;
    let a = resolve(table, "A", &sets.a, &mut dropped)?;
    let b = resolve(table, "B", &sets.b, &mut dropped)?;
    let sx = x.iter().map(|w| association(w, &a, &b)).collect::<Result<Vec<_>>>()?;
    let sy = y.iter().map(|w| association(w, &a, &b)).collect::<Result<Vec<_>>>()?;
    let mx = mean(sx.iter().copied()).unwrap_or(0.0);
    let my = mean(sy.iter().copied()).unwrap_or(0.0);
    let raw = mx - my;
    let value = match statistic {
        WeatStatistic::Raw => raw,
        WeatStatistic::EffectSize => {
            let all: Vec<f64> = sx.iter().chain(&sy).copied().collect();
            let n = all.len();
            let mu = mean(all.iter().copied()).unwrap_or(0.0);
            let var = crate::numeric::sum(all.iter().map(|v| (v - mu) * (v - mu))) / (n - 1) as f64;
            let sd = libm::sqrt(var);
            if sd == 0.0 || !sd.is_finite() {
                return Err(Error::Degenerate("WEAT effect size with zero standard deviation".to_string()));
            }
            raw / sd
        }
    };
    Ok(WeatScore {
        value,
        statistic,
        dropped,
    })
}

/// Builds WEAT sets from scored instances: attributes are the context words
/// of the instances each target label won (ties excluded), targets are the
/// labels' embedding query words. Repeated words are kept.
pub fn derive_weat_sets(
    results: &[BiasResult],
    x_label: &str,
    x_words: &[String],
    y_label: &str,
    y_words: &[String],
) -> Result<WeatSets> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in results {
        if let Winner::Label(l) = &r.winner {
            if l == x_label {
                a.extend(r.context_words.iter().cloned());
            } else if l == y_label {
                b.extend(r.context_words.iter().cloned());
            }
        }
    }
    for (set, label) in [(&a, x_label), (&b, y_label)] {
        if set.is_empty() {
            return Err(Error::Degenerate(format!(
                "no context words won by {label:?}; inspect the mean ratios instead"
            )));
        }
    }
    Ok(WeatSets {
        x: x_words.to_vec(),
        y: y_words.to_vec(),
        a,
        b,
    })
}

/// Fraction of human-labelled instances whose winner matches the label;
/// a tie that includes the human label counts half.
pub fn human_agreement(results: &[BiasResult], labels: &BTreeMap<String, String>) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    let mut n = 0usize;
    for r in results {
        if let Some(human) = labels.get(&r.instance_id) {
            let credit = match &r.winner {
                Winner::Label(l) => f64::from(u8::from(l == human)),
                Winner::Tie(tied) if tied.contains(human) => 0.5,
                Winner::Tie(_) => 0.0,
            };
            acc.add(credit);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("no scored instance carries a human label".to_string()));
    }
    Ok(acc.value() / n as f64)
}

/// One row of an aggregate report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub context: String,
    pub embedding: String,
    pub ratios: Vec<LabelRatio>,
    pub kl: f64,
    pub weat: Option<f64>,
    pub human_agreement: Option<f64>,
    pub n_instances: usize,
    pub aggregation: RatioAggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRatio {
    pub label: String,
    pub ratio: f64,
}
