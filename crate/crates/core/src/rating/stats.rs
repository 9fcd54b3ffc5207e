use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bonferroni, wilcoxon_signed_rank, PMethod};
use crate::rating::session::BlindingKey;
use crate::rating::store::{latest_per_item, RatingRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMean {
    pub method: String,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// Frames rated under both methods.
    pub n_pairs: usize,
    pub w: Option<f64>,
    pub w_plus: Option<f64>,
    pub w_minus: Option<f64>,
    pub p_value: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub p_method: Option<PMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingStats {
    pub methods: Vec<MethodMean>,
    pub comparisons: Vec<PairComparison>,
    /// Comparison count used for the Bonferroni factor.
    pub m: usize,
}

/// Per-method means and pairwise signed-rank tests over frames rated under both methods.
/// `m` defaults to the number of method pairs.
pub fn rating_stats(records: &[RatingRecord], key: &BlindingKey, m: Option<usize>) -> Result<RatingStats> {
    let latest = latest_per_item(records);
    if latest.is_empty() {
        return Err(Error::InsufficientData("no ratings".into()));
    }
    let mut by_method: BTreeMap<&str, BTreeMap<u32, f64>> = BTreeMap::new();
    for name in key.methods.values() {
        by_method.entry(name).or_default();
    }
    for r in latest.values() {
        let method = key
            .method_of(&r.item_id)
            .ok_or_else(|| Error::Alignment(format!("rated item {} is not in the blinding key", r.item_id)))?;
        by_method.entry(method).or_default().insert(r.frame_id, r.score as f64);
    }
    let methods: Vec<MethodMean> = by_method
        .iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(name, s)| MethodMean {
            method: name.to_string(),
            mean: s.values().sum::<f64>() / s.len() as f64,
            n: s.len(),
        })
        .collect();
    let names: Vec<&str> = by_method.keys().copied().collect();
    let mut comparisons = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let (sa, sb) = (&by_method[names[i]], &by_method[names[j]]);
            let common: Vec<u32> = sa.keys().filter(|f| sb.contains_key(f)).copied().collect();
            let a: Vec<f64> = common.iter().map(|f| sa[f]).collect();
            let b: Vec<f64> = common.iter().map(|f| sb[f]).collect();
            let mut c = PairComparison {
                a: names[i].to_string(),
                b: names[j].to_string(),
                n_pairs: common.len(),
                w: None,
                w_plus: None,
                w_minus: None,
                p_value: None,
                p_adjusted: None,
                p_method: None,
                error: None,
            };
            match wilcoxon_signed_rank(&a, &b) {
                Ok(w) => {
                    c.w = Some(w.w);
                    c.w_plus = Some(w.w_plus);
                    c.w_minus = Some(w.w_minus);
                    c.p_value = Some(w.p_value);
                    c.p_method = Some(w.method);
                }
                Err(e) => c.error = Some(e.to_string()),
            }
            comparisons.push(c);
        }
    }
    let m = m.unwrap_or(comparisons.len()).max(1);
    for c in &mut comparisons {
        if let Some(p) = c.p_value {
            c.p_adjusted = Some(bonferroni(&[p], m)?[0]);
        }
    }
    Ok(RatingStats { methods, comparisons, m })
}
