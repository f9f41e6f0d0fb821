//! Kruskal-Wallis H test and the adjacent-pair rank grouping used to compare
//! algorithms on one problem.

use statrs::function::gamma::gamma_ur;

use crate::genome::Direction;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KruskalWallis {
    pub h: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
    pub reject: bool,
}

/// Midranks (1-based) of `values`, plus `Σ (t³ - t)` over tie blocks.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Tie-corrected Kruskal-Wallis test with a chi-square (`k - 1` df) p-value.
/// When every value is tied, H is 0 and nothing is rejected.
pub fn kruskal_wallis(groups: &[SampleGroup], alpha: f64) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(
            "Kruskal-Wallis needs at least two groups".into(),
        ));
    }
    if let Some(g) = groups.iter().find(|g| g.values.is_empty()) {
        return Err(Error::EmptyGroup(g.label.clone()));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let total = pooled.len() as f64;
    if pooled.len() < 3 {
        return Err(Error::InvalidArgument(
            "Kruskal-Wallis needs at least three observations".into(),
        ));
    }
    let df = groups.len() - 1;
    let (ranks, ties) = midranks(&pooled);
    let correction = 1.0 - ties / (total * total * total - total);
    if correction <= 0.0 {
        return Ok(KruskalWallis {
            h: 0.0,
            p_value: 1.0,
            degrees_of_freedom: df,
            reject: false,
        });
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.values.len()].iter().sum();
        sum += r * r / g.values.len() as f64;
        offset += g.values.len();
    }
    let h = ((12.0 / (total * (total + 1.0)) * sum - 3.0 * (total + 1.0)) / correction).max(0.0);
    let p_value = if h == 0.0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, h / 2.0)
    };
    Ok(KruskalWallis {
        h,
        p_value,
        degrees_of_freedom: df,
        reject: p_value < alpha,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub label: String,
    pub mean: f64,
    /// 1-based position in the mean ordering.
    pub rank: usize,
    pub group: usize,
    /// Test against the previous entry in rank order (absent for rank 1).
    pub test_with_previous: Option<KruskalWallis>,
}

/// Entries in rank order, best mean first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub entries: Vec<RankEntry>,
}

impl RankTable {
    pub fn group_of(&self, label: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.group)
    }
}

/// Orders groups by mean (best first for `direction`) and tests each one
/// against its predecessor. An entry keeps its predecessor's number when the
/// test does not reject; otherwise it gets its own 1-based rank.
pub fn pairwise_rank_grouping(groups: &[SampleGroup], direction: Direction, alpha: f64) -> Result<RankTable> {
    if let Some(g) = groups.iter().find(|g| g.values.is_empty()) {
        return Err(Error::EmptyGroup(g.label.clone()));
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| direction.best_first(groups[a].mean(), groups[b].mean()));
    let mut entries: Vec<RankEntry> = Vec::with_capacity(groups.len());
    for (pos, &g) in order.iter().enumerate() {
        let (group, test) = if pos == 0 {
            (1, None)
        } else {
            let prev = &groups[order[pos - 1]];
            let pair = [prev.clone(), groups[g].clone()];
            let test = if prev.values.len() + groups[g].values.len() >= 3 {
                kruskal_wallis(&pair, alpha)?
            } else {
                KruskalWallis {
                    h: 0.0,
                    p_value: 1.0,
                    degrees_of_freedom: 1,
                    reject: false,
                }
            };
            let group = if test.reject { pos + 1 } else { entries[pos - 1].group };
            (group, Some(test))
        };
        entries.push(RankEntry {
            label: groups[g].label.clone(),
            mean: groups[g].mean(),
            rank: pos + 1,
            group,
            test_with_previous: test,
        });
    }
    Ok(RankTable { entries })
}
