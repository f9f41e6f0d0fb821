//! Decomposable structure scores and the K2+penalty parent bound.
//!
//! Both metrics are sums of per-family terms, so a search that changes one
//! parent set only needs to rescore that family. All factorials are handled
//! as `ln Γ(k + 1)`.

use std::collections::HashMap;

use statrs::function::gamma::ln_gamma;

use crate::bayesnet::{count_family, DagStructure, FamilyCounts};
use crate::genome::Dataset;
use crate::{Error, Result};

/// Weight `f(N)` of the explicit complexity penalty in K2+penalty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Penalty {
    /// `f(N) = 1`
    #[default]
    Aic,
    /// `f(N) = ln(N) / 2`
    Bic,
    Constant(f64),
}

impl Penalty {
    pub fn weight(&self, n_rows: usize) -> f64 {
        match *self {
            Penalty::Aic => 1.0,
            Penalty::Bic => half_log(n_rows),
            Penalty::Constant(c) => c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Penalty::Constant(c) if !c.is_finite() || c < 0.0 => Err(Error::InvalidArgument(format!(
                "penalty weight must be finite and non-negative, got {c}"
            ))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Penalty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Penalty::Aic => f.write_str("aic"),
            Penalty::Bic => f.write_str("bic"),
            Penalty::Constant(c) => write!(f, "{c}"),
        }
    }
}

impl std::str::FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s.to_ascii_lowercase().as_str() {
            "aic" => Penalty::Aic,
            "bic" => Penalty::Bic,
            other => Penalty::Constant(
                other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("penalty must be aic, bic or a number, got `{s}`")))?,
            ),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Bic,
    K2Pen(Penalty),
}

/// The score of one variable given a parent set.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScore {
    pub variable: usize,
    pub parents: Vec<usize>,
    pub score: f64,
}

fn half_log(n_rows: usize) -> f64 {
    if n_rows <= 1 {
        0.0
    } else {
        (n_rows as f64).ln() / 2.0
    }
}

fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Free parameters of a family, `(r_i - 1) q_i`.
pub fn family_dimension(counts: &FamilyCounts) -> f64 {
    ((counts.arity - 1) * counts.configurations) as f64
}

/// `Σ_j Σ_k N_ijk ln(N_ijk / N_ij)`; empty cells and configurations add 0.
pub fn log_likelihood(counts: &FamilyCounts) -> f64 {
    let mut ll = 0.0;
    for j in 0..counts.configurations {
        let nij = counts.marginal(j);
        if nij == 0 {
            continue;
        }
        let nij = nij as f64;
        for &c in counts.configuration(j) {
            if c > 0 {
                let c = c as f64;
                ll += c * (c / nij).ln();
            }
        }
    }
    ll
}

/// BIC family term: log-likelihood minus `(ln N / 2)(r_i - 1) q_i`.
pub fn bic_family(counts: &FamilyCounts, n_rows: usize) -> f64 {
    log_likelihood(counts) - half_log(n_rows) * family_dimension(counts)
}

/// K2 log marginal likelihood of one family:
/// `Σ_j [ln (r_i-1)! − ln (N_ij + r_i − 1)! + Σ_k ln N_ijk!]`.
pub fn k2_log_marginal(counts: &FamilyCounts) -> f64 {
    let r = counts.arity as u64;
    let base = ln_factorial(r - 1);
    let mut total = 0.0;
    for j in 0..counts.configurations {
        let row = counts.configuration(j);
        let nij: u64 = row.iter().map(|&c| c as u64).sum();
        if nij == 0 {
            continue;
        }
        total += base - ln_factorial(nij + r - 1);
        total += row.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>();
    }
    total
}

/// K2+penalty family term: K2 marginal minus `f(N)(r_i − 1) q_i`.
pub fn k2pen_family(counts: &FamilyCounts, n_rows: usize, penalty: Penalty) -> f64 {
    k2_log_marginal(counts) - penalty.weight(n_rows) * family_dimension(counts)
}

pub fn family_score(metric: Metric, counts: &FamilyCounts, n_rows: usize) -> f64 {
    match metric {
        Metric::Bic => bic_family(counts, n_rows),
        Metric::K2Pen(pen) => k2pen_family(counts, n_rows, pen),
    }
}

/// Total score of a structure, the sum of its family terms.
pub fn score_structure(structure: &DagStructure, data: &Dataset, metric: Metric) -> Result<f64> {
    structure.ancestral_ordering()?;
    if structure.n_vars() != data.n_vars() {
        return Err(Error::Dimension(format!(
            "structure has {} variables, dataset has {}",
            structure.n_vars(),
            data.n_vars()
        )));
    }
    Ok(family_scores(structure, data, metric).iter().map(|f| f.score).sum())
}

pub fn family_scores(structure: &DagStructure, data: &Dataset, metric: Metric) -> Vec<FamilyScore> {
    (0..structure.n_vars())
        .map(|i| {
            let counts = count_family(data, i, structure.parents(i));
            FamilyScore {
                variable: i,
                parents: structure.parents(i).to_vec(),
                score: family_score(metric, &counts, data.len()),
            }
        })
        .collect()
}

/// Result of the K2+penalty parent bound for one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParentBound {
    pub variable: usize,
    /// `N = r_i m + l`
    pub m: u64,
    pub l: u64,
    /// Right-hand side of the bound inequality.
    pub rhs: f64,
    /// Maximum number of parents; `n - 1` when the inequality never holds.
    pub max_parents: usize,
    pub restricted: bool,
}

/// Right-hand side `1/((r_i−1) f(N)) · ln[N!(r_i+l−1)!/(N+r_i−1)! · ((2r_i−1)!/(r_i−1)!)^m]`.
pub fn parent_bound_rhs(arity: usize, n_rows: usize, f: f64) -> (u64, u64, f64) {
    let r = arity as u64;
    let n = n_rows as u64;
    let (m, l) = (n / r, n % r);
    let log_term = ln_factorial(n) + ln_factorial(r + l - 1) - ln_factorial(n + r - 1)
        + m as f64 * (ln_factorial(2 * r - 1) - ln_factorial(r - 1));
    (m, l, log_term / ((r - 1) as f64 * f))
}

/// Smallest `pa` for which the product of the `pa + 1` smallest other
/// cardinalities minus the product of the `pa` largest exceeds the
/// right-hand side. No optimal K2+penalty structure gives variable `i`
/// more parents than that.
pub fn parent_bound(i: usize, cardinalities: &[usize], n_rows: usize, penalty: Penalty) -> Result<ParentBound> {
    let n = cardinalities.len();
    if n < 2 || i >= n {
        return Err(Error::InvalidArgument(format!(
            "parent bound needs n >= 2 and a valid variable (n = {n}, i = {i})"
        )));
    }
    let f = penalty.weight(n_rows);
    if f.is_nan() || f <= 0.0 {
        return Err(Error::InvalidArgument(format!("parent bound needs f(N) > 0, got {f}")));
    }
    let (m, l, rhs) = parent_bound_rhs(cardinalities[i], n_rows, f);
    let mut others: Vec<usize> = cardinalities
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &r)| r)
        .collect();
    others.sort_unstable();
    let len = others.len();
    let found = (0..len).find(|&pa| {
        let smallest: f64 = others[..pa + 1].iter().map(|&r| r as f64).product();
        let largest: f64 = others[len - pa..].iter().map(|&r| r as f64).product();
        smallest - largest > rhs
    });
    Ok(ParentBound {
        variable: i,
        m,
        l,
        rhs,
        max_parents: found.unwrap_or(n - 1),
        restricted: found.is_some(),
    })
}

/// Memoised family scores for one dataset and metric.
///
/// Keyed by `(variable, sorted parent set)`; owned by a single search.
pub struct ScoreCache<'a> {
    data: &'a Dataset,
    metric: Metric,
    scores: HashMap<(usize, Vec<usize>), f64>,
    misses: usize,
}

impl<'a> ScoreCache<'a> {
    pub fn new(data: &'a Dataset, metric: Metric) -> Self {
        Self {
            data,
            metric,
            scores: HashMap::new(),
            misses: 0,
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Score of variable `i` with `parents` (sorted ascending).
    pub fn family(&mut self, i: usize, parents: &[usize]) -> f64 {
        if let Some(&s) = self.scores.get(&(i, parents.to_vec())) {
            return s;
        }
        self.misses += 1;
        let counts = count_family(self.data, i, parents);
        let s = family_score(self.metric, &counts, self.data.len());
        self.scores.insert((i, parents.to_vec()), s);
        s
    }

    pub fn structure(&mut self, structure: &DagStructure) -> f64 {
        (0..structure.n_vars())
            .map(|i| self.family(i, structure.parents(i)))
            .sum()
    }

    /// Number of family scores computed from counts so far.
    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}
