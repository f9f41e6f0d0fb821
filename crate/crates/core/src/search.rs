//! Structure learning: greedy arc addition (Algorithm B), add/delete local
//! search, and the PC algorithm with chi-square independence tests.

use std::collections::HashMap;

use statrs::function::gamma::gamma_ur;

use crate::bayesnet::{configuration_count, parent_configuration_index, DagStructure};
use crate::genome::Dataset;
use crate::scores::{Metric, ScoreCache};

/// Moves must improve the score by more than this to be accepted.
const MIN_IMPROVEMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    Add,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcEdit {
    pub kind: EditKind,
    pub from: usize,
    pub to: usize,
    pub score_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub structure: DagStructure,
    pub score: f64,
    /// Accepted edits in order.
    pub edits: Vec<ArcEdit>,
    /// Total score before the first edit and after every accepted edit.
    pub trace: Vec<f64>,
}

/// Greedy search from the arcless structure that only adds arcs, always
/// the one with the largest score gain, until no addition helps.
///
/// `caps[i]` bounds the number of parents of variable `i`.
pub fn algorithm_b(data: &Dataset, metric: Metric, caps: Option<&[usize]>) -> SearchOutcome {
    hill_climb(data, metric, DagStructure::empty(data.n_vars()), caps, false)
}

/// Steepest-ascent search over single arc additions and deletions starting
/// from `initial`. Stops when no move improves the score.
pub fn local_search(data: &Dataset, metric: Metric, initial: &DagStructure, caps: Option<&[usize]>) -> SearchOutcome {
    hill_climb(data, metric, initial.clone(), caps, true)
}

fn hill_climb(
    data: &Dataset,
    metric: Metric,
    mut structure: DagStructure,
    caps: Option<&[usize]>,
    allow_delete: bool,
) -> SearchOutcome {
    let n = structure.n_vars();
    assert_eq!(n, data.n_vars(), "structure and data disagree on variable count");
    let cap = |i: usize| caps.map_or(usize::MAX, |c| c[i]);
    let mut cache = ScoreCache::new(data, metric);
    let mut family: Vec<f64> = (0..n).map(|i| cache.family(i, structure.parents(i))).collect();
    // delta[to * n + from]: gain of toggling the arc from -> to.
    let mut delta = vec![f64::NEG_INFINITY; n * n];
    for to in 0..n {
        refresh_row(&mut cache, &structure, &family, &mut delta, to, cap(to), allow_delete);
    }

    let mut score: f64 = family.iter().sum();
    let mut trace = vec![score];
    let mut edits = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for from in 0..n {
            for to in 0..n {
                let d = delta[to * n + from];
                if d <= MIN_IMPROVEMENT || best.is_some_and(|(b, _, _)| d <= b) {
                    continue;
                }
                if !structure.has_arc(from, to) && structure.would_create_cycle(from, to) {
                    continue;
                }
                best = Some((d, from, to));
            }
        }
        let Some((d, from, to)) = best else { break };
        let kind = if structure.has_arc(from, to) {
            structure.remove_arc(from, to);
            EditKind::Delete
        } else {
            structure
                .add_arc(from, to)
                .expect("candidate arc was checked for cycles");
            EditKind::Add
        };
        family[to] = cache.family(to, structure.parents(to));
        refresh_row(&mut cache, &structure, &family, &mut delta, to, cap(to), allow_delete);
        score = family.iter().sum();
        trace.push(score);
        edits.push(ArcEdit {
            kind,
            from,
            to,
            score_delta: d,
        });
    }
    SearchOutcome {
        structure,
        score,
        edits,
        trace,
    }
}

fn refresh_row(
    cache: &mut ScoreCache<'_>,
    structure: &DagStructure,
    family: &[f64],
    delta: &mut [f64],
    to: usize,
    cap: usize,
    allow_delete: bool,
) {
    let n = structure.n_vars();
    let parents = structure.parents(to);
    let mut candidate = Vec::with_capacity(parents.len() + 1);
    for from in 0..n {
        let slot = &mut delta[to * n + from];
        *slot = f64::NEG_INFINITY;
        if from == to {
            continue;
        }
        match parents.binary_search(&from) {
            Ok(pos) if allow_delete => {
                candidate.clear();
                candidate.extend_from_slice(&parents[..pos]);
                candidate.extend_from_slice(&parents[pos + 1..]);
                *slot = cache.family(to, &candidate) - family[to];
            }
            Ok(_) => {}
            Err(pos) if parents.len() < cap => {
                candidate.clear();
                candidate.extend_from_slice(&parents[..pos]);
                candidate.push(from);
                candidate.extend_from_slice(&parents[pos..]);
                *slot = cache.family(to, &candidate) - family[to];
            }
            Err(_) => {}
        }
    }
}

/// Outcome of one Pearson chi-square conditional independence test.
#[derive(Debug, Clone, PartialEq)]
pub struct CiTestResult {
    pub x: usize,
    pub y: usize,
    pub conditioning: Vec<usize>,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub independent: bool,
    /// More than 20% of the expected cell counts were below 5.
    pub sparse: bool,
}

/// Tests `x ⊥ y | conditioning` by summing Pearson's X² over the strata of
/// the conditioning set. Empty strata contribute neither statistic nor
/// degrees of freedom.
pub fn chi_square_ci_test(data: &Dataset, x: usize, y: usize, conditioning: &[usize], alpha: f64) -> CiTestResult {
    debug_assert!(x != y && !conditioning.contains(&x) && !conditioning.contains(&y));
    let cards = data.cardinalities();
    let (rx, ry) = (cards[x], cards[y]);
    let strata = configuration_count(conditioning, cards);
    let cell = rx * ry;
    let mut table = vec![0u32; strata * cell];
    for row in data.rows() {
        let z = parent_configuration_index(conditioning, cards, row);
        table[z * cell + row[x] as usize * ry + row[y] as usize] += 1;
    }

    let mut statistic = 0.0;
    let mut df = 0;
    let (mut cells, mut small) = (0usize, 0usize);
    let mut row_sum = vec![0u32; rx];
    let mut col_sum = vec![0u32; ry];
    for counts in table.chunks_exact(cell) {
        let total: u32 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        row_sum.iter_mut().for_each(|v| *v = 0);
        col_sum.iter_mut().for_each(|v| *v = 0);
        for a in 0..rx {
            for b in 0..ry {
                let c = counts[a * ry + b];
                row_sum[a] += c;
                col_sum[b] += c;
            }
        }
        for a in 0..rx {
            for b in 0..ry {
                let expected = row_sum[a] as f64 * col_sum[b] as f64 / total as f64;
                cells += 1;
                if expected < 5.0 {
                    small += 1;
                }
                if expected > 0.0 {
                    let diff = counts[a * ry + b] as f64 - expected;
                    statistic += diff * diff / expected;
                }
            }
        }
        df += (rx - 1) * (ry - 1);
    }

    let p_value = if df == 0 || statistic <= 0.0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, statistic / 2.0)
    };
    CiTestResult {
        x,
        y,
        conditioning: conditioning.to_vec(),
        statistic,
        degrees_of_freedom: df,
        p_value,
        independent: p_value > alpha,
        sparse: cells > 0 && small * 5 > cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcConfig {
    pub alpha: f64,
    /// Largest conditioning set tried in the skeleton phase.
    pub max_conditioning: usize,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            max_conditioning: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcOutcome {
    pub structure: DagStructure,
    /// Undirected skeleton edges `(i, j)` with `i < j`.
    pub skeleton: Vec<(usize, usize)>,
    pub tests: usize,
    /// Tests flagged as sparse by the chi-square validity guard.
    pub sparse_tests: usize,
}

/// The PC algorithm: thin the complete graph with tests of growing order,
/// orient v-structures from the separating sets, apply Meek's rules and
/// finally orient what is left by lowest index first without closing a cycle.
///
/// Adjacencies are frozen at the start of every order, so the skeleton does
/// not depend on the order in which pairs are visited.
#[allow(clippy::needless_range_loop)]
pub fn pc_learn(data: &Dataset, config: &PcConfig) -> PcOutcome {
    let n = data.n_vars();
    let mut adj = vec![vec![true; n]; n];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = false;
    }
    let mut sepsets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let (mut tests, mut sparse_tests) = (0, 0);

    for order in 0..=config.max_conditioning {
        let frozen: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| adj[i][j]).collect()).collect();
        let mut tested_any = false;
        for i in 0..n {
            for j in i + 1..n {
                if !adj[i][j] {
                    continue;
                }
                let mut separated = None;
                let mut seen: Vec<Vec<usize>> = Vec::new();
                'sides: for (a, b) in [(i, j), (j, i)] {
                    let pool: Vec<usize> = frozen[a].iter().copied().filter(|&v| v != b).collect();
                    if pool.len() < order {
                        continue;
                    }
                    for subset in Subsets::new(pool.len(), order) {
                        let cond: Vec<usize> = subset.iter().map(|&k| pool[k]).collect();
                        // sets shared by both neighbourhoods are tested once
                        if seen.contains(&cond) {
                            continue;
                        }
                        seen.push(cond.clone());
                        tested_any = true;
                        let t = chi_square_ci_test(data, i, j, &cond, config.alpha);
                        tests += 1;
                        sparse_tests += usize::from(t.sparse);
                        if t.independent {
                            separated = Some(cond);
                            break 'sides;
                        }
                    }
                }
                if let Some(cond) = separated {
                    adj[i][j] = false;
                    adj[j][i] = false;
                    sepsets.insert((i, j), cond);
                }
            }
        }
        if !tested_any {
            break;
        }
    }

    let skeleton: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| adj[i][j])
        .collect();
    let mut pdag = Pdag::new(adj);

    // v-structures a -> c <- b
    for c in 0..n {
        for a in 0..n {
            for b in a + 1..n {
                if a == c || b == c || !pdag.adjacent(a, c) || !pdag.adjacent(b, c) || pdag.adjacent(a, b) {
                    continue;
                }
                let in_sepset = sepsets.get(&(a, b)).is_some_and(|s| s.contains(&c));
                if !in_sepset {
                    pdag.orient(a, c);
                    pdag.orient(b, c);
                }
            }
        }
    }
    pdag.apply_meek_rules();
    pdag.extend_to_dag();

    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| pdag.directed[a][b])
        .collect();
    let structure = DagStructure::from_arcs(n, &arcs).expect("PC orientation keeps the graph acyclic");
    PcOutcome {
        structure,
        skeleton,
        tests,
        sparse_tests,
    }
}

/// Partially directed graph used during PC orientation.
struct Pdag {
    adj: Vec<Vec<bool>>,
    directed: Vec<Vec<bool>>,
}

impl Pdag {
    fn new(adj: Vec<Vec<bool>>) -> Self {
        let n = adj.len();
        Self {
            adj,
            directed: vec![vec![false; n]; n],
        }
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a][b]
    }

    fn undirected(&self, a: usize, b: usize) -> bool {
        self.adj[a][b] && !self.directed[a][b] && !self.directed[b][a]
    }

    #[allow(clippy::needless_range_loop)]
    fn reaches(&self, from: usize, to: usize) -> bool {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            for w in 0..n {
                if self.directed[v][w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    }

    /// Orients an undirected edge `a -> b` unless that would close a cycle.
    fn orient(&mut self, a: usize, b: usize) -> bool {
        if !self.undirected(a, b) || self.reaches(b, a) {
            return false;
        }
        self.directed[a][b] = true;
        true
    }

    fn apply_meek_rules(&mut self) {
        let n = self.adj.len();
        loop {
            let mut changed = false;
            for a in 0..n {
                for b in 0..n {
                    if !self.undirected(a, b) {
                        continue;
                    }
                    // R1: c -> a - b with c, b non-adjacent.
                    let r1 = (0..n).any(|c| self.directed[c][a] && c != b && !self.adj[c][b]);
                    // R2: a -> c -> b.
                    let r2 = (0..n).any(|c| self.directed[a][c] && self.directed[c][b]);
                    // R3: a - c -> b and a - d -> b with c, d non-adjacent.
                    let r3 = (0..n).any(|c| {
                        self.undirected(a, c)
                            && self.directed[c][b]
                            && (c + 1..n).any(|d| self.undirected(a, d) && self.directed[d][b] && !self.adj[c][d])
                    });
                    if (r1 || r2 || r3) && self.orient(a, b) {
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn extend_to_dag(&mut self) {
        let n = self.adj.len();
        for a in 0..n {
            for b in a + 1..n {
                if self.undirected(a, b) && !self.orient(a, b) {
                    let ok = self.orient(b, a);
                    debug_assert!(ok);
                }
            }
        }
    }
}

/// Lexicographic `k`-subsets of `0..n`.
struct Subsets {
    idx: Vec<usize>,
    n: usize,
    done: bool,
}

impl Subsets {
    fn new(n: usize, k: usize) -> Self {
        Self {
            idx: (0..k).collect(),
            n,
            done: k > n,
        }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for t in i + 1..k {
                    self.idx[t] = self.idx[t - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesnet::{pls_sample, BayesianNetwork};
    use crate::scores::{score_structure, Penalty};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn copies(n: usize) -> Dataset {
        let rows: Vec<[u8; 2]> = (0..n).map(|k| [(k % 2) as u8, (k % 2) as u8]).collect();
        Dataset::from_rows(vec![2, 2], &rows).unwrap()
    }

    fn coins(rows: usize, vars: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = Dataset::new(vec![2; vars]);
        for _ in 0..rows {
            let r: Vec<u8> = (0..vars).map(|_| rng.random_range(0..2)).collect();
            d.push_row(&r).unwrap();
        }
        d
    }

    #[test]
    fn subsets_enumerate_lexicographically() {
        let all: Vec<Vec<usize>> = Subsets::new(4, 2).collect();
        assert_eq!(
            all,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(Subsets::new(3, 0).count(), 1);
        assert_eq!(Subsets::new(2, 3).count(), 0);
    }

    #[test]
    fn algorithm_b_links_identical_columns() {
        let out = algorithm_b(&copies(200), Metric::Bic, None);
        assert_eq!(out.structure.arc_count(), 1);
        // equal gains: the lexicographically first arc wins
        assert!(out.structure.has_arc(0, 1));
        assert!(out.trace.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn algorithm_b_leaves_independent_coins_alone() {
        let arcless = (0..20)
            .filter(|&s| algorithm_b(&coins(500, 2, s), Metric::Bic, None).structure.arc_count() == 0)
            .count();
        assert!(arcless >= 18, "{arcless}/20");
    }

    #[test]
    fn zero_caps_forbid_arcs() {
        let out = algorithm_b(&copies(200), Metric::Bic, Some(&[0, 0]));
        assert_eq!(out.structure.arc_count(), 0);
    }

    #[test]
    fn local_search_fixed_point_and_agreement() {
        let d = copies(200);
        let b = algorithm_b(&d, Metric::Bic, None);
        let again = local_search(&d, Metric::Bic, &b.structure, None);
        assert_eq!(again.structure, b.structure);
        assert!(again.edits.is_empty());
        let from_empty = local_search(&d, Metric::Bic, &DagStructure::empty(2), None);
        assert_eq!(from_empty.structure, b.structure);
    }

    #[test]
    fn local_search_deletes_useless_arcs() {
        let d = coins(400, 3, 9);
        let start = DagStructure::from_arcs(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let out = local_search(&d, Metric::Bic, &start, None);
        assert!(out.edits.iter().any(|e| e.kind == EditKind::Delete));
        assert!(out.score >= score_structure(&start, &d, Metric::Bic).unwrap());
        assert!(out.trace.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn search_score_matches_direct_total() {
        let d = coins(300, 5, 3);
        let metric = Metric::K2Pen(Penalty::Aic);
        let out = algorithm_b(&d, metric, None);
        let direct = score_structure(&out.structure, &d, metric).unwrap();
        assert!((out.score - direct).abs() < 1e-9);
    }

    #[test]
    fn ci_test_examples() {
        let t = chi_square_ci_test(&copies(1000), 0, 1, &[], 0.01);
        assert!(!t.independent);
        assert_eq!(t.degrees_of_freedom, 1);
        assert!((t.statistic - 1000.0).abs() < 1e-9);

        let independent = (0..100)
            .filter(|&s| chi_square_ci_test(&coins(1000, 2, s), 0, 1, &[], 0.01).independent)
            .count();
        assert!(independent >= 90, "{independent}/100");
    }

    #[test]
    fn ci_test_conditioning_on_common_cause() {
        // X and Y are noisy copies of Z.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut d = Dataset::new(vec![2, 2, 2]);
        for _ in 0..5000 {
            let z: u8 = rng.random_range(0..2);
            let x = if rng.random::<f64>() < 0.9 { z } else { 1 - z };
            let y = if rng.random::<f64>() < 0.9 { z } else { 1 - z };
            d.push_row(&[x, y, z]).unwrap();
        }
        assert!(!chi_square_ci_test(&d, 0, 1, &[], 0.01).independent);
        let t = chi_square_ci_test(&d, 0, 1, &[2], 0.01);
        assert!(t.independent, "p = {}", t.p_value);
        assert_eq!(t.degrees_of_freedom, 2);
    }

    #[test]
    fn empty_strata_drop_their_degrees_of_freedom() {
        // z is constant, so only one of its two strata holds data.
        let rows: Vec<[u8; 3]> = (0..40u8).map(|k| [k % 2, (k / 2) % 2, 0]).collect();
        let d = Dataset::from_rows(vec![2, 2, 2], &rows).unwrap();
        assert_eq!(chi_square_ci_test(&d, 0, 1, &[2], 0.01).degrees_of_freedom, 1);
    }

    #[test]
    fn pc_on_independent_variables() {
        let arcless = (0..20)
            .filter(|&s| {
                pc_learn(&coins(2000, 3, 100 + s), &PcConfig::default())
                    .structure
                    .arc_count()
                    == 0
            })
            .count();
        assert!(arcless >= 18, "{arcless}/20");
    }

    fn collider_data(seed: u64, rows: usize) -> Dataset {
        let s = DagStructure::from_arcs(3, &[(0, 2), (1, 2)]).unwrap();
        // C = A or B with 10% noise
        let c = vec![0.9, 0.1, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9];
        let net = BayesianNetwork::new(s, vec![2; 3], vec![vec![0.5, 0.5], vec![0.5, 0.5], c]).unwrap();
        pls_sample(&net, rows, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn pc_recovers_a_collider() {
        let out = pc_learn(&collider_data(4, 5000), &PcConfig::default());
        assert_eq!(out.skeleton, vec![(0, 2), (1, 2)]);
        assert!(out.structure.has_arc(0, 2) && out.structure.has_arc(1, 2));
    }

    #[test]
    fn pc_order_zero_cap_uses_marginal_tests_only() {
        let cfg = PcConfig {
            alpha: 0.01,
            max_conditioning: 0,
        };
        let out = pc_learn(&collider_data(4, 5000), &cfg);
        assert_eq!(out.tests, 3);
        assert_eq!(out.skeleton, vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn pc_skeleton_is_symmetric_under_relabelling() {
        // Reverse the variable order and compare skeletons after mapping back.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut d = Dataset::new(vec![2; 4]);
        let mut rev = Dataset::new(vec![2; 4]);
        for _ in 0..3000 {
            let a: u8 = rng.random_range(0..2);
            let b = if rng.random::<f64>() < 0.8 { a } else { 1 - a };
            let c = if rng.random::<f64>() < 0.8 { b } else { 1 - b };
            let e: u8 = rng.random_range(0..2);
            d.push_row(&[a, b, c, e]).unwrap();
            rev.push_row(&[e, c, b, a]).unwrap();
        }
        let s1 = pc_learn(&d, &PcConfig::default()).skeleton;
        let mut s2: Vec<(usize, usize)> = pc_learn(&rev, &PcConfig::default())
            .skeleton
            .into_iter()
            .map(|(i, j)| ((3 - j), (3 - i)))
            .collect();
        s2.sort_unstable();
        assert_eq!(s1, s2);
    }
}
