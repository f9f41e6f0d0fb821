//! Discrete Bayesian networks: structure, sufficient statistics, parameter
//! estimation and forward (probabilistic logic) sampling.

use std::fmt::Write as _;

use rand::Rng;

use crate::genome::{Dataset, Gene};
use crate::{Error, Result};

/// A directed acyclic graph over `n` variables stored as parent sets.
///
/// Parent sets are kept sorted ascending; that order fixes the mixed-radix
/// encoding of parent configurations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DagStructure {
    parents: Vec<Vec<usize>>,
}

impl DagStructure {
    /// The arcless structure.
    pub fn empty(n: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n],
        }
    }

    pub fn from_parents(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        for (i, pa) in parents.iter_mut().enumerate() {
            pa.sort_unstable();
            if pa.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidStructure(format!("variable {i} has a duplicate parent")));
            }
            if let Some(&p) = pa.iter().find(|&&p| p == i || p >= n) {
                return Err(Error::InvalidStructure(format!("variable {i} has invalid parent {p}")));
            }
        }
        let s = Self { parents };
        s.ancestral_ordering()?;
        Ok(s)
    }

    /// Builds a structure from `(from, to)` arcs.
    pub fn from_arcs(n: usize, arcs: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); n];
        for &(from, to) in arcs {
            if to >= n {
                return Err(Error::InvalidStructure(format!("arc target {to} out of range")));
            }
            parents[to].push(from);
        }
        Self::from_parents(parents)
    }

    pub fn n_vars(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.parents[to].binary_search(&from).is_ok()
    }

    pub fn arc_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// All arcs as `(from, to)`, ordered by `to` then `from`.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(to, pa)| pa.iter().map(move |&from| (from, to)))
            .collect()
    }

    /// `true` when `to` can already reach `from`, so `from -> to` would close a cycle.
    pub fn would_create_cycle(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        // Walk ancestors of `from`; a cycle appears iff `to` is among them.
        let mut seen = vec![false; self.n_vars()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            for &p in &self.parents[v] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        false
    }

    /// Adds `from -> to`; fails if it is a duplicate or closes a cycle.
    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<()> {
        if self.has_arc(from, to) {
            return Err(Error::InvalidStructure(format!("arc {from}->{to} already present")));
        }
        if self.would_create_cycle(from, to) {
            return Err(Error::InvalidStructure(format!("arc {from}->{to} closes a cycle")));
        }
        let pa = &mut self.parents[to];
        let pos = pa.binary_search(&from).unwrap_err();
        pa.insert(pos, from);
        Ok(())
    }

    pub fn remove_arc(&mut self, from: usize, to: usize) -> bool {
        match self.parents[to].binary_search(&from) {
            Ok(pos) => {
                self.parents[to].remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    #[cfg(test)]
    pub(crate) fn set_parents(&mut self, i: usize, parents: Vec<usize>) {
        self.parents[i] = parents;
    }

    /// A topological order of the variables. Among the variables whose
    /// parents are all placed, the lowest index goes first.
    pub fn ancestral_ordering(&self) -> Result<Vec<usize>> {
        let n = self.n_vars();
        let mut children = vec![Vec::new(); n];
        let mut missing: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        for (to, pa) in self.parents.iter().enumerate() {
            for &from in pa {
                children[from].push(to);
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
            (0..n).filter(|&i| missing[i] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &children[v] {
                missing[c] -= 1;
                if missing[c] == 0 {
                    ready.push(std::cmp::Reverse(c));
                }
            }
        }
        if order.len() != n {
            return Err(Error::InvalidStructure("graph contains a directed cycle".into()));
        }
        Ok(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.ancestral_ordering().is_ok()
    }
}

/// Number of joint parent configurations `q_i = Π r_g`.
pub fn configuration_count(parents: &[usize], cardinalities: &[usize]) -> usize {
    parents.iter().map(|&p| cardinalities[p]).product()
}

/// Zero-based index `j - 1` of the parent configuration found in `row`.
///
/// Mixed radix over the (ascending) parent list with the first parent as the
/// least significant digit. An empty parent set always maps to 0.
pub fn parent_configuration_index(parents: &[usize], cardinalities: &[usize], row: &[Gene]) -> usize {
    let mut j = 0;
    let mut stride = 1;
    for &p in parents {
        j += row[p] as usize * stride;
        stride *= cardinalities[p];
    }
    j
}

/// Counts `N_ijk` for one variable and parent set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyCounts {
    pub variable: usize,
    pub parents: Vec<usize>,
    /// `r_i`
    pub arity: usize,
    /// `q_i`
    pub configurations: usize,
    /// Dense `q_i × r_i` table, row `j` holds the counts for configuration `j`.
    pub counts: Vec<u32>,
}

impl FamilyCounts {
    pub fn count(&self, j: usize, k: usize) -> u32 {
        self.counts[j * self.arity + k]
    }

    pub fn configuration(&self, j: usize) -> &[u32] {
        &self.counts[j * self.arity..(j + 1) * self.arity]
    }

    /// `N_ij`
    pub fn marginal(&self, j: usize) -> u32 {
        self.configuration(j).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Counts of variable `i` against the configurations of `parents`
/// (which must be sorted ascending).
pub fn count_family(data: &Dataset, i: usize, parents: &[usize]) -> FamilyCounts {
    let cards = data.cardinalities();
    let arity = cards[i];
    let configurations = configuration_count(parents, cards);
    let mut counts = vec![0u32; configurations * arity];
    for row in data.rows() {
        let j = parent_configuration_index(parents, cards, row);
        counts[j * arity + row[i] as usize] += 1;
    }
    FamilyCounts {
        variable: i,
        parents: parents.to_vec(),
        arity,
        configurations,
        counts,
    }
}

/// Sufficient statistics of every family of `structure` over `data`.
pub fn count_stats(structure: &DagStructure, data: &Dataset) -> Result<Vec<FamilyCounts>> {
    if structure.n_vars() != data.n_vars() {
        return Err(Error::Dimension(format!(
            "structure has {} variables, dataset has {}",
            structure.n_vars(),
            data.n_vars()
        )));
    }
    Ok((0..structure.n_vars())
        .map(|i| count_family(data, i, structure.parents(i)))
        .collect())
}

/// A structure with one conditional probability table per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    structure: DagStructure,
    cardinalities: Vec<usize>,
    /// Per variable, a dense `q_i × r_i` table of `θ_ijk`.
    cpts: Vec<Vec<f64>>,
    order: Vec<usize>,
}

impl BayesianNetwork {
    /// Builds a network from explicit tables, checking shapes, positivity and
    /// normalisation.
    pub fn new(structure: DagStructure, cardinalities: Vec<usize>, cpts: Vec<Vec<f64>>) -> Result<Self> {
        let n = structure.n_vars();
        if cardinalities.len() != n || cpts.len() != n {
            return Err(Error::Dimension(format!(
                "network over {n} variables needs {n} cardinalities and tables"
            )));
        }
        for (i, cpt) in cpts.iter().enumerate() {
            let r = cardinalities[i];
            let q = configuration_count(structure.parents(i), &cardinalities);
            if cpt.len() != q * r {
                return Err(Error::Dimension(format!(
                    "table of variable {i} has {} entries, expected {}",
                    cpt.len(),
                    q * r
                )));
            }
            for (j, row) in cpt.chunks_exact(r).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p.is_nan() || p <= 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "table row ({i}, {j}) is not a positive distribution"
                    )));
                }
            }
        }
        let order = structure.ancestral_ordering()?;
        Ok(Self {
            structure,
            cardinalities,
            cpts,
            order,
        })
    }

    /// The arcless network that gives every individual the same probability.
    pub fn uniform(cardinalities: &[usize]) -> Self {
        let n = cardinalities.len();
        let cpts = cardinalities.iter().map(|&r| vec![1.0 / r as f64; r]).collect();
        Self {
            structure: DagStructure::empty(n),
            cardinalities: cardinalities.to_vec(),
            cpts,
            order: (0..n).collect(),
        }
    }

    pub fn structure(&self) -> &DagStructure {
        &self.structure
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn n_vars(&self) -> usize {
        self.structure.n_vars()
    }

    /// `θ_ijk` with zero-based `j` and `k`.
    pub fn theta(&self, i: usize, j: usize, k: usize) -> f64 {
        self.cpts[i][j * self.cardinalities[i] + k]
    }

    /// The conditional distribution of variable `i` under configuration `j`.
    pub fn distribution(&self, i: usize, j: usize) -> &[f64] {
        let r = self.cardinalities[i];
        &self.cpts[i][j * r..(j + 1) * r]
    }

    pub fn table(&self, i: usize) -> &[f64] {
        &self.cpts[i]
    }

    pub fn ancestral_order(&self) -> &[usize] {
        &self.order
    }

    pub fn log_probability(&self, row: &[Gene]) -> f64 {
        (0..self.n_vars())
            .map(|i| {
                let j = parent_configuration_index(self.structure.parents(i), &self.cardinalities, row);
                self.theta(i, j, row[i] as usize).ln()
            })
            .sum()
    }

    /// Draws one individual into `row`, one uniform per gene in ancestral order.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, row: &mut [Gene]) {
        for &i in &self.order {
            let j = parent_configuration_index(self.structure.parents(i), &self.cardinalities, row);
            let u: f64 = rng.random();
            row[i] = inverse_cdf(self.distribution(i, j), u) as Gene;
        }
    }

    /// One line per variable: index, parents and the table rows with six
    /// decimals, e.g. `x2 pa=[0,1] cpt=[0.250000 0.750000 | ...]`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_vars() {
            let pa: Vec<String> = self.structure.parents(i).iter().map(usize::to_string).collect();
            let rows: Vec<String> = self.cpts[i]
                .chunks_exact(self.cardinalities[i])
                .map(|row| row.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(" "))
                .collect();
            let _ = writeln!(out, "x{i} pa=[{}] cpt=[{}]", pa.join(","), rows.join(" | "));
        }
        out
    }
}

fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

/// Expected parameters under uniform Dirichlet priors:
/// `θ_ijk = (N_ijk + 1) / (N_ij + r_i)`.
pub fn estimate_parameters(structure: &DagStructure, data: &Dataset) -> Result<BayesianNetwork> {
    let stats = count_stats(structure, data)?;
    let cpts = stats
        .iter()
        .map(|fam| {
            let r = fam.arity as f64;
            (0..fam.configurations)
                .flat_map(|j| {
                    let nij = fam.marginal(j) as f64;
                    fam.configuration(j).iter().map(move |&c| (c as f64 + 1.0) / (nij + r))
                })
                .collect()
        })
        .collect();
    Ok(BayesianNetwork {
        order: structure.ancestral_ordering()?,
        structure: structure.clone(),
        cardinalities: data.cardinalities().to_vec(),
        cpts,
    })
}

/// Probabilistic logic sampling: `count` rows, each generated variable by
/// variable in ancestral order.
pub fn pls_sample<R: Rng + ?Sized>(net: &BayesianNetwork, count: usize, rng: &mut R) -> Dataset {
    let mut data = Dataset::with_capacity(net.cardinalities.clone(), count);
    let mut row = vec![0; net.n_vars()];
    for _ in 0..count {
        net.sample_into(rng, &mut row);
        data.push_row_unchecked(&row);
    }
    data
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn configuration_index_examples() {
        let cards = [2, 2, 3];
        assert_eq!(parent_configuration_index(&[], &cards, &[1, 1, 2]), 0);
        // (a, b) = (0, 1): the first parent is the low digit.
        assert_eq!(parent_configuration_index(&[0, 1], &cards, &[0, 1, 0]), 2);
        assert_eq!(parent_configuration_index(&[2], &cards, &[0, 0, 2]), 2);

        let mut seen = [false; 4];
        for a in 0..2u8 {
            for b in 0..2u8 {
                let j = parent_configuration_index(&[0, 1], &cards, &[a, b, 0]);
                assert!(!seen[j]);
                seen[j] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn count_examples() {
        let d = Dataset::from_rows(vec![2], &[[0], [1], [1]]).unwrap();
        let fam = count_family(&d, 0, &[]);
        assert_eq!(fam.counts, vec![1, 2]);

        // columns (x, y), x has parent y
        let d = Dataset::from_rows(vec![2, 2], &[[1, 0], [0, 0]]).unwrap();
        let s = DagStructure::from_arcs(2, &[(1, 0)]).unwrap();
        let stats = count_stats(&s, &d).unwrap();
        assert_eq!(stats[0].configuration(0), &[1, 1]);
        assert_eq!(stats[0].configuration(1), &[0, 0]);
        for fam in &stats {
            assert_eq!(fam.total(), 2);
        }
    }

    #[test]
    fn parameter_examples() {
        let s = DagStructure::empty(1);
        let net = estimate_parameters(&s, &Dataset::new(vec![2])).unwrap();
        assert_eq!(net.distribution(0, 0), &[0.5, 0.5]);

        let rows: Vec<[u8; 1]> = [0, 0, 0, 1, 1, 1].iter().map(|&v| [v]).collect();
        let net = estimate_parameters(&s, &Dataset::from_rows(vec![2], &rows).unwrap()).unwrap();
        assert_eq!(net.theta(0, 0, 0), 0.5);

        let rows = vec![[0u8]; 9];
        let net = estimate_parameters(&s, &Dataset::from_rows(vec![3], &rows).unwrap()).unwrap();
        assert!((net.theta(0, 0, 0) - 10.0 / 12.0).abs() < 1e-12);
        assert!((net.theta(0, 0, 1) - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn ancestral_ordering_examples() {
        let chain = DagStructure::from_arcs(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(chain.ancestral_ordering().unwrap(), vec![0, 1, 2]);
        assert_eq!(DagStructure::empty(3).ancestral_ordering().unwrap(), vec![0, 1, 2]);
        let collider = DagStructure::from_arcs(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(collider.ancestral_ordering().unwrap(), vec![0, 1, 2]);
        let reversed = DagStructure::from_arcs(3, &[(2, 1), (1, 0)]).unwrap();
        assert_eq!(reversed.ancestral_ordering().unwrap(), vec![2, 1, 0]);
    }

    #[test]
    fn cycles_and_bad_parents_are_rejected() {
        assert!(DagStructure::from_arcs(2, &[(0, 1), (1, 0)]).is_err());
        assert!(DagStructure::from_parents(vec![vec![0]]).is_err());
        assert!(DagStructure::from_parents(vec![vec![], vec![0, 0]]).is_err());
        let mut s = DagStructure::from_arcs(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(s.would_create_cycle(2, 0));
        assert!(s.add_arc(2, 0).is_err());
        assert!(s.add_arc(0, 2).is_ok());
        assert!(s.remove_arc(0, 2));
        assert!(!s.remove_arc(0, 2));
    }

    #[test]
    fn single_node_sampling_frequency() {
        let net = BayesianNetwork::new(DagStructure::empty(1), vec![2], vec![vec![0.7, 0.3]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = pls_sample(&net, 10_000, &mut rng);
        let zeros = d.column(0).filter(|&v| v == 0).count() as f64 / 10_000.0;
        assert!((zeros - 0.7).abs() < 0.02, "{zeros}");
    }

    #[test]
    fn near_deterministic_tables() {
        let eps = 1e-9;
        let net = BayesianNetwork::new(DagStructure::empty(1), vec![2], vec![vec![1.0 - eps, eps]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(pls_sample(&net, 1000, &mut rng).column(0).all(|v| v == 0));

        let s = DagStructure::from_arcs(2, &[(0, 1)]).unwrap();
        let net = BayesianNetwork::new(
            s,
            vec![2, 2],
            vec![vec![0.5, 0.5], vec![1.0 - eps, eps, eps, 1.0 - eps]],
        )
        .unwrap();
        let d = pls_sample(&net, 1000, &mut rng);
        assert!(d.rows().filter(|r| r[0] == r[1]).count() >= 999);
    }

    #[test]
    fn network_validation() {
        let s = DagStructure::empty(1);
        assert!(BayesianNetwork::new(s.clone(), vec![2], vec![vec![1.0, 0.0]]).is_err());
        assert!(BayesianNetwork::new(s.clone(), vec![2], vec![vec![0.6, 0.6]]).is_err());
        assert!(BayesianNetwork::new(s, vec![2], vec![vec![0.5]]).is_err());
    }

    #[test]
    fn dump_format() {
        let s = DagStructure::from_arcs(2, &[(0, 1)]).unwrap();
        let net = BayesianNetwork::new(s, vec![2, 2], vec![vec![0.5, 0.5], vec![0.25, 0.75, 0.9, 0.1]]).unwrap();
        assert_eq!(
            net.dump(),
            "x0 pa=[] cpt=[0.500000 0.500000]\nx1 pa=[0] cpt=[0.250000 0.750000 | 0.900000 0.100000]\n"
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_dag(n: usize, bits: &[bool]) -> DagStructure {
            // arcs only from lower to higher index under a shuffled labelling
            let mut arcs = Vec::new();
            let mut k = 0;
            for to in 0..n {
                for from in 0..to {
                    if bits[k % bits.len()] {
                        arcs.push(((from * 7 + 3) % n, (to * 7 + 3) % n));
                    }
                    k += 1;
                }
            }
            DagStructure::from_arcs(n, &arcs).unwrap()
        }

        proptest! {
            #[test]
            fn ordering_respects_arcs(bits in prop::collection::vec(any::<bool>(), 1..40)) {
                let s = random_dag(6, &bits);
                let order = s.ancestral_ordering().unwrap();
                let mut pos = [0usize; 6];
                for (p, &v) in order.iter().enumerate() { pos[v] = p; }
                for (from, to) in s.arcs() {
                    prop_assert!(pos[from] < pos[to]);
                }
            }

            #[test]
            fn estimates_are_positive_and_normalised(
                bits in prop::collection::vec(any::<bool>(), 1..20),
                rows in prop::collection::vec(prop::collection::vec(0u8..3, 4), 0..30),
            ) {
                let s = random_dag(4, &bits);
                let d = Dataset::from_rows(vec![3; 4], &rows).unwrap();
                let net = estimate_parameters(&s, &d).unwrap();
                for i in 0..4 {
                    for row in net.table(i).chunks_exact(3) {
                        prop_assert!(row.iter().all(|&p| p > 0.0));
                        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    }
                }
                for r in d.rows() {
                    prop_assert!(net.log_probability(r).is_finite());
                }
            }

            #[test]
            fn counts_ignore_row_order(
                rows in prop::collection::vec(prop::collection::vec(0u8..2, 3), 1..30),
                rot in 0usize..30,
            ) {
                let s = DagStructure::from_arcs(3, &[(0, 2), (1, 2)]).unwrap();
                let d = Dataset::from_rows(vec![2; 3], &rows).unwrap();
                let mut shuffled = rows.clone();
                shuffled.rotate_left(rot % rows.len());
                shuffled.reverse();
                let e = Dataset::from_rows(vec![2; 3], &shuffled).unwrap();
                prop_assert_eq!(count_stats(&s, &d).unwrap(), count_stats(&s, &e).unwrap());
            }
        }
    }
}
