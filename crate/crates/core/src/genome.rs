//! Population representation shared by every optimizer.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::{Error, Result};

/// Gene values are small unsigned integers in `[0, r_i)`.
pub type Gene = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// Orders two fitness values so that the better one comes first.
    pub fn best_first(self, a: f64, b: f64) -> Ordering {
        let ord = a.partial_cmp(&b).unwrap_or(Ordering::Equal);
        match self {
            Direction::Maximize => ord.reverse(),
            Direction::Minimize => ord,
        }
    }

    /// `true` when `a` is strictly better than `b`.
    pub fn is_better(self, a: f64, b: f64) -> bool {
        self.best_first(a, b) == Ordering::Less
    }

    /// Signed improvement of `current` over `previous` (positive is better).
    pub fn improvement(self, previous: f64, current: f64) -> f64 {
        match self {
            Direction::Maximize => current - previous,
            Direction::Minimize => previous - current,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Maximize => "max",
            Direction::Minimize => "min",
        }
    }
}

/// An evaluation interface over fixed-length discrete genomes.
///
/// Implementations must be pure: the same genes always produce the same value.
pub trait Objective: Sync {
    fn name(&self) -> &str;
    fn cardinalities(&self) -> &[usize];
    fn direction(&self) -> Direction;
    fn known_optimum(&self) -> Option<f64>;
    fn evaluate(&self, genes: &[Gene]) -> f64;

    fn dimension(&self) -> usize {
        self.cardinalities().len()
    }

    /// Checks length and per-gene bounds; `index` is only used in the error.
    fn check(&self, index: usize, genes: &[Gene]) -> Result<()> {
        let cards = self.cardinalities();
        if genes.len() != cards.len() {
            return Err(Error::WrongLength {
                index,
                found: genes.len(),
                expected: cards.len(),
            });
        }
        for (gene, (&value, &card)) in genes.iter().zip(cards).enumerate() {
            if value as usize >= card {
                return Err(Error::InvalidIndividual {
                    index,
                    gene,
                    value,
                    cardinality: card,
                });
            }
        }
        Ok(())
    }

    /// `true` when `value` reaches the known optimum (if there is one).
    fn is_optimal(&self, value: f64) -> bool {
        match (self.known_optimum(), self.direction()) {
            (Some(opt), Direction::Maximize) => value >= opt - 1e-9,
            (Some(opt), Direction::Minimize) => value <= opt + 1e-9,
            (None, _) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<Gene>,
    /// Cached so that re-selected individuals are never re-evaluated.
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(genes: Vec<Gene>) -> Self {
        Self { genes, fitness: None }
    }

    pub fn evaluated(genes: Vec<Gene>, fitness: f64) -> Self {
        Self {
            genes,
            fitness: Some(fitness),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: usize,
}

impl Population {
    pub fn new(members: Vec<Individual>, generation: usize) -> Self {
        Self { members, generation }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Builds a population from the rows of a dataset, all unevaluated.
    pub fn from_dataset(data: &Dataset, generation: usize) -> Self {
        let members = data.rows().map(|r| Individual::new(r.to_vec())).collect();
        Self::new(members, generation)
    }

    pub fn fitnesses(&self) -> Result<Vec<f64>> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| m.fitness.ok_or(Error::Unevaluated(i)))
            .collect()
    }

    pub fn mean_fitness(&self) -> Result<f64> {
        let f = self.fitnesses()?;
        Ok(f.iter().sum::<f64>() / f.len().max(1) as f64)
    }

    /// Index of the best evaluated member; ties resolve to the lowest index.
    pub fn best_index(&self, direction: Direction) -> Result<usize> {
        let f = self.fitnesses()?;
        let mut best = 0;
        for (i, &v) in f.iter().enumerate().skip(1) {
            if direction.is_better(v, f[best]) {
                best = i;
            }
        }
        if f.is_empty() {
            return Err(Error::InvalidArgument("empty population".into()));
        }
        Ok(best)
    }
}

/// Evaluates every member that has no cached fitness.
///
/// Returns the number of objective calls made. Members are evaluated in
/// parallel; the result does not depend on scheduling because objectives are
/// pure.
pub fn evaluate_population(pop: &mut Population, obj: &dyn Objective) -> Result<usize> {
    for (i, m) in pop.members.iter().enumerate() {
        obj.check(i, &m.genes)?;
    }
    let pending: Vec<&mut Individual> = pop.members.iter_mut().filter(|m| m.fitness.is_none()).collect();
    let count = pending.len();
    pending
        .into_par_iter()
        .for_each(|m| m.fitness = Some(obj.evaluate(&m.genes)));
    Ok(count)
}

/// Keeps the `selected` best members as a dataset of gene rows.
///
/// Ties are broken by position: among equal fitnesses the earlier member wins.
pub fn truncation_select(
    pop: &Population,
    selected: usize,
    direction: Direction,
    cardinalities: &[usize],
) -> Result<Dataset> {
    if selected == 0 || selected > pop.len() {
        return Err(Error::InvalidSelection {
            selected,
            population: pop.len(),
        });
    }
    let order = rank_order(pop, direction)?;
    let mut data = Dataset::with_capacity(cardinalities.to_vec(), selected);
    for &i in &order[..selected] {
        data.push_row(&pop.members[i].genes)?;
    }
    Ok(data)
}

/// Member indices sorted best first, stable in position.
pub fn rank_order(pop: &Population, direction: Direction) -> Result<Vec<usize>> {
    let f = pop.fitnesses()?;
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| direction.best_first(f[a], f[b]));
    Ok(order)
}

/// N rows of discrete values over variables with known cardinalities.
///
/// Rows are stored contiguously, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    cardinalities: Vec<usize>,
    values: Vec<Gene>,
}

impl Dataset {
    pub fn new(cardinalities: Vec<usize>) -> Self {
        Self {
            cardinalities,
            values: Vec::new(),
        }
    }

    pub fn with_capacity(cardinalities: Vec<usize>, rows: usize) -> Self {
        let n = cardinalities.len();
        Self {
            cardinalities,
            values: Vec::with_capacity(rows * n),
        }
    }

    /// Builds a dataset from explicit rows, validating every value.
    pub fn from_rows<R: AsRef<[Gene]>>(cardinalities: Vec<usize>, rows: &[R]) -> Result<Self> {
        let mut d = Self::with_capacity(cardinalities, rows.len());
        for r in rows {
            d.push_row(r.as_ref())?;
        }
        Ok(d)
    }

    pub fn push_row(&mut self, row: &[Gene]) -> Result<()> {
        let index = self.len();
        if row.len() != self.cardinalities.len() {
            return Err(Error::WrongLength {
                index,
                found: row.len(),
                expected: self.cardinalities.len(),
            });
        }
        for (gene, (&value, &card)) in row.iter().zip(&self.cardinalities).enumerate() {
            if value as usize >= card {
                return Err(Error::InvalidIndividual {
                    index,
                    gene,
                    value,
                    cardinality: card,
                });
            }
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub(crate) fn push_row_unchecked(&mut self, row: &[Gene]) {
        debug_assert_eq!(row.len(), self.n_vars());
        self.values.extend_from_slice(row);
    }

    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn len(&self) -> usize {
        if self.cardinalities.is_empty() {
            0
        } else {
            self.values.len() / self.cardinalities.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn row(&self, r: usize) -> &[Gene] {
        let n = self.n_vars();
        &self.values[r * n..(r + 1) * n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Gene]> + '_ {
        self.values.chunks_exact(self.n_vars().max(1))
    }

    pub fn value(&self, r: usize, var: usize) -> Gene {
        self.values[r * self.n_vars() + var]
    }

    pub fn column(&self, var: usize) -> impl Iterator<Item = Gene> + '_ {
        self.rows().map(move |r| r[var])
    }
}
