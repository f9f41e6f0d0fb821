//! The generational EDA loop and its model builders.
//!
//! Every generation keeps the best `Se` of `N` individuals, learns a
//! Bayesian network from them and samples `N` fresh individuals from it.
//! Generation 0 is drawn from the uniform model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bayesnet::{count_family, estimate_parameters, pls_sample, BayesianNetwork, DagStructure};
use crate::genome::{evaluate_population, truncation_select, Dataset, Objective, Population};
use crate::record::{GenerationStats, Learner, RunRecord, StopReason, StopSpec};
use crate::scores::{parent_bound, Metric, Penalty};
use crate::search::{algorithm_b, local_search, pc_learn, PcConfig};
use crate::{Error, Result};

/// Default cap on parent-set size for score-based search.
pub const DEFAULT_MAX_PARENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Umda,
    Mimic,
    EbnaPc,
    EbnaBic,
    EbnaK2Pen,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Umda,
        Strategy::Mimic,
        Strategy::EbnaPc,
        Strategy::EbnaBic,
        Strategy::EbnaK2Pen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Umda => "umda",
            Strategy::Mimic => "mimic",
            Strategy::EbnaPc => "ebna_pc",
            Strategy::EbnaBic => "ebna_bic",
            Strategy::EbnaK2Pen => "ebna_k2pen",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '+'], "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key || st.name().replace('_', "") == key.replace('_', ""))
            .ok_or_else(|| Error::UnknownName {
                kind: "algorithm",
                name: s.to_string(),
            })
    }
}

/// Learns one model per generation and remembers the previous structure
/// when warm starts are enabled.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    pub strategy: Strategy,
    /// Seed local search with the previous generation's structure
    /// (EBNA-BIC and EBNA-K2+pen only).
    pub carry_forward: bool,
    pub pc: PcConfig,
    /// `f(N)` for EBNA-K2+pen.
    pub penalty: Penalty,
    /// Hard cap on parents for score-based search.
    pub max_parents: usize,
    previous: Option<DagStructure>,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub network: BayesianNetwork,
    pub learner: Learner,
}

impl ModelBuilder {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            carry_forward: true,
            pc: PcConfig::default(),
            penalty: Penalty::Aic,
            max_parents: DEFAULT_MAX_PARENTS,
            previous: None,
        }
    }

    pub fn previous(&self) -> Option<&DagStructure> {
        self.previous.as_ref()
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn build(&mut self, selected: &Dataset) -> Result<BuiltModel> {
        let (network, learner) = match self.strategy {
            Strategy::Umda => (build_umda(selected)?, Learner::Marginals),
            Strategy::Mimic => (build_mimic(selected)?, Learner::Chain),
            Strategy::EbnaPc => (
                estimate_parameters(&pc_learn(selected, &self.pc).structure, selected)?,
                Learner::Pc,
            ),
            Strategy::EbnaBic | Strategy::EbnaK2Pen => {
                let (metric, caps) = if self.strategy == Strategy::EbnaBic {
                    (Metric::Bic, vec![self.max_parents; selected.n_vars()])
                } else {
                    (
                        Metric::K2Pen(self.penalty),
                        k2pen_caps(selected, self.penalty, self.max_parents)?,
                    )
                };
                let prev = if self.carry_forward {
                    self.previous.as_ref()
                } else {
                    None
                };
                let (outcome, learner) = match prev {
                    Some(p) => (local_search(selected, metric, p, Some(&caps)), Learner::LocalSearch),
                    None => (algorithm_b(selected, metric, Some(&caps)), Learner::AlgorithmB),
                };
                let net = estimate_parameters(&outcome.structure, selected)?;
                self.previous = Some(outcome.structure);
                (net, learner)
            }
        };
        Ok(BuiltModel { network, learner })
    }

    pub fn settings(&self) -> Vec<(String, String)> {
        let mut s = vec![("algo".to_string(), self.strategy.name().to_string())];
        match self.strategy {
            Strategy::EbnaPc => {
                s.push(("pc.alpha".into(), self.pc.alpha.to_string()));
                s.push(("pc.max_cond".into(), self.pc.max_conditioning.to_string()));
            }
            Strategy::EbnaBic => {
                s.push(("max_parents".into(), self.max_parents.to_string()));
                s.push(("carry_forward".into(), self.carry_forward.to_string()));
            }
            Strategy::EbnaK2Pen => {
                s.push(("f".into(), self.penalty.to_string()));
                s.push(("max_parents".into(), self.max_parents.to_string()));
                s.push(("carry_forward".into(), self.carry_forward.to_string()));
            }
            Strategy::Umda | Strategy::Mimic => {}
        }
        s
    }
}

/// Per-variable parent caps for K2+penalty search: the bound from the
/// cardinalities, row count and `f(N)`, clipped to `hard_limit`.
pub fn k2pen_caps(selected: &Dataset, penalty: Penalty, hard_limit: usize) -> Result<Vec<usize>> {
    let cards = selected.cardinalities();
    if cards.len() < 2 {
        return Ok(vec![0; cards.len()]);
    }
    (0..cards.len())
        .map(|i| {
            Ok(parent_bound(i, cards, selected.len(), penalty)?
                .max_parents
                .min(hard_limit))
        })
        .collect()
}

/// Arcless model with Laplace-smoothed marginal frequencies.
pub fn build_umda(selected: &Dataset) -> Result<BayesianNetwork> {
    estimate_parameters(&DagStructure::empty(selected.n_vars()), selected)
}

/// Plug-in entropy of variable `i` (natural log).
pub fn empirical_entropy(data: &Dataset, i: usize) -> f64 {
    let counts = count_family(data, i, &[]).counts;
    entropy_of(&counts, data.len())
}

fn entropy_of(counts: &[u32], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in conditional entropy `h(X_i | X_j) = h(X_i, X_j) - h(X_j)`.
pub fn empirical_conditional_entropy(data: &Dataset, i: usize, given: usize) -> f64 {
    if i == given {
        return 0.0;
    }
    let joint = count_family(data, i, &[given]).counts;
    entropy_of(&joint, data.len()) - empirical_entropy(data, given)
}

/// Greedy MIMIC permutation `(i_1, ..., i_n)` returned in selection order,
/// i.e. `i_n` first: the lowest-entropy variable, then repeatedly the
/// unchosen variable with the smallest conditional entropy given the last
/// one chosen. Ties go to the lowest index.
pub fn mimic_order(data: &Dataset) -> Vec<usize> {
    let n = data.n_vars();
    if n == 0 {
        return Vec::new();
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let first = argmin(&remaining, |i| empirical_entropy(data, i));
    remaining.retain(|&v| v != first);
    let mut order = vec![first];
    while !remaining.is_empty() {
        let prev = *order.last().unwrap();
        let next = argmin(&remaining, |i| empirical_conditional_entropy(data, i, prev));
        remaining.retain(|&v| v != next);
        order.push(next);
    }
    order
}

fn argmin(candidates: &[usize], mut f: impl FnMut(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_v = f(best);
    for &c in &candidates[1..] {
        let v = f(c);
        if v < best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

/// `H_π = h(X_{i_n}) + Σ h(X_{i_j} | X_{i_{j+1}})` for an order given in
/// selection order (as returned by [`mimic_order`]).
pub fn chain_entropy(data: &Dataset, order: &[usize]) -> f64 {
    let Some(&first) = order.first() else { return 0.0 };
    empirical_entropy(data, first)
        + order
            .windows(2)
            .map(|w| empirical_conditional_entropy(data, w[1], w[0]))
            .sum::<f64>()
}

/// Chain model: each variable's single parent is the one chosen just before
/// it by [`mimic_order`].
pub fn build_mimic(selected: &Dataset) -> Result<BayesianNetwork> {
    let order = mimic_order(selected);
    let mut parents = vec![Vec::new(); selected.n_vars()];
    for w in order.windows(2) {
        parents[w[1]].push(w[0]);
    }
    estimate_parameters(&DagStructure::from_parents(parents)?, selected)
}

/// EBNA variants, for use without a [`ModelBuilder`].
pub fn build_ebna(selected: &Dataset, strategy: Strategy, previous: Option<&DagStructure>) -> Result<BuiltModel> {
    let mut builder = ModelBuilder::new(strategy);
    builder.previous = previous.cloned();
    builder.build(selected)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdaConfig {
    pub population_size: usize,
    pub selection_size: usize,
    pub stop: StopSpec,
    /// Copy the best individual of the previous generation into the new one.
    pub elitism: bool,
}

impl EdaConfig {
    /// Truncation to half the population.
    pub fn new(population_size: usize, stop: StopSpec) -> Self {
        Self {
            population_size,
            selection_size: population_size / 2,
            stop,
            elitism: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.selection_size == 0 || self.selection_size > self.population_size {
            return Err(Error::InvalidSelection {
                selected: self.selection_size,
                population: self.population_size,
            });
        }
        self.stop.validate()
    }
}

/// Runs one seeded EDA optimisation to completion.
pub fn eda_run(obj: &dyn Objective, mut builder: ModelBuilder, config: &EdaConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    builder.reset();
    let direction = obj.direction();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.population_size;

    let model = BayesianNetwork::uniform(obj.cardinalities());
    let mut pop = Population::from_dataset(&pls_sample(&model, n, &mut rng), 0);
    let mut evaluations = evaluate_population(&mut pop, obj)? as u64;
    let mut best = pop.members[pop.best_index(direction)?].clone();
    let mut mean = pop.mean_fitness()?;
    let mut trace = vec![GenerationStats {
        generation: 0,
        best: best.fitness.unwrap(),
        mean,
        evaluations,
        arcs: 0,
        learner: Learner::Uniform,
    }];

    let stop_reason = loop {
        let best_value = best.fitness.unwrap();
        if config.stop.optimum_reached(direction, best_value) {
            break StopReason::Optimum;
        }
        if config.stop.budget_exhausted(evaluations) {
            break StopReason::Budget;
        }
        if trace.len() > 1 && config.stop.stagnated(direction, trace[trace.len() - 2].mean, mean) {
            break StopReason::Stagnation;
        }

        let selected = truncation_select(&pop, config.selection_size, direction, obj.cardinalities())?;
        let built = builder.build(&selected)?;
        let generation = pop.generation + 1;
        let mut next = Population::from_dataset(&pls_sample(&built.network, n, &mut rng), generation);
        if config.elitism {
            let elite = pop.members[pop.best_index(direction)?].clone();
            next.members[0] = elite;
        }
        evaluations += evaluate_population(&mut next, obj)? as u64;
        let gen_best = &next.members[next.best_index(direction)?];
        if direction.is_better(gen_best.fitness.unwrap(), best_value) {
            best = gen_best.clone();
        }
        mean = next.mean_fitness()?;
        trace.push(GenerationStats {
            generation,
            best: best.fitness.unwrap(),
            mean,
            evaluations,
            arcs: built.network.structure().arc_count(),
            learner: built.learner,
        });
        pop = next;
    };

    Ok(RunRecord {
        algorithm: builder.strategy.name().to_string(),
        problem: obj.name().to_string(),
        seed,
        settings: builder.settings(),
        final_best: best.fitness.unwrap(),
        best_genes: best.genes,
        evaluations,
        generations: pop.generation,
        stop_reason,
        trace,
    })
}
