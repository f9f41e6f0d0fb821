//! GENITOR-style steady-state genetic algorithm.
//!
//! Each step draws two parents by linear rank selection, builds one child by
//! one-point crossover and per-gene mutation, evaluates it, and lets it
//! replace the worst member when it is strictly better.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::genome::{Gene, Individual, Objective};
use crate::record::{GenerationStats, Learner, RunRecord, StopReason, StopSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    /// Per-gene mutation probability; `None` means `1/n`.
    pub mutation_rate: Option<f64>,
    /// Linear ranking bias in `(1, 2]`.
    pub bias: f64,
}

impl GaConfig {
    pub fn new(population_size: usize) -> Self {
        Self {
            population_size,
            mutation_rate: None,
            bias: 1.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidArgument("GA population needs at least 2 members".into()));
        }
        if let Some(rate) = self.mutation_rate {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidArgument(format!("mutation rate {rate} outside [0, 1]")));
            }
        }
        if !(self.bias > 1.0 && self.bias <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "rank bias {} outside (1, 2]",
                self.bias
            )));
        }
        Ok(())
    }

    pub fn effective_mutation_rate(&self, n: usize) -> f64 {
        self.mutation_rate.unwrap_or(1.0 / n.max(1) as f64)
    }
}

/// Rank position (0 = best) drawn from the linear ranking distribution over
/// `len` ranks: the best rank is `bias` times likelier than the median.
pub fn rank_select<R: Rng + ?Sized>(len: usize, bias: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let x = if bias - 1.0 < 1e-12 {
        u
    } else {
        (bias - (bias * bias - 4.0 * (bias - 1.0) * u).sqrt()) / (2.0 * (bias - 1.0))
    };
    ((x * len as f64) as usize).min(len - 1)
}

/// Child taking `a[..cut]` and `b[cut..]`.
pub fn one_point_crossover(a: &[Gene], b: &[Gene], cut: usize) -> Vec<Gene> {
    a[..cut].iter().chain(&b[cut..]).copied().collect()
}

fn mutate<R: Rng + ?Sized>(genes: &mut [Gene], cardinalities: &[usize], rate: f64, rng: &mut R) {
    if rate <= 0.0 {
        return;
    }
    for (g, &r) in genes.iter_mut().zip(cardinalities) {
        if rng.random::<f64>() < rate {
            // a different value, uniformly
            let shift = rng.random_range(1..r) as Gene;
            *g = ((*g as usize + shift as usize) % r) as Gene;
        }
    }
}

/// Population kept sorted best first.
struct RankedPopulation {
    members: Vec<Individual>,
}

impl RankedPopulation {
    fn fitness(&self, i: usize) -> f64 {
        self.members[i].fitness.expect("GA members are evaluated on insertion")
    }

    fn mean(&self) -> f64 {
        (0..self.members.len()).map(|i| self.fitness(i)).sum::<f64>() / self.members.len() as f64
    }
}

/// Runs the steady-state GA until the first stopping criterion is met.
///
/// Stagnation is checked once per `N` evaluations against the population
/// mean at the previous checkpoint; the trace has one entry per checkpoint.
pub fn ga_run(obj: &dyn Objective, cfg: &GaConfig, stop: &StopSpec, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    stop.validate()?;
    let direction = obj.direction();
    let cards = obj.cardinalities();
    let n = cards.len();
    let size = cfg.population_size;
    let rate = cfg.effective_mutation_rate(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut members: Vec<Individual> = (0..size)
        .map(|_| {
            let genes: Vec<Gene> = cards.iter().map(|&r| rng.random_range(0..r) as Gene).collect();
            let f = obj.evaluate(&genes);
            Individual::evaluated(genes, f)
        })
        .collect();
    members.sort_by(|a, b| direction.best_first(a.fitness.unwrap(), b.fitness.unwrap()));
    let mut pop = RankedPopulation { members };
    let mut evaluations = size as u64;
    let mut checkpoint = 0usize;
    let mut trace = vec![GenerationStats {
        generation: 0,
        best: pop.fitness(0),
        mean: pop.mean(),
        evaluations,
        arcs: 0,
        learner: Learner::SteadyState,
    }];

    let stop_reason = loop {
        if stop.optimum_reached(direction, pop.fitness(0)) {
            break StopReason::Optimum;
        }
        if stop.budget_exhausted(evaluations) {
            break StopReason::Budget;
        }
        if evaluations.is_multiple_of(size as u64) && evaluations > size as u64 {
            let len = trace.len();
            if len > 1 && stop.stagnated(direction, trace[len - 2].mean, trace[len - 1].mean) {
                break StopReason::Stagnation;
            }
        }

        let pa = rank_select(size, cfg.bias, &mut rng);
        let pb = rank_select(size, cfg.bias, &mut rng);
        let cut = if n > 1 { rng.random_range(1..n) } else { n };
        let mut child = one_point_crossover(&pop.members[pa].genes, &pop.members[pb].genes, cut);
        mutate(&mut child, cards, rate, &mut rng);
        let f = obj.evaluate(&child);
        evaluations += 1;
        if direction.is_better(f, pop.fitness(size - 1)) {
            pop.members.pop();
            // insert after any equal fitnesses so older members keep their rank
            let pos = pop
                .members
                .partition_point(|m| !direction.is_better(f, m.fitness.unwrap()));
            pop.members.insert(pos, Individual::evaluated(child, f));
        }

        if evaluations.is_multiple_of(size as u64) {
            checkpoint += 1;
            trace.push(GenerationStats {
                generation: checkpoint,
                best: pop.fitness(0),
                mean: pop.mean(),
                evaluations,
                arcs: 0,
                learner: Learner::SteadyState,
            });
        }
    };

    if trace.last().map(|t| t.evaluations) != Some(evaluations) {
        trace.push(GenerationStats {
            generation: checkpoint + 1,
            best: pop.fitness(0),
            mean: pop.mean(),
            evaluations,
            arcs: 0,
            learner: Learner::SteadyState,
        });
    }
    let best = pop.members.swap_remove(0);
    Ok(RunRecord {
        algorithm: "ga".to_string(),
        problem: obj.name().to_string(),
        seed,
        settings: vec![
            ("algo".into(), "ga".into()),
            ("mutation_rate".into(), rate.to_string()),
            ("bias".into(), cfg.bias.to_string()),
        ],
        final_best: best.fitness.unwrap(),
        best_genes: best.genes,
        evaluations,
        generations: trace.last().unwrap().generation,
        stop_reason,
        trace,
    })
}
