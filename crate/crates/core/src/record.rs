//! Per-run traces and stopping rules shared by the EDA loop and the GA.

use crate::genome::{Direction, Gene};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    Optimum,
    Budget,
    Stagnation,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Optimum => "optimum",
            StopReason::Budget => "budget",
            StopReason::Stagnation => "stagnation",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StopReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimum" => Ok(StopReason::Optimum),
            "budget" => Ok(StopReason::Budget),
            "stagnation" => Ok(StopReason::Stagnation),
            other => Err(Error::UnknownName {
                kind: "stop reason",
                name: other.to_string(),
            }),
        }
    }
}

/// Which procedure produced a generation's model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Learner {
    Uniform,
    Marginals,
    Chain,
    Pc,
    AlgorithmB,
    LocalSearch,
    SteadyState,
}

impl Learner {
    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Uniform => "uniform",
            Learner::Marginals => "marginals",
            Learner::Chain => "chain",
            Learner::Pc => "pc",
            Learner::AlgorithmB => "algorithm_b",
            Learner::LocalSearch => "local_search",
            Learner::SteadyState => "steady_state",
        }
    }
}

/// When to stop a run; the first criterion met wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopSpec {
    pub max_evaluations: Option<u64>,
    /// Stop once the population mean improves by less than this.
    pub stagnation_epsilon: Option<f64>,
    pub optimum: Option<f64>,
}

impl StopSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_evaluations.is_none() && self.stagnation_epsilon.is_none() && self.optimum.is_none() {
            return Err(Error::InvalidArgument("no stopping criterion is active".into()));
        }
        Ok(())
    }

    pub fn optimum_reached(&self, direction: Direction, best: f64) -> bool {
        match (self.optimum, direction) {
            (Some(opt), Direction::Maximize) => best >= opt - 1e-9,
            (Some(opt), Direction::Minimize) => best <= opt + 1e-9,
            (None, _) => false,
        }
    }

    pub fn budget_exhausted(&self, evaluations: u64) -> bool {
        self.max_evaluations.is_some_and(|max| evaluations >= max)
    }

    pub fn stagnated(&self, direction: Direction, previous_mean: f64, mean: f64) -> bool {
        self.stagnation_epsilon
            .is_some_and(|eps| direction.improvement(previous_mean, mean) < eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness seen so far in the run.
    pub best: f64,
    pub mean: f64,
    /// Cumulative objective calls.
    pub evaluations: u64,
    pub arcs: usize,
    pub learner: Learner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: String,
    pub problem: String,
    pub seed: u64,
    /// Algorithm settings echoed as `key=value` pairs.
    pub settings: Vec<(String, String)>,
    pub trace: Vec<GenerationStats>,
    pub final_best: f64,
    pub best_genes: Vec<Gene>,
    pub evaluations: u64,
    pub generations: usize,
    pub stop_reason: StopReason,
}

impl RunRecord {
    /// `key=value` pairs joined by `;`.
    pub fn settings_string(&self) -> String {
        self.settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}
