//! The four binary test functions: OneMax, Checkerboard, SixPeaks and
//! EqualProducts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::genome::{Direction, Gene, Objective};
use crate::{Error, Result};

/// Sum of the bits.
pub fn onemax(x: &[Gene]) -> f64 {
    x.iter().map(|&g| g as f64).sum()
}

/// Counts disagreeing neighbours on the interior `(s-2)×(s-2)` cells of an
/// `s×s` grid read row-major. The maximum, `4(s-2)²`, is a perfect
/// checkerboard.
pub fn checkerboard(x: &[Gene], s: usize) -> Result<f64> {
    if s * s != x.len() {
        return Err(Error::Dimension(format!(
            "checkerboard needs s*s genes, got {} for s = {s}",
            x.len()
        )));
    }
    if s < 3 {
        return Ok(0.0);
    }
    let cell = |i: usize, j: usize| x[i * s + j];
    let mut agreements = 0usize;
    for i in 1..s - 1 {
        for j in 1..s - 1 {
            let c = cell(i, j);
            agreements += usize::from(c == cell(i - 1, j))
                + usize::from(c == cell(i + 1, j))
                + usize::from(c == cell(i, j - 1))
                + usize::from(c == cell(i, j + 1));
        }
    }
    Ok((4 * (s - 2) * (s - 2) - agreements) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SixPeaksSpec {
    pub n: usize,
    pub t: usize,
}

impl SixPeaksSpec {
    /// Threshold `t = floor(fraction · n)`.
    pub fn new(n: usize, t_fraction: f64) -> Result<Self> {
        let t = (t_fraction * n as f64).floor() as usize;
        Self::with_threshold(n, t)
    }

    pub fn with_threshold(n: usize, t: usize) -> Result<Self> {
        if t == 0 || 2 * t >= n {
            return Err(Error::InvalidArgument(format!(
                "sixpeaks threshold must satisfy 0 < t < n/2 (n = {n}, t = {t})"
            )));
        }
        Ok(Self { n, t })
    }

    /// `2n - t - 1`: one head run of length `t + 1` followed by the
    /// opposite bit.
    pub fn optimum(&self) -> f64 {
        (2 * self.n - self.t - 1) as f64
    }
}

fn head(b: Gene, x: &[Gene]) -> usize {
    x.iter().take_while(|&&g| g == b).count()
}

fn tail(b: Gene, x: &[Gene]) -> usize {
    x.iter().rev().take_while(|&&g| g == b).count()
}

pub fn sixpeaks(x: &[Gene], spec: &SixPeaksSpec) -> f64 {
    let (t0, h1, t1, h0) = (tail(0, x), head(1, x), tail(1, x), head(0, x));
    let t = spec.t;
    let reward = if (t0 > t && h1 > t) || (t1 > t && h0 > t) {
        x.len()
    } else {
        0
    };
    (t0.max(h1).max(t1).max(h0) + reward) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualProductsSpec {
    pub weights: Vec<f64>,
    pub seed: u64,
}

/// Draws `n` weights uniformly from `[0, 4)`; deterministic in `seed`.
pub fn make_equal_products(n: usize, seed: u64) -> Result<EqualProductsSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("equalproducts needs n > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
    Ok(EqualProductsSpec { weights, seed })
}

/// `|Π selected b_i − Π unselected b_i|`, where an empty product is 1.
pub fn equal_products(x: &[Gene], spec: &EqualProductsSpec) -> f64 {
    let (mut on, mut off) = (1.0f64, 1.0f64);
    for (&g, &b) in x.iter().zip(&spec.weights) {
        if g == 1 {
            on *= b;
        } else {
            off *= b;
        }
    }
    (on - off).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    OneMax,
    Checkerboard,
    SixPeaks,
    EqualProducts,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::OneMax,
        ProblemKind::Checkerboard,
        ProblemKind::SixPeaks,
        ProblemKind::EqualProducts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::OneMax => "onemax",
            ProblemKind::Checkerboard => "checkerboard",
            ProblemKind::SixPeaks => "sixpeaks",
            ProblemKind::EqualProducts => "equalproducts",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            ProblemKind::EqualProducts => Direction::Minimize,
            _ => Direction::Maximize,
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownName {
                kind: "problem",
                name: s.to_string(),
            })
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Instance {
    OneMax,
    Checkerboard { side: usize },
    SixPeaks(SixPeaksSpec),
    EqualProducts(EqualProductsSpec),
}

/// A configured benchmark instance usable as an [`Objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    instance: Instance,
    cardinalities: Vec<usize>,
}

impl Benchmark {
    pub fn onemax(n: usize) -> Self {
        Self {
            instance: Instance::OneMax,
            cardinalities: vec![2; n],
        }
    }

    pub fn checkerboard(side: usize) -> Self {
        Self {
            instance: Instance::Checkerboard { side },
            cardinalities: vec![2; side * side],
        }
    }

    pub fn sixpeaks(spec: SixPeaksSpec) -> Self {
        Self {
            cardinalities: vec![2; spec.n],
            instance: Instance::SixPeaks(spec),
        }
    }

    pub fn equal_products(spec: EqualProductsSpec) -> Self {
        Self {
            cardinalities: vec![2; spec.weights.len()],
            instance: Instance::EqualProducts(spec),
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self.instance {
            Instance::OneMax => ProblemKind::OneMax,
            Instance::Checkerboard { .. } => ProblemKind::Checkerboard,
            Instance::SixPeaks(_) => ProblemKind::SixPeaks,
            Instance::EqualProducts(_) => ProblemKind::EqualProducts,
        }
    }

    /// The EqualProducts weight seed, if this is an EqualProducts instance.
    pub fn weights_seed(&self) -> Option<u64> {
        match &self.instance {
            Instance::EqualProducts(spec) => Some(spec.seed),
            _ => None,
        }
    }

    /// Short human-readable description of the instance parameters.
    pub fn describe(&self) -> String {
        match &self.instance {
            Instance::OneMax => format!("n={}", self.dimension()),
            Instance::Checkerboard { side } => format!("s={side}"),
            Instance::SixPeaks(spec) => format!("n={} t={}", spec.n, spec.t),
            Instance::EqualProducts(spec) => {
                format!("n={} weights_seed={}", spec.weights.len(), spec.seed)
            }
        }
    }
}

impl Objective for Benchmark {
    fn name(&self) -> &str {
        self.kind().name()
    }

    fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    fn direction(&self) -> Direction {
        self.kind().direction()
    }

    fn known_optimum(&self) -> Option<f64> {
        match &self.instance {
            Instance::OneMax => Some(self.dimension() as f64),
            Instance::Checkerboard { side } => {
                let inner = side.saturating_sub(2);
                Some((4 * inner * inner) as f64)
            }
            Instance::SixPeaks(spec) => Some(spec.optimum()),
            Instance::EqualProducts(_) => None,
        }
    }

    fn evaluate(&self, genes: &[Gene]) -> f64 {
        match &self.instance {
            Instance::OneMax => onemax(genes),
            // Length is validated by `Objective::check` before evaluation.
            Instance::Checkerboard { side } => checkerboard(genes, *side).unwrap_or(f64::NAN),
            Instance::SixPeaks(spec) => sixpeaks(genes, spec),
            Instance::EqualProducts(spec) => equal_products(genes, spec),
        }
    }
}
