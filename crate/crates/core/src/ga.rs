//! Real-coded genetic algorithm for box-bounded minimization.
//!
//! Generation 0 draws a large random population and keeps its best members.
//! Each later generation runs tournament selection, one-point crossover and
//! Gaussian mutation, then keeps the best of parents and children.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Objective value under minimization. `Infeasible` ranks after every
/// feasible value and prints as `inf`.
#[derive(Debug, Clone, Copy)]
pub enum Fitness {
    Feasible(f64),
    Infeasible,
}

impl Fitness {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Fitness::Feasible(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Fitness::Feasible(v) => Some(*v),
            Fitness::Infeasible => None,
        }
    }
}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Fitness::Feasible(a), Fitness::Feasible(b)) => a.total_cmp(b),
            (Fitness::Feasible(_), Fitness::Infeasible) => Ordering::Less,
            (Fitness::Infeasible, Fitness::Feasible(_)) => Ordering::Greater,
            (Fitness::Infeasible, Fitness::Infeasible) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Fitness {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Fitness {}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fitness::Feasible(v) => write!(f, "{v:?}"),
            Fitness::Infeasible => f.write_str("inf"),
        }
    }
}

impl Serialize for Fitness {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Fitness::Feasible(v) => s.serialize_f64(*v),
            Fitness::Infeasible => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),
    #[error("genome lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("genome too short for crossover: {0}")]
    TooShort(usize),
    #[error("objective failed at {genome:?}: {message}")]
    Objective { genome: Vec<f64>, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub initial_population: usize,
    pub population: usize,
    /// Generations after the initial one.
    pub generations: usize,
    pub crossover_prob: f64,
    /// Probability that an offspring is mutated at all.
    pub mutation_prob: f64,
    /// Mutation standard deviation in units of each bound's half-width.
    pub mutation_sigma: f64,
    /// Per-gene probability inside a mutated offspring.
    pub gene_mutation_prob: f64,
    pub tournament_size: usize,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl GaConfig {
    pub fn with_bounds(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            initial_population: 200,
            population: 30,
            generations: 15,
            crossover_prob: 0.8,
            mutation_prob: 0.2,
            mutation_sigma: 0.1,
            gene_mutation_prob: 0.5,
            tournament_size: 3,
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        let err = |m: String| Err(GaError::Config(m));
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("gene_mutation_prob", self.gene_mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.population == 0 || self.population > self.initial_population {
            return err(format!(
                "population {} must be in 1..={}",
                self.population, self.initial_population
            ));
        }
        if self.generations == 0 {
            return err("generations must be at least 1".into());
        }
        if self.tournament_size == 0 {
            return err("tournament size must be at least 1".into());
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return err(format!("mutation sigma {} must be non-negative", self.mutation_sigma));
        }
        if self.bounds.is_empty() {
            return err("bounds are empty".into());
        }
        if let Some((lo, hi)) = self.bounds.iter().find(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return err(format!("bad bound [{lo}, {hi}]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub fitness: Option<Fitness>,
}

impl Individual {
    pub fn new(genome: Vec<f64>) -> Self {
        Self { genome, fitness: None }
    }
}

/// Uniform draws over the bounds.
pub fn init_population(config: &GaConfig, rng: &mut impl Rng) -> Vec<Individual> {
    (0..config.initial_population)
        .map(|_| {
            Individual::new(
                config
                    .bounds
                    .iter()
                    .map(|&(lo, hi)| if lo == hi { lo } else { (lo + (hi - lo) * rng.random::<f64>()).clamp(lo, hi) })
                    .collect(),
            )
        })
        .collect()
}

/// `count` winners of size-`k` tournaments drawn with replacement.
pub fn tournament_select(population: &[Individual], count: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<Individual>, GaError> {
    if population.is_empty() {
        return Err(GaError::EmptyPopulation);
    }
    let fitness: Vec<Fitness> = population
        .iter()
        .enumerate()
        .map(|(i, ind)| ind.fitness.ok_or(GaError::Unevaluated(i)))
        .collect::<Result<_, _>>()?;
    Ok((0..count)
        .map(|_| {
            let mut best = rng.random_range(0..population.len());
            for _ in 1..k.max(1) {
                let c = rng.random_range(0..population.len());
                if fitness[c] < fitness[best] {
                    best = c;
                }
            }
            population[best].clone()
        })
        .collect())
}

/// Swaps the genes from `cut` onwards.
pub fn crossover_at(a: &Individual, b: &Individual, cut: usize) -> (Individual, Individual) {
    let mut x = a.genome.clone();
    let mut y = b.genome.clone();
    x[cut..].swap_with_slice(&mut y[cut..]);
    let child = |g: Vec<f64>, parent: &Individual| Individual {
        fitness: if g == parent.genome { parent.fitness } else { None },
        genome: g,
    };
    (child(x, a), child(y, b))
}

/// Cut drawn uniformly from `1..P`.
pub fn one_point_crossover(a: &Individual, b: &Individual, rng: &mut impl Rng) -> Result<(Individual, Individual), GaError> {
    if a.genome.len() != b.genome.len() {
        return Err(GaError::LengthMismatch(a.genome.len(), b.genome.len()));
    }
    let p = a.genome.len();
    if p < 2 {
        return Err(GaError::TooShort(p));
    }
    Ok(crossover_at(a, b, rng.random_range(1..p)))
}

/// Adds `N(0, (σ·half-width)²)` to each gene with probability `gene_prob`,
/// then clamps to the bounds.
pub fn gaussian_mutation(ind: &Individual, sigma: f64, gene_prob: f64, bounds: &[(f64, f64)], rng: &mut impl Rng) -> Individual {
    let mut genome = ind.genome.clone();
    for (g, &(lo, hi)) in genome.iter_mut().zip(bounds) {
        if rng.random::<f64>() < gene_prob {
            let z: f64 = rng.sample(StandardNormal);
            *g = (*g + z * sigma * 0.5 * (hi - lo)).clamp(lo, hi);
        }
    }
    let fitness = if genome == ind.genome { ind.fitness } else { None };
    Individual { genome, fitness }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: Fitness,
    /// Mean over feasible members; `inf` when none is feasible.
    pub mean: Fitness,
    pub feasible_count: usize,
}

pub const HISTORY_HEADER: &str = "generation,best,mean,feasible_count";

pub fn history_csv(history: &[GenerationStats]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for h in history {
        s.push_str(&format!("{},{},{},{}\n", h.generation, h.best, h.mean, h.feasible_count));
    }
    s
}

#[derive(Debug, Clone)]
pub struct GaResult {
    pub best: Individual,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    /// Set when no feasible individual was ever found.
    pub all_infeasible: bool,
}

impl GaResult {
    pub fn best_fitness(&self) -> Fitness {
        self.best.fitness.unwrap_or(Fitness::Infeasible)
    }
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let fits: Vec<Fitness> = pop.iter().map(|i| i.fitness.unwrap_or(Fitness::Infeasible)).collect();
    let feasible: Vec<f64> = fits.iter().filter_map(Fitness::value).collect();
    GenerationStats {
        generation,
        best: fits.iter().copied().min().unwrap_or(Fitness::Infeasible),
        mean: if feasible.is_empty() {
            Fitness::Infeasible
        } else {
            Fitness::Feasible(feasible.iter().sum::<f64>() / feasible.len() as f64)
        },
        feasible_count: feasible.len(),
    }
}

fn evaluate_all<F, E>(pop: &mut [Individual], objective: &F) -> Result<usize, GaError>
where
    F: Fn(&[f64]) -> Result<Fitness, E> + Sync,
    E: fmt::Display,
{
    let pending: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].fitness.is_none()).collect();
    let results: Vec<Result<Fitness, GaError>> = pending
        .par_iter()
        .map(|&i| {
            objective(&pop[i].genome).map_err(|e| GaError::Objective {
                genome: pop[i].genome.clone(),
                message: e.to_string(),
            })
        })
        .collect();
    for (&i, r) in pending.iter().zip(results) {
        pop[i].fitness = Some(r?);
    }
    Ok(pending.len())
}

/// Stable sort by fitness, then keep `n`, skipping exact duplicate genomes
/// while enough distinct ones remain.
fn truncate(mut pop: Vec<Individual>, n: usize) -> Vec<Individual> {
    pop.sort_by_key(|i| i.fitness.unwrap_or(Fitness::Infeasible));
    let mut kept: Vec<Individual> = Vec::with_capacity(n);
    let mut spare = Vec::new();
    for ind in pop {
        if kept.len() < n && !kept.iter().any(|k| k.genome == ind.genome) {
            kept.push(ind);
        } else {
            spare.push(ind);
        }
    }
    let missing = n.saturating_sub(kept.len());
    kept.extend(spare.into_iter().take(missing));
    kept.sort_by_key(|i| i.fitness.unwrap_or(Fitness::Infeasible));
    kept
}

pub fn evolve<F, E>(config: &GaConfig, objective: F) -> Result<GaResult, GaError>
where
    F: Fn(&[f64]) -> Result<Fitness, E> + Sync,
    E: fmt::Display,
{
    evolve_with(config, objective, |_| {})
}

/// Like [`evolve`], calling `observer` after each generation.
pub fn evolve_with<F, E>(config: &GaConfig, objective: F, mut observer: impl FnMut(&GenerationStats)) -> Result<GaResult, GaError>
where
    F: Fn(&[f64]) -> Result<Fitness, E> + Sync,
    E: fmt::Display,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop = init_population(config, &mut rng);
    let mut evaluations = evaluate_all(&mut pop, &objective)?;
    pop = truncate(pop, config.population);
    let mut history = vec![stats(0, &pop)];
    observer(&history[0]);

    for generation in 1..=config.generations {
        let parents = tournament_select(&pop, config.population, config.tournament_size, &mut rng)?;
        let mut children = Vec::with_capacity(parents.len());
        for pair in parents.chunks(2) {
            match pair {
                [a, b] => {
                    let (x, y) = if rng.random::<f64>() < config.crossover_prob && a.genome.len() >= 2 {
                        one_point_crossover(a, b, &mut rng)?
                    } else {
                        (a.clone(), b.clone())
                    };
                    children.push(x);
                    children.push(y);
                }
                [a] => children.push(a.clone()),
                _ => unreachable!(),
            }
        }
        for child in &mut children {
            if rng.random::<f64>() < config.mutation_prob {
                *child = gaussian_mutation(child, config.mutation_sigma, config.gene_mutation_prob, &config.bounds, &mut rng);
            }
        }
        evaluations += evaluate_all(&mut children, &objective)?;
        pop.extend(children);
        pop = truncate(pop, config.population);
        let s = stats(generation, &pop);
        observer(&s);
        history.push(s);
    }

    let best = pop[0].clone();
    let all_infeasible = !best.fitness.is_some_and(|f| f.is_feasible());
    if all_infeasible {
        log::warn!("no feasible individual found; best fitness is the infeasible sentinel");
    }
    Ok(GaResult {
        best,
        history,
        evaluations,
        all_infeasible,
    })
}
