//! Depth search: a genetic algorithm over per-vertex depth vectors scored by
//! the summed corner network output, followed by a coordinate hill climber.
//!
//! Selection is elitist: the better half of each generation survives
//! unchanged and the other half is bred from it by line-partition crossover
//! and, at a configurable rate, sign-flip mutation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{corner_features, FeatureError, FEATURE_ORDER_TAG, MIN_PROJECTED_EDGE};
use crate::geom::{sub2, Vec2};
use crate::mlp::Network;
use crate::wireframe::{aligned_depth_error, AlignedError, Corner, DepthVector, Wireframe, WireframeError};

/// Attempts at drawing a split line that separates the vertices.
pub const CROSSOVER_RETRIES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("sketch has no vertex of degree 3 or more, so it cannot be scored")]
    NoCorners,
    #[error("network feature order {found:?} does not match extractor order {expected:?}")]
    FeatureOrder { found: String, expected: String },
    #[error("depth vector has {found} entries, sketch has {expected} vertices")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Wireframe(#[from] WireframeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Fitness evaluator bound to one sketch and one network.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    sketch: &'a Wireframe,
    net: &'a Network,
    corners: Vec<Corner>,
    /// Projected edge vectors of each corner, canonical order.
    edge_vectors: Vec<[Vec2; 3]>,
    /// Corners whose apex or ends include each vertex.
    incident: Vec<Vec<usize>>,
}

impl<'a> Scorer<'a> {
    pub fn new(sketch: &'a Wireframe, net: &'a Network) -> Result<Self, SearchError> {
        Self::with_corners(sketch, sketch.enumerate_corners(), net)
    }

    pub fn with_corners(sketch: &'a Wireframe, corners: Vec<Corner>, net: &'a Network) -> Result<Self, SearchError> {
        if net.feature_order() != FEATURE_ORDER_TAG {
            return Err(SearchError::FeatureOrder {
                found: net.feature_order().to_string(),
                expected: FEATURE_ORDER_TAG.to_string(),
            });
        }
        let mut incident = vec![Vec::new(); sketch.vertex_count()];
        let mut edge_vectors = Vec::with_capacity(corners.len());
        for (i, c) in corners.iter().enumerate() {
            let origin = sketch.vertex(c.apex);
            let mut edges = [[0.0; 2]; 3];
            for (slot, &end) in edges.iter_mut().zip(&c.ends) {
                *slot = sub2(sketch.vertex(end), origin);
                let length = crate::geom::norm2(*slot);
                if !(length > MIN_PROJECTED_EDGE) {
                    return Err(FeatureError::DegenerateEdge { apex: c.apex, end, length }.into());
                }
                incident[end].push(i);
            }
            incident[c.apex].push(i);
            edge_vectors.push(edges);
        }
        for list in &mut incident {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            sketch,
            net,
            corners,
            edge_vectors,
            incident,
        })
    }

    pub fn sketch(&self) -> &Wireframe {
        self.sketch
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    pub fn vertex_count(&self) -> usize {
        self.sketch.vertex_count()
    }

    /// Network output for corner `index` under `depths`.
    pub fn corner_score(&self, index: usize, depths: &[f64]) -> f64 {
        let c = &self.corners[index];
        let z0 = depths[c.apex];
        let dz = c.ends.map(|e| depths[e] - z0);
        self.net.predict(&corner_features(self.edge_vectors[index], dz).to_array())
    }

    /// Sum of corner scores, in corner order. Lower is better.
    pub fn fitness(&self, depths: &[f64]) -> f64 {
        debug_assert_eq!(depths.len(), self.vertex_count());
        (0..self.corners.len()).map(|i| self.corner_score(i, depths)).sum()
    }
}

/// Summed network score of every corner of `w` lifted by `depths`.
pub fn fitness_of(w: &Wireframe, corners: &[Corner], net: &Network, depths: &[f64]) -> Result<f64, SearchError> {
    if depths.len() != w.vertex_count() {
        return Err(SearchError::SizeMismatch {
            expected: w.vertex_count(),
            found: depths.len(),
        });
    }
    let scorer = Scorer::with_corners(w, corners.to_vec(), net)?;
    Ok(scorer.fitness(depths))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub depths: DepthVector,
    /// Cached fitness; `None` until evaluated.
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn new(depths: DepthVector) -> Self {
        Self { depths, fitness: None }
    }

    pub fn evaluated(depths: DepthVector, scorer: &Scorer) -> Self {
        let fitness = Some(scorer.fitness(&depths));
        Self { depths, fitness }
    }

    fn fitness_or_inf(&self) -> f64 {
        self.fitness.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillClimbSchedule {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evaluations: usize,
}

impl Default for HillClimbSchedule {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_step: 1e-4,
            max_evaluations: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Probability that an offspring receives a negation mask.
    pub mutation_rate: f64,
    /// Initial depths are uniform on `[-init_range, init_range]`.
    pub init_range: f64,
    pub hill_climb: HillClimbSchedule,
    pub seed: u64,
    /// Stop once the best fitness drops below this value.
    pub early_exit: Option<f64>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            generations: 200,
            mutation_rate: 0.25,
            init_range: 0.5,
            hill_climb: HillClimbSchedule::default(),
            seed: 0,
            early_exit: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.population < 2 || self.population % 2 != 0 {
            return Err(SearchError::InvalidConfig(format!(
                "population must be even and at least 2, got {}",
                self.population
            )));
        }
        if self.generations == 0 {
            return Err(SearchError::InvalidConfig("at least one generation is required".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(SearchError::InvalidConfig(format!(
                "mutation rate {} outside [0, 1]",
                self.mutation_rate
            )));
        }
        if !(self.init_range.is_finite() && self.init_range >= 0.0) {
            return Err(SearchError::InvalidConfig("initial depth range must be finite and nonnegative".into()));
        }
        let hc = &self.hill_climb;
        if !(hc.initial_step > 0.0 && hc.min_step > 0.0 && hc.initial_step.is_finite()) {
            return Err(SearchError::InvalidConfig("hill-climb steps must be positive".into()));
        }
        Ok(())
    }
}

/// Marks vertices strictly on the positive side of the line through
/// `through` with direction angle `angle`.
pub fn split_by_line(points: &[Vec2], through: Vec2, angle: f64) -> Vec<bool> {
    let (dy, dx) = angle.sin_cos();
    points
        .iter()
        .map(|&p| {
            let r = sub2(p, through);
            dx * r[1] - dy * r[0] > 0.0
        })
        .collect()
}

fn blend(a: &[f64], b: &[f64], from_a: &[bool]) -> DepthVector {
    let values = a
        .iter()
        .zip(b)
        .zip(from_a)
        .map(|((&x, &y), &take_a)| if take_a { x } else { y })
        .collect();
    DepthVector::new(values).expect("parents hold finite depths")
}

/// Offspring taking `parent_a`'s depths on one side of a random line through
/// the sketch centroid and `parent_b`'s on the other. When no drawn line
/// separates the vertices, the offspring copies the fitter parent.
pub fn crossover(
    parent_a: &Individual,
    parent_b: &Individual,
    w: &Wireframe,
    rng: &mut impl Rng,
) -> Result<Individual, SearchError> {
    let n = w.vertex_count();
    for p in [parent_a, parent_b] {
        if p.depths.len() != n {
            return Err(SearchError::SizeMismatch {
                expected: n,
                found: p.depths.len(),
            });
        }
    }
    let centroid = w.centroid();
    for _ in 0..CROSSOVER_RETRIES {
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let side = split_by_line(w.vertices(), centroid, angle);
        let count = side.iter().filter(|&&s| s).count();
        if count > 0 && count < n {
            return Ok(Individual::new(blend(&parent_a.depths, &parent_b.depths, &side)));
        }
    }
    let fitter = if parent_b.fitness_or_inf() < parent_a.fitness_or_inf() {
        parent_b
    } else {
        parent_a
    };
    Ok(fitter.clone())
}

/// Negates the depths selected by `mask`.
pub fn apply_negation_mask(depths: &DepthVector, mask: &[bool]) -> DepthVector {
    assert_eq!(depths.len(), mask.len());
    let values = depths
        .iter()
        .zip(mask)
        .map(|(&z, &flip)| if flip { -z } else { z })
        .collect();
    DepthVector::new(values).expect("negation keeps depths finite")
}

/// Negates each depth independently with probability 0.5.
pub fn mutate(ind: &Individual, rng: &mut impl Rng) -> Individual {
    let mask: Vec<bool> = (0..ind.depths.len()).map(|_| rng.gen_bool(0.5)).collect();
    Individual::new(apply_negation_mask(&ind.depths, &mask))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub best: Individual,
    /// Best fitness of the initial population, then after each generation.
    pub history: Vec<f64>,
    pub generations_run: usize,
    /// First history index at which the final best fitness was reached.
    pub plateau_generation: usize,
}

/// Generator for one phase of a seeded run. Stream 0 draws the initial
/// population; stream `g` breeds generation `g`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn score_population(pop: &mut [Individual], scorer: &Scorer) {
    pop.par_iter_mut().filter(|ind| ind.fitness.is_none()).for_each(|ind| {
        ind.fitness = Some(scorer.fitness(&ind.depths));
    });
    // Stable: equal-fitness individuals keep their order.
    pop.sort_by(|a, b| a.fitness_or_inf().total_cmp(&b.fitness_or_inf()));
}

/// Runs the genetic search from a random initial population.
pub fn evolve(scorer: &Scorer, cfg: &GaConfig) -> Result<Evolution, SearchError> {
    cfg.validate()?;
    let n = scorer.vertex_count();
    let mut rng = stream_rng(cfg.seed, 0);
    let population = (0..cfg.population)
        .map(|_| {
            let depths = (0..n)
                .map(|_| {
                    if cfg.init_range > 0.0 {
                        rng.gen_range(-cfg.init_range..=cfg.init_range)
                    } else {
                        0.0
                    }
                })
                .collect();
            Individual::new(DepthVector::new(depths).expect("finite initial depths"))
        })
        .collect();
    evolve_from(scorer, population, cfg)
}

/// Runs the genetic search from a given population.
pub fn evolve_from(scorer: &Scorer, mut population: Vec<Individual>, cfg: &GaConfig) -> Result<Evolution, SearchError> {
    cfg.validate()?;
    if population.len() != cfg.population {
        return Err(SearchError::InvalidConfig(format!(
            "population has {} individuals, configuration says {}",
            population.len(),
            cfg.population
        )));
    }
    let n = scorer.vertex_count();
    if let Some(bad) = population.iter().find(|p| p.depths.len() != n) {
        return Err(SearchError::SizeMismatch {
            expected: n,
            found: bad.depths.len(),
        });
    }

    score_population(&mut population, scorer);
    let mut history = vec![population[0].fitness_or_inf()];
    let survivors = cfg.population / 2;
    let mut generations_run = 0;

    for generation in 1..=cfg.generations {
        if cfg.early_exit.is_some_and(|t| population[0].fitness_or_inf() < t) {
            break;
        }
        let mut rng = stream_rng(cfg.seed, generation as u64);
        population.truncate(survivors);
        for _ in 0..(cfg.population - survivors) {
            let a = &population[rng.gen_range(0..survivors)];
            let b = &population[rng.gen_range(0..survivors)];
            let mut child = crossover(a, b, scorer.sketch(), &mut rng)?;
            if rng.gen_bool(cfg.mutation_rate) {
                child = mutate(&child, &mut rng);
            }
            population.push(child);
        }
        score_population(&mut population, scorer);
        debug_assert_eq!(population.len(), cfg.population);
        history.push(population[0].fitness_or_inf());
        generations_run = generation;
    }

    let final_best = *history.last().unwrap();
    let plateau_generation = history.iter().position(|&f| f == final_best).unwrap_or(0);
    Ok(Evolution {
        best: population.swap_remove(0),
        history,
        generations_run,
        plateau_generation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillClimbResult {
    pub depths: DepthVector,
    pub fitness: f64,
    pub evaluations: usize,
    /// Fitness at the start and after every sweep.
    pub trace: Vec<f64>,
}

/// Coordinate descent: each sweep tries `z +/- step` at every vertex in
/// order and keeps the better trial if it strictly lowers fitness. A sweep
/// without any accepted move halves the step.
pub fn hill_climb(scorer: &Scorer, start: &DepthVector, schedule: &HillClimbSchedule) -> Result<HillClimbResult, SearchError> {
    let n = scorer.vertex_count();
    if start.len() != n {
        return Err(SearchError::SizeMismatch {
            expected: n,
            found: start.len(),
        });
    }
    let mut z = start.as_slice().to_vec();
    let mut scores: Vec<f64> = (0..scorer.corners.len()).map(|i| scorer.corner_score(i, &z)).collect();
    let mut total: f64 = scores.iter().sum();
    let mut trace = vec![total];
    let mut evaluations = 1;
    let mut step = schedule.initial_step;
    let mut trial_scores = scores.clone();

    let mut exhausted = false;
    while step >= schedule.min_step && !exhausted {
        let mut accepted_any = false;
        for v in 0..n {
            let original = z[v];
            let mut best_move: Option<(f64, f64)> = None;
            for delta in [step, -step] {
                if evaluations >= schedule.max_evaluations {
                    exhausted = true;
                    break;
                }
                z[v] = original + delta;
                for &c in &scorer.incident[v] {
                    trial_scores[c] = scorer.corner_score(c, &z);
                }
                let candidate: f64 = trial_scores.iter().sum();
                evaluations += 1;
                for &c in &scorer.incident[v] {
                    trial_scores[c] = scores[c];
                }
                if candidate < best_move.map_or(total, |(_, f)| f) {
                    best_move = Some((delta, candidate));
                }
            }
            z[v] = original;
            if let Some((delta, candidate)) = best_move {
                z[v] = original + delta;
                for &c in &scorer.incident[v] {
                    scores[c] = scorer.corner_score(c, &z);
                    trial_scores[c] = scores[c];
                }
                total = candidate;
                accepted_any = true;
            }
            if exhausted {
                break;
            }
        }
        trace.push(total);
        if !accepted_any {
            step *= 0.5;
        }
    }
    if trace.last() != Some(&total) {
        trace.push(total);
    }
    Ok(HillClimbResult {
        depths: DepthVector::new(z).expect("finite depths"),
        fitness: total,
        evaluations,
        trace,
    })
}

/// Everything recorded about one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub final_fitness: f64,
    /// Fitness of the depths the input file carried, if any.
    pub target_fitness: Option<f64>,
    /// Normalized-scale depth error against the input depths, if any.
    pub target_rms: Option<f64>,
    pub target_negated: Option<bool>,
    pub evolved_fitness: f64,
    pub history: Vec<f64>,
    pub generations: usize,
    pub generations_run: usize,
    pub plateau_generation: usize,
    pub population: usize,
    pub mutation_rate: f64,
    pub init_range: f64,
    pub hill_climb: HillClimbSchedule,
    pub hill_climb_evaluations: usize,
    pub corners: usize,
    pub seed: u64,
    pub scale: f64,
    pub wall_time_ms: u64,
}

/// Full pipeline: normalize, score corners, evolve, refine, lift the
/// original sketch with the recovered depths (in sketch units).
///
/// Depths already present on `sketch` are ignored by the search and only
/// used to report target fitness and error.
pub fn reconstruct(sketch: &Wireframe, net: &Network, cfg: &GaConfig) -> Result<(Wireframe, ReconstructionReport), SearchError> {
    let started = Instant::now();
    cfg.validate()?;
    let (normalized, record) = sketch.normalize()?;
    let plane = normalized.project();
    let scorer = Scorer::new(&plane, net)?;
    if scorer.corners().is_empty() {
        return Err(SearchError::NoCorners);
    }
    let evolution = evolve(&scorer, cfg)?;
    let refined = hill_climb(&scorer, &evolution.best.depths, &cfg.hill_climb)?;

    let target = normalized.depths();
    let target_fitness = target.map(|d| scorer.fitness(d));
    let target_error: Option<AlignedError> = match target {
        Some(d) => Some(aligned_depth_error(&refined.depths, d)?),
        None => None,
    };
    let lifted = sketch.with_depths(refined.depths.map(|z| z / record.scale))?;

    let report = ReconstructionReport {
        final_fitness: refined.fitness,
        target_fitness,
        target_rms: target_error.map(|e| e.rms),
        target_negated: target_error.map(|e| e.negated),
        evolved_fitness: evolution.best.fitness.unwrap_or(f64::INFINITY),
        history: evolution.history,
        generations: cfg.generations,
        generations_run: evolution.generations_run,
        plateau_generation: evolution.plateau_generation,
        population: cfg.population,
        mutation_rate: cfg.mutation_rate,
        init_range: cfg.init_range,
        hill_climb: cfg.hill_climb.clone(),
        hill_climb_evaluations: refined.evaluations,
        corners: scorer.corners().len(),
        seed: cfg.seed,
        scale: record.scale,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    Ok((lifted, report))
}
