//! Reconstruction benchmark over the generated shape suite, plus the
//! population sweep against a zero-start hill-climb baseline.

use serde::{Deserialize, Serialize};

use crate::mlp::Network;
use crate::search::{hill_climb, reconstruct, GaConfig, Scorer, SearchError};
use crate::shapes::{random_view, ShapeKind};
use crate::wireframe::{DepthVector, Wireframe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub shapes: Vec<ShapeKind>,
    pub repeats: usize,
    pub seed: u64,
    /// Search settings for the per-shape table; its seed is replaced per run.
    pub ga: GaConfig,
    /// Normalized-scale rms at or below which a run counts as a success.
    pub success_threshold: f64,
    pub sweep_shape: ShapeKind,
    pub sweep_populations: Vec<usize>,
    pub sweep_generations: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            shapes: ShapeKind::ALL.to_vec(),
            repeats: 5,
            seed: 0,
            ga: GaConfig {
                population: 1000,
                generations: 200,
                ..GaConfig::default()
            },
            success_threshold: 0.1,
            sweep_shape: ShapeKind::House,
            sweep_populations: vec![250, 500, 1000, 2000],
            sweep_generations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub shape: ShapeKind,
    pub repeat: usize,
    pub view_seed: u64,
    pub ga_seed: u64,
    pub rms: f64,
    pub negated: bool,
    pub success: bool,
    pub final_fitness: f64,
    pub target_fitness: f64,
    pub plateau_generation: usize,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRow {
    pub shape: ShapeKind,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_plateau_generation: f64,
    pub mean_final_fitness: f64,
    pub mean_target_fitness: f64,
    pub mean_rms: f64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSeries {
    pub population: usize,
    /// Per-generation median (over repeats) of the GA's best fitness.
    pub median_history: Vec<f64>,
    /// Median over repeats of the final fitness after hill-climb refinement.
    pub median_final_fitness: f64,
    pub median_evolved_fitness: f64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub shape: ShapeKind,
    pub view_seed: u64,
    pub target_fitness: f64,
    pub baseline_final_fitness: f64,
    /// Baseline fitness at the start and after each hill-climb sweep.
    pub baseline_trace: Vec<f64>,
    pub series: Vec<PopulationSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub rows: Vec<ShapeRow>,
    pub runs: Vec<RunRecord>,
    pub sweep: SweepReport,
}

/// Mixes a base seed with run coordinates into an independent seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    // splitmix64 finalizer over a running combination
    let mut x = base;
    for &p in parts {
        x ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(x << 6).wrapping_add(x >> 2);
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn shape_index(kind: ShapeKind) -> u64 {
    ShapeKind::ALL.iter().position(|&k| k == kind).unwrap() as u64
}

/// Reconstructs `cfg.repeats` random views of each shape.
pub fn run_shape_table(net: &Network, cfg: &BenchmarkConfig) -> Result<(Vec<ShapeRow>, Vec<RunRecord>), SearchError> {
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &shape in &cfg.shapes {
        let mut shape_runs = Vec::with_capacity(cfg.repeats);
        for repeat in 0..cfg.repeats {
            let view_seed = derive_seed(cfg.seed, &[1, shape_index(shape), repeat as u64]);
            let ga_seed = derive_seed(cfg.seed, &[2, shape_index(shape), repeat as u64]);
            let target = random_view(shape, view_seed);
            let ga = GaConfig {
                seed: ga_seed,
                ..cfg.ga.clone()
            };
            let (_, report) = reconstruct(&target, net, &ga)?;
            let rms = report.target_rms.expect("generated shapes carry depths");
            shape_runs.push(RunRecord {
                shape,
                repeat,
                view_seed,
                ga_seed,
                rms,
                negated: report.target_negated.unwrap_or(false),
                success: rms <= cfg.success_threshold,
                final_fitness: report.final_fitness,
                target_fitness: report.target_fitness.expect("generated shapes carry depths"),
                plateau_generation: report.plateau_generation,
                wall_time_ms: report.wall_time_ms,
            });
        }
        let successes = shape_runs.iter().filter(|r| r.success).count();
        rows.push(ShapeRow {
            shape,
            runs: shape_runs.len(),
            successes,
            success_rate: successes as f64 / shape_runs.len().max(1) as f64,
            mean_plateau_generation: mean(shape_runs.iter().map(|r| r.plateau_generation as f64)),
            mean_final_fitness: mean(shape_runs.iter().map(|r| r.final_fitness)),
            mean_target_fitness: mean(shape_runs.iter().map(|r| r.target_fitness)),
            mean_rms: mean(shape_runs.iter().map(|r| r.rms)),
            wall_time_ms: shape_runs.iter().map(|r| r.wall_time_ms).sum(),
        });
        runs.extend(shape_runs);
    }
    Ok((rows, runs))
}

/// Seed and target wireframe of the population sweep.
pub fn sweep_view(cfg: &BenchmarkConfig) -> (u64, Wireframe) {
    let view_seed = derive_seed(cfg.seed, &[3, shape_index(cfg.sweep_shape)]);
    (view_seed, random_view(cfg.sweep_shape, view_seed))
}

/// GA at each population size (same view, `cfg.repeats` seeds each) against
/// a hill climb started from all-zero depths.
pub fn run_population_sweep(net: &Network, cfg: &BenchmarkConfig) -> Result<SweepReport, SearchError> {
    let (view_seed, target) = sweep_view(cfg);
    let (normalized, _) = target.normalize()?;
    let plane = normalized.project();
    let scorer = Scorer::new(&plane, net)?;
    let target_fitness = scorer.fitness(normalized.depths().expect("generated shapes carry depths"));
    let baseline = hill_climb(&scorer, &DepthVector::zeros(plane.vertex_count()), &cfg.ga.hill_climb)?;

    let mut series = Vec::new();
    for &population in &cfg.sweep_populations {
        let mut histories = Vec::new();
        let mut finals = Vec::new();
        let mut evolved = Vec::new();
        let mut wall = 0;
        for repeat in 0..cfg.repeats.max(1) {
            let ga = GaConfig {
                population,
                generations: cfg.sweep_generations,
                seed: derive_seed(cfg.seed, &[4, population as u64, repeat as u64]),
                ..cfg.ga.clone()
            };
            let (_, report) = reconstruct(&target, net, &ga)?;
            finals.push(report.final_fitness);
            evolved.push(report.evolved_fitness);
            histories.push(report.history);
            wall += report.wall_time_ms;
        }
        let len = histories.iter().map(Vec::len).min().unwrap_or(0);
        let median_history = (0..len)
            .map(|g| median(&histories.iter().map(|h| h[g]).collect::<Vec<_>>()))
            .collect();
        series.push(PopulationSeries {
            population,
            median_history,
            median_final_fitness: median(&finals),
            median_evolved_fitness: median(&evolved),
            wall_time_ms: wall,
        });
    }
    Ok(SweepReport {
        shape: cfg.sweep_shape,
        view_seed,
        target_fitness,
        baseline_final_fitness: baseline.fitness,
        baseline_trace: baseline.trace,
        series,
    })
}

pub fn run_benchmark(net: &Network, cfg: &BenchmarkConfig) -> Result<BenchmarkReport, SearchError> {
    let (rows, runs) = run_shape_table(net, cfg)?;
    let sweep = run_population_sweep(net, cfg)?;
    Ok(BenchmarkReport {
        config: cfg.clone(),
        rows,
        runs,
        sweep,
    })
}

impl BenchmarkReport {
    /// Plain-text table, one line per shape.
    pub fn table(&self) -> String {
        let mut out = String::from(
            "shape     runs  success  mean_plateau_gen  mean_final  mean_target  mean_rms  wall_ms\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<9} {:>4}  {:>6.0}%  {:>16.1}  {:>10.4}  {:>11.4}  {:>8.4}  {:>7}\n",
                r.shape.name(),
                r.runs,
                100.0 * r.success_rate,
                r.mean_plateau_generation,
                r.mean_final_fitness,
                r.mean_target_fitness,
                r.mean_rms,
                r.wall_time_ms
            ));
        }
        out
    }

    /// CSV of median best fitness per generation, one column per population.
    pub fn population_series_csv(&self) -> String {
        let mut out = String::from("generation");
        for s in &self.sweep.series {
            out.push_str(&format!(",pop_{}", s.population));
        }
        out.push('\n');
        let len = self.sweep.series.iter().map(|s| s.median_history.len()).min().unwrap_or(0);
        for g in 0..len {
            out.push_str(&g.to_string());
            for s in &self.sweep.series {
                out.push_str(&format!(",{}", s.median_history[g]));
            }
            out.push('\n');
        }
        out
    }

    /// CSV of the zero-start hill-climb baseline, one row per sweep.
    pub fn baseline_series_csv(&self) -> String {
        let mut out = String::from("sweep,fitness\n");
        for (i, f) in self.sweep.baseline_trace.iter().enumerate() {
            out.push_str(&format!("{i},{f}\n"));
        }
        out
    }
}
