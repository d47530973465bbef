//! Training data from randomly oriented unit triangular prisms.
//!
//! Every prism corner is featurized against the prism's own projection with
//! its apex depth moved by each value on a displacement grid; the row target
//! is the magnitude of that displacement.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{compute_features, FeatureError, FEATURE_COUNT, FEATURE_ORDER_TAG};
use crate::geom::{mat_vec, quaternion_to_matrix, Mat3, Vec3};
use crate::mlp::{MlpError, TrainingSet};
use crate::wireframe::{DepthVector, Wireframe, WireframeError};

/// Largest displacement magnitude on the grid.
pub const GRID_EXTENT: f64 = 0.45;
/// Prisms whose projection has an edge shorter than this are resampled.
pub const MIN_TRAINING_EDGE: f64 = 1e-6;
/// Grid size that yields 126 rows per prism.
pub const DEFAULT_GRID: usize = 21;
pub const CORNERS_PER_PRISM: usize = 6;

const MAX_PRISM_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatagenError {
    #[error("grid size must be odd and at least 1, got {0}")]
    InvalidGrid(usize),
    #[error("at least one prism is required")]
    NoPrisms,
    #[error("prism {prism}: no non-degenerate orientation after {attempts} attempts")]
    Exhausted { prism: usize, attempts: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Wireframe(#[from] WireframeError),
    #[error("malformed dataset: {0}")]
    Syntax(String),
    #[error("dataset feature order {found:?} does not match extractor order {expected:?}")]
    FeatureOrder { found: String, expected: String },
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    quaternion_to_matrix([b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin()])
}

/// Vertices of the unit prism before rotation: an equilateral triangle of
/// side 1 at each end, ends 1 apart, centroid at the origin.
pub fn unit_prism_vertices() -> [Vec3; 6] {
    let r = 1.0 / 3f64.sqrt();
    let tri = |k: usize| {
        let angle = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / 3.0;
        [r * angle.cos(), r * angle.sin()]
    };
    std::array::from_fn(|i| {
        let [x, y] = tri(i % 3);
        [x, y, if i < 3 { -0.5 } else { 0.5 }]
    })
}

pub const PRISM_EDGES: [[usize; 2]; 9] = [
    [0, 1],
    [1, 2],
    [2, 0],
    [3, 4],
    [4, 5],
    [5, 3],
    [0, 3],
    [1, 4],
    [2, 5],
];

/// Rotates a 3D vertex set and splits it into sketch positions and depths.
pub fn lift(points: &[Vec3], rotation: &Mat3, edges: &[[usize; 2]]) -> Result<Wireframe, WireframeError> {
    let rotated: Vec<Vec3> = points.iter().map(|&p| mat_vec(rotation, p)).collect();
    let vertices = rotated.iter().map(|p| [p[0], p[1]]).collect();
    let depths = DepthVector::new(rotated.iter().map(|p| p[2]).collect())?;
    Wireframe::new(vertices, edges.to_vec(), Some(depths))
}

/// Unit prism under a random orientation drawn from `rng`. Orientations
/// whose projection has an edge shorter than `min_edge` are redrawn; the
/// second value counts the redraws.
pub fn random_prism_with(rng: &mut impl Rng, min_edge: f64) -> Option<(Wireframe, usize)> {
    let base = unit_prism_vertices();
    for attempt in 0..MAX_PRISM_ATTEMPTS {
        let rotation = random_rotation(rng);
        if let Ok(w) = lift(&base, &rotation, &PRISM_EDGES) {
            let shortest = PRISM_EDGES
                .iter()
                .map(|&[a, b]| w.projected_edge_length(a, b))
                .fold(f64::INFINITY, f64::min);
            if shortest >= min_edge {
                return Some((w, attempt));
            }
        }
    }
    None
}

/// Randomly oriented unit prism with depths attached. Deterministic per seed.
pub fn random_prism(seed: u64) -> Wireframe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_prism_with(&mut rng, crate::wireframe::COINCIDENT_TOLERANCE)
        .expect("a random orientation projects non-degenerately")
        .0
}

/// `n` evenly spaced displacements over `[-0.45, 0.45]`, always including 0.
pub fn displacement_grid(n: usize) -> Result<Vec<f64>, DatagenError> {
    if n == 0 || n % 2 == 0 {
        return Err(DatagenError::InvalidGrid(n));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let half = (n - 1) as f64;
    Ok((0..n)
        .map(|i| GRID_EXTENT * (2.0 * i as f64 - half) / half)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub set: TrainingSet,
    /// Orientations rejected for near-degenerate projections.
    pub discarded: usize,
    pub seed: u64,
    pub prisms: usize,
    pub grid_len: usize,
}

/// Rows for one prism: for each corner, for each grid value. The prism is
/// first normalized exactly as sketches are before reconstruction, so
/// displacements are measured against a unit longest projected edge.
pub fn prism_rows(prism: &Wireframe, grid: &[f64]) -> Result<Vec<([f64; FEATURE_COUNT], f64)>, DatagenError> {
    let (prism, _) = prism.normalize()?;
    let depths = prism.depths().expect("generated prisms carry depths");
    let sketch = prism.project();
    let mut rows = Vec::with_capacity(CORNERS_PER_PRISM * grid.len());
    let mut displaced = depths.as_slice().to_vec();
    for corner in sketch.enumerate_corners() {
        for &x in grid {
            displaced[corner.apex] = depths[corner.apex] + x;
            let f = compute_features(&sketch, &corner, &displaced)?;
            rows.push((f.to_array(), x.abs()));
        }
        displaced[corner.apex] = depths[corner.apex];
    }
    Ok(rows)
}

/// Builds `n_prisms x 6 x grid.len()` rows. Prism `i` draws its orientation
/// from stream `i` of a generator seeded with `seed`, so generation runs in
/// parallel while the output order stays fixed.
pub fn build_training_set(n_prisms: usize, grid: &[f64], seed: u64) -> Result<GeneratedData, DatagenError> {
    if n_prisms == 0 {
        return Err(DatagenError::NoPrisms);
    }
    if grid.is_empty() {
        return Err(DatagenError::InvalidGrid(0));
    }
    let per_prism: Vec<(Vec<([f64; FEATURE_COUNT], f64)>, usize)> = (0..n_prisms)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (prism, discarded) = random_prism_with(&mut rng, MIN_TRAINING_EDGE).ok_or(DatagenError::Exhausted {
                prism: i,
                attempts: MAX_PRISM_ATTEMPTS,
            })?;
            Ok((prism_rows(&prism, grid)?, discarded))
        })
        .collect::<Result<_, DatagenError>>()?;

    let rows_per_prism = CORNERS_PER_PRISM * grid.len();
    let mut features = Vec::with_capacity(n_prisms * rows_per_prism);
    let mut targets = Vec::with_capacity(n_prisms * rows_per_prism);
    let mut groups = Vec::with_capacity(n_prisms * rows_per_prism);
    let mut discarded = 0;
    for (i, (rows, d)) in per_prism.into_iter().enumerate() {
        discarded += d;
        for (f, t) in rows {
            features.push(f);
            targets.push(t);
            groups.push(i);
        }
    }
    Ok(GeneratedData {
        set: TrainingSet::new(features, targets, groups)?,
        discarded,
        seed,
        prisms: n_prisms,
        grid_len: grid.len(),
    })
}

/// Dataset text: a `#` header carrying the feature order and generation
/// parameters, then one comma-separated row of 16 features and the target.
pub fn write_dataset(data: &GeneratedData) -> String {
    let mut out = String::new();
    writeln!(out, "# feature_order={FEATURE_ORDER_TAG}").unwrap();
    writeln!(
        out,
        "# seed={} prisms={} grid={} rows_per_group={} discarded={}",
        data.seed,
        data.prisms,
        data.grid_len,
        CORNERS_PER_PRISM * data.grid_len,
        data.discarded
    )
    .unwrap();
    for (f, t) in data.set.features().iter().zip(data.set.targets()) {
        for v in f {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{t}").unwrap();
    }
    out
}

/// Parses dataset text. Rows are grouped by the header's `rows_per_group`
/// (one group per prism); without it every row forms its own group.
pub fn read_dataset(text: &str) -> Result<TrainingSet, DatagenError> {
    let mut rows_per_group: Option<usize> = None;
    let mut saw_order = false;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(order) = meta.strip_prefix("feature_order=") {
                if order != FEATURE_ORDER_TAG {
                    return Err(DatagenError::FeatureOrder {
                        found: order.to_string(),
                        expected: FEATURE_ORDER_TAG.to_string(),
                    });
                }
                saw_order = true;
            } else {
                for kv in meta.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("rows_per_group=") {
                        rows_per_group = Some(
                            v.parse()
                                .ok()
                                .filter(|&n: &usize| n > 0)
                                .ok_or_else(|| DatagenError::Syntax(format!("bad rows_per_group {v:?}")))?,
                        );
                    }
                }
            }
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| DatagenError::Syntax(format!("line {}: {e}", lineno + 1)))?;
        if values.len() != FEATURE_COUNT + 1 {
            return Err(DatagenError::Syntax(format!(
                "line {}: expected {} values, found {}",
                lineno + 1,
                FEATURE_COUNT + 1,
                values.len()
            )));
        }
        let mut f = [0.0; FEATURE_COUNT];
        f.copy_from_slice(&values[..FEATURE_COUNT]);
        features.push(f);
        targets.push(values[FEATURE_COUNT]);
    }
    if !saw_order {
        return Err(DatagenError::Syntax("missing feature_order header".into()));
    }
    let per = rows_per_group.unwrap_or(1);
    let groups = (0..features.len()).map(|i| i / per).collect();
    Ok(TrainingSet::new(features, targets, groups)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{norm3, sub2};

    fn distance3(w: &Wireframe, a: usize, b: usize) -> f64 {
        let d = w.depths().unwrap();
        let p = sub2(w.vertex(a), w.vertex(b));
        norm3([p[0], p[1], d[a] - d[b]])
    }

    #[test]
    fn prism_topology_and_edge_lengths() {
        for seed in 0..20 {
            let w = random_prism(seed);
            assert_eq!(w.vertex_count(), 6);
            assert_eq!(w.edges().len(), 9);
            assert!((0..6).all(|v| w.degree(v) == 3));
            for &[a, b] in w.edges() {
                assert!((distance3(&w, a, b) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let base = unit_prism_vertices();
        let w = random_prism(42);
        for a in 0..6 {
            for b in 0..6 {
                let d0 = norm3([base[a][0] - base[b][0], base[a][1] - base[b][1], base[a][2] - base[b][2]]);
                assert!((distance3(&w, a, b) - d0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seeds_give_different_orientations() {
        let a = random_prism(1);
        let b = random_prism(2);
        assert_ne!(a.vertices(), b.vertices());
        assert_eq!(random_prism(1), a);
    }

    #[test]
    fn grid_values() {
        assert_eq!(displacement_grid(3).unwrap(), vec![-0.45, 0.0, 0.45]);
        assert_eq!(displacement_grid(1).unwrap(), vec![0.0]);
        let g = displacement_grid(21).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[10], 0.0);
        assert_eq!(g[0], -0.45);
        assert_eq!(g[20], 0.45);
        for i in 0..21 {
            assert_eq!(g[i], -g[20 - i]);
        }
        assert!(displacement_grid(4).is_err());
        assert!(displacement_grid(0).is_err());
    }

    #[test]
    fn row_counts_and_zero_targets() {
        let grid = displacement_grid(5).unwrap();
        let data = build_training_set(3, &grid, 7).unwrap();
        assert_eq!(data.set.len(), 3 * 6 * 5);
        let zeros = data.set.targets().iter().filter(|&&t| t == 0.0).count();
        assert_eq!(zeros * 5, data.set.len());
        // grid index 2 is x = 0
        for (i, &t) in data.set.targets().iter().enumerate() {
            assert_eq!(t == 0.0, i % 5 == 2);
        }
        assert!(data.set.features().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn displacing_back_restores_features() {
        let prism = random_prism(8);
        let (prism, _) = prism.normalize().unwrap();
        let sketch = prism.project();
        let mut z = prism.depths().unwrap().as_slice().to_vec();
        for corner in sketch.enumerate_corners() {
            let before = compute_features(&sketch, &corner, &z).unwrap().to_array();
            z[corner.apex] += 0.37;
            z[corner.apex] -= 0.37;
            let after = compute_features(&sketch, &corner, &z).unwrap().to_array();
            for k in 0..FEATURE_COUNT {
                assert!((before[k] - after[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mirrored_displacements_share_targets() {
        let grid = displacement_grid(5).unwrap();
        let data = build_training_set(1, &grid, 3).unwrap();
        let t = data.set.targets();
        for corner in 0..6 {
            let row = |k: usize| corner * 5 + k;
            assert_eq!(t[row(0)], t[row(4)]);
            assert_eq!(t[row(1)], t[row(3)]);
        }
    }

    #[test]
    fn dataset_is_reproducible_and_round_trips() {
        let grid = displacement_grid(3).unwrap();
        let a = build_training_set(4, &grid, 99).unwrap();
        let b = build_training_set(4, &grid, 99).unwrap();
        assert_eq!(a, b);
        let text = write_dataset(&a);
        assert_eq!(text, write_dataset(&b));
        let back = read_dataset(&text).unwrap();
        assert_eq!(back, a.set);
    }

    #[test]
    fn dataset_reader_guards() {
        assert!(matches!(read_dataset("1,2\n"), Err(DatagenError::Syntax(_))));
        assert!(matches!(
            read_dataset("# feature_order=other\n"),
            Err(DatagenError::FeatureOrder { .. })
        ));
        let row = vec!["0.5"; 16].join(",") + ",0.1\n";
        let text = format!("# feature_order={FEATURE_ORDER_TAG}\n{row}");
        assert_eq!(read_dataset(&text).unwrap().len(), 1);
        let bad = format!("# feature_order={FEATURE_ORDER_TAG}\n0.5,0.1\n");
        assert!(matches!(read_dataset(&bad), Err(DatagenError::Syntax(_))));
    }
}
