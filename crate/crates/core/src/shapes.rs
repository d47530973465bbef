//! Seeded generators for the benchmark shape suite: target solids under a
//! random orientation, returned as wireframes carrying their true depths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{lift, random_rotation, unit_prism_vertices, PRISM_EDGES};
use crate::geom::Vec3;
use crate::wireframe::Wireframe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    /// Unit triangular prism.
    Prism,
    /// Unit cube.
    Box,
    /// Two boxes glued into an L and extruded: 12 vertices, 18 edges.
    LBlock,
    /// Triangular prism roof on a box: 10 vertices, 17 edges, four
    /// vertices of degree 4.
    House,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Prism, ShapeKind::Box, ShapeKind::LBlock, ShapeKind::House];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Prism => "prism",
            ShapeKind::Box => "box",
            ShapeKind::LBlock => "l-block",
            ShapeKind::House => "house",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Vertices (centered on their centroid) and edges of the solid.
    pub fn solid(self) -> (Vec<Vec3>, Vec<[usize; 2]>) {
        let (points, edges) = match self {
            ShapeKind::Prism => (unit_prism_vertices().to_vec(), PRISM_EDGES.to_vec()),
            ShapeKind::Box => extrude(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 1.0),
            ShapeKind::LBlock => extrude(
                &[[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]],
                0.5,
            ),
            ShapeKind::House => {
                let (mut points, mut edges) = extrude(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], 1.0);
                // ridge above the top face (vertices 4..8), running along x
                points.push([0.0, 0.5, 1.5]);
                points.push([1.0, 0.5, 1.5]);
                edges.extend_from_slice(&[[8, 9], [4, 8], [7, 8], [5, 9], [6, 9]]);
                (points, edges)
            }
        };
        (center(points), edges)
    }
}

/// Prism over a polygon in the xy plane: bottom ring, top ring at `height`,
/// and vertical edges.
fn extrude(profile: &[[f64; 2]], height: f64) -> (Vec<Vec3>, Vec<[usize; 2]>) {
    let n = profile.len();
    let mut points: Vec<Vec3> = profile.iter().map(|p| [p[0], p[1], 0.0]).collect();
    points.extend(profile.iter().map(|p| [p[0], p[1], height]));
    let mut edges = Vec::with_capacity(3 * n);
    for i in 0..n {
        edges.push([i, (i + 1) % n]);
    }
    for i in 0..n {
        edges.push([n + i, n + (i + 1) % n]);
    }
    for i in 0..n {
        edges.push([i, n + i]);
    }
    (points, edges)
}

fn center(points: Vec<Vec3>) -> Vec<Vec3> {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in &points {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    points.into_iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect()
}

/// Views rejected by [`random_view`]: projected edges shorter than this
/// fraction of the longest projected edge, or vertices closer than it.
pub const MIN_VIEW_RATIO: f64 = 0.15;

const MAX_VIEW_ATTEMPTS: usize = 10_000;

/// `kind` under a random orientation whose projection is well conditioned
/// (see [`MIN_VIEW_RATIO`]). Deterministic per seed.
pub fn random_view(kind: ShapeKind, seed: u64) -> Wireframe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_view_with(kind, &mut rng)
}

pub fn random_view_with(kind: ShapeKind, rng: &mut impl Rng) -> Wireframe {
    let (points, edges) = kind.solid();
    for _ in 0..MAX_VIEW_ATTEMPTS {
        let rotation = random_rotation(rng);
        let Ok(w) = lift(&points, &rotation, &edges) else {
            continue;
        };
        if well_conditioned(&w) {
            return w;
        }
    }
    panic!("no well-conditioned view of {} found", kind.name());
}

fn well_conditioned(w: &Wireframe) -> bool {
    let longest = w.longest_projected_edge();
    let min_len = MIN_VIEW_RATIO * longest;
    let edges_ok = w.edges().iter().all(|&[a, b]| w.projected_edge_length(a, b) >= min_len);
    let n = w.vertex_count();
    let spread_ok = (0..n).all(|a| ((a + 1)..n).all(|b| w.projected_edge_length(a, b) >= min_len));
    edges_ok && spread_ok
}
