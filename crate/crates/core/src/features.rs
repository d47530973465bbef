//! Per-corner feature extraction.
//!
//! A corner contributes 16 values: three 3D angles, their three projected
//! counterparts, three 3D length ratios, three projected length ratios, the
//! parallelepiped volume spanned by the three 3D edge vectors and the three
//! parallelogram areas spanned by pairs of projected edge vectors.
//!
//! Edges are labelled `a, b, c` in order of decreasing projected length, so
//! the projected ratios `b/a, c/a, c/b` always lie in `(0, 1]`.

use thiserror::Error;

use crate::geom::{angle_from, cross2, cross3, dot2, dot3, norm2, norm3, sub2, Vec2, Vec3};
use crate::wireframe::{Corner, Wireframe};

pub const FEATURE_COUNT: usize = 16;

/// Identifies the layout produced by [`FeatureVector::to_array`]. Stored in
/// model and dataset files.
pub const FEATURE_ORDER_TAG: &str =
    "corner16:angles3d(ab,ac,bc),angles2d(ab,ac,bc),ratios3d(B/A,C/A,C/B),ratios2d(b/a,c/a,c/b),volume3d,areas2d(ab,ac,bc)";

/// Upper bound applied to 3D length ratios.
pub const RATIO_CLAMP: f64 = 10.0;

/// Shortest projected edge a corner may have.
pub const MIN_PROJECTED_EDGE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("corner at vertex {apex}: projected edge to vertex {end} has length {length:e}")]
    DegenerateEdge { apex: usize, end: usize, length: f64 },
    #[error("depth vector has {found} entries, wireframe has {expected} vertices")]
    DepthCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub angles_3d: [f64; 3],
    pub angles_2d: [f64; 3],
    pub ratios_3d: [f64; 3],
    pub ratios_2d: [f64; 3],
    pub volume: f64,
    pub areas_2d: [f64; 3],
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        out[0..3].copy_from_slice(&self.angles_3d);
        out[3..6].copy_from_slice(&self.angles_2d);
        out[6..9].copy_from_slice(&self.ratios_3d);
        out[9..12].copy_from_slice(&self.ratios_2d);
        out[12] = self.volume;
        out[13..16].copy_from_slice(&self.areas_2d);
        out
    }

    pub fn from_array(v: &[f64; FEATURE_COUNT]) -> Self {
        Self {
            angles_3d: [v[0], v[1], v[2]],
            angles_2d: [v[3], v[4], v[5]],
            ratios_3d: [v[6], v[7], v[8]],
            ratios_2d: [v[9], v[10], v[11]],
            volume: v[12],
            areas_2d: [v[13], v[14], v[15]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Orders the three far endpoints by decreasing projected edge length, ties
/// broken by ascending vertex index.
pub fn canonical_edge_order(w: &Wireframe, apex: usize, ends: [usize; 3]) -> [usize; 3] {
    let mut keyed = ends.map(|e| (w.projected_edge_length(apex, e), e));
    keyed.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    keyed.map(|(_, e)| e)
}

/// Features of `corner` when the sketch is lifted by `depths`.
pub fn compute_features(
    w: &Wireframe,
    corner: &Corner,
    depths: &[f64],
) -> Result<FeatureVector, FeatureError> {
    if depths.len() != w.vertex_count() {
        return Err(FeatureError::DepthCount {
            expected: w.vertex_count(),
            found: depths.len(),
        });
    }
    let origin = w.vertex(corner.apex);
    let mut edges = [[0.0; 2]; 3];
    for (slot, &end) in edges.iter_mut().zip(&corner.ends) {
        *slot = sub2(w.vertex(end), origin);
        let length = norm2(*slot);
        if !(length > MIN_PROJECTED_EDGE) {
            return Err(FeatureError::DegenerateEdge {
                apex: corner.apex,
                end,
                length,
            });
        }
    }
    let z0 = depths[corner.apex];
    let dz = corner.ends.map(|e| depths[e] - z0);
    Ok(corner_features(edges, dz))
}

/// Feature computation on raw edge vectors. `edges` are the projected edge
/// vectors (far endpoint minus apex) in canonical order and `dz` the matching
/// depth differences. Projected lengths must be nonzero.
pub fn corner_features(edges: [Vec2; 3], dz: [f64; 3]) -> FeatureVector {
    let e3: [Vec3; 3] = std::array::from_fn(|i| [edges[i][0], edges[i][1], dz[i]]);
    let len2 = edges.map(norm2);
    let len3 = e3.map(norm3);
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

    let angles_3d = PAIRS.map(|(i, j)| angle_from(dot3(e3[i], e3[j]), len3[i], len3[j]));
    let angles_2d = PAIRS.map(|(i, j)| angle_from(dot2(edges[i], edges[j]), len2[i], len2[j]));
    let ratios_3d = PAIRS.map(|(i, j)| (len3[j] / len3[i]).min(RATIO_CLAMP));
    let ratios_2d = PAIRS.map(|(i, j)| len2[j] / len2[i]);
    let volume = dot3(e3[0], cross3(e3[1], e3[2])).abs();
    let areas_2d = PAIRS.map(|(i, j)| cross2(edges[i], edges[j]).abs());

    FeatureVector {
        angles_3d,
        angles_2d,
        ratios_3d,
        ratios_2d,
        volume,
        areas_2d,
    }
}
