//! Wireframe graph model: validated vertex/edge sets with optional depths,
//! orthographic projection, normalization, corner enumeration, depth error
//! metrics and text I/O (JSON wireframes, OBJ polylines).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::canonical_edge_order;
use crate::geom::{norm2, sub2, Vec2};

/// Two sketch vertices closer than this are considered coincident.
pub const COINCIDENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireframeError {
    #[error("malformed wireframe text: {0}")]
    Syntax(String),
    #[error("wireframe has no vertices")]
    Empty,
    #[error("vertex {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("edge {edge} references vertex {vertex}, but there are only {count} vertices")]
    DanglingEdge { edge: usize, vertex: usize, count: usize },
    #[error("edge {edge} connects vertex {vertex} to itself")]
    SelfLoop { edge: usize, vertex: usize },
    #[error("edge {edge} duplicates the edge between vertices {a} and {b}")]
    DuplicateEdge { edge: usize, a: usize, b: usize },
    #[error("wireframe is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("vertices {a} and {b} share the same 2D position")]
    CoincidentVertices { a: usize, b: usize },
    #[error("depth count {found} does not match vertex count {expected}")]
    DepthCount { expected: usize, found: usize },
    #[error("depth {index} is not finite")]
    NonFiniteDepth { index: usize },
    #[error("some vertices carry a z coordinate and some do not")]
    PartialDepths,
    #[error("wireframe has no depths attached")]
    MissingDepths,
    #[error("wireframe is degenerate: it has no edge of nonzero length")]
    Degenerate,
}

impl WireframeError {
    /// Stable short name of the error category.
    pub fn category(&self) -> &'static str {
        match self {
            WireframeError::Syntax(_) => "syntax",
            WireframeError::Empty => "empty",
            WireframeError::NonFiniteCoordinate { .. } => "non-finite-coordinate",
            WireframeError::DanglingEdge { .. } => "dangling-edge",
            WireframeError::SelfLoop { .. } => "self-loop",
            WireframeError::DuplicateEdge { .. } => "duplicate-edge",
            WireframeError::Disconnected { .. } => "disconnected",
            WireframeError::CoincidentVertices { .. } => "coincident-vertices",
            WireframeError::DepthCount { .. } => "depth-count",
            WireframeError::NonFiniteDepth { .. } => "non-finite-depth",
            WireframeError::PartialDepths => "partial-depths",
            WireframeError::MissingDepths => "missing-depths",
            WireframeError::Degenerate => "degenerate",
        }
    }
}

/// One depth per vertex. All values are finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DepthVector(Vec<f64>);

impl DepthVector {
    pub fn new(values: Vec<f64>) -> Result<Self, WireframeError> {
        if let Some(index) = values.iter().position(|z| !z.is_finite()) {
            return Err(WireframeError::NonFiniteDepth { index });
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Applies `f` to every entry. Panics in debug builds if `f` produces a
    /// non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = self.0.iter().map(|&z| f(z)).collect();
        debug_assert!(values.iter().all(|z| z.is_finite()));
        Self(values)
    }
}

impl Deref for DepthVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A vertex together with three incident edges, identified by the far
/// endpoints of those edges in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Corner {
    pub apex: usize,
    pub ends: [usize; 3],
}

/// A connected straight-edge graph in the sketch plane, optionally lifted to
/// 3D by a depth per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Wireframe {
    vertices: Vec<Vec2>,
    edges: Vec<[usize; 2]>,
    depths: Option<DepthVector>,
    adjacency: Vec<Vec<usize>>,
}

impl Wireframe {
    /// Builds a wireframe, checking every graph invariant.
    pub fn new(
        vertices: Vec<Vec2>,
        edges: Vec<[usize; 2]>,
        depths: Option<DepthVector>,
    ) -> Result<Self, WireframeError> {
        let n = vertices.len();
        if n == 0 {
            return Err(WireframeError::Empty);
        }
        if let Some(index) = vertices
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(WireframeError::NonFiniteCoordinate { index });
        }
        if let Some(d) = &depths {
            if d.len() != n {
                return Err(WireframeError::DepthCount {
                    expected: n,
                    found: d.len(),
                });
            }
        }

        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for (i, &[a, b]) in edges.iter().enumerate() {
            for v in [a, b] {
                if v >= n {
                    return Err(WireframeError::DanglingEdge {
                        edge: i,
                        vertex: v,
                        count: n,
                    });
                }
            }
            if a == b {
                return Err(WireframeError::SelfLoop { edge: i, vertex: a });
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(WireframeError::DuplicateEdge {
                    edge: i,
                    a: key.0,
                    b: key.1,
                });
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        let components = count_components(&adjacency);
        if components > 1 {
            return Err(WireframeError::Disconnected { components });
        }

        for a in 0..n {
            for b in (a + 1)..n {
                if norm2(sub2(vertices[a], vertices[b])) <= COINCIDENT_TOLERANCE {
                    return Err(WireframeError::CoincidentVertices { a, b });
                }
            }
        }

        Ok(Self {
            vertices,
            edges,
            depths,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn vertex(&self, index: usize) -> Vec2 {
        self.vertices[index]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn depths(&self) -> Option<&DepthVector> {
        self.depths.as_ref()
    }

    /// Sorted neighbor list of `vertex`.
    pub fn neighbors(&self, vertex: usize) -> &[usize] {
        &self.adjacency[vertex]
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.adjacency[vertex].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|list| list.binary_search(&b).is_ok())
    }

    /// Same graph with `depths` attached (replacing any existing ones).
    pub fn with_depths(&self, depths: DepthVector) -> Result<Self, WireframeError> {
        if depths.len() != self.vertex_count() {
            return Err(WireframeError::DepthCount {
                expected: self.vertex_count(),
                found: depths.len(),
            });
        }
        Ok(Self {
            depths: Some(depths),
            ..self.clone()
        })
    }

    /// Orthographic projection onto the sketch plane: drops the depths.
    pub fn project(&self) -> Self {
        Self {
            depths: None,
            ..self.clone()
        }
    }

    /// 2D centroid of the vertices.
    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    pub fn projected_edge_length(&self, a: usize, b: usize) -> f64 {
        norm2(sub2(self.vertices[b], self.vertices[a]))
    }

    pub fn longest_projected_edge(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| self.projected_edge_length(a, b))
            .fold(0.0, f64::max)
    }

    /// Translates the sketch so its centroid sits at the origin and scales it
    /// so the longest projected edge has unit length. Depths, when present,
    /// are scaled by the same factor.
    pub fn normalize(&self) -> Result<(Self, ScaleRecord), WireframeError> {
        let longest = self.longest_projected_edge();
        if !(longest > 0.0) {
            return Err(WireframeError::Degenerate);
        }
        let shift = self.centroid();
        let scale = 1.0 / longest;
        let record = ScaleRecord { shift, scale };
        let vertices = self
            .vertices
            .iter()
            .map(|p| [(p[0] - shift[0]) * scale, (p[1] - shift[1]) * scale])
            .collect();
        let depths = self.depths.as_ref().map(|d| d.map(|z| z * scale));
        Ok((
            Self {
                vertices,
                depths,
                ..self.clone()
            },
            record,
        ))
    }

    /// Every 3-edge combination at every vertex of degree >= 3, ordered by
    /// ascending apex and then by neighbor combination.
    pub fn enumerate_corners(&self) -> Vec<Corner> {
        let mut corners = Vec::new();
        for apex in 0..self.vertex_count() {
            let nbrs = &self.adjacency[apex];
            let d = nbrs.len();
            for i in 0..d {
                for j in (i + 1)..d {
                    for k in (j + 1)..d {
                        let ends = canonical_edge_order(self, apex, [nbrs[i], nbrs[j], nbrs[k]]);
                        corners.push(Corner { apex, ends });
                    }
                }
            }
        }
        corners
    }

    /// Serializes to the JSON wireframe format.
    pub fn to_json(&self) -> String {
        let file = WireframeFile {
            vertices: self
                .vertices
                .iter()
                .enumerate()
                .map(|(i, p)| VertexRecord {
                    x: p[0],
                    y: p[1],
                    z: self.depths.as_ref().map(|d| d[i]),
                })
                .collect(),
            edges: self.edges.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("wireframe serializes");
        text.push('\n');
        text
    }

    /// Wavefront OBJ text: one `v` line per vertex and one `l` line per edge.
    pub fn to_obj(&self) -> Result<String, WireframeError> {
        let depths = self.depths.as_ref().ok_or(WireframeError::MissingDepths)?;
        let mut out = String::new();
        for (p, z) in self.vertices.iter().zip(depths.iter()) {
            writeln!(out, "v {} {} {}", p[0], p[1], z).unwrap();
        }
        for &[a, b] in &self.edges {
            writeln!(out, "l {} {}", a + 1, b + 1).unwrap();
        }
        Ok(out)
    }
}

fn count_components(adjacency: &[Vec<usize>]) -> usize {
    let mut visited = vec![false; adjacency.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..adjacency.len() {
        if visited[start] {
            continue;
        }
        components += 1;
        visited[start] = true;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &u in &adjacency[v] {
                if !visited[u] {
                    visited[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    components
}

/// Translation and scale applied by [`Wireframe::normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub shift: Vec2,
    pub scale: f64,
}

impl ScaleRecord {
    /// Maps a normalized wireframe back to the original sketch frame.
    pub fn restore(&self, w: &Wireframe) -> Wireframe {
        let vertices = w
            .vertices
            .iter()
            .map(|p| {
                [
                    p[0] / self.scale + self.shift[0],
                    p[1] / self.scale + self.shift[1],
                ]
            })
            .collect();
        let depths = w.depths.as_ref().map(|d| d.map(|z| z / self.scale));
        Wireframe {
            vertices,
            depths,
            ..w.clone()
        }
    }

    pub fn apply_to_depths(&self, depths: &DepthVector) -> DepthVector {
        depths.map(|z| z * self.scale)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexRecord {
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireframeFile {
    vertices: Vec<VertexRecord>,
    edges: Vec<[usize; 2]>,
}

/// Parses the JSON wireframe format.
pub fn parse_wireframe(text: &str) -> Result<Wireframe, WireframeError> {
    let file: WireframeFile =
        serde_json::from_str(text).map_err(|e| WireframeError::Syntax(e.to_string()))?;
    let with_z = file.vertices.iter().filter(|v| v.z.is_some()).count();
    let depths = if with_z == 0 {
        None
    } else if with_z == file.vertices.len() {
        Some(DepthVector::new(
            file.vertices.iter().map(|v| v.z.unwrap()).collect(),
        )?)
    } else {
        return Err(WireframeError::PartialDepths);
    };
    let vertices = file.vertices.iter().map(|v| [v.x, v.y]).collect();
    Wireframe::new(vertices, file.edges, depths)
}

/// Reads the subset of OBJ written by [`Wireframe::to_obj`]: `v x y z`
/// vertices and `l` polylines. Other statements are ignored.
pub fn parse_obj(text: &str) -> Result<Wireframe, WireframeError> {
    let mut vertices = Vec::new();
    let mut depths = Vec::new();
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let bad = |what: &str| WireframeError::Syntax(format!("line {}: {what}", lineno + 1));
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("bad vertex coordinate"))?;
                if coords.len() < 3 {
                    return Err(bad("vertex needs x y z"));
                }
                vertices.push([coords[0], coords[1]]);
                depths.push(coords[2]);
            }
            Some("l") => {
                let idx: Vec<usize> = parts
                    .map(|s| s.split('/').next().unwrap_or(s).parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad("bad line index"))?;
                if idx.len() < 2 || idx.contains(&0) {
                    return Err(bad("line needs at least two 1-based indices"));
                }
                for pair in idx.windows(2) {
                    edges.push([pair[0] - 1, pair[1] - 1]);
                }
            }
            _ => {}
        }
    }
    Wireframe::new(vertices, edges, Some(DepthVector::new(depths)?))
}

/// Depth error modulo a global shift and a global reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlignedError {
    pub rms: f64,
    /// True when the reflected candidate matched better.
    pub negated: bool,
}

pub fn aligned_depth_error(
    candidate: &[f64],
    target: &[f64],
) -> Result<AlignedError, WireframeError> {
    if candidate.len() != target.len() {
        return Err(WireframeError::DepthCount {
            expected: target.len(),
            found: candidate.len(),
        });
    }
    if target.is_empty() {
        return Ok(AlignedError {
            rms: 0.0,
            negated: false,
        });
    }
    let n = target.len() as f64;
    let target_mean = target.iter().sum::<f64>() / n;
    let candidate_mean = candidate.iter().sum::<f64>() / n;
    let rms_for = |sign: f64| {
        let ss: f64 = candidate
            .iter()
            .zip(target)
            .map(|(&c, &t)| {
                let d = sign * (c - candidate_mean) - (t - target_mean);
                d * d
            })
            .sum();
        (ss / n).sqrt()
    };
    let direct = rms_for(1.0);
    let reflected = rms_for(-1.0);
    Ok(if reflected < direct {
        AlignedError {
            rms: reflected,
            negated: true,
        }
    } else {
        AlignedError {
            rms: direct,
            negated: false,
        }
    })
}
