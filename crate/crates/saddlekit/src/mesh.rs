//! Structured tetrahedral meshes of axis-aligned boxes.
//!
//! Each grid cell is split into six tetrahedra sharing the cell's main
//! diagonal (Kuhn subdivision), which reproduces the degree-of-freedom counts
//! of the structured meshes used in the experiments. Vertex, cell, and facet
//! orderings are deterministic so that repeated runs are bit-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("subdivisions must be at least 1 in every direction, got {0:?}")]
    InvalidSubdivisions([usize; 3]),
    #[error("extent intervals must have positive length, got {0:?}")]
    InvalidExtents([[f64; 2]; 3]),
    #[error("boundary facet with centroid ({0}, {1}, {2}) matches no tag predicate")]
    UncoveredFacet(f64, f64, f64),
    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),
    #[error("duplicate boundary tag `{0}`")]
    DuplicateTag(String),
}

/// Name of one boundary region; tags partition the boundary facets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionTag {
    pub name: String,
}

/// A boundary predicate, evaluated at facet centroids. First match wins in
/// declaration order.
pub struct BoundaryRule {
    pub name: String,
    pub predicate: Box<dyn Fn([f64; 3]) -> bool + Send + Sync>,
}

impl BoundaryRule {
    pub fn new(name: &str, predicate: impl Fn([f64; 3]) -> bool + Send + Sync + 'static) -> Self {
        BoundaryRule { name: name.to_string(), predicate: Box::new(predicate) }
    }
}

/// Boundary triangle: three vertex indices plus the region it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 3],
    pub tag: usize,
}

/// Structured tetrahedral mesh of an axis-aligned box.
#[derive(Debug, Clone)]
pub struct BoxMesh {
    extents: [[f64; 2]; 3],
    subdivisions: [usize; 3],
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    boundary_facets: Vec<BoundaryFacet>,
    tags: Vec<RegionTag>,
}

/// The six axis permutations of the Kuhn split, each with the parity of the
/// permutation. Odd ones get two vertices swapped to keep volumes positive.
const KUHN_PERMUTATIONS: [([usize; 3], bool); 6] = [
    ([0, 1, 2], true),
    ([0, 2, 1], false),
    ([1, 0, 2], false),
    ([1, 2, 0], true),
    ([2, 0, 1], true),
    ([2, 1, 0], false),
];

impl BoxMesh {
    /// Builds the Kuhn subdivision of the box `extents` with `subdivisions`
    /// cells per direction. All boundary facets start untagged (tag 0 with
    /// name `boundary`).
    pub fn build(extents: [[f64; 2]; 3], subdivisions: [usize; 3]) -> Result<BoxMesh, MeshError> {
        if subdivisions.contains(&0) {
            return Err(MeshError::InvalidSubdivisions(subdivisions));
        }
        if extents.iter().any(|[a, b]| !a.is_finite() || !b.is_finite() || b <= a) {
            return Err(MeshError::InvalidExtents(extents));
        }
        let [n1, n2, n3] = subdivisions;
        let dims = [n1 + 1, n2 + 1, n3 + 1];
        let vid = |i: usize, j: usize, k: usize| (k * dims[1] + j) * dims[0] + i;

        let mut vertices = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let f = |idx: usize, n: usize, [a, b]: [f64; 2]| {
                        a + (b - a) * (idx as f64) / (n as f64)
                    };
                    vertices.push([
                        f(i, n1, extents[0]),
                        f(j, n2, extents[1]),
                        f(k, n3, extents[2]),
                    ]);
                }
            }
        }

        let mut tets = Vec::with_capacity(6 * n1 * n2 * n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    let corner = [i, j, k];
                    for (perm, even) in KUHN_PERMUTATIONS {
                        let mut p = corner;
                        let mut tet = [vid(p[0], p[1], p[2]), 0, 0, 0];
                        for (step, axis) in perm.into_iter().enumerate() {
                            p[axis] += 1;
                            tet[step + 1] = vid(p[0], p[1], p[2]);
                        }
                        if !even {
                            tet.swap(1, 2);
                        }
                        tets.push(tet);
                    }
                }
            }
        }

        let boundary_facets = extract_boundary(&tets);
        Ok(BoxMesh {
            extents,
            subdivisions,
            vertices,
            tets,
            boundary_facets,
            tags: vec![RegionTag { name: "boundary".to_string() }],
        })
    }

    /// Re-tags every boundary facet by evaluating `rules` at its centroid.
    /// Every facet must match some rule; the first matching rule wins.
    pub fn tag_boundary(mut self, rules: &[BoundaryRule]) -> Result<BoxMesh, MeshError> {
        let mut names: Vec<String> = Vec::new();
        for r in rules {
            if names.contains(&r.name) {
                return Err(MeshError::DuplicateTag(r.name.clone()));
            }
            names.push(r.name.clone());
        }
        for facet in &mut self.boundary_facets {
            let c = centroid(&self.vertices, facet.vertices);
            let tag = rules.iter().position(|r| (r.predicate)(c));
            match tag {
                Some(t) => facet.tag = t,
                None => return Err(MeshError::UncoveredFacet(c[0], c[1], c[2])),
            }
        }
        self.tags = rules.iter().map(|r| RegionTag { name: r.name.clone() }).collect();
        Ok(self)
    }

    pub fn extents(&self) -> [[f64; 2]; 3] {
        self.extents
    }

    pub fn subdivisions(&self) -> [usize; 3] {
        self.subdivisions
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn tags(&self) -> &[RegionTag] {
        &self.tags
    }

    pub fn tag_index(&self, name: &str) -> Result<usize, MeshError> {
        self.tags
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| MeshError::UnknownTag(name.to_string()))
    }

    pub fn box_volume(&self) -> f64 {
        self.extents.iter().map(|[a, b]| b - a).product()
    }

    pub fn diameter(&self) -> f64 {
        self.extents
            .iter()
            .map(|[a, b]| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Signed volume of tet `t` under its stored vertex order.
    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t];
        signed_volume(
            self.vertices[a],
            self.vertices[b],
            self.vertices[c],
            self.vertices[d],
        )
    }

    pub fn facet_area(&self, facet: &BoundaryFacet) -> f64 {
        let [a, b, c] = facet.vertices;
        triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Plain-text vertex/cell listing for debugging.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]);
        }
        let _ = writeln!(out, "tets {}", self.tets.len());
        for t in &self.tets {
            let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        let _ = writeln!(out, "boundary_facets {}", self.boundary_facets.len());
        for f in &self.boundary_facets {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                f.vertices[0], f.vertices[1], f.vertices[2], self.tags[f.tag].name
            );
        }
        out
    }
}

fn centroid(vertices: &[[f64; 3]], tri: [usize; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for v in tri {
        for (ci, xi) in c.iter_mut().zip(vertices[v].iter()) {
            *ci += xi / 3.0;
        }
    }
    c
}

fn signed_volume(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]))
        / 6.0
}

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

/// Facets that belong to exactly one tet. Returned sorted by vertex triple.
fn extract_boundary(tets: &[[usize; 4]]) -> Vec<BoundaryFacet> {
    let mut count: BTreeMap<[usize; 3], u32> = BTreeMap::new();
    for tet in tets {
        for f in tet_faces(tet) {
            *count.entry(f).or_insert(0) += 1;
        }
    }
    count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .map(|(vertices, _)| BoundaryFacet { vertices, tag: 0 })
        .collect()
}

fn tet_faces(tet: &[usize; 4]) -> [[usize; 3]; 4] {
    let mut faces = [
        [tet[1], tet[2], tet[3]],
        [tet[0], tet[2], tet[3]],
        [tet[0], tet[1], tet[3]],
        [tet[0], tet[1], tet[2]],
    ];
    for f in &mut faces {
        f.sort_unstable();
    }
    faces
}
