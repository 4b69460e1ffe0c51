//! Triangulated surfaces and their discrete differential operators.
//!
//! A mesh distinguishes *geometric* vertices (chart positions used for all
//! geometry) from *logical* vertices (the unknowns fields live on). The two
//! coincide except on the flat torus, where the periodic seam duplicates a row
//! and column of grid vertices; `canonical` folds the copies onto their
//! logical representative and the assembled operators act on logical vertices.

pub mod build;
pub mod distance;
pub mod operators;

use crate::error::{Error, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Sphere,
    Ellipsoid,
    TorusOfRevolution,
    FlatTorus,
    PlanarBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SurfaceParams {
    Sphere {
        radius: f64,
        subdivisions: u32,
    },
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
        subdivisions: u32,
    },
    TorusOfRevolution {
        major_radius: f64,
        minor_radius: f64,
        n_major: usize,
        n_minor: usize,
    },
    FlatTorus {
        side: f64,
        n: usize,
    },
    PlanarBox {
        half_width: f64,
        n: usize,
    },
}

impl SurfaceParams {
    pub fn kind(&self) -> SurfaceKind {
        match self {
            SurfaceParams::Sphere { .. } => SurfaceKind::Sphere,
            SurfaceParams::Ellipsoid { .. } => SurfaceKind::Ellipsoid,
            SurfaceParams::TorusOfRevolution { .. } => SurfaceKind::TorusOfRevolution,
            SurfaceParams::FlatTorus { .. } => SurfaceKind::FlatTorus,
            SurfaceParams::PlanarBox { .. } => SurfaceKind::PlanarBox,
        }
    }

    /// Stable textual identity used to tie fields to the mesh they live on.
    pub fn ref_id(&self) -> String {
        match self {
            SurfaceParams::Sphere { radius, subdivisions } => {
                format!("sphere(r={radius},sub={subdivisions})")
            }
            SurfaceParams::Ellipsoid { a, b, c, subdivisions } => {
                format!("ellipsoid(a={a},b={b},c={c},sub={subdivisions})")
            }
            SurfaceParams::TorusOfRevolution { major_radius, minor_radius, n_major, n_minor } => {
                format!("torus(R={major_radius},r={minor_radius},nu={n_major},nv={n_minor})")
            }
            SurfaceParams::FlatTorus { side, n } => format!("flat_torus(side={side},n={n})"),
            SurfaceParams::PlanarBox { half_width, n } => format!("box(hw={half_width},n={n})"),
        }
    }
}

/// Mapping from the mesh one subdivision step coarser into this mesh: the
/// coarse vertices are the prefix `0..coarse_count`, and vertex
/// `coarse_count + i` is the projected midpoint of coarse edge `parents[i]`.
#[derive(Debug, Clone)]
pub struct SubdivisionInfo {
    pub coarse_count: usize,
    pub parents: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    params: SurfaceParams,
    positions: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    /// Geometric vertex -> logical vertex.
    canonical: Vec<usize>,
    /// Logical vertex -> a geometric representative.
    representative: Vec<usize>,
    logical_count: usize,
    boundary: Vec<bool>,
    /// Logical corner ids per triangle, precomputed.
    corner_logical: Vec<[usize; 3]>,
    incident: Vec<Vec<usize>>,
    /// Deduplicated logical edges (a < b) with geometric length.
    edges: Vec<(usize, usize, f64)>,
    h_max: f64,
    total_area: f64,
    subdivision: Option<SubdivisionInfo>,
}

impl SurfaceMesh {
    /// Assembles the derived structure and checks manifoldness, orientability
    /// and (for closed kinds) the absence of boundary.
    pub fn from_parts(
        params: SurfaceParams,
        positions: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        canonical: Vec<usize>,
        subdivision: Option<SubdivisionInfo>,
    ) -> Result<Self> {
        let geo_count = positions.len();
        if canonical.len() != geo_count {
            return Err(Error::Mesh("canonical map length mismatch".into()));
        }
        if triangles.is_empty() {
            return Err(Error::Mesh("mesh has no triangles".into()));
        }
        let logical_count = canonical.iter().copied().max().map_or(0, |m| m + 1);
        for t in &triangles {
            for &c in t {
                if c >= geo_count {
                    return Err(Error::Mesh(format!("triangle references vertex {c}")));
                }
            }
        }

        let mut representative = vec![usize::MAX; logical_count];
        for (g, &l) in canonical.iter().enumerate() {
            if representative[l] == usize::MAX {
                representative[l] = g;
            }
        }
        if representative.iter().any(|&r| r == usize::MAX) {
            return Err(Error::Mesh("logical vertex without geometric copy".into()));
        }

        let corner_logical: Vec<[usize; 3]> = triangles
            .iter()
            .map(|t| [canonical[t[0]], canonical[t[1]], canonical[t[2]]])
            .collect();

        // Manifold and orientability audit on logical directed edges: with a
        // consistent winding every directed edge appears at most once, and an
        // undirected edge at most twice.
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (t, corners) in corner_logical.iter().enumerate() {
            for k in 0..3 {
                let a = corners[k];
                let b = corners[(k + 1) % 3];
                if a == b {
                    return Err(Error::Mesh(format!("triangle {t} has a collapsed edge")));
                }
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        let mut undirected: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();
        for ((a, b), count) in &directed {
            if *count > 1 {
                return Err(Error::Mesh(format!(
                    "directed edge {a}->{b} appears {count} times; mesh is not consistently oriented"
                )));
            }
            let key = (*a.min(b), *a.max(b));
            undirected.entry(key).or_insert((0, f64::INFINITY)).0 += 1;
        }
        for ((a, b), (count, _)) in &undirected {
            if *count > 2 {
                return Err(Error::Mesh(format!(
                    "edge ({a},{b}) is shared by more than two triangles"
                )));
            }
        }

        // Edge lengths from geometry; seam copies keep the shortest chart copy.
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let ga = tri[k];
                let gb = tri[(k + 1) % 3];
                let la = canonical[ga];
                let lb = canonical[gb];
                let key = (la.min(lb), la.max(lb));
                let len = (positions[ga] - positions[gb]).norm();
                if !(len > 0.0) {
                    return Err(Error::Mesh(format!("triangle {t} has a zero-length edge")));
                }
                let entry = undirected.get_mut(&key).expect("edge recorded above");
                entry.1 = entry.1.min(len);
            }
        }

        let mut boundary = vec![false; logical_count];
        let mut has_boundary = false;
        for ((a, b), (count, _)) in &undirected {
            if *count == 1 {
                boundary[*a] = true;
                boundary[*b] = true;
                has_boundary = true;
            }
        }
        let closed_kind = matches!(
            params.kind(),
            SurfaceKind::Sphere
                | SurfaceKind::Ellipsoid
                | SurfaceKind::TorusOfRevolution
                | SurfaceKind::FlatTorus
        );
        if closed_kind && has_boundary {
            return Err(Error::Mesh(format!(
                "{:?} must be closed but the mesh has boundary edges",
                params.kind()
            )));
        }

        let mut h_max = 0.0_f64;
        let mut total_area = 0.0;
        for tri in &triangles {
            let p0 = positions[tri[0]];
            let p1 = positions[tri[1]];
            let p2 = positions[tri[2]];
            h_max = h_max
                .max((p1 - p0).norm())
                .max((p2 - p1).norm())
                .max((p0 - p2).norm());
            total_area += 0.5 * (p1 - p0).cross(&(p2 - p0)).norm();
        }

        let mut incident = vec![Vec::new(); logical_count];
        for (t, corners) in corner_logical.iter().enumerate() {
            for &c in corners {
                if !incident[c].contains(&t) {
                    incident[c].push(t);
                }
            }
        }

        let edges: Vec<(usize, usize, f64)> = undirected
            .into_iter()
            .map(|((a, b), (_, len))| (a, b, len))
            .collect();

        Ok(SurfaceMesh {
            params,
            positions,
            triangles,
            canonical,
            representative,
            logical_count,
            boundary,
            corner_logical,
            incident,
            edges,
            h_max,
            total_area,
            subdivision,
        })
    }

    pub fn kind(&self) -> SurfaceKind {
        self.params.kind()
    }

    pub fn params(&self) -> &SurfaceParams {
        &self.params
    }

    /// Stable textual identity used to tie fields to the mesh they live on.
    pub fn ref_id(&self) -> String {
        self.params.ref_id()
    }

    /// Number of logical vertices: the dimension fields live in.
    pub fn vertex_count(&self) -> usize {
        self.logical_count
    }

    pub fn geometric_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn position(&self, geometric: usize) -> Vector3<f64> {
        self.positions[geometric]
    }

    /// Position of a logical vertex through its representative chart copy.
    pub fn logical_position(&self, logical: usize) -> Vector3<f64> {
        self.positions[self.representative[logical]]
    }

    pub fn canonical(&self, geometric: usize) -> usize {
        self.canonical[geometric]
    }

    pub fn corner_logical(&self, triangle: usize) -> [usize; 3] {
        self.corner_logical[triangle]
    }

    pub fn corner_positions(&self, triangle: usize) -> [Vector3<f64>; 3] {
        let t = self.triangles[triangle];
        [
            self.positions[t[0]],
            self.positions[t[1]],
            self.positions[t[2]],
        ]
    }

    pub fn incident_triangles(&self, logical: usize) -> &[usize] {
        &self.incident[logical]
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_boundary(&self, logical: usize) -> bool {
        self.boundary[logical]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.logical_count)
            .filter(|&v| self.boundary[v])
            .collect()
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.logical_count)
            .filter(|&v| !self.boundary[v])
            .collect()
    }

    pub fn is_closed(&self) -> bool {
        !self.boundary.iter().any(|&b| b)
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn subdivision(&self) -> Option<&SubdivisionInfo> {
        self.subdivision.as_ref()
    }

    /// Wavefront OBJ of the chart geometry (seam copies stay duplicated).
    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {:?}, {} vertices, {} triangles", self.kind(), self.positions.len(), self.triangles.len())?;
        for p in &self.positions {
            writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceGeodesic {
    pub name: String,
    pub polyline: Vec<Vector3<f64>>,
    /// Exact closed length, not the polyline approximation.
    pub length: f64,
}

/// Closed reference geodesics of the exactly known kinds: the three coordinate
/// great circles of a sphere, the two coordinate loops of a flat torus.
pub fn geodesic_reference(mesh: &SurfaceMesh) -> Result<Vec<ReferenceGeodesic>> {
    const SAMPLES: usize = 256;
    match *mesh.params() {
        SurfaceParams::Sphere { radius, .. } => {
            let mut out = Vec::new();
            for (name, f) in [
                ("equator-xy", (|t: f64| Vector3::new(t.cos(), t.sin(), 0.0)) as fn(f64) -> Vector3<f64>),
                ("meridian-xz", |t: f64| Vector3::new(t.cos(), 0.0, t.sin())),
                ("meridian-yz", |t: f64| Vector3::new(0.0, t.cos(), t.sin())),
            ] {
                let polyline = (0..=SAMPLES)
                    .map(|i| {
                        let t = 2.0 * std::f64::consts::PI * i as f64 / SAMPLES as f64;
                        radius * f(t)
                    })
                    .collect();
                out.push(ReferenceGeodesic {
                    name: name.to_string(),
                    polyline,
                    length: 2.0 * std::f64::consts::PI * radius,
                });
            }
            Ok(out)
        }
        SurfaceParams::FlatTorus { side, .. } => {
            let mk = |horizontal: bool| {
                (0..=SAMPLES)
                    .map(|i| {
                        let t = side * i as f64 / SAMPLES as f64;
                        if horizontal {
                            Vector3::new(t, 0.0, 0.0)
                        } else {
                            Vector3::new(0.0, t, 0.0)
                        }
                    })
                    .collect::<Vec<_>>()
            };
            Ok(vec![
                ReferenceGeodesic {
                    name: "loop-x".to_string(),
                    polyline: mk(true),
                    length: side,
                },
                ReferenceGeodesic {
                    name: "loop-y".to_string(),
                    polyline: mk(false),
                    length: side,
                },
            ])
        }
        _ => Err(Error::Validation(format!(
            "no exact reference geodesics for {:?}",
            mesh.kind()
        ))),
    }
}
