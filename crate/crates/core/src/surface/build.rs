//! Constructors for the five supported surface kinds.

use super::{SubdivisionInfo, SurfaceMesh, SurfaceParams};
use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::collections::BTreeMap;

/// Unit sphere triangulation by repeated midpoint subdivision of an
/// icosahedron, midpoints projected back to the sphere. Level `s` has
/// `10 * 4^s + 2` vertices. Old vertices keep their indices across levels, so
/// fields transfer between consecutive levels by midpoint prolongation.
pub fn sphere(radius: f64, subdivisions: u32) -> Result<SurfaceMesh> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Validation(format!("radius must be positive, got {radius}")));
    }
    if subdivisions > 8 {
        return Err(Error::Validation(format!(
            "subdivision level {subdivisions} would produce an excessive mesh"
        )));
    }
    let (positions, triangles, info) = icosphere(subdivisions);
    let positions: Vec<Vector3<f64>> = positions.into_iter().map(|p| radius * p).collect();
    let canonical: Vec<usize> = (0..positions.len()).collect();
    SurfaceMesh::from_parts(
        SurfaceParams::Sphere { radius, subdivisions },
        positions,
        triangles,
        canonical,
        info,
    )
}

/// Ellipsoid with semi-axes (a, b, c): the subdivided unit sphere scaled per
/// coordinate. Shares the sphere's index layout, so prolongation works too.
pub fn ellipsoid(a: f64, b: f64, c: f64, subdivisions: u32) -> Result<SurfaceMesh> {
    for (name, v) in [("a", a), ("b", b), ("c", c)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Validation(format!("semi-axis {name} must be positive, got {v}")));
        }
    }
    if subdivisions > 8 {
        return Err(Error::Validation(format!(
            "subdivision level {subdivisions} would produce an excessive mesh"
        )));
    }
    let (positions, triangles, info) = icosphere(subdivisions);
    let positions: Vec<Vector3<f64>> = positions
        .into_iter()
        .map(|p| Vector3::new(a * p.x, b * p.y, c * p.z))
        .collect();
    let canonical: Vec<usize> = (0..positions.len()).collect();
    SurfaceMesh::from_parts(
        SurfaceParams::Ellipsoid { a, b, c, subdivisions },
        positions,
        triangles,
        canonical,
        info,
    )
}

fn icosphere(subdivisions: u32) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>, Option<SubdivisionInfo>) {
    let t = 0.5 * (1.0 + 5.0_f64.sqrt());
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let mut positions: Vec<Vector3<f64>> = raw
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    let mut info = None;
    for _ in 0..subdivisions {
        let coarse_count = positions.len();
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut parents: Vec<(usize, usize)> = Vec::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let p = (positions[a] + positions[b]).normalize();
                    positions.push(p);
                    parents.push(key);
                    positions.len() - 1
                });
            }
            next.push([tri[0], mid[0], mid[2]]);
            next.push([tri[1], mid[1], mid[0]]);
            next.push([tri[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        triangles = next;
        info = Some(SubdivisionInfo {
            coarse_count,
            parents,
        });
    }
    (positions, triangles, info)
}

/// Torus of revolution embedded in 3-space: major circle radius `major_radius`
/// in the xy-plane, tube radius `minor_radius`, sampled on an
/// `n_major x n_minor` parameter grid. Closed without identifications since
/// the embedding is injective.
pub fn torus_of_revolution(
    major_radius: f64,
    minor_radius: f64,
    n_major: usize,
    n_minor: usize,
) -> Result<SurfaceMesh> {
    if !(major_radius > minor_radius && minor_radius > 0.0) {
        return Err(Error::Validation(format!(
            "need major_radius > minor_radius > 0, got {major_radius}, {minor_radius}"
        )));
    }
    if n_major < 3 || n_minor < 3 {
        return Err(Error::Validation(
            "torus grid needs at least 3 samples per direction".into(),
        ));
    }
    let mut positions = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = 2.0 * std::f64::consts::PI * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = 2.0 * std::f64::consts::PI * j as f64 / n_minor as f64;
            let ring = major_radius + minor_radius * v.cos();
            positions.push(Vector3::new(
                ring * u.cos(),
                ring * u.sin(),
                minor_radius * v.sin(),
            ));
        }
    }
    let at = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut triangles = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            let a = at(i, j);
            let b = at(i + 1, j);
            let c = at(i + 1, j + 1);
            let d = at(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let canonical: Vec<usize> = (0..positions.len()).collect();
    SurfaceMesh::from_parts(
        SurfaceParams::TorusOfRevolution {
            major_radius,
            minor_radius,
            n_major,
            n_minor,
        },
        positions,
        triangles,
        canonical,
        None,
    )
}

/// Square flat torus of the given side, `n x n` cells. The chart is the full
/// `(n+1) x (n+1)` grid with the far row and column folded onto the near ones,
/// giving `n^2` logical vertices and no boundary. Cell diagonals run along
/// (+1, +1), which keeps the triangulation symmetric under coordinate swap.
pub fn flat_torus(side: f64, n: usize) -> Result<SurfaceMesh> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::Validation(format!("side must be positive, got {side}")));
    }
    if n < 3 {
        return Err(Error::Validation("flat torus needs at least 3 cells per side".into()));
    }
    let h = side / n as f64;
    let mut positions = Vec::with_capacity((n + 1) * (n + 1));
    let mut canonical = Vec::with_capacity((n + 1) * (n + 1));
    for iy in 0..=n {
        for ix in 0..=n {
            positions.push(Vector3::new(ix as f64 * h, iy as f64 * h, 0.0));
            canonical.push((iy % n) * n + (ix % n));
        }
    }
    let g = |ix: usize, iy: usize| iy * (n + 1) + ix;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for iy in 0..n {
        for ix in 0..n {
            let p00 = g(ix, iy);
            let p10 = g(ix + 1, iy);
            let p11 = g(ix + 1, iy + 1);
            let p01 = g(ix, iy + 1);
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }
    SurfaceMesh::from_parts(
        SurfaceParams::FlatTorus { side, n },
        positions,
        triangles,
        canonical,
        None,
    )
}

/// Planar square `[-half_width, half_width]^2` with `n` cells per side and a
/// genuine boundary. Same diagonal convention as the flat torus.
pub fn planar_box(half_width: f64, n: usize) -> Result<SurfaceMesh> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::Validation(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    if n < 2 {
        return Err(Error::Validation("box needs at least 2 cells per side".into()));
    }
    let h = 2.0 * half_width / n as f64;
    let mut positions = Vec::with_capacity((n + 1) * (n + 1));
    for iy in 0..=n {
        for ix in 0..=n {
            positions.push(Vector3::new(
                -half_width + ix as f64 * h,
                -half_width + iy as f64 * h,
                0.0,
            ));
        }
    }
    let g = |ix: usize, iy: usize| iy * (n + 1) + ix;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for iy in 0..n {
        for ix in 0..n {
            triangles.push([g(ix, iy), g(ix + 1, iy), g(ix + 1, iy + 1)]);
            triangles.push([g(ix, iy), g(ix + 1, iy + 1), g(ix, iy + 1)]);
        }
    }
    let canonical: Vec<usize> = (0..positions.len()).collect();
    SurfaceMesh::from_parts(
        SurfaceParams::PlanarBox { half_width, n },
        positions,
        triangles,
        canonical,
        None,
    )
}

/// Transfers a logical vertex field from the mesh one subdivision level
/// coarser: inherited vertices copy their value, new vertices average their
/// parent edge endpoints.
pub fn prolong_field(fine: &SurfaceMesh, coarse_values: &[f64]) -> Result<Vec<f64>> {
    let info = fine.subdivision().ok_or_else(|| {
        Error::Validation("mesh carries no subdivision structure to prolong along".into())
    })?;
    if coarse_values.len() != info.coarse_count {
        return Err(Error::Validation(format!(
            "coarse field has {} values but the coarse level has {} vertices",
            coarse_values.len(),
            info.coarse_count
        )));
    }
    let mut out = Vec::with_capacity(fine.vertex_count());
    out.extend_from_slice(coarse_values);
    for &(a, b) in &info.parents {
        out.push(0.5 * (coarse_values[a] + coarse_values[b]));
    }
    debug_assert_eq!(out.len(), fine.vertex_count());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_counts_and_area() {
        for level in 0..=4u32 {
            let mesh = sphere(1.0, level).unwrap();
            assert_eq!(mesh.vertex_count(), 10 * 4usize.pow(level) + 2);
            assert!(mesh.is_closed());
        }
        let mesh = sphere(1.0, 4).unwrap();
        let area = mesh.total_area();
        let exact = 4.0 * std::f64::consts::PI;
        assert!((area - exact).abs() / exact < 0.01, "area {area}");
        assert!(mesh.h_max() <= 0.1, "h_max {}", mesh.h_max());
    }

    #[test]
    fn sphere_vertices_sit_on_sphere() {
        let mesh = sphere(2.5, 3).unwrap();
        for g in 0..mesh.geometric_count() {
            assert!((mesh.position(g).norm() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn subdivision_prefix_is_stable() {
        let coarse = sphere(1.0, 2).unwrap();
        let fine = sphere(1.0, 3).unwrap();
        let info = fine.subdivision().unwrap();
        assert_eq!(info.coarse_count, coarse.vertex_count());
        for v in 0..coarse.vertex_count() {
            assert!((coarse.position(v) - fine.position(v)).norm() < 1e-14);
        }
    }

    #[test]
    fn prolongation_is_exact_for_linear_indexing() {
        let fine = sphere(1.0, 2).unwrap();
        let info = fine.subdivision().unwrap();
        let coarse_values: Vec<f64> = (0..info.coarse_count).map(|i| i as f64).collect();
        let fine_values = prolong_field(&fine, &coarse_values).unwrap();
        assert_eq!(fine_values.len(), fine.vertex_count());
        for (k, &(a, b)) in info.parents.iter().enumerate() {
            assert_eq!(fine_values[info.coarse_count + k], 0.5 * (a as f64 + b as f64));
        }
    }

    #[test]
    fn flat_torus_is_closed_with_folded_count() {
        let mesh = flat_torus(1.0, 8).unwrap();
        assert_eq!(mesh.vertex_count(), 64);
        assert_eq!(mesh.geometric_count(), 81);
        assert!(mesh.is_closed());
        assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        assert!((mesh.h_max() - 2.0_f64.sqrt() / 8.0).abs() < 1e-12);
    }

    #[test]
    fn planar_box_has_boundary_ring() {
        let mesh = planar_box(2.0, 10).unwrap();
        assert_eq!(mesh.vertex_count(), 121);
        assert_eq!(mesh.boundary_vertices().len(), 40);
        assert!(!mesh.is_closed());
        assert!((mesh.total_area() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn torus_of_revolution_is_closed() {
        let mesh = torus_of_revolution(2.0, 0.5, 48, 16).unwrap();
        assert_eq!(mesh.vertex_count(), 48 * 16);
        assert!(mesh.is_closed());
        // Exact area 4 pi^2 R r; the chordal mesh approximates from below.
        let exact = 4.0 * std::f64::consts::PI.powi(2) * 2.0 * 0.5;
        assert!((mesh.total_area() - exact).abs() / exact < 0.02);
    }

    #[test]
    fn ellipsoid_scales_the_sphere() {
        let mesh = ellipsoid(1.0, 2.0, 3.0, 2).unwrap();
        for g in 0..mesh.geometric_count() {
            let p = mesh.position(g);
            let r = (p.x / 1.0).powi(2) + (p.y / 2.0).powi(2) + (p.z / 3.0).powi(2);
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(sphere(-1.0, 2).is_err());
        assert!(flat_torus(1.0, 2).is_err());
        assert!(planar_box(0.0, 4).is_err());
        assert!(torus_of_revolution(0.5, 1.0, 16, 16).is_err());
    }
}
