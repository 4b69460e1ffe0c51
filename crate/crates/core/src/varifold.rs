//! Diffuse-interface diagnostics: level set extraction, varifold masses in
//! geodesic balls, density and almost-monotonicity ratios, junction
//! classification on the level-set network, and the enhanced curvature norm
//! of the level-set family.

use crate::energy::Field;
use crate::error::{Error, Result};
use crate::potential::{interface_constants, Potential};
use crate::surface::distance::graph_distances;
use crate::surface::operators::{vertex_gradient_sq, DiscreteOperators};
use crate::surface::SurfaceMesh;
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, Clone)]
pub struct Polyline {
    pub points: Vec<Vector3<f64>>,
    pub closed: bool,
}

#[derive(Debug, Clone)]
pub struct LevelSetCurves {
    pub polylines: Vec<Polyline>,
    pub total_length: f64,
    pub level: f64,
}

/// Marching triangles with linear interpolation on edges. Crossings are keyed
/// by logical edges, so curves close correctly across chart seams; recorded
/// positions come from the first chart that meets each crossing.
pub fn extract_level_set(u: &Field, mesh: &SurfaceMesh, t: f64) -> Result<LevelSetCurves> {
    if !(t.abs() < 1.0) {
        return Err(Error::Validation(format!(
            "level must satisfy |t| < 1, got {t}"
        )));
    }
    if u.values().len() != mesh.vertex_count() {
        return Err(Error::Validation("field does not match mesh".into()));
    }
    // The extraction assumes no vertex sits exactly on the level; nudge the
    // level (documented behavior), repeating in the measure-zero event that
    // the nudged value collides again.
    let mut level = t;
    for _ in 0..64 {
        if u.values().iter().all(|&v| v != level) {
            break;
        }
        level += 1e-12;
    }

    type EdgeKey = (usize, usize);
    let mut positions: BTreeMap<EdgeKey, Vector3<f64>> = BTreeMap::new();
    // (key_a, key_b, segment length)
    let mut segments: Vec<(EdgeKey, EdgeKey, f64)> = Vec::new();

    for tri in 0..mesh.triangle_count() {
        let l = mesh.corner_logical(tri);
        let p = mesh.corner_positions(tri);
        let mut hits: Vec<(EdgeKey, Vector3<f64>)> = Vec::new();
        for k in 0..3 {
            let a = k;
            let b = (k + 1) % 3;
            let (ua, ub) = (u.values()[l[a]], u.values()[l[b]]);
            if (ua - level) * (ub - level) < 0.0 {
                let s = (level - ua) / (ub - ua);
                let key = (l[a].min(l[b]), l[a].max(l[b]));
                hits.push((key, p[a] + s * (p[b] - p[a])));
            }
        }
        match hits.len() {
            0 => {}
            2 => {
                let len = (hits[1].1 - hits[0].1).norm();
                for (key, pos) in &hits {
                    positions.entry(*key).or_insert(*pos);
                }
                segments.push((hits[0].0, hits[1].0, len));
            }
            n => {
                return Err(Error::Degenerate(format!(
                    "triangle {tri} crossed the level {n} times; field degenerate at level {level}"
                )))
            }
        }
    }

    let total_length: f64 = segments.iter().map(|s| s.2).sum();

    // Edge-key adjacency; interior crossings touch two triangles.
    let mut at_key: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (i, (a, b, _)) in segments.iter().enumerate() {
        at_key.entry(*a).or_default().push(i);
        at_key.entry(*b).or_default().push(i);
    }
    for (key, segs) in &at_key {
        if segs.len() > 2 {
            return Err(Error::Degenerate(format!(
                "crossing on edge {key:?} is shared by {} triangles",
                segs.len()
            )));
        }
        if mesh.is_closed() && segs.len() != 2 {
            return Err(Error::Degenerate(format!(
                "level curve ends at edge {key:?} on a closed mesh"
            )));
        }
    }

    // Chain segments into polylines, deterministically by segment index.
    let mut visited = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if visited[start] {
            continue;
        }
        // Walk backward to the chain end (or once around a loop).
        let mut first = start;
        let mut entry_key = segments[start].0;
        loop {
            let prev = at_key[&entry_key]
                .iter()
                .copied()
                .find(|&s| s != first && !visited[s]);
            let Some(prev) = prev else { break };
            if prev == start {
                break; // closed loop
            }
            entry_key = other_end(&segments[prev], entry_key);
            first = prev;
        }
        // Walk forward from `first`, beginning at entry_key.
        let mut chain_keys = vec![entry_key];
        let mut cur = first;
        let mut key = entry_key;
        loop {
            visited[cur] = true;
            key = other_end(&segments[cur], key);
            chain_keys.push(key);
            let next = at_key[&key].iter().copied().find(|&s| !visited[s]);
            match next {
                Some(s) => cur = s,
                None => break,
            }
        }
        let closed = chain_keys.len() > 2 && chain_keys.first() == chain_keys.last();
        let mut points: Vec<Vector3<f64>> = chain_keys.iter().map(|k| positions[k]).collect();
        if closed {
            points.pop();
        }
        polylines.push(Polyline { points, closed });
    }

    Ok(LevelSetCurves {
        polylines,
        total_length,
        level,
    })
}

fn other_end(seg: &((usize, usize), (usize, usize), f64), key: (usize, usize)) -> (usize, usize) {
    if seg.0 == key {
        seg.1
    } else {
        seg.0
    }
}

impl LevelSetCurves {
    /// CSV rows `curve_id,x,y,z`; closed curves do not repeat their first
    /// point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "curve_id,x,y,z")?;
        for (id, line) in self.polylines.iter().enumerate() {
            for p in &line.points {
                writeln!(w, "{id},{:.17e},{:.17e},{:.17e}", p.x, p.y, p.z)?;
            }
        }
        Ok(())
    }
}

/// Diffuse varifold mass `integral of eps |grad u|^2` over the graph-distance
/// ball of radius `r` about a vertex. A radius beyond the mesh diameter is
/// legal and returns the total mass with a logged warning.
pub fn mass_in_ball(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    center: usize,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Validation(format!("ball radius must be positive, got {r}")));
    }
    let dist = graph_distances(mesh, center)?;
    let d_max = dist.iter().cloned().fold(0.0_f64, f64::max);
    if r > d_max {
        log::warn!("ball radius {r} exceeds mesh diameter {d_max:.3}; returning total mass");
    }
    let gsq = vertex_gradient_sq(mesh, ops, u.values());
    let eps = u.epsilon();
    Ok(dist
        .iter()
        .zip(gsq.iter().zip(&ops.mass))
        .filter(|(&d, _)| d <= r)
        .map(|(_, (&g, &m))| eps * m * g)
        .sum())
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub center: usize,
    pub center_position: Vector3<f64>,
    pub radii: Vec<f64>,
    pub mass_in_ball: Vec<f64>,
    /// Theta = mass / (2 r sigma): 1 on a single multiplicity-one line, 2 at
    /// a transverse crossing.
    pub ratio: Vec<f64>,
    /// Same mass normalized by the paper-style half constant instead.
    pub ratio_h0: Vec<f64>,
    /// `e^{m r} E_eps(B_r) / r`; almost nondecreasing in r near interfaces.
    pub monotonicity_ratio: Vec<f64>,
}

impl DensityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,mass,ratio,ratio_h0,monotonicity_ratio")?;
        for i in 0..self.radii.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.radii[i],
                self.mass_in_ball[i],
                self.ratio[i],
                self.ratio_h0[i],
                self.monotonicity_ratio[i]
            )?;
        }
        Ok(())
    }
}

/// Density and monotonicity profile about a vertex. `m` weights the
/// almost-monotonicity exponential (0 on flat domains, order sup |curvature|
/// otherwise).
pub fn density_ratio(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
    center: usize,
    radii: &[f64],
    m: f64,
) -> Result<DensityReport> {
    if radii.is_empty() {
        return Err(Error::Validation("need at least one radius".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) || radii[0] <= 0.0 {
        return Err(Error::Validation(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    let constants = interface_constants(p, 1e-10)?;
    let dist = graph_distances(mesh, center)?;
    let gsq = vertex_gradient_sq(mesh, ops, u.values());
    let eps = u.epsilon();

    let mut mass = Vec::with_capacity(radii.len());
    let mut ratio = Vec::with_capacity(radii.len());
    let mut ratio_h0 = Vec::with_capacity(radii.len());
    let mut monotonicity = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut vmass = 0.0;
        let mut energy_in_ball = 0.0;
        for i in 0..mesh.vertex_count() {
            if dist[i] <= r {
                vmass += eps * ops.mass[i] * gsq[i];
                energy_in_ball +=
                    ops.mass[i] * (0.5 * eps * gsq[i] + p.w(u.values()[i]) / eps);
            }
        }
        mass.push(vmass);
        ratio.push(vmass / (2.0 * r * constants.sigma));
        ratio_h0.push(vmass / (2.0 * r * constants.h0));
        monotonicity.push((m * r).exp() * energy_in_ball / r);
    }

    Ok(DensityReport {
        center,
        center_position: mesh.logical_position(center),
        radii: radii.to_vec(),
        mass_in_ball: mass,
        ratio,
        ratio_h0,
        monotonicity_ratio: monotonicity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum JunctionVerdict {
    /// Two rays with opposite tangents: one smooth strand through the probe.
    Regular,
    /// Four rays pairing into two opposite-tangent pairs: two strands
    /// crossing transversally. Pairing is by ray index, headings in radians.
    TransverseCrossing {
        pairing: [(usize, usize); 2],
        headings: Vec<f64>,
    },
    /// Any other exit pattern, with the ray count.
    Other(usize),
}

/// Opposite-pairing slack: `|v_i + v_j| < 0.15` accepts discrete tangent
/// noise but rejects 120-degree triple junctions, where the sum has norm 1.
const PAIRING_TOL: f64 = 0.15;

/// Classify the level-set geometry around `p` from the rays that exit the
/// probe ball of radius `r_probe`.
pub fn classify_junction(
    curves: &LevelSetCurves,
    p: Vector3<f64>,
    r_probe: f64,
) -> Result<JunctionVerdict> {
    if !(r_probe > 0.0) {
        return Err(Error::Validation("probe radius must be positive".into()));
    }
    let mut rays: Vec<Vector3<f64>> = Vec::new();
    for line in &curves.polylines {
        let pts = &line.points;
        let n = pts.len();
        if n < 2 {
            continue;
        }
        let m = if line.closed { n } else { n - 1 };
        for i in 0..m {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let (da, db) = ((a - p).norm(), (b - p).norm());
            if (da < r_probe) != (db < r_probe) {
                // Outward tangent at the ball exit.
                let dir = if db > da { b - a } else { a - b };
                let nm = dir.norm();
                if nm > 0.0 {
                    rays.push(dir / nm);
                }
            }
        }
    }
    if rays.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} level-set rays exit the probe ball around ({:.3}, {:.3}, {:.3})",
            rays.len(),
            p.x,
            p.y,
            p.z
        )));
    }
    match rays.len() {
        2 => {
            if (rays[0] + rays[1]).norm() < PAIRING_TOL {
                Ok(JunctionVerdict::Regular)
            } else {
                Ok(JunctionVerdict::Other(2))
            }
        }
        4 => {
            // Greedy opposite matching: best pair first, then the remainder.
            let mut best = (0, 1, f64::INFINITY);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let s = (rays[i] + rays[j]).norm();
                    if s < best.2 {
                        best = (i, j, s);
                    }
                }
            }
            let rest: Vec<usize> = (0..4).filter(|&k| k != best.0 && k != best.1).collect();
            let s2 = (rays[rest[0]] + rays[rest[1]]).norm();
            if best.2 < PAIRING_TOL && s2 < PAIRING_TOL {
                let headings = rays.iter().map(|v| v.y.atan2(v.x)).collect();
                Ok(JunctionVerdict::TransverseCrossing {
                    pairing: [(best.0, best.1), (rest[0], rest[1])],
                    headings,
                })
            } else {
                Ok(JunctionVerdict::Other(4))
            }
        }
        n => Ok(JunctionVerdict::Other(n)),
    }
}

/// Enhanced curvature norm of the level-set family at each vertex:
/// `|A| = |Hess_u tau| / |grad u|` with tau the level-set tangent, combining
/// the level curve's curvature with the tangential logarithmic derivative of
/// |grad u|. Undefined (None) where |grad u| <= threshold (default
/// `1e-3 / eps`) or where the 1-ring cannot support a quadratic fit.
pub fn enhanced_sff_norm(u: &Field, mesh: &SurfaceMesh) -> Result<Vec<Option<f64>>> {
    if u.values().len() != mesh.vertex_count() {
        return Err(Error::Validation("field does not match mesh".into()));
    }
    let threshold = 1e-3 / u.epsilon();
    let mut out = vec![None; mesh.vertex_count()];
    for v in 0..mesh.vertex_count() {
        out[v] = fit_vertex(u, mesh, v).and_then(|(g, hm)| {
            let gn = g.norm();
            if gn <= threshold {
                return None;
            }
            let tau = Vector2::new(-g.y, g.x) / gn;
            Some((hm * tau).norm() / gn)
        });
    }
    Ok(out)
}

/// Least-squares quadratic in the vertex tangent plane over the 1-ring.
/// Returns the in-plane gradient and Hessian, or None when underdetermined.
fn fit_vertex(
    u: &Field,
    mesh: &SurfaceMesh,
    v: usize,
) -> Option<(Vector2<f64>, nalgebra::Matrix2<f64>)> {
    // Collect chart-consistent relative neighbor offsets and an area-weighted
    // normal from the incident triangles.
    let mut rel: BTreeMap<usize, Vector3<f64>> = BTreeMap::new();
    let mut normal = Vector3::zeros();
    for &tri in mesh.incident_triangles(v) {
        let l = mesh.corner_logical(tri);
        let p = mesh.corner_positions(tri);
        let here = (0..3).find(|&k| l[k] == v)?;
        normal += (p[1] - p[0]).cross(&(p[2] - p[0]));
        for k in 0..3 {
            if k != here {
                rel.entry(l[k]).or_insert(p[k] - p[here]);
            }
        }
    }
    if rel.len() < 5 {
        return None;
    }
    let nn = normal.norm();
    if nn == 0.0 {
        return None;
    }
    normal /= nn;
    // Deterministic tangent frame: seed with the axis least aligned with the
    // normal.
    let seed = if normal.x.abs() <= normal.y.abs() && normal.x.abs() <= normal.z.abs() {
        Vector3::x()
    } else if normal.y.abs() <= normal.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = (seed - normal * seed.dot(&normal)).normalize();
    let e2 = normal.cross(&e1);

    let npts = rel.len() + 1;
    let mut a = DMatrix::zeros(npts, 6);
    let mut b = DVector::zeros(npts);
    // Row 0 is the vertex itself at the origin.
    a[(0, 0)] = 1.0;
    b[0] = u.values()[v];
    for (row, (&nb, off)) in rel.iter().enumerate() {
        let xi = off.dot(&e1);
        let eta = off.dot(&e2);
        let r = row + 1;
        a[(r, 0)] = 1.0;
        a[(r, 1)] = xi;
        a[(r, 2)] = eta;
        a[(r, 3)] = 0.5 * xi * xi;
        a[(r, 4)] = xi * eta;
        a[(r, 5)] = 0.5 * eta * eta;
        b[r] = u.values()[nb];
    }
    let svd = a.svd(true, true);
    let c = svd.solve(&b, 1e-12).ok()?;
    if c.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some((
        Vector2::new(c[1], c[2]),
        nalgebra::Matrix2::new(c[3], c[4], c[4], c[5]),
    ))
}
