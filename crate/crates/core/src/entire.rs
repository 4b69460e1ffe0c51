//! Multi-end planar states at unit interface width: ordered line
//! configurations, the blended approximate state built from the 1D connection
//! profile, Dirichlet Newton refinement on boxes, directional derivative
//! (Jacobi) fields, nodal-domain counting, and the index lower-bound verdict.
//!
//! A configuration of `2k` oriented affine lines induces, for a gluing radius
//! `R`, half-lines that leave the disk `B_R` and a blended field that equals
//! the 1D profile across each half-line far from the gluing region. Newton
//! refinement with the blend's boundary trace then produces discrete critical
//! points whose spectral and nodal structure is checked against the `k - 1`
//! index bound.

use crate::energy::{gradient, hessian, Field};
use crate::error::{Error, Result};
use crate::heteroclinic::HeteroclinicProfile;
use crate::minmax::{newton_refine, NewtonOptions};
use crate::potential::Potential;
use crate::spectrum::{morse_index, restricted_morse_index, SpectralSummary};
use crate::surface::operators::{vertex_gradients, DiscreteOperators};
use crate::surface::{SurfaceMesh, SurfaceParams};
use nalgebra::Vector2;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// Pairwise clearance the half-lines must have before blending is meaningful.
const SEPARATION: f64 = 4.0;
/// Absolute tolerance on `|sum of end directions|` for the balance flag.
const BALANCE_TOL: f64 = 1e-8;
/// Angle of the built-in generic probe direction for nodal cross-checks.
const GENERIC_ANGLE: f64 = 0.37;

/// One oriented affine line: the set `{ x : <x, J f> = offset }` with
/// direction `f = (cos angle, sin angle)` and `J` the counterclockwise
/// quarter turn. The side `J f` points to is the positive side.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Line {
    pub offset: f64,
    pub angle: f64,
}

impl Line {
    fn direction(&self) -> Vector2<f64> {
        Vector2::new(self.angle.cos(), self.angle.sin())
    }

    /// `J f`: the unit normal on the positive side.
    fn normal(&self) -> Vector2<f64> {
        Vector2::new(-self.angle.sin(), self.angle.cos())
    }
}

/// Ordered tuple of `2k` oriented lines with strictly increasing angles
/// within one period.
#[derive(Debug, Clone, Serialize)]
pub struct LineConfig {
    pub lines: Vec<Line>,
    pub k: usize,
    /// Half the minimal cyclic gap between consecutive angles.
    pub theta_lambda: f64,
    /// Whether the end directions sum to zero within `1e-8`.
    pub balanced: bool,
}

/// Validates angles and offsets and derives the cyclic-gap and balance data.
pub fn make_line_config(angles: &[f64], offsets: &[f64]) -> Result<LineConfig> {
    let m = angles.len();
    if m != offsets.len() {
        return Err(Error::Validation(format!(
            "{m} angles but {} offsets",
            offsets.len()
        )));
    }
    if m < 2 || m % 2 != 0 {
        return Err(Error::Validation(format!(
            "need an even number of lines, at least 2, got {m}"
        )));
    }
    for (j, v) in angles.iter().chain(offsets.iter()).enumerate() {
        if !v.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite configuration entry at position {j}"
            )));
        }
    }
    for j in 1..m {
        if angles[j] <= angles[j - 1] {
            return Err(Error::Validation(format!(
                "angles must increase strictly: angle {} is {} after {}",
                j,
                angles[j],
                angles[j - 1]
            )));
        }
    }
    let span = angles[m - 1] - angles[0];
    if span >= 2.0 * std::f64::consts::PI {
        return Err(Error::Validation(format!(
            "angles must fit in one period, span is {span}"
        )));
    }

    let mut min_gap = 2.0 * std::f64::consts::PI - span;
    for j in 1..m {
        min_gap = min_gap.min(angles[j] - angles[j - 1]);
    }

    let lines: Vec<Line> = angles
        .iter()
        .zip(offsets)
        .map(|(&angle, &offset)| Line { offset, angle })
        .collect();
    let sum: Vector2<f64> = lines.iter().map(Line::direction).sum();

    Ok(LineConfig {
        k: m / 2,
        theta_lambda: 0.5 * min_gap,
        balanced: sum.norm() <= BALANCE_TOL,
        lines,
    })
}

#[derive(Debug, Clone, Copy)]
struct Ray {
    start: Vector2<f64>,
    dir: Vector2<f64>,
}

fn dist_point_ray(p: Vector2<f64>, ray: &Ray) -> f64 {
    let w = p - ray.start;
    let t = w.dot(&ray.dir).max(0.0);
    (w - ray.dir * t).norm()
}

fn dist_ray_ray(a: &Ray, b: &Ray) -> f64 {
    // Convex in (s, t) over the quadrant, so the minimum is either the
    // unconstrained stationary point or lies on one of the two edges s = 0,
    // t = 0, where it reduces to point-to-ray distances.
    let w = a.start - b.start;
    let c = a.dir.dot(&b.dir);
    let det = 1.0 - c * c;
    if det > 1e-12 {
        let rhs_s = -w.dot(&a.dir);
        let rhs_t = w.dot(&b.dir);
        let s = (rhs_s + c * rhs_t) / det;
        let t = (rhs_t + c * rhs_s) / det;
        if s >= 0.0 && t >= 0.0 {
            return (w + a.dir * s - b.dir * t).norm();
        }
    }
    dist_point_ray(a.start, b).min(dist_point_ray(b.start, a))
}

/// Half-lines leaving the circle of radius `r`; the start of line `j` is the
/// intersection of the line with the circle on the outgoing side.
fn half_lines(cfg: &LineConfig, r: f64) -> Result<Vec<Ray>> {
    cfg.lines
        .iter()
        .map(|line| {
            let rr = r * r - line.offset * line.offset;
            if rr < 0.0 {
                return Err(Error::Validation(format!(
                    "gluing radius {r} is smaller than the line offset {}",
                    line.offset
                )));
            }
            let s = rr.sqrt();
            Ok(Ray {
                start: line.normal() * line.offset + line.direction() * s,
                dir: line.direction(),
            })
        })
        .collect()
}

/// Minimal pairwise half-line distance and the realizing pair.
fn min_separation(rays: &[Ray]) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            let d = dist_ray_ray(&rays[i], &rays[j]);
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    best
}

/// Smallest gluing radius at which the half-lines are pairwise at least 4
/// apart, located by an outward scan and bisection.
pub fn minimal_gluing_radius(cfg: &LineConfig) -> Result<f64> {
    let base = cfg
        .lines
        .iter()
        .fold(0.0_f64, |m, l| m.max(l.offset.abs()))
        + 1e-9;
    let sep = |r: f64| -> Result<f64> { Ok(min_separation(&half_lines(cfg, r)?).0) };
    if sep(base)? >= SEPARATION {
        return Ok(base);
    }
    let cap = base + 4.0 + 16.0 / cfg.theta_lambda.sin().max(1e-3);
    let mut lo = base;
    let mut hi = base;
    loop {
        hi += 0.25;
        if hi > cap {
            return Err(Error::Validation(format!(
                "no gluing radius below {cap:.2} separates the half-lines by {SEPARATION}"
            )));
        }
        if sep(hi)? >= SEPARATION {
            break;
        }
        lo = hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if sep(mid)? >= SEPARATION {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// The standard smooth step: 0 for `t <= 0`, 1 for `t >= 1`, strictly
/// increasing in between with all derivatives vanishing at the ends.
fn transition(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

fn box_half_width(mesh: &SurfaceMesh) -> Result<f64> {
    match *mesh.params() {
        SurfaceParams::PlanarBox { half_width, .. } => Ok(half_width),
        _ => Err(Error::Validation(format!(
            "a planar box mesh is required, got {:?}",
            mesh.kind()
        ))),
    }
}

fn check_field(u: &Field, mesh: &SurfaceMesh) -> Result<()> {
    if u.len() != mesh.vertex_count() || u.mesh_ref() != mesh.ref_id() {
        return Err(Error::Validation(format!(
            "field on {} does not match mesh {}",
            u.mesh_ref(),
            mesh.ref_id()
        )));
    }
    Ok(())
}

/// Blended approximate state for a line configuration at gluing radius `r`.
///
/// The field vanishes deep inside the gluing disk, equals
/// `(-1)^(j+1) H(signed distance to line j)` across each half-line outside
/// it, and blends with a smooth partition of unity in between; weights use
/// collars of width 2 around the disk and around the half-line distance
/// comparisons. The result is bounded by 1 in absolute value everywhere.
pub fn approximate_solution(
    cfg: &LineConfig,
    profile: &HeteroclinicProfile,
    r: f64,
    mesh: &SurfaceMesh,
) -> Result<Field> {
    let hw = box_half_width(mesh)?;
    if hw <= r + SEPARATION {
        return Err(Error::Validation(format!(
            "box half-width {hw} must exceed the gluing radius {r} plus {SEPARATION}"
        )));
    }
    let rays = half_lines(cfg, r)?;
    let (sep, i, j) = min_separation(&rays);
    if sep < SEPARATION - 1e-6 {
        let minimal = minimal_gluing_radius(cfg)?;
        return Err(Error::Validation(format!(
            "half-lines {i} and {j} are {sep:.6} apart at radius {r}, need at \
             least {SEPARATION}; minimal radius {minimal:.6}"
        )));
    }

    let n = mesh.vertex_count();
    let m = cfg.lines.len();
    let mut values = vec![0.0; n];
    let mut dist = vec![0.0; m];
    for (v, value) in values.iter_mut().enumerate() {
        let p3 = mesh.logical_position(v);
        let x = Vector2::new(p3.x, p3.y);
        for (d, ray) in dist.iter_mut().zip(&rays) {
            *d = dist_point_ray(x, ray);
        }
        let rad = x.norm();
        let mut weights = vec![0.0; m + 1];
        weights[0] = transition(0.5 * (r + 1.0 - rad));
        let radial = transition(0.5 * (rad - (r - 1.0)));
        for jj in 0..m {
            let mut w = radial;
            for ii in 0..m {
                if ii != jj {
                    w *= transition(0.25 * (dist[ii] - dist[jj] + 2.0));
                }
            }
            weights[jj + 1] = w;
        }
        let total: f64 = weights.iter().sum();
        // The disk weight covers radii below r + 1 and the nearest half-line
        // weight is positive beyond r - 1, so the sum never vanishes.
        let mut u = 0.0;
        for (jj, line) in cfg.lines.iter().enumerate() {
            if weights[jj + 1] == 0.0 {
                continue;
            }
            let signed = x.dot(&line.normal()) - line.offset;
            let sign = if jj % 2 == 0 { 1.0 } else { -1.0 };
            u += sign * weights[jj + 1] / total * profile.eval(signed);
        }
        *value = u;
    }
    Field::new(mesh, 1.0, values)
}

/// Newton refinement at unit interface width with the boundary trace of `u0`
/// held fixed. Returns the refined field, its interior residual, and the
/// iteration count.
pub fn refine_entire(
    u0: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
    tol: f64,
) -> Result<(Field, f64, usize)> {
    box_half_width(mesh)?;
    check_field(u0, mesh)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Validation(format!("tolerance must be positive, got {tol}")));
    }
    let opts = NewtonOptions {
        tol,
        max_iters: 60,
        min_damping: 1e-6,
    };
    newton_refine(u0, mesh, ops, p, &opts)
}

/// Mass-inverse residual norm of the first variation over the boundary rows,
/// where Dirichlet refinement leaves the defect of the frozen trace. Small
/// values mean the trace is compatible with an actual critical point.
pub fn boundary_residual_norm(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
) -> Result<f64> {
    check_field(u, mesh)?;
    let g = gradient(u, ops, p)?;
    let sum: f64 = mesh
        .boundary_vertices()
        .iter()
        .map(|&i| g[i] * g[i] / ops.mass[i])
        .sum();
    Ok(sum.sqrt())
}

/// Directional derivative field `v = <recovered gradient of u, e>` together
/// with the mass-inverse norm of its linearized-operator residual on interior
/// vertices. For discrete critical points `v` approximates a Jacobi field.
pub fn directional_jacobi_field(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
    e: [f64; 2],
) -> Result<(Field, f64)> {
    check_field(u, mesh)?;
    let norm = (e[0] * e[0] + e[1] * e[1]).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "direction must be a unit vector, got length {norm}"
        )));
    }
    let grads = vertex_gradients(mesh, ops, u.values());
    let v: Vec<f64> = grads.iter().map(|g| g.x * e[0] + g.y * e[1]).collect();

    let eps = u.epsilon();
    let kv = ops.stiffness.mul_vec_alloc(&v);
    let mut sum = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        if mesh.is_boundary(i) {
            continue;
        }
        let r = eps * kv[i] + ops.mass[i] * p.ddw(u.values()[i]) * vi / eps;
        sum += r * r / ops.mass[i];
    }
    Ok((Field::new(mesh, eps, v)?, sum.sqrt()))
}

/// Nodal-domain counts of a scalar field on a planar box, with the inscribed
/// disk playing the role of the truncation ball: network components and
/// junction points wholly outside it are discarded, and domains touching it
/// count as unbounded.
#[derive(Debug, Clone, Serialize)]
pub struct NodalAnalysis {
    /// Number of sign domains (flood fill over same-sign vertex adjacency).
    pub domain_count: usize,
    /// Connected components of the nodal network after removing junctions.
    pub component_count: usize,
    /// Junction clusters of the nodal network with enough outgoing branches.
    pub singular_count: usize,
    /// Whether `domain_count = 1 + component_count - singular_count`.
    pub euler_consistent: bool,
    /// Sign domains reaching the truncation circle.
    pub unbounded_domain_count: usize,
    /// Cyclic run-length signs read along the outer boundary ring.
    pub sign_pattern: Vec<i8>,
}

#[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy, Debug)]
enum NodeKey {
    Vertex(usize),
    Edge(usize, usize),
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut walk = i;
        while self.parent[walk] != root {
            let next = self.parent[walk];
            self.parent[walk] = root;
            walk = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        // Deterministic tie-break: smaller root wins.
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Zero set, junctions, and sign domains of `v` on a planar box mesh.
///
/// Vertices with `|v| <= zero_tol` lie on the nodal set. The piecewise-linear
/// zero set is collected as a segment network; triangles whose three corners
/// all vanish are merged into junction candidate clusters, and clusters with
/// at least `singular_valence_min` outgoing branches form the singular set.
/// Counts follow the planar-graph face formula, asserted rather than assumed
/// via the `euler_consistent` flag.
pub fn nodal_analysis(
    v: &Field,
    mesh: &SurfaceMesh,
    zero_tol: f64,
    singular_valence_min: usize,
) -> Result<NodalAnalysis> {
    let hw = box_half_width(mesh)?;
    check_field(v, mesh)?;
    if !(zero_tol >= 0.0 && zero_tol.is_finite()) {
        return Err(Error::Validation(format!(
            "zero tolerance must be nonnegative, got {zero_tol}"
        )));
    }
    if singular_valence_min < 3 {
        return Err(Error::Validation(format!(
            "junctions need at least 3 branches, got threshold {singular_valence_min}"
        )));
    }

    let n = mesh.vertex_count();
    let vals = v.values();
    let signs: Vec<i8> = vals
        .iter()
        .map(|&x| {
            if x.abs() <= zero_tol {
                0
            } else if x > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    if signs.iter().all(|&s| s == 0) {
        return Err(Error::Degenerate(format!(
            "field vanishes identically within zero tolerance {zero_tol}"
        )));
    }

    let pos2 = |i: usize| {
        let p = mesh.logical_position(i);
        Vector2::new(p.x, p.y)
    };

    // Nodal network: nodes are zero vertices and sign-change edge crossings,
    // segments are per-triangle traces of the piecewise-linear zero set.
    let mut keys: BTreeMap<NodeKey, usize> = BTreeMap::new();
    let mut node_pos: Vec<Vector2<f64>> = Vec::new();
    let mut segments: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut zero_triangles: Vec<[usize; 3]> = Vec::new();

    let node = |keys: &mut BTreeMap<NodeKey, usize>,
                    node_pos: &mut Vec<Vector2<f64>>,
                    key: NodeKey| {
        *keys.entry(key).or_insert_with(|| {
            let p = match key {
                NodeKey::Vertex(i) => pos2(i),
                NodeKey::Edge(a, b) => {
                    let (pa, pb) = (pos2(a), pos2(b));
                    let t = vals[a] / (vals[a] - vals[b]);
                    pa + (pb - pa) * t
                }
            };
            node_pos.push(p);
            node_pos.len() - 1
        })
    };
    let crossing_key = |a: usize, b: usize| NodeKey::Edge(a.min(b), a.max(b));
    let add_segment = |segments: &mut BTreeSet<(usize, usize)>, a: usize, b: usize| {
        if a != b {
            segments.insert((a.min(b), a.max(b)));
        }
    };

    for t in 0..mesh.triangle_count() {
        let c = mesh.corner_logical(t);
        let s = [signs[c[0]], signs[c[1]], signs[c[2]]];
        let zeros: Vec<usize> = (0..3).filter(|&i| s[i] == 0).collect();
        match zeros.len() {
            3 => {
                let ids = [
                    node(&mut keys, &mut node_pos, NodeKey::Vertex(c[0])),
                    node(&mut keys, &mut node_pos, NodeKey::Vertex(c[1])),
                    node(&mut keys, &mut node_pos, NodeKey::Vertex(c[2])),
                ];
                zero_triangles.push(ids);
            }
            2 => {
                let a = node(&mut keys, &mut node_pos, NodeKey::Vertex(c[zeros[0]]));
                let b = node(&mut keys, &mut node_pos, NodeKey::Vertex(c[zeros[1]]));
                add_segment(&mut segments, a, b);
            }
            1 => {
                let strict: Vec<usize> = (0..3).filter(|&i| s[i] != 0).collect();
                if s[strict[0]] != s[strict[1]] {
                    let a = node(&mut keys, &mut node_pos, NodeKey::Vertex(c[zeros[0]]));
                    let b = node(
                        &mut keys,
                        &mut node_pos,
                        crossing_key(c[strict[0]], c[strict[1]]),
                    );
                    add_segment(&mut segments, a, b);
                }
            }
            0 => {
                if s[0] == s[1] && s[1] == s[2] {
                    continue;
                }
                // One corner differs from the other two: the zero line enters
                // and leaves through the two edges at that corner.
                let lone = (0..3)
                    .find(|&i| s[i] != s[(i + 1) % 3] && s[i] != s[(i + 2) % 3])
                    .expect("mixed strict signs have a lone corner");
                let a = node(
                    &mut keys,
                    &mut node_pos,
                    crossing_key(c[lone], c[(lone + 1) % 3]),
                );
                let b = node(
                    &mut keys,
                    &mut node_pos,
                    crossing_key(c[lone], c[(lone + 2) % 3]),
                );
                add_segment(&mut segments, a, b);
            }
            _ => unreachable!(),
        }
    }

    // Truncation: keep only network nodes inside the inscribed disk.
    let rho = hw;
    let kept: Vec<bool> = node_pos.iter().map(|p| p.norm() <= rho + 1e-9).collect();

    let mut uf = UnionFind::new(node_pos.len());
    for tri in &zero_triangles {
        for i in 0..3 {
            for j in i + 1..3 {
                if kept[tri[i]] && kept[tri[j]] {
                    uf.union(tri[i], tri[j]);
                }
            }
        }
    }

    let mut valence: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cluster_edges: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in &segments {
        if !(kept[a] && kept[b]) {
            continue;
        }
        let (ra, rb) = (uf.find(a), uf.find(b));
        if ra == rb {
            continue;
        }
        *valence.entry(ra).or_insert(0) += 1;
        *valence.entry(rb).or_insert(0) += 1;
        cluster_edges.push((ra, rb));
    }

    let singular: BTreeSet<usize> = valence
        .iter()
        .filter(|&(_, &val)| val >= singular_valence_min)
        .map(|(&rep, _)| rep)
        .collect();
    let singular_count = singular.len();

    // Components of the network with junction clusters removed.
    let reps: Vec<usize> = valence.keys().copied().collect();
    let rep_index: BTreeMap<usize, usize> = reps.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut comp_uf = UnionFind::new(reps.len());
    let mut in_component = vec![false; reps.len()];
    for &(ra, rb) in &cluster_edges {
        if singular.contains(&ra) || singular.contains(&rb) {
            continue;
        }
        let (ia, ib) = (rep_index[&ra], rep_index[&rb]);
        comp_uf.union(ia, ib);
        in_component[ia] = true;
        in_component[ib] = true;
    }
    let mut component_roots: BTreeSet<usize> = BTreeSet::new();
    for i in 0..reps.len() {
        if in_component[i] {
            component_roots.insert(comp_uf.find(i));
        }
    }
    let component_count = component_roots.len();

    // Sign domains by flood fill over same-sign adjacency inside the disk.
    let in_disk: Vec<bool> = (0..n).map(|i| pos2(i).norm() <= rho + 1e-9).collect();
    let mut domain_uf = UnionFind::new(n);
    for &(a, b, _) in mesh.edges() {
        if in_disk[a] && in_disk[b] && signs[a] != 0 && signs[a] == signs[b] {
            domain_uf.union(a, b);
        }
    }
    let shell = rho - 1.5 * mesh.h_max();
    let mut domain_roots: BTreeSet<usize> = BTreeSet::new();
    let mut unbounded_roots: BTreeSet<usize> = BTreeSet::new();
    for i in 0..n {
        if !in_disk[i] || signs[i] == 0 {
            continue;
        }
        let root = domain_uf.find(i);
        domain_roots.insert(root);
        if pos2(i).norm() >= shell {
            unbounded_roots.insert(root);
        }
    }
    let domain_count = domain_roots.len();
    let unbounded_domain_count = unbounded_roots.len();

    // Cyclic sign pattern along the square boundary ring, zeros skipped.
    let mut ring: Vec<(f64, usize)> = mesh
        .boundary_vertices()
        .into_iter()
        .map(|i| {
            let p = pos2(i);
            (p.y.atan2(p.x), i)
        })
        .collect();
    ring.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut sign_pattern: Vec<i8> = Vec::new();
    for &(_, i) in &ring {
        if signs[i] == 0 {
            continue;
        }
        if sign_pattern.last() != Some(&signs[i]) {
            sign_pattern.push(signs[i]);
        }
    }
    if sign_pattern.len() > 1 && sign_pattern.first() == sign_pattern.last() {
        sign_pattern.pop();
    }

    let euler_consistent =
        domain_count as i64 == 1 + component_count as i64 - singular_count as i64;

    Ok(NodalAnalysis {
        domain_count,
        component_count,
        singular_count,
        euler_consistent,
        unbounded_domain_count,
        sign_pattern,
    })
}

/// Outcome of the index lower-bound test for a refined multi-end state.
#[derive(Debug, Clone, Serialize)]
pub struct IndexVerdict {
    pub index_computed: usize,
    pub nullity: usize,
    /// The bound `k - 1` the computed index is compared against.
    pub bound: usize,
    pub pass: bool,
    /// Nodal domains of the generic directional derivative field; the
    /// companion estimate says the index is at least this minus one, which a
    /// box truncation cannot certify, so it is reported informationally.
    pub nodal_domains: usize,
    pub eigenvalues: Vec<f64>,
}

fn interior_residual(g: &[f64], mesh: &SurfaceMesh, ops: &DiscreteOperators) -> f64 {
    let sum: f64 = (0..mesh.vertex_count())
        .filter(|&i| !mesh.is_boundary(i))
        .map(|i| g[i] * g[i] / ops.mass[i])
        .sum();
    sum.sqrt()
}

/// Dirichlet Morse index of a refined `2k`-end state on its box, compared
/// against the lower bound `k - 1`. Requires interior residual at most 1e-6.
pub fn index_lower_bound_check(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
    k: usize,
    modes: usize,
    seed: u64,
) -> Result<IndexVerdict> {
    box_half_width(mesh)?;
    check_field(u, mesh)?;
    if k == 0 {
        return Err(Error::Validation("the end count parameter k must be positive".into()));
    }
    let g = gradient(u, ops, p)?;
    let res = interior_residual(&g, mesh, ops);
    if res > 1e-6 {
        return Err(Error::Validation(format!(
            "state is not refined: interior residual {res:.3e} exceeds 1e-6"
        )));
    }

    let summary = morse_index(u, mesh, ops, p, modes, None, seed)?;

    let e = [GENERIC_ANGLE.cos(), GENERIC_ANGLE.sin()];
    let (v, _) = directional_jacobi_field(u, mesh, ops, p, e)?;
    let scale = v.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let nodal = nodal_analysis(&v, mesh, 1e-6 * scale, 4)?;

    let bound = k - 1;
    Ok(IndexVerdict {
        index_computed: summary.index,
        nullity: summary.nullity,
        bound,
        pass: summary.index >= bound,
        nodal_domains: nodal.domain_count,
        eigenvalues: summary.lowest_eigenvalues,
    })
}

/// Dirichlet index of the second variation of `u` on the nested sub-boxes
/// `[-l, l]^2` for each requested `l`. All counts come from one Hessian;
/// restriction to a larger vertex set can only lower eigenvalues, so the
/// sequence is nondecreasing by interlacing.
pub fn nested_box_indices(
    u: &Field,
    mesh: &SurfaceMesh,
    ops: &DiscreteOperators,
    p: &Potential,
    half_widths: &[f64],
    modes: usize,
    seed: u64,
) -> Result<Vec<SpectralSummary>> {
    let hw = box_half_width(mesh)?;
    check_field(u, mesh)?;
    if half_widths.is_empty() {
        return Err(Error::Validation("no sub-box widths given".into()));
    }
    for w in half_widths.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Validation(format!(
                "sub-box widths must increase strictly, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if half_widths[0] <= 0.0 || half_widths[half_widths.len() - 1] > hw + 1e-12 {
        return Err(Error::Validation(format!(
            "sub-box widths must lie in (0, {hw}]"
        )));
    }

    let h = hessian(u, ops, p)?;
    let mut out = Vec::with_capacity(half_widths.len());
    for &l in half_widths {
        let free: Vec<usize> = (0..mesh.vertex_count())
            .filter(|&i| {
                if mesh.is_boundary(i) {
                    return false;
                }
                let q = mesh.logical_position(i);
                q.x.abs() < l - 1e-12 && q.y.abs() < l - 1e-12
            })
            .collect();
        if free.is_empty() {
            return Err(Error::Validation(format!(
                "sub-box of half-width {l} contains no interior vertices"
            )));
        }
        let h_sub = h.restrict(&free);
        let m_sub: Vec<f64> = free.iter().map(|&i| ops.mass[i]).collect();
        out.push(restricted_morse_index(&h_sub, &m_sub, modes, None, seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heteroclinic::solve_heteroclinic;
    use crate::surface::build::planar_box;
    use crate::surface::operators::assemble_operators;
    use std::f64::consts::PI;

    fn quartic_profile() -> HeteroclinicProfile {
        solve_heteroclinic(&Potential::quartic(), 12.0, 0.005).unwrap()
    }

    fn cross_config() -> LineConfig {
        make_line_config(&[0.0, PI / 2.0, PI, 1.5 * PI], &[0.0; 4]).unwrap()
    }

    #[test]
    fn cross_config_has_quarter_pi_gap_and_balance() {
        let cfg = cross_config();
        assert_eq!(cfg.k, 2);
        assert!((cfg.theta_lambda - PI / 4.0).abs() <= 1e-12);
        assert!(cfg.balanced);

        let cfg = make_line_config(&[0.0, PI / 3.0, PI, 4.0 * PI / 3.0], &[0.0; 4]).unwrap();
        assert!((cfg.theta_lambda - PI / 6.0).abs() <= 1e-12);

        let cfg = make_line_config(&[0.0, PI], &[0.0; 2]).unwrap();
        assert_eq!(cfg.k, 1);
        assert!((cfg.theta_lambda - PI / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(make_line_config(&[0.0, 1.0, 2.0], &[0.0; 3]).is_err());
        assert!(make_line_config(&[0.0, 0.0], &[0.0; 2]).is_err());
        assert!(make_line_config(&[0.0, 7.0], &[0.0; 2]).is_err());
        assert!(make_line_config(&[0.0, PI], &[0.0; 3]).is_err());
    }

    #[test]
    fn theta_lambda_is_rotation_invariant() {
        let base = make_line_config(&[0.0, PI / 3.0, PI, 4.0 * PI / 3.0], &[0.0; 4]).unwrap();
        for m in 1..=8 {
            let delta = 0.07 * m as f64;
            let angles: Vec<f64> = [0.0, PI / 3.0, PI, 4.0 * PI / 3.0]
                .iter()
                .map(|a| a + delta)
                .collect();
            let rotated = make_line_config(&angles, &[0.0; 4]).unwrap();
            assert!((rotated.theta_lambda - base.theta_lambda).abs() <= 1e-12);
        }
        // A rotation that wraps past the period, re-sorted cyclically.
        let rotated = make_line_config(
            &[PI / 3.0 - 0.2, PI - 0.2, 4.0 * PI / 3.0 - 0.2, 2.0 * PI - 0.2],
            &[0.0; 4],
        )
        .unwrap();
        assert!((rotated.theta_lambda - base.theta_lambda).abs() <= 1e-12);
    }

    #[test]
    fn minimal_radius_matches_hand_values() {
        // Perpendicular adjacent half-lines leave the circle sqrt(2) R apart;
        // opposite collinear ones 2 R apart.
        let r = minimal_gluing_radius(&cross_config()).unwrap();
        assert!((r - 2.0 * 2.0_f64.sqrt()).abs() <= 1e-6, "r = {r}");

        let cfg = make_line_config(&[0.0, PI], &[0.0; 2]).unwrap();
        let r = minimal_gluing_radius(&cfg).unwrap();
        assert!((r - 2.0).abs() <= 1e-6, "r = {r}");
    }

    #[test]
    fn too_small_radius_reports_pair_and_minimum() {
        let profile = quartic_profile();
        let mesh = planar_box(8.0, 16).unwrap();
        let err = approximate_solution(&cross_config(), &profile, 2.0, &mesh).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("minimal radius"), "message: {msg}");
        assert!(msg.contains("2.828"), "message: {msg}");
    }

    #[test]
    fn two_end_blend_matches_profile_outside_annulus() {
        let profile = quartic_profile();
        let cfg = make_line_config(&[0.0, PI], &[0.0; 2]).unwrap();
        let mesh = planar_box(8.0, 64).unwrap();
        let r = 2.0;
        let u = approximate_solution(&cfg, &profile, r, &mesh).unwrap();
        for i in 0..mesh.vertex_count() {
            let p = mesh.logical_position(i);
            assert!(u.values()[i].abs() <= 1.0 + 1e-12);
            if (p.x * p.x + p.y * p.y).sqrt() >= r + 1.0 + 1e-9 {
                let expect = profile.eval(p.y);
                assert!(
                    (u.values()[i] - expect).abs() <= 1e-6,
                    "blend deviates at ({}, {}): {} vs {}",
                    p.x,
                    p.y,
                    u.values()[i],
                    expect
                );
            }
        }
    }

    #[test]
    fn four_end_blend_alternates_in_quadrants() {
        let profile = quartic_profile();
        let mesh = planar_box(8.0, 64).unwrap();
        let u = approximate_solution(&cross_config(), &profile, 2.0 * 2.0_f64.sqrt(), &mesh)
            .unwrap();
        let at = |x: f64, y: f64| {
            let mut best = (f64::INFINITY, 0);
            for i in 0..mesh.vertex_count() {
                let p = mesh.logical_position(i);
                let d = (p.x - x).hypot(p.y - y);
                if d < best.0 {
                    best = (d, i);
                }
            }
            u.values()[best.1]
        };
        assert!(at(5.0, 5.0) > 0.9);
        assert!(at(-5.0, 5.0) < -0.9);
        assert!(at(-5.0, -5.0) > 0.9);
        assert!(at(5.0, -5.0) < -0.9);
        assert!(u.values().iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    fn refine_cross(half_width: f64, n: usize) -> (SurfaceMesh, DiscreteOperators, Field, f64) {
        let profile = quartic_profile();
        let mesh = planar_box(half_width, n).unwrap();
        let ops = assemble_operators(&mesh).unwrap();
        let u0 = approximate_solution(&cross_config(), &profile, 2.0 * 2.0_f64.sqrt(), &mesh)
            .unwrap();
        let (u, res, _) =
            refine_entire(&u0, &mesh, &ops, &Potential::quartic(), 1e-8).unwrap();
        (mesh, ops, u, res)
    }

    #[test]
    fn four_end_state_refines_on_the_box() {
        let (_, _, _, res) = refine_cross(12.0, 96);
        assert!(res <= 1e-8, "residual {res}");
    }

    #[test]
    fn diagonal_config_refines_to_swap_odd_state() {
        let profile = quartic_profile();
        let cfg = make_line_config(
            &[PI / 4.0, 3.0 * PI / 4.0, 5.0 * PI / 4.0, 7.0 * PI / 4.0],
            &[0.0; 4],
        )
        .unwrap();
        let mesh = planar_box(10.0, 80).unwrap();
        let ops = assemble_operators(&mesh).unwrap();
        let u0 = approximate_solution(&cfg, &profile, 2.0 * 2.0_f64.sqrt(), &mesh).unwrap();
        let (u, _, _) = refine_entire(&u0, &mesh, &ops, &Potential::quartic(), 1e-9).unwrap();

        // Index vertices by grid coordinates to apply (x, y) -> (y, x).
        let h = 2.0 * 10.0 / 80.0;
        let key = |x: f64, y: f64| ((x / h).round() as i64, (y / h).round() as i64);
        let mut lookup = BTreeMap::new();
        for i in 0..mesh.vertex_count() {
            let p = mesh.logical_position(i);
            lookup.insert(key(p.x, p.y), i);
        }
        let mut worst = 0.0_f64;
        for i in 0..mesh.vertex_count() {
            let p = mesh.logical_position(i);
            let j = lookup[&key(p.y, p.x)];
            worst = worst.max((u.values()[j] + u.values()[i]).abs());
        }
        assert!(worst <= 1e-6, "swap antisymmetry defect {worst}");
    }

    #[test]
    fn lifted_profile_directional_fields() {
        let profile = quartic_profile();
        let mesh = planar_box(6.0, 48).unwrap();
        let ops = assemble_operators(&mesh).unwrap();
        let values: Vec<f64> = (0..mesh.vertex_count())
            .map(|i| profile.eval(mesh.logical_position(i).y))
            .collect();
        let u = Field::new(&mesh, 1.0, values).unwrap();

        let (v, res) =
            directional_jacobi_field(&u, &mesh, &ops, &Potential::quartic(), [0.0, 1.0]).unwrap();
        assert!(v.values().iter().all(|&x| x > 0.0), "profile slope field must be positive");
        assert!(res.is_finite());

        let (v, _) =
            directional_jacobi_field(&u, &mesh, &ops, &Potential::quartic(), [1.0, 0.0]).unwrap();
        let sup = v.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(sup <= 1e-12, "no variation along the level direction, got {sup}");

        assert!(directional_jacobi_field(&u, &mesh, &ops, &Potential::quartic(), [0.5, 0.0])
            .is_err());
    }

    #[test]
    fn four_end_directional_field_sign_pattern() {
        let (mesh, ops, u, _) = refine_cross(12.0, 96);
        let e = [GENERIC_ANGLE.cos(), GENERIC_ANGLE.sin()];
        let (v, _) = directional_jacobi_field(&u, &mesh, &ops, &Potential::quartic(), e).unwrap();
        let at = |x: f64, y: f64| {
            let mut best = (f64::INFINITY, 0);
            for i in 0..mesh.vertex_count() {
                let p = mesh.logical_position(i);
                let d = (p.x - x).hypot(p.y - y);
                if d < best.0 {
                    best = (d, i);
                }
            }
            v.values()[best.1]
        };
        // Ends carry the slope of the crossing profile: the east and north
        // boundary midpoints see positive components of e, west and south
        // negative ones.
        assert!(at(11.5, 0.0) > 0.0);
        assert!(at(0.0, 11.5) > 0.0);
        assert!(at(-11.5, 0.0) < 0.0);
        assert!(at(0.0, -11.5) < 0.0);
        assert!(v.values().iter().any(|&x| x > 0.0) && v.values().iter().any(|&x| x < 0.0));
    }

    #[test]
    fn nodal_counts_for_quadrant_product() {
        let mesh = planar_box(2.0, 32).unwrap();
        let values: Vec<f64> = (0..mesh.vertex_count())
            .map(|i| {
                let p = mesh.logical_position(i);
                p.x * p.y
            })
            .collect();
        let v = Field::new(&mesh, 1.0, values).unwrap();
        let a = nodal_analysis(&v, &mesh, 1e-9, 4).unwrap();
        assert_eq!(a.domain_count, 4);
        assert_eq!(a.singular_count, 1);
        assert_eq!(a.component_count, 4);
        assert!(a.euler_consistent);
        assert_eq!(a.unbounded_domain_count, 4);
        assert_eq!(a.sign_pattern.len(), 4);
        for w in a.sign_pattern.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn nodal_counts_for_half_plane_split() {
        let mesh = planar_box(2.0, 32).unwrap();
        let values: Vec<f64> = (0..mesh.vertex_count())
            .map(|i| mesh.logical_position(i).x)
            .collect();
        let v = Field::new(&mesh, 1.0, values).unwrap();
        let a = nodal_analysis(&v, &mesh, 1e-9, 4).unwrap();
        assert_eq!(a.domain_count, 2);
        assert_eq!(a.singular_count, 0);
        assert_eq!(a.component_count, 1);
        assert!(a.euler_consistent);
        assert_eq!(a.unbounded_domain_count, 2);
        assert_eq!(a.sign_pattern, vec![-1, 1]);
    }

    #[test]
    fn vanishing_field_is_degenerate() {
        let mesh = planar_box(2.0, 8).unwrap();
        let v = Field::constant(&mesh, 1.0, 1e-12).unwrap();
        let err = nodal_analysis(&v, &mesh, 1e-9, 4).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn four_end_nodal_analysis_is_consistent() {
        let (mesh, ops, u, _) = refine_cross(12.0, 96);
        let e = [GENERIC_ANGLE.cos(), GENERIC_ANGLE.sin()];
        let (v, _) = directional_jacobi_field(&u, &mesh, &ops, &Potential::quartic(), e).unwrap();
        let scale = v.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let a = nodal_analysis(&v, &mesh, 1e-6 * scale, 4).unwrap();
        assert!(a.domain_count >= 2, "sign change forces at least two domains: {a:?}");
        assert!(a.euler_consistent, "counts: {a:?}");
        assert!(a.unbounded_domain_count >= 2, "counts: {a:?}");
    }

    #[test]
    fn four_end_index_verdict_passes() {
        let (mesh, ops, u, _) = refine_cross(12.0, 96);
        let verdict =
            index_lower_bound_check(&u, &mesh, &ops, &Potential::quartic(), 2, 6, 3).unwrap();
        assert_eq!(verdict.bound, 1);
        assert!(verdict.pass, "verdict: {verdict:?}");
        assert!(verdict.index_computed >= 1);
        assert!(verdict.nodal_domains >= 2);
    }

    #[test]
    fn unrefined_state_is_rejected_by_the_verdict() {
        let profile = quartic_profile();
        let mesh = planar_box(12.0, 96).unwrap();
        let ops = assemble_operators(&mesh).unwrap();
        let u0 = approximate_solution(&cross_config(), &profile, 2.0 * 2.0_f64.sqrt(), &mesh)
            .unwrap();
        let err = index_lower_bound_check(&u0, &mesh, &ops, &Potential::quartic(), 2, 6, 3)
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn nested_box_indices_are_monotone() {
        let (mesh, ops, u, _) = refine_cross(16.0, 128);
        let sums = nested_box_indices(
            &u,
            &mesh,
            &ops,
            &Potential::quartic(),
            &[8.0, 12.0, 16.0],
            6,
            5,
        )
        .unwrap();
        let indices: Vec<usize> = sums.iter().map(|s| s.index).collect();
        for w in indices.windows(2) {
            assert!(w[0] <= w[1], "indices {indices:?}");
        }
        assert!(indices[indices.len() - 1] >= 1, "indices {indices:?}");
    }

    #[test]
    fn two_end_refinement_tracks_the_profile() {
        let profile = quartic_profile();
        let cfg = make_line_config(&[0.0, PI], &[0.0; 2]).unwrap();
        let mesh = planar_box(6.25, 400).unwrap();
        let ops = assemble_operators(&mesh).unwrap();
        let u0 = approximate_solution(&cfg, &profile, 2.0, &mesh).unwrap();
        let (u, _, _) = refine_entire(&u0, &mesh, &ops, &Potential::quartic(), 1e-9).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..mesh.vertex_count() {
            if mesh.is_boundary(i) {
                continue;
            }
            let p = mesh.logical_position(i);
            worst = worst.max((u.values()[i] - profile.eval(p.y)).abs());
        }
        assert!(worst <= 1e-4, "deviation from the 1D profile: {worst}");
    }

    #[test]
    fn unbalanced_config_is_flagged_by_boundary_residual() {
        let profile = quartic_profile();
        let p = Potential::quartic();
        let mesh = planar_box(12.0, 96).unwrap();
        let ops = assemble_operators(&mesh).unwrap();

        let balanced = cross_config();
        let u0 = approximate_solution(&balanced, &profile, 2.0 * 2.0_f64.sqrt(), &mesh).unwrap();
        let (u, _, _) = refine_entire(&u0, &mesh, &ops, &p, 1e-8).unwrap();
        let reference = boundary_residual_norm(&u, &mesh, &ops, &p).unwrap();

        let tilted =
            make_line_config(&[0.0, PI / 2.0 + 0.3, PI, 1.5 * PI], &[0.0; 4]).unwrap();
        assert!(!tilted.balanced);
        let r = minimal_gluing_radius(&tilted).unwrap();
        let u0 = approximate_solution(&tilted, &profile, r, &mesh).unwrap();
        match refine_entire(&u0, &mesh, &ops, &p, 1e-8) {
            // A tilted end meets the frozen trace obliquely; the defect has to
            // concentrate in the boundary rows.
            Ok((u, _, _)) => {
                let tilted_res = boundary_residual_norm(&u, &mesh, &ops, &p).unwrap();
                assert!(
                    tilted_res > 5.0 * reference,
                    "boundary residual {tilted_res} vs balanced {reference}"
                );
            }
            Err(Error::Newton { .. }) => {}
            Err(other) => panic!("unexpected failure kind: {other}"),
        }
    }
}
