//! Graph distances along mesh edges. Deterministic: ties in the priority
//! queue break on vertex index, and edge weights come from the deduplicated
//! logical edge list.

use super::SurfaceMesh;
use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Copy, Clone, PartialEq)]
struct QueueEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on vertex index.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest edge-path distance from `source` to every logical vertex.
pub fn graph_distances(mesh: &SurfaceMesh, source: usize) -> Result<Vec<f64>> {
    let n = mesh.vertex_count();
    if source >= n {
        return Err(Error::Validation(format!(
            "distance source {source} out of range (vertex count {n})"
        )));
    }
    let adj = adjacency(mesh);
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(QueueEntry { dist: 0.0, vertex: source });
    while let Some(QueueEntry { dist: d, vertex: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &adj[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(QueueEntry { dist: nd, vertex: w });
            }
        }
    }
    Ok(dist)
}

fn adjacency(mesh: &SurfaceMesh) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); mesh.vertex_count()];
    for &(a, b, len) in mesh.edges() {
        adj[a].push((b, len));
        adj[b].push((a, len));
    }
    for list in &mut adj {
        list.sort_by(|x, y| x.0.cmp(&y.0));
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::build::{flat_torus, planar_box, sphere};

    #[test]
    fn axis_runs_on_a_box_are_exact() {
        let n = 8;
        let mesh = planar_box(1.0, n).unwrap();
        let h = 2.0 / n as f64;
        // Vertex at grid (0, 0) is index 0; walk along the bottom row.
        let dist = graph_distances(&mesh, 0).unwrap();
        for ix in 0..=n {
            assert!((dist[ix] - h * ix as f64).abs() < 1e-12);
        }
        // And up the left column.
        for iy in 0..=n {
            assert!((dist[iy * (n + 1)] - h * iy as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_wraps_both_ways() {
        let n = 10;
        let mesh = flat_torus(1.0, n).unwrap();
        let h = 1.0 / n as f64;
        let dist = graph_distances(&mesh, 0).unwrap();
        // One step forward vs n-1 steps back: the wrap makes them h each way.
        assert!((dist[1] - h).abs() < 1e-12);
        assert!((dist[n - 1] - h).abs() < 1e-12);
        assert!((dist[n] - h).abs() < 1e-12);
        assert!((dist[(n - 1) * n] - h).abs() < 1e-12);
    }

    #[test]
    fn sphere_distances_bound_geodesics() {
        let mesh = sphere(1.0, 4).unwrap();
        let dist = graph_distances(&mesh, 0).unwrap();
        let p0 = mesh.logical_position(0);
        for v in 1..mesh.vertex_count() {
            let p = mesh.logical_position(v);
            let geo = p0.dot(&p).clamp(-1.0, 1.0).acos();
            // Any edge path is at least as long as the straight chord.
            let chord = (p - p0).norm();
            assert!(dist[v] >= chord - 1e-9, "graph distance under chord at {v}");
            // Edge paths overshoot geodesics by a bounded distortion factor.
            assert!(dist[v] <= 1.4 * geo + 1e-9, "distortion too large at {v}");
        }
    }

    #[test]
    fn bad_source_is_rejected() {
        let mesh = planar_box(1.0, 2).unwrap();
        assert!(graph_distances(&mesh, 10_000).is_err());
    }
}
