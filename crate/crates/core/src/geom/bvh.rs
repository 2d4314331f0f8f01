use nalgebra::{Point3, Vector3};

use super::TriMesh;
use crate::field::Aabb;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // Leaf: range into `order`. Interior: `start` is the left child, right child follows its subtree.
    start: usize,
    count: usize,
    right: usize,
}

/// Closest point on a triangle mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub face: usize,
    pub point: Point3<f64>,
    /// Barycentric coordinates of `point` in face order.
    pub bary: [f64; 3],
    pub distance_squared: f64,
}

/// Bounding volume hierarchy over the triangles of a mesh, for closest-point and ray-crossing
/// queries.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tris: Vec<[Point3<f64>; 3]>,
}

impl TriangleBvh {
    pub fn new(mesh: &TriMesh) -> Self {
        let tris: Vec<_> = (0..mesh.num_faces()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Point3<f64>> =
            tris.iter().map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0)).collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            build(&mut nodes, &mut order, 0, tris.len(), &tris, &centroids);
        }
        Self { nodes, order, tris }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Nearest surface point. Ties in distance resolve to the lowest face index.
    pub fn closest_point(&self, p: &Point3<f64>) -> Option<ClosestHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let bound = box_distance_squared(&node.bounds, p);
            if best.is_some_and(|b| bound > b.distance_squared) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    let (q, bary) = closest_point_on_triangle(p, &self.tris[f]);
                    let d2 = (q - p).norm_squared();
                    let better = match best {
                        None => true,
                        Some(b) => d2 < b.distance_squared || (d2 == b.distance_squared && f < b.face),
                    };
                    if better {
                        best = Some(ClosestHit { face: f, point: q, bary, distance_squared: d2 });
                    }
                }
            } else {
                let (l, r) = (node.start, node.right);
                let (dl, dr) = (
                    box_distance_squared(&self.nodes[l].bounds, p),
                    box_distance_squared(&self.nodes[r].bounds, p),
                );
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    /// Number of triangles hit by the ray `origin + t * dir`, `t > 0`.
    pub fn count_crossings(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut hits = 0;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if !ray_hits_box(&node.bounds, origin, &inv) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    if ray_hits_triangle(origin, dir, &self.tris[f]) {
                        hits += 1;
                    }
                }
            } else {
                stack.push(node.start);
                stack.push(node.right);
            }
        }
        hits
    }
}

fn build(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    count: usize,
    tris: &[[Point3<f64>; 3]],
    centroids: &[Point3<f64>],
) -> usize {
    let slice = &mut order[start..start + count];
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &f in slice.iter() {
        tris[f].iter().for_each(|v| bounds.grow(v));
        cbounds.grow(&centroids[f]);
    }
    let idx = nodes.len();
    nodes.push(Node { bounds, start, count, right: 0 });
    if count <= LEAF_SIZE {
        return idx;
    }
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z { 0 } else if ext.y >= ext.z { 1 } else { 2 };
    if ext[axis] <= 0.0 {
        return idx;
    }
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });
    let left = build(nodes, order, start, mid, tris, centroids);
    let right = build(nodes, order, start + mid, count - mid, tris, centroids);
    nodes[idx].start = left;
    nodes[idx].count = 0;
    nodes[idx].right = right;
    idx
}

fn box_distance_squared(b: &Aabb, p: &Point3<f64>) -> f64 {
    let mut d2 = 0.0;
    for a in 0..3 {
        let v = if p[a] < b.min[a] {
            b.min[a] - p[a]
        } else if p[a] > b.max[a] {
            p[a] - b.max[a]
        } else {
            0.0
        };
        d2 += v * v;
    }
    d2
}

fn ray_hits_box(b: &Aabb, o: &Point3<f64>, inv: &Vector3<f64>) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let ta = (b.min[a] - o[a]) * inv[a];
        let tb = (b.max[a] - o[a]) * inv[a];
        let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        // NaN from 0 * inf means the ray lies in the slab plane; keep it.
        if !lo.is_nan() {
            t0 = t0.max(lo);
        }
        if !hi.is_nan() {
            t1 = t1.min(hi);
        }
    }
    t0 <= t1
}

fn ray_hits_triangle(o: &Point3<f64>, d: &Vector3<f64>, t: &[Point3<f64>; 3]) -> bool {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let pvec = d.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = o - t[0];
    let u = s.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) * inv > 0.0
}

/// Closest point on a triangle and its barycentric coordinates (Ericson's region test).
pub fn closest_point_on_triangle(p: &Point3<f64>, t: &[Point3<f64>; 3]) -> (Point3<f64>, [f64; 3]) {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}
