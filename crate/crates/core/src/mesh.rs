//! Conforming triangulations of the unit square with an induced boundary
//! partition.
//!
//! Vertices are numbered boundary-first: indices `0..n_boundary` lie on
//! `Γ = ∂Ω`, walked counterclockwise from the origin, and interior vertices
//! follow in row-major order. Every boundary edge is a face of exactly one
//! triangle, so the boundary finite element space is the trace space of the
//! bulk one.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<T> {
    pub vertices: Vec<[T; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Counterclockwise around the domain; `[a, b]` runs from `a` to `b`.
    pub boundary_edges: Vec<[usize; 2]>,
    pub n_boundary: usize,
    /// Maximum element diameter.
    pub h: T,
}

impl<T: Scalar> Mesh<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_interior(&self) -> usize {
        self.vertices.len() - self.n_boundary
    }

    /// Signed area of triangle `t` (positive for counterclockwise).
    pub fn signed_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        T::lit(0.5) * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn edge_length(&self, e: usize) -> T {
        let [a, b] = self.boundary_edges[e].map(|v| self.vertices[v]);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Whether `p` lies on the boundary of the unit square.
    pub fn on_unit_square_boundary(p: [T; 2]) -> bool {
        let tol = T::epsilon() * T::lit(64.0);
        p.iter()
            .any(|&x| x.abs() <= tol || (x - T::one()).abs() <= tol)
    }
}

/// Structured mesh of `(0,1)²` with `n` cells per side, each cell split along
/// its lower-left to upper-right diagonal.
pub fn build_unit_square_mesh<T: Scalar>(n: usize) -> Result<Mesh<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "mesh subdivision count must be at least 1".into(),
        ));
    }
    let grid = |i: usize, j: usize| j * (n + 1) + i;

    // boundary walk: bottom, right, top, left, counterclockwise from (0,0)
    let mut walk = Vec::with_capacity(4 * n);
    walk.extend((0..n).map(|i| grid(i, 0)));
    walk.extend((0..n).map(|j| grid(n, j)));
    walk.extend((1..=n).rev().map(|i| grid(i, n)));
    walk.extend((1..=n).rev().map(|j| grid(0, j)));

    let mut new_index = vec![usize::MAX; (n + 1) * (n + 1)];
    for (k, &g) in walk.iter().enumerate() {
        new_index[g] = k;
    }
    let mut next = walk.len();
    for j in 1..n {
        for i in 1..n {
            new_index[grid(i, j)] = next;
            next += 1;
        }
    }

    let scale = T::one() / T::from_usize_lossy(n);
    let mut vertices = vec![[T::zero(); 2]; (n + 1) * (n + 1)];
    for j in 0..=n {
        for i in 0..=n {
            vertices[new_index[grid(i, j)]] = [
                T::from_usize_lossy(i) * scale,
                T::from_usize_lossy(j) * scale,
            ];
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = new_index[grid(i, j)];
            let b = new_index[grid(i + 1, j)];
            let c = new_index[grid(i + 1, j + 1)];
            let d = new_index[grid(i, j + 1)];
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let nb = walk.len();
    let boundary_edges = (0..nb).map(|k| [k, (k + 1) % nb]).collect();

    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        n_boundary: nb,
        h: T::SQRT_2() * scale,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshReport {
    pub checks: Vec<MeshCheck>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MeshCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && !c.passed)
    }

    /// `Err` naming every failed check, for callers that must reject invalid meshes.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let msg = self
            .failures()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidMesh(msg))
    }
}

pub const CHECK_INDICES: &str = "vertex indices";
pub const CHECK_DEGENERATE: &str = "degenerate triangle";
pub const CHECK_OBTUSE: &str = "non-obtuse triangles";
pub const CHECK_CONFORMING: &str = "conforming triangulation";
pub const CHECK_BOUNDARY_FACES: &str = "boundary edge faces";
pub const CHECK_TILES_DOMAIN: &str = "triangles tile domain";
pub const CHECK_TILES_BOUNDARY: &str = "boundary edges tile boundary";
pub const CHECK_ORDERING: &str = "boundary-first ordering";
pub const CHECK_MESH_SIZE: &str = "mesh size";

fn check(name: &'static str, failures: Vec<String>) -> MeshCheck {
    let passed = failures.is_empty();
    let detail = if passed {
        String::new()
    } else {
        let mut s = failures.iter().take(3).cloned().collect::<Vec<_>>().join(", ");
        if failures.len() > 3 {
            s.push_str(&format!(" (+{} more)", failures.len() - 3));
        }
        s
    };
    MeshCheck {
        name,
        passed,
        detail,
    }
}

/// Checks the mesh invariants: positive-area non-obtuse counterclockwise
/// triangles, a conforming triangulation whose single-owner edges are exactly
/// the listed boundary edges, exact tiling of the unit square and its boundary,
/// and boundary-first vertex numbering.
pub fn validate_mesh<T: Scalar>(mesh: &Mesh<T>) -> MeshReport {
    let nv = mesh.vertices.len();
    let mut checks = Vec::new();

    let bad_index: Vec<String> = mesh
        .triangles
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().any(|&v| v >= nv))
        .map(|(k, _)| format!("triangle {k}"))
        .chain(
            mesh.boundary_edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.iter().any(|&v| v >= nv))
                .map(|(k, _)| format!("boundary edge {k}")),
        )
        .collect();
    let indices_ok = bad_index.is_empty() && mesh.n_boundary <= nv;
    checks.push(check(CHECK_INDICES, bad_index));
    if !indices_ok {
        return MeshReport { checks };
    }

    let tiny = T::epsilon() * T::lit(16.0) * mesh.h.max(T::epsilon()).powi(2);
    let degenerate: Vec<String> = (0..mesh.triangles.len())
        .filter(|&t| !(mesh.signed_area(t) > tiny))
        .map(|t| format!("triangle {t} has area {:e}", mesh.signed_area(t)))
        .collect();
    checks.push(check(CHECK_DEGENERATE, degenerate));

    let obtuse: Vec<String> = mesh
        .triangles
        .iter()
        .enumerate()
        .filter(|(_, tri)| {
            (0..3).any(|k| {
                let p = mesh.vertices[tri[k]];
                let q = mesh.vertices[tri[(k + 1) % 3]];
                let r = mesh.vertices[tri[(k + 2) % 3]];
                let d = (q[0] - p[0]) * (r[0] - p[0]) + (q[1] - p[1]) * (r[1] - p[1]);
                d < -tiny
            })
        })
        .map(|(k, _)| format!("triangle {k}"))
        .collect();
    checks.push(check(CHECK_OBTUSE, obtuse));

    // edge ownership
    let mut owners: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *owners.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut overshared: Vec<_> = owners
        .iter()
        .filter(|(_, &c)| c > 2)
        .map(|(e, c)| format!("edge {e:?} shared by {c} triangles"))
        .collect();
    overshared.sort();
    checks.push(check(CHECK_CONFORMING, overshared));

    let listed: HashMap<(usize, usize), usize> = mesh
        .boundary_edges
        .iter()
        .enumerate()
        .map(|(k, &[a, b])| ((a.min(b), a.max(b)), k))
        .collect();
    let mut face_failures: Vec<String> = mesh
        .boundary_edges
        .iter()
        .enumerate()
        .filter(|(_, &[a, b])| owners.get(&(a.min(b), a.max(b))).copied() != Some(1))
        .map(|(k, _)| format!("boundary edge {k} is not a face of exactly one triangle"))
        .collect();
    let mut unlisted: Vec<String> = owners
        .iter()
        .filter(|(e, &c)| c == 1 && !listed.contains_key(e))
        .map(|(e, _)| format!("edge {e:?} lies on the hull but is not listed"))
        .collect();
    unlisted.sort();
    face_failures.extend(unlisted);
    if listed.len() != mesh.boundary_edges.len() {
        face_failures.push("duplicate boundary edges".into());
    }
    checks.push(check(CHECK_BOUNDARY_FACES, face_failures));

    let area: T = (0..mesh.triangles.len()).map(|t| mesh.signed_area(t).abs()).sum();
    let rel = T::lit(1e-12).max(T::epsilon() * T::lit(256.0));
    let mut tiling = Vec::new();
    if (area - T::one()).abs() > rel {
        tiling.push(format!("total triangle area {area} differs from |Ω| = 1"));
    }
    checks.push(check(CHECK_TILES_DOMAIN, tiling));

    let length: T = (0..mesh.boundary_edges.len()).map(|e| mesh.edge_length(e)).sum();
    let mut btiling = Vec::new();
    if (length - T::lit(4.0)).abs() > rel * T::lit(4.0) {
        btiling.push(format!("total boundary length {length} differs from |Γ| = 4"));
    }
    for (k, &[a, b]) in mesh.boundary_edges.iter().enumerate() {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        let mid = [(p[0] + q[0]) * T::lit(0.5), (p[1] + q[1]) * T::lit(0.5)];
        if !Mesh::on_unit_square_boundary(mid) {
            btiling.push(format!("boundary edge {k} leaves Γ"));
        }
    }
    checks.push(check(CHECK_TILES_BOUNDARY, btiling));

    let ordering: Vec<String> = mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|&(k, &p)| Mesh::on_unit_square_boundary(p) != (k < mesh.n_boundary))
        .map(|(k, p)| format!("vertex {k} at ({}, {})", p[0], p[1]))
        .collect();
    checks.push(check(CHECK_ORDERING, ordering));

    let mut diam = T::zero();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let p = mesh.vertices[tri[k]];
            let q = mesh.vertices[tri[(k + 1) % 3]];
            diam = diam.max((q[0] - p[0]).hypot(q[1] - p[1]));
        }
    }
    let mut size = Vec::new();
    if diam > mesh.h * (T::one() + rel) {
        size.push(format!("element diameter {diam} exceeds declared h = {}", mesh.h));
    }
    checks.push(check(CHECK_MESH_SIZE, size));

    MeshReport { checks }
}
