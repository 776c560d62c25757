//! Lumped mass and P1 stiffness matrices on the bulk and on the boundary.
//!
//! Mass matrices come from nodal-interpolation quadrature and are therefore
//! diagonal; they are stored as their diagonals. Boundary matrices use
//! boundary-local numbering, which coincides with the first `n_boundary`
//! bulk indices because of the boundary-first vertex ordering.

use crate::error::{Error, Result};
use crate::mesh::{validate_mesh, Mesh};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

/// Which block of a bulk-sized matrix to select. `Gamma` is the boundary
/// index range, `Interior` the rest and `Omega` all indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    GammaGamma,
    GammaInterior,
    InteriorGamma,
    InteriorInterior,
    GammaOmega,
    InteriorOmega,
    OmegaGamma,
    OmegaInterior,
}

/// Restriction and extension between bulk and boundary index sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexMaps {
    pub n_bulk: usize,
    pub n_boundary: usize,
}

impl IndexMaps {
    pub fn new<T: Scalar>(mesh: &Mesh<T>) -> Self {
        Self {
            n_bulk: mesh.n_vertices(),
            n_boundary: mesh.n_boundary,
        }
    }

    pub fn n_interior(&self) -> usize {
        self.n_bulk - self.n_boundary
    }

    pub fn boundary(&self) -> std::ops::Range<usize> {
        0..self.n_boundary
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        self.n_boundary..self.n_bulk
    }

    pub fn restrict_boundary<'a, T>(&self, v: &'a [T]) -> &'a [T] {
        assert_eq!(v.len(), self.n_bulk);
        &v[..self.n_boundary]
    }

    pub fn restrict_interior<'a, T>(&self, v: &'a [T]) -> &'a [T] {
        assert_eq!(v.len(), self.n_bulk);
        &v[self.n_boundary..]
    }

    pub fn extend_zero<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n_boundary);
        let mut out = vec![T::zero(); self.n_bulk];
        out[..self.n_boundary].copy_from_slice(v);
        out
    }

    /// Concatenates boundary and interior parts into a bulk vector.
    pub fn join<T: Scalar>(&self, gamma: &[T], interior: &[T]) -> Vec<T> {
        assert_eq!(gamma.len(), self.n_boundary);
        assert_eq!(interior.len(), self.n_interior());
        let mut out = Vec::with_capacity(self.n_bulk);
        out.extend_from_slice(gamma);
        out.extend_from_slice(interior);
        out
    }

    pub fn block<T: Scalar>(&self, a: &CsrMatrix<T>, which: Block) -> CsrMatrix<T> {
        assert_eq!((a.nrows(), a.ncols()), (self.n_bulk, self.n_bulk));
        let (g, i, o) = (self.boundary(), self.interior(), 0..self.n_bulk);
        let (rows, cols) = match which {
            Block::GammaGamma => (g.clone(), g),
            Block::GammaInterior => (g, i),
            Block::InteriorGamma => (i, g),
            Block::InteriorInterior => (i.clone(), i),
            Block::GammaOmega => (g, o),
            Block::InteriorOmega => (i, o),
            Block::OmegaGamma => (o, g),
            Block::OmegaInterior => (o, i),
        };
        a.block(rows, cols)
    }
}

#[derive(Clone, Debug)]
pub struct FemMatrices<T> {
    /// Diagonal of the lumped bulk mass matrix `M_Ω`.
    pub mass_bulk: Vec<T>,
    /// Diagonal of the lumped boundary mass matrix `M_Γ`.
    pub mass_boundary: Vec<T>,
    pub stiff_bulk: CsrMatrix<T>,
    pub stiff_boundary: CsrMatrix<T>,
    pub maps: IndexMaps,
}

impl<T: Scalar> FemMatrices<T> {
    pub fn n_bulk(&self) -> usize {
        self.maps.n_bulk
    }

    pub fn n_boundary(&self) -> usize {
        self.maps.n_boundary
    }

    /// `M_Ω|_ΓΓ`, the boundary part of the bulk mass diagonal.
    pub fn mass_bulk_gamma(&self) -> &[T] {
        &self.mass_bulk[..self.maps.n_boundary]
    }

    pub fn mass_bulk_interior(&self) -> &[T] {
        &self.mass_bulk[self.maps.n_boundary..]
    }
}

/// Element stiffness of a P1 triangle: `(∇λ_i · ∇λ_j)|K|`.
pub fn element_stiffness<T: Scalar>(p: [[T; 2]; 3]) -> [[T; 3]; 3] {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut b = [T::zero(); 3];
    let mut c = [T::zero(); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = p[j][1] - p[k][1];
        c[i] = p[k][0] - p[j][0];
    }
    let s = T::one() / (T::lit(2.0) * area2);
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (b[i] * b[j] + c[i] * c[j]) * s;
        }
    }
    out
}

/// Assembles `M_Ω`, `M_Γ`, `L_Ω`, `L_Γ`. The mesh must pass validation.
pub fn assemble<T: Scalar>(mesh: &Mesh<T>) -> Result<FemMatrices<T>> {
    let report = validate_mesh(mesh);
    if !report.is_valid() {
        let what: Vec<_> = report.failures().map(|c| c.name).collect();
        return Err(Error::InvalidMesh(format!(
            "assembly refused an invalid mesh: {}",
            what.join(", ")
        )));
    }
    let nv = mesh.n_vertices();
    let nb = mesh.n_boundary;
    let third = T::one() / T::lit(3.0);
    let half = T::lit(0.5);

    let mut mass_bulk = vec![T::zero(); nv];
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        for &v in tri {
            mass_bulk[v] += area * third;
        }
        let k = element_stiffness(tri.map(|v| mesh.vertices[v]));
        for (a, &va) in tri.iter().enumerate() {
            for (b, &vb) in tri.iter().enumerate() {
                triplets.push((va, vb, k[a][b]));
            }
        }
    }
    let stiff_bulk = CsrMatrix::from_triplets(nv, nv, &triplets);

    let mut mass_boundary = vec![T::zero(); nb];
    let mut triplets = Vec::with_capacity(4 * mesh.boundary_edges.len());
    for (e, &[a, b]) in mesh.boundary_edges.iter().enumerate() {
        let len = mesh.edge_length(e);
        mass_boundary[a] += len * half;
        mass_boundary[b] += len * half;
        let k = T::one() / len;
        triplets.extend([(a, a, k), (a, b, -k), (b, a, -k), (b, b, k)]);
    }
    let stiff_boundary = CsrMatrix::from_triplets(nb, nb, &triplets);

    Ok(FemMatrices {
        mass_bulk,
        mass_boundary,
        stiff_bulk,
        stiff_boundary,
        maps: IndexMaps::new(mesh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_square_mesh;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    fn vertex_at(mesh: &Mesh<f64>, p: [f64; 2]) -> usize {
        mesh.vertices.iter().position(|&v| v == p).unwrap()
    }

    #[test]
    fn single_cell_masses() {
        let mesh = build_unit_square_mesh::<f64>(1).unwrap();
        let m = assemble(&mesh).unwrap();
        let expect = [([0.0, 0.0], 1.0 / 3.0), ([1.0, 0.0], 1.0 / 6.0), ([0.0, 1.0], 1.0 / 6.0), ([1.0, 1.0], 1.0 / 3.0)];
        for (p, w) in expect {
            assert!((m.mass_bulk[vertex_at(&mesh, p)] - w).abs() < 1e-15);
        }
        assert!((m.mass_bulk.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(m.mass_boundary, vec![1.0; 4]);
        for s in m.stiff_bulk.row_sums() {
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn structural_invariants() {
        for n in [1, 2, 3, 5, 8] {
            let mesh = build_unit_square_mesh::<f64>(n).unwrap();
            let m = assemble(&mesh).unwrap();
            assert!(m.mass_bulk.iter().all(|&x| x > 0.0));
            assert!(m.mass_boundary.iter().all(|&x| x > 0.0));
            assert!((m.mass_bulk.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!((m.mass_boundary.iter().sum::<f64>() - 4.0).abs() < 4e-13);
            for a in [&m.stiff_bulk, &m.stiff_boundary] {
                assert_eq!(a.asymmetry(), 0.0);
                assert!(a.row_sums().iter().all(|s| s.abs() < 1e-13));
            }
            for (i, j, v) in m.stiff_bulk.iter() {
                if i != j {
                    assert!(v <= 1e-15, "positive off-diagonal ({i},{j}) = {v}");
                }
            }
        }
    }

    #[test]
    fn index_maps() {
        let maps = IndexMaps { n_bulk: 4, n_boundary: 2 };
        assert_eq!(maps.extend_zero(&[1.0, 2.0]), vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(maps.restrict_boundary(&[1.0, 2.0, 3.0, 4.0]), &[1.0, 2.0]);
        let v = [3.0, -1.0];
        assert_eq!(maps.restrict_boundary(&maps.extend_zero(&v)), &v);

        let mesh = build_unit_square_mesh::<f64>(3).unwrap();
        let m = assemble(&mesh).unwrap();
        let maps = m.maps;
        let a = &m.stiff_bulk;
        let gg = maps.block(a, Block::GammaGamma);
        let gi = maps.block(a, Block::GammaInterior);
        let ig = maps.block(a, Block::InteriorGamma);
        let ii = maps.block(a, Block::InteriorInterior);
        let nb = maps.n_boundary;
        for (i, j, v) in a.iter() {
            let w = match (i < nb, j < nb) {
                (true, true) => gg.get(i, j),
                (true, false) => gi.get(i, j - nb),
                (false, true) => ig.get(i - nb, j),
                (false, false) => ii.get(i - nb, j - nb),
            };
            assert_eq!(v, w);
        }
        let go = maps.block(a, Block::GammaOmega);
        let io = maps.block(a, Block::InteriorOmega);
        let og = maps.block(a, Block::OmegaGamma);
        let oi = maps.block(a, Block::OmegaInterior);
        assert_eq!(go.nnz() + io.nnz(), a.nnz());
        assert_eq!(og.nnz() + oi.nnz(), a.nnz());
        assert_eq!(og.transpose(), go);
        assert_eq!(oi.transpose(), io);
    }

    #[test]
    fn dirichlet_energy_matches_element_loop() {
        let mut seed = 7;
        for n in [2, 4, 7] {
            let mesh = build_unit_square_mesh::<f64>(n).unwrap();
            let m = assemble(&mesh).unwrap();
            let u: Vec<f64> = (0..mesh.n_vertices()).map(|_| lcg(&mut seed) * 2.0 - 1.0).collect();
            let mut direct = 0.0;
            for (t, tri) in mesh.triangles.iter().enumerate() {
                let [a, b, c] = tri.map(|v| mesh.vertices[v]);
                let [ua, ub, uc] = tri.map(|v| u[v]);
                // solve for the constant gradient
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let gx = ((ub - ua) * (c[1] - a[1]) - (uc - ua) * (b[1] - a[1])) / det;
                let gy = ((uc - ua) * (b[0] - a[0]) - (ub - ua) * (c[0] - a[0])) / det;
                direct += (gx * gx + gy * gy) * mesh.signed_area(t);
            }
            let q = m.stiff_bulk.quadratic_form(&u);
            assert!((q - direct).abs() <= 1e-13 * direct);
        }
    }

    #[test]
    fn lumped_mass_integrates_linears_exactly() {
        let mesh = build_unit_square_mesh::<f64>(6).unwrap();
        let m = assemble(&mesh).unwrap();
        // ∫(2 + 3x − y) over the unit square is 3
        let f: Vec<f64> = mesh.vertices.iter().map(|p| 2.0 + 3.0 * p[0] - p[1]).collect();
        let lumped: f64 = m.mass_bulk.iter().zip(&f).map(|(w, v)| w * v).sum();
        assert!((lumped - 3.0).abs() < 1e-14);
        // ∮(x + y) over the boundary is 4
        let g: Vec<f64> = mesh.vertices[..mesh.n_boundary].iter().map(|p| p[0] + p[1]).collect();
        let lumped: f64 = m.mass_boundary.iter().zip(&g).map(|(w, v)| w * v).sum();
        assert!((lumped - 4.0).abs() < 1e-13);
    }

    /// `‖(I − I_h){f_h g_h}‖_{L¹}` by a fine barycentric rule on each triangle.
    fn interpolation_defect(mesh: &Mesh<f64>, f: &[f64], g: &[f64]) -> f64 {
        let k = 12;
        let mut total = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let fv = tri.map(|v| f[v]);
            let gv = tri.map(|v| g[v]);
            let area = mesh.signed_area(t);
            let mut acc = 0.0;
            let mut count = 0;
            for i in 0..k {
                for j in 0..k - i {
                    // centroids of the sub-triangles pointing up
                    let l = [(i as f64 + 1.0 / 3.0) / k as f64, (j as f64 + 1.0 / 3.0) / k as f64];
                    let l = [l[0], l[1], 1.0 - l[0] - l[1]];
                    let fh: f64 = (0..3).map(|a| l[a] * fv[a]).sum();
                    let gh: f64 = (0..3).map(|a| l[a] * gv[a]).sum();
                    let ih: f64 = (0..3).map(|a| l[a] * fv[a] * gv[a]).sum();
                    acc += (fh * gh - ih).abs();
                    count += 1;
                }
            }
            total += acc / count as f64 * area;
        }
        total
    }

    #[test]
    fn nodal_interpolation_defect_is_second_order() {
        let pi = std::f64::consts::PI;
        let mut prev: Option<f64> = None;
        for n in [4, 8, 16, 32] {
            let mesh = build_unit_square_mesh::<f64>(n).unwrap();
            let m = assemble(&mesh).unwrap();
            let f: Vec<f64> = mesh.vertices.iter().map(|p| (pi * p[0]).sin() * (pi * p[1]).cos()).collect();
            let g: Vec<f64> = mesh.vertices.iter().map(|p| (2.0 * p[0] + p[1]).cos()).collect();
            let err = interpolation_defect(&mesh, &f, &g);
            let bound = mesh.h * mesh.h * m.stiff_bulk.quadratic_form(&f).sqrt() * m.stiff_bulk.quadratic_form(&g).sqrt();
            assert!(err <= bound, "n={n}: {err} > {bound}");
            if let Some(p) = prev {
                let rate = f64::log2(p / err);
                assert!(rate > 1.8, "n={n}: observed rate {rate}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn rejects_invalid_mesh() {
        let mut mesh = build_unit_square_mesh::<f64>(2).unwrap();
        mesh.vertices[4] = mesh.vertices[0];
        assert!(matches!(assemble(&mesh), Err(Error::InvalidMesh(_))));
    }
}
