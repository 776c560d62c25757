//! Elimination of the chemical potentials.
//!
//! Restricting the bulk mass balance to the boundary and comparing it with
//! the boundary balance gives a compatibility condition between `μ_Ω|_Γ`,
//! `μ_Ω|_I` and `μ_Γ`. Together with the lumped potential equation this
//! determines both potentials from `U` through one solve with the boundary
//! sized symmetric positive definite matrix
//!
//! ```text
//! N = w∞ (m_Ω L_ΓΓ + m_Γ D M_Γ⁻¹ L_Γ M_Γ⁻¹ D) + w₀ (M_Γ + 2β D + β² D M_Γ⁻¹ D)
//! ```
//!
//! with `D = M_Ω|_ΓΓ`, `w∞ = L̃/(L̃+1)`, `w₀ = 1/(L̃+1)` and `L̃ = L/m_Ω`.
//! `N` depends on the mesh and the parameters only, so it is factored once.

use crate::assembly::{Block, FemMatrices};
use crate::error::{Error, Result};
use crate::linalg::SpdSolver;
use crate::params::{CouplingWeights, ModelParams};
use crate::potential::Potentials;
use crate::scalar::{max_abs, Scalar};
use crate::sparse::CsrMatrix;

/// Bulk potential `μ_Ω` (all vertices) and surface potential `μ_Γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChemicalPotentials<T> {
    pub bulk: Vec<T>,
    pub surface: Vec<T>,
}

impl<T: Scalar> ChemicalPotentials<T> {
    pub fn zeros(n_bulk: usize, n_boundary: usize) -> Self {
        Self {
            bulk: vec![T::zero(); n_bulk],
            surface: vec![T::zero(); n_boundary],
        }
    }

    /// `βμ_Γ − μ_Ω|_Γ`
    pub fn gap(&self, beta: T) -> Vec<T> {
        self.surface
            .iter()
            .zip(&self.bulk)
            .map(|(&s, &b)| beta * s - b)
            .collect()
    }
}

/// Right-hand sides of the lumped potential equation, split into boundary
/// and interior rows.
#[derive(Clone, Debug)]
pub struct PotentialRhs<T> {
    pub gamma: Vec<T>,
    pub interior: Vec<T>,
}

/// Evaluates `R_Γ(U)` and `R_I(U)`:
///
/// ```text
/// R = ε L_Ω U + ε⁻¹ M_Ω (F₁′(U) + F₂′(U⁻)) + ext[δκ L_Γ U_Γ + δ⁻¹ M_Γ (G₁′(U_Γ) + G₂′(U⁻_Γ))]
/// ```
pub fn potential_rhs<T: Scalar>(
    u: &[T],
    u_prev: &[T],
    m: &FemMatrices<T>,
    params: &ModelParams<T>,
    pot: &Potentials<T>,
) -> PotentialRhs<T> {
    let nb = m.n_boundary();
    assert_eq!(u.len(), m.n_bulk());
    assert_eq!(u_prev.len(), m.n_bulk());
    let inv_eps = T::one() / params.epsilon;
    let inv_delta = T::one() / params.delta;
    let dk = params.delta * params.kappa;

    let lu = m.stiff_bulk.mul_vec(u);
    let mut r: Vec<T> = (0..u.len())
        .map(|k| {
            let f = pot.bulk.convex_deriv(u[k]) + pot.bulk.concave_deriv(u_prev[k]);
            params.epsilon * lu[k] + inv_eps * m.mass_bulk[k] * f
        })
        .collect();
    let lg = m.stiff_boundary.mul_vec(&u[..nb]);
    for k in 0..nb {
        let g = pot.surface.convex_deriv(u[k]) + pot.surface.concave_deriv(u_prev[k]);
        r[k] += dk * lg[k] + inv_delta * m.mass_boundary[k] * g;
    }
    let interior = r.split_off(nb);
    PotentialRhs { gamma: r, interior }
}

#[derive(Clone, Debug)]
pub struct SchurSystem<T> {
    pub weights: CouplingWeights<T>,
    pub a: CsrMatrix<T>,
    pub b: CsrMatrix<T>,
    pub c: CsrMatrix<T>,
    pub n: CsrMatrix<T>,
    solver: SpdSolver<T>,
    l_gamma_interior: CsrMatrix<T>,
    params: ModelParams<T>,
}

/// Relative residual accepted from a solve with `N` before it is reported
/// as a failure.
fn solve_tol<T: Scalar>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(1e3))
}

/// Builds `A`, `B`, `C` and `N` and factors `N`.
pub fn build_schur<T: Scalar>(m: &FemMatrices<T>, params: &ModelParams<T>) -> Result<SchurSystem<T>> {
    params.validate()?;
    let w = params.weights();
    let nb = m.n_boundary();
    let d = m.mass_bulk_gamma();
    let mg = &m.mass_boundary;
    let beta = params.beta;
    let l_gg = m.maps.block(&m.stiff_bulk, Block::GammaGamma);
    let l_gi = m.maps.block(&m.stiff_bulk, Block::GammaInterior);
    let l_g = &m.stiff_boundary;
    let inv_d: Vec<T> = d.iter().map(|&x| T::one() / x).collect();
    let inv_mg: Vec<T> = mg.iter().map(|&x| T::one() / x).collect();

    let a = l_gg
        .scale_rows(&inv_d)
        .scaled(w.w_inf * params.m_bulk)
        .add_diagonal(
            &(0..nb)
                .map(|k| w.w_zero * inv_d[k] * mg[k] + beta * w.w_zero)
                .collect::<Vec<_>>(),
        );
    let b = l_gi.scale_rows(&inv_d).scaled(w.w_inf * params.m_bulk);
    let c = l_g
        .scale_rows(&inv_mg)
        .scaled(w.w_inf * params.m_surf)
        .add_diagonal(
            &(0..nb)
                .map(|k| beta * w.w_zero * inv_d[k] * mg[k] + beta * beta * w.w_zero)
                .collect::<Vec<_>>(),
        );

    // N is assembled entry by entry with commuted products so that it is
    // bitwise symmetric.
    let s: Vec<T> = (0..nb).map(|k| d[k] * inv_mg[k]).collect();
    let mut triplets = Vec::with_capacity(l_gg.nnz() + l_g.nnz() + nb);
    let wb = w.w_inf * params.m_bulk;
    let ws = w.w_inf * params.m_surf;
    for (i, j, v) in l_gg.iter() {
        triplets.push((i, j, wb * v));
    }
    for (i, j, v) in l_g.iter() {
        triplets.push((i, j, ws * ((s[i] * s[j]) * v)));
    }
    for k in 0..nb {
        let diag = mg[k] + T::lit(2.0) * beta * d[k] + beta * beta * d[k] * s[k];
        triplets.push((k, k, w.w_zero * diag));
    }
    let n = CsrMatrix::from_triplets(nb, nb, &triplets);
    let solver = SpdSolver::new(&n, T::lit(1e-12).max(T::epsilon() * T::lit(16.0)));

    Ok(SchurSystem {
        weights: w,
        a,
        b,
        c,
        n,
        solver,
        l_gamma_interior: l_gi,
        params: *params,
    })
}

impl<T: Scalar> SchurSystem<T> {
    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    /// Whether `N` was factored directly (it always should be, being SPD).
    pub fn factored(&self) -> bool {
        self.solver.is_direct()
    }

    /// Solves `N x = rhs`, checking the residual.
    pub fn solve_n(&self, rhs: &[T]) -> Result<Vec<T>> {
        let x = self.solver.solve(rhs)?;
        let res = crate::linalg::relative_residual(&self.n, &x, rhs);
        if !(res <= solve_tol::<T>()) {
            return Err(Error::LinearSolve {
                reason: "solve with the Schur matrix N did not converge".into(),
                residual: res.to_f64_lossy(),
            });
        }
        Ok(x)
    }

    /// Potentials from precomputed `R_Γ`, `R_I`.
    pub fn recover_from_rhs(&self, m: &FemMatrices<T>, r: &PotentialRhs<T>) -> Result<ChemicalPotentials<T>> {
        let nb = m.n_boundary();
        let w = self.weights;
        let p = &self.params;
        let d = m.mass_bulk_gamma();
        let mg = &m.mass_boundary;

        let mu_i: Vec<T> = r
            .interior
            .iter()
            .zip(m.mass_bulk_interior())
            .map(|(&x, &mi)| x / mi)
            .collect();
        // D C M_Γ⁻¹ R_Γ = w∞ m_Γ D M_Γ⁻¹ L_Γ M_Γ⁻¹ R_Γ + β w₀ R_Γ + β² w₀ D M_Γ⁻¹ R_Γ
        let v: Vec<T> = (0..nb).map(|k| r.gamma[k] / mg[k]).collect();
        let lv = m.stiff_boundary.mul_vec(&v);
        let lmu = self.l_gamma_interior.mul_vec(&mu_i);
        let rhs: Vec<T> = (0..nb)
            .map(|k| {
                w.w_inf * p.m_surf * d[k] * lv[k] / mg[k]
                    + p.beta * w.w_zero * r.gamma[k]
                    + p.beta * p.beta * w.w_zero * d[k] * v[k]
                    - w.w_inf * p.m_bulk * lmu[k]
            })
            .collect();
        let mu_g = self.solve_n(&rhs)?;
        let surface: Vec<T> = (0..nb).map(|k| (r.gamma[k] - d[k] * mu_g[k]) / mg[k]).collect();
        Ok(ChemicalPotentials {
            bulk: m.maps.join(&mu_g, &mu_i),
            surface,
        })
    }

    pub fn recover(
        &self,
        u: &[T],
        u_prev: &[T],
        m: &FemMatrices<T>,
        pot: &Potentials<T>,
    ) -> Result<ChemicalPotentials<T>> {
        let r = potential_rhs(u, u_prev, m, &self.params, pot);
        self.recover_from_rhs(m, &r)
    }

    /// Max-norm defect of the compatibility condition
    ///
    /// ```text
    /// w∞ m_Ω [M_Ω⁻¹ L_Ω μ_Ω]|_Γ − w₀ D⁻¹ M_Γ (βμ_Γ − μ_Ω|_Γ)
    ///     = w∞ m_Γ M_Γ⁻¹ L_Γ μ_Γ + β w₀ (βμ_Γ − μ_Ω|_Γ)
    /// ```
    pub fn compatibility_residual(&self, mu: &ChemicalPotentials<T>, m: &FemMatrices<T>) -> T {
        let nb = m.n_boundary();
        let w = self.weights;
        let p = &self.params;
        let d = m.mass_bulk_gamma();
        let mg = &m.mass_boundary;
        let lmu = m.stiff_bulk.mul_vec(&mu.bulk);
        let lg = m.stiff_boundary.mul_vec(&mu.surface);
        let gap = mu.gap(p.beta);
        let diff: Vec<T> = (0..nb)
            .map(|k| {
                let lhs = w.w_inf * p.m_bulk * lmu[k] / d[k] - w.w_zero * mg[k] / d[k] * gap[k];
                let rhs = w.w_inf * p.m_surf * lg[k] / mg[k] + p.beta * w.w_zero * gap[k];
                lhs - rhs
            })
            .collect();
        max_abs(&diff)
    }

    /// Max-norm defect of the lumped potential equation
    /// `M_Ω μ_Ω + ext(M_Γ μ_Γ) = R(U)`, relative to `1 + ‖R‖∞`.
    pub fn potential_equation_residual(
        &self,
        u: &[T],
        u_prev: &[T],
        mu: &ChemicalPotentials<T>,
        m: &FemMatrices<T>,
        pot: &Potentials<T>,
    ) -> T {
        let r = potential_rhs(u, u_prev, m, &self.params, pot);
        let nb = m.n_boundary();
        let mut worst = T::zero();
        let mut scale = T::zero();
        for k in 0..m.n_bulk() {
            let (lhs, rk) = if k < nb {
                (m.mass_bulk[k] * mu.bulk[k] + m.mass_boundary[k] * mu.surface[k], r.gamma[k])
            } else {
                (m.mass_bulk[k] * mu.bulk[k], r.interior[k - nb])
            };
            worst = worst.max((lhs - rk).abs());
            scale = scale.max(rk.abs());
        }
        worst / (T::one() + scale)
    }
}

pub fn recover_potentials<T: Scalar>(
    u: &[T],
    u_prev: &[T],
    sys: &SchurSystem<T>,
    m: &FemMatrices<T>,
    pot: &Potentials<T>,
) -> Result<ChemicalPotentials<T>> {
    sys.recover(u, u_prev, m, pot)
}

pub fn compatibility_residual<T: Scalar>(mu: &ChemicalPotentials<T>, sys: &SchurSystem<T>, m: &FemMatrices<T>) -> T {
    sys.compatibility_residual(mu, m)
}
