//! Dense reference solver for tiny meshes.
//!
//! Shares the assembled matrices with the production path but none of its
//! elimination or sparse solver code. The potentials come from a dense LU
//! solve of the full block system
//!
//! ```text
//! ⎡ D    0     M_Γ ⎤ ⎡μ_Ω|_Γ⎤   ⎡R_Γ⎤
//! ⎢ 0    M_II  0   ⎥ ⎢μ_Ω|_I⎥ = ⎢R_I⎥
//! ⎣ A    B    −C   ⎦ ⎣ μ_Γ  ⎦   ⎣ 0 ⎦
//! ```
//!
//! and a time step is a dense Newton solve in `(U, μ_Ω, μ_Γ)` of the summed
//! mass balance together with these rows.

use crate::assembly::{assemble, FemMatrices};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::params::ModelParams;
use crate::potential::Potentials;
use crate::scalar::{max_abs, Scalar};
use crate::schur::ChemicalPotentials;

/// Largest bulk dimension the dense routines accept.
pub const MAX_BULK: usize = 200;

/// Row-major dense square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] += v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |a, (&m, &v)| a + m * v)
            })
            .collect()
    }

    /// LU factorization with partial pivoting.
    pub fn lu(mut self) -> Result<DenseLu<T>> {
        let n = self.n;
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let (mut umax, mut umin) = (T::zero(), T::infinity());
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if self.get(i, k).abs() > self.get(p, k).abs() {
                    p = i;
                }
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    self.data.swap(k * n + j, p * n + j);
                }
            }
            let pivot = self.get(k, k);
            umax = umax.max(pivot.abs());
            umin = umin.min(pivot.abs());
            if !(pivot.abs() > scale * T::epsilon() * T::lit(1e-3)) {
                let cond = if umin > T::zero() { umax / umin } else { T::infinity() };
                return Err(Error::LinearSolve {
                    reason: format!("singular dense system (pivot ratio estimate {cond:e})"),
                    residual: f64::NAN,
                });
            }
            for i in k + 1..n {
                let l = self.get(i, k) / pivot;
                self.set(i, k, l);
                if l != T::zero() {
                    for j in k + 1..n {
                        let v = self.get(k, j);
                        self.add(i, j, -l * v);
                    }
                }
            }
        }
        Ok(DenseLu { a: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    a: DenseMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.a.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let xk = x[k];
            for i in k + 1..n {
                x[i] -= self.a.get(i, k) * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= self.a.get(k, j) * x[j];
            }
            x[k] = s / self.a.get(k, k);
        }
        x
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(m: &DenseMatrix<T>) -> Vec<T> {
    let n = m.n;
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a.get(i, j) * a.get(i, j);
                }
            }
        }
        let total = a.data.iter().fold(T::zero(), |s, &v| s + v * v);
        if off <= total * T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    ev
}

/// Dense block operator of the potential system, unknowns ordered as
/// `(μ_Ω, μ_Γ)`.
struct Blocks<T> {
    system: DenseMatrix<T>,
    nb: usize,
    nv: usize,
}

fn potential_system<T: Scalar>(m: &FemMatrices<T>, p: &ModelParams<T>) -> Blocks<T> {
    let nv = m.n_bulk();
    let nb = m.n_boundary();
    let w = p.weights();
    let (wi, wz) = (w.w_inf, w.w_zero);
    let beta = p.beta;
    let l_om = m.stiff_bulk.to_dense();
    let l_ga = m.stiff_boundary.to_dense();
    let dm = &m.mass_bulk;
    let mg = &m.mass_boundary;

    // unknown layout: μ_Ω (nv, boundary first) then μ_Γ (nb)
    let size = nv + nb;
    let mut s = DenseMatrix::zeros(size);
    for k in 0..nb {
        s.set(k, k, dm[k]);
        s.set(k, nv + k, mg[k]);
    }
    for k in nb..nv {
        s.set(k, k, dm[k]);
    }
    for i in 0..nb {
        let row = nv + i;
        // A = w∞ m_Ω D⁻¹ L_ΓΓ + w₀ D⁻¹ M_Γ + β w₀ 1,  B = w∞ m_Ω D⁻¹ L_ΓI
        for j in 0..nv {
            s.add(row, j, wi * p.m_bulk * l_om[i][j] / dm[i]);
        }
        s.add(row, i, wz * mg[i] / dm[i] + beta * wz);
        // −C = −(w∞ m_Γ M_Γ⁻¹ L_Γ + β w₀ D⁻¹ M_Γ + β² w₀ 1)
        for j in 0..nb {
            s.add(row, nv + j, -wi * p.m_surf * l_ga[i][j] / mg[i]);
        }
        s.add(row, nv + i, -(beta * wz * mg[i] / dm[i] + beta * beta * wz));
    }
    Blocks { system: s, nb, nv }
}

/// `R(U)` of the potential equation, all bulk rows, computed densely.
fn rhs_dense<T: Scalar>(u: &[T], u_prev: &[T], m: &FemMatrices<T>, p: &ModelParams<T>, pot: &Potentials<T>) -> Vec<T> {
    let nv = m.n_bulk();
    let nb = m.n_boundary();
    let l_om = m.stiff_bulk.to_dense();
    let l_ga = m.stiff_boundary.to_dense();
    let mut r = vec![T::zero(); nv];
    for i in 0..nv {
        let mut s = T::zero();
        for j in 0..nv {
            s += l_om[i][j] * u[j];
        }
        let f = pot.bulk.convex_deriv(u[i]) + pot.bulk.concave_deriv(u_prev[i]);
        r[i] = p.epsilon * s + m.mass_bulk[i] * f / p.epsilon;
    }
    for i in 0..nb {
        let mut s = T::zero();
        for j in 0..nb {
            s += l_ga[i][j] * u[j];
        }
        let g = pot.surface.convex_deriv(u[i]) + pot.surface.concave_deriv(u_prev[i]);
        r[i] += p.delta * p.kappa * s + m.mass_boundary[i] * g / p.delta;
    }
    r
}

fn check_size<T: Scalar>(m: &FemMatrices<T>) -> Result<()> {
    if m.n_bulk() > MAX_BULK {
        return Err(Error::InvalidParameter(format!(
            "dense oracle limited to {MAX_BULK} vertices, mesh has {}",
            m.n_bulk()
        )));
    }
    Ok(())
}

fn split<T: Scalar>(x: &[T], nv: usize) -> ChemicalPotentials<T> {
    ChemicalPotentials {
        bulk: x[..nv].to_vec(),
        surface: x[nv..].to_vec(),
    }
}

/// Potentials from the dense block system, on pre-assembled matrices.
pub fn oracle_potentials<T: Scalar>(
    u: &[T],
    u_prev: &[T],
    m: &FemMatrices<T>,
    params: &ModelParams<T>,
    pot: &Potentials<T>,
) -> Result<ChemicalPotentials<T>> {
    check_size(m)?;
    params.validate()?;
    let blocks = potential_system(m, params);
    let mut b = rhs_dense(u, u_prev, m, params, pot);
    b.resize(blocks.nv + blocks.nb, T::zero());
    let x = blocks.system.lu()?.solve(&b);
    Ok(split(&x, m.n_bulk()))
}

pub fn oracle_recover_potentials<T: Scalar>(
    u: &[T],
    u_prev: &[T],
    mesh: &Mesh<T>,
    params: &ModelParams<T>,
    pot: &Potentials<T>,
) -> Result<ChemicalPotentials<T>> {
    let m = assemble(mesh)?;
    oracle_potentials(u, u_prev, &m, params, pot)
}

/// Result of a dense Newton step.
#[derive(Clone, Debug)]
pub struct OracleStep<T> {
    pub u: Vec<T>,
    pub mu: ChemicalPotentials<T>,
    pub iterations: usize,
}

/// One time step by dense damped Newton in `(U, μ_Ω, μ_Γ)`, on
/// pre-assembled matrices.
pub fn oracle_step_on<T: Scalar>(
    u_prev: &[T],
    m: &FemMatrices<T>,
    params: &ModelParams<T>,
    pot: &Potentials<T>,
) -> Result<OracleStep<T>> {
    check_size(m)?;
    params.validate()?;
    let nv = m.n_bulk();
    let nb = m.n_boundary();
    let p = params;
    let w = p.weights();
    let l_om = m.stiff_bulk.to_dense();
    let l_ga = m.stiff_boundary.to_dense();
    let tau = p.tau;
    let inv_beta = T::one() / p.beta;
    // D = M_Ω + β⁻¹ ext M_Γ
    let dfull: Vec<T> = (0..nv)
        .map(|k| m.mass_bulk[k] + if k < nb { inv_beta * m.mass_boundary[k] } else { T::zero() })
        .collect();
    let size = 2 * nv + nb;
    let (mo, mg) = (nv, 2 * nv);

    // rows: mass balance, potential equation, boundary condition
    let residual = |x: &[T]| -> Vec<T> {
        let u = &x[..nv];
        let rhs = rhs_dense(u, u_prev, m, p, pot);
        let mut r = vec![T::zero(); size];
        for i in 0..nv {
            let mut s = dfull[i] * (u[i] - u_prev[i]);
            for j in 0..nv {
                s += tau * p.m_bulk * l_om[i][j] * x[mo + j];
            }
            if i < nb {
                for j in 0..nb {
                    s += tau * inv_beta * p.m_surf * l_ga[i][j] * x[mg + j];
                }
            }
            r[i] = s;
            let mut q = m.mass_bulk[i] * x[mo + i] - rhs[i];
            if i < nb {
                q += m.mass_boundary[i] * x[mg + i];
            }
            r[nv + i] = q;
        }
        for i in 0..nb {
            let mut flux = T::zero();
            for j in 0..nb {
                flux += l_ga[i][j] * x[mg + j];
            }
            let mgi = m.mass_boundary[i];
            r[mg + i] = w.w_inf * (mgi * (u[i] - u_prev[i]) + tau * p.m_surf * flux)
                + tau * p.beta * w.w_zero * mgi * (p.beta * x[mg + i] - x[mo + i]);
        }
        r
    };
    let norm = |r: &[T]| max_abs(r);

    let jacobian = |x: &[T]| -> DenseMatrix<T> {
        let mut jac = DenseMatrix::zeros(size);
        for i in 0..nv {
            jac.set(i, i, dfull[i]);
            for j in 0..nv {
                jac.add(i, mo + j, tau * p.m_bulk * l_om[i][j]);
                jac.add(nv + i, j, -p.epsilon * l_om[i][j]);
            }
            jac.add(nv + i, mo + i, m.mass_bulk[i]);
            jac.add(nv + i, i, -m.mass_bulk[i] * pot.bulk.convex_second(x[i]) / p.epsilon);
        }
        for i in 0..nb {
            let mgi = m.mass_boundary[i];
            for j in 0..nb {
                jac.add(i, mg + j, tau * inv_beta * p.m_surf * l_ga[i][j]);
                jac.add(nv + i, j, -p.delta * p.kappa * l_ga[i][j]);
                jac.add(mg + i, mg + j, w.w_inf * tau * p.m_surf * l_ga[i][j]);
            }
            jac.add(nv + i, mg + i, mgi);
            jac.add(nv + i, i, -mgi * pot.surface.convex_second(x[i]) / p.delta);
            jac.add(mg + i, i, w.w_inf * mgi);
            jac.add(mg + i, mo + i, -tau * p.beta * w.w_zero * mgi);
            jac.add(mg + i, mg + i, tau * p.beta * p.beta * w.w_zero * mgi);
        }
        jac
    };

    let mu0 = oracle_potentials(u_prev, u_prev, m, p, pot)?;
    let mut x: Vec<T> = u_prev.iter().chain(&mu0.bulk).chain(&mu0.surface).copied().collect();
    let mut r = residual(&x);
    let mut best = (x.clone(), norm(&r));
    let mut patience = 8;
    let mut iterations = 0;
    loop {
        if iterations >= 50 {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: norm(&r).to_f64_lossy(),
                tolerance: 0.0,
            });
        }
        let neg: Vec<T> = r.iter().map(|&v| -v).collect();
        let dx = jacobian(&x).lu()?.solve(&neg);
        iterations += 1;

        // full steps are tolerated while the residual stays within a wide
        // band around the best one; otherwise damp from the best iterate
        let full: Vec<T> = x.iter().zip(&dx).map(|(&a, &d)| a + d).collect();
        let rf = residual(&full);
        let (mut lambda, mut trial, mut dx) = (T::one(), full, dx);
        if norm(&rf) < best.1 {
            r = rf;
            patience = 8;
        } else if patience > 0 && norm(&rf) <= T::lit(1e6) * best.1 {
            r = rf;
            patience -= 1;
        } else {
            patience = 0;
            x = best.0.clone();
            r = residual(&x);
            let neg: Vec<T> = r.iter().map(|&v| -v).collect();
            dx = jacobian(&x).lu()?.solve(&neg);
            let r0 = norm(&r);
            let mut halvings = 0;
            loop {
                trial = x.iter().zip(&dx).map(|(&a, &d)| a + lambda * d).collect::<Vec<_>>();
                let rt = residual(&trial);
                if norm(&rt) < r0 || halvings == 20 {
                    r = rt;
                    break;
                }
                lambda *= T::lit(0.5);
                halvings += 1;
            }
        }
        if norm(&r) < best.1 {
            best = (trial.clone(), norm(&r));
        }
        x = trial;
        let step = max_abs(&dx) * lambda;
        if step <= T::lit(1e-11).max(T::epsilon() * T::lit(1e4)) * (T::one() + max_abs(&x)) {
            break;
        }
    }
    let mu = split(&x[nv..], nv);
    x.truncate(nv);
    Ok(OracleStep { u: x, mu, iterations })
}

pub fn oracle_step<T: Scalar>(
    u_prev: &[T],
    mesh: &Mesh<T>,
    params: &ModelParams<T>,
    pot: &Potentials<T>,
) -> Result<OracleStep<T>> {
    let m = assemble(mesh)?;
    oracle_step_on(u_prev, &m, params, pot)
}
