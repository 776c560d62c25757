//! Time stepping.
//!
//! Each step solves the coupled system in `x = (U, μ_Ω, μ_Γ)`
//!
//! ```text
//! r₁ = D (U − U⁻) + τ m_Ω L_Ω μ_Ω + τ β⁻¹ m_Γ ext(L_Γ μ_Γ)
//! r₃ = M_Ω μ_Ω + ext(M_Γ μ_Γ) − R(U)
//! r₂ = w∞ [M_Γ (U_Γ − U⁻_Γ) + τ m_Γ L_Γ μ_Γ] + τ β w₀ M_Γ (βμ_Γ − μ_Ω|_Γ)
//! ```
//!
//! with `D = M_Ω + β⁻¹ ext(M_Γ)`, by damped Newton. The Jacobian is
//! constant except for the diagonal `F₁″`, `G₁″` entries of `∂r₃/∂U`, so
//! its pattern and band ordering are computed once. After convergence the
//! potentials are recovered through the Schur complement and compared with
//! the Newton iterate; the recovered ones are reported.

use crate::assembly::FemMatrices;
use crate::diagnostics::{
    discrete_energy, energy_slack, masses, potential_gap, step_dissipation, EnergyBreakdown, GapNorms, Masses,
    Sample,
};
use crate::error::{Error, Result};
use crate::linalg::BandPattern;
use crate::params::ModelParams;
use crate::potential::Potentials;
use crate::scalar::{max_abs, max_abs_diff, Scalar};
use crate::schur::{build_schur, potential_rhs, ChemicalPotentials, SchurSystem};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Absolute part of the nonlinear tolerance.
    pub tol_abs: T,
    /// Relative part, scaled by the lumped norm of `U⁻`.
    pub tol_rel: T,
    pub max_iterations: usize,
    /// Line search halvings per Newton iteration.
    pub max_halvings: usize,
    /// Allowed max-norm difference between the Newton potentials and the
    /// recovered ones, relative to `1 + ‖μ‖∞`.
    pub equivalence_tol: T,
    /// Retry a failed step as two steps of half the size.
    pub retry_halved_tau: bool,
    /// How many times a step may be halved.
    pub max_retries: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        let floor = T::epsilon() * T::lit(1e3);
        Self {
            tol_abs: T::lit(1e-10).max(floor),
            tol_rel: T::lit(1e-10).max(floor),
            max_iterations: 50,
            max_halvings: 20,
            equivalence_tol: T::lit(1e-9).max(T::epsilon() * T::lit(1e4)),
            retry_halved_tau: false,
            max_retries: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub u: Vec<T>,
    pub mu: ChemicalPotentials<T>,
    pub newton_iters: usize,
    /// Lumped dual norm of the eliminated residual at the solution.
    pub residual_norm: T,
    /// Coupled residual norm before each Newton iteration and at the end.
    pub residual_history: Vec<T>,
    pub halvings: usize,
    /// Number of sub-steps taken (1 unless the step was retried).
    pub substeps: usize,
    /// `τ m_Ω μ_ΩᵀL_Ωμ_Ω + τ m_Γ μ_ΓᵀL_Γμ_Γ + B_L`, summed over sub-steps.
    pub dissipation: T,
}

/// Per-step diagnostics of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    pub time: T,
    pub energy: EnergyBreakdown<T>,
    pub masses: Masses<T>,
    pub gap: GapNorms<T>,
    /// Energy inequality slack; `None` for the initial state.
    pub slack: Option<T>,
    pub newton_iters: usize,
    pub residual_norm: T,
    pub compatibility: T,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub records: Vec<StepRecord<T>>,
    /// States on the coarse sampling grid, always including the last one.
    pub samples: Vec<Sample<T>>,
    pub sample_every: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last_sample(&self) -> &Sample<T> {
        self.samples.last().expect("a trajectory holds at least the initial state")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub n_steps: usize,
    /// Sampling interval in steps for error norms.
    pub sample_every: usize,
}

/// Consecutive full Newton steps allowed without improving on the best
/// residual so far.
const WATCHDOG_STEPS: usize = 8;
/// Largest tolerated growth of the residual over the best one during those
/// steps.
const WATCHDOG_GROWTH: f64 = 1e6;

fn add_scaled<T: Scalar>(x: &[T], dx: &[T], lambda: T) -> Vec<T> {
    x.iter().zip(dx).map(|(&a, &d)| a + lambda * d).collect()
}

pub struct Stepper<T: Scalar> {
    matrices: FemMatrices<T>,
    schur: SchurSystem<T>,
    params: ModelParams<T>,
    potentials: Potentials<T>,
    options: SolverOptions<T>,
    jacobian: CsrMatrix<T>,
    /// Value slots of the diagonal of `∂r₃/∂U`.
    nonlinear_slots: Vec<usize>,
    pattern: BandPattern,
    d_full: Vec<T>,
    /// Row scale of `r₂`, `1/(w∞ + τβw₀)`, so that its norm is comparable
    /// for all couplings.
    r2_scale: T,
}

impl<T: Scalar> std::fmt::Debug for Stepper<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("params", &self.params)
            .field("options", &self.options)
            .field("unknowns", &self.jacobian.nrows())
            .field("band", &(self.pattern.lower(), self.pattern.upper()))
            .finish()
    }
}

impl<T: Scalar> Stepper<T> {
    pub fn new(
        matrices: &FemMatrices<T>,
        params: &ModelParams<T>,
        potentials: &Potentials<T>,
        options: SolverOptions<T>,
    ) -> Result<Self> {
        params.validate()?;
        let schur = build_schur(matrices, params)?;
        Self::with_schur(matrices, schur, params, potentials, options)
    }

    fn with_schur(
        m: &FemMatrices<T>,
        schur: SchurSystem<T>,
        params: &ModelParams<T>,
        potentials: &Potentials<T>,
        options: SolverOptions<T>,
    ) -> Result<Self> {
        let nv = m.n_bulk();
        let nb = m.n_boundary();
        let p = params;
        let w = p.weights();
        let tau = p.tau;
        let inv_beta = T::one() / p.beta;
        let r2_scale = T::one() / (w.w_inf + tau * p.beta * w.w_zero);
        let d_full: Vec<T> = (0..nv)
            .map(|k| m.mass_bulk[k] + if k < nb { inv_beta * m.mass_boundary[k] } else { T::zero() })
            .collect();

        // rows: r₁ (U), r₃ (μ_Ω), r₂ (μ_Γ); columns: U, μ_Ω, μ_Γ
        let (cu, cmo, cmg) = (0, nv, 2 * nv);
        let (r1, r3, r2) = (0, nv, 2 * nv);
        let mut t = Vec::new();
        for i in 0..nv {
            t.push((r1 + i, cu + i, d_full[i]));
        }
        for (i, j, v) in m.stiff_bulk.iter() {
            t.push((r1 + i, cmo + j, tau * p.m_bulk * v));
            t.push((r3 + i, cu + j, -p.epsilon * v));
        }
        for (i, j, v) in m.stiff_boundary.iter() {
            t.push((r1 + i, cmg + j, tau * inv_beta * p.m_surf * v));
            t.push((r3 + i, cu + j, -p.delta * p.kappa * v));
            t.push((r2 + i, cmg + j, r2_scale * w.w_inf * tau * p.m_surf * v));
        }
        for i in 0..nv {
            t.push((r3 + i, cu + i, T::zero()));
            t.push((r3 + i, cmo + i, m.mass_bulk[i]));
        }
        for i in 0..nb {
            let mg = m.mass_boundary[i];
            t.push((r3 + i, cmg + i, mg));
            t.push((r2 + i, cu + i, r2_scale * w.w_inf * mg));
            t.push((r2 + i, cmo + i, -r2_scale * tau * p.beta * w.w_zero * mg));
            t.push((r2 + i, cmg + i, r2_scale * tau * p.beta * p.beta * w.w_zero * mg));
        }
        let size = 2 * nv + nb;
        let jacobian = CsrMatrix::from_triplets(size, size, &t);
        let nonlinear_slots = (0..nv)
            .map(|i| jacobian.index_of(r3 + i, cu + i).expect("diagonal slot present"))
            .collect();
        let pattern = BandPattern::analyze(&jacobian);

        Ok(Self {
            matrices: m.clone(),
            schur,
            params: *params,
            potentials: potentials.clone(),
            options,
            jacobian,
            nonlinear_slots,
            pattern,
            d_full,
            r2_scale,
        })
    }

    /// The same stepper with a different time increment. `N` is reused.
    pub fn with_tau(&self, tau: T) -> Result<Self> {
        let params = ModelParams { tau, ..self.params };
        params.validate()?;
        Self::with_schur(&self.matrices, self.schur.clone(), &params, &self.potentials, self.options)
    }

    pub fn matrices(&self) -> &FemMatrices<T> {
        &self.matrices
    }

    pub fn schur(&self) -> &SchurSystem<T> {
        &self.schur
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn potentials(&self) -> &Potentials<T> {
        &self.potentials
    }

    pub fn options(&self) -> &SolverOptions<T> {
        &self.options
    }

    /// Lower and upper bandwidth of the reordered Jacobian.
    pub fn bandwidth(&self) -> (usize, usize) {
        (self.pattern.lower(), self.pattern.upper())
    }

    fn tolerance(&self, u_prev: &[T]) -> T {
        let norm = crate::scalar::weighted_dot(&self.matrices.mass_bulk, u_prev, u_prev).sqrt();
        self.options.tol_abs + self.options.tol_rel * norm
    }

    fn coupled_residual(&self, x: &[T], u_prev: &[T]) -> Vec<T> {
        let m = &self.matrices;
        let p = &self.params;
        let w = self.schur.weights;
        let nv = m.n_bulk();
        let nb = m.n_boundary();
        let (u, rest) = x.split_at(nv);
        let (mo, mg) = rest.split_at(nv);
        let tau = p.tau;
        let inv_beta = T::one() / p.beta;

        let lmo = m.stiff_bulk.mul_vec(mo);
        let lmg = m.stiff_boundary.mul_vec(mg);
        let rhs = potential_rhs(u, u_prev, m, p, &self.potentials);
        let mut r = Vec::with_capacity(2 * nv + nb);
        for i in 0..nv {
            let mut v = self.d_full[i] * (u[i] - u_prev[i]) + tau * p.m_bulk * lmo[i];
            if i < nb {
                v += tau * inv_beta * p.m_surf * lmg[i];
            }
            r.push(v);
        }
        for i in 0..nv {
            let v = if i < nb {
                m.mass_bulk[i] * mo[i] + m.mass_boundary[i] * mg[i] - rhs.gamma[i]
            } else {
                m.mass_bulk[i] * mo[i] - rhs.interior[i - nb]
            };
            r.push(v);
        }
        for i in 0..nb {
            let mgi = m.mass_boundary[i];
            let v = w.w_inf * (mgi * (u[i] - u_prev[i]) + tau * p.m_surf * lmg[i])
                + tau * p.beta * w.w_zero * mgi * (p.beta * mg[i] - mo[i]);
            r.push(self.r2_scale * v);
        }
        r
    }

    /// `sqrt(Σ r₁²/D + Σ r₃²/M_Ω + Σ r₂²/M_Γ)`
    fn coupled_norm(&self, r: &[T]) -> T {
        let m = &self.matrices;
        let nv = m.n_bulk();
        let mut s = T::zero();
        for i in 0..nv {
            s += r[i] * r[i] / self.d_full[i];
            s += r[nv + i] * r[nv + i] / m.mass_bulk[i];
        }
        for (i, &mg) in m.mass_boundary.iter().enumerate() {
            s += r[2 * nv + i] * r[2 * nv + i] / mg;
        }
        s.sqrt()
    }

    /// Lumped dual norm of the eliminated mass balance with the recovered
    /// potentials.
    pub fn eliminated_residual(&self, u: &[T], u_prev: &[T], mu: &ChemicalPotentials<T>) -> T {
        let m = &self.matrices;
        let p = &self.params;
        let nb = m.n_boundary();
        let lmo = m.stiff_bulk.mul_vec(&mu.bulk);
        let lmg = m.stiff_boundary.mul_vec(&mu.surface);
        let inv_beta = T::one() / p.beta;
        let mut s = T::zero();
        for i in 0..m.n_bulk() {
            let mut v = self.d_full[i] * (u[i] - u_prev[i]) + p.tau * p.m_bulk * lmo[i];
            if i < nb {
                v += p.tau * inv_beta * p.m_surf * lmg[i];
            }
            s += v * v / self.d_full[i];
        }
        s.sqrt()
    }

    fn jacobian_with(&self, u: &[T]) -> CsrMatrix<T> {
        let m = &self.matrices;
        let p = &self.params;
        let nb = m.n_boundary();
        let mut jac = self.jacobian.clone();
        let vals = jac.values_mut();
        for (i, &slot) in self.nonlinear_slots.iter().enumerate() {
            let mut d = m.mass_bulk[i] * self.potentials.bulk.convex_second(u[i]) / p.epsilon;
            if i < nb {
                d += m.mass_boundary[i] * self.potentials.surface.convex_second(u[i]) / p.delta;
            }
            vals[slot] -= d;
        }
        jac
    }

    /// One step of size `τ` from `u_prev`, without retries.
    pub fn step_once(&self, u_prev: &[T]) -> Result<StepResult<T>> {
        let m = &self.matrices;
        let nv = m.n_bulk();
        if u_prev.len() != nv {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries, mesh has {nv} vertices",
                u_prev.len()
            )));
        }
        if u_prev.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state contains non-finite values".into()));
        }
        let tol = self.tolerance(u_prev);
        let opts = &self.options;

        let mu0 = self.schur.recover(u_prev, u_prev, m, &self.potentials)?;
        let mut x: Vec<T> = u_prev.iter().chain(&mu0.bulk).chain(&mu0.surface).copied().collect();
        let mut r = self.coupled_residual(&x, u_prev);
        let mut rn = self.coupled_norm(&r);
        let mut history = vec![rn];
        let mut iters = 0;
        let mut halvings = 0;
        let mut best = (x.clone(), r.clone(), rn);
        let mut watchdog = WATCHDOG_STEPS;
        loop {
            if iters > 0 && rn <= tol {
                let u = &x[..nv];
                let mu = self.schur.recover(u, u_prev, m, &self.potentials)?;
                let res = self.eliminated_residual(u, u_prev, &mu);
                let scale = T::one() + max_abs(&mu.bulk).max(max_abs(&mu.surface));
                let agree = max_abs_diff(&mu.bulk, &x[nv..2 * nv])
                    .max(max_abs_diff(&mu.surface, &x[2 * nv..]))
                    <= opts.equivalence_tol * scale;
                if res <= tol && agree {
                    let dissipation = step_dissipation(&mu, m, &self.params);
                    return Ok(StepResult {
                        u: u.to_vec(),
                        mu,
                        newton_iters: iters,
                        residual_norm: res,
                        residual_history: history,
                        halvings,
                        substeps: 1,
                        dissipation,
                    });
                }
            }
            if iters >= opts.max_iterations {
                return Err(Error::NewtonDivergence {
                    iterations: iters,
                    residual: rn.to_f64_lossy(),
                    tolerance: tol.to_f64_lossy(),
                });
            }

            let neg: Vec<T> = r.iter().map(|&v| -v).collect();
            let jac = self.jacobian_with(&x[..nv]);
            let dx = self.pattern.factor_lu(&jac)?.solve(&neg);
            iters += 1;

            // Full steps may raise the residual for a few iterations: the
            // penalty curvature switches on only once a vertex crosses
            // |s| = 1, so the first tangent step routinely overshoots.
            let trial = add_scaled(&x, &dx, T::one());
            let rt = self.coupled_residual(&trial, u_prev);
            let rtn = self.coupled_norm(&rt);
            let mut k = 0;
            if rtn < rn || rtn <= tol || (watchdog > 0 && rtn.is_finite() && rtn <= T::lit(WATCHDOG_GROWTH) * best.2) {
                if !(rtn < best.2) {
                    watchdog -= 1;
                }
                x = trial;
                r = rt;
                rn = rtn;
            } else {
                // from here on the iteration is monotone, restarted from the
                // best iterate if the full steps went astray
                watchdog = 0;
                let dx = if rn > best.2 {
                    (x, r, rn) = best.clone();
                    let neg: Vec<T> = r.iter().map(|&v| -v).collect();
                    self.pattern.factor_lu(&self.jacobian_with(&x[..nv]))?.solve(&neg)
                } else {
                    dx
                };
                self.backtrack(&mut x, &mut r, &mut rn, &dx, u_prev, tol, &mut k);
            }
            if rn < best.2 {
                best = (x.clone(), r.clone(), rn);
                if watchdog > 0 {
                    watchdog = WATCHDOG_STEPS;
                }
            }
            halvings += k;
            history.push(rn);
            if !rn.is_finite() {
                return Err(Error::NewtonDivergence {
                    iterations: iters,
                    residual: f64::NAN,
                    tolerance: tol.to_f64_lossy(),
                });
            }
        }
    }

    /// Halves `λ` from 1 until the residual norm decreases, then moves.
    #[allow(clippy::too_many_arguments)]
    fn backtrack(&self, x: &mut Vec<T>, r: &mut Vec<T>, rn: &mut T, dx: &[T], u_prev: &[T], tol: T, k: &mut usize) {
        let mut lambda = T::one();
        loop {
            let trial = add_scaled(x, dx, lambda);
            let rt = self.coupled_residual(&trial, u_prev);
            let rtn = self.coupled_norm(&rt);
            if rtn < *rn || rtn <= tol || *k == self.options.max_halvings {
                *x = trial;
                *r = rt;
                *rn = rtn;
                return;
            }
            lambda *= T::lit(0.5);
            *k += 1;
        }
    }

    /// One step, retried as two half steps on failure when enabled.
    pub fn step(&self, u_prev: &[T]) -> Result<StepResult<T>> {
        self.step_retrying(u_prev, self.options.max_retries)
    }

    fn step_retrying(&self, u_prev: &[T], retries: usize) -> Result<StepResult<T>> {
        match self.step_once(u_prev) {
            Ok(s) => Ok(s),
            Err(e) if !self.options.retry_halved_tau || retries == 0 => Err(e),
            Err(_) => {
                let half = self.with_tau(self.params.tau * T::lit(0.5))?;
                let a = half.step_retrying(u_prev, retries - 1)?;
                let b = half.step_retrying(&a.u, retries - 1)?;
                Ok(StepResult {
                    newton_iters: a.newton_iters + b.newton_iters,
                    halvings: a.halvings + b.halvings,
                    substeps: a.substeps + b.substeps,
                    dissipation: a.dissipation + b.dissipation,
                    ..b
                })
            }
        }
    }

    fn record(&self, step: usize, u: &[T], mu: &ChemicalPotentials<T>) -> StepRecord<T> {
        let m = &self.matrices;
        let p = &self.params;
        StepRecord {
            step,
            time: T::from_usize_lossy(step) * p.tau,
            energy: discrete_energy(u, m, p, &self.potentials),
            masses: masses(u, m, p.beta),
            gap: potential_gap(mu, m, p.beta),
            slack: None,
            newton_iters: 0,
            residual_norm: T::zero(),
            compatibility: self.schur.compatibility_residual(mu, m),
        }
    }

    /// Runs `n_steps` steps from `u0`. On failure the trajectory up to the
    /// last accepted step is returned together with the error.
    pub fn run_partial(&self, u0: &[T], opts: RunOptions) -> (Trajectory<T>, Option<Error>) {
        self.run_observed(u0, opts, |_, _| {})
    }

    /// As [`Stepper::run_partial`], calling `observer` after every accepted
    /// step (and once for the initial state).
    pub fn run_observed(
        &self,
        u0: &[T],
        opts: RunOptions,
        mut observer: impl FnMut(&StepRecord<T>, &Sample<T>),
    ) -> (Trajectory<T>, Option<Error>) {
        let every = opts.sample_every.max(1);
        let mut traj = Trajectory {
            records: Vec::with_capacity(opts.n_steps + 1),
            samples: Vec::new(),
            sample_every: every,
        };
        let mu0 = match self.schur.recover(u0, u0, &self.matrices, &self.potentials) {
            Ok(mu) => mu,
            Err(e) => {
                return (
                    traj,
                    Some(Error::StepFailed {
                        step: 0,
                        source: Box::new(e),
                    }),
                )
            }
        };
        let rec = self.record(0, u0, &mu0);
        let mut current = Sample {
            time: T::zero(),
            u: u0.to_vec(),
            mu: mu0,
        };
        observer(&rec, &current);
        traj.records.push(rec);
        traj.samples.push(current.clone());

        for n in 1..=opts.n_steps {
            let s = match self.step(&current.u) {
                Ok(s) => s,
                Err(e) => {
                    if traj.samples.last().map(|x| x.time) != Some(current.time) {
                        traj.samples.push(current);
                    }
                    return (
                        traj,
                        Some(Error::StepFailed {
                            step: n,
                            source: Box::new(e),
                        }),
                    );
                }
            };
            let prev_energy = traj.records.last().expect("initial record").energy.e_total;
            let mut rec = self.record(n, &s.u, &s.mu);
            rec.slack = Some(energy_slack(prev_energy, rec.energy.e_total, s.dissipation));
            rec.newton_iters = s.newton_iters;
            rec.residual_norm = s.residual_norm;
            current = Sample {
                time: rec.time,
                u: s.u,
                mu: s.mu,
            };
            observer(&rec, &current);
            traj.records.push(rec);
            if n % every == 0 || n == opts.n_steps {
                traj.samples.push(current.clone());
            }
        }
        (traj, None)
    }

    pub fn run(&self, u0: &[T], opts: RunOptions) -> Result<Trajectory<T>> {
        match self.run_partial(u0, opts) {
            (t, None) => Ok(t),
            (_, Some(e)) => Err(e),
        }
    }
}
