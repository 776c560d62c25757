//! Discrete energies, masses, norms, trajectory errors and convergence
//! orders. All space norms are lumped (nodal quadrature) norms.

use crate::assembly::FemMatrices;
use crate::error::{Error, Result};
use crate::params::{Coupling, ModelParams};
use crate::potential::Potentials;
use crate::scalar::{dot, max_abs, weighted_dot, Scalar};
use crate::schur::ChemicalPotentials;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub e_bulk: T,
    pub e_surf: T,
    pub e_total: T,
}

/// Lumped free energy
///
/// ```text
/// E_bulk = (ε/2) Uᵀ L_Ω U + ε⁻¹ 1ᵀ M_Ω F(U)
/// E_surf = (δκ/2) U_Γᵀ L_Γ U_Γ + δ⁻¹ 1ᵀ M_Γ G(U_Γ)
/// ```
pub fn discrete_energy<T: Scalar>(
    u: &[T],
    m: &FemMatrices<T>,
    params: &ModelParams<T>,
    pot: &Potentials<T>,
) -> EnergyBreakdown<T> {
    let nb = m.n_boundary();
    let half = T::lit(0.5);
    let f = m
        .mass_bulk
        .iter()
        .zip(u)
        .fold(T::zero(), |s, (&w, &x)| s + w * pot.bulk.value(x));
    let e_bulk = half * params.epsilon * m.stiff_bulk.quadratic_form(u) + f / params.epsilon;
    let ug = &u[..nb];
    let g = m
        .mass_boundary
        .iter()
        .zip(ug)
        .fold(T::zero(), |s, (&w, &x)| s + w * pot.surface.value(x));
    let e_surf = half * params.delta * params.kappa * m.stiff_boundary.quadratic_form(ug) + g / params.delta;
    EnergyBreakdown {
        e_bulk,
        e_surf,
        e_total: e_bulk + e_surf,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Masses<T> {
    pub bulk: T,
    pub surf: T,
    /// `β·bulk + surf`, conserved for every `L`.
    pub weighted: T,
}

pub fn masses<T: Scalar>(u: &[T], m: &FemMatrices<T>, beta: T) -> Masses<T> {
    let bulk = dot(&m.mass_bulk, u);
    let surf = dot(&m.mass_boundary, &u[..m.n_boundary()]);
    Masses {
        bulk,
        surf,
        weighted: beta * bulk + surf,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapNorms<T> {
    pub l2: T,
    pub linf: T,
}

/// Lumped `L²(Γ)` and max norms of `βμ_Γ − μ_Ω|_Γ`.
pub fn potential_gap<T: Scalar>(mu: &ChemicalPotentials<T>, m: &FemMatrices<T>, beta: T) -> GapNorms<T> {
    let d = mu.gap(beta);
    GapNorms {
        l2: weighted_dot(&m.mass_boundary, &d, &d).sqrt(),
        linf: max_abs(&d),
    }
}

/// Boundary term `τ (m_Ω/L) dᵀ M_Γ d` of the discrete dissipation, zero for
/// `L ∈ {0, ∞}`.
pub fn reaction_dissipation<T: Scalar>(mu: &ChemicalPotentials<T>, m: &FemMatrices<T>, params: &ModelParams<T>) -> T {
    match params.coupling {
        Coupling::Finite(l) if l > T::zero() => {
            let d = mu.gap(params.beta);
            params.tau * params.m_bulk / l * weighted_dot(&m.mass_boundary, &d, &d)
        }
        _ => T::zero(),
    }
}

/// Total dissipation of one step:
/// `τ m_Ω μ_Ωᵀ L_Ω μ_Ω + τ m_Γ μ_Γᵀ L_Γ μ_Γ + B_L`.
pub fn step_dissipation<T: Scalar>(mu: &ChemicalPotentials<T>, m: &FemMatrices<T>, params: &ModelParams<T>) -> T {
    params.tau * params.m_bulk * m.stiff_bulk.quadratic_form(&mu.bulk)
        + params.tau * params.m_surf * m.stiff_boundary.quadratic_form(&mu.surface)
        + reaction_dissipation(mu, m, params)
}

/// `E(U^{n−1}) − E(U^n) − dissipation`; nonnegative up to rounding for an
/// accepted step.
pub fn energy_slack<T: Scalar>(e_prev: T, e_new: T, dissipation: T) -> T {
    e_prev - (e_new + dissipation)
}

/// One sampled state of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub time: T,
    pub u: Vec<T>,
    pub mu: ChemicalPotentials<T>,
}

/// `L²(0,T; L²)` differences between two sampled trajectories.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryErrors<T> {
    pub u_bulk: T,
    pub u_surf: T,
    pub mu_bulk: T,
    pub mu_surf: T,
}

/// Trapezoid rule over the sample times of `values`.
pub fn trapezoid<T: Scalar>(times: &[T], values: &[T]) -> T {
    assert_eq!(times.len(), values.len());
    let half = T::lit(0.5);
    times
        .windows(2)
        .zip(values.windows(2))
        .fold(T::zero(), |s, (t, v)| s + half * (t[1] - t[0]) * (v[0] + v[1]))
}

/// `‖·‖_{L²(0,T;L²)}` of the lumped-norm squared series `sq`.
pub fn time_l2<T: Scalar>(times: &[T], sq: &[T]) -> T {
    trapezoid(times, sq).max(T::zero()).sqrt()
}

fn check_grids<T: Scalar>(a: &[Sample<T>], b: &[Sample<T>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "trajectories have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        let tol = T::lit(1e-9) * (T::one() + x.time.abs());
        if (x.time - y.time).abs() > tol || x.u.len() != y.u.len() {
            return Err(Error::GridMismatch(format!(
                "sample at t = {} does not match t = {}",
                x.time, y.time
            )));
        }
    }
    Ok(())
}

/// Errors between two trajectories sampled on the same time grid, with
/// lumped space norms and the trapezoid rule in time.
pub fn trajectory_error<T: Scalar>(
    a: &[Sample<T>],
    b: &[Sample<T>],
    m: &FemMatrices<T>,
) -> Result<TrajectoryErrors<T>> {
    check_grids(a, b)?;
    let nb = m.n_boundary();
    let times: Vec<T> = a.iter().map(|s| s.time).collect();
    let sq = |f: &dyn Fn(&Sample<T>, &Sample<T>) -> T| -> Vec<T> { a.iter().zip(b).map(|(x, y)| f(x, y)).collect() };
    let bulk_sq = |x: &[T], y: &[T]| {
        let d: Vec<T> = x.iter().zip(y).map(|(&p, &q)| p - q).collect();
        weighted_dot(&m.mass_bulk, &d, &d)
    };
    let surf_sq = |x: &[T], y: &[T]| {
        let d: Vec<T> = x[..nb].iter().zip(&y[..nb]).map(|(&p, &q)| p - q).collect();
        weighted_dot(&m.mass_boundary, &d, &d)
    };
    Ok(TrajectoryErrors {
        u_bulk: time_l2(&times, &sq(&|x, y| bulk_sq(&x.u, &y.u))),
        u_surf: time_l2(&times, &sq(&|x, y| surf_sq(&x.u, &y.u))),
        mu_bulk: time_l2(&times, &sq(&|x, y| bulk_sq(&x.mu.bulk, &y.mu.bulk))),
        mu_surf: time_l2(&times, &sq(&|x, y| surf_sq(&x.mu.surface, &y.mu.surface))),
    })
}

/// `‖βμ_Γ − μ_Ω|_Γ‖` in `L²(0,T; L²(Γ))` and the largest nodal value over
/// all samples.
pub fn trajectory_gap<T: Scalar>(samples: &[Sample<T>], m: &FemMatrices<T>, beta: T) -> GapNorms<T> {
    let times: Vec<T> = samples.iter().map(|s| s.time).collect();
    let gaps: Vec<GapNorms<T>> = samples.iter().map(|s| potential_gap(&s.mu, m, beta)).collect();
    let sq: Vec<T> = gaps.iter().map(|g| g.l2 * g.l2).collect();
    GapNorms {
        l2: time_l2(&times, &sq),
        linf: gaps.iter().fold(T::zero(), |x, g| x.max(g.linf)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EocRow {
    /// Coupling value `L_i` of the run.
    pub l: f64,
    /// Abscissa used for the order (`L` or `1/L`).
    pub abscissa: f64,
    pub error: f64,
    /// Order against the previous row; `None` for the first row or when
    /// an error is not positive.
    pub eoc: Option<f64>,
}

/// `EOC_i = log(e_i/e_{i−1}) / log(p_i/p_{i−1})` over consecutive rows,
/// with `p = L` or `p = 1/L` when `inverse` is set.
pub fn eoc_table(rows: &[(f64, f64)], inverse: bool) -> Result<Vec<EocRow>> {
    let abscissa: Vec<f64> = rows.iter().map(|&(l, _)| if inverse { 1.0 / l } else { l }).collect();
    let increasing = abscissa.windows(2).all(|w| w[1] > w[0]);
    let decreasing = abscissa.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) || abscissa.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidParameter(
            "EOC abscissae must be positive, finite and strictly monotone".into(),
        ));
    }
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, &(l, error))| {
            let eoc = (i > 0)
                .then(|| {
                    let (e0, e1) = (rows[i - 1].1, error);
                    (e0 > 0.0 && e1 > 0.0).then(|| (e1 / e0).ln() / (abscissa[i] / abscissa[i - 1]).ln())
                })
                .flatten();
            EocRow {
                l,
                abscissa: abscissa[i],
                error,
                eoc,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::mesh::build_unit_square_mesh;
    use crate::potential::double_well;

    fn setup(n: usize) -> (crate::mesh::Mesh<f64>, FemMatrices<f64>) {
        let mesh = build_unit_square_mesh(n).unwrap();
        let m = assemble(&mesh).unwrap();
        (mesh, m)
    }

    #[test]
    fn energy_of_constant_states() {
        let (_, m) = setup(4);
        let p = ModelParams::desk();
        let pot = Potentials::same(double_well());
        let e = discrete_energy(&vec![1.0; m.n_bulk()], &m, &p, &pot);
        assert!(e.e_bulk.abs() < 1e-15 && e.e_surf.abs() < 1e-15);
        let e = discrete_energy(&vec![0.0; m.n_bulk()], &m, &p, &pot);
        assert!((e.e_bulk - 0.25 / p.epsilon).abs() < 1e-12);
        assert!((e.e_surf - 0.25 * 4.0 / p.delta).abs() < 1e-12);
        assert_eq!(e.e_total, e.e_bulk + e.e_surf);
    }

    #[test]
    fn bulk_energy_matches_element_quadrature() {
        let (mesh, m) = setup(2);
        let p = ModelParams::desk();
        let pot = Potentials::same(double_well());
        let u: Vec<f64> = (0..mesh.n_vertices()).map(|k| ((k * 7 % 5) as f64 - 2.0) * 0.4).collect();
        let mut direct = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let area = mesh.signed_area(t);
            let [a, b, c] = tri.map(|v| mesh.vertices[v]);
            let [ua, ub, uc] = tri.map(|v| u[v]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let gx = ((ub - ua) * (c[1] - a[1]) - (uc - ua) * (b[1] - a[1])) / det;
            let gy = ((uc - ua) * (b[0] - a[0]) - (ub - ua) * (c[0] - a[0])) / det;
            let fq: f64 = [ua, ub, uc].iter().map(|&x| 0.25 * (1.0 - x * x).powi(2)).sum::<f64>() / 3.0;
            direct += area * (0.5 * p.epsilon * (gx * gx + gy * gy) + fq / p.epsilon);
        }
        let e = discrete_energy(&u, &m, &p, &pot);
        assert!((e.e_bulk - direct).abs() <= 1e-13 * direct.abs());
    }

    #[test]
    fn masses_of_simple_states() {
        let (mesh, m) = setup(4);
        let ms = masses(&vec![1.0; m.n_bulk()], &m, 4.0);
        assert!((ms.bulk - 1.0).abs() < 1e-14);
        assert!((ms.surf - 4.0).abs() < 1e-13);
        assert!((ms.weighted - 8.0).abs() < 1e-13);
        let anti: Vec<f64> = mesh.vertices.iter().map(|p| p[0] - 0.5).collect();
        assert!(masses(&anti, &m, 4.0).bulk.abs() < 1e-15);
    }

    #[test]
    fn gap_norms() {
        let (_, m) = setup(3);
        let nb = m.n_boundary();
        let zero = ChemicalPotentials::zeros(m.n_bulk(), nb);
        assert_eq!(potential_gap(&zero, &m, 4.0), GapNorms { l2: 0.0, linf: 0.0 });
        let mu = ChemicalPotentials {
            bulk: vec![4.0; m.n_bulk()],
            surface: vec![1.0; nb],
        };
        assert_eq!(potential_gap(&mu, &m, 4.0).linf, 0.0);
        let mu = ChemicalPotentials {
            bulk: vec![0.0; m.n_bulk()],
            surface: vec![1.0; nb],
        };
        // constant gap 4 over a boundary of length 4
        assert!((potential_gap(&mu, &m, 4.0).l2 - 8.0).abs() < 1e-13);
    }

    fn samples(n: usize, nv: usize, nb: usize, value: f64) -> Vec<Sample<f64>> {
        (0..n)
            .map(|k| Sample {
                time: k as f64 * 0.1,
                u: vec![value; nv],
                mu: ChemicalPotentials {
                    bulk: vec![value; nv],
                    surface: vec![value; nb],
                },
            })
            .collect()
    }

    #[test]
    fn trajectory_errors() {
        let (_, m) = setup(3);
        let (nv, nb) = (m.n_bulk(), m.n_boundary());
        let a = samples(6, nv, nb, 0.0);
        let e = trajectory_error(&a, &a, &m).unwrap();
        assert_eq!(e, TrajectoryErrors { u_bulk: 0.0, u_surf: 0.0, mu_bulk: 0.0, mu_surf: 0.0 });
        // constant difference c on [0, 0.5]: |c|·sqrt(|Ω|·T) and |c|·sqrt(|Γ|·T)
        let b = samples(6, nv, nb, 0.3);
        let e = trajectory_error(&a, &b, &m).unwrap();
        assert!((e.u_bulk - 0.3 * 0.5f64.sqrt()).abs() < 1e-14);
        assert!((e.u_surf - 0.3 * 2.0f64.sqrt()).abs() < 1e-14);
        assert!((e.mu_surf - e.u_surf).abs() < 1e-15);
        let short = samples(5, nv, nb, 0.0);
        assert!(matches!(trajectory_error(&a, &short, &m), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn eoc_of_power_laws() {
        let ls = [1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3];
        for (k, expect) in [(1.0, 1.0), (0.5, 0.5), (2.0, 2.0)] {
            let rows: Vec<(f64, f64)> = ls.iter().map(|&l: &f64| (l, 3.0 * l.powf(k))).collect();
            let t = eoc_table(&rows, false).unwrap();
            assert!(t[0].eoc.is_none());
            for r in &t[1..] {
                assert!((r.eoc.unwrap() - expect).abs() < 1e-12);
            }
        }
        let t = eoc_table(&[(1e-4, 4.01e-5), (2e-4, 8.02e-5)], false).unwrap();
        assert!((t[1].eoc.unwrap() - 1.0).abs() < 1e-12);
        // toward infinity the abscissa is 1/L
        let rows: Vec<(f64, f64)> = [1e4, 5e3, 2.5e3].iter().map(|&l: &f64| (l, 1.0 / l)).collect();
        let t = eoc_table(&rows, true).unwrap();
        assert!((t[2].eoc.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(t[1].abscissa, 2e-4);
    }

    #[test]
    fn eoc_flags_nonpositive_errors() {
        let t = eoc_table(&[(1.0, 0.0), (2.0, 1.0), (4.0, 2.0)], false).unwrap();
        assert!(t[1].eoc.is_none());
        assert!(t[2].eoc.is_some());
        assert!(eoc_table(&[(1.0, 1.0), (1.0, 2.0)], false).is_err());
    }
}
