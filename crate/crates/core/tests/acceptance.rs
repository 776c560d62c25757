//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs desk-scale trajectories, so it takes a few minutes.

use std::collections::BTreeMap;
use std::time::Instant;

use dynbc::assembly::{assemble, FemMatrices};
use dynbc::config::{RunConfig, StudyMode};
use dynbc::diagnostics::{eoc_table, trajectory_error, trajectory_gap};
use dynbc::experiment::{run_single, sweep_against, Simulation};
use dynbc::mesh::build_unit_square_mesh;
use dynbc::oracle::{oracle_potentials, DenseMatrix, oracle_step_on, symmetric_eigenvalues};
use dynbc::params::{Coupling, ModelParams};
use dynbc::potential::{double_well, penalised_double_well, Potentials};
use dynbc::schur::build_schur;
use dynbc::stepper::{SolverOptions, Stepper, Trajectory};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const INVARIANT_COUPLINGS: [f64; 5] = [0.0, 1e-3, 0.1, 1.0, f64::INFINITY];
const SWEEP_VALUES: [f64; 5] = [1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3];
const GAP_COUPLINGS: [f64; 3] = [1.0, 10.0, 100.0];

type Check = Box<dyn FnOnce(&mut Runs) -> Result<Outcome, String>>;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Desk-scale droplet trajectories, each computed once.
struct Runs {
    cfg: RunConfig,
    matrices: FemMatrices<f64>,
    cache: BTreeMap<u64, (Trajectory<f64>, f64)>,
}

impl Runs {
    fn new() -> Self {
        let cfg = RunConfig::default();
        let matrices = assemble(&build_unit_square_mesh(cfg.mesh.n).unwrap()).unwrap();
        Self {
            cfg,
            matrices,
            cache: BTreeMap::new(),
        }
    }

    /// Trajectory and wall time in seconds.
    fn get(&mut self, l: f64) -> Result<&(Trajectory<f64>, f64), String> {
        if !self.cache.contains_key(&l.to_bits()) {
            let start = Instant::now();
            let sim = Simulation::with_coupling(&self.cfg, Coupling::from_f64(l)).map_err(|e| e.to_string())?;
            let traj = sim.stepper.run(&sim.u0, sim.options()).map_err(|e| format!("L = {l}: {e}"))?;
            self.cache.insert(l.to_bits(), (traj, start.elapsed().as_secs_f64()));
        }
        Ok(&self.cache[&l.to_bits()])
    }

    fn traj(&self, l: f64) -> &Trajectory<f64> {
        &self.cache[&l.to_bits()].0
    }
}

fn energy_dissipation(runs: &mut Runs) -> Result<Outcome, String> {
    let mut worst = f64::INFINITY;
    let mut slowest: f64 = 0.0;
    let mut steps = 0;
    for l in INVARIANT_COUPLINGS {
        let (traj, secs) = runs.get(l)?;
        slowest = slowest.max(*secs);
        steps = traj.records.len() - 1;
        for r in &traj.records {
            if let Some(s) = r.slack {
                worst = worst.min(s / (1.0 + r.energy.e_total.abs()));
            }
        }
    }
    Ok(Outcome::new(
        worst >= -1e-9 && steps == 500 && slowest < 120.0,
        format!("{steps} steps, min scaled slack {worst:e}, slowest run {slowest:.1} s"),
    ))
}

fn mass_conservation(runs: &mut Runs) -> Result<Outcome, String> {
    let mut worst: f64 = 0.0;
    let mut worst_separate: f64 = 0.0;
    for l in INVARIANT_COUPLINGS {
        let (traj, _) = runs.get(l)?;
        let m0 = traj.records[0].masses;
        let drift = |a: f64, b: f64| (a - b).abs() / b.abs();
        for r in &traj.records {
            worst = worst.max(drift(r.masses.weighted, m0.weighted));
            if l.is_infinite() {
                worst_separate = worst_separate
                    .max(drift(r.masses.bulk, m0.bulk))
                    .max(drift(r.masses.surf, m0.surf));
            }
        }
    }
    Ok(Outcome::new(
        worst < 1e-12 && worst_separate < 1e-12,
        format!("weighted drift {worst:e}, separate drift at L = inf {worst_separate:e}"),
    ))
}

fn zero_coupling_identity(runs: &mut Runs) -> Result<Outcome, String> {
    let (traj, _) = runs.get(0.0)?;
    let gap = traj.records.iter().fold(0.0f64, |g, r| g.max(r.gap.l2));
    Ok(Outcome::new(gap <= 1e-6, format!("max gap {gap:e}")))
}

fn oracle_equivalence() -> Result<Outcome, String> {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let potentials = [
        ("double well", Potentials::same(double_well())),
        ("penalised", Potentials::same(penalised_double_well(1.0 / 250.0).unwrap())),
    ];
    let mut worst_mu: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    let mut cases = 0;
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    for n in 1..=3 {
        let m = assemble(&build_unit_square_mesh::<f64>(n).unwrap()).unwrap();
        let nv = m.n_bulk();
        for l in [0.0, 0.1, 1.0, f64::INFINITY] {
            let params = ModelParams::desk().with_coupling(Coupling::from_f64(l));
            for (name, pot) in &potentials {
                let stepper = Stepper::new(&m, &params, pot, SolverOptions::default()).map_err(|e| e.to_string())?;
                for _ in 0..20 {
                    let u_prev: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let u: Vec<f64> = u_prev.iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();

                    let schur = stepper.schur().recover(&u, &u_prev, &m, pot).map_err(|e| e.to_string())?;
                    let dense = oracle_potentials(&u, &u_prev, &m, &params, pot).map_err(|e| e.to_string())?;
                    worst_mu = worst_mu
                        .max(max_diff(&schur.bulk, &dense.bulk))
                        .max(max_diff(&schur.surface, &dense.surface));

                    let fast = stepper
                        .step(&u_prev)
                        .map_err(|e| format!("n = {n}, L = {l}, {name}: {e}"))?;
                    let slow = oracle_step_on(&u_prev, &m, &params, pot)
                        .map_err(|e| format!("oracle n = {n}, L = {l}, {name}: {e}"))?;
                    worst_step = worst_step
                        .max(max_diff(&fast.u, &slow.u))
                        .max(max_diff(&fast.mu.bulk, &slow.mu.bulk))
                        .max(max_diff(&fast.mu.surface, &slow.mu.surface));
                    cases += 1;
                }
            }
        }
    }
    Ok(Outcome::new(
        worst_mu <= 1e-9 && worst_step <= 1e-9,
        format!("{cases} cases, potentials differ by {worst_mu:e}, steps by {worst_step:e}"),
    ))
}

fn sweep_eoc(runs: &mut Runs, reference: f64, couplings: &[f64], inverse: bool, band: (f64, f64)) -> Result<Outcome, String> {
    let mut rows = Vec::new();
    runs.get(reference)?;
    for &l in couplings {
        runs.get(l)?;
        let r = &runs.traj(reference).samples;
        let e = trajectory_error(&runs.traj(l).samples, r, &runs.matrices).map_err(|e| e.to_string())?;
        rows.push((l, e.u_bulk));
    }
    let table = eoc_table(&rows, inverse).map_err(|e| e.to_string())?;
    let eocs: Vec<f64> = table.iter().filter_map(|r| r.eoc).collect();
    let smallest = &eocs[..3];
    let ok = smallest.iter().all(|e| (band.0..=band.1).contains(e));
    let shown: Vec<String> = eocs.iter().map(|e| format!("{e:.3}")).collect();
    Ok(Outcome::new(ok, format!("EOC {}", shown.join(", "))))
}

fn gap_crossover(runs: &mut Runs) -> Result<Outcome, String> {
    let beta = runs.cfg.model.beta;
    let mut rows = Vec::new();
    for l in GAP_COUPLINGS {
        runs.get(l)?;
        rows.push((l, trajectory_gap(&runs.traj(l).samples, &runs.matrices, beta).l2));
    }
    let table = eoc_table(&rows, false).map_err(|e| e.to_string())?;
    let eocs: Vec<f64> = table.iter().filter_map(|r| r.eoc).collect();
    let ok = eocs.len() == 2 && eocs.iter().all(|e| (0.3..=0.7).contains(e));
    let shown: Vec<String> = table
        .iter()
        .map(|r| format!("L = {}: gap {:.4e}{}", r.l, r.error, r.eoc.map(|e| format!(" eoc {e:.3}")).unwrap_or_default()))
        .collect();
    Ok(Outcome::new(ok, shown.join("; ")))
}

fn schur_spd() -> Result<Outcome, String> {
    let mut count = 0;
    let mut min_eig = f64::INFINITY;
    for n in [1, 2, 3, 4, 8, 16, 32] {
        let m = assemble(&build_unit_square_mesh::<f64>(n).unwrap()).unwrap();
        for l in [0.0, 1e-4, 1e-3, 0.1, 1.0, 10.0, 1e4, f64::INFINITY] {
            let params = ModelParams::desk().with_coupling(Coupling::from_f64(l));
            let sys = build_schur(&m, &params).map_err(|e| format!("n = {n}, L = {l}: {e}"))?;
            if !sys.factored() {
                return Ok(Outcome::new(false, format!("n = {n}, L = {l}: no direct factorization")));
            }
            count += 1;
            if n == 4 {
                let rows = sys.n.to_dense();
                let mut dense = DenseMatrix::zeros(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        dense.set(i, j, v);
                    }
                }
                let eig = symmetric_eigenvalues(&dense);
                min_eig = eig.into_iter().fold(min_eig, f64::min);
            }
        }
    }
    Ok(Outcome::new(
        min_eig > 0.0,
        format!("{count} factorizations, smallest eigenvalue at n = 4: {min_eig:e}"),
    ))
}

fn stationarity_and_determinism() -> Result<Outcome, String> {
    let mut worst: f64 = 0.0;
    for l in INVARIANT_COUPLINGS {
        for value in [1.0, -1.0] {
            let cfg = RunConfig::default_with_overrides(&[
                format!("model.t_final={}", 10.0 * 1e-5),
                format!("initial={{ kind = \"constant\", value = {value:?} }}"),
            ])
            .map_err(|e| e.to_string())?;
            let sim = Simulation::with_coupling(&cfg, Coupling::from_f64(l)).map_err(|e| e.to_string())?;
            let traj = sim.stepper.run(&sim.u0, sim.options()).map_err(|e| e.to_string())?;
            for s in &traj.samples {
                worst = s.u.iter().fold(worst, |w, u| w.max((u - value).abs()));
            }
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run_in = |name: &str| -> Result<Vec<Vec<u8>>, String> {
        let out = dir.path().join(name);
        let mut cfg = RunConfig::default_with_overrides(&["model.t_final=1e-3".into(), "mesh.n=16".into()])
            .map_err(|e| e.to_string())?;
        cfg.output.dir = out.clone();
        cfg.output.vtk_every = 50;
        let report = run_single(&cfg).map_err(|e| e.to_string())?;
        if let Some(e) = report.failure {
            return Err(e.to_string());
        }
        cfg.mesh.n = 8;
        cfg.study.threads = 2;
        let sweep = sweep_against(&cfg, Coupling::Finite(0.0), &[1e-3, 2e-3, 4e-3], StudyMode::SweepToZero)
            .map_err(|e| e.to_string())?;
        let eoc_dir = out.join("eoc");
        sweep.write(&eoc_dir).map_err(|e| e.to_string())?;
        let mut files = vec![out.join("series.csv"), out.join("final.vtk"), out.join("restart.bin")];
        files.push(eoc_dir.join("eoc_u.csv"));
        files.push(eoc_dir.join("eoc_gap.csv"));
        files.iter().map(|f| std::fs::read(f).map_err(|e| e.to_string())).collect()
    };
    let first = run_in("a")?;
    let second = run_in("b")?;
    let identical = first == second;
    Ok(Outcome::new(
        worst <= 1e-12 && identical,
        format!("pure-phase drift {worst:e}, repeated outputs identical: {identical}"),
    ))
}

fn main() {
    let total = Instant::now();
    let mut runs = Runs::new();
    let inverse_values: Vec<f64> = SWEEP_VALUES.iter().map(|v| 1.0 / v).collect();
    let criteria: Vec<(&str, Check)> = vec![
        ("energy dissipation", Box::new(energy_dissipation)),
        ("mass conservation", Box::new(mass_conservation)),
        ("zero coupling identity", Box::new(zero_coupling_identity)),
        ("oracle equivalence", Box::new(|_| oracle_equivalence())),
        (
            "EOC toward L = 0",
            Box::new(|r| sweep_eoc(r, 0.0, &SWEEP_VALUES, false, (0.85, 1.1))),
        ),
        (
            "EOC toward L = inf",
            Box::new(move |r| sweep_eoc(r, f64::INFINITY, &inverse_values, true, (0.8, 1.1))),
        ),
        ("gap rate crossover", Box::new(gap_crossover)),
        ("Schur complement SPD", Box::new(|_| schur_spd())),
        ("stationarity and determinism", Box::new(|_| stationarity_and_determinism())),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check(&mut runs).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "{status} [{}] {name}: {} ({:.1} s)",
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{failed} of 9 criteria failed, {:.0} s total", total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
