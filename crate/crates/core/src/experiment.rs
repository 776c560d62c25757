//! Experiment drivers: initial conditions, single runs and coupling sweeps.

use std::fs;
use std::path::Path;

use crate::assembly::{assemble, FemMatrices};
use crate::config::{AxisConvention, InitialConfig, RunConfig, StudyMode};
use crate::diagnostics::{eoc_table, trajectory_error, trajectory_gap, EocRow, GapNorms, TrajectoryErrors};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_restart, write_eoc, write_restart, write_vtk, SeriesWriter};
use crate::mesh::{build_unit_square_mesh, Mesh};
use crate::params::Coupling;
use crate::scalar::Scalar;
use crate::stepper::{RunOptions, Stepper, Trajectory};

/// Elliptic droplet with a tanh interface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropletSpec {
    pub center: [f64; 2],
    /// Horizontal semi-axis.
    pub a: f64,
    /// Vertical semi-axis.
    pub b: f64,
    pub width: f64,
}

impl DropletSpec {
    pub fn new(center: [f64; 2], a: f64, b: f64, width: f64) -> Result<Self> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(a) && pos(b) && pos(width)) {
            return Err(Error::InvalidParameter(format!(
                "droplet needs positive a, b, width; got {a}, {b}, {width}"
            )));
        }
        Ok(Self { center, a, b, width })
    }

    /// The droplet centred at (0.1, 0.5) with elongations 0.6814 and 0.367,
    /// read as semi-axes, and width `√2 ε`.
    pub fn reference(epsilon: f64) -> Self {
        Self {
            center: [0.1, 0.5],
            a: 0.6814,
            b: 0.367,
            width: std::f64::consts::SQRT_2 * epsilon,
        }
    }
}

/// `tanh(φ/w)` with `φ = (1 − ρ) min(a, b)` and `ρ` the elliptic radius,
/// interpolated at the vertices.
pub fn initial_droplet<T: Scalar>(mesh: &Mesh<T>, spec: &DropletSpec) -> Vec<T> {
    let r_eff = spec.a.min(spec.b);
    mesh.vertices
        .iter()
        .map(|p| {
            let dx = (p[0].to_f64_lossy() - spec.center[0]) / spec.a;
            let dy = (p[1].to_f64_lossy() - spec.center[1]) / spec.b;
            let rho = (dx * dx + dy * dy).sqrt();
            let phi = (1.0 - rho) * r_eff;
            T::lit((phi / spec.width).tanh().clamp(-1.0, 1.0))
        })
        .collect()
}

/// Everything needed to run one configuration.
pub struct Simulation {
    pub mesh: Mesh<f64>,
    pub matrices: FemMatrices<f64>,
    pub stepper: Stepper<f64>,
    pub u0: Vec<f64>,
    pub n_steps: usize,
    pub sample_every: usize,
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Self::with_coupling(cfg, cfg.model.coupling)
    }

    pub fn with_coupling(cfg: &RunConfig, coupling: Coupling<f64>) -> Result<Self> {
        cfg.validate()?;
        let mesh = build_unit_square_mesh::<f64>(cfg.mesh.n)?;
        let matrices = assemble(&mesh)?;
        let params = cfg.params().with_coupling(coupling);
        let stepper = Stepper::new(&matrices, &params, &cfg.potentials()?, cfg.solver_options())?;
        let u0 = initial_state(cfg, &mesh)?;
        Ok(Self {
            mesh,
            matrices,
            stepper,
            u0,
            n_steps: params.n_steps(),
            sample_every: cfg.output.sample_every,
        })
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            n_steps: self.n_steps,
            sample_every: self.sample_every,
        }
    }

    /// Runs in memory; on failure the partial trajectory comes with the
    /// error.
    pub fn run(&self) -> (Trajectory<f64>, Option<Error>) {
        self.stepper.run_partial(&self.u0, self.options())
    }
}

pub fn droplet_from_config(initial: &InitialConfig, epsilon: f64) -> Result<Option<DropletSpec>> {
    match *initial {
        InitialConfig::Droplet {
            center,
            a,
            b,
            width,
            axes,
        } => {
            let (a, b) = match axes {
                AxisConvention::Semi => (a, b),
                AxisConvention::Full => (0.5 * a, 0.5 * b),
            };
            let w = width.unwrap_or(std::f64::consts::SQRT_2 * epsilon);
            DropletSpec::new(center, a, b, w).map(Some)
        }
        _ => Ok(None),
    }
}

pub fn initial_state(cfg: &RunConfig, mesh: &Mesh<f64>) -> Result<Vec<f64>> {
    let nv = mesh.n_vertices();
    match &cfg.initial {
        InitialConfig::Droplet { .. } => {
            let spec = droplet_from_config(&cfg.initial, cfg.model.epsilon)?.expect("droplet variant");
            Ok(initial_droplet(mesh, &spec))
        }
        InitialConfig::Constant { value } => Ok(vec![*value; nv]),
        InitialConfig::File { path } => {
            let u: Vec<f64> = read_restart(fs::File::open(path)?)?;
            if u.len() != nv {
                return Err(Error::Config(format!(
                    "restart file {} has {} values, mesh has {nv} vertices",
                    path.display(),
                    u.len()
                )));
            }
            Ok(u)
        }
    }
}

/// Text describing the modelling assumptions of a run, stored next to its
/// output.
pub fn metadata(cfg: &RunConfig) -> Result<String> {
    let mut s = String::from("# dynbc run metadata\n[assumptions]\n");
    if let Some(d) = droplet_from_config(&cfg.initial, cfg.model.epsilon)? {
        let axes = match cfg.initial {
            InitialConfig::Droplet {
                axes: AxisConvention::Full,
                ..
            } => "full axis lengths",
            _ => "semi-axes",
        };
        s += "droplet_profile = \"tanh(phi/w), phi = (1 - rho) min(a, b)\"\n";
        s += &format!("droplet_elongations = \"{axes}, clipped by the domain\"\n");
        s += &format!("droplet_semi_axes = [{}, {}]\n", fmt_f64(d.a), fmt_f64(d.b));
        s += &format!("interface_width = {}\n", fmt_f64(d.width));
    }
    s += "space_norms = \"lumped\"\n";
    s += "time_integration = \"trapezoid on the sampled grid\"\n";
    s += &format!("sample_every = {}\n", cfg.output.sample_every);
    s += "\n# configuration\n";
    s += &cfg.to_toml()?;
    Ok(s)
}

/// Final diagnostics of a run.
#[derive(Debug)]
pub struct RunReport {
    pub trajectory: Trajectory<f64>,
    pub failure: Option<Error>,
}

impl RunReport {
    pub fn summary(&self) -> String {
        let r = self.trajectory.records.last().expect("initial record");
        format!(
            "t = {}  E = {}  bulk mass = {}  surface mass = {}  weighted mass = {}  gap (L2) = {}",
            fmt_f64(r.time),
            fmt_f64(r.energy.e_total),
            fmt_f64(r.masses.bulk),
            fmt_f64(r.masses.surf),
            fmt_f64(r.masses.weighted),
            fmt_f64(r.gap.l2),
        )
    }
}

fn write_snapshot(dir: &Path, name: &str, mesh: &Mesh<f64>, u: &[f64], mu: &[f64]) -> Result<()> {
    write_vtk(fs::File::create(dir.join(name))?, mesh, &[("u", u), ("mu_bulk", mu)])
}

/// Runs `cfg` and writes `series.csv`, VTK snapshots, `restart.bin` and
/// `metadata.toml` into `cfg.output.dir`. Output up to a failing step is kept.
pub fn run_single(cfg: &RunConfig) -> Result<RunReport> {
    let sim = Simulation::new(cfg)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metadata.toml"), metadata(cfg)?)?;
    let mut series = SeriesWriter::create(&dir.join("series.csv"))?;
    let mut io_error = None;
    let vtk_every = cfg.output.vtk_every;
    let (trajectory, failure) = sim.stepper.run_observed(&sim.u0, sim.options(), |rec, state| {
        if io_error.is_some() {
            return;
        }
        let mut go = || -> Result<()> {
            series.write(rec)?;
            if vtk_every > 0 && rec.step % vtk_every == 0 {
                let name = format!("step_{:06}.vtk", rec.step);
                write_snapshot(dir, &name, &sim.mesh, &state.u, &state.mu.bulk)?;
            }
            Ok(())
        };
        if let Err(e) = go() {
            io_error = Some(e);
        }
    });
    series.flush()?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let last = trajectory.last_sample();
    write_snapshot(dir, "final.vtk", &sim.mesh, &last.u, &last.mu.bulk)?;
    write_restart(fs::File::create(dir.join("restart.bin"))?, &last.u)?;
    Ok(RunReport { trajectory, failure })
}

/// Errors of one sweep member against the reference run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemberResult {
    pub coupling: f64,
    pub errors: TrajectoryErrors<f64>,
    pub gap: GapNorms<f64>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub mode: StudyMode,
    pub members: Vec<MemberResult>,
    /// Couplings whose runs failed, with the error.
    pub failures: Vec<(f64, Error)>,
}

pub const SWEEP_QUANTITIES: [&str; 5] = ["u", "u_surf", "mu_bulk", "mu_surf", "gap"];

impl SweepReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// EOC tables in the order of [`SWEEP_QUANTITIES`].
    pub fn tables(&self) -> Result<Vec<(&'static str, Vec<EocRow>)>> {
        let inverse = self.mode == StudyMode::SweepToInfinity;
        let pick: [fn(&MemberResult) -> f64; 5] = [
            |m| m.errors.u_bulk,
            |m| m.errors.u_surf,
            |m| m.errors.mu_bulk,
            |m| m.errors.mu_surf,
            |m| m.gap.l2,
        ];
        SWEEP_QUANTITIES
            .iter()
            .zip(pick)
            .map(|(name, f)| {
                let rows: Vec<(f64, f64)> = self.members.iter().map(|m| (m.coupling, f(m))).collect();
                if rows.len() < 2 {
                    return Ok((*name, Vec::new()));
                }
                Ok((*name, eoc_table(&rows, inverse)?))
            })
            .collect()
    }

    /// Writes `eoc_<quantity>.csv` for every quantity.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, rows) in self.tables()? {
            write_eoc(fs::File::create(dir.join(format!("eoc_{name}.csv")))?, &rows)?;
        }
        Ok(())
    }
}

/// Runs `jobs` on up to `threads` scoped workers, keeping results in order.
fn parallel_map<I: Sync, O: Send>(items: &[I], threads: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<O>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                s.spawn(move || {
                    (t..items.len())
                        .step_by(threads)
                        .map(|i| (i, f(&items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, o) in h.join().expect("sweep worker panicked") {
                slots[i] = Some(o);
            }
        }
    });
    slots.into_iter().map(|o| o.expect("every item mapped")).collect()
}

/// Couplings of a sweep: `study.values` toward zero, their reciprocals
/// toward infinity.
pub fn sweep_couplings(cfg: &RunConfig) -> Result<(Coupling<f64>, Vec<f64>)> {
    match cfg.study.mode {
        StudyMode::SweepToZero => Ok((Coupling::Finite(0.0), cfg.study.values.clone())),
        StudyMode::SweepToInfinity => Ok((Coupling::Infinite, cfg.study.values.iter().map(|v| 1.0 / v).collect())),
        StudyMode::Single => Err(Error::Config("study.mode is single, not a sweep".into())),
    }
}

/// Runs the reference and every member of the sweep described by `cfg`.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    let (reference, couplings) = sweep_couplings(cfg)?;
    sweep_against(cfg, reference, &couplings, cfg.study.mode)
}

/// Sweep over explicit couplings against `reference`.
pub fn sweep_against(
    cfg: &RunConfig,
    reference: Coupling<f64>,
    couplings: &[f64],
    mode: StudyMode,
) -> Result<SweepReport> {
    let mut jobs: Vec<Coupling<f64>> = vec![reference];
    jobs.extend(couplings.iter().map(|&l| Coupling::from_f64(l)));
    let runs = parallel_map(&jobs, cfg.study.threads, |&c| -> Result<(Trajectory<f64>, Option<Error>)> {
        let sim = Simulation::with_coupling(cfg, c)?;
        Ok(sim.run())
    });
    let mut runs = runs.into_iter();
    let (ref_traj, ref_err) = runs.next().expect("reference job")?;
    if let Some(e) = ref_err {
        return Err(Error::StepFailed {
            step: ref_traj.records.len(),
            source: Box::new(e),
        });
    }
    let m = assemble(&build_unit_square_mesh::<f64>(cfg.mesh.n)?)?;
    let beta = cfg.model.beta;
    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (&l, run) in couplings.iter().zip(runs) {
        match run {
            Ok((traj, None)) => members.push(MemberResult {
                coupling: l,
                errors: trajectory_error(&traj.samples, &ref_traj.samples, &m)?,
                gap: trajectory_gap(&traj.samples, &m, beta),
            }),
            Ok((_, Some(e))) | Err(e) => failures.push((l, e)),
        }
    }
    Ok(SweepReport {
        mode,
        members,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn droplet_profile() {
        let mesh = build_unit_square_mesh::<f64>(8).unwrap();
        let spec = DropletSpec::new([0.5, 0.5], 0.3, 0.25, 0.02).unwrap();
        let u = initial_droplet(&mesh, &spec);
        let at = |x: f64, y: f64| {
            let k = mesh
                .vertices
                .iter()
                .position(|p| (p[0] - x).abs() < 1e-12 && (p[1] - y).abs() < 1e-12)
                .unwrap();
            u[k]
        };
        assert!((at(0.5, 0.5) - 1.0).abs() < 1e-6);
        assert!((at(1.0, 1.0) + 1.0).abs() < 1e-6);
        assert!(at(0.5, 0.75).abs() < 1e-12);
        assert!(u.iter().all(|v| v.abs() <= 1.0));

        let r = DropletSpec::reference(0.02);
        let corner = initial_droplet(&build_unit_square_mesh::<f64>(2).unwrap(), &r);
        let mesh2 = build_unit_square_mesh::<f64>(2).unwrap();
        let k = mesh2.vertices.iter().position(|p| p[0] == 1.0 && p[1] == 1.0).unwrap();
        assert!((corner[k] + 1.0).abs() < 1e-6);
        assert!(DropletSpec::new([0.0, 0.0], 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn full_axes_halve_the_droplet() {
        let mut cfg = RunConfig::default();
        let d = droplet_from_config(&cfg.initial, 0.02).unwrap().unwrap();
        assert_eq!((d.a, d.b), (0.6814, 0.367));
        assert!((d.width - 0.02 * std::f64::consts::SQRT_2).abs() < 1e-15);
        if let InitialConfig::Droplet { axes, .. } = &mut cfg.initial {
            *axes = AxisConvention::Full;
        }
        let d = droplet_from_config(&cfg.initial, 0.02).unwrap().unwrap();
        assert_eq!((d.a, d.b), (0.3407, 0.1835));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..11).collect();
        assert_eq!(parallel_map(&items, 3, |&i| i * i), items.iter().map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(parallel_map(&items, 1, |&i| i + 1)[10], 11);
    }

    #[test]
    fn small_sweep_runs() {
        let mut cfg = RunConfig::default();
        cfg.mesh.n = 4;
        cfg.model.t_final = 5e-5;
        cfg.output.sample_every = 2;
        cfg.study.mode = StudyMode::SweepToZero;
        cfg.study.values = vec![1e-3, 2e-3, 4e-3];
        cfg.study.threads = 2;
        let rep = run_sweep(&cfg).unwrap();
        assert!(rep.is_complete());
        let tables = rep.tables().unwrap();
        assert_eq!(tables.len(), 5);
        for (_, rows) in &tables {
            assert_eq!(rows.len(), 3);
            assert!(rows[0].eoc.is_none() && rows[1].eoc.is_some());
        }
        // errors shrink toward the reference
        let u = &tables[0].1;
        assert!(u[0].error < u[2].error);
    }
}
