//! Behaviour of complete desk-scale runs.

use dynbc::config::RunConfig;
use dynbc::experiment::run_single;

fn run(overrides: &[&str]) -> dynbc::experiment::RunReport {
    let dir = tempfile::tempdir().unwrap();
    let mut o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    o.push(format!("output.dir={:?}", dir.path().to_str().unwrap()));
    let cfg = RunConfig::default_with_overrides(&o).unwrap();
    let report = run_single(&cfg).unwrap();
    assert!(report.failure.is_none(), "{:?}", report.failure);
    assert!(dir.path().join("series.csv").exists());
    report
}

#[test]
fn pure_phase_series_is_flat() {
    let report = run(&["model.t_final=1e-4", "initial={ kind = \"constant\", value = -1.0 }"]);
    let recs = &report.trajectory.records;
    assert_eq!(recs.len(), 11);
    for r in recs {
        assert_eq!(r.energy.e_total, recs[0].energy.e_total);
        assert_eq!(r.masses.weighted, recs[0].masses.weighted);
    }
}

#[test]
fn moderate_coupling_moves_mass_onto_the_boundary() {
    let report = run(&["model.coupling=0.1"]);
    let recs = &report.trajectory.records;
    let (first, last) = (recs[0].masses, recs[recs.len() - 1].masses);
    assert!(last.surf > first.surf, "surface mass {} -> {}", first.surf, last.surf);
    assert!(last.bulk < first.bulk, "bulk mass {} -> {}", first.bulk, last.bulk);
    let drift = (last.weighted - first.weighted).abs() / first.weighted.abs();
    assert!(drift < 1e-12);
}

#[test]
fn decoupled_limit_conserves_both_masses() {
    let report = run(&["model.coupling=\"inf\""]);
    let recs = &report.trajectory.records;
    let m0 = recs[0].masses;
    for r in recs {
        assert!((r.masses.bulk - m0.bulk).abs() <= 1e-12 * m0.bulk.abs());
        assert!((r.masses.surf - m0.surf).abs() <= 1e-12 * m0.surf.abs());
    }
}
