//! File output: per-step CSV series, EOC tables, legacy VTK snapshots and
//! binary restart files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::diagnostics::EocRow;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Scalar;
use crate::stepper::StepRecord;

pub const SERIES_HEADER: [&str; 10] = [
    "t",
    "e_bulk",
    "e_surf",
    "e_total",
    "bulk_mass",
    "surf_mass",
    "weighted_mass",
    "l2_gap",
    "linf_gap",
    "newton_iters",
];

/// Shortest round-trip decimal form, so files are reproducible bit for bit.
fn num<T: Scalar>(v: T) -> String {
    fmt_f64(v.to_f64_lossy())
}

/// Plain notation for moderate magnitudes, exponent notation otherwise.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub struct SeriesWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl SeriesWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(SERIES_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write<T: Scalar>(&mut self, r: &StepRecord<T>) -> Result<()> {
        self.inner.write_record([
            num(r.time),
            num(r.energy.e_bulk),
            num(r.energy.e_surf),
            num(r.energy.e_total),
            num(r.masses.bulk),
            num(r.masses.surf),
            num(r.masses.weighted),
            num(r.gap.l2),
            num(r.gap.linf),
            r.newton_iters.to_string(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_series<T: Scalar>(path: &Path, records: &[StepRecord<T>]) -> Result<()> {
    let mut w = SeriesWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.flush()
}

/// Columns `L, err, eoc`; the order is left empty where undefined.
pub fn write_eoc<W: Write>(w: W, rows: &[EocRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["L", "err", "eoc"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.l),
            fmt_f64(r.error),
            r.eoc.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with point data.
pub fn write_vtk<T: Scalar, W: Write>(w: W, mesh: &Mesh<T>, fields: &[(&str, &[T])]) -> Result<()> {
    let nv = mesh.n_vertices();
    for (name, f) in fields {
        if f.len() != nv {
            return Err(Error::DimensionMismatch(format!(
                "field {name} has {} values for {nv} vertices",
                f.len()
            )));
        }
    }
    let mut w = BufWriter::new(w);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "dynbc snapshot")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in &mesh.vertices {
        writeln!(w, "{} {} 0", num(p[0]), num(p[1]))?;
    }
    let nt = mesh.triangles.len();
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {nv}")?;
    for (name, f) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for &v in f.iter() {
            writeln!(w, "{}", num(v))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Restart file: entry count as `u64` then the values as `f64`, both
/// little endian.
pub fn write_restart<T: Scalar, W: Write>(mut w: W, u: &[T]) -> Result<()> {
    w.write_all(&(u.len() as u64).to_le_bytes())?;
    for &v in u {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_restart<T: Scalar, R: Read>(mut r: R) -> Result<Vec<T>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let len = u64::from_le_bytes(head) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * len {
        return Err(Error::Config(format!(
            "restart file declares {len} values but holds {} bytes of data",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{EnergyBreakdown, GapNorms, Masses};
    use crate::mesh::build_unit_square_mesh;

    fn record(step: usize) -> StepRecord<f64> {
        StepRecord {
            step,
            time: step as f64 * 0.1,
            energy: EnergyBreakdown {
                e_bulk: 1.5,
                e_surf: 0.25,
                e_total: 1.75,
            },
            masses: Masses {
                bulk: 0.1,
                surf: -0.2,
                weighted: 0.2,
            },
            gap: GapNorms { l2: 0.0, linf: 1e-300 },
            slack: None,
            newton_iters: 3,
            residual_norm: 0.0,
            compatibility: 0.0,
        }
    }

    #[test]
    fn series_layout() {
        let mut buf = Vec::new();
        {
            let mut w = SeriesWriter::new(&mut buf).unwrap();
            w.write(&record(0)).unwrap();
            w.write(&record(1)).unwrap();
            w.flush().unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SERIES_HEADER.join(","));
        assert_eq!(lines[2], "0.1,1.5,0.25,1.75,0.1,-0.2,0.2,0,1e-300,3");
    }

    #[test]
    fn eoc_layout() {
        let rows = crate::diagnostics::eoc_table(&[(1e-4, 2e-5), (2e-4, 4e-5)], false).unwrap();
        let mut buf = Vec::new();
        write_eoc(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "L,err,eoc\n0.0001,2e-5,\n0.0002,4e-5,1\n");
    }

    #[test]
    fn restart_round_trip() {
        let u = vec![1.0, -0.5, f64::MIN_POSITIVE, 1.0 / 3.0];
        let mut buf = Vec::new();
        write_restart(&mut buf, &u).unwrap();
        assert_eq!(buf.len(), 8 + 32);
        assert_eq!(&buf[..8], &4u64.to_le_bytes());
        let back: Vec<f64> = read_restart(&buf[..]).unwrap();
        assert_eq!(back, u);
        assert!(read_restart::<f64, _>(&buf[..20]).is_err());
    }

    #[test]
    fn vtk_snapshot() {
        let mesh = build_unit_square_mesh::<f64>(1).unwrap();
        let u = vec![1.0, 0.0, -1.0, 0.5];
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, &[("u", &u)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        assert!(text.contains("SCALARS u double 1"));
        assert!(text.trim_end().ends_with("0.5"));
        assert!(write_vtk(Vec::new(), &mesh, &[("u", &u[..2])]).is_err());
    }
}
