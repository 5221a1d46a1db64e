//! Diagnostics CSV: the fixed header, then one row per record with every
//! value in `{:.16e}` (17 significant digits).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::coupled::{RunObserver, State};
use crate::diagnostics::{DiagnosticsRecord, CSV_COLUMNS};
use crate::io::snapshot::write_snapshot;
use crate::Result;

pub fn header() -> String {
    CSV_COLUMNS.join(",")
}

pub fn format_row(rec: &DiagnosticsRecord) -> String {
    rec.to_row()
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Streams records into a CSV file.
#[derive(Debug)]
pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header())?;
        Ok(Self { out })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", format_row(rec))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_diagnostics_csv(path: &Path, series: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = CsvWriter::create(path)?;
    for rec in series {
        w.write(rec)?;
    }
    w.finish()
}

/// Observer writing `diagnostics.csv` and `snapshot_<step>.bin` into a
/// directory.
#[derive(Debug)]
pub struct RunFiles {
    dir: PathBuf,
    dt: f64,
    csv: CsvWriter,
    pub snapshots: Vec<PathBuf>,
}

impl RunFiles {
    pub fn create(dir: &Path, dt: f64) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            dt,
            csv: CsvWriter::create(&dir.join("diagnostics.csv"))?,
            snapshots: Vec::new(),
        })
    }

    pub fn csv_path(&self) -> PathBuf {
        self.dir.join("diagnostics.csv")
    }

    pub fn finish(self) -> Result<Vec<PathBuf>> {
        self.csv.finish()?;
        Ok(self.snapshots)
    }
}

impl RunObserver for RunFiles {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.csv.write(rec)
    }

    fn snapshot(&mut self, state: &State) -> Result<()> {
        let step = (state.t / self.dt).round() as u64;
        let path = self.dir.join(format!("snapshot_{step:08}.bin"));
        write_snapshot(&path, state)?;
        self.snapshots.push(path);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 0.1,
            e_total: 1.0 / 3.0,
            e_kin: 0.0,
            e_free: 1.0 / 3.0,
            d_visc: 0.0,
            d_chem: 2.0,
            u_l2: 0.0,
            grad_mu_l2: 1.0,
            grad_mu_h1: 1.0,
            phi_min: -0.5,
            phi_max: 0.5,
            sep_delta: 0.5,
            stat_mu_residual: 0.25,
            energy_defect: if t > 0.0 { Some(-1e-12) } else { None },
        }
    }

    #[test]
    fn header_matches_the_format() {
        assert_eq!(
            header(),
            "t,mass,E_total,E_kin,E_free,D_visc,D_chem,u_L2,grad_mu_L2,grad_mu_H1,phi_min,phi_max,sep_delta,stat_mu_residual,energy_defect"
        );
    }

    #[test]
    fn rows_round_trip_through_text() {
        let r = rec(0.1);
        let parsed: Vec<f64> = format_row(&r).split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed.len(), 15);
        for (a, b) in parsed.iter().zip(r.to_row()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_series_gives_a_header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_diagnostics_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", header()));
        write_diagnostics_csv(&path, &[rec(0.0), rec(0.1)]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }
}
