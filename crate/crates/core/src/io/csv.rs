//! Per-step energy log.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::schemes::SchemeState;

pub const CSV_HEADER: &str =
    "step,t,E_gamma_h,F_gamma_h,mass,grad_energy,pot_energy,stab_residual,solver_iters,solver_residual,mobility_regularized";

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub t: f64,
    pub e_gamma_h: f64,
    pub f_gamma_h: Option<f64>,
    pub mass: f64,
    pub grad_energy: f64,
    pub pot_energy: f64,
    pub stab_residual: f64,
    pub solver_iters: usize,
    pub solver_residual: f64,
    pub mobility_regularized: bool,
}

impl From<&SchemeState> for EnergyRecord {
    fn from(s: &SchemeState) -> Self {
        Self {
            step: s.step,
            t: s.t,
            e_gamma_h: s.energy.e_gamma_h,
            f_gamma_h: s.energy.f_gamma_h,
            mass: s.energy.mass,
            grad_energy: s.energy.gradient_energy,
            pot_energy: s.energy.potential_energy,
            stab_residual: s.energy.stability_residual,
            solver_iters: s.stats.solver_iterations,
            solver_residual: s.stats.solver_residual,
            mobility_regularized: s.stats.mobility_regularized,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl EnergyRecord {
    /// Row text with 17 significant digits per real.
    pub fn to_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            num(self.t),
            num(self.e_gamma_h),
            self.f_gamma_h.map(num).unwrap_or_default(),
            num(self.mass),
            num(self.grad_energy),
            num(self.pot_energy),
            num(self.stab_residual),
            self.solver_iters,
            num(self.solver_residual),
            u8::from(self.mobility_regularized),
        )
    }

    pub fn from_row(row: &str) -> Option<Self> {
        let f: Vec<&str> = row.trim_end().split(',').collect();
        if f.len() != 11 {
            return None;
        }
        let real = |s: &str| s.parse::<f64>().ok();
        Some(Self {
            step: f[0].parse().ok()?,
            t: real(f[1])?,
            e_gamma_h: real(f[2])?,
            f_gamma_h: if f[3].is_empty() { None } else { Some(real(f[3])?) },
            mass: real(f[4])?,
            grad_energy: real(f[5])?,
            pot_energy: real(f[6])?,
            stab_residual: real(f[7])?,
            solver_iters: f[8].parse().ok()?,
            solver_residual: real(f[9])?,
            mobility_regularized: match f[10] {
                "0" => false,
                "1" => true,
                _ => return None,
            },
        })
    }
}

/// Append-mode writer. Reopening an existing log keeps its rows, drops a
/// trailing partial row left by an interrupted write, and ignores records
/// whose step index is already present.
pub struct EnergyCsv {
    out: BufWriter<File>,
    last_step: Option<usize>,
}

impl EnergyCsv {
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let mut last_step = None;
        if text.is_empty() {
            writeln!(file, "{CSV_HEADER}")?;
        } else {
            let complete = match text.rfind('\n') {
                Some(i) => &text[..=i],
                None => "",
            };
            let mut lines = complete.lines();
            if lines.next() != Some(CSV_HEADER) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{} does not start with the energy CSV header", path.display()),
                ));
            }
            for line in lines {
                let rec = EnergyRecord::from_row(line).ok_or_else(|| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("malformed row `{line}`"))
                })?;
                last_step = Some(last_step.map_or(rec.step, |s: usize| s.max(rec.step)));
            }
            if complete.len() != text.len() {
                file.set_len(complete.len() as u64)?;
            }
            file.seek(SeekFrom::Start(complete.len() as u64))?;
        }
        Ok(Self {
            out: BufWriter::new(file),
            last_step,
        })
    }

    /// Writes `record` unless its step is already logged; returns whether it was written.
    pub fn append(&mut self, record: &EnergyRecord) -> io::Result<bool> {
        if self.last_step.is_some_and(|s| record.step <= s) {
            return Ok(false);
        }
        writeln!(self.out, "{}", record.to_row())?;
        self.last_step = Some(record.step);
        Ok(true)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Appends `records` to the log at `path`, creating it with a header if needed.
pub fn write_energy_csv(path: &Path, records: &[EnergyRecord]) -> io::Result<()> {
    let mut csv = EnergyCsv::open(path)?;
    for r in records {
        csv.append(r)?;
    }
    csv.flush()
}

pub fn read_energy_csv(path: &Path) -> io::Result<Vec<EnergyRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "missing energy CSV header"));
    }
    lines
        .map(|l| EnergyRecord::from_row(l).ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("malformed row `{l}`"))))
        .collect()
}
