//! Run-directory outputs: CSV tables, raw field dumps and the manifest.
//!
//! CSV floats are printed with 17 significant digits so that reruns with the
//! same configuration and seed produce byte-identical files. Field dumps are
//! raw little-endian f64 arrays, row-major with x fastest, accompanied by a
//! `.meta` text sidecar describing the shape and bounds.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use wavelab_core::grid::{DomainConfig, SpaceTimeField};

/// Formats a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table under construction.
pub struct Csv {
    header: String,
    rows: Vec<String>,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Csv {
        Csv {
            header: columns.join(","),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, fields: &[CsvField]) {
        let mut line = String::new();
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            match f {
                CsvField::Int(v) => {
                    let _ = write!(line, "{v}");
                }
                CsvField::Float(v) => line.push_str(&fmt_f64(*v)),
                CsvField::Str(s) => line.push_str(s),
            }
        }
        self.rows.push(line);
    }

    pub fn to_string(&self) -> String {
        let mut out = String::with_capacity(self.header.len() + self.rows.len() * 32 + 2);
        out.push_str(&self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// One CSV cell.
pub enum CsvField<'a> {
    Int(i64),
    Float(f64),
    Str(&'a str),
}

/// Writer that funnels every artifact of a run through one place.
pub struct RunDir {
    dir: PathBuf,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<RunDir> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write_csv(&self, name: &str, csv: &Csv) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, csv.to_string())
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    /// Raw little-endian f64 dump with a text sidecar.
    pub fn write_field(
        &self,
        name: &str,
        field: &SpaceTimeField,
        domain: &DomainConfig,
    ) -> Result<()> {
        let data_path = self.dir.join(format!("{name}.f64"));
        let mut file = fs::File::create(&data_path)
            .with_context(|| format!("cannot write {}", data_path.display()))?;
        let mut buf = Vec::with_capacity(field.values().len() * 8);
        for v in field.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&buf)?;

        let sidecar = format!(
            "layout = row-major-x-fastest\nnx = {}\nnt = {}\nx_lo = {}\nx_hi = {}\nt_lo = {}\nt_hi = {}\ncount = {}\n",
            domain.nx,
            domain.nt,
            fmt_f64(domain.x_lo),
            fmt_f64(domain.x_hi),
            fmt_f64(domain.t_lo),
            fmt_f64(domain.t_hi),
            field.values().len()
        );
        self.write_text(&format!("{name}.meta"), &sidecar)
    }

    /// Manifest: configuration echo, version, seed and wall time. The wall
    /// time makes the manifest non-deterministic by design; the CSV tables
    /// are the reproducible artifacts.
    pub fn write_manifest(&self, config_echo: &str, seed: u64, wall_seconds: f64) -> Result<()> {
        let manifest = format!(
            "version = {}\nseed = {seed}\nwall_seconds = {wall_seconds:.3}\n--- config ---\n{config_echo}",
            env!("CARGO_PKG_VERSION"),
        );
        self.write_text("manifest.txt", &manifest)
    }
}

/// CSV of a spatial profile: `index,x,value` (+ optional reference column).
pub fn spatial_csv(
    domain: &DomainConfig,
    values: &[f64],
    reference: Option<&[f64]>,
) -> Csv {
    let mut csv = match reference {
        Some(_) => Csv::new(&["index", "x", "value", "reference"]),
        None => Csv::new(&["index", "x", "value"]),
    };
    for ix in 0..domain.n_space() {
        match reference {
            Some(r) => csv.row(&[
                CsvField::Int(ix as i64),
                CsvField::Float(domain.x(ix)),
                CsvField::Float(values[ix]),
                CsvField::Float(r[ix]),
            ]),
            None => csv.row(&[
                CsvField::Int(ix as i64),
                CsvField::Float(domain.x(ix)),
                CsvField::Float(values[ix]),
            ]),
        }
    }
    csv
}

/// CSV of a time series: `index,t,value`.
pub fn trace_csv(domain: &DomainConfig, values: &[f64]) -> Csv {
    let mut csv = Csv::new(&["index", "t", "value"]);
    for it in 0..domain.n_time() {
        csv.row(&[
            CsvField::Int(it as i64),
            CsvField::Float(domain.t(it)),
            CsvField::Float(values[it]),
        ]);
    }
    csv
}
