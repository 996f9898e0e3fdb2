//! CSV reports with a provenance header of `#` lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::CliResult;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const GIT_DESCRIBE: &str = env!("MSVAR_GIT_DESCRIBE");

/// Inputs that determine an output file's bytes.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// Floats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column label for a quantile level, e.g. `q2.5`.
pub fn level_label(level: f64) -> String {
    let pct = format!("{:.6}", level * 100.0);
    let pct = pct.trim_end_matches('0').trim_end_matches('.');
    format!("q{pct}")
}

pub struct Report {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Report {
    pub fn create(dir: &Path, name: &str, prov: &Provenance, header: &[String]) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut buf = BufWriter::new(File::create(&path)?);
        writeln!(buf, "# msvar {VERSION}")?;
        writeln!(buf, "# config-sha256 {}", prov.config_hash)?;
        writeln!(buf, "# seed {}", prov.seed)?;
        writeln!(buf, "# git {GIT_DESCRIBE}")?;
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    pub fn row(&mut self, fields: &[String]) -> CliResult<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub fn strings<S: AsRef<str>>(items: &[S]) -> Vec<String> {
    items.iter().map(|s| s.as_ref().to_string()).collect()
}
