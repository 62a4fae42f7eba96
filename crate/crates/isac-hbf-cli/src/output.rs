//! CSV output: every file starts with a comment line carrying the config
//! hash and seed so any result can be rerun exactly, then a column header
//! row. Floats are written in shortest round-trip form; complex values are
//! interleaved as (re, im) column pairs.

use crate::commands::{CliError, CliResult};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub struct CsvFile {
    writer: BufWriter<fs::File>,
    name: String,
    columns: usize,
}

impl CsvFile {
    /// Creates `dir/name`, writing the provenance comment, any extra comment
    /// lines, and the column header.
    pub fn create(
        dir: &Path,
        name: &str,
        hash: &str,
        seed: u64,
        notes: &[&str],
        columns: &[String],
    ) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        let file = fs::File::create(&path)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut writer = BufWriter::new(file);
        let io = |e: std::io::Error| CliError::Io(format!("write {}: {e}", path.display()));
        writeln!(writer, "# config_hash={hash}, seed={seed}").map_err(io)?;
        for note in notes {
            writeln!(writer, "# {note}").map_err(io)?;
        }
        writeln!(writer, "{}", columns.join(",")).map_err(io)?;
        Ok(Self { writer, name: path.display().to_string(), columns: columns.len() })
    }

    pub fn row(&mut self, values: &[String]) -> CliResult<()> {
        assert_eq!(values.len(), self.columns, "column count mismatch in {}", self.name);
        writeln!(self.writer, "{}", values.join(","))
            .map_err(|e| CliError::Io(format!("write {}: {e}", self.name)))
    }

    pub fn finish(mut self) -> CliResult<String> {
        self.writer
            .flush()
            .map_err(|e| CliError::Io(format!("flush {}: {e}", self.name)))?;
        Ok(self.name)
    }
}

/// Shortest round-trip float formatting.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
