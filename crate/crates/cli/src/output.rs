//! Deterministic CSV writers. Every file carries a header row matching the
//! documented schema; floats use a fixed scientific format and rows are
//! emitted in a deterministic order so identical runs produce identical
//! bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(dir: &Path, name: &str, header: &str) -> Result<CsvWriter> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(name);
        let file =
            File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{header}")?;
        Ok(CsvWriter { path, out })
    }

    pub fn row(&mut self, fields: &[Field]) -> Result<()> {
        let mut first = true;
        for f in fields {
            if !first {
                write!(self.out, ",")?;
            }
            first = false;
            match f {
                Field::Int(v) => write!(self.out, "{v}")?,
                Field::Float(v) => write!(self.out, "{v:.9e}")?,
                Field::Text(v) => write!(self.out, "{v}")?,
                Field::Flag(v) => write!(self.out, "{}", *v as u8)?,
            }
        }
        writeln!(self.out)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

pub enum Field<'a> {
    Int(i64),
    Float(f64),
    Text(&'a str),
    Flag(bool),
}
