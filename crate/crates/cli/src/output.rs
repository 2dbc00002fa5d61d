//! CSV writing and output-directory bookkeeping.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Float cell with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Checks every row against the header width, then writes the file.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != header.len()) {
        bail!(
            "row {i} has {} fields but the header has {}",
            row.len(),
            header.len()
        );
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// A table ready to be written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.header, &self.rows)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    /// Rows whose text columns match every `(name, value)` filter.
    pub fn select<'a>(&'a self, filters: &'a [(&str, &str)]) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        let idx: Vec<(usize, &str)> = filters
            .iter()
            .map(|(k, v)| (self.column(k).unwrap_or(usize::MAX), *v))
            .collect();
        self.rows
            .iter()
            .filter(move |r| idx.iter().all(|&(i, v)| r.get(i).is_some_and(|x| x == v)))
    }

    /// Numeric value of column `name` in a row.
    pub fn value(&self, row: &[String], name: &str) -> Option<f64> {
        row.get(self.column(name)?)?.parse().ok()
    }

    /// Value for `metric` in a two-column `metric,value` table.
    pub fn metric(&self, metric: &str) -> Option<f64> {
        let filter = [("metric", metric)];
        let row = self.select(&filter).next()?;
        self.value(row, "value")
    }
}

/// Tracks files written under an output directory and removes them unless
/// [`OutputGuard::commit`] is called.
pub struct OutputGuard {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
