use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// A CSV result table. Timing columns can be dropped on output so that
/// repeated runs compare byte for byte.
pub struct Table {
    header: Vec<&'static str>,
    timing: Vec<bool>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            header: columns.to_vec(),
            timing: columns.iter().map(|c| c.ends_with("_s")).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    fn write_to(&self, w: impl Write, timing: bool) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let keep = |i: &usize| timing || !self.timing[*i];
        let cols: Vec<usize> = (0..self.header.len()).filter(keep).collect();
        csv.write_record(cols.iter().map(|&i| self.header[i]))?;
        for row in &self.rows {
            csv.write_record(cols.iter().map(|&i| row[i].as_str()))?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Writes to `out`, or stdout when absent.
    pub fn emit(&self, out: Option<&Path>, timing: bool) -> Result<()> {
        match out {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                self.write_to(std::io::BufWriter::new(f), timing)
            }
            None => self.write_to(std::io::stdout().lock(), timing),
        }
    }
}

pub fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn secs(x: f64) -> String {
    format!("{x:.4}")
}
