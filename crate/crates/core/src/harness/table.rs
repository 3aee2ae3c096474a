use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One CSV file: fixed header, rows already in their final order.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    /// File stem; the file is `<name>.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self { name, header, rows })
    }

    /// Values of a named column.
    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name:?} in {}", self.name)))?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .into_iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {v:?} in column {name:?}")))
            })
            .collect()
    }
}

/// Run metadata written next to each CSV. Kept out of the CSV itself so
/// that reruns produce identical CSV bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct RunProvenance {
    pub experiment: String,
    pub config_hash: String,
    pub grid: String,
    pub threads: usize,
    pub seed: u64,
    pub runtime_ms: u128,
}

impl RunProvenance {
    pub fn to_text(&self) -> String {
        format!(
            "experiment={}\nconfig_sha256={}\ngrid={}\nthreads={}\nseed={}\nruntime_ms={}\nversion={}\n",
            self.experiment,
            self.config_hash,
            self.grid,
            self.threads,
            self.seed,
            self.runtime_ms,
            env!("CARGO_PKG_VERSION"),
        )
    }
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.csv.provenance` per table.
pub fn write_tables(dir: &Path, tables: &[CsvTable], prov: &RunProvenance) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        std::fs::write(&path, t.to_bytes()?)?;
        std::fs::write(dir.join(format!("{}.csv.provenance", t.name)), prov.to_text())?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = CsvTable::new("demo", &["beta", "value"]);
        t.push(vec!["0.25".into(), super::super::fmt_f64(1.0 / 3.0)]);
        t.push(vec!["0.1".into(), "2".into()]);
        let prov = RunProvenance {
            experiment: "demo".into(),
            config_hash: "ab".into(),
            grid: "n=2 N=8 L=2".into(),
            threads: 1,
            seed: 0,
            runtime_ms: 5,
        };
        let paths = write_tables(dir.path(), &[t.clone()], &prov).unwrap();
        let back = CsvTable::read(&paths[0]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column_f64("value").unwrap()[0], 1.0 / 3.0);
        assert!(back.column("missing").is_err());
        let side = std::fs::read_to_string(dir.path().join("demo.csv.provenance")).unwrap();
        assert!(side.contains("config_sha256=ab"));
    }
}
