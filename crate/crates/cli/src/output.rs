//! Artifact writing with cleanup on failure.

use rps_core::correlator::CorrelationHistogram;
use rps_core::photostream::{io, TimeTagStream};
use rps_core::scenario::StreamFormat;
use rps_core::Result;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Files written by one run. Unless `commit` is called, dropping it
/// removes every file it created (and the directory if it made it).
pub struct Artifacts {
    dir: PathBuf,
    digest: String,
    made_dir: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    pub fn new(dir: &Path, digest: &str) -> Result<Self> {
        let made_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digest: digest.to_string(),
            made_dir,
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    /// A CSV table: digest comment, header, one row per entry of `rows`.
    pub fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<()> {
        let mut w = self.create(name)?;
        writeln!(w, "# scenario_digest={}", self.digest)?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn histogram(&mut self, name: &str, h: &CorrelationHistogram) -> Result<()> {
        let rows = (0..h.counts.len()).map(|i| {
            let norm = match &h.expected {
                Some(e) if e[i] > 0.0 => h.counts[i] as f64 / e[i],
                Some(_) => 0.0,
                None => h.counts[i] as f64,
            };
            vec![
                Cell::F(h.tau[i]),
                Cell::U(h.counts[i]),
                Cell::F(norm),
                Cell::F(h.errors[i]),
            ]
        });
        self.table(name, &["tau_ns", "counts", "norm", "err"], rows)
    }

    pub fn streams(&mut self, stem: &str, streams: &[&TimeTagStream], formats: &[StreamFormat]) -> Result<()> {
        for f in formats {
            match f {
                StreamFormat::Csv => {
                    let mut w = self.create(&format!("{stem}.csv"))?;
                    io::write_csv(streams, &mut w)?;
                    w.flush()?;
                }
                StreamFormat::Binary => {
                    for s in streams {
                        let mut w = self.create(&format!("{stem}_{}.bin", s.meta.detector_id))?;
                        io::write_binary(s, &mut w)?;
                        w.flush()?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn manifest(&mut self, value: &serde_json::Value) -> Result<()> {
        let mut w = self.create("run_manifest.json")?;
        let text = serde_json::to_string_pretty(value).map_err(|e| rps_core::Error::Format(e.to_string()))?;
        writeln!(w, "{text}")?;
        w.flush()?;
        Ok(())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.made_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub enum Cell {
    F(f64),
    U(u64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits
            Cell::F(v) => format!("{v:.16e}"),
            Cell::U(v) => v.to_string(),
        }
    }
}
