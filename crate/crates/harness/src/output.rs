//! CSV files with a provenance comment line ahead of the header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::HarnessError;

/// Output directory for one run; writes the resolved config next to the CSVs.
pub struct OutDir {
    dir: PathBuf,
    comment: String,
}

impl OutDir {
    pub fn create(cfg: &Config, override_note: Option<&str>) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(&cfg.out)?;
        std::fs::write(cfg.out.join("config.toml"), cfg.to_toml())?;
        let mut comment = format!(
            "# mflab {} config_sha256={} seed={}",
            cfg.experiment.name(),
            cfg.hash(),
            cfg.seed
        );
        if let Some(note) = override_note {
            comment.push_str(&format!(" assumption_override=\"{note}\""));
        }
        Ok(Self {
            dir: cfg.out.clone(),
            comment,
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvFile, HarnessError> {
        let path = self.dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        writeln!(file, "{}", self.comment)?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(CsvFile { path, writer })
    }
}

pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn row<I, S>(&mut self, fields: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, HarnessError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Reads a CSV written by [`OutDir::csv`], skipping the comment line.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let body = text.split_once('\n').map(|(_, b)| b).unwrap_or("");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header = reader.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
