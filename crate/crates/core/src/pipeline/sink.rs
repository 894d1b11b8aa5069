//! Stage output directory: tables go to a temporary directory and are moved
//! into place only when the stage succeeds.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::CsvOut;

pub struct StageDir {
    tmp: PathBuf,
    dest: PathBuf,
    /// Relative output name (from the run's output directory) to row count.
    prefix: String,
    files: BTreeMap<String, usize>,
}

pub struct Table {
    name: String,
    out: CsvOut<BufWriter<File>>,
    rows: usize,
}

impl Table {
    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.out.row(fields)?;
        self.rows += 1;
        Ok(())
    }
}

impl StageDir {
    /// Outputs land in `root/sub` (or `root` when `sub` is empty).
    pub fn open(root: &Path, stage: &str, sub: &str) -> Result<Self> {
        let tmp = root.join(format!(".tmp-{stage}"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        let dest = if sub.is_empty() { root.to_path_buf() } else { root.join(sub) };
        let prefix = if sub.is_empty() { String::new() } else { format!("{sub}/") };
        Ok(Self {
            tmp,
            dest,
            prefix,
            files: BTreeMap::new(),
        })
    }

    pub fn table(&self, name: &str, header: &[&str]) -> Result<Table> {
        let f = File::create(self.tmp.join(name))?;
        Ok(Table {
            name: name.to_string(),
            out: CsvOut::new(BufWriter::new(f), header)?,
            rows: 0,
        })
    }

    pub fn close(&mut self, t: Table) -> Result<()> {
        t.out.finish()?;
        self.files.insert(format!("{}{}", self.prefix, t.name), t.rows);
        Ok(())
    }

    /// Writes a non-tabular file; `rows` is what the manifest records.
    pub fn raw(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<()> {
        let mut f = BufWriter::new(File::create(self.tmp.join(name))?);
        f.write_all(bytes)?;
        f.flush()?;
        self.files.insert(format!("{}{}", self.prefix, name), rows);
        Ok(())
    }

    /// Writes through a caller-supplied writer (e.g. the panel CSV writers).
    pub fn with_writer<F>(&mut self, name: &str, rows: usize, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.tmp.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.files.insert(format!("{}{}", self.prefix, name), rows);
        Ok(())
    }

    /// Moves every file into place and returns the row counts.
    pub fn commit(self) -> Result<BTreeMap<String, usize>> {
        fs::create_dir_all(&self.dest)?;
        for name in self.files.keys() {
            let base = name.strip_prefix(&self.prefix).unwrap_or(name);
            fs::rename(self.tmp.join(base), self.dest.join(base))?;
        }
        fs::remove_dir_all(&self.tmp)?;
        Ok(self.files)
    }

    /// Removes the temporary directory without touching earlier outputs.
    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.tmp);
    }
}
