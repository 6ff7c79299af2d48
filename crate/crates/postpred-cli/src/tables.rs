//! CSV emission and sample-file ingestion shared by the subcommands.
//! Tables carry one header line; floats are printed with 12 significant
//! digits so that re-parsing loses nothing beyond that precision.

use std::fs;
use std::path::{Path, PathBuf};

use postpred::{ModelFamily, SampleBatch};

use crate::AppError;

/// One emitted table: a marker name, a header line and data rows.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub header: &'static str,
    pub rows: Vec<String>,
}

impl Table {
    pub fn new(name: &'static str, header: &'static str) -> Self {
        Table {
            name,
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 32 + 32);
        out.push_str(self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out
    }
}

/// Twelve significant digits in scientific form; `f64::from_str` accepts it.
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.11e}")
}

/// `run.csv` plus `_density` gives `run_density.csv`; extensionless paths
/// get the suffix appended.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}{suffix}.{ext}"),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), AppError> {
    fs::write(path, contents)
        .map_err(|e| AppError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Emits tables either to stdout, separated by `# table:` markers, or to
/// files derived from `out` by per-table suffixes (empty suffix = `out`
/// itself). Written paths are reported on stderr.
pub fn emit_tables(tables: &[(Table, &str)], out: Option<&Path>) -> Result<(), AppError> {
    match out {
        None => {
            let mut first = true;
            for (table, _) in tables {
                if !first {
                    println!();
                }
                first = false;
                println!("# table: {}", table.name);
                print!("{}", table.to_csv());
            }
        }
        Some(base) => {
            for (table, suffix) in tables {
                let path = if suffix.is_empty() {
                    base.to_path_buf()
                } else {
                    with_suffix(base, suffix)
                };
                write_file(&path, &table.to_csv())?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// Reads a sample file of `x1,x2` lines. `#` starts a comment, blank lines
/// are skipped, every pair must lie in the family's observation support.
pub fn read_samples(path: &Path, model: &dyn ModelFamily) -> Result<SampleBatch, AppError> {
    let text = fs::read_to_string(path).map_err(|e| {
        AppError::Data(format!("cannot read samples {}: {e}", path.display()))
    })?;
    let (s1, s2) = model.obs_support();
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (a, b) = body.split_once(',').ok_or_else(|| {
            AppError::Data(format!("samples line {line}: expected x1,x2"))
        })?;
        let x1: f64 = a.trim().parse().map_err(|_| {
            AppError::Data(format!("samples line {line}: cannot parse {:?}", a.trim()))
        })?;
        let x2: f64 = b.trim().parse().map_err(|_| {
            AppError::Data(format!("samples line {line}: cannot parse {:?}", b.trim()))
        })?;
        if !s1.contains(x1) || !s2.contains(x2) {
            return Err(AppError::Data(format!(
                "samples line {line}: pair ({x1}, {x2}) is outside the observation support"
            )));
        }
        pairs.push((x1, x2));
    }
    Ok(SampleBatch::from_pairs(&pairs)?)
}
