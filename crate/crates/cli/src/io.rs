use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Deserialize;

/// Lines handed to the worker pool at a time.
const BATCH: usize = 256;

/// One input document.
#[derive(Debug, Clone, Deserialize)]
pub struct DocLine {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub references: Option<Vec<String>>,
    #[serde(default)]
    pub group: Option<String>,
}

pub fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("cannot open {}", p.display()))?,
        )),
        None => Box::new(BufReader::new(io::stdin())),
    })
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader = open_input(Some(path))?;
    let mut lines = Vec::new();
    for line in reader.lines() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        lines.push(line.strip_suffix('\r').map(str::to_string).unwrap_or(line));
    }
    Ok(lines)
}

/// Parses JSON lines, skipping blank ones; errors name the 1-based line.
pub fn parse_json_line<T: for<'de> Deserialize<'de>>(line_no: usize, line: &str) -> Result<Option<T>> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    serde_json::from_str(line)
        .map(Some)
        .with_context(|| format!("line {line_no}: malformed JSON record"))
}

/// Streams `reader` through `work` on `jobs` threads and hands the results
/// to `emit` in input order. `parse` sees each line with its 1-based number
/// and may skip it by returning `None`.
pub fn process_ordered<T, R>(
    reader: impl BufRead,
    jobs: usize,
    parse: impl Fn(usize, &str) -> Result<Option<T>>,
    work: impl Fn(T) -> Result<R> + Sync,
    mut emit: impl FnMut(R) -> Result<()>,
) -> Result<()>
where
    T: Send,
    R: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")?;
    let mut batch: Vec<T> = Vec::with_capacity(BATCH);
    let mut flush = |batch: &mut Vec<T>| -> Result<()> {
        let items = std::mem::take(batch);
        let results: Vec<Result<R>> = pool.install(|| items.into_par_iter().map(&work).collect());
        for r in results {
            emit(r?)?;
        }
        Ok(())
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.context("cannot read input")?;
        if let Some(item) = parse(i + 1, &line)? {
            batch.push(item);
        }
        if batch.len() >= BATCH {
            flush(&mut batch)?;
        }
    }
    flush(&mut batch)
}

pub fn write_json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
