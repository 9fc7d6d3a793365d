use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::metrics::{Measurement, PerfReport};

pub const HEADER: [&str; 10] = [
    "kernel",
    "model",
    "policy",
    "chunk",
    "workers",
    "n",
    "trial",
    "wall_time_ns",
    "checksum",
    "verified",
];

/// One timed trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub kernel: String,
    pub model: String,
    pub policy: String,
    pub chunk: Option<usize>,
    pub workers: usize,
    pub n: usize,
    pub trial: usize,
    pub wall_time_ns: u64,
    pub checksum: u64,
    pub verified: bool,
}

impl ResultRow {
    fn group(&self) -> (&str, &str, &str, Option<usize>, usize) {
        (&self.kernel, &self.model, &self.policy, self.chunk, self.n)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn all_verified(&self) -> bool {
        self.rows.iter().all(|r| r.verified)
    }

    pub fn unverified(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| !r.verified)
    }
}

/// Writes the header, one line per row, then the `#` summary block.
pub fn emit_csv<W: Write>(table: &ResultTable, mut out: W) -> Result<(), BenchError> {
    {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(&mut out);
        writer.write_record(HEADER)?;
        for row in &table.rows {
            writer.serialize(row)?;
        }
        writer.flush().map_err(csv::Error::from)?;
    }
    out.write_all(summarize(table)?.as_bytes())
        .map_err(|source| BenchError::Io {
            path: "output".into(),
            source,
        })
}

/// Reads rows written by [`emit_csv`], skipping `#` lines.
pub fn parse_csv<R: Read>(input: R) -> Result<ResultTable, BenchError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(ResultTable { rows })
}

/// Per-configuration median time, speedup, efficiency and Amdahl fraction,
/// as `#`-prefixed lines.
pub fn summarize(table: &ResultTable) -> Result<String, BenchError> {
    let mut groups: Vec<(_, Vec<&ResultRow>)> = Vec::new();
    for row in &table.rows {
        match groups.iter_mut().find(|(g, _)| *g == row.group()) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((row.group(), vec![row])),
        }
    }
    let mut s = String::new();
    for ((kernel, model, policy, chunk, n), rows) in groups {
        let chunk = chunk.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
        let verified = rows.iter().filter(|r| r.verified).count();
        let _ = writeln!(
            s,
            "# {kernel} model={model} policy={policy} chunk={chunk} n={n} verified={verified}/{}",
            rows.len()
        );
        let measurements = rows
            .iter()
            .map(|r| {
                Measurement::new(
                    r.workers,
                    Duration::from_nanos(r.wall_time_ns),
                    r.checksum,
                    r.trial,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        match PerfReport::from_measurements(&measurements) {
            Ok(report) => {
                for line in report.to_string().lines() {
                    let _ = writeln!(s, "#   {line}");
                }
            }
            Err(e) => {
                let _ = writeln!(s, "#   no summary: {e}");
            }
        }
    }
    Ok(s)
}
