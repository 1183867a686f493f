//! `trace.csv`: one row per AFEM iteration.

use std::io::{Read, Write};

use thiserror::Error;

use crate::afem::{AfemTrace, RefinementKind, TraceRow};

pub const HEADER: [&str; 11] =
    ["k", "n", "elements", "dofs", "E_pde", "E_ic", "E_total", "E_A", "energy", "kind", "seconds"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

fn record(row: &TraceRow) -> [String; 11] {
    [
        row.k.to_string(),
        row.n.to_string(),
        row.elements.to_string(),
        row.dofs.to_string(),
        format!("{:e}", row.e_pde),
        format!("{:e}", row.e_ic),
        format!("{:e}", row.e_total),
        format!("{:e}", row.e_a),
        format!("{:e}", row.energy),
        row.kind.name().to_string(),
        format!("{:.6}", row.seconds),
    ]
}

/// Incremental writer: the header goes out on construction, rows as they come.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W) -> Result<Self, TraceError> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(HEADER)?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, row: &TraceRow) -> Result<(), TraceError> {
        self.inner.write_record(record(row))?;
        self.inner.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn write_csv<W: Write>(trace: &AfemTrace, sink: W) -> Result<(), TraceError> {
    let mut w = TraceWriter::new(sink)?;
    for row in &trace.rows {
        w.push(row)?;
    }
    Ok(())
}

pub fn to_csv_string(trace: &AfemTrace) -> String {
    let mut buf = Vec::new();
    write_csv(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn read_csv<R: Read>(source: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut reader = csv::Reader::from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(TraceError::Header(header));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| TraceError::Row { row: i + 1, msg };
        let int = |j: usize| rec[j].parse::<usize>().map_err(|e| bad(format!("{}: {e}", HEADER[j])));
        let real = |j: usize| rec[j].parse::<f64>().map_err(|e| bad(format!("{}: {e}", HEADER[j])));
        let kind = match &rec[9] {
            "mesh" => RefinementKind::Mesh,
            "graph" => RefinementKind::Graph,
            "stop" => RefinementKind::Stop,
            other => return Err(bad(format!("unknown kind {other:?}"))),
        };
        rows.push(TraceRow {
            k: int(0)?,
            n: int(1)? as u32,
            elements: int(2)?,
            dofs: int(3)?,
            e_pde: real(4)?,
            e_ic: real(5)?,
            e_total: real(6)?,
            e_a: real(7)?,
            energy: real(8)?,
            kind,
            seconds: real(10)?,
        });
    }
    Ok(rows)
}
