//! CSV export and import of closed-loop traces.
//!
//! Two files per run: one row per sampling index and one row per loop
//! iteration. Floats are written with 12 significant digits, so identical
//! runs produce identical bytes.

use std::io::{Read, Write};

use ncs_core::plant::AffineMap;
use ncs_core::sim::LoopTrace;

pub const SAMPLES_HEADER: &str = "# ncs-trace-samples v1";
pub const ITERATIONS_HEADER: &str = "# ncs-trace-iterations v1";

#[derive(Debug)]
pub enum TraceError {
    Csv(csv::Error),
    Io(std::io::Error),
    Format(String),
}

impl std::fmt::Display for TraceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceError::Csv(e) => write!(f, "csv: {}", e),
            TraceError::Io(e) => write!(f, "io: {}", e),
            TraceError::Format(m) => write!(f, "malformed trace: {}", m),
        }
    }
}

impl std::error::Error for TraceError {}

impl From<csv::Error> for TraceError {
    fn from(e: csv::Error) -> Self {
        TraceError::Csv(e)
    }
}

impl From<std::io::Error> for TraceError {
    fn from(e: std::io::Error) -> Self {
        TraceError::Io(e)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{:.11e}", v)
}

/// Context needed to label a trace in physical units.
#[derive(Debug, Clone)]
pub struct TraceLabels<'a> {
    pub state_map: &'a AffineMap,
    /// Physical value of every input id.
    pub inputs: &'a [Vec<f64>],
}

/// Per-sample CSV: working and physical state, the held input, the
/// iteration covering the sample and a marker with `N_k` at `s = M_k`.
pub fn write_samples<W: Write>(
    mut out: W,
    t: &LoopTrace,
    labels: &TraceLabels<'_>,
) -> Result<(), TraceError> {
    writeln!(out, "{}", SAMPLES_HEADER)?;
    let n = t.y_tilde.first().map_or(0, Vec::len);
    let m = labels.inputs.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["s".to_string()];
    head.extend((0..n).map(|i| format!("x{}", i)));
    head.extend((0..n).map(|i| format!("phys_x{}", i)));
    head.push("held".into());
    head.extend((0..m).map(|i| format!("u{}", i)));
    head.push("k".into());
    head.push("n_k".into());
    w.write_record(&head)?;
    let mut k = 0usize;
    for (s, x) in t.y_tilde.iter().enumerate() {
        while k + 1 < t.m_seq.len() && t.m_seq[k + 1] <= s {
            k += 1;
        }
        let mut row = vec![s.to_string()];
        row.extend(x.iter().map(|&v| fmt_f64(v)));
        row.extend(labels.state_map.to_physical(x).into_iter().map(fmt_f64));
        match t.held.get(s) {
            Some(&u) => {
                row.push(u.to_string());
                row.extend(labels.inputs[u as usize].iter().map(|&v| fmt_f64(v)));
            }
            None => row.extend(std::iter::repeat(String::new()).take(m + 1)),
        }
        if s < t.horizon() && k < t.m_seq.len() {
            row.push((k + 1).to_string());
            row.push(if t.m_seq[k] == s {
                t.n_seq[k].to_string()
            } else {
                String::new()
            });
        } else {
            row.push(String::new());
            row.push(String::new());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-iteration CSV: `k, M_k, N_k, w_k, v_k` (id and physical value) and
/// the controller state `xi_k`.
pub fn write_iterations<W: Write>(
    mut out: W,
    t: &LoopTrace,
    labels: &TraceLabels<'_>,
) -> Result<(), TraceError> {
    writeln!(out, "{}", ITERATIONS_HEADER)?;
    let n = t.w.first().map_or(0, Vec::len);
    let m = labels.inputs.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["k".to_string(), "m_k".into(), "n_k".into()];
    head.extend((0..n).map(|i| format!("w{}", i)));
    head.push("v".into());
    head.extend((0..m).map(|i| format!("v{}", i)));
    head.push("xi".into());
    w.write_record(&head)?;
    for k in 0..t.iterations() {
        let mut row = vec![(k + 1).to_string(), t.m_seq[k].to_string(), t.n_seq[k].to_string()];
        row.extend(t.w[k].iter().map(|c| c.to_string()));
        let v = t.v[k + 1];
        row.push(v.to_string());
        row.extend(labels.inputs[v as usize].iter().map(|&x| fmt_f64(x)));
        row.push(t.xi_seq[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// What can be recovered from a samples CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    /// Working-coordinate samples `y~_s`.
    pub y_tilde: Vec<Vec<f64>>,
    /// Held input ids (one per interval).
    pub held: Vec<u32>,
    /// `(M_k, N_k)` markers.
    pub markers: Vec<(usize, u32)>,
}

fn parse_f64(s: &str, line: usize) -> Result<f64, TraceError> {
    s.trim()
        .parse()
        .map_err(|_| TraceError::Format(format!("line {}: bad number {:?}", line, s)))
}

pub fn read_samples<R: Read>(mut input: R) -> Result<SampleTable, TraceError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    if text.lines().next() != Some(SAMPLES_HEADER) {
        return Err(TraceError::Format(format!("missing header {:?}", SAMPLES_HEADER)));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let head = r.headers()?.clone();
    let n = head.iter().filter(|h| h.starts_with('x')).count();
    let held_col = head
        .iter()
        .position(|h| h == "held")
        .ok_or_else(|| TraceError::Format("no held column".into()))?;
    let nk_col = head.len() - 1;
    let mut t = SampleTable {
        y_tilde: Vec::new(),
        held: Vec::new(),
        markers: Vec::new(),
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 3;
        let s: usize = rec[0]
            .parse()
            .map_err(|_| TraceError::Format(format!("line {}: bad index", line)))?;
        if s != t.y_tilde.len() {
            return Err(TraceError::Format(format!("line {}: sample {} out of order", line, s)));
        }
        t.y_tilde.push(
            (1..=n)
                .map(|c| parse_f64(&rec[c], line))
                .collect::<Result<_, _>>()?,
        );
        if !rec[held_col].is_empty() {
            t.held.push(
                rec[held_col]
                    .parse()
                    .map_err(|_| TraceError::Format(format!("line {}: bad input id", line)))?,
            );
        }
        if !rec[nk_col].is_empty() {
            let nk = rec[nk_col]
                .parse()
                .map_err(|_| TraceError::Format(format!("line {}: bad N_k", line)))?;
            t.markers.push((s, nk));
        }
    }
    Ok(t)
}
