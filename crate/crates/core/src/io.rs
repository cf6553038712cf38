//! CSV and JSON persistence.
//!
//! Floats are written with their shortest round-tripping representation,
//! so export → import → export reproduces files byte for byte.

use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::analysis::FringeScan;
use crate::detection::CoincidenceHistogram;
use crate::dispersion::{LengthPoint, LengthScan, RulerCurve};
use crate::error::{Error, Result};
use crate::state::DetectorPair;

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

fn read_rows<R: Read>(r: R, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::InvalidData(format!(
            "expected columns {}, found {}",
            header.join(","),
            found.join(",")
        )));
    }
    rdr.records().map(|r| r.map_err(Error::from)).collect()
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, k: usize, line: usize) -> Result<T> {
    let raw = row.get(k).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::InvalidData(format!("row {line}: cannot parse '{raw}'")))
}

/// Sidecar metadata for a histogram CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramMeta {
    pub detector_pair: DetectorPair,
    pub bin_width_ps: f64,
    pub bins: usize,
    pub acquisition_time_s: f64,
    pub total_counts: u64,
}

impl HistogramMeta {
    pub fn of(h: &CoincidenceHistogram) -> Self {
        Self {
            detector_pair: h.detector_pair,
            bin_width_ps: h.bin_edges[1] - h.bin_edges[0],
            bins: h.bins(),
            acquisition_time_s: h.acquisition_time_s,
            total_counts: h.total(),
        }
    }
}

/// Columns `bin_start_ps,count`.
pub fn write_histogram_csv<W: Write>(w: W, h: &CoincidenceHistogram) -> Result<()> {
    let mut out = writer(w, &["bin_start_ps", "count"])?;
    for (start, c) in h.bin_edges.iter().zip(&h.counts) {
        out.write_record([start.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_histogram_csv<R: Read>(r: R, meta: &HistogramMeta) -> Result<CoincidenceHistogram> {
    let rows = read_rows(r, &["bin_start_ps", "count"])?;
    let mut edges = Vec::with_capacity(rows.len() + 1);
    let mut counts = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        edges.push(field::<f64>(row, 0, k + 1)?);
        counts.push(field::<u64>(row, 1, k + 1)?);
    }
    if counts.len() != meta.bins {
        return Err(Error::InvalidData(format!(
            "metadata lists {} bins, file has {}",
            meta.bins,
            counts.len()
        )));
    }
    let last = *edges.last().ok_or_else(|| Error::InvalidData("empty histogram".into()))?;
    edges.push(last + meta.bin_width_ps);
    CoincidenceHistogram::new(meta.detector_pair, edges, counts, meta.acquisition_time_s)
}

/// Columns `phase_rad,count`.
pub fn write_fringe_csv<W: Write>(w: W, scan: &FringeScan) -> Result<()> {
    let mut out = writer(w, &["phase_rad", "count"])?;
    for (p, c) in scan.phase_points.iter().zip(&scan.counts) {
        out.write_record([p.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_fringe_csv<R: Read>(r: R, pair: DetectorPair, time_per_point_s: f64) -> Result<FringeScan> {
    let rows = read_rows(r, &["phase_rad", "count"])?;
    let mut phases = Vec::with_capacity(rows.len());
    let mut counts = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        phases.push(field::<f64>(row, 0, k + 1)?);
        counts.push(field::<u64>(row, 1, k + 1)?);
    }
    FringeScan::new(pair, phases, counts, time_per_point_s)
}

/// Columns `delta_t_ps,gamma`.
pub fn write_reference_curve<W: Write>(w: W, curve: &[(f64, f64)]) -> Result<()> {
    let mut out = writer(w, &["delta_t_ps", "gamma"])?;
    for (t, g) in curve {
        out.write_record([t.to_string(), g.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reference_curve<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    read_rows(r, &["delta_t_ps", "gamma"])?
        .iter()
        .enumerate()
        .map(|(k, row)| Ok((field(row, 0, k + 1)?, field(row, 1, k + 1)?)))
        .collect()
}

/// Columns `delta_t_ps,visibility`.
pub fn write_ruler_csv<W: Write>(w: W, ruler: &RulerCurve) -> Result<()> {
    let mut out = writer(w, &["delta_t_ps", "visibility"])?;
    for (t, v) in ruler.delays().iter().zip(ruler.visibilities()) {
        out.write_record([t.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ruler_csv<R: Read>(r: R) -> Result<RulerCurve> {
    let rows = read_rows(r, &["delta_t_ps", "visibility"])?;
    let mut t = Vec::with_capacity(rows.len());
    let mut v = Vec::with_capacity(rows.len());
    for (k, row) in rows.iter().enumerate() {
        t.push(field(row, 0, k + 1)?);
        v.push(field(row, 1, k + 1)?);
    }
    RulerCurve::new(t, v)
}

/// Columns `delta_L_m,visibility,sigma`.
pub fn write_length_scan_csv<W: Write>(w: W, scan: &LengthScan) -> Result<()> {
    let mut out = writer(w, &["delta_L_m", "visibility", "sigma"])?;
    for p in &scan.points {
        out.write_record([
            p.delta_l_m.to_string(),
            p.visibility.to_string(),
            p.visibility_sigma.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_length_scan_csv<R: Read>(r: R) -> Result<LengthScan> {
    let points = read_rows(r, &["delta_L_m", "visibility", "sigma"])?
        .iter()
        .enumerate()
        .map(|(k, row)| {
            Ok(LengthPoint {
                delta_l_m: field(row, 0, k + 1)?,
                visibility: field(row, 1, k + 1)?,
                visibility_sigma: field(row, 2, k + 1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LengthScan::new(points)
}

/// Columns `quantity,value`.
pub fn write_key_value_csv<W: Write>(w: W, rows: &[(&str, f64)]) -> Result<()> {
    let mut out = writer(w, &["quantity", "value"])?;
    for (k, v) in rows {
        out.write_record([k.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read, T: DeserializeOwned>(r: R) -> Result<T> {
    Ok(serde_json::from_reader(r)?)
}
