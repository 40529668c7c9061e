//! CSV formats for measurement streams, detection events and traces.
//!
//! Streams are long-format rows `t_index,bus_id,re,im` (per-unit). Rows may
//! come in any order; buses outside the placement are ignored. Breakers
//! are written 1-based, statuses as bit strings (`1` = closed).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionEvent, StepTrace};
use crate::error::{Error, Result};
use crate::signature::Placement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct StreamRow {
    t_index: usize,
    bus_id: usize,
    re: f64,
    im: f64,
}

fn bad(msg: String) -> Error {
    Error::Parse {
        path: "csv input".into(),
        line: 0,
        msg,
    }
}

/// Reads a stream into one vector per sample, ordered like `placement`.
/// Sample indices must be `0..T` without gaps.
pub fn read_stream<R: Read>(input: R, placement: &Placement) -> Result<Vec<Vec<Complex64>>> {
    let mut samples: BTreeMap<usize, Vec<Option<Complex64>>> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    for row in rdr.deserialize() {
        let row: StreamRow = row?;
        let Some(k) = placement.bus_ids().iter().position(|&b| b == row.bus_id) else {
            continue;
        };
        let slot = &mut samples
            .entry(row.t_index)
            .or_insert_with(|| vec![None; placement.len()])[k];
        if slot.is_some() {
            return Err(bad(format!(
                "bus {} appears twice at sample {}",
                row.bus_id, row.t_index
            )));
        }
        *slot = Some(Complex64::new(row.re, row.im));
    }
    let mut out = Vec::with_capacity(samples.len());
    for (i, (t, values)) in samples.into_iter().enumerate() {
        if t != i {
            return Err(bad(format!("sample {i} is missing")));
        }
        let v = values
            .into_iter()
            .zip(placement.bus_ids())
            .map(|(v, b)| v.ok_or_else(|| bad(format!("bus {b} missing at sample {t}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(v);
    }
    Ok(out)
}

/// Writes full-grid measurement vectors restricted to `placement`.
pub fn write_stream<W: Write>(output: W, placement: &Placement, measured: &[Vec<Complex64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    for (t, y) in measured.iter().enumerate() {
        for v in placement
            .select(y)
            .into_iter()
            .zip(placement.bus_ids())
            .map(|(v, &bus_id)| StreamRow {
                t_index: t,
                bus_id,
                re: v.re,
                im: v.im,
            })
        {
            w.serialize(v)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub const EVENTS_HEADER: [&str; 6] = ["sample", "breaker", "before", "after", "score", "cluster_start"];

pub fn write_events<W: Write>(output: W, events: &[DetectionEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([
            e.sample.to_string(),
            (e.breaker + 1).to_string(),
            e.before.to_string(),
            e.after.to_string(),
            e.score.to_string(),
            e.cluster_start.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads an events file written by [`write_events`].
pub fn read_events<R: Read>(input: R) -> Result<Vec<DetectionEvent>> {
    #[derive(Deserialize)]
    struct Row {
        sample: usize,
        breaker: usize,
        before: String,
        after: String,
        score: f64,
        cluster_start: usize,
    }
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        if r.breaker == 0 {
            return Err(bad("breaker ids start at 1".into()));
        }
        out.push(DetectionEvent {
            sample: r.sample,
            breaker: r.breaker - 1,
            before: r.before.parse()?,
            after: r.after.parse()?,
            score: r.score,
            cluster_start: r.cluster_start,
        });
    }
    Ok(out)
}

/// Per-sample trace. `norm` is empty during warm-up, `best_breaker` when
/// no candidate was scored.
pub fn write_trace<W: Write>(output: W, trace: &[StepTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["sample", "norm", "max_score", "best_breaker"])?;
    for t in trace {
        w.write_record([
            t.sample.to_string(),
            if t.norm.is_nan() {
                String::new()
            } else {
                t.norm.to_string()
            },
            t.max_score.to_string(),
            t.best_breaker.map_or_else(String::new, |b| (b + 1).to_string()),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ieee33;

    #[test]
    fn stream_round_trip_is_exact() {
        let g = ieee33();
        let p = Placement::preset(&g, "P7").unwrap();
        let measured: Vec<Vec<Complex64>> = (0..4)
            .map(|t| {
                (0..33)
                    .map(|b| Complex64::new(1.0 - 1e-3 * b as f64, 0.1 / (t + 1) as f64))
                    .collect()
            })
            .collect();
        let mut buf = Vec::new();
        write_stream(&mut buf, &p, &measured).unwrap();
        let back = read_stream(buf.as_slice(), &p).unwrap();
        assert_eq!(back.len(), 4);
        for (b, m) in back.iter().zip(&measured) {
            assert_eq!(b, &p.select(m));
        }
    }

    #[test]
    fn stream_rows_may_be_shuffled_and_extra_buses_ignored() {
        let g = ieee33();
        let p = Placement::from_bus_ids(&g, &[3, 5]).unwrap();
        let text = "t_index,bus_id,re,im\n1,5,1.0,0.5\n0,3,0.9,0\n0,5,0.8,0\n1,3,0.7,0\n0,7,9,9\n";
        let s = read_stream(text.as_bytes(), &p).unwrap();
        assert_eq!(s[0], vec![Complex64::new(0.9, 0.0), Complex64::new(0.8, 0.0)]);
        assert_eq!(s[1], vec![Complex64::new(0.7, 0.0), Complex64::new(1.0, 0.5)]);
    }

    #[test]
    fn incomplete_or_duplicated_streams_fail() {
        let g = ieee33();
        let p = Placement::from_bus_ids(&g, &[3, 5]).unwrap();
        for text in [
            "t_index,bus_id,re,im\n0,3,1,0\n",
            "t_index,bus_id,re,im\n0,3,1,0\n0,5,1,0\n0,5,1,0\n",
            "t_index,bus_id,re,im\n1,3,1,0\n1,5,1,0\n",
            "t_index,bus_id,re,im\n0,3,x,0\n",
        ] {
            assert!(read_stream(text.as_bytes(), &p).is_err(), "{text}");
        }
    }

    #[test]
    fn events_round_trip() {
        let ev = DetectionEvent {
            sample: 12,
            breaker: 2,
            before: "11101".parse().unwrap(),
            after: "11001".parse().unwrap(),
            score: 0.987654321,
            cluster_start: 8,
        };
        let mut buf = Vec::new();
        write_events(&mut buf, std::slice::from_ref(&ev)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample,breaker,before,after,score,cluster_start\n12,3,11101,11001,"));
        assert_eq!(read_events(buf.as_slice()).unwrap(), vec![ev]);
    }
}
