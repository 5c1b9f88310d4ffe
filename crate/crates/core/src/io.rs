//! Scenario documents, PGM frames and CSV tables.
//!
//! Scenario documents are TOML with four tables: `topology`, `initial`, an
//! array `maps` of `{ from_step, map }` entries, and `run`. Unknown keys are
//! rejected.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{MetricsRecord, SweepRow};
use crate::engine::Scenario;
use crate::network::NetworkState;
use crate::{Error, Result};

/// Parses and fully validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Syntax { line: error_line(text, &e), message: e.message().to_string() })?;
    scenario.validate()?;
    Ok(scenario)
}

/// 1-based line of a parse error. Errors raised inside tagged tables lose
/// their span, so unknown keys are located by name instead.
fn error_line(text: &str, e: &toml::de::Error) -> usize {
    let line_of = |offset: usize| text[..offset.min(text.len())].matches('\n').count() + 1;
    let unknown = e
        .message()
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .and_then(|key| {
            let mut offset = 0;
            for line in text.split_inclusive('\n') {
                let trimmed = line.trim_start();
                if trimmed.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('=')) {
                    return Some(offset);
                }
                offset += line.len();
            }
            None
        });
    match (unknown, e.span()) {
        (Some(offset), _) => line_of(offset),
        (None, Some(span)) => line_of(span.start),
        (None, None) => 0,
    }
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

pub fn scenario_to_string(scenario: &Scenario) -> Result<String> {
    toml::to_string(scenario).map_err(|e| Error::invalid("scenario", e.to_string()))
}

/// `floor(clamp(v, 0, 1) * 255 + 0.5)`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Binary PGM (P5, maxval 255).
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Reads back a P5 image written by [`encode_pgm`].
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |why: &str| Error::invalid("pgm", why.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("only P5 with maxval 255 is supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let pixels = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated pixel data"))?;
    Ok((w, h, pixels.to_vec()))
}

/// Storage of every kinon quantized to 8 bits, in frame order.
pub fn frame_pixels(state: &NetworkState) -> Vec<u8> {
    state.storage().iter().map(|&v| quantize(v)).collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the storage field as a PGM. Rings and graphs give a one-row image.
pub fn write_frame(state: &NetworkState, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = state.topology().frame_dims();
    write_bytes(path.as_ref(), &encode_pgm(w, h, &frame_pixels(state)))
}

/// Accumulates one-row frames into a space-time diagram.
#[derive(Clone, Debug, Default)]
pub struct SpaceTime {
    width: usize,
    rows: Vec<u8>,
}

impl SpaceTime {
    pub fn push(&mut self, row: &[u8]) {
        if self.rows.is_empty() {
            self.width = row.len();
        }
        assert_eq!(row.len(), self.width, "space-time rows must share a width");
        self.rows.extend_from_slice(row);
    }

    pub fn height(&self) -> usize {
        self.rows.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height(), &self.rows)
    }
}

#[derive(Serialize, Deserialize)]
struct MetricsRow {
    step: u64,
    total: f64,
    internal: f64,
    external: f64,
    spatial_std: f64,
    spatial_entropy: f64,
    temporal_activity: f64,
}

pub const METRICS_HEADER: &str = "step,total,internal,external,spatial_std,spatial_entropy,temporal_activity";

/// CSV with [`METRICS_HEADER`]; floats use the shortest round-trip form.
pub fn write_metrics(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = MetricsWriter::new(file)?;
    for r in records {
        out.push(r)?;
    }
    out.finish().map_err(|e| Error::io(path, e))
}

/// Streams metrics rows as they are produced.
pub struct MetricsWriter<W: Write> {
    inner: W,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        writeln!(inner, "{METRICS_HEADER}").map_err(|e| Error::io("metrics", e))?;
        Ok(MetricsWriter { inner })
    }

    pub fn push(&mut self, r: &MetricsRecord) -> Result<()> {
        writeln!(
            self.inner,
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.step, r.total, r.internal, r.external, r.spatial_std, r.spatial_entropy, r.temporal_activity
        )
        .map_err(|e| Error::io("metrics", e))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(Error::invalid("metrics header", header.join(",")));
    }
    reader
        .deserialize::<MetricsRow>()
        .map(|row| {
            let r = row?;
            Ok(MetricsRecord {
                step: r.step,
                total: r.total,
                internal: r.internal,
                external: r.external,
                spatial_std: r.spatial_std,
                spatial_entropy: r.spatial_entropy,
                temporal_activity: r.temporal_activity,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "k,phi_mean,phi_last,temporal_activity,label";

/// Sweep table. Failed rows leave the numeric cells empty and put
/// `error: <message>` in the label column.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(SWEEP_HEADER.split(',')).expect("in-memory write");
    for row in rows {
        let k = format!("{:?}", row.k);
        let record = match &row.outcome {
            Ok(run) => vec![
                k,
                format!("{:?}", run.phi_mean),
                format!("{:?}", run.phi_last),
                format!("{:?}", run.label.temporal_activity),
                run.label.regime.to_string(),
            ],
            Err(msg) => vec![k, String::new(), String::new(), String::new(), format!("error: {msg}")],
        };
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn write_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), sweep_csv(rows).as_bytes())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::engine::seed_uniform;
    use crate::topology::{Neighborhood, Topology};

    const MINIMAL: &str = r#"
[topology]
kind = "ring"
n = 100

[initial]
kind = "uniform"
total = "auto"

[[maps]]
from_step = 0
map = { kind = "negative" }

[run]
steps = 10
"#;

    #[test]
    fn minimal_document() {
        let s = parse_scenario(MINIMAL).unwrap();
        let topo = s.topology.build().unwrap();
        assert_eq!(s.initial.resolved_total(&topo), Some(50.0));
        assert_eq!(s.run.frame_every, 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("n = 100", "n = 100\ncolour = \"red\"");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        assert!(matches!(err, Error::Syntax { line: 5, .. }), "{err:?}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = MINIMAL.replace("steps = 10", "steps = = 10");
        match parse_scenario(&text).unwrap_err() {
            Error::Syntax { line, .. } => assert_eq!(line, 15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_error_names_field() {
        let text = MINIMAL.replace("n = 100", "n = 2");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("topology.n"), "{err}");
        let text = MINIMAL.replace("{ kind = \"negative\" }", "{ kind = \"spline\", order = 1, points = [[0.5, 0.0], [0.2, 1.0]] }");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("maps[0].points[1]"), "{err}");
    }

    #[test]
    fn serialized_scenario_parses_back() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(parse_scenario(&scenario_to_string(&s).unwrap()).unwrap(), s);
        let text = MINIMAL.replace("total = \"auto\"", "total = \"auto\"\nseed = 9223372036854775807");
        assert!(parse_scenario(&text).is_ok());
        let mut big = s.clone();
        big.initial.set_seed(u64::MAX);
        assert!(big.validate().unwrap_err().to_string().contains("initial.seed"));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(7.0), 255);
        assert_eq!(quantize(127.5 / 255.0), 128);
        assert_eq!(quantize(127.4999 / 255.0), 127);
        assert_eq!(quantize(128.4999 / 255.0), 128);
    }

    #[test]
    fn uniform_frame_is_mid_grey() {
        let dir = tempfile::tempdir().unwrap();
        let state = seed_uniform(Arc::new(Topology::torus(4, 3, Neighborhood::VonNeumann).unwrap()), 6.0);
        let path = dir.path().join("f.pgm");
        write_frame(&state, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        let (w, h, px) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (4, 3));
        assert!(px.iter().all(|&p| p == 128));
        let again = dir.path().join("g.pgm");
        write_frame(&state, &again).unwrap();
        assert_eq!(bytes, fs::read(&again).unwrap());
    }

    #[test]
    fn unwritable_frame_path() {
        let state = seed_uniform(Arc::new(Topology::ring(4).unwrap()), 2.0);
        assert!(write_frame(&state, "/nonexistent-dir/x/frame.pgm").is_err());
    }

    #[test]
    fn metrics_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        write_metrics(&[], &empty).unwrap();
        assert_eq!(fs::read_to_string(&empty).unwrap(), format!("{METRICS_HEADER}\n"));
        assert!(read_metrics(&empty).unwrap().is_empty());

        let record = MetricsRecord {
            step: 3,
            total: 0.1 + 0.2,
            internal: 1.0 / 3.0,
            external: 2.0 / 3.0,
            spatial_std: 1e-300,
            spatial_entropy: 0.12345678901234568,
            temporal_activity: 0.0,
        };
        let one = dir.path().join("one.csv");
        write_metrics(std::slice::from_ref(&record), &one).unwrap();
        assert_eq!(fs::read_to_string(&one).unwrap().lines().count(), 2);
        assert_eq!(read_metrics(&one).unwrap(), vec![record]);
    }
}
