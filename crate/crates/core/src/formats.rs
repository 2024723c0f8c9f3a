//! Newline-delimited JSON readers and writers for traces, subject logs,
//! observation files and context files.
//!
//! Every format is one JSON object per line. Trace files start with a header
//! record carrying the generator config and seed:
//!
//! ```text
//! {"header":{"config":{"kind":"biased-die",...},"seed":7}}
//! {"t":1,"obs":3,"truth":{"probs":[0.5,0.1,...]}}
//! {"t":2,"obs":0,"truth":{"probs":[0.5,0.1,...]}}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::SubjectTrace;
use crate::distribution::{Normal, Observation, Predictive};
use crate::environments::{EnvConfig, EnvTrace, RecallConfig, RecallEvent};
use crate::error::{Error, Result};
use crate::pmp::{ContextHistory, ContextItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum TruthRecord {
    Categorical { probs: Vec<f64> },
    Gaussian { mean: f64, var: f64 },
}

impl From<&Predictive> for TruthRecord {
    fn from(p: &Predictive) -> Self {
        match p {
            Predictive::Categorical(probs) => TruthRecord::Categorical { probs: probs.clone() },
            Predictive::Gaussian(n) => TruthRecord::Gaussian { mean: n.mean, var: n.var },
        }
    }
}

impl From<TruthRecord> for Predictive {
    fn from(r: TruthRecord) -> Self {
        match r {
            TruthRecord::Categorical { probs } => Predictive::Categorical(probs),
            TruthRecord::Gaussian { mean, var } => Predictive::Gaussian(Normal { mean, var }),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceHeader {
    config: EnvConfig,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine<H> {
    header: H,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceRecord {
    t: usize,
    obs: Observation,
    truth: TruthRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecallHeader {
    recall: RecallConfig,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SubjectRecord {
    Categorical { t: usize, dist: Vec<f64> },
    Gaussian { t: usize, mean: f64, var: f64 },
}

#[derive(Debug, Deserialize)]
struct ObservationRecord {
    t: usize,
    obs: Observation,
}

#[derive(Debug, Serialize)]
struct ObservationOut {
    t: usize,
    obs: Observation,
}

fn to_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::invalid(format!("serialization failed: {e}")))
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    let line = to_line(value)?;
    writeln!(w, "{line}").map_err(|e| Error::io("<writer>", e))
}

/// Non-empty lines with their 1-based line numbers.
fn lines<R: Read>(reader: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse<T: DeserializeOwned>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

fn is_header(line: &str) -> bool {
    serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(line)
        .map(|m| m.contains_key("header"))
        .unwrap_or(false)
}

fn check_step(line_no: usize, expected: usize, t: usize) -> Result<()> {
    if t != expected {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected t = {expected}, found t = {t}"),
        });
    }
    Ok(())
}

pub fn write_trace<W: Write>(trace: &EnvTrace, mut w: W) -> Result<()> {
    write_line(
        &mut w,
        &HeaderLine {
            header: TraceHeader {
                config: trace.config.clone(),
                seed: trace.seed,
            },
        },
    )?;
    for (i, (obs, truth)) in trace.observations.iter().zip(&trace.truths).enumerate() {
        write_line(
            &mut w,
            &TraceRecord {
                t: i + 1,
                obs: *obs,
                truth: truth.into(),
            },
        )?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn read_trace<R: Read>(reader: R) -> Result<EnvTrace> {
    let lines = lines(reader)?;
    let Some((first_no, first)) = lines.first() else {
        return Err(Error::Parse {
            line: 1,
            message: "trace file is empty".into(),
        });
    };
    let header: HeaderLine<TraceHeader> = parse(*first_no, first)?;
    let family = header.header.config.family();
    let mut observations = Vec::with_capacity(lines.len() - 1);
    let mut truths = Vec::with_capacity(lines.len() - 1);
    for (expected, (no, line)) in lines[1..].iter().enumerate() {
        let rec: TraceRecord = parse(*no, line)?;
        check_step(*no, expected + 1, rec.t)?;
        let obs = rec.obs.coerce(family).map_err(|e| Error::Parse {
            line: *no,
            message: e.to_string(),
        })?;
        observations.push(obs);
        truths.push(rec.truth.into());
    }
    let trace = EnvTrace {
        config: header.header.config,
        seed: header.header.seed,
        observations,
        truths,
    };
    trace.validate()?;
    Ok(trace)
}

pub fn write_recall_events<W: Write>(config: &RecallConfig, seed: u64, events: &[RecallEvent], mut w: W) -> Result<()> {
    write_line(
        &mut w,
        &HeaderLine {
            header: RecallHeader { recall: *config, seed },
        },
    )?;
    for e in events {
        write_line(&mut w, e)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn read_recall_events<R: Read>(reader: R) -> Result<(RecallConfig, u64, Vec<RecallEvent>)> {
    let lines = lines(reader)?;
    let Some((first_no, first)) = lines.first() else {
        return Err(Error::Parse {
            line: 1,
            message: "recall file is empty".into(),
        });
    };
    let header: HeaderLine<RecallHeader> = parse(*first_no, first)?;
    let events = lines[1..]
        .iter()
        .map(|(no, line)| parse(*no, line))
        .collect::<Result<Vec<RecallEvent>>>()?;
    Ok((header.header.recall, header.header.seed, events))
}

/// Read a subject log; `t` must run 1, 2, ... and all records share one family.
pub fn read_subject<R: Read>(reader: R) -> Result<SubjectTrace> {
    let mut cats = Vec::new();
    let mut gauss = Vec::new();
    for (expected, (no, line)) in lines(reader)?.iter().enumerate() {
        match parse::<SubjectRecord>(*no, line)? {
            SubjectRecord::Categorical { t, dist } => {
                check_step(*no, expected + 1, t)?;
                cats.push(dist);
            }
            SubjectRecord::Gaussian { t, mean, var } => {
                check_step(*no, expected + 1, t)?;
                gauss.push((mean, var));
            }
        }
        if !cats.is_empty() && !gauss.is_empty() {
            return Err(Error::Parse {
                line: *no,
                message: "subject file mixes categorical and gaussian records".into(),
            });
        }
    }
    if !gauss.is_empty() {
        SubjectTrace::gaussian(gauss)
    } else {
        SubjectTrace::categorical(cats)
    }
}

pub fn write_subject<W: Write>(subject: &SubjectTrace, mut w: W) -> Result<()> {
    match subject {
        SubjectTrace::Categorical(d) => {
            for (i, dist) in d.iter().enumerate() {
                write_line(
                    &mut w,
                    &SubjectRecord::Categorical {
                        t: i + 1,
                        dist: dist.clone(),
                    },
                )?;
            }
        }
        SubjectTrace::Gaussian(d) => {
            for (i, n) in d.iter().enumerate() {
                write_line(
                    &mut w,
                    &SubjectRecord::Gaussian {
                        t: i + 1,
                        mean: n.mean,
                        var: n.var,
                    },
                )?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

/// Read `{"t", "obs"}` records. Header lines and extra fields (such as the
/// `truth` of a trace file) are ignored, so a trace file is also a valid
/// observation file.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (no, line) in lines(reader)? {
        if is_header(&line) {
            continue;
        }
        let rec: ObservationRecord = parse(no, &line)?;
        check_step(no, out.len() + 1, rec.t)?;
        out.push(rec.obs);
    }
    Ok(out)
}

pub fn write_observations<W: Write>(observations: &[Observation], mut w: W) -> Result<()> {
    for (i, obs) in observations.iter().enumerate() {
        write_line(&mut w, &ObservationOut { t: i + 1, obs: *obs })?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn read_context<R: Read>(reader: R) -> Result<ContextHistory> {
    let items = lines(reader)?
        .iter()
        .map(|(no, line)| parse::<ContextItem>(*no, line))
        .collect::<Result<Vec<_>>>()?;
    ContextHistory::from_items(items)
}

pub fn write_context<'a, W: Write>(items: impl IntoIterator<Item = &'a ContextItem>, mut w: W) -> Result<()> {
    for item in items {
        write_line(&mut w, item)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{generate, EnvConfig};

    #[test]
    fn trace_bytes_round_trip() {
        for cfg in [EnvConfig::default_biased_die(), EnvConfig::default_shifting_gaussian()] {
            let trace = generate(&cfg, 42).unwrap();
            let mut a = Vec::new();
            write_trace(&trace, &mut a).unwrap();
            let back = read_trace(a.as_slice()).unwrap();
            assert_eq!(back, trace);
            let mut b = Vec::new();
            write_trace(&back, &mut b).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trace_file_doubles_as_observation_file() {
        let trace = generate(&EnvConfig::default_biased_die(), 1).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        assert_eq!(read_observations(buf.as_slice()).unwrap(), trace.observations);
    }

    #[test]
    fn subject_records() {
        let src = "{\"t\":1,\"dist\":[0.25,0.75]}\n{\"t\":2,\"dist\":[1.0,0.0]}\n";
        let s = read_subject(src.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        let src = "{\"t\":1,\"mean\":0.5,\"var\":2.0}\n";
        assert_eq!(
            read_subject(src.as_bytes()).unwrap(),
            SubjectTrace::Gaussian(vec![Normal { mean: 0.5, var: 2.0 }])
        );
        let mixed = "{\"t\":1,\"mean\":0.5,\"var\":2.0}\n{\"t\":2,\"dist\":[0.5,0.5]}\n";
        assert!(read_subject(mixed.as_bytes()).is_err());
        let gap = "{\"t\":1,\"dist\":[0.5,0.5]}\n{\"t\":3,\"dist\":[0.5,0.5]}\n";
        assert!(matches!(read_subject(gap.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn context_records() {
        let src = "{\"index\":1,\"text\":\"a\"}\n{\"index\":2,\"text\":\"b\"}\n";
        let h = read_context(src.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_context(h.items(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), src);
    }
}
