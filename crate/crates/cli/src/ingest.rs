//! CSV formats for raw and processed data.
//!
//! * spikes: header `neuron_id,time_s`, one row per spike, sorted by neuron
//!   then time. The neuron count is one more than the largest id.
//! * velocities: header `time_s,vx,vy` on a uniform grid.
//! * processed trials: a `# dkf-bench processed v1, trial=<id>, bin_ms=<ms>`
//!   line, then `z1,z2,x1,...,xk` with one row per sample.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use dkf_core::linalg::Mat;
use dkf_core::preprocess::{ProcessedTrial, SpikeEvents, VelocitySeries};
use dkf_core::Error;

use crate::error::{io_err, CliError, Result};

const PROCESSED_MAGIC: &str = "# dkf-bench processed v1";

pub fn spikes_path(dir: &Path, trial: u32) -> PathBuf {
    dir.join(format!("trial{trial}_spikes.csv"))
}

pub fn velocity_path(dir: &Path, trial: u32) -> PathBuf {
    dir.join(format!("trial{trial}_velocity.csv"))
}

pub fn processed_path(dir: &Path, trial: u32) -> PathBuf {
    dir.join(format!("trial{trial}_processed.csv"))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<T, Error> {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    let raw = record.get(i).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {name} '{raw}'"),
    })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> std::result::Result<(), Error> {
    let header = reader.headers().map_err(csv_error)?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header '{}', got '{}'", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn reader(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

pub fn parse_spikes(input: impl Read) -> std::result::Result<SpikeEvents, Error> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["neuron_id", "time_s"])?;
    let mut spikes: Vec<Vec<f64>> = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let neuron: usize = field(&record, 0, "neuron id")?;
        let t: f64 = field(&record, 1, "spike time")?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Validation(format!(
                "line {line}: spike time {t} must be finite and >= 0"
            )));
        }
        if let Some((n0, t0)) = last {
            if neuron < n0 || (neuron == n0 && t < t0) {
                return Err(Error::Validation(format!(
                    "line {line}: spikes must be sorted by neuron then time ({n0},{t0} before {neuron},{t})"
                )));
            }
        }
        if spikes.len() <= neuron {
            spikes.resize(neuron + 1, Vec::new());
        }
        spikes[neuron].push(t);
        last = Some((neuron, t));
    }
    if spikes.is_empty() {
        return Err(Error::Validation("spike file has no rows".into()));
    }
    SpikeEvents::new(spikes)
}

pub fn parse_velocity(input: impl Read) -> std::result::Result<VelocitySeries, Error> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["time_s", "vx", "vy"])?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        times.push(field(&record, 0, "time")?);
        values.push([field(&record, 1, "vx")?, field(&record, 2, "vy")?]);
    }
    VelocitySeries::new(times, values)
}

pub fn spikes_to_csv(events: &SpikeEvents) -> String {
    let mut out = String::from("neuron_id,time_s\n");
    for (n, times) in events.iter().enumerate() {
        for t in times {
            out.push_str(&format!("{n},{t}\n"));
        }
    }
    out
}

pub fn velocity_to_csv(v: &VelocitySeries) -> String {
    let mut out = String::from("time_s,vx,vy\n");
    for (t, [x, y]) in v.times().iter().zip(v.values()) {
        out.push_str(&format!("{t},{x},{y}\n"));
    }
    out
}

pub fn processed_to_csv(trial: &ProcessedTrial) -> String {
    let k = trial.observations.ncols();
    let mut out = format!(
        "{PROCESSED_MAGIC}, trial={}, bin_ms={}\n",
        trial.id,
        (trial.bin_width * 1000.0).round() as u64
    );
    let mut header = vec!["z1".to_string(), "z2".to_string()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..trial.len() {
        let row: Vec<String> = trial
            .latents
            .row(i)
            .iter()
            .chain(trial.observations.row(i).iter())
            .map(|v| v.to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_processed(text: &str) -> std::result::Result<ProcessedTrial, Error> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let meta = first.strip_prefix(PROCESSED_MAGIC).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("expected '{PROCESSED_MAGIC}, trial=..., bin_ms=...'"),
    })?;
    let mut id = None;
    let mut bin_ms = None;
    for part in meta.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('=') {
            Some(("trial", v)) => id = Some(v.to_string()),
            Some(("bin_ms", v)) => bin_ms = v.parse::<u64>().ok(),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("unexpected metadata '{part}'"),
                })
            }
        }
    }
    let (id, bin_ms) = match (id, bin_ms) {
        (Some(i), Some(b)) => (i, b),
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "metadata needs trial= and bin_ms=".into(),
            })
        }
    };
    let mut rdr = reader(rest.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    let cols = header.len();
    if cols < 3 || &header[0] != "z1" || &header[1] != "z2" {
        return Err(Error::Parse {
            line: 2,
            msg: "expected header z1,z2,x1,...".into(),
        });
    }
    let mut data: Vec<f64> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let mut err = csv_error(e);
            if let Error::Parse { line, .. } = &mut err {
                *line += 1;
            }
            err
        })?;
        for j in 0..cols {
            data.push(field(&record, j, "value").map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse { line: line + 1, msg },
                other => other,
            })?);
        }
    }
    let rows = data.len() / cols;
    let all = Mat::from_row_slice(rows, cols, &data);
    ProcessedTrial::new(
        id,
        all.columns(2, cols - 2).into_owned(),
        all.columns(0, 2).into_owned(),
        bin_ms as f64 / 1000.0,
    )
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| io_err(path, e))
}

pub fn read_spikes(path: &Path) -> Result<SpikeEvents> {
    parse_spikes(open(path)?).map_err(|e| CliError::in_file(path, e))
}

pub fn read_velocity(path: &Path) -> Result<VelocitySeries> {
    parse_velocity(open(path)?).map_err(|e| CliError::in_file(path, e))
}

pub fn read_processed(path: &Path) -> Result<ProcessedTrial> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_processed(&text).map_err(|e| CliError::in_file(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_spike_file() {
        let ev = parse_spikes("neuron_id,time_s\n0,0.05\n0,0.15\n".as_bytes()).unwrap();
        assert_eq!(ev.neuron_count(), 1);
        assert_eq!(ev.neuron(0), &[0.05, 0.15]);
    }

    #[test]
    fn spike_errors_carry_lines() {
        let e = parse_spikes("neuron_id,time_s\n0,0.05\n0,abc\n".as_bytes()).unwrap_err();
        assert_eq!(
            e,
            Error::Parse {
                line: 3,
                msg: "bad spike time 'abc'".into()
            }
        );
        let e = parse_spikes("neuron_id,time_s\n0,0.05\n0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_spikes("neuron,time\n0,0.05\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn unsorted_spikes_are_rejected() {
        let e = parse_spikes("neuron_id,time_s\n0,0.2\n0,0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Validation(ref m) if m.contains("line 3")), "{e:?}");
        let e = parse_spikes("neuron_id,time_s\n1,0.2\n0,0.3\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
        let e = parse_spikes("neuron_id,time_s\n0,-1\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Validation(_)));
    }

    #[test]
    fn irregular_velocity_grid() {
        let text = "time_s,vx,vy\n0,1,1\n0.1,1,1\n0.3,1,1\n0.4,1,1\n";
        assert!(matches!(parse_velocity(text.as_bytes()), Err(Error::Validation(_))));
        let ok = parse_velocity("time_s,vx,vy\n0,1,2\n0.1,3,4\n".as_bytes()).unwrap();
        assert_eq!(ok.values(), &[[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn raw_round_trip() {
        let ev = SpikeEvents::new(vec![vec![0.1, 0.1, 2.5], vec![], vec![1.0 / 3.0]]).unwrap();
        assert_eq!(parse_spikes(spikes_to_csv(&ev).as_bytes()).unwrap(), ev);
        let v = VelocitySeries::uniform(0.005, 0.01, vec![[0.1, -0.2], [1.0 / 7.0, 2.0], [0.0, 0.0]]).unwrap();
        assert_eq!(parse_velocity(velocity_to_csv(&v).as_bytes()).unwrap(), v);
    }

    #[test]
    fn processed_round_trip() {
        let obs = Mat::from_fn(4, 3, |i, j| (i as f64 - 1.5) / (j as f64 + 3.0));
        let lat = Mat::from_fn(4, 2, |i, j| i as f64 * 0.1 - j as f64 / 3.0);
        let t = ProcessedTrial::new("T2", obs, lat, 0.1).unwrap();
        let text = processed_to_csv(&t);
        assert!(text.starts_with("# dkf-bench processed v1, trial=T2, bin_ms=100\nz1,z2,x1,x2,x3\n"));
        assert_eq!(parse_processed(&text).unwrap(), t);
        let bad = text.replacen("0.", "x.", 1);
        assert!(matches!(parse_processed(&bad), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_processed("z1,z2\n"), Err(Error::Parse { line: 1, .. })));
    }
}
