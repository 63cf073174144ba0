use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::experiment::{Method, MethodResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Nrmse,
    Maae,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Nrmse => "nRMSE",
            Metric::Maae => "MAAE",
        }
    }

    /// The metric value stored in a result.
    pub fn of(self, r: &MethodResult) -> f64 {
        match self {
            Metric::Nrmse => r.nrmse,
            Metric::Maae => r.maae,
        }
    }
}

/// Row labels in presentation order.
pub const ROW_ORDER: [&str; 11] = [
    "Kalman", "NW", "DKF-NW", "GP", "DKF-GP", "NN", "DKF-NN", "LSTM", "DKF-LSTM", "EKF", "UKF",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    /// Seed-averaged metric for the baseline row, unrounded percent change
    /// against the baseline otherwise. `None` where every seed failed.
    pub cells: Vec<Option<f64>>,
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub metric: Metric,
    pub baseline: String,
    pub trials: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// `round(100 (m / k - 1))`.
pub fn percent_change(method: f64, baseline: f64) -> i64 {
    (100.0 * (method / baseline - 1.0)).round() as i64
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Build a table: metrics are averaged over seeds per (trial, row), then
/// turned into percent change against the baseline row of the same trial.
/// The Average column holds the mean baseline metric and the mean of the
/// per-trial percent changes.
pub fn tabulate(results: &[MethodResult], metric: Metric, baseline: &str) -> Result<ResultTable> {
    let mut trials: Vec<String> = Vec::new();
    for r in results {
        if !trials.contains(&r.trial) {
            trials.push(r.trial.clone());
        }
    }
    let mut per_cell: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in results {
        let v = metric.of(r);
        let entry = per_cell.entry((r.label(), r.trial.clone())).or_default();
        if r.is_ok() && v.is_finite() {
            entry.push(v);
        }
    }
    let seed_mean = |label: &str, trial: &str| -> Option<f64> {
        per_cell
            .get(&(label.to_string(), trial.to_string()))
            .and_then(|v| mean(v.iter().copied()))
    };

    let mut base_cells = Vec::with_capacity(trials.len());
    for t in &trials {
        match seed_mean(baseline, t) {
            Some(v) => base_cells.push(v),
            None => {
                return Err(Error::Config(format!(
                    "baseline {baseline:?} has no usable {} for trial {t:?}",
                    metric.name()
                )))
            }
        }
    }

    let present: Vec<String> = {
        let mut labels: Vec<String> = per_cell.keys().map(|(l, _)| l.clone()).collect();
        labels.dedup();
        let rank = |l: &String| ROW_ORDER.iter().position(|r| r == l).unwrap_or(ROW_ORDER.len());
        labels.sort_by(|a, b| rank(a).cmp(&rank(b)).then(a.cmp(b)));
        labels
    };

    let mut rows = vec![TableRow {
        label: baseline.to_string(),
        cells: base_cells.iter().copied().map(Some).collect(),
        average: mean(base_cells.iter().copied()),
    }];
    for label in present.iter().filter(|l| *l != baseline) {
        let cells: Vec<Option<f64>> = trials
            .iter()
            .zip(&base_cells)
            .map(|(t, &k)| seed_mean(label, t).map(|m| 100.0 * (m / k - 1.0)))
            .collect();
        let average = mean(cells.iter().flatten().copied());
        rows.push(TableRow {
            label: label.clone(),
            cells,
            average,
        });
    }
    Ok(ResultTable {
        metric,
        baseline: baseline.to_string(),
        trials,
        rows,
    })
}

impl ResultTable {
    fn format_cell(&self, row: usize, v: Option<f64>) -> String {
        match v {
            None => "n/a".into(),
            Some(v) if row == 0 => format!("{v:.3}"),
            Some(v) => format!("{}%", v.round() as i64),
        }
    }

    fn grid(&self) -> Vec<Vec<String>> {
        let mut out = Vec::with_capacity(self.rows.len() + 1);
        let mut header = vec![self.metric.name().to_string()];
        header.extend(self.trials.iter().cloned());
        header.push("Average".into());
        out.push(header);
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.label.clone()];
            line.extend(row.cells.iter().map(|&c| self.format_cell(i, c)));
            line.push(self.format_cell(i, row.average));
            out.push(line);
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for line in self.grid() {
            w.write_record(&line).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Aligned plain-text rendering.
    pub fn render(&self) -> String {
        let grid = self.grid();
        let cols = grid[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for (i, line) in grid.iter().enumerate() {
            for (c, cell) in line.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[c]);
                }
            }
            s.push('\n');
            if i == 0 || i == 1 {
                s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
                s.push('\n');
            }
        }
        s
    }

    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Header of the per-cell results file.
pub const RESULTS_HEADER: [&str; 8] = [
    "trial",
    "seed",
    "method",
    "dkf_applied",
    "nrmse",
    "maae",
    "runtime_s",
    "status",
];

/// Serialize results; runtimes are written as 0 unless `with_runtime`, so
/// repeated runs produce identical files.
pub fn results_to_csv(results: &[MethodResult], with_runtime: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(RESULTS_HEADER).map_err(io)?;
    for r in results {
        let num = |v: f64| if v.is_finite() { format!("{v:.6}") } else { "nan".into() };
        w.write_record([
            r.trial.clone(),
            r.seed.to_string(),
            r.label(),
            r.dkf_applied.to_string(),
            num(r.nrmse),
            num(r.maae),
            if with_runtime {
                format!("{:.3}", r.runtime_s)
            } else {
                "0".into()
            },
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Parse a results file written by [`results_to_csv`].
pub fn results_from_csv(text: &str) -> Result<Vec<MethodResult>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| Error::Io(e.to_string()))?.clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let bad = |msg: String| Error::Parse { line, msg };
        let num = |s: &str| -> Result<f64> {
            if s == "nan" {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad(format!("not a number: {s:?}")))
            }
        };
        let dkf_applied: bool = rec[3]
            .parse()
            .map_err(|_| bad(format!("not a boolean: {:?}", &rec[3])))?;
        let method: Method = rec[2].parse()?;
        out.push(MethodResult {
            trial: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad(format!("bad seed {:?}", &rec[1])))?,
            method,
            dkf_applied,
            nrmse: num(&rec[4])?,
            maae: num(&rec[5])?,
            runtime_s: num(&rec[6])?,
            status: rec[7].to_string(),
            maae_excluded: 0,
            pd_fixes: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(trial: &str, seed: u64, method: Method, dkf: bool, nrmse: f64, maae: f64) -> MethodResult {
        MethodResult {
            trial: trial.into(),
            seed,
            method,
            dkf_applied: dkf,
            nrmse,
            maae,
            runtime_s: 0.0,
            status: "ok".into(),
            maae_excluded: 0,
            pd_fixes: 0,
        }
    }

    #[test]
    fn percent_examples() {
        assert_eq!(percent_change(0.660, 0.805), -18);
        assert_eq!(percent_change(0.786, 0.948), -17);
        assert_eq!(percent_change(0.805, 0.805), 0);
    }

    #[test]
    fn identical_method_is_zero_percent() {
        let rs = vec![
            result("T1", 0, Method::Kalman, false, 0.8, 0.9),
            result("T1", 0, Method::Ekf, false, 0.8, 0.9),
        ];
        let t = tabulate(&rs, Metric::Nrmse, "Kalman").unwrap();
        assert_eq!(t.row("EKF").unwrap().cells, vec![Some(0.0)]);
        assert!(t.render().contains("0%"));
    }

    #[test]
    fn seed_average_then_percent() {
        let rs = vec![
            result("T1", 0, Method::Kalman, false, 0.800, 1.0),
            result("T1", 1, Method::Kalman, false, 0.810, 1.0),
            result("T1", 0, Method::Nw, true, 0.650, 1.0),
            result("T1", 1, Method::Nw, true, 0.670, 1.0),
        ];
        let t = tabulate(&rs, Metric::Nrmse, "Kalman").unwrap();
        assert!((t.rows[0].cells[0].unwrap() - 0.805).abs() < 1e-12);
        assert_eq!(t.row("DKF-NW").unwrap().cells[0].unwrap().round() as i64, -18);
    }

    #[test]
    fn layout_and_average_column() {
        let mut rs = Vec::new();
        for (trial, k, m) in [("Trial 1", 1.0, 0.8), ("Trial 2", 0.5, 0.6)] {
            rs.push(result(trial, 0, Method::Kalman, false, k, k));
            for method in [Method::Nw, Method::Gp, Method::Nn, Method::Lstm] {
                rs.push(result(trial, 0, method, false, m, m));
                rs.push(result(trial, 0, method, true, m, m));
            }
            rs.push(result(trial, 0, Method::Ekf, false, k, k));
            rs.push(result(trial, 0, Method::Ukf, false, k, k));
        }
        let t = tabulate(&rs, Metric::Maae, "Kalman").unwrap();
        let labels: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ROW_ORDER.to_vec());
        assert_eq!(t.trials, vec!["Trial 1", "Trial 2"]);
        // (-20% + 20%) / 2
        assert_eq!(t.row("NW").unwrap().average, Some(0.0));
        assert!((t.rows[0].average.unwrap() - 0.75).abs() < 1e-12);
        let csv = t.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), "MAAE,Trial 1,Trial 2,Average");
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn missing_baseline_is_a_config_error() {
        let rs = vec![result("T1", 0, Method::Nw, true, 0.5, 0.5)];
        assert!(matches!(tabulate(&rs, Metric::Nrmse, "Kalman"), Err(Error::Config(_))));
    }

    #[test]
    fn failed_cells_show_as_missing() {
        let mut bad = result("T1", 0, Method::Gp, true, f64::NAN, f64::NAN);
        bad.status = "fit".into();
        let rs = vec![result("T1", 0, Method::Kalman, false, 0.8, 0.9), bad];
        let t = tabulate(&rs, Metric::Nrmse, "Kalman").unwrap();
        assert_eq!(t.row("DKF-GP").unwrap().cells, vec![None]);
        assert!(t.render().contains("n/a"));
    }

    #[test]
    fn results_csv_round_trip() {
        let mut rs = vec![
            result("T1", 3, Method::Kalman, false, 0.8, 0.9),
            result("T1", 3, Method::Nw, true, 0.61234567, 0.7),
        ];
        rs[1].status = "ok".into();
        let text = results_to_csv(&rs, false).unwrap();
        assert!(text.starts_with("trial,seed,method,dkf_applied,nrmse,maae,runtime_s,status\n"));
        assert!(text.contains("T1,3,DKF-NW,true,0.612346,0.700000,0,ok"));
        let back = results_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].method, Method::Nw);
        assert!(back[1].dkf_applied);
        assert!((back[1].nrmse - 0.612346).abs() < 1e-12);
    }
}
