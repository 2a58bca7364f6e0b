use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::fmt_f64;

pub const RESULTS_HEADER: &str =
    "kind,condition,strategy,n_tasks,n_stations,n_times,replicate,test_nll,test_mae,oracle_nll,status";

/// One evaluation outcome. Metrics are NaN when `status` is not `ok`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub kind: String,
    pub condition: String,
    /// Adaptation strategy or baseline name.
    pub strategy: String,
    pub n_tasks: Option<usize>,
    pub n_stations: Option<usize>,
    pub n_times: Option<usize>,
    pub replicate: usize,
    pub test_nll: f64,
    pub test_mae: f64,
    pub oracle_nll: Option<f64>,
    pub status: String,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn metric(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        fmt_f64(x)
    }
}

pub fn format_results_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            r.condition,
            r.strategy,
            opt_usize(r.n_tasks),
            opt_usize(r.n_stations),
            opt_usize(r.n_times),
            r.replicate,
            metric(r.test_nll),
            metric(r.test_mae),
            r.oracle_nll.map(metric).unwrap_or_default(),
            r.status
        );
    }
    out
}

pub fn write_results_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    std::fs::write(path, format_results_csv(records))?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_results_csv(&text).map_err(|reason| Error::format(path, reason))
}

pub fn parse_results_csv(text: &str) -> std::result::Result<Vec<ResultRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == RESULTS_HEADER => {}
        other => return Err(format!("expected header {RESULTS_HEADER:?}, found {other:?}")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(format!("line {}: expected 11 fields, found {}", i + 2, f.len()));
        }
        let bad = |what: &str| format!("line {}: bad {what}", i + 2);
        let opt_u = |s: &str, what: &str| -> std::result::Result<Option<usize>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        let num = |s: &str, what: &str| -> std::result::Result<f64, String> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad(what))
            }
        };
        out.push(ResultRecord {
            kind: f[0].to_string(),
            condition: f[1].to_string(),
            strategy: f[2].to_string(),
            n_tasks: opt_u(f[3], "n_tasks")?,
            n_stations: opt_u(f[4], "n_stations")?,
            n_times: opt_u(f[5], "n_times")?,
            replicate: f[6].parse().map_err(|_| bad("replicate"))?,
            test_nll: num(f[7], "test_nll")?,
            test_mae: num(f[8], "test_mae")?,
            oracle_nll: if f[9].is_empty() { None } else { Some(num(f[9], "oracle_nll")?) },
            status: f[10].to_string(),
        });
    }
    Ok(out)
}

/// Records sharing everything but the replicate index.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub kind: String,
    pub condition: String,
    pub strategy: String,
    pub n_tasks: Option<usize>,
    pub n_stations: Option<usize>,
    pub n_times: Option<usize>,
}

impl GroupKey {
    pub fn of(r: &ResultRecord) -> Self {
        GroupKey {
            kind: r.kind.clone(),
            condition: r.condition.clone(),
            strategy: r.strategy.clone(),
            n_tasks: r.n_tasks,
            n_stations: r.n_stations,
            n_times: r.n_times,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    TestNll,
    TestMae,
}

/// Mean with a normal-approximation 95% interval; the interval is absent
/// for a single replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub key: GroupKey,
    pub n: usize,
    pub mean: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl Aggregate {
    pub fn half_width(&self) -> Option<f64> {
        self.ci_high.map(|h| h - self.mean)
    }
}

/// `mean ± 1.96·s/√n` with `s` the sample standard deviation.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(1.96 * var.sqrt() / (n as f64).sqrt()))
}

/// Groups successful records by [`GroupKey`] and summarises `metric`.
pub fn aggregate_ci(records: &[ResultRecord], metric: Metric) -> Vec<Aggregate> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let v = match metric {
            Metric::TestNll => r.test_nll,
            Metric::TestMae => r.test_mae,
        };
        groups.entry(GroupKey::of(r)).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|(key, values)| {
            let (mean, hw) = mean_ci(&values);
            Aggregate {
                key,
                n: values.len(),
                mean,
                ci_low: hw.map(|h| mean - h),
                ci_high: hw.map(|h| mean + h),
            }
        })
        .collect()
}

/// Root-sum-square of two interval half-widths.
pub fn pooled_half_width(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(strategy: &str, replicate: usize, nll: f64) -> ResultRecord {
        ResultRecord {
            kind: "shrink_l".into(),
            condition: "l=0.05 noise=0.05".into(),
            strategy: strategy.into(),
            n_tasks: Some(16),
            n_stations: None,
            n_times: None,
            replicate,
            test_nll: nll,
            test_mae: 0.5,
            oracle_nll: Some(-0.1),
            status: "ok".into(),
        }
    }

    #[test]
    fn ci_examples() {
        assert_eq!(mean_ci(&[1.0, 1.0, 1.0]), (1.0, Some(0.0)));
        let (m, hw) = mean_ci(&[0.0, 2.0]);
        assert_eq!(m, 1.0);
        assert!((hw.unwrap() - 1.96).abs() < 1e-12);
        assert_eq!(mean_ci(&[3.0]), (3.0, None));
    }

    #[test]
    fn groups_never_mix_strategies() {
        let records = vec![rec("global", 0, 1.0), rec("film", 0, 5.0), rec("global", 1, 3.0)];
        let agg = aggregate_ci(&records, Metric::TestNll);
        assert_eq!(agg.len(), 2);
        let g = agg.iter().find(|a| a.key.strategy == "global").unwrap();
        assert_eq!((g.n, g.mean), (2, 2.0));
        let f = agg.iter().find(|a| a.key.strategy == "film").unwrap();
        assert_eq!((f.n, f.mean, f.ci_low), (1, 5.0, None));
    }

    #[test]
    fn csv_round_trip_with_failures() {
        let mut failed = rec("film", 2, f64::NAN);
        failed.test_mae = f64::NAN;
        failed.status = "failed".into();
        let records = vec![rec("global", 0, -0.25), failed];
        let text = format_results_csv(&records);
        assert!(text.starts_with(RESULTS_HEADER));
        let back = parse_results_csv(&text).unwrap();
        assert_eq!(back[0], records[0]);
        assert!(back[1].test_nll.is_nan() && back[1].status == "failed");
        assert!(parse_results_csv("a,b\n").is_err());
    }
}
