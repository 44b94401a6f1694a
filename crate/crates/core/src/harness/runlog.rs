//! Run logs: a `# key = value` header followed by one CSV row per
//! (epoch, task).

use std::fs;
use std::path::Path;

use crate::analysis::TrajectoryRecord;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 12] = [
    "run_id", "method", "seed", "epoch", "task_id", "train_loss", "val_metric", "test_metric", "sharpness",
    "fim_trace", "cov_trace", "grad_sim",
];

pub const STATUS_OK: &str = "ok";
pub const STATUS_ABORTED: &str = "aborted";

/// 17 significant digits; round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    /// Ordered header entries.
    pub header: Vec<(String, String)>,
    pub records: Vec<TrajectoryRecord>,
}

impl RunLog {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_header(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn push(&mut self, record: TrajectoryRecord) {
        self.records.push(record);
    }

    pub fn aborted(&self) -> bool {
        self.header_value("status") == Some(STATUS_ABORTED)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.header {
            if k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(Error::InvalidArgument(format!("header entry `{k}` cannot be written")));
            }
            out.push_str(&format!("# {k} = {v}\n"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(COLUMNS).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.run_id.clone(),
                r.method.clone(),
                r.seed.to_string(),
                r.epoch.to_string(),
                r.task_id.clone(),
                fmt_f64(r.train_loss),
                fmt_f64(r.val_metric),
                fmt_f64(r.test_metric),
                fmt_opt(r.sharpness),
                fmt_opt(r.fim_trace),
                fmt_opt(r.cov_trace),
                fmt_opt(r.grad_sim),
            ])
            .map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut log = RunLog::default();
        let mut body_start = 0;
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else {
                body_start = i;
                break;
            };
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::LogParse { line: i + 1, message: format!("bad header line `{line}`") })?;
            log.header.push((k.trim().to_string(), v.trim().to_string()));
            body_start = i + 1;
        }
        let body: String = text.lines().skip(body_start).map(|l| format!("{l}\n")).collect();
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let perr = |line: usize, message: String| Error::LogParse { line, message };
        let cols = rd.headers().map_err(|e| perr(body_start + 1, e.to_string()))?.clone();
        if cols.iter().ne(COLUMNS) {
            return Err(perr(body_start + 1, format!("unexpected columns {:?}", cols.iter().collect::<Vec<_>>())));
        }
        for (j, row) in rd.records().enumerate() {
            let line = body_start + j + 2;
            let row = row.map_err(|e| perr(line, e.to_string()))?;
            let num = |c: usize| -> Result<f64> {
                row[c].parse().map_err(|_| perr(line, format!("column {} is not a number: `{}`", COLUMNS[c], &row[c])))
            };
            let opt = |c: usize| -> Result<Option<f64>> { if row[c].is_empty() { Ok(None) } else { num(c).map(Some) } };
            let int = |c: usize| -> Result<u64> {
                row[c].parse().map_err(|_| perr(line, format!("column {} is not an integer: `{}`", COLUMNS[c], &row[c])))
            };
            log.records.push(TrajectoryRecord {
                run_id: row[0].to_string(),
                method: row[1].to_string(),
                seed: int(2)?,
                epoch: int(3)? as usize,
                task_id: row[4].to_string(),
                train_loss: num(5)?,
                val_metric: num(6)?,
                test_metric: num(7)?,
                sharpness: opt(8)?,
                fim_trace: opt(9)?,
                cov_trace: opt(10)?,
                grad_sim: opt(11)?,
            });
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(loss: f64, sharp: Option<f64>) -> TrajectoryRecord {
        TrajectoryRecord {
            run_id: "mt_a+b".into(),
            method: "umtg".into(),
            seed: 2,
            epoch: 7,
            task_id: "a".into(),
            train_loss: loss,
            val_metric: 0.5,
            test_metric: 1.0 / 3.0,
            sharpness: sharp,
            fim_trace: None,
            cov_trace: Some(0.0),
            grad_sim: Some(-0.25),
        }
    }

    #[test]
    fn layout() {
        let mut log = RunLog::default();
        log.set_header("run_id", "mt_a+b");
        log.set_header("optim.lr", "1e-3");
        log.push(rec(0.1, None));
        let text = log.to_text().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# run_id = mt_a+b");
        assert_eq!(lines[2], COLUMNS.join(","));
        assert_eq!(
            lines[3],
            "mt_a+b,umtg,2,7,a,1.0000000000000001e-1,5.0000000000000000e-1,3.3333333333333331e-1,,,0.0000000000000000e0,-2.5000000000000000e-1"
        );
        assert_eq!(RunLog::parse(&text).unwrap(), log);
    }

    #[test]
    fn header_only_and_bad_rows() {
        let mut log = RunLog::default();
        log.set_header("status", STATUS_OK);
        assert_eq!(RunLog::parse(&log.to_text().unwrap()).unwrap(), log);
        let bad = format!("{}\nx,umtg,0,0,a,notanumber,0,0,,,,\n", COLUMNS.join(","));
        assert!(matches!(RunLog::parse(&bad), Err(Error::LogParse { line: 2, .. })));
        assert!(RunLog::parse("a,b\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_lossless(
            loss in any::<f64>().prop_filter("finite", |v| v.is_finite()),
            sharp in proptest::option::of(-1e300f64..1e300),
        ) {
            let mut log = RunLog::default();
            log.push(rec(loss, sharp));
            let back = RunLog::parse(&log.to_text().unwrap()).unwrap();
            prop_assert_eq!(back.records[0].train_loss.to_bits(), loss.to_bits());
            prop_assert_eq!(back.records[0].sharpness.map(f64::to_bits), sharp.map(f64::to_bits));
        }
    }
}
