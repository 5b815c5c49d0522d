//! Report rows and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub const CSV_COLUMNS: [&str; 10] = [
    "experiment",
    "row",
    "label",
    "parameter",
    "theoretical",
    "empirical",
    "std_err",
    "ratio",
    "z_score",
    "note",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub row: usize,
    pub label: String,
    pub parameter: Option<f64>,
    pub theoretical: Option<f64>,
    pub empirical: Option<f64>,
    pub std_err: Option<f64>,
    /// `empirical / theoretical`.
    pub ratio: Option<f64>,
    /// `(empirical − theoretical) / std_err`.
    pub z_score: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub name: String,
    pub rows: Vec<ReportRow>,
    /// Headline numbers repeated in the JSON summary.
    pub summary: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(experiment: &str, name: &str) -> Self {
        Report {
            experiment: experiment.to_string(),
            name: name.to_string(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    /// Appends a row. A missing theoretical or empirical value must come
    /// with a note saying why.
    pub fn push(&mut self, label: impl Into<String>, parameter: Option<f64>, theoretical: Option<f64>, empirical: Option<f64>, std_err: Option<f64>, note: impl Into<String>) {
        let note = note.into();
        assert!(
            (theoretical.is_some() && empirical.is_some()) || !note.is_empty(),
            "null report value without a reason"
        );
        let ratio = match (theoretical, empirical) {
            (Some(t), Some(e)) if t != 0.0 => Some(e / t),
            _ => None,
        };
        let z_score = match (theoretical, empirical, std_err) {
            (Some(t), Some(e), Some(s)) if s > 0.0 && s.is_finite() => Some((e - t) / s),
            _ => None,
        };
        self.rows.push(ReportRow {
            experiment: self.experiment.clone(),
            row: self.rows.len(),
            label: label.into(),
            parameter,
            theoretical,
            empirical,
            std_err,
            ratio,
            z_score,
            note,
        });
    }

    pub fn compare(&mut self, label: impl Into<String>, parameter: Option<f64>, theoretical: f64, empirical: f64, std_err: f64) {
        self.push(label, parameter, Some(theoretical), Some(empirical), Some(std_err), "");
    }

    pub fn set(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.experiment.clone(),
                r.row.to_string(),
                r.label.clone(),
                real(r.parameter),
                real(r.theoretical),
                real(r.empirical),
                real(r.std_err),
                real(r.ratio),
                real(r.z_score),
                r.note.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn summary_json(&self, seed: u64, workers: usize, wall_clock_seconds: f64) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment,
            "name": self.name,
            "seed": seed,
            "workers": workers,
            "wall_clock_seconds": wall_clock_seconds,
            "summary": self.summary,
            "rows": self.rows,
        })
    }
}

/// 17 significant digits; empty for null.
fn real(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn parse_real(s: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("bad real `{s}`"))
    }
}

/// Reads back a CSV written by [`Report::write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<ReportRow>, String> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows.push(ReportRow {
            experiment: rec[0].to_string(),
            row: rec[1].parse().map_err(|_| format!("bad row index `{}`", &rec[1]))?,
            label: rec[2].to_string(),
            parameter: parse_real(&rec[3])?,
            theoretical: parse_real(&rec[4])?,
            empirical: parse_real(&rec[5])?,
            std_err: parse_real(&rec[6])?,
            ratio: parse_real(&rec[7])?,
            z_score: parse_real(&rec[8])?,
            note: rec[9].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut r = Report::new("clt", "clt");
        r.compare("variance", Some(2000.0), 1.0, 1.0 / 3.0, 1e-3);
        r.push("ks_statistic", None, None, Some(0.004), None, "no theoretical value, \"quoted\", with comma");
        let rows = read_csv(&r.csv_string()).unwrap();
        assert_eq!(rows, r.rows);
        assert_eq!(rows[0].ratio, Some(1.0 / 3.0));
    }

    #[test]
    #[should_panic]
    fn null_needs_reason() {
        Report::new("x", "x").push("a", None, None, Some(1.0), None, "");
    }
}
