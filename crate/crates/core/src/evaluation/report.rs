//! Metric reports written as JSON and CSV.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub value: f64,
    /// Standard deviation over seeds; 0 for a single run.
    pub std: f64,
}

impl MetricSummary {
    pub fn single(value: f64) -> Self {
        Self { value, std: 0.0 }
    }

    /// Mean and sample standard deviation.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return input("a metric summary needs at least one sample");
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { value: mean, std })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, MetricSummary>,
    /// Wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    /// Named tables such as per-class IoU.
    #[serde(default)]
    pub tables: BTreeMap<String, BTreeMap<String, f64>>,
    pub config_digest: String,
    /// The configuration that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl EvalReport {
    pub fn new(config_digest: impl Into<String>) -> Self {
        Self { config_digest: config_digest.into(), ..Default::default() }
    }

    pub fn insert_metric(&mut self, name: impl Into<String>, summary: MetricSummary) {
        self.metrics.insert(name.into(), summary);
    }

    pub fn insert_timing(&mut self, name: impl Into<String>, seconds: f64) {
        self.timings.insert(name.into(), seconds);
    }

    pub fn insert_table(&mut self, name: impl Into<String>, table: BTreeMap<String, f64>) {
        self.tables.insert(name.into(), table);
    }

    pub fn validate(&self) -> Result<()> {
        for (k, m) in &self.metrics {
            if !m.value.is_finite() || !(m.std >= 0.0 && m.std.is_finite()) {
                return input(format!("metric {k} has value {} and std {}", m.value, m.std));
            }
        }
        for (k, t) in &self.timings {
            if !(t.is_finite() && *t >= 0.0) {
                return input(format!("timing {k} is {t}"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows of `kind,name,value,std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,name,value,std\n");
        for (k, m) in &self.metrics {
            out.push_str(&format!("metric,{k},{},{}\n", m.value, m.std));
        }
        for (k, t) in &self.timings {
            out.push_str(&format!("timing,{k},{t},0\n"));
        }
        for (table, rows) in &self.tables {
            for (k, v) in rows {
                out.push_str(&format!("table,{table}/{k},{v},0\n"));
            }
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: Option<&Path>) -> Result<()> {
        std::fs::write(json_path, self.to_json()?)?;
        if let Some(p) = csv_path {
            std::fs::write(p, self.to_csv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = MetricSummary::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.value, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(MetricSummary::from_samples(&[4.0]).unwrap().std, 0.0);
        assert!(MetricSummary::from_samples(&[]).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut r = EvalReport::new("abc");
        r.insert_metric("auc", MetricSummary::single(0.9));
        r.insert_timing("train", 1.5);
        r.insert_table("iou", BTreeMap::from([("class_2".to_string(), 0.5)]));
        let back: EvalReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().contains("table,iou/class_2,0.5,0"));
        r.insert_metric("bad", MetricSummary { value: f64::NAN, std: 0.0 });
        assert!(r.to_json().is_err());
    }
}
