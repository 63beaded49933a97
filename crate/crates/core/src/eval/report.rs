//! Structured metric reports.
//!
//! Serialized as `key: value` lines with a fixed key order and six decimal
//! places. The wall-clock runtime is kept in memory for display but never
//! serialized, so rerunning a command overwrites byte-identical files.

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub attr_accuracy: Vec<f64>,
    pub map: Option<f64>,
    /// CMC at ranks 1, 5, 10, 20.
    pub cmc: Option<[f64; 4]>,
    pub recall_at: Vec<(usize, f64)>,
    pub nmi: Option<f64>,
    /// Wall-clock seconds; in-memory only.
    pub runtime_seconds: f64,
}

impl MetricsReport {
    /// Fixed-order `key: value` text. Missing metrics are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(v) = self.accuracy {
            out.push_str(&format!("accuracy: {v:.6}\n"));
        }
        for (i, v) in self.attr_accuracy.iter().enumerate() {
            out.push_str(&format!("attr_accuracy_{i}: {v:.6}\n"));
        }
        if let Some(v) = self.map {
            out.push_str(&format!("map: {v:.6}\n"));
        }
        if let Some(cmc) = self.cmc {
            for (rank, v) in super::retrieval::CMC_RANKS.iter().zip(cmc) {
                out.push_str(&format!("cmc_{rank}: {v:.6}\n"));
            }
        }
        for (k, v) in &self.recall_at {
            out.push_str(&format!("recall_{k}: {v:.6}\n"));
        }
        if let Some(v) = self.nmi {
            out.push_str(&format!("nmi: {v:.6}\n"));
        }
        out
    }

    /// Check range invariants: fractions in [0, 1], CMC non-decreasing.
    pub fn check_ranges(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| -> Result<(), String> {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
            Ok(())
        };
        if let Some(v) = self.accuracy {
            unit("accuracy", v)?;
        }
        for (i, &v) in self.attr_accuracy.iter().enumerate() {
            unit(&format!("attr_accuracy_{i}"), v)?;
        }
        if let Some(v) = self.map {
            unit("map", v)?;
        }
        if let Some(cmc) = self.cmc {
            for (i, &v) in cmc.iter().enumerate() {
                unit(&format!("cmc[{i}]"), v)?;
                if i > 0 && v < cmc[i - 1] {
                    return Err("cmc must be non-decreasing in rank".to_string());
                }
            }
        }
        for &(k, v) in &self.recall_at {
            unit(&format!("recall_{k}"), v)?;
        }
        if let Some(v) = self.nmi {
            unit("nmi", v)?;
        }
        Ok(())
    }
}

/// Field-wise mean of several reports. Optional metrics must be present in
/// all reports or in none; vector metrics must agree in shape.
pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    assert!(!reports.is_empty());
    let n = reports.len() as f64;
    let mean_opt = |get: fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
        if reports.iter().all(|r| get(r).is_some()) {
            Some(reports.iter().map(|r| get(r).unwrap()).sum::<f64>() / n)
        } else {
            None
        }
    };
    let attr_len = reports[0].attr_accuracy.len();
    let attr_accuracy: Vec<f64> = (0..attr_len)
        .map(|i| reports.iter().map(|r| r.attr_accuracy[i]).sum::<f64>() / n)
        .collect();
    let cmc = if reports.iter().all(|r| r.cmc.is_some()) {
        let mut acc = [0.0; 4];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.cmc.unwrap()) {
                *a += v;
            }
        }
        Some([acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n])
    } else {
        None
    };
    let recall_at: Vec<(usize, f64)> = reports[0]
        .recall_at
        .iter()
        .enumerate()
        .map(|(slot, &(k, _))| {
            (k, reports.iter().map(|r| r.recall_at[slot].1).sum::<f64>() / n)
        })
        .collect();
    MetricsReport {
        accuracy: mean_opt(|r| r.accuracy),
        attr_accuracy,
        map: mean_opt(|r| r.map),
        cmc,
        recall_at,
        nmi: mean_opt(|r| r.nmi),
        runtime_seconds: reports.iter().map(|r| r.runtime_seconds).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_has_fixed_order_and_six_decimals() {
        let report = MetricsReport {
            accuracy: Some(0.5),
            attr_accuracy: vec![1.0, 0.25],
            map: Some(0.75),
            cmc: Some([0.5, 0.75, 0.875, 1.0]),
            recall_at: vec![(1, 0.5), (2, 0.625)],
            nmi: Some(0.333333333),
            runtime_seconds: 12.5,
        };
        let text = report.to_text();
        let expect = "accuracy: 0.500000\nattr_accuracy_0: 1.000000\nattr_accuracy_1: 0.250000\n\
                      map: 0.750000\ncmc_1: 0.500000\ncmc_5: 0.750000\ncmc_10: 0.875000\n\
                      cmc_20: 1.000000\nrecall_1: 0.500000\nrecall_2: 0.625000\nnmi: 0.333333\n";
        assert_eq!(text, expect);
        assert!(!text.contains("runtime"));
    }

    #[test]
    fn range_checks_catch_bad_cmc() {
        let mut report = MetricsReport::default();
        report.cmc = Some([0.9, 0.5, 1.0, 1.0]);
        assert!(report.check_ranges().is_err());
        report.cmc = Some([0.5, 0.9, 1.0, 1.0]);
        assert!(report.check_ranges().is_ok());
    }

    #[test]
    fn mean_averages_fieldwise() {
        let a = MetricsReport {
            accuracy: Some(0.4),
            attr_accuracy: vec![0.2],
            recall_at: vec![(1, 0.0)],
            ..Default::default()
        };
        let b = MetricsReport {
            accuracy: Some(0.8),
            attr_accuracy: vec![0.6],
            recall_at: vec![(1, 1.0)],
            ..Default::default()
        };
        let m = mean_report(&[a, b]);
        assert_eq!(m.accuracy, Some(0.6000000000000001));
        assert_eq!(m.attr_accuracy, vec![0.4]);
        assert_eq!(m.recall_at, vec![(1, 0.5)]);
        assert_eq!(m.map, None);
    }
}
