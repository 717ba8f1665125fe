//! Metrics rows and their CSV form.

use std::io::Write;

use crate::error::Result;

/// One evaluation point. `q` holds the scores used for the step at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: usize,
    pub epoch: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: Option<f64>,
    pub dist_to_opt: Option<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub byz_stat: Option<f64>,
    /// Non-finite rows zeroed in the most recent step.
    pub corrupted_rows: usize,
    pub q: Vec<f64>,
}

const FIXED_COLUMNS: [&str; 10] = [
    "t",
    "epoch",
    "train_loss",
    "test_loss",
    "test_accuracy",
    "dist_to_opt",
    "gamma",
    "alpha",
    "byz_stat",
    "corrupted_rows",
];

pub fn header(m: usize) -> String {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((0..m).map(|j| format!("q_{j}")));
    cols.join(",")
}

// `{}` on f64 prints the shortest string that parses back to the same value.
fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let mut fields = vec![
            self.t.to_string(),
            self.epoch.to_string(),
            self.train_loss.to_string(),
            self.test_loss.to_string(),
            opt(self.test_accuracy),
            opt(self.dist_to_opt),
            self.gamma.to_string(),
            self.alpha.to_string(),
            opt(self.byz_stat),
            self.corrupted_rows.to_string(),
        ];
        fields.extend(self.q.iter().map(f64::to_string));
        fields.join(",")
    }

    /// True when every present numeric field is finite.
    pub fn is_finite(&self) -> bool {
        [self.epoch, self.train_loss, self.test_loss, self.gamma, self.alpha]
            .into_iter()
            .chain(self.test_accuracy)
            .chain(self.dist_to_opt)
            .chain(self.byz_stat)
            .chain(self.q.iter().copied())
            .all(f64::is_finite)
    }
}

pub fn write_metrics<W: Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    let m = records.first().map_or(0, |r| r.q.len());
    writeln!(out, "{}", header(m))?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn write_timing<W: Write>(records: &[MetricsRecord], wall_time: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "t,wall_time")?;
    for (r, s) in records.iter().zip(wall_time) {
        writeln!(out, "{},{s}", r.t)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> MetricsRecord {
        MetricsRecord {
            t: 10,
            epoch: 0.1,
            train_loss: 1.0 / 3.0,
            test_loss: 0.25,
            test_accuracy: None,
            dist_to_opt: Some(2.0),
            gamma: 0.1,
            alpha: 0.05,
            byz_stat: None,
            corrupted_rows: 0,
            q: vec![0.5, -1e-300],
        }
    }

    #[test]
    fn header_and_row_have_matching_columns() {
        let r = rec();
        let h = header(2);
        assert!(h.ends_with("q_0,q_1"));
        assert_eq!(h.split(',').count(), r.csv_row().split(',').count());
    }

    #[test]
    fn floats_round_trip() {
        let row = rec().csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fields[11].parse::<f64>().unwrap(), -1e-300);
        assert_eq!(fields[4], "");
    }

    #[test]
    fn finiteness_flag() {
        let mut r = rec();
        assert!(r.is_finite());
        r.q[0] = f64::NAN;
        assert!(!r.is_finite());
    }
}
