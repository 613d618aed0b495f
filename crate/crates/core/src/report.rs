//! Result rows: one line per (dataset, method, criterion, seed), printed
//! with four decimals like `acc|discri|consist` table cells.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::metrics::EvaluationReport;
use crate::Result;

pub const REPORT_CSV_HEADER: &str = "dataset,method,criterion,seed,split,k,n,acc,discr,consist,delta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub criterion: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

/// Four-decimal rendering used in every printed table.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

impl ReportRow {
    /// `acc|discr|consist`
    pub fn cell(&self) -> String {
        table_cell(&self.report)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let r = &self.report;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.method,
            self.criterion,
            self.seed,
            r.split,
            r.k,
            r.n,
            fmt4(r.accuracy),
            fmt4(r.discrimination),
            fmt4(r.consistency),
            fmt4(r.delta)
        )?;
        Ok(())
    }

    pub fn write_json_line<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

pub fn table_cell(r: &EvaluationReport) -> String {
    format!("{}|{}|{}", fmt4(r.accuracy), fmt4(r.discrimination), fmt4(r.consistency))
}

pub fn write_report_csv<W: Write>(mut w: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(w, "{REPORT_CSV_HEADER}")?;
    for row in rows {
        row.write_csv(&mut w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimal_rows() {
        let row = ReportRow {
            dataset: "adult".into(),
            method: "lr".into(),
            criterion: "delta".into(),
            seed: 1,
            report: EvaluationReport::new("test", 100, 5, 0.83871, 0.18729, 0.830749),
        };
        assert_eq!(row.cell(), "0.8387|0.1873|0.8307");
        let mut buf = Vec::new();
        write_report_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "adult,lr,delta,1,test,5,100,0.8387,0.1873,0.8307,0.6514");

        let mut json = Vec::new();
        row.write_json_line(&mut json).unwrap();
        let back: ReportRow = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, row);
    }
}
