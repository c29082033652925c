//! Deterministic CSV emission with a fixed schema and 17-significant-digit
//! floats, suitable for golden-file regression.

use std::path::Path;

use anyhow::{Context, Result};
use mazyalab_core::verify::InequalityReport;

pub const CSV_HEADER: &str =
    "statement_id,kernel_id,phi_id,f_id,n,lhs,rhs,ratio,tail_bound,verdict,config_digest";

#[derive(Clone, Debug)]
pub struct CsvRow {
    pub statement_id: String,
    pub kernel_id: String,
    pub phi_id: String,
    pub f_id: String,
    pub n: Option<i32>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub tail_bound: f64,
    pub verdict: String,
    pub config_digest: String,
}

impl CsvRow {
    pub fn from_report(rep: &InequalityReport, digest: u64) -> Self {
        Self {
            statement_id: rep.statement.as_str().to_string(),
            kernel_id: rep.kernel_id.clone(),
            phi_id: rep.phi_id.clone(),
            f_id: rep.f_id.clone(),
            n: rep.n,
            lhs: rep.lhs,
            rhs: rep.rhs,
            ratio: rep.ratio,
            tail_bound: rep.tail_bound,
            verdict: rep.verdict.as_str().to_string(),
            config_digest: format!("{digest:016x}"),
        }
    }

    fn line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.statement_id,
            self.kernel_id,
            self.phi_id,
            self.f_id,
            self.n.map(|n| n.to_string()).unwrap_or_default(),
            format_float(self.lhs),
            format_float(self.rhs),
            format_float(self.ratio),
            format_float(self.tail_bound),
            self.verdict,
            self.config_digest
        )
    }
}

/// 17 significant digits, locale-free.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// Serialize rows sorted by `(statement_id, f_id, n)`; parallel producers can
/// never change the bytes.
pub fn render_csv(rows: &mut [CsvRow]) -> String {
    rows.sort_by(|a, b| {
        (&a.statement_id, &a.f_id, a.n, &a.phi_id)
            .cmp(&(&b.statement_id, &b.f_id, b.n, &b.phi_id))
    });
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows.iter() {
        out.push_str(&row.line());
        out.push('\n');
    }
    out
}

pub fn write_csv(rows: &mut [CsvRow], path: &Path) -> Result<()> {
    let body = render_csv(rows);
    std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
}

/// Whether any row carries a failing verdict (drives exit code 2).
pub fn any_fail(rows: &[CsvRow]) -> bool {
    rows.iter().any(|r| r.verdict == "fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_has_17_digits() {
        let s = format_float(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        assert_eq!(format_float(0.0), "0.0000000000000000e0");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_sorted_and_stable() {
        let mk = |st: &str, f: &str, n: Option<i32>| CsvRow {
            statement_id: st.into(),
            kernel_id: "k".into(),
            phi_id: "p".into(),
            f_id: f.into(),
            n,
            lhs: 1.0,
            rhs: 2.0,
            ratio: 0.5,
            tail_bound: 0.0,
            verdict: "info".into(),
            config_digest: "0".into(),
        };
        let mut rows = vec![mk("b", "y", None), mk("a", "x", Some(2)), mk("a", "x", Some(1))];
        let text = render_csv(&mut rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("a,k,p,x,1,"));
        assert!(lines[2].starts_with("a,k,p,x,2,"));
        assert!(lines[3].starts_with("b,k,p,y,,"));
    }
}
