//! Human-readable reports and their tab-separated companions.
//!
//! Numbers in TSV output use Rust's shortest round-trip formatting, so
//! parsing a table back yields bit-identical values.

use std::fmt::Write as _;

use dagmm_ho_core::eval::{Classification, MetricsReport};
use dagmm_ho_core::hpo::Selection;

use crate::error::{CliError, Result};
use crate::pipeline::{MethodResult, Tuning};

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn selection_line(s: &mut String, name: &str, what: &str, sel: &Selection) {
    let knee = sel
        .bending
        .x_star
        .map_or_else(|| "none".to_string(), |x| format!("{x}"));
    let _ = writeln!(
        s,
        "{name} = {} ({what}; bending point {knee}; fallback {})",
        sel.value,
        yes_no(sel.fallback)
    );
}

pub fn tuning_text(t: &Tuning) -> String {
    let mut s = String::new();
    selection_line(&mut s, "K", "gap statistic", &t.k);
    selection_line(&mut s, "c", "cumulative explained variance", &t.c);
    let _ = writeln!(
        s,
        "model uses {} components and bottleneck {}",
        t.components, t.bottleneck
    );
    let _ = writeln!(s, "\n   k   gap         std err");
    for ((x, y), e) in t.k.curve.x.iter().zip(&t.k.curve.y).zip(&t.k_std_err) {
        let _ = writeln!(s, "{x:>4}   {y:<10.5}  {e:.5}");
    }
    let _ = writeln!(s, "\n   i   cumulative variance");
    for (x, y) in t.c.curve.x.iter().zip(&t.c.curve.y) {
        let _ = writeln!(s, "{x:>4}   {y:.5}");
    }
    s
}

pub const CURVE_HEADER: &str = "curve\tx\ty\tstd_err\tdifference\tlocal_max";

/// Both selection curves, one point per line.
pub fn tuning_tsv(t: &Tuning) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    let mut rows = |name: &str, sel: &Selection, err: Option<&[f64]>| {
        for i in 0..sel.curve.x.len() {
            let e = err.map_or_else(String::new, |e| e[i].to_string());
            let _ = writeln!(
                s,
                "{name}\t{}\t{}\t{e}\t{}\t{}",
                sel.curve.x[i],
                sel.curve.y[i],
                sel.bending.y_diff[i],
                u8::from(sel.bending.maxima.contains(&i))
            );
        }
    };
    rows("gap", &t.k, Some(&t.k_std_err));
    rows("variance", &t.c, None);
    s
}

pub const COMPARISON_HEADER: &str = "method\tauc\tprecision\trecall\tf1\tthreshold\ttp\tfp\ttn\tfn";

/// One comparison-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub report: MetricsReport,
}

impl From<&MethodResult> for TableRow {
    fn from(r: &MethodResult) -> Self {
        TableRow {
            method: r.method.to_string(),
            report: r.report,
        }
    }
}

pub fn comparison_tsv(rows: &[TableRow]) -> String {
    let mut s = String::from(COMPARISON_HEADER);
    s.push('\n');
    for r in rows {
        let c = &r.report.classification;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method,
            r.report.auc,
            c.precision,
            c.recall,
            c.f1,
            c.threshold,
            c.true_positives,
            c.false_positives,
            c.true_negatives,
            c.false_negatives
        );
    }
    s
}

pub fn parse_comparison_tsv(text: &str) -> Result<Vec<TableRow>> {
    let bad = |n: usize, what: &str| CliError::Data(format!("comparison table line {n}: {what}"));
    let mut lines = text.lines();
    if lines.next() != Some(COMPARISON_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let n = i + 2;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 10 {
                return Err(bad(n, "expected 10 fields"));
            }
            let num = |j: usize| f[j].parse::<f64>().map_err(|_| bad(n, "bad number"));
            let count = |j: usize| f[j].parse::<usize>().map_err(|_| bad(n, "bad count"));
            Ok(TableRow {
                method: f[0].to_string(),
                report: MetricsReport {
                    auc: num(1)?,
                    classification: Classification {
                        precision: num(2)?,
                        recall: num(3)?,
                        f1: num(4)?,
                        threshold: num(5)?,
                        true_positives: count(6)?,
                        false_positives: count(7)?,
                        true_negatives: count(8)?,
                        false_negatives: count(9)?,
                    },
                },
            })
        })
        .collect()
}

pub fn comparison_text(rows: &[TableRow]) -> String {
    let mut s = format!(
        "{:<10} {:>7} {:>9} {:>7} {:>7}\n",
        "method", "AUC", "precision", "recall", "F1"
    );
    for r in rows {
        let c = &r.report.classification;
        let _ = writeln!(
            s,
            "{:<10} {:>7.4} {:>9.4} {:>7.4} {:>7.4}",
            r.method, r.report.auc, c.precision, c.recall, c.f1
        );
    }
    s
}

/// Energy summary of one scored segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentScore {
    pub file: String,
    pub segment: usize,
    pub start: f64,
    pub end: f64,
    pub mean_energy: f64,
    pub max_energy: f64,
    pub flagged: bool,
}

pub const SCORE_HEADER: &str = "file\tsegment\tstart\tend\tmean_energy\tmax_energy\tflag";

pub fn scores_tsv(rows: &[SegmentScore]) -> String {
    let mut s = String::from(SCORE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.file,
            r.segment,
            r.start,
            r.end,
            r.mean_energy,
            r.max_energy,
            u8::from(r.flagged)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, auc: f64) -> TableRow {
        TableRow {
            method: method.into(),
            report: MetricsReport {
                auc,
                classification: Classification {
                    threshold: -1.0 / 3.0,
                    true_positives: 3,
                    false_positives: 1,
                    true_negatives: 7,
                    false_negatives: 0,
                    precision: 0.75,
                    recall: 1.0,
                    f1: 6.0 / 7.0,
                },
            },
        }
    }

    #[test]
    fn comparison_table_round_trips_exactly() {
        let rows = vec![row("DAGMM-HO", 0.1 + 0.2), row("GMM", 1e-300)];
        let back = parse_comparison_tsv(&comparison_tsv(&rows)).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(parse_comparison_tsv("method\tauc\n").is_err());
        let mut t = comparison_tsv(&[row("X", 0.5)]);
        t = t.replace("0.5\t", "half\t");
        assert!(parse_comparison_tsv(&t).is_err());
    }
}
