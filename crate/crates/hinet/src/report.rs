//! Text and JSON renderings of a metrics report.

use std::fmt::Write as _;

use hinet_core::metrics::MetricsReport;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RegionJson {
    pub region: &'static str,
    pub dsc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Metrics whose denominator was empty and were set to 1 by convention.
    pub degenerate: Vec<&'static str>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportJson {
    pub regions: Vec<RegionJson>,
    pub mean_dsc: f64,
}

impl From<&MetricsReport> for ReportJson {
    fn from(r: &MetricsReport) -> Self {
        let regions = r
            .regions
            .iter()
            .map(|m| {
                let degenerate = [
                    ("dsc", m.dsc_degenerate),
                    ("sensitivity", m.sensitivity_degenerate),
                    ("specificity", m.specificity_degenerate),
                ]
                .into_iter()
                .filter_map(|(name, flag)| flag.then_some(name))
                .collect();
                RegionJson {
                    region: m.region.abbrev(),
                    dsc: m.dsc,
                    sensitivity: m.sensitivity,
                    specificity: m.specificity,
                    tp: m.counts.tp,
                    fp: m.counts.fp,
                    tn: m.counts.tn,
                    fn_: m.counts.fn_,
                    degenerate,
                }
            })
            .collect();
        ReportJson {
            regions,
            mean_dsc: r.mean_dsc(),
        }
    }
}

/// Percentages with three decimals; `*` marks a value set by the
/// empty-denominator convention.
pub fn table(r: &MetricsReport) -> String {
    let cell = |v: f64, degenerate: bool| format!("{:>10.3}{}", 100.0 * v, if degenerate { "*" } else { " " });
    let mut out = format!("{:<6}{:>11}{:>11}{:>11}\n", "region", "DSC", "sens", "spec");
    for m in &r.regions {
        writeln!(
            out,
            "{:<6}{}{}{}",
            m.region.abbrev(),
            cell(m.dsc, m.dsc_degenerate),
            cell(m.sensitivity, m.sensitivity_degenerate),
            cell(m.specificity, m.specificity_degenerate)
        )
        .unwrap();
    }
    writeln!(out, "{:<6}{:>10.3}", "mean", 100.0 * r.mean_dsc()).unwrap();
    if r.regions
        .iter()
        .any(|m| m.dsc_degenerate || m.sensitivity_degenerate || m.specificity_degenerate)
    {
        out.push_str("* empty denominator, reported as 100 by convention\n");
    }
    out
}
