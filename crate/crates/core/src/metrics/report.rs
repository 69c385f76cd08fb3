use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::{aor, eval_d, DistanceKind, EvalConfig, EvalObject, StateMode};
use super::Result;
use crate::graph::graph_topology_accuracy;

pub const CSV_HEADER: &str = "id,rs_giou,as_giou,rs_cdist,as_cdist,rs_cd,as_cd,aor,graph_acc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: String,
    pub rs_giou: f64,
    pub as_giou: f64,
    pub rs_cdist: f64,
    pub as_cdist: f64,
    /// `None` when either side has no meshes.
    pub rs_cd: Option<f64>,
    pub as_cd: Option<f64>,
    pub aor: f64,
    pub graph_acc: u8,
    pub k_states: usize,
    pub n_points: usize,
}

impl MetricReport {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.id,
            self.rs_giou,
            self.as_giou,
            self.rs_cdist,
            self.as_cdist,
            opt(self.rs_cd),
            opt(self.as_cd),
            self.aor,
            self.graph_acc
        )
    }
}

pub fn report(id: &str, gen: &EvalObject, gt: &EvalObject, cfg: &EvalConfig) -> Result<MetricReport> {
    let d = |kind, mode| eval_d(gen, gt, kind, mode, cfg);
    let with_cd = gen.meshes.is_some() && gt.meshes.is_some();
    let cd = |mode| -> Result<Option<f64>> {
        if with_cd {
            d(DistanceKind::Cd, mode).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(MetricReport {
        id: id.to_string(),
        rs_giou: d(DistanceKind::Giou, StateMode::Rs)?,
        as_giou: d(DistanceKind::Giou, StateMode::As)?,
        rs_cdist: d(DistanceKind::Cdist, StateMode::Rs)?,
        as_cdist: d(DistanceKind::Cdist, StateMode::As)?,
        rs_cd: cd(StateMode::Rs)?,
        as_cd: cd(StateMode::As)?,
        aor: aor(&gen.abstraction)?,
        graph_acc: graph_topology_accuracy(&gen.abstraction.graph(), &gt.abstraction.graph()),
        k_states: cfg.k_states,
        n_points: cfg.n_points,
    })
}

pub fn to_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Column means over a set of reports; `None` cells are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub count: usize,
    pub rs_giou: f64,
    pub as_giou: f64,
    pub rs_cdist: f64,
    pub as_cdist: f64,
    pub rs_cd: Option<f64>,
    pub as_cd: Option<f64>,
    pub aor: f64,
    /// Percentage of objects with the correct graph topology.
    pub acc_percent: f64,
}

pub fn summarize(reports: &[MetricReport]) -> Option<ReportSummary> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: fn(&MetricReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Some(ReportSummary {
        count: reports.len(),
        rs_giou: mean(|r| r.rs_giou),
        as_giou: mean(|r| r.as_giou),
        rs_cdist: mean(|r| r.rs_cdist),
        as_cdist: mean(|r| r.as_cdist),
        rs_cd: mean_opt(|r| r.rs_cd),
        as_cd: mean_opt(|r| r.as_cd),
        aor: mean(|r| r.aor),
        acc_percent: 100.0 * mean(|r| r.graph_acc as f64),
    })
}
