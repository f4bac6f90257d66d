use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{absrel, default_edge_threshold, delta_acc, ege, mae, MetricsError, Result};
use crate::degrade::RegionPartition;
use crate::imagery::DepthMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Rescale the prediction by `median(gt) / median(pred)` before metrics.
    Median,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub alignment: Alignment,
    /// Edge threshold for EGE; defaults to 5% of the valid GT range.
    pub edge_threshold: Option<f64>,
    /// When set, MAE is reported with this cap in metres.
    pub mae_cap: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { alignment: Alignment::Median, edge_threshold: None, mae_cap: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub absrel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub normal: Option<RegionMetrics>,
    pub extreme: Option<RegionMetrics>,
    /// Whole-image edge gradient error; `None` when no edge passes the threshold.
    pub ege: Option<f64>,
    pub mae: Option<f64>,
    pub samples: usize,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `median(gt) / median(pred)` over pixels valid in both.
pub fn median_scale(pred: &DepthMap, gt: &DepthMap) -> Option<f64> {
    let both: Vec<usize> = (0..gt.valid().len()).filter(|&i| gt.valid()[i] && pred.valid()[i]).collect();
    let mg = median(both.iter().map(|&i| gt.depth().data()[i]).collect())?;
    let mp = median(both.iter().map(|&i| pred.depth().data()[i]).collect())?;
    Some(mg / mp)
}

fn region(pred: &DepthMap, gt: &DepthMap, mask: &[bool]) -> Result<Option<RegionMetrics>> {
    let pixels = (0..mask.len()).filter(|&i| mask[i] && gt.valid()[i] && pred.valid()[i]).count();
    if pixels == 0 {
        return Ok(None);
    }
    Ok(Some(RegionMetrics {
        absrel: absrel(pred, gt, mask)?,
        delta1: delta_acc(pred, gt, mask, 1)?,
        delta2: delta_acc(pred, gt, mask, 2)?,
        delta3: delta_acc(pred, gt, mask, 3)?,
        pixels,
    }))
}

/// Region-wise AbsRel/δ and whole-image EGE for one prediction.
///
/// Empty regions are reported as `None`, as is an undefined EGE.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, partition: &RegionPartition, opts: &EvalOptions) -> Result<EvalReport> {
    if pred.shape() != gt.shape() {
        return Err(MetricsError::ShapeMismatch(pred.shape(), gt.shape()));
    }
    if partition.extreme.len() != gt.valid().len() {
        return Err(MetricsError::ShapeMismatch(gt.shape(), (partition.height, partition.width)));
    }
    let aligned = match opts.alignment {
        Alignment::Median => pred.scaled(median_scale(pred, gt).ok_or(MetricsError::EmptyMask)?),
        Alignment::None => pred.clone(),
    };
    let normal = region(&aligned, gt, &partition.normal())?;
    let extreme = region(&aligned, gt, &partition.extreme)?;
    let threshold = opts.edge_threshold.or_else(|| default_edge_threshold(gt)).ok_or(MetricsError::EmptyMask)?;
    let ege = match ege(&aligned, gt, threshold) {
        Ok(v) => Some(v),
        Err(MetricsError::NoEdges) => None,
        Err(e) => return Err(e),
    };
    let mae = match opts.mae_cap {
        Some(cap) => match mae(&aligned, gt, &vec![true; gt.valid().len()], cap) {
            Ok(v) => Some(v),
            Err(MetricsError::EmptyMask) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(EvalReport { normal, extreme, ege, mae, samples: 1 })
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn aggregate_region(items: &[RegionMetrics]) -> Option<RegionMetrics> {
    Some(RegionMetrics {
        absrel: mean_of(items.iter().map(|r| r.absrel))?,
        delta1: mean_of(items.iter().map(|r| r.delta1))?,
        delta2: mean_of(items.iter().map(|r| r.delta2))?,
        delta3: mean_of(items.iter().map(|r| r.delta3))?,
        pixels: items.iter().map(|r| r.pixels).sum(),
    })
}

/// Per-image mean over every report in which the entry is present.
pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
    let normal: Vec<_> = reports.iter().filter_map(|r| r.normal).collect();
    let extreme: Vec<_> = reports.iter().filter_map(|r| r.extreme).collect();
    EvalReport {
        normal: aggregate_region(&normal),
        extreme: aggregate_region(&extreme),
        ege: mean_of(reports.iter().filter_map(|r| r.ege)),
        mae: mean_of(reports.iter().filter_map(|r| r.mae)),
        samples: reports.iter().map(|r| r.samples).sum(),
    }
}

const COLUMNS: [&str; 10] = [
    "method",
    "normal_absrel",
    "normal_d1",
    "normal_d2",
    "normal_d3",
    "extreme_absrel",
    "extreme_d1",
    "extreme_d2",
    "extreme_d3",
    "ege",
];

fn cells(r: &EvalReport) -> Vec<Option<f64>> {
    let reg = |m: Option<RegionMetrics>| match m {
        Some(m) => vec![Some(m.absrel), Some(m.delta1), Some(m.delta2), Some(m.delta3)],
        None => vec![None; 4],
    };
    let mut v = reg(r.normal);
    v.extend(reg(r.extreme));
    v.push(r.ege);
    v
}

/// One row per named report; absent entries are left empty.
pub fn table_csv(rows: &[(String, EvalReport)]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for (name, r) in rows {
        out.push_str(name);
        for c in cells(r) {
            out.push(',');
            if let Some(v) = c {
                write!(out, "{v:.6}").expect("write to String");
            }
        }
        out.push('\n');
    }
    out
}

pub fn table_text(rows: &[(String, EvalReport)]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<16} | {:^35} | {:^35} | {:>7}", "", "normal illumination", "extreme illumination", "").unwrap();
    writeln!(
        out,
        "{:<16} | {:>8} {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8} {:>8} | {:>7}",
        "method", "AbsRel", "d1", "d2", "d3", "AbsRel", "d1", "d2", "d3", "EGE"
    )
    .unwrap();
    for (name, r) in rows {
        write!(out, "{name:<16} |").unwrap();
        for (i, c) in cells(r).into_iter().enumerate() {
            if i == 4 || i == 8 {
                out.push_str(" |");
            }
            match c {
                Some(v) => write!(out, " {v:>8.4}").unwrap(),
                None => write!(out, " {:>8}", "-").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}
