//! Pixelwise confusion counts and the seven-metric segmentation summary.
//!
//! Any metric whose denominator is zero is reported as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::MaskBuf;
use crate::par;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub ppv: f64,
    pub tpr: f64,
    pub iou: f64,
    pub acc: f64,
    pub mcc: f64,
    pub f1: f64,
    pub f2: f64,
}

impl MetricRow {
    pub const HEADERS: [&'static str; 7] = ["PPV", "TPR", "IoU", "ACC", "MCC", "F1", "F2"];

    pub fn values(&self) -> [f64; 7] {
        [self.ppv, self.tpr, self.iou, self.acc, self.mcc, self.f1, self.f2]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            ppv: v[0],
            tpr: v[1],
            iou: v[2],
            acc: v[3],
            mcc: v[4],
            f1: v[5],
            f2: v[6],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Metrics of the summed confusion counts.
    #[default]
    Micro,
    /// Unweighted mean of per-image metrics.
    Macro,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            other => Err(Error::InvalidArgument(format!("unknown aggregation mode `{other}`"))),
        }
    }
}

pub fn confusion(pred: &MaskBuf, gt: &MaskBuf) -> Result<Confusion> {
    if pred.dims() != gt.dims() {
        return Err(Error::shape(
            "confusion",
            &[gt.height(), gt.width()],
            &[pred.height(), pred.width()],
        ));
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p == 1, g == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f_beta(ppv: f64, tpr: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    ratio((1.0 + b2) * ppv * tpr, b2 * ppv + tpr)
}

pub fn compute_metrics(c: &Confusion) -> MetricRow {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let ppv = ratio(tp, tp + fp);
    let tpr = ratio(tp, tp + fn_);
    let num = c.tp as i128 * c.tn as i128 - c.fp as i128 * c.fn_ as i128;
    let den = (c.tp + c.fp) as f64 * (c.tp + c.fn_) as f64 * (c.tn + c.fp) as f64 * (c.tn + c.fn_) as f64;
    MetricRow {
        ppv,
        tpr,
        iou: ratio(tp, tp + fp + fn_),
        acc: ratio(tp + tn, c.total() as f64),
        mcc: ratio(num as f64, den.sqrt()),
        f1: f_beta(ppv, tpr, 1.0),
        f2: f_beta(ppv, tpr, 2.0),
    }
}

pub fn evaluate_set(preds: &[MaskBuf], gts: &[MaskBuf], mode: Aggregation) -> Result<MetricRow> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty set".into()));
    }
    let per_image = par::map_indexed(preds.len(), |i| confusion(&preds[i], &gts[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(match mode {
        Aggregation::Micro => compute_metrics(&per_image.iter().fold(Confusion::default(), |a, &b| a + b)),
        Aggregation::Macro => {
            let mut sum = [0.0; 7];
            for c in &per_image {
                for (s, v) in sum.iter_mut().zip(compute_metrics(c).values()) {
                    *s += v;
                }
            }
            MetricRow::from_values(sum.map(|s| s / per_image.len() as f64))
        }
    })
}

const LABEL_WIDTH: usize = 12;
const VALUE_WIDTH: usize = 10;

/// Fixed-width text table: label column then PPV TPR IoU ACC MCC F1 F2,
/// each value with six decimals, right-aligned in ten characters.
pub fn report_table(rows: &[(String, MetricRow)]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len() + 2)
        .max()
        .unwrap_or(0)
        .max(LABEL_WIDTH);
    let mut out = format!("{:label_width$}", "");
    for h in MetricRow::HEADERS {
        out.push_str(&format!("{h:>VALUE_WIDTH$}"));
    }
    out.push('\n');
    for (label, row) in rows {
        out.push_str(&format!("{label:label_width$}"));
        for v in row.values() {
            out.push_str(&format!("{v:>VALUE_WIDTH$.6}"));
        }
        out.push('\n');
    }
    out
}

pub fn report_csv(rows: &[(String, MetricRow)]) -> String {
    let mut out = String::from("label,ppv,tpr,iou,acc,mcc,f1,f2\n");
    for (label, row) in rows {
        out.push_str(label);
        for v in row.values() {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}

/// Conventional row label for dataset variant `k`.
pub fn dataset_label(k: usize) -> String {
    format!("Dataset {k}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, bits: &[u8]) -> MaskBuf {
        MaskBuf::new(w, bits.len() / w, bits.to_vec()).unwrap()
    }

    #[test]
    fn confusion_cases() {
        let gt = mask(2, &[1, 0, 0, 1]);
        let same = confusion(&gt, &gt).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        let inv = confusion(&gt.complement(), &gt).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
        let c = confusion(&mask(2, &[1, 1, 0, 0]), &mask(2, &[1, 0, 0, 0])).unwrap();
        assert_eq!(
            c,
            Confusion {
                tp: 1,
                fp: 1,
                fn_: 0,
                tn: 2
            }
        );
        assert!(confusion(&mask(2, &[0, 0]), &mask(1, &[0, 0])).is_err());
    }

    #[test]
    fn hand_computed_row() {
        let r = compute_metrics(&Confusion {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 2,
        });
        assert_eq!(r.ppv, 0.5);
        assert_eq!(r.tpr, 1.0);
        assert_eq!(r.iou, 0.5);
        assert_eq!(r.acc, 0.75);
        assert!((r.mcc - 2.0 / 12f64.sqrt()).abs() < 1e-15);
        assert!((r.mcc - 0.57735).abs() < 1e-5);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f2 - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_empty_intersection() {
        let gt = mask(3, &[1, 0, 0, 1, 1, 0]);
        let r = compute_metrics(&confusion(&gt, &gt).unwrap());
        assert_eq!(r.values(), [1.0; 7]);
        let r = compute_metrics(&Confusion {
            tp: 0,
            fp: 3,
            fn_: 2,
            tn: 10,
        });
        assert_eq!((r.iou, r.f1, r.f2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn degenerate_denominators_are_zero() {
        let r = compute_metrics(&Confusion {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 9,
        });
        assert_eq!(r.ppv, 0.0);
        assert_eq!(r.mcc, 0.0);
        assert_eq!(r.acc, 1.0);
        assert!(r.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn aggregation_modes() {
        let p = mask(2, &[1, 1, 0, 0]);
        let g = mask(2, &[1, 0, 0, 0]);
        let single = compute_metrics(&confusion(&p, &g).unwrap());
        for mode in [Aggregation::Micro, Aggregation::Macro] {
            assert_eq!(
                evaluate_set(std::slice::from_ref(&p), std::slice::from_ref(&g), mode).unwrap(),
                single
            );
        }
        let doubled = evaluate_set(&[p.clone(), p.clone()], &[g.clone(), g.clone()], Aggregation::Micro).unwrap();
        assert_eq!(doubled, single);
        assert!(evaluate_set(&[p], &[], Aggregation::Micro).is_err());
    }

    #[test]
    fn table_of_ones() {
        let t = report_table(&[(dataset_label(1), MetricRow::from_values([1.0; 7]))]);
        let line = t.lines().nth(1).unwrap();
        assert_eq!(line.matches("1.000000").count(), 7);
    }

    #[test]
    fn parse_mode() {
        assert_eq!("macro".parse::<Aggregation>().unwrap(), Aggregation::Macro);
        assert!("mean".parse::<Aggregation>().is_err());
    }
}
