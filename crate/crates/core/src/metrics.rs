//! Losses and evaluation statistics for joint vessel segmentation and sO₂
//! estimation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{Image, Mask};

/// Dice smoothing term.
pub const DICE_EPS: f64 = 1e-7;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegLossKind {
    Dice,
    Mse,
}

/// `pixel > threshold`.
pub fn binarize(seg_prob: &Image, threshold: f64) -> Mask {
    seg_prob.map(|&v| v > threshold)
}

/// `1 − (2 Σ pred·gt + ε) / (Σ pred + Σ gt + ε)`.
pub fn dice_loss(pred: &Image, gt: &Mask) -> Result<f64> {
    pred.ensure_same_dims(gt, "dice loss")?;
    let mut inter = 0.0;
    let mut sum_pred = 0.0;
    let mut sum_gt = 0.0;
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        sum_pred += p;
        if g {
            inter += p;
            sum_gt += 1.0;
        }
    }
    Ok(1.0 - (2.0 * inter + DICE_EPS) / (sum_pred + sum_gt + DICE_EPS))
}

/// Mean squared error over the pixels of `mask`.
pub fn mse_in_mask(pred: &Image, gt: &Image, mask: &Mask) -> Result<f64> {
    pred.ensure_same_dims(gt, "masked mse")?;
    pred.ensure_same_dims(mask, "masked mse")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&p, &g), &m) in pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .zip(mask.as_slice())
    {
        if m {
            sum += (p - g) * (p - g);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::validation("masked mse over an empty mask"));
    }
    Ok(sum / n as f64)
}

/// Full-image mean squared error.
pub fn plain_mse_loss(pred: &Image, gt: &Image) -> Result<f64> {
    pred.ensure_same_dims(gt, "mse")?;
    if pred.is_empty() {
        return Err(Error::validation("mse of an empty image"));
    }
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Equal-weight sum of the segmentation loss and the sO₂ error restricted to
/// the ground-truth vessels. sO₂ predictions outside `seg_gt` do not enter.
pub fn hybrid_loss(
    seg_pred: &Image,
    seg_gt: &Mask,
    so2_pred: &Image,
    so2_gt: &Image,
    kind: SegLossKind,
) -> Result<f64> {
    let seg = match kind {
        SegLossKind::Dice => dice_loss(seg_pred, seg_gt)?,
        SegLossKind::Mse => plain_mse_loss(seg_pred, &seg_gt.to_image())?,
    };
    Ok(0.5 * seg + 0.5 * mse_in_mask(so2_pred, so2_gt, seg_gt)?)
}

/// Elementwise product of the binary segmentation and the intermediate sO₂ map.
pub fn final_so2(seg_bin: &Mask, so2_intermediate: &Image) -> Result<Image> {
    seg_bin.ensure_same_dims(so2_intermediate, "final sO2")?;
    let data = seg_bin
        .as_slice()
        .iter()
        .zip(so2_intermediate.as_slice())
        .map(|(&s, &v)| if s { v } else { 0.0 })
        .collect();
    Image::from_vec(seg_bin.width(), seg_bin.height(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegStats {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `FP / (FP + TN)`; 0 when the ground truth has no negatives.
    pub fpr: f64,
    /// `FN / (FN + TP)`; 0 when the ground truth has no positives.
    pub fnr: f64,
    pub accuracy: f64,
    pub fpr_defined: bool,
    pub fnr_defined: bool,
}

pub fn seg_stats(pred: &Mask, gt: &Mask) -> Result<SegStats> {
    pred.ensure_same_dims(gt, "segmentation stats")?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den > 0 {
            num as f64 / den as f64
        } else {
            0.0
        }
    };
    let total = tp + tn + fp + fn_;
    Ok(SegStats {
        tp,
        tn,
        fp,
        fn_,
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
        accuracy: ratio(tp + tn, total),
        fpr_defined: fp + tn > 0,
        fnr_defined: fn_ + tp > 0,
    })
}

/// Metrics for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub id: String,
    /// Dice loss of the thresholded segmentation.
    pub dice_loss: f64,
    /// Training loss on the raw outputs (soft segmentation, intermediate sO₂).
    pub hybrid_loss: f64,
    /// sO₂ error of the final map inside the ground-truth vessels.
    pub so2_mse_in_gt_mask: f64,
    pub seg: SegStats,
}

/// Evaluates one raw prediction against ground truth. The segmentation is
/// thresholded at 0.5 and the final sO₂ map is `binary seg × intermediate`.
pub fn evaluate_sample(
    id: &str,
    seg_prob: &Image,
    so2_intermediate: &Image,
    gt_seg: &Mask,
    gt_so2: &Image,
    kind: SegLossKind,
) -> Result<SampleMetrics> {
    let seg_bin = binarize(seg_prob, DEFAULT_THRESHOLD);
    let so2_final = final_so2(&seg_bin, so2_intermediate)?;
    Ok(SampleMetrics {
        id: id.to_string(),
        dice_loss: dice_loss(&seg_bin.to_image(), gt_seg)?,
        hybrid_loss: hybrid_loss(seg_prob, gt_seg, so2_intermediate, gt_so2, kind)?,
        so2_mse_in_gt_mask: mse_in_mask(&so2_final, gt_so2, gt_seg)?,
        seg: seg_stats(&seg_bin, gt_seg)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for fewer than two values.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd {
            mean: 0.0,
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Column names of the evaluation CSV, in order.
pub const REPORT_COLUMNS: [&str; 11] = [
    "sample_id",
    "dice_loss",
    "hybrid_loss",
    "so2_mse_in_gt_mask",
    "fpr",
    "fnr",
    "accuracy",
    "tp",
    "tn",
    "fp",
    "fn",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: Vec<SampleMetrics>,
}

impl EvalReport {
    pub fn new(mut samples: Vec<SampleMetrics>) -> Self {
        samples.sort_by(|a, b| a.id.cmp(&b.id));
        Self { samples }
    }

    fn column(&self, f: impl Fn(&SampleMetrics) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    /// Mean and standard deviation of each numeric column, in column order.
    pub fn aggregates(&self) -> Vec<(&'static str, MeanStd)> {
        let cols: [(&str, fn(&SampleMetrics) -> f64); 10] = [
            ("dice_loss", |s| s.dice_loss),
            ("hybrid_loss", |s| s.hybrid_loss),
            ("so2_mse_in_gt_mask", |s| s.so2_mse_in_gt_mask),
            ("fpr", |s| s.seg.fpr),
            ("fnr", |s| s.seg.fnr),
            ("accuracy", |s| s.seg.accuracy),
            ("tp", |s| s.seg.tp as f64),
            ("tn", |s| s.seg.tn as f64),
            ("fp", |s| s.seg.fp as f64),
            ("fn", |s| s.seg.fn_ as f64),
        ];
        cols.iter()
            .map(|(name, f)| (*name, mean_std(&self.column(f))))
            .collect()
    }

    /// One row per sample, then `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
                s.id,
                s.dice_loss,
                s.hybrid_loss,
                s.so2_mse_in_gt_mask,
                s.seg.fpr,
                s.seg.fnr,
                s.seg.accuracy,
                s.seg.tp,
                s.seg.tn,
                s.seg.fp,
                s.seg.fn_
            );
        }
        let aggs = self.aggregates();
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            out.push_str(label);
            for (_, ms) in &aggs {
                let v = if pick == 0 { ms.mean } else { ms.std };
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, v: &[f64]) -> Image {
        Image::from_vec(w, h, v.to_vec()).unwrap()
    }

    fn mask(w: usize, h: usize, v: &[u8]) -> Mask {
        Mask::from_vec(w, h, v.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn binarize_is_strict() {
        assert!(binarize(&Image::filled(4, 4, 0.6), 0.5)
            .as_slice()
            .iter()
            .all(|&b| b));
        assert!(binarize(&Image::filled(4, 4, 0.5), 0.5)
            .as_slice()
            .iter()
            .all(|&b| !b));
        let checker = Image::from_fn(4, 4, |r, c| if (r + c) % 2 == 0 { 0.49 } else { 0.51 });
        let b = binarize(&checker, 0.5);
        assert_eq!(b, Mask::from_fn(4, 4, |r, c| (r + c) % 2 == 1));
    }

    #[test]
    fn dice_cases() {
        let gt = mask(4, 2, &[1, 1, 1, 1, 0, 0, 0, 0]);
        assert!(dice_loss(&gt.to_image(), &gt).unwrap().abs() < 1e-6);
        let disjoint = img(4, 2, &[0., 0., 0., 0., 1., 1., 1., 1.]);
        assert!((dice_loss(&disjoint, &gt).unwrap() - 1.0).abs() < 1e-6);
        let half = img(4, 2, &[1., 1., 0., 0., 1., 1., 0., 0.]);
        assert!((dice_loss(&half, &gt).unwrap() - 0.5).abs() < 1e-7);
        let empty = Mask::filled(4, 2, false);
        assert!(dice_loss(&empty.to_image(), &empty).unwrap().abs() < 1e-12);
    }

    #[test]
    fn masked_mse_cases() {
        let gt = img(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let m = mask(2, 2, &[1, 0, 1, 0]);
        assert_eq!(mse_in_mask(&gt, &gt, &m).unwrap(), 0.0);
        let off = img(2, 2, &[0.2, 99.0, 0.4, -5.0]);
        assert!((mse_in_mask(&off, &gt, &m).unwrap() - 0.01).abs() < 1e-15);
        let two = img(2, 2, &[0.1, 0.0, 0.5, 0.0]);
        assert!((mse_in_mask(&two, &gt, &m).unwrap() - 0.02).abs() < 1e-15);
        assert!(mse_in_mask(&gt, &gt, &Mask::filled(2, 2, false)).is_err());
    }

    #[test]
    fn hybrid_cases() {
        let gt = mask(4, 1, &[1, 1, 0, 0]);
        let so2 = img(4, 1, &[0.7, 0.7, 0.0, 0.0]);
        let seg = gt.to_image();
        assert!(
            hybrid_loss(&seg, &gt, &so2, &so2, SegLossKind::Dice)
                .unwrap()
                .abs()
                < 1e-7
        );
        let shifted = img(4, 1, &[0.8, 0.8, 0.3, 0.9]);
        let h = hybrid_loss(&seg, &gt, &shifted, &so2, SegLossKind::Dice).unwrap();
        assert!((h - 0.005).abs() < 1e-7, "{h}");
        let disjoint = img(4, 1, &[0.0, 0.0, 1.0, 1.0]);
        let h = hybrid_loss(&disjoint, &gt, &so2, &so2, SegLossKind::Dice).unwrap();
        assert!((h - 0.5).abs() < 1e-7);
        let h = hybrid_loss(&disjoint, &gt, &so2, &so2, SegLossKind::Mse).unwrap();
        assert!((h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plain_mse_cases() {
        let gt = img(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(plain_mse_loss(&gt, &gt).unwrap(), 0.0);
        let c = gt.map(|v| v + 0.3);
        assert!((plain_mse_loss(&c, &gt).unwrap() - 0.09).abs() < 1e-15);
        let one = img(2, 2, &[0.1, 0.2, 0.3, 0.8]);
        assert!((plain_mse_loss(&one, &gt).unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn final_so2_cases() {
        let so2 = img(3, 1, &[0.2, 0.5, 0.9]);
        assert_eq!(final_so2(&Mask::filled(3, 1, true), &so2).unwrap(), so2);
        assert_eq!(
            final_so2(&Mask::filled(3, 1, false), &so2).unwrap(),
            Image::filled(3, 1, 0.0)
        );
        assert_eq!(
            final_so2(&mask(3, 1, &[0, 1, 0]), &so2).unwrap(),
            img(3, 1, &[0.0, 0.5, 0.0])
        );
    }

    #[test]
    fn seg_stats_cases() {
        let gt = mask(5, 1, &[1, 1, 0, 0, 0]);
        let s = seg_stats(&gt, &gt).unwrap();
        assert_eq!((s.fpr, s.fnr, s.accuracy), (0.0, 0.0, 1.0));
        let s = seg_stats(&Mask::filled(5, 1, false), &gt).unwrap();
        assert_eq!((s.fpr, s.fnr, s.accuracy), (0.0, 1.0, 0.6));
        let s = seg_stats(&gt, &Mask::filled(5, 1, false)).unwrap();
        assert!(!s.fnr_defined && s.fpr_defined);
        assert_eq!(s.fnr, 0.0);
    }

    #[test]
    fn csv_layout() {
        let gt = mask(2, 1, &[1, 0]);
        let so2 = img(2, 1, &[0.5, 0.0]);
        let a = evaluate_sample("b", &gt.to_image(), &so2, &gt, &so2, SegLossKind::Dice).unwrap();
        let b = evaluate_sample("a", &gt.to_image(), &so2, &gt, &so2, SegLossKind::Dice).unwrap();
        let csv = EvalReport::new(vec![a, b]).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_COLUMNS.join(","));
        assert!(lines[1].starts_with("a,"));
        assert!(lines[3].starts_with("mean,"));
        assert!(lines[4].starts_with("std,"));
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3].split(',').count(), REPORT_COLUMNS.len());
    }

    #[test]
    fn mean_std_sample() {
        let ms = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ms.mean, 2.5);
        assert!((ms.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]).std, 0.0);
    }
}
