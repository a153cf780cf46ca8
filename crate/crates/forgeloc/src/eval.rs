//! Branch fusion, thresholding, and IoU evaluation.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Plane, ProbMap};

/// Number of thresholds on the `0.00 .. 1.00` grid, step `0.01`.
pub const THRESHOLD_COUNT: usize = 101;

/// The inclusive threshold grid.
pub fn threshold_grid() -> Vec<f64> {
    (0..THRESHOLD_COUNT).map(|k| k as f64 / 100.0).collect()
}

/// Pointwise maximum of two probability maps; a logical OR on binary maps.
pub fn fuse_max(a: &ProbMap, b: &ProbMap) -> Result<ProbMap> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::DimMismatch(format!(
            "fuse inputs {}x{} and {}x{} differ",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x.max(y))
        .collect();
    Ok(ProbMap::new_unchecked(Plane::from_vec(a.height(), a.width(), data)?))
}

/// `1` where the map value is `>= tau` (inclusive).
pub fn binarize(map: &ProbMap, tau: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("threshold {tau} outside [0,1]")));
    }
    BinaryMask::from_fn(map.height(), map.width(), |y, x| map.get(y, x) as f64 >= tau)
}

/// `TP / (TP + FP + FN)`; two empty masks compare as 1.0.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::DimMismatch(format!(
            "iou inputs {}x{} and {}x{} differ",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let denom = tp + fp + fn_;
    Ok(if denom == 0 { 1.0 } else { tp as f64 / denom as f64 })
}

/// Mean IoU per threshold plus the best operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct IouCurve {
    pub thresholds: Vec<f64>,
    pub ious: Vec<f64>,
    pub best_tau: f64,
    pub best_iou: f64,
}

impl IouCurve {
    /// `tau,mean_iou` rows for the whole grid, then a `best_tau,best_iou`
    /// header and its single row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,mean_iou\n");
        for (t, i) in self.thresholds.iter().zip(&self.ious) {
            out.push_str(&format!("{t:.2},{i:.6}\n"));
        }
        out.push_str("best_tau,best_iou\n");
        out.push_str(&format!("{:.2},{:.6}\n", self.best_tau, self.best_iou));
        out
    }
}

/// Largest grid index `k` with `k/100 <= v`, computed with exact
/// float comparisons so boundary values land on the right side.
fn last_threshold_leq(v: f32) -> usize {
    let v = v as f64;
    let mut k = ((v * 100.0).floor() as isize).clamp(0, 100) as usize;
    while k + 1 < THRESHOLD_COUNT && (k + 1) as f64 / 100.0 <= v {
        k += 1;
    }
    while k > 0 && k as f64 / 100.0 > v {
        k -= 1;
    }
    k
}

/// Per-sample counts sufficient to evaluate IoU at every grid threshold.
struct SampleCounts {
    /// `pos[k]`: predicted-positive pixels at threshold `k` that are
    /// foreground in the ground truth.
    pos: Vec<u64>,
    /// `neg[k]`: predicted-positive pixels at threshold `k` that are
    /// background in the ground truth.
    neg: Vec<u64>,
    gt_ones: u64,
}

fn sample_counts(pred: &ProbMap, gt: &BinaryMask) -> Result<SampleCounts> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::DimMismatch(format!(
            "sweep sample {}x{} has ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut hist_pos = vec![0u64; THRESHOLD_COUNT];
    let mut hist_neg = vec![0u64; THRESHOLD_COUNT];
    let mut gt_ones = 0u64;
    for (&v, &g) in pred.data().iter().zip(gt.data()) {
        let k = last_threshold_leq(v);
        if g == 1 {
            hist_pos[k] += 1;
            gt_ones += 1;
        } else {
            hist_neg[k] += 1;
        }
    }
    // A pixel with value v is predicted positive at every tau <= v, so the
    // per-threshold counts are suffix sums of the histogram.
    let mut pos = vec![0u64; THRESHOLD_COUNT];
    let mut neg = vec![0u64; THRESHOLD_COUNT];
    let mut acc_p = 0u64;
    let mut acc_n = 0u64;
    for k in (0..THRESHOLD_COUNT).rev() {
        acc_p += hist_pos[k];
        acc_n += hist_neg[k];
        pos[k] = acc_p;
        neg[k] = acc_n;
    }
    Ok(SampleCounts {
        pos,
        neg,
        gt_ones,
    })
}

/// Sweeps the threshold grid over matched prediction/ground-truth pairs and
/// returns the mean IoU curve. CPU cost is one pass per sample plus the
/// grid, and results are exactly the per-threshold binarize-and-count
/// evaluation. Ties in the best IoU break toward the smaller threshold.
pub fn sweep(preds: &[ProbMap], gts: &[BinaryMask]) -> Result<IouCurve> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one sample".into()));
    }
    if preds.len() != gts.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    let counts: Vec<SampleCounts> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| sample_counts(p, g))
        .collect::<Result<_>>()?;

    let thresholds = threshold_grid();
    let mut ious = Vec::with_capacity(THRESHOLD_COUNT);
    for k in 0..THRESHOLD_COUNT {
        let mut sum = 0.0f64;
        for c in &counts {
            let tp = c.pos[k];
            let fp = c.neg[k];
            let fn_ = c.gt_ones - tp;
            let denom = tp + fp + fn_;
            sum += if denom == 0 { 1.0 } else { tp as f64 / denom as f64 };
        }
        ious.push(sum / counts.len() as f64);
    }
    let (best_idx, best_iou) = ious
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    Ok(IouCurve {
        best_tau: thresholds[best_idx],
        best_iou,
        thresholds,
        ious,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map_from(values: &[f32], h: usize, w: usize) -> ProbMap {
        ProbMap::new(Plane::from_vec(h, w, values.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn fuse_with_zeros_is_identity() {
        let a = map_from(&[0.1, 0.9, 0.5, 0.0], 2, 2);
        let z = ProbMap::constant(2, 2, 0.0).unwrap();
        assert_eq!(fuse_max(&a, &z).unwrap().data(), a.data());
        assert_eq!(fuse_max(&a, &a).unwrap().data(), a.data());
    }

    #[test]
    fn fuse_of_binary_maps_is_logical_or() {
        let a = map_from(&[1.0, 0.0, 1.0, 0.0], 2, 2);
        let b = map_from(&[1.0, 1.0, 0.0, 0.0], 2, 2);
        assert_eq!(fuse_max(&a, &b).unwrap().data(), &[1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn fuse_rejects_mismatched_dims() {
        let a = ProbMap::constant(2, 2, 0.5).unwrap();
        let b = ProbMap::constant(2, 3, 0.5).unwrap();
        assert!(fuse_max(&a, &b).is_err());
    }

    #[test]
    fn binarize_is_inclusive_at_the_threshold() {
        let m = map_from(&[0.0, 0.3, 0.5, 0.99], 2, 2);
        let at_zero = binarize(&m, 0.0).unwrap();
        assert_eq!(at_zero.count_ones(), 4, "every value >= 0");
        let at_half = binarize(&m, 0.5).unwrap();
        assert_eq!(at_half.data(), &[0, 0, 1, 1]);
        let at_one = binarize(&m, 1.0).unwrap();
        assert_eq!(at_one.count_ones(), 0);
        assert!(binarize(&m, 1.5).is_err());
    }

    #[test]
    fn iou_on_hand_computed_cases() {
        let gt = BinaryMask::from_fn(10, 10, |_, _| true).unwrap();
        let pred = BinaryMask::from_fn(10, 10, |_, x| x < 5).unwrap();
        assert_eq!(iou(&pred, &gt).unwrap(), 0.5);

        assert_eq!(iou(&gt, &gt).unwrap(), 1.0);

        let left = BinaryMask::from_fn(4, 4, |_, x| x < 2).unwrap();
        let right = BinaryMask::from_fn(4, 4, |_, x| x >= 2).unwrap();
        assert_eq!(iou(&left, &right).unwrap(), 0.0);

        let empty = BinaryMask::zeros(4, 4).unwrap();
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn iou_is_symmetric_and_bounded() {
        let a = BinaryMask::from_fn(8, 8, |y, x| (y * x) % 3 == 0).unwrap();
        let b = BinaryMask::from_fn(8, 8, |y, x| (y + x) % 2 == 0).unwrap();
        let ab = iou(&a, &b).unwrap();
        assert_eq!(ab, iou(&b, &a).unwrap());
        assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn exact_binary_prediction_sweeps_to_best_tau_of_0_01() {
        let gt = BinaryMask::from_fn(10, 10, |y, x| y < 3 && x < 4).unwrap();
        let pred = ProbMap::new(gt.to_plane()).unwrap();
        let curve = sweep(std::slice::from_ref(&pred), std::slice::from_ref(&gt)).unwrap();
        assert_eq!(curve.thresholds.len(), THRESHOLD_COUNT);
        // tau = 0 predicts everything positive.
        assert!((curve.ious[0] - 12.0 / 100.0).abs() < 1e-12);
        for k in 1..THRESHOLD_COUNT {
            assert_eq!(curve.ious[k], 1.0, "tau index {k}");
        }
        assert_eq!(curve.best_iou, 1.0);
        assert_eq!(curve.best_tau, 0.01, "ties break toward smaller tau");
    }

    #[test]
    fn constant_half_map_steps_at_the_half_threshold() {
        let gt = BinaryMask::from_fn(10, 10, |y, _| y < 2).unwrap(); // fraction 0.2
        let pred = ProbMap::constant(10, 10, 0.5).unwrap();
        let curve = sweep(std::slice::from_ref(&pred), std::slice::from_ref(&gt)).unwrap();
        for (k, &v) in curve.ious.iter().enumerate() {
            if k as f64 / 100.0 <= 0.5 {
                assert!((v - 0.2).abs() < 1e-12, "tau {k} gave {v}");
            } else {
                assert_eq!(v, 0.0, "tau {k}");
            }
        }
        assert!((curve.best_iou - 0.2).abs() < 1e-12);
        assert_eq!(curve.best_tau, 0.0);
    }

    #[test]
    fn two_sample_curve_is_the_mean_of_singletons() {
        let gt1 = BinaryMask::from_fn(6, 6, |y, x| y < 3 && x < 3).unwrap();
        let gt2 = BinaryMask::from_fn(6, 6, |y, _| y >= 4).unwrap();
        let p1 = map_from(
            &(0..36).map(|i| (i as f32) / 35.0).collect::<Vec<_>>(),
            6,
            6,
        );
        let p2 = ProbMap::constant(6, 6, 0.4).unwrap();

        let c1 = sweep(std::slice::from_ref(&p1), std::slice::from_ref(&gt1)).unwrap();
        let c2 = sweep(std::slice::from_ref(&p2), std::slice::from_ref(&gt2)).unwrap();
        let both = sweep(&[p1, p2], &[gt1, gt2]).unwrap();
        for k in 0..THRESHOLD_COUNT {
            assert!((both.ious[k] - 0.5 * (c1.ious[k] + c2.ious[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_rejects_empty_and_mismatched_input() {
        assert!(sweep(&[], &[]).is_err());
        let p = ProbMap::constant(2, 2, 0.5).unwrap();
        assert!(sweep(std::slice::from_ref(&p), &[]).is_err());
    }

    #[test]
    fn csv_has_101_rows_plus_summary() {
        let gt = BinaryMask::from_fn(4, 4, |y, _| y < 2).unwrap();
        let pred = ProbMap::new(gt.to_plane()).unwrap();
        let curve = sweep(std::slice::from_ref(&pred), std::slice::from_ref(&gt)).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + THRESHOLD_COUNT + 2);
        assert_eq!(lines[0], "tau,mean_iou");
        // tau = 0 predicts all 16 pixels positive against 8 true ones.
        assert_eq!(lines[1], "0.00,0.500000");
        assert_eq!(lines[THRESHOLD_COUNT + 1], "best_tau,best_iou");
    }

    proptest! {
        #[test]
        fn sweep_matches_naive_binarize_per_threshold(seed in 0u64..300) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(17);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 40) as f32 / ((1u64 << 24) as f32)
            };
            // Mix exact grid values and arbitrary ones to stress boundaries.
            let pred = ProbMap::new(Plane::from_fn(9, 9, |_, _| {
                let v = next();
                if v < 0.3 { (v * 100.0).round() / 100.0 } else { v }
            }).unwrap()).unwrap();
            let gt = BinaryMask::from_fn(9, 9, |_, _| next() > 0.5).unwrap();

            let curve = sweep(std::slice::from_ref(&pred), std::slice::from_ref(&gt)).unwrap();
            for (k, tau) in threshold_grid().into_iter().enumerate() {
                let mask = binarize(&pred, tau).unwrap();
                let direct = iou(&mask, &gt).unwrap();
                prop_assert!((curve.ious[k] - direct).abs() < 1e-12,
                    "tau {} sweep {} direct {}", tau, curve.ious[k], direct);
            }
        }

        #[test]
        fn positive_sets_shrink_as_tau_grows(seed in 0u64..100) {
            let mut state = seed.wrapping_add(3);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 40) as f32 / ((1u64 << 24) as f32)
            };
            let pred = ProbMap::new(Plane::from_fn(8, 8, |_, _| next()).unwrap()).unwrap();
            let mut prev = binarize(&pred, 0.0).unwrap();
            for tau in [0.1, 0.25, 0.5, 0.75, 1.0] {
                let cur = binarize(&pred, tau).unwrap();
                for (c, p) in cur.data().iter().zip(prev.data()) {
                    prop_assert!(c <= p, "positives must not grow with tau");
                }
                prev = cur;
            }
        }
    }
}
