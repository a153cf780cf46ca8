//! Sliding-window logit accumulation with smooth window weighting.
//!
//! Per-window logits are spread over their support with a Hann taper, summed
//! into 64-bit logit and weight accumulators, and finalized as
//! `H = sigmoid(S / max(W, eps))` followed by cropping the padding away.
//! Window scoring may run in parallel; accumulation always folds in window
//! order, so the output is identical for any worker count.

use crate::error::{Error, Result};
use crate::mem::TrackedVec;
use crate::raster::{crop_back, CropRecord, ImageRgb, Plane, ProbMap, MAX_PROB_BELOW_ONE};
use crate::scorer::TileScorer;
use crate::tiler::{plan_windows, WindowPlan};

/// Logits are clamped to this magnitude before accumulation to keep the
/// logistic well-conditioned.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Weight floor of the finalization ratio.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Separable 2D Hann taper with unit peak.
#[derive(Debug, Clone)]
pub struct Window2D {
    size: usize,
    weights: Vec<f64>,
}

impl Window2D {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn weight(&self, y: usize, x: usize) -> f64 {
        self.weights[y * self.size + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.weights[y * self.size..(y + 1) * self.size]
    }
}

/// Builds the 2D Hann window `w1[n] = 0.5 (1 - cos(2 pi n / (p - 1)))` as an
/// outer product, normalized so the peak is exactly 1.
///
/// `p = 2` makes the raw Hann identically zero; that degenerate case falls
/// back to uniform unit weights.
pub fn hann_window(p: usize) -> Result<Window2D> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("window size must be >= 2, got {p}")));
    }
    let mut w1 = Vec::with_capacity(p);
    // Compute one half and mirror it so the taper is exactly symmetric.
    for n in 0..(p + 1) / 2 {
        let phase = 2.0 * std::f64::consts::PI * n as f64 / (p - 1) as f64;
        w1.push(0.5 * (1.0 - phase.cos()));
    }
    for n in (p + 1) / 2..p {
        w1.push(w1[p - 1 - n]);
    }
    let peak = w1.iter().copied().fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Ok(Window2D {
            size: p,
            weights: vec![1.0; p * p],
        });
    }
    for v in &mut w1 {
        *v /= peak;
    }
    let mut weights = Vec::with_capacity(p * p);
    for wy in &w1 {
        for wx in &w1 {
            weights.push(wy * wx);
        }
    }
    Ok(Window2D { size: p, weights })
}

/// Full-frame 64-bit logit and weight sums over padded coordinates.
#[derive(Debug)]
pub struct Accumulator {
    height: usize,
    width: usize,
    logit_sum: TrackedVec<f64>,
    weight_sum: TrackedVec<f64>,
}

impl Accumulator {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("accumulator needs positive dims".into()));
        }
        Ok(Accumulator {
            height,
            width,
            logit_sum: TrackedVec::filled(0.0, height * width),
            weight_sum: TrackedVec::filled(0.0, height * width),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn logit_sum_at(&self, y: usize, x: usize) -> f64 {
        self.logit_sum[y * self.width + x]
    }

    #[inline]
    pub fn weight_sum_at(&self, y: usize, x: usize) -> f64 {
        self.weight_sum[y * self.width + x]
    }

    /// Adds one window's weighted logit over its support. Call in window
    /// plan order for reproducible sums.
    pub fn accumulate(&mut self, origin: (usize, usize), logit: f64, window: &Window2D) -> Result<()> {
        let p = window.size();
        let (y0, x0) = origin;
        if y0 + p > self.height || x0 + p > self.width {
            return Err(Error::InvalidInput(format!(
                "window at ({y0},{x0}) size {p} exceeds accumulator {}x{}",
                self.height, self.width
            )));
        }
        if !logit.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite logit {logit}")));
        }
        let logit = logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        for dy in 0..p {
            let row = window.row(dy);
            let base = (y0 + dy) * self.width + x0;
            let s = &mut self.logit_sum[base..base + p];
            let w = &mut self.weight_sum[base..base + p];
            for i in 0..p {
                s[i] += logit * row[i];
                w[i] += row[i];
            }
        }
        Ok(())
    }

    /// `H = sigmoid(S / max(W, eps))`, cropped back to the original frame.
    pub fn finalize(&self, epsilon: f64, crop: &CropRecord) -> Result<ProbMap> {
        if crop.padded_h() != self.height || crop.padded_w() != self.width {
            return Err(Error::DimMismatch(format!(
                "accumulator is {}x{}, crop record expects padded {}x{}",
                self.height,
                self.width,
                crop.padded_h(),
                crop.padded_w()
            )));
        }
        let mut plane = Plane::zeros(self.height, self.width)?;
        for (i, out) in plane.data_mut().iter_mut().enumerate() {
            *out = probability(self.logit_sum[i], self.weight_sum[i], epsilon);
        }
        let cropped = crop_back(&plane, crop)?;
        Ok(ProbMap::new_unchecked(cropped))
    }
}

#[inline]
fn probability(logit_sum: f64, weight_sum: f64, epsilon: f64) -> f32 {
    let h = sigmoid(logit_sum / weight_sum.max(epsilon)) as f32;
    h.min(MAX_PROB_BELOW_ONE).max(f32::MIN_POSITIVE)
}

/// Dense heatmap over the whole image: plan windows, score each one, blend
/// with a Hann taper, finalize, and crop back to the input frame.
///
/// Accumulation streams over bands of `patch` rows so memory stays
/// proportional to the image plus one band, not two full 64-bit frames; the
/// result is bit-identical to accumulating into a full [`Accumulator`].
pub fn sh_heatmap(
    img: &ImageRgb,
    scorer: &dyn TileScorer,
    patch: usize,
    stride: usize,
    epsilon: f64,
) -> Result<ProbMap> {
    let plan = plan_windows(img.height(), img.width(), patch, stride)?;
    let window = hann_window(patch)?;
    let logits = scorer.score_windows(img, &plan)?;
    heatmap_from_logits(&plan, &window, &logits, epsilon)
}

/// Blends precomputed per-window logits into the final heatmap.
pub fn heatmap_from_logits(
    plan: &WindowPlan,
    window: &Window2D,
    logits: &[f64],
    epsilon: f64,
) -> Result<ProbMap> {
    if logits.len() != plan.windows().len() {
        return Err(Error::DimMismatch(format!(
            "{} logits for {} windows",
            logits.len(),
            plan.windows().len()
        )));
    }
    if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit {bad}")));
    }
    let p = plan.patch;
    if window.size() != p {
        return Err(Error::DimMismatch("window size differs from plan patch".into()));
    }
    let stride = plan.stride;
    let (ph, pw) = (plan.padded_h(), plan.padded_w());
    let (ny, nx) = (plan.window_rows(), plan.windows_per_row());
    let pad = &plan.pad;

    let mut out = Plane::zeros(plan.image_h, plan.image_w)?;
    let mut band_s = TrackedVec::filled(0.0f64, p * pw);
    let mut band_w = TrackedVec::filled(0.0f64, p * pw);
    let mut base = 0usize; // padded row the band starts at

    for gy in 0..ny {
        debug_assert_eq!(base, gy * stride);
        for gx in 0..nx {
            let logit = logits[gy * nx + gx].clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            let x0 = gx * stride;
            for dy in 0..p {
                let wrow = window.row(dy);
                let row_base = dy * pw + x0;
                let s = &mut band_s[row_base..row_base + p];
                let w = &mut band_w[row_base..row_base + p];
                for i in 0..p {
                    s[i] += logit * wrow[i];
                    w[i] += wrow[i];
                }
            }
        }

        let completed = if gy + 1 < ny { stride } else { p };
        for dy in 0..completed {
            let padded_y = base + dy;
            if padded_y < pad.pad_top || padded_y >= pad.pad_top + plan.image_h {
                continue;
            }
            let y = padded_y - pad.pad_top;
            let s_row = &band_s[dy * pw..(dy + 1) * pw];
            let w_row = &band_w[dy * pw..(dy + 1) * pw];
            let out_row = out.row_mut(y);
            for x in 0..plan.image_w {
                let px = pad.pad_left + x;
                out_row[x] = probability(s_row[px], w_row[px], epsilon);
            }
        }

        if gy + 1 < ny {
            band_s.copy_within(stride * pw.., 0);
            band_w.copy_within(stride * pw.., 0);
            band_s[(p - stride) * pw..].fill(0.0);
            band_w[(p - stride) * pw..].fill(0.0);
            base += stride;
        }
    }
    let _ = (ph, pw);
    Ok(ProbMap::new_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PadMode;
    use crate::scorer::ConstantTileScorer;

    #[test]
    fn hann_window_of_five_matches_closed_form() {
        let w = hann_window(5).unwrap();
        // 1D taps are [0, 0.5, 1, 0.5, 0] up to cosine rounding.
        assert_eq!(w.weight(2, 2), 1.0);
        assert_eq!(w.weight(0, 0), 0.0);
        assert_eq!(w.weight(0, 4), 0.0);
        assert!((w.weight(2, 1) - 0.5).abs() < 1e-12);
        assert!((w.weight(1, 1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hann_peak_is_exactly_one_for_even_and_odd_sizes() {
        for p in [2usize, 3, 4, 5, 6, 16, 17, 336] {
            let w = hann_window(p).unwrap();
            let peak = (0..p)
                .flat_map(|y| (0..p).map(move |x| (y, x)))
                .map(|(y, x)| w.weight(y, x))
                .fold(0.0f64, f64::max);
            assert_eq!(peak, 1.0, "p = {p}");
        }
        assert!(hann_window(1).is_err());
    }

    #[test]
    fn hann_is_point_symmetric() {
        let p = 12;
        let w = hann_window(p).unwrap();
        for y in 0..p {
            for x in 0..p {
                assert_eq!(w.weight(y, x), w.weight(p - 1 - y, p - 1 - x));
            }
        }
    }

    #[test]
    fn single_window_accumulates_scaled_weights() {
        let w = hann_window(8).unwrap();
        let mut acc = Accumulator::new(8, 8).unwrap();
        acc.accumulate((0, 0), 2.0, &w).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(acc.logit_sum_at(y, x), 2.0 * w.weight(y, x));
                assert_eq!(acc.weight_sum_at(y, x), w.weight(y, x));
            }
        }
    }

    #[test]
    fn overlapping_equal_windows_average_their_logits() {
        let w = hann_window(8).unwrap();
        let mut acc = Accumulator::new(8, 8).unwrap();
        acc.accumulate((0, 0), 3.0, &w).unwrap();
        acc.accumulate((0, 0), -1.0, &w).unwrap();
        let crop = CropRecord::identity(8, 8);
        let h = acc.finalize(DEFAULT_EPSILON, &crop).unwrap();
        let expect = sigmoid((3.0 - 1.0) / 2.0) as f32;
        for y in 0..8 {
            for x in 0..8 {
                if acc.weight_sum_at(y, x) >= DEFAULT_EPSILON {
                    assert!((h.get(y, x) - expect).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_logits_finalize_to_one_half_everywhere() {
        let acc = Accumulator::new(6, 7).unwrap();
        let h = acc
            .finalize(DEFAULT_EPSILON, &CropRecord::identity(6, 7))
            .unwrap();
        assert!(h.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn full_frame_window_finalizes_to_sigmoid_of_logit() {
        let w = hann_window(16).unwrap();
        let mut acc = Accumulator::new(16, 16).unwrap();
        acc.accumulate((0, 0), 4.0, &w).unwrap();
        let h = acc
            .finalize(DEFAULT_EPSILON, &CropRecord::identity(16, 16))
            .unwrap();
        let expect = sigmoid(4.0) as f32;
        assert!((expect - 0.9820138).abs() < 1e-6);
        for y in 0..16 {
            for x in 0..16 {
                if acc.weight_sum_at(y, x) >= DEFAULT_EPSILON {
                    assert!((h.get(y, x) - expect).abs() < 1e-6);
                } else {
                    // Hann zeros at the window border fall back to the
                    // epsilon ratio.
                    assert_eq!(h.get(y, x), 0.5);
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_window_is_rejected() {
        let w = hann_window(8).unwrap();
        let mut acc = Accumulator::new(8, 8).unwrap();
        assert!(acc.accumulate((1, 0), 0.0, &w).is_err());
    }

    #[test]
    fn finalize_crops_back_to_original_dims() {
        let w = hann_window(8).unwrap();
        let crop = CropRecord {
            original_h: 5,
            original_w: 6,
            pad_top: 2,
            pad_bottom: 1,
            pad_left: 1,
            pad_right: 1,
            mode: PadMode::Reflect,
        };
        let mut acc = Accumulator::new(8, 8).unwrap();
        acc.accumulate((0, 0), 1.0, &w).unwrap();
        let h = acc.finalize(DEFAULT_EPSILON, &crop).unwrap();
        assert_eq!((h.height(), h.width()), (5, 6));
    }

    #[test]
    fn streaming_heatmap_matches_full_accumulator_bit_for_bit() {
        let img = ImageRgb::from_fn(57, 43, |y, x| {
            let v = ((y * 13 + x * 7) % 29) as f32 / 28.0;
            [v, v * 0.5, 1.0 - v]
        })
        .unwrap();
        let plan = plan_windows(57, 43, 16, 8).unwrap();
        let window = hann_window(16).unwrap();
        let logits: Vec<f64> = (0..plan.windows().len())
            .map(|i| ((i * 2654435761) % 17) as f64 - 8.0)
            .collect();

        let streamed = heatmap_from_logits(&plan, &window, &logits, DEFAULT_EPSILON).unwrap();

        let mut acc = Accumulator::new(plan.padded_h(), plan.padded_w()).unwrap();
        for (&origin, &logit) in plan.windows().iter().zip(&logits) {
            acc.accumulate(origin, logit, &window).unwrap();
        }
        let full = acc.finalize(DEFAULT_EPSILON, &plan.pad).unwrap();

        assert_eq!(streamed.data(), full.data());
        let _ = img;
    }

    #[test]
    fn constant_zero_scorer_yields_exactly_one_half() {
        let img = ImageRgb::from_fn(100, 150, |y, x| {
            let v = ((y + x) % 11) as f32 / 10.0;
            [v, v, v]
        })
        .unwrap();
        let scorer = ConstantTileScorer::new(0.0);
        let h = sh_heatmap(&img, &scorer, 48, 16, DEFAULT_EPSILON).unwrap();
        assert_eq!((h.height(), h.width()), (100, 150));
        assert!(h.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn image_smaller_than_patch_gives_constant_heatmap() {
        let img = ImageRgb::from_fn(100, 100, |y, x| {
            let v = ((y * x) % 5) as f32 / 4.0;
            [v, 1.0 - v, v]
        })
        .unwrap();
        let scorer = ConstantTileScorer::new(3.0);
        let h = sh_heatmap(&img, &scorer, 336, 112, DEFAULT_EPSILON).unwrap();
        assert_eq!((h.height(), h.width()), (100, 100));
        let expect = sigmoid(3.0) as f32;
        for &v in h.data() {
            assert!((v - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn heatmap_range_is_strictly_inside_unit_interval() {
        let img = ImageRgb::from_fn(64, 64, |_, _| [0.4, 0.2, 0.8]).unwrap();
        for logit in [-500.0, 500.0] {
            let scorer = ConstantTileScorer::new(logit);
            let h = sh_heatmap(&img, &scorer, 32, 16, DEFAULT_EPSILON).unwrap();
            for &v in h.data() {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }
}
