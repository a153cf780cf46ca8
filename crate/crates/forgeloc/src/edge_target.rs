//! Soft multi-scale edge targets from binary masks.
//!
//! The morphological gradient `Dilate(M; s) - Erode(M; s)` is taken with a
//! disk structuring element at several radii, each band is Gaussian-smoothed
//! with sigma proportional to its radius, and the summed map is normalized by
//! its maximum plus a small epsilon.
//!
//! Border convention: pixels outside the frame count as background for both
//! dilation and erosion, so a full-frame mask still produces a boundary ring
//! at the frame edge.

use crate::error::{Error, Result};
use crate::features::gaussian_blur;
use crate::raster::{BinaryMask, Plane, ProbMap};

/// Multi-scale target parameters.
#[derive(Debug, Clone)]
pub struct EdgeTargetConfig {
    /// Disk radii, positive and distinct.
    pub radii: Vec<usize>,
    /// Sigma slope: the band at radius `s` is smoothed with `sigma = lambda * s`.
    pub lambda: f64,
    /// Normalization epsilon.
    pub epsilon: f32,
}

impl Default for EdgeTargetConfig {
    fn default() -> Self {
        EdgeTargetConfig {
            radii: vec![3, 7, 15],
            lambda: 0.5,
            epsilon: 1e-6,
        }
    }
}

impl EdgeTargetConfig {
    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidInput("edge target needs at least one radius".into()));
        }
        if self.radii.iter().any(|&r| r == 0) {
            return Err(Error::InvalidInput("edge target radii must be >= 1".into()));
        }
        let mut sorted = self.radii.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.radii.len() {
            return Err(Error::InvalidInput("edge target radii must be distinct".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidInput("lambda must be > 0".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidInput("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Disk chord half-widths: index `r + dy` holds the largest `k` with
/// `dy^2 + k^2 <= r^2`.
fn disk_chords(radius: usize) -> Vec<usize> {
    let r2 = (radius * radius) as i64;
    (-(radius as i64)..=radius as i64)
        .map(|dy| {
            let rem = r2 - dy * dy;
            let mut k = (rem as f64).sqrt() as i64;
            while (k + 1) * (k + 1) <= rem {
                k += 1;
            }
            while k * k > rem {
                k -= 1;
            }
            k as usize
        })
        .collect()
}

/// Per-row cumulative counts: `pre[y][x]` is the number of ones in
/// `mask[y][0..x]`.
fn row_prefix_sums(mask: &BinaryMask) -> Vec<Vec<u32>> {
    let (h, w) = (mask.height(), mask.width());
    let mut pre = Vec::with_capacity(h);
    for y in 0..h {
        let mut row = Vec::with_capacity(w + 1);
        row.push(0u32);
        let mut acc = 0u32;
        for x in 0..w {
            acc += mask.get(y, x) as u32;
            row.push(acc);
        }
        pre.push(row);
    }
    pre
}

/// Morphological dilation with a disk of the given radius.
pub fn dilate(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::InvalidInput("dilation radius must be >= 1".into()));
    }
    let (h, w) = (mask.height(), mask.width());
    let chords = disk_chords(radius);
    let pre = row_prefix_sums(mask);
    let r = radius as isize;
    BinaryMask::from_fn(h, w, |y, x| {
        for dy in -r..=r {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let k = chords[(dy + r) as usize] as isize;
            let a = (x as isize - k).max(0) as usize;
            let b = ((x as isize + k + 1).min(w as isize)) as usize;
            if pre[sy as usize][b] > pre[sy as usize][a] {
                return true;
            }
        }
        false
    })
}

/// Morphological erosion with a disk of the given radius. Out-of-frame
/// pixels count as background, so the disk must fit inside the frame.
pub fn erode(mask: &BinaryMask, radius: usize) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::InvalidInput("erosion radius must be >= 1".into()));
    }
    let (h, w) = (mask.height(), mask.width());
    let chords = disk_chords(radius);
    let pre = row_prefix_sums(mask);
    let r = radius as isize;
    BinaryMask::from_fn(h, w, |y, x| {
        for dy in -r..=r {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                return false;
            }
            let k = chords[(dy + r) as usize] as isize;
            let a = x as isize - k;
            let b = x as isize + k + 1;
            if a < 0 || b > w as isize {
                return false;
            }
            let need = (b - a) as u32;
            if pre[sy as usize][b as usize] - pre[sy as usize][a as usize] != need {
                return false;
            }
        }
        true
    })
}

/// Gaussian-smoothed multi-scale morphological gradient, normalized by the
/// maximum of the summed map plus epsilon. Always in `[0, 1)`; identically
/// zero masks produce identically zero targets.
pub fn soft_edge_target(mask: &BinaryMask, cfg: &EdgeTargetConfig) -> Result<ProbMap> {
    cfg.validate()?;
    let (h, w) = (mask.height(), mask.width());
    let mut sum = Plane::zeros(h, w)?;
    for &radius in &cfg.radii {
        let d = dilate(mask, radius)?;
        let e = erode(mask, radius)?;
        let mut band = Plane::zeros(h, w)?;
        for (i, out) in band.data_mut().iter_mut().enumerate() {
            *out = (d.data()[i] - e.data()[i]) as f32;
        }
        let smoothed = gaussian_blur(&band, cfg.lambda * radius as f64);
        for (dst, src) in sum.data_mut().iter_mut().zip(smoothed.data()) {
            *dst += src;
        }
    }
    let peak = sum.max_value();
    if peak > 0.0 {
        let denom = peak + cfg.epsilon;
        for v in sum.data_mut() {
            *v = (*v / denom).clamp(0.0, 1.0);
        }
    } else {
        sum.data_mut().fill(0.0);
    }
    Ok(ProbMap::new_unchecked(sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
        let (h, w) = (mask.height(), mask.width());
        let r = radius as isize;
        BinaryMask::from_fn(h, w, |y, x| {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dy * dy + dx * dx > r * r {
                        continue;
                    }
                    let (sy, sx) = (y as isize + dy, x as isize + dx);
                    if sy >= 0
                        && sy < h as isize
                        && sx >= 0
                        && sx < w as isize
                        && mask.get(sy as usize, sx as usize) == 1
                    {
                        return true;
                    }
                }
            }
            false
        })
        .unwrap()
    }

    fn brute_erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
        let (h, w) = (mask.height(), mask.width());
        let r = radius as isize;
        BinaryMask::from_fn(h, w, |y, x| {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dy * dy + dx * dx > r * r {
                        continue;
                    }
                    let (sy, sx) = (y as isize + dy, x as isize + dx);
                    if sy < 0
                        || sy >= h as isize
                        || sx < 0
                        || sx >= w as isize
                        || mask.get(sy as usize, sx as usize) == 0
                    {
                        return false;
                    }
                }
            }
            true
        })
        .unwrap()
    }

    #[test]
    fn empty_mask_maps_to_empty_everything() {
        let mask = BinaryMask::zeros(16, 16).unwrap();
        assert_eq!(dilate(&mask, 3).unwrap().count_ones(), 0);
        assert_eq!(erode(&mask, 3).unwrap().count_ones(), 0);
        let target = soft_edge_target(&mask, &EdgeTargetConfig::default()).unwrap();
        assert!(target.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_dilates_to_29_pixel_disk() {
        let mut mask = BinaryMask::zeros(11, 11).unwrap();
        mask.set(5, 5, true);
        let d = dilate(&mask, 3).unwrap();
        assert_eq!(d.count_ones(), 29);
        assert_eq!(d, brute_dilate(&mask, 3));
        assert_eq!(erode(&mask, 3).unwrap().count_ones(), 0);
    }

    #[test]
    fn full_mask_erodes_its_border_ring() {
        let mask = BinaryMask::from_fn(8, 8, |_, _| true).unwrap();
        let d = dilate(&mask, 1).unwrap();
        assert_eq!(d.count_ones(), 64);
        let e = erode(&mask, 1).unwrap();
        assert_eq!(e, brute_erode(&mask, 1));
        assert_eq!(e.count_ones(), 36, "1-px ring lost under outside-as-zero");
        for i in 0..8 {
            assert_eq!(e.get(0, i), 0);
            assert_eq!(e.get(i, 7), 0);
        }
    }

    #[test]
    fn center_pixel_target_is_radially_symmetric_band() {
        let mut mask = BinaryMask::zeros(64, 64).unwrap();
        mask.set(32, 32, true);
        let cfg = EdgeTargetConfig::default();
        let target = soft_edge_target(&mask, &cfg).unwrap();
        let peak = target.plane().max_value();
        assert!(peak > 0.9 && peak < 1.0, "peak {peak}");
        // Radial symmetry across the four axis directions.
        for d in 1..20usize {
            let v = [
                target.get(32 + d, 32),
                target.get(32 - d, 32),
                target.get(32, 32 + d),
                target.get(32, 32 - d),
            ];
            for pair in v.windows(2) {
                assert!((pair[0] - pair[1]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn half_plane_target_is_a_vertical_band_constant_in_y() {
        let (h, w) = (128usize, 64usize);
        let mask = BinaryMask::from_fn(h, w, |_, x| x < 32).unwrap();
        let cfg = EdgeTargetConfig::default();
        let target = soft_edge_target(&mask, &cfg).unwrap();
        // Frame-border effects reach max radius + blur radius rows inward;
        // beyond that the band is constant along y.
        let reach = 15 + (3.0f64 * cfg.lambda * 15.0).ceil() as usize;
        for x in 0..w {
            let v = target.get(h / 2, x);
            for y in reach + 1..h - reach - 1 {
                assert!((target.get(y, x) - v).abs() < 1e-6, "({y},{x})");
            }
        }
        let band = target.get(64, 31).max(target.get(64, 32));
        assert!(band > target.get(64, 8));
        assert!(band > target.get(64, 56));
        // Flipping the mask left-right flips the target.
        let flipped = BinaryMask::from_fn(h, w, |y, x| mask.get(y, w - 1 - x) == 1).unwrap();
        let t_flipped = soft_edge_target(&flipped, &cfg).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert!((t_flipped.get(y, x) - target.get(y, w - 1 - x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn nonzero_support_stays_near_the_boundary() {
        let mask = BinaryMask::from_fn(96, 96, |y, x| (24..72).contains(&y) && (24..72).contains(&x))
            .unwrap();
        let cfg = EdgeTargetConfig::default();
        let target = soft_edge_target(&mask, &cfg).unwrap();
        let max_s = *cfg.radii.iter().max().unwrap();
        let reach = max_s as f64 + (3.0 * cfg.lambda * max_s as f64).ceil();
        let boundary: Vec<(usize, usize)> = {
            let d = dilate(&mask, 1).unwrap();
            let e = erode(&mask, 1).unwrap();
            (0..96)
                .flat_map(|y| (0..96).map(move |x| (y, x)))
                .filter(|&(y, x)| d.get(y, x) == 1 && e.get(y, x) == 0)
                .collect()
        };
        for y in 0..96 {
            for x in 0..96 {
                if target.get(y, x) > 0.0 {
                    let dist = boundary
                        .iter()
                        .map(|&(by, bx)| {
                            let dy = y as f64 - by as f64;
                            let dx = x as f64 - bx as f64;
                            (dy * dy + dx * dx).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min);
                    assert!(dist <= reach + 1.0, "pixel ({y},{x}) at distance {dist}");
                }
            }
        }
    }

    fn random_mask(h: usize, w: usize, seed: u64) -> BinaryMask {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        BinaryMask::from_fn(h, w, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 61) & 1 == 1
        })
        .unwrap()
    }

    #[test]
    fn chord_morphology_matches_brute_force() {
        for seed in 0..6u64 {
            let mask = random_mask(32, 24, seed);
            for radius in [1, 2, 3, 5] {
                assert_eq!(dilate(&mask, radius).unwrap(), brute_dilate(&mask, radius));
                assert_eq!(erode(&mask, radius).unwrap(), brute_erode(&mask, radius));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn target_commutes_with_flips_and_rotation(seed in 0u64..5000) {
            let mask = random_mask(24, 24, seed);
            let cfg = EdgeTargetConfig { radii: vec![2, 4], lambda: 0.5, epsilon: 1e-6 };
            let target = soft_edge_target(&mask, &cfg).unwrap();

            let flipped = BinaryMask::from_fn(24, 24, |y, x| mask.get(y, 23 - x) == 1).unwrap();
            let t_flipped = soft_edge_target(&flipped, &cfg).unwrap();
            for y in 0..24 {
                for x in 0..24 {
                    prop_assert!((t_flipped.get(y, x) - target.get(y, 23 - x)).abs() < 1e-6);
                }
            }

            let rotated = BinaryMask::from_fn(24, 24, |y, x| mask.get(23 - x, y) == 1).unwrap();
            let t_rotated = soft_edge_target(&rotated, &cfg).unwrap();
            for y in 0..24 {
                for x in 0..24 {
                    prop_assert!((t_rotated.get(y, x) - target.get(23 - x, y)).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn target_range_is_unit_interval_open_above(seed in 0u64..5000) {
            let mask = random_mask(20, 28, seed);
            let target = soft_edge_target(&mask, &EdgeTargetConfig::default()).unwrap();
            for &v in target.data() {
                prop_assert!((0.0..1.0).contains(&v));
            }
        }
    }
}
