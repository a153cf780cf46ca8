//! Fixed, non-learnable filter bank: high-pass residuals, noise-residual
//! kernels on luminance, Sobel/Laplacian gradients, the deterministic
//! edge-energy scorer built on top of them, and edge-prior augmentation.
//!
//! All kernels are zero-sum difference operators, so every response on a
//! constant image is exactly zero. Convolutions use a reflect border
//! (mirrored without repeating the edge sample) and 64-bit accumulation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{GrayImage, ImageRgb, Plane, ProbMap, MAX_PROB_BELOW_ONE};

/// Integer-numerator kernel with a single divisor. Evaluating as
/// `sum(n_i * x_i) / d` keeps constant-input responses exactly zero because
/// the integer numerators cancel before any division happens.
struct IntKernel {
    name: &'static str,
    size: usize,
    numer: &'static [i64],
    divisor: f64,
}

const SOBEL_H: IntKernel = IntKernel {
    name: "sobel-horizontal",
    size: 3,
    numer: &[-1, 0, 1, -2, 0, 2, -1, 0, 1],
    divisor: 1.0,
};

const SOBEL_V: IntKernel = IntKernel {
    name: "sobel-vertical",
    size: 3,
    numer: &[-1, -2, -1, 0, 0, 0, 1, 2, 1],
    divisor: 1.0,
};

const LAPLACIAN: IntKernel = IntKernel {
    name: "laplacian",
    size: 3,
    numer: &[0, 1, 0, 1, -4, 1, 0, 1, 0],
    divisor: 1.0,
};

const SRM_FIRST_ORDER: IntKernel = IntKernel {
    name: "srm-first-order-horizontal",
    size: 3,
    numer: &[0, 0, 0, 1, -2, 1, 0, 0, 0],
    divisor: 2.0,
};

const SRM_KB: IntKernel = IntKernel {
    name: "srm-kb",
    size: 3,
    numer: &[-1, 2, -1, 2, -4, 2, -1, 2, -1],
    divisor: 4.0,
};

const SRM_SQUARE5: IntKernel = IntKernel {
    name: "srm-square5",
    size: 5,
    numer: &[
        -1, 2, -2, 2, -1, //
        2, -6, 8, -6, 2, //
        -2, 8, -12, 8, -2, //
        2, -6, 8, -6, 2, //
        -1, 2, -2, 2, -1,
    ],
    divisor: 12.0,
};

/// Mirror index into `[0, n)` without repeating the edge sample, folding as
/// many times as needed.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = (2 * (n - 1)) as isize;
    let mut j = i.rem_euclid(period);
    if j as usize >= n {
        j = period - j;
    }
    j as usize
}

fn apply_int_kernel(src: &Plane, kernel: &IntKernel) -> Plane {
    let (h, w) = (src.height(), src.width());
    let r = (kernel.size / 2) as isize;
    let data = src.data();
    // Sparse taps with flat offsets for the interior fast path.
    let taps: Vec<(isize, isize, f64)> = (0..kernel.size * kernel.size)
        .filter(|&k| kernel.numer[k] != 0)
        .map(|k| {
            let dy = (k / kernel.size) as isize - r;
            let dx = (k % kernel.size) as isize - r;
            (dy, dx, kernel.numer[k] as f64)
        })
        .collect();
    let offsets: Vec<(isize, f64)> = taps
        .iter()
        .map(|&(dy, dx, n)| (dy * w as isize + dx, n))
        .collect();

    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        let row_interior = y >= r && y + r < h as isize;
        for x in 0..w as isize {
            let mut acc = 0.0f64;
            if row_interior && x >= r && x + r < w as isize {
                let base = y * w as isize + x;
                for &(off, n) in &offsets {
                    acc += n * data[(base + off) as usize] as f64;
                }
            } else {
                for &(dy, dx, n) in &taps {
                    let sy = mirror(y + dy, h);
                    let sx = mirror(x + dx, w);
                    acc += n * src.get(sy, sx) as f64;
                }
            }
            out.push((acc / kernel.divisor) as f32);
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}

/// Normalized 1D Gaussian taps with radius `ceil(3 sigma)`.
pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as usize;
    let mut taps = Vec::with_capacity(2 * radius + 1);
    for i in -(radius as isize)..=(radius as isize) {
        taps.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with reflect border.
pub(crate) fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let (h, w) = (src.height(), src.width());

    let mut rows = vec![0.0f32; h * w];
    for y in 0..h {
        let row = src.row(y);
        for x in 0..w as isize {
            let mut acc = 0.0f64;
            if x >= r && x + r < w as isize {
                let base = (x - r) as usize;
                for (k, t) in taps.iter().enumerate() {
                    acc += t * row[base + k] as f64;
                }
            } else {
                for (k, t) in taps.iter().enumerate() {
                    acc += t * row[mirror(x + k as isize - r, w)] as f64;
                }
            }
            rows[y * w + x as usize] = acc as f32;
        }
    }

    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        let col_interior = y >= r && y + r < h as isize;
        for x in 0..w {
            let mut acc = 0.0f64;
            if col_interior {
                let base = (y - r) as usize * w + x;
                for (k, t) in taps.iter().enumerate() {
                    acc += t * rows[base + k * w] as f64;
                }
            } else {
                for (k, t) in taps.iter().enumerate() {
                    acc += t * rows[mirror(y + k as isize - r, h) * w + x] as f64;
                }
            }
            out.push(acc as f32);
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}

/// High-pass residual of one channel: the input minus its Gaussian blur,
/// evaluated as a single zero-sum kernel `delta - G` in centered form
/// `sum k_i (x_i - x_center)` so constant inputs give exactly zero.
fn high_pass_plane(src: &Plane, taps: &[f64]) -> Plane {
    let r = (taps.len() / 2) as isize;
    let (h, w) = (src.height(), src.width());
    // One widening pass keeps the hot loop in pure f64.
    let wide = crate::mem::TrackedVec::from_vec(
        src.data().iter().map(|&v| v as f64).collect::<Vec<f64>>(),
    );
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        let row_interior = y >= r && y + r < h as isize;
        for x in 0..w as isize {
            let center = wide[(y * w as isize + x) as usize];
            // sum of -g_ij (x_ij - x_c); the +1 delta tap contributes zero.
            let mut acc = 0.0f64;
            if row_interior && x >= r && x + r < w as isize {
                for (ky, ty) in taps.iter().enumerate() {
                    let base = ((y + ky as isize - r) * w as isize + x - r) as usize;
                    let row = &wide[base..base + taps.len()];
                    let mut rsum = 0.0f64;
                    for (tx, v) in taps.iter().zip(row) {
                        rsum += tx * (v - center);
                    }
                    acc -= ty * rsum;
                }
            } else {
                for (ky, ty) in taps.iter().enumerate() {
                    let sy = mirror(y + ky as isize - r, h);
                    let mut rsum = 0.0f64;
                    for (kx, tx) in taps.iter().enumerate() {
                        let sx = mirror(x + kx as isize - r, w);
                        rsum += tx * (wide[sy * w + sx] - center);
                    }
                    acc -= ty * rsum;
                }
            }
            out.push(acc as f32);
        }
    }
    Plane::from_vec(h, w, out).expect("dims preserved")
}

/// Per-channel high-pass residuals `I - Blur_sigma(I)`.
pub fn high_pass_residual(img: &ImageRgb, sigma: f64) -> Result<[Plane; 3]> {
    if sigma <= 0.0 {
        return Err(Error::InvalidInput(format!("blur sigma must be > 0, got {sigma}")));
    }
    let taps = gaussian_taps(sigma);
    Ok([
        high_pass_plane(img.channel(0), &taps),
        high_pass_plane(img.channel(1), &taps),
        high_pass_plane(img.channel(2), &taps),
    ])
}

/// The three fixed noise-residual kernels applied to luminance:
/// first-order horizontal predictor (/2), the 3x3 second-order kernel (/4),
/// and the 5x5 square kernel (/12).
pub fn srm_residuals(luma: &GrayImage) -> [Plane; 3] {
    [
        apply_int_kernel(luma.plane(), &SRM_FIRST_ORDER),
        apply_int_kernel(luma.plane(), &SRM_KB),
        apply_int_kernel(luma.plane(), &SRM_SQUARE5),
    ]
}

/// Sobel and Laplacian responses on luminance.
#[derive(Debug, Clone)]
pub struct GradientStack {
    /// Horizontal derivative (x direction).
    pub sobel_h: Plane,
    /// Vertical derivative (y direction).
    pub sobel_v: Plane,
    /// `sqrt(sobel_h^2 + sobel_v^2)`.
    pub magnitude: Plane,
    pub laplacian: Plane,
}

impl GradientStack {
    pub fn planes(&self) -> [&Plane; 4] {
        [&self.sobel_h, &self.sobel_v, &self.magnitude, &self.laplacian]
    }
}

pub fn gradient_features(luma: &GrayImage) -> GradientStack {
    let sobel_h = apply_int_kernel(luma.plane(), &SOBEL_H);
    let sobel_v = apply_int_kernel(luma.plane(), &SOBEL_V);
    let (h, w) = (luma.height(), luma.width());
    let mut mag = Vec::with_capacity(h * w);
    for (a, b) in sobel_h.data().iter().zip(sobel_v.data()) {
        mag.push(((*a as f64).powi(2) + (*b as f64).powi(2)).sqrt() as f32);
    }
    GradientStack {
        sobel_h,
        sobel_v,
        magnitude: Plane::from_vec(h, w, mag).expect("dims preserved"),
        laplacian: apply_int_kernel(luma.plane(), &LAPLACIAN),
    }
}

/// High-pass residuals per channel plus noise residuals on luminance.
#[derive(Debug, Clone)]
pub struct ResidualStack {
    /// `[hp_r, hp_g, hp_b, srm_first_order, srm_kb, srm_square5]`
    pub planes: [Plane; 6],
}

impl ResidualStack {
    pub fn planes(&self) -> [&Plane; 6] {
        let p = &self.planes;
        [&p[0], &p[1], &p[2], &p[3], &p[4], &p[5]]
    }
}

pub fn residual_stack(img: &ImageRgb, luma: &GrayImage, sigma: f64) -> Result<ResidualStack> {
    let [hp_r, hp_g, hp_b] = high_pass_residual(img, sigma)?;
    let [s1, s2, s3] = srm_residuals(luma);
    Ok(ResidualStack {
        planes: [hp_r, hp_g, hp_b, s1, s2, s3],
    })
}

/// Parameters of the built-in deterministic edge scorer.
#[derive(Debug, Clone, Copy)]
pub struct EdgeEnergyConfig {
    /// Response gain; larger values saturate faster.
    pub beta: f64,
    /// Sigma of the high-pass blur.
    pub hp_sigma: f64,
}

impl Default for EdgeEnergyConfig {
    fn default() -> Self {
        EdgeEnergyConfig {
            beta: 4.0,
            hp_sigma: 1.5,
        }
    }
}

/// Deterministic edge evidence: `E = 1 - exp(-beta * z)` where `z` is the
/// per-pixel L2 norm across all ten residual and gradient planes.
pub fn edge_energy_score(patch: &ImageRgb, cfg: &EdgeEnergyConfig) -> Result<ProbMap> {
    if cfg.beta <= 0.0 {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {}", cfg.beta)));
    }
    let luma = crate::raster::to_luminance(patch);
    let residual = residual_stack(patch, &luma, cfg.hp_sigma)?;
    let gradient = gradient_features(&luma);
    let (h, w) = (patch.height(), patch.width());

    let mut planes: Vec<&Plane> = Vec::with_capacity(10);
    planes.extend(residual.planes());
    planes.extend(gradient.planes());

    let mut out = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let mut sq = 0.0f64;
        for p in &planes {
            let v = p.data()[i] as f64;
            sq += v * v;
        }
        let e = 1.0 - (-cfg.beta * sq.sqrt()).exp();
        out.push((e as f32).min(MAX_PROB_BELOW_ONE).max(0.0));
    }
    Ok(ProbMap::new_unchecked(Plane::from_vec(h, w, out)?))
}

/// Kernel coefficients as plain text for audit.
pub fn dump_kernels(hp_sigma: f64) -> String {
    let mut out = String::new();
    for k in [
        &SOBEL_H,
        &SOBEL_V,
        &LAPLACIAN,
        &SRM_FIRST_ORDER,
        &SRM_KB,
        &SRM_SQUARE5,
    ] {
        out.push_str(&format!("kernel {} divisor {}\n", k.name, k.divisor));
        for row in k.numer.chunks(k.size) {
            let cells: Vec<String> = row.iter().map(|n| n.to_string()).collect();
            out.push_str(&format!("  {}\n", cells.join(" ")));
        }
    }
    let taps = gaussian_taps(hp_sigma);
    out.push_str(&format!(
        "kernel high-pass (delta minus separable gaussian) sigma {hp_sigma} radius {}\n  1d taps:",
        taps.len() / 2
    ));
    for t in &taps {
        out.push_str(&format!(" {t:.9}"));
    }
    out.push('\n');
    out
}

/// Perturbation settings for edge priors.
#[derive(Debug, Clone, Copy)]
pub struct EdgeAugConfig {
    /// Gaussian blur sigma; 0 disables the blur.
    pub blur_sigma: f64,
    /// Softening temperature; must be >= 1, and 1 disables softening.
    pub temperature: f64,
    /// Number of zeroed strips.
    pub break_count: usize,
    /// Band of the added noise in cycles/pixel, `0 <= low < high <= 0.5`.
    pub noise_band: (f64, f64),
    /// Peak amplitude of the added noise; 0 disables it.
    pub noise_amp: f64,
    /// Per-block probability of background mixing.
    pub mix_prob: f64,
    pub rng_seed: u64,
}

impl EdgeAugConfig {
    /// A configuration that leaves the map untouched.
    pub fn identity(seed: u64) -> Self {
        EdgeAugConfig {
            blur_sigma: 0.0,
            temperature: 1.0,
            break_count: 0,
            noise_band: (0.02, 0.25),
            noise_amp: 0.0,
            mix_prob: 0.0,
            rng_seed: seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.blur_sigma < 0.0 {
            return Err(Error::InvalidInput("blur_sigma must be >= 0".into()));
        }
        if self.temperature < 1.0 {
            return Err(Error::InvalidInput("temperature must be >= 1".into()));
        }
        if self.noise_amp < 0.0 || self.noise_amp > 1.0 {
            return Err(Error::InvalidInput("noise_amp must be in [0,1]".into()));
        }
        if self.noise_amp > 0.0 {
            let (lo, hi) = self.noise_band;
            if !(0.0..0.5).contains(&lo) || hi <= lo || hi > 0.5 {
                return Err(Error::InvalidInput(format!(
                    "noise band must satisfy 0 <= low < high <= 0.5, got ({lo}, {hi})"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.mix_prob) {
            return Err(Error::InvalidInput("mix_prob must be in [0,1]".into()));
        }
        Ok(())
    }
}

const BLOCK: usize = 16;
const MIX_FRACTION: f32 = 0.3;
const SOFT_CLAMP: f64 = 1e-6;

/// Applies, in fixed order: temperature softening, Gaussian blur, segment
/// breaks, band-limited noise, and per-block background mixing. Byte-exact
/// reproducible for a given seed; exact 0 and 1 samples pass through the
/// softening unchanged.
pub fn augment_edge_prior(map: &ProbMap, cfg: &EdgeAugConfig) -> Result<ProbMap> {
    cfg.validate()?;
    let (h, w) = (map.height(), map.width());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut plane = map.plane().clone();

    if cfg.temperature > 1.0 {
        let t = cfg.temperature;
        for v in plane.data_mut() {
            if *v > 0.0 && *v < 1.0 {
                let p = (*v as f64).clamp(SOFT_CLAMP, 1.0 - SOFT_CLAMP);
                let logit = (p / (1.0 - p)).ln();
                *v = (1.0 / (1.0 + (-logit / t).exp())) as f32;
            }
        }
    }

    if cfg.blur_sigma > 0.0 {
        plane = gaussian_blur(&plane, cfg.blur_sigma);
    }

    if cfg.break_count > 0 {
        let candidates: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| plane.get(y, x) > 0.5)
            .collect();
        if !candidates.is_empty() {
            for _ in 0..cfg.break_count {
                let &(cy, cx) = &candidates[rng.gen_range(0..candidates.len())];
                let horizontal = rng.gen_bool(0.5);
                let width = rng.gen_range(1..=3usize);
                let offset = (width - 1) / 2;
                if horizontal {
                    let start = cy.saturating_sub(offset);
                    for y in start..(start + width).min(h) {
                        plane.row_mut(y).fill(0.0);
                    }
                } else {
                    let start = cx.saturating_sub(offset);
                    for y in 0..h {
                        for x in start..(start + width).min(w) {
                            plane.set(y, x, 0.0);
                        }
                    }
                }
            }
        }
    }

    if cfg.noise_amp > 0.0 {
        let mut noise = Plane::zeros(h, w)?;
        for v in noise.data_mut() {
            *v = rng.gen_range(-1.0f32..1.0);
        }
        let (lo, hi) = cfg.noise_band;
        // Difference of Gaussians approximates the pass band; sigma pairs
        // with cutoff frequency as 1/(2 pi f).
        let smoothed = gaussian_blur(&noise, 1.0 / (2.0 * std::f64::consts::PI * hi));
        let band = if lo > 0.0 {
            let coarse = gaussian_blur(&noise, 1.0 / (2.0 * std::f64::consts::PI * lo));
            let data = smoothed
                .data()
                .iter()
                .zip(coarse.data())
                .map(|(a, b)| a - b)
                .collect();
            Plane::from_vec(h, w, data)?
        } else {
            smoothed
        };
        let peak = band.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            let scale = cfg.noise_amp as f32 / peak;
            for (dst, src) in plane.data_mut().iter_mut().zip(band.data()) {
                *dst += src * scale;
            }
        }
    }

    if cfg.mix_prob > 0.0 {
        for by in (0..h).step_by(BLOCK) {
            for bx in (0..w).step_by(BLOCK) {
                if !rng.gen_bool(cfg.mix_prob) {
                    continue;
                }
                let bh = BLOCK.min(h - by);
                let bw = BLOCK.min(w - bx);
                let mut values = Vec::with_capacity(bh * bw);
                for y in by..by + bh {
                    values.extend_from_slice(&plane.row(y)[bx..bx + bw]);
                }
                let mut shuffled = values.clone();
                shuffled.shuffle(&mut rng);
                for (i, s) in shuffled.iter().enumerate() {
                    let (y, x) = (by + i / bw, bx + i % bw);
                    let old = plane.get(y, x);
                    plane.set(y, x, (1.0 - MIX_FRACTION) * old + MIX_FRACTION * s);
                }
            }
        }
    }

    for v in plane.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(ProbMap::new_unchecked(plane))
}
