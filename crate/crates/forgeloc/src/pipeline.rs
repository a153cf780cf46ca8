//! Full-pipeline orchestration: tiled pixel scoring, sliding-window
//! heatmapping, max fusion, thresholding, and dataset evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{binarize, fuse_max, iou, sweep, IouCurve};
use crate::features::{augment_edge_prior, EdgeAugConfig};
use crate::heatmap::{sh_heatmap, DEFAULT_EPSILON};
use crate::io::{load_image, load_mask, DEFAULT_MASK_THRESHOLD};
use crate::raster::{crop_back, BinaryMask, ImageRgb, Plane, ProbMap};
use crate::scorer::{
    build_tall_canvas, crop_logits_prob, PixelScorer, ScorerSpec, TileScorer,
};
use crate::tiler::{pad_to_multiple, pad_to_multiple_rgb, place_tile, plan_tiles, TileRect};

/// Geometry, scorers, and thresholds of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Upper bound on tile sides for the pixel branch.
    pub max_tile_side: usize,
    /// Sliding window side.
    pub patch: usize,
    /// Sliding window stride.
    pub stride: usize,
    /// Tiles sent to external segmenters are zero-padded to multiples of this.
    pub pad_multiple: usize,
    /// Binarization threshold of `localize`.
    pub tau: f64,
    pub egs_scorer: ScorerSpec,
    pub sh_scorer: ScorerSpec,
    /// Edge-prior source consumed by external pixel scorers.
    pub prior_scorer: ScorerSpec,
    /// Optional prior perturbation, applied per tile with a seed derived
    /// from the tile index.
    pub egs_aug: Option<EdgeAugConfig>,
    pub heatmap_epsilon: f64,
    /// Tiles processed (and external patches shipped) per batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_tile_side: 1024,
            patch: 336,
            stride: 112,
            pad_multiple: 32,
            tau: 0.5,
            egs_scorer: ScorerSpec::EdgeEnergy,
            // A strongly negative resting logit keeps the heatmap branch
            // quiet unless a real classifier is attached.
            sh_scorer: ScorerSpec::Constant(-8.0),
            prior_scorer: ScorerSpec::EdgeEnergy,
            egs_aug: None,
            heatmap_epsilon: DEFAULT_EPSILON,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_tile_side == 0 {
            return Err(Error::InvalidInput("max_tile_side must be >= 1".into()));
        }
        if self.patch < 2 {
            return Err(Error::InvalidInput("patch must be >= 2".into()));
        }
        if self.stride == 0 || self.stride > self.patch {
            return Err(Error::InvalidInput("stride must satisfy 1 <= stride <= patch".into()));
        }
        if self.pad_multiple == 0 {
            return Err(Error::InvalidInput("pad_multiple must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidInput(format!("tau {} outside [0,1]", self.tau)));
        }
        if self.heatmap_epsilon <= 0.0 {
            return Err(Error::InvalidInput("heatmap_epsilon must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn apply_setting(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidInput(format!("config {key}={value}: bad {what}"));
        match key {
            "max_tile_side" => self.max_tile_side = value.parse().map_err(|_| bad("integer"))?,
            "patch" => self.patch = value.parse().map_err(|_| bad("integer"))?,
            "stride" => self.stride = value.parse().map_err(|_| bad("integer"))?,
            "pad_multiple" => self.pad_multiple = value.parse().map_err(|_| bad("integer"))?,
            "tau" => self.tau = value.parse().map_err(|_| bad("number"))?,
            "egs_scorer" => self.egs_scorer = value.parse()?,
            "sh_scorer" => self.sh_scorer = value.parse()?,
            "prior_scorer" => self.prior_scorer = value.parse()?,
            "heatmap_epsilon" => self.heatmap_epsilon = value.parse().map_err(|_| bad("number"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "aug" => match value {
                "on" => {
                    self.egs_aug.get_or_insert_with(|| default_aug(self.seed));
                }
                "off" => self.egs_aug = None,
                _ => return Err(bad("value, expected on or off")),
            },
            "aug_blur_sigma" => {
                self.aug_mut().blur_sigma = value.parse().map_err(|_| bad("number"))?
            }
            "aug_temperature" => {
                self.aug_mut().temperature = value.parse().map_err(|_| bad("number"))?
            }
            "aug_breaks" => {
                self.aug_mut().break_count = value.parse().map_err(|_| bad("integer"))?
            }
            "aug_noise_low" => {
                self.aug_mut().noise_band.0 = value.parse().map_err(|_| bad("number"))?
            }
            "aug_noise_high" => {
                self.aug_mut().noise_band.1 = value.parse().map_err(|_| bad("number"))?
            }
            "aug_noise_amp" => {
                self.aug_mut().noise_amp = value.parse().map_err(|_| bad("number"))?
            }
            "aug_mix_prob" => {
                self.aug_mut().mix_prob = value.parse().map_err(|_| bad("number"))?
            }
            _ => return Err(Error::InvalidInput(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn aug_mut(&mut self) -> &mut EdgeAugConfig {
        let seed = self.seed;
        self.egs_aug.get_or_insert_with(|| default_aug(seed))
    }

    /// Loads `key=value` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{} line {}: expected key=value",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.apply_setting(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Instantiates the three scorers. `fallback_mask` feeds bare `oracle`
    /// specs (manifest runs supply the entry's own mask).
    pub fn resolve_scorers(&self, fallback_mask: Option<&BinaryMask>) -> Result<ResolvedScorers> {
        Ok(ResolvedScorers {
            egs: self.egs_scorer.resolve_pixel(fallback_mask)?,
            sh: self.sh_scorer.resolve_tile(fallback_mask, self.batch_size)?,
            prior: self.prior_scorer.resolve_pixel(fallback_mask)?,
        })
    }
}

fn default_aug(seed: u64) -> EdgeAugConfig {
    EdgeAugConfig {
        blur_sigma: 1.0,
        temperature: 1.5,
        break_count: 2,
        noise_band: (0.02, 0.25),
        noise_amp: 0.05,
        mix_prob: 0.1,
        rng_seed: seed,
    }
}

/// Concrete scorers backing one run.
pub struct ResolvedScorers {
    pub egs: Box<dyn PixelScorer>,
    pub sh: Box<dyn TileScorer>,
    pub prior: Box<dyn PixelScorer>,
}

/// All maps produced for one image.
#[derive(Debug, Clone)]
pub struct LocalizeOutput {
    pub p_egs: ProbMap,
    pub p_sh: ProbMap,
    pub p_fuse: ProbMap,
    pub mask: BinaryMask,
}

/// Runs both branches on one image, fuses them by pixel-wise max, and
/// thresholds at `cfg.tau`.
///
/// Takes the image by value so it can be released before fusion; peak raster
/// memory stays at the image plus the full-frame maps plus one tile batch.
pub fn localize(img: ImageRgb, scorers: &ResolvedScorers, cfg: &PipelineConfig) -> Result<LocalizeOutput> {
    cfg.validate()?;
    let p_egs = egs_branch(&img, scorers, cfg)?;
    let p_sh = sh_heatmap(&img, scorers.sh.as_ref(), cfg.patch, cfg.stride, cfg.heatmap_epsilon)?;
    drop(img);
    let p_fuse = fuse_max(&p_egs, &p_sh)?;
    let mask = binarize(&p_fuse, cfg.tau)?;
    Ok(LocalizeOutput {
        p_egs,
        p_sh,
        p_fuse,
        mask,
    })
}

/// Pixel branch: plan tiles, score each batch, and write results straight
/// into the stitched full-frame map.
fn egs_branch(img: &ImageRgb, scorers: &ResolvedScorers, cfg: &PipelineConfig) -> Result<ProbMap> {
    let plan = plan_tiles(img.height(), img.width(), cfg.max_tile_side)?;
    let mut out = Plane::zeros(img.height(), img.width())?;
    let canvas_mode = scorers.egs.consumes_canvas();

    for (chunk_idx, chunk) in plan.tiles().chunks(cfg.batch_size).enumerate() {
        let scored: Vec<(TileRect, ProbMap)> = if canvas_mode {
            score_canvas_batch(img, scorers, cfg, chunk, chunk_idx * cfg.batch_size)?
        } else {
            chunk
                .par_iter()
                .map(|rect| {
                    let tile = img.extract_rect(rect.y0, rect.x0, rect.height, rect.width)?;
                    let map = scorers.egs.score_patch(&tile, rect)?;
                    check_tile_map(&map, rect)?;
                    Ok((*rect, map))
                })
                .collect::<Result<_>>()?
        };
        for (rect, map) in &scored {
            place_tile(&mut out, rect, map.plane());
        }
    }
    Ok(ProbMap::new_unchecked(out))
}

/// External-segmenter path: compute the prior per tile, pad tile and prior
/// to the configured multiple, stack them into tall canvases, ship the batch
/// through the protocol, and crop the responses back to tile geometry.
fn score_canvas_batch(
    img: &ImageRgb,
    scorers: &ResolvedScorers,
    cfg: &PipelineConfig,
    chunk: &[TileRect],
    first_tile_index: usize,
) -> Result<Vec<(TileRect, ProbMap)>> {
    struct Prepared {
        rect: TileRect,
        canvas: ImageRgb,
        pad: crate::raster::CropRecord,
    }

    let prepared: Vec<Prepared> = chunk
        .par_iter()
        .enumerate()
        .map(|(i, rect)| {
            let tile = img.extract_rect(rect.y0, rect.x0, rect.height, rect.width)?;
            let mut prior = scorers.prior.score_patch(&tile, rect)?;
            check_tile_map(&prior, rect)?;
            if let Some(aug) = &cfg.egs_aug {
                let mut per_tile = *aug;
                per_tile.rng_seed = aug
                    .rng_seed
                    .wrapping_add((first_tile_index + i) as u64)
                    .wrapping_mul(0x9E3779B97F4A7C15);
                prior = augment_edge_prior(&prior, &per_tile)?;
            }
            let (tile_padded, pad) = pad_to_multiple_rgb(&tile, cfg.pad_multiple)?;
            let (prior_padded, _) = pad_to_multiple(prior.plane(), cfg.pad_multiple)?;
            let canvas = build_tall_canvas(&tile_padded, &ProbMap::new_unchecked(prior_padded))?;
            Ok(Prepared {
                rect: *rect,
                canvas: canvas.canvas,
                pad,
            })
        })
        .collect::<Result<_>>()?;

    let canvases: Vec<ImageRgb> = prepared.iter().map(|p| p.canvas.clone()).collect();
    let rects: Vec<TileRect> = prepared.iter().map(|p| p.rect).collect();
    let maps = scorers.egs.score_batch(&canvases, &rects)?;
    if maps.len() != prepared.len() {
        return Err(Error::Protocol(format!(
            "scorer returned {} maps for {} canvases",
            maps.len(),
            prepared.len()
        )));
    }

    prepared
        .into_iter()
        .zip(maps)
        .map(|(p, canvas_map)| {
            let band = crop_logits_prob(&canvas_map, p.pad.padded_h(), p.pad.padded_w())?;
            let tile_map = ProbMap::new_unchecked(crop_back(band.plane(), &p.pad)?);
            Ok((p.rect, tile_map))
        })
        .collect()
}

fn check_tile_map(map: &ProbMap, rect: &TileRect) -> Result<()> {
    if map.height() != rect.height || map.width() != rect.width {
        return Err(Error::DimMismatch(format!(
            "scorer returned {}x{} for a {}x{} tile",
            map.height(),
            map.width(),
            rect.height,
            rect.width
        )));
    }
    Ok(())
}

/// Dataset sample categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Category {
    #[serde(rename = "OR")]
    Original,
    #[serde(rename = "SP")]
    Spliced,
    #[serde(rename = "FR")]
    FullyRegenerated,
}

/// One dataset sample.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub category: Category,
}

/// JSON-lines dataset manifest; one object per line with keys `image`,
/// `mask` (optional), and `category`, paths resolved relative to the
/// manifest file.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    image: String,
    #[serde(default)]
    mask: Option<String>,
    category: Category,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let raw: RawEntry = serde_json::from_str(line).map_err(|e| {
                Error::InvalidInput(format!(
                    "{} line {}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let entry = ManifestEntry {
                image: base.join(&raw.image),
                mask: raw.mask.map(|m| base.join(m)),
                category: raw.category,
            };
            if entry.category == Category::Spliced && entry.mask.is_none() {
                return Err(Error::InvalidInput(format!(
                    "{} line {}: SP entries must carry a mask",
                    path.display(),
                    lineno + 1
                )));
            }
            entries.push(entry);
        }
        Ok(DatasetManifest { entries })
    }

    pub fn spliced(&self) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.category == Category::Spliced)
            .collect()
    }
}

/// IoU of one evaluated image at the best threshold.
#[derive(Debug, Clone)]
pub struct PerImageIou {
    pub image: PathBuf,
    pub iou: f64,
}

/// Threshold sweep over a dataset plus per-image results.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub curve: IouCurve,
    pub per_image: Vec<PerImageIou>,
}

/// Localizes every SP entry, sweeps the threshold grid over the fused maps,
/// and reports per-image IoU at the best threshold. OR and FR entries are
/// accepted but skipped. Fused maps are held in memory for the sweep, so
/// dataset size times image area bounds the footprint.
pub fn run_eval(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let sp = manifest.spliced();
    if sp.is_empty() {
        return Err(Error::InvalidInput("no SP samples in manifest".into()));
    }
    let mut fused = Vec::with_capacity(sp.len());
    let mut gts = Vec::with_capacity(sp.len());
    let mut images = Vec::with_capacity(sp.len());
    for entry in sp {
        let mask_path = entry.mask.as_ref().expect("validated at load");
        let gt = load_mask(mask_path, DEFAULT_MASK_THRESHOLD)?;
        let img = load_image(&entry.image)?;
        if img.height() != gt.height() || img.width() != gt.width() {
            return Err(Error::DimMismatch(format!(
                "{}: image {}x{} vs mask {}x{}",
                entry.image.display(),
                img.height(),
                img.width(),
                gt.height(),
                gt.width()
            )));
        }
        let scorers = cfg.resolve_scorers(Some(&gt))?;
        let output = localize(img, &scorers, cfg)?;
        fused.push(output.p_fuse);
        gts.push(gt);
        images.push(entry.image.clone());
    }
    let curve = sweep(&fused, &gts)?;
    let per_image = images
        .into_iter()
        .zip(fused.iter().zip(&gts))
        .map(|(image, (pred, gt))| {
            let mask = binarize(pred, curve.best_tau)?;
            Ok(PerImageIou {
                image,
                iou: iou(&mask, gt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { curve, per_image })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::sigmoid;
    use std::io::Write;

    fn checker_image(h: usize, w: usize) -> ImageRgb {
        ImageRgb::from_fn(h, w, |y, x| {
            let v = ((y / 4 + x / 4) % 2) as f32 * 0.6 + 0.2;
            [v, v * 0.9, v * 0.8]
        })
        .unwrap()
    }

    fn block_mask(h: usize, w: usize, y0: usize, x0: usize, bh: usize, bw: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |y, x| {
            (y0..y0 + bh).contains(&y) && (x0..x0 + bw).contains(&x)
        })
        .unwrap()
    }

    fn oracle_config(tile_logit: f64) -> PipelineConfig {
        PipelineConfig {
            max_tile_side: 64,
            patch: 48,
            stride: 16,
            egs_scorer: ScorerSpec::Oracle(None),
            sh_scorer: ScorerSpec::Constant(tile_logit),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn oracle_pixel_scorer_recovers_ground_truth_exactly() {
        let gt = block_mask(150, 140, 40, 30, 50, 60);
        let cfg = oracle_config(-8.0);
        let scorers = cfg.resolve_scorers(Some(&gt)).unwrap();
        let out = localize(checker_image(150, 140), &scorers, &cfg).unwrap();
        // Stitched oracle tiles reproduce the mask bit for bit.
        for y in 0..150 {
            for x in 0..140 {
                assert_eq!(out.p_egs.get(y, x), gt.get(y, x) as f32);
            }
        }
        assert_eq!(iou(&out.mask, &gt).unwrap(), 1.0);
    }

    #[test]
    fn quiet_scorers_produce_an_empty_mask() {
        let cfg = PipelineConfig {
            max_tile_side: 64,
            patch: 48,
            stride: 16,
            egs_scorer: ScorerSpec::Constant(0.0),
            sh_scorer: ScorerSpec::Constant(-8.0),
            ..PipelineConfig::default()
        };
        let scorers = cfg.resolve_scorers(None).unwrap();
        let out = localize(checker_image(100, 90), &scorers, &cfg).unwrap();
        assert_eq!(out.mask.count_ones(), 0);
        let sh = sigmoid(-8.0) as f32;
        assert!(out.p_fuse.data().iter().all(|&v| (v - sh).abs() < 1e-6));
    }

    #[test]
    fn manifest_loads_and_validates_sp_masks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.jsonl");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, r#"{{"image": "a.png", "mask": "a_m.png", "category": "SP"}}"#).unwrap();
        writeln!(f, r#"{{"image": "b.png", "category": "OR"}}"#).unwrap();
        writeln!(f, r#"{{"image": "c.png", "category": "FR"}}"#).unwrap();
        drop(f);
        let manifest = DatasetManifest::load(&path).unwrap();
        assert_eq!(manifest.entries.len(), 3);
        assert_eq!(manifest.spliced().len(), 1);
        assert_eq!(manifest.entries[0].image, dir.path().join("a.png"));

        let bad = dir.path().join("bad.jsonl");
        fs::write(&bad, r#"{"image": "x.png", "category": "SP"}"#).unwrap();
        assert!(DatasetManifest::load(&bad).is_err());
    }

    #[test]
    fn eval_requires_sp_entries() {
        let manifest = DatasetManifest {
            entries: vec![ManifestEntry {
                image: "x.png".into(),
                mask: None,
                category: Category::Original,
            }],
        };
        let err = run_eval(&manifest, &PipelineConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no SP samples"));
    }

    #[test]
    fn config_settings_apply_and_reject_unknown_keys() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_setting("patch", "64").unwrap();
        cfg.apply_setting("stride", "32").unwrap();
        cfg.apply_setting("tau", "0.25").unwrap();
        cfg.apply_setting("egs_scorer", "constant:0.3").unwrap();
        cfg.apply_setting("aug", "on").unwrap();
        cfg.apply_setting("aug_temperature", "2.0").unwrap();
        assert_eq!(cfg.patch, 64);
        assert_eq!(cfg.tau, 0.25);
        assert_eq!(cfg.egs_aug.unwrap().temperature, 2.0);
        assert!(cfg.apply_setting("bogus", "1").is_err());
    }

    #[test]
    fn config_file_round_trips_key_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "# geometry\npatch = 96\nstride=48\nsh_scorer = constant:-2\n",
        )
        .unwrap();
        let cfg = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(cfg.patch, 96);
        assert_eq!(cfg.stride, 48);
        assert_eq!(cfg.sh_scorer, ScorerSpec::Constant(-2.0));
    }

    #[test]
    fn identical_entries_average_to_the_single_entry_curve() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("img.png");
        let mask_path = dir.path().join("mask.png");
        let img = checker_image(96, 96);
        let gt = block_mask(96, 96, 20, 20, 40, 40);
        crate::io::save_mask_png(&gt, &mask_path).unwrap();
        // Encode the image through the 8-bit PNG writer.
        let buf: image::RgbImage = image::ImageBuffer::from_fn(96, 96, |x, y| {
            let px = img.get(y as usize, x as usize);
            image::Rgb([
                (px[0] * 255.0).round() as u8,
                (px[1] * 255.0).round() as u8,
                (px[2] * 255.0).round() as u8,
            ])
        });
        buf.save(&img_path).unwrap();

        let single = DatasetManifest {
            entries: vec![ManifestEntry {
                image: img_path.clone(),
                mask: Some(mask_path.clone()),
                category: Category::Spliced,
            }],
        };
        let double = DatasetManifest {
            entries: vec![
                single.entries[0].clone(),
                single.entries[0].clone(),
            ],
        };
        let cfg = oracle_config(-8.0);
        let one = run_eval(&single, &cfg).unwrap();
        let two = run_eval(&double, &cfg).unwrap();
        assert_eq!(one.curve.ious, two.curve.ious);
        assert_eq!(one.curve.best_iou, 1.0);
        assert_eq!(two.per_image.len(), 2);
    }
}
