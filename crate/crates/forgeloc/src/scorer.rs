//! Pluggable scoring backends.
//!
//! Pixel scorers map a patch to a per-pixel probability map (segmentation
//! role); tile scorers map a window to a single logit (classification role).
//! Built-in backends are deterministic; learned models attach through a
//! directory-based file protocol (see [`ExternalScorer`]).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{edge_energy_score, EdgeEnergyConfig};
use crate::io;
use crate::raster::{BinaryMask, CropRecord, ImageRgb, Plane, ProbMap};
use crate::tiler::{TileRect, WindowPlan};

/// Where a sliding window sits inside its padded frame.
#[derive(Debug, Clone, Copy)]
pub struct WindowCtx<'a> {
    pub index: usize,
    /// Top-left offset in padded coordinates.
    pub origin: (usize, usize),
    pub patch: usize,
    pub pad: &'a CropRecord,
}

fn with_window_index(e: Error, index: usize) -> Error {
    match e {
        Error::Protocol(m) => Error::Protocol(format!("window {index}: {m}")),
        Error::InvalidInput(m) => Error::InvalidInput(format!("window {index}: {m}")),
        Error::DimMismatch(m) => Error::DimMismatch(format!("window {index}: {m}")),
        other => other,
    }
}

/// Window-to-logit scorer.
pub trait TileScorer: Send + Sync {
    /// Scores one extracted window.
    fn score_tile(&self, tile: &ImageRgb, ctx: &WindowCtx) -> Result<f64>;

    /// Scores every window of a plan, one finite logit per window in plan
    /// order. The default extracts and scores windows in parallel; the
    /// fold order downstream does not depend on scoring order.
    fn score_windows(&self, img: &ImageRgb, plan: &WindowPlan) -> Result<Vec<f64>> {
        let patch = plan.patch;
        plan.windows()
            .par_iter()
            .enumerate()
            .map(|(index, &(y, x))| {
                let tile = img
                    .extract_padded(&plan.pad, y, x, patch, patch)
                    .map_err(|e| with_window_index(e, index))?;
                let ctx = WindowCtx {
                    index,
                    origin: (y, x),
                    patch,
                    pad: &plan.pad,
                };
                self.score_tile(&tile, &ctx)
                    .map_err(|e| with_window_index(e, index))
            })
            .collect()
    }
}

/// Patch-to-probability-map scorer.
pub trait PixelScorer: Send + Sync {
    /// Scores one tile; the output map has the tile's dimensions.
    fn score_patch(&self, patch: &ImageRgb, rect: &TileRect) -> Result<ProbMap>;

    /// Scores a batch of tiles. Built-ins run in parallel; external scorers
    /// issue one protocol round trip for the whole batch.
    fn score_batch(&self, patches: &[ImageRgb], rects: &[TileRect]) -> Result<Vec<ProbMap>> {
        patches
            .par_iter()
            .zip(rects.par_iter())
            .map(|(p, r)| self.score_patch(p, r))
            .collect()
    }

    /// External segmenters receive the stacked canvas instead of the bare
    /// tile; built-ins score tiles directly.
    fn consumes_canvas(&self) -> bool {
        false
    }
}

/// Fixed-logit tile scorer.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTileScorer {
    logit: f64,
}

impl ConstantTileScorer {
    pub fn new(logit: f64) -> Self {
        ConstantTileScorer { logit }
    }
}

impl TileScorer for ConstantTileScorer {
    fn score_tile(&self, _tile: &ImageRgb, _ctx: &WindowCtx) -> Result<f64> {
        Ok(self.logit)
    }

    fn score_windows(&self, _img: &ImageRgb, plan: &WindowPlan) -> Result<Vec<f64>> {
        Ok(vec![self.logit; plan.windows().len()])
    }
}

/// Ground-truth tile scorer: positive logit when at least `min_overlap` of
/// the window covers mask foreground, negative otherwise. Padded window
/// pixels map back to their source pixels through the plan's pad record.
#[derive(Debug, Clone)]
pub struct OracleTileScorer {
    mask: BinaryMask,
    magnitude: f64,
    min_overlap: f64,
}

impl OracleTileScorer {
    pub fn new(mask: BinaryMask) -> Self {
        OracleTileScorer {
            mask,
            magnitude: 8.0,
            min_overlap: 0.5,
        }
    }

    pub fn with_params(mask: BinaryMask, magnitude: f64, min_overlap: f64) -> Self {
        OracleTileScorer {
            mask,
            magnitude,
            min_overlap,
        }
    }
}

impl TileScorer for OracleTileScorer {
    fn score_tile(&self, _tile: &ImageRgb, ctx: &WindowCtx) -> Result<f64> {
        let ones = self
            .mask
            .count_ones_padded(ctx.pad, ctx.origin.0, ctx.origin.1, ctx.patch, ctx.patch)?;
        let frac = ones as f64 / (ctx.patch * ctx.patch) as f64;
        Ok(if frac >= self.min_overlap {
            self.magnitude
        } else {
            -self.magnitude
        })
    }

    fn score_windows(&self, _img: &ImageRgb, plan: &WindowPlan) -> Result<Vec<f64>> {
        let patch = plan.patch;
        plan.windows()
            .par_iter()
            .enumerate()
            .map(|(index, &(y, x))| {
                let ones = self
                    .mask
                    .count_ones_padded(&plan.pad, y, x, patch, patch)
                    .map_err(|e| with_window_index(e, index))?;
                let frac = ones as f64 / (patch * patch) as f64;
                Ok(if frac >= self.min_overlap {
                    self.magnitude
                } else {
                    -self.magnitude
                })
            })
            .collect()
    }
}

/// Fixed-probability pixel scorer.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPixelScorer {
    value: f32,
}

impl ConstantPixelScorer {
    pub fn new(value: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidInput(format!(
                "constant pixel score {value} outside [0,1]"
            )));
        }
        Ok(ConstantPixelScorer { value })
    }
}

impl PixelScorer for ConstantPixelScorer {
    fn score_patch(&self, patch: &ImageRgb, _rect: &TileRect) -> Result<ProbMap> {
        ProbMap::constant(patch.height(), patch.width(), self.value)
    }
}

/// Deterministic pixel scorer backed by the fixed filter bank.
#[derive(Debug, Clone, Copy, Default)]
pub struct EdgeEnergyScorer {
    pub cfg: EdgeEnergyConfig,
}

impl PixelScorer for EdgeEnergyScorer {
    fn score_patch(&self, patch: &ImageRgb, _rect: &TileRect) -> Result<ProbMap> {
        edge_energy_score(patch, &self.cfg)
    }
}

/// Ground-truth pixel scorer: returns the mask crop for the tile as `{0, 1}`.
#[derive(Debug, Clone)]
pub struct OraclePixelScorer {
    mask: BinaryMask,
}

impl OraclePixelScorer {
    pub fn new(mask: BinaryMask) -> Self {
        OraclePixelScorer { mask }
    }
}

impl PixelScorer for OraclePixelScorer {
    fn score_patch(&self, patch: &ImageRgb, rect: &TileRect) -> Result<ProbMap> {
        if patch.height() != rect.height || patch.width() != rect.width {
            return Err(Error::DimMismatch(format!(
                "tile is {}x{} but rect says {}x{}",
                patch.height(),
                patch.width(),
                rect.height,
                rect.width
            )));
        }
        if rect.y0 + rect.height > self.mask.height() || rect.x0 + rect.width > self.mask.width() {
            return Err(Error::InvalidInput(
                "tile rect exceeds oracle mask dimensions".into(),
            ));
        }
        let plane = Plane::from_fn(rect.height, rect.width, |y, x| {
            self.mask.get(rect.y0 + y, rect.x0 + x) as f32
        })?;
        Ok(ProbMap::new_unchecked(plane))
    }
}

/// Vertical stack `[image; mean-filled separator; replicated prior]` whose
/// total height is divisible by 32.
#[derive(Debug, Clone)]
pub struct TallCanvas {
    pub canvas: ImageRgb,
    pub image_h: usize,
    pub image_w: usize,
    pub sep_height: usize,
}

impl TallCanvas {
    pub fn total_h(&self) -> usize {
        2 * self.image_h + self.sep_height
    }

    pub fn image_band(&self) -> Result<ImageRgb> {
        self.canvas.extract_rect(0, 0, self.image_h, self.image_w)
    }

    /// `None` when no separator rows were needed.
    pub fn separator_band(&self) -> Result<Option<ImageRgb>> {
        if self.sep_height == 0 {
            return Ok(None);
        }
        self.canvas
            .extract_rect(self.image_h, 0, self.sep_height, self.image_w)
            .map(Some)
    }

    pub fn prior_band(&self) -> Result<ImageRgb> {
        self.canvas
            .extract_rect(self.image_h + self.sep_height, 0, self.image_h, self.image_w)
    }
}

/// Smallest separator height making `2H + s` divisible by 32.
pub fn separator_height(image_h: usize) -> usize {
    (32 - (2 * image_h) % 32) % 32
}

/// Stacks the image, a separator band of per-channel means, and the prior
/// replicated into all three channels.
pub fn build_tall_canvas(x: &ImageRgb, e: &ProbMap) -> Result<TallCanvas> {
    if x.height() != e.height() || x.width() != e.width() {
        return Err(Error::DimMismatch(format!(
            "image {}x{} and prior {}x{} differ",
            x.height(),
            x.width(),
            e.height(),
            e.width()
        )));
    }
    let (h, w) = (x.height(), x.width());
    let sep = separator_height(h);
    let means = x.channel_means();
    let total = 2 * h + sep;
    let band = |c: usize| -> Result<Plane> {
        let mut data = Vec::with_capacity(total * w);
        data.extend_from_slice(x.channel(c).data());
        data.extend(std::iter::repeat(means[c]).take(sep * w));
        data.extend_from_slice(e.data());
        Plane::from_vec(total, w, data)
    };
    let canvas = ImageRgb::from_planes([band(0)?, band(1)?, band(2)?])?;
    Ok(TallCanvas {
        canvas,
        image_h: h,
        image_w: w,
        sep_height: sep,
    })
}

/// Top-left crop of a canvas-resolution output back to the image band.
pub fn crop_logits(map: &Plane, h: usize, w: usize) -> Result<Plane> {
    if map.height() < h || map.width() < w {
        return Err(Error::DimMismatch(format!(
            "canvas output {}x{} smaller than requested crop {}x{}",
            map.height(),
            map.width(),
            h,
            w
        )));
    }
    map.extract_rect(0, 0, h, w)
}

/// [`crop_logits`] preserving the probability invariant.
pub fn crop_logits_prob(map: &ProbMap, h: usize, w: usize) -> Result<ProbMap> {
    Ok(ProbMap::new_unchecked(crop_logits(map.plane(), h, w)?))
}

// ---------------------------------------------------------------------------
// External scorer protocol
// ---------------------------------------------------------------------------
//
// Exchange layout, rooted at the handle's directory D:
//   D/req/manifest.txt   lines: `index filename height width`
//   D/req/NNNNN.png      request patches, 16-bit RGB PNG, round(v * 65535)
//   D/resp/scores.txt    tile scorers: lines `index logit`
//   D/resp/NNNNN.png     pixel scorers: 16-bit grayscale PNG per request
//
// The command is invoked with D appended to its argument list and must exit
// zero. Indices must be complete and unique; values must be finite.

/// Handle on an external scoring command. Requests are serialized: the
/// directory is not reentrant, so at most one batch is in flight per handle.
pub struct ExternalScorer {
    dir: PathBuf,
    command: Vec<String>,
    lock: Mutex<()>,
}

impl fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("dir", &self.dir)
            .field("command", &self.command)
            .finish()
    }
}

impl ExternalScorer {
    pub fn new(dir: impl Into<PathBuf>, command: &str) -> Result<Self> {
        let command: Vec<String> = command.split_whitespace().map(String::from).collect();
        if command.is_empty() {
            return Err(Error::InvalidInput("external scorer command is empty".into()));
        }
        Ok(ExternalScorer {
            dir: dir.into(),
            command,
            lock: Mutex::new(()),
        })
    }

    fn req_dir(&self) -> PathBuf {
        self.dir.join("req")
    }

    fn resp_dir(&self) -> PathBuf {
        self.dir.join("resp")
    }

    fn write_requests(&self, patches: &[&ImageRgb]) -> Result<()> {
        for d in [self.req_dir(), self.resp_dir()] {
            if d.exists() {
                fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            }
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let mut manifest = String::new();
        for (i, patch) in patches.iter().enumerate() {
            let name = format!("{i:05}.png");
            io::save_rgb16_png(patch, &self.req_dir().join(&name))?;
            manifest.push_str(&format!("{i} {name} {} {}\n", patch.height(), patch.width()));
        }
        let mpath = self.req_dir().join("manifest.txt");
        fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
    }

    fn invoke(&self) -> Result<()> {
        let mut cmd = Command::new(&self.command[0]);
        cmd.args(&self.command[1..]).arg(&self.dir);
        let output = cmd
            .output()
            .map_err(|e| Error::Protocol(format!("failed to launch {:?}: {e}", self.command[0])))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(Error::Protocol(format!(
                "scorer command exited with {:?}: {}",
                output.status.code(),
                stderr.trim()
            )));
        }
        Ok(())
    }

    fn read_tile_scores(&self, expected: usize) -> Result<Vec<f64>> {
        let path = self.resp_dir().join("scores.txt");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Protocol(format!("missing {}: {e}", path.display())))?;
        let mut scores: Vec<Option<f64>> = vec![None; expected];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let index: usize = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Protocol(format!("scores.txt line {}: bad index", lineno + 1)))?;
            let logit: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Protocol(format!("scores.txt line {}: bad logit", lineno + 1)))?;
            if index >= expected {
                return Err(Error::Protocol(format!(
                    "scores.txt names index {index}, batch has {expected} entries"
                )));
            }
            if !logit.is_finite() {
                return Err(Error::Protocol(format!("non-finite logit for index {index}")));
            }
            if scores[index].replace(logit).is_some() {
                return Err(Error::Protocol(format!("duplicate index {index} in scores.txt")));
            }
        }
        scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::Protocol(format!("missing index {i} in scores.txt"))))
            .collect()
    }

    fn read_pixel_maps(&self, dims: &[(usize, usize)]) -> Result<Vec<ProbMap>> {
        let mut maps = Vec::with_capacity(dims.len());
        for (i, &(h, w)) in dims.iter().enumerate() {
            let path = self.resp_dir().join(format!("{i:05}.png"));
            if !path.exists() {
                return Err(Error::Protocol(format!("missing response for index {i}")));
            }
            let map = io::load_prob_png16_strict(&path)?;
            if map.height() != h || map.width() != w {
                return Err(Error::Protocol(format!(
                    "response {i} is {}x{}, request was {h}x{w}",
                    map.height(),
                    map.width()
                )));
            }
            maps.push(map);
        }
        Ok(maps)
    }

    /// Full tile-mode exchange for one batch of patches.
    pub fn roundtrip_tile(&self, patches: &[&ImageRgb]) -> Result<Vec<f64>> {
        if patches.is_empty() {
            return Ok(Vec::new());
        }
        let _guard = self.lock.lock().unwrap();
        self.write_requests(patches)?;
        self.invoke()?;
        self.read_tile_scores(patches.len())
    }

    /// Full pixel-mode exchange for one batch of patches.
    pub fn roundtrip_pixel(&self, patches: &[&ImageRgb]) -> Result<Vec<ProbMap>> {
        if patches.is_empty() {
            return Ok(Vec::new());
        }
        let _guard = self.lock.lock().unwrap();
        self.write_requests(patches)?;
        self.invoke()?;
        let dims: Vec<(usize, usize)> = patches.iter().map(|p| (p.height(), p.width())).collect();
        self.read_pixel_maps(&dims)
    }
}

fn probe_patch() -> ImageRgb {
    ImageRgb::from_fn(8, 8, |_, _| [0.5, 0.5, 0.5]).expect("static dims")
}

/// External tile scorer; validated by a probe exchange at construction.
#[derive(Debug)]
pub struct ExternalTileScorer {
    inner: ExternalScorer,
    batch: usize,
}

impl ExternalTileScorer {
    pub fn new(dir: impl Into<PathBuf>, command: &str, batch: usize) -> Result<Self> {
        let inner = ExternalScorer::new(dir, command)?;
        let probe = probe_patch();
        let scores = inner.roundtrip_tile(&[&probe])?;
        if scores.len() != 1 {
            return Err(Error::Protocol("probe exchange returned no score".into()));
        }
        Ok(ExternalTileScorer {
            inner,
            batch: batch.max(1),
        })
    }

    pub fn handle(&self) -> &ExternalScorer {
        &self.inner
    }
}

impl TileScorer for ExternalTileScorer {
    fn score_tile(&self, tile: &ImageRgb, ctx: &WindowCtx) -> Result<f64> {
        let scores = self
            .inner
            .roundtrip_tile(&[tile])
            .map_err(|e| with_window_index(e, ctx.index))?;
        Ok(scores[0])
    }

    fn score_windows(&self, img: &ImageRgb, plan: &WindowPlan) -> Result<Vec<f64>> {
        let patch = plan.patch;
        let mut logits = Vec::with_capacity(plan.windows().len());
        for chunk in plan.windows().chunks(self.batch) {
            let tiles: Vec<ImageRgb> = chunk
                .par_iter()
                .map(|&(y, x)| img.extract_padded(&plan.pad, y, x, patch, patch))
                .collect::<Result<_>>()?;
            let refs: Vec<&ImageRgb> = tiles.iter().collect();
            let scores = self
                .inner
                .roundtrip_tile(&refs)
                .map_err(|e| with_window_index(e, logits.len()))?;
            logits.extend(scores);
        }
        Ok(logits)
    }
}

/// External pixel scorer; validated by a probe exchange at construction.
#[derive(Debug)]
pub struct ExternalPixelScorer {
    inner: ExternalScorer,
}

impl ExternalPixelScorer {
    pub fn new(dir: impl Into<PathBuf>, command: &str) -> Result<Self> {
        let inner = ExternalScorer::new(dir, command)?;
        let probe = probe_patch();
        let maps = inner.roundtrip_pixel(&[&probe])?;
        if maps.len() != 1 || maps[0].height() != 8 || maps[0].width() != 8 {
            return Err(Error::Protocol("probe exchange returned a bad map".into()));
        }
        Ok(ExternalPixelScorer { inner })
    }

    pub fn handle(&self) -> &ExternalScorer {
        &self.inner
    }
}

impl PixelScorer for ExternalPixelScorer {
    fn score_patch(&self, patch: &ImageRgb, _rect: &TileRect) -> Result<ProbMap> {
        let maps = self.inner.roundtrip_pixel(&[patch])?;
        Ok(maps.into_iter().next().expect("validated length"))
    }

    fn score_batch(&self, patches: &[ImageRgb], _rects: &[TileRect]) -> Result<Vec<ProbMap>> {
        let refs: Vec<&ImageRgb> = patches.iter().collect();
        self.inner.roundtrip_pixel(&refs)
    }

    fn consumes_canvas(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Spec strings
// ---------------------------------------------------------------------------

/// Parsed scorer selector: `constant:<v>`, `edge-energy`, `oracle`,
/// `oracle:<mask path>`, or `external:<dir>:<command>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Constant(f64),
    EdgeEnergy,
    /// `None` binds to the mask supplied per image (manifest runs).
    Oracle(Option<PathBuf>),
    External { dir: PathBuf, command: String },
}

impl FromStr for ScorerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "edge-energy" {
            return Ok(ScorerSpec::EdgeEnergy);
        }
        if s == "oracle" {
            return Ok(ScorerSpec::Oracle(None));
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            let v: f64 = rest
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad constant scorer value {rest:?}")))?;
            if !v.is_finite() {
                return Err(Error::InvalidInput("constant scorer value must be finite".into()));
            }
            return Ok(ScorerSpec::Constant(v));
        }
        if let Some(rest) = s.strip_prefix("oracle:") {
            if rest.is_empty() {
                return Ok(ScorerSpec::Oracle(None));
            }
            return Ok(ScorerSpec::Oracle(Some(PathBuf::from(rest))));
        }
        if let Some(rest) = s.strip_prefix("external:") {
            let (dir, command) = rest.split_once(':').ok_or_else(|| {
                Error::InvalidInput("external scorer spec is external:<dir>:<command>".into())
            })?;
            if dir.is_empty() || command.is_empty() {
                return Err(Error::InvalidInput(
                    "external scorer spec needs a directory and a command".into(),
                ));
            }
            return Ok(ScorerSpec::External {
                dir: PathBuf::from(dir),
                command: command.to_string(),
            });
        }
        Err(Error::InvalidInput(format!(
            "unknown scorer spec {s:?}; expected constant:<v>, edge-energy, oracle[:<mask>], or external:<dir>:<command>"
        )))
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Constant(v) => write!(f, "constant:{v}"),
            ScorerSpec::EdgeEnergy => write!(f, "edge-energy"),
            ScorerSpec::Oracle(None) => write!(f, "oracle"),
            ScorerSpec::Oracle(Some(p)) => write!(f, "oracle:{}", p.display()),
            ScorerSpec::External { dir, command } => {
                write!(f, "external:{}:{command}", dir.display())
            }
        }
    }
}

impl ScorerSpec {
    fn oracle_mask(&self, path: &Option<PathBuf>, fallback: Option<&BinaryMask>) -> Result<BinaryMask> {
        match (path, fallback) {
            (Some(p), _) => io::load_mask(p, io::DEFAULT_MASK_THRESHOLD),
            (None, Some(m)) => Ok(m.clone()),
            (None, None) => Err(Error::InvalidInput(
                "oracle scorer needs a mask path or a per-image mask".into(),
            )),
        }
    }

    /// Builds a pixel-level scorer. `fallback_mask` feeds bare `oracle`
    /// specs during manifest runs.
    pub fn resolve_pixel(&self, fallback_mask: Option<&BinaryMask>) -> Result<Box<dyn PixelScorer>> {
        Ok(match self {
            ScorerSpec::Constant(v) => Box::new(ConstantPixelScorer::new(*v as f32)?),
            ScorerSpec::EdgeEnergy => Box::new(EdgeEnergyScorer::default()),
            ScorerSpec::Oracle(path) => {
                Box::new(OraclePixelScorer::new(self.oracle_mask(path, fallback_mask)?))
            }
            ScorerSpec::External { dir, command } => {
                Box::new(ExternalPixelScorer::new(dir, command)?)
            }
        })
    }

    /// Builds a tile-level scorer.
    pub fn resolve_tile(
        &self,
        fallback_mask: Option<&BinaryMask>,
        batch: usize,
    ) -> Result<Box<dyn TileScorer>> {
        Ok(match self {
            ScorerSpec::Constant(v) => Box::new(ConstantTileScorer::new(*v)),
            ScorerSpec::EdgeEnergy => {
                return Err(Error::InvalidInput(
                    "edge-energy is a pixel-level scorer and cannot score tiles".into(),
                ))
            }
            ScorerSpec::Oracle(path) => {
                Box::new(OracleTileScorer::new(self.oracle_mask(path, fallback_mask)?))
            }
            ScorerSpec::External { dir, command } => {
                Box::new(ExternalTileScorer::new(dir, command, batch)?)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Bundled loopback command
// ---------------------------------------------------------------------------

/// What the bundled loopback command should answer with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopbackMode {
    /// Echo each request's red channel as a 16-bit probability map.
    Pixel,
    /// Emit logit 0 for every index.
    Tile,
}

/// Serves one protocol exchange in-process: reads `dir/req`, writes
/// `dir/resp`. `drop_index` deliberately omits one response, for testing
/// the engine's completeness checks.
pub fn run_loopback(dir: &Path, mode: LoopbackMode, drop_index: Option<usize>) -> Result<()> {
    let req = dir.join("req");
    let resp = dir.join("resp");
    fs::create_dir_all(&resp).map_err(|e| Error::io(&resp, e))?;
    let manifest_path = req.join("manifest.txt");
    let manifest =
        fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut scores = String::new();
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let index: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidInput(format!("bad manifest line {line:?}")))?;
        let name = parts
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("bad manifest line {line:?}")))?;
        if drop_index == Some(index) {
            continue;
        }
        match mode {
            LoopbackMode::Tile => {
                scores.push_str(&format!("{index} 0\n"));
            }
            LoopbackMode::Pixel => {
                let src = req.join(name);
                let img = image::open(&src).map_err(|e| Error::image(&src, e))?;
                let rgb16 = img.to_rgb16();
                let (w, h) = (rgb16.width(), rgb16.height());
                let gray: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
                    image::ImageBuffer::from_fn(w, h, |x, y| {
                        image::Luma([rgb16.get_pixel(x, y).0[0]])
                    });
                let dst = resp.join(format!("{index:05}.png"));
                gray.save(&dst).map_err(|e| Error::image(&dst, e))?;
            }
        }
    }
    if mode == LoopbackMode::Tile {
        let path = resp.join("scores.txt");
        fs::write(&path, scores).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
