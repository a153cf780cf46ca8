//! Full dual-branch run on a synthetic spliced pair: tiled pixel scoring,
//! sliding-window heatmapping, max fusion, and thresholding.
//!
//! Usage: cargo run --example localize_synthetic

use std::path::Path;

use forgeloc::eval::iou;
use forgeloc::pipeline::{localize, PipelineConfig};
use forgeloc::raster::{BinaryMask, ImageRgb};
use forgeloc::scorer::ScorerSpec;
use forgeloc::{io, Result};

const OUT_DIR: &str = "target/examples-out/localize_synthetic";

fn main() -> Result<()> {
    let out = Path::new(OUT_DIR);
    std::fs::create_dir_all(out).map_err(|e| forgeloc::Error::io(out, e))?;

    let (h, w) = (1400, 1100);
    // Textured background with a smooth "inpainted" disk pasted on top.
    let gt = BinaryMask::from_fn(h, w, |y, x| {
        let dy = y as f64 - 800.0;
        let dx = x as f64 - 500.0;
        dy * dy + dx * dx <= 260.0 * 260.0
    })?;
    let img = ImageRgb::from_fn(h, w, |y, x| {
        if gt.get(y, x) == 1 {
            [0.55, 0.52, 0.50]
        } else {
            let t = 0.35
                + 0.25 * ((x as f32 / 17.0).sin() * (y as f32 / 13.0).cos())
                + 0.05 * (((y * 31 + x * 17) % 13) as f32 / 13.0);
            [t.clamp(0.0, 1.0), (t * 0.9).clamp(0.0, 1.0), (t * 1.1).clamp(0.0, 1.0)]
        }
    })?;

    // The pixel branch sees ground truth here (an upper bound stand-in for a
    // trained segmenter); the window classifier stays quiet.
    let cfg = PipelineConfig {
        egs_scorer: ScorerSpec::Oracle(None),
        sh_scorer: ScorerSpec::Constant(-8.0),
        tau: 0.5,
        ..PipelineConfig::default()
    };
    let scorers = cfg.resolve_scorers(Some(&gt))?;
    let result = localize(img, &scorers, &cfg)?;

    io::save_prob_png(&result.p_egs, &out.join("p_egs.png"))?;
    io::save_prob_png(&result.p_sh, &out.join("p_sh.png"))?;
    io::save_prob_png(&result.p_fuse, &out.join("p_fuse.png"))?;
    io::save_mask_png(&result.mask, &out.join("mask.png"))?;
    io::save_mask_png(&gt, &out.join("gt.png"))?;

    println!("IoU against ground truth: {:.4}", iou(&result.mask, &gt)?);
    println!("wrote {}", out.display());
    Ok(())
}
