//! Build a dense heatmap by sliding a tile classifier over an image and
//! blending the per-window logits with a Hann taper.
//!
//! Usage: cargo run --example sliding_heatmap

use std::path::Path;

use forgeloc::heatmap::{sh_heatmap, DEFAULT_EPSILON};
use forgeloc::raster::{BinaryMask, ImageRgb};
use forgeloc::scorer::OracleTileScorer;
use forgeloc::tiler::plan_windows;
use forgeloc::{io, Result};

const OUT_DIR: &str = "target/examples-out/sliding_heatmap";

fn main() -> Result<()> {
    let out = Path::new(OUT_DIR);
    std::fs::create_dir_all(out).map_err(|e| forgeloc::Error::io(out, e))?;

    let (h, w) = (900, 1200);
    let img = ImageRgb::from_fn(h, w, |y, x| {
        let v = 0.4 + 0.1 * (((y / 16) ^ (x / 16)) & 1) as f32;
        [v, v, v]
    })?;
    // Pretend the region around (300..620, 500..900) is synthetic.
    let gt = BinaryMask::from_fn(h, w, |y, x| (300..620).contains(&y) && (500..900).contains(&x))?;

    let (patch, stride) = (336, 112);
    let plan = plan_windows(h, w, patch, stride)?;
    println!(
        "{} windows of {}x{} at stride {} over a padded {}x{} frame",
        plan.windows().len(),
        patch,
        patch,
        stride,
        plan.padded_h(),
        plan.padded_w()
    );

    // A window scores positive when at least half of it overlaps the region.
    let scorer = OracleTileScorer::new(gt.clone());
    let heat = sh_heatmap(&img, &scorer, patch, stride, DEFAULT_EPSILON)?;
    io::save_prob_png(&heat, &out.join("heatmap.png"))?;
    io::save_mask_png(&gt, &out.join("gt.png"))?;

    let hot = heat.data().iter().filter(|&&v| v > 0.5).count();
    println!(
        "heatmap: {:.1}% of pixels above 0.5 (region itself covers {:.1}%)",
        100.0 * hot as f64 / (h * w) as f64,
        100.0 * gt.count_ones() as f64 / (h * w) as f64
    );
    println!("wrote {}", out.display());
    Ok(())
}
