//! Turn a binary mask into a soft multi-scale edge supervision target.
//!
//! Usage: cargo run --example edge_targets

use std::path::Path;

use forgeloc::edge_target::{dilate, erode, soft_edge_target, EdgeTargetConfig};
use forgeloc::raster::BinaryMask;
use forgeloc::{io, Result};

const OUT_DIR: &str = "target/examples-out/edge_targets";

fn main() -> Result<()> {
    let out = Path::new(OUT_DIR);
    std::fs::create_dir_all(out).map_err(|e| forgeloc::Error::io(out, e))?;

    // An ellipse with a rectangular bite taken out of it.
    let mask = BinaryMask::from_fn(200, 200, |y, x| {
        let dy = (y as f64 - 100.0) / 70.0;
        let dx = (x as f64 - 100.0) / 55.0;
        let inside = dy * dy + dx * dx <= 1.0;
        let bite = (90..130).contains(&y) && (120..170).contains(&x);
        inside && !bite
    })?;
    io::save_mask_png(&mask, &out.join("mask.png"))?;

    // The morphological gradient at one scale, for comparison.
    let band_mask = {
        let d = dilate(&mask, 7)?;
        let e = erode(&mask, 7)?;
        BinaryMask::from_fn(200, 200, |y, x| d.get(y, x) == 1 && e.get(y, x) == 0)?
    };
    io::save_mask_png(&band_mask, &out.join("gradient_r7.png"))?;

    let cfg = EdgeTargetConfig::default();
    let target = soft_edge_target(&mask, &cfg)?;
    io::save_prob_png(&target, &out.join("soft_target.png"))?;

    println!(
        "radii {:?}, sigma slope {}, peak {:.6}",
        cfg.radii,
        cfg.lambda,
        target.plane().max_value()
    );
    println!("wrote {}", out.display());
    Ok(())
}
