//! Run the fixed filter bank on an image and save every response plane.
//!
//! Usage: cargo run --example extract_features [-- <image.png>]
//!
//! Without an argument a synthetic test card with a pasted square is used.

use std::path::Path;

use forgeloc::features::{
    edge_energy_score, gradient_features, residual_stack, EdgeEnergyConfig,
};
use forgeloc::raster::{to_luminance, ImageRgb};
use forgeloc::{io, Result};

const OUT_DIR: &str = "target/examples-out/extract_features";

fn synthetic_card() -> Result<ImageRgb> {
    ImageRgb::from_fn(256, 256, |y, x| {
        let base = 0.3 + 0.2 * ((x as f32 / 41.0).sin() * (y as f32 / 23.0).cos());
        // A pasted flat square leaves a clean boundary for the filters.
        let pasted = (96..160).contains(&y) && (96..160).contains(&x);
        let v = if pasted { 0.8 } else { base };
        [v, v * 0.9, v * 1.1f32.min(1.0)]
    })
}

fn main() -> Result<()> {
    let out = Path::new(OUT_DIR);
    std::fs::create_dir_all(out).map_err(|e| forgeloc::Error::io(out, e))?;

    let img = match std::env::args().nth(1) {
        Some(path) => io::load_image(Path::new(&path))?,
        None => synthetic_card()?,
    };
    let luma = to_luminance(&img);

    let residual = residual_stack(&img, &luma, 1.5)?;
    let gradient = gradient_features(&luma);
    io::save_raw(&residual.planes(), &out.join("residual.edgr"))?;
    io::save_raw(&gradient.planes(), &out.join("gradient.edgr"))?;

    let energy = edge_energy_score(&img, &EdgeEnergyConfig::default())?;
    io::save_prob_png(&energy, &out.join("edge_energy.png"))?;

    println!("residual planes: 3 high-pass (RGB) + 3 noise residuals (luma)");
    println!("gradient planes: sobel-h, sobel-v, magnitude, laplacian");
    println!(
        "edge energy range: {:.4} .. {:.4}",
        energy.plane().min_value(),
        energy.plane().max_value()
    );
    println!("wrote {}", out.display());
    Ok(())
}
