//! Stack an image, a separator band, and an edge prior into the tall canvas
//! shipped to external segmenters, then crop a canvas-resolution output back
//! to the image band.
//!
//! Usage: cargo run --example tall_canvas

use std::path::Path;

use forgeloc::features::{edge_energy_score, EdgeEnergyConfig};
use forgeloc::raster::ImageRgb;
use forgeloc::scorer::{build_tall_canvas, crop_logits, separator_height};
use forgeloc::{io, Result};

const OUT_DIR: &str = "target/examples-out/tall_canvas";

fn main() -> Result<()> {
    let out = Path::new(OUT_DIR);
    std::fs::create_dir_all(out).map_err(|e| forgeloc::Error::io(out, e))?;

    let (h, w) = (250, 320);
    let img = ImageRgb::from_fn(h, w, |y, x| {
        let ring = (((y as f32 - 125.0).powi(2) + (x as f32 - 160.0).powi(2)).sqrt() / 12.0).sin();
        let v = 0.5 + 0.3 * ring;
        [v, v * 0.8, 1.0 - v * 0.5]
    })?;
    let prior = edge_energy_score(&img, &EdgeEnergyConfig::default())?;

    println!(
        "image height {h} needs a {}-row separator so 2H+s is divisible by 32",
        separator_height(h)
    );
    let canvas = build_tall_canvas(&img, &prior)?;
    println!(
        "canvas: {}x{} = image + {} separator rows + replicated prior",
        canvas.total_h(),
        canvas.image_w,
        canvas.sep_height
    );
    io::save_rgb16_png(&canvas.canvas, &out.join("canvas.png"))?;

    // A segmenter would return a map at canvas resolution; only the image
    // band matters. Use the prior band itself as a stand-in output.
    let fake_output = canvas.canvas.channel(0).clone();
    let band = crop_logits(&fake_output, h, w)?;
    assert_eq!((band.height(), band.width()), (h, w));
    assert_eq!(band.data(), img.channel(0).data());
    println!("top-left crop returns the image band exactly");
    println!("wrote {}", out.display());
    Ok(())
}
