//! Sweep the binarization threshold over a batch of probability maps and
//! report the mean IoU curve with its best operating point.
//!
//! Usage: cargo run --example threshold_sweep

use std::path::Path;

use forgeloc::eval::sweep;
use forgeloc::raster::{BinaryMask, Plane, ProbMap};
use forgeloc::{Error, Result};

const OUT_DIR: &str = "target/examples-out/threshold_sweep";

fn main() -> Result<()> {
    let out = Path::new(OUT_DIR);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    // Simulated per-image predictions: a sharp one, a blurry one, and a
    // biased one, all against rectangular ground truth.
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for (sharpness, bias) in [(18.0, 0.0), (4.0, 0.0), (8.0, 0.25)] {
        let gt = BinaryMask::from_fn(120, 160, |y, x| {
            (30..90).contains(&y) && (40..120).contains(&x)
        })?;
        let pred = ProbMap::new(Plane::from_fn(120, 160, |y, x| {
            // Distance to the rectangle, mapped through a logistic edge.
            let dy = (30.0 - y as f64).max(y as f64 - 89.0).max(0.0);
            let dx = (40.0 - x as f64).max(x as f64 - 119.0).max(0.0);
            let d = (dy * dy + dx * dx).sqrt();
            let inside = if gt.get(y, x) == 1 { 1.0 } else { (-d / sharpness).exp() * 0.6 };
            ((inside + bias).min(1.0)) as f32
        })?)?;
        preds.push(pred);
        gts.push(gt);
    }

    let curve = sweep(&preds, &gts)?;
    let csv_path = out.join("curve.csv");
    std::fs::write(&csv_path, curve.to_csv()).map_err(|e| Error::io(&csv_path, e))?;

    println!("tau    mean IoU");
    for k in (0..=100).step_by(10) {
        println!("{:.2}   {:.4}", curve.thresholds[k], curve.ious[k]);
    }
    println!(
        "best tau {:.2} gives mean IoU {:.4} over {} samples",
        curve.best_tau,
        curve.best_iou,
        preds.len()
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}
