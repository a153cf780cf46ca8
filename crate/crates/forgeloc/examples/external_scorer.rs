//! Exchange a batch of patches with an external scoring command through the
//! directory-based file protocol, using the bundled loopback endpoint.
//!
//! Build the CLI first so the loopback command exists:
//!
//!     cargo build
//!     cargo run --example external_scorer
//!
//! Protocol recap: the engine writes `dir/req/NNNNN.png` (16-bit RGB) plus
//! `dir/req/manifest.txt`, invokes `<command> <dir>`, and reads either
//! `dir/resp/scores.txt` (tile mode, `index logit` lines) or
//! `dir/resp/NNNNN.png` (pixel mode, 16-bit grayscale).

use std::path::PathBuf;

use forgeloc::raster::ImageRgb;
use forgeloc::scorer::ExternalScorer;
use forgeloc::{Error, Result};

fn loopback_bin() -> Result<PathBuf> {
    // Examples live in target/<profile>/examples/, the CLI one level up.
    let me = std::env::current_exe().map_err(|e| Error::io("current_exe", e))?;
    let bin = me
        .parent()
        .and_then(|p| p.parent())
        .map(|p| p.join("forgeloc"))
        .filter(|p| p.exists());
    bin.ok_or_else(|| Error::InvalidInput("forgeloc binary not built; run `cargo build` first".into()))
}

fn main() -> Result<()> {
    let bin = loopback_bin()?;
    let dir = std::env::temp_dir().join("forgeloc-external-scorer-demo");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let patches: Vec<ImageRgb> = (0..4)
        .map(|k| {
            ImageRgb::from_fn(64, 64, |y, x| {
                let v = (((y + x) * (k + 1)) % 97) as f32 / 96.0;
                [v, v, v]
            })
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&ImageRgb> = patches.iter().collect();

    let tile = ExternalScorer::new(&dir, &format!("{} loopback --mode tile", bin.display()))?;
    let logits = tile.roundtrip_tile(&refs)?;
    println!("tile mode: logits {logits:?}");

    let pixel = ExternalScorer::new(&dir, &format!("{} loopback --mode pixel", bin.display()))?;
    let maps = pixel.roundtrip_pixel(&refs)?;
    for (i, (patch, map)) in patches.iter().zip(&maps).enumerate() {
        let exact = patch.channel(0).data() == map.data();
        println!(
            "pixel mode: patch {i} echoed {}x{}, bit-exact: {exact}",
            map.height(),
            map.width()
        );
    }
    println!("exchange directory: {}", dir.display());
    Ok(())
}
