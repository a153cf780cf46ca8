//! Tile and sliding-window layout over arbitrary-resolution rasters.
//!
//! Tiles partition the frame exactly (no overlap); sliding windows overlap on
//! a stride grid over a padded frame so every source pixel is covered.

use crate::error::{Error, Result};
use crate::raster::{CropRecord, ImageRgb, PadMode, Plane, ProbMap};

/// Axis-aligned rectangle in source coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
}

/// Exact partition of an `image_h x image_w` frame into tiles with sides
/// bounded by `max_side`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub image_h: usize,
    pub image_w: usize,
    pub max_side: usize,
    tiles: Vec<TileRect>,
}

impl TilePlan {
    pub fn tiles(&self) -> &[TileRect] {
        &self.tiles
    }

    /// One `y0 x0 h w` line per tile.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tiles {
            out.push_str(&format!("{} {} {} {}\n", t.y0, t.x0, t.height, t.width));
        }
        out
    }
}

/// Lays out non-overlapping tiles row-major; edge tiles carry the remainder.
pub fn plan_tiles(h: usize, w: usize, max_side: usize) -> Result<TilePlan> {
    if h == 0 || w == 0 || max_side == 0 {
        return Err(Error::InvalidInput(format!(
            "plan_tiles needs positive dims, got {h}x{w} with max side {max_side}"
        )));
    }
    let mut tiles = Vec::with_capacity(h.div_ceil(max_side) * w.div_ceil(max_side));
    let mut y0 = 0;
    while y0 < h {
        let th = max_side.min(h - y0);
        let mut x0 = 0;
        while x0 < w {
            let tw = max_side.min(w - x0);
            tiles.push(TileRect {
                y0,
                x0,
                height: th,
                width: tw,
            });
            x0 += tw;
        }
        y0 += th;
    }
    Ok(TilePlan {
        image_h: h,
        image_w: w,
        max_side,
        tiles,
    })
}

/// Overlapping window layout in padded coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub image_h: usize,
    pub image_w: usize,
    pub patch: usize,
    pub stride: usize,
    /// Top-left window offsets on the `{0, s, 2s, ...}` grid, row-major.
    windows: Vec<(usize, usize)>,
    pub pad: CropRecord,
}

impl WindowPlan {
    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn padded_h(&self) -> usize {
        self.pad.padded_h()
    }

    pub fn padded_w(&self) -> usize {
        self.pad.padded_w()
    }

    pub fn windows_per_row(&self) -> usize {
        (self.padded_w() - self.patch) / self.stride + 1
    }

    pub fn window_rows(&self) -> usize {
        (self.padded_h() - self.patch) / self.stride + 1
    }

    /// One `y x patch patch` line per window, padded coordinates.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for &(y, x) in &self.windows {
            out.push_str(&format!("{} {} {} {}\n", y, x, self.patch, self.patch));
        }
        out
    }
}

fn axis_padding(dim: usize, patch: usize, stride: usize) -> (usize, usize) {
    let padded = if dim <= patch {
        patch
    } else {
        let r = (dim - patch) % stride;
        if r == 0 {
            dim
        } else {
            dim + stride - r
        }
    };
    let total = padded - dim;
    (total / 2, total - total / 2)
}

/// Plans overlapping `patch x patch` windows with the given stride.
///
/// The frame is padded so the stride grid lands exactly on the far border:
/// the pad is split as evenly as possible with the remainder going to the
/// bottom/right. Reflect padding is used unless some side would need
/// pad >= dim, in which case the whole record falls back to edge replication.
pub fn plan_windows(h: usize, w: usize, patch: usize, stride: usize) -> Result<WindowPlan> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidInput(format!("plan_windows on empty frame {h}x{w}")));
    }
    if patch == 0 || stride == 0 || stride > patch {
        return Err(Error::InvalidInput(format!(
            "plan_windows needs 1 <= stride <= patch, got patch {patch} stride {stride}"
        )));
    }
    let (pad_top, pad_bottom) = axis_padding(h, patch, stride);
    let (pad_left, pad_right) = axis_padding(w, patch, stride);
    let reflect_ok = pad_top.max(pad_bottom) < h && pad_left.max(pad_right) < w;
    let pad = CropRecord {
        original_h: h,
        original_w: w,
        pad_top,
        pad_bottom,
        pad_left,
        pad_right,
        mode: if reflect_ok {
            PadMode::Reflect
        } else {
            PadMode::Replicate
        },
    };
    let ny = (pad.padded_h() - patch) / stride + 1;
    let nx = (pad.padded_w() - patch) / stride + 1;
    let mut windows = Vec::with_capacity(ny * nx);
    for gy in 0..ny {
        for gx in 0..nx {
            windows.push((gy * stride, gx * stride));
        }
    }
    Ok(WindowPlan {
        image_h: h,
        image_w: w,
        patch,
        stride,
        windows,
        pad,
    })
}

/// Reassembles per-tile maps into the full frame. Tiles are disjoint so no
/// blending happens.
pub fn stitch(plan: &TilePlan, tile_maps: &[ProbMap]) -> Result<ProbMap> {
    if tile_maps.len() != plan.tiles.len() {
        return Err(Error::DimMismatch(format!(
            "{} tile maps for {} planned tiles",
            tile_maps.len(),
            plan.tiles.len()
        )));
    }
    let mut out = Plane::zeros(plan.image_h, plan.image_w)?;
    for (rect, map) in plan.tiles.iter().zip(tile_maps) {
        if map.height() != rect.height || map.width() != rect.width {
            return Err(Error::DimMismatch(format!(
                "tile map {}x{} does not match planned tile {}x{}",
                map.height(),
                map.width(),
                rect.height,
                rect.width
            )));
        }
        place_tile(&mut out, rect, map.plane());
    }
    Ok(ProbMap::new_unchecked(out))
}

/// Copies one tile's plane into the stitched output at its planned offset.
pub(crate) fn place_tile(out: &mut Plane, rect: &TileRect, tile: &Plane) {
    let w = out.width();
    for y in 0..rect.height {
        let dst_start = (rect.y0 + y) * w + rect.x0;
        out.data_mut()[dst_start..dst_start + rect.width].copy_from_slice(tile.row(y));
    }
}

/// Zero-pads at the bottom/right so both dims become multiples of `m`.
pub fn pad_to_multiple(plane: &Plane, m: usize) -> Result<(Plane, CropRecord)> {
    let record = pad_to_multiple_record(plane.height(), plane.width(), m)?;
    Ok((crate::raster::pad(plane, &record)?, record))
}

/// [`pad_to_multiple`] for RGB images.
pub fn pad_to_multiple_rgb(img: &ImageRgb, m: usize) -> Result<(ImageRgb, CropRecord)> {
    let record = pad_to_multiple_record(img.height(), img.width(), m)?;
    Ok((img.pad(&record)?, record))
}

fn pad_to_multiple_record(h: usize, w: usize, m: usize) -> Result<CropRecord> {
    if m == 0 {
        return Err(Error::InvalidInput("pad multiple must be >= 1".into()));
    }
    Ok(CropRecord {
        original_h: h,
        original_w: w,
        pad_top: 0,
        pad_bottom: h.div_ceil(m) * m - h,
        pad_left: 0,
        pad_right: w.div_ceil(m) * m - w,
        mode: PadMode::Zero,
    })
}
