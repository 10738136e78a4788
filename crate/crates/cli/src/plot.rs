//! Static PNG renderings: row-normalized confusion heatmaps and loss curves.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{Rgb, RgbImage};
use serde_json::Value;

use seizure_core::evaluation::ConfusionMatrix;
use seizure_core::recording::NUM_CLASSES;
use seizure_core::training::TrainHistory;

const CELL: u32 = 64;
const MARGIN: u32 = 16;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t.clamp(0.0, 1.0)).round() as u8
}

/// White (0) to dark blue (1), rows true class, columns predicted, classes
/// in index order.
pub fn heatmap(cm: &ConfusionMatrix) -> RgbImage {
    let n = NUM_CLASSES as u32;
    let side = 2 * MARGIN + n * CELL;
    let mut img = RgbImage::from_pixel(side, side, WHITE);
    let norm = cm.row_normalized();
    for (i, row) in norm.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let c = Rgb([lerp(255, 8, v), lerp(255, 48, v), lerp(255, 107, v)]);
            for y in 0..CELL {
                for x in 0..CELL {
                    let edge = x == 0 || y == 0 || x == CELL - 1 || y == CELL - 1;
                    let px = MARGIN + j as u32 * CELL + x;
                    let py = MARGIN + i as u32 * CELL + y;
                    img.put_pixel(px, py, if edge { Rgb([200, 200, 200]) } else { c });
                }
            }
        }
    }
    img
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        for (ox, oy) in [(0, 0), (1, 0), (0, 1)] {
            let (px, py) = (x + ox, y + oy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, c);
            }
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Training (blue) and validation (orange) loss per epoch on a shared
/// linear axis starting at zero.
pub fn curves(rows: &[(usize, f64, f64, f64)]) -> RgbImage {
    let (w, h, m) = (640i64, 400i64, 40i64);
    let mut img = RgbImage::from_pixel(w as u32, h as u32, WHITE);
    line(&mut img, (m, h - m), (w - m, h - m), BLACK);
    line(&mut img, (m, m), (m, h - m), BLACK);
    let top = rows.iter().flat_map(|r| [r.1, r.2]).filter(|v| v.is_finite()).fold(0.0f64, f64::max).max(1e-12);
    let n = rows.len().max(2) - 1;
    let point = |i: usize, v: f64| {
        let x = m + (i as i64 * (w - 2 * m)) / n as i64;
        let y = (h - m) - ((v / top).clamp(0.0, 1.0) * (h - 2 * m) as f64).round() as i64;
        (x, y)
    };
    for (series, color) in [(1, Rgb([31, 119, 180])), (2, Rgb([255, 127, 14]))] {
        let pts: Vec<(i64, i64)> =
            rows.iter().enumerate().map(|(i, r)| point(i, if series == 1 { r.1 } else { r.2 })).collect();
        for p in pts.windows(2) {
            line(&mut img, p[0], p[1], color);
        }
        if pts.len() == 1 {
            line(&mut img, pts[0], pts[0], color);
        }
    }
    img
}

fn confusion_from_json(v: &Value) -> Option<ConfusionMatrix> {
    let c = v.get("pooled_confusion").or_else(|| v.get("confusion"))?;
    serde_json::from_value(c.clone()).ok()
}

fn confusion_from_csv(text: &str) -> Option<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    if rows.len() != NUM_CLASSES {
        return None;
    }
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<&str> = r.split(',').skip(1).collect();
        if cells.len() != NUM_CLASSES {
            return None;
        }
        for (j, c) in cells.iter().enumerate() {
            cm.counts[i][j] = c.trim().parse().ok()?;
        }
    }
    Some(cm)
}

/// Renders one report, confusion CSV or history CSV.
pub fn render_file(input: &Path) -> Result<RgbImage> {
    let text = std::fs::read_to_string(input).with_context(|| input.display().to_string())?;
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "json" {
        let v: Value = serde_json::from_str(&text).with_context(|| input.display().to_string())?;
        return confusion_from_json(&v).map(|cm| heatmap(&cm)).context("JSON file holds no confusion matrix");
    }
    if text.lines().any(|l| l.starts_with("epoch,")) {
        let rows = TrainHistory::parse_csv(&text).map_err(anyhow::Error::msg)?;
        if rows.is_empty() {
            bail!("{}: history has no epochs", input.display());
        }
        return Ok(curves(&rows));
    }
    confusion_from_csv(&text).map(|cm| heatmap(&cm)).context("not a confusion-matrix or history CSV")
}

/// Plots `input` (a file, or every plottable file in a directory) into
/// `out_dir`, or next to the inputs. Returns the written paths.
pub fn plot(input: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                (name.starts_with("fold_") || name == "aggregate.json") && name.ends_with(".json")
                    || name.starts_with("history") && name.ends_with(".csv")
            })
            .collect();
        v.sort();
        v
    } else {
        vec![input.to_path_buf()]
    };
    let mut written = Vec::new();
    for f in files {
        let img = render_file(&f)?;
        let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| f.parent().unwrap_or(Path::new(".")).to_path_buf());
        std::fs::create_dir_all(&dir)?;
        let out = dir.join(f.with_extension("png").file_name().unwrap());
        let tmp = out.with_extension("png.tmp");
        img.save_with_format(&tmp, image::ImageFormat::Png)?;
        std::fs::rename(&tmp, &out)?;
        written.push(out);
    }
    if written.is_empty() {
        bail!("nothing to plot in {}", input.display());
    }
    Ok(written)
}
