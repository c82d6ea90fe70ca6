//! Minimal text-free PNG charts: line series, bars and scatter with an
//! identity diagonal. Axes are drawn, tick labels are not.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{OmniError, Result};
use crate::io;

const MARGIN: u32 = 24;
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

pub const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

#[derive(Clone, Copy, Debug, PartialEq)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Option<Range> {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            Some(Range {
                lo: lo - 0.5,
                hi: hi + 0.5,
            })
        } else {
            Some(Range { lo, hi })
        }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Result<Canvas> {
        if width <= 2 * MARGIN || height <= 2 * MARGIN {
            return Err(OmniError::Config(format!(
                "plot of {width}x{height} px is too small"
            )));
        }
        let mut img = RgbImage::from_pixel(width, height, WHITE);
        let (w, h) = (width, height);
        for k in 1..4 {
            let y = MARGIN + (h - 2 * MARGIN) * k / 4;
            for x in MARGIN..w - MARGIN {
                img.put_pixel(x, y, GRID);
            }
        }
        for x in MARGIN..w - MARGIN {
            img.put_pixel(x, h - MARGIN, AXIS);
        }
        for y in MARGIN..=h - MARGIN {
            img.put_pixel(MARGIN, y, AXIS);
        }
        Ok(Canvas { img })
    }

    fn to_px(&self, fx: f64, fy: f64) -> (f64, f64) {
        let w = (self.img.width() - 2 * MARGIN) as f64;
        let h = (self.img.height() - 2 * MARGIN) as f64;
        (
            MARGIN as f64 + fx * w,
            (self.img.height() - MARGIN) as f64 - fy * h,
        )
    }

    fn dot(&mut self, x: f64, y: f64, r: i64, c: Rgb<u8>) {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (px, py) = (cx + dx, cy + dy);
                if px >= 0
                    && py >= 0
                    && (px as u32) < self.img.width()
                    && (py as u32) < self.img.height()
                {
                    self.img.put_pixel(px as u32, py as u32, c);
                }
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.dot(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), 1, c);
        }
    }

    fn rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, c: Rgb<u8>) {
        let (x0, x1) = (x0.round() as u32, x1.round() as u32);
        let (y0, y1) = (y0.min(y1).round() as u32, y0.max(y1).round() as u32);
        for y in y0..y1.min(self.img.height()) {
            for x in x0..x1.min(self.img.width()) {
                self.img.put_pixel(x, y, c);
            }
        }
    }
}

/// One polyline per series, x = index. Non-finite points break the line.
pub fn line_chart(series: &[Vec<f64>], width: u32, height: u32) -> Result<RgbImage> {
    let mut canvas = Canvas::new(width, height)?;
    let n = series.iter().map(Vec::len).max().unwrap_or(0);
    let Some(yr) = Range::of(series.iter().flatten().copied()) else {
        return Ok(canvas.img);
    };
    let xr = Range {
        lo: 0.0,
        hi: (n.max(2) - 1) as f64,
    };
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let mut prev = None;
        for (i, &v) in s.iter().enumerate() {
            if !v.is_finite() {
                prev = None;
                continue;
            }
            let p = canvas.to_px(xr.frac(i as f64), yr.frac(v));
            match prev {
                Some(q) => canvas.line(q, p, c),
                None => canvas.dot(p.0, p.1, 1, c),
            }
            prev = Some(p);
        }
    }
    Ok(canvas.img)
}

/// Grouped bars: `groups[g][k]` is bar `k` of group `g`, baseline zero.
pub fn bar_chart(groups: &[Vec<f64>], width: u32, height: u32) -> Result<RgbImage> {
    let mut canvas = Canvas::new(width, height)?;
    let values = groups.iter().flatten().copied().chain(std::iter::once(0.0));
    let Some(yr) = Range::of(values) else {
        return Ok(canvas.img);
    };
    let ng = groups.len().max(1) as f64;
    for (g, bars) in groups.iter().enumerate() {
        let nb = bars.len().max(1) as f64;
        for (k, &v) in bars.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let left = (g as f64 + 0.1 + 0.8 * k as f64 / nb) / ng;
            let right = (g as f64 + 0.1 + 0.8 * (k as f64 + 1.0) / nb) / ng;
            let (x0, y0) = canvas.to_px(left, yr.frac(0.0));
            let (x1, y1) = canvas.to_px(right, yr.frac(v));
            canvas.rect(x0, x1, y0, y1, PALETTE[k % PALETTE.len()]);
        }
    }
    Ok(canvas.img)
}

/// Scatter of `(x, y)` points on a shared square range with the y = x line.
pub fn scatter_identity(points: &[(f64, f64)], width: u32, height: u32) -> Result<RgbImage> {
    let mut canvas = Canvas::new(width, height)?;
    let Some(r) = Range::of(points.iter().flat_map(|&(x, y)| [x, y])) else {
        return Ok(canvas.img);
    };
    let a = canvas.to_px(0.0, 0.0);
    let b = canvas.to_px(1.0, 1.0);
    canvas.line(a, b, GRID);
    for &(x, y) in points {
        if x.is_finite() && y.is_finite() {
            let p = canvas.to_px(r.frac(x), r.frac(y));
            canvas.dot(p.0, p.1, 2, PALETTE[0]);
        }
    }
    Ok(canvas.img)
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    io::ensure_parent(path)?;
    img.save(path).map_err(|e| OmniError::Image {
        path: path.to_path_buf(),
        source: e,
    })
}
