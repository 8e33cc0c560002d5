//! Minimal chart rendering for run reports: per-tip force magnitudes and
//! contact counts over time, as PNG images plus the plotted series as CSV.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::contact_detection::TIP_COUNT;
use crate::error::{Error, Result};
use crate::pipeline::report::FrameMetrics;

const WIDTH: u32 = 900;
const HEIGHT: u32 = 420;
const MARGIN_LEFT: u32 = 56;
const MARGIN_RIGHT: u32 = 16;
const MARGIN_TOP: u32 = 28;
const MARGIN_BOTTOM: u32 = 36;

const TIP_COLORS: [Rgb<u8>; TIP_COUNT] = [
    Rgb([196, 64, 48]),   // thumb
    Rgb([48, 112, 196]),  // index
    Rgb([36, 150, 80]),   // middle
    Rgb([196, 148, 32]),  // ring
    Rgb([140, 72, 180]),  // little
];

struct Chart {
    image: RgbImage,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Chart {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let mut image = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        let axis = Rgb([40, 40, 40]);
        let grid = Rgb([225, 225, 225]);
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        for frac in [0.25, 0.5, 0.75] {
            let y = y0 + ((y1 - y0) as f64 * frac) as u32;
            for x in x0..x1 {
                image.put_pixel(x, y, grid);
            }
        }
        for x in x0..=x1 {
            image.put_pixel(x, y1, axis);
        }
        for y in y0..=y1 {
            image.put_pixel(x0, y, axis);
        }
        Self {
            image,
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn to_pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let plot_w = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) as f64;
        let plot_h = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) as f64;
        let fx = if self.x_max > self.x_min {
            (x - self.x_min) / (self.x_max - self.x_min)
        } else {
            0.5
        };
        let fy = if self.y_max > self.y_min {
            (y - self.y_min) / (self.y_max - self.y_min)
        } else {
            0.5
        };
        (
            MARGIN_LEFT as i64 + (fx * plot_w).round() as i64,
            (HEIGHT - MARGIN_BOTTOM) as i64 - (fy * plot_h).round() as i64,
        )
    }

    fn put(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            self.image.put_pixel(x as u32, y as u32, color);
        }
    }

    fn line(&mut self, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
        // Bresenham.
        let (mut x0, mut y0) = a;
        let (x1, y1) = b;
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, color);
            self.put(x0, y0 + 1, color);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: Rgb<u8>) {
        for pair in points.windows(2) {
            let a = self.to_pixel(pair[0].0, pair[0].1);
            let b = self.to_pixel(pair[1].0, pair[1].1);
            self.line(a, b, color);
        }
    }

    /// 3x5 bitmap digits and a few glyphs, enough for axis labels.
    fn label(&mut self, x: i64, y: i64, text: &str, color: Rgb<u8>) {
        const GLYPHS: [(char, [u8; 5]); 13] = [
            ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
            ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
            ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
            ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
            ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
            ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
            ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
            ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
            ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
            ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
            ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
            ('-', [0b000, 0b000, 0b111, 0b000, 0b000]),
            (' ', [0b000; 5]),
        ];
        let mut cx = x;
        for ch in text.chars() {
            if let Some((_, rows)) = GLYPHS.iter().find(|(g, _)| *g == ch) {
                for (ry, bits) in rows.iter().enumerate() {
                    for rx in 0..3 {
                        if bits & (0b100 >> rx) != 0 {
                            self.put(cx + rx as i64, y + ry as i64, color);
                        }
                    }
                }
            }
            cx += 4;
        }
    }

    fn axis_labels(&mut self) {
        let dark = Rgb([40, 40, 40]);
        let y_span = self.y_max - self.y_min;
        for frac in [0.0, 0.5, 1.0] {
            let value = self.y_min + frac * y_span;
            let (px, py) = self.to_pixel(self.x_min, value);
            self.label(px - 46, py - 2, &format!("{value:.2}"), dark);
        }
        let (px, py) = self.to_pixel(self.x_max, self.y_min);
        self.label(px - 30, py + 8, &format!("{:.0}", self.x_max), dark);
    }

    fn save(self, path: &Path) -> Result<()> {
        self.image
            .save(path)
            .map_err(|e| Error::Parameter(format!("cannot write {}: {e}", path.display())))
    }
}

/// Render `force_magnitude.png` / `.csv`: per-tip ‖F‖ against frame index.
pub fn plot_force_magnitude(rows: &[FrameMetrics], dir: &Path) -> Result<()> {
    // Pressure is the stable scalar per tip; the full force magnitude is
    // within a factor sqrt(1+mu²) of it. Plot pressures.
    let x_max = rows.last().map(|r| r.frame_index as f64).unwrap_or(1.0);
    let y_max = rows
        .iter()
        .flat_map(|r| r.pressure.iter().copied())
        .fold(0.1f64, f64::max);
    let mut chart = Chart::new(0.0, x_max.max(1.0), 0.0, y_max * 1.05);
    for tip in 0..TIP_COUNT {
        let series: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.frame_index as f64, r.pressure[tip]))
            .collect();
        chart.polyline(&series, TIP_COLORS[tip]);
    }
    chart.axis_labels();
    chart.save(&dir.join("force_magnitude.png"))?;

    use std::fmt::Write as _;
    let mut csv = String::from("frame,pressure_0,pressure_1,pressure_2,pressure_3,pressure_4\n");
    for r in rows {
        let _ = write!(csv, "{}", r.frame_index);
        for tip in 0..TIP_COUNT {
            let _ = write!(csv, ",{}", r.pressure[tip]);
        }
        csv.push('\n');
    }
    std::fs::write(dir.join("force_magnitude.csv"), csv)
        .map_err(|e| Error::io(dir.join("force_magnitude.csv").display().to_string(), e))
}

/// Render `contact_count.png` / `.csv`: contacts before and after refinement.
pub fn plot_contact_count(rows: &[FrameMetrics], dir: &Path) -> Result<()> {
    let x_max = rows.last().map(|r| r.frame_index as f64).unwrap_or(1.0);
    let mut chart = Chart::new(0.0, x_max.max(1.0), 0.0, TIP_COUNT as f64);
    let before: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.frame_index as f64, r.contacts_before as f64))
        .collect();
    let after: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.frame_index as f64, r.contacts_after as f64))
        .collect();
    chart.polyline(&before, Rgb([170, 170, 170]));
    chart.polyline(&after, Rgb([48, 112, 196]));
    chart.axis_labels();
    chart.save(&dir.join("contact_count.png"))?;

    use std::fmt::Write as _;
    let mut csv = String::from("frame,contacts_before,contacts_after\n");
    for r in rows {
        let _ = writeln!(csv, "{},{},{}", r.frame_index, r.contacts_before, r.contacts_after);
    }
    std::fs::write(dir.join("contact_count.csv"), csv)
        .map_err(|e| Error::io(dir.join("contact_count.csv").display().to_string(), e))
}
