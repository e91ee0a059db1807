//! Artifact emission: number formatting, JSON files and SVG line plots.

use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Formats like C's `%.{digits}g`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Self {
            label: label.into(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Plot `log10` of both axes.
    pub log_log: bool,
}

const MAX_POINTS: usize = 4000;
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

impl LinePlot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            log_log: false,
        }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn log_log(mut self) -> Self {
        self.log_log = true;
        self
    }

    fn prepared(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        self.series
            .iter()
            .map(|s| {
                let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
                let pts = s
                    .points
                    .iter()
                    .step_by(stride)
                    .filter_map(|&(x, y)| {
                        if self.log_log {
                            (x > 0.0 && y > 0.0).then(|| (x.log10(), y.log10()))
                        } else {
                            Some((x, y))
                        }
                    })
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .collect();
                (s.label.clone(), pts)
            })
            .collect()
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let data = self.prepared();
        let all = data.iter().flat_map(|(_, p)| p.iter());
        let (mut x0, mut x1, mut y0, mut y1) = all.fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        let pad = ((y1 - y0) * 0.05).max(1e-9);
        y0 -= pad;
        y1 += pad;

        let plot_err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
        let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(&self.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(64)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| plot_err(&e))?;
        let (xl, yl) = if self.log_log {
            (format!("log10 {}", self.x_label), format!("log10 {}", self.y_label))
        } else {
            (self.x_label.clone(), self.y_label.clone())
        };
        chart
            .configure_mesh()
            .x_desc(xl)
            .y_desc(yl)
            .draw()
            .map_err(|e| plot_err(&e))?;
        for (i, (label, pts)) in data.into_iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(pts, &color))
                .map_err(|e| plot_err(&e))?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(&e))?;
        root.present().map_err(|e| plot_err(&e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0, 12), "0");
        assert_eq!(format_sig(2.5, 12), "2.5");
        assert_eq!(format_sig(92.5, 12), "92.5");
        assert_eq!(format_sig(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_sig(-123456.789, 12), "-123456.789");
        assert_eq!(format_sig(1e-7, 12), "1e-7");
        assert_eq!(format_sig(2.0 / 3.0 * 1e13, 12), "6.66666666667e12");
        assert_eq!(format_sig(0.1 + 0.2, 12), "0.3");
        assert_eq!(format_sig(999999999999.9, 12), "1e12");
    }

    #[test]
    fn svg_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        LinePlot::new("demo", "t", "y")
            .with_series(Series::new("sin", &xs, &ys))
            .write_svg(&path)
            .unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("demo"));
    }
}
