//! SVG charts from the scenario and benchmark CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

pub const SCORE_COLUMNS: [&str; 3] = ["time_h", "vehicle", "score"];
pub const BENCH_COLUMNS: [&str; 3] = ["n", "verify_ms", "predicted_ms"];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}: no data rows")]
    Empty(String),
    #[error("{input}: missing columns {missing:?}")]
    MissingColumns { input: String, missing: Vec<String> },
    #[error("{input}: row {row}: column {column} is not a number")]
    BadValue { input: String, row: usize, column: String },
    #[error("drawing failed: {0}")]
    Draw(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn draw_err<E: std::fmt::Display>(e: E) -> PlotError {
    PlotError::Draw(e.to_string())
}

struct Table {
    name: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(name: &str, text: &str) -> Result<Self, PlotError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(str::to_owned).collect();
        let rows = r.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { name: name.to_owned(), headers, rows })
    }

    fn has(&self, cols: &[&str]) -> bool {
        cols.iter().all(|c| self.headers.iter().any(|h| h == c))
    }

    fn require(&self, cols: &[&str]) -> Result<Vec<usize>, PlotError> {
        let missing: Vec<String> =
            cols.iter().filter(|c| !self.headers.iter().any(|h| h == *c)).map(|c| c.to_string()).collect();
        if !missing.is_empty() {
            return Err(PlotError::MissingColumns { input: self.name.clone(), missing });
        }
        if self.rows.is_empty() {
            return Err(PlotError::Empty(self.name.clone()));
        }
        Ok(cols.iter().map(|c| self.headers.iter().position(|h| h == c).expect("checked")).collect())
    }

    fn num(&self, row: usize, col: usize) -> Result<f64, PlotError> {
        self.rows[row].get(col).and_then(|v| v.trim().parse().ok()).ok_or_else(|| PlotError::BadValue {
            input: self.name.clone(),
            row: row + 1,
            column: self.headers[col].clone(),
        })
    }
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// Stepped score-vs-time chart, one series per vehicle.
pub fn plot_scores(name: &str, csv_text: &str) -> Result<String, PlotError> {
    let t = Table::parse(name, csv_text)?;
    let idx = t.require(&SCORE_COLUMNS)?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in 0..t.rows.len() {
        let time = t.num(row, idx[0])?;
        let score = t.num(row, idx[2])?;
        let pts = series.entry(t.rows[row][idx[1]].to_owned()).or_default();
        if let Some(&(_, prev)) = pts.last() {
            pts.push((time, prev));
        }
        pts.push((time, score));
    }
    let x_max = series.values().flatten().map(|p| p.0).fold(1.0f64, f64::max);
    for pts in series.values_mut() {
        let last = pts.last().expect("non-empty").1;
        pts.push((x_max, last));
    }

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (900, 520)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("Reputation score", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(0f64..x_max, 0f64..100f64)
            .map_err(draw_err)?;
        chart.configure_mesh().x_desc("time (h)").y_desc("score").draw().map_err(draw_err)?;
        for (k, (vehicle, pts)) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(draw_err)?
                .label(vehicle.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE)
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerRight)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

/// Log-x chart of measured verification time and the analytic prediction.
pub fn plot_bench(name: &str, csv_text: &str) -> Result<String, PlotError> {
    let t = Table::parse(name, csv_text)?;
    let idx = t.require(&BENCH_COLUMNS)?;
    let mut measured = Vec::new();
    let mut predicted = Vec::new();
    for row in 0..t.rows.len() {
        let n = t.num(row, idx[0])?;
        measured.push((n, t.num(row, idx[1])?));
        predicted.push((n, t.num(row, idx[2])?));
    }
    let x_min = measured.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).max(1.0);
    let x_max = measured.iter().map(|p| p.0).fold(0.0, f64::max).max(x_min * 2.0);
    let y_max = measured.iter().chain(&predicted).map(|p| p.1).fold(0.0, f64::max) * 1.15;
    let y_max = if y_max > 0.0 { y_max } else { 1.0 };

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (900, 520)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption("Authentication time", ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d((x_min..x_max).log_scale(), 0f64..y_max)
            .map_err(draw_err)?;
        chart.configure_mesh().x_desc("certificates n").y_desc("time (ms)").draw().map_err(draw_err)?;
        for (k, (label, pts)) in [("measured", &measured), ("predicted", &predicted)].into_iter().enumerate() {
            let color = PALETTE[k];
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(draw_err)?
                .label(label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
            chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(draw_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE)
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperLeft)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

/// Renders each input CSV to `<stem>.svg` in `out_dir`, copying the CSV
/// alongside. The chart type follows the CSV columns.
pub fn emit_plots(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for input in inputs {
        let name = input.display().to_string();
        let text = fs::read_to_string(input)?;
        let table = Table::parse(&name, &text)?;
        let svg = if table.has(&BENCH_COLUMNS) {
            plot_bench(&name, &text)?
        } else {
            plot_scores(&name, &text)?
        };
        let stem = input.file_stem().map_or("plot".into(), |s| s.to_string_lossy().into_owned());
        let svg_path = out_dir.join(format!("{stem}.svg"));
        fs::write(&svg_path, svg)?;
        written.push(svg_path);
        let csv_path = out_dir.join(input.file_name().unwrap_or_default());
        if fs::canonicalize(&csv_path).ok() != fs::canonicalize(input).ok() {
            fs::write(&csv_path, &text)?;
            written.push(csv_path);
        }
    }
    Ok(written)
}
