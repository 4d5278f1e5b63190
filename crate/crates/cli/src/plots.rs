//! SVG figures rendered from the exported CSVs.

use std::fs::File;
use std::ops::Range;
use std::path::{Path, PathBuf};

use cipherfleet::sim::export::CsvTable;
use plotters::prelude::*;

use crate::error::CliError;

const SIZE: (u32, u32) = (900, 540);

fn read_table(path: &Path) -> Result<CsvTable, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    CsvTable::read(f).map_err(|e| CliError::io(path, e))
}

fn span<'a>(values: impl IntoIterator<Item = &'a f64>) -> Range<f64> {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        1e-3 * lo.abs().max(1.0)
    };
    lo - pad..hi + pad
}

fn draw_err(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

/// A named curve; `wide` curves are drawn thick and translucent underneath.
struct Curve {
    name: String,
    ys: Vec<f64>,
    color: usize,
    wide: bool,
}

/// One chart of curves sharing the `x` column.
fn line_chart(path: &Path, title: &str, y_desc: &str, x: &[f64], curves: &[Curve]) -> Result<(), CliError> {
    let err = draw_err(path);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(span(x), span(curves.iter().flat_map(|c| &c.ys)))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc(y_desc)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    let mut order: Vec<&Curve> = curves.iter().collect();
    order.sort_by_key(|c| !c.wide);
    for c in order {
        let base = Palette99::pick(c.color);
        let style = if c.wide {
            base.mix(0.4).stroke_width(6)
        } else {
            base.stroke_width(2)
        };
        chart
            .draw_series(LineSeries::new(x.iter().copied().zip(c.ys.iter().copied()), style))
            .map_err(|e| err(e.to_string()))?
            .label(c.name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], style));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// Estimate overlay and distance traces of a trajectory CSV.
pub fn trajectory_plots(input: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let table = read_table(input)?;
    let t = table.column("t").map_err(|e| CliError::io(input, e))?;
    let mut written = Vec::new();
    let curves = |prefix: &str, wide: bool| {
        table
            .columns_with_prefix(prefix)
            .into_iter()
            .enumerate()
            .map(move |(color, (name, ys))| Curve { name, ys, color, wide })
    };
    let mu: Vec<Curve> = curves("mu_hat_e", true)
        .chain(curves("mu_hat_plain_e", false))
        .collect();
    if !mu.is_empty() {
        let p = out.join("mu_hat.svg");
        line_chart(&p, "mismatch estimates", "mu_hat", &t, &mu)?;
        written.push(p);
    }
    let dist: Vec<Curve> = curves("dist_e", false).collect();
    if dist.is_empty() {
        return Err(CliError::io(input, "missing column `dist_e1`"));
    }
    let p = out.join("distances.svg");
    line_chart(&p, "inter-agent distances", "distance", &t, &dist)?;
    written.push(p);
    Ok(written)
}

/// Mean distance with its 95% band, for one key length.
fn ci_plot(input: &Path, path: &Path, n: &str) -> Result<(), CliError> {
    let table = read_table(input)?;
    let col = |name| table.column(name).map_err(|e| CliError::io(input, e));
    let (t, mean, lo, hi) = (col("t")?, col("mean")?, col("ci_low")?, col("ci_high")?);
    let err = draw_err(path);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("distance, N = {n}, 95% CI"), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(span(&t), span(lo.iter().chain(&hi).chain(&mean)))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc("distance")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    let band: Vec<(f64, f64)> = t
        .iter()
        .copied()
        .zip(hi.iter().copied())
        .chain(t.iter().copied().zip(lo.iter().copied()).rev())
        .collect();
    chart
        .draw_series(std::iter::once(Polygon::new(band, BLUE.mix(0.2).filled())))
        .map_err(|e| err(e.to_string()))?;
    chart
        .draw_series(LineSeries::new(
            t.iter().copied().zip(mean.iter().copied()),
            BLUE.stroke_width(2),
        ))
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// Box plot of the per-step encryption time quantiles against key length.
fn timing_plot(input: &Path, path: &Path) -> Result<(), CliError> {
    let table = read_table(input)?;
    let col = |name| table.column(name).map_err(|e| CliError::io(input, e));
    let n = col("key_length")?;
    let q: Vec<Vec<f64>> = ["p5_us", "p25_us", "p50_us", "p75_us", "p95_us"]
        .into_iter()
        .map(col)
        .collect::<Result<_, _>>()?;
    let err = draw_err(path);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let width = n.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let half = if width.is_finite() && width > 0.0 {
        0.25 * width
    } else {
        1.0
    };
    let mut chart = ChartBuilder::on(&root)
        .caption("encryption time per step", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(
            span(n.iter().chain(&[n[0] - 2.0 * half, n[n.len() - 1] + 2.0 * half])),
            span(q.iter().flatten()),
        )
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("key length N")
        .y_desc("microseconds")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, &x) in n.iter().enumerate() {
        let [p5, p25, p50, p75, p95] = [q[0][i], q[1][i], q[2][i], q[3][i], q[4][i]];
        let style = BLACK.stroke_width(1);
        chart
            .draw_series([
                Rectangle::new([(x - half, p25), (x + half, p75)], BLUE.mix(0.3).filled()),
                Rectangle::new([(x - half, p25), (x + half, p75)], style),
            ])
            .map_err(|e| err(e.to_string()))?;
        chart
            .draw_series([
                PathElement::new(vec![(x - half, p50), (x + half, p50)], RED.stroke_width(2)),
                PathElement::new(vec![(x, p75), (x, p95)], style),
                PathElement::new(vec![(x, p25), (x, p5)], style),
                PathElement::new(vec![(x - half / 2.0, p95), (x + half / 2.0, p95)], style),
                PathElement::new(vec![(x - half / 2.0, p5), (x + half / 2.0, p5)], style),
            ])
            .map_err(|e| err(e.to_string()))?;
    }
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// One CI figure per `stats_N{n}.csv` and a timing figure for `timing.csv`.
pub fn sweep_plots(dir: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut stats: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some(n) = name.strip_prefix("stats_N").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(n) = n.parse() {
                stats.push((n, path.clone()));
            }
        }
    }
    stats.sort();
    let timing = dir.join("timing.csv");
    if stats.is_empty() && !timing.exists() {
        return Err(CliError::io(dir, "no stats_N*.csv or timing.csv to plot"));
    }
    let mut written = Vec::new();
    for (n, path) in stats {
        let p = out.join(format!("ci_N{n}.svg"));
        ci_plot(&path, &p, &n.to_string())?;
        written.push(p);
    }
    if timing.exists() {
        let p = out.join("timing.svg");
        timing_plot(&timing, &p)?;
        written.push(p);
    }
    Ok(written)
}
