//! Per-scenario report: prediction-curve and recovered-prior tables as CSV,
//! plus a two-panel SVG drawn from the same tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use prior_lens_core::store::{atomic_write, fits_to_json};
use prior_lens_core::{
    prediction_curve, prior_density, Family, FitResult, PredictionPair, QuadratureConfig,
};

use crate::error::{CliError, Result};
use crate::fit::describe;

/// Samples in the recovered-prior table.
pub const DENSITY_POINTS: usize = 401;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub t: f64,
    pub observed: f64,
    /// Fitted t* per family in [`Family::ALL`] order; `None` for a family
    /// that was excluded from the selection.
    pub fitted: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub scenario: String,
    pub curve: Vec<CurveRow>,
    /// `(x, density)` of the winning prior over `[min t, 1.5 × max fitted t*]`,
    /// normalized to unit trapezoid area.
    pub density: Vec<(f64, f64)>,
    pub winner: FitResult,
}

fn family_index(family: Family) -> usize {
    Family::ALL
        .iter()
        .position(|&f| f == family)
        .expect("family listed in ALL")
}

fn color(family: Family) -> &'static str {
    match family {
        Family::PowerLaw => "#1f77b4",
        Family::Erlang => "#d62728",
        Family::Gaussian => "#2ca02c",
    }
}

impl ReportBundle {
    /// `ranked` lists the fitted families best first.
    pub fn build(
        scenario: &str,
        pairs: &[PredictionPair],
        ranked: &[FitResult],
        cfg: &QuadratureConfig,
    ) -> Result<Self> {
        let winner = ranked
            .first()
            .ok_or_else(|| CliError::Data("no fit results to report".into()))?
            .clone();
        if pairs.is_empty() {
            return Err(CliError::Data("no pairs to report".into()));
        }
        let ts: Vec<f64> = pairs.iter().map(|p| p.t).collect();
        let mut fitted: [Option<Vec<f64>>; 3] = Default::default();
        for fit in ranked {
            let curve = prediction_curve(&fit.prior(), &ts, cfg)?;
            fitted[family_index(fit.family)] = Some(curve.into_iter().map(|p| p.t_star).collect());
        }
        let curve = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| CurveRow {
                t: p.t,
                observed: p.t_star,
                fitted: std::array::from_fn(|f| fitted[f].as_ref().map(|v| v[i])),
            })
            .collect();

        let winner_curve = fitted[family_index(winner.family)]
            .as_ref()
            .expect("winner was fitted");
        let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = 1.5
            * winner_curve
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        let prior = winner.prior();
        let step = (hi - lo) / (DENSITY_POINTS - 1) as f64;
        let mut density = (0..DENSITY_POINTS)
            .map(|i| {
                let x = if i + 1 == DENSITY_POINTS {
                    hi
                } else {
                    lo + step * i as f64
                };
                Ok((x, prior_density(&prior, x)?))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let area: f64 = density
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum();
        if !(area > 0.0 && area.is_finite()) {
            return Err(CliError::Data(format!(
                "{} prior has no mass over the display range [{lo}, {hi}]",
                winner.family
            )));
        }
        for point in &mut density {
            point.1 /= area;
        }
        Ok(ReportBundle {
            scenario: scenario.to_string(),
            curve,
            density,
            winner,
        })
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("t,observed");
        for family in Family::ALL {
            write!(out, ",{}", family.name().replace('-', "_")).unwrap();
        }
        out.push('\n');
        for row in &self.curve {
            write!(out, "{},{}", row.t, row.observed).unwrap();
            for value in row.fitted {
                out.push(',');
                if let Some(v) = value {
                    write!(out, "{v}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn density_csv(&self) -> String {
        let mut out = String::from("x,density\n");
        for (x, d) in &self.density {
            writeln!(out, "{x},{d}").unwrap();
        }
        out
    }

    /// Writes `<scenario>.curve.csv`, `<scenario>.prior.csv`,
    /// `<scenario>.winner.json` and `<scenario>.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let stem: String = self
            .scenario
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let files = [
            (format!("{stem}.curve.csv"), self.curve_csv()),
            (format!("{stem}.prior.csv"), self.density_csv()),
            (
                format!("{stem}.winner.json"),
                fits_to_json(std::slice::from_ref(&self.winner))?,
            ),
            (format!("{stem}.svg"), self.svg()),
        ];
        let mut written = Vec::with_capacity(files.len());
        for (name, text) in files {
            let path = dir.join(name);
            atomic_write(&path, |w| {
                w.write_all(text.as_bytes())
                    .map_err(|source| prior_lens_core::StoreError::Io {
                        path: path.clone(),
                        source,
                    })
            })?;
            written.push(path);
        }
        Ok(written)
    }

    /// Left panel: observed and fitted t* against t. Right panel: the
    /// winning family's recovered prior.
    pub fn svg(&self) -> String {
        const WIDTH: f64 = 960.0;
        const HEIGHT: f64 = 400.0;
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        )
        .unwrap();
        writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        )
        .unwrap();

        let t_max = self.curve.iter().map(|r| r.t).fold(0.0, f64::max);
        let y_max = self
            .curve
            .iter()
            .flat_map(|r| std::iter::once(r.observed).chain(r.fitted.iter().flatten().copied()))
            .fold(0.0, f64::max);
        let left = Panel::new(70.0, 50.0, (0.0, t_max), (0.0, y_max.max(t_max)));
        left.frame(
            &mut svg,
            &format!("{}: predictions", escape(&self.scenario)),
            "t",
            "t*",
        );
        // t* = t, the least any posterior median can be
        left.polyline(
            &mut svg,
            &[(0.0, 0.0), (left.x.1, left.x.1.min(left.y.1))],
            "#999999",
            1.0,
            Some("4 3"),
        );
        for family in Family::ALL {
            let points: Vec<(f64, f64)> = self
                .curve
                .iter()
                .filter_map(|r| r.fitted[family_index(family)].map(|v| (r.t, v)))
                .collect();
            if points.is_empty() {
                continue;
            }
            let winner = family == self.winner.family;
            let dash = if winner { None } else { Some("6 3") };
            left.polyline(
                &mut svg,
                &points,
                color(family),
                if winner { 2.5 } else { 1.2 },
                dash,
            );
        }
        for r in &self.curve {
            let (x, y) = left.map(r.t, r.observed);
            writeln!(
                svg,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="black" fill-opacity="0.7"/>"#
            )
            .unwrap();
        }
        let mut legend_y = left.top + 16.0;
        for family in Family::ALL {
            if self
                .curve
                .first()
                .is_some_and(|r| r.fitted[family_index(family)].is_some())
            {
                let lx = left.left + 12.0;
                writeln!(
                    svg,
                    r#"<line x1="{lx}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                    lx + 20.0,
                    color(family),
                    lx + 26.0,
                    legend_y + 4.0,
                    family.name()
                )
                .unwrap();
                legend_y += 16.0;
            }
        }

        let (x0, x1) = (self.density[0].0, self.density[self.density.len() - 1].0);
        let d_max = self.density.iter().map(|p| p.1).fold(0.0, f64::max);
        let right = Panel::new(550.0, 50.0, (x0, x1), (0.0, d_max));
        let title = format!(
            "recovered prior: {} {}",
            self.winner.family.name(),
            describe(&self.winner.params)
        );
        right.frame(&mut svg, &escape(&title), "total", "density");
        right.polyline(
            &mut svg,
            &self.density,
            color(self.winner.family),
            2.0,
            None,
        );
        svg.push_str("</svg>\n");
        svg
    }
}

struct Panel {
    left: f64,
    top: f64,
    x: (f64, f64),
    y: (f64, f64),
    x_ticks: Vec<f64>,
    y_ticks: Vec<f64>,
}

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 290.0;

impl Panel {
    fn new(left: f64, top: f64, x: (f64, f64), y: (f64, f64)) -> Self {
        let x_ticks = ticks(x.0, x.1);
        let y_ticks = ticks(y.0, y.1);
        let widen = |(lo, hi): (f64, f64), t: &[f64]| {
            let (a, b) = (t[0].min(lo), t[t.len() - 1].max(hi));
            if b > a {
                (a, b)
            } else {
                (a, a + 1.0)
            }
        };
        Panel {
            left,
            top,
            x: widen(x, &x_ticks),
            y: widen(y, &y_ticks),
            x_ticks,
            y_ticks,
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = self.left + (x - self.x.0) / (self.x.1 - self.x.0) * PANEL_W;
        let py = self.top + PANEL_H - (y - self.y.0) / (self.y.1 - self.y.0) * PANEL_H;
        (px, py)
    }

    fn frame(&self, svg: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (l, t, r, b) = (self.left, self.top, self.left + PANEL_W, self.top + PANEL_H);
        for &v in &self.x_ticks {
            let (x, _) = self.map(v, self.y.0);
            writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{t}" x2="{x:.2}" y2="{b}" stroke="#eeeeee"/>"##
            )
            .unwrap();
            writeln!(
                svg,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                b + 16.0,
                label(v)
            )
            .unwrap();
        }
        for &v in &self.y_ticks {
            let (_, y) = self.map(self.x.0, v);
            writeln!(
                svg,
                r##"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#eeeeee"/>"##
            )
            .unwrap();
            writeln!(
                svg,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 6.0,
                y + 4.0,
                label(v)
            )
            .unwrap();
        }
        writeln!(svg, r#"<rect x="{l}" y="{t}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#)
            .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#,
            l + PANEL_W / 2.0,
            t - 14.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
            l + PANEL_W / 2.0,
            b + 36.0
        )
        .unwrap();
        let (yx, yy) = (l - 50.0, t + PANEL_H / 2.0);
        writeln!(svg, r#"<text x="{yx}" y="{yy}" text-anchor="middle" transform="rotate(-90 {yx} {yy})">{y_label}</text>"#)
            .unwrap();
    }

    fn polyline(
        &self,
        svg: &mut String,
        points: &[(f64, f64)],
        stroke: &str,
        width: f64,
        dash: Option<&str>,
    ) {
        let mut coords = String::new();
        for &(x, y) in points {
            let (px, py) = self.map(x, y);
            write!(coords, "{px:.2},{py:.2} ").unwrap();
        }
        let dash = dash
            .map(|d| format!(r#" stroke-dasharray="{d}""#))
            .unwrap_or_default();
        writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash}/>"#,
            coords.trim_end()
        )
        .unwrap();
    }
}

/// Round-numbered ticks (steps of 1, 2 or 5 × 10^k) covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    let raw = span / 5.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * magnitude);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil().max(first as f64 + 1.0) as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
