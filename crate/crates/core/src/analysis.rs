//! Scatter statistics of identified or predicted phase-space states.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_space::{GeneralizedState, MetricParams, ModelMode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares with intercept. `r2 = 0` when `y` is constant.
pub fn fit_slope_r2(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("need at least two points to fit a line".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 1e-24 * points.iter().map(|p| p.0 * p.0).sum::<f64>()) {
        return Err(Error::InvalidInput("degenerate abscissa: zero variance".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `100 · median(|r − median(r)|) / |reference|`, without a normal
/// consistency factor.
pub fn nmad(ratios: &[f64], reference: f64) -> Result<f64> {
    if ratios.is_empty() {
        return Err(Error::InvalidInput("NMAD of an empty sample".into()));
    }
    if reference == 0.0 {
        return Err(Error::InvalidInput("NMAD reference is zero".into()));
    }
    let mut r = ratios.to_vec();
    let m = median(&mut r);
    let mut dev: Vec<f64> = r.iter().map(|v| (v - m).abs()).collect();
    Ok(100.0 * median(&mut dev) / reference.abs())
}

/// One linear relation between a strain combination and the conjugate
/// stress combination.
#[derive(Clone, Copy, Debug)]
pub struct Row {
    pub id: &'static str,
    pub x_label: &'static str,
    pub y_label: &'static str,
    x: &'static [(usize, f64)],
    y: &'static [(usize, f64)],
    reference: fn(&MetricParams) -> f64,
    full_only: bool,
}

const M0_B3_X: &[(usize, f64)] = &[(4, 1.0)];
const M0_B3_Y: &[(usize, f64)] = &[(4, 2.0)];

pub const CATALOGUE: [Row; 8] = [
    Row {
        id: "a1",
        x_label: "eps11+eps22",
        y_label: "sig11+sig22",
        x: &[(0, 1.0), (3, 1.0)],
        y: &[(0, 1.0), (3, 1.0)],
        reference: |p| 2.0 * (p.lambda + p.mu),
        full_only: false,
    },
    Row {
        id: "a2",
        x_label: "eps12",
        y_label: "sig12",
        x: &[(1, 1.0)],
        y: &[(1, 1.0)],
        reference: |p| 2.0 * p.mu,
        full_only: false,
    },
    Row {
        id: "b1",
        x_label: "gam11+gam22",
        y_label: "tau11+tau22",
        x: &[(4, 1.0), (7, 1.0)],
        y: &[(4, 1.0), (7, 1.0)],
        reference: |p| 2.0 * p.c1 * (p.lambda + p.mu),
        full_only: true,
    },
    Row {
        id: "b2",
        x_label: "gam12+gam21",
        y_label: "tau12+tau21",
        x: &[(5, 1.0), (6, 1.0)],
        y: &[(5, 1.0), (6, 1.0)],
        reference: |p| 2.0 * p.c1 * p.mu,
        full_only: true,
    },
    Row {
        id: "b3",
        x_label: "gam21-gam12",
        y_label: "tau21-tau12",
        x: &[(6, 1.0), (5, -1.0)],
        y: &[(6, 1.0), (5, -1.0)],
        reference: |p| p.kappa1,
        full_only: false,
    },
    Row {
        id: "c1",
        x_label: "zet111+zet112+zet221+zet222",
        y_label: "mu111+mu112+mu221+mu222",
        x: &[(8, 1.0), (9, 1.0), (14, 1.0), (15, 1.0)],
        y: &[(8, 1.0), (9, 1.0), (14, 1.0), (15, 1.0)],
        reference: |p| 2.0 * p.ell * p.ell * (p.lambda + p.mu),
        full_only: true,
    },
    Row {
        id: "c2",
        x_label: "zet121+zet122+zet211+zet212",
        y_label: "mu121+mu122+mu211+mu212",
        x: &[(10, 1.0), (11, 1.0), (12, 1.0), (13, 1.0)],
        y: &[(10, 1.0), (11, 1.0), (12, 1.0), (13, 1.0)],
        reference: |p| 2.0 * p.mu * p.ell * p.ell,
        full_only: true,
    },
    Row {
        id: "c3",
        x_label: "zet211+zet212-zet121-zet122",
        y_label: "mu211+mu212-mu121-mu122",
        x: &[(12, 1.0), (13, 1.0), (10, -1.0), (11, -1.0)],
        y: &[(12, 1.0), (13, 1.0), (10, -1.0), (11, -1.0)],
        reference: |p| 2.0 * p.mu * p.ell * p.ell,
        full_only: true,
    },
];

impl Row {
    pub fn by_id(id: &str) -> Result<Row> {
        CATALOGUE
            .iter()
            .find(|r| r.id == id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown row '{id}'")))
    }

    pub fn available(&self, mode: ModelMode) -> bool {
        mode == ModelMode::Full1 || !self.full_only
    }

    /// Reference slope of the relation for moduli `p`.
    pub fn reference(&self, p: &MetricParams) -> f64 {
        (self.reference)(p)
    }

    fn coeffs(&self, mode: ModelMode) -> (&'static [(usize, f64)], &'static [(usize, f64)]) {
        if self.id == "b3" && mode == ModelMode::Micropolar0 {
            // ω = γ21 − γ12 and t = τ21 = −τ12
            (M0_B3_X, M0_B3_Y)
        } else {
            (self.x, self.y)
        }
    }

    /// `(x, y)` of one state.
    pub fn point(&self, z: &GeneralizedState) -> (f64, f64) {
        let (cx, cy) = self.coeffs(z.mode());
        let x = cx.iter().map(|&(i, c)| c * z.strain()[i]).sum();
        let y = cy.iter().map(|&(i, c)| c * z.stress()[i]).sum();
        (x, y)
    }

    pub fn points(&self, states: &[GeneralizedState], mode: ModelMode) -> Result<Vec<(f64, f64)>> {
        if !self.available(mode) {
            return Err(Error::RowUnavailable {
                row: self.id.into(),
                mode: mode.to_string(),
            });
        }
        Ok(states.iter().map(|z| self.point(z)).collect())
    }
}

/// Rows available in `mode`, in catalogue order.
pub fn rows_for(mode: ModelMode) -> Vec<Row> {
    CATALOGUE.iter().copied().filter(|r| r.available(mode)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScatterSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    #[serde(skip)]
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub reference: f64,
    /// `100 (slope − reference) / reference`.
    pub rel_error: f64,
    /// NMAD of `y/x` for the polar row.
    pub nmad: Option<f64>,
    /// `|intercept|` above 5% of the `y` range.
    pub intercept_flag: bool,
}

/// Ratios `y/x` for points with `|x|` above `rel_cut` of the largest `|x|`.
pub fn ratios(points: &[(f64, f64)], rel_cut: f64) -> Vec<f64> {
    let xmax = points.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    points
        .iter()
        .filter(|p| p.0.abs() > rel_cut * xmax && p.0 != 0.0)
        .map(|p| p.1 / p.0)
        .collect()
}

/// Fits one row on its points.
pub fn series_from_points(row: &Row, points: Vec<(f64, f64)>, reference_moduli: &MetricParams) -> Result<ScatterSeries> {
    let fit = fit_slope_r2(&points)?;
    let reference = row.reference(reference_moduli);
    let (ylo, yhi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let nmad = if row.id == "b3" {
        let r = ratios(&points, 1e-6);
        if r.is_empty() {
            None
        } else {
            Some(nmad(&r, reference)?)
        }
    } else {
        None
    };
    Ok(ScatterSeries {
        name: row.id.into(),
        x_label: row.x_label.into(),
        y_label: row.y_label.into(),
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        reference,
        rel_error: if reference == 0.0 { f64::NAN } else { 100.0 * (fit.slope - reference) / reference },
        nmad,
        intercept_flag: fit.intercept.abs() > 0.05 * (yhi - ylo),
        points,
    })
}

/// Fits every requested row on `states`.
pub fn scatter_series(
    states: &[GeneralizedState],
    mode: ModelMode,
    rows: &[Row],
    reference_moduli: &MetricParams,
) -> Result<Vec<ScatterSeries>> {
    rows.iter()
        .map(|row| series_from_points(row, row.points(states, mode)?, reference_moduli))
        .collect()
}

pub const SUMMARY_HEADER: &str = "row,slope,intercept,r2,reference,rel_error_pct,nmad_pct_no_consistency_factor,intercept_flag";

/// Writes `<row>.csv` for each series and `summary.csv`.
pub fn export_scatter(
    states: &[GeneralizedState],
    mode: ModelMode,
    rows: &[Row],
    reference_moduli: &MetricParams,
    dir: impl AsRef<Path>,
) -> Result<Vec<ScatterSeries>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let series = scatter_series(states, mode, rows, reference_moduli)?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for s in &series {
        let mut csv = format!("{},{}\n", s.x_label, s.y_label);
        for (x, y) in &s.points {
            let _ = writeln!(csv, "{x},{y}");
        }
        std::fs::write(dir.join(format!("{}.csv", s.name)), csv)?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            s.name,
            s.slope,
            s.intercept,
            s.r2,
            s.reference,
            s.rel_error,
            s.nmad.map_or(String::new(), |v| v.to_string()),
            s.intercept_flag
        );
    }
    std::fs::write(dir.join("summary.csv"), summary)?;
    Ok(series)
}

/// Reads the points of a row CSV written by [`export_scatter`].
pub fn read_scatter_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let mut it = line.split(',');
        let parse = |v: Option<&str>| -> Result<f64> {
            v.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad number on line {}", k + 1)))
        };
        out.push((parse(it.next())?, parse(it.next())?));
    }
    Ok(out)
}
