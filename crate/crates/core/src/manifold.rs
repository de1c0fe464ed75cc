//! Coordinate charts on the ambient manifold M.
//!
//! A [`MetricChart`] is a single coordinate box carrying a metric `σ_ij(x)`.
//! Built-in kinds supply closed-form Christoffel symbols; tabulated metrics are
//! interpolated multilinearly and differentiated by central differences.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{self, Christoffels, Matrix, MAX_DIM, ZERO_GAMMA, ZERO_MAT};

/// JSON description of a chart: `{"kind", "n", "box", "params"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: String,
    pub n: usize,
    #[serde(rename = "box")]
    pub bbox: Vec<[f64; 2]>,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChristoffelSource {
    Analytic,
    FiniteDifference,
}

/// Christoffel symbols at one point. `values[k][i][j]` is Γ^k_ij.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelField {
    pub dim: usize,
    pub values: Christoffels,
    pub source: ChristoffelSource,
}

impl ChristoffelField {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[k][i][j]
    }
}

/// Metric, inverse metric and volume element at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricAt {
    pub metric: Matrix,
    pub inverse: Matrix,
    pub sqrt_det: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warp {
    /// `f(r) = exp(c r)`
    Exp { c: f64 },
    /// `f(r) = cosh(c r)`
    Cosh { c: f64 },
    /// `f(r) = sinh(c r) / c`
    Sinh { c: f64 },
    /// `f(r) = a + b r`
    Linear { a: f64, b: f64 },
}

impl Warp {
    fn value_and_slope(&self, r: f64) -> (f64, f64) {
        match *self {
            Warp::Exp { c } => {
                let f = (c * r).exp();
                (f, c * f)
            }
            Warp::Cosh { c } => ((c * r).cosh(), c * (c * r).sinh()),
            Warp::Sinh { c } => ((c * r).sinh() / c, (c * r).cosh()),
            Warp::Linear { a, b } => (a + b * r, b),
        }
    }
}

/// Nodal metric samples on a tensor lattice, interpolated multilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    axes: Vec<Vec<f64>>,
    /// Row-major over the lattice (last axis fastest).
    values: Vec<Matrix>,
}

impl MetricTable {
    /// Builds a table from scattered rows `(x_1..x_n, σ_11, σ_12, ..)` that must
    /// cover a full tensor lattice.
    pub fn from_rows(n: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidChart(format!("unsupported dimension {n}")));
        }
        let width = n + n * n;
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); n];
        for row in rows {
            if row.len() != width {
                return Err(Error::Csv(format!(
                    "expected {width} columns, found {}",
                    row.len()
                )));
            }
            for (k, axis) in axes.iter_mut().enumerate() {
                axis.push(row[k]);
            }
        }
        for axis in axes.iter_mut() {
            axis.sort_by(|a, b| a.total_cmp(b));
            axis.dedup();
            if axis.len() < 2 {
                return Err(Error::InvalidChart(
                    "metric table needs at least two samples per axis".into(),
                ));
            }
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if total != rows.len() {
            return Err(Error::InvalidChart(format!(
                "metric table rows ({}) do not form a full lattice ({total})",
                rows.len()
            )));
        }
        let mut values = vec![ZERO_MAT; total];
        let mut seen = vec![false; total];
        for row in rows {
            let mut flat = 0;
            for (k, axis) in axes.iter().enumerate() {
                let pos = axis.iter().position(|a| *a == row[k]).unwrap();
                flat = flat * axis.len() + pos;
            }
            if seen[flat] {
                return Err(Error::InvalidChart("duplicate metric table node".into()));
            }
            seen[flat] = true;
            let mut m = ZERO_MAT;
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = row[n + i * n + j];
                }
            }
            for i in 0..n {
                for j in 0..i {
                    let scale = m[i][j].abs().max(m[j][i].abs()).max(1.0);
                    if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                        return Err(Error::InvalidChart(format!(
                            "metric table entry at {:?} is not symmetric",
                            &row[..n]
                        )));
                    }
                    let avg = 0.5 * (m[i][j] + m[j][i]);
                    m[i][j] = avg;
                    m[j][i] = avg;
                }
            }
            if linalg::cholesky(&m, n).is_none() {
                return Err(Error::NotPositiveDefinite {
                    point: row[..n].to_vec(),
                });
            }
            values[flat] = m;
        }
        Ok(Self { axes, values })
    }

    /// Reads a CSV with an optional header row.
    pub fn from_csv(path: &Path, n: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if lineno == 0 => continue,
                Err(e) => return Err(Error::Csv(format!("line {}: {e}", lineno + 1))),
            }
        }
        Self::from_rows(n, &rows)
    }

    fn bounds(&self) -> Vec<[f64; 2]> {
        self.axes
            .iter()
            .map(|a| [a[0], *a.last().unwrap()])
            .collect()
    }

    fn interpolate(&self, x: &[f64]) -> Matrix {
        let n = self.axes.len();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for k in 0..n {
            let axis = &self.axes[k];
            let xi = x[k].clamp(axis[0], *axis.last().unwrap());
            let mut c = axis.partition_point(|a| *a <= xi);
            c = c.clamp(1, axis.len() - 1) - 1;
            base[k] = c;
            frac[k] = (xi - axis[c]) / (axis[c + 1] - axis[c]);
        }
        let mut out = ZERO_MAT;
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut flat = 0;
            for k in 0..n {
                let bit = (corner >> k) & 1;
                weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * self.axes[k].len() + base[k] + bit;
            }
            if weight == 0.0 {
                continue;
            }
            let m = &self.values[flat];
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += weight * m[i][j];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChartKind {
    Euclidean,
    /// `σ = 4 δ / (1 - |x|²)²`
    PoincareDisk,
    /// Coordinates `(θ, φ)` on a round sphere of the given radius.
    SpherePolar { radius: f64 },
    /// `σ = dr² + f(r)² (dy_2² + .. + dy_n²)`
    WarpedProduct(Warp),
    Table(MetricTable),
}

impl ChartKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ChartKind::Euclidean => "euclidean",
            ChartKind::PoincareDisk => "poincare_disk",
            ChartKind::SpherePolar { .. } => "sphere_polar",
            ChartKind::WarpedProduct(_) => "warped_product",
            ChartKind::Table(_) => "custom_table",
        }
    }
}

/// A single coordinate box with a Riemannian metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricChart {
    dim: usize,
    bbox: Vec<[f64; 2]>,
    kind: ChartKind,
    christoffel_h: f64,
}

fn param_f64(params: &Map<String, Value>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidChart(format!("parameter `{key}` must be a number"))),
        None => default.ok_or_else(|| Error::InvalidChart(format!("missing parameter `{key}`"))),
    }
}

impl MetricChart {
    /// Builds one of the built-in chart kinds and validates positive
    /// definiteness on a `9^n` sample lattice.
    pub fn builtin(
        kind: &str,
        n: usize,
        bbox: &[[f64; 2]],
        params: &Map<String, Value>,
    ) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidChart(format!(
                "dimension {n} not supported (1..={MAX_DIM})"
            )));
        }
        if bbox.len() != n {
            return Err(Error::InvalidChart(format!(
                "box has {} axes, expected {n}",
                bbox.len()
            )));
        }
        for (k, [lo, hi]) in bbox.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidChart(format!("axis {k} interval is empty")));
            }
        }
        let kind = match kind {
            "euclidean" => ChartKind::Euclidean,
            "poincare_disk" => {
                let outside = corners(bbox).any(|c| c.iter().map(|v| v * v).sum::<f64>() >= 1.0);
                if outside {
                    return Err(Error::InvalidChart(
                        "poincare_disk box must lie inside the unit ball".into(),
                    ));
                }
                ChartKind::PoincareDisk
            }
            "sphere_polar" => {
                if n != 2 {
                    return Err(Error::InvalidChart("sphere_polar requires n = 2".into()));
                }
                let radius = param_f64(params, "radius", Some(1.0))?;
                if !(radius > 0.0) {
                    return Err(Error::InvalidChart("sphere radius must be positive".into()));
                }
                let [t0, t1] = bbox[0];
                if t0 <= 0.0 || t1 >= std::f64::consts::PI {
                    return Err(Error::InvalidChart(
                        "sphere_polar θ interval must lie inside (0, π)".into(),
                    ));
                }
                ChartKind::SpherePolar { radius }
            }
            "warped_product" => {
                if n < 2 {
                    return Err(Error::InvalidChart("warped_product requires n >= 2".into()));
                }
                let warp = match params.get("warp").and_then(Value::as_str).unwrap_or("cosh") {
                    "exp" => Warp::Exp {
                        c: param_f64(params, "c", Some(1.0))?,
                    },
                    "cosh" => Warp::Cosh {
                        c: param_f64(params, "c", Some(1.0))?,
                    },
                    "sinh" => {
                        let c = param_f64(params, "c", Some(1.0))?;
                        if c == 0.0 {
                            return Err(Error::InvalidChart("sinh warp needs c != 0".into()));
                        }
                        Warp::Sinh { c }
                    }
                    "linear" => Warp::Linear {
                        a: param_f64(params, "a", Some(1.0))?,
                        b: param_f64(params, "b", Some(0.0))?,
                    },
                    other => {
                        return Err(Error::InvalidChart(format!("unknown warp `{other}`")))
                    }
                };
                ChartKind::WarpedProduct(warp)
            }
            "custom_table" | "custom-table" | "table" => {
                let table = if let Some(path) = params.get("csv").and_then(Value::as_str) {
                    MetricTable::from_csv(Path::new(path), n)?
                } else if let Some(rows) = params.get("rows") {
                    let rows: Vec<Vec<f64>> = serde_json::from_value(rows.clone())?;
                    MetricTable::from_rows(n, &rows)?
                } else {
                    return Err(Error::InvalidChart(
                        "custom_table needs `csv` or `rows`".into(),
                    ));
                };
                for (k, [lo, hi]) in table.bounds().iter().enumerate() {
                    if *lo > bbox[k][0] || *hi < bbox[k][1] {
                        return Err(Error::InvalidChart(format!(
                            "metric table does not cover the box along axis {k}"
                        )));
                    }
                }
                ChartKind::Table(table)
            }
            other => return Err(Error::UnknownChartKind(other.to_string())),
        };
        let min_width = bbox
            .iter()
            .map(|[lo, hi]| hi - lo)
            .fold(f64::INFINITY, f64::min);
        let christoffel_h = param_f64(params, "christoffel_h", Some(1e-4 * min_width))?;
        if !(christoffel_h > 0.0) {
            return Err(Error::InvalidChart("christoffel_h must be positive".into()));
        }
        let chart = Self {
            dim: n,
            bbox: bbox.to_vec(),
            kind,
            christoffel_h,
        };
        chart.check_positive_definite()?;
        Ok(chart)
    }

    pub fn from_spec(spec: &ChartSpec) -> Result<Self> {
        Self::builtin(&spec.kind, spec.n, &spec.bbox, &spec.params)
    }

    pub fn euclidean(bbox: &[[f64; 2]]) -> Result<Self> {
        Self::builtin("euclidean", bbox.len(), bbox, &Map::new())
    }

    fn check_positive_definite(&self) -> Result<()> {
        let n = self.dim;
        let samples = 9usize;
        let total = samples.pow(n as u32);
        let mut x = [0.0; MAX_DIM];
        for flat in 0..total {
            let mut rem = flat;
            for (k, xk) in x.iter_mut().enumerate().take(n) {
                let i = rem % samples;
                rem /= samples;
                let [lo, hi] = self.bbox[k];
                *xk = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            }
            let m = self.metric_tensor(&x[..n]);
            if linalg::cholesky(&m, n).is_none() {
                return Err(Error::NotPositiveDefinite {
                    point: x[..n].to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bbox(&self) -> &[[f64; 2]] {
        &self.bbox
    }

    pub fn kind(&self) -> &ChartKind {
        &self.kind
    }

    pub fn christoffel_h(&self) -> f64 {
        self.christoffel_h
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, ChartKind::Euclidean)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && self.bbox.iter().zip(x).all(|([lo, hi], v)| {
                let slack = 1e-12 * (hi - lo);
                *v >= lo - slack && *v <= hi + slack
            })
    }

    /// Raw metric evaluation without box checks.
    pub fn metric_tensor(&self, x: &[f64]) -> Matrix {
        let n = self.dim;
        match &self.kind {
            ChartKind::Euclidean => linalg::identity(n),
            ChartKind::PoincareDisk => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let s = 4.0 / ((1.0 - r2) * (1.0 - r2));
                let mut m = ZERO_MAT;
                for (i, row) in m.iter_mut().enumerate().take(n) {
                    row[i] = s;
                }
                m
            }
            ChartKind::SpherePolar { radius } => {
                let r2 = radius * radius;
                let s = x[0].sin();
                let mut m = ZERO_MAT;
                m[0][0] = r2;
                m[1][1] = r2 * s * s;
                m
            }
            ChartKind::WarpedProduct(warp) => {
                let (f, _) = warp.value_and_slope(x[0]);
                let mut m = ZERO_MAT;
                m[0][0] = 1.0;
                for (i, row) in m.iter_mut().enumerate().take(n).skip(1) {
                    row[i] = f * f;
                }
                m
            }
            ChartKind::Table(table) => table.interpolate(x),
        }
    }

    /// `(σ_ij, σ^ij, √det σ)` at `x`.
    pub fn metric_at(&self, x: &[f64]) -> Result<MetricAt> {
        if !self.contains(x) {
            return Err(Error::OutsideBox { point: x.to_vec() });
        }
        let metric = self.metric_tensor(x);
        let (inverse, sqrt_det) = linalg::spd_inverse(&metric, self.dim)
            .ok_or_else(|| Error::NotPositiveDefinite { point: x.to_vec() })?;
        Ok(MetricAt {
            metric,
            inverse,
            sqrt_det,
        })
    }

    fn analytic_christoffel(&self, x: &[f64]) -> Option<Christoffels> {
        let n = self.dim;
        let mut g = ZERO_GAMMA;
        match &self.kind {
            ChartKind::Euclidean => Some(g),
            ChartKind::PoincareDisk => {
                // Conformal metric e^{2f} δ with f = ln 2 - ln(1 - |x|²).
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let df: Vec<f64> = x.iter().map(|v| 2.0 * v / (1.0 - r2)).collect();
                for (k, gk) in g.iter_mut().enumerate().take(n) {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = 0.0;
                            if i == k {
                                v += df[j];
                            }
                            if j == k {
                                v += df[i];
                            }
                            if i == j {
                                v -= df[k];
                            }
                            gk[i][j] = v;
                        }
                    }
                }
                Some(g)
            }
            ChartKind::SpherePolar { .. } => {
                let (s, c) = x[0].sin_cos();
                g[0][1][1] = -s * c;
                g[1][0][1] = c / s;
                g[1][1][0] = c / s;
                Some(g)
            }
            ChartKind::WarpedProduct(warp) => {
                let (f, fp) = warp.value_and_slope(x[0]);
                for j in 1..n {
                    g[0][j][j] = -f * fp;
                    g[j][0][j] = fp / f;
                    g[j][j][0] = fp / f;
                }
                Some(g)
            }
            ChartKind::Table(_) => None,
        }
    }

    /// Christoffel symbols at `x`: closed form when the chart kind has one,
    /// otherwise central differences of the metric with `christoffel_h`.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<ChristoffelField> {
        if !self.contains(x) {
            return Err(Error::OutsideBox { point: x.to_vec() });
        }
        match self.analytic_christoffel(x) {
            Some(values) => Ok(ChristoffelField {
                dim: self.dim,
                values,
                source: ChristoffelSource::Analytic,
            }),
            None => self.christoffel_fd(x, self.christoffel_h),
        }
    }

    /// Christoffel symbols from second-order central differences of `σ`
    /// with spacing `spacing`, regardless of chart kind.
    pub fn christoffel_fd(&self, x: &[f64], spacing: f64) -> Result<ChristoffelField> {
        let n = self.dim;
        if !self.contains(x) {
            return Err(Error::OutsideBox { point: x.to_vec() });
        }
        let margin_ok = self
            .bbox
            .iter()
            .zip(x)
            .all(|([lo, hi], v)| v - 2.0 * spacing >= *lo && v + 2.0 * spacing <= *hi);
        if !margin_ok {
            return Err(Error::InsufficientMargin {
                point: x.to_vec(),
                spacing,
            });
        }
        // dsigma[l][i][j] = ∂_l σ_ij
        let mut dsigma = ZERO_GAMMA;
        let mut xp = [0.0; MAX_DIM];
        let mut xm = [0.0; MAX_DIM];
        for l in 0..n {
            xp[..n].copy_from_slice(x);
            xm[..n].copy_from_slice(x);
            xp[l] += spacing;
            xm[l] -= spacing;
            let sp = self.metric_tensor(&xp[..n]);
            let sm = self.metric_tensor(&xm[..n]);
            for i in 0..n {
                for j in 0..n {
                    dsigma[l][i][j] = (sp[i][j] - sm[i][j]) / (2.0 * spacing);
                }
            }
        }
        let at = self.metric_at(x)?;
        Ok(ChristoffelField {
            dim: n,
            values: christoffels_from_derivatives(&at.inverse, &dsigma, n),
            source: ChristoffelSource::FiniteDifference,
        })
    }
}

/// Γ^k_ij = ½ σ^{kl} (∂_i σ_jl + ∂_j σ_il − ∂_l σ_ij).
pub fn christoffels_from_derivatives(
    inverse: &Matrix,
    dsigma: &Christoffels,
    n: usize,
) -> Christoffels {
    let mut g = ZERO_GAMMA;
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += inverse[k][l] * (dsigma[i][j][l] + dsigma[j][i][l] - dsigma[l][i][j]);
                }
                g[k][i][j] = 0.5 * s;
                g[k][j][i] = 0.5 * s;
            }
        }
    }
    g
}

fn corners(bbox: &[[f64; 2]]) -> impl Iterator<Item = Vec<f64>> + '_ {
    let n = bbox.len();
    (0..(1usize << n)).map(move |c| {
        (0..n)
            .map(|k| bbox[k][(c >> k) & 1])
            .collect::<Vec<f64>>()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn chart(kind: &str, n: usize, bbox: &[[f64; 2]]) -> MetricChart {
        MetricChart::builtin(kind, n, bbox, &Map::new()).unwrap()
    }

    #[test]
    fn euclidean_is_identity() {
        let c = chart("euclidean", 2, &[[0.0, 1.0], [0.0, 1.0]]);
        let m = c.metric_at(&[0.3, 0.7]).unwrap();
        assert_eq!(m.metric, linalg::identity(2));
        assert_eq!(m.inverse, linalg::identity(2));
        assert_eq!(m.sqrt_det, 1.0);
        let g = c.christoffel_at(&[0.3, 0.7]).unwrap();
        assert_eq!(g.values, ZERO_GAMMA);
    }

    #[test]
    fn poincare_origin_and_off_center() {
        let c = chart("poincare_disk", 2, &[[-0.6, 0.6], [-0.6, 0.6]]);
        let m = c.metric_at(&[0.0, 0.0]).unwrap();
        assert_eq!(m.metric[0][0], 4.0);
        assert_eq!(m.metric[0][1], 0.0);
        assert_eq!(m.inverse[1][1], 0.25);
        assert_eq!(m.sqrt_det, 4.0);
        // 4 / (1 - 1/4)^2 = 64/9.
        let m = c.metric_at(&[0.5, 0.0]).unwrap();
        assert!((m.metric[0][0] - 64.0 / 9.0).abs() < 1e-14);
        let g = c.christoffel_at(&[0.0, 0.0]).unwrap();
        assert_eq!(g.values, ZERO_GAMMA);
    }

    #[test]
    fn sphere_equator_and_christoffel() {
        let c = chart("sphere_polar", 2, &[[0.2, 3.0], [0.0, 6.0]]);
        let m = c.metric_at(&[PI / 2.0, 1.0]).unwrap();
        assert!((m.metric[1][1] - 1.0).abs() < 1e-15);
        assert!((m.sqrt_det - 1.0).abs() < 1e-15);
        let g = c.christoffel_at(&[PI / 3.0, 1.0]).unwrap();
        assert!((g.get(0, 1, 1) + 3f64.sqrt() / 4.0).abs() < 1e-15);
        let fd = c.christoffel_fd(&[PI / 3.0, 1.0], 1e-4).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((fd.get(k, i, j) - g.get(k, i, j)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn unknown_kind_and_bad_boxes() {
        let b = [[0.0, 1.0], [0.0, 1.0]];
        assert!(matches!(
            MetricChart::builtin("torus", 2, &b, &Map::new()),
            Err(Error::UnknownChartKind(_))
        ));
        assert!(MetricChart::builtin("poincare_disk", 2, &b, &Map::new()).is_err());
        assert!(MetricChart::builtin("sphere_polar", 2, &[[0.0, 1.0], [0.0, 1.0]], &Map::new())
            .is_err());
    }

    #[test]
    fn table_rejects_indefinite_entry() {
        let mut rows = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                let off = if x == 1.0 && y == 1.0 { 2.0 } else { 0.0 };
                rows.push(vec![x, y, 1.0, off, off, 1.0]);
            }
        }
        assert!(matches!(
            MetricTable::from_rows(2, &rows),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn table_interpolates_bilinearly() {
        let mut rows = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                rows.push(vec![x, y, 1.0 + x + 2.0 * y, 0.0, 0.0, 1.0]);
            }
        }
        let mut params = Map::new();
        params.insert("rows".into(), serde_json::to_value(&rows).unwrap());
        let c = MetricChart::builtin("custom_table", 2, &[[0.0, 1.0], [0.0, 1.0]], &params)
            .unwrap();
        let m = c.metric_at(&[0.25, 0.5]).unwrap();
        assert!((m.metric[0][0] - 2.25).abs() < 1e-15);
        // Differenced Christoffels on an affine metric are exact up to rounding.
        let g = c.christoffel_at(&[0.5, 0.5]).unwrap();
        assert_eq!(g.source, ChristoffelSource::FiniteDifference);
        let s11 = 2.5;
        assert!((g.get(0, 0, 0) - 0.5 * 1.0 / s11).abs() < 1e-9);
    }

    #[test]
    fn fd_margin_enforced() {
        let c = chart("euclidean", 2, &[[0.0, 1.0], [0.0, 1.0]]);
        assert!(matches!(
            c.christoffel_fd(&[0.0, 0.5], 1e-3),
            Err(Error::InsufficientMargin { .. })
        ));
        assert!(matches!(
            c.metric_at(&[1.5, 0.5]),
            Err(Error::OutsideBox { .. })
        ));
    }
}
