//! Boundary barriers `v = ψ^{1/2}`,
//!
//! ```text
//! ψ(y) = K²|y|² + 2α (y_n − w(y′)),
//! ```
//!
//! written in a frame at a boundary point `x⁰` whose last axis is the inner
//! normal and in which the boundary is the graph `y_n = w(y′)` with
//! `w(0) = 0, Dw(0) = 0`. Near `x⁰` the sign of `Qv` is governed by
//!
//! ```text
//! v Qv → −(1 − K² tr P + α P:D²w + α P:Γⁿ),   P = σ^{-1} − σ^{·n}σ^{n·}/σ^{nn},
//! ```
//!
//! which is the "limit margin" reported here.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridField};
use crate::linalg::{self, Christoffels, Matrix, Vector, ZERO_GAMMA, ZERO_MAT, ZERO_VEC};
use crate::manifold::MetricChart;

/// `Qv` must be below `−QV_MARGIN` at every sampled point.
pub const QV_MARGIN: f64 = 1e-8;
pub const ALPHA_MIN: f64 = 1e-6;
/// Boundary samples used for the graph fit lie within this many cells.
pub const FIT_RADIUS_CELLS: f64 = 8.0;

/// Rotated frame at a boundary point and the quadratic boundary graph in it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryFit {
    pub x0: Vec<f64>,
    /// Rows are the frame axes in chart coordinates; the last is the inner
    /// normal.
    pub frame: Vec<Vec<f64>>,
    /// `D²w(0)`, `(n−1)×(n−1)`.
    pub w_hessian: Vec<Vec<f64>>,
    /// Operator norm of `D²w(0)`.
    pub curvature_bound: f64,
    pub samples: usize,
    pub max_residual: f64,
}

impl BoundaryFit {
    /// Frame coordinates `y = F (x − x⁰)`.
    pub fn to_frame(&self, x: &[f64]) -> Vec<f64> {
        self.frame
            .iter()
            .map(|row| row.iter().zip(x.iter().zip(&self.x0)).map(|(f, (a, b))| f * (a - b)).sum())
            .collect()
    }

    /// Chart coordinates `x = x⁰ + Fᵀ y`.
    pub fn from_frame(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.x0.clone();
        for (row, yk) in self.frame.iter().zip(y) {
            for (xi, f) in x.iter_mut().zip(row) {
                *xi += f * yk;
            }
        }
        x
    }

    /// `w(y′) = ½ y′ᵀ D²w y′`.
    pub fn w(&self, y: &[f64]) -> f64 {
        let m = self.w_hessian.len();
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += self.w_hessian[a][b] * y[a] * y[b];
            }
        }
        0.5 * s
    }
}

/// Fits the boundary near `x0` as a graph over its tangent plane.
///
/// The normal is the least-variance direction of the boundary samples within
/// `8h`, oriented into the domain; `D²w(0)` is the least-squares quadratic
/// through the samples with zero constant and linear part. A fit whose
/// residual exceeds a tenth of the sampling radius (a corner, for instance)
/// is degenerate.
pub fn fit_boundary_graph(domain: &GridDomain, x0: &[f64]) -> Result<BoundaryFit> {
    let n = domain.dim();
    let h = domain.h_max();
    let node_hint = nearest_node(domain, x0);
    let degenerate = |reason: &str| Error::DegenerateFit {
        node: node_hint,
        reason: reason.to_string(),
    };
    if x0.len() != n {
        return Err(degenerate("point has the wrong dimension"));
    }
    let inward = inward_direction(domain, x0).ok_or_else(|| degenerate("no interior nodes nearby"))?;
    if n == 1 {
        return Ok(BoundaryFit {
            x0: x0.to_vec(),
            frame: vec![vec![inward[0].signum()]],
            w_hessian: Vec::new(),
            curvature_bound: 0.0,
            samples: 1,
            max_residual: 0.0,
        });
    }

    let radius = FIT_RADIUS_CELLS * h;
    let samples: Vec<Vec<f64>> = domain
        .boundary_points()
        .into_iter()
        .filter(|p| dist(p, x0) <= radius)
        .collect();
    if samples.len() < 2 * n {
        return Err(degenerate(&format!(
            "{} boundary samples within {radius}, need {}",
            samples.len(),
            2 * n
        )));
    }

    let m = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for p in &samples {
        for k in 0..n {
            mean[k] += p[k] / m;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for p in &samples {
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut normal: Vec<f64> = (0..n).map(|k| eig.eigenvectors[(k, order[0])]).collect();
    let dot: f64 = normal.iter().zip(&inward).map(|(a, b)| a * b).sum();
    if dot.abs() < 1e-12 {
        return Err(degenerate("normal is tangent to the interior direction"));
    }
    if dot < 0.0 {
        normal.iter_mut().for_each(|v| *v = -*v);
    }
    let frame = complete_frame(&normal);

    let mut fit = BoundaryFit {
        x0: x0.to_vec(),
        frame,
        w_hessian: vec![vec![0.0; n - 1]; n - 1],
        curvature_bound: 0.0,
        samples: samples.len(),
        max_residual: 0.0,
    };
    // unknowns: upper triangle of D²w
    let pairs: Vec<(usize, usize)> = (0..n - 1)
        .flat_map(|a| (a..n - 1).map(move |b| (a, b)))
        .collect();
    let ys: Vec<Vec<f64>> = samples.iter().map(|p| fit.to_frame(p)).collect();
    let design = DMatrix::from_fn(ys.len(), pairs.len(), |r, c| {
        let (a, b) = pairs[c];
        let y = &ys[r];
        if a == b {
            0.5 * y[a] * y[a]
        } else {
            y[a] * y[b]
        }
    });
    let rhs = DVector::from_fn(ys.len(), |r, _| ys[r][n - 1]);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-10 * smax {
        return Err(degenerate("rank-deficient quadratic fit"));
    }
    let coef = svd
        .solve(&rhs, 1e-12 * smax)
        .map_err(|e| degenerate(e))?;
    for (c, &(a, b)) in pairs.iter().enumerate() {
        fit.w_hessian[a][b] = coef[c];
        fit.w_hessian[b][a] = coef[c];
    }
    let residual = &design * &coef - rhs;
    fit.max_residual = residual.amax();
    if fit.max_residual > 0.1 * radius {
        return Err(degenerate(&format!(
            "boundary is not a graph over its tangent plane (residual {:.3e})",
            fit.max_residual
        )));
    }
    let hess = DMatrix::from_fn(n - 1, n - 1, |a, b| fit.w_hessian[a][b]);
    fit.curvature_bound = SymmetricEigen::new(hess)
        .eigenvalues
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(fit)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn nearest_node(domain: &GridDomain, x: &[f64]) -> usize {
    let idx: Vec<usize> = (0..domain.dim())
        .map(|k| {
            let lo = domain.chart().bbox()[k][0];
            let i = ((x.get(k).copied().unwrap_or(lo) - lo) / domain.spacing()[k]).round();
            (i.max(0.0) as usize).min(domain.shape()[k] - 1)
        })
        .collect();
    domain.node_at(&idx).unwrap_or(0)
}

/// Mean direction from `x0` to the interior nodes within two cells.
fn inward_direction(domain: &GridDomain, x0: &[f64]) -> Option<Vec<f64>> {
    let n = domain.dim();
    let reach = 2.0 * domain.h_max() + 1e-12;
    let mut dir = vec![0.0; n];
    let mut count = 0;
    let mut x = vec![0.0; n];
    for &p in domain.interior() {
        domain.coords_into(p, &mut x);
        let r = dist(&x, x0);
        if r <= reach && r > 0.0 {
            for k in 0..n {
                dir[k] += (x[k] - x0[k]) / r;
            }
            count += 1;
        }
    }
    (count > 0).then_some(dir)
}

/// Orthonormal rows whose last row is `normal`.
fn complete_frame(normal: &[f64]) -> Vec<Vec<f64>> {
    let n = normal.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut candidates: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            e
        })
        .collect();
    // prefer the axes least aligned with the normal
    candidates.sort_by(|a, b| {
        let da: f64 = a.iter().zip(normal).map(|(x, y)| x * y).sum::<f64>().abs();
        let db: f64 = b.iter().zip(normal).map(|(x, y)| x * y).sum::<f64>().abs();
        da.total_cmp(&db)
    });
    let mut basis = vec![normal.to_vec()];
    for c in candidates {
        if rows.len() == n - 1 {
            break;
        }
        let mut v = c.clone();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v.clone());
            rows.push(v);
        }
    }
    rows.push(normal.to_vec());
    rows
}

/// The barrier at one boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierSpec {
    pub fit: BoundaryFit,
    pub k: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub radius: f64,
}

impl BarrierSpec {
    pub fn new(fit: BoundaryFit, k: f64, gamma: f64, alpha: f64, radius: f64) -> Result<Self> {
        if !(k > 0.0 && gamma > 1.0 && alpha > 0.0 && radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "barrier needs K > 0, gamma > 1, alpha > 0, radius > 0 \
                 (got K = {k}, gamma = {gamma}, alpha = {alpha}, radius = {radius})"
            )));
        }
        Ok(Self {
            fit,
            k,
            gamma,
            alpha,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.fit.x0.len()
    }

    /// `K < 1/√((n−1)γ)`.
    pub fn admissible(&self) -> bool {
        k_admissible(self.k, self.gamma, self.dim())
    }

    fn psi_frame(&self, y: &[f64]) -> f64 {
        let n = y.len();
        let r2: f64 = y.iter().map(|v| v * v).sum();
        self.k * self.k * r2 + 2.0 * self.alpha * (y[n - 1] - self.fit.w(y))
    }
}

pub fn k_admissible(k: f64, gamma: f64, n: usize) -> bool {
    n <= 1 || k * ((n - 1) as f64 * gamma).sqrt() < 1.0
}

/// `(ψ, v)` at chart point `x`.
pub fn psi_eval(spec: &BarrierSpec, x: &[f64]) -> Result<(f64, f64)> {
    let y = spec.fit.to_frame(x);
    let psi = spec.psi_frame(&y);
    if psi < 0.0 || (psi == 0.0 && y.iter().any(|v| *v != 0.0)) {
        return Err(Error::NonPositiveBarrier { point: x.to_vec() });
    }
    Ok((psi, psi.sqrt()))
}

/// Chart metric data expressed in a frame: `(σ̃^{ab}, Γ̃^c_ab)`.
fn frame_geometry(chart: &MetricChart, frame: &[Vec<f64>], x: &[f64]) -> Result<(Matrix, Christoffels)> {
    let n = frame.len();
    let at = chart.metric_at(x)?;
    let gamma = chart.christoffel_at(x)?;
    let mut inv = ZERO_MAT;
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += frame[a][i] * at.inverse[i][j] * frame[b][j];
                }
            }
            inv[a][b] = s;
        }
    }
    let mut g = ZERO_GAMMA;
    if gamma.values != ZERO_GAMMA {
        for c in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                s += frame[c][k] * gamma.values[k][i][j] * frame[a][i] * frame[b][j];
                            }
                        }
                    }
                    g[c][a][b] = s;
                }
            }
        }
    }
    Ok((inv, g))
}

/// `g^{ab}(v_ab − Γ^c_ab v_c)` from frame derivatives of `v`.
fn assemble_q(inv: &Matrix, gamma: &Christoffels, dv: &Vector, d2v: &Matrix, n: usize) -> f64 {
    let up = linalg::mat_vec(inv, dv, n);
    let w2 = 1.0 + linalg::dot(&up, dv, n);
    let mut q = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut hess = d2v[a][b];
            for c in 0..n {
                hess -= gamma[c][a][b] * dv[c];
            }
            q += (inv[a][b] - up[a] * up[b] / w2) * hess;
        }
    }
    q
}

/// `Qv` at chart point `x` from the closed-form derivatives of `ψ`.
pub fn q_on_barrier(chart: &MetricChart, spec: &BarrierSpec, x: &[f64]) -> Result<f64> {
    let (_, v) = psi_eval(spec, x)?;
    if v < 1e-12 {
        return Err(Error::TooCloseToBoundaryPoint { v });
    }
    let n = spec.dim();
    let y = spec.fit.to_frame(x);
    let (inv, gamma) = frame_geometry(chart, &spec.fit.frame, x)?;
    let (dv, d2v) = barrier_derivatives(spec, &y, v);
    Ok(assemble_q(&inv, &gamma, &dv, &d2v, n))
}

fn barrier_derivatives(spec: &BarrierSpec, y: &[f64], v: f64) -> (Vector, Matrix) {
    let n = y.len();
    let k2 = spec.k * spec.k;
    let al = spec.alpha;
    let a = &spec.fit.w_hessian;
    let mut dpsi = ZERO_VEC;
    let mut d2psi = ZERO_MAT;
    for i in 0..n {
        dpsi[i] = 2.0 * k2 * y[i];
        d2psi[i][i] = 2.0 * k2;
    }
    dpsi[n - 1] += 2.0 * al;
    for i in 0..n - 1 {
        let mut wi = 0.0;
        for j in 0..n - 1 {
            wi += a[i][j] * y[j];
            d2psi[i][j] -= 2.0 * al * a[i][j];
        }
        dpsi[i] -= 2.0 * al * wi;
    }
    let mut dv = ZERO_VEC;
    let mut d2v = ZERO_MAT;
    for i in 0..n {
        dv[i] = dpsi[i] / (2.0 * v);
    }
    for i in 0..n {
        for j in 0..n {
            d2v[i][j] = d2psi[i][j] / (2.0 * v) - dpsi[i] * dpsi[j] / (4.0 * v * v * v);
        }
    }
    (dv, d2v)
}

/// `Qv` from central differences of `v` in the frame (step `fd_h`), with the
/// same metric data; an independent check of `q_on_barrier`.
pub fn q_on_barrier_fd(chart: &MetricChart, spec: &BarrierSpec, x: &[f64], fd_h: f64) -> Result<f64> {
    let n = spec.dim();
    let y0 = spec.fit.to_frame(x);
    let v = |y: &[f64]| -> Result<f64> {
        let psi = spec.psi_frame(y);
        if psi <= 0.0 {
            return Err(Error::NonPositiveBarrier {
                point: spec.fit.from_frame(y),
            });
        }
        Ok(psi.sqrt())
    };
    let shifted = |moves: &[(usize, f64)]| -> Result<f64> {
        let mut y = y0.clone();
        for &(k, s) in moves {
            y[k] += s * fd_h;
        }
        v(&y)
    };
    let v0 = v(&y0)?;
    let mut dv = ZERO_VEC;
    let mut d2v = ZERO_MAT;
    for a in 0..n {
        let p = shifted(&[(a, 1.0)])?;
        let m = shifted(&[(a, -1.0)])?;
        dv[a] = (p - m) / (2.0 * fd_h);
        d2v[a][a] = (p - 2.0 * v0 + m) / (fd_h * fd_h);
        for b in (a + 1)..n {
            let pp = shifted(&[(a, 1.0), (b, 1.0)])?;
            let pm = shifted(&[(a, 1.0), (b, -1.0)])?;
            let mp = shifted(&[(a, -1.0), (b, 1.0)])?;
            let mm = shifted(&[(a, -1.0), (b, -1.0)])?;
            d2v[a][b] = (pp - pm - mp + mm) / (4.0 * fd_h * fd_h);
            d2v[b][a] = d2v[a][b];
        }
    }
    let (inv, gamma) = frame_geometry(chart, &spec.fit.frame, x)?;
    Ok(assemble_q(&inv, &gamma, &dv, &d2v, n))
}

/// `1 − K² tr P + α P:D²w + α P:Γⁿ` at `x⁰`; positive means `Qv < 0` close
/// to `x⁰`.
pub fn limit_margin(chart: &MetricChart, spec: &BarrierSpec) -> Result<f64> {
    let n = spec.dim();
    let (inv, gamma) = frame_geometry(chart, &spec.fit.frame, &spec.fit.x0)?;
    let nn = n - 1;
    let mut p = ZERO_MAT;
    for a in 0..n {
        for b in 0..n {
            p[a][b] = inv[a][b] - inv[a][nn] * inv[nn][b] / inv[nn][nn];
        }
    }
    let mut trace = 0.0;
    let mut curv = 0.0;
    let mut conn = 0.0;
    for a in 0..n {
        trace += p[a][a];
        for b in 0..n {
            if a < nn && b < nn {
                curv += p[a][b] * spec.fit.w_hessian[a][b];
            }
            conn += p[a][b] * gamma[nn][a][b];
        }
    }
    Ok(1.0 - spec.k * spec.k * trace + spec.alpha * (curv + conn))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOptions {
    /// Largest neighbourhood radius tried; `None` means a quarter of the
    /// smallest box width.
    pub r_max: Option<f64>,
    pub alpha_min: f64,
    pub bisection_steps: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            r_max: None,
            alpha_min: ALPHA_MIN,
            bisection_steps: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierStatus {
    Certified,
    InadmissibleK,
    DegenerateFit,
    NoAdmissiblePair,
}

/// Outcome of the barrier search at one boundary point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierPointReport {
    pub x0: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    pub gamma: f64,
    pub alpha: Option<f64>,
    pub radius: Option<f64>,
    pub limit_margin: Option<f64>,
    /// Smallest `v` on the inner rim of the neighbourhood: the oscillation of
    /// `φ` this barrier can absorb.
    pub rim_height: Option<f64>,
    pub curvature_bound: Option<f64>,
    pub sampled_points: usize,
    pub certified: bool,
    pub status: BarrierStatus,
    pub detail: String,
    #[serde(skip)]
    pub spec: Option<BarrierSpec>,
}

/// Interior nodes near `x⁰` with their frame data, sorted by distance.
struct Neighbourhood {
    points: Vec<(f64, Vec<f64>, Vec<f64>, Matrix, Christoffels)>,
}

impl Neighbourhood {
    fn collect(domain: &GridDomain, fit: &BoundaryFit, r_max: f64) -> Result<Self> {
        let n = domain.dim();
        let mut points = Vec::new();
        let mut x = vec![0.0; n];
        for &p in domain.interior() {
            domain.coords_into(p, &mut x);
            let r = dist(&x, &fit.x0);
            if r <= r_max {
                let (inv, gamma) = frame_geometry(domain.chart(), &fit.frame, &x)?;
                points.push((r, x.clone(), fit.to_frame(&x), inv, gamma));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { points })
    }

    fn within(&self, r: f64) -> usize {
        self.points.partition_point(|p| p.0 <= r)
    }

    fn feasible(&self, spec: &BarrierSpec, r: f64) -> bool {
        let n = spec.dim();
        let count = self.within(r);
        count > 0
            && self.points[..count].iter().all(|(_, _, y, inv, gamma)| {
                // v must be positive on the whole neighbourhood, not just
                // a supersolution where it is defined
                let psi = spec.psi_frame(y);
                if psi <= 0.0 {
                    return false;
                }
                let v = psi.sqrt();
                let (dv, d2v) = barrier_derivatives(spec, y, v);
                assemble_q(inv, gamma, &dv, &d2v, n) < -QV_MARGIN
            })
    }

    /// Smallest `v` over nodes in the outermost cell-wide shell.
    fn rim_height(&self, spec: &BarrierSpec, r: f64, h: f64) -> f64 {
        let count = self.within(r);
        self.points[..count]
            .iter()
            .filter(|p| p.0 > r - h)
            .map(|p| spec.psi_frame(&p.2).max(0.0).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Searches a neighbourhood radius and `α` for which `Qv < 0` at every
/// sampled interior node near `x⁰`: the largest radius first, then the
/// largest `α` at that radius. Failures are reported, not raised.
pub fn search_alpha(
    domain: &GridDomain,
    x0: &[f64],
    k: f64,
    gamma: f64,
    options: &SearchOptions,
) -> BarrierPointReport {
    let n = domain.dim();
    let h = domain.h_max();
    let mut report = BarrierPointReport {
        x0: x0.to_vec(),
        k,
        gamma,
        alpha: None,
        radius: None,
        limit_margin: None,
        rim_height: None,
        curvature_bound: None,
        sampled_points: 0,
        certified: false,
        status: BarrierStatus::NoAdmissiblePair,
        detail: String::new(),
        spec: None,
    };
    if !(k > 0.0) || !(gamma > 1.0) || !k_admissible(k, gamma, n) {
        report.status = BarrierStatus::InadmissibleK;
        report.detail = format!(
            "requires K > 0, gamma > 1 and K < 1/sqrt((n-1) gamma) = {:.6}",
            if n > 1 { 1.0 / ((n - 1) as f64 * gamma).sqrt() } else { f64::INFINITY }
        );
        return report;
    }
    let fit = match fit_boundary_graph(domain, x0) {
        Ok(f) => f,
        Err(e) => {
            report.status = BarrierStatus::DegenerateFit;
            report.detail = e.to_string();
            return report;
        }
    };
    report.curvature_bound = Some(fit.curvature_bound);
    let r_max = options.r_max.unwrap_or_else(|| {
        0.25 * domain
            .chart()
            .bbox()
            .iter()
            .map(|[a, b]| b - a)
            .fold(f64::INFINITY, f64::min)
    });
    let r_min = 2.0 * h;
    if r_max < r_min {
        report.detail = format!("r_max = {r_max} is below two cells");
        return report;
    }
    let hood = match Neighbourhood::collect(domain, &fit, r_max) {
        Ok(hd) => hd,
        Err(e) => {
            report.detail = e.to_string();
            return report;
        }
    };
    let make = |alpha: f64, radius: f64| BarrierSpec {
        fit: fit.clone(),
        k,
        gamma,
        alpha,
        radius,
    };
    let largest_radius = |alpha: f64| -> Option<f64> {
        let spec = make(alpha, r_max);
        if hood.feasible(&spec, r_max) {
            return Some(r_max);
        }
        if !hood.feasible(&spec, r_min) {
            return None;
        }
        let (mut lo, mut hi) = (r_min, r_max);
        for _ in 0..options.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if hood.feasible(&spec, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    };

    // geometric ladder 1, 1/2, 1/4, ... down to alpha_min
    let mut best: Option<(f64, f64, usize)> = None;
    let mut alpha = 1.0;
    let mut rung = 0;
    while alpha >= options.alpha_min {
        if let Some(r) = largest_radius(alpha) {
            if best.map_or(true, |(br, _, _)| r > br * (1.0 + 1e-12)) {
                best = Some((r, alpha, rung));
            }
            if r >= r_max {
                break;
            }
        }
        alpha *= 0.5;
        rung += 1;
    }
    let Some((radius, mut alpha, rung)) = best else {
        report.detail = format!("no feasible (alpha, radius) down to alpha = {}", options.alpha_min);
        return report;
    };
    if rung > 0 {
        // the largest alpha between this rung and the one above that keeps
        // the radius
        let (mut lo, mut hi) = (alpha, 2.0 * alpha);
        for _ in 0..options.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if hood.feasible(&make(mid, radius), radius) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        alpha = lo;
    }
    let spec = make(alpha, radius);
    report.alpha = Some(alpha);
    report.radius = Some(radius);
    report.sampled_points = hood.within(radius);
    report.rim_height = Some(hood.rim_height(&spec, radius, h));
    match limit_margin(domain.chart(), &spec) {
        Ok(m) => report.limit_margin = Some(m),
        Err(e) => report.detail = e.to_string(),
    }
    report.certified = true;
    report.status = BarrierStatus::Certified;
    report.spec = Some(spec);
    report
}

/// Aggregate of the solvability hypotheses for given dirichlet data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvabilityReport {
    #[serde(rename = "K")]
    pub k: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub lipschitz_ok: bool,
    pub oscillation: f64,
    pub barriers_ok: bool,
    /// Smallest rim height over certified points; `None` when no point is
    /// certified.
    pub eps_threshold: Option<f64>,
    pub oscillation_ok: bool,
    pub certified: bool,
    pub verdict: String,
    pub points: Vec<BarrierPointReport>,
}

impl SolvabilityReport {
    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::to_value(self)?)?)
    }
}

/// Metric length of the straight coordinate segment from `a` to `b`
/// (8-point midpoint rule; exact for constant metrics).
pub fn segment_length(chart: &MetricChart, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if chart.is_euclidean() {
        return d.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    const PIECES: usize = 8;
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    for s in 0..PIECES {
        let t = (s as f64 + 0.5) / PIECES as f64;
        for k in 0..n {
            x[k] = a[k] + t * d[k];
        }
        let m = chart.metric_tensor(&x);
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += d[i] * m[i][j] * d[j];
            }
        }
        total += q.max(0.0).sqrt() / PIECES as f64;
    }
    total
}

/// Largest `|φ(x) − φ(y)| / dist(x, y)` over all pairs of dirichlet nodes.
pub fn boundary_lipschitz(phi: &GridField) -> f64 {
    let d = phi.domain();
    let pts: Vec<(Vec<f64>, f64)> = d
        .boundary()
        .iter()
        .map(|b| (d.coords(b.node), phi.get(b.node)))
        .collect();
    let mut lip = 0.0f64;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dv = (pts[i].1 - pts[j].1).abs();
            if dv == 0.0 {
                continue;
            }
            let len = segment_length(d.chart(), &pts[i].0, &pts[j].0);
            if len > 0.0 {
                lip = lip.max(dv / len);
            }
        }
    }
    lip
}

/// Runs the barrier search at every boundary crossing point (every
/// `stride`-th one) and combines it with the Lipschitz constant and
/// oscillation of `φ`.
pub fn check_dirichlet_solvability(
    phi: &GridField,
    domain: &Arc<GridDomain>,
    k: f64,
    gamma: f64,
    options: &SearchOptions,
    stride: usize,
) -> SolvabilityReport {
    let lipschitz = boundary_lipschitz(phi);
    let (lo, hi) = phi.boundary_range();
    let oscillation = if domain.boundary().is_empty() { 0.0 } else { hi - lo };
    let points: Vec<BarrierPointReport> = domain
        .boundary_points()
        .iter()
        .step_by(stride.max(1))
        .map(|x0| search_alpha(domain, x0, k, gamma, options))
        .collect();
    let barriers_ok = !points.is_empty() && points.iter().all(|p| p.certified);
    let eps_threshold = points
        .iter()
        .filter_map(|p| p.rim_height)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    let lipschitz_ok = lipschitz <= k;
    let oscillation_ok = eps_threshold.is_some_and(|e| oscillation <= e);
    let certified = lipschitz_ok && barriers_ok && oscillation_ok;
    SolvabilityReport {
        k,
        gamma,
        lipschitz,
        lipschitz_ok,
        oscillation,
        barriers_ok,
        eps_threshold,
        oscillation_ok,
        certified,
        verdict: if certified { "certified" } else { "not_certified" }.into(),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RegionSpec;

    fn half_plane(h: f64) -> Arc<GridDomain> {
        GridDomain::build(
            MetricChart::euclidean(&[[-1.0, 1.0], [0.0, 1.0]]).unwrap(),
            RegionSpec::whole_box(),
            h,
        )
        .unwrap()
    }

    fn disc(r: f64, h: f64) -> Arc<GridDomain> {
        GridDomain::build(
            MetricChart::euclidean(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap(),
            RegionSpec::Disc {
                center: vec![0.0, 0.0],
                radius: r,
            },
            h,
        )
        .unwrap()
    }

    #[test]
    fn flat_boundary_fit() {
        let d = half_plane(1.0 / 32.0);
        let fit = fit_boundary_graph(&d, &[0.0, 0.0]).unwrap();
        assert!(fit.curvature_bound < 1e-10);
        assert!((fit.frame[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_curvature_recovered() {
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let d = disc(0.8, h);
            let pts = d.boundary_points();
            let fit = fit_boundary_graph(&d, &pts[pts.len() / 3]).unwrap();
            assert!((fit.curvature_bound - 1.25).abs() < 4.0 * h, "h {h}: {}", fit.curvature_bound);
            // inner normal points to the centre
            let x = &fit.x0;
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let dot = -(fit.frame[1][0] * x[0] + fit.frame[1][1] * x[1]) / r;
            assert!(dot > 0.99);
        }
    }

    #[test]
    fn box_corner_is_degenerate() {
        let d = half_plane(1.0 / 16.0);
        let corner_adjacent = [-1.0 + 1.0 / 16.0, 0.0];
        assert!(matches!(
            fit_boundary_graph(&d, &corner_adjacent),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn psi_values() {
        let d = half_plane(1.0 / 16.0);
        let fit = fit_boundary_graph(&d, &[0.0, 0.0]).unwrap();
        let spec = BarrierSpec::new(fit, 0.3, 1.1, 0.1, 0.5).unwrap();
        assert_eq!(psi_eval(&spec, &[0.0, 0.0]).unwrap(), (0.0, 0.0));
        let (psi, v) = psi_eval(&spec, &[0.0, 0.2]).unwrap();
        assert!((psi - (0.09 * 0.04 + 0.2 * 0.2)).abs() < 1e-15);
        assert!((v - psi.sqrt()).abs() < 1e-15);
        assert!(matches!(
            psi_eval(&spec, &[0.0, -0.2]),
            Err(Error::NonPositiveBarrier { .. })
        ));
        assert!(matches!(
            q_on_barrier(MetricChart::euclidean(&[[-1.0, 1.0], [0.0, 1.0]]).as_ref().unwrap(), &spec, &[0.0, 0.0]),
            Err(Error::TooCloseToBoundaryPoint { .. })
        ));
    }

    #[test]
    fn normal_limit_matches_margin() {
        let d = half_plane(1.0 / 16.0);
        let fit = fit_boundary_graph(&d, &[0.0, 0.0]).unwrap();
        let spec = BarrierSpec::new(fit, 0.3, 1.1, 0.1, 0.5).unwrap();
        let m = limit_margin(d.chart(), &spec).unwrap();
        assert!((m - 0.91).abs() < 1e-12);
        let x = [0.0, 1e-7];
        let (_, v) = psi_eval(&spec, &x).unwrap();
        let vq = v * q_on_barrier(d.chart(), &spec, &x).unwrap();
        assert!((vq + 0.91).abs() < 1e-4, "{vq}");
    }

    #[test]
    fn analytic_and_fd_agree_on_disc() {
        let d = disc(0.8, 1.0 / 16.0);
        let x0 = d.boundary_points()[5].clone();
        let fit = fit_boundary_graph(&d, &x0).unwrap();
        let spec = BarrierSpec::new(fit, 0.3, 1.1, 0.05, 0.3).unwrap();
        for &p in d.interior().iter().take(40) {
            let x = d.coords(p);
            let a = q_on_barrier(d.chart(), &spec, &x).unwrap();
            let f = q_on_barrier_fd(d.chart(), &spec, &x, 1e-4).unwrap();
            assert!((a - f).abs() <= 1e-4 * a.abs().max(1e-3), "{a} vs {f}");
        }
    }

    #[test]
    fn search_certifies_flat_and_rejects_large_k() {
        let d = half_plane(1.0 / 16.0);
        let r = search_alpha(&d, &[0.0, 0.0], 0.3, 1.1, &SearchOptions::default());
        assert!(r.certified, "{r:?}");
        assert!((r.limit_margin.unwrap() - 0.91).abs() < 1e-6);
        let r = search_alpha(&d, &[0.0, 0.0], 1.0, 1.1, &SearchOptions::default());
        assert_eq!(r.status, BarrierStatus::InadmissibleK);
        assert!(!r.certified);
    }

    #[test]
    fn constant_data_certified_on_disc() {
        let d = disc(0.8, 1.0 / 16.0);
        let phi = GridField::constant(&d, 2.0);
        let rep = check_dirichlet_solvability(&phi, &d, 0.3, 1.1, &SearchOptions::default(), 4);
        assert_eq!(rep.lipschitz, 0.0);
        assert_eq!(rep.oscillation, 0.0);
        assert!(rep.certified, "{:#?}", rep.points.iter().find(|p| !p.certified));
        let json = rep.to_json().unwrap();
        assert!(json.find("\"K\"").unwrap() < json.find("\"barriers_ok\"").unwrap());
    }

    #[test]
    fn lipschitz_of_linear_data_on_circle() {
        let d = disc(0.8, 1.0 / 32.0);
        let phi = GridField::from_fn(&d, |x| 0.2 * x[0]);
        let lip = boundary_lipschitz(&phi);
        assert!(lip <= 0.2 + 1e-12 && lip > 0.2 - 1e-2, "{lip}");
        let mut jump = GridField::constant(&d, 0.0);
        let b = d.boundary()[0].node;
        jump.set(b, 1.0);
        assert!(boundary_lipschitz(&jump) >= 1.0 / (d.h_max() * 2f64.sqrt()) - 1e-9);
    }
}
