//! Uniform node lattices over a chart box, node classification, and the
//! covariant difference operators every other module builds on.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Christoffels, Matrix, Vector, ZERO_MAT, ZERO_VEC};
use crate::manifold::MetricChart;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    Dirichlet,
    Exterior,
}

impl NodeKind {
    pub fn tag(self) -> &'static str {
        match self {
            NodeKind::Interior => "interior",
            NodeKind::Dirichlet => "dirichlet",
            NodeKind::Exterior => "exterior",
        }
    }
}

/// Region of the chart box to discretize. Serialized as
/// `{"region": "box" | "disc" | "annulus" | "table", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum RegionSpec {
    /// Axis-aligned box; defaults to the whole chart box.
    Box {
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
    Disc {
        center: Vec<f64>,
        radius: f64,
    },
    Annulus {
        center: Vec<f64>,
        r_inner: f64,
        r_outer: f64,
    },
    /// Signed level-set values per lattice node (negative inside), either
    /// inline or one value per CSV row in node order.
    Table {
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        csv: Option<String>,
    },
}

impl RegionSpec {
    pub fn whole_box() -> Self {
        RegionSpec::Box { lo: None, hi: None }
    }
}

/// Per-interior-node geometric data cached at build time.
#[derive(Debug, Clone, Copy)]
pub struct NodeGeometry {
    pub inverse: Matrix,
    pub sqrt_det: f64,
    pub gamma: Christoffels,
    pub flat: bool,
    /// Largest eigenvalue of `σ^{ij}`.
    pub lambda_max: f64,
}

/// A lattice cell whose `2^n` corners are all non-exterior; the unit of
/// midpoint quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub base: usize,
    pub center: Vector,
    pub inverse: Matrix,
    pub sqrt_det: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub node: usize,
    /// Unit coordinate vector pointing away from the adjacent interior nodes.
    pub outward: Vec<f64>,
    pub sqrt_det: f64,
}

/// Covariant first derivatives at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariantGradient {
    pub lower: Vector,
    pub upper: Vector,
    pub norm_sq: f64,
}

#[derive(Debug)]
pub struct GridDomain {
    chart: MetricChart,
    region: RegionSpec,
    h: Vec<f64>,
    origin: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    mask: Vec<NodeKind>,
    interior: Vec<usize>,
    slot: Vec<u32>,
    geometry: Vec<NodeGeometry>,
    boundary: Vec<BoundaryNode>,
    cells: Vec<Cell>,
    neighbors: Vec<isize>,
    corner_offsets: Vec<usize>,
    level: Vec<f64>,
}

const NO_SLOT: u32 = u32::MAX;

impl GridDomain {
    /// Discretizes `region` inside the chart box with uniform spacing `h`.
    pub fn build(chart: MetricChart, region: RegionSpec, h: f64) -> Result<Arc<Self>> {
        let n = chart.dim();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("spacing must be positive, got {h}")));
        }
        let mut shape = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        for (axis, [lo, hi]) in chart.bbox().iter().enumerate() {
            let width = hi - lo;
            let cells = width / h;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * cells.max(1.0) || rounded < 1.0 {
                return Err(Error::SpacingMismatch { axis, h, width });
            }
            let nodes = rounded as usize + 1;
            if nodes < 3 {
                return Err(Error::TooCoarse { axis, nodes });
            }
            shape.push(nodes);
            origin.push(*lo);
        }
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let total: usize = shape.iter().product();

        let level = level_values(&chart, &region, &origin, h, &shape, &strides, total)?;
        let scale = chart
            .bbox()
            .iter()
            .map(|[lo, hi]| hi - lo)
            .fold(0.0, f64::max)
            .max(1.0);
        let on_edge = |idx: &[usize]| idx.iter().zip(&shape).any(|(i, s)| *i == 0 || *i + 1 == *s);

        let neighbors = neighbor_offsets(&strides);
        let mut mask = vec![NodeKind::Exterior; total];
        let mut idx = vec![0usize; n];
        for (node, m) in mask.iter_mut().enumerate() {
            unflatten(node, &strides, &mut idx);
            if !on_edge(&idx) && level[node] < -1e-12 * scale {
                *m = NodeKind::Interior;
            }
        }
        let interior: Vec<usize> = (0..total)
            .filter(|&p| mask[p] == NodeKind::Interior)
            .collect();
        if interior.is_empty() {
            return Err(Error::EmptyRegion);
        }
        for &p in &interior {
            for &off in &neighbors {
                let q = (p as isize + off) as usize;
                if mask[q] == NodeKind::Exterior {
                    mask[q] = NodeKind::Dirichlet;
                }
            }
        }

        let mut slot = vec![NO_SLOT; total];
        let mut geometry = Vec::with_capacity(interior.len());
        let mut x = vec![0.0; n];
        for (s, &p) in interior.iter().enumerate() {
            slot[p] = s as u32;
            coords_into(p, &origin, h, &strides, &mut x);
            let at = chart.metric_at(&x)?;
            let gamma = chart.christoffel_at(&x)?;
            let flat = gamma.values == linalg::ZERO_GAMMA;
            geometry.push(NodeGeometry {
                inverse: at.inverse,
                sqrt_det: at.sqrt_det,
                gamma: gamma.values,
                flat,
                lambda_max: linalg::sym_max_eigenvalue(&at.inverse, n),
            });
        }

        let mut boundary = Vec::new();
        for p in 0..total {
            if mask[p] != NodeKind::Dirichlet {
                continue;
            }
            let mut dir = vec![0.0; n];
            for &off in &neighbors {
                let q = p as isize + off;
                if q < 0 || q as usize >= total || !adjacent(p, q as usize, &strides, &shape) {
                    continue;
                }
                if mask[q as usize] == NodeKind::Interior {
                    unflatten(q as usize, &strides, &mut idx);
                    let mut pi = vec![0usize; n];
                    unflatten(p, &strides, &mut pi);
                    for k in 0..n {
                        dir[k] -= (idx[k] as f64 - pi[k] as f64) * h;
                    }
                }
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                dir.iter_mut().for_each(|v| *v /= norm);
            }
            coords_into(p, &origin, h, &strides, &mut x);
            let at = chart.metric_at(&x)?;
            boundary.push(BoundaryNode {
                node: p,
                outward: dir,
                sqrt_det: at.sqrt_det,
            });
        }

        let corner_offsets: Vec<usize> = (0..(1usize << n))
            .map(|c| (0..n).map(|k| ((c >> k) & 1) * strides[k]).sum())
            .collect();
        let mut cells = Vec::new();
        for base in 0..total {
            unflatten(base, &strides, &mut idx);
            if idx.iter().zip(&shape).any(|(i, s)| *i + 1 >= *s) {
                continue;
            }
            if corner_offsets
                .iter()
                .any(|off| mask[base + off] == NodeKind::Exterior)
            {
                continue;
            }
            let mut center = ZERO_VEC;
            for k in 0..n {
                center[k] = origin[k] + (idx[k] as f64 + 0.5) * h;
            }
            let at = chart.metric_at(&center[..n])?;
            cells.push(Cell {
                base,
                center,
                inverse: at.inverse,
                sqrt_det: at.sqrt_det,
            });
        }

        Ok(Arc::new(Self {
            chart,
            region,
            h: vec![h; n],
            origin,
            shape,
            strides,
            mask,
            interior,
            slot,
            geometry,
            boundary,
            cells,
            neighbors,
            corner_offsets,
            level,
        }))
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn chart(&self) -> &MetricChart {
        &self.chart
    }

    pub fn region(&self) -> &RegionSpec {
        &self.region
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn h_min(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.mask[node]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn geometry(&self) -> &[NodeGeometry] {
        &self.geometry
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn corner_offsets(&self) -> &[usize] {
        &self.corner_offsets
    }

    /// Offsets to the `3^n - 1` lattice neighbours.
    pub fn neighbor_offsets(&self) -> &[isize] {
        &self.neighbors
    }

    /// Interior slot of a node, if it is interior.
    pub fn slot(&self, node: usize) -> Option<usize> {
        match self.slot.get(node) {
            Some(&s) if s != NO_SLOT => Some(s as usize),
            _ => None,
        }
    }

    /// Lattice volume `h_1 ⋯ h_n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Coordinate area of a lattice facet, `h^{n-1}`.
    pub fn facet_area(&self) -> f64 {
        self.h.iter().skip(1).product()
    }

    pub fn index_of(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        unflatten(node, &self.strides, &mut idx);
        idx
    }

    pub fn node_at(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.dim() || idx.iter().zip(&self.shape).any(|(i, s)| i >= s) {
            return None;
        }
        Some(idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum())
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        coords_into(node, &self.origin, self.h[0], &self.strides, &mut x);
        x
    }

    pub fn coords_into(&self, node: usize, x: &mut [f64]) {
        coords_into(node, &self.origin, self.h[0], &self.strides, x);
    }

    /// Signed level-set value of the region at a node (negative inside).
    pub fn level(&self, node: usize) -> f64 {
        self.level[node]
    }

    /// Points where the region boundary crosses the axis-aligned lattice
    /// edges leaving interior nodes, located by linear interpolation of the
    /// level set. Sorted by node order, deduplicated.
    pub fn boundary_points(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut x = vec![0.0; n];
        for &p in &self.interior {
            for k in 0..n {
                for sign in [-1isize, 1] {
                    let q = (p as isize + sign * self.strides[k] as isize) as usize;
                    if self.mask[q] == NodeKind::Interior {
                        continue;
                    }
                    let (lp, lq) = (self.level[p], self.level[q]);
                    let t = if lq > lp { (lp / (lp - lq)).clamp(0.0, 1.0) } else { 1.0 };
                    self.coords_into(p, &mut x);
                    x[k] += sign as f64 * t * self.h[k];
                    let tol = 1e-9 * self.h[k];
                    let dup = out
                        .iter()
                        .any(|y| y.iter().zip(&x).all(|(a, b)| (a - b).abs() <= tol));
                    if !dup {
                        out.push(x.clone());
                    }
                }
            }
        }
        out
    }

    /// True when `a` and `b` are lattice neighbours (including diagonals).
    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        a != b && adjacent(a, b, &self.strides, &self.shape)
    }

    /// Valid lattice neighbours of `node`.
    pub fn neighbors_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors.iter().filter_map(move |&off| {
            let q = node as isize + off;
            if q < 0 || q as usize >= self.len() {
                return None;
            }
            let q = q as usize;
            adjacent(node, q, &self.strides, &self.shape).then_some(q)
        })
    }

    /// Interior nodes whose lattice (Chebyshev) distance to every dirichlet
    /// node is at least `collar`. Falls back to all interior nodes when the
    /// collar swallows the domain.
    pub fn probe_nodes(&self, collar: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::new();
        for b in &self.boundary {
            dist[b.node] = 0;
            queue.push_back(b.node);
        }
        while let Some(p) = queue.pop_front() {
            let d = dist[p];
            let next: Vec<usize> = self.neighbors_of(p).collect();
            for q in next {
                if self.mask[q] == NodeKind::Interior && dist[q] == usize::MAX {
                    dist[q] = d + 1;
                    queue.push_back(q);
                }
            }
        }
        let probe: Vec<usize> = self
            .interior
            .iter()
            .copied()
            .filter(|&p| dist[p] >= collar)
            .collect();
        if probe.is_empty() {
            self.interior.clone()
        } else {
            probe
        }
    }

    /// Central-difference coordinate gradient at an interior slot.
    #[inline]
    pub(crate) fn gradient_slot(&self, u: &[f64], node: usize) -> Vector {
        let n = self.dim();
        let mut g = ZERO_VEC;
        for k in 0..n {
            let s = self.strides[k];
            g[k] = (u[node + s] - u[node - s]) / (2.0 * self.h[k]);
        }
        g
    }

    /// Coordinate gradient and covariant Hessian `∂²_ij u − Γ^k_ij ∂_k u`
    /// at an interior node, using the 4-point cross stencil.
    #[inline]
    pub(crate) fn jet(&self, u: &[f64], node: usize, geo: &NodeGeometry) -> (Vector, Matrix) {
        let n = self.dim();
        let grad = self.gradient_slot(u, node);
        let mut hess = ZERO_MAT;
        let c = u[node];
        for i in 0..n {
            let si = self.strides[i];
            let hi = self.h[i];
            hess[i][i] = (u[node + si] - 2.0 * c + u[node - si]) / (hi * hi);
            for j in (i + 1)..n {
                let sj = self.strides[j];
                let v = (u[node + si + sj] - u[node + si - sj] - u[node - si + sj]
                    + u[node - si - sj])
                    / (4.0 * hi * self.h[j]);
                hess[i][j] = v;
            }
        }
        if !geo.flat {
            for i in 0..n {
                for j in i..n {
                    let mut corr = 0.0;
                    for k in 0..n {
                        corr += geo.gamma[k][i][j] * grad[k];
                    }
                    hess[i][j] -= corr;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                hess[j][i] = hess[i][j];
            }
        }
        (grad, hess)
    }

    /// Gradient at a quadrature cell centre: the mean of the `2^{n-1}` edge
    /// differences along each axis.
    #[inline]
    pub(crate) fn cell_gradient(&self, u: &[f64], cell: &Cell) -> Vector {
        let n = self.dim();
        let mut g = ZERO_VEC;
        let corners = self.corner_offsets.len();
        let norm = (corners / 2) as f64;
        for (c, off) in self.corner_offsets.iter().enumerate() {
            let v = u[cell.base + off];
            for (k, gk) in g.iter_mut().enumerate().take(n) {
                if (c >> k) & 1 == 1 {
                    *gk += v;
                } else {
                    *gk -= v;
                }
            }
        }
        for k in 0..n {
            g[k] /= norm * self.h[k];
        }
        g
    }

    fn require_interior(&self, node: usize) -> Result<usize> {
        self.slot(node).ok_or(Error::Stencil { node })
    }

    /// `(D_i u, u^i = σ^{ij} D_j u, |Du|²_σ)` at an interior node.
    pub fn covariant_gradient(&self, u: &GridField, node: usize) -> Result<CovariantGradient> {
        u.check_domain(self)?;
        let s = self.require_interior(node)?;
        let n = self.dim();
        let lower = self.gradient_slot(&u.values, node);
        let upper = linalg::mat_vec(&self.geometry[s].inverse, &lower, n);
        let norm_sq = linalg::dot(&upper, &lower, n).max(0.0);
        Ok(CovariantGradient {
            lower,
            upper,
            norm_sq,
        })
    }

    /// Covariant Hessian `D²_ij u` at an interior node; symmetric by
    /// construction.
    pub fn covariant_hessian(&self, u: &GridField, node: usize) -> Result<Matrix> {
        u.check_domain(self)?;
        let s = self.require_interior(node)?;
        Ok(self.jet(&u.values, node, &self.geometry[s]).1)
    }
}

fn unflatten(mut node: usize, strides: &[usize], idx: &mut [usize]) {
    for (k, s) in strides.iter().enumerate() {
        idx[k] = node / s;
        node %= s;
    }
}

fn coords_into(node: usize, origin: &[f64], h: f64, strides: &[usize], x: &mut [f64]) {
    let mut rem = node;
    for (k, s) in strides.iter().enumerate() {
        let i = rem / s;
        rem %= s;
        x[k] = origin[k] + i as f64 * h;
    }
}

fn adjacent(a: usize, b: usize, strides: &[usize], shape: &[usize]) -> bool {
    let mut ra = a;
    let mut rb = b;
    for (k, s) in strides.iter().enumerate() {
        let ia = ra / s;
        let ib = rb / s;
        ra %= s;
        rb %= s;
        if ia.abs_diff(ib) > 1 || ia >= shape[k] || ib >= shape[k] {
            return false;
        }
    }
    true
}

fn neighbor_offsets(strides: &[usize]) -> Vec<isize> {
    let n = strides.len();
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut rem = code;
        let mut off = 0isize;
        let mut zero = true;
        for s in strides {
            let d = (rem % 3) as isize - 1;
            rem /= 3;
            if d != 0 {
                zero = false;
            }
            off += d * *s as isize;
        }
        if !zero {
            out.push(off);
        }
    }
    out
}

fn level_values(
    chart: &MetricChart,
    region: &RegionSpec,
    origin: &[f64],
    h: f64,
    shape: &[usize],
    strides: &[usize],
    total: usize,
) -> Result<Vec<f64>> {
    let n = chart.dim();
    let check_len = |v: &[f64], what: &str| -> Result<()> {
        if v.len() != n {
            return Err(Error::InvalidRegion(format!("{what} must have {n} entries")));
        }
        Ok(())
    };
    let mut x = vec![0.0; n];
    let mut eval = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        (0..total)
            .map(|p| {
                coords_into(p, origin, h, strides, &mut x);
                f(&x)
            })
            .collect()
    };
    let dist = |x: &[f64], c: &[f64]| -> f64 {
        x.iter()
            .zip(c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    match region {
        RegionSpec::Box { lo, hi } => {
            let lo: Vec<f64> = lo
                .clone()
                .unwrap_or_else(|| chart.bbox().iter().map(|b| b[0]).collect());
            let hi: Vec<f64> = hi
                .clone()
                .unwrap_or_else(|| chart.bbox().iter().map(|b| b[1]).collect());
            check_len(&lo, "box lo")?;
            check_len(&hi, "box hi")?;
            if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
                return Err(Error::EmptyRegion);
            }
            Ok(eval(&|x: &[f64]| {
                x.iter()
                    .zip(lo.iter().zip(&hi))
                    .map(|(v, (a, b))| (a - v).max(v - b))
                    .fold(f64::NEG_INFINITY, f64::max)
            }))
        }
        RegionSpec::Disc { center, radius } => {
            check_len(center, "disc center")?;
            if !(*radius > 0.0) {
                return Err(Error::EmptyRegion);
            }
            Ok(eval(&|x: &[f64]| dist(x, center) - radius))
        }
        RegionSpec::Annulus {
            center,
            r_inner,
            r_outer,
        } => {
            check_len(center, "annulus center")?;
            if !(*r_inner >= 0.0 && r_inner < r_outer) {
                return Err(Error::EmptyRegion);
            }
            Ok(eval(&|x: &[f64]| {
                let d = dist(x, center);
                (r_inner - d).max(d - r_outer)
            }))
        }
        RegionSpec::Table { values, csv } => {
            let vals = match (values, csv) {
                (Some(v), _) => v.clone(),
                (None, Some(path)) => read_column(Path::new(path))?,
                (None, None) => {
                    return Err(Error::InvalidRegion(
                        "table region needs `values` or `csv`".into(),
                    ))
                }
            };
            if vals.len() != total {
                return Err(Error::InvalidRegion(format!(
                    "table has {} values for a lattice of {total} nodes ({shape:?})",
                    vals.len()
                )));
            }
            Ok(vals)
        }
    }
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or(line).trim();
        match last.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if lineno == 0 => continue,
            Err(e) => return Err(Error::Csv(format!("line {}: {e}", lineno + 1))),
        }
    }
    Ok(out)
}

/// Scalar nodal values on a [`GridDomain`]. Exterior nodes hold `NaN`.
#[derive(Debug, Clone)]
pub struct GridField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl GridField {
    pub fn constant(domain: &Arc<GridDomain>, c: f64) -> Self {
        Self::from_fn(domain, |_| c)
    }

    pub fn from_fn(domain: &Arc<GridDomain>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; domain.dim()];
        let values = (0..domain.len())
            .map(|p| {
                if domain.mask[p] == NodeKind::Exterior {
                    f64::NAN
                } else {
                    domain.coords_into(p, &mut x);
                    f(&x)
                }
            })
            .collect();
        Self {
            domain: domain.clone(),
            values,
        }
    }

    /// Wraps raw values; exterior entries are overwritten with `NaN` and every
    /// other entry must be finite.
    pub fn from_values(domain: &Arc<GridDomain>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DomainMismatch);
        }
        for (p, v) in values.iter_mut().enumerate() {
            if domain.mask[p] == NodeKind::Exterior {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::NonFinite { node: p, step: 0 });
            }
        }
        Ok(Self {
            domain: domain.clone(),
            values,
        })
    }

    /// Interior values from `interior`, dirichlet values from `boundary`.
    pub fn with_boundary(interior: &GridField, boundary: &GridField) -> Result<Self> {
        if !Arc::ptr_eq(&interior.domain, &boundary.domain) {
            return Err(Error::DomainMismatch);
        }
        let mut out = interior.clone();
        for b in interior.domain.boundary() {
            out.values[b.node] = boundary.values[b.node];
        }
        Ok(out)
    }

    pub(crate) fn from_raw(domain: &Arc<GridDomain>, values: Vec<f64>) -> Self {
        Self {
            domain: domain.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn set(&mut self, node: usize, v: f64) {
        self.values[node] = v;
    }

    pub(crate) fn check_domain(&self, domain: &GridDomain) -> Result<()> {
        if std::ptr::eq(Arc::as_ptr(&self.domain), domain) {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    pub fn same_domain(&self, other: &GridField) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain)
    }

    fn active(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.domain.mask)
            .filter(|(_, m)| **m != NodeKind::Exterior)
            .map(|(v, _)| *v)
    }

    /// `sup |u|` over non-exterior nodes.
    pub fn sup_abs(&self) -> f64 {
        self.active().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.active().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.active().fold(f64::INFINITY, f64::min)
    }

    /// Extremes over dirichlet nodes only.
    pub fn boundary_range(&self) -> (f64, f64) {
        self.domain
            .boundary()
            .iter()
            .map(|b| self.values[b.node])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Checks that every dirichlet node carries a finite value.
    pub fn require_boundary(&self) -> Result<()> {
        for b in self.domain.boundary() {
            if !self.values[b.node].is_finite() {
                return Err(Error::MissingBoundaryValue { node: b.node });
            }
        }
        Ok(())
    }

    /// `max |u - v|` over the listed nodes.
    pub fn sup_diff_on(&self, other: &GridField, nodes: &[usize]) -> f64 {
        nodes
            .iter()
            .map(|&p| (self.values[p] - other.values[p]).abs())
            .fold(0.0, f64::max)
    }

    /// Snapshot as CSV: `i_1..i_n, x_1..x_n, mask, value`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.domain.dim();
        let mut header: Vec<String> = (1..=n).map(|k| format!("i{k}")).collect();
        header.extend((1..=n).map(|k| format!("x{k}")));
        header.push("mask".into());
        header.push("value".into());
        writeln!(w, "{}", header.join(","))?;
        let mut x = vec![0.0; n];
        let mut idx = vec![0usize; n];
        for p in 0..self.domain.len() {
            unflatten(p, &self.domain.strides, &mut idx);
            self.domain.coords_into(p, &mut x);
            let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            row.extend(x.iter().map(|v| format!("{v}")));
            row.push(self.domain.mask[p].tag().to_string());
            row.push(format!("{}", self.values[p]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Reads values back from a snapshot in [`GridField::write_csv`] layout.
    pub fn load_csv(domain: &Arc<GridDomain>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let n = domain.dim();
        let mut values = vec![f64::NAN; domain.len()];
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 2 * n + 2 {
                return Err(Error::Csv(format!("line {}: wrong column count", lineno + 1)));
            }
            let idx: std::result::Result<Vec<usize>, _> =
                cols[..n].iter().map(|c| c.parse::<usize>()).collect();
            let idx = idx.map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 1)))?;
            let node = domain
                .node_at(&idx)
                .ok_or_else(|| Error::Csv(format!("line {}: index out of range", lineno + 1)))?;
            let v = cols[2 * n + 1]
                .parse::<f64>()
                .map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 1)))?;
            values[node] = v;
        }
        for (p, v) in values.iter_mut().enumerate() {
            if domain.kind(p) == NodeKind::Exterior {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::MissingBoundaryValue { node: p });
            }
        }
        Ok(Self::from_raw(domain, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(h: f64) -> Arc<GridDomain> {
        let chart = MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        GridDomain::build(chart, RegionSpec::whole_box(), h).unwrap()
    }

    #[test]
    fn unit_square_counts() {
        let d = unit_square(0.25);
        assert_eq!(d.interior().len(), 9);
        assert_eq!(d.boundary().len(), 16);
        assert_eq!(d.cells().len(), 16);
    }

    #[test]
    fn boundary_points_lie_on_circle() {
        let chart = MetricChart::euclidean(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap();
        let region = RegionSpec::Disc {
            center: vec![0.0, 0.0],
            radius: 0.8,
        };
        let d = GridDomain::build(chart, region, 1.0 / 32.0).unwrap();
        let pts = d.boundary_points();
        assert!(pts.len() > 100);
        for x in &pts {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert!((r - 0.8).abs() < 1e-3, "{x:?}");
        }
        let sq = GridDomain::build(
            MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            RegionSpec::whole_box(),
            0.25,
        )
        .unwrap();
        // three crossings per side, landing on the edge nodes
        assert_eq!(sq.boundary_points().len(), 12);
    }

    #[test]
    fn disc_keeps_only_center() {
        let chart = MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let d = GridDomain::build(
            chart,
            RegionSpec::Disc {
                center: vec![0.5, 0.5],
                radius: 0.5,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(d.interior().len(), 1);
        assert_eq!(d.coords(d.interior()[0]), vec![0.5, 0.5]);
    }

    #[test]
    fn degenerate_regions_rejected() {
        let chart = MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let annulus = RegionSpec::Annulus {
            center: vec![0.5, 0.5],
            r_inner: 0.4,
            r_outer: 0.3,
        };
        assert!(matches!(
            GridDomain::build(chart.clone(), annulus, 0.1),
            Err(Error::EmptyRegion)
        ));
        assert!(matches!(
            GridDomain::build(chart.clone(), RegionSpec::whole_box(), 0.3),
            Err(Error::SpacingMismatch { .. })
        ));
        assert!(matches!(
            GridDomain::build(chart, RegionSpec::whole_box(), 1.0),
            Err(Error::TooCoarse { .. })
        ));
    }

    #[test]
    fn mask_invariants_hold_on_disc() {
        let chart = MetricChart::euclidean(&[[-1.0, 1.0], [-1.0, 1.0]]).unwrap();
        let d = GridDomain::build(
            chart,
            RegionSpec::Disc {
                center: vec![0.1, -0.05],
                radius: 0.83,
            },
            1.0 / 16.0,
        )
        .unwrap();
        for &p in d.interior() {
            for q in d.neighbors_of(p) {
                assert_ne!(d.kind(q), NodeKind::Exterior);
            }
        }
        for b in d.boundary() {
            assert!(d
                .neighbors_of(b.node)
                .any(|q| d.kind(q) == NodeKind::Interior));
        }
        for p in 0..d.len() {
            if d.kind(p) == NodeKind::Exterior {
                assert!(!d.neighbors_of(p).any(|q| d.kind(q) == NodeKind::Interior));
            }
        }
    }

    #[test]
    fn stencil_refuses_boundary_node() {
        let d = unit_square(0.25);
        let u = GridField::constant(&d, 1.0);
        let b = d.boundary()[0].node;
        assert!(matches!(
            d.covariant_gradient(&u, b),
            Err(Error::Stencil { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = unit_square(0.25);
        let u = GridField::from_fn(&d, |x| x[0] * 0.1 + x[1].sin());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        u.save_csv(&path).unwrap();
        let back = GridField::load_csv(&d, &path).unwrap();
        assert_eq!(back.values(), u.values());
    }
}
