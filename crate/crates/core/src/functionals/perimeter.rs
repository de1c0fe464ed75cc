//! Discrete sets, their perimeters, and the subgraph/rearrangement
//! constructions on the product lattice `Ω × [−T, T]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridDomain, GridField, NodeKind};
use crate::linalg::{self, Vector, ZERO_VEC};

/// Width, in vertical cells, of the linear ramp used to mollify indicators.
pub const MOLLIFIER_CELLS: f64 = 3.0;

/// A 0/1 indicator on the nodes of a domain. Exterior nodes are never members.
#[derive(Debug, Clone)]
pub struct DiscreteSet {
    domain: Arc<GridDomain>,
    indicator: Vec<bool>,
}

impl DiscreteSet {
    pub fn from_fn(domain: &Arc<GridDomain>, mut member: impl FnMut(&[f64]) -> bool) -> Self {
        let mut x = vec![0.0; domain.dim()];
        let indicator = (0..domain.len())
            .map(|p| {
                domain.kind(p) != NodeKind::Exterior && {
                    domain.coords_into(p, &mut x);
                    member(&x)
                }
            })
            .collect();
        Self {
            domain: domain.clone(),
            indicator,
        }
    }

    pub fn from_indicator(domain: &Arc<GridDomain>, mut indicator: Vec<bool>) -> Result<Self> {
        if indicator.len() != domain.len() {
            return Err(Error::DomainMismatch);
        }
        for (p, b) in indicator.iter_mut().enumerate() {
            if domain.kind(p) == NodeKind::Exterior {
                *b = false;
            }
        }
        Ok(Self {
            domain: domain.clone(),
            indicator,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn contains(&self, node: usize) -> bool {
        self.indicator[node]
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    fn combine(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        let indicator = (0..self.domain.len())
            .map(|p| self.domain.kind(p) != NodeKind::Exterior && f(self.indicator[p], other.indicator[p]))
            .collect();
        Self {
            domain: self.domain.clone(),
            indicator,
        }
    }

    pub fn complement(&self) -> Self {
        self.combine(self, |a, _| !a)
    }

    pub fn union(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a && b)
    }
}

/// Inclusive range of lattice indices per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl Window {
    pub fn full(domain: &GridDomain) -> Self {
        Self {
            lo: vec![0; domain.dim()],
            hi: domain.shape().iter().map(|s| s - 1).collect(),
        }
    }

    fn contains(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(i, (lo, hi))| i >= lo && i <= hi)
    }
}

/// Perimeter of `set` inside `window`: the metric area of every lattice face
/// between two window nodes that separates a member from a non-member. Faces
/// on the window boundary are not counted.
pub fn set_perimeter(set: &DiscreteSet, window: &Window) -> Result<f64> {
    let d = &set.domain;
    let n = d.dim();
    if window.lo.len() != n
        || window.hi.len() != n
        || window
            .lo
            .iter()
            .zip(&window.hi)
            .zip(d.shape())
            .any(|((lo, hi), s)| lo > hi || *hi >= *s)
    {
        return Err(Error::WindowOutOfRange);
    }
    let euclidean = d.chart().is_euclidean();
    let cell = d.cell_volume();
    let mut total = 0.0;
    let mut mid = vec![0.0; n];
    for p in 0..d.len() {
        if d.kind(p) == NodeKind::Exterior {
            continue;
        }
        let idx = d.index_of(p);
        if !window.contains(&idx) {
            continue;
        }
        for k in 0..n {
            if idx[k] + 1 > window.hi[k] {
                continue;
            }
            let q = p + d.strides()[k];
            if d.kind(q) == NodeKind::Exterior || set.indicator[p] == set.indicator[q] {
                continue;
            }
            let facet = cell / d.spacing()[k];
            let weight = if euclidean {
                facet
            } else {
                d.coords_into(p, &mut mid);
                mid[k] += 0.5 * d.spacing()[k];
                let at = d.chart().metric_at(&mid)?;
                (at.sqrt_det * at.sqrt_det * at.inverse[k][k]).sqrt() * facet
            };
            total += weight;
        }
    }
    Ok(total)
}

/// A set on the product lattice `Ω × {−T, −T + h_t, …, T}`, stored column by
/// column.
#[derive(Debug, Clone)]
pub struct ColumnSet {
    domain: Arc<GridDomain>,
    height: f64,
    h_t: f64,
    n_t: usize,
    bits: Vec<bool>,
}

impl ColumnSet {
    /// Empty set on `Ω × [−height, height]`; `2 height / h_t` must be an
    /// integer.
    pub fn empty(domain: &Arc<GridDomain>, height: f64, h_t: f64) -> Result<Self> {
        if !(height > 0.0 && h_t > 0.0) {
            return Err(Error::InvalidParameter(
                "truncation height and vertical spacing must be positive".into(),
            ));
        }
        let steps = 2.0 * height / h_t;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "vertical spacing {h_t} does not divide [-{height}, {height}]"
            )));
        }
        let n_t = rounded as usize + 1;
        Ok(Self {
            domain: domain.clone(),
            height,
            h_t,
            n_t,
            bits: vec![false; domain.len() * n_t],
        })
    }

    /// Lattice subgraph `{(x, t_k) : t_k < u(x)}`.
    pub fn subgraph(u: &GridField, height: f64, h_t: f64) -> Result<Self> {
        let mut set = Self::empty(u.domain(), height, h_t)?;
        for p in 0..set.domain.len() {
            if set.domain.kind(p) == NodeKind::Exterior {
                continue;
            }
            let up = u.get(p);
            for k in 0..set.n_t {
                set.bits[p * set.n_t + k] = set.t(k) < up;
            }
        }
        Ok(set)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn h_t(&self) -> f64 {
        self.h_t
    }

    pub fn levels(&self) -> usize {
        self.n_t
    }

    /// Height of level `k`.
    pub fn t(&self, k: usize) -> f64 {
        -self.height + k as f64 * self.h_t
    }

    pub fn get(&self, node: usize, k: usize) -> bool {
        self.bits[node * self.n_t + k]
    }

    pub fn set(&mut self, node: usize, k: usize, member: bool) {
        if self.domain.kind(node) != NodeKind::Exterior {
            self.bits[node * self.n_t + k] = member;
        }
    }
}

/// Truncation height `2 (sup |u| + 1)`.
pub fn default_truncation(u: &GridField) -> f64 {
    2.0 * (u.sup_abs() + 1.0)
}

/// Product-metric total variation of a mollified indicator sampled on the
/// product lattice, `values[node * n_t + k]`, over cells `Ω_cell × [t_k, t_{k+1}]`
/// with `k` restricted per cell by `k_range`.
fn product_tv(
    domain: &GridDomain,
    values: &[f64],
    n_t: usize,
    h_t: f64,
    k_range: impl Fn(usize) -> (usize, usize),
) -> f64 {
    let n = domain.dim();
    let offsets = domain.corner_offsets();
    let half = (offsets.len() / 2) as f64;
    let vol = domain.cell_volume() * h_t;
    let h = domain.spacing();
    let mut total = 0.0;
    for (ci, cell) in domain.cells().iter().enumerate() {
        let (k0, k1) = k_range(ci);
        for k in k0..k1 {
            let mut lo_all = f64::INFINITY;
            let mut hi_all = f64::NEG_INFINITY;
            let mut g: Vector = ZERO_VEC;
            let mut dt = 0.0;
            for (c, off) in offsets.iter().enumerate() {
                let base = (cell.base + off) * n_t + k;
                let a = values[base];
                let b = values[base + 1];
                lo_all = lo_all.min(a.min(b));
                hi_all = hi_all.max(a.max(b));
                let s = a + b;
                for (j, gj) in g.iter_mut().enumerate().take(n) {
                    if (c >> j) & 1 == 1 {
                        *gj += s;
                    } else {
                        *gj -= s;
                    }
                }
                dt += b - a;
            }
            if lo_all == hi_all {
                continue;
            }
            for j in 0..n {
                g[j] /= 2.0 * half * h[j];
            }
            dt /= offsets.len() as f64 * h_t;
            let up = linalg::mat_vec(&cell.inverse, &g, n);
            let q = linalg::dot(&up, &g, n).max(0.0) + dt * dt;
            total += q.sqrt() * cell.sqrt_det * vol;
        }
    }
    total
}

/// Perimeter of `set` in `Ω × ℝ`, measured as the total variation of its
/// indicator after a vertical 3-cell box filter (a linear ramp across each
/// interface). Below the lattice the set is full, above it empty.
pub fn mollified_perimeter(set: &ColumnSet) -> f64 {
    let d = &set.domain;
    let n_t = set.n_t;
    let mut values = vec![0.0; d.len() * n_t];
    for p in 0..d.len() {
        if d.kind(p) == NodeKind::Exterior {
            continue;
        }
        let bit = |k: isize| -> f64 {
            if k < 0 {
                1.0
            } else if k as usize >= n_t {
                0.0
            } else if set.bits[p * n_t + k as usize] {
                1.0
            } else {
                0.0
            }
        };
        for k in 0..n_t {
            let k = k as isize;
            values[p * n_t + k as usize] = (bit(k - 1) + bit(k) + bit(k + 1)) / MOLLIFIER_CELLS;
        }
    }
    product_tv(d, &values, n_t, set.h_t, |_| (0, n_t - 1))
}

/// Perimeter of the subgraph `{t < u(x)}` in `Ω × [−T, T]`, from the
/// indicator mollified by a linear ramp of width `3 h_t` centred on the graph.
pub fn subgraph_perimeter(u: &GridField, height: f64, h_t: f64) -> Result<f64> {
    let d = u.domain();
    let sup = u.sup_abs();
    if sup >= height {
        return Err(Error::Truncation { height, sup });
    }
    if h_t > d.h_min() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "vertical spacing {h_t} exceeds the horizontal spacing {}",
            d.h_min()
        )));
    }
    let probe = ColumnSet::empty(d, height, h_t)?;
    let n_t = probe.n_t;
    let band = MOLLIFIER_CELLS * h_t;
    let mut values = vec![0.0; d.len() * n_t];
    for p in 0..d.len() {
        if d.kind(p) == NodeKind::Exterior {
            continue;
        }
        let up = u.get(p);
        for k in 0..n_t {
            values[p * n_t + k] = ((up - probe.t(k)) / band + 0.5).clamp(0.0, 1.0);
        }
    }
    let offsets = d.corner_offsets();
    let cells = d.cells();
    let k_range = |ci: usize| {
        let base = cells[ci].base;
        let (lo, hi) = offsets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
            let v = u.get(base + o);
            (lo.min(v), hi.max(v))
        });
        let k_lo = (((lo - band) + height) / h_t).floor() - 1.0;
        let k_hi = (((hi + band) + height) / h_t).ceil() + 1.0;
        (
            k_lo.max(0.0) as usize,
            (k_hi.max(0.0) as usize).min(n_t - 1),
        )
    };
    Ok(product_tv(d, &values, n_t, h_t, k_range))
}

/// Column-wise rearrangement of `set` into a graph:
/// `w(x) = h_t · #{k : (x, t_k) ∈ F} − T`.
pub fn vertical_rearrangement(set: &ColumnSet) -> Result<GridField> {
    let d = &set.domain;
    let mut values = vec![f64::NAN; d.len()];
    for (p, v) in values.iter_mut().enumerate() {
        if d.kind(p) == NodeKind::Exterior {
            continue;
        }
        let col = &set.bits[p * set.n_t..(p + 1) * set.n_t];
        if !col[0] || col[set.n_t - 1] {
            return Err(Error::Containment { node: p });
        }
        let count = col.iter().filter(|b| **b).count();
        *v = count as f64 * set.h_t - set.height;
    }
    GridField::from_values(d, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::area;
    use crate::grid::RegionSpec;
    use crate::manifold::MetricChart;

    fn square(h: f64) -> Arc<GridDomain> {
        GridDomain::build(
            MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            RegionSpec::whole_box(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn square_set_perimeter_is_exact() {
        let d = square(1.0 / 16.0);
        let e = DiscreteSet::from_fn(&d, |x| {
            (0.25..0.75).contains(&x[0]) && (0.25..0.75).contains(&x[1])
        });
        assert_eq!(set_perimeter(&e, &Window::full(&d)).unwrap(), 2.0);
        let all = DiscreteSet::from_fn(&d, |_| true);
        assert_eq!(set_perimeter(&all, &Window::full(&d)).unwrap(), 0.0);
    }

    #[test]
    fn window_bounds_checked() {
        let d = square(0.25);
        let e = DiscreteSet::from_fn(&d, |_| true);
        let w = Window {
            lo: vec![0, 0],
            hi: vec![5, 4],
        };
        assert!(matches!(set_perimeter(&e, &w), Err(Error::WindowOutOfRange)));
    }

    #[test]
    fn flat_subgraph_perimeter_is_domain_measure() {
        let d = square(1.0 / 16.0);
        let u = GridField::constant(&d, 0.0);
        let p = subgraph_perimeter(&u, 2.0, 1.0 / 16.0).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "{p}");
        assert!(matches!(
            subgraph_perimeter(&GridField::constant(&d, 3.0), 2.0, 1.0 / 16.0),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn rearrangement_of_lattice_subgraph_is_identity() {
        let d = square(1.0 / 8.0);
        let h_t = 1.0 / 8.0;
        let height = 3.0;
        let u = GridField::from_fn(&d, |x| {
            let m = ((x[0] - x[1]) * 9.0).round();
            -height + (m + 24.0) * h_t
        });
        let set = ColumnSet::subgraph(&u, height, h_t).unwrap();
        let w = vertical_rearrangement(&set).unwrap();
        assert_eq!(w.values(), u.values());
        let a = area(&w).value;
        assert!(a <= mollified_perimeter(&set) * 1.05);
    }

    #[test]
    fn rearrangement_rejects_open_column() {
        let d = square(0.25);
        let set = ColumnSet::empty(&d, 1.0, 0.25).unwrap();
        assert!(matches!(
            vertical_rearrangement(&set),
            Err(Error::Containment { .. })
        ));
    }
}
