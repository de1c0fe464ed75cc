//! Variational quantities evaluated on grid fields.
//!
//! Integrals use midpoint quadrature on lattice cells: the gradient is taken
//! at each cell centre from its `2^n` corners and weighted by `√det σ h^n`
//! there. Only cells whose corners are all non-exterior contribute.

mod perimeter;

pub use perimeter::{
    default_truncation, mollified_perimeter, set_perimeter, subgraph_perimeter,
    vertical_rearrangement, ColumnSet, DiscreteSet, Window, MOLLIFIER_CELLS,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::linalg;

/// Value of one functional together with the quadrature it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalReport {
    pub name: String,
    pub value: f64,
    pub quadrature_h: f64,
    pub boundary_term: Option<f64>,
    pub notes: String,
}

impl FunctionalReport {
    fn new(name: &str, value: f64, h: f64, notes: &str) -> Self {
        Self {
            name: name.to_string(),
            value,
            quadrature_h: h,
            boundary_term: None,
            notes: notes.to_string(),
        }
    }

    /// `{"boundary_term":..,"h":..,"name":..,"value":..}` on one line.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "name": self.name,
            "value": self.value,
            "boundary_term": self.boundary_term,
            "h": self.quadrature_h,
        })
        .to_string()
    }
}

/// `W = √(1 + |Du|²_σ)` at every interior node, in interior-slot order.
pub fn w_factor(u: &GridField) -> Result<Vec<f64>> {
    let d = u.domain();
    let n = d.dim();
    Ok(d.interior()
        .iter()
        .zip(d.geometry())
        .map(|(&p, geo)| {
            let g = d.gradient_slot(u.values(), p);
            let up = linalg::mat_vec(&geo.inverse, &g, n);
            (1.0 + linalg::dot(&up, &g, n).max(0.0)).sqrt()
        })
        .collect())
}

/// Sum of `integrand(|Du|²_σ)` over quadrature cells.
fn cell_integral(u: &GridField, integrand: impl Fn(f64) -> f64) -> f64 {
    let d = u.domain();
    let n = d.dim();
    let vol = d.cell_volume();
    let mut total = 0.0;
    for cell in d.cells() {
        let g = d.cell_gradient(u.values(), cell);
        let up = linalg::mat_vec(&cell.inverse, &g, n);
        let q = linalg::dot(&up, &g, n).max(0.0);
        total += integrand(q) * cell.sqrt_det * vol;
    }
    total
}

/// Graph area `A(u, Ω) = ∫ √(1 + |Du|²) dV`.
pub fn area(u: &GridField) -> FunctionalReport {
    let value = cell_integral(u, |q| (1.0 + q).sqrt());
    FunctionalReport::new("area", value, u.domain().h_max(), "cell midpoint quadrature")
}

/// Total variation `∫ |Du|_σ dV`.
pub fn total_variation(u: &GridField) -> FunctionalReport {
    let value = cell_integral(u, f64::sqrt);
    FunctionalReport::new(
        "total_variation",
        value,
        u.domain().h_max(),
        "cell midpoint quadrature",
    )
}

/// Penalized area `J = A(u, Ω) + Σ_∂ |u − φ| √det σ h^{n−1}`.
pub fn j_functional(u: &GridField, phi: &GridField) -> Result<FunctionalReport> {
    if !u.same_domain(phi) {
        return Err(Error::DomainMismatch);
    }
    phi.require_boundary()?;
    let d = u.domain();
    let facet = d.facet_area();
    let mut boundary_term = 0.0;
    for b in d.boundary() {
        boundary_term += (u.get(b.node) - phi.get(b.node)).abs() * b.sqrt_det * facet;
    }
    let a = area(u).value;
    Ok(FunctionalReport {
        name: "j".into(),
        value: a + boundary_term,
        quadrature_h: d.h_max(),
        boundary_term: Some(boundary_term),
        notes: "area plus dirichlet mismatch penalty".into(),
    })
}

/// `E^{ε}(u) = ∫ W + (ε/2)|Du|² dV`, plus `∫ f u dV` (node quadrature over
/// interior nodes) when a source `f` is supplied.
pub fn e_eps(u: &GridField, eps: f64, source: Option<&GridField>) -> Result<FunctionalReport> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "eps must be finite and non-negative, got {eps}"
        )));
    }
    let mut value = if eps == 0.0 {
        cell_integral(u, |q| (1.0 + q).sqrt())
    } else {
        cell_integral(u, |q| (1.0 + q).sqrt() + 0.5 * eps * q)
    };
    if let Some(f) = source {
        if !u.same_domain(f) {
            return Err(Error::DomainMismatch);
        }
        let d = u.domain();
        let vol = d.cell_volume();
        let mut s = 0.0;
        for (&p, geo) in d.interior().iter().zip(d.geometry()) {
            s += f.get(p) * u.get(p) * geo.sqrt_det * vol;
        }
        value += s;
    }
    Ok(FunctionalReport::new(
        "e_eps",
        value,
        u.domain().h_max(),
        &format!("eps = {eps}"),
    ))
}

/// Directional derivative of the discrete area:
/// `Σ ⟨Du, Dη⟩_σ / W √det σ h^n`.
pub fn area_first_variation(u: &GridField, eta: &GridField) -> Result<f64> {
    if !u.same_domain(eta) {
        return Err(Error::DomainMismatch);
    }
    let d = u.domain();
    let n = d.dim();
    let vol = d.cell_volume();
    let mut total = 0.0;
    for cell in d.cells() {
        let g = d.cell_gradient(u.values(), cell);
        let ge = d.cell_gradient(eta.values(), cell);
        let up = linalg::mat_vec(&cell.inverse, &g, n);
        let w = (1.0 + linalg::dot(&up, &g, n).max(0.0)).sqrt();
        total += linalg::dot(&up, &ge, n) / w * cell.sqrt_det * vol;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridDomain, RegionSpec};
    use crate::manifold::MetricChart;
    use std::sync::Arc;

    fn square(h: f64) -> Arc<GridDomain> {
        GridDomain::build(
            MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            RegionSpec::whole_box(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn flat_and_tilted_areas() {
        let d = square(1.0 / 32.0);
        let zero = GridField::constant(&d, 0.0);
        assert!((area(&zero).value - 1.0).abs() < 1e-12);
        let tilt = GridField::from_fn(&d, |x| x[0]);
        assert!((area(&tilt).value - 2f64.sqrt()).abs() < 1e-12);
        assert!((total_variation(&tilt).value - 1.0).abs() < 1e-12);
        assert_eq!(total_variation(&zero).value, 0.0);
    }

    #[test]
    fn w_of_constant_and_plane() {
        let d = square(0.125);
        let w = w_factor(&GridField::constant(&d, 3.0)).unwrap();
        assert!(w.iter().all(|v| *v == 1.0));
        let w = w_factor(&GridField::from_fn(&d, |x| x[0])).unwrap();
        assert!(w.iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-14));
    }

    #[test]
    fn j_penalizes_mismatch_along_boundary() {
        let d = square(1.0 / 32.0);
        let u = GridField::constant(&d, 0.0);
        let phi = GridField::constant(&d, 1.0);
        let j = j_functional(&u, &phi).unwrap();
        assert!((j.boundary_term.unwrap() - 4.0).abs() < 1e-12);
        assert!((j.value - 5.0).abs() < 1e-12);
        let j0 = j_functional(&phi, &phi).unwrap();
        assert_eq!(j0.boundary_term, Some(0.0));
        assert_eq!(j0.value, area(&phi).value);
    }

    #[test]
    fn j_requires_boundary_values() {
        let d = square(0.25);
        let u = GridField::constant(&d, 0.0);
        let mut phi = GridField::constant(&d, 0.0);
        let b = d.boundary()[3].node;
        phi.values_mut()[b] = f64::NAN;
        assert!(matches!(
            j_functional(&u, &phi),
            Err(Error::MissingBoundaryValue { .. })
        ));
    }

    #[test]
    fn e_eps_collapses_to_area() {
        let d = square(1.0 / 16.0);
        let u = GridField::from_fn(&d, |x| (x[0] * 3.0).sin() * x[1]);
        assert_eq!(e_eps(&u, 0.0, None).unwrap().value, area(&u).value);
        let tilt = GridField::from_fn(&d, |x| x[0]);
        let e = e_eps(&tilt, 0.5, None).unwrap().value;
        assert!((e - (2f64.sqrt() + 0.25)).abs() < 1e-12);
        assert!(e_eps(&u, -1.0, None).is_err());
    }

    #[test]
    fn report_json_line_has_expected_keys() {
        let d = square(0.25);
        let r = area(&GridField::constant(&d, 0.0));
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        for key in ["name", "value", "boundary_term", "h"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
