//! Explicit time stepping for the viscous graphical mean curvature flow
//!
//! ```text
//! u_t = L^ε u = g^{ij} D²_ij u + ε W Δ_M u,   g^{ij} = σ^{ij} − u^i u^j / W²
//! ```
//!
//! with dirichlet data `φ`, optionally ramped by `δ ψ(t/δ) L^ε u₀` so the data
//! are first-order compatible with `u₀`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals;
use crate::grid::{GridDomain, GridField, NodeGeometry, NodeKind};
use crate::linalg;

/// Relative slack on the `sup |u_t| ≤ sup |L^ε u₀|` estimate.
pub const UT_BOUND_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub eps: f64,
    /// Compatibility ramp scale; 0 disables the ramp.
    pub delta: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub assert_estimates: bool,
    /// Record a diagnostic sample every this many steps (the last step of a
    /// run is always recorded by the drivers).
    pub diagnostics_every: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            eps: 0.0,
            delta: 0.0,
            cfl: 0.25,
            t_end: 1.0,
            assert_estimates: false,
            diagnostics_every: 1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("eps must be finite and >= 0, got {}", self.eps));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return bad(format!("delta must be finite and >= 0, got {}", self.delta));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad(format!("cfl must lie in (0, 1), got {}", self.cfl));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be finite and > 0, got {}", self.t_end));
        }
        if self.diagnostics_every == 0 {
            return bad("diagnostics_every must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub step: usize,
    pub t: f64,
    pub sup_u: f64,
    /// Backward-difference `sup |u_t|` over the last step.
    pub sup_ut: f64,
    /// `∫ W + (ε/2)|Du|² dV`.
    pub energy_eps: f64,
    /// `Σ u_t²/W √det σ hⁿ dt` for the last step.
    pub dissipation_increment: f64,
    pub dissipation_cum: f64,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: GridField,
    pub t: f64,
    pub step: usize,
    pub history: Vec<DiagnosticSample>,
    pub dissipation_cum: f64,
    /// Backward-difference `u_t` of the last step (zero before the first).
    pub ut: Vec<f64>,
}

impl FlowState {
    pub fn sup_ut(&self) -> f64 {
        self.ut.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `ψ(s) = s (1 − s/2)²` on `[0, 2]`, zero elsewhere.
pub fn ramp_profile(s: f64) -> f64 {
    if (0.0..=2.0).contains(&s) {
        let a = 1.0 - 0.5 * s;
        s * a * a
    } else {
        0.0
    }
}

/// `δ ψ(t/δ)`, the factor multiplying `L^ε u₀` in the ramped boundary data.
pub fn compatibility_ramp(t: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ramp scale must be positive, got {delta}"
        )));
    }
    Ok(delta * ramp_profile(t / delta))
}

/// `(Qu, Δ_M u, W)` at an interior node.
#[inline]
fn pointwise(d: &GridDomain, u: &[f64], node: usize, geo: &NodeGeometry) -> (f64, f64, f64) {
    let n = d.dim();
    let (grad, hess) = d.jet(u, node, geo);
    let up = linalg::mat_vec(&geo.inverse, &grad, n);
    let w2 = 1.0 + linalg::dot(&up, &grad, n).max(0.0);
    let lap = linalg::contract(&geo.inverse, &hess, n);
    let mut tilt = 0.0;
    for i in 0..n {
        for j in 0..n {
            tilt += up[i] * up[j] * hess[i][j];
        }
    }
    (lap - tilt / w2, lap, w2.sqrt())
}

#[inline]
fn l_eps_pointwise(q: f64, lap: f64, w: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        q
    } else {
        q + eps * w * lap
    }
}

fn interior_map(u: &GridField, f: impl Fn(f64, f64, f64) -> f64) -> Result<GridField> {
    let d = u.domain();
    for &p in d.interior() {
        for q in d.neighbors_of(p) {
            if !u.values()[q].is_finite() {
                return Err(Error::MissingBoundaryValue { node: q });
            }
        }
    }
    let mut out: Vec<f64> = d
        .mask()
        .iter()
        .map(|k| if *k == NodeKind::Exterior { f64::NAN } else { 0.0 })
        .collect();
    for (&p, geo) in d.interior().iter().zip(d.geometry()) {
        let (q, lap, w) = pointwise(d, u.values(), p, geo);
        out[p] = f(q, lap, w);
    }
    Ok(GridField::from_raw(d, out))
}

/// `Qu = g^{ij} D²_ij u` at interior nodes; zero on dirichlet nodes.
pub fn q_operator(u: &GridField) -> Result<GridField> {
    interior_map(u, |q, _, _| q)
}

/// `L^ε u = Qu + ε W Δ_M u` at interior nodes; zero on dirichlet nodes.
/// At `ε = 0` this is `q_operator` bit for bit.
pub fn l_eps_apply(u: &GridField, eps: f64) -> Result<GridField> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "eps must be finite and >= 0, got {eps}"
        )));
    }
    interior_map(u, |q, lap, w| l_eps_pointwise(q, lap, w, eps))
}

/// A configured flow: boundary data, initial field, and everything derived
/// from them that stays fixed during the run.
#[derive(Debug, Clone)]
pub struct Flow {
    domain: Arc<GridDomain>,
    params: FlowParams,
    phi: GridField,
    initial: GridField,
    /// `L^ε u₀` on interior nodes; on dirichlet nodes the mean over the
    /// adjacent interior nodes (used by the ramp).
    l_eps_u0: GridField,
    sup_l_eps_u0: f64,
    u_bounds: (f64, f64),
    tol_u: f64,
    tol_ut: f64,
    rhs: Vec<f64>,
    w: Vec<f64>,
}

impl Flow {
    /// `u₀` supplies interior values; dirichlet nodes start at `φ`.
    pub fn new(params: FlowParams, phi: &GridField, u0: &GridField) -> Result<Self> {
        params.validate()?;
        if !phi.same_domain(u0) {
            return Err(Error::DomainMismatch);
        }
        phi.require_boundary()?;
        let domain = phi.domain().clone();
        for &p in domain.interior() {
            if !u0.get(p).is_finite() {
                return Err(Error::NonFinite { node: p, step: 0 });
            }
        }
        let initial = GridField::with_boundary(u0, phi)?;
        let mut l0 = l_eps_apply(&initial, params.eps)?;
        for b in domain.boundary() {
            let (mut s, mut c) = (0.0, 0usize);
            for q in domain.neighbors_of(b.node) {
                if domain.kind(q) == NodeKind::Interior {
                    s += l0.get(q);
                    c += 1;
                }
            }
            l0.set(b.node, if c > 0 { s / c as f64 } else { 0.0 });
        }
        let sup_l = l0.sup_abs();

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in 0..domain.len() {
            if domain.kind(p) == NodeKind::Exterior {
                continue;
            }
            let v = initial.get(p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if params.delta > 0.0 {
            // the ramped data can overshoot φ by at most δ max ψ sup |L^ε u₀|
            let overshoot = params.delta * (8.0 / 27.0) * sup_l;
            lo -= overshoot;
            hi += overshoot;
        }
        let scale = 1.0f64.max(lo.abs()).max(hi.abs());
        let tol_ut = UT_BOUND_SLACK * sup_l + 1e-9 * scale;
        let m = domain.interior().len();
        Ok(Self {
            params,
            phi: phi.clone(),
            initial,
            l_eps_u0: l0,
            sup_l_eps_u0: sup_l,
            u_bounds: (lo, hi),
            tol_u: 1e-6 * scale,
            tol_ut,
            rhs: vec![0.0; m],
            w: vec![1.0; m],
            domain,
        })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn phi(&self) -> &GridField {
        &self.phi
    }

    /// `u₀` with dirichlet values replaced by `φ`.
    pub fn initial_field(&self) -> &GridField {
        &self.initial
    }

    pub fn l_eps_u0(&self) -> &GridField {
        &self.l_eps_u0
    }

    pub fn sup_l_eps_u0(&self) -> f64 {
        self.sup_l_eps_u0
    }

    /// `[min(inf φ, inf u₀), max(sup φ, sup u₀)]`, widened by the ramp
    /// overshoot when `δ > 0`.
    pub fn u_bounds(&self) -> (f64, f64) {
        self.u_bounds
    }

    pub fn initial_state(&self) -> FlowState {
        FlowState {
            u: self.initial.clone(),
            t: 0.0,
            step: 0,
            history: Vec::new(),
            dissipation_cum: 0.0,
            ut: vec![0.0; self.domain.len()],
        }
    }

    /// Boundary value at a dirichlet node at time `t`.
    fn boundary_value(&self, node: usize, t: f64) -> f64 {
        let phi = self.phi.get(node);
        if self.params.delta > 0.0 {
            phi + self.params.delta * ramp_profile(t / self.params.delta) * self.l_eps_u0.get(node)
        } else {
            phi
        }
    }

    /// Evaluates the right-hand side at every interior node and returns the
    /// CFL time step.
    fn sweep(&mut self, u: &[f64]) -> f64 {
        let eps = self.params.eps;
        let mut stiff = 0.0f64;
        for (s, (&p, geo)) in self.domain.interior().iter().zip(self.domain.geometry()).enumerate() {
            let (q, lap, w) = pointwise(&self.domain, u, p, geo);
            self.rhs[s] = l_eps_pointwise(q, lap, w, eps);
            self.w[s] = w;
            stiff = stiff.max(geo.lambda_max * (1.0 + eps * w));
        }
        let h = self.domain.h_min();
        if stiff > 0.0 {
            self.params.cfl * h * h / stiff
        } else {
            self.params.cfl * h * h
        }
    }

    /// One explicit step, shortened if needed so that `t` does not pass
    /// `t_limit`. Returns the step size used.
    pub fn step_until(&mut self, state: &mut FlowState, t_limit: f64) -> Result<f64> {
        let dt_cfl = self.sweep(state.u.values());
        let remaining = t_limit - state.t;
        if !(remaining > 0.0) {
            return Err(Error::BeyondHorizon {
                time: state.t,
                horizon: t_limit,
            });
        }
        let (dt, t_next) = if dt_cfl >= remaining {
            (remaining, t_limit)
        } else {
            (dt_cfl, state.t + dt_cfl)
        };
        let step = state.step + 1;
        let d = self.domain.clone();
        let vol = d.cell_volume();
        let mut dissipation = 0.0;
        {
            let u = state.u.values_mut();
            for (s, (&p, geo)) in d.interior().iter().zip(d.geometry()).enumerate() {
                let old = u[p];
                let new = old + dt * self.rhs[s];
                if !new.is_finite() {
                    return Err(Error::NonFinite { node: p, step });
                }
                u[p] = new;
                let ut = (new - old) / dt;
                state.ut[p] = ut;
                dissipation += ut * ut / self.w[s] * geo.sqrt_det * vol;
            }
            for b in d.boundary() {
                let old = u[b.node];
                let new = self.boundary_value(b.node, t_next);
                u[b.node] = new;
                state.ut[b.node] = (new - old) / dt;
            }
        }
        dissipation *= dt;
        state.t = t_next;
        state.step = step;
        state.dissipation_cum += dissipation;

        let record = step % self.params.diagnostics_every == 0;
        if self.params.assert_estimates || record {
            let sample = self.sample(state, dissipation)?;
            if self.params.assert_estimates {
                self.check_estimates(&sample, state)?;
            }
            if record {
                state.history.push(sample);
            }
        }
        Ok(dt)
    }

    /// One explicit step at the CFL size, capped by `t_end`.
    pub fn step(&mut self, state: &mut FlowState) -> Result<f64> {
        self.step_until(state, self.params.t_end)
    }

    /// Steps until `t = t_target` exactly.
    pub fn advance_to(&mut self, state: &mut FlowState, t_target: f64) -> Result<()> {
        if t_target < state.t {
            return Err(Error::InvalidParameter(format!(
                "cannot advance backwards from t = {} to {t_target}",
                state.t
            )));
        }
        while state.t < t_target {
            self.step_until(state, t_target)?;
        }
        Ok(())
    }

    /// Diagnostic sample for the current state; `dissipation_increment` is
    /// the value passed in.
    pub fn sample(&self, state: &FlowState, dissipation_increment: f64) -> Result<DiagnosticSample> {
        Ok(DiagnosticSample {
            step: state.step,
            t: state.t,
            sup_u: state.u.sup_abs(),
            sup_ut: state.sup_ut(),
            energy_eps: functionals::e_eps(&state.u, self.params.eps, None)?.value,
            dissipation_increment,
            dissipation_cum: state.dissipation_cum,
        })
    }

    /// Pushes a sample for the current state unless the last recorded one
    /// already describes it. The per-step increment is not known here and is
    /// reported as zero; `dissipation_cum` is exact.
    pub fn record(&self, state: &mut FlowState) -> Result<()> {
        if state.history.last().map(|s| s.step) == Some(state.step) {
            return Ok(());
        }
        let sample = self.sample(state, 0.0)?;
        state.history.push(sample);
        Ok(())
    }

    fn check_estimates(&self, sample: &DiagnosticSample, state: &FlowState) -> Result<()> {
        let (lo, hi) = self.u_bounds;
        let (min, max) = (state.u.min(), state.u.max());
        if max > hi + self.tol_u {
            return Err(Error::Estimate {
                name: "max_principle",
                step: sample.step,
                observed: max,
                bound: hi + self.tol_u,
            });
        }
        if min < lo - self.tol_u {
            return Err(Error::Estimate {
                name: "max_principle",
                step: sample.step,
                observed: min,
                bound: lo - self.tol_u,
            });
        }
        let bound = self.sup_l_eps_u0 + self.tol_ut;
        if sample.sup_ut > bound {
            return Err(Error::Estimate {
                name: "ut_bound",
                step: sample.step,
                observed: sample.sup_ut,
                bound,
            });
        }
        Ok(())
    }
}

/// Convenience form of a single step that rebuilds the flow from its data.
pub fn flow_step(
    state: &FlowState,
    params: &FlowParams,
    phi: &GridField,
    u0: &GridField,
) -> Result<FlowState> {
    let mut flow = Flow::new(params.clone(), phi, u0)?;
    let mut next = state.clone();
    flow.step(&mut next)?;
    Ok(next)
}

/// Diagnostic history as CSV: `step,t,sup_u,sup_ut,energy_eps,dissipation_cum`.
pub fn write_history_csv(history: &[DiagnosticSample], mut w: impl Write) -> Result<()> {
    writeln!(w, "step,t,sup_u,sup_ut,energy_eps,dissipation_cum")?;
    for s in history {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e}",
            s.step, s.t, s.sup_u, s.sup_ut, s.energy_eps, s.dissipation_cum
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RegionSpec;
    use crate::manifold::MetricChart;
    use std::f64::consts::PI;

    fn square(lo: f64, hi: f64, h: f64) -> Arc<GridDomain> {
        GridDomain::build(
            MetricChart::euclidean(&[[lo, hi], [lo, hi]]).unwrap(),
            RegionSpec::whole_box(),
            h,
        )
        .unwrap()
    }

    fn value_at(f: &GridField, x: &[f64]) -> f64 {
        let d = f.domain();
        let idx: Vec<usize> = (0..d.dim())
            .map(|k| ((x[k] - d.chart().bbox()[k][0]) / d.spacing()[k]).round() as usize)
            .collect();
        f.get(d.node_at(&idx).unwrap())
    }

    #[test]
    fn q_of_constant_and_affine_vanish() {
        let d = square(0.0, 1.0, 1.0 / 16.0);
        let c = GridField::constant(&d, 3.0);
        assert_eq!(q_operator(&c).unwrap().sup_abs(), 0.0);
        let a = GridField::from_fn(&d, |x| 0.5 * x[0] - 2.0 * x[1] + 1.0);
        assert!(q_operator(&a).unwrap().sup_abs() < 1e-12);
        assert!(l_eps_apply(&c, 0.3).unwrap().sup_abs() == 0.0);
    }

    #[test]
    fn saddle_residual_matches_symbolic_value() {
        // u = x² − y² at (1, 0): Du = (2, 0), W² = 5, Δu = 0, u^i u^j u_ij = 8
        let mut prev = f64::INFINITY;
        for h in [0.1, 0.05, 0.025] {
            let d = square(0.0, 2.0, h);
            let u = GridField::from_fn(&d, |x| {
                let (a, b) = (x[0], x[1] - 1.0);
                a * a - b * b
            });
            let q = value_at(&q_operator(&u).unwrap(), &[1.0, 1.0]);
            let err = (q + 1.6).abs();
            assert!(err < 1e-10 || err < prev / 3.0, "h = {h}: {q}");
            prev = err;
        }
    }

    #[test]
    fn viscous_term_adds_to_q() {
        let d = square(-1.0, 1.0, 1.0 / 16.0);
        let u = GridField::from_fn(&d, |x| x[0] * x[0]);
        let q = value_at(&q_operator(&u).unwrap(), &[0.0, 0.0]);
        let l = value_at(&l_eps_apply(&u, 0.1).unwrap(), &[0.0, 0.0]);
        assert!((q - 2.0).abs() < 1e-10);
        assert!((l - 2.2).abs() < 1e-10);
        let l0 = l_eps_apply(&u, 0.0).unwrap();
        let q0 = q_operator(&u).unwrap();
        for (a, b) in l0.values().iter().zip(q0.values()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn ramp_shape() {
        assert_eq!(compatibility_ramp(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(compatibility_ramp(1.0, 0.5).unwrap(), 0.0);
        assert_eq!(compatibility_ramp(3.0, 0.5).unwrap(), 0.0);
        // centred difference of the polynomial branch of δψ(t/δ) about t = 0
        let e = 1e-6;
        let branch = |t: f64| t * (1.0 - t / 1.0).powi(2);
        let slope = (branch(e) - branch(-e)) / (2.0 * e);
        assert!((slope - 1.0).abs() < 1e-8, "{slope}");
        assert_eq!(compatibility_ramp(e, 0.5).unwrap(), branch(e));
        assert!(compatibility_ramp(0.1, 0.0).is_err());
        let peak = ramp_profile(2.0 / 3.0);
        assert!((peak - 8.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_data_is_fixed() {
        let d = square(0.0, 1.0, 1.0 / 8.0);
        let phi = GridField::from_fn(&d, |x| 0.3 * x[0] + 0.7 * x[1]);
        let mut flow = Flow::new(
            FlowParams {
                t_end: 0.1,
                eps: 0.05,
                assert_estimates: true,
                ..Default::default()
            },
            &phi,
            &phi,
        )
        .unwrap();
        let mut state = flow.initial_state();
        for _ in 0..20 {
            flow.step(&mut state).unwrap();
        }
        let drift = state.u.sup_diff_on(&phi, d.interior());
        assert!(drift < 1e-14, "{drift}");
        assert!(state.dissipation_cum < 1e-26);
    }

    #[test]
    fn sine_bump_decays_monotonically() {
        let d = square(0.0, 1.0, 1.0 / 32.0);
        let u0 = GridField::from_fn(&d, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let phi = GridField::constant(&d, 0.0);
        let mut flow = Flow::new(
            FlowParams {
                t_end: 1.0,
                assert_estimates: true,
                ..Default::default()
            },
            &phi,
            &u0,
        )
        .unwrap();
        let mut state = flow.initial_state();
        let mut prev = state.u.sup_abs();
        for k in 0..200 {
            flow.step(&mut state).unwrap();
            let s = state.u.sup_abs();
            assert!(s < prev, "step {k}: {s} >= {prev}");
            prev = s;
        }
        let first = state.history[0];
        assert!(first.sup_ut <= flow.sup_l_eps_u0() + 1e-12);
        for pair in state.history.windows(2) {
            assert!(pair[1].energy_eps <= pair[0].energy_eps);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = FlowParams {
            cfl: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FlowParams {
            eps: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn advance_hits_target_time_exactly() {
        let d = square(0.0, 1.0, 1.0 / 8.0);
        let u0 = GridField::from_fn(&d, |x| x[0] * (1.0 - x[0]));
        let phi = GridField::constant(&d, 0.0);
        let mut flow = Flow::new(FlowParams::default(), &phi, &u0).unwrap();
        let mut state = flow.initial_state();
        flow.advance_to(&mut state, 0.0123).unwrap();
        assert_eq!(state.t, 0.0123);
    }

    #[test]
    fn history_csv_has_header() {
        let mut out = Vec::new();
        write_history_csv(&[], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "step,t,sup_u,sup_ut,energy_eps,dissipation_cum\n"
        );
    }
}
