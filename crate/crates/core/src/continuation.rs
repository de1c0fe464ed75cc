//! The double limit: run each ε-flow to a quasi-steady state, march ε down a
//! schedule, and inspect the resulting generalized solution ū.

use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierStatus, SolvabilityReport};
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowParams, FlowState};
use crate::functionals;
use crate::grid::{GridDomain, GridField, NodeKind};

/// Cauchy gaps and time-sequence limits are measured on interior nodes at
/// least this many cells away from the dirichlet layer.
pub const PROBE_COLLAR: usize = 4;

/// Quasi-steady threshold: `sup |u_t| < tol (1 + sup |u₀|)`.
fn steady_threshold(tol: f64, u0: &GridField) -> f64 {
    tol * (1.0 + u0.sup_abs())
}

/// Steps until `sup |u_t| < tol (1 + sup |u₀|)` or `t_end`. The boolean
/// reports whether the threshold was met; a state that is already steady
/// converges in zero steps.
pub fn run_to_quasi_steady(
    params: &FlowParams,
    phi: &GridField,
    u0: &GridField,
    tol: f64,
) -> Result<(FlowState, bool)> {
    let mut flow = Flow::new(params.clone(), phi, u0)?;
    run_flow_to_steady(&mut flow, tol, &mut |_| Ok(()))
}

fn run_flow_to_steady(
    flow: &mut Flow,
    tol: f64,
    observer: &mut dyn FnMut(&FlowState) -> Result<()>,
) -> Result<(FlowState, bool)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let threshold = steady_threshold(tol, flow.initial_field());
    let mut state = flow.initial_state();
    flow.record(&mut state)?;
    observer(&state)?;
    let delta = flow.params().delta;
    let ramp_active = |t: f64| delta > 0.0 && t < 2.0 * delta;
    let initial_rate = interior_sup(flow.domain(), flow.l_eps_u0());
    if initial_rate < threshold && !ramp_active(0.0) {
        return Ok((state, true));
    }
    let t_end = flow.params().t_end;
    let mut converged = false;
    while state.t < t_end {
        flow.step(&mut state)?;
        observer(&state)?;
        if !ramp_active(state.t) && state.sup_ut() < threshold {
            converged = true;
            break;
        }
    }
    flow.record(&mut state)?;
    Ok((state, converged))
}

fn interior_sup(domain: &GridDomain, f: &GridField) -> f64 {
    domain
        .interior()
        .iter()
        .fold(0.0, |m, &p| m.max(f.get(p).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// Explicit ε values; when empty the geometric schedule
    /// `eps0 · ratio^i, i = 0..=max_index` is used.
    pub eps: Vec<f64>,
    pub eps0: f64,
    pub ratio: f64,
    pub max_index: usize,
    /// Stop once the Cauchy gap between successive stages drops below this.
    pub gap_tol: f64,
    /// Quasi-steady tolerance for each stage.
    pub steady_tol: f64,
    pub warm_start: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            eps: Vec::new(),
            eps0: 0.1,
            ratio: 0.5,
            max_index: 12,
            gap_tol: 1e-4,
            steady_tol: 1e-6,
            warm_start: true,
        }
    }
}

impl Schedule {
    pub fn values(&self) -> Vec<f64> {
        if self.eps.is_empty() {
            (0..=self.max_index)
                .map(|i| self.eps0 * self.ratio.powi(i as i32))
                .collect()
        } else {
            self.eps.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        if v.is_empty() {
            return Err(Error::InvalidParameter("empty eps schedule".into()));
        }
        if v.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidParameter("eps schedule must be positive".into()));
        }
        if v.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("eps schedule must be strictly decreasing".into()));
        }
        if !(self.gap_tol >= 0.0) || !(self.steady_tol > 0.0) {
            return Err(Error::InvalidParameter("schedule tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub eps: f64,
    pub steps: usize,
    pub t_final: f64,
    pub final_sup_ut: f64,
    pub converged: bool,
    /// `∫∫ u_t²/W dV dt` over the stage.
    pub dissipation: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuationReport {
    pub eps_schedule: Vec<f64>,
    pub per_eps: Vec<StageRecord>,
    /// `sup |ū^{ε_i} − ū^{ε_{i−1}}|` on the probe set.
    pub cauchy_gaps: Vec<f64>,
    /// `sup |ū(p) − φ(b)|` over interior nodes `p` adjacent to dirichlet
    /// nodes `b`.
    pub trace_error: f64,
    pub time_uniqueness_gap: Option<f64>,
    pub warm_start: bool,
    pub converged: bool,
    pub probe_nodes: usize,
    /// Every stage's limit, in schedule order.
    #[serde(skip)]
    pub limits: Vec<GridField>,
    #[serde(skip)]
    pub histories: Vec<FlowState>,
}

impl ContinuationReport {
    /// Limit of the last completed stage.
    pub fn u_bar(&self) -> Option<&GridField> {
        self.limits.last()
    }
}

/// Marches ε down the schedule, each stage run to quasi-steady state and
/// warm-started from the previous limit unless `schedule.warm_start` is off.
/// A stage that fails to converge is recorded and ends the schedule.
pub fn eps_continuation(
    schedule: &Schedule,
    params: &FlowParams,
    phi: &GridField,
    u0: &GridField,
) -> Result<ContinuationReport> {
    eps_continuation_observed(schedule, params, phi, u0, &mut |_, _| Ok(()))
}

/// [`eps_continuation`] calling `observer(stage, state)` after the initial
/// state and every step of each stage.
pub fn eps_continuation_observed(
    schedule: &Schedule,
    params: &FlowParams,
    phi: &GridField,
    u0: &GridField,
    observer: &mut dyn FnMut(usize, &FlowState) -> Result<()>,
) -> Result<ContinuationReport> {
    schedule.validate()?;
    params.validate()?;
    let domain = phi.domain().clone();
    let probe = domain.probe_nodes(PROBE_COLLAR);
    let mut report = ContinuationReport {
        eps_schedule: Vec::new(),
        per_eps: Vec::new(),
        cauchy_gaps: Vec::new(),
        trace_error: 0.0,
        time_uniqueness_gap: None,
        warm_start: schedule.warm_start,
        converged: true,
        probe_nodes: probe.len(),
        limits: Vec::new(),
        histories: Vec::new(),
    };
    for (stage, eps) in schedule.values().into_iter().enumerate() {
        let start = match (schedule.warm_start, report.limits.last()) {
            (true, Some(prev)) => prev.clone(),
            _ => u0.clone(),
        };
        let stage_params = FlowParams { eps, ..params.clone() };
        let mut flow = Flow::new(stage_params, phi, &start)?;
        let (state, converged) =
            run_flow_to_steady(&mut flow, schedule.steady_tol, &mut |s| observer(stage, s))?;
        let first = state.history.first().copied();
        let last = state.history.last().copied();
        report.eps_schedule.push(eps);
        report.per_eps.push(StageRecord {
            eps,
            steps: state.step,
            t_final: state.t,
            final_sup_ut: state.sup_ut(),
            converged,
            dissipation: state.dissipation_cum,
            energy_initial: first.map_or(f64::NAN, |s| s.energy_eps),
            energy_final: last.map_or(f64::NAN, |s| s.energy_eps),
        });
        if let Some(prev) = report.limits.last() {
            report.cauchy_gaps.push(state.u.sup_diff_on(prev, &probe));
        }
        report.limits.push(state.u.clone());
        report.histories.push(state);
        if !converged {
            report.converged = false;
            break;
        }
        if report.cauchy_gaps.last().is_some_and(|g| *g < schedule.gap_tol) {
            break;
        }
    }
    if let Some(u) = report.limits.last() {
        report.trace_error = trace_error(u, phi);
    }
    Ok(report)
}

/// `sup |ū(p) − φ(b)|` over adjacent (interior `p`, dirichlet `b`) pairs.
pub fn trace_error(u: &GridField, phi: &GridField) -> f64 {
    let d = u.domain();
    let mut worst = 0.0f64;
    for b in d.boundary() {
        for q in d.neighbors_of(b.node) {
            if d.kind(q) == NodeKind::Interior {
                worst = worst.max((u.get(q) - phi.get(b.node)).abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Attainment {
    Attained,
    Detached,
    Uncertified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttainmentPoint {
    pub node: usize,
    pub x: Vec<f64>,
    /// `max |ū(p) − φ(b)|` over adjacent interior nodes `p`.
    pub trace_gap: f64,
    /// Least-squares `C` in `|ū − φ(b)| ≈ C · dist` along the inward ray.
    pub modulus: f64,
    /// Certification of the nearest barrier point, when barriers were run.
    pub barrier_certified: Option<bool>,
    pub class: Attainment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttainmentReport {
    pub points: Vec<AttainmentPoint>,
    pub attained: usize,
    pub detached: usize,
    pub uncertified: usize,
    /// Gap below which a point counts as attained (`10 h`).
    pub attained_tol: f64,
}

/// Classifies every dirichlet node:
/// * attained — trace gap at most `10 h`;
/// * detached — the gap is a wall in the first cell: it exceeds twice the
///   variation of ū over the next cell inward;
/// * uncertified — anything else (a steep but continuous approach).
pub fn boundary_attainment_report(
    u_bar: &GridField,
    phi: &GridField,
    barriers: Option<&SolvabilityReport>,
) -> Result<AttainmentReport> {
    if !u_bar.same_domain(phi) {
        return Err(Error::DomainMismatch);
    }
    let d = u_bar.domain();
    let h = d.h_max();
    let tol = 10.0 * h;
    let mut points = Vec::with_capacity(d.boundary().len());
    for b in d.boundary() {
        let target = phi.get(b.node);
        let x = d.coords(b.node);
        let trace_gap = d
            .neighbors_of(b.node)
            .filter(|&q| d.kind(q) == NodeKind::Interior)
            .map(|q| (u_bar.get(q) - target).abs())
            .fold(0.0, f64::max);

        // walk inward along the lattice direction closest to -outward
        let step: Vec<isize> = b.outward.iter().map(|v| -v.round() as isize).collect();
        let mut ray = Vec::new();
        let mut idx: Vec<isize> = d.index_of(b.node).iter().map(|&i| i as isize).collect();
        for _ in 0..4 {
            for (i, s) in idx.iter_mut().zip(&step) {
                *i += s;
            }
            let Some(node) = index_node(d, &idx) else { break };
            if d.kind(node) != NodeKind::Interior {
                break;
            }
            let dist: f64 = d
                .coords(node)
                .iter()
                .zip(&x)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt();
            ray.push((dist, u_bar.get(node)));
        }
        let (sxy, sxx) = ray.iter().fold((0.0, 0.0), |(sxy, sxx), (r, v)| {
            (sxy + r * (v - target).abs(), sxx + r * r)
        });
        let modulus = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let wall = match ray.as_slice() {
            [(_, a), (_, b2), ..] => (a - target).abs() > 2.0 * (a - b2).abs(),
            _ => false,
        };
        let class = if trace_gap <= tol {
            Attainment::Attained
        } else if wall {
            Attainment::Detached
        } else {
            Attainment::Uncertified
        };
        let barrier_certified = barriers.and_then(|rep| {
            rep.points
                .iter()
                .map(|p| {
                    let dd: f64 = p.x0.iter().zip(&x).map(|(a, c)| (a - c) * (a - c)).sum();
                    (dd, p.status == BarrierStatus::Certified)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, c)| c)
        });
        points.push(AttainmentPoint {
            node: b.node,
            x,
            trace_gap,
            modulus,
            barrier_certified,
            class,
        });
    }
    let count = |c| points.iter().filter(|p: &&AttainmentPoint| p.class == c).count();
    Ok(AttainmentReport {
        attained: count(Attainment::Attained),
        detached: count(Attainment::Detached),
        uncertified: count(Attainment::Uncertified),
        attained_tol: tol,
        points,
    })
}

fn index_node(d: &GridDomain, idx: &[isize]) -> Option<usize> {
    if idx.iter().zip(d.shape()).any(|(i, s)| *i < 0 || *i as usize >= *s) {
        return None;
    }
    let u: Vec<usize> = idx.iter().map(|&i| i as usize).collect();
    d.node_at(&u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSequenceReport {
    pub times_a: Vec<f64>,
    pub times_b: Vec<f64>,
    /// `sup |u(t_a,last) − u(t_b,last)|` on the probe set.
    pub gap: f64,
    /// `∫ (u_t/W)² dV` at each sampled time, in merged time order.
    pub sample_times: Vec<f64>,
    pub source_norms: Vec<f64>,
    pub source_norms_nonincreasing: bool,
}

/// `∫ (u_t/W)² dV` from the state's backward-difference `u_t`.
pub fn source_norm(state: &FlowState) -> Result<f64> {
    let d = state.u.domain();
    let w = functionals::w_factor(&state.u)?;
    let vol = d.cell_volume();
    Ok(d.interior()
        .iter()
        .zip(d.geometry())
        .zip(&w)
        .map(|((&p, geo), w)| {
            let f = state.ut[p] / w;
            f * f * geo.sqrt_det * vol
        })
        .sum())
}

/// Samples one flow run along two increasing time sequences and compares
/// the last-iterate limits of each; also checks that `∫ f²`, `f = u_t/W`,
/// does not increase along the sampled times.
pub fn time_sequence_uniqueness_check(
    params: &FlowParams,
    phi: &GridField,
    u0: &GridField,
    times_a: &[f64],
    times_b: &[f64],
) -> Result<TimeSequenceReport> {
    for seq in [times_a, times_b] {
        if seq.is_empty() || seq.windows(2).any(|w| w[1] <= w[0]) || seq[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "time sequences must be non-empty, positive and increasing".into(),
            ));
        }
        let last = *seq.last().unwrap();
        if last > params.t_end {
            return Err(Error::BeyondHorizon {
                time: last,
                horizon: params.t_end,
            });
        }
    }
    let mut merged: Vec<f64> = times_a.iter().chain(times_b).copied().collect();
    merged.sort_by(f64::total_cmp);
    merged.dedup();

    let mut flow = Flow::new(params.clone(), phi, u0)?;
    let mut state = flow.initial_state();
    let probe = phi.domain().probe_nodes(PROBE_COLLAR);
    let (end_a, end_b) = (*times_a.last().unwrap(), *times_b.last().unwrap());
    let mut limit_a = None;
    let mut limit_b = None;
    let mut norms = Vec::with_capacity(merged.len());
    for &t in &merged {
        flow.advance_to(&mut state, t)?;
        norms.push(source_norm(&state)?);
        if t == end_a {
            limit_a = Some(state.u.clone());
        }
        if t == end_b {
            limit_b = Some(state.u.clone());
        }
    }
    let (a, b) = (limit_a.unwrap(), limit_b.unwrap());
    let nonincreasing = norms
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-300);
    Ok(TimeSequenceReport {
        times_a: times_a.to_vec(),
        times_b: times_b.to_vec(),
        gap: a.sup_diff_on(&b, &probe),
        sample_times: merged,
        source_norms: norms,
        source_norms_nonincreasing: nonincreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RegionSpec;
    use crate::manifold::MetricChart;
    use std::sync::Arc;

    fn unit_interval(h: f64) -> Arc<GridDomain> {
        GridDomain::build(
            MetricChart::euclidean(&[[0.0, 1.0]]).unwrap(),
            RegionSpec::whole_box(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn constant_data_converges_immediately() {
        let d = unit_interval(1.0 / 16.0);
        let c = GridField::constant(&d, 0.7);
        let (state, ok) = run_to_quasi_steady(&FlowParams::default(), &c, &c, 1e-8).unwrap();
        assert!(ok);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn one_dimensional_affine_limit() {
        let d = unit_interval(1.0 / 16.0);
        let phi = GridField::from_fn(&d, |x| x[0]);
        let u0 = GridField::constant(&d, 0.0);
        let params = FlowParams {
            t_end: 20.0,
            ..Default::default()
        };
        let (state, ok) = run_to_quasi_steady(&params, &phi, &u0, 1e-10).unwrap();
        assert!(ok);
        let err = state.u.sup_diff_on(&phi, d.interior());
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn affine_gaps_vanish_across_schedule() {
        let d = unit_interval(1.0 / 16.0);
        let phi = GridField::from_fn(&d, |x| 2.0 * x[0] - 0.5);
        let schedule = Schedule {
            max_index: 4,
            gap_tol: 0.0,
            ..Default::default()
        };
        let rep = eps_continuation(
            &schedule,
            &FlowParams {
                t_end: 5.0,
                ..Default::default()
            },
            &phi,
            &phi,
        )
        .unwrap();
        assert_eq!(rep.per_eps.len(), 5);
        assert!(rep.cauchy_gaps.iter().all(|g| *g < 1e-10));
        assert!(rep.converged);
        assert!(rep.trace_error <= 2.0 / 16.0 + 1e-12);
    }

    #[test]
    fn schedule_validation() {
        let s = Schedule {
            eps: vec![0.1, 0.2],
            ..Default::default()
        };
        assert!(s.validate().is_err());
        assert_eq!(Schedule::default().values().len(), 13);
        assert_eq!(Schedule::default().values()[12], 0.1 / 4096.0);
    }

    #[test]
    fn constant_data_is_attained() {
        let d = GridDomain::build(
            MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            RegionSpec::whole_box(),
            0.125,
        )
        .unwrap();
        let c = GridField::constant(&d, 1.0);
        let rep = boundary_attainment_report(&c, &c, None).unwrap();
        assert_eq!(rep.attained, d.boundary().len());
        assert!(rep.points.iter().all(|p| p.trace_gap == 0.0));
    }

    #[test]
    fn stationary_time_sequences_agree() {
        let d = unit_interval(1.0 / 16.0);
        let phi = GridField::from_fn(&d, |x| x[0]);
        let params = FlowParams {
            t_end: 1.0,
            ..Default::default()
        };
        let rep = time_sequence_uniqueness_check(&params, &phi, &phi, &[0.1, 0.2], &[0.15, 0.3])
            .unwrap();
        assert!(rep.gap < 1e-14);
        assert!(matches!(
            time_sequence_uniqueness_check(&params, &phi, &phi, &[0.5, 2.0], &[0.1]),
            Err(Error::BeyondHorizon { .. })
        ));
    }
}
