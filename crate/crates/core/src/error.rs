use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown chart kind `{0}`")]
    UnknownChartKind(String),

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },

    #[error("point {point:?} lies outside the chart box")]
    OutsideBox { point: Vec<f64> },

    #[error("insufficient margin for differenced Christoffel symbols at {point:?} (spacing {spacing})")]
    InsufficientMargin { point: Vec<f64>, spacing: f64 },

    #[error("spacing {h} does not divide the box along axis {axis} (width {width})")]
    SpacingMismatch { axis: usize, h: f64, width: f64 },

    #[error("region is empty after masking")]
    EmptyRegion,

    #[error("grid too coarse: axis {axis} has only {nodes} lattice nodes")]
    TooCoarse { axis: usize, nodes: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("stencil at node {node} touches a non-interior node")]
    Stencil { node: usize },

    #[error("missing boundary value at dirichlet node {node}")]
    MissingBoundaryValue { node: usize },

    #[error("field does not belong to this domain")]
    DomainMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at node {node} in step {step}")]
    NonFinite { node: usize, step: usize },

    #[error("estimate `{name}` violated at step {step}: observed {observed:e} exceeds bound {bound:e}")]
    Estimate {
        name: &'static str,
        step: usize,
        observed: f64,
        bound: f64,
    },

    #[error("window exceeds the lattice")]
    WindowOutOfRange,

    #[error("truncation height {height} is clipped by the graph (sup |u| = {sup})")]
    Truncation { height: f64, sup: f64 },

    #[error("column {node} violates the containment precondition")]
    Containment { node: usize },

    #[error("degenerate boundary fit at node {node}: {reason}")]
    DegenerateFit { node: usize, reason: String },

    #[error("barrier function is non-positive at {point:?}")]
    NonPositiveBarrier { point: Vec<f64> },

    #[error("evaluation point too close to the boundary point (v = {v:e})")]
    TooCloseToBoundaryPoint { v: f64 },

    #[error("sample time {time} exceeds the flow horizon {horizon}")]
    BeyondHorizon { time: f64, horizon: f64 },

    #[error("flow did not reach quasi-steady state for eps = {eps} before t = {t_end}")]
    NotConverged { eps: f64, t_end: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing run artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
