use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rotation is not orthogonal (residual {residual:e})")]
    NonOrthogonalRotation { residual: f64 },
    #[error("direction is not a unit vector (|n| = {norm})")]
    NonUnitDirection { norm: f64 },
    #[error("gate footprints overlap or leave the top face: {0}")]
    GateLayout(String),
    #[error("point ({x:e}, {y:e}, {z:e}) lies outside the mesh")]
    OutOfDomain { x: f64, y: f64, z: f64 },
    #[error("duplicate constraint on dof {0}")]
    DuplicateConstraint(usize),
    #[error("potential system has no Dirichlet node; the constant mode is undetermined")]
    UnconstrainedPotential,
    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("conjugate gradient breakdown at iteration {iteration}: p'Ap = {curvature:e}, matrix not SPD")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("non-finite field at step {step} (t = {time:e} s); reduce the time step")]
    Unstable { step: usize, time: f64 },
    #[error("solver failure at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("no extrema above the noise floor")]
    NoExtrema,
    #[error("trace never settles into the equilibrium band")]
    NeverSettles,
    #[error("surface crest not found")]
    CrestNotFound,
    #[error("time bases differ: {0}")]
    TimeBaseMismatch(String),
    #[error("norm drift {drift:e} at step {step} exceeds tolerance; reduce dt")]
    NormDrift { step: usize, drift: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
