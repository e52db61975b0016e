//! Preconditioned conjugate gradients on CSR matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sparse::{dot, norm, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

/// Backend for repeated solves with one fixed SPD matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    #[default]
    ConjugateGradient,
    /// Factor once (envelope Cholesky), then two triangular solves per call.
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Stop when ‖b − A x‖ ≤ tolerance · ‖b‖.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iterations: 20_000, preconditioner: Preconditioner::Jacobi }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "cg tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("cg max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final relative residual ‖b − A x‖ / ‖b‖ (absolute when b = 0).
    pub residual: f64,
}

/// Reusable CG workspace. Keeps the inverse diagonal and scratch vectors so
/// repeated solves with one matrix do not reallocate.
#[derive(Debug, Clone)]
pub struct CgSolver {
    config: CgConfig,
    inv_diag: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl CgSolver {
    pub fn new(a: &CsrMatrix, config: CgConfig) -> Result<Self> {
        config.validate()?;
        let n = a.nrows();
        let inv_diag = match config.preconditioner {
            Preconditioner::None => vec![1.0; n],
            Preconditioner::Jacobi => a
                .diagonal()
                .into_iter()
                .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        };
        Ok(Self { config, inv_diag, r: vec![0.0; n], z: vec![0.0; n], p: vec![0.0; n], ap: vec![0.0; n] })
    }

    pub fn config(&self) -> &CgConfig {
        &self.config
    }

    /// Solve `A x = b` in place, starting from the incoming `x`.
    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64], x: &mut [f64]) -> Result<CgOutcome> {
        let n = a.nrows();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        let b_norm = norm(b);
        if b_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CgOutcome { iterations: 0, residual: 0.0 });
        }
        let target = self.config.tolerance * b_norm;

        a.mul_vec(x, &mut self.r);
        for i in 0..n {
            self.r[i] = b[i] - self.r[i];
        }
        let mut r_norm = norm(&self.r);
        if r_norm <= target {
            return Ok(CgOutcome { iterations: 0, residual: r_norm / b_norm });
        }
        for i in 0..n {
            self.z[i] = self.inv_diag[i] * self.r[i];
        }
        self.p.copy_from_slice(&self.z);
        let mut rz = dot(&self.r, &self.z);

        for it in 1..=self.config.max_iterations {
            a.mul_vec(&self.p, &mut self.ap);
            let curvature = dot(&self.p, &self.ap);
            if !(curvature > 0.0) {
                return Err(Error::Breakdown { iteration: it, curvature });
            }
            let alpha = rz / curvature;
            for i in 0..n {
                x[i] += alpha * self.p[i];
                self.r[i] -= alpha * self.ap[i];
            }
            r_norm = norm(&self.r);
            if r_norm <= target {
                return Ok(CgOutcome { iterations: it, residual: r_norm / b_norm });
            }
            for i in 0..n {
                self.z[i] = self.inv_diag[i] * self.r[i];
            }
            let rz_next = dot(&self.r, &self.z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                self.p[i] = self.z[i] + beta * self.p[i];
            }
        }
        Err(Error::NotConverged { iterations: self.config.max_iterations, residual: r_norm / b_norm })
    }
}

/// One-shot solve: returns `(x, iterations, relative residual)`.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], config: &CgConfig, x0: &[f64]) -> Result<(Vec<f64>, usize, f64)> {
    let mut solver = CgSolver::new(a, *config)?;
    let mut x = x0.to_vec();
    let out = solver.solve(a, b, &mut x)?;
    Ok((x, out.iterations, out.residual))
}
