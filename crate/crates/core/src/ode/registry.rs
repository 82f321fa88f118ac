use std::collections::BTreeMap;
use std::fmt;

use super::{solve_quadrature, solve_rk, solve_spectral, WGrid};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// A method producing the ODE solution on a uniform grid of `n_steps` intervals.
pub trait WSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, p: &ModelParams, n_steps: usize) -> Result<WGrid>;
}

impl fmt::Debug for dyn WSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WSolver({})", self.name())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RungeKuttaSolver;

impl WSolver for RungeKuttaSolver {
    fn name(&self) -> &'static str {
        "rk"
    }

    fn solve(&self, p: &ModelParams, n_steps: usize) -> Result<WGrid> {
        solve_rk(p, n_steps)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SpectralSolver;

impl WSolver for SpectralSolver {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn solve(&self, p: &ModelParams, n_steps: usize) -> Result<WGrid> {
        solve_spectral(p)?.to_grid(n_steps)
    }
}

/// Quadrature on the output grid itself (`n_quad = n_steps`, at least 3).
#[derive(Debug, Default, Clone, Copy)]
pub struct QuadratureSolver;

impl WSolver for QuadratureSolver {
    fn name(&self) -> &'static str {
        "quadrature"
    }

    fn solve(&self, p: &ModelParams, n_steps: usize) -> Result<WGrid> {
        solve_quadrature(p, n_steps)
    }
}

/// Solvers keyed by name, for runtime selection from config or the CLI.
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn WSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
        }
    }

    /// `rk`, `spectral` and `quadrature`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(RungeKuttaSolver));
        r.register(Box::new(SpectralSolver));
        r.register(Box::new(QuadratureSolver));
        r
    }

    /// Adds a solver, replacing any previous one with the same name.
    pub fn register(&mut self, solver: Box<dyn WSolver>) -> Option<Box<dyn WSolver>> {
        self.solvers.insert(solver.name(), solver)
    }

    pub fn get(&self, name: &str) -> Result<&dyn WSolver> {
        self.solvers
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: "solver",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.solvers.keys().copied()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
