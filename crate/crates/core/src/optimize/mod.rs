//! Population metaheuristics over flat real vectors.
//!
//! [`ica`] implements the imperialist competitive algorithm (the primary
//! trainer); [`aco`] an archive-based continuous ant colony baseline. Both
//! minimize an [`Objective`] within box bounds, are deterministic for a
//! given seed (one RNG stream per population member plus one for
//! state-level draws), and evaluate candidate costs in parallel.

use std::sync::Arc;

use thiserror::Error;

pub mod aco;
pub mod ica;

pub use aco::{aco_run, AcoConfig};
pub use ica::{ica_init, ica_run, ica_step, IcaConfig, IcaState};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

type CostFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A deterministic cost function over a box-bounded real vector space.
#[derive(Clone)]
pub struct Objective {
    bounds: Vec<(f64, f64)>,
    eval: CostFn,
}

impl Objective {
    pub fn new(
        bounds: Vec<(f64, f64)>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, OptimizeError> {
        if bounds.is_empty() {
            return Err(OptimizeError::InvalidConfig("objective needs at least one dimension".into()));
        }
        if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(OptimizeError::InvalidConfig(format!(
                "bound [{lo}, {hi}] is not a proper interval"
            )));
        }
        Ok(Self { bounds, eval: Arc::new(eval) })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Clamp a position into the box, coordinate by coordinate.
    pub fn clip(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective").field("dim", &self.dim()).finish()
    }
}

/// Outcome of one optimizer run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    /// Best cost seen so far, recorded before the first iteration and after
    /// each one; monotone non-increasing.
    pub history: Vec<f64>,
}

/// `sum(x_i^2)`, global minimum 0 at the origin. Bounds [-5, 5].
pub fn sphere(dim: usize) -> Objective {
    Objective::new(vec![(-5.0, 5.0); dim], |x| x.iter().map(|v| v * v).sum())
        .expect("static bounds are valid")
}

/// Rastrigin function, global minimum 0 at the origin. Bounds [-5.12, 5.12].
pub fn rastrigin(dim: usize) -> Objective {
    Objective::new(vec![(-5.12, 5.12); dim], |x| {
        10.0 * x.len() as f64
            + x.iter()
                .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                .sum::<f64>()
    })
    .expect("static bounds are valid")
}

/// Rosenbrock function, global minimum 0 at all-ones. Bounds [-5, 10].
pub fn rosenbrock(dim: usize) -> Objective {
    Objective::new(vec![(-5.0, 10.0); dim], |x| {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    })
    .expect("static bounds are valid")
}

/// Standard validation objectives in 2 and 10 dimensions.
pub fn benchmarks() -> Vec<(String, Objective)> {
    let mut out = Vec::new();
    for dim in [2usize, 10] {
        out.push((format!("sphere_{dim}d"), sphere(dim)));
        out.push((format!("rastrigin_{dim}d"), rastrigin(dim)));
        out.push((format!("rosenbrock_{dim}d"), rosenbrock(dim)));
    }
    out
}

/// Derive an independent sub-seed from a base seed and a role tag
/// (splitmix64 finalizer).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
