//! Continuous ant colony optimization with a ranked solution archive.
//!
//! Each ant samples every coordinate from a Gaussian mixture over the
//! archive: an archive entry is picked by rank weight, then the coordinate
//! is drawn around that entry with a spread proportional to the mean
//! absolute distance to the rest of the archive. New solutions merge into
//! the archive, which keeps the best `archive_size`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Objective, OptimizeError, RunResult};

/// Minimum sampling spread; keeps degenerate archives from collapsing to a
/// zero-variance Gaussian.
pub const SPREAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AcoConfig {
    pub n_ants: usize,
    pub iterations: usize,
    pub archive_size: usize,
    /// Rank-weight locality; small values focus on the best entries.
    pub q: f64,
    /// Spread multiplier (evaporation-like, slows convergence when larger).
    pub xi_aco: f64,
    pub seed: u64,
}

impl Default for AcoConfig {
    fn default() -> Self {
        Self { n_ants: 20, iterations: 200, archive_size: 50, q: 0.5, xi_aco: 0.85, seed: 0 }
    }
}

impl AcoConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.n_ants == 0 {
            return Err(OptimizeError::InvalidConfig("need at least one ant".into()));
        }
        if self.archive_size < self.n_ants {
            return Err(OptimizeError::InvalidConfig(format!(
                "archive_size {} must be >= n_ants {}",
                self.archive_size, self.n_ants
            )));
        }
        if self.q <= 0.0 || self.xi_aco <= 0.0 {
            return Err(OptimizeError::InvalidConfig(
                "q and xi_aco must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Entry {
    position: Vec<f64>,
    cost: f64,
}

/// Run the archive-based continuous ant colony optimizer.
pub fn aco_run(obj: &Objective, cfg: &AcoConfig) -> Result<RunResult, OptimizeError> {
    cfg.validate()?;
    let dim = obj.dim();
    let k = cfg.archive_size;

    // stream 0 initializes the archive; streams 1..=n_ants drive the ants
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(0);
    let mut ant_rngs: Vec<ChaCha8Rng> = (1..=cfg.n_ants)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect();

    let mut archive: Vec<Entry> = (0..k)
        .map(|_| {
            let position: Vec<f64> = obj
                .bounds()
                .iter()
                .map(|(lo, hi)| init_rng.gen_range(*lo..*hi))
                .collect();
            Entry { position, cost: f64::NAN }
        })
        .collect();
    let costs: Vec<f64> = archive.par_iter().map(|e| obj.eval(&e.position)).collect();
    for (e, c) in archive.iter_mut().zip(costs) {
        e.cost = c;
    }
    archive.sort_by(|a, b| a.cost.total_cmp(&b.cost));

    // rank weights: omega_l ~ exp(-(l-1)^2 / (2 q^2 k^2)), l = 1..=k
    let weights: Vec<f64> = (0..k)
        .map(|l| {
            let z = l as f64;
            (-(z * z) / (2.0 * cfg.q * cfg.q * (k * k) as f64)).exp()
        })
        .collect();
    let weight_total: f64 = weights.iter().sum();

    let mut history = Vec::with_capacity(cfg.iterations + 1);
    history.push(archive[0].cost);

    for _ in 0..cfg.iterations {
        let mut offspring: Vec<Entry> = Vec::with_capacity(cfg.n_ants);
        for rng in ant_rngs.iter_mut() {
            let mut position = Vec::with_capacity(dim);
            for j in 0..dim {
                // pick the guiding archive entry for this coordinate
                let mut target = rng.gen::<f64>() * weight_total;
                let mut pick = k - 1;
                for (l, w) in weights.iter().enumerate() {
                    target -= w;
                    if target <= 0.0 {
                        pick = l;
                        break;
                    }
                }
                let mean = archive[pick].position[j];
                let spread = if k > 1 {
                    let sum_abs: f64 = archive
                        .iter()
                        .map(|e| (e.position[j] - mean).abs())
                        .sum();
                    cfg.xi_aco * sum_abs / (k - 1) as f64
                } else {
                    0.0
                }
                .max(SPREAD_FLOOR);
                let normal = Normal::new(mean, spread).expect("spread is positive and finite");
                let (lo, hi) = obj.bounds()[j];
                position.push(normal.sample(rng).clamp(lo, hi));
            }
            offspring.push(Entry { position, cost: f64::NAN });
        }
        let costs: Vec<f64> = offspring.par_iter().map(|e| obj.eval(&e.position)).collect();
        for (e, c) in offspring.iter_mut().zip(costs) {
            e.cost = c;
        }
        archive.extend(offspring);
        archive.sort_by(|a, b| a.cost.total_cmp(&b.cost));
        archive.truncate(k);
        history.push(archive[0].cost);
    }

    let best = archive.into_iter().next().expect("archive is non-empty");
    Ok(RunResult { best_position: best.position, best_cost: best.cost, history })
}
