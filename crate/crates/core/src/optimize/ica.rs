//! Imperialist competitive algorithm for continuous minimization.
//!
//! A population of candidate solutions ("countries") is partitioned into
//! empires, each led by its best member (the imperialist). Per iteration,
//! colonies move toward their imperialist (assimilation), occasionally
//! re-randomize part of their position (revolution), swap roles with their
//! imperialist when they surpass it, and the weakest empire loses a colony
//! to a competitor until a single empire remains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Objective, OptimizeError, RunResult};

/// Fraction of coordinates re-drawn when a colony revolts.
pub const REVOLUTION_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub population: usize,
    pub n_empires: usize,
    pub iterations: usize,
    /// Per-colony probability of a revolution each iteration.
    pub revolution_rate: f64,
    /// Assimilation step scale toward the imperialist.
    pub beta: f64,
    /// Weight of mean colony cost in an empire's total power.
    pub xi: f64,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            population: 200,
            n_empires: 5,
            iterations: 200,
            revolution_rate: 0.1,
            beta: 2.0,
            xi: 0.1,
            seed: 0,
        }
    }
}

impl IcaConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.n_empires == 0 || self.n_empires >= self.population {
            return Err(OptimizeError::InvalidConfig(format!(
                "need 1 <= n_empires < population, got {} empires over {}",
                self.n_empires, self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.revolution_rate) {
            return Err(OptimizeError::InvalidConfig(format!(
                "revolution_rate must be in [0, 1], got {}",
                self.revolution_rate
            )));
        }
        // beta = 0 is a legal degenerate setting (assimilation disabled)
        if self.beta < 0.0 {
            return Err(OptimizeError::InvalidConfig(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Country {
    pub position: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Empire {
    /// Index of the imperialist country.
    pub imperialist: usize,
    /// Indices of the colony countries.
    pub colonies: Vec<usize>,
    /// Imperialist cost plus `xi` times the mean colony cost.
    pub total_power: f64,
}

/// Full optimizer state; countries keep their index (and RNG stream) for
/// their whole life, so parallel evaluation order cannot change results.
pub struct IcaState {
    pub countries: Vec<Country>,
    pub empires: Vec<Empire>,
    pub iteration: usize,
    rng_streams: Vec<ChaCha8Rng>,
    state_rng: ChaCha8Rng,
}

impl IcaState {
    /// Partition check: every country is an imperialist or a colony of
    /// exactly one empire.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![0usize; self.countries.len()];
        for e in &self.empires {
            seen[e.imperialist] += 1;
            for c in &e.colonies {
                seen[*c] += 1;
            }
        }
        seen.iter().all(|s| *s == 1)
    }

    pub fn best(&self) -> &Country {
        self.countries
            .iter()
            .min_by(|a, b| a.cost.total_cmp(&b.cost))
            .expect("population is non-empty")
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn empire_power(countries: &[Country], imperialist: usize, colonies: &[usize], xi: f64) -> f64 {
    let imp_cost = countries[imperialist].cost;
    if colonies.is_empty() {
        return imp_cost;
    }
    let mean: f64 = colonies.iter().map(|c| countries[*c].cost).sum::<f64>() / colonies.len() as f64;
    imp_cost + xi * mean
}

fn refresh_powers(state: &mut IcaState, xi: f64) {
    for e in state.empires.iter_mut() {
        e.total_power = empire_power(&state.countries, e.imperialist, &e.colonies, xi);
    }
}

/// Build the initial state: uniform random countries, the `n_empires` best
/// as imperialists, and colonies allotted proportionally to normalized
/// imperialist power (rounded; remainders go to the strongest).
pub fn ica_init(obj: &Objective, cfg: &IcaConfig) -> Result<IcaState, OptimizeError> {
    cfg.validate()?;
    let dim = obj.dim();
    // stream 0 is reserved for state-level draws (competition roulette)
    let state_rng = stream(cfg.seed, 0);
    let mut rng_streams: Vec<ChaCha8Rng> =
        (0..cfg.population).map(|i| stream(cfg.seed, i as u64 + 1)).collect();

    let mut countries: Vec<Country> = rng_streams
        .iter_mut()
        .map(|rng| {
            let position: Vec<f64> = obj
                .bounds()
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            Country { position, cost: f64::NAN }
        })
        .collect();
    debug_assert_eq!(countries[0].position.len(), dim);

    let costs: Vec<f64> = countries
        .par_iter()
        .map(|c| obj.eval(&c.position))
        .collect();
    for (c, cost) in countries.iter_mut().zip(costs) {
        c.cost = cost;
    }

    // rank countries by cost (stable on index for ties)
    let mut order: Vec<usize> = (0..cfg.population).collect();
    order.sort_by(|a, b| countries[*a].cost.total_cmp(&countries[*b].cost).then(a.cmp(b)));
    let imperialists = &order[..cfg.n_empires];
    let rest = &order[cfg.n_empires..];

    // normalized power: distance below the worst imperialist cost
    let max_cost = countries[imperialists[cfg.n_empires - 1]].cost;
    let powers: Vec<f64> = imperialists
        .iter()
        .map(|i| max_cost - countries[*i].cost)
        .collect();
    let total_power: f64 = powers.iter().sum();
    let n_colonies = rest.len();
    let mut quotas: Vec<usize> = if total_power > 0.0 {
        powers
            .iter()
            .map(|p| ((p / total_power) * n_colonies as f64).round() as usize)
            .collect()
    } else {
        // equal costs: split as evenly as rounding allows
        vec![n_colonies / cfg.n_empires; cfg.n_empires]
    };
    // fix rounding drift: strongest empire absorbs shortfall, weakest
    // non-empty quotas shed the excess
    let mut assigned: usize = quotas.iter().sum();
    while assigned < n_colonies {
        quotas[0] += 1;
        assigned += 1;
    }
    let mut victim = cfg.n_empires - 1;
    while assigned > n_colonies {
        if quotas[victim] > 0 {
            quotas[victim] -= 1;
            assigned -= 1;
        } else {
            victim = victim.checked_sub(1).unwrap_or(0);
            if victim == 0 && quotas[0] == 0 {
                break;
            }
        }
    }

    // colonies handed out in cost order, strongest empire first
    let mut empires = Vec::with_capacity(cfg.n_empires);
    let mut cursor = 0;
    for (e, imp) in imperialists.iter().enumerate() {
        let take = quotas[e].min(n_colonies - cursor);
        let colonies: Vec<usize> = rest[cursor..cursor + take].to_vec();
        cursor += take;
        let total_power = empire_power(&countries, *imp, &colonies, cfg.xi);
        empires.push(Empire { imperialist: *imp, colonies, total_power });
    }
    // any stragglers (all-zero quotas) go to the strongest empire
    for c in &rest[cursor..] {
        empires[0].colonies.push(*c);
    }
    let mut state = IcaState { countries, empires, iteration: 0, rng_streams, state_rng };
    refresh_powers(&mut state, cfg.xi);
    debug_assert!(state.is_partition());
    Ok(state)
}

/// Advance the state by one iteration: assimilation, revolution,
/// re-evaluation, imperialist swap, imperialist competition, and empire
/// elimination.
pub fn ica_step(state: &mut IcaState, obj: &Objective, cfg: &IcaConfig) {
    let dim = obj.dim();

    // (a) assimilation + (b) revolution, per colony, using its own stream
    for e in 0..state.empires.len() {
        let imp_pos = state.countries[state.empires[e].imperialist].position.clone();
        for &c in &state.empires[e].colonies {
            let rng = &mut state.rng_streams[c];
            let pos = &mut state.countries[c].position;
            for j in 0..dim {
                let u: f64 = rng.gen();
                pos[j] += cfg.beta * u * (imp_pos[j] - pos[j]);
            }
            if rng.gen::<f64>() < cfg.revolution_rate {
                let n_redraw = ((dim as f64 * REVOLUTION_FRACTION).round() as usize).max(1);
                for _ in 0..n_redraw {
                    let j = rng.gen_range(0..dim);
                    let (lo, hi) = obj.bounds()[j];
                    pos[j] = rng.gen_range(lo..hi);
                }
            }
            obj.clip(pos);
        }
    }

    // (c) re-evaluate moved colonies in parallel, merged by index
    let colony_ids: Vec<usize> = state.empires.iter().flat_map(|e| e.colonies.clone()).collect();
    let new_costs: Vec<(usize, f64)> = colony_ids
        .par_iter()
        .map(|&c| (c, obj.eval(&state.countries[c].position)))
        .collect();
    for (c, cost) in new_costs {
        state.countries[c].cost = cost;
    }

    // (d) a colony that beats its imperialist takes over the empire
    for e in state.empires.iter_mut() {
        let Some(&best) = e
            .colonies
            .iter()
            .min_by(|a, b| {
                state.countries[**a]
                    .cost
                    .total_cmp(&state.countries[**b].cost)
                    .then(a.cmp(b))
            })
        else {
            continue;
        };
        if state.countries[best].cost < state.countries[e.imperialist].cost {
            let old_imp = e.imperialist;
            e.imperialist = best;
            for c in e.colonies.iter_mut() {
                if *c == best {
                    *c = old_imp;
                }
            }
        }
    }

    // (e) imperialist competition: the weakest empire's weakest colony is
    // claimed by a roulette winner weighted by power advantage
    refresh_powers(state, cfg.xi);
    if state.empires.len() > 1 {
        let weakest = state
            .empires
            .iter()
            .enumerate()
            .max_by(|(ai, a), (bi, b)| a.total_power.total_cmp(&b.total_power).then(ai.cmp(bi)))
            .map(|(i, _)| i)
            .expect("at least two empires");
        let max_power = state.empires[weakest].total_power;
        let weights: Vec<f64> = state
            .empires
            .iter()
            .enumerate()
            .map(|(i, e)| if i == weakest { 0.0 } else { max_power - e.total_power })
            .collect();
        let total_weight: f64 = weights.iter().sum();
        let winner = if total_weight > 0.0 {
            let mut target = state.state_rng.gen::<f64>() * total_weight;
            let mut pick = 0;
            for (i, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                target -= w;
                pick = i;
                if target <= 0.0 {
                    break;
                }
            }
            pick
        } else {
            // all powers equal: hand it to the strongest by index order
            state
                .empires
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != weakest)
                .min_by(|(ai, a), (bi, b)| a.total_power.total_cmp(&b.total_power).then(ai.cmp(bi)))
                .map(|(i, _)| i)
                .expect("at least two empires")
        };

        if let Some(pos) = {
            let weakest_empire = &state.empires[weakest];
            weakest_empire
                .colonies
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| {
                    state.countries[**a]
                        .cost
                        .total_cmp(&state.countries[**b].cost)
                        .then(b.cmp(a)) // tie: lowest country index
                })
                .map(|(pos, _)| pos)
        } {
            let colony = state.empires[weakest].colonies.remove(pos);
            state.empires[winner].colonies.push(colony);
        }

        // (f) colony-less empires dissolve; their imperialists join the
        // winner (which itself never dissolves)
        let winner_imp = state.empires[winner].imperialist;
        let mut freed = Vec::new();
        state.empires.retain(|e| {
            if e.imperialist != winner_imp && e.colonies.is_empty() {
                freed.push(e.imperialist);
                false
            } else {
                true
            }
        });
        if !freed.is_empty() {
            let winner_empire = state
                .empires
                .iter_mut()
                .find(|e| e.imperialist == winner_imp)
                .expect("winner survives elimination");
            winner_empire.colonies.extend(freed);
        }
        refresh_powers(state, cfg.xi);
    }

    state.iteration += 1;
    debug_assert!(state.is_partition());
}

/// Run the full algorithm and track the global best.
pub fn ica_run(obj: &Objective, cfg: &IcaConfig) -> Result<RunResult, OptimizeError> {
    let mut state = ica_init(obj, cfg)?;
    let mut best = state.best().clone();
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    history.push(best.cost);
    for _ in 0..cfg.iterations {
        ica_step(&mut state, obj, cfg);
        let candidate = state.best();
        if candidate.cost < best.cost {
            best = candidate.clone();
        }
        history.push(best.cost);
    }
    Ok(RunResult { best_position: best.position, best_cost: best.cost, history })
}
