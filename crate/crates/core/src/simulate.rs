//! Thinning simulation of the finite-past exponential Hawkes-P process.
//!
//! Between events the intensity only decays, so the intensity just after the
//! latest event or rejected candidate bounds it until the next event. Each
//! candidate costs `O(P)`: the excitation is carried as one running sum per
//! kernel term, `S_m(s) = α_m Σ_{t_i ≤ s} e^{-β_m (s - t_i)}`.
//!
//! Every call owns its generator. The generator is ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`, exponential variates come from
//! `rand_distr::Exp1`, and uniforms from the standard `f64` distribution;
//! [`GENERATOR_ID`] records this for experiment provenance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{HawkesError, Result};
use crate::model::{EventSequence, HawkesModel};

/// Identifies the random stream layout written into manifests and reports.
pub const GENERATOR_ID: &str = "chacha8-seed_from_u64/rand_distr-exp1/splitmix64-replication-seeds";

/// Default cap on accepted events per path.
pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of replication `index` under `master`: the `(index + 1)`-th output
/// of a SplitMix64 stream started at `master`. Replication seeds therefore
/// do not depend on execution order.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut z = master.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runaway guards for a single path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationLimits {
    pub max_events: usize,
    /// Only consulted by [`simulate_count`].
    pub max_time: f64,
}

impl Default for SimulationLimits {
    fn default() -> Self {
        Self {
            max_events: DEFAULT_MAX_EVENTS,
            max_time: 1e12,
        }
    }
}

/// Simulates on `(0, T)` from an empty history. A candidate at or beyond
/// `T` ends the path, so no event lands exactly on the horizon.
pub fn simulate_horizon(model: &HawkesModel, horizon: f64, seed: u64) -> Result<EventSequence> {
    simulate_horizon_with(model, horizon, seed, SimulationLimits::default())
}

pub fn simulate_horizon_with(
    model: &HawkesModel,
    horizon: f64,
    seed: u64,
    limits: SimulationLimits,
) -> Result<EventSequence> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(HawkesError::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    model.require_stationary()?;
    let mut thinning = Thinning::new(model, seed);
    let mut times = Vec::new();
    while let Some(t) = thinning.next_event(horizon) {
        times.push(t);
        if times.len() > limits.max_events {
            return Err(HawkesError::Runaway(format!(
                "more than {} events before t = {t} (horizon {horizon})",
                limits.max_events
            )));
        }
    }
    EventSequence::new(times, horizon)
}

/// Simulates until exactly `n_target` events; the horizon is the last event time.
pub fn simulate_count(model: &HawkesModel, n_target: usize, seed: u64) -> Result<EventSequence> {
    simulate_count_with(model, n_target, seed, SimulationLimits::default())
}

pub fn simulate_count_with(
    model: &HawkesModel,
    n_target: usize,
    seed: u64,
    limits: SimulationLimits,
) -> Result<EventSequence> {
    if n_target == 0 {
        return Err(HawkesError::Domain("target event count must be >= 1".into()));
    }
    model.require_stationary()?;
    let mut thinning = Thinning::new(model, seed);
    let mut times = Vec::with_capacity(n_target);
    while times.len() < n_target {
        match thinning.next_event(limits.max_time) {
            Some(t) => times.push(t),
            None => {
                return Err(HawkesError::Runaway(format!(
                    "only {} of {n_target} events before simulated time {}",
                    times.len(),
                    limits.max_time
                )))
            }
        }
    }
    EventSequence::ending_at_last(times)
}

/// Ogata's modified thinning with per-term excitation state.
struct Thinning<'a> {
    model: &'a HawkesModel,
    rng: ChaCha8Rng,
    now: f64,
    last_event: f64,
    excitation: Vec<f64>,
}

impl<'a> Thinning<'a> {
    fn new(model: &'a HawkesModel, seed: u64) -> Self {
        Self {
            model,
            rng: rng_from_seed(seed),
            now: 0.0,
            last_event: f64::NEG_INFINITY,
            excitation: vec![0.0; model.order()],
        }
    }

    fn next_event(&mut self, stop: f64) -> Option<f64> {
        let mu = self.model.mu();
        loop {
            let bound = mu + self.excitation.iter().sum::<f64>();
            let wait: f64 = self.rng.sample::<f64, _>(Exp1) / bound;
            let candidate = self.now + wait;
            if candidate >= stop {
                self.now = stop;
                return None;
            }
            for (s, term) in self.excitation.iter_mut().zip(self.model.terms()) {
                *s *= (-term.beta * wait).exp();
            }
            self.now = candidate;
            let intensity = mu + self.excitation.iter().sum::<f64>();
            assert!(
                intensity <= bound * (1.0 + 1e-12),
                "thinning bound violated: {intensity} > {bound}"
            );
            let u: f64 = self.rng.random();
            if u * bound <= intensity && candidate > self.last_event {
                for (s, term) in self.excitation.iter_mut().zip(self.model.terms()) {
                    *s += term.alpha;
                }
                self.last_event = candidate;
                return Some(candidate);
            }
        }
    }
}
