//! Parameter and event types for the exponential Hawkes-P process.
//!
//! The conditional intensity of a Hawkes-P process started from an empty
//! history at time zero is
//!
//! ```text
//! λ(t) = μ + Σ_m α_m Σ_{t_i < t} exp(-β_m (t - t_i))
//! ```
//!
//! with `m = 1..P`. The parameter vector is `θ = (μ, α_1..α_P, β_1..β_P)`,
//! and kernel terms are kept sorted by strictly increasing `β`.

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};

/// One exponential term `α e^{-β t}` of the excitation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub alpha: f64,
    pub beta: f64,
}

impl KernelTerm {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Integral of the term over `[0, ∞)`.
    pub fn mass(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Baseline rate and ordered kernel terms of an exponential Hawkes-P model.
///
/// Instances are immutable. Construction validates positivity and sorts the
/// terms by decay rate; exact ties in `β` are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct HawkesModel {
    mu: f64,
    terms: Vec<KernelTerm>,
}

/// Wire format: `{"mu": .., "alpha": [..], "beta": [..]}`.
#[derive(Serialize, Deserialize)]
struct ModelJson {
    mu: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl TryFrom<ModelJson> for HawkesModel {
    type Error = HawkesError;

    // Fitted models may carry α = 0 terms, so the wire format accepts them.
    fn try_from(value: ModelJson) -> Result<Self> {
        HawkesModel::degenerate(value.mu, &value.alpha, &value.beta)
    }
}

impl From<HawkesModel> for ModelJson {
    fn from(model: HawkesModel) -> Self {
        ModelJson {
            mu: model.mu,
            alpha: model.alphas(),
            beta: model.betas(),
        }
    }
}

impl HawkesModel {
    /// Strict constructor: `μ > 0`, every `α > 0`, every `β > 0`, no ties in `β`.
    pub fn new(mu: f64, alphas: &[f64], betas: &[f64]) -> Result<Self> {
        Self::build(mu, alphas, betas, false)
    }

    /// Like [`HawkesModel::new`] but additionally requires branching ratio `< 1`.
    pub fn stationary(mu: f64, alphas: &[f64], betas: &[f64]) -> Result<Self> {
        let model = Self::new(mu, alphas, betas)?;
        model.require_stationary()?;
        Ok(model)
    }

    /// Permits `α = 0` terms (the Poisson limit). Everything else is checked
    /// as in [`HawkesModel::new`].
    pub fn degenerate(mu: f64, alphas: &[f64], betas: &[f64]) -> Result<Self> {
        Self::build(mu, alphas, betas, true)
    }

    /// Homogeneous Poisson process of rate `mu`, written as a single zero term.
    pub fn poisson(mu: f64) -> Result<Self> {
        Self::degenerate(mu, &[0.0], &[1.0])
    }

    fn build(mu: f64, alphas: &[f64], betas: &[f64], allow_zero_alpha: bool) -> Result<Self> {
        if alphas.len() != betas.len() {
            return Err(HawkesError::InvalidParameter(format!(
                "{} alphas but {} betas",
                alphas.len(),
                betas.len()
            )));
        }
        if alphas.is_empty() {
            return Err(HawkesError::InvalidParameter(
                "model needs at least one kernel term".into(),
            ));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(HawkesError::InvalidParameter(format!("mu must be > 0, got {mu}")));
        }
        let mut terms = Vec::with_capacity(alphas.len());
        for (&alpha, &beta) in alphas.iter().zip(betas) {
            let alpha_ok = alpha.is_finite() && (alpha > 0.0 || (allow_zero_alpha && alpha == 0.0));
            if !alpha_ok {
                return Err(HawkesError::InvalidParameter(format!(
                    "alpha must be > 0, got {alpha}"
                )));
            }
            if !(beta.is_finite() && beta > 0.0) {
                return Err(HawkesError::InvalidParameter(format!(
                    "beta must be > 0, got {beta}"
                )));
            }
            terms.push(KernelTerm::new(alpha, beta));
        }
        terms.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        if let Some(w) = terms.windows(2).find(|w| w[0].beta == w[1].beta) {
            return Err(HawkesError::InvalidParameter(format!(
                "tied decay rates beta = {}",
                w[0].beta
            )));
        }
        Ok(Self { mu, terms })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    /// Number of exponential terms `P`.
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    /// Number of free parameters, `1 + 2P`.
    pub fn num_params(&self) -> usize {
        1 + 2 * self.order()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.alpha).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.beta).collect()
    }

    /// `θ = (μ, α_1..α_P, β_1..β_P)`.
    pub fn params(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.num_params());
        theta.push(self.mu);
        theta.extend(self.terms.iter().map(|t| t.alpha));
        theta.extend(self.terms.iter().map(|t| t.beta));
        theta
    }

    /// Inverse of [`HawkesModel::params`], with the lenient (α ≥ 0) rules.
    pub fn from_params(theta: &[f64]) -> Result<Self> {
        if theta.len() < 3 || theta.len() % 2 == 0 {
            return Err(HawkesError::InvalidParameter(format!(
                "parameter vector of length {} is not 1 + 2P",
                theta.len()
            )));
        }
        let p = (theta.len() - 1) / 2;
        Self::degenerate(theta[0], &theta[1..=p], &theta[p + 1..])
    }

    /// Names matching [`HawkesModel::params`]: `mu, alpha1.., beta1..`.
    pub fn param_names(order: usize) -> Vec<String> {
        let mut names = vec!["mu".to_string()];
        names.extend((1..=order).map(|m| format!("alpha{m}")));
        names.extend((1..=order).map(|m| format!("beta{m}")));
        names
    }

    /// `n = Σ α_m / β_m`, the integral of the kernel.
    pub fn branching_ratio(&self) -> f64 {
        self.terms.iter().map(KernelTerm::mass).sum()
    }

    pub fn is_stationary(&self) -> bool {
        self.branching_ratio() < 1.0
    }

    pub(crate) fn require_stationary(&self) -> Result<()> {
        let n = self.branching_ratio();
        if n < 1.0 {
            Ok(())
        } else {
            Err(HawkesError::NonStationary(n))
        }
    }

    /// Kernel `g(τ) = Σ α_m e^{-β_m τ}`.
    pub fn kernel(&self, tau: f64) -> f64 {
        self.terms.iter().map(|k| k.alpha * (-k.beta * tau).exp()).sum()
    }

    /// Conditional intensity `λ(t)`. Events at or after `t` do not contribute.
    pub fn intensity(&self, events: &EventSequence, t: f64) -> f64 {
        let before = events.count_before(t);
        let excitation: f64 = events.times()[..before]
            .iter()
            .map(|&ti| self.kernel(t - ti))
            .sum();
        self.mu + excitation
    }

    /// Compensator `Λ(t) = ∫_0^t λ(s) ds`.
    pub fn compensator(&self, events: &EventSequence, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let before = events.count_before(t);
        let mut total = self.mu * t;
        for k in &self.terms {
            let decayed: f64 = events.times()[..before]
                .iter()
                .map(|&ti| -(-k.beta * (t - ti)).exp_m1())
                .sum();
            total += k.mass() * decayed;
        }
        total
    }
}

/// Strictly increasing event times observed on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    times: Vec<f64>,
    horizon: f64,
}

impl EventSequence {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(HawkesError::InvalidEvents(format!(
                "horizon must be finite and >= 0, got {horizon}"
            )));
        }
        if let Some(&first) = times.first() {
            if !(first.is_finite() && first >= 0.0) {
                return Err(HawkesError::InvalidEvents(format!(
                    "first event time {first} is negative"
                )));
            }
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(HawkesError::InvalidEvents(format!(
                "times not strictly increasing at index {}: {} then {}",
                i + 1,
                times[i],
                times[i + 1]
            )));
        }
        if let Some(&last) = times.last() {
            if !last.is_finite() || last > horizon {
                return Err(HawkesError::InvalidEvents(format!(
                    "last event {last} exceeds horizon {horizon}"
                )));
            }
        }
        Ok(Self { times, horizon })
    }

    /// Horizon set to the last event time (zero if empty).
    pub fn ending_at_last(times: Vec<f64>) -> Result<Self> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(times, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of events strictly before `t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.times.partition_point(|&ti| ti < t)
    }

    /// Counting function `N(t)`: events in `[0, t]`.
    pub fn count_at(&self, t: f64) -> usize {
        self.times.partition_point(|&ti| ti <= t)
    }

    /// Same events with every time and the horizon shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        Self::new(
            self.times.iter().map(|t| t + offset).collect(),
            self.horizon + offset,
        )
    }

    /// Copy with a different observation horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.times.clone(), horizon)
    }

    pub fn into_times(self) -> Vec<f64> {
        self.times
    }
}
