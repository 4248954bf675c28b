//! Exact log-likelihood and constrained maximum-likelihood fitting.
//!
//! For data `t_1 < … < t_n` observed on `[0, T]`
//!
//! ```text
//! log L = -μT - Σ_m (α_m/β_m) Σ_i (1 - e^{-β_m (T - t_i)})
//!         + Σ_k log(μ + Σ_m α_m A_m(k)),
//! A_m(1) = 0,  A_m(k) = (1 + A_m(k-1)) e^{-β_m (t_k - t_{k-1})}.
//! ```
//!
//! The fit maximises this over `μ > 0`, `α_m > 0`, `0 < β_1 < … < β_P` and
//! `Σ α_m/β_m ≤ cap` by optimising an unconstrained reparametrisation:
//!
//! * `μ = e^{x_0}`
//! * total branching `n = cap · σ(y)` and allocation `w = softmax(z_1..z_{P-1}, 0)`,
//!   with `α_m = n w_m β_m`
//! * `β_1 = e^{u_1}`, `β_{m+1} = β_m + e^{u_{m+1}}`
//!
//! so `x = (log μ, y, z_1..z_{P-1}, u_1..u_P)` has the same length `1 + 2P`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::{EventSequence, HawkesModel};
use crate::optim::{self, StopRule, Termination};
use crate::simulate::{replication_seed, rng_from_seed};

/// Direct `O(n²)` evaluation, kept as the reference for the recursion.
pub fn log_likelihood_direct(model: &HawkesModel, events: &EventSequence) -> f64 {
    let horizon = events.horizon();
    let times = events.times();
    let mut ll = -model.mu() * horizon;
    for term in model.terms() {
        let boundary: f64 = times
            .iter()
            .map(|&ti| -(-term.beta * (horizon - ti)).exp_m1())
            .sum();
        ll -= term.mass() * boundary;
    }
    for (k, &tk) in times.iter().enumerate() {
        let mut lambda = model.mu();
        for term in model.terms() {
            lambda += term.alpha
                * times[..k]
                    .iter()
                    .map(|&ti| (-term.beta * (tk - ti)).exp())
                    .sum::<f64>();
        }
        assert!(lambda > 0.0, "non-positive intensity {lambda} at t = {tk}");
        ll += lambda.ln();
    }
    ll
}

/// Recursive `O(nP)` log-likelihood.
pub fn log_likelihood(model: &HawkesModel, events: &EventSequence) -> f64 {
    let theta = model.params();
    evaluate(&theta, events, false).0
}

/// Gradient of the log-likelihood with respect to `(μ, α_1..α_P, β_1..β_P)`.
pub fn log_likelihood_gradient(model: &HawkesModel, events: &EventSequence) -> Vec<f64> {
    let theta = model.params();
    evaluate(&theta, events, true).1
}

/// Log-likelihood and gradient in one pass.
pub fn log_likelihood_and_gradient(model: &HawkesModel, events: &EventSequence) -> (f64, Vec<f64>) {
    evaluate(&model.params(), events, true)
}

/// Core recursion on a raw parameter vector `θ = (μ, α.., β..)`.
///
/// Alongside `A_m(k)` it carries `D_m(k) = Σ_{i<k} (t_k - t_i) e^{-β_m (t_k - t_i)}`,
/// which obeys `D_m(k) = (D_m(k-1) + δ (1 + A_m(k-1))) e^{-β_m δ}` and gives
/// `∂A_m(k)/∂β_m = -D_m(k)`.
fn evaluate(theta: &[f64], events: &EventSequence, with_gradient: bool) -> (f64, Vec<f64>) {
    let p = (theta.len() - 1) / 2;
    let mu = theta[0];
    let alphas = &theta[1..=p];
    let betas = &theta[p + 1..];
    let horizon = events.horizon();
    let times = events.times();

    let mut grad = vec![0.0; theta.len()];
    let mut ll = -mu * horizon;
    grad[0] = -horizon;
    for m in 0..p {
        let (a, b) = (alphas[m], betas[m]);
        let mut boundary = 0.0;
        let mut boundary_slope = 0.0;
        for &ti in times {
            let age = horizon - ti;
            let decay = (-b * age).exp();
            boundary += -(-b * age).exp_m1();
            if with_gradient {
                boundary_slope += age * decay;
            }
        }
        ll -= a / b * boundary;
        if with_gradient {
            grad[1 + m] -= boundary / b;
            grad[1 + p + m] += a / (b * b) * boundary - a / b * boundary_slope;
        }
    }

    let mut decayed = vec![0.0; p];
    let mut lagged = vec![0.0; p];
    let mut prev = 0.0;
    for (k, &tk) in times.iter().enumerate() {
        if k > 0 {
            let delta = tk - prev;
            for m in 0..p {
                let e = (-betas[m] * delta).exp();
                if with_gradient {
                    lagged[m] = (lagged[m] + delta * (1.0 + decayed[m])) * e;
                }
                decayed[m] = (1.0 + decayed[m]) * e;
            }
        }
        prev = tk;
        let lambda = mu + alphas.iter().zip(&decayed).map(|(a, d)| a * d).sum::<f64>();
        ll += lambda.ln();
        if with_gradient {
            let inv = 1.0 / lambda;
            grad[0] += inv;
            for m in 0..p {
                grad[1 + m] += decayed[m] * inv;
                grad[1 + p + m] -= alphas[m] * lagged[m] * inv;
            }
        }
    }
    (ll, grad)
}

/// How restart points are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Start 0 from moment-style heuristics, the rest log-uniform random.
    MomentThenRandom,
    /// Every start random.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Relative change in log-likelihood at which a local search stops.
    pub tolerance: f64,
    /// Gradient-norm stopping threshold (per-event scaled objective).
    pub gradient_tolerance: f64,
    /// Upper bound on the fitted branching ratio; must lie in `(0, 1)`.
    pub branching_cap: f64,
    pub init_strategy: InitStrategy,
    /// Seed for the random restarts.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 500,
            tolerance: 1e-8,
            gradient_tolerance: 1e-6,
            branching_cap: 1.0 - 1e-6,
            init_strategy: InitStrategy::MomentThenRandom,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(HawkesError::Config("restarts must be >= 1".into()));
        }
        if !(self.branching_cap > 0.0 && self.branching_cap < 1.0) {
            return Err(HawkesError::Config(format!(
                "branching_cap must lie in (0, 1), got {}",
                self.branching_cap
            )));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(HawkesError::Config(
                "tolerance must be > 0 and max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }

    fn stop_rule(&self) -> StopRule {
        StopRule {
            max_iterations: self.max_iterations,
            f_tolerance: self.tolerance,
            g_tolerance: self.gradient_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HawkesModel,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restart_index: usize,
}

/// Maps between `x` (unconstrained) and `θ = (μ, α.., β..)`.
#[derive(Debug, Clone, Copy)]
struct Reparam {
    order: usize,
    cap: f64,
}

impl Reparam {
    fn theta(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p = self.order;
        let mu = x[0].exp();
        let total = self.cap * sigmoid(x[1]);
        let weights = self.weights(&x[2..1 + p]);
        let mut theta = vec![0.0; 1 + 2 * p];
        theta[0] = mu;
        let mut beta = 0.0;
        for m in 0..p {
            let next = beta + x[1 + p + m].exp();
            if !(next > beta) || !next.is_finite() {
                return None;
            }
            beta = next;
            theta[1 + p + m] = beta;
            theta[1 + m] = total * weights[m] * beta;
        }
        (mu > 0.0 && mu.is_finite() && theta.iter().all(|v| v.is_finite())).then_some(theta)
    }

    fn weights(&self, logits: &[f64]) -> Vec<f64> {
        let top = logits.iter().fold(0.0f64, |m, &z| m.max(z));
        let mut w: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        w.push((-top).exp());
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }

    fn from_model(&self, model: &HawkesModel) -> Vec<f64> {
        let p = self.order;
        let mut x = vec![0.0; 1 + 2 * p];
        x[0] = model.mu().ln();
        let masses: Vec<f64> = model.terms().iter().map(|t| t.mass().max(1e-300)).collect();
        let total: f64 = masses.iter().sum();
        let ratio = (total / self.cap).clamp(1e-12, 1.0 - 1e-12);
        x[1] = (ratio / (1.0 - ratio)).ln();
        let last = masses[p - 1].ln();
        for j in 0..p - 1 {
            x[2 + j] = masses[j].ln() - last;
        }
        let mut prev = 0.0;
        for (m, term) in model.terms().iter().enumerate() {
            x[1 + p + m] = (term.beta - prev).ln();
            prev = term.beta;
        }
        x
    }

    /// Chain rule from `∂/∂θ` to `∂/∂x`.
    fn pull_back(&self, x: &[f64], theta: &[f64], grad_theta: &[f64]) -> Vec<f64> {
        let p = self.order;
        let alphas = &theta[1..=p];
        let betas = &theta[p + 1..];
        let g_alpha = &grad_theta[1..=p];
        let g_beta = &grad_theta[p + 1..];
        let weights = self.weights(&x[2..1 + p]);

        let mut gx = vec![0.0; x.len()];
        gx[0] = theta[0] * grad_theta[0];
        let weighted: f64 = g_alpha.iter().zip(alphas).map(|(g, a)| g * a).sum();
        gx[1] = weighted * (1.0 - sigmoid(x[1]));
        for j in 0..p - 1 {
            gx[2 + j] = g_alpha[j] * alphas[j] - weights[j] * weighted;
        }
        // α_m moves with β_m at fixed mass
        let effective: Vec<f64> = (0..p)
            .map(|m| g_beta[m] + g_alpha[m] * alphas[m] / betas[m])
            .collect();
        let mut tail = 0.0;
        for j in (0..p).rev() {
            tail += effective[j];
            gx[1 + p + j] = x[1 + p + j].exp() * tail;
        }
        gx
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Summary statistics of the data used to place starting points.
struct DataScales {
    rate: f64,
    slow_beta: f64,
    fast_beta: f64,
}

impl DataScales {
    fn new(events: &EventSequence) -> Self {
        let horizon = events.horizon().max(f64::MIN_POSITIVE);
        let rate = events.len() as f64 / horizon;
        let mut gaps: Vec<f64> = events
            .times()
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > 0.0)
            .collect();
        gaps.sort_by(f64::total_cmp);
        let quantile = |q: f64| -> f64 {
            if gaps.is_empty() {
                1.0 / rate
            } else {
                gaps[((gaps.len() - 1) as f64 * q).round() as usize]
            }
        };
        let slow_beta = 1.0 / horizon;
        let fast_beta = (10.0 / quantile(0.1)).max(100.0 * slow_beta);
        Self {
            rate,
            slow_beta,
            fast_beta,
        }
    }

    /// μ half the raw rate, branching 0.5 split equally, β geometric over
    /// the interarrival scale range (90th to 10th percentile gap).
    fn moment_start(&self, events: &EventSequence, order: usize) -> Vec<f64> {
        let mut gaps: Vec<f64> = events.times().windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(f64::total_cmp);
        let (lo, hi) = if gaps.len() >= 2 {
            let q = |f: f64| gaps[((gaps.len() - 1) as f64 * f).round() as usize].max(1e-12);
            (1.0 / q(0.9), 1.0 / q(0.1))
        } else {
            (self.rate, 10.0 * self.rate)
        };
        let hi = hi.max(lo * 1.5);
        let betas = geometric(lo, hi, order);
        let share = 0.5 / order as f64;
        let mut theta = vec![0.5 * self.rate];
        theta.extend(betas.iter().map(|b| share * b));
        theta.extend(betas);
        theta
    }

    fn random_start(&self, rng: &mut impl Rng, order: usize) -> Vec<f64> {
        let log_uniform = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| -> f64 {
            (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
        };
        let mu = log_uniform(rng, 0.05 * self.rate, self.rate);
        let branching = 0.05 + 0.9 * rng.random::<f64>();
        let mut betas: Vec<f64> = (0..order)
            .map(|_| log_uniform(rng, self.slow_beta, self.fast_beta))
            .collect();
        betas.sort_by(f64::total_cmp);
        for m in 1..order {
            if betas[m] <= betas[m - 1] {
                betas[m] = betas[m - 1] * 1.01;
            }
        }
        let raw: Vec<f64> = (0..order).map(|_| (rng.random::<f64>() * 4.0 - 2.0).exp()).collect();
        let total: f64 = raw.iter().sum();
        let mut theta = vec![mu];
        theta.extend(raw.iter().zip(&betas).map(|(w, b)| branching * w / total * b));
        theta.extend(betas);
        theta
    }
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![(lo * hi).sqrt()];
    }
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Starting models for `fit`, in restart-index order.
pub fn starting_models(events: &EventSequence, order: usize, options: &FitOptions) -> Vec<HawkesModel> {
    let scales = DataScales::new(events);
    let mut rng = rng_from_seed(replication_seed(options.seed, order as u64));
    (0..options.restarts)
        .map(|i| {
            let theta = if i == 0 && options.init_strategy == InitStrategy::MomentThenRandom {
                scales.moment_start(events, order)
            } else {
                scales.random_start(&mut rng, order)
            };
            let model = HawkesModel::from_params(&theta).expect("starting point is a valid model");
            shrink_to_cap(model, options.branching_cap)
        })
        .collect()
}

fn shrink_to_cap(model: HawkesModel, cap: f64) -> HawkesModel {
    let n = model.branching_ratio();
    if n < cap {
        return model;
    }
    let scale = 0.9 * cap / n;
    let alphas: Vec<f64> = model.alphas().iter().map(|a| a * scale).collect();
    HawkesModel::degenerate(model.mu(), &alphas, &model.betas()).expect("scaled model stays valid")
}

/// Order `P + 1` starts that embed an order-`P` estimate: one extra weak
/// term placed slower than, faster than, or between the existing decay rates.
///
/// Used to warm-start nested fits so that a larger model never ends at a
/// lower likelihood than the smaller one merely because of a poor start.
pub fn extension_starts(lower: &HawkesModel, cap: f64) -> Vec<HawkesModel> {
    let betas = lower.betas();
    let mut placements = vec![betas[0] / 10.0];
    placements.extend(betas.windows(2).map(|w| (w[0] * w[1]).sqrt()));
    placements.push(betas[betas.len() - 1] * 10.0);
    let weak = 0.01 * lower.branching_ratio().max(0.05);
    placements
        .into_iter()
        .filter_map(|beta_new| {
            let mut alphas = lower.alphas();
            let mut all_betas = betas.clone();
            alphas.push(weak * beta_new);
            all_betas.push(beta_new);
            HawkesModel::degenerate(lower.mu(), &alphas, &all_betas)
                .ok()
                .map(|m| shrink_to_cap(m, cap))
        })
        .collect()
}

/// Maximum-likelihood fit of an order-`order` model with multistart.
pub fn fit(events: &EventSequence, order: usize, options: &FitOptions) -> Result<FitResult> {
    check_fit_inputs(events, order, options)?;
    let starts = starting_models(events, order, options);
    fit_from_starts(events, &starts, options)
}

/// Like [`fit`], with `extra` starts appended after the generated ones.
pub fn fit_with_starts(
    events: &EventSequence,
    order: usize,
    extra: &[HawkesModel],
    options: &FitOptions,
) -> Result<FitResult> {
    check_fit_inputs(events, order, options)?;
    if extra.iter().any(|m| m.order() != order) {
        return Err(HawkesError::InvalidParameter(format!(
            "extra starts must all have order {order}"
        )));
    }
    let mut starts = starting_models(events, order, options);
    starts.extend_from_slice(extra);
    fit_from_starts(events, &starts, options)
}

/// Local fit from a single starting model, e.g. a previous estimate.
pub fn refine(events: &EventSequence, start: &HawkesModel, options: &FitOptions) -> Result<FitResult> {
    check_fit_inputs(events, start.order(), options)?;
    fit_from_starts(events, std::slice::from_ref(start), options)
}

fn check_fit_inputs(events: &EventSequence, order: usize, options: &FitOptions) -> Result<()> {
    options.validate()?;
    if order == 0 {
        return Err(HawkesError::Domain("order must be >= 1".into()));
    }
    let parameters = 1 + 2 * order;
    if events.len() < parameters {
        return Err(HawkesError::InsufficientData {
            events: events.len(),
            parameters,
        });
    }
    if !(events.horizon() > 0.0) {
        return Err(HawkesError::InvalidEvents("horizon must be > 0 for fitting".into()));
    }
    Ok(())
}

/// Runs one local search per start and keeps the best; ties go to the lowest index.
pub fn fit_from_starts(
    events: &EventSequence,
    starts: &[HawkesModel],
    options: &FitOptions,
) -> Result<FitResult> {
    let outcomes: Vec<Option<FitResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| local_fit(events, start, options).map(|mut r| {
            r.restart_index = i;
            r
        }))
        .collect();
    let mut best: Option<FitResult> = None;
    for outcome in outcomes.into_iter().flatten() {
        if best
            .as_ref()
            .is_none_or(|b| outcome.log_likelihood > b.log_likelihood)
        {
            best = Some(outcome);
        }
    }
    best.ok_or_else(|| HawkesError::Numeric("no restart produced a finite log-likelihood".into()))
}

fn local_fit(events: &EventSequence, start: &HawkesModel, options: &FitOptions) -> Option<FitResult> {
    let reparam = Reparam {
        order: start.order(),
        cap: options.branching_cap,
    };
    let scale = events.len().max(1) as f64;
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        match reparam.theta(x) {
            Some(theta) => {
                let (ll, g) = evaluate(&theta, events, true);
                let gx = reparam.pull_back(x, &theta, &g);
                (-ll / scale, gx.iter().map(|v| -v / scale).collect())
            }
            None => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    };
    let value_only = |x: &[f64]| -> f64 {
        reparam
            .theta(x)
            .map(|theta| -evaluate(&theta, events, false).0 / scale)
            .unwrap_or(f64::NAN)
    };

    let rule = options.stop_rule();
    let x0 = reparam.from_model(start);
    let mut best = optim::bfgs(objective, &x0, rule, 3.0);
    let mut iterations = best.iterations;
    if best.termination == Termination::LineSearchFailed {
        let simplex = optim::nelder_mead(value_only, &best.x, 0.5, rule);
        iterations += simplex.iterations;
        if simplex.f.is_finite() && simplex.f <= best.f {
            let polished = optim::bfgs(objective, &simplex.x, rule, 3.0);
            iterations += polished.iterations;
            best = if polished.f.is_finite() && polished.f <= simplex.f {
                polished
            } else {
                simplex
            };
        }
    }
    let theta = reparam.theta(&best.x)?;
    let model = HawkesModel::from_params(&theta).ok()?;
    let log_likelihood = log_likelihood(&model, events);
    log_likelihood.is_finite().then_some(FitResult {
        model,
        log_likelihood,
        converged: best.termination.converged(),
        iterations,
        restart_index: 0,
    })
}

/// `sqrt(mean((θ - θ̂)²))`.
pub fn rmse(true_value: f64, estimates: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(HawkesError::Domain("RMSE needs at least one estimate".into()));
    }
    let mse = estimates
        .iter()
        .map(|e| (true_value - e).powi(2))
        .sum::<f64>()
        / estimates.len() as f64;
    Ok(mse.sqrt())
}

/// RMSE divided by the true value.
pub fn relative_rmse(true_value: f64, estimates: &[f64]) -> Result<f64> {
    if true_value == 0.0 {
        return Err(HawkesError::Domain("relative RMSE undefined for a zero true value".into()));
    }
    Ok(rmse(true_value, estimates)? / true_value.abs())
}
