//! Goodness-of-fit checks based on the random time-change theorem.
//!
//! Under the true model the compensator increments between consecutive
//! events, `Λ(t_{k}) - Λ(t_{k-1})`, are i.i.d. unit exponentials.

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::{EventSequence, HawkesModel};

/// Compensator increments `Λ(t_k) - Λ(t_{k-1})` with `t_0 = 0`, in `O(nP)`.
pub fn time_change_residuals(model: &HawkesModel, events: &EventSequence) -> Vec<f64> {
    let p = model.order();
    let mut decayed = vec![0.0; p]; // Σ_{i<k} e^{-β_m (t_k - t_i)}
    let mut previous = 0.0;
    let mut prev_t = 0.0;
    let mut out = Vec::with_capacity(events.len());
    for (k, &t) in events.times().iter().enumerate() {
        let mut lambda_t = model.mu() * t;
        for (m, term) in model.terms().iter().enumerate() {
            if k > 0 {
                decayed[m] = (1.0 + decayed[m]) * (-term.beta * (t - prev_t)).exp();
            }
            lambda_t += term.mass() * (k as f64 - decayed[m]);
        }
        out.push(lambda_t - previous);
        previous = lambda_t;
        prev_t = t;
    }
    out
}

/// One-sample Kolmogorov–Smirnov result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// KS test of `samples` against Exp(`rate`).
///
/// The p-value uses the asymptotic Kolmogorov distribution with Stephens'
/// small-sample correction `(√n + 0.12 + 0.11/√n) D`.
pub fn ks_exponential(samples: &[f64], rate: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(HawkesError::Domain("KS test needs at least one sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = -(-rate * x.max(0.0)).exp_m1();
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    let root = n.sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival((root + 0.12 + 0.11 / root) * d),
        n: sorted.len(),
    })
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
