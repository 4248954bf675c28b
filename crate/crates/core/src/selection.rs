//! Information criteria and model-order selection.
//!
//! Every criterion has the form `IC = -2 log L + c(k, n)` with `k = 1 + 2P`
//! parameters and `n` the number of events in the sequence. The selected
//! order minimises the criterion; exact ties go to the smaller order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::inference::{extension_starts, fit, fit_with_starts, FitOptions, FitResult};
use crate::model::{EventSequence, HawkesModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcInput {
    pub log_likelihood: f64,
    /// Parameter count.
    pub k: usize,
    /// Sample size (event count).
    pub n: usize,
}

impl IcInput {
    pub fn new(log_likelihood: f64, k: usize, n: usize) -> Self {
        Self { log_likelihood, k, n }
    }

    fn deviance(&self) -> f64 {
        -2.0 * self.log_likelihood
    }
}

/// `-2 log L + 2k`.
pub fn aic(input: IcInput) -> f64 {
    input.deviance() + 2.0 * input.k as f64
}

/// Small-sample corrected AIC, `-2 log L + 2kn / (n - k - 1)`; needs `n > k + 1`.
pub fn aicc(input: IcInput) -> Result<f64> {
    if input.n <= input.k + 1 {
        return Err(HawkesError::Domain(format!(
            "AICc needs n > k + 1 (n = {}, k = {})",
            input.n, input.k
        )));
    }
    let (k, n) = (input.k as f64, input.n as f64);
    Ok(input.deviance() + 2.0 * k * n / (n - k - 1.0))
}

/// `-2 log L + k ln n`.
pub fn bic(input: IcInput) -> Result<f64> {
    if input.n == 0 {
        return Err(HawkesError::Domain("BIC needs n >= 1".into()));
    }
    Ok(input.deviance() + input.k as f64 * (input.n as f64).ln())
}

/// Hannan–Quinn, `-2 log L + 2k ln ln n`; needs `n >= 3`.
pub fn hq(input: IcInput) -> Result<f64> {
    if input.n <= 2 {
        return Err(HawkesError::Domain(format!("HQ needs n >= 3, got {}", input.n)));
    }
    Ok(input.deviance() + 2.0 * input.k as f64 * (input.n as f64).ln().ln())
}

/// When the combined AICc/AIC rule switches to AICc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AiccThreshold {
    /// AICc whenever `n` is below this fixed count.
    Fixed(usize),
    /// AICc whenever `n < factor · k_max`, `k_max` the largest candidate parameter count.
    PerParameter(usize),
}

impl Default for AiccThreshold {
    fn default() -> Self {
        AiccThreshold::Fixed(120)
    }
}

impl AiccThreshold {
    pub fn uses_aicc(&self, n: usize, k_max: usize) -> bool {
        match *self {
            AiccThreshold::Fixed(limit) => n < limit,
            AiccThreshold::PerParameter(factor) => n < factor * k_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Aic,
    Aicc,
    Bic,
    Hq,
    /// AICc for small samples, AIC otherwise.
    AiccAic,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Aic,
        Criterion::Aicc,
        Criterion::Bic,
        Criterion::Hq,
        Criterion::AiccAic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Aicc => "aicc",
            Criterion::Bic => "bic",
            Criterion::Hq => "hq",
            Criterion::AiccAic => "aicc_aic",
        }
    }

    /// Criterion value for one candidate; `k_max` only matters for the combined rule.
    pub fn evaluate(&self, input: IcInput, k_max: usize, threshold: AiccThreshold) -> Result<f64> {
        match self {
            Criterion::Aic => Ok(aic(input)),
            Criterion::Aicc => aicc(input),
            Criterion::Bic => bic(input),
            Criterion::Hq => hq(input),
            Criterion::AiccAic => {
                if threshold.uses_aicc(input.n, k_max) {
                    aicc(input)
                } else {
                    Ok(aic(input))
                }
            }
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = HawkesError;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| HawkesError::Config(format!("unknown criterion {s:?}")))
    }
}

/// Index of the smallest value; the earliest wins ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Multistart fit of `order` whose start set also embeds the order `order - 1`
/// estimate; the extra starts follow the regular ones so indices stay stable.
fn fit_nested(
    events: &EventSequence,
    order: usize,
    lower: &HawkesModel,
    options: &FitOptions,
) -> Result<FitResult> {
    let extra = extension_starts(lower, options.branching_cap);
    fit_with_starts(events, order, &extra, options)
}

/// Fits of every candidate order to one sequence, ready for any criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFits {
    pub sample_size: usize,
    /// Ascending candidate orders that could be fitted.
    pub orders: Vec<usize>,
    pub fits: Vec<FitResult>,
    /// Orders skipped for lack of data, with the reason.
    pub warnings: Vec<String>,
}

impl CandidateFits {
    /// Fits each order; orders without enough data are skipped with a warning.
    pub fn fit(events: &EventSequence, orders: &[usize], options: &FitOptions) -> Result<Self> {
        let mut sorted = orders.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return Err(HawkesError::Config("no candidate orders".into()));
        }
        let mut kept = Vec::new();
        let mut fits: Vec<FitResult> = Vec::new();
        let mut warnings = Vec::new();
        for order in sorted {
            let outcome = match (kept.last(), fits.last()) {
                (Some(&lower), Some(prev)) if lower + 1 == order => {
                    fit_nested(events, order, &prev.model, options)
                }
                _ => fit(events, order, options),
            };
            match outcome {
                Ok(res) => {
                    kept.push(order);
                    fits.push(res);
                }
                Err(e @ HawkesError::InsufficientData { .. }) => {
                    warnings.push(format!("order {order} skipped: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        if kept.is_empty() {
            return Err(HawkesError::InsufficientData {
                events: events.len(),
                parameters: 1 + 2 * orders.iter().min().copied().unwrap_or(1),
            });
        }
        Ok(Self {
            sample_size: events.len(),
            orders: kept,
            fits,
            warnings,
        })
    }

    pub fn get(&self, order: usize) -> Option<&FitResult> {
        self.orders.iter().position(|&p| p == order).map(|i| &self.fits[i])
    }

    /// The subset of fits for `orders`; `None` if none of them was fitted.
    pub fn restricted(&self, orders: &[usize]) -> Option<Self> {
        let mut out = Self {
            sample_size: self.sample_size,
            orders: Vec::new(),
            fits: Vec::new(),
            warnings: self.warnings.clone(),
        };
        for (&order, fit) in self.orders.iter().zip(&self.fits) {
            if orders.contains(&order) {
                out.orders.push(order);
                out.fits.push(fit.clone());
            }
        }
        (!out.orders.is_empty()).then_some(out)
    }

    fn k_max(&self) -> usize {
        self.orders.iter().map(|p| 1 + 2 * p).max().unwrap_or(0)
    }

    /// Applies `criterion` to the stored fits.
    pub fn select(&self, criterion: Criterion, threshold: AiccThreshold) -> Result<SelectionResult> {
        let k_max = self.k_max();
        let mut orders = Vec::new();
        let mut values = Vec::new();
        let mut fits = Vec::new();
        let mut warnings = self.warnings.clone();
        for (&order, fit) in self.orders.iter().zip(&self.fits) {
            let input = IcInput::new(fit.log_likelihood, 1 + 2 * order, self.sample_size);
            match criterion.evaluate(input, k_max, threshold) {
                Ok(v) => {
                    orders.push(order);
                    values.push(v);
                    fits.push(fit.clone());
                }
                Err(e) => warnings.push(format!("order {order} excluded under {criterion}: {e}")),
            }
        }
        let best = argmin_first(&values).ok_or_else(|| {
            HawkesError::Domain(format!("{criterion} undefined for every candidate order"))
        })?;
        Ok(SelectionResult {
            criterion,
            candidate_orders: orders.clone(),
            ic_values: values,
            fits,
            chosen_order: orders[best],
            warnings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub criterion: Criterion,
    pub candidate_orders: Vec<usize>,
    pub ic_values: Vec<f64>,
    pub fits: Vec<FitResult>,
    pub chosen_order: usize,
    pub warnings: Vec<String>,
}

/// Fits every candidate order and picks the one minimising `criterion`.
pub fn select_order(
    events: &EventSequence,
    candidate_orders: &[usize],
    criterion: Criterion,
    fit_options: &FitOptions,
) -> Result<SelectionResult> {
    select_order_with(
        events,
        candidate_orders,
        criterion,
        fit_options,
        AiccThreshold::default(),
    )
}

pub fn select_order_with(
    events: &EventSequence,
    candidate_orders: &[usize],
    criterion: Criterion,
    fit_options: &FitOptions,
    threshold: AiccThreshold,
) -> Result<SelectionResult> {
    CandidateFits::fit(events, candidate_orders, fit_options)?.select(criterion, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HawkesModel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn aic_examples() {
        assert_eq!(aic(IcInput::new(0.0, 0, 10)), 0.0);
        assert_eq!(aic(IcInput::new(-100.0, 3, 10)), 206.0);
        assert_eq!(aic(IcInput::new(-100.0, 5, 10)), 210.0);
    }

    #[test]
    fn aicc_examples() {
        assert_relative_eq!(aicc(IcInput::new(-100.0, 3, 10)).unwrap(), 210.0);
        let big = IcInput::new(-100.0, 3, 1_000_000);
        assert!((aicc(big).unwrap() - aic(big)).abs() < 1e-3);
        assert!(aicc(IcInput::new(-100.0, 3, 4)).is_err());
    }

    #[test]
    fn bic_examples() {
        let v = bic(IcInput::new(-100.0, 3, 100)).unwrap();
        assert_relative_eq!(v, 200.0 + 3.0 * 100f64.ln(), epsilon = 1e-12);
        assert!((v - 213.81551).abs() < 1e-5);
        assert_eq!(bic(IcInput::new(-100.0, 3, 1)).unwrap(), 200.0);
        assert_eq!(bic(IcInput::new(-100.0, 0, 50)).unwrap(), 200.0);
    }

    #[test]
    fn hq_examples() {
        let v = hq(IcInput::new(-100.0, 3, 100)).unwrap();
        assert!((v - 209.16308).abs() < 1e-5);
        let v3 = hq(IcInput::new(-100.0, 3, 3)).unwrap();
        assert_relative_eq!(v3, 200.0 + 6.0 * 3f64.ln().ln(), epsilon = 1e-12);
        assert!((v3 - 200.56).abs() < 0.01);
        assert_eq!(hq(IcInput::new(-100.0, 0, 50)).unwrap(), 200.0);
        assert!(hq(IcInput::new(-100.0, 3, 2)).is_err());
    }

    #[test]
    fn argmin_with_parsimonious_ties() {
        assert_eq!(argmin_first(&[10.0, 9.0, 11.0]), Some(1));
        assert_eq!(argmin_first(&[10.0, 10.0, 12.0]), Some(0));
        assert_eq!(argmin_first(&[]), None);
    }

    #[test]
    fn combined_rule_threshold() {
        let fixed = AiccThreshold::Fixed(120);
        assert!(fixed.uses_aicc(119, 7));
        assert!(!fixed.uses_aicc(120, 7));
        let rule = AiccThreshold::PerParameter(40);
        assert!(rule.uses_aicc(279, 7));
        assert!(!rule.uses_aicc(280, 7));
        let input = IcInput::new(-50.0, 3, 100);
        assert_eq!(
            Criterion::AiccAic.evaluate(input, 7, fixed).unwrap(),
            aicc(input).unwrap()
        );
        let input = IcInput::new(-50.0, 3, 200);
        assert_eq!(Criterion::AiccAic.evaluate(input, 7, fixed).unwrap(), aic(input));
    }

    #[test]
    fn criterion_names_round_trip() {
        for c in Criterion::ALL {
            assert_eq!(c.name().parse::<Criterion>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
        assert!("bogus".parse::<Criterion>().is_err());
    }

    fn synthetic(lls: &[f64], n: usize) -> CandidateFits {
        let model = HawkesModel::poisson(1.0).unwrap();
        CandidateFits {
            sample_size: n,
            orders: (1..=lls.len()).collect(),
            fits: lls
                .iter()
                .map(|&ll| FitResult {
                    model: model.clone(),
                    log_likelihood: ll,
                    converged: true,
                    iterations: 0,
                    restart_index: 0,
                })
                .collect(),
            warnings: vec![],
        }
    }

    #[test]
    fn selection_on_synthetic_fits() {
        // AIC values 2k - 2L with k = 3, 5, 7 give (10, 9, 11)
        let fits = synthetic(&[-2.0, 0.5, 1.5], 100);
        let res = fits.select(Criterion::Aic, AiccThreshold::default()).unwrap();
        assert_eq!(res.ic_values, vec![10.0, 9.0, 11.0]);
        assert_eq!(res.chosen_order, 2);

        let fits = synthetic(&[-2.0, 0.0, 1.0], 100);
        let res = fits.select(Criterion::Aic, AiccThreshold::default()).unwrap();
        assert_eq!(res.ic_values, vec![10.0, 10.0, 12.0]);
        assert_eq!(res.chosen_order, 1);
    }

    #[test]
    fn aicc_excludes_orders_without_room() {
        let fits = synthetic(&[-10.0, -9.0, -8.0], 7);
        let res = fits.select(Criterion::Aicc, AiccThreshold::default()).unwrap();
        assert_eq!(res.candidate_orders, vec![1, 2]);
        assert_eq!(res.warnings.len(), 1);
    }

    proptest! {
        #[test]
        fn heavier_penalties_pick_smaller_orders(
            lls in prop::collection::vec(-1e4f64..0.0, 1..6),
            n in 16usize..100_000,
        ) {
            let fits = synthetic(&lls, n);
            let t = AiccThreshold::default();
            let by = |c| fits.select(c, t).unwrap().chosen_order;
            prop_assert!(by(Criterion::Bic) <= by(Criterion::Hq));
            prop_assert!(by(Criterion::Hq) <= by(Criterion::Aic));
        }

        #[test]
        fn common_shift_keeps_choice(
            raw in prop::collection::vec(-10_000i32..0, 1..6),
            shift in -1000i32..1000,
            n in 16usize..10_000,
        ) {
            // integer log-likelihoods keep the shifted deviances exact
            let lls: Vec<f64> = raw.iter().map(|&l| f64::from(l)).collect();
            let shifted: Vec<f64> = lls.iter().map(|l| l + f64::from(shift)).collect();
            for c in [Criterion::Aic, Criterion::Bic, Criterion::Hq] {
                let a = synthetic(&lls, n).select(c, AiccThreshold::default()).unwrap().chosen_order;
                let b = synthetic(&shifted, n).select(c, AiccThreshold::default()).unwrap().chosen_order;
                prop_assert_eq!(a, b);
            }
        }
    }
}
