//! Average intensity `φ(t) = E[λ(t)]` of the finite-past process.
//!
//! Taking expectations of the intensity gives the renewal-type equation
//!
//! ```text
//! φ(t) = μ + Σ_m α_m ∫_0^t e^{-β_m (t-u)} φ(u) du
//! ```
//!
//! whose Laplace transform is `φ̃(s) = (μ/s) R(s) / Q(s)` with
//! `R(s) = Π (s + β_m)` and `Q(s) = R(s) - Σ_m α_m Π_{k≠m} (s + β_k)`.
//! Inverting by partial fractions gives `φ(t) = μ Σ_i A_i e^{s_i t}` with
//! `s_1 = 0` and `A_1 = 1 / (1 - n)`.
//!
//! Three independent evaluation routes are provided: closed forms for
//! `P = 1` and `P = 2`, a general partial-fraction expansion built from the
//! roots of `Q`, and a product-trapezoid solver for the integral equation
//! itself, which serves as the brute-force reference for the other two.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::HawkesModel;

/// Two roots closer than this (relative) are treated as a repeated root.
pub const ROOT_MULTIPLICITY_TOL: f64 = 1e-8;

/// Expansions whose coefficients miss `Σ A_i = 1` by more than this are
/// treated as ill-conditioned (nearly repeated roots) and rejected.
pub const COEFFICIENT_SUM_TOL: f64 = 1e-8;

/// Switch to the `β = α` limit of the `P = 1` formula below this relative gap.
pub const P1_SINGULAR_TOL: f64 = 1e-10;

/// Minimum grid size used when the Volterra solver stands in for a closed form.
pub const VOLTERRA_FALLBACK_NODES: usize = 4001;

/// `Λ = μ / (1 - n)`, the mean intensity of the stationary infinite-past process.
pub fn stationary_mean_intensity(model: &HawkesModel) -> Result<f64> {
    let n = model.branching_ratio();
    if n >= 1.0 {
        return Err(HawkesError::NonStationary(n));
    }
    Ok(model.mu() / (1.0 - n))
}

/// Closed-form average intensity for a single exponential term.
pub fn mean_intensity_p1(model: &HawkesModel, t: f64) -> Result<f64> {
    if model.order() != 1 {
        return Err(HawkesError::Domain(format!(
            "closed form needs P = 1, model has P = {}",
            model.order()
        )));
    }
    let (alpha, beta) = (model.terms()[0].alpha, model.terms()[0].beta);
    let mu = model.mu();
    let gap = beta - alpha;
    if gap.abs() < P1_SINGULAR_TOL * beta {
        return Ok(mu * (1.0 + alpha * t));
    }
    Ok(mu / gap * (beta - alpha * (-gap * t).exp()))
}

/// `φ̃(s) / μ = Σ_i A_i / (s - s_i)`; the first pole is always `s = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialFractionExpansion {
    poles: Vec<Complex64>,
    coefficients: Vec<Complex64>,
}

impl PartialFractionExpansion {
    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    /// Coefficient of the `s = 0` pole; `μ A_1` is the stationary level.
    pub fn stationary_coefficient(&self) -> f64 {
        self.coefficients[0].re
    }

    pub fn coefficient_sum(&self) -> Complex64 {
        self.coefficients.iter().sum()
    }

    /// `Σ A_i e^{s_i t}`. Conjugate pairs cancel, so only the real part is kept.
    pub fn eval(&self, t: f64) -> f64 {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (&s, &a) in self.poles.iter().zip(&self.coefficients) {
            let term = a * (s * t).exp();
            scale += term.norm();
            sum += term;
        }
        debug_assert!(sum.im.abs() <= 1e-10 * scale.max(1.0), "complex residue {sum}");
        sum.re
    }

    fn well_conditioned(&self) -> bool {
        (self.coefficient_sum() - 1.0).norm() <= COEFFICIENT_SUM_TOL
    }

    /// `∫_0^T Σ A_i e^{s_i τ} dτ` in closed form.
    pub fn integral(&self, horizon: f64) -> f64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (&s, &a) in self.poles.iter().zip(&self.coefficients) {
            sum += a * integrated_exponential(s, horizon);
        }
        sum.re
    }
}

// ∫_0^T e^{sτ} dτ = (e^{sT} - 1) / s, with the small-|sT| series.
fn integrated_exponential(s: Complex64, horizon: f64) -> Complex64 {
    let z = s * horizon;
    if z.norm() < 1e-5 {
        horizon * (1.0 + z / 2.0 + z * z / 6.0)
    } else {
        (z.exp() - 1.0) / s
    }
}

/// Closed-form expansion for `P = 2`.
///
/// Returns `Ok(None)` when the two nonzero poles coincide (the discriminant
/// `ξ` vanishes); the caller decides how to fall back.
pub fn expansion_p2(model: &HawkesModel) -> Result<Option<PartialFractionExpansion>> {
    if model.order() != 2 {
        return Err(HawkesError::Domain(format!(
            "closed form needs P = 2, model has P = {}",
            model.order()
        )));
    }
    model.require_stationary()?;
    let (a1, b1) = (model.terms()[0].alpha, model.terms()[0].beta);
    let (a2, b2) = (model.terms()[1].alpha, model.terms()[1].beta);

    let gamma = a1 + a2 - b1 - b2;
    let det = b1 * b2 - a1 * b2 - a2 * b1;
    let xi = Complex64::new(gamma * gamma - 4.0 * det, 0.0).sqrt();
    if xi.norm() < ROOT_MULTIPLICITY_TOL * gamma.abs().max(1.0) {
        return Ok(None);
    }
    let g = Complex64::new(gamma, 0.0);
    let s2 = (g - xi) / 2.0;
    let s3 = (g + xi) / 2.0;
    let c1 = b1 * b2 / det;
    let c2 = (xi - a1 - a2 + b1 - b2) * (xi - a1 - a2 - b1 + b2) / (2.0 * xi * (xi - g));
    let c3 = (xi + a1 + a2 + b1 - b2) * (xi + a1 + a2 - b1 + b2) / (2.0 * xi * (xi + g));
    let expansion = PartialFractionExpansion {
        poles: vec![Complex64::new(0.0, 0.0), s2, s3],
        coefficients: vec![Complex64::new(c1, 0.0), c2, c3],
    };
    Ok(expansion.well_conditioned().then_some(expansion))
}

/// Closed-form average intensity for two exponential terms.
///
/// Falls back to the Volterra solver when the nonzero poles coincide.
pub fn mean_intensity_p2(model: &HawkesModel, t: f64) -> Result<f64> {
    match expansion_p2(model)? {
        Some(exp) => Ok(model.mu() * exp.eval(t)),
        None => Ok(volterra_at(model, t)),
    }
}

/// Denominator polynomial `Q(s)` as coefficients in ascending powers; monic of degree `P`.
pub fn denominator_polynomial(model: &HawkesModel) -> Vec<f64> {
    let betas = model.betas();
    let mut q = product_of_shifts(&betas);
    for (m, term) in model.terms().iter().enumerate() {
        let others: Vec<f64> = betas
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != m)
            .map(|(_, &b)| b)
            .collect();
        for (qi, ci) in q.iter_mut().zip(product_of_shifts(&others)) {
            *qi -= term.alpha * ci;
        }
    }
    q
}

// Π (s + b) in ascending powers.
fn product_of_shifts(shifts: &[f64]) -> Vec<f64> {
    let mut poly = vec![1.0];
    for &b in shifts {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += b * c;
            next[i + 1] += c;
        }
        poly = next;
    }
    poly
}

fn horner(poly: &[f64], z: Complex64) -> Complex64 {
    poly.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn derivative(poly: &[f64]) -> Vec<f64> {
    poly.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| i as f64 * c)
        .collect()
}

/// Roots of a monic polynomial (ascending coefficients) from the eigenvalues
/// of its companion matrix, refined by a few Newton steps.
pub fn polynomial_roots(poly: &[f64]) -> Result<Vec<Complex64>> {
    let degree = poly.len() - 1;
    let lead = poly[degree];
    if degree == 0 || lead == 0.0 {
        return Err(HawkesError::Numeric("degenerate polynomial".into()));
    }
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -poly[i] / lead;
    }
    let eig = companion.complex_eigenvalues();
    let dpoly = derivative(poly);
    let mut roots = Vec::with_capacity(degree);
    for &root in eig.iter() {
        if !(root.re.is_finite() && root.im.is_finite()) {
            return Err(HawkesError::Numeric(format!(
                "companion eigenvalue solver returned {root}"
            )));
        }
        let mut z = root;
        for _ in 0..3 {
            let d = horner(&dpoly, z);
            if d.norm() == 0.0 {
                break;
            }
            let value = horner(poly, z);
            let next = z - value / d;
            // near a multiple root Q' vanishes and Newton overshoots
            if !(next.re.is_finite() && next.im.is_finite())
                || horner(poly, next).norm() >= value.norm()
            {
                break;
            }
            z = next;
        }
        // keep real roots exactly real
        if root.im == 0.0 {
            z.im = 0.0;
        }
        roots.push(z);
    }
    Ok(roots)
}

/// Partial-fraction expansion for any order, from the roots of `Q`.
///
/// Errors with [`HawkesError::Numeric`] when a repeated root is detected;
/// confluent expansions are not supported.
pub fn expansion_general(model: &HawkesModel) -> Result<PartialFractionExpansion> {
    model.require_stationary()?;
    let q = denominator_polynomial(model);
    let dq = derivative(&q);
    let r = product_of_shifts(&model.betas());
    let mut roots = polynomial_roots(&q)?;
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[i + 1..] {
            if (a - b).norm() < ROOT_MULTIPLICITY_TOL * a.norm().max(1.0) {
                return Err(HawkesError::Numeric(format!("repeated root near {a}")));
            }
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut poles = vec![zero];
    let mut coefficients = vec![Complex64::new(r[0] / q[0], 0.0)];
    for &s in &roots {
        poles.push(s);
        coefficients.push(horner(&r, s) / (s * horner(&dq, s)));
    }
    let expansion = PartialFractionExpansion {
        poles,
        coefficients,
    };
    if !expansion.well_conditioned() {
        return Err(HawkesError::Numeric(format!(
            "ill-conditioned expansion: coefficients sum to {}",
            expansion.coefficient_sum()
        )));
    }
    Ok(expansion)
}

/// Average intensity from the general expansion, falling back to the
/// Volterra solver on repeated roots.
pub fn mean_intensity_general(model: &HawkesModel, t: f64) -> Result<f64> {
    match expansion_general(model) {
        Ok(exp) => Ok(model.mu() * exp.eval(t)),
        Err(HawkesError::Numeric(_)) => Ok(volterra_at(model, t)),
        Err(e) => Err(e),
    }
}

/// Expected number of events `E[N(T)] = ∫_0^T φ`.
pub fn expected_count(model: &HawkesModel, horizon: f64) -> Result<f64> {
    if horizon < 0.0 {
        return Err(HawkesError::Domain(format!("negative horizon {horizon}")));
    }
    match expansion_general(model) {
        Ok(exp) => Ok(model.mu() * exp.integral(horizon)),
        Err(HawkesError::Numeric(_)) => {
            let grid = UniformGrid::covering(horizon, VOLTERRA_FALLBACK_NODES);
            let phi = volterra_mean_intensity(model, &grid);
            Ok(*cumulative_trapezoid(&phi, grid.step).last().unwrap_or(&0.0))
        }
        Err(e) => Err(e),
    }
}

/// `μ Σ A_i e^{s_i t}` with its expansion, for repeated evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanIntensityCurve {
    pub expansion: PartialFractionExpansion,
    pub mu: f64,
}

impl MeanIntensityCurve {
    pub fn new(model: &HawkesModel) -> Result<Self> {
        Ok(Self {
            expansion: expansion_general(model)?,
            mu: model.mu(),
        })
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.mu * self.expansion.eval(t)
    }

    pub fn expected_count(&self, horizon: f64) -> f64 {
        self.mu * self.expansion.integral(horizon)
    }

    pub fn stationary_level(&self) -> f64 {
        self.mu * self.expansion.stationary_coefficient()
    }
}

/// Uniform grid `0, h, 2h, …, (nodes-1) h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub step: f64,
    pub nodes: usize,
}

impl UniformGrid {
    pub fn new(step: f64, nodes: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || nodes == 0 {
            return Err(HawkesError::Domain(format!(
                "grid needs step > 0 and at least one node (step {step}, nodes {nodes})"
            )));
        }
        Ok(Self { step, nodes })
    }

    /// `nodes` points spanning `[0, t_max]`; degenerate spans collapse to a unit step.
    pub fn covering(t_max: f64, nodes: usize) -> Self {
        let nodes = nodes.max(2);
        let step = if t_max > 0.0 {
            t_max / (nodes - 1) as f64
        } else {
            1.0
        };
        Self { step, nodes }
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(|j| self.time(j))
    }
}

/// Solves the mean-intensity integral equation on a uniform grid.
///
/// Product trapezoid rule: on each cell `φ` is interpolated linearly and the
/// exponential kernel is integrated exactly, so stiff kernels (`β h` large)
/// stay stable. Each step is a scalar linear equation for the new node.
/// Work is `O(nodes · P)` through a running sum per kernel term.
pub fn volterra_mean_intensity(model: &HawkesModel, grid: &UniformGrid) -> Vec<f64> {
    let h = grid.step;
    let weights: Vec<ProductWeights> = model
        .terms()
        .iter()
        .map(|k| ProductWeights::new(k.beta, h))
        .collect();
    let alphas = model.alphas();
    let implicit: f64 = alphas.iter().zip(&weights).map(|(a, w)| a * w.right).sum();

    let mut phi = Vec::with_capacity(grid.nodes);
    phi.push(model.mu());
    // running ∫_0^{t_j} e^{-β_m (t_j - u)} φ(u) du
    let mut history = vec![0.0; weights.len()];
    for _ in 1..grid.nodes {
        let prev = *phi.last().unwrap();
        let mut explicit = model.mu();
        for ((hist, w), a) in history.iter_mut().zip(&weights).zip(&alphas) {
            *hist = w.decay * *hist + w.left * prev;
            explicit += a * *hist;
        }
        let next = explicit / (1.0 - implicit);
        for (hist, w) in history.iter_mut().zip(&weights) {
            *hist += w.right * next;
        }
        phi.push(next);
    }
    phi
}

/// Exact integrals of `e^{-β(h-u)}` against the two linear hat functions on `[0, h]`.
struct ProductWeights {
    decay: f64,
    left: f64,
    right: f64,
}

impl ProductWeights {
    fn new(beta: f64, h: f64) -> Self {
        let x = beta * h;
        // f(x) = 1 - e^{-x}(1 + x) = Σ_{k≥2} (-1)^k (k-1) x^k / k!
        let f = if x < 0.5 {
            let mut term = x; // x^k / k! at k = 1
            let mut sum = 0.0;
            for k in 2..30 {
                term *= x / k as f64;
                let signed = if k % 2 == 0 { term } else { -term };
                sum += (k - 1) as f64 * signed;
            }
            sum
        } else {
            1.0 - (-x).exp() * (1.0 + x)
        };
        let whole = if x > 0.0 { -(-x).exp_m1() / beta } else { h };
        let left = if x > 0.0 { h * f / (x * x) } else { h / 2.0 };
        Self {
            decay: (-x).exp(),
            left,
            right: whole - left,
        }
    }
}

/// Cumulative trapezoid integral; first entry is zero.
pub fn cumulative_trapezoid(values: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

fn volterra_at(model: &HawkesModel, t: f64) -> f64 {
    if t <= 0.0 {
        return model.mu();
    }
    let grid = UniformGrid::covering(t, VOLTERRA_FALLBACK_NODES);
    *volterra_mean_intensity(model, &grid).last().unwrap()
}

/// Evaluation route for [`mean_intensity_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Closed forms for `P ≤ 2`; the general expansion beyond that.
    Analytic,
    General,
    Volterra,
}

impl std::str::FromStr for Method {
    type Err = HawkesError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Method::Analytic),
            "general" => Ok(Method::General),
            "volterra" => Ok(Method::Volterra),
            other => Err(HawkesError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// One row of [`mean_intensity_table`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityRow {
    pub t: f64,
    pub phi: f64,
    pub expected_count: f64,
}

/// `φ(t)` and `E[N(t)]` on `n_points` nodes spanning `[0, t_max]`.
///
/// For the Volterra route the count is the trapezoid integral of a solution
/// computed on a grid refined to at least [`VOLTERRA_FALLBACK_NODES`] nodes.
pub fn mean_intensity_table(
    model: &HawkesModel,
    t_max: f64,
    n_points: usize,
    method: Method,
) -> Result<Vec<IntensityRow>> {
    if n_points < 2 || !(t_max > 0.0) {
        return Err(HawkesError::Domain(format!(
            "need t_max > 0 and at least two points (t_max {t_max}, points {n_points})"
        )));
    }
    let grid = UniformGrid::covering(t_max, n_points);
    match method {
        Method::Volterra => {
            let refine = (VOLTERRA_FALLBACK_NODES - 1).div_ceil(n_points - 1).max(1);
            let fine = UniformGrid::covering(t_max, (n_points - 1) * refine + 1);
            let phi = volterra_mean_intensity(model, &fine);
            let counts = cumulative_trapezoid(&phi, fine.step);
            Ok((0..n_points)
                .map(|j| IntensityRow {
                    t: grid.time(j),
                    phi: phi[j * refine],
                    expected_count: counts[j * refine],
                })
                .collect())
        }
        Method::Analytic | Method::General => {
            let evaluate = |t: f64| -> Result<f64> {
                match (method, model.order()) {
                    (Method::Analytic, 1) => mean_intensity_p1(model, t),
                    (Method::Analytic, 2) => mean_intensity_p2(model, t),
                    _ => mean_intensity_general(model, t),
                }
            };
            grid.times()
                .map(|t| {
                    Ok(IntensityRow {
                        t,
                        phi: evaluate(t)?,
                        expected_count: expected_count(model, t)?,
                    })
                })
                .collect()
        }
    }
}
