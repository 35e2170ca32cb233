//! Analytic sample-complexity quantities.
//!
//! `mu_k` / `mu~_k` bracket the expected number of observed items when `k`
//! surviving items are shown, `v_k` bounds its second moment, and the
//! upper-bound terms combine them with the per-item thresholds of a
//! [`GapProfile`]. The lower bound uses Bernoulli KL divergences. Universal
//! constants multiplying the upper-bound terms are not modelled; the terms
//! are reported raw.
//!
//! Index conventions follow the usual 1-based notation in the helper
//! closures (`mu(j)` is `mu_j`, `t(m)` is the threshold of the item ranked
//! `m`-th by adjusted gap).

use num_traits::{FromPrimitive, Num};
use serde::Serialize;
use thiserror::Error;

use crate::env::expected_observations;
use crate::instance::{GapProfile, Instance};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("minimum weight is zero, v_k is unbounded in w'")]
    ZeroMinWeight,
    #[error("KL reference probability q={0} must lie in (0, 1)")]
    DegenerateQ(f64),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("the lower bound is stated for epsilon = 0, got {0}")]
    EpsilonNotZero(f64),
    #[error("invalid atom distribution: {0}")]
    BadDistribution(String),
    #[error("lambda grid values must be <= 0, got {0}")]
    BadGrid(f64),
    #[error("k={k} outside [1, {l}]")]
    BadK { k: usize, l: usize },
}

/// Which upper bound applies: `K' < 2K - 1` (three terms) or
/// `K' >= 2K - 1` (two terms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    KPrimeLt2Km1,
    KPrimeGe2Km1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<F> {
    pub regime: Regime,
    /// `N1`, or `N1'` in the `K' >= 2K - 1` regime.
    pub n1: F,
    /// `N2`, or `N2'` in the `K' >= 2K - 1` regime.
    pub n2: F,
    /// Telescoping `N3`; absent in the `K' >= 2K - 1` regime.
    pub n3: Option<F>,
    /// Expanded `N3` (threshold-weighted form); absent with `n3`.
    pub n3_expanded: Option<F>,
    pub k_prime: usize,
    pub k1: usize,
    pub k2: usize,
    /// `M_1..M_{K-1}`.
    pub m: Vec<F>,
    /// KL lower bound; only defined for `epsilon = 0`.
    pub lower_bound: Option<F>,
    pub mu: Vec<F>,
    pub mu_tilde: Vec<F>,
    pub v: Vec<F>,
    /// Thresholds ordered by nonincreasing adjusted gap.
    pub sorted_thresholds: Vec<u64>,
}

impl<F: Real> BoundReport<F> {
    /// Sum of the raw upper-bound terms.
    pub fn total(&self) -> F {
        self.n1 + self.n2 + self.n3.unwrap_or_else(F::zero)
    }
}

/// `mu(k, w)`: expected observations when the `k` largest weights are shown
/// in decreasing order. `weights` must be canonical.
pub fn mu_lower<T>(k: usize, weights: &[T]) -> T
where
    T: Num + Clone + FromPrimitive,
{
    expected_observations(&weights[..k])
}

/// `mu~(k, w)`: expected observations when the `k` smallest weights are
/// shown in increasing order. `weights` must be canonical.
pub fn mu_upper<T>(k: usize, weights: &[T]) -> T
where
    T: Num + Clone + FromPrimitive,
{
    let tail: Vec<T> = weights.iter().rev().take(k).cloned().collect();
    expected_observations(&tail)
}

/// `min{k/2, 1/(2 w*)}`, the analytic floor under `mu_k`.
pub fn mu_analytic_floor<F: Real>(k: usize, w_star: F) -> F {
    let half = F::from_count(k as u64) / F::lit(2.0);
    half.min(F::one() / (F::lit(2.0) * w_star))
}

/// `v_k = min{k, sqrt(2) / w'}`.
pub fn v_param<F: Real>(k: usize, w_min: F) -> Result<F, BoundsError> {
    if !(w_min > F::zero()) {
        return Err(BoundsError::ZeroMinWeight);
    }
    Ok(F::from_count(k as u64).min(F::lit(2.0).sqrt() / w_min))
}

fn v_or_limit<F: Real>(k: usize, w_min: F) -> F {
    // w' = 0 leaves only the k branch
    v_param(k, w_min).unwrap_or_else(|_| F::from_count(k as u64))
}

struct Terms<'a, F> {
    l: usize,
    k: usize,
    k_prime: usize,
    delta: F,
    mu: Vec<F>,
    v: Vec<F>,
    gaps: &'a GapProfile<F>,
}

impl<'a, F: Real> Terms<'a, F> {
    fn new(instance: &Instance<F>, gaps: &'a GapProfile<F>) -> Self {
        let w = instance.weights();
        let k = instance.k();
        let mu = (1..=k).map(|j| mu_lower(j, w)).collect();
        let v = (1..=k).map(|j| v_or_limit(j, instance.w_min())).collect();
        Self { l: instance.l(), k, k_prime: gaps.k_prime, delta: instance.delta(), mu, v, gaps }
    }

    fn mu(&self, j: usize) -> F {
        self.mu[j - 1]
    }

    fn v(&self, j: usize) -> F {
        self.v[j - 1]
    }

    fn t(&self, m: usize) -> F {
        F::from_count(self.gaps.sorted_threshold(m))
    }

    /// `(j) / mu_j`, zero for `j = 0`.
    fn load(&self, j: usize) -> F {
        if j == 0 {
            F::zero()
        } else {
            F::from_count(j as u64) / self.mu(j)
        }
    }

    fn k1(&self, w_star: F) -> usize {
        let inv = (F::one() / w_star).floor().as_f64() as usize;
        (self.k_prime - self.k).max(inv.min(self.k - 1))
    }

    fn k2(&self) -> usize {
        (self.k_prime - self.k).max(1)
    }

    fn n1(&self) -> F {
        let upto = self.k.saturating_sub(self.k2());
        let s = (1..=upto).fold(F::zero(), |acc, k| {
            let j = self.k - k + 1;
            acc + self.v(j).powi(2) / self.mu(j).powi(2)
        });
        if upto == 0 {
            return F::zero();
        }
        s * (s / self.delta).ln()
    }

    fn n2(&self) -> F {
        let sum = (1..=self.l - self.k).fold(F::zero(), |acc, i| acc + self.t(i));
        sum / self.mu(self.k)
    }

    fn n3(&self) -> F {
        let (l, k) = (self.l, self.k);
        (2..=(2 * k).saturating_sub(self.k_prime))
            .fold(F::zero(), |acc, kk| acc + self.load(k - kk + 1) * (self.t(l - k + kk) - self.t(l - k + kk - 1)))
    }

    fn m(&self, kk: usize) -> F {
        self.load(self.k + 1 - kk) - self.load(self.k - kk)
    }

    fn n3_expanded(&self, w_star: F) -> F {
        let (l, k) = (self.l, self.k);
        let k1 = self.k1(w_star);
        let two = F::lit(2.0);
        let head = (1..k - k1).fold(F::zero(), |acc, kk| acc + self.m(kk) * self.t(l - k + kk));
        head + (self.load(k1 + 1) - two) * self.t(l - k1) + two * self.t(l + k - self.k_prime)
    }

    fn n1_many_optimal(&self) -> F {
        let two = F::lit(2.0);
        two * self.v(self.k).powi(2) / self.mu(self.k).powi(2) * (two / self.delta).ln()
    }

    fn n2_many_optimal(&self) -> F {
        let (l, k, kp) = (self.l, self.k, self.k_prime);
        let head = (1..=l - kp + k - 1).fold(F::zero(), |acc, i| acc + self.t(i));
        let extra = F::from_count((kp - k + 1) as u64) * self.t(l - kp + k);
        let pad = F::from_count((kp - k) as u64);
        F::lit(2.0) / self.mu(k) * (head + extra + pad)
    }
}

/// Assembles every analytic quantity for `instance`.
pub fn upper_bound_terms<F: Real>(instance: &Instance<F>, gaps: &GapProfile<F>) -> BoundReport<F> {
    let terms = Terms::new(instance, gaps);
    let (k, kp) = (terms.k, terms.k_prime);
    let regime = if kp + 1 < 2 * k { Regime::KPrimeLt2Km1 } else { Regime::KPrimeGe2Km1 };
    let (n1, n2, n3, n3_expanded) = match regime {
        Regime::KPrimeLt2Km1 => (terms.n1(), terms.n2(), Some(terms.n3()), Some(terms.n3_expanded(instance.w_star()))),
        Regime::KPrimeGe2Km1 => (terms.n1_many_optimal(), terms.n2_many_optimal(), None, None),
    };
    let w = instance.weights();
    BoundReport {
        regime,
        n1,
        n2,
        n3,
        n3_expanded,
        k_prime: kp,
        k1: terms.k1(instance.w_star()),
        k2: terms.k2(),
        m: (1..k).map(|kk| terms.m(kk)).collect(),
        lower_bound: lower_bound(instance).ok(),
        mu: terms.mu.clone(),
        mu_tilde: (1..=k).map(|j| mu_upper(j, w)).collect(),
        v: terms.v.clone(),
        sorted_thresholds: (1..=instance.l()).map(|m| gaps.sorted_threshold(m)).collect(),
    }
}

/// Theorem-form `N1` over the first `K - K2` list sizes (regime-agnostic).
pub fn n1_theorem<F: Real>(instance: &Instance<F>, gaps: &GapProfile<F>) -> F {
    Terms::new(instance, gaps).n1()
}

/// `N2 = (1/mu_K) * sum_{i <= L-K} T(sigma(i))` (regime-agnostic).
pub fn n2_theorem<F: Real>(instance: &Instance<F>, gaps: &GapProfile<F>) -> F {
    Terms::new(instance, gaps).n2()
}

/// Bernoulli KL divergence `KL(p, q)` with `0 log 0 = 0`.
pub fn kl_bernoulli<F: Real>(p: F, q: F) -> Result<F, BoundsError> {
    if !(q > F::zero() && q < F::one()) {
        return Err(BoundsError::DegenerateQ(q.as_f64()));
    }
    if !(p >= F::zero() && p <= F::one()) {
        return Err(BoundsError::BadProbability(p.as_f64()));
    }
    let term = |a: F, b: F| if a > F::zero() { a * (a / b).ln() } else { F::zero() };
    Ok((term(p, q) + term(F::one() - p, F::one() - q)).max(F::zero()))
}

/// KL lower bound on the optimal expected stopping time, for `epsilon = 0`.
/// Negative values (risk above `1/2.4`) are reported as zero.
pub fn lower_bound<F: Real>(instance: &Instance<F>) -> Result<F, BoundsError> {
    if instance.epsilon() != F::zero() {
        return Err(BoundsError::EpsilonNotZero(instance.epsilon().as_f64()));
    }
    let (w, k, l) = (instance.weights(), instance.k(), instance.l());
    let mut sum = F::zero();
    if k < l {
        for &wi in &w[..k] {
            sum = sum + F::one() / kl_bernoulli(wi, w[k])?;
        }
        for &wj in &w[k..] {
            sum = sum + F::one() / kl_bernoulli(wj, w[k - 1])?;
        }
    }
    let scale = (F::one() / (F::lit(2.4) * instance.delta())).ln();
    Ok((scale / mu_upper(k, w) * sum).max(F::zero()))
}

/// Two-probability form of the lower bound, with `KL(1 - delta, delta)`
/// in place of `log(1 / 2.4 delta)`.
pub fn lower_bound_two_prob<F: Real>(w_star: F, w_prime: F, k: usize, l: usize, delta: F) -> Result<F, BoundsError> {
    if k == 0 || k > l {
        return Err(BoundsError::BadK { k, l });
    }
    let mu_tilde = (F::one() - (F::one() - w_prime).powi(k as i32)) / w_prime;
    let head = kl_bernoulli(F::one() - delta, delta)? / mu_tilde;
    let optimal = F::from_count(k as u64) / kl_bernoulli(w_star, w_prime)?;
    let rest = F::from_count((l - k) as u64) / kl_bernoulli(w_prime, w_star)?;
    Ok(head * (optimal + rest))
}

/// Left tail of `sum_t X_t` beyond which the concentration event fires:
/// `n mu_k - sqrt(2 n v_k^2 log(1/delta))`.
pub fn concentration_floor<F: Real>(n: u64, mu_k: F, v_k: F, delta: F) -> F {
    let n = F::from_count(n);
    n * mu_k - (F::lit(2.0) * n * v_k * v_k * (F::one() / delta).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsgOutcome<F> {
    pub passed: bool,
    /// Largest `log E[exp(lambda (X - EX))] - v^2 lambda^2 / 2` over the
    /// grid; positive values are violations.
    pub max_violation: F,
    pub worst_lambda: F,
}

/// 40 points, magnitudes log-spaced over `[1e-3, 1e2]`, all negative.
pub fn default_lambda_grid<F: Real>() -> Vec<F> {
    (0..40).map(|i| -F::lit(10f64.powf(-3.0 + 5.0 * i as f64 / 39.0))).collect()
}

/// Checks the left-sided sub-Gaussian inequality
/// `E[exp(lambda (X - EX))] <= exp(v^2 lambda^2 / 2)` at each grid point,
/// evaluating the moment generating function exactly over the atoms.
/// Comparison happens in log space so large `|lambda|` does not overflow.
pub fn lsg_check<F: Real>(atoms: &[(F, F)], v: F, lambda_grid: &[F]) -> Result<LsgOutcome<F>, BoundsError> {
    if atoms.is_empty() {
        return Err(BoundsError::BadDistribution("no atoms".into()));
    }
    if let Some(&(_, p)) = atoms.iter().find(|(_, p)| !(*p >= F::zero())) {
        return Err(BoundsError::BadDistribution(format!("negative probability {p}")));
    }
    let total = atoms.iter().fold(F::zero(), |acc, &(_, p)| acc + p);
    let tol = F::lit(1e-12).max(F::lit(16.0) * F::epsilon());
    if (total - F::one()).abs() > tol {
        return Err(BoundsError::BadDistribution(format!("probabilities sum to {total}")));
    }
    if let Some(&lam) = lambda_grid.iter().find(|&&lam| !(lam <= F::zero())) {
        return Err(BoundsError::BadGrid(lam.as_f64()));
    }
    let mean = atoms.iter().fold(F::zero(), |acc, &(x, p)| acc + x * p);
    let mut outcome = LsgOutcome { passed: true, max_violation: F::neg_infinity(), worst_lambda: F::zero() };
    for &lam in lambda_grid {
        let exps: Vec<F> =
            atoms.iter().filter(|(_, p)| *p > F::zero()).map(|&(x, p)| p.ln() + lam * (x - mean)).collect();
        let top = exps.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let log_mgf = top + exps.iter().fold(F::zero(), |acc, &e| acc + (e - top).exp()).ln();
        let log_bound = v * v * lam * lam / F::lit(2.0);
        let gap = log_mgf - log_bound;
        if gap > outcome.max_violation {
            outcome.max_violation = gap;
            outcome.worst_lambda = lam;
        }
        if gap > tol * F::one().max(log_bound) {
            outcome.passed = false;
        }
    }
    Ok(outcome)
}
