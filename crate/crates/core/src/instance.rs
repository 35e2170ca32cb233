//! Problem instances and the gap/threshold quantities that depend only on
//! the instance and `(epsilon, delta)`.
//!
//! Internally every instance is kept in *canonical* order: weights sorted
//! nonincreasing, ties broken by the smaller user index. All analytic
//! formulas are written against that order; the index map translates
//! canonical positions back to the order the caller supplied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("weight vector is empty")]
    EmptyWeights,
    #[error("need at least two items, got {0}")]
    TooFewItems(usize),
    #[error("weight {value} of item {index} is outside [0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("list size K={k} must lie in [1, {l}]")]
    BadK { k: usize, l: usize },
    #[error("w(K) = w(K+1) = {0}: the set of K optimal items is not unique")]
    DegenerateBoundary(f64),
    #[error("risk delta={0} must lie in (0, 1)")]
    BadDelta(f64),
    #[error("tolerance epsilon={0} must be finite and nonnegative")]
    BadEpsilon(f64),
    #[error("adjusted gap must be positive, got {0}")]
    NonPositiveGap(f64),
    #[error("K equals L: there is no suboptimal item, gaps are undefined")]
    NoSuboptimalItems,
    #[error("invalid generator: {0}")]
    BadGenerator(String),
}

/// A validated, canonicalised instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<F> {
    weights: Vec<F>,
    original: Vec<usize>,
    rank: Vec<usize>,
    k: usize,
    epsilon: F,
    delta: F,
}

impl<F: Real> Instance<F> {
    /// Validates `weights` (in user order) and canonicalises them.
    pub fn new(weights: Vec<F>, k: usize, epsilon: F, delta: F) -> Result<Self, InstanceError> {
        if weights.is_empty() {
            return Err(InstanceError::EmptyWeights);
        }
        let l = weights.len();
        if l < 2 {
            return Err(InstanceError::TooFewItems(l));
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= F::zero() && w <= F::one()) {
                return Err(InstanceError::WeightOutOfRange { index, value: w.as_f64() });
            }
        }
        if k == 0 || k > l {
            return Err(InstanceError::BadK { k, l });
        }
        if !(delta > F::zero() && delta < F::one()) {
            return Err(InstanceError::BadDelta(delta.as_f64()));
        }
        if !(epsilon >= F::zero()) || !epsilon.is_finite() {
            return Err(InstanceError::BadEpsilon(epsilon.as_f64()));
        }

        let mut original: Vec<usize> = (0..l).collect();
        // stable: equal weights keep the smaller user index first
        original.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).expect("weights are finite"));
        let canonical: Vec<F> = original.iter().map(|&i| weights[i]).collect();
        if k < l && canonical[k - 1] <= canonical[k] {
            return Err(InstanceError::DegenerateBoundary(canonical[k].as_f64()));
        }
        let mut rank = vec![0; l];
        for (pos, &user) in original.iter().enumerate() {
            rank[user] = pos;
        }
        Ok(Self { weights: canonical, original, rank, k, epsilon, delta })
    }

    /// Canonical (nonincreasing) weights.
    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Weights in the order the caller supplied.
    pub fn user_weights(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.l()];
        for (pos, &user) in self.original.iter().enumerate() {
            out[user] = self.weights[pos];
        }
        out
    }

    /// `index_map()[c]` is the user index of canonical position `c`.
    pub fn index_map(&self) -> &[usize] {
        &self.original
    }

    /// Canonical position of the user item `user`.
    pub fn rank_of(&self, user: usize) -> usize {
        self.rank[user]
    }

    pub fn l(&self) -> usize {
        self.weights.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }

    pub fn delta(&self) -> F {
        self.delta
    }

    /// Largest weight `w*`.
    pub fn w_star(&self) -> F {
        self.weights[0]
    }

    /// Smallest weight `w'`.
    pub fn w_min(&self) -> F {
        self.weights[self.l() - 1]
    }

    /// Same instance with a different tolerance.
    pub fn with_epsilon(&self, epsilon: F) -> Result<Self, InstanceError> {
        Self::new(self.user_weights(), self.k, epsilon, self.delta)
    }

    /// Number of epsilon-optimal items, `K' = max{i : w(i) >= w(K) - eps}`.
    pub fn k_prime(&self) -> usize {
        let cut = self.weights[self.k - 1] - self.epsilon;
        self.weights.iter().take_while(|&&w| w >= cut).count()
    }

    /// Whether the user item `user` is epsilon-optimal.
    pub fn is_eps_optimal(&self, user: usize) -> bool {
        self.rank[user] < self.k_prime()
    }

    pub fn rho(&self) -> F {
        rho(self.delta, self.l()).expect("delta validated at construction")
    }

    /// Gap profile for this instance's own `delta`.
    pub fn gaps(&self) -> Result<GapProfile<F>, InstanceError> {
        let (l, k, eps) = (self.l(), self.k, self.epsilon);
        if k == l {
            return Err(InstanceError::NoSuboptimalItems);
        }
        let w = &self.weights;
        let k_prime = self.k_prime();
        let deltas: Vec<F> = (0..l).map(|i| if i < k { w[i] - w[k] } else { w[k - 1] - w[i] }).collect();
        let bar_deltas: Vec<F> = (0..l)
            .map(|i| {
                if i < k {
                    deltas[i] + eps
                } else if i < k_prime {
                    deltas[k - 1] - deltas[i] + eps
                } else {
                    deltas[i] - eps
                }
            })
            .collect();
        let mut sigma: Vec<usize> = (0..l).collect();
        sigma.sort_by(|&a, &b| bar_deltas[b].partial_cmp(&bar_deltas[a]).expect("finite gaps"));
        let thresholds = bar_deltas.iter().map(|&bd| threshold(bd, self.delta, l)).collect::<Result<Vec<_>, _>>()?;
        Ok(GapProfile { deltas, bar_deltas, k_prime, sigma, thresholds })
    }
}

/// Gaps, adjusted gaps, `K'`, the sorting permutation and per-item
/// observation thresholds. All vectors are indexed by canonical position.
#[derive(Debug, Clone, PartialEq)]
pub struct GapProfile<F> {
    pub deltas: Vec<F>,
    pub bar_deltas: Vec<F>,
    pub k_prime: usize,
    /// Canonical positions ordered by nonincreasing adjusted gap.
    pub sigma: Vec<usize>,
    pub thresholds: Vec<u64>,
}

impl<F: Real> GapProfile<F> {
    /// Threshold of the item ranked `m`-th by adjusted gap (1-based `m`).
    pub fn sorted_threshold(&self, m: usize) -> u64 {
        self.thresholds[self.sigma[m - 1]]
    }
}

/// `rho(delta) = sqrt(delta / (12 L))`.
pub fn rho<F: Real>(delta: F, l: usize) -> Result<F, InstanceError> {
    if !(delta > F::zero() && delta < F::one()) || l == 0 {
        return Err(InstanceError::BadDelta(delta.as_f64()));
    }
    Ok((delta / F::from_count(12 * l as u64)).sqrt())
}

/// Number of observations after which an item with adjusted gap
/// `bar_delta` is identified with high probability:
///
/// `1 + floor(216 / g^2 * ln((2 / rho) * log2(648 / (rho g^2))))`.
///
/// When the logarithm is not positive (only for gaps far larger than any
/// weight difference) the floor term is taken as zero.
pub fn threshold<F: Real>(bar_delta: F, delta: F, l: usize) -> Result<u64, InstanceError> {
    if !(bar_delta > F::zero()) {
        return Err(InstanceError::NonPositiveGap(bar_delta.as_f64()));
    }
    let rho = rho(delta, l)?;
    let g2 = bar_delta * bar_delta;
    let two = F::lit(2.0);
    let inner = (two / rho) * (F::lit(648.0) / (rho * g2)).log2();
    let body = F::lit(216.0) / g2 * inner.ln();
    if !(body > F::zero()) {
        return Ok(1);
    }
    // saturating: f64 -> u64 casts clamp at u64::MAX
    Ok(1u64.saturating_add(body.floor().as_f64() as u64))
}

/// How the item weights of an instance are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemSpec {
    /// Explicit weights in user order.
    Explicit(Vec<f64>),
    /// `k` items with weight `w_star`, the remaining `l - k` with `w_prime`.
    TwoProb { w_star: f64, w_prime: f64, l: usize },
    /// `l` weights linearly spaced from `w_max` down to `w_min`.
    Linspace { w_max: f64, w_min: f64, l: usize },
}

/// Serializable description of an instance, as read from configs and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub items: ItemSpec,
    pub k: usize,
    #[serde(default)]
    pub epsilon: f64,
    pub delta: f64,
}

impl InstanceSpec {
    pub fn two_prob(w_star: f64, w_prime: f64, k: usize, l: usize, delta: f64) -> Self {
        Self { items: ItemSpec::TwoProb { w_star, w_prime, l }, k, epsilon: 0.0, delta }
    }

    pub fn linspace(w_max: f64, w_min: f64, l: usize, k: usize, delta: f64) -> Self {
        Self { items: ItemSpec::Linspace { w_max, w_min, l }, k, epsilon: 0.0, delta }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Number of items described by the spec.
    pub fn l(&self) -> usize {
        match &self.items {
            ItemSpec::Explicit(w) => w.len(),
            ItemSpec::TwoProb { l, .. } | ItemSpec::Linspace { l, .. } => *l,
        }
    }

    /// Weights in user order.
    pub fn weights(&self) -> Result<Vec<f64>, InstanceError> {
        match self.items {
            ItemSpec::Explicit(ref w) => Ok(w.clone()),
            ItemSpec::TwoProb { w_star, w_prime, l } => {
                if !(0.0 < w_prime && w_prime < w_star && w_star <= 1.0) {
                    return Err(InstanceError::BadGenerator(format!(
                        "two-probability weights need 0 < w' < w* <= 1, got w*={w_star}, w'={w_prime}"
                    )));
                }
                if self.k > l {
                    return Err(InstanceError::BadK { k: self.k, l });
                }
                Ok((0..l).map(|i| if i < self.k { w_star } else { w_prime }).collect())
            }
            ItemSpec::Linspace { w_max, w_min, l } => {
                if l < 2 {
                    return Err(InstanceError::TooFewItems(l));
                }
                let step = (w_min - w_max) / (l - 1) as f64;
                Ok((0..l).map(|i| w_max + step * i as f64).collect())
            }
        }
    }

    pub fn build<F: Real>(&self) -> Result<Instance<F>, InstanceError> {
        let weights = self.weights()?.into_iter().map(F::lit).collect();
        Instance::new(weights, self.k, F::lit(self.epsilon), F::lit(self.delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(w: &[f64], k: usize, eps: f64) -> Instance<f64> {
        Instance::new(w.to_vec(), k, eps, 0.1).unwrap()
    }

    #[test]
    fn canonicalises_with_index_map() {
        let i = inst(&[0.3, 0.9, 0.5], 1, 0.0);
        assert_eq!(i.weights(), &[0.9, 0.5, 0.3]);
        let one_based: Vec<usize> = i.index_map().iter().map(|x| x + 1).collect();
        assert_eq!(one_based, vec![2, 3, 1]);
        assert_eq!(i.user_weights(), vec![0.3, 0.9, 0.5]);
        assert_eq!(i.rank_of(1), 0);
    }

    #[test]
    fn rejects_degenerate_boundary() {
        let e = Instance::new(vec![0.5, 0.5], 1, 0.0, 0.1).unwrap_err();
        assert_eq!(e, InstanceError::DegenerateBoundary(0.5));
        assert!(Instance::new(vec![0.9, 0.5], 2, 0.0, 0.1).is_ok());
    }

    #[test]
    fn validation_errors() {
        assert_eq!(Instance::<f64>::new(vec![], 1, 0.0, 0.1), Err(InstanceError::EmptyWeights));
        assert_eq!(Instance::new(vec![0.4], 1, 0.0, 0.1), Err(InstanceError::TooFewItems(1)));
        assert!(matches!(
            Instance::new(vec![0.4, 1.2], 1, 0.0, 0.1),
            Err(InstanceError::WeightOutOfRange { index: 1, .. })
        ));
        assert_eq!(Instance::new(vec![0.4, 0.2], 1, 0.0, 1.0), Err(InstanceError::BadDelta(1.0)));
        assert_eq!(Instance::new(vec![0.4, 0.2], 1, 0.0, 0.0), Err(InstanceError::BadDelta(0.0)));
        assert_eq!(Instance::new(vec![0.4, 0.2], 3, 0.0, 0.1), Err(InstanceError::BadK { k: 3, l: 2 }));
        assert!(matches!(Instance::new(vec![0.4, 0.2], 1, -0.1, 0.1), Err(InstanceError::BadEpsilon(_))));
    }

    #[test]
    fn gaps_exact_identification() {
        let g = inst(&[0.9, 0.5, 0.3], 1, 0.0).gaps().unwrap();
        assert_eq!(g.k_prime, 1);
        let expect = [0.4, 0.4, 0.6];
        for (i, e) in expect.iter().enumerate() {
            assert!((g.deltas[i] - e).abs() < 1e-12);
            assert!((g.bar_deltas[i] - e).abs() < 1e-12);
        }
        // largest adjusted gap first, ties by smaller index
        assert_eq!(g.sigma, vec![2, 0, 1]);
    }

    #[test]
    fn gaps_with_tolerance() {
        let g = inst(&[0.9, 0.5, 0.3], 1, 0.25).gaps().unwrap();
        assert_eq!(g.k_prime, 1);
        for (got, want) in g.bar_deltas.iter().zip([0.65, 0.15, 0.35]) {
            assert!((got - want).abs() < 1e-12);
        }
        let g = inst(&[0.9, 0.5, 0.3], 1, 0.45).gaps().unwrap();
        assert_eq!(g.k_prime, 2);
        assert!((g.bar_deltas[1] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn gaps_refused_when_k_equals_l() {
        assert_eq!(inst(&[0.9, 0.5], 2, 0.0).gaps(), Err(InstanceError::NoSuboptimalItems));
    }

    #[test]
    fn rho_values() {
        assert!((rho(0.12, 1).unwrap() - 0.1_f64).abs() < 1e-15);
        assert!((rho(0.1, 12).unwrap() - 0.026_352_313_834_736_494_f64).abs() < 1e-15);
        assert!(rho(1.5, 3).is_err());
        let mut prev = f64::INFINITY;
        for l in 1..200 {
            let r = rho(0.1, l).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn threshold_values() {
        // frozen from a 50-digit evaluation
        assert_eq!(threshold(0.2, 0.1, 8).unwrap(), 38166);
        assert_eq!(threshold(0.6, 0.1, 3).unwrap(), 3809);
        assert_eq!(threshold(0.4, 0.1, 3).unwrap(), 8672);
        assert!(matches!(threshold(0.0, 0.1, 8), Err(InstanceError::NonPositiveGap(_))));
        assert!(matches!(threshold(-0.1, 0.1, 8), Err(InstanceError::NonPositiveGap(_))));
    }

    #[test]
    fn threshold_unit_log_term() {
        // pick the gap that makes the log argument exactly e
        let (delta, l) = (0.1_f64, 8);
        let r = rho(delta, l).unwrap();
        let g2 = 648.0 / (r * 2f64.powf(std::f64::consts::E * r / 2.0));
        let g = g2.sqrt();
        assert_eq!(threshold(g, delta, l).unwrap(), 1 + (216.0 / g2).floor() as u64);
    }

    #[test]
    fn threshold_f32_agrees_roughly() {
        let a = threshold(0.2f32, 0.1f32, 8).unwrap() as f64;
        assert!((a - 38166.0).abs() / 38166.0 < 1e-4);
    }

    #[test]
    fn generators() {
        let s = InstanceSpec::two_prob(0.8, 0.2, 2, 4, 0.1);
        assert_eq!(s.weights().unwrap(), vec![0.8, 0.8, 0.2, 0.2]);
        let s = InstanceSpec::linspace(0.9, 0.15, 16, 4, 0.1);
        let w = s.weights().unwrap();
        assert_eq!(w.len(), 16);
        assert!((w[0] - 0.9).abs() < 1e-12 && (w[15] - 0.15).abs() < 1e-12);
        assert!(InstanceSpec::two_prob(0.2, 0.8, 1, 3, 0.1).weights().is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, usize, f64)> {
        (2usize..12).prop_flat_map(|l| (prop::collection::vec(0.0f64..=1.0, l), 1..l, 0.0f64..0.5)).prop_filter(
            "strict boundary",
            |(w, k, _)| {
                let mut s = w.clone();
                s.sort_by(|a, b| b.partial_cmp(a).unwrap());
                s[*k - 1] > s[*k]
            },
        )
    }

    proptest! {
        #[test]
        fn adjusted_gaps_positive_and_sorted((w, k, eps) in arb_instance()) {
            let i = Instance::new(w, k, eps, 0.1).unwrap();
            let g = i.gaps().unwrap();
            prop_assert!(g.bar_deltas.iter().all(|&d| d > 0.0));
            prop_assert!(k <= g.k_prime && g.k_prime <= i.l());
            let mut seen = g.sigma.clone();
            seen.sort();
            prop_assert_eq!(seen, (0..i.l()).collect::<Vec<_>>());
            for pair in g.sigma.windows(2) {
                prop_assert!(g.bar_deltas[pair[0]] >= g.bar_deltas[pair[1]]);
            }
            for m in 2..=i.l() {
                prop_assert!(g.sorted_threshold(m - 1) <= g.sorted_threshold(m));
            }
        }

        #[test]
        fn zero_tolerance_gives_plain_gaps((w, k, _) in arb_instance()) {
            let g = Instance::new(w, k, 0.0, 0.1).unwrap().gaps().unwrap();
            prop_assert_eq!(g.k_prime, k);
            prop_assert_eq!(&g.bar_deltas, &g.deltas);
        }

        #[test]
        fn threshold_monotone(a in 0.01f64..1.0, b in 0.01f64..1.0, l in 2usize..100, delta in 0.01f64..0.9) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(threshold(hi, delta, l).unwrap() <= threshold(lo, delta, l).unwrap());
            prop_assert!(threshold(a, delta, l).unwrap() <= threshold(a, delta, l + 1).unwrap());
        }
    }
}
