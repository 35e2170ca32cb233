//! Cascade click simulator and exact moments of the per-step observation
//! count.
//!
//! When an ordered list of items is shown, the user scans it top-down and
//! clicks the first attractive item. Items up to and including the click are
//! observed; everything after it is censored. With no click every item is
//! observed.

use num_traits::{FromPrimitive, Num};
use rand::distributions::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::Real;

/// Exact atom enumeration is capped at this arm length.
pub const MAX_EXACT_ARM: usize = 25;
/// Full `2^k` outcome enumeration is capped at this arm length.
pub const MAX_BRUTE_FORCE_ARM: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("arm of length {len} exceeds the enumeration cap {max}")]
    ArmTooLong { len: usize, max: usize },
    #[error("arm is empty")]
    EmptyArm,
    #[error("moment power must be 1 or 2, got {0}")]
    BadPower(u32),
}

/// Censored feedback of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadeFeedback {
    /// Zero-based position of the clicked item, `None` without a click.
    pub click: Option<usize>,
    /// Number of items whose outcome was observed.
    pub observed: usize,
}

impl CascadeFeedback {
    /// One-based click position as usually written in the literature.
    pub fn click_position(&self) -> Option<usize> {
        self.click.map(|p| p + 1)
    }
}

/// Identifies the random stream of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self { master_seed, trial_index }
    }

    /// Per-trial seed; a pure function of `(master_seed, trial_index)`.
    pub fn seed(&self) -> u64 {
        let z = splitmix64(self.master_seed ^ splitmix64(self.trial_index));
        splitmix64(z)
    }

    pub fn stream(&self) -> ChaCha8Rng {
        stream_from_seed(self.seed())
    }
}

/// Random stream used by every simulation in the crate.
pub fn stream_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Click probabilities of all ground items, prepared for fast sampling.
#[derive(Debug, Clone)]
pub struct ClickModel {
    items: Vec<Bernoulli>,
}

impl ClickModel {
    /// # Panics
    /// If a weight lies outside `[0, 1]`.
    pub fn new<F: Real>(weights: &[F]) -> Self {
        let items = weights.iter().map(|w| Bernoulli::new(w.as_f64()).expect("weight in [0, 1]")).collect();
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Shows `arm` (item indices, top first) to a cascading user.
    pub fn examine<R: Rng + ?Sized>(&self, arm: &[usize], rng: &mut R) -> CascadeFeedback {
        for (pos, &item) in arm.iter().enumerate() {
            if self.items[item].sample(rng) {
                return CascadeFeedback { click: Some(pos), observed: pos + 1 };
            }
        }
        CascadeFeedback { click: None, observed: arm.len() }
    }
}

/// One cascade step over weights given in display order.
pub fn cascade_step<F: Real, R: Rng + ?Sized>(weights_in_order: &[F], rng: &mut R) -> CascadeFeedback {
    let model = ClickModel::new(weights_in_order);
    let arm: Vec<usize> = (0..weights_in_order.len()).collect();
    model.examine(&arm, rng)
}

fn count<T: FromPrimitive>(n: usize) -> T {
    T::from_usize(n).expect("small integer representable")
}

/// Exact expected number of observed items when the weights are displayed
/// in the given order.
pub fn expected_observations<T>(weights_in_order: &[T]) -> T
where
    T: Num + Clone + FromPrimitive,
{
    let k = weights_in_order.len();
    let mut total = T::zero();
    let mut survive = T::one();
    for (i, w) in weights_in_order.iter().enumerate().take(k.saturating_sub(1)) {
        total = total + count::<T>(i + 1) * survive.clone() * w.clone();
        survive = survive * (T::one() - w.clone());
    }
    if k > 0 {
        total = total + count::<T>(k) * survive;
    }
    total
}

/// Distribution of the observation count as `(value, probability)` atoms,
/// `value` running over `1..=k`.
pub fn observation_distribution<T>(weights_in_order: &[T]) -> Result<Vec<(usize, T)>, EnvError>
where
    T: Num + Clone + FromPrimitive,
{
    let k = weights_in_order.len();
    if k == 0 {
        return Err(EnvError::EmptyArm);
    }
    if k > MAX_EXACT_ARM {
        return Err(EnvError::ArmTooLong { len: k, max: MAX_EXACT_ARM });
    }
    let mut atoms = Vec::with_capacity(k);
    let mut survive = T::one();
    for (j, w) in weights_in_order.iter().enumerate() {
        if j + 1 == k {
            atoms.push((k, survive.clone()));
        } else {
            atoms.push((j + 1, survive.clone() * w.clone()));
            survive = survive * (T::one() - w.clone());
        }
    }
    Ok(atoms)
}

/// `E[X^power]` of the observation count, `power` in `{1, 2}`.
pub fn observation_moment<T>(weights_in_order: &[T], power: u32) -> Result<T, EnvError>
where
    T: Num + Clone + FromPrimitive,
{
    if !(1..=2).contains(&power) {
        return Err(EnvError::BadPower(power));
    }
    let atoms = observation_distribution(weights_in_order)?;
    Ok(atoms.into_iter().fold(T::zero(), |acc, (x, p)| {
        let x: T = count(x);
        let xp = if power == 1 { x } else { x.clone() * x };
        acc + xp * p
    }))
}

/// Independent oracle: enumerates all `2^k` click outcome vectors.
pub mod oracle {
    use super::*;

    pub fn brute_force_moment<T>(weights_in_order: &[T], power: u32) -> Result<T, EnvError>
    where
        T: Num + Clone + FromPrimitive,
    {
        let k = weights_in_order.len();
        if k == 0 {
            return Err(EnvError::EmptyArm);
        }
        if k > MAX_BRUTE_FORCE_ARM {
            return Err(EnvError::ArmTooLong { len: k, max: MAX_BRUTE_FORCE_ARM });
        }
        if !(1..=2).contains(&power) {
            return Err(EnvError::BadPower(power));
        }
        let mut total = T::zero();
        for bits in 0u32..(1u32 << k) {
            let mut prob = T::one();
            for (i, w) in weights_in_order.iter().enumerate() {
                prob = prob * if bits >> i & 1 == 1 { w.clone() } else { T::one() - w.clone() };
            }
            let x = (0..k).find(|&i| bits >> i & 1 == 1).map_or(k, |i| i + 1);
            let xp = x.pow(power);
            total = total + count::<T>(xp) * prob;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force_moment;
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn forced_click_and_no_click() {
        let mut rng = stream_from_seed(1);
        for _ in 0..100 {
            let f = cascade_step(&[1.0, 0.3], &mut rng);
            assert_eq!(f, CascadeFeedback { click: Some(0), observed: 1 });
            assert_eq!(f.click_position(), Some(1));
            let f = cascade_step(&[0.0, 0.0, 0.0], &mut rng);
            assert_eq!(f, CascadeFeedback { click: None, observed: 3 });
        }
    }

    #[test]
    fn first_click_frequency() {
        let mut rng = stream_from_seed(2024);
        let model = ClickModel::new(&[0.5, 0.5]);
        let n = 100_000;
        let hits = (0..n).filter(|_| model.examine(&[0, 1], &mut rng).click == Some(0)).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn seeded_trace_is_reproducible() {
        let trace = |seed| {
            let mut rng = RngSpec::new(seed, 3).stream();
            (0..50).map(|_| cascade_step(&[0.5, 0.5], &mut rng).observed).collect::<Vec<_>>()
        };
        assert_eq!(trace(9), trace(9));
        assert_ne!(trace(9), trace(10));
        assert_ne!(RngSpec::new(9, 0).seed(), RngSpec::new(9, 1).seed());
    }

    #[test]
    fn expected_observation_examples() {
        assert!((expected_observations(&[0.5, 0.5]) - 1.5_f64).abs() < 1e-15);
        assert!((expected_observations(&[0.9, 0.1]) - 1.1_f64).abs() < 1e-15);
        assert!((expected_observations(&[0.1, 0.9]) - 1.9_f64).abs() < 1e-15);
        assert_eq!(expected_observations(&[0.37_f64]), 1.0);
        assert_eq!(expected_observations(&[q(1, 2), q(1, 2)]), q(3, 2));
    }

    #[test]
    fn moment_examples() {
        assert_eq!(observation_moment(&[q(1, 2), q(1, 2)], 2).unwrap(), q(5, 2));
        assert_eq!(observation_moment(&[1.0_f64; 7], 2).unwrap(), 1.0);
        assert_eq!(observation_moment(&[0.5_f64], 3), Err(EnvError::BadPower(3)));
        assert_eq!(observation_moment(&[0.5_f64; 26], 1), Err(EnvError::ArmTooLong { len: 26, max: 25 }));
        assert!(observation_moment(&[0.5_f64; 25], 1).is_ok());
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(brute_force_moment(&[q(1, 2), q(1, 2)], 1).unwrap(), q(3, 2));
        assert_eq!(brute_force_moment(&[q(9, 10), q(1, 10)], 1).unwrap(), q(11, 10));
        assert_eq!(brute_force_moment(&[q(3, 7)], 1).unwrap(), q(1, 1));
        assert_eq!(brute_force_moment(&[0.5_f64; 21], 1), Err(EnvError::ArmTooLong { len: 21, max: 20 }));
    }

    #[test]
    fn exact_rational_agreement() {
        // exact arithmetic: all three routes must coincide with no rounding
        let arms: Vec<Vec<BigRational>> =
            vec![vec![q(1, 3), q(2, 5), q(0, 1), q(7, 9)], vec![q(1, 1), q(1, 2)], vec![q(1, 10); 9]];
        for arm in arms {
            for p in 1..=2 {
                let brute = brute_force_moment(&arm, p).unwrap();
                assert_eq!(observation_moment(&arm, p).unwrap(), brute);
                if p == 1 {
                    assert_eq!(expected_observations(&arm), brute);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(w in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let total: f64 = observation_distribution(&w).unwrap().iter().map(|a| a.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn raising_a_weight_never_adds_observations(
            w in prop::collection::vec(0.0f64..=1.0, 1..10),
            pos in 0usize..10,
            bump in 0.0f64..1.0,
        ) {
            let pos = pos % w.len();
            let mut v = w.clone();
            v[pos] = (v[pos] + bump).min(1.0);
            prop_assert!(expected_observations(&v) <= expected_observations(&w) + 1e-12);
        }
    }
}
