//! Outcome generation and semi-bandit feedback.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::oracle::SuperArm;

/// True per-arm means driving an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MeanVector(Vec<f64>);

impl MeanVector {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidParameter("mean vector is empty".into()));
        }
        for &mu in &means {
            check_probability("mean", mu)?;
        }
        Ok(Self(means))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for MeanVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MeanVector> for Vec<f64> {
    fn from(m: MeanVector) -> Self {
        m.0
    }
}

impl std::ops::Index<usize> for MeanVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One realised outcome vector `X(t)`.
pub type OutcomeVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    /// Each arm is an independent Bernoulli with its own mean.
    IndependentBernoulli,
    /// One shared uniform draw `u` per step; arm `i` fires iff `mu_i > u`.
    CorrelatedThreshold,
    /// `X_i = mu_i` on every step.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub kind: EnvironmentKind,
    pub means: MeanVector,
}

impl EnvironmentModel {
    pub fn new(kind: EnvironmentKind, means: MeanVector) -> Self {
        Self { kind, means }
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn draw_outcomes<R: Rng + ?Sized>(&self, rng: &mut R) -> OutcomeVector {
        let mut out = vec![0.0; self.arms()];
        self.draw_into(rng, &mut out);
        out
    }

    /// Fills `out` with a fresh outcome vector. `out` must have one slot per arm.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.arms());
        let means = self.means.as_slice();
        match self.kind {
            EnvironmentKind::IndependentBernoulli => {
                for (x, &mu) in out.iter_mut().zip(means) {
                    let u: f64 = rng.random();
                    *x = if u < mu { 1.0 } else { 0.0 };
                }
            }
            EnvironmentKind::CorrelatedThreshold => {
                let threshold: f64 = rng.random();
                threshold_outcomes(means, threshold, out);
            }
            EnvironmentKind::Deterministic => out.copy_from_slice(means),
        }
    }
}

/// Correlated-threshold rule for a given shared draw: `X_i = 1` iff `mu_i > threshold`.
pub fn threshold_outcomes(means: &[f64], threshold: f64, out: &mut [f64]) {
    for (x, &mu) in out.iter_mut().zip(means) {
        *x = if mu > threshold { 1.0 } else { 0.0 };
    }
}

/// Semi-bandit feedback: the outcomes of exactly the played arms, in arm order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Feedback {
    pub entries: Vec<(usize, f64)>,
}

impl Feedback {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }
}

/// Projects an outcome vector onto a super arm.
pub fn observe(arm: &SuperArm, outcomes: &[f64]) -> Result<Feedback> {
    if arm.is_empty() {
        return Err(Error::InvalidParameter("cannot observe an empty super arm".into()));
    }
    let entries = arm
        .iter()
        .map(|i| {
            outcomes
                .get(i)
                .map(|&x| (i, x))
                .ok_or(Error::ArmOutOfRange { index: i, arms: outcomes.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Feedback { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `r(S, mu) = sum of mu_i over S`.
    LinearSum,
    /// `r(S, mu) = product of mu_i over S` (exact under independent arms).
    Product,
}

/// Whether the oracle maximises a reward or minimises a cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Max,
    Min,
}

impl Sense {
    /// `true` when `candidate` is strictly better than `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Sense::Max => candidate > incumbent,
            Sense::Min => candidate < incumbent,
        }
    }
}

/// Expected reward of `arm` under parameters `mu` (any vector indexed by arm).
pub fn expected_reward(arm: &SuperArm, mu: &[f64], kind: RewardKind) -> f64 {
    match kind {
        RewardKind::LinearSum => arm.iter().map(|i| mu[i]).sum(),
        RewardKind::Product => arm.iter().map(|i| mu[i]).product(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arm(ix: &[usize]) -> SuperArm {
        SuperArm::new(ix.to_vec())
    }

    #[test]
    fn correlated_threshold_example() {
        let mut out = [0.0; 2];
        threshold_outcomes(&[0.3, 0.7], 0.5, &mut out);
        assert_eq!(out, [0.0, 1.0]);
        // Ties resolve to 0.
        threshold_outcomes(&[0.5, 0.7], 0.5, &mut out);
        assert_eq!(out, [0.0, 1.0]);
    }

    #[test]
    fn all_ones_bernoulli_is_deterministic() {
        let env = EnvironmentModel::new(
            EnvironmentKind::IndependentBernoulli,
            MeanVector::new(vec![1.0; 5]).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(env.draw_outcomes(&mut rng), vec![1.0; 5]);
        }
    }

    #[test]
    fn deterministic_environment_copies_means() {
        let env = EnvironmentModel::new(
            EnvironmentKind::Deterministic,
            MeanVector::new(vec![1.0, 0.5]).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.draw_outcomes(&mut rng), vec![1.0, 0.5]);
    }

    fn empirical_means(kind: EnvironmentKind, means: &[f64], draws: usize) -> Vec<f64> {
        let env = EnvironmentModel::new(kind, MeanVector::new(means.to_vec()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut acc = vec![0.0; means.len()];
        let mut buf = vec![0.0; means.len()];
        for _ in 0..draws {
            env.draw_into(&mut rng, &mut buf);
            for (a, x) in acc.iter_mut().zip(&buf) {
                *a += x;
            }
        }
        acc.iter().map(|a| a / draws as f64).collect()
    }

    #[test]
    fn marginal_means_match() {
        let means = [0.05, 0.3, 0.5, 0.77, 0.99];
        let n = 100_000;
        for kind in [EnvironmentKind::IndependentBernoulli, EnvironmentKind::CorrelatedThreshold] {
            let emp = empirical_means(kind, &means, n);
            for (&e, &mu) in emp.iter().zip(&means) {
                let se = (mu * (1.0 - mu) / n as f64).sqrt();
                assert!((e - mu).abs() < 0.01, "{kind:?}: {e} vs {mu}");
                assert!((e - mu).abs() <= 3.0 * se, "{kind:?}: {e} vs {mu} (3se = {})", 3.0 * se);
            }
        }
    }

    #[test]
    fn correlated_outcomes_are_monotone_in_means() {
        let means = [0.2, 0.9, 0.5, 0.5, 0.1];
        let env = EnvironmentModel::new(
            EnvironmentKind::CorrelatedThreshold,
            MeanVector::new(means.to_vec()).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = env.draw_outcomes(&mut rng);
            for i in 0..means.len() {
                for j in 0..means.len() {
                    if means[i] >= means[j] {
                        assert!(x[i] >= x[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn observe_projects() {
        let x = [0.1, 0.5, 0.9];
        assert_eq!(observe(&arm(&[0, 2]), &x).unwrap().entries, vec![(0, 0.1), (2, 0.9)]);
        assert_eq!(observe(&arm(&[1]), &[1.0, 0.0]).unwrap().entries, vec![(1, 0.0)]);
        let full = observe(&arm(&[0, 1, 2]), &x).unwrap();
        assert_eq!(full.len(), 3);
        assert!(matches!(
            observe(&arm(&[3]), &x),
            Err(Error::ArmOutOfRange { index: 3, arms: 3 })
        ));
        assert!(observe(&arm(&[]), &x).is_err());
    }

    #[test]
    fn expected_reward_examples() {
        assert!((expected_reward(&arm(&[0, 1]), &[0.2, 0.3, 0.9], RewardKind::LinearSum) - 0.5).abs() < 1e-15);
        assert_eq!(expected_reward(&arm(&[0, 1]), &[0.5, 0.5], RewardKind::Product), 0.25);
        assert_eq!(expected_reward(&arm(&[0, 1, 2, 3]), &[1.0; 5], RewardKind::Product), 1.0);
    }

    #[test]
    fn mean_vector_validation() {
        assert!(MeanVector::new(vec![]).is_err());
        assert!(MeanVector::new(vec![0.5, 1.2]).is_err());
        let parsed: std::result::Result<MeanVector, _> = serde_json::from_str("[0.1, -0.5]");
        assert!(parsed.is_err());
    }
}
