//! Online policies sharing one step contract: pick a super arm through the
//! oracle, then absorb the semi-bandit feedback.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Feedback, Sense};
use crate::error::{check_probability, Error, Result};
use crate::mathutil::{beta_sample, kl_lcb_unchecked, kl_ucb_unchecked, BetaParams};
use crate::oracle::{Oracle, SuperArm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "CTS")]
    Cts,
    #[serde(rename = "CUCB")]
    Cucb,
    #[serde(rename = "CUCB-m")]
    CucbM,
    #[serde(rename = "C-KL-UCB")]
    CKlUcb,
    #[serde(rename = "C-KL-UCB-m")]
    CKlUcbM,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Cts,
        PolicyKind::Cucb,
        PolicyKind::CucbM,
        PolicyKind::CKlUcb,
        PolicyKind::CKlUcbM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Cts => "CTS",
            PolicyKind::Cucb => "CUCB",
            PolicyKind::CucbM => "CUCB-m",
            PolicyKind::CKlUcb => "C-KL-UCB",
            PolicyKind::CKlUcbM => "C-KL-UCB-m",
        }
    }

    pub fn is_ucb_family(self) -> bool {
        self != PolicyKind::Cts
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown policy `{s}`")))
    }
}

/// The step contract every policy implements. Policies only see the oracle
/// through [`Oracle::solve`].
pub trait Policy {
    fn select<R: Rng + ?Sized>(&mut self, oracle: &Oracle, rng: &mut R) -> Result<SuperArm>;
    fn update<R: Rng + ?Sized>(&mut self, feedback: &Feedback, rng: &mut R) -> Result<()>;
}

/// Per-arm Beta posteriors for combinatorial Thompson sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct CtsState {
    pub params: Vec<BetaParams>,
    theta: Vec<f64>,
}

impl CtsState {
    pub fn new(arms: usize) -> Self {
        Self { params: vec![BetaParams::UNIFORM; arms], theta: vec![0.0; arms] }
    }

    pub fn from_params(params: Vec<BetaParams>) -> Self {
        let arms = params.len();
        Self { params, theta: vec![0.0; arms] }
    }

    /// The most recent sample vector drawn by [`cts_select`].
    pub fn last_sample(&self) -> &[f64] {
        &self.theta
    }
}

/// Samples `theta_i ~ Beta(a_i, b_i)` for every arm (in index order) and plays
/// `oracle(theta)`.
pub fn cts_select<R: Rng + ?Sized>(state: &mut CtsState, oracle: &Oracle, rng: &mut R) -> Result<SuperArm> {
    for (t, &p) in state.theta.iter_mut().zip(&state.params) {
        *t = beta_sample(p, rng);
    }
    oracle.solve(&state.theta)
}

/// Bernoulli-rounds each observation and folds it into the matching posterior.
pub fn cts_update<R: Rng + ?Sized>(state: &mut CtsState, feedback: &Feedback, rng: &mut R) -> Result<()> {
    let arms = state.params.len();
    for (i, x) in feedback.iter() {
        check_probability("observation", x)?;
        let p = state.params.get_mut(i).ok_or(Error::ArmOutOfRange { index: i, arms })?;
        let u: f64 = rng.random();
        p.observe(u < x);
    }
    Ok(())
}

/// Sufficient statistics for the UCB family.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    pub pulls: Vec<u64>,
    pub sums: Vec<f64>,
    /// Completed steps; the step being decided is `t + 1`.
    pub t: u64,
    index: Vec<f64>,
}

impl UcbState {
    pub fn new(arms: usize) -> Self {
        Self { pulls: vec![0; arms], sums: vec![0.0; arms], t: 0, index: vec![0.0; arms] }
    }

    pub fn empirical_mean(&self, arm: usize) -> Option<f64> {
        match self.pulls[arm] {
            0 => None,
            n => Some((self.sums[arm] / n as f64).clamp(0.0, 1.0)),
        }
    }

    /// Index vector computed by the most recent [`ucb_select`].
    pub fn last_index(&self) -> &[f64] {
        &self.index
    }
}

/// Exploration budget `f(t)` for the KL kinds, given `ln t`.
fn kl_exploration(kind: PolicyKind, ln_t: f64) -> f64 {
    match kind {
        PolicyKind::CKlUcb => ln_t + 2.0 * ln_t.ln().max(0.0),
        _ => ln_t,
    }
}

/// Per-arm optimistic index given `ln t` directly.
pub fn ucb_index_with_log(kind: PolicyKind, mu_hat: f64, pulls: u64, ln_t: f64, sense: Sense) -> f64 {
    if pulls == 0 {
        return match sense {
            Sense::Max => 1.0,
            Sense::Min => 0.0,
        };
    }
    let n = pulls as f64;
    let radius = |scale: f64| (scale * ln_t / n).sqrt();
    let signed = |rad: f64| match sense {
        Sense::Max => (mu_hat + rad).clamp(0.0, 1.0),
        Sense::Min => (mu_hat - rad).clamp(0.0, 1.0),
    };
    match kind {
        PolicyKind::Cucb => signed(radius(1.5)),
        PolicyKind::CucbM => signed(radius(0.5)),
        PolicyKind::CKlUcb | PolicyKind::CKlUcbM => {
            let f = kl_exploration(kind, ln_t);
            match sense {
                Sense::Max => kl_ucb_unchecked(mu_hat, pulls, f),
                Sense::Min => kl_lcb_unchecked(mu_hat, pulls, f),
            }
        }
        PolicyKind::Cts => mu_hat,
    }
}

/// Per-arm optimistic index at step `t >= 1`.
pub fn ucb_index(kind: PolicyKind, mu_hat: f64, pulls: u64, t: u64, sense: Sense) -> f64 {
    ucb_index_with_log(kind, mu_hat, pulls, (t.max(1) as f64).ln(), sense)
}

pub fn ucb_select(state: &mut UcbState, kind: PolicyKind, oracle: &Oracle, sense: Sense) -> Result<SuperArm> {
    if !kind.is_ucb_family() {
        return Err(Error::InvalidParameter("CTS is not a UCB-family policy".into()));
    }
    let ln_t = ((state.t + 1) as f64).ln();
    for arm in 0..state.pulls.len() {
        let mu = state.empirical_mean(arm).unwrap_or(0.0);
        state.index[arm] = ucb_index_with_log(kind, mu, state.pulls[arm], ln_t, sense);
    }
    oracle.solve(&state.index)
}

pub fn ucb_update(state: &mut UcbState, feedback: &Feedback) -> Result<()> {
    let arms = state.pulls.len();
    for (i, x) in feedback.iter() {
        check_probability("observation", x)?;
        if i >= arms {
            return Err(Error::ArmOutOfRange { index: i, arms });
        }
        state.pulls[i] += 1;
        state.sums[i] += x;
    }
    state.t += 1;
    Ok(())
}

/// A runnable policy of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState {
    Cts(CtsState),
    Ucb { kind: PolicyKind, sense: Sense, state: UcbState },
}

impl PolicyState {
    pub fn new(kind: PolicyKind, arms: usize, sense: Sense) -> Self {
        match kind {
            PolicyKind::Cts => PolicyState::Cts(CtsState::new(arms)),
            _ => PolicyState::Ucb { kind, sense, state: UcbState::new(arms) },
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyState::Cts(_) => PolicyKind::Cts,
            PolicyState::Ucb { kind, .. } => *kind,
        }
    }
}

impl Policy for PolicyState {
    fn select<R: Rng + ?Sized>(&mut self, oracle: &Oracle, rng: &mut R) -> Result<SuperArm> {
        match self {
            PolicyState::Cts(s) => cts_select(s, oracle, rng),
            PolicyState::Ucb { kind, sense, state } => ucb_select(state, *kind, oracle, *sense),
        }
    }

    fn update<R: Rng + ?Sized>(&mut self, feedback: &Feedback, rng: &mut R) -> Result<()> {
        match self {
            PolicyState::Cts(s) => cts_update(s, feedback, rng),
            PolicyState::Ucb { state, .. } => ucb_update(state, feedback),
        }
    }
}

/// Always plays the same super arm. Handy as a reference in tests and checks.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPolicy(pub SuperArm);

impl Policy for FixedPolicy {
    fn select<R: Rng + ?Sized>(&mut self, _oracle: &Oracle, _rng: &mut R) -> Result<SuperArm> {
        Ok(self.0.clone())
    }

    fn update<R: Rng + ?Sized>(&mut self, _feedback: &Feedback, _rng: &mut R) -> Result<()> {
        Ok(())
    }
}
