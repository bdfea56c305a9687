//! Scalar probability primitives shared by the policies and the verification
//! suites.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Stand-in for `+inf` in KL computations. Any finite exploration budget
/// compares strictly below it, and it never produces NaN downstream.
pub const KL_INFINITY: f64 = f64::MAX;

/// Absolute width at which KL index bisection stops.
pub const KL_INDEX_TOLERANCE: f64 = 1e-9;

/// Hard cap on bisection steps for the KL indices.
pub const KL_INDEX_MAX_ITERATIONS: usize = 64;

/// Parameters of a Beta posterior with integer counts.
///
/// Starting from the uniform prior `Beta(1, 1)`, every Bernoulli observation
/// increments exactly one of the two counts, so `a + b - 2` is the number of
/// observations absorbed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: u64,
    pub b: u64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams { a: 1, b: 1 };

    pub fn new(a: u64, b: u64) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::InvalidParameter(format!(
                "Beta parameters must be >= 1, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// Number of observations absorbed since the uniform prior.
    pub fn observations(&self) -> u64 {
        self.a + self.b - 2
    }

    /// Empirical mean `(a - 1) / N`, or `None` before the first observation.
    pub fn empirical_mean(&self) -> Option<f64> {
        match self.observations() {
            0 => None,
            n => Some((self.a - 1) as f64 / n as f64),
        }
    }

    /// Absorbs one Bernoulli observation.
    pub fn observe(&mut self, success: bool) {
        if success {
            self.a += 1;
        } else {
            self.b += 1;
        }
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        Self::UNIFORM
    }
}

/// Bernoulli KL divergence `KL(p, q)`.
///
/// Uses `0 * log(0 / x) = 0`; returns [`KL_INFINITY`] when `q` sits on the
/// boundary and differs from `p`.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    Ok(kl_unchecked(p, q))
}

#[inline]
pub(crate) fn kl_unchecked(p: f64, q: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return KL_INFINITY;
    }
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    kl.max(0.0)
}

fn check_index_inputs(mu_hat: f64, n: u64, exploration: f64) -> Result<()> {
    check_probability("mu_hat", mu_hat)?;
    if n == 0 {
        return Err(Error::InvalidParameter("KL index needs n >= 1".into()));
    }
    if !(exploration >= 0.0 && exploration.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "exploration budget must be finite and nonnegative, got {exploration}"
        )));
    }
    Ok(())
}

/// Upper KL confidence index: the largest `q >= mu_hat` with
/// `n * KL(mu_hat, q) <= exploration`.
pub fn kl_ucb_index(mu_hat: f64, n: u64, exploration: f64) -> Result<f64> {
    check_index_inputs(mu_hat, n, exploration)?;
    Ok(kl_ucb_unchecked(mu_hat, n, exploration))
}

pub(crate) fn kl_ucb_unchecked(mu_hat: f64, n: u64, exploration: f64) -> f64 {
    let budget = exploration / n as f64;
    if budget <= 0.0 || mu_hat >= 1.0 {
        return mu_hat;
    }
    // `lo` always satisfies the constraint, `hi` never does: past the Pinsker
    // radius KL(p, q) >= 2 (q - p)^2 exceeds the budget, and KL(p, 1) is infinite.
    let (mut lo, mut hi) = (mu_hat, (mu_hat + (0.5 * budget).sqrt() + 1e-12).min(1.0));
    for _ in 0..KL_INDEX_MAX_ITERATIONS {
        if hi - lo < KL_INDEX_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if kl_unchecked(mu_hat, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Lower KL confidence index: the smallest `q <= mu_hat` with
/// `n * KL(mu_hat, q) <= exploration`.
pub fn kl_lcb_index(mu_hat: f64, n: u64, exploration: f64) -> Result<f64> {
    check_index_inputs(mu_hat, n, exploration)?;
    Ok(kl_lcb_unchecked(mu_hat, n, exploration))
}

pub(crate) fn kl_lcb_unchecked(mu_hat: f64, n: u64, exploration: f64) -> f64 {
    let budget = exploration / n as f64;
    if budget <= 0.0 || mu_hat <= 0.0 {
        return mu_hat;
    }
    let (mut lo, mut hi) = ((mu_hat - (0.5 * budget).sqrt() - 1e-12).max(0.0), mu_hat);
    for _ in 0..KL_INDEX_MAX_ITERATIONS {
        if hi - lo < KL_INDEX_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if kl_unchecked(mu_hat, mid) <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Marsaglia–Tsang Gamma(shape, 1) sampler, valid for `shape >= 1`.
fn gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draws from `Beta(a, b)` as `G_a / (G_a + G_b)` with independent Gamma draws.
pub fn beta_sample<R: Rng + ?Sized>(params: BetaParams, rng: &mut R) -> f64 {
    let x = gamma_sample(params.a as f64, rng);
    let y = gamma_sample(params.b as f64, rng);
    x / (x + y)
}

/// Binomial CDF `P[Bin(n, p) <= k]`.
pub fn binomial_cdf(n: u64, p: f64, k: i64) -> Result<f64> {
    check_probability("p", p)?;
    if k < 0 {
        return Ok(0.0);
    }
    let k = k as u64;
    if k >= n {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(1.0);
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let q = 1.0 - p;
    let mut total = 0.0;
    if n <= 60 {
        let mut coeff = 1.0_f64;
        for j in 0..=k {
            total += coeff * p.powi(j as i32) * q.powi((n - j) as i32);
            coeff = coeff * (n - j) as f64 / (j + 1) as f64;
        }
    } else {
        let (ln_p, ln_q) = (p.ln(), q.ln());
        let mut ln_coeff = 0.0_f64;
        for j in 0..=k {
            total += (ln_coeff + j as f64 * ln_p + (n - j) as f64 * ln_q).exp();
            ln_coeff += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Beta CDF for integer parameters via `F_{a,b}(x) = 1 - Bin_{a+b-1,x}(a-1)`.
pub fn beta_cdf(params: BetaParams, x: f64) -> Result<f64> {
    check_probability("x", x)?;
    BetaParams::new(params.a, params.b)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let tail = binomial_cdf(params.a + params.b - 1, x, params.a as i64 - 1)?;
    Ok((1.0 - tail).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Grid-scan oracle for the KL indices: finest grid point satisfying the
    /// constraint.
    fn grid_index(mu_hat: f64, n: u64, exploration: f64, upper: bool) -> f64 {
        let steps = 1_000_000;
        let budget = exploration / n as f64;
        let mut best = mu_hat;
        for i in 0..=steps {
            let q = if upper {
                mu_hat + (1.0 - mu_hat) * i as f64 / steps as f64
            } else {
                mu_hat - mu_hat * i as f64 / steps as f64
            };
            let inside = if q <= 0.0 || q >= 1.0 {
                q == mu_hat
            } else {
                let kl = mu_hat * (mu_hat / q).ln()
                    + (1.0 - mu_hat) * ((1.0 - mu_hat) / (1.0 - q)).ln();
                kl <= budget
            };
            if inside {
                best = q;
            } else {
                break;
            }
        }
        best
    }

    #[test]
    fn kl_examples() {
        assert_eq!(bernoulli_kl(0.5, 0.5).unwrap(), 0.0);
        let expected = -(0.6_f64).ln();
        assert!((bernoulli_kl(0.0, 0.4).unwrap() - expected).abs() < 1e-15);
        // 0.1 ln(0.2) + 0.9 ln(1.8)
        assert!((bernoulli_kl(0.1, 0.5).unwrap() - 0.368_064_207_168_497).abs() < 1e-12);
    }

    #[test]
    fn kl_boundaries_and_errors() {
        assert_eq!(bernoulli_kl(0.3, 0.0).unwrap(), KL_INFINITY);
        assert_eq!(bernoulli_kl(0.3, 1.0).unwrap(), KL_INFINITY);
        assert_eq!(bernoulli_kl(1.0, 1.0).unwrap(), 0.0);
        assert!(bernoulli_kl(1.0, 0.5).unwrap().is_finite());
        assert!(bernoulli_kl(-0.1, 0.5).is_err());
        assert!(bernoulli_kl(0.5, 1.5).is_err());
        assert!(bernoulli_kl(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn kl_ucb_examples() {
        assert_eq!(kl_ucb_index(0.7, 5, 0.0).unwrap(), 0.7);
        assert_eq!(kl_ucb_index(1.0, 3, 2.0).unwrap(), 1.0);
        let idx = kl_ucb_index(0.5, 10, 1.0).unwrap();
        let oracle = grid_index(0.5, 10, 1.0, true);
        assert!((idx - oracle).abs() < 2e-6, "{idx} vs grid {oracle}");
        assert!((idx - 0.7128).abs() < 1e-4);
    }

    #[test]
    fn kl_lcb_examples() {
        assert_eq!(kl_lcb_index(0.7, 5, 0.0).unwrap(), 0.7);
        assert_eq!(kl_lcb_index(0.0, 3, 2.0).unwrap(), 0.0);
        let idx = kl_lcb_index(0.5, 10, 1.0).unwrap();
        let oracle = grid_index(0.5, 10, 1.0, false);
        assert!((idx - oracle).abs() < 2e-6, "{idx} vs grid {oracle}");
        assert!((idx - 0.2872).abs() < 1e-4);
        let upper = kl_ucb_index(0.5, 10, 1.0).unwrap();
        assert!((idx - (1.0 - upper)).abs() < 1e-8);
    }

    #[test]
    fn kl_index_rejects_bad_inputs() {
        assert!(kl_ucb_index(0.5, 0, 1.0).is_err());
        assert!(kl_ucb_index(1.2, 3, 1.0).is_err());
        assert!(kl_lcb_index(0.5, 3, -1.0).is_err());
        assert!(kl_lcb_index(0.5, 3, f64::INFINITY).is_err());
    }

    #[test]
    fn binomial_cdf_examples() {
        assert!((binomial_cdf(4, 0.5, 2).unwrap() - 11.0 / 16.0).abs() < 1e-15);
        for n in [0u64, 1, 7, 80] {
            assert_eq!(binomial_cdf(n, 0.37, n as i64).unwrap(), 1.0);
        }
        assert_eq!(binomial_cdf(5, 0.0, 0).unwrap(), 1.0);
        assert_eq!(binomial_cdf(5, 0.3, -1).unwrap(), 0.0);
        assert_eq!(binomial_cdf(5, 1.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn binomial_cdf_log_space_branch_matches_direct_sum() {
        // n = 61 takes the log-space branch; compare with exact rationals at p = 1/2.
        let n = 61u64;
        let mut coeff = 1u128;
        let mut acc = 0u128;
        for j in 0..=30u64 {
            acc += coeff;
            coeff = coeff * (n - j) as u128 / (j + 1) as u128;
        }
        let exact = acc as f64 / 2f64.powi(61);
        assert!((binomial_cdf(n, 0.5, 30).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn beta_cdf_examples() {
        let uniform = BetaParams::UNIFORM;
        assert!((beta_cdf(uniform, 0.37).unwrap() - 0.37).abs() < 1e-15);
        let b32 = BetaParams::new(3, 2).unwrap();
        assert!((beta_cdf(b32, 0.5).unwrap() - 0.3125).abs() < 1e-15);
        let b23 = BetaParams::new(2, 3).unwrap();
        assert!((beta_cdf(b23, 0.5).unwrap() - 0.6875).abs() < 1e-15);
        assert_eq!(beta_cdf(b23, 0.0).unwrap(), 0.0);
        assert_eq!(beta_cdf(b23, 1.0).unwrap(), 1.0);
        assert!(beta_cdf(BetaParams { a: 0, b: 1 }, 0.5).is_err());
    }

    #[test]
    fn beta_params_counts() {
        let mut p = BetaParams::default();
        assert_eq!(p.empirical_mean(), None);
        p.observe(true);
        p.observe(true);
        p.observe(false);
        assert_eq!(p, BetaParams { a: 3, b: 2 });
        assert_eq!(p.observations(), 3);
        assert!((p.empirical_mean().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(BetaParams::new(0, 3).is_err());
    }

    #[test]
    fn beta_uniform_passes_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| beta_sample(BetaParams::UNIFORM, &mut rng))
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = x - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - x;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at alpha = 0.001.
        let critical = 1.949 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }

    #[test]
    fn beta_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let b21 = BetaParams::new(2, 1).unwrap();
        let mean = (0..n).map(|_| beta_sample(b21, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01);

        let b50 = BetaParams::new(50, 50).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| beta_sample(b50, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let analytic = 50.0 * 50.0 / (100.0 * 100.0 * 101.0);
        assert!((var - analytic).abs() < 0.2 * analytic, "{var} vs {analytic}");
    }

    #[test]
    fn beta_sample_is_deterministic_per_stream() {
        let p = BetaParams::new(4, 9).unwrap();
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..32).map(|_| beta_sample(p, &mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..32).map(|_| beta_sample(p, &mut rng)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    proptest! {
        #[test]
        fn kl_dominates_squared_gap(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let kl = bernoulli_kl(p, q).unwrap();
            prop_assert!(kl >= 0.0);
            // The weaker constant used in the concentration argument...
            prop_assert!(kl >= (p - q).powi(2) / 2.0);
            // ...and Pinsker's sharper one.
            prop_assert!(kl >= 2.0 * (p - q).powi(2) - 1e-12);
        }

        #[test]
        fn kl_ucb_is_monotone_and_tight(
            mu in 0.0f64..0.95,
            n in 1u64..200,
            e1 in 0.0f64..10.0,
            e2 in 0.0f64..10.0,
        ) {
            let (lo_e, hi_e) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let a = kl_ucb_index(mu, n, lo_e).unwrap();
            let b = kl_ucb_index(mu, n, hi_e).unwrap();
            prop_assert!(a <= b);
            prop_assert!(b >= mu);
            // Away from the ceiling the root must sit inside the final bracket.
            prop_assume!(b < 1.0 - 1e-4);
            let value = n as f64 * kl_unchecked(mu, b);
            prop_assert!(value <= hi_e + 1e-12);
            let past = n as f64 * kl_unchecked(mu, b + 1.5 * KL_INDEX_TOLERANCE);
            prop_assert!(past >= hi_e, "n*kl = {} just past {} for budget {}", past, b, hi_e);
        }

        #[test]
        fn kl_lcb_is_below_mean(mu in 0.0f64..=1.0, n in 1u64..500, e in 0.0f64..10.0) {
            let idx = kl_lcb_index(mu, n, e).unwrap();
            prop_assert!(idx <= mu);
            prop_assert!(n as f64 * kl_unchecked(mu, idx) <= e + 1e-12);
        }

        #[test]
        fn beta_cdf_symmetry(a in 1u64..40, b in 1u64..40, x in 0.0f64..=1.0) {
            let f = beta_cdf(BetaParams { a, b }, x).unwrap();
            let g = beta_cdf(BetaParams { a: b, b: a }, 1.0 - x).unwrap();
            prop_assert!((f - (1.0 - g)).abs() < 1e-10);
        }
    }
}
