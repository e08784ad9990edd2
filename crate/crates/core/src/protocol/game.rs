//! The verification game: a cheating platform gains `gain` per undetected
//! misreport and pays `fine` when a random audit (probability α) catches
//! it. Simulated per-trial with exact coins; the closed-form expectation
//! gain·(1−α) − fine·α is reported alongside the empirical mean.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::RngCore;

use crate::crypto::group::derive_rng;
use crate::error::{Error, Result};
use crate::protocol::VerificationPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct GameStats {
    pub trials: u64,
    /// How many trials were audited (cheat detected).
    pub detected: u64,
    /// Empirical mean utility of cheating per trial.
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    /// Closed-form expectation gain·(1−α) − fine·α.
    pub expected: BigRational,
}

impl GameStats {
    /// Whether the empirical mean is within `sigmas`·stderr of the
    /// closed-form expectation.
    pub fn consistent_with_expected(&self, sigmas: f64) -> bool {
        let e = self.expected.to_f64().unwrap_or(f64::NAN);
        (self.mean - e).abs() <= sigmas * self.stderr.max(f64::EPSILON)
    }
}

/// Simulate `trials` independent cheat attempts under `policy`, each
/// yielding `gain` if unaudited and −fine if audited.
pub fn cheating_game(
    policy: &VerificationPolicy,
    gain: &BigRational,
    trials: u64,
    seed: u64,
) -> Result<GameStats> {
    if trials == 0 {
        return Err(Error::Usage("cheating_game needs at least one trial".into()));
    }
    let mut rng = derive_rng(seed, "verification-game");
    let two64 = BigInt::from(2u128.pow(64));
    let mut detected = 0u64;
    for _ in 0..trials {
        let x = rng.next_u64();
        let frac = BigRational::new(BigInt::from(x), two64.clone());
        if frac < policy.alpha {
            detected += 1;
        }
    }
    let n = trials as f64;
    let k = detected as f64;
    let g = gain.to_f64().ok_or_else(|| Error::Arithmetic("gain overflows f64".into()))?;
    let f = policy
        .fine
        .to_f64()
        .ok_or_else(|| Error::Arithmetic("fine overflows f64".into()))?;
    let mean = (g * (n - k) - f * k) / n;
    // Two-point distribution: sample variance p̂(1−p̂)(g+f)²·n/(n−1).
    let p_hat = k / n;
    let var = if trials > 1 {
        p_hat * (1.0 - p_hat) * (g + f) * (g + f) * n / (n - 1.0)
    } else {
        0.0
    };
    let stderr = (var / n).sqrt();
    let expected =
        gain * (BigRational::one() - &policy.alpha) - &policy.fine * &policy.alpha;
    Ok(GameStats {
        trials,
        detected,
        mean,
        stderr,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn policy(alpha: BigRational) -> VerificationPolicy {
        VerificationPolicy {
            alpha,
            fine: ratio(900, 1),
            p_max: ratio(100, 1),
        }
    }

    #[test]
    fn deterrence_boundary_has_zero_expectation() {
        // α = 1/10, F = 900, gain = 100: 100·9/10 − 900/10 = 0.
        let s = cheating_game(&policy(ratio(1, 10)), &ratio(100, 1), 50_000, 7).unwrap();
        assert_eq!(s.expected, ratio(0, 1));
        assert!(s.consistent_with_expected(3.0), "mean={} stderr={}", s.mean, s.stderr);
    }

    #[test]
    fn weak_auditing_makes_cheating_profitable() {
        // α = 1/20: 100·19/20 − 900/20 = 50.
        let s = cheating_game(&policy(ratio(1, 20)), &ratio(100, 1), 50_000, 7).unwrap();
        assert_eq!(s.expected, ratio(50, 1));
        assert!(s.consistent_with_expected(3.0));
        assert!(s.mean > 0.0);
    }

    #[test]
    fn certain_auditing_always_fines() {
        let s = cheating_game(&policy(ratio(1, 1)), &ratio(100, 1), 1000, 7).unwrap();
        assert_eq!(s.detected, 1000);
        assert_eq!(s.mean, -900.0);
        assert_eq!(s.expected, ratio(-900, 1));
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = cheating_game(&policy(ratio(1, 10)), &ratio(100, 1), 1000, 3).unwrap();
        let b = cheating_game(&policy(ratio(1, 10)), &ratio(100, 1), 1000, 3).unwrap();
        assert_eq!(a, b);
        assert!(cheating_game(&policy(ratio(1, 10)), &ratio(100, 1), 0, 3).is_err());
    }
}
