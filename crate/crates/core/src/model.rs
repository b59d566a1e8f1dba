//! Model primitives shared by every engine: claim laws, economic
//! parameters, the expected-value premium principle and the admissible
//! retention band.
//!
//! The surplus of the insurer drifts at the net premium rate
//! `c(alpha) = lambda*E(U)*(1 + eta1 - (1-alpha)*(1+eta2))` between claims,
//! where `alpha` is the proportionally retained fraction of each claim.
//! `c(alpha)` is zero at the lowest admissible retention
//! `alpha_low = (eta2 - eta1)/(eta2 + 1)` and equals the gross premium
//! `c = (1+eta1)*lambda*E(U)` at full retention.

use rand::Rng;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("claim law rejected: {0}")]
    InvalidClaimLaw(String),
    #[error("parameter `{name}` rejected: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

/// Claim-size distribution. Draws are nonnegative with finite mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClaimLaw<R: Real> {
    /// Density `mu * exp(-mu*y)` on `[0, inf)`, mean `1/mu`.
    Exponential { mu: R },
    /// Uniform on `[min, max]`, `0 <= min < max`, mean `(min+max)/2`.
    Uniform { min: R, max: R },
}

impl<R: Real> ClaimLaw<R> {
    pub fn exponential(mu: R) -> Result<Self, ModelError> {
        if !(mu > R::zero()) || !mu.is_finite() {
            return Err(ModelError::InvalidClaimLaw(format!(
                "exponential rate mu must be finite and > 0, got {mu}"
            )));
        }
        Ok(ClaimLaw::Exponential { mu })
    }

    pub fn uniform(min: R, max: R) -> Result<Self, ModelError> {
        if !(min >= R::zero()) || !(max > min) || !max.is_finite() {
            return Err(ModelError::InvalidClaimLaw(format!(
                "uniform bounds need 0 <= min < max, got [{min}, {max}]"
            )));
        }
        Ok(ClaimLaw::Uniform { min, max })
    }

    pub fn mean(&self) -> R {
        match *self {
            ClaimLaw::Exponential { mu } => R::one() / mu,
            ClaimLaw::Uniform { min, max } => (min + max) / R::of(2.0),
        }
    }

    /// Distribution function `F(y)`; zero for `y < 0`.
    pub fn cdf(&self, y: R) -> R {
        if y < R::zero() {
            return R::zero();
        }
        match *self {
            ClaimLaw::Exponential { mu } => R::one() - (-mu * y).exp(),
            ClaimLaw::Uniform { min, max } => {
                if y <= min {
                    R::zero()
                } else if y >= max {
                    R::one()
                } else {
                    (y - min) / (max - min)
                }
            }
        }
    }

    /// Density `F'(y)`; zero outside the support.
    pub fn density(&self, y: R) -> R {
        if y < R::zero() {
            return R::zero();
        }
        match *self {
            ClaimLaw::Exponential { mu } => mu * (-mu * y).exp(),
            ClaimLaw::Uniform { min, max } => {
                if y < min || y > max {
                    R::zero()
                } else {
                    R::one() / (max - min)
                }
            }
        }
    }

    /// Draw one claim by inverse-CDF from a uniform variate.
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> R {
        let u: f64 = rng.random();
        match *self {
            // -ln(1-u)/mu with u in [0,1) keeps the argument in (0,1].
            ClaimLaw::Exponential { mu } => R::of(-(1.0 - u).ln()) / mu,
            ClaimLaw::Uniform { min, max } => min + R::of(u) * (max - min),
        }
    }
}

/// Economic and stochastic primitives of the controlled surplus process.
///
/// Validated eagerly: every constructed value satisfies
/// `eta2 > eta1 > 0`, `q > 0`, `k >= 1`, `a > 0`, `lambda > 0`, `period > 0`
/// and the net-profit condition `c > lambda*E(U)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<R: Real> {
    /// Claim arrival intensity (events per unit time).
    pub lambda: R,
    pub claim_law: ClaimLaw<R>,
    /// Insurer safety loading.
    pub eta1: R,
    /// Reinsurer safety loading, strictly above `eta1`.
    pub eta2: R,
    /// Discount rate.
    pub q: R,
    /// Proportional capital-injection cost, `>= 1`.
    pub k: R,
    /// Maximum ruin severity: deficits below `-a` mean bankruptcy.
    pub a: R,
    /// Reinsurance revision interval.
    pub period: R,
}

/// Admissible retention band `[alpha_low, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionBounds<R: Real> {
    pub alpha_low: R,
    pub alpha_high: R,
}

impl<R: Real> ModelParams<R> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: R,
        claim_law: ClaimLaw<R>,
        eta1: R,
        eta2: R,
        q: R,
        k: R,
        a: R,
        period: R,
    ) -> Result<Self, ModelError> {
        fn check<R: Real>(
            name: &'static str,
            value: R,
            ok: bool,
            reason: &str,
        ) -> Result<(), ModelError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("{reason}, got {value}"),
                })
            }
        }
        check("lambda", lambda, lambda > R::zero(), "must be > 0")?;
        check("eta1", eta1, eta1 > R::zero(), "must be > 0")?;
        check("eta2", eta2, eta2 > eta1, "must be > eta1")?;
        check("q", q, q > R::zero(), "must be > 0")?;
        check("k", k, k >= R::one(), "must be >= 1")?;
        check("a", a, a > R::zero(), "must be > 0")?;
        check("period", period, period > R::zero(), "must be > 0")?;
        let params = ModelParams {
            lambda,
            claim_law,
            eta1,
            eta2,
            q,
            k,
            a,
            period,
        };
        // Net-profit condition is implied by eta1 > 0; assert it anyway.
        if !(params.gross_premium() > lambda * claim_law.mean()) {
            return Err(ModelError::InvalidParameter {
                name: "eta1",
                reason: "net-profit condition c > lambda*E(U) failed".to_string(),
            });
        }
        Ok(params)
    }

    /// Gross premium rate `c = (1+eta1)*lambda*E(U)`.
    pub fn gross_premium(&self) -> R {
        (R::one() + self.eta1) * self.lambda * self.claim_law.mean()
    }

    /// Net premium drift `c(alpha)` under proportional reinsurance.
    ///
    /// May be negative below `alpha_low`; admissibility is the caller's
    /// concern (the engines only evaluate it on the admissible band).
    pub fn premium_rate(&self, alpha: R) -> R {
        self.lambda
            * self.claim_law.mean()
            * (R::one() + self.eta1 - (R::one() - alpha) * (R::one() + self.eta2))
    }

    /// Slope `c'(alpha) = (1+eta2)*lambda*E(U)` of the net premium.
    pub fn premium_slope(&self) -> R {
        (R::one() + self.eta2) * self.lambda * self.claim_law.mean()
    }

    /// Lowest admissible retention `(eta2-eta1)/(eta2+1)`, the root of
    /// `c(alpha) = 0`.
    pub fn lowest_retention(&self) -> R {
        (self.eta2 - self.eta1) / (self.eta2 + R::one())
    }

    pub fn retention_bounds(&self) -> RetentionBounds<R> {
        RetentionBounds {
            alpha_low: self.lowest_retention(),
            alpha_high: R::one(),
        }
    }

    /// Upper bound `x + c/q` on any value/cost evaluated at surplus `x`.
    pub fn value_upper_bound(&self, x: R) -> R {
        x + self.gross_premium() / self.q
    }

    /// Replace the claim law, revalidating the parameter set.
    pub fn with_claim_law(&self, claim_law: ClaimLaw<R>) -> Result<Self, ModelError> {
        ModelParams::new(
            self.lambda, claim_law, self.eta1, self.eta2, self.q, self.k, self.a, self.period,
        )
    }

    /// Baseline configuration used by the command line and the test
    /// suite: lambda=4, eta1=0.1, eta2=0.11, q=0.15, k=1.14, a=0.85,
    /// uniform claims on [0, 2] (unit mean).
    pub fn baseline_uniform() -> Self {
        ModelParams::new(
            R::of(4.0),
            ClaimLaw::uniform(R::zero(), R::of(2.0)).expect("valid law"),
            R::of(0.1),
            R::of(0.11),
            R::of(0.15),
            R::of(1.14),
            R::of(0.85),
            R::one(),
        )
        .expect("baseline parameters are valid")
    }

    /// Same economics as [`ModelParams::baseline_uniform`] with unit-mean
    /// exponential claims, where the closed-form engine applies.
    pub fn baseline_exponential() -> Self {
        Self::baseline_uniform()
            .with_claim_law(ClaimLaw::exponential(R::one()).expect("valid law"))
            .expect("baseline parameters are valid")
    }
}
