//! Closed-form engine for exponential claims: Laplace-exponent roots,
//! scale functions, the discounted dividend/injection cost of an
//! `(alpha, a, b)` policy, and the search for the optimal triple.
//!
//! For exponentially distributed claims (rate `mu`) retained at fraction
//! `alpha`, the surplus is a spectrally negative Levy process within each
//! revision period, with Laplace exponent
//!
//! ```text
//! kappa(theta) = theta*c_alpha - alpha*lambda*theta / (mu + alpha*theta).
//! ```
//!
//! `kappa(theta) = q` has one nonnegative root `phi_q` and one nonpositive
//! root `rho_minus`; the scale functions `W_q`, `Z_q` built from them give
//! the cost of the band policy (inject up to 0 while the deficit is less
//! than `a`, pay dividends above `b`) in closed form. The per-period
//! retention enters only through `alpha`; the revision interval is the
//! unit of time.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ClaimLaw, ModelParams};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("closed-form engine requires exponential claims, got {0}")]
    NotExponential(String),
    #[error("retention {alpha} outside the admissible band ({alpha_low}, 1]")]
    InadmissibleRetention { alpha: f64, alpha_low: f64 },
    #[error("premium rate must be positive, got {0}")]
    NonPositivePremium(f64),
    #[error("evaluation at the Laplace-exponent pole theta = -mu/alpha")]
    ExponentPole,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("optimizer did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("first-order verification failed: {0}")]
    Verification(String),
}

type Result<T> = std::result::Result<T, ClosedFormError>;

/// Exponential-claim model at a fixed retention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpModel<R: Real> {
    pub lambda: R,
    /// Claim rate: claims have mean `1/mu`.
    pub mu: R,
    pub q: R,
    /// Retention in `(alpha_low, 1]`.
    pub alpha: R,
    /// Net premium rate at `alpha`, strictly positive.
    pub c_alpha: R,
    /// Net premium slope `c'(alpha)`, constant in `alpha`.
    pub c_slope: R,
    pub alpha_low: R,
}

/// Roots of `kappa(theta) = q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceRoots<R: Real> {
    /// Nonnegative root (strictly positive for `q > 0`).
    pub phi_q: R,
    /// Nonpositive root.
    pub rho_minus: R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCase {
    /// All three parameters interior: first-order conditions hold.
    Interior,
    /// Dividend barrier at zero.
    BZero,
    /// No reinsurance: full retention.
    AlphaOne,
}

impl std::fmt::Display for BoundaryCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCase::Interior => write!(f, "interior"),
            BoundaryCase::BZero => write!(f, "b_zero"),
            BoundaryCase::AlphaOne => write!(f, "alpha_one"),
        }
    }
}

/// First-order residuals reported with an optimized policy.
///
/// `da0` is the buffer stationarity residual; `bopt` the barrier
/// first-order condition (a one-sided derivative when `b* = 0`); `aopt`
/// the relative mismatch of the buffer identity `a* = c*gamma_b /
/// (k*q*(mu/alpha)*theta_b)` (meaningful when `b* > 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyResiduals<R: Real> {
    pub da0: R,
    pub bopt: R,
    pub aopt: R,
}

/// Optimal `(alpha*, a*, b*)` policy with its value at surplus zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormPolicy<R: Real> {
    pub alpha_star: R,
    pub a_star: R,
    pub b_star: R,
    /// Cost at surplus 0; equals `k * a_star` at the optimum.
    pub j0: R,
    pub boundary_case: BoundaryCase,
    pub residuals: PolicyResiduals<R>,
    pub model: ExpModel<R>,
    pub roots: LaplaceRoots<R>,
    pub k: R,
}

impl<R: Real> ExpModel<R> {
    pub fn new(params: &ModelParams<R>, alpha: R) -> Result<Self> {
        let mu = match params.claim_law {
            ClaimLaw::Exponential { mu } => mu,
            other => return Err(ClosedFormError::NotExponential(format!("{other:?}"))),
        };
        let alpha_low = params.lowest_retention();
        if !(alpha > alpha_low && alpha <= R::one()) {
            return Err(ClosedFormError::InadmissibleRetention {
                alpha: alpha.as_f64(),
                alpha_low: alpha_low.as_f64(),
            });
        }
        let c_alpha = params.premium_rate(alpha);
        if !(c_alpha > R::zero()) {
            return Err(ClosedFormError::NonPositivePremium(c_alpha.as_f64()));
        }
        Ok(ExpModel {
            lambda: params.lambda,
            mu,
            q: params.q,
            alpha,
            c_alpha,
            c_slope: params.premium_slope(),
            alpha_low,
        })
    }

    /// Laplace exponent `kappa(theta)` per revision period.
    pub fn laplace_exponent(&self, theta: R) -> Result<R> {
        let denom = self.mu + self.alpha * theta;
        if denom.abs() < R::of(1e-300) {
            return Err(ClosedFormError::ExponentPole);
        }
        Ok(theta * self.c_alpha - self.alpha * self.lambda * theta / denom)
    }

    /// Roots of `alpha*c*theta^2 + (c*mu - alpha*lambda - alpha*q)*theta - mu*q = 0`,
    /// computed in the cancellation-free form of the quadratic formula.
    pub fn solve_roots(&self) -> Result<LaplaceRoots<R>> {
        if !(self.c_alpha > R::zero()) {
            return Err(ClosedFormError::NonPositivePremium(self.c_alpha.as_f64()));
        }
        let a = self.alpha * self.c_alpha;
        let b = self.c_alpha * self.mu - self.alpha * self.lambda - self.alpha * self.q;
        let c = -self.mu * self.q;
        let disc = b * b - R::of(4.0) * a * c;
        let sd = disc.sqrt();
        let qq = if b >= R::zero() {
            -(b + sd) / R::of(2.0)
        } else {
            -(b - sd) / R::of(2.0)
        };
        let r1 = qq / a;
        let r2 = c / qq;
        Ok(LaplaceRoots {
            phi_q: r1.max(r2),
            rho_minus: r1.min(r2),
        })
    }

    /// Implicit derivatives `(d phi_q / d alpha, d rho_minus / d alpha)`,
    /// accounting for the premium's own dependence on `alpha`.
    pub fn root_derivatives(&self, roots: &LaplaceRoots<R>) -> (R, R) {
        let d = |theta: R| {
            let k_theta = R::of(2.0) * self.alpha * self.c_alpha * theta
                + (self.c_alpha * self.mu - self.alpha * self.lambda - self.alpha * self.q);
            let k_alpha = (self.c_alpha + self.alpha * self.c_slope) * theta * theta
                + (self.c_slope * self.mu - self.lambda - self.q) * theta;
            -k_alpha / k_theta
        };
        (d(roots.phi_q), d(roots.rho_minus))
    }

    /// Scale function `W_q(x)`; zero for `x < 0`.
    pub fn scale_w(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        if x < R::zero() {
            return R::zero();
        }
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        ((self.alpha * phi + self.mu) * (phi * x).exp()
            - (self.alpha * rho + self.mu) * (rho * x).exp())
            / (self.alpha * self.c_alpha * (phi - rho))
    }

    /// Right derivative `W_q'(x)` for `x >= 0`.
    pub fn scale_w_prime(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        ((self.alpha * phi + self.mu) * phi * (phi * x).exp()
            - (self.alpha * rho + self.mu) * rho * (rho * x).exp())
            / (self.alpha * self.c_alpha * (phi - rho))
    }

    /// `Z_q(x) = 1 + q * integral of W_q over [0, x]`; one for `x < 0`.
    pub fn scale_z(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        if x < R::zero() {
            return R::one();
        }
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        let term_phi = (self.alpha * phi + self.mu) * ((phi * x).exp() - R::one()) / phi;
        let term_rho = (self.alpha * rho + self.mu) * ((rho * x).exp() - R::one()) / rho;
        R::one() + self.q * (term_phi - term_rho) / (self.alpha * self.c_alpha * (phi - rho))
    }

    /// `C_q(x) = c_alpha*W_q(x) - Z_q(x)`, in its explicit two-exponential
    /// form; nonnegative on `x >= 0`.
    pub fn c_q(&self, roots: &LaplaceRoots<R>, x: R) -> Result<R> {
        if x < R::zero() {
            return Err(ClosedFormError::Domain(format!(
                "C_q is defined on x >= 0, got {x}"
            )));
        }
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        Ok(self.lambda * ((phi * x).exp() - (rho * x).exp()) / (self.c_alpha * (phi - rho)))
    }

    /// `C_q'(x)` for `x >= 0`.
    pub fn c_q_prime(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        self.lambda * (phi * (phi * x).exp() - rho * (rho * x).exp())
            / (self.c_alpha * (phi - rho))
    }

    /// Ratio `gamma(x) = (phi - rho) / (phi*e^{phi x} - rho*e^{rho x})`:
    /// the reciprocal slope of `C_q` up to the factor `lambda/c_alpha`.
    /// Decreases from 1 at `x = 0` to 0 at infinity.
    pub fn gamma_fn(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        (phi - rho) / (phi * (phi * x).exp() - rho * (rho * x).exp())
    }

    /// Companion ratio `theta(x) = (e^{phi x} - e^{rho x}) / (phi*e^{phi x} - rho*e^{rho x})`,
    /// zero at `x = 0`.
    pub fn theta_fn(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        ((phi * x).exp() - (rho * x).exp()) / (phi * (phi * x).exp() - rho * (rho * x).exp())
    }

    /// Derivative of `gamma` in `x`.
    pub fn gamma_db(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        let den = phi * (phi * x).exp() - rho * (rho * x).exp();
        -(phi - rho) * (phi * phi * (phi * x).exp() - rho * rho * (rho * x).exp()) / (den * den)
    }

    /// Derivative of `theta` in `x`; simplifies to
    /// `(phi-rho)^2 e^{(phi+rho)x} / den^2`, strictly positive.
    pub fn theta_db(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        let den = phi * (phi * x).exp() - rho * (rho * x).exp();
        (phi - rho) * (phi - rho) * ((phi + rho) * x).exp() / (den * den)
    }

    /// Derivative of `gamma` in `alpha` (through both roots and the premium).
    pub fn gamma_dalpha(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        let (dphi, drho) = self.root_derivatives(roots);
        let den = phi * (phi * x).exp() - rho * (rho * x).exp();
        let g_phi = (den - (phi - rho) * (R::one() + phi * x) * (phi * x).exp()) / (den * den);
        let g_rho = (-den + (phi - rho) * (R::one() + rho * x) * (rho * x).exp()) / (den * den);
        g_phi * dphi + g_rho * drho
    }

    /// Derivative of `theta` in `alpha`.
    pub fn theta_dalpha(&self, roots: &LaplaceRoots<R>, x: R) -> R {
        let (phi, rho) = (roots.phi_q, roots.rho_minus);
        let (dphi, drho) = self.root_derivatives(roots);
        let den = phi * (phi * x).exp() - rho * (rho * x).exp();
        let num = (phi * x).exp() - (rho * x).exp();
        let t_phi =
            (x * (phi * x).exp() * den - num * (R::one() + phi * x) * (phi * x).exp()) / (den * den);
        let t_rho =
            (-x * (rho * x).exp() * den + num * (R::one() + rho * x) * (rho * x).exp()) / (den * den);
        t_phi * dphi + t_rho * drho
    }

    /// Retained-claim rate `mu / alpha`.
    #[inline]
    pub fn mu_r(&self) -> R {
        self.mu / self.alpha
    }

    /// Denominator `q + (mu*q/alpha)*theta(b) + lambda*e^{-(mu/alpha)a}`
    /// of the policy cost.
    fn cost_denominator(&self, roots: &LaplaceRoots<R>, a: R, b: R) -> R {
        self.q + self.mu_r() * self.q * self.theta_fn(roots, b)
            + self.lambda * (-self.mu_r() * a).exp()
    }

    /// Numerator `c_alpha*gamma(b) - lambda*k*m(a)` of the policy cost.
    fn cost_numerator(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> R {
        self.c_alpha * self.gamma_fn(roots, b) - self.lambda * k * truncated_mean(self.mu_r(), a)
    }

    /// Stationarity function for the buffer: strictly decreasing in `a`
    /// with a unique positive root; its zero is the optimal buffer for
    /// the given `(b, k)`.
    pub fn psi(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> R {
        self.psi_hoisted(k, a, self.gamma_fn(roots, b), self.theta_fn(roots, b))
    }

    #[inline]
    fn psi_hoisted(&self, k: R, a: R, gamma_b: R, theta_b: R) -> R {
        let mu_r = self.mu_r();
        // exp_m1 keeps the root accurate when the stationary buffer is
        // pushed toward zero (tiny retentions, heavy injection cost)
        -a * k * (self.q + self.q * mu_r * theta_b)
            + self.c_alpha * gamma_b
            + self.lambda * k * (-mu_r * a).exp_m1() / mu_r
    }

    /// Policy cost at surplus zero (gamma/theta form).
    pub fn cost_zero(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> Result<R> {
        if !(a > R::zero()) {
            return Err(ClosedFormError::Domain(format!(
                "cost_zero needs a > 0, got {a}"
            )));
        }
        if b < R::zero() {
            return Err(ClosedFormError::Domain(format!(
                "cost_zero needs b >= 0, got {b}"
            )));
        }
        Ok(self.cost_numerator(roots, k, a, b) / self.cost_denominator(roots, a, b))
    }

    /// Policy cost at surplus zero in the scale-function form
    /// `(1 - k*m(a)*C_q'(b)) / (e^{-(mu/alpha)a}*C_q'(b) + q*W_q(b))`;
    /// algebraically identical to [`ExpModel::cost_zero`].
    pub fn cost_zero_wz(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> Result<R> {
        if !(a > R::zero()) {
            return Err(ClosedFormError::Domain(format!(
                "cost_zero_wz needs a > 0, got {a}"
            )));
        }
        let cqp = self.c_q_prime(roots, b);
        let m = truncated_mean(self.mu_r(), a);
        Ok((R::one() - k * m * cqp)
            / ((-self.mu_r() * a).exp() * cqp + self.q * self.scale_w(roots, b)))
    }

    /// Policy cost at surplus `x <= b`, piecewise over the bankruptcy,
    /// injection and continuation zones.
    pub fn cost_at(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R, x: R) -> Result<R> {
        if x > b {
            return Err(ClosedFormError::Domain(format!(
                "cost_at is defined for x <= b, got x = {x}, b = {b}"
            )));
        }
        let j0 = self.cost_zero(roots, k, a, b)?;
        if x < -a {
            Ok(R::zero())
        } else if x <= R::zero() {
            Ok(k * x + j0)
        } else {
            let cq = self.c_q(roots, x)?;
            let s = (-self.mu_r() * a).exp() * cq + self.scale_z(roots, x);
            let g = truncated_mean(self.mu_r(), a) * cq;
            Ok(k * g + j0 * s)
        }
    }

    /// Partial derivative of the cost at zero with respect to `a`.
    pub fn d_cost_da(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> R {
        let mu_r = self.mu_r();
        let den = self.cost_denominator(roots, a, b);
        self.lambda * mu_r * (-mu_r * a).exp() * self.psi(roots, k, a, b) / (den * den)
    }

    /// Partial derivative of the cost at zero with respect to `b`.
    pub fn d_cost_db(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> R {
        let den = self.cost_denominator(roots, a, b);
        let num = self.cost_numerator(roots, k, a, b);
        (self.c_alpha * self.gamma_db(roots, b) * den
            - num * self.mu_r() * self.q * self.theta_db(roots, b))
            / (den * den)
    }

    /// Partial derivative of the cost at zero with respect to `alpha`
    /// (premium, roots and retained-claim law all vary).
    pub fn d_cost_dalpha(&self, roots: &LaplaceRoots<R>, k: R, a: R, b: R) -> R {
        let mu_r = self.mu_r();
        let e = (-mu_r * a).exp();
        let m = truncated_mean(mu_r, a);
        let den = self.cost_denominator(roots, a, b);
        let num = self.cost_numerator(roots, k, a, b);
        // d/dalpha of the truncated mean: (m - mu_r*a^2*e)/alpha.
        let dm = (m - mu_r * a * a * e) / self.alpha;
        let dnum = self.c_slope * self.gamma_fn(roots, b)
            + self.c_alpha * self.gamma_dalpha(roots, b)
            - self.lambda * k * dm;
        let dden = -(self.mu * self.q / (self.alpha * self.alpha)) * self.theta_fn(roots, b)
            + mu_r * self.q * self.theta_dalpha(roots, b)
            + self.lambda * e * (self.mu * a / (self.alpha * self.alpha));
        (dnum * den - num * dden) / (den * den)
    }

    /// Unique positive root of [`ExpModel::psi`]: bisection with bracket
    /// doubling, to residual `|psi| < 1e-10`.
    pub fn critical_a(&self, roots: &LaplaceRoots<R>, k: R, b: R) -> Result<R> {
        if b < R::zero() {
            return Err(ClosedFormError::Domain(format!(
                "critical_a needs b >= 0, got {b}"
            )));
        }
        if k < R::one() {
            return Err(ClosedFormError::Domain(format!(
                "critical_a needs k >= 1, got {k}"
            )));
        }
        let gamma_b = self.gamma_fn(roots, b);
        let theta_b = self.theta_fn(roots, b);
        let at_zero = self.c_alpha * gamma_b;
        if !(at_zero > R::zero()) {
            return Err(ClosedFormError::Domain(format!(
                "psi(0+) = {at_zero} <= 0: retention inadmissible or barrier beyond numeric range"
            )));
        }
        let mut lo = R::zero();
        let mut hi = R::one();
        let mut guard = 0;
        while self.psi_hoisted(k, hi, gamma_b, theta_b) > R::zero() {
            hi *= R::of(2.0);
            guard += 1;
            if guard > 400 {
                return Err(ClosedFormError::NonConvergence(guard));
            }
        }
        for _ in 0..100 {
            let mid = (lo + hi) * R::of(0.5);
            if self.psi_hoisted(k, mid, gamma_b, theta_b) > R::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Newton polish: psi is smooth and strictly decreasing, so a few
        // steps from the bisection estimate reach machine precision
        // (the cost identity at the stationary buffer inherits psi's
        // residual divided by the cost denominator).
        let mut a = (lo + hi) * R::of(0.5);
        let mu_r = self.mu_r();
        for _ in 0..4 {
            let slope =
                -k * (self.q + self.q * mu_r * theta_b) - self.lambda * k * (-mu_r * a).exp();
            let next = a - self.psi_hoisted(k, a, gamma_b, theta_b) / slope;
            if next.is_finite() && next > R::zero() {
                a = next;
            }
        }
        Ok(a)
    }
}

/// Mean of an exponential claim (rate `mu_r`) truncated at `s`:
/// `(1 - e^{-mu_r s}(mu_r s + 1)) / mu_r`, written as
/// `(-expm1(-x) - x e^{-x}) / mu_r` so the absolute error stays of
/// order `eps*x` instead of `eps` when `x = mu_r*s` is tiny.
pub fn truncated_mean<R: Real>(mu_r: R, s: R) -> R {
    let x = mu_r * s;
    (-(-x).exp_m1() - x * (-x).exp()) / mu_r
}

/// Cost at surplus zero as a function of the free triple, rebuilding the
/// retention-dependent model; the finite-difference certificates
/// perturb all three coordinates through this.
pub fn j0_of<R: Real>(params: &ModelParams<R>, k: R, alpha: R, a: R, b: R) -> Result<R> {
    let m = ExpModel::new(params, alpha)?;
    let roots = m.solve_roots()?;
    m.cost_zero(&roots, k, a, b)
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Coarse grid resolution in the retention.
    pub alpha_grid: usize,
    /// Coarse grid resolution in the barrier.
    pub b_grid: usize,
    /// The barrier grid extends to where `gamma` drops below this.
    pub gamma_cut: f64,
    /// Iteration budget for the refinement stage.
    pub max_iter: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            alpha_grid: 200,
            b_grid: 200,
            gamma_cut: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Search for the optimal `(alpha*, a*, b*)`: coarse grid scan over
/// `(alpha, b)` with the buffer solved exactly per point, then Newton
/// refinement on the analytic reduced gradient. The grid scan keeps the
/// refinement out of inflection points; ties resolve to the
/// lexicographically smallest `(alpha, b)`.
pub fn optimize_policy<R: Real>(params: &ModelParams<R>) -> Result<ClosedFormPolicy<R>> {
    optimize_policy_with(params, OptimizeOptions::default())
}

pub fn optimize_policy_with<R: Real>(
    params: &ModelParams<R>,
    opts: OptimizeOptions,
) -> Result<ClosedFormPolicy<R>> {
    let k = params.k;
    let alpha_low = params.lowest_retention();
    let n_alpha = opts.alpha_grid.max(2);
    let n_b = opts.b_grid.max(2);

    // Coarse scan, parallel over retention slices. Each slice returns its
    // own best candidate; the reduction is deterministic.
    let slices: Vec<(R, R, R, R)> = (1..=n_alpha)
        .into_par_iter()
        .map(|i| -> Result<(R, R, R, R)> {
            let alpha = (alpha_low
                + (R::one() - alpha_low) * R::of(i as f64) / R::of(n_alpha as f64))
            .min(R::one());
            let m = ExpModel::new(params, alpha)?;
            let roots = m.solve_roots()?;
            let b_hi = barrier_cap(&roots, opts.gamma_cut);
            let mut best: Option<(R, R, R, R)> = None;
            for j in 0..=n_b {
                let b = b_hi * R::of(j as f64) / R::of(n_b as f64);
                let a = m.critical_a(&roots, k, b)?;
                let j0 = m.cost_zero(&roots, k, a, b)?;
                let cand = (j0, alpha, b, a);
                best = Some(match best {
                    None => cand,
                    Some(cur) => pick_candidate(cur, cand),
                });
            }
            Ok(best.expect("barrier grid is non-empty"))
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse = slices
        .into_iter()
        .reduce(pick_candidate)
        .expect("retention grid is non-empty");

    let (_, mut alpha, mut b, _) = coarse;

    // Newton refinement on the reduced objective (buffer eliminated via
    // its stationarity equation; the envelope kills the inner term).
    let tol_g = R::of(1e-10);
    let h = R::of(1e-6);
    let alpha_cap = R::one();
    let alpha_floor = alpha_low + (R::one() - alpha_low) * R::of(1e-9);
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(ClosedFormError::NonConvergence(opts.max_iter));
        }
        let g = reduced_gradient(params, k, alpha, b)?;
        let alpha_pinned = alpha >= alpha_cap - R::of(1e-14) && g.0 > R::zero();
        let b_pinned = b <= R::zero() && g.1 < R::zero();
        let ga = if alpha_pinned { R::zero() } else { g.0 };
        let gb = if b_pinned { R::zero() } else { g.1 };
        if ga.abs() < tol_g && gb.abs() < tol_g {
            break;
        }

        // Finite differences of the analytic gradient give the reduced
        // Hessian; Newton with a step cap keeps the iteration inside the
        // basin selected by the grid. Stencils shift inward at the
        // parameter bounds.
        let stencil = |x: R, lo: R, hi: R| {
            let xp = (x + h).min(hi);
            let xm = (xp - R::of(2.0) * h).max(lo);
            (xp, xm)
        };
        let (ap, am) = stencil(alpha, alpha_floor, alpha_cap);
        let (bp, bm) = stencil(b, R::zero(), R::infinity());
        let (mut da, mut db) = (R::zero(), R::zero());
        if !alpha_pinned && !b_pinned {
            let gp_a = reduced_gradient(params, k, ap, b)?;
            let gm_a = reduced_gradient(params, k, am, b)?;
            let gp_b = reduced_gradient(params, k, alpha, bp)?;
            let gm_b = reduced_gradient(params, k, alpha, bm)?;
            let haa = (gp_a.0 - gm_a.0) / (ap - am);
            let hab = (gp_b.0 - gm_b.0) / (bp - bm);
            let hba = (gp_a.1 - gm_a.1) / (ap - am);
            let hbb = (gp_b.1 - gm_b.1) / (bp - bm);
            let det = haa * hbb - hab * hba;
            if det.abs() > R::of(1e-300) {
                da = -(hbb * ga - hab * gb) / det;
                db = -(haa * gb - hba * ga) / det;
            }
            // Fall back to a gradient step if Newton is degenerate or
            // points against the ascent direction.
            if da * ga + db * gb <= R::zero() {
                let scale = R::of(1e-2) / (ga.abs() + gb.abs() + R::of(1e-30));
                da = ga * scale;
                db = gb * scale;
            }
        } else if !alpha_pinned {
            let gp = reduced_gradient(params, k, ap, b)?;
            let gm = reduced_gradient(params, k, am, b)?;
            let haa = (gp.0 - gm.0) / (ap - am);
            da = if haa < R::zero() {
                -ga / haa
            } else {
                ga.signum() * R::of(1e-3)
            };
        } else if !b_pinned {
            let gp = reduced_gradient(params, k, alpha, bp)?;
            let gm = reduced_gradient(params, k, alpha, bm)?;
            let hbb = (gp.1 - gm.1) / (bp - bm);
            db = if hbb < R::zero() {
                -gb / hbb
            } else {
                gb.signum() * R::of(1e-3)
            };
        } else {
            break; // both coordinates pinned at their boundary
        }

        let cap = R::of(0.1);
        da = da.max(-cap).min(cap);
        db = db.max(-cap).min(cap);
        alpha = (alpha + da).max(alpha_floor).min(alpha_cap);
        b = (b + db).max(R::zero());
    }

    // The barrier-zero flag wins over the full-retention flag when both
    // boundaries are hit; the verification step checks the matching system.
    let boundary_case = if b <= R::of(1e-9) {
        BoundaryCase::BZero
    } else if alpha >= R::one() - R::of(1e-9) {
        BoundaryCase::AlphaOne
    } else {
        BoundaryCase::Interior
    };
    if boundary_case == BoundaryCase::BZero {
        b = R::zero();
    }
    if boundary_case == BoundaryCase::AlphaOne {
        alpha = R::one();
    }

    let model = ExpModel::new(params, alpha)?;
    let roots = model.solve_roots()?;
    let a = model.critical_a(&roots, k, b)?;
    let j0 = model.cost_zero(&roots, k, a, b)?;

    let residuals = PolicyResiduals {
        da0: model.psi(&roots, k, a, b),
        bopt: model.d_cost_db(&roots, k, a, b),
        aopt: {
            let implied = model.c_alpha * model.gamma_db(&roots, b)
                / (k * model.q * model.mu_r() * model.theta_db(&roots, b));
            (a - implied) / a
        },
    };

    verify_first_order(params, &model, &roots, k, alpha, a, b, j0, boundary_case)?;

    Ok(ClosedFormPolicy {
        alpha_star: alpha,
        a_star: a,
        b_star: b,
        j0,
        boundary_case,
        residuals,
        model,
        roots,
        k,
    })
}

fn pick_candidate<R: Real>(cur: (R, R, R, R), cand: (R, R, R, R)) -> (R, R, R, R) {
    // Lexicographic tie-break on (alpha, b) under exact equality of the value.
    let better = cand.0 > cur.0 || (cand.0 == cur.0 && (cand.1, cand.2) < (cur.1, cur.2));
    if better {
        cand
    } else {
        cur
    }
}

fn barrier_cap<R: Real>(roots: &LaplaceRoots<R>, gamma_cut: f64) -> R {
    let (phi, rho) = (roots.phi_q, roots.rho_minus);
    ((phi - rho) / (phi * R::of(gamma_cut))).ln() / phi
}

fn reduced_gradient<R: Real>(params: &ModelParams<R>, k: R, alpha: R, b: R) -> Result<(R, R)> {
    let m = ExpModel::new(params, alpha)?;
    let roots = m.solve_roots()?;
    let a = m.critical_a(&roots, k, b)?;
    Ok((
        m.d_cost_dalpha(&roots, k, a, b),
        m.d_cost_db(&roots, k, a, b),
    ))
}

#[allow(clippy::too_many_arguments)]
fn verify_first_order<R: Real>(
    params: &ModelParams<R>,
    model: &ExpModel<R>,
    roots: &LaplaceRoots<R>,
    k: R,
    alpha: R,
    a: R,
    b: R,
    j0: R,
    case: BoundaryCase,
) -> Result<()> {
    let tol = R::of(1e-6);
    match case {
        BoundaryCase::BZero => {
            let mu_r = model.mu_r();
            let b0opta = -a * k * params.q
                + model.c_alpha
                + params.lambda * k * (-mu_r * a).exp_m1() / mu_r;
            let b0optph = alpha * model.c_slope - params.lambda * k * truncated_mean(mu_r, a);
            let scale = model.c_alpha.abs().max(R::one());
            if (b0opta / scale).abs() > tol {
                return Err(ClosedFormError::Verification(format!(
                    "barrier-zero buffer condition residual {b0opta}"
                )));
            }
            // Full retention at the barrier-zero corner only needs the
            // one-sided alpha condition.
            if alpha < R::one() - R::of(1e-9) && (b0optph / scale).abs() > tol {
                return Err(ClosedFormError::Verification(format!(
                    "barrier-zero retention condition residual {b0optph}"
                )));
            }
            Ok(())
        }
        BoundaryCase::Interior | BoundaryCase::AlphaOne => {
            let implied_a = model.c_alpha * model.gamma_db(roots, b)
                / (k * model.q * model.mu_r() * model.theta_db(roots, b));
            let rel_a = ((a - implied_a) / a).abs();
            let implied_j = model.c_alpha * model.gamma_db(roots, b)
                / (model.q * model.mu_r() * model.theta_db(roots, b));
            let rel_j = ((j0 - implied_j) / j0).abs();
            if rel_a > tol || rel_j > tol {
                return Err(ClosedFormError::Verification(format!(
                    "buffer/value identities off by {} / {} relative",
                    rel_a.as_f64(),
                    rel_j.as_f64()
                )));
            }
            Ok(())
        }
    }
}

/// Finite-difference curvature certificate at an optimized interior policy.
#[derive(Debug, Clone)]
pub struct HessianReport<R: Real> {
    pub gradient: [R; 3],
    pub grad_norm: R,
    pub hessian: [[R; 3]; 3],
    pub eigenvalues: [R; 3],
    /// Second derivative in the buffer direction; negative at a maximum.
    pub d2_da2: R,
    /// Largest cross-derivative magnitude involving the buffer.
    pub max_cross_a: R,
    pub leading_eigenvalue_negative: bool,
}

/// Build the 3x3 finite-difference Hessian of the cost at zero in
/// `(alpha, a, b)` at the optimized point (step 1e-4).
pub fn hessian_check<R: Real>(
    params: &ModelParams<R>,
    policy: &ClosedFormPolicy<R>,
) -> Result<HessianReport<R>> {
    if policy.boundary_case != BoundaryCase::Interior {
        return Err(ClosedFormError::Domain(format!(
            "hessian_check needs an interior optimum, got {}",
            policy.boundary_case
        )));
    }
    let k = policy.k;
    let x = [policy.alpha_star, policy.a_star, policy.b_star];
    let h = R::of(1e-4);
    let f = |p: [R; 3]| -> Result<R> { j0_of(params, k, p[0], p[1], p[2]) };
    let step = |mut p: [R; 3], i: usize, s: R| {
        p[i] += s;
        p
    };

    let mut gradient = [R::zero(); 3];
    let mut hessian = [[R::zero(); 3]; 3];
    let f0 = f(x)?;
    for i in 0..3 {
        let fp = f(step(x, i, h))?;
        let fm = f(step(x, i, -h))?;
        gradient[i] = (fp - fm) / (R::of(2.0) * h);
        hessian[i][i] = (fp - R::of(2.0) * f0 + fm) / (h * h);
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let fpp = f(step(step(x, i, h), j, h))?;
            let fpm = f(step(step(x, i, h), j, -h))?;
            let fmp = f(step(step(x, i, -h), j, h))?;
            let fmm = f(step(step(x, i, -h), j, -h))?;
            let v = (fpp - fpm - fmp + fmm) / (R::of(4.0) * h * h);
            hessian[i][j] = v;
            hessian[j][i] = v;
        }
    }

    let eigenvalues = sym3_eigenvalues(hessian);
    let grad_norm = gradient
        .iter()
        .map(|g| *g * *g)
        .fold(R::zero(), |s, v| s + v)
        .sqrt();
    Ok(HessianReport {
        gradient,
        grad_norm,
        hessian,
        eigenvalues,
        d2_da2: hessian[1][1],
        max_cross_a: hessian[0][1].abs().max(hessian[2][1].abs()),
        leading_eigenvalue_negative: eigenvalues[0] < R::zero(),
    })
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations,
/// sorted descending.
fn sym3_eigenvalues<R: Real>(mut m: [[R; 3]; 3]) -> [R; 3] {
    for _ in 0..64 {
        // largest off-diagonal entry
        let (mut p, mut q, mut big) = (0usize, 1usize, m[0][1].abs());
        for (i, j) in [(0usize, 2usize), (1, 2)] {
            if m[i][j].abs() > big {
                big = m[i][j].abs();
                p = i;
                q = j;
            }
        }
        if big < R::of(1e-300) || big < R::of(1e-14) * (m[0][0].abs() + m[1][1].abs() + m[2][2].abs()) {
            break;
        }
        let theta = (m[q][q] - m[p][p]) / (R::of(2.0) * m[p][q]);
        let t = theta.signum() / (theta.abs() + (theta * theta + R::one()).sqrt());
        let c = R::one() / (t * t + R::one()).sqrt();
        let s = t * c;
        let mut rot = [[R::zero(); 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            row[i] = R::one();
        }
        rot[p][p] = c;
        rot[q][q] = c;
        rot[p][q] = s;
        rot[q][p] = -s;
        // m = rot^T * m * rot
        let mut tmp = [[R::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = R::zero();
                for (l, rot_l) in rot.iter().enumerate() {
                    acc += rot_l[i] * m[l][j];
                }
                tmp[i][j] = acc;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = R::zero();
                for (l, rot_l) in rot.iter().enumerate() {
                    acc += tmp[i][l] * rot_l[j];
                }
                m[i][j] = acc;
            }
        }
    }
    let mut eig = [m[0][0], m[1][1], m[2][2]];
    eig.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    eig
}

impl<R: Real> ClosedFormPolicy<R> {
    /// Cost of the optimized policy at surplus `x <= b*`.
    pub fn cost_at(&self, x: R) -> Result<R> {
        self.model
            .cost_at(&self.roots, self.k, self.a_star, self.b_star, x)
    }

    /// Cost extended above the barrier: the overshoot is paid out
    /// immediately, so the cost grows at unit slope past `b*`.
    pub fn cost_extended(&self, x: R) -> Result<R> {
        if x <= self.b_star {
            self.cost_at(x)
        } else {
            Ok(self.cost_at(self.b_star)? + (x - self.b_star))
        }
    }
}
