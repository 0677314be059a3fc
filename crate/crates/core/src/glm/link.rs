use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::scalar::Real;

/// Probabilities handed to log-likelihoods are kept inside `[EPS, 1 - EPS]`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Binary regression link `g`, with `p = g^{-1}(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    #[default]
    Logit,
    Cloglog,
    Probit,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

impl LinkFunction {
    pub fn name(&self) -> &'static str {
        match self {
            LinkFunction::Logit => "logit",
            LinkFunction::Cloglog => "cloglog",
            LinkFunction::Probit => "probit",
        }
    }

    /// `g(p)`.
    pub fn forward<T: Real>(&self, p: T) -> T {
        match self {
            LinkFunction::Logit => (p / (T::one() - p)).ln(),
            LinkFunction::Cloglog => (-(-p).ln_1p()).ln(),
            LinkFunction::Probit => T::lit(probit_quantile(p.as_f64())),
        }
    }

    /// `g^{-1}(s)` without clamping.
    pub fn inverse_raw<T: Real>(&self, s: T) -> T {
        match self {
            LinkFunction::Logit => {
                if s >= T::zero() {
                    T::one() / (T::one() + (-s).exp())
                } else {
                    let e = s.exp();
                    e / (T::one() + e)
                }
            }
            LinkFunction::Cloglog => -(-s.exp()).exp_m1(),
            LinkFunction::Probit => T::lit(std_normal().cdf(s.as_f64())),
        }
    }

    /// `g^{-1}(s)` clamped into `[1e-12, 1 - 1e-12]`.
    pub fn inverse<T: Real>(&self, s: T) -> T {
        let eps = T::lit(PROB_CLAMP);
        self.inverse_raw(s).max(eps).min(T::one() - eps)
    }

    /// `d g^{-1} / ds`.
    pub fn d_inverse<T: Real>(&self, s: T) -> T {
        match self {
            LinkFunction::Logit => {
                let p = self.inverse_raw(s);
                p * (T::one() - p)
            }
            LinkFunction::Cloglog => {
                let e = s.exp();
                e * (-e).exp()
            }
            LinkFunction::Probit => T::lit(std_normal().pdf(s.as_f64())),
        }
    }

    /// `d^2 g^{-1} / ds^2`.
    pub fn d2_inverse<T: Real>(&self, s: T) -> T {
        match self {
            LinkFunction::Logit => {
                let p = self.inverse_raw(s);
                p * (T::one() - p) * (T::one() - T::lit(2.0) * p)
            }
            LinkFunction::Cloglog => self.d_inverse(s) * (T::one() - s.exp()),
            LinkFunction::Probit => -s * self.d_inverse(s),
        }
    }
}

/// Normal quantile with one Newton polish step on the cdf.
fn probit_quantile(p: f64) -> f64 {
    let n = std_normal();
    let s = n.inverse_cdf(p);
    if !s.is_finite() {
        return s;
    }
    let density = n.pdf(s);
    if density > 0.0 {
        s - (n.cdf(s) - p) / density
    } else {
        s
    }
}

/// Clamped inverse link.
pub fn apply_inverse_link<T: Real>(link: LinkFunction, s: T) -> T {
    link.inverse(s)
}
