//! Double-well potential `F(s) = (s^2 - 1)^2 / 4`, optionally truncated at
//! `|s| = M` by C1-matching quadratics so that `f = F'` is Lipschitz with
//! constant `L = 3M^2 - 1`.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential {
    /// Quartic everywhere; `f'` is unbounded.
    Untruncated,
    /// Quartic on `[-M, M]`, quadratic outside.
    Truncated { m: f64 },
}

impl Potential {
    pub fn truncated(m: f64) -> Result<Self> {
        if !(m >= 1.0) || !m.is_finite() {
            return Err(Error::Argument(format!("truncation level must be finite and >= 1, got {m}")));
        }
        Ok(Potential::Truncated { m })
    }

    pub fn truncation(&self) -> Option<f64> {
        match *self {
            Potential::Untruncated => None,
            Potential::Truncated { m } => Some(m),
        }
    }

    /// `F(s)`.
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Potential::Truncated { m } if s.abs() > m => {
                let l = 3.0 * m * m - 1.0;
                let a = s.abs() - m;
                let q = m * m - 1.0;
                0.5 * l * a * a + (m * m * m - m) * a + 0.25 * q * q
            }
            _ => {
                let q = s * s - 1.0;
                0.25 * q * q
            }
        }
    }

    /// `f(s) = F'(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            Potential::Truncated { m } if s.abs() > m => {
                let l = 3.0 * m * m - 1.0;
                let slope = l * (s.abs() - m) + (m * m * m - m);
                slope.copysign(s)
            }
            _ => s * s * s - s,
        }
    }

    /// `f'(s)`.
    pub fn second_derivative(&self, s: f64) -> f64 {
        match *self {
            Potential::Truncated { m } if s.abs() > m => 3.0 * m * m - 1.0,
            _ => 3.0 * s * s - 1.0,
        }
    }

    /// Global bound `L = sup |f'| = 3M^2 - 1`; unavailable without truncation.
    pub fn lipschitz_bound(&self) -> Result<f64> {
        match *self {
            Potential::Truncated { m } => Ok(3.0 * m * m - 1.0),
            Potential::Untruncated => Err(Error::Unsupported {
                what: "Lipschitz bound",
                why: "f' is unbounded for the untruncated double well".into(),
            }),
        }
    }

    /// Whether `F(s) >= k1 s^2 - k2` at `n` uniform samples of `[-s_max, s_max]`.
    pub fn check_coercivity(&self, k1: f64, k2: f64, s_max: f64, n: usize) -> bool {
        coercive_at(self, k1, k2, sample_points(s_max, n))
    }
}

/// `n` equispaced samples of `[-s_max, s_max]` (a single sample sits at 0).
pub fn sample_points(s_max: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            0.0
        } else {
            -s_max + 2.0 * s_max * i as f64 / (n - 1) as f64
        }
    })
}

/// Coercivity check over an explicit sample set.
pub fn coercive_at(pot: &Potential, k1: f64, k2: f64, samples: impl IntoIterator<Item = f64>) -> bool {
    samples.into_iter().all(|s| pot.value(s) >= k1 * s * s - k2)
}

pub fn f_eval(pot: &Potential, s: f64) -> f64 {
    pot.derivative(s)
}

#[allow(non_snake_case)]
pub fn F_eval(pot: &Potential, s: f64) -> f64 {
    pot.value(s)
}
