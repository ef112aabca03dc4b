//! Truncated power series with exact rational coefficients, for zeta-series
//! bookkeeping: exp of a series, rational-function expansion, logarithmic
//! derivatives.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};

pub type Q = Ratio<BigInt>;

/// Coefficients c_0..c_order of a truncated series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QSeries(pub Vec<Q>);

pub fn q_int(n: i64) -> Q {
    Ratio::from_integer(BigInt::from(n))
}

impl QSeries {
    pub fn zero(order: usize) -> Self {
        QSeries(vec![Q::zero(); order + 1])
    }

    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.0[0] = Q::one();
        s
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeff(&self, i: usize) -> Q {
        self.0.get(i).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        QSeries((0..=order).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let mut out = vec![Q::zero(); order + 1];
        for i in 0..=order {
            for j in 0..=(order - i) {
                out[i + j] += self.coeff(i) * other.coeff(j);
            }
        }
        QSeries(out)
    }

    /// Multiplicative inverse; the constant term must be nonzero.
    pub fn invert(&self) -> Self {
        assert!(!self.0[0].is_zero(), "series with zero constant term has no inverse");
        let order = self.order();
        let c0_inv = self.0[0].recip();
        let mut out = vec![Q::zero(); order + 1];
        out[0] = c0_inv.clone();
        for n in 1..=order {
            let mut acc = Q::zero();
            for k in 1..=n {
                acc += self.coeff(k) * out[n - k].clone();
            }
            out[n] = -acc * c0_inv.clone();
        }
        QSeries(out)
    }

    /// exp of a series with zero constant term, by the derivative recurrence
    /// n e_n = sum_k (k a_k) e_(n-k).
    pub fn exp(&self) -> Self {
        assert!(self.0[0].is_zero(), "exp needs a zero constant term");
        let order = self.order();
        let mut out = vec![Q::zero(); order + 1];
        out[0] = Q::one();
        for n in 1..=order {
            let mut acc = Q::zero();
            for k in 1..=n {
                acc += self.coeff(k) * q_int(k as i64) * out[n - k].clone();
            }
            out[n] = acc / q_int(n as i64);
        }
        QSeries(out)
    }

    /// t * d/dt log(self): the series sum over s of (s-th log coefficient).
    pub fn log_derivative(&self) -> Self {
        // t f'/f
        let order = self.order();
        let mut tfp = vec![Q::zero(); order + 1];
        for (i, c) in self.0.iter().enumerate() {
            tfp[i] = c.clone() * q_int(i as i64);
        }
        QSeries(tfp).mul(&self.invert())
    }
}

/// Expand an integer-coefficient polynomial as a series.
pub fn poly_series(coeffs: &[BigInt], order: usize) -> QSeries {
    let mut out = QSeries::zero(order);
    for (i, c) in coeffs.iter().enumerate().take(order + 1) {
        out.0[i] = Ratio::from_integer(c.clone());
    }
    out
}

/// Expansion of numerator/denominator to the given order (denominator must
/// have nonzero constant term).
pub fn rational_series(num: &[BigInt], den: &[BigInt], order: usize) -> QSeries {
    poly_series(num, order).mul(&poly_series(den, order).invert())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_geometric_counts() {
        // N_s = 2^s: exp(sum 2^s t^s / s) = 1/(1 - 2t)
        let order = 3;
        let mut a = QSeries::zero(order);
        for s in 1..=order {
            a.0[s] = q_int(1 << s) / q_int(s as i64);
        }
        let z = a.exp();
        assert_eq!(z.0, vec![q_int(1), q_int(2), q_int(4), q_int(8)]);
    }

    #[test]
    fn exp_of_zero_counts() {
        let z = QSeries::zero(4).exp();
        assert_eq!(z, QSeries::one(4));
    }

    #[test]
    fn log_derivative_recovers_counts() {
        // Z = 1/((1-t)(1-3t)): N_s = 3^s + 1
        let num = vec![BigInt::from(1)];
        let den = vec![BigInt::from(1), BigInt::from(-4), BigInt::from(3)];
        let z = rational_series(&num, &den, 4);
        let ld = z.log_derivative();
        for s in 1..=4usize {
            assert_eq!(ld.coeff(s), q_int(3i64.pow(s as u32) + 1), "s = {s}");
        }
    }

    #[test]
    fn invert_round_trips() {
        let s = QSeries(vec![q_int(1), q_int(5), q_int(-2), q_int(7)]);
        let prod = s.mul(&s.invert());
        assert_eq!(prod, QSeries::one(3));
    }
}
