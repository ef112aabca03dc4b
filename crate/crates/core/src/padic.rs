//! Fixed-precision arithmetic in Z_p and Q_p with explicit valuation and
//! precision tracking.
//!
//! A nonzero scalar is stored as
//!
//! ```text
//! p^exponent * unit + O(p^(exponent + digits))
//! ```
//!
//! where `unit` is a unit residue modulo `p^digits` and `digits >= 1` is the
//! number of significant p-adic digits. Negative exponents are allowed, so
//! the type covers Q_p. Zero-at-precision is the degenerate case `O(p^k)`:
//! it records only an absolute precision bound, not a value.
//!
//! Operations propagate the worst case: addition works at the minimum of the
//! absolute precisions (and may lose relative digits to cancellation),
//! multiplication adds valuations and keeps the minimum of the relative
//! precisions, inversion negates the valuation.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PadicError {
    #[error("prime mismatch: {0} vs {1}")]
    PrimeMismatch(u64, u64),
    #[error("division by zero at precision O({p}^{abs})")]
    DivisionByZeroAtPrecision { p: u64, abs: i64 },
    #[error("{p}^{digits} does not fit in a machine word")]
    PrecisionOverflow { p: u64, digits: u32 },
    #[error("expected a p-adic integer, found valuation {0}")]
    NegativeValuation(i64),
}

/// Valuation of a scalar: exact for nonzero values, a lower bound for
/// zero-at-precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valuation {
    Exact(i64),
    AtLeast(i64),
}

impl Valuation {
    /// The bound itself, exact or not.
    pub fn bound(self) -> i64 {
        match self {
            Valuation::Exact(v) | Valuation::AtLeast(v) => v,
        }
    }
}

/// `p^digits` as a u64, or an overflow error.
pub fn p_pow(p: u64, digits: u32) -> Result<u64, PadicError> {
    let mut acc: u64 = 1;
    for _ in 0..digits {
        acc = acc
            .checked_mul(p)
            .ok_or(PadicError::PrecisionOverflow { p, digits })?;
    }
    Ok(acc)
}

fn egcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = egcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

/// Inverse of `a` modulo `m` (requires gcd(a, m) = 1).
fn inv_mod(a: u64, m: u64) -> u64 {
    let (g, x, _) = egcd(a as i128, m as i128);
    debug_assert_eq!(g, 1, "inv_mod of non-unit");
    (x.rem_euclid(m as i128)) as u64
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// A p-adic scalar with its own precision.
///
/// Invariants: for nonzero scalars `unit` is reduced mod `p^digits`, coprime
/// to `p`, and `digits >= 1`. For zero-at-precision `unit = 0`, `digits = 0`
/// and `exponent` is the absolute precision bound.
#[derive(Debug, Clone)]
pub struct PadicScalar {
    p: u64,
    exponent: i64,
    unit: u64,
    digits: u32,
}

impl PadicScalar {
    /// Zero known to absolute precision `O(p^abs)`.
    pub fn zero(p: u64, abs: i64) -> Self {
        PadicScalar { p, exponent: abs, unit: 0, digits: 0 }
    }

    pub fn one(p: u64, digits: u32) -> Self {
        PadicScalar { p, exponent: 0, unit: 1, digits }
    }

    /// Build from a unit residue and an exponent. `unit` is reduced mod
    /// `p^digits`; it must not be divisible by `p`.
    pub fn from_unit(p: u64, digits: u32, unit: u64, exponent: i64) -> Result<Self, PadicError> {
        assert!(digits >= 1, "nonzero scalar needs at least one digit");
        let m = p_pow(p, digits)?;
        let u = unit % m;
        assert!(u % p != 0 && u != 0, "residue {unit} is not a unit mod {p}");
        Ok(PadicScalar { p, exponent, unit: u, digits })
    }

    /// Embed an integer at relative precision `digits`.
    pub fn from_integer(p: u64, digits: u32, n: i64) -> Result<Self, PadicError> {
        if n == 0 {
            return Ok(Self::zero(p, digits as i64));
        }
        let mut v = 0i64;
        let mut a = n.unsigned_abs();
        while a % p == 0 {
            a /= p;
            v += 1;
        }
        let m = p_pow(p, digits)?;
        let mut u = (a as u128 % m as u128) as u64;
        if n < 0 {
            u = m - u;
        }
        Ok(PadicScalar { p, exponent: v, unit: u % m, digits })
    }

    /// Embed a rational n/d (d must be nonzero).
    pub fn from_ratio(p: u64, digits: u32, n: i64, d: i64) -> Result<Self, PadicError> {
        assert!(d != 0);
        let num = Self::from_integer(p, digits, n)?;
        let den = Self::from_integer(p, digits, d)?;
        num.checked_mul(&den.checked_invert()?)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn unit_residue(&self) -> u64 {
        self.unit
    }

    pub fn is_zero(&self) -> bool {
        self.unit == 0
    }

    pub fn valuation(&self) -> Valuation {
        if self.is_zero() {
            Valuation::AtLeast(self.exponent)
        } else {
            Valuation::Exact(self.exponent)
        }
    }

    /// Absolute precision: the value is known modulo `p^abs_precision()`.
    pub fn abs_precision(&self) -> i64 {
        if self.is_zero() {
            self.exponent
        } else {
            self.exponent + self.digits as i64
        }
    }

    fn check_prime(&self, other: &Self) -> Result<(), PadicError> {
        if self.p != other.p {
            return Err(PadicError::PrimeMismatch(self.p, other.p));
        }
        Ok(())
    }

    /// Forget information beyond absolute precision `abs`.
    pub fn truncate_abs(&self, abs: i64) -> Self {
        if abs >= self.abs_precision() {
            return self.clone();
        }
        if self.is_zero() || abs <= self.exponent {
            return Self::zero(self.p, abs.min(self.abs_precision()));
        }
        let digits = (abs - self.exponent) as u32;
        let m = p_pow(self.p, digits).expect("shrinking precision cannot overflow");
        PadicScalar { p: self.p, exponent: self.exponent, unit: self.unit % m, digits }
    }

    /// Reduce to at most `digits` significant digits.
    pub fn truncate_digits(&self, digits: u32) -> Self {
        if self.is_zero() || digits >= self.digits {
            return self.clone();
        }
        if digits == 0 {
            return Self::zero(self.p, self.exponent);
        }
        let m = p_pow(self.p, digits).expect("shrinking precision cannot overflow");
        PadicScalar { p: self.p, exponent: self.exponent, unit: self.unit % m, digits }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, PadicError> {
        self.check_prime(other)?;
        let abs = self.abs_precision().min(other.abs_precision());
        if self.is_zero() && other.is_zero() {
            return Ok(Self::zero(self.p, abs));
        }
        if self.is_zero() {
            return Ok(other.truncate_abs(abs));
        }
        if other.is_zero() {
            return Ok(self.truncate_abs(abs));
        }
        let base = self.exponent.min(other.exponent);
        if abs <= base {
            return Ok(Self::zero(self.p, abs));
        }
        let window = (abs - base) as u32;
        let m = p_pow(self.p, window)?;
        let sa = p_pow(self.p, (self.exponent - base) as u32)?;
        let sb = p_pow(self.p, (other.exponent - base) as u32)?;
        let r = (mul_mod(self.unit % m, sa % m, m) + mul_mod(other.unit % m, sb % m, m)) % m;
        Ok(Self::from_residue(self.p, base, r, window))
    }

    /// Normalize a residue `r` known modulo `p^window`, valued at `p^base`.
    fn from_residue(p: u64, base: i64, mut r: u64, window: u32) -> Self {
        if r == 0 {
            return Self::zero(p, base + window as i64);
        }
        let mut v = 0u32;
        while r % p == 0 {
            r /= p;
            v += 1;
        }
        let digits = window - v;
        let m = p_pow(p, digits).expect("window shrank");
        PadicScalar { p, exponent: base + v as i64, unit: r % m, digits }
    }

    pub fn checked_neg(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let m = p_pow(self.p, self.digits).expect("existing precision fits");
        PadicScalar { p: self.p, exponent: self.exponent, unit: m - self.unit, digits: self.digits }
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, PadicError> {
        self.checked_add(&other.checked_neg())
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, PadicError> {
        self.check_prime(other)?;
        if self.is_zero() || other.is_zero() {
            // O(p^a) * (p^v u + O(p^b)) = O(p^(a+v)); O(p^a) * O(p^b) uses the
            // valuation lower bounds.
            let va = self.valuation().bound();
            let vb = other.valuation().bound();
            return Ok(Self::zero(self.p, va + vb));
        }
        let digits = self.digits.min(other.digits);
        let m = p_pow(self.p, digits)?;
        let u = mul_mod(self.unit % m, other.unit % m, m);
        Ok(PadicScalar { p: self.p, exponent: self.exponent + other.exponent, unit: u, digits })
    }

    pub fn checked_invert(&self) -> Result<Self, PadicError> {
        if self.is_zero() {
            return Err(PadicError::DivisionByZeroAtPrecision { p: self.p, abs: self.exponent });
        }
        let m = p_pow(self.p, self.digits)?;
        Ok(PadicScalar {
            p: self.p,
            exponent: -self.exponent,
            unit: inv_mod(self.unit, m),
            digits: self.digits,
        })
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, PadicError> {
        self.checked_mul(&other.checked_invert()?)
    }

    /// Integer power (negative exponents invert first).
    pub fn checked_pow(&self, e: i64) -> Result<Self, PadicError> {
        let base = if e < 0 { self.checked_invert()? } else { self.clone() };
        let mut acc = Self::one(self.p, if self.digits == 0 { 1 } else { self.digits });
        for _ in 0..e.unsigned_abs() {
            acc = acc.checked_mul(&base)?;
        }
        Ok(acc)
    }

    /// Multiply by an integer scalar.
    pub fn mul_integer(&self, n: i64) -> Result<Self, PadicError> {
        let digits = if self.digits == 0 { 1 } else { self.digits };
        self.checked_mul(&Self::from_integer(self.p, digits, n)?)
    }

    /// Divide by an integer scalar (must be nonzero).
    pub fn div_integer(&self, n: i64) -> Result<Self, PadicError> {
        assert!(n != 0);
        let digits = if self.digits == 0 { 1 } else { self.digits };
        self.checked_mul(&Self::from_integer(self.p, digits, n)?.checked_invert()?)
    }

    /// Agreement at the minimum of the two absolute precisions.
    pub fn eq_at_common_precision(&self, other: &Self) -> bool {
        if self.p != other.p {
            return false;
        }
        match self.checked_sub(other) {
            Ok(d) => d.is_zero(),
            Err(_) => false,
        }
    }

    /// The residue of a p-adic integer modulo `p^k`. Requires valuation >= 0
    /// and absolute precision >= k.
    pub fn residue_mod(&self, k: u32) -> Result<u64, PadicError> {
        if self.abs_precision() < k as i64 {
            return Err(PadicError::PrecisionOverflow { p: self.p, digits: k });
        }
        if self.is_zero() {
            return Ok(0);
        }
        if self.exponent < 0 {
            return Err(PadicError::NegativeValuation(self.exponent));
        }
        let m = p_pow(self.p, k)?;
        let shift = p_pow(self.p, (self.exponent as u32).min(k))?;
        Ok(mul_mod(self.unit % m, shift % m, m))
    }

    /// Canonical rendering used in reports; same as `Display`.
    pub fn canonical_string(&self) -> String {
        format!("{self}")
    }
}

impl fmt::Display for PadicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "O({}^{})", self.p, self.exponent)
        } else {
            write!(
                f,
                "{}^{} * {} + O({}^{})",
                self.p,
                self.exponent,
                self.unit,
                self.p,
                self.abs_precision()
            )
        }
    }
}
