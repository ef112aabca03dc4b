//! Truncated overconvergent power series with optional Laurent variables.
//!
//! A `DaggerSeries` models an element of the dagger ring T_n (or a Laurent
//! localization of it) by keeping every monomial of total degree |v| <= cap,
//! with p-adic coefficients at a fixed relative precision. Variables flagged
//! as inverted admit negative exponents down to -cap. Monomials are ordered
//! graded-lexicographically (total |v| first, then entrywise), which fixes
//! serialization and matrix column order throughout the crate.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::padic::{PadicError, PadicScalar, Valuation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeriesError {
    #[error("series shapes are incompatible: {0}")]
    ShapeMismatch(String),
    #[error("constant term is not a unit (valuation {0})")]
    NotAUnit(i64),
    #[error("geometric inversion does not stabilize at this truncation")]
    NotInvertibleAtTruncation,
    #[error("divisor is not distinguished of any degree at this truncation")]
    NotDistinguished,
    #[error("Weierstrass division needs a univariate, non-Laurent series")]
    UnivariateOnly,
    #[error("negative exponent at a non-inverted position")]
    NegativeExponent,
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Exponent vector of a monomial. Entries may be negative only at inverted
/// positions of the ambient series.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonomialExp(pub Vec<i32>);

impl MonomialExp {
    pub fn total_degree(&self) -> u32 {
        self.0.iter().map(|e| e.unsigned_abs()).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    fn add(&self, other: &MonomialExp) -> MonomialExp {
        MonomialExp(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for MonomialExp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MonomialExp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Witness pair (epsilon, C) for the decay condition |c_v| <= C * p^(-eps |v|).
#[derive(Debug, Clone)]
pub struct DecayWitness {
    pub epsilon: Ratio<BigInt>,
    pub bound: Ratio<BigInt>,
}

impl DecayWitness {
    pub fn new(epsilon: Ratio<BigInt>, bound: Ratio<BigInt>) -> Self {
        assert!(epsilon > Ratio::zero(), "decay exponent must be positive");
        assert!(bound > Ratio::zero(), "decay bound must be positive");
        DecayWitness { epsilon, bound }
    }

    pub fn from_ints(eps_num: i64, eps_den: i64, bound_num: i64, bound_den: i64) -> Self {
        Self::new(
            Ratio::new(BigInt::from(eps_num), BigInt::from(eps_den)),
            Ratio::new(BigInt::from(bound_num), BigInt::from(bound_den)),
        )
    }
}

/// Truncated element of T_n or a Laurent localization.
#[derive(Debug, Clone)]
pub struct DaggerSeries {
    p: u64,
    digits: u32,
    cap: u32,
    inverted: Vec<bool>,
    coeffs: BTreeMap<MonomialExp, PadicScalar>,
    /// Certified absolute precision for coefficients absent from the map.
    /// Starts at `digits` and drops when a cancellation at lower absolute
    /// precision is erased from the support.
    zero_floor: i64,
}

impl DaggerSeries {
    pub fn zero(p: u64, digits: u32, cap: u32, inverted: Vec<bool>) -> Self {
        DaggerSeries { p, digits, cap, inverted, coeffs: BTreeMap::new(), zero_floor: digits as i64 }
    }

    pub fn one(p: u64, digits: u32, cap: u32, inverted: Vec<bool>) -> Self {
        let mut s = Self::zero(p, digits, cap, inverted);
        let nvars = s.nvars();
        s.insert(MonomialExp(vec![0; nvars]), PadicScalar::one(p, digits));
        s
    }

    /// A single monomial `c * xi^exp`.
    pub fn monomial(
        p: u64,
        digits: u32,
        cap: u32,
        inverted: Vec<bool>,
        exp: Vec<i32>,
        coeff: PadicScalar,
    ) -> Result<Self, SeriesError> {
        let mut s = Self::zero(p, digits, cap, inverted);
        for (i, &e) in exp.iter().enumerate() {
            if e < 0 && !s.inverted[i] {
                return Err(SeriesError::NegativeExponent);
            }
        }
        s.insert(MonomialExp(exp), coeff);
        Ok(s)
    }

    /// Convenience: integer-coefficient terms, e.g. `[(3, vec![1, 0])]`.
    pub fn from_terms(
        p: u64,
        digits: u32,
        cap: u32,
        inverted: Vec<bool>,
        terms: &[(i64, Vec<i32>)],
    ) -> Result<Self, SeriesError> {
        let mut s = Self::zero(p, digits, cap, inverted);
        for (c, exp) in terms {
            for (i, &e) in exp.iter().enumerate() {
                if e < 0 && !s.inverted[i] {
                    return Err(SeriesError::NegativeExponent);
                }
            }
            let coeff = PadicScalar::from_integer(p, digits, *c)?;
            s.accumulate(MonomialExp(exp.clone()), coeff);
        }
        Ok(s)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn nvars(&self) -> usize {
        self.inverted.len()
    }

    pub fn inverted(&self) -> &[bool] {
        &self.inverted
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = (&MonomialExp, &PadicScalar)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, exp: &MonomialExp) -> Option<&PadicScalar> {
        self.coeffs.get(exp)
    }

    pub fn constant_term(&self) -> Option<&PadicScalar> {
        self.coeffs.iter().find(|(m, _)| m.is_constant()).map(|(_, c)| c)
    }

    /// Certified absolute precision of the series as a whole.
    pub fn effective_abs_precision(&self) -> i64 {
        self.coeffs
            .values()
            .map(|c| c.abs_precision())
            .fold(self.zero_floor, i64::min)
    }

    pub fn max_total_degree(&self) -> u32 {
        self.coeffs.keys().map(|m| m.total_degree()).max().unwrap_or(0)
    }

    fn same_shape(&self, other: &Self) -> Result<(), SeriesError> {
        if self.p != other.p {
            return Err(SeriesError::ShapeMismatch(format!(
                "primes {} vs {}",
                self.p, other.p
            )));
        }
        if self.inverted != other.inverted {
            return Err(SeriesError::ShapeMismatch(
                "variable counts or inversion flags differ".into(),
            ));
        }
        Ok(())
    }

    /// Insert, replacing any existing coefficient; drops zeros and tracks the
    /// precision floor they certify.
    fn insert(&mut self, exp: MonomialExp, coeff: PadicScalar) {
        if exp.total_degree() > self.cap {
            return;
        }
        if coeff.is_zero() {
            self.zero_floor = self.zero_floor.min(coeff.abs_precision());
            self.coeffs.remove(&exp);
        } else {
            self.coeffs.insert(exp, coeff);
        }
    }

    /// Add into an existing slot.
    pub(crate) fn accumulate(&mut self, exp: MonomialExp, coeff: PadicScalar) {
        if exp.total_degree() > self.cap {
            return;
        }
        let next = match self.coeffs.get(&exp) {
            Some(existing) => existing.checked_add(&coeff).expect("same prime"),
            None => coeff,
        };
        self.insert(exp, next);
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.cap = self.cap.min(other.cap);
        out.digits = self.digits.min(other.digits);
        out.zero_floor = self.zero_floor.min(other.zero_floor);
        out.coeffs.retain(|m, _| m.total_degree() <= out.cap);
        for (m, c) in &other.coeffs {
            out.accumulate(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.checked_add(&other.checked_neg())
    }

    pub fn checked_neg(&self) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.checked_neg();
        }
        out
    }

    pub fn scalar_mul(&self, scalar: &PadicScalar) -> Result<Self, SeriesError> {
        if scalar.p() != self.p {
            return Err(SeriesError::ShapeMismatch("scalar prime differs".into()));
        }
        let mut out = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
        out.zero_floor = self.zero_floor;
        for (m, c) in &self.coeffs {
            out.insert(m.clone(), c.checked_mul(scalar)?);
        }
        Ok(out)
    }

    pub fn mul_integer(&self, n: i64) -> Result<Self, SeriesError> {
        self.scalar_mul(&PadicScalar::from_integer(self.p, self.digits, n)?)
    }

    /// Convolution truncated to the given cap (callers that normalize against
    /// relations first should pass a raw cap large enough to keep cross terms).
    pub fn mul_with_cap(&self, other: &Self, cap: u32) -> Result<Self, SeriesError> {
        self.same_shape(other)?;
        let mut out = Self::zero(self.p, self.digits.min(other.digits), cap, self.inverted.clone());
        out.zero_floor = self.zero_floor.min(other.zero_floor);
        for (ma, ca) in &self.coeffs {
            for (mb, cb) in &other.coeffs {
                let m = ma.add(mb);
                if m.total_degree() > cap {
                    continue;
                }
                out.accumulate(m, ca.checked_mul(cb)?);
            }
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.mul_with_cap(other, self.cap.min(other.cap))
    }

    pub fn truncate_cap(&self, cap: u32) -> Self {
        let mut out = self.clone();
        out.cap = cap;
        out.coeffs.retain(|m, _| m.total_degree() <= cap);
        out
    }

    /// Degree truncation that never discards p-adically significant data:
    /// keeps a monomial beyond the cap as long as its coefficient valuation
    /// is below `keep_val`. Dropping only valuation >= keep_val terms leaves
    /// every identity modulo p^keep_val intact; the drop is recorded in the
    /// series-level precision floor, while kept coefficients keep their own
    /// (possibly better) precision.
    pub fn compress(&self, cap: u32, keep_val: i64) -> Self {
        let mut dropped = false;
        let mut out = Self::zero(self.p, self.digits, self.cap.max(cap), self.inverted.clone());
        out.zero_floor = self.zero_floor;
        for (m, c) in &self.coeffs {
            if m.total_degree() <= cap || c.valuation().bound() < keep_val {
                out.insert(m.clone(), c.clone());
            } else {
                dropped = true;
            }
        }
        if dropped {
            out.zero_floor = out.zero_floor.min(keep_val);
        }
        out
    }

    /// Truncate every coefficient to absolute precision n and lower the
    /// floor accordingly: the whole series is then exactly "mod p^n" data.
    pub fn truncate_abs_all(&self, n: i64) -> Self {
        let mut out = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
        out.zero_floor = self.zero_floor.min(n);
        for (m, c) in &self.coeffs {
            out.insert(m.clone(), c.truncate_abs(n));
        }
        out
    }

    /// Lower the series-level precision floor (e.g. to inherit an input's).
    pub fn clamp_floor(&mut self, floor: i64) {
        self.zero_floor = self.zero_floor.min(floor);
    }

    /// Partial derivative with respect to variable `var`.
    pub fn partial_derivative(&self, var: usize) -> Result<Self, SeriesError> {
        let mut out = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
        out.zero_floor = self.zero_floor;
        for (m, c) in &self.coeffs {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut exp = m.0.clone();
            exp[var] = e - 1;
            out.accumulate(MonomialExp(exp), c.mul_integer(e as i64)?);
        }
        Ok(out)
    }

    /// Gauss norm: max over the support of |c_v|_p as an exact rational
    /// (p-power); 0 for the zero series.
    pub fn gauss_norm(&self) -> Ratio<BigInt> {
        let mut best: Option<i64> = None;
        for c in self.coeffs.values() {
            if let Valuation::Exact(v) = c.valuation() {
                best = Some(match best {
                    Some(b) => b.min(v),
                    None => v,
                });
            }
        }
        match best {
            None => Ratio::zero(),
            Some(v) => power_of_p(self.p, -v),
        }
    }

    /// Diagnostic check that the truncated support is consistent with the
    /// decay |c_v| <= C * p^(-eps |v|).
    pub fn overconvergence_check(&self, witness: &DecayWitness) -> bool {
        for (m, c) in &self.coeffs {
            let v = c.valuation().bound();
            // |c| = p^-v <= C p^(-eps d)  <=>  p^(eps d - v) <= C
            let d = m.total_degree() as i64;
            let exp = &witness.epsilon * rational_int(d) - rational_int(v);
            if !p_power_le(self.p, &exp, &witness.bound) {
                return false;
            }
        }
        true
    }

    /// Geometric-series inversion of a unit. Pure monomials with unit
    /// coefficient invert directly; otherwise the constant term must be a
    /// unit and powers of `1 - f/c` must vanish at truncation.
    pub fn invert_unit(&self) -> Result<Self, SeriesError> {
        if self.coeffs.len() == 1 {
            let (m, c) = self.coeffs.iter().next().unwrap();
            if let Valuation::Exact(0) = c.valuation() {
                let neg: Vec<i32> = m.0.iter().map(|e| -e).collect();
                for (i, &e) in neg.iter().enumerate() {
                    if e < 0 && !self.inverted[i] {
                        return Err(SeriesError::NegativeExponent);
                    }
                }
                return DaggerSeries::monomial(
                    self.p,
                    self.digits,
                    self.cap,
                    self.inverted.clone(),
                    neg,
                    c.checked_invert()?,
                );
            }
        }
        let c = match self.constant_term() {
            Some(c) => c.clone(),
            None => return Err(SeriesError::NotAUnit(i64::MAX)),
        };
        match c.valuation() {
            Valuation::Exact(0) => {}
            v => return Err(SeriesError::NotAUnit(v.bound())),
        }
        let c_inv = c.checked_invert()?;
        let one = Self::one(self.p, self.digits, self.cap, self.inverted.clone());
        // w = 1 - f/c, so f/c = 1 - w and 1/f = (1/c) * sum w^k.
        let w = one.checked_sub(&self.scalar_mul(&c_inv)?)?;
        let mut acc = one.clone();
        let mut term = one;
        let max_iter = (self.cap as u64 + 1) * (self.digits as u64 + 1) + 4;
        let mut iters = 0u64;
        loop {
            term = term.checked_mul(&w)?;
            if term.is_zero() {
                break;
            }
            acc = acc.checked_add(&term)?;
            iters += 1;
            if iters > max_iter {
                return Err(SeriesError::NotInvertibleAtTruncation);
            }
        }
        acc.scalar_mul(&c_inv)
    }

    /// `invert_unit` plus the decay bound the inversion preserves:
    /// eps' = min(eps/2, 1/N0) with C' = 1, where N0 is the first index from
    /// which the witnessed bound already implies |c_v| < p^(-eps|v|/2).
    pub fn invert_unit_with_witness(
        &self,
        witness: &DecayWitness,
    ) -> Result<(Self, DecayWitness), SeriesError> {
        let inv = self.invert_unit()?;
        // smallest m >= 1 with C^2 <= p^(eps m), exact rational comparison
        let mut n0: i64 = 1;
        let c_sq = &witness.bound * &witness.bound;
        while !p_power_le(self.p, &(rational_int(-n0) * &witness.epsilon), &c_sq.recip()) {
            n0 += 1;
            if n0 > 10_000 {
                break;
            }
        }
        let half = &witness.epsilon / rational_int(2);
        let alt = Ratio::new(BigInt::one(), BigInt::from(n0));
        let eps = if half < alt { half } else { alt };
        Ok((inv, DecayWitness::new(eps, Ratio::one())))
    }

    /// Weierstrass division f = q*g + r with deg r < d, for univariate
    /// non-Laurent series and g distinguished of degree d (g = unit * xi^d
    /// modulo p at truncation).
    pub fn weierstrass_divide(&self, g: &Self) -> Result<(Self, Self), SeriesError> {
        self.same_shape(g)?;
        if self.nvars() != 1 || self.inverted[0] {
            return Err(SeriesError::UnivariateOnly);
        }
        let d = g.distinguished_degree().ok_or(SeriesError::NotDistinguished)?;
        // g = g_low + xi^d * g_high with g_high a unit series and g_low = 0 mod p
        let mut g_low = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
        let mut g_high = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
        for (m, c) in &g.coeffs {
            let e = m.0[0] as u32;
            if e < d {
                g_low.insert(m.clone(), c.clone());
            } else {
                g_high.insert(MonomialExp(vec![(e - d) as i32]), c.clone());
            }
        }
        let g_high_inv = g_high.invert_unit()?;
        let mut quotient = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
        let mut rem = self.clone();
        for _ in 0..=self.digits {
            let mut high = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
            let mut low = Self::zero(self.p, self.digits, self.cap, self.inverted.clone());
            for (m, c) in &rem.coeffs {
                let e = m.0[0] as u32;
                if e >= d {
                    high.insert(MonomialExp(vec![(e - d) as i32]), c.clone());
                } else {
                    low.insert(m.clone(), c.clone());
                }
            }
            if high.is_zero() {
                return Ok((quotient, rem));
            }
            let dq = high.checked_mul(&g_high_inv)?;
            quotient = quotient.checked_add(&dq)?;
            // rem := low - dq * g_low; the >= xi^d part gains a power of p each pass
            rem = low.checked_sub(&dq.checked_mul(&g_low)?)?;
        }
        Ok((quotient, rem))
    }

    fn distinguished_degree(&self) -> Option<u32> {
        let mut d: Option<u32> = None;
        for (m, c) in &self.coeffs {
            let e = m.0[0] as u32;
            if let Valuation::Exact(0) = c.valuation() {
                d = Some(match d {
                    Some(cur) => cur.min(e),
                    None => e,
                });
            }
        }
        let d = d?;
        // everything below d must vanish mod p
        for (m, c) in &self.coeffs {
            if (m.0[0] as u32) < d && c.valuation().bound() < 1 {
                return None;
            }
        }
        Some(d)
    }

    /// Substitute `images[i]` for variable i. Inverted variables with negative
    /// exponents require the matching `inverse_images[i]`.
    pub fn substitute(
        &self,
        images: &[DaggerSeries],
        inverse_images: &[Option<DaggerSeries>],
        cap: u32,
    ) -> Result<DaggerSeries, SeriesError> {
        assert_eq!(images.len(), self.nvars());
        let template = &images[0];
        let mut out = DaggerSeries::zero(self.p, self.digits, cap, template.inverted.to_vec());
        out.zero_floor = self.zero_floor;
        for (m, c) in &self.coeffs {
            let mut term = DaggerSeries::one(self.p, self.digits, cap, template.inverted.to_vec());
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let base = if e > 0 {
                    images[i].clone()
                } else {
                    inverse_images[i]
                        .clone()
                        .ok_or_else(|| SeriesError::ShapeMismatch(
                            format!("no inverse image for variable {i}"),
                        ))?
                };
                for _ in 0..e.unsigned_abs() {
                    term = term.mul_with_cap(&base, cap)?;
                }
            }
            out = out.checked_add(&term.scalar_mul(c)?)?;
        }
        Ok(out)
    }

    /// Reduce every coefficient modulo p (residues in [0, p)), at one digit.
    pub fn reduce_mod_p(&self) -> DaggerSeries {
        let mut out = DaggerSeries::zero(self.p, 1, self.cap, self.inverted.clone());
        for (m, c) in &self.coeffs {
            if c.valuation().bound() >= 1 {
                continue;
            }
            let r = c.residue_mod(1).expect("valuation 0 residue");
            if r != 0 {
                out.insert(m.clone(), PadicScalar::from_integer(self.p, 1, r as i64).unwrap());
            }
        }
        out
    }

    /// Minimum valuation over the support (None for the zero series).
    pub fn min_valuation(&self) -> Option<i64> {
        self.coeffs.values().map(|c| c.valuation().bound()).min()
    }

    /// All coefficients vanish modulo p^n.
    pub fn is_zero_mod(&self, n: i64) -> bool {
        self.min_valuation().map(|v| v >= n).unwrap_or(true)
    }

    /// Equality modulo p^n at the shared truncation.
    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        match self.checked_sub(other) {
            Ok(d) => d.is_zero_mod(n),
            Err(_) => false,
        }
    }

    /// Exact division of every coefficient by p^k.
    pub fn shift_valuation(&self, k: i64) -> Result<Self, SeriesError> {
        let mut out = self.clone();
        let scale = PadicScalar::from_unit(self.p, self.digits.max(1), 1, -k)?;
        for c in out.coeffs.values_mut() {
            *c = c.checked_mul(&scale)?;
        }
        out.zero_floor -= k;
        Ok(out)
    }

    pub fn with_precision(&self, digits: u32, cap: u32) -> Self {
        let mut out = DaggerSeries::zero(self.p, digits, cap, self.inverted.clone());
        out.zero_floor = self.zero_floor.min(digits as i64);
        for (m, c) in &self.coeffs {
            out.insert(m.clone(), c.truncate_digits(digits));
        }
        out
    }

    /// Equality at the shared truncation: the difference has empty support.
    pub fn eq_at_truncation(&self, other: &Self) -> bool {
        match self.checked_sub(other) {
            Ok(d) => d.is_zero(),
            Err(_) => false,
        }
    }
}

impl fmt::Display for DaggerSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (i, &e) in m.0.iter().enumerate() {
                if e != 0 {
                    write!(f, "*x{i}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

fn rational_int(n: i64) -> Ratio<BigInt> {
    Ratio::from_integer(BigInt::from(n))
}

/// p^k as an exact rational, for k of either sign.
pub fn power_of_p(p: u64, k: i64) -> Ratio<BigInt> {
    let base = BigInt::from(p);
    if k >= 0 {
        Ratio::from_integer(base.pow(k as u32))
    } else {
        Ratio::new(BigInt::one(), base.pow((-k) as u32))
    }
}

/// Exact test p^q <= c for rational q: compare p^a <= c^b with q = a/b.
pub fn p_power_le(p: u64, q: &Ratio<BigInt>, c: &Ratio<BigInt>) -> bool {
    use num_traits::ToPrimitive;
    let b = q.denom().to_u32().expect("small denominator");
    let a = q.numer().to_i64().expect("small numerator");
    let lhs = power_of_p(p, a);
    let mut rhs = Ratio::one();
    for _ in 0..b {
        rhs *= c.clone();
    }
    lhs <= rhs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(p: u64, digits: u32, cap: u32, terms: &[(i64, i32)]) -> DaggerSeries {
        DaggerSeries::from_terms(
            p,
            digits,
            cap,
            vec![false],
            &terms.iter().map(|&(c, e)| (c, vec![e])).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn laurent(p: u64, digits: u32, cap: u32, terms: &[(i64, i32)]) -> DaggerSeries {
        DaggerSeries::from_terms(
            p,
            digits,
            cap,
            vec![true],
            &terms.iter().map(|&(c, e)| (c, vec![e])).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn gauss_norm_examples() {
        // p + xi over p = 3: the unit coefficient dominates
        let f = poly(3, 6, 8, &[(3, 0), (1, 1)]);
        assert_eq!(f.gauss_norm(), Ratio::from_integer(BigInt::from(1)));
        // p*xi1 + p^2*xi2
        let g = DaggerSeries::from_terms(
            5,
            6,
            8,
            vec![false, false],
            &[(5, vec![1, 0]), (25, vec![0, 1])],
        )
        .unwrap();
        assert_eq!(g.gauss_norm(), Ratio::new(BigInt::from(1), BigInt::from(5)));
        let z = DaggerSeries::zero(5, 6, 8, vec![false]);
        assert_eq!(z.gauss_norm(), Ratio::zero());
    }

    #[test]
    fn product_truncates_at_cap() {
        let f = poly(5, 4, 2, &[(1, 0), (1, 1)]);
        let g = poly(5, 4, 2, &[(1, 0), (-1, 1)]);
        let h = f.checked_mul(&g).unwrap();
        let expect = poly(5, 4, 2, &[(1, 0), (-1, 2)]);
        assert!(h.eq_at_truncation(&expect));
    }

    #[test]
    fn multiplicative_identity() {
        let f = poly(7, 5, 6, &[(3, 0), (2, 2), (1, 4)]);
        let one = DaggerSeries::one(7, 5, 6, vec![false]);
        assert!(f.checked_mul(&one).unwrap().eq_at_truncation(&f));
    }

    #[test]
    fn laurent_inverse_pair() {
        let xinv = laurent(5, 4, 6, &[(1, -1)]);
        let x = laurent(5, 4, 6, &[(1, 1)]);
        let prod = xinv.checked_mul(&x).unwrap();
        assert!(prod.eq_at_truncation(&DaggerSeries::one(5, 4, 6, vec![true])));
    }

    #[test]
    fn invert_one_minus_p_xi_is_geometric() {
        let p = 5u64;
        let f = poly(p, 6, 5, &[(1, 0), (-(p as i64), 1)]);
        let inv = f.invert_unit().unwrap();
        let mut expect = DaggerSeries::zero(p, 6, 5, vec![false]);
        for m in 0..=5i32 {
            let c = PadicScalar::from_integer(p, 6, (p as i64).pow(m as u32)).unwrap();
            expect = expect
                .checked_add(
                    &DaggerSeries::monomial(p, 6, 5, vec![false], vec![m], c).unwrap(),
                )
                .unwrap();
        }
        assert!(inv.eq_at_truncation(&expect));
        assert!(f.checked_mul(&inv).unwrap().eq_at_truncation(&DaggerSeries::one(p, 6, 5, vec![false])));
    }

    #[test]
    fn invert_constants() {
        let one = DaggerSeries::one(5, 6, 4, vec![false]);
        assert!(one.invert_unit().unwrap().eq_at_truncation(&one));
        let two = poly(5, 6, 4, &[(2, 0)]);
        let half = two.invert_unit().unwrap();
        assert!(two.checked_mul(&half).unwrap().eq_at_truncation(&one));
        let c = half.constant_term().unwrap();
        // 2 * 63 = 126 = 1 mod 5^3
        assert_eq!(c.residue_mod(3).unwrap(), 63);
    }

    #[test]
    fn invert_rejects_non_units() {
        let f = poly(5, 4, 4, &[(5, 0), (1, 1)]);
        assert!(matches!(f.invert_unit(), Err(SeriesError::NotAUnit(1))));
        // 1 - x - 1/x over p = 7: the geometric tail keeps a unit component
        // on the truncated degree window forever, so inversion must refuse
        let g = laurent(7, 4, 4, &[(1, 0), (-1, 1), (-1, -1)]);
        assert!(matches!(g.invert_unit(), Err(SeriesError::NotInvertibleAtTruncation)));
        // the same series over p = 5 happens to stabilize at this window
        // (truncated powers of x + 1/x vanish mod 5^4); the inverse must verify
        let h = laurent(5, 4, 4, &[(1, 0), (-1, 1), (-1, -1)]);
        let inv = h.invert_unit().unwrap();
        assert!(h
            .checked_mul(&inv)
            .unwrap()
            .eq_at_truncation(&DaggerSeries::one(5, 4, 4, vec![true])));
    }

    #[test]
    fn inversion_is_two_sided_randomized() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..40 {
            let mut terms = vec![(1 + rng.gen_range(0..4) * 5, 0)];
            for e in 1..5 {
                terms.push((rng.gen_range(-10..10), e));
            }
            let f = poly(5, 6, 8, &terms);
            let inv = f.invert_unit().unwrap();
            let prod = f.checked_mul(&inv).unwrap();
            assert!(prod.eq_at_truncation(&DaggerSeries::one(5, 6, 8, vec![false])));
        }
    }

    #[test]
    fn weierstrass_divide_by_xi() {
        let p = 7u64;
        // f = xi^2 + p*xi + 1, g = xi: q = xi + p, r = 1
        let f = poly(p, 6, 8, &[(1, 2), (p as i64, 1), (1, 0)]);
        let g = poly(p, 6, 8, &[(1, 1)]);
        let (q, r) = f.weierstrass_divide(&g).unwrap();
        assert!(q.eq_at_truncation(&poly(p, 6, 8, &[(1, 1), (p as i64, 0)])));
        assert!(r.eq_at_truncation(&poly(p, 6, 8, &[(1, 0)])));
    }

    #[test]
    fn weierstrass_self_division() {
        let p = 5u64;
        let g = poly(p, 6, 8, &[(1, 2), (-(p as i64), 0)]);
        let (q, r) = g.weierstrass_divide(&g).unwrap();
        assert!(q.eq_at_truncation(&DaggerSeries::one(p, 6, 8, vec![false])));
        assert!(r.is_zero());
    }

    #[test]
    fn weierstrass_recomposition_randomized() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(97);
        let p = 5u64;
        let g = poly(p, 6, 8, &[(1, 2), (-(p as i64), 0)]);
        for _ in 0..30 {
            let mut terms = Vec::new();
            for e in 0..=8 {
                terms.push((rng.gen_range(-30..30), e));
            }
            let f = poly(p, 6, 8, &terms);
            let (q, r) = f.weierstrass_divide(&g).unwrap();
            assert!(r.max_total_degree() < 2);
            let back = q.checked_mul(&g).unwrap().checked_add(&r).unwrap();
            assert!(back.eq_at_truncation(&f), "recomposition failed");
        }
    }

    #[test]
    fn weierstrass_rejects_bad_inputs() {
        let f = laurent(5, 4, 4, &[(1, 1)]);
        assert!(matches!(f.weierstrass_divide(&f), Err(SeriesError::UnivariateOnly)));
        let g = poly(5, 4, 4, &[(5, 1), (5, 0)]); // vanishes mod p: no distinguished degree
        let h = poly(5, 4, 4, &[(1, 2)]);
        assert!(matches!(h.weierstrass_divide(&g), Err(SeriesError::NotDistinguished)));
    }

    #[test]
    fn overconvergence_examples() {
        let p = 5u64;
        let mut f = DaggerSeries::zero(p, 8, 6, vec![false]);
        for m in 0..=6i32 {
            let c = PadicScalar::from_integer(p, 8, (p as i64).pow(m as u32)).unwrap();
            f = f
                .checked_add(&DaggerSeries::monomial(p, 8, 6, vec![false], vec![m], c).unwrap())
                .unwrap();
        }
        let w = DecayWitness::from_ints(1, 2, 1, 1);
        assert!(f.overconvergence_check(&w));
        let g = poly(p, 8, 6, &[(1, 0), (1, 1), (1, 2)]);
        assert!(!g.overconvergence_check(&w));
        let z = DaggerSeries::zero(p, 8, 6, vec![false]);
        assert!(z.overconvergence_check(&w));
    }

    #[test]
    fn overconvergence_monotonicity() {
        let p = 3u64;
        let f = poly(p, 8, 6, &[(1, 0), (3, 1), (9, 2), (27, 3)]);
        // monotone in C
        let tight = DecayWitness::from_ints(1, 1, 1, 1);
        let loose = DecayWitness::from_ints(1, 1, 100, 1);
        if f.overconvergence_check(&tight) {
            assert!(f.overconvergence_check(&loose));
        }
        // anti-monotone in eps
        let small_eps = DecayWitness::from_ints(1, 2, 1, 1);
        if f.overconvergence_check(&tight) {
            assert!(f.overconvergence_check(&small_eps));
        }
    }

    #[test]
    fn gauss_norm_multiplicative_randomized() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = 7u64;
        for _ in 0..50 {
            // keep deg f + deg g <= cap so truncation cannot interfere
            let f = poly(p, 8, 16, &[(rng.gen_range(1..7), 0), (rng.gen_range(1..50), rng.gen_range(1..5))]);
            let g = poly(p, 8, 16, &[(rng.gen_range(1..7), 0), (rng.gen_range(1..50), rng.gen_range(1..5))]);
            let prod = f.checked_mul(&g).unwrap();
            assert_eq!(prod.gauss_norm(), f.gauss_norm() * g.gauss_norm());
        }
    }

    #[test]
    fn substitution_composes_powers() {
        // x -> x^2 + 1 applied to x^2 + x
        let f = poly(5, 6, 10, &[(1, 2), (1, 1)]);
        let img = poly(5, 6, 10, &[(1, 2), (1, 0)]);
        let out = f.substitute(&[img], &[None], 10).unwrap();
        let expect = poly(5, 6, 10, &[(1, 4), (3, 2), (1, 0), (1, 2), (1, 0)]);
        // (x^2+1)^2 + (x^2+1) = x^4 + 2x^2 + 1 + x^2 + 1 = x^4 + 3x^2 + 2
        let expect2 = poly(5, 6, 10, &[(1, 4), (3, 2), (2, 0)]);
        assert!(out.eq_at_truncation(&expect2));
        let _ = expect;
    }

    #[test]
    fn decay_witness_through_inversion() {
        let p = 5u64;
        let f = poly(p, 6, 5, &[(1, 0), (-(p as i64), 1)]);
        let w = DecayWitness::from_ints(1, 1, 1, 1);
        let (inv, w2) = f.invert_unit_with_witness(&w).unwrap();
        assert!(inv.overconvergence_check(&w2));
        assert!(w2.epsilon <= w.epsilon);
    }
}
