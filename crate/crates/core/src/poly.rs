//! Dense univariate polynomials over Z_p (or Q_p) at a fixed working
//! precision. These back the hyperelliptic cohomology reductions: division
//! with remainder by the monic defining polynomial, derivatives, and the
//! Bezout pair for a squarefree polynomial and its derivative.

use crate::padic::{PadicError, PadicScalar};

#[derive(Debug, Clone)]
pub struct ZpPoly {
    p: u64,
    digits: u32,
    /// Ascending coefficients; no trailing (exactly) zero entries.
    coeffs: Vec<PadicScalar>,
}

impl ZpPoly {
    pub fn zero(p: u64, digits: u32) -> Self {
        ZpPoly { p, digits, coeffs: Vec::new() }
    }

    pub fn from_scalars(p: u64, digits: u32, coeffs: Vec<PadicScalar>) -> Self {
        let mut out = ZpPoly { p, digits, coeffs };
        out.trim();
        out
    }

    pub fn from_integers(p: u64, digits: u32, coeffs: &[i64]) -> Self {
        let scalars = coeffs
            .iter()
            .map(|&c| PadicScalar::from_integer(p, digits, c).expect("small precision"))
            .collect();
        Self::from_scalars(p, digits, scalars)
    }

    pub fn monomial(p: u64, digits: u32, coeff: PadicScalar, degree: usize) -> Self {
        let mut coeffs = vec![PadicScalar::zero(p, digits as i64); degree];
        coeffs.push(coeff);
        Self::from_scalars(p, digits, coeffs)
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or None for zero.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeff(&self, i: usize) -> PadicScalar {
        self.coeffs
            .get(i)
            .cloned()
            .unwrap_or_else(|| PadicScalar::zero(self.p, self.digits as i64))
    }

    pub fn coeffs(&self) -> &[PadicScalar] {
        &self.coeffs
    }

    pub fn leading(&self) -> Option<&PadicScalar> {
        self.coeffs.last()
    }

    pub fn add(&self, other: &Self) -> Result<Self, PadicError> {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut coeffs = Vec::with_capacity(n);
        for i in 0..n {
            coeffs.push(self.coeff(i).checked_add(&other.coeff(i))?);
        }
        Ok(Self::from_scalars(self.p, self.digits, coeffs))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PadicError> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Self::from_scalars(
            self.p,
            self.digits,
            self.coeffs.iter().map(|c| c.checked_neg()).collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PadicError> {
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zero(self.p, self.digits));
        }
        let mut coeffs =
            vec![PadicScalar::zero(self.p, self.digits as i64); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].checked_add(&a.checked_mul(b)?)?;
            }
        }
        Ok(Self::from_scalars(self.p, self.digits, coeffs))
    }

    pub fn scalar_mul(&self, s: &PadicScalar) -> Result<Self, PadicError> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.checked_mul(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_scalars(self.p, self.digits, coeffs))
    }

    pub fn mul_integer(&self, n: i64) -> Result<Self, PadicError> {
        self.scalar_mul(&PadicScalar::from_integer(self.p, self.digits, n)?)
    }

    /// Multiply every coefficient by p^t (an exact valuation shift).
    pub fn scale_p_power(&self, p: u64, t: i64) -> Result<Self, PadicError> {
        if t == 0 {
            return Ok(self.clone());
        }
        self.scalar_mul(&PadicScalar::from_unit(p, self.digits.max(1), 1, t)?)
    }

    pub fn derivative(&self) -> Result<Self, PadicError> {
        if self.coeffs.len() <= 1 {
            return Ok(Self::zero(self.p, self.digits));
        }
        let mut coeffs = Vec::with_capacity(self.coeffs.len() - 1);
        for (i, c) in self.coeffs.iter().enumerate().skip(1) {
            coeffs.push(c.mul_integer(i as i64)?);
        }
        Ok(Self::from_scalars(self.p, self.digits, coeffs))
    }

    pub fn pow(&self, e: u32) -> Result<Self, PadicError> {
        let mut acc = Self::from_integers(self.p, self.digits, &[1]);
        for _ in 0..e {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// Division with remainder by a divisor whose leading coefficient is a
    /// unit (in particular any monic divisor).
    pub fn divrem(&self, divisor: &Self) -> Result<(Self, Self), PadicError> {
        let d = divisor.degree().expect("division by zero polynomial");
        let lead_inv = divisor.leading().unwrap().checked_invert()?;
        let mut rem = self.clone();
        let mut quo = vec![PadicScalar::zero(self.p, self.digits as i64); self.coeffs.len()];
        while let Some(n) = rem.degree() {
            if n < d {
                break;
            }
            let factor = rem.coeffs[n].checked_mul(&lead_inv)?;
            quo[n - d] = quo[n - d].checked_add(&factor)?;
            // rem -= factor * x^(n-d) * divisor
            let mut coeffs = rem.coeffs.clone();
            for (i, c) in divisor.coeffs.iter().enumerate() {
                coeffs[n - d + i] =
                    coeffs[n - d + i].checked_sub(&factor.checked_mul(c)?)?;
            }
            // the leading term cancels exactly
            coeffs[n] = PadicScalar::zero(self.p, coeffs[n].abs_precision());
            rem = Self::from_scalars(self.p, self.digits, coeffs);
        }
        Ok((Self::from_scalars(self.p, self.digits, quo), rem))
    }

    pub fn eval(&self, x: &PadicScalar) -> Result<PadicScalar, PadicError> {
        let mut acc = PadicScalar::zero(self.p, self.digits as i64);
        for c in self.coeffs.iter().rev() {
            acc = acc.checked_mul(x)?.checked_add(c)?;
        }
        Ok(acc)
    }

    pub fn eq_at_precision(&self, other: &Self) -> bool {
        match self.sub(other) {
            Ok(d) => d.is_zero(),
            Err(_) => false,
        }
    }

    /// Coefficients reduced mod p as small integers (degree-trimmed).
    pub fn mod_p(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .coeffs
            .iter()
            .map(|c| {
                if c.valuation().bound() >= 1 {
                    0
                } else {
                    c.residue_mod(1).expect("integral coefficient")
                }
            })
            .collect();
        while matches!(out.last(), Some(0)) {
            out.pop();
        }
        out
    }
}

/// gcd of two polynomials over F_p (coefficients ascending, trimmed), monic.
pub fn fp_gcd(p: u64, a: &[u64], b: &[u64]) -> Vec<u64> {
    let (mut r0, mut r1) = (trim(a.to_vec()), trim(b.to_vec()));
    while !r1.is_empty() {
        let r = fp_rem(p, &r0, &r1);
        r0 = r1;
        r1 = r;
    }
    fp_make_monic(p, &r0)
}

/// Extended Euclid over F_p: returns (u, v) with u*a + v*b = gcd (monic).
pub fn fp_ext_gcd(p: u64, a: &[u64], b: &[u64]) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let (mut r0, mut r1) = (trim(a.to_vec()), trim(b.to_vec()));
    let (mut u0, mut u1) = (vec![1u64], vec![]);
    let (mut v0, mut v1) = (vec![], vec![1u64]);
    while !r1.is_empty() {
        let (q, r) = fp_divrem(p, &r0, &r1);
        let u = fp_sub(p, &u0, &fp_mul(p, &q, &u1));
        let v = fp_sub(p, &v0, &fp_mul(p, &q, &v1));
        r0 = r1;
        r1 = r;
        u0 = u1;
        u1 = u;
        v0 = v1;
        v1 = v;
    }
    // normalize gcd to monic
    let lead = *r0.last().expect("gcd of nonzero inputs");
    let inv = fp_inv(p, lead);
    (
        fp_scale(p, &r0, inv),
        fp_scale(p, &u0, inv),
        fp_scale(p, &v0, inv),
    )
}

fn trim(mut v: Vec<u64>) -> Vec<u64> {
    while matches!(v.last(), Some(0)) {
        v.pop();
    }
    v
}

fn fp_inv(p: u64, a: u64) -> u64 {
    // Fermat
    let mut acc = 1u64;
    let mut base = a % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        e >>= 1;
    }
    acc
}

fn fp_scale(p: u64, a: &[u64], s: u64) -> Vec<u64> {
    trim(a.iter().map(|&c| c * s % p).collect())
}

fn fp_make_monic(p: u64, a: &[u64]) -> Vec<u64> {
    match a.last() {
        None => Vec::new(),
        Some(&l) => fp_scale(p, a, fp_inv(p, l)),
    }
}

fn fp_mul(p: u64, a: &[u64], b: &[u64]) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x * y) % p;
        }
    }
    trim(out)
}

fn fp_sub(p: u64, a: &[u64], b: &[u64]) -> Vec<u64> {
    let n = a.len().max(b.len());
    let mut out = vec![0u64; n];
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(0);
        let y = b.get(i).copied().unwrap_or(0);
        out[i] = (x + p - y) % p;
    }
    trim(out)
}

fn fp_divrem(p: u64, a: &[u64], b: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let db = b.len() - 1;
    let lead_inv = fp_inv(p, *b.last().unwrap());
    let mut rem = a.to_vec();
    let mut quo = vec![0u64; a.len().max(1)];
    while rem.len() > db {
        let n = rem.len() - 1;
        let factor = rem[n] * lead_inv % p;
        if factor != 0 {
            quo[n - db] = factor;
            for (i, &c) in b.iter().enumerate() {
                rem[n - db + i] = (rem[n - db + i] + p - factor * c % p) % p;
            }
        }
        rem.pop();
        rem = trim(rem);
        if rem.is_empty() {
            break;
        }
    }
    (trim(quo), trim(rem))
}

fn fp_rem(p: u64, a: &[u64], b: &[u64]) -> Vec<u64> {
    fp_divrem(p, a, b).1
}

/// Bezout pair (a, b) with a*f + b*g = 1 at working precision, for f, g
/// coprime mod p. Lifted from the mod-p pair by Newton iteration.
pub fn bezout_pair(f: &ZpPoly, g: &ZpPoly) -> Result<(ZpPoly, ZpPoly), PadicError> {
    let p = f.p();
    let digits = f.digits();
    let (gcd, u, v) = fp_ext_gcd(p, &f.mod_p(), &g.mod_p());
    assert_eq!(gcd, vec![1], "inputs are not coprime mod p");
    let to_poly = |c: &[u64]| {
        ZpPoly::from_integers(p, digits, &c.iter().map(|&x| x as i64).collect::<Vec<_>>())
    };
    let one = ZpPoly::from_integers(p, digits, &[1]);
    let mut a = to_poly(&u);
    let mut b = to_poly(&v);
    for _ in 0..=digits {
        let r = one.sub(&a.mul(f)?.add(&b.mul(g)?)?)?;
        if r.is_zero() {
            return Ok((a, b));
        }
        // (a, b) *= (1 + r): the defect squares each round
        let lift = one.add(&r)?;
        a = a.mul(&lift)?;
        b = b.mul(&lift)?;
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divrem_by_monic() {
        let p = 7u64;
        let f = ZpPoly::from_integers(p, 6, &[1, 1, 0, 1]); // x^3 + x + 1
        let g = ZpPoly::from_integers(p, 6, &[2, 0, 1]); // x^2 + 2
        let (q, r) = f.divrem(&g).unwrap();
        let back = q.mul(&g).unwrap().add(&r).unwrap();
        assert!(back.eq_at_precision(&f));
        assert!(r.degree().unwrap_or(0) < 2);
    }

    #[test]
    fn bezout_for_squarefree() {
        let p = 7u64;
        let f = ZpPoly::from_integers(p, 8, &[1, 1, 0, 1]);
        let fp = f.derivative().unwrap();
        let (a, b) = bezout_pair(&f, &fp).unwrap();
        let one = ZpPoly::from_integers(p, 8, &[1]);
        let combo = a.mul(&f).unwrap().add(&b.mul(&fp).unwrap()).unwrap();
        assert!(combo.eq_at_precision(&one));
    }

    #[test]
    fn bezout_when_derivative_degenerates_mod_p() {
        // p = 3 divides the leading 3x^2 of f' for f = x^3 - x, so the
        // derivative drops degree mod p
        let p = 3u64;
        let f = ZpPoly::from_integers(p, 8, &[0, -1, 0, 1]);
        let fp = f.derivative().unwrap();
        let (a, b) = bezout_pair(&f, &fp).unwrap();
        let combo = a.mul(&f).unwrap().add(&b.mul(&fp).unwrap()).unwrap();
        assert!(combo.eq_at_precision(&ZpPoly::from_integers(p, 8, &[1])));
    }

    #[test]
    fn fp_gcd_detects_square_factors() {
        // x^3 mod 3 shares x^2 with its derivative 3x^2 = 0... use p = 5:
        // f = x^2, f' = 2x: gcd = x
        assert_eq!(fp_gcd(5, &[0, 0, 1], &[0, 2]), vec![0, 1]);
        // squarefree: gcd = 1
        assert_eq!(fp_gcd(5, &[1, 1, 0, 1], &[1, 0, 3]), vec![1]);
    }

    #[test]
    fn eval_horner() {
        let p = 5u64;
        let f = ZpPoly::from_integers(p, 6, &[1, 2, 3]);
        let x = PadicScalar::from_integer(p, 6, 2).unwrap();
        let y = f.eval(&x).unwrap();
        assert!(y.eq_at_common_precision(&PadicScalar::from_integer(p, 6, 17).unwrap()));
    }
}
