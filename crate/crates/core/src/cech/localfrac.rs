//! Localizations of the one-variable dagger ring at monic linear
//! polynomials, in partial-fraction normal form: an element of
//! A<1/prod(x - c_i)> is a polynomial plus pole parts at each center. With
//! pairwise center differences that are p-adic units, sums, differences and
//! inclusion maps are exact at truncation, which makes the kernel-equals-
//! image check of the localization sequence decidable sample by sample.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::padic::PadicScalar;
use crate::poly::ZpPoly;
use crate::series::{DaggerSeries, MonomialExp};

/// poly + sum over centers of sum_j coeffs[j] / (x - c)^(j+1).
#[derive(Debug, Clone)]
pub struct PoleElem {
    pub p: u64,
    pub digits: u32,
    pub poly: ZpPoly,
    pub poles: BTreeMap<i64, Vec<PadicScalar>>,
}

impl PoleElem {
    pub fn zero(p: u64, digits: u32) -> Self {
        PoleElem { p, digits, poly: ZpPoly::zero(p, digits), poles: BTreeMap::new() }
    }

    pub fn from_poly(poly: ZpPoly) -> Self {
        PoleElem { p: poly.p(), digits: poly.digits(), poly, poles: BTreeMap::new() }
    }

    pub fn set_pole(&mut self, center: i64, coeffs: Vec<PadicScalar>) {
        if coeffs.iter().all(|c| c.is_zero()) {
            self.poles.remove(&center);
        } else {
            self.poles.insert(center, coeffs);
        }
    }

    pub fn pole_centers(&self) -> impl Iterator<Item = i64> + '_ {
        self.poles.keys().copied()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.poly = out.poly.sub(&other.poly).expect("same prime");
        for (c, coeffs) in &other.poles {
            let mut mine = out.poles.remove(c).unwrap_or_default();
            while mine.len() < coeffs.len() {
                mine.push(PadicScalar::zero(self.p, self.digits as i64));
            }
            for (i, v) in coeffs.iter().enumerate() {
                mine[i] = mine[i].checked_sub(v).expect("same prime");
            }
            out.set_pole(*c, mine);
        }
        out
    }

    pub fn is_zero_mod(&self, n: i64) -> bool {
        let poly_ok = self
            .poly
            .coeffs()
            .iter()
            .all(|c| c.is_zero() || c.valuation().bound() >= n);
        let poles_ok = self
            .poles
            .values()
            .flatten()
            .all(|c| c.is_zero() || c.valuation().bound() >= n);
        poly_ok && poles_ok
    }

    /// Keep only poles at the allowed centers; any other pole disqualifies
    /// the element from the target ring (returns None).
    pub fn restrict_to(&self, allowed: &[i64]) -> Option<Self> {
        for c in self.poles.keys() {
            if !allowed.contains(c) {
                if self.poles[c].iter().all(|v| v.is_zero()) {
                    continue;
                }
                return None;
            }
        }
        Some(self.clone())
    }

    /// Random element with poles at the given centers.
    pub fn random(
        rng: &mut ChaCha8Rng,
        p: u64,
        digits: u32,
        centers: &[i64],
        poly_degree: usize,
        pole_order: usize,
    ) -> Self {
        let coeffs: Vec<i64> = (0..=poly_degree).map(|_| rng.gen_range(-50..50)).collect();
        let mut out = Self::from_poly(ZpPoly::from_integers(p, digits, &coeffs));
        for &c in centers {
            let pole: Vec<PadicScalar> = (0..pole_order)
                .map(|_| PadicScalar::from_integer(p, digits, rng.gen_range(-50..50)).unwrap())
                .collect();
            out.set_pole(c, pole);
        }
        out
    }
}

/// Parse a series as either a unit constant (Ok(None)) or a monic linear
/// polynomial x - c (Ok(Some(c))); anything else is unsupported.
pub fn parse_linear(series: &DaggerSeries) -> Option<Option<i64>> {
    if series.nvars() != 1 || series.inverted()[0] {
        return None;
    }
    let constant = series.coeff(&MonomialExp(vec![0]));
    let linear = series.coeff(&MonomialExp(vec![1]));
    let higher = series.support().any(|(m, _)| m.0[0] > 1);
    if higher {
        return None;
    }
    match linear {
        None => {
            // constant: must be a unit
            let c = constant?;
            if c.valuation().bound() == 0 {
                Some(None)
            } else {
                None
            }
        }
        Some(l) => {
            if !l.eq_at_common_precision(&PadicScalar::one(series.p(), series.digits())) {
                return None;
            }
            match constant {
                None => Some(Some(0)),
                Some(c) => {
                    // x - center: read the center from the constant term
                    let r = c.checked_neg().residue_mod(1).ok()? as i64;
                    // keep centers in a small canonical range (0..p)
                    Some(Some(r))
                }
            }
        }
    }
}
