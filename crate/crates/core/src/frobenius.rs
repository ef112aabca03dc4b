//! Frobenius lifts on the supported families and the psi operator.
//!
//! A lift stores the images F(xi_i) (and inverses for Laurent variables) of
//! an algebra endomorphism reducing to x -> x^p mod p. For hyperelliptic
//! presentations F(y) completes F(x) through the square-root series
//!
//! ```text
//! F(y) = y^p * (1 + (f(F(x)) - f(x)^p) * y^(-2p))^(1/2)
//! ```
//!
//! whose increment has positive valuation, so the binomial series stabilizes
//! within the working precision.
//!
//! The psi operator is computed at the chain level for default lifts through
//! the Frobenius decomposition g = sum_i F(h_i) x^i: on functions
//! psi(g) = p*h_0 and on one-forms psi(g dx) = h_(p-1) dx. The decomposition
//! is found one p-digit at a time: an explicit mod-p splitting (exact in the
//! canonical monomial basis), then a residual that gains a power of p each
//! round.

use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

use crate::algebra::{
    poly_to_series, AlgebraError, AlgebraPresentation, DifferentialForm, FamilyTag,
};
use crate::padic::{PadicError, PadicScalar};
use crate::poly::ZpPoly;
use crate::series::{DaggerSeries, MonomialExp, SeriesError};

#[derive(Debug, Error)]
pub enum FrobeniusError {
    #[error("family has no built-in lift: {0}")]
    UnsupportedFamily(String),
    #[error("lift verification failed: {0}")]
    InvalidLift(String),
    #[error("Frobenius decomposition stalled at digit {round}: residual keeps a unit coefficient")]
    DecompositionStalled { round: u32 },
    #[error("chain-level psi is defined for the default lift only")]
    NonDefaultLift,
    #[error("psi acts on degrees 0 and 1 only")]
    DegreeTooHigh,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Substitution homomorphism between presentations, with cached powers of
/// the variable images.
/// Degree field large enough that arithmetic never trims by degree; size
/// control happens through `DaggerSeries::compress` instead.
const OPEN_CAP: u32 = u32::MAX / 8;

pub struct AlgebraHom {
    source: AlgebraPresentation,
    target: AlgebraPresentation,
    images: Vec<DaggerSeries>,
    inverse_images: Vec<Option<DaggerSeries>>,
    cap: u32,
    keep_val: i64,
    power_cache: RefCell<HashMap<(usize, i32), DaggerSeries>>,
}

impl AlgebraHom {
    /// `cap` is the compression degree for substitution products (may exceed
    /// the target's reporting cap); monomials beyond it are kept anyway while
    /// their coefficient valuation is below `keep_val`.
    pub fn new(
        source: AlgebraPresentation,
        target: AlgebraPresentation,
        images: Vec<DaggerSeries>,
        inverse_images: Vec<Option<DaggerSeries>>,
        cap: u32,
    ) -> Self {
        assert_eq!(images.len(), source.nvars());
        let keep_val = target.digits() as i64;
        AlgebraHom {
            source,
            target,
            images,
            inverse_images,
            cap,
            keep_val,
            power_cache: RefCell::new(HashMap::new()),
        }
    }

    /// Lower the tail-keeping threshold: beyond-cap monomials are dropped
    /// once their valuation reaches `keep_val`, so results are certified
    /// modulo p^keep_val while the scalar digits can run higher to absorb
    /// reduction losses.
    pub fn set_keep_val(&mut self, keep_val: i64) {
        self.keep_val = keep_val;
        self.power_cache.borrow_mut().clear();
    }

    pub fn keep_val(&self) -> i64 {
        self.keep_val
    }

    fn mul_keep(&self, a: &DaggerSeries, b: &DaggerSeries) -> Result<DaggerSeries, FrobeniusError> {
        let raw = self.target.mul_with_cap(a, b, OPEN_CAP)?;
        Ok(raw.compress(self.cap, self.keep_val))
    }

    pub fn source(&self) -> &AlgebraPresentation {
        &self.source
    }

    pub fn target(&self) -> &AlgebraPresentation {
        &self.target
    }

    pub fn image(&self, var: usize) -> &DaggerSeries {
        &self.images[var]
    }

    pub fn working_cap(&self) -> u32 {
        self.cap
    }

    fn power(&self, var: usize, exp: i32) -> Result<DaggerSeries, FrobeniusError> {
        if exp == 0 {
            return Ok(self.target.one_element());
        }
        if let Some(hit) = self.power_cache.borrow().get(&(var, exp)) {
            return Ok(hit.clone());
        }
        let step = if exp > 0 {
            self.images[var].clone()
        } else {
            self.inverse_images[var]
                .clone()
                .ok_or_else(|| FrobeniusError::InvalidLift(format!("variable {var} has no inverse image")))?
        };
        let prev = self.power(var, exp - exp.signum())?;
        let out = self.mul_keep(&prev, &step)?;
        self.power_cache.borrow_mut().insert((var, exp), out.clone());
        Ok(out)
    }

    /// Apply to a degree-0 element.
    pub fn apply(&self, series: &DaggerSeries) -> Result<DaggerSeries, FrobeniusError> {
        let mut out = DaggerSeries::zero(
            self.target.p(),
            self.target.digits(),
            OPEN_CAP,
            self.target.inverted().to_vec(),
        );
        for (m, c) in series.support() {
            let mut term = self.target.one_element().truncate_cap(OPEN_CAP);
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                term = self.mul_keep(&term, &self.power(i, e)?)?;
            }
            out = out.checked_add(&term.scalar_mul(c)?)?;
        }
        Ok(out)
    }

    /// Pull back a differential form: substitute on coefficients and replace
    /// d(xi_j) by sum_i (d image_j / d xi_i) d(xi_i).
    pub fn pull_back(&self, form: &DifferentialForm) -> Result<DifferentialForm, FrobeniusError> {
        let mut out = DifferentialForm::zero(form.degree());
        for (wedge, g) in form.terms() {
            let coeff = self.apply(g)?;
            self.expand_wedge(&coeff, wedge, 0, &mut Vec::new(), 1, &mut out)?;
        }
        Ok(out)
    }

    fn expand_wedge(
        &self,
        acc: &DaggerSeries,
        wedge: &[usize],
        pos: usize,
        chosen: &mut Vec<usize>,
        sign: i32,
        out: &mut DifferentialForm,
    ) -> Result<(), FrobeniusError> {
        if pos == wedge.len() {
            // antisymmetrize the chosen indices
            let mut perm_sign = sign;
            let mut sorted: Vec<usize> = Vec::with_capacity(chosen.len());
            for &i in chosen.iter() {
                let insert_at = sorted.iter().take_while(|&&s| s < i).count();
                if sorted.contains(&i) {
                    return Ok(());
                }
                if (sorted.len() - insert_at) % 2 == 1 {
                    perm_sign = -perm_sign;
                }
                sorted.insert(insert_at, i);
            }
            let series = if perm_sign < 0 { acc.checked_neg() } else { acc.clone() };
            out.add_term(sorted, series);
            return Ok(());
        }
        let j = wedge[pos];
        for i in 0..self.target.nvars() {
            let partial = self.images[j].partial_derivative(i)?;
            if partial.is_zero() {
                continue;
            }
            let next = self.mul_keep(acc, &partial)?;
            if next.is_zero() {
                continue;
            }
            chosen.push(i);
            self.expand_wedge(&next, wedge, pos + 1, chosen, sign, out)?;
            chosen.pop();
        }
        Ok(())
    }

    /// Relations of the source must map to zero in the target (at the
    /// target's working precision).
    pub fn verify_homomorphism(&self) -> Result<(), FrobeniusError> {
        for r in self.source.relations() {
            let image = self.apply(r)?;
            let reduced = self.target.normalize_with_cap(&image, self.target.cap())?;
            if !reduced.is_zero_mod(self.target.digits() as i64) {
                return Err(FrobeniusError::InvalidLift(format!(
                    "relation does not map into the ideal: {reduced}"
                )));
            }
        }
        Ok(())
    }
}

/// A lift of Frobenius to the presented algebra.
pub struct FrobeniusLift {
    hom: AlgebraHom,
    /// d F(x) / dx as a series; used by pullbacks of one-forms and checks.
    is_default: bool,
}

impl FrobeniusLift {
    pub fn hom(&self) -> &AlgebraHom {
        &self.hom
    }

    pub fn algebra(&self) -> &AlgebraPresentation {
        self.hom.source()
    }

    pub fn is_default(&self) -> bool {
        self.is_default
    }

    /// See [`AlgebraHom::set_keep_val`].
    pub fn with_keep_val(mut self, keep_val: i64) -> Self {
        self.hom.set_keep_val(keep_val);
        self
    }

    pub fn image(&self, var: usize) -> &DaggerSeries {
        self.hom.image(var)
    }

    pub fn apply(&self, series: &DaggerSeries) -> Result<DaggerSeries, FrobeniusError> {
        self.hom.apply(series)
    }

    pub fn pull_back(&self, form: &DifferentialForm) -> Result<DifferentialForm, FrobeniusError> {
        self.hom.pull_back(form)
    }

    /// F(xi) = xi^p mod p for every variable, and relations map to zero.
    pub fn verify(&self) -> Result<(), FrobeniusError> {
        let a = self.algebra();
        for i in 0..a.nvars() {
            let mut expect = DaggerSeries::monomial(
                a.p(),
                1,
                self.hom.working_cap(),
                a.inverted().to_vec(),
                {
                    let mut e = vec![0; a.nvars()];
                    e[i] = a.p() as i32;
                    e
                },
                PadicScalar::one(a.p(), 1),
            )?;
            expect = a.normalize_with_cap(&expect, self.hom.working_cap())?;
            let got = self.hom.image(i).reduce_mod_p();
            if !got.eq_at_truncation(&expect.reduce_mod_p()) {
                return Err(FrobeniusError::InvalidLift(format!(
                    "image of variable {i} is not xi^p mod p"
                )));
            }
        }
        self.hom.verify_homomorphism()
    }
}

/// Working cap for Frobenius machinery: intermediate products overshoot the
/// reporting cap before canonical reduction pulls them back in.
pub fn working_cap(algebra: &AlgebraPresentation) -> u32 {
    match algebra.family() {
        FamilyTag::Hyperelliptic { genus, .. } => {
            algebra.cap() + 2 * algebra.p() as u32 * (2 * genus + 1)
        }
        _ => algebra.cap() + algebra.p() as u32 + 1,
    }
}

/// The standard lift: F(x) = x^p on lines and tori; on hyperelliptic
/// presentations F(x) = x^p with F(y) the square-root completion.
pub fn default_lift(algebra: &AlgebraPresentation) -> Result<FrobeniusLift, FrobeniusError> {
    lift_with_x_image(algebra, None, true)
}

/// A lift with F(x) = x^p + p*w(x); any such image is a valid lift on the
/// supported families, with F(y) recompleted on hyperelliptic presentations.
pub fn perturbed_lift(
    algebra: &AlgebraPresentation,
    w: &ZpPoly,
) -> Result<FrobeniusLift, FrobeniusError> {
    lift_with_x_image(algebra, Some(w), false)
}

/// The default lift conjugated by the substitution x -> x + p*u(x): computes
/// G(x) = (sigma . F . sigma^-1)(x) by univariate series composition and
/// completes it the standard way. Distinct from the default lift whenever u
/// is nonzero, but induces the same map mod p.
pub fn conjugated_lift(
    algebra: &AlgebraPresentation,
    u: &ZpPoly,
) -> Result<FrobeniusLift, FrobeniusError> {
    let p = algebra.p();
    let digits = algebra.digits();
    let cap = working_cap(algebra);
    // sigma(x) = x + p u(x); sigma^-1 by fixed-point iteration
    let x = ZpPoly::from_integers(p, digits, &[0, 1]);
    let pu = u.mul_integer(p as i64)?;
    let sigma = x.add(&pu)?;
    let mut sigma_inv = x.clone();
    for _ in 0..=digits {
        // z <- x - p*u(z)
        let uz = compose_poly(u, &sigma_inv, cap)?;
        sigma_inv = x.sub(&uz.mul_integer(p as i64)?)?;
    }
    // G(x) = sigma_inv-series evaluated at sigma(x)^p
    let sigma_p = compose_poly(&sigma, &x, cap)?; // copy of sigma
    let sigma_pow = sigma_p.pow(p as u32)?;
    let g = compose_poly(&sigma_inv, &sigma_pow, cap)?;
    // w = (G(x) - x^p) / p
    let xp = ZpPoly::monomial(p, digits, PadicScalar::one(p, digits), p as usize);
    let diff = g.sub(&xp)?;
    let w_scaled = diff.scalar_mul(&PadicScalar::from_unit(p, digits, 1, -1)?)?;
    lift_with_x_image(algebra, Some(&w_scaled), false)
}

fn compose_poly(f: &ZpPoly, g: &ZpPoly, cap: u32) -> Result<ZpPoly, FrobeniusError> {
    let mut acc = ZpPoly::zero(f.p(), f.digits());
    for c in f.coeffs().iter().rev() {
        acc = acc.mul(g)?;
        acc = acc.add(&ZpPoly::from_scalars(f.p(), f.digits(), vec![c.clone()]))?;
        // discard degrees beyond the working cap
        if let Some(d) = acc.degree() {
            if d as u32 > cap {
                let kept = acc.coeffs()[..=(cap as usize)].to_vec();
                acc = ZpPoly::from_scalars(f.p(), f.digits(), kept);
            }
        }
    }
    Ok(acc)
}

fn lift_with_x_image(
    algebra: &AlgebraPresentation,
    w: Option<&ZpPoly>,
    is_default: bool,
) -> Result<FrobeniusLift, FrobeniusError> {
    let p = algebra.p();
    let digits = algebra.digits();
    let cap = working_cap(algebra);
    let fx_poly = {
        let xp = ZpPoly::monomial(p, digits, PadicScalar::one(p, digits), p as usize);
        match w {
            None => xp,
            Some(w) => xp.add(&w.mul_integer(p as i64)?)?,
        }
    };
    match algebra.family() {
        FamilyTag::AffineLine => {
            let fx = univariate_series(algebra, &fx_poly, cap)?;
            let hom = AlgebraHom::new(algebra.clone(), algebra.clone(), vec![fx], vec![None], cap);
            Ok(FrobeniusLift { hom, is_default })
        }
        FamilyTag::Torus => {
            if w.is_some() {
                return Err(FrobeniusError::UnsupportedFamily(
                    "perturbed lifts on the torus would need a Laurent inverse; not provided".into(),
                ));
            }
            let fx = univariate_series(algebra, &fx_poly, cap)?;
            let fx_inv = DaggerSeries::monomial(
                p,
                digits,
                cap,
                algebra.inverted().to_vec(),
                vec![-(p as i32)],
                PadicScalar::one(p, digits),
            )?;
            let hom =
                AlgebraHom::new(algebra.clone(), algebra.clone(), vec![fx], vec![Some(fx_inv)], cap);
            Ok(FrobeniusLift { hom, is_default })
        }
        FamilyTag::Hyperelliptic { .. } => {
            let f = algebra.curve_poly().expect("hyperelliptic");
            // delta = f(F(x)) - f(x)^p: divisible by p
            let f_of_fx = compose_zp(&f, &fx_poly)?;
            let f_pow_p = f.pow(p as u32)?;
            let delta = f_of_fx.sub(&f_pow_p)?;
            // E = delta * y^(-2p)
            let delta_series = poly_to_series(algebra, &delta, -(2 * p as i32), OPEN_CAP)?;
            let e = algebra.normalize_with_cap(&delta_series, OPEN_CAP)?.compress(cap, digits as i64);
            if let Some(v) = e.min_valuation() {
                if v < 1 {
                    return Err(FrobeniusError::InvalidLift(
                        "square-root increment is not divisible by p".into(),
                    ));
                }
            }
            let sqrt_pos = binomial_power(algebra, &e, 1, cap)?;
            let sqrt_neg = binomial_power(algebra, &e, -1, cap)?;
            let y_mono = |exp: i32| -> Result<DaggerSeries, FrobeniusError> {
                Ok(DaggerSeries::monomial(
                    p,
                    digits,
                    OPEN_CAP,
                    algebra.inverted().to_vec(),
                    vec![0, exp],
                    PadicScalar::one(p, digits),
                )?)
            };
            let fy = algebra
                .mul_with_cap(&y_mono(p as i32)?, &sqrt_pos, OPEN_CAP)?
                .compress(cap, digits as i64);
            let fy_inv = algebra
                .mul_with_cap(&y_mono(-(p as i32))?, &sqrt_neg, OPEN_CAP)?
                .compress(cap, digits as i64);
            let fx = two_variable_x_series(algebra, &fx_poly, cap)?;
            let fx_check = fy.clone();
            let hom = AlgebraHom::new(
                algebra.clone(),
                algebra.clone(),
                vec![fx, fx_check],
                vec![None, Some(fy_inv)],
                cap,
            );
            let lift = FrobeniusLift { hom, is_default };
            // recomposition oracle: F(y)^2 - f(F(x)) = 0 at truncation
            let rel = algebra.relations()[0].clone();
            let image = lift.hom.apply(&rel)?;
            let reduced = algebra.normalize_with_cap(&image, algebra.cap())?;
            if !reduced.is_zero_mod(digits as i64) {
                return Err(FrobeniusError::InvalidLift(format!(
                    "F(y)^2 != f(F(x)) at truncation: {reduced}"
                )));
            }
            Ok(lift)
        }
        FamilyTag::Generic => Err(FrobeniusError::UnsupportedFamily(
            "no built-in lift for generic presentations".into(),
        )),
    }
}

fn univariate_series(
    algebra: &AlgebraPresentation,
    poly: &ZpPoly,
    cap: u32,
) -> Result<DaggerSeries, FrobeniusError> {
    let mut out = DaggerSeries::zero(algebra.p(), algebra.digits(), cap, algebra.inverted().to_vec());
    for (i, c) in poly.coeffs().iter().enumerate() {
        if !c.is_zero() {
            out.accumulate(MonomialExp(vec![i as i32]), c.clone());
        }
    }
    Ok(out)
}

fn two_variable_x_series(
    algebra: &AlgebraPresentation,
    poly: &ZpPoly,
    cap: u32,
) -> Result<DaggerSeries, FrobeniusError> {
    let raw = poly_to_series(algebra, poly, 0, OPEN_CAP)?;
    Ok(algebra
        .normalize_with_cap(&raw, OPEN_CAP)?
        .compress(cap, algebra.digits() as i64))
}

fn compose_zp(f: &ZpPoly, g: &ZpPoly) -> Result<ZpPoly, FrobeniusError> {
    let mut acc = ZpPoly::zero(f.p(), f.digits());
    for c in f.coeffs().iter().rev() {
        acc = acc.mul(g)?;
        acc = acc.add(&ZpPoly::from_scalars(f.p(), f.digits(), vec![c.clone()]))?;
    }
    Ok(acc)
}

/// (1 + e)^(sign/2) by the binomial series; e must have positive valuation.
fn binomial_power(
    algebra: &AlgebraPresentation,
    e: &DaggerSeries,
    sign: i64,
    cap: u32,
) -> Result<DaggerSeries, FrobeniusError> {
    let p = algebra.p();
    let digits = algebra.digits();
    let alpha = PadicScalar::from_ratio(p, digits, sign, 2)?;
    let mut acc = algebra.one_element().truncate_cap(OPEN_CAP);
    let mut term = acc.clone();
    let mut coeff = PadicScalar::one(p, digits);
    for k in 1..=(digits as i64 + 1) {
        // binom(alpha, k) = binom(alpha, k-1) * (alpha - k + 1) / k
        let factor = alpha
            .checked_sub(&PadicScalar::from_integer(p, digits, k - 1)?)?
            .div_integer(k)?;
        coeff = coeff.checked_mul(&factor)?;
        term = algebra
            .mul_with_cap(&term, e, OPEN_CAP)?
            .compress(cap, digits as i64);
        if term.is_zero() || term.is_zero_mod(digits as i64) {
            break;
        }
        acc = acc.checked_add(&term.scalar_mul(&coeff)?)?;
    }
    Ok(acc)
}

/// Write `g = sum_(i<p) F(h_i) * x^i` at truncation and return the h_i.
/// Works one p-digit per round: an exact mod-p splitting followed by a
/// residual update through the full lift.
pub fn frobenius_decompose(
    lift: &FrobeniusLift,
    g: &DaggerSeries,
) -> Result<Vec<DaggerSeries>, FrobeniusError> {
    let algebra = lift.algebra();
    let p = algebra.p();
    let digits = algebra.digits();
    let keep_val = lift.hom.keep_val().min(digits as i64).max(1) as u32;
    let cap = lift.hom.working_cap();
    let mut slots: Vec<DaggerSeries> = (0..p)
        .map(|_| DaggerSeries::zero(p, digits, OPEN_CAP, algebra.inverted().to_vec()))
        .collect();
    let mut rem = g.truncate_cap(OPEN_CAP);
    let x_mono = |i: u32| -> Result<DaggerSeries, FrobeniusError> {
        let mut e = vec![0; algebra.nvars()];
        e[0] = i as i32;
        Ok(DaggerSeries::monomial(
            p,
            digits,
            OPEN_CAP,
            algebra.inverted().to_vec(),
            e,
            PadicScalar::one(p, digits),
        )?)
    };
    let mut scale = PadicScalar::one(p, digits);
    for round in 0..keep_val {
        if rem.is_zero() {
            break;
        }
        if let Some(v) = rem.min_valuation() {
            if v < round as i64 {
                return Err(FrobeniusError::DecompositionStalled { round });
            }
        }
        let unit_part = rem.shift_valuation(round as i64)?;
        let deltas = mod_p_splitting(algebra, &unit_part.reduce_mod_p(), cap)?;
        for (i, delta) in deltas.iter().enumerate() {
            if delta.is_zero() {
                continue;
            }
            slots[i] = slots[i].checked_add(&delta.scalar_mul(&scale)?)?;
            let image = lift.apply(delta)?;
            let contrib = algebra
                .mul_with_cap(&image, &x_mono(i as u32)?, OPEN_CAP)?
                .scalar_mul(&scale)?;
            rem = rem.checked_sub(&contrib)?.compress(cap, keep_val as i64);
        }
        scale = scale.checked_mul(&PadicScalar::from_integer(p, digits, p as i64)?)?;
    }
    // the digit loop certifies the decomposition modulo p^keep_val and no
    // further; cap every slot's claim there
    Ok(slots
        .into_iter()
        .map(|s| s.truncate_abs_all(keep_val as i64))
        .collect())
}

/// Exact splitting of a mod-p canonical element as sum_i Frob(h_i) x^i.
fn mod_p_splitting(
    algebra: &AlgebraPresentation,
    g_bar: &DaggerSeries,
    cap: u32,
) -> Result<Vec<DaggerSeries>, FrobeniusError> {
    let p = algebra.p();
    let digits = algebra.digits();
    let mut slots: Vec<DaggerSeries> = (0..p)
        .map(|_| DaggerSeries::zero(p, digits, OPEN_CAP, algebra.inverted().to_vec()))
        .collect();
    match algebra.family() {
        FamilyTag::AffineLine | FamilyTag::Torus => {
            for (m, c) in g_bar.support() {
                let a = m.0[0];
                let r = a.rem_euclid(p as i32);
                let q = (a - r) / p as i32;
                let lifted = PadicScalar::from_integer(p, digits, c.residue_mod(1)? as i64)?;
                slots[r as usize] = slots[r as usize].checked_add(&DaggerSeries::monomial(
                    p,
                    digits,
                    OPEN_CAP,
                    algebra.inverted().to_vec(),
                    vec![q],
                    lifted,
                )?)?;
            }
            Ok(slots)
        }
        FamilyTag::Hyperelliptic { genus, .. } => {
            let f = algebra.curve_poly().expect("hyperelliptic");
            let _ = genus;
            for (m, c) in g_bar.support() {
                let (a, b) = (m.0[0], m.0[1]);
                let eps = b.rem_euclid(2);
                let c_half = (b - eps) / 2;
                // x^a y^b = (y^eps f^t)^p * (f^m0 x^a) with
                // m = c_half + eps (p+1)/2, m0 = m mod p, t = floor(m/p) - eps
                let m_exp = c_half as i64 + eps as i64 * (p as i64 + 1) / 2;
                let q = m_exp.div_euclid(p as i64);
                let m0 = m_exp.rem_euclid(p as i64) as u32;
                let t = q - eps as i64;
                // inner polynomial P(x) = x^a * f^m0 over F_p
                let f_m0 = f.pow(m0)?;
                let inner = ZpPoly::monomial(p, digits, PadicScalar::one(p, digits), a as usize)
                    .mul(&f_m0)?;
                // h-factor: y^eps * f^t (f^negative = y^(2t))
                let h_factor: DaggerSeries = if t >= 0 {
                    let ft = f.pow(t as u32)?;
                    let base = poly_to_series(algebra, &ft, eps, OPEN_CAP)?;
                    algebra.normalize_with_cap(&base, OPEN_CAP)?
                } else {
                    DaggerSeries::monomial(
                        p,
                        digits,
                        OPEN_CAP,
                        algebra.inverted().to_vec(),
                        vec![0, (2 * t + eps as i64) as i32],
                        PadicScalar::one(p, digits),
                    )?
                };
                let c_int = c.residue_mod(1)? as i64;
                for (j, gamma) in inner.coeffs().iter().enumerate() {
                    if gamma.is_zero() {
                        continue;
                    }
                    let gamma_int = if gamma.valuation().bound() >= 1 {
                        continue;
                    } else {
                        gamma.residue_mod(1)? as i64
                    };
                    let i = j % p as usize;
                    let shift = (j - i) / p as usize;
                    let x_shift = DaggerSeries::monomial(
                        p,
                        digits,
                        OPEN_CAP,
                        algebra.inverted().to_vec(),
                        vec![shift as i32, 0],
                        PadicScalar::from_integer(p, digits, (c_int * gamma_int).rem_euclid(p as i64))?,
                    )?;
                    let contrib = algebra.mul_with_cap(&x_shift, &h_factor, OPEN_CAP)?;
                    slots[i] = slots[i].checked_add(&contrib)?;
                }
            }
            Ok(slots)
        }
        FamilyTag::Generic => Err(FrobeniusError::UnsupportedFamily(
            "no Frobenius decomposition for generic presentations".into(),
        )),
    }
}

/// psi on degree-0 elements: p * h_0 of the Frobenius decomposition. For
/// default lifts on lines and tori this is the monomial rule
/// psi(x^m) = p * x^(m/p) when p | m, else 0.
pub fn psi_series(
    lift: &FrobeniusLift,
    g: &DaggerSeries,
) -> Result<DaggerSeries, FrobeniusError> {
    if !lift.is_default {
        return Err(FrobeniusError::NonDefaultLift);
    }
    let slots = frobenius_decompose(lift, g)?;
    Ok(slots[0].mul_integer(lift.algebra().p() as i64)?)
}

/// psi on one-forms g dx: the h_(p-1) slot of the coefficient decomposition.
/// Forms with dy components are rewritten through dy = f'(x)/(2y) dx first.
pub fn psi_form(
    lift: &FrobeniusLift,
    form: &DifferentialForm,
) -> Result<DifferentialForm, FrobeniusError> {
    if !lift.is_default {
        return Err(FrobeniusError::NonDefaultLift);
    }
    match form.degree() {
        0 => {
            let g = form
                .coefficient(&[])
                .cloned()
                .unwrap_or_else(|| lift.algebra().zero_element());
            Ok(DifferentialForm::function(psi_series(lift, &g)?))
        }
        1 => {
            let g = to_dx_coefficient(lift.algebra(), form)?;
            let slots = frobenius_decompose(lift, &g)?;
            let p = lift.algebra().p() as usize;
            Ok(DifferentialForm::one_form(0, slots[p - 1].clone()))
        }
        _ => Err(FrobeniusError::DegreeTooHigh),
    }
}

/// Collapse a one-form to its dx coefficient, eliminating dy on
/// hyperelliptic presentations.
pub fn to_dx_coefficient(
    algebra: &AlgebraPresentation,
    form: &DifferentialForm,
) -> Result<DaggerSeries, FrobeniusError> {
    assert_eq!(form.degree(), 1);
    let mut acc = algebra.zero_element().truncate_cap(OPEN_CAP);
    for (wedge, g) in form.terms() {
        match wedge[0] {
            0 => acc = acc.checked_add(&g.truncate_cap(OPEN_CAP))?,
            1 => {
                // dy = f'(x) / (2y) dx
                let f = algebra.curve_poly().ok_or_else(|| {
                    FrobeniusError::UnsupportedFamily("dy outside a hyperelliptic presentation".into())
                })?;
                let fd = f.derivative()?;
                let half = PadicScalar::from_ratio(algebra.p(), algebra.digits(), 1, 2)?;
                let sub = poly_to_series(algebra, &fd, -1, OPEN_CAP)?.scalar_mul(&half)?;
                let term = algebra
                    .mul_with_cap(g, &sub, OPEN_CAP)?
                    .compress(working_cap(algebra), algebra.digits() as i64);
                acc = acc.checked_add(&term)?;
            }
            v => {
                return Err(FrobeniusError::UnsupportedFamily(format!(
                    "unexpected differential direction {v}"
                )))
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::d;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper7() -> AlgebraPresentation {
        AlgebraPresentation::hyperelliptic(7, 5, 29, 1, &[1, 1, 0, 1]).unwrap()
    }

    #[test]
    fn default_lift_on_torus() {
        let t = AlgebraPresentation::torus(5, 6, 12);
        let lift = default_lift(&t).unwrap();
        lift.verify().unwrap();
        let x = t.element_from_terms(&[(1, vec![1])]).unwrap();
        let fx = lift.apply(&x).unwrap();
        assert!(fx.eq_at_truncation(
            &DaggerSeries::from_terms(5, 6, lift.hom().working_cap(), vec![true], &[(1, vec![5])]).unwrap()
        ));
        let xinv = t.element_from_terms(&[(1, vec![-1])]).unwrap();
        let fxinv = lift.apply(&xinv).unwrap();
        assert!(fxinv.eq_at_truncation(
            &DaggerSeries::from_terms(5, 6, lift.hom().working_cap(), vec![true], &[(1, vec![-5])]).unwrap()
        ));
    }

    #[test]
    fn default_lift_on_line() {
        let a = AlgebraPresentation::affine_line(3, 6, 12);
        let lift = default_lift(&a).unwrap();
        lift.verify().unwrap();
        let x = a.element_from_terms(&[(1, vec![1])]).unwrap();
        let fx = lift.apply(&x).unwrap();
        assert_eq!(fx.support().next().unwrap().0 .0, vec![3]);
    }

    #[test]
    fn hyperelliptic_lift_satisfies_relation() {
        let a = hyper7();
        let lift = default_lift(&a).unwrap();
        lift.verify().unwrap();
        // F(y) * F(y)^-1 = 1
        let y = a.element_from_terms(&[(1, vec![0, 1])]).unwrap();
        let yinv = a.element_from_terms(&[(1, vec![0, -1])]).unwrap();
        let prod = a
            .mul_with_cap(
                &lift.apply(&y).unwrap(),
                &lift.apply(&yinv).unwrap(),
                lift.hom().working_cap(),
            )
            .unwrap();
        assert!(prod.eq_mod(&a.one_element().truncate_cap(lift.hom().working_cap()), a.digits() as i64));
    }

    #[test]
    fn pullback_on_line_and_torus() {
        let p = 5u64;
        let a = AlgebraPresentation::affine_line(p, 6, 12);
        let lift = default_lift(&a).unwrap();
        let dx = DifferentialForm::one_form(0, a.one_element());
        let fdx = lift.pull_back(&dx).unwrap();
        // F*(dx) = p x^(p-1) dx
        let coeff = fdx.coefficient(&[0]).unwrap();
        let expect = DaggerSeries::from_terms(
            p,
            6,
            coeff.cap(),
            vec![false],
            &[(p as i64, vec![p as i32 - 1])],
        )
        .unwrap();
        assert!(coeff.eq_at_truncation(&expect));

        let t = AlgebraPresentation::torus(p, 6, 12);
        let lift_t = default_lift(&t).unwrap();
        let dlog = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![-1])]).unwrap());
        let pulled = lift_t.pull_back(&dlog).unwrap();
        let coeff = pulled.coefficient(&[0]).unwrap();
        // F*(dx/x) = p dx/x
        let expect = DaggerSeries::from_terms(p, 6, coeff.cap(), vec![true], &[(p as i64, vec![-1])])
            .unwrap();
        assert!(coeff.eq_at_truncation(&expect));
    }

    #[test]
    fn pullback_of_constants() {
        let a = AlgebraPresentation::affine_line(5, 6, 12);
        let lift = default_lift(&a).unwrap();
        let one = DifferentialForm::function(a.one_element());
        let img = lift.pull_back(&one).unwrap();
        assert!(img
            .coefficient(&[])
            .unwrap()
            .eq_at_truncation(&a.one_element().truncate_cap(lift.hom().working_cap())));
    }

    #[test]
    fn decomposition_recomposes_on_line() {
        let p = 5u64;
        let a = AlgebraPresentation::affine_line(p, 6, 20);
        let lift = default_lift(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let mut terms = Vec::new();
            for e in 0..12 {
                terms.push((rng.gen_range(-20..20), vec![e]));
            }
            let g = a.element_from_terms(&terms).unwrap();
            let slots = frobenius_decompose(&lift, &g).unwrap();
            let mut back = DaggerSeries::zero(p, 6, lift.hom().working_cap(), vec![false]);
            for (i, h) in slots.iter().enumerate() {
                let xi = DaggerSeries::from_terms(
                    p,
                    6,
                    lift.hom().working_cap(),
                    vec![false],
                    &[(1, vec![i as i32])],
                )
                .unwrap();
                let term = lift.apply(h).unwrap().checked_mul(&xi).unwrap();
                back = back.checked_add(&term).unwrap();
            }
            assert!(back.truncate_cap(20).eq_mod(&g, 6), "recomposition failed");
        }
    }

    #[test]
    fn decomposition_recomposes_on_hyperelliptic() {
        let a = hyper7();
        let lift = default_lift(&a).unwrap();
        let cap = lift.hom().working_cap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..4 {
            let mut terms = Vec::new();
            for _ in 0..5 {
                terms.push((
                    rng.gen_range(-20..20),
                    vec![rng.gen_range(0..3), rng.gen_range(-4..4)],
                ));
            }
            let g = a.element_from_terms(&terms).unwrap();
            let slots = frobenius_decompose(&lift, &g).unwrap();
            let mut back = DaggerSeries::zero(7, a.digits(), cap, a.inverted().to_vec());
            for (i, h) in slots.iter().enumerate() {
                let xi = a.element_from_terms(&[(1, vec![i as i32, 0])]).unwrap();
                let term = a
                    .mul_with_cap(&lift.apply(h).unwrap(), &xi.truncate_cap(cap), cap)
                    .unwrap();
                back = back.checked_add(&term).unwrap();
            }
            let diff = back.truncate_cap(a.cap()).checked_sub(&g).unwrap();
            assert!(diff.is_zero_mod(a.digits() as i64), "recomposition failed: {diff}");
        }
    }

    #[test]
    fn psi_monomial_rules_on_line() {
        let p = 5u64;
        let a = AlgebraPresentation::affine_line(p, 6, 20);
        let lift = default_lift(&a).unwrap();
        // psi(1) = p
        let one = a.one_element();
        let psi1 = psi_series(&lift, &one).unwrap();
        assert!(psi1.eq_mod(&a.element_from_terms(&[(p as i64, vec![0])]).unwrap().truncate_cap(psi1.cap()), 6));
        // psi(x^p) = p x
        let xp = a.element_from_terms(&[(1, vec![p as i32])]).unwrap();
        let got = psi_series(&lift, &xp).unwrap();
        let expect = a.element_from_terms(&[(p as i64, vec![1])]).unwrap();
        assert!(got.eq_mod(&expect.truncate_cap(got.cap()), 6));
        // psi(x^(p+1)) = 0
        let xp1 = a.element_from_terms(&[(1, vec![p as i32 + 1])]).unwrap();
        assert!(psi_series(&lift, &xp1).unwrap().is_zero_mod(6));
    }

    #[test]
    fn psi_form_rules() {
        let p = 5u64;
        let t = AlgebraPresentation::torus(p, 6, 20);
        let lift = default_lift(&t).unwrap();
        // psi(dx/x) = dx/x
        let dlog = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![-1])]).unwrap());
        let got = psi_form(&lift, &dlog).unwrap();
        assert!(got
            .coefficient(&[0])
            .unwrap()
            .eq_mod(&t.element_from_terms(&[(1, vec![-1])]).unwrap().truncate_cap(got.coefficient(&[0]).unwrap().cap()), 6));
        // psi(x^(p-1) dx) = dx
        let form = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![p as i32 - 1])]).unwrap());
        let got = psi_form(&lift, &form).unwrap();
        assert!(got
            .coefficient(&[0])
            .unwrap()
            .eq_mod(&t.one_element().truncate_cap(got.coefficient(&[0]).unwrap().cap()), 6));
        // psi kills x^m dx when p does not divide m + 1
        for m in 0..(p as i32 - 1) {
            let form = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![m])]).unwrap());
            assert!(psi_form(&lift, &form).unwrap().is_zero_mod(6), "m = {m}");
        }
    }

    #[test]
    fn psi_semilinearity_randomized() {
        // psi(F(a) w) = a psi(w) on the torus
        let p = 5u64;
        let t = AlgebraPresentation::torus(p, 8, 40);
        let lift = default_lift(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let a_elt = t
                .element_from_terms(&[
                    (rng.gen_range(-20..20), vec![rng.gen_range(-3..3)]),
                    (rng.gen_range(-20..20), vec![rng.gen_range(-3..3)]),
                ])
                .unwrap();
            let w = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![rng.gen_range(-3..3)])]).unwrap());
            let fa = lift.apply(&a_elt).unwrap();
            let lhs = psi_form(&lift, &w.series_mul(&t, &fa.truncate_cap(40)).unwrap()).unwrap();
            let rhs = psi_form(&lift, &w)
                .unwrap()
                .series_mul(&t, &a_elt)
                .unwrap();
            let l = lhs.coefficient(&[0]).cloned().unwrap_or_else(|| t.zero_element());
            let r = rhs.coefficient(&[0]).cloned().unwrap_or_else(|| t.zero_element());
            assert!(l.truncate_cap(10).eq_mod(&r.truncate_cap(10), t.digits() as i64));
        }
    }

    #[test]
    fn psi_commutes_with_d_on_line() {
        let p = 3u64;
        let a = AlgebraPresentation::affine_line(p, 8, 30);
        let lift = default_lift(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut terms = Vec::new();
            for e in 0..9 {
                terms.push((rng.gen_range(-20..20), vec![e]));
            }
            let g = a.element_from_terms(&terms).unwrap();
            let lhs = psi_form(&lift, &d(&a, &DifferentialForm::function(g.clone())).unwrap()).unwrap();
            let psi_g = psi_series(&lift, &g).unwrap().truncate_cap(a.cap());
            let rhs = d(&a, &DifferentialForm::function(psi_g)).unwrap();
            let l = lhs.coefficient(&[0]).cloned().unwrap_or_else(|| a.zero_element());
            let r = rhs.coefficient(&[0]).cloned().unwrap_or_else(|| a.zero_element());
            assert!(l.truncate_cap(6).eq_mod(&r.truncate_cap(6), a.digits() as i64));
        }
    }

    #[test]
    fn conjugated_lift_differs_but_verifies() {
        let a = hyper7();
        let u = ZpPoly::from_integers(7, 5, &[1, 2]);
        let lift = conjugated_lift(&a, &u).unwrap();
        lift.verify().unwrap();
        let default = default_lift(&a).unwrap();
        let x = a.element_from_terms(&[(1, vec![1, 0])]).unwrap();
        let g1 = lift.apply(&x).unwrap();
        let g2 = default.apply(&x).unwrap();
        assert!(!g1.eq_mod(&g2, a.digits() as i64), "conjugated lift must differ");
    }
}
