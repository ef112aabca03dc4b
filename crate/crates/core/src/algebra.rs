//! Finite presentations of dagger algebras: localization, products, the
//! differential module and the de Rham complex.
//!
//! The engine understands three concrete families whose elements admit a
//! canonical normal form, plus generic presentations restricted to ring and
//! Omega^1 operations:
//!
//! - `AffineLine`: one variable, no relations.
//! - `Torus`: one variable, inverted, no relations (Laurent series).
//! - `Hyperelliptic(g, f)`: variables x, y with y^2 = f(x), deg f = 2g + 1,
//!   f monic and squarefree mod p, y inverted. The normal form bounds the
//!   x-degree by 2g via x^(2g+1) * y^b -> y^(b+2) - (f - x^(2g+1)) * y^b; on
//!   normal forms the monomials x^a y^b (a <= 2g, b in Z) are a free basis,
//!   so truncation by total degree is linear and equality is decidable.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::padic::{PadicError, PadicScalar};
use crate::poly::{fp_gcd, ZpPoly};
use crate::series::{DaggerSeries, MonomialExp, SeriesError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("localizing by an element that vanishes mod p")]
    ZeroDivisorLocalization,
    #[error("operation not available for this family: {0}")]
    UnsupportedFamily(String),
    #[error("hyperelliptic data rejected: {0}")]
    InvalidHyperelliptic(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyTag {
    AffineLine,
    Torus,
    Hyperelliptic { genus: u32, f_coeffs: Vec<i64> },
    Generic,
}

/// A weakly complete finitely generated algebra, presented by variables,
/// relation series and inverted positions.
#[derive(Debug, Clone)]
pub struct AlgebraPresentation {
    p: u64,
    digits: u32,
    cap: u32,
    inverted: Vec<bool>,
    relations: Vec<DaggerSeries>,
    family: FamilyTag,
}

impl AlgebraPresentation {
    pub fn affine_line(p: u64, digits: u32, cap: u32) -> Self {
        AlgebraPresentation {
            p,
            digits,
            cap,
            inverted: vec![false],
            relations: Vec::new(),
            family: FamilyTag::AffineLine,
        }
    }

    pub fn torus(p: u64, digits: u32, cap: u32) -> Self {
        AlgebraPresentation {
            p,
            digits,
            cap,
            inverted: vec![true],
            relations: Vec::new(),
            family: FamilyTag::Torus,
        }
    }

    /// The dagger ring T_n itself (no relations, nothing inverted).
    pub fn free(p: u64, digits: u32, cap: u32, nvars: usize) -> Self {
        let family = if nvars == 1 { FamilyTag::AffineLine } else { FamilyTag::Generic };
        AlgebraPresentation {
            p,
            digits,
            cap,
            inverted: vec![false; nvars],
            relations: Vec::new(),
            family,
        }
    }

    /// y^2 = f(x) with the Weierstrass locus removed (y inverted).
    /// `f_coeffs` ascending; requires p odd, deg f = 2g + 1, f monic and
    /// squarefree mod p.
    pub fn hyperelliptic(
        p: u64,
        digits: u32,
        cap: u32,
        genus: u32,
        f_coeffs: &[i64],
    ) -> Result<Self, AlgebraError> {
        if p == 2 {
            return Err(AlgebraError::InvalidHyperelliptic(
                "p must be odd for y^2 = f(x)".into(),
            ));
        }
        let deg = (2 * genus + 1) as usize;
        if f_coeffs.len() != deg + 1 {
            return Err(AlgebraError::InvalidHyperelliptic(format!(
                "f must have degree 2g+1 = {deg}"
            )));
        }
        let f = ZpPoly::from_integers(p, digits, f_coeffs);
        if f.degree() != Some(deg) {
            return Err(AlgebraError::InvalidHyperelliptic(
                "leading coefficient vanishes".into(),
            ));
        }
        let monic = f_coeffs[deg].rem_euclid(p as i64) == 1;
        if !monic {
            return Err(AlgebraError::InvalidHyperelliptic("f must be monic mod p".into()));
        }
        let fp_deriv = f.derivative()?;
        let gcd = fp_gcd(p, &f.mod_p(), &fp_deriv.mod_p());
        if gcd.len() != 1 {
            return Err(AlgebraError::InvalidHyperelliptic(
                "f is not squarefree mod p".into(),
            ));
        }
        // relation y^2 - f(x) over variables (x, y)
        let mut terms: Vec<(i64, Vec<i32>)> = vec![(1, vec![0, 2])];
        for (i, &c) in f_coeffs.iter().enumerate() {
            if c != 0 {
                terms.push((-c, vec![i as i32, 0]));
            }
        }
        let relation = DaggerSeries::from_terms(p, digits, cap, vec![false, true], &terms)?;
        Ok(AlgebraPresentation {
            p,
            digits,
            cap,
            inverted: vec![false, true],
            relations: vec![relation],
            family: FamilyTag::Hyperelliptic { genus, f_coeffs: f_coeffs.to_vec() },
        })
    }

    pub fn generic(
        p: u64,
        digits: u32,
        cap: u32,
        inverted: Vec<bool>,
        relations: Vec<DaggerSeries>,
    ) -> Self {
        AlgebraPresentation { p, digits, cap, inverted, relations, family: FamilyTag::Generic }
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

    pub fn relations(&self) -> &[DaggerSeries] {
        &self.relations
    }

    pub fn family(&self) -> &FamilyTag {
        &self.family
    }

    pub fn genus(&self) -> Option<u32> {
        match &self.family {
            FamilyTag::Hyperelliptic { genus, .. } => Some(*genus),
            _ => None,
        }
    }

    /// Defining polynomial f for the hyperelliptic family.
    pub fn curve_poly(&self) -> Option<ZpPoly> {
        match &self.family {
            FamilyTag::Hyperelliptic { f_coeffs, .. } => {
                Some(ZpPoly::from_integers(self.p, self.digits, f_coeffs))
            }
            _ => None,
        }
    }

    /// Same presentation at a different working precision.
    pub fn with_precision(&self, digits: u32, cap: u32) -> Result<Self, AlgebraError> {
        match &self.family {
            FamilyTag::AffineLine => Ok(Self::affine_line(self.p, digits, cap)),
            FamilyTag::Torus => Ok(Self::torus(self.p, digits, cap)),
            FamilyTag::Hyperelliptic { genus, f_coeffs } => {
                Self::hyperelliptic(self.p, digits, cap, *genus, f_coeffs)
            }
            FamilyTag::Generic => Ok(Self::generic(
                self.p,
                digits,
                cap,
                self.inverted.clone(),
                self.relations.iter().map(|r| r.with_precision(digits, cap)).collect(),
            )),
        }
    }

    pub fn zero_element(&self) -> DaggerSeries {
        DaggerSeries::zero(self.p, self.digits, self.cap, self.inverted.clone())
    }

    pub fn one_element(&self) -> DaggerSeries {
        DaggerSeries::one(self.p, self.digits, self.cap, self.inverted.clone())
    }

    pub fn element_from_terms(&self, terms: &[(i64, Vec<i32>)]) -> Result<DaggerSeries, AlgebraError> {
        Ok(DaggerSeries::from_terms(self.p, self.digits, self.cap, self.inverted.clone(), terms)?)
    }

    /// Canonical normal form of a raw series, truncated to the given cap.
    pub fn normalize_with_cap(&self, series: &DaggerSeries, cap: u32) -> Result<DaggerSeries, AlgebraError> {
        match &self.family {
            FamilyTag::Hyperelliptic { genus, f_coeffs } => {
                let bound = (2 * genus) as i32;
                // g_low = f - x^(2g+1): the non-leading part of f
                let mut out = DaggerSeries::zero(self.p, self.digits, cap, self.inverted.clone());
                let mut work: Vec<(MonomialExp, PadicScalar)> =
                    series.support().map(|(m, c)| (m.clone(), c.clone())).collect();
                while let Some((m, c)) = work.pop() {
                    let (a, b) = (m.0[0], m.0[1]);
                    if a <= bound {
                        out.accumulate(m, c);
                        continue;
                    }
                    // x^a y^b = x^(a - (2g+1)) * (y^2 - g_low) * y^b
                    let a2 = a - (2 * *genus as i32 + 1);
                    work.push((MonomialExp(vec![a2, b + 2]), c.clone()));
                    for (i, &fc) in f_coeffs.iter().enumerate().take(2 * *genus as usize + 1) {
                        if fc == 0 {
                            continue;
                        }
                        let coeff = c.mul_integer(-fc)?;
                        work.push((MonomialExp(vec![a2 + i as i32, b]), coeff));
                    }
                }
                Ok(out)
            }
            _ => Ok(series.truncate_cap(cap.min(series.cap()))),
        }
    }

    pub fn normalize(&self, series: &DaggerSeries) -> Result<DaggerSeries, AlgebraError> {
        self.normalize_with_cap(series, self.cap)
    }

    /// Product in the presented algebra (relation-aware for hyperelliptic).
    pub fn mul(&self, a: &DaggerSeries, b: &DaggerSeries) -> Result<DaggerSeries, AlgebraError> {
        self.mul_with_cap(a, b, self.cap)
    }

    pub fn mul_with_cap(
        &self,
        a: &DaggerSeries,
        b: &DaggerSeries,
        cap: u32,
    ) -> Result<DaggerSeries, AlgebraError> {
        match &self.family {
            FamilyTag::Hyperelliptic { .. } => {
                // convolve without a degree cut, normalize, then truncate:
                // on normal forms the raw x-degrees stay <= 4g, so the only
                // growth is in y, bounded by the operand caps
                let raw_cap = a.max_total_degree() + b.max_total_degree();
                let raw = a.mul_with_cap(b, raw_cap)?;
                self.normalize_with_cap(&raw, cap)
            }
            _ => Ok(a.mul_with_cap(b, cap)?),
        }
    }

    /// y^(-2) = f(x)^(-1) holds exactly; for even powers of f this gives the
    /// canonical form of f^k for k of either sign.
    pub fn f_power(&self, k: i64) -> Result<DaggerSeries, AlgebraError> {
        let f = self
            .curve_poly()
            .ok_or_else(|| AlgebraError::UnsupportedFamily("f_power needs hyperelliptic".into()))?;
        if k >= 0 {
            let fk = f.pow(k as u32)?;
            let series = poly_to_series(self, &fk, 0, 3 * self.cap)?;
            self.normalize(&series)
        } else {
            // f^k = y^(2k)
            Ok(DaggerSeries::monomial(
                self.p,
                self.digits,
                self.cap,
                self.inverted.clone(),
                vec![0, (2 * k) as i32],
                PadicScalar::one(self.p, self.digits),
            )?)
        }
    }
}

/// Embed a univariate polynomial in x (times y^y_exp) into the algebra,
/// keeping monomials up to the given cap.
pub fn poly_to_series(
    algebra: &AlgebraPresentation,
    poly: &ZpPoly,
    y_exp: i32,
    cap: u32,
) -> Result<DaggerSeries, AlgebraError> {
    let mut out =
        DaggerSeries::zero(algebra.p(), algebra.digits(), cap, algebra.inverted().to_vec());
    for (i, c) in poly.coeffs().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let exp = if algebra.nvars() == 2 { vec![i as i32, y_exp] } else { vec![i as i32] };
        out.accumulate(MonomialExp(exp), c.clone());
    }
    Ok(out)
}

/// Extract the coefficient of y^y_exp as a polynomial in x (hyperelliptic
/// normal forms only; the x-degree is bounded).
pub fn series_y_slice(series: &DaggerSeries, y_exp: i32) -> ZpPoly {
    let mut coeffs: Vec<PadicScalar> = Vec::new();
    for (m, c) in series.support() {
        if m.0[1] != y_exp {
            continue;
        }
        let a = m.0[0] as usize;
        while coeffs.len() <= a {
            coeffs.push(PadicScalar::zero(series.p(), series.digits() as i64));
        }
        coeffs[a] = c.clone();
    }
    ZpPoly::from_scalars(series.p(), series.digits(), coeffs)
}

/// Localization A<f^-1>. Localizing by a unit-coefficient monomial flips
/// inversion flags; the general case adds an auxiliary variable xi with
/// relation f*xi - 1 and forgets the family tag.
pub fn localize(
    algebra: &AlgebraPresentation,
    f: &DaggerSeries,
) -> Result<AlgebraPresentation, AlgebraError> {
    if f.reduce_mod_p().is_zero() {
        return Err(AlgebraError::ZeroDivisorLocalization);
    }
    // canonicalization: a single monomial with unit coefficient
    let terms: Vec<_> = f.support().collect();
    if terms.len() == 1 {
        let (m, c) = terms[0];
        if c.valuation().bound() == 0 && !m.is_constant() {
            let mut inverted = algebra.inverted.to_vec();
            for (i, &e) in m.0.iter().enumerate() {
                if e != 0 {
                    inverted[i] = true;
                }
            }
            let family = match (&algebra.family, algebra.nvars()) {
                (FamilyTag::AffineLine, 1) | (FamilyTag::Torus, 1) => FamilyTag::Torus,
                (FamilyTag::Hyperelliptic { genus, f_coeffs }, _)
                    if m.0[0] == 0 && inverted == algebra.inverted =>
                {
                    FamilyTag::Hyperelliptic { genus: *genus, f_coeffs: f_coeffs.clone() }
                }
                _ => FamilyTag::Generic,
            };
            let relations = algebra
                .relations
                .iter()
                .map(|r| {
                    DaggerSeries::from_terms(algebra.p, algebra.digits, algebra.cap, inverted.clone(), &[])
                        .and_then(|acc| {
                            let mut acc = acc;
                            for (mm, cc) in r.support() {
                                acc.accumulate(mm.clone(), cc.clone());
                            }
                            Ok(acc)
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(AlgebraPresentation {
                p: algebra.p,
                digits: algebra.digits,
                cap: algebra.cap,
                inverted,
                relations,
                family,
            });
        }
    }
    // general: new variable xi, relation f*xi - 1
    let n = algebra.nvars();
    let mut inverted = algebra.inverted.to_vec();
    inverted.push(false);
    let extend = |s: &DaggerSeries| -> DaggerSeries {
        let mut out = DaggerSeries::zero(algebra.p, algebra.digits, algebra.cap, inverted.clone());
        for (m, c) in s.support() {
            let mut e = m.0.clone();
            e.push(0);
            out.accumulate(MonomialExp(e), c.clone());
        }
        out
    };
    let mut relations: Vec<DaggerSeries> = algebra.relations.iter().map(extend).collect();
    let xi = DaggerSeries::monomial(
        algebra.p,
        algebra.digits,
        algebra.cap,
        inverted.clone(),
        {
            let mut e = vec![0; n];
            e.push(1);
            e
        },
        PadicScalar::one(algebra.p, algebra.digits),
    )?;
    let new_rel = extend(f)
        .checked_mul(&xi)?
        .checked_sub(&DaggerSeries::one(algebra.p, algebra.digits, algebra.cap, inverted.clone()))?;
    relations.push(new_rel);
    Ok(AlgebraPresentation {
        p: algebra.p,
        digits: algebra.digits,
        cap: algebra.cap,
        inverted,
        relations,
        family: FamilyTag::Generic,
    })
}

/// Completed tensor product: variables concatenated, relations embedded by
/// the index shifts, inversion flags concatenated.
pub fn product(a: &AlgebraPresentation, b: &AlgebraPresentation) -> AlgebraPresentation {
    let n = a.nvars();
    let m = b.nvars();
    let mut inverted = a.inverted.to_vec();
    inverted.extend_from_slice(&b.inverted);
    let embed_left = |s: &DaggerSeries| {
        let mut out = DaggerSeries::zero(a.p, a.digits.min(b.digits), a.cap.min(b.cap), inverted.clone());
        for (mo, c) in s.support() {
            let mut e = mo.0.clone();
            e.extend(std::iter::repeat(0).take(m));
            out.accumulate(MonomialExp(e), c.clone());
        }
        out
    };
    let embed_right = |s: &DaggerSeries| {
        let mut out = DaggerSeries::zero(a.p, a.digits.min(b.digits), a.cap.min(b.cap), inverted.clone());
        for (mo, c) in s.support() {
            let mut e = vec![0; n];
            e.extend_from_slice(&mo.0);
            out.accumulate(MonomialExp(e), c.clone());
        }
        out
    };
    let mut relations: Vec<DaggerSeries> = a.relations.iter().map(embed_left).collect();
    relations.extend(b.relations.iter().map(embed_right));
    let family = if relations.is_empty() && inverted.iter().all(|&i| !i) {
        if inverted.len() == 1 { FamilyTag::AffineLine } else { FamilyTag::Generic }
    } else if inverted.len() == 1 && relations.is_empty() {
        FamilyTag::Torus
    } else {
        FamilyTag::Generic
    };
    AlgebraPresentation {
        p: a.p,
        digits: a.digits.min(b.digits),
        cap: a.cap.min(b.cap),
        inverted,
        relations,
        family,
    }
}

/// Differential form of a fixed degree: strictly increasing wedge index sets
/// mapped to coefficient series.
#[derive(Debug, Clone)]
pub struct DifferentialForm {
    degree: usize,
    terms: BTreeMap<Vec<usize>, DaggerSeries>,
}

impl DifferentialForm {
    pub fn zero(degree: usize) -> Self {
        DifferentialForm { degree, terms: BTreeMap::new() }
    }

    pub fn function(series: DaggerSeries) -> Self {
        let mut terms = BTreeMap::new();
        if !series.is_zero() {
            terms.insert(Vec::new(), series);
        }
        DifferentialForm { degree: 0, terms }
    }

    /// g * d(xi_var)
    pub fn one_form(var: usize, series: DaggerSeries) -> Self {
        let mut form = Self::zero(1);
        form.add_term(vec![var], series);
        form
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<usize>, &DaggerSeries)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, wedge: &[usize]) -> Option<&DaggerSeries> {
        self.terms.get(wedge)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|s| s.is_zero())
    }

    pub fn add_term(&mut self, wedge: Vec<usize>, series: DaggerSeries) {
        assert_eq!(wedge.len(), self.degree, "wedge arity must match degree");
        debug_assert!(wedge.windows(2).all(|w| w[0] < w[1]), "wedge indices must increase");
        if series.is_zero() {
            return;
        }
        match self.terms.remove(&wedge) {
            None => {
                self.terms.insert(wedge, series);
            }
            Some(existing) => {
                let sum = existing.checked_add(&series).expect("same shape");
                if !sum.is_zero() {
                    self.terms.insert(wedge, sum);
                }
            }
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, SeriesError> {
        assert_eq!(self.degree, other.degree);
        let mut out = self.clone();
        for (w, s) in &other.terms {
            out.add_term(w.clone(), s.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.checked_add(&other.checked_neg())
    }

    pub fn checked_neg(&self) -> Self {
        let mut out = Self::zero(self.degree);
        for (w, s) in &self.terms {
            out.add_term(w.clone(), s.checked_neg());
        }
        out
    }

    pub fn scalar_mul(&self, c: &PadicScalar) -> Result<Self, SeriesError> {
        let mut out = Self::zero(self.degree);
        for (w, s) in &self.terms {
            out.add_term(w.clone(), s.scalar_mul(c)?);
        }
        Ok(out)
    }

    /// Multiply by a degree-0 element (within the given presentation).
    pub fn series_mul(
        &self,
        algebra: &AlgebraPresentation,
        g: &DaggerSeries,
    ) -> Result<Self, AlgebraError> {
        let mut out = Self::zero(self.degree);
        for (w, s) in &self.terms {
            out.add_term(w.clone(), algebra.mul(s, g)?);
        }
        Ok(out)
    }

    pub fn eq_at_truncation(&self, other: &Self) -> bool {
        match self.checked_sub(other) {
            Ok(d) => d.is_zero(),
            Err(_) => false,
        }
    }

    /// All coefficients vanish modulo p^n.
    pub fn is_zero_mod(&self, n: i64) -> bool {
        self.terms.values().all(|s| s.is_zero_mod(n))
    }

    /// Equality modulo p^n at the shared truncation.
    pub fn eq_mod(&self, other: &Self, n: i64) -> bool {
        match self.checked_sub(other) {
            Ok(d) => d.is_zero_mod(n),
            Err(_) => false,
        }
    }
}

impl fmt::Display for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (w, s) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({s})")?;
            for i in w {
                write!(f, " dx{i}")?;
            }
        }
        Ok(())
    }
}

/// Presentation of Omega^1: free on the variable differentials, with one
/// relation form df per relation f. `reduced_rank` is the rank after
/// eliminating differentials along invertible relation coefficients (known
/// for the supported families).
#[derive(Debug, Clone)]
pub struct Omega1 {
    pub generator_count: usize,
    pub relation_forms: Vec<DifferentialForm>,
    pub reduced_rank: Option<usize>,
}

pub fn omega1_presentation(algebra: &AlgebraPresentation) -> Result<Omega1, AlgebraError> {
    let mut relation_forms = Vec::new();
    for r in &algebra.relations {
        relation_forms.push(d_raw(algebra, r)?);
    }
    let reduced_rank = match &algebra.family {
        FamilyTag::AffineLine | FamilyTag::Torus => Some(1),
        FamilyTag::Hyperelliptic { .. } => Some(1),
        FamilyTag::Generic if algebra.relations.is_empty() => Some(algebra.nvars()),
        FamilyTag::Generic => None,
    };
    Ok(Omega1 { generator_count: algebra.nvars(), relation_forms, reduced_rank })
}

/// Exterior derivative before any elimination: d(g) = sum_j dg/dxi_j dxi_j.
fn d_raw(algebra: &AlgebraPresentation, g: &DaggerSeries) -> Result<DifferentialForm, AlgebraError> {
    let mut out = DifferentialForm::zero(1);
    for j in 0..algebra.nvars() {
        let pd = g.partial_derivative(j)?;
        if !pd.is_zero() {
            out.add_term(vec![j], pd);
        }
    }
    Ok(out)
}

/// Exterior derivative with the family's eliminations applied (dy -> dx on
/// hyperelliptic presentations). Leibniz and d after d = 0 hold at
/// truncation. Works at each coefficient's own degree cap, so callers that
/// carry extended working caps lose nothing.
pub fn d(algebra: &AlgebraPresentation, form: &DifferentialForm) -> Result<DifferentialForm, AlgebraError> {
    let mut out = DifferentialForm::zero(form.degree() + 1);
    for (wedge, g) in form.terms() {
        let cap = g.cap().max(algebra.cap);
        let dy_dx = match &algebra.family {
            FamilyTag::Hyperelliptic { .. } => {
                let f = algebra.curve_poly().expect("hyperelliptic");
                let fd = f.derivative()?;
                let half = PadicScalar::from_ratio(algebra.p, algebra.digits, 1, 2)?;
                let series = poly_to_series(algebra, &fd, -1, cap)?;
                Some(algebra.normalize_with_cap(&series.scalar_mul(&half)?, cap)?)
            }
            _ => None,
        };
        for j in 0..algebra.nvars() {
            let mut pd = g.partial_derivative(j)?;
            let mut target = j;
            if let Some(sub) = &dy_dx {
                if j == 1 {
                    // dy contributes along dx with the substitution factor
                    pd = algebra.mul_with_cap(&pd, sub, cap)?;
                    target = 0;
                }
            }
            if pd.is_zero() {
                continue;
            }
            // wedge d(xi_target) into the index set with its sign
            match wedge_insert(wedge, target) {
                None => continue,
                Some((sign, new_wedge)) => {
                    let series = if sign < 0 { pd.checked_neg() } else { pd };
                    let series = algebra.normalize_with_cap(&series, cap)?;
                    out.add_term(new_wedge, series);
                }
            }
        }
    }
    Ok(out)
}

/// Insert index into a strictly increasing wedge; None if already present.
fn wedge_insert(wedge: &[usize], index: usize) -> Option<(i32, Vec<usize>)> {
    if wedge.contains(&index) {
        return None;
    }
    let pos = wedge.iter().take_while(|&&w| w < index).count();
    let mut out = Vec::with_capacity(wedge.len() + 1);
    out.extend_from_slice(&wedge[..pos]);
    out.push(index);
    out.extend_from_slice(&wedge[pos..]);
    let sign = if pos % 2 == 0 { 1 } else { -1 };
    Some((sign, out))
}

/// The de Rham complex of a supported presentation: per-degree free ranks
/// after elimination, with `d` as the differential.
#[derive(Debug, Clone)]
pub struct DeRhamComplex {
    pub algebra: AlgebraPresentation,
    /// rank of Omega^i as a free module over the algebra, i = 0..=dim
    pub ranks: Vec<usize>,
}

pub fn derham_complex(algebra: &AlgebraPresentation) -> Result<DeRhamComplex, AlgebraError> {
    let ranks = match &algebra.family {
        FamilyTag::AffineLine | FamilyTag::Torus | FamilyTag::Hyperelliptic { .. } => vec![1, 1],
        FamilyTag::Generic if algebra.relations.is_empty() => {
            let n = algebra.nvars();
            (0..=n).map(|i| binomial(n, i)).collect()
        }
        FamilyTag::Generic => {
            return Err(AlgebraError::UnsupportedFamily(
                "de Rham complex beyond Omega^1 needs a supported family".into(),
            ))
        }
    };
    Ok(DeRhamComplex { algebra: algebra.clone(), ranks })
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper7() -> AlgebraPresentation {
        AlgebraPresentation::hyperelliptic(7, 6, 24, 1, &[1, 1, 0, 1]).unwrap()
    }

    #[test]
    fn hyperelliptic_validation() {
        assert!(AlgebraPresentation::hyperelliptic(2, 6, 20, 1, &[1, 1, 0, 1]).is_err());
        // x^3 mod 3 is not squarefree
        assert!(AlgebraPresentation::hyperelliptic(3, 6, 20, 1, &[0, 0, 0, 1]).is_err());
        // wrong degree
        assert!(AlgebraPresentation::hyperelliptic(7, 6, 20, 1, &[1, 1, 1]).is_err());
        assert!(AlgebraPresentation::hyperelliptic(7, 6, 20, 1, &[1, 1, 0, 1]).is_ok());
    }

    #[test]
    fn normal_form_bounds_x_degree() {
        let a = hyper7();
        // x^3 = y^2 - x - 1
        let raw = a.element_from_terms(&[(1, vec![3, 0])]).unwrap();
        let normal = a.normalize(&raw).unwrap();
        let expect = a
            .element_from_terms(&[(1, vec![0, 2]), (-1, vec![1, 0]), (-1, vec![0, 0])])
            .unwrap();
        assert!(normal.eq_at_truncation(&expect));
    }

    #[test]
    fn relation_is_zero_in_normal_form() {
        let a = hyper7();
        let rel = a.relations()[0].clone();
        assert!(a.normalize(&rel).unwrap().is_zero());
    }

    #[test]
    fn f_inverse_is_y_minus_two() {
        let a = hyper7();
        // f * y^(-2) = 1
        let f = a.f_power(1).unwrap();
        let finv = a.f_power(-1).unwrap();
        let prod = a.mul(&f, &finv).unwrap();
        assert!(prod.eq_at_truncation(&a.one_element()));
    }

    #[test]
    fn mul_respects_relation() {
        let a = hyper7();
        let y = a.element_from_terms(&[(1, vec![0, 1])]).unwrap();
        let y2 = a.mul(&y, &y).unwrap();
        let f = a.f_power(1).unwrap();
        assert!(y2.eq_at_truncation(&f));
    }

    #[test]
    fn localize_by_variable_flips_flag() {
        let line = AlgebraPresentation::affine_line(5, 6, 10);
        let x = line.element_from_terms(&[(1, vec![1])]).unwrap();
        let loc = localize(&line, &x).unwrap();
        assert_eq!(loc.family(), &FamilyTag::Torus);
        assert_eq!(loc.inverted(), &[true]);
        // localizing twice by x agrees with localizing once by x^2
        let x2 = line.element_from_terms(&[(1, vec![2])]).unwrap();
        let loc2 = localize(&localize(&line, &x).unwrap(), &x).unwrap();
        let loc_sq = localize(&line, &x2).unwrap();
        assert_eq!(loc2.family(), loc_sq.family());
        assert_eq!(loc2.inverted(), loc_sq.inverted());
    }

    #[test]
    fn localize_by_general_element_adds_variable() {
        let line = AlgebraPresentation::affine_line(5, 6, 10);
        let f = line.element_from_terms(&[(1, vec![1]), (-1, vec![0])]).unwrap();
        let loc = localize(&line, &f).unwrap();
        assert_eq!(loc.nvars(), 2);
        assert_eq!(loc.relations().len(), 1);
        // relation is (x - 1) xi - 1
        let rel = &loc.relations()[0];
        let expect = DaggerSeries::from_terms(
            5,
            6,
            10,
            vec![false, false],
            &[(1, vec![1, 1]), (-1, vec![0, 1]), (-1, vec![0, 0])],
        )
        .unwrap();
        assert!(rel.eq_at_truncation(&expect));
    }

    #[test]
    fn localize_rejects_zero_divisor() {
        let line = AlgebraPresentation::affine_line(5, 6, 10);
        let f = line.element_from_terms(&[(5, vec![1])]).unwrap();
        assert!(matches!(localize(&line, &f), Err(AlgebraError::ZeroDivisorLocalization)));
    }

    #[test]
    fn product_shapes() {
        let line = AlgebraPresentation::affine_line(5, 6, 10);
        let t2 = product(&line, &line);
        assert_eq!(t2.nvars(), 2);
        assert!(t2.relations().is_empty());
        let torus = AlgebraPresentation::torus(5, 6, 10);
        let tt = product(&torus, &torus);
        assert_eq!(tt.inverted(), &[true, true]);
        // product with T_0 is the identity on shapes
        let t0 = AlgebraPresentation::free(5, 6, 10, 0);
        let same = product(&line, &t0);
        assert_eq!(same.nvars(), 1);
    }

    #[test]
    fn omega1_shapes() {
        let line = AlgebraPresentation::affine_line(5, 6, 10);
        let o = omega1_presentation(&line).unwrap();
        assert_eq!(o.generator_count, 1);
        assert!(o.relation_forms.is_empty());
        assert_eq!(o.reduced_rank, Some(1));

        let h = hyper7();
        let o = omega1_presentation(&h).unwrap();
        assert_eq!(o.generator_count, 2);
        assert_eq!(o.relation_forms.len(), 1);
        assert_eq!(o.reduced_rank, Some(1));
        // the relation form is 2y dy - f'(x) dx
        let rel = &o.relation_forms[0];
        let dy_coeff = rel.coefficient(&[1]).unwrap();
        let expect = h.element_from_terms(&[(2, vec![0, 1])]).unwrap();
        assert!(dy_coeff.eq_at_truncation(&expect));
    }

    #[test]
    fn derivative_of_monomials() {
        let line = AlgebraPresentation::affine_line(5, 8, 10);
        let x3 = line.element_from_terms(&[(1, vec![3])]).unwrap();
        let df = d(&line, &DifferentialForm::function(x3)).unwrap();
        let expect = line.element_from_terms(&[(3, vec![2])]).unwrap();
        assert!(df.coefficient(&[0]).unwrap().eq_at_truncation(&expect));
    }

    #[test]
    fn d_squared_vanishes_multivariate() {
        use rand::Rng;
        use rand::SeedableRng;
        let t2 = AlgebraPresentation::free(5, 6, 8, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut terms = Vec::new();
            for _ in 0..6 {
                terms.push((rng.gen_range(-20..20), vec![rng.gen_range(0..4), rng.gen_range(0..4)]));
            }
            let g = t2.element_from_terms(&terms).unwrap();
            let dg = d(&t2, &DifferentialForm::function(g)).unwrap();
            let ddg = d(&t2, &dg).unwrap();
            assert!(ddg.is_zero());
        }
    }

    #[test]
    fn dy_elimination_consistent_with_relation() {
        // d applied to y^2 and to f(x) must agree
        let a = hyper7();
        let y2 = a.element_from_terms(&[(1, vec![0, 2])]).unwrap();
        let f = a.f_power(1).unwrap();
        let d1 = d(&a, &DifferentialForm::function(y2)).unwrap();
        let d2 = d(&a, &DifferentialForm::function(f)).unwrap();
        assert!(d1.eq_at_truncation(&d2));
    }

    #[test]
    fn leibniz_randomized() {
        use rand::Rng;
        use rand::SeedableRng;
        let a = hyper7();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..15 {
            let mut t1 = Vec::new();
            let mut t2 = Vec::new();
            for _ in 0..4 {
                t1.push((rng.gen_range(-10..10), vec![rng.gen_range(0..3), rng.gen_range(-3..3)]));
                t2.push((rng.gen_range(-10..10), vec![rng.gen_range(0..3), rng.gen_range(-3..3)]));
            }
            let f = a.element_from_terms(&t1).unwrap();
            let g = a.element_from_terms(&t2).unwrap();
            let fg = a.mul(&f, &g).unwrap();
            let lhs = d(&a, &DifferentialForm::function(fg)).unwrap();
            let df = d(&a, &DifferentialForm::function(f.clone())).unwrap();
            let dg = d(&a, &DifferentialForm::function(g.clone())).unwrap();
            let rhs = df
                .series_mul(&a, &g)
                .unwrap()
                .checked_add(&dg.series_mul(&a, &f).unwrap())
                .unwrap();
            assert!(lhs.eq_at_truncation(&rhs), "Leibniz failed");
        }
    }

    #[test]
    fn derham_ranks() {
        let line = AlgebraPresentation::affine_line(5, 6, 10);
        assert_eq!(derham_complex(&line).unwrap().ranks, vec![1, 1]);
        let torus = AlgebraPresentation::torus(5, 6, 10);
        assert_eq!(derham_complex(&torus).unwrap().ranks, vec![1, 1]);
        let h = hyper7();
        assert_eq!(derham_complex(&h).unwrap().ranks, vec![1, 1]);
        let t2 = AlgebraPresentation::free(5, 6, 10, 2);
        assert_eq!(derham_complex(&t2).unwrap().ranks, vec![1, 2, 1]);
        let generic = AlgebraPresentation::generic(
            5,
            6,
            10,
            vec![false, false],
            vec![DaggerSeries::from_terms(5, 6, 10, vec![false, false], &[(1, vec![1, 1])]).unwrap()],
        );
        assert!(matches!(
            derham_complex(&generic),
            Err(AlgebraError::UnsupportedFamily(_))
        ));
    }
}
