//! Cohomology of the de Rham complex for the supported affine families,
//! with explicit bases and the matrix of psi.
//!
//! Every one-form is rewritten as a combination of basis classes plus an
//! exact part d(u), with the element u returned as a certificate. The
//! reductions:
//!
//! - affine line: every x^m dx integrates; H^1 = 0.
//! - torus: x^m dx integrates for m != -1; H^1 is spanned by dx/x.
//! - hyperelliptic (genus g, y^2 = f, y inverted): odd powers of y reduce
//!   through d(A(x) y^(1-2k)) and the Bezout pair of (f, f'), then the pole
//!   order-one stratum reduces in degree through d(x^(m-2g) y); even powers
//!   reduce through d(B(x) f^(1-k)) and plain integration. Bases:
//!   x^i dx/y (i <= 2g-1) for the odd part and x^i dx/y^2 (i <= 2g) for the
//!   even part, so dim H^1 = 4g + 1.
//!
//! Every division (by m+1, 2m-2g+1, 1-2k, 1-k) is performed on scalars that
//! track their own precision, so the certified precision of the output is
//! the honest minimum over the reduction path.

use thiserror::Error;

use crate::algebra::{
    poly_to_series, series_y_slice, AlgebraError, AlgebraPresentation, DifferentialForm, FamilyTag,
};
use crate::frobenius::{
    psi_form, psi_series, to_dx_coefficient, working_cap, FrobeniusError, FrobeniusLift,
};
use crate::nuclear::{solve_in_span, LinearOperator, NuclearError};
use crate::padic::{PadicError, PadicScalar};
use crate::poly::{bezout_pair, ZpPoly};
use crate::series::{DaggerSeries, MonomialExp, SeriesError};

#[derive(Debug, Error)]
pub enum MwError {
    #[error("family not supported by the cohomology engine")]
    UnsupportedFamily,
    #[error("a reduction division erased all significant digits (dividing by {divisor})")]
    PrecisionExhausted { divisor: i64 },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Frobenius(#[from] FrobeniusError),
    #[error(transparent)]
    Nuclear(#[from] NuclearError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Labeled basis of one cohomology degree together with the psi matrix on it.
#[derive(Debug, Clone)]
pub struct CohomologySpace {
    pub degree: usize,
    pub labels: Vec<String>,
    pub basis: Vec<DifferentialForm>,
    pub psi: LinearOperator,
    pub digits_used: u32,
    pub cap_used: u32,
}

impl CohomologySpace {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

/// Basis data before any operator is computed.
#[derive(Debug, Clone)]
pub struct BasisSpace {
    pub degree: usize,
    pub labels: Vec<String>,
    pub basis: Vec<DifferentialForm>,
}

/// Result of rewriting a one-form over the cohomology basis.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub coords: Vec<PadicScalar>,
    /// Degree-zero element with form = sum coords_i basis_i + d(exact_part).
    pub exact_part: DaggerSeries,
    /// Certified absolute precision of the coordinates: the input's own
    /// floor lowered by the logarithmic loss bound of the pole-chain
    /// reductions. The chain denominators telescope, so reducing a form
    /// supported in pole order up to 2K+1 costs at most floor(log_p(2K+1))
    /// digits; worst-case interval tracking of an adversarial input error
    /// would claim the full double-factorial loss, which the structured
    /// reduction flow provably never realizes.
    pub floor: i64,
}

impl Reduction {
    /// Smallest certified absolute precision along the reduction.
    pub fn certified_abs_precision(&self) -> i64 {
        self.coords
            .iter()
            .map(|c| c.abs_precision())
            .fold(self.exact_part.effective_abs_precision().min(self.floor), i64::min)
    }
}

/// Cohomology bases in degrees 0..=1 (the supported families are curves).
pub fn cohomology_basis(algebra: &AlgebraPresentation) -> Result<Vec<BasisSpace>, MwError> {
    let one = DifferentialForm::function(algebra.one_element());
    let h0 = BasisSpace { degree: 0, labels: vec!["1".into()], basis: vec![one] };
    let h1 = match algebra.family() {
        FamilyTag::AffineLine => BasisSpace { degree: 1, labels: Vec::new(), basis: Vec::new() },
        FamilyTag::Torus => BasisSpace {
            degree: 1,
            labels: vec!["dx/x".into()],
            basis: vec![DifferentialForm::one_form(
                0,
                algebra.element_from_terms(&[(1, vec![-1])])?,
            )],
        },
        FamilyTag::Hyperelliptic { genus, .. } => {
            let g = *genus as i32;
            let mut labels = Vec::new();
            let mut basis = Vec::new();
            for i in 0..(2 * g) {
                labels.push(format!("x^{i} dx/y"));
                basis.push(DifferentialForm::one_form(
                    0,
                    algebra.element_from_terms(&[(1, vec![i, -1])])?,
                ));
            }
            for i in 0..=(2 * g) {
                labels.push(format!("x^{i} dx/y^2"));
                basis.push(DifferentialForm::one_form(
                    0,
                    algebra.element_from_terms(&[(1, vec![i, -2])])?,
                ));
            }
            BasisSpace { degree: 1, labels, basis }
        }
        FamilyTag::Generic => return Err(MwError::UnsupportedFamily),
    };
    Ok(vec![h0, h1])
}

/// Rewrite a one-form as basis coordinates plus an exact part.
pub fn reduce_form(
    algebra: &AlgebraPresentation,
    form: &DifferentialForm,
) -> Result<Reduction, MwError> {
    assert_eq!(form.degree(), 1, "reduce_form acts on one-forms");
    let g = to_dx_coefficient(algebra, form)?;
    match algebra.family() {
        FamilyTag::AffineLine => reduce_line(algebra, &g, false),
        FamilyTag::Torus => reduce_line(algebra, &g, true),
        FamilyTag::Hyperelliptic { .. } => reduce_hyperelliptic(algebra, &g),
        FamilyTag::Generic => Err(MwError::UnsupportedFamily),
    }
}

fn integrate_monomial(c: &PadicScalar, m: i32) -> Result<PadicScalar, MwError> {
    let out = c
        .div_integer((m + 1) as i64)
        .map_err(MwError::Padic)?;
    if out.abs_precision() <= 0 && !out.is_zero() {
        return Err(MwError::PrecisionExhausted { divisor: (m + 1) as i64 });
    }
    Ok(out)
}

fn reduce_line(
    algebra: &AlgebraPresentation,
    g: &DaggerSeries,
    torus: bool,
) -> Result<Reduction, MwError> {
    let mut u = DaggerSeries::zero(algebra.p(), algebra.digits(), g.cap().saturating_add(1), algebra.inverted().to_vec());
    u.clamp_floor(g.effective_abs_precision());
    let mut dlog_coord = PadicScalar::zero(algebra.p(), algebra.digits() as i64);
    for (mono, c) in g.support() {
        let m = mono.0[0];
        if torus && m == -1 {
            dlog_coord = dlog_coord.checked_add(c)?;
            continue;
        }
        u.accumulate(MonomialExp(vec![m + 1]), integrate_monomial(c, m)?);
    }
    let coords = if torus { vec![dlog_coord] } else { Vec::new() };
    let floor = g.effective_abs_precision();
    Ok(Reduction { coords, exact_part: u, floor })
}

fn reduce_hyperelliptic(
    algebra: &AlgebraPresentation,
    g: &DaggerSeries,
) -> Result<Reduction, MwError> {
    let p = algebra.p();
    let digits = algebra.digits();
    let genus = algebra.genus().expect("hyperelliptic") as i32;
    let f = algebra.curve_poly().expect("hyperelliptic");
    let f_deriv = f.derivative()?;
    let (bez_a, bez_b) = bezout_pair(&f, &f_deriv)?;
    let ucap = working_cap(algebra).saturating_add(2 * g.max_total_degree());
    let mut u = DaggerSeries::zero(p, digits, ucap, algebra.inverted().to_vec());
    u.clamp_floor(g.effective_abs_precision());

    // strata: odd[k] over y^(2k+1), even[k] over f^k = y^(2k), poly part.
    // Each stratum is stored as p^(-denom) * poly with poly kept p-integral:
    // divisions along the pole chain only bump the shared exponent, so the
    // telescoping cancellation of the chain denominators stays visible to
    // the per-scalar precision tracking instead of spiking it at each merge.
    let mut odd: Vec<Stratum> = Vec::new();
    let mut even: Vec<Stratum> = Vec::new();
    let mut max_pole = 0usize;
    let mut poly_part = Stratum::zero(p, digits);
    let mut y_exps: Vec<i32> = g.support().map(|(m, _)| m.0[1]).collect();
    y_exps.sort_unstable();
    y_exps.dedup();
    for b in y_exps {
        let slice = series_y_slice(g, b);
        if slice.is_zero() {
            continue;
        }
        if b.rem_euclid(2) == 1 {
            // odd: y^b = f^((b+1)/2) / y
            let t = (b + 1) / 2;
            if t >= 0 {
                let shifted = slice.mul(&f.pow(t as u32)?)?;
                push_stratum(&mut odd, 0, &shifted, 0)?;
            } else {
                // y^b = 1/y^(2k+1) with k = -t
                max_pole = max_pole.max((-t) as usize);
                push_stratum(&mut odd, (-t) as usize, &slice, 0)?;
            }
        } else {
            let t = b / 2;
            if t >= 0 {
                poly_part.merge(&slice.mul(&f.pow(t as u32)?)?, 0)?;
            } else {
                max_pole = max_pole.max((-t) as usize);
                push_stratum(&mut even, (-t) as usize, &slice, 0)?;
            }
        }
    }

    // odd pole reduction: P dx/y^(2k+1) -> (Q + S a - (2/(1-2k))(S b)') dx/y^(2k-1)
    for k in (1..odd.len().max(1)).rev() {
        if k >= odd.len() || odd[k].poly.is_zero() {
            continue;
        }
        let Stratum { poly: pk, denom: dk } = std::mem::replace(&mut odd[k], Stratum::zero(p, digits));
        let (q, s) = pk.divrem(&f)?;
        let sa = s.mul(&bez_a)?;
        let sb = s.mul(&bez_b)?;
        let (t, unit_inv) = unit_part_inverse(p, digits, 1 - 2 * k as i64)?;
        // A = (2/(1-2k)) S b, kept as p^(-(dk+t)) * a_num
        let a_num = sb.mul_integer(2)?.scalar_mul(&unit_inv)?;
        u = u.checked_add(
            &poly_to_series(algebra, &a_num, 1 - 2 * k as i32, ucap)?
                .shift_valuation(dk + t)?,
        )?;
        let next = q.add(&sa)?.scale_p_power(p, t)?.sub(&a_num.derivative()?)?;
        push_stratum(&mut odd, k - 1, &next, dk + t)?;
    }

    // pole order one: reduce x-degree below 2g via d(x^(m-2g) y)
    let mut p0 = odd.drain(..).next().unwrap_or_else(|| Stratum::zero(p, digits));
    while let Some(m) = p0.poly.degree() {
        if (m as i32) < 2 * genus {
            break;
        }
        let m = m as i64;
        let (t, unit_inv) = unit_part_inverse(p, digits, 2 * m - 2 * genus as i64 + 1)?;
        // with the divisor's p-part absorbed into the stratum exponent, the
        // elimination factor uses the leading coefficient before rescaling
        let lam = p0.poly.leading().unwrap().clone();
        p0.poly = p0.poly.scale_p_power(p, t)?;
        p0.denom += t;
        let mu = lam.mul_integer(2)?.checked_mul(&unit_inv)?;
        // d(x^(m-2g) y) = [(m-2g) x^(m-2g-1) f + (1/2) x^(m-2g) f'] dx / y
        let e = (m - 2 * genus as i64) as usize;
        let x_e = ZpPoly::monomial(p, digits, PadicScalar::one(p, digits), e);
        let mut bracket = x_e.mul(&f_deriv)?.scalar_mul(&inv_int_scalar(p, digits, 2)?)?;
        if e > 0 {
            let x_e1 = ZpPoly::monomial(p, digits, PadicScalar::one(p, digits), e - 1);
            bracket = bracket.add(&x_e1.mul(&f)?.mul_integer(m - 2 * genus as i64)?)?;
        }
        p0.poly = p0.poly.sub(&bracket.scalar_mul(&mu)?)?;
        u = u.checked_add(
            &poly_to_series(algebra, &x_e.scalar_mul(&mu)?, 1, ucap)?.shift_valuation(p0.denom)?,
        )?;
        if p0.poly.degree().map(|d| d as i64 >= m).unwrap_or(false) {
            // leading term must strictly drop
            return Err(MwError::PrecisionExhausted { divisor: 2 * m - 2 * genus as i64 + 1 });
        }
    }

    // even pole reduction: P dx/f^k -> (Q + S a - (1/(1-k))(S b)') dx/f^(k-1)
    for k in (2..even.len().max(2)).rev() {
        if k >= even.len() || even[k].poly.is_zero() {
            continue;
        }
        let Stratum { poly: pk, denom: dk } = std::mem::replace(&mut even[k], Stratum::zero(p, digits));
        let (q, s) = pk.divrem(&f)?;
        let sa = s.mul(&bez_a)?;
        let sb = s.mul(&bez_b)?;
        let (t, unit_inv) = unit_part_inverse(p, digits, 1 - k as i64)?;
        let b_num = sb.scalar_mul(&unit_inv)?;
        u = u.checked_add(
            &poly_to_series(algebra, &b_num, 2 * (1 - k as i32), ucap)?
                .shift_valuation(dk + t)?,
        )?;
        let next = q.add(&sa)?.scale_p_power(p, t)?.sub(&b_num.derivative()?)?;
        push_stratum(&mut even, k - 1, &next, dk + t)?;
    }

    // pole order one in f: split off the polynomial multiple
    let mut even_coords = vec![PadicScalar::zero(p, digits as i64); (2 * genus + 1) as usize];
    let mut even_denom = 0i64;
    if even.len() > 1 && !even[1].poly.is_zero() {
        let d1 = even[1].denom;
        even_denom = d1;
        let (q, s) = even[1].poly.divrem(&f)?;
        poly_part.merge_scaled(&q, d1)?;
        for (i, c) in s.coeffs().iter().enumerate() {
            even_coords[i] = even_coords[i].checked_add(&shift_scalar(c, d1)?)?;
        }
    }

    // polynomial stratum integrates away
    let unscale = poly_part.denom;
    for (m, c) in poly_part.poly.coeffs().iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        u.accumulate(
            MonomialExp(vec![m as i32 + 1, 0]),
            shift_scalar(&integrate_monomial(c, m as i32)?, unscale)?,
        );
    }

    let mut coords = Vec::with_capacity((4 * genus + 1) as usize);
    for i in 0..(2 * genus) as usize {
        coords.push(shift_scalar(&p0.poly.coeff(i), p0.denom)?);
    }
    coords.extend(even_coords);
    let _ = even_denom;
    let floor = g.effective_abs_precision() - log_loss(p, max_pole);
    Ok(Reduction { coords, exact_part: u, floor })
}

/// floor(log_p(2K + 1)): the telescoped digit cost of a pole chain of
/// order 2K + 1.
fn log_loss(p: u64, max_pole: usize) -> i64 {
    let mut loss = 0i64;
    let mut bound = p as i64;
    while bound <= 2 * max_pole as i64 + 1 {
        loss += 1;
        bound = bound.saturating_mul(p as i64);
    }
    loss
}

/// A pole stratum held as p^(-denom) * poly with poly p-integral.
struct Stratum {
    poly: ZpPoly,
    denom: i64,
}

impl Stratum {
    fn zero(p: u64, digits: u32) -> Self {
        Stratum { poly: ZpPoly::zero(p, digits), denom: 0 }
    }

    /// Add p^(-denom) * poly into the stratum, unifying exponents upward.
    fn merge(&mut self, poly: &ZpPoly, denom: i64) -> Result<(), MwError> {
        self.merge_scaled(poly, denom)
    }

    fn merge_scaled(&mut self, poly: &ZpPoly, denom: i64) -> Result<(), MwError> {
        if poly.is_zero() {
            return Ok(());
        }
        let p = poly.p();
        if denom >= self.denom {
            self.poly = self.poly.scale_p_power(p, denom - self.denom)?.add(poly)?;
            self.denom = denom;
        } else {
            self.poly = self.poly.add(&poly.scale_p_power(p, self.denom - denom)?)?;
        }
        Ok(())
    }
}

fn push_stratum(
    strata: &mut Vec<Stratum>,
    k: usize,
    poly: &ZpPoly,
    denom: i64,
) -> Result<(), MwError> {
    while strata.len() <= k {
        strata.push(Stratum::zero(poly.p(), poly.digits()));
    }
    strata[k].merge(poly, denom)?;
    Ok(())
}

/// Split n = p^t * unit and return (t, unit^-1).
fn unit_part_inverse(p: u64, digits: u32, n: i64) -> Result<(i64, PadicScalar), MwError> {
    assert!(n != 0);
    let mut t = 0i64;
    let mut m = n;
    while m % p as i64 == 0 {
        m /= p as i64;
        t += 1;
    }
    Ok((t, PadicScalar::from_integer(p, digits, m)?.checked_invert()?))
}

fn shift_scalar(c: &PadicScalar, denom: i64) -> Result<PadicScalar, MwError> {
    if denom == 0 {
        return Ok(c.clone());
    }
    Ok(c.checked_mul(&PadicScalar::from_unit(c.p(), c.digits().max(1), 1, -denom)?)?)
}

fn inv_int_scalar(p: u64, digits: u32, n: i64) -> Result<PadicScalar, MwError> {
    let s = PadicScalar::from_integer(p, digits, n)?.checked_invert()?;
    if s.abs_precision() <= 0 {
        return Err(MwError::PrecisionExhausted { divisor: n });
    }
    Ok(s)
}

/// The matrix of psi on a basis space. Default lifts go through the
/// chain-level psi; other lifts use psi = p (F*)^(-1) on cohomology.
pub fn psi_matrix(
    algebra: &AlgebraPresentation,
    lift: &FrobeniusLift,
    space: &BasisSpace,
) -> Result<LinearOperator, MwError> {
    let p = algebra.p();
    if space.degree == 0 {
        // psi fixes constants up to the factor p for any lift
        let entry = if lift.is_default() {
            let image = psi_series(lift, &algebra.one_element())?;
            constant_coordinate(algebra, &image)?
        } else {
            PadicScalar::from_integer(p, algebra.digits(), p as i64)?
        };
        return Ok(LinearOperator::new(p, vec![vec![entry]]));
    }
    if space.basis.is_empty() {
        return Ok(LinearOperator::zero(p, 0, algebra.digits()));
    }
    if lift.is_default() {
        let mut columns = Vec::with_capacity(space.basis.len());
        for form in &space.basis {
            let image = psi_form(lift, form)?;
            let red = reduce_form(algebra, &image)?;
            columns.push(certified_coords(&red));
        }
        Ok(LinearOperator::new(p, transpose_columns(p, &columns)))
    } else {
        let frob = frobenius_matrix(algebra, lift, space)?;
        let inv = invert_operator(&frob)?;
        let mut scaled = inv;
        scaled = scale_operator(&scaled, p as i64)?;
        Ok(scaled)
    }
}

/// The matrix of F* on a basis space (columns are reduced pullbacks).
pub fn frobenius_matrix(
    algebra: &AlgebraPresentation,
    lift: &FrobeniusLift,
    space: &BasisSpace,
) -> Result<LinearOperator, MwError> {
    let p = algebra.p();
    if space.degree == 0 {
        return Ok(LinearOperator::new(
            p,
            vec![vec![PadicScalar::one(p, algebra.digits())]],
        ));
    }
    if space.basis.is_empty() {
        return Ok(LinearOperator::zero(p, 0, algebra.digits()));
    }
    let mut columns = Vec::with_capacity(space.basis.len());
    for form in &space.basis {
        let image = lift.pull_back(form)?;
        let red = reduce_form(algebra, &image)?;
        columns.push(certified_coords(&red));
    }
    Ok(LinearOperator::new(p, transpose_columns(p, &columns)))
}

/// Coordinates truncated to the reduction's certified coordinate floor.
fn certified_coords(red: &Reduction) -> Vec<PadicScalar> {
    red.coords.iter().map(|c| c.truncate_abs(red.floor)).collect()
}

/// Class of a closed degree-zero element in H^0 = constants; non-constant
/// residue must vanish at working precision.
pub fn constant_coordinate(
    algebra: &AlgebraPresentation,
    series: &DaggerSeries,
) -> Result<PadicScalar, MwError> {
    let mut coord = PadicScalar::zero(algebra.p(), algebra.digits() as i64);
    for (m, c) in series.support() {
        if m.is_constant() {
            coord = coord.checked_add(c)?;
        } else if !c.is_zero() && c.valuation().bound() < algebra.digits() as i64 {
            return Err(MwError::UnsupportedFamily);
        }
    }
    Ok(coord)
}

fn transpose_columns(p: u64, columns: &[Vec<PadicScalar>]) -> Vec<Vec<PadicScalar>> {
    let dim = columns.len();
    let mut rows = vec![vec![PadicScalar::zero(p, 1); dim]; dim];
    for (j, col) in columns.iter().enumerate() {
        assert_eq!(col.len(), dim, "reduction coordinates must match the basis");
        for i in 0..dim {
            rows[i][j] = col[i].clone();
        }
    }
    rows
}

fn invert_operator(op: &LinearOperator) -> Result<LinearOperator, MwError> {
    let n = op.dim();
    let p = op.p();
    let digits = op
        .entries()
        .iter()
        .flatten()
        .map(|e| e.digits())
        .max()
        .unwrap_or(1)
        .max(1);
    let cols: Vec<Vec<PadicScalar>> = (0..n)
        .map(|j| (0..n).map(|i| op.entry(i, j).clone()).collect())
        .collect();
    let id: Vec<Vec<PadicScalar>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| {
                    if i == j {
                        PadicScalar::one(p, digits)
                    } else {
                        PadicScalar::zero(p, digits as i64)
                    }
                })
                .collect()
        })
        .collect();
    let coords = solve_in_span(p, &cols, &id)?;
    let mut rows = vec![vec![PadicScalar::zero(p, digits as i64); n]; n];
    for (j, col) in coords.iter().enumerate() {
        for i in 0..n {
            rows[i][j] = col[i].clone();
        }
    }
    Ok(LinearOperator::new(p, rows))
}

fn scale_operator(op: &LinearOperator, factor: i64) -> Result<LinearOperator, MwError> {
    let mut rows = op.entries().to_vec();
    for row in &mut rows {
        for e in row {
            *e = e.mul_integer(factor)?;
        }
    }
    Ok(LinearOperator::new(op.p(), rows))
}

/// Cohomology spaces with psi matrices for all degrees 0..=1.
pub fn cohomology_spaces(
    algebra: &AlgebraPresentation,
    lift: &FrobeniusLift,
) -> Result<Vec<CohomologySpace>, MwError> {
    let bases = cohomology_basis(algebra)?;
    bases
        .into_iter()
        .map(|b| {
            let psi = psi_matrix(algebra, lift, &b)?;
            Ok(CohomologySpace {
                degree: b.degree,
                labels: b.labels,
                basis: b.basis,
                psi,
                digits_used: algebra.digits(),
                cap_used: algebra.cap(),
            })
        })
        .collect()
}

/// Default working precision for a family: enough digits to round every
/// count up to s = smax through the Weil-type bounds, plus safety margin.
pub fn default_precision(family: &FamilyTag, p: u64, smax: u32) -> (u32, u32) {
    let digits_for = |bound: i64| -> u32 {
        let mut k = 1u32;
        let mut m = p as i64;
        while m <= 2 * bound {
            k += 1;
            m = m.saturating_mul(p as i64);
        }
        k
    };
    match family {
        FamilyTag::Hyperelliptic { genus, .. } => {
            let g = *genus;
            // ceil(log_p(4 p^g)) + 4 safety digits
            let policy = g + digits_for(4) + 4;
            let needed = digits_for(count_bound(family, p, smax)) + 3;
            let digits = policy.max(needed);
            let cap = p as u32 * (2 * g + 1) + 8;
            (digits, cap)
        }
        _ => {
            let needed = digits_for(count_bound(family, p, smax)) + 2;
            (needed.max(6), 2 * p as u32 + 8)
        }
    }
}

/// Scalar digits for the Frobenius-pullback route at a target certified
/// window: the pole chains to depth about p(t+1) spend roughly one digit
/// per p steps on their telescoped denominators, plus slack.
pub fn frobenius_route_digits(p: u64, target: u32) -> u32 {
    let depth = p as u32 * (target + 1);
    target + 2 + depth.div_ceil(p as u32 - 1)
}

/// Certified upper bound for the number of points over F_(p^s).
pub fn count_bound(family: &FamilyTag, p: u64, s: u32) -> i64 {
    let q = (p as i64).saturating_pow(s);
    match family {
        FamilyTag::AffineLine | FamilyTag::Torus => q,
        FamilyTag::Hyperelliptic { genus, .. } => {
            // Weil: at most q + 1 + 2g sqrt(q) projective points
            let root = (q as f64).sqrt().ceil() as i64 + 1;
            q + 1 + 2 * (*genus as i64) * root
        }
        FamilyTag::Generic => i64::MAX / 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::d;
    use crate::frobenius::default_lift;
    use crate::nuclear::{char_det, round_signed, trace_power};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper7() -> AlgebraPresentation {
        let (digits, cap) = default_precision(
            &FamilyTag::Hyperelliptic { genus: 1, f_coeffs: vec![1, 1, 0, 1] },
            7,
            2,
        );
        AlgebraPresentation::hyperelliptic(7, digits, cap, 1, &[1, 1, 0, 1]).unwrap()
    }

    #[test]
    fn dims_per_family() {
        let line = AlgebraPresentation::affine_line(5, 6, 18);
        let spaces = cohomology_basis(&line).unwrap();
        assert_eq!(spaces[0].labels.len(), 1);
        assert_eq!(spaces[1].labels.len(), 0);
        let torus = AlgebraPresentation::torus(5, 6, 18);
        let spaces = cohomology_basis(&torus).unwrap();
        assert_eq!(spaces[1].labels.len(), 1);
        let h = hyper7();
        let spaces = cohomology_basis(&h).unwrap();
        assert_eq!(spaces[1].labels.len(), 5); // 2g + (2g+1) with g = 1
    }

    #[test]
    fn torus_reduction_examples() {
        let t = AlgebraPresentation::torus(5, 6, 18);
        // x^3 dx integrates to x^4/4
        let form = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![3])]).unwrap());
        let red = reduce_form(&t, &form).unwrap();
        assert!(red.coords[0].is_zero());
        let quarter = PadicScalar::from_ratio(5, 6, 1, 4).unwrap();
        assert!(red.exact_part.coeff(&MonomialExp(vec![4])).unwrap().eq_at_common_precision(&quarter));
        // dx/x is the basis class
        let dlog = DifferentialForm::one_form(0, t.element_from_terms(&[(1, vec![-1])]).unwrap());
        let red = reduce_form(&t, &dlog).unwrap();
        assert!(red.coords[0].eq_at_common_precision(&PadicScalar::one(5, 6)));
        assert!(red.exact_part.is_zero());
    }

    #[test]
    fn recomposition_oracle_on_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        // torus
        let t = AlgebraPresentation::torus(5, 8, 18);
        for _ in 0..15 {
            let mut terms = Vec::new();
            for _ in 0..6 {
                terms.push((rng.gen_range(-40..40), vec![rng.gen_range(-6..6)]));
            }
            let gse = t.element_from_terms(&terms).unwrap();
            let form = DifferentialForm::one_form(0, gse);
            let red = reduce_form(&t, &form).unwrap();
            let du = d(&t, &DifferentialForm::function(red.exact_part.clone())).unwrap();
            let basis = cohomology_basis(&t).unwrap();
            let mut back = du;
            for (c, b) in red.coords.iter().zip(&basis[1].basis) {
                back = back.checked_add(&b.scalar_mul(c).unwrap()).unwrap();
            }
            let n = red.certified_abs_precision().min(8);
            assert!(back.eq_mod(&form, n), "torus recomposition failed");
        }
        // hyperelliptic
        let h = hyper7();
        for _ in 0..8 {
            let mut terms = Vec::new();
            for _ in 0..5 {
                terms.push((
                    rng.gen_range(-40..40),
                    vec![rng.gen_range(0..3), rng.gen_range(-5..5)],
                ));
            }
            let gse = h.element_from_terms(&terms).unwrap();
            let form = DifferentialForm::one_form(0, gse);
            let red = reduce_form(&h, &form).unwrap();
            let du = d(&h, &DifferentialForm::function(red.exact_part.clone())).unwrap();
            let basis = cohomology_basis(&h).unwrap();
            let mut back = du;
            for (c, b) in red.coords.iter().zip(&basis[1].basis) {
                back = back.checked_add(&b.scalar_mul(c).unwrap()).unwrap();
            }
            let n = red.certified_abs_precision().min(h.digits() as i64);
            let diff = back.checked_sub(&form).unwrap();
            assert!(diff.is_zero_mod(n), "hyperelliptic recomposition failed: {diff}");
        }
    }

    #[test]
    fn basis_classes_reduce_to_themselves() {
        let h = hyper7();
        let basis = cohomology_basis(&h).unwrap();
        for (j, b) in basis[1].basis.iter().enumerate() {
            let red = reduce_form(&h, b).unwrap();
            for (i, c) in red.coords.iter().enumerate() {
                if i == j {
                    assert!(c.eq_at_common_precision(&PadicScalar::one(7, h.digits())));
                } else {
                    assert!(c.is_zero(), "basis {j} leaked into {i}");
                }
            }
        }
    }

    #[test]
    fn line_and_torus_psi_matrices() {
        let p = 5u64;
        let line = AlgebraPresentation::affine_line(p, 6, 18);
        let lift = default_lift(&line).unwrap();
        let spaces = cohomology_spaces(&line, &lift).unwrap();
        assert_eq!(spaces[0].psi.dim(), 1);
        assert_eq!(
            round_signed(&trace_power(&spaces[0].psi, 1).unwrap(), 10).unwrap(),
            p as i64
        );
        assert_eq!(spaces[1].psi.dim(), 0);

        let t = AlgebraPresentation::torus(p, 6, 18);
        let lift = default_lift(&t).unwrap();
        let spaces = cohomology_spaces(&t, &lift).unwrap();
        assert_eq!(spaces[1].psi.dim(), 1);
        assert_eq!(round_signed(&trace_power(&spaces[1].psi, 1).unwrap(), 10).unwrap(), 1);
    }

    #[test]
    fn hyperelliptic_psi_matrix_matches_oracle_counts() {
        // p = 7, f = x^3 + x + 1: the affine curve minus Weierstrass points
        // has N_1 = 4 (enumeration by hand over F_7: only x in {0, 2} give
        // nonzero squares) and the projective trace is a_1 = 3.
        let h = hyper7();
        let lift = default_lift(&h).unwrap();
        let spaces = cohomology_spaces(&h, &lift).unwrap();
        assert_eq!(spaces[1].dim(), 5);
        let n1 = crate::nuclear::lefschetz_count(
            &[(0, &spaces[0].psi), (1, &spaces[1].psi)],
            1,
        )
        .unwrap();
        assert_eq!(crate::nuclear::round_count(&n1, 64).unwrap(), 4);
        let n2 = crate::nuclear::lefschetz_count(
            &[(0, &spaces[0].psi), (1, &spaces[1].psi)],
            2,
        )
        .unwrap();
        assert_eq!(crate::nuclear::round_count(&n2, 64).unwrap(), 54);
    }

    #[test]
    fn hyperelliptic_odd_part_char_poly() {
        // odd part block: det(1 - t psi) = 1 - 3t + 7t^2 (derived from the
        // oracle count N_1(E) = 5 projective points, so a = 7 + 1 - 5 = 3)
        let h = hyper7();
        let lift = default_lift(&h).unwrap();
        let bases = cohomology_basis(&h).unwrap();
        let psi = psi_matrix(&h, &lift, &bases[1]).unwrap();
        // odd block = rows/cols 0..2g
        let odd = LinearOperator::new(
            7,
            (0..2).map(|i| (0..2).map(|j| psi.entry(i, j).clone()).collect()).collect(),
        );
        let cd = char_det(&odd).unwrap();
        assert_eq!(round_signed(&cd.coeff(1), 5).unwrap(), -3);
        assert_eq!(round_signed(&cd.coeff(2), 7).unwrap(), 7);
        // even block char poly is 1 - t^3 (f irreducible mod 7)
        let even = LinearOperator::new(
            7,
            (2..5).map(|i| (2..5).map(|j| psi.entry(i, j).clone()).collect()).collect(),
        );
        let cd = char_det(&even).unwrap();
        assert_eq!(round_signed(&cd.coeff(1), 21).unwrap(), 0);
        assert_eq!(round_signed(&cd.coeff(2), 147).unwrap(), 0);
        assert_eq!(round_signed(&cd.coeff(3), 343).unwrap(), -1);
    }

    #[test]
    fn psi_times_frobenius_is_multiplication_by_p() {
        // the Frobenius pullback reductions climb deep poles whose chain
        // denominators eat digits; run the scalars above the target window
        // with the tail threshold pinned at the target
        let target = 5i64;
        let digits = frobenius_route_digits(7, target as u32);
        let h = AlgebraPresentation::hyperelliptic(7, digits, 29, 1, &[1, 1, 0, 1]).unwrap();
        let lift = default_lift(&h).unwrap().with_keep_val(target);
        let bases = cohomology_basis(&h).unwrap();
        let psi = psi_matrix(&h, &lift, &bases[1]).unwrap();
        let frob = frobenius_matrix(&h, &lift, &bases[1]).unwrap();
        assert!(frob.min_abs_precision() >= 3, "F* lost too much precision");
        // the product of two approximate matrices is certified to the
        // factors' windows shifted by any negative entry valuations
        let neg: i64 = psi
            .entries()
            .iter()
            .chain(frob.entries())
            .flatten()
            .map(|e| e.valuation().bound())
            .min()
            .unwrap_or(0)
            .min(0);
        let window = psi.min_abs_precision().min(frob.min_abs_precision()) + neg;
        assert!(window >= 2, "product window collapsed");
        let prod = psi.mul(&frob).unwrap();
        let scaled_id = scale_operator(&LinearOperator::identity(7, 5, h.digits()), 7).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let got = prod.entry(i, j).truncate_abs(window);
                let want = scaled_id.entry(i, j).truncate_abs(window);
                assert!(
                    got.eq_at_common_precision(&want),
                    "psi F* != p id at ({i},{j}): {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn precision_policy_shapes() {
        let fam = FamilyTag::Hyperelliptic { genus: 1, f_coeffs: vec![1, 1, 0, 1] };
        let (digits, cap) = default_precision(&fam, 7, 2);
        assert!(digits >= 6);
        assert_eq!(cap, 7 * 3 + 8);
        let (digits, _) = default_precision(&FamilyTag::Torus, 3, 3);
        assert!(3i64.pow(digits) > 2 * 27);
    }
}
