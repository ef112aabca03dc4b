//! Finite-dimensional operator calculus over Q_p: traces of powers,
//! characteristic series det(1 - tL), kernel/cokernel and
//! restriction/quotient constructions with their determinant and trace
//! identities, certified integer rounding, and zeta-function assembly from
//! graded operator data.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::padic::{p_pow, PadicError, PadicScalar};
use crate::poly::ZpPoly;
use crate::qseries::rational_series;

#[derive(Debug, Error)]
pub enum NuclearError {
    #[error("alpha does not intertwine the operators")]
    NotIntertwining,
    #[error("subspace is not invariant under the operator")]
    NotInvariant,
    #[error("rounding window p^{digits} cannot separate integers up to {bound}")]
    AmbiguousRounding { digits: i64, bound: i64 },
    #[error("log-derivative of the assembled zeta disagrees with the trace counts at order {order}")]
    LogDerivativeMismatch { order: usize },
    #[error("linear system is singular at working precision")]
    Singular,
    #[error("value is not a p-adic integer (valuation {0})")]
    NotIntegral(i64),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Square matrix over Q_p acting on column vectors.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    p: u64,
    dim: usize,
    entries: Vec<Vec<PadicScalar>>,
}

impl LinearOperator {
    pub fn new(p: u64, entries: Vec<Vec<PadicScalar>>) -> Self {
        let dim = entries.len();
        for row in &entries {
            assert_eq!(row.len(), dim, "operator matrix must be square");
        }
        LinearOperator { p, dim, entries }
    }

    pub fn zero(p: u64, dim: usize, digits: u32) -> Self {
        let z = PadicScalar::zero(p, digits as i64);
        LinearOperator { p, dim, entries: vec![vec![z; dim]; dim] }
    }

    pub fn identity(p: u64, dim: usize, digits: u32) -> Self {
        let mut m = Self::zero(p, dim, digits);
        for i in 0..dim {
            m.entries[i][i] = PadicScalar::one(p, digits);
        }
        m
    }

    pub fn from_integers(p: u64, digits: u32, rows: &[Vec<i64>]) -> Self {
        let entries = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&v| PadicScalar::from_integer(p, digits, v).expect("small precision"))
                    .collect()
            })
            .collect();
        Self::new(p, entries)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> &PadicScalar {
        &self.entries[i][j]
    }

    pub fn entries(&self) -> &[Vec<PadicScalar>] {
        &self.entries
    }

    /// Minimum absolute precision across entries (i64::MAX for empty).
    pub fn min_abs_precision(&self) -> i64 {
        self.entries
            .iter()
            .flatten()
            .map(|e| e.abs_precision())
            .min()
            .unwrap_or(i64::MAX)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, NuclearError> {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.p, self.dim, 1);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut acc = PadicScalar::zero(self.p, i64::MAX / 2);
                for k in 0..self.dim {
                    acc = acc.checked_add(&self.entries[i][k].checked_mul(&other.entries[k][j])?)?;
                }
                out.entries[i][j] = acc;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self, NuclearError> {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.entries[i][j] = out.entries[i][j].checked_add(&other.entries[i][j])?;
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> Result<PadicScalar, NuclearError> {
        let mut acc = PadicScalar::zero(self.p, i64::MAX / 2);
        for i in 0..self.dim {
            acc = acc.checked_add(&self.entries[i][i])?;
        }
        Ok(acc)
    }

    pub fn apply(&self, v: &[PadicScalar]) -> Result<Vec<PadicScalar>, NuclearError> {
        assert_eq!(v.len(), self.dim);
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut acc = PadicScalar::zero(self.p, i64::MAX / 2);
            for k in 0..self.dim {
                acc = acc.checked_add(&self.entries[i][k].checked_mul(&v[k])?)?;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Direct sum along the diagonal.
    pub fn block_diagonal(p: u64, digits: u32, blocks: &[&LinearOperator]) -> Self {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        let mut out = Self::zero(p, dim, digits);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.dim {
                for j in 0..b.dim {
                    out.entries[off + i][off + j] = b.entries[i][j].clone();
                }
            }
            off += b.dim;
        }
        out
    }

    pub fn eq_at_common_precision(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self
                .entries
                .iter()
                .flatten()
                .zip(other.entries.iter().flatten())
                .all(|(a, b)| a.eq_at_common_precision(b))
    }
}

/// Exact trace of L^s (finite dimension makes the nuclear limit a plain
/// matrix trace).
pub fn trace_power(op: &LinearOperator, s: u32) -> Result<PadicScalar, NuclearError> {
    assert!(s >= 1);
    let mut acc = op.clone();
    for _ in 1..s {
        acc = acc.mul(op)?;
    }
    acc.trace()
}

/// det(1 - tL) as a polynomial of degree <= dim, by subset expansion of the
/// polynomial matrix (division-free, so no precision is lost beyond the
/// entries').
pub fn char_det(op: &LinearOperator) -> Result<ZpPoly, NuclearError> {
    let n = op.dim();
    let p = op.p();
    assert!(n <= 20, "char_det is for desk-scale dimensions");
    let digits = op
        .entries()
        .iter()
        .flatten()
        .map(|e| e.digits())
        .filter(|&d| d > 0)
        .max()
        .unwrap_or(1);
    if n == 0 {
        return Ok(ZpPoly::from_integers(p, digits, &[1]));
    }
    // entry polynomials of M = I - tL
    let entry_poly = |i: usize, j: usize| -> ZpPoly {
        let constant = if i == j {
            PadicScalar::one(p, digits)
        } else {
            PadicScalar::zero(p, digits as i64)
        };
        ZpPoly::from_scalars(p, digits, vec![constant, op.entry(i, j).checked_neg()])
    };
    // dp over column subsets; row index = popcount - 1
    let mut dp: Vec<Option<ZpPoly>> = vec![None; 1 << n];
    dp[0] = Some(ZpPoly::from_integers(p, digits, &[1]));
    for mask in 1usize..(1 << n) {
        let row = (mask.count_ones() - 1) as usize;
        let mut acc = ZpPoly::zero(p, digits);
        // Laplace expansion along the last row: sign (-1)^(row + column pos)
        let mut sign_flip = row % 2 == 1;
        for j in 0..n {
            if mask & (1 << j) == 0 {
                continue;
            }
            let sub = dp[mask ^ (1 << j)].as_ref().expect("smaller mask filled");
            let term = sub.mul(&entry_poly(row, j))?;
            acc = if sign_flip { acc.sub(&term)? } else { acc.add(&term)? };
            sign_flip = !sign_flip;
        }
        dp[mask] = Some(acc);
    }
    Ok(dp[(1 << n) - 1].take().expect("full mask filled"))
}

/// Columns spanning the kernel of `a` (an m x n matrix given as rows).
/// `digits_default` sets the precision of the free-coordinate unit entries.
pub fn kernel_basis_with_digits(
    p: u64,
    digits_default: u32,
    rows: &[Vec<PadicScalar>],
) -> Result<Vec<Vec<PadicScalar>>, NuclearError> {
    let m = rows.len();
    let n = if m == 0 { 0 } else { rows[0].len() };
    let mut mat: Vec<Vec<PadicScalar>> = rows.to_vec();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..n {
        // pivot: minimal valuation in column c at or below row r
        let mut best: Option<(usize, i64)> = None;
        for i in r..m {
            if mat[i][c].is_zero() {
                continue;
            }
            let v = mat[i][c].valuation().bound();
            if best.map(|(_, bv)| v < bv).unwrap_or(true) {
                best = Some((i, v));
            }
        }
        let Some((pi, _)) = best else { continue };
        mat.swap(r, pi);
        let inv = mat[r][c].checked_invert()?;
        for j in 0..n {
            mat[r][j] = mat[r][j].checked_mul(&inv)?;
        }
        for i in 0..m {
            if i == r || mat[i][c].is_zero() {
                continue;
            }
            let factor = mat[i][c].clone();
            for j in 0..n {
                let delta = factor.checked_mul(&mat[r][j])?;
                mat[i][j] = mat[i][j].checked_sub(&delta)?;
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == m {
            break;
        }
    }
    let mut basis = Vec::new();
    for c in 0..n {
        if pivot_cols.contains(&c) {
            continue;
        }
        let mut v = vec![PadicScalar::zero(p, digits_default as i64); n];
        v[c] = PadicScalar::one(p, digits_default);
        for (ri, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = mat[ri][c].checked_neg();
        }
        basis.push(v);
    }
    Ok(basis)
}

/// Kernel with the unit-entry precision read off the nonzero row entries.
pub fn kernel_basis(
    p: u64,
    rows: &[Vec<PadicScalar>],
) -> Result<Vec<Vec<PadicScalar>>, NuclearError> {
    let digits_default = rows
        .iter()
        .flatten()
        .map(|e| e.digits())
        .filter(|&d| d > 0)
        .max()
        .unwrap_or(1);
    kernel_basis_with_digits(p, digits_default, rows)
}

/// Solve A x = b for each column b of `rhs`, where A is the n x k matrix
/// with the given columns (full column rank). Errors if inconsistent at
/// working precision.
pub fn solve_in_span(
    _p: u64,
    columns: &[Vec<PadicScalar>],
    rhs: &[Vec<PadicScalar>],
) -> Result<Vec<Vec<PadicScalar>>, NuclearError> {
    let k = columns.len();
    let n = if k == 0 { rhs.first().map(|v| v.len()).unwrap_or(0) } else { columns[0].len() };
    // augmented rows: [A | rhs...]
    let mut rows: Vec<Vec<PadicScalar>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(k + rhs.len());
        for col in columns {
            row.push(col[i].clone());
        }
        for b in rhs {
            row.push(b[i].clone());
        }
        rows.push(row);
    }
    let mut pivot_rows = Vec::new();
    let mut r = 0;
    for c in 0..k {
        let mut best: Option<(usize, i64)> = None;
        for i in r..n {
            if rows[i][c].is_zero() {
                continue;
            }
            let v = rows[i][c].valuation().bound();
            if best.map(|(_, bv)| v < bv).unwrap_or(true) {
                best = Some((i, v));
            }
        }
        let Some((pi, _)) = best else { return Err(NuclearError::Singular) };
        rows.swap(r, pi);
        let inv = rows[r][c].checked_invert()?;
        for j in 0..rows[r].len() {
            rows[r][j] = rows[r][j].checked_mul(&inv)?;
        }
        for i in 0..n {
            if i == r || rows[i][c].is_zero() {
                continue;
            }
            let factor = rows[i][c].clone();
            for j in 0..rows[i].len() {
                let delta = factor.checked_mul(&rows[r][j])?;
                rows[i][j] = rows[i][j].checked_sub(&delta)?;
            }
        }
        pivot_rows.push(r);
        r += 1;
    }
    // consistency below the pivot block
    for i in r..n {
        for j in k..rows[i].len() {
            if !rows[i][j].is_zero() {
                return Err(NuclearError::NotInvariant);
            }
        }
    }
    let mut out = Vec::with_capacity(rhs.len());
    for (bi, _) in rhs.iter().enumerate() {
        let mut x = Vec::with_capacity(k);
        for ri in 0..k {
            x.push(rows[ri][k + bi].clone());
        }
        out.push(x);
    }
    Ok(out)
}

/// Extend the given independent columns to a basis of the full space using
/// standard basis vectors; returns the indices chosen.
pub fn extend_to_basis(
    p: u64,
    digits: u32,
    columns: &[Vec<PadicScalar>],
    n: usize,
) -> Result<Vec<usize>, NuclearError> {
    let mut chosen = Vec::new();
    let mut current: Vec<Vec<PadicScalar>> = columns.to_vec();
    for e in 0..n {
        if current.len() == n {
            break;
        }
        let mut candidate = vec![PadicScalar::zero(p, digits as i64); n];
        candidate[e] = PadicScalar::one(p, digits);
        let mut trial = current.clone();
        trial.push(candidate.clone());
        // independent iff the trial system has full column rank: test by
        // solving trial * x = 0 having only the zero solution
        let rows: Vec<Vec<PadicScalar>> = (0..n)
            .map(|i| trial.iter().map(|c| c[i].clone()).collect())
            .collect();
        let ker = kernel_basis(p, &rows)?;
        if ker.is_empty() {
            chosen.push(e);
            current.push(candidate);
        }
    }
    if current.len() != n {
        return Err(NuclearError::Singular);
    }
    Ok(chosen)
}

/// Report for the kernel/cokernel trace identities of an intertwined pair.
pub struct ExactSequenceReport {
    pub kernel_op: LinearOperator,
    pub cokernel_op: LinearOperator,
    pub det_identity: bool,
    pub trace_identity: bool,
}

/// Given alpha L1 = L2 alpha, construct the induced operators on Ker(alpha)
/// and Coker(alpha) and verify
/// det(1-tL0) det(1-tL2) = det(1-tL1) det(1-tL3) and the alternating trace
/// sums, exactly at working precision.
pub fn exact_sequence_traces(
    l1: &LinearOperator,
    l2: &LinearOperator,
    alpha: &[Vec<PadicScalar>],
) -> Result<ExactSequenceReport, NuclearError> {
    let p = l1.p();
    let n1 = l1.dim();
    let n2 = l2.dim();
    assert_eq!(alpha.len(), n2, "alpha rows must match the target dimension");
    let digits = l1
        .entries()
        .iter()
        .flatten()
        .map(|e| e.digits())
        .max()
        .unwrap_or(8)
        .max(1);
    // intertwining check: alpha L1 = L2 alpha entrywise
    for i in 0..n2 {
        for j in 0..n1 {
            let mut lhs = PadicScalar::zero(p, i64::MAX / 2);
            let mut rhs = PadicScalar::zero(p, i64::MAX / 2);
            for k in 0..n1 {
                lhs = lhs.checked_add(&alpha[i][k].checked_mul(l1.entry(k, j))?)?;
            }
            for k in 0..n2 {
                rhs = rhs.checked_add(&l2.entry(i, k).checked_mul(&alpha[k][j])?)?;
            }
            if !lhs.eq_at_common_precision(&rhs) {
                return Err(NuclearError::NotIntertwining);
            }
        }
    }
    // kernel of alpha and the restriction of L1 to it
    let kernel = kernel_basis_with_digits(p, digits, alpha)?;
    let kernel_op = if kernel.is_empty() {
        LinearOperator::zero(p, 0, digits)
    } else {
        let images: Vec<Vec<PadicScalar>> = kernel
            .iter()
            .map(|v| l1.apply(v))
            .collect::<Result<_, _>>()?;
        let coords = solve_in_span(p, &kernel, &images)?;
        LinearOperator::new(p, transpose(&coords, kernel.len()))
    };
    // image of alpha: apply alpha to the standard basis and keep a maximal
    // independent subset
    let mut image_cols: Vec<Vec<PadicScalar>> = Vec::new();
    for j in 0..n1 {
        let col: Vec<PadicScalar> = (0..n2).map(|i| alpha[i][j].clone()).collect();
        let mut trial = image_cols.clone();
        trial.push(col.clone());
        let rows: Vec<Vec<PadicScalar>> = (0..n2)
            .map(|i| trial.iter().map(|c| c[i].clone()).collect())
            .collect();
        if kernel_basis(p, &rows)?.is_empty() {
            image_cols.push(col);
        }
    }
    // cokernel: complete the image by standard vectors; quotient operator
    // from the complement block of L2 in the combined basis
    let complement = extend_to_basis(p, digits, &image_cols, n2)?;
    let cokernel_op = if complement.is_empty() {
        LinearOperator::zero(p, 0, digits)
    } else {
        let mut full = image_cols.clone();
        for &e in &complement {
            let mut v = vec![PadicScalar::zero(p, digits as i64); n2];
            v[e] = PadicScalar::one(p, digits);
            full.push(v);
        }
        let images: Vec<Vec<PadicScalar>> = complement
            .iter()
            .map(|&e| {
                let mut v = vec![PadicScalar::zero(p, digits as i64); n2];
                v[e] = PadicScalar::one(p, digits);
                l2.apply(&v)
            })
            .collect::<Result<_, _>>()?;
        let coords = solve_in_span(p, &full, &images)?;
        // keep the complement block (rows after the image coordinates)
        let k = image_cols.len();
        let m = complement.len();
        let mut entries = vec![vec![PadicScalar::zero(p, digits as i64); m]; m];
        for (j, col) in coords.iter().enumerate() {
            for i in 0..m {
                entries[i][j] = col[k + i].clone();
            }
        }
        LinearOperator::new(p, entries)
    };
    // identities
    let d0 = char_det(&kernel_op)?;
    let d1 = char_det(l1)?;
    let d2 = char_det(l2)?;
    let d3 = char_det(&cokernel_op)?;
    let det_identity = d0.mul(&d2)?.eq_at_precision(&d1.mul(&d3)?);
    let mut trace_identity = true;
    for s in 1..=(n1.max(n2).max(1) as u32) {
        let t0 = opt_trace(&kernel_op, s)?;
        let t1 = trace_power(l1, s)?;
        let t2 = trace_power(l2, s)?;
        let t3 = opt_trace(&cokernel_op, s)?;
        let alt = t0
            .checked_sub(&t1)?
            .checked_add(&t2)?
            .checked_sub(&t3)?;
        if !alt.is_zero() {
            trace_identity = false;
        }
    }
    Ok(ExactSequenceReport { kernel_op, cokernel_op, det_identity, trace_identity })
}

fn opt_trace(op: &LinearOperator, s: u32) -> Result<PadicScalar, NuclearError> {
    if op.dim() == 0 {
        return Ok(PadicScalar::zero(op.p(), i64::MAX / 2));
    }
    trace_power(op, s)
}

fn transpose(coords: &[Vec<PadicScalar>], dim: usize) -> Vec<Vec<PadicScalar>> {
    let p = coords
        .first()
        .and_then(|c| c.first())
        .map(|s| s.p())
        .unwrap_or(2);
    let mut out = vec![vec![PadicScalar::zero(p, 1); coords.len()]; dim];
    for (j, col) in coords.iter().enumerate() {
        for i in 0..dim {
            out[i][j] = col[i].clone();
        }
    }
    out
}

/// Report for the invariant-subspace identities.
pub struct FiltrationReport {
    pub restriction: LinearOperator,
    pub quotient: LinearOperator,
    pub det_identity: bool,
    pub trace_identity: bool,
}

/// Restriction to an invariant subspace and the induced quotient operator,
/// with det(1-tL) = det(1-tL1) det(1-tL2) and tr(L^s) = tr(L1^s) + tr(L2^s).
pub fn filtration_traces(
    op: &LinearOperator,
    subspace: &[Vec<PadicScalar>],
) -> Result<FiltrationReport, NuclearError> {
    let p = op.p();
    let n = op.dim();
    let digits = op
        .entries()
        .iter()
        .flatten()
        .map(|e| e.digits())
        .max()
        .unwrap_or(8)
        .max(1);
    let images: Vec<Vec<PadicScalar>> = subspace
        .iter()
        .map(|v| op.apply(v))
        .collect::<Result<_, _>>()?;
    let restriction = if subspace.is_empty() {
        LinearOperator::zero(p, 0, digits)
    } else {
        let coords = solve_in_span(p, subspace, &images).map_err(|e| match e {
            NuclearError::NotInvariant => NuclearError::NotInvariant,
            other => other,
        })?;
        LinearOperator::new(p, transpose(&coords, subspace.len()))
    };
    let complement = extend_to_basis(p, digits, subspace, n)?;
    let quotient = if complement.is_empty() {
        LinearOperator::zero(p, 0, digits)
    } else {
        let mut full = subspace.to_vec();
        for &e in &complement {
            let mut v = vec![PadicScalar::zero(p, digits as i64); n];
            v[e] = PadicScalar::one(p, digits);
            full.push(v);
        }
        let images: Vec<Vec<PadicScalar>> = complement
            .iter()
            .map(|&e| {
                let mut v = vec![PadicScalar::zero(p, digits as i64); n];
                v[e] = PadicScalar::one(p, digits);
                op.apply(&v)
            })
            .collect::<Result<_, _>>()?;
        let coords = solve_in_span(p, &full, &images)?;
        let k = subspace.len();
        let m = complement.len();
        let mut entries = vec![vec![PadicScalar::zero(p, digits as i64); m]; m];
        for (j, col) in coords.iter().enumerate() {
            for i in 0..m {
                entries[i][j] = col[k + i].clone();
            }
        }
        LinearOperator::new(p, entries)
    };
    let full_det = char_det(op)?;
    let split = char_det(&restriction)?.mul(&char_det(&quotient)?)?;
    let det_identity = full_det.eq_at_precision(&split);
    let mut trace_identity = true;
    for s in 1..=(n.max(1) as u32) {
        let t = trace_power(op, s)?;
        let t1 = opt_trace(&restriction, s)?;
        let t2 = opt_trace(&quotient, s)?;
        if !t.eq_at_common_precision(&t1.checked_add(&t2)?) {
            trace_identity = false;
        }
    }
    Ok(FiltrationReport { restriction, quotient, det_identity, trace_identity })
}

/// Alternating sum of tr((psi_i)^s) over cohomology degrees.
pub fn lefschetz_count(
    graded: &[(usize, &LinearOperator)],
    s: u32,
) -> Result<PadicScalar, NuclearError> {
    let p = graded.first().map(|(_, op)| op.p()).unwrap_or(2);
    let mut acc = PadicScalar::zero(p, i64::MAX / 2);
    for (degree, op) in graded {
        if op.dim() == 0 {
            continue;
        }
        let t = trace_power(op, s)?;
        acc = if degree % 2 == 0 { acc.checked_add(&t)? } else { acc.checked_sub(&t)? };
    }
    Ok(acc)
}

/// The unique integer in [0, bound] congruent to x modulo p^k, where k is
/// the certified absolute precision of x. Requires p^k > bound.
pub fn round_count(x: &PadicScalar, bound: i64) -> Result<i64, NuclearError> {
    assert!(bound >= 0);
    let p = x.p();
    let k = effective_window(x, bound)?;
    let modulus = p_pow(p, k)?;
    let r = x.residue_mod(k)? as i64;
    if r <= bound {
        Ok(r)
    } else {
        Err(NuclearError::AmbiguousRounding { digits: modulus as i64, bound })
    }
}

/// The unique integer in [-bound, bound] congruent to x; needs p^k > 2*bound.
pub fn round_signed(x: &PadicScalar, bound: i64) -> Result<i64, NuclearError> {
    assert!(bound >= 0);
    let p = x.p();
    let mut k = effective_window(x, 2 * bound)?;
    // widen while the window is ambiguous and precision allows
    loop {
        let modulus = p_pow(p, k)? as i64;
        let r = x.residue_mod(k)? as i64;
        let candidate = if r <= bound { r } else { r - modulus };
        if candidate >= -bound && candidate <= bound {
            return Ok(candidate);
        }
        k += 1;
        if (x.abs_precision() as i64) < k as i64 {
            return Err(NuclearError::AmbiguousRounding { digits: x.abs_precision(), bound });
        }
    }
}

fn effective_window(x: &PadicScalar, bound: i64) -> Result<u32, NuclearError> {
    if let crate::padic::Valuation::Exact(v) = x.valuation() {
        if v < 0 {
            return Err(NuclearError::NotIntegral(v));
        }
    }
    let abs = x.abs_precision();
    let mut k: u32 = 1;
    let p = x.p();
    let mut m = p as i64;
    while m <= bound {
        k += 1;
        m = m.checked_mul(p as i64).ok_or(NuclearError::AmbiguousRounding {
            digits: abs,
            bound,
        })?;
    }
    if (abs as i64) < k as i64 {
        return Err(NuclearError::AmbiguousRounding { digits: abs, bound });
    }
    Ok(k)
}

/// A zeta function as a pair of coprime integer polynomials with constant
/// term one, plus the per-degree factors it was assembled from.
#[derive(Debug, Clone)]
pub struct ZetaFunction {
    pub numerator: Vec<BigInt>,
    pub denominator: Vec<BigInt>,
    /// (cohomology degree, integer-rounded det(1 - t psi)) per degree.
    pub factors: Vec<(usize, Vec<BigInt>)>,
}

impl ZetaFunction {
    pub fn expand_counts(&self, order: usize) -> Vec<Ratio<BigInt>> {
        let series = rational_series(&self.numerator, &self.denominator, order);
        let ld = series.log_derivative();
        (1..=order).map(|s| ld.coeff(s)).collect()
    }
}

/// Round det(1 - t psi) to integer coefficients using the eigenvalue bound:
/// |coefficient of t^j| <= binom(dim, j) * eigen_bound^j.
pub fn round_char_poly(
    poly: &ZpPoly,
    dim: usize,
    eigen_bound: i64,
) -> Result<Vec<BigInt>, NuclearError> {
    let mut out = Vec::new();
    for j in 0..=dim {
        let c = poly.coeff(j);
        let bound = binom_i64(dim, j)
            .checked_mul(eigen_bound.checked_pow(j as u32).ok_or(
                NuclearError::AmbiguousRounding { digits: 0, bound: eigen_bound },
            )?)
            .ok_or(NuclearError::AmbiguousRounding { digits: 0, bound: eigen_bound })?;
        out.push(BigInt::from(round_signed(&c, bound)?));
    }
    while matches!(out.last(), Some(z) if z.is_zero()) {
        out.pop();
    }
    Ok(out)
}

fn binom_i64(n: usize, k: usize) -> i64 {
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

/// Assemble Z(t) = prod_i det(1 - t psi_i)^((-1)^(i+1)) from graded psi
/// matrices: odd degrees to the numerator, even to the denominator. The
/// result is reduced to coprime integer polynomials, and its logarithmic
/// derivative is checked against the alternating trace counts up to
/// `check_order` (LogDerivativeMismatch on failure).
pub fn zeta_assemble(
    graded: &[(usize, &LinearOperator)],
    eigen_bound: i64,
    check_order: usize,
) -> Result<ZetaFunction, NuclearError> {
    let mut factors = Vec::new();
    let mut num = vec![BigInt::one()];
    let mut den = vec![BigInt::one()];
    for (degree, op) in graded {
        let poly = char_det(op)?;
        let rounded = round_char_poly(&poly, op.dim(), eigen_bound)?;
        if degree % 2 == 1 {
            num = zpoly_mul(&num, &rounded);
        } else {
            den = zpoly_mul(&den, &rounded);
        }
        factors.push((*degree, rounded));
    }
    let (num, den) = cancel_common_factor(&num, &den);
    let zeta = ZetaFunction { numerator: num, denominator: den, factors };
    // self-check: t d/dt log Z must reproduce the Lefschetz counts
    let expanded = zeta.expand_counts(check_order);
    for (s, val) in expanded.iter().enumerate() {
        let s = s + 1;
        if !val.denom().is_one() {
            return Err(NuclearError::LogDerivativeMismatch { order: s });
        }
        let padic = lefschetz_count(graded, s as u32)?;
        // compare modulo the count's certified precision
        let total_dim: usize = graded.iter().map(|(_, op)| op.dim()).sum();
        let bound = (total_dim as i64 + 1)
            * eigen_bound.saturating_pow(s as u32);
        let n_zeta: i64 = match i64::try_from(val.numer().clone()) {
            Ok(v) => v,
            Err(_) => return Err(NuclearError::LogDerivativeMismatch { order: s }),
        };
        let n_trace = round_signed(&padic, bound.max(n_zeta.abs()))?;
        if n_trace != n_zeta {
            return Err(NuclearError::LogDerivativeMismatch { order: s });
        }
    }
    Ok(zeta)
}

pub fn zpoly_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Cancel the rational-polynomial gcd of two integer polynomials with
/// constant term 1, renormalizing so both keep constant term 1.
fn cancel_common_factor(num: &[BigInt], den: &[BigInt]) -> (Vec<BigInt>, Vec<BigInt>) {
    let g = qpoly_gcd(num, den);
    if g.len() <= 1 {
        return (num.to_vec(), den.to_vec());
    }
    let num_q = qpoly_div_exact(num, &g);
    let den_q = qpoly_div_exact(den, &g);
    // rescale to constant term 1 and clear denominators (the scale is the
    // gcd's constant term, a unit over Q)
    (normalize_const_one(&num_q), normalize_const_one(&den_q))
}

fn to_q(a: &[BigInt]) -> Vec<Ratio<BigInt>> {
    a.iter().map(|c| Ratio::from_integer(c.clone())).collect()
}

fn qpoly_rem(a: &[Ratio<BigInt>], b: &[Ratio<BigInt>]) -> Vec<Ratio<BigInt>> {
    let mut r = a.to_vec();
    let db = b.len() - 1;
    let lead = b.last().unwrap().clone();
    while r.len() > db && !r.is_empty() {
        let n = r.len() - 1;
        let factor = r[n].clone() / lead.clone();
        for (i, c) in b.iter().enumerate() {
            let idx = n - db + i;
            let delta = factor.clone() * c.clone();
            r[idx] -= delta;
        }
        while matches!(r.last(), Some(c) if c.is_zero()) {
            r.pop();
        }
        if r.len() <= db {
            break;
        }
    }
    r
}

fn qpoly_gcd(a: &[BigInt], b: &[BigInt]) -> Vec<Ratio<BigInt>> {
    let mut r0 = to_q(a);
    let mut r1 = to_q(b);
    while !r1.is_empty() {
        let r = qpoly_rem(&r0, &r1);
        r0 = r1;
        r1 = r;
    }
    // monic normalization
    if let Some(lead) = r0.last().cloned() {
        for c in &mut r0 {
            *c /= lead.clone();
        }
    }
    r0
}

fn qpoly_div_exact(a: &[BigInt], g: &[Ratio<BigInt>]) -> Vec<Ratio<BigInt>> {
    let mut r = to_q(a);
    let dg = g.len() - 1;
    let lead = g.last().unwrap().clone();
    let mut q = vec![Ratio::<BigInt>::zero(); r.len()];
    while r.len() > dg {
        let n = r.len() - 1;
        let factor = r[n].clone() / lead.clone();
        q[n - dg] = factor.clone();
        for (i, c) in g.iter().enumerate() {
            let delta = factor.clone() * c.clone();
            r[n - dg + i] -= delta;
        }
        while matches!(r.last(), Some(c) if c.is_zero()) {
            r.pop();
        }
    }
    debug_assert!(r.is_empty(), "division was not exact");
    while matches!(q.last(), Some(c) if c.is_zero()) {
        q.pop();
    }
    q
}

fn normalize_const_one(a: &[Ratio<BigInt>]) -> Vec<BigInt> {
    if a.is_empty() {
        return vec![BigInt::one()];
    }
    let c0 = a[0].clone();
    assert!(!c0.is_zero(), "zeta factors have nonzero constant term");
    a.iter()
        .map(|c| {
            let v = c.clone() / c0.clone();
            assert!(v.denom().is_one(), "normalized coefficient must be integral");
            v.numer().clone()
        })
        .collect()
}
