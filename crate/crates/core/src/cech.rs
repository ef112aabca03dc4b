//! Čech–de Rham machinery for glued spaces: covers with restriction maps,
//! the double complex, the spectral sequence from the per-patch cohomology,
//! and the sheaf-sequence exactness check for localization covers.
//!
//! Cochains use strictly increasing index tuples. The double complex takes
//! the Čech differential horizontally and the de Rham differential with
//! sign (-1)^p vertically, so the total differential squares to zero. The
//! first page is assembled from the patch and overlap cohomology spaces
//! computed by the engine, with psi acting blockwise; reductions return
//! exact-part certificates, which is exactly the zig-zag data needed for
//! the page-two differential. Supported patches are curves, so every
//! differential from page three on leaves the first-quadrant window and
//! convergence is forced.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::algebra::{d, AlgebraError, AlgebraPresentation, DifferentialForm};
use crate::cohomology::{
    cohomology_basis, constant_coordinate, psi_matrix, reduce_form, BasisSpace, CohomologySpace,
    MwError,
};
use crate::frobenius::{default_lift, AlgebraHom, FrobeniusError, FrobeniusLift};
use crate::nuclear::{extend_to_basis, kernel_basis_with_digits, solve_in_span, LinearOperator, NuclearError};
use crate::padic::{PadicError, PadicScalar};
use crate::series::{DaggerSeries, SeriesError};

pub mod localfrac;

#[derive(Debug, Error)]
pub enum CechError {
    #[error("no restriction map from {0:?} into {1:?}")]
    MissingRestriction(Vec<usize>, Vec<usize>),
    #[error("restriction maps fail to commute on {0:?}")]
    IncompatibleRestrictions(Vec<usize>),
    #[error("page differential survives at the window boundary (page {0})")]
    NonConvergent(u32),
    #[error("psi does not commute with a restriction into {0:?}")]
    PsiRestriction(Vec<usize>),
    #[error(transparent)]
    Mw(#[from] MwError),
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

/// One cell of a cover: the (intersection) algebra for an index tuple, with
/// restriction maps from the facets one index smaller.
pub struct CoverCell {
    pub algebra: AlgebraPresentation,
    pub res_from: BTreeMap<Vec<usize>, AlgebraHom>,
}

/// An affine cover of a glued space. Singleton tuples are the patches;
/// missing tuples are empty intersections.
pub struct Cover {
    cells: BTreeMap<Vec<usize>, CoverCell>,
    npatches: usize,
}

impl Cover {
    pub fn new(patches: Vec<AlgebraPresentation>) -> Self {
        let npatches = patches.len();
        let mut cells = BTreeMap::new();
        for (i, algebra) in patches.into_iter().enumerate() {
            cells.insert(vec![i], CoverCell { algebra, res_from: BTreeMap::new() });
        }
        Cover { cells, npatches }
    }

    pub fn npatches(&self) -> usize {
        self.npatches
    }

    pub fn add_overlap(
        &mut self,
        tuple: Vec<usize>,
        algebra: AlgebraPresentation,
        res_from: BTreeMap<Vec<usize>, AlgebraHom>,
    ) {
        debug_assert!(tuple.windows(2).all(|w| w[0] < w[1]));
        self.cells.insert(tuple, CoverCell { algebra, res_from });
    }

    pub fn cell(&self, tuple: &[usize]) -> Option<&CoverCell> {
        self.cells.get(tuple)
    }

    pub fn tuples_of_len(&self, len: usize) -> impl Iterator<Item = &Vec<usize>> {
        self.cells.keys().filter(move |t| t.len() == len)
    }

    fn restriction(&self, from: &[usize], to: &[usize]) -> Result<&AlgebraHom, CechError> {
        let cell = self
            .cells
            .get(to)
            .ok_or_else(|| CechError::MissingRestriction(from.to_vec(), to.to_vec()))?;
        cell.res_from
            .get(from)
            .ok_or_else(|| CechError::MissingRestriction(from.to_vec(), to.to_vec()))
    }

    /// Restriction maps must send relations into the ideal, and compose
    /// consistently on triple overlaps (checked on the variable images).
    pub fn validate(&self) -> Result<(), CechError> {
        for (tuple, cell) in &self.cells {
            for hom in cell.res_from.values() {
                hom.verify_homomorphism()
                    .map_err(|_| CechError::IncompatibleRestrictions(tuple.clone()))?;
            }
        }
        // res compatibility: facet-of-facet routes agree on variable images
        for (tuple, cell) in &self.cells {
            if tuple.len() < 3 {
                continue;
            }
            for (facet, hom_direct) in &cell.res_from {
                let _ = hom_direct;
                let facet_cell = &self.cells[facet];
                for (subfacet, _) in &facet_cell.res_from {
                    // route A: subfacet -> facet -> tuple; route B: direct
                    let to_facet = &facet_cell.res_from[subfacet];
                    let facet_to_tuple = &cell.res_from[facet];
                    let direct = match cell.res_from.get(subfacet) {
                        Some(h) => h,
                        None => continue,
                    };
                    for v in 0..to_facet.source().nvars() {
                        let via = facet_to_tuple.apply(to_facet.image(v))?;
                        let straight = direct.image(v).clone();
                        let diff = via.checked_sub(&straight)?;
                        if !diff.is_zero_mod(direct.target().digits() as i64) {
                            return Err(CechError::IncompatibleRestrictions(tuple.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A Čech cochain of fixed Čech degree and form degree.
#[derive(Debug, Clone)]
pub struct CechCochain {
    pub cech_degree: usize,
    pub form_degree: usize,
    pub components: BTreeMap<Vec<usize>, DifferentialForm>,
}

impl CechCochain {
    pub fn zero(cech_degree: usize, form_degree: usize) -> Self {
        CechCochain { cech_degree, form_degree, components: BTreeMap::new() }
    }

    pub fn component(&self, tuple: &[usize]) -> Option<&DifferentialForm> {
        self.components.get(tuple)
    }

    pub fn set(&mut self, tuple: Vec<usize>, form: DifferentialForm) {
        assert_eq!(tuple.len(), self.cech_degree + 1);
        assert_eq!(form.degree(), self.form_degree);
        self.components.insert(tuple, form);
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, CechError> {
        assert_eq!(self.cech_degree, other.cech_degree);
        let mut out = self.clone();
        for (t, f) in &other.components {
            match out.components.remove(t) {
                None => {
                    out.components.insert(t.clone(), f.clone());
                }
                Some(existing) => {
                    out.components.insert(t.clone(), existing.checked_add(f)?);
                }
            }
        }
        Ok(out)
    }

    pub fn scalar_mul(&self, c: &PadicScalar) -> Result<Self, CechError> {
        let mut out = Self::zero(self.cech_degree, self.form_degree);
        for (t, f) in &self.components {
            out.components.insert(t.clone(), f.scalar_mul(c)?);
        }
        Ok(out)
    }

    pub fn is_zero_mod(&self, n: i64) -> bool {
        self.components.values().all(|f| f.is_zero_mod(n))
    }
}

/// The alternating-sum Čech differential: raises the Čech degree by one.
pub fn cech_differential(cover: &Cover, cochain: &CechCochain) -> Result<CechCochain, CechError> {
    let q = cochain.cech_degree;
    let mut out = CechCochain::zero(q + 1, cochain.form_degree);
    let tuples: Vec<Vec<usize>> = cover.tuples_of_len(q + 2).cloned().collect();
    for tuple in tuples {
        let mut acc: Option<DifferentialForm> = None;
        for v in 0..tuple.len() {
            let mut facet = tuple.clone();
            facet.remove(v);
            let Some(source_form) = cochain.component(&facet) else { continue };
            let hom = cover.restriction(&facet, &tuple)?;
            let mut restricted = hom.pull_back(source_form)?;
            if v % 2 == 1 {
                restricted = restricted.checked_neg();
            }
            acc = Some(match acc {
                None => restricted,
                Some(a) => a.checked_add(&restricted)?,
            });
        }
        if let Some(a) = acc {
            if !a.is_zero() {
                out.components.insert(tuple, a);
            }
        }
    }
    Ok(out)
}

/// The Čech–de Rham double complex of a cover, exposing both differentials
/// with the (-1)^p vertical sign convention.
pub struct DoubleComplex<'a> {
    pub cover: &'a Cover,
}

impl<'a> DoubleComplex<'a> {
    pub fn new(cover: &'a Cover) -> Self {
        DoubleComplex { cover }
    }

    pub fn horizontal(&self, cochain: &CechCochain) -> Result<CechCochain, CechError> {
        cech_differential(self.cover, cochain)
    }

    pub fn vertical(&self, cochain: &CechCochain) -> Result<CechCochain, CechError> {
        let p = cochain.cech_degree;
        let mut out = CechCochain::zero(p, cochain.form_degree + 1);
        for (t, f) in &cochain.components {
            let cell = self.cover.cell(t).expect("component on a cover cell");
            let mut df = d(&cell.algebra, f)?;
            if p % 2 == 1 {
                df = df.checked_neg();
            }
            if !df.is_zero() {
                out.components.insert(t.clone(), df);
            }
        }
        Ok(out)
    }

    /// d_total = d_cech + (-1)^p d_deRham on a (p, q) cochain, returned as
    /// the pair of components in (p+1, q) and (p, q+1).
    pub fn total(&self, cochain: &CechCochain) -> Result<(CechCochain, CechCochain), CechError> {
        Ok((self.horizontal(cochain)?, self.vertical(cochain)?))
    }
}

/// One cell of a spectral page: an abstract space with the psi matrix and,
/// for page one, the labeled chain-level representatives.
pub struct PageCell {
    pub dim: usize,
    pub psi: LinearOperator,
    /// page-one labels: (tuple, index into that cell's basis)
    pub labels: Vec<(Vec<usize>, usize)>,
}

/// A page of the spectral sequence with its differentials as matrices
/// (rows indexed by the target cell's basis).
pub struct SpectralPage {
    pub page: u32,
    pub cells: BTreeMap<(usize, usize), PageCell>,
    pub differentials: BTreeMap<(usize, usize), Vec<Vec<PadicScalar>>>,
}

impl SpectralPage {
    pub fn dim(&self, p: usize, q: usize) -> usize {
        self.cells.get(&(p, q)).map(|c| c.dim).unwrap_or(0)
    }

    /// Alternating sum of dimensions over the window.
    pub fn euler_characteristic(&self) -> i64 {
        self.cells
            .iter()
            .map(|(&(p, q), c)| if (p + q) % 2 == 0 { c.dim as i64 } else { -(c.dim as i64) })
            .sum()
    }
}

struct E1Data {
    page: SpectralPage,
    /// reduction certificates: (source p, q, source index) -> cochain of
    /// degree-(q-1) forms per target tuple
    certificates: BTreeMap<(usize, usize, usize), BTreeMap<Vec<usize>, DaggerSeries>>,
    /// chain-level representatives of the page-one basis
    reps: BTreeMap<(usize, usize, usize), (Vec<usize>, DifferentialForm)>,
    p_prime: u64,
    digits: u32,
}

/// First page: E_1^(p,q) = Čech cochains with coefficients in H^q of the
/// cells; d_1 is the Čech differential on cohomology classes.
pub fn e1_page(cover: &Cover) -> Result<SpectralPage, CechError> {
    Ok(build_e1(cover)?.page)
}

fn build_e1(cover: &Cover) -> Result<E1Data, CechError> {
    let mut cells: BTreeMap<(usize, usize), PageCell> = BTreeMap::new();
    let mut bases: BTreeMap<Vec<usize>, Vec<BasisSpace>> = BTreeMap::new();
    let mut lifts: BTreeMap<Vec<usize>, FrobeniusLift> = BTreeMap::new();
    let mut p_prime = 2u64;
    let mut digits = 1u32;
    for (tuple, cell) in &cover.cells {
        let spaces = cohomology_basis(&cell.algebra)?;
        let lift = default_lift(&cell.algebra)?;
        p_prime = cell.algebra.p();
        digits = cell.algebra.digits();
        bases.insert(tuple.clone(), spaces);
        lifts.insert(tuple.clone(), lift);
    }
    let max_len = cover.cells.keys().map(|t| t.len()).max().unwrap_or(0);
    for p in 0..max_len {
        for q in 0..=1usize {
            let mut labels = Vec::new();
            let mut blocks: Vec<LinearOperator> = Vec::new();
            for tuple in cover.tuples_of_len(p + 1) {
                let spaces = &bases[tuple];
                let space = &spaces[q];
                for j in 0..space.labels.len() {
                    labels.push((tuple.clone(), j));
                }
                if !space.labels.is_empty() {
                    let cell = &cover.cells[tuple];
                    blocks.push(psi_matrix(&cell.algebra, &lifts[tuple], space)?);
                }
            }
            let dim = labels.len();
            if dim == 0 {
                continue;
            }
            let block_refs: Vec<&LinearOperator> = blocks.iter().collect();
            let psi = LinearOperator::block_diagonal(p_prime, digits, &block_refs);
            cells.insert((p, q), PageCell { dim, psi, labels });
        }
    }
    // differentials and certificates
    let mut differentials = BTreeMap::new();
    let mut certificates = BTreeMap::new();
    let mut reps = BTreeMap::new();
    let keys: Vec<(usize, usize)> = cells.keys().cloned().collect();
    for &(p, q) in &keys {
        let source_labels = cells[&(p, q)].labels.clone();
        let target_dim = cells.get(&(p + 1, q)).map(|c| c.dim).unwrap_or(0);
        let mut matrix = vec![
            vec![PadicScalar::zero(p_prime, digits as i64); source_labels.len()];
            target_dim
        ];
        for (col, (tuple, j)) in source_labels.iter().enumerate() {
            let form = bases[tuple][q].basis[j.to_owned()].clone();
            reps.insert((p, q, col), (tuple.clone(), form.clone()));
            let mut cochain = CechCochain::zero(p, q);
            cochain.set(tuple.clone(), form);
            let image = cech_differential(cover, &cochain)?;
            let mut certs: BTreeMap<Vec<usize>, DaggerSeries> = BTreeMap::new();
            if target_dim > 0 {
                let target_labels = &cells[&(p + 1, q)].labels;
                for (t_tuple, t_form) in &image.components {
                    let cell = &cover.cells[t_tuple];
                    if q == 0 {
                        // classes of closed functions are their constants
                        let series = t_form
                            .coefficient(&[])
                            .cloned()
                            .unwrap_or_else(|| cell.algebra.zero_element());
                        let coord = constant_coordinate(&cell.algebra, &series)?;
                        let row = target_labels
                            .iter()
                            .position(|(tt, _)| tt == t_tuple)
                            .expect("target tuple in page labels");
                        matrix[row][col] = matrix[row][col].checked_add(&coord)?;
                    } else {
                        let red = reduce_form(&cell.algebra, t_form)?;
                        for (k, c) in red.coords.iter().enumerate() {
                            let row = target_labels
                                .iter()
                                .position(|(tt, jj)| tt == t_tuple && *jj == k)
                                .expect("target label present");
                            matrix[row][col] = matrix[row][col].checked_add(c)?;
                        }
                        certs.insert(t_tuple.clone(), red.exact_part);
                    }
                }
            } else if q >= 1 {
                // no cohomology target: the image is exact on each tuple
                for (t_tuple, t_form) in &image.components {
                    let cell = &cover.cells[t_tuple];
                    let red = reduce_form(&cell.algebra, t_form)?;
                    certs.insert(t_tuple.clone(), red.exact_part);
                }
            }
            certificates.insert((p, q, col), certs);
        }
        differentials.insert((p, q), matrix);
    }
    let page = SpectralPage { page: 1, cells, differentials };
    Ok(E1Data { page, certificates, reps, p_prime, digits })
}

/// psi commutes with every restriction map on the supported families; the
/// engine verifies it on the cohomology bases.
pub fn verify_psi_restriction(cover: &Cover) -> Result<(), CechError> {
    for (tuple, cell) in &cover.cells {
        for (facet, hom) in &cell.res_from {
            let facet_cell = &cover.cells[facet];
            let source_lift = default_lift(&facet_cell.algebra)?;
            let target_lift = default_lift(&cell.algebra)?;
            let source_spaces = cohomology_basis(&facet_cell.algebra)?;
            for space in &source_spaces {
                if space.degree != 1 {
                    continue;
                }
                for form in &space.basis {
                    let route_a = {
                        let psi_form = crate::frobenius::psi_form(&source_lift, form)?;
                        hom.pull_back(&psi_form)?
                    };
                    let route_b = {
                        let restricted = hom.pull_back(form)?;
                        crate::frobenius::psi_form(&target_lift, &restricted)?
                    };
                    let ra = reduce_form(&cell.algebra, &route_a)?;
                    let rb = reduce_form(&cell.algebra, &route_b)?;
                    let window = ra.floor.min(rb.floor);
                    for (a, b) in ra.coords.iter().zip(&rb.coords) {
                        let da = a.truncate_abs(window);
                        let db = b.truncate_abs(window);
                        if !da.eq_at_common_precision(&db) {
                            return Err(CechError::PsiRestriction(tuple.clone()));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

struct Subquotient {
    /// embedding of the new basis into the previous page's coordinates
    embedding: Vec<Vec<PadicScalar>>,
    psi: LinearOperator,
}

/// kernel of `out` modulo image of `into`, with the induced operator.
fn subquotient(
    p: u64,
    digits: u32,
    dim: usize,
    psi: &LinearOperator,
    out_matrix: Option<&Vec<Vec<PadicScalar>>>,
    into_matrix: Option<(&Vec<Vec<PadicScalar>>, usize)>,
) -> Result<Subquotient, CechError> {
    let zero_rowed = vec![vec![PadicScalar::zero(p, digits as i64); dim]];
    let rows = match out_matrix {
        Some(m) if !m.is_empty() => m.clone(),
        _ => zero_rowed,
    };
    let kernel = kernel_basis_with_digits(p, digits, &rows)?;
    // image vectors inside the kernel
    let mut image_in_kernel: Vec<Vec<PadicScalar>> = Vec::new();
    if let Some((m, source_dim)) = into_matrix {
        if !m.is_empty() {
            for j in 0..source_dim {
                let col: Vec<PadicScalar> = m.iter().map(|row| row[j].clone()).collect();
                if col.iter().all(|c| c.is_zero()) {
                    continue;
                }
                // express in kernel coordinates (the image lies in the kernel)
                let coords = solve_in_span(p, &kernel, &[col])?;
                let mut trial = image_in_kernel.clone();
                trial.push(coords[0].clone());
                let trial_rows: Vec<Vec<PadicScalar>> = (0..kernel.len())
                    .map(|i| trial.iter().map(|v| v[i].clone()).collect())
                    .collect();
                if kernel_basis_with_digits(p, digits, &trial_rows)?.is_empty() {
                    image_in_kernel.push(coords[0].clone());
                }
            }
        }
    }
    let complement = extend_to_basis(p, digits, &image_in_kernel, kernel.len())?;
    // new basis vectors in old coordinates
    let embedding: Vec<Vec<PadicScalar>> = complement
        .iter()
        .map(|&e| kernel[e].clone())
        .collect();
    // induced psi: solve [embedding | image] x = psi * embedding
    let psi_new = if embedding.is_empty() {
        LinearOperator::zero(p, 0, digits)
    } else {
        let mut span = embedding.clone();
        for v in &image_in_kernel {
            // image vectors back in old coordinates
            let mut old = vec![PadicScalar::zero(p, digits as i64); dim];
            for (i, k) in kernel.iter().enumerate() {
                for (bit, val) in old.iter_mut().zip(k) {
                    *bit = bit.checked_add(&v[i].checked_mul(val)?)?;
                }
            }
            span.push(old);
        }
        let rhs: Vec<Vec<PadicScalar>> = embedding
            .iter()
            .map(|v| psi.apply(v))
            .collect::<Result<_, _>>()?;
        let coords = solve_in_span(p, &span, &rhs)?;
        let k = embedding.len();
        let mut entries = vec![vec![PadicScalar::zero(p, digits as i64); k]; k];
        for (j, col) in coords.iter().enumerate() {
            for i in 0..k {
                entries[i][j] = col[i].clone();
            }
        }
        LinearOperator::new(p, entries)
    };
    Ok(Subquotient { embedding, psi: psi_new })
}

/// Result of running the spectral sequence: the limit spaces per total
/// degree plus the degeneration page and per-page Euler characteristics.
pub struct Convergence {
    pub spaces: Vec<CohomologySpace>,
    pub degenerates_at: u32,
    pub e1_dims: BTreeMap<(usize, usize), usize>,
    pub e2_dims: BTreeMap<(usize, usize), usize>,
    pub d1_ranks: BTreeMap<(usize, usize), usize>,
    pub euler: i64,
}

/// Run the sequence to its limit and assemble H^i with the block psi from
/// the graded pieces (traces and determinants only use the diagonal blocks,
/// which is what the counting formula consumes).
pub fn converge(cover: &Cover) -> Result<Convergence, CechError> {
    let e1 = build_e1(cover)?;
    let p = e1.p_prime;
    let digits = e1.digits;
    let e1_dims: BTreeMap<(usize, usize), usize> =
        e1.page.cells.iter().map(|(&k, c)| (k, c.dim)).collect();
    let euler1 = e1.page.euler_characteristic();
    let mut d1_ranks = BTreeMap::new();
    for (&key, m) in &e1.page.differentials {
        if m.is_empty() {
            d1_ranks.insert(key, 0);
            continue;
        }
        let ncols = m[0].len();
        let ker = kernel_basis_with_digits(p, digits, m)?;
        d1_ranks.insert(key, ncols - ker.len());
    }

    // page 2 cells as subquotients of page 1
    let mut e2: BTreeMap<(usize, usize), Subquotient> = BTreeMap::new();
    for (&(pp, q), cell) in &e1.page.cells {
        let out = e1.page.differentials.get(&(pp, q));
        let into = if pp >= 1 {
            e1.page
                .differentials
                .get(&(pp - 1, q))
                .map(|m| (m, e1.page.cells[&(pp - 1, q)].dim))
        } else {
            None
        };
        let sq = subquotient(p, digits, cell.dim, &cell.psi, out, into)?;
        e2.insert((pp, q), sq);
    }
    let e2_dims: BTreeMap<(usize, usize), usize> =
        e2.iter().map(|(&k, s)| (k, s.embedding.len())).collect();
    let euler2: i64 = e2_dims
        .iter()
        .map(|(&(pp, q), &dim)| if (pp + q) % 2 == 0 { dim as i64 } else { -(dim as i64) })
        .sum();
    if euler1 != euler2 {
        return Err(CechError::NonConvergent(2));
    }

    // d2 through the zig-zag certificates: on a class [x] with d1 x = 0,
    // d2 [x] = (-1)^p [cech(u)] where the certificate u satisfies
    // d_h x = (reduced part) + d_v u on each target tuple
    let mut d2: BTreeMap<(usize, usize), Vec<Vec<PadicScalar>>> = BTreeMap::new();
    for (&(pp, q), sq) in &e2 {
        if q == 0 || sq.embedding.is_empty() {
            continue;
        }
        let target = match e2.get(&(pp + 2, q - 1)) {
            Some(t) if !t.embedding.is_empty() => t,
            _ => continue,
        };
        let mut matrix =
            vec![vec![PadicScalar::zero(p, digits as i64); sq.embedding.len()]; target.embedding.len()];
        for (col, combo) in sq.embedding.iter().enumerate() {
            // certificate cochain of the combination
            let mut cert = CechCochain::zero(pp + 1, q - 1);
            for (i, c) in combo.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                if let Some(certs) = e1.certificates.get(&(pp, q, i)) {
                    for (tuple, series) in certs {
                        let form = DifferentialForm::function(series.scalar_mul(c)?);
                        let mut single = CechCochain::zero(pp + 1, q - 1);
                        single.set(tuple.clone(), form);
                        cert = cert.checked_add(&single)?;
                    }
                }
            }
            let mut image = cech_differential(cover, &cert)?;
            if pp % 2 == 1 {
                // the (-1)^p zig-zag sign
                image = image.scalar_mul(&PadicScalar::from_integer(p, digits, -1)?)?;
            }
            // reduce components into E1^(p+2, q-1) coordinates
            let target_labels = &e1.page.cells[&(pp + 2, q - 1)].labels;
            let mut e1_coords = vec![PadicScalar::zero(p, digits as i64); target_labels.len()];
            for (t_tuple, t_form) in &image.components {
                let cell = &cover.cells[t_tuple];
                if q - 1 == 0 {
                    let series = t_form
                        .coefficient(&[])
                        .cloned()
                        .unwrap_or_else(|| cell.algebra.zero_element());
                    let coord = constant_coordinate(&cell.algebra, &series)?;
                    let row = target_labels.iter().position(|(tt, _)| tt == t_tuple).unwrap();
                    e1_coords[row] = e1_coords[row].checked_add(&coord)?;
                } else {
                    let red = reduce_form(&cell.algebra, t_form)?;
                    for (k, c) in red.coords.iter().enumerate() {
                        let row = target_labels
                            .iter()
                            .position(|(tt, jj)| tt == t_tuple && *jj == k)
                            .unwrap();
                        e1_coords[row] = e1_coords[row].checked_add(c)?;
                    }
                }
            }
            // express in the target subquotient basis
            let coords = solve_in_span(p, &target.embedding, &[e1_coords])?;
            for (rowi, v) in coords[0].iter().enumerate() {
                matrix[rowi][col] = v.clone();
            }
        }
        d2.insert((pp, q), matrix);
    }

    // page 3 = homology of d2; beyond that, every in-window differential
    // with q <= 1 drops q by at least two, so the sequence is stable
    let mut e3: BTreeMap<(usize, usize), Subquotient> = BTreeMap::new();
    let mut degenerates_at = 2;
    for (&(pp, q), sq) in &e2 {
        let out = d2.get(&(pp, q));
        let into = if pp >= 2 && q + 1 <= 1 {
            d2.get(&(pp - 2, q + 1)).map(|m| (m, e2[&(pp - 2, q + 1)].embedding.len()))
        } else {
            None
        };
        if out.map(|m| matrix_nonzero(m)).unwrap_or(false)
            || into.map(|(m, _)| matrix_nonzero(m)).unwrap_or(false)
        {
            degenerates_at = 3;
        }
        let dim2 = sq.embedding.len();
        let inner = subquotient(p, digits, dim2, &sq.psi, out, into)?;
        // compose embeddings back to E1 coordinates
        let embedding = inner
            .embedding
            .iter()
            .map(|v| {
                let mut out_vec =
                    vec![PadicScalar::zero(p, digits as i64); sq.embedding.first().map(|e| e.len()).unwrap_or(0)];
                for (i, c) in v.iter().enumerate() {
                    for (slot, base) in out_vec.iter_mut().zip(&sq.embedding[i]) {
                        *slot = slot.checked_add(&c.checked_mul(base)?)?;
                    }
                }
                Ok::<_, CechError>(out_vec)
            })
            .collect::<Result<Vec<_>, _>>()?;
        e3.insert((pp, q), Subquotient { embedding, psi: inner.psi });
    }
    let euler3: i64 = e3
        .iter()
        .map(|(&(pp, q), s)| {
            let dim = s.embedding.len() as i64;
            if (pp + q) % 2 == 0 {
                dim
            } else {
                -dim
            }
        })
        .sum();
    if euler1 != euler3 {
        return Err(CechError::NonConvergent(3));
    }

    // assemble H^i from the stable graded pieces
    let max_total = e3.keys().map(|&(pp, q)| pp + q).max().unwrap_or(0);
    let mut spaces = Vec::new();
    for degree in 0..=max_total {
        let mut blocks: Vec<&LinearOperator> = Vec::new();
        let mut labels = Vec::new();
        for (&(pp, q), sq) in &e3 {
            if pp + q != degree || sq.embedding.is_empty() {
                continue;
            }
            blocks.push(&sq.psi);
            for k in 0..sq.embedding.len() {
                labels.push(format!("E({pp},{q})[{k}]"));
            }
        }
        let psi = LinearOperator::block_diagonal(p, digits, &blocks);
        spaces.push(CohomologySpace {
            degree,
            labels,
            basis: Vec::new(),
            psi,
            digits_used: digits,
            cap_used: 0,
        });
    }
    Ok(Convergence {
        spaces,
        degenerates_at,
        e1_dims,
        e2_dims,
        d1_ranks,
        euler: euler1,
    })
}


/// Outcome of the localization-sequence exactness check.
pub struct ExactnessReport {
    pub holds: bool,
    pub samples: usize,
    pub witness: Option<String>,
}

/// Check, on randomized samples at truncation, that the kernel of the
/// difference map prod A<1/f_i> into prod A<1/(f_i f_j)> equals the image
/// of A<1/f>, for the one-variable ring with monic linear cover elements.
/// The radical condition on the cover is the caller's assumption; covers
/// violating it (or with f not dividing some f_i) are reported false with
/// a witness element.
pub fn sheaf_exactness_check(
    algebra: &AlgebraPresentation,
    f: &DaggerSeries,
    cover_elements: &[DaggerSeries],
    samples: usize,
    seed: u64,
) -> Result<ExactnessReport, CechError> {
    use rand::SeedableRng;
    let p = algebra.p();
    let digits = algebra.digits();
    let f_centers: Vec<i64> = match localfrac::parse_linear(f) {
        Some(None) => Vec::new(),
        Some(Some(c)) => vec![c],
        None => {
            return Ok(ExactnessReport {
                holds: false,
                samples: 0,
                witness: Some("unsupported localization shape".into()),
            })
        }
    };
    let mut centers: Vec<Vec<i64>> = Vec::new();
    for fi in cover_elements {
        match localfrac::parse_linear(fi) {
            Some(None) => centers.push(f_centers.clone()),
            Some(Some(c)) => {
                // f must divide f_i: for linear f_i that means f is constant
                // or equals f_i
                if !f_centers.is_empty() && f_centers != vec![c] {
                    return Ok(ExactnessReport {
                        holds: false,
                        samples: 0,
                        witness: Some(format!(
                            "1/(x - {}) has no image in the cover localizations",
                            f_centers[0]
                        )),
                    });
                }
                centers.push(vec![c]);
            }
            None => {
                return Ok(ExactnessReport {
                    holds: false,
                    samples: 0,
                    witness: Some("unsupported cover element shape".into()),
                })
            }
        }
    }
    // kernel pairs carry poles exactly at the centers shared by every
    // localization; exactness needs those to be the f-centers
    let mut shared = centers.first().cloned().unwrap_or_default();
    for cs in &centers[1..] {
        shared.retain(|c| cs.contains(c));
    }
    for c in &shared {
        if !f_centers.contains(c) {
            return Ok(ExactnessReport {
                holds: false,
                samples: 0,
                witness: Some(format!("1/(x - {c}) lies in the kernel but has no preimage")),
            });
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        // image element: restrictions agree and reassemble to the original
        let g = localfrac::PoleElem::random(&mut rng, p, digits, &f_centers, 6, 3);
        let sections: Vec<localfrac::PoleElem> = centers
            .iter()
            .map(|cs| g.restrict_to(cs).expect("f-poles included in each localization"))
            .collect();
        for (i, si) in sections.iter().enumerate() {
            for sj in sections.iter().skip(i + 1) {
                let diff = si.sub(sj);
                if !diff.is_zero_mod(digits as i64) {
                    return Ok(ExactnessReport {
                        holds: false,
                        samples: 0,
                        witness: Some("restriction pair of a global section left the kernel".into()),
                    });
                }
            }
        }
        let candidate = sections[0].restrict_to(&f_centers);
        let ok = candidate
            .map(|c| c.sub(&g).is_zero_mod(digits as i64))
            .unwrap_or(false);
        if !ok {
            return Ok(ExactnessReport {
                holds: false,
                samples: 0,
                witness: Some("kernel element without preimage".into()),
            });
        }
        // detection control: a pole private to one localization must be seen
        if centers.len() >= 2 {
            if let Some(&c0) = centers[0].iter().find(|c| !centers[1].contains(c)) {
                let mut noisy = sections[0].clone();
                noisy.set_pole(c0, vec![PadicScalar::one(p, digits)]);
                let diff = noisy.sub(&sections[1]);
                if diff.is_zero_mod(digits as i64) {
                    return Ok(ExactnessReport {
                        holds: false,
                        samples: 0,
                        witness: Some("difference map failed to detect a private pole".into()),
                    });
                }
            }
            // partial fractions split any overlap element back into the cover
            let mut union = centers[0].clone();
            for c in &centers[1] {
                if !union.contains(c) {
                    union.push(*c);
                }
            }
            let t = localfrac::PoleElem::random(&mut rng, p, digits, &union, 6, 3);
            let mut a1 = localfrac::PoleElem::from_poly(t.poly.clone());
            let mut a2 = localfrac::PoleElem::zero(p, digits);
            for (c, coeffs) in &t.poles {
                if centers[0].contains(c) {
                    a1.set_pole(*c, coeffs.clone());
                } else {
                    a2.set_pole(*c, coeffs.iter().map(|v| v.checked_neg()).collect());
                }
            }
            let recomposed = a1.sub(&a2);
            if !recomposed.sub(&t).is_zero_mod(digits as i64) {
                return Ok(ExactnessReport {
                    holds: false,
                    samples: 0,
                    witness: Some("partial-fraction split failed to recompose".into()),
                });
            }
        }
    }
    Ok(ExactnessReport { holds: true, samples, witness: None })
}

fn matrix_nonzero(m: &[Vec<PadicScalar>]) -> bool {
    m.iter().flatten().any(|c| !c.is_zero())
}

/// The standard two-patch projective-line cover: two affine lines glued
/// along the torus by t and 1/t.
pub fn projective_line_cover(p: u64, digits: u32, cap: u32) -> Result<Cover, CechError> {
    let line = AlgebraPresentation::affine_line(p, digits, cap);
    let torus = AlgebraPresentation::torus(p, digits, cap);
    let mut cover = Cover::new(vec![line.clone(), line.clone()]);
    let t = torus.element_from_terms(&[(1, vec![1])])?;
    let t_inv = torus.element_from_terms(&[(1, vec![-1])])?;
    let mut res = BTreeMap::new();
    res.insert(
        vec![0],
        AlgebraHom::new(line.clone(), torus.clone(), vec![t.clone()], vec![Some(t_inv.clone())], cap),
    );
    res.insert(
        vec![1],
        AlgebraHom::new(line, torus.clone(), vec![t_inv], vec![Some(t)], cap),
    );
    cover.add_overlap(vec![0, 1], torus, res);
    Ok(cover)
}

/// Two patches with no overlap: the disjoint union.
pub fn disjoint_cover(patches: Vec<AlgebraPresentation>) -> Cover {
    Cover::new(patches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuclear::{lefschetz_count, round_count, trace_power};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p1_cover(p: u64) -> Cover {
        projective_line_cover(p, 8, 2 * p as u32 + 8).unwrap()
    }

    /// The projective line with a redundant third chart (another copy of
    /// patch zero) glued in; exercises triples without changing the limit.
    fn fattened_p1(p: u64) -> Cover {
        let digits = 8u32;
        let cap = 2 * p as u32 + 8;
        let line = AlgebraPresentation::affine_line(p, digits, cap);
        let torus = AlgebraPresentation::torus(p, digits, cap);
        let mut cover = Cover::new(vec![line.clone(), line.clone(), line.clone()]);
        let t = torus.element_from_terms(&[(1, vec![1])]).unwrap();
        let t_inv = torus.element_from_terms(&[(1, vec![-1])]).unwrap();
        let x = line.element_from_terms(&[(1, vec![1])]).unwrap();
        let hom_t = |src: &AlgebraPresentation| {
            AlgebraHom::new(src.clone(), torus.clone(), vec![t.clone()], vec![Some(t_inv.clone())], cap)
        };
        let hom_tinv = |src: &AlgebraPresentation| {
            AlgebraHom::new(src.clone(), torus.clone(), vec![t_inv.clone()], vec![Some(t.clone())], cap)
        };
        // pairwise overlaps: (0,1) torus, (1,2) torus, (0,2) the whole line
        let mut res01 = BTreeMap::new();
        res01.insert(vec![0], hom_t(&line));
        res01.insert(vec![1], hom_tinv(&line));
        cover.add_overlap(vec![0, 1], torus.clone(), res01);
        let mut res12 = BTreeMap::new();
        res12.insert(vec![1], hom_tinv(&line));
        res12.insert(vec![2], hom_t(&line));
        cover.add_overlap(vec![1, 2], torus.clone(), res12);
        let mut res02 = BTreeMap::new();
        res02.insert(vec![0], AlgebraHom::new(line.clone(), line.clone(), vec![x.clone()], vec![None], cap));
        res02.insert(vec![2], AlgebraHom::new(line.clone(), line.clone(), vec![x.clone()], vec![None], cap));
        cover.add_overlap(vec![0, 2], line.clone(), res02);
        // triple overlap: the torus again
        let mut res012 = BTreeMap::new();
        res012.insert(vec![0, 1], AlgebraHom::new(torus.clone(), torus.clone(), vec![t.clone()], vec![Some(t_inv.clone())], cap));
        res012.insert(vec![1, 2], AlgebraHom::new(torus.clone(), torus.clone(), vec![t.clone()], vec![Some(t_inv.clone())], cap));
        res012.insert(vec![0, 2], hom_t(&line));
        cover.add_overlap(vec![0, 1, 2], torus, res012);
        cover
    }

    #[test]
    fn cover_validation() {
        p1_cover(5).validate().unwrap();
        fattened_p1(3).validate().unwrap();
    }

    #[test]
    fn cech_differential_two_patch_formula() {
        let cover = p1_cover(5);
        let line = &cover.cell(&[0]).unwrap().algebra;
        let mut s = CechCochain::zero(0, 0);
        // s_0 = x, s_1 = 2
        s.set(vec![0], DifferentialForm::function(line.element_from_terms(&[(1, vec![1])]).unwrap()));
        s.set(vec![1], DifferentialForm::function(line.element_from_terms(&[(2, vec![0])]).unwrap()));
        let ds = cech_differential(&cover, &s).unwrap();
        let torus = &cover.cell(&[0, 1]).unwrap().algebra;
        // res(s_1) - res(s_0) = 2 - t
        let expect = torus.element_from_terms(&[(2, vec![0]), (-1, vec![1])]).unwrap();
        let got = ds.component(&[0, 1]).unwrap().coefficient(&[]).unwrap();
        assert!(got.eq_mod(&expect, 8));
    }

    #[test]
    fn constant_cochain_maps_to_zero() {
        let cover = p1_cover(5);
        let line = &cover.cell(&[0]).unwrap().algebra;
        let mut s = CechCochain::zero(0, 0);
        let c = DifferentialForm::function(line.element_from_terms(&[(3, vec![0])]).unwrap());
        s.set(vec![0], c.clone());
        s.set(vec![1], c);
        let ds = cech_differential(&cover, &s).unwrap();
        assert!(ds.is_zero_mod(8));
    }

    #[test]
    fn d_after_d_vanishes_on_three_patches() {
        let cover = fattened_p1(3);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let line = &cover.cell(&[0]).unwrap().algebra;
        for _ in 0..5 {
            let mut s = CechCochain::zero(0, 0);
            for i in 0..3usize {
                let mut terms = Vec::new();
                for e in 0..3 {
                    terms.push((rng.gen_range(-10..10), vec![e]));
                }
                s.set(vec![i], DifferentialForm::function(line.element_from_terms(&terms).unwrap()));
            }
            let dds = cech_differential(&cover, &cech_differential(&cover, &s).unwrap()).unwrap();
            assert!(dds.is_zero_mod(8));
        }
    }

    #[test]
    fn total_differential_squares_to_zero() {
        let cover = p1_cover(5);
        let dc = DoubleComplex::new(&cover);
        let line = &cover.cell(&[0]).unwrap().algebra;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let mut s = CechCochain::zero(0, 0);
            for i in 0..2usize {
                let mut terms = Vec::new();
                for e in 0..4 {
                    terms.push((rng.gen_range(-10..10), vec![e]));
                }
                s.set(vec![i], DifferentialForm::function(line.element_from_terms(&terms).unwrap()));
            }
            // d_total^2 components in (2,0), (1,1), (0,2)
            let (h, v) = dc.total(&s).unwrap();
            let (hh, hv) = dc.total(&h).unwrap();
            let (vh, vv) = dc.total(&v).unwrap();
            assert!(hh.is_zero_mod(8));
            assert!(vv.is_zero_mod(8));
            let mixed = hv.checked_add(&vh).unwrap();
            assert!(mixed.is_zero_mod(8), "mixed square must cancel");
        }
    }

    #[test]
    fn single_patch_collapses_to_mw() {
        let torus = AlgebraPresentation::torus(5, 8, 18);
        let cover = Cover::new(vec![torus.clone()]);
        let conv = converge(&cover).unwrap();
        assert_eq!(conv.spaces[0].dim(), 1);
        assert_eq!(conv.spaces[1].dim(), 1);
        // psi traces agree with the direct engine
        let lift = default_lift(&torus).unwrap();
        let direct = crate::cohomology::cohomology_spaces(&torus, &lift).unwrap();
        for (a, b) in conv.spaces.iter().zip(&direct) {
            let ta = trace_power(&a.psi, 1).unwrap();
            let tb = trace_power(&b.psi, 1).unwrap();
            assert!(ta.eq_at_common_precision(&tb));
        }
    }

    #[test]
    fn disjoint_two_patches_double_h0() {
        let line = AlgebraPresentation::affine_line(5, 8, 18);
        let cover = disjoint_cover(vec![line.clone(), line]);
        let conv = converge(&cover).unwrap();
        assert_eq!(conv.spaces[0].dim(), 2);
    }

    #[test]
    fn projective_line_spectral_sequence() {
        for p in [3u64, 5] {
            let cover = p1_cover(p);
            cover.validate().unwrap();
            verify_psi_restriction(&cover).unwrap();
            let conv = converge(&cover).unwrap();
            // E1 shape (2, 1; 0, 1)
            assert_eq!(conv.e1_dims.get(&(0, 0)), Some(&2));
            assert_eq!(conv.e1_dims.get(&(1, 0)), Some(&1));
            assert_eq!(conv.e1_dims.get(&(0, 1)), None);
            assert_eq!(conv.e1_dims.get(&(1, 1)), Some(&1));
            // rank-one d1 out of (0,0), degenerate at page 2
            assert_eq!(conv.d1_ranks.get(&(0, 0)), Some(&1));
            assert_eq!(conv.degenerates_at, 2);
            // limit dims (1, 0, 1)
            let dims: Vec<usize> = conv.spaces.iter().map(|s| s.dim()).collect();
            assert_eq!(dims, vec![1, 0, 1]);
            // Lefschetz counts p^s + 1
            let graded: Vec<(usize, &LinearOperator)> =
                conv.spaces.iter().map(|s| (s.degree, &s.psi)).collect();
            for s in 1..=3u32 {
                let n = lefschetz_count(&graded, s).unwrap();
                let expect = (p as i64).pow(s) + 1;
                assert_eq!(round_count(&n, expect + 10).unwrap(), expect);
            }
        }
    }

    #[test]
    fn fattened_cover_gives_same_limit() {
        let cover = fattened_p1(3);
        let conv = converge(&cover).unwrap();
        let dims: Vec<usize> = conv.spaces.iter().map(|s| s.dim()).collect();
        assert_eq!(&dims[..3], &[1, 0, 1]);
        assert!(dims.iter().skip(3).all(|&d| d == 0));
        let graded: Vec<(usize, &LinearOperator)> =
            conv.spaces.iter().map(|s| (s.degree, &s.psi)).collect();
        for s in 1..=2u32 {
            let n = lefschetz_count(&graded, s).unwrap();
            let expect = 3i64.pow(s) + 1;
            assert_eq!(round_count(&n, expect + 10).unwrap(), expect);
        }
    }


    #[test]
    fn sheaf_exactness_valid_cover() {
        let a = AlgebraPresentation::affine_line(5, 8, 20);
        let one = a.one_element();
        let x = a.element_from_terms(&[(1, vec![1])]).unwrap();
        let x_minus_1 = a.element_from_terms(&[(1, vec![1]), (-1, vec![0])]).unwrap();
        let report = sheaf_exactness_check(&a, &one, &[x, x_minus_1], 50, 7).unwrap();
        assert!(report.holds, "witness: {:?}", report.witness);
        assert_eq!(report.samples, 50);
    }

    #[test]
    fn sheaf_exactness_single_element_cover() {
        let a = AlgebraPresentation::affine_line(5, 8, 20);
        let x = a.element_from_terms(&[(1, vec![1])]).unwrap();
        let report = sheaf_exactness_check(&a, &x, &[x.clone()], 20, 3).unwrap();
        assert!(report.holds);
    }

    #[test]
    fn sheaf_exactness_broken_cover() {
        let a = AlgebraPresentation::affine_line(5, 8, 20);
        let x = a.element_from_terms(&[(1, vec![1])]).unwrap();
        let x_minus_1 = a.element_from_terms(&[(1, vec![1]), (-1, vec![0])]).unwrap();
        // {x, x} claimed to cover the locus of x - 1
        let report =
            sheaf_exactness_check(&a, &x_minus_1, &[x.clone(), x.clone()], 20, 3).unwrap();
        assert!(!report.holds);
        assert!(report.witness.unwrap().contains("1/(x - 1)"));
        // {x, x} as a cover of the full line also fails: 1/x is a kernel
        // element with no global preimage
        let one = a.one_element();
        let report = sheaf_exactness_check(&a, &one, &[x.clone(), x], 20, 3).unwrap();
        assert!(!report.holds);
        assert!(report.witness.unwrap().contains("1/(x - 0)"));
    }

    #[test]
    fn euler_characteristic_is_page_invariant() {
        let cover = p1_cover(5);
        let e1 = e1_page(&cover).unwrap();
        let conv = converge(&cover).unwrap();
        let limit_euler: i64 = conv
            .spaces
            .iter()
            .map(|s| if s.degree % 2 == 0 { s.dim() as i64 } else { -(s.dim() as i64) })
            .sum();
        assert_eq!(e1.euler_characteristic(), limit_euler);
        assert_eq!(conv.euler, limit_euler);
    }
}
