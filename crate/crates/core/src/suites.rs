//! Randomized property suites, runnable from both the test harness and the
//! CLI `check` subcommand. Seeds are fixed by the caller, so runs are
//! reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{d, AlgebraPresentation, DifferentialForm, FamilyTag};
use crate::cech::sheaf_exactness_check;
use crate::frobenius::{default_lift, psi_form, psi_series, to_dx_coefficient};
use crate::nuclear::{
    exact_sequence_traces, filtration_traces, solve_in_span, LinearOperator,
};
use crate::padic::PadicScalar;

/// Outcome of one suite: how many cases ran and the first failure, if any.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn small_algebra(family: &FamilyTag, p: u64) -> AlgebraPresentation {
    match family {
        FamilyTag::AffineLine => AlgebraPresentation::affine_line(p, 8, 4 * p as u32 + 8),
        FamilyTag::Torus => AlgebraPresentation::torus(p, 8, 4 * p as u32 + 8),
        FamilyTag::Hyperelliptic { genus, f_coeffs } => {
            AlgebraPresentation::hyperelliptic(p, 7, p as u32 * (2 * genus + 1) + 8, *genus, f_coeffs)
                .expect("valid hyperelliptic data")
        }
        FamilyTag::Generic => unreachable!("suites run on concrete families"),
    }
}

fn random_element(
    rng: &mut ChaCha8Rng,
    algebra: &AlgebraPresentation,
    max_degree: i32,
    terms: usize,
) -> crate::series::DaggerSeries {
    let mut spec = Vec::new();
    for _ in 0..terms {
        let exp = match algebra.family() {
            FamilyTag::Torus => vec![rng.gen_range(-max_degree..=max_degree)],
            FamilyTag::AffineLine => vec![rng.gen_range(0..=max_degree)],
            FamilyTag::Hyperelliptic { .. } => {
                vec![rng.gen_range(0..3), rng.gen_range(-max_degree..=max_degree)]
            }
            FamilyTag::Generic => unreachable!(),
        };
        spec.push((rng.gen_range(-30..30), exp));
    }
    algebra.element_from_terms(&spec).expect("valid exponents")
}

/// Identities of the psi operator on a family: semilinearity over Frobenius
/// images, commutation with d, and psi after pullback = p.
pub fn psi_identities_suite(family: &FamilyTag, p: u64, cases: usize, seed: u64) -> SuiteReport {
    let name = format!("psi identities on {:?} at p = {p}", family_label(family));
    let algebra = small_algebra(family, p);
    let lift = default_lift(&algebra).expect("default lift");
    let digits = algebra.digits() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut first_failure = None;
    let mut record = |cond: bool, msg: String, failures: &mut usize, first: &mut Option<String>| {
        if !cond {
            *failures += 1;
            if first.is_none() {
                *first = Some(msg);
            }
        }
    };
    // window where products stay clear of the truncation boundary
    let deg_cap = (algebra.cap() as i32 / (2 * p as i32)).max(1);
    for case in 0..cases {
        let a = random_element(&mut rng, &algebra, deg_cap, 3);
        let w_series = random_element(&mut rng, &algebra, deg_cap, 2);
        let w = DifferentialForm::one_form(0, w_series);
        // (i) psi(F(a) w) = a psi(w)
        let fa = lift.apply(&a).expect("apply");
        let lhs = psi_form(&lift, &w.series_mul(&algebra, &fa.truncate_cap(u32::MAX / 8)).unwrap())
            .expect("psi");
        let rhs_form = psi_form(&lift, &w).expect("psi");
        let rhs = rhs_form.series_mul(&algebra, &a).expect("mul");
        let l = to_dx_coefficient(&algebra, &lhs).expect("dx");
        let r = to_dx_coefficient(&algebra, &rhs).expect("dx");
        let window = digits.min(l.effective_abs_precision()).min(r.effective_abs_precision());
        record(
            l.eq_mod(&r, window),
            format!("case {case}: psi(F(a)w) != a psi(w)"),
            &mut failures,
            &mut first_failure,
        );
        // (ii) psi(d a) = d(psi a)
        let da = d(&algebra, &DifferentialForm::function(a.clone())).expect("d");
        let lhs = psi_form(&lift, &da).expect("psi");
        let psi_a = psi_series(&lift, &a).expect("psi");
        let rhs = d(&algebra, &DifferentialForm::function(psi_a)).expect("d");
        let l = to_dx_coefficient(&algebra, &lhs).expect("dx");
        let r = to_dx_coefficient(&algebra, &rhs).expect("dx");
        let window = digits.min(l.effective_abs_precision()).min(r.effective_abs_precision());
        record(
            l.eq_mod(&r, window),
            format!("case {case}: psi d != d psi"),
            &mut failures,
            &mut first_failure,
        );
        // (iii) psi(F*(w)) = p w on forms, psi(F(a)) = p a on functions
        let pulled = lift.pull_back(&w).expect("pullback");
        let lhs = psi_form(&lift, &pulled).expect("psi");
        let rhs = w.series_mul(&algebra, &algebra.element_from_terms(&[(p as i64, vec![0; algebra.nvars()])]).unwrap()).unwrap();
        let l = to_dx_coefficient(&algebra, &lhs).expect("dx");
        let r = to_dx_coefficient(&algebra, &rhs).expect("dx");
        let window = digits.min(l.effective_abs_precision()).min(r.effective_abs_precision());
        record(
            l.eq_mod(&r, window),
            format!("case {case}: psi F* != p"),
            &mut failures,
            &mut first_failure,
        );
        let lhs = psi_series(&lift, &fa).expect("psi");
        let rhs = a.mul_integer(p as i64).expect("mul");
        let window = digits
            .min(lhs.effective_abs_precision())
            .min(rhs.effective_abs_precision());
        record(
            lhs.eq_mod(&rhs.truncate_cap(lhs.cap()), window),
            format!("case {case}: psi F != p on functions"),
            &mut failures,
            &mut first_failure,
        );
        // reduction check: images of variables are p-th powers mod p
        if case == 0 {
            record(
                lift.verify().is_ok(),
                "lift reduction check failed".into(),
                &mut failures,
                &mut first_failure,
            );
        }
    }
    SuiteReport { name, cases, failures, first_failure }
}

fn family_label(family: &FamilyTag) -> &'static str {
    match family {
        FamilyTag::AffineLine => "affine line",
        FamilyTag::Torus => "torus",
        FamilyTag::Hyperelliptic { .. } => "hyperelliptic",
        FamilyTag::Generic => "generic",
    }
}

fn random_operator(rng: &mut ChaCha8Rng, p: u64, digits: u32, dim: usize) -> LinearOperator {
    let rows: Vec<Vec<i64>> = (0..dim)
        .map(|_| (0..dim).map(|_| rng.gen_range(-40..40)).collect())
        .collect();
    LinearOperator::from_integers(p, digits, &rows)
}

/// Determinant and trace identities for kernel/cokernel pairs and invariant
/// filtrations, on randomized admissible matrix instances over Q_p.
pub fn operator_identities_suite(p: u64, digits: u32, cases: usize, seed: u64) -> SuiteReport {
    let name = format!("kernel/cokernel and filtration identities at p = {p}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut first_failure = None;
    for case in 0..cases {
        // intertwined pair from a block model conjugated by random
        // unit-determinant matrices
        let a = rng.gen_range(0..3usize);
        let b = rng.gen_range(1..3usize);
        let c = rng.gen_range(0..3usize);
        let blk_a = random_operator(&mut rng, p, digits, a);
        let blk_c = random_operator(&mut rng, p, digits, b);
        let blk_e = random_operator(&mut rng, p, digits, c);
        // L1 = [[A, B], [0, C]] on a+b, L2 = [[C, D], [0, E]] on b+c,
        // alpha0 = [0 I; 0 0]
        let mut l1 = vec![vec![0i64; a + b]; a + b];
        let mut l2 = vec![vec![0i64; b + c]; b + c];
        for i in 0..a {
            for j in 0..a {
                l1[i][j] = as_int(&blk_a, i, j);
            }
            for j in 0..b {
                l1[i][a + j] = rng.gen_range(-20..20);
            }
        }
        for i in 0..b {
            for j in 0..b {
                l1[a + i][a + j] = as_int(&blk_c, i, j);
                l2[i][j] = as_int(&blk_c, i, j);
            }
            for j in 0..c {
                l2[i][b + j] = rng.gen_range(-20..20);
            }
        }
        for i in 0..c {
            for j in 0..c {
                l2[b + i][b + j] = as_int(&blk_e, i, j);
            }
        }
        let l1 = LinearOperator::from_integers(p, digits, &l1);
        let l2 = LinearOperator::from_integers(p, digits, &l2);
        let mut alpha = vec![vec![PadicScalar::zero(p, digits as i64); a + b]; b + c];
        for i in 0..b {
            alpha[i][a + i] = PadicScalar::one(p, digits);
        }
        // conjugate both sides by unit-triangular matrices
        let p1 = unit_triangular(&mut rng, p, digits, a + b);
        let p2 = unit_triangular(&mut rng, p, digits, b + c);
        let l1c = conjugate(&p1, &l1);
        let l2c = conjugate(&p2, &l2);
        let alpha_c = {
            // p2 * alpha * p1^-1
            let p1_inv = invert(&p1);
            let mut rows = Vec::with_capacity(b + c);
            for i in 0..(b + c) {
                let mut row = Vec::with_capacity(a + b);
                for j in 0..(a + b) {
                    let mut acc = PadicScalar::zero(p, i64::MAX / 2);
                    for k in 0..(b + c) {
                        for l in 0..(a + b) {
                            let t = p2
                                .entry(i, k)
                                .checked_mul(&alpha[k][l])
                                .unwrap()
                                .checked_mul(p1_inv.entry(l, j))
                                .unwrap();
                            acc = acc.checked_add(&t).unwrap();
                        }
                    }
                    row.push(acc);
                }
                rows.push(row);
            }
            rows
        };
        match exact_sequence_traces(&l1c, &l2c, &alpha_c) {
            Ok(report) => {
                if !(report.det_identity && report.trace_identity) {
                    failures += 1;
                    if first_failure.is_none() {
                        first_failure =
                            Some(format!("case {case}: kernel/cokernel identity failed"));
                    }
                }
            }
            Err(e) => {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(format!("case {case}: {e}"));
                }
            }
        }
        // filtration: a block upper-triangular operator conjugated, with the
        // invariant subspace carried along
        let dim = rng.gen_range(2..=6usize);
        let k = rng.gen_range(1..dim);
        let mut tri = vec![vec![0i64; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                if i < k && j < k || i >= k && j >= k || (i < k && j >= k) {
                    tri[i][j] = rng.gen_range(-20..20);
                }
            }
        }
        let op = LinearOperator::from_integers(p, digits, &tri);
        let pm = unit_triangular(&mut rng, p, digits, dim);
        let opc = conjugate(&pm, &op);
        let sub: Vec<Vec<PadicScalar>> = (0..k)
            .map(|j| (0..dim).map(|i| pm.entry(i, j).clone()).collect())
            .collect();
        match filtration_traces(&opc, &sub) {
            Ok(report) => {
                if !(report.det_identity && report.trace_identity) {
                    failures += 1;
                    if first_failure.is_none() {
                        first_failure = Some(format!("case {case}: filtration identity failed"));
                    }
                }
            }
            Err(e) => {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(format!("case {case}: filtration {e}"));
                }
            }
        }
    }
    SuiteReport { name, cases, failures, first_failure }
}

fn as_int(op: &LinearOperator, i: usize, j: usize) -> i64 {
    let e = op.entry(i, j);
    if e.is_zero() {
        0
    } else {
        let r = e.residue_mod(2).unwrap() as i64;
        let m = (e.p() * e.p()) as i64;
        if r > m / 2 {
            r - m
        } else {
            r
        }
    }
}

fn unit_triangular(rng: &mut ChaCha8Rng, p: u64, digits: u32, n: usize) -> LinearOperator {
    let mut upper = vec![vec![0i64; n]; n];
    let mut lower = vec![vec![0i64; n]; n];
    for i in 0..n {
        upper[i][i] = 1;
        lower[i][i] = 1;
        for j in (i + 1)..n {
            upper[i][j] = rng.gen_range(-5..5);
            lower[j][i] = rng.gen_range(-5..5);
        }
    }
    LinearOperator::from_integers(p, digits, &upper)
        .mul(&LinearOperator::from_integers(p, digits, &lower))
        .unwrap()
}

fn invert(op: &LinearOperator) -> LinearOperator {
    let n = op.dim();
    let p = op.p();
    let digits = op
        .entries()
        .iter()
        .flatten()
        .map(|e| e.digits())
        .filter(|&d| d > 0)
        .max()
        .unwrap_or(8);
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
    let coords = solve_in_span(p, &cols, &id).expect("unit determinant");
    let mut rows = vec![vec![PadicScalar::zero(p, digits as i64); n]; n];
    for (j, col) in coords.iter().enumerate() {
        for i in 0..n {
            rows[i][j] = col[i].clone();
        }
    }
    LinearOperator::new(p, rows)
}

fn conjugate(pm: &LinearOperator, op: &LinearOperator) -> LinearOperator {
    let inv = invert(pm);
    pm.mul(op).unwrap().mul(&inv).unwrap()
}

/// The localization-sequence exactness suite on the standard covers.
pub fn exactness_suite(p: u64, samples: usize, seed: u64) -> SuiteReport {
    let name = format!("localization sequence exactness at p = {p}");
    let algebra = AlgebraPresentation::affine_line(p, 8, 24);
    let one = algebra.one_element();
    let x = algebra.element_from_terms(&[(1, vec![1])]).unwrap();
    let x_minus_1 = algebra
        .element_from_terms(&[(1, vec![1]), (-1, vec![0])])
        .unwrap();
    let mut failures = 0;
    let mut first_failure = None;
    match sheaf_exactness_check(&algebra, &one, &[x.clone(), x_minus_1.clone()], samples, seed) {
        Ok(r) if r.holds => {}
        Ok(r) => {
            failures += 1;
            first_failure = Some(format!("valid cover rejected: {:?}", r.witness));
        }
        Err(e) => {
            failures += 1;
            first_failure = Some(format!("{e}"));
        }
    }
    match sheaf_exactness_check(&algebra, &x_minus_1, &[x.clone(), x.clone()], samples, seed) {
        Ok(r) if !r.holds => {}
        _ => {
            failures += 1;
            if first_failure.is_none() {
                first_failure = Some("broken cover accepted".into());
            }
        }
    }
    SuiteReport { name, cases: 2 * samples, failures, first_failure }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_suites_all_families() {
        for p in [3u64, 5] {
            for family in [FamilyTag::AffineLine, FamilyTag::Torus] {
                let report = psi_identities_suite(&family, p, 25, 11);
                assert!(report.passed(), "{}: {:?}", report.name, report.first_failure);
            }
        }
        let hyper = FamilyTag::Hyperelliptic { genus: 1, f_coeffs: vec![1, 1, 0, 1] };
        let report = psi_identities_suite(&hyper, 7, 8, 11);
        assert!(report.passed(), "{}: {:?}", report.name, report.first_failure);
    }

    #[test]
    fn operator_suite_holds() {
        let report = operator_identities_suite(5, 10, 40, 23);
        assert!(report.passed(), "{:?}", report.first_failure);
    }

    #[test]
    fn exactness_suite_holds() {
        let report = exactness_suite(5, 10, 29);
        assert!(report.passed(), "{:?}", report.first_failure);
    }
}
