use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zeta_core::algebra::{AlgebraPresentation, DifferentialForm, FamilyTag};
use zeta_core::frobenius::{default_lift, psi_form, to_dx_coefficient};

fn main() {
    let family = FamilyTag::Hyperelliptic { genus: 1, f_coeffs: vec![1, 1, 0, 1] };
    let p = 7u64;
    let algebra = AlgebraPresentation::hyperelliptic(p, 7, 29, 1, &[1, 1, 0, 1]).unwrap();
    let _ = family;
    let lift = default_lift(&algebra).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let deg_cap = (algebra.cap() as i32 / (2 * p as i32)).max(1);
    println!("deg_cap = {deg_cap}");
    let mut spec = Vec::new();
    for _ in 0..3 {
        spec.push((rng.gen_range(-30..30), vec![rng.gen_range(0..3), rng.gen_range(-deg_cap..=deg_cap)]));
    }
    let a = algebra.element_from_terms(&spec).unwrap();
    let mut spec2 = Vec::new();
    for _ in 0..2 {
        spec2.push((rng.gen_range(-30..30), vec![rng.gen_range(0..3), rng.gen_range(-deg_cap..=deg_cap)]));
    }
    let w_series = algebra.element_from_terms(&spec2).unwrap();
    let w = DifferentialForm::one_form(0, w_series);
    let fa = lift.apply(&a).unwrap();
    let lhs = psi_form(&lift, &w.series_mul(&algebra, &fa.truncate_cap(u32::MAX / 8)).unwrap()).unwrap();
    let rhs_form = psi_form(&lift, &w).unwrap();
    let rhs = rhs_form.series_mul(&algebra, &a).unwrap();
    let l = to_dx_coefficient(&algebra, &lhs).unwrap();
    let r = to_dx_coefficient(&algebra, &rhs).unwrap();
    println!("l floor {} r floor {}", l.effective_abs_precision(), r.effective_abs_precision());
    let diff = l.checked_sub(&r).unwrap();
    println!("diff min val {:?}", diff.min_valuation());
    let worst: Vec<String> = diff.support().filter(|(_, c)| c.valuation().bound() < 7)
        .take(5).map(|(m, c)| format!("{:?}: {}", m.0, c)).collect();
    println!("worst terms: {worst:#?}");
}
