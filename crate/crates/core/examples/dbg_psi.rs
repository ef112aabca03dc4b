use zeta_core::algebra::AlgebraPresentation;
use zeta_core::cohomology::{cohomology_basis, frobenius_matrix, frobenius_route_digits, psi_matrix};
use zeta_core::frobenius::default_lift;

fn main() {
    let reference = {
        let a = AlgebraPresentation::hyperelliptic(7, 22, 29, 1, &[1, 1, 0, 1]).unwrap();
        let lift = default_lift(&a).unwrap().with_keep_val(8);
        let bases = cohomology_basis(&a).unwrap();
        (
            psi_matrix(&a, &lift, &bases[1]).unwrap(),
            frobenius_matrix(&a, &lift, &bases[1]).unwrap(),
        )
    };
    let target = 5i64;
    let digits = frobenius_route_digits(7, target as u32);
    let a = AlgebraPresentation::hyperelliptic(7, digits, 29, 1, &[1, 1, 0, 1]).unwrap();
    let lift = default_lift(&a).unwrap().with_keep_val(target);
    let bases = cohomology_basis(&a).unwrap();
    let psi = psi_matrix(&a, &lift, &bases[1]).unwrap();
    let frob = frobenius_matrix(&a, &lift, &bases[1]).unwrap();
    for (name, m, r) in [("psi", &psi, &reference.0), ("F*", &frob, &reference.1)] {
        let mut worst = i64::MAX;
        let mut at = (0, 0);
        for i in 0..5 {
            for j in 0..5 {
                let d = m.entry(i, j).checked_sub(r.entry(i, j)).unwrap();
                let v = d.valuation().bound();
                if v < worst {
                    worst = v;
                    at = (i, j);
                }
            }
        }
        println!("{name}: worst agreement with reference at {at:?}: valuation {worst}");
    }
}
