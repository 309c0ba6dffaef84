//! The lattice tensor build against the nine-term integral representation.

use num_complex::Complex64;

use kerrcap::coefficients::nine::{a2_nine, b2_nine};
use kerrcap::coefficients::{build_coefficients, Coverage};
use kerrcap::envelope::EnvelopeKind;
use kerrcap::ExecPolicy;

const ORDER: usize = 12;

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-3)
}

#[test]
fn lattice_build_matches_nine_term_form() {
    let m = 1usize;
    let mi = m as i64;
    let beta = 1.0;
    let set = build_coefficients(m, beta, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Parallel).unwrap();
    for s in [[0, 0, 0, 0], [1, 0, 0, 1], [1, -1, 0, 0], [0, 1, -1, 1]] {
        let [s1, s2, s3, s4] = s;
        let b2 = b2_nine(s, m, beta, ORDER).unwrap();
        let got = set.b2.get(s1, s2, s3, s4);
        assert!(rel(got, b2) < 1e-4, "b2 {s:?}: lattice {got} nine {b2}");

        let mut left = Complex64::new(0.0, 0.0);
        let mut pair = Complex64::new(0.0, 0.0);
        for r in -mi..=mi {
            left += a2_nine([r, s1, s2, s3, s4, r], beta, ORDER).unwrap();
            pair += a2_nine([s1, s2, r, r, s3, s4], beta, ORDER).unwrap();
        }
        let got = set.a2_left.get(s1, s2, s3, s4);
        assert!(rel(got, left) < 1e-4, "A2 left {s:?}: lattice {got} nine {left}");
        let got = set.a2_pair.get(s1, s2, s3, s4);
        assert!(rel(got, pair) < 1e-4, "A2 pair {s:?}: lattice {got} nine {pair}");
    }
}
