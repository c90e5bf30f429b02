//! Dual active-set solver against exhaustive active-set enumeration.

use nalgebra::{DMatrix, DVector};
use platoon_core::mpc::qp::{enumerate_active_sets, kkt_residual, solve_qp, QpOptions, QpStatus, QuadraticProgram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_qp(rng: &mut ChaCha8Rng) -> QuadraticProgram {
    let n = rng.random_range(1..=6);
    let mi = rng.random_range(0..=4);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let a = DMatrix::from_fn(mi, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(mi, |_, _| rng.random_range(-1.0..1.0));
    QuadraticProgram::new(h, f).unwrap().with_inequalities(a, b).unwrap()
}

#[test]
fn matches_enumeration_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut infeasible = 0;
    for case in 0..500 {
        let qp = random_qp(&mut rng);
        let sol = solve_qp(&qp, &QpOptions::default(), &[]).unwrap();
        match enumerate_active_sets(&qp, 1e-9) {
            Some(x) => {
                assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
                assert!((&sol.x - &x).amax() < 1e-6, "case {case}: {} vs {}", sol.x, x);
                assert!(kkt_residual(&qp, &sol) < 1e-6, "case {case}");
            }
            None => {
                infeasible += 1;
                assert_eq!(sol.status, QpStatus::Infeasible, "case {case}");
                assert!(sol.most_violated.is_some());
            }
        }
    }
    assert!(infeasible < 100);
}

#[test]
fn hints_do_not_change_the_answer() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let qp = random_qp(&mut rng);
        let plain = solve_qp(&qp, &QpOptions::default(), &[]).unwrap();
        let hinted = solve_qp(&qp, &QpOptions::default(), &[3, 1, 0]).unwrap();
        assert_eq!(plain.status, hinted.status);
        if plain.status == QpStatus::Optimal {
            assert!((&plain.x - &hinted.x).amax() < 1e-9);
        }
    }
}

#[test]
fn deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let qp = random_qp(&mut rng);
    let a = solve_qp(&qp, &QpOptions::default(), &[]).unwrap();
    let b = solve_qp(&qp, &QpOptions::default(), &[]).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.iterations, b.iterations);
}
