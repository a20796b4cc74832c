// Randomized checks of the eigenvalue-minimization core: every claimed
// verdict is re-audited with an independent eigensolve, and constructed
// problems with known answers must be classified correctly.

use mati_core::lmi::{lmi_problem, LinearNcs};
use mati_core::protocol::ProtocolModel;
use mati_core::sdp::{
    is_feasible, max_eig_minimize, sym_dof, sym_to_vec, LmiFeasibilityProblem, SolveOptions,
    Verdict,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sym(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-scale..scale));
    0.5 * (&raw + raw.transpose())
}

fn random_problem(seed: u64, dim_p: usize, m: usize) -> LmiFeasibilityProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constant = random_sym(&mut rng, m, 2.0);
    let dirs: Vec<DMatrix<f64>> = (0..sym_dof(dim_p))
        .map(|_| random_sym(&mut rng, m, 2.0))
        .collect();
    let scale = LmiFeasibilityProblem::scale_of(&constant, &dirs);
    LmiFeasibilityProblem::new(dim_p, constant, dirs, 1e-6 * scale, 1e-8 * scale).unwrap()
}

fn example2() -> (LinearNcs, ProtocolModel) {
    let a_p = DMatrix::from_row_slice(2, 2, &[-0.8, 0.2, -0.4, 0.6]);
    let b_p = DMatrix::from_row_slice(2, 1, &[-1.0, 2.0]);
    let k = DMatrix::from_row_slice(1, 2, &[-0.2, 0.5]);
    (
        LinearNcs::from_plant(&a_p, &b_p, &k).unwrap(),
        ProtocolModel::tod(2).unwrap(),
    )
}

// Independent recheck of a feasibility witness: reassemble the affine map at
// the witness and eigensolve it from scratch.
fn audit(prob: &LmiFeasibilityProblem, witness: &DMatrix<f64>) {
    let lam_max = prob
        .assemble(&sym_to_vec(witness))
        .symmetric_eigenvalues()
        .max();
    assert!(
        lam_max <= -prob.slack_margin / 2.0,
        "witness not strictly feasible: lambda_max = {lam_max:e}"
    );
    let p_min_eig = witness.symmetric_eigenvalues().min();
    assert!(
        p_min_eig >= prob.p_min * (1.0 - 1e-6),
        "P witness lost definiteness: {p_min_eig:e} < {:e}",
        prob.p_min
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Whatever the solver claims on a random affine map, a Feasible verdict
    // must come with a witness that survives the independent audit, and an
    // Infeasible verdict must carry a certificate, not a stall.
    #[test]
    fn verdicts_survive_independent_audit(seed in 0u64..10_000) {
        let prob = random_problem(seed, 2, 4);
        let opts = SolveOptions { max_iter: 5_000, ..SolveOptions::default() };
        let out = is_feasible(&prob, &opts);
        match out.verdict {
            Verdict::Feasible => {
                audit(&prob, &out.witness);
                prop_assert!(out.t_star <= -prob.slack_margin);
            }
            Verdict::Infeasible => {
                // A certificate bounds the true minimum away from the margin;
                // spot-check that a handful of admissible points obey it.
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
                for _ in 0..32 {
                    let p = random_sym(&mut rng, prob.dim_p, 3.0);
                    let p = &p * &p.transpose() + DMatrix::identity(prob.dim_p, prob.dim_p) * prob.p_min;
                    let lam = prob.assemble(&sym_to_vec(&p)).symmetric_eigenvalues().max();
                    prop_assert!(
                        lam > -prob.slack_margin,
                        "certified infeasible but found admissible point with lambda_max {lam:e}"
                    );
                }
            }
            Verdict::Indeterminate => {}
        }
    }
}

// Adding shift·I to the constant block shifts the attainable minimum by
// exactly shift; the solver must land on both optima within its smoothing
// resolution. Run on the actual certification map so the instance is
// bounded below.
#[test]
fn identity_shift_moves_optimum_by_shift() {
    let (sys, proto) = example2();
    let base = lmi_problem(&sys, &proto, 0.0, 0.5, 2.2, 1.0).unwrap();
    let a = max_eig_minimize(&base, &SolveOptions::default()).unwrap();
    let m = base.constant.nrows();
    for shift in [0.5_f64, 3.0, 11.0] {
        let shifted = LmiFeasibilityProblem::new(
            base.dim_p,
            &base.constant + DMatrix::identity(m, m) * shift,
            base.dirs.clone(),
            base.p_min,
            base.slack_margin,
        )
        .unwrap();
        let b = max_eig_minimize(&shifted, &SolveOptions::default()).unwrap();
        assert!(
            ((b.t_star - a.t_star) - shift).abs() <= 1e-4 * (1.0 + a.t_star.abs() + shift),
            "shift {shift}: base t* = {}, shifted t* = {}",
            a.t_star,
            b.t_star
        );
    }
}

// A map whose value is a fixed positive matrix (directions all zero) is
// infeasible, and the solver must say so with a certificate, not a punt.
#[test]
fn fixed_positive_constant_is_certified_infeasible() {
    for c in [1e-2_f64, 1.0, 50.0] {
        let m = 3;
        let dirs: Vec<DMatrix<f64>> = (0..sym_dof(1)).map(|_| DMatrix::zeros(m, m)).collect();
        let prob =
            LmiFeasibilityProblem::new(1, DMatrix::identity(m, m) * c, dirs, 1e-6, 1e-8).unwrap();
        let out = is_feasible(&prob, &SolveOptions::default());
        assert_eq!(out.verdict, Verdict::Infeasible, "c = {c}");
        assert!((out.t_star - c).abs() <= 1e-5 * (1.0 + c));
    }
}

// Dually, a strongly negative constant with zero directions is feasible for
// any admissible P.
#[test]
fn fixed_negative_constant_is_feasible() {
    let m = 3;
    let dirs: Vec<DMatrix<f64>> = (0..sym_dof(1)).map(|_| DMatrix::zeros(m, m)).collect();
    let prob =
        LmiFeasibilityProblem::new(1, DMatrix::identity(m, m) * -2.0, dirs, 1e-6, 1e-8).unwrap();
    let out = is_feasible(&prob, &SolveOptions::default());
    assert_eq!(out.verdict, Verdict::Feasible);
    audit(&prob, &out.witness);
}

// Identical inputs must produce bitwise-identical optimizer output.
#[test]
fn minimization_is_bitwise_deterministic() {
    let prob = random_problem(7, 2, 5);
    let opts = SolveOptions { max_iter: 20_000, ..SolveOptions::default() };
    let a = max_eig_minimize(&prob, &opts).unwrap();
    let b = max_eig_minimize(&prob, &opts).unwrap();
    assert_eq!(a.t_star.to_bits(), b.t_star.to_bits());
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.p_star.len(), b.p_star.len());
    for (x, y) in a.p_star.iter().zip(b.p_star.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

// The init option warm-starts the search: seeding with the cold answer must
// reproduce the same optimum in no more iterations.
#[test]
fn warm_start_reuses_prior_solution() {
    let (sys, proto) = example2();
    let prob = lmi_problem(&sys, &proto, 0.0, 0.5, 2.2, 1.0).unwrap();
    let cold = max_eig_minimize(&prob, &SolveOptions::default()).unwrap();
    let warm_opts = SolveOptions {
        init: Some(cold.p_star.clone()),
        ..SolveOptions::default()
    };
    let warm = max_eig_minimize(&prob, &warm_opts).unwrap();
    assert!((warm.t_star - cold.t_star).abs() <= 1e-6 * (1.0 + cold.t_star.abs()));
    assert!(warm.iterations <= cold.iterations);
}

// Vector/matrix coordinate maps must round-trip (they carry every witness).
#[test]
fn sym_coordinates_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 1..6 {
        let p = random_sym(&mut rng, d, 4.0);
        let v = sym_to_vec(&p);
        assert_eq!(v.len(), sym_dof(d));
        let back = mati_core::sdp::vec_to_sym(&v, d);
        assert!((&back - &p).norm() <= 1e-14 * (1.0 + p.norm()));
        let w = DVector::from_fn(sym_dof(d), |i, _| (i as f64 * 0.37).sin());
        let round = sym_to_vec(&mati_core::sdp::vec_to_sym(&w, d));
        assert!((&round - &w).norm() <= 1e-14 * (1.0 + w.norm()));
    }
}
