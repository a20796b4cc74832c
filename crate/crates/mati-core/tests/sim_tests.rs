// Hybrid simulation against its independent oracles: monodromy radii for
// round robin, decay-based boundary searches, Lyapunov monitoring along
// trajectories, and the integrator's observed convergence order.

use mati_core::bound::GainTriple;
use mati_core::lmi::{sweep_k, LinearNcs};
use mati_core::oracle::{
    empirical_mati_decay, empirical_mati_monodromy, monodromy_radius_rr, unit_initial_conditions,
    verify_lambda, DecayTest, EmpiricalOutcome,
};
use mati_core::protocol::{ProtocolKind, ProtocolModel};
use mati_core::sim::{monitor_lyapunov, simulate, NcsDynamics, Schedule, StoredV};
use nalgebra::{DMatrix, DVector};

fn example2() -> LinearNcs {
    let a_p = DMatrix::from_row_slice(2, 2, &[-0.8, 0.2, -0.4, 0.6]);
    let b_p = DMatrix::from_row_slice(2, 1, &[-1.0, 2.0]);
    let k = DMatrix::from_row_slice(1, 2, &[-0.2, 0.5]);
    LinearNcs::from_plant(&a_p, &b_p, &k).unwrap()
}

fn scalar_ics(values: &[f64]) -> Vec<(DVector<f64>, DVector<f64>)> {
    values
        .iter()
        .map(|&v| (DVector::from_column_slice(&[v]), DVector::zeros(1)))
        .collect()
}

// Spectral radius of the period map under round robin, pinned at three
// periods (matrix-exponential computation, no simulation involved).
#[test]
fn monodromy_radius_reference_values() {
    let sys = example2();
    let reference = [
        (0.1399, 8.8715602175430e-1),
        (0.2817, 7.7626529422129e-1),
        (10.0, 6.8195201218511e4),
    ];
    for (t, r_ref) in reference {
        let r = monodromy_radius_rr(&sys, t, &[1, 1]).unwrap();
        assert!(
            (r - r_ref).abs() <= 1e-9 * r_ref,
            "T = {t}: radius {r:e} vs {r_ref:e}"
        );
    }
    // Below any certified interval the period map must be a contraction.
    assert!(monodromy_radius_rr(&sys, 0.05, &[1, 1]).unwrap() < 1.0);
}

// Round-robin stability boundary via the monodromy criterion.
#[test]
fn round_robin_boundary_location() {
    let sys = example2();
    match empirical_mati_monodromy(&sys, &[1, 1], 0.3, 2.0).unwrap() {
        EmpiricalOutcome::Boundary(b) => {
            assert!((b - 1.03506).abs() <= 2e-3, "boundary at {b}");
        }
        EmpiricalOutcome::NoBoundaryInBracket => panic!("boundary expected inside [0.3, 2.0]"),
    }
}

// Largest-error-first boundary via the decay criterion, with the certified
// interval well inside the stable side.
#[test]
fn tod_decay_boundary_location() {
    let sys = example2();
    let test = DecayTest {
        dynamics: NcsDynamics::Linear(sys),
        proto: ProtocolModel::tod(2).unwrap(),
        ics: unit_initial_conditions(2, 2, 20, 11),
        horizon: 200.0,
        step: 0.01,
        ratio: 1e-6,
    };
    assert!(test.is_stable_at(0.2817).unwrap());
    match empirical_mati_decay(&test, 0.3, 3.0).unwrap() {
        EmpiricalOutcome::Boundary(b) => {
            assert!((b - 2.07101).abs() <= 1e-3, "boundary at {b}");
        }
        EmpiricalOutcome::NoBoundaryInBracket => panic!("boundary expected inside [0.3, 3.0]"),
    }
}

// Scalar saturated loop: the observed boundary sits above the guaranteed
// interval for both disturbance settings, and coincides for the two because
// the disturbance term only perturbs the transient.
#[test]
fn scalar_loop_boundary_exceeds_guarantee() {
    for d in [0.0, 1.0] {
        let test = DecayTest {
            dynamics: NcsDynamics::nonlinear_example1(d).unwrap(),
            proto: ProtocolModel::sampled_data(),
            ics: scalar_ics(&[1.0, -0.5, 2.0, -2.0, 0.1]),
            horizon: 200.0,
            step: 0.01,
            ratio: 1e-6,
        };
        assert!(test.is_stable_at(0.7909).unwrap());
        match empirical_mati_decay(&test, 0.7909, 5.0).unwrap() {
            EmpiricalOutcome::Boundary(b) => {
                assert!((b - 0.96826).abs() <= 1e-3, "d = {d}: boundary at {b}");
                assert!(b > 0.7909);
            }
            EmpiricalOutcome::NoBoundaryInBracket => panic!("boundary expected below 5.0"),
        }
    }
}

// Fast sampling of the two-node loop: every seeded unit start settles below
// 1e-6 of its norm within the horizon, with a consistent decay rate.
#[test]
fn two_node_loop_settles_under_fast_sampling() {
    let sys = example2();
    let proto = ProtocolModel::tod(2).unwrap();
    let sched = Schedule::constant(0.05, 200.0).unwrap();
    let dynamics = NcsDynamics::Linear(sys);
    for (x0, e0) in &unit_initial_conditions(2, 2, 5, 3) {
        let trace = simulate(&dynamics, &proto, &sched, x0, e0, 0.01).unwrap();
        assert!(!trace.diverged);
        let settle = trace.first_time_below(1e-6).expect("settles inside horizon");
        assert!(settle < 40.0, "settled only at {settle}");
        let rate = trace.decay_rate().unwrap();
        assert!((-0.43..=-0.39).contains(&rate), "decay rate {rate}");
        assert!(trace.domain_violations().is_empty());
    }
}

// Trace bookkeeping on a randomized schedule: hybrid-time domain is sound,
// the jump log matches the jump counter, and no granted interval exceeds
// the schedule cap.
#[test]
fn random_schedule_trace_is_well_formed() {
    let sys = example2();
    let proto = ProtocolModel::tod(2).unwrap();
    let sched = Schedule::uniform_random(0.01, 0.3, 42, 20.0).unwrap();
    let trace = simulate(
        &NcsDynamics::Linear(sys),
        &proto,
        &sched,
        &DVector::from_column_slice(&[1.0, -1.0]),
        &DVector::from_column_slice(&[0.5, 0.25]),
        0.01,
    )
    .unwrap();
    assert!(trace.domain_violations().is_empty());
    let last = trace.points.last().unwrap();
    assert_eq!(last.j, trace.jumps.len());
    assert!(trace.max_interval() <= 0.3 + 1e-12);
    for jump in &trace.jumps {
        assert!(jump.granted < 2, "granted node out of range");
        assert!(jump.e_norm_after <= jump.e_norm_before + 1e-12);
    }
}

// Observed convergence order of the flow integrator (Richardson on the
// final state against a much finer reference).
#[test]
fn integrator_observed_order_is_fourth() {
    let sys = example2();
    let proto = ProtocolModel::tod(2).unwrap();
    let dynamics = NcsDynamics::Linear(sys);
    let x0 = DVector::from_column_slice(&[1.0, 0.0]);
    let e0 = DVector::from_column_slice(&[0.3, -0.2]);
    let sched = Schedule::constant(0.5, 1.0).unwrap();

    let final_state = |step: f64| -> DVector<f64> {
        let trace = simulate(&dynamics, &proto, &sched, &x0, &e0, step).unwrap();
        let p = trace.points.last().unwrap();
        let mut z = DVector::zeros(4);
        z.rows_mut(0, 2).copy_from(&p.x);
        z.rows_mut(2, 2).copy_from(&p.e);
        z
    };

    let reference = final_state(0.5 / 512.0);
    let err_coarse = (final_state(0.025) - &reference).norm();
    let err_fine = (final_state(0.0125) - &reference).norm();
    assert!(err_coarse > 1e-13, "coarse error too small to measure order");
    let order = (err_coarse / err_fine).log2();
    assert!(
        order >= 3.9,
        "observed order {order:.3} (errors {err_coarse:e} / {err_fine:e})"
    );
}

// Quartic storage function along the scalar loop sampled below its
// guarantee: the combined certificate decreases at every flow sample and
// across every reset.
#[test]
fn scalar_loop_monitor_reports_no_violations() {
    let dynamics = NcsDynamics::nonlinear_example1(1.0).unwrap();
    let sched = Schedule::constant(0.7, 40.0).unwrap();
    let trace = simulate(
        &dynamics,
        &ProtocolModel::sampled_data(),
        &sched,
        &DVector::from_column_slice(&[1.0]),
        &DVector::zeros(1),
        0.001,
    )
    .unwrap();
    let g = GainTriple::new(0.738, 1.544, 0.0).unwrap();
    let report = monitor_lyapunov(&trace, &StoredV::Quartic { c4: 0.3578, c2: 1.431 }, g).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.violations, 0);
    assert!((report.u0 - 1.7888).abs() < 1e-12);
    assert!(report.points_checked > 10_000);
    assert!(report.max_flow_increase.unwrap() <= 0.0);
    assert!(report.max_jump_increase.unwrap() <= 0.0);
}

// Quadratic witness from an actual sweep row, monitored along a randomized
// schedule capped at that row's certified interval.
#[test]
fn certified_witness_monitors_clean_on_random_schedule() {
    let sys = example2();
    let proto = ProtocolModel::tod(2).unwrap();
    let sweep = sweep_k(&sys, &proto, 0.5, 0.2).unwrap();
    let (row, cert) = sweep.best();
    assert!((row.k - 0.8).abs() < 1e-12);
    assert!((cert.tau_k - 0.184647).abs() < 1e-3);

    let sched = Schedule::uniform_random(1e-3, cert.tau_k, 5, 200.0).unwrap();
    let (x0, e0) = &unit_initial_conditions(2, 2, 1, 9)[0];
    let trace = simulate(&NcsDynamics::Linear(sys), &proto, &sched, x0, e0, 0.01).unwrap();
    let g = GainTriple::new(row.l_k, cert.gamma_k, proto.lambda).unwrap();
    let report =
        monitor_lyapunov(&trace, &StoredV::Quadratic(cert.p_witness.clone()), g).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.violations, 0);
    let settle = trace.first_time_below(1e-6).expect("settles inside horizon");
    assert!((settle - 31.1066).abs() < 0.01, "settled at {settle}");
}

// The monitor refuses traces whose intervals exceed the guarantee, instead
// of silently extrapolating the clock past its validity.
#[test]
fn monitor_rejects_trace_beyond_guarantee() {
    let dynamics = NcsDynamics::nonlinear_example1(1.0).unwrap();
    let sched = Schedule::constant(0.85, 5.0).unwrap();
    let trace = simulate(
        &dynamics,
        &ProtocolModel::sampled_data(),
        &sched,
        &DVector::from_column_slice(&[1.0]),
        &DVector::zeros(1),
        0.005,
    )
    .unwrap();
    let g = GainTriple::new(0.738, 1.544, 0.0).unwrap();
    let err = monitor_lyapunov(&trace, &StoredV::Quartic { c4: 0.3578, c2: 1.431 }, g);
    assert!(err.is_err(), "interval 0.85 exceeds the 0.7908 guarantee");
}

// Empirical contraction factors of the grant maps: largest-error-first
// attains exactly its analytic lambda, sampled-data resets everything, and
// round robin with the plain error norm admits a non-contracting grant.
#[test]
fn protocol_contraction_suprema() {
    let tod = verify_lambda(ProtocolKind::Tod, 2, 2000, 7).unwrap();
    assert!((tod - 0.5_f64.sqrt()).abs() < 1e-12, "tod sup {tod}");
    let sd = verify_lambda(ProtocolKind::SampledData, 1, 500, 7).unwrap();
    assert_eq!(sd, 0.0);
    let rr = verify_lambda(ProtocolKind::RoundRobin, 2, 2000, 7).unwrap();
    assert!((rr - 1.0).abs() < 1e-12, "round robin sup {rr}");
}
