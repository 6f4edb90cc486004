mod common;

use thermocloak::{solve_steady, solve_transient_ocp, ControlWeights, ScenarioParams, SolverOptions, TimeGrid};

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[test]
fn steady_solution_is_linear_in_intensity_and_obstacle_temperature() {
    let pb = common::coarse_problem();
    let w = ControlWeights::default();
    let a = solve_steady(&pb.ops, &ScenarioParams::new(2.0, 6e3, 0.0), &w).unwrap();
    let b = solve_steady(&pb.ops, &ScenarioParams::new(2.0, 0.0, 90.0), &w).unwrap();
    let c = solve_steady(&pb.ops, &ScenarioParams::new(2.0, 6e3, 90.0), &w).unwrap();
    for (x, y, z) in [(&a.z, &b.z, &c.z), (&a.q, &b.q, &c.q), (&a.p, &b.p, &c.p), (&a.u, &b.u, &c.u)] {
        assert!(common::max_rel(&sum(x, y), z) < 1e-9);
    }
}

#[test]
fn zero_data_gives_zero_solutions() {
    let pb = common::coarse_problem();
    let w = ControlWeights::default();
    let zero = ScenarioParams::new(2.0, 0.0, 0.0);
    let s = solve_steady(&pb.ops, &zero, &w).unwrap();
    assert!(s.u.iter().chain(&s.q).all(|v| *v == 0.0));
    assert_eq!(s.cost(), 0.0);
    let t = solve_transient_ocp(&pb.ops, &zero, &w, &TimeGrid::new(1.0, 5).unwrap(), &SolverOptions::default()).unwrap();
    assert!(t.converged);
    assert_eq!(t.log.len(), 1);
    assert!(t.u.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn control_improves_on_the_uncontrolled_tracking() {
    let pb = common::coarse_problem();
    let p = ScenarioParams::new(3.5, 1e4, 0.0);
    let s = solve_steady(&pb.ops, &p, &ControlWeights::default()).unwrap();
    let none = solve_steady(&pb.ops, &p, &ControlWeights::new(1e6, 0.0)).unwrap();
    assert!(s.tracking < 1e-2 * none.tracking, "{} vs {}", s.tracking, none.tracking);
}

#[test]
fn transient_controls_approach_the_steady_optimum() {
    let pb = common::coarse_problem();
    let p = ScenarioParams::new(3.5, 1e4, 0.0);
    let w = ControlWeights::default();
    let t = solve_transient_ocp(&pb.ops, &p, &w, &TimeGrid::new(5.0, 50).unwrap(), &SolverOptions::conjugate(1e-9, 300))
        .unwrap();
    assert!(t.converged);
    assert!(common::max_rel(&t.u[50], &t.steady.u) < 1e-8);
    assert!(common::max_rel(&t.q[50], &t.steady.q) < 5e-2);
    assert!(t.u[0].iter().all(|v| v.is_finite()));
}

#[test]
fn invalid_inputs_are_rejected() {
    let pb = common::coarse_problem();
    let w = ControlWeights::default();
    assert!(solve_steady(&pb.ops, &ScenarioParams::new(-1.0, 1e4, 0.0), &w).is_err());
    assert!(solve_steady(&pb.ops, &ScenarioParams::new(f64::NAN, 1e4, 0.0), &w).is_err());
    assert!(TimeGrid::new(0.0, 10).is_err());
    assert!(TimeGrid::new(1.0, 0).is_err());
}
