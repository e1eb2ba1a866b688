mod common;

use common::{diagonal_split, oracle, quadrant, random_split, solver, VARIANTS};
use oam_core::check::{run_checks, CheckOptions};
use oam_core::par::Execution;
use oam_core::sets::HalfSpaceOrWhole;
use oam_core::solver::{solve_batch, Solver, SolverOptions};
use oam_core::Vector;

#[test]
fn solves_are_bitwise_deterministic() {
    for v in VARIANTS {
        let s = solver(random_split(3, 8), v, 2_000);
        let a = s.solve(None).unwrap();
        let b = s.solve(None).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.u, b.u);
    }
}

#[test]
fn batch_is_independent_of_execution_mode() {
    let jobs: Vec<(Solver, Option<Vector>)> = (0..4)
        .flat_map(|s| VARIANTS.map(|v| (solver(random_split(s, 6), v, 500), None)))
        .collect();
    let seq = solve_batch(&jobs, Execution::Sequential);
    let par = solve_batch(&jobs, Execution::Parallel);
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.as_ref().unwrap().trace, b.as_ref().unwrap().trace);
    }
}

#[test]
fn feasible_points_stay_inside_every_cut() {
    let problem = diagonal_split();
    let feasible = [
        Vector::from_vec(vec![0.0, -0.5]),
        Vector::from_vec(vec![-1.0, -1.0]),
        Vector::from_vec(vec![-0.3, 0.0]),
    ];
    for v in VARIANTS {
        let s = solver(problem.clone(), v, 0);
        let mut state = s.initial_state();
        state.u = Vector::from_vec(vec![2.0, 1.5]);
        for _ in 0..500 {
            s.step(&mut state, None).unwrap();
            if let HalfSpaceOrWhole::Cut { .. } = &state.last_halfspace {
                for z in &feasible {
                    assert!(state.last_halfspace.violation(z) <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn degenerate_steps_are_plain_gradient_steps() {
    let problem = quadrant();
    for v in VARIANTS {
        let s = solver(problem.clone(), v, 0);
        let mut state = s.initial_state();
        for _ in 0..200 {
            let before = state.u.clone();
            s.step(&mut state, None).unwrap();
            let rec = state.trace.last().unwrap();
            if rec.tk_residual == 0.0 {
                let expected = problem.f().gradient_step(&before, rec.lambda_k).unwrap();
                assert_eq!(state.u, expected);
            }
        }
    }
}

#[test]
fn iterates_stay_bounded_and_residuals_decay() {
    for problem in [quadrant(), diagonal_split(), random_split(1, 20)] {
        let reference = oracle(&problem);
        for v in VARIANTS {
            let out = solver(problem.clone(), v, 100_000)
                .solve(Some(&reference))
                .unwrap();
            let best = out
                .trace
                .iter()
                .map(|r| r.max_dist_c.max(r.max_dist_q))
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-3, "{v:?}: best residual {best}");
            assert!(out.trace.iter().all(|r| r.dist_to_ref.unwrap() <= 10.0));
            assert!((&out.u - &reference).norm() <= 5e-2);
        }
    }
}

#[test]
fn invariants_hold_with_sequential_execution() {
    let s = Solver::new(random_split(2, 10), SolverOptions::default()).unwrap();
    let mut opts = CheckOptions::new(300, 11).unwrap();
    opts.exec = Execution::Sequential;
    let seq = run_checks(&s, &opts).unwrap();
    opts.exec = Execution::Parallel;
    let par = run_checks(&s, &opts).unwrap();
    assert!(seq.passed());
    for (a, b) in seq.suites.iter().zip(&par.suites) {
        assert_eq!(
            a.max_violation.to_bits(),
            b.max_violation.to_bits(),
            "{}",
            a.name
        );
    }
}
