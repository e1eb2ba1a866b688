//! Acceptance criteria, one result line each.
//!
//! Run with `cargo test -p oam-core --test acceptance`. The process exits
//! with a failure status if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{diagonal_split, oracle, quadrant, random_split, solver, variant_name, VARIANTS};
use oam_core::check::{run_checks, CheckOptions};
use oam_core::landweber::subgrad_landweber_halfspace;
use oam_core::linalg::{vector, LinearMap, Vector};
use oam_core::operators::{CutterOp, SubgradFn};
use oam_core::par::Execution;
use oam_core::sets::{ConvexSet, HalfSpaceOrWhole};
use oam_core::solver::{solve_batch, MonotoneMap, Problem, Solver, SolverOptions};
use oam_core::LandweberOp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn dist(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm()
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_secs {
        Ok(())
    } else {
        Err(format!(
            "took {:.2}s, limit {limit_secs}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn final_iterates(problem: &Problem, max_iter: usize) -> Result<Vec<Vector>, String> {
    let jobs: Vec<(Solver, Option<Vector>)> = VARIANTS
        .iter()
        .map(|v| (solver(problem.clone(), *v, max_iter), None))
        .collect();
    solve_batch(&jobs, Execution::Parallel)
        .into_iter()
        .map(|r| r.map(|o| o.u).map_err(|e| e.to_string()))
        .collect()
}

fn oracle_convergence(problem: Problem, max_iter: usize, tol: f64, limit: f64) -> Outcome {
    let reference = oracle(&problem);
    let started = Instant::now();
    let finals = final_iterates(&problem, max_iter)?;
    let elapsed = started.elapsed();
    let mut worst = 0.0f64;
    for (v, u) in VARIANTS.iter().zip(&finals) {
        let d = dist(u, &reference);
        if d.is_nan() || d > tol {
            return Err(format!("{} ends {d:.2e} from the oracle", variant_name(v)));
        }
        worst = worst.max(d);
    }
    within(elapsed, limit)?;
    Ok(format!(
        "max distance {worst:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_1() -> Outcome {
    let r = oracle(&quadrant());
    if dist(&r, &vector(&[0.0, 0.0])) > 1e-10 {
        return Err(format!("oracle gives {r:?}"));
    }
    oracle_convergence(quadrant(), 10_000, 1e-2, 1.0)
}

fn criterion_2() -> Outcome {
    let r = oracle(&diagonal_split());
    if dist(&r, &vector(&[0.0, -0.5])) > 1e-10 {
        return Err(format!("oracle gives {r:?}"));
    }
    oracle_convergence(diagonal_split(), 100_000, 1e-2, 10.0)
}

const SEEDS: u64 = 10;

struct RandomRuns {
    /// Per seed: oracle and the final iterate of each variant.
    results: Vec<(Vector, Vec<Vector>)>,
    summary: Outcome,
}

fn criterion_3() -> RandomRuns {
    let started = Instant::now();
    let problems: Vec<Problem> = (0..SEEDS).map(|s| random_split(s, 20)).collect();
    let references: Vec<Vector> = problems.iter().map(oracle).collect();
    let jobs: Vec<(Solver, Option<Vector>)> = problems
        .iter()
        .flat_map(|p| {
            VARIANTS
                .iter()
                .map(|v| (solver(p.clone(), *v, 100_000), None))
        })
        .collect();
    let outputs = solve_batch(&jobs, Execution::Parallel);
    let elapsed = started.elapsed();

    let mut results = Vec::new();
    let mut failure = None;
    let (mut worst_res, mut worst_ref) = (0.0f64, 0.0f64);
    for (i, (problem, reference)) in problems.iter().zip(references).enumerate() {
        let mut finals = Vec::new();
        for (j, v) in VARIANTS.iter().enumerate() {
            let u = match &outputs[i * VARIANTS.len() + j] {
                Ok(o) => o.u.clone(),
                Err(e) => {
                    failure.get_or_insert(format!("seed {i} {}: {e}", variant_name(v)));
                    continue;
                }
            };
            let (c, q) = problem.residuals(&u).unwrap();
            let d = dist(&u, &reference);
            worst_res = worst_res.max(c).max(q);
            worst_ref = worst_ref.max(d);
            if !(c <= 1e-3 && q <= 1e-3 && d <= 5e-2) {
                failure.get_or_insert(format!(
                    "seed {i} {}: maxDistC {c:.2e}, maxDistQ {q:.2e}, oracle distance {d:.2e}",
                    variant_name(v)
                ));
            }
            finals.push(u);
        }
        results.push((reference, finals));
    }
    let summary = match (failure, within(elapsed, 60.0)) {
        (Some(f), _) => Err(f),
        (None, Err(e)) => Err(e),
        (None, Ok(())) => Ok(format!(
            "{SEEDS} seeds x 3 variants, worst residual {worst_res:.2e}, worst oracle distance {worst_ref:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        )),
    };
    RandomRuns { results, summary }
}

fn criterion_4() -> Outcome {
    let mut lines = Vec::new();
    let problems = [
        ("diagonal split", diagonal_split()),
        ("random split", random_split(0, 20)),
    ];
    for (name, problem) in problems {
        for v in VARIANTS {
            let solver = Solver::new(problem.clone(), SolverOptions::with_variant(v))
                .map_err(|e| e.to_string())?;
            let report = run_checks(&solver, &CheckOptions::new(1000, 42).unwrap())
                .map_err(|e| e.to_string())?;
            if report.feasible_points == 0 {
                return Err(format!("{name} {}: no feasible points", variant_name(&v)));
            }
            for s in &report.suites {
                if !s.passed || s.skipped.is_some() {
                    return Err(format!(
                        "{name} {}: {} worst {:.2e} (tol {:.0e}) {:?}",
                        variant_name(&v),
                        s.name,
                        s.max_violation,
                        s.tolerance,
                        s.skipped
                    ));
                }
            }
            lines.push(report.suites.len());
        }
    }
    Ok(format!(
        "{} suites on {} configurations",
        lines.iter().sum::<usize>(),
        lines.len()
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let map = std::sync::Arc::new(
        LinearMap::new(oam_core::Matrix::from_fn(3, 4, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap(),
    );
    let q = ConvexSet::boxed(vector(&[-0.5, -0.2, 0.0]), vector(&[0.5, 0.3, 1.0])).unwrap();
    let l = LandweberOp::new(CutterOp::projection(q), map, oam_core::Extrapolation::Tau).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let u = Vector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
        let x = Vector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
        let direct = l.halfspace_project(&u, &x).map_err(|e| e.to_string())?;
        let generic = l
            .halfspace(&u)
            .map_err(|e| e.to_string())?
            .project(&x)
            .map_err(|e| e.to_string())?;
        worst = worst.max(dist(&direct, &generic));
    }
    if worst > 1e-12 {
        return Err(format!(
            "Landweber half-space projection differs by {worst:.2e}"
        ));
    }

    let identity = LinearMap::identity(3).unwrap();
    let fns = [
        SubgradFn::affine(vector(&[1.0, -2.0, 0.5]), 0.3),
        SubgradFn::quadratic(vector(&[0.2, 0.0, -0.4]), 1.5),
    ];
    let mut checked = 0;
    for f in &fns {
        let op = CutterOp::subgradient_projection(f.clone());
        for _ in 0..1000 {
            let u = Vector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let lemma = subgrad_landweber_halfspace(f, &identity, &u).map_err(|e| e.to_string())?;
            let plain =
                HalfSpaceOrWhole::through(&u, &op.apply(&u).map_err(|e| e.to_string())?, 0.0);
            match (lemma, plain) {
                (HalfSpaceOrWhole::Whole, HalfSpaceOrWhole::Whole) => {}
                (
                    HalfSpaceOrWhole::Cut {
                        normal: n1,
                        offset: b1,
                    },
                    HalfSpaceOrWhole::Cut {
                        normal: n2,
                        offset: b2,
                    },
                ) => {
                    let (s1, s2) = (n1.norm(), n2.norm());
                    let parallel = (n1.dot(&n2) / (s1 * s2) - 1.0).abs();
                    let offsets = (b1 / s1 - b2 / s2).abs();
                    if parallel > 1e-12 || offsets > 1e-12 {
                        return Err(format!("subgradient half-spaces differ at {u:?}: {parallel:.1e}, {offsets:.1e}"));
                    }
                    checked += 1;
                }
                (a, b) => return Err(format!("structure mismatch at {u:?}: {a:?} vs {b:?}")),
            }
        }
    }
    Ok(format!(
        "projection gap {worst:.1e}; {checked} cut half-spaces matched"
    ))
}

fn criterion_6() -> Outcome {
    let expected = [
        [1.0, 0.0],
        [0.0, 0.0],
        [0.5, 0.0],
        [0.0, 0.0],
        [0.25, 0.0],
        [0.0, 0.0],
    ];
    for v in VARIANTS {
        let problem = Problem::feasibility(
            vec![ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0).unwrap()],
            MonotoneMap::to_point(vector(&[1.0, 0.0])).unwrap(),
        )
        .unwrap();
        let mut options = SolverOptions::with_variant(v);
        options.u0 = Some(vector(&[1.0, 0.0]));
        let solver = Solver::new(problem, options).map_err(|e| e.to_string())?;
        let mut state = solver.initial_state();
        let mut iterates = vec![state.u.clone()];
        let mut whole = Vec::new();
        for _ in 1..expected.len() {
            solver.step(&mut state, None).map_err(|e| e.to_string())?;
            iterates.push(state.u.clone());
            whole.push(state.last_halfspace.is_whole());
        }
        for (k, (u, e)) in iterates.iter().zip(expected).enumerate() {
            if dist(u, &vector(&e)) > 1e-14 {
                return Err(format!(
                    "{} u_{k} = {u:?}, expected {e:?}",
                    variant_name(&v)
                ));
            }
        }
        if whole != [false, true, false, true, false] {
            return Err(format!("{}: whole-space steps {whole:?}", variant_name(&v)));
        }
    }
    Ok("u_0..u_5 reproduced for all variants".into())
}

fn max_pairwise(finals: &[Vector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in finals.iter().enumerate() {
        for b in &finals[i + 1..] {
            worst = worst.max(dist(a, b));
        }
    }
    worst
}

fn criterion_7(random: &RandomRuns) -> Outcome {
    let finals = final_iterates(&diagonal_split(), 100_000)?;
    let mut worst = max_pairwise(&finals);
    if worst > 2e-2 {
        return Err(format!("diagonal split: variants {worst:.2e} apart"));
    }
    for (seed, (_, finals)) in random.results.iter().enumerate() {
        if finals.len() != VARIANTS.len() {
            return Err(format!("seed {seed}: a variant failed to run"));
        }
        let d = max_pairwise(finals);
        if d > 2e-2 {
            return Err(format!("seed {seed}: variants {d:.2e} apart"));
        }
        worst = worst.max(d);
    }
    Ok(format!("max pairwise distance {worst:.2e}"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, what: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("criterion {n} PASS  {what}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("criterion {n} FAIL  {what}: {why}");
        }
    };
    report(
        1,
        "feasibility problem converges to the oracle",
        criterion_1(),
    );
    report(
        2,
        "diagonal split problem converges to the oracle",
        criterion_2(),
    );
    let random = criterion_3();
    report(
        3,
        "random 20-dimensional split problems",
        random.summary.clone(),
    );
    report(4, "sampled invariant suites", criterion_4());
    report(5, "half-space formula cross-checks", criterion_5());
    report(6, "hand-traced degenerate steps", criterion_6());
    report(7, "variant agreement", criterion_7(&random));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
