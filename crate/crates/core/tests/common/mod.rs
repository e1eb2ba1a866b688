#![allow(dead_code)]

use std::sync::Arc;

use oam_core::composition::Variant;
use oam_core::linalg::{vector, LinearMap, Vector};
use oam_core::oracle::{OracleProblem, DEFAULT_ORACLE_TOL};
use oam_core::sets::ConvexSet;
use oam_core::solver::{MonotoneMap, Problem, Solver, SolverOptions, Split, StopRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VARIANTS: [Variant; 3] = [
    Variant::Product,
    Variant::Simultaneous { eta: 0.5 },
    Variant::Alternating,
];

pub fn variant_name(v: &Variant) -> &'static str {
    match v {
        Variant::Product => "product",
        Variant::Simultaneous { .. } => "simultaneous",
        Variant::Alternating => "alternating",
    }
}

/// `{z₁ <= 0} ∩ {z₂ <= 0}` with `F(x) = x - (1, 1)`.
pub fn quadrant() -> Problem {
    Problem::feasibility(
        vec![
            ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0).unwrap(),
            ConvexSet::half_space(vector(&[0.0, 1.0]), 0.0).unwrap(),
        ],
        MonotoneMap::to_point(vector(&[1.0, 1.0])).unwrap(),
    )
    .unwrap()
}

/// Box `[-1, 0]²`, `Q = {y₁ <= 0}`, `A = diag(2, 1)`, `F(x) = x - (1, -0.5)`.
/// The solution is `(0, -0.5)`.
pub fn diagonal_split() -> Problem {
    Problem::new(
        vec![ConvexSet::boxed(vector(&[-1.0, -1.0]), vector(&[0.0, 0.0])).unwrap()],
        Some(Split {
            map: Arc::new(LinearMap::from_diagonal(&[2.0, 1.0]).unwrap()),
            q_sets: vec![ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0).unwrap()],
        }),
        MonotoneMap::to_point(vector(&[1.0, -0.5])).unwrap(),
    )
    .unwrap()
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 {
            return v / n;
        }
    }
}

/// Three boxes and two half-spaces, all containing `center`.
fn sets_around(rng: &mut ChaCha8Rng, center: &Vector) -> Vec<ConvexSet> {
    let d = center.len();
    let mut sets = Vec::new();
    for _ in 0..3 {
        let lo = Vector::from_fn(d, |i, _| center[i] - rng.random_range(0.05..1.0));
        let hi = Vector::from_fn(d, |i, _| center[i] + rng.random_range(0.05..1.0));
        sets.push(ConvexSet::boxed(lo, hi).unwrap());
    }
    for _ in 0..2 {
        let a = random_unit(rng, d);
        let beta = a.dot(center) + rng.random_range(0.0..0.5);
        sets.push(ConvexSet::half_space(a, beta).unwrap());
    }
    sets
}

/// Random split problem on `ℝ^d`, feasible by construction: a hidden point
/// `x0` lies in every `C_i` and `A x0` in every `Q_j`.
pub fn random_split(seed: u64, d: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let diag: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let map = LinearMap::from_diagonal(&diag).unwrap();
    let y0 = map.apply(&x0).unwrap();
    let c_sets = sets_around(&mut rng, &x0);
    let q_sets = sets_around(&mut rng, &y0);
    let a = Vector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
    Problem::new(
        c_sets,
        Some(Split {
            map: Arc::new(map),
            q_sets,
        }),
        MonotoneMap::to_point(a).unwrap(),
    )
    .unwrap()
}

pub fn solver(problem: Problem, variant: Variant, max_iter: usize) -> Solver {
    let mut options = SolverOptions::with_variant(variant);
    options.stop = StopRule {
        max_iter,
        tol_step: 0.0,
        tol_residual: 0.0,
    };
    Solver::new(problem, options).unwrap()
}

pub fn oracle(problem: &Problem) -> Vector {
    OracleProblem::from_problem(problem, DEFAULT_ORACLE_TOL)
        .unwrap()
        .solve()
        .unwrap()
}
