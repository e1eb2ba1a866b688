//! Reference solutions that do not go through the outer approximation
//! iteration: Dykstra's projection onto an intersection and exact pullbacks
//! `A⁻¹(Q)` for diagonal `A`.
//!
//! For `F(x) = x - a` the solution of `VI(F, S)` is the metric projection of
//! `a` onto `S`, which is what [`vi_solution_oracle_identity`] returns.

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, Vector};
use crate::sets::ConvexSet;
use crate::solver::{MonotoneKind, Problem};

pub const DEFAULT_ORACLE_TOL: f64 = 1e-10;
pub const DEFAULT_ORACLE_MAX_CYCLES: usize = 1_000_000;

/// Projection of `x` onto `∩ sets` by Dykstra's algorithm.
///
/// Terminates once a full cycle moves the iterate by at most `tol / 100`
/// and the returned point is within `tol` of every set.
pub fn dykstra_project(
    sets: &[ConvexSet],
    x: &Vector,
    tol: f64,
    max_cycles: usize,
) -> Result<Vector> {
    if sets.is_empty() {
        return Ok(x.clone());
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("oracle tolerance must be positive".into()));
    }
    if let [single] = sets {
        return single.project(x);
    }
    let mut current = x.clone();
    let mut increments = vec![Vector::zeros(x.len()); sets.len()];
    let mut gap = f64::INFINITY;
    for _ in 0..max_cycles {
        let start = current.clone();
        for (set, inc) in sets.iter().zip(increments.iter_mut()) {
            let shifted = &current + &*inc;
            let projected = set.project(&shifted)?;
            *inc = shifted - &projected;
            current = projected;
        }
        let moved = (&current - &start).norm();
        gap = feasibility_gap(sets, &current)?;
        if gap <= tol && moved <= 0.01 * tol {
            return Ok(current);
        }
    }
    Err(Error::OracleNonConvergence {
        iterations: max_cycles,
        gap,
    })
}

pub fn feasibility_gap(sets: &[ConvexSet], x: &Vector) -> Result<f64> {
    sets.iter()
        .try_fold(0.0f64, |acc, s| Ok(acc.max(s.distance(x)?)))
}

/// `A⁻¹(Q)` for square diagonal `A` and a box or half-space `Q`.
pub fn pullback(map: &LinearMap, q: &ConvexSet) -> Result<ConvexSet> {
    let diag = map
        .diagonal()
        .ok_or_else(|| Error::config("A", "pullback needs a square diagonal A"))?;
    if q.dim() != diag.len() {
        return Err(Error::shape("pullback", diag.len(), q.dim()));
    }
    match q {
        ConvexSet::Box { lo, hi } => {
            let n = diag.len();
            let mut new_lo = Vector::zeros(n);
            let mut new_hi = Vector::zeros(n);
            for i in 0..n {
                let d = diag[i];
                let (l, h) = if d > 0.0 {
                    (lo[i] / d, hi[i] / d)
                } else if d < 0.0 {
                    (hi[i] / d, lo[i] / d)
                } else if lo[i] <= 0.0 && 0.0 <= hi[i] {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    return Err(Error::config(
                        "A",
                        format!("zero diagonal entry {i} makes the pullback empty"),
                    ));
                };
                new_lo[i] = l;
                new_hi[i] = h;
            }
            ConvexSet::boxed(new_lo, new_hi)
        }
        ConvexSet::HalfSpace { a, beta } | ConvexSet::AffineSublevel { a, beta } => {
            let normal = Vector::from_fn(a.len(), |i, _| diag[i] * a[i]);
            if normal.iter().all(|&x| x == 0.0) {
                if *beta >= 0.0 {
                    let n = a.len();
                    return ConvexSet::boxed(
                        Vector::from_element(n, f64::NEG_INFINITY),
                        Vector::from_element(n, f64::INFINITY),
                    );
                }
                return Err(Error::config("A", "pullback of the half-space is empty"));
            }
            Ok(ConvexSet::HalfSpace {
                a: normal,
                beta: *beta,
            })
        }
        other => Err(Error::config(
            "Q",
            format!("no exact pullback for a {} set", other.kind()),
        )),
    }
}

/// Sets on the source space whose intersection is exactly `S`.
#[derive(Debug, Clone)]
pub struct OracleProblem {
    pub sets: Vec<ConvexSet>,
    pub point: Vector,
    pub tol: f64,
}

impl OracleProblem {
    /// Requires `F(x) = x - a` and a diagonal (or absent) `A`.
    pub fn from_problem(problem: &Problem, tol: f64) -> Result<Self> {
        let MonotoneKind::ToPoint { a } = problem.f().kind() else {
            return Err(Error::config("F", "oracle needs F of the form x - a"));
        };
        let mut sets = problem.c_sets().to_vec();
        if let Some(split) = problem.split() {
            for (j, q) in split.q_sets.iter().enumerate() {
                sets.push(pullback(&split.map, q).map_err(|e| e.within(&format!("Q[{j}]")))?);
            }
        }
        Ok(Self {
            sets,
            point: a.clone(),
            tol,
        })
    }

    pub fn solve(&self) -> Result<Vector> {
        dykstra_project(&self.sets, &self.point, self.tol, DEFAULT_ORACLE_MAX_CYCLES)
    }
}

/// `(max_i d(u, C_i), max_j d(Au, Q_j))`.
pub fn residuals(problem: &Problem, u: &Vector) -> Result<(f64, f64)> {
    problem.residuals(u)
}

/// Solution of `VI(x - a, S)`, that is `P_S(a)`, computed by Dykstra.
pub fn vi_solution_oracle_identity(problem: &Problem, tol: f64) -> Result<Vector> {
    OracleProblem::from_problem(problem, tol)?.solve()
}
