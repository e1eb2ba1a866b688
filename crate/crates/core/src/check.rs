//! Sampled invariant suites for a configured solver.
//!
//! Every suite draws its points from a seeded generator, so a report is
//! reproducible from `(config, samples, seed)`. Points of `S` come from
//! Dykstra's algorithm when all target sets have exact pullbacks and from
//! iterating the cutters `T_k` otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::landweber::{
    subgrad_landweber_halfspace, subgrad_landweber_halfspace_project, LandweberOp,
};
use crate::linalg::Vector;
use crate::operators::{
    cutter_check, sqne_check_with, CutterOp, InequalityReport, CUTTER_TOL, SQNE_TOL,
};
use crate::oracle::{dykstra_project, feasibility_gap, pullback};
use crate::par::{self, Execution};
use crate::sets::ConvexSet;
use crate::solver::{outer_halfspace, Solver};

pub const TAU_TOL: f64 = 1e-12;
pub const HALFSPACE_TOL: f64 = 1e-9;
pub const FORMULA_TOL: f64 = 1e-12;
pub const FIXSET_TOL: f64 = 1e-8;

/// Points farther than this from a pulled-back set count as outside it.
/// Points between [`FIXSET_TOL`] and this distance are not sampled.
const FIXSET_OUTSIDE: f64 = 1e-6;
const FEASIBLE_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub samples: usize,
    pub seed: u64,
    /// Number of points of `S` used as fixed points.
    pub fixed_points: usize,
    pub exec: Execution,
}

impl CheckOptions {
    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Usage("samples must be positive".into()));
        }
        Ok(Self {
            samples,
            seed,
            fixed_points: 24,
            exec: Execution::default(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteResult {
    pub name: &'static str,
    pub max_violation: f64,
    pub tolerance: f64,
    pub evaluations: usize,
    pub passed: bool,
    /// Why the suite did not run, if it did not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl SuiteResult {
    fn skipped(name: &'static str, tolerance: f64, why: impl Into<String>) -> Self {
        Self {
            name,
            max_violation: f64::NEG_INFINITY,
            tolerance,
            evaluations: 0,
            passed: true,
            skipped: Some(why.into()),
        }
    }
}

#[derive(Debug, Default)]
struct Acc {
    max: f64,
    evaluations: usize,
}

impl Acc {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            evaluations: 0,
        }
    }

    fn push(&mut self, v: f64, count: usize) {
        if v > self.max || v.is_nan() {
            self.max = v;
        }
        self.evaluations += count;
    }

    fn report(&mut self, r: &InequalityReport) {
        self.push(r.max_violation, r.pairs);
    }

    fn finish(self, name: &'static str, tolerance: f64) -> SuiteResult {
        SuiteResult {
            name,
            max_violation: self.max,
            tolerance,
            evaluations: self.evaluations,
            passed: !(self.max > tolerance) && !self.max.is_nan(),
            skipped: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub samples: usize,
    pub seed: u64,
    pub feasible_points: usize,
    pub suites: Vec<SuiteResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

fn set_scale(set: &ConvexSet) -> f64 {
    match set {
        ConvexSet::HalfSpace { a, beta } | ConvexSet::AffineSublevel { a, beta } => {
            beta.abs() / a.norm()
        }
        ConvexSet::Box { lo, hi } => lo
            .iter()
            .chain(hi.iter())
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs())),
        ConvexSet::Ball { center, radius } => center.amax() + radius,
        ConvexSet::QuadSublevel { center, rsq } => center.amax() + rsq.max(0.0).sqrt(),
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    radius: f64,
}

impl Sampler {
    fn point(&mut self, dim: usize) -> Vector {
        let r = self.radius;
        Vector::from_fn(dim, |_, _| self.rng.random_range(-r..r))
    }

    fn points(&mut self, n: usize, dim: usize) -> Vec<Vector> {
        (0..n).map(|_| self.point(dim)).collect()
    }
}

/// Indices `k` at which the composed operators are sampled: two full
/// periods of both controls, capped.
fn sampled_steps(solver: &Solver) -> Vec<usize> {
    let m = solver.problem().c_sets().len();
    let n = solver.problem().split().map_or(0, |s| s.q_sets.len());
    (0..(2 * m.max(n).max(2)).min(32)).collect()
}

fn feasible_points(
    solver: &Solver,
    sampler: &mut Sampler,
    n: usize,
    exec: Execution,
) -> Result<Vec<Vector>> {
    let problem = solver.problem();
    let dim = problem.dim();
    let mut sets = problem.c_sets().to_vec();
    let mut exact = true;
    if let Some(split) = problem.split() {
        for q in &split.q_sets {
            match pullback(&split.map, q) {
                Ok(p) => sets.push(p),
                Err(_) => exact = false,
            }
        }
    }
    let starts = sampler.points(n, dim);
    let found = if exact {
        par::map(exec, &starts, |x| {
            let z = dykstra_project(&sets, x, 1e-12, 200_000).ok()?;
            (feasibility_gap(&sets, &z).ok()? <= FEASIBLE_GAP).then_some(z)
        })
    } else {
        let ops = (0..2 * sets.len().max(2))
            .map(|k| solver.build_tk(k))
            .collect::<Result<Vec<_>>>()?;
        par::map(exec, &starts, |x| {
            let mut z = x.clone();
            for k in 0..50_000 {
                z = ops[k % ops.len()].apply(&z).ok()?;
                if k % 16 == 0 {
                    let (c, q) = problem.residuals(&z).ok()?;
                    if c.max(q) <= FEASIBLE_GAP {
                        return Some(z);
                    }
                }
            }
            None
        })
    };
    Ok(found.into_iter().flatten().collect())
}

/// Runs every suite that applies to the solver's problem.
pub fn run_checks(solver: &Solver, opts: &CheckOptions) -> Result<CheckReport> {
    if opts.samples == 0 {
        return Err(Error::Usage("samples must be positive".into()));
    }
    let exec = opts.exec;
    let problem = solver.problem();
    let dim = problem.dim();
    let split = problem.split();
    let mut scale = problem
        .c_sets()
        .iter()
        .map(set_scale)
        .fold(1.0f64, f64::max);
    if let Some(s) = split {
        let dmin = s.map.norm_ub();
        scale = s
            .q_sets
            .iter()
            .map(|q| set_scale(q) / dmin)
            .fold(scale, f64::max);
    }
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        radius: 2.0 * scale.min(1e6),
    };

    let zs = feasible_points(solver, &mut sampler, opts.fixed_points, exec)?;
    let xs = sampler.points(opts.samples, dim);
    let ks = sampled_steps(solver);
    let no_s = "no point of S was found";

    let mut suites = Vec::new();

    // members: every U_i and V_i against points of its own set
    let mut members = Acc::new();
    for (i, (op, set)) in solver
        .problem()
        .c_operators()
        .iter()
        .zip(problem.c_sets())
        .enumerate()
    {
        let own = sampler.points(opts.fixed_points, dim);
        let own = own
            .iter()
            .map(|x| set.project(x))
            .collect::<Result<Vec<_>>>()?;
        let r = cutter_check(op, &own, &xs, exec).map_err(|e| e.within(&format!("C[{i}]")))?;
        members.report(&r);
    }
    if let Some(s) = split {
        let ys = sampler.points(opts.samples, s.map.rows());
        for (op, set) in problem.q_operators().iter().zip(&s.q_sets) {
            let own = sampler.points(opts.fixed_points, s.map.rows());
            let own = own
                .iter()
                .map(|y| set.project(y))
                .collect::<Result<Vec<_>>>()?;
            members.report(&cutter_check(op, &own, &ys, exec)?);
        }
    }
    suites.push(members.finish("cutter_members", CUTTER_TOL));

    let mut uks: Vec<CutterOp> = Vec::new();
    let mut vks: Vec<LandweberOp> = Vec::new();
    let mut tks: Vec<CutterOp> = Vec::new();
    for &k in &ks {
        if let Some(u) = solver.build_uk(k)? {
            uks.push(u);
        }
        if let Some(v) = solver.build_vk(k)? {
            vks.push(v);
        }
        tks.push(solver.build_tk(k)?);
    }

    if zs.is_empty() {
        for (name, tol) in [
            ("cutter_tk", CUTTER_TOL),
            ("sqne_blocks", SQNE_TOL),
            ("half_relaxation", CUTTER_TOL),
            ("halfspace_contains", HALFSPACE_TOL),
        ] {
            suites.push(SuiteResult::skipped(name, tol, no_s));
        }
    } else {
        let mut acc = Acc::new();
        for t in &tks {
            acc.report(&cutter_check(t, &zs, &xs, exec)?);
        }
        suites.push(acc.finish("cutter_tk", CUTTER_TOL));

        let landweber: Vec<CutterOp> = vks.iter().map(LandweberOp::to_cutter_op).collect();
        let mut sqne = Acc::new();
        let mut half = Acc::new();
        for op in uks.iter().chain(&landweber) {
            sqne.report(&sqne_check_with(op, op.rho(), &zs, &xs, exec)?);
            half.report(&cutter_check(&op.half_relaxed()?, &zs, &xs, exec)?);
        }
        suites.push(sqne.finish("sqne_blocks", SQNE_TOL));
        suites.push(half.finish("half_relaxation", CUTTER_TOL));

        let mut contains = Acc::new();
        for (i, t) in tks.iter().enumerate() {
            let us = &xs[..xs.len().min(64)];
            let rows = par::map(exec, us, |u| -> Result<f64> {
                let (h, _) = outer_halfspace(u, t)?;
                let mut worst = zs
                    .iter()
                    .map(|z| h.violation(z))
                    .fold(f64::NEG_INFINITY, f64::max);
                if let Some(v) = vks.get(i) {
                    let h = v.halfspace(u)?;
                    worst = zs.iter().map(|z| h.violation(z)).fold(worst, f64::max);
                }
                Ok(worst)
            });
            for r in rows {
                contains.push(r?, zs.len());
            }
        }
        suites.push(contains.finish("halfspace_contains", HALFSPACE_TOL));
    }

    match split {
        None => {
            for (name, tol) in [
                ("tau_at_least_one", TAU_TOL),
                ("halfspace_formula", FORMULA_TOL),
                ("landweber_fixset", FIXSET_TOL),
            ] {
                suites.push(SuiteResult::skipped(name, tol, "no split part"));
            }
        }
        Some(s) => {
            let mut tau = Acc::new();
            let mut formula = Acc::new();
            let sublevels = problem.q_sublevel_fns();
            for v in &vks {
                let rows = par::map(exec, &xs, |x| -> Result<(f64, f64)> {
                    let t = v.tau_at(x)?;
                    let u = x;
                    let y = x.map(|c| -c * 0.5);
                    let direct = v.halfspace_project(u, &y)?;
                    let generic = v.halfspace(u)?.project(&y)?;
                    let rel = (direct - generic).norm() / y.norm().max(1.0);
                    Ok((1.0 - t.value, rel))
                });
                for r in rows {
                    let (t, f) = r?;
                    tau.push(t, 1);
                    formula.push(f, 1);
                }
            }
            for q in sublevels.iter().flatten() {
                let rows = par::map(exec, &xs, |u| -> Result<f64> {
                    let y = u.map(|c| -c * 0.5);
                    let direct = subgrad_landweber_halfspace_project(q, &s.map, u, &y)?;
                    let generic = subgrad_landweber_halfspace(q, &s.map, u)?.project(&y)?;
                    Ok((direct - generic).norm() / y.norm().max(1.0))
                });
                for r in rows {
                    match r {
                        Ok(f) => formula.push(f, 1),
                        // an empty pulled-back sublevel set has no half-space
                        Err(Error::Infeasible(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            suites.push(tau.finish("tau_at_least_one", TAU_TOL));
            suites.push(formula.finish("halfspace_formula", FORMULA_TOL));

            if s.map.diagonal().is_none() {
                suites.push(SuiteResult::skipped(
                    "landweber_fixset",
                    FIXSET_TOL,
                    "A is not diagonal",
                ));
            } else {
                let mut acc = Acc::new();
                let mut any = false;
                for (op, q) in problem.q_operators().into_iter().zip(&s.q_sets) {
                    let Ok(pulled) = pullback(&s.map, q) else {
                        continue;
                    };
                    any = true;
                    let l = LandweberOp::new(op, s.map.clone(), solver.options().variant.sigma)?;
                    let rows = par::map_range(exec, xs.len(), |i| -> Result<Option<f64>> {
                        let x = if i % 2 == 0 {
                            pulled.project(&xs[i])?
                        } else {
                            xs[i].clone()
                        };
                        let d = pulled.distance(&x)?;
                        let moved = (l.apply(&x)? - &x).norm();
                        Ok(if d <= FIXSET_TOL {
                            Some(moved)
                        } else if d > FIXSET_OUTSIDE {
                            // a point outside the pullback must be moved
                            Some(if moved > FIXSET_TOL { 0.0 } else { 1.0 })
                        } else {
                            None
                        })
                    });
                    for r in rows {
                        if let Some(v) = r? {
                            acc.push(v, 1);
                        }
                    }
                }
                suites.push(if any {
                    acc.finish("landweber_fixset", FIXSET_TOL)
                } else {
                    SuiteResult::skipped(
                        "landweber_fixset",
                        FIXSET_TOL,
                        "no target set has an exact pullback",
                    )
                });
            }
        }
    }

    Ok(CheckReport {
        samples: opts.samples,
        seed: opts.seed,
        feasible_points: zs.len(),
        suites,
    })
}
