//! Outer approximation iteration
//!
//! ```text
//! u_{k+1} = u_k' + α_k (P_{H_k}(u_k') - u_k'),   u_k' = u_k - λ_k F(u_k)
//! H_k     = {z : <u_k - T_k(u_k), z - T_k(u_k)> <= 0}
//! ```
//!
//! with `T_k` a cutter whose fixed point set contains the feasible set `S`.
//! Each step needs one evaluation of `F`, one of `T_k` and a projection onto
//! a single half-space.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::composition::{
    alternating_phase, build_tk, build_uk, AlternatingPhase, BlockMode, Control, ControlKind,
    Variant, VariantConfig,
};
use crate::error::{Error, Result};
use crate::landweber::{Extrapolation, LandweberOp};
use crate::linalg::{
    ensure_dim, largest_eigenvalue_psd, norm_upper_bound, LinearMap, Matrix, Vector,
    DEFAULT_NORM_REL_TOL, MAX_POWER_ITERATIONS,
};
use crate::operators::{CutterOp, SubgradFn};
use crate::par::{self, Execution};
use crate::sets::{ConvexSet, HalfSpaceOrWhole};

/// `‖T_k(u_k) - u_k‖` at or below which `H_k` is the whole space.
pub const DEGENERATE_STEP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneKind {
    /// `F(x) = x - a`
    ToPoint { a: Vector },
    /// `F(x) = M x + q`
    Affine { m: Matrix, q: Vector },
}

/// Lipschitz continuous, strongly monotone map with certified constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap {
    kind: MonotoneKind,
    lipschitz: f64,
    strong_monotonicity: f64,
}

impl MonotoneMap {
    pub fn to_point(a: Vector) -> Result<Self> {
        crate::linalg::ensure_finite(&a, "target point")?;
        Ok(Self {
            kind: MonotoneKind::ToPoint { a },
            lipschitz: 1.0,
            strong_monotonicity: 1.0,
        })
    }

    /// `F(x) = M x + q`. `L` is an upper bound on `‖M‖` and the strong
    /// monotonicity constant a lower bound on the smallest eigenvalue of the
    /// symmetric part of `M`, which must be positive.
    pub fn affine(m: Matrix, q: Vector) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::config("M", "affine map must be square"));
        }
        ensure_dim("MonotoneMap::affine", m.nrows(), q.len())?;
        if !m.iter().chain(q.iter()).all(|x| x.is_finite()) {
            return Err(Error::config("M", "affine map has non-finite entries"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        if sym.iter().all(|&x| x == 0.0) {
            return Err(Error::config(
                "M",
                "symmetric part of M is zero; F is not strongly monotone",
            ));
        }
        let lipschitz = norm_upper_bound(&m, DEFAULT_NORM_REL_TOL)?;
        // λ_min(S) = σ - λ_max(σI - S) with σ >= ‖S‖
        let shift = norm_upper_bound(&sym, DEFAULT_NORM_REL_TOL)?;
        let n = m.nrows();
        let shifted = Matrix::identity(n, n) * shift - &sym;
        let top = largest_eigenvalue_psd(&shifted, DEFAULT_NORM_REL_TOL, MAX_POWER_ITERATIONS);
        let top_upper = top * (1.0 + DEFAULT_NORM_REL_TOL) + shift * DEFAULT_NORM_REL_TOL;
        let strong_monotonicity = shift - top_upper;
        if !(strong_monotonicity > 0.0) {
            return Err(Error::config(
                "M",
                format!("M is not strongly monotone: λ_min((M+Mᵀ)/2) <= {strong_monotonicity:e}"),
            ));
        }
        Ok(Self {
            kind: MonotoneKind::Affine { m, q },
            lipschitz,
            strong_monotonicity,
        })
    }

    pub fn kind(&self) -> &MonotoneKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            MonotoneKind::ToPoint { a } => a.len(),
            MonotoneKind::Affine { q, .. } => q.len(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn strong_monotonicity(&self) -> f64 {
        self.strong_monotonicity
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        ensure_dim("MonotoneMap::eval", self.dim(), x.len())?;
        Ok(match &self.kind {
            MonotoneKind::ToPoint { a } => x - a,
            MonotoneKind::Affine { m, q } => m * x + q,
        })
    }

    /// `u - λ F(u)`.
    pub fn gradient_step(&self, u: &Vector, lambda: f64) -> Result<Vector> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!(
                "step size must be nonnegative, got {lambda}"
            )));
        }
        if lambda == 0.0 {
            return Ok(u.clone());
        }
        Ok(u - self.eval(u)? * lambda)
    }
}

/// `λ_k = λ₀ / (k + 1)^p` with `p ∈ (0, 1]`: null and non-summable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    lambda0: f64,
    p: f64,
}

impl StepSchedule {
    pub fn new(lambda0: f64, p: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::config("lambda0", "lambda0 must be positive"));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::config("p", "p must lie in (0,1]"));
        }
        Ok(Self { lambda0, p })
    }

    pub fn lambda(&self, k: usize) -> f64 {
        let base = (k + 1) as f64;
        if self.p == 1.0 {
            self.lambda0 / base
        } else {
            self.lambda0 / base.powf(self.p)
        }
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            p: 1.0,
        }
    }
}

/// Constant relaxation `α ∈ [ε, 2 - ε]` of the half-space projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    alpha: f64,
    epsilon: f64,
}

impl Relaxation {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::config("epsilon", "epsilon must lie in (0,1)"));
        }
        if !(alpha >= epsilon && alpha <= 2.0 - epsilon) {
            return Err(Error::config(
                "alpha",
                format!("alpha must lie in [{epsilon}, {}]", 2.0 - epsilon),
            ));
        }
        Ok(Self { alpha, epsilon })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for Relaxation {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iter: usize,
    /// Stop once `‖u_{k+1} - u_k‖` is at most this and both residuals are
    /// below `tol_residual`. Zero disables the early exit in practice.
    pub tol_step: f64,
    pub tol_residual: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol_step: 0.0,
            tol_residual: 1e-9,
        }
    }
}

/// The target-space half of a split problem.
#[derive(Debug, Clone)]
pub struct Split {
    pub map: Arc<LinearMap>,
    pub q_sets: Vec<ConvexSet>,
}

/// `VI(F, S)` with `S = C ∩ A⁻¹(Q)`, or `S = C` without a split part.
#[derive(Debug, Clone)]
pub struct Problem {
    c_sets: Vec<ConvexSet>,
    split: Option<Split>,
    f: MonotoneMap,
}

fn set_operator(set: &ConvexSet) -> CutterOp {
    match set.sublevel_fn() {
        Some(f) if set.is_sublevel() => CutterOp::subgradient_projection(f),
        _ => CutterOp::projection(set.clone()),
    }
}

impl Problem {
    pub fn new(c_sets: Vec<ConvexSet>, split: Option<Split>, f: MonotoneMap) -> Result<Self> {
        let d1 = f.dim();
        for (i, set) in c_sets.iter().enumerate() {
            if set.dim() != d1 {
                return Err(Error::config(
                    format!("C[{i}]"),
                    format!("set has dimension {}, expected {d1}", set.dim()),
                ));
            }
        }
        let split = match split {
            Some(s) if s.q_sets.is_empty() => None,
            other => other,
        };
        if let Some(s) = &split {
            if s.map.cols() != d1 {
                return Err(Error::config(
                    "A",
                    format!("A has {} columns, expected {d1}", s.map.cols()),
                ));
            }
            if s.map.is_zero() {
                return Err(Error::config("A", "Landweber requires nonzero A"));
            }
            for (j, set) in s.q_sets.iter().enumerate() {
                if set.dim() != s.map.rows() {
                    return Err(Error::config(
                        format!("Q[{j}]"),
                        format!("set has dimension {}, expected {}", set.dim(), s.map.rows()),
                    ));
                }
            }
        }
        if c_sets.is_empty() && split.is_none() {
            return Err(Error::config(
                "C",
                "problem needs at least one constraint set",
            ));
        }
        Ok(Self { c_sets, split, f })
    }

    /// Pure feasibility problem `S = ∩ C_i`.
    pub fn feasibility(c_sets: Vec<ConvexSet>, f: MonotoneMap) -> Result<Self> {
        Self::new(c_sets, None, f)
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn c_sets(&self) -> &[ConvexSet] {
        &self.c_sets
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn f(&self) -> &MonotoneMap {
        &self.f
    }

    /// Cutters `U_i` with `fix U_i = C_i`: subgradient projections for
    /// sublevel sets, metric projections otherwise.
    pub fn c_operators(&self) -> Vec<CutterOp> {
        self.c_sets.iter().map(set_operator).collect()
    }

    pub fn q_operators(&self) -> Vec<CutterOp> {
        self.split
            .as_ref()
            .map(|s| s.q_sets.iter().map(set_operator).collect())
            .unwrap_or_default()
    }

    /// `(max_i d(u, C_i), max_j d(Au, Q_j))`, zero for empty families.
    pub fn residuals(&self, u: &Vector) -> Result<(f64, f64)> {
        let mut dc: f64 = 0.0;
        for set in &self.c_sets {
            dc = dc.max(set.distance(u)?);
        }
        let mut dq: f64 = 0.0;
        if let Some(s) = &self.split {
            let au = s.map.apply(u)?;
            for set in &s.q_sets {
                dq = dq.max(set.distance(&au)?);
            }
        }
        Ok((dc, dq))
    }

    /// Subgradient functions of the target sets that have one, for the
    /// linearized half-space construction.
    pub fn q_sublevel_fns(&self) -> Vec<Option<SubgradFn>> {
        self.split
            .as_ref()
            .map(|s| s.q_sets.iter().map(ConvexSet::sublevel_fn).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub lambda_k: f64,
    #[serde(rename = "stepNorm")]
    pub step_norm: f64,
    #[serde(rename = "maxDistC")]
    pub max_dist_c: f64,
    #[serde(rename = "maxDistQ")]
    pub max_dist_q: f64,
    #[serde(rename = "distToRef")]
    pub dist_to_ref: Option<f64>,
    #[serde(rename = "tkResidual")]
    pub tk_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub u: Vector,
    pub lambda: f64,
    pub alpha: f64,
    pub last_halfspace: HalfSpaceOrWhole,
    pub trace: Vec<TraceRecord>,
}

impl SolverState {
    pub fn new(u0: Vector) -> Self {
        Self {
            k: 0,
            u: u0,
            lambda: 0.0,
            alpha: 1.0,
            last_halfspace: HalfSpaceOrWhole::Whole,
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub lambda: f64,
    pub alpha: f64,
}

/// `H_k` from the cutter image, with `‖T_k(u) - u‖`.
pub fn outer_halfspace(u: &Vector, tk: &CutterOp) -> Result<(HalfSpaceOrWhole, f64)> {
    let t = tk.apply(u)?;
    let residual = (&t - u).norm();
    Ok((
        HalfSpaceOrWhole::through(u, &t, DEGENERATE_STEP_TOL),
        residual,
    ))
}

/// One step with `T_k` given; appends a trace record.
pub fn oam_step(
    state: &mut SolverState,
    problem: &Problem,
    tk: &CutterOp,
    params: StepParams,
    reference: Option<&Vector>,
) -> Result<()> {
    let (h, tk_residual) = outer_halfspace(&state.u, tk)?;
    advance(state, problem, h, tk_residual, params, reference)
}

fn advance(
    state: &mut SolverState,
    problem: &Problem,
    h: HalfSpaceOrWhole,
    tk_residual: f64,
    params: StepParams,
    reference: Option<&Vector>,
) -> Result<()> {
    let v = problem.f.gradient_step(&state.u, params.lambda)?;
    let next = if h.is_whole() {
        v
    } else {
        let pv = h.project(&v)?;
        if params.alpha == 1.0 {
            pv
        } else {
            &v + (pv - &v) * params.alpha
        }
    };
    let (max_dist_c, max_dist_q) = problem.residuals(&state.u)?;
    let record = TraceRecord {
        k: state.k,
        lambda_k: params.lambda,
        step_norm: (&next - &state.u).norm(),
        max_dist_c,
        max_dist_q,
        dist_to_ref: reference.map(|r| (&state.u - r).norm()),
        tk_residual,
    };
    let finite = next.iter().all(|x| x.is_finite())
        && [record.step_norm, max_dist_c, max_dist_q, tk_residual]
            .iter()
            .all(|x| x.is_finite());
    state.trace.push(record);
    if !finite {
        return Err(Error::Divergence {
            k: state.k,
            message: "iterate is no longer finite".into(),
            trace: Box::new(std::mem::take(&mut state.trace)),
        });
    }
    state.u = next;
    state.lambda = params.lambda;
    state.alpha = params.alpha;
    state.last_halfspace = h;
    state.k += 1;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub variant: VariantConfig,
    pub block_mode: BlockMode,
    pub control_c: ControlKind,
    pub control_q: ControlKind,
    pub schedule: StepSchedule,
    pub relaxation: Relaxation,
    pub stop: StopRule,
    pub u0: Option<Vector>,
    /// Build odd alternating half-spaces with σ = τ from `A` and `V_k`
    /// directly instead of from the operator image.
    pub explicit_landweber_halfspace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            variant: VariantConfig::new(Variant::Simultaneous { eta: 0.5 }),
            block_mode: BlockMode::simultaneous(),
            control_c: ControlKind::Full,
            control_q: ControlKind::Full,
            schedule: StepSchedule::default(),
            relaxation: Relaxation::default(),
            stop: StopRule::default(),
            u0: None,
            explicit_landweber_halfspace: true,
        }
    }
}

impl SolverOptions {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant: VariantConfig::new(variant),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    Converged,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub u: Vector,
    pub trace: Vec<TraceRecord>,
    pub stop_reason: StopReason,
    /// Landweber evaluations that fell back to σ = 1 or met a vanishing
    /// normal.
    pub degenerate_landweber: usize,
}

impl SolveOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// A configured solver: problem, operators and controls.
#[derive(Debug, Clone)]
pub struct Solver {
    problem: Problem,
    options: SolverOptions,
    c_ops: Vec<CutterOp>,
    q_ops: Vec<CutterOp>,
    control_c: Option<Control>,
    control_q: Option<Control>,
}

impl Solver {
    pub fn new(problem: Problem, options: SolverOptions) -> Result<Self> {
        options.variant.validate()?;
        if let Some(u0) = &options.u0 {
            ensure_dim("initial point", problem.dim(), u0.len())?;
        }
        let c_ops = problem.c_operators();
        let q_ops = problem.q_operators();
        let control_c = (!c_ops.is_empty())
            .then(|| Control::new(options.control_c.clone(), c_ops.len()))
            .transpose()
            .map_err(|e| e.within("control"))?;
        let control_q = (!q_ops.is_empty())
            .then(|| Control::new(options.control_q.clone(), q_ops.len()))
            .transpose()
            .map_err(|e| e.within("control"))?;
        let solver = Self {
            problem,
            options,
            c_ops,
            q_ops,
            control_c,
            control_q,
        };
        // surface configuration errors (rho bounds, block modes) before iterating
        solver.build_tk(0)?;
        if solver.options.variant.variant == Variant::Alternating {
            solver.build_tk(1)?;
        }
        Ok(solver)
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    fn inner_index(&self, k: usize) -> usize {
        match self.options.variant.variant {
            Variant::Alternating => alternating_phase(k).0,
            _ => k,
        }
    }

    /// `U_k` for inner index `k`.
    pub fn build_uk(&self, k: usize) -> Result<Option<CutterOp>> {
        match &self.control_c {
            Some(control) => Ok(Some(
                build_uk(&self.c_ops, control, &self.options.block_mode, k)?.0,
            )),
            None => Ok(None),
        }
    }

    /// Landweber transform of `V_k` for inner index `k`.
    pub fn build_vk(&self, k: usize) -> Result<Option<LandweberOp>> {
        match (&self.control_q, self.problem.split()) {
            (Some(control), Some(split)) => {
                let (vk, _) = build_uk(&self.q_ops, control, &self.options.block_mode, k)?;
                Ok(Some(LandweberOp::new(
                    vk,
                    Arc::clone(&split.map),
                    self.options.variant.sigma,
                )?))
            }
            _ => Ok(None),
        }
    }

    /// `T_k` for global step `k`.
    pub fn build_tk(&self, k: usize) -> Result<CutterOp> {
        let inner = self.inner_index(k);
        let uk = self.build_uk(inner)?;
        let vk = self.build_vk(inner)?;
        build_tk(&self.options.variant, uk.as_ref(), vk.as_ref(), k)
    }

    pub fn initial_state(&self) -> SolverState {
        SolverState::new(
            self.options
                .u0
                .clone()
                .unwrap_or_else(|| Vector::zeros(self.problem.dim())),
        )
    }

    /// One outer approximation step from `state`. Returns the number of
    /// degenerate Landweber evaluations it met.
    pub fn step(&self, state: &mut SolverState, reference: Option<&Vector>) -> Result<usize> {
        let k = state.k;
        let params = StepParams {
            lambda: self.options.schedule.lambda(k),
            alpha: self.options.relaxation.alpha(),
        };
        let inner = self.inner_index(k);
        let uk = self.build_uk(inner)?;
        let vk = self.build_vk(inner)?;
        let tk = build_tk(&self.options.variant, uk.as_ref(), vk.as_ref(), k)?;

        let explicit = self.options.explicit_landweber_halfspace
            && self.options.variant.variant == Variant::Alternating
            && self.options.variant.sigma == Extrapolation::Tau
            && uk.is_some()
            && alternating_phase(k).1 == AlternatingPhase::Target;
        match (&vk, explicit) {
            (Some(v), true) => {
                let t = tk.apply(&state.u)?;
                let residual = (&t - &state.u).norm();
                let h = v.halfspace(&state.u)?;
                advance(state, &self.problem, h, residual, params, reference)?;
            }
            _ => oam_step(state, &self.problem, &tk, params, reference)?,
        }
        Ok(vk.map_or(0, |v| v.degenerate_count()))
    }

    pub fn solve(&self, reference: Option<&Vector>) -> Result<SolveOutput> {
        let mut state = self.initial_state();
        let stop = self.options.stop;
        let mut degenerate = 0;
        let mut stop_reason = StopReason::MaxIter;
        while state.k < stop.max_iter {
            degenerate += self.step(&mut state, reference)?;
            let last = state.trace.last().expect("step appends a record");
            if last.max_dist_c <= stop.tol_residual
                && last.max_dist_q <= stop.tol_residual
                && last.step_norm <= stop.tol_step
            {
                stop_reason = StopReason::Converged;
                break;
            }
        }
        if degenerate > 0 {
            log::warn!("{degenerate} Landweber evaluations hit a residual in the null space of Aᵀ");
        }
        Ok(SolveOutput {
            u: state.u,
            trace: state.trace,
            stop_reason,
            degenerate_landweber: degenerate,
        })
    }
}

/// Runs `solver.solve(reference)` for every problem.
pub fn solve_batch(jobs: &[(Solver, Option<Vector>)], exec: Execution) -> Vec<Result<SolveOutput>> {
    par::map(exec, jobs, |(solver, reference)| {
        solver.solve(reference.as_ref())
    })
}
