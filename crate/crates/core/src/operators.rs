//! Quasi-nonexpansive operators as composable values.
//!
//! Every [`CutterOp`] carries a certified modulus `rho`: for all `x` and all
//! fixed points `z`,
//!
//! ```text
//! ‖U(x) - z‖² <= ‖x - z‖² - rho ‖U(x) - x‖²
//! ```
//!
//! Cutters are exactly the operators for which this holds with `rho = 1`
//! together with `<z - U(x), x - U(x)> <= 0`. Builders that combine operators
//! derive the modulus of the result from the moduli of their inputs.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{ensure_dim, Vector};
use crate::par::{self, Execution};
use crate::sets::ConvexSet;

/// Violation above which an SQNE sample fails.
pub const SQNE_TOL: f64 = 1e-8;
/// Violation above which a cutter sample fails.
pub const CUTTER_TOL: f64 = 1e-9;

type EvalFn = dyn Fn(&Vector) -> Result<Vector> + Send + Sync;

/// Membership predicate for the fixed point set, `(z, tol) -> bool`. Only
/// the invariant checks consult it.
pub type FixWitness = Arc<dyn Fn(&Vector, f64) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct CutterOp {
    eval: Arc<EvalFn>,
    rho: f64,
    dim: usize,
    label: Arc<str>,
    fix_witness: Option<FixWitness>,
}

impl fmt::Debug for CutterOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CutterOp")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("rho", &self.rho)
            .finish()
    }
}

impl CutterOp {
    pub fn new<F>(dim: usize, rho: f64, label: impl Into<Arc<str>>, eval: F) -> Self
    where
        F: Fn(&Vector) -> Result<Vector> + Send + Sync + 'static,
    {
        debug_assert!(rho >= 0.0);
        Self {
            eval: Arc::new(eval),
            rho,
            dim,
            label: label.into(),
            fix_witness: None,
        }
    }

    pub fn with_witness(mut self, witness: FixWitness) -> Self {
        self.fix_witness = Some(witness);
        self
    }

    /// Metric projection onto `set`; firmly nonexpansive, so `rho = 1`.
    pub fn projection(set: ConvexSet) -> Self {
        let set = Arc::new(set);
        let witness_set = Arc::clone(&set);
        let label = format!("P[{}]", set.kind());
        Self::new(set.dim(), 1.0, label, move |x| set.project(x)).with_witness(Arc::new(
            move |z, tol| witness_set.contains(z, tol).unwrap_or(false),
        ))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, 1.0, "Id", |x| Ok(x.clone())).with_witness(Arc::new(|_, _| true))
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        ensure_dim("CutterOp::apply", self.dim, x.len())?;
        (self.eval)(x)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn fix_witness(&self) -> Option<&FixWitness> {
        self.fix_witness.as_ref()
    }

    /// Whether the certified modulus makes this a cutter.
    pub fn is_cutter(&self) -> bool {
        self.rho >= 1.0
    }

    /// `x ↦ x + alpha (U(x) - x)`.
    ///
    /// The fixed point set is unchanged. A `rho`-SQNE operator relaxed by
    /// `alpha` is `((1 + rho) / alpha - 1)`-SQNE, so `alpha` may not exceed
    /// `1 + rho`; `alpha = (1 + rho) / 2` yields a cutter.
    pub fn relax(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "relaxation parameter must be positive, got {alpha}"
            )));
        }
        let limit = 1.0 + self.rho;
        if alpha > limit * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "relaxation {alpha} exceeds 1 + rho = {limit}; the result is not quasi-nonexpansive"
            )));
        }
        if alpha == 1.0 {
            return Ok(self.clone());
        }
        let rho = (limit / alpha - 1.0).max(0.0);
        let inner = self.clone();
        let mut out = Self::new(
            self.dim,
            rho,
            format!("relax({}, {alpha})", self.label),
            move |x| {
                let ux = inner.apply(x)?;
                Ok(x + (ux - x) * alpha)
            },
        );
        out.fix_witness = self.fix_witness.clone();
        Ok(out)
    }

    /// The relaxation `(1 + rho) / 2` that turns this operator into a cutter.
    pub fn half_relaxed(&self) -> Result<Self> {
        self.relax((1.0 + self.rho) / 2.0)
    }

    /// `x ↦ x - f(x) / ‖g(x)‖² g(x)` where `f(x) > 0`, identity elsewhere.
    /// A cutter with fixed point set `{f <= 0}`.
    pub fn subgradient_projection(f: SubgradFn) -> Self {
        let f = Arc::new(f);
        let witness = Arc::clone(&f);
        Self::new(f.dim(), 1.0, "Psub", move |x| f.project(x))
            .with_witness(Arc::new(move |z, tol| witness.value(z) <= tol))
    }

    pub fn proximal(f: ProxFn) -> Self {
        let f = Arc::new(f);
        let witness = Arc::clone(&f);
        Self::new(f.dim(), 1.0, "prox", move |x| f.prox(x))
            .with_witness(Arc::new(move |z, tol| witness.distance_to_argmin(z) <= tol))
    }
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// Convex function with a subgradient oracle.
#[derive(Clone)]
pub struct SubgradFn {
    dim: usize,
    value: Arc<ValueFn>,
    subgrad: Arc<GradFn>,
}

impl fmt::Debug for SubgradFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubgradFn").field("dim", &self.dim).finish()
    }
}

impl SubgradFn {
    pub fn new<V, G>(dim: usize, value: V, subgrad: G) -> Self
    where
        V: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self {
            dim,
            value: Arc::new(value),
            subgrad: Arc::new(subgrad),
        }
    }

    /// `f(x) = <a, x> - beta`.
    pub fn affine(a: Vector, beta: f64) -> Self {
        let grad = a.clone();
        Self::new(a.len(), move |x| a.dot(x) - beta, move |_| grad.clone())
    }

    /// `f(x) = ‖x - center‖² - rsq`.
    pub fn quadratic(center: Vector, rsq: f64) -> Self {
        let c = center.clone();
        Self::new(
            center.len(),
            move |x| (x - &center).norm_squared() - rsq,
            move |x| (x - &c) * 2.0,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn subgradient(&self, x: &Vector) -> Vector {
        (self.subgrad)(x)
    }

    /// Subgradient projection of `x` onto `{f <= 0}`.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        ensure_dim("SubgradFn::project", self.dim, x.len())?;
        let fx = self.value(x);
        if fx <= 0.0 {
            return Ok(x.clone());
        }
        let g = self.subgradient(x);
        let gg = g.norm_squared();
        if gg == 0.0 {
            return Err(Error::Infeasible(
                "zero subgradient where f > 0: the sublevel set is empty".into(),
            ));
        }
        Ok(x - g * (fx / gg))
    }
}

/// Functions with a closed-form proximal map.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxFn {
    /// `f(y) = ½‖y - center‖²`
    HalfSquaredDistance { center: Vector },
    /// `f(y) = gamma ‖y - center‖₁`
    ShiftedL1 { gamma: f64, center: Vector },
    /// `f ≡ 0` on `R^dim`
    Zero { dim: usize },
}

impl ProxFn {
    pub fn dim(&self) -> usize {
        match self {
            Self::HalfSquaredDistance { center } | Self::ShiftedL1 { center, .. } => center.len(),
            Self::Zero { dim } => *dim,
        }
    }

    /// `argmin_y f(y) + ½‖y - x‖²`.
    pub fn prox(&self, x: &Vector) -> Result<Vector> {
        ensure_dim("ProxFn::prox", self.dim(), x.len())?;
        Ok(match self {
            Self::HalfSquaredDistance { center } => (x + center) * 0.5,
            Self::ShiftedL1 { gamma, center } => {
                // soft threshold; |v| == gamma lands on 0
                Vector::from_fn(x.len(), |i, _| {
                    let v = x[i] - center[i];
                    center[i] + v.signum() * (v.abs() - gamma).max(0.0)
                })
            }
            Self::Zero { .. } => x.clone(),
        })
    }

    pub fn value(&self, y: &Vector) -> f64 {
        match self {
            Self::HalfSquaredDistance { center } => 0.5 * (y - center).norm_squared(),
            Self::ShiftedL1 { gamma, center } => gamma * (y - center).lp_norm(1),
            Self::Zero { .. } => 0.0,
        }
    }

    pub fn distance_to_argmin(&self, z: &Vector) -> f64 {
        match self {
            Self::HalfSquaredDistance { center } | Self::ShiftedL1 { center, .. } => {
                (z - center).norm()
            }
            Self::Zero { .. } => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ShiftedL1 { gamma, .. } if !(*gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::config("gamma", "l1 weight must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Worst violation of a sampled operator inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    pub max_violation: f64,
    /// `(z index, x index)` of the worst pair.
    pub worst: Option<(usize, usize)>,
    pub pairs: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl InequalityReport {
    fn from_violations(rows: Vec<(f64, usize)>, pairs: usize, tolerance: f64) -> Self {
        let mut max_violation = f64::NEG_INFINITY;
        let mut worst = None;
        for (x_idx, (v, z_idx)) in rows.into_iter().enumerate() {
            if v > max_violation || v.is_nan() {
                max_violation = v;
                worst = Some((z_idx, x_idx));
            }
        }
        Self {
            max_violation,
            worst,
            pairs,
            tolerance,
            passed: max_violation <= tolerance,
        }
    }
}

fn check_pairs<F>(
    op: &CutterOp,
    zs: &[Vector],
    xs: &[Vector],
    tolerance: f64,
    exec: Execution,
    violation: F,
) -> Result<InequalityReport>
where
    F: Fn(&Vector, &Vector, &Vector) -> f64 + Sync + Send,
{
    if zs.is_empty() {
        return Err(Error::Usage("no fixed points supplied".into()));
    }
    let rows = par::map(exec, xs, |x| -> Result<(f64, usize)> {
        let ux = op.apply(x)?;
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, z) in zs.iter().enumerate() {
            let v = violation(x, &ux, z);
            if v > best.0 || v.is_nan() {
                best = (v, j);
            }
        }
        Ok(best)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(InequalityReport::from_violations(
        rows,
        zs.len() * xs.len(),
        tolerance,
    ))
}

/// Largest value of `‖U(x)-z‖² - ‖x-z‖² + rho ‖U(x)-x‖²` over all pairs.
pub fn sqne_check(op: &CutterOp, zs: &[Vector], xs: &[Vector]) -> Result<InequalityReport> {
    sqne_check_with(op, op.rho(), zs, xs, Execution::default())
}

pub fn sqne_check_with(
    op: &CutterOp,
    rho: f64,
    zs: &[Vector],
    xs: &[Vector],
    exec: Execution,
) -> Result<InequalityReport> {
    check_pairs(op, zs, xs, SQNE_TOL, exec, |x, ux, z| {
        (ux - z).norm_squared() - (x - z).norm_squared() + rho * (ux - x).norm_squared()
    })
}

/// Largest value of `<z - U(x), x - U(x)>` over all pairs.
pub fn cutter_check(
    op: &CutterOp,
    zs: &[Vector],
    xs: &[Vector],
    exec: Execution,
) -> Result<InequalityReport> {
    check_pairs(op, zs, xs, CUTTER_TOL, exec, |x, ux, z| {
        (z - ux).dot(&(x - ux))
    })
}
