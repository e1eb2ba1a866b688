//! Extrapolated Landweber transform.
//!
//! For an operator `V` on the target space, the transform
//!
//! ```text
//! L_σ{V}(x) = x + σ(x) / ‖A‖² · Aᵀ(V(Ax) - Ax)
//! ```
//!
//! acts on the source space, keeps the SQNE modulus of `V` and has fixed
//! point set `A⁻¹(fix V)` whenever `range(A)` meets `fix V`. The norm used is
//! the cached upper bound of [`LinearMap`], so the computed `τ` never exceeds
//! the exact one.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_dim, LinearMap, Vector};
use crate::operators::{CutterOp, SubgradFn};
use crate::sets::HalfSpaceOrWhole;

/// Relative size of `‖Aᵀr‖` below which the residual `r` is treated as
/// lying in the null space of `Aᵀ`.
pub const NULL_ADJOINT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// `σ ≡ 1`, the plain Landweber operator.
    One,
    /// `σ = τ`, the largest admissible extrapolation.
    #[default]
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau {
    pub value: f64,
    /// Set when the residual is numerically in the null space of `Aᵀ` and the
    /// value fell back to 1.
    pub degenerate: bool,
}

/// `(‖A‖ ‖r‖ / ‖Aᵀ r‖)²` for the residual `r = V(Ax) - Ax`, and 1 when `r = 0`.
pub fn tau(map: &LinearMap, residual: &Vector) -> Result<Tau> {
    let r_norm = residual.norm();
    if r_norm == 0.0 {
        return Ok(Tau {
            value: 1.0,
            degenerate: false,
        });
    }
    let at_r = map.adjoint_apply(residual)?;
    Ok(tau_from_parts(map.norm_ub(), r_norm, at_r.norm()))
}

fn tau_from_parts(norm_ub: f64, r_norm: f64, at_r_norm: f64) -> Tau {
    if r_norm == 0.0 {
        Tau {
            value: 1.0,
            degenerate: false,
        }
    } else if at_r_norm <= NULL_ADJOINT_EPS * norm_ub * r_norm {
        Tau {
            value: 1.0,
            degenerate: true,
        }
    } else {
        let ratio = norm_ub * r_norm / at_r_norm;
        Tau {
            value: ratio * ratio,
            degenerate: false,
        }
    }
}

/// Result of one Landweber evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LandweberEval {
    pub point: Vector,
    pub sigma: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct LandweberOp {
    inner: CutterOp,
    map: Arc<LinearMap>,
    sigma: Extrapolation,
    norm_sq: f64,
    degenerate: Arc<AtomicUsize>,
}

impl LandweberOp {
    pub fn new(inner: CutterOp, map: Arc<LinearMap>, sigma: Extrapolation) -> Result<Self> {
        if map.is_zero() {
            return Err(Error::Domain("Landweber requires nonzero A".into()));
        }
        ensure_dim("LandweberOp::new", map.rows(), inner.dim())?;
        let norm_sq = map.norm_ub() * map.norm_ub();
        Ok(Self {
            inner,
            map,
            sigma,
            norm_sq,
            degenerate: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn inner(&self) -> &CutterOp {
        &self.inner
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn sigma_mode(&self) -> Extrapolation {
        self.sigma
    }

    /// Modulus inherited from the inner operator.
    pub fn rho(&self) -> f64 {
        self.inner.rho()
    }

    pub fn dim(&self) -> usize {
        self.map.cols()
    }

    /// Number of evaluations that hit a degenerate residual or normal.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.load(Ordering::Relaxed)
    }

    fn flag(&self) {
        self.degenerate.fetch_add(1, Ordering::Relaxed);
    }

    pub fn evaluate(&self, x: &Vector) -> Result<LandweberEval> {
        let ax = self.map.apply(x)?;
        let residual = self.inner.apply(&ax)? - &ax;
        let r_norm = residual.norm();
        if r_norm == 0.0 {
            return Ok(LandweberEval {
                point: x.clone(),
                sigma: 1.0,
                degenerate: false,
            });
        }
        let at_r = self.map.adjoint_apply(&residual)?;
        let (sigma, degenerate) = match self.sigma {
            Extrapolation::One => (1.0, false),
            Extrapolation::Tau => {
                let t = tau_from_parts(self.map.norm_ub(), r_norm, at_r.norm());
                (t.value, t.degenerate)
            }
        };
        if degenerate {
            self.flag();
        }
        Ok(LandweberEval {
            point: x + at_r * (sigma / self.norm_sq),
            sigma,
            degenerate,
        })
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        Ok(self.evaluate(x)?.point)
    }

    pub fn tau_at(&self, x: &Vector) -> Result<Tau> {
        let ax = self.map.apply(x)?;
        let residual = self.inner.apply(&ax)? - &ax;
        tau(&self.map, &residual)
    }

    /// The transform as a plain operator on the source space.
    pub fn to_cutter_op(&self) -> CutterOp {
        let this = self.clone();
        let mode = match self.sigma {
            Extrapolation::One => "L",
            Extrapolation::Tau => "Ltau",
        };
        let label = format!("{mode}{{{}}}", self.inner.label());
        let op = CutterOp::new(self.dim(), self.rho(), label, move |x| this.apply(x));
        match self.inner.fix_witness().cloned() {
            Some(witness) => {
                let map = Arc::clone(&self.map);
                op.with_witness(Arc::new(move |z, tol| match map.apply(z) {
                    Ok(az) => witness(&az, tol),
                    Err(_) => false,
                }))
            }
            None => op,
        }
    }

    fn residual_at(&self, u: &Vector) -> Result<(Vector, Vector)> {
        let au = self.map.apply(u)?;
        let vau = self.inner.apply(&au)?;
        Ok((au, vau))
    }

    /// The half-space `{z : <Au - V(Au), Az - V(Au)> <= 0}`.
    ///
    /// It coincides with `{z : <u - L_τ(u), z - L_τ(u)> <= 0}` and is the
    /// whole space when `Au` is fixed by `V`. A vanishing normal `Aᵀ(Au -
    /// V(Au))` is counted as degenerate and also yields the whole space.
    pub fn halfspace(&self, u: &Vector) -> Result<HalfSpaceOrWhole> {
        let (au, vau) = self.residual_at(u)?;
        let r = &au - &vau;
        if r.iter().all(|&x| x == 0.0) {
            return Ok(HalfSpaceOrWhole::Whole);
        }
        let normal = self.map.adjoint_apply(&r)?;
        if normal.iter().all(|&x| x == 0.0) {
            self.flag();
            return Ok(HalfSpaceOrWhole::Whole);
        }
        let offset = r.dot(&vau);
        Ok(HalfSpaceOrWhole::Cut { normal, offset })
    }

    /// Projection onto [`Self::halfspace`] evaluated directly from `A` and `V`.
    pub fn halfspace_project(&self, u: &Vector, x: &Vector) -> Result<Vector> {
        ensure_dim("LandweberOp::halfspace_project", self.dim(), x.len())?;
        let (au, vau) = self.residual_at(u)?;
        let r = &au - &vau;
        if r.iter().all(|&v| v == 0.0) {
            return Ok(x.clone());
        }
        let normal = self.map.adjoint_apply(&r)?;
        let nn = normal.norm_squared();
        if nn == 0.0 {
            self.flag();
            return Ok(x.clone());
        }
        let ax = self.map.apply(x)?;
        let excess = r.dot(&(ax - &vau));
        if excess <= 0.0 {
            Ok(x.clone())
        } else {
            Ok(x - normal * (excess / nn))
        }
    }
}

/// `{z : q(Au) + <Aᵀh(Au), z - u> <= 0}` when `q(Au) > 0`, the whole space
/// otherwise. `h(Au)` is the subgradient chosen by `q`.
pub fn subgrad_landweber_halfspace(
    q: &SubgradFn,
    map: &LinearMap,
    u: &Vector,
) -> Result<HalfSpaceOrWhole> {
    ensure_dim("subgrad_landweber_halfspace", map.rows(), q.dim())?;
    let au = map.apply(u)?;
    let qa = q.value(&au);
    if qa <= 0.0 {
        return Ok(HalfSpaceOrWhole::Whole);
    }
    let normal = map.adjoint_apply(&q.subgradient(&au))?;
    if normal.iter().all(|&x| x == 0.0) {
        return Err(Error::Infeasible(
            "Aᵀh(Au) vanishes while q(Au) > 0: the pulled-back sublevel set is empty".into(),
        ));
    }
    let offset = normal.dot(u) - qa;
    Ok(HalfSpaceOrWhole::Cut { normal, offset })
}

pub fn subgrad_landweber_halfspace_project(
    q: &SubgradFn,
    map: &LinearMap,
    u: &Vector,
    x: &Vector,
) -> Result<Vector> {
    ensure_dim("subgrad_landweber_halfspace_project", map.cols(), x.len())?;
    let au = map.apply(u)?;
    let qa = q.value(&au);
    if qa <= 0.0 {
        return Ok(x.clone());
    }
    let normal = map.adjoint_apply(&q.subgradient(&au))?;
    let nn = normal.norm_squared();
    if nn == 0.0 {
        return Err(Error::Infeasible("Aᵀh(Au) vanishes while q(Au) > 0".into()));
    }
    let excess = qa + normal.dot(&(x - u));
    if excess <= 0.0 {
        Ok(x.clone())
    } else {
        Ok(x - normal * (excess / nn))
    }
}
