//! Per-iteration operators: block controls, combinations of cutters, and the
//! three ways of joining `U_k` with the Landweber transform of `V_k` into the
//! algorithmic cutter `T_k`.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landweber::{Extrapolation, LandweberOp};
use crate::operators::CutterOp;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const RHO_BOUND_SLACK: f64 = 1e-12;

/// `(Σ ωᵢ / (ρᵢ + 1))⁻¹ - 1`, the modulus of `Σ ωᵢ Uᵢ`.
pub fn rho_of_convex_combination(rhos: &[f64], weights: &[f64]) -> Result<f64> {
    if rhos.is_empty() || rhos.len() != weights.len() {
        return Err(Error::config(
            "weights",
            format!("{} weights for {} operators", weights.len(), rhos.len()),
        ));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::config("weights", "weights must be positive"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::config(
            "weights",
            format!("weights sum to {total}, not 1"),
        ));
    }
    if rhos.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Domain("moduli must be positive".into()));
    }
    let s: f64 = rhos.iter().zip(weights).map(|(r, w)| w / (r + 1.0)).sum();
    Ok(1.0 / s - 1.0)
}

/// `(Σ 1/ρᵢ)⁻¹`, the modulus of `U_m ⋯ U_1`.
pub fn rho_of_product(rhos: &[f64]) -> Result<f64> {
    if rhos.is_empty() {
        return Err(Error::Domain("product of no operators".into()));
    }
    if rhos.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Domain("moduli must be positive".into()));
    }
    Ok(1.0 / rhos.iter().map(|r| 1.0 / r).sum::<f64>())
}

/// `Σ ωᵢ Uᵢ`, summed in the order given.
pub fn convex_combination(ops: &[CutterOp], weights: &[f64]) -> Result<CutterOp> {
    let rhos: Vec<f64> = ops.iter().map(CutterOp::rho).collect();
    let rho = rho_of_convex_combination(&rhos, weights)?;
    let dim = common_dim(ops)?;
    if ops.len() == 1 {
        return Ok(ops[0].clone());
    }
    let members: Arc<[CutterOp]> = ops.into();
    let weights: Arc<[f64]> = weights.into();
    let label = format!(
        "sum[{}]",
        ops.iter()
            .map(CutterOp::label)
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(CutterOp::new(dim, rho, label, move |x| {
        let mut acc = crate::linalg::Vector::zeros(x.len());
        for (op, w) in members.iter().zip(weights.iter()) {
            acc.axpy(*w, &op.apply(x)?, 1.0);
        }
        Ok(acc)
    }))
}

/// `U_m ⋯ U_1`: `ops[0]` is applied first.
pub fn product(ops: &[CutterOp]) -> Result<CutterOp> {
    let rhos: Vec<f64> = ops.iter().map(CutterOp::rho).collect();
    let rho = rho_of_product(&rhos)?;
    let dim = common_dim(ops)?;
    if ops.len() == 1 {
        return Ok(ops[0].clone());
    }
    let members: Arc<[CutterOp]> = ops.into();
    let label = format!(
        "prod[{}]",
        ops.iter()
            .map(CutterOp::label)
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(CutterOp::new(dim, rho, label, move |x| {
        let mut y = x.clone();
        for op in members.iter() {
            y = op.apply(&y)?;
        }
        Ok(y)
    }))
}

fn common_dim(ops: &[CutterOp]) -> Result<usize> {
    let dim = ops
        .first()
        .map(CutterOp::dim)
        .ok_or_else(|| Error::Control("empty block".into()))?;
    if let Some(op) = ops.iter().find(|op| op.dim() != dim) {
        return Err(Error::Shape {
            context: "operator block",
            expected: dim,
            found: op.dim(),
        });
    }
    Ok(dim)
}

/// How the index subsets `I_k` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlKind {
    /// Single index per step, cycling `0, 1, …, m-1`; valid for any `s >= m`.
    AlmostCyclic { s: usize },
    /// Blocks visited cyclically; every window of `s` consecutive blocks
    /// must cover the index set.
    Intermittent { s: usize, blocks: Vec<Vec<usize>> },
    /// `I_k = I` at every step.
    Full,
}

/// A control sequence over the index set `{0, …, n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    kind: ControlKind,
    n: usize,
}

impl Control {
    pub fn new(kind: ControlKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Control("control over an empty index set".into()));
        }
        match &kind {
            ControlKind::AlmostCyclic { s } => {
                if *s < n {
                    return Err(Error::Control(format!(
                        "cyclic control over {n} indices cannot be {s}-almost cyclic"
                    )));
                }
            }
            ControlKind::Intermittent { s, blocks } => {
                if *s == 0 || blocks.is_empty() {
                    return Err(Error::Control(
                        "intermittent control needs s >= 1 and blocks".into(),
                    ));
                }
                if let Some(b) = blocks.iter().find(|b| b.is_empty()) {
                    return Err(Error::Control(format!("empty block {b:?}")));
                }
                if let Some(&i) = blocks.iter().flatten().find(|&&i| i >= n) {
                    return Err(Error::Control(format!("index {i} out of range 0..{n}")));
                }
                let windows: Vec<Vec<usize>> = (0..blocks.len() + *s)
                    .map(|k| blocks[k % blocks.len()].clone())
                    .collect();
                if !covers_every_window(&windows[..], n, *s, blocks.len()) {
                    return Err(Error::Control(format!(
                        "blocks {blocks:?} are not {s}-intermittent over {n} indices"
                    )));
                }
            }
            ControlKind::Full => {}
        }
        Ok(Self { kind, n })
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::new(ControlKind::Full, n)
    }

    pub fn cyclic(n: usize) -> Result<Self> {
        Self::new(ControlKind::AlmostCyclic { s: n }, n)
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Window length over which every index is visited.
    pub fn period(&self) -> usize {
        match &self.kind {
            ControlKind::AlmostCyclic { s } | ControlKind::Intermittent { s, .. } => *s,
            ControlKind::Full => 1,
        }
    }

    /// `I_k`, sorted ascending.
    pub fn select(&self, k: usize) -> Vec<usize> {
        match &self.kind {
            ControlKind::AlmostCyclic { .. } => vec![k % self.n],
            ControlKind::Intermittent { blocks, .. } => {
                let set: BTreeSet<usize> = blocks[k % blocks.len()].iter().copied().collect();
                set.into_iter().collect()
            }
            ControlKind::Full => (0..self.n).collect(),
        }
    }
}

fn covers_every_window(trace: &[Vec<usize>], n: usize, s: usize, starts: usize) -> bool {
    (0..starts.min(trace.len().saturating_sub(s - 1))).all(|k| {
        let seen: BTreeSet<usize> = trace[k..k + s].iter().flatten().copied().collect();
        seen.len() == n && seen.iter().all(|&i| i < n)
    })
}

/// Checks that every window of `s` consecutive selections in `trace`
/// covers `{0, …, n-1}`.
pub fn validate_control_trace(trace: &[Vec<usize>], n: usize, s: usize) -> bool {
    if s == 0 || trace.len() < s {
        return false;
    }
    covers_every_window(trace, n, s, trace.len() - s + 1)
}

/// How the operators selected by `I_k` are joined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockMode {
    /// `U_{i_k}`; needs an almost cyclic control.
    Sequential,
    /// `Σ ωᵢ Uᵢ` over `I_k`, with per-index weights renormalized on `I_k`.
    /// Equal weights when omitted.
    Simultaneous {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// `∏ Uᵢ` over `I_k` in ascending index order.
    #[default]
    Product,
}

impl BlockMode {
    pub fn simultaneous() -> Self {
        BlockMode::Simultaneous { weights: None }
    }
}

/// Builds `U_k` and returns it with the index set `I_k`.
pub fn build_uk(
    ops: &[CutterOp],
    control: &Control,
    mode: &BlockMode,
    k: usize,
) -> Result<(CutterOp, Vec<usize>)> {
    if ops.len() != control.len() {
        return Err(Error::Control(format!(
            "control over {} indices used with {} operators",
            control.len(),
            ops.len()
        )));
    }
    if let Some(op) = ops.iter().find(|op| !(op.rho() > 0.0)) {
        return Err(Error::Domain(format!("{} has modulus 0", op.label())));
    }
    let idx = control.select(k);
    if idx.is_empty() {
        return Err(Error::Control(format!("empty index set at k = {k}")));
    }
    let chosen: Vec<CutterOp> = idx.iter().map(|&i| ops[i].clone()).collect();
    let op = match mode {
        BlockMode::Sequential => {
            if !matches!(control.kind(), ControlKind::AlmostCyclic { .. }) {
                return Err(Error::Control(
                    "sequential mode requires an almost cyclic control".into(),
                ));
            }
            chosen[0].clone()
        }
        BlockMode::Simultaneous { weights } => {
            let raw: Vec<f64> = match weights {
                Some(w) => {
                    if w.len() != ops.len() {
                        return Err(Error::config(
                            "weights",
                            format!("{} weights for {} operators", w.len(), ops.len()),
                        ));
                    }
                    idx.iter().map(|&i| w[i]).collect()
                }
                None => vec![1.0; idx.len()],
            };
            if raw.iter().any(|&w| !(w > 0.0)) {
                return Err(Error::config("weights", "weights must be positive"));
            }
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            convex_combination(&chosen, &w)?
        }
        BlockMode::Product => product(&chosen)?,
    };
    Ok((op, idx))
}

/// Which of the three algorithmic operators is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Product,
    Simultaneous { eta: f64 },
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhoPolicy {
    /// The largest modulus allowed for the given `β_k`, `γ_k`.
    #[default]
    UpperBound,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantConfig {
    pub variant: Variant,
    pub rho: RhoPolicy,
    pub sigma: Extrapolation,
}

impl VariantConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            rho: RhoPolicy::UpperBound,
            sigma: Extrapolation::Tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Variant::Simultaneous { eta } = self.variant {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::config("eta", "eta must lie in (0, 1)"));
            }
        }
        match (self.variant, self.rho) {
            (Variant::Alternating, RhoPolicy::Explicit(_)) => Err(Error::config(
                "rho",
                "the alternating variant relaxes by the moduli of U_k and V_k; rho is not used",
            )),
            (_, RhoPolicy::Explicit(r)) if !(r >= 0.0) => {
                Err(Error::config("rho", "rho must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    /// Admissible upper bound on `ρ_k` for moduli `β_k`, `γ_k`.
    pub fn rho_bound(&self, beta: f64, gamma: f64) -> Option<f64> {
        match self.variant {
            Variant::Product => Some(1.0 / (1.0 / beta + 1.0 / gamma)),
            Variant::Simultaneous { eta } => {
                Some(1.0 / (eta / (beta + 1.0) + (1.0 - eta) / (gamma + 1.0)) - 1.0)
            }
            Variant::Alternating => None,
        }
    }

    fn rho_k(&self, beta: f64, gamma: f64) -> Result<f64> {
        let bound = self
            .rho_bound(beta, gamma)
            .ok_or_else(|| Error::config("rho", "no relaxation modulus for this variant"))?;
        match self.rho {
            RhoPolicy::UpperBound => Ok(bound),
            RhoPolicy::Explicit(r) => {
                if r < 0.0 || r > bound * (1.0 + RHO_BOUND_SLACK) {
                    Err(Error::config(
                        "rho",
                        format!("rho = {r} is outside the admissible interval [0, {bound}]"),
                    ))
                } else {
                    Ok(r)
                }
            }
        }
    }

    /// Relaxation factor `(1 + ρ_k) / 2` of the product and simultaneous
    /// variants.
    pub fn relaxation(&self, beta: f64, gamma: f64) -> Result<f64> {
        Ok((1.0 + self.rho_k(beta, gamma)?) / 2.0)
    }
}

/// Which half of an alternating step is being taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlternatingPhase {
    Source,
    Target,
}

/// Global step `k` of the alternating variant uses `U_{k/2}`, `V_{k/2}`;
/// even steps act with `U`, odd steps with the Landweber transform of `V`.
pub fn alternating_phase(global_k: usize) -> (usize, AlternatingPhase) {
    let phase = if global_k.is_multiple_of(2) {
        AlternatingPhase::Source
    } else {
        AlternatingPhase::Target
    };
    (global_k / 2, phase)
}

/// Builds the cutter `T_k`.
///
/// `vk` is `None` in pure feasibility mode, in which case `T_k` is the half
/// relaxation of `U_k`. `uk` is `None` when there are no source-space
/// constraints. The returned operator is a cutter (`rho = 1`) whose fixed
/// point set contains the feasible set.
pub fn build_tk(
    cfg: &VariantConfig,
    uk: Option<&CutterOp>,
    vk: Option<&LandweberOp>,
    global_k: usize,
) -> Result<CutterOp> {
    cfg.validate()?;
    let (uk, vk) = match (uk, vk) {
        (None, None) => return Err(Error::config("problem", "no constraint sets")),
        (Some(u), None) => return as_cutter(u.half_relaxed()?),
        (None, Some(v)) => return as_cutter(v.to_cutter_op().half_relaxed()?),
        (Some(u), Some(v)) => (u, v),
    };
    if uk.dim() != vk.dim() {
        return Err(Error::Shape {
            context: "build_tk",
            expected: uk.dim(),
            found: vk.dim(),
        });
    }
    let beta = uk.rho();
    let gamma = vk.rho();
    if !(beta > 0.0 && gamma > 0.0) {
        return Err(Error::Domain("U_k and V_k need positive moduli".into()));
    }
    let landweber = vk.to_cutter_op();
    let op = match cfg.variant {
        Variant::Product => {
            let factor = cfg.relaxation(beta, gamma)?;
            let u = uk.clone();
            let l = landweber.clone();
            let label = format!("T_prod[{} o {}]", u.label(), l.label());
            CutterOp::new(uk.dim(), 1.0, label, move |x| {
                let y = u.apply(&l.apply(x)?)?;
                Ok(x + (y - x) * factor)
            })
        }
        Variant::Simultaneous { eta } => {
            let factor = cfg.relaxation(beta, gamma)?;
            let u = uk.clone();
            let l = landweber.clone();
            let label = format!("T_sim[{}, {}]", u.label(), l.label());
            CutterOp::new(uk.dim(), 1.0, label, move |x| {
                let mut y = u.apply(x)? * eta;
                y.axpy(1.0 - eta, &l.apply(x)?, 1.0);
                Ok(x + (y - x) * factor)
            })
        }
        Variant::Alternating => match alternating_phase(global_k).1 {
            AlternatingPhase::Source => uk.relax((1.0 + beta) / 2.0)?,
            AlternatingPhase::Target => landweber.relax((1.0 + gamma) / 2.0)?,
        },
    };
    as_cutter(op)
}

fn as_cutter(op: CutterOp) -> Result<CutterOp> {
    let label = op.label().to_string();
    let dim = op.dim();
    let witness = op.fix_witness().cloned();
    let out = CutterOp::new(dim, 1.0, label, move |x| op.apply(x));
    Ok(match witness {
        Some(w) => out.with_witness(w),
        None => out,
    })
}
