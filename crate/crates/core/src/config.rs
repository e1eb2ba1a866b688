//! JSON run configuration.
//!
//! Unknown keys are rejected everywhere. Serializing a parsed configuration
//! gives its canonical form, which parses back to an equal value.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::composition::{BlockMode, ControlKind, RhoPolicy, Variant, VariantConfig};
use crate::error::{Error, Result};
use crate::landweber::Extrapolation;
use crate::linalg::{LinearMap, Matrix, Vector};
use crate::sets::ConvexSet;
use crate::solver::{
    MonotoneMap, Problem, Relaxation, SolverOptions, Split, StepSchedule, StopRule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub d1: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<usize>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixSource>,
    #[serde(rename = "C", default)]
    pub c: Vec<ConvexSet>,
    #[serde(rename = "Q", default)]
    pub q: Vec<ConvexSet>,
    #[serde(rename = "F")]
    pub f: MonotoneDef,
}

/// Inline row-major rows, or a header-free CSV file relative to the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonotoneDef {
    ToPoint {
        a: Vec<f64>,
    },
    Affine {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
        q: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Product,
    #[default]
    Simultaneous,
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Sequential,
    #[default]
    Simultaneous,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlName {
    Cyclic,
    AlmostCyclic,
    Intermittent,
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default)]
    pub kind: ControlName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Blocks for the target-space index set; `blocks` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks_q: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_q: Option<Vec<f64>>,
}

fn default_eta() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_max_iter() -> usize {
    10_000
}
fn default_tol_residual() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub variant: VariantName,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default)]
    pub sigma: Extrapolation,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default = "one")]
    pub lambda0: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub tol_step: f64,
    #[serde(default = "default_tol_residual")]
    pub tol_residual: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all solver fields have defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub format: TraceFormat,
    /// Compute the oracle solution and record distances to it.
    #[serde(default)]
    pub reference: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build_problem(&self, base_dir: &Path) -> Result<Problem> {
        self.problem
            .build(base_dir)
            .map_err(|e| e.within("problem"))
    }

    pub fn build_options(&self, problem: &Problem) -> Result<SolverOptions> {
        self.solver.build(problem).map_err(|e| e.within("solver"))
    }
}

impl ProblemConfig {
    pub fn build(&self, base_dir: &Path) -> Result<Problem> {
        if self.d1 == 0 {
            return Err(Error::config("d1", "d1 must be positive"));
        }
        let f = match &self.f {
            MonotoneDef::ToPoint { a } => {
                check_len("F.a", a.len(), self.d1)?;
                MonotoneMap::to_point(Vector::from_vec(a.clone()))
            }
            MonotoneDef::Affine { m, q } => {
                check_len("F.q", q.len(), self.d1)?;
                if m.len() != self.d1 || m.iter().any(|r| r.len() != self.d1) {
                    return Err(Error::config("F.M", format!("M must be {0}x{0}", self.d1)));
                }
                MonotoneMap::affine(
                    Matrix::from_fn(self.d1, self.d1, |i, j| m[i][j]),
                    Vector::from_vec(q.clone()),
                )
            }
        }
        .map_err(|e| e.within("F"))?;

        for (i, set) in self.c.iter().enumerate() {
            check_len(&format!("C[{i}]"), set.dim(), self.d1)?;
        }

        let split = if self.q.is_empty() {
            if self.a.is_some() {
                log::warn!("A is given without target sets Q and is ignored");
            }
            None
        } else {
            let source = self
                .a
                .as_ref()
                .ok_or_else(|| Error::config("A", "target sets Q need a linear map A"))?;
            let map = match source {
                MatrixSource::Inline(rows) => LinearMap::from_rows(rows),
                MatrixSource::Csv { csv } => LinearMap::from_csv(base_dir.join(csv)),
            }
            .map_err(|e| match e {
                Error::Domain(m) => Error::config("A", m),
                other => other,
            })?;
            if map.is_zero() {
                return Err(Error::config("A", "Landweber requires nonzero A"));
            }
            let d2 = self.d2.unwrap_or(map.rows());
            check_len("A", map.cols(), self.d1)?;
            check_len("d2", map.rows(), d2)?;
            for (j, set) in self.q.iter().enumerate() {
                check_len(&format!("Q[{j}]"), set.dim(), d2)?;
            }
            Some(Split {
                map: Arc::new(map),
                q_sets: self.q.clone(),
            })
        };
        Problem::new(self.c.clone(), split, f)
    }
}

fn check_len(key: &str, found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("dimension {found}, expected {expected}"),
        ))
    }
}

impl ControlConfig {
    fn kind_for(&self, n: usize, blocks: Option<&Vec<Vec<usize>>>) -> Result<ControlKind> {
        Ok(match self.kind {
            ControlName::Cyclic => ControlKind::AlmostCyclic {
                s: self.s.unwrap_or(n),
            },
            ControlName::AlmostCyclic => ControlKind::AlmostCyclic {
                s: self
                    .s
                    .ok_or_else(|| Error::config("s", "almost cyclic control needs s"))?,
            },
            ControlName::Intermittent => ControlKind::Intermittent {
                s: self
                    .s
                    .ok_or_else(|| Error::config("s", "intermittent control needs s"))?,
                blocks: blocks
                    .cloned()
                    .ok_or_else(|| Error::config("blocks", "intermittent control needs blocks"))?,
            },
            ControlName::Full => ControlKind::Full,
        })
    }

    fn block_mode(&self) -> BlockMode {
        match self.mode {
            ModeName::Sequential => BlockMode::Sequential,
            ModeName::Simultaneous => BlockMode::Simultaneous {
                weights: self.weights.clone(),
            },
            ModeName::Product => BlockMode::Product,
        }
    }
}

impl SolverConfig {
    pub fn build(&self, problem: &Problem) -> Result<SolverOptions> {
        let variant = match self.variant {
            VariantName::Product => Variant::Product,
            VariantName::Simultaneous => Variant::Simultaneous { eta: self.eta },
            VariantName::Alternating => Variant::Alternating,
        };
        let variant = VariantConfig {
            variant,
            rho: self.rho.map_or(RhoPolicy::UpperBound, RhoPolicy::Explicit),
            sigma: self.sigma,
        };
        variant.validate()?;
        let schedule = StepSchedule::new(self.lambda0, self.p)?;
        let relaxation = Relaxation::new(self.alpha, self.epsilon)?;
        if self.max_iter == 0 {
            return Err(Error::config("maxIter", "maxIter must be positive"));
        }
        if !(self.tol_step >= 0.0) {
            return Err(Error::config("tolStep", "tolStep must be nonnegative"));
        }
        if !(self.tol_residual >= 0.0) {
            return Err(Error::config(
                "tolResidual",
                "tolResidual must be nonnegative",
            ));
        }
        let u0 = match &self.u0 {
            Some(u) => {
                check_len("u0", u.len(), problem.dim())?;
                if u.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config("u0", "u0 must be finite"));
                }
                Some(Vector::from_vec(u.clone()))
            }
            None => None,
        };
        let m = problem.c_sets().len().max(1);
        let n = problem.split().map_or(1, |s| s.q_sets.len().max(1));
        let c = &self.control;
        let control_c = c
            .kind_for(m, c.blocks.as_ref())
            .map_err(|e| e.within("control"))?;
        let control_q = c
            .kind_for(n, c.blocks_q.as_ref().or(c.blocks.as_ref()))
            .map_err(|e| e.within("control"))?;
        if c.weights_q.is_some() && c.weights_q != c.weights {
            // target weights differ from source weights; only the source
            // block mode carries weights, so reject rather than ignore
            return Err(Error::config(
                "control.weightsQ",
                "separate target weights are not supported; use weights",
            ));
        }
        Ok(SolverOptions {
            variant,
            block_mode: c.block_mode(),
            control_c,
            control_q,
            schedule,
            relaxation,
            stop: StopRule {
                max_iter: self.max_iter,
                tol_step: self.tol_step,
                tol_residual: self.tol_residual,
            },
            u0,
            explicit_landweber_halfspace: true,
        })
    }
}
