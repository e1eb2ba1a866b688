//! Closed convex sets with exact metric projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_dim, Vector};
use crate::operators::SubgradFn;

/// A nonempty closed convex set with a closed-form projection.
///
/// `AffineSublevel` and `QuadSublevel` describe the same geometry as
/// `HalfSpace` and `Ball`. They exist so that a set can be driven through the
/// subgradient projection of its defining function instead of the metric
/// projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexSetDef", into = "ConvexSetDef")]
pub enum ConvexSet {
    /// `{x : <a, x> <= beta}`
    HalfSpace {
        a: Vector,
        beta: f64,
    },
    /// Componentwise `lo <= x <= hi`. Bounds may be infinite.
    Box {
        lo: Vector,
        hi: Vector,
    },
    Ball {
        center: Vector,
        radius: f64,
    },
    /// Sublevel set `{x : <a, x> - beta <= 0}`.
    AffineSublevel {
        a: Vector,
        beta: f64,
    },
    /// Sublevel set `{x : ‖x - center‖² - rsq <= 0}`.
    QuadSublevel {
        center: Vector,
        rsq: f64,
    },
}

fn finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn nonzero_normal(a: &Vector, beta: f64) -> Result<()> {
    if !finite(a) || !beta.is_finite() {
        return Err(Error::config("", "half-space data must be finite"));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::config("a", "half-space normal must be nonzero"));
    }
    Ok(())
}

impl ConvexSet {
    pub fn half_space(a: Vector, beta: f64) -> Result<Self> {
        nonzero_normal(&a, beta)?;
        Ok(Self::HalfSpace { a, beta })
    }

    pub fn affine_sublevel(a: Vector, beta: f64) -> Result<Self> {
        nonzero_normal(&a, beta)?;
        Ok(Self::AffineSublevel { a, beta })
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::config(
                "hi",
                format!("box bounds have lengths {} and {}", lo.len(), hi.len()),
            ));
        }
        if lo.iter().chain(hi.iter()).any(|x| x.is_nan()) {
            return Err(Error::config("", "box bounds must not be NaN"));
        }
        if let Some(i) = (0..lo.len())
            .find(|&i| lo[i] > hi[i] || lo[i] == f64::INFINITY || hi[i] == f64::NEG_INFINITY)
        {
            return Err(Error::config(
                "lo",
                format!("box is empty in coordinate {i}: [{}, {}]", lo[i], hi[i]),
            ));
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        if !finite(&center) {
            return Err(Error::config("center", "ball center must be finite"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::config("radius", "ball radius must be positive"));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn quad_sublevel(center: Vector, rsq: f64) -> Result<Self> {
        if !finite(&center) {
            return Err(Error::config("center", "center must be finite"));
        }
        if !(rsq > 0.0 && rsq.is_finite()) {
            return Err(Error::config("rsq", "squared radius must be positive"));
        }
        Ok(Self::QuadSublevel { center, rsq })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::HalfSpace { a, .. } | Self::AffineSublevel { a, .. } => a.len(),
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { center, .. } | Self::QuadSublevel { center, .. } => center.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::HalfSpace { .. } => "halfspace",
            Self::Box { .. } => "box",
            Self::Ball { .. } => "ball",
            Self::AffineSublevel { .. } => "affine_sublevel",
            Self::QuadSublevel { .. } => "quad_sublevel",
        }
    }

    /// Whether the set is naturally handled by a subgradient projection.
    pub fn is_sublevel(&self) -> bool {
        matches!(
            self,
            Self::AffineSublevel { .. } | Self::QuadSublevel { .. }
        )
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        ensure_dim("ConvexSet::project", self.dim(), x.len())?;
        Ok(match self {
            Self::HalfSpace { a, beta } | Self::AffineSublevel { a, beta } => {
                project_half_space(a, *beta, x)
            }
            Self::Box { lo, hi } => Vector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i])),
            Self::Ball { center, radius } => project_ball(center, *radius, x),
            Self::QuadSublevel { center, rsq } => project_ball(center, rsq.sqrt(), x),
        })
    }

    pub fn distance(&self, x: &Vector) -> Result<f64> {
        match self {
            Self::HalfSpace { a, beta } | Self::AffineSublevel { a, beta } => {
                ensure_dim("ConvexSet::distance", a.len(), x.len())?;
                Ok((a.dot(x) - beta).max(0.0) / a.norm())
            }
            _ => Ok((x - self.project(x)?).norm()),
        }
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol)
    }

    /// Convex function whose zero sublevel set is this set, for the variants
    /// that carry one.
    pub fn sublevel_fn(&self) -> Option<SubgradFn> {
        match self {
            Self::HalfSpace { a, beta } | Self::AffineSublevel { a, beta } => {
                Some(SubgradFn::affine(a.clone(), *beta))
            }
            Self::QuadSublevel { center, rsq } => Some(SubgradFn::quadratic(center.clone(), *rsq)),
            Self::Ball { center, radius } => {
                Some(SubgradFn::quadratic(center.clone(), radius * radius))
            }
            Self::Box { .. } => None,
        }
    }
}

pub(crate) fn project_half_space(a: &Vector, beta: f64, x: &Vector) -> Vector {
    let excess = a.dot(x) - beta;
    if excess <= 0.0 {
        x.clone()
    } else {
        x - a * (excess / a.norm_squared())
    }
}

fn project_ball(center: &Vector, radius: f64, x: &Vector) -> Vector {
    let offset = x - center;
    let dist = offset.norm();
    if dist <= radius {
        x.clone()
    } else {
        center + offset * (radius / dist)
    }
}

/// Outer half-space `{z : <normal, z> <= offset}` or the whole space.
#[derive(Debug, Clone, PartialEq)]
pub enum HalfSpaceOrWhole {
    Whole,
    Cut { normal: Vector, offset: f64 },
}

impl HalfSpaceOrWhole {
    /// `{z : <x - x', z - x'> <= 0}`, collapsing to the whole space when
    /// `‖x - x'‖ <= degenerate_tol`.
    pub fn through(x: &Vector, image: &Vector, degenerate_tol: f64) -> Self {
        let normal = x - image;
        if normal.norm() <= degenerate_tol {
            Self::Whole
        } else {
            let offset = normal.dot(image);
            Self::Cut { normal, offset }
        }
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, Self::Whole)
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        match self {
            Self::Whole => Ok(x.clone()),
            Self::Cut { normal, offset } => {
                ensure_dim("HalfSpaceOrWhole::project", normal.len(), x.len())?;
                Ok(project_half_space(normal, *offset, x))
            }
        }
    }

    /// Signed excess `<normal, z> - offset`, zero for the whole space.
    pub fn violation(&self, z: &Vector) -> f64 {
        match self {
            Self::Whole => 0.0,
            Self::Cut { normal, offset } => normal.dot(z) - offset,
        }
    }

    pub fn contains(&self, z: &Vector) -> bool {
        self.violation(z) <= 0.0
    }

    pub fn to_convex_set(&self) -> Option<ConvexSet> {
        match self {
            Self::Whole => None,
            Self::Cut { normal, offset } => Some(ConvexSet::HalfSpace {
                a: normal.clone(),
                beta: *offset,
            }),
        }
    }
}

/// JSON form of [`ConvexSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexSetDef {
    Halfspace { a: Vec<f64>, beta: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    AffineSublevel { a: Vec<f64>, beta: f64 },
    QuadSublevel { center: Vec<f64>, rsq: f64 },
}

impl TryFrom<ConvexSetDef> for ConvexSet {
    type Error = Error;

    fn try_from(def: ConvexSetDef) -> Result<Self> {
        let v = |xs: Vec<f64>| Vector::from_vec(xs);
        match def {
            ConvexSetDef::Halfspace { a, beta } => Self::half_space(v(a), beta),
            ConvexSetDef::Box { lo, hi } => {
                if lo.iter().chain(hi.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::config("lo", "box bounds must be finite"));
                }
                Self::boxed(v(lo), v(hi))
            }
            ConvexSetDef::Ball { center, radius } => Self::ball(v(center), radius),
            ConvexSetDef::AffineSublevel { a, beta } => Self::affine_sublevel(v(a), beta),
            ConvexSetDef::QuadSublevel { center, rsq } => Self::quad_sublevel(v(center), rsq),
        }
    }
}

impl From<ConvexSet> for ConvexSetDef {
    fn from(set: ConvexSet) -> Self {
        let v = |x: Vector| x.iter().copied().collect::<Vec<_>>();
        match set {
            ConvexSet::HalfSpace { a, beta } => Self::Halfspace { a: v(a), beta },
            ConvexSet::Box { lo, hi } => Self::Box {
                lo: v(lo),
                hi: v(hi),
            },
            ConvexSet::Ball { center, radius } => Self::Ball {
                center: v(center),
                radius,
            },
            ConvexSet::AffineSublevel { a, beta } => Self::AffineSublevel { a: v(a), beta },
            ConvexSet::QuadSublevel { center, rsq } => Self::QuadSublevel {
                center: v(center),
                rsq,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::vector;

    fn unit_ball() -> ConvexSet {
        ConvexSet::ball(vector(&[0.0, 0.0]), 1.0).unwrap()
    }

    fn unit_box() -> ConvexSet {
        ConvexSet::boxed(vector(&[0.0, 0.0]), vector(&[1.0, 1.0])).unwrap()
    }

    fn samples() -> Vec<ConvexSet> {
        vec![
            ConvexSet::half_space(vector(&[1.0, -2.0]), 0.5).unwrap(),
            unit_box(),
            unit_ball(),
            ConvexSet::affine_sublevel(vector(&[0.3, 1.0]), -0.2).unwrap(),
            ConvexSet::quad_sublevel(vector(&[1.0, -1.0]), 2.0).unwrap(),
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(2, |_, _| rng.random_range(-4.0..4.0))
    }

    #[test]
    fn projection_examples() {
        let h = ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(
            h.project(&vector(&[2.0, 3.0])).unwrap(),
            vector(&[0.0, 3.0])
        );
        assert_eq!(
            unit_ball().project(&vector(&[2.0, 0.0])).unwrap(),
            vector(&[1.0, 0.0])
        );
        assert_eq!(
            unit_box().project(&vector(&[2.0, -1.0])).unwrap(),
            vector(&[1.0, 0.0])
        );
    }

    #[test]
    fn distance_examples() {
        let h = ConvexSet::half_space(vector(&[3.0, 4.0]), 0.0).unwrap();
        let x = vector(&[3.0, 4.0]);
        assert_eq!(h.distance(&x).unwrap(), 5.0);
        let generic = (&x - h.project(&x).unwrap()).norm();
        assert!((generic - 5.0).abs() < 1e-12);
        assert_eq!(unit_ball().distance(&vector(&[0.0, 3.0])).unwrap(), 2.0);
        for set in samples() {
            let p = set.project(&vector(&[5.0, -7.0])).unwrap();
            assert!(set.distance(&p).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn contains_examples() {
        let h = ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0).unwrap();
        assert!(h.contains(&vector(&[-1.0, 5.0]), 0.0).unwrap());
        assert!(!unit_ball()
            .contains(&vector(&[0.0, 1.0 + 1e-6]), 1e-9)
            .unwrap());
        assert!(unit_box().contains(&vector(&[0.5, 0.5]), 0.0).unwrap());
    }

    #[test]
    fn construction_rejects_degenerate_data() {
        assert!(ConvexSet::half_space(vector(&[0.0, 0.0]), 1.0).is_err());
        assert!(ConvexSet::boxed(vector(&[1.0]), vector(&[0.0])).is_err());
        assert!(ConvexSet::ball(vector(&[0.0]), 0.0).is_err());
        assert!(ConvexSet::quad_sublevel(vector(&[0.0]), -1.0).is_err());
        assert!(matches!(
            unit_box().project(&vector(&[1.0])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn firm_nonexpansivity_cutter_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for set in samples() {
            for _ in 0..1000 {
                let x = random_point(&mut rng);
                let y = random_point(&mut rng);
                let px = set.project(&x).unwrap();
                let py = set.project(&y).unwrap();
                let d = &px - &py;
                assert!(d.norm_squared() <= d.dot(&(&x - &y)) + 1e-10, "{set:?}");

                let z = set.project(&random_point(&mut rng)).unwrap();
                assert!((&z - &px).dot(&(&x - &px)) <= 1e-10, "{set:?}");

                let ppx = set.project(&px).unwrap();
                assert!((ppx - &px).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn json_schema() {
        let set: ConvexSet =
            serde_json::from_str(r#"{"type":"halfspace","a":[1,0],"beta":0}"#).unwrap();
        assert_eq!(
            set,
            ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0).unwrap()
        );
        let back = serde_json::to_string(&set).unwrap();
        assert_eq!(back, r#"{"type":"halfspace","a":[1.0,0.0],"beta":0.0}"#);
        assert!(
            serde_json::from_str::<ConvexSet>(r#"{"type":"halfspace","a":[0,0],"beta":0}"#)
                .is_err()
        );
        assert!(serde_json::from_str::<ConvexSet>(
            r#"{"type":"ball","center":[0],"radius":1,"x":2}"#
        )
        .is_err());
        assert!(serde_json::from_str::<ConvexSet>(r#"{"type":"cone"}"#).is_err());
    }

    #[test]
    fn outer_half_space() {
        let h = HalfSpaceOrWhole::through(&vector(&[1.0, 0.0]), &vector(&[0.0, 0.0]), 1e-14);
        assert_eq!(
            h.project(&vector(&[3.0, 2.0])).unwrap(),
            vector(&[0.0, 2.0])
        );
        assert!(h.contains(&vector(&[-1.0, 7.0])));
        let w = HalfSpaceOrWhole::through(&vector(&[1.0, 0.0]), &vector(&[1.0, 0.0]), 1e-14);
        assert!(w.is_whole());
        assert_eq!(
            w.project(&vector(&[3.0, 2.0])).unwrap(),
            vector(&[3.0, 2.0])
        );
    }
}
