//! Model Riemannian manifolds with closed-form geodesics.
//!
//! Points are stored in chart/ambient coordinates:
//!
//! - `Euclidean`: plain coordinates in `R^dim`.
//! - `Sphere`: unit vectors in `R^(dim+1)`.
//! - `FlatTorus`: coordinates in `[0, 1)^dim` for `R^dim / Z^dim`.
//!
//! Tangent vectors carry ambient components; on the sphere they are orthogonal
//! to their base point.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::linalg::{axpy, dot, norm, scale, sub};
use crate::{Error, Result};

/// Reported convexity radius of flat space. Large and finite so radius
/// comparisons need no special case.
pub const EUCLIDEAN_CONVEXITY_RADIUS: f64 = 1e30;

const SPHERE_NORM_TOL: f64 = 1e-12;
const SPHERE_TANGENT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    FlatTorus,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Euclidean => "euclidean",
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::FlatTorus => "flat_torus",
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(ManifoldKind::Euclidean),
            "sphere" => Ok(ManifoldKind::Sphere),
            "flat_torus" | "torus" => Ok(ManifoldKind::FlatTorus),
            other => Err(Error::Validation(format!(
                "unknown manifold kind `{other}`"
            ))),
        }
    }
}

/// A point given by its chart/ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    /// Wraps coordinates without checking the manifold constraint; use
    /// [`ModelManifold::point`] for validated construction.
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVec {
    pub base: Point,
    pub components: Vec<f64>,
}

impl TangentVec {
    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }

    pub fn scaled(&self, s: f64) -> TangentVec {
        TangentVec {
            base: self.base.clone(),
            components: scale(&self.components, s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelManifold {
    kind: ManifoldKind,
    dim: usize,
}

impl ModelManifold {
    pub fn new(kind: ManifoldKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("manifold dimension must be >= 1".into()));
        }
        Ok(ModelManifold { kind, dim })
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn euclidean(dim: usize) -> Self {
        Self::new(ManifoldKind::Euclidean, dim).expect("dim >= 1")
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn sphere(dim: usize) -> Self {
        Self::new(ManifoldKind::Sphere, dim).expect("dim >= 1")
    }

    /// # Panics
    /// If `dim == 0`.
    pub fn flat_torus(dim: usize) -> Self {
        Self::new(ManifoldKind::FlatTorus, dim).expect("dim >= 1")
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the coordinate vector of a point.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.dim + 1,
            _ => self.dim,
        }
    }

    pub fn convexity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => EUCLIDEAN_CONVEXITY_RADIUS,
            ManifoldKind::Sphere => FRAC_PI_2,
            ManifoldKind::FlatTorus => 0.25,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => EUCLIDEAN_CONVEXITY_RADIUS,
            ManifoldKind::Sphere => PI,
            ManifoldKind::FlatTorus => 0.5,
        }
    }

    /// Validated point construction. Torus coordinates are reduced into
    /// `[0, 1)`; sphere input must already have unit norm.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        self.check_len(&coords)?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(Point(coords)),
            ManifoldKind::Sphere => {
                let n = norm(&coords);
                if (n - 1.0).abs() > SPHERE_NORM_TOL {
                    return Err(Error::Validation(format!(
                        "sphere point has norm {n}, expected 1"
                    )));
                }
                Ok(Point(scale(&coords, 1.0 / n)))
            }
            ManifoldKind::FlatTorus => Ok(Point(coords.into_iter().map(wrap_unit).collect())),
        }
    }

    pub fn validate(&self, p: &Point) -> Result<()> {
        self.check_len(p.coords())?;
        if p.coords().iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite coordinate".into()));
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(()),
            ManifoldKind::Sphere => {
                let n = norm(p.coords());
                if (n - 1.0).abs() > SPHERE_NORM_TOL {
                    return Err(Error::Validation(format!(
                        "sphere point has norm {n}, expected 1"
                    )));
                }
                Ok(())
            }
            ManifoldKind::FlatTorus => {
                if p.coords().iter().all(|&c| (0.0..1.0).contains(&c)) {
                    Ok(())
                } else {
                    Err(Error::Validation(
                        "torus coordinates must lie in [0, 1)".into(),
                    ))
                }
            }
        }
    }

    /// Builds a tangent vector at `base`, checking orthogonality on the sphere.
    pub fn tangent(&self, base: &Point, components: Vec<f64>) -> Result<TangentVec> {
        self.validate(base)?;
        self.check_len(&components)?;
        if self.kind == ManifoldKind::Sphere {
            let d = dot(base.coords(), &components);
            if d.abs() > SPHERE_TANGENT_TOL * (1.0 + norm(&components)) {
                return Err(Error::Validation(format!(
                    "sphere tangent not orthogonal to base (dot {d:e})"
                )));
            }
        }
        Ok(TangentVec {
            base: base.clone(),
            components,
        })
    }

    /// Maps arbitrary ambient coordinates back onto the manifold
    /// (normalize on the sphere, reduce mod 1 on the torus).
    pub fn project(&self, coords: &[f64]) -> Point {
        match self.kind {
            ManifoldKind::Euclidean => Point(coords.to_vec()),
            ManifoldKind::Sphere => Point(scale(coords, 1.0 / norm(coords))),
            ManifoldKind::FlatTorus => Point(coords.iter().copied().map(wrap_unit).collect()),
        }
    }

    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.validate(p)?;
        self.validate(q)?;
        Ok(self.dist(p.coords(), q.coords()))
    }

    pub fn exp_map(&self, v: &TangentVec) -> Result<Point> {
        self.validate(&v.base)?;
        self.check_len(&v.components)?;
        self.exp_raw(v.base.coords(), &v.components).map(Point)
    }

    pub fn log_map(&self, p: &Point, q: &Point) -> Result<TangentVec> {
        self.validate(p)?;
        self.validate(q)?;
        let components = self.log_raw(p.coords(), q.coords())?;
        Ok(TangentVec {
            base: p.clone(),
            components,
        })
    }

    fn check_len(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.ambient_dim() {
            return Err(Error::Validation(format!(
                "expected {} coordinates, got {}",
                self.ambient_dim(),
                coords.len()
            )));
        }
        Ok(())
    }

    // Unchecked kernels used on hot paths; inputs are assumed on-manifold.

    pub(crate) fn dist(&self, p: &[f64], q: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => norm(&sub(q, p)),
            ManifoldKind::Sphere => {
                let c = dot(p, q);
                let s = norm(&axpy(q, -c, p));
                s.atan2(c)
            }
            ManifoldKind::FlatTorus => norm(&torus_shortest(p, q)),
        }
    }

    pub(crate) fn exp_raw(&self, base: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ManifoldKind::Euclidean => Ok(base.iter().zip(v).map(|(b, x)| b + x).collect()),
            ManifoldKind::Sphere => {
                let n = norm(v);
                if n >= PI {
                    return Err(Error::Domain(format!(
                        "tangent norm {n} beyond the sphere injectivity radius"
                    )));
                }
                if n == 0.0 {
                    return Ok(base.to_vec());
                }
                let (s, c) = n.sin_cos();
                let r: Vec<f64> = base.iter().zip(v).map(|(b, x)| c * b + s * x / n).collect();
                let rn = norm(&r);
                Ok(scale(&r, 1.0 / rn))
            }
            ManifoldKind::FlatTorus => {
                let n = norm(v);
                if n >= 0.5 {
                    return Err(Error::Domain(format!(
                        "tangent norm {n} beyond the torus injectivity radius"
                    )));
                }
                Ok(base.iter().zip(v).map(|(b, x)| wrap_unit(b + x)).collect())
            }
        }
    }

    pub(crate) fn log_raw(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ManifoldKind::Euclidean => Ok(sub(q, p)),
            ManifoldKind::Sphere => {
                let c = dot(p, q);
                let w = axpy(q, -c, p);
                let s = norm(&w);
                if s <= 1e-12 && c < 0.0 {
                    return Err(Error::Domain(
                        "antipodal points have no unique logarithm".into(),
                    ));
                }
                if s == 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                let theta = s.atan2(c);
                let v = scale(&w, theta / s);
                // strip the roundoff component along p
                let along = dot(&v, p);
                Ok(axpy(&v, -along, p))
            }
            ManifoldKind::FlatTorus => {
                let v = torus_shortest(p, q);
                if norm(&v) >= 0.5 {
                    return Err(Error::Domain(
                        "torus points beyond the injectivity radius".into(),
                    ));
                }
                Ok(v)
            }
        }
    }
}

/// Reduces `x` into `[0, 1)`.
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Shortest representative of `q - p` over the `3^dim` nearest period shifts.
fn torus_shortest(p: &[f64], q: &[f64]) -> Vec<f64> {
    let diff = sub(q, p);
    let dim = diff.len();
    let mut best = diff.clone();
    let mut best_n2 = f64::INFINITY;
    let mut shift = vec![-1i32; dim];
    let mut cand = vec![0.0; dim];
    loop {
        for i in 0..dim {
            cand[i] = diff[i] + shift[i] as f64;
        }
        let n2 = dot(&cand, &cand);
        if n2 < best_n2 {
            best_n2 = n2;
            best.copy_from_slice(&cand);
        }
        // odometer over {-1, 0, 1}^dim
        let mut i = 0;
        loop {
            if i == dim {
                return best;
            }
            if shift[i] < 1 {
                shift[i] += 1;
                break;
            }
            shift[i] = -1;
            i += 1;
        }
    }
}
