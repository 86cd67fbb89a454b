//! Riemannian centers of mass and the orbit barycenter map `B`.

use crate::group_action::GroupAction;
use crate::linalg::{dot, norm, scale};
use crate::manifold::{ManifoldKind, ModelManifold, Point};
use crate::{Error, Result};

/// Default residual tolerance for the Karcher iteration.
pub const KARCHER_TOL: f64 = 1e-12;
/// Iteration cap for the Karcher iteration.
pub const KARCHER_MAX_ITER: usize = 200;
/// Below this `d(x, B(x))` a point is treated as fixed.
pub const DEGENERACY_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterResult {
    pub point: Point,
    /// `‖Σ log_z(s)‖` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

/// Center of mass of `points`.
///
/// Flat space uses the arithmetic mean (summed in a canonical order, so the
/// result does not depend on input order); the curved models run the Karcher
/// iteration.
pub fn center_of_mass(m: &ModelManifold, points: &[Point], tol: f64) -> Result<BarycenterResult> {
    if points.is_empty() {
        return Err(Error::Validation("center of mass of an empty set".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation("tolerance must be positive".into()));
    }
    for p in points {
        m.validate(p)?;
    }
    let raw: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
    center_of_mass_raw(m, &raw, tol, KARCHER_MAX_ITER)
}

/// Karcher iteration `z ← exp_z((1/k) Σ log_z(sᵢ))` from the first point,
/// regardless of manifold kind.
pub fn karcher_mean(
    m: &ModelManifold,
    points: &[Point],
    tol: f64,
    max_iter: usize,
) -> Result<BarycenterResult> {
    if points.is_empty() {
        return Err(Error::Validation("center of mass of an empty set".into()));
    }
    for p in points {
        m.validate(p)?;
    }
    let raw: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
    check_convex_ball(m, &raw)?;
    karcher_raw(m, &raw, tol, max_iter)
}

pub(crate) fn center_of_mass_raw(
    m: &ModelManifold,
    points: &[&[f64]],
    tol: f64,
    max_iter: usize,
) -> Result<BarycenterResult> {
    if points.iter().all(|p| *p == points[0]) {
        return Ok(BarycenterResult {
            point: Point::new(points[0].to_vec()),
            residual: 0.0,
            iterations: 0,
        });
    }
    check_convex_ball(m, points)?;
    if m.kind() == ManifoldKind::Euclidean {
        let mean = arithmetic_mean(points);
        let residual = log_sum(m, &mean, points)?;
        return Ok(BarycenterResult {
            point: Point::new(mean),
            residual,
            iterations: 0,
        });
    }
    if m.kind() == ManifoldKind::FlatTorus {
        // flat: the mean of the unwrapped displacements is exact
        let base = points[0];
        let logs = points
            .iter()
            .map(|p| m.log_raw(base, p))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = logs.iter().map(Vec::as_slice).collect();
        let z = m.exp_raw(base, &arithmetic_mean(&refs))?;
        let residual = log_sum(m, &z, points)?;
        return Ok(BarycenterResult {
            point: Point::new(z),
            residual,
            iterations: 0,
        });
    }
    karcher_raw(m, points, tol, max_iter)
}

fn check_convex_ball(m: &ModelManifold, points: &[&[f64]]) -> Result<()> {
    let r = m.convexity_radius();
    let first = points[0];
    for p in &points[1..] {
        let d = m.dist(first, p);
        if !(d < r) {
            return Err(Error::Domain(format!(
                "points span {d}, not inside a convex ball of radius {r}"
            )));
        }
    }
    Ok(())
}

fn arithmetic_mean(points: &[&[f64]]) -> Vec<f64> {
    let mut sorted: Vec<&[f64]> = points.to_vec();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let dim = sorted[0].len();
    let mut acc = vec![0.0; dim];
    for p in &sorted {
        for (a, x) in acc.iter_mut().zip(p.iter()) {
            *a += x;
        }
    }
    scale(&acc, 1.0 / sorted.len() as f64)
}

fn log_sum(m: &ModelManifold, z: &[f64], points: &[&[f64]]) -> Result<f64> {
    let mut acc = vec![0.0; z.len()];
    for p in points {
        for (a, v) in acc.iter_mut().zip(m.log_raw(z, p)?) {
            *a += v;
        }
    }
    Ok(norm(&acc))
}

fn karcher_raw(
    m: &ModelManifold,
    points: &[&[f64]],
    tol: f64,
    max_iter: usize,
) -> Result<BarycenterResult> {
    let k = points.len() as f64;
    let mut z = points[0].to_vec();
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let mut acc = vec![0.0; z.len()];
        for p in points {
            for (a, v) in acc.iter_mut().zip(m.log_raw(&z, p)?) {
                *a += v;
            }
        }
        residual = norm(&acc);
        if residual <= tol {
            return Ok(BarycenterResult {
                point: Point::new(z),
                residual,
                iterations: it,
            });
        }
        if it == max_iter {
            break;
        }
        z = m.exp_raw(&z, &scale(&acc, 1.0 / k))?;
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Terms of the flat identity
/// `(1/k)Σ d(y, sᵢ)² = d(y, B)² + (1/k)Σ d(B, sᵢ)²` with `B` the mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceIdentity {
    pub mean_square_to_y: f64,
    pub y_to_barycenter_sq: f64,
    pub spread: f64,
}

impl VarianceIdentity {
    pub fn residual(&self) -> f64 {
        (self.mean_square_to_y - self.y_to_barycenter_sq - self.spread).abs()
    }

    /// Residual relative to the left-hand side (absolute when it vanishes).
    pub fn relative_residual(&self) -> f64 {
        let scale = self.mean_square_to_y.max(f64::MIN_POSITIVE);
        if self.mean_square_to_y == 0.0 {
            self.residual()
        } else {
            self.residual() / scale
        }
    }
}

/// Evaluates both sides of the flat variance identity for the set `points`.
pub fn variance_identity(
    m: &ModelManifold,
    points: &[Point],
    y: &Point,
) -> Result<VarianceIdentity> {
    if m.kind() != ManifoldKind::Euclidean {
        return Err(Error::Unsupported(
            "the variance identity is stated for flat space only".into(),
        ));
    }
    let b = center_of_mass(m, points, KARCHER_TOL)?.point;
    m.validate(y)?;
    let k = points.len() as f64;
    let sq = |a: &[f64], c: &[f64]| {
        let d: Vec<f64> = a.iter().zip(c).map(|(x, z)| x - z).collect();
        dot(&d, &d)
    };
    let mean_square_to_y = points
        .iter()
        .map(|p| sq(y.coords(), p.coords()))
        .sum::<f64>()
        / k;
    let spread = points
        .iter()
        .map(|p| sq(b.coords(), p.coords()))
        .sum::<f64>()
        / k;
    Ok(VarianceIdentity {
        mean_square_to_y,
        y_to_barycenter_sq: sq(y.coords(), b.coords()),
        spread,
    })
}

/// Absolute residual of the flat variance identity.
pub fn variance_identity_residual(m: &ModelManifold, points: &[Point], y: &Point) -> Result<f64> {
    variance_identity(m, points, y).map(|v| v.residual())
}

/// `B(x)`: center of mass of the orbit of `x`.
pub fn orbit_barycenter(a: &GroupAction, x: &Point) -> Result<BarycenterResult> {
    a.manifold().validate(x)?;
    orbit_barycenter_raw(a, x.coords())
}

pub(crate) fn orbit_barycenter_raw(a: &GroupAction, x: &[f64]) -> Result<BarycenterResult> {
    let orbit = a.orbit_raw(x);
    let refs: Vec<&[f64]> = orbit.iter().map(|p| p.as_slice()).collect();
    center_of_mass_raw(a.manifold(), &refs, KARCHER_TOL, KARCHER_MAX_ITER)
}

/// `d(B(x), g₀B(x)) / d(x, B(x))` with `g₀ = generator^element_index`.
pub fn displacement_ratio(a: &GroupAction, x: &Point, element_index: usize) -> Result<f64> {
    let m = a.manifold();
    let b = orbit_barycenter(a, x)?.point;
    let denom = m.dist(x.coords(), b.coords());
    if denom <= DEGENERACY_FLOOR {
        return Err(Error::Degenerate(format!(
            "d(x, B(x)) = {denom:e}: x is on the fixed set"
        )));
    }
    if element_index.is_multiple_of(a.order()) {
        return Ok(0.0);
    }
    let gb = a.apply_raw(element_index, b.coords());
    Ok(m.dist(b.coords(), &gb) / denom)
}

/// Largest displacement ratio over all nontrivial elements.
pub fn max_displacement_ratio(a: &GroupAction, x: &Point) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 1..a.order() {
        worst = worst.max(displacement_ratio(a, x, k)?);
    }
    if a.order() == 1 {
        displacement_ratio(a, x, 0)?;
    }
    Ok(worst)
}
