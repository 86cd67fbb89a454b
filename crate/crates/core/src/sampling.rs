//! Seeded random points on the model manifolds.
//!
//! Every sampler draws from a caller-owned `ChaCha8Rng`, so a sequence of N
//! draws is a prefix of the sequence of 2N draws for the same seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{axpy, dot, norm, scale};
use crate::manifold::{wrap_unit, ManifoldKind, ModelManifold, Point};

pub use rand::SeedableRng;
pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction in `R^dim`.
pub fn unit_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return scale(&v, 1.0 / n);
        }
    }
}

/// Uniform unit tangent direction at `base`.
pub fn unit_tangent(m: &ModelManifold, base: &Point, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut v = unit_vector(m.ambient_dim(), rng);
        if m.kind() == ManifoldKind::Sphere {
            let along = dot(&v, base.coords());
            v = axpy(&v, -along, base.coords());
        }
        let n = norm(&v);
        if n > 1e-6 {
            return scale(&v, 1.0 / n);
        }
    }
}

/// A point spread over the whole manifold (a `[-2, 2]` box for flat space).
pub fn uniform_point(m: &ModelManifold, rng: &mut impl Rng) -> Point {
    match m.kind() {
        ManifoldKind::Euclidean => {
            Point::new((0..m.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect())
        }
        ManifoldKind::Sphere => Point::new(unit_vector(m.ambient_dim(), rng)),
        ManifoldKind::FlatTorus => Point::new((0..m.dim()).map(|_| wrap_unit(rng.gen())).collect()),
    }
}

/// Uniform point (in normal coordinates) of the open geodesic ball of
/// `radius` about `center`. `radius` must stay below the injectivity radius.
pub fn point_in_ball(m: &ModelManifold, center: &Point, radius: f64, rng: &mut impl Rng) -> Point {
    let dir = unit_tangent(m, center, rng);
    let u: f64 = rng.gen();
    let r = radius * u.powf(1.0 / m.dim() as f64);
    let v = scale(&dir, r);
    Point::new(
        m.exp_raw(center.coords(), &v)
            .expect("ball radius below injectivity radius"),
    )
}
