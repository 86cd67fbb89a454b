//! Finite cyclic group actions on the model manifolds.
//!
//! The base action is a block rotation: the first coordinates are fixed and
//! the remaining ones are rotated by `2π/n` in consecutive coordinate planes.
//! Non-isometric actions are obtained by conjugating with compactly supported
//! bump warps `ψ`, which keeps the group exactly cyclic of order `n` while
//! making every nontrivial element genuinely non-isometric.

use std::f64::consts::TAU as FULL_TURN;

use rand::Rng;

use crate::linalg::{axpy, dot, norm, scale};
use crate::manifold::{ManifoldKind, ModelManifold, Point};
use crate::sampling::{self, unit_tangent, unit_vector};
use crate::{Error, Result};

/// `max |b'(s)|` for the bump `b(s) = (1 - s²)³`, attained at `s = 1/√5`.
pub fn bump_derivative_bound() -> f64 {
    96.0 / (25.0 * 5f64.sqrt())
}

/// The bump profile `b(s) = (1 - s²)³` on `[0, 1]`, zero outside.
pub fn bump(s: f64) -> f64 {
    let q = s * s;
    if q >= 1.0 {
        0.0
    } else {
        let w = 1.0 - q;
        w * w * w
    }
}

/// A geodesic ball used as a sampling region.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

/// A radial bump displacement `x ↦ x + λ·b(|x - c|/ρ)·u`, applied in the
/// normal chart at `c` on curved models.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
    /// Displacement direction; projected to the tangent space at `center`
    /// and normalized when the warp is built.
    pub direction: Vec<f64>,
}

impl PerturbationSpec {
    pub fn new(center: Point, radius: f64, amplitude: f64, direction: Vec<f64>) -> Self {
        PerturbationSpec {
            center,
            radius,
            amplitude,
            direction,
        }
    }

    /// Lipschitz constant of the displacement term, `|λ|·max|b'|/ρ`.
    pub fn slope(&self) -> f64 {
        self.amplitude.abs() * bump_derivative_bound() / self.radius
    }

    /// Bilipschitz constant of the warp itself in a flat chart: `1/(1 - slope)`.
    pub fn warp_bound(&self) -> f64 {
        1.0 / (1.0 - self.slope())
    }

    /// Lipschitz bound of `ψ∘g∘ψ⁻¹` for an isometry `g` in a flat chart:
    /// `(1 + slope)/(1 - slope)`.
    pub fn conjugate_bound(&self) -> f64 {
        let k = self.slope();
        (1.0 + k) / (1.0 - k)
    }

    /// Largest amplitude whose conjugate bound stays within `1 + epsilon`
    /// for a bump of the given radius.
    pub fn amplitude_for_budget(radius: f64, epsilon: f64) -> f64 {
        let slope = epsilon / (2.0 + epsilon);
        slope * radius / bump_derivative_bound()
    }
}

#[derive(Clone, Debug)]
struct Warp {
    manifold: ModelManifold,
    center: Vec<f64>,
    radius: f64,
    amplitude: f64,
    direction: Vec<f64>,
}

impl Warp {
    fn new(m: ModelManifold, spec: &PerturbationSpec) -> Result<Self> {
        m.validate(&spec.center)?;
        if !(spec.radius > 0.0) || spec.radius >= m.injectivity_radius() {
            return Err(Error::Validation(format!(
                "warp radius {} must lie in (0, {})",
                spec.radius,
                m.injectivity_radius()
            )));
        }
        if !spec.amplitude.is_finite() || spec.slope() >= 1.0 {
            return Err(Error::Validation(format!(
                "warp amplitude {} not invertible (slope {} >= 1)",
                spec.amplitude,
                spec.slope()
            )));
        }
        if spec.direction.len() != m.ambient_dim() {
            return Err(Error::Validation("warp direction has wrong length".into()));
        }
        let mut u = spec.direction.clone();
        if m.kind() == ManifoldKind::Sphere {
            let along = dot(&u, spec.center.coords());
            u = axpy(&u, -along, spec.center.coords());
        }
        let n = norm(&u);
        if n < 1e-12 {
            return Err(Error::Validation("warp direction is degenerate".into()));
        }
        Ok(Warp {
            manifold: m,
            center: spec.center.coords().to_vec(),
            radius: spec.radius,
            amplitude: spec.amplitude,
            direction: scale(&u, 1.0 / n),
        })
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.amplitude == 0.0 || self.manifold.dist(&self.center, x) >= self.radius {
            return x.to_vec();
        }
        let w = self
            .manifold
            .log_raw(&self.center, x)
            .expect("inside warp ball");
        let shift = self.amplitude * bump(norm(&w) / self.radius);
        let moved = axpy(&w, shift, &self.direction);
        self.manifold
            .exp_raw(&self.center, &moved)
            .expect("warp keeps its ball")
    }

    /// Solves `s = λ·b(|w - s·u|/ρ)` for the chart coordinate `w` of `y` by
    /// safeguarded Newton, then returns `exp_c(w - s·u)`.
    fn invert(&self, y: &[f64]) -> Vec<f64> {
        if self.amplitude == 0.0 || self.manifold.dist(&self.center, y) >= self.radius {
            return y.to_vec();
        }
        let w = self
            .manifold
            .log_raw(&self.center, y)
            .expect("inside warp ball");
        let lam = self.amplitude;
        let rho2 = self.radius * self.radius;
        let (mut lo, mut hi) = if lam > 0.0 { (0.0, lam) } else { (lam, 0.0) };
        let mut s = 0.0;
        let mut settled = false;
        for _ in 0..100 {
            let r = axpy(&w, -s, &self.direction);
            let q = dot(&r, &r) / rho2;
            let (b, db) = if q >= 1.0 {
                (0.0, 0.0)
            } else {
                let om = 1.0 - q;
                // d/ds (1-q)^3 with dq/ds = -2 (r·u)/ρ²
                (
                    om * om * om,
                    6.0 * om * om * dot(&r, &self.direction) / rho2,
                )
            };
            let f = s - lam * b;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let mut next = s - f / (1.0 - lam * db);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - s).abs();
            s = next;
            // one extra Newton step after reaching the tolerance
            if settled {
                break;
            }
            settled = step < 1e-13;
        }
        let back = axpy(&w, -s, &self.direction);
        self.manifold
            .exp_raw(&self.center, &back)
            .expect("inverse stays in warp ball")
    }
}

/// Rotation by `2π·k/n` in consecutive coordinate planes after the fixed block;
/// a leftover odd coordinate is negated (order 2 only).
#[derive(Clone, Debug)]
struct BlockRotation {
    fixed: usize,
    ambient: usize,
    /// `(cos, sin)` of `2π·k/n` for every power `k`.
    table: Vec<(f64, f64)>,
    flip_last: bool,
}

impl BlockRotation {
    fn apply(&self, power: usize, x: &[f64]) -> Vec<f64> {
        let n = self.table.len();
        let k = power % n;
        let mut out = x.to_vec();
        if k == 0 {
            return out;
        }
        let (c, s) = self.table[k];
        let mut i = self.fixed;
        while i + 1 < self.ambient {
            let (a, b) = (x[i], x[i + 1]);
            out[i] = c * a - s * b;
            out[i + 1] = s * a + c * b;
            i += 2;
        }
        if self.flip_last && k % 2 == 1 {
            out[self.ambient - 1] = -x[self.ambient - 1];
        }
        out
    }
}

/// `(cos, sin)` of `2π·k/n`, exact on quarter turns.
fn turn(k: usize, n: usize) -> (f64, f64) {
    if (4 * k).is_multiple_of(n) {
        match (4 * k / n) % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let a = FULL_TURN * k as f64 / n as f64;
        (a.cos(), a.sin())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilipschitzEstimate {
    pub lower: f64,
    pub upper: f64,
    pub samples: usize,
    pub region: Ball,
}

#[derive(Clone, Debug)]
pub struct GroupAction {
    manifold: ModelManifold,
    order: usize,
    fixed_dim: usize,
    rotation: BlockRotation,
    warps: Vec<Warp>,
    perturbations: Vec<PerturbationSpec>,
    seed: u64,
    working_radius: f64,
}

/// Exact cyclic isometry of order `n` fixing a coordinate subspace (flat
/// models) or great subsphere (sphere) of dimension `fixed_dim`.
pub fn make_cyclic_isometry(m: ModelManifold, n: usize, fixed_dim: usize) -> Result<GroupAction> {
    GroupAction::cyclic_isometry(m, n, fixed_dim)
}

/// Conjugates every element of `a` by the warp described in `w`.
pub fn conjugate_perturbation(a: &GroupAction, w: &PerturbationSpec) -> Result<GroupAction> {
    a.conjugate(w)
}

impl GroupAction {
    pub fn cyclic_isometry(m: ModelManifold, n: usize, fixed_dim: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("group order must be >= 1".into()));
        }
        if m.dim() <= fixed_dim {
            return Err(Error::Validation(format!(
                "dimension {} leaves no moving direction around a {}-dimensional fixed set",
                m.dim(),
                fixed_dim
            )));
        }
        let moving = m.dim() - fixed_dim;
        let flip_last = moving % 2 == 1;
        if flip_last && n > 2 {
            return Err(Error::Validation(format!(
                "odd moving dimension {moving} only supports order <= 2"
            )));
        }
        if m.kind() == ManifoldKind::FlatTorus && ![1, 2, 4].contains(&n) {
            return Err(Error::Validation(format!(
                "order {n} rotations do not preserve the square lattice (use 1, 2 or 4)"
            )));
        }
        let fixed = match m.kind() {
            ManifoldKind::Sphere => fixed_dim + 1,
            _ => fixed_dim,
        };
        let rotation = BlockRotation {
            fixed,
            ambient: m.ambient_dim(),
            table: (0..n).map(|k| turn(k, n)).collect(),
            flip_last,
        };
        let working_radius = match m.kind() {
            ManifoldKind::Euclidean => 1.0,
            _ => m.convexity_radius() / 2.0,
        };
        Ok(GroupAction {
            manifold: m,
            order: n,
            fixed_dim,
            rotation,
            warps: Vec::new(),
            perturbations: Vec::new(),
            seed: 0,
            working_radius,
        })
    }

    pub fn conjugate(&self, w: &PerturbationSpec) -> Result<Self> {
        let warp = Warp::new(self.manifold, w)?;
        let mut out = self.clone();
        out.warps.push(warp);
        out.perturbations.push(w.clone());
        Ok(out)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Radius of the default sampling ball about [`anchor`](Self::anchor).
    pub fn with_working_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || radius >= self.manifold.injectivity_radius() {
            return Err(Error::Validation(format!(
                "working radius {radius} out of range"
            )));
        }
        self.working_radius = radius;
        Ok(self)
    }

    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn fixed_dim(&self) -> usize {
        self.fixed_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn working_radius(&self) -> f64 {
        self.working_radius
    }

    pub fn perturbations(&self) -> &[PerturbationSpec] {
        &self.perturbations
    }

    pub fn is_isometric(&self) -> bool {
        self.warps.iter().all(|w| w.amplitude == 0.0)
    }

    /// Flat-chart bilipschitz bound implied by the warps.
    pub fn analytic_bound(&self) -> f64 {
        self.perturbations
            .iter()
            .map(|p| p.conjugate_bound())
            .product()
    }

    /// Chart composite `Ψ = ψ_k ∘ … ∘ ψ_1`.
    pub(crate) fn warp_forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for w in &self.warps {
            y = w.apply(&y);
        }
        y
    }

    pub(crate) fn warp_inverse(&self, y: &[f64]) -> Vec<f64> {
        let mut x = y.to_vec();
        for w in self.warps.iter().rev() {
            x = w.invert(&x);
        }
        x
    }

    fn rotate(&self, power: usize, x: &[f64]) -> Vec<f64> {
        let r = self.rotation.apply(power, x);
        match self.manifold.kind() {
            ManifoldKind::Euclidean => r,
            _ => self.manifold.project(&r).into_coords(),
        }
    }

    /// Image of `x` under `generator^element`.
    pub fn apply(&self, element: usize, x: &Point) -> Point {
        Point::new(self.apply_raw(element, x.coords()))
    }

    pub(crate) fn apply_raw(&self, element: usize, x: &[f64]) -> Vec<f64> {
        if element.is_multiple_of(self.order) {
            return x.to_vec();
        }
        if self.warps.is_empty() {
            return self.rotate(element, x);
        }
        let y = self.warp_inverse(x);
        self.warp_forward(&self.rotate(element, &y))
    }

    pub fn generator(&self, x: &Point) -> Point {
        self.apply(1, x)
    }

    /// `[x, g x, g² x, …, g^(n-1) x]`.
    pub fn orbit(&self, x: &Point) -> Vec<Point> {
        self.orbit_raw(x.coords())
            .into_iter()
            .map(Point::new)
            .collect()
    }

    pub(crate) fn orbit_raw(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.order);
        out.push(x.to_vec());
        if self.order == 1 {
            return out;
        }
        if self.warps.is_empty() {
            out.extend((1..self.order).map(|k| self.rotate(k, x)));
        } else {
            let y = self.warp_inverse(x);
            out.extend((1..self.order).map(|k| self.warp_forward(&self.rotate(k, &y))));
        }
        out
    }

    /// Fixed point of the base rotation used as the sampling anchor
    /// (origin, or the first ambient axis on the sphere).
    pub fn base_anchor(&self) -> Point {
        let mut c = vec![0.0; self.manifold.ambient_dim()];
        if self.manifold.kind() == ManifoldKind::Sphere {
            c[0] = 1.0;
        }
        Point::new(c)
    }

    /// Image of the base anchor under the warps; a fixed point of the action.
    pub fn anchor(&self) -> Point {
        Point::new(self.warp_forward(self.base_anchor().coords()))
    }

    /// Transports a point of the base rotation's fixed set to the fixed set
    /// of this action.
    pub fn transport(&self, y: &Point) -> Point {
        Point::new(self.warp_forward(y.coords()))
    }

    /// Distance from `y` to the fixed set of the unwarped rotation.
    pub fn base_fixed_set_distance(&self, y: &Point) -> f64 {
        let c = y.coords();
        let f = self.rotation.fixed;
        match self.manifold.kind() {
            ManifoldKind::Euclidean => norm(&c[f..]),
            ManifoldKind::Sphere => {
                // angle between y and its projection on the fixed great subsphere
                norm(&c[f..]).atan2(norm(&c[..f]))
            }
            ManifoldKind::FlatTorus => {
                // the fixed set of a lattice rotation contains more than the
                // origin slice, but samples stay near the origin slice
                let moving: Vec<f64> = c[f..]
                    .iter()
                    .map(|&v| if v > 0.5 { v - 1.0 } else { v })
                    .collect();
                norm(&moving)
            }
        }
    }

    pub fn working_region(&self) -> Ball {
        Ball {
            center: self.anchor(),
            radius: self.working_radius,
        }
    }

    /// Points at distance `radius` from the base fixed set near the anchor,
    /// transported by the warps (a shell about the fixed set of this action).
    pub fn sample_shell(&self, radius: f64, count: usize, rng: &mut impl Rng) -> Vec<Point> {
        (0..count).map(|_| self.shell_point(radius, rng)).collect()
    }

    fn shell_point(&self, radius: f64, rng: &mut impl Rng) -> Point {
        let m = &self.manifold;
        let f = self.rotation.fixed;
        let amb = m.ambient_dim();
        let moving = unit_vector(amb - f, rng);
        let y = match m.kind() {
            ManifoldKind::Euclidean | ManifoldKind::FlatTorus => {
                let mut c = vec![0.0; amb];
                for v in c.iter_mut().take(f) {
                    *v = rng.gen_range(-radius..=radius);
                }
                for (i, v) in moving.iter().enumerate() {
                    c[f + i] = radius * v;
                }
                m.project(&c).into_coords()
            }
            ManifoldKind::Sphere => {
                // a point of the fixed subsphere within angle `radius` of e0
                let mut e = vec![0.0; amb];
                e[0] = 1.0;
                if f > 1 {
                    let dir = unit_vector(f - 1, rng);
                    let a: f64 = rng.gen_range(0.0..=radius);
                    e[0] = a.cos();
                    for (i, v) in dir.iter().enumerate() {
                        e[1 + i] = a.sin() * v;
                    }
                }
                let (s, c) = radius.sin_cos();
                let mut y = scale(&e, c);
                for (i, v) in moving.iter().enumerate() {
                    y[f + i] += s * v;
                }
                m.project(&y).into_coords()
            }
        };
        Point::new(self.warp_forward(&y))
    }

    /// Sampled bilipschitz constants over pairs anchored in `region`.
    ///
    /// Pairs are drawn sequentially from one seeded stream, so the estimate
    /// for `N` samples uses a prefix of the pairs for `2N`.
    pub fn estimate_bilipschitz(
        &self,
        region: &Ball,
        samples: usize,
        seed: u64,
    ) -> Result<BilipschitzEstimate> {
        if samples < 2 {
            return Err(Error::Validation("need at least 2 samples".into()));
        }
        let m = &self.manifold;
        m.validate(&region.center)?;
        if !(region.radius > 0.0) || region.radius >= m.injectivity_radius() {
            return Err(Error::Validation("region radius out of range".into()));
        }
        let mut rng = sampling::rng(seed);
        let mut lower = 1.0f64;
        let mut upper = 1.0f64;
        for _ in 0..samples {
            let (x, y, d) = loop {
                let x = sampling::point_in_ball(m, &region.center, region.radius, &mut rng);
                let dir = unit_tangent(m, &x, &mut rng);
                let u: f64 = rng.gen();
                let len = region.radius * 10f64.powf(-2.0 * u);
                let v = scale(&dir, len);
                let y = m.exp_raw(x.coords(), &v)?;
                let d = m.dist(x.coords(), &y);
                if d >= 1e-9 {
                    break (x, y, d);
                }
            };
            let ox = self.orbit_raw(x.coords());
            let oy = self.orbit_raw(&y);
            for (gx, gy) in ox.iter().zip(&oy).skip(1) {
                let r = m.dist(gx, gy) / d;
                upper = upper.max(r);
                lower = lower.min(r);
            }
        }
        Ok(BilipschitzEstimate {
            lower,
            upper,
            samples,
            region: region.clone(),
        })
    }

    /// `max d(gⁿ x, x)` over seeded points of the working region, with `gⁿ`
    /// computed by iterating the generator.
    pub fn verify_group_law(&self, test_points: usize, seed: u64) -> f64 {
        let m = &self.manifold;
        let region = self.working_region();
        let mut rng = sampling::rng(seed);
        let mut worst = 0.0f64;
        for _ in 0..test_points {
            let x = sampling::point_in_ball(m, &region.center, region.radius, &mut rng);
            let mut y = x.coords().to_vec();
            for _ in 0..self.order {
                y = self.apply_raw(1, &y);
            }
            worst = worst.max(m.dist(&y, x.coords()));
        }
        worst
    }
}
