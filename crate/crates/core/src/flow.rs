//! The barycentric vector field `v(x) = log_x(B(x))` and its flow.
//!
//! Integration is classical RK4 in ambient coordinates with a projection back
//! onto the manifold after every stage. The step is always a divisor of the
//! contraction time `tau`, so trajectory samples land exactly on multiples of
//! `tau` and envelope checks can index them without rounding.

use std::io::Write;

use rayon::prelude::*;

use crate::barycenter::{orbit_barycenter_raw, DEGENERACY_FLOOR};
use crate::group_action::{Ball, GroupAction};
use crate::linalg::{axpy, norm, scale, sub};
use crate::manifold::{ManifoldKind, Point, TangentVec};
use crate::numfmt::sig17;
use crate::{Error, Result};

/// Speed below which a trajectory counts as converged.
pub const CONV_TOL: f64 = 1e-10;
/// Requested RK4 step before capping and alignment.
pub const DEFAULT_STEP: f64 = 0.005;
/// Default integration horizon.
pub const DEFAULT_MAX_TIME: f64 = 100.0;
/// Largest remainder the flow length may carry.
pub const LENGTH_REMAINDER_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    MaxTime,
    LeftRegion,
}

impl FlowStatus {
    pub fn name(self) -> &'static str {
        match self {
            FlowStatus::Converged => "converged",
            FlowStatus::MaxTime => "max_time",
            FlowStatus::LeftRegion => "left_region",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub point: Point,
    /// `‖v‖` at `point`.
    pub speed: f64,
    /// Arc length travelled since `t = 0` (RK4 quadrature of the speed).
    pub arc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    /// Last point when the trajectory converged.
    pub terminal: Option<Point>,
    pub status: FlowStatus,
    /// Step used between consecutive samples.
    pub step: f64,
}

impl FlowTrajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples
            .last()
            .expect("trajectories hold at least one sample")
    }

    /// Writes `t,x1..xd,speed` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.samples[0].point.len();
        let mut header = String::from("t");
        for i in 1..=d {
            header.push_str(&format!(",x{i}"));
        }
        header.push_str(",speed");
        writeln!(w, "{header}")?;
        for s in &self.samples {
            let mut row = sig17(s.t);
            for c in s.point.coords() {
                row.push(',');
                row.push_str(&sig17(*c));
            }
            row.push(',');
            row.push_str(&sig17(s.speed));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Integration settings shared by every flow measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams {
    pub tau: f64,
    pub step: f64,
    pub conv_tol: f64,
    pub max_time: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            tau: crate::TAU,
            step: DEFAULT_STEP,
            conv_tol: CONV_TOL,
            max_time: DEFAULT_MAX_TIME,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Validation(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Validation(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.conv_tol >= 0.0) {
            return Err(Error::Validation("conv_tol must be nonnegative".into()));
        }
        if !(self.max_time >= 0.0 && self.max_time.is_finite()) {
            return Err(Error::Validation(
                "max_time must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Step capped by `0.01/(2+ε)` (the field is `(2+ε)`-Lipschitz) and
    /// shrunk so that it divides `tau`.
    pub fn step_for(&self, a: &GroupAction) -> f64 {
        let h0 = capped_step(a, self.step);
        self.tau / (self.tau / h0).ceil()
    }
}

fn capped_step(a: &GroupAction, step: f64) -> f64 {
    let eps = (a.analytic_bound() - 1.0).max(0.0);
    step.min(0.01 / (2.0 + eps))
}

/// `v(x) = log_x(B(x))`.
pub fn vector_field(a: &GroupAction, x: &Point) -> Result<TangentVec> {
    a.manifold().validate(x)?;
    Ok(TangentVec {
        base: x.clone(),
        components: field_raw(a, x.coords())?,
    })
}

pub(crate) fn field_raw(a: &GroupAction, x: &[f64]) -> Result<Vec<f64>> {
    let b = orbit_barycenter_raw(a, x)?;
    a.manifold().log_raw(x, b.point.coords())
}

fn project(a: &GroupAction, x: Vec<f64>) -> Vec<f64> {
    match a.manifold().kind() {
        ManifoldKind::Euclidean => x,
        _ => a.manifold().project(&x).into_coords(),
    }
}

/// One RK4 step of size `h` from `x` given `k1 = v(x)`; returns the new point
/// and the matching arc-length increment.
pub(crate) fn rk4_step(a: &GroupAction, x: &[f64], k1: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
    let k2 = field_raw(a, &project(a, axpy(x, h / 2.0, k1)))?;
    let k3 = field_raw(a, &project(a, axpy(x, h / 2.0, &k2)))?;
    let k4 = field_raw(a, &project(a, axpy(x, h, &k3)))?;
    let mut y = x.to_vec();
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let arc = h / 6.0 * (norm(k1) + 2.0 * norm(&k2) + 2.0 * norm(&k3) + norm(&k4));
    Ok((project(a, y), arc))
}

fn is_guard(e: &Error) -> bool {
    matches!(e, Error::Domain(_))
}

/// Integrates `steps` steps of size `h`, stopping early once the speed drops
/// to `stop_speed` or the orbit no longer fits in a convex ball.
pub(crate) fn run(
    a: &GroupAction,
    x0: &[f64],
    h: f64,
    steps: usize,
    stop_speed: f64,
) -> Result<FlowTrajectory> {
    let mut samples = Vec::new();
    let mut x = x0.to_vec();
    let mut arc = 0.0;
    let mut status = FlowStatus::MaxTime;
    for i in 0..=steps {
        let t = i as f64 * h;
        let k1 = match field_raw(a, &x) {
            Ok(v) => v,
            Err(e) if is_guard(&e) && i > 0 => {
                status = FlowStatus::LeftRegion;
                break;
            }
            Err(e) => return Err(e),
        };
        let speed = norm(&k1);
        samples.push(FlowSample {
            t,
            point: Point::new(x.clone()),
            speed,
            arc,
        });
        if speed <= stop_speed {
            status = FlowStatus::Converged;
            break;
        }
        if i == steps {
            break;
        }
        match rk4_step(a, &x, &k1, h) {
            Ok((y, da)) => {
                x = y;
                arc += da;
            }
            Err(e) if is_guard(&e) => {
                status = FlowStatus::LeftRegion;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let terminal = match status {
        FlowStatus::Converged => Some(samples.last().unwrap().point.clone()),
        _ => None,
    };
    Ok(FlowTrajectory {
        samples,
        terminal,
        status,
        step: h,
    })
}

/// Integrates `ẋ = v(x)` from `x0` until the speed drops to `conv_tol` or
/// `max_time` is reached.
pub fn integrate(a: &GroupAction, x0: &Point, params: &FlowParams) -> Result<FlowTrajectory> {
    params.validate()?;
    a.manifold().validate(x0)?;
    let h = params.step_for(a);
    let steps = (params.max_time / h).ceil() as usize;
    let traj = run(a, x0.coords(), h, steps, params.conv_tol)?;
    if traj.samples.is_empty() {
        return Err(Error::Domain(
            "initial point outside the guarded region".into(),
        ));
    }
    Ok(traj)
}

/// `φ_t(x)`, integrated with the largest admissible step dividing `t`.
pub fn flow_to(a: &GroupAction, x: &Point, t: f64, step: f64) -> Result<Point> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!(
            "flow time must be nonnegative, got {t}"
        )));
    }
    a.manifold().validate(x)?;
    if t == 0.0 {
        return Ok(x.clone());
    }
    let h0 = capped_step(a, step);
    let m = (t / h0).ceil() as usize;
    let traj = run(a, x.coords(), t / m as f64, m, 0.0)?;
    match traj.status {
        FlowStatus::LeftRegion => Err(Error::Domain(format!(
            "flow left the guarded region before t = {t}"
        ))),
        _ => Ok(traj.last().point.clone()),
    }
}

/// `‖v(φ_τ(x))‖ / ‖v(x)‖`.
pub fn contraction_ratio(a: &GroupAction, x: &Point, tau: f64) -> Result<f64> {
    contraction_ratio_with(a, x, tau, DEFAULT_STEP)
}

pub fn contraction_ratio_with(a: &GroupAction, x: &Point, tau: f64, step: f64) -> Result<f64> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Validation(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    let v0 = vector_field(a, x)?.norm();
    if v0 <= DEGENERACY_FLOOR {
        return Err(Error::Degenerate(format!(
            "speed {v0:e} at x is below the degeneracy floor"
        )));
    }
    if tau == 0.0 {
        return Ok(1.0);
    }
    let y = flow_to(a, x, tau, step)?;
    Ok(norm(&field_raw(a, y.coords())?) / v0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub tau: f64,
    pub worst_ratio: f64,
    pub sample_count: usize,
    /// Smallest ball about the anchor containing every sample.
    pub region: Ball,
}

/// Contraction ratios over `points`, computed in parallel and reduced in
/// input order.
pub fn contraction_sweep(a: &GroupAction, points: &[Point], tau: f64) -> Result<ContractionReport> {
    let ratios: Vec<Result<f64>> = points
        .par_iter()
        .map(|x| contraction_ratio(a, x, tau))
        .collect();
    let mut worst = 0.0f64;
    for r in ratios {
        worst = worst.max(r?);
    }
    Ok(ContractionReport {
        tau,
        worst_ratio: worst,
        sample_count: points.len(),
        region: enclosing_ball(a, points),
    })
}

pub(crate) fn enclosing_ball(a: &GroupAction, points: &[Point]) -> Ball {
    let center = a.anchor();
    let radius = points
        .iter()
        .map(|p| a.manifold().dist(center.coords(), p.coords()))
        .fold(0.0, f64::max);
    Ball { center, radius }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowLength {
    /// Quadrature plus remainder.
    pub length: f64,
    pub quadrature: f64,
    /// Geometric tail bound `‖v(φ_T(x))‖·τ/(1−k)`.
    pub remainder: f64,
    /// Time `T` at which the quadrature stopped.
    pub time: f64,
}

/// Speed at which the integration of `l` stops so that the tail bound stays
/// below [`LENGTH_REMAINDER_TOL`].
pub(crate) fn length_floor(tau: f64, k: f64) -> f64 {
    CONV_TOL.min(LENGTH_REMAINDER_TOL * (1.0 - k) / tau)
}

fn check_contraction_constants(tau: f64, k: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Validation(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Validation(format!(
            "contraction factor must lie in (0, 1), got {k}"
        )));
    }
    Ok(())
}

/// Flow trajectory used for `l`: integrated on the `tau` grid until the
/// speed reaches [`length_floor`], with contraction checked at every multiple
/// of `tau`.
pub(crate) fn length_trajectory(
    a: &GroupAction,
    x: &[f64],
    tau: f64,
    k: f64,
) -> Result<FlowTrajectory> {
    check_contraction_constants(tau, k)?;
    let params = FlowParams {
        tau,
        ..FlowParams::default()
    };
    let h = params.step_for(a);
    let m = (tau / h).round() as usize;
    let steps = (params.max_time / h).ceil() as usize;
    let traj = run(a, x, h, steps, length_floor(tau, k))?;
    if traj.samples.is_empty() {
        return Err(Error::Domain(
            "initial point outside the guarded region".into(),
        ));
    }
    let s = &traj.samples;
    let mut j = 0;
    while (j + 1) * m < s.len() {
        let (s0, s1) = (s[j * m].speed, s[(j + 1) * m].speed);
        if s0 > DEGENERACY_FLOOR && s1 > k * s0 {
            return Err(Error::ContractionViolated {
                time: s[j * m].t,
                ratio: s1 / s0,
                k,
            });
        }
        j += 1;
    }
    if traj.status != FlowStatus::Converged {
        let last = traj.last();
        return Err(Error::FlowNotConverged {
            time: last.t,
            speed: last.speed,
            trajectory: Box::new(traj),
        });
    }
    Ok(traj)
}

pub(crate) fn length_from(traj: &FlowTrajectory, tau: f64, k: f64) -> FlowLength {
    let last = traj.last();
    let remainder = last.speed * tau / (1.0 - k);
    FlowLength {
        length: last.arc + remainder,
        quadrature: last.arc,
        remainder,
        time: last.t,
    }
}

/// Flow length `l(x) = ∫₀^∞ ‖v(φ_t(x))‖ dt`.
pub fn flow_length(a: &GroupAction, x: &Point, tau: f64, k: f64) -> Result<FlowLength> {
    a.manifold().validate(x)?;
    let traj = length_trajectory(a, x.coords(), tau, k)?;
    Ok(length_from(&traj, tau, k))
}

/// Limit of the flow line through `x` and `max_g d(g x*, x*)`.
pub fn limit_point(a: &GroupAction, x: &Point, conv_tol: f64) -> Result<(Point, f64)> {
    let params = FlowParams {
        conv_tol,
        ..FlowParams::default()
    };
    let traj = integrate(a, x, &params)?;
    match &traj.terminal {
        Some(p) => {
            let d = fixed_displacement(a, p);
            Ok((p.clone(), d))
        }
        None => {
            let last = traj.last();
            Err(Error::FlowNotConverged {
                time: last.t,
                speed: last.speed,
                trajectory: Box::new(traj.clone()),
            })
        }
    }
}

/// `max_g d(g p, p)`.
pub fn fixed_displacement(a: &GroupAction, p: &Point) -> f64 {
    let m = a.manifold();
    (1..a.order())
        .map(|k| m.dist(&a.apply_raw(k, p.coords()), p.coords()))
        .fold(0.0, f64::max)
}

/// Worst slack of `‖v(φ_t(x))‖ ≤ ‖v(x)‖·k^⌊t/τ⌋` over the trajectory samples
/// up to `horizon`. Negative values mean the envelope is violated.
pub fn decay_envelope_check(
    a: &GroupAction,
    x: &Point,
    tau: f64,
    k: f64,
    horizon: f64,
) -> Result<f64> {
    check_contraction_constants(tau, k)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Validation(
            "horizon must be finite and nonnegative".into(),
        ));
    }
    a.manifold().validate(x)?;
    let params = FlowParams {
        tau,
        ..FlowParams::default()
    };
    let h = params.step_for(a);
    let m = (tau / h).round() as usize;
    let steps = (horizon / h).round() as usize;
    let traj = run(a, x.coords(), h, steps, CONV_TOL)?;
    let s0 = match traj.samples.first() {
        Some(s) => s.speed,
        None => {
            return Err(Error::Domain(
                "initial point outside the guarded region".into(),
            ))
        }
    };
    let mut worst = f64::INFINITY;
    for (i, s) in traj.samples.iter().enumerate() {
        let bound = s0 * k.powi((i / m) as i32);
        worst = worst.min(bound - s.speed);
    }
    Ok(worst)
}

/// Curved-versus-flat comparison about the anchor `p` of `a`.
///
/// For each `δ` the start point is `exp_p(δ w)` for a fixed unit tangent `w`
/// at `p`. The curved flow runs on the manifold; the flat flow runs in the
/// normal chart `u = log_p(x)` with the action pulled back to the chart and
/// Euclidean orbit means. Both are integrated to `tau` and compared on the
/// manifold.
pub fn curvature_deviation(
    a: &GroupAction,
    deltas: &[f64],
    tau: f64,
    step: f64,
) -> Result<Vec<(f64, f64)>> {
    let m = a.manifold();
    let limit = m.convexity_radius() / 4.0;
    for (i, &d) in deltas.iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::Validation(format!(
                "delta must be positive, got {d}"
            )));
        }
        if d >= limit {
            return Err(Error::Domain(format!(
                "delta {d} not below convexity radius / 4 = {limit}"
            )));
        }
        if i > 0 && d >= deltas[i - 1] {
            return Err(Error::Validation(
                "deltas must be strictly decreasing".into(),
            ));
        }
    }
    if !(tau > 0.0) {
        return Err(Error::Validation("tau must be positive".into()));
    }
    let p = a.anchor();
    let w = chart_direction(a, &p);
    let h0 = capped_step(a, step);
    let n = (tau / h0).ceil() as usize;
    let h = tau / n as f64;
    let mut out = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let u0 = scale(&w, d);
        let x0 = Point::new(m.exp_raw(p.coords(), &u0)?);
        let curved = flow_to(a, &x0, tau, step)?;
        let mut u = u0;
        for _ in 0..n {
            u = chart_rk4(a, &p, &u, h)?;
        }
        let flat = m.exp_raw(p.coords(), &u)?;
        out.push((d, m.dist(curved.coords(), &flat)));
    }
    Ok(out)
}

/// `cos(0.7)·t₁ + sin(0.7)·t₂` for the first two tangent directions at `p`
/// obtained from the ambient axes; generic with respect to the block rotation.
fn chart_direction(a: &GroupAction, p: &Point) -> Vec<f64> {
    let m = a.manifold();
    let amb = m.ambient_dim();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for i in 0..amb {
        let mut e = vec![0.0; amb];
        e[i] = 1.0;
        if m.kind() == ManifoldKind::Sphere {
            e = axpy(&e, -p.coords()[i], p.coords());
        }
        for b in &basis {
            let c = crate::linalg::dot(&e, b);
            e = axpy(&e, -c, b);
        }
        let n = norm(&e);
        if n > 1e-6 {
            basis.push(scale(&e, 1.0 / n));
        }
        if basis.len() == 2 {
            break;
        }
    }
    match basis.len() {
        1 => basis.remove(0),
        _ => axpy(&scale(&basis[0], 0.7f64.cos()), 0.7f64.sin(), &basis[1]),
    }
}

fn chart_field(a: &GroupAction, p: &Point, u: &[f64]) -> Result<Vec<f64>> {
    let m = a.manifold();
    let x = m.exp_raw(p.coords(), u)?;
    let orbit = a.orbit_raw(&x);
    let mut mean = vec![0.0; u.len()];
    for q in &orbit {
        for (acc, c) in mean.iter_mut().zip(m.log_raw(p.coords(), q)?) {
            *acc += c;
        }
    }
    Ok(sub(&scale(&mean, 1.0 / orbit.len() as f64), u))
}

fn chart_rk4(a: &GroupAction, p: &Point, u: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = chart_field(a, p, u)?;
    let k2 = chart_field(a, p, &axpy(u, h / 2.0, &k1))?;
    let k3 = chart_field(a, p, &axpy(u, h / 2.0, &k2))?;
    let k4 = chart_field(a, p, &axpy(u, h, &k3))?;
    let mut y = u.to_vec();
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(y)
}

/// Least-squares slope of `ln(deviation)` against `ln(δ)`.
pub fn loglog_slope(data: &[(f64, f64)]) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::Validation(
            "need at least two points for a slope".into(),
        ));
    }
    if data.iter().any(|&(d, e)| !(d > 0.0 && e > 0.0)) {
        return Err(Error::Degenerate(
            "log-log fit needs positive values".into(),
        ));
    }
    let n = data.len() as f64;
    let xs: Vec<f64> = data.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = data.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
