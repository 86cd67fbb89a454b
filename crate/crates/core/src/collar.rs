//! Level sets `Z = l⁻¹(b)` of the flow length, the product map
//! `Ψ(z, t) = φ_{t/(1−t)}(z)`, and the boundary extension `z ↦ lim φ_t(z)`.

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::flow::{self, field_raw, length_from, length_trajectory, FlowLength};
use crate::group_action::GroupAction;
use crate::linalg::scale;
use crate::manifold::Point;
use crate::sampling::{self, unit_tangent};
use crate::{Error, Result};

/// Bisection tolerance on the crossing time.
pub const CROSSING_TIME_TOL: f64 = 1e-9;

/// A point of `Z` found from a starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPoint {
    pub point: Point,
    /// Flow time from the starting point to `point`.
    pub t_star: f64,
    /// `l` at the starting point.
    pub source_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollarEntry {
    pub source: Point,
    pub z: Point,
    pub t_star: f64,
    pub x_star: Point,
    /// `|l(z) − b|` with `l(z)` recomputed from `z`.
    pub l_residual: f64,
    /// `max_g d(g x*, x*)`.
    pub limit_displacement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollarChart {
    pub b: f64,
    pub tau: f64,
    pub k: f64,
    pub entries: Vec<CollarEntry>,
    /// Sources skipped because `l(x) ≤ b`.
    pub skipped: usize,
}

impl CollarChart {
    pub fn z_samples(&self) -> Vec<&Point> {
        self.entries.iter().map(|e| &e.z).collect()
    }

    pub fn limit_map(&self) -> Vec<(&Point, &Point)> {
        self.entries.iter().map(|e| (&e.z, &e.x_star)).collect()
    }

    pub fn worst_level_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.l_residual)
            .fold(0.0, f64::max)
    }

    pub fn worst_limit_displacement(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.limit_displacement)
            .fold(0.0, f64::max)
    }

    /// `{b, samples: [{z, x_star, l_residual}]}`.
    pub fn to_json(&self) -> Value {
        let samples: Vec<Value> = self
            .entries
            .iter()
            .map(|e| {
                json!({
                    "z": e.z.coords(),
                    "x_star": e.x_star.coords(),
                    "l_residual": e.l_residual,
                })
            })
            .collect();
        json!({ "b": self.b, "samples": samples })
    }
}

/// `φ_{t*}(x)` with `l(φ_{t*}(x)) = b`.
pub fn find_level_point(a: &GroupAction, x: &Point, b: f64) -> Result<Point> {
    find_level(a, x, b, crate::TAU, crate::K_PRIME).map(|p| p.point)
}

pub fn find_level(a: &GroupAction, x: &Point, b: f64, tau: f64, k: f64) -> Result<LevelPoint> {
    a.manifold().validate(x)?;
    if !(b > 0.0) {
        return Err(Error::OutOfRange(format!(
            "level must be positive, got {b}"
        )));
    }
    let traj = length_trajectory(a, x.coords(), tau, k)?;
    let l = length_from(&traj, tau, k).length;
    if b > l {
        return Err(Error::OutOfRange(format!(
            "l(x) = {l} is below the level {b}"
        )));
    }
    if b == l {
        return Ok(LevelPoint {
            point: x.clone(),
            t_star: 0.0,
            source_length: l,
        });
    }
    // l(φ_t x) = l(x) − arc(t): the crossing is where the arc reaches l − b
    let target = l - b;
    let s = &traj.samples;
    let i = s.partition_point(|q| q.arc <= target);
    if i == s.len() {
        return Err(Error::OutOfRange(format!(
            "level {b} lies inside the certified tail remainder"
        )));
    }
    let knot = &s[i - 1];
    let k1 = field_raw(a, knot.point.coords())?;
    let (mut lo, mut hi) = (0.0, traj.step);
    while hi - lo > CROSSING_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        let (_, da) = flow::rk4_step(a, knot.point.coords(), &k1, mid)?;
        if knot.arc + da <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_star = 0.5 * (lo + hi);
    let (z, _) = flow::rk4_step(a, knot.point.coords(), &k1, s_star)?;
    Ok(LevelPoint {
        point: Point::new(z),
        t_star: knot.t + s_star,
        source_length: l,
    })
}

/// `Ψ(z, t) = φ_{t/(1−t)}(z)` for `t ∈ [0, 1)`.
pub fn product_map(a: &GroupAction, z: &Point, t: f64) -> Result<Point> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Domain(format!(
            "product map parameter must lie in [0, 1), got {t}"
        )));
    }
    flow::flow_to(a, z, t / (1.0 - t), flow::DEFAULT_STEP)
}

/// Number of times `l(φ_t(x)) − b` changes sign along the sampled
/// trajectory, with `l = 0` appended for the limit point.
pub fn single_crossing_check(a: &GroupAction, x: &Point, b: f64) -> Result<usize> {
    crossing_count(a, x, b, crate::TAU, crate::K_PRIME)
}

pub fn crossing_count(a: &GroupAction, x: &Point, b: f64, tau: f64, k: f64) -> Result<usize> {
    a.manifold().validate(x)?;
    let traj = length_trajectory(a, x.coords(), tau, k)?;
    let l = length_from(&traj, tau, k).length;
    let values = traj
        .samples
        .iter()
        .map(|s| l - s.arc)
        .chain(std::iter::once(0.0));
    let mut count = 0;
    let mut above: Option<bool> = None;
    for v in values {
        let now = v >= b;
        if let Some(prev) = above {
            if prev != now {
                count += 1;
            }
        }
        above = Some(now);
    }
    Ok(count)
}

/// Half the median of `l` over `sources`.
pub fn choose_level(a: &GroupAction, sources: &[Point], tau: f64, k: f64) -> Result<f64> {
    if sources.is_empty() {
        return Err(Error::Validation(
            "no sources to choose a level from".into(),
        ));
    }
    let lengths: Vec<Result<FlowLength>> = sources
        .par_iter()
        .map(|x| flow::flow_length(a, x, tau, k))
        .collect();
    let mut ls = Vec::with_capacity(lengths.len());
    for l in lengths {
        ls.push(l?.length);
    }
    ls.sort_by(f64::total_cmp);
    let n = ls.len();
    let median = if n % 2 == 1 {
        ls[n / 2]
    } else {
        0.5 * (ls[n / 2 - 1] + ls[n / 2])
    };
    Ok(0.5 * median)
}

/// Builds the chart: for every source with `l(x) > b`, its level point, the
/// limit of the flow through it and the level residual.
pub fn build_chart(
    a: &GroupAction,
    sources: &[Point],
    b: f64,
    tau: f64,
    k: f64,
    conv_tol: f64,
) -> Result<CollarChart> {
    let built: Vec<Result<Option<CollarEntry>>> = sources
        .par_iter()
        .map(|x| chart_entry(a, x, b, tau, k, conv_tol))
        .collect();
    let mut entries = Vec::new();
    let mut skipped = 0;
    for e in built {
        match e? {
            Some(e) => entries.push(e),
            None => skipped += 1,
        }
    }
    Ok(CollarChart {
        b,
        tau,
        k,
        entries,
        skipped,
    })
}

fn chart_entry(
    a: &GroupAction,
    x: &Point,
    b: f64,
    tau: f64,
    k: f64,
    conv_tol: f64,
) -> Result<Option<CollarEntry>> {
    let level = match find_level(a, x, b, tau, k) {
        Ok(p) => p,
        Err(Error::OutOfRange(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let lz = flow::flow_length(a, &level.point, tau, k)?;
    let (x_star, disp) = flow::limit_point(a, &level.point, conv_tol)?;
    Ok(Some(CollarEntry {
        source: x.clone(),
        z: level.point,
        t_star: level.t_star,
        x_star,
        l_residual: (lz.length - b).abs(),
        limit_displacement: disp,
    }))
}

/// Worst `d(x*₁, x*₂)/d(z₁, z₂)` over `pairs` nearby pairs on `Z`.
///
/// Each pair starts from a chart entry: its source is displaced by `scale`
/// in a seeded random direction, the displaced source is flowed to `Z`, and
/// both level points are sent to their limits.
pub fn continuity_modulus(
    a: &GroupAction,
    chart: &CollarChart,
    pairs: usize,
    seed: u64,
    scale_len: f64,
) -> Result<f64> {
    if chart.entries.is_empty() {
        return Err(Error::Validation("chart has no entries".into()));
    }
    if !(scale_len > 0.0) {
        return Err(Error::Validation("pair scale must be positive".into()));
    }
    let m = a.manifold();
    let mut rng = sampling::rng(seed);
    let jobs: Vec<(usize, Vec<f64>)> = (0..pairs)
        .map(|i| {
            let e = &chart.entries[i % chart.entries.len()];
            let dir = unit_tangent(m, &e.source, &mut rng);
            let u: f64 = rng.gen_range(0.5..=1.0);
            (i % chart.entries.len(), scale(&dir, u * scale_len))
        })
        .collect();
    let ratios: Vec<Result<Option<f64>>> = jobs
        .par_iter()
        .map(|(idx, v)| {
            let e = &chart.entries[*idx];
            let x2 = Point::new(m.exp_raw(e.source.coords(), v)?);
            let z2 = match find_level(a, &x2, chart.b, chart.tau, chart.k) {
                Ok(p) => p.point,
                Err(Error::OutOfRange(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let dz = m.dist(e.z.coords(), z2.coords());
            if dz < 1e-12 {
                return Ok(None);
            }
            let (x2_star, _) = flow::limit_point(a, &z2, flow::CONV_TOL)?;
            Ok(Some(m.dist(e.x_star.coords(), x2_star.coords()) / dz))
        })
        .collect();
    let mut worst = 0.0f64;
    for r in ratios {
        if let Some(r) = r? {
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_action::make_cyclic_isometry;
    use crate::linalg::norm;
    use crate::manifold::ModelManifold;
    use crate::{K_PRIME, TAU};

    fn rot3() -> GroupAction {
        make_cyclic_isometry(ModelManifold::euclidean(2), 3, 0).unwrap()
    }

    #[test]
    fn level_point_on_linear_flow() {
        // l(φ_t x) = e^{-t} l(x): the half level is reached at t = ln 2
        let a = rot3();
        let x = Point::new(vec![0.6, 0.8]);
        let p = find_level(&a, &x, 0.5, TAU, K_PRIME).unwrap();
        assert!((p.t_star - 2f64.ln()).abs() <= 1e-6);
        assert!((norm(p.point.coords()) - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn level_at_source_length_is_the_source() {
        let a = rot3();
        let x = Point::new(vec![0.3, 0.1]);
        let l = flow::flow_length(&a, &x, TAU, K_PRIME).unwrap().length;
        let p = find_level(&a, &x, l, TAU, K_PRIME).unwrap();
        assert_eq!(p.point, x);
        assert_eq!(p.t_star, 0.0);
        assert!(matches!(
            find_level_point(&a, &x, 2.0 * l),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn same_flow_line_same_level_point() {
        let a = rot3();
        let x = Point::new(vec![0.6, 0.8]);
        let y = flow::flow_to(&a, &x, 0.3, flow::DEFAULT_STEP).unwrap();
        let zx = find_level_point(&a, &x, 0.25).unwrap();
        let zy = find_level_point(&a, &y, 0.25).unwrap();
        assert!(a.manifold().dist(zx.coords(), zy.coords()) <= 1e-6);
    }

    #[test]
    fn product_map_parameters() {
        let a = rot3();
        let z = Point::new(vec![0.5, 0.0]);
        assert_eq!(product_map(&a, &z, 0.0).unwrap(), z);
        let half = product_map(&a, &z, 0.5).unwrap();
        let one = flow::flow_to(&a, &z, 1.0, flow::DEFAULT_STEP).unwrap();
        assert!(a.manifold().dist(half.coords(), one.coords()) <= 1e-14);
        assert!(matches!(product_map(&a, &z, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn crossing_counts() {
        let a = rot3();
        let x = Point::new(vec![0.6, 0.8]);
        assert_eq!(single_crossing_check(&a, &x, 0.5).unwrap(), 1);
        assert_eq!(single_crossing_check(&a, &x, 1.5).unwrap(), 0);
        assert_eq!(single_crossing_check(&a, &x, 1e-12).unwrap(), 1);
    }

    #[test]
    fn linear_chart_limits_are_projections() {
        // x* = P z: the modulus never exceeds ‖P‖ = 1
        let a = make_cyclic_isometry(ModelManifold::euclidean(3), 4, 1).unwrap();
        let mut r = sampling::rng(11);
        let sources = a.sample_shell(0.2, 16, &mut r);
        let b = choose_level(&a, &sources, TAU, K_PRIME).unwrap();
        let chart = build_chart(&a, &sources, b, TAU, K_PRIME, flow::CONV_TOL).unwrap();
        assert_eq!(chart.entries.len() + chart.skipped, 16);
        assert!(chart.worst_level_residual() <= 1e-7);
        for e in &chart.entries {
            assert!((e.x_star.coords()[0] - e.z.coords()[0]).abs() <= 1e-9);
        }
        let w = continuity_modulus(&a, &chart, 32, 5, 0.02).unwrap();
        assert!(w <= 1.0 + 1e-6);

        let doc = chart.to_json();
        assert_eq!(doc["b"].as_f64(), Some(b));
        assert_eq!(
            doc["samples"].as_array().unwrap().len(),
            chart.entries.len()
        );
        assert_eq!(doc["samples"][0]["x_star"].as_array().unwrap().len(), 3);
    }
}
