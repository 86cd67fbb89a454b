use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::report::{num, nums, CheckOutcome};
use super::scenario::{CheckKind, Scenario};
use crate::barycenter::{max_displacement_ratio, variance_identity};
use crate::certify::{certify_chain, epsilon_frontier, Interval};
use crate::collar::{build_chart, choose_level, continuity_modulus, crossing_count};
use crate::flow::{
    self, contraction_sweep, curvature_deviation, decay_envelope_check, limit_point,
};
use crate::group_action::GroupAction;
use crate::manifold::Point;
use crate::{sampling, Error, Result};

/// `max d(gⁿx, x)` allowed by the group law check.
pub const GROUP_LAW_TOL: f64 = 1e-9;
/// Relative residual allowed by the variance identity check.
pub const VARIANCE_TOL: f64 = 1e-10;
/// Level residual allowed on `Z`.
pub const LEVEL_TOL: f64 = 1e-7;
/// Largest allowed ratio between moduli at consecutive dyadic scales.
pub const MODULUS_GROWTH: f64 = 4.0;
/// Accepted slope window for curvature deviation against `δ`.
pub const SLOPE_WINDOW: (f64, f64) = (1.85, 2.15);

pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub action: GroupAction,
    sweep: Option<Vec<Point>>,
}

impl<'a> Context<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        Ok(Context {
            action: scenario.build_action()?,
            scenario,
            sweep: None,
        })
    }

    /// Shell samples, split evenly over the shells and drawn from one
    /// seeded stream in shell order.
    pub fn sweep_points(&mut self) -> &[Point] {
        if self.sweep.is_none() {
            let s = &self.scenario.sweep;
            let mut rng = sampling::rng(s.seed);
            let n = s.shells.len();
            let mut pts = Vec::with_capacity(s.samples);
            for (i, &r) in s.shells.iter().enumerate() {
                let count = s.samples / n + usize::from(i < s.samples % n);
                pts.extend(self.action.sample_shell(r, count, &mut rng));
            }
            self.sweep = Some(pts);
        }
        self.sweep.as_deref().unwrap_or_default()
    }

    /// `count` sweep points taken at an even stride, so every shell is hit.
    fn strided(&mut self, count: usize) -> Vec<Point> {
        let pts = self.sweep_points();
        let n = pts.len();
        let count = count.min(n);
        (0..count).map(|i| pts[i * n / count].clone()).collect()
    }

    pub fn run(&mut self, check: CheckKind) -> CheckOutcome {
        let result = match check {
            CheckKind::GroupLaw => self.group_law(),
            CheckKind::Bilipschitz => self.bilipschitz(),
            CheckKind::VarianceIdentity => self.variance(),
            CheckKind::DisplacementRatio => self.displacement(),
            CheckKind::Contraction => self.contraction(),
            CheckKind::DecayEnvelope => self.decay_envelope(),
            CheckKind::FlowLimits => self.flow_limits(),
            CheckKind::Collar => self.collar(),
            CheckKind::CurvatureScaling => self.curvature(),
            CheckKind::Certify => self.certify(),
        };
        match result {
            Ok((passed, metrics)) => CheckOutcome::new(check.name(), passed, metrics),
            Err(e) => CheckOutcome::failed(check.name(), e.to_string()),
        }
    }

    fn group_law(&mut self) -> Result<(bool, Map<String, Value>)> {
        let s = &self.scenario.sweep;
        let worst = self.action.verify_group_law(s.group_law_samples, s.seed);
        let mut m = Map::new();
        m.insert("samples".into(), json!(s.group_law_samples));
        m.insert("worst_residual".into(), num(worst));
        m.insert("tolerance".into(), num(GROUP_LAW_TOL));
        Ok((worst <= GROUP_LAW_TOL, m))
    }

    fn bilipschitz(&mut self) -> Result<(bool, Map<String, Value>)> {
        let s = &self.scenario.sweep;
        let region = self.action.working_region();
        let est = self
            .action
            .estimate_bilipschitz(&region, s.bilipschitz_samples, s.seed)?;
        let bound = 1.0 + self.scenario.epsilon;
        let mut m = Map::new();
        m.insert("samples".into(), json!(est.samples));
        m.insert("region_radius".into(), num(region.radius));
        m.insert("lower".into(), num(est.lower));
        m.insert("upper".into(), num(est.upper));
        m.insert("analytic_bound".into(), num(self.action.analytic_bound()));
        m.insert("allowed".into(), num(bound));
        Ok((est.upper <= bound && est.lower >= 1.0 / bound, m))
    }

    fn variance(&mut self) -> Result<(bool, Map<String, Value>)> {
        let s = &self.scenario.sweep;
        let man = *self.action.manifold();
        let region = self.action.working_region();
        let mut rng = sampling::rng(s.seed);
        let mut worst = 0.0f64;
        for _ in 0..s.variance_samples {
            let x = sampling::point_in_ball(&man, &region.center, region.radius, &mut rng);
            let y = sampling::point_in_ball(&man, &region.center, region.radius, &mut rng);
            let orbit = self.action.orbit(&x);
            worst = worst.max(variance_identity(&man, &orbit, &y)?.relative_residual());
        }
        let mut m = Map::new();
        m.insert("samples".into(), json!(s.variance_samples));
        m.insert("worst_relative_residual".into(), num(worst));
        m.insert("tolerance".into(), num(VARIANCE_TOL));
        Ok((worst <= VARIANCE_TOL, m))
    }

    fn displacement(&mut self) -> Result<(bool, Map<String, Value>)> {
        let a = self.action.clone();
        let pts = self.sweep_points();
        let ratios: Vec<Result<f64>> = pts
            .par_iter()
            .map(|x| max_displacement_ratio(&a, x))
            .collect();
        let mut worst = 0.0f64;
        for r in ratios {
            worst = worst.max(r?);
        }
        let mut m = Map::new();
        m.insert("samples".into(), json!(pts.len()));
        m.insert("worst_ratio".into(), num(worst));
        m.insert("bound".into(), num(crate::R_BOUND));
        Ok((worst <= crate::R_BOUND, m))
    }

    fn contraction(&mut self) -> Result<(bool, Map<String, Value>)> {
        let (tau, k) = (self.scenario.flow.tau, self.scenario.flow.k);
        let a = self.action.clone();
        let rep = contraction_sweep(&a, self.sweep_points(), tau)?;
        let mut m = Map::new();
        m.insert("samples".into(), json!(rep.sample_count));
        m.insert("tau".into(), num(tau));
        m.insert("worst_ratio".into(), num(rep.worst_ratio));
        m.insert("k".into(), num(k));
        m.insert("region_radius".into(), num(rep.region.radius));
        Ok((rep.worst_ratio <= k, m))
    }

    fn decay_envelope(&mut self) -> Result<(bool, Map<String, Value>)> {
        let f = self.scenario.flow.clone();
        let pts = self.strided(self.scenario.sweep.envelope_samples);
        let a = &self.action;
        let slacks: Vec<Result<f64>> = pts
            .par_iter()
            .map(|x| decay_envelope_check(a, x, f.tau, f.k, f.horizon))
            .collect();
        let mut worst = f64::INFINITY;
        for s in slacks {
            worst = worst.min(s?);
        }
        let mut m = Map::new();
        m.insert("samples".into(), json!(pts.len()));
        m.insert("horizon".into(), num(f.horizon));
        m.insert("min_slack".into(), num(worst));
        Ok((worst >= 0.0, m))
    }

    fn flow_limits(&mut self) -> Result<(bool, Map<String, Value>)> {
        let tol = self.scenario.flow.conv_tol;
        let pts = self.strided(self.scenario.sweep.limit_samples);
        let a = &self.action;
        let limits: Vec<Result<(Point, f64)>> =
            pts.par_iter().map(|x| limit_point(a, x, tol)).collect();
        let mut worst = 0.0f64;
        let mut unconverged = 0usize;
        for l in limits {
            match l {
                Ok((_, d)) => worst = worst.max(d),
                Err(Error::FlowNotConverged { .. }) => unconverged += 1,
                Err(e) => return Err(e),
            }
        }
        let bound = 10.0 * tol;
        let mut m = Map::new();
        m.insert("samples".into(), json!(pts.len()));
        m.insert("unconverged".into(), json!(unconverged));
        m.insert("worst_displacement".into(), num(worst));
        m.insert("bound".into(), num(bound));
        Ok((unconverged == 0 && worst <= bound, m))
    }

    fn collar(&mut self) -> Result<(bool, Map<String, Value>)> {
        let c = self.scenario.collar.clone();
        let f = self.scenario.flow.clone();
        let a = &self.action;
        let mut rng = sampling::rng(c.seed);
        let sources = a.sample_shell(c.shell, c.sources, &mut rng);
        let b = choose_level(a, &sources, f.tau, f.k)?;
        let chart = build_chart(a, &sources, b, f.tau, f.k, f.conv_tol)?;
        let counts: Vec<Result<(f64, usize)>> = sources
            .par_iter()
            .map(|x| {
                let l = flow::flow_length(a, x, f.tau, f.k)?.length;
                Ok((l, crossing_count(a, x, b, f.tau, f.k)?))
            })
            .collect();
        let (mut above, mut single) = (0usize, 0usize);
        for r in counts {
            let (l, n) = r?;
            if l > b {
                above += 1;
                single += usize::from(n == 1);
            }
        }
        let scales = [c.pair_scale, c.pair_scale / 2.0, c.pair_scale / 4.0];
        let mut moduli = Vec::with_capacity(scales.len());
        for &s in &scales {
            moduli.push(continuity_modulus(a, &chart, c.pairs, c.seed, s)?);
        }
        let growth = moduli
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (p, q) if p > 0.0 => q / p,
                (_, q) if q > 0.0 => f64::INFINITY,
                _ => 1.0,
            })
            .fold(0.0, f64::max);
        let residual = chart.worst_level_residual();
        let limit_disp = chart.worst_limit_displacement();
        let passed = above > 0
            && single == above
            && residual <= LEVEL_TOL
            && limit_disp <= 10.0 * f.conv_tol
            && growth <= MODULUS_GROWTH;
        let mut m = Map::new();
        m.insert("level".into(), num(b));
        m.insert("sources".into(), json!(sources.len()));
        m.insert("above_level".into(), json!(above));
        m.insert("single_crossings".into(), json!(single));
        m.insert("chart_entries".into(), json!(chart.entries.len()));
        m.insert("worst_level_residual".into(), num(residual));
        m.insert("worst_limit_displacement".into(), num(limit_disp));
        m.insert("pair_scales".into(), nums(&scales));
        m.insert("moduli".into(), nums(&moduli));
        m.insert("worst_growth".into(), num(growth));
        Ok((passed, m))
    }

    fn curvature(&mut self) -> Result<(bool, Map<String, Value>)> {
        let f = &self.scenario.flow;
        let data = curvature_deviation(&self.action, &self.scenario.deltas, f.tau, f.step)?;
        let slope = flow::loglog_slope(&data)?;
        let (lo, hi) = SLOPE_WINDOW;
        let mut m = Map::new();
        m.insert(
            "deltas".into(),
            nums(&data.iter().map(|d| d.0).collect::<Vec<_>>()),
        );
        m.insert(
            "deviations".into(),
            nums(&data.iter().map(|d| d.1).collect::<Vec<_>>()),
        );
        m.insert("slope".into(), num(slope));
        m.insert("window".into(), nums(&[lo, hi]));
        Ok(((lo..=hi).contains(&slope), m))
    }

    fn certify(&mut self) -> Result<(bool, Map<String, Value>)> {
        let c = &self.scenario.certify;
        let chain = certify_chain(
            Interval::from_rational(&c.epsilon),
            Interval::from_rational(&c.tau),
            Interval::from_rational(&c.target_k),
        );
        let mut passed = chain.passed();
        let frontier = if c.frontier {
            let k = Interval::from_rational(&c.target_k).mid();
            let e = epsilon_frontier(Interval::from_rational(&c.tau), k)?;
            passed &= e >= Interval::from_rational(&c.epsilon).hi();
            Some(num(e))
        } else {
            None
        };
        let doc = super::report::certificate_json(
            &chain,
            super::certify_inputs(&c.epsilon, &c.tau, &c.target_k),
            frontier,
        );
        let Value::Object(m) = doc else {
            unreachable!("certificate_json builds an object")
        };
        Ok((passed, m))
    }
}

/// Scenario echo for the report header.
pub fn scenario_json(s: &Scenario, a: &GroupAction) -> Value {
    let warps: Vec<Value> = a
        .perturbations()
        .iter()
        .map(|w| {
            json!({
                "center": nums(w.center.coords()),
                "radius": num(w.radius),
                "amplitude": num(w.amplitude),
                "direction": nums(&w.direction),
            })
        })
        .collect();
    let kind = s.manifold.kind();
    json!({
        "name": s.name,
        "manifold": {"kind": kind.name(), "dim": s.manifold.dim()},
        "action": {
            "order": s.action.order,
            "fixed_dim": s.action.fixed_dim,
            "seed": s.action.seed,
            "working_radius": num(a.working_radius()),
            "epsilon": num(s.epsilon),
            "analytic_bound": num(a.analytic_bound()),
            "perturbations": warps,
        },
        "flow": {
            "tau": num(s.flow.tau),
            "step": num(s.flow.step),
            "conv_tol": num(s.flow.conv_tol),
            "k": num(s.flow.k),
            "horizon": num(s.flow.horizon),
        },
        "sweep": {
            "shells": nums(&s.sweep.shells),
            "samples": s.sweep.samples,
            "seed": s.sweep.seed,
        },
        "checks": s.checks.iter().map(|c| c.name()).collect::<Vec<_>>(),
    })
}
