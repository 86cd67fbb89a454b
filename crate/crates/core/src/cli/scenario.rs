//! Scenario files: TOML documents describing an action, flow settings, a
//! sampling sweep and the checks to run.
//!
//! Numeric values may be TOML integers or floats, or strings holding exact
//! rationals (`"1/4000"`) or decimals (`"0.05"`, `"1e-10"`). Strings are
//! parsed exactly and rounded to the nearest double once.

use std::collections::BTreeSet;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use toml::{Table, Value};

use crate::group_action::{GroupAction, PerturbationSpec};
use crate::manifold::{ManifoldKind, ModelManifold};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckKind {
    GroupLaw,
    Bilipschitz,
    VarianceIdentity,
    DisplacementRatio,
    Contraction,
    DecayEnvelope,
    FlowLimits,
    Collar,
    CurvatureScaling,
    Certify,
}

impl CheckKind {
    pub const ALL: [CheckKind; 10] = [
        CheckKind::GroupLaw,
        CheckKind::Bilipschitz,
        CheckKind::VarianceIdentity,
        CheckKind::DisplacementRatio,
        CheckKind::Contraction,
        CheckKind::DecayEnvelope,
        CheckKind::FlowLimits,
        CheckKind::Collar,
        CheckKind::CurvatureScaling,
        CheckKind::Certify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::GroupLaw => "group_law",
            CheckKind::Bilipschitz => "bilipschitz",
            CheckKind::VarianceIdentity => "variance_identity",
            CheckKind::DisplacementRatio => "displacement_ratio",
            CheckKind::Contraction => "contraction",
            CheckKind::DecayEnvelope => "decay_envelope",
            CheckKind::FlowLimits => "flow_limits",
            CheckKind::Collar => "collar",
            CheckKind::CurvatureScaling => "curvature_scaling",
            CheckKind::Certify => "certify",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AmplitudeSpec {
    Fixed(f64),
    /// Largest amplitude keeping the conjugate bound within `1 + budget`.
    Budget(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: AmplitudeSpec,
    pub direction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpec {
    pub order: usize,
    pub fixed_dim: usize,
    pub seed: u64,
    pub working_radius: Option<f64>,
    pub warps: Vec<WarpSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub tau: f64,
    pub step: f64,
    pub conv_tol: f64,
    pub k: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub shells: Vec<f64>,
    /// Total sample count, split evenly over the shells.
    pub samples: usize,
    pub seed: u64,
    pub envelope_samples: usize,
    pub limit_samples: usize,
    pub bilipschitz_samples: usize,
    pub variance_samples: usize,
    pub group_law_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollarSpec {
    pub shell: f64,
    pub sources: usize,
    pub pairs: usize,
    pub pair_scale: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifySpec {
    pub epsilon: BigRational,
    pub tau: BigRational,
    pub target_k: BigRational,
    pub frontier: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub manifold: ModelManifold,
    pub action: ActionSpec,
    /// Bilipschitz budget the measured constant is checked against.
    pub epsilon: f64,
    pub flow: FlowSpec,
    pub sweep: SweepSpec,
    pub collar: CollarSpec,
    pub deltas: Vec<f64>,
    pub certify: CertifySpec,
    pub checks: Vec<CheckKind>,
}

/// Exact value of a rational or decimal literal.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Validation(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(Error::Validation(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let all: BigInt = format!("{int_part}{frac_part}0")
        .parse::<BigInt>()
        .map_err(|_| bad())?
        / 10;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(all * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(all, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(if sign < 0 { -value } else { value })
}

fn rational_of(v: &Value, what: &str) -> Result<BigRational> {
    match v {
        Value::Integer(i) => Ok(BigRational::from_integer(BigInt::from(*i))),
        Value::Float(f) => BigRational::from_float(*f)
            .ok_or_else(|| Error::Validation(format!("{what}: {f} is not finite"))),
        Value::String(s) => parse_rational(s).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("{what}: {msg}")),
            other => other,
        }),
        _ => Err(Error::Validation(format!("{what}: expected a number"))),
    }
}

fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn number(v: &Value, what: &str) -> Result<f64> {
    let x = to_f64(&rational_of(v, what)?);
    if !x.is_finite() {
        return Err(Error::Validation(format!("{what}: value out of range")));
    }
    Ok(x)
}

fn numbers(v: &Value, what: &str) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) => items.iter().map(|x| number(x, what)).collect(),
        _ => Err(Error::Validation(format!("{what}: expected an array"))),
    }
}

fn integer(v: &Value, what: &str) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::Validation(format!(
            "{what}: expected a nonnegative integer"
        ))),
    }
}

/// A table whose keys are consumed as they are read; leftovers are typos.
struct Section<'a> {
    name: &'a str,
    table: &'a Table,
    seen: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(name: &'a str, table: &'a Table) -> Self {
        Section {
            name,
            table,
            seen: BTreeSet::new(),
        }
    }

    fn get(&mut self, key: &'a str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.table.get(key)
    }

    fn what(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn num_or(&mut self, key: &'a str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => number(v, &self.what(key)),
            None => Ok(default),
        }
    }

    fn num(&mut self, key: &'a str) -> Result<f64> {
        match self.get(key) {
            Some(v) => number(v, &self.what(key)),
            None => Err(Error::Validation(format!("missing {}", self.what(key)))),
        }
    }

    fn int_or(&mut self, key: &'a str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(v) => integer(v, &self.what(key)),
            None => Ok(default),
        }
    }

    fn int(&mut self, key: &'a str) -> Result<u64> {
        match self.get(key) {
            Some(v) => integer(v, &self.what(key)),
            None => Err(Error::Validation(format!("missing {}", self.what(key)))),
        }
    }

    fn finish(self) -> Result<()> {
        for k in self.table.keys() {
            if !self.seen.contains(k.as_str()) {
                return Err(Error::Validation(format!("unknown key {}.{k}", self.name)));
            }
        }
        Ok(())
    }
}

fn sub_table<'a>(root: &'a Table, key: &str, empty: &'a Table) -> Result<&'a Table> {
    match root.get(key) {
        None => Ok(empty),
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(Error::Validation(format!("[{key}] must be a table"))),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates a scenario; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            path: origin.to_string(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        let s = Self::from_table(&root)?;
        s.validate()?;
        Ok(s)
    }

    fn from_table(root: &Table) -> Result<Self> {
        let empty = Table::new();
        let mut top = Section::new("scenario", root);
        let name = match top.get("name") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::Validation("name must be a string".into())),
            None => return Err(Error::Validation("missing name".into())),
        };
        let checks = match top.get("checks") {
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => CheckKind::parse(s)
                        .ok_or_else(|| Error::Validation(format!("unknown check {s:?}"))),
                    _ => Err(Error::Validation("checks must be strings".into())),
                })
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(Error::Validation("missing checks array".into())),
        };
        for key in [
            "manifold",
            "action",
            "flow",
            "sweep",
            "collar",
            "curvature",
            "certify",
        ] {
            top.get(key);
        }
        top.finish()?;

        let mut m = Section::new("manifold", sub_table(root, "manifold", &empty)?);
        let kind: ManifoldKind = match m.get("kind") {
            Some(Value::String(s)) => s.parse()?,
            _ => return Err(Error::Validation("manifold.kind must be a string".into())),
        };
        let dim = m.int("dim")? as usize;
        m.finish()?;
        let manifold = ModelManifold::new(kind, dim)?;

        let action_table = sub_table(root, "action", &empty)?;
        let mut a = Section::new("action", action_table);
        let order = a.int("order")? as usize;
        let fixed_dim = a.int_or("fixed_dim", 0)? as usize;
        let seed = a.int("seed")?;
        let working_radius = match a.get("working_radius") {
            Some(v) => Some(number(v, "action.working_radius")?),
            None => None,
        };
        let epsilon = a.num_or("epsilon", crate::EPSILON)?;
        let mut warps = Vec::new();
        match a.get("perturbation") {
            None => {}
            Some(Value::Array(items)) => {
                for item in items {
                    match item {
                        Value::Table(t) => warps.push(parse_warp(t)?),
                        _ => {
                            return Err(Error::Validation(
                                "[[action.perturbation]] must be tables".into(),
                            ))
                        }
                    }
                }
            }
            Some(_) => {
                return Err(Error::Validation(
                    "perturbations are declared as [[action.perturbation]] tables".into(),
                ))
            }
        }
        a.finish()?;

        let mut f = Section::new("flow", sub_table(root, "flow", &empty)?);
        let flow = FlowSpec {
            tau: f.num_or("tau", crate::TAU)?,
            step: f.num_or("step", crate::flow::DEFAULT_STEP)?,
            conv_tol: f.num_or("conv_tol", crate::flow::CONV_TOL)?,
            k: f.num_or("k", crate::K_PRIME)?,
            horizon: f.num_or("horizon", 10.0)?,
        };
        f.finish()?;

        let mut w = Section::new("sweep", sub_table(root, "sweep", &empty)?);
        let shells = match w.get("shells") {
            Some(v) => numbers(v, "sweep.shells")?,
            None => return Err(Error::Validation("missing sweep.shells".into())),
        };
        let sweep = SweepSpec {
            samples: w.int("samples")? as usize,
            seed: w.int("seed")?,
            envelope_samples: w.int_or("envelope_samples", 1000)? as usize,
            limit_samples: w.int_or("limit_samples", 200)? as usize,
            bilipschitz_samples: w.int_or("bilipschitz_samples", 4000)? as usize,
            variance_samples: w.int_or("variance_samples", 1000)? as usize,
            group_law_samples: w.int_or("group_law_samples", 1000)? as usize,
            shells,
        };
        w.finish()?;

        let mut c = Section::new("collar", sub_table(root, "collar", &empty)?);
        let middle = sweep
            .shells
            .get(sweep.shells.len() / 2)
            .copied()
            .unwrap_or(0.1);
        let shell = c.num_or("shell", middle)?;
        let collar = CollarSpec {
            shell,
            sources: c.int_or("sources", 64)? as usize,
            pairs: c.int_or("pairs", 64)? as usize,
            pair_scale: c.num_or("pair_scale", shell / 10.0)?,
            seed: c.int_or("seed", sweep.seed.wrapping_add(1))?,
        };
        c.finish()?;

        let mut cv = Section::new("curvature", sub_table(root, "curvature", &empty)?);
        let deltas = match cv.get("deltas") {
            Some(v) => numbers(v, "curvature.deltas")?,
            None => vec![0.2, 0.1, 0.05, 0.025],
        };
        cv.finish()?;

        let mut ce = Section::new("certify", sub_table(root, "certify", &empty)?);
        let rat = |sec: &mut Section, key, default: (i64, i64)| -> Result<BigRational> {
            match sec.get(key) {
                Some(v) => rational_of(v, &format!("certify.{key}")),
                None => Ok(BigRational::new(default.0.into(), default.1.into())),
            }
        };
        let certify = CertifySpec {
            epsilon: rat(&mut ce, "epsilon", (1, 4000))?,
            tau: rat(&mut ce, "tau", (1, 5))?,
            target_k: rat(&mut ce, "target_k", (999, 1000))?,
            frontier: match ce.get("frontier") {
                Some(Value::Boolean(b)) => *b,
                Some(_) => {
                    return Err(Error::Validation(
                        "certify.frontier must be a boolean".into(),
                    ))
                }
                None => false,
            },
        };
        ce.finish()?;

        Ok(Scenario {
            name,
            manifold,
            action: ActionSpec {
                order,
                fixed_dim,
                seed,
                working_radius,
                warps,
            },
            epsilon,
            flow,
            sweep,
            collar,
            deltas,
            certify,
            checks,
        })
    }

    fn validate(&self) -> Result<()> {
        let v = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Validation(msg.to_string()))
            }
        };
        v(!self.checks.is_empty(), "checks must not be empty")?;
        v(
            self.epsilon > 0.0 && self.epsilon < 1.0,
            "action.epsilon must lie in (0, 1)",
        )?;
        v(self.flow.tau > 0.0, "flow.tau must be positive")?;
        v(self.flow.step > 0.0, "flow.step must be positive")?;
        v(self.flow.conv_tol > 0.0, "flow.conv_tol must be positive")?;
        v(
            self.flow.k > 0.0 && self.flow.k < 1.0,
            "flow.k must lie in (0, 1)",
        )?;
        v(self.flow.horizon >= 0.0, "flow.horizon must be nonnegative")?;
        v(
            !self.sweep.shells.is_empty(),
            "sweep.shells must not be empty",
        )?;
        let inj = self.manifold.injectivity_radius();
        for &r in &self.sweep.shells {
            v(
                r > 0.0 && r < inj,
                "sweep.shells must lie in (0, injectivity radius)",
            )?;
        }
        v(
            self.sweep.samples >= self.sweep.shells.len(),
            "sweep.samples must cover every shell",
        )?;
        v(
            self.collar.shell > 0.0 && self.collar.shell < inj,
            "collar.shell out of range",
        )?;
        v(
            self.collar.pair_scale > 0.0,
            "collar.pair_scale must be positive",
        )?;
        v(self.collar.sources > 0, "collar.sources must be positive")?;
        for w in self.deltas.windows(2) {
            v(w[1] < w[0], "curvature.deltas must be strictly decreasing")?;
        }
        v(
            self.deltas.iter().all(|&d| d > 0.0),
            "curvature.deltas must be positive",
        )?;
        if self.checks.contains(&CheckKind::VarianceIdentity) {
            v(
                self.manifold.kind() == ManifoldKind::Euclidean,
                "variance_identity applies to euclidean scenarios only",
            )?;
        }
        if self.checks.contains(&CheckKind::CurvatureScaling) {
            v(
                self.deltas.len() >= 2,
                "curvature_scaling needs at least two deltas",
            )?;
        }
        let c = &self.certify;
        v(
            !c.epsilon.is_negative(),
            "certify.epsilon must be nonnegative",
        )?;
        v(c.tau.is_positive(), "certify.tau must be positive")?;
        v(
            c.target_k.is_positive() && c.target_k < BigRational::one(),
            "certify.target_k must lie in (0, 1)",
        )?;
        self.build_action().map(|_| ())
    }

    /// The group action described by the scenario.
    pub fn build_action(&self) -> Result<GroupAction> {
        let s = &self.action;
        let mut a =
            GroupAction::cyclic_isometry(self.manifold, s.order, s.fixed_dim)?.with_seed(s.seed);
        if let Some(r) = s.working_radius {
            a = a.with_working_radius(r)?;
        }
        for w in &s.warps {
            a = a.conjugate(&w.resolve(&self.manifold)?)?;
        }
        Ok(a)
    }
}

impl WarpSpec {
    pub fn resolve(&self, m: &ModelManifold) -> Result<PerturbationSpec> {
        let center = m.point(self.center.clone())?;
        let amplitude = match self.amplitude {
            AmplitudeSpec::Fixed(a) => a,
            AmplitudeSpec::Budget(eps) => PerturbationSpec::amplitude_for_budget(self.radius, eps),
        };
        Ok(PerturbationSpec::new(
            center,
            self.radius,
            amplitude,
            self.direction.clone(),
        ))
    }
}

fn parse_warp(t: &Table) -> Result<WarpSpec> {
    let mut s = Section::new("action.perturbation", t);
    let center = match s.get("center") {
        Some(v) => numbers(v, "action.perturbation.center")?,
        None => {
            return Err(Error::Validation(
                "missing action.perturbation.center".into(),
            ))
        }
    };
    let direction = match s.get("direction") {
        Some(v) => numbers(v, "action.perturbation.direction")?,
        None => {
            return Err(Error::Validation(
                "missing action.perturbation.direction".into(),
            ))
        }
    };
    let radius = s.num("radius")?;
    let amplitude = match (s.get("amplitude"), s.get("budget")) {
        (Some(v), None) => AmplitudeSpec::Fixed(number(v, "action.perturbation.amplitude")?),
        (None, Some(v)) => AmplitudeSpec::Budget(number(v, "action.perturbation.budget")?),
        _ => {
            return Err(Error::Validation(
                "action.perturbation needs exactly one of amplitude or budget".into(),
            ))
        }
    };
    s.finish()?;
    Ok(WarpSpec {
        center,
        radius,
        amplitude,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
checks = ["group_law"]

[manifold]
kind = "euclidean"
dim = 2

[action]
order = 3
seed = 1

[sweep]
shells = ["1/10"]
samples = 10
seed = 2
"#;

    #[test]
    fn rational_literals_are_exact() {
        let q = parse_rational("1/4000").unwrap();
        assert_eq!(q, BigRational::new(1.into(), 4000.into()));
        assert_eq!(
            parse_rational("0.05").unwrap(),
            BigRational::new(1.into(), 20.into())
        );
        assert_eq!(
            parse_rational("-2.5e-3").unwrap(),
            BigRational::new((-1).into(), 400.into())
        );
        assert_eq!(
            parse_rational("12").unwrap(),
            BigRational::from_integer(12.into())
        );
        assert_eq!(
            parse_rational(".5").unwrap(),
            BigRational::new(1.into(), 2.into())
        );
        for bad in ["", "1/0", "abc", "1.2.3", "--1", "e5"] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::parse(MINIMAL, "minimal").unwrap();
        assert_eq!(s.name, "minimal");
        assert_eq!(s.sweep.shells, vec![0.1]);
        assert_eq!(s.flow.tau, crate::TAU);
        assert_eq!(s.flow.k, crate::K_PRIME);
        assert_eq!(s.checks, vec![CheckKind::GroupLaw]);
        assert_eq!(s.certify.epsilon, BigRational::new(1.into(), 4000.into()));
        assert!(s.build_action().unwrap().is_isometric());
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = "name = \"x\"\nchecks = [\n[manifold\n";
        match Scenario::parse(text, "bad.scn") {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "bad.scn");
                assert!(line >= 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let typo = MINIMAL.replace("seed = 1", "seed = 1\nsede = 3");
        assert!(matches!(
            Scenario::parse(&typo, "t"),
            Err(Error::Validation(_))
        ));
        let check = MINIMAL.replace("group_law", "group_lawn");
        assert!(matches!(
            Scenario::parse(&check, "t"),
            Err(Error::Validation(_))
        ));
        let dim = MINIMAL.replace("order = 3", "order = 3\nfixed_dim = 5");
        assert!(Scenario::parse(&dim, "t").is_err());
        let sphere = MINIMAL
            .replace("euclidean", "sphere")
            .replace("group_law", "variance_identity");
        assert!(Scenario::parse(&sphere, "t").is_err());
        let no_seed = MINIMAL.replace("seed = 2", "");
        assert!(Scenario::parse(&no_seed, "t").is_err());
    }

    #[test]
    fn perturbation_budget() {
        let text = format!(
            "{MINIMAL}\n[[action.perturbation]]\ncenter = [\"1/20\", \"1/50\"]\nradius = \"1/2\"\nbudget = \"1/4000\"\ndirection = [1, 0]\n"
        );
        let s = Scenario::parse(&text, "t").unwrap();
        let a = s.build_action().unwrap();
        assert!(!a.is_isometric());
        assert!(a.analytic_bound() <= 1.0 + 1.0 / 4000.0 + 1e-15);
    }
}
