//! Interval certification of the flat contraction constants.
//!
//! With `δ = d(x, B(x))` normalized to 1, the chain is:
//!
//! - `r_bound(ε) = (1+ε)√(2ε+ε²) / (1 − (1+ε)√(2ε+ε²))` must not exceed `R = 1/40`;
//! - step 1: `1/3 − τ(4+ε)/3 > 0`, so the flow stays within `δ/3` up to `τ`;
//! - step 2: `√(a² + 1 − 2a·cos α) ≤ 19/20` with `a = τ(1−ε)/3` and
//!   `α = arcsin((1+ε)/3)`;
//! - step 3: the largest `‖y‖` with `(1+ε+R)²d₁² ≥ (1/(1+ε) − R)²‖y‖² + ‖y − p‖²`,
//!   `‖p‖ = d₁ = 19/20`, must not exceed `k′`.

mod interval;

pub use interval::Interval;

use crate::{Error, Result};

/// Step 2 threshold `19/20`.
pub fn step2_threshold() -> Interval {
    Interval::ratio(19, 20)
}

/// Barycenter displacement constant `R = 1/40`.
pub fn r_constant() -> Interval {
    Interval::ratio(1, 40)
}

/// Enclosure of `(1+ε)√(2ε+ε²) / (1 − (1+ε)√(2ε+ε²))`.
pub fn r_bound(epsilon: Interval) -> Result<Interval> {
    if epsilon.lo() < 0.0 {
        return Err(Error::Validation("epsilon must be nonnegative".into()));
    }
    let one = Interval::point(1.0);
    let two = Interval::point(2.0);
    // n(ε) and n/(1−n) are both increasing, so endpoints suffice
    epsilon.monotone(|e| {
        let n = (one + e) * (two * e + e.sqr()).sqrt()?;
        let den = one - n;
        if den.lo() <= 0.0 {
            return Err(Error::Certification(format!(
                "r_bound denominator {den} is not positive: epsilon too large"
            )));
        }
        n / den
    })
}

/// Enclosure of the step 1 margin `1/3 − τ(4+ε)/3`; passes when positive.
pub fn check_step1(epsilon: Interval, tau: Interval) -> Result<Interval> {
    let third = Interval::ratio(1, 3);
    let four = Interval::point(4.0);
    let three = Interval::point(3.0);
    Ok(third - ((tau * (four + epsilon)) / three)?)
}

/// Enclosure of the δ-normalized step 2 distance bound; passes when `≤ 19/20`.
pub fn check_step2(epsilon: Interval, tau: Interval) -> Result<Interval> {
    let one = Interval::point(1.0);
    let three = Interval::point(3.0);
    let s = ((one + epsilon) / three)?;
    if s.hi() >= 1.0 {
        return Err(Error::Domain(format!(
            "arcsin argument (1+ε)/3 = {s} is not below 1"
        )));
    }
    let alpha = s.asin()?;
    let a = ((tau * (one - epsilon)) / three)?;
    let two = Interval::point(2.0);
    let inner = a.sqr() + one - two * a * alpha.cos()?;
    inner.sqrt()
}

/// Largest `‖y‖` in the step 3 feasible set, from the radial quadratic
/// `(β²+1)r² − 2d₁r + d₁² − c² = 0` with `c = (1+ε+R)d₁`, `β = 1/(1+ε) − R`.
pub fn check_step3(epsilon: Interval, r_val: Interval, d1: Interval) -> Result<Interval> {
    let one = Interval::point(1.0);
    let c = (one + epsilon + r_val) * d1;
    let beta = (one / (one + epsilon))? - r_val;
    let a = beta.sqr() + one;
    let disc = d1.sqr() - a * (d1.sqr() - c.sqr());
    if disc.hi() < 0.0 {
        return Err(Error::Certification(
            "step 3 constraint set is empty".into(),
        ));
    }
    if disc.lo() < 0.0 {
        return Err(Error::Certification(format!(
            "step 3 feasibility undecided: discriminant {disc} straddles zero"
        )));
    }
    (d1 + disc.sqrt()?) / a
}

/// Independent brute-force maximum of `‖y‖` over the step 3 feasible set in
/// the plane (`p` on the first axis). For each of `angles` directions the ray
/// is scanned on a coarse radial grid and the last feasible radius is refined
/// by bisection on the feasibility predicate alone.
pub fn step3_grid_max(epsilon: f64, r_val: f64, d1: f64, angles: usize) -> Option<f64> {
    let c = (1.0 + epsilon + r_val) * d1;
    let beta2 = (1.0 / (1.0 + epsilon) - r_val).powi(2);
    let feasible = |u: f64, v: f64| beta2 * (u * u + v * v) + (u - d1).powi(2) + v * v <= c * c;
    // ‖y‖ ≤ ‖p‖ + ‖y − p‖ ≤ d₁ + c on the feasible set
    let r_max = d1 + c;
    const RADIAL: usize = 200;
    let mut best: Option<f64> = None;
    for i in 0..angles {
        let theta = std::f64::consts::TAU * (i as f64 + 0.5) / angles as f64;
        let (s, co) = theta.sin_cos();
        let at = |r: f64| feasible(r * co, r * s);
        let last = (0..=RADIAL)
            .rev()
            .find(|&j| at(r_max * j as f64 / RADIAL as f64));
        let Some(j) = last else { continue };
        let mut lo = r_max * j as f64 / RADIAL as f64;
        let mut hi = r_max * (j + 1) as f64 / RADIAL as f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if at(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if best.is_none_or(|b| lo > b) {
            best = Some(lo);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One evaluated link of the chain; `value` is absent when the enclosure
/// itself could not be formed (the link then fails).
#[derive(Clone, Debug, PartialEq)]
pub struct ChainLink {
    pub value: Option<Interval>,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl ChainLink {
    fn from(result: Result<Interval>, pass: impl Fn(&Interval) -> bool) -> Self {
        match result {
            Ok(v) => ChainLink {
                verdict: Verdict::from_bool(pass(&v)),
                value: Some(v),
                note: None,
            },
            Err(e) => ChainLink {
                value: None,
                verdict: Verdict::Fail,
                note: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateChain {
    pub epsilon: Interval,
    pub tau: Interval,
    pub target_k: Interval,
    pub r_bound: ChainLink,
    pub step1_margin: ChainLink,
    pub step2_bound: ChainLink,
    pub step3_radius: ChainLink,
}

impl CertificateChain {
    pub fn passed(&self) -> bool {
        [
            &self.r_bound,
            &self.step1_margin,
            &self.step2_bound,
            &self.step3_radius,
        ]
        .iter()
        .all(|l| l.verdict.passed())
    }
}

/// Evaluates every link at `epsilon`, `tau`, with step 3 run at `R = 1/40`
/// and `d₁ = 19/20` and compared against `target_k`.
pub fn certify_chain(epsilon: Interval, tau: Interval, target_k: Interval) -> CertificateChain {
    let r = r_constant();
    let d1 = step2_threshold();
    CertificateChain {
        epsilon,
        tau,
        target_k,
        r_bound: ChainLink::from(r_bound(epsilon), |v| v.hi() <= r.lo()),
        step1_margin: ChainLink::from(check_step1(epsilon, tau), |v| v.lo() > 0.0),
        step2_bound: ChainLink::from(check_step2(epsilon, tau), |v| v.hi() <= d1.lo()),
        step3_radius: ChainLink::from(check_step3(epsilon, r, d1), |v| v.hi() <= target_k.lo()),
    }
}

/// Upper end of the bisection bracket for [`epsilon_frontier`].
pub const FRONTIER_SEARCH_MAX: f64 = 0.05;

/// Largest `ε` (to bisection resolution) whose whole chain passes with step 3
/// radius at most `target_k`. The pass region is assumed downward closed; ten
/// probes above the result are checked to fail.
pub fn epsilon_frontier(tau: Interval, target_k: f64) -> Result<f64> {
    if !(target_k > 0.0 && target_k < 1.0) {
        return Err(Error::Validation(format!(
            "target_k must lie in (0, 1), got {target_k}"
        )));
    }
    let k = Interval::point(target_k);
    let passes = |e: f64| certify_chain(Interval::point(e), tau, k).passed();
    if !passes(0.0) {
        return Err(Error::Certification(
            "the chain fails even at epsilon = 0".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0, FRONTIER_SEARCH_MAX);
    if passes(hi) {
        return Err(Error::Certification(format!(
            "the chain still passes at the bracket end {hi}"
        )));
    }
    while hi - lo > 1e-16 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for i in 1..=10 {
        let probe = hi + (FRONTIER_SEARCH_MAX - hi) * (i as f64 - 1.0) / 9.0;
        if passes(probe) {
            return Err(Error::Certification(format!(
                "pass region is not downward closed: epsilon {probe} passes above the frontier {lo}"
            )));
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng;
    use rand::Rng;

    fn eps() -> Interval {
        Interval::ratio(1, 4000)
    }

    fn tau() -> Interval {
        Interval::ratio(1, 5)
    }

    // high-precision reference values of each expression
    const RB_EPS: f64 = 0.022879427220497029;
    const RB_005: f64 = 0.506_396_209_065_987_8;
    const STEP1_EPS: f64 = 0.06665;
    const STEP1_QUARTER: f64 = -2.0833333333333333e-5;
    const STEP2_EPS: f64 = 0.937_427_173_277_119_8;
    const STEP2_ZERO: f64 = 0.937_409_500_823_147_6;
    const STEP3_EPS: f64 = 0.998_003_370_686_168_1;
    const STEP3_R01: f64 = 1.1419423339740718;
    const FRONTIER: f64 = 2.972_210_953_442_871e-4;

    #[test]
    fn r_bound_values() {
        let r = r_bound(eps()).unwrap();
        assert!(r.contains(RB_EPS));
        assert!(r.lo() >= 0.0228 && r.hi() <= 0.0230);
        assert!(r.hi() <= 1.0 / 40.0);
        assert!(r.width() < 1e-15);
        assert_eq!(r_bound(Interval::point(0.0)).unwrap(), Interval::point(0.0));
        let big = r_bound(Interval::ratio(1, 20)).unwrap();
        assert!(big.contains(RB_005));
        assert!(big.lo() > 1.0 / 40.0);
        assert!(matches!(
            r_bound(Interval::point(0.5)),
            Err(Error::Certification(_))
        ));
    }

    #[test]
    fn step1_values() {
        let m = check_step1(eps(), tau()).unwrap();
        assert!(m.contains(STEP1_EPS) && m.lo() > 0.066 && m.hi() < 0.067);
        let q = check_step1(eps(), Interval::ratio(1, 4)).unwrap();
        assert!(q.contains(STEP1_QUARTER));
        assert!(q.lo() <= 0.0);
        let z = check_step1(Interval::point(0.0), Interval::point(1e-12)).unwrap();
        assert!((z.mid() - 1.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn step2_values() {
        let b = check_step2(eps(), tau()).unwrap();
        assert!(b.contains(STEP2_EPS) && b.lo() >= 0.937 && b.hi() <= 0.938);
        assert!(check_step2(eps(), Interval::point(0.0))
            .unwrap()
            .contains(1.0));
        let z = check_step2(Interval::point(0.0), tau()).unwrap();
        assert!(z.contains(STEP2_ZERO) && z.hi() <= 0.95);
        assert!(check_step2(Interval::point(2.5), tau()).is_err());
    }

    #[test]
    fn step3_values() {
        let d1 = step2_threshold();
        let r = check_step3(eps(), r_constant(), d1).unwrap();
        assert!(r.contains(STEP3_EPS) && r.lo() >= 0.9979 && r.hi() <= 0.9981);
        let sym = check_step3(Interval::point(0.0), Interval::point(0.0), d1).unwrap();
        assert!(sym.contains(0.95) && sym.width() < 1e-15);
        let wide = check_step3(eps(), Interval::ratio(1, 10), d1).unwrap();
        assert!(wide.contains(STEP3_R01) && wide.lo() > 0.999);
    }

    #[test]
    fn step3_closed_form_matches_grid() {
        let mut r = rng(31);
        for _ in 0..10 {
            let e: f64 = r.gen_range(0.0..0.01);
            let rr: f64 = r.gen_range(0.0..0.1);
            let closed = check_step3(
                Interval::point(e),
                Interval::point(rr),
                Interval::point(0.95),
            )
            .unwrap();
            let grid = step3_grid_max(e, rr, 0.95, 20_000).unwrap();
            assert!((closed.mid() - grid).abs() <= 1e-4, "{closed} vs {grid}");
        }
    }

    #[test]
    fn enclosures_hold_point_evaluations() {
        let mut r = rng(32);
        for _ in 0..10_000 {
            let e: f64 = r.gen_range(0.0..0.05);
            let t: f64 = r.gen_range(0.0..0.5);
            let rr: f64 = r.gen_range(0.0..0.1);
            let (ie, it) = (Interval::point(e), Interval::point(t));
            let s = (2.0 * e + e * e).sqrt() * (1.0 + e);
            assert!(r_bound(ie).unwrap().contains(s / (1.0 - s)));
            assert!(check_step1(ie, it)
                .unwrap()
                .contains(1.0 / 3.0 - t * (4.0 + e) / 3.0));
            let a = t * (1.0 - e) / 3.0;
            let alpha = ((1.0 + e) / 3.0).asin();
            let v2 = (a * a + 1.0 - 2.0 * a * alpha.cos()).sqrt();
            assert!(check_step2(ie, it).unwrap().contains(v2));
            let c = (1.0 + e + rr) * 0.95;
            let b = 1.0 / (1.0 + e) - rr;
            let aa = b * b + 1.0;
            let v3 = (0.95 + (0.95 * 0.95 - aa * (0.95 * 0.95 - c * c)).sqrt()) / aa;
            let enc = check_step3(ie, Interval::point(rr), Interval::point(0.95)).unwrap();
            // tolerance of a few ulps for the double evaluation itself
            assert!(enc.lo() <= v3 + 4e-16 && v3 - 4e-16 <= enc.hi());
        }
    }

    #[test]
    fn r_bound_is_monotone() {
        let mut prev = 0.0f64;
        for i in 0..100 {
            let e = 0.05 * i as f64 / 99.0;
            let lo = r_bound(Interval::point(e)).unwrap().lo();
            assert!(lo >= prev);
            prev = lo;
        }
    }

    #[test]
    fn chain_verdicts() {
        let k = Interval::ratio(999, 1000);
        let c = certify_chain(eps(), tau(), k);
        assert!(c.passed());
        let c = certify_chain(Interval::ratio(1, 20), tau(), k);
        assert!(!c.passed());
        assert_eq!(c.r_bound.verdict, Verdict::Fail);
        let c = certify_chain(eps(), Interval::point(0.0), k);
        assert_eq!(c.step2_bound.verdict, Verdict::Fail);
    }

    #[test]
    fn frontier_regression() {
        let f = epsilon_frontier(tau(), 0.999).unwrap();
        assert!(f >= 1.0 / 4000.0);
        assert!((f - FRONTIER).abs() <= 1e-12, "{f:e}");
        let f2 = epsilon_frontier(tau(), 0.9981).unwrap();
        assert!(f2 >= 1.0 / 4000.0);
        assert!(epsilon_frontier(tau(), 0.9).is_err());
    }
}
