//! Outward-rounded interval arithmetic on binary64.
//!
//! Rust offers no control over the FPU rounding mode, so each operation is
//! computed to nearest and then compared against its exact error term
//! (TwoSum for addition, an FMA residual for products, quotients and square
//! roots). The error sign says on which side of the rounded value the exact
//! result lies, and only that side is pushed out by one ulp. Exact operations
//! therefore stay exact, which keeps `0` and small rationals as point
//! intervals.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::{Error, Result};

/// Extra ulps added on each side of libm results (not correctly rounded).
const LIBM_ULPS: u32 = 2;
/// Below this magnitude FMA residuals may underflow; both sides are widened.
const TINY: f64 = 1e-280;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn round_pair(value: f64, err: f64) -> (f64, f64) {
    if err > 0.0 {
        (value, value.next_up())
    } else if err < 0.0 {
        (value.next_down(), value)
    } else {
        (value, value)
    }
}

fn add_bounds(a: f64, b: f64) -> (f64, f64) {
    let (s, e) = two_sum(a, b);
    if !s.is_finite() {
        return (s.next_down(), s.next_up());
    }
    round_pair(s, e)
}

fn mul_bounds(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    if !p.is_finite() {
        return (p.next_down(), p.next_up());
    }
    if p == 0.0 && a != 0.0 && b != 0.0 {
        // underflow to zero: the exact product is tiny with the sign of a·b
        return if (a > 0.0) == (b > 0.0) {
            (0.0, 0.0f64.next_up())
        } else {
            (0.0f64.next_down(), 0.0)
        };
    }
    if p != 0.0 && p.abs() < TINY {
        return (p.next_down(), p.next_up());
    }
    round_pair(p, a.mul_add(b, -p))
}

fn div_bounds(a: f64, b: f64) -> (f64, f64) {
    let q = a / b;
    if !q.is_finite() || (q == 0.0 && a != 0.0) || (a != 0.0 && (q.abs() < TINY || a.abs() < TINY))
    {
        // subnormal range: residuals are unreliable, widen both sides
        return (q.next_down(), q.next_up());
    }
    // a − q·b is exact; the exact quotient is q + r/b
    let r = (-q).mul_add(b, a);
    let err = if b > 0.0 { r } else { -r };
    round_pair(q, err)
}

fn widen(lo: f64, hi: f64, ulps: u32) -> (f64, f64) {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..ulps {
        lo = lo.next_down();
        hi = hi.next_up();
    }
    (lo, hi)
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Validation(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        assert!(!x.is_nan(), "NaN interval");
        Interval { lo: x, hi: x }
    }

    /// Tightest enclosure of an exact rational.
    pub fn from_rational(q: &BigRational) -> Self {
        let approx = q.to_f64().unwrap_or(f64::NAN);
        let mut lo = if approx.is_finite() { approx } else { 0.0 };
        let mut hi = lo;
        let exact = |x: f64| BigRational::from_float(x).expect("finite");
        while exact(lo) > *q {
            lo = lo.next_down();
        }
        while exact(hi) < *q {
            hi = hi.next_up();
        }
        // shrink back to neighbouring floats around q
        while lo.next_up() <= hi && exact(lo.next_up()) <= *q {
            lo = lo.next_up();
        }
        while hi.next_down() >= lo && exact(hi.next_down()) >= *q {
            hi = hi.next_down();
        }
        Interval { lo, hi }
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_rational(&BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn sqr(self) -> Self {
        let (l, h) = (self.lo.abs(), self.hi.abs());
        let (small, large) = if l <= h { (l, h) } else { (h, l) };
        let lo = if self.contains_zero() {
            0.0
        } else {
            mul_bounds(small, small).0
        };
        Interval {
            lo,
            hi: mul_bounds(large, large).1,
        }
    }

    pub fn recip(self) -> Result<Self> {
        Interval::point(1.0) / self
    }

    pub fn sqrt(self) -> Result<Self> {
        if self.lo < 0.0 {
            return Err(Error::Certification(format!(
                "square root of an interval reaching below zero: [{}, {}]",
                self.lo, self.hi
            )));
        }
        let bound = |x: f64| {
            let s = x.sqrt();
            if x == 0.0 {
                return (0.0, 0.0);
            }
            if x < TINY {
                return (s.next_down().max(0.0), s.next_up());
            }
            round_pair(s, (-s).mul_add(s, x))
        };
        Ok(Interval {
            lo: bound(self.lo).0,
            hi: bound(self.hi).1,
        })
    }

    pub fn asin(self) -> Result<Self> {
        if self.lo < -1.0 || self.hi > 1.0 {
            return Err(Error::Certification(format!(
                "arcsin argument [{}, {}] leaves [-1, 1]",
                self.lo, self.hi
            )));
        }
        let (lo, hi) = widen(self.lo.asin(), self.hi.asin(), LIBM_ULPS);
        let half_pi_up = std::f64::consts::FRAC_PI_2.next_up();
        Ok(Interval {
            lo: lo.max(-half_pi_up),
            hi: hi.min(half_pi_up),
        })
    }

    /// Cosine on intervals inside `[0, π]`, where it is decreasing.
    pub fn cos(self) -> Result<Self> {
        // f64 PI is below π, so this keeps the argument inside [0, π]
        if self.lo < 0.0 || self.hi > std::f64::consts::PI {
            return Err(Error::Certification(format!(
                "cosine enclosure needs an argument in [0, π], got [{}, {}]",
                self.lo, self.hi
            )));
        }
        let (lo, hi) = widen(self.hi.cos(), self.lo.cos(), LIBM_ULPS);
        Ok(Interval {
            lo: lo.max(-1.0),
            hi: hi.min(1.0),
        })
    }

    /// Encloses `f` over `self` for a nondecreasing `f`, evaluating it on the
    /// two endpoints. Avoids the dependency blow-up of repeated variables.
    pub fn monotone<F>(self, f: F) -> Result<Self>
    where
        F: Fn(Interval) -> Result<Interval>,
    {
        let lo = f(Interval::point(self.lo))?.lo;
        let hi = f(Interval::point(self.hi))?.hi;
        Interval::new(lo, hi)
    }

    pub fn is_exact_zero(&self) -> bool {
        self.lo.is_zero() && self.hi.is_zero()
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval {
            lo: add_bounds(self.lo, o.lo).0,
            hi: add_bounds(self.hi, o.hi).1,
        }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        self + (-o)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let cands = [
            mul_bounds(self.lo, o.lo),
            mul_bounds(self.lo, o.hi),
            mul_bounds(self.hi, o.lo),
            mul_bounds(self.hi, o.hi),
        ];
        Interval {
            lo: cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min),
            hi: cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl Div for Interval {
    type Output = Result<Interval>;
    fn div(self, o: Interval) -> Result<Interval> {
        if o.contains_zero() {
            return Err(Error::Certification(format!(
                "division by an interval containing zero: [{}, {}]",
                o.lo, o.hi
            )));
        }
        let cands = [
            div_bounds(self.lo, o.lo),
            div_bounds(self.lo, o.hi),
            div_bounds(self.hi, o.lo),
            div_bounds(self.hi, o.hi),
        ];
        Ok(Interval {
            lo: cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min),
            hi: cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng;
    use num_traits::FromPrimitive;
    use rand::Rng;

    fn exact(x: f64) -> BigRational {
        BigRational::from_float(x).unwrap()
    }

    #[test]
    fn rational_enclosures_are_tight() {
        let third = Interval::ratio(1, 3);
        assert!(third.lo() < third.hi());
        assert_eq!(third.lo().next_up(), third.hi());
        let q = BigRational::new(1.into(), 3.into());
        assert!(exact(third.lo()) < q && q < exact(third.hi()));
        assert_eq!(Interval::ratio(1, 4), Interval::point(0.25));
        assert_eq!(Interval::ratio(0, 7), Interval::point(0.0));
        let t = Interval::ratio(1, 4000);
        assert!(t.contains(1.0 / 4000.0));
    }

    #[test]
    fn exact_operations_stay_points() {
        let a = Interval::point(0.5);
        let b = Interval::point(0.25);
        assert_eq!(a + b, Interval::point(0.75));
        assert_eq!(a * b, Interval::point(0.125));
        assert_eq!((a / b).unwrap(), Interval::point(2.0));
        assert_eq!(Interval::point(0.0).sqrt().unwrap(), Interval::point(0.0));
        assert_eq!(Interval::point(0.25).sqrt().unwrap(), Interval::point(0.5));
    }

    #[test]
    fn arithmetic_encloses_exact_results() {
        // exact rational arithmetic as the oracle
        let mut r = rng(21);
        for _ in 0..10_000 {
            let a: f64 = r.gen_range(-10.0..10.0);
            let b: f64 = r.gen_range(-10.0..10.0);
            let (ia, ib) = (Interval::point(a), Interval::point(b));
            let (ea, eb) = (exact(a), exact(b));
            let s = ia + ib;
            assert!(exact(s.lo()) <= &ea + &eb && &ea + &eb <= exact(s.hi()));
            let p = ia * ib;
            assert!(exact(p.lo()) <= &ea * &eb && &ea * &eb <= exact(p.hi()));
            if b != 0.0 {
                let q = (ia / ib).unwrap();
                assert!(exact(q.lo()) <= &ea / &eb && &ea / &eb <= exact(q.hi()));
            }
            let x = a.abs();
            let sq = Interval::point(x).sqrt().unwrap();
            let ex = exact(x);
            assert!(exact(sq.lo()) * exact(sq.lo()) <= ex);
            assert!(ex <= exact(sq.hi()) * exact(sq.hi()));
        }
    }

    #[test]
    fn transcendental_enclosures() {
        let a = Interval::new(0.1, 0.2).unwrap().asin().unwrap();
        assert!(a.contains(0.1f64.asin()) && a.contains(0.2f64.asin()));
        assert!(Interval::new(0.5, 1.5).unwrap().asin().is_err());
        let c = Interval::new(0.3, 0.4).unwrap().cos().unwrap();
        assert!(c.contains(0.3f64.cos()) && c.contains(0.4f64.cos()));
        assert!(Interval::new(-0.1, 0.4).unwrap().cos().is_err());
    }

    #[test]
    fn division_by_zero_interval_fails() {
        let z = Interval::new(-1.0, 1.0).unwrap();
        assert!(matches!(
            Interval::point(1.0) / z,
            Err(Error::Certification(_))
        ));
        assert!(Interval::new(-1.0, 0.0).unwrap().sqrt().is_err());
        assert!(Interval::new(1.0, 0.0).is_err());
    }

    #[test]
    fn square_of_straddling_interval() {
        let s = Interval::new(-2.0, 1.0).unwrap().sqr();
        assert_eq!(s, Interval::new(0.0, 4.0).unwrap());
        let q = BigRational::from_f64(0.1).unwrap();
        let i = Interval::from_rational(&q);
        assert_eq!(i, Interval::point(0.1));
    }
}
