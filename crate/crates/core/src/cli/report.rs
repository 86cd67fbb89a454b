//! JSON output. Floats are written with 17 significant digits so reports
//! round-trip exactly and compare byte for byte.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};

use crate::certify::{CertificateChain, ChainLink};
use crate::numfmt::sig17;

struct Sig17Formatter<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17Formatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(sig17(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serializing a Value into memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// A float, or `null` when it is not finite.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().copied().map(num).collect())
}

/// Outcome of one scenario check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub metrics: Map<String, Value>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn new(name: &'static str, passed: bool, metrics: Map<String, Value>) -> Self {
        CheckOutcome {
            name,
            passed,
            metrics,
            error: None,
            seconds: 0.0,
        }
    }

    pub fn failed(name: &'static str, error: String) -> Self {
        CheckOutcome {
            name,
            passed: false,
            metrics: Map::new(),
            error: Some(error),
            seconds: 0.0,
        }
    }

    pub fn to_json(&self, timing: bool) -> Value {
        let mut o = Map::new();
        o.insert("name".into(), json!(self.name));
        o.insert("verdict".into(), json!(verdict(self.passed)));
        if let Some(e) = &self.error {
            o.insert("error".into(), json!(e));
        }
        for (k, v) in &self.metrics {
            o.insert(k.clone(), v.clone());
        }
        if timing {
            o.insert("seconds".into(), num(self.seconds));
        }
        Value::Object(o)
    }
}

pub fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "fail"
    }
}

fn link_json(link: &ChainLink) -> Value {
    let mut o = Map::new();
    o.insert(
        "enclosure".into(),
        match &link.value {
            Some(iv) => nums(&[iv.lo(), iv.hi()]),
            None => Value::Null,
        },
    );
    o.insert("verdict".into(), json!(link.verdict.name()));
    if let Some(n) = &link.note {
        o.insert("note".into(), json!(n));
    }
    Value::Object(o)
}

/// Certificate document: inputs, one entry per link and the overall verdict.
pub fn certificate_json(chain: &CertificateChain, inputs: Value, frontier: Option<Value>) -> Value {
    let mut o = Map::new();
    o.insert("inputs".into(), inputs);
    o.insert("r_bound".into(), link_json(&chain.r_bound));
    o.insert("step1".into(), link_json(&chain.step1_margin));
    o.insert("step2".into(), link_json(&chain.step2_bound));
    o.insert("step3".into(), link_json(&chain.step3_radius));
    o.insert("passed".into(), json!(chain.passed()));
    if let Some(f) = frontier {
        o.insert("frontier".into(), f);
    }
    Value::Object(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        let v = json!({"a": 0.5, "b": [1.0, -2.5e-300], "c": 3, "d": "x"});
        let s = to_json_string(&v);
        assert!(s.contains("\"a\": 5.0000000000000000e-1"), "{s}");
        assert!(s.contains("-2.5000000000000000e-300"), "{s}");
        assert!(s.contains("\"c\": 3"), "{s}");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.5));
        assert_eq!(back["b"][1].as_f64(), Some(-2.5e-300));
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(num(f64::INFINITY), Value::Null);
        assert_eq!(num(f64::NAN), Value::Null);
    }
}
