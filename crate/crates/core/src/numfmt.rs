/// Scientific notation with 17 significant digits, enough to round-trip any
/// binary64 value.
pub(crate) fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::sig17;

    #[test]
    fn round_trips() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            0.0,
            123_456_789.123_456_79,
            f64::MIN_POSITIVE,
        ] {
            let s = sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(sig17(0.5), "5.0000000000000000e-1");
    }
}
