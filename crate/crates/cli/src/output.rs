//! JSON and CSV emission with fixed float formatting.

use serde_json::{Map, Value};

pub const SCHEMA: u64 = 1;

/// Rounds to 12 significant digits; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn params(ps: &[(String, f64)]) -> Value {
    let mut m = Map::new();
    for (k, v) in ps {
        m.insert(k.clone(), num(*v));
    }
    Value::Object(m)
}

/// Pretty JSON with a trailing newline.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// 12-significant-digit CSV field.
pub fn field(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        "nan".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_stable() {
        assert_eq!(num(0.1 + 0.2), num(0.3));
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(render(&num(1.0 / 3.0)), "0.333333333333\n");
    }
}
