//! JSON emission with floats rounded to 9 significant digits, enough to
//! round-trip any f32 exactly.

use serde::Serialize;
use serde_json::{Number, Value};

pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(r) = Number::from_f64(round_sig9(x)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    let mut v = serde_json::to_value(value).expect("analysis types serialize");
    round_value(&mut v);
    v
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    to_value(value).to_string()
}

pub fn to_string_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(&to_value(value)).expect("json value serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(round_sig9(0.1f32 as f64), 0.100000001);
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(to_string(&vec![0.5f64, 2.0]), "[0.5,2.0]");
        assert_eq!(to_string(&7u32), "7");
    }

    proptest! {
        #[test]
        fn f32_survives(bits in any::<u32>()) {
            let x = f32::from_bits(bits);
            prop_assume!(x.is_finite());
            let text = to_string(&(x as f64));
            let back: f32 = text.parse::<f64>().unwrap() as f32;
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
