//! Deterministic JSON: struct field order, floats with 17 significant digits.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

/// Compact formatter that writes every float as `d.dddddddddddddddde±x`.
struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser).expect("report types serialize");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Sample {
        b: f64,
        a: Vec<f64>,
        n: usize,
        missing: f64,
    }

    #[test]
    fn seventeen_digits_and_round_trip() {
        let s = Sample {
            b: 1.0 / 6.0,
            a: vec![0.1, -2.5e-300],
            n: 3,
            missing: 0.0,
        };
        let json = to_json(&s);
        assert_eq!(
            json,
            r#"{"b":1.6666666666666666e-1,"a":[1.0000000000000001e-1,-2.5000000000000000e-300],"n":3,"missing":0.0000000000000000e0}"#
        );
        assert_eq!(serde_json::from_str::<Sample>(&json).unwrap(), s);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_json(&vec![f64::INFINITY, f64::NAN]), "[null,null]");
    }
}
