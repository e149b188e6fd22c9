//! Floats in JSON files with 17 significant digits, so reading a file back
//! reproduces every bit. Non-finite values are written as strings.

use serde::de::{self, Deserializer};
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exact(pub f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            let raw = RawValue::from_string(format!("{v:.16e}")).map_err(S::Error::custom)?;
            raw.serialize(serializer)
        } else if v.is_nan() {
            serializer.serialize_str("nan")
        } else if v > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(Exact(v)),
            Repr::Str(s) => match s.as_str() {
                "-inf" => Ok(Exact(f64::NEG_INFINITY)),
                "inf" => Ok(Exact(f64::INFINITY)),
                "nan" => Ok(Exact(f64::NAN)),
                other => Err(de::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}
