//! Serialization helpers shared by every artifact: stable JSON, CSV rows,
//! run-config hashing.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Serializes to pretty JSON with object keys in sorted order.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value maps are BTreeMaps, so the round trip sorts keys.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// First 16 hex digits of the SHA-256 of the value's stable JSON.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let s = to_stable_json(value)?;
    let digest = Sha256::digest(s.as_bytes());
    Ok(hex::encode(&digest[..8]))
}

/// Formats a float for CSV: shortest round-trip decimal, `inf` / `-inf` / `nan`
/// for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

/// Serde adapter for `f64` fields that may be infinite: finite values are
/// plain JSON numbers, non-finite ones the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod ext_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&super::fmt_f64(*x))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a float: {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Wrap {
        #[serde(with = "ext_f64")]
        x: f64,
        a: u32,
    }

    #[test]
    fn infinite_values_survive_json() {
        for x in [f64::INFINITY, 1.5, -0.1] {
            let s = to_stable_json(&Wrap { x, a: 1 }).unwrap();
            let back: Wrap = serde_json::from_str(&s).unwrap();
            assert_eq!(back.x, x);
        }
    }

    #[test]
    fn stable_json_sorts_keys() {
        let s = to_stable_json(&Wrap { x: 1.0, a: 2 }).unwrap();
        assert!(s.find("\"a\"").unwrap() < s.find("\"x\"").unwrap());
    }

    #[test]
    fn hash_is_stable() {
        let h1 = config_hash(&Wrap { x: 1.0, a: 2 }).unwrap();
        let h2 = config_hash(&Wrap { x: 1.0, a: 2 }).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 16);
        assert_ne!(h1, config_hash(&Wrap { x: 1.0, a: 3 }).unwrap());
    }
}
