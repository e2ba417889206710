//! JSON has no infinities; exponent bounds use them routinely.

use serde::Serializer;

/// Finite values as numbers, infinities as `"inf"` / `"-inf"`, NaN as `null`.
pub fn extended_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_none()
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn extended_f64_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&Extended(*x))?;
    }
    seq.end()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extended(pub f64);

impl serde::Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        extended_f64(&self.0, s)
    }
}

pub fn extended_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => extended_f64(v, s),
        None => s.serialize_none(),
    }
}
