//! Serialization helpers shared by the JSON reports.

use nalgebra::DMatrix;
use serde::ser::{SerializeSeq, Serializer};

/// Serializes a matrix as a list of rows.
pub fn ser_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        let r: Vec<f64> = row.iter().copied().collect();
        seq.serialize_element(&r)?;
    }
    seq.end()
}

/// JSON has no infinities; non-finite values become `null`.
pub fn ser_finite<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

pub fn ser_finite_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        _ => s.serialize_none(),
    }
}
