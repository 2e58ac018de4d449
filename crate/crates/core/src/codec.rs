//! JSON wire shapes for complex data: scalars are `[re, im]` pairs, matrices
//! are row-major nested arrays.

use crate::error::{Error, Result};
use crate::model::{CMatrix, CVector, C64};

pub type WireComplex = [f64; 2];
pub type WireVector = Vec<WireComplex>;
pub type WireMatrix = Vec<Vec<WireComplex>>;

pub fn complex_to_wire(z: C64) -> WireComplex {
    [z.re, z.im]
}

pub fn complex_from_wire(w: WireComplex) -> C64 {
    C64::new(w[0], w[1])
}

pub fn vector_to_wire(v: &CVector) -> WireVector {
    v.iter().copied().map(complex_to_wire).collect()
}

pub fn vector_from_wire(w: &[WireComplex]) -> CVector {
    CVector::from_iterator(w.len(), w.iter().copied().map(complex_from_wire))
}

pub fn matrix_to_wire(m: &CMatrix) -> WireMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| complex_to_wire(m[(i, j)])).collect())
        .collect()
}

/// Rows must all have the same length; `key` names the field in errors.
pub fn matrix_from_wire(rows: &[Vec<WireComplex>], key: &str) -> Result<CMatrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Parse {
            key: format!("{key}[{i}]"),
            msg: format!("row has {} entries, expected {ncols}", r.len()),
        });
    }
    Ok(CMatrix::from_fn(rows.len(), ncols, |i, j| complex_from_wire(rows[i][j])))
}

/// Serde adapters for use with `#[serde(with = ...)]`.
pub mod serde_vector {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> std::result::Result<S::Ok, S::Error> {
        vector_to_wire(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CVector, D::Error> {
        let w = WireVector::deserialize(d)?;
        Ok(vector_from_wire(&w))
    }
}

pub mod serde_matrix {
    use super::*;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_wire(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let w = WireMatrix::deserialize(d)?;
        matrix_from_wire(&w, "matrix").map_err(D::Error::custom)
    }
}

pub mod serde_matrices {
    use super::*;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(matrix_to_wire).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CMatrix>, D::Error> {
        let w = Vec::<WireMatrix>::deserialize(d)?;
        w.iter()
            .map(|m| matrix_from_wire(m, "matrix").map_err(D::Error::custom))
            .collect()
    }
}

pub mod serde_complex {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
        complex_to_wire(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
        Ok(complex_from_wire(WireComplex::deserialize(d)?))
    }
}
