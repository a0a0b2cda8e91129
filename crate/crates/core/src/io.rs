//! JSON layout: complex numbers as `[re, im]`, matrices as row-major nested
//! arrays.

use crate::matrix::{CMat, C64};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn mat_rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_mat(rows: &[Vec<C64>]) -> Result<CMat, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err("ragged matrix".into());
    }
    Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
}

pub mod cmat {
    use super::*;
    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        mat_rows(m).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<C64>>::deserialize(d)?;
        rows_mat(&rows).map_err(D::Error::custom)
    }
}

pub mod cmat_opt {
    use super::*;
    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(mat_rows).serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMat>, D::Error> {
        let rows = Option::<Vec<Vec<C64>>>::deserialize(d)?;
        rows.map(|r| rows_mat(&r).map_err(D::Error::custom)).transpose()
    }
}

pub mod cvec {
    use super::*;
    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Vec::<C64>::deserialize(d)
    }
}
