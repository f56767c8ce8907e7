//! Row-major (de)serialization of `DMatrix<f64>` so persisted files read as
//! plain nested arrays.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        #[derive(Serialize)]
        struct Shape<'a> {
            nrows: usize,
            ncols: usize,
            rows: &'a [Vec<f64>],
        }
        Shape {
            nrows: m.nrows(),
            ncols: m.ncols(),
            rows: &rows,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Shape {
            nrows: usize,
            ncols: usize,
            rows: Vec<Vec<f64>>,
        }
        let shape = Shape::deserialize(d)?;
        if shape.rows.len() != shape.nrows || shape.rows.iter().any(|r| r.len() != shape.ncols) {
            return Err(D::Error::custom("matrix rows do not match declared shape"));
        }
        Ok(DMatrix::from_fn(shape.nrows, shape.ncols, |i, j| {
            shape.rows[i][j]
        }))
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}
