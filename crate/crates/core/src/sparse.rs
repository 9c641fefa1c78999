//! Serde adapter storing a dense coefficient vector as index/value pairs.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Sparse {
    len: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

pub fn serialize<S: Serializer>(dense: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let (indices, values) = dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .unzip();
    Sparse {
        len: dense.len(),
        indices,
        values,
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let sp = Sparse::deserialize(d)?;
    if sp.indices.len() != sp.values.len() {
        return Err(serde::de::Error::custom("indices and values differ in length"));
    }
    let mut dense = vec![0.0; sp.len];
    for (i, v) in sp.indices.into_iter().zip(sp.values) {
        *dense
            .get_mut(i)
            .ok_or_else(|| serde::de::Error::custom("sparse index out of range"))? = v;
    }
    Ok(dense)
}
