//! Versioned checkpoint file: a JSON document carrying free-form metadata and
//! the flat list of named parameter arrays (name, shape, row-major values).
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::matrix::Matrix;
use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hyperset-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub meta: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn capture(store: &ParamStore, meta: serde_json::Value) -> Self {
        let params = store
            .iter()
            .map(|(_, name, m)| ParamRecord {
                name: name.to_string(),
                shape: [m.rows(), m.cols()],
                values: m.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            meta,
            params,
        }
    }

    /// Overwrite `store` with the recorded values. Names, order and shapes
    /// must match exactly.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters in file, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for (rec, id) in self.params.iter().zip(ids) {
            if rec.name != store.name(id) {
                return Err(Error::Checkpoint(format!(
                    "expected parameter {}, found {}",
                    store.name(id),
                    rec.name
                )));
            }
            let m = Matrix::from_vec(rec.shape[0], rec.shape[1], rec.values.clone())
                .map_err(|_| Error::Checkpoint(format!("bad value count for {}", rec.name)))?;
            if m.shape() != store.get(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "shape of {}: file {:?}, model {:?}",
                    rec.name,
                    m.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = m;
        }
        Ok(())
    }

    pub fn to_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut store = ParamStore::new();
            let n = values.len();
            store.add("a", Matrix::from_vec(1, n, values.clone()).unwrap());
            store.add("b", Matrix::from_vec(n, 1, values.iter().map(|v| v * 0.5).collect()).unwrap());
            let text = Checkpoint::capture(&store, serde_json::json!({"k": 1})).to_string().unwrap();
            let mut fresh = ParamStore::new();
            fresh.add("a", Matrix::zeros(1, n));
            fresh.add("b", Matrix::zeros(n, 1));
            Checkpoint::parse(&text).unwrap().restore_into(&mut fresh).unwrap();
            for id in store.ids() {
                let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(store.get(id)), bits(fresh.get(id)));
            }
        }
    }

    #[test]
    fn mismatched_model_rejected() {
        let mut store = ParamStore::new();
        store.add("a", Matrix::zeros(2, 2));
        let ck = Checkpoint::capture(&store, serde_json::Value::Null);
        let mut other = ParamStore::new();
        other.add("a", Matrix::zeros(2, 3));
        assert!(ck.restore_into(&mut other).is_err());
        let mut renamed = ParamStore::new();
        renamed.add("b", Matrix::zeros(2, 2));
        assert!(ck.restore_into(&mut renamed).is_err());
        let bad = ck
            .to_string()
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        assert!(Checkpoint::parse(&bad).is_err());
    }
}
