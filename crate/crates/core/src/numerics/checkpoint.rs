//! Versioned text checkpoint: a metadata map plus named row-major tensors.
//!
//! ```text
//! MAGCKPT 1 f64
//! meta <key> <value...>
//! tensor <name> <rank> <dim>...
//! <values separated by spaces>
//! ```
//! Values are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Adam, ParamStore, Tensor};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &str = "MAGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Default for Checkpoint<T> {
    fn default() -> Self {
        Self {
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key {key}")))
    }

    pub fn meta_parse<V: std::str::FromStr>(&self, key: &str) -> Result<V> {
        self.meta(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad value for {key}")))
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.push((name.into(), t));
    }

    /// Append every parameter under `prefix/`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore<T>) {
        for (_, name, t) in store.iter() {
            self.push(format!("{prefix}/{name}"), t.clone());
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    /// Overwrite `store` with the tensors saved under `prefix/`.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore<T>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let key = format!("{prefix}/{}", store.name(id));
            let t = self.tensor(&key)?;
            if t.shape() != store.get(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {key}: checkpoint {:?}, model {:?}",
                    t.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    /// Append Adam's step count and moments, named after `params`.
    pub fn push_optimizer(&mut self, adam: &Adam<T>, params: &ParamStore<T>) {
        self.set_meta("optimizer_step", adam.step_count());
        for (id, name, _) in params.iter() {
            let (m, v) = adam.moments(id);
            self.push(format!("adam_m/{name}"), m.clone());
            self.push(format!("adam_v/{name}"), v.clone());
        }
    }

    pub fn load_optimizer(&self, adam: &mut Adam<T>, params: &ParamStore<T>) -> Result<()> {
        let mut first = Vec::with_capacity(params.len());
        let mut second = Vec::with_capacity(params.len());
        for (_, name, _) in params.iter() {
            first.push(self.tensor(&format!("adam_m/{name}"))?.clone());
            second.push(self.tensor(&format!("adam_v/{name}"))?.clone());
        }
        adam.restore(self.meta_parse("optimizer_step")?, first, second)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {}", T::DTYPE);
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        for (name, t) in &self.tensors {
            let _ = write!(s, "tensor {name} {}", t.shape().len());
            for d in t.shape() {
                let _ = write!(s, " {d}");
            }
            s.push('\n');
            let mut first = true;
            for v in t.data() {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| bad(0, "empty checkpoint"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != CHECKPOINT_MAGIC {
            return Err(bad(0, "missing checkpoint header"));
        }
        let version: u32 = parts[1].parse().map_err(|_| bad(0, "bad version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        if parts[2] != T::DTYPE {
            return Err(Error::Checkpoint(format!(
                "checkpoint stores {}, expected {}",
                parts[2],
                T::DTYPE
            )));
        }
        let mut ck = Checkpoint::new();
        while let Some((ln, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() < 2 {
                    return Err(bad(ln, "truncated tensor header"));
                }
                let rank: usize = f[1].parse().map_err(|_| bad(ln, "bad rank"))?;
                if f.len() != 2 + rank {
                    return Err(bad(ln, "rank does not match dims"));
                }
                let shape = f[2..]
                    .iter()
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(ln, "bad dimension"))?;
                let (vl, vals) = lines.next().ok_or_else(|| bad(ln, "missing values"))?;
                let data = vals
                    .split_whitespace()
                    .map(|v| v.parse::<T>().ok())
                    .collect::<Option<Vec<T>>>()
                    .ok_or_else(|| bad(vl, "bad value"))?;
                let t = Tensor::new(shape, data).map_err(|e| bad(vl, &e.to_string()))?;
                ck.tensors.push((f[0].to_string(), t));
            } else {
                return Err(bad(ln, "unrecognised line"));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialised form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut ck = Checkpoint::<f64>::new();
        ck.set_meta("step", 42);
        ck.set_meta("note", "two words");
        ck.push("a/b", Tensor::randn(&[3, 4], 1.0, &mut rng));
        ck.push("c", Tensor::new(vec![2], vec![1e-300, -0.0]).unwrap());
        ck.push("d", Tensor::randn(&[2, 3, 2], 1e5, &mut rng));
        let back = Checkpoint::<f64>::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("note").unwrap(), "two words");
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut ck = Checkpoint::<f32>::new();
        ck.push("w", Tensor::randn(&[5, 5], 0.3, &mut rng));
        let back = Checkpoint::<f32>::from_text(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_wrong_dtype_and_version() {
        let ck = Checkpoint::<f32>::new();
        assert!(Checkpoint::<f64>::from_text(&ck.to_text()).is_err());
        assert!(Checkpoint::<f64>::from_text("MAGCKPT 9 f64\n").is_err());
        assert!(Checkpoint::<f64>::from_text("garbage").is_err());
    }
}
