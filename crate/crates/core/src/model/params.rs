use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Named trainable tensors with seeded initialisation.
///
/// Every parameter is created through this store so that two stores built with the
/// same seed and the same sequence of calls hold identical weights.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        ParamStore { vars: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(seed), dtype, device }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, data: Vec<f64>, shape: impl Into<Shape>) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::config(format!("parameter {name} defined twice")));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn normal(&mut self, name: &str, shape: impl Into<Shape>, std: f64) -> Result<Tensor> {
        let shape = shape.into();
        let dist = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
        let data = (0..shape.elem_count()).map(|_| dist.sample(&mut self.rng)).collect();
        self.insert(name, data, shape)
    }

    pub fn uniform(&mut self, name: &str, shape: impl Into<Shape>, bound: f64) -> Result<Tensor> {
        let shape = shape.into();
        let data = (0..shape.elem_count()).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.insert(name, data, shape)
    }

    pub fn constant(&mut self, name: &str, shape: impl Into<Shape>, value: f64) -> Result<Tensor> {
        let shape = shape.into();
        self.insert(name, vec![value; shape.elem_count()], shape)
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Number of scalar parameters whose name starts with `prefix` (`""` for all).
    pub fn count(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.as_tensor().elem_count())
            .sum()
    }

    /// Variables not under any of the `frozen` prefixes.
    pub fn trainable(&self, frozen: &[&str]) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| !frozen.iter().any(|p| n.starts_with(p)))
            .map(|(_, v)| v.clone())
            .collect()
    }

    /// Detached copies of every parameter.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.as_tensor().detach().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let t = snapshot
                .get(name)
                .ok_or_else(|| Error::config(format!("snapshot lacks parameter {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::config(format!(
                    "parameter {name}: shape {:?} does not match {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(n, v)| (n.clone(), v.as_tensor().detach()))
            .collect();
        candle_core::safetensors::save(&map, path.as_ref())?;
        Ok(())
    }

    pub fn load(&self, path: impl AsRef<Path>) -> Result<()> {
        let loaded = candle_core::safetensors::load(path.as_ref(), &self.device)?;
        self.restore(&loaded.into_iter().collect())
    }
}
