//! Flat parameter storage with named entries, plus MLP layer definitions and
//! seeded initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor2D;
use super::{NnError, Real};

/// Handle to one registered parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

/// All learnable weights of a model, stored as one flat vector so the
/// optimizer and gradient surgery can treat them uniformly. Entries registered
/// before [`Params::mark_shared_boundary`] form the shared block; entries
/// after it are head-private.
#[derive(Debug, Clone)]
pub struct Params {
    entries: Vec<ParamEntry>,
    data: Vec<Real>,
    shared_len: usize,
    version: u64,
}

impl Params {
    pub fn new() -> Self {
        Params {
            entries: Vec::new(),
            data: Vec::new(),
            shared_len: 0,
            version: 0,
        }
    }

    pub fn register(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let offset = self.data.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            rows,
            cols,
            offset,
        });
        self.data.resize(offset + rows * cols, 0.0);
        ParamId(self.entries.len() - 1)
    }

    /// Everything registered so far becomes the shared block; later entries
    /// are treated as head-private by gradient surgery.
    pub fn mark_shared_boundary(&mut self) {
        self.shared_len = self.data.len();
    }

    pub fn shared_len(&self) -> usize {
        self.shared_len
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn slice(&self, id: ParamId) -> &[Real] {
        let e = &self.entries[id.0];
        &self.data[e.offset..e.offset + e.rows * e.cols]
    }

    /// Parameter tensor viewed as a matrix (copies the slice).
    pub fn tensor(&self, id: ParamId) -> Tensor2D {
        let e = &self.entries[id.0];
        Tensor2D::from_vec(e.rows, e.cols, self.slice(id).to_vec())
            .expect("registered parameters are finite")
    }

    pub fn set_from(&mut self, id: ParamId, values: &[Real]) -> Result<(), NnError> {
        let e = self.entries[id.0].clone();
        if values.len() != e.rows * e.cols {
            return Err(NnError::ShapeMismatch(format!(
                "param {}: expected {} values, got {}",
                e.name,
                e.rows * e.cols,
                values.len()
            )));
        }
        self.data[e.offset..e.offset + values.len()].copy_from_slice(values);
        self.version += 1;
        Ok(())
    }

    pub fn flat(&self) -> &[Real] {
        &self.data
    }

    /// Mutable access to the flat parameter vector. Invalidates live tapes.
    pub fn flat_mut(&mut self) -> &mut [Real] {
        self.version += 1;
        &mut self.data
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn assign_flat(&mut self, values: &[Real]) -> Result<(), NnError> {
        if values.len() != self.data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "flat assign: expected {} values, got {}",
                self.data.len(),
                values.len()
            )));
        }
        self.data.copy_from_slice(values);
        self.version += 1;
        Ok(())
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One affine layer `y = x·Wᵀ + b` with an optional ReLU.
#[derive(Debug, Clone, Copy)]
pub struct MlpLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

/// A stack of layers applied in order.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<MlpLayer>,
}

impl Mlp {
    pub fn single(layer: MlpLayer) -> Self {
        Mlp {
            layers: vec![layer],
        }
    }

    pub fn output_dim(&self, params: &Params) -> usize {
        let last = self.layers.last().expect("mlp has at least one layer");
        params.entry(last.weight).rows
    }
}

/// Registers one layer; He-uniform init for ReLU layers, Xavier-uniform for
/// linear layers, biases zero.
pub fn init_layer(
    params: &mut Params,
    rng: &mut ChaCha8Rng,
    name: &str,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
) -> MlpLayer {
    let weight = params.register(&format!("{name}.weight"), out_dim, in_dim);
    let bias = params.register(&format!("{name}.bias"), 1, out_dim);
    let bound = match activation {
        Activation::Relu => (6.0 / in_dim as f64).sqrt(),
        Activation::None => (6.0 / (in_dim + out_dim) as f64).sqrt(),
    };
    let e = params.entry(weight).clone();
    {
        let flat = params.flat_mut();
        for v in flat[e.offset..e.offset + e.rows * e.cols].iter_mut() {
            *v = rng.random_range(-bound..bound) as Real;
        }
    }
    MlpLayer {
        weight,
        bias,
        activation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn register_and_flat_layout() {
        let mut p = Params::new();
        let a = p.register("a", 2, 3);
        let b = p.register("b", 1, 4);
        assert_eq!(p.len(), 10);
        assert_eq!(p.entry(a).offset, 0);
        assert_eq!(p.entry(b).offset, 6);
        p.set_from(b, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.slice(b), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&p.flat()[6..], &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn shared_boundary_splits_blocks() {
        let mut p = Params::new();
        p.register("shared", 2, 2);
        p.mark_shared_boundary();
        p.register("head", 1, 3);
        assert_eq!(p.shared_len(), 4);
        assert_eq!(p.len(), 7);
    }

    #[test]
    fn init_is_seeded_and_deterministic() {
        let make = |seed| {
            let mut p = Params::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            init_layer(&mut p, &mut rng, "l", 8, 4, Activation::Relu);
            p.flat().to_vec()
        };
        assert_eq!(make(7), make(7));
        assert_ne!(make(7), make(8));
    }

    #[test]
    fn mutation_bumps_version() {
        let mut p = Params::new();
        p.register("a", 1, 1);
        let v0 = p.version();
        p.flat_mut()[0] = 1.0;
        assert!(p.version() > v0);
    }
}
