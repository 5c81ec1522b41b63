//! Model checkpoint file: a JSON document listing every parameter tensor
//! with an explicit shape header.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "inforeg-checkpoint-v1",
//!   "fusion": "concat",
//!   "classes": 4,
//!   "tensors": [
//!     {"name": "encoder0.layer0.weight", "shape": [16, 16], "data": [/* row-major f64 */]},
//!     {"name": "encoder0.layer0.bias",   "shape": [16],     "data": [/* ... */]},
//!     ...,
//!     {"name": "classifier.weight", "shape": [32, 4], "data": [/* ... */]},
//!     {"name": "classifier.bias",   "shape": [4],     "data": [/* ... */]}
//!   ]
//! }
//! ```
//!
//! Tensors appear encoder by encoder, layer by layer, weight before bias,
//! classifier last. Floats are written with the shortest round-trip decimal
//! representation, so save → load reproduces every parameter bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Fusion, Linear, ModelParams};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "inforeg-checkpoint-v1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Serialized model parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    format: String,
    fusion: String,
    classes: usize,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Checkpoint {
        let mut tensors = Vec::new();
        for (m, layers) in params.encoders.iter().enumerate() {
            for (l, layer) in layers.iter().enumerate() {
                tensors.push(TensorEntry {
                    name: format!("encoder{m}.layer{l}.weight"),
                    shape: layer.w.shape().to_vec(),
                    data: layer.w.data().to_vec(),
                });
                tensors.push(TensorEntry {
                    name: format!("encoder{m}.layer{l}.bias"),
                    shape: layer.b.shape().to_vec(),
                    data: layer.b.data().to_vec(),
                });
            }
        }
        tensors.push(TensorEntry {
            name: "classifier.weight".into(),
            shape: params.classifier.w.shape().to_vec(),
            data: params.classifier.w.data().to_vec(),
        });
        tensors.push(TensorEntry {
            name: "classifier.bias".into(),
            shape: params.classifier.b.shape().to_vec(),
            data: params.classifier.b.data().to_vec(),
        });
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            fusion: params.fusion().as_str().into(),
            classes: params.classes(),
            tensors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    /// Parse and structurally validate untrusted checkpoint bytes. Never
    /// panics; every malformed input maps to an error.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Checkpoint> {
        let ck: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| Error::Input(format!("checkpoint parse: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Input(format!("unknown checkpoint format `{}`", ck.format)));
        }
        Fusion::parse(&ck.fusion).map_err(|_| Error::Input(format!("bad fusion `{}`", ck.fusion)))?;
        if ck.tensors.len() < 4 || !ck.tensors.len().is_multiple_of(2) {
            return Err(Error::Input(
                "checkpoint must hold weight/bias pairs with the classifier last".into(),
            ));
        }
        for t in &ck.tensors {
            let n: usize = t.shape.iter().product();
            if t.shape.is_empty() || t.shape.contains(&0) || n != t.data.len() {
                return Err(Error::Input(format!(
                    "tensor `{}`: shape {:?} does not match {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            if !t.data.iter().all(|v| v.is_finite()) {
                return Err(Error::Input(format!("tensor `{}` has non-finite values", t.name)));
            }
        }
        Ok(ck)
    }

    /// Rebuild model parameters, checking the tensor naming scheme, layer
    /// pairing, and fusion dimension invariants.
    pub fn into_params(self) -> Result<ModelParams> {
        let fusion = Fusion::parse(&self.fusion)?;
        if self.tensors.len() < 4 || !self.tensors.len().is_multiple_of(2) {
            return Err(Error::Input("checkpoint must hold weight/bias pairs".into()));
        }
        let mut encoders: Vec<Vec<Linear>> = Vec::new();
        let mut iter = self.tensors.into_iter().peekable();
        while iter.peek().is_some_and(|t| t.name != "classifier.weight") {
            let m = encoders.len();
            let prefix = format!("encoder{m}.");
            let mut layers = Vec::new();
            while iter.peek().is_some_and(|t| t.name.starts_with(&prefix)) {
                let l = layers.len();
                let w = take_named(&mut iter, &format!("encoder{m}.layer{l}.weight"), 2)?;
                let b = take_named(&mut iter, &format!("encoder{m}.layer{l}.bias"), 1)?;
                if w.cols() != b.len() {
                    return Err(Error::Input(format!(
                        "encoder{m}.layer{l}: weight cols {} != bias len {}",
                        w.cols(),
                        b.len()
                    )));
                }
                layers.push(Linear { w, b });
            }
            if layers.is_empty() {
                return Err(Error::Input(format!("encoder{m} has no layers")));
            }
            // Consecutive layers must chain.
            for pair in layers.windows(2) {
                if pair[0].w.cols() != pair[1].w.rows() {
                    return Err(Error::Input(format!("encoder{m}: layer dims do not chain")));
                }
            }
            encoders.push(layers);
        }
        if encoders.is_empty() {
            return Err(Error::Input("checkpoint has no encoders".into()));
        }
        let w = take_named(&mut iter, "classifier.weight", 2)?;
        let b = take_named(&mut iter, "classifier.bias", 1)?;
        if iter.next().is_some() {
            return Err(Error::Input("unexpected tensors after classifier".into()));
        }
        if w.cols() != b.len() || w.cols() != self.classes {
            return Err(Error::Input("classifier shape disagrees with class count".into()));
        }
        let embed_dims: Vec<usize> = encoders
            .iter()
            .map(|layers| layers.last().expect("nonempty").w.cols())
            .collect();
        let expected_in = match fusion {
            Fusion::Concat => embed_dims.iter().sum::<usize>(),
            Fusion::Sum => {
                if embed_dims.windows(2).any(|p| p[0] != p[1]) {
                    return Err(Error::Input("sum fusion requires equal encoder output dims".into()));
                }
                embed_dims[0]
            }
        };
        if w.rows() != expected_in {
            return Err(Error::Input(format!(
                "classifier fan-in {} != fused dim {expected_in}",
                w.rows()
            )));
        }
        if fusion == Fusion::Concat && embed_dims.windows(2).any(|p| p[0] != p[1]) {
            return Err(Error::Input("encoders must share one embed dim".into()));
        }
        let classes = self.classes;
        Ok(ModelParams::from_parts(encoders, Linear { w, b }, fusion, classes))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        Checkpoint::from_json_slice(&bytes)
    }
}

fn take_named(
    iter: &mut std::iter::Peekable<std::vec::IntoIter<TensorEntry>>,
    name: &str,
    rank: usize,
) -> Result<Tensor> {
    let entry = iter
        .next()
        .ok_or_else(|| Error::Input(format!("missing tensor `{name}`")))?;
    if entry.name != name {
        return Err(Error::Input(format!("expected tensor `{name}`, found `{}`", entry.name)));
    }
    if entry.shape.len() != rank {
        return Err(Error::Input(format!(
            "tensor `{name}`: expected rank {rank}, got {:?}",
            entry.shape
        )));
    }
    Tensor::new(entry.shape, entry.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::{RngState, Stream};

    fn small_params() -> ModelParams {
        let cfg = ModelConfig { hidden: [5, 4], embed_dim: 3, fusion: Fusion::Concat, classes: 3 };
        let mut rng = RngState::stream(1, Stream::Init);
        ModelParams::init(&cfg, &[4, 2], &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = small_params();
        let json = Checkpoint::from_params(&params).to_json();
        let back = Checkpoint::from_json_slice(json.as_bytes()).unwrap().into_params().unwrap();
        assert_eq!(params.param_count(), back.param_count());
        for i in 0..params.param_count() {
            assert_eq!(params.param_get(i).to_bits(), back.param_get(i).to_bits(), "param {i}");
        }
        assert_eq!(params.fusion(), back.fusion());
        assert_eq!(params.classes(), back.classes());
    }

    #[test]
    fn malformed_inputs_are_rejected_without_panic() {
        let cases: &[&[u8]] = &[
            b"",
            b"{}",
            b"not json",
            br#"{"format":"inforeg-checkpoint-v1","fusion":"concat","classes":2,"tensors":[]}"#,
            br#"{"format":"other","fusion":"concat","classes":2,"tensors":[]}"#,
            // shape/data disagreement
            br#"{"format":"inforeg-checkpoint-v1","fusion":"concat","classes":2,
                "tensors":[{"name":"encoder0.layer0.weight","shape":[2,2],"data":[1.0]}]}"#,
        ];
        for c in cases {
            assert!(Checkpoint::from_json_slice(c).is_err());
        }
    }

    #[test]
    fn fusion_dimension_mismatch_is_rejected() {
        let params = small_params();
        let json = Checkpoint::from_params(&params).to_json();
        // Claim sum fusion: classifier fan-in (2 modalities × 3) no longer matches.
        let tampered = json.replace("\"fusion\":\"concat\"", "\"fusion\":\"sum\"");
        let ck = Checkpoint::from_json_slice(tampered.as_bytes()).unwrap();
        assert!(ck.into_params().is_err());
    }
}
