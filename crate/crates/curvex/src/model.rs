//! JSON forms of the preprocessor state and the error network.
//!
//! Network weights are stored as Base64 of little-endian `f32`, row-major per
//! layer (`rows` inputs by `cols` outputs), with the biases in a separate
//! string. The `hk` skip-add is recorded as metadata only.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use curvex_core::neural::{Activation, ErrorNet, HIDDEN_LAYERS};
use curvex_core::packet::{FEATURE_COUNT, FEATURE_NAMES};
use curvex_core::preprocess::{PreprocessorState, Whitener};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorJson {
    pub version: u32,
    pub h: f64,
    pub m_iota: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_stds: Vec<f64>,
    pub feature_order: Vec<String>,
}

impl From<&PreprocessorState> for PreprocessorJson {
    fn from(s: &PreprocessorState) -> Self {
        let w = &s.whitener;
        Self {
            version: FORMAT_VERSION,
            h: s.h,
            m_iota: s.m_iota(),
            means: w.means.clone(),
            stds: w.stds.clone(),
            components: w.components.clone(),
            explained_stds: w.explained_stds.clone(),
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PreprocessorJson {
    pub fn into_state(self) -> std::result::Result<PreprocessorState, String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if !self
            .feature_order
            .iter()
            .map(String::as_str)
            .eq(FEATURE_NAMES)
        {
            return Err("feature_order does not match the canonical order".into());
        }
        if self.means.len() != FEATURE_COUNT || self.stds.len() != FEATURE_COUNT {
            return Err(format!("means and stds need {FEATURE_COUNT} entries"));
        }
        if self.components.len() != self.m_iota
            || self.explained_stds.len() != self.m_iota
            || self.components.iter().any(|c| c.len() != FEATURE_COUNT)
        {
            return Err(format!(
                "components must be {} x {FEATURE_COUNT}",
                self.m_iota
            ));
        }
        if !(self.h > 0.0) {
            return Err("h must be positive".into());
        }
        Ok(PreprocessorState {
            h: self.h,
            whitener: Whitener {
                means: self.means,
                stds: self.stds,
                components: self.components,
                explained_stds: self.explained_stds,
            },
        })
    }
}

pub fn save_preprocessor(state: &PreprocessorState, path: &Path) -> Result<()> {
    write_json(&PreprocessorJson::from(state), path)
}

pub fn load_preprocessor(path: &Path) -> Result<PreprocessorState> {
    read_json::<PreprocessorJson>(path)?
        .into_state()
        .map_err(|message| Error::Json {
            path: path.into(),
            message,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerJson {
    #[serde(rename = "W_b64")]
    pub w_b64: String,
    pub b_b64: String,
    pub rows: usize,
    pub cols: usize,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub version: u32,
    pub eta: u32,
    pub h: f64,
    pub m_iota: usize,
    pub hidden_widths: [usize; HIDDEN_LAYERS],
    pub layers: Vec<LayerJson>,
    pub skip_add: bool,
    pub seed: u64,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, expected: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| format!("{what}: invalid Base64: {e}"))?;
    if bytes.len() != expected * 4 {
        return Err(format!(
            "{what}: decoded {} bytes, expected {} ({expected} f32 values)",
            bytes.len(),
            expected * 4
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Linear => "linear",
    }
}

impl From<&ErrorNet> for ModelJson {
    fn from(net: &ErrorNet) -> Self {
        Self {
            version: FORMAT_VERSION,
            eta: net.eta,
            h: net.h,
            m_iota: net.input_dim(),
            hidden_widths: net.hidden_widths(),
            layers: net
                .layers()
                .map(|l| LayerJson {
                    w_b64: encode(l.weights),
                    b_b64: encode(l.biases),
                    rows: l.rows,
                    cols: l.cols,
                    activation: activation_name(l.activation).into(),
                })
                .collect(),
            skip_add: true,
            seed: net.seed,
        }
    }
}

impl ModelJson {
    /// Rebuilds the network; weights carry their `f32` values.
    pub fn into_net(self) -> std::result::Result<ErrorNet, String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if !self.skip_add {
            return Err("only networks with the hk skip-add are supported".into());
        }
        let skeleton = ErrorNet::zeros(self.m_iota, self.hidden_widths, self.eta);
        if (skeleton.h - self.h).abs() > 1e-12 * self.h {
            return Err(format!("h = {} does not match eta = {}", self.h, self.eta));
        }
        let shapes: Vec<_> = skeleton
            .layers()
            .map(|l| (l.rows, l.cols, l.activation))
            .collect();
        if self.layers.len() != shapes.len() {
            return Err(format!(
                "expected {} layers, got {}",
                shapes.len(),
                self.layers.len()
            ));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (k, (l, &(rows, cols, act))) in self.layers.iter().zip(&shapes).enumerate() {
            if (l.rows, l.cols) != (rows, cols) {
                return Err(format!(
                    "layer {k}: declared {}x{}, architecture needs {rows}x{cols}",
                    l.rows, l.cols
                ));
            }
            if l.activation != activation_name(act) {
                return Err(format!(
                    "layer {k}: activation must be {}",
                    activation_name(act)
                ));
            }
            let w = decode(&l.w_b64, rows * cols, &format!("layer {k} weights"))?;
            let b = decode(&l.b_b64, cols, &format!("layer {k} biases"))?;
            layers.push((w, b));
        }
        ErrorNet::from_layers(
            self.m_iota,
            self.hidden_widths,
            self.eta,
            self.seed,
            &layers,
        )
        .map_err(|e| e.to_string())
    }
}

pub fn save_model(net: &ErrorNet, path: &Path) -> Result<()> {
    write_json(&ModelJson::from(net), path)
}

pub fn load_model(path: &Path) -> Result<ErrorNet> {
    read_json::<ModelJson>(path)?
        .into_net()
        .map_err(|message| Error::Json {
            path: path.into(),
            message,
        })
}
