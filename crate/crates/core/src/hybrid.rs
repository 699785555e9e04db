//! Gated neural correction of interpolated curvature at interface nodes.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::field::{
    interpolate_bilinear, project_to_interface, FieldError, Node, ScalarField, VectorField,
};
use crate::neural::{Corrector, NeuralError};
use crate::packet::{collect, DataPacket};
use crate::preprocess::{PreprocessError, PreprocessorState};

pub const DEFAULT_HK_LOW: f64 = 0.004;
pub const DEFAULT_HK_UP: f64 = 0.007;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HybridError {
    #[error("need 0 < hk_low < hk_up, got {0} and {1}")]
    InvalidGate(f64, f64),
    #[error("network expects {net} inputs but the preprocessor yields {pre}")]
    InputMismatch { net: usize, pre: usize },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Level set with its derived normals and nodal curvature.
#[derive(Debug, Clone, Copy)]
pub struct Fields<'a> {
    pub phi: &'a ScalarField,
    pub normals: &'a VectorField,
    pub curvature: &'a ScalarField,
}

impl Fields<'_> {
    pub fn h(&self) -> f64 {
        self.phi.grid().h()
    }

    /// `h` times nodal curvature interpolated at the node's projection.
    pub fn numerical_hk(&self, node: Node) -> Result<f64, FieldError> {
        let phi = self
            .phi
            .get(node)
            .ok_or(FieldError::IncompleteStencil(node.i, node.j))?;
        if self.normals.is_degenerate(node) {
            return Err(FieldError::DegenerateNormal(node.i, node.j));
        }
        let n = self
            .normals
            .get(node)
            .ok_or(FieldError::IncompleteStencil(node.i, node.j))?;
        let x = project_to_interface(self.phi.position(node), phi, n)?;
        Ok(self.h() * interpolate_bilinear(self.curvature, x)?)
    }

    pub fn packet(&self, node: Node) -> Result<DataPacket, FieldError> {
        collect(self.phi, self.normals, self.curvature, node)
    }
}

/// Blend weight towards the numerical value and sign restoration: with
/// `lambda = (up - |hk|) / (up - low)` below `up`, the result is
/// `sign(hk) * |(1 - lambda) * avg - lambda * |hk||`.
pub fn blend(hk: f64, averaged: f64, hk_low: f64, hk_up: f64) -> f64 {
    let a = hk.abs();
    let mixed = if a <= hk_up {
        let lambda = (hk_up - a) / (hk_up - hk_low);
        (1.0 - lambda) * averaged + lambda * -a
    } else {
        averaged
    };
    mixed.abs().copysign(hk)
}

/// Result of a batched evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutcome {
    pub values: Vec<f64>,
    /// Rows pushed through the network (two per corrected node).
    pub network_rows: usize,
    /// Nodes whose packet could not be built and kept the numerical value.
    pub fallbacks: usize,
}

/// The gated corrector: numerical `hk` below `hk_low`, averaged network
/// prediction on the packet and its mirror above, blended in between.
pub struct Hybrid<'a, C: Corrector> {
    net: &'a C,
    pre: &'a PreprocessorState,
    hk_low: f64,
    hk_up: f64,
}

impl<'a, C: Corrector> Hybrid<'a, C> {
    pub fn new(
        net: &'a C,
        pre: &'a PreprocessorState,
        hk_low: f64,
        hk_up: f64,
    ) -> Result<Self, HybridError> {
        if !(0.0 < hk_low && hk_low < hk_up) {
            return Err(HybridError::InvalidGate(hk_low, hk_up));
        }
        if net.input_dim() != pre.m_iota() {
            return Err(HybridError::InputMismatch {
                net: net.input_dim(),
                pre: pre.m_iota(),
            });
        }
        pre.check_resolution(net.resolution())?;
        Ok(Self {
            net,
            pre,
            hk_low,
            hk_up,
        })
    }

    pub fn with_defaults(net: &'a C, pre: &'a PreprocessorState) -> Result<Self, HybridError> {
        Self::new(net, pre, DEFAULT_HK_LOW, DEFAULT_HK_UP)
    }

    pub fn is_gated(&self, hk: f64) -> bool {
        hk.abs() >= self.hk_low
    }

    /// The two network inputs (standard form and its mirror) for a packet.
    fn standard_pair(packet: &DataPacket) -> [DataPacket; 2] {
        let p = if packet.hk > 0.0 {
            packet.negate()
        } else {
            *packet
        };
        let p = p.reorient();
        [p, p.reflect()]
    }

    /// Corrected `hk` for packets, batching every gated one into one call.
    pub fn correct_packets(&self, packets: &[DataPacket]) -> Result<BatchOutcome, HybridError> {
        let m = self.pre.m_iota();
        let gated: Vec<usize> = (0..packets.len())
            .filter(|&i| self.is_gated(packets[i].hk))
            .collect();
        let mut features = vec![0.0; gated.len() * 2 * m];
        let mut hks = Vec::with_capacity(gated.len() * 2);
        for (slot, &i) in gated.iter().enumerate() {
            for (k, p) in Self::standard_pair(&packets[i]).iter().enumerate() {
                let row = 2 * slot + k;
                self.pre
                    .transform_into(p, &mut features[row * m..(row + 1) * m]);
                hks.push(p.hk);
            }
        }
        let pred = if gated.is_empty() {
            Vec::new()
        } else {
            self.net.predict(&features, &hks)?
        };
        let mut values: Vec<f64> = packets.iter().map(|p| p.hk).collect();
        for (slot, &i) in gated.iter().enumerate() {
            let avg = 0.5 * (pred[2 * slot] + pred[2 * slot + 1]);
            values[i] = blend(packets[i].hk, avg, self.hk_low, self.hk_up);
        }
        Ok(BatchOutcome {
            values,
            network_rows: hks.len(),
            fallbacks: 0,
        })
    }

    pub fn correct_packet(&self, packet: &DataPacket) -> Result<f64, HybridError> {
        Ok(self.correct_packets(core::slice::from_ref(packet))?.values[0])
    }

    /// Corrected `hk` at one interface node.
    pub fn ml_curvature(&self, fields: &Fields<'_>, node: Node) -> Result<f64, HybridError> {
        Ok(self.ml_curvature_batch(fields, &[node])?.values[0])
    }

    /// Corrected `hk` at many nodes. Nodes whose packet cannot be built keep
    /// their numerical value and are counted as fallbacks.
    pub fn ml_curvature_batch(
        &self,
        fields: &Fields<'_>,
        nodes: &[Node],
    ) -> Result<BatchOutcome, HybridError> {
        self.pre.check_resolution(fields.h())?;
        let mut packets = Vec::with_capacity(nodes.len());
        let mut fallback = Vec::new();
        for (i, &node) in nodes.iter().enumerate() {
            match fields.packet(node) {
                Ok(p) => packets.push(p),
                Err(_) => {
                    let hk = fields.numerical_hk(node)?;
                    fallback.push(i);
                    packets.push(DataPacket {
                        phi: [0.0; 9],
                        normal: [[0.0; 2]; 9],
                        hk,
                    });
                }
            }
        }
        let mut out = if fallback.is_empty() {
            self.correct_packets(&packets)?
        } else {
            let keep: Vec<usize> = (0..nodes.len())
                .filter(|i| fallback.binary_search(i).is_err())
                .collect();
            let sub: Vec<DataPacket> = keep.iter().map(|&i| packets[i]).collect();
            let inner = self.correct_packets(&sub)?;
            let mut values: Vec<f64> = packets.iter().map(|p| p.hk).collect();
            for (&i, v) in keep.iter().zip(inner.values) {
                values[i] = v;
            }
            BatchOutcome {
                values,
                network_rows: inner.network_rows,
                fallbacks: 0,
            }
        };
        out.fallbacks = fallback.len();
        Ok(out)
    }
}
