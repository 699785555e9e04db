//! Per-node feature packets and their symmetry transforms.

use crate::field::{
    interpolate_bilinear, project_to_interface, FieldError, Node, Point, ScalarField, VectorField,
};

pub const FEATURE_COUNT: usize = 28;

/// Flat feature order shared by CSV files, the scaler and PCA.
#[rustfmt::skip]
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "phi_mm", "phi_0m", "phi_pm", "phi_m0", "phi_00", "phi_p0", "phi_mp", "phi_0p", "phi_pp",
    "nx_mm", "nx_0m", "nx_pm", "nx_m0", "nx_00", "nx_p0", "nx_mp", "nx_0p", "nx_pp",
    "ny_mm", "ny_0m", "ny_pm", "ny_m0", "ny_00", "ny_p0", "ny_mp", "ny_0p", "ny_pp",
    "hk",
];

const CENTER: usize = 4;

/// Slot of stencil offset `(i, j)`, both in `-1..=1`.
const fn slot(i: i64, j: i64) -> usize {
    ((j + 1) * 3 + (i + 1)) as usize
}

const fn offset(k: usize) -> (i64, i64) {
    ((k % 3) as i64 - 1, (k / 3) as i64 - 1)
}

/// Level-set values and unit normals on the 3x3 stencil of an interface node,
/// plus the dimensionless curvature interpolated at the projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPacket {
    pub phi: [f64; 9],
    pub normal: [Point; 9],
    pub hk: f64,
}

impl DataPacket {
    pub fn features(&self) -> [f64; FEATURE_COUNT] {
        let mut f = [0.0; FEATURE_COUNT];
        for k in 0..9 {
            f[k] = self.phi[k];
            f[9 + k] = self.normal[k][0];
            f[18 + k] = self.normal[k][1];
        }
        f[27] = self.hk;
        f
    }

    pub fn from_features(f: &[f64; FEATURE_COUNT]) -> Self {
        let mut phi = [0.0; 9];
        let mut normal = [[0.0; 2]; 9];
        for k in 0..9 {
            phi[k] = f[k];
            normal[k] = [f[9 + k], f[18 + k]];
        }
        Self {
            phi,
            normal,
            hk: f[27],
        }
    }

    pub fn center_normal(&self) -> Point {
        self.normal[CENTER]
    }

    /// Whether the center normal's angle lies in `[0, pi/2]`.
    pub fn is_oriented(&self) -> bool {
        let [nx, ny] = self.center_normal();
        nx >= 0.0 && ny >= 0.0
    }

    /// Flips the sign of every level-set value, normal and the curvature.
    pub fn negate(&self) -> Self {
        Self {
            phi: self.phi.map(|v| -v),
            normal: self.normal.map(|[x, y]| [-x, -y]),
            hk: -self.hk,
        }
    }

    /// Rotates the stencil by `quarters * pi/2` counterclockwise.
    pub fn rotate(&self, quarters: i32) -> Self {
        let turns = quarters.rem_euclid(4);
        let mut out = *self;
        for k in 0..9 {
            let (mut i, mut j) = offset(k);
            let mut n = self.normal[k];
            for _ in 0..turns {
                (i, j) = (-j, i);
                n = [-n[1], n[0]];
            }
            let dst = slot(i, j);
            out.phi[dst] = self.phi[k];
            out.normal[dst] = n;
        }
        out
    }

    /// Rotates by the first of `0, +pi/2, -pi/2, pi` that brings the center
    /// normal's angle into `[0, pi/2]`.
    pub fn reorient(&self) -> Self {
        for q in [0, 1, -1, 2] {
            let rotated = self.rotate(q);
            if rotated.is_oriented() {
                return rotated;
            }
        }
        unreachable!("one quarter rotation always lands in the first quadrant")
    }

    /// Mirror about the diagonal through the node: transposes the stencil and
    /// swaps normal components.
    pub fn reflect(&self) -> Self {
        let mut out = *self;
        for k in 0..9 {
            let (i, j) = offset(k);
            let src = slot(j, i);
            out.phi[k] = self.phi[src];
            out.normal[k] = [self.normal[src][1], self.normal[src][0]];
        }
        out
    }
}

/// Gathers the packet of `node` from a level set, its normals and its nodal
/// curvature. The curvature feature is `h` times the bilinear interpolation of
/// nodal curvature at the node's projection onto the interface.
pub fn collect(
    phi: &ScalarField,
    normals: &VectorField,
    curvature: &ScalarField,
    node: Node,
) -> Result<DataPacket, FieldError> {
    let values = phi.stencil(node)?;
    let normal = normals.stencil(node)?;
    for k in 0..9 {
        let (i, j) = offset(k);
        let n = node.offset(i, j);
        if normals.is_degenerate(n) {
            return Err(FieldError::DegenerateNormal(n.i, n.j));
        }
    }
    let h = phi.grid().h();
    let target = project_to_interface(phi.position(node), values[CENTER], normal[CENTER])?;
    let hk = h * interpolate_bilinear(curvature, target)?;
    Ok(DataPacket {
        phi: values,
        normal,
        hk,
    })
}

/// A packet in standard form with its exact dimensionless curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub packet: DataPacket,
    pub target: f64,
}

impl Sample {
    /// Brings `(packet, target)` to the negative spectrum and reorients it.
    pub fn standardize(packet: DataPacket, target: f64) -> Self {
        let (packet, target) = if target > 0.0 {
            (packet.negate(), -target)
        } else {
            (packet, target)
        };
        Self {
            packet: packet.reorient(),
            target,
        }
    }

    /// The diagonal mirror; stays in standard form.
    pub fn reflected(&self) -> Self {
        Self {
            packet: self.packet.reflect(),
            target: self.target,
        }
    }
}
