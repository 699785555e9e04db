//! Feature scaling: `h`-normalized level-set values, z-scores, then a
//! whitened projection onto the leading principal components.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::packet::{DataPacket, FEATURE_COUNT};

/// Number of level-set features divided by `h`.
const PHI_FEATURES: usize = 9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("need more than {1} rows to fit, got {0}")]
    TooFewRows(usize, usize),
    #[error("feature {0} has zero variance")]
    ZeroVariance(usize),
    #[error("cannot keep {0} components of {1} features")]
    InvalidComponents(usize, usize),
    #[error("state was fitted for h = {expected}, got h = {got}")]
    ResolutionMismatch { expected: f64, got: f64 },
    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Eigen-decomposition of a symmetric `n x n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the matching
/// unit eigenvectors as rows, each signed so its largest-magnitude entry is
/// positive.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut e: Vec<f64> = (0..n).map(|k| v[k * n + col]).collect();
            let lead = e
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                e.iter_mut().for_each(|x| *x = -*x);
            }
            e
        })
        .collect();
    (values, vectors)
}

/// Z-score plus whitened PCA over `p` generic features.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_stds: Vec<f64>,
}

/// Fitted whitener plus the full correlation spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenerFit {
    pub whitener: Whitener,
    pub eigenvalues: Vec<f64>,
}

impl Whitener {
    /// Fits on `rows` (row-major, `p` columns), keeping `m` components.
    /// Standard deviations are population ones; the correlation matrix uses
    /// the `n - 1` normalization.
    pub fn fit(rows: &[f64], p: usize, m: usize) -> Result<WhitenerFit, PreprocessError> {
        if m == 0 || m > p {
            return Err(PreprocessError::InvalidComponents(m, p));
        }
        let n = rows.len() / p;
        if n < 2 {
            return Err(PreprocessError::TooFewRows(n, 1));
        }
        let mut means = vec![0.0; p];
        for row in rows.chunks_exact(p) {
            means.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut stds = vec![0.0; p];
        for row in rows.chunks_exact(p) {
            for j in 0..p {
                let d = row[j] - means[j];
                stds[j] += d * d;
            }
        }
        for (j, s) in stds.iter_mut().enumerate() {
            *s = (*s / n as f64).sqrt();
            if !(*s > 1e-12 * means[j].abs().max(1e-300)) {
                return Err(PreprocessError::ZeroVariance(j));
            }
        }
        let mut corr = vec![0.0; p * p];
        let mut z = vec![0.0; p];
        for row in rows.chunks_exact(p) {
            for j in 0..p {
                z[j] = (row[j] - means[j]) / stds[j];
            }
            for i in 0..p {
                for j in i..p {
                    corr[i * p + j] += z[i] * z[j];
                }
            }
        }
        for i in 0..p {
            for j in i..p {
                corr[i * p + j] /= (n - 1) as f64;
                corr[j * p + i] = corr[i * p + j];
            }
        }
        let (eigenvalues, mut vectors) = symmetric_eigen(&corr, p);
        vectors.truncate(m);
        let explained_stds = eigenvalues[..m].iter().map(|l| l.max(0.0).sqrt()).collect();
        Ok(WhitenerFit {
            whitener: Whitener {
                means,
                stds,
                components: vectors,
                explained_stds,
            },
            eigenvalues,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.means.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// Standardized, projected and whitened `x` written into `out`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let p = self.input_dim();
        debug_assert_eq!(x.len(), p);
        let mut z = [0.0; FEATURE_COUNT];
        let mut buf;
        let z: &mut [f64] = if p <= FEATURE_COUNT {
            &mut z[..p]
        } else {
            buf = vec![0.0; p];
            &mut buf
        };
        for j in 0..p {
            z[j] = (x[j] - self.means[j]) / self.stds[j];
        }
        for (k, (row, s)) in self.components.iter().zip(&self.explained_stds).enumerate() {
            let dot: f64 = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            out[k] = dot / s;
        }
    }
}

/// Scaling state for 28-feature data packets at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessorState {
    pub h: f64,
    pub whitener: Whitener,
}

/// Raw feature row with the level-set values divided by `h`.
pub fn normalized_features(packet: &DataPacket, h: f64) -> [f64; FEATURE_COUNT] {
    let mut f = packet.features();
    f[..PHI_FEATURES].iter_mut().for_each(|v| *v /= h);
    f
}

impl PreprocessorState {
    /// Fits on training packets; needs more than `28 * 10` of them.
    pub fn fit(
        packets: &[DataPacket],
        h: f64,
        m_iota: usize,
    ) -> Result<(Self, Vec<f64>), PreprocessError> {
        let min = FEATURE_COUNT * 10;
        if packets.len() <= min {
            return Err(PreprocessError::TooFewRows(packets.len(), min));
        }
        let rows: Vec<f64> = packets
            .iter()
            .flat_map(|p| normalized_features(p, h))
            .collect();
        let fit = Whitener::fit(&rows, FEATURE_COUNT, m_iota)?;
        Ok((
            Self {
                h,
                whitener: fit.whitener,
            },
            fit.eigenvalues,
        ))
    }

    pub fn m_iota(&self) -> usize {
        self.whitener.output_dim()
    }

    pub fn check_resolution(&self, h: f64) -> Result<(), PreprocessError> {
        if (self.h - h).abs() > 1e-12 * h {
            return Err(PreprocessError::ResolutionMismatch {
                expected: self.h,
                got: h,
            });
        }
        Ok(())
    }

    pub fn transform_into(&self, packet: &DataPacket, out: &mut [f64]) {
        self.whitener
            .apply(&normalized_features(packet, self.h), out);
    }

    pub fn transform(&self, packet: &DataPacket) -> Vec<f64> {
        let mut out = vec![0.0; self.m_iota()];
        self.transform_into(packet, &mut out);
        out
    }

    /// Row-major `len x m_iota` matrix of transformed packets.
    pub fn transform_all(&self, packets: &[DataPacket]) -> Vec<f64> {
        let m = self.m_iota();
        let mut out = vec![0.0; packets.len() * m];
        for (p, row) in packets.iter().zip(out.chunks_exact_mut(m)) {
            self.transform_into(p, row);
        }
        out
    }
}

/// Default number of kept components for a refinement level.
pub const fn default_m_iota(eta: u32) -> usize {
    if eta == 6 {
        20
    } else {
        18
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_packets(n: usize, seed: u64) -> Vec<DataPacket> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let base: f64 = rng.gen_range(-0.01..0.01);
                let mut p = DataPacket {
                    phi: [0.0; 9],
                    normal: [[0.0; 2]; 9],
                    hk: rng.gen_range(-0.6..-0.004),
                };
                for k in 0..9 {
                    p.phi[k] = base + rng.gen_range(-0.02..0.02);
                    let a: f64 = rng.gen_range(0.0..1.5) + 0.1 * (k as f64) * base;
                    p.normal[k] = [a.cos(), a.sin()];
                }
                p
            })
            .collect()
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let (vals, vecs) = symmetric_eigen(&a, 3);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vals[k] * vecs[k][i] * vecs[k][j]).sum();
                assert!((r - a[i * 3 + j]).abs() < 1e-12);
                let d: f64 = (0..3).map(|k| vecs[i][k] * vecs[j][k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_one_line() {
        let rows: Vec<f64> = (0..50).flat_map(|k| [k as f64, k as f64]).collect();
        let fit = Whitener::fit(&rows, 2, 2).unwrap();
        let c = &fit.whitener.components[0];
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - r).abs() < 1e-12 && (c[1] - r).abs() < 1e-12);
        assert!(fit.whitener.explained_stds[1] < 1e-6);
    }

    #[test]
    fn constant_feature_is_rejected() {
        let rows: Vec<f64> = (0..50).flat_map(|k| [k as f64, 2.0]).collect();
        assert_eq!(
            Whitener::fit(&rows, 2, 1).unwrap_err(),
            PreprocessError::ZeroVariance(1)
        );
        let packets = vec![random_packets(1, 0)[0]; 400];
        assert!(matches!(
            PreprocessorState::fit(&packets, 1.0 / 64.0, 20),
            Err(PreprocessError::ZeroVariance(_))
        ));
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let packets = random_packets(5000, 1);
        let h = 1.0 / 64.0;
        let (state, _) = PreprocessorState::fit(&packets, h, 28).unwrap();
        for row in &state.whitener.components {
            let n: f64 = row.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-8);
        }
        let m = 28;
        let out = state.transform_all(&packets);
        let n = packets.len() as f64;
        for i in 0..m {
            for j in 0..m {
                let c: f64 = out.chunks_exact(m).map(|r| r[i] * r[j]).sum::<f64>() / (n - 1.0);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c - expect).abs() < 1e-6, "{i} {j} {c}");
            }
        }
    }

    #[test]
    fn mean_packet_maps_to_zero_and_transform_is_affine() {
        let packets = random_packets(2000, 2);
        let h = 1.0 / 128.0;
        let (state, _) = PreprocessorState::fit(&packets, h, 18).unwrap();
        let mut mean = state.whitener.means.clone();
        mean[..9].iter_mut().for_each(|v| *v *= h);
        let mp = DataPacket::from_features(&mean.try_into().unwrap());
        assert!(state.transform(&mp).iter().all(|v| v.abs() < 1e-9));

        let (a, b) = (packets[3].features(), packets[7].features());
        let alpha = 0.3;
        let mix: [f64; 28] = core::array::from_fn(|k| alpha * a[k] + (1.0 - alpha) * b[k]);
        let ta = state.transform(&packets[3]);
        let tb = state.transform(&packets[7]);
        let tm = state.transform(&DataPacket::from_features(&mix));
        for k in 0..18 {
            assert!((tm[k] - (alpha * ta[k] + (1.0 - alpha) * tb[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn discarded_energy_matches_spectrum() {
        let packets = random_packets(3000, 3);
        let h = 1.0 / 64.0;
        let (state, eig) = PreprocessorState::fit(&packets, h, 20).unwrap();
        let w = &state.whitener;
        let (mut lost, mut total) = (0.0, 0.0);
        for p in &packets {
            let x = normalized_features(p, h);
            let z: Vec<f64> = (0..28).map(|j| (x[j] - w.means[j]) / w.stds[j]).collect();
            let mut rec = [0.0; 28];
            for c in &w.components {
                let d: f64 = c.iter().zip(&z).map(|(a, b)| a * b).sum();
                rec.iter_mut().zip(c).for_each(|(r, ck)| *r += d * ck);
            }
            lost += z
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            total += z.iter().map(|a| a * a).sum::<f64>();
        }
        let expected = 1.0 - eig[..20].iter().sum::<f64>() / eig.iter().sum::<f64>();
        assert!((lost / total - expected).abs() < 1e-9);
    }

    #[test]
    fn resolution_guard_and_sizes() {
        let packets = random_packets(300, 4);
        let (state, _) = PreprocessorState::fit(&packets, 0.5, 18).unwrap();
        assert!(state.check_resolution(0.5).is_ok());
        assert!(state.check_resolution(0.25).is_err());
        assert!(matches!(
            PreprocessorState::fit(&packets[..280], 0.5, 18),
            Err(PreprocessError::TooFewRows(280, 280))
        ));
        assert_eq!(default_m_iota(6), 20);
        assert_eq!(default_m_iota(7), 18);
    }
}
