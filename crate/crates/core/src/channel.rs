//! Kronecker-correlated Rayleigh channel ensemble.
//!
//! A realization is `H = R^{1/2} G T^{1/2}` with `G` an `N x M` matrix of
//! i.i.d. unit-variance circularly-symmetric complex Gaussians, so that
//! `E[H_ia conj(H_jb)] = R_ij T_ab`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, HermitianEigen, C64};

/// Antenna counts and SNR of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    m: usize,
    n: usize,
    rho: f64,
}

impl SystemConfig {
    /// `m` transmit streams, `n >= m` receive antennas, linear SNR `rho > 0`.
    pub fn new(m: usize, n: usize, rho: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if n < m {
            return Err(Error::InvalidConfig(format!("N = {n} must be >= M = {m} (load factor <= 1)")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("SNR must be positive and finite, got {rho}")));
        }
        Ok(Self { m, n, rho })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn beta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.m, self.n, rho)
    }
}

/// Receive (`N x N`) and transmit (`M x M`) correlation matrices.
///
/// Square roots and spectra are computed once at construction.
#[derive(Debug, Clone)]
pub struct CorrelationPair {
    r: CMatrix,
    t: CMatrix,
    r_sqrt: CMatrix,
    t_sqrt: CMatrix,
    r_eig: HermitianEigen,
    t_eig: HermitianEigen,
    r_is_identity: bool,
    t_is_identity: bool,
}

impl CorrelationPair {
    pub fn new(r: CMatrix, t: CMatrix) -> Result<Self> {
        let r_eig = linalg::validate_hermitian_psd(&r)?;
        let t_eig = linalg::validate_hermitian_psd(&t)?;
        let r = linalg::hermitian_part(&r);
        let t = linalg::hermitian_part(&t);
        let r_sqrt = r_eig.apply(|v| v.max(0.0).sqrt());
        let t_sqrt = t_eig.apply(|v| v.max(0.0).sqrt());
        let r_is_identity = r == linalg::identity(r.nrows());
        let t_is_identity = t == linalg::identity(t.nrows());
        Ok(Self {
            r,
            t,
            r_sqrt,
            t_sqrt,
            r_eig,
            t_eig,
            r_is_identity,
            t_is_identity,
        })
    }

    pub fn identity(config: &SystemConfig) -> Self {
        Self::new(linalg::identity(config.n()), linalg::identity(config.m()))
            .expect("identity matrices are valid correlations")
    }

    /// Exponential (Toeplitz) correlation on both sides.
    pub fn exponential(config: &SystemConfig, zeta_r: f64, zeta_t: f64) -> Result<Self> {
        Self::new(
            build_exponential_correlation(config.n(), zeta_r)?,
            build_exponential_correlation(config.m(), zeta_t)?,
        )
    }

    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    pub fn t(&self) -> &CMatrix {
        &self.t
    }

    pub fn r_sqrt(&self) -> &CMatrix {
        &self.r_sqrt
    }

    pub fn t_sqrt(&self) -> &CMatrix {
        &self.t_sqrt
    }

    pub fn r_eigen(&self) -> &HermitianEigen {
        &self.r_eig
    }

    pub fn t_eigen(&self) -> &HermitianEigen {
        &self.t_eig
    }

    pub fn is_identity(&self) -> bool {
        self.r_is_identity && self.t_is_identity
    }

    pub fn trace_r(&self) -> f64 {
        linalg::real_trace(&self.r)
    }

    pub fn trace_t(&self) -> f64 {
        linalg::real_trace(&self.t)
    }

    pub fn check_dims(&self, config: &SystemConfig) -> Result<()> {
        if self.r.nrows() != config.n() || self.t.nrows() != config.m() {
            return Err(Error::DimensionMismatch(format!(
                "correlations are R {0}x{0}, T {1}x{1}; scenario has N = {2}, M = {3}",
                self.r.nrows(),
                self.t.nrows(),
                config.n(),
                config.m()
            )));
        }
        Ok(())
    }
}

/// Where a channel realization came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPath {
    pub master_seed: u64,
    pub trial_index: u64,
}

#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub h: CMatrix,
    pub seed_path: SeedPath,
}

/// Toeplitz matrix with entries `zeta^|i-j|`.
pub fn build_exponential_correlation(n: usize, zeta: f64) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::InvalidConfig("correlation dimension must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::InvalidConfig(format!("correlation coefficient must lie in [0, 1), got {zeta}")));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        C64::new(zeta.powi((i as i32 - j as i32).abs()), 0.0)
    }))
}

/// Hermitian PSD square root by eigendecomposition; eigenvalues in
/// `[-1e-10, 0)` are clipped to zero.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let eig = linalg::validate_hermitian_psd(a)?;
    Ok(eig.apply(|v| v.max(0.0).sqrt()))
}

/// Generator for one trial. Stream selection makes the draw a function of
/// `(master_seed, trial_index)` alone.
pub(crate) fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Fills `h` (row-major `N x M`) with one channel realization.
/// `scratch` must hold `N * M` entries and is clobbered.
pub(crate) fn draw_channel_into(
    pair: &CorrelationPair,
    master_seed: u64,
    trial_index: u64,
    h: &mut [C64],
    scratch: &mut [C64],
) {
    let n = pair.r.nrows();
    let m = pair.t.nrows();
    debug_assert_eq!(h.len(), n * m);
    let mut rng = trial_rng(master_seed, trial_index);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for z in h.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z = C64::new(re * scale, im * scale);
    }
    if !pair.r_is_identity {
        // H <- R^{1/2} H
        for i in 0..n {
            for a in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..n {
                    s += pair.r_sqrt[(i, j)] * h[j * m + a];
                }
                scratch[i * m + a] = s;
            }
        }
        h.copy_from_slice(scratch);
    }
    if !pair.t_is_identity {
        // H <- H T^{1/2}
        for i in 0..n {
            for b in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for a in 0..m {
                    s += h[i * m + a] * pair.t_sqrt[(a, b)];
                }
                scratch[i * m + b] = s;
            }
        }
        h.copy_from_slice(scratch);
    }
}

pub fn sample_channel(
    pair: &CorrelationPair,
    config: &SystemConfig,
    master_seed: u64,
    trial_index: u64,
) -> Result<ChannelSample> {
    pair.check_dims(config)?;
    let (n, m) = (config.n(), config.m());
    let mut h = vec![C64::new(0.0, 0.0); n * m];
    let mut scratch = h.clone();
    draw_channel_into(pair, master_seed, trial_index, &mut h, &mut scratch);
    Ok(ChannelSample {
        h: CMatrix::from_row_slice(n, m, &h),
        seed_path: SeedPath {
            master_seed,
            trial_index,
        },
    })
}

/// On-disk form of a correlation matrix: `{"n": .., "entries": [[[re, im], ..], ..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDocument {
    pub n: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixDocument {
    pub fn from_matrix(a: &CMatrix) -> Self {
        let n = a.nrows();
        Self {
            n,
            entries: (0..n)
                .map(|i| (0..n).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.entries.len() != self.n || self.entries.iter().any(|row| row.len() != self.n) {
            return Err(Error::DimensionMismatch(format!(
                "matrix document declares n = {} but entries are not {0}x{0}",
                self.n
            )));
        }
        Ok(CMatrix::from_fn(self.n, self.n, |i, j| {
            let [re, im] = self.entries[i][j];
            C64::new(re, im)
        }))
    }
}

pub fn read_matrix_json(path: impl AsRef<Path>) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path)?;
    let doc: MatrixDocument = serde_json::from_str(&text)?;
    doc.to_matrix()
}

pub fn write_matrix_json(path: impl AsRef<Path>, a: &CMatrix) -> Result<()> {
    let text = serde_json::to_string(&MatrixDocument::from_matrix(a))?;
    std::fs::write(path, text)?;
    Ok(())
}
