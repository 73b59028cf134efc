//! Exact finite-dimensional MMSE quantities for one channel realization.
//!
//! Stream indices are zero-based throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, inverse_diagonal_and_logdet, CMatrix, C64};

/// Per-stream output SINRs of the MMSE receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrVector(pub Vec<f64>);

impl SinrVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `J_k(x) = I + (x - 1) delta_k`: stream `k` scaled by `x`, the rest untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub k: usize,
    pub x: f64,
}

impl Deformation {
    pub fn new(k: usize, x: f64) -> Self {
        Self { k, x }
    }

    /// Stream `k` removed, `J_k(0)`.
    pub fn deflated(k: usize) -> Self {
        Self { k, x: 0.0 }
    }

    pub fn matrix(&self, m: usize) -> CMatrix {
        CMatrix::from_fn(m, m, |i, j| match (i == j, i == self.k) {
            (true, true) => C64::new(self.x, 0.0),
            (true, false) => C64::new(1.0, 0.0),
            _ => C64::new(0.0, 0.0),
        })
    }

    pub(crate) fn check(&self, m: usize) -> Result<()> {
        if self.k >= m {
            return Err(Error::IndexOutOfRange { index: self.k, streams: m });
        }
        if !self.x.is_finite() {
            return Err(Error::InvalidConfig(format!("deformation parameter must be finite, got {}", self.x)));
        }
        Ok(())
    }
}

/// Reusable buffers for evaluating many `N x M` channels of the same shape.
pub(crate) struct MmseWorkspace {
    n: usize,
    m: usize,
    gram: Vec<C64>,
    col: Vec<C64>,
    pub(crate) gammas: Vec<f64>,
}

impl MmseWorkspace {
    pub(crate) fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            gram: vec![C64::new(0.0, 0.0); m * m],
            col: vec![C64::new(0.0, 0.0); m],
            gammas: vec![0.0; m],
        }
    }

    /// Fills `self.gammas` for the row-major `N x M` channel `h` and returns
    /// `log det(I + (rho/M) H^H H)`.
    pub(crate) fn evaluate(&mut self, h: &[C64], rho: f64) -> f64 {
        let (n, m) = (self.n, self.m);
        let scale = rho / m as f64;
        // lower triangle of I + scale * H^H H
        for a in 0..m {
            for b in 0..=a {
                let mut s = C64::new(0.0, 0.0);
                for i in 0..n {
                    s += h[i * m + a] * h[i * m + b].conj();
                }
                let mut v = s * scale;
                if a == b {
                    v = C64::new(1.0 + v.re, 0.0);
                }
                self.gram[a * m + b] = v;
            }
        }
        let ok = cholesky_in_place(&mut self.gram, m);
        debug_assert!(ok, "I + (rho/M) H^H H is positive definite");
        let logdet = inverse_diagonal_and_logdet(&self.gram, m, &mut self.gammas, &mut self.col);
        for g in self.gammas.iter_mut() {
            // 1 / [A^{-1}]_kk - 1, clamped against round-off below zero
            *g = (1.0 / *g - 1.0).max(0.0);
        }
        logdet
    }
}

fn row_major(h: &CMatrix) -> Vec<C64> {
    let (n, m) = h.shape();
    (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| h[(i, j)]).collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidConfig(format!("SNR must be positive and finite, got {rho}")));
    }
    Ok(())
}

/// All `M` SINRs from one factorization: `gamma_k = 1 / [(I + (rho/M) H^H H)^{-1}]_kk - 1`.
pub fn sinr_exact(h: &CMatrix, rho: f64) -> Result<SinrVector> {
    check_rho(rho)?;
    let (n, m) = h.shape();
    let mut ws = MmseWorkspace::new(n, m);
    ws.evaluate(&row_major(h), rho);
    Ok(SinrVector(ws.gammas))
}

/// `gamma_k` as the trace `Tr{[I + (rho/M) H J_k(0) H^H]^{-1} (rho/M) H delta_k H^H}`,
/// i.e. the derivative at `x = 0` of `Tr log(I + (rho/M) H J_k(x) H^H)`.
pub fn sinr_trace_identity(h: &CMatrix, rho: f64, k: usize) -> Result<f64> {
    check_rho(rho)?;
    let (n, m) = h.shape();
    let deformation = Deformation::deflated(k);
    deformation.check(m)?;
    let scale = C64::new(rho / m as f64, 0.0);
    let hh = h.adjoint();
    let resolvent = (CMatrix::identity(n, n) + h * deformation.matrix(m) * &hh * scale)
        .cholesky()
        .expect("I + (rho/M) H J_k(0) H^H is positive definite")
        .inverse();
    let delta = Deformation::new(k, 1.0).matrix(m) - Deformation::deflated(k).matrix(m);
    let source = h * delta * &hh * scale;
    Ok((0..n).map(|i| (resolvent.row(i) * source.column(i))[(0, 0)].re).sum())
}

/// `sum_k ln(1 + gamma_k)`, in nats.
pub fn mutual_info_mmse(gammas: &SinrVector) -> f64 {
    gammas.0.iter().map(|g| g.ln_1p()).sum()
}

/// `ln det(I + (rho/M) H H^H)`, in nats, via Cholesky of the `M x M` Gram form.
pub fn mutual_info_optimal(h: &CMatrix, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let (n, m) = h.shape();
    let mut ws = MmseWorkspace::new(n, m);
    Ok(ws.evaluate(&row_major(h), rho))
}
