//! Deterministic equivalents: the coupled scalar fixed point `(t, r)`, the
//! asymptotic log-det mean, and the mean per-stream SINR with its `1/M`
//! correction.
//!
//! With `T~ = T J` the fixed point is
//!
//! ```text
//! t = (1/M) Tr[ sqrt(rho) R (I + sqrt(rho) r R)^{-1} ]
//! r = (1/M) Tr[ sqrt(rho) T~ (I + sqrt(rho) t T~)^{-1} ]
//! ```
//!
//! Both traces only need spectra: `R` is Hermitian and `T J` is similar to the
//! Hermitian `T^{1/2} J T^{1/2}`.

use serde::{Deserialize, Serialize};

use crate::channel::{CorrelationPair, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, HermitianEigen};
use crate::mmse::Deformation;
use crate::taylor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on both equation defects.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub t: f64,
    pub r: f64,
    /// `max(|t - rhs_t|, |r - rhs_r|)` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub deformation: Option<Deformation>,
}

/// Spectral form of the two trace functions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel<'a> {
    pub sqrt_rho: f64,
    pub inv_m: f64,
    pub r_eigs: &'a [f64],
}

impl<'a> Kernel<'a> {
    pub fn new(pair: &'a CorrelationPair, config: &SystemConfig) -> Self {
        Self {
            sqrt_rho: config.rho().sqrt(),
            inv_m: 1.0 / config.m() as f64,
            r_eigs: &pair.r_eigen().values,
        }
    }

    /// `(1/M) sum sqrt(rho) l / (1 + sqrt(rho) x l)`.
    pub fn trace_fn<S: Scalar>(&self, eigs: &[f64], x: S) -> S {
        let s = self.sqrt_rho;
        let mut acc = S::constant(0.0);
        for &l in eigs {
            acc = acc + S::constant(s * l) / (x * (s * l) + 1.0);
        }
        acc * self.inv_m
    }

    /// Derivative of [`Self::trace_fn`] in `x`: `-(1/M) sum rho l^2 / (1 + sqrt(rho) x l)^2`.
    pub fn trace_fn_prime<S: Scalar>(&self, eigs: &[f64], x: S) -> S {
        let s = self.sqrt_rho;
        let mut acc = S::constant(0.0);
        for &l in eigs {
            let d = x * (s * l) + 1.0;
            acc = acc + S::constant(s * s * l * l) / (d * d);
        }
        -(acc * self.inv_m)
    }

    pub fn tau<S: Scalar>(&self, r: S) -> S {
        self.trace_fn(self.r_eigs, r)
    }

    pub fn tau_prime<S: Scalar>(&self, r: S) -> S {
        self.trace_fn_prime(self.r_eigs, r)
    }

    /// Smallest value of `1 + sqrt(rho) x l` over `eigs`.
    pub fn min_denominator(&self, eigs: &[f64], x: f64) -> f64 {
        eigs.iter().fold(f64::INFINITY, |m, &l| m.min(1.0 + self.sqrt_rho * x * l))
    }
}

/// Transmit side of the fixed point, possibly with one stream carrying
/// weight `w` in the normalized trace: `Psi(t) = (1 - w) psi_T(t) + w psi_{T J}(t)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TransmitSide<'a, S> {
    pub base: &'a [f64],
    pub deformed: Option<&'a [f64]>,
    pub weight: S,
}

impl<'a, S: Scalar> TransmitSide<'a, S> {
    fn psi(&self, k: &Kernel, t: S) -> S {
        match self.deformed {
            None => k.trace_fn(self.base, t),
            Some(d) => {
                k.trace_fn(self.base, t) - k.trace_fn(self.base, t) * self.weight + k.trace_fn(d, t) * self.weight
            }
        }
    }

    fn psi_prime(&self, k: &Kernel, t: S) -> S {
        match self.deformed {
            None => k.trace_fn_prime(self.base, t),
            Some(d) => {
                k.trace_fn_prime(self.base, t) - k.trace_fn_prime(self.base, t) * self.weight
                    + k.trace_fn_prime(d, t) * self.weight
            }
        }
    }

    fn min_denominator(&self, k: &Kernel, t: f64) -> f64 {
        let mut m = k.min_denominator(self.base, t);
        if let Some(d) = self.deformed {
            m = m.min(k.min_denominator(d, t));
        }
        m
    }
}

fn defect(k: &Kernel, side: &TransmitSide<f64>, t: f64, r: f64) -> f64 {
    (t - k.tau(r)).abs().max((r - side.psi(k, t)).abs())
}

fn singular(t: f64) -> Error {
    Error::StabilityViolation {
        margin: 0.0,
        context: format!("resolvent I + sqrt(rho) t T~ singular at t = {t:e}"),
    }
}

/// Value-level solve: damped alternating substitution started from
/// `t = r = sqrt(rho) min(1, N/M) / (1 + sqrt(rho))`, halving the damping
/// whenever the defect grows, then Newton on the reduced equation
/// `t = tau(Psi(t))` once inside the basin. Slow cases fall back to a
/// bracketed Newton-bisection on the same reduced equation.
pub(crate) fn solve_value(
    k: &Kernel,
    side: &TransmitSide<f64>,
    n_over_m: f64,
    opts: &SolverOptions,
) -> Result<(f64, f64, f64, usize)> {
    let s = k.sqrt_rho;
    let init = s * n_over_m.min(1.0) / (1.0 + s);
    let (mut t, mut r) = (init, init);
    let mut alpha = 1.0;
    let mut prev = defect(k, side, t, r);
    if !prev.is_finite() {
        return Err(singular(t));
    }
    // Newton is tried once the defect is small relative to the scale of (t, r).
    let newton_gate = |t: f64, r: f64| 1e-3 * (1.0 + t.abs() + r.abs());
    let budget = opts.max_iter.min(SUBSTITUTION_BUDGET);
    for it in 1..=budget {
        if prev <= opts.tol {
            let (t2, r2) = polish(k, side, t, r);
            let d2 = defect(k, side, t2, r2);
            return Ok(if d2 <= prev { (t2, r2, d2, it - 1) } else { (t, r, prev, it - 1) });
        }
        if prev < newton_gate(t, r) {
            let (tn, rn) = polish(k, side, t, r);
            let dn = defect(k, side, tn, rn);
            if dn.is_finite() && dn < prev {
                t = tn;
                r = rn;
                prev = dn;
                if prev <= opts.tol {
                    return Ok((t, r, prev, it));
                }
            }
        }
        let t_new = (1.0 - alpha) * t + alpha * k.tau(r);
        if side.min_denominator(k, t_new) <= 0.0 {
            return Err(singular(t_new));
        }
        let r_new = (1.0 - alpha) * r + alpha * side.psi(k, t_new);
        let d = defect(k, side, t_new, r_new);
        if !d.is_finite() {
            return Err(singular(t_new));
        }
        if d > prev {
            alpha = (alpha * 0.5).max(1.0 / 1024.0);
        }
        t = t_new;
        r = r_new;
        prev = d;
    }
    if prev <= opts.tol {
        return Ok((t, r, prev, budget));
    }
    if opts.max_iter <= budget {
        return Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: prev,
        });
    }
    bracketed(k, side, t, opts, budget)
}

/// Substitution iterations before switching to the bracketed solve.
const SUBSTITUTION_BUDGET: usize = 400;

/// Safeguarded Newton on the increasing map `f(t) = t - tau(Psi(t))`,
/// bisecting whenever a Newton step leaves the bracket.
fn bracketed(
    k: &Kernel,
    side: &TransmitSide<f64>,
    t_guess: f64,
    opts: &SolverOptions,
    used: usize,
) -> Result<(f64, f64, f64, usize)> {
    let f = |t: f64| {
        if side.min_denominator(k, t) <= 0.0 {
            return f64::NAN;
        }
        let psi = side.psi(k, t);
        if k.min_denominator(k.r_eigs, psi) <= 0.0 {
            return f64::NAN;
        }
        t - k.tau(psi)
    };
    let mut lo = 0.0;
    let mut hi = 2.0 * k.tau(0.0) + 1.0;
    let mut f_hi = f(hi);
    let mut shrink = 0;
    while !(f_hi > 0.0) {
        shrink += 1;
        if shrink > 200 || f_hi <= 0.0 {
            return Err(singular(hi));
        }
        hi = 0.5 * (lo + hi);
        f_hi = f(hi);
    }
    let mut t = if t_guess > lo && t_guess < hi { t_guess } else { 0.5 * (lo + hi) };
    let mut r = side.psi(k, t);
    let mut prev = defect(k, side, t, r);
    for it in used + 1..=opts.max_iter {
        let ft = f(t);
        if !ft.is_finite() {
            return Err(singular(t));
        }
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let psi = side.psi(k, t);
        let dg = 1.0 - k.tau_prime(psi) * side.psi_prime(k, t);
        let newton = t - ft / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - t).abs();
        t = next;
        r = side.psi(k, t);
        prev = defect(k, side, t, r);
        let floor = 64.0 * f64::EPSILON * (1.0 + t.abs() + r.abs());
        if prev <= opts.tol || (step <= 4.0 * f64::EPSILON * t.abs() && prev <= floor) {
            return Ok((t, r, prev, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: prev,
    })
}

/// A few Newton steps on `t - tau(Psi(t)) = 0`; returns `(t, Psi(t))`.
fn polish(k: &Kernel, side: &TransmitSide<f64>, mut t: f64, r: f64) -> (f64, f64) {
    let mut r_cur = r;
    for _ in 0..8 {
        let psi = side.psi(k, t);
        let g = t - k.tau(psi);
        let dg = 1.0 - k.tau_prime(psi) * side.psi_prime(k, t);
        if !(dg > 0.0) || !g.is_finite() {
            break;
        }
        let t_next = t - g / dg;
        if !(t_next > 0.0) || side.min_denominator(k, t_next) <= 0.0 {
            break;
        }
        let step = (t_next - t).abs();
        t = t_next;
        r_cur = side.psi(k, t);
        if step <= 1e-17 * t.abs() {
            break;
        }
    }
    (t, r_cur)
}

/// Lifts a converged value-level root to scalar type `S` by Newton steps in
/// `S` arithmetic. Each step fixes at least one more series coefficient.
pub(crate) fn lift<S: Scalar>(k: &Kernel, side: &TransmitSide<S>, t0: f64) -> (S, S) {
    let mut t = S::constant(t0);
    for _ in 0..4 {
        let psi = side.psi(k, t);
        let g = t - k.tau(psi);
        let dg = S::constant(1.0) - k.tau_prime(psi) * side.psi_prime(k, t);
        t = t - g / dg;
    }
    (t, side.psi(k, t))
}

/// Spectrum of `T^{1/2} J_k(x) T^{1/2} = T + (x - 1) s_k s_k^H`, `s_k` the
/// k-th column of `T^{1/2}`.
pub(crate) fn deformed_transmit(pair: &CorrelationPair, d: &Deformation) -> HermitianEigen {
    let s = pair.t_sqrt();
    let m = s.nrows();
    let col = s.column(d.k);
    let a = CMatrix::from_fn(m, m, |i, j| pair.t()[(i, j)] + col[i] * col[j].conj() * (d.x - 1.0));
    HermitianEigen::new(&crate::linalg::hermitian_part(&a))
}

pub fn solve_fixed_point(
    pair: &CorrelationPair,
    config: &SystemConfig,
    deformation: Option<Deformation>,
    opts: &SolverOptions,
) -> Result<FixedPointSolution> {
    pair.check_dims(config)?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidConfig("solver tolerance and iteration cap must be positive".into()));
    }
    let kernel = Kernel::new(pair, config);
    let deformed = match &deformation {
        Some(d) => {
            d.check(config.m())?;
            Some(deformed_transmit(pair, d))
        }
        None => None,
    };
    let side = TransmitSide {
        base: &pair.t_eigen().values,
        deformed: deformed.as_ref().map(|e| e.values.as_slice()),
        weight: 1.0,
    };
    let n_over_m = config.n() as f64 / config.m() as f64;
    let (t, r, residual, iterations) = solve_value(&kernel, &side, n_over_m, opts)?;
    Ok(FixedPointSolution {
        t,
        r,
        residual,
        iterations,
        deformation,
    })
}

/// `Tr ln(I + sqrt(rho) t T~) - M t r + Tr ln(I + sqrt(rho) r R)`, in nats.
/// With no deformation this is the large-system mean of `ln det(I + (rho/M) H H^H)`.
pub fn mean_logdet_asymptotic(
    pair: &CorrelationPair,
    config: &SystemConfig,
    deformation: Option<Deformation>,
    solution: &FixedPointSolution,
) -> Result<f64> {
    pair.check_dims(config)?;
    let s = config.rho().sqrt();
    let t_eigs = match &deformation {
        Some(d) => {
            d.check(config.m())?;
            deformed_transmit(pair, d).values
        }
        None => pair.t_eigen().values.clone(),
    };
    let (t, r) = (solution.t, solution.r);
    let tx: f64 = t_eigs.iter().map(|&l| (s * t * l).ln_1p()).sum();
    let rx: f64 = pair.r_eigen().values.iter().map(|&l| (s * r * l).ln_1p()).sum();
    Ok(tx - config.m() as f64 * t * r + rx)
}

/// Leading-order mean SINRs and their `1/M` corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSinrResult {
    pub gamma_bar: Vec<f64>,
    pub delta_gamma: Vec<f64>,
    pub eta: Vec<f64>,
    pub eta_prime: Vec<f64>,
    pub m_t2: f64,
    pub m_r2: f64,
    pub solution: FixedPointSolution,
}

impl MeanSinrResult {
    pub fn stability_margin(&self) -> f64 {
        1.0 - self.m_t2 * self.m_r2
    }
}

/// `gamma_bar_k = 1/eta_k - 1` with `eta_k = [(I + t sqrt(rho) T)^{-1}]_kk`, and
/// `delta_gamma_k = (1/M) (eta'_k^2 / eta_k^3) M_r2 / (1 - M_t2 M_r2)`, all at
/// the undeformed fixed point.
pub fn mean_sinr_asymptotic(
    pair: &CorrelationPair,
    config: &SystemConfig,
    opts: &SolverOptions,
) -> Result<MeanSinrResult> {
    let solution = solve_fixed_point(pair, config, None, opts)?;
    let kernel = Kernel::new(pair, config);
    let (t, r) = (solution.t, solution.r);
    let s = kernel.sqrt_rho;
    let te = pair.t_eigen();
    let m_t2 = -kernel.trace_fn_prime(&te.values, t);
    let m_r2 = -kernel.tau_prime(r);
    let margin = 1.0 - m_t2 * m_r2;
    if !(margin > 0.0) {
        return Err(Error::StabilityViolation {
            margin,
            context: format!("M = {}, N = {}, rho = {}", config.m(), config.n(), config.rho()),
        });
    }
    let m = config.m();
    let mut eta = vec![0.0; m];
    let mut eta_prime = vec![0.0; m];
    for (i, &l) in te.values.iter().enumerate() {
        let d = 1.0 + s * t * l;
        for k in 0..m {
            let w = te.vectors[(k, i)].norm_sqr();
            eta[k] += w / d;
            eta_prime[k] -= w * s * l / (d * d);
        }
    }
    let gamma_bar = eta.iter().map(|e| 1.0 / e - 1.0).collect();
    let delta_gamma = eta
        .iter()
        .zip(&eta_prime)
        .map(|(e, ep)| ep * ep / (e * e * e) * m_r2 / margin / m as f64)
        .collect();
    Ok(MeanSinrResult {
        gamma_bar,
        delta_gamma,
        eta,
        eta_prime,
        m_t2,
        m_r2,
        solution,
    })
}
