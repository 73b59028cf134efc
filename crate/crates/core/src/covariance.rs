//! Covariance of the per-stream SINRs from the joint cumulant of two deformed
//! log-dets,
//!
//! ```text
//! F(x_k, x_l) = -ln[1 - M_t(k, l) M_r(k, l)]
//! M_t = (rho/M) Tr[ J_k T (I + t_k sqrt(rho) J_k T)^{-1} J_l T (I + t_l sqrt(rho) J_l T)^{-1} ]
//! M_r = (rho/M) Tr[ R (I + r_k sqrt(rho) R)^{-1} R (I + r_l sqrt(rho) R)^{-1} ]
//! ```
//!
//! where `(t_k, r_k)` solves the fixed point for `J_k(x_k)`. The SINR covariance
//! is the mixed derivative `d^2 F / dx_k dx_l` at `x_k = x_l = 0`, taken by a
//! central four-point stencil that re-solves the fixed point at every node.
//!
//! Two readings of that derivative are offered ([`SigmaOrder`]): the literal
//! finite-`M` value, and the consistent large-`M` expansion (diagonal to order
//! `1/M`, off-diagonal to order `1/M^2`) obtained by carrying the deformed
//! stream's trace weight as a series variable (see [`crate::taylor`]).

use serde::{Deserialize, Serialize};

use crate::channel::{CorrelationPair, SystemConfig};
use crate::error::{Error, Result};
use crate::fixed_point::{deformed_transmit, lift, solve_value, Kernel, SolverOptions, TransmitSide};
use crate::linalg::{self, HermitianEigen};
use crate::mmse::Deformation;
use crate::par::Workers;
use crate::taylor::{Scalar, Taylor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaOrder {
    /// Diagonal `O(1/M)` and off-diagonal `O(1/M^2)` coefficients; reduces to the
    /// i.i.d. closed forms exactly.
    #[default]
    Leading,
    /// The stencil evaluated on the given finite system.
    FiniteM,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOptions {
    pub step: f64,
    pub order: SigmaOrder,
    /// One Richardson level (`h` and `h/2`).
    pub richardson: bool,
    pub solver: SolverOptions,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            order: SigmaOrder::Leading,
            richardson: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrCovariance {
    /// Row-major symmetric `M x M` matrix.
    pub sigma: Vec<Vec<f64>>,
    /// Step actually used (the requested one, capped to keep the stencil
    /// inside the region where every resolvent exists).
    pub step: f64,
    pub method: String,
    pub order: SigmaOrder,
    pub richardson: bool,
}

impl SinrCovariance {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma[i][j]
    }

    pub fn diag_mean(&self) -> f64 {
        let m = self.dim();
        (0..m).map(|i| self.sigma[i][i]).sum::<f64>() / m as f64
    }

    /// Zero for a single stream.
    pub fn offdiag_mean(&self) -> f64 {
        let m = self.dim();
        if m < 2 {
            return 0.0;
        }
        let total: f64 = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| self.sigma[i][j]).sum();
        total / (m * (m - 1)) as f64
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.sigma[i][i]).sum()
    }
}

/// Closed forms for `R = I`, `T = I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IidClosedForms {
    /// Mean SINR.
    pub g: f64,
    /// `M * Var(gamma_k)`.
    pub v_d: f64,
    /// `M^2 * Cov(gamma_k, gamma_l)`, `k != l`.
    pub v_od: f64,
}

pub fn iid_closed_forms(config: &SystemConfig) -> IidClosedForms {
    let beta = config.beta();
    let rho = config.rho();
    let a = rho * (1.0 - beta) - beta;
    let g = (a + (a * a + 4.0 * rho * beta).sqrt()) / (2.0 * beta);
    let x = g / (1.0 + g);
    let q = 1.0 - beta * x * x;
    let v_d = beta * g * g / q;
    let v_od = beta * beta * g.powi(3) * (g * q - 2.0) / ((1.0 + g).powi(2) * q.powi(3))
        + beta.powi(3) * g.powi(4) / ((1.0 + g).powi(4) * q.powi(4));
    IidClosedForms { g, v_d, v_od }
}

/// One stencil node: a deformation with its transmit spectrum and fixed point.
struct Node<S> {
    eig: HermitianEigen,
    t: S,
    r: S,
}

struct Setup<'a> {
    pair: &'a CorrelationPair,
    config: &'a SystemConfig,
    kernel: Kernel<'a>,
    solver: SolverOptions,
}

impl<'a> Setup<'a> {
    fn new(pair: &'a CorrelationPair, config: &'a SystemConfig, solver: SolverOptions) -> Result<Self> {
        pair.check_dims(config)?;
        Ok(Self {
            pair,
            config,
            kernel: Kernel::new(pair, config),
            solver,
        })
    }

    fn n_over_m(&self) -> f64 {
        self.config.n() as f64 / self.config.m() as f64
    }

    fn base_side<S: Scalar>(&self, deformed: Option<&'a [f64]>, weight: S) -> TransmitSide<'a, S> {
        TransmitSide {
            base: &self.pair.t_eigen().values,
            deformed,
            weight,
        }
    }

    /// Fixed point on the finite system deformed by `d`.
    fn finite_node(&self, d: Deformation) -> Result<Node<f64>> {
        let eig = deformed_transmit(self.pair, &d);
        let (t, r) = {
            let side = TransmitSide {
                base: &self.pair.t_eigen().values,
                deformed: Some(eig.values.as_slice()),
                weight: 1.0,
            };
            let (t, _, _, _) = solve_value(&self.kernel, &side, self.n_over_m(), &self.solver)?;
            lift(&self.kernel, &side, t)
        };
        Ok(Node { eig, t, r })
    }

    /// Fixed point as a series in the deformed stream's weight, expanded
    /// around the undeformed root `t0`.
    fn series_node(&self, d: Deformation, t0: f64) -> Node<Taylor2> {
        let eig = deformed_transmit(self.pair, &d);
        let (t, r) = {
            let side = TransmitSide {
                base: &self.pair.t_eigen().values,
                deformed: Some(eig.values.as_slice()),
                weight: Taylor2::variable(),
            };
            lift(&self.kernel, &side, t0)
        };
        Node { eig, t, r }
    }

    fn undeformed_t(&self) -> Result<f64> {
        let side = self.base_side::<f64>(None, 1.0);
        Ok(solve_value(&self.kernel, &side, self.n_over_m(), &self.solver)?.0)
    }

    /// `F = -ln(1 - M_t M_r)` between two nodes. The undeformed part of the
    /// transmit trace carries weight `1 - w`, the deformed pair weight `w`.
    fn kernel_value<S: Scalar>(&self, a: &Node<S>, b: &Node<S>, w: S) -> Result<S> {
        let s = self.kernel.sqrt_rho;
        let rho = s * s;
        let inv_m = self.kernel.inv_m;
        let f = |l: f64, t: S| S::constant(l) / (t * (s * l) + 1.0);

        let base = &self.pair.t_eigen().values;
        let mut undeformed = S::constant(0.0);
        for &l in base {
            undeformed = undeformed + f(l, a.t) * f(l, b.t);
        }
        let fa: Vec<S> = a.eig.values.iter().map(|&l| f(l, a.t)).collect();
        let fb: Vec<S> = b.eig.values.iter().map(|&l| f(l, b.t)).collect();
        let overlap = a.eig.vectors.adjoint() * &b.eig.vectors;
        let mut cross = S::constant(0.0);
        for (i, fai) in fa.iter().enumerate() {
            let mut row = S::constant(0.0);
            for (j, fbj) in fb.iter().enumerate() {
                row = row + *fbj * overlap[(i, j)].norm_sqr();
            }
            cross = cross + *fai * row;
        }
        let m_t = (undeformed - undeformed * w + cross * w) * (rho * inv_m);

        let mut m_r = S::constant(0.0);
        for &l in &self.pair.r_eigen().values {
            m_r = m_r + S::constant(l * l) / ((a.r * (s * l) + 1.0) * (b.r * (s * l) + 1.0));
        }
        let m_r = m_r * (rho * inv_m);

        let one_minus = -(m_t * m_r) + 1.0;
        let margin = one_minus.value();
        if !(margin > 0.0) || !margin.is_finite() {
            return Err(Error::StabilityViolation {
                margin,
                context: format!("M = {}, N = {}, rho = {}", self.config.m(), self.config.n(), self.config.rho()),
            });
        }
        Ok(-one_minus.ln())
    }
}

/// `E_c[A_k; A_l] = -ln[1 - M_t M_r]` with each slot at its own deformation
/// `J_k(x_k)`, `J_l(x_l)`, on the finite system. At `k = l`, `x = 1` this is
/// the large-system variance of `ln det(I + (rho/M) H H^H)`.
pub fn joint_cumulant_a(
    pair: &CorrelationPair,
    config: &SystemConfig,
    k: usize,
    l: usize,
    x_k: f64,
    x_l: f64,
    solver: &SolverOptions,
) -> Result<f64> {
    let setup = Setup::new(pair, config, *solver)?;
    let dk = Deformation::new(k, x_k);
    let dl = Deformation::new(l, x_l);
    dk.check(config.m())?;
    dl.check(config.m())?;
    let a = setup.finite_node(dk)?;
    let b = setup.finite_node(dl)?;
    setup.kernel_value(&a, &b, 1.0)
}

/// Largest step keeping `1 + sqrt(rho) t mu > 0` comfortably along the
/// stencil: poles of the kernel sit at distance ~ `1 / (sqrt(rho) t lambda_max(T))`.
fn step_limit(setup: &Setup, t0: f64) -> f64 {
    let lmax = setup.pair.t_eigen().max().max(f64::MIN_POSITIVE);
    0.02 / (setup.kernel.sqrt_rho * t0 * lmax)
}

const OFFSETS: [f64; 4] = [1.0, -1.0, 0.5, -0.5];

/// Mixed central difference of `F` at `(0, 0)` for step `h = scale * base`.
fn mixed_difference<S: Scalar>(f: impl Fn(usize, usize) -> Result<S>, h: f64, fine: bool) -> Result<S> {
    // node index 0: +h, 1: -h, 2: +h/2, 3: -h/2
    let (p, n, hh) = if fine { (2, 3, 0.5 * h) } else { (0, 1, h) };
    let d = f(p, p)? - f(p, n)? - f(n, p)? + f(n, n)?;
    Ok(d * (1.0 / (4.0 * hh * hh)))
}

fn combine<S: Scalar>(coarse: S, fine: S, richardson: bool) -> S {
    if richardson {
        (fine * 4.0 - coarse) * (1.0 / 3.0)
    } else {
        coarse
    }
}

/// SINR covariance matrix by mixed central differences of the joint-cumulant kernel.
pub fn sinr_covariance(
    pair: &CorrelationPair,
    config: &SystemConfig,
    opts: &CovarianceOptions,
    workers: &Workers,
) -> Result<SinrCovariance> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {}", opts.step)));
    }
    let setup = Setup::new(pair, config, opts.solver)?;
    let m = config.m();
    let t0 = setup.undeformed_t()?;
    let limit = step_limit(&setup, t0);
    let h = opts.step.min(limit);

    // Stream-permutation symmetry: only streams 0 and 1 are needed.
    let symmetric = linalg::is_scaled_identity(pair.t());
    let streams = if symmetric { m.min(2) } else { m };
    let pairs: Vec<(usize, usize)> = if symmetric {
        let mut v = vec![(0, 0)];
        if m > 1 {
            v.push((0, 1));
        }
        v
    } else {
        (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect()
    };

    let node_ids: Vec<(usize, usize)> = (0..streams).flat_map(|k| (0..OFFSETS.len()).map(move |o| (k, o))).collect();
    let step_error = |e: Error| match e {
        Error::StabilityViolation { .. } => Error::StepTooLarge { step: h, limit },
        other => other,
    };

    let entries: Vec<f64> = match opts.order {
        SigmaOrder::FiniteM => {
            let nodes = workers
                .try_map(node_ids.len(), |i| {
                    let (k, o) = node_ids[i];
                    setup.finite_node(Deformation::new(k, OFFSETS[o] * h))
                })
                .map_err(step_error)?;
            let node = |k: usize, o: usize| &nodes[k * OFFSETS.len() + o];
            workers
                .try_map(pairs.len(), |p| {
                    let (i, j) = pairs[p];
                    let f = |a: usize, b: usize| setup.kernel_value(node(i, a), node(j, b), 1.0);
                    let coarse = mixed_difference(f, h, false)?;
                    let fine = mixed_difference(f, h, true)?;
                    Ok(combine(coarse, fine, opts.richardson))
                })
                .map_err(step_error)?
        }
        SigmaOrder::Leading => {
            let nodes: Vec<Node<Taylor2>> = workers.map(node_ids.len(), |i| {
                let (k, o) = node_ids[i];
                setup.series_node(Deformation::new(k, OFFSETS[o] * h), t0)
            });
            let node = |k: usize, o: usize| &nodes[k * OFFSETS.len() + o];
            let w = Taylor2::variable();
            workers
                .try_map(pairs.len(), |p| {
                    let (i, j) = pairs[p];
                    let f = |a: usize, b: usize| setup.kernel_value(node(i, a), node(j, b), w);
                    let coarse = mixed_difference(f, h, false)?;
                    let fine = mixed_difference(f, h, true)?;
                    let d = combine(coarse, fine, opts.richardson);
                    Ok(if i == j { d.c[1] } else { d.c[1] + d.c[2] })
                })
                .map_err(step_error)?
        }
    };

    let mut sigma = vec![vec![0.0; m]; m];
    if symmetric {
        let diag = entries[0];
        let off = entries.get(1).copied().unwrap_or(0.0);
        for (i, row) in sigma.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { diag } else { off };
            }
        }
    } else {
        for (&(i, j), &v) in pairs.iter().zip(&entries) {
            sigma[i][j] = v;
            sigma[j][i] = v;
        }
    }
    Ok(SinrCovariance {
        sigma,
        step: h,
        method: "central-4pt".into(),
        order: opts.order,
        richardson: opts.richardson,
    })
}
