//! Gaussian approximation of the mutual information and its outage probability.

use serde::{Deserialize, Serialize};

use crate::channel::{CorrelationPair, SystemConfig};
use crate::covariance::{joint_cumulant_a, sinr_covariance, CovarianceOptions, SinrCovariance};
use crate::error::{Error, Result};
use crate::fixed_point::{
    mean_logdet_asymptotic, mean_sinr_asymptotic, solve_fixed_point, MeanSinrResult, SolverOptions,
};
use crate::par::Workers;

/// Which second-order mean formula to use for the MMSE receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanVariant {
    /// `sum_k ln(1 + g_k) + sum_k (dg_k + S_kk)`, with no denominators.
    AsPrinted,
    /// Second-order expansion of `E ln(1 + gamma_k)` around the mean SINR.
    #[default]
    Taylor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Receiver {
    Mmse,
    Optimal,
}

/// Gaussian model `N(c1, c2)` of a mutual information, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInfoGaussian {
    pub c1: f64,
    pub c2: f64,
    pub c10: f64,
    pub c11: f64,
    /// `None` for the optimal receiver.
    pub variant: Option<MeanVariant>,
    pub receiver: Receiver,
}

impl MutualInfoGaussian {
    pub fn std_dev(&self) -> f64 {
        self.c2.max(0.0).sqrt()
    }

    /// `P(I <= rate)` under the model.
    pub fn cdf(&self, rate: f64) -> f64 {
        outage_probability(self, rate)
    }
}

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(I <= rate) = Phi((rate - c1) / sqrt(c2))`; a unit step at `c1` when `c2 = 0`.
pub fn outage_probability(model: &MutualInfoGaussian, rate: f64) -> f64 {
    if model.c2 > 0.0 {
        std_normal_cdf((rate - model.c1) / model.c2.sqrt())
    } else if rate >= model.c1 {
        1.0
    } else {
        0.0
    }
}

fn check_shapes(mean: &MeanSinrResult, sigma: &SinrCovariance) -> Result<()> {
    if mean.gamma_bar.len() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean SINR has {} streams, covariance has {}",
            mean.gamma_bar.len(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// Returns `(c1, c10, c11)` with `c1 = M c10 + c11`.
pub fn mmse_mi_mean(
    mean: &MeanSinrResult,
    sigma: &SinrCovariance,
    variant: MeanVariant,
) -> Result<(f64, f64, f64)> {
    check_shapes(mean, sigma)?;
    let m = mean.gamma_bar.len();
    let lead: f64 = mean.gamma_bar.iter().map(|g| g.ln_1p()).sum();
    let correction: f64 = (0..m)
        .map(|k| {
            let (g, dg, s) = (mean.gamma_bar[k], mean.delta_gamma[k], sigma.get(k, k));
            match variant {
                MeanVariant::AsPrinted => dg + s,
                MeanVariant::Taylor => dg / (1.0 + g) - s / (2.0 * (1.0 + g) * (1.0 + g)),
            }
        })
        .sum();
    Ok((lead + correction, lead / m as f64, correction))
}

pub fn mmse_mi_variance(mean: &MeanSinrResult, sigma: &SinrCovariance) -> Result<f64> {
    check_shapes(mean, sigma)?;
    let m = mean.gamma_bar.len();
    let w: Vec<f64> = mean.gamma_bar.iter().map(|g| 1.0 / (1.0 + g)).collect();
    let mut acc = 0.0;
    for k in 0..m {
        for l in 0..m {
            acc += sigma.get(k, l) * w[k] * w[l];
        }
    }
    Ok(acc)
}

pub fn mmse_mi_gaussian(
    mean: &MeanSinrResult,
    sigma: &SinrCovariance,
    variant: MeanVariant,
) -> Result<MutualInfoGaussian> {
    let (c1, c10, c11) = mmse_mi_mean(mean, sigma, variant)?;
    let c2 = mmse_mi_variance(mean, sigma)?;
    Ok(MutualInfoGaussian {
        c1,
        c2,
        c10,
        c11,
        variant: Some(variant),
        receiver: Receiver::Mmse,
    })
}

/// Mean and covariance computed from scratch, then assembled.
pub fn mmse_mi_model(
    pair: &CorrelationPair,
    config: &SystemConfig,
    variant: MeanVariant,
    opts: &CovarianceOptions,
    workers: &Workers,
) -> Result<MutualInfoGaussian> {
    let mean = mean_sinr_asymptotic(pair, config, &opts.solver)?;
    let sigma = sinr_covariance(pair, config, opts, workers)?;
    mmse_mi_gaussian(&mean, &sigma, variant)
}

/// Large-system mean of `ln det(I + (rho/M) H H^H)` and the undeformed
/// diagonal joint cumulant as its variance.
pub fn optimal_mi_gaussian(
    pair: &CorrelationPair,
    config: &SystemConfig,
    solver: &SolverOptions,
) -> Result<MutualInfoGaussian> {
    let sol = solve_fixed_point(pair, config, None, solver)?;
    let c1 = mean_logdet_asymptotic(pair, config, None, &sol)?;
    let c2 = joint_cumulant_a(pair, config, 0, 0, 1.0, 1.0, solver)?;
    Ok(MutualInfoGaussian {
        c1,
        c2,
        c10: c1 / config.m() as f64,
        c11: 0.0,
        variant: None,
        receiver: Receiver::Optimal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{iid_closed_forms, SigmaOrder};
    use proptest::prelude::*;

    fn model(c1: f64, c2: f64) -> MutualInfoGaussian {
        MutualInfoGaussian {
            c1,
            c2,
            c10: c1,
            c11: 0.0,
            variant: Some(MeanVariant::Taylor),
            receiver: Receiver::Mmse,
        }
    }

    #[test]
    fn normal_table_values() {
        let g = model(3.0, 0.25);
        assert_eq!(outage_probability(&g, 3.0), 0.5);
        assert!((outage_probability(&g, 3.0 + 2.0 * 0.5) - 0.977_249_868_051_820_8).abs() < 1e-15);
        assert!((outage_probability(&g, 3.0 - 3.0 * 0.5) - 1.349_898_031_630_094_6e-3).abs() < 1e-17);
        // deep tail keeps relative precision
        let deep = std_normal_cdf(-30.0);
        assert!((deep / 4.906_713_927_148_187e-198 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_variance_is_a_step() {
        let g = model(2.0, 0.0);
        assert_eq!(outage_probability(&g, 1.999), 0.0);
        assert_eq!(outage_probability(&g, 2.0), 1.0);
    }

    fn iid(m: usize, n: usize, rho: f64) -> (CorrelationPair, SystemConfig) {
        let cfg = SystemConfig::new(m, n, rho).unwrap();
        (CorrelationPair::identity(&cfg), cfg)
    }

    #[test]
    fn iid_variance_matches_closed_forms() {
        let opts = CovarianceOptions::default();
        for m in [8usize, 400] {
            let (pair, cfg) = iid(m, 2 * m, 4.0);
            let mean = mean_sinr_asymptotic(&pair, &cfg, &opts.solver).unwrap();
            let sigma = sinr_covariance(&pair, &cfg, &opts, &Workers::sequential()).unwrap();
            let c2 = mmse_mi_variance(&mean, &sigma).unwrap();
            let cf = iid_closed_forms(&cfg);
            let d = (1.0 + cf.g).powi(2);
            // exact double sum over M diagonal and M(M-1) off-diagonal terms
            let finite = (cf.v_d + (1.0 - 1.0 / m as f64) * cf.v_od) / d;
            assert!((c2 / finite - 1.0).abs() < 1e-6, "{c2} {finite}");
            if m >= 400 {
                assert!((c2 / ((cf.v_d + cf.v_od) / d) - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn vanishing_snr() {
        let (pair, cfg) = iid(4, 8, 1e-12);
        let opts = CovarianceOptions::default();
        for variant in [MeanVariant::Taylor, MeanVariant::AsPrinted] {
            let g = mmse_mi_model(&pair, &cfg, variant, &opts, &Workers::sequential()).unwrap();
            assert!(g.c1.abs() < 1e-10 && g.c2.abs() < 1e-10, "{g:?}");
        }
        let o = optimal_mi_gaussian(&pair, &cfg, &SolverOptions::default()).unwrap();
        assert!(o.c1.abs() < 1e-10 && o.c2.abs() < 1e-10);
    }

    #[test]
    fn variants_share_leading_term_and_gap_shrinks() {
        let opts = CovarianceOptions::default();
        let mut last = f64::INFINITY;
        for m in [4usize, 8, 16, 32] {
            let (pair, cfg) = iid(m, 2 * m, 4.0);
            let w = Workers::sequential();
            let a = mmse_mi_model(&pair, &cfg, MeanVariant::Taylor, &opts, &w).unwrap();
            let b = mmse_mi_model(&pair, &cfg, MeanVariant::AsPrinted, &opts, &w).unwrap();
            assert_eq!(a.c10, b.c10);
            assert!((a.c1 - (m as f64 * a.c10 + a.c11)).abs() < 1e-12 * a.c1);
            let rel = (a.c1 - b.c1).abs() / a.c1;
            assert!(rel < last);
            last = rel;
        }
    }

    #[test]
    fn c10_saturates_under_self_similar_extension() {
        let opts = CovarianceOptions::default();
        let c10: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&m| {
                let cfg = SystemConfig::new(m, 2 * m, 10.0).unwrap();
                let pair = CorrelationPair::exponential(&cfg, 0.5, 0.5).unwrap();
                let mean = mean_sinr_asymptotic(&pair, &cfg, &opts.solver).unwrap();
                mean.gamma_bar.iter().map(|g| g.ln_1p()).sum::<f64>() / m as f64
            })
            .collect();
        assert!((c10[1] - c10[0]).abs() > (c10[2] - c10[1]).abs());
        assert!((c10[2] - c10[1]).abs() < 0.01 * c10[2]);
    }

    #[test]
    fn variance_stabilizes_with_dimension() {
        let opts = CovarianceOptions::default();
        let c2: Vec<f64> = [4usize, 8, 16, 32]
            .iter()
            .map(|&m| {
                let cfg = SystemConfig::new(m, 2 * m, 4.0).unwrap();
                let pair = CorrelationPair::exponential(&cfg, 0.5, 0.3).unwrap();
                mmse_mi_model(&pair, &cfg, MeanVariant::Taylor, &opts, &Workers::sequential())
                    .unwrap()
                    .c2
            })
            .collect();
        let steps: Vec<f64> = c2.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(steps[0] > steps[1] && steps[1] > steps[2], "{c2:?}");
        assert!(steps[2] < 0.05 * c2[3], "{c2:?}");
    }

    #[test]
    fn optimal_receiver_dominates() {
        let cfg = SystemConfig::new(4, 6, 20.0).unwrap();
        let pair = CorrelationPair::exponential(&cfg, 0.7, 0.4).unwrap();
        let opts = CovarianceOptions::default();
        let mmse = mmse_mi_model(&pair, &cfg, MeanVariant::Taylor, &opts, &Workers::sequential()).unwrap();
        let opt = optimal_mi_gaussian(&pair, &cfg, &opts.solver).unwrap();
        assert!(opt.c1 > mmse.c1);
        for r in [1.0, 3.0, 5.0, 8.0] {
            assert!(outage_probability(&opt, r) <= outage_probability(&mmse, r));
        }
    }

    #[test]
    fn optimal_variance_reference_point() {
        let (pair, cfg) = iid(8, 16, 4.0);
        let o = optimal_mi_gaussian(&pair, &cfg, &SolverOptions::default()).unwrap();
        assert!((o.c2 - 0.415_52).abs() < 1e-4);
        assert_eq!(o.receiver, Receiver::Optimal);
    }

    #[test]
    fn outage_decreases_with_snr() {
        let opts = CovarianceOptions {
            order: SigmaOrder::Leading,
            ..CovarianceOptions::default()
        };
        let mut last = 1.0;
        for db in [0.0, 5.0, 10.0, 15.0, 20.0] {
            let (pair, cfg) = iid(3, 4, crate::units::db_to_linear(db));
            let g = mmse_mi_model(&pair, &cfg, MeanVariant::Taylor, &opts, &Workers::sequential()).unwrap();
            let p = outage_probability(&g, crate::units::bits_to_nats(3.0));
            assert!(p <= last);
            last = p;
        }
    }

    proptest! {
        #[test]
        fn outage_is_monotone_in_rate(c1 in 0.0..20.0f64, c2 in 1e-6..10.0f64, a in -30.0..30.0f64, d in 0.0..5.0f64) {
            let g = model(c1, c2);
            let (p, q) = (outage_probability(&g, a), outage_probability(&g, a + d));
            prop_assert!(p <= q);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
