use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mimo_asympt::units::{bits_to_nats, nats2_to_bits2, nats_to_bits};
use mimo_asympt::{
    empirical_outage, ks_distance, mean_sinr_asymptotic, mmse_mi_gaussian, optimal_mi_gaussian,
    outage_probability, run_trials, sinr_covariance, EmpiricalSummary, MeanVariant,
    MutualInfoGaussian, Receiver, SigmaOrder, TrialBatchSpec, Workers,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::format::{csv_row, g12};
use crate::scenario::Scenario;
use crate::Units;

pub struct Context {
    pub scenario: Scenario,
    pub out: std::path::PathBuf,
    pub units: Units,
    pub workers: Workers,
}

impl Context {
    fn show(&self, nats: f64) -> String {
        match self.units {
            Units::Nats => g12(nats),
            Units::Bpcu => g12(nats_to_bits(nats)),
        }
    }

    fn show_var(&self, nats2: f64) -> String {
        match self.units {
            Units::Nats => g12(nats2),
            Units::Bpcu => g12(nats2_to_bits2(nats2)),
        }
    }

    fn unit_name(&self) -> &'static str {
        match self.units {
            Units::Nats => "nats",
            Units::Bpcu => "bpcu",
        }
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.out.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct SigmaSummary {
    diag_mean: f64,
    offdiag_mean: f64,
    trace: f64,
    step: f64,
    order: SigmaOrder,
}

#[derive(Debug, Serialize)]
struct AsymptoticPoint {
    snr_db: f64,
    rho: f64,
    t: f64,
    r: f64,
    /// `t sqrt(rho)`, the common mean SINR when the transmit side is white.
    g: Option<f64>,
    gamma_bar: Vec<f64>,
    delta_gamma: Vec<f64>,
    stability_margin: f64,
    sigma: SigmaSummary,
    mmse_taylor: MutualInfoGaussian,
    mmse_as_printed: MutualInfoGaussian,
    optimal: MutualInfoGaussian,
}

#[derive(Debug, Serialize)]
struct AsymptoticsReport {
    units: &'static str,
    m: usize,
    n: usize,
    trace_r: f64,
    trace_t: f64,
    mean_variant: MeanVariant,
    points: Vec<AsymptoticPoint>,
}

fn asymptotic_point(ctx: &Context, snr_db: f64) -> CliResult<AsymptoticPoint> {
    let s = &ctx.scenario;
    let cfg = s.config(snr_db)?;
    let opts = s.covariance_options();
    let mean = mean_sinr_asymptotic(&s.pair, &cfg, &opts.solver)?;
    let sigma = sinr_covariance(&s.pair, &cfg, &opts, &ctx.workers)?;
    let mmse_taylor = mmse_mi_gaussian(&mean, &sigma, MeanVariant::Taylor)?;
    let mmse_as_printed = mmse_mi_gaussian(&mean, &sigma, MeanVariant::AsPrinted)?;
    let optimal = optimal_mi_gaussian(&s.pair, &cfg, &opts.solver)?;
    let white_tx = mimo_asympt::linalg::is_scaled_identity(s.pair.t());
    Ok(AsymptoticPoint {
        snr_db,
        rho: cfg.rho(),
        t: mean.solution.t,
        r: mean.solution.r,
        g: white_tx.then(|| mean.solution.t * cfg.rho().sqrt()),
        stability_margin: mean.stability_margin(),
        gamma_bar: mean.gamma_bar,
        delta_gamma: mean.delta_gamma,
        sigma: SigmaSummary {
            diag_mean: sigma.diag_mean(),
            offdiag_mean: sigma.offdiag_mean(),
            trace: sigma.trace(),
            step: sigma.step,
            order: sigma.order,
        },
        mmse_taylor,
        mmse_as_printed,
        optimal,
    })
}

fn at_snr(snr_db: f64) -> String {
    format!("snr_db = {}", g12(snr_db))
}

fn chosen(p: &AsymptoticPoint, v: MeanVariant) -> &MutualInfoGaussian {
    match v {
        MeanVariant::Taylor => &p.mmse_taylor,
        MeanVariant::AsPrinted => &p.mmse_as_printed,
    }
}

pub fn asymptotics(ctx: &Context) -> CliResult<()> {
    let s = &ctx.scenario;
    let mut points = Vec::with_capacity(s.snr_db.len());
    for &db in &s.snr_db {
        let p = asymptotic_point(ctx, db).map_err(|e| e.context(at_snr(db)))?;
        let mmse = chosen(&p, s.file.mean_variant);
        println!(
            "snr_db={} c1_mmse={} c2_mmse={} c1_opt={} c2_opt={} ({})",
            g12(db),
            ctx.show(mmse.c1),
            ctx.show_var(mmse.c2),
            ctx.show(p.optimal.c1),
            ctx.show_var(p.optimal.c2),
            ctx.unit_name()
        );
        points.push(p);
    }
    let report = AsymptoticsReport {
        units: "nats",
        m: s.file.m,
        n: s.file.n,
        trace_r: s.pair.trace_r(),
        trace_t: s.pair.trace_t(),
        mean_variant: s.file.mean_variant,
        points,
    };
    ctx.write_json("asymptotics.json", &report)
}

fn simulate_at(ctx: &Context, snr_db: f64) -> CliResult<EmpiricalSummary> {
    let s = &ctx.scenario;
    let spec = TrialBatchSpec::new(s.config(snr_db)?, s.pair.clone(), s.trials()?, s.file.seed)?;
    Ok(run_trials(&spec, &ctx.workers)?)
}

pub fn simulate(ctx: &Context) -> CliResult<()> {
    let db = ctx.scenario.single_snr()?;
    let summary = simulate_at(ctx, db).map_err(|e| e.context(at_snr(db)))?;
    let mut w = ctx.create("samples.csv")?;
    summary.write_samples_csv(&mut w, g12)?;
    w.flush()?;
    ctx.write_json("summary.json", &summary)?;
    println!(
        "trials={} mi_mean={} mi_var={} opt_mean={} opt_var={} ({})",
        summary.n_trials,
        ctx.show(summary.mi_mean),
        ctx.show_var(summary.mi_var),
        ctx.show(summary.opt_mean),
        ctx.show_var(summary.opt_var),
        ctx.unit_name()
    );
    Ok(())
}

pub const COMPARE_POINTS: usize = 200;

#[derive(Debug, Serialize)]
struct VariantFit {
    model: MutualInfoGaussian,
    ks: f64,
    /// `(c1 - MC mean) / MC mean`.
    mean_rel_err: f64,
    /// `(c2 - MC variance) / MC variance`.
    var_rel_err: f64,
}

impl VariantFit {
    fn new(model: &MutualInfoGaussian, summary: &EmpiricalSummary) -> Self {
        let (mean, var) = match model.receiver {
            Receiver::Mmse => (summary.mi_mean, summary.mi_var),
            Receiver::Optimal => (summary.opt_mean, summary.opt_var),
        };
        Self {
            model: model.clone(),
            ks: ks_distance(summary, model),
            mean_rel_err: (model.c1 - mean) / mean,
            var_rel_err: (model.c2 - var) / var,
        }
    }
}

#[derive(Debug, Serialize)]
struct CompareReport {
    snr_db: f64,
    mean_variant: MeanVariant,
    ks_mmse: f64,
    ks_opt: f64,
    mmse_taylor: VariantFit,
    mmse_as_printed: VariantFit,
    optimal: VariantFit,
    mi_mean: f64,
    mi_var: f64,
    opt_mean: f64,
    opt_var: f64,
}

pub fn compare(ctx: &Context) -> CliResult<()> {
    let s = &ctx.scenario;
    let db = s.single_snr()?;
    let (p, summary) = asymptotic_point(ctx, db)
        .and_then(|p| Ok((p, simulate_at(ctx, db)?)))
        .map_err(|e| e.context(at_snr(db)))?;
    let mmse = chosen(&p, s.file.mean_variant).clone();
    let opt = p.optimal.clone();
    let lo = summary.mi_samples[0].min(summary.opt_samples[0]);
    let hi = summary.mi_samples.last().unwrap().max(*summary.opt_samples.last().unwrap());
    let mut w = ctx.create("compare.csv")?;
    writeln!(w, "mi_bpcu,cdf_mmse_analytic,cdf_mmse_empirical,cdf_opt_analytic,cdf_opt_empirical")?;
    for i in 0..COMPARE_POINTS {
        let x = if i + 1 == COMPARE_POINTS {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (COMPARE_POINTS - 1) as f64
        };
        let row = [
            nats_to_bits(x),
            outage_probability(&mmse, x),
            summary.ecdf(Receiver::Mmse, x),
            outage_probability(&opt, x),
            summary.ecdf(Receiver::Optimal, x),
        ];
        writeln!(w, "{}", csv_row(&row))?;
    }
    w.flush()?;
    let ks_mmse = ks_distance(&summary, &mmse);
    let ks_opt = ks_distance(&summary, &opt);
    let taylor = VariantFit::new(&p.mmse_taylor, &summary);
    let printed = VariantFit::new(&p.mmse_as_printed, &summary);
    println!("ks_mmse={} ks_opt={}", g12(ks_mmse), g12(ks_opt));
    for (name, fit) in [("taylor", &taylor), ("as-printed", &printed)] {
        println!(
            "variant={name} c1_rel_err={} c2_rel_err={} ks={}",
            g12(fit.mean_rel_err),
            g12(fit.var_rel_err),
            g12(fit.ks)
        );
    }
    ctx.write_json(
        "compare.json",
        &CompareReport {
            snr_db: db,
            mean_variant: s.file.mean_variant,
            ks_mmse,
            ks_opt,
            mmse_taylor: taylor,
            mmse_as_printed: printed,
            optimal: VariantFit::new(&opt, &summary),
            mi_mean: summary.mi_mean,
            mi_var: summary.mi_var,
            opt_mean: summary.opt_mean,
            opt_var: summary.opt_var,
        },
    )
}

pub fn outage(ctx: &Context) -> CliResult<()> {
    let s = &ctx.scenario;
    let rates = s.rates_bpcu()?;
    s.trials()?;
    let mut files: Vec<(String, BufWriter<File>)> = Vec::with_capacity(rates.len());
    for &r in &rates {
        let name = if rates.len() == 1 {
            "outage.csv".to_string()
        } else {
            format!("outage_R{}.csv", g12(r))
        };
        let mut w = ctx.create(&name)?;
        writeln!(w, "snr_db,pout_mmse_gauss,pout_mmse_mc,pout_opt_mc,ci_halfwidth")?;
        files.push((name, w));
    }
    for &db in &s.snr_db {
        let (p, summary) = asymptotic_point(ctx, db)
            .and_then(|p| Ok((p, simulate_at(ctx, db)?)))
            .map_err(|e| e.context(at_snr(db)))?;
        let model = chosen(&p, s.file.mean_variant);
        for (&r, (_, w)) in rates.iter().zip(files.iter_mut()) {
            let nats = bits_to_nats(r);
            let gauss = outage_probability(model, nats);
            let mmse = empirical_outage(&summary, nats, Receiver::Mmse);
            let opt = empirical_outage(&summary, nats, Receiver::Optimal);
            let ci = mmse.ci_halfwidth.max(opt.ci_halfwidth);
            writeln!(w, "{}", csv_row(&[db, gauss, mmse.probability, opt.probability, ci]))?;
        }
    }
    for (name, mut w) in files {
        w.flush()?;
        println!("wrote {}", Path::new(&name).display());
    }
    Ok(())
}
