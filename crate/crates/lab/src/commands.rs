//! Subcommands of the `isq` binary. Each one writes its reports into the
//! configured output directory and returns an [`Outcome`].

use std::path::PathBuf;

use isq_core::analytics::MgParams;
use isq_core::bounds::{
    busy_bound, chi_mean_lower, chi_moment_bound, convergence_constant, eta_moment_bound, tau_moment_bound,
};
use isq_core::coupling::{couple, dominate, tau_moment_estimate, write_coupling_csv, write_domination_csv, CoupleOptions};
use isq_core::simulator::{detect_cycles, ensemble_marginals, sample_cycles, simulate, X0Binning};
use isq_core::stats::{binomial_se, moment_stats, SampleStats};
use isq_core::{Family, FullState, Intensity, Streams};
use rayon::prelude::*;
use serde::Serialize;

use crate::acceptance::{self, CriterionResult};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{cell, Provenance, ReportDir};

pub const COMMANDS: [&str; 7] = ["simulate", "mg-analytics", "bounds", "couple", "dominate", "tv-check", "verify"];

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    /// Summary lines for the terminal.
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
    /// A failure that came from the numerical machinery.
    pub numeric_failure: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match (self.passed, self.numeric_failure) {
            (true, _) => 0,
            (false, true) => 2,
            (false, false) => 1,
        }
    }
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub provenance: Provenance,
}

impl Context<'_> {
    fn out(&self) -> Result<ReportDir> {
        ReportDir::create(
            &self.cfg.output.directory,
            self.provenance.clone(),
            self.cfg.output.csv,
            self.cfg.output.json,
        )
    }

    fn streams(&self, command: &str) -> Streams {
        Streams::new(self.cfg.run.master_seed).derive(command)
    }
}

fn finish(out: ReportDir, passed: bool, lines: Vec<String>) -> Outcome {
    Outcome {
        passed,
        lines,
        files: out.written().to_vec(),
        numeric_failure: false,
    }
}

pub fn run(name: &str, ctx: &Context<'_>) -> Result<Outcome> {
    match name {
        "simulate" => simulate_cmd(ctx),
        "mg-analytics" => mg_analytics(ctx),
        "bounds" => bounds_cmd(ctx),
        "couple" => couple_cmd(ctx),
        "dominate" => dominate_cmd(ctx),
        "tv-check" => tv_check(ctx),
        "verify" => verify(ctx),
        other => Err(crate::error::LabError::Config {
            origin: "command line".into(),
            message: format!("unknown subcommand `{other}`, expected one of {}", COMMANDS.join(", ")),
        }),
    }
}

#[derive(Serialize)]
struct MomentRow {
    quantity: &'static str,
    r: f64,
    estimate: f64,
    std_error: f64,
    bound: Option<f64>,
    within_bound: Option<bool>,
}

fn moment_row(quantity: &'static str, r: f64, values: &[f64], bound: Option<f64>) -> MomentRow {
    let s = moment_stats(values, r);
    MomentRow {
        quantity,
        r,
        estimate: s.mean,
        std_error: s.std_error(),
        bound,
        within_bound: bound.map(|b| s.mean <= b + 3.0 * s.std_error()),
    }
}

fn simulate_cmd(ctx: &Context<'_>) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let family = cfg.family()?;
    let env = cfg.envelope();
    let streams = ctx.streams("simulate");
    let horizon = cfg.run.horizon;
    let trajs = (0..cfg.run.replications as u64)
        .into_par_iter()
        .map(|i| simulate(&family, &FullState::origin(), horizon, &mut streams.stream("trajectory", i)))
        .collect::<isq_core::Result<Vec<_>>>()?;
    let mut out = ctx.out()?;

    let mut rows = Vec::new();
    for (run, t) in trajs.iter().enumerate() {
        for e in &t.events {
            rows.push(vec![
                run.to_string(),
                e.time.to_string(),
                e.kind.as_str().to_string(),
                e.index.map(|i| i.to_string()).unwrap_or_default(),
                e.state_after.n().to_string(),
                e.state_after.x0().to_string(),
            ]);
        }
    }
    out.csv_rows("trajectories.csv", &["run", "time", "kind", "index", "n", "x0"], &rows)?;

    let (mut zeta, mut eta, mut chi) = (Vec::new(), Vec::new(), Vec::new());
    let mut rows = Vec::new();
    for (run, t) in trajs.iter().enumerate() {
        let ann = detect_cycles(t);
        for c in &ann.cycles {
            rows.push(vec![run.to_string(), c.theta.to_string(), cell(c.zeta), cell(c.eta), c.complete().to_string()]);
        }
        for c in ann.complete() {
            zeta.push(c.zeta.unwrap_or_default());
            eta.push(c.eta.unwrap_or_default());
            chi.push(c.chi().unwrap_or_default());
        }
    }
    out.csv_rows("cycles.csv", &["run", "theta", "zeta", "eta", "complete"], &rows)?;

    let mut moments = Vec::new();
    if !chi.is_empty() {
        for &r in &cfg.bounds.r {
            moments.push(moment_row("zeta", r, &zeta, busy_bound(&env, r).ok()));
            moments.push(moment_row("eta", r, &eta, eta_moment_bound(env.lambda0, env.lambda_max, r).ok()));
            moments.push(moment_row("chi", r, &chi, chi_moment_bound(&env, r).ok()));
        }
    }
    let chi_mean = SampleStats::new(chi.iter().copied());
    #[derive(Serialize)]
    struct Summary {
        runs: usize,
        events: usize,
        complete_cycles: usize,
        moments: Vec<MomentRow>,
        chi_mean_lower_bound: f64,
        chi_mean_above_lower_bound: Option<bool>,
    }
    let summary = Summary {
        runs: trajs.len(),
        events: trajs.iter().map(|t| t.events.len()).sum(),
        complete_cycles: chi.len(),
        chi_mean_lower_bound: chi_mean_lower(&env),
        chi_mean_above_lower_bound: (!chi.is_empty())
            .then(|| chi_mean.mean >= chi_mean_lower(&env) - 3.0 * chi_mean.std_error()),
        moments,
    };
    out.json("simulate_summary.json", &summary)?;
    let lines = vec![format!(
        "simulated {} paths to t={horizon}: {} events, {} complete cycles",
        summary.runs, summary.events, summary.complete_cycles
    )];
    Ok(finish(out, true, lines))
}

fn mg_analytics(ctx: &Context<'_>) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let env = cfg.envelope();
    let q = MgParams::from_envelope(&env)?;
    let mg = Family::mg_infinity(env.lambda_max, env.k)?;
    let reps = cfg.run.replications;
    let streams = ctx.streams("mg-analytics");
    let grid = &cfg.run.time_grid;
    let ms = ensemble_marginals(&mg, &FullState::origin(), grid, reps, X0Binning::for_lambda0(env.lambda_max)?, &streams, "occupancy")?;
    let mut out = ctx.out()?;
    let mut rows = Vec::new();
    for m in &ms {
        let g = q.g_integral(m.time)?;
        for k in 0..4u64 {
            let p = q.occupancy_pk(m.time, k)?;
            let p_hat = m.n_frequency(k as usize);
            rows.push(vec![
                m.time.to_string(),
                g.to_string(),
                k.to_string(),
                p.to_string(),
                p_hat.to_string(),
                binomial_se(p, reps).to_string(),
            ]);
        }
    }
    out.csv_rows("occupancy.csv", &["t", "G", "k", "P_k", "empirical", "binomial_se"], &rows)?;

    let cycles = sample_cycles(&mg, reps, 1e9, &streams.derive("cycles"))?;
    let zeta: Vec<f64> = cycles.iter().map(|c| c.zeta).collect();
    #[derive(Serialize)]
    struct Comparison {
        quantity: String,
        analytic: Option<f64>,
        empirical: f64,
        std_error: f64,
        within_3se: Option<bool>,
    }
    let compare = |quantity: String, analytic: Option<f64>, s: SampleStats| Comparison {
        quantity,
        analytic,
        empirical: s.mean,
        std_error: s.std_error(),
        within_3se: analytic.map(|a| (a - s.mean).abs() <= 3.0 * s.std_error()),
    };
    let mut comparisons = vec![
        compare("E zeta".into(), Some(q.busy_mean()), moment_stats(&zeta, 1.0)),
        compare("E zeta^2".into(), q.busy_second_moment().ok(), moment_stats(&zeta, 2.0)),
    ];
    for s in [0.5, 1.0, 2.0] {
        comparisons.push(compare(
            format!("E exp(-{s} zeta)"),
            Some(q.laplace_busy(s)?),
            SampleStats::new(zeta.iter().map(|z| (-s * z).exp())),
        ));
    }
    #[derive(Serialize)]
    struct BoundRow {
        k: f64,
        bound: Option<f64>,
        empirical: f64,
        std_error: f64,
    }
    let bounds: Vec<BoundRow> = cfg
        .bounds
        .r
        .iter()
        .map(|&k| {
            let s = moment_stats(&zeta, k);
            BoundRow {
                k,
                bound: q.busy_moment_bound(k).ok(),
                empirical: s.mean,
                std_error: s.std_error(),
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Report {
        lambda: f64,
        k: f64,
        rho: f64,
        varrho: f64,
        g_limit: f64,
        laplace_mean: f64,
        comparisons: Vec<Comparison>,
        moment_bounds: Vec<BoundRow>,
        cycles: usize,
    }
    let report = Report {
        lambda: env.lambda_max,
        k: env.k,
        rho: q.rho(),
        varrho: q.varrho(),
        g_limit: q.rho(),
        laplace_mean: q.laplace_mean(1e-3)?,
        cycles: zeta.len(),
        comparisons,
        moment_bounds: bounds,
    };
    out.json("mg_analytics.json", &report)?;
    let lines = report
        .comparisons
        .iter()
        .map(|c| match c.analytic {
            Some(a) => format!("{}: analytic {a:.6}, empirical {:.6} +- {:.6}", c.quantity, c.empirical, c.std_error),
            None => format!("{}: diverges, empirical {:.6}", c.quantity, c.empirical),
        })
        .collect();
    Ok(finish(out, true, lines))
}

fn r_tag(r: f64) -> String {
    r.to_string().replace('.', "_")
}

fn bounds_cmd(ctx: &Context<'_>) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let env = cfg.envelope();
    let mut out = ctx.out()?;
    let mut lines = Vec::new();
    let mut reports = Vec::new();
    for &r in &cfg.bounds.r {
        let report = convergence_constant(&env, r, cfg.bounds.varpi)?;
        out.csv_with(&format!("bound_curve_r{}.csv", r_tag(r)), |buf| Ok(report.write_curve_csv(buf)?))?;
        lines.push(format!("r={r}: C1={:.6e}", report.c1));
        reports.push(report);
    }
    out.json("bounds.json", &reports)?;
    Ok(finish(out, true, lines))
}

fn couple_cmd(ctx: &Context<'_>) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let family = cfg.family()?;
    let env = cfg.envelope();
    let streams = ctx.streams("couple");
    let mut opts = CoupleOptions::new(cfg.run.horizon);
    opts.follow_after_tau = false;
    let traces = (0..cfg.run.replications as u64)
        .into_par_iter()
        .map(|i| couple(&family, &FullState::regeneration(), &opts, &mut streams.stream("pair", i)))
        .collect::<isq_core::Result<Vec<_>>>()?;
    let mut out = ctx.out()?;
    out.csv_with("coupling.csv", |buf| Ok(write_coupling_csv(&traces, buf)?))?;
    let mut rows = Vec::new();
    for (run, t) in traces.iter().enumerate() {
        for a in &t.attempts {
            rows.push(vec![run.to_string(), a.time.to_string(), a.kappa.to_string(), a.coupled.to_string(), a.fresh.to_string()]);
        }
    }
    out.csv_rows("attempts.csv", &["run", "time", "kappa", "coupled", "fresh"], &rows)?;

    let theta0: Vec<f64> = traces.iter().filter_map(|t| t.theta_marks.first().map(|m| m.time)).collect();
    let mut rows = Vec::new();
    let mut passed = true;
    let mut lines = Vec::new();
    for &r in &cfg.bounds.r {
        let est = tau_moment_estimate(&traces, r)?;
        let e_theta = moment_stats(&theta0, r).mean;
        let bound = tau_moment_bound(&env, r, e_theta, cfg.bounds.varpi)?;
        let ok = est.estimate <= bound;
        passed &= ok;
        lines.push(format!(
            "r={r}: E tau^r = {:.6} +- {:.6} ({} censored), bound {:.6e}",
            est.estimate, est.std_error, est.censored, bound
        ));
        rows.push(vec![
            r.to_string(),
            est.estimate.to_string(),
            est.std_error.to_string(),
            est.used.to_string(),
            est.censored.to_string(),
            e_theta.to_string(),
            bound.to_string(),
            ok.to_string(),
        ]);
    }
    out.csv_rows(
        "tau_moments.csv",
        &["r", "estimate", "std_error", "used", "censored", "e_theta0_r", "bound", "within_bound"],
        &rows,
    )?;
    Ok(finish(out, passed, lines))
}

fn dominate_cmd(ctx: &Context<'_>) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let family = cfg.family()?;
    let streams = ctx.streams("dominate");
    let traces = (0..cfg.run.replications as u64)
        .into_par_iter()
        .map(|i| dominate(&family, cfg.run.horizon, &mut streams.stream("run", i)))
        .collect::<isq_core::Result<Vec<_>>>()?;
    let mut out = ctx.out()?;
    out.csv_with("domination.csv", |buf| Ok(write_domination_csv(&traces, buf)?))?;
    let violations: u64 = traces.iter().map(|t| t.violations).sum();
    let runs = traces.len();
    let floor = (-family.envelope().rho()).exp();
    #[derive(Serialize)]
    struct IdleRow {
        t: f64,
        p_idle: f64,
        floor: f64,
        std_error: f64,
        above_floor: bool,
    }
    let idle: Vec<IdleRow> = cfg
        .run
        .time_grid
        .iter()
        .filter(|&&t| t <= cfg.run.horizon)
        .map(|&t| {
            let p = traces.iter().filter(|d| d.counts_at(t).0 == 0).count() as f64 / runs as f64;
            let se = binomial_se(p, runs);
            IdleRow {
                t,
                p_idle: p,
                floor,
                std_error: se,
                above_floor: p >= floor - 3.0 * se,
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Summary {
        runs: usize,
        horizon: f64,
        violations: u64,
        shared_arrivals: u64,
        thinned_arrivals: u64,
        idle_probability: Vec<IdleRow>,
    }
    let summary = Summary {
        runs,
        horizon: cfg.run.horizon,
        violations,
        shared_arrivals: traces.iter().map(|t| t.shared_arrivals).sum(),
        thinned_arrivals: traces.iter().map(|t| t.thinned_arrivals).sum(),
        idle_probability: idle,
    };
    out.json("domination_summary.json", &summary)?;
    let lines = vec![format!("runs={runs} horizon={} violations={violations}", cfg.run.horizon)];
    Ok(finish(out, violations == 0, lines))
}

fn tv_check(ctx: &Context<'_>) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let family = cfg.family()?;
    let env = cfg.envelope();
    let warmup = cfg.warmup()?;
    let reports = cfg
        .bounds
        .r
        .iter()
        .map(|&r| convergence_constant(&env, r, cfg.bounds.varpi))
        .collect::<isq_core::Result<Vec<_>>>()?;
    let curve = acceptance::tv_curve(&family, &env, &cfg.run.time_grid, cfg.run.replications, warmup, &ctx.streams("tv-check"))?;
    let mut out = ctx.out()?;
    let mut header: Vec<String> = vec!["t".into(), "tv".into(), "half_width".into()];
    header.extend(cfg.bounds.r.iter().map(|r| format!("bound_r{r}")));
    header.push("nonincreasing".into());
    let mut rows = Vec::new();
    let mut passed = true;
    let mut lines = Vec::new();
    for (i, (t, e)) in curve.iter().enumerate() {
        let mut row = vec![t.to_string(), e.tv.to_string(), e.half_width.to_string()];
        for rep in &reports {
            let b = rep.bound_at(*t);
            passed &= e.tv <= b;
            row.push(b.to_string());
        }
        let mono = i == 0 || {
            let (_, p) = &curve[i - 1];
            e.tv <= p.tv + p.half_width + e.half_width
        };
        passed &= mono;
        row.push(mono.to_string());
        lines.push(format!("t={t}: TV={:.4} +- {:.4}", e.tv, e.half_width));
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv_rows("tv.csv", &header, &rows)?;
    Ok(finish(out, passed, lines))
}

fn verify(ctx: &Context<'_>) -> Result<Outcome> {
    let results = acceptance::run_suite(ctx.cfg.run.master_seed, |r| eprintln!("{}", r.line()));
    let mut out = ctx.out()?;
    let body = acceptance::render_csv(&results);
    out.csv_with("verify.csv", |buf| {
        buf.extend_from_slice(&body);
        Ok(())
    })?;
    out.json("verify.json", &results)?;
    let passed = results.iter().all(|r| r.passed);
    let numeric = results.iter().any(|r: &CriterionResult| r.numeric_error);
    let lines = results.iter().map(CriterionResult::line).collect();
    let mut o = finish(out, passed, lines);
    o.numeric_failure = numeric;
    Ok(o)
}
