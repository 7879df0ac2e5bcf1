use std::fmt;
use std::sync::Arc;

use clap::ValueEnum;

use jumpsde_core::batch::{map_seeds, seed_block};
use jumpsde_core::coefficients::{
    check_condition, check_modulus, ConditionId, ConditionReport, Dynamics, ModulusCheck, ModulusSpec,
    MollifiedTriple, Verdict, DEFAULT_ORDER,
};
use jumpsde_core::lab::{
    certification_grid, maximum_experiment, pathwise_experiment, weak_experiment, DirectEuler, ExperimentReport,
    ExperimentVerdict, ExperimentWitness, LevelStat, MarginalSampler, MaximumConfig, Resolution, Table,
    TimeChangedEuler,
};
use jumpsde_core::localtime::{
    batch_estimate, occupation_local_time, sigma_along, tanaka_local_time, write_estimates_csv, LocalTimeEstimate,
};
use jumpsde_core::models::Model;
use jumpsde_core::noise::sample_noise;
use jumpsde_core::risk::{dividend_of, outcomes, ruin_of, write_outcomes_csv};
use jumpsde_core::solver::{euler_solve, moment_bound, moment_stat, running_sup_sq};
use jumpsde_core::stats::{mean_stderr, median};
use jumpsde_core::timechange::{compute_tau, driving_martingale, verify_bm, BmThresholds};
use jumpsde_core::{Error, Result};

use crate::config::{Format, RunConfig, Sampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Check,
    Simulate,
    Timechange,
    Localtime,
    Pathwise,
    Weak,
    Maximum,
    Risk,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Timechange => "timechange",
            Command::Localtime => "localtime",
            Command::Pathwise => "pathwise",
            Command::Weak => "weak",
            Command::Maximum => "maximum",
            Command::Risk => "risk",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A finished run: the JSON report plus named CSV or dump artifacts.
pub struct Outcome {
    pub report: ExperimentReport,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(report: ExperimentReport) -> Self {
        Self { report, files: Vec::new() }
    }

    fn attach(&mut self, name: String, bytes: Vec<u8>) {
        self.report.artifacts.push(name.clone());
        self.files.push((name, bytes));
    }
}

pub fn dispatch(command: Command, config: &RunConfig) -> Result<Outcome> {
    let model = config.model()?;
    let mut out = match command {
        Command::Check => check(config, &model)?,
        Command::Simulate => simulate(config, &model)?,
        Command::Timechange => timechange(config, &model)?,
        Command::Localtime => localtime(config, &model)?,
        Command::Pathwise => Outcome::new(pathwise(config, &model)?),
        Command::Weak => Outcome::new(weak(config, &model)?),
        Command::Maximum => Outcome::new(maximum(config, &model)?),
        Command::Risk => risk(config)?,
    };
    out.report.experiment = command.as_str().to_string();
    if config.wants(Format::Csv) && !out.report.per_seed.rows.is_empty() {
        let mut buf = Vec::new();
        out.report.per_seed.write_csv(&mut buf).map_err(io)?;
        out.attach(format!("{command}_per_seed.csv"), buf);
    }
    Ok(out)
}

fn io(e: std::io::Error) -> Error {
    Error::Input(format!("write failed: {e}"))
}

fn dynamics(config: &RunConfig, model: &Model) -> Result<Arc<dyn Dynamics>> {
    Ok(match config.numerics.n {
        None => Arc::new(model.triple.clone()),
        Some(n) => Arc::new(MollifiedTriple::new(&model.triple, n, DEFAULT_ORDER)?),
    })
}

fn seeds(config: &RunConfig) -> Vec<u64> {
    seed_block(config.experiment.seed_base, config.experiment.n_paths)
}

fn check(config: &RunConfig, model: &Model) -> Result<Outcome> {
    let ids: Vec<ConditionId> = if config.experiment.conditions.is_empty() {
        let mut ids = ConditionId::POINTWISE.to_vec();
        if model.triple.modulus.is_some() {
            ids.push(ConditionId::ModulusMonotone);
        }
        ids
    } else {
        config.experiment.conditions.iter().map(|s| ConditionId::parse(s)).collect::<Result<_>>()?
    };
    let grid = certification_grid(&model.triple, model.x0);
    let mut reports: Vec<ConditionReport> = Vec::new();
    for id in ids {
        let r = match id {
            ConditionId::ModulusRho => {
                let rho = ModulusSpec::linear(config.experiment.rho);
                check_modulus(&model.triple, &ModulusCheck::Rho(rho), &grid)?
            }
            ConditionId::ModulusMonotone => {
                let f = model.triple.modulus.clone().ok_or_else(|| {
                    Error::Configuration(format!("model {} has no modulus function for mod_f", model.name))
                })?;
                check_modulus(&model.triple, &ModulusCheck::Monotone(f), &grid)?
            }
            _ => check_condition(&model.triple, &model.measure, id, &grid)?,
        };
        reports.push(r);
    }
    let mut report = ExperimentReport::new("check", config.experiment.seed_base);
    report.verdict = if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        ExperimentVerdict::Violated
    } else if reports.iter().all(|r| r.verdict == Verdict::Pass) {
        ExperimentVerdict::Consistent
    } else {
        ExperimentVerdict::Inconclusive
    };
    if let Some(r) = reports.iter().find(|r| r.verdict == Verdict::Fail) {
        let w = r.witness.as_ref();
        report.witness = Some(ExperimentWitness {
            statistic: r.id.as_str().to_string(),
            value: w.map_or(f64::NAN, |w| w.lhs),
            threshold: w.map_or(f64::NAN, |w| w.rhs),
            seed: None,
        });
    }
    report.summary.insert("bound_k".into(), model.triple.bound_k);
    report.summary.insert("sigma_lower".into(), model.triple.sigma_lower);
    report.conditions = reports;
    Ok(Outcome::new(report))
}

/// Paths at `numerics.h`; the per-seed table carries the running supremum and
/// the terminal value, and the second-moment bound decides the verdict.
fn simulate(config: &RunConfig, model: &Model) -> Result<Outcome> {
    let dynamics = dynamics(config, model)?;
    let (t, h) = (config.numerics.horizon, config.numerics.h);
    let seeds = seeds(config);
    let paths = map_seeds(&seeds, |seed| {
        let noise = sample_noise(&model.measure, t, h, seed)?;
        euler_solve(dynamics.as_ref(), &noise, model.x0)
    })?;
    let mut report = ExperimentReport::new("simulate", config.experiment.seed_base);
    let mut table = Table::new(vec!["sup_sq".into(), "terminal".into(), "jumps".into()]);
    for (&seed, p) in seeds.iter().zip(&paths) {
        table.push(seed, vec![running_sup_sq(p, t)?, p.terminal(), p.jumps.len() as f64]);
    }
    let (m, se) = moment_stat(&paths, t)?;
    let bound = moment_bound(model.x0 * model.x0, model.triple.bound_k, t);
    report.summary.insert("sup_sq_mean".into(), m);
    report.summary.insert("sup_sq_stderr".into(), se);
    report.summary.insert("moment_bound".into(), bound);
    let (tm, tse) = mean_stderr(&table.column(1));
    report.summary.insert("terminal_mean".into(), tm);
    report.summary.insert("terminal_stderr".into(), tse);
    report.verdict = if m + 3.0 * se <= bound {
        ExperimentVerdict::Consistent
    } else {
        report.witness = Some(ExperimentWitness {
            statistic: "sup_sq_mean".into(),
            value: m + 3.0 * se,
            threshold: bound,
            seed: None,
        });
        ExperimentVerdict::Violated
    };
    report.per_seed = table;
    let mut out = Outcome::new(report);
    let keep = config.experiment.write_paths.min(paths.len());
    for (seed, p) in seeds.iter().zip(&paths).take(keep) {
        if config.wants(Format::Csv) {
            let mut buf = Vec::new();
            p.write_csv(&mut buf).map_err(io)?;
            out.attach(format!("path_{seed}.csv"), buf);
        }
        if config.output.dump_noise {
            let noise = sample_noise(&model.measure, t, h, *seed)?;
            let mut buf = Vec::new();
            noise.write_dump(&mut buf).map_err(io)?;
            out.attach(format!("noise_{seed}.txt"), buf);
        }
    }
    Ok(out)
}

/// Brownian checks of the driving martingale read on the intrinsic clock.
fn timechange(config: &RunConfig, model: &Model) -> Result<Outcome> {
    let dynamics = dynamics(config, model)?;
    let (t, h) = (config.numerics.horizon, config.numerics.h);
    let seeds = seeds(config);
    let per = map_seeds(&seeds, |seed| {
        let noise = sample_noise(&model.measure, t, h, seed)?;
        let path = euler_solve(dynamics.as_ref(), &noise, model.x0)?;
        let tc = compute_tau(&path, dynamics.as_ref())?;
        Ok((tc.total(), driving_martingale(&path, &tc, dynamics.as_ref())))
    })?;
    let clock = per.iter().map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
    let paths: Vec<_> = per.iter().map(|(_, w)| w.clone()).collect();
    let thresholds = BmThresholds { ks_p_value: config.experiment.alpha, ..BmThresholds::default() };
    let bm = verify_bm(&paths, clock, thresholds)?;
    let mut report = ExperimentReport::new("timechange", config.experiment.seed_base);
    let mut table = Table::new(vec!["tau_total".into(), "qv".into(), "w_at_clock".into()]);
    for (&seed, (c, w)) in seeds.iter().zip(&per) {
        table.push(seed, vec![*c, w.quadratic_variation(clock), w.at(clock)]);
    }
    report.summary.insert("clock".into(), clock);
    report.summary.insert("mean_qv".into(), bm.mean_qv);
    report.summary.insert("qv_relative_error".into(), bm.qv_relative_error);
    report.summary.insert("ks_statistic".into(), bm.ks.statistic);
    report.summary.insert("ks_p_value".into(), bm.ks.p_value);
    report.summary.insert("lag1_correlation".into(), bm.lag1_correlation);
    report.verdict = if bm.pass {
        ExperimentVerdict::Consistent
    } else {
        let (statistic, value, threshold) = if bm.qv_relative_error >= thresholds.qv_relative_error {
            ("qv_relative_error", bm.qv_relative_error, thresholds.qv_relative_error)
        } else {
            ("ks_p_value", bm.ks.p_value, thresholds.ks_p_value)
        };
        report.witness = Some(ExperimentWitness { statistic: statistic.into(), value, threshold, seed: None });
        ExperimentVerdict::Violated
    };
    report.per_seed = table;
    Ok(Outcome::new(report))
}

/// Occupation and Tanaka estimates at each level; they should agree within
/// three joint standard errors.
fn localtime(config: &RunConfig, model: &Model) -> Result<Outcome> {
    let dynamics = dynamics(config, model)?;
    let (t, h, eps) = (config.numerics.horizon, config.numerics.h, config.eps());
    let levels = &config.experiment.levels;
    if levels.is_empty() {
        return Err(Error::Configuration("experiment.levels is empty".into()));
    }
    let seeds = seeds(config);
    let per = map_seeds(&seeds, |seed| {
        let noise = sample_noise(&model.measure, t, h, seed)?;
        let path = euler_solve(dynamics.as_ref(), &noise, model.x0)?;
        let sigma = sigma_along(&path, dynamics.as_ref());
        levels
            .iter()
            .map(|&a| Ok((occupation_local_time(&path, &sigma, a, eps, t)?, tanaka_local_time(&path, a, t)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut report = ExperimentReport::new("localtime", config.experiment.seed_base);
    let mut columns = Vec::new();
    for a in levels {
        columns.push(format!("occupation_a{a}"));
        columns.push(format!("tanaka_a{a}"));
    }
    let mut table = Table::new(columns);
    for (&seed, row) in seeds.iter().zip(&per) {
        table.push(seed, row.iter().flat_map(|(o, k)| [o.value, k.value]).collect());
    }
    let mut batch: Vec<LocalTimeEstimate> = Vec::new();
    let mut agree = true;
    for (k, &a) in levels.iter().enumerate() {
        let occ: Vec<_> = per.iter().map(|r| r[k].0).collect();
        let tan: Vec<_> = per.iter().map(|r| r[k].1).collect();
        let (o, n) = (batch_estimate(&occ)?, batch_estimate(&tan)?);
        let gap = (o.value - n.value).abs();
        let joint = (o.stderr.unwrap_or(0.0).powi(2) + n.stderr.unwrap_or(0.0).powi(2)).sqrt();
        report.summary.insert(format!("gap_a{a}"), gap);
        report.summary.insert(format!("joint_stderr_a{a}"), joint);
        agree &= gap <= 3.0 * joint;
        for (name, col) in [("occupation", 2 * k), ("tanaka", 2 * k + 1)] {
            let xs = table.column(col);
            let (mean, stderr) = mean_stderr(&xs);
            report.levels.push(LevelStat {
                statistic: format!("{name}_a{a}"),
                h,
                level: config.numerics.n,
                median: median(&xs),
                mean,
                stderr,
                count: xs.len(),
            });
        }
        batch.push(o);
        batch.push(n);
    }
    report.summary.insert("eps".into(), eps);
    report.verdict = if agree { ExperimentVerdict::Consistent } else { ExperimentVerdict::Inconclusive };
    if !agree {
        report.notes.push("occupation and Tanaka estimates differ by more than 3 joint standard errors".into());
    }
    report.per_seed = table;
    let mut out = Outcome::new(report);
    if config.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_estimates_csv(&batch, &mut buf).map_err(io)?;
        out.attach("localtime_estimates.csv".into(), buf);
    }
    Ok(out)
}

fn resolutions(config: &RunConfig) -> Vec<Resolution> {
    config
        .experiment
        .resolutions
        .iter()
        .map(|&h| if config.experiment.mollify { Resolution::tied(h) } else { Resolution::raw(h) })
        .collect()
}

fn pathwise(config: &RunConfig, model: &Model) -> Result<ExperimentReport> {
    pathwise_experiment(
        &model.triple,
        &model.measure,
        model.x0,
        config.numerics.horizon,
        &resolutions(config),
        &seeds(config),
    )
}

fn sampler(kind: Sampler, config: &RunConfig, model: &Model) -> Result<Box<dyn MarginalSampler>> {
    let (t, h) = (config.numerics.horizon, config.numerics.h);
    Ok(match kind {
        Sampler::Euler => Box::new(DirectEuler::new(model, h, t, config.numerics.n)?),
        Sampler::Timechanged => Box::new(TimeChangedEuler::new(model, h, t)?),
    })
}

/// Sampler B draws from the seed block right after A's.
fn weak(config: &RunConfig, model: &Model) -> Result<ExperimentReport> {
    let a = sampler(config.experiment.sampler_a, config, model)?;
    let mut shifted = model.clone();
    shifted.x0 += config.experiment.shift_b;
    let b = sampler(config.experiment.sampler_b, config, &shifted)?;
    let n = config.experiment.n_paths;
    let base = config.experiment.seed_base;
    weak_experiment(a.as_ref(), b.as_ref(), &config.times(), n, base, base + n as u64, config.experiment.alpha)
}

fn maximum(config: &RunConfig, model: &Model) -> Result<ExperimentReport> {
    let mut mc = MaximumConfig::tied(config.numerics.horizon, config.experiment.resolutions.clone());
    mc.bandwidth_scale = config.experiment.bandwidth_scale;
    maximum_experiment(&model.triple, &model.measure, model.x0, &mc, &seeds(config))
}

fn risk(config: &RunConfig) -> Result<Outcome> {
    let params = config.refracted_params()?;
    let x0 = config.experiment.capital.or(config.model.x0).unwrap_or(1.5);
    let (t, h) = (config.numerics.horizon, config.numerics.h);
    let outs = outcomes(&params, x0, t, h, &seeds(config))?;
    let mut report = ExperimentReport::new("risk", config.experiment.seed_base);
    let (psi, psi_se) = ruin_of(&outs);
    report.summary.insert("capital".into(), x0);
    report.summary.insert("ruin_probability".into(), psi);
    report.summary.insert("ruin_stderr".into(), psi_se);
    if params.delta() >= 0.0 {
        let (d, d_se) = dividend_of(&params, &outs);
        report.summary.insert("dividend".into(), d);
        report.summary.insert("dividend_stderr".into(), d_se);
    } else {
        report.notes.push(format!("mu2 - mu1 = {} is negative; no dividend statistic", params.delta()));
    }
    report.verdict = ExperimentVerdict::Consistent;
    let mut out = Outcome::new(report);
    if config.wants(Format::Csv) {
        let mut buf = Vec::new();
        write_outcomes_csv(&outs, &mut buf).map_err(io)?;
        out.attach("risk_outcomes.csv".into(), buf);
    }
    Ok(out)
}
