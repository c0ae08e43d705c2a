use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use gramlab::metrics::metric_report;
use gramlab::moments::{second_moment, GramTuple};
use gramlab::priors::ParamSet;
use gramlab::real::task_rng;
use gramlab::recovery::{
    cryoem_toy, noise_stability_experiment, recover_from_gram, relative_error, sample_complexity_experiment,
    signal_to_blocks, CryoOptions, GroupAction, NoiseRow, PriorKind, RecoveryOptions, SampleComplexityRow,
};
use gramlab::repspec::{cryoem_k, dimension_gate, GateKind};
use gramlab::signal::Signal;
use gramlab::stability::{
    counterexample_affine_plane, counterexample_line_segment, estimate_lipschitz_bounds,
    hull_transversality_check_with, transversality_search_set_with, PlaneRow, SearchConfig, SegmentRow,
};
use gramlab::RepSpec;
use nalgebra::DVector;
use serde::Serialize;

use crate::args::{parse_list, parse_spec, PriorArgs};
use crate::output::{Run, Table};
use crate::row;

#[derive(Debug, Clone, Args, Serialize)]
pub struct KBoundArgs {
    /// Representation spec: JSON, `znN`, `cryo:L:R` or a JSON file.
    #[arg(long, conflicts_with_all = ["zn", "cryo"])]
    pub spec: Option<String>,
    /// `Z_N` acting on `R^N` (N even).
    #[arg(long, conflicts_with = "cryo")]
    pub zn: Option<usize>,
    /// Cryo-EM spec with bandlimit L and multiplicity R.
    #[arg(long, num_args = 2, value_names = ["L", "R"])]
    pub cryo: Option<Vec<usize>>,
    /// Prior dimension for the gates.
    #[arg(long)]
    pub m: Option<u64>,
}

pub fn cmd_k_bound(a: &KBoundArgs) -> anyhow::Result<ExitCode> {
    let (spec, closed) = match (&a.spec, a.zn, &a.cryo) {
        (Some(s), _, _) => (parse_spec(s)?, None),
        (_, Some(n), _) => (RepSpec::zn(n)?, None),
        (_, _, Some(lr)) => {
            let (l, r) = (lr[0], lr[1]);
            (RepSpec::cryoem(l, r)?, cryoem_k(l, r).ok())
        }
        _ => bail!("one of --spec, --zn or --cryo is required"),
    };
    let k = spec.effective_dim();
    println!("spec {spec}");
    println!("dim_V {}", spec.ambient_dim());
    println!("k_H {}", spec.max_orbit_dim());
    println!("K {k}");
    if let Some(c) = closed {
        println!("K_closed_form {c}");
        if c != k {
            bail!("closed-form K {c} disagrees with dim V - k(H) = {k}");
        }
    }
    if let Some(m) = a.m {
        println!("M {m}");
        for g in GateKind::ALL {
            let gate = dimension_gate(m, &spec, g);
            let verdict = if gate.passes { "pass" } else { "fail" };
            println!("gate {} {} < {} {verdict}", g.label(), g.lhs(m), k);
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub spec: Option<String>,
    /// Number of random Gaussian pairs.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON signal files; when given, only this pair is evaluated.
    #[arg(long, requires = "y")]
    pub x: Option<String>,
    #[arg(long, requires = "x")]
    pub y: Option<String>,
}

fn read_signal(path: &str) -> anyhow::Result<Signal<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading signal {path}"))?;
    Ok(Signal::from_json(&text)?)
}

pub fn cmd_metrics(a: &MetricsArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let mut run = Run::new(out, "metrics", a, a.seed)?;
    let pairs: Vec<(Signal<f64>, Signal<f64>)> = match (&a.x, &a.y) {
        (Some(x), Some(y)) => vec![(read_signal(x)?, read_signal(y)?)],
        _ => {
            let seed = a.seed.context("--seed is required for random pairs")?;
            let spec = parse_spec(a.spec.as_deref().context("--spec is required for random pairs")?)?;
            (0..a.pairs)
                .map(|i| {
                    let mut r = task_rng(seed, i as u64);
                    (Signal::random(&spec, &mut r), Signal::random(&spec, &mut r))
                })
                .collect()
        }
    };
    let mut table = Table::new("pair,d_sigma,d_H,d_gram,gram_sqrt_dist,derksen_ok");
    let mut violations = 0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let m = metric_report(x, y)?;
        violations += usize::from(!m.derksen_ok);
        table.row(row![i, m.d_sigma, m.d_h, m.d_gram, m.gram_sqrt_dist, m.derksen_ok]);
    }
    run.csv("metrics.csv", table)?;
    run.finish()?;
    println!("pairs {} sandwich_violations {violations}", pairs.len());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LipschitzArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// Coordinate-descent sweeps for each refined worst pair.
    #[arg(long, default_value_t = 20)]
    pub refine: usize,
    #[arg(long)]
    pub seed: u64,
}

pub fn cmd_lipschitz(a: &LipschitzArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let mut run = Run::new(out, "lipschitz", a, Some(a.seed))?;
    let prior = a.prior.build(a.seed)?;
    let est = estimate_lipschitz_bounds(&prior, a.pairs, a.refine, &mut task_rng(a.seed, 0))?;
    let mut table = Table::new("c1_hat,c2_hat,n_pairs_evaluated,n_degenerate_skipped");
    table.row(row![est.c1_hat, est.c2_hat, est.n_pairs_evaluated, est.n_degenerate_skipped]);
    run.csv("lipschitz.csv", table)?;
    run.json("lipschitz.json", &est)?;
    run.finish()?;
    println!("c1_hat {:?}", est.c1_hat);
    println!("c2_hat {:?}", est.c2_hat);
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Pairs from the prior itself.
    Set,
    /// Pairs from the hull pieces (subspace search for linear priors).
    Hull,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransversalityArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value_t = 1000)]
    pub budget: usize,
    #[arg(long, value_enum, default_value_t = SearchMode::Hull)]
    pub mode: SearchMode,
    /// Largest `d_H` accepted for a witness.
    #[arg(long, default_value_t = 1e-7)]
    pub dh_tol: f64,
    /// Smallest `d_σ` accepted for a witness.
    #[arg(long, default_value_t = 1e-3)]
    pub dsigma_floor: f64,
    #[arg(long)]
    pub seed: u64,
}

pub fn cmd_transversality(a: &TransversalityArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let mut run = Run::new(out, "transversality", a, Some(a.seed))?;
    let prior = a.prior.build(a.seed)?;
    let cfg = SearchConfig {
        dh_tol: a.dh_tol,
        dsigma_floor: a.dsigma_floor,
        ..SearchConfig::default()
    };
    let mut rng = task_rng(a.seed, 0);
    let v = match a.mode {
        SearchMode::Set => transversality_search_set_with(&prior, a.budget, &cfg, &mut rng),
        SearchMode::Hull => hull_transversality_check_with(&prior, a.budget, &cfg, &mut rng),
    };
    let kind = if v.is_violation() { "violation_found" } else { "no_violation_found" };
    let (dh, ds) = v.witness.as_ref().map_or((f64::NAN, f64::NAN), |w| (w.d_h, w.d_sigma));
    let mut table = Table::new("verdict,budget_used,starts,best_objective,d_h,d_sigma");
    table.row(row![kind, v.stats.budget_used, v.stats.starts, v.stats.best_objective, dh, ds]);
    run.csv("transversality.csv", table)?;
    run.json("transversality.json", &v)?;
    run.finish()?;
    println!("verdict {kind}");
    Ok(if v.is_violation() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    Segment,
    Plane,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CounterexampleArgs {
    #[arg(long, value_enum)]
    pub which: Example,
    /// Segment parameters y in (0, 1].
    #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
    pub grid: String,
    /// Plane parameters a ≥ 1.
    #[arg(long, default_value = "1,10,100")]
    pub a: String,
}

pub fn cmd_counterexample(a: &CounterexampleArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let mut run = Run::new(out, "counterexample", a, None)?;
    match a.which {
        Example::Segment => {
            let t = counterexample_line_segment(&parse_list::<f64>(&a.grid)?)?;
            let mut table = Table::new(SegmentRow::<f64>::CSV_HEADER);
            for r in &t.rows {
                table.row(row![r.y, r.d_sigma, r.d_h_bound, r.d_h, r.ratio, r.lipschitz_ratio]);
            }
            run.csv("segment.csv", table)?;
            println!("ratio_monotone {}", t.ratio_monotone);
            println!("quadratic_bound_holds {}", t.quadratic_bound_holds);
        }
        Example::Plane => {
            let t = counterexample_affine_plane(&parse_list::<f64>(&a.a)?)?;
            let mut table = Table::new(PlaneRow::<f64>::CSV_HEADER);
            for r in &t.rows {
                table.row(row![r.a, r.d_sigma, r.d_h, r.d_h_procrustes, r.ratio]);
            }
            run.csv("plane.csv", table)?;
            println!("d_sigma_matches {}", t.d_sigma_matches);
            println!("d_h_is_two {}", t.d_h_is_two);
            println!("ratio_linear {}", t.ratio_linear);
        }
    }
    run.finish()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecoveryFlags {
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Converged when the misfit is at most `tol · ‖G‖²`.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

impl RecoveryFlags {
    fn options(&self) -> RecoveryOptions {
        RecoveryOptions {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

fn noise_table(rows: &[NoiseRow]) -> Table {
    let mut t = Table::new(NoiseRow::CSV_HEADER);
    for r in rows {
        t.row(row![r.delta, r.trial, r.relative_error, r.objective, r.converged]);
    }
    t
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub recovery: RecoveryFlags,
    /// Ground truths drawn from the prior.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    /// Gram-root perturbation norms for a noise-stability table.
    #[arg(long)]
    pub deltas: Option<String>,
    /// Trials per delta.
    #[arg(long, default_value_t = 5)]
    pub noise_trials: usize,
    /// Recover from this JSON Gram tuple instead of sampled truths.
    #[arg(long)]
    pub gram: Option<String>,
    #[arg(long)]
    pub seed: u64,
}

pub fn cmd_recover(a: &RecoverArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let prior = a.prior.build(a.seed)?;
    let opts = a.recovery.options();
    let mut run = Run::new(out, "recover", a, Some(a.seed))?;
    let mut table = Table::new("trial,relative_error,objective,restarts_used,converged,iterations");

    if let Some(path) = &a.gram {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading Gram tuple {path}"))?;
        let g = GramTuple::<f64>::from_json(&text)?;
        let res = recover_from_gram(&g, &prior, &opts, None, &mut task_rng(a.seed, 1))?;
        table.row(row![0usize, f64::NAN, res.objective, res.restarts_used, res.converged, res.iterations]);
        run.json("estimate.json", &res.estimate)?;
    } else {
        let mut ok = 0;
        for t in 0..a.trials {
            let truth = prior.decode_signal(&prior.sample_params(&mut task_rng(a.seed, 2 * t as u64 + 2)));
            let g = second_moment(&truth);
            let res = recover_from_gram(&g, &prior, &opts, None, &mut task_rng(a.seed, 2 * t as u64 + 3))?;
            let err = relative_error(&res.estimate, &truth)?;
            ok += usize::from(res.converged);
            table.row(row![t, err, res.objective, res.restarts_used, res.converged, res.iterations]);
        }
        println!("converged {ok}/{}", a.trials);
    }
    run.csv("recover.csv", table)?;

    if let Some(d) = &a.deltas {
        let deltas = parse_list::<f64>(d)?;
        let theta = prior.sample_params(&mut task_rng(a.seed, 2));
        let rep = noise_stability_experiment(&prior, &theta, &deltas, a.noise_trials, &opts, &mut task_rng(a.seed, 1))?;
        run.csv("noise.csv", noise_table(&rep.rows))?;
        println!("noise_slope {:?}", rep.slope);
    }
    run.finish()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionChoice {
    Block,
    Zn,
    Identity,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MraArgs {
    /// Representation spec for block actions.
    #[arg(long, conflicts_with = "zn")]
    pub spec: Option<String>,
    /// Time-domain length N for circular shifts.
    #[arg(long)]
    pub zn: Option<usize>,
    /// Group action. Defaults to `zn` with `--zn`, `block` otherwise.
    #[arg(long, value_enum)]
    pub action: Option<ActionChoice>,
    #[arg(long, default_value = "1")]
    pub sigmas: String,
    #[arg(long, default_value = "1000,4000")]
    pub ns: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// JSON signal (block form) or a JSON array of time samples with `--zn`.
    #[arg(long)]
    pub signal: Option<String>,
    #[arg(long)]
    pub seed: u64,
}

pub fn cmd_mra(a: &MraArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let mut run = Run::new(out, "mra", a, Some(a.seed))?;
    let (spec, action) = match (a.zn, &a.spec) {
        (Some(n), _) => (RepSpec::zn(n)?, a.action.unwrap_or(ActionChoice::Zn)),
        (None, Some(s)) => (parse_spec(s)?, a.action.unwrap_or(ActionChoice::Block)),
        _ => bail!("one of --zn or --spec is required"),
    };
    let action = match action {
        ActionChoice::Block => GroupAction::BlockAction,
        ActionChoice::Zn => GroupAction::ZnCirculant,
        ActionChoice::Identity => GroupAction::Identity,
    };
    let x = match &a.signal {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading signal {path}"))?;
            if a.zn.is_some() {
                let v: Vec<f64> = serde_json::from_str(&text).context("parsing time samples")?;
                signal_to_blocks(&DVector::from_vec(v))?
            } else {
                Signal::from_json(&text)?
            }
        }
        None => Signal::random(&spec, &mut task_rng(a.seed, 0)),
    };
    if x.spec() != &spec {
        bail!("signal spec {} does not match {spec}", x.spec());
    }
    let rows = sample_complexity_experiment(
        &x,
        action,
        &parse_list::<f64>(&a.sigmas)?,
        &parse_list::<usize>(&a.ns)?,
        a.trials,
        &mut task_rng(a.seed, 1),
    )?;
    let mut table = Table::new(SampleComplexityRow::CSV_HEADER);
    for r in &rows {
        table.row(row![r.sigma, r.n, r.trials, r.mean_error, r.std_error]);
    }
    run.csv("mra.csv", table)?;
    run.finish()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CryoPrior {
    Linear,
    Sparse,
    Relu,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CryoemArgs {
    /// Bandlimit L.
    #[arg(long)]
    pub l: usize,
    /// Radial multiplicity R.
    #[arg(long)]
    pub r: usize,
    #[arg(long, value_enum, default_value_t = CryoPrior::Linear)]
    pub prior: CryoPrior,
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub recovery: RecoveryFlags,
    #[arg(long, default_value = "0.001,0.01,0.1")]
    pub deltas: String,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    /// Run even when R < 2L + 1.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub seed: u64,
}

pub fn cmd_cryoem(a: &CryoemArgs, out: &Path) -> anyhow::Result<ExitCode> {
    let mut run = Run::new(out, "cryoem", a, Some(a.seed))?;
    let kind = match a.prior {
        CryoPrior::Linear => PriorKind::Linear,
        CryoPrior::Sparse => PriorKind::Sparse,
        CryoPrior::Relu => PriorKind::Relu,
    };
    let opts = CryoOptions {
        recovery: a.recovery.options(),
        deltas: parse_list::<f64>(&a.deltas)?,
        trials: a.trials,
        seed: a.seed,
        force: a.force,
    };
    let rep = cryoem_toy(a.l, a.r, kind, a.m, &opts)?;
    let mut summary = Table::new("l,r,prior,m,ambient_dim,K,gate,gate_passes,exact_relative_error,exact_objective,exact_converged,noise_slope");
    summary.row(row![
        a.l,
        a.r,
        kind_label(kind),
        a.m,
        rep.ambient_dim,
        rep.k,
        rep.gate.gate_kind.label(),
        rep.gate.passes,
        rep.exact_relative_error,
        rep.exact_objective,
        rep.exact_converged,
        rep.noise_slope,
    ]);
    run.csv("cryoem.csv", summary)?;
    run.csv("cryoem_noise.csv", noise_table(&rep.noise_rows))?;
    run.json("cryoem.json", &rep)?;
    run.finish()?;
    println!("K {}", rep.k);
    println!(
        "gate {} {} < {} {}",
        rep.gate.gate_kind.label(),
        rep.gate.gate_kind.lhs(a.m as u64),
        rep.k,
        if rep.gate.passes { "pass" } else { "fail (outside theory)" }
    );
    println!("exact_relative_error {:?}", rep.exact_relative_error);
    Ok(ExitCode::SUCCESS)
}

fn kind_label(k: PriorKind) -> &'static str {
    match k {
        PriorKind::Linear => "linear",
        PriorKind::Sparse => "sparse",
        PriorKind::Relu => "relu",
    }
}
