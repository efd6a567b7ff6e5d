//! Command-line interface. Each subcommand writes the same files `run` writes
//! for that stage, so a stage rerun from dumps can be diffed against a full run.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mimicry_core::matching::MatchedPair;
use mimicry_core::model::{Demographics, TransactionLog};
use mimicry_core::sim;
use rayon::prelude::*;

use crate::analysis::{self, DyadStage, Settings};
use crate::config::RunConfig;
use crate::io;
use crate::plot;
use crate::report::{self, Results};
use crate::schema;

#[derive(Debug, Parser)]
#[command(name = "mimicry", version, about = "Purchase-mimicry analysis of point-of-sale queues")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit with status 3 when any matched item fails the balance check.
    #[arg(long, global = true)]
    pub require_balance: bool,
    /// Transactions file; overrides the config.
    #[arg(long, global = true)]
    pub transactions: Option<PathBuf>,
    /// Item catalog; overrides the config.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// Demographics file; overrides the config.
    #[arg(long, global = true)]
    pub demographics: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic log with known mimicry effects.
    Simulate {
        /// Write transactions as JSON lines instead of CSV.
        #[arg(long)]
        jsonl: bool,
    },
    /// Validate a log and write it in canonical form.
    Ingest,
    /// Extract dyads and per-cell context.
    Dyads,
    /// Build matched pairs for every selected addition.
    Match {
        #[arg(long)]
        dyads: Option<PathBuf>,
    },
    /// Risk difference, risk ratio and McNemar test per item.
    Estimate {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Rerun matching and estimation with randomized partners.
    Baseline {
        #[arg(long)]
        dyads: Option<PathBuf>,
    },
    /// Rosenbaum bounds and their amplification.
    Sensitivity {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Effect by queue delay.
    Dose {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Test whether the effect depends on queue order.
    Coordinate {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Train the status classifier and predict unlabelled persons.
    InferStatus,
    /// The whole pipeline: results.json, tables and plots.
    Run,
    /// Redraw plots from a results file.
    Plot {
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

/// Exit code for a balance failure under `--require-balance`.
pub const EXIT_UNBALANCED: i32 = 3;

#[derive(Debug)]
pub struct Unbalanced(pub Vec<String>);

impl std::fmt::Display for Unbalanced {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "balance check failed for: {}", self.0.join(", "))
    }
}

impl std::error::Error for Unbalanced {}

/// Config from `--config` (or defaults) with command-line overrides applied.
pub fn resolve_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &g.out {
        cfg.output.dir = o.clone();
    }
    for (slot, flag) in [
        (&mut cfg.input.transactions, &g.transactions),
        (&mut cfg.input.catalog, &g.catalog),
        (&mut cfg.input.demographics, &g.demographics),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(cfg)
}

pub fn init_threads(n: Option<usize>) {
    if let Some(n) = n {
        // a second call (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    init_threads(cli.global.threads);
    let cfg = resolve_config(&cli.global)?;
    let out = cfg.output.dir.clone();
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { jsonl } => simulate(&cfg, &out, *jsonl),
        Command::Plot { results } => {
            let path = results.clone().unwrap_or_else(|| out.join("results.json"));
            let r: Results = io::read_json(&path)?;
            emit_plots(&r, &out)
        }
        cmd => {
            let s = Settings::new(&cfg)?;
            let log = load_log(&cfg)?;
            match cmd {
                Command::Ingest => {
                    io::write_transactions(&log, &out.join("transactions.csv"))?;
                    io::write_json(&report::IngestJson::new(&log), &out.join("ingest.json"))
                }
                Command::Dyads => {
                    let stage = analysis::dyad_stage(&log, &s);
                    write_dyad_outputs(&log, &stage, &out)?;
                    io::write_json(&report::DyadsJson::new(&stage), &out.join("dyads.json"))
                }
                Command::Match { dyads } => {
                    let stage = dyad_stage(&log, &s, dyads.as_deref())?;
                    let matches = analysis::match_stage(&log, &stage, &s);
                    write_match_outputs(&log, &matches, &out)?;
                    check_balance(g.require_balance, &matches)
                }
                Command::Estimate { pairs } => {
                    let groups = pair_groups(&log, &s, pairs.as_deref())?;
                    report::write_estimates(
                        &report::estimate_rows(&analysis::estimate_stage(&log, &groups, &s)),
                        &out.join("estimates.csv"),
                    )
                }
                Command::Baseline { dyads } => {
                    let stage = dyad_stage(&log, &s, dyads.as_deref())?;
                    write_baseline(&analysis::baseline_stage(&log, &stage, &s), &out)
                }
                Command::Sensitivity { pairs } => {
                    let groups = pair_groups(&log, &s, pairs.as_deref())?;
                    let e = &s.estimation;
                    let rows = report::sensitivity_json(&analysis::sensitivity_stage(&log, &groups, &s), e.alpha, e.sidedness);
                    report::write_sensitivity(&rows, &out)
                }
                Command::Dose { pairs } => {
                    let groups = pair_groups(&log, &s, pairs.as_deref())?;
                    let dose = analysis::dose_stage(&log, &analysis::pooled(&groups), &s);
                    let json = report::DoseJson::new(&dose);
                    report::write_dose(&json, &out.join("dose.csv"))?;
                    dose.map(|_| ()).context("estimate: dose-response")
                }
                Command::Coordinate { pairs } => {
                    let groups = pair_groups(&log, &s, pairs.as_deref())?;
                    let r = analysis::coordination_stage(&log, &analysis::pooled(&groups), &s);
                    io::write_json(&report::CoordinationJson::new(&r), &out.join("coordination.json"))?;
                    r.map(|_| ()).context("baseline: coordination test")
                }
                Command::InferStatus => {
                    let demo = load_demographics(&cfg)?.context("infer: no demographics file with status labels")?;
                    let st = analysis::status_stage(&log, &demo, &s).context("infer")?;
                    write_status(&st, &out)?;
                    io::write_json(&report::StatusJson::new(&Ok::<_, String>(st)), &out.join("status.json"))
                }
                Command::Run => {
                    let demo = load_demographics(&cfg)?;
                    let results = run_pipeline(&log, demo.as_ref(), &s, &cfg, &out)?;
                    if g.require_balance && !results.balance_pass {
                        let failed = results
                            .items
                            .iter()
                            .filter(|i| i.balance.as_ref().is_some_and(|b| !b.pass))
                            .map(|i| i.item.clone())
                            .collect();
                        return Err(Unbalanced(failed).into());
                    }
                    Ok(())
                }
                Command::Simulate { .. } | Command::Plot { .. } => unreachable!(),
            }
        }
    }
}

pub fn load_log(cfg: &RunConfig) -> Result<TransactionLog> {
    let catalog = io::read_catalog(cfg.catalog()?)?;
    let log = io::read_transactions(cfg.transactions()?, &catalog)?;
    for e in log.rejected().iter().take(10) {
        eprintln!("model: rejected record: {e}");
    }
    if log.rejected().len() > 10 {
        eprintln!("model: {} more rejected records", log.rejected().len() - 10);
    }
    if log.warnings().count() > 0 {
        eprintln!(
            "model: {} basket entries with codes missing from the catalog, treated as other",
            log.warnings().count()
        );
    }
    Ok(log)
}

pub fn load_demographics(cfg: &RunConfig) -> Result<Option<Demographics>> {
    cfg.input.demographics.as_deref().map(io::read_demographics).transpose()
}

fn dyad_stage(log: &TransactionLog, s: &Settings, dump: Option<&Path>) -> Result<DyadStage> {
    Ok(match dump {
        Some(p) => DyadStage::from_dyads(log, io::read_dyads(log, p)?, s.dyads.addition_threshold),
        None => analysis::dyad_stage(log, s),
    })
}

fn pair_groups(log: &TransactionLog, s: &Settings, dump: Option<&Path>) -> Result<Vec<(mimicry_core::FocusItem, Vec<MatchedPair>)>> {
    Ok(match dump {
        Some(p) => analysis::group_pairs(&io::read_matched_pairs(log, p)?),
        None => {
            let stage = analysis::dyad_stage(log, s);
            analysis::match_stage(log, &stage, s).into_iter().map(|m| (m.item, m.set.pairs)).filter(|(_, p)| !p.is_empty()).collect()
        }
    })
}

fn check_balance(require: bool, matches: &[analysis::ItemMatch]) -> Result<()> {
    let failed: Vec<String> = matches
        .iter()
        .filter(|m| m.balance.as_ref().is_some_and(|b| !b.pass))
        .map(|m| m.item.name().to_string())
        .collect();
    if require && !failed.is_empty() {
        return Err(Unbalanced(failed).into());
    }
    Ok(())
}

fn write_dyad_outputs(log: &TransactionLog, stage: &DyadStage, out: &Path) -> Result<()> {
    io::write_context(log, &stage.context, &out.join("context.csv"))?;
    io::write_dyads(log, &stage.dyads, &out.join("dyads.csv"))?;
    io::write_additions(&stage.frequencies, &out.join("additions.csv"))
}

fn write_match_outputs(log: &TransactionLog, matches: &[analysis::ItemMatch], out: &Path) -> Result<()> {
    io::write_matched_pairs(log, matches.iter().flat_map(|m| &m.set.pairs), &out.join("matched_pairs.csv"))?;
    report::write_matching(matches, &out.join("matching.csv"))?;
    report::write_balance(matches, &out.join("balance.csv"))
}

fn write_baseline(b: &analysis::BaselineStage, out: &Path) -> Result<()> {
    report::write_estimates(&report::estimate_rows(&b.estimates), &out.join("baseline.csv"))?;
    report::write_matching(&b.matches, &out.join("baseline_matching.csv"))
}

fn write_status(st: &analysis::StatusStage, out: &Path) -> Result<()> {
    report::write_model(&st.model, &out.join("status_model.json"))?;
    report::write_predictions(&st.predictions, &out.join("predictions.csv"))
}

/// Simulates under the config's `[simulation]` section with the run seed.
pub fn simulate(cfg: &RunConfig, out: &Path, jsonl: bool) -> Result<()> {
    let mut sc = cfg.simulation.clone();
    sc.seed = cfg.seed()?;
    let output = simulate_parallel(&sc)?;
    let log = output.log();
    if jsonl {
        io::write_transactions_jsonl(&log, &out.join("transactions.jsonl"))?;
    } else {
        io::write_transactions(&log, &out.join("transactions.csv"))?;
    }
    io::write_catalog(&sim::catalog(), &out.join("catalog.csv"))?;
    io::write_demographics(&output.demographics(), &out.join("demographics.csv"))?;
    io::write_json(&output.truth, &out.join("ground_truth.json"))?;
    io::write_json(&sc, &out.join("simulation.json"))?;
    eprintln!(
        "sim: {} transactions, {} persons, {} pairs, {} visits dropped",
        log.len(),
        log.person_count(),
        output.population.pairs.len(),
        output.dropped_visits
    );
    Ok(())
}

/// Days in parallel; identical to the sequential simulator.
pub fn simulate_parallel(sc: &sim::SimulationConfig) -> Result<sim::SimOutput> {
    let pop = sim::generate_population(sc).context("sim")?;
    let days: Vec<sim::DayOutput> = sc
        .calendar()
        .into_par_iter()
        .enumerate()
        .map(|(i, date)| sim::simulate_day(&pop, sc, date, i))
        .collect();
    Ok(sim::assemble(sc, pop, days))
}

pub fn emit_plots(r: &Results, out: &Path) -> Result<()> {
    let plots = [
        ("forest.svg", plot::forest_svg(&plot::forest_rows(r))),
        ("dose.svg", r.dose_response.as_ref().and_then(plot::dose_svg)),
        ("sensitivity.svg", plot::sensitivity_svg(&r.sensitivity)),
    ];
    for (name, svg) in plots {
        match svg {
            Some(svg) => io::write_text(&svg, &out.join(name))?,
            None => eprintln!("plot: nothing to draw for {name}, skipped"),
        }
    }
    Ok(())
}

/// The full pipeline. Writes every table, results.json (schema-checked) and plots.
pub fn run_pipeline(
    log: &TransactionLog,
    demographics: Option<&Demographics>,
    s: &Settings,
    cfg: &RunConfig,
    out: &Path,
) -> Result<Results> {
    let a = &s.analyses;
    let mut notices = Vec::new();
    let stage = analysis::dyad_stage(log, s);
    if cfg.output.dumps {
        write_dyad_outputs(log, &stage, out)?;
    }
    let matches = analysis::match_stage(log, &stage, s);
    write_match_outputs(log, &matches, out)?;
    if !cfg.output.dumps {
        std::fs::remove_file(out.join("matched_pairs.csv")).ok();
    }
    for m in matches.iter().filter(|m| m.set.is_empty()) {
        notices.push(format!("{}: no matched pairs", m.item.name()));
    }
    let groups: Vec<_> = matches.iter().filter(|m| !m.set.is_empty()).map(|m| (m.item, m.set.pairs.clone())).collect();
    let estimates = analysis::estimate_stage(log, &groups, s);
    report::write_estimates(&report::estimate_rows(&estimates), &out.join("estimates.csv"))?;
    let items = report::item_results(&matches, &estimates);
    let pooled = analysis::pooled(&groups);

    let baseline = if a.baseline {
        let b = analysis::baseline_stage(log, &stage, s);
        write_baseline(&b, out)?;
        Some(report::BaselineJson::from(&b))
    } else {
        None
    };

    let sensitivity = if a.sensitivity {
        let e = &s.estimation;
        let rows = report::sensitivity_json(&analysis::sensitivity_stage(log, &groups, s), e.alpha, e.sidedness);
        report::write_sensitivity(&rows, out)?;
        rows
    } else {
        Vec::new()
    };

    let dose_response = a.dose_response.then(|| {
        let d = report::DoseJson::new(&analysis::dose_stage(log, &pooled, s));
        if let report::DoseJson::Skipped { reason } = &d {
            notices.push(format!("dose-response skipped: {reason}"));
        }
        d
    });
    if let Some(d) = &dose_response {
        report::write_dose(d, &out.join("dose.csv"))?;
    }

    let coordination = a.coordination.then(|| {
        let c = report::CoordinationJson::new(&analysis::coordination_stage(log, &pooled, s));
        if let report::CoordinationJson::Skipped { reason } = &c {
            notices.push(format!("coordination test skipped: {reason}"));
        }
        c
    });
    if let Some(c) = &coordination {
        io::write_json(c, &out.join("coordination.json"))?;
    }

    let status = match (a.infer_status, demographics) {
        (false, _) => None,
        (true, None) => Some(Err("no demographics file".to_string())),
        (true, Some(d)) => Some(analysis::status_stage(log, d, s).map_err(|e| e.to_string())),
    };
    if let Some(Ok(st)) = &status {
        write_status(st, out)?;
    }
    let status_inference = status.as_ref().map(report::StatusJson::new);
    if let Some(report::StatusJson::Skipped { reason }) = &status_inference {
        notices.push(format!("status inference skipped: {reason}"));
    }

    let subgroups = if a.subgroups.is_empty() {
        Vec::new()
    } else {
        let completed = match &status {
            Some(Ok(st)) => Some(&st.completed),
            _ => demographics,
        };
        let people = completed.map(|d| d.resolve(log)).transpose().context("model: demographics")?;
        let rows = report::subgroup_json(&analysis::subgroup_stage(log, people.as_ref(), &stage.dyads, &pooled, s));
        report::write_subgroups(&rows, &out.join("subgroups.csv"))?;
        rows
    };

    let anchor_mimicry = if a.anchor_mimicry {
        let rows = report::anchor_json(&analysis::anchor_stage(log, &stage, s));
        let est: Vec<report::EstimateRow> = rows.iter().filter_map(|r| r.estimate.clone()).collect();
        report::write_estimates(&est, &out.join("anchor.csv"))?;
        rows
    } else {
        Vec::new()
    };

    let balance_pass = items.iter().all(|i| i.balance.as_ref().is_none_or(|b| b.pass));
    let results = Results {
        format_version: report::FORMAT_VERSION,
        seed: s.seed,
        settings: report::SettingsJson::from(s),
        ingest: report::IngestJson::new(log),
        dyads: report::DyadsJson::new(&stage),
        items,
        baseline,
        sensitivity,
        dose_response,
        coordination,
        subgroups,
        anchor_mimicry,
        status_inference,
        balance_pass,
        notices,
    };
    let doc = serde_json::to_value(&results)?;
    schema::validate_results(&doc)?;
    io::write_json(&doc, &out.join("results.json"))?;
    if cfg.output.plots {
        emit_plots(&results, out)?;
    }
    for n in &results.notices {
        eprintln!("run: {n}");
    }
    Ok(results)
}

/// Parses arguments, runs, and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<Unbalanced>().is_some() {
        EXIT_UNBALANCED
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_flags_anywhere() {
        let cli = Cli::try_parse_from(["mimicry", "estimate", "--seed", "3", "--out", "x", "--threads", "2", "--require-balance"]).unwrap();
        assert_eq!(cli.global.seed, Some(3));
        assert!(cli.global.require_balance);
        let cfg = resolve_config(&cli.global).unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.output.dir, PathBuf::from("x"));
    }

    #[test]
    fn balance_failure_has_its_own_code() {
        let e: anyhow::Error = Unbalanced(vec!["dessert".into()]).into();
        assert_eq!(exit_code(&e), EXIT_UNBALANCED);
        assert_eq!(exit_code(&e.context("run")), EXIT_UNBALANCED);
        assert_eq!(exit_code(&anyhow::anyhow!("io: boom")), 1);
    }

    #[test]
    fn missing_seed_fails() {
        let code = main_with_args(["mimicry", "dyads", "--transactions", "/nonexistent.csv"]);
        assert_eq!(code, 1);
    }
}
