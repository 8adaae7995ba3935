use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sar_harness::experiment::{compare, sweep, CompareSpec, ExperimentBase, Family, Report, SweepSpec};
use sar_harness::gen::{gen_scenario, BeliefKind, GenOverrides};
use sar_harness::render::render_trajectory;
use sar_harness::RunRecord;
use shrinking_pomcp::mission::{run_episode, EpisodeConfig, EpisodeResult, PlannerKind};
use shrinking_pomcp::scenario::Scenario;

/// Search-and-rescue planning experiments on gridded maps.
#[derive(Parser)]
#[command(name = "sarplan", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a random 400 m scenario file.
    GenScenario(GenArgs),
    /// Run one episode.
    Run(RunArgs),
    /// Shrinking planner over discount factors, alphas and belief kinds.
    Sweep(SweepArgs),
    /// All planners on identical scenarios.
    Compare(CompareArgs),
    /// Draw a scenario and optionally an episode as PNG.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenFlags {
    /// Number of sampled targets.
    #[arg(long)]
    targets: Option<usize>,
    /// Fixed target position `x,y` in metres; repeatable, replaces sampling.
    #[arg(long = "target", value_parser = parse_point)]
    fixed_targets: Vec<[f64; 2]>,
    /// Start position `x,y` in metres.
    #[arg(long, value_parser = parse_point)]
    start: Option<[f64; 2]>,
    #[arg(long)]
    no_fly_zones: Option<usize>,
    #[arg(long)]
    buildings: Option<usize>,
}

impl GenFlags {
    fn overrides(&self, default_targets: Option<usize>) -> GenOverrides {
        GenOverrides {
            targets: self.targets.or(default_targets),
            fixed_targets: (!self.fixed_targets.is_empty()).then(|| self.fixed_targets.clone()),
            start: self.start,
            no_fly_zones: self.no_fly_zones,
            buildings: self.buildings,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "one_peak")]
    belief: BeliefKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gen: GenFlags,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Planner, height and episode settings; unset flags keep their defaults.
#[derive(Args)]
struct EpisodeFlags {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    max_time_ms: Option<u64>,
    #[arg(long)]
    max_level: Option<usize>,
    #[arg(long)]
    p_epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    c_uct: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Points drawn per rollout destination cell.
    #[arg(long)]
    rollout_samples: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long)]
    delta_h: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long)]
    h_init: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    speed_mps: Option<f64>,
}

impl EpisodeFlags {
    fn apply(&self, mut ec: EpisodeConfig) -> EpisodeConfig {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { ec.$($field).+ = v; })*
            };
        }
        set!(
            max_iterations => cfg.max_iterations,
            max_level => cfg.max_level,
            gamma => cfg.gamma,
            c_uct => cfg.c_uct,
            max_depth => cfg.max_depth,
            alpha => cfg.alpha,
            rollout_samples => cfg.rollout.samples,
            tau => hc.tau,
            delta_h => hc.delta_h,
            h_max => hc.h_max,
            h_init => hc.h_init,
            max_epochs => max_epochs,
            speed_mps => speed_mps,
        );
        if self.max_time_ms.is_some() {
            ec.cfg.max_time_ms = self.max_time_ms;
        }
        if self.p_epsilon.is_some() {
            ec.cfg.p_epsilon = self.p_epsilon;
        }
        ec
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; without it one is generated from `--belief` and `--seed`.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "one_peak")]
    belief: BeliefKind,
    #[arg(long, default_value = "shrinking")]
    planner: PlannerKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gen: GenFlags,
    #[command(flatten)]
    episode: EpisodeFlags,
    /// Result record (JSON); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch event log, one JSON object per line.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Trajectory as CSV `x,y,z`.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// PNG plot of the episode.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Keep wall-clock timings in the result record.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ExperimentFlags {
    #[arg(long, value_delimiter = ',', default_values_t = BeliefKind::ALL)]
    beliefs: Vec<BeliefKind>,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Use this scenario for every run instead of the generated family.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    gen: GenFlags,
    #[command(flatten)]
    episode: EpisodeFlags,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for `results.tsv` and `summary.tsv`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Add wall-clock columns to the results table.
    #[arg(long)]
    timing: bool,
}

impl ExperimentFlags {
    fn base(&self) -> Result<ExperimentBase> {
        let family = match &self.scenario {
            Some(p) => Family::Fixed { scenario: load_scenario(p)? },
            None => Family::Generated { overrides: self.gen.overrides(Some(1)) },
        };
        Ok(ExperimentBase { family, episode: self.episode.apply(EpisodeConfig::default()), workers: self.workers })
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "dfs", value_delimiter = ',', default_values_t = [0.8, 0.9, 0.995])]
    discount_factors: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 10.0])]
    alphas: Vec<f64>,
    #[command(flatten)]
    common: ExperimentFlags,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_values_t = PlannerKind::ALL)]
    planners: Vec<PlannerKind>,
    /// Hyperparameters per belief kind as `kind=df:alpha`; repeatable.
    #[arg(long = "best", value_parser = parse_best)]
    best: Vec<(BeliefKind, (f64, f64))>,
    #[command(flatten)]
    common: ExperimentFlags,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Result record written by `run`.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<[f64; 2]> {
    let Some((x, y)) = s.split_once(',') else { bail!("expected `x,y`, got `{s}`") };
    Ok([x.trim().parse()?, y.trim().parse()?])
}

fn parse_best(s: &str) -> Result<(BeliefKind, (f64, f64))> {
    let Some((kind, rest)) = s.split_once('=') else { bail!("expected `kind=df:alpha`, got `{s}`") };
    let Some((df, alpha)) = rest.split_once(':') else { bail!("expected `kind=df:alpha`, got `{s}`") };
    Ok((kind.parse()?, (df.parse()?, alpha.parse()?)))
}

fn load_scenario(p: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
    Scenario::from_toml(&text).with_context(|| format!("bad scenario file {}", p.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

fn write_report(rep: &Report, dir: &Path, timing: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(dir.join("results.tsv"), rep.results_tsv(timing))?;
    fs::write(dir.join("summary.tsv"), rep.summary_tsv())?;
    eprint!("{}", rep.summary_tsv().lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let sc = match &args.scenario {
        Some(p) => load_scenario(p)?,
        None => gen_scenario(args.belief, args.seed, &args.gen.overrides(None))?,
    };
    let ec = args.episode.apply(EpisodeConfig { planner: args.planner, seed: args.seed, ..EpisodeConfig::default() });
    let result = run_episode(&sc, &ec)?;
    let record = RunRecord::new(&sc, &ec, &result, args.timing);
    write_out(args.out.as_deref(), &(serde_json::to_string_pretty(&record)? + "\n"))?;
    if let Some(p) = &args.events {
        let mut text = String::new();
        for ev in &result.events {
            text += &serde_json::to_string(ev)?;
            text.push('\n');
        }
        fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &args.trajectory {
        let text: String = result.trajectory.iter().map(|q| format!("{},{},{}\n", q.x, q.y, q.z)).collect();
        fs::write(p, format!("x,y,z\n{text}")).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &args.render {
        render_trajectory(Some(&result), &sc, p)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let res = match Cli::parse().cmd {
        Cmd::GenScenario(a) => gen_scenario(a.belief, a.seed, &a.gen.overrides(None))
            .and_then(|sc| Ok(sc.to_toml()?))
            .and_then(|t| write_out(a.out.as_deref(), &t)),
        Cmd::Run(a) => run(a),
        Cmd::Sweep(a) => a.common.base().and_then(|base| {
            let spec = SweepSpec {
                discount_factors: a.discount_factors,
                alphas: a.alphas,
                belief_kinds: a.common.beliefs.clone(),
                seeds: a.common.seeds,
            };
            write_report(&sweep(&spec, &base)?, &a.common.out_dir, a.common.timing)
        }),
        Cmd::Compare(a) => a.common.base().and_then(|base| {
            let mut spec = CompareSpec { planners: a.planners, belief_kinds: a.common.beliefs.clone(), seeds: a.common.seeds, ..CompareSpec::default() };
            spec.best.extend(a.best);
            write_report(&compare(&spec, &base)?, &a.common.out_dir, a.common.timing)
        }),
        Cmd::Render(a) => (|| {
            let sc = load_scenario(&a.scenario)?;
            let result: Option<EpisodeResult> = match &a.result {
                Some(p) => Some(serde_json::from_str::<RunRecord>(&fs::read_to_string(p)?)?.result),
                None => None,
            };
            render_trajectory(result.as_ref(), &sc, &a.out)
        })(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
