//! Sweeps and planner comparisons over seeded scenario families.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shrinking_pomcp::grid::Cell;
use shrinking_pomcp::mission::{run_episode, EpisodeConfig, PlannerKind};
use shrinking_pomcp::scenario::Scenario;

use crate::gen::{gen_scenario, BeliefKind, GenOverrides};

/// Where episode scenarios come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Family {
    /// One generated map per (belief kind, seed).
    Generated { overrides: GenOverrides },
    /// The same file for every cell; only target sampling varies with the seed.
    Fixed { scenario: Scenario },
}

impl Default for Family {
    fn default() -> Self {
        Family::Generated { overrides: GenOverrides { targets: Some(1), ..GenOverrides::default() } }
    }
}

impl Family {
    pub fn scenario(&self, kind: BeliefKind, seed: u64) -> Result<Scenario> {
        match self {
            Family::Generated { overrides } => gen_scenario(kind, seed, overrides),
            Family::Fixed { scenario } => Ok(scenario.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub discount_factors: Vec<f64>,
    pub alphas: Vec<f64>,
    pub belief_kinds: Vec<BeliefKind>,
    pub seeds: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            discount_factors: vec![0.8, 0.9, 0.995],
            alphas: vec![0.0, 1.0, 10.0],
            belief_kinds: BeliefKind::ALL.to_vec(),
            seeds: 20,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.discount_factors.is_empty(), "sweep needs at least one discount factor");
        ensure!(!self.alphas.is_empty(), "sweep needs at least one alpha");
        ensure!(!self.belief_kinds.is_empty(), "sweep needs at least one belief kind");
        ensure!(self.seeds >= 1, "sweep needs at least one seed");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub planners: Vec<PlannerKind>,
    pub belief_kinds: Vec<BeliefKind>,
    pub seeds: u64,
    /// `(discount factor, alpha)` per belief kind; kinds not listed use the
    /// base episode config.
    pub best: BTreeMap<BeliefKind, (f64, f64)>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec {
            planners: PlannerKind::ALL.to_vec(),
            belief_kinds: BeliefKind::ALL.to_vec(),
            seeds: 20,
            best: BTreeMap::from([
                (BeliefKind::Uniform, (0.995, 0.0)),
                (BeliefKind::OnePeak, (0.995, 10.0)),
                (BeliefKind::ThreePeaks, (0.995, 10.0)),
            ]),
        }
    }
}

/// Episode settings shared by every run of an experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBase {
    pub family: Family,
    /// Template; `planner`, `seed`, `gamma` and `alpha` are set per run.
    pub episode: EpisodeConfig,
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
}

/// One episode of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub belief: BeliefKind,
    pub planner: PlannerKind,
    pub df: f64,
    pub alpha: f64,
    pub seed: u64,
    pub epochs_used: usize,
    pub targets_found: usize,
    pub targets_total: usize,
    pub path_length_m: f64,
    pub wall_ms_total: f64,
    pub terminated_by: String,
    pub target_cells: Vec<Cell>,
}

/// Mean and standard error of one (belief, planner, df, alpha) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub belief: BeliefKind,
    pub planner: PlannerKind,
    pub df: f64,
    pub alpha: f64,
    pub n: usize,
    pub mean_epochs: f64,
    /// Sample standard deviation over `sqrt(n)`; absent for a single seed.
    pub se_epochs: Option<f64>,
    pub mean_found: f64,
    pub mean_path_m: f64,
    /// Lowest mean epochs among the rows of this belief kind.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Fully resolved configuration, TOML.
    pub config: String,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

/// Mean and standard error; the error is `None` below two samples.
pub fn mean_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[derive(Debug, Clone, Copy)]
struct Job {
    belief: BeliefKind,
    planner: PlannerKind,
    df: f64,
    alpha: f64,
    seed: u64,
}

fn run_job(base: &ExperimentBase, job: Job) -> Result<ResultRow> {
    let sc = base.family.scenario(job.belief, job.seed)?;
    let mut ec = base.episode.clone();
    ec.planner = job.planner;
    ec.seed = job.seed;
    ec.cfg.gamma = job.df;
    ec.cfg.alpha = job.alpha;
    let r = run_episode(&sc, &ec).with_context(|| {
        format!(
            "episode failed: scenario {}, belief {}, planner {}, df {}, alpha {}, seed {}",
            sc.name, job.belief, job.planner, job.df, job.alpha, job.seed
        )
    })?;
    Ok(ResultRow {
        scenario: sc.name,
        belief: job.belief,
        planner: job.planner,
        df: job.df,
        alpha: job.alpha,
        seed: job.seed,
        epochs_used: r.epochs_used,
        targets_found: r.targets_found,
        targets_total: r.targets_total,
        path_length_m: r.path_length_m,
        wall_ms_total: r.wall_ms_per_epoch.iter().sum(),
        terminated_by: r.terminated_by.to_string(),
        target_cells: r.target_cells,
    })
}

fn sort_key(r: &ResultRow) -> (BeliefKind, PlannerKind, u64, u64, u64) {
    (r.belief, r.planner, r.df.to_bits(), r.alpha.to_bits(), r.seed)
}

fn run_jobs(base: &ExperimentBase, jobs: Vec<Job>) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(base.workers.unwrap_or(0)).build()?;
    let mut rows = pool.install(|| jobs.into_par_iter().map(|j| run_job(base, j)).collect::<Result<Vec<_>>>())?;
    rows.sort_by_key(sort_key);
    Ok(rows)
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(BeliefKind, PlannerKind, u64, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.belief, r.planner, r.df.to_bits(), r.alpha.to_bits())).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let epochs: Vec<f64> = g.iter().map(|r| r.epochs_used as f64).collect();
            let (mean_epochs, se_epochs) = mean_se(&epochs);
            let n = g.len() as f64;
            SummaryRow {
                belief: g[0].belief,
                planner: g[0].planner,
                df: g[0].df,
                alpha: g[0].alpha,
                n: g.len(),
                mean_epochs,
                se_epochs,
                mean_found: g.iter().map(|r| r.targets_found as f64).sum::<f64>() / n,
                mean_path_m: g.iter().map(|r| r.path_length_m).sum::<f64>() / n,
                best: false,
            }
        })
        .collect();
    let mut best: BTreeMap<BeliefKind, usize> = BTreeMap::new();
    for (k, s) in out.iter().enumerate() {
        let e = best.entry(s.belief).or_insert(k);
        if s.mean_epochs < out[*e].mean_epochs {
            *e = k;
        }
    }
    for k in best.into_values() {
        out[k].best = true;
    }
    out
}

fn resolved_config<T: Serialize>(kind: &str, spec: &T, base: &ExperimentBase) -> Result<String> {
    #[derive(Serialize)]
    struct Resolved<'a, T> {
        experiment: &'a str,
        spec: &'a T,
        base: &'a ExperimentBase,
    }
    Ok(toml::to_string(&Resolved { experiment: kind, spec, base })?)
}

/// Shrinking planner over every (df, alpha, belief kind, seed).
pub fn sweep(spec: &SweepSpec, base: &ExperimentBase) -> Result<Report> {
    spec.validate()?;
    base.episode.validate()?;
    let mut jobs = Vec::new();
    for &belief in &spec.belief_kinds {
        for &df in &spec.discount_factors {
            for &alpha in &spec.alphas {
                for seed in 0..spec.seeds {
                    jobs.push(Job { belief, planner: PlannerKind::Shrinking, df, alpha, seed });
                }
            }
        }
    }
    let rows = run_jobs(base, jobs)?;
    Ok(Report { config: resolved_config("sweep", spec, base)?, summary: summarize(&rows), rows })
}

/// Every planner on identical scenarios and target draws.
pub fn compare(spec: &CompareSpec, base: &ExperimentBase) -> Result<Report> {
    if spec.planners.is_empty() || spec.belief_kinds.is_empty() || spec.seeds == 0 {
        bail!("compare needs at least one planner, belief kind and seed");
    }
    base.episode.validate()?;
    let mut jobs = Vec::new();
    for &belief in &spec.belief_kinds {
        let (df, alpha) = spec.best.get(&belief).copied().unwrap_or((base.episode.cfg.gamma, base.episode.cfg.alpha));
        for &planner in &spec.planners {
            for seed in 0..spec.seeds {
                jobs.push(Job { belief, planner, df, alpha, seed });
            }
        }
    }
    let rows = run_jobs(base, jobs)?;
    Ok(Report { config: resolved_config("compare", spec, base)?, summary: summarize(&rows), rows })
}

fn cells_field(cells: &[Cell]) -> String {
    cells.iter().map(|c| format!("{}:{}", c.i, c.j)).collect::<Vec<_>>().join(";")
}

fn commented(config: &str) -> String {
    config.lines().map(|l| format!("# {l}\n")).collect()
}

impl Report {
    /// Tab-separated rows under a commented configuration header. Wall-clock
    /// time is written only with `timing`, so the file is otherwise
    /// reproducible byte for byte.
    pub fn results_tsv(&self, timing: bool) -> String {
        let mut s = commented(&self.config);
        s.push_str("scenario\tbelief\tplanner\tdf\talpha\tseed\tepochs_used\ttargets_found\ttargets_total\tpath_length_m\tterminated_by\ttarget_cells");
        if timing {
            s.push_str("\twall_ms_total");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.scenario,
                r.belief,
                r.planner,
                r.df,
                r.alpha,
                r.seed,
                r.epochs_used,
                r.targets_found,
                r.targets_total,
                r.path_length_m,
                r.terminated_by,
                cells_field(&r.target_cells)
            );
            if timing {
                let _ = write!(s, "\t{:.3}", r.wall_ms_total);
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = commented(&self.config);
        s.push_str("belief\tplanner\tdf\talpha\tn\tmean_epochs\tse_epochs\tmean_found\tmean_path_m\tbest\n");
        for r in &self.summary {
            let se = r.se_epochs.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{:.3}\t{}",
                r.belief, r.planner, r.df, r.alpha, r.n, r.mean_epochs, se, r.mean_found, r.mean_path_m, r.best
            );
        }
        s
    }

    pub fn find(&self, belief: BeliefKind, planner: PlannerKind) -> impl Iterator<Item = &SummaryRow> {
        self.summary.iter().filter(move |r| r.belief == belief && r.planner == planner)
    }
}
