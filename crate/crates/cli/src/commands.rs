use std::path::{Path, PathBuf};

use cmjvax::estimate::dkw_half_width;
use cmjvax::inference::{
    borel_tanner_pmf, borel_tanner_table, chi_square_gof, gamma_coverage, mean_outbreak_size, mle_offspring_mean,
    OutbreakSizeRecord,
};
use cmjvax::ingest::{filter_outbreaks, read_weekly_csv, segment_outbreaks, size_records, FilterOptions, Verdict};
use cmjvax::policy::{quantile_curve, sensitivity_grid, SensitivitySpec};
use cmjvax::{optimal_policy, precedes, CoupledBatch, Functional};
use serde_json::json;

use std::fmt::Write as _;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::{num, opt_num, OutputDir};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

const DEFAULT_OUT: &str = "out";

/// Appends one line to a command report.
macro_rules! say {
    ($report:expr) => {
        $report.push('\n')
    };
    ($report:expr, $($arg:tt)*) => {
        writeln!($report, $($arg)*).expect("writing to a String")
    };
}

struct Experiment {
    config: ExperimentConfig,
    path: PathBuf,
    seed: u64,
    out: OutputDir,
    threads: Option<usize>,
}

impl Experiment {
    fn load(path: &Path, opts: &RunOptions) -> Result<Self> {
        let config = ExperimentConfig::load(path)?;
        let seed = opts.seed.or(config.seed).unwrap_or(0);
        let root = opts.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
        Ok(Experiment { out: OutputDir::create(root)?, config, path: path.to_path_buf(), seed, threads: opts.threads })
    }

    fn batch(&self) -> Result<CoupledBatch> {
        let c = &self.config;
        let mut batch = CoupledBatch::new(c.law.clone(), c.initials, c.caps, c.replicates, self.seed)?;
        if let Some(threads) = self.threads {
            batch = batch.with_threads(threads)?;
        }
        if c.cache_trees {
            batch = batch.cached()?;
        }
        Ok(batch)
    }

    fn metadata(&self, command: &str) -> Result<()> {
        self.out.metadata(
            command,
            json!({
                "config": self.path.display().to_string(),
                "seed": self.seed,
                "threads": self.threads,
                "replicates": self.config.replicates,
                "law": self.config.law,
                "caps": self.config.caps,
                "initials": self.config.initials,
            }),
        )
    }
}

/// One summary row per replicate, plus the trees as JSON lines on request.
pub fn simulate(config: &Path, opts: &RunOptions) -> Result<String> {
    let mut report = String::new();
    let exp = Experiment::load(config, opts)?;
    let batch = exp.batch()?;
    let dump = exp.config.dump_trees;
    let rows = batch.map_trees(|i, tree| {
        let mask = cmjvax::PruneMask::empty(tree);
        let uncensored = |f: Functional| if tree.is_censored() { Ok(None) } else { f.evaluate(tree, &mask).map(Some) };
        let row = vec![
            i.to_string(),
            batch.replicate_seed(i).to_string(),
            tree.births().to_string(),
            opt_num(uncensored(Functional::ExtinctionTime)?),
            opt_num(uncensored(Functional::MaxPopulation)?),
            tree.is_censored().to_string(),
            opt_num(tree.censor_time()),
        ];
        Ok((row, if dump { Some(tree.to_json()) } else { None }))
    })?;

    let mut csv = exp.out.csv(
        "simulate_summary.csv",
        &["replicate", "seed", "births", "extinction_time", "max_population", "censored", "censor_time"],
    )?;
    let mut zero = 0;
    let mut censored = 0;
    for (row, _) in &rows {
        zero += usize::from(row[2] == "0");
        censored += usize::from(row[5] == "true");
        csv.row(row)?;
    }
    csv.finish()?;
    if dump {
        exp.out.lines("trees.jsonl", rows.into_iter().filter_map(|(_, tree)| tree))?;
    }
    exp.metadata("simulate")?;
    let n = exp.config.replicates;
    say!(report, "replicates        {n}");
    say!(report, "zero births       {zero} ({})", zero as f64 / n as f64);
    say!(report, "censored          {censored}");
    Ok(report)
}

/// Coupled distributions of one functional under every configured policy.
pub fn estimate(config: &Path, opts: &RunOptions) -> Result<String> {
    let mut report = String::new();
    let exp = Experiment::load(config, opts)?;
    let c = &exp.config;
    let functional = c.require_functional()?;
    if c.alphas.is_empty() {
        return Err(CliError::Config("`estimate` needs at least one entry in `alphas`".into()));
    }
    let dists = exp.batch()?.distributions(functional, c.unit, &c.alphas)?;
    let band = dkw_half_width(c.replicates, c.band_delta);

    say!(report, "{:<6} {:>12} {:>12}  quantiles {:?}", "alpha", "mean", "se_mean", c.quantiles);
    for (j, dist) in dists.iter().enumerate() {
        let mut summary = exp.out.csv(&format!("alpha_{j}_summary.csv"), &["alpha_id", "n", "mean", "se_mean", "p", "quantile_p"])?;
        let mut quantiles = Vec::new();
        for &p in &c.quantiles {
            let q = dist.quantile(p)?;
            quantiles.push(q);
            summary.row([j.to_string(), dist.len().to_string(), num(dist.mean()), num(dist.se_mean()), num(p), num(q)])?;
        }
        summary.finish()?;

        let mut cdf = exp.out.csv(&format!("alpha_{j}_cdf.csv"), &["alpha_id", "x", "cdf", "band"])?;
        let samples = dist.samples();
        for (k, &x) in samples.iter().enumerate() {
            if samples.get(k + 1) != Some(&x) {
                cdf.row([j.to_string(), num(x), num((k + 1) as f64 / samples.len() as f64), num(band)])?;
            }
        }
        cdf.finish()?;
        say!(report, "{j:<6} {:>12.6} {:>12.6}  {:?}", dist.mean(), dist.se_mean(), quantiles);
    }

    let mut alphas = exp.out.csv("alphas.csv", &["alpha_id", "alpha"])?;
    for (j, alpha) in c.alphas.iter().enumerate() {
        alphas.row([j.to_string(), alpha.describe()])?;
    }
    alphas.finish()?;
    let mut order = exp.out.csv("precedence.csv", &["alpha_i", "alpha_j", "precedes"])?;
    for (i, a) in c.alphas.iter().enumerate() {
        for (j, b) in c.alphas.iter().enumerate() {
            if i != j {
                order.row([i.to_string(), j.to_string(), precedes(a, b).to_string()])?;
            }
        }
    }
    order.finish()?;
    exp.metadata("estimate")?;
    Ok(report)
}

/// Smallest policy of the configured family meeting the target, the full
/// statistic curve, and the optional sensitivity grid.
pub fn optimize(config: &Path, opts: &RunOptions) -> Result<String> {
    let mut report = String::new();
    let exp = Experiment::load(config, opts)?;
    let c = &exp.config;
    let query = c.query()?;
    let policy = c.require_policy()?;
    let batch = exp.batch()?;
    let result = optimal_policy(&query, &batch, policy.resolution)?;
    let grid = query.family.index_grid(&c.law, policy.resolution)?;
    let curve = quantile_curve(&query, &batch, &grid)?;

    let mut csv = exp.out.csv("policy_grid.csv", &["index", "value", "feasible"])?;
    for (x, v) in &curve {
        csv.row([num(*x), num(*v), (*v <= query.target.bound()).to_string()])?;
    }
    csv.finish()?;
    exp.out.json(
        "policy.json",
        &json!({
            "query": query,
            "replicates": c.replicates,
            "seed": exp.seed,
            "feasible": result.feasible,
            "optimal_index": result.optimal_index,
            "achieved_value": result.achieved_value,
            "bound": result.bound,
            "evaluated": result.grid,
        }),
    )?;

    if let Some(s) = &c.sensitivity {
        let spec = SensitivitySpec {
            means: s.means.clone(),
            shapes: s.shapes.clone(),
            window: (s.window[0], s.window[1]),
            initials: c.initials,
            caps: c.caps,
            n: c.replicates,
            master_seed: exp.seed,
            resolution: policy.resolution,
            threads: exp.threads,
        };
        let rows = sensitivity_grid(&c.law, &query, &spec)?;
        let mut csv = exp.out.csv("sensitivity.csv", &["mean", "shape", "coverage", "optimal_index", "achieved_value"])?;
        for r in &rows {
            csv.row([num(r.mean), num(r.shape), num(r.coverage), opt_num(r.optimal_index), opt_num(r.achieved_value)])?;
        }
        csv.finish()?;
        say!(report, "sensitivity       {} cells", rows.len());
    }
    exp.metadata("optimize")?;

    match result.optimal_index {
        Some(index) => {
            say!(report, "optimal index     {index}");
            say!(report, "achieved value    {}", opt_num(result.achieved_value));
            say!(report, "bound             {}", result.bound);
            Ok(report)
        }
        None => Err(CliError::Infeasible { bound: result.bound }),
    }
}

fn read_sizes(path: &Path) -> Result<Vec<OutbreakSizeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    rdr.deserialize()
        .collect::<std::result::Result<Vec<OutbreakSizeRecord>, _>>()
        .map_err(|source| CliError::Csv { path: path.to_path_buf(), source })
}

/// Offspring-mean MLE from outbreak sizes and the fitted Borel-Tanner law.
pub fn infer(sizes: &Path, a: u64, opts: &RunOptions) -> Result<String> {
    let mut report = String::new();
    let records = read_sizes(sizes)?;
    let m = mle_offspring_mean(&records)?;
    let mean_size = mean_outbreak_size(m)?;
    let table = borel_tanner_table(a, m, 1.0 - 1e-6)?;
    let sum_a: u64 = records.iter().map(|r| r.a).sum();
    let sum_n: u64 = records.iter().map(|r| r.n).sum();

    // fit check against the observed n when every outbreak starts alike
    let gof = if records.iter().all(|r| r.a == a) {
        let max_n = records.iter().map(|r| r.n).max().unwrap_or(0);
        let mut observed = vec![0u64; max_n as usize + 2];
        for r in &records {
            observed[r.n as usize] += 1;
        }
        let mut expected: Vec<f64> = (0..=max_n).map(|k| borel_tanner_pmf(a, m, k)).collect::<cmjvax::Result<_>>()?;
        expected.push((1.0 - expected.iter().sum::<f64>()).max(0.0));
        chi_square_gof(&observed, &expected, 5.0, 1).ok()
    } else {
        None
    };

    let out = OutputDir::create(opts.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()))?;
    let mut csv = out.csv("borel_tanner.csv", &["k", "pmf", "cdf"])?;
    for (k, p, cum) in &table {
        csv.row([k.to_string(), num(*p), num(*cum)])?;
    }
    csv.finish()?;
    out.json(
        "infer.json",
        &json!({
            "outbreaks": records.len(),
            "sum_a": sum_a,
            "sum_n": sum_n,
            "m_hat": m,
            "mean_outbreak_size": mean_size,
            "critical_coverage": cmjvax::reproduction::critical_coverage_for_mean(m),
            "table_a": a,
            "chi_square": gof,
        }),
    )?;
    out.metadata("infer", json!({ "input": sizes.display().to_string() }))?;

    say!(report, "outbreaks           {}", records.len());
    say!(report, "sum a               {sum_a}");
    say!(report, "sum n               {sum_n}");
    say!(report, "m_hat               {m}");
    say!(report, "mean outbreak size  {mean_size}");
    if let Some(t) = &gof {
        say!(report, "chi-square          {} on {} df, p = {}", t.statistic, t.df, t.p_value);
    }
    say!(report);
    say!(report, "{:>6} {:>14} {:>14}", "k", "pmf", "cdf");
    for (k, p, cum) in &table {
        say!(report, "{k:>6} {p:>14.8} {cum:>14.8}");
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub gap_limit: u32,
    pub filter: FilterOptions,
}

/// Outbreak segmentation of weekly case counts.
pub fn ingest(cases: &Path, ingest: IngestOptions, opts: &RunOptions) -> Result<String> {
    let mut report = String::new();
    let file = std::fs::File::open(cases).map_err(|e| CliError::io(cases, e))?;
    let (series, warnings) = read_weekly_csv(file)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let out = OutputDir::create(opts.out.clone().unwrap_or_else(|| DEFAULT_OUT.into()))?;
    let mut csv = out.csv(
        "outbreaks.csv",
        &["province", "start_week", "end_week", "initial_cases", "duration_weeks", "total_cases", "status"],
    )?;
    let mut records = Vec::new();
    for s in &series {
        for r in segment_outbreaks(s, ingest.gap_limit) {
            let status = match ingest.filter.verdict(&r) {
                Verdict::Kept => "kept",
                Verdict::DroppedInitialCases => "dropped_initial_cases",
                Verdict::DroppedDuration => "dropped_duration",
            };
            let end = r.case_weeks.last().map(|w| w.0).unwrap_or(r.start_week);
            csv.row([
                r.province.clone(),
                s.week_label(r.start_week),
                s.week_label(end),
                r.initial_cases.to_string(),
                r.duration_weeks.to_string(),
                r.total_cases.to_string(),
                status.to_string(),
            ])?;
            records.push(r);
        }
    }
    csv.finish()?;
    let outcome = filter_outbreaks(&records, &ingest.filter);
    let mut sizes = out.csv("sizes.csv", &["a", "n"])?;
    for r in size_records(&outcome.kept) {
        sizes.row([r.a.to_string(), r.n.to_string()])?;
    }
    sizes.finish()?;
    out.metadata(
        "ingest",
        json!({
            "input": cases.display().to_string(),
            "gap_limit": ingest.gap_limit,
            "filter": ingest.filter,
            "warnings": warnings,
        }),
    )?;

    say!(report, "provinces               {}", series.len());
    say!(report, "outbreaks               {}", records.len());
    say!(report, "kept                    {}", outcome.kept.len());
    say!(report, "dropped (initial cases) {}", outcome.dropped_initial_cases);
    say!(report, "dropped (duration)      {}", outcome.dropped_duration);
    Ok(report)
}

/// Probability that a gamma incubation period falls in `[lo, hi]`.
pub fn coverage(mean: f64, shape: f64, lo: f64, hi: f64) -> Result<f64> {
    Ok(gamma_coverage(mean, shape, lo, hi)?)
}
