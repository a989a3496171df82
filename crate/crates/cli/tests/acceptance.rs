//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! report is always printed; exits nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use cmjvax::estimate::EmpiricalDistribution;
use cmjvax::functionals::max_of_z;
use cmjvax::inference::{borel_tanner_table, chi_square_gof};
use cmjvax::policy::optimal_policy;
use cmjvax::{
    precedes, prune, simulate_tree, BranchingTree, CoupledBatch, Error, Functional, LifetimeLaw, OffspringLaw, Placement,
    PolicyFamily, PolicyQuery, PolicyTarget, ReproductionLaw, SimCaps, TimeUnit, VaccinationFunction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M_HAT: f64 = 62.0 / 196.0;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> String {
    repo().join("configs").join(name).to_str().unwrap().to_string()
}

fn cmjvax(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_cmjvax")).args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("cmjvax {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn mumps(mean: f64, shape: f64) -> ReproductionLaw {
    ReproductionLaw::bellman_harris(shape, mean, 0.3163)
}

fn no_vaccination() -> VaccinationFunction {
    VaccinationFunction::step(0.0, 0.0).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, detail: String::new() }
    }

    fn check(&mut self, ok: bool, detail: impl AsRef<str>) {
        self.pass &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(detail.as_ref());
        if !ok {
            self.detail.push_str(" [x]");
        }
    }
}

/// Composite trapezoid rule for the gamma probability of [lo, hi], normalized
/// by the same rule on [0, mean * 20] so that no gamma function is needed.
fn trapezoid_gamma(mean: f64, shape: f64, lo: f64, hi: f64) -> f64 {
    let rate = shape / mean;
    let mode = (shape - 1.0) / rate;
    let log_peak = (shape - 1.0) * mode.ln() - rate * mode;
    let f = |x: f64| if x <= 0.0 { 0.0 } else { ((shape - 1.0) * x.ln() - rate * x - log_peak).exp() };
    let integrate = |a: f64, b: f64, panels: usize| {
        let h = (b - a) / panels as f64;
        let mut acc = 0.5 * (f(a) + f(b));
        for i in 1..panels {
            acc += f(a + i as f64 * h);
        }
        acc * h
    };
    integrate(lo, hi, 1_000_000) / integrate(0.0, mean * 20.0, 4_000_000)
}

fn c1_mle(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let out = dir.join("c1");
    let run = cmjvax(&["--out", out.to_str().unwrap(), "infer", &config("data/synthetic_sizes.csv")]);
    o.check(run.status.success(), "infer ran");
    let m = json(&out.join("infer.json"))["m_hat"].as_f64().unwrap_or(f64::NAN);
    o.check((m - 0.316_326_530_612_244_9).abs() <= 1e-12, format!("m_hat = {m}"));
    o.check((m - 0.3163).abs() < 5e-5, "rounds to 0.3163");
    o
}

fn c2_mean_size(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let v = json(&dir.join("c1/infer.json"))["mean_outbreak_size"].as_f64().unwrap_or(f64::NAN);
    o.check((v - M_HAT / (1.0 - M_HAT)).abs() < 1e-12, format!("m/(1-m) = {v}"));
    o.check((v - 0.463).abs() < 0.0005, "rounds to 0.463");
    o
}

fn c3_coverage() -> Outcome {
    let mut o = Outcome::new();
    let run = cmjvax(&["coverage", "17", "50", "12", "25"]);
    let v: f64 = String::from_utf8_lossy(&run.stdout).trim().parse().unwrap_or(f64::NAN);
    o.check((v - 0.987).abs() <= 0.0005, format!("coverage(17,50) = {v:.6}"));
    for (mean, shape, published) in [(17.0, 50.0, 0.987), (16.0, 30.0, 0.922), (18.0, 70.0, 0.998)] {
        let lib = cmjvax::inference::gamma_coverage(mean, shape, 12.0, 25.0).unwrap();
        let oracle = trapezoid_gamma(mean, shape, 12.0, 25.0);
        o.check((lib - oracle).abs() <= 1e-6, format!("({mean},{shape}) vs trapezoid {:.1e}", (lib - oracle).abs()));
        o.check((lib - published).abs() <= 0.001, format!("({mean},{shape}) = {lib:.4}"));
    }
    o
}

fn c4_zero_fraction() -> Outcome {
    let mut o = Outcome::new();
    let batch = CoupledBatch::new(mumps(17.0, 50.0), 1, SimCaps::default(), 100_000, 4).unwrap();
    let samples = batch.evaluate(Functional::TotalBirths, TimeUnit::Days, &[no_vaccination()]).unwrap();
    let zero = samples.values[0].iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
    o.check((zero - 0.729).abs() <= 0.006, format!("zero fraction {zero:.4}"));
    o.check(((-0.3163f64).exp() - 0.7289).abs() < 1e-4, "e^-m = 0.7289");
    o.check(samples.unresolved == 0, "no censoring");
    o
}

fn c5_baseline_quantile(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let out = dir.join("c5");
    let run = cmjvax(&["--out", out.to_str().unwrap(), "estimate", &config("mumps_estimate.toml")]);
    o.check(run.status.success(), "estimate ran");
    let p = 0.9f64.powf(0.2);
    let q = csv_rows(&out.join("alpha_0_summary.csv"))
        .iter()
        .find(|r| (r[4].parse::<f64>().unwrap() - p).abs() < 1e-12)
        .map(|r| r[5].parse::<f64>().unwrap())
        .unwrap_or(f64::NAN);
    o.check((q - 6.97).abs() <= 0.5, format!("quantile at 0.9^(1/5) = {q:.3} weeks"));
    // the three coverage levels are ordered
    let means: Vec<f64> = (0..3)
        .map(|j| csv_rows(&out.join(format!("alpha_{j}_summary.csv")))[0][2].parse().unwrap())
        .collect();
    o.check(means[0] >= means[1] && means[1] >= means[2], format!("means {means:.3?}"));
    o
}

fn optimize_index(dir: &Path, name: &str, cfg: &str) -> f64 {
    let out = dir.join(name);
    let run = cmjvax(&["--out", out.to_str().unwrap(), "optimize", &config(cfg)]);
    if !run.status.success() {
        return f64::NAN;
    }
    json(&out.join("policy.json"))["optimal_index"].as_f64().unwrap_or(f64::NAN)
}

fn c6_optimal_coverage(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let c3 = optimize_index(dir, "c6_t3", "mumps_optimize.toml");
    o.check((c3 - 0.60).abs() <= 0.03 + 1e-9, format!("c_opt(5,0.9,3) = {c3}"));
    let c0 = optimize_index(dir, "c6_t0", "mumps_optimize_t0.toml");
    o.check((c0 - 0.94).abs() <= 0.02 + 1e-9, format!("c_opt(5,0.9,0) = {c0}"));
    let fast = optimize_index(dir, "c6_fast", "mumps_optimize_fast.toml");
    o.check((fast - 0.60).abs() <= 0.05 + 1e-9, format!("fast c_opt(5,0.9,3) = {fast}"));
    let batch = CoupledBatch::new(mumps(17.0, 50.0), 1, SimCaps::default(), 10_000, 1).unwrap().cached().unwrap();
    let query = PolicyQuery {
        family: PolicyFamily::Constant,
        target: PolicyTarget::Quantile { p: 0.9, bound: 0.0 },
        functional: Functional::DurationExclIncubation,
        z: 5,
        unit: TimeUnit::Weeks,
    };
    let fast0 = optimal_policy(&query, &batch, 0.01).unwrap().optimal_index.unwrap_or(f64::NAN);
    o.check((fast0 - 0.94).abs() <= 0.05 + 1e-9, format!("fast c_opt(5,0.9,0) = {fast0}"));
    o
}

fn c7_sensitivity(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let out = dir.join("c7");
    let run = cmjvax(&["--out", out.to_str().unwrap(), "optimize", &config("mumps_sensitivity.toml")]);
    o.check(run.status.success(), "optimize ran");
    let mut table = BTreeMap::new();
    for r in csv_rows(&out.join("sensitivity.csv")) {
        let key = ((r[0].parse::<f64>().unwrap() * 10.0) as i64, r[1].parse::<f64>().unwrap() as i64);
        table.insert(key, r[3].parse::<f64>().unwrap_or(f64::NAN));
    }
    for (mean, shape, published) in [(160, 30, 0.60), (180, 30, 0.73), (160, 70, 0.54)] {
        let c = table.get(&(mean, shape)).copied().unwrap_or(f64::NAN);
        o.check((c - published).abs() <= 0.03 + 1e-9, format!("({},{shape}) = {c}", mean as f64 / 10.0));
    }
    let means: Vec<i64> = vec![160, 165, 170, 175, 180];
    let shapes: Vec<i64> = vec![30, 40, 50, 60, 70];
    let mut violations = 0;
    for &s in &shapes {
        for w in means.windows(2) {
            violations += usize::from(!(table[&(w[1], s)] >= table[&(w[0], s)]));
        }
    }
    for &m in &means {
        for w in shapes.windows(2) {
            violations += usize::from(!(table[&(m, w[1])] <= table[&(m, w[0])]));
        }
    }
    o.check(table.len() == 25, format!("{} cells", table.len()));
    o.check(violations == 0, format!("{violations} trend violations"));
    o
}

fn random_law(rng: &mut ChaCha8Rng) -> ReproductionLaw {
    let lifetime = match rng.random_range(0..3) {
        0 => LifetimeLaw::Gamma { shape: rng.random_range(0.5..60.0), mean: rng.random_range(1.0..20.0) },
        1 => LifetimeLaw::Exponential { mean: rng.random_range(1.0..20.0) },
        _ => LifetimeLaw::Fixed { value: rng.random_range(1.0..20.0) },
    };
    let placement = match rng.random_range(0..3) {
        0 => Placement::AtDeath,
        1 => Placement::UniformOverLifetime,
        _ => Placement::PoissonProcess { rate: rng.random_range(0.02..0.2) },
    };
    let offspring = match placement {
        Placement::PoissonProcess { .. } => None,
        _ => Some(match rng.random_range(0..2) {
            0 => OffspringLaw::Poisson { mean: rng.random_range(0.1..1.3) },
            _ => OffspringLaw::Bernoulli { p: rng.random_range(0.1..0.95) },
        }),
    };
    ReproductionLaw { lifetime, offspring, placement }
}

/// A random pair with the first function preceding the second.
fn random_pair(rng: &mut ChaCha8Rng) -> (VaccinationFunction, VaccinationFunction) {
    match rng.random_range(0..3) {
        0 => {
            let (c, t0) = (rng.random_range(0.0..1.0), rng.random_range(0.0..40.0));
            let (c2, t02) = (rng.random_range(c..=1.0), rng.random_range(0.0..=t0));
            (VaccinationFunction::step(c, t0).unwrap(), VaccinationFunction::step(c2, t02).unwrap())
        }
        1 => {
            let p0 = rng.random_range(0.005..0.1);
            let (tv, start) = (rng.random_range(0.0..1.0 / p0), rng.random_range(0.0..30.0));
            let (tv2, start2) = (rng.random_range(tv..=1.0 / p0), rng.random_range(0.0..=start));
            (VaccinationFunction::ramp(start, tv, p0).unwrap(), VaccinationFunction::ramp(start2, tv2, p0).unwrap())
        }
        _ => {
            let k = rng.random_range(1..6);
            let mut t: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..60.0)).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            let v: Vec<f64> = t.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            let v2: Vec<f64> = v.iter().map(|&x| rng.random_range(x..=1.0)).collect();
            (VaccinationFunction::piecewise(t.clone(), v).unwrap(), VaccinationFunction::piecewise(t, v2).unwrap())
        }
    }
}

/// Censored values count as +inf, as in a coupled batch.
fn value(f: Functional, tree: &BranchingTree, alpha: &VaccinationFunction) -> f64 {
    match f.evaluate(tree, &prune(tree, alpha)) {
        Ok(v) => v,
        Err(Error::CensoredTree { .. }) => f64::INFINITY,
        Err(e) => panic!("{f}: {e}"),
    }
}

fn c8_monotonicity() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let caps = SimCaps::new(200.0, 5000).unwrap();
    let (mut triples, mut pathwise, mut cdf, mut quantile, mut not_ordered) = (0, 0, 0, 0, 0);
    for group in 0..100u64 {
        let law = random_law(&mut rng);
        let (a, b) = random_pair(&mut rng);
        not_ordered += usize::from(!precedes(&a, &b));
        let t = rng.random_range(0.0..caps.horizon);
        let functionals = [
            Functional::ExtinctionTime,
            Functional::DurationExclIncubation,
            Functional::MaxPopulation,
            Functional::BirthsBy(t),
            Functional::TotalBirths,
        ];
        let mut xa = vec![Vec::new(); functionals.len()];
        let mut xb = vec![Vec::new(); functionals.len()];
        for i in 0..20 {
            let tree = simulate_tree(&law, 1, caps, group * 100 + i).unwrap();
            triples += 1;
            for (k, &f) in functionals.iter().enumerate() {
                let (va, vb) = (value(f, &tree, &a), value(f, &tree, &b));
                pathwise += usize::from(!(vb <= va));
                xa[k].push(va);
                xb[k].push(vb);
            }
        }
        for k in 0..functionals.len() {
            let da = EmpiricalDistribution::from_samples(xa[k].clone()).unwrap();
            let db = EmpiricalDistribution::from_samples(xb[k].clone()).unwrap();
            for &x in xa[k].iter().chain(&xb[k]) {
                cdf += usize::from(db.cdf(x) < da.cdf(x));
            }
            for d in 1..10 {
                let p = d as f64 / 10.0;
                quantile += usize::from(db.quantile(p).unwrap() > da.quantile(p).unwrap());
            }
        }
    }
    o.check(triples >= 1000 && not_ordered == 0, format!("{triples} triples"));
    o.check(pathwise == 0, format!("{pathwise} pathwise"));
    o.check(cdf == 0, format!("{cdf} cdf"));
    o.check(quantile == 0, format!("{quantile} quantile violations"));
    o
}

/// Borel-Tanner pmf by direct log-space evaluation with a summed log k!.
fn borel_tanner_oracle(a: f64, m: f64, k: u64) -> f64 {
    let log_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    let kf = k as f64;
    (a.ln() + kf * m.ln() + (kf - 1.0) * (a + kf).ln() - (a + kf) * m - log_fact).exp()
}

fn c9_borel_tanner() -> Outcome {
    let mut o = Outcome::new();
    for (i, m) in [0.1, 0.3163, 0.5].into_iter().enumerate() {
        let law = ReproductionLaw::bellman_harris(50.0, 17.0, m);
        let batch = CoupledBatch::new(law, 1, SimCaps::default(), 100_000, 90 + i as u64).unwrap();
        let sizes = &batch.evaluate(Functional::TotalBirths, TimeUnit::Days, &[no_vaccination()]).unwrap().values[0];
        let max_k = sizes.iter().copied().fold(0.0, f64::max) as usize;
        let mut observed = vec![0u64; max_k + 2];
        for &s in sizes {
            observed[s as usize] += 1;
        }
        let mut expected: Vec<f64> = (0..=max_k as u64).map(|k| borel_tanner_oracle(1.0, m, k)).collect();
        expected.push((1.0 - expected.iter().sum::<f64>()).max(0.0));
        let test = chi_square_gof(&observed, &expected, 5.0, 0).unwrap();
        o.check(test.p_value > 0.01, format!("m={m}: p={:.3}", test.p_value));
        let table = borel_tanner_table(1, m, 1.0 - 1e-6).unwrap();
        let (k, _, mass) = *table.last().unwrap();
        let oracle_mass: f64 = (0..=k).map(|j| borel_tanner_oracle(1.0, m, j)).sum();
        o.check(mass >= 1.0 - 1e-6 && (mass - oracle_mass).abs() < 1e-12, format!("K={k}"));
    }
    o
}

fn c10_z_composition() -> Outcome {
    let mut o = Outcome::new();
    let batch = CoupledBatch::new(mumps(17.0, 50.0), 1, SimCaps::default(), 100_000, 10).unwrap();
    let base = batch.distributions(Functional::ExtinctionTime, TimeUnit::Weeks, &[no_vaccination()]).unwrap().remove(0);
    let z = 5;
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let maxima: Vec<f64> = (0..draws).map(|_| max_of_z(base.samples(), z, &mut rng).unwrap()).collect();
    let composed = EmpiricalDistribution::from_samples(maxima).unwrap();
    let mut worst: f64 = 0.0;
    for d in 1..10 {
        let x = base.quantile(d as f64 / 10.0).unwrap();
        let target = base.cdf(x).powi(z as i32);
        let sigma = (target * (1.0 - target) / draws as f64).sqrt();
        worst = worst.max((composed.cdf(x) - target).abs() / sigma);
    }
    o.check(worst <= 3.0, format!("max deviation {worst:.2} sigma at deciles"));
    o
}

/// Data files of an output directory, excluding the metadata sidecar.
fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().to_string();
        if name != "metadata.json" {
            files.insert(name, std::fs::read(entry.path()).unwrap());
        }
    }
    files
}

fn c11_determinism(dir: &Path) -> Outcome {
    let mut o = Outcome::new();
    let sizes = dir.join("c11_ingest_1/sizes.csv");
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("simulate", vec!["simulate".into(), config("mumps_simulate.toml")]),
        ("estimate", vec!["estimate".into(), config("mumps_estimate.toml")]),
        ("optimize", vec!["optimize".into(), config("mumps_optimize.toml")]),
        ("ramp", vec!["optimize".into(), config("mumps_ramp.toml")]),
        ("sensitivity", vec!["optimize".into(), config("mumps_sensitivity.toml")]),
        ("ingest", vec!["ingest".into(), config("data/synthetic_weekly_cases.csv")]),
        ("infer", vec!["infer".into(), sizes.to_str().unwrap().into()]),
        ("coverage", vec!["coverage".into(), "17".into(), "50".into(), "12".into(), "25".into()]),
    ];
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for threads in [1, 4, 8] {
            let out = dir.join(format!("c11_{name}_{threads}"));
            let mut full = vec!["--seed".to_string(), "11".into(), "--threads".into(), threads.to_string()];
            full.extend(["--out".to_string(), out.to_str().unwrap().to_string()]);
            full.extend(args.iter().cloned());
            let full: Vec<&str> = full.iter().map(String::as_str).collect();
            let run = cmjvax(&full);
            let mut files = if out.exists() { data_files(&out) } else { BTreeMap::new() };
            files.insert("stdout".into(), run.stdout);
            outputs.push((run.status.code(), files));
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]) && outputs[0].0 == Some(0);
        o.check(same, format!("{name} ({} files)", outputs[0].1.len() - 1));
    }
    o
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("MLE exactness", Box::new(|| c1_mle(root))),
        ("mean outbreak size", Box::new(|| c2_mean_size(root))),
        ("gamma coverage", Box::new(c3_coverage)),
        ("zero-secondary fraction", Box::new(c4_zero_fraction)),
        ("baseline quantile", Box::new(|| c5_baseline_quantile(root))),
        ("optimal coverage", Box::new(|| c6_optimal_coverage(root))),
        ("sensitivity grid", Box::new(|| c7_sensitivity(root))),
        ("pathwise monotonicity", Box::new(c8_monotonicity)),
        ("Borel-Tanner equivalence", Box::new(c9_borel_tanner)),
        ("z-composition", Box::new(c10_z_composition)),
        ("determinism across threads", Box::new(|| c11_determinism(root))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!("{status} {:>2} {name}: {} ({:.1}s)", i + 1, outcome.detail, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
