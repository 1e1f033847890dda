use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use stepdown::cohort::{
    load_cohort, read_cohort_unchecked, validate_cohort, write_cohort, CohortSchema,
};
use stepdown::eval::{
    default_edges, fit_and_score, prepare_replicate, score_posterior, summarize,
    true_probabilities, ComparisonConfig, ReplicateResult,
};
use stepdown::kv::KvMap;
use stepdown::predict::{stepdown_table, AdverseEventDef, PredictOptions, Subject};
use stepdown::prior::PriorConfig;
use stepdown::sampler::{fit_variant, read_posterior, write_posterior, FitConfig, Variant};
use stepdown::synth::{generate_cohort, read_true_probabilities, write_truth, TruthConfig};
use stepdown::Error;

mod manifest;

use manifest::{RunManifest, MANIFEST};

const DEF_KEYS: [&str; 4] = [
    "horizon",
    "ed_ip_threshold",
    "rescue_threshold",
    "ocs_threshold",
];
const SIM_FILE: &str = "simulate.kv";
const SOURCE_FILE: &str = "source.kv";
const LEVELS_FILE: &str = "levels.csv";
const REPLICATE_FILE: &str = "replicate.kv";

#[derive(Debug, Parser)]
#[command(
    name = "stepdown",
    version,
    about = "Latent medication-process model for asthma step-down decisions"
)]
struct Cli {
    /// Re-run the command recorded in a manifest.
    #[arg(long, value_name = "FILE")]
    from_manifest: Option<PathBuf>,
    /// Output location for a replayed run (defaults to the recorded one).
    #[arg(long, requires = "from_manifest")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic cohorts with known truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model variant to a cohort directory.
    Fit {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// latent, indep or glmer.
        #[arg(long)]
        variant: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Step-down table for one fitted patient.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        patient: String,
        /// Weeks ahead.
        #[arg(long)]
        horizon: Option<usize>,
        /// CSV file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score fits against simulated truth. Without --fit every method is
    /// fitted to every replicate first.
    Evaluate {
        /// Output directory of `simulate`.
        #[arg(long)]
        truth: PathBuf,
        /// Fit directories; repeatable.
        #[arg(long)]
        fit: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a cohort directory against the data invariants.
    Validate {
        #[arg(long)]
        cohort: PathBuf,
    },
}

enum Failure {
    Usage(String),
    /// Inputs that are readable but inconsistent with each other.
    Data(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> Failure {
    Failure::Data(msg.into())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match (&cli.from_manifest, cli.command) {
        (Some(m), None) => replay(m, cli.out.as_deref()),
        (None, Some(cmd)) => run(cmd, &argv[1..]),
        (Some(_), Some(_)) => Err(usage("--from-manifest takes no subcommand")),
        (None, None) => Err(usage(
            "a subcommand or --from-manifest is required (see --help)",
        )),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                e if e.is_numerical() => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn replay(path: &Path, out: Option<&Path>) -> CmdResult {
    let m = RunManifest::read(path)?;
    let changed = m.changed_inputs();
    if !changed.is_empty() {
        return Err(data(format!(
            "inputs changed since the recorded run: {}",
            changed.join(", ")
        )));
    }
    let out = out.map(absolute);
    let mut args = m.args.clone();
    if let Some(o) = &out {
        let o = o.display().to_string();
        let mut replaced = false;
        for k in 0..args.len() {
            if args[k] == "--out" && k + 1 < args.len() {
                args[k + 1] = o.clone();
                replaced = true;
            } else if args[k].starts_with("--out=") {
                args[k] = format!("--out={o}");
                replaced = true;
            }
        }
        if !replaced {
            args.extend(["--out".to_string(), o]);
        }
    }
    std::env::set_current_dir(&m.cwd).map_err(|e| Error::io(&m.cwd, e))?;
    let mut full = vec!["stepdown".to_string()];
    full.extend(args.iter().cloned());
    let cli = Cli::try_parse_from(&full)
        .map_err(|e| usage(format!("recorded arguments no longer parse: {e}")))?;
    match cli.command {
        Some(cmd) => run(cmd, &args),
        None => Err(usage("manifest records no subcommand")),
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(p)
    }
}

fn run(cmd: Command, args: &[String]) -> CmdResult {
    match cmd {
        Command::Simulate { out, common } => simulate(&out, &common, args),
        Command::Fit {
            cohort,
            out,
            variant,
            common,
        } => fit(&cohort, &out, variant.as_deref(), &common, args),
        Command::Predict {
            fit,
            patient,
            horizon,
            out,
            common,
        } => predict(&fit, &patient, horizon, out.as_deref(), &common, args),
        Command::Evaluate {
            truth,
            fit,
            out,
            common,
        } => evaluate(&truth, &fit, &out, &common, args),
        Command::Validate { cohort } => validate(&cohort),
    }
}

/// Configuration file merged with `--set` overrides; every key must be known.
fn load_kv(common: &Common, known: &[&str]) -> CmdResult<KvMap> {
    let mut kv = match &common.config {
        Some(p) => KvMap::read(p)?,
        None => KvMap::new(),
    };
    for s in &common.set {
        kv.set_override(s).map_err(|e| usage(e.to_string()))?;
    }
    let unknown = kv.unknown_keys(known);
    if !unknown.is_empty() {
        return Err(usage(format!(
            "unknown configuration keys: {}",
            unknown.join(", ")
        )));
    }
    if common.jobs > 0 {
        // A second call fails once the pool exists; the width is then already set.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(common.jobs)
            .build_global();
    }
    Ok(kv)
}

fn parse_threshold(key: &str, v: &str) -> CmdResult<u64> {
    if v.eq_ignore_ascii_case("inf") {
        return Ok(u64::MAX);
    }
    v.parse()
        .map_err(|_| usage(format!("bad value for {key}: {v:?}")))
}

fn def_from_kv(kv: &KvMap) -> CmdResult<AdverseEventDef> {
    let mut d = AdverseEventDef::default();
    kv.take("horizon", &mut d.horizon)?;
    for (key, slot) in [
        ("ed_ip_threshold", &mut d.ed_ip_threshold),
        ("rescue_threshold", &mut d.rescue_threshold),
        ("ocs_threshold", &mut d.ocs_threshold),
    ] {
        if let Some(v) = kv.get(key) {
            *slot = parse_threshold(key, v)?;
        }
    }
    d.validate()?;
    Ok(d)
}

fn def_to_kv(d: &AdverseEventDef, kv: &mut KvMap) {
    let t = |v: u64| {
        if v == u64::MAX {
            "inf".to_string()
        } else {
            v.to_string()
        }
    };
    kv.insert("horizon", d.horizon);
    kv.insert("ed_ip_threshold", t(d.ed_ip_threshold));
    kv.insert("rescue_threshold", t(d.rescue_threshold));
    kv.insert("ocs_threshold", t(d.ocs_threshold));
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Run(Error::io(path, e)))
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| Failure::Run(Error::io(path, e)))
}

fn replicate_dir(out: &Path, r: usize) -> PathBuf {
    out.join(format!("rep_{r:03}"))
}

fn simulate(out: &Path, common: &Common, args: &[String]) -> CmdResult {
    let start = Instant::now();
    let mut known: Vec<&str> = TruthConfig::KEYS.to_vec();
    known.extend(DEF_KEYS);
    known.push("truth_paths");
    let mut kv = load_kv(common, &known)?;
    if let Some(s) = common.seed {
        kv.insert("seed", s);
    }
    let t = TruthConfig::from_kv(&kv)?;
    let def = def_from_kv(&kv)?;
    let mut paths = 10_000usize;
    kv.take("truth_paths", &mut paths)?;

    let mut snapshot = kv.clone();
    snapshot.extend(&t.to_kv());
    def_to_kv(&def, &mut snapshot);
    snapshot.insert("truth_paths", paths);

    create_dir(out)?;
    let schema = CohortSchema::default();
    for r in 0..t.n_replicates {
        let sc = generate_cohort(&t, r)?;
        let dir = replicate_dir(out, r);
        write_cohort(&sc.cohort, &dir, &schema)?;
        let probs = true_probabilities(&sc, &t.globals, &def, paths, t.seed);
        write_truth(&dir, &sc, &probs)?;
        let mut rk = KvMap::new();
        rk.insert("replicate", r);
        write_file(&dir.join(REPLICATE_FILE), &rk.render())?;
    }
    write_file(&out.join(SIM_FILE), &snapshot.render())?;

    let mut m = RunManifest::new("simulate", args, &snapshot, t.seed);
    if let Some(c) = &common.config {
        m.add_input(c)?;
    }
    m.timings
        .insert("total_seconds".into(), start.elapsed().as_secs_f64());
    m.finish(out, &out.join(MANIFEST))?;
    println!(
        "wrote {} replicate(s) of {} patients to {}",
        t.n_replicates,
        t.n_patients,
        out.display()
    );
    Ok(())
}

fn fit_keys() -> Vec<String> {
    let mut k: Vec<String> = FitConfig::KEYS.iter().map(|s| s.to_string()).collect();
    k.extend(PriorConfig::keys());
    k
}

fn fit(
    cohort_dir: &Path,
    out: &Path,
    variant: Option<&str>,
    common: &Common,
    args: &[String],
) -> CmdResult {
    let start = Instant::now();
    let keys = fit_keys();
    let known: Vec<&str> = keys.iter().map(String::as_str).collect();
    let mut kv = load_kv(common, &known)?;
    if let Some(v) = variant {
        kv.insert("variant", v);
    }
    if let Some(s) = common.seed {
        kv.insert("seed", s);
    }
    if common.jobs > 0 {
        kv.insert("jobs", common.jobs);
    }
    let cfg = FitConfig::from_kv(&kv)?;
    let prior = PriorConfig::from_kv(&kv)?;
    let cohort = load_cohort(cohort_dir, &CohortSchema::default())?;

    let post = fit_variant(&cohort, &cfg, &prior)?;
    write_posterior(out, &post)?;
    let mut levels = String::from("id,last_level\n");
    for p in &cohort.patients {
        let _ = writeln!(levels, "{},{}", p.id, p.last_level().unwrap_or(0));
    }
    write_file(&out.join(LEVELS_FILE), &levels)?;
    let mut source = KvMap::new();
    if let Ok(rk) = KvMap::read(&cohort_dir.join(REPLICATE_FILE)) {
        source.extend(&rk);
    }
    write_file(&out.join(SOURCE_FILE), &source.render())?;

    let mut snapshot = cfg.to_kv();
    snapshot.0.remove("jobs");
    snapshot.extend(&prior.to_kv());
    let mut m = RunManifest::new("fit", args, &snapshot, cfg.seed);
    m.add_input(cohort_dir)?;
    if let Some(c) = &common.config {
        m.add_input(c)?;
    }
    m.timings
        .insert("total_seconds".into(), start.elapsed().as_secs_f64());
    m.finish(out, &out.join(MANIFEST))?;

    let worst = post
        .diagnostics
        .iter()
        .filter(|d| d.rhat.is_finite())
        .max_by(|a, b| a.rhat.total_cmp(&b.rhat));
    let min_ess = post
        .diagnostics
        .iter()
        .map(|d| d.ess)
        .filter(|e| e.is_finite())
        .fold(f64::INFINITY, f64::min);
    println!(
        "{} draws from {} chain(s) of the {} model",
        post.n_draws(),
        post.chains,
        cfg.variant.label()
    );
    if let Some(w) = worst {
        println!(
            "largest split R-hat {:.3} ({}); smallest ESS {:.0}",
            w.rhat, w.name, min_ess
        );
    }
    let flagged: Vec<&str> = post
        .diagnostics
        .iter()
        .filter(|d| d.rhat > 1.1)
        .map(|d| d.name.as_str())
        .collect();
    if !flagged.is_empty() {
        let shown = flagged.len().min(8);
        let more = if flagged.len() > shown {
            format!(" and {} more", flagged.len() - shown)
        } else {
            String::new()
        };
        println!("R-hat above 1.1: {}{more}", flagged[..shown].join(", "));
    }
    Ok(())
}

fn read_levels(fit_dir: &Path) -> CmdResult<BTreeMap<String, u8>> {
    let path = fit_dir.join(LEVELS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let bad = || {
            Failure::Run(Error::Parse {
                path: path.clone(),
                line: n as u64 + 1,
                msg: format!("expected id,last_level, got {line:?}"),
            })
        };
        let (id, lvl) = line.rsplit_once(',').ok_or_else(bad)?;
        out.insert(id.to_string(), lvl.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}

fn predict(
    fit_dir: &Path,
    patient: &str,
    horizon: Option<usize>,
    out: Option<&Path>,
    common: &Common,
    args: &[String],
) -> CmdResult {
    let start = Instant::now();
    let kv = load_kv(common, &DEF_KEYS)?;
    let mut def = def_from_kv(&kv)?;
    if let Some(h) = horizon {
        def.horizon = h;
    }
    let seed = common.seed.unwrap_or(PredictOptions::default().seed);
    let post = read_posterior(fit_dir)?;
    let i = post
        .find(patient)
        .ok_or_else(|| Error::UnknownPatient(patient.to_string()))?;
    let current = read_levels(fit_dir)?
        .get(patient)
        .copied()
        .ok_or_else(|| Error::UnknownPatient(patient.to_string()))?;
    let opts = PredictOptions {
        seed,
        ..PredictOptions::default()
    };
    let table = stepdown_table(&post, &Subject::Fitted(i), current, &def, &opts)?;
    let csv = table.to_csv();
    match out {
        None => print!("{csv}"),
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            write_file(path, &csv)?;
            let mut snapshot = KvMap::new();
            def_to_kv(&def, &mut snapshot);
            snapshot.insert("patient", patient);
            let mut m = RunManifest::new("predict", args, &snapshot, seed);
            m.add_input(fit_dir)?;
            m.timings
                .insert("total_seconds".into(), start.elapsed().as_secs_f64());
            let mut dest = path.as_os_str().to_owned();
            dest.push(".");
            dest.push(MANIFEST);
            m.finish(path, Path::new(&dest))?;
        }
    }
    Ok(())
}

fn replicate_dirs(truth: &Path) -> CmdResult<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(truth).map_err(|e| Error::io(truth, e))? {
        let p = entry.map_err(|e| Error::io(truth, e))?.path();
        if !p.is_dir() {
            continue;
        }
        if let Ok(kv) = KvMap::read(&p.join(REPLICATE_FILE)) {
            let mut r = usize::MAX;
            kv.take("replicate", &mut r)?;
            out.push((r, p));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(data(format!(
            "{} holds no replicate directories from simulate",
            truth.display()
        )));
    }
    Ok(out)
}

fn evaluate(
    truth: &Path,
    fits: &[PathBuf],
    out: &Path,
    common: &Common,
    args: &[String],
) -> CmdResult {
    let start = Instant::now();
    let mut keys = fit_keys();
    keys.extend(["n_boot", "methods"].map(String::from));
    let known: Vec<&str> = keys.iter().map(String::as_str).collect();
    let kv = load_kv(common, &known)?;
    let sim = KvMap::read(&truth.join(SIM_FILE))?;
    let t = TruthConfig::from_kv(&sim)?;
    let def = def_from_kv(&sim)?;
    let seed = common.seed.unwrap_or(t.seed);

    let mut fit_kv = kv.clone();
    fit_kv.0.remove("variant");
    if !fit_kv.0.contains_key("seed") {
        fit_kv.insert("seed", seed);
    }
    if common.jobs > 0 {
        fit_kv.insert("jobs", common.jobs);
    }
    let mut cfg = ComparisonConfig::desk_scale(seed);
    cfg.truth = t;
    cfg.fit = FitConfig::from_kv(&fit_kv)?;
    cfg.prior = PriorConfig::from_kv(&kv)?;
    cfg.def = def;
    kv.take("n_boot", &mut cfg.n_boot)?;
    sim.take("truth_paths", &mut cfg.truth_paths)?;
    cfg.edges = default_edges();
    if let Some(v) = kv.get("methods") {
        cfg.methods = v
            .split(',')
            .map(|s| s.parse())
            .collect::<Result<Vec<Variant>, _>>()?;
    }

    let reps = replicate_dirs(truth)?;
    cfg.replicates = reps.len();
    let schema = CohortSchema::default();
    let mut m = RunManifest::new("evaluate", args, &KvMap::new(), seed);
    m.add_input(&truth.join(SIM_FILE))?;

    let results: Vec<ReplicateResult> = if fits.is_empty() {
        for (_, dir) in &reps {
            m.add_input(dir)?;
        }
        reps.par_iter()
            .map(|(r, dir)| {
                let cohort = load_cohort(dir, &schema)?;
                let probs = read_true_probabilities(dir, &cohort)?;
                let mut rep = prepare_replicate(&cohort, *r, &probs, seed)?;
                fit_and_score(&cohort, &cfg, &mut rep);
                Ok(rep)
            })
            .collect::<Result<Vec<_>, Error>>()?
    } else {
        let mut by_rep: BTreeMap<usize, Vec<PathBuf>> = BTreeMap::new();
        for f in fits {
            let src = KvMap::read(&f.join(SOURCE_FILE))?;
            let mut r = usize::MAX;
            src.take("replicate", &mut r)?;
            if r == usize::MAX {
                return Err(data(format!(
                    "{} was not fitted to a simulated replicate",
                    f.display()
                )));
            }
            by_rep.entry(r).or_default().push(f.clone());
            m.add_input(f)?;
        }
        let mut variants = Vec::new();
        let mut out_reps = Vec::new();
        for (r, dirs) in by_rep {
            let (_, dir) = reps
                .iter()
                .find(|(k, _)| *k == r)
                .ok_or_else(|| data(format!("replicate {r} is not in {}", truth.display())))?;
            m.add_input(dir)?;
            let cohort = load_cohort(dir, &schema)?;
            let probs = read_true_probabilities(dir, &cohort)?;
            let mut rep = prepare_replicate(&cohort, r, &probs, seed)?;
            for f in dirs {
                let post = read_posterior(&f)?;
                if post
                    .patient_ids
                    .iter()
                    .ne(cohort.patients.iter().map(|p| &p.id))
                {
                    return Err(data(format!(
                        "{} was fitted to different patients than replicate {r}",
                        f.display()
                    )));
                }
                if !variants.contains(&post.variant) {
                    variants.push(post.variant);
                }
                match score_posterior(&post, &rep, &cfg.def, seed) {
                    Ok(s) => rep.methods.push(s),
                    Err(e) => rep.failures.push((post.variant, e.to_string())),
                }
            }
            out_reps.push(rep);
        }
        variants.sort();
        cfg.methods = variants;
        out_reps
    };
    let report = summarize(&cfg, results)?;
    report.write(out)?;

    let mut snapshot = cfg.fit.to_kv();
    snapshot.0.remove("jobs");
    snapshot.extend(&cfg.prior.to_kv());
    def_to_kv(&cfg.def, &mut snapshot);
    snapshot.insert("n_boot", cfg.n_boot);
    snapshot.insert(
        "methods",
        cfg.methods
            .iter()
            .map(|v| v.name())
            .collect::<Vec<_>>()
            .join(","),
    );
    m.config = snapshot.0;
    m.timings
        .insert("total_seconds".into(), start.elapsed().as_secs_f64());
    m.finish(out, &out.join(MANIFEST))?;

    for s in &report.methods {
        let r2: Vec<String> =
            s.r2.iter()
                .map(|(a, e)| format!("{a:.3} ({e:.3})"))
                .collect();
        println!("{:15} R2 {}", s.variant.label(), r2.join("  "));
    }
    Ok(())
}

fn validate(cohort_dir: &Path) -> CmdResult {
    let c = read_cohort_unchecked(cohort_dir, &CohortSchema::default())?;
    let rep = validate_cohort(&c);
    for v in &rep.violations {
        println!("{}: {} ({})", v.patient, v.rule, v.detail);
    }
    if rep.is_valid() {
        println!("{} patients, no violations", c.patients.len());
        Ok(())
    } else {
        let first = &rep.violations[0];
        Err(Failure::Run(Error::Validation {
            patient: first.patient.clone(),
            rule: first.rule.to_string(),
            detail: format!("{} violation(s) in total", rep.violations.len()),
        }))
    }
}
