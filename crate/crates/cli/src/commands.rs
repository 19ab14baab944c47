//! Command implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Parser;
use mixlogit_core::dataset::{io::read_choice_data, ColumnSchema};
use mixlogit_core::designsim::{
    generate_design, generate_population, simulate_choices, write_simulation, DesignPlan, DesignStrategy, Marginals,
    TruthParameters, TruthRecord,
};
use mixlogit_core::modelspec::{embed_parameters, load_spec, ModelSpec};
use mixlogit_core::mslestim::{estimate, BfgsOptions, EstimateOptions, EstimationResult};
use mixlogit_core::postfit::{estimates_markdown, vot_markdown, vot_table, ComparisonReport};
use mixlogit_core::qmc::allocate_draws;

use crate::manifest::{hash_file, sha256_hex, RunManifest};
use crate::{Cli, Command, CompareArgs, DrawsDumpArgs, EstimateArgs, ReplayArgs, SimulateArgs, VotArgs};

pub enum Failure {
    /// Bad arguments or inputs that fail validation.
    Usage(anyhow::Error),
    NotConverged(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

/// Files read and written by one command.
#[derive(Default)]
struct Io {
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

impl Io {
    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.insert(path.display().to_string(), sha256_hex(bytes));
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display())).usage()?;
        self.input(path, &bytes);
        Ok(bytes)
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> anyhow::Result<()> {
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("--threads must be at least 1")));
        }
        // A second call (replay) keeps the pool from the first.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Replay(args) = &cli.command {
        return replay(args);
    }
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))
        .usage()?;
    let started = Instant::now();
    let mut io = Io::default();
    let (name, outcome) = match &cli.command {
        Command::Simulate(a) => ("simulate".to_string(), simulate(&cli, a, &mut io)),
        Command::Estimate(a) => {
            let stem = a.name.clone().unwrap_or_else(|| stem_for(&a.spec));
            (stem.clone(), estimate_cmd(&cli, a, &stem, &mut io))
        }
        Command::Compare(a) => ("compare".to_string(), compare(&cli, a, &mut io)),
        Command::Vot(a) => ("vot".to_string(), vot(&cli, a, &mut io)),
        Command::DrawsDump(a) => ("draws-dump".to_string(), draws_dump(&cli, a, &mut io)),
        Command::Replay(_) => unreachable!("handled above"),
    };
    if matches!(outcome, Ok(()) | Err(Failure::NotConverged(_))) {
        let mut outputs = BTreeMap::new();
        for p in &io.outputs {
            outputs.insert(p.display().to_string(), hash_file(p)?);
        }
        let manifest = RunManifest {
            command: command_name(&cli.command).into(),
            args: argv.to_vec(),
            seed: cli.seed,
            threads: cli.threads,
            inputs: io.inputs,
            outputs,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: started.elapsed().as_secs_f64(),
        };
        manifest.write(&cli.out_dir.join(format!("{name}.manifest.json")))?;
    }
    outcome
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Compare(_) => "compare",
        Command::Vot(_) => "vot",
        Command::DrawsDump(_) => "draws-dump",
        Command::Replay(_) => "replay",
    }
}

fn stem_for(spec: &str) -> String {
    Path::new(spec).file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_spec(name: &str, io: &mut Io) -> Result<ModelSpec, Failure> {
    let path = Path::new(name);
    if path.is_file() {
        io.read(path)?;
    }
    load_spec(name).usage()
}

fn to_json<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn simulate(cli: &Cli, a: &SimulateArgs, io: &mut Io) -> Result<(), Failure> {
    let spec = read_spec(&a.spec, io)?;
    let strategy = match a.design.as_str() {
        "orthogonal-main-effects" => DesignStrategy::OrthogonalMainEffects,
        "random-balanced" => DesignStrategy::RandomBalanced,
        other => return Err(Failure::Usage(anyhow!("unknown design strategy `{other}`"))),
    };
    if a.respondents == 0 || a.tasks == 0 {
        return Err(Failure::Usage(anyhow!("--respondents and --tasks must be positive")));
    }
    let truth = match &a.truth {
        None => TruthParameters::reference(&spec).usage()?,
        Some(path) => {
            let bytes = io.read(path)?;
            if let Ok(record) = serde_json::from_slice::<TruthRecord>(&bytes) {
                record.truth
            } else {
                let values: BTreeMap<String, f64> =
                    serde_json::from_slice(&bytes).context("truth file is neither a truth record nor a name map").usage()?;
                TruthParameters { values }
            }
        }
    };
    truth.theta_for(&spec).usage()?;
    let plan = DesignPlan { strategy, tasks_per_respondent: a.tasks };
    let population = generate_population(a.respondents, cli.seed, &Marginals::default());
    let skeleton = generate_design(&plan, &population, cli.seed).usage()?;
    let data = simulate_choices(&skeleton, &spec, &truth, cli.seed).usage()?;
    let record = TruthRecord {
        spec: spec.name.clone(),
        class: spec.class,
        seed: cli.seed,
        design: plan,
        n_respondents: a.respondents,
        truth,
    };
    let (csv, json) = write_simulation(&cli.out_dir, &data, &record).map_err(anyhow::Error::from)?;
    io.outputs.extend([csv.clone(), json]);
    println!("wrote {} ({} respondents, {} tasks)", csv.display(), data.n_respondents(), data.n_tasks());
    Ok(())
}

fn load_result(path: &Path, io: &mut Io) -> Result<EstimationResult, Failure> {
    let bytes = io.read(path)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing result {}", path.display())).usage()
}

fn estimate_cmd(cli: &Cli, a: &EstimateArgs, stem: &str, io: &mut Io) -> Result<(), Failure> {
    let spec = read_spec(&a.spec, io)?;
    let bytes = io.read(&a.data)?;
    let data = read_choice_data(&bytes[..], &ColumnSchema::default(), a.data.display().to_string()).usage()?;
    let mut r = a.draws;
    if r == 0 {
        return Err(Failure::Usage(anyhow!("--draws must be positive")));
    }
    if spec.n_draw_dims() == 0 && r != 1 {
        eprintln!("warning: {} has no random terms; using 1 draw instead of {r}", spec.name);
        r = 1;
    }
    let start = match &a.start {
        None => None,
        Some(path) => {
            let prev = load_result(path, io)?;
            Some(embed_parameters(&prev.spec, &prev.estimates, &spec, 0.1))
        }
    };
    let draws = allocate_draws(&spec, data.n_respondents(), r, cli.seed).usage()?;
    let options = EstimateOptions {
        bfgs: BfgsOptions { max_iter: a.max_iter, tol_grad: a.tol_grad, tol_rel: a.tol_rel, ..BfgsOptions::default() },
        start,
        compute_covariance: !a.no_covariance,
        kr_draws: a.kr_draws,
        seed: cli.seed,
        restarts: a.restarts,
    };
    let (mut result, failure) = match estimate(&spec, &data, &draws, &options) {
        Ok(r) => (r, None),
        Err(e) => match e.last_iterate() {
            Some(last) => (last.clone(), Some(e.to_string())),
            None => return Err(Failure::Other(e.into())),
        },
    };
    result.data_sha256 = Some(sha256_hex(&bytes));
    io.write(cli.out_dir.join(format!("{stem}.json")), &to_json(&result)?)?;
    let table = estimates_markdown(&result);
    io.write(cli.out_dir.join(format!("{stem}.md")), &table)?;
    println!("{table}");
    match failure {
        Some(msg) => Err(Failure::NotConverged(msg)),
        None => Ok(()),
    }
}

fn compare(cli: &Cli, a: &CompareArgs, io: &mut Io) -> Result<(), Failure> {
    if a.results.len() < 2 {
        return Err(Failure::Usage(anyhow!("compare needs at least two result files")));
    }
    let results: Vec<EstimationResult> = a.results.iter().map(|p| load_result(p, io)).collect::<Result<_, _>>()?;
    let hash = &results[0].data_sha256;
    for (r, p) in results.iter().zip(&a.results).skip(1) {
        if &r.data_sha256 != hash {
            return Err(Failure::Usage(anyhow!(
                "data hash mismatch: {} was estimated on different data than {}",
                p.display(),
                a.results[0].display()
            )));
        }
    }
    let report = ComparisonReport::from_results(&results).usage()?;
    io.write(cli.out_dir.join("comparison.json"), &to_json(&report)?)?;
    let md = report.to_markdown();
    io.write(cli.out_dir.join("comparison.md"), &md)?;
    println!("{md}");
    Ok(())
}

fn vot(cli: &Cli, a: &VotArgs, io: &mut Io) -> Result<(), Failure> {
    let mut result = match (&a.result, &a.reference) {
        (Some(path), _) => load_result(path, io)?,
        (None, Some(name)) => {
            let spec = read_spec(name, io)?;
            let theta = TruthParameters::reference(&spec).and_then(|t| t.theta_for(&spec)).usage()?;
            EstimationResult::supplied(&spec, theta, None, cli.seed).usage()?
        }
        (None, None) => return Err(Failure::Usage(anyhow!("give a result file or --reference"))),
    };
    if let Some(k) = a.kr_draws {
        result.kr_draws = k;
    }
    let rows = vot_table(&result, a.income_owner, a.income_renter).usage()?;
    io.write(cli.out_dir.join("vot.json"), &to_json(&rows)?)?;
    let md = vot_markdown(&rows);
    io.write(cli.out_dir.join("vot.md"), &md)?;
    println!("{md}");
    Ok(())
}

fn draws_dump(cli: &Cli, a: &DrawsDumpArgs, io: &mut Io) -> Result<(), Failure> {
    let spec = read_spec(&a.spec, io)?;
    let draws = allocate_draws(&spec, a.respondents, a.draws, cli.seed).usage()?;
    let path = cli.out_dir.join(&a.file);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    draws.write_to(BufWriter::new(file)).map_err(anyhow::Error::from)?;
    io.outputs.push(path.clone());
    println!("wrote {} ({} x {} x {})", path.display(), draws.n_respondents, draws.n_draws, draws.dims());
    Ok(())
}

fn replay(a: &ReplayArgs) -> Result<(), Failure> {
    let manifest = RunManifest::load(&a.manifest).usage()?;
    let cli = Cli::try_parse_from(&manifest.args).map_err(|e| Failure::Usage(anyhow!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::Usage(anyhow!("a replay manifest cannot be replayed")));
    }
    match run(cli, &manifest.args) {
        Ok(()) | Err(Failure::NotConverged(_)) => {}
        Err(e) => return Err(e),
    }
    let mut differ = Vec::new();
    for (path, expected) in &manifest.outputs {
        if &hash_file(Path::new(path))? != expected {
            differ.push(path.clone());
        }
    }
    if !differ.is_empty() {
        return Err(Failure::Usage(anyhow!("replayed outputs differ: {}", differ.join(", "))));
    }
    println!("replayed {} outputs bitwise identical", manifest.outputs.len());
    Ok(())
}

