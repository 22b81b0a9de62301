use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use corrslam::bench::{bench, standard_query};
use corrslam::csm::packet::{decode_result, from_bytes, to_bytes};
use corrslam::csm::{Algorithm, CsmEngine};
use corrslam::eval::{evaluate_with_tolerance, parse_relations, serialize_relations, Trajectory, DEFAULT_TIME_TOLERANCE};
use corrslam::io::carmen::{parse_carmen, serialize_carmen};
use corrslam::io::render::{render_pgm, render_png};
use corrslam::io::sim::{scene, simulate, SCENES};
use corrslam::pipeline::{laser_steps, run, Method, RunConfig};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "corrslam", version, about = "2D LiDAR SLAM with a correlative scan-matching engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Carmen log to process.
    #[arg(long)]
    log: PathBuf,
    /// Relations file; when given, report.txt is written.
    #[arg(long)]
    relations: Option<PathBuf>,
    /// TOML configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatcherArg {
    Reference,
    Optimized,
    Oracle,
}

impl From<MatcherArg> for Algorithm {
    fn from(m: MatcherArg) -> Self {
        match m {
            MatcherArg::Reference => Algorithm::Reference,
            MatcherArg::Optimized => Algorithm::Optimized,
            MatcherArg::Oracle => Algorithm::Oracle,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Particle-filter SLAM.
    Pf(RunArgs),
    /// Graph SLAM with loop closure.
    Graph(RunArgs),
    /// Hector SLAM; `--robust` seeds each step with a correlative match.
    Hector {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        robust: bool,
    },
    /// Runs the queries of a .csmq file and prints "nx ny ntheta score" per query.
    Match {
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value = "optimized")]
        matcher: MatcherArg,
        /// Also write the result packets as a .csmr file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative pose error of a trajectory against a relations file.
    Eval {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        relations: PathBuf,
        /// Maximum timestamp mismatch, seconds.
        #[arg(long, default_value_t = DEFAULT_TIME_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a synthetic log, its ground truth and relations.
    Simulate {
        /// One of: loop, corridor.
        #[arg(long, default_value = "loop")]
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sim")]
        out: PathBuf,
    },
    /// Times the pruned matcher against the exhaustive one on the standard query.
    Bench {
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_toml(&read(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn run_slam(method: Method, args: &RunArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.pf.seed = seed;
    }
    let log = parse_carmen(&read(&args.log)?, &cfg.carmen).with_context(|| format!("parsing {}", args.log.display()))?;
    for d in &log.diagnostics {
        eprintln!("warning: {}: {d}", args.log.display());
    }
    let relations = match &args.relations {
        Some(p) => {
            let (rels, errors) = parse_relations(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
            for e in &errors {
                eprintln!("warning: {}: {e}", p.display());
            }
            Some(rels)
        }
        None => None,
    };
    let steps = laser_steps(&log.entries, &cfg.preprocess);
    let out = run(method, &steps, &cfg)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("trajectory.txt"), out.trajectory.to_text())?;
    render_pgm(&out.map, create(&args.out.join("map.pgm"))?)?;
    let poses: Vec<_> = out.trajectory.iter().map(|(_, p)| p).collect();
    render_png(&out.map, &poses, create(&args.out.join("map.png"))?)?;
    let mut jl = create(&args.out.join("run.jsonl"))?;
    for line in &out.step_log {
        writeln!(jl, "{line}")?;
    }
    jl.flush()?;
    println!("{}: {} scans in {:.2} s", method.name(), steps.len(), out.elapsed_s);
    if let Some(rels) = relations {
        let rep = evaluate_with_tolerance(&out.trajectory, &rels, DEFAULT_TIME_TOLERANCE)?;
        let text = format!("{rep}{}", rep.key_values());
        print!("{rep}");
        fs::write(args.out.join("report.txt"), text)?;
    }
    Ok(())
}

fn run_match(query: &Path, matcher: MatcherArg, out: Option<&Path>) -> Result<()> {
    let bytes = fs::read(query).with_context(|| format!("reading {}", query.display()))?;
    let packets = from_bytes(&bytes)?;
    let mut engine = CsmEngine::new(matcher.into());
    let results = engine.run_packets(&packets)?;
    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    for r in &results {
        let r = decode_result(*r);
        writeln!(o, "{} {} {} {}", r.nx, r.ny, r.ntheta, r.score)?;
    }
    if let Some(p) = out {
        fs::write(p, to_bytes(&results))?;
    }
    Ok(())
}

fn run_eval(trajectory: &Path, relations: &Path, tolerance: f64, out: Option<&Path>) -> Result<()> {
    let traj = Trajectory::parse(&read(trajectory)?).with_context(|| format!("parsing {}", trajectory.display()))?;
    let (rels, errors) = parse_relations(&read(relations)?).with_context(|| format!("parsing {}", relations.display()))?;
    for e in &errors {
        eprintln!("warning: {}: {e}", relations.display());
    }
    let rep = evaluate_with_tolerance(&traj, &rels, tolerance)?;
    print!("{rep}{}", rep.key_values());
    if let Some(p) = out {
        fs::write(p, format!("{rep}{}", rep.key_values()))?;
    }
    Ok(())
}

fn run_simulate(name: &str, seed: u64, out: &Path) -> Result<()> {
    let Some(world) = scene(name) else {
        bail!("unknown scene {name:?}; expected one of {}", SCENES.join(", "));
    };
    let sim = simulate(&world, seed);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("log.carmen"), serialize_carmen(&sim.log, &sim.carmen))?;
    fs::write(out.join("ground_truth.txt"), sim.ground_truth.to_text())?;
    fs::write(out.join("relations.txt"), serialize_relations(&sim.relations))?;
    println!("{name}: {} scans, {} relations written to {}", sim.log.len(), sim.relations.len(), out.display());
    Ok(())
}

fn run_bench(runs: usize, seed: u64) -> Result<()> {
    let q = standard_query(seed);
    let r = bench(&q, runs)?;
    println!("candidates: {}", r.candidates);
    println!("optimized median: {:.3} ms", r.optimized_median_s * 1e3);
    println!("coarse build:     {:.3} ms", r.prepare_median_s * 1e3);
    println!("oracle median:    {:.3} ms", r.oracle_median_s * 1e3);
    println!("speedup: {:.1}x over {} runs, results {}", r.speedup, r.runs, if r.agree { "agree" } else { "DIFFER" });
    if !r.agree {
        bail!("optimized and oracle results differ");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pf(a) => run_slam(Method::ParticleFilter, a),
        Command::Graph(a) => run_slam(Method::Graph, a),
        Command::Hector { run, robust } => run_slam(Method::Hector { robust: *robust }, run),
        Command::Match { query, matcher, out } => run_match(query, *matcher, out.as_deref()),
        Command::Eval {
            trajectory,
            relations,
            tolerance,
            out,
        } => run_eval(trajectory, relations, *tolerance, out.as_deref()),
        Command::Simulate { scene, seed, out } => run_simulate(scene, *seed, out),
        Command::Bench { runs, seed } => run_bench(*runs, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
