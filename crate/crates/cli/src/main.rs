use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use nowcast_core::population::{generate_synthetic, load_population, save_population, Population, SynthConfig};
use nowcast_core::scenario::{run, ModelData, Scenario, SCENARIO_FILE};
use nowcast_core::taxben::Policy;
use nowcast_core::{data, Cents, Error};

mod manifest;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "nowcast", version, about = "Household income nowcasting microsimulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nowcast the population, apply every wave and write the distribution tables.
    Run(RunArgs),
    /// Load and check every input without simulating.
    Validate(InputArgs),
    /// Weekly rate an instrument pays at a date.
    Schedules(ScheduleArgs),
    /// Write a synthetic population.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Scenario file; the shipped scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Population directory (households.csv, persons.csv) or a synth.cfg file.
    #[arg(long)]
    population: Option<PathBuf>,
    /// Directory whose files replace the shipped model data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Directory with schedules.csv and tax_system.cfg.
    #[arg(long)]
    policy_dir: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Instrument {
    Pup,
    Ceib,
    Twss,
    Ewss,
}

#[derive(Args)]
struct ScheduleArgs {
    instrument: Instrument,
    /// Weekly euro amount the schedule is banded on: prior earnings for
    /// PUP and CEIB, average take-home pay for TWSS, gross pay for EWSS.
    #[arg(long)]
    earnings: Option<f64>,
    #[arg(long)]
    date: NaiveDate,
    #[arg(long)]
    policy_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator settings; the shipped synth.cfg when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "population")]
    out: PathBuf,
    #[arg(long)]
    print_config: bool,
}

struct Failure(Vec<Error>);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(vec![e])
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) | Error::NonConvergence { .. } => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

enum PopulationSource {
    Directory(PathBuf),
    Synthetic { config: String, origin: String },
}

impl PopulationSource {
    fn resolve(arg: Option<&Path>) -> Result<PopulationSource, Error> {
        match arg {
            Some(p) if p.is_dir() => Ok(PopulationSource::Directory(p.to_path_buf())),
            Some(p) => Ok(PopulationSource::Synthetic { config: read(p)?, origin: p.display().to_string() }),
            None => Ok(PopulationSource::Synthetic { config: data::SYNTH.to_string(), origin: "shipped".into() }),
        }
    }

    fn describe(&self) -> String {
        match self {
            PopulationSource::Directory(p) => p.display().to_string(),
            PopulationSource::Synthetic { origin, .. } => format!("synthetic ({origin} synth.cfg)"),
        }
    }

    fn load(&self, seed: u64) -> Result<Population, Error> {
        match self {
            PopulationSource::Directory(p) => load_population(p),
            PopulationSource::Synthetic { config, .. } => generate_synthetic(&SynthConfig::parse(config)?, seed),
        }
    }
}

fn load_scenario(args: &InputArgs) -> Result<(Scenario, String), Error> {
    let mut s = match &args.scenario {
        Some(p) => Scenario::parse(&p.display().to_string(), &read(p)?, p.parent())?,
        None => Scenario::shipped(),
    };
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    let origin = args.scenario.as_ref().map_or("shipped".into(), |p| p.display().to_string());
    Ok((s, origin))
}

fn print_run_config(
    args: &InputArgs,
    scenario: &Scenario,
    origin: &str,
    out: Option<(&Path, usize)>,
) -> Result<(), Error> {
    let dir = |p: &Option<PathBuf>| p.as_ref().map_or("shipped".into(), |p| p.display().to_string());
    println!("# inputs");
    println!("scenario = {origin}");
    println!("population = {}", PopulationSource::resolve(args.population.as_deref())?.describe());
    println!("data_dir = {}", dir(&args.data_dir));
    println!("policy_dir = {}", dir(&args.policy_dir));
    println!("seed = {}", scenario.seed);
    if let Some((out, threads)) = out {
        println!("out = {}", out.display());
        println!("threads = {threads}");
    }
    println!("\n# resolved scenario ({SCENARIO_FILE})");
    print!("{}", scenario.to_config());
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let (scenario, origin) = load_scenario(&a.inputs)?;
    if a.inputs.print_config {
        print_run_config(&a.inputs, &scenario, &origin, Some((&a.out, a.threads)))?;
        return Ok(());
    }
    let source = PopulationSource::resolve(a.inputs.population.as_deref())?;
    let pop = source.load(scenario.seed)?;
    let model = ModelData::load(a.inputs.data_dir.as_deref(), a.inputs.policy_dir.as_deref())?;
    let manifest = Manifest::build(&scenario, &source, a.inputs.data_dir.as_deref(), a.inputs.policy_dir.as_deref())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {} worker threads: {e}", a.threads)))?;
    let output = pool.install(|| run(&pop, &scenario, &model))?;

    output.write(&a.out)?;
    let path = a.out.join("manifest.txt");
    std::fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;

    println!("{:<16} {:>8} {:>8} {:>8} {:>8}", "wave", "market", "gross", "disp", "disp*");
    for w in &output.waves {
        let g = w.summary.gini;
        println!("{:<16} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", w.result.label, g[0], g[1], g[2], g[3]);
    }
    println!("wrote {} files to {}", output.files().len() + 1, a.out.display());
    Ok(())
}

fn cmd_validate(a: &InputArgs) -> Result<(), Failure> {
    let mut errors = Vec::new();
    let scenario = match load_scenario(a) {
        Ok((s, origin)) => {
            if a.print_config {
                print_run_config(a, &s, &origin, None)?;
            }
            Some(s)
        }
        Err(e) => {
            errors.push(e);
            None
        }
    };
    let seed = scenario.as_ref().map_or(0, |s| s.seed);
    if let Err(e) = PopulationSource::resolve(a.population.as_deref()).and_then(|s| s.load(seed)) {
        errors.push(e);
    }
    errors.extend(ModelData::check(a.data_dir.as_deref(), a.policy_dir.as_deref()));
    if !errors.is_empty() {
        return Err(Failure(errors));
    }
    println!("inputs valid");
    Ok(())
}

fn cmd_schedules(a: &ScheduleArgs) -> Result<(), Failure> {
    let policy = match &a.policy_dir {
        Some(p) => Policy::load(p)?,
        None => Policy::shipped(),
    };
    let s = &policy.schedules;
    let amount = a.earnings.map(Cents::from_euros);
    let need = || amount.ok_or_else(|| Error::invalid("--earnings is required for this instrument"));
    let rate = match a.instrument {
        Instrument::Pup => s.pup_rate(need()?, a.date)?,
        Instrument::Ceib => s.ceib_rate_for(amount, a.date)?,
        Instrument::Twss => s.twss_subsidy(need()?, a.date)?,
        Instrument::Ewss => s.ewss_subsidy(need()?, a.date)?,
    };
    println!("{:.2}", rate.to_euros());
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let text = match &a.config {
        Some(p) => read(p)?,
        None => data::SYNTH.to_string(),
    };
    let cfg = SynthConfig::parse(&text)?;
    if a.print_config {
        println!("seed = {}\nout = {}\n", a.seed, a.out.display());
        print!("{text}");
        return Ok(());
    }
    let pop = generate_synthetic(&cfg, a.seed)?;
    save_population(&pop, &a.out)?;
    println!("wrote {} households, {} persons to {}", pop.households().len(), pop.persons().len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Schedules(a) => cmd_schedules(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(errors)) => {
            for e in &errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(errors.iter().map(exit_code).max().unwrap_or(1))
        }
    }
}
