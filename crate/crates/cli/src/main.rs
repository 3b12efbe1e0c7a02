use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skylink::harness::case1::case1_seeds;
use skylink::harness::report::{
    case1_summary, compliance_metrics, summary_text, sweep_table, write_case1, write_case2, write_plan_csv, write_run,
};
use skylink::harness::{run_case1, run_case2, run_closed_loop, Prepared, RunSpec, Scenario};
use skylink::radio::build_radio_map;
use skylink::requirements::{check_compliance, ProfileSet};
use skylink::Error;

#[derive(Parser)]
#[command(name = "sim", version, about = "Communication and control co-design simulator for cellular-connected UAVs")]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the SINR radio map and write it as CSV.
    RadioMap {
        scenario: PathBuf,
        #[arg(short, long, default_value = "map.csv")]
        output: PathBuf,
    },
    /// Plan one UAV and write its reference trajectory.
    Plan {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        uav: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fly the scenario with its configured policy.
    Run { scenario: PathBuf },
    /// Compare periodic MPC with self-triggered MPC over several seeds.
    Case1 {
        scenario: PathBuf,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Sweep fleet size and grants per slot, e.g. `--sweep N=4,8,16,32,M=1,2,4`.
    Case2 {
        scenario: PathBuf,
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Print the effective scenario with every defaulted key listed.
    Echo { scenario: PathBuf },
    /// Run the scenario and check it against a service profile.
    Check {
        scenario: PathBuf,
        #[arg(long)]
        profile: Option<String>,
        /// Use the lenient end of range requirements.
        #[arg(long)]
        lenient: bool,
    },
}

enum Failure {
    Error(Error),
    Usage(String),
    NonCompliant,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(Error::Io(e))
    }
}

fn parse_sweep(s: &str) -> Result<(Vec<usize>, Vec<usize>), String> {
    let (mut ns, mut ms) = (Vec::new(), Vec::new());
    let mut target: Option<char> = None;
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let value = if let Some(v) = tok.strip_prefix("N=") {
            target = Some('N');
            v
        } else if let Some(v) = tok.strip_prefix("M=") {
            target = Some('M');
            v
        } else {
            tok
        };
        let n: usize = value.parse().map_err(|_| format!("bad sweep entry `{tok}`"))?;
        match target {
            Some('N') => ns.push(n),
            Some('M') => ms.push(n),
            _ => return Err("sweep must start with N= or M=".into()),
        }
    }
    if ns.is_empty() || ms.is_empty() || ms.contains(&0) {
        return Err("sweep needs non-empty N= and M= lists with M >= 1".into());
    }
    Ok((ns, ms))
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut sc = Scenario::load(path).map_err(Error::from)?;
    if let Some(s) = seed {
        sc.set_seed(s);
    }
    Ok(sc)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn write_echo(dir: &Path, sc: &Scenario) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scenario.echo.toml"), sc.echo())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let say = |s: &str| {
        if !cli.quiet {
            print!("{s}");
        }
    };
    match &cli.command {
        Command::RadioMap { scenario, output } => {
            let sc = load(scenario, cli.seed)?;
            let map = build_radio_map(&sc.config.environment, sc.config.radio.gamma_th_db);
            write_file(output, |w| map.write_csv(w))?;
            say(&format!(
                "{} cells, {} feasible -> {}\n",
                map.grid.len(),
                map.feasible_count(),
                output.display()
            ));
        }
        Command::Plan { scenario, uav, output } => {
            let sc = load(scenario, cli.seed)?;
            let fleet = sc.uavs();
            let spec = fleet
                .get(*uav)
                .ok_or_else(|| Failure::Usage(format!("uav {uav} not in scenario ({} UAVs)", fleet.len())))?;
            let prep = Prepared::new(&sc, std::slice::from_ref(spec))?;
            let path = output
                .clone()
                .unwrap_or_else(|| cli.out_dir.join(format!("plan_uav{uav}.csv")));
            write_file(&path, |w| write_plan_csv(w, &prep, 0))?;
            let p = &prep.uavs[0];
            say(&format!(
                "uav {uav}: {} regions, {} waypoints, length {:.3} m, {} samples -> {}\n",
                p.plan.regions.len(),
                p.plan.waypoints.len(),
                p.plan.length(),
                p.reference.len(),
                path.display()
            ));
        }
        Command::Run { scenario } => {
            let sc = load(scenario, cli.seed)?;
            let prep = Prepared::new(&sc, &sc.uavs())?;
            let out = run_closed_loop(&prep, &RunSpec::from_scenario(&prep))?;
            write_run(&cli.out_dir, &out)?;
            write_echo(&cli.out_dir, &sc)?;
            say(&summary_text(&out));
        }
        Command::Case1 { scenario, seeds } => {
            let sc = load(scenario, cli.seed)?;
            let prep = Prepared::new(&sc, &sc.uavs())?;
            let count = seeds.unwrap_or(sc.config.case1.seeds);
            let report = run_case1(&prep, &case1_seeds(sc.config.seed, count))?;
            write_case1(&cli.out_dir, &prep, &report)?;
            write_echo(&cli.out_dir, &sc)?;
            say(&case1_summary(&report));
        }
        Command::Case2 { scenario, sweep, seeds } => {
            let sc = load(scenario, cli.seed)?;
            let (ns, ms) = match sweep {
                Some(s) => parse_sweep(s).map_err(Failure::Usage)?,
                None => (sc.config.case2.n.clone(), sc.config.case2.m.clone()),
            };
            let report = run_case2(&sc, &ns, &ms, seeds.unwrap_or(sc.config.case2.seeds))?;
            write_case2(&cli.out_dir, &report)?;
            write_echo(&cli.out_dir, &sc)?;
            say(&sweep_table(&report));
        }
        Command::Echo { scenario } => {
            let sc = load(scenario, cli.seed)?;
            print!("{}", sc.echo());
        }
        Command::Check {
            scenario,
            profile,
            lenient,
        } => {
            let sc = load(scenario, cli.seed)?;
            let name = profile
                .clone()
                .or_else(|| sc.config.profile.clone())
                .ok_or_else(|| Failure::Usage("no --profile given and the scenario names none".into()))?;
            let set = ProfileSet::builtin();
            let prof = set.get(&name)?.clone();
            let prep = Prepared::new(&sc, &sc.uavs())?;
            let out = run_closed_loop(&prep, &RunSpec::from_scenario(&prep))?;
            let report = check_compliance(&compliance_metrics(&out, sc.config.plant.dt), &prof, *lenient);
            fs::create_dir_all(&cli.out_dir)?;
            fs::write(cli.out_dir.join("compliance.txt"), report.to_text())?;
            fs::write(cli.out_dir.join("compliance.toml"), report.to_toml())?;
            say(&report.to_text());
            if !report.pass {
                return Err(Failure::NonCompliant);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NonCompliant) => ExitCode::from(4),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::UnknownProfile { .. } => 2,
                Error::Plan(_) | Error::UavPlan { .. } => 3,
                _ => 1,
            })
        }
    }
}
