use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use assisted_mpc::polytope::vertices_2d;
use assisted_mpc::riccati::spectral_radius;
use assisted_mpc::scenario::{load_scenario, ConfigError, Scenario};
use assisted_mpc::sim::{fmt_sig9, run_scenario, sweep, write_atomic, write_run};

#[derive(Parser)]
#[command(name = "assisted-mpc", version, about = "Cloud-assisted MPC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv, drops.csv and metrics.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "ASSISTED_MPC_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Print the Riccati solution, the gain and the closed-loop eigenvalues.
    Lqr { scenario: PathBuf },
    /// Write the terminal set rows and, for 2-D models, its vertices.
    TerminalSet {
        scenario: PathBuf,
        #[arg(long, env = "ASSISTED_MPC_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run consecutive seeds and write mean/std of every metric.
    Sweep {
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, env = "ASSISTED_MPC_OUT", default_value = "out")]
        out: PathBuf,
    },
}

enum Failure {
    Config(ConfigError),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<assisted_mpc::Error> for Failure {
    fn from(e: assisted_mpc::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { scenario, seed, out } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            let run = run_scenario(&s)?;
            write_run(&out, &s, &run)?;
            println!(
                "{}: {} cycles, closed loop {:.3}, violations {}, iae {:.4} -> {}",
                s.name,
                run.metrics.cycles,
                run.metrics.closed_loop_fraction,
                run.metrics.violation_count,
                run.metrics.iae,
                out.display()
            );
        }
        Command::Lqr { scenario } => {
            let s = load_scenario(&scenario)?;
            print_lqr(&s);
        }
        Command::TerminalSet { scenario, out } => {
            let s = load_scenario(&scenario)?;
            terminal_set(&s, &out)?;
        }
        Command::Sweep { scenario, seeds, out } => {
            if seeds == 0 {
                return Err(Failure::Config(ConfigError {
                    path: "--seeds".into(),
                    message: "must be at least 1".into(),
                }));
            }
            let s = load_scenario(&scenario)?;
            let report = sweep(&s, seeds)?;
            std::fs::create_dir_all(&out)?;
            let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Other(e.to_string()))?;
            json.push('\n');
            write_atomic(&out.join("sweep.json"), json.as_bytes())?;
            for (k, v) in &report.aggregate {
                println!("{k:>24}  mean {:<14} std {}", fmt_sig9(v.mean), fmt_sig9(v.std));
            }
        }
    }
    Ok(())
}

fn print_lqr(s: &Scenario) {
    let spec = &s.spec;
    println!("P =");
    for row in spec.lqr.p.row_iter() {
        println!("  {}", row.iter().map(|v| format!("{:>14}", fmt_sig9(*v))).collect::<String>());
    }
    println!("K =");
    for row in spec.lqr.k.row_iter() {
        println!("  {}", row.iter().map(|v| format!("{:>14}", fmt_sig9(*v))).collect::<String>());
    }
    let acl = spec.lqr.closed_loop(&spec.model.a, &spec.model.b);
    println!("closed-loop eigenvalues:");
    for l in acl.complex_eigenvalues().iter() {
        println!("  {} {:+}i  (|λ| = {})", fmt_sig9(l.re), fmt_sig9(l.im), fmt_sig9(l.norm()));
    }
    println!("spectral radius {}", fmt_sig9(spectral_radius(&acl)));
    println!("riccati iterations {}", spec.lqr.iterations);
}

fn terminal_set(s: &Scenario, out: &Path) -> Result<(), Failure> {
    let sp = s.setpoint_at(0.0).clone();
    let Some(t) = s.spec.terminal_set(&sp)? else {
        return Err(Failure::Config(ConfigError {
            path: "terminal.enabled".into(),
            message: "terminal set is disabled in this scenario".into(),
        }));
    };
    std::fs::create_dir_all(out)?;
    let n = t.dim();
    let mut csv: Vec<String> = vec![(0..n).map(|i| format!("f{i}")).chain(["bound".to_owned()]).collect::<Vec<_>>().join(",")];
    for i in 0..t.rows() {
        let row: Vec<String> = t.matrix().row(i).iter().chain(std::iter::once(&t.bounds()[i])).map(|v| fmt_sig9(*v)).collect();
        csv.push(row.join(","));
    }
    write_atomic(&out.join("terminal_set.csv"), (csv.join("\n") + "\n").as_bytes())?;
    println!("{} rows in {} dimensions", t.rows(), n);
    if n == 2 {
        let mut v = vec!["x0,x1".to_owned()];
        for p in vertices_2d(&t)? {
            let p = [p[0] + sp[0], p[1] + sp[1]];
            println!("  ({}, {})", fmt_sig9(p[0]), fmt_sig9(p[1]));
            v.push(format!("{},{}", fmt_sig9(p[0]), fmt_sig9(p[1])));
        }
        write_atomic(&out.join("terminal_vertices.csv"), (v.join("\n") + "\n").as_bytes())?;
    }
    Ok(())
}
