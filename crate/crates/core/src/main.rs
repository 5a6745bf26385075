use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oam_memory::config::ExperimentConfig;
use oam_memory::harness::{error_json, exit_code, parse_list, replay, run_command, Command};
use oam_memory::quantum::BasisLabel;
use oam_memory::{Error, Result};

/// EIT quantum-memory simulator for OAM qubits.
#[derive(Parser)]
#[command(name = "oam-memory", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON config layered over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Base seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all available).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// One storage run: result JSON, waveforms and count histogram.
    Simulate {
        #[arg(long)]
        l: Option<u32>,
        /// Fixed optical depth instead of the mode overlap.
        #[arg(long)]
        od: Option<f64>,
    },
    /// Storage efficiency against OAM order, l = 0..=l_max.
    ScanOam {
        #[arg(long)]
        l_max: Option<u32>,
    },
    /// Storage efficiency against one named parameter.
    Scan {
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long)]
        values: Option<String>,
    },
    /// Simulated six-projector tomography with bootstrap error bars.
    Tomography {
        /// Input basis state (G, R, H, V, D, A); otherwise the config qubit.
        #[arg(long)]
        state: Option<BasisLabel>,
        /// Send the qubit through the memory first.
        #[arg(long)]
        stored: bool,
        #[arg(long)]
        nbar: Option<f64>,
        /// Comma-separated extra mean photon numbers.
        #[arg(long)]
        nbar_scan: Option<String>,
    },
    /// Classical fidelity threshold for weak coherent inputs.
    Threshold {
        /// Comma-separated mean photon numbers.
        #[arg(long)]
        nbar: Option<String>,
    },
    /// Maximize storage efficiency over probe/protocol parameters.
    Optimize {
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Fit the free model parameters to the target efficiencies.
    Calibrate,
    /// Re-run a command from the config embedded in its result JSON.
    Replay { result: PathBuf },
}

fn list_json(s: &str) -> Result<String> {
    Ok(serde_json::to_string(&parse_list(s)?)?)
}

/// Turns subcommand flags into config overrides, so the resolved config
/// alone determines the run.
fn command_overrides(cmd: &Cmd) -> Result<(Option<Command>, Vec<String>)> {
    let mut ov = Vec::new();
    let c = match cmd {
        Cmd::Simulate { l, od } => {
            if let Some(l) = l {
                ov.push(format!("mode.l={l}"));
            }
            if let Some(od) = od {
                ov.push(format!("od_override={od}"));
            }
            Command::Simulate
        }
        Cmd::ScanOam { l_max } => {
            if let Some(n) = l_max {
                ov.push(format!("scan.l_max={n}"));
            }
            Command::ScanOam
        }
        Cmd::Scan { param, values } => {
            if let Some(p) = param {
                ov.push(format!("scan.param={}", serde_json::to_string(p)?));
            }
            if let Some(v) = values {
                ov.push(format!("scan.values={}", list_json(v)?));
            }
            Command::Scan
        }
        Cmd::Tomography {
            state,
            stored,
            nbar,
            nbar_scan,
        } => {
            if let Some(label) = state {
                let mut q = oam_memory::config::QubitConfig::default();
                q.set_label(*label);
                ov.push(format!("qubit.alpha={:?}", q.alpha));
                ov.push(format!("qubit.beta={:?}", q.beta));
                ov.push(format!("qubit.phi={:?}", q.phi));
            }
            if *stored {
                ov.push("tomography.stored=true".into());
            }
            if let Some(n) = nbar {
                ov.push(format!("source.nbar={n:?}"));
            }
            if let Some(s) = nbar_scan {
                ov.push(format!("tomography.nbar_scan={}", list_json(s)?));
            }
            Command::Tomography
        }
        Cmd::Threshold { nbar } => {
            if let Some(s) = nbar {
                ov.push(format!("threshold.nbar={}", list_json(s)?));
            }
            Command::Threshold
        }
        Cmd::Optimize { budget } => {
            if let Some(b) = budget {
                ov.push(format!("optimize.spec.budget={b}"));
            }
            Command::Optimize
        }
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Replay { .. } => return Ok((None, ov)),
    };
    Ok((Some(c), ov))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let (cmd, sub_overrides) = command_overrides(&cli.cmd)?;
    let written = match (cmd, &cli.cmd) {
        (Some(cmd), _) => {
            let mut overrides = cli.global.overrides.clone();
            if let Some(seed) = cli.global.seed {
                overrides.push(format!("seed={seed}"));
            }
            overrides.extend(sub_overrides);
            let cfg = ExperimentConfig::load(cli.global.config.as_deref(), &overrides)?;
            run_command(cmd, &cfg, &cli.global.out)?
        }
        (None, Cmd::Replay { result }) => replay(result, &cli.global.out)?,
        (None, _) => unreachable!("only replay has no command"),
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = error_json(&e);
            eprintln!("{doc}");
            if std::fs::create_dir_all(&cli.global.out).is_ok() {
                let _ = std::fs::write(cli.global.out.join("error.json"), format!("{doc:#}\n"));
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
