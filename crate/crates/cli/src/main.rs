use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod report;
mod table;

use report::Outcome;

/// Structural stability analysis of positive reaction networks under
/// integral control.
#[derive(Parser, Debug)]
#[command(name = "reinstab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Model document (JSON).
    model: PathBuf,
    /// Emit the full report as JSON on stdout.
    #[arg(long)]
    json: bool,
    /// Override a scalar in the document, e.g. `--set r=3` or `--set controller.eta=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, f64)>,
    /// Write the command's table as CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classification, gains, equilibria and certificate.
    Analyze(Common),
    /// Closed-loop equilibria with admissibility.
    Equilibrium(Common),
    /// Positive-realness of the output transfer function.
    Spr(Common),
    /// Structural stability certificate.
    Certify(Common),
    /// Integrate the closed loop.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        /// Relative tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Comma-separated initial state, plant then controller.
        #[arg(long, value_name = "V1,V2,...")]
        x0: Option<String>,
    },
    /// Certificates and Jacobian abscissae over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `name=lo:hi:count` or `name=lo:hi:countlog`; repeat for a product grid.
        #[arg(long, value_name = "SPEC", required = true)]
        axis: Vec<String>,
        /// Also simulate every cell.
        #[arg(long)]
        simulate: bool,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Rein controller equilibria along an `eta` grid with their limits.
    Switching {
        #[command(flatten)]
        common: Common,
        /// `lo:hi:count` or `lo:hi:countlog`.
        #[arg(long, value_name = "RANGE", default_value = "1e0:1e6:7log")]
        eta: String,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not KEY=VALUE"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn fail(e: &reinstab::Error) -> ExitCode {
    let mut err = serde_json::json!({
        "kind": e.kind(),
        "message": e.to_string(),
    });
    if let reinstab::Error::InvalidModel { code, pointer, .. } = e {
        err["code"] = serde_json::to_value(code).unwrap_or_default();
        err["pointer"] = pointer.clone().into();
    }
    eprintln!("{}", serde_json::json!({ "error": err }));
    ExitCode::from(1)
}

fn run(cli: Cli) -> reinstab::Result<(Outcome, Common)> {
    let started = Instant::now();
    let load = |c: &Common| {
        let text = std::fs::read_to_string(&c.model)
            .map_err(|e| reinstab::Error::Io(format!("{}: {e}", c.model.display())))?;
        reinstab::model::load_model_with_overrides(&text, &c.set)
    };
    let (outcome, common) = match cli.command {
        Command::Analyze(c) => (report::analyze(&load(&c)?), c),
        Command::Equilibrium(c) => (report::equilibrium(&load(&c)?), c),
        Command::Spr(c) => (report::spr(&load(&c)?)?, c),
        Command::Certify(c) => (report::certify(&load(&c)?), c),
        Command::Simulate {
            common,
            t_end,
            tol,
            x0,
        } => {
            let model = load(&common)?;
            let x0 = x0.as_deref().map(parse_state).transpose()?;
            (report::simulate(&model, t_end, tol, x0)?, common)
        }
        Command::Sweep {
            common,
            axis,
            simulate,
            t_end,
            tol,
        } => {
            let model = load(&common)?;
            let axes = axis
                .iter()
                .map(|a| reinstab::simulate::SweepAxis::parse(a))
                .collect::<reinstab::Result<Vec<_>>>()?;
            (report::sweep(&model, &axes, simulate, t_end, tol)?, common)
        }
        Command::Switching {
            common,
            eta,
            t_end,
            tol,
        } => {
            let model = load(&common)?;
            let grid = reinstab::simulate::parse_range(&eta)
                .map(|(v, _)| v)
                .ok_or_else(|| {
                    reinstab::Error::Precondition(format!("`{eta}` is not lo:hi:count[log]"))
                })?;
            (report::switching(&model, &grid, t_end, tol)?, common)
        }
    };
    let mut outcome = outcome;
    outcome.report.wall_clock_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((outcome, common))
}

fn parse_state(s: &str) -> reinstab::Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| {
                reinstab::Error::Precondition(format!("initial state entry `{v}` is not a number"))
            })
        })
        .collect()
}

fn emit(outcome: &Outcome, common: &Common) -> reinstab::Result<()> {
    let io = |e: std::io::Error| reinstab::Error::Io(e.to_string());
    if let Some(path) = &common.out {
        let file = std::fs::File::create(path).map_err(io)?;
        outcome.table.write_csv(file)?;
    }
    let mut stdout = std::io::stdout().lock();
    let written = if common.json {
        let text = serde_json::to_string_pretty(&outcome.report)
            .map_err(|e| reinstab::Error::Io(e.to_string()))?;
        writeln!(stdout, "{text}")
    } else if outcome.table_is_primary && common.out.is_none() {
        return outcome.table.write_csv(stdout);
    } else {
        write!(stdout, "{}", report::text(outcome))
    };
    match written {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io(e)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let (outcome, common) = match run(cli) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    if let Err(e) = emit(&outcome, &common) {
        return fail(&e);
    }
    if outcome.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
