use clap::{Parser, Subcommand};
use gammabarnes::cli_report::{
    cmd_selftest, cmd_sweep, cmd_verify, CommandOutput, OutputFormat, RunOptions, Spacing, SweepRequest, EXIT_CONFIG,
};
use gammabarnes::gamma_core::GammaKernel;
use std::io::Write;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gammabarnes", version, about = "Numerical verification of complex-field Gamma integral identities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every case of a case file and report residuals.
    Verify {
        #[arg(long)]
        config: String,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Output file; `-` or absent means standard output.
        #[arg(long)]
        out: Option<String>,
        /// Record wall-clock times (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Tabulate an identity against one parameter.
    Sweep {
        #[arg(long)]
        identity: String,
        /// `zeta` or `L`.
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value = "geometric")]
        spacing: Spacing,
        /// Case file whose first block is the base case.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        format: Option<OutputFormat>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Fast invariant battery.
    Selftest {
        #[arg(long, hide = true)]
        perturb_kernel: Option<f64>,
    },
}

fn read(path: &str) -> Result<String, CommandOutput> {
    std::fs::read_to_string(path).map_err(|e| CommandOutput {
        stdout: String::new(),
        stderr: format!("error[ConfigError]: cannot read {path}: {e}\n"),
        code: EXIT_CONFIG,
    })
}

fn emit(out: CommandOutput, path: Option<&str>) -> ExitCode {
    let mut code = out.code;
    match path {
        Some(p) if p != "-" => {
            if let Err(e) = std::fs::write(p, &out.stdout) {
                eprintln!("error: cannot write {p}: {e}");
                code = EXIT_CONFIG;
            }
        }
        _ => {
            let _ = std::io::stdout().write_all(out.stdout.as_bytes());
        }
    }
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Verify {
            config,
            workers,
            format,
            out,
            timing,
        } => {
            let text = match read(&config) {
                Ok(t) => t,
                Err(o) => return emit(o, None),
            };
            let opts = RunOptions { workers, format, timing };
            let (result, parsed) = cmd_verify(&text, &opts);
            let path = out.or_else(|| parsed.and_then(|c| c.output_path));
            emit(result, path.as_deref())
        }
        Command::Sweep {
            identity,
            param,
            from,
            to,
            steps,
            spacing,
            config,
            seed,
            workers,
            format,
            out,
        } => {
            let config_text = match config.as_deref().map(read).transpose() {
                Ok(t) => t,
                Err(o) => return emit(o, None),
            };
            let req = SweepRequest {
                identity,
                param,
                from,
                to,
                steps,
                spacing,
                config_text,
                seed,
            };
            let opts = RunOptions {
                workers,
                format,
                timing: false,
            };
            emit(cmd_sweep(&req, &opts), out.as_deref())
        }
        Command::Selftest { perturb_kernel } => {
            let out = match perturb_kernel {
                Some(rel) => cmd_selftest(&GammaKernel::perturbed(rel)),
                None => cmd_selftest(GammaKernel::standard()),
            };
            emit(out, None)
        }
    }
}
