use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use copift_core::bench::{self, BenchError, EnergyModel, Summary, Variant, VerifyError};
use copift_core::sim::{self, CsvTrace, MachineConfig, MachineState, Mode, Termination, TraceSink};
use copift_core::transform::transform_program;
use copift_core::{parse_program, print_program, Program};

const EXIT_FAIL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_DEADLOCK: u8 = 3;
const EXIT_TRAP: u8 = 4;
const EXIT_TRANSFORM: u8 = 5;
const EXIT_MISMATCH: u8 = 6;

/// Simulator, transformer and benchmark driver for the integer/FP
/// queue-coupled core.
#[derive(Parser)]
#[command(name = "copift", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a program and print its metrics.
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Dual)]
        mode: ModeArg,
        /// Write a per-cycle CSV trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Rewrite the marked loop for dual issue.
    Transform {
        file: PathBuf,
        /// Output file; standard output when omitted.
        out: Option<PathBuf>,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Check a transformed program against its original over seeded inputs.
    Verify {
        original: PathBuf,
        transformed: PathBuf,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Run the kernel suite and write CSV plus a summary.
    Bench {
        /// A kernel name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[command(flatten)]
        machine: MachineArgs,
    },
    /// Dual-issue run that writes the per-cycle CSV trace.
    Trace {
        file: PathBuf,
        /// Trace destination; standard output when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        machine: MachineArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Seq,
    Dual,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Seq => Mode::Sequential,
            ModeArg::Dual => Mode::Dual,
        }
    }
}

#[derive(Args)]
struct MachineArgs {
    /// `key = value` machine configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cycle_limit: Option<u64>,
}

struct Failure {
    code: u8,
    msg: String,
}

type Outcome = Result<(), Failure>;

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

fn io_fail(path: &Path, e: io::Error) -> Failure {
    fail(EXIT_FAIL, format!("{}: {e}", path.display()))
}

impl MachineArgs {
    fn load(&self) -> Result<MachineConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))?;
                MachineConfig::parse(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))?
            }
            None => MachineConfig::default(),
        };
        if let Some(n) = self.cycle_limit {
            cfg.cycle_limit = n;
        }
        cfg.validate().map_err(|e| fail(EXIT_PARSE, e.to_string()))?;
        Ok(cfg)
    }
}

fn assemble(path: &Path) -> Result<Program, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    parse_program(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))
}

/// Writes to standard output, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_fail(path, e))
}

fn check_termination(t: &Termination) -> Outcome {
    match t {
        Termination::Halted => Ok(()),
        Termination::Deadlock(d) => {
            let queue = match d.blocking_queue() {
                Some(c) if c.name().starts_with("i2f") => "I2F",
                Some(c) if c.name().starts_with("f2i") => "F2I",
                _ => "none",
            };
            Err(fail(EXIT_DEADLOCK, format!("{d}; blocking queue: {queue}")))
        }
        Termination::Trap(t) => Err(fail(EXIT_TRAP, format!("trap at pc {}: {}", t.pc, t.cause))),
        Termination::CycleLimit => Err(fail(EXIT_FAIL, "cycle limit reached")),
    }
}

fn termination_name(t: &Termination) -> &'static str {
    match t {
        Termination::Halted => "halted",
        Termination::Deadlock(_) => "deadlock",
        Termination::Trap(_) => "trap",
        Termination::CycleLimit => "cycle_limit",
    }
}

/// Runs `file` and reports metrics. With `trace_to_stdout` the trace owns
/// standard output and the metrics go to standard error.
fn simulate(file: &Path, mode: Mode, trace: Option<&Path>, trace_to_stdout: bool, machine: &MachineArgs) -> Outcome {
    let cfg = machine.load()?;
    let p = assemble(file)?;
    let init = MachineState::for_program(&p, &cfg).map_err(|e| fail(EXIT_TRAP, e))?;
    let report = match (trace, trace_to_stdout) {
        (Some(path), _) => {
            let mut sink = CsvTrace::new(create(path)?);
            let r = sim::run(&p, &cfg, init, mode, Some(&mut sink as &mut dyn TraceSink));
            sink.finish().map_err(|e| io_fail(path, e))?;
            r
        }
        (None, true) => {
            let mut sink = CsvTrace::new(BufWriter::new(io::stdout().lock()));
            let r = sim::run(&p, &cfg, init, mode, Some(&mut sink as &mut dyn TraceSink));
            sink.finish().map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
            r
        }
        (None, false) => sim::run(&p, &cfg, init, mode, None),
    };
    let text = format!("termination = {}\n{}", termination_name(&report.termination), report.metrics);
    if trace.is_none() && trace_to_stdout {
        eprintln!("{text}");
    } else {
        emit(&format!("{text}\n"));
    }
    check_termination(&report.termination)
}

fn cmd_transform(file: &Path, out: Option<&Path>, machine: &MachineArgs) -> Outcome {
    let cfg = machine.load()?;
    let p = assemble(file)?;
    if p.loops.is_empty() {
        return Err(fail(EXIT_TRANSFORM, format!("{}: no copift_loop marker", file.display())));
    }
    let r = transform_program(&p, &cfg).map_err(|e| fail(EXIT_TRANSFORM, format!("{}: {e}", file.display())))?;
    let text = print_program(&r.program);
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_fail(path, e))?;
            emit(&r.to_string());
        }
        None => {
            emit(&text);
            eprint!("{r}");
        }
    }
    Ok(())
}

fn cmd_verify(original: &Path, transformed: &Path, seeds: u64, machine: &MachineArgs) -> Outcome {
    let cfg = machine.load()?;
    let a = assemble(original)?;
    let b = assemble(transformed)?;
    if seeds == 0 {
        eprintln!("warning: vacuous verification, no seeds were run");
    }
    let seeds: Vec<u64> = (0..seeds).collect();
    bench::verify_pair(&a, &b, &cfg, &seeds).map_err(|e| {
        let code = match &e {
            VerifyError::Run { termination, .. } if termination.starts_with("deadlock") => EXIT_DEADLOCK,
            _ => EXIT_MISMATCH,
        };
        fail(code, format!("verification failed: {e}"))
    })?;
    emit(&format!("ok: {} seeds\n", seeds.len()));
    Ok(())
}

fn bench_failure(e: BenchError) -> Failure {
    let code = match e {
        BenchError::UnknownKernel(_) | BenchError::Asm { .. } => EXIT_PARSE,
        BenchError::Transform { .. } => EXIT_TRANSFORM,
        BenchError::Run { .. } | BenchError::Mismatch { .. } => EXIT_MISMATCH,
        _ => EXIT_FAIL,
    };
    fail(code, e.to_string())
}

fn cmd_bench(suite: &str, csv: Option<&Path>, seeds: u64, machine: &MachineArgs) -> Outcome {
    let cfg = machine.load()?;
    if seeds == 0 {
        return Err(fail(EXIT_PARSE, "--seeds must be at least 1 for bench"));
    }
    let kernels = if suite == "all" { bench::kernels() } else { vec![bench::kernel(suite).map_err(bench_failure)?] };
    let seeds: Vec<u64> = (0..seeds).collect();
    let rows = bench::run_suite(&kernels, &Variant::ALL, &cfg, &seeds, &EnergyModel::default()).map_err(bench_failure)?;
    let summary = Summary::from_rows(&rows);
    match csv {
        Some(path) => {
            let mut w = create(path)?;
            bench::emit_csv(&rows, &mut w).and_then(|_| w.flush()).map_err(|e| io_fail(path, e))?;
            emit(&format!("{summary}\n"));
        }
        None => {
            bench::emit_csv(&rows, io::stdout().lock()).map_err(|e| fail(EXIT_FAIL, e.to_string()))?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Run { file, mode, trace, machine } => simulate(file, (*mode).into(), trace.as_deref(), false, machine),
        Cmd::Transform { file, out, machine } => cmd_transform(file, out.as_deref(), machine),
        Cmd::Verify { original, transformed, seeds, machine } => cmd_verify(original, transformed, *seeds, machine),
        Cmd::Bench { suite, csv, seeds, machine } => cmd_bench(suite, csv.as_deref(), *seeds, machine),
        Cmd::Trace { file, trace, machine } => simulate(file, Mode::Dual, trace.as_deref(), true, machine),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
