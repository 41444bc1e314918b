//! `cataccess`: verification suites, the E91 simulator and chain truncations.
//!
//! JSON goes to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 failed check or non-termination, 2 usage error, 3 key mismatch,
//! 4 unreadable or unwritable file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cataccess::accessible::AnyChain;
use cataccess::qkd::{run_protocol, ProtocolConfig, ProtocolTranscript};
use cataccess::suites::{run_suite, Suite};
use cataccess::Error;
use clap::{Parser, Subcommand};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISMATCH: u8 = 3;
const EXIT_IO: u8 = 4;

/// Samples in the Bell test attached to every protocol run.
const BELL_TEST_SAMPLES: usize = 10_000;

#[derive(Parser)]
#[command(name = "cataccess", version, about = "Compactly accessible categories at desk scale")]
struct Cli {
    /// Suppress diagnostics on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a property suite and print its JSON report.
    Check {
        /// all, compact, factorisation, accessible, classical or qkd.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, env = "CATACCESS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Include wall time; the report is then no longer reproducible.
        #[arg(long)]
        timing: bool,
    },
    /// The key distribution protocol.
    Qkd {
        #[command(subcommand)]
        command: QkdCommand,
    },
    /// Summarise a protocol transcript.
    Report { path: PathBuf },
    /// Print the truncation of a chain given as JSON.
    Chain {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
    },
}

#[derive(Subcommand)]
enum QkdCommand {
    /// One seeded run; writes the transcript to `--out` or stdout.
    Run {
        /// Each round draws 3n pairs.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, env = "CATACCESS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        rounds: usize,
        /// Intercept-resend attack on Bob's qubits.
        #[arg(long)]
        eavesdrop: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Diag {
    quiet: bool,
}

impl Diag {
    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("cataccess: {msg}");
        }
    }

    fn fail(&self, code: u8, msg: impl std::fmt::Display) -> ExitCode {
        self.say(msg);
        ExitCode::from(code)
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn check(diag: &Diag, suite: &str, seed: u64, tol: f64, timing: bool) -> ExitCode {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => return diag.fail(EXIT_USAGE, e),
    };
    if !(tol.is_finite() && tol >= 0.0) {
        return diag.fail(EXIT_USAGE, format!("tolerance must be finite and nonnegative, got {tol}"));
    }
    let start = Instant::now();
    let mut report = run_suite(suite, seed, tol);
    if timing {
        report.wall_time_ms = Some(start.elapsed().as_millis() as u64);
    }
    print!("{}", pretty(&report));
    if report.passed {
        return ExitCode::SUCCESS;
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        diag.say(format!(
            "check {} failed: {} of {} instances{}",
            c.name,
            c.failures,
            c.instances,
            c.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()
        ));
    }
    ExitCode::from(EXIT_FAILED)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn qkd_run(diag: &Diag, cfg: ProtocolConfig, out: Option<&Path>) -> ExitCode {
    let (transcript, code) = match run_protocol(&cfg) {
        Ok(t) if t.keys_agree() => (t, None),
        Ok(t) => (t, Some((EXIT_MISMATCH, "keys differ"))),
        Err(Error::NonTermination { rounds, transcript }) => {
            let msg = if rounds == 0 { "no round permitted" } else { "no round kept its key" };
            (*transcript, Some((EXIT_FAILED, msg)))
        }
        Err(e) => return diag.fail(EXIT_USAGE, e),
    };
    if let Err(e) = emit(&pretty(&transcript), out) {
        return diag.fail(EXIT_IO, e);
    }
    match code {
        None => ExitCode::SUCCESS,
        Some((code, msg)) => diag.fail(code, format!("{msg} after {} rounds", transcript.round.len())),
    }
}

fn report(diag: &Diag, path: &Path) -> ExitCode {
    let parsed = fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|s| serde_json::from_str::<ProtocolTranscript>(&s).map_err(|e| e.to_string()));
    let t = match parsed {
        Ok(t) => t,
        Err(e) => return diag.fail(EXIT_IO, format!("cannot read transcript {}: {e}", path.display())),
    };
    let chsh = t.chsh.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
    println!("seed: {}", t.seed);
    println!("rounds: {} ({} restarts)", t.round.len(), t.restarts());
    println!("terminated: {}", if t.terminated() { "yes" } else { "no" });
    println!("key length: alice {}, bob {}", t.key_alice.len(), t.key_bob.len());
    println!("chsh: {chsh}");
    if t.keys_agree() {
        println!("keys: agree");
        ExitCode::SUCCESS
    } else {
        println!("keys: MISMATCH");
        ExitCode::from(EXIT_MISMATCH)
    }
}

fn chain(diag: &Diag, spec: &Path, depth: usize) -> ExitCode {
    let text = match fs::read_to_string(spec) {
        Ok(s) => s,
        Err(e) => return diag.fail(EXIT_IO, format!("cannot read {}: {e}", spec.display())),
    };
    let parsed = match AnyChain::from_json(&text) {
        Ok(c) => c,
        Err(e @ Error::Json(_)) => return diag.fail(EXIT_IO, e),
        Err(e) => return diag.fail(EXIT_USAGE, e),
    };
    match parsed.truncation_json(depth) {
        Ok(v) => {
            print!("{}", pretty(&v));
            ExitCode::SUCCESS
        }
        Err(e) => diag.fail(EXIT_FAILED, e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let diag = Diag { quiet: cli.quiet };
    match cli.command {
        Command::Check { suite, seed, tol, timing } => check(&diag, &suite, seed, tol, timing),
        Command::Qkd {
            command: QkdCommand::Run { n, seed, rounds, eavesdrop, out },
        } => {
            let cfg = ProtocolConfig {
                n: n as usize,
                seed,
                max_rounds: rounds,
                eavesdropper: eavesdrop,
                bell_test_samples: BELL_TEST_SAMPLES,
                ..ProtocolConfig::default()
            };
            qkd_run(&diag, cfg, out.as_deref())
        }
        Command::Report { path } => report(&diag, &path),
        Command::Chain { spec, depth } => chain(&diag, &spec, depth),
    }
}
