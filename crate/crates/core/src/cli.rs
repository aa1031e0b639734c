//! Command-line front end. Exit codes: 0 success, 3 blockers found
//! (`analyze` only), 2 usage or operational error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::blockers::scan_with;
use crate::config::Config;
use crate::csrc::parse_unit;
use crate::orchestrator::{
    campaign, dse, extract_kernel, fmt_num, preprocess, Attempt, ExtractionAssist, Kernel, StepStatus,
};
use crate::report::{recompute, render_table, ReportDocument};
use crate::synth::Objective;
use crate::verify::SourceFile;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 2;
pub const EXIT_BLOCKERS: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pqc2hls", version, about = "Refactor cryptographic C kernels into HLS-ready C")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the HLS blocker report of a C file.
    Analyze { path: PathBuf },
    /// Slice a target function out of a codebase and generate its KATs.
    Extract(ExtractArgs),
    /// Remove blockers from a kernel bundle, verifying every step.
    Preprocess {
        kernel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a conversion campaign on a kernel bundle.
    Convert(ConvertArgs),
    /// Explore pragma plans on a kernel bundle that already synthesizes.
    Dse(DseArgs),
    /// Recompute and print the statistics of a campaign directory.
    Report { dir: PathBuf },
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Source and header files of the codebase.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 1000)]
    pub kats: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Benchmark name recorded in the bundle; the target name by default.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub kernel: PathBuf,
    #[arg(long)]
    pub runs: Option<u32>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Preprocess inside every attempt.
    #[arg(long)]
    pub preprocess: bool,
    /// Explore pragmas after every passing attempt.
    #[arg(long)]
    pub dse: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DseArgs {
    pub kernel: PathBuf,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    match s {
        "area" => Ok(Objective::Area),
        "latency" => Ok(Objective::Latency),
        _ => Err(format!("unknown objective `{s}` (expected area or latency)")),
    }
}

/// A message for stderr and the exit code that goes with it.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn mkdir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn cmd_analyze(cfg: &Config, path: &Path) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let unit = parse_unit(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let report = scan_with(&unit, &cfg.blockers.scanner());
    print!("{}", report.to_text());
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_BLOCKERS })
}

fn cmd_extract(cfg: &Config, p: &crate::orchestrator::Pipeline, a: &ExtractArgs) -> CmdResult {
    let mut files = Vec::new();
    for f in &a.files {
        let text = std::fs::read_to_string(f).map_err(|e| Failure(format!("{}: {e}", f.display())))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.push(SourceFile::new(&name, text));
    }
    if a.kats == 0 {
        log::warn!("--kats 0: the bundle gets an empty suite and verifies nothing");
        eprintln!("warning: --kats 0 yields an empty KAT suite");
    }
    mkdir(&a.out)?;
    let work = a.out.join("work");
    let mut session = p.session("extract");
    let assist = match (session.as_mut(), cfg.loop_.extraction_rounds) {
        (Some(s), n) if n > 0 => {
            Some(ExtractionAssist { session: s, prompts: &p.prompts, settings: p.settings(), max_rounds: n })
        }
        _ => None,
    };
    let mut kernel = extract_kernel(&files, &a.target, a.kats, a.seed, &cfg.toolchain, &work, assist)?;
    if let Some(n) = &a.name {
        kernel.name = n.clone();
    }
    kernel.save(&a.out)?;
    let _ = std::fs::remove_dir_all(&work);
    println!("extracted {} into {}", a.target, a.out.display());
    println!("self-test: {0} of {0} KAT cases passed", kernel.suite.len());
    Ok(EXIT_OK)
}

fn cmd_preprocess(p: &crate::orchestrator::Pipeline, kernel_dir: &Path, out: &Path) -> CmdResult {
    let kernel = Kernel::load(kernel_dir)?;
    mkdir(out)?;
    let adir = out.join("attempt");
    if adir.exists() {
        std::fs::remove_dir_all(&adir)?;
    }
    let mut attempt = Attempt::new("preprocess", &adir, p.session("preprocess"))?;
    let result = preprocess(p, &kernel, &mut attempt);
    attempt.transcript.outcome = crate::orchestrator::Outcome::Fail("preprocessing only".to_string());
    attempt.finish(p.is_deterministic())?;
    let (k, report) = result?;
    k.save(&out.join("kernel"))?;
    write(&out.join("preprocess.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    for s in &report.steps {
        let status = match s.status {
            StepStatus::Applied => "applied",
            StepStatus::Reverted => "reverted",
            StepStatus::Skipped => "skipped",
            StepStatus::NotNeeded => "not needed",
        };
        println!("{}: {status} ({})", s.step, s.detail);
    }
    println!("kernel written to {}", out.join("kernel").display());
    Ok(EXIT_OK)
}

fn cmd_convert(cfg: &mut Config, a: &ConvertArgs, cancel: Arc<AtomicBool>) -> CmdResult {
    if let Some(r) = a.runs {
        cfg.campaign.runs = r;
    }
    if let Some(o) = a.objective {
        cfg.loop_.objective = o;
    }
    if let Some(n) = a.parallel {
        cfg.campaign.parallel = n;
    }
    cfg.loop_.preprocess |= a.preprocess;
    cfg.loop_.dse.enabled |= a.dse;
    if cfg.campaign.runs == 0 {
        return Err(Failure("--runs must be at least 1".to_string()));
    }
    cfg.validate()?;
    let mut p = cfg.pipeline()?;
    p.cancel = cancel;
    let kernel = Kernel::load(&a.kernel)?;
    mkdir(&a.out)?;
    let objective = cfg.loop_.objective;
    let result = campaign(&p, &kernel, cfg.campaign.runs as usize, cfg.campaign.parallel, objective, &a.out)?;
    if result.transcripts.is_empty() {
        return Err(Failure("cancelled before any attempt completed".to_string()));
    }
    let doc = ReportDocument::new(
        &kernel.name,
        objective,
        &p.backend.name(),
        p.provider.as_ref().map(|x| x.name()),
        &result.transcripts,
        cfg,
    );
    doc.write(&a.out)?;
    print!("{}", doc.table());
    if p.cancelled() {
        eprintln!("cancelled: report covers {} completed attempt(s)", result.transcripts.len());
        return Ok(EXIT_ERROR);
    }
    Ok(EXIT_OK)
}

fn cmd_dse(cfg: &mut Config, a: &DseArgs) -> CmdResult {
    if let Some(o) = a.objective {
        cfg.loop_.objective = o;
    }
    if let Some(b) = a.budget {
        cfg.loop_.dse.budget = b;
    }
    let p = cfg.pipeline()?;
    let kernel = Kernel::load(&a.kernel)?;
    mkdir(&a.out)?;
    let adir = a.out.join("attempt");
    if adir.exists() {
        std::fs::remove_dir_all(&adir)?;
    }
    let mut attempt = Attempt::new("dse", &adir, p.session("dse"))?;
    let objective = cfg.loop_.objective;
    let result = dse(&p, &kernel, objective, cfg.loop_.dse.budget, &mut attempt);
    match &result {
        Ok(r) => {
            let best = r.best_candidate();
            attempt.transcript.dse_best = Some(best.plan.label());
            attempt.transcript.outcome = crate::orchestrator::Outcome::Pass(best.result.metrics().cloned().unwrap_or_default());
        }
        Err(e) => attempt.transcript.outcome = crate::orchestrator::Outcome::Fail(e.to_string()),
    }
    attempt.finish(p.is_deterministic())?;
    let r = result?;
    write(&a.out.join("dse.json"), &(serde_json::to_string_pretty(&r)? + "\n"))?;
    for (i, c) in r.candidates.iter().enumerate() {
        let mark = if i == r.best { "*" } else { " " };
        let m = match c.result.metrics() {
            Some(m) => format!(
                "area {} cycles {}",
                m.area_um2.map(fmt_num).unwrap_or_else(|| "-".into()),
                m.cycle_count.map(|c| c.to_string()).unwrap_or_else(|| "-".into())
            ),
            None => "failed".to_string(),
        };
        println!("{mark} {:>3}  {:<40}  {m}", i, c.plan.label());
    }
    Ok(EXIT_OK)
}

fn cmd_report(dir: &Path) -> CmdResult {
    let (stats, doc) = recompute(dir)?;
    let name = doc.as_ref().map(|d| d.benchmark.clone()).unwrap_or_else(|| {
        dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "campaign".into())
    });
    print!("{}", render_table(&[(name.as_str(), &stats)]));
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli, cancel: Arc<AtomicBool>) -> CmdResult {
    let mut cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Analyze { path } => cmd_analyze(&cfg, path),
        Command::Extract(a) => {
            let p = cfg.pipeline()?;
            cmd_extract(&cfg, &p, a)
        }
        Command::Preprocess { kernel, out } => {
            let mut p = cfg.pipeline()?;
            p.cancel = cancel;
            cmd_preprocess(&p, kernel, out)
        }
        Command::Convert(a) => cmd_convert(&mut cfg, a, cancel),
        Command::Dse(a) => cmd_dse(&mut cfg, a),
        Command::Report { dir } => cmd_report(dir),
    }
}

/// Parse `args` and run; `cancel` is raised by the caller's signal handler.
pub fn run<I, T>(args: I, cancel: Arc<AtomicBool>) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli, cancel.clone()) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            if cancel.load(Ordering::SeqCst) {
                eprintln!("pqc2hls: cancelled: {msg}");
            } else {
                eprintln!("pqc2hls: {msg}");
            }
            ExitCode::from(EXIT_ERROR)
        }
    }
}
