//! Command-line front end. `main.rs` only forwards to [`run`].

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{find_declaration, load_dataset, replace_proof, run_ablation, run_benchmark, AblationGrid};
use crate::config::{GeneratorKind, RunConfig, Runtime, VerifierKind};
use crate::cos::annotate_chain_of_states;
use crate::error::{
    BenchError, ConfigError, CosError, GenerationError, MetricError, ParseError, RetrievalError, SamplerError,
    VerifierError,
};
use crate::metrics::{ImprovementRule, Scorer};
use crate::proof_model::{parse_tactic_proof, render_proof, strip_state_comments, TheoremEntry};
use crate::retrieval::{build_index, IndexSources, DEFAULT_MAX_CHUNK, DEFAULT_OVERLAP};
use crate::sampling::run_sampler;
use crate::verifier::{is_correct, serve, MockBackend};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "proofopt", version, about = "Optimize Lean tactic proofs for a chosen metric")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Run config (TOML). Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Metric name: length, readability, completion or one from the metrics file.
    #[arg(long, global = true)]
    pub metric: Option<String>,
    /// Offline mode: scripted generator and fixture verifier.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Script file for the scripted generator.
    #[arg(long, global = true)]
    pub mock_script: Option<PathBuf>,
    /// Fixture file (JSON) for the mock verifier.
    #[arg(long, global = true)]
    pub mock_fixtures: Option<PathBuf>,
    /// Verifier REPL command line. Defaults to $PROOFOPT_REPL.
    #[arg(long, global = true)]
    pub backend_cmd: Option<String>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one declaration; writes `<file>.opt`.
    Optimize {
        file: PathBuf,
        decl: String,
        /// Output path instead of `<file>.opt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a declaration's proof with its proof states as comments.
    Annotate { file: PathBuf, decl: String },
    /// Verify a declaration and print its metric score.
    Score { file: PathBuf, decl: String },
    /// Build retrieval stores.
    Index {
        /// Markdown syntax documentation.
        #[arg(long)]
        docs: Option<PathBuf>,
        /// Lean library sources.
        #[arg(long)]
        library: Option<PathBuf>,
        /// Example pairs, one subdirectory per metric.
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_CHUNK)]
        max_chunk: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
    },
    /// Run a benchmark (or an ablation grid) over a dataset.
    Bench {
        dataset: PathBuf,
        /// Report directory.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        /// Ablation grid (TOML).
        #[arg(long)]
        ablate: Option<PathBuf>,
    },
    /// Serve the verifier REPL protocol on stdin/stdout from mock fixtures.
    #[command(hide = true)]
    ServeMock,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Backend(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Backend(m) => m,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_error!(ParseError, ConfigError, MetricError, std::io::Error);

impl From<VerifierError> for CliError {
    fn from(e: VerifierError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<CosError> for CliError {
    fn from(e: CosError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::EmbedderUnavailable(_) => CliError::Backend(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Generation(e) => e.into(),
            SamplerError::Verifier(e) => e.into(),
            SamplerError::Retrieval(e) => e.into(),
            SamplerError::InvalidConfig(_) | SamplerError::Metric(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Verifier(e) => e.into(),
            BenchError::Sampler(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// The run config after applying `--config` and the flag overrides.
pub fn load_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &g.metric {
        cfg.metric = m.clone();
    }
    if let Some(c) = g.concurrency {
        cfg.concurrency = c;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(cmd) = &g.backend_cmd {
        cfg.verifier.backend = VerifierKind::Repl;
        cfg.verifier.command = Some(cmd.clone());
    }
    if g.mock {
        cfg.generator.backend = GeneratorKind::Scripted;
        cfg.verifier.backend = VerifierKind::Mock;
    }
    if let Some(p) = &g.mock_script {
        cfg.generator.script = Some(p.clone());
    }
    if let Some(p) = &g.mock_fixtures {
        cfg.verifier.fixtures = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_entry(file: &Path, decl: &str) -> Result<TheoremEntry, CliError> {
    let source = read(file)?;
    Ok(find_declaration(&source, &file.to_string_lossy(), decl)?)
}

fn fmt_score(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x}")
    } else {
        format!("{x:.2}")
    }
}

fn cmd_optimize(g: &GlobalArgs, file: &Path, decl: &str, out: Option<&Path>, w: &mut dyn Write) -> Result<(), CliError> {
    let source = read(file)?;
    let path = file.to_string_lossy();
    let entry = find_declaration(&source, &path, decl)?;
    let cfg = load_config(g)?;
    let runtime = Runtime::from_config(cfg)?;
    let mut ctx = runtime.sampler_context(decl);
    let request = runtime.config.request(&runtime.metric, &entry);
    let outcome = run_sampler(&runtime.config.sampler, &mut ctx, &request)?;
    let r = &outcome.result;
    let proof = r.proof.as_ref().unwrap_or(&entry.initial_proof);
    let text = replace_proof(&source, &path, decl, proof)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = file.as_os_str().to_owned();
        p.push(".opt");
        PathBuf::from(p)
    });
    fs::write(&target, text).map_err(|e| CliError::Input(format!("{}: {e}", target.display())))?;
    let after = r.metric_score.unwrap_or(outcome.baseline_score);
    let unit = match runtime.metric.improvement {
        ImprovementRule::PercentChange => "%",
        ImprovementRule::Difference => "",
    };
    writeln!(
        w,
        "{} → {}, improvement {:.1}{unit}",
        fmt_score(outcome.baseline_score),
        fmt_score(after),
        r.improvement
    )?;
    if outcome.fell_back {
        writeln!(w, "no correct candidate; kept the original proof")?;
    }
    writeln!(w, "wrote {}", target.display())?;
    Ok(())
}

fn cmd_annotate(g: &GlobalArgs, file: &Path, decl: &str, w: &mut dyn Write) -> Result<(), CliError> {
    let mut entry = load_entry(file, decl)?;
    let bare = strip_state_comments(&render_proof(&entry.initial_proof, 2))?;
    entry.initial_proof = parse_tactic_proof(&bare)?;
    let verifier = load_config(g)?.build_verifier()?;
    let v = verifier.verify(&entry, &entry.initial_proof)?;
    writeln!(w, "{}", annotate_chain_of_states(&entry.initial_proof, &v.states)?)?;
    Ok(())
}

fn cmd_score(g: &GlobalArgs, file: &Path, decl: &str, w: &mut dyn Write) -> Result<(), CliError> {
    let entry = load_entry(file, decl)?;
    let cfg = load_config(g)?;
    let metric = cfg.metric_def()?;
    let verifier = cfg.build_verifier()?;
    let v = verifier.verify(&entry, &entry.initial_proof)?;
    writeln!(w, "{}: {}", metric.name, fmt_score(metric.score(&entry.initial_proof, &v)))?;
    writeln!(w, "correct: {}", is_correct(&v))?;
    for e in v.error_messages() {
        writeln!(w, "error: {e}")?;
    }
    Ok(())
}

fn cmd_index(g: &GlobalArgs, sources: IndexSources, out: &Path, w: &mut dyn Write) -> Result<(), CliError> {
    if sources.docs.is_none() && sources.library.is_none() && sources.examples.is_none() {
        return Err(CliError::Input("nothing to index: pass --docs, --library or --examples".into()));
    }
    let embedder = load_config(g)?.build_embedder()?;
    let s = build_index(&sources, embedder.as_ref(), out)?;
    writeln!(w, "syntax chunks: {}", s.syntax_chunks)?;
    writeln!(w, "library chunks: {}", s.library_chunks)?;
    for (id, n) in &s.examples {
        writeln!(w, "examples/{id}: {n}")?;
    }
    Ok(())
}

fn cmd_bench(g: &GlobalArgs, dataset: &Path, out: &Path, ablate: Option<&Path>, w: &mut dyn Write) -> Result<(), CliError> {
    if !dataset.exists() {
        return Err(CliError::Input(format!("dataset not found: {}", dataset.display())));
    }
    let cfg = load_config(g)?;
    let runtime = Runtime::from_config(cfg)?;
    // Completion inputs are unfinished by design, so they are not required
    // to verify.
    let check = (runtime.metric.scorer != Scorer::Completion).then(|| runtime.generator.verifier.as_ref());
    let entries = load_dataset(dataset, check)?;
    match ablate {
        None => {
            let report = run_benchmark(&entries, &runtime, Some(out))?;
            write!(w, "{}", report.table())?;
        }
        Some(grid) => {
            let grid = AblationGrid::load(grid)?;
            let report = run_ablation(&grid, &entries, &runtime, Some(out))?;
            write!(w, "{}", report.table())?;
        }
    }
    writeln!(w, "reports written to {}", out.display())?;
    Ok(())
}

fn cmd_serve_mock(g: &GlobalArgs) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    let mock = match &cfg.verifier.fixtures {
        Some(p) => MockBackend::load(p)?,
        None => MockBackend::default(),
    };
    let stdin = std::io::stdin();
    serve(&mock, stdin.lock(), std::io::stdout().lock())?;
    Ok(())
}

/// Runs a parsed command, writing user-facing output to `w`.
pub fn execute(cli: &Cli, w: &mut dyn Write) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Optimize { file, decl, out } => cmd_optimize(g, file, decl, out.as_deref(), w),
        Command::Annotate { file, decl } => cmd_annotate(g, file, decl, w),
        Command::Score { file, decl } => cmd_score(g, file, decl, w),
        Command::Index {
            docs,
            library,
            examples,
            out,
            max_chunk,
            overlap,
        } => cmd_index(
            g,
            IndexSources {
                docs: docs.clone(),
                library: library.clone(),
                examples: examples.clone(),
                max_chunk: *max_chunk,
                overlap: *overlap,
            },
            out,
            w,
        ),
        Command::Bench { dataset, out, ablate } => cmd_bench(g, dataset, out, ablate.as_deref(), w),
        Command::ServeMock => cmd_serve_mock(g),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, w: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, w) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "proofopt", "--mock", "--metric", "readability", "--seed", "9", "--concurrency", "2", "score", "f.lean", "x",
        ])
        .unwrap();
        let cfg = load_config(&cli.global).unwrap();
        assert_eq!(cfg.metric, "readability");
        assert_eq!((cfg.seed, cfg.concurrency), (9, 2));
        assert_eq!(cfg.verifier.backend, VerifierKind::Mock);
        assert_eq!(cfg.generator.backend, GeneratorKind::Scripted);
    }

    #[test]
    fn exit_codes() {
        let mut out = Vec::new();
        assert_eq!(run(["proofopt", "bench", "/nonexistent/dataset"], &mut out), EXIT_INPUT);
        assert_eq!(run(["proofopt", "--concurrency", "0", "score", "a", "b"], &mut out), EXIT_INPUT);
        assert_eq!(CliError::from(VerifierError::BackendUnavailable("x".into())).code(), EXIT_BACKEND);
    }
}
