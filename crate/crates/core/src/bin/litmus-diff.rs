use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use litmus_diff::diff::{
    compare_gated, infer_state_mapping, render_compare_table, DiffRecord, MappingHints, RacePolicy, StateMapping,
};
use litmus_diff::exec::{simulate, SimOptions};
use litmus_diff::litmus::{parse_any, LitmusTest};
use litmus_diff::model::{builtin_models, lookup_model};
use litmus_diff::pipeline::{builtin_profiles, load_profiles, run_batch, run_pipeline, CompilerProfile, PipelineOptions};
use litmus_diff::transform::{generate_pattern_tests, optimize_asm, parse_grid, PeepholeRule};
use litmus_diff::Error;

#[derive(Parser)]
#[command(name = "litmus-diff", version, about = "Differential testing of compiled concurrent code against memory models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Simulation time limit in seconds.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    /// Loop unroll factor.
    #[arg(long, default_value_t = 2)]
    unroll: usize,
    /// Maximum number of candidate executions.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u64,
}

impl SimArgs {
    fn options(&self) -> SimOptions {
        SimOptions {
            cap: self.cap,
            timeout: Some(Duration::from_secs(self.timeout)),
            unroll: self.unroll,
        }
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// `auto`, `off`, or a plan file of `thread:register global` lines.
    #[arg(long, default_value = "off")]
    persist_locals: String,
    /// Peephole rules for compiled tests: comma-separated names, `all` or `none`.
    #[arg(long, default_value = "all")]
    opt_rules: String,
    /// `ignore-racy` or `compare-anyway`.
    #[arg(long, default_value = "ignore-racy")]
    race_policy: RacePolicy,
    /// Root of the per-test run directories.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

impl PipelineArgs {
    fn options(&self) -> Result<PipelineOptions, Error> {
        Ok(PipelineOptions {
            sim: self.sim.options(),
            race_policy: self.race_policy,
            persist: self.persist_locals.parse()?,
            opt_rules: PeepholeRule::parse_list(&self.opt_rules)?,
            out_dir: Some(self.out.clone()),
            hints: MappingHints::new(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the outcomes a test allows under a model.
    Simulate {
        test: PathBuf,
        #[arg(long)]
        model: String,
        /// Apply peephole rules to an assembly test first.
        #[arg(long)]
        opt_rules: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare the outcomes of a target test against a source test.
    Compare {
        src: PathBuf,
        tgt: PathBuf,
        /// State mapping file of `source target` lines.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Defaults to rc11_lite for source tests and armv8_lite for assembly.
        #[arg(long)]
        src_model: Option<String>,
        #[arg(long)]
        tgt_model: Option<String>,
        #[arg(long, default_value = "ignore-racy")]
        race_policy: RacePolicy,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compile one test under a profile and compare.
    Pipeline {
        test: PathBuf,
        #[arg(long)]
        profile: String,
        /// Profiles document; built-in reference profiles are always available.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[command(flatten)]
        args: PipelineArgs,
    },
    /// Run every test of a grid under every profile.
    Batch {
        #[arg(long)]
        conf: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(short = 'j', long = "jobs", default_value_t = 1)]
        jobs: usize,
        /// Write JSON-lines diff records here.
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        args: PipelineArgs,
    },
    /// Write the tests a grid describes.
    Generate {
        #[arg(long)]
        grid: PathBuf,
        /// Directory for `<name>.litmus` files; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Describe the built-in models.
    ListModels,
}

/// Write to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_test(path: &Path) -> Result<LitmusTest, Error> {
    parse_any(&read(path)?)
}

fn default_model(t: &LitmusTest) -> &'static str {
    if t.is_source() {
        "rc11_lite"
    } else {
        "armv8_lite"
    }
}

fn find_profile(name: &str, file: Option<&Path>) -> Result<CompilerProfile, Error> {
    let mut all = builtin_profiles();
    if let Some(f) = file {
        all.extend(load_profiles(f)?);
    }
    all.into_iter()
        .rev()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::InvalidProfile(format!("no profile named `{name}`")))
}

fn run(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Simulate { test, model, opt_rules, sim } => {
            let mut t = read_test(&test)?;
            if let (Some(rules), false) = (opt_rules, t.is_source()) {
                t = optimize_asm(&t, &PeepholeRule::parse_list(&rules)?)?.0;
            }
            let r = simulate(&t, &lookup_model(&model)?, &sim.options())?;
            emit(&r.render_log());
            Ok(0)
        }
        Command::Compare { src, tgt, map, src_model, tgt_model, race_policy, sim } => {
            let (s, t) = (read_test(&src)?, read_test(&tgt)?);
            let hints = match map {
                Some(m) => StateMapping::parse_hints(&read(&m)?)?,
                None => Vec::new(),
            };
            let opts = sim.options();
            let sm = lookup_model(src_model.as_deref().unwrap_or(default_model(&s)))?;
            let tm = lookup_model(tgt_model.as_deref().unwrap_or(default_model(&t)))?;
            let so = simulate(&s, &sm, &opts)?;
            let to = simulate(&t, &tm, &opts)?;
            let m = infer_state_mapping(&s, &t, &hints)?;
            let report = compare_gated(&s, &sm, &opts, race_policy, &so.outcomes, &to.outcomes, &m)?;
            emit(&render_compare_table(&report, &s.name, &t.name));
            emit(&(DiffRecord::new(&s.name, None, &report).to_json_line() + "\n"));
            Ok(report.is_positive() as u8)
        }
        Command::Pipeline { test, profile, profiles, args } => {
            let t = read_test(&test)?;
            let p = find_profile(&profile, profiles.as_deref())?;
            let run = run_pipeline(&t, &p, &args.options()?);
            if let Some((stage, e)) = &run.failure {
                eprintln!("{}: {stage} failed: {e}", run.test);
            }
            if let Some(r) = &run.report {
                emit(&render_compare_table(r, &format!("src_{}", p.name), &format!("tgt_{}", p.name)));
            }
            if let Some(rec) = run.record() {
                emit(&(rec.to_json_line() + "\n"));
            }
            Ok(run.exit_code() as u8)
        }
        Command::Batch { conf, profiles, jobs, records, args } => {
            let tests = generate_pattern_tests(&parse_grid(&read(&conf)?)?)?;
            let profiles = load_profiles(&profiles)?;
            let summary = run_batch(&tests, &profiles, &args.options()?, jobs);
            for e in &summary.entries {
                if let Some(f) = &e.failure {
                    eprintln!("{} [{}]: {f}", e.test, e.profile);
                }
            }
            if let Some(path) = records {
                std::fs::write(&path, summary.json_lines()).map_err(|e| Error::io(&path, e))?;
            }
            emit(&summary.render_table());
            Ok(summary.exit_code() as u8)
        }
        Command::Generate { grid, out } => {
            let tests = generate_pattern_tests(&parse_grid(&read(&grid)?)?)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    for t in &tests {
                        let path = dir.join(format!("{}.litmus", t.name));
                        std::fs::write(&path, t.render()).map_err(|e| Error::io(&path, e))?;
                    }
                    eprintln!("wrote {} tests to {}", tests.len(), dir.display());
                }
                None => {
                    let texts: Vec<String> = tests.iter().map(LitmusTest::render).collect();
                    emit(&texts.join("\n"));
                }
            }
            Ok(0)
        }
        Command::ListModels => {
            for m in builtin_models() {
                emit(&m.to_string());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
