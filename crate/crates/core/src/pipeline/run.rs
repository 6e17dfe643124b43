use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::disasm::{parse_listing, SymbolMap};
use super::lift::asm_to_litmus;
use super::lower::{lower_aarch64, LoweringOptions};
use super::prepare::prepare_source;
use super::profile::{CompilerProfile, ProfileKind};
use crate::diff::{compare_gated, infer_state_mapping, DiffRecord, DiffReport, MappingHints, RacePolicy};
use crate::error::Error;
use crate::exec::{simulate, SimOptions, SimulationResult};
use crate::litmus::{parse_any, LitmusTest};
use crate::model::lookup_model;
use crate::transform::{optimize_asm, persist_locals, OptStats, PeepholeRule, PersistMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Prepare,
    Compile,
    Disassemble,
    Lift,
    SimulateSource,
    SimulateTarget,
    Compare,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Compile => "compile",
            Stage::Disassemble => "disassemble",
            Stage::Lift => "lift",
            Stage::SimulateSource => "simulate-source",
            Stage::SimulateTarget => "simulate-target",
            Stage::Compare => "compare",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub sim: SimOptions,
    pub race_policy: RacePolicy,
    pub persist: PersistMode,
    pub opt_rules: Vec<PeepholeRule>,
    /// Root of the run directories; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub hints: MappingHints,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            sim: SimOptions::default(),
            race_policy: RacePolicy::default(),
            persist: PersistMode::Off,
            opt_rules: PeepholeRule::ALL.to_vec(),
            out_dir: None,
            hints: Vec::new(),
        }
    }
}

/// Everything one test produced under one profile. Fields after a failed
/// stage stay `None`.
#[derive(Debug)]
pub struct PipelineRun {
    pub test: String,
    pub profile: String,
    /// The source test after local persistence.
    pub source: Option<LitmusTest>,
    pub unit: Option<String>,
    pub listing: Option<String>,
    pub symbols: Option<SymbolMap>,
    pub target: Option<LitmusTest>,
    pub opt_stats: Option<OptStats>,
    pub source_result: Option<SimulationResult>,
    pub target_result: Option<SimulationResult>,
    pub report: Option<DiffReport>,
    /// Wall-clock seconds per completed stage.
    pub timings: Vec<(Stage, f64)>,
    pub failure: Option<(Stage, Error)>,
    pub run_dir: Option<PathBuf>,
}

impl PipelineRun {
    fn new(test: &str, profile: &str) -> Self {
        PipelineRun {
            test: test.to_string(),
            profile: profile.to_string(),
            source: None,
            unit: None,
            listing: None,
            symbols: None,
            target: None,
            opt_stats: None,
            source_result: None,
            target_result: None,
            report: None,
            timings: Vec::new(),
            failure: None,
            run_dir: None,
        }
    }

    pub fn record(&self) -> Option<DiffRecord> {
        let mut r = DiffRecord::new(&self.test, Some(&self.profile), self.report.as_ref()?);
        r.timings = self.timings.iter().map(|(s, t)| (s.name().to_string(), *t)).collect();
        Some(r)
    }

    /// 2 on failure, 1 when the report is Positive, else 0.
    pub fn exit_code(&self) -> i32 {
        match (&self.failure, &self.report) {
            (Some(_), _) => 2,
            (None, Some(r)) if r.is_positive() => 1,
            _ => 0,
        }
    }

    fn stage<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T, Error>) -> Option<T> {
        let start = Instant::now();
        match f(self) {
            Ok(v) => {
                self.timings.push((stage, start.elapsed().as_secs_f64()));
                Some(v)
            }
            Err(e) => {
                self.failure = Some((stage, e));
                None
            }
        }
    }

    fn write(&self, file: &str, contents: &str) -> Result<(), Error> {
        match &self.run_dir {
            Some(dir) => {
                let path = dir.join(file);
                std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
            }
            None => Ok(()),
        }
    }
}

pub(crate) struct ToolOutput {
    pub stdout: String,
    pub stderr: String,
    pub code: Option<i32>,
}

/// Run `argv` with captured output, killing it after `limit`.
pub(crate) fn run_tool(argv: &[String], limit: Duration, stage: Stage) -> Result<ToolOutput, Error> {
    let (prog, args) = argv
        .split_first()
        .ok_or_else(|| Error::InvalidProfile(format!("empty {stage} command")))?;
    let mut child = Command::new(prog)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::ToolNotFound(prog.clone()),
            _ => Error::io(prog, e),
        })?;
    let drain = |mut r: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("piped stdout")));
    let err = drain(Box::new(child.stderr.take().expect("piped stderr")));
    let start = Instant::now();
    let status = loop {
        if let Some(s) = child.try_wait().map_err(|e| Error::io(prog, e))? {
            break s;
        }
        if start.elapsed() >= limit {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::StageTimeout {
                stage: stage.name().into(),
                secs: limit.as_secs(),
            });
        }
        thread::sleep(Duration::from_millis(5));
    };
    Ok(ToolOutput {
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        code: status.code(),
    })
}

fn substitute(argv: &[String], src: &Path, obj: &Path) -> Vec<String> {
    argv.iter()
        .map(|a| {
            a.replace("{src}", &src.to_string_lossy())
                .replace("{obj}", &obj.to_string_lossy())
        })
        .collect()
}

/// Compile `unit` and disassemble the result with an external profile's
/// tools, returning the listing and the symbols it references. Work files
/// go under `dir`.
pub fn compile_and_disassemble(
    unit: &str,
    profile: &CompilerProfile,
    dir: &Path,
) -> Result<(String, SymbolMap), Error> {
    compile(unit, profile, dir)?;
    let text = disassemble(profile, dir)?;
    let (_, symbols) = parse_listing(&text)?;
    Ok((text, symbols))
}

fn work_files(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("unit.c"), dir.join("unit.o"))
}

fn compile(unit: &str, profile: &CompilerProfile, dir: &Path) -> Result<(), Error> {
    let (src, obj) = work_files(dir);
    std::fs::write(&src, unit).map_err(|e| Error::io(&src, e))?;
    let limit = Duration::from_secs(profile.timeout_secs);
    let out = run_tool(&substitute(&profile.compile_command, &src, &obj), limit, Stage::Compile)?;
    if out.code != Some(0) {
        return Err(Error::CompileFailed {
            code: out.code,
            stderr: out.stderr,
        });
    }
    Ok(())
}

fn disassemble(profile: &CompilerProfile, dir: &Path) -> Result<String, Error> {
    let (src, obj) = work_files(dir);
    let limit = Duration::from_secs(profile.timeout_secs);
    let out = run_tool(&substitute(&profile.disassemble_command, &src, &obj), limit, Stage::Disassemble)?;
    if out.code != Some(0) {
        return Err(Error::DisassembleFailed(out.stderr));
    }
    Ok(out.stdout)
}

/// prepare, compile, lift, simulate both sides and compare. Stage errors
/// are recorded in the returned run rather than propagated.
pub fn run_pipeline(test: &LitmusTest, profile: &CompilerProfile, opts: &PipelineOptions) -> PipelineRun {
    let mut run = PipelineRun::new(&test.name, &profile.name);
    run_stages(&mut run, test, profile, opts);
    run
}

fn run_stages(run: &mut PipelineRun, test: &LitmusTest, profile: &CompilerProfile, opts: &PipelineOptions) -> Option<()> {
    let source = run.stage(Stage::Prepare, |run| {
        if let Some(root) = &opts.out_dir {
            let dir = root.join(&profile.name).join(&test.name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for stale in ["src.litmus", "unit.c", "disasm.txt", "tgt.litmus", "src.log", "tgt.log", "diff.json"] {
                let _ = std::fs::remove_file(dir.join(stale));
            }
            run.run_dir = Some(dir);
        }
        profile.validate()?;
        let source = persist_locals(test, &opts.persist.plan_for(test))?;
        let unit = prepare_source(&source)?;
        run.write("src.litmus", &source.render())?;
        run.write("unit.c", &unit)?;
        run.unit = Some(unit);
        Ok(source)
    })?;
    run.source = Some(source.clone());

    let target = match profile.kind {
        ProfileKind::PrebuiltAsm => {
            let dir = profile.asm_dir.clone().unwrap_or_default();
            let asm = run.stage(Stage::Compile, |_| {
                let path = dir.join(format!("{}.litmus", test.name));
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let asm = parse_any(&text)?;
                if asm.is_source() {
                    return Err(Error::InvalidTest(format!("{} is not an assembly test", path.display())));
                }
                Ok(asm)
            })?;
            run.stage(Stage::Lift, |run| {
                let (t, stats) = optimize_asm(&asm, &opts.opt_rules)?;
                run.write("tgt.litmus", &t.render())?;
                run.opt_stats = Some(stats);
                Ok(t)
            })?
        }
        ProfileKind::Reference | ProfileKind::External => {
            let listing = if profile.kind == ProfileKind::Reference {
                run.stage(Stage::Compile, |run| {
                    let lowering = LoweringOptions {
                        fold_constants: profile.fold_constants,
                    };
                    let text = lower_aarch64(&source, &lowering)?;
                    run.write("disasm.txt", &text)?;
                    Ok(text)
                })?
            } else {
                let unit = run.unit.clone().unwrap_or_default();
                // The scratch directory lives until the listing is read.
                let (_scratch, dir) = run.stage(Stage::Compile, |run| {
                    let scratch = match run.run_dir {
                        Some(_) => None,
                        None => Some(tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?),
                    };
                    let dir = match (&run.run_dir, &scratch) {
                        (Some(d), _) => d.clone(),
                        (None, t) => t.as_ref().expect("created above").path().to_path_buf(),
                    };
                    compile(&unit, profile, &dir)?;
                    Ok((scratch, dir))
                })?;
                run.stage(Stage::Disassemble, |run| {
                    let text = disassemble(profile, &dir)?;
                    run.write("disasm.txt", &text)?;
                    Ok(text)
                })?
            };
            run.listing = Some(listing.clone());
            run.stage(Stage::Lift, |run| {
                let (d, symbols) = parse_listing(&listing)?;
                let (t, stats) = asm_to_litmus(&d, &symbols, &source, &opts.opt_rules)?;
                run.write("tgt.litmus", &t.render())?;
                run.symbols = Some(symbols);
                run.opt_stats = Some(stats);
                Ok(t)
            })?
        }
    };
    run.target = Some(target.clone());

    let src_model = run.stage(Stage::SimulateSource, |run| {
        let model = lookup_model(&profile.source_model)?;
        let r = simulate(&source, &model, &opts.sim)?;
        run.write("src.log", &r.render_log())?;
        run.source_result = Some(r);
        Ok(model)
    })?;
    run.stage(Stage::SimulateTarget, |run| {
        let r = simulate(&target, &lookup_model(&profile.target_model)?, &opts.sim)?;
        run.write("tgt.log", &r.render_log())?;
        run.target_result = Some(r);
        Ok(())
    })?;
    run.stage(Stage::Compare, |run| {
        let (Some(s), Some(t)) = (&run.source_result, &run.target_result) else {
            unreachable!("simulation stages completed");
        };
        let m = infer_state_mapping(&source, &target, &opts.hints)?;
        let report = compare_gated(&source, &src_model, &opts.sim, opts.race_policy, &s.outcomes, &t.outcomes, &m)?;
        run.report = Some(report);
        Ok(())
    })?;
    let line = run.record().map(|r| r.to_json_line() + "\n").unwrap_or_default();
    if let Err(e) = run.write("diff.json", &line) {
        run.report = None;
        run.failure = Some((Stage::Compare, e));
        return None;
    }
    Some(())
}
