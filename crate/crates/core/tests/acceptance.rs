//! Acceptance criteria, one PASS/FAIL line each. Runs without external
//! tools unless `LITMUS_DIFF_LIVE=1` enables the live compiler smoke test.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{golden, grid, manifest, memory_events, sc_interleavings};
use litmus_diff::diff::{compare_gated, infer_state_mapping, Classification, MappingHints, RacePolicy};
use litmus_diff::exec::{detect_races, simulate, Outcome, SimOptions, SimulationResult};
use litmus_diff::litmus::{LitmusTest, Statement};
use litmus_diff::model::{lookup_model, ModelSpec};
use litmus_diff::pipeline::{load_profiles, run_batch, run_pipeline, PipelineOptions};
use litmus_diff::transform::{optimize_asm, persist_locals, PeepholeRule, PersistencePlan};
use litmus_diff::Error;

type Check = Result<String, String>;

type Criterion = (&'static str, &'static str, fn() -> Check);

fn model(name: &str) -> ModelSpec {
    lookup_model(name).unwrap()
}

fn sim(t: &LitmusTest, m: &str) -> SimulationResult {
    simulate(t, &model(m), &SimOptions::default()).unwrap()
}

fn rendered(r: &SimulationResult) -> BTreeSet<String> {
    r.outcomes.outcomes().map(|o| o.render(false)).collect()
}

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn classify(src: &LitmusTest, tgt: &LitmusTest, src_model: &str) -> Classification {
    let (sm, opts) = (model(src_model), SimOptions::default());
    let so = simulate(src, &sm, &opts).unwrap();
    let to = sim(tgt, "armv8_lite");
    let m = infer_state_mapping(src, tgt, &MappingHints::new()).unwrap();
    compare_gated(src, &sm, &opts, RacePolicy::IgnoreRacy, &so.outcomes, &to.outcomes, &m)
        .unwrap()
        .classification
}

fn corpus() -> Vec<LitmusTest> {
    grid("corpus")
}

fn mp_split() -> Check {
    let start = Instant::now();
    let src = rendered(&sim(&golden("mp"), "rc11_lite"));
    ensure(!src.contains("1:r0=0; y=2;"), || format!("source allows the outcome: {src:?}"))?;
    let tgt = rendered(&sim(&golden("mp_aarch64_stadd_persist"), "armv8_lite"));
    ensure(tgt.contains("q1_r0=0; y=2;"), || format!("target forbids the outcome: {tgt:?}"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("source {} outcomes, target {} outcomes", src.len(), tgt.len()))
}

fn lb_sets() -> Check {
    let start = Instant::now();
    let expect: BTreeSet<String> =
        ["0:r0=0; 1:r0=0;", "0:r0=0; 1:r0=1;", "0:r0=1; 1:r0=0;"].map(String::from).into();
    let (src, tgt) = (golden("lb"), golden("lb_aarch64"));
    let so = sim(&src, "rc11_lite");
    ensure(rendered(&so) == expect, || format!("source {:?}", rendered(&so)))?;
    let to = sim(&tgt, "armv8_lite");
    let mut expect_tgt: BTreeSet<String> = expect.iter().map(|s| s.replace("0:", "P0_").replace("1:", "P1_")).collect();
    expect_tgt.insert("P0_r0=1; P1_r0=1;".into());
    ensure(rendered(&to) == expect_tgt, || format!("target {:?}", rendered(&to)))?;
    let m = infer_state_mapping(&src, &tgt, &MappingHints::new()).unwrap();
    let sm = model("rc11_lite");
    let r = compare_gated(&src, &sm, &SimOptions::default(), RacePolicy::IgnoreRacy, &so.outcomes, &to.outcomes, &m)
        .unwrap();
    ensure(r.classification == Classification::Positive, || format!("{:?}", r.classification))?;
    let novel: Vec<String> = r.novel_outcomes.iter().map(|o| o.render(false)).collect();
    ensure(novel == ["0:r0=1; 1:r0=1;"], || format!("novel {novel:?}"))?;
    within(start, Duration::from_secs(1))?;
    Ok("3 source outcomes, 4 target outcomes, 1 novel".into())
}

fn lb_sweep() -> Check {
    let start = Instant::now();
    let tests = grid("lb294");
    ensure(tests.len() == 294, || format!("grid has {} tests", tests.len()))?;
    let profiles = load_profiles(&manifest("profiles/reference.json")).unwrap();
    let s = run_batch(&tests, &profiles, &PipelineOptions::default(), 4);
    let counts: Vec<usize> = s.profiles.iter().map(|p| p.positive).collect();
    ensure(s.failures() == 0, || format!("{} failures", s.failures()))?;
    ensure(counts == [294, 0], || format!("positives {counts:?}"))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("294 -> 0 in {:.1?}", start.elapsed()))
}

fn sc_oracle() -> Check {
    let start = Instant::now();
    let tests: Vec<LitmusTest> =
        corpus().into_iter().filter(|t| t.threads.len() <= 3 && memory_events(t) <= 6).collect();
    ensure(tests.len() >= 200, || format!("only {} tests", tests.len()))?;
    for t in &tests {
        let engine = sim(t, "sc").outcomes.outcome_set();
        let oracle = sc_interleavings(t);
        ensure(engine == oracle, || format!("{}: engine {engine:?} oracle {oracle:?}", t.name))?;
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!("{} tests agree", tests.len()))
}

fn lb3_scaling() -> Check {
    let unopt = golden("lb3_aarch64_unoptimized");
    let (opt, stats) = optimize_asm(&unopt, &PeepholeRule::ALL).unwrap();
    let start = Instant::now();
    let r = sim(&opt, "armv8_lite");
    let fast = start.elapsed();
    ensure(r.outcomes.len() == 8, || format!("optimised form has {} outcomes", r.outcomes.len()))?;
    ensure(fast < Duration::from_secs(1), || format!("optimised form took {fast:.2?}"))?;
    let budget = SimOptions {
        timeout: Some(Duration::from_secs(60)),
        ..Default::default()
    };
    let start = Instant::now();
    let slow = simulate(&unopt, &model("armv8_lite"), &budget);
    let took = start.elapsed();
    let detail = format!("optimised {fast:.3?} after {} rewrites", stats.total_fired());
    match slow {
        Err(e @ (Error::Timeout(_) | Error::CandidateExplosion(_))) => Ok(format!("{detail}, unoptimised: {e}")),
        Err(e) => Err(format!("unoptimised form failed: {e}")),
        Ok(_) => {
            let ratio = took.as_secs_f64() / fast.as_secs_f64().max(1e-6);
            ensure(ratio >= 100.0, || format!("{detail}, unoptimised {took:.2?} only {ratio:.0}x slower"))?;
            Ok(format!("{detail}, unoptimised {took:.2?} ({ratio:.0}x)"))
        }
    }
}

fn restrict(o: &Outcome, keep: &BTreeSet<litmus_diff::litmus::Observable>) -> Outcome {
    Outcome(o.0.iter().filter(|(k, _)| keep.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect())
}

fn persistence_conservative() -> Check {
    let start = Instant::now();
    let rc11 = model("rc11_lite");
    let tests: Vec<LitmusTest> =
        corpus().into_iter().filter(|t| detect_races(t, &rc11).unwrap().is_empty()).collect();
    ensure(tests.len() >= 100, || format!("only {} race-free tests", tests.len()))?;
    for t in &tests {
        let p = persist_locals(t, &PersistencePlan::auto(t)).unwrap();
        let keep = t.observables();
        for m in ["rc11_lite", "rc11_lb"] {
            let base = sim(t, m).outcomes.outcome_set();
            let pers: BTreeSet<Outcome> = sim(&p, m).outcomes.outcomes().map(|o| restrict(o, &keep)).collect();
            ensure(base == pers, || format!("{} under {m}: {base:?} vs {pers:?}", t.name))?;
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!("{} race-free tests, 2 models", tests.len()))
}

fn heisenbug() -> Check {
    let src = golden("mp");
    let masked = classify(&src, &golden("mp_aarch64_stadd"), "rc11_lite");
    ensure(masked == Classification::Equal, || format!("without persistence: {masked:?}"))?;
    let persisted = persist_locals(&src, &PersistencePlan::auto(&src)).unwrap();
    let exposed = classify(&persisted, &golden("mp_aarch64_stadd_persist"), "rc11_lite");
    ensure(exposed == Classification::Positive, || format!("with persistence: {exposed:?}"))?;
    Ok("Equal without persistence, Positive with".into())
}

/// A store followed in program order by a load, on any path.
fn has_store_load_pair(t: &LitmusTest) -> bool {
    t.threads.iter().any(|th| {
        let mut stored = false;
        let mut pair = false;
        for s in th.source_body().unwrap_or(&[]) {
            s.walk(&mut |s| match s {
                Statement::Store { .. } => stored = true,
                Statement::Load { .. } => pair |= stored,
                Statement::FetchAdd { .. } | Statement::Exchange { .. } => {
                    pair |= stored;
                    stored = true;
                }
                _ => {}
            });
        }
        pair
    })
}

fn containment() -> Check {
    let start = Instant::now();
    let tests = corpus();
    let mut tso_checked = 0;
    for t in &tests {
        let [sc, lite, lb] = ["sc", "rc11_lite", "rc11_lb"].map(|m| sim(t, m).outcomes.outcome_set());
        ensure(sc.is_subset(&lite), || format!("{}: sc not within rc11_lite", t.name))?;
        ensure(lite.is_subset(&lb), || format!("{}: rc11_lite not within rc11_lb", t.name))?;
        if !has_store_load_pair(t) {
            tso_checked += 1;
            let tso = sim(t, "tso").outcomes.outcome_set();
            ensure(tso == sc, || format!("{}: tso {tso:?} sc {sc:?}", t.name))?;
        }
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!("{} tests, tso = sc on {tso_checked}", tests.len()))
}

fn strip_time(log: &str) -> String {
    log.lines().filter(|l| !l.starts_with("Time")).collect::<Vec<_>>().join("\n")
}

fn determinism() -> Check {
    for t in [golden("mp"), golden("lb"), golden("lb_aarch64"), golden("mp_aarch64_stadd_persist")] {
        let m = if t.is_source() { "rc11_lite" } else { "armv8_lite" };
        let (a, b) = (sim(&t, m).render_log(), sim(&t, m).render_log());
        ensure(strip_time(&a) == strip_time(&b), || format!("{}: logs differ", t.name))?;
    }
    let profile = load_profiles(&manifest("profiles/reference.json")).unwrap().remove(0);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for t in [golden("lb"), golden("mp")] {
        let records: Vec<_> = dirs
            .iter()
            .map(|d| {
                let opts = PipelineOptions {
                    out_dir: Some(d.path().to_path_buf()),
                    persist: "auto".parse().unwrap(),
                    ..Default::default()
                };
                let mut r = run_pipeline(&t, &profile, &opts).record().unwrap();
                r.timings.clear();
                r.to_json_line()
            })
            .collect();
        ensure(records[0] == records[1], || format!("{}: records differ", t.name))?;
        for f in ["src.litmus", "unit.c", "disasm.txt", "tgt.litmus", "src.log", "tgt.log"] {
            let read = |d: &tempfile::TempDir| {
                let p = d.path().join(&profile.name).join(&t.name).join(f);
                strip_time(&std::fs::read_to_string(p).unwrap())
            };
            ensure(read(&dirs[0]) == read(&dirs[1]), || format!("{}: {f} differs", t.name))?;
        }
    }
    Ok("logs, run directories and records repeat".into())
}

/// `None` when the live compiler check is not enabled.
fn live_compiler() -> Option<Check> {
    if std::env::var("LITMUS_DIFF_LIVE").as_deref() != Ok("1") {
        return None;
    }
    let profile = load_profiles(&manifest("profiles/clang.json"))
        .unwrap()
        .into_iter()
        .find(|p| p.name == "clang-O2-aarch64-asm")
        .unwrap();
    let run = run_pipeline(&golden("mp"), &profile, &PipelineOptions::default());
    Some(match (&run.failure, &run.report) {
        (Some((stage, e)), _) => Err(format!("{stage}: {e}")),
        (None, Some(r)) => Ok(format!("MP {:?}", r.classification)),
        (None, None) => Err("no report".into()),
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("C1", "MP forbidden/allowed split", mp_split),
        ("C2", "LB outcome sets", lb_sets),
        ("C3", "LB sweep under rc11_lite and rc11_lb", lb_sweep),
        ("C4", "SC engine matches interleaving oracle", sc_oracle),
        ("C5", "3-thread LB scaling", lb3_scaling),
        ("C6", "persistence conservativity", persistence_conservative),
        ("C7", "heisenbug detection", heisenbug),
        ("C8", "model containment", containment),
        ("C9", "determinism", determinism),
    ];
    let mut failed = 0;
    let mut report = |id: &str, what: &str, r: Check| match r {
        Ok(detail) => println!("PASS {id} {what}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("FAIL {id} {what}: {why}");
        }
    };
    for (id, what, check) in criteria {
        report(id, what, check());
    }
    match live_compiler() {
        Some(r) => report("C10", "live compiler smoke test", r),
        None => println!("SKIP C10 live compiler smoke test: set LITMUS_DIFF_LIVE=1 to run"),
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
