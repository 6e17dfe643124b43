use std::path::{Path, PathBuf};
use std::time::Instant;

use litmus_diff::diff::{Classification, RacePolicy};
use litmus_diff::litmus::{parse_litmus, LitmusTest};
use litmus_diff::pipeline::{
    load_profiles, run_batch, run_pipeline, CompilerProfile, PipelineOptions, ProfileKind, Stage,
};
use litmus_diff::transform::{generate_pattern_tests, parse_grid};
use litmus_diff::Error;

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn golden(name: &str) -> LitmusTest {
    parse_litmus(&std::fs::read_to_string(manifest(&format!("tests/golden/{name}.litmus"))).unwrap()).unwrap()
}

fn lb_grid() -> Vec<LitmusTest> {
    let text = std::fs::read_to_string(manifest("grids/lb294.conf")).unwrap();
    generate_pattern_tests(&parse_grid(&text).unwrap()).unwrap()
}

#[test]
fn lb_through_the_reference_profile_writes_every_artifact() {
    let out = tempfile::tempdir().unwrap();
    let opts = PipelineOptions {
        out_dir: Some(out.path().to_path_buf()),
        ..Default::default()
    };
    let profile = CompilerProfile::reference("ref", "rc11_lite");
    let run = run_pipeline(&golden("lb"), &profile, &opts);
    assert!(run.failure.is_none(), "{:?}", run.failure);
    assert_eq!(run.exit_code(), 1);
    let report = run.report.as_ref().unwrap();
    assert_eq!(report.classification, Classification::Positive);
    let dir = out.path().join("ref").join("LB004");
    for f in ["src.litmus", "unit.c", "disasm.txt", "tgt.litmus", "src.log", "tgt.log", "diff.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let tgt_log = std::fs::read_to_string(dir.join("tgt.log")).unwrap();
    assert!(tgt_log.contains("States 4\n"), "{tgt_log}");
    assert!(tgt_log.contains("[P0_r0]=1; [P1_r0]=1;"), "{tgt_log}");
    let stages: Vec<Stage> = run.timings.iter().map(|(s, _)| *s).collect();
    assert_eq!(
        stages,
        [Stage::Prepare, Stage::Compile, Stage::Lift, Stage::SimulateSource, Stage::SimulateTarget, Stage::Compare]
    );
}

#[test]
fn prebuilt_identity_compilation_is_equal() {
    let dir = tempfile::tempdir().unwrap();
    let src = golden("mp");
    std::fs::copy(manifest("tests/golden/mp_aarch64_ldadda_persist.litmus"), dir.path().join("MP32.litmus")).unwrap();
    let profile = CompilerProfile::prebuilt("golden", dir.path(), "rc11_lite");
    let opts = PipelineOptions {
        persist: "auto".parse().unwrap(),
        ..Default::default()
    };
    let run = run_pipeline(&src, &profile, &opts);
    assert!(run.failure.is_none(), "{:?}", run.failure);
    assert_eq!(run.report.unwrap().classification, Classification::Equal);
}

#[test]
fn racy_sources_are_filtered() {
    let racy = parse_litmus(
        "C RACY\n{ }\nP0 (int* x) {\n  *x = 1;\n}\nP1 (int* x) {\n  int r0 = *x;\n}\nexists (1:r0=1)\n",
    )
    .unwrap();
    let profile = CompilerProfile::reference("ref", "rc11_lite");
    let run = run_pipeline(&racy, &profile, &PipelineOptions::default());
    assert!(run.report.as_ref().unwrap().ub_filtered);
    assert_eq!(run.exit_code(), 0);
    let anyway = PipelineOptions {
        race_policy: RacePolicy::CompareAnyway,
        ..Default::default()
    };
    assert!(!run_pipeline(&racy, &profile, &anyway).report.unwrap().ub_filtered);
}

#[test]
fn failed_stage_leaves_only_earlier_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let opts = PipelineOptions {
        out_dir: Some(out.path().to_path_buf()),
        ..Default::default()
    };
    let mut profile = CompilerProfile::reference("missing-tool", "rc11_lite");
    profile.kind = ProfileKind::External;
    profile.compile_command = ["no-such-compiler-xyz", "-c", "{src}", "-o", "{obj}"].map(String::from).to_vec();
    profile.disassemble_command = ["cat", "{obj}"].map(String::from).to_vec();
    let run = run_pipeline(&golden("lb"), &profile, &opts);
    assert!(matches!(&run.failure, Some((Stage::Compile, Error::ToolNotFound(t))) if t == "no-such-compiler-xyz"));
    assert_eq!(run.exit_code(), 2);
    let dir = out.path().join("missing-tool").join("LB004");
    assert!(dir.join("src.litmus").is_file());
    for f in ["disasm.txt", "tgt.litmus", "src.log", "tgt.log", "diff.json"] {
        assert!(!dir.join(f).exists(), "unexpected {f}");
    }
}

#[test]
fn invalid_unit_fails_to_compile() {
    let mut profile = CompilerProfile::reference("false", "rc11_lite");
    profile.kind = ProfileKind::External;
    profile.compile_command = ["sh", "-c", "echo broken >&2; exit 3", "{src}", "{obj}"].map(String::from).to_vec();
    profile.disassemble_command = ["cat", "{obj}"].map(String::from).to_vec();
    let run = run_pipeline(&golden("lb"), &profile, &PipelineOptions::default());
    match run.failure {
        Some((Stage::Compile, Error::CompileFailed { code, stderr })) => {
            assert_eq!(code, Some(3));
            assert_eq!(stderr, "broken\n");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn shell_echo_compiler_feeds_the_listing_parser() {
    // A "compiler" that ignores its input and emits a fixed listing.
    let listing = manifest("tests/golden/lb_clang.s");
    let mut profile = CompilerProfile::reference("echo", "rc11_lite");
    profile.kind = ProfileKind::External;
    profile.compile_command = vec!["sh".into(), "-c".into(), format!("cp {} \"$1\"", listing.display()), "-S".into(), "{obj}".into(), "{src}".into()];
    profile.disassemble_command = ["cat", "{obj}"].map(String::from).to_vec();
    profile.validate().unwrap();
    let run = run_pipeline(&golden("lb"), &profile, &PipelineOptions::default());
    assert!(run.failure.is_none(), "{:?}", run.failure);
    assert_eq!(run.report.unwrap().classification, Classification::Positive);
}

#[test]
fn batch_counts_are_conserved() {
    let tests: Vec<LitmusTest> = lb_grid().into_iter().take(12).collect();
    let mut broken = CompilerProfile::reference("broken", "rc11_lite");
    broken.kind = ProfileKind::PrebuiltAsm;
    broken.asm_dir = Some(PathBuf::from("/nonexistent"));
    let profiles = [CompilerProfile::reference("ref", "rc11_lite"), broken];
    let s = run_batch(&tests, &profiles, &PipelineOptions::default(), 3);
    assert_eq!(s.entries.len(), 24);
    for p in &s.profiles {
        assert_eq!(p.positive + p.negative + p.equal + p.ub_filtered + p.failed, p.tests);
    }
    assert_eq!(s.profiles[0].positive, 12);
    assert_eq!(s.profiles[1].failed, 12);
    assert_eq!(s.exit_code(), 2);
    let one = run_batch(&tests, &profiles, &PipelineOptions::default(), 1);
    let strip = |b: &litmus_diff::pipeline::BatchSummary| {
        b.entries.iter().map(|e| (e.test.clone(), e.record.as_ref().map(|r| r.classification))).collect::<Vec<_>>()
    };
    assert_eq!(strip(&s), strip(&one));
    assert!(run_batch(&[], &profiles, &PipelineOptions::default(), 2).entries.is_empty());
}

#[test]
fn load_buffering_sweep() {
    let tests = lb_grid();
    let profiles = load_profiles(&manifest("profiles/reference.json")).unwrap();
    let start = Instant::now();
    let s = run_batch(&tests, &profiles, &PipelineOptions::default(), 4);
    eprintln!("{}{:?}", s.render_table(), start.elapsed());
    assert_eq!(s.profiles[0].positive, 294);
    assert_eq!(s.profiles[1].positive, 0);
    assert_eq!(s.failures(), 0);
}
