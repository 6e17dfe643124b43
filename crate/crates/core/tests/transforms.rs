use std::path::Path;
use std::time::{Duration, Instant};

use litmus_diff::exec::{simulate, SimOptions};
use litmus_diff::litmus::{parse_litmus, LitmusTest};
use litmus_diff::model::lookup_model;
use litmus_diff::transform::{optimize_asm, persist_locals, PeepholeRule, PersistencePlan};

fn golden(name: &str) -> LitmusTest {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    parse_litmus(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn optimised_three_thread_lb_has_eight_states() {
    let t = golden("lb3_aarch64_unoptimized.litmus");
    let (o, stats) = optimize_asm(&t, &PeepholeRule::ALL).unwrap();
    assert!(stats.events_after < stats.events_before, "{stats:?}");
    assert_eq!(stats.events_after, 9);
    let start = Instant::now();
    let r = simulate(&o, &lookup_model("armv8_lite").unwrap(), &SimOptions::default()).unwrap();
    assert_eq!(r.outcomes.len(), 8);
    assert!(start.elapsed() < Duration::from_secs(1));
}

#[test]
fn persisted_heisenbug_source_matches_golden_target_shape() {
    let src = golden("mp.litmus");
    let p = persist_locals(&src, &PersistencePlan::auto(&src)).unwrap();
    assert_eq!(p.persisted_globals().len(), 1);
    assert_eq!(p.persisted_globals()[0].as_str(), "q1_r0");
    let opts = SimOptions::default();
    let a = simulate(&src, &lookup_model("rc11_lite").unwrap(), &opts).unwrap();
    let b = simulate(&p, &lookup_model("rc11_lite").unwrap(), &opts).unwrap();
    assert_eq!(a.outcomes.len(), b.outcomes.len());
}
