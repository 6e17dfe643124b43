use std::fmt::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::profile::CompilerProfile;
use super::run::{run_pipeline, PipelineOptions};
use crate::diff::{Classification, DiffRecord};
use crate::litmus::LitmusTest;

/// The result of one (test, profile) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub test: String,
    pub profile: String,
    pub record: Option<DiffRecord>,
    /// `<stage>: <error>` when the pipeline failed or panicked.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileSummary {
    pub profile: String,
    pub tests: usize,
    pub positive: usize,
    pub negative: usize,
    pub equal: usize,
    pub ub_filtered: usize,
    pub failed: usize,
}

impl ProfileSummary {
    fn count(&mut self, e: &BatchEntry) {
        self.tests += 1;
        match (&e.record, &e.failure) {
            (_, Some(_)) | (None, None) => self.failed += 1,
            (Some(r), None) if r.ub_filtered => self.ub_filtered += 1,
            (Some(r), None) => match r.classification {
                Classification::Positive | Classification::Mixed => self.positive += 1,
                Classification::Negative => self.negative += 1,
                Classification::Equal => self.equal += 1,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchSummary {
    /// Profile-major, then test order.
    pub entries: Vec<BatchEntry>,
    pub profiles: Vec<ProfileSummary>,
}

impl BatchSummary {
    pub fn positives(&self) -> usize {
        self.profiles.iter().map(|p| p.positive).sum()
    }

    pub fn failures(&self) -> usize {
        self.profiles.iter().map(|p| p.failed).sum()
    }

    /// 2 if any pair failed, else 1 if any was Positive, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.failures() > 0 {
            2
        } else if self.positives() > 0 {
            1
        } else {
            0
        }
    }

    pub fn render_table(&self) -> String {
        let width = self
            .profiles
            .iter()
            .map(|p| p.profile.len())
            .chain(["profile".len()])
            .max()
            .unwrap_or(0);
        let mut s = format!("{:<width$} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}\n", "profile", "tests", "+ve", "-ve", "equal", "ub", "failed");
        for p in &self.profiles {
            let _ = writeln!(
                s,
                "{:<width$} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                p.profile, p.tests, p.positive, p.negative, p.equal, p.ub_filtered, p.failed
            );
        }
        s
    }

    pub fn json_lines(&self) -> String {
        self.entries
            .iter()
            .filter_map(|e| e.record.as_ref())
            .map(|r| r.to_json_line() + "\n")
            .collect()
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Run every test under every profile with up to `jobs` pipelines in
/// flight. A failing or panicking pair is counted, never fatal.
pub fn run_batch(
    tests: &[LitmusTest],
    profiles: &[CompilerProfile],
    opts: &PipelineOptions,
    jobs: usize,
) -> BatchSummary {
    let pairs: Vec<(&CompilerProfile, &LitmusTest)> =
        profiles.iter().flat_map(|p| tests.iter().map(move |t| (p, t))).collect();
    let slots: Vec<Mutex<Option<BatchEntry>>> = pairs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(pairs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((profile, test)) = pairs.get(i) else { break };
                let entry = match catch_unwind(AssertUnwindSafe(|| run_pipeline(test, profile, opts))) {
                    Ok(run) => BatchEntry {
                        test: test.name.clone(),
                        profile: profile.name.clone(),
                        record: run.record(),
                        failure: run.failure.as_ref().map(|(s, e)| format!("{s}: {e}")),
                    },
                    Err(p) => BatchEntry {
                        test: test.name.clone(),
                        profile: profile.name.clone(),
                        record: None,
                        failure: Some(format!("panic: {}", panic_message(p))),
                    },
                };
                *slots[i].lock().expect("slot lock") = Some(entry);
            });
        }
    });
    let entries: Vec<BatchEntry> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every pair ran"))
        .collect();
    let profiles = profiles
        .iter()
        .map(|p| {
            let mut s = ProfileSummary {
                profile: p.name.clone(),
                ..Default::default()
            };
            for e in entries.iter().filter(|e| e.profile == p.name) {
                s.count(e);
            }
            s
        })
        .collect();
    BatchSummary { entries, profiles }
}
