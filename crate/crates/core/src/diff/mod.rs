//! Comparing target outcomes against source outcomes under a state mapping.

mod mapping;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use mapping::{apply_mapping, conventional_name, infer_state_mapping, Mapped, MappingHints, StateMapping};

use crate::error::Error;
use crate::exec::{detect_races_with, Outcome, OutcomeSet, SimOptions};
use crate::litmus::{LitmusTest, Observable};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Classification {
    Equal,
    /// Some target outcome is not a source outcome.
    Positive,
    /// Target outcomes are a strict subset of source outcomes.
    Negative,
    /// Never produced: any novel outcome already makes a report Positive.
    Mixed,
}

impl Classification {
    pub fn from_sets(novel: &BTreeSet<Outcome>, missing: &BTreeSet<Outcome>) -> Self {
        if !novel.is_empty() {
            Classification::Positive
        } else if !missing.is_empty() {
            Classification::Negative
        } else {
            Classification::Equal
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What to do when the source test has a data race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RacePolicy {
    #[default]
    IgnoreRacy,
    CompareAnyway,
}

impl FromStr for RacePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ignore-racy" => Ok(RacePolicy::IgnoreRacy),
            "compare-anyway" => Ok(RacePolicy::CompareAnyway),
            _ => Err(format!("unknown race policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffReport {
    pub classification: Classification,
    /// Target-only outcomes, renamed to source observables.
    pub novel_outcomes: BTreeSet<Outcome>,
    /// Source-only outcomes.
    pub missing_outcomes: BTreeSet<Outcome>,
    /// Source outcomes projected onto the mapped observables.
    pub source_outcomes: BTreeSet<Outcome>,
    /// Target outcomes under target names, flagged when novel.
    pub target_outcomes: Vec<(Outcome, bool)>,
    /// Target observables dropped for lack of a source counterpart.
    pub dropped: BTreeSet<Observable>,
    /// Comparison skipped because the source test is racy.
    pub ub_filtered: bool,
}

impl DiffReport {
    fn ub_filtered() -> Self {
        DiffReport {
            classification: Classification::Equal,
            novel_outcomes: BTreeSet::new(),
            missing_outcomes: BTreeSet::new(),
            source_outcomes: BTreeSet::new(),
            target_outcomes: Vec::new(),
            dropped: BTreeSet::new(),
            ub_filtered: true,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.classification == Classification::Positive
    }
}

fn restrict(o: &Outcome, keep: &BTreeSet<&Observable>) -> Outcome {
    Outcome(
        o.0.iter()
            .filter(|(k, _)| keep.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    )
}

/// Compare over the observables the mapping covers. Source observables
/// without a target counterpart are projected away on both sides.
pub fn compare_outcomes(
    src_out: &OutcomeSet,
    tgt_out: &OutcomeSet,
    m: &StateMapping,
) -> Result<DiffReport, Error> {
    let keep: BTreeSet<&Observable> = m.pairs.keys().collect();
    let source: BTreeSet<Outcome> = src_out.outcomes().map(|o| restrict(o, &keep)).collect();
    let mut dropped = BTreeSet::new();
    let mut mapped_targets = BTreeSet::new();
    let mut target_outcomes = Vec::new();
    for o in tgt_out.outcomes() {
        let r = apply_mapping(m, o)?;
        dropped.extend(r.dropped);
        let novel = !source.contains(&r.outcome);
        target_outcomes.push((o.clone(), novel));
        mapped_targets.insert(r.outcome);
    }
    let novel: BTreeSet<Outcome> = mapped_targets.difference(&source).cloned().collect();
    let missing: BTreeSet<Outcome> = source.difference(&mapped_targets).cloned().collect();
    target_outcomes.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(DiffReport {
        classification: Classification::from_sets(&novel, &missing),
        novel_outcomes: novel,
        missing_outcomes: missing,
        source_outcomes: source,
        target_outcomes,
        dropped,
        ub_filtered: false,
    })
}

/// `compare_outcomes`, skipped when the source test races under `model`
/// and the policy says to ignore racy tests.
pub fn compare_gated(
    src: &LitmusTest,
    model: &ModelSpec,
    opts: &SimOptions,
    policy: RacePolicy,
    src_out: &OutcomeSet,
    tgt_out: &OutcomeSet,
    m: &StateMapping,
) -> Result<DiffReport, Error> {
    if policy == RacePolicy::IgnoreRacy && !detect_races_with(src, model, opts)?.is_empty() {
        return Ok(DiffReport::ub_filtered());
    }
    compare_outcomes(src_out, tgt_out, m)
}

/// Two-column table: source outcomes left, target outcomes right with
/// novel ones first and prefixed `+`.
pub fn render_compare_table(report: &DiffReport, src_label: &str, tgt_label: &str) -> String {
    let left: Vec<String> = report.source_outcomes.iter().map(|o| o.to_string()).collect();
    let right: Vec<String> = report
        .target_outcomes
        .iter()
        .map(|(o, novel)| format!("{}{o}", if *novel { "+" } else { "" }))
        .collect();
    let width = left
        .iter()
        .map(String::len)
        .chain([src_label.len()])
        .max()
        .unwrap_or(0);
    let mut s = format!("{src_label:<width$} {tgt_label}").trim_end().to_string();
    s.push('\n');
    for i in 0..left.len().max(right.len()) {
        let l = left.get(i).map(String::as_str).unwrap_or("");
        let r = right.get(i).map(String::as_str).unwrap_or("");
        s.push_str(format!("{l:<width$} {r}").trim_end());
        s.push('\n');
    }
    s
}

/// One JSON-lines record per compared test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffRecord {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    pub classification: Classification,
    pub ub_filtered: bool,
    pub novel: Vec<String>,
    pub missing: Vec<String>,
    /// Stage name to wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
}

impl DiffRecord {
    pub fn new(name: &str, profile: Option<&str>, report: &DiffReport) -> Self {
        DiffRecord {
            name: name.to_string(),
            profile: profile.map(str::to_string),
            classification: report.classification,
            ub_filtered: report.ub_filtered,
            novel: report.novel_outcomes.iter().map(|o| o.to_string()).collect(),
            missing: report.missing_outcomes.iter().map(|o| o.to_string()).collect(),
            timings: BTreeMap::new(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{simulate, SimOptions};
    use crate::litmus::{parse_litmus, Value};
    use crate::model::lookup_model;

    fn outcome(pairs: &[(&str, i64)]) -> Outcome {
        Outcome(
            pairs
                .iter()
                .map(|(k, v)| (Observable::parse(k).unwrap(), Value::Int(*v)))
                .collect(),
        )
    }

    fn set_of(os: &[Outcome]) -> OutcomeSet {
        let t = parse_litmus(crate::fixtures::SB).unwrap();
        let mut first = None;
        crate::exec::enumerate_candidates(&t, &SimOptions::default(), &mut |c| {
            first.get_or_insert(c);
            Ok(())
        })
        .unwrap();
        let w = first.unwrap();
        let mut s = OutcomeSet::new();
        for o in os {
            s.insert(o.clone(), w.clone());
        }
        s
    }

    #[test]
    fn equal_and_negative() {
        let a = outcome(&[("0:r0", 0)]);
        let b = outcome(&[("0:r0", 1)]);
        let m = StateMapping::identity([Observable::reg(0, "r0")]);
        let r = compare_outcomes(&set_of(&[a.clone(), b.clone()]), &set_of(&[a.clone(), b]), &m).unwrap();
        assert_eq!(r.classification, Classification::Equal);
        assert!(!render_compare_table(&r, "src", "tgt").contains('+'));
        let r = compare_outcomes(&set_of(&[a.clone(), outcome(&[("0:r0", 1)])]), &set_of(&[a]), &m).unwrap();
        assert_eq!(r.classification, Classification::Negative);
    }

    #[test]
    fn empty_sets_give_header_only() {
        let m = StateMapping::default();
        let r = compare_outcomes(&OutcomeSet::new(), &OutcomeSet::new(), &m).unwrap();
        assert_eq!(render_compare_table(&r, "src", "tgt"), "src tgt\n");
    }

    #[test]
    fn lb_is_positive() {
        let src = parse_litmus(crate::fixtures::LB).unwrap();
        let tgt = parse_litmus(
            "AArch64 LB\n{ 0:X1=x; 0:X3=y; 0:X4=P0_r0; 1:X1=y; 1:X3=x; 1:X4=P1_r0; }\n P0 | P1 ;\n LDR W0,[X1] | LDR W0,[X1] ;\n MOV W2,#1 | MOV W2,#1 ;\n STR W2,[X3] | STR W2,[X3] ;\n STR W0,[X4] | STR W0,[X4] ;\nexists (P0_r0=1 /\\ P1_r0=1)\n",
        )
        .unwrap();
        let opts = SimOptions::default();
        let s = simulate(&src, &lookup_model("rc11_lite").unwrap(), &opts).unwrap();
        let t = simulate(&tgt, &lookup_model("armv8_lite").unwrap(), &opts).unwrap();
        let m = infer_state_mapping(&src, &tgt, &vec![]).unwrap();
        let r = compare_outcomes(&s.outcomes, &t.outcomes, &m).unwrap();
        assert_eq!(r.classification, Classification::Positive);
        assert_eq!(r.novel_outcomes, [outcome(&[("0:r0", 1), ("1:r0", 1)])].into());
        let table = render_compare_table(&r, "c11", "a64");
        assert!(table.contains("+[P0_r0=1; P1_r0=1;]"), "{table}");
        let rec = DiffRecord::new("LB", None, &r).to_json_line();
        assert!(rec.contains("\"classification\":\"Positive\""), "{rec}");
    }
}
