use std::collections::{BTreeMap, BTreeSet};

use crate::error::Error;
use crate::exec::Outcome;
use crate::litmus::{LitmusTest, Location, Observable, Width};

/// Correspondence from source observables to target observables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateMapping {
    /// Source observable to target observable.
    pub pairs: BTreeMap<Observable, Observable>,
    pub unmapped_source: BTreeSet<Observable>,
    pub unmapped_target: BTreeSet<Observable>,
}

/// Register-allocation facts supplied by the compiler side, as
/// (source, target) pairs.
pub type MappingHints = Vec<(Observable, Observable)>;

impl StateMapping {
    pub fn identity(obs: impl IntoIterator<Item = Observable>) -> Self {
        StateMapping {
            pairs: obs.into_iter().map(|o| (o.clone(), o)).collect(),
            ..Default::default()
        }
    }

    /// Swap the roles of source and target.
    pub fn inverse(&self) -> Self {
        StateMapping {
            pairs: self.pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect(),
            unmapped_source: self.unmapped_target.clone(),
            unmapped_target: self.unmapped_source.clone(),
        }
    }

    pub fn is_total(&self) -> bool {
        self.unmapped_source.is_empty()
    }

    pub fn source_of(&self, target: &Observable) -> Option<&Observable> {
        self.pairs.iter().find(|(_, t)| *t == target).map(|(s, _)| s)
    }

    /// Parse a mapping file: one `source target` pair per line, `#`
    /// comments allowed.
    pub fn parse_hints(text: &str) -> Result<MappingHints, Error> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(s), Some(t), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::syntax(n + 1, 1, "`source target`"));
            };
            let parse = |x: &str| Observable::parse(x).ok_or_else(|| Error::syntax(n + 1, 1, "observable"));
            out.push((parse(s)?, parse(t)?));
        }
        Ok(out)
    }
}

/// Persisted-global naming used by compiled tests: `1:r0` becomes `P1_r0`.
pub fn conventional_name(o: &Observable) -> Option<Observable> {
    match o {
        Observable::Reg { thread, name } => Some(Observable::Loc(Location::new(format!("P{thread}_{name}")))),
        Observable::Loc(_) => None,
    }
}

fn width_of(test: &LitmusTest, o: &Observable) -> Option<Width> {
    match o {
        Observable::Loc(l) => test.init.location(l).map(|e| e.width),
        Observable::Reg { thread, name } => test.threads.get(*thread)?.registers.get(name).copied(),
    }
}

fn compatible(src: &LitmusTest, s: &Observable, tgt: &LitmusTest, t: &Observable) -> bool {
    match (width_of(src, s), width_of(tgt, t)) {
        (Some(a), Some(b)) => b.bits() >= a.bits(),
        _ => true,
    }
}

/// Infer a mapping from hints first, then by name: identical observables,
/// then the `i:rj` to `Pi_rj` convention.
pub fn infer_state_mapping(
    src: &LitmusTest,
    tgt: &LitmusTest,
    hints: &MappingHints,
) -> Result<StateMapping, Error> {
    let mut hinted: BTreeMap<&Observable, &Observable> = BTreeMap::new();
    for (s, t) in hints {
        if let Some(prev) = hinted.insert(s, t) {
            if prev != t {
                return Err(Error::AmbiguousMapping(s.to_string()));
            }
        }
    }
    let src_obs = src.observables();
    let tgt_obs = tgt.observables();
    let mut m = StateMapping::default();
    let mut used: BTreeMap<Observable, Observable> = BTreeMap::new();
    for s in &src_obs {
        let candidate = if let Some(t) = hinted.get(s) {
            Some((*t).clone())
        } else if tgt_obs.contains(s) {
            Some(s.clone())
        } else {
            conventional_name(s).filter(|t| tgt_obs.contains(t))
        };
        match candidate {
            Some(t) if tgt_obs.contains(&t) && compatible(src, s, tgt, &t) => {
                if let Some(other) = used.insert(t.clone(), s.clone()) {
                    return Err(Error::AmbiguousMapping(other.to_string()));
                }
                m.pairs.insert(s.clone(), t);
            }
            _ => {
                m.unmapped_source.insert(s.clone());
            }
        }
    }
    m.unmapped_target = tgt_obs.into_iter().filter(|t| !used.contains_key(t)).collect();
    Ok(m)
}

/// An outcome renamed to source names, with the target bindings that had
/// no source counterpart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapped {
    pub outcome: Outcome,
    pub dropped: Vec<Observable>,
}

/// Rename a target outcome to source names.
pub fn apply_mapping(m: &StateMapping, o: &Outcome) -> Result<Mapped, Error> {
    let mut out = BTreeMap::new();
    for (s, t) in &m.pairs {
        let v = o.get(t).ok_or_else(|| Error::MissingBinding(t.to_string()))?;
        out.insert(s.clone(), v.clone());
    }
    let dropped = o
        .0
        .keys()
        .filter(|k| m.source_of(k).is_none())
        .cloned()
        .collect();
    Ok(Mapped {
        outcome: Outcome(out),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::{parse_litmus, Value};

    fn lb_pair() -> (LitmusTest, LitmusTest) {
        let src = parse_litmus(crate::fixtures::LB).unwrap();
        let tgt = parse_litmus(
            "AArch64 LB\n{ 0:X1=x; 0:X4=P0_r0; 1:X1=y; 1:X4=P1_r0; }\n P0 | P1 ;\n LDR W0,[X1] | LDR W0,[X1] ;\n STR W0,[X4] | STR W0,[X4] ;\nexists (P0_r0=1 /\\ P1_r0=1)\n",
        )
        .unwrap();
        (src, tgt)
    }

    #[test]
    fn conventional_names_pair_up() {
        let (src, tgt) = lb_pair();
        let m = infer_state_mapping(&src, &tgt, &vec![]).unwrap();
        assert!(m.is_total());
        assert_eq!(m.pairs[&Observable::reg(1, "r0")], Observable::loc("P1_r0"));
    }

    #[test]
    fn identical_tests_map_to_identity() {
        let (src, _) = lb_pair();
        let m = infer_state_mapping(&src, &src, &vec![]).unwrap();
        assert_eq!(m, StateMapping::identity(src.observables()));
    }

    #[test]
    fn conflicting_hints_are_ambiguous() {
        let (src, tgt) = lb_pair();
        let hints = vec![
            (Observable::reg(0, "r0"), Observable::reg(0, "X0")),
            (Observable::reg(0, "r0"), Observable::reg(0, "X5")),
        ];
        assert!(matches!(
            infer_state_mapping(&src, &tgt, &hints),
            Err(Error::AmbiguousMapping(o)) if o == "0:r0"
        ));
    }

    #[test]
    fn unmapped_target_bindings_are_dropped() {
        let m = StateMapping {
            pairs: [(Observable::reg(1, "r0"), Observable::loc("P1_r0"))].into(),
            ..Default::default()
        };
        let o = Outcome(
            [
                (Observable::loc("P1_r0"), Value::Int(1)),
                (Observable::loc("q0"), Value::Int(0)),
            ]
            .into(),
        );
        let r = apply_mapping(&m, &o).unwrap();
        assert_eq!(r.outcome, Outcome([(Observable::reg(1, "r0"), Value::Int(1))].into()));
        assert_eq!(r.dropped, vec![Observable::loc("q0")]);
        let missing = Outcome::default();
        assert!(matches!(apply_mapping(&m, &missing), Err(Error::MissingBinding(_))));
    }

    #[test]
    fn hint_file_format() {
        let h = StateMapping::parse_hints("# regs\n0:r0 0:X0\n1:r0 P1_r0\n").unwrap();
        assert_eq!(h.len(), 2);
        assert!(StateMapping::parse_hints("0:r0\n").is_err());
    }
}
