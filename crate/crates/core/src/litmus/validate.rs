use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{AsmLine, InitTarget, LitmusTest, MemOrder, Observable, Statement, ThreadBody};

/// A well-formedness problem found by [`validate_test`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateInit(String),
    UndeclaredObservable(String),
    ThreadIdGap { expected: usize, found: usize },
    /// A fence or read-modify-write annotated non-atomic.
    NonAtomicOrder { thread: usize, what: &'static str },
    DialectMix { thread: usize },
    LayoutCycle(String),
    UnresolvedLabel { thread: usize, label: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateInit(n) => write!(f, "`{n}` initialised more than once"),
            Diagnostic::UndeclaredObservable(o) => write!(f, "undeclared observable `{o}`"),
            Diagnostic::ThreadIdGap { expected, found } => {
                write!(f, "thread P{found} where P{expected} was expected")
            }
            Diagnostic::NonAtomicOrder { thread, what } => {
                write!(f, "P{thread}: {what} cannot be non-atomic")
            }
            Diagnostic::DialectMix { thread } => {
                write!(f, "P{thread} is written in a different dialect from the test")
            }
            Diagnostic::LayoutCycle(l) => write!(f, "layout constraints form a cycle through `{l}`"),
            Diagnostic::UnresolvedLabel { thread, label } => {
                write!(f, "P{thread}: branch to unresolved label `{label}`")
            }
        }
    }
}

/// Check a (possibly hand-built) test for structural problems. The parsers
/// reject most of these up front; this covers tests assembled in code.
pub fn validate_test(test: &LitmusTest) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut seen = BTreeSet::new();
    for e in &test.init.entries {
        let key = match &e.target {
            InitTarget::Loc(l) => l.to_string(),
            InitTarget::Reg { thread, name } => format!("{thread}:{name}"),
        };
        if !seen.insert(key.clone()) {
            out.push(Diagnostic::DuplicateInit(key));
        }
    }

    for (i, t) in test.threads.iter().enumerate() {
        if t.id != i {
            out.push(Diagnostic::ThreadIdGap {
                expected: i,
                found: t.id,
            });
        }
        match (&t.body, test.is_source()) {
            (ThreadBody::Source(b), true) => {
                for s in b {
                    s.walk(&mut |s| {
                        let what = match s {
                            Statement::Fence(MemOrder::Na) => "fence",
                            Statement::FetchAdd {
                                order: MemOrder::Na,
                                ..
                            } => "fetch_add",
                            Statement::Exchange {
                                order: MemOrder::Na,
                                ..
                            } => "exchange",
                            _ => return,
                        };
                        out.push(Diagnostic::NonAtomicOrder { thread: t.id, what });
                    });
                }
            }
            (ThreadBody::Asm(b), false) => {
                let labels: BTreeSet<&str> = b
                    .iter()
                    .filter_map(|l| match l {
                        AsmLine::Label(s) => Some(s.as_str()),
                        _ => None,
                    })
                    .collect();
                for l in b {
                    if let AsmLine::Instr(i) = l {
                        if let Some(target) = i.branch_target() {
                            if !labels.contains(target) {
                                out.push(Diagnostic::UnresolvedLabel {
                                    thread: t.id,
                                    label: target.to_string(),
                                });
                            }
                        }
                    }
                }
            }
            _ => out.push(Diagnostic::DialectMix { thread: t.id }),
        }
    }

    let mut obs = BTreeSet::new();
    test.final_pred.prop.observables(&mut obs);
    let locs = test.init.location_names();
    for o in obs {
        let ok = match &o {
            Observable::Reg { thread, name } => test
                .threads
                .get(*thread)
                .is_some_and(|t| t.registers.contains_key(name)),
            Observable::Loc(l) => locs.contains(l),
        };
        if !ok {
            out.push(Diagnostic::UndeclaredObservable(o.to_string()));
        }
    }

    // Layout constraints are edges first -> second; a cycle is unsatisfiable.
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for lc in &test.init.layout {
        succ.entry(lc.first.as_str()).or_default().push(lc.second.as_str());
    }
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    fn dfs<'a>(
        n: &'a str,
        succ: &BTreeMap<&'a str, Vec<&'a str>>,
        state: &mut BTreeMap<&'a str, u8>,
    ) -> Option<&'a str> {
        match state.get(n) {
            Some(1) => return Some(n),
            Some(2) => return None,
            _ => {}
        }
        state.insert(n, 1);
        for m in succ.get(n).into_iter().flatten() {
            if let Some(c) = dfs(m, succ, state) {
                return Some(c);
            }
        }
        state.insert(n, 2);
        None
    }
    for n in succ.keys() {
        if let Some(c) = dfs(n, &succ, &mut state) {
            out.push(Diagnostic::LayoutCycle(c.to_string()));
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::{parse_litmus, InitEntry, LayoutConstraint, Location, Value, Width};

    const SB: &str = "C SB\n{ }\nP0 (atomic_int* x, atomic_int* y) {\n  atomic_store_explicit(x, 1, memory_order_relaxed);\n  int r0 = atomic_load_explicit(y, memory_order_relaxed);\n}\nP1 (atomic_int* x, atomic_int* y) {\n  atomic_store_explicit(y, 1, memory_order_relaxed);\n  int r0 = atomic_load_explicit(x, memory_order_relaxed);\n}\nexists (0:r0=0 /\\ 1:r0=0)\n";

    #[test]
    fn parsed_tests_are_clean() {
        let t = parse_litmus(SB).unwrap();
        assert_eq!(validate_test(&t), vec![]);
    }

    #[test]
    fn duplicate_init_and_layout_cycle() {
        let mut t = parse_litmus(SB).unwrap();
        t.init.entries.push(InitEntry {
            target: InitTarget::Loc(Location::new("x")),
            value: Value::Int(1),
            width: Width::W32,
        });
        for (a, b) in [("x", "y"), ("y", "x")] {
            t.init.layout.push(LayoutConstraint {
                first: a.into(),
                second: b.into(),
                offset: 4,
            });
        }
        let d = validate_test(&t);
        assert!(d.contains(&Diagnostic::DuplicateInit("x".into())));
        assert!(d.iter().any(|d| matches!(d, Diagnostic::LayoutCycle(_))));
    }

    #[test]
    fn non_atomic_fence() {
        let mut t = parse_litmus(SB).unwrap();
        if let ThreadBody::Source(b) = &mut t.threads[0].body {
            b.push(Statement::Fence(MemOrder::Na));
        }
        assert_eq!(
            validate_test(&t),
            vec![Diagnostic::NonAtomicOrder {
                thread: 0,
                what: "fence"
            }]
        );
    }
}
