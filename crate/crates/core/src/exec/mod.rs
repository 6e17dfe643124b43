//! Candidate-execution enumeration and outcome projection.

mod enumerate;
mod paths;
mod race;
mod simulate;
pub mod sym;
mod unroll;

use std::collections::BTreeMap;
use std::fmt;

pub use enumerate::{enumerate_candidates, EnumOptions, EnumStats};
pub use paths::{thread_paths, SymEvent, ThreadPath};
pub use race::{detect_races, detect_races_with};
pub use simulate::{outcomes_of, simulate, SimOptions, SimStats, SimulationResult};
pub use unroll::unroll;

use crate::litmus::{DmbDomain, Location, MemOrder, Observable, Value};
use crate::relation::{EventSet, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    R,
    W,
    F,
    RmwR,
    RmwW,
}

impl EventKind {
    pub fn is_read(self) -> bool {
        matches!(self, EventKind::R | EventKind::RmwR)
    }

    pub fn is_write(self) -> bool {
        matches!(self, EventKind::W | EventKind::RmwW)
    }
}

/// Ordering annotation carried from the statement or instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Annot {
    /// Synthetic initial write.
    Init,
    /// C11 memory order.
    Order(MemOrder),
    /// Acquire (`LDAR`), acquire-PC (`LDAPR`) and release (`STLR`) flags.
    Asm {
        acquire: bool,
        acquire_pc: bool,
        release: bool,
    },
    Dmb(DmbDomain),
}

/// Where an event came from: statement or instruction index, and the
/// unrolled loop iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Origin {
    pub index: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: usize,
    /// `None` for initial writes.
    pub thread: Option<usize>,
    pub kind: EventKind,
    pub loc: Option<Location>,
    pub value: Option<Value>,
    pub annot: Annot,
    pub origin: Origin,
}

impl Event {
    pub fn is_init(&self) -> bool {
        self.thread.is_none()
    }

    pub fn order(&self) -> Option<MemOrder> {
        match self.annot {
            Annot::Order(o) => Some(o),
            _ => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            EventKind::R | EventKind::RmwR => "R",
            EventKind::W | EventKind::RmwW => "W",
            EventKind::F => "F",
        };
        let ann = match self.annot {
            Annot::Init => "Init".to_string(),
            Annot::Order(o) => o.short().to_string(),
            Annot::Asm {
                acquire,
                acquire_pc,
                release,
            } => {
                let mut s = String::new();
                if acquire {
                    s.push('A');
                }
                if acquire_pc {
                    s.push('Q');
                }
                if release {
                    s.push('L');
                }
                if s.is_empty() {
                    s.push('-');
                }
                s
            }
            Annot::Dmb(d) => format!("{d:?}"),
        };
        let who = match self.thread {
            Some(t) => format!("P{t}"),
            None => "init".into(),
        };
        write!(f, "{}:{who}:{kind}({ann})", self.id)?;
        if let (Some(l), Some(v)) = (&self.loc, &self.value) {
            write!(f, "[{l}]={v}")?;
        }
        Ok(())
    }
}

/// One candidate execution: events plus the po, rf, co and dependency
/// relations. `fr` is always derived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateExecution {
    pub events: Vec<Event>,
    pub po: Relation,
    pub rf: Relation,
    pub co: Relation,
    /// Pairs an RMW's read with its write.
    pub rmw: Relation,
    pub addr: Relation,
    pub data: Relation,
    pub ctrl: Relation,
    /// Branch decisions taken by each thread.
    pub path_choices: Vec<Vec<bool>>,
    /// The first `init_writes` events are the synthetic initial writes.
    pub init_writes: usize,
    /// Register contents at the end of each thread.
    pub final_regs: Vec<BTreeMap<String, Value>>,
}

impl CandidateExecution {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn set(&self, f: impl Fn(&Event) -> bool) -> EventSet {
        EventSet::from_fn(self.events.len(), |i| f(&self.events[i]))
    }

    /// Same-location pairs (reflexive).
    pub fn loc(&self) -> Relation {
        let n = self.len();
        let mut r = Relation::empty(n);
        for a in &self.events {
            for b in &self.events {
                if a.loc.is_some() && a.loc == b.loc {
                    r.insert(a.id, b.id);
                }
            }
        }
        r
    }

    /// Pairs from different threads; initial writes are external to all.
    pub fn ext(&self) -> Relation {
        let n = self.len();
        let mut r = Relation::empty(n);
        for a in &self.events {
            for b in &self.events {
                if a.id != b.id && (a.thread != b.thread || a.thread.is_none()) {
                    r.insert(a.id, b.id);
                }
            }
        }
        r
    }

    /// Final value of each location: the co-maximal write.
    pub fn final_memory(&self) -> BTreeMap<Location, Value> {
        let mut out = BTreeMap::new();
        for e in &self.events {
            if !e.kind.is_write() {
                continue;
            }
            if self.co.successors(e.id).next().is_none() {
                if let (Some(l), Some(v)) = (&e.loc, &e.value) {
                    out.insert(l.clone(), v.clone());
                }
            }
        }
        out
    }

    /// Value of an observable at the end of this execution.
    pub fn observe(&self, o: &Observable, memory: &BTreeMap<Location, Value>) -> Value {
        match o {
            Observable::Reg { thread, name } => self
                .final_regs
                .get(*thread)
                .and_then(|r| r.get(name))
                .cloned()
                .unwrap_or(Value::Int(0)),
            Observable::Loc(l) => memory.get(l).cloned().unwrap_or(Value::Int(0)),
        }
    }
}

/// `fr = rf^-1 ; co`, restricted to reads.
pub fn derive_fr(exec: &CandidateExecution) -> Relation {
    exec.rf.inverse().seq(&exec.co)
}

/// Bindings of observables at the end of one execution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Outcome(pub BTreeMap<Observable, Value>);

impl Outcome {
    /// `0:r0=1; x=2;`, with `[x]` for locations when `bracket_locs` is set.
    pub fn render(&self, bracket_locs: bool) -> String {
        let mut s = String::new();
        for (o, v) in &self.0 {
            let name = match o {
                Observable::Loc(l) if bracket_locs => format!("[{l}]"),
                o => o.to_string(),
            };
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(&format!("{name}={};", crate::litmus::render_value(v)));
        }
        s
    }

    pub fn get(&self, o: &Observable) -> Option<&Value> {
        self.0.get(o)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.render(false))
    }
}

/// Outcomes of the allowed executions, each with one witness.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutcomeSet {
    map: BTreeMap<Outcome, CandidateExecution>,
}

impl OutcomeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the first witness seen for each outcome.
    pub fn insert(&mut self, o: Outcome, witness: CandidateExecution) {
        self.map.entry(o).or_insert(witness);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, o: &Outcome) -> bool {
        self.map.contains_key(o)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &Outcome> {
        self.map.keys()
    }

    pub fn witness(&self, o: &Outcome) -> Option<&CandidateExecution> {
        self.map.get(o)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Outcome, &CandidateExecution)> {
        self.map.iter()
    }

    pub fn outcome_set(&self) -> std::collections::BTreeSet<Outcome> {
        self.map.keys().cloned().collect()
    }
}
