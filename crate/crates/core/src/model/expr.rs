use std::collections::HashMap;
use std::fmt;

use crate::error::Error;
use crate::exec::{derive_fr, Annot, CandidateExecution, Event, EventKind};
use crate::litmus::{DmbDomain, MemOrder};
use crate::relation::{EventSet, Relation};

/// A class of events, selected by kind or annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventClass {
    All,
    R,
    W,
    F,
    /// Either half of a read-modify-write.
    Rmw,
    Init,
    /// Source events whose order is at least as strong as the given one.
    AtLeast(MemOrder),
    /// Acquire reads (`LDAR`, acquire RMWs).
    Acquire,
    /// Acquire-PC reads (`LDAPR`).
    AcquirePc,
    /// Release writes (`STLR`, release RMWs).
    Release,
    Dmb(DmbDomain),
    Not(Box<EventClass>),
    And(Box<EventClass>, Box<EventClass>),
    Or(Box<EventClass>, Box<EventClass>),
}

/// `a ⊒ b` in the C11 order lattice.
pub fn order_at_least(a: MemOrder, b: MemOrder) -> bool {
    use MemOrder::*;
    match b {
        Na => true,
        Rlx => a != Na,
        Acq => matches!(a, Acq | AcqRel | Sc),
        Rel => matches!(a, Rel | AcqRel | Sc),
        AcqRel => matches!(a, AcqRel | Sc),
        Sc => a == Sc,
    }
}

impl EventClass {
    pub fn and(self, o: EventClass) -> EventClass {
        EventClass::And(Box::new(self), Box::new(o))
    }

    pub fn or(self, o: EventClass) -> EventClass {
        EventClass::Or(Box::new(self), Box::new(o))
    }

    pub fn not(self) -> EventClass {
        EventClass::Not(Box::new(self))
    }

    pub fn contains(&self, e: &Event) -> bool {
        match self {
            EventClass::All => true,
            EventClass::R => e.kind.is_read(),
            EventClass::W => e.kind.is_write(),
            EventClass::F => e.kind == EventKind::F,
            EventClass::Rmw => matches!(e.kind, EventKind::RmwR | EventKind::RmwW),
            EventClass::Init => e.is_init(),
            EventClass::AtLeast(o) => e.order().is_some_and(|eo| order_at_least(eo, *o)),
            EventClass::Acquire => matches!(e.annot, Annot::Asm { acquire: true, .. }),
            EventClass::AcquirePc => matches!(e.annot, Annot::Asm { acquire_pc: true, .. }),
            EventClass::Release => matches!(e.annot, Annot::Asm { release: true, .. }),
            EventClass::Dmb(d) => e.annot == Annot::Dmb(*d),
            EventClass::Not(c) => !c.contains(e),
            EventClass::And(a, b) => a.contains(e) && b.contains(e),
            EventClass::Or(a, b) => a.contains(e) || b.contains(e),
        }
    }

    pub fn eval(&self, exec: &CandidateExecution) -> EventSet {
        exec.set(|e| self.contains(e))
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventClass::All => f.write_str("_"),
            EventClass::R => f.write_str("R"),
            EventClass::W => f.write_str("W"),
            EventClass::F => f.write_str("F"),
            EventClass::Rmw => f.write_str("RMW"),
            EventClass::Init => f.write_str("IW"),
            EventClass::AtLeast(o) => write!(f, "{}", o.short().to_ascii_uppercase()),
            EventClass::Acquire => f.write_str("A"),
            EventClass::AcquirePc => f.write_str("Q"),
            EventClass::Release => f.write_str("L"),
            EventClass::Dmb(d) => match d {
                DmbDomain::Ish => f.write_str("DMB.ISH"),
                DmbDomain::IshLd => f.write_str("DMB.ISHLD"),
                DmbDomain::IshSt => f.write_str("DMB.ISHST"),
            },
            EventClass::Not(c) => write!(f, "~{c}"),
            EventClass::And(a, b) => write!(f, "{a}&{b}"),
            EventClass::Or(a, b) => write!(f, "({a}|{b})"),
        }
    }
}

/// Relational expression over the base relations of an execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelExpr {
    /// A base relation (`po`, `rf`, ...) or a name bound by a model `let`.
    Name(String),
    /// `[C]`: identity on a class.
    Id(EventClass),
    Empty,
    Union(Vec<RelExpr>),
    Inter(Box<RelExpr>, Box<RelExpr>),
    Diff(Box<RelExpr>, Box<RelExpr>),
    Seq(Vec<RelExpr>),
    Inverse(Box<RelExpr>),
    Plus(Box<RelExpr>),
    Star(Box<RelExpr>),
    Opt(Box<RelExpr>),
}

pub const BASE_RELATIONS: [&str; 19] = [
    "po", "rf", "co", "fr", "rfe", "rfi", "coe", "coi", "fre", "fri", "po-loc", "addr", "data",
    "ctrl", "rmw", "loc", "ext", "int", "id",
];

pub fn name(s: &str) -> RelExpr {
    RelExpr::Name(s.to_string())
}

pub fn id(c: EventClass) -> RelExpr {
    RelExpr::Id(c)
}

pub fn union<const N: usize>(rs: [RelExpr; N]) -> RelExpr {
    RelExpr::Union(rs.into())
}

pub fn seq<const N: usize>(rs: [RelExpr; N]) -> RelExpr {
    RelExpr::Seq(rs.into())
}

impl RelExpr {
    pub fn inter(self, o: RelExpr) -> RelExpr {
        RelExpr::Inter(Box::new(self), Box::new(o))
    }

    pub fn diff(self, o: RelExpr) -> RelExpr {
        RelExpr::Diff(Box::new(self), Box::new(o))
    }

    pub fn inverse(self) -> RelExpr {
        RelExpr::Inverse(Box::new(self))
    }

    pub fn plus(self) -> RelExpr {
        RelExpr::Plus(Box::new(self))
    }

    pub fn star(self) -> RelExpr {
        RelExpr::Star(Box::new(self))
    }

    pub fn opt(self) -> RelExpr {
        RelExpr::Opt(Box::new(self))
    }

    /// Names this expression refers to.
    pub fn names(&self, out: &mut Vec<String>) {
        match self {
            RelExpr::Name(n) => out.push(n.clone()),
            RelExpr::Id(_) | RelExpr::Empty => {}
            RelExpr::Union(v) | RelExpr::Seq(v) => v.iter().for_each(|r| r.names(out)),
            RelExpr::Inter(a, b) | RelExpr::Diff(a, b) => {
                a.names(out);
                b.names(out);
            }
            RelExpr::Inverse(r) | RelExpr::Plus(r) | RelExpr::Star(r) | RelExpr::Opt(r) => {
                r.names(out)
            }
        }
    }
}

impl fmt::Display for RelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn atom(r: &RelExpr) -> String {
            match r {
                RelExpr::Union(_) | RelExpr::Seq(_) | RelExpr::Inter(..) | RelExpr::Diff(..) => {
                    format!("({r})")
                }
                _ => r.to_string(),
            }
        }
        let join = |v: &[RelExpr], sep: &str, f: &mut fmt::Formatter<'_>| {
            let parts: Vec<String> = v.iter().map(atom).collect();
            f.write_str(&parts.join(sep))
        };
        match self {
            RelExpr::Name(n) => f.write_str(n),
            RelExpr::Id(c) => write!(f, "[{c}]"),
            RelExpr::Empty => f.write_str("0"),
            RelExpr::Union(v) => join(v, " | ", f),
            RelExpr::Seq(v) => join(v, ";", f),
            RelExpr::Inter(a, b) => write!(f, "{} & {}", atom(a), atom(b)),
            RelExpr::Diff(a, b) => write!(f, "{} \\ {}", atom(a), atom(b)),
            RelExpr::Inverse(r) => write!(f, "{}^-1", atom(r)),
            RelExpr::Plus(r) => write!(f, "{}+", atom(r)),
            RelExpr::Star(r) => write!(f, "{}*", atom(r)),
            RelExpr::Opt(r) => write!(f, "{}?", atom(r)),
        }
    }
}

/// Evaluation environment for one execution: base relations are computed
/// on demand, `let` bindings are evaluated once.
pub struct Env<'a> {
    exec: &'a CandidateExecution,
    cache: HashMap<String, Relation>,
}

impl<'a> Env<'a> {
    pub fn new(exec: &'a CandidateExecution) -> Self {
        Env {
            exec,
            cache: HashMap::new(),
        }
    }

    pub fn bind(&mut self, n: &str, expr: &RelExpr) -> Result<(), Error> {
        let r = self.eval(expr)?;
        self.cache.insert(n.to_string(), r);
        Ok(())
    }

    fn base(&mut self, n: &str) -> Result<Relation, Error> {
        if let Some(r) = self.cache.get(n) {
            return Ok(r.clone());
        }
        let x = self.exec;
        let r = match n {
            "po" => x.po.clone(),
            "rf" => x.rf.clone(),
            "co" => x.co.clone(),
            "fr" => derive_fr(x),
            "addr" => x.addr.clone(),
            "data" => x.data.clone(),
            "ctrl" => x.ctrl.clone(),
            "rmw" => x.rmw.clone(),
            "loc" => x.loc(),
            "ext" => x.ext(),
            "id" => Relation::identity(x.len()),
            "int" => {
                let ext = self.base("ext")?;
                Relation::product(&EventSet::full(x.len()), &EventSet::full(x.len())).difference(&ext)
            }
            "po-loc" => self.base("po")?.intersection(&self.base("loc")?),
            "rfe" | "coe" | "fre" => self.base(&n[..2])?.intersection(&self.base("ext")?),
            "rfi" | "coi" | "fri" => self.base(&n[..2])?.intersection(&self.base("int")?),
            _ => return Err(Error::UnknownBaseRelation(n.to_string())),
        };
        self.cache.insert(n.to_string(), r.clone());
        Ok(r)
    }

    pub fn eval(&mut self, e: &RelExpr) -> Result<Relation, Error> {
        let n = self.exec.len();
        Ok(match e {
            RelExpr::Name(s) => self.base(s)?,
            RelExpr::Id(c) => Relation::identity_on(&c.eval(self.exec)),
            RelExpr::Empty => Relation::empty(n),
            RelExpr::Union(v) => {
                let mut acc = Relation::empty(n);
                for r in v {
                    acc = acc.union(&self.eval(r)?);
                }
                acc
            }
            RelExpr::Seq(v) => {
                let mut acc = Relation::identity(n);
                for r in v {
                    acc = acc.seq(&self.eval(r)?);
                }
                acc
            }
            RelExpr::Inter(a, b) => self.eval(a)?.intersection(&self.eval(b)?),
            RelExpr::Diff(a, b) => self.eval(a)?.difference(&self.eval(b)?),
            RelExpr::Inverse(r) => self.eval(r)?.inverse(),
            RelExpr::Plus(r) => self.eval(r)?.transitive_closure(),
            RelExpr::Star(r) => self.eval(r)?.reflexive_transitive_closure(),
            RelExpr::Opt(r) => self.eval(r)?.reflexive(),
        })
    }
}

/// Evaluate an expression built from base relations only.
pub fn eval_relation(expr: &RelExpr, exec: &CandidateExecution) -> Result<Relation, Error> {
    Env::new(exec).eval(expr)
}
