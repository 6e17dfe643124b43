//! Litmus-test data model for the two dialects: C11-atomics source tests
//! and assembly tests (AArch64 subset or the abstract ISA).

mod asm;
mod lex;
mod source;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use asm::{
    parse_asm_litmus, parse_instruction, render_instruction, AddrMode, AsmLine, BranchCond,
    DmbDomain, Instruction, LoadKind, Operand, Reg, RegOp, RmwOp, StoreKind,
};
pub(crate) use asm::build_thread;
pub(crate) use source::check_observables;
pub use source::{parse_litmus, parse_source_litmus};
pub use validate::{validate_test, Diagnostic};

use crate::error::Error;

/// Metadata key listing the globals introduced by local persistence.
pub const META_PERSISTED: &str = "persisted";
/// Metadata key recording the unroll factor a test was prepared with.
pub const META_UNROLL: &str = "unroll";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location(pub String);

impl Location {
    pub fn new(name: impl Into<String>) -> Self {
        Location(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Global-offset-table slot holding the address of `self`.
    pub fn got_slot(&self) -> Location {
        Location(format!("{}@got", self.0))
    }

    pub fn is_got_slot(&self) -> bool {
        self.0.ends_with("@got")
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Location {
    fn from(s: &str) -> Self {
        Location(s.to_string())
    }
}

/// Declared bit-width of a location or register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[derive(Default)]
pub enum Width {
    W8,
    W16,
    #[default]
    W32,
    W64,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::W8 => 8,
            Width::W16 => 16,
            Width::W32 => 32,
            Width::W64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Width> {
        match bits {
            8 => Some(Width::W8),
            16 => Some(Width::W16),
            32 => Some(Width::W32),
            64 => Some(Width::W64),
            _ => None,
        }
    }

    /// Truncate to this width and sign-extend back to 64 bits.
    pub fn wrap(self, v: i64) -> i64 {
        match self {
            Width::W8 => v as i8 as i64,
            Width::W16 => v as i16 as i64,
            Width::W32 => v as i32 as i64,
            Width::W64 => v,
        }
    }

    pub(crate) fn c_type(self) -> &'static str {
        match self {
            Width::W8 => "int8_t",
            Width::W16 => "int16_t",
            Width::W32 => "int",
            Width::W64 => "int64_t",
        }
    }
}


/// A litmus value: an integer, the address of a location, or the 4KiB page
/// of a location (what `ADRP` materializes).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Addr(Location),
    Page(Location),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Addr(l) => write!(f, "{l}"),
            Value::Page(l) => write!(f, "page({l})"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

/// C11 memory-order annotation on source-level accesses and fences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemOrder {
    Na,
    Rlx,
    Acq,
    Rel,
    AcqRel,
    Sc,
}

impl MemOrder {
    pub const ALL: [MemOrder; 6] = [
        MemOrder::Na,
        MemOrder::Rlx,
        MemOrder::Acq,
        MemOrder::Rel,
        MemOrder::AcqRel,
        MemOrder::Sc,
    ];

    pub fn c_name(self) -> &'static str {
        match self {
            MemOrder::Na => "na",
            MemOrder::Rlx => "memory_order_relaxed",
            MemOrder::Acq => "memory_order_acquire",
            MemOrder::Rel => "memory_order_release",
            MemOrder::AcqRel => "memory_order_acq_rel",
            MemOrder::Sc => "memory_order_seq_cst",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            MemOrder::Na => "na",
            MemOrder::Rlx => "rlx",
            MemOrder::Acq => "acq",
            MemOrder::Rel => "rel",
            MemOrder::AcqRel => "acq_rel",
            MemOrder::Sc => "sc",
        }
    }

    pub fn from_name(s: &str) -> Option<MemOrder> {
        let s = s.strip_prefix("memory_order_").unwrap_or(s);
        Some(match s.to_ascii_lowercase().as_str() {
            "na" => MemOrder::Na,
            "relaxed" | "rlx" => MemOrder::Rlx,
            "acquire" | "acq" | "consume" => MemOrder::Acq,
            "release" | "rel" => MemOrder::Rel,
            "acq_rel" | "acqrel" => MemOrder::AcqRel,
            "seq_cst" | "sc" => MemOrder::Sc,
            _ => return None,
        })
    }
}

/// Source-level expression: constants, register reads, `+` and `==`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Reg(String),
    Add(Box<Expr>, Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::Eq(Box::new(a), Box::new(b))
    }

    pub fn regs(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Reg(r) => {
                out.insert(r.clone());
            }
            Expr::Add(a, b) | Expr::Eq(a, b) => {
                a.regs(out);
                b.regs(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    Store {
        loc: Location,
        value: Expr,
        order: MemOrder,
    },
    Load {
        reg: String,
        loc: Location,
        order: MemOrder,
    },
    FetchAdd {
        reg: Option<String>,
        loc: Location,
        operand: Expr,
        order: MemOrder,
    },
    Exchange {
        reg: Option<String>,
        loc: Location,
        value: Expr,
        order: MemOrder,
    },
    Fence(MemOrder),
    Assign {
        reg: String,
        expr: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
}

impl Statement {
    pub fn is_memory_access(&self) -> bool {
        matches!(
            self,
            Statement::Store { .. }
                | Statement::Load { .. }
                | Statement::FetchAdd { .. }
                | Statement::Exchange { .. }
        )
    }

    /// Visit this statement and every nested statement in program order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Statement)) {
        f(self);
        if let Statement::If {
            then_body,
            else_body,
            ..
        } = self
        {
            for s in then_body.iter().chain(else_body) {
                s.walk(f);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Isa {
    AArch64Sub,
    AbstractIsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dialect {
    Source,
    Asm(Isa),
}

impl Dialect {
    pub fn header_keyword(self) -> &'static str {
        match self {
            Dialect::Source => "C",
            Dialect::Asm(Isa::AArch64Sub) => "AArch64",
            Dialect::Asm(Isa::AbstractIsa) => "ABS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ThreadBody {
    Source(Vec<Statement>),
    Asm(Vec<AsmLine>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thread {
    pub id: usize,
    pub body: ThreadBody,
    /// Registers used by the thread and their widths.
    pub registers: BTreeMap<String, Width>,
}

impl Thread {
    pub fn source_body(&self) -> Option<&[Statement]> {
        match &self.body {
            ThreadBody::Source(b) => Some(b),
            ThreadBody::Asm(_) => None,
        }
    }

    pub fn asm_body(&self) -> Option<&[AsmLine]> {
        match &self.body {
            ThreadBody::Asm(b) => Some(b),
            ThreadBody::Source(_) => None,
        }
    }

    /// Number of static memory-accessing statements or instructions.
    pub fn memory_ops(&self) -> usize {
        match &self.body {
            ThreadBody::Source(b) => {
                let mut n = 0;
                for s in b {
                    s.walk(&mut |s| {
                        if s.is_memory_access() {
                            n += 1
                        }
                    });
                }
                n
            }
            ThreadBody::Asm(b) => b
                .iter()
                .filter(|l| matches!(l, AsmLine::Instr(i) if i.is_memory_access()))
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InitTarget {
    Loc(Location),
    Reg { thread: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitEntry {
    pub target: InitTarget,
    pub value: Value,
    pub width: Width,
}

/// `second` starts `offset` bytes after `first`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutConstraint {
    pub first: Location,
    pub second: Location,
    pub offset: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InitState {
    pub entries: Vec<InitEntry>,
    pub layout: Vec<LayoutConstraint>,
}

impl InitState {
    pub fn location(&self, loc: &Location) -> Option<&InitEntry> {
        self.entries
            .iter()
            .find(|e| matches!(&e.target, InitTarget::Loc(l) if l == loc))
    }

    pub fn locations(&self) -> impl Iterator<Item = &InitEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.target, InitTarget::Loc(_)))
    }

    pub fn location_names(&self) -> BTreeSet<Location> {
        self.entries
            .iter()
            .filter_map(|e| match &e.target {
                InitTarget::Loc(l) => Some(l.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn register(&self, thread: usize, name: &str) -> Option<&InitEntry> {
        self.entries.iter().find(
            |e| matches!(&e.target, InitTarget::Reg { thread: t, name: n } if *t == thread && n == name),
        )
    }

    pub fn width_of(&self, loc: &Location) -> Width {
        self.location(loc).map(|e| e.width).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observable {
    Reg { thread: usize, name: String },
    Loc(Location),
}

impl Observable {
    pub fn reg(thread: usize, name: impl Into<String>) -> Self {
        Observable::Reg {
            thread,
            name: name.into(),
        }
    }

    pub fn loc(name: impl Into<String>) -> Self {
        Observable::Loc(Location(name.into()))
    }

    /// Parse `1:r0`, `P1:r0` or a bare location name.
    pub fn parse(s: &str) -> Option<Observable> {
        let s = s.trim();
        if let Some((t, r)) = s.split_once(':') {
            let t = t.strip_prefix('P').unwrap_or(t);
            let thread = t.parse().ok()?;
            if r.is_empty() {
                return None;
            }
            return Some(Observable::reg(thread, r));
        }
        let s = s.strip_prefix('[').and_then(|x| x.strip_suffix(']')).unwrap_or(s);
        if s.is_empty() || !s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '@' || c == '.') {
            return None;
        }
        Some(Observable::loc(s))
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Reg { thread, name } => write!(f, "{thread}:{name}"),
            Observable::Loc(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Exists,
    Forall,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Prop {
    True,
    Atom(Observable, Value),
    Not(Box<Prop>),
    And(Vec<Prop>),
    Or(Vec<Prop>),
}

impl Prop {
    pub fn observables(&self, out: &mut BTreeSet<Observable>) {
        match self {
            Prop::True => {}
            Prop::Atom(o, _) => {
                out.insert(o.clone());
            }
            Prop::Not(p) => p.observables(out),
            Prop::And(ps) | Prop::Or(ps) => ps.iter().for_each(|p| p.observables(out)),
        }
    }

    /// `None` when a referenced observable is unbound.
    pub fn eval(&self, lookup: &dyn Fn(&Observable) -> Option<Value>) -> Option<bool> {
        Some(match self {
            Prop::True => true,
            Prop::Atom(o, v) => &lookup(o)? == v,
            Prop::Not(p) => !p.eval(lookup)?,
            Prop::And(ps) => {
                let mut all = true;
                for p in ps {
                    all &= p.eval(lookup)?;
                }
                all
            }
            Prop::Or(ps) => {
                let mut any = false;
                for p in ps {
                    any |= p.eval(lookup)?;
                }
                any
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FinalPredicate {
    pub quantifier: Quantifier,
    pub prop: Prop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LitmusTest {
    pub name: String,
    pub dialect: Dialect,
    pub init: InitState,
    pub threads: Vec<Thread>,
    pub final_pred: FinalPredicate,
    pub metadata: BTreeMap<String, String>,
}

impl LitmusTest {
    pub fn is_source(&self) -> bool {
        self.dialect == Dialect::Source
    }

    /// Globals recorded as persisted thread-local data.
    pub fn persisted_globals(&self) -> Vec<Location> {
        self.metadata
            .get(META_PERSISTED)
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(Location::new)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Observables projected into outcomes: those named by the final
    /// predicate plus persisted globals.
    pub fn observables(&self) -> BTreeSet<Observable> {
        let mut out = BTreeSet::new();
        self.final_pred.prop.observables(&mut out);
        for g in self.persisted_globals() {
            out.insert(Observable::Loc(g));
        }
        out
    }

    /// Every location the threads touch, in first-mention order, deduplicated.
    pub fn referenced_locations(&self) -> Vec<Location> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |l: &Location| {
            if seen.insert(l.clone()) {
                out.push(l.clone());
            }
        };
        for t in &self.threads {
            match &t.body {
                ThreadBody::Source(b) => {
                    for s in b {
                        s.walk(&mut |s| match s {
                            Statement::Store { loc, .. }
                            | Statement::Load { loc, .. }
                            | Statement::FetchAdd { loc, .. }
                            | Statement::Exchange { loc, .. } => push(loc),
                            _ => {}
                        });
                    }
                }
                ThreadBody::Asm(b) => {
                    for line in b {
                        if let AsmLine::Instr(i) = line {
                            for l in i.symbols() {
                                push(&l);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Make implicit zero-initialisation explicit: every referenced location
    /// (and every location observed by the final predicate) gets an init entry.
    pub fn normalize(&mut self) {
        let mut locs = self.referenced_locations();
        let mut obs = BTreeSet::new();
        self.final_pred.prop.observables(&mut obs);
        for o in obs {
            if let Observable::Loc(l) = o {
                if !locs.contains(&l) {
                    locs.push(l);
                }
            }
        }
        for e in &self.init.entries {
            if let Value::Addr(l) | Value::Page(l) = &e.value {
                if !locs.contains(l) {
                    locs.push(l.clone());
                }
            }
        }
        for l in locs {
            if self.init.location(&l).is_some() {
                continue;
            }
            let (value, width) = if let Some(base) = l.as_str().strip_suffix("@got") {
                (Value::Addr(Location::new(base)), Width::W64)
            } else {
                (Value::Int(0), Width::default())
            };
            self.init.entries.push(InitEntry {
                target: InitTarget::Loc(l),
                value,
                width,
            });
        }
        // GOT slots may reference symbols that were only named through them.
        let missing: Vec<Location> = self
            .init
            .entries
            .iter()
            .filter_map(|e| match &e.value {
                Value::Addr(l) | Value::Page(l) if self.init.location(l).is_none() => {
                    Some(l.clone())
                }
                _ => None,
            })
            .collect();
        for l in missing {
            if self.init.location(&l).is_none() {
                self.init.entries.push(InitEntry {
                    target: InitTarget::Loc(l),
                    value: Value::Int(0),
                    width: Width::default(),
                });
            }
        }
    }

    pub fn render(&self) -> String {
        render_litmus(self)
    }
}

/// Parse either dialect, choosing by the header keyword.
pub fn parse_any(text: &str) -> Result<LitmusTest, Error> {
    parse_litmus(text)
}

pub fn render_litmus(test: &LitmusTest) -> String {
    match test.dialect {
        Dialect::Source => source::render_source(test),
        Dialect::Asm(_) => asm::render_asm(test),
    }
}

pub fn render_value(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Addr(l) => l.to_string(),
        Value::Page(l) => format!("page({l})"),
    }
}

pub(crate) fn render_prop(p: &Prop, top: bool) -> String {
    match p {
        Prop::True => "true".into(),
        Prop::Atom(o, v) => format!("{o}={}", render_value(v)),
        Prop::Not(p) => format!("~{}", render_prop(p, false)),
        Prop::And(ps) => {
            let s = ps
                .iter()
                .map(|p| render_prop(p, false))
                .collect::<Vec<_>>()
                .join(" /\\ ");
            if top || ps.len() <= 1 {
                s
            } else {
                format!("({s})")
            }
        }
        Prop::Or(ps) => {
            let s = ps
                .iter()
                .map(|p| render_prop(p, false))
                .collect::<Vec<_>>()
                .join(" \\/ ");
            if top || ps.len() <= 1 {
                s
            } else {
                format!("({s})")
            }
        }
    }
}

pub fn render_final(fp: &FinalPredicate) -> String {
    let q = match fp.quantifier {
        Quantifier::Exists => "exists",
        Quantifier::Forall => "forall",
    };
    format!("{q} ({})", render_prop(&fp.prop, true))
}

pub(crate) fn render_metadata(test: &LitmusTest, out: &mut String) {
    for (k, v) in &test.metadata {
        out.push_str(&format!("(* @{k}: {v} *)\n"));
    }
}
