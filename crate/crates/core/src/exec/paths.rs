//! Per-thread symbolic execution: one [`ThreadPath`] per feasible sequence
//! of branch decisions, with read results left symbolic.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::sym::{BinOp, Sym};
use super::unroll::label_iteration;
use super::{Annot, EventKind, Origin};
use crate::litmus::{
    AddrMode, AsmLine, BranchCond, InitState, InitTarget, Instruction, LoadKind, MemOrder,
    Operand, Reg, RegOp, RmwOp, Statement, StoreKind, Thread, ThreadBody, Width, Expr,
};

/// An event of one thread path, before reads-from is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymEvent {
    pub kind: EventKind,
    /// Address expression; `None` for fences.
    pub addr: Option<Sym>,
    /// Written value for writes; `None` otherwise.
    pub value: Option<Sym>,
    pub width: Width,
    pub annot: Annot,
    pub origin: Origin,
    /// Reads (by index in the path) feeding the address.
    pub addr_deps: BTreeSet<usize>,
    /// Reads feeding the written value.
    pub data_deps: BTreeSet<usize>,
    /// Reads feeding an earlier branch condition.
    pub ctrl_deps: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadPath {
    /// Decision taken at each symbolic branch, in order.
    pub choices: Vec<bool>,
    pub events: Vec<SymEvent>,
    /// Each must evaluate to a non-zero integer for the path to be taken.
    pub constraints: Vec<Sym>,
    /// Final register contents.
    pub regs: BTreeMap<String, Sym>,
    /// The path ran into the unroll bound and is infeasible.
    pub stuck: bool,
}

#[derive(Debug, Clone, Default)]
struct State {
    choices: Vec<bool>,
    events: Vec<SymEvent>,
    constraints: Vec<Sym>,
    regs: HashMap<String, (Sym, BTreeSet<usize>)>,
    ctrl: BTreeSet<usize>,
}

impl State {
    fn new(thread: &Thread, init: &InitState) -> Self {
        let mut s = State::default();
        for e in &init.entries {
            if let InitTarget::Reg { thread: t, name } = &e.target {
                if *t == thread.id {
                    s.regs.insert(name.clone(), (Sym::Val(e.value.clone()), BTreeSet::new()));
                }
            }
        }
        s
    }

    fn get(&self, r: &str) -> (Sym, BTreeSet<usize>) {
        self.regs.get(r).cloned().unwrap_or((Sym::int(0), BTreeSet::new()))
    }

    fn set(&mut self, r: &str, v: Sym, deps: BTreeSet<usize>) {
        self.regs.insert(r.to_string(), (v, deps));
    }

    fn push(&mut self, mut e: SymEvent) -> usize {
        e.ctrl_deps = self.ctrl.clone();
        self.events.push(e);
        self.events.len() - 1
    }

    /// Fork on `cond != 0`. Returns the states for which the branch is
    /// taken and not taken; a constant condition yields just one.
    fn branch(self, cond: Sym, deps: &BTreeSet<usize>) -> (Option<State>, Option<State>) {
        if let Some(v) = cond.as_const() {
            let taken = v.as_int() != Some(0);
            return if taken { (Some(self), None) } else { (None, Some(self)) };
        }
        let mut yes = self;
        yes.ctrl.extend(deps.iter().copied());
        let mut no = yes.clone();
        yes.choices.push(true);
        yes.constraints.push(Sym::op(BinOp::Cmp(BranchCond::Ne), cond.clone(), Sym::int(0), Width::W64));
        no.choices.push(false);
        no.constraints.push(Sym::op(BinOp::Cmp(BranchCond::Eq), cond, Sym::int(0), Width::W64));
        (Some(yes), Some(no))
    }

    fn finish(self, thread: &Thread, stuck: bool) -> ThreadPath {
        let regs = thread
            .registers
            .iter()
            .map(|(name, w)| (name.clone(), self.get(name).0.wrap(*w)))
            .collect();
        ThreadPath {
            choices: self.choices,
            events: self.events,
            constraints: self.constraints,
            regs,
            stuck,
        }
    }
}

fn event(kind: EventKind, addr: Option<Sym>, value: Option<Sym>, width: Width, annot: Annot, origin: Origin) -> SymEvent {
    SymEvent {
        kind,
        addr,
        value,
        width,
        annot,
        origin,
        addr_deps: BTreeSet::new(),
        data_deps: BTreeSet::new(),
        ctrl_deps: BTreeSet::new(),
    }
}

/// Enumerate the paths of one thread. Stuck paths are included and marked.
pub fn thread_paths(thread: &Thread, init: &InitState) -> Vec<ThreadPath> {
    let mut out = Vec::new();
    match &thread.body {
        ThreadBody::Source(body) => {
            let mut numbering = 0;
            let numbered = number(body, &mut numbering);
            let todo: Vec<&Numbered> = numbered.iter().rev().collect();
            source_paths(thread, init, todo, State::new(thread, init), &mut out);
        }
        ThreadBody::Asm(body) => asm_paths(thread, body, State::new(thread, init), &mut out),
    }
    out
}

struct Numbered<'a> {
    stmt: &'a Statement,
    index: usize,
    then_body: Vec<Numbered<'a>>,
    else_body: Vec<Numbered<'a>>,
}

fn number<'a>(body: &'a [Statement], next: &mut usize) -> Vec<Numbered<'a>> {
    body.iter()
        .map(|stmt| {
            let index = *next;
            *next += 1;
            let (then_body, else_body) = match stmt {
                Statement::If {
                    then_body,
                    else_body,
                    ..
                } => (number(then_body, next), number(else_body, next)),
                _ => (Vec::new(), Vec::new()),
            };
            Numbered {
                stmt,
                index,
                then_body,
                else_body,
            }
        })
        .collect()
}

fn expr_sym(e: &Expr, st: &State) -> (Sym, BTreeSet<usize>) {
    match e {
        Expr::Const(v) => (Sym::int(*v), BTreeSet::new()),
        Expr::Reg(r) => st.get(r),
        Expr::Add(a, b) | Expr::Eq(a, b) => {
            let (sa, mut da) = expr_sym(a, st);
            let (sb, db) = expr_sym(b, st);
            da.extend(db);
            let op = if matches!(e, Expr::Add(..)) {
                BinOp::Add
            } else {
                BinOp::Cmp(BranchCond::Eq)
            };
            (Sym::op(op, sa, sb, Width::W64), da)
        }
    }
}

/// Orders of the read and write halves of a source-level RMW.
pub(crate) fn split_rmw_order(o: MemOrder) -> (MemOrder, MemOrder) {
    match o {
        MemOrder::AcqRel => (MemOrder::Acq, MemOrder::Rel),
        MemOrder::Rel => (MemOrder::Rlx, MemOrder::Rel),
        MemOrder::Acq => (MemOrder::Acq, MemOrder::Rlx),
        o => (o, o),
    }
}

fn source_paths(
    thread: &Thread,
    init: &InitState,
    mut todo: Vec<&Numbered>,
    mut st: State,
    out: &mut Vec<ThreadPath>,
) {
    while let Some(n) = todo.pop() {
        let origin = Origin {
            index: n.index,
            iteration: 0,
        };
        let reg_width = |r: &str| thread.registers.get(r).copied().unwrap_or_default();
        match n.stmt {
            Statement::Store { loc, value, order } => {
                let (v, deps) = expr_sym(value, &st);
                let w = init.width_of(loc);
                let mut e = event(
                    EventKind::W,
                    Some(Sym::Val(crate::litmus::Value::Addr(loc.clone()))),
                    Some(v.wrap(w)),
                    w,
                    Annot::Order(*order),
                    origin,
                );
                e.data_deps = deps;
                st.push(e);
            }
            Statement::Load { reg, loc, order } => {
                let w = init.width_of(loc);
                let k = st.push(event(
                    EventKind::R,
                    Some(Sym::Val(crate::litmus::Value::Addr(loc.clone()))),
                    None,
                    w,
                    Annot::Order(*order),
                    origin,
                ));
                st.set(reg, Sym::Read(k), BTreeSet::from([k]));
            }
            Statement::FetchAdd {
                reg,
                loc,
                operand,
                order,
            }
            | Statement::Exchange {
                reg,
                loc,
                value: operand,
                order,
            } => {
                let w = init.width_of(loc);
                let addr = Sym::Val(crate::litmus::Value::Addr(loc.clone()));
                let (ro, wo) = split_rmw_order(*order);
                let k = st.push(event(EventKind::RmwR, Some(addr.clone()), None, w, Annot::Order(ro), origin));
                let (v, deps) = expr_sym(operand, &st);
                let written = if matches!(n.stmt, Statement::FetchAdd { .. }) {
                    Sym::op(BinOp::Add, Sym::Read(k), v, w)
                } else {
                    v.wrap(w)
                };
                let mut e = event(EventKind::RmwW, Some(addr), Some(written), w, Annot::Order(wo), origin);
                e.data_deps = deps;
                st.push(e);
                if let Some(r) = reg {
                    st.set(r, Sym::Read(k), BTreeSet::from([k]));
                }
            }
            Statement::Fence(o) => {
                st.push(event(EventKind::F, None, None, Width::W64, Annot::Order(*o), origin));
            }
            Statement::Assign { reg, expr } => {
                let (v, deps) = expr_sym(expr, &st);
                st.set(reg, v.wrap(reg_width(reg)), deps);
            }
            Statement::If { cond, .. } => {
                let (c, deps) = expr_sym(cond, &st);
                let (yes, no) = st.branch(c, &deps);
                for (taken, branch_state) in [(true, yes), (false, no)] {
                    let Some(s) = branch_state else { continue };
                    let mut rest = todo.clone();
                    let body = if taken { &n.then_body } else { &n.else_body };
                    rest.extend(body.iter().rev());
                    source_paths(thread, init, rest, s, out);
                }
                return;
            }
        }
    }
    out.push(st.finish(thread, false));
}

fn reg_name(r: RegOp) -> Option<String> {
    match r.reg {
        Reg::Zr => None,
        reg => Some(reg.name()),
    }
}

fn read_reg(st: &State, r: RegOp) -> (Sym, BTreeSet<usize>) {
    match reg_name(r) {
        None => (Sym::int(0), BTreeSet::new()),
        Some(n) => {
            let (v, d) = st.get(&n);
            (v.wrap(r.width()), d)
        }
    }
}

fn write_reg(st: &mut State, r: RegOp, v: Sym, deps: BTreeSet<usize>) {
    if let Some(n) = reg_name(r) {
        st.set(&n, v.wrap(r.width()), deps);
    }
}

fn operand_sym(st: &State, o: &Operand) -> (Sym, BTreeSet<usize>) {
    match o {
        Operand::Reg(r) => read_reg(st, *r),
        Operand::Imm(v) => (Sym::int(*v), BTreeSet::new()),
        Operand::Lo12 { sym, got } => (
            Sym::Lo12(if *got { sym.got_slot() } else { sym.clone() }),
            BTreeSet::new(),
        ),
    }
}

fn addr_sym(st: &State, a: &AddrMode) -> (Sym, BTreeSet<usize>) {
    match a {
        AddrMode::Sym(l) => (Sym::Val(crate::litmus::Value::Addr(l.clone())), BTreeSet::new()),
        AddrMode::Base(r) => read_reg(st, RegOp { reg: *r, wide: true }),
        AddrMode::BaseLo12 { base, sym, got } => {
            let (b, d) = read_reg(st, RegOp { reg: *base, wide: true });
            let off = Sym::Lo12(if *got { sym.got_slot() } else { sym.clone() });
            (Sym::op(BinOp::Add, b, off, Width::W64), d)
        }
    }
}

#[derive(Clone)]
struct AsmState {
    st: State,
    pc: usize,
    iteration: usize,
    /// Operands of the last flag-setting instruction.
    flags: Option<(Sym, Sym, BTreeSet<usize>)>,
}

fn asm_paths(thread: &Thread, body: &[AsmLine], st: State, out: &mut Vec<ThreadPath>) {
    let labels: HashMap<&str, usize> = body
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            AsmLine::Label(s) => Some((s.as_str(), i)),
            _ => None,
        })
        .collect();
    let mut work = vec![AsmState {
        st,
        pc: 0,
        iteration: 0,
        flags: None,
    }];
    let mut done = Vec::new();
    while let Some(mut s) = work.pop() {
        loop {
            let Some(line) = body.get(s.pc) else {
                done.push(s.st.finish(thread, false));
                break;
            };
            let here = s.pc;
            s.pc += 1;
            let AsmLine::Instr(ins) = line else { continue };
            let origin = Origin {
                index: here,
                iteration: s.iteration,
            };
            // Resolve a branch target; backward jumps mean the body was not
            // unrolled, and are treated as exhausting the bound.
            let jump = |s: &mut AsmState, target: &str| -> bool {
                match labels.get(target) {
                    Some(&t) if t > here => {
                        s.pc = t;
                        s.iteration = s.iteration.max(label_iteration(target));
                        true
                    }
                    _ => false,
                }
            };
            match ins {
                Instruction::Load { kind, rt, addr, size } => {
                    let (a, d) = addr_sym(&s.st, addr);
                    let annot = Annot::Asm {
                        acquire: *kind == LoadKind::Acquire,
                        acquire_pc: *kind == LoadKind::AcquirePc,
                        release: false,
                    };
                    let mut e = event(EventKind::R, Some(a), None, *size, annot, origin);
                    e.addr_deps = d;
                    let k = s.st.push(e);
                    write_reg(&mut s.st, *rt, Sym::Read(k), BTreeSet::from([k]));
                }
                Instruction::Store { kind, rt, addr, size } => {
                    let (a, d) = addr_sym(&s.st, addr);
                    let (v, vd) = read_reg(&s.st, *rt);
                    let annot = Annot::Asm {
                        acquire: false,
                        acquire_pc: false,
                        release: *kind == StoreKind::Release,
                    };
                    let mut e = event(EventKind::W, Some(a), Some(v.wrap(*size)), *size, annot, origin);
                    e.addr_deps = d;
                    e.data_deps = vd;
                    s.st.push(e);
                }
                Instruction::Rmw {
                    op,
                    rs,
                    rt,
                    addr,
                    acquire,
                    release,
                    size,
                } => {
                    let (a, ad) = addr_sym(&s.st, addr);
                    // Acquire semantics are dropped when the result is discarded.
                    let dest = if *op == RmwOp::Cas { *rs } else { *rt };
                    let acquire = *acquire && dest.reg != Reg::Zr;
                    let mut r = event(
                        EventKind::RmwR,
                        Some(a.clone()),
                        None,
                        *size,
                        Annot::Asm {
                            acquire,
                            acquire_pc: false,
                            release: false,
                        },
                        origin,
                    );
                    r.addr_deps = ad.clone();
                    let (vs, ds) = read_reg(&s.st, *rs);
                    let k = s.st.push(r);
                    let write = |s: &mut AsmState, value: Sym, deps: BTreeSet<usize>| {
                        let mut w = event(
                            EventKind::RmwW,
                            Some(a.clone()),
                            Some(value.wrap(*size)),
                            *size,
                            Annot::Asm {
                                acquire: false,
                                acquire_pc: false,
                                release: *release,
                            },
                            origin,
                        );
                        w.addr_deps = ad.clone();
                        w.data_deps = deps;
                        s.st.push(w);
                    };
                    match op {
                        RmwOp::Add => {
                            write(&mut s, Sym::op(BinOp::Add, Sym::Read(k), vs, *size), ds);
                            write_reg(&mut s.st, *rt, Sym::Read(k), BTreeSet::from([k]));
                        }
                        RmwOp::Swp => {
                            write(&mut s, vs, ds);
                            write_reg(&mut s.st, *rt, Sym::Read(k), BTreeSet::from([k]));
                        }
                        RmwOp::Cas => {
                            let (vt, dt) = read_reg(&s.st, *rt);
                            let cond = Sym::op(BinOp::Cmp(BranchCond::Eq), Sym::Read(k), vs, Width::W64);
                            let (ok, fail) = s.st.clone().branch(cond, &BTreeSet::new());
                            if let Some(st_fail) = fail {
                                let mut f = s.clone();
                                f.st = st_fail;
                                write_reg(&mut f.st, *rs, Sym::Read(k), BTreeSet::from([k]));
                                work.push(f);
                            }
                            match ok {
                                Some(st_ok) => {
                                    s.st = st_ok;
                                    write(&mut s, vt, dt);
                                    write_reg(&mut s.st, *rs, Sym::Read(k), BTreeSet::from([k]));
                                }
                                None => break,
                            }
                        }
                    }
                }
                Instruction::Dmb(d) => {
                    s.st.push(event(EventKind::F, None, None, Width::W64, Annot::Dmb(*d), origin));
                }
                Instruction::Adrp { rd, sym, got } => {
                    let l = if *got { sym.got_slot() } else { sym.clone() };
                    write_reg(&mut s.st, *rd, Sym::Val(crate::litmus::Value::Page(l)), BTreeSet::new());
                }
                Instruction::Add { rd, rn, op } | Instruction::Eor { rd, rn, op } | Instruction::Subs { rd, rn, op } => {
                    let (a, mut da) = read_reg(&s.st, *rn);
                    let (b, db) = operand_sym(&s.st, op);
                    da.extend(db);
                    let w = rd.width().max(rn.width());
                    let bop = match ins {
                        Instruction::Add { .. } => BinOp::Add,
                        Instruction::Eor { .. } => BinOp::Xor,
                        _ => BinOp::Sub,
                    };
                    if matches!(ins, Instruction::Subs { .. }) {
                        s.flags = Some((a.clone(), b.clone(), da.clone()));
                    }
                    write_reg(&mut s.st, *rd, Sym::op(bop, a, b, w), da);
                }
                Instruction::Mov { rd, op } => {
                    let (v, d) = operand_sym(&s.st, op);
                    write_reg(&mut s.st, *rd, v, d);
                }
                Instruction::Cbz { rt, target } | Instruction::Cbnz { rt, target } => {
                    let (v, d) = read_reg(&s.st, *rt);
                    let c = if matches!(ins, Instruction::Cbz { .. }) {
                        BranchCond::Eq
                    } else {
                        BranchCond::Ne
                    };
                    let cond = Sym::op(BinOp::Cmp(c), v, Sym::int(0), Width::W64);
                    if !fork(&mut s, &mut work, cond, &d, target, &jump) {
                        done.push(s.st.finish(thread, true));
                        break;
                    }
                }
                Instruction::BCond { cond, target } => {
                    let (a, b, d) = s
                        .flags
                        .clone()
                        .unwrap_or((Sym::int(0), Sym::int(0), BTreeSet::new()));
                    let c = Sym::op(BinOp::Cmp(*cond), a, b, Width::W64);
                    if !fork(&mut s, &mut work, c, &d, target, &jump) {
                        done.push(s.st.finish(thread, true));
                        break;
                    }
                }
                Instruction::B { target } => {
                    if !jump(&mut s, target) {
                        done.push(s.st.finish(thread, true));
                        break;
                    }
                }
                Instruction::Stuck => {
                    done.push(s.st.finish(thread, true));
                    break;
                }
            }
        }
    }
    // Depth-first order with the fall-through pushed last gives paths in
    // decision order; sort to make the result independent of that detail.
    done.sort_by(|a, b| a.choices.cmp(&b.choices));
    out.extend(done);
}

/// Split `s` on a conditional branch. The taken side is pushed onto `work`
/// (or dropped as stuck if the jump is backward); `s` continues as the
/// fall-through. Returns false when `s` itself cannot continue.
fn fork(
    s: &mut AsmState,
    work: &mut Vec<AsmState>,
    cond: Sym,
    deps: &BTreeSet<usize>,
    target: &str,
    jump: &dyn Fn(&mut AsmState, &str) -> bool,
) -> bool {
    let (yes, no) = s.st.clone().branch(cond, deps);
    if let Some(st) = yes {
        let mut taken = s.clone();
        taken.st = st;
        if jump(&mut taken, target) {
            work.push(taken);
        }
        // A taken backward branch is infeasible beyond the bound.
    }
    match no {
        Some(st) => {
            s.st = st;
            true
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::parse_litmus;

    #[test]
    fn message_passing_reader_has_one_path() {
        let t = parse_litmus(crate::fixtures::MP).unwrap();
        let paths = thread_paths(&t.threads[1], &t.init);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].events.len(), 2);
        assert!(paths[0].events.iter().all(|e| e.kind == EventKind::R));
    }

    #[test]
    fn conditional_store_forks() {
        let src = "C IF\n{ }\nP0 (atomic_int* x, atomic_int* y) {\n  int r0 = atomic_load_explicit(x, memory_order_relaxed);\n  if (r0 == 1) {\n    atomic_store_explicit(y, 1, memory_order_relaxed);\n  }\n}\nexists (0:r0=1)\n";
        let t = parse_litmus(src).unwrap();
        let paths = thread_paths(&t.threads[0], &t.init);
        assert_eq!(paths.len(), 2);
        let taken = paths.iter().find(|p| p.choices == [true]).unwrap();
        assert_eq!(taken.events.len(), 2);
        assert_eq!(taken.events[1].ctrl_deps, BTreeSet::from([0]));
        let skipped = paths.iter().find(|p| p.choices == [false]).unwrap();
        assert_eq!(skipped.events.len(), 1);
    }

    #[test]
    fn mov_then_store_is_concrete() {
        let t = parse_litmus("AArch64 S\n{ 0:X1=x; }\n P0 ;\n MOV W0,#1 ;\n STR W0,[X1] ;\nexists (x=1)\n").unwrap();
        let paths = thread_paths(&t.threads[0], &t.init);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].events[0].value, Some(Sym::int(1)));
    }

    #[test]
    fn unrolled_retry_loop_has_stuck_path() {
        let t = parse_litmus("AArch64 R\n{ 0:X1=x; }\n P0 ;\n L0: ;\n LDR W0,[X1] ;\n CBNZ W0,L0 ;\nexists (0:X0=0)\n").unwrap();
        let u = super::super::unroll(&t, 1).unwrap();
        let paths = thread_paths(&u.threads[0], &u.init);
        assert_eq!(paths.iter().filter(|p| p.stuck).count(), 1);
        let live: Vec<_> = paths.iter().filter(|p| !p.stuck).collect();
        assert_eq!(live.len(), 1);
        assert_eq!(live[0].events.len(), 1);
    }
}
