//! Helpers shared by integration tests, including a brute-force
//! interleaving oracle for sequential consistency that does not use the
//! execution engine.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use litmus_diff::exec::Outcome;
use litmus_diff::litmus::{
    parse_litmus, Expr, InitTarget, LitmusTest, Location, Observable, Statement, ThreadBody, Value, Width,
};
use litmus_diff::transform::{generate_pattern_tests, parse_grid};

pub fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn golden(name: &str) -> LitmusTest {
    let p = manifest(&format!("tests/golden/{name}.litmus"));
    parse_litmus(&std::fs::read_to_string(p).unwrap()).unwrap()
}

pub fn grid(name: &str) -> Vec<LitmusTest> {
    let text = std::fs::read_to_string(manifest(&format!("grids/{name}.conf"))).unwrap();
    generate_pattern_tests(&parse_grid(&text).unwrap()).unwrap()
}

/// One step of a flattened thread.
#[derive(Debug, Clone)]
enum Op {
    Store(Location, Expr),
    Load(String, Location),
    FetchAdd(Option<String>, Location, Expr),
    Exchange(Option<String>, Location, Expr),
    Assign(String, Expr),
    /// Jump to the target when the condition is zero.
    JumpIfZero(Expr, usize),
    Jump(usize),
}

fn flatten(body: &[Statement], out: &mut Vec<Op>) {
    for s in body {
        match s {
            Statement::Store { loc, value, .. } => out.push(Op::Store(loc.clone(), value.clone())),
            Statement::Load { reg, loc, .. } => out.push(Op::Load(reg.clone(), loc.clone())),
            Statement::FetchAdd { reg, loc, operand, .. } => {
                out.push(Op::FetchAdd(reg.clone(), loc.clone(), operand.clone()))
            }
            Statement::Exchange { reg, loc, value, .. } => {
                out.push(Op::Exchange(reg.clone(), loc.clone(), value.clone()))
            }
            Statement::Assign { reg, expr } => out.push(Op::Assign(reg.clone(), expr.clone())),
            Statement::Fence(_) => {}
            Statement::If { cond, then_body, else_body } => {
                let branch = out.len();
                out.push(Op::Jump(0));
                flatten(then_body, out);
                let skip = out.len();
                out.push(Op::Jump(0));
                let else_start = out.len();
                flatten(else_body, out);
                let end = out.len();
                out[branch] = Op::JumpIfZero(cond.clone(), else_start);
                out[skip] = Op::Jump(end);
            }
        }
    }
}

fn eval(e: &Expr, regs: &BTreeMap<String, i64>) -> i64 {
    match e {
        Expr::Const(c) => *c,
        Expr::Reg(r) => regs.get(r).copied().unwrap_or(0),
        Expr::Add(a, b) => eval(a, regs).wrapping_add(eval(b, regs)),
        Expr::Eq(a, b) => (eval(a, regs) == eval(b, regs)) as i64,
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    pcs: Vec<usize>,
    regs: Vec<BTreeMap<String, i64>>,
    mem: BTreeMap<Location, i64>,
}

/// Every final state reachable by interleaving the threads' statements one
/// at a time over a single shared memory, projected onto the test's
/// observables.
pub fn sc_interleavings(test: &LitmusTest) -> BTreeSet<Outcome> {
    let progs: Vec<Vec<Op>> = test
        .threads
        .iter()
        .map(|t| match &t.body {
            ThreadBody::Source(b) => {
                let mut ops = Vec::new();
                flatten(b, &mut ops);
                ops
            }
            ThreadBody::Asm(_) => panic!("oracle handles source tests only"),
        })
        .collect();
    let reg_width: Vec<BTreeMap<String, Width>> = test.threads.iter().map(|t| t.registers.clone()).collect();
    let wrap_reg = |tid: usize, r: &str, v: i64| reg_width[tid].get(r).map_or(v, |w| w.wrap(v));
    let wrap_loc = |l: &Location, v: i64| test.init.width_of(l).wrap(v);

    let mut start = State {
        pcs: vec![0; progs.len()],
        regs: vec![BTreeMap::new(); progs.len()],
        mem: BTreeMap::new(),
    };
    for e in &test.init.entries {
        let Value::Int(v) = e.value else { continue };
        match &e.target {
            InitTarget::Loc(l) => {
                start.mem.insert(l.clone(), v);
            }
            InitTarget::Reg { thread, name } => {
                start.regs[*thread].insert(name.clone(), v);
            }
        }
    }

    let obs = test.observables();
    let mut finals = BTreeSet::new();
    let mut seen = HashSet::new();
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        let mut moved = false;
        for (tid, prog) in progs.iter().enumerate() {
            let Some(op) = prog.get(s.pcs[tid]) else { continue };
            moved = true;
            let mut n = s.clone();
            n.pcs[tid] += 1;
            let read = |l: &Location| s.mem.get(l).copied().unwrap_or(0);
            match op {
                Op::Store(l, e) => {
                    n.mem.insert(l.clone(), wrap_loc(l, eval(e, &s.regs[tid])));
                }
                Op::Load(r, l) => {
                    n.regs[tid].insert(r.clone(), wrap_reg(tid, r, read(l)));
                }
                Op::FetchAdd(r, l, e) => {
                    let old = read(l);
                    n.mem.insert(l.clone(), wrap_loc(l, old.wrapping_add(eval(e, &s.regs[tid]))));
                    if let Some(r) = r {
                        n.regs[tid].insert(r.clone(), wrap_reg(tid, r, old));
                    }
                }
                Op::Exchange(r, l, e) => {
                    let old = read(l);
                    n.mem.insert(l.clone(), wrap_loc(l, eval(e, &s.regs[tid])));
                    if let Some(r) = r {
                        n.regs[tid].insert(r.clone(), wrap_reg(tid, r, old));
                    }
                }
                Op::Assign(r, e) => {
                    let v = eval(e, &s.regs[tid]);
                    n.regs[tid].insert(r.clone(), wrap_reg(tid, r, v));
                }
                Op::JumpIfZero(c, target) => {
                    if eval(c, &s.regs[tid]) == 0 {
                        n.pcs[tid] = *target;
                    }
                }
                Op::Jump(target) => n.pcs[tid] = *target,
            }
            stack.push(n);
        }
        if !moved {
            let o = obs
                .iter()
                .map(|o| {
                    let v = match o {
                        Observable::Reg { thread, name } => s.regs[*thread].get(name).copied().unwrap_or(0),
                        Observable::Loc(l) => s.mem.get(l).copied().unwrap_or(0),
                    };
                    (o.clone(), Value::Int(v))
                })
                .collect();
            finals.insert(Outcome(o));
        }
    }
    finals
}

/// Number of memory-accessing statements in a source test.
pub fn memory_events(test: &LitmusTest) -> usize {
    test.threads.iter().map(|t| t.memory_ops()).sum()
}
