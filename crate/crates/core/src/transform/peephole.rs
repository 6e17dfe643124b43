use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::litmus::{
    AddrMode, AsmLine, InitTarget, Instruction, LitmusTest, LoadKind, Location, Observable,
    Operand, Reg, ThreadBody, Value,
};

/// Rewrites applied by [`optimize_asm`]. Each one deletes at least one
/// instruction when it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PeepholeRule {
    /// `ADRP Xa,:got:x; LDR Xa,[Xa,:got_lo12:x]; LDR Wt,[Xa]` becomes
    /// `LDR Wt,[x]`, and likewise for `ADRP`+`ADD :lo12:` and
    /// `ADRP`+`[Xa,:lo12:x]` forms.
    AdrpCollapse,
    /// A `MOV` whose destination is overwritten before it is read.
    DeadMov,
    /// A second materialisation of an address already held in the register.
    RedundantReload,
}

impl PeepholeRule {
    pub const ALL: [PeepholeRule; 3] = [
        PeepholeRule::RedundantReload,
        PeepholeRule::AdrpCollapse,
        PeepholeRule::DeadMov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PeepholeRule::AdrpCollapse => "adrp-collapse",
            PeepholeRule::DeadMov => "dead-mov",
            PeepholeRule::RedundantReload => "redundant-reload",
        }
    }

    /// Comma-separated rule names, `all`, or `none`.
    pub fn parse_list(s: &str) -> Result<Vec<PeepholeRule>, Error> {
        match s.trim() {
            "all" => return Ok(Self::ALL.to_vec()),
            "none" => return Ok(Vec::new()),
            _ => {}
        }
        s.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for PeepholeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PeepholeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidTest(format!("unknown peephole rule `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OptStats {
    /// Static memory accesses before and after.
    pub events_before: usize,
    pub events_after: usize,
    pub instrs_before: usize,
    pub instrs_after: usize,
    pub rules_fired: BTreeMap<String, usize>,
    /// Matches skipped because the removed access targets a shared location.
    pub guard_violations: Vec<(String, Location)>,
}

impl OptStats {
    pub fn total_fired(&self) -> usize {
        self.rules_fired.values().sum()
    }
}

fn count(test: &LitmusTest) -> (usize, usize) {
    let events = test.threads.iter().map(|t| t.memory_ops()).sum();
    let instrs = test
        .threads
        .iter()
        .filter_map(|t| t.asm_body())
        .map(|b| b.iter().filter(|l| matches!(l, AsmLine::Instr(_))).count())
        .sum();
    (events, instrs)
}

/// A GOT slot is private when no thread stores to it and no register is
/// initialised with its address.
fn slot_is_private(test: &LitmusTest, slot: &Location) -> bool {
    let escapes = test
        .init
        .entries
        .iter()
        .any(|e| matches!(&e.value, Value::Addr(l) | Value::Page(l) if l == slot));
    let written = test.threads.iter().filter_map(|t| t.asm_body()).flatten().any(|l| {
        matches!(l, AsmLine::Instr(i @ (Instruction::Store { .. } | Instruction::Rmw { .. }))
            if i.symbols().contains(slot))
    });
    !escapes && !written
}

/// Lines from `start` that use `reg` as an address, up to the instruction
/// that overwrites it. `None` when `reg` is read any other way, may be live
/// across a label or branch, or is live at the end of the thread.
fn address_uses(
    body: &[AsmLine],
    start: usize,
    reg: Reg,
    live_at_end: bool,
    is_use: &dyn Fn(&AddrMode) -> bool,
) -> Option<Vec<usize>> {
    let mut uses = Vec::new();
    for (k, line) in body.iter().enumerate().skip(start) {
        let AsmLine::Instr(i) = line else {
            return None;
        };
        let reads = i.reads().into_iter().filter(|r| *r == reg).count();
        let addr_use = i.addr().is_some_and(is_use);
        match (reads, addr_use) {
            (0, false) => {}
            (1, true) => uses.push(k),
            _ => return None,
        }
        if i.writes().contains(&reg) {
            return Some(uses);
        }
        if i.branch_target().is_some() {
            return None;
        }
    }
    (!live_at_end).then_some(uses)
}

/// The address a two-instruction materialisation starting at `i` leaves in
/// its register: (register, symbol, via GOT, index of the second
/// instruction). Unrelated instructions may sit between the two.
fn materialisation(body: &[AsmLine], i: usize) -> Option<(Reg, Location, bool, usize)> {
    let AsmLine::Instr(Instruction::Adrp { rd, sym, got }) = body.get(i)? else {
        return None;
    };
    for (j, line) in body.iter().enumerate().skip(i + 1) {
        let AsmLine::Instr(next) = line else {
            return None;
        };
        let ok = match next {
            Instruction::Load {
                kind: LoadKind::Plain,
                rt,
                addr: AddrMode::BaseLo12 { base, sym: s, got: true },
                ..
            } => *got && rt.reg == rd.reg && *base == rd.reg && s == sym,
            Instruction::Add {
                rd: d,
                rn,
                op: Operand::Lo12 { sym: s, got: false },
            } => !*got && d.reg == rd.reg && rn.reg == rd.reg && s == sym,
            _ => false,
        };
        if ok {
            return Some((rd.reg, sym.clone(), *got, j));
        }
        if next.reads().contains(&rd.reg) || next.writes().contains(&rd.reg) || next.branch_target().is_some() {
            return None;
        }
    }
    None
}

fn set_addr(i: &mut Instruction, to: AddrMode) {
    match i {
        Instruction::Load { addr, .. }
        | Instruction::Store { addr, .. }
        | Instruction::Rmw { addr, .. } => *addr = to,
        _ => {}
    }
}

struct Ctx<'a> {
    test: &'a LitmusTest,
    observed: BTreeSet<Reg>,
}

impl Ctx<'_> {
    fn live_at_end(&self, r: Reg) -> bool {
        self.observed.contains(&r)
    }
}

fn adrp_collapse(ctx: &Ctx, body: &mut Vec<AsmLine>, violations: &mut BTreeSet<(String, Location)>) -> bool {
    for i in 0..body.len() {
        if let Some((reg, sym, got, j)) = materialisation(body, i) {
            if got && !slot_is_private(ctx.test, &sym.got_slot()) {
                violations.insert((PeepholeRule::AdrpCollapse.name().into(), sym.got_slot()));
                continue;
            }
            let is_use = |a: &AddrMode| *a == AddrMode::Base(reg);
            if let Some(uses) = address_uses(body, j + 1, reg, ctx.live_at_end(reg), &is_use) {
                for k in uses {
                    if let AsmLine::Instr(ins) = &mut body[k] {
                        set_addr(ins, AddrMode::Sym(sym.clone()));
                    }
                }
                body.remove(j);
                body.remove(i);
                return true;
            }
        }
        if let AsmLine::Instr(Instruction::Adrp { rd, sym, got: false }) = &body[i] {
            let (reg, sym) = (rd.reg, sym.clone());
            let is_use =
                |a: &AddrMode| matches!(a, AddrMode::BaseLo12 { base, sym: s, got: false } if *base == reg && *s == sym);
            if let Some(uses) = address_uses(body, i + 1, reg, ctx.live_at_end(reg), &is_use) {
                if uses.is_empty() {
                    continue;
                }
                for k in uses {
                    if let AsmLine::Instr(ins) = &mut body[k] {
                        set_addr(ins, AddrMode::Sym(sym.clone()));
                    }
                }
                body.remove(i);
                return true;
            }
        }
    }
    false
}

fn redundant_reload(body: &mut Vec<AsmLine>) -> bool {
    for i in 0..body.len() {
        let Some((reg, sym, got, j)) = materialisation(body, i) else {
            continue;
        };
        let mut k = j + 1;
        while k < body.len() {
            if let Some((r2, s2, g2, j2)) = materialisation(body, k) {
                if (r2, &s2, g2) == (reg, &sym, got) {
                    body.remove(j2);
                    body.remove(k);
                    return true;
                }
            }
            match &body[k] {
                AsmLine::Label(_) => break,
                AsmLine::Instr(ins) if ins.writes().contains(&reg) || ins.branch_target().is_some() => break,
                _ => {}
            }
            k += 1;
        }
    }
    false
}

fn dead_mov(ctx: &Ctx, body: &mut Vec<AsmLine>) -> bool {
    for i in 0..body.len() {
        let AsmLine::Instr(Instruction::Mov { rd, .. }) = &body[i] else {
            continue;
        };
        let reg = rd.reg;
        if reg == Reg::Zr {
            continue;
        }
        let never = |_: &AddrMode| false;
        if address_uses(body, i + 1, reg, ctx.live_at_end(reg), &never).is_some_and(|u| u.is_empty()) {
            body.remove(i);
            return true;
        }
    }
    false
}

/// Apply `rules` to a fixpoint. Rules that would remove an access to a
/// location other threads can name are skipped and recorded.
pub fn optimize_asm(test: &LitmusTest, rules: &[PeepholeRule]) -> Result<(LitmusTest, OptStats), Error> {
    if test.is_source() {
        return Err(Error::InvalidTest("peephole optimisation applies to asm tests".into()));
    }
    let (events_before, instrs_before) = count(test);
    let mut out = test.clone();
    let mut fired: BTreeMap<String, usize> = BTreeMap::new();
    let mut violations = BTreeSet::new();
    loop {
        let mut any = false;
        for tid in 0..out.threads.len() {
            let observed = test
                .observables()
                .into_iter()
                .filter_map(|o| match o {
                    Observable::Reg { thread, name } if thread == tid => reg_of(&name),
                    _ => None,
                })
                .collect();
            let mut body = match &out.threads[tid].body {
                ThreadBody::Asm(b) => b.clone(),
                ThreadBody::Source(_) => continue,
            };
            let ctx = Ctx { test: &out, observed };
            for rule in rules {
                let hit = match rule {
                    PeepholeRule::AdrpCollapse => adrp_collapse(&ctx, &mut body, &mut violations),
                    PeepholeRule::DeadMov => dead_mov(&ctx, &mut body),
                    PeepholeRule::RedundantReload => redundant_reload(&mut body),
                };
                if hit {
                    *fired.entry(rule.name().into()).or_default() += 1;
                    any = true;
                    break;
                }
            }
            out.threads[tid].body = ThreadBody::Asm(body);
        }
        if !any {
            break;
        }
    }
    drop_unused_slots(&mut out);
    let (events_after, instrs_after) = count(&out);
    Ok((
        out,
        OptStats {
            events_before,
            events_after,
            instrs_before,
            instrs_after,
            rules_fired: fired,
            guard_violations: violations.into_iter().collect(),
        },
    ))
}

fn reg_of(name: &str) -> Option<Reg> {
    let n = name.strip_prefix('X').or_else(|| name.strip_prefix('W'))?;
    n.parse().ok().map(Reg::X)
}

fn drop_unused_slots(test: &mut LitmusTest) {
    let used: BTreeSet<Location> = test.referenced_locations().into_iter().collect();
    let escaped: BTreeSet<Location> = test
        .init
        .entries
        .iter()
        .filter_map(|e| match &e.value {
            Value::Addr(l) | Value::Page(l) => Some(l.clone()),
            _ => None,
        })
        .collect();
    test.init.entries.retain(|e| match &e.target {
        InitTarget::Loc(l) => !l.is_got_slot() || used.contains(l) || escaped.contains(l),
        InitTarget::Reg { .. } => true,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::{parse_litmus, render_instruction};

    fn thread0(t: &LitmusTest) -> Vec<String> {
        t.threads[0]
            .asm_body()
            .unwrap()
            .iter()
            .map(|l| match l {
                AsmLine::Instr(i) => render_instruction(i),
                AsmLine::Label(s) => format!("{s}:"),
            })
            .collect()
    }

    fn asm(body: &str, exists: &str) -> LitmusTest {
        let rows: String = body.split(';').map(|l| format!(" {l} ;\n")).collect();
        parse_litmus(&format!("AArch64 T\n{{ }}\n P0 ;\n{rows}exists ({exists})\n")).unwrap()
    }

    #[test]
    fn got_load_collapses_to_symbolic_access() {
        let t = asm("ADRP X1,:got:x;LDR X1,[X1,:got_lo12:x];LDR W0,[X1]", "0:X0=0");
        let (o, s) = optimize_asm(&t, &PeepholeRule::ALL).unwrap();
        assert_eq!(thread0(&o), ["LDR W0,[x]"]);
        assert_eq!((s.events_before, s.events_after), (2, 1));
        assert_eq!(s.rules_fired["adrp-collapse"], 1);
        assert!(o.init.location(&Location::new("x@got")).is_none());
    }

    #[test]
    fn interleaved_materialisations_collapse() {
        let t = asm(
            "ADRP X8,:got:x;ADRP X9,:got:y;MOV W10,#1;LDR X8,[X8,:got_lo12:x];LDR X9,[X9,:got_lo12:y];LDR WZR,[X8];STR W10,[X9]",
            "y=1",
        );
        let (o, _) = optimize_asm(&t, &PeepholeRule::ALL).unwrap();
        assert_eq!(thread0(&o), ["MOV W10,#1", "LDR WZR,[x]", "STR W10,[y]"]);
    }

    #[test]
    fn page_offset_forms_collapse() {
        let t = asm("ADRP X1,x;ADD X1,X1,:lo12:x;MOV W2,#1;STR W2,[X1]", "x=1");
        assert_eq!(thread0(&optimize_asm(&t, &PeepholeRule::ALL).unwrap().0), ["MOV W2,#1", "STR W2,[x]"]);
        let t = asm("ADRP X1,x;LDR W0,[X1,:lo12:x]", "0:X0=0");
        assert_eq!(thread0(&optimize_asm(&t, &PeepholeRule::ALL).unwrap().0), ["LDR W0,[x]"]);
    }

    #[test]
    fn no_materialisation_is_identity() {
        let t = asm("MOV W2,#1;STR W2,[x]", "x=1");
        let (o, s) = optimize_asm(&t, &PeepholeRule::ALL).unwrap();
        assert_eq!(o, t);
        assert_eq!(s.total_fired(), 0);
    }

    #[test]
    fn observed_address_register_is_kept() {
        let t = asm("ADRP X1,:got:x;LDR X1,[X1,:got_lo12:x];LDR W0,[X1]", "0:X1=x");
        let (_, s) = optimize_asm(&t, &[PeepholeRule::AdrpCollapse]).unwrap();
        assert_eq!(s.total_fired(), 0);
    }

    #[test]
    fn dead_mov_and_reload() {
        let t = asm(
            "MOV W3,#5;MOV W3,#1;ADRP X1,x;ADD X1,X1,:lo12:x;STR W3,[X1];ADRP X1,x;ADD X1,X1,:lo12:x;STR W3,[X1]",
            "x=1",
        );
        let (o, s) = optimize_asm(&t, &PeepholeRule::ALL).unwrap();
        assert_eq!(thread0(&o), ["MOV W3,#1", "STR W3,[x]", "STR W3,[x]"]);
        assert_eq!(s.rules_fired["dead-mov"], 1);
        assert_eq!(s.rules_fired["redundant-reload"], 1);
    }

    #[test]
    fn shared_slot_is_guarded() {
        let t = parse_litmus(
            "AArch64 T\n{ 1:X5=x@got; }\n P0 | P1 ;\n ADRP X1,:got:x | MOV X2,#0 ;\n LDR X1,[X1,:got_lo12:x] | STR X2,[X5] ;\n LDR W0,[X1] | ;\nexists (0:X0=0)\n",
        )
        .unwrap();
        let (o, s) = optimize_asm(&t, &PeepholeRule::ALL).unwrap();
        assert_eq!(thread0(&o).len(), 3);
        assert_eq!(s.guard_violations, [("adrp-collapse".to_string(), Location::new("x@got"))]);
    }
}
