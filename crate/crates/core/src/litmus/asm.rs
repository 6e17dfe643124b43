use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::lex::{lex, normalize_reg_name, Parser};
use super::source::{check_observables, split_header, thread_index};
use super::{
    render_final, render_metadata, render_value, Dialect, InitTarget, Isa, LitmusTest, Location,
    Thread, ThreadBody, Width,
};
use crate::error::Error;

/// A general-purpose register; `Zr` reads as zero and discards writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reg {
    X(u8),
    Zr,
}

impl Reg {
    /// Canonical (64-bit view) name, used for register observables.
    pub fn name(self) -> String {
        match self {
            Reg::X(n) => format!("X{n}"),
            Reg::Zr => "XZR".into(),
        }
    }
}

/// A register together with the view it is accessed through (`W` or `X`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegOp {
    pub reg: Reg,
    pub wide: bool,
}

impl RegOp {
    pub fn w(n: u8) -> Self {
        RegOp {
            reg: Reg::X(n),
            wide: false,
        }
    }

    pub fn x(n: u8) -> Self {
        RegOp {
            reg: Reg::X(n),
            wide: true,
        }
    }

    pub fn wzr() -> Self {
        RegOp {
            reg: Reg::Zr,
            wide: false,
        }
    }

    pub fn width(self) -> Width {
        if self.wide {
            Width::W64
        } else {
            Width::W32
        }
    }
}

impl fmt::Display for RegOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = if self.wide { 'X' } else { 'W' };
        match self.reg {
            Reg::X(n) => write!(f, "{v}{n}"),
            Reg::Zr => write!(f, "{v}ZR"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(RegOp),
    Imm(i64),
    /// `:lo12:sym` (or `:got_lo12:sym`) page-offset relocation.
    Lo12 { sym: Location, got: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AddrMode {
    /// `[x]`: the symbolic location itself.
    Sym(Location),
    /// `[Xn]`: the address held in a register.
    Base(Reg),
    /// `[Xn, :lo12:sym]`: page in `Xn` plus the low 12 bits of `sym`.
    BaseLo12 { base: Reg, sym: Location, got: bool },
}

impl AddrMode {
    pub fn base(&self) -> Option<Reg> {
        match self {
            AddrMode::Sym(_) => None,
            AddrMode::Base(r) | AddrMode::BaseLo12 { base: r, .. } => Some(*r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DmbDomain {
    Ish,
    IshLd,
    IshSt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchCond {
    Eq,
    Ne,
    Lt,
    Ge,
    Gt,
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadKind {
    Plain,
    Acquire,
    AcquirePc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreKind {
    Plain,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RmwOp {
    Add,
    Swp,
    Cas,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    /// LDR / LDAR / LDAPR
    Load {
        kind: LoadKind,
        rt: RegOp,
        addr: AddrMode,
        size: Width,
    },
    /// STR / STLR
    Store {
        kind: StoreKind,
        rt: RegOp,
        addr: AddrMode,
        size: Width,
    },
    /// LDADD / SWP / CAS families. For CAS, `rs` holds the expected value
    /// and receives the old value; `rt` is the value stored on success.
    Rmw {
        op: RmwOp,
        rs: RegOp,
        rt: RegOp,
        addr: AddrMode,
        acquire: bool,
        release: bool,
        size: Width,
    },
    Dmb(DmbDomain),
    Adrp {
        rd: RegOp,
        sym: Location,
        got: bool,
    },
    Add {
        rd: RegOp,
        rn: RegOp,
        op: Operand,
    },
    Eor {
        rd: RegOp,
        rn: RegOp,
        op: Operand,
    },
    Subs {
        rd: RegOp,
        rn: RegOp,
        op: Operand,
    },
    Mov {
        rd: RegOp,
        op: Operand,
    },
    Cbz {
        rt: RegOp,
        target: String,
    },
    Cbnz {
        rt: RegOp,
        target: String,
    },
    BCond {
        cond: BranchCond,
        target: String,
    },
    B {
        target: String,
    },
    /// Marks an exhausted unrolled loop: any path reaching it is infeasible.
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AsmLine {
    Label(String),
    Instr(Instruction),
}

impl Instruction {
    pub fn is_memory_access(&self) -> bool {
        matches!(
            self,
            Instruction::Load { .. } | Instruction::Store { .. } | Instruction::Rmw { .. }
        )
    }

    pub fn addr(&self) -> Option<&AddrMode> {
        match self {
            Instruction::Load { addr, .. }
            | Instruction::Store { addr, .. }
            | Instruction::Rmw { addr, .. } => Some(addr),
            _ => None,
        }
    }

    pub fn branch_target(&self) -> Option<&str> {
        match self {
            Instruction::Cbz { target, .. }
            | Instruction::Cbnz { target, .. }
            | Instruction::BCond { target, .. }
            | Instruction::B { target } => Some(target),
            _ => None,
        }
    }

    pub fn branch_target_mut(&mut self) -> Option<&mut String> {
        match self {
            Instruction::Cbz { target, .. }
            | Instruction::Cbnz { target, .. }
            | Instruction::BCond { target, .. }
            | Instruction::B { target } => Some(target),
            _ => None,
        }
    }

    /// Symbolic locations named by this instruction (GOT slots included).
    pub fn symbols(&self) -> Vec<Location> {
        let mut out = Vec::new();
        let addr_syms = |a: &AddrMode, out: &mut Vec<Location>| match a {
            AddrMode::Sym(l) => out.push(l.clone()),
            AddrMode::BaseLo12 { sym, got, .. } => {
                out.push(if *got { sym.got_slot() } else { sym.clone() })
            }
            AddrMode::Base(_) => {}
        };
        match self {
            Instruction::Load { addr, .. }
            | Instruction::Store { addr, .. }
            | Instruction::Rmw { addr, .. } => addr_syms(addr, &mut out),
            Instruction::Adrp { sym, got, .. } => {
                out.push(if *got { sym.got_slot() } else { sym.clone() })
            }
            Instruction::Add {
                op: Operand::Lo12 { sym, got },
                ..
            } => out.push(if *got { sym.got_slot() } else { sym.clone() }),
            _ => {}
        }
        out
    }

    /// Registers read by this instruction.
    pub fn reads(&self) -> Vec<Reg> {
        let mut out = Vec::new();
        let op = |o: &Operand, out: &mut Vec<Reg>| {
            if let Operand::Reg(r) = o {
                out.push(r.reg)
            }
        };
        match self {
            Instruction::Load { addr, .. } => out.extend(addr.base()),
            Instruction::Store { rt, addr, .. } => {
                out.push(rt.reg);
                out.extend(addr.base());
            }
            Instruction::Rmw {
                op: rop,
                rs,
                rt,
                addr,
                ..
            } => {
                out.push(rs.reg);
                if *rop == RmwOp::Cas {
                    out.push(rt.reg);
                }
                out.extend(addr.base());
            }
            Instruction::Add { rn, op: o, .. }
            | Instruction::Eor { rn, op: o, .. }
            | Instruction::Subs { rn, op: o, .. } => {
                out.push(rn.reg);
                op(o, &mut out);
            }
            Instruction::Mov { op: o, .. } => op(o, &mut out),
            Instruction::Cbz { rt, .. } | Instruction::Cbnz { rt, .. } => out.push(rt.reg),
            _ => {}
        }
        out.retain(|r| *r != Reg::Zr);
        out
    }

    /// Registers written by this instruction.
    pub fn writes(&self) -> Vec<Reg> {
        let r = match self {
            Instruction::Load { rt, .. } => Some(rt.reg),
            Instruction::Rmw { op, rs, rt, .. } => Some(if *op == RmwOp::Cas { rs.reg } else { rt.reg }),
            Instruction::Adrp { rd, .. }
            | Instruction::Add { rd, .. }
            | Instruction::Eor { rd, .. }
            | Instruction::Subs { rd, .. }
            | Instruction::Mov { rd, .. } => Some(rd.reg),
            _ => None,
        };
        r.into_iter().filter(|r| *r != Reg::Zr).collect()
    }

    pub fn mnemonic(&self) -> String {
        fn size_suffix(size: Width) -> &'static str {
            match size {
                Width::W8 => "B",
                Width::W16 => "H",
                _ => "",
            }
        }
        fn ord(acq: bool, rel: bool) -> &'static str {
            match (acq, rel) {
                (false, false) => "",
                (true, false) => "A",
                (false, true) => "L",
                (true, true) => "AL",
            }
        }
        match self {
            Instruction::Load { kind, size, .. } => {
                let base = match kind {
                    LoadKind::Plain => "LDR",
                    LoadKind::Acquire => "LDAR",
                    LoadKind::AcquirePc => "LDAPR",
                };
                format!("{base}{}", size_suffix(*size))
            }
            Instruction::Store { kind, size, .. } => {
                let base = match kind {
                    StoreKind::Plain => "STR",
                    StoreKind::Release => "STLR",
                };
                format!("{base}{}", size_suffix(*size))
            }
            Instruction::Rmw {
                op,
                rt,
                acquire,
                release,
                size,
                ..
            } => {
                if *op == RmwOp::Add && rt.reg == Reg::Zr && !acquire {
                    return format!("STADD{}{}", ord(false, *release), size_suffix(*size));
                }
                let base = match op {
                    RmwOp::Add => "LDADD",
                    RmwOp::Swp => "SWP",
                    RmwOp::Cas => "CAS",
                };
                format!("{base}{}{}", ord(*acquire, *release), size_suffix(*size))
            }
            Instruction::Dmb(_) => "DMB".into(),
            Instruction::Adrp { .. } => "ADRP".into(),
            Instruction::Add { .. } => "ADD".into(),
            Instruction::Eor { .. } => "EOR".into(),
            Instruction::Subs { rd, .. } if rd.reg == Reg::Zr => "CMP".into(),
            Instruction::Subs { .. } => "SUBS".into(),
            Instruction::Mov { .. } => "MOV".into(),
            Instruction::Cbz { .. } => "CBZ".into(),
            Instruction::Cbnz { .. } => "CBNZ".into(),
            Instruction::BCond { cond, .. } => format!("B.{}", cond_name(*cond)),
            Instruction::B { .. } => "B".into(),
            Instruction::Stuck => "STUCK".into(),
        }
    }
}

fn cond_name(c: BranchCond) -> &'static str {
    match c {
        BranchCond::Eq => "EQ",
        BranchCond::Ne => "NE",
        BranchCond::Lt => "LT",
        BranchCond::Ge => "GE",
        BranchCond::Gt => "GT",
        BranchCond::Le => "LE",
    }
}

fn render_addr(a: &AddrMode) -> String {
    match a {
        AddrMode::Sym(l) => format!("[{l}]"),
        AddrMode::Base(r) => format!("[{}]", RegOp { reg: *r, wide: true }),
        AddrMode::BaseLo12 { base, sym, got } => format!(
            "[{},:{}:{sym}]",
            RegOp {
                reg: *base,
                wide: true
            },
            if *got { "got_lo12" } else { "lo12" }
        ),
    }
}

fn render_operand(o: &Operand) -> String {
    match o {
        Operand::Reg(r) => r.to_string(),
        Operand::Imm(v) => format!("#{v}"),
        Operand::Lo12 { sym, got } => {
            format!(":{}:{sym}", if *got { "got_lo12" } else { "lo12" })
        }
    }
}

pub fn render_instruction(i: &Instruction) -> String {
    let m = i.mnemonic();
    match i {
        Instruction::Load { rt, addr, .. } | Instruction::Store { rt, addr, .. } => {
            format!("{m} {rt},{}", render_addr(addr))
        }
        Instruction::Rmw { rs, rt, addr, .. } => {
            if m.starts_with("STADD") {
                format!("{m} {rs},{}", render_addr(addr))
            } else {
                format!("{m} {rs},{rt},{}", render_addr(addr))
            }
        }
        Instruction::Dmb(d) => format!(
            "DMB {}",
            match d {
                DmbDomain::Ish => "ISH",
                DmbDomain::IshLd => "ISHLD",
                DmbDomain::IshSt => "ISHST",
            }
        ),
        Instruction::Adrp { rd, sym, got } => {
            format!("ADRP {rd},{}{sym}", if *got { ":got:" } else { "" })
        }
        Instruction::Add { rd, rn, op } | Instruction::Eor { rd, rn, op } => {
            format!("{m} {rd},{rn},{}", render_operand(op))
        }
        Instruction::Subs { rd, rn, op } => {
            if rd.reg == Reg::Zr {
                format!("CMP {rn},{}", render_operand(op))
            } else {
                format!("SUBS {rd},{rn},{}", render_operand(op))
            }
        }
        Instruction::Mov { rd, op } => format!("MOV {rd},{}", render_operand(op)),
        Instruction::Cbz { rt, target } | Instruction::Cbnz { rt, target } => {
            format!("{m} {rt},{target}")
        }
        Instruction::BCond { target, .. } | Instruction::B { target } => format!("{m} {target}"),
        Instruction::Stuck => m,
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_instruction(self))
    }
}

fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' => {
                depth += 1;
                cur.push(c)
            }
            ']' => {
                depth -= 1;
                cur.push(c)
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_reg(s: &str) -> Option<RegOp> {
    let u = s.trim().to_ascii_uppercase();
    match u.as_str() {
        "WZR" => return Some(RegOp::wzr()),
        "XZR" => {
            return Some(RegOp {
                reg: Reg::Zr,
                wide: true,
            })
        }
        _ => {}
    }
    let (wide, n) = match u.as_bytes().first()? {
        b'W' => (false, &u[1..]),
        b'X' => (true, &u[1..]),
        _ => return None,
    };
    let n: u8 = n.parse().ok()?;
    if n > 30 {
        return None;
    }
    Some(RegOp {
        reg: Reg::X(n),
        wide,
    })
}

fn parse_imm(s: &str) -> Option<i64> {
    let s = s.trim();
    let s = s.strip_prefix('#').unwrap_or(s);
    let (neg, s) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let v = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()? as i64
    } else {
        s.parse::<i64>().ok()?
    };
    Some(if neg { v.wrapping_neg() } else { v })
}

fn is_symbol(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '@')
}

fn parse_lo12(s: &str) -> Option<(Location, bool)> {
    let s = s.trim();
    if let Some(sym) = s.strip_prefix(":got_lo12:") {
        return is_symbol(sym).then(|| (Location::new(sym), true));
    }
    if let Some(sym) = s.strip_prefix(":lo12:") {
        return is_symbol(sym).then(|| (Location::new(sym), false));
    }
    None
}

fn parse_operand(s: &str) -> Option<Operand> {
    if let Some(r) = parse_reg(s) {
        return Some(Operand::Reg(r));
    }
    if let Some((sym, got)) = parse_lo12(s) {
        return Some(Operand::Lo12 { sym, got });
    }
    parse_imm(s).map(Operand::Imm)
}

fn parse_addr(s: &str) -> Option<AddrMode> {
    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [one] => {
            if let Some(r) = parse_reg(one) {
                r.wide.then_some(AddrMode::Base(r.reg))
            } else if is_symbol(one) {
                Some(AddrMode::Sym(Location::new(*one)))
            } else {
                None
            }
        }
        [base, off] => {
            let b = parse_reg(base)?;
            if !b.wide {
                return None;
            }
            if let Some((sym, got)) = parse_lo12(off) {
                return Some(AddrMode::BaseLo12 {
                    base: b.reg,
                    sym,
                    got,
                });
            }
            match parse_imm(off)? {
                0 => Some(AddrMode::Base(b.reg)),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Split `LDADDAL`-style mnemonics into (family, acquire, release, size).
fn split_mnemonic(m: &str) -> Option<(&'static str, bool, bool, Option<Width>)> {
    const FAMILIES: [&str; 9] = [
        "LDADD", "STADD", "LDAPR", "LDAR", "LDR", "STLR", "STR", "SWP", "CAS",
    ];
    for fam in FAMILIES {
        if let Some(rest) = m.strip_prefix(fam) {
            let (ord, size) = match rest.strip_suffix('B') {
                Some(r) => (r, Some(Width::W8)),
                None => match rest.strip_suffix('H') {
                    Some(r) => (r, Some(Width::W16)),
                    None => (rest, None),
                },
            };
            let rmw = matches!(fam, "LDADD" | "SWP" | "CAS");
            let (a, l) = match ord {
                "" => (false, false),
                "A" if rmw => (true, false),
                "L" if rmw || fam == "STADD" => (false, true),
                "AL" if rmw => (true, true),
                _ => continue,
            };
            return Some((fam, a, l, size));
        }
    }
    None
}

/// Parse a single instruction, e.g. `LDR W0,[X1]` or `ldadd w8, w9, [x10]`.
pub fn parse_instruction(text: &str) -> Result<Instruction, Error> {
    let text = text.trim();
    let (m, rest) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => (text, ""),
    };
    let mu = m.to_ascii_uppercase();
    let ops = split_operands(rest);
    let bad = || Error::BadOperands(text.to_string());
    let reg = |i: usize| ops.get(i).and_then(|s| parse_reg(s)).ok_or_else(bad);
    let operand = |i: usize| ops.get(i).and_then(|s| parse_operand(s)).ok_or_else(bad);
    let addr = |i: usize| ops.get(i).and_then(|s| parse_addr(s)).ok_or_else(bad);
    let arity = |n: usize| if ops.len() == n { Ok(()) } else { Err(bad()) };
    let label = |i: usize| {
        ops.get(i)
            .filter(|s| is_symbol(s))
            .cloned()
            .ok_or_else(bad)
    };

    if let Some((fam, acquire, release, size)) = split_mnemonic(&mu) {
        let size_of = |r: RegOp| size.unwrap_or(r.width());
        let instr = match fam {
            "LDR" | "LDAR" | "LDAPR" => {
                arity(2)?;
                let rt = reg(0)?;
                let a = addr(1)?;
                if fam != "LDR" && matches!(a, AddrMode::BaseLo12 { .. }) {
                    return Err(bad());
                }
                Instruction::Load {
                    kind: match fam {
                        "LDR" => LoadKind::Plain,
                        "LDAR" => LoadKind::Acquire,
                        _ => LoadKind::AcquirePc,
                    },
                    rt,
                    addr: a,
                    size: size_of(rt),
                }
            }
            "STR" | "STLR" => {
                arity(2)?;
                let rt = reg(0)?;
                Instruction::Store {
                    kind: if fam == "STR" {
                        StoreKind::Plain
                    } else {
                        StoreKind::Release
                    },
                    rt,
                    addr: addr(1)?,
                    size: size_of(rt),
                }
            }
            "STADD" => {
                arity(2)?;
                let rs = reg(0)?;
                Instruction::Rmw {
                    op: RmwOp::Add,
                    rs,
                    rt: RegOp {
                        reg: Reg::Zr,
                        wide: rs.wide,
                    },
                    addr: addr(1)?,
                    acquire: false,
                    release,
                    size: size_of(rs),
                }
            }
            _ => {
                arity(3)?;
                let rs = reg(0)?;
                let rt = reg(1)?;
                Instruction::Rmw {
                    op: match fam {
                        "LDADD" => RmwOp::Add,
                        "SWP" => RmwOp::Swp,
                        _ => RmwOp::Cas,
                    },
                    rs,
                    rt,
                    addr: addr(2)?,
                    acquire,
                    release,
                    size: size_of(rs),
                }
            }
        };
        return Ok(instr);
    }

    let instr = match mu.as_str() {
        "DMB" => {
            arity(1)?;
            Instruction::Dmb(match ops[0].to_ascii_uppercase().as_str() {
                "ISH" | "SY" => DmbDomain::Ish,
                "ISHLD" | "LD" => DmbDomain::IshLd,
                "ISHST" | "ST" => DmbDomain::IshSt,
                _ => return Err(bad()),
            })
        }
        "ADRP" => {
            arity(2)?;
            let rd = reg(0)?;
            let s = ops[1].trim();
            let (sym, got) = match s.strip_prefix(":got:") {
                Some(sym) => (sym, true),
                None => (s, false),
            };
            if !is_symbol(sym) {
                return Err(bad());
            }
            Instruction::Adrp {
                rd,
                sym: Location::new(sym),
                got,
            }
        }
        "ADD" | "EOR" | "SUBS" => {
            arity(3)?;
            let (rd, rn, op) = (reg(0)?, reg(1)?, operand(2)?);
            match mu.as_str() {
                "ADD" => Instruction::Add { rd, rn, op },
                "EOR" => Instruction::Eor { rd, rn, op },
                _ => Instruction::Subs { rd, rn, op },
            }
        }
        "CMP" => {
            arity(2)?;
            let rn = reg(0)?;
            Instruction::Subs {
                rd: RegOp {
                    reg: Reg::Zr,
                    wide: rn.wide,
                },
                rn,
                op: operand(1)?,
            }
        }
        "MOV" | "MOVZ" => {
            arity(2)?;
            Instruction::Mov {
                rd: reg(0)?,
                op: operand(1)?,
            }
        }
        "CBZ" | "CBNZ" => {
            arity(2)?;
            let rt = reg(0)?;
            let target = label(1)?;
            if mu == "CBZ" {
                Instruction::Cbz { rt, target }
            } else {
                Instruction::Cbnz { rt, target }
            }
        }
        "B" => {
            arity(1)?;
            Instruction::B { target: label(0)? }
        }
        "STUCK" => {
            arity(0)?;
            Instruction::Stuck
        }
        _ => {
            if let Some(c) = mu.strip_prefix("B.") {
                arity(1)?;
                let cond = match c {
                    "EQ" => BranchCond::Eq,
                    "NE" => BranchCond::Ne,
                    "LT" => BranchCond::Lt,
                    "GE" => BranchCond::Ge,
                    "GT" => BranchCond::Gt,
                    "LE" => BranchCond::Le,
                    _ => return Err(Error::UnknownMnemonic(m.to_string())),
                };
                Instruction::BCond {
                    cond,
                    target: label(0)?,
                }
            } else {
                return Err(Error::UnknownMnemonic(m.to_string()));
            }
        }
    };
    Ok(instr)
}

/// Label definition at the start of a cell: `L0:` optionally followed by
/// an instruction.
fn split_label(cell: &str) -> (Option<&str>, &str) {
    if let Some(i) = cell.find(':') {
        let head = &cell[..i];
        if !head.is_empty() && is_symbol(head) && !head.contains(char::is_whitespace) {
            return (Some(head), cell[i + 1..].trim());
        }
    }
    (None, cell)
}

pub fn parse_asm_litmus(text: &str, isa: Isa) -> Result<LitmusTest, Error> {
    let (kw, name, body_line, body) = split_header(text)?;
    let expect = Dialect::Asm(isa).header_keyword();
    if !kw.eq_ignore_ascii_case(expect) {
        return Err(Error::syntax(body_line - 1, 1, format!("header keyword `{expect}`")));
    }
    // Locate the init block by brace matching.
    let open = body
        .find('{')
        .ok_or_else(|| Error::syntax(body_line, 1, "`{` opening the initial state"))?;
    let close_rel = body[open..]
        .find('}')
        .ok_or_else(|| Error::syntax(body_line, 1, "`}` closing the initial state"))?;
    let init_end = open + close_rel + 1;
    let head = &body[..init_end];
    let mut p = Parser::new(lex(head, body_line)?, body_line + head.lines().count());
    let mut metadata = BTreeMap::new();
    p.metadata(&mut metadata);
    let init = p.init_block(true)?;
    if !p.at_end() {
        return Err(p.err("end of initial state"));
    }

    let rest = &body[init_end..];
    let mut line_no = body_line + head.matches('\n').count();
    let mut columns: Option<usize> = None;
    let mut bodies: Vec<Vec<AsmLine>> = Vec::new();
    let mut final_text = None;
    let mut final_line = line_no;
    let mut offset = 0;
    for raw in rest.split_inclusive('\n') {
        let line = raw.trim();
        let this_line = line_no;
        line_no += 1;
        offset += raw.len();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if line.starts_with("exists") || line.starts_with("forall") || line.starts_with("(*") {
            if line.starts_with("(*") && columns.is_none() {
                let toks = lex(line, this_line)?;
                let mut mp = Parser::new(toks, this_line);
                mp.metadata(&mut metadata);
                continue;
            }
            if line.starts_with("(*") {
                continue;
            }
            final_text = Some(&rest[offset - raw.len()..]);
            final_line = this_line;
            break;
        }
        let row = line.strip_suffix(';').unwrap_or(line);
        let cells: Vec<&str> = row.split('|').map(str::trim).collect();
        match columns {
            None => {
                for (i, c) in cells.iter().enumerate() {
                    if thread_index(c) != Some(i) {
                        return Err(Error::syntax(this_line, 1, format!("thread header `P{i}`")));
                    }
                }
                columns = Some(cells.len());
                bodies = vec![Vec::new(); cells.len()];
            }
            Some(n) => {
                if cells.len() > n {
                    return Err(Error::syntax(this_line, 1, format!("at most {n} columns")));
                }
                for (t, cell) in cells.iter().enumerate() {
                    if cell.is_empty() {
                        continue;
                    }
                    let (label, instr) = split_label(cell);
                    if let Some(l) = label {
                        bodies[t].push(AsmLine::Label(l.to_string()));
                    }
                    if !instr.is_empty() {
                        bodies[t].push(AsmLine::Instr(parse_instruction(instr)?));
                    }
                }
            }
        }
    }
    let columns = columns.ok_or_else(|| Error::syntax(line_no, 1, "thread header `P0 | ...`"))?;
    let final_text = final_text.ok_or_else(|| Error::syntax(line_no, 1, "`exists` clause"))?;
    let mut fp = Parser::new(lex(final_text, final_line)?, line_no);
    let final_pred = fp.final_predicate()?;

    let mut threads = Vec::with_capacity(columns);
    for (id, body) in bodies.into_iter().enumerate() {
        threads.push(build_thread(id, body, &init)?);
    }
    let mut test = LitmusTest {
        name,
        dialect: Dialect::Asm(isa),
        init,
        threads,
        final_pred,
        metadata,
    };
    check_observables(&test)?;
    test.normalize();
    Ok(test)
}

pub(crate) fn build_thread(
    id: usize,
    body: Vec<AsmLine>,
    init: &super::InitState,
) -> Result<Thread, Error> {
    let labels: BTreeSet<&str> = body
        .iter()
        .filter_map(|l| match l {
            AsmLine::Label(s) => Some(s.as_str()),
            _ => None,
        })
        .collect();
    let mut registers = BTreeMap::new();
    for line in &body {
        if let AsmLine::Instr(i) = line {
            if let Some(t) = i.branch_target() {
                if !labels.contains(t) {
                    return Err(Error::UnresolvedLabel(t.to_string()));
                }
            }
            for r in i.reads().into_iter().chain(i.writes()) {
                registers.insert(r.name(), Width::W64);
            }
        }
    }
    for e in &init.entries {
        if let InitTarget::Reg { thread, name } = &e.target {
            if *thread == id {
                registers.insert(normalize_reg_name(name), Width::W64);
            }
        }
    }
    Ok(Thread {
        id,
        body: ThreadBody::Asm(body),
        registers,
    })
}

pub(crate) fn render_asm(test: &LitmusTest) -> String {
    let mut out = format!("{} {}\n", test.dialect.header_keyword(), test.name);
    render_metadata(test, &mut out);
    out.push_str("{\n");
    for e in &test.init.entries {
        match &e.target {
            InitTarget::Reg { thread, name } => {
                out.push_str(&format!("  {thread}:{name}={};\n", render_value(&e.value)))
            }
            InitTarget::Loc(l) => match &e.value {
                super::Value::Int(v) => {
                    out.push_str(&format!("  {} {l}={v};\n", e.width.c_type()))
                }
                v => out.push_str(&format!("  {l}={};\n", render_value(v))),
            },
        }
    }
    for lc in &test.init.layout {
        out.push_str(&format!("  layout({}, {}, {});\n", lc.first, lc.second, lc.offset));
    }
    out.push_str("}\n");

    let cols: Vec<Vec<String>> = test
        .threads
        .iter()
        .map(|t| {
            let mut c = vec![format!("P{}", t.id)];
            if let ThreadBody::Asm(b) = &t.body {
                for l in b {
                    c.push(match l {
                        AsmLine::Label(s) => format!("{s}:"),
                        AsmLine::Instr(i) => render_instruction(i),
                    });
                }
            }
            c
        })
        .collect();
    let rows = cols.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = cols
        .iter()
        .map(|c| c.iter().map(String::len).max().unwrap_or(0))
        .collect();
    for r in 0..rows {
        let cells: Vec<String> = cols
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!(" {:<w$} ", c.get(r).map(String::as_str).unwrap_or(""), w = *w))
            .collect();
        out.push_str(cells.join("|").trim_end());
        out.push_str(" ;\n");
    }
    out.push_str(&render_final(&test.final_pred));
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnemonic_round_trip() {
        for s in [
            "LDR W0,[X1]",
            "LDR X1,[X1,:got_lo12:x]",
            "STR W2,[y]",
            "LDAR W0,[X1]",
            "LDAPR W0,[X1]",
            "STLR W2,[X3]",
            "LDADDAL W2,W0,[X1]",
            "STADD W2,[X1]",
            "STADDL W2,[X1]",
            "SWPA W2,W0,[X1]",
            "CASAL W0,W2,[X1]",
            "DMB ISHLD",
            "ADRP X1,:got:x",
            "ADRP X1,x",
            "ADD X1,X1,:lo12:x",
            "EOR W3,W0,W0",
            "CMP W0,#1",
            "SUBS W4,W0,W1",
            "MOV W2,#1",
            "CBNZ W5,L0",
            "B.NE L1",
            "B L2",
            "LDRB W0,[X1]",
            "STLRH W0,[X1]",
        ] {
            let i = parse_instruction(s).unwrap();
            assert_eq!(render_instruction(&i), s, "{i:?}");
        }
    }

    #[test]
    fn lower_case_objdump_syntax() {
        let i = parse_instruction("ldr\tw9, [x8, #0x0]").unwrap();
        assert_eq!(render_instruction(&i), "LDR W9,[X8]");
        let i = parse_instruction("mov w10, #0x1").unwrap();
        assert_eq!(render_instruction(&i), "MOV W10,#1");
    }

    #[test]
    fn unsupported_mnemonics_are_rejected() {
        assert!(matches!(
            parse_instruction("LDXP X0,X1,[X2]"),
            Err(Error::UnknownMnemonic(m)) if m == "LDXP"
        ));
        assert!(matches!(parse_instruction("LDR W0,[X1,#8]"), Err(Error::BadOperands(_))));
    }

    #[test]
    fn smallest_store_program() {
        let text = "AArch64 ST\n{ 0:X1=x; }\n P0 ;\n MOV W0,#1 ;\n STR W0,[X1] ;\nexists (x=1)\n";
        let t = parse_asm_litmus(text, Isa::AArch64Sub).unwrap();
        assert_eq!(t.threads.len(), 1);
        assert_eq!(t.threads[0].memory_ops(), 1);
    }

    #[test]
    fn unresolved_label() {
        let text = "AArch64 T\n{ 0:X1=x; }\n P0 ;\n CBNZ W0,Lnowhere ;\nexists (x=0)\n";
        assert!(matches!(
            parse_asm_litmus(text, Isa::AArch64Sub),
            Err(Error::UnresolvedLabel(l)) if l == "Lnowhere"
        ));
    }
}
