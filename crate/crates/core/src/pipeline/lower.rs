//! Built-in AArch64 code generator used by reference profiles. It emits
//! assembler text in the layout `clang -S` produces, with every address
//! materialised through the GOT, so the rest of the pipeline treats it like
//! any other compiler output.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::prepare::{function_name, observed_registers};
use crate::error::Error;
use crate::litmus::{Expr, LitmusTest, Location, MemOrder, Statement, Thread, Width};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoweringOptions {
    /// Fold constant expressions, including `r == r`, before selecting
    /// instructions. Off keeps false dependencies in the output.
    pub fold_constants: bool,
}

impl Default for LoweringOptions {
    fn default() -> Self {
        LoweringOptions { fold_constants: true }
    }
}

const ADDR: u8 = 8;
const FIRST_TEMP: u8 = 9;
const LAST_TEMP: u8 = 15;
const MAX_LOCALS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val {
    Const(i64),
    Reg(u8),
}

fn view(n: u8, w: Width) -> String {
    match w {
        Width::W64 => format!("x{n}"),
        _ => format!("w{n}"),
    }
}

fn size_suffix(w: Width) -> &'static str {
    match w {
        Width::W8 => "b",
        Width::W16 => "h",
        _ => "",
    }
}

fn rmw_suffix(o: MemOrder) -> &'static str {
    match o {
        MemOrder::Na | MemOrder::Rlx => "",
        MemOrder::Acq => "a",
        MemOrder::Rel => "l",
        MemOrder::AcqRel | MemOrder::Sc => "al",
    }
}

struct Emitter<'a> {
    test: &'a LitmusTest,
    opts: LoweringOptions,
    fn_index: usize,
    locals: BTreeMap<&'a str, (u8, Width)>,
    next_temp: u8,
    next_label: usize,
    out: String,
}

impl<'a> Emitter<'a> {
    fn ins(&mut self, text: impl AsRef<str>) {
        let text = text.as_ref();
        match text.split_once(' ') {
            Some((m, ops)) => {
                let _ = writeln!(self.out, "\t{m}\t{ops}");
            }
            None => {
                let _ = writeln!(self.out, "\t{text}");
            }
        }
    }

    fn label(&mut self) -> String {
        let l = format!(".LBB{}_{}", self.fn_index, self.next_label);
        self.next_label += 1;
        l
    }

    fn temp(&mut self) -> Result<u8, Error> {
        if self.next_temp > LAST_TEMP {
            return Err(Error::UnsupportedConstruct("expression needs too many registers".into()));
        }
        self.next_temp += 1;
        Ok(self.next_temp - 1)
    }

    fn local(&self, reg: &str) -> Result<(u8, Width), Error> {
        self.locals
            .get(reg)
            .copied()
            .ok_or_else(|| Error::InvalidTest(format!("undeclared register `{reg}`")))
    }

    fn materialise(&mut self, loc: &Location) {
        self.ins(format!("adrp x{ADDR}, :got:{loc}"));
        self.ins(format!("ldr x{ADDR}, [x{ADDR}, :got_lo12:{loc}]"));
    }

    fn in_reg(&mut self, v: Val) -> Result<u8, Error> {
        match v {
            Val::Reg(r) => Ok(r),
            Val::Const(c) => {
                let t = self.temp()?;
                self.ins(format!("mov x{t}, #{c}"));
                Ok(t)
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Val, Error> {
        let fold = self.opts.fold_constants;
        match e {
            Expr::Const(c) => Ok(Val::Const(*c)),
            Expr::Reg(r) => Ok(Val::Reg(self.local(r)?.0)),
            Expr::Eq(a, b) if fold && matches!((&**a, &**b), (Expr::Reg(x), Expr::Reg(y)) if x == y) => {
                Ok(Val::Const(1))
            }
            Expr::Eq(a, b) => {
                if let (Expr::Reg(x), Expr::Reg(y)) = (&**a, &**b) {
                    if x == y {
                        let r = self.local(x)?.0;
                        let t = self.temp()?;
                        self.ins(format!("eor x{t}, x{r}, x{r}"));
                        self.ins(format!("add x{t}, x{t}, #1"));
                        return Ok(Val::Reg(t));
                    }
                }
                let (va, vb) = (self.expr(a)?, self.expr(b)?);
                if let (true, Val::Const(p), Val::Const(q)) = (fold, va, vb) {
                    return Ok(Val::Const((p == q) as i64));
                }
                let ra = self.in_reg(va)?;
                let t = self.temp()?;
                let done = self.label();
                self.ins(format!("mov x{t}, #0"));
                match vb {
                    Val::Const(q) => self.ins(format!("subs xzr, x{ra}, #{q}")),
                    Val::Reg(rb) => self.ins(format!("subs xzr, x{ra}, x{rb}")),
                }
                self.ins(format!("b.ne {done}"));
                self.ins(format!("mov x{t}, #1"));
                let _ = writeln!(self.out, "{done}:");
                Ok(Val::Reg(t))
            }
            Expr::Add(a, b) => {
                let (va, vb) = (self.expr(a)?, self.expr(b)?);
                match (va, vb) {
                    (Val::Const(p), Val::Const(q)) if fold => Ok(Val::Const(p.wrapping_add(q))),
                    (Val::Reg(r), Val::Const(c)) | (Val::Const(c), Val::Reg(r)) if c >= 0 => {
                        let t = self.temp()?;
                        self.ins(format!("add x{t}, x{r}, #{c}"));
                        Ok(Val::Reg(t))
                    }
                    _ => {
                        let (ra, rb) = (self.in_reg(va)?, self.in_reg(vb)?);
                        let t = self.temp()?;
                        self.ins(format!("add x{t}, x{ra}, x{rb}"));
                        Ok(Val::Reg(t))
                    }
                }
            }
        }
    }

    /// The register holding `e`, or the zero register for a zero constant.
    fn operand(&mut self, e: &Expr, w: Width) -> Result<String, Error> {
        match self.expr(e)? {
            Val::Const(0) => Ok(view_zr(w)),
            v => Ok(view(self.in_reg(v)?, w)),
        }
    }

    fn store(&mut self, loc: &Location, value: &str, order: MemOrder, w: Width) {
        let m = if matches!(order, MemOrder::Rel | MemOrder::Sc) { "stlr" } else { "str" };
        self.materialise(loc);
        self.ins(format!("{m}{} {value}, [x{ADDR}]", size_suffix(w)));
    }

    fn statement(&mut self, s: &Statement) -> Result<(), Error> {
        self.next_temp = FIRST_TEMP;
        match s {
            Statement::Store { loc, value, order } => {
                let w = self.test.init.width_of(loc);
                let v = self.operand(value, w)?;
                self.store(loc, &v, *order, w);
            }
            Statement::Load { reg, loc, order } => {
                let w = self.test.init.width_of(loc);
                let (r, _) = self.local(reg)?;
                let m = if matches!(order, MemOrder::Acq | MemOrder::Sc) { "ldar" } else { "ldr" };
                self.materialise(loc);
                self.ins(format!("{m}{} {}, [x{ADDR}]", size_suffix(w), view(r, w)));
            }
            Statement::FetchAdd { reg, loc, operand: value, order }
            | Statement::Exchange { reg, loc, value, order } => {
                let w = self.test.init.width_of(loc);
                let v = self.expr(value)?;
                let src = view(self.in_reg(v)?, w);
                let dst = match reg {
                    Some(r) => view(self.local(r)?.0, w),
                    None => view_zr(w),
                };
                let op = if matches!(s, Statement::FetchAdd { .. }) { "ldadd" } else { "swp" };
                self.materialise(loc);
                self.ins(format!("{op}{}{} {src}, {dst}, [x{ADDR}]", rmw_suffix(*order), size_suffix(w)));
            }
            Statement::Fence(order) => match order {
                MemOrder::Na | MemOrder::Rlx => {}
                MemOrder::Acq => self.ins("dmb ishld"),
                _ => self.ins("dmb ish"),
            },
            Statement::Assign { reg, expr } => {
                let (r, _) = self.local(reg)?;
                match self.expr(expr)? {
                    Val::Const(c) => self.ins(format!("mov x{r}, #{c}")),
                    Val::Reg(t) if t != r => self.ins(format!("mov x{r}, x{t}")),
                    Val::Reg(_) => {}
                }
            }
            Statement::If { cond, then_body, else_body } => match self.expr(cond)? {
                Val::Const(c) => {
                    for s in if c != 0 { then_body } else { else_body } {
                        self.statement(s)?;
                    }
                }
                Val::Reg(r) => {
                    let skip = self.label();
                    self.ins(format!("cbz x{r}, {skip}"));
                    for s in then_body {
                        self.statement(s)?;
                    }
                    if else_body.is_empty() {
                        let _ = writeln!(self.out, "{skip}:");
                    } else {
                        let end = self.label();
                        self.ins(format!("b {end}"));
                        let _ = writeln!(self.out, "{skip}:");
                        for s in else_body {
                            self.statement(s)?;
                        }
                        let _ = writeln!(self.out, "{end}:");
                    }
                }
            },
        }
        Ok(())
    }

    fn function(&mut self, t: &'a Thread, observed: &[(usize, String, Location)]) -> Result<(), Error> {
        let name = function_name(t.id);
        let body = t
            .source_body()
            .ok_or_else(|| Error::InvalidTest("only source tests can be lowered".into()))?;
        if t.registers.len() > MAX_LOCALS {
            return Err(Error::UnsupportedConstruct(format!("{name} uses more than {MAX_LOCALS} registers")));
        }
        self.locals = t
            .registers
            .iter()
            .enumerate()
            .map(|(i, (r, w))| (r.as_str(), (i as u8, *w)))
            .collect();
        self.next_label = 1;
        let _ = write!(
            self.out,
            "\t.globl\t{name}\n\t.p2align\t2\n\t.type\t{name},@function\n{name}:\n// %bb.0:\n"
        );
        for s in body {
            self.statement(s)?;
        }
        for (_, reg, global) in observed.iter().filter(|(tid, _, _)| *tid == t.id) {
            let (r, w) = self.local(reg)?;
            self.store(global, &view(r, w), MemOrder::Na, w);
        }
        self.ins("ret");
        let _ = write!(
            self.out,
            ".Lfunc_end{i}:\n\t.size\t{name}, .Lfunc_end{i}-{name}\n",
            i = self.fn_index
        );
        self.fn_index += 1;
        Ok(())
    }
}

fn view_zr(w: Width) -> String {
    match w {
        Width::W64 => "xzr".into(),
        _ => "wzr".into(),
    }
}

/// Compile a source test to AArch64 assembler text.
pub fn lower_aarch64(test: &LitmusTest, opts: &LoweringOptions) -> Result<String, Error> {
    if test.threads.is_empty() {
        return Err(Error::InvalidTest(format!("{} has no threads", test.name)));
    }
    let observed = observed_registers(test);
    let mut e = Emitter {
        test,
        opts: *opts,
        fn_index: 0,
        locals: BTreeMap::new(),
        next_temp: FIRST_TEMP,
        next_label: 1,
        out: format!("\t.text\n\t.file\t\"{}.c\"\n", test.name),
    };
    for t in &test.threads {
        e.function(t, &observed)?;
    }
    Ok(e.out)
}
