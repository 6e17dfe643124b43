use std::collections::BTreeSet;
use std::fmt::Write;

use crate::error::Error;
use crate::litmus::{Expr, LitmusTest, Location, MemOrder, Observable, Statement, Width};

/// Name of the function compiled for thread `tid`.
pub fn function_name(tid: usize) -> String {
    format!("P{tid}")
}

/// Registers the final predicate observes, each paired with the global the
/// compiled thread stores it to before returning.
pub fn observed_registers(test: &LitmusTest) -> Vec<(usize, String, Location)> {
    let mut obs = BTreeSet::new();
    test.final_pred.prop.observables(&mut obs);
    obs.into_iter()
        .filter_map(|o| match o {
            Observable::Reg { thread, name } => {
                let global = Location::new(format!("P{thread}_{name}"));
                Some((thread, name, global))
            }
            Observable::Loc(_) => None,
        })
        .collect()
}

/// Every shared location the unit declares: initialised and referenced
/// locations, then the globals that receive observed registers.
pub(crate) fn unit_globals(test: &LitmusTest) -> Result<Vec<(Location, Width)>, Error> {
    let mut names = test.init.location_names();
    names.extend(test.referenced_locations());
    let mut out: Vec<(Location, Width)> = names
        .into_iter()
        .filter(|l| !l.is_got_slot())
        .map(|l| {
            let w = test.init.width_of(&l);
            (l, w)
        })
        .collect();
    for (tid, reg, global) in observed_registers(test) {
        if out.iter().any(|(l, _)| *l == global) {
            return Err(Error::NameCollision(global.to_string()));
        }
        let w = test.threads[tid].registers.get(&reg).copied().unwrap_or_default();
        out.push((global, w));
    }
    Ok(out)
}

pub(crate) fn c_type(w: Width) -> &'static str {
    match w {
        Width::W8 => "signed char",
        Width::W16 => "short",
        Width::W32 => "int",
        Width::W64 => "long",
    }
}

fn builtin_order(o: MemOrder) -> &'static str {
    match o {
        MemOrder::Na | MemOrder::Rlx => "__ATOMIC_RELAXED",
        MemOrder::Acq => "__ATOMIC_ACQUIRE",
        MemOrder::Rel => "__ATOMIC_RELEASE",
        MemOrder::AcqRel => "__ATOMIC_ACQ_REL",
        MemOrder::Sc => "__ATOMIC_SEQ_CST",
    }
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Const(c) => c.to_string(),
        Expr::Reg(r) => r.clone(),
        Expr::Add(a, b) => format!("({} + {})", expr(a), expr(b)),
        Expr::Eq(a, b) => format!("({} == {})", expr(a), expr(b)),
    }
}

fn statement(s: &Statement, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let line = match s {
        Statement::Store { loc, value, order: MemOrder::Na } => format!("{loc} = {};", expr(value)),
        Statement::Store { loc, value, order } => {
            format!("__atomic_store_n(&{loc}, {}, {});", expr(value), builtin_order(*order))
        }
        Statement::Load { reg, loc, order: MemOrder::Na } => format!("{reg} = {loc};"),
        Statement::Load { reg, loc, order } => {
            format!("{reg} = __atomic_load_n(&{loc}, {});", builtin_order(*order))
        }
        Statement::FetchAdd { reg, loc, operand, order } => {
            let call = format!("__atomic_fetch_add(&{loc}, {}, {})", expr(operand), builtin_order(*order));
            match reg {
                Some(r) => format!("{r} = {call};"),
                None => format!("{call};"),
            }
        }
        Statement::Exchange { reg, loc, value, order } => {
            let call = format!("__atomic_exchange_n(&{loc}, {}, {})", expr(value), builtin_order(*order));
            match reg {
                Some(r) => format!("{r} = {call};"),
                None => format!("{call};"),
            }
        }
        Statement::Fence(order) => format!("__atomic_thread_fence({});", builtin_order(*order)),
        Statement::Assign { reg, expr: e } => format!("{reg} = {};", expr(e)),
        Statement::If { cond, then_body, else_body } => {
            let _ = writeln!(out, "{pad}if ({}) {{", expr(cond));
            for s in then_body {
                statement(s, depth + 1, out);
            }
            if !else_body.is_empty() {
                let _ = writeln!(out, "{pad}}} else {{");
                for s in else_body {
                    statement(s, depth + 1, out);
                }
            }
            let _ = writeln!(out, "{pad}}}");
            return;
        }
    };
    let _ = writeln!(out, "{pad}{line}");
}

/// Render a source test as a C translation unit: one `void P<i>(void)` per
/// thread over `extern` globals, using the `__atomic` builtins. Observed
/// registers are stored to `P<i>_<reg>` globals at the end of each thread.
pub fn prepare_source(test: &LitmusTest) -> Result<String, Error> {
    if !test.is_source() {
        return Err(Error::InvalidTest("only source tests can be compiled".into()));
    }
    if test.threads.is_empty() {
        return Err(Error::InvalidTest(format!("{} has no threads", test.name)));
    }
    let globals = unit_globals(test)?;
    let observed = observed_registers(test);
    let mut out = format!("// {}\n// observables:", test.name);
    for o in test.observables() {
        let shown = match &o {
            Observable::Reg { thread, name } => format!("{o}=P{thread}_{name}"),
            Observable::Loc(_) => o.to_string(),
        };
        out.push(' ');
        out.push_str(&shown);
    }
    out.push_str("\n\n");
    for (l, w) in &globals {
        let _ = writeln!(out, "extern {} {l};", c_type(*w));
    }
    for t in &test.threads {
        let body = t
            .source_body()
            .ok_or_else(|| Error::UnsupportedConstruct("assembly thread in a source test".into()))?;
        let _ = write!(out, "\nvoid {}(void) {{\n", function_name(t.id));
        for (reg, w) in &t.registers {
            let _ = writeln!(out, "  {} {reg} = 0;", c_type(*w));
        }
        for s in body {
            statement(s, 1, &mut out);
        }
        for (_, reg, global) in observed.iter().filter(|(tid, _, _)| *tid == t.id) {
            let _ = writeln!(out, "  {global} = {reg};");
        }
        out.push_str("}\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{LB, MP};
    use crate::litmus::parse_litmus;
    use crate::transform::{persist_locals, PersistencePlan};

    #[test]
    fn message_passing_unit() {
        let t = parse_litmus(MP).unwrap();
        let unit = prepare_source(&t).unwrap();
        assert!(unit.contains("__atomic_store_n(&y, 2, __ATOMIC_RELEASE);"), "{unit}");
        assert!(unit.contains("r0 = __atomic_load_n(&y, __ATOMIC_ACQUIRE);"), "{unit}");
        assert!(unit.contains("void P1(void) {"));
        assert!(unit.contains("  P1_r1 = r1;"));
        assert!(unit.starts_with("// MP\n// observables: 1:r0=P1_r0 1:r1=P1_r1\n"), "{unit}");
        assert_eq!(unit, prepare_source(&t).unwrap());
    }

    #[test]
    fn zero_threads_is_rejected() {
        let mut t = parse_litmus(LB).unwrap();
        t.threads.clear();
        assert!(matches!(prepare_source(&t), Err(Error::InvalidTest(_))));
    }

    #[test]
    fn persisted_globals_are_declared() {
        let t = parse_litmus(LB).unwrap();
        let p = persist_locals(&t, &PersistencePlan::auto(&t)).unwrap();
        let unit = prepare_source(&p).unwrap();
        assert!(unit.contains("extern int q0_r0;"), "{unit}");
        assert!(unit.contains("  q1_r0 = r0;"), "{unit}");
    }
}
