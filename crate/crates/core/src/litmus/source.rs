use std::collections::{BTreeMap, BTreeSet};

use super::lex::{lex, type_width, Parser, Tok};
use super::{
    render_final, render_metadata, Dialect, Expr, Isa, LitmusTest, MemOrder, Observable,
    Statement, Thread, ThreadBody, Width,
};
use crate::error::Error;
use crate::litmus::{InitTarget, Location};

/// Parse a litmus file of either dialect, choosing by its header keyword.
pub fn parse_litmus(text: &str) -> Result<LitmusTest, Error> {
    let (kw, _, _, _) = split_header(text)?;
    match kw.as_str() {
        "C" => parse_source_litmus(text),
        "AArch64" | "AARCH64" => super::parse_asm_litmus(text, Isa::AArch64Sub),
        "ABS" => super::parse_asm_litmus(text, Isa::AbstractIsa),
        _ => Err(Error::syntax(1, 1, "header keyword `C`, `AArch64` or `ABS`")),
    }
}

/// Returns (keyword, name, line number of the body start, body text).
pub(crate) fn split_header(text: &str) -> Result<(String, String, usize, &str), Error> {
    let mut offset = 0;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            offset += line.len();
            continue;
        }
        let mut parts = trimmed.splitn(2, char::is_whitespace);
        let kw = parts.next().unwrap_or_default().to_string();
        let name = parts.next().unwrap_or_default().trim().to_string();
        if name.is_empty() {
            return Err(Error::syntax(idx + 1, kw.len() + 1, "test name after header keyword"));
        }
        return Ok((kw, name, idx + 2, &text[offset + line.len()..]));
    }
    Err(Error::syntax(1, 1, "litmus header"))
}

pub fn parse_source_litmus(text: &str) -> Result<LitmusTest, Error> {
    let (kw, name, body_line, body) = split_header(text)?;
    if kw != "C" {
        return Err(Error::syntax(body_line - 1, 1, "header keyword `C`"));
    }
    let end_line = body_line + body.lines().count();
    let mut p = Parser::new(lex(body, body_line)?, end_line);
    let mut metadata = BTreeMap::new();
    p.metadata(&mut metadata);
    let init = p.init_block(false)?;
    p.metadata(&mut metadata);
    let mut threads = Vec::new();
    loop {
        match p.peek() {
            Some(Tok::Ident(s)) if thread_index(s).is_some() => {
                let id = thread_index(s).unwrap();
                if id != threads.len() {
                    return Err(p.err(format!("thread P{}", threads.len())));
                }
                p.next();
                threads.push(parse_thread(&mut p, id)?);
            }
            _ => break,
        }
    }
    if threads.is_empty() {
        return Err(p.err("thread P0"));
    }
    p.metadata(&mut metadata);
    let final_pred = p.final_predicate()?;
    let mut test = LitmusTest {
        name,
        dialect: Dialect::Source,
        init,
        threads,
        final_pred,
        metadata,
    };
    check_observables(&test)?;
    test.normalize();
    Ok(test)
}

pub(crate) fn thread_index(s: &str) -> Option<usize> {
    s.strip_prefix('P')?.parse().ok()
}

pub(crate) fn check_observables(test: &LitmusTest) -> Result<(), Error> {
    let mut obs = BTreeSet::new();
    test.final_pred.prop.observables(&mut obs);
    let locs: BTreeSet<Location> = test
        .referenced_locations()
        .into_iter()
        .chain(test.init.location_names())
        .chain(test.init.entries.iter().filter_map(|e| match &e.value {
            super::Value::Addr(l) | super::Value::Page(l) => Some(l.clone()),
            _ => None,
        }))
        .flat_map(|l| {
            let base = l.as_str().strip_suffix("@got").map(Location::new);
            std::iter::once(l).chain(base)
        })
        .collect();
    for o in obs {
        let ok = match &o {
            Observable::Reg { thread, name } => test
                .threads
                .get(*thread)
                .map(|t| t.registers.contains_key(name))
                .unwrap_or(false),
            Observable::Loc(l) => locs.contains(l),
        };
        if !ok {
            return Err(Error::UndeclaredObservable(o.to_string()));
        }
    }
    Ok(())
}

fn parse_thread(p: &mut Parser, id: usize) -> Result<Thread, Error> {
    if p.eat_punct("(") {
        let mut depth = 1;
        while depth > 0 {
            match p.next() {
                Some(Tok::Punct("(")) => depth += 1,
                Some(Tok::Punct(")")) => depth -= 1,
                None => return Err(p.err("`)`")),
                _ => {}
            }
        }
    }
    let mut regs = BTreeMap::new();
    let body = parse_block(p, &mut regs)?;
    Ok(Thread {
        id,
        body: ThreadBody::Source(body),
        registers: regs,
    })
}

fn parse_block(p: &mut Parser, regs: &mut BTreeMap<String, Width>) -> Result<Vec<Statement>, Error> {
    p.expect_punct("{")?;
    let mut out = Vec::new();
    while !p.eat_punct("}") {
        if p.at_end() {
            return Err(p.err("`}`"));
        }
        if p.eat_punct(";") {
            continue;
        }
        if let Some(s) = parse_statement(p, regs)? {
            out.push(s);
        }
    }
    Ok(out)
}

fn parse_loc(p: &mut Parser) -> Result<Location, Error> {
    p.eat_punct("&");
    Ok(Location::new(p.ident()?))
}

fn parse_order(p: &mut Parser) -> Result<MemOrder, Error> {
    let s = p.ident()?;
    match MemOrder::from_name(&s) {
        Some(MemOrder::Na) | None => Err(p.err("a memory_order_* constant")),
        Some(o) => Ok(o),
    }
}

enum Call {
    Load(Location, MemOrder),
    FetchAdd(Location, Expr, MemOrder),
    Exchange(Location, Expr, MemOrder),
}

fn parse_call(p: &mut Parser, regs: &mut BTreeMap<String, Width>) -> Result<Option<Call>, Error> {
    let f = match p.peek() {
        Some(Tok::Ident(s)) => s.clone(),
        _ => return Ok(None),
    };
    let call = match f.as_str() {
        "atomic_load_explicit" | "atomic_load" => {
            p.next();
            p.expect_punct("(")?;
            let loc = parse_loc(p)?;
            let order = if f.ends_with("_explicit") {
                p.expect_punct(",")?;
                parse_order(p)?
            } else {
                MemOrder::Sc
            };
            p.expect_punct(")")?;
            Call::Load(loc, order)
        }
        "atomic_fetch_add_explicit" | "atomic_fetch_add" | "atomic_exchange_explicit"
        | "atomic_exchange" => {
            p.next();
            p.expect_punct("(")?;
            let loc = parse_loc(p)?;
            p.expect_punct(",")?;
            let e = parse_expr(p, regs)?;
            let order = if f.ends_with("_explicit") {
                p.expect_punct(",")?;
                parse_order(p)?
            } else {
                MemOrder::Sc
            };
            p.expect_punct(")")?;
            if f.starts_with("atomic_fetch_add") {
                Call::FetchAdd(loc, e, order)
            } else {
                Call::Exchange(loc, e, order)
            }
        }
        _ => return Ok(None),
    };
    Ok(Some(call))
}

fn parse_statement(
    p: &mut Parser,
    regs: &mut BTreeMap<String, Width>,
) -> Result<Option<Statement>, Error> {
    if p.eat_punct("*") {
        let loc = Location::new(p.ident()?);
        p.expect_punct("=")?;
        let value = parse_expr(p, regs)?;
        p.expect_punct(";")?;
        return Ok(Some(Statement::Store {
            loc,
            value,
            order: MemOrder::Na,
        }));
    }
    let head = match p.peek() {
        Some(Tok::Ident(s)) => s.clone(),
        _ => return Err(p.err("a statement")),
    };
    match head.as_str() {
        "if" => {
            p.next();
            p.expect_punct("(")?;
            let cond = parse_expr(p, regs)?;
            p.expect_punct(")")?;
            let then_body = parse_block(p, regs)?;
            let else_body = if p.is_ident("else") {
                p.next();
                parse_block(p, regs)?
            } else {
                Vec::new()
            };
            return Ok(Some(Statement::If {
                cond,
                then_body,
                else_body,
            }));
        }
        "atomic_store_explicit" | "atomic_store" => {
            p.next();
            p.expect_punct("(")?;
            let loc = parse_loc(p)?;
            p.expect_punct(",")?;
            let value = parse_expr(p, regs)?;
            let order = if head.ends_with("_explicit") {
                p.expect_punct(",")?;
                parse_order(p)?
            } else {
                MemOrder::Sc
            };
            p.expect_punct(")")?;
            p.expect_punct(";")?;
            return Ok(Some(Statement::Store { loc, value, order }));
        }
        "atomic_thread_fence" => {
            p.next();
            p.expect_punct("(")?;
            let order = parse_order(p)?;
            p.expect_punct(")")?;
            p.expect_punct(";")?;
            return Ok(Some(Statement::Fence(order)));
        }
        _ => {}
    }
    if let Some(call) = parse_call(p, regs)? {
        p.expect_punct(";")?;
        return Ok(Some(match call {
            Call::Load(..) => return Err(p.err("an assignment target for the load")),
            Call::FetchAdd(loc, operand, order) => Statement::FetchAdd {
                reg: None,
                loc,
                operand,
                order,
            },
            Call::Exchange(loc, value, order) => Statement::Exchange {
                reg: None,
                loc,
                value,
                order,
            },
        }));
    }
    // [type] reg [= rhs];
    let mut reg = p.ident()?;
    let mut declared = None;
    if let Some(w) = type_width(&reg) {
        declared = Some(w);
        reg = p.ident()?;
    }
    match declared {
        Some(w) => {
            regs.insert(reg.clone(), w);
        }
        None => {
            regs.entry(reg.clone()).or_default();
        }
    }
    if declared.is_some() && p.eat_punct(";") {
        return Ok(None);
    }
    p.expect_punct("=")?;
    let stmt = if p.eat_punct("*") {
        let loc = Location::new(p.ident()?);
        Statement::Load {
            reg,
            loc,
            order: MemOrder::Na,
        }
    } else if let Some(call) = parse_call(p, regs)? {
        match call {
            Call::Load(loc, order) => Statement::Load { reg, loc, order },
            Call::FetchAdd(loc, operand, order) => Statement::FetchAdd {
                reg: Some(reg),
                loc,
                operand,
                order,
            },
            Call::Exchange(loc, value, order) => Statement::Exchange {
                reg: Some(reg),
                loc,
                value,
                order,
            },
        }
    } else {
        let expr = parse_expr(p, regs)?;
        Statement::Assign { reg, expr }
    };
    p.expect_punct(";")?;
    Ok(Some(stmt))
}

fn parse_expr(p: &mut Parser, regs: &mut BTreeMap<String, Width>) -> Result<Expr, Error> {
    let lhs = parse_sum(p, regs)?;
    if p.eat_punct("==") {
        let rhs = parse_sum(p, regs)?;
        return Ok(Expr::eq(lhs, rhs));
    }
    Ok(lhs)
}

fn parse_sum(p: &mut Parser, regs: &mut BTreeMap<String, Width>) -> Result<Expr, Error> {
    let mut e = parse_atom(p, regs)?;
    while p.eat_punct("+") {
        let r = parse_atom(p, regs)?;
        e = Expr::add(e, r);
    }
    Ok(e)
}

fn parse_atom(p: &mut Parser, regs: &mut BTreeMap<String, Width>) -> Result<Expr, Error> {
    if p.eat_punct("(") {
        let e = parse_expr(p, regs)?;
        p.expect_punct(")")?;
        return Ok(e);
    }
    match p.peek() {
        Some(Tok::Ident(_)) => {
            let r = p.ident()?;
            regs.entry(r.clone()).or_default();
            Ok(Expr::Reg(r))
        }
        _ => Ok(Expr::Const(p.int()?)),
    }
}

pub(crate) fn render_expr(e: &Expr) -> String {
    fn go(e: &Expr, nested: bool) -> String {
        match e {
            Expr::Const(v) => v.to_string(),
            Expr::Reg(r) => r.clone(),
            Expr::Add(a, b) => {
                let rhs = match **b {
                    // `+` is left-associative: right operands that are sums need parens
                    Expr::Add(..) => format!("({})", go(b, false)),
                    _ => go(b, true),
                };
                format!("{} + {}", go(a, true), rhs)
            }
            Expr::Eq(a, b) => {
                let s = format!("{} == {}", go(a, false), go(b, false));
                if nested {
                    format!("({s})")
                } else {
                    s
                }
            }
        }
    }
    go(e, false)
}

fn render_stmt(s: &Statement, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    let line = match s {
        Statement::Store { loc, value, order } => {
            if *order == MemOrder::Na {
                format!("*{loc} = {};", render_expr(value))
            } else {
                format!(
                    "atomic_store_explicit({loc}, {}, {});",
                    render_expr(value),
                    order.c_name()
                )
            }
        }
        Statement::Load { reg, loc, order } => {
            if *order == MemOrder::Na {
                format!("{reg} = *{loc};")
            } else {
                format!("{reg} = atomic_load_explicit({loc}, {});", order.c_name())
            }
        }
        Statement::FetchAdd {
            reg,
            loc,
            operand,
            order,
        } => format!(
            "{}atomic_fetch_add_explicit({loc}, {}, {});",
            reg.as_ref().map(|r| format!("{r} = ")).unwrap_or_default(),
            render_expr(operand),
            order.c_name()
        ),
        Statement::Exchange {
            reg,
            loc,
            value,
            order,
        } => format!(
            "{}atomic_exchange_explicit({loc}, {}, {});",
            reg.as_ref().map(|r| format!("{r} = ")).unwrap_or_default(),
            render_expr(value),
            order.c_name()
        ),
        Statement::Fence(o) => format!("atomic_thread_fence({});", o.c_name()),
        Statement::Assign { reg, expr } => format!("{reg} = {};", render_expr(expr)),
        Statement::If {
            cond,
            then_body,
            else_body,
        } => {
            out.push_str(&format!("{pad}if ({}) {{\n", render_expr(cond)));
            for s in then_body {
                render_stmt(s, indent + 1, out);
            }
            if else_body.is_empty() {
                out.push_str(&format!("{pad}}}\n"));
            } else {
                out.push_str(&format!("{pad}}} else {{\n"));
                for s in else_body {
                    render_stmt(s, indent + 1, out);
                }
                out.push_str(&format!("{pad}}}\n"));
            }
            return;
        }
    };
    out.push_str(&pad);
    out.push_str(&line);
    out.push('\n');
}

pub(crate) fn thread_locations(t: &Thread) -> Vec<Location> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    if let ThreadBody::Source(b) = &t.body {
        for s in b {
            s.walk(&mut |s| match s {
                Statement::Store { loc, .. }
                | Statement::Load { loc, .. }
                | Statement::FetchAdd { loc, .. }
                | Statement::Exchange { loc, .. }
                    if seen.insert(loc.clone()) => {
                        out.push(loc.clone());
                    }
                _ => {}
            });
        }
    }
    out
}

pub(crate) fn render_source(test: &LitmusTest) -> String {
    let mut out = format!("C {}\n", test.name);
    render_metadata(test, &mut out);
    out.push_str("{\n");
    for e in &test.init.entries {
        if let InitTarget::Loc(l) = &e.target {
            out.push_str(&format!(
                "  {} {l} = {};\n",
                e.width.c_type(),
                super::render_value(&e.value)
            ));
        }
    }
    for lc in &test.init.layout {
        out.push_str(&format!("  layout({}, {}, {});\n", lc.first, lc.second, lc.offset));
    }
    out.push_str("}\n");
    for t in &test.threads {
        let params = thread_locations(t)
            .iter()
            .map(|l| format!("atomic_{}* {l}", test.init.width_of(l).c_type()))
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("\nP{} ({params}) {{\n", t.id));
        for (r, w) in &t.registers {
            out.push_str(&format!("  {} {r};\n", w.c_type()));
        }
        if let ThreadBody::Source(b) = &t.body {
            for s in b {
                render_stmt(s, 1, &mut out);
            }
        }
        out.push_str("}\n");
    }
    out.push('\n');
    out.push_str(&render_final(&test.final_pred));
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::MP;
    use crate::litmus::{Prop, Quantifier, Value};


    #[test]
    fn parses_message_passing() {
        let t = parse_source_litmus(MP).unwrap();
        assert_eq!(t.name, "MP");
        assert_eq!(t.threads.len(), 2);
        let mem: usize = t.threads.iter().map(|t| t.memory_ops()).sum();
        assert_eq!(mem, 4);
        assert_eq!(t.final_pred.quantifier, Quantifier::Exists);
        assert_eq!(
            t.final_pred.prop,
            Prop::And(vec![
                Prop::Atom(Observable::reg(1, "r0"), Value::Int(2)),
                Prop::Atom(Observable::reg(1, "r1"), Value::Int(0)),
            ])
        );
    }

    #[test]
    fn empty_exists_is_a_syntax_error() {
        let text = "C T\n{ x = 0; }\nP0 { *x = 1; }\nexists ()\n";
        assert!(matches!(parse_source_litmus(text), Err(Error::Syntax { .. })));
    }

    #[test]
    fn unknown_register_in_final_state() {
        let text = "C T\n{ x = 0; }\nP0 { *x = 1; }\nexists (0:r3=1)\n";
        assert!(matches!(
            parse_source_litmus(text),
            Err(Error::UndeclaredObservable(o)) if o == "0:r3"
        ));
    }

    #[test]
    fn implicit_zero_inits_are_made_explicit() {
        let text = "C T\n{ }\nP0 { *x = 1; int r0 = *y; }\nexists (0:r0=0)\n";
        let t = parse_source_litmus(text).unwrap();
        let names: Vec<_> = t.init.locations().map(|e| e.value.clone()).collect();
        assert_eq!(names, vec![Value::Int(0), Value::Int(0)]);
        let rendered = t.render();
        assert!(rendered.contains("int x = 0;"));
        assert!(rendered.contains("int y = 0;"));
    }

    #[test]
    fn expression_precedence_round_trips() {
        let text = "C T\n{ }\nP0 { int r0 = *x; *y = 1 + (r0 == r0) + -1; if (r0 == 1) { *x = 2; } else { *x = 3; } }\nexists (x=2)\n";
        let t = parse_source_litmus(text).unwrap();
        let again = parse_source_litmus(&t.render()).unwrap();
        assert_eq!(t, again);
    }
}
