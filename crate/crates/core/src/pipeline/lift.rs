use std::collections::{BTreeMap, BTreeSet};

use super::disasm::{Disassembly, SymbolMap};
use super::prepare::{function_name, unit_globals};
use crate::error::Error;
use crate::litmus::{
    build_thread, check_observables, Dialect, FinalPredicate, InitEntry, InitState, InitTarget, Isa,
    LitmusTest, Location, Observable, Prop, Value, META_PERSISTED,
};
use crate::transform::{optimize_asm, OptStats, PeepholeRule};

/// Rename register atoms to the globals the compiled code stores them to.
/// Atoms with no counterpart in the compiled test become `True`.
fn map_prop(p: &Prop, globals: &BTreeSet<Location>) -> Prop {
    match p {
        Prop::True => Prop::True,
        Prop::Atom(o, v) => {
            let target = match o {
                Observable::Reg { thread, name } => Location::new(format!("P{thread}_{name}")),
                Observable::Loc(l) => l.clone(),
            };
            if globals.contains(&target) {
                Prop::Atom(Observable::Loc(target), v.clone())
            } else {
                Prop::True
            }
        }
        Prop::Not(q) => Prop::Not(Box::new(map_prop(q, globals))),
        Prop::And(ps) => Prop::And(ps.iter().map(|q| map_prop(q, globals)).collect()),
        Prop::Or(ps) => Prop::Or(ps.iter().map(|q| map_prop(q, globals)).collect()),
    }
}

/// Build the compiled test for `src` from a parsed listing, then run the
/// peephole `rules` over it. Function `P<i>` becomes thread `i`.
pub fn asm_to_litmus(
    listing: &Disassembly,
    symbols: &SymbolMap,
    src: &LitmusTest,
    rules: &[PeepholeRule],
) -> Result<(LitmusTest, OptStats), Error> {
    let globals = unit_globals(src)?;
    let names: BTreeSet<Location> = globals.iter().map(|(l, _)| l.clone()).collect();
    if let Some(unknown) = symbols.symbols().into_iter().find(|s| !names.contains(*s)) {
        return Err(Error::UnmappedAddress(unknown.to_string()));
    }
    let entries = globals
        .iter()
        .map(|(l, w)| InitEntry {
            target: InitTarget::Loc(l.clone()),
            value: src.init.location(l).map(|e| e.value.clone()).unwrap_or(Value::Int(0)),
            width: *w,
        })
        .collect();
    let init = InitState {
        entries,
        layout: src.init.layout.clone(),
    };
    let mut threads = Vec::with_capacity(src.threads.len());
    for t in &src.threads {
        let name = function_name(t.id);
        let body = listing
            .functions
            .get(&name)
            .ok_or_else(|| Error::InvalidTest(format!("listing has no function `{name}`")))?;
        threads.push(build_thread(t.id, body.clone(), &init)?);
    }
    let mut metadata = BTreeMap::new();
    if let Some(p) = src.metadata.get(META_PERSISTED) {
        metadata.insert(META_PERSISTED.to_string(), p.clone());
    }
    let mut test = LitmusTest {
        name: src.name.clone(),
        dialect: Dialect::Asm(Isa::AArch64Sub),
        init,
        threads,
        final_pred: FinalPredicate {
            quantifier: src.final_pred.quantifier,
            prop: map_prop(&src.final_pred.prop, &names),
        },
        metadata,
    };
    check_observables(&test)?;
    test.normalize();
    optimize_asm(&test, rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{compare_outcomes, infer_state_mapping};
    use crate::exec::{simulate, SimOptions};
    use crate::fixtures::{LB, MP};
    use crate::litmus::parse_litmus;
    use crate::model::lookup_model;
    use crate::pipeline::{lower_aarch64, parse_assembly, LoweringOptions};

    fn compile(src: &str) -> (LitmusTest, LitmusTest, OptStats) {
        let s = parse_litmus(src).unwrap();
        let text = lower_aarch64(&s, &LoweringOptions::default()).unwrap();
        let (d, m) = parse_assembly(&text).unwrap();
        let (t, stats) = asm_to_litmus(&d, &m, &s, &PeepholeRule::ALL).unwrap();
        (s, t, stats)
    }

    #[test]
    fn compiled_lb_is_positive() {
        let (s, t, stats) = compile(LB);
        assert!(stats.events_after < stats.events_before);
        assert_eq!(t.threads[0].memory_ops(), 3);
        let opts = SimOptions::default();
        let so = simulate(&s, &lookup_model("rc11_lite").unwrap(), &opts).unwrap();
        let to = simulate(&t, &lookup_model("armv8_lite").unwrap(), &opts).unwrap();
        assert_eq!(to.outcomes.len(), 4);
        let m = infer_state_mapping(&s, &t, &vec![]).unwrap();
        let r = compare_outcomes(&so.outcomes, &to.outcomes, &m).unwrap();
        assert!(r.is_positive());
        let again = parse_litmus(&t.render()).unwrap();
        assert_eq!(again.render(), t.render());
    }

    #[test]
    fn straight_line_store_becomes_one_instruction() {
        let src = "C ST\n{ }\nP0 (atomic_int* x) {\n  atomic_store_explicit(x, 0, memory_order_relaxed);\n}\nexists (x=0)\n";
        let (_, t, _) = compile(src);
        let body = t.threads[0].asm_body().unwrap();
        assert_eq!(body.len(), 1, "{}", t.render());
    }

    #[test]
    fn compiled_mp_agrees_with_source() {
        let (s, t, _) = compile(MP);
        let opts = SimOptions::default();
        let so = simulate(&s, &lookup_model("rc11_lite").unwrap(), &opts).unwrap();
        let to = simulate(&t, &lookup_model("armv8_lite").unwrap(), &opts).unwrap();
        let m = infer_state_mapping(&s, &t, &vec![]).unwrap();
        assert!(!compare_outcomes(&so.outcomes, &to.outcomes, &m).unwrap().is_positive());
    }

    #[test]
    fn foreign_symbols_are_unmapped() {
        let s = parse_litmus(LB).unwrap();
        let (d, m) = parse_assembly("P0:\n\tadrp\tx8, :got:z\n\tldr\tx8, [x8, :got_lo12:z]\n\tret\nP1:\n\tret\n").unwrap();
        assert!(matches!(asm_to_litmus(&d, &m, &s, &[]), Err(Error::UnmappedAddress(z)) if z == "z"));
    }
}
