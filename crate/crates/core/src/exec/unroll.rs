use std::collections::BTreeMap;

use crate::error::Error;
use crate::litmus::{AsmLine, Instruction, LitmusTest, ThreadBody, META_UNROLL};

/// Label of the block that makes paths beyond the unroll bound infeasible.
pub(crate) const STUCK_LABEL: &str = "__stuck";
const END_LABEL: &str = "__end";
const COPY_SEP: &str = "__u";

/// Iteration encoded in a label produced by [`unroll`].
pub(crate) fn label_iteration(label: &str) -> usize {
    label
        .rsplit_once(COPY_SEP)
        .and_then(|(_, i)| i.parse().ok())
        .unwrap_or(0)
}

/// Replace backward branches by `factor` straight-line copies of the thread
/// body. A backward branch taken from the last copy lands on `STUCK`.
pub fn unroll(test: &LitmusTest, factor: usize) -> Result<LitmusTest, Error> {
    if factor == 0 {
        return Err(Error::FactorZero);
    }
    let mut out = test.clone();
    let mut changed = false;
    for t in &mut out.threads {
        if let ThreadBody::Asm(body) = &t.body {
            if let Some(new) = unroll_body(body, factor) {
                t.body = ThreadBody::Asm(new);
                changed = true;
            }
        }
    }
    if changed {
        out.metadata.insert(META_UNROLL.into(), factor.to_string());
    }
    Ok(out)
}

fn unroll_body(body: &[AsmLine], factor: usize) -> Option<Vec<AsmLine>> {
    let labels: BTreeMap<&str, usize> = body
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            AsmLine::Label(s) => Some((s.as_str(), i)),
            _ => None,
        })
        .collect();
    let is_backward = |pos: usize, target: &str| labels.get(target).is_some_and(|&t| t <= pos);
    let has_loop = body.iter().enumerate().any(|(i, l)| {
        matches!(l, AsmLine::Instr(ins) if ins.branch_target().is_some_and(|t| is_backward(i, t)))
    });
    if !has_loop {
        return None;
    }
    let rename = |l: &str, copy: usize| {
        if copy == 0 {
            l.to_string()
        } else {
            format!("{l}{COPY_SEP}{copy}")
        }
    };
    let mut out = Vec::new();
    for copy in 0..factor {
        for (pos, line) in body.iter().enumerate() {
            match line {
                AsmLine::Label(l) => out.push(AsmLine::Label(rename(l, copy))),
                AsmLine::Instr(ins) => {
                    let mut ins = ins.clone();
                    if let Some(target) = ins.branch_target_mut() {
                        *target = if is_backward(pos, target) {
                            if copy + 1 < factor {
                                rename(target, copy + 1)
                            } else {
                                STUCK_LABEL.to_string()
                            }
                        } else {
                            rename(target, copy)
                        };
                    }
                    out.push(AsmLine::Instr(ins));
                }
            }
        }
        out.push(AsmLine::Instr(Instruction::B {
            target: END_LABEL.into(),
        }));
    }
    out.push(AsmLine::Label(STUCK_LABEL.into()));
    out.push(AsmLine::Instr(Instruction::Stuck));
    out.push(AsmLine::Label(END_LABEL.into()));
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::parse_litmus;

    const RETRY: &str = "AArch64 RETRY\n{ 0:X1=x; }\n P0 ;\n L0: ;\n LDR W0,[X1] ;\n CBNZ W0,L0 ;\nexists (0:X0=0)\n";

    #[test]
    fn straight_line_code_is_unchanged() {
        let t = parse_litmus("AArch64 S\n{ 0:X1=x; }\n P0 ;\n MOV W0,#1 ;\n STR W0,[X1] ;\nexists (x=1)\n").unwrap();
        assert_eq!(unroll(&t, 2).unwrap(), t);
    }

    #[test]
    fn loop_copies_and_stuck_tail() {
        let t = parse_litmus(RETRY).unwrap();
        let u = unroll(&t, 2).unwrap();
        let body = u.threads[0].asm_body().unwrap();
        let loads = body
            .iter()
            .filter(|l| matches!(l, AsmLine::Instr(i) if i.is_memory_access()))
            .count();
        assert_eq!(loads, 2);
        assert!(body.contains(&AsmLine::Instr(Instruction::Stuck)));
        // The rendered form parses back.
        let again = parse_litmus(&u.render()).unwrap();
        assert_eq!(again.threads, u.threads);
    }

    #[test]
    fn zero_factor() {
        let t = parse_litmus(RETRY).unwrap();
        assert!(matches!(unroll(&t, 0), Err(Error::FactorZero)));
    }
}
