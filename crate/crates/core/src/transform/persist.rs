use std::collections::BTreeSet;
use std::str::FromStr;

use crate::error::Error;
use crate::litmus::{
    Expr, InitEntry, InitTarget, LitmusTest, Location, MemOrder, Statement, ThreadBody, Value,
    META_PERSISTED,
};

/// Which registers to copy to fresh globals at each thread's end.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PersistencePlan {
    pub prefix: String,
    /// Per thread: (register, global) pairs.
    pub threads: Vec<Vec<(String, Location)>>,
}

impl PersistencePlan {
    /// Every register each thread assigns, named `q<thread>_<register>`.
    pub fn auto(test: &LitmusTest) -> Self {
        let prefix = "q".to_string();
        let threads = test
            .threads
            .iter()
            .map(|t| {
                let mut regs = BTreeSet::new();
                if let ThreadBody::Source(b) = &t.body {
                    for s in b {
                        s.walk(&mut |s| {
                            let r = match s {
                                Statement::Load { reg, .. } | Statement::Assign { reg, .. } => Some(reg),
                                Statement::FetchAdd { reg, .. } | Statement::Exchange { reg, .. } => reg.as_ref(),
                                _ => None,
                            };
                            if let Some(r) = r {
                                regs.insert(r.clone());
                            }
                        });
                    }
                }
                regs.into_iter()
                    .map(|r| {
                        let g = Location::new(format!("{prefix}{}_{r}", t.id));
                        (r, g)
                    })
                    .collect()
            })
            .collect();
        PersistencePlan { prefix, threads }
    }

    pub fn is_empty(&self) -> bool {
        self.threads.iter().all(Vec::is_empty)
    }

    /// Parse a plan file: one `thread:register global` line per pair.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut plan = PersistencePlan {
            prefix: "q".into(),
            threads: Vec::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::syntax(n + 1, 1, "`thread:register global`");
            let (src, global) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
            let (t, r) = src.split_once(':').ok_or_else(bad)?;
            let t: usize = t.trim_start_matches('P').parse().map_err(|_| bad())?;
            if plan.threads.len() <= t {
                plan.threads.resize(t + 1, Vec::new());
            }
            plan.threads[t].push((r.to_string(), Location::new(global.trim())));
        }
        Ok(plan)
    }
}

/// `--persist-locals` setting.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PersistMode {
    Auto,
    #[default]
    Off,
    Plan(PersistencePlan),
}

impl PersistMode {
    pub fn plan_for(&self, test: &LitmusTest) -> PersistencePlan {
        match self {
            PersistMode::Auto => PersistencePlan::auto(test),
            PersistMode::Off => PersistencePlan::default(),
            PersistMode::Plan(p) => p.clone(),
        }
    }
}

impl FromStr for PersistMode {
    type Err = Error;

    /// `auto`, `off`, or a path to a plan file.
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "auto" => Ok(PersistMode::Auto),
            "off" => Ok(PersistMode::Off),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Ok(PersistMode::Plan(PersistencePlan::parse(&text)?))
            }
        }
    }
}

/// Append a non-atomic store of each planned register to its global at the
/// end of its thread. Globals are zero-initialised and recorded as
/// observables through the `persisted` metadata key.
pub fn persist_locals(test: &LitmusTest, plan: &PersistencePlan) -> Result<LitmusTest, Error> {
    if plan.is_empty() {
        return Ok(test.clone());
    }
    if !test.is_source() {
        return Err(Error::InvalidTest("local persistence applies to source tests".into()));
    }
    let mut taken: BTreeSet<Location> = test.init.location_names();
    taken.extend(test.referenced_locations());
    let mut out = test.clone();
    let mut added = test.persisted_globals();
    for (tid, pairs) in plan.threads.iter().enumerate() {
        if pairs.is_empty() {
            continue;
        }
        let thread = out
            .threads
            .get_mut(tid)
            .ok_or_else(|| Error::InvalidTest(format!("plan names missing thread P{tid}")))?;
        for (reg, global) in pairs {
            if !taken.insert(global.clone()) {
                return Err(Error::NameCollision(global.to_string()));
            }
            let width = thread.registers.get(reg).copied().unwrap_or_default();
            if let ThreadBody::Source(b) = &mut thread.body {
                b.push(Statement::Store {
                    loc: global.clone(),
                    value: Expr::Reg(reg.clone()),
                    order: MemOrder::Na,
                });
            }
            out.init.entries.push(InitEntry {
                target: InitTarget::Loc(global.clone()),
                value: Value::Int(0),
                width,
            });
            added.push(global.clone());
        }
    }
    let names: Vec<&str> = added.iter().map(Location::as_str).collect();
    out.metadata.insert(META_PERSISTED.into(), names.join(","));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::LB;
    use crate::litmus::{parse_litmus, Observable};

    #[test]
    fn auto_plan_names_each_register() {
        let t = parse_litmus(LB).unwrap();
        let p = persist_locals(&t, &PersistencePlan::auto(&t)).unwrap();
        let obs = p.observables();
        assert!(obs.contains(&Observable::loc("q0_r0")));
        assert!(obs.contains(&Observable::loc("q1_r0")));
        assert_eq!(p.threads[0].memory_ops(), 3);
        let again = parse_litmus(&p.render()).unwrap();
        assert_eq!(again.observables(), obs);
    }

    #[test]
    fn empty_plan_is_identity() {
        let t = parse_litmus(LB).unwrap();
        assert_eq!(persist_locals(&t, &PersistencePlan::default()).unwrap(), t);
    }

    #[test]
    fn collisions_are_rejected() {
        let t = parse_litmus(LB).unwrap();
        let plan = PersistencePlan::parse("0:r0 x\n").unwrap();
        assert!(matches!(persist_locals(&t, &plan), Err(Error::NameCollision(g)) if g == "x"));
    }
}
