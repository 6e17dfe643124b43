use std::collections::BTreeSet;

use super::enumerate::{enumerate_candidates, EnumOptions};
use super::{Event, Origin};
use crate::error::Error;
use crate::litmus::{LitmusTest, MemOrder};
use crate::model::{model_env, name, ModelSpec};
use crate::relation::Relation;

/// Conflicting access pairs (same location, different threads, at least one
/// write and one non-atomic access) left unordered by the model's
/// happens-before in some allowed execution. Models without a
/// happens-before definition use program order.
pub fn detect_races(test: &LitmusTest, model: &ModelSpec) -> Result<Vec<(Event, Event)>, Error> {
    detect_races_with(test, model, &EnumOptions::default())
}

pub fn detect_races_with(
    test: &LitmusTest,
    model: &ModelSpec,
    opts: &EnumOptions,
) -> Result<Vec<(Event, Event)>, Error> {
    let mut seen: BTreeSet<((usize, usize, usize), (usize, usize, usize))> = BTreeSet::new();
    let mut out = Vec::new();
    let key = |e: &Event| {
        let Origin { index, iteration } = e.origin;
        (e.thread.unwrap_or(usize::MAX), index, iteration)
    };
    enumerate_candidates(test, opts, &mut |c| {
        let verdict = crate::model::check_model(model, &c)?;
        if !verdict.allowed {
            return Ok(());
        }
        let hb: Relation = match &model.happens_before {
            Some(h) => model_env(model, &c)?.eval(&name(h))?,
            None => c.po.clone(),
        };
        for a in &c.events {
            for b in &c.events {
                if a.id >= b.id || a.is_init() || b.is_init() || a.thread == b.thread {
                    continue;
                }
                if a.loc.is_none() || a.loc != b.loc {
                    continue;
                }
                if !(a.kind.is_write() || b.kind.is_write()) {
                    continue;
                }
                if a.order() != Some(MemOrder::Na) && b.order() != Some(MemOrder::Na) {
                    continue;
                }
                if hb.contains(a.id, b.id) || hb.contains(b.id, a.id) {
                    continue;
                }
                if seen.insert((key(a), key(b))) {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        Ok(())
    })?;
    Ok(out)
}
