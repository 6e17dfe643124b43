//! Two-phase enumeration: choose reads-from structurally, then solve values
//! by propagation and enumerate coherence orders over the resolved writes.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use super::paths::{thread_paths, ThreadPath};
use super::sym::{Eval, Sym};
use super::unroll::unroll;
use super::{Annot, CandidateExecution, Event, EventKind, Origin};
use crate::error::Error;
use crate::litmus::{InitTarget, LitmusTest, Location, Value, Width, META_UNROLL};
use crate::relation::Relation;

#[derive(Debug, Clone)]
pub struct EnumOptions {
    /// Abort with `CandidateExplosion` after this many candidates.
    pub cap: u64,
    /// Abort with `Timeout` after this much wall-clock time.
    pub timeout: Option<Duration>,
    /// Loop unroll factor, unless the test records its own.
    pub unroll: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions {
            cap: 1_000_000,
            timeout: Some(Duration::from_secs(120)),
            unroll: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnumStats {
    /// Reads-from assignments examined.
    pub explored: u64,
    /// Complete candidates produced.
    pub candidates: u64,
}

struct GEvent {
    thread: Option<usize>,
    kind: EventKind,
    addr: Option<Sym>,
    value: Option<Sym>,
    width: Width,
    annot: Annot,
    origin: Origin,
    static_loc: Option<Location>,
}

/// Everything about one choice of thread paths that does not depend on rf.
struct Skeleton {
    events: Vec<GEvent>,
    init_writes: usize,
    reads: Vec<usize>,
    /// Candidate rf sources for each entry of `reads`.
    sources: Vec<Vec<usize>>,
    constraints: Vec<Sym>,
    regs: Vec<BTreeMap<String, Sym>>,
    choices: Vec<Vec<bool>>,
    po: Relation,
    rmw: Relation,
    addr: Relation,
    data: Relation,
    ctrl: Relation,
}

struct Budget {
    cap: u64,
    deadline: Option<(Instant, Duration)>,
    stats: EnumStats,
}

impl Budget {
    fn tick_explored(&mut self) -> Result<(), Error> {
        self.stats.explored += 1;
        if self.stats.explored + self.stats.candidates > self.cap {
            return Err(Error::CandidateExplosion(self.stats.explored + self.stats.candidates));
        }
        if self.stats.explored.is_multiple_of(256) {
            if let Some((deadline, budget)) = self.deadline {
                if Instant::now() >= deadline {
                    return Err(Error::Timeout(budget.as_secs_f64()));
                }
            }
        }
        Ok(())
    }

    fn tick_candidate(&mut self) -> Result<(), Error> {
        self.stats.candidates += 1;
        if self.stats.explored + self.stats.candidates > self.cap {
            return Err(Error::CandidateExplosion(self.stats.explored + self.stats.candidates));
        }
        Ok(())
    }
}

/// Stream every candidate execution of `test` into `sink`.
pub fn enumerate_candidates(
    test: &LitmusTest,
    opts: &EnumOptions,
    sink: &mut dyn FnMut(CandidateExecution) -> Result<(), Error>,
) -> Result<EnumStats, Error> {
    let factor = test
        .metadata
        .get(META_UNROLL)
        .and_then(|s| s.parse().ok())
        .unwrap_or(opts.unroll);
    let test = unroll(test, factor)?;
    let mut budget = Budget {
        cap: opts.cap,
        deadline: opts.timeout.map(|d| (Instant::now() + d, d)),
        stats: EnumStats::default(),
    };
    let per_thread: Vec<Vec<ThreadPath>> = test
        .threads
        .iter()
        .map(|t| {
            thread_paths(t, &test.init)
                .into_iter()
                .filter(|p| !p.stuck)
                .collect()
        })
        .collect();
    if per_thread.iter().any(Vec::is_empty) {
        return Ok(budget.stats);
    }
    let init_locs: BTreeSet<Location> = test.init.location_names();
    let mut pick = vec![0usize; per_thread.len()];
    loop {
        let paths: Vec<&ThreadPath> = pick.iter().zip(&per_thread).map(|(&i, ps)| &ps[i]).collect();
        let sk = skeleton(&test, &paths);
        enumerate_rf(&sk, &init_locs, &mut budget, sink)?;
        // Advance the odometer over path choices.
        let mut t = pick.len();
        loop {
            if t == 0 {
                return Ok(budget.stats);
            }
            t -= 1;
            pick[t] += 1;
            if pick[t] < per_thread[t].len() {
                break;
            }
            pick[t] = 0;
        }
    }
}

fn skeleton(test: &LitmusTest, paths: &[&ThreadPath]) -> Skeleton {
    let mut events = Vec::new();
    for e in &test.init.entries {
        if let InitTarget::Loc(l) = &e.target {
            events.push(GEvent {
                thread: None,
                kind: EventKind::W,
                addr: Some(Sym::Val(Value::Addr(l.clone()))),
                value: Some(Sym::Val(e.value.clone())),
                width: e.width,
                annot: Annot::Init,
                origin: Origin::default(),
                static_loc: Some(l.clone()),
            });
        }
    }
    let init_writes = events.len();
    let mut deps: Vec<(usize, [BTreeSet<usize>; 3])> = Vec::new();
    let mut constraints = Vec::new();
    let mut regs = Vec::new();
    let mut ranges = Vec::new();
    for (t, p) in paths.iter().enumerate() {
        let base = events.len();
        for e in &p.events {
            let addr = e.addr.as_ref().map(|a| a.rebase(base));
            let static_loc = match &addr {
                Some(Sym::Val(Value::Addr(l))) => Some(l.clone()),
                _ => None,
            };
            let shift = |s: &BTreeSet<usize>| s.iter().map(|k| k + base).collect::<BTreeSet<_>>();
            deps.push((
                events.len(),
                [shift(&e.addr_deps), shift(&e.data_deps), shift(&e.ctrl_deps)],
            ));
            events.push(GEvent {
                thread: Some(t),
                kind: e.kind,
                addr,
                value: e.value.as_ref().map(|v| v.rebase(base)),
                width: e.width,
                annot: e.annot,
                origin: e.origin,
                static_loc,
            });
        }
        ranges.push(base..events.len());
        constraints.extend(p.constraints.iter().map(|c| c.rebase(base)));
        regs.push(p.regs.iter().map(|(k, v)| (k.clone(), v.rebase(base))).collect());
    }
    let n = events.len();
    let mut po = Relation::empty(n);
    let mut rmw = Relation::empty(n);
    for r in &ranges {
        for a in r.clone() {
            for b in a + 1..r.end {
                po.insert(a, b);
            }
            if events[a].kind == EventKind::RmwR
                && a + 1 < r.end
                && events[a + 1].kind == EventKind::RmwW
            {
                rmw.insert(a, a + 1);
            }
        }
    }
    let (mut addr, mut data, mut ctrl) = (Relation::empty(n), Relation::empty(n), Relation::empty(n));
    for (e, [a, d, c]) in &deps {
        for &r in a {
            addr.insert(r, *e);
        }
        if events[*e].kind.is_write() {
            for &r in d {
                data.insert(r, *e);
            }
        }
        for &r in c {
            ctrl.insert(r, *e);
        }
    }
    let reads: Vec<usize> = (0..n).filter(|&i| events[i].kind.is_read()).collect();
    let sources = reads
        .iter()
        .map(|&r| {
            (0..n)
                .filter(|&w| {
                    let we = &events[w];
                    if !we.kind.is_write() {
                        return false;
                    }
                    // A read never sees its own thread's later writes.
                    if we.thread.is_some() && we.thread == events[r].thread && w > r {
                        return false;
                    }
                    match (&events[r].static_loc, &we.static_loc) {
                        (Some(a), Some(b)) => a == b,
                        _ => true,
                    }
                })
                .collect()
        })
        .collect();
    Skeleton {
        events,
        init_writes,
        reads,
        sources,
        constraints,
        regs,
        choices: paths.iter().map(|p| p.choices.clone()).collect(),
        po,
        rmw,
        addr,
        data,
        ctrl,
    }
}

fn enumerate_rf(
    sk: &Skeleton,
    init_locs: &BTreeSet<Location>,
    budget: &mut Budget,
    sink: &mut dyn FnMut(CandidateExecution) -> Result<(), Error>,
) -> Result<(), Error> {
    if sk.sources.iter().any(Vec::is_empty) {
        return Ok(());
    }
    let mut choice = vec![0usize; sk.reads.len()];
    loop {
        budget.tick_explored()?;
        let rf: Vec<(usize, usize)> = sk
            .reads
            .iter()
            .zip(&choice)
            .zip(&sk.sources)
            .map(|((&r, &c), src)| (src[c], r))
            .collect();
        if let Some(solved) = solve(sk, &rf, init_locs) {
            enumerate_co(sk, &rf, &solved, budget, sink)?;
        }
        let mut i = choice.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < sk.sources[i].len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

struct Solved {
    values: Vec<Option<Value>>,
    locs: Vec<Option<Location>>,
    regs: Vec<BTreeMap<String, Value>>,
}

fn wrap_value(v: Value, w: Width) -> Value {
    match v {
        Value::Int(i) => Value::Int(w.wrap(i)),
        v => v,
    }
}

/// Propagate values along rf to a fixpoint; reject candidates with values
/// out of thin air, ill-typed addresses, mismatched locations or violated
/// path constraints.
fn solve(sk: &Skeleton, rf: &[(usize, usize)], init_locs: &BTreeSet<Location>) -> Option<Solved> {
    let n = sk.events.len();
    let mut values: Vec<Option<Value>> = vec![None; n];
    loop {
        let mut progress = false;
        for &(w, r) in rf {
            if values[r].is_some() {
                continue;
            }
            let we = &sk.events[w];
            match we.value.as_ref()?.eval(&values) {
                Eval::Known(v) => {
                    values[r] = Some(wrap_value(v, we.width));
                    progress = true;
                }
                Eval::Invalid => return None,
                Eval::Unknown => {}
            }
        }
        if !progress {
            break;
        }
    }
    if rf.iter().any(|&(_, r)| values[r].is_none()) {
        return None;
    }
    let mut locs = vec![None; n];
    for (i, e) in sk.events.iter().enumerate() {
        if let Some(a) = &e.addr {
            match a.eval(&values) {
                Eval::Known(Value::Addr(l)) if init_locs.contains(&l) => locs[i] = Some(l),
                _ => return None,
            }
        }
        if e.kind.is_write() {
            match e.value.as_ref()?.eval(&values) {
                Eval::Known(v) => values[i] = Some(wrap_value(v, e.width)),
                _ => return None,
            }
        }
    }
    if rf.iter().any(|&(w, r)| locs[w] != locs[r]) {
        return None;
    }
    for c in &sk.constraints {
        match c.eval(&values) {
            Eval::Known(Value::Int(v)) if v != 0 => {}
            _ => return None,
        }
    }
    let mut regs = Vec::with_capacity(sk.regs.len());
    for m in &sk.regs {
        let mut out = BTreeMap::new();
        for (k, s) in m {
            match s.eval(&values) {
                Eval::Known(v) => {
                    out.insert(k.clone(), v);
                }
                _ => return None,
            }
        }
        regs.push(out);
    }
    Some(Solved { values, locs, regs })
}

/// Coherence orders for one location: permutations of its non-initial
/// writes after the initial one, keeping each RMW's write immediately after
/// the write its read observed.
fn co_orders(init: usize, writes: &[usize], rmw_source: &BTreeMap<usize, usize>) -> Vec<Vec<usize>> {
    fn go(
        order: &mut Vec<usize>,
        left: &mut Vec<usize>,
        rmw_source: &BTreeMap<usize, usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if left.is_empty() {
            out.push(order.clone());
            return;
        }
        for i in 0..left.len() {
            let w = left[i];
            if let Some(src) = rmw_source.get(&w) {
                if order.last() != Some(src) {
                    continue;
                }
            }
            left.remove(i);
            order.push(w);
            go(order, left, rmw_source, out);
            order.pop();
            left.insert(i, w);
        }
    }
    let mut out = Vec::new();
    go(&mut vec![init], &mut writes.to_vec(), rmw_source, &mut out);
    out
}

fn enumerate_co(
    sk: &Skeleton,
    rf: &[(usize, usize)],
    solved: &Solved,
    budget: &mut Budget,
    sink: &mut dyn FnMut(CandidateExecution) -> Result<(), Error>,
) -> Result<(), Error> {
    let n = sk.events.len();
    let source_of: BTreeMap<usize, usize> = rf.iter().map(|&(w, r)| (r, w)).collect();
    let rmw_source: BTreeMap<usize, usize> = sk
        .rmw
        .pairs()
        .map(|(r, w)| (w, source_of[&r]))
        .collect();
    let mut by_loc: BTreeMap<&Location, (Option<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, e) in sk.events.iter().enumerate() {
        if !e.kind.is_write() {
            continue;
        }
        let slot = by_loc.entry(solved.locs[i].as_ref().expect("write location")).or_default();
        if e.thread.is_none() {
            slot.0 = Some(i);
        } else {
            slot.1.push(i);
        }
    }
    let mut per_loc = Vec::new();
    for (_, (init, writes)) in by_loc {
        let init = init.expect("every location has an initial write");
        let orders = co_orders(init, &writes, &rmw_source);
        if orders.is_empty() {
            return Ok(());
        }
        per_loc.push(orders);
    }

    let mut rf_rel = Relation::empty(n);
    for &(w, r) in rf {
        rf_rel.insert(w, r);
    }
    let events: Vec<Event> = sk
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| Event {
            id: i,
            thread: e.thread,
            kind: e.kind,
            loc: solved.locs[i].clone(),
            value: solved.values[i].clone(),
            annot: e.annot,
            origin: e.origin,
        })
        .collect();

    let mut pick = vec![0usize; per_loc.len()];
    loop {
        budget.tick_candidate()?;
        let mut co = Relation::empty(n);
        for (orders, &k) in per_loc.iter().zip(&pick) {
            let o = &orders[k];
            for i in 0..o.len() {
                for j in i + 1..o.len() {
                    co.insert(o[i], o[j]);
                }
            }
        }
        sink(CandidateExecution {
            events: events.clone(),
            po: sk.po.clone(),
            rf: rf_rel.clone(),
            co,
            rmw: sk.rmw.clone(),
            addr: sk.addr.clone(),
            data: sk.data.clone(),
            ctrl: sk.ctrl.clone(),
            path_choices: sk.choices.clone(),
            init_writes: sk.init_writes,
            final_regs: solved.regs.clone(),
        })?;
        let mut i = pick.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            pick[i] += 1;
            if pick[i] < per_loc[i].len() {
                break;
            }
            pick[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::SB;
    use crate::litmus::parse_litmus;

    fn collect(text: &str) -> Vec<CandidateExecution> {
        let t = parse_litmus(text).unwrap();
        let mut out = Vec::new();
        enumerate_candidates(&t, &EnumOptions::default(), &mut |c| {
            out.push(c);
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn single_thread_store_then_load() {
        let c = collect("C T\n{ }\nP0 { *x = 1; int r0 = *x; }\nexists (0:r0=1)\n");
        // The read may see the init write or the store; one coherence order each.
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn store_buffering_has_four_rf_maps() {
        let c = collect(SB);
        let rf: BTreeSet<Vec<(usize, usize)>> = c.iter().map(|c| c.rf.pairs().collect()).collect();
        assert_eq!(rf.len(), 4);
        for cand in &c {
            for r in cand.events.iter().filter(|e| e.kind.is_read()) {
                assert_eq!(cand.rf.inverse().successors(r.id).count(), 1);
            }
        }
    }

    #[test]
    fn rmw_atomicity_prunes_coherence() {
        let src = "C RMW\n{ }\nP0 (atomic_int* x) { int r0 = atomic_fetch_add_explicit(x, 1, memory_order_relaxed); }\nP1 (atomic_int* x) { int r0 = atomic_fetch_add_explicit(x, 1, memory_order_relaxed); }\nexists (x=2)\n";
        let c = collect(src);
        for cand in &c {
            let fr = super::super::derive_fr(cand);
            assert!(cand.rmw.intersection(&fr.seq(&cand.co)).is_empty());
        }
        assert!(c.iter().any(|c| c.final_memory()[&Location::new("x")] == Value::Int(2)));
    }

    #[test]
    fn thin_air_values_are_not_invented() {
        // Each thread copies the other's location: only zeros can appear.
        let src = "C OOTA\n{ }\nP0 { int r0 = *x; *y = r0; }\nP1 { int r0 = *y; *x = r0; }\nexists (0:r0=1)\n";
        for c in collect(src) {
            for e in &c.events {
                assert_eq!(e.value, Some(Value::Int(0)));
            }
        }
    }
}
