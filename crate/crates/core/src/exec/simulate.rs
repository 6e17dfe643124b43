use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use super::enumerate::{enumerate_candidates, EnumOptions};
use super::{CandidateExecution, Outcome, OutcomeSet};
use crate::error::Error;
use crate::litmus::{render_final, FinalPredicate, LitmusTest, Observable, Quantifier};
use crate::model::{check_model, ModelSpec};

pub type SimOptions = EnumOptions;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub candidates: u64,
    pub explored: u64,
    pub allowed: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub test: String,
    pub model: String,
    pub outcomes: OutcomeSet,
    pub stats: SimStats,
    pub condition: FinalPredicate,
    /// Asm tests print locations as `[x]`.
    pub bracket_locs: bool,
}

impl SimulationResult {
    /// Outcomes satisfying and not satisfying the final predicate.
    pub fn witness_counts(&self) -> (usize, usize) {
        let mut pos = 0;
        for o in self.outcomes.outcomes() {
            if self.condition.prop.eval(&|ob| o.get(ob).cloned()) == Some(true) {
                pos += 1;
            }
        }
        (pos, self.outcomes.len() - pos)
    }

    /// Herd-style log. Only the final `Time` line varies between runs.
    pub fn render_log(&self) -> String {
        let (pos, neg) = self.witness_counts();
        let ok = match self.condition.quantifier {
            Quantifier::Exists => pos > 0,
            Quantifier::Forall => neg == 0,
        };
        let observation = if pos == 0 {
            "Never"
        } else if neg == 0 {
            "Always"
        } else {
            "Sometimes"
        };
        let mut s = format!("Test {} Allowed\nStates {}\n", self.test, self.outcomes.len());
        for o in self.outcomes.outcomes() {
            s.push_str(&o.render(self.bracket_locs));
            s.push('\n');
        }
        s.push_str(if ok { "Ok\n" } else { "No\n" });
        s.push_str(&format!("Witnesses\nPositive: {pos} Negative: {neg}\n"));
        s.push_str(&format!("Condition {}\n", render_final(&self.condition)));
        s.push_str(&format!("Observation {} {observation} {pos} {neg}\n", self.test));
        s.push_str(&format!("Time {} {:.2}\n", self.test, self.stats.elapsed.as_secs_f64()));
        s
    }
}

pub(crate) fn project(obs: &BTreeSet<Observable>, exec: &CandidateExecution) -> Outcome {
    let mem = exec.final_memory();
    Outcome(obs.iter().map(|o| (o.clone(), exec.observe(o, &mem))).collect())
}

/// Project executions onto the test's observables, one witness per outcome.
pub fn outcomes_of<'a>(
    test: &LitmusTest,
    execs: impl IntoIterator<Item = &'a CandidateExecution>,
) -> OutcomeSet {
    let obs = test.observables();
    let mut set = OutcomeSet::new();
    for e in execs {
        set.insert(project(&obs, e), e.clone());
    }
    set
}

pub fn simulate(test: &LitmusTest, model: &ModelSpec, opts: &SimOptions) -> Result<SimulationResult, Error> {
    if !model.dialect.accepts(test.dialect) {
        return Err(Error::DialectMismatch {
            model: model.name.clone(),
            expected: model.dialect.to_string(),
        });
    }
    let start = Instant::now();
    let obs = test.observables();
    let mut outcomes = OutcomeSet::new();
    let mut allowed = 0;
    let es = enumerate_candidates(test, opts, &mut |c| {
        if check_model(model, &c)?.allowed {
            allowed += 1;
            outcomes.insert(project(&obs, &c), c);
        }
        Ok(())
    })?;
    Ok(SimulationResult {
        test: test.name.clone(),
        model: model.name.clone(),
        outcomes,
        stats: SimStats {
            candidates: es.candidates,
            explored: es.explored,
            allowed,
            elapsed: start.elapsed(),
        },
        condition: test.final_pred.clone(),
        bracket_locs: !test.is_source(),
    })
}
