//! Axiomatic memory models as constraints over relational expressions.

mod expr;

use std::fmt;

pub use expr::{
    eval_relation, id, name, order_at_least, seq, union, Env, EventClass, RelExpr,
    BASE_RELATIONS,
};

use crate::error::Error;
use crate::exec::CandidateExecution;
use crate::litmus::{Dialect, DmbDomain, MemOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Acyclic,
    Irreflexive,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub expr: RelExpr,
    pub label: String,
}

impl Constraint {
    pub fn acyclic(expr: RelExpr, label: &str) -> Self {
        Constraint {
            kind: ConstraintKind::Acyclic,
            expr,
            label: label.into(),
        }
    }

    pub fn irreflexive(expr: RelExpr, label: &str) -> Self {
        Constraint {
            kind: ConstraintKind::Irreflexive,
            expr,
            label: label.into(),
        }
    }

    pub fn empty(expr: RelExpr, label: &str) -> Self {
        Constraint {
            kind: ConstraintKind::Empty,
            expr,
            label: label.into(),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            ConstraintKind::Acyclic => "acyclic",
            ConstraintKind::Irreflexive => "irreflexive",
            ConstraintKind::Empty => "empty",
        };
        write!(f, "{k} {} as {}", self.expr, self.label)
    }
}

/// Which test dialect a model applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelDialect {
    Source,
    Asm,
}

impl ModelDialect {
    pub fn accepts(self, d: Dialect) -> bool {
        matches!(
            (self, d),
            (ModelDialect::Source, Dialect::Source) | (ModelDialect::Asm, Dialect::Asm(_))
        )
    }
}

impl fmt::Display for ModelDialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelDialect::Source => "source",
            ModelDialect::Asm => "asm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaceSemantics {
    /// Racy programs have undefined behaviour.
    UbOnRace,
    RaceFreeByConstruction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub dialect: ModelDialect,
    /// Named definitions, evaluated in order before the constraints.
    pub lets: Vec<(String, RelExpr)>,
    pub constraints: Vec<Constraint>,
    pub race_semantics: RaceSemantics,
    /// Name of the happens-before definition used for race detection.
    pub happens_before: Option<String>,
}

impl ModelSpec {
    /// Check that every name used is a base relation or an earlier `let`
    /// and that constraint labels are unique.
    pub fn validate(&self) -> Result<(), Error> {
        let mut bound: Vec<&str> = BASE_RELATIONS.to_vec();
        let check = |e: &RelExpr, bound: &[&str]| {
            let mut names = Vec::new();
            e.names(&mut names);
            match names.into_iter().find(|n| !bound.contains(&n.as_str())) {
                Some(n) => Err(Error::UnknownBaseRelation(n)),
                None => Ok(()),
            }
        };
        for (n, e) in &self.lets {
            check(e, &bound)?;
            bound.push(n);
        }
        let mut labels = std::collections::BTreeSet::new();
        for c in &self.constraints {
            check(&c.expr, &bound)?;
            if !labels.insert(&c.label) {
                return Err(Error::NameCollision(c.label.clone()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({})", self.name, self.dialect)?;
        for (n, e) in &self.lets {
            writeln!(f, "  let {n} = {e}")?;
        }
        for c in &self.constraints {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub allowed: bool,
    pub violated: Vec<String>,
}

/// Bind a model's `let`s for one execution.
pub fn model_env<'a>(model: &ModelSpec, exec: &'a CandidateExecution) -> Result<Env<'a>, Error> {
    let mut env = Env::new(exec);
    for (n, e) in &model.lets {
        env.bind(n, e)?;
    }
    Ok(env)
}

pub fn check_model(model: &ModelSpec, exec: &CandidateExecution) -> Result<Verdict, Error> {
    let mut env = model_env(model, exec)?;
    let mut violated = Vec::new();
    for c in &model.constraints {
        let r = env.eval(&c.expr)?;
        let ok = match c.kind {
            ConstraintKind::Acyclic => r.is_acyclic(),
            ConstraintKind::Irreflexive => r.is_irreflexive(),
            ConstraintKind::Empty => r.is_empty(),
        };
        if !ok {
            violated.push(c.label.clone());
        }
    }
    Ok(Verdict {
        allowed: violated.is_empty(),
        violated,
    })
}

fn com() -> RelExpr {
    union([name("rf"), name("co"), name("fr")])
}

fn sc_per_loc() -> Constraint {
    Constraint::acyclic(
        union([name("po-loc"), name("rf"), name("co"), name("fr")]),
        "sc-per-loc",
    )
}

fn sc() -> ModelSpec {
    ModelSpec {
        name: "sc".into(),
        dialect: ModelDialect::Source,
        lets: vec![],
        constraints: vec![Constraint::acyclic(
            union([name("po"), name("rf"), name("co"), name("fr")]),
            "sc",
        )],
        race_semantics: RaceSemantics::RaceFreeByConstruction,
        happens_before: None,
    }
}

fn tso() -> ModelSpec {
    use EventClass::*;
    let mem = R.or(W);
    let plain = |c: EventClass| c.and(Rmw.not());
    let ppo = seq([id(mem.clone()), name("po"), id(mem)])
        .diff(seq([id(plain(W)), name("po"), id(plain(R))]));
    let fence = seq([
        id(W),
        name("po"),
        id(F.and(AtLeast(MemOrder::Sc))),
        name("po"),
        id(R),
    ]);
    ModelSpec {
        name: "tso".into(),
        dialect: ModelDialect::Source,
        lets: vec![("ppo".into(), ppo), ("fence".into(), fence)],
        constraints: vec![
            sc_per_loc(),
            Constraint::acyclic(
                union([name("ppo"), name("rfe"), name("co"), name("fr"), name("fence")]),
                "tso",
            ),
        ],
        race_semantics: RaceSemantics::RaceFreeByConstruction,
        happens_before: None,
    }
}

fn rc11(lb: bool) -> ModelSpec {
    use EventClass::*;
    let rs = seq([
        id(W),
        name("po-loc").opt(),
        id(W.and(AtLeast(MemOrder::Rlx))),
        seq([name("rf"), name("rmw")]).star(),
    ]);
    let sw = seq([
        id(AtLeast(MemOrder::Rel)),
        seq([id(F), name("po")]).opt(),
        name("rs"),
        name("rf"),
        id(R.and(AtLeast(MemOrder::Rlx))),
        seq([name("po"), id(F)]).opt(),
        id(AtLeast(MemOrder::Acq)),
    ]);
    let hb = union([name("po"), name("sw")]).plus();
    let eco = com().plus();
    let mut constraints = vec![
        sc_per_loc(),
        Constraint::irreflexive(seq([name("hb"), name("eco").opt()]), "coherence"),
        Constraint::empty(
            name("rmw").inter(seq([name("fr"), name("co")])),
            "atomicity",
        ),
        Constraint::irreflexive(name("hb"), "hb"),
    ];
    if !lb {
        constraints.push(Constraint::acyclic(union([name("po"), name("rf")]), "no-lb"));
    }
    ModelSpec {
        name: if lb { "rc11_lb" } else { "rc11_lite" }.into(),
        dialect: ModelDialect::Source,
        lets: vec![
            ("rs".into(), rs),
            ("sw".into(), sw),
            ("hb".into(), hb),
            ("eco".into(), eco),
        ],
        constraints,
        race_semantics: RaceSemantics::UbOnRace,
        happens_before: Some("hb".into()),
    }
}

fn armv8() -> ModelSpec {
    use EventClass::*;
    let dob = union([
        name("addr"),
        name("data"),
        seq([name("ctrl"), id(W)]),
        seq([name("addr"), name("po"), id(W)]),
    ]);
    let bob = union([
        seq([name("po"), id(Dmb(DmbDomain::Ish)), name("po")]),
        seq([id(R), name("po"), id(Dmb(DmbDomain::IshLd)), name("po")]),
        seq([id(W), name("po"), id(Dmb(DmbDomain::IshSt)), name("po"), id(W)]),
        seq([name("po"), id(Release)]),
        seq([id(Acquire), name("po")]),
        seq([id(AcquirePc), name("po")]),
        seq([id(Release), name("po"), id(Acquire)]),
    ]);
    let ob = union([
        name("rfe"),
        name("coe"),
        name("fre"),
        name("dob"),
        name("bob"),
        name("rmw"),
    ]);
    ModelSpec {
        name: "armv8_lite".into(),
        dialect: ModelDialect::Asm,
        lets: vec![
            ("dob".into(), dob),
            ("bob".into(), bob),
            ("ob".into(), ob),
        ],
        constraints: vec![
            sc_per_loc(),
            Constraint::empty(
                name("rmw").inter(seq([name("fre"), name("coe")])),
                "atomicity",
            ),
            Constraint::acyclic(name("ob"), "external"),
        ],
        race_semantics: RaceSemantics::RaceFreeByConstruction,
        happens_before: None,
    }
}

/// The built-in models, in registry order.
pub fn builtin_models() -> Vec<ModelSpec> {
    vec![sc(), tso(), rc11(false), rc11(true), armv8()]
}

pub fn lookup_model(name: &str) -> Result<ModelSpec, Error> {
    builtin_models()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::UnknownModel(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_well_formed() {
        let ms = builtin_models();
        let names: Vec<_> = ms.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["sc", "tso", "rc11_lite", "rc11_lb", "armv8_lite"]);
        for m in &ms {
            m.validate().unwrap();
        }
    }

    #[test]
    fn lb_variant_drops_only_no_lb() {
        let lite = lookup_model("rc11_lite").unwrap();
        let lb = lookup_model("rc11_lb").unwrap();
        assert_eq!(lite.lets, lb.lets);
        let mut c = lite.constraints.clone();
        c.retain(|c| c.label != "no-lb");
        assert_eq!(c, lb.constraints);
        assert_eq!(lite.constraints.len(), lb.constraints.len() + 1);
    }

    #[test]
    fn unknown_model() {
        assert!(matches!(lookup_model("armv9"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn unknown_base_relation_is_reported() {
        let mut m = lookup_model("sc").unwrap();
        m.constraints[0].expr = name("sb");
        assert!(matches!(m.validate(), Err(Error::UnknownBaseRelation(n)) if n == "sb"));
    }
}
