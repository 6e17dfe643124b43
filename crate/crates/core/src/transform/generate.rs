use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::litmus::{
    Dialect, Expr, FinalPredicate, InitEntry, InitState, InitTarget, LitmusTest, Location, MemOrder,
    Observable, Prop, Quantifier, Statement, Thread, ThreadBody, Value, Width,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shape {
    Mp,
    Lb,
    Sb,
    S,
    R,
    TwoPlusTwoW,
    WRr,
}

impl Shape {
    pub const ALL: [Shape; 7] = [
        Shape::Mp,
        Shape::Lb,
        Shape::Sb,
        Shape::S,
        Shape::R,
        Shape::TwoPlusTwoW,
        Shape::WRr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Mp => "MP",
            Shape::Lb => "LB",
            Shape::Sb => "SB",
            Shape::S => "S",
            Shape::R => "R",
            Shape::TwoPlusTwoW => "2+2W",
            Shape::WRr => "W+RR",
        }
    }

    fn template(self) -> Template {
        use Access::{Ld, St};
        let (threads, exists): (Vec<Vec<Access>>, Vec<(Observable, i64)>) = match self {
            Shape::Mp => (
                vec![vec![St(0, 1), St(1, 1)], vec![Ld(1), Ld(0)]],
                vec![(Observable::reg(1, "r0"), 1), (Observable::reg(1, "r1"), 0)],
            ),
            Shape::Lb => (
                vec![vec![Ld(0), St(1, 1)], vec![Ld(1), St(0, 1)]],
                vec![(Observable::reg(0, "r0"), 1), (Observable::reg(1, "r0"), 1)],
            ),
            Shape::Sb => (
                vec![vec![St(0, 1), Ld(1)], vec![St(1, 1), Ld(0)]],
                vec![(Observable::reg(0, "r0"), 0), (Observable::reg(1, "r0"), 0)],
            ),
            Shape::S => (
                vec![vec![St(0, 2), St(1, 1)], vec![Ld(1), St(0, 1)]],
                vec![(Observable::reg(1, "r0"), 1), (Observable::loc("x"), 2)],
            ),
            Shape::R => (
                vec![vec![St(0, 1), St(1, 1)], vec![St(1, 2), Ld(0)]],
                vec![(Observable::loc("y"), 2), (Observable::reg(1, "r0"), 0)],
            ),
            Shape::TwoPlusTwoW => (
                vec![vec![St(0, 2), St(1, 1)], vec![St(1, 2), St(0, 1)]],
                vec![(Observable::loc("x"), 2), (Observable::loc("y"), 2)],
            ),
            Shape::WRr => (
                vec![vec![St(0, 1)], vec![Ld(0), Ld(0)]],
                vec![(Observable::reg(1, "r0"), 1), (Observable::reg(1, "r1"), 0)],
            ),
        };
        Template { threads, exists }
    }

    /// Number of accesses, in thread then program order.
    pub fn accesses(self) -> usize {
        self.template().threads.iter().map(Vec::len).sum()
    }

    pub fn threads(self) -> usize {
        self.template().threads.len()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Shape::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnsupportedShape(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
enum Access {
    /// Load of variable `n`.
    Ld(usize),
    /// Store of a constant to variable `n`.
    St(usize, i64),
}

struct Template {
    threads: Vec<Vec<Access>>,
    exists: Vec<(Observable, i64)>,
}

const VARS: [&str; 2] = ["x", "y"];

/// What to insert between a thread's first and second access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Glue {
    pub fence: bool,
    /// Store value depends on the loaded register through `r == r`.
    pub data: bool,
    /// Second access guarded by `if (r == r)`.
    pub ctrl: bool,
}

impl Glue {
    pub fn plain() -> Self {
        Glue::default()
    }

    fn code(self) -> String {
        let mut parts = Vec::new();
        if self.fence {
            parts.push("fence");
        }
        if self.data {
            parts.push("data");
        }
        if self.ctrl {
            parts.push("ctrl");
        }
        if parts.is_empty() {
            "po".into()
        } else {
            parts.join("-")
        }
    }

    /// Restrict to what a thread supports: dependencies need a load
    /// followed by another access, data dependencies need a store.
    fn fit(self, accesses: &[Access]) -> Glue {
        let starts_with_load = matches!(accesses.first(), Some(Access::Ld(_)));
        let pair = accesses.len() == 2;
        Glue {
            fence: self.fence && pair,
            data: self.data && pair && starts_with_load && matches!(accesses[1], Access::St(..)),
            ctrl: self.ctrl && pair && starts_with_load,
        }
    }
}

impl FromStr for Glue {
    type Err = Error;

    /// `plain`, or `+`-joined `fence`, `data`, `ctrl`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let mut g = Glue::default();
        if s == "plain" || s == "po" {
            return Ok(g);
        }
        for part in s.split(['+', '-']) {
            match part {
                "fence" => g.fence = true,
                "data" => g.data = true,
                "ctrl" => g.ctrl = true,
                _ => return Err(Error::Grid(format!("unknown glue `{s}`"))),
            }
        }
        Ok(g)
    }
}

/// One point of a generator grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternSpec {
    pub shape: Shape,
    /// One order per access, in thread then program order.
    pub orders: Vec<MemOrder>,
    /// One width per variable (`x`, `y`).
    pub widths: Vec<Width>,
    /// One glue per thread.
    pub glue: Vec<Glue>,
    /// Order of inserted fences.
    pub fence: MemOrder,
}

impl PatternSpec {
    /// All-relaxed, 32-bit, no glue.
    pub fn relaxed(shape: Shape) -> Self {
        PatternSpec {
            shape,
            orders: vec![MemOrder::Rlx; shape.accesses()],
            widths: vec![Width::W32; VARS.len()],
            glue: vec![Glue::plain(); shape.threads()],
            fence: MemOrder::Sc,
        }
    }
}

fn order_ok(o: MemOrder, load: bool) -> bool {
    match o {
        MemOrder::Na | MemOrder::Rlx | MemOrder::Sc => true,
        MemOrder::Acq => load,
        MemOrder::Rel => !load,
        MemOrder::AcqRel => false,
    }
}

fn orders_code(orders: &[MemOrder]) -> String {
    let distinct: BTreeSet<_> = orders.iter().collect();
    if distinct.len() == 1 {
        orders[0].short().to_string()
    } else {
        orders.iter().map(|o| o.short()).collect::<Vec<_>>().join("-")
    }
}

fn widths_code(ws: &[Width]) -> String {
    let distinct: BTreeSet<_> = ws.iter().collect();
    if distinct.len() == 1 {
        format!("w{}", ws[0].bits())
    } else {
        format!("w{}", ws.iter().map(|w| w.bits().to_string()).collect::<Vec<_>>().join("-"))
    }
}

/// Deterministic test name encoding every grid coordinate.
pub fn test_name(spec: &PatternSpec) -> String {
    let glue: Vec<String> = spec.glue.iter().map(|g| g.code()).collect();
    let mut name = format!(
        "{}+{}+{}+{}",
        spec.shape,
        orders_code(&spec.orders),
        glue.join("+"),
        widths_code(&spec.widths)
    );
    if spec.glue.iter().any(|g| g.fence) && spec.fence != MemOrder::Sc {
        name.push_str(&format!("+f{}", spec.fence.short()));
    }
    name
}

pub fn generate_pattern_test(spec: &PatternSpec) -> Result<LitmusTest, Error> {
    let tpl = spec.shape.template();
    if spec.orders.len() != spec.shape.accesses() || spec.glue.len() != tpl.threads.len() || spec.widths.len() != VARS.len() {
        return Err(Error::UnsupportedShape(format!(
            "{}: annotation arity does not match the shape",
            spec.shape
        )));
    }
    let mut orders = spec.orders.iter().copied();
    let mut threads = Vec::new();
    for (tid, accesses) in tpl.threads.iter().enumerate() {
        let glue = spec.glue[tid].fit(accesses);
        let mut regs = BTreeMap::new();
        let mut body = Vec::new();
        let mut last_reg: Option<String> = None;
        for (k, a) in accesses.iter().enumerate() {
            let order = orders.next().expect("arity checked");
            let loc = |v: usize| Location::new(VARS[v]);
            let stmt = match *a {
                Access::Ld(v) => {
                    if !order_ok(order, true) {
                        return Err(Error::Grid(format!("{} is not a load order", order.short())));
                    }
                    let reg = format!("r{}", regs.len());
                    regs.insert(reg.clone(), spec.widths[v]);
                    last_reg = Some(reg.clone());
                    Statement::Load { reg, loc: loc(v), order }
                }
                Access::St(v, value) => {
                    if !order_ok(order, false) {
                        return Err(Error::Grid(format!("{} is not a store order", order.short())));
                    }
                    let value = match (&last_reg, glue.data && k == 1) {
                        (Some(r), true) => {
                            let dep = Expr::eq(Expr::Reg(r.clone()), Expr::Reg(r.clone()));
                            if value == 1 {
                                dep
                            } else {
                                Expr::add(Expr::Const(value - 1), dep)
                            }
                        }
                        _ => Expr::Const(value),
                    };
                    Statement::Store { loc: loc(v), value, order }
                }
            };
            if k == 1 && glue.fence {
                body.push(Statement::Fence(spec.fence));
            }
            match (&last_reg, k == 1 && glue.ctrl) {
                (Some(r), true) => body.push(Statement::If {
                    cond: Expr::eq(Expr::Reg(r.clone()), Expr::Reg(r.clone())),
                    then_body: vec![stmt],
                    else_body: vec![],
                }),
                _ => body.push(stmt),
            }
        }
        threads.push(Thread {
            id: tid,
            body: ThreadBody::Source(body),
            registers: regs,
        });
    }
    let init = InitState {
        entries: VARS
            .iter()
            .zip(&spec.widths)
            .map(|(v, w)| InitEntry {
                target: InitTarget::Loc(Location::new(*v)),
                value: Value::Int(0),
                width: *w,
            })
            .collect(),
        layout: vec![],
    };
    let prop = Prop::And(tpl.exists.into_iter().map(|(o, v)| Prop::Atom(o, Value::Int(v))).collect());
    let mut test = LitmusTest {
        name: test_name(spec),
        dialect: Dialect::Source,
        init,
        threads,
        final_pred: FinalPredicate {
            quantifier: Quantifier::Exists,
            prop,
        },
        metadata: BTreeMap::new(),
    };
    test.normalize();
    Ok(test)
}

/// One test per grid point, in grid order. Points that coincide after
/// glue is fitted to each thread are emitted once.
pub fn generate_pattern_tests(specs: &[PatternSpec]) -> Result<Vec<LitmusTest>, Error> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in specs {
        let t = generate_pattern_test(s)?;
        if seen.insert(t.name.clone()) {
            out.push(t);
        }
    }
    Ok(out)
}

/// `store/load` order pair, or one order for both.
fn parse_orders(s: &str) -> Result<(MemOrder, MemOrder), Error> {
    let one = |x: &str| MemOrder::from_name(x.trim()).ok_or_else(|| Error::Grid(format!("unknown order `{x}`")));
    match s.split_once('/') {
        Some((st, ld)) => Ok((one(st)?, one(ld)?)),
        None => {
            let o = one(s)?;
            Ok((o, o))
        }
    }
}

fn parse_widths(s: &str) -> Result<Vec<Width>, Error> {
    let one = |x: &str| {
        x.trim()
            .parse::<u32>()
            .ok()
            .and_then(Width::from_bits)
            .ok_or_else(|| Error::Grid(format!("bad width `{x}`")))
    };
    let ws: Vec<Width> = s.split('/').map(one).collect::<Result<_, _>>()?;
    match ws.len() {
        1 => Ok(vec![ws[0]; VARS.len()]),
        n if n == VARS.len() => Ok(ws),
        _ => Err(Error::Grid(format!("`{s}` names {} widths", ws.len()))),
    }
}

#[derive(Debug, Clone)]
struct Section {
    shapes: Vec<Shape>,
    orders: Vec<(MemOrder, MemOrder)>,
    glue: Vec<Glue>,
    widths: Vec<Vec<Width>>,
    fence: MemOrder,
}

impl Default for Section {
    fn default() -> Self {
        Section {
            shapes: vec![],
            orders: vec![(MemOrder::Rlx, MemOrder::Rlx)],
            glue: vec![Glue::plain()],
            widths: vec![vec![Width::W32; VARS.len()]],
            fence: MemOrder::Sc,
        }
    }
}

impl Section {
    fn expand(&self, out: &mut Vec<PatternSpec>) {
        for &shape in &self.shapes {
            let tpl = shape.template();
            for &(st, ld) in &self.orders {
                let orders: Vec<MemOrder> = tpl
                    .threads
                    .iter()
                    .flatten()
                    .map(|a| match a {
                        Access::Ld(_) => ld,
                        Access::St(..) => st,
                    })
                    .collect();
                // Glue choices per thread, deduplicated after fitting.
                let per_thread: Vec<Vec<Glue>> = tpl
                    .threads
                    .iter()
                    .map(|acc| {
                        let mut v: Vec<Glue> = Vec::new();
                        for g in &self.glue {
                            let f = g.fit(acc);
                            if !v.contains(&f) {
                                v.push(f);
                            }
                        }
                        v
                    })
                    .collect();
                let mut combos: Vec<Vec<Glue>> = vec![vec![]];
                for choices in &per_thread {
                    combos = combos
                        .into_iter()
                        .flat_map(|c| {
                            choices.iter().map(move |g| {
                                let mut c = c.clone();
                                c.push(*g);
                                c
                            })
                        })
                        .collect();
                }
                for glue in &combos {
                    for widths in &self.widths {
                        out.push(PatternSpec {
                            shape,
                            orders: orders.clone(),
                            widths: widths.clone(),
                            glue: glue.clone(),
                            fence: self.fence,
                        });
                    }
                }
            }
        }
    }
}

/// Parse a grid file into its points.
///
/// ```text
/// # 294 load-buffering variants
/// shape  = LB
/// orders = rlx
/// glue   = plain, data, ctrl, fence, fence+data, fence+ctrl, data+ctrl
/// widths = 8, 16, 32, 64, 32/64, 64/32
/// ```
///
/// Every key takes a comma-separated list and the grid is their product,
/// with `glue` chosen independently per thread. `orders` entries are
/// `store/load` pairs or a single order; `fence` is the order of inserted
/// fences. A `[name]` line starts a new section.
pub fn parse_grid(text: &str) -> Result<Vec<PatternSpec>, Error> {
    let mut sections = vec![Section::default()];
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            sections.push(Section::default());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Grid(format!("line {}: expected `key = values`", n + 1)))?;
        let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let sec = sections.last_mut().expect("nonempty");
        match key.trim() {
            "shape" | "shapes" => sec.shapes = items.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
            "orders" => sec.orders = items.iter().map(|s| parse_orders(s)).collect::<Result<_, _>>()?,
            "glue" => sec.glue = items.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
            "widths" => sec.widths = items.iter().map(|s| parse_widths(s)).collect::<Result<_, _>>()?,
            "fence" => {
                sec.fence = MemOrder::from_name(value.trim())
                    .ok_or_else(|| Error::Grid(format!("unknown order `{}`", value.trim())))?
            }
            k => return Err(Error::Grid(format!("line {}: unknown key `{k}`", n + 1))),
        }
    }
    let mut out = Vec::new();
    for s in &sections {
        s.expand(&mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::litmus::parse_litmus;

    pub(crate) const LB_GRID: &str = "shape = LB\norders = rlx\nglue = plain, data, ctrl, fence, fence+data, fence+ctrl, data+ctrl\nwidths = 8, 16, 32, 64, 32/64, 64/32\nfence = rlx\n";

    #[test]
    fn relaxed_lb_matches_the_classic_test() {
        let t = generate_pattern_test(&PatternSpec::relaxed(Shape::Lb)).unwrap();
        let lb = parse_litmus(crate::fixtures::LB).unwrap();
        assert_eq!(t.threads, lb.threads);
        assert_eq!(t.final_pred, lb.final_pred);
        assert_eq!(t.name, "LB+rlx+po+po+w32");
    }

    #[test]
    fn message_passing_with_release_acquire() {
        let specs = parse_grid("shape = MP\norders = rel/acq\n").unwrap();
        let t = generate_pattern_tests(&specs).unwrap();
        assert_eq!(t.len(), 1);
        let text = t[0].render();
        assert!(text.contains("memory_order_release") && text.contains("memory_order_acquire"));
    }

    #[test]
    fn lb_grid_has_294_distinct_tests() {
        let tests = generate_pattern_tests(&parse_grid(LB_GRID).unwrap()).unwrap();
        assert_eq!(tests.len(), 294);
        for t in tests.iter().take(20) {
            let back = parse_litmus(&t.render()).unwrap();
            assert_eq!(back.render(), t.render());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a: Vec<String> = generate_pattern_tests(&parse_grid(LB_GRID).unwrap()).unwrap().iter().map(|t| t.render()).collect();
        let b: Vec<String> = generate_pattern_tests(&parse_grid(LB_GRID).unwrap()).unwrap().iter().map(|t| t.render()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_grid_inputs() {
        assert!(matches!(parse_grid("shape = IRIW\n"), Err(Error::UnsupportedShape(_))));
        assert!(matches!(parse_grid("shape = LB\norders = acq/rel\n").and_then(|s| generate_pattern_tests(&s)), Err(Error::Grid(_))));
        assert!(matches!(parse_grid("colour = red\n"), Err(Error::Grid(_))));
    }
}
