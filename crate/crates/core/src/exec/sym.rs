use std::collections::BTreeSet;

use crate::litmus::{BranchCond, Location, Value, Width};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Xor,
    /// Comparison yielding 1 or 0.
    Cmp(BranchCond),
}

/// A value over the (not yet known) results of read events.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sym {
    Val(Value),
    /// The value returned by the read event with this index.
    Read(usize),
    /// Low 12 bits of a symbol's address; only meaningful added to its page.
    Lo12(Location),
    Op(BinOp, Box<Sym>, Box<Sym>, Width),
}

/// Result of evaluating a [`Sym`] under a partial read assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Eval {
    Known(Value),
    Unknown,
    /// Ill-typed arithmetic, e.g. adding an offset to a mismatched page.
    Invalid,
}

impl Sym {
    pub fn int(v: i64) -> Sym {
        Sym::Val(Value::Int(v))
    }

    pub fn as_const(&self) -> Option<&Value> {
        match self {
            Sym::Val(v) => Some(v),
            _ => None,
        }
    }

    /// True when no read contributes to the value.
    pub fn is_static(&self) -> bool {
        match self {
            Sym::Val(_) | Sym::Lo12(_) => true,
            Sym::Read(_) => false,
            Sym::Op(_, a, b, _) => a.is_static() && b.is_static(),
        }
    }

    pub fn reads(&self, out: &mut BTreeSet<usize>) {
        match self {
            Sym::Read(k) => {
                out.insert(*k);
            }
            Sym::Op(_, a, b, _) => {
                a.reads(out);
                b.reads(out);
            }
            _ => {}
        }
    }

    /// Shift every read index by `base`.
    pub fn rebase(&self, base: usize) -> Sym {
        match self {
            Sym::Read(k) => Sym::Read(k + base),
            Sym::Op(op, a, b, w) => Sym::Op(*op, Box::new(a.rebase(base)), Box::new(b.rebase(base)), *w),
            s => s.clone(),
        }
    }

    /// Truncate a constant to `w`; symbolic values are assumed already in range.
    pub fn wrap(self, w: Width) -> Sym {
        match self {
            Sym::Val(Value::Int(v)) => Sym::int(w.wrap(v)),
            s => s,
        }
    }

    /// Build `a op b`, folding constants and the identities compilers use to
    /// fake dependencies (`r^r`, `r-r`, `r==r`, `x+0`).
    pub fn op(op: BinOp, a: Sym, b: Sym, w: Width) -> Sym {
        if a.is_static() && b.is_static() {
            if let Eval::Known(v) = eval_op(op, &a, &b, w, &[]) {
                return Sym::Val(v);
            }
        }
        if a == b {
            match op {
                BinOp::Sub | BinOp::Xor => return Sym::int(0),
                BinOp::Cmp(c) => {
                    let eq = matches!(c, BranchCond::Eq | BranchCond::Le | BranchCond::Ge);
                    return Sym::int(eq as i64);
                }
                BinOp::Add => {}
            }
        }
        let zero = |s: &Sym| matches!(s, Sym::Val(Value::Int(0)));
        match op {
            BinOp::Add | BinOp::Xor if zero(&b) => return a,
            BinOp::Add | BinOp::Xor if zero(&a) => return b,
            BinOp::Sub if zero(&b) => return a,
            _ => {}
        }
        if op == BinOp::Add {
            if let (Sym::Op(BinOp::Add, x, c1, w1), Sym::Val(Value::Int(c2))) = (&a, &b) {
                if let Sym::Val(Value::Int(c1)) = **c1 {
                    if *w1 == w {
                        return Sym::op(BinOp::Add, (**x).clone(), Sym::int(w.wrap(c1.wrapping_add(*c2))), w);
                    }
                }
            }
            if let Sym::Val(Value::Int(_)) = a {
                if !matches!(b, Sym::Val(_)) {
                    return Sym::op(BinOp::Add, b, a, w);
                }
            }
        }
        Sym::Op(op, Box::new(a), Box::new(b), w)
    }

    pub fn eval(&self, reads: &[Option<Value>]) -> Eval {
        match self {
            Sym::Val(v) => Eval::Known(v.clone()),
            Sym::Read(k) => match reads.get(*k).cloned().flatten() {
                Some(v) => Eval::Known(v),
                None => Eval::Unknown,
            },
            Sym::Lo12(_) => Eval::Invalid,
            Sym::Op(op, a, b, w) => eval_op(*op, a, b, *w, reads),
        }
    }
}

fn eval_op(op: BinOp, a: &Sym, b: &Sym, w: Width, reads: &[Option<Value>]) -> Eval {
    // Page-relative addressing is resolved syntactically.
    if op == BinOp::Add {
        for (base, off) in [(a, b), (b, a)] {
            if let Sym::Lo12(sym) = off {
                return match base.eval(reads) {
                    Eval::Known(Value::Page(p)) if &p == sym => Eval::Known(Value::Addr(p)),
                    Eval::Known(_) | Eval::Invalid => Eval::Invalid,
                    Eval::Unknown => Eval::Unknown,
                };
            }
        }
    }
    let (va, vb) = match (a.eval(reads), b.eval(reads)) {
        (Eval::Invalid, _) | (_, Eval::Invalid) => return Eval::Invalid,
        (Eval::Known(x), Eval::Known(y)) => (x, y),
        _ => return Eval::Unknown,
    };
    let v = match (op, &va, &vb) {
        (BinOp::Add, Value::Int(x), Value::Int(y)) => Value::Int(w.wrap(x.wrapping_add(*y))),
        (BinOp::Sub, Value::Int(x), Value::Int(y)) => Value::Int(w.wrap(x.wrapping_sub(*y))),
        (BinOp::Xor, Value::Int(x), Value::Int(y)) => Value::Int(w.wrap(x ^ y)),
        (BinOp::Add, addr @ (Value::Addr(_) | Value::Page(_)), Value::Int(0))
        | (BinOp::Add, Value::Int(0), addr @ (Value::Addr(_) | Value::Page(_))) => addr.clone(),
        (BinOp::Sub | BinOp::Xor, x, y) if x == y => Value::Int(0),
        (BinOp::Cmp(c), Value::Int(x), Value::Int(y)) => {
            let r = match c {
                BranchCond::Eq => x == y,
                BranchCond::Ne => x != y,
                BranchCond::Lt => x < y,
                BranchCond::Ge => x >= y,
                BranchCond::Gt => x > y,
                BranchCond::Le => x <= y,
            };
            Value::Int(r as i64)
        }
        (BinOp::Cmp(BranchCond::Eq), x, y) => Value::Int((x == y) as i64),
        (BinOp::Cmp(BranchCond::Ne), x, y) => Value::Int((x != y) as i64),
        _ => return Eval::Invalid,
    };
    Eval::Known(v)
}
