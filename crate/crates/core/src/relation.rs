//! Dense bit-matrix binary relations over the events of one execution.

use std::fmt;

/// A set of events, as a bit vector indexed by event id.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct EventSet {
    n: usize,
    bits: Vec<u64>,
}

impl EventSet {
    pub fn empty(n: usize) -> Self {
        EventSet {
            n,
            bits: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            if f(i) {
                s.insert(i);
            }
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.contains(i))
    }

    pub fn union(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a | b)
    }

    pub fn intersection(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a & b)
    }

    pub fn complement(&self) -> Self {
        let mut s = self.zip(self, |a, _| !a);
        s.clear_tail();
        s
    }

    fn zip(&self, o: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.n, o.n, "event sets over different executions");
        EventSet {
            n: self.n,
            bits: self.bits.iter().zip(&o.bits).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    fn clear_tail(&mut self) {
        if !self.n.is_multiple_of(64) {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << (self.n % 64)) - 1;
            }
        }
    }
}

impl fmt::Debug for EventSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A binary relation over `n` events, stored row-major as bit vectors.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Relation {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Relation {
            n,
            words,
            bits: vec![0; words * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut r = Self::empty(n);
        for i in 0..n {
            r.insert(i, i);
        }
        r
    }

    /// `[S]`: the identity restricted to a set.
    pub fn identity_on(set: &EventSet) -> Self {
        let mut r = Self::empty(set.universe());
        for i in set.iter() {
            r.insert(i, i);
        }
        r
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut r = Self::empty(n);
        for (a, b) in pairs {
            r.insert(a, b);
        }
        r
    }

    /// Cartesian product `A x B`.
    pub fn product(a: &EventSet, b: &EventSet) -> Self {
        let mut r = Self::empty(a.universe());
        for i in a.iter() {
            let row = r.row_mut(i);
            row.copy_from_slice(&b.bits);
        }
        r
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn insert(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] |= 1 << (b % 64);
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] &= !(1 << (b % 64));
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|w| *w == 0)
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |a| {
            (0..self.n)
                .filter(move |&b| self.contains(a, b))
                .map(move |b| (a, b))
        })
    }

    /// Successors of `a`.
    pub fn successors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&b| self.contains(a, b))
    }

    pub fn union(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a | b)
    }

    pub fn intersection(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a & b)
    }

    pub fn difference(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a & !b)
    }

    fn zip(&self, o: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.n, o.n, "relations over different executions");
        Relation {
            n: self.n,
            words: self.words,
            bits: self.bits.iter().zip(&o.bits).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// Relational composition `self ; o`.
    pub fn seq(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n, "relations over different executions");
        let mut out = Self::empty(self.n);
        for a in 0..self.n {
            for b in self.successors(a).collect::<Vec<_>>() {
                let (src, dst) = (b * self.words, a * self.words);
                for w in 0..self.words {
                    out.bits[dst + w] |= o.bits[src + w];
                }
            }
        }
        out
    }

    pub fn inverse(&self) -> Self {
        Self::from_pairs(self.n, self.pairs().map(|(a, b)| (b, a)))
    }

    /// `r+`, by Warshall's algorithm on bit rows.
    pub fn transitive_closure(&self) -> Self {
        let mut r = self.clone();
        for k in 0..self.n {
            let row_k: Vec<u64> = r.row(k).to_vec();
            for i in 0..self.n {
                if r.contains(i, k) {
                    for (w, bits) in r.row_mut(i).iter_mut().zip(&row_k) {
                        *w |= bits;
                    }
                }
            }
        }
        r
    }

    /// `r?`
    pub fn reflexive(&self) -> Self {
        self.union(&Self::identity(self.n))
    }

    /// `r*`
    pub fn reflexive_transitive_closure(&self) -> Self {
        self.transitive_closure().reflexive()
    }

    pub fn is_irreflexive(&self) -> bool {
        (0..self.n).all(|i| !self.contains(i, i))
    }

    pub fn is_acyclic(&self) -> bool {
        self.transitive_closure().is_irreflexive()
    }

    pub fn domain(&self) -> EventSet {
        EventSet::from_fn(self.n, |i| self.row(i).iter().any(|w| *w != 0))
    }

    pub fn range(&self) -> EventSet {
        let mut s = EventSet::empty(self.n);
        for i in 0..self.n {
            for (acc, w) in s.bits.iter_mut().zip(self.row(i)) {
                *acc |= w;
            }
        }
        s
    }
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.pairs()).finish()
    }
}
