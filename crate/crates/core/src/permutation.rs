//! Case tables of candidate transpositions, the selection rules that make
//! some of them mandatory, and enumeration of non-crossing permutation sets.

use std::fmt;

use crate::coherence::{majorizes, CoherenceVector};
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

/// Swap of two levels. Stored 0-based with `x < y`; displayed 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transposition {
    x: usize,
    y: usize,
}

impl Transposition {
    /// 0-based constructor; the two levels may be given in either order.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a transposition needs two distinct levels");
        Self { x: a.min(b), y: a.max(b) }
    }

    /// 1-based constructor matching the usual level labels.
    pub fn levels(x: usize, y: usize) -> Self {
        assert!(x >= 1 && y >= 1, "level labels start at 1");
        Self::new(x - 1, y - 1)
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn y(&self) -> usize {
        self.y
    }

    /// 1-based pair.
    pub fn labels(&self) -> (usize, usize) {
        (self.x + 1, self.y + 1)
    }

    pub fn apply(&self, level: usize) -> usize {
        if level == self.x {
            self.y
        } else if level == self.y {
            self.x
        } else {
            level
        }
    }

    pub fn is_adjacent(&self) -> bool {
        self.y == self.x + 1
    }
}

impl fmt::Display for Transposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x + 1, self.y + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    /// `psi_k <= phi_k`
    Le,
    /// `psi_k >= phi_k`
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CasePattern {
    relations: Vec<Relation>,
}

impl CasePattern {
    pub fn new(relations: Vec<Relation>) -> Result<Self> {
        let d = relations.len();
        if d == 0 {
            return Err(Error::Empty);
        }
        if d >= 2 {
            if relations[0] != Relation::Le {
                return Err(Error::InvalidPattern("first level must be LE".into()));
            }
            if relations[d - 1] != Relation::Ge {
                return Err(Error::InvalidPattern("last level must be GE".into()));
            }
        }
        Ok(Self { relations })
    }

    /// Pattern with LE at the given 1-based levels and GE everywhere else.
    pub fn from_le_levels(dim: usize, le: &[usize]) -> Result<Self> {
        let relations = (1..=dim)
            .map(|k| if le.contains(&k) { Relation::Le } else { Relation::Ge })
            .collect();
        Self::new(relations)
    }

    /// All `2^(d-2)` admissible patterns of dimension `dim >= 2`.
    pub fn all(dim: usize) -> impl Iterator<Item = CasePattern> {
        assert!(dim >= 2);
        let inner = dim - 2;
        (0u64..1 << inner).map(move |mask| {
            let mut relations = Vec::with_capacity(dim);
            relations.push(Relation::Le);
            relations.extend((0..inner).map(|b| {
                if mask >> b & 1 == 1 {
                    Relation::Ge
                } else {
                    Relation::Le
                }
            }));
            relations.push(Relation::Ge);
            CasePattern { relations }
        })
    }

    pub fn dim(&self) -> usize {
        self.relations.len()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn get(&self, level: usize) -> Relation {
        self.relations[level]
    }
}

impl fmt::Display for CasePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self
            .relations
            .iter()
            .map(|r| match r {
                Relation::Le => "LE",
                Relation::Ge => "GE",
            })
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Classifies every level as LE or GE. Ties within `tol.maj` count as LE;
/// the first level is always LE and the last always GE.
pub fn sign_pattern(
    source: &CoherenceVector,
    target: &CoherenceVector,
    tol: &Tolerances,
) -> Result<CasePattern> {
    let report = majorizes(target, source, tol)?;
    if let Some(k) = report.first_violation {
        return Err(Error::Majorization { first_violation: k });
    }
    let d = source.dim();
    let mut relations: Vec<Relation> = (0..d)
        .map(|k| {
            if source.amp(k) <= target.amp(k) + tol.maj {
                Relation::Le
            } else {
                Relation::Ge
            }
        })
        .collect();
    relations[0] = Relation::Le;
    if d >= 2 {
        relations[d - 1] = Relation::Ge;
    }
    Ok(CasePattern { relations })
}

/// Grid of candidate transpositions: LE levels label columns, GE levels label
/// rows, and `(x, y)` is an entry whenever `y > x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationTable {
    dim: usize,
    columns: Vec<usize>,
    rows: Vec<usize>,
    entries: Vec<Transposition>,
}

impl PermutationTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Entries in lexicographic order.
    pub fn entries(&self) -> &[Transposition] {
        &self.entries
    }

    pub fn zeta(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, t: Transposition) -> bool {
        self.entries.binary_search(&t).is_ok()
    }

    pub fn column(&self, x: usize) -> impl Iterator<Item = Transposition> + '_ {
        self.entries.iter().copied().filter(move |t| t.x == x)
    }

    pub fn row(&self, y: usize) -> impl Iterator<Item = Transposition> + '_ {
        self.entries.iter().copied().filter(move |t| t.y == y)
    }
}

pub fn build_table(pattern: &CasePattern) -> PermutationTable {
    let d = pattern.dim();
    let columns: Vec<usize> = (0..d).filter(|&k| pattern.get(k) == Relation::Le).collect();
    let rows: Vec<usize> = (0..d).filter(|&k| pattern.get(k) == Relation::Ge).collect();
    let mut entries: Vec<Transposition> = columns
        .iter()
        .flat_map(|&x| rows.iter().filter(move |&&y| y > x).map(move |&y| Transposition::new(x, y)))
        .collect();
    entries.sort();
    PermutationTable {
        dim: d,
        columns,
        rows,
        entries,
    }
}

/// Strict interleaving of the two level intervals. Nested intervals, shared
/// endpoints and identical transpositions do not cross.
pub fn crossing(a: Transposition, b: Transposition) -> bool {
    (a.x < b.x && b.x < a.y && a.y < b.y) || (b.x < a.x && a.x < b.y && b.y < a.y)
}

/// Entries forced into every permutation set: the only entry of a column, the
/// only entry of a row, adjacent swaps `(u, u+1)`, and `(1, d)`. Sorted.
pub fn mandatory_permutations(table: &PermutationTable) -> Vec<Transposition> {
    let d = table.dim;
    let mut out: Vec<Transposition> = table
        .entries
        .iter()
        .copied()
        .filter(|t| {
            t.is_adjacent()
                || (t.x == 0 && t.y + 1 == d)
                || table.column(t.x).count() == 1
                || table.row(t.y).count() == 1
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Identity plus a list of transpositions. The identity is implicit: member
/// `0` is always the identity and member `i >= 1` is `transpositions[i - 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationSet {
    dim: usize,
    transpositions: Vec<Transposition>,
}

impl PermutationSet {
    pub fn new(dim: usize, transpositions: Vec<Transposition>) -> Result<Self> {
        if let Some(t) = transpositions.iter().find(|t| t.y >= dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: t.y + 1,
            });
        }
        Ok(Self { dim, transpositions })
    }

    /// From 1-based `(x, y)` labels.
    pub fn from_levels(dim: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(dim, pairs.iter().map(|&(x, y)| Transposition::levels(x, y)).collect())
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            transpositions: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn transpositions(&self) -> &[Transposition] {
        &self.transpositions
    }

    /// Number of members including the identity.
    pub fn len(&self) -> usize {
        self.transpositions.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Member `i`, `None` for the identity.
    pub fn member(&self, i: usize) -> Option<Transposition> {
        if i == 0 {
            None
        } else {
            Some(self.transpositions[i - 1])
        }
    }

    /// Image of `level` under member `i`.
    pub fn apply(&self, i: usize, level: usize) -> usize {
        self.member(i).map_or(level, |t| t.apply(level))
    }

    pub fn contains(&self, t: Transposition) -> bool {
        self.transpositions.contains(&t)
    }

    pub fn is_non_crossing(&self) -> bool {
        let ts = &self.transpositions;
        (0..ts.len()).all(|i| (i + 1..ts.len()).all(|j| !crossing(ts[i], ts[j])))
    }

    /// 1-based `[x, y]` pairs.
    pub fn labels(&self) -> Vec<[usize; 2]> {
        self.transpositions
            .iter()
            .map(|t| [t.x + 1, t.y + 1])
            .collect()
    }
}

impl fmt::Display for PermutationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{I")?;
        for t in &self.transpositions {
            write!(f, ", {t}")?;
        }
        write!(f, "}}")
    }
}

/// Lazily enumerates permutation sets of a table in lexicographic order.
///
/// Candidates are built by depth-first search over the sorted entries; a
/// branch is cut as soon as it crosses a chosen entry, skips a mandatory
/// entry, or cannot reach `d - 1` members.
#[derive(Debug, Clone)]
pub struct SpEnumeration {
    dim: usize,
    entries: Vec<Transposition>,
    /// `next_mand[i]` is the first mandatory index `>= i`, or `entries.len()`.
    next_mand: Vec<usize>,
    /// Number of mandatory entries at index `>= i`.
    mand_after: Vec<usize>,
    size: usize,
    chosen: Vec<usize>,
    cursor: Vec<usize>,
    pending: Option<PermutationSet>,
}

impl SpEnumeration {
    fn new(table: &PermutationTable) -> Self {
        let entries = table.entries.clone();
        let n = entries.len();
        let mandatory = mandatory_permutations(table);
        let is_mand: Vec<bool> = entries.iter().map(|t| mandatory.contains(t)).collect();
        let mut next_mand = vec![n; n + 1];
        let mut mand_after = vec![0; n + 1];
        for i in (0..n).rev() {
            next_mand[i] = if is_mand[i] { i } else { next_mand[i + 1] };
            mand_after[i] = mand_after[i + 1] + usize::from(is_mand[i]);
        }
        let size = table.dim.saturating_sub(1);
        let mut it = Self {
            dim: table.dim,
            entries,
            next_mand,
            mand_after,
            size,
            chosen: Vec::with_capacity(size),
            cursor: vec![0],
            pending: None,
        };
        if size == 0 {
            it.cursor.clear();
            it.pending = Some(PermutationSet::identity(table.dim));
        }
        it
    }

    fn advance(&mut self) -> Option<Vec<usize>> {
        let n = self.entries.len();
        loop {
            let &k = self.cursor.last()?;
            let depth = self.chosen.len();
            let start = self.chosen.last().map_or(0, |c| c + 1);
            let remaining = self.size - depth;
            let limit = if self.next_mand[start] < n {
                self.next_mand[start]
            } else {
                n.saturating_sub(1)
            };
            if n < remaining || k > limit || k > n - remaining {
                self.cursor.pop();
                if let Some(last) = self.chosen.pop() {
                    if let Some(c) = self.cursor.last_mut() {
                        *c = last + 1;
                    }
                }
                continue;
            }
            let t = self.entries[k];
            let crosses = self.chosen.iter().any(|&c| crossing(self.entries[c], t));
            if crosses || self.mand_after[k + 1] > remaining - 1 {
                *self.cursor.last_mut().unwrap() += 1;
                continue;
            }
            if remaining == 1 {
                *self.cursor.last_mut().unwrap() += 1;
                if self.mand_after[k + 1] == 0 {
                    let mut found = self.chosen.clone();
                    found.push(k);
                    return Some(found);
                }
                continue;
            }
            self.chosen.push(k);
            self.cursor.push(k + 1);
        }
    }

    fn fetch(&mut self) -> Option<PermutationSet> {
        self.advance().map(|idx| PermutationSet {
            dim: self.dim,
            transpositions: idx.into_iter().map(|i| self.entries[i]).collect(),
        })
    }
}

impl Iterator for SpEnumeration {
    type Item = PermutationSet;

    fn next(&mut self) -> Option<PermutationSet> {
        match self.pending.take() {
            Some(sp) => Some(sp),
            None => self.fetch(),
        }
    }
}

/// Every `(d-1)`-subset of the table's entries that contains all mandatory
/// entries and is pairwise non-crossing, in lexicographic order.
///
/// Fails with [`Error::NoCandidate`] when the stream would be empty.
pub fn enumerate_sps(table: &PermutationTable) -> Result<SpEnumeration> {
    let mut it = SpEnumeration::new(table);
    if it.pending.is_none() {
        it.pending = it.fetch();
    }
    if it.pending.is_none() {
        return Err(Error::NoCandidate);
    }
    Ok(it)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(x: usize, y: usize) -> Transposition {
        Transposition::levels(x, y)
    }

    fn ts(pairs: &[(usize, usize)]) -> Vec<Transposition> {
        pairs.iter().map(|&(x, y)| t(x, y)).collect()
    }

    fn table9() -> PermutationTable {
        build_table(&CasePattern::from_le_levels(9, &[1, 4, 5, 7, 8]).unwrap())
    }

    /// Reference enumeration: all (d-1)-subsets, filtered afterwards.
    fn brute_sps(table: &PermutationTable) -> Vec<Vec<Transposition>> {
        let e = table.entries();
        let m = mandatory_permutations(table);
        let k = table.dim() - 1;
        let mut out = Vec::new();
        let n = e.len();
        if k > n {
            return out;
        }
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let set: Vec<Transposition> = idx.iter().map(|&i| e[i]).collect();
            let ok_m = m.iter().all(|x| set.contains(x));
            let ok_c = (0..k).all(|i| (i + 1..k).all(|j| !crossing(set[i], set[j])));
            if ok_m && ok_c {
                out.push(set);
            }
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return out;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    #[test]
    fn sign_pattern_examples() {
        let tol = Tolerances::default();
        let s = CoherenceVector::from_mu(&[0.4, 0.25, 0.25, 0.1], &tol).unwrap();
        let g = CoherenceVector::from_mu(&[0.45, 0.3, 0.15, 0.1], &tol).unwrap();
        let p = sign_pattern(&s, &g, &tol).unwrap();
        assert_eq!(p.to_string(), "[LE,LE,GE,GE]");

        let p = sign_pattern(&s, &s, &tol).unwrap();
        assert_eq!(p.to_string(), "[LE,LE,LE,GE]");

        let bad = sign_pattern(&g, &s, &tol);
        assert!(matches!(bad, Err(Error::Majorization { first_violation: 1 })));
    }

    #[test]
    fn table_four_level() {
        let p = CasePattern::from_le_levels(4, &[1, 2]).unwrap();
        let table = build_table(&p);
        assert_eq!(table.entries(), ts(&[(1, 3), (1, 4), (2, 3), (2, 4)]).as_slice());
        assert_eq!(mandatory_permutations(&table), ts(&[(1, 4), (2, 3)]));
    }

    #[test]
    fn table_nine_level() {
        let table = table9();
        assert_eq!(table.zeta(), 10);
        assert_eq!(
            table.entries(),
            ts(&[(1, 2), (1, 3), (1, 6), (1, 9), (4, 6), (4, 9), (5, 6), (5, 9), (7, 9), (8, 9)])
                .as_slice()
        );
        let mut want = ts(&[(7, 9), (8, 9), (1, 2), (1, 3), (5, 6), (1, 9)]);
        want.sort();
        assert_eq!(mandatory_permutations(&table), want);
    }

    #[test]
    fn single_row_and_column() {
        for d in 2..10 {
            let le: Vec<usize> = (1..d).collect();
            let row = build_table(&CasePattern::from_le_levels(d, &le).unwrap());
            let want: Vec<Transposition> = (1..d).map(|x| t(x, d)).collect();
            assert_eq!(row.entries(), want.as_slice());
            let sps: Vec<_> = enumerate_sps(&row).unwrap().collect();
            assert_eq!(sps.len(), 1);
            assert_eq!(sps[0].transpositions(), want.as_slice());

            let col = build_table(&CasePattern::from_le_levels(d, &[1]).unwrap());
            let want: Vec<Transposition> = (2..=d).map(|y| t(1, y)).collect();
            assert_eq!(col.entries(), want.as_slice());
            assert_eq!(mandatory_permutations(&col), want);
        }
    }

    #[test]
    fn crossing_examples() {
        assert!(crossing(t(1, 3), t(2, 4)));
        assert!(crossing(t(2, 4), t(1, 3)));
        assert!(!crossing(t(2, 3), t(1, 4)));
        assert!(!crossing(t(7, 9), t(8, 9)));
        assert!(!crossing(t(1, 2), t(2, 3)));
        assert!(!crossing(t(1, 2), t(3, 4)));
        assert!(!crossing(t(1, 3), t(1, 3)));
    }

    #[test]
    fn enumerate_four_level_green_sets() {
        let table = build_table(&CasePattern::from_le_levels(4, &[1, 2]).unwrap());
        let sps: Vec<Vec<Transposition>> = enumerate_sps(&table)
            .unwrap()
            .map(|s| s.transpositions().to_vec())
            .collect();
        assert_eq!(
            sps,
            vec![ts(&[(1, 3), (1, 4), (2, 3)]), ts(&[(1, 4), (2, 3), (2, 4)])]
        );
    }

    #[test]
    fn enumerate_nine_level_contains_three_sets() {
        let sps: Vec<Vec<Transposition>> = enumerate_sps(&table9())
            .unwrap()
            .map(|s| s.transpositions().to_vec())
            .collect();
        let base = [(7, 9), (8, 9), (1, 2), (1, 3), (5, 6), (1, 9)];
        for extra in [[(1, 6), (4, 6)], [(4, 9), (4, 6)], [(4, 9), (5, 9)]] {
            let mut want = ts(&base);
            want.extend(ts(&extra));
            want.sort();
            assert!(sps.contains(&want), "missing {want:?}");
        }
        assert_eq!(sps, brute_sps(&table9()));
    }

    #[test]
    fn one_level_has_identity_only() {
        let table = build_table(&CasePattern::new(vec![Relation::Le]).unwrap());
        let sps: Vec<_> = enumerate_sps(&table).unwrap().collect();
        assert_eq!(sps, vec![PermutationSet::identity(1)]);
    }

    #[test]
    fn two_level() {
        let table = build_table(&CasePattern::from_le_levels(2, &[1]).unwrap());
        let sps: Vec<_> = enumerate_sps(&table).unwrap().collect();
        assert_eq!(sps.len(), 1);
        assert_eq!(sps[0].to_string(), "{I, (1,2)}");
    }

    #[test]
    fn enumeration_matches_brute_force_exhaustively() {
        for d in 2..=9 {
            for p in CasePattern::all(d) {
                let table = build_table(&p);
                let fast: Vec<Vec<Transposition>> = enumerate_sps(&table)
                    .unwrap()
                    .map(|s| s.transpositions().to_vec())
                    .collect();
                assert_eq!(fast, brute_sps(&table), "pattern {p}");
            }
        }
    }

    #[test]
    fn mandatory_never_cross_exhaustively() {
        for d in 2..=9 {
            for p in CasePattern::all(d) {
                let table = build_table(&p);
                for m in mandatory_permutations(&table) {
                    for e in table.entries() {
                        assert!(!crossing(m, *e), "{p}: {m} crosses {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn zeta_bound_small() {
        for d in 3usize..=10 {
            let hi = (d / 2) * d.div_ceil(2);
            for p in CasePattern::all(d) {
                let z = build_table(&p).zeta();
                assert!(d - 1 <= z && z <= hi, "{p}: zeta {z}");
                if z == d - 1 {
                    assert_eq!(enumerate_sps(&build_table(&p)).unwrap().count(), 1);
                }
            }
        }
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(CasePattern::new(vec![Relation::Ge, Relation::Ge]).is_err());
        assert!(CasePattern::new(vec![Relation::Le, Relation::Le]).is_err());
        assert!(CasePattern::new(vec![]).is_err());
    }

    fn arb_pattern() -> impl Strategy<Value = CasePattern> {
        (2usize..=12).prop_flat_map(|d| {
            proptest::collection::vec(any::<bool>(), d - 2).prop_map(move |bits| {
                let mut r = vec![Relation::Le];
                r.extend(bits.iter().map(|&b| if b { Relation::Ge } else { Relation::Le }));
                r.push(Relation::Ge);
                CasePattern::new(r).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn crossing_is_symmetric(a in 0usize..12, b in 0usize..12, c in 0usize..12, e in 0usize..12) {
            prop_assume!(a != b && c != e);
            let (p, q) = (Transposition::new(a, b), Transposition::new(c, e));
            prop_assert_eq!(crossing(p, q), crossing(q, p));
            prop_assert!(!crossing(p, p));
        }

        #[test]
        fn enumerated_sets_satisfy_rules(p in arb_pattern()) {
            let table = build_table(&p);
            let mand = mandatory_permutations(&table);
            let sps: Vec<PermutationSet> = enumerate_sps(&table).unwrap().collect();
            prop_assert!(!sps.is_empty());
            for sp in &sps {
                prop_assert_eq!(sp.len(), p.dim());
                prop_assert!(sp.is_non_crossing());
                for m in &mand {
                    prop_assert!(sp.contains(*m));
                }
                for x in sp.transpositions() {
                    prop_assert!(table.contains(*x));
                }
            }
            let keys: Vec<&[Transposition]> = sps.iter().map(|s| s.transpositions()).collect();
            prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
            let again: Vec<PermutationSet> = enumerate_sps(&table).unwrap().collect();
            prop_assert_eq!(sps, again);
        }

        #[test]
        fn table_is_cross_product(p in arb_pattern()) {
            let table = build_table(&p);
            let d = p.dim();
            for x in 0..d {
                for y in x + 1..d {
                    let want = p.get(x) == Relation::Le && p.get(y) == Relation::Ge;
                    prop_assert_eq!(table.contains(Transposition::new(x, y)), want);
                }
            }
        }
    }
}
