//! Coarse-to-fine class hierarchy with per-level urgency relations.
//!
//! Levels are indexed from 0 (coarsest, directly under the implicit root)
//! to `num_levels() - 1` (finest). Every level below the coarsest carries a
//! total map from its classes to the classes of the level above.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Relation of one class to another within a level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Priority {
    MoreUrgent,
    LessUrgent,
    Equivalent,
    Incomparable,
}

/// Which error direction is treated as severe.
///
/// Only one convention exists: predicting a class strictly less urgent than
/// the truth (under-diagnosis) is severe. Over-diagnosis, equivalent and
/// incomparable confusions are not.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PriorityConvention {
    #[default]
    UnderDiagnosisPenalized,
}

impl PriorityConvention {
    pub fn is_severe(self, relation: &PriorityMatrix, predicted: usize, truth: usize) -> bool {
        match self {
            PriorityConvention::UnderDiagnosisPenalized => {
                relation.get(truth, predicted) == Priority::MoreUrgent
            }
        }
    }
}

/// Dense `n x n` relation; `get(i, j)` is how class `i` relates to class `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityMatrix {
    n: usize,
    cells: Vec<Priority>,
}

impl PriorityMatrix {
    /// Every pair incomparable, diagonal equivalent.
    pub fn incomparable(n: usize) -> Self {
        let mut cells = vec![Priority::Incomparable; n * n];
        for i in 0..n {
            cells[i * n + i] = Priority::Equivalent;
        }
        Self { n, cells }
    }

    /// Total order by index: class `i` is more urgent than `j` iff `i > j`.
    pub fn chain(n: usize) -> Self {
        let mut m = Self::incomparable(n);
        for i in 0..n {
            for j in 0..n {
                if i > j {
                    m.set(i, j, Priority::MoreUrgent);
                    m.set(j, i, Priority::LessUrgent);
                }
            }
        }
        m
    }

    pub fn all_equivalent(n: usize) -> Self {
        Self {
            n,
            cells: vec![Priority::Equivalent; n * n],
        }
    }

    /// Builds a relation from `(more, less)` and equivalence pairs, filling in
    /// converses. Conflicting pairs are kept as given so that
    /// [`Hierarchy::validate`] can report them.
    pub fn from_pairs(
        n: usize,
        more_urgent: &[(usize, usize)],
        equivalent: &[(usize, usize)],
    ) -> Result<Self> {
        let mut m = Self::incomparable(n);
        let check = |i: usize| {
            if i >= n {
                Err(Error::InvalidHierarchy(format!(
                    "priority pair references class {i} but level has {n} classes"
                )))
            } else {
                Ok(())
            }
        };
        for &(i, j) in equivalent {
            check(i)?;
            check(j)?;
            m.set(i, j, Priority::Equivalent);
            m.set(j, i, Priority::Equivalent);
        }
        for &(i, j) in more_urgent {
            check(i)?;
            check(j)?;
            m.set(i, j, Priority::MoreUrgent);
            if m.get(j, i) == Priority::Incomparable {
                m.set(j, i, Priority::LessUrgent);
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Priority {
        self.cells[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Priority) {
        self.cells[i * self.n + j] = p;
    }

    pub fn is_more_urgent(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == Priority::MoreUrgent
    }

    /// Transitive closure of both the equivalence and the more-urgent relation.
    /// Only fills cells that are currently incomparable.
    pub fn closure(&self) -> Self {
        let mut m = self.clone();
        let n = self.n;
        loop {
            let mut changed = false;
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        if i == j || m.get(i, j) != Priority::Incomparable {
                            continue;
                        }
                        let (a, b) = (m.get(i, k), m.get(k, j));
                        let derived = match (a, b) {
                            (Priority::MoreUrgent, Priority::MoreUrgent) => Priority::MoreUrgent,
                            (Priority::Equivalent, Priority::Equivalent) => Priority::Equivalent,
                            _ => continue,
                        };
                        m.set(i, j, derived);
                        changed = true;
                    }
                }
            }
            // converses of newly derived pairs
            for i in 0..n {
                for j in 0..n {
                    if m.get(i, j) == Priority::MoreUrgent && m.get(j, i) == Priority::Incomparable
                    {
                        m.set(j, i, Priority::LessUrgent);
                        changed = true;
                    }
                }
            }
            if !changed {
                return m;
            }
        }
    }

    /// `(more, less)` pairs, row-major.
    pub fn more_urgent_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.is_more_urgent(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Off-diagonal equivalent pairs with `i < j`.
    pub fn equivalent_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) == Priority::Equivalent {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub names: Vec<String>,
    /// Parent class in the level above; empty for the coarsest level.
    pub parents: Vec<usize>,
    pub priority: PriorityMatrix,
}

impl Level {
    pub fn new(names: Vec<String>, parents: Vec<usize>, priority: PriorityMatrix) -> Self {
        Self {
            names,
            parents,
            priority,
        }
    }

    /// Level with generated class names `c0, c1, ...`.
    pub fn unnamed(parents: Vec<usize>, priority: PriorityMatrix) -> Self {
        let names = (0..priority.len()).map(|i| format!("c{i}")).collect();
        Self::new(names, parents, priority)
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IssueKind {
    NoLevels,
    EmptyLevel,
    PriorityShape,
    UnexpectedParentMap,
    NonTotalParentMap,
    NonSurjectiveParentMap,
    NotReflexive,
    NotSymmetric,
    Irreflexivity,
    Antisymmetry,
    ConverseMismatch,
    Transitivity,
    InheritanceViolated,
}

impl IssueKind {
    pub fn label(self) -> &'static str {
        match self {
            IssueKind::NoLevels => "hierarchy has no levels",
            IssueKind::EmptyLevel => "empty level",
            IssueKind::PriorityShape => "priority relation shape mismatch",
            IssueKind::UnexpectedParentMap => "coarsest level has a parent_map",
            IssueKind::NonTotalParentMap => "non-total parent_map",
            IssueKind::NonSurjectiveParentMap => "non-surjective parent_map",
            IssueKind::NotReflexive => "equivalence not reflexive",
            IssueKind::NotSymmetric => "equivalence not symmetric",
            IssueKind::Irreflexivity => "more-urgent not irreflexive",
            IssueKind::Antisymmetry => "more-urgent not antisymmetric",
            IssueKind::ConverseMismatch => "more-urgent without less-urgent converse",
            IssueKind::Transitivity => "transitivity violated",
            IssueKind::InheritanceViolated => "priority inheritance violated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub kind: IssueKind,
    pub level: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level {
            Some(l) => write!(f, "level {l}: {} ({})", self.kind.label(), self.detail),
            None => write!(f, "{} ({})", self.kind.label(), self.detail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    /// True if any rendered issue contains `needle`.
    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.to_string().contains(needle))
    }

    fn push(&mut self, kind: IssueKind, level: Option<usize>, detail: impl Into<String>) {
        self.issues.push(Issue {
            kind,
            level,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        f.write_str(&lines.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    levels: Vec<Level>,
    convention: PriorityConvention,
}

impl Hierarchy {
    /// Builds and validates a hierarchy.
    pub fn new(levels: Vec<Level>) -> Result<Self> {
        let h = Self::new_unchecked(levels);
        let report = h.validate();
        if report.is_empty() {
            Ok(h)
        } else {
            Err(Error::InvalidHierarchy(report.to_string()))
        }
    }

    pub fn new_unchecked(levels: Vec<Level>) -> Self {
        Self {
            levels,
            convention: PriorityConvention::UnderDiagnosisPenalized,
        }
    }

    /// Single level totally ordered by index (`0 < 1 < ... < n-1` in urgency).
    pub fn single_chain(n: usize) -> Self {
        Self::new_unchecked(vec![Level::unnamed(Vec::new(), PriorityMatrix::chain(n))])
    }

    /// Every level a chain by index, with the given parent maps for levels 1..
    pub fn chains(sizes: &[usize], parent_maps: &[Vec<usize>]) -> Result<Self> {
        if parent_maps.len() + 1 != sizes.len() {
            return Err(Error::InvalidHierarchy(
                "need one parent map per non-coarsest level".into(),
            ));
        }
        let levels = sizes
            .iter()
            .enumerate()
            .map(|(h, &n)| {
                let parents = if h == 0 {
                    Vec::new()
                } else {
                    parent_maps[h - 1].clone()
                };
                Level::unnamed(parents, PriorityMatrix::chain(n))
            })
            .collect();
        Self::new(levels)
    }

    pub fn convention(&self) -> PriorityConvention {
        self.convention
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn level(&self, level: usize) -> Result<&Level> {
        self.levels.get(level).ok_or(Error::LevelOutOfRange {
            level,
            levels: self.levels.len(),
        })
    }

    pub fn num_classes(&self, level: usize) -> Result<usize> {
        Ok(self.level(level)?.num_classes())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Level::num_classes).collect()
    }

    pub fn priority(&self, level: usize) -> Result<&PriorityMatrix> {
        Ok(&self.level(level)?.priority)
    }

    fn check_class(&self, level: usize, index: usize) -> Result<()> {
        let classes = self.num_classes(level)?;
        if index >= classes {
            return Err(Error::ClassOutOfRange {
                level,
                index,
                classes,
            });
        }
        Ok(())
    }

    pub fn parent(&self, level: usize, class: usize) -> Result<usize> {
        if level == 0 {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.levels.len(),
            });
        }
        self.check_class(level, class)?;
        Ok(self.levels[level].parents[class])
    }

    /// Whether predicting `predicted` for a sample of class `truth` is a severe
    /// (under-diagnosis) mistake at `level`.
    pub fn is_severe(&self, level: usize, predicted: usize, truth: usize) -> Result<bool> {
        self.check_class(level, predicted)?;
        self.check_class(level, truth)?;
        Ok(self
            .convention
            .is_severe(&self.levels[level].priority, predicted, truth))
    }

    /// Sums fine-level probabilities into the parent level.
    pub fn aggregate_to_parent(&self, fine_level: usize, fine_probs: &[f64]) -> Result<Vec<f64>> {
        if fine_level == 0 || fine_level >= self.levels.len() {
            return Err(Error::LevelOutOfRange {
                level: fine_level,
                levels: self.levels.len(),
            });
        }
        let fine = &self.levels[fine_level];
        if fine_probs.len() != fine.num_classes() {
            return Err(Error::Shape(format!(
                "expected {} fine probabilities, got {}",
                fine.num_classes(),
                fine_probs.len()
            )));
        }
        let sum: f64 = fine_probs.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(self.sum_into_parent(fine_level, fine_probs))
    }

    /// Unchecked summation used by the losses (also maps gradients the other
    /// way via [`Hierarchy::parent`]).
    pub(crate) fn sum_into_parent(&self, fine_level: usize, fine: &[f64]) -> Vec<f64> {
        let mut coarse = vec![0.0; self.levels[fine_level - 1].num_classes()];
        for (j, &p) in fine.iter().enumerate() {
            coarse[self.levels[fine_level].parents[j]] += p;
        }
        coarse
    }

    /// Class index at every level (coarsest first) for a finest-level class.
    pub fn labels_for(&self, finest_class: usize) -> Result<Vec<usize>> {
        let finest = self.finest();
        self.check_class(finest, finest_class)?;
        let mut labels = vec![0; self.levels.len()];
        let mut c = finest_class;
        for h in (0..self.levels.len()).rev() {
            labels[h] = c;
            if h > 0 {
                c = self.levels[h].parents[c];
            }
        }
        Ok(labels)
    }

    /// Finest classes whose ancestor at `level` is `class`.
    pub fn leaves_under(&self, level: usize, class: usize) -> Result<Vec<usize>> {
        self.check_class(level, class)?;
        let finest = self.finest();
        let mut out = Vec::new();
        for leaf in 0..self.levels[finest].num_classes() {
            if self.labels_for(leaf)?[level] == class {
                out.push(leaf);
            }
        }
        Ok(out)
    }

    /// Checks that `labels` (coarsest first) follow the parent maps.
    pub fn labels_consistent(&self, labels: &[usize]) -> bool {
        if labels.len() != self.levels.len() {
            return false;
        }
        for (h, &c) in labels.iter().enumerate() {
            if c >= self.levels[h].num_classes() {
                return false;
            }
            if h > 0 && self.levels[h].parents[c] != labels[h - 1] {
                return false;
            }
        }
        true
    }

    /// The class that is more urgent than every other distinct class in
    /// `classes`, if one exists.
    pub fn most_urgent(&self, level: usize, classes: &[usize]) -> Option<usize> {
        let rel = &self.levels.get(level)?.priority;
        classes.iter().copied().find(|&m| {
            m < rel.len()
                && classes
                    .iter()
                    .all(|&x| x == m || (x < rel.len() && rel.is_more_urgent(m, x)))
        })
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.levels.is_empty() {
            report.push(IssueKind::NoLevels, None, "at least one level is required");
            return report;
        }
        for (h, level) in self.levels.iter().enumerate() {
            let n = level.num_classes();
            if n == 0 {
                report.push(IssueKind::EmptyLevel, Some(h), "no classes");
                continue;
            }
            if level.priority.len() != n {
                report.push(
                    IssueKind::PriorityShape,
                    Some(h),
                    format!(
                        "{} classes but {}x{} relation",
                        n,
                        level.priority.len(),
                        level.priority.len()
                    ),
                );
                continue;
            }
            validate_relation(&mut report, h, &level.priority);

            if h == 0 {
                if !level.parents.is_empty() {
                    report.push(IssueKind::UnexpectedParentMap, Some(h), "must be empty");
                }
                continue;
            }
            let parent_n = self.levels[h - 1].num_classes();
            if level.parents.len() != n {
                report.push(
                    IssueKind::NonTotalParentMap,
                    Some(h),
                    format!("{} classes but {} parent entries", n, level.parents.len()),
                );
                continue;
            }
            if let Some((c, &p)) = level
                .parents
                .iter()
                .enumerate()
                .find(|(_, &p)| p >= parent_n)
            {
                report.push(
                    IssueKind::NonTotalParentMap,
                    Some(h),
                    format!("class {c} maps to missing parent {p}"),
                );
                continue;
            }
            let mut covered = vec![false; parent_n];
            for &p in &level.parents {
                covered[p] = true;
            }
            if let Some(p) = covered.iter().position(|c| !c) {
                report.push(
                    IssueKind::NonSurjectiveParentMap,
                    Some(h),
                    format!("parent class {p} has no children"),
                );
            }
            let parent_rel = &self.levels[h - 1].priority;
            if parent_rel.len() != parent_n {
                continue;
            }
            'outer: for a in 0..n {
                for b in 0..n {
                    let (pa, pb) = (level.parents[a], level.parents[b]);
                    if parent_rel.is_more_urgent(pa, pb) && !level.priority.is_more_urgent(a, b) {
                        report.push(
                            IssueKind::InheritanceViolated,
                            Some(h),
                            format!(
                                "parent {pa} is more urgent than parent {pb} but child {a} is not more urgent than child {b}"
                            ),
                        );
                        break 'outer;
                    }
                }
            }
        }
        report
    }
}

fn validate_relation(report: &mut ValidationReport, h: usize, rel: &PriorityMatrix) {
    let n = rel.len();
    for i in 0..n {
        match rel.get(i, i) {
            Priority::Equivalent => {}
            Priority::MoreUrgent | Priority::LessUrgent => report.push(
                IssueKind::Irreflexivity,
                Some(h),
                format!("class {i} ordered against itself"),
            ),
            Priority::Incomparable => {
                report.push(IssueKind::NotReflexive, Some(h), format!("class {i}"))
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (rel.get(i, j), rel.get(j, i));
            if a == Priority::Equivalent && b != Priority::Equivalent {
                report.push(
                    IssueKind::NotSymmetric,
                    Some(h),
                    format!("{i} ~ {j} but not {j} ~ {i}"),
                );
            }
            if a == Priority::MoreUrgent && b == Priority::MoreUrgent && i < j {
                report.push(
                    IssueKind::Antisymmetry,
                    Some(h),
                    format!("{i} and {j} each more urgent"),
                );
            }
            if a == Priority::MoreUrgent
                && !matches!(b, Priority::LessUrgent | Priority::MoreUrgent)
            {
                report.push(
                    IssueKind::ConverseMismatch,
                    Some(h),
                    format!("{i} more urgent than {j} but {j} is {b:?} to {i}"),
                );
            }
            if a == Priority::LessUrgent && b != Priority::MoreUrgent {
                report.push(
                    IssueKind::ConverseMismatch,
                    Some(h),
                    format!("{i} less urgent than {j} but {j} is {b:?} to {i}"),
                );
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                let (ij, jk, ik) = (rel.get(i, j), rel.get(j, k), rel.get(i, k));
                if ij == Priority::MoreUrgent
                    && jk == Priority::MoreUrgent
                    && ik != Priority::MoreUrgent
                {
                    report.push(
                        IssueKind::Transitivity,
                        Some(h),
                        format!("{i} > {j} > {k} but not {i} > {k}"),
                    );
                    return;
                }
                if ij == Priority::Equivalent
                    && jk == Priority::Equivalent
                    && ik != Priority::Equivalent
                {
                    report.push(
                        IssueKind::Transitivity,
                        Some(h),
                        format!("{i} ~ {j} ~ {k} but not {i} ~ {k}"),
                    );
                    return;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3_two_level() -> Hierarchy {
        // coarse: {0,1} -> 0, {2} -> 1
        Hierarchy::chains(&[2, 3], &[vec![0, 0, 1]]).unwrap()
    }

    #[test]
    fn chain_hierarchy_is_well_formed() {
        let h = Hierarchy::chains(&[2, 4, 6], &[vec![0, 0, 1, 1], vec![0, 0, 1, 2, 3, 3]]).unwrap();
        assert!(h.validate().is_empty());
    }

    #[test]
    fn missing_parent_entry_reported() {
        let levels = vec![
            Level::unnamed(vec![], PriorityMatrix::chain(2)),
            Level::unnamed(vec![0, 0], PriorityMatrix::chain(3)),
        ];
        let report = Hierarchy::new_unchecked(levels).validate();
        assert!(report.contains("non-total parent_map"), "{report}");
    }

    #[test]
    fn non_surjective_parent_map_reported() {
        let levels = vec![
            Level::unnamed(vec![], PriorityMatrix::chain(2)),
            Level::unnamed(vec![1, 1, 1], PriorityMatrix::chain(3)),
        ];
        let report = Hierarchy::new_unchecked(levels).validate();
        assert!(report.has(IssueKind::NonSurjectiveParentMap));
    }

    /// Exhaustive oracle: for every 2-level hierarchy whose coarse level is
    /// `1 > 0`, fine level has 4 classes with parents {0,0,1,1} and an
    /// arbitrary consistent total order on the fine classes, inheritance holds
    /// iff both children of parent 1 outrank both children of parent 0.
    #[test]
    fn inheritance_check_matches_pairwise_enumeration() {
        let parents = vec![0, 0, 1, 1];
        let mut perms = Vec::new();
        permutations(&mut vec![0, 1, 2, 3], 0, &mut perms);
        for rank in perms {
            // rank[c] = urgency position of class c
            let mut rel = PriorityMatrix::incomparable(4);
            for a in 0..4 {
                for b in 0..4 {
                    if rank[a] > rank[b] {
                        rel.set(a, b, Priority::MoreUrgent);
                    } else if rank[a] < rank[b] {
                        rel.set(a, b, Priority::LessUrgent);
                    }
                }
            }
            let h = Hierarchy::new_unchecked(vec![
                Level::unnamed(vec![], PriorityMatrix::chain(2)),
                Level::unnamed(parents.clone(), rel),
            ]);
            let mut expected_ok = true;
            for a in 0..4 {
                for b in 0..4 {
                    if parents[a] == 1 && parents[b] == 0 && rank[a] < rank[b] {
                        expected_ok = false;
                    }
                }
            }
            let report = h.validate();
            assert_eq!(report.is_empty(), expected_ok, "rank {rank:?}: {report}");
            if !expected_ok {
                assert!(report.contains("priority inheritance violated"));
            }
        }
    }

    fn permutations(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == v.len() {
            out.push(v.clone());
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permutations(v, k + 1, out);
            v.swap(k, i);
        }
    }

    #[test]
    fn antisymmetry_and_transitivity_violations() {
        let rel = PriorityMatrix::from_pairs(3, &[(0, 1), (1, 0)], &[]).unwrap();
        let h = Hierarchy::new_unchecked(vec![Level::unnamed(vec![], rel)]);
        assert!(h.validate().has(IssueKind::Antisymmetry));

        let rel = PriorityMatrix::from_pairs(3, &[(2, 1), (1, 0)], &[]).unwrap();
        let h = Hierarchy::new_unchecked(vec![Level::unnamed(vec![], rel.clone())]);
        assert!(h.validate().has(IssueKind::Transitivity));
        let closed = Hierarchy::new_unchecked(vec![Level::unnamed(vec![], rel.closure())]);
        assert!(closed.validate().is_empty());
        assert_eq!(rel.closure(), PriorityMatrix::chain(3));
    }

    #[test]
    fn severity_direction() {
        let h = Hierarchy::single_chain(3);
        assert!(h.is_severe(0, 0, 2).unwrap());
        assert!(!h.is_severe(0, 2, 0).unwrap());
        assert!(!h.is_severe(0, 1, 1).unwrap());
        assert!(h.is_severe(0, 3, 0).is_err());
    }

    #[test]
    fn equivalent_and_incomparable_are_never_severe() {
        let rel = PriorityMatrix::from_pairs(3, &[(2, 0)], &[(0, 1)]).unwrap();
        let h = Hierarchy::new_unchecked(vec![Level::unnamed(vec![], rel)]);
        assert!(!h.is_severe(0, 0, 1).unwrap());
        assert!(!h.is_severe(0, 1, 0).unwrap());
        // 1 vs 2 incomparable
        assert!(!h.is_severe(0, 1, 2).unwrap());
        assert!(!h.is_severe(0, 2, 1).unwrap());
        assert!(h.is_severe(0, 0, 2).unwrap());
    }

    #[test]
    fn aggregation_examples() {
        let h = chain3_two_level();
        assert_eq!(
            h.aggregate_to_parent(1, &[0.2, 0.3, 0.5]).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            h.aggregate_to_parent(1, &[0.0, 0.0, 1.0]).unwrap(),
            vec![0.0, 1.0]
        );
        let h4 = Hierarchy::chains(&[2, 4], &[vec![0, 0, 1, 1]]).unwrap();
        assert_eq!(
            h4.aggregate_to_parent(1, &[0.25; 4]).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(matches!(
            h.aggregate_to_parent(1, &[0.2, 0.3, 0.4]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(h.aggregate_to_parent(0, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn labels_and_most_urgent() {
        let h = chain3_two_level();
        assert_eq!(h.labels_for(2).unwrap(), vec![1, 2]);
        assert_eq!(h.labels_for(1).unwrap(), vec![0, 1]);
        assert_eq!(h.leaves_under(0, 0).unwrap(), vec![0, 1]);
        assert_eq!(h.most_urgent(1, &[0, 2, 0]), Some(2));
        assert!(h.labels_consistent(&[1, 2]));
        assert!(!h.labels_consistent(&[0, 2]));

        let rel = PriorityMatrix::from_pairs(3, &[(2, 0)], &[(0, 1)]).unwrap();
        let h = Hierarchy::new_unchecked(vec![Level::unnamed(vec![], rel)]);
        // 1 and 2 incomparable: no unique maximum
        assert_eq!(h.most_urgent(0, &[1, 2]), None);
    }
}
