//! Events on realizations: upward-closed cluster families, edge-monotone
//! families, boolean combinations, and exact correlation reports.
//!
//! An event is `s`-out-cluster increasing when enlarging the out-cluster of
//! `s` can never destroy it. Such an event depends on the realization only
//! through that cluster (two realizations with equal clusters each dominate
//! the other), so it is exactly an upward-closed family of vertex sets
//! containing `s`. [`UpwardClosedFamily`] stores the family by its minimal
//! members.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::exact::Rational;
use crate::graph::{Graph, VertexSet};
use crate::models::{
    enumerate_states, fold_states, Caps, ClusterTable, EdgeState, ModelSpec, Realization,
    WeightTable, WorldState,
};
use crate::{Error, Result};

fn minimize(mut sets: Vec<u64>) -> Vec<u64> {
    sets.sort_by_key(|s| (s.count_ones(), *s));
    sets.dedup();
    let mut kept: Vec<u64> = Vec::with_capacity(sets.len());
    for s in sets {
        if !kept.iter().any(|&k| k & !s == 0) {
            kept.push(s);
        }
    }
    kept.sort_unstable();
    kept
}

/// Upward-closed family of vertex sets, all containing `root`.
///
/// An empty generator list is the impossible event.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpwardClosedFamily {
    root: usize,
    generators: Vec<VertexSet>,
}

impl UpwardClosedFamily {
    /// Canonicalizes: adds `root` to every generator and keeps the minimal ones.
    pub fn new(root: usize, generators: impl IntoIterator<Item = VertexSet>) -> Self {
        let gens = generators.into_iter().map(|g| g.with(root).bits()).collect();
        UpwardClosedFamily {
            root,
            generators: minimize(gens).into_iter().map(VertexSet::from_bits).collect(),
        }
    }

    pub fn always(root: usize) -> Self {
        Self::new(root, [VertexSet::EMPTY])
    }

    pub fn never(root: usize) -> Self {
        UpwardClosedFamily { root, generators: Vec::new() }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn generators(&self) -> &[VertexSet] {
        &self.generators
    }

    pub fn contains(&self, set: VertexSet) -> bool {
        self.generators.iter().any(|g| g.is_subset(set))
    }

    fn same_root(&self, other: &Self) -> Result<()> {
        if self.root == other.root {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "families rooted at {} and {} cannot be combined",
                self.root, other.root
            )))
        }
    }

    /// Union of the two events.
    pub fn or(&self, other: &Self) -> Result<Self> {
        self.same_root(other)?;
        Ok(Self::new(self.root, self.generators.iter().chain(&other.generators).copied()))
    }

    /// Intersection of the two events.
    pub fn and(&self, other: &Self) -> Result<Self> {
        self.same_root(other)?;
        let gens: Vec<_> = self
            .generators
            .iter()
            .flat_map(|&a| other.generators.iter().map(move |&b| a | b))
            .collect();
        Ok(Self::new(self.root, gens))
    }
}

/// The event `targets ⊆ out-cluster(s)`.
pub fn make_reachability_family(s: usize, targets: VertexSet) -> UpwardClosedFamily {
    UpwardClosedFamily::new(s, [targets])
}

/// Increasing event of edge percolation, by its minimal edge sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeUpwardFamily {
    generators: Vec<u64>,
}

impl EdgeUpwardFamily {
    pub fn new(generators: impl IntoIterator<Item = u64>) -> Self {
        EdgeUpwardFamily { generators: minimize(generators.into_iter().collect()) }
    }

    pub fn from_edge_lists(lists: &[Vec<usize>]) -> Result<Self> {
        let mut gens = Vec::new();
        for list in lists {
            let mut mask = 0u64;
            for &e in list {
                if e >= 64 {
                    return Err(Error::Event(format!("edge index {e} out of range")));
                }
                mask |= 1 << e;
            }
            gens.push(mask);
        }
        Ok(Self::new(gens))
    }

    pub fn generators(&self) -> &[u64] {
        &self.generators
    }

    /// `true` iff some generator is contained in the open-edge set.
    pub fn contains(&self, open_edges: u64) -> bool {
        self.generators.iter().any(|&g| g & !open_edges == 0)
    }

    pub fn and(&self, other: &Self) -> Self {
        Self::new(self.generators.iter().flat_map(|&a| other.generators.iter().map(move |&b| a | b)))
    }

    fn max_edge(&self) -> Option<usize> {
        self.generators.iter().map(|g| 64 - g.leading_zeros() as usize).max().filter(|&x| x > 0)
    }

    /// Parses `edges:0,1|2` (generators separated by `|`).
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Event(text.to_string());
        let body = text.trim().strip_prefix("edges:").ok_or_else(bad)?;
        let lists = body
            .split('|')
            .map(|alt| {
                alt.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_edge_lists(&lists)
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        match self.max_edge() {
            Some(k) if k > g.m() => Err(Error::Event(format!("edge index {} out of range", k - 1))),
            _ => Ok(()),
        }
    }
}

/// Open-edge bit set of an edge-percolation state.
pub fn open_edges(states: &[EdgeState]) -> u64 {
    states
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, EdgeState::Present))
        .fold(0, |acc, (k, _)| acc | 1 << k)
}

/// Arbitrary test on the per-edge states.
pub type EdgeStateTest = Arc<dyn Fn(&[EdgeState]) -> bool + Send + Sync>;

/// A decidable event on realizations.
#[derive(Clone)]
pub enum ReachPredicate {
    True,
    /// Out-cluster of the family's root belongs to the family.
    Family(UpwardClosedFamily),
    /// In-cluster of the family's root belongs to the family.
    InFamily(UpwardClosedFamily),
    /// Out-cluster of `root` misses `set`.
    Avoid { root: usize, set: VertexSet },
    EdgeIs { edge: usize, state: EdgeState },
    And(Vec<ReachPredicate>),
    Or(Vec<ReachPredicate>),
    Not(Box<ReachPredicate>),
    /// Arbitrary state predicate; reads edge states.
    Custom(EdgeStateTest),
}

impl std::fmt::Debug for ReachPredicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReachPredicate::True => write!(f, "True"),
            ReachPredicate::Family(x) => f.debug_tuple("Family").field(x).finish(),
            ReachPredicate::InFamily(x) => f.debug_tuple("InFamily").field(x).finish(),
            ReachPredicate::Avoid { root, set } => {
                f.debug_struct("Avoid").field("root", root).field("set", set).finish()
            }
            ReachPredicate::EdgeIs { edge, state } => {
                f.debug_struct("EdgeIs").field("edge", edge).field("state", state).finish()
            }
            ReachPredicate::And(v) => f.debug_tuple("And").field(v).finish(),
            ReachPredicate::Or(v) => f.debug_tuple("Or").field(v).finish(),
            ReachPredicate::Not(x) => f.debug_tuple("Not").field(x).finish(),
            ReachPredicate::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ReachPredicate {
    /// `{s -> a}`.
    pub fn reach(s: usize, a: usize) -> Self {
        ReachPredicate::Family(make_reachability_family(s, VertexSet::singleton(a)))
    }

    /// `{a -> t}`, i.e. `a` in the in-cluster of `t`.
    pub fn reached_from(t: usize, a: usize) -> Self {
        ReachPredicate::InFamily(make_reachability_family(t, VertexSet::singleton(a)))
    }

    pub fn and(self, other: ReachPredicate) -> Self {
        ReachPredicate::And(vec![self, other])
    }

    pub fn negate(self) -> Self {
        ReachPredicate::Not(Box::new(self))
    }

    pub fn eval<R: Realization + ?Sized>(&self, r: &R) -> bool {
        match self {
            ReachPredicate::True => true,
            ReachPredicate::Family(f) => f.contains(r.out_cluster(f.root())),
            ReachPredicate::InFamily(f) => f.contains(r.in_cluster(f.root())),
            ReachPredicate::Avoid { root, set } => r.out_cluster(*root).is_disjoint(*set),
            ReachPredicate::EdgeIs { edge, state } => {
                r.edge_states().and_then(|s| s.get(*edge)) == Some(state)
            }
            ReachPredicate::And(v) => v.iter().all(|p| p.eval(r)),
            ReachPredicate::Or(v) => v.iter().any(|p| p.eval(r)),
            ReachPredicate::Not(p) => !p.eval(r),
            ReachPredicate::Custom(f) => r.edge_states().is_some_and(|s| f(s)),
        }
    }

    /// Vertices whose out- and in-clusters the predicate reads.
    pub fn roots(&self) -> (VertexSet, VertexSet) {
        match self {
            ReachPredicate::Family(f) => (VertexSet::singleton(f.root()), VertexSet::EMPTY),
            ReachPredicate::InFamily(f) => (VertexSet::EMPTY, VertexSet::singleton(f.root())),
            ReachPredicate::Avoid { root, .. } => (VertexSet::singleton(*root), VertexSet::EMPTY),
            ReachPredicate::And(v) | ReachPredicate::Or(v) => {
                v.iter().map(Self::roots).fold((VertexSet::EMPTY, VertexSet::EMPTY), |a, b| {
                    (a.0 | b.0, a.1 | b.1)
                })
            }
            ReachPredicate::Not(p) => p.roots(),
            _ => (VertexSet::EMPTY, VertexSet::EMPTY),
        }
    }

    pub fn reads_edge_states(&self) -> bool {
        match self {
            ReachPredicate::EdgeIs { .. } | ReachPredicate::Custom(_) => true,
            ReachPredicate::And(v) | ReachPredicate::Or(v) => v.iter().any(Self::reads_edge_states),
            ReachPredicate::Not(p) => p.reads_edge_states(),
            _ => false,
        }
    }

    /// Checks every vertex and edge reference against `g`.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let (outs, ins) = self.roots();
        let mut referenced = outs | ins;
        self.collect_sets(&mut referenced);
        if let Some(v) = referenced.iter().find(|&v| v >= g.n()) {
            return Err(crate::GraphError::IndexOutOfRange(v).into());
        }
        self.check_edges(g.m())
    }

    fn collect_sets(&self, acc: &mut VertexSet) {
        match self {
            ReachPredicate::Family(f) | ReachPredicate::InFamily(f) => {
                for g in f.generators() {
                    *acc = *acc | *g;
                }
            }
            ReachPredicate::Avoid { set, .. } => *acc = *acc | *set,
            ReachPredicate::And(v) | ReachPredicate::Or(v) => v.iter().for_each(|p| p.collect_sets(acc)),
            ReachPredicate::Not(p) => p.collect_sets(acc),
            _ => {}
        }
    }

    fn check_edges(&self, m: usize) -> Result<()> {
        match self {
            ReachPredicate::EdgeIs { edge, .. } if *edge >= m => {
                Err(Error::Event(format!("edge index {edge} out of range")))
            }
            ReachPredicate::And(v) | ReachPredicate::Or(v) => v.iter().try_for_each(|p| p.check_edges(m)),
            ReachPredicate::Not(p) => p.check_edges(m),
            _ => Ok(()),
        }
    }

    /// Converts a family-only predicate into the equivalent out-cluster
    /// family rooted at `s`. Negation and avoidance are not increasing and
    /// are rejected.
    pub fn to_out_family(&self, s: usize) -> Result<UpwardClosedFamily> {
        match self {
            ReachPredicate::True => Ok(UpwardClosedFamily::always(s)),
            ReachPredicate::Family(f) if f.root() == s => Ok(f.clone()),
            ReachPredicate::And(v) => v
                .iter()
                .try_fold(UpwardClosedFamily::always(s), |acc, p| acc.and(&p.to_out_family(s)?)),
            ReachPredicate::Or(v) => v
                .iter()
                .try_fold(UpwardClosedFamily::never(s), |acc, p| acc.or(&p.to_out_family(s)?)),
            other => Err(Error::Event(format!(
                "{other:?} is not an out-cluster family rooted at vertex {s}"
            ))),
        }
    }

    /// Parses the event grammar against `g`'s vertex names:
    ///
    /// ```text
    /// true | reach:s->a,b|c | in:t<-a,b | avoid:s-|x,y
    ///      | and(E;E;..) | or(E;E;..) | not(E)
    /// ```
    ///
    /// In `reach`/`in`, `|` separates alternative target sets.
    pub fn parse(text: &str, g: &Graph) -> Result<Self> {
        let bad = || Error::Event(text.to_string());
        let t = text.trim();
        if t == "true" {
            return Ok(ReachPredicate::True);
        }
        for (kw, ctor) in [
            ("and(", ReachPredicate::And as fn(Vec<ReachPredicate>) -> ReachPredicate),
            ("or(", ReachPredicate::Or),
        ] {
            if let Some(inner) = t.strip_prefix(kw).and_then(|s| s.strip_suffix(')')) {
                let parts = split_top_level(inner).ok_or_else(bad)?;
                let items = parts.iter().map(|p| Self::parse(p, g)).collect::<Result<Vec<_>>>()?;
                if items.is_empty() {
                    return Err(bad());
                }
                return Ok(ctor(items));
            }
        }
        if let Some(inner) = t.strip_prefix("not(").and_then(|s| s.strip_suffix(')')) {
            return Ok(Self::parse(inner, g)?.negate());
        }
        let names = |list: &str| -> Result<VertexSet> {
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| g.index_of(s).map_err(Error::from))
                .collect()
        };
        if let Some(body) = t.strip_prefix("reach:") {
            let (s, targets) = body.split_once("->").ok_or_else(bad)?;
            let s = g.index_of(s.trim())?;
            let gens = targets.split('|').map(names).collect::<Result<Vec<_>>>()?;
            return Ok(ReachPredicate::Family(UpwardClosedFamily::new(s, gens)));
        }
        if let Some(body) = t.strip_prefix("in:") {
            let (tv, sources) = body.split_once("<-").ok_or_else(bad)?;
            let tv = g.index_of(tv.trim())?;
            let gens = sources.split('|').map(names).collect::<Result<Vec<_>>>()?;
            return Ok(ReachPredicate::InFamily(UpwardClosedFamily::new(tv, gens)));
        }
        if let Some(body) = t.strip_prefix("avoid:") {
            let (s, xs) = body.split_once("-|").ok_or_else(bad)?;
            return avoidance_predicate(g.index_of(s.trim())?, names(xs)?);
        }
        Err(bad())
    }
}

/// Splits on `;` outside parentheses.
fn split_top_level(s: &str) -> Option<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ';' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    parts.push(s[start..].trim());
    Some(parts.into_iter().filter(|p| !p.is_empty()).collect())
}

/// Predicate "out-cluster of `f.root()` lies in `f`".
pub fn family_event_predicate(f: &UpwardClosedFamily) -> ReachPredicate {
    ReachPredicate::Family(f.clone())
}

/// The event that the out-cluster of `s` misses `x`. Rejects `s ∈ x`,
/// which would be the empty event.
pub fn avoidance_predicate(s: usize, x: VertexSet) -> Result<ReachPredicate> {
    if x.contains(s) {
        return Err(Error::Precondition(format!("avoidance set contains its root {s}")));
    }
    if x.is_empty() {
        return Ok(ReachPredicate::True);
    }
    Ok(ReachPredicate::Avoid { root: s, set: x })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Zero,
}

impl Sign {
    pub fn of(x: &Rational) -> Sign {
        if x.is_positive() {
            Sign::Positive
        } else if x.is_negative() {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Conditional probabilities of two events and their covariance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub p_a: Rational,
    pub p_b: Rational,
    pub p_ab: Rational,
    pub p_cond: Rational,
    pub covariance: Rational,
    pub sign: Sign,
}

impl CorrelationReport {
    /// Builds the report from unconditional `P(A∧C), P(B∧C), P(A∧B∧C), P(C)`.
    pub fn from_joint(a_c: Rational, b_c: Rational, ab_c: Rational, c: Rational) -> Result<Self> {
        if c.is_zero() {
            return Err(Error::ZeroProbabilityCondition);
        }
        let p_a = a_c.checked_div(&c)?;
        let p_b = b_c.checked_div(&c)?;
        let p_ab = ab_c.checked_div(&c)?;
        let covariance = &p_ab - &(&p_a * &p_b);
        let sign = Sign::of(&covariance);
        Ok(CorrelationReport { p_a, p_b, p_ab, p_cond: c, covariance, sign })
    }
}

/// Exact `P(A|C), P(B|C), P(A∧B|C)` and covariance under `model`.
pub fn correlation_report(
    g: &Graph,
    model: &ModelSpec,
    a: &ReachPredicate,
    b: &ReachPredicate,
    cond: &ReachPredicate,
    caps: &Caps,
) -> Result<CorrelationReport> {
    for p in [a, b, cond] {
        p.validate(g)?;
    }
    use std::collections::HashMap;
    type Hists = [HashMap<u64, u64>; 4];
    let hists: Hists = fold_states(
        g,
        model,
        caps,
        Hists::default,
        |h: &mut Hists, view| {
            if !cond.eval(view) {
                return;
            }
            let (ea, eb) = (a.eval(view), b.eval(view));
            for (slot, hit) in [true, ea, eb, ea && eb].into_iter().enumerate() {
                if hit {
                    *h[slot].entry(view.signature).or_insert(0) += 1;
                }
            }
        },
        |mut x, y| {
            for (hx, hy) in x.iter_mut().zip(y) {
                for (k, v) in hy {
                    *hx.entry(k).or_insert(0) += v;
                }
            }
            x
        },
    )?;
    let mut w = WeightTable::new(model);
    let [c, ac, bc, abc] = hists.map(|h| w.total(&h));
    CorrelationReport::from_joint(ac, bc, abc, c)
}

/// Correlation report evaluated on a prebuilt cluster table.
pub fn correlation_from_table(
    table: &ClusterTable,
    a: &ReachPredicate,
    b: &ReachPredicate,
    cond: &ReachPredicate,
) -> Result<CorrelationReport> {
    let c = table.probability(cond)?;
    let ac = table.probability(&a.clone().and(cond.clone()))?;
    let bc = table.probability(&b.clone().and(cond.clone()))?;
    let abc = table.probability(&ReachPredicate::And(vec![a.clone(), b.clone(), cond.clone()]))?;
    CorrelationReport::from_joint(ac, bc, abc, c)
}

/// Largest edge count accepted by [`is_out_cluster_increasing`].
pub const INCREASING_CHECK_MAX_EDGES: usize = 12;

#[derive(Clone, Debug)]
pub struct IncreasingCheck {
    pub increasing: bool,
    /// `(omega, omega_prime)` with `C_s(omega) ⊇ C_s(omega_prime)`, the
    /// predicate true on `omega_prime` and false on `omega`.
    pub witness: Option<(WorldState, WorldState)>,
}

/// Decides whether `pred` is `s`-out-cluster increasing in model `O`.
///
/// States are grouped by the out-cluster of `s`; the pairwise check then runs
/// over distinct clusters rather than state pairs.
pub fn is_out_cluster_increasing(g: &Graph, s: usize, pred: &ReachPredicate) -> Result<IncreasingCheck> {
    if s >= g.n() {
        return Err(crate::GraphError::IndexOutOfRange(s).into());
    }
    pred.validate(g)?;
    let caps = Caps { max_states: 1 << INCREASING_CHECK_MAX_EDGES };
    // cluster -> (some state where pred holds, some state where it fails)
    let mut by_cluster: BTreeMap<VertexSet, (Option<WorldState>, Option<WorldState>)> = BTreeMap::new();
    for state in enumerate_states(g, &ModelSpec::RandomOrientation, &caps)? {
        let cluster = state.out_cluster(g, s);
        let holds = pred.eval(&(g, &state));
        let slot = by_cluster.entry(cluster).or_default();
        let target = if holds { &mut slot.0 } else { &mut slot.1 };
        if target.is_none() {
            *target = Some(state);
        }
    }
    for (small, (small_true, _)) in &by_cluster {
        let Some(omega_prime) = small_true else { continue };
        for (large, (_, large_false)) in &by_cluster {
            if let (true, Some(omega)) = (small.is_subset(*large), large_false) {
                return Ok(IncreasingCheck {
                    increasing: false,
                    witness: Some((omega.clone(), omega_prime.clone())),
                });
            }
        }
    }
    Ok(IncreasingCheck { increasing: true, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::event_probability;
    use proptest::prelude::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn triangle() -> Graph {
        Graph::parse_edge_list("s a\na b\nb s").unwrap()
    }

    fn prob(g: &Graph, pred: &ReachPredicate) -> Rational {
        event_probability(g, &ModelSpec::RandomOrientation, pred, &Caps::default()).unwrap()
    }

    #[test]
    fn reachability_family_basics() {
        let (s, a, b) = (0, 1, 2);
        let f = make_reachability_family(s, VertexSet::singleton(a));
        assert_eq!(f.generators(), [VertexSet::from_bits(0b011)]);
        assert!(f.contains(VertexSet::from_bits(0b111)));
        assert!(!f.contains(VertexSet::from_bits(0b101)));
        let t = make_reachability_family(s, VertexSet::EMPTY);
        assert_eq!(t.generators(), [VertexSet::singleton(s)]);
        assert_eq!(t, UpwardClosedFamily::always(s));
        let _ = b;
    }

    #[test]
    fn family_probabilities_on_triangle() {
        let g = triangle();
        let always = family_event_predicate(&UpwardClosedFamily::always(0));
        assert_eq!(prob(&g, &always), Rational::one());
        let sa = family_event_predicate(&make_reachability_family(0, VertexSet::singleton(1)));
        assert_eq!(prob(&g, &sa), r("5/8"));
        let either = UpwardClosedFamily::new(0, [VertexSet::singleton(1), VertexSet::singleton(2)]);
        assert_eq!(prob(&g, &family_event_predicate(&either)), r("3/4"));
    }

    #[test]
    fn avoidance_cases() {
        let g = triangle();
        assert!(matches!(avoidance_predicate(0, VertexSet::EMPTY), Ok(ReachPredicate::True)));
        let avoid_b = avoidance_predicate(0, VertexSet::singleton(2)).unwrap();
        assert_eq!(prob(&g, &avoid_b), r("3/8"));
        assert!(avoidance_predicate(0, VertexSet::from_bits(0b101)).is_err());
    }

    #[test]
    fn triangle_correlation() {
        let g = triangle();
        let rep = correlation_report(
            &g,
            &ModelSpec::RandomOrientation,
            &ReachPredicate::reach(0, 1),
            &ReachPredicate::reach(0, 2),
            &ReachPredicate::True,
            &Caps::default(),
        )
        .unwrap();
        assert_eq!((rep.p_a.clone(), rep.p_b.clone()), (r("5/8"), r("5/8")));
        assert_eq!(rep.p_ab, r("1/2"));
        assert_eq!(rep.covariance, r("7/64"));
        assert_eq!(rep.sign, Sign::Positive);
    }

    #[test]
    fn zero_probability_condition_is_an_error() {
        let g = triangle();
        let never = ReachPredicate::reach(0, 1).negate().and(ReachPredicate::reach(0, 1));
        let err = correlation_report(
            &g,
            &ModelSpec::RandomOrientation,
            &ReachPredicate::True,
            &ReachPredicate::True,
            &never,
            &Caps::default(),
        );
        assert!(matches!(err, Err(Error::ZeroProbabilityCondition)));
    }

    #[test]
    fn independent_components_have_zero_covariance() {
        let g = Graph::parse_edge_list("a b\nc d").unwrap();
        for model in ["o", "e:p=1/3", "d:p=2/5"] {
            let rep = correlation_report(
                &g,
                &model.parse().unwrap(),
                &ReachPredicate::reach(0, 1),
                &ReachPredicate::reach(2, 3),
                &ReachPredicate::True,
                &Caps::default(),
            )
            .unwrap();
            assert!(rep.covariance.is_zero());
            assert_eq!(rep.sign, Sign::Zero);
        }
    }

    #[test]
    fn increasing_check_accepts_reachability() {
        let g = Graph::parse_edge_list("s a\na b\nb s\nb t").unwrap();
        let check = is_out_cluster_increasing(&g, 0, &ReachPredicate::reach(0, 1)).unwrap();
        assert!(check.increasing);
        assert!(check.witness.is_none());
    }

    #[test]
    fn increasing_check_rejects_edge_direction() {
        let g = Graph::parse_edge_list("s a\na b").unwrap();
        let pred = ReachPredicate::EdgeIs { edge: 1, state: EdgeState::Forward };
        let check = is_out_cluster_increasing(&g, 0, &pred).unwrap();
        assert!(!check.increasing);
        let (omega, omega_prime) = check.witness.unwrap();
        assert!(omega_prime.out_cluster(&g, 0).is_subset(omega.out_cluster(&g, 0)));
        assert!(pred.eval(&(&g, &omega_prime)));
        assert!(!pred.eval(&(&g, &omega)));
    }

    #[test]
    fn increasing_check_rejects_avoidance() {
        let g = triangle();
        let pred = avoidance_predicate(0, VertexSet::singleton(2)).unwrap();
        let check = is_out_cluster_increasing(&g, 0, &pred).unwrap();
        assert!(!check.increasing);
        let (omega, omega_prime) = check.witness.unwrap();
        assert!(omega.out_cluster(&g, 0).contains(2));
        assert!(!omega_prime.out_cluster(&g, 0).contains(2));
    }

    #[test]
    fn increasing_check_cap() {
        let pairs: Vec<_> = (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j))).collect();
        let k6 = Graph::from_index_edges(6, &pairs).unwrap();
        assert!(matches!(
            is_out_cluster_increasing(&k6, 0, &ReachPredicate::True),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn event_grammar() {
        let g = Graph::parse_edge_list("s a\na b\nb s\nb t").unwrap();
        let p = ReachPredicate::parse("reach:s->a,b", &g).unwrap();
        assert_eq!(p.to_out_family(0).unwrap().generators(), [VertexSet::from_bits(0b0111)]);
        let p = ReachPredicate::parse("reach:s->a|b", &g).unwrap();
        assert_eq!(p.to_out_family(0).unwrap().generators().len(), 2);
        let p = ReachPredicate::parse("and(reach:s->a;avoid:s-|t)", &g).unwrap();
        assert!(matches!(p, ReachPredicate::And(ref v) if v.len() == 2));
        assert!(p.to_out_family(0).is_err());
        let p = ReachPredicate::parse("and(reach:s->a;or(reach:s->b;true))", &g).unwrap();
        assert_eq!(p.to_out_family(0).unwrap(), make_reachability_family(0, VertexSet::singleton(1)));
        let p = ReachPredicate::parse("in:t<-a", &g).unwrap();
        assert_eq!(p.roots(), (VertexSet::EMPTY, VertexSet::singleton(3)));
        assert!(ReachPredicate::parse("not(true)", &g).is_ok());
        for bad in ["reach:s->zz", "avoid:s-|s", "and(", "bogus", "and()", "reach:s"] {
            assert!(ReachPredicate::parse(bad, &g).is_err(), "{bad}");
        }
    }

    #[test]
    fn edge_family_parse() {
        let f = EdgeUpwardFamily::parse("edges:0,1|2|0,1,2").unwrap();
        assert_eq!(f.generators(), [0b011, 0b100]);
        assert!(f.contains(0b100));
        assert!(!f.contains(0b001));
        assert!(EdgeUpwardFamily::parse("edges:x").is_err());
    }

    fn family_strategy(n: usize) -> impl Strategy<Value = UpwardClosedFamily> {
        prop::collection::vec(0u64..(1 << n), 0..4)
            .prop_map(|gens| UpwardClosedFamily::new(0, gens.into_iter().map(VertexSet::from_bits)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn superset_generator_is_redundant(f in family_strategy(5), extra in 0u64..32) {
            for g in f.generators().to_vec() {
                let bigger = UpwardClosedFamily::new(
                    0,
                    f.generators().iter().copied().chain([g | VertexSet::from_bits(extra)]),
                );
                prop_assert_eq!(&bigger, &f);
            }
        }

        #[test]
        fn generators_form_an_antichain(f in family_strategy(5)) {
            let gens = f.generators();
            for (i, a) in gens.iter().enumerate() {
                prop_assert!(a.contains(0));
                for (j, b) in gens.iter().enumerate() {
                    if i != j {
                        prop_assert!(!a.is_subset(*b));
                    }
                }
            }
        }

        #[test]
        fn families_are_out_cluster_increasing(f in family_strategy(4), h in family_strategy(4), mask in 0u64..64) {
            // Subgraphs of K4 selected by `mask`.
            let pairs: Vec<_> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &e)| e).collect();
            let g = Graph::from_index_edges(4, &edges).unwrap();
            let check = is_out_cluster_increasing(&g, 0, &family_event_predicate(&f)).unwrap();
            prop_assert!(check.increasing);
            let conj = family_event_predicate(&f).and(family_event_predicate(&h));
            prop_assert!(is_out_cluster_increasing(&g, 0, &conj).unwrap().increasing);
            let joined = f.and(&h).unwrap();
            let p1 = prob(&g, &conj);
            let p2 = prob(&g, &family_event_predicate(&joined));
            prop_assert_eq!(p1, p2);
        }
    }
}
