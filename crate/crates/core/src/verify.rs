//! Exact verifiers for the cluster-law identities and correlation
//! inequalities, sweep drivers over small labeled graphs, and the
//! correlation-sign search.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cluster::{
    cluster_distribution_from_table, compare_distributions, disjoint_keys, joint_distribution_from_table,
    recursive_cluster_law, recursive_joint_law, DiffReport,
};
use crate::events::{
    avoidance_predicate, correlation_from_table, open_edges, EdgeUpwardFamily, ReachPredicate, Sign,
    UpwardClosedFamily,
};
use crate::exact::Rational;
use crate::graph::{enumerate_labeled_graphs, Graph, GraphError, VertexSet};
use crate::models::{dp_split_parameters, fold_states, Caps, ClusterTable, ModelSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    /// `lhs <= rhs`
    #[serde(rename = "<=")]
    Le,
    /// `lhs >= rhs`
    #[serde(rename = ">=")]
    Ge,
    /// `lhs == rhs`
    #[serde(rename = "==")]
    Eq,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Instance {
    pub graph: String,
    pub bindings: BTreeMap<String, String>,
}

impl Instance {
    pub fn new(g: &Graph, bindings: impl IntoIterator<Item = (&'static str, String)>) -> Self {
        Instance {
            graph: g.to_edge_list(),
            bindings: bindings.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

/// Outcome of one exact comparison.
///
/// `margin` is the slack in the direction of the relation (`rhs - lhs` for
/// `<=`, `lhs - rhs` for `>=`, `-|lhs - rhs|` for `==`), so `holds` is
/// exactly `margin >= 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub instance: Instance,
    pub relation: Relation,
    pub lhs: Rational,
    pub rhs: Rational,
    pub holds: bool,
    pub margin: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diff: Option<Value>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, instance: Instance, relation: Relation, lhs: Rational, rhs: Rational) -> Self {
        let margin = match relation {
            Relation::Le => &rhs - &lhs,
            Relation::Ge => &lhs - &rhs,
            Relation::Eq => -(&lhs - &rhs).abs(),
        };
        let holds = !margin.is_negative();
        InequalityReport { name: name.into(), instance, relation, lhs, rhs, holds, margin, diff: None }
    }

    /// Equality of two laws: `lhs` is the L1 distance over the compared keys, `rhs` is zero.
    fn from_diff<K>(name: String, instance: Instance, diff: &DiffReport<K>, render: impl Fn(&K) -> Value) -> Self {
        let mut rep = InequalityReport::new(name, instance, Relation::Eq, diff.l1(), Rational::zero());
        rep.diff = Some(json!({
            "left": diff.left_model,
            "right": diff.right_model,
            "compared": diff.compared,
            "entries": diff.entries.iter().map(|e| json!({
                "key": render(&e.key),
                "left": e.left,
                "right": e.right,
            })).collect::<Vec<_>>(),
        }));
        rep
    }
}

/// A strict-sign correlation found by [`search_correlation_signs`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignFinding {
    pub graph: String,
    pub bindings: BTreeMap<String, String>,
    pub covariance: Rational,
    pub sign: Sign,
}

/// Tally of a sweep; only failing reports are kept.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SweepSummary {
    pub checked: u64,
    pub held: u64,
    pub skipped: u64,
    pub violations: Vec<InequalityReport>,
}

impl SweepSummary {
    fn record(&mut self, reports: impl IntoIterator<Item = InequalityReport>) {
        for rep in reports {
            self.checked += 1;
            if rep.holds {
                self.held += 1;
            } else {
                self.violations.push(rep);
            }
        }
    }

    fn merge(mut self, other: SweepSummary) -> SweepSummary {
        self.checked += other.checked;
        self.held += other.held;
        self.skipped += other.skipped;
        self.violations.extend(other.violations);
        self
    }

    pub fn violated(&self) -> u64 {
        self.checked - self.held
    }
}

fn check_vertex(g: &Graph, v: usize) -> Result<()> {
    if v >= g.n() {
        return Err(GraphError::IndexOutOfRange(v).into());
    }
    Ok(())
}

fn name_list(g: &Graph, set: VertexSet) -> String {
    g.set_names(set).join(",")
}

/// Runs `f` on every graph in parallel and merges summaries in input order.
fn sweep<F>(graphs: &[Graph], f: F) -> Result<SweepSummary>
where
    F: Fn(&Graph) -> Result<SweepSummary> + Sync + Send,
{
    let parts: Vec<Result<SweepSummary>> = graphs.par_iter().map(f).collect();
    parts.into_iter().try_fold(SweepSummary::default(), |acc, part| Ok(acc.merge(part?)))
}

// ---------------------------------------------------------------------------
// Single-cluster law equality

fn lemma1_models(p: &Rational) -> Result<Vec<ModelSpec>> {
    let mut models = vec![ModelSpec::edge_percolation(p.clone())?];
    if *p == Rational::half() {
        models.push(ModelSpec::RandomOrientation);
    }
    models.push(ModelSpec::directed_percolation(p.clone())?);
    Ok(models)
}

fn lemma1_reports(g: &Graph, u: usize, p: &Rational, tables: &[(ModelSpec, ClusterTable)]) -> Result<Vec<InequalityReport>> {
    let mut laws = tables
        .iter()
        .map(|(m, t)| cluster_distribution_from_table(t, g, m, u))
        .collect::<Result<Vec<_>>>()?;
    laws.push(recursive_cluster_law(g, u, p)?);
    let inst = || Instance::new(g, [("u", g.name(u).to_string()), ("p", p.to_string())]);
    let render = |k: &VertexSet| json!(g.set_names(*k));
    let mut out = Vec::new();
    for i in 0..laws.len() {
        for j in i + 1..laws.len() {
            let diff = compare_distributions(&laws[i], &laws[j], |_| true)?;
            let name = format!("lemma1:{}=={}", laws[i].model, laws[j].model);
            out.push(InequalityReport::from_diff(name, inst(), &diff, render));
        }
    }
    Ok(out)
}

/// Cluster law of `u` compared across `E^p`, `D^p`, the recursion, and at
/// `p = 1/2` also `O`; one report per pair of laws.
pub fn verify_lemma1(g: &Graph, u: usize, p: &Rational, caps: &Caps) -> Result<Vec<InequalityReport>> {
    check_vertex(g, u)?;
    let tables = lemma1_models(p)?
        .into_iter()
        .map(|m| {
            let t = ClusterTable::build(g, &m, VertexSet::singleton(u), VertexSet::EMPTY, caps)?;
            Ok((m, t))
        })
        .collect::<Result<Vec<_>>>()?;
    lemma1_reports(g, u, p, &tables)
}

/// [`verify_lemma1`] for every root of every graph.
pub fn sweep_lemma1(graphs: &[Graph], p: &Rational, caps: &Caps) -> Result<SweepSummary> {
    sweep(graphs, |g| {
        let tables = lemma1_models(p)?
            .into_iter()
            .map(|m| {
                let t = ClusterTable::build(g, &m, g.vertices(), VertexSet::EMPTY, caps)?;
                Ok((m, t))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut summary = SweepSummary::default();
        for u in 0..g.n() {
            summary.record(lemma1_reports(g, u, p, &tables)?);
        }
        Ok(summary)
    })
}

// ---------------------------------------------------------------------------
// Two-cluster law equality

fn lemma2_reports(
    g: &Graph,
    u: usize,
    w: usize,
    p: &Rational,
    tables: &[(ModelSpec, ClusterTable)],
) -> Result<Vec<InequalityReport>> {
    let mut laws = tables
        .iter()
        .map(|(m, t)| joint_distribution_from_table(t, g, m, u, w))
        .collect::<Result<Vec<_>>>()?;
    laws.push(recursive_joint_law(g, u, w, p)?);
    let inst = || {
        Instance::new(g, [("u", g.name(u).to_string()), ("w", g.name(w).to_string()), ("p", p.to_string())])
    };
    let render = |k: &(VertexSet, VertexSet)| json!([g.set_names(k.0), g.set_names(k.1)]);
    let mut out = Vec::new();
    for i in 0..laws.len() {
        for j in i + 1..laws.len() {
            let diff = compare_distributions(&laws[i], &laws[j], disjoint_keys)?;
            let name = format!("lemma2:{}=={}", laws[i].model, laws[j].model);
            out.push(InequalityReport::from_diff(name, inst(), &diff, render));
        }
    }
    Ok(out)
}

/// Joint law of `(C_u, C_w)` (directed: out-cluster of `u`, in-cluster of
/// `w`) compared on disjoint key pairs across models and the recursion.
pub fn verify_lemma2(g: &Graph, u: usize, w: usize, p: &Rational, caps: &Caps) -> Result<Vec<InequalityReport>> {
    check_vertex(g, u)?;
    check_vertex(g, w)?;
    if u == w {
        return Err(Error::Precondition("lemma2 needs two distinct roots".into()));
    }
    let tables = lemma1_models(p)?
        .into_iter()
        .map(|m| {
            let t = ClusterTable::build(g, &m, VertexSet::singleton(u), VertexSet::singleton(w), caps)?;
            Ok((m, t))
        })
        .collect::<Result<Vec<_>>>()?;
    lemma2_reports(g, u, w, p, &tables)
}

/// [`verify_lemma2`] for every ordered pair of distinct roots.
pub fn sweep_lemma2(graphs: &[Graph], p: &Rational, caps: &Caps) -> Result<SweepSummary> {
    sweep(graphs, |g| {
        let tables = lemma1_models(p)?
            .into_iter()
            .map(|m| Ok((m.clone(), ClusterTable::build_full(g, &m, caps)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut summary = SweepSummary::default();
        for u in 0..g.n() {
            for w in (0..g.n()).filter(|&w| w != u) {
                summary.record(lemma2_reports(g, u, w, p, &tables)?);
            }
        }
        Ok(summary)
    })
}

// ---------------------------------------------------------------------------
// Oriented Harris and its avoidance-set generalization

fn family_names(g: &Graph, f: &UpwardClosedFamily) -> String {
    f.generators().iter().map(|s| format!("{{{}}}", name_list(g, *s))).collect::<Vec<_>>().join("|")
}

fn check_roots(s: usize, a: &UpwardClosedFamily, b: &UpwardClosedFamily) -> Result<()> {
    if a.root() != s || b.root() != s {
        return Err(Error::Precondition(format!("event families must be rooted at vertex {s}")));
    }
    Ok(())
}

fn oriented_harris_on_table(
    g: &Graph,
    table: &ClusterTable,
    s: usize,
    a: &UpwardClosedFamily,
    b: &UpwardClosedFamily,
) -> Result<InequalityReport> {
    check_roots(s, a, b)?;
    let pa = table.probability(&ReachPredicate::Family(a.clone()))?;
    let pb = table.probability(&ReachPredicate::Family(b.clone()))?;
    let pab = table.probability(&ReachPredicate::Family(a.and(b)?))?;
    let inst = Instance::new(
        g,
        [("s", g.name(s).to_string()), ("A", family_names(g, a)), ("B", family_names(g, b))],
    );
    Ok(InequalityReport::new("oriented-harris", inst, Relation::Le, &pa * &pb, pab))
}

/// `P_O(A) P_O(B) <= P_O(A ∧ B)` for out-cluster families rooted at `s`.
pub fn verify_oriented_harris(
    g: &Graph,
    s: usize,
    a: &UpwardClosedFamily,
    b: &UpwardClosedFamily,
    caps: &Caps,
) -> Result<InequalityReport> {
    check_vertex(g, s)?;
    check_roots(s, a, b)?;
    let table = ClusterTable::build(g, &ModelSpec::RandomOrientation, VertexSet::singleton(s), VertexSet::EMPTY, caps)?;
    oriented_harris_on_table(g, &table, s, a, b)
}

#[allow(clippy::too_many_arguments)]
fn oriented_vdbhk_on_table(
    g: &Graph,
    table: &ClusterTable,
    s: usize,
    a: &UpwardClosedFamily,
    b: &UpwardClosedFamily,
    x: VertexSet,
    y: VertexSet,
) -> Result<InequalityReport> {
    check_roots(s, a, b)?;
    let fa = ReachPredicate::Family(a.clone());
    let fb = ReachPredicate::Family(b.clone());
    let p_a_x = table.probability(&fa.clone().and(avoidance_predicate(s, x)?))?;
    let p_b_y = table.probability(&fb.clone().and(avoidance_predicate(s, y)?))?;
    let p_ab_xy = table.probability(&ReachPredicate::And(vec![fa, fb, avoidance_predicate(s, x & y)?]))?;
    let p_x_or_y = table.probability(&avoidance_predicate(s, x | y)?)?;
    let inst = Instance::new(
        g,
        [
            ("s", g.name(s).to_string()),
            ("A", family_names(g, a)),
            ("B", family_names(g, b)),
            ("X", name_list(g, x)),
            ("Y", name_list(g, y)),
        ],
    );
    Ok(InequalityReport::new("oriented-vdbhk", inst, Relation::Le, p_a_x * p_b_y, p_ab_xy * p_x_or_y))
}

/// `P(A, C_s∩X=∅) P(B, C_s∩Y=∅) <= P(A, B, C_s∩X∩Y=∅) P(C_s∩(X∪Y)=∅)` in `O`.
pub fn verify_oriented_vdbhk(
    g: &Graph,
    s: usize,
    a: &UpwardClosedFamily,
    b: &UpwardClosedFamily,
    x: VertexSet,
    y: VertexSet,
    caps: &Caps,
) -> Result<InequalityReport> {
    check_vertex(g, s)?;
    check_roots(s, a, b)?;
    if x.contains(s) || y.contains(s) {
        return Err(Error::Precondition("avoidance sets must not contain s".into()));
    }
    let table = ClusterTable::build(g, &ModelSpec::RandomOrientation, VertexSet::singleton(s), VertexSet::EMPTY, caps)?;
    oriented_vdbhk_on_table(g, &table, s, a, b, x, y)
}

/// Every single-generator family pair and every `X, Y ⊆ V \ {s}` with at
/// most `max_avoid` vertices each, for every root.
pub fn sweep_oriented(graphs: &[Graph], max_avoid: usize, caps: &Caps) -> Result<SweepSummary> {
    sweep(graphs, |g| {
        let full = ClusterTable::build(g, &ModelSpec::RandomOrientation, g.vertices(), VertexSet::EMPTY, caps)?;
        let mut summary = SweepSummary::default();
        for s in 0..g.n() {
            let table = full.project(VertexSet::singleton(s), VertexSet::EMPTY)?;
            let others = g.vertices().without(s);
            let families: Vec<_> = others.subsets().map(|t| UpwardClosedFamily::new(s, [t])).collect();
            let avoid: Vec<_> = others.subsets().filter(|x| x.len() <= max_avoid).collect();
            for a in &families {
                for b in &families {
                    summary.record([oriented_harris_on_table(g, &table, s, a, b)?]);
                    for &x in &avoid {
                        for &y in &avoid {
                            summary.record([oriented_vdbhk_on_table(g, &table, s, a, b, x, y)?]);
                        }
                    }
                }
            }
        }
        Ok(summary)
    })
}

// ---------------------------------------------------------------------------
// Path correlations

fn corollaries_on_table(
    g: &Graph,
    table: &ClusterTable,
    s: usize,
    a: usize,
    b: usize,
    t: usize,
) -> Result<Vec<InequalityReport>> {
    if s == t {
        return Err(Error::ZeroProbabilityCondition);
    }
    let cond = avoidance_predicate(s, VertexSet::singleton(t))?;
    let inst = || {
        Instance::new(
            g,
            [
                ("s", g.name(s).to_string()),
                ("a", g.name(a).to_string()),
                ("b", g.name(b).to_string()),
                ("t", g.name(t).to_string()),
            ],
        )
    };
    let (sa, sb, at) = (ReachPredicate::reach(s, a), ReachPredicate::reach(s, b), ReachPredicate::reached_from(t, a));

    let plain = correlation_from_table(table, &sa, &sb, &ReachPredicate::True)?;
    let cond_pos = correlation_from_table(table, &sa, &sb, &cond)?;
    let cond_neg = correlation_from_table(table, &at, &sb, &cond)?;
    Ok(vec![
        InequalityReport::new("two-paths", inst(), Relation::Le, &plain.p_a * &plain.p_b, plain.p_ab),
        InequalityReport::new("conditioned-two-paths", inst(), Relation::Le, &cond_pos.p_a * &cond_pos.p_b, cond_pos.p_ab),
        InequalityReport::new("conditioned-negative", inst(), Relation::Ge, &cond_neg.p_a * &cond_neg.p_b, cond_neg.p_ab),
    ])
}

/// The three path-correlation inequalities in `O`:
///
/// 1. `P(s→a) P(s→b) <= P(s→a, s→b)`
/// 2. the same conditioned on `s ↛ t`
/// 3. `P(a→t | s↛t) P(s→b | s↛t) >= P(a→t, s→b | s↛t)`
pub fn verify_corollaries(
    g: &Graph,
    s: usize,
    a: usize,
    b: usize,
    t: usize,
    caps: &Caps,
) -> Result<Vec<InequalityReport>> {
    for v in [s, a, b, t] {
        check_vertex(g, v)?;
    }
    if s == t {
        return Err(Error::ZeroProbabilityCondition);
    }
    let table = ClusterTable::build(g, &ModelSpec::RandomOrientation, VertexSet::singleton(s), VertexSet::singleton(t), caps)?;
    corollaries_on_table(g, &table, s, a, b, t)
}

/// [`verify_corollaries`] over all bindings `(s, a, b, t)` with `s ≠ t`;
/// bindings with `P(s ↛ t) = 0` are counted as skipped.
pub fn sweep_corollaries(graphs: &[Graph], caps: &Caps) -> Result<SweepSummary> {
    sweep(graphs, |g| {
        let full = ClusterTable::build_full(g, &ModelSpec::RandomOrientation, caps)?;
        let mut summary = SweepSummary::default();
        for s in 0..g.n() {
            for t in (0..g.n()).filter(|&t| t != s) {
                let table = full.project(VertexSet::singleton(s), VertexSet::singleton(t))?;
                for a in 0..g.n() {
                    for b in 0..g.n() {
                        match corollaries_on_table(g, &table, s, a, b, t) {
                            Ok(reports) => summary.record(reports),
                            Err(Error::ZeroProbabilityCondition) => summary.skipped += 1,
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        Ok(summary)
    })
}

// ---------------------------------------------------------------------------
// Classical Harris

/// Exact law of the open-edge set under `E^p`, as numerators over `den`.
struct OpenEdgeLaw {
    num: Vec<u128>,
    den: u128,
}

impl OpenEdgeLaw {
    fn build(g: &Graph, p: &Rational) -> Result<Self> {
        use num_traits::ToPrimitive;
        let q = p.complement()?;
        let den_p = p.denom().to_u128();
        let overflow = || Error::Precondition("open-edge law exceeds 128-bit denominators".into());
        let d = den_p.ok_or_else(overflow)?;
        let m = g.m() as u32;
        let den = d.checked_pow(m).ok_or_else(overflow)?;
        let pn = p.numer().to_u128().ok_or_else(overflow)?;
        let qn = (&q * &Rational::from(d as u64)).numer().to_u128().ok_or_else(overflow)?;
        let num = (0..1u64 << m)
            .map(|mask| {
                let k = mask.count_ones();
                pn.pow(k) * qn.pow(m - k)
            })
            .collect();
        Ok(OpenEdgeLaw { num, den })
    }

    fn probability(&self, f: &EdgeUpwardFamily) -> Rational {
        let total: u128 = self
            .num
            .iter()
            .enumerate()
            .filter(|(mask, _)| f.contains(*mask as u64))
            .map(|(_, w)| *w)
            .sum();
        num_rational::BigRational::new(total.into(), self.den.into()).into()
    }
}

fn edge_family_names(f: &EdgeUpwardFamily) -> String {
    f.generators()
        .iter()
        .map(|&g| {
            let edges: Vec<String> = (0..64).filter(|k| g >> k & 1 == 1).map(|k| k.to_string()).collect();
            format!("{{{}}}", edges.join(","))
        })
        .collect::<Vec<_>>()
        .join("|")
}

fn harris_report(g: &Graph, p: &Rational, a: &EdgeUpwardFamily, b: &EdgeUpwardFamily, pa: Rational, pb: Rational, pab: Rational) -> InequalityReport {
    let inst = Instance::new(
        g,
        [("p", p.to_string()), ("A", edge_family_names(a)), ("B", edge_family_names(b))],
    );
    InequalityReport::new("harris", inst, Relation::Le, pa * pb, pab)
}

/// `P_{E^p}(A) P_{E^p}(B) <= P_{E^p}(A ∧ B)` for increasing edge events.
pub fn verify_harris_classical(
    g: &Graph,
    p: &Rational,
    a: &EdgeUpwardFamily,
    b: &EdgeUpwardFamily,
    caps: &Caps,
) -> Result<InequalityReport> {
    a.validate(g)?;
    b.validate(g)?;
    let model = ModelSpec::edge_percolation(p.clone())?;
    use std::collections::HashMap;
    type Hists = [HashMap<u64, u64>; 3];
    let hists: Hists = fold_states(
        g,
        &model,
        caps,
        Hists::default,
        |h: &mut Hists, view| {
            let open = open_edges(view.states);
            let (ia, ib) = (a.contains(open), b.contains(open));
            for (slot, hit) in [ia, ib, ia && ib].into_iter().enumerate() {
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
    let mut w = crate::models::WeightTable::new(&model);
    let [pa, pb, pab] = hists.map(|h| w.total(&h));
    Ok(harris_report(g, p, a, b, pa, pb, pab))
}

/// Classical Harris over every pair of single-generator edge families.
pub fn sweep_harris_classical(graphs: &[Graph], p: &Rational, caps: &Caps) -> Result<SweepSummary> {
    sweep(graphs, |g| {
        let model = ModelSpec::edge_percolation(p.clone())?;
        if model.state_count(g.m()).is_none_or(|c| c > caps.max_states) {
            return Err(Error::CapExceeded { states: format!("2^{}", g.m()), cap: caps.max_states });
        }
        let law = OpenEdgeLaw::build(g, p)?;
        let families: Vec<_> = (0..1u64 << g.m()).map(|s| EdgeUpwardFamily::new([s])).collect();
        let probs: Vec<_> = families.iter().map(|f| law.probability(f)).collect();
        let mut summary = SweepSummary::default();
        for (i, a) in families.iter().enumerate() {
            for (j, b) in families.iter().enumerate() {
                let pab = law.probability(&a.and(b));
                summary.record([harris_report(g, p, a, b, probs[i].clone(), probs[j].clone(), pab)]);
            }
        }
        Ok(summary)
    })
}

// ---------------------------------------------------------------------------
// Correlation-sign search

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// `{a → s}` against `{s → b}`.
    AToS,
    /// `{a ∈ in-cluster(t)}` against `{b ∈ out-cluster(s)}`.
    AInInClusterT,
}

impl std::str::FromStr for SignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a_to_s" | "a-to-s" => Ok(SignMode::AToS),
            "a_in_in_cluster_t" | "a-in-in-cluster-t" => Ok(SignMode::AInInClusterT),
            other => Err(Error::Precondition(format!("unknown sign-search mode `{other}`"))),
        }
    }
}

fn sign_findings_for_graph(g: &Graph, mode: SignMode, conditioned: bool, caps: &Caps) -> Result<(Vec<SignFinding>, u64)> {
    let full = ClusterTable::build_full(g, &ModelSpec::RandomOrientation, caps)?;
    let n = g.n();
    let mut findings = Vec::new();
    let mut skipped = 0;
    let name = |v: usize| g.name(v).to_string();
    for s in 0..n {
        // Conditioning needs a target `t`; unconditioned `a_to_s` needs none.
        let ts: Vec<Option<usize>> = match (mode, conditioned) {
            (SignMode::AToS, false) => vec![None],
            _ => (0..n).filter(|&t| t != s).map(Some).collect(),
        };
        for t in ts {
            let mut ins = VertexSet::EMPTY;
            if let Some(t) = t {
                ins.insert(t);
            }
            if mode == SignMode::AToS {
                ins.insert(s);
            }
            let table = full.project(VertexSet::singleton(s), ins)?;
            let cond = match (conditioned, t) {
                (true, Some(t)) => avoidance_predicate(s, VertexSet::singleton(t))?,
                _ => ReachPredicate::True,
            };
            for a in 0..n {
                for b in 0..n {
                    let (ev_a, ev_b, ok) = match mode {
                        SignMode::AToS => (ReachPredicate::reached_from(s, a), ReachPredicate::reach(s, b), a != s && b != s),
                        SignMode::AInInClusterT => {
                            let t = t.expect("mode binds t");
                            (ReachPredicate::reached_from(t, a), ReachPredicate::reach(s, b), a != t && b != s)
                        }
                    };
                    if !ok {
                        continue;
                    }
                    let rep = match correlation_from_table(&table, &ev_a, &ev_b, &cond) {
                        Ok(r) => r,
                        Err(Error::ZeroProbabilityCondition) => {
                            skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    if rep.sign == Sign::Zero {
                        continue;
                    }
                    let mut bindings: BTreeMap<String, String> =
                        [("s".to_string(), name(s)), ("a".to_string(), name(a)), ("b".to_string(), name(b))].into();
                    if let Some(t) = t {
                        bindings.insert("t".into(), name(t));
                    }
                    findings.push(SignFinding {
                        graph: g.to_edge_list(),
                        bindings,
                        covariance: rep.covariance,
                        sign: rep.sign,
                    });
                }
            }
        }
    }
    Ok((findings, skipped))
}

/// Sweeps all labeled graphs on `n <= 5` vertices and all bindings,
/// returning every strictly signed covariance of the chosen event pair in `O`.
pub fn search_correlation_signs(n: usize, mode: SignMode, conditioned: bool, caps: &Caps) -> Result<Vec<SignFinding>> {
    Ok(search_correlation_signs_counted(n, mode, conditioned, caps)?.0)
}

/// As [`search_correlation_signs`], also returning the number of bindings
/// skipped for a zero-probability condition.
pub fn search_correlation_signs_counted(
    n: usize,
    mode: SignMode,
    conditioned: bool,
    caps: &Caps,
) -> Result<(Vec<SignFinding>, u64)> {
    if !(1..=5).contains(&n) {
        return Err(Error::Precondition(format!("sign search supports 1..=5 vertices, got {n}")));
    }
    let graphs: Vec<Graph> = enumerate_labeled_graphs(n)?.collect();
    let parts: Vec<_> = graphs.par_iter().map(|g| sign_findings_for_graph(g, mode, conditioned, caps)).collect();
    let mut all = Vec::new();
    let mut skipped = 0;
    for part in parts {
        let (f, s) = part?;
        all.extend(f);
        skipped += s;
    }
    Ok((all, skipped))
}

// ---------------------------------------------------------------------------
// Bunkbed

fn bunkbed_on_tables(
    g: &Graph,
    e_table: &ClusterTable,
    o_table: Option<&ClusterTable>,
    u: usize,
    v: usize,
    p: &Rational,
) -> Result<Vec<InequalityReport>> {
    let n = g.n();
    let same = ReachPredicate::reach(u, v);
    let cross = ReachPredicate::reach(u, v + n);
    let lhs = e_table.probability(&same)?;
    let rhs = e_table.probability(&cross)?;
    let inst = || Instance::new(g, [("u", g.name(u).to_string()), ("v", g.name(v).to_string()), ("p", p.to_string())]);
    let mut out = vec![InequalityReport::new("bunkbed", inst(), Relation::Ge, lhs.clone(), rhs.clone())];
    if let Some(o) = o_table {
        for (label, pred, value) in [("same-layer", &same, lhs), ("cross-layer", &cross, rhs)] {
            let oriented = o.probability(pred)?;
            out.push(InequalityReport::new(format!("bunkbed:{label}:e==o"), inst(), Relation::Eq, value, oriented));
        }
    }
    Ok(out)
}

/// `P_{E^p}((v,0) ∈ C_(u,0)) >= P_{E^p}((v,1) ∈ C_(u,0))` on `G × K2`. At
/// `p = 1/2` both sides are also checked against reachability in `O`.
///
/// The first report is the inequality itself; it is a conjecture, so a
/// failure is a finding rather than a defect.
pub fn bunkbed_check(g: &Graph, u: usize, v: usize, p: &Rational, caps: &Caps) -> Result<Vec<InequalityReport>> {
    check_vertex(g, u)?;
    check_vertex(g, v)?;
    let bunk = g.bunkbed_product()?;
    let model = ModelSpec::edge_percolation(p.clone())?;
    let root = VertexSet::singleton(u);
    let e_table = ClusterTable::build(&bunk, &model, root, VertexSet::EMPTY, caps)?;
    let o_table = if *p == Rational::half() {
        Some(ClusterTable::build(&bunk, &ModelSpec::RandomOrientation, root, VertexSet::EMPTY, caps)?)
    } else {
        None
    };
    bunkbed_on_tables(g, &e_table, o_table.as_ref(), u, v, p)
}

/// [`bunkbed_check`] for every `(u, v)` pair of every graph.
pub fn sweep_bunkbed(graphs: &[Graph], p: &Rational, caps: &Caps) -> Result<SweepSummary> {
    sweep(graphs, |g| {
        let bunk = g.bunkbed_product()?;
        let lower = VertexSet::full(g.n());
        let model = ModelSpec::edge_percolation(p.clone())?;
        let e_table = ClusterTable::build(&bunk, &model, lower, VertexSet::EMPTY, caps)?;
        let o_table = if *p == Rational::half() {
            Some(ClusterTable::build(&bunk, &ModelSpec::RandomOrientation, lower, VertexSet::EMPTY, caps)?)
        } else {
            None
        };
        let mut summary = SweepSummary::default();
        for u in 0..g.n() {
            for v in 0..g.n() {
                summary.record(bunkbed_on_tables(g, &e_table, o_table.as_ref(), u, v, p)?);
            }
        }
        Ok(summary)
    })
}

// ---------------------------------------------------------------------------
// Mixed model

/// Out-cluster law of `Mixed(p', 1/2)` against `O`, and of
/// `Mixed(dp_split_parameters(p))` against `D^p`.
pub fn verify_mixed_model(g: &Graph, u: usize, p_prime: &Rational, p: &Rational, caps: &Caps) -> Result<Vec<InequalityReport>> {
    check_vertex(g, u)?;
    let (sp, s1) = dp_split_parameters(p)?;
    let pairs = [
        (ModelSpec::mixed(p_prime.clone(), Rational::half())?, ModelSpec::RandomOrientation),
        (ModelSpec::mixed(sp, s1)?, ModelSpec::directed_percolation(p.clone())?),
    ];
    let root = VertexSet::singleton(u);
    let inst = || {
        Instance::new(
            g,
            [("u", g.name(u).to_string()), ("pp", p_prime.to_string()), ("p", p.to_string())],
        )
    };
    let render = |k: &VertexSet| json!(g.set_names(*k));
    pairs
        .iter()
        .map(|(mixed, reference)| {
            let lt = ClusterTable::build(g, mixed, root, VertexSet::EMPTY, caps)?;
            let rt = ClusterTable::build(g, reference, root, VertexSet::EMPTY, caps)?;
            let left = cluster_distribution_from_table(&lt, g, mixed, u)?;
            let right = cluster_distribution_from_table(&rt, g, reference, u)?;
            let diff = compare_distributions(&left, &right, |_| true)?;
            Ok(InequalityReport::from_diff(format!("mixed:{mixed}=={reference}"), inst(), &diff, render))
        })
        .collect()
}

/// [`verify_mixed_model`]-style comparisons for every root, with the
/// `Mixed(p', 1/2) = O` check run for each `p'` and the split check for each `p`.
pub fn sweep_mixed(graphs: &[Graph], p_primes: &[Rational], ps: &[Rational], caps: &Caps) -> Result<SweepSummary> {
    let mut pairs = Vec::new();
    for pp in p_primes {
        pairs.push((ModelSpec::mixed(pp.clone(), Rational::half())?, ModelSpec::RandomOrientation));
    }
    for p in ps {
        let (sp, s1) = dp_split_parameters(p)?;
        pairs.push((ModelSpec::mixed(sp, s1)?, ModelSpec::directed_percolation(p.clone())?));
    }
    sweep(graphs, |g| {
        let mut summary = SweepSummary::default();
        let render = |k: &VertexSet| json!(g.set_names(*k));
        for (mixed, reference) in &pairs {
            let lt = ClusterTable::build(g, mixed, g.vertices(), VertexSet::EMPTY, caps)?;
            let rt = ClusterTable::build(g, reference, g.vertices(), VertexSet::EMPTY, caps)?;
            for u in 0..g.n() {
                let left = cluster_distribution_from_table(&lt, g, mixed, u)?;
                let right = cluster_distribution_from_table(&rt, g, reference, u)?;
                let diff = compare_distributions(&left, &right, |_| true)?;
                let inst = Instance::new(g, [("u", g.name(u).to_string())]);
                summary.record([InequalityReport::from_diff(format!("mixed:{mixed}=={reference}"), inst, &diff, render)]);
            }
        }
        Ok(summary)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::make_reachability_family;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn caps() -> Caps {
        Caps::default()
    }

    fn triangle() -> Graph {
        Graph::parse_edge_list("s a\na b\nb s").unwrap()
    }

    /// K4 on {a, b, s, c} without the edge ab.
    fn k4_minus_ab() -> Graph {
        Graph::parse_edge_list("vertices: a b s c\na s\na c\nb s\nb c\ns c").unwrap()
    }

    fn fam(s: usize, t: usize) -> UpwardClosedFamily {
        make_reachability_family(s, VertexSet::singleton(t))
    }

    #[test]
    fn report_margin_sign_matches_holds() {
        let g = triangle();
        let inst = || Instance::new(&g, []);
        let le = InequalityReport::new("x", inst(), Relation::Le, r("1/2"), r("1/3"));
        assert!(!le.holds && le.margin.is_negative());
        let ge = InequalityReport::new("x", inst(), Relation::Ge, r("1/2"), r("1/3"));
        assert!(ge.holds && ge.margin == r("1/6"));
        let eq = InequalityReport::new("x", inst(), Relation::Eq, r("1/2"), r("1/2"));
        assert!(eq.holds && eq.margin.is_zero());
    }

    #[test]
    fn lemma1_path_at_half() {
        let g = Graph::parse_edge_list("u v\nv w").unwrap();
        let reports = verify_lemma1(&g, 0, &r("1/2"), &caps()).unwrap();
        // E, O, D and the recursion: six pairs
        assert_eq!(reports.len(), 6);
        assert!(reports.iter().all(|x| x.holds && x.lhs.is_zero()));
    }

    #[test]
    fn lemma1_single_vertex_and_triangle() {
        let g = Graph::parse_edge_list("vertices: u").unwrap();
        for p in ["0", "1/3", "1"] {
            assert!(verify_lemma1(&g, 0, &r(p), &caps()).unwrap().iter().all(|x| x.holds));
        }
        let reports = verify_lemma1(&triangle(), 0, &r("1/3"), &caps()).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|x| x.holds));
    }

    #[test]
    fn lemma2_small_graphs() {
        let edge = Graph::parse_edge_list("u w").unwrap();
        let reports = verify_lemma2(&edge, 0, 1, &r("1/2"), &caps()).unwrap();
        assert!(reports.iter().all(|x| x.holds));
        let path = Graph::parse_edge_list("u v\nv w").unwrap();
        for p in ["1/2", "1/3"] {
            assert!(verify_lemma2(&path, 0, 2, &r(p), &caps()).unwrap().iter().all(|x| x.holds));
        }
        let iso = Graph::parse_edge_list("vertices: u w").unwrap();
        assert!(verify_lemma2(&iso, 0, 1, &r("1/2"), &caps()).unwrap().iter().all(|x| x.holds));
        assert!(verify_lemma2(&iso, 0, 0, &r("1/2"), &caps()).is_err());
    }

    #[test]
    fn two_out_clusters_do_not_match_across_models() {
        // (out-cluster of u, out-cluster of w) with an edge between them:
        // O puts mass on ({u},{w}) only through the single edge direction.
        let g = Graph::parse_edge_list("u w").unwrap();
        let o = ClusterTable::build(&g, &ModelSpec::RandomOrientation, g.vertices(), VertexSet::EMPTY, &caps()).unwrap();
        let e = ClusterTable::build(&g, &"e:p=1/2".parse().unwrap(), g.vertices(), VertexSet::EMPTY, &caps()).unwrap();
        let both_alone = |t: &ClusterTable| {
            t.probability(&ReachPredicate::And(vec![
                avoidance_predicate(0, VertexSet::singleton(1)).unwrap(),
                avoidance_predicate(1, VertexSet::singleton(0)).unwrap(),
            ]))
            .unwrap()
        };
        assert_eq!(both_alone(&e), r("1/2"));
        assert_eq!(both_alone(&o), Rational::zero());
    }

    #[test]
    fn oriented_harris_cases() {
        let g = triangle();
        let rep = verify_oriented_harris(&g, 0, &fam(0, 1), &fam(0, 2), &caps()).unwrap();
        assert_eq!((rep.lhs.clone(), rep.rhs.clone()), (r("25/64"), r("1/2")));
        assert!(rep.holds);
        let always = UpwardClosedFamily::always(0);
        let rep = verify_oriented_harris(&g, 0, &always, &fam(0, 2), &caps()).unwrap();
        assert_eq!(rep.lhs, rep.rhs);
        let rep = verify_oriented_harris(&g, 0, &fam(0, 1), &fam(0, 1), &caps()).unwrap();
        assert_eq!((rep.lhs, rep.rhs), (r("25/64"), r("5/8")));
        assert!(verify_oriented_harris(&g, 0, &fam(1, 0), &fam(0, 2), &caps()).is_err());
    }

    #[test]
    fn oriented_vdbhk_cases() {
        let g = triangle();
        let (a, b) = (fam(0, 1), fam(0, 2));
        let h = verify_oriented_harris(&g, 0, &a, &b, &caps()).unwrap();
        let v = verify_oriented_vdbhk(&g, 0, &a, &b, VertexSet::EMPTY, VertexSet::EMPTY, &caps()).unwrap();
        assert_eq!((h.lhs, h.rhs), (v.lhs, v.rhs));

        let rep = verify_oriented_vdbhk(&g, 0, &a, &a, VertexSet::singleton(2), VertexSet::EMPTY, &caps()).unwrap();
        assert_eq!(rep.lhs, r("5/64"));
        assert_eq!(rep.rhs, r("15/64"));
        assert!(rep.holds);

        // A = {s -> b} cannot happen while avoiding b.
        let rep = verify_oriented_vdbhk(&g, 0, &b, &a, VertexSet::singleton(2), VertexSet::EMPTY, &caps()).unwrap();
        assert!(rep.lhs.is_zero() && rep.holds);
        assert!(verify_oriented_vdbhk(&g, 0, &a, &b, VertexSet::singleton(0), VertexSet::EMPTY, &caps()).is_err());
    }

    #[test]
    fn corollaries_cases() {
        let g = triangle();
        let reps = verify_corollaries(&g, 0, 1, 2, 2, &caps()).unwrap();
        assert_eq!(reps[0].lhs, r("25/64"));
        assert_eq!(reps[0].rhs, r("1/2"));

        let k = k4_minus_ab();
        let idx = |x: &str| k.index_of(x).unwrap();
        let reps = verify_corollaries(&k, idx("s"), idx("a"), idx("b"), idx("c"), &caps()).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().all(|x| x.holds));
        assert!(matches!(verify_corollaries(&g, 0, 1, 2, 0, &caps()), Err(Error::ZeroProbabilityCondition)));
    }

    #[test]
    fn harris_classical_cases() {
        let p = r("1/3");
        let edge = Graph::parse_edge_list("u v").unwrap();
        let a = EdgeUpwardFamily::new([1]);
        let rep = verify_harris_classical(&edge, &p, &a, &a, &caps()).unwrap();
        assert_eq!((rep.lhs.clone(), rep.rhs.clone()), (r("1/9"), r("1/3")));

        let two = Graph::parse_edge_list("a b\nc d").unwrap();
        let rep = verify_harris_classical(&two, &p, &EdgeUpwardFamily::new([1]), &EdgeUpwardFamily::new([2]), &caps())
            .unwrap();
        assert_eq!(rep.lhs, rep.rhs);

        let path = Graph::parse_edge_list("a b\nb c").unwrap();
        let rep = verify_harris_classical(&path, &p, &EdgeUpwardFamily::new([1]), &EdgeUpwardFamily::new([3]), &caps())
            .unwrap();
        assert_eq!(rep.lhs, p.pow(3));
        assert_eq!(rep.rhs, p.pow(2));
        assert!(rep.holds);
        assert!(verify_harris_classical(&path, &p, &EdgeUpwardFamily::new([4]), &a, &caps()).is_err());
    }

    #[test]
    fn harris_sweep_matches_generic_verifier() {
        let g = Graph::parse_edge_list("a b\nb c\nc a").unwrap();
        let p = r("1/3");
        let law = OpenEdgeLaw::build(&g, &p).unwrap();
        for s in 0..8u64 {
            let f = EdgeUpwardFamily::new([s]);
            let rep = verify_harris_classical(&g, &p, &f, &f, &caps()).unwrap();
            assert_eq!(rep.rhs, law.probability(&f));
        }
    }

    #[test]
    fn bunkbed_single_edge() {
        let g = Graph::parse_edge_list("x y").unwrap();
        let reps = bunkbed_check(&g, 0, 1, &r("1/2"), &caps()).unwrap();
        assert_eq!((reps[0].lhs.clone(), reps[0].rhs.clone()), (r("9/16"), r("7/16")));
        assert!(reps.iter().all(|x| x.holds));
        assert_eq!(reps.len(), 3);

        let same = bunkbed_check(&g, 0, 0, &r("1/3"), &caps()).unwrap();
        assert_eq!(same[0].lhs, Rational::one());
        let zero = bunkbed_check(&g, 0, 1, &Rational::zero(), &caps()).unwrap();
        assert!(zero[0].lhs.is_zero() && zero[0].rhs.is_zero() && zero[0].holds);
    }

    #[test]
    fn mixed_model_cases() {
        let path = Graph::parse_edge_list("u v\nv w").unwrap();
        for (pp, p) in [("1/3", "1/3"), ("1", "1/2"), ("0", "1/4")] {
            let reps = verify_mixed_model(&path, 0, &r(pp), &r(p), &caps()).unwrap();
            assert_eq!(reps.len(), 2);
            assert!(reps.iter().all(|x| x.holds), "{pp} {p}");
        }
    }

    #[test]
    fn k4_minus_ab_arrival_and_departure_correlate_positively() {
        let k = k4_minus_ab();
        let idx = |x: &str| k.index_of(x).unwrap();
        let t = ClusterTable::build_full(&k, &ModelSpec::RandomOrientation, &caps()).unwrap();
        let rep = correlation_from_table(
            &t,
            &ReachPredicate::reached_from(idx("s"), idx("a")),
            &ReachPredicate::reach(idx("s"), idx("b")),
            &ReachPredicate::True,
        )
        .unwrap();
        assert_eq!(rep.sign, Sign::Positive);
    }

    #[test]
    fn sign_search_small() {
        let found = search_correlation_signs(2, SignMode::AToS, false, &caps()).unwrap();
        // single edge, s and a = b the other endpoint: P(A) = P(B) = 1/2, P(AB) = 0
        assert!(found.iter().any(|f| f.covariance == r("-1/4")));
        assert!(found.iter().all(|f| f.sign != Sign::Zero));
        assert!(search_correlation_signs(6, SignMode::AToS, false, &caps()).is_err());
    }

    #[test]
    fn directed_percolation_arrival_and_departure_correlate_positively() {
        let k = k4_minus_ab();
        let idx = |x: &str| k.index_of(x).unwrap();
        let t = ClusterTable::build_full(&k, &"d:p=1/2".parse().unwrap(), &caps()).unwrap();
        let rep = correlation_from_table(
            &t,
            &ReachPredicate::reached_from(idx("s"), idx("a")),
            &ReachPredicate::reach(idx("s"), idx("b")),
            &ReachPredicate::True,
        )
        .unwrap();
        assert_eq!(rep.sign, Sign::Positive);
    }

    fn small_graph() -> impl proptest::strategy::Strategy<Value = Graph> {
        use proptest::prelude::*;
        (1usize..=5).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            proptest::sample::subsequence(pairs.clone(), 0..=pairs.len().min(7))
                .prop_map(move |edges| Graph::from_index_edges(n, &edges).unwrap())
        })
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn cluster_laws_agree_on_random_graphs(g in small_graph(), root in 0usize..5, pi in 0usize..4) {
            let p = r(["1/2", "1/3", "2/3", "1/5"][pi]);
            let u = root % g.n();
            proptest::prop_assert!(verify_lemma1(&g, u, &p, &caps()).unwrap().iter().all(|x| x.holds));
            if g.n() >= 2 {
                let w = (u + 1) % g.n();
                proptest::prop_assert!(verify_lemma2(&g, u, w, &p, &caps()).unwrap().iter().all(|x| x.holds));
            }
        }

        #[test]
        fn path_correlations_hold_on_random_graphs(g in small_graph(), s in 0usize..5, a in 0usize..5, b in 0usize..5, t in 0usize..5) {
            let n = g.n();
            let (s, a, b, t) = (s % n, a % n, b % n, t % n);
            match verify_corollaries(&g, s, a, b, t, &caps()) {
                Ok(reps) => proptest::prop_assert!(reps.iter().all(|x| x.holds)),
                Err(Error::ZeroProbabilityCondition) => proptest::prop_assert_eq!(s, t),
                Err(e) => return Err(proptest::test_runner::TestCaseError::fail(e.to_string())),
            }
        }
    }
}
