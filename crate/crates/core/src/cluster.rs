//! Cluster laws: brute-force enumeration and the pivot recursions.
//!
//! The recursion for `P(C_u = U)` removes a pivot `v ∈ U \ {u}`: the cluster
//! of `u` in `G \ {v}` is some `U1`, at least one of the `r` edges between
//! `U1` and `v` is open, and `v`'s cluster in `G \ U1` is `U \ U1`. The same
//! recursion holds for the out-cluster in `O` (with `q = 1/2`) and in `D^p`,
//! so the recursive value doubles as an independent check on all three
//! brute-force laws.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use serde_json::{json, Value};

use crate::exact::Rational;
use crate::graph::{Graph, VertexSet};
use crate::models::{Caps, ClusterTable, ModelSpec, Realization};
use crate::{Error, GraphError, Result};

/// Law of the cluster of `root` (out-cluster for directed models).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterDistribution {
    pub root: usize,
    pub model: String,
    pub vertex_count: usize,
    pub probs: BTreeMap<VertexSet, Rational>,
}

/// Joint law of `(C_u, C_w)`; for directed models `(out-cluster of u, in-cluster of w)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointClusterDistribution {
    pub roots: (usize, usize),
    pub model: String,
    pub vertex_count: usize,
    pub probs: BTreeMap<(VertexSet, VertexSet), Rational>,
}

/// Common view used by [`compare_distributions`].
pub trait Distribution {
    type Key: Ord + Clone;
    fn roots(&self) -> (usize, Option<usize>);
    fn vertex_count(&self) -> usize;
    fn probs(&self) -> &BTreeMap<Self::Key, Rational>;
    fn model(&self) -> &str;

    fn total(&self) -> Rational {
        self.probs().values().sum()
    }
}

impl Distribution for ClusterDistribution {
    type Key = VertexSet;
    fn roots(&self) -> (usize, Option<usize>) {
        (self.root, None)
    }
    fn vertex_count(&self) -> usize {
        self.vertex_count
    }
    fn probs(&self) -> &BTreeMap<VertexSet, Rational> {
        &self.probs
    }
    fn model(&self) -> &str {
        &self.model
    }
}

impl Distribution for JointClusterDistribution {
    type Key = (VertexSet, VertexSet);
    fn roots(&self) -> (usize, Option<usize>) {
        (self.roots.0, Some(self.roots.1))
    }
    fn vertex_count(&self) -> usize {
        self.vertex_count
    }
    fn probs(&self) -> &BTreeMap<(VertexSet, VertexSet), Rational> {
        &self.probs
    }
    fn model(&self) -> &str {
        &self.model
    }
}

impl ClusterDistribution {
    pub fn get(&self, set: VertexSet) -> Rational {
        self.probs.get(&set).cloned().unwrap_or_else(Rational::zero)
    }

    /// `[{"cluster": [names..], "probability": "n/d"}, ..]`
    pub fn to_json(&self, g: &Graph) -> Value {
        json!({
            "root": g.name(self.root),
            "model": self.model,
            "law": self.probs.iter().map(|(k, p)| json!({
                "cluster": g.set_names(*k),
                "probability": p,
            })).collect::<Vec<_>>(),
        })
    }
}

impl JointClusterDistribution {
    pub fn get(&self, u_set: VertexSet, w_set: VertexSet) -> Rational {
        self.probs.get(&(u_set, w_set)).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn to_json(&self, g: &Graph) -> Value {
        json!({
            "roots": [g.name(self.roots.0), g.name(self.roots.1)],
            "model": self.model,
            "law": self.probs.iter().map(|((a, b), p)| json!({
                "clusters": [g.set_names(*a), g.set_names(*b)],
                "probability": p,
            })).collect::<Vec<_>>(),
        })
    }
}

fn check_vertex(g: &Graph, v: usize) -> Result<()> {
    if v >= g.n() {
        return Err(GraphError::IndexOutOfRange(v).into());
    }
    Ok(())
}

fn law_from_table<K: Ord, F: Fn(&dyn Realization) -> K>(table: &ClusterTable, key: F) -> BTreeMap<K, Rational> {
    let mut law = BTreeMap::new();
    for (entry, w) in table.entries() {
        *law.entry(key(&entry)).or_insert_with(Rational::zero) += w;
    }
    law.retain(|_, p: &mut Rational| !p.is_zero());
    law
}

/// Exact law of the cluster of `u` by enumerating every state of `model`.
pub fn cluster_distribution_bruteforce(
    g: &Graph,
    model: &ModelSpec,
    u: usize,
    caps: &Caps,
) -> Result<ClusterDistribution> {
    check_vertex(g, u)?;
    let table = ClusterTable::build(g, model, VertexSet::singleton(u), VertexSet::EMPTY, caps)?;
    cluster_distribution_from_table(&table, g, model, u)
}

/// Law of the out-cluster of `u` read off a table that tracks `u`.
pub fn cluster_distribution_from_table(
    table: &ClusterTable,
    g: &Graph,
    model: &ModelSpec,
    u: usize,
) -> Result<ClusterDistribution> {
    table.probability(&crate::ReachPredicate::Family(crate::UpwardClosedFamily::always(u)))?;
    Ok(ClusterDistribution {
        root: u,
        model: model.to_string(),
        vertex_count: g.n(),
        probs: law_from_table(table, |e| e.out_cluster(u)),
    })
}

/// Exact joint law of `(out-cluster of u, in-cluster of w)`; for `E^p` both
/// are ordinary clusters. Non-disjoint key pairs are kept.
pub fn joint_distribution_bruteforce(
    g: &Graph,
    model: &ModelSpec,
    u: usize,
    w: usize,
    caps: &Caps,
) -> Result<JointClusterDistribution> {
    check_vertex(g, u)?;
    check_vertex(g, w)?;
    if u == w {
        return Err(Error::Precondition("joint law needs two distinct roots".into()));
    }
    let table = ClusterTable::build(g, model, VertexSet::singleton(u), VertexSet::singleton(w), caps)?;
    joint_distribution_from_table(&table, g, model, u, w)
}

pub fn joint_distribution_from_table(
    table: &ClusterTable,
    g: &Graph,
    model: &ModelSpec,
    u: usize,
    w: usize,
) -> Result<JointClusterDistribution> {
    table.probability(&crate::ReachPredicate::And(vec![
        crate::ReachPredicate::Family(crate::UpwardClosedFamily::always(u)),
        crate::ReachPredicate::InFamily(crate::UpwardClosedFamily::always(w)),
    ]))?;
    Ok(JointClusterDistribution {
        roots: (u, w),
        model: model.to_string(),
        vertex_count: g.n(),
        probs: law_from_table(table, |e| (e.out_cluster(u), e.in_cluster(w))),
    })
}

/// Memoized evaluator of the single- and two-cluster recursions for `E^p`.
///
/// Subgraphs are always induced subgraphs of the original graph, so the set
/// of surviving vertices identifies them.
pub struct ClusterRecursion<'g> {
    g: &'g Graph,
    q_pows: Vec<Rational>,
    single_memo: HashMap<(u64, usize, u64), Rational>,
    joint_memo: HashMap<(u64, usize, usize, u64, u64), Rational>,
}

impl<'g> ClusterRecursion<'g> {
    pub fn new(g: &'g Graph, p: &Rational) -> Result<Self> {
        let q = p.complement()?;
        let q_pows = (0..=2 * g.n()).map(|k| q.pow(k as u32)).collect();
        Ok(ClusterRecursion { g, q_pows, single_memo: HashMap::new(), joint_memo: HashMap::new() })
    }

    fn q_pow(&self, k: usize) -> &Rational {
        &self.q_pows[k]
    }

    fn degree_in(&self, alive: VertexSet, v: usize) -> usize {
        (self.g.neighbors(v) & alive).len()
    }

    /// `P(C_u(G[alive]) = target)`.
    pub fn single(&mut self, alive: VertexSet, u: usize, target: VertexSet) -> Rational {
        if !target.contains(u) || !target.is_subset(alive) {
            return Rational::zero();
        }
        let key = (alive.bits(), u, target.bits());
        if let Some(v) = self.single_memo.get(&key) {
            return v.clone();
        }
        let value = if target == VertexSet::singleton(u) {
            self.q_pow(self.degree_in(alive, u)).clone()
        } else {
            let v = (target.without(u)).lowest().expect("target has a second vertex");
            let rest = target.without(u).without(v);
            let mut sum = Rational::zero();
            for sub in rest.subsets() {
                let u1 = sub.with(u);
                let r = (self.g.neighbors(v) & u1).len();
                if r == 0 {
                    continue;
                }
                let a = self.single(alive.without(v), u, u1);
                if a.is_zero() {
                    continue;
                }
                let b = self.single(alive - u1, v, target - u1);
                let open = Rational::one() - self.q_pow(r);
                sum += a * open * b;
            }
            sum
        };
        self.single_memo.insert(key, value.clone());
        value
    }

    /// `P(C_u(G[alive]) = tu, C_w(G[alive]) = tw)` for disjoint targets.
    ///
    /// When pivoting on `v ∈ tu`, every edge between `v` and `tw` must be
    /// closed as well, which contributes the factor `q^{e(v, tw)}`.
    pub fn joint(&mut self, alive: VertexSet, u: usize, w: usize, tu: VertexSet, tw: VertexSet) -> Rational {
        if !tu.contains(u) || !tw.contains(w) || !tu.is_disjoint(tw) || !(tu | tw).is_subset(alive) {
            return Rational::zero();
        }
        let key = (alive.bits(), u, w, tu.bits(), tw.bits());
        if let Some(v) = self.joint_memo.get(&key) {
            return v.clone();
        }
        let value = if tu.len() == 1 && tw.len() == 1 {
            let shared = usize::from(self.g.has_edge(u, w));
            self.q_pow(self.degree_in(alive, u) + self.degree_in(alive, w) - shared).clone()
        } else {
            // Pivot inside tu when it has a second vertex, otherwise inside tw.
            let pivot_in_u = tu.len() >= 2;
            let (root, target, other) = if pivot_in_u { (u, tu, tw) } else { (w, tw, tu) };
            let v = target.without(root).lowest().expect("target has a second vertex");
            let rest = target.without(root).without(v);
            let closed_to_other = self.q_pow((self.g.neighbors(v) & other).len()).clone();
            let mut sum = Rational::zero();
            if !closed_to_other.is_zero() {
                for sub in rest.subsets() {
                    let t1 = sub.with(root);
                    let r = (self.g.neighbors(v) & t1).len();
                    if r == 0 {
                        continue;
                    }
                    let a = if pivot_in_u {
                        self.joint(alive.without(v), u, w, t1, tw)
                    } else {
                        self.joint(alive.without(v), u, w, tu, t1)
                    };
                    if a.is_zero() {
                        continue;
                    }
                    let b = self.single(alive - t1 - other, v, target - t1);
                    let open = Rational::one() - self.q_pow(r);
                    sum += a * open * &closed_to_other * b;
                }
            }
            sum
        };
        self.joint_memo.insert(key, value.clone());
        value
    }
}

/// `P_{E^p}(C_u = target)` by the pivot recursion. Equals the out-cluster
/// probability in `D^p`, and in `O` when `p = 1/2`.
pub fn cluster_distribution_recursive(g: &Graph, u: usize, target: VertexSet, p: &Rational) -> Result<Rational> {
    check_vertex(g, u)?;
    if !target.contains(u) {
        return Err(Error::Precondition("target cluster must contain its root".into()));
    }
    Ok(ClusterRecursion::new(g, p)?.single(g.vertices(), u, target))
}

/// `P_{E^p}(C_u = tu, C_w = tw)` by the joint recursion.
pub fn joint_distribution_recursive(
    g: &Graph,
    u: usize,
    w: usize,
    tu: VertexSet,
    tw: VertexSet,
    p: &Rational,
) -> Result<Rational> {
    check_vertex(g, u)?;
    check_vertex(g, w)?;
    if !tu.contains(u) || !tw.contains(w) {
        return Err(Error::Precondition("target clusters must contain their roots".into()));
    }
    if !tu.is_disjoint(tw) {
        return Err(Error::Precondition("target clusters overlap".into()));
    }
    Ok(ClusterRecursion::new(g, p)?.joint(g.vertices(), u, w, tu, tw))
}

/// Full cluster law of `u` from the recursion, over every candidate set.
pub fn recursive_cluster_law(g: &Graph, u: usize, p: &Rational) -> Result<ClusterDistribution> {
    check_vertex(g, u)?;
    let mut rec = ClusterRecursion::new(g, p)?;
    let mut probs = BTreeMap::new();
    for sub in g.vertices().without(u).subsets() {
        let value = rec.single(g.vertices(), u, sub.with(u));
        if !value.is_zero() {
            probs.insert(sub.with(u), value);
        }
    }
    Ok(ClusterDistribution { root: u, model: format!("recursive:p={p}"), vertex_count: g.n(), probs })
}

/// Joint law on disjoint pairs from the recursion.
pub fn recursive_joint_law(g: &Graph, u: usize, w: usize, p: &Rational) -> Result<JointClusterDistribution> {
    check_vertex(g, u)?;
    check_vertex(g, w)?;
    if u == w {
        return Err(Error::Precondition("joint law needs two distinct roots".into()));
    }
    let mut rec = ClusterRecursion::new(g, p)?;
    let free = g.vertices().without(u).without(w);
    let mut probs = BTreeMap::new();
    for a in free.subsets() {
        for b in (free - a).subsets() {
            let (tu, tw) = (a.with(u), b.with(w));
            let value = rec.joint(g.vertices(), u, w, tu, tw);
            if !value.is_zero() {
                probs.insert((tu, tw), value);
            }
        }
    }
    Ok(JointClusterDistribution {
        roots: (u, w),
        model: format!("recursive:p={p}"),
        vertex_count: g.n(),
        probs,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiffEntry<K> {
    pub key: K,
    pub left: Rational,
    pub right: Rational,
}

/// Keys where two laws disagree. Empty means equal on the filtered domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DiffReport<K> {
    pub left_model: String,
    pub right_model: String,
    pub compared: usize,
    pub entries: Vec<DiffEntry<K>>,
}

impl<K> DiffReport<K> {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of `|left - right|` over differing keys.
    pub fn l1(&self) -> Rational {
        self.entries.iter().map(|e| (&e.left - &e.right).abs()).sum()
    }
}

/// Compares two laws key by key over the union of their supports, with
/// missing keys read as probability zero.
pub fn compare_distributions<D: Distribution>(
    left: &D,
    right: &D,
    key_filter: impl Fn(&D::Key) -> bool,
) -> Result<DiffReport<D::Key>> {
    if left.roots() != right.roots() || left.vertex_count() != right.vertex_count() {
        return Err(Error::Precondition("distributions have different roots or graphs".into()));
    }
    let keys: std::collections::BTreeSet<&D::Key> = left.probs().keys().chain(right.probs().keys()).collect();
    let zero = Rational::zero();
    let mut compared = 0;
    let mut entries = Vec::new();
    for key in keys.into_iter().filter(|k| key_filter(k)) {
        compared += 1;
        let l = left.probs().get(key).unwrap_or(&zero);
        let r = right.probs().get(key).unwrap_or(&zero);
        if l != r {
            entries.push(DiffEntry { key: key.clone(), left: l.clone(), right: r.clone() });
        }
    }
    Ok(DiffReport {
        left_model: left.model().to_string(),
        right_model: right.model().to_string(),
        compared,
        entries,
    })
}

/// Key filter for the two-cluster equality: only disjoint pairs.
pub fn disjoint_keys(key: &(VertexSet, VertexSet)) -> bool {
    key.0.is_disjoint(key.1)
}
