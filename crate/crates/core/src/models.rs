//! The four random-graph models as exhaustive, exactly weighted state spaces.
//!
//! A state assigns one [`EdgeState`] to every edge. Each model offers two or
//! four choices per edge, so states are enumerated by a mixed-radix counter
//! with edge 0 as the least significant digit. Every choice belongs to a
//! weight class; a state's weight is the product of its class probabilities,
//! so folds only need to count states per class signature and convert to
//! rationals once at the end.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::events::ReachPredicate;
use crate::exact::Rational;
use crate::graph::{Graph, VertexSet};
use crate::{Error, Result};

/// Default limit on the number of states any exhaustive enumeration may visit
/// (`2^24`, i.e. 24 edges for two-choice models, 12 for four-choice ones).
pub const DEFAULT_MAX_STATES: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_states: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_states: DEFAULT_MAX_STATES }
    }
}

/// Per-edge realization. Directions are relative to the stored endpoint order
/// `(i, j)` of the edge: `Forward` is the arc `i -> j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeState {
    Absent,
    /// Undirected and open; traversable both ways.
    Present,
    Forward,
    Backward,
    /// Both arcs of a `D^p` edge.
    BothArcs,
}

impl EdgeState {
    pub fn reversed(self) -> EdgeState {
        match self {
            EdgeState::Forward => EdgeState::Backward,
            EdgeState::Backward => EdgeState::Forward,
            other => other,
        }
    }

    fn arcs(self) -> (bool, bool) {
        match self {
            EdgeState::Absent => (false, false),
            EdgeState::Present | EdgeState::BothArcs => (true, true),
            EdgeState::Forward => (true, false),
            EdgeState::Backward => (false, true),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelSpec {
    EdgePercolation { p: Rational },
    RandomOrientation,
    DirectedPercolation { p: Rational },
    Mixed { p_prime: Rational, p1: Rational },
}

const E_CHOICES: [(EdgeState, usize); 2] = [(EdgeState::Absent, 0), (EdgeState::Present, 1)];
const O_CHOICES: [(EdgeState, usize); 2] = [(EdgeState::Forward, 0), (EdgeState::Backward, 0)];
const D_CHOICES: [(EdgeState, usize); 4] = [
    (EdgeState::Absent, 0),
    (EdgeState::Forward, 1),
    (EdgeState::Backward, 1),
    (EdgeState::BothArcs, 2),
];
const MIXED_CHOICES: [(EdgeState, usize); 4] = [
    (EdgeState::Absent, 0),
    (EdgeState::Forward, 1),
    (EdgeState::Backward, 1),
    (EdgeState::Present, 2),
];

impl ModelSpec {
    pub fn edge_percolation(p: Rational) -> Result<Self> {
        Ok(ModelSpec::EdgePercolation { p: p.probability()? })
    }

    pub fn directed_percolation(p: Rational) -> Result<Self> {
        Ok(ModelSpec::DirectedPercolation { p: p.probability()? })
    }

    pub fn mixed(p_prime: Rational, p1: Rational) -> Result<Self> {
        Ok(ModelSpec::Mixed { p_prime: p_prime.probability()?, p1: p1.probability()? })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::RandomOrientation => {}
            ModelSpec::EdgePercolation { p } | ModelSpec::DirectedPercolation { p } => {
                p.clone().probability()?;
            }
            ModelSpec::Mixed { p_prime, p1 } => {
                p_prime.clone().probability()?;
                p1.clone().probability()?;
            }
        }
        Ok(())
    }

    /// Edge choices in digit order, each tagged with its weight class.
    pub(crate) fn choices(&self) -> &'static [(EdgeState, usize)] {
        match self {
            ModelSpec::EdgePercolation { .. } => &E_CHOICES,
            ModelSpec::RandomOrientation => &O_CHOICES,
            ModelSpec::DirectedPercolation { .. } => &D_CHOICES,
            ModelSpec::Mixed { .. } => &MIXED_CHOICES,
        }
    }

    /// Probability of a single choice in each weight class.
    pub(crate) fn class_probabilities(&self) -> Vec<Rational> {
        let half = Rational::half();
        match self {
            ModelSpec::EdgePercolation { p } => vec![Rational::one() - p, p.clone()],
            ModelSpec::RandomOrientation => vec![half],
            ModelSpec::DirectedPercolation { p } => {
                let q = Rational::one() - p;
                vec![&q * &q, &q * p, p * p]
            }
            ModelSpec::Mixed { p_prime, p1 } => vec![
                p_prime * &(Rational::one() - p1),
                &(Rational::one() - p_prime) * &half,
                p_prime * p1,
            ],
        }
    }

    /// Probability that a single edge is in state `state`.
    pub fn edge_state_probability(&self, state: EdgeState) -> Rational {
        let probs = self.class_probabilities();
        self.choices()
            .iter()
            .find(|(s, _)| *s == state)
            .map(|&(_, c)| probs[c].clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn radix(&self) -> usize {
        self.choices().len()
    }

    /// Number of states on `m` edges, or `None` past `u64`.
    pub fn state_count(&self, m: usize) -> Option<u64> {
        let bits = m.checked_mul(self.radix().trailing_zeros() as usize)?;
        (bits < 64).then(|| 1u64 << bits)
    }

    pub fn is_directed(&self) -> bool {
        !matches!(self, ModelSpec::EdgePercolation { .. })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::EdgePercolation { p } => write!(f, "e:p={p}"),
            ModelSpec::RandomOrientation => write!(f, "o"),
            ModelSpec::DirectedPercolation { p } => write!(f, "d:p={p}"),
            ModelSpec::Mixed { p_prime, p1 } => write!(f, "mixed:pp={p_prime},p1={p1}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Parses `o`, `e:p=1/2`, `d:p=1/3` or `mixed:pp=1/3,p1=1/2`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::Model(text.to_string());
        let text = text.trim();
        let (kind, args) = text.split_once(':').unwrap_or((text, ""));
        let mut params = HashMap::new();
        for kv in args.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            let value: Rational = v.trim().parse()?;
            if params.insert(k.trim(), value).is_some() {
                return Err(bad());
            }
        }
        let mut take = |key: &str| params.remove(key).ok_or_else(bad);
        let model = match kind {
            "o" => ModelSpec::RandomOrientation,
            "e" => ModelSpec::edge_percolation(take("p")?)?,
            "d" => ModelSpec::directed_percolation(take("p")?)?,
            "mixed" => {
                let pp = take("pp")?;
                ModelSpec::mixed(pp, take("p1")?)?
            }
            _ => return Err(bad()),
        };
        if !params.is_empty() {
            return Err(bad());
        }
        Ok(model)
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `(p', p1) = (1 - 2p(1-p), p^2 / p')`: the random-split mixed model with
/// these parameters has the same per-edge law as `D^p`.
pub fn dp_split_parameters(p: &Rational) -> Result<(Rational, Rational)> {
    let q = p.complement()?;
    let p_prime = Rational::one() - &(&Rational::from_integer(2) * &(p * &q));
    // 1 - 2pq >= 1/2 on [0, 1]
    let p1 = (p * p).checked_div(&p_prime)?;
    Ok((p_prime, p1))
}

/// One realization of a model with its exact probability.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub edges: Vec<EdgeState>,
    pub weight: Rational,
}

impl WorldState {
    pub fn out_cluster(&self, g: &Graph, u: usize) -> VertexSet {
        Arcs::from_states(g, &self.edges).out_cluster(u)
    }

    pub fn in_cluster(&self, g: &Graph, u: usize) -> VertexSet {
        Arcs::from_states(g, &self.edges).in_cluster(u)
    }

    /// The same state with every single arc reversed.
    pub fn reversed(&self) -> WorldState {
        WorldState {
            edges: self.edges.iter().map(|e| e.reversed()).collect(),
            weight: self.weight.clone(),
        }
    }
}

/// Cluster of `u`: vertices reachable from `u` along traversable arcs.
/// For `E^p` states this is the undirected open cluster.
pub fn out_cluster(g: &Graph, state: &WorldState, u: usize) -> VertexSet {
    state.out_cluster(g, u)
}

/// Vertices from which `u` is reachable.
pub fn in_cluster(g: &Graph, state: &WorldState, u: usize) -> VertexSet {
    state.in_cluster(g, u)
}

/// Out- and in-neighbour sets of one state.
#[derive(Clone, Debug)]
pub struct Arcs {
    out: Vec<VertexSet>,
    inn: Vec<VertexSet>,
}

impl Arcs {
    pub fn from_states(g: &Graph, states: &[EdgeState]) -> Self {
        let mut arcs = Arcs { out: vec![VertexSet::EMPTY; g.n()], inn: vec![VertexSet::EMPTY; g.n()] };
        arcs.fill(g, states);
        arcs
    }

    fn fill(&mut self, g: &Graph, states: &[EdgeState]) {
        self.out.fill(VertexSet::EMPTY);
        self.inn.fill(VertexSet::EMPTY);
        for (&(i, j), st) in g.edges().iter().zip(states) {
            let (fwd, bwd) = st.arcs();
            if fwd {
                self.out[i].insert(j);
                self.inn[j].insert(i);
            }
            if bwd {
                self.out[j].insert(i);
                self.inn[i].insert(j);
            }
        }
    }

    fn closure(adj: &[VertexSet], root: usize) -> VertexSet {
        let mut seen = VertexSet::singleton(root);
        let mut frontier = seen;
        while !frontier.is_empty() {
            let mut next = VertexSet::EMPTY;
            for v in frontier.iter() {
                next = next | adj[v];
            }
            frontier = next - seen;
            seen = seen | frontier;
        }
        seen
    }

    pub fn out_cluster(&self, u: usize) -> VertexSet {
        Self::closure(&self.out, u)
    }

    pub fn in_cluster(&self, u: usize) -> VertexSet {
        Self::closure(&self.inn, u)
    }
}

/// Read access to one realization, used to evaluate [`ReachPredicate`]s.
pub trait Realization {
    fn out_cluster(&self, v: usize) -> VertexSet;
    fn in_cluster(&self, v: usize) -> VertexSet;
    /// `None` when the realization only records clusters.
    fn edge_states(&self) -> Option<&[EdgeState]>;
}

/// A state seen during a fold.
pub struct StateView<'a> {
    pub states: &'a [EdgeState],
    pub arcs: &'a Arcs,
    /// Packed per-class choice counts, 8 bits per class.
    pub signature: u64,
}

impl Realization for StateView<'_> {
    fn out_cluster(&self, v: usize) -> VertexSet {
        self.arcs.out_cluster(v)
    }
    fn in_cluster(&self, v: usize) -> VertexSet {
        self.arcs.in_cluster(v)
    }
    fn edge_states(&self) -> Option<&[EdgeState]> {
        Some(self.states)
    }
}

impl Realization for (&Graph, &WorldState) {
    fn out_cluster(&self, v: usize) -> VertexSet {
        self.1.out_cluster(self.0, v)
    }
    fn in_cluster(&self, v: usize) -> VertexSet {
        self.1.in_cluster(self.0, v)
    }
    fn edge_states(&self) -> Option<&[EdgeState]> {
        Some(&self.1.edges)
    }
}

fn checked_state_count(g: &Graph, model: &ModelSpec, caps: &Caps) -> Result<u64> {
    model.validate()?;
    match model.state_count(g.m()) {
        Some(total) if total <= caps.max_states => Ok(total),
        Some(total) => Err(Error::CapExceeded { states: total.to_string(), cap: caps.max_states }),
        None => Err(Error::CapExceeded {
            states: format!("{}^{}", model.radix(), g.m()),
            cap: caps.max_states,
        }),
    }
}

fn signature_of(choices: &[(EdgeState, usize)], digits: &[u8]) -> u64 {
    digits.iter().map(|&d| 1u64 << (8 * choices[d as usize].1)).sum()
}

/// Exact weights of class signatures, cached.
pub(crate) struct WeightTable {
    probs: Vec<Rational>,
    cache: HashMap<u64, Rational>,
}

impl WeightTable {
    pub(crate) fn new(model: &ModelSpec) -> Self {
        WeightTable { probs: model.class_probabilities(), cache: HashMap::new() }
    }

    pub(crate) fn weight(&mut self, signature: u64) -> Rational {
        let probs = &self.probs;
        self.cache
            .entry(signature)
            .or_insert_with(|| {
                probs
                    .iter()
                    .enumerate()
                    .map(|(c, p)| p.pow(((signature >> (8 * c)) & 0xff) as u32))
                    .fold(Rational::one(), |acc, x| acc * x)
            })
            .clone()
    }

    /// `sum count * weight(signature)` over a signature histogram.
    pub(crate) fn total(&mut self, hist: &HashMap<u64, u64>) -> Rational {
        let mut keys: Vec<_> = hist.iter().collect();
        keys.sort();
        keys.into_iter()
            .map(|(&sig, &count)| self.weight(sig) * Rational::from(count))
            .sum()
    }
}

const CHUNK: u64 = 1 << 12;

/// Parallel fold over every state of `model` on `g`.
///
/// The accumulator must be merged commutatively; exact results therefore do
/// not depend on the thread count.
pub fn fold_states<T, I, F, M>(
    g: &Graph,
    model: &ModelSpec,
    caps: &Caps,
    init: I,
    step: F,
    merge: M,
) -> Result<T>
where
    T: Send,
    I: Fn() -> T + Sync + Send,
    F: Fn(&mut T, &StateView<'_>) + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    let total = checked_state_count(g, model, caps)?;
    let choices = model.choices();
    let radix = choices.len() as u64;
    let m = g.m();

    let run = |start: u64, end: u64| -> T {
        let mut acc = init();
        let mut digits = vec![0u8; m];
        let mut rest = start;
        for d in digits.iter_mut() {
            *d = (rest % radix) as u8;
            rest /= radix;
        }
        let mut states: Vec<EdgeState> = digits.iter().map(|&d| choices[d as usize].0).collect();
        let mut arcs = Arcs::from_states(g, &states);
        for idx in start..end {
            if idx != start {
                for (d, st) in digits.iter_mut().zip(states.iter_mut()) {
                    *d += 1;
                    if u64::from(*d) == radix {
                        *d = 0;
                        *st = choices[0].0;
                    } else {
                        *st = choices[*d as usize].0;
                        break;
                    }
                }
                arcs.fill(g, &states);
            }
            let view = StateView { states: &states, arcs: &arcs, signature: signature_of(choices, &digits) };
            step(&mut acc, &view);
        }
        acc
    };

    if total <= CHUNK {
        return Ok(run(0, total));
    }
    let chunks = total.div_ceil(CHUNK);
    Ok((0..chunks)
        .into_par_iter()
        .map(|c| run(c * CHUNK, ((c + 1) * CHUNK).min(total)))
        .reduce(&init, &merge))
}

fn merge_hist(mut a: HashMap<u64, u64>, b: HashMap<u64, u64>) -> HashMap<u64, u64> {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Every state of `model` on `g`, each exactly once, with its exact weight.
pub fn enumerate_states(g: &Graph, model: &ModelSpec, caps: &Caps) -> Result<StateIter> {
    let total = checked_state_count(g, model, caps)?;
    Ok(StateIter {
        choices: model.choices(),
        weights: WeightTable::new(model),
        digits: vec![0; g.m()],
        next: 0,
        total,
    })
}

pub struct StateIter {
    choices: &'static [(EdgeState, usize)],
    weights: WeightTable,
    digits: Vec<u8>,
    next: u64,
    total: u64,
}

impl Iterator for StateIter {
    type Item = WorldState;

    fn next(&mut self) -> Option<WorldState> {
        if self.next >= self.total {
            return None;
        }
        if self.next > 0 {
            let radix = self.choices.len() as u8;
            for d in self.digits.iter_mut() {
                *d += 1;
                if *d == radix {
                    *d = 0;
                } else {
                    break;
                }
            }
        }
        self.next += 1;
        let signature = signature_of(self.choices, &self.digits);
        Some(WorldState {
            edges: self.digits.iter().map(|&d| self.choices[d as usize].0).collect(),
            weight: self.weights.weight(signature),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.next) as usize;
        (left, Some(left))
    }
}

/// Exact probability that `pred` holds under `model`.
pub fn event_probability(
    g: &Graph,
    model: &ModelSpec,
    pred: &ReachPredicate,
    caps: &Caps,
) -> Result<Rational> {
    pred.validate(g)?;
    let hist = fold_states(
        g,
        model,
        caps,
        HashMap::new,
        |acc: &mut HashMap<u64, u64>, view| {
            if pred.eval(view) {
                *acc.entry(view.signature).or_insert(0) += 1;
            }
        },
        merge_hist,
    )?;
    Ok(WeightTable::new(model).total(&hist))
}

/// Common-denominator weights of table entries.
#[derive(Clone, Debug)]
enum Numerators {
    Small { num: Vec<u128>, den: u128 },
    Big { num: Vec<BigInt>, den: BigInt },
}

/// Sums weights of keys that coincide after `mask`, sorted by key.
fn merge_keys<W, F>(keys: &[Box<[VertexSet]>], weights: &[W], mask: F) -> (Vec<Box<[VertexSet]>>, Vec<W>)
where
    W: Clone + Ord + std::ops::AddAssign<W>,
    F: Fn(&[VertexSet]) -> Box<[VertexSet]>,
{
    let mut merged: HashMap<Box<[VertexSet]>, W> = HashMap::new();
    for (key, w) in keys.iter().zip(weights) {
        match merged.entry(mask(key)) {
            std::collections::hash_map::Entry::Occupied(mut e) => *e.get_mut() += w.clone(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(w.clone());
            }
        }
    }
    let mut v: Vec<_> = merged.into_iter().collect();
    v.sort();
    v.into_iter().unzip()
}

/// Cluster-level summary of a model's state space.
///
/// States are grouped by the out-clusters of the tracked out-roots and the
/// in-clusters of the tracked in-roots. Any predicate that only reads those
/// clusters can be evaluated on the table instead of re-enumerating states.
#[derive(Clone, Debug)]
pub struct ClusterTable {
    n: usize,
    out_roots: VertexSet,
    in_roots: VertexSet,
    /// Per entry: `n` out-clusters then `n` in-clusters (empty when untracked).
    keys: Vec<Box<[VertexSet]>>,
    weights: Numerators,
}

/// Table-entry view; see [`ClusterTable`].
pub struct TableEntry<'a> {
    n: usize,
    key: &'a [VertexSet],
}

impl Realization for TableEntry<'_> {
    fn out_cluster(&self, v: usize) -> VertexSet {
        self.key[v]
    }
    fn in_cluster(&self, v: usize) -> VertexSet {
        self.key[self.n + v]
    }
    fn edge_states(&self) -> Option<&[EdgeState]> {
        None
    }
}

impl ClusterTable {
    pub fn build(
        g: &Graph,
        model: &ModelSpec,
        out_roots: VertexSet,
        in_roots: VertexSet,
        caps: &Caps,
    ) -> Result<Self> {
        let n = g.n();
        for v in (out_roots | in_roots).iter() {
            if v >= n {
                return Err(crate::GraphError::IndexOutOfRange(v).into());
            }
        }
        type Acc = HashMap<Box<[VertexSet]>, HashMap<u64, u64>>;
        let groups: Acc = fold_states(
            g,
            model,
            caps,
            Acc::new,
            |acc: &mut Acc, view| {
                let mut key = vec![VertexSet::EMPTY; 2 * n];
                for v in out_roots.iter() {
                    key[v] = view.arcs.out_cluster(v);
                }
                for v in in_roots.iter() {
                    key[n + v] = view.arcs.in_cluster(v);
                }
                let hist = match acc.get_mut(key.as_slice()) {
                    Some(h) => h,
                    None => acc.entry(key.into_boxed_slice()).or_default(),
                };
                *hist.entry(view.signature).or_insert(0) += 1;
            },
            |mut a, b| {
                for (k, h) in b {
                    let slot = a.entry(k).or_default();
                    for (s, c) in h {
                        *slot.entry(s).or_insert(0) += c;
                    }
                }
                a
            },
        )?;

        // Per-choice probabilities scaled to integers over the common
        // denominator L^m, L = lcm of class denominators.
        let probs = model.class_probabilities();
        let lcm = probs.iter().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
        let scaled: Vec<BigInt> = probs.iter().map(|p| p.numer() * (&lcm / p.denom())).collect();
        let den = num_traits::pow(lcm, g.m());

        let mut entries: Vec<(Box<[VertexSet]>, BigInt)> = groups
            .into_iter()
            .map(|(key, hist)| {
                let mut num = BigInt::zero();
                for (sig, count) in hist {
                    let mut w = BigInt::from(count);
                    for (c, s) in scaled.iter().enumerate() {
                        w *= num_traits::pow(s.clone(), ((sig >> (8 * c)) & 0xff) as usize);
                    }
                    num += w;
                }
                (key, num)
            })
            .filter(|(_, num)| !num.is_zero())
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let (keys, nums): (Vec<_>, Vec<_>) = entries.into_iter().unzip();

        // The total of all numerators is `den`, so every partial sum fits
        // whenever `den` does.
        let weights = match den.to_u128() {
            Some(d) => Numerators::Small {
                num: nums.iter().map(|x| x.to_u128().expect("numerator bounded by denominator")).collect(),
                den: d,
            },
            None => Numerators::Big { num: nums, den },
        };
        Ok(ClusterTable { n, out_roots, in_roots, keys, weights })
    }

    /// Table tracking every out- and in-cluster.
    pub fn build_full(g: &Graph, model: &ModelSpec, caps: &Caps) -> Result<Self> {
        Self::build(g, model, g.vertices(), g.vertices(), caps)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (TableEntry<'_>, Rational)> + '_ {
        self.keys.iter().enumerate().map(move |(i, key)| {
            (TableEntry { n: self.n, key }, self.entry_weight(i))
        })
    }

    fn entry_weight(&self, i: usize) -> Rational {
        match &self.weights {
            Numerators::Small { num, den } => ratio_u128(num[i], *den),
            Numerators::Big { num, den } => {
                num_rational::BigRational::new(num[i].clone(), den.clone()).into()
            }
        }
    }

    /// Keeps only the listed roots, merging entries that become identical.
    pub fn project(&self, out_roots: VertexSet, in_roots: VertexSet) -> Result<Self> {
        if !out_roots.is_subset(self.out_roots) || !in_roots.is_subset(self.in_roots) {
            return Err(Error::Precondition("projection onto untracked roots".into()));
        }
        let n = self.n;
        let mask = |key: &[VertexSet]| -> Box<[VertexSet]> {
            (0..2 * n)
                .map(|i| {
                    let keep = if i < n { out_roots.contains(i) } else { in_roots.contains(i - n) };
                    if keep { key[i] } else { VertexSet::EMPTY }
                })
                .collect()
        };
        let weights = match &self.weights {
            Numerators::Small { num, den } => {
                let (keys, num) = merge_keys(&self.keys, num, mask);
                (keys, Numerators::Small { num, den: *den })
            }
            Numerators::Big { num, den } => {
                let (keys, num) = merge_keys(&self.keys, num, mask);
                (keys, Numerators::Big { num, den: den.clone() })
            }
        };
        let (keys, weights) = weights;
        Ok(ClusterTable { n, out_roots, in_roots, keys, weights })
    }

    fn check(&self, pred: &ReachPredicate) -> Result<()> {
        if pred.reads_edge_states() {
            return Err(Error::Precondition("predicate reads edge states; use event_probability".into()));
        }
        let (outs, ins) = pred.roots();
        if !outs.is_subset(self.out_roots) || !ins.is_subset(self.in_roots) {
            return Err(Error::Precondition("predicate reads clusters the table does not track".into()));
        }
        Ok(())
    }

    /// Exact probability of a cluster-determined predicate.
    pub fn probability(&self, pred: &ReachPredicate) -> Result<Rational> {
        self.check(pred)?;
        Ok(self.probability_where(|e| pred.eval(e)))
    }

    pub(crate) fn probability_where<F: Fn(&TableEntry<'_>) -> bool>(&self, f: F) -> Rational {
        let n = self.n;
        let hit = self.keys.iter().map(|key| f(&TableEntry { n, key }));
        match &self.weights {
            Numerators::Small { num, den } => {
                let total: u128 = hit.zip(num).filter(|(h, _)| *h).map(|(_, w)| *w).sum();
                ratio_u128(total, *den)
            }
            Numerators::Big { num, den } => {
                let total: BigInt = hit.zip(num).filter(|(h, _)| *h).map(|(_, w)| w).sum();
                num_rational::BigRational::new(total, den.clone()).into()
            }
        }
    }
}

fn ratio_u128(num: u128, den: u128) -> Rational {
    num_rational::BigRational::new(BigInt::from(num), BigInt::from(den)).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::make_reachability_family;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn single_edge() -> Graph {
        Graph::parse_edge_list("u v").unwrap()
    }

    fn weights_of(g: &Graph, model: &ModelSpec) -> Vec<(EdgeState, Rational)> {
        enumerate_states(g, model, &Caps::default())
            .unwrap()
            .map(|s| (s.edges[0], s.weight))
            .collect()
    }

    #[test]
    fn single_edge_state_spaces() {
        let g = single_edge();
        let o = weights_of(&g, &ModelSpec::RandomOrientation);
        assert_eq!(o, [(EdgeState::Forward, r("1/2")), (EdgeState::Backward, r("1/2"))]);

        let e = weights_of(&g, &ModelSpec::edge_percolation(r("1/3")).unwrap());
        assert_eq!(e, [(EdgeState::Absent, r("2/3")), (EdgeState::Present, r("1/3"))]);

        let d = weights_of(&g, &ModelSpec::directed_percolation(r("1/3")).unwrap());
        assert_eq!(
            d,
            [
                (EdgeState::Absent, r("4/9")),
                (EdgeState::Forward, r("2/9")),
                (EdgeState::Backward, r("2/9")),
                (EdgeState::BothArcs, r("1/9")),
            ]
        );

        let (pp, p1) = (r("1/3"), r("1/4"));
        let mixed = weights_of(&g, &ModelSpec::mixed(pp.clone(), p1.clone()).unwrap());
        let one = Rational::one();
        assert_eq!(
            mixed,
            [
                (EdgeState::Absent, &pp * &(&one - &p1)),
                (EdgeState::Forward, (&one - &pp) * r("1/2")),
                (EdgeState::Backward, (&one - &pp) * r("1/2")),
                (EdgeState::Present, &pp * &p1),
            ]
        );
    }

    #[test]
    fn weights_sum_to_one() {
        let g = Graph::parse_edge_list("a b\nb c\nc a\nc d").unwrap();
        for model in [
            "o",
            "e:p=1/3",
            "e:p=0",
            "d:p=2/5",
            "mixed:pp=1/3,p1=1/2",
            "mixed:pp=1,p1=0",
        ] {
            let model: ModelSpec = model.parse().unwrap();
            let total: Rational =
                enumerate_states(&g, &model, &Caps::default()).unwrap().map(|s| s.weight).sum();
            assert_eq!(total, Rational::one(), "{model}");
        }
    }

    #[test]
    fn cap_is_enforced() {
        let g = Graph::parse_edge_list("a b\nb c\nc d").unwrap();
        let caps = Caps { max_states: 32 };
        assert!(enumerate_states(&g, &ModelSpec::RandomOrientation, &caps).is_ok());
        let d = ModelSpec::directed_percolation(r("1/2")).unwrap();
        assert!(matches!(enumerate_states(&g, &d, &caps), Err(Error::CapExceeded { .. })));
        let big = Graph::from_index_edges(
            12,
            &(0..11).flat_map(|i| (i + 1..12).map(move |j| (i, j))).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(matches!(
            enumerate_states(&big, &d, &Caps::default()),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn clusters_on_oriented_path() {
        // u -> v <- w
        let g = Graph::parse_edge_list("u v\nv w").unwrap();
        let st = WorldState {
            edges: vec![EdgeState::Forward, EdgeState::Backward],
            weight: r("1/4"),
        };
        assert_eq!(out_cluster(&g, &st, 0), VertexSet::from_bits(0b011));
        assert_eq!(in_cluster(&g, &st, 1), VertexSet::from_bits(0b111));
        assert_eq!(out_cluster(&g, &st.reversed(), 1), in_cluster(&g, &st, 1));
    }

    #[test]
    fn clusters_degenerate_states() {
        let g = Graph::parse_edge_list("u v\nv w").unwrap();
        let closed = WorldState { edges: vec![EdgeState::Absent; 2], weight: r("1") };
        assert_eq!(out_cluster(&g, &closed, 0), VertexSet::singleton(0));
        let both = WorldState { edges: vec![EdgeState::BothArcs, EdgeState::Absent], weight: r("1") };
        assert!(out_cluster(&g, &both, 1).contains(0));
        assert!(out_cluster(&g, &both, 0).contains(1));
        let e = single_edge();
        let fwd = WorldState { edges: vec![EdgeState::Forward], weight: r("1/2") };
        assert_eq!(in_cluster(&e, &fwd, 0), VertexSet::singleton(0));
    }

    #[test]
    fn triangle_reach_probability() {
        let g = Graph::parse_edge_list("s a\na b\nb s").unwrap();
        let pred = ReachPredicate::Family(make_reachability_family(0, VertexSet::singleton(1)));
        let p = event_probability(&g, &ModelSpec::RandomOrientation, &pred, &Caps::default()).unwrap();
        assert_eq!(p, r("5/8"));
        let e = single_edge();
        let pred = ReachPredicate::Family(make_reachability_family(0, VertexSet::singleton(1)));
        let p = event_probability(&e, &ModelSpec::RandomOrientation, &pred, &Caps::default()).unwrap();
        assert_eq!(p, r("1/2"));
        let p = event_probability(&g, &"d:p=1/3".parse().unwrap(), &ReachPredicate::True, &Caps::default())
            .unwrap();
        assert_eq!(p, Rational::one());
    }

    #[test]
    fn split_parameters() {
        assert_eq!(dp_split_parameters(&r("1/2")).unwrap(), (r("1/2"), r("1/2")));
        assert_eq!(dp_split_parameters(&r("1")).unwrap(), (r("1"), r("1")));
        assert_eq!(dp_split_parameters(&r("0")).unwrap(), (r("1"), r("0")));
        assert!(dp_split_parameters(&r("3/2")).is_err());
    }

    #[test]
    fn split_mixed_matches_directed_per_edge() {
        for p in ["0", "1/5", "1/3", "1/2", "3/4", "1"] {
            let p = r(p);
            let (pp, p1) = dp_split_parameters(&p).unwrap();
            let mixed = ModelSpec::mixed(pp, p1).unwrap();
            let d = ModelSpec::directed_percolation(p).unwrap();
            let pairs = [
                (EdgeState::Present, EdgeState::BothArcs),
                (EdgeState::Absent, EdgeState::Absent),
                (EdgeState::Forward, EdgeState::Forward),
                (EdgeState::Backward, EdgeState::Backward),
            ];
            for (ms, ds) in pairs {
                assert_eq!(mixed.edge_state_probability(ms), d.edge_state_probability(ds));
            }
        }
    }

    #[test]
    fn mixed_full_split_is_edge_percolation() {
        let p = r("2/7");
        let mixed = ModelSpec::mixed(Rational::one(), p.clone()).unwrap();
        let e = ModelSpec::edge_percolation(p).unwrap();
        for st in [EdgeState::Present, EdgeState::Absent] {
            assert_eq!(mixed.edge_state_probability(st), e.edge_state_probability(st));
        }
        assert!(mixed.edge_state_probability(EdgeState::Forward).is_zero());
    }

    #[test]
    fn model_strings() {
        for s in ["o", "e:p=1/2", "d:p=1/3", "mixed:pp=1/3,p1=1/2"] {
            let m: ModelSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        for bad in ["x", "e", "e:p=3/2", "d:q=1/2", "mixed:pp=1/2", "o:p=1/2", "e:p=0.5"] {
            assert!(bad.parse::<ModelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn table_matches_direct_enumeration() {
        let g = Graph::parse_edge_list("a b\nb c\nc a\nc d").unwrap();
        for model in ["o", "e:p=1/3", "d:p=1/4", "mixed:pp=1/3,p1=1/2"] {
            let model: ModelSpec = model.parse().unwrap();
            let table = ClusterTable::build_full(&g, &model, &Caps::default()).unwrap();
            let total = table.probability(&ReachPredicate::True).unwrap();
            assert_eq!(total, Rational::one());
            let pred = ReachPredicate::Family(make_reachability_family(3, VertexSet::singleton(0)));
            let direct = event_probability(&g, &model, &pred, &Caps::default()).unwrap();
            assert_eq!(table.probability(&pred).unwrap(), direct);
            let proj = table.project(VertexSet::singleton(3), VertexSet::EMPTY).unwrap();
            assert!(proj.len() <= table.len());
            assert_eq!(proj.probability(&pred).unwrap(), direct);
            let other = ReachPredicate::Family(make_reachability_family(0, VertexSet::singleton(3)));
            assert!(proj.probability(&other).is_err());
        }
    }

    #[test]
    fn parallel_fold_matches_sequential_iteration() {
        // 4^7 states exceeds one chunk, so the fold runs in parallel.
        let g = Graph::parse_edge_list("a b\nb c\nc d\nd a\na c\nb d\nd e").unwrap();
        let model: ModelSpec = "d:p=1/3".parse().unwrap();
        let pred = ReachPredicate::Family(make_reachability_family(0, VertexSet::singleton(4)));
        let folded = event_probability(&g, &model, &pred, &Caps::default()).unwrap();
        let sequential: Rational = enumerate_states(&g, &model, &Caps::default())
            .unwrap()
            .filter(|s| pred.eval(&(&g, s)))
            .map(|s| s.weight)
            .sum();
        assert_eq!(folded, sequential);
    }
}
