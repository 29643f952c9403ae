//! Seeded Monte Carlo estimates of event probabilities, for graphs past the
//! exhaustive caps.
//!
//! Samples are drawn in fixed chunks of [`CHUNK_SAMPLES`]; chunk `k` uses a
//! `ChaCha8Rng` seeded with [`chunk_seed`]`(seed, k)`, so the estimate depends
//! only on the seed and the sample count, never on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::events::ReachPredicate;
use crate::exact::Rational;
use crate::graph::Graph;
use crate::models::{Arcs, EdgeState, ModelSpec, StateView, WorldState};
use crate::{Error, Result};

pub const CHUNK_SAMPLES: u64 = 1 << 14;

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of chunk `k`: `splitmix64(seed ^ splitmix64(k))`.
pub fn chunk_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k))
}

fn decimal<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{x}"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    #[serde(serialize_with = "decimal")]
    pub estimate: f64,
    #[serde(serialize_with = "decimal")]
    pub standard_error: f64,
    pub samples: u64,
    pub hits: u64,
    pub seed: u64,
    pub model: String,
}

impl McEstimate {
    fn new(hits: u64, samples: u64, seed: u64, model: &ModelSpec) -> Self {
        let estimate = hits as f64 / samples as f64;
        let standard_error = (estimate * (1.0 - estimate) / samples as f64).sqrt();
        McEstimate { estimate, standard_error, samples, hits, seed, model: model.to_string() }
    }

    /// Whether `exact` lies within `k` standard errors of the estimate.
    pub fn within(&self, exact: &Rational, k: f64) -> bool {
        (self.estimate - exact.to_f64()).abs() <= k * self.standard_error
    }
}

/// Per-edge sampler with the model's choice probabilities as `f64`.
struct EdgeSampler {
    cumulative: Vec<(f64, EdgeState)>,
}

impl EdgeSampler {
    fn new(model: &ModelSpec) -> Self {
        let probs = model.class_probabilities();
        let mut acc = 0.0;
        let cumulative = model
            .choices()
            .iter()
            .map(|&(state, class)| {
                acc += probs[class].to_f64();
                (acc, state)
            })
            .collect();
        EdgeSampler { cumulative }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> EdgeState {
        let x: f64 = rng.gen();
        self.cumulative
            .iter()
            .find(|(c, _)| x < *c)
            .or(self.cumulative.last())
            .map(|&(_, s)| s)
            .expect("models have at least one choice")
    }

    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [EdgeState]) {
        for e in out {
            *e = self.draw(rng);
        }
    }
}

/// One state with independent per-edge draws; `weight` is set to 1.
pub fn sample_state<R: Rng + ?Sized>(g: &Graph, model: &ModelSpec, rng: &mut R) -> WorldState {
    let sampler = EdgeSampler::new(model);
    let mut edges = vec![EdgeState::Absent; g.m()];
    sampler.fill(rng, &mut edges);
    WorldState { edges, weight: Rational::one() }
}

/// Fraction of `samples` seeded draws satisfying `pred`.
pub fn estimate_event(g: &Graph, model: &ModelSpec, pred: &ReachPredicate, samples: u64, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::Precondition("samples must be at least 1".into()));
    }
    model.validate()?;
    pred.validate(g)?;
    let sampler = EdgeSampler::new(model);
    let chunks = samples.div_ceil(CHUNK_SAMPLES);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let n = CHUNK_SAMPLES.min(samples - k * CHUNK_SAMPLES);
            let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(seed, k));
            let mut states = vec![EdgeState::Absent; g.m()];
            let mut hits = 0;
            for _ in 0..n {
                sampler.fill(&mut rng, &mut states);
                let arcs = Arcs::from_states(g, &states);
                let view = StateView { states: &states, arcs: &arcs, signature: 0 };
                if pred.eval(&view) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    Ok(McEstimate::new(hits, samples, seed, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::ReachPredicate;

    fn triangle() -> Graph {
        Graph::parse_edge_list("s a\na b\nb s").unwrap()
    }

    fn model(s: &str) -> ModelSpec {
        s.parse().unwrap()
    }

    #[test]
    fn degenerate_models_are_deterministic() {
        let g = triangle();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert!(sample_state(&g, &model("e:p=1"), &mut rng).edges.iter().all(|&e| e == EdgeState::Present));
            assert!(sample_state(&g, &model("e:p=0"), &mut rng).edges.iter().all(|&e| e == EdgeState::Absent));
            assert!(sample_state(&g, &model("d:p=1"), &mut rng).edges.iter().all(|&e| e == EdgeState::BothArcs));
        }
    }

    #[test]
    fn orientation_draws_are_fair() {
        let g = Graph::parse_edge_list("u v").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let fwd = (0..n)
            .filter(|_| sample_state(&g, &ModelSpec::RandomOrientation, &mut rng).edges[0] == EdgeState::Forward)
            .count();
        assert!((fwd as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn triangle_estimate_and_determinism() {
        let g = triangle();
        let pred = ReachPredicate::reach(0, 1);
        let est = estimate_event(&g, &ModelSpec::RandomOrientation, &pred, 100_000, 42).unwrap();
        assert!(est.within(&Rational::new(5, 8), 3.0), "{est:?}");
        let again = estimate_event(&g, &ModelSpec::RandomOrientation, &pred, 100_000, 42).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn true_predicate_and_zero_samples() {
        let g = triangle();
        let est = estimate_event(&g, &model("d:p=1/3"), &ReachPredicate::True, 1000, 3).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.standard_error, 0.0);
        assert!(estimate_event(&g, &ModelSpec::RandomOrientation, &ReachPredicate::True, 0, 3).is_err());
    }

    #[test]
    fn chunk_seeds_differ() {
        let seeds: std::collections::HashSet<_> = (0..1000).map(|k| chunk_seed(42, k)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn partial_last_chunk_counts_exact_samples() {
        let g = triangle();
        let est = estimate_event(&g, &ModelSpec::RandomOrientation, &ReachPredicate::True, CHUNK_SAMPLES + 3, 0).unwrap();
        assert_eq!(est.hits, CHUNK_SAMPLES + 3);
    }
}
