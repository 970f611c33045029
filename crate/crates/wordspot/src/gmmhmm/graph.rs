//! Decoding graphs assembled from unit models.
//!
//! A graph flattens a network of unit HMMs into a single state space with
//! arbitrary arcs, which covers the looped filler topologies that a plain
//! left-to-right chain cannot express.

use std::collections::HashMap;

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::gmmhmm::gmm::Gmm;
use crate::gmmhmm::hmm::GmmHmm;

/// What a unit contributes to a decoded span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitRole {
    Filler,
    Space,
    Keyword,
}

#[derive(Debug, Clone)]
pub struct GraphUnit {
    pub label: String,
    pub role: UnitRole,
}

/// Flattened decoding network with shared emission distributions.
#[derive(Debug, Clone)]
pub struct HmmGraph {
    pub gmm_pool: Vec<Gmm>,
    /// Emission distribution index per graph state.
    pub state_gmm: Vec<usize>,
    /// Owning unit per graph state.
    pub state_unit: Vec<usize>,
    pub units: Vec<GraphUnit>,
    /// Entry states with log weights.
    pub start: Vec<(usize, f64)>,
    /// Incoming arcs per state: (source, log weight).
    pub arcs_in: Vec<Vec<(usize, f64)>>,
    /// Accepting states with exit log weights.
    pub finals: Vec<(usize, f64)>,
}

/// Best path through a graph.
#[derive(Debug, Clone)]
pub struct GraphPath {
    pub states: Vec<usize>,
    pub log_likelihood: f64,
}

impl GraphPath {
    /// Unit index occupied at each frame.
    pub fn unit_trace(&self, graph: &HmmGraph) -> Vec<usize> {
        self.states.iter().map(|&s| graph.state_unit[s]).collect()
    }
}

/// Incrementally builds a graph from unit models.
pub struct GraphBuilder {
    graph: HmmGraph,
    gmm_index: HashMap<(String, usize), usize>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self {
            graph: HmmGraph {
                gmm_pool: Vec::new(),
                state_gmm: Vec::new(),
                state_unit: Vec::new(),
                units: Vec::new(),
                start: Vec::new(),
                arcs_in: Vec::new(),
                finals: Vec::new(),
            },
            gmm_index: HashMap::new(),
        }
    }

    /// Add one instance of a unit model. Emissions are shared between
    /// instances of the same label; transitions are the model's own.
    /// Returns (first state, last state) of the instance.
    pub fn add_unit(&mut self, model: &GmmHmm, role: UnitRole) -> (usize, usize) {
        let unit_id = self.graph.units.len();
        self.graph.units.push(GraphUnit {
            label: model.label.clone(),
            role,
        });
        let base = self.graph.state_gmm.len();
        for (s, gmm) in model.states.iter().enumerate() {
            let key = (model.label.clone(), s);
            let gi = *self.gmm_index.entry(key).or_insert_with(|| {
                self.graph.gmm_pool.push(gmm.clone());
                self.graph.gmm_pool.len() - 1
            });
            self.graph.state_gmm.push(gi);
            self.graph.state_unit.push(unit_id);
            self.graph.arcs_in.push(Vec::new());
        }
        for s in 0..model.n_states() {
            let dst = base + s;
            if model.stay[s] > 0.0 {
                self.graph.arcs_in[dst].push((dst, model.stay[s].ln()));
            }
            if s > 0 && model.advance[s - 1] > 0.0 {
                self.graph.arcs_in[dst].push((base + s - 1, model.advance[s - 1].ln()));
            }
        }
        (base, base + model.n_states() - 1)
    }

    /// Connect `from`'s exit to `to` with the given log weight.
    pub fn link(&mut self, from: usize, to: usize, log_weight: f64) {
        self.graph.arcs_in[to].push((from, log_weight));
    }

    pub fn mark_start(&mut self, state: usize, log_weight: f64) {
        self.graph.start.push((state, log_weight));
    }

    pub fn mark_final(&mut self, state: usize, log_weight: f64) {
        self.graph.finals.push((state, log_weight));
    }

    pub fn finish(self) -> Result<HmmGraph> {
        if self.graph.start.is_empty() || self.graph.finals.is_empty() {
            return Err(Error::InvalidConfig(
                "graph needs at least one start and one final state".into(),
            ));
        }
        Ok(self.graph)
    }
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl HmmGraph {
    pub fn n_states(&self) -> usize {
        self.state_gmm.len()
    }

    /// Emission log densities for one frame, computed once per distinct
    /// distribution and fanned out to states.
    fn frame_emissions(
        &self,
        x: ArrayView1<f64>,
        consts: &[Vec<f64>],
        buf: &mut [f64],
        pool_buf: &mut [f64],
    ) {
        for (gi, g) in self.gmm_pool.iter().enumerate() {
            pool_buf[gi] = g.log_pdf_with_consts(x, &consts[gi]);
        }
        for (s, &gi) in self.state_gmm.iter().enumerate() {
            buf[s] = pool_buf[gi];
        }
    }

    /// Viterbi decode. Ties break toward the earlier-listed arc, which makes
    /// decoding deterministic for a fixed construction order.
    pub fn viterbi(&self, seq: &FeatureSequence) -> Result<GraphPath> {
        let n = self.n_states();
        let t = seq.len();
        if t == 0 {
            return Err(Error::SequenceTooShort);
        }
        let consts: Vec<Vec<f64>> = self.gmm_pool.iter().map(|g| g.log_consts()).collect();
        let mut emis = vec![0.0f64; n];
        let mut pool_buf = vec![0.0f64; self.gmm_pool.len()];

        let neg = f64::NEG_INFINITY;
        let mut delta = vec![neg; n];
        let mut psi = vec![vec![usize::MAX; n]; t];

        self.frame_emissions(seq.frames.row(0), &consts, &mut emis, &mut pool_buf);
        for &(s, w) in &self.start {
            let cand = w + emis[s];
            if cand > delta[s] {
                delta[s] = cand;
            }
        }

        let mut next = vec![neg; n];
        for ti in 1..t {
            self.frame_emissions(seq.frames.row(ti), &consts, &mut emis, &mut pool_buf);
            for s in 0..n {
                let mut best = neg;
                let mut arg = usize::MAX;
                for &(src, w) in &self.arcs_in[s] {
                    let cand = delta[src] + w;
                    if cand > best {
                        best = cand;
                        arg = src;
                    }
                }
                next[s] = best + emis[s];
                psi[ti][s] = arg;
            }
            std::mem::swap(&mut delta, &mut next);
        }

        let mut best = neg;
        let mut last = usize::MAX;
        for &(s, w) in &self.finals {
            let cand = delta[s] + w;
            if cand > best {
                best = cand;
                last = s;
            }
        }
        if !best.is_finite() || last == usize::MAX {
            return Err(Error::SequenceTooShort);
        }

        let mut states = vec![0usize; t];
        states[t - 1] = last;
        for ti in (1..t).rev() {
            states[ti - 1] = psi[ti][states[ti]];
        }
        Ok(GraphPath {
            states,
            log_likelihood: best,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmmhmm::hmm::concat_models;
    use crate::gmmhmm::ModelSet;
    use ndarray::Array2;

    fn unit(label: &str, mean: f64) -> GmmHmm {
        GmmHmm {
            label: label.to_string(),
            states: vec![Gmm::single(vec![mean], vec![0.25])],
            stay: vec![0.5],
            advance: vec![0.5],
        }
    }

    fn seq(values: &[f64]) -> FeatureSequence {
        FeatureSequence::new(Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap())
            .unwrap()
    }

    #[test]
    fn chain_graph_matches_composite_viterbi() {
        let mut set = ModelSet::new(1, "ab");
        set.insert(unit("a", 0.0));
        set.insert(unit("b", 3.0));
        let composite = concat_models(&["a".into(), "b".into()], &set).unwrap();

        let mut b = GraphBuilder::new();
        let (a0, a1) = b.add_unit(&set.models["a"], UnitRole::Keyword);
        let (b0, b1) = b.add_unit(&set.models["b"], UnitRole::Keyword);
        b.link(a1, b0, set.models["a"].advance[0].ln());
        b.mark_start(a0, 0.0);
        b.mark_final(b1, set.models["b"].advance[0].ln());
        let graph = b.finish().unwrap();

        let x = seq(&[0.1, -0.2, 2.9, 3.1]);
        let path = graph.viterbi(&x).unwrap();
        let align = crate::gmmhmm::hmm::viterbi_align_full(&x, &composite).unwrap();
        // same state sequence; the graph additionally pays the exit weight
        assert_eq!(path.states, align.state_path);
        assert_eq!(path.unit_trace(&graph), vec![0, 0, 1, 1]);
    }

    #[test]
    fn looped_filler_absorbs_everything() {
        let f = unit("f", 0.0);
        let mut b = GraphBuilder::new();
        let (s0, s1) = b.add_unit(&f, UnitRole::Filler);
        b.link(s1, s0, f.advance[0].ln());
        b.mark_start(s0, 0.0);
        b.mark_final(s1, 0.0);
        let graph = b.finish().unwrap();
        let path = graph.viterbi(&seq(&[0.0, 0.1, -0.1, 0.05, 0.0])).unwrap();
        assert!(path.states.iter().all(|&s| s == s0));
        assert!(path.log_likelihood.is_finite());
    }

    #[test]
    fn shared_emissions_are_pooled() {
        let a = unit("a", 1.0);
        let mut b = GraphBuilder::new();
        b.add_unit(&a, UnitRole::Filler);
        b.add_unit(&a, UnitRole::Filler);
        let g = {
            b.mark_start(0, 0.0);
            b.mark_final(1, 0.0);
            b.finish().unwrap()
        };
        assert_eq!(g.n_states(), 2);
        assert_eq!(g.gmm_pool.len(), 1);
        assert_eq!(g.state_gmm, vec![0, 0]);
    }

    #[test]
    fn unreachable_final_is_an_error() {
        let a = unit("a", 0.0);
        let b2 = unit("b", 5.0);
        let mut b = GraphBuilder::new();
        let (a0, _) = b.add_unit(&a, UnitRole::Filler);
        let (_, b1) = b.add_unit(&b2, UnitRole::Filler);
        // no link between the two units
        b.mark_start(a0, 0.0);
        b.mark_final(b1, 0.0);
        let graph = b.finish().unwrap();
        assert!(graph.viterbi(&seq(&[0.0, 0.0])).is_err());
    }
}
