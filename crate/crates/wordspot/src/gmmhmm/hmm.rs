//! Left-to-right continuous-density HMMs: forward likelihood, Viterbi
//! decoding, forced alignment, and model concatenation.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::gmmhmm::gmm::{log_sum_exp, Gmm};

/// Left-to-right HMM with one GMM per state. The initial distribution is
/// concentrated on state 0. `stay[i] + advance[i] = 1`; `advance` of the last
/// state is the exit mass used when models are chained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmHmm {
    pub label: String,
    pub states: Vec<Gmm>,
    pub stay: Vec<f64>,
    pub advance: Vec<f64>,
}

impl GmmHmm {
    /// Untrained model: standard-normal states and even transitions.
    pub fn flat(label: &str, n_states: usize, dim: usize) -> Self {
        Self {
            label: label.to_string(),
            states: (0..n_states)
                .map(|_| Gmm::single(vec![0.0; dim], vec![1.0; dim]))
                .collect(),
            stay: vec![0.5; n_states],
            advance: vec![0.5; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Log of the exit mass, the advance probability of the last state.
    pub fn exit_log_mass(&self) -> f64 {
        let p = self.advance[self.n_states() - 1];
        if p <= 0.0 {
            f64::NEG_INFINITY
        } else {
            p.ln()
        }
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 || self.stay.len() != n || self.advance.len() != n {
            return Err(Error::InvalidConfig("inconsistent HMM shapes".into()));
        }
        for i in 0..n {
            if (self.stay[i] + self.advance[i] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "transition row {i} sums to {}",
                    self.stay[i] + self.advance[i]
                )));
            }
            self.states[i].validate()?;
        }
        Ok(())
    }

    fn check_dims(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: seq.dim(),
            });
        }
        Ok(())
    }

    /// Per-frame, per-state emission log densities.
    fn emission_matrix(&self, seq: &FeatureSequence) -> Array2<f64> {
        let t = seq.len();
        let n = self.n_states();
        let mut logb = Array2::zeros((t, n));
        for (j, gmm) in self.states.iter().enumerate() {
            let consts = gmm.log_consts();
            for ti in 0..t {
                logb[[ti, j]] =
                    log_sum_exp(&gmm.component_log_joint(seq.frames.row(ti), &consts));
            }
        }
        logb
    }

    /// Forward log-likelihood: log of the sum over all length-T state paths
    /// (paths may end in any state).
    pub fn log_likelihood(&self, seq: &FeatureSequence) -> Result<f64> {
        self.check_dims(seq)?;
        let t = seq.len();
        let n = self.n_states();
        let logb = self.emission_matrix(seq);
        let mut alpha = vec![f64::NEG_INFINITY; n];
        alpha[0] = logb[[0, 0]];
        for ti in 1..t {
            let mut next = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                let from_self = alpha[j] + ln(self.stay_within(j));
                let from_prev = if j > 0 {
                    alpha[j - 1] + ln(self.advance[j - 1])
                } else {
                    f64::NEG_INFINITY
                };
                next[j] = log_sum_exp(&[from_self, from_prev]) + logb[[ti, j]];
            }
            alpha = next;
        }
        Ok(log_sum_exp(&alpha))
    }

    /// Self-loop probability used for within-model recursions. The last
    /// state's exit mass has no in-model successor, so its self-loop is
    /// whatever `stay` holds.
    fn stay_within(&self, j: usize) -> f64 {
        self.stay[j]
    }

    /// Viterbi decoding: maximum-probability state path and its
    /// log-likelihood. Ties break toward the lower predecessor state index.
    pub fn viterbi(&self, seq: &FeatureSequence) -> Result<(Vec<usize>, f64)> {
        self.check_dims(seq)?;
        let t = seq.len();
        let n = self.n_states();
        if t < 1 {
            return Err(Error::SequenceTooShort);
        }
        let logb = self.emission_matrix(seq);
        let mut delta = Array2::from_elem((t, n), f64::NEG_INFINITY);
        let mut back = Array2::zeros((t, n));
        delta[[0, 0]] = logb[[0, 0]];
        for ti in 1..t {
            for j in 0..n {
                // consider predecessors in increasing index order; strict
                // improvement required so the lower index wins ties
                let mut best = f64::NEG_INFINITY;
                let mut arg = j;
                if j > 0 {
                    let s = delta[[ti - 1, j - 1]] + ln(self.advance[j - 1]);
                    if s > best {
                        best = s;
                        arg = j - 1;
                    }
                }
                let s = delta[[ti - 1, j]] + ln(self.stay_within(j));
                if s > best {
                    best = s;
                    arg = j;
                }
                delta[[ti, j]] = best + logb[[ti, j]];
                back[[ti, j]] = arg;
            }
        }
        let mut end = 0;
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            if delta[[t - 1, j]] > best {
                best = delta[[t - 1, j]];
                end = j;
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::SequenceTooShort);
        }
        let mut path = vec![0usize; t];
        path[t - 1] = end;
        for ti in (1..t).rev() {
            path[ti - 1] = back[[ti, path[ti]]];
        }
        Ok((path, best))
    }

    /// Sample a feature sequence and its state path. Runs the chain from
    /// state 0 until the last state emits at least `min_frames_last` frames.
    pub fn sample<R: Rng>(&self, rng: &mut R, min_frames_last: usize) -> (FeatureSequence, Vec<usize>) {
        let n = self.n_states();
        let d = self.dim();
        let mut frames: Vec<f64> = Vec::new();
        let mut states = Vec::new();
        let mut j = 0usize;
        let mut last_count = 0usize;
        loop {
            states.push(j);
            let gmm = &self.states[j];
            let k = sample_categorical(rng, &gmm.weights);
            for dd in 0..d {
                let std = gmm.variances[[k, dd]].sqrt();
                let z: f64 = sample_standard_normal(rng);
                frames.push(gmm.means[[k, dd]] + std * z);
            }
            if j == n - 1 {
                last_count += 1;
                if last_count >= min_frames_last && rng.gen::<f64>() < self.advance[j] {
                    break;
                }
            } else if rng.gen::<f64>() < self.advance[j] {
                j += 1;
            }
        }
        let t = states.len();
        let seq = FeatureSequence::new(Array2::from_shape_vec((t, d), frames).unwrap()).unwrap();
        (seq, states)
    }
}

fn ln(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        p.ln()
    }
}

fn sample_categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let mut u: f64 = rng.gen::<f64>();
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

fn sample_standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A left-to-right chain of unit models with per-state unit ownership,
/// produced by [`concat_models`].
#[derive(Debug, Clone)]
pub struct CompositeHmm {
    pub hmm: GmmHmm,
    /// Unit occurrence index for every composite state.
    pub unit_of_state: Vec<usize>,
    /// Label of each unit occurrence, in order.
    pub unit_labels: Vec<String>,
}

impl CompositeHmm {
    /// Wrap one model as a single-unit composite.
    pub fn single(model: GmmHmm) -> Self {
        let n = model.n_states();
        let label = model.label.clone();
        Self {
            hmm: model,
            unit_of_state: vec![0; n],
            unit_labels: vec![label],
        }
    }
}

/// Chain the labeled models left to right. The exit mass of model i feeds the
/// entry state of model i+1, so the composite transition structure stays
/// stay/advance only.
pub fn concat_models(
    labels: &[String],
    set: &crate::gmmhmm::ModelSet,
) -> Result<CompositeHmm> {
    if labels.is_empty() {
        return Err(Error::InvalidConfig("empty label list".into()));
    }
    let mut states = Vec::new();
    let mut stay = Vec::new();
    let mut advance = Vec::new();
    let mut unit_of_state = Vec::new();
    for (ui, label) in labels.iter().enumerate() {
        let model = set
            .models
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        for j in 0..model.n_states() {
            states.push(model.states[j].clone());
            stay.push(model.stay[j]);
            advance.push(model.advance[j]);
            unit_of_state.push(ui);
        }
    }
    Ok(CompositeHmm {
        hmm: GmmHmm {
            label: labels.join("•"),
            states,
            stay,
            advance,
        },
        unit_of_state,
        unit_labels: labels.to_vec(),
    })
}

/// One aligned unit occurrence: frames [start, end).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedUnit {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Result of forced alignment.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub state_path: Vec<usize>,
    pub units: Vec<AlignedUnit>,
    pub log_likelihood: f64,
}

/// Viterbi forced alignment of a sequence against a composite model.
/// Segments are read off the unit ownership of the decoded states.
pub fn viterbi_align(seq: &FeatureSequence, composite: &CompositeHmm) -> Result<Alignment> {
    let (path, loglik) = composite.hmm.viterbi(seq)?;
    let mut units = Vec::new();
    let mut start = 0usize;
    for t in 1..=path.len() {
        let boundary = t == path.len()
            || composite.unit_of_state[path[t]] != composite.unit_of_state[path[t - 1]];
        if boundary {
            let ui = composite.unit_of_state[path[start]];
            units.push(AlignedUnit {
                label: composite.unit_labels[ui].clone(),
                start,
                end: t,
            });
            start = t;
        }
    }
    Ok(Alignment {
        state_path: path,
        units,
        log_likelihood: loglik,
    })
}

/// Forced alignment that must traverse the whole composite chain: errors with
/// `SequenceTooShort` when the sequence has fewer frames than states.
pub fn viterbi_align_full(seq: &FeatureSequence, composite: &CompositeHmm) -> Result<Alignment> {
    if seq.len() < composite.hmm.n_states() {
        return Err(Error::SequenceTooShort);
    }
    let align = viterbi_align_to_end(seq, composite)?;
    Ok(align)
}

/// Viterbi constrained to end in the final composite state.
fn viterbi_align_to_end(seq: &FeatureSequence, composite: &CompositeHmm) -> Result<Alignment> {
    let hmm = &composite.hmm;
    let t = seq.len();
    let n = hmm.n_states();
    let logb = hmm.emission_matrix(seq);
    let mut delta = Array2::from_elem((t, n), f64::NEG_INFINITY);
    let mut back = Array2::zeros((t, n));
    delta[[0, 0]] = logb[[0, 0]];
    for ti in 1..t {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut arg = j;
            if j > 0 {
                let s = delta[[ti - 1, j - 1]] + ln(hmm.advance[j - 1]);
                if s > best {
                    best = s;
                    arg = j - 1;
                }
            }
            let s = delta[[ti - 1, j]] + ln(hmm.stay[j]);
            if s > best {
                best = s;
                arg = j;
            }
            delta[[ti, j]] = best + logb[[ti, j]];
            back[[ti, j]] = arg;
        }
    }
    let best = delta[[t - 1, n - 1]];
    if best == f64::NEG_INFINITY {
        return Err(Error::SequenceTooShort);
    }
    let mut path = vec![0usize; t];
    path[t - 1] = n - 1;
    for ti in (1..t).rev() {
        path[ti - 1] = back[[ti, path[ti]]];
    }
    let mut units = Vec::new();
    let mut start = 0usize;
    for ti in 1..=t {
        let boundary =
            ti == t || composite.unit_of_state[path[ti]] != composite.unit_of_state[path[ti - 1]];
        if boundary {
            let ui = composite.unit_of_state[path[start]];
            units.push(AlignedUnit {
                label: composite.unit_labels[ui].clone(),
                start,
                end: ti,
            });
            start = ti;
        }
    }
    Ok(Alignment {
        state_path: path,
        units,
        log_likelihood: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmmhmm::ModelSet;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq_1d(values: &[f64]) -> FeatureSequence {
        FeatureSequence::new(Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap())
            .unwrap()
    }

    fn gaussian_state(mean: f64) -> Gmm {
        Gmm::single(vec![mean], vec![1.0])
    }

    fn random_hmm(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GmmHmm {
        use rand::Rng;
        let states = (0..n)
            .map(|_| {
                Gmm::single(
                    (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    (0..d).map(|_| rng.gen_range(0.3..2.0)).collect(),
                )
            })
            .collect();
        let stay: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
        let advance = stay.iter().map(|s| 1.0 - s).collect();
        GmmHmm {
            label: "x".into(),
            states,
            stay,
            advance,
        }
    }

    /// Brute-force sum over all n^t state paths.
    fn brute_force_loglik(hmm: &GmmHmm, seq: &FeatureSequence) -> f64 {
        let n = hmm.n_states();
        let t = seq.len();
        let mut total = 0.0f64;
        let mut path = vec![0usize; t];
        loop {
            // path probability
            let mut p = if path[0] == 0 { 1.0 } else { 0.0 };
            if p > 0.0 {
                p *= hmm.states[path[0]]
                    .log_pdf(seq.frames.row(0))
                    .unwrap()
                    .exp();
                for ti in 1..t {
                    let (i, j) = (path[ti - 1], path[ti]);
                    let a = if j == i {
                        hmm.stay[i]
                    } else if j == i + 1 {
                        hmm.advance[i]
                    } else {
                        0.0
                    };
                    p *= a;
                    if p == 0.0 {
                        break;
                    }
                    p *= hmm.states[j].log_pdf(seq.frames.row(ti)).unwrap().exp();
                }
                total += p;
            }
            // next path in lexicographic order
            let mut k = t;
            loop {
                if k == 0 {
                    return total.ln();
                }
                k -= 1;
                path[k] += 1;
                if path[k] < n {
                    break;
                }
                path[k] = 0;
            }
        }
    }

    fn brute_force_viterbi(hmm: &GmmHmm, seq: &FeatureSequence) -> (Vec<usize>, f64) {
        let n = hmm.n_states();
        let t = seq.len();
        let mut best = (vec![0usize; t], f64::NEG_INFINITY);
        let mut path = vec![0usize; t];
        loop {
            let mut lp = if path[0] == 0 { 0.0 } else { f64::NEG_INFINITY };
            if lp == 0.0 {
                lp += hmm.states[path[0]].log_pdf(seq.frames.row(0)).unwrap();
                for ti in 1..t {
                    let (i, j) = (path[ti - 1], path[ti]);
                    let a = if j == i {
                        hmm.stay[i]
                    } else if j == i + 1 {
                        hmm.advance[i]
                    } else {
                        0.0
                    };
                    lp += ln(a);
                    if lp == f64::NEG_INFINITY {
                        break;
                    }
                    lp += hmm.states[j].log_pdf(seq.frames.row(ti)).unwrap();
                }
                if lp > best.1 {
                    best = (path.clone(), lp);
                }
            }
            let mut k = t;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                path[k] += 1;
                if path[k] < n {
                    break;
                }
                path[k] = 0;
            }
        }
    }

    #[test]
    fn one_state_loglik_is_sum_of_logpdf() {
        let hmm = GmmHmm {
            label: "a".into(),
            states: vec![gaussian_state(0.5)],
            stay: vec![1.0],
            advance: vec![0.0],
        };
        let seq = seq_1d(&[0.1, 0.9, 0.5]);
        let expected: f64 = (0..3)
            .map(|t| hmm.states[0].log_pdf(seq.frames.row(t)).unwrap())
            .sum();
        assert!((hmm.log_likelihood(&seq).unwrap() - expected).abs() < 1e-12);
        let (path, lv) = hmm.viterbi(&seq).unwrap();
        assert_eq!(path, vec![0, 0, 0]);
        assert!((lv - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4usize {
            for t in 1..=6usize {
                let hmm = random_hmm(&mut rng, n, 2);
                let frames = Array2::from_shape_fn((t, 2), |_| {
                    use rand::Rng;
                    rng.gen_range(-2.0..2.0)
                });
                let seq = FeatureSequence::new(frames).unwrap();
                let fwd = hmm.log_likelihood(&seq).unwrap();
                let brute = brute_force_loglik(&hmm, &seq);
                assert!((fwd - brute).abs() < 1e-9, "n={n} t={t}: {fwd} vs {brute}");
            }
        }
    }

    #[test]
    fn viterbi_matches_exhaustive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 2..=4usize {
            for t in 2..=6usize {
                let hmm = random_hmm(&mut rng, n, 1);
                let frames = Array2::from_shape_fn((t, 1), |_| {
                    use rand::Rng;
                    rng.gen_range(-2.0..2.0)
                });
                let seq = FeatureSequence::new(frames).unwrap();
                let (path, lv) = hmm.viterbi(&seq).unwrap();
                let (bpath, blv) = brute_force_viterbi(&hmm, &seq);
                assert!((lv - blv).abs() < 1e-9);
                assert_eq!(path, bpath);
            }
        }
    }

    #[test]
    fn forward_dominates_viterbi() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let hmm = random_hmm(&mut rng, 3, 2);
            let frames = Array2::from_shape_fn((7, 2), |_| {
                use rand::Rng;
                rng.gen_range(-2.0..2.0)
            });
            let seq = FeatureSequence::new(frames).unwrap();
            let fwd = hmm.log_likelihood(&seq).unwrap();
            let (_, vit) = hmm.viterbi(&seq).unwrap();
            assert!(fwd >= vit - 1e-12);
        }
    }

    #[test]
    fn deterministic_chain_forced_path() {
        let n = 4;
        let hmm = GmmHmm {
            label: "chain".into(),
            states: (0..n).map(|i| gaussian_state(i as f64)).collect(),
            stay: vec![0.0; n],
            advance: vec![1.0; n],
        };
        let seq = seq_1d(&[0.0, 1.0, 2.0, 3.0]);
        let (path, _) = hmm.viterbi(&seq).unwrap();
        assert_eq!(path, vec![0, 1, 2, 3]);
    }

    fn two_unit_set() -> ModelSet {
        let mk = |label: &str, base: f64| GmmHmm {
            label: label.into(),
            states: (0..3).map(|i| gaussian_state(base + i as f64)).collect(),
            stay: vec![0.5; 3],
            advance: vec![0.5; 3],
        };
        let mut set = ModelSet::new(1, "test");
        set.insert(mk("a", 0.0));
        set.insert(mk("b", 10.0));
        set
    }

    #[test]
    fn concat_single_label_is_identity() {
        let set = two_unit_set();
        let c = concat_models(&["a".to_string()], &set).unwrap();
        assert_eq!(&c.hmm.states, &set.models["a"].states);
        assert_eq!(&c.hmm.stay, &set.models["a"].stay);
    }

    #[test]
    fn concat_two_models_structure() {
        let set = two_unit_set();
        let c = concat_models(&["a".to_string(), "b".to_string()], &set).unwrap();
        assert_eq!(c.hmm.n_states(), 6);
        assert_eq!(c.unit_of_state, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn concat_unknown_label_names_it() {
        let set = two_unit_set();
        let err = concat_models(&["zz".to_string()], &set).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }

    #[test]
    fn composite_prefers_matching_order_on_sampled_data() {
        let set = two_unit_set();
        let ab = concat_models(&["a".to_string(), "b".to_string()], &set).unwrap();
        let ba = concat_models(&["b".to_string(), "a".to_string()], &set).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut wins = 0;
        for _ in 0..10 {
            let (seq, _) = ab.hmm.sample(&mut rng, 2);
            let la = ab.hmm.log_likelihood(&seq).unwrap();
            let lb = ba.hmm.log_likelihood(&seq).unwrap();
            if la > lb {
                wins += 1;
            }
        }
        assert!(wins >= 9, "ab model won only {wins}/10 on its own data");
    }

    #[test]
    fn align_reads_unit_boundaries() {
        let set = two_unit_set();
        let c = concat_models(&["a".to_string(), "b".to_string()], &set).unwrap();
        // data hugging the state means forces a clean traversal
        let seq = seq_1d(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let a = viterbi_align_full(&seq, &c).unwrap();
        assert_eq!(
            a.units,
            vec![
                AlignedUnit {
                    label: "a".into(),
                    start: 0,
                    end: 3
                },
                AlignedUnit {
                    label: "b".into(),
                    start: 3,
                    end: 6
                }
            ]
        );
    }

    #[test]
    fn align_too_short_errors() {
        let set = two_unit_set();
        let c = concat_models(&["a".to_string(), "b".to_string()], &set).unwrap();
        let seq = seq_1d(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            viterbi_align_full(&seq, &c),
            Err(Error::SequenceTooShort)
        ));
    }
}
