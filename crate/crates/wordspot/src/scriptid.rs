//! Script identification: one line-level HMM per script, decided by the
//! best Viterbi log-likelihood.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::gmmhmm::{train_embedded, viterbi_align_full, CompositeHmm, GmmHmm, ModelSet, TrainConfig};
use crate::zoneseg::Script;

/// One whole-line model per script.
#[derive(Debug, Clone)]
pub struct ScriptModelSet {
    pub models: BTreeMap<Script, GmmHmm>,
    pub feature_dim: usize,
}

/// Outcome of identifying one line.
#[derive(Debug, Clone)]
pub struct ScriptDecision {
    pub script: Script,
    pub log_likelihoods: BTreeMap<Script, f64>,
    /// Best minus runner-up; absent when only one script is modelled.
    pub margin: Option<f64>,
}

/// Fit one left-to-right model per script, treating each line as a single
/// unit.
pub fn train_script_models(
    lines_per_script: &BTreeMap<Script, Vec<FeatureSequence>>,
    cfg: &TrainConfig,
) -> Result<ScriptModelSet> {
    if lines_per_script.is_empty() {
        return Err(Error::EmptyModelSet);
    }
    let dim = lines_per_script
        .values()
        .flatten()
        .next()
        .ok_or(Error::EmptyModelSet)?
        .dim();

    let mut models = BTreeMap::new();
    for (&script, lines) in lines_per_script {
        if lines.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no training lines for script '{}'",
                script.name()
            )));
        }
        let mut set = ModelSet::new(dim, "");
        set.insert(GmmHmm::flat(script.name(), cfg.n_states, dim));
        let data: Vec<(FeatureSequence, Vec<String>)> = lines
            .iter()
            .map(|seq| (seq.clone(), vec![script.name().to_string()]))
            .collect();
        let report = train_embedded(&data, &set, cfg)?;
        models.insert(script, report.set.models[script.name()].clone());
    }
    Ok(ScriptModelSet {
        models,
        feature_dim: dim,
    })
}

/// Pick the script whose model gives the best Viterbi log-likelihood.
/// Ties break by script name order.
pub fn identify_script(seq: &FeatureSequence, set: &ScriptModelSet) -> Result<ScriptDecision> {
    if set.models.is_empty() {
        return Err(Error::EmptyModelSet);
    }
    let mut lls = BTreeMap::new();
    for (&script, model) in &set.models {
        let composite = CompositeHmm::single(model.clone());
        let ll = match viterbi_align_full(seq, &composite) {
            Ok(a) => a.log_likelihood,
            Err(Error::SequenceTooShort) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        lls.insert(script, ll);
    }
    let mut ordered: Vec<(&Script, &f64)> = lls.iter().collect();
    ordered.sort_by(|a, b| {
        b.1.partial_cmp(a.1)
            .unwrap()
            .then_with(|| a.0.name().cmp(b.0.name()))
    });
    let best = *ordered[0].0;
    let margin = if ordered.len() > 1 {
        Some(ordered[0].1 - ordered[1].1)
    } else {
        None
    };
    Ok(ScriptDecision {
        script: best,
        log_likelihoods: lls,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq_around(rng: &mut ChaCha8Rng, center: f64, t: usize) -> FeatureSequence {
        let frames = Array2::from_shape_fn((t, 2), |_| center + rng.gen_range(-0.3..0.3));
        FeatureSequence::new(frames).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            n_states: 2,
            target_mixtures: 1,
            max_iterations: 10,
            ..Default::default()
        }
    }

    #[test]
    fn single_script_single_line_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut lines = BTreeMap::new();
        lines.insert(Script::English, vec![seq_around(&mut rng, 0.0, 12)]);
        let set = train_script_models(&lines, &cfg()).unwrap();
        let d = identify_script(&seq_around(&mut rng, 0.0, 12), &set).unwrap();
        assert_eq!(d.script, Script::English);
        assert!(d.log_likelihoods[&Script::English].is_finite());
        assert!(d.margin.is_none());
    }

    #[test]
    fn self_likelihood_beats_cross_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut lines = BTreeMap::new();
        lines.insert(
            Script::English,
            (0..8).map(|_| seq_around(&mut rng, 0.0, 15)).collect(),
        );
        lines.insert(
            Script::Bangla,
            (0..8).map(|_| seq_around(&mut rng, 4.0, 15)).collect(),
        );
        let set = train_script_models(&lines, &cfg()).unwrap();
        for _ in 0..10 {
            let d = identify_script(&seq_around(&mut rng, 0.0, 15), &set).unwrap();
            assert_eq!(d.script, Script::English);
            assert!(d.margin.unwrap() > 0.0);
            let d = identify_script(&seq_around(&mut rng, 4.0, 15), &set).unwrap();
            assert_eq!(d.script, Script::Bangla);
        }
    }

    #[test]
    fn decision_attains_the_stored_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut lines = BTreeMap::new();
        lines.insert(
            Script::English,
            (0..4).map(|_| seq_around(&mut rng, 0.0, 10)).collect(),
        );
        lines.insert(
            Script::Devanagari,
            (0..4).map(|_| seq_around(&mut rng, 2.0, 10)).collect(),
        );
        let set = train_script_models(&lines, &cfg()).unwrap();
        let d = identify_script(&seq_around(&mut rng, 1.0, 10), &set).unwrap();
        let best = d
            .log_likelihoods
            .values()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(d.log_likelihoods[&d.script], best);
    }

    #[test]
    fn duplicated_models_tie_toward_name_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut lines = BTreeMap::new();
        let shared: Vec<FeatureSequence> = (0..4).map(|_| seq_around(&mut rng, 0.0, 10)).collect();
        lines.insert(Script::English, shared.clone());
        lines.insert(Script::Bangla, shared);
        let set = train_script_models(&lines, &cfg()).unwrap();
        let d = identify_script(&seq_around(&mut rng, 0.0, 10), &set).unwrap();
        // identical models give identical likelihoods; "bangla" < "english"
        assert_eq!(d.script, Script::Bangla);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let lines: BTreeMap<Script, Vec<FeatureSequence>> = BTreeMap::new();
        assert!(train_script_models(&lines, &cfg()).is_err());
        let set = ScriptModelSet {
            models: BTreeMap::new(),
            feature_dim: 2,
        };
        let seq = FeatureSequence::new(Array2::zeros((4, 2))).unwrap();
        assert!(matches!(
            identify_script(&seq, &set),
            Err(Error::EmptyModelSet)
        ));
    }
}
