//! Embedded Baum-Welch training of unit models from transcribed sequences.
//!
//! Flat start (every state shares the global single Gaussian), EM over
//! concatenated line models, then HTK-style mixture doubling until the target
//! component count is reached.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::gmmhmm::gmm::{log_sum_exp, Gmm};
use crate::gmmhmm::hmm::GmmHmm;
use crate::gmmhmm::ModelSet;

/// Training hyper-parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// States per unit model.
    pub n_states: usize,
    /// Target mixture components per state, a power of two.
    pub target_mixtures: usize,
    /// Max EM iterations per mixture stage.
    pub max_iterations: usize,
    /// Relative log-likelihood convergence tolerance.
    pub tolerance: f64,
    /// Variance floor as a fraction of the global variance.
    pub variance_floor_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_states: 6,
            target_mixtures: 32,
            max_iterations: 20,
            tolerance: 1e-4,
            variance_floor_factor: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0
            || self.target_mixtures == 0
            || self.max_iterations == 0
            || self.tolerance <= 0.0
            || self.variance_floor_factor <= 0.0
        {
            return Err(Error::InvalidConfig("train config values must be positive".into()));
        }
        if !self.target_mixtures.is_power_of_two() {
            return Err(Error::InvalidConfig("target_mixtures must be a power of two".into()));
        }
        Ok(())
    }
}

/// Training outcome: the fitted set plus diagnostics.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub set: ModelSet,
    /// Total log-likelihood after each EM iteration, across all stages.
    pub loglik_history: Vec<f64>,
    pub warnings: Vec<String>,
}

struct UnitStats {
    occ: Vec<f64>,               // per state, per component
    mean_acc: Vec<Array2<f64>>,  // per state: (M, D)
    sq_acc: Vec<Array2<f64>>,    // per state: (M, D)
    stay_count: Vec<f64>,
    advance_count: Vec<f64>,
}

impl UnitStats {
    fn new(n_states: usize, n_comp: usize, dim: usize) -> Self {
        Self {
            occ: vec![0.0; n_states * n_comp],
            mean_acc: (0..n_states).map(|_| Array2::zeros((n_comp, dim))).collect(),
            sq_acc: (0..n_states).map(|_| Array2::zeros((n_comp, dim))).collect(),
            stay_count: vec![0.0; n_states],
            advance_count: vec![0.0; n_states],
        }
    }
}

/// Train the models of `set` from transcribed lines. Every transcription is a
/// sequence of unit labels; occurrences of the same label share parameters.
pub fn train_embedded(
    lines: &[(FeatureSequence, Vec<String>)],
    set: &ModelSet,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if lines.is_empty() {
        return Err(Error::InvalidConfig("no training lines".into()));
    }
    let dim = lines[0].0.dim();
    for (seq, labels) in lines {
        if seq.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: seq.dim(),
            });
        }
        for l in labels {
            if !set.models.contains_key(l) {
                return Err(Error::UnknownLabel(l.clone()));
            }
        }
    }

    // global statistics for flat start and variance flooring
    let n_frames: usize = lines.iter().map(|(s, _)| s.len()).sum();
    let mut gmean = vec![0.0f64; dim];
    for (seq, _) in lines {
        for t in 0..seq.len() {
            for d in 0..dim {
                gmean[d] += seq.frames[[t, d]];
            }
        }
    }
    gmean.iter_mut().for_each(|v| *v /= n_frames as f64);
    let mut gvar = vec![0.0f64; dim];
    for (seq, _) in lines {
        for t in 0..seq.len() {
            for d in 0..dim {
                let z = seq.frames[[t, d]] - gmean[d];
                gvar[d] += z * z;
            }
        }
    }
    gvar.iter_mut().for_each(|v| *v /= n_frames as f64);
    let floor: Vec<f64> = gvar
        .iter()
        .map(|&v| (cfg.variance_floor_factor * v).max(1e-10))
        .collect();
    let gvar_floored: Vec<f64> = gvar.iter().zip(&floor).map(|(&v, &f)| v.max(f)).collect();

    // flat start
    let mut models: BTreeMap<String, GmmHmm> = BTreeMap::new();
    for label in set.models.keys() {
        models.insert(
            label.clone(),
            GmmHmm {
                label: label.clone(),
                states: (0..cfg.n_states)
                    .map(|_| Gmm::single(gmean.clone(), gvar_floored.clone()))
                    .collect(),
                stay: vec![0.5; cfg.n_states],
                advance: vec![0.5; cfg.n_states],
            },
        );
    }

    let mut warnings = Vec::new();
    let mut seen: BTreeMap<&str, bool> = set.models.keys().map(|k| (k.as_str(), false)).collect();
    for (_, labels) in lines {
        for l in labels {
            if let Some(flag) = seen.get_mut(l.as_str()) {
                *flag = true;
            }
        }
    }
    for (label, &was_seen) in &seen {
        if !was_seen {
            warnings.push(format!("label '{label}' never observed; left at flat start"));
        }
    }

    let mut history = Vec::new();
    let mut mixtures = 1usize;
    loop {
        let mut prev = f64::NEG_INFINITY;
        for _iter in 0..cfg.max_iterations {
            let (total, skipped) = em_iteration(lines, &mut models, mixtures, dim, &floor)?;
            for w in skipped {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            history.push(total);
            if prev.is_finite() {
                let rel = (total - prev).abs() / prev.abs().max(1e-12);
                if rel < cfg.tolerance {
                    break;
                }
            }
            prev = total;
        }
        if mixtures >= cfg.target_mixtures {
            break;
        }
        for m in models.values_mut() {
            for g in &mut m.states {
                g.split_components();
            }
        }
        mixtures *= 2;
    }

    Ok(TrainReport {
        set: ModelSet {
            models,
            feature_dim: dim,
            charset: set.charset.clone(),
        },
        loglik_history: history,
        warnings,
    })
}

/// One EM pass over all lines. Returns (total line log-likelihood before the
/// update, warnings for skipped lines).
fn em_iteration(
    lines: &[(FeatureSequence, Vec<String>)],
    models: &mut BTreeMap<String, GmmHmm>,
    mixtures: usize,
    dim: usize,
    floor: &[f64],
) -> Result<(f64, Vec<String>)> {
    let mut stats: BTreeMap<String, UnitStats> = models
        .keys()
        .map(|k| {
            (
                k.clone(),
                UnitStats::new(models[k].n_states(), mixtures, dim),
            )
        })
        .collect();
    let mut total = 0.0f64;
    let mut skipped = Vec::new();

    for (li, (seq, labels)) in lines.iter().enumerate() {
        // composite layout: (label, state index within unit) per composite state
        let mut layout: Vec<(&str, usize)> = Vec::new();
        for l in labels {
            let n = models[l].n_states();
            for s in 0..n {
                layout.push((l.as_str(), s));
            }
        }
        let n = layout.len();
        let t = seq.len();
        if t < n {
            skipped.push(format!("line {li} shorter than its transcription; skipped"));
            continue;
        }

        // emission log densities and per-component joints
        let mut logb = Array2::zeros((t, n));
        let mut comp_joint: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
        for (ci, &(label, s)) in layout.iter().enumerate() {
            let g = &models[label].states[s];
            let consts = g.log_consts();
            let mut per_t = Vec::with_capacity(t);
            for ti in 0..t {
                let joints = g.component_log_joint(seq.frames.row(ti), &consts);
                logb[[ti, ci]] = log_sum_exp(&joints);
                per_t.push(joints);
            }
            comp_joint.push(per_t);
        }
        let ln_stay: Vec<f64> = layout
            .iter()
            .map(|&(l, s)| safe_ln(models[l].stay[s]))
            .collect();
        let ln_adv: Vec<f64> = layout
            .iter()
            .map(|&(l, s)| safe_ln(models[l].advance[s]))
            .collect();

        // forward
        let neg = f64::NEG_INFINITY;
        let mut alpha = Array2::from_elem((t, n), neg);
        alpha[[0, 0]] = logb[[0, 0]];
        for ti in 1..t {
            for j in 0..n {
                let a = alpha[[ti - 1, j]] + ln_stay[j];
                let b = if j > 0 {
                    alpha[[ti - 1, j - 1]] + ln_adv[j - 1]
                } else {
                    neg
                };
                alpha[[ti, j]] = log_sum_exp(&[a, b]) + logb[[ti, j]];
            }
        }
        // the admissible paths all terminate through the final state's exit,
        // so the exit factor scales every path identically and cancels in the
        // posteriors below
        let loglik = alpha[[t - 1, n - 1]];
        if !loglik.is_finite() {
            skipped.push(format!("line {li} has no admissible alignment; skipped"));
            continue;
        }
        total += loglik + ln_adv[n - 1];

        // backward, constrained to end in the final composite state
        let mut beta = Array2::from_elem((t, n), neg);
        beta[[t - 1, n - 1]] = 0.0;
        for ti in (0..t - 1).rev() {
            for j in 0..n {
                let a = ln_stay[j] + logb[[ti + 1, j]] + beta[[ti + 1, j]];
                let b = if j + 1 < n {
                    ln_adv[j] + logb[[ti + 1, j + 1]] + beta[[ti + 1, j + 1]]
                } else {
                    neg
                };
                beta[[ti, j]] = log_sum_exp(&[a, b]);
            }
        }

        // accumulate
        for ti in 0..t {
            for (j, &(label, s)) in layout.iter().enumerate() {
                let lg = alpha[[ti, j]] + beta[[ti, j]] - loglik;
                if lg < -40.0 {
                    continue;
                }
                let gamma = lg.exp();
                let st = stats.get_mut(label).unwrap();
                // mixture responsibilities within the state
                let joints = &comp_joint[j][ti];
                let denom = logb[[ti, j]];
                for (k, &cj) in joints.iter().enumerate() {
                    let r = gamma * (cj - denom).exp();
                    if r <= 0.0 {
                        continue;
                    }
                    st.occ[s * mixtures + k] += r;
                    for d in 0..dim {
                        let x = seq.frames[[ti, d]];
                        st.mean_acc[s][[k, d]] += r * x;
                        st.sq_acc[s][[k, d]] += r * x * x;
                    }
                }
                // transition expectations
                if ti + 1 < t {
                    let xi_stay =
                        alpha[[ti, j]] + ln_stay[j] + logb[[ti + 1, j]] + beta[[ti + 1, j]]
                            - loglik;
                    if xi_stay > -40.0 {
                        st.stay_count[s] += xi_stay.exp();
                    }
                    if j + 1 < n {
                        let xi_adv = alpha[[ti, j]]
                            + ln_adv[j]
                            + logb[[ti + 1, j + 1]]
                            + beta[[ti + 1, j + 1]]
                            - loglik;
                        if xi_adv > -40.0 {
                            let st = stats.get_mut(label).unwrap();
                            st.advance_count[s] += xi_adv.exp();
                        }
                    }
                } else {
                    // termination through the exit of the final state
                    if j == n - 1 {
                        stats.get_mut(label).unwrap().advance_count[s] += gamma;
                    }
                }
            }
        }
    }

    // M-step
    const MIN_OCC: f64 = 1e-6;
    for (label, st) in &stats {
        let model = models.get_mut(label).unwrap();
        for s in 0..model.n_states() {
            let state_occ: f64 = (0..mixtures).map(|k| st.occ[s * mixtures + k]).sum();
            if state_occ > MIN_OCC {
                let g = &mut model.states[s];
                for k in 0..mixtures {
                    let occ = st.occ[s * mixtures + k];
                    if occ > MIN_OCC {
                        for d in 0..dim {
                            let mean = st.mean_acc[s][[k, d]] / occ;
                            let var = (st.sq_acc[s][[k, d]] / occ - mean * mean).max(floor[d]);
                            g.means[[k, d]] = mean;
                            g.variances[[k, d]] = var;
                        }
                    }
                    g.weights[k] = (occ / state_occ).max(0.0);
                }
                let wsum: f64 = g.weights.iter().sum();
                if wsum > 0.0 {
                    g.weights.iter_mut().for_each(|w| *w /= wsum);
                }
            }
            let trans_total = st.stay_count[s] + st.advance_count[s];
            if trans_total > MIN_OCC {
                model.stay[s] = st.stay_count[s] / trans_total;
                model.advance[s] = st.advance_count[s] / trans_total;
            }
        }
    }

    Ok((total, skipped))
}

fn safe_ln(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        p.ln()
    }
}
