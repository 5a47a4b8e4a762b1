//! Exact Bayesian filtering over the joint event state.
//!
//! The filter tracks a weight per joint On/Off pattern of the `N` events
//! (all `2^N` of them), advances it through the factored transition kernel,
//! and conditions on whichever device activations were observed. On top of
//! the filter sit the MAP state decode, the one-step-ahead activation
//! scores that drive the predictive schedulers, and the maximum-likelihood
//! activation pattern used for validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    activation_prob_given_state, next_step_activation_prob, ActivationVector, EventStateVector,
    ModelParams, MAX_EVENTS,
};

/// Distribution (up to scale) over the `2^N` joint event states. Bit `n` of
/// the vector index encodes the state of event `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStateDistribution {
    n_events: usize,
    weights: Vec<f64>,
}

impl JointStateDistribution {
    fn check_width(n_events: usize) -> Result<()> {
        if n_events == 0 {
            return Err(Error::ContractViolation(
                "distribution needs at least one event".into(),
            ));
        }
        if n_events > MAX_EVENTS {
            return Err(Error::CapabilityExceeded(format!(
                "joint filtering enumerates 2^N states; N = {n_events} exceeds the cap of {MAX_EVENTS}"
            )));
        }
        Ok(())
    }

    /// Point mass on the all-Off state — the filter's prior at the origin
    /// of time.
    pub fn all_off_prior(n_events: usize) -> Result<Self> {
        Self::check_width(n_events)?;
        let mut weights = vec![0.0; 1 << n_events];
        weights[0] = 1.0;
        Ok(Self { n_events, weights })
    }

    /// Uniform distribution over all joint states.
    pub fn uniform(n_events: usize) -> Result<Self> {
        Self::check_width(n_events)?;
        let m = 1usize << n_events;
        Ok(Self {
            n_events,
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// Wraps an explicit weight vector (length `2^N`, nonnegative, not all
    /// zero).
    pub fn from_weights(n_events: usize, weights: Vec<f64>) -> Result<Self> {
        Self::check_width(n_events)?;
        if weights.len() != 1 << n_events {
            return Err(Error::DimensionMismatch(format!(
                "weight vector has length {}, expected {}",
                weights.len(),
                1 << n_events
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::ContractViolation(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::ContractViolation(
                "weights must not all be zero".into(),
            ));
        }
        Ok(Self { n_events, weights })
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_states(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, state_index: usize) -> f64 {
        self.weights[state_index]
    }

    /// Normalized copy (weights summing to 1).
    pub fn normalized(&self) -> Self {
        let sum: f64 = self.weights.iter().sum();
        Self {
            n_events: self.n_events,
            weights: self.weights.iter().map(|w| w / sum).collect(),
        }
    }

    /// Normalized marginal probability that event `n` is On.
    pub fn marginal_on(&self, n: usize) -> f64 {
        let bit = 1usize << n;
        let on: f64 = self
            .weights
            .iter()
            .enumerate()
            .filter(|(j, _)| j & bit != 0)
            .map(|(_, w)| w)
            .sum();
        let total: f64 = self.weights.iter().sum();
        on / total
    }
}

/// What the base station saw at one slot: the whole activation vector, or
/// only the activations of the devices it had scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observation {
    /// Every device's activation bit is visible.
    Full(ActivationVector),
    /// Only devices with `observed[k] = true` are visible; the other
    /// activation bits carry no information and are ignored.
    Scheduled {
        activations: ActivationVector,
        observed: Vec<bool>,
    },
}

impl Observation {
    pub fn n_devices(&self) -> usize {
        match self {
            Observation::Full(a) => a.len(),
            Observation::Scheduled { activations, .. } => activations.len(),
        }
    }

    /// Iterates `(device, active)` over the visible devices only.
    pub fn iter_observed(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        let (activations, mask) = match self {
            Observation::Full(a) => (a, None),
            Observation::Scheduled {
                activations,
                observed,
            } => (activations, Some(observed.as_slice())),
        };
        (0..activations.len()).filter_map(move |k| match mask {
            None => Some((k, activations.is_active(k))),
            Some(m) if m[k] => Some((k, activations.is_active(k))),
            Some(_) => None,
        })
    }

    fn check_against(&self, params: &ModelParams) -> Result<()> {
        if self.n_devices() != params.n_devices() {
            return Err(Error::DimensionMismatch(format!(
                "observation covers {} devices, model has {}",
                self.n_devices(),
                params.n_devices()
            )));
        }
        if let Observation::Scheduled {
            activations,
            observed,
        } = self
        {
            if observed.len() != activations.len() {
                return Err(Error::DimensionMismatch(format!(
                    "observation mask has length {}, activations {}",
                    observed.len(),
                    activations.len()
                )));
            }
        }
        Ok(())
    }
}

/// One-step activation forecast: the MAP joint state of the filter and the
/// per-device probability scores derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub per_device: Vec<f64>,
    pub map_state: EventStateVector,
}

/// Likelihood of the observed activation bits given a joint state: the
/// product over visible devices of `p_k` (if active) or `1 - p_k`, with
/// `p_k` the noisy-OR activation probability. Invisible devices contribute
/// a factor 1.
pub fn emission_likelihood(
    params: &ModelParams,
    s: &EventStateVector,
    obs: &Observation,
) -> Result<f64> {
    obs.check_against(params)?;
    let mut lik = 1.0;
    for (k, active) in obs.iter_observed() {
        let p = activation_prob_given_state(params, s, k)?;
        lik *= if active { p } else { 1.0 - p };
    }
    Ok(lik)
}

/// Same quantity in log space; `-inf` for an impossible observation.
fn emission_log_likelihood(params: &ModelParams, s: &EventStateVector, obs: &Observation) -> f64 {
    let mut ll = 0.0;
    for (k, active) in obs.iter_observed() {
        let p = activation_prob_given_state(params, s, k).expect("validated dims");
        ll += if active { p.ln() } else { (1.0 - p).ln() };
    }
    ll
}

/// Advances a weight vector one step through the transition kernel, which
/// factorizes over events: each event applies its own 2x2 chain to the
/// matching pair of joint indices.
pub(crate) fn propagate(params: &ModelParams, weights: &mut [f64]) {
    for n in 0..params.n_events() {
        let (e0, e1) = (params.eps0(n), params.eps1(n));
        let bit = 1usize << n;
        for j in 0..weights.len() {
            if j & bit == 0 {
                let off = weights[j];
                let on = weights[j | bit];
                weights[j] = off * (1.0 - e1) + on * e0;
                weights[j | bit] = off * e1 + on * (1.0 - e0);
            }
        }
    }
}

/// One filtering step: propagate the prior through the transition kernel,
/// condition on the observation, renormalize. Also returns the log of the
/// per-step evidence `p(obs | past)` (meaningful when the prior is
/// normalized).
pub fn forward_update_with_evidence(
    params: &ModelParams,
    prior: &JointStateDistribution,
    obs: &Observation,
) -> Result<(JointStateDistribution, f64)> {
    if prior.n_events() != params.n_events() {
        return Err(Error::DimensionMismatch(format!(
            "prior covers {} events, model has {}",
            prior.n_events(),
            params.n_events()
        )));
    }
    obs.check_against(params)?;

    let mut w = prior.weights().to_vec();
    propagate(params, &mut w);

    // Condition in log space so long products over many devices cannot
    // underflow before the common scale is divided out.
    let mut log_em = vec![0.0; w.len()];
    let mut scale = f64::NEG_INFINITY;
    for (j, &pred) in w.iter().enumerate() {
        if pred > 0.0 {
            let s = EventStateVector::from_index(j, params.n_events());
            log_em[j] = emission_log_likelihood(params, &s, obs);
            scale = scale.max(log_em[j]);
        }
    }
    if !scale.is_finite() {
        return Err(Error::InconsistentObservation);
    }
    let mut sum = 0.0;
    for (j, v) in w.iter_mut().enumerate() {
        *v = if *v > 0.0 {
            *v * (log_em[j] - scale).exp()
        } else {
            0.0
        };
        sum += *v;
    }
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::InconsistentObservation);
    }
    for v in &mut w {
        *v /= sum;
    }
    let posterior = JointStateDistribution {
        n_events: prior.n_events(),
        weights: w,
    };
    Ok((posterior, scale + sum.ln()))
}

/// [`forward_update_with_evidence`] without the evidence term.
pub fn forward_update(
    params: &ModelParams,
    prior: &JointStateDistribution,
    obs: &Observation,
) -> Result<JointStateDistribution> {
    forward_update_with_evidence(params, prior, obs).map(|(d, _)| d)
}

/// Log-likelihood of a whole observation sequence under the model, starting
/// from the all-Off origin state.
pub fn trace_log_likelihood(params: &ModelParams, observations: &[Observation]) -> Result<f64> {
    let mut dist = JointStateDistribution::all_off_prior(params.n_events())?;
    let mut total = 0.0;
    for obs in observations {
        let (next, log_evidence) = forward_update_with_evidence(params, &dist, obs)?;
        dist = next;
        total += log_evidence;
    }
    Ok(total)
}

/// Joint state with the largest weight; ties go to the lowest index, so an
/// uninformative distribution decodes to all-Off.
pub fn most_likely_state(dist: &JointStateDistribution) -> EventStateVector {
    let mut best = 0;
    for (j, &w) in dist.weights().iter().enumerate() {
        if w > dist.weight(best) {
            best = j;
        }
    }
    EventStateVector::from_index(best, dist.n_events())
}

/// One-step activation forecast from the filter: decode the MAP state, then
/// score each device by its probability of being active next slot given
/// that state (the noisy-OR union of the per-event On probabilities, each
/// weighted by its activation probability).
pub fn predict_activation_scores(
    params: &ModelParams,
    dist: &JointStateDistribution,
) -> Result<PredictionResult> {
    if dist.n_events() != params.n_events() {
        return Err(Error::DimensionMismatch(format!(
            "distribution covers {} events, model has {}",
            dist.n_events(),
            params.n_events()
        )));
    }
    let map_state = most_likely_state(dist);
    let per_device = (0..params.n_devices())
        .map(|k| next_step_activation_prob(params, &map_state, k))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PredictionResult {
        per_device,
        map_state,
    })
}

/// Upper bound on the device count for the exact activation-pattern search;
/// beyond it the per-device factorized argmax is used instead.
pub const MAX_EXACT_PATTERN_DEVICES: usize = 20;

/// Most likely next-slot activation pattern given the filter weights:
/// argmax over patterns `b` of `sum_s w(s) * prod_k P(A_k = b_k | s)`,
/// with per-device probabilities conditioned on the current state `s` one
/// step ahead. Exact enumeration for small device counts; for larger `K`
/// each device is decided by thresholding its marginal expected activation
/// probability at 1/2 (an approximation: the mixture over states does not
/// factorize in general).
pub fn most_likely_pattern(
    params: &ModelParams,
    dist: &JointStateDistribution,
) -> Result<ActivationVector> {
    if dist.n_events() != params.n_events() {
        return Err(Error::DimensionMismatch(format!(
            "distribution covers {} events, model has {}",
            dist.n_events(),
            params.n_events()
        )));
    }
    let n_devices = params.n_devices();
    let total: f64 = dist.weights().iter().sum();

    // Per-state, per-device next-step activation probabilities.
    let mut probs = Vec::with_capacity(dist.n_states());
    for j in 0..dist.n_states() {
        let s = EventStateVector::from_index(j, params.n_events());
        let row = (0..n_devices)
            .map(|k| next_step_activation_prob(params, &s, k))
            .collect::<Result<Vec<f64>>>()?;
        probs.push(row);
    }

    if n_devices > MAX_EXACT_PATTERN_DEVICES {
        let bits = (0..n_devices)
            .map(|k| {
                let expected: f64 = dist
                    .weights()
                    .iter()
                    .zip(&probs)
                    .map(|(w, row)| w * row[k])
                    .sum::<f64>()
                    / total;
                expected > 0.5
            })
            .collect();
        return Ok(ActivationVector::new(bits));
    }

    let mut best_pattern = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for pattern in 0..(1usize << n_devices) {
        let mut value = 0.0;
        for (w, row) in dist.weights().iter().zip(&probs) {
            if *w == 0.0 {
                continue;
            }
            let mut prod = *w;
            for (k, &p) in row.iter().enumerate() {
                prod *= if pattern >> k & 1 == 1 { p } else { 1.0 - p };
            }
            value += prod;
        }
        if value > best_value {
            best_value = value;
            best_pattern = pattern;
        }
    }
    Ok(ActivationVector::new(
        (0..n_devices).map(|k| best_pattern >> k & 1 == 1).collect(),
    ))
}
