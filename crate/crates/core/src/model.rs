//! Generative ground truth: hidden On/Off Markov events and the devices they
//! activate.
//!
//! `N` independent two-state chains drive `K` devices. An event that is On
//! activates device `k` with probability `q[n][k]`; activations combine as a
//! noisy-OR across events. All closed-form probabilities used by the
//! schedulers and the inference stack live here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Hard cap on the number of events: the inference stack enumerates all
/// `2^N` joint states exactly.
pub const MAX_EVENTS: usize = 16;

/// Model hyperparameters: dimensions, per-event transition probabilities,
/// and the `N x K` activation-probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n_events: usize,
    n_devices: usize,
    n_slots: usize,
    eps0: Vec<f64>,
    eps1: Vec<f64>,
    /// Row-major `N x K`: `q[n * K + k]`.
    q: Vec<f64>,
}

impl ModelParams {
    /// Validates dimensions and probability ranges.
    pub fn new(
        n_slots: usize,
        eps0: Vec<f64>,
        eps1: Vec<f64>,
        q: Vec<f64>,
        n_devices: usize,
    ) -> Result<Self> {
        let n_events = eps0.len();
        if n_events == 0 || n_devices == 0 || n_slots == 0 {
            return Err(Error::ContractViolation(
                "n_events, n_devices and n_slots must be positive".into(),
            ));
        }
        if n_slots > n_devices {
            return Err(Error::ContractViolation(format!(
                "n_slots ({n_slots}) must not exceed n_devices ({n_devices})"
            )));
        }
        if eps1.len() != n_events {
            return Err(Error::DimensionMismatch(format!(
                "eps1 has length {}, expected {n_events}",
                eps1.len()
            )));
        }
        if q.len() != n_events * n_devices {
            return Err(Error::DimensionMismatch(format!(
                "q has length {}, expected {} ({} x {})",
                q.len(),
                n_events * n_devices,
                n_events,
                n_devices
            )));
        }
        for (name, v) in [("eps0", &eps0), ("eps1", &eps1), ("q", &q)] {
            if v.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::ContractViolation(format!(
                    "{name} entries must lie in [0, 1]"
                )));
            }
        }
        Ok(Self {
            n_events,
            n_devices,
            n_slots,
            eps0,
            eps1,
            q,
        })
    }

    /// Draws parameters per the standard experiment priors: transition
    /// probabilities i.i.d. uniform on `[0, 0.5]`, activation probabilities
    /// i.i.d. uniform on `[0, 1]`.
    pub fn sample(
        n_events: usize,
        n_devices: usize,
        n_slots: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let eps0 = (0..n_events).map(|_| rng.next_range(0.0, 0.5)).collect();
        let eps1 = (0..n_events).map(|_| rng.next_range(0.0, 0.5)).collect();
        let q = (0..n_events * n_devices)
            .map(|_| rng.next_range(0.0, 1.0))
            .collect();
        Self::new(n_slots, eps0, eps1, q, n_devices)
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    /// Number of uplink transmission slots per time step (`L`).
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// On -> Off transition probability of event `n`.
    pub fn eps0(&self, n: usize) -> f64 {
        self.eps0[n]
    }

    /// Off -> On transition probability of event `n`.
    pub fn eps1(&self, n: usize) -> f64 {
        self.eps1[n]
    }

    /// Probability that event `n`, while On, activates device `k`.
    pub fn q(&self, n: usize, k: usize) -> f64 {
        self.q[n * self.n_devices + k]
    }

    pub fn eps0_slice(&self) -> &[f64] {
        &self.eps0
    }

    pub fn eps1_slice(&self) -> &[f64] {
        &self.eps1
    }

    pub fn q_slice(&self) -> &[f64] {
        &self.q
    }

    fn check_state(&self, s: &EventStateVector) -> Result<()> {
        if s.len() != self.n_events {
            return Err(Error::DimensionMismatch(format!(
                "state vector has length {}, expected {}",
                s.len(),
                self.n_events
            )));
        }
        Ok(())
    }

    fn check_device(&self, k: usize) -> Result<()> {
        if k >= self.n_devices {
            return Err(Error::ContractViolation(format!(
                "device index {k} out of range (K = {})",
                self.n_devices
            )));
        }
        Ok(())
    }
}

/// Joint state of the `N` hidden events at one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventStateVector {
    bits: Vec<bool>,
}

impl EventStateVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// The all-Off origin state.
    pub fn all_off(n_events: usize) -> Self {
        Self {
            bits: vec![false; n_events],
        }
    }

    /// Decodes a joint index: bit `n` of `index` holds the state of event `n`.
    pub fn from_index(index: usize, n_events: usize) -> Self {
        Self {
            bits: (0..n_events).map(|n| (index >> n) & 1 == 1).collect(),
        }
    }

    /// Joint index with bit `n` encoding event `n`.
    pub fn to_index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (n, &b)| acc | (usize::from(b) << n))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_on(&self, n: usize) -> bool {
        self.bits[n]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Which devices are active at one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationVector {
    active: Vec<bool>,
}

impl ActivationVector {
    pub fn new(active: Vec<bool>) -> Self {
        Self { active }
    }

    pub fn all_inactive(n_devices: usize) -> Self {
        Self {
            active: vec![false; n_devices],
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn count_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.active
    }
}

/// Advances every event one step: from On, go Off w.p. `eps0`; from Off, go
/// On w.p. `eps1`. Events transition independently, in index order.
pub fn step_events(
    params: &ModelParams,
    s: &EventStateVector,
    rng: &mut RngStream,
) -> Result<EventStateVector> {
    params.check_state(s)?;
    let bits = (0..params.n_events)
        .map(|n| {
            if s.is_on(n) {
                !rng.next_bool(params.eps0(n))
            } else {
                rng.next_bool(params.eps1(n))
            }
        })
        .collect();
    Ok(EventStateVector::new(bits))
}

/// Probability that device `k` is active given the current joint state:
/// `1 - prod_n (1 - q[n][k])^{S(n)}`.
pub fn activation_prob_given_state(
    params: &ModelParams,
    s: &EventStateVector,
    k: usize,
) -> Result<f64> {
    params.check_state(s)?;
    params.check_device(k)?;
    let mut miss = 1.0;
    for n in 0..params.n_events {
        if s.is_on(n) {
            miss *= 1.0 - params.q(n, k);
        }
    }
    Ok(1.0 - miss)
}

/// Samples the activation vector: devices are conditionally independent
/// given the state, drawn in index order.
pub fn sample_activations(
    params: &ModelParams,
    s: &EventStateVector,
    rng: &mut RngStream,
) -> Result<ActivationVector> {
    params.check_state(s)?;
    let active = (0..params.n_devices)
        .map(|k| {
            let p = activation_prob_given_state(params, s, k).expect("validated dims");
            rng.next_bool(p)
        })
        .collect();
    Ok(ActivationVector::new(active))
}

/// Probability that device `k` is active one step ahead given today's state:
/// `1 - prod_n h(n)` with
/// `h(n) = 1 - eps1 + eps1 (1 - q)` when event `n` is Off and
/// `h(n) = eps0 + (1 - eps0)(1 - q)` when it is On.
pub fn next_step_activation_prob(
    params: &ModelParams,
    s: &EventStateVector,
    k: usize,
) -> Result<f64> {
    params.check_state(s)?;
    params.check_device(k)?;
    let mut miss = 1.0;
    for n in 0..params.n_events {
        let q = params.q(n, k);
        let h = if s.is_on(n) {
            params.eps0(n) + (1.0 - params.eps0(n)) * (1.0 - q)
        } else {
            1.0 - params.eps1(n) + params.eps1(n) * (1.0 - q)
        };
        miss *= h;
    }
    Ok(1.0 - miss)
}

/// Stationary probability of event `n` being in state `bit`:
/// `eps0 / (eps0 + eps1)` for Off, `eps1 / (eps0 + eps1)` for On.
pub fn steady_state_prob(params: &ModelParams, n: usize, bit: bool) -> Result<f64> {
    if n >= params.n_events {
        return Err(Error::ContractViolation(format!(
            "event index {n} out of range (N = {})",
            params.n_events
        )));
    }
    let (e0, e1) = (params.eps0(n), params.eps1(n));
    if e0 + e1 == 0.0 {
        return Err(Error::UndefinedSteadyState { event: n });
    }
    Ok(if bit { e1 / (e0 + e1) } else { e0 / (e0 + e1) })
}

/// Stationary activation probability of device `k`, marginalizing the events
/// over their steady state: `1 - prod_n (1 - pOn(n) q[n][k])`.
///
/// Equal to the explicit sum over joint states weighted by the product of
/// per-event stationary probabilities (events are independent).
pub fn steady_state_activation_prob(params: &ModelParams, k: usize) -> Result<f64> {
    params.check_device(k)?;
    let mut miss = 1.0;
    for n in 0..params.n_events {
        let p_on = steady_state_prob(params, n, true)?;
        miss *= 1.0 - p_on * params.q(n, k);
    }
    Ok(1.0 - miss)
}

/// Mean over events of the stationary On probability; the `p_ss` weight of
/// the age-compensated priority index.
pub fn mean_steady_on_prob(params: &ModelParams) -> Result<f64> {
    let mut sum = 0.0;
    for n in 0..params.n_events {
        sum += steady_state_prob(params, n, true)?;
    }
    Ok(sum / params.n_events as f64)
}

/// Max over events of the stationary On probability (alternative `p_ss`
/// aggregate).
pub fn max_steady_on_prob(params: &ModelParams) -> Result<f64> {
    let mut best: f64 = 0.0;
    for n in 0..params.n_events {
        best = best.max(steady_state_prob(params, n, true)?);
    }
    Ok(best)
}
