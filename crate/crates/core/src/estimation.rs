//! Hyperparameter estimation from activation traces.
//!
//! The learner alternates three steps until the parameters settle: decode a
//! hard joint-state sequence by per-slot MAP filtering under the current
//! estimates; refresh the transition probabilities from soft expected
//! transition counts (scaled forward–backward); and refresh each device's
//! activation-probability column by maximizing its decoded-state
//! likelihood with projected coordinate ascent. All estimates are kept
//! inside `[PROB_FLOOR, 1 - PROB_FLOOR]` so no observation ever becomes
//! impossible under the fitted model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{generate_trajectory, run_scheduler};
use crate::inference::{forward_update, most_likely_state, JointStateDistribution, Observation};
use crate::model::{EventStateVector, ModelParams, MAX_EVENTS};
use crate::rng::{subseed, RngStream};
use crate::sched::{PolicyKind, Scheduler};

/// Floor/ceiling applied to every estimated probability; prevents
/// degenerate zero-likelihood lock-in.
pub const PROB_FLOOR: f64 = 1e-4;

/// The iteration stops once no parameter moves more than this between
/// consecutive iterations.
pub const CONVERGENCE_TOL: f64 = 1e-3;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Estimated model hyperparameters plus bookkeeping about the run that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    pub eps0_hat: Vec<f64>,
    pub eps1_hat: Vec<f64>,
    /// Row-major `N x K`.
    pub q_hat: Vec<f64>,
    pub n_devices: usize,
    pub iterations_run: usize,
    pub converged: bool,
}

impl EstimatedParams {
    /// Wraps estimate vectors, clamping everything into
    /// `[PROB_FLOOR, 1 - PROB_FLOOR]`.
    pub fn new(
        eps0_hat: Vec<f64>,
        eps1_hat: Vec<f64>,
        q_hat: Vec<f64>,
        n_devices: usize,
    ) -> Result<Self> {
        let n_events = eps0_hat.len();
        if n_events == 0 || n_devices == 0 {
            return Err(Error::ContractViolation(
                "estimates need at least one event and one device".into(),
            ));
        }
        if eps1_hat.len() != n_events || q_hat.len() != n_events * n_devices {
            return Err(Error::DimensionMismatch(format!(
                "estimate dimensions disagree: eps0 {}, eps1 {}, q {} (expected {} x {})",
                n_events,
                eps1_hat.len(),
                q_hat.len(),
                n_events,
                n_devices
            )));
        }
        let mut out = Self {
            eps0_hat,
            eps1_hat,
            q_hat,
            n_devices,
            iterations_run: 0,
            converged: false,
        };
        out.clamp_all();
        Ok(out)
    }

    /// Fresh starting point: every probability i.i.d. uniform on
    /// `[0.2, 0.8]`.
    pub fn random_init(n_events: usize, n_devices: usize, rng: &mut RngStream) -> Self {
        let eps0 = (0..n_events).map(|_| rng.next_range(0.2, 0.8)).collect();
        let eps1 = (0..n_events).map(|_| rng.next_range(0.2, 0.8)).collect();
        let q = (0..n_events * n_devices)
            .map(|_| rng.next_range(0.2, 0.8))
            .collect();
        Self::new(eps0, eps1, q, n_devices).expect("dimensions constructed consistently")
    }

    pub fn n_events(&self) -> usize {
        self.eps0_hat.len()
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn q(&self, n: usize, k: usize) -> f64 {
        self.q_hat[n * self.n_devices + k]
    }

    fn clamp_all(&mut self) {
        for v in self
            .eps0_hat
            .iter_mut()
            .chain(self.eps1_hat.iter_mut())
            .chain(self.q_hat.iter_mut())
        {
            *v = clamp_prob(*v);
        }
    }

    /// Largest absolute difference across all parameter entries.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.eps0_hat
            .iter()
            .chain(&self.eps1_hat)
            .chain(&self.q_hat)
            .zip(
                other
                    .eps0_hat
                    .iter()
                    .chain(&other.eps1_hat)
                    .chain(&other.q_hat),
            )
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Converts the estimates into model parameters usable by the filter
    /// and the schedulers.
    pub fn to_model_params(&self, n_slots: usize) -> Result<ModelParams> {
        ModelParams::new(
            n_slots,
            self.eps0_hat.clone(),
            self.eps1_hat.clone(),
            self.q_hat.clone(),
            self.n_devices,
        )
    }
}

/// A sequence of per-slot observations with a consistent device count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTrace {
    n_devices: usize,
    observations: Vec<Observation>,
}

impl ObservationTrace {
    pub fn empty(n_devices: usize) -> Self {
        Self {
            n_devices,
            observations: Vec::new(),
        }
    }

    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let n_devices = observations
            .first()
            .map(Observation::n_devices)
            .ok_or_else(|| {
                Error::InsufficientData("an observation trace needs at least one slot".into())
            })?;
        let mut trace = Self::empty(n_devices);
        for obs in observations {
            trace.push(obs)?;
        }
        Ok(trace)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if obs.n_devices() != self.n_devices {
            return Err(Error::DimensionMismatch(format!(
                "observation covers {} devices, trace covers {}",
                obs.n_devices(),
                self.n_devices
            )));
        }
        self.observations.push(obs);
        Ok(())
    }

    /// Keeps only the most recent `keep` observations.
    pub fn truncate_front(&mut self, keep: usize) {
        if self.observations.len() > keep {
            self.observations.drain(..self.observations.len() - keep);
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }
}

/// Golden-section search for the maximum of a unimodal scalar function on
/// `[lo, hi]`. The endpoints themselves are candidates, so a maximum on
/// the boundary is returned exactly rather than approached from inside.
pub(crate) fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    [(x, f(x)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .max_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
        .unwrap()
}

/// Per-slot MAP decode: run the filter over the trace and take the argmax
/// joint state at every slot.
pub fn decode_map_states(
    params: &ModelParams,
    trace: &ObservationTrace,
) -> Result<Vec<EventStateVector>> {
    let mut dist = JointStateDistribution::all_off_prior(params.n_events())?;
    let mut states = Vec::with_capacity(trace.len());
    for obs in trace.observations() {
        dist = forward_update(params, &dist, obs)?;
        states.push(most_likely_state(&dist));
    }
    Ok(states)
}

/// Maximum-likelihood activation-probability column for device `k`, given
/// a decoded state sequence aligned with the trace.
///
/// Slots where the device is invisible, or where the decoded state has no
/// event On (making the likelihood independent of `q`), carry no
/// information. A completely flat likelihood resolves to the floor value.
/// Maximization is projected coordinate ascent (per-coordinate
/// golden-section) restarted from three random points drawn from `rng`.
pub fn estimate_q_ml(
    trace: &ObservationTrace,
    states: &[EventStateVector],
    k: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(Error::InsufficientData(
            "cannot fit activation probabilities to an empty trace".into(),
        ));
    }
    if states.len() != trace.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decoded states vs {} trace slots",
            states.len(),
            trace.len()
        )));
    }
    if k >= trace.n_devices() {
        return Err(Error::ContractViolation(format!(
            "device index {k} out of range (K = {})",
            trace.n_devices()
        )));
    }
    let n_events = states[0].len();

    // Collapse the trace to counts per distinct decoded state: how often
    // the device was seen active / inactive under each state. BTreeMap
    // keeps the evaluation order deterministic.
    let mut groups: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for (obs, state) in trace.observations().iter().zip(states) {
        if state.len() != n_events {
            return Err(Error::DimensionMismatch(
                "decoded states have inconsistent widths".into(),
            ));
        }
        let idx = state.to_index();
        if idx == 0 {
            continue;
        }
        for (device, active) in obs.iter_observed() {
            if device == k {
                let entry = groups.entry(idx).or_insert((0, 0));
                if active {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
    }
    if groups.is_empty() {
        return Ok(vec![PROB_FLOOR; n_events]);
    }

    let group_vec: Vec<(usize, u64, u64)> = groups.iter().map(|(&j, &(a, b))| (j, a, b)).collect();
    let participating: Vec<usize> = (0..n_events)
        .filter(|n| group_vec.iter().any(|&(j, _, _)| j >> n & 1 == 1))
        .collect();

    let log_lik = |q: &[f64]| -> f64 {
        let mut ll = 0.0;
        for &(j, a, b) in &group_vec {
            let mut miss = 1.0;
            for (n, &qn) in q.iter().enumerate() {
                if j >> n & 1 == 1 {
                    miss *= 1.0 - qn;
                }
            }
            let p = 1.0 - miss;
            if a > 0 {
                ll += a as f64 * p.ln();
            }
            if b > 0 {
                ll += b as f64 * miss.ln();
            }
        }
        ll
    };

    let lo = PROB_FLOOR;
    let hi = 1.0 - PROB_FLOOR;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..3 {
        let mut q: Vec<f64> = (0..n_events).map(|_| rng.next_range(lo, hi)).collect();
        let mut ll = log_lik(&q);
        for _ in 0..60 {
            let before = ll;
            for &n in &participating {
                let (x, fx) = golden_max(
                    |v| {
                        let mut trial = q.clone();
                        trial[n] = v;
                        log_lik(&trial)
                    },
                    lo,
                    hi,
                    1e-7,
                );
                if fx > ll {
                    q[n] = x;
                    ll = fx;
                }
            }
            if ll - before < 1e-9 {
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| ll > *b) {
            best = Some((q, ll));
        }
    }
    let (mut q, _) = best.expect("at least one restart ran");
    // Coordinates the data says nothing about resolve to the floor.
    for (n, qn) in q.iter_mut().enumerate() {
        if !participating.contains(&n) {
            *qn = lo;
        }
    }
    Ok(q)
}

/// Expected-count refresh of the transition probabilities: scaled
/// forward–backward under the current estimates, per-event expected
/// transition and occupancy masses, then the ratio estimators, clamped.
/// A state with (numerically) zero expected occupancy keeps its previous
/// estimate.
pub fn baum_welch_epsilon(
    trace: &ObservationTrace,
    params_hat: &EstimatedParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = trace.len();
    if t_len < 2 {
        return Err(Error::InsufficientData(
            "transition estimation needs at least two observation slots".into(),
        ));
    }
    if trace.n_devices() != params_hat.n_devices() {
        return Err(Error::DimensionMismatch(format!(
            "trace covers {} devices, estimates cover {}",
            trace.n_devices(),
            params_hat.n_devices()
        )));
    }
    let n = params_hat.n_events();
    if n > MAX_EVENTS {
        return Err(Error::CapabilityExceeded(format!(
            "forward-backward enumerates 2^N states; N = {n} exceeds the cap of {MAX_EVENTS}"
        )));
    }
    let model = params_hat.to_model_params(1)?;
    let m = 1usize << n;

    // Dense joint transition matrix (products of the per-event chains).
    let mut trans = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut p = 1.0;
            for e in 0..n {
                let p_on = if i >> e & 1 == 1 {
                    1.0 - model.eps0(e)
                } else {
                    model.eps1(e)
                };
                p *= if j >> e & 1 == 1 { p_on } else { 1.0 - p_on };
            }
            trans[i * m + j] = p;
        }
    }

    // Per-slot emissions, rescaled so each slot's largest value is 1 (the
    // common factor cancels in every normalized quantity below).
    let mut emissions = Vec::with_capacity(t_len);
    for obs in trace.observations() {
        let mut log_em = vec![0.0; m];
        let mut max = f64::NEG_INFINITY;
        for (j, le) in log_em.iter_mut().enumerate() {
            let s = EventStateVector::from_index(j, n);
            let mut ll = 0.0;
            for (k, active) in obs.iter_observed() {
                let mut miss = 1.0;
                for e in 0..n {
                    if s.is_on(e) {
                        miss *= 1.0 - model.q(e, k);
                    }
                }
                let p = 1.0 - miss;
                ll += if active { p.ln() } else { miss.ln() };
            }
            *le = ll;
            max = max.max(ll);
        }
        if !max.is_finite() {
            return Err(Error::InconsistentObservation);
        }
        emissions.push(
            log_em
                .iter()
                .map(|ll| (ll - max).exp())
                .collect::<Vec<f64>>(),
        );
    }

    // Forward: filtered distributions with the origin pinned to all-Off.
    let mut alphas = Vec::with_capacity(t_len + 1);
    let mut scales = Vec::with_capacity(t_len);
    let mut alpha = vec![0.0; m];
    alpha[0] = 1.0;
    alphas.push(alpha.clone());
    for em in &emissions {
        let mut next = vec![0.0; m];
        for i in 0..m {
            let a = alpha[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..m {
                next[j] += a * trans[i * m + j];
            }
        }
        for j in 0..m {
            next[j] *= em[j];
        }
        let c: f64 = next.iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InconsistentObservation);
        }
        for v in &mut next {
            *v /= c;
        }
        scales.push(c);
        alpha = next;
        alphas.push(alpha.clone());
    }

    // Backward, scaled by the forward normalizers.
    let mut betas = vec![vec![1.0; m]; t_len + 1];
    for t in (0..t_len).rev() {
        let mut b = vec![0.0; m];
        let em = &emissions[t];
        let next_b = &betas[t + 1];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += trans[i * m + j] * em[j] * next_b[j];
            }
            b[i] = acc / scales[t];
        }
        betas[t] = b;
    }

    // Expected per-event transition and source-occupancy masses.
    let mut num01 = vec![0.0; n];
    let mut num10 = vec![0.0; n];
    let mut den0 = vec![0.0; n];
    let mut den1 = vec![0.0; n];
    let mut xi = vec![0.0; m * m];
    for t in 0..t_len {
        let em = &emissions[t];
        let next_b = &betas[t + 1];
        let alpha_t = &alphas[t];
        let mut total = 0.0;
        for i in 0..m {
            let a = alpha_t[i];
            if a == 0.0 {
                for j in 0..m {
                    xi[i * m + j] = 0.0;
                }
                continue;
            }
            for j in 0..m {
                let v = a * trans[i * m + j] * em[j] * next_b[j];
                xi[i * m + j] = v;
                total += v;
            }
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InconsistentObservation);
        }
        for i in 0..m {
            for j in 0..m {
                let w = xi[i * m + j] / total;
                if w == 0.0 {
                    continue;
                }
                for e in 0..n {
                    match (i >> e & 1, j >> e & 1) {
                        (0, 0) => den0[e] += w,
                        (0, 1) => {
                            den0[e] += w;
                            num01[e] += w;
                        }
                        (1, 1) => den1[e] += w,
                        (1, 0) => {
                            den1[e] += w;
                            num10[e] += w;
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
    }

    const OCCUPANCY_EPS: f64 = 1e-12;
    let mut eps0 = Vec::with_capacity(n);
    let mut eps1 = Vec::with_capacity(n);
    for e in 0..n {
        eps0.push(if den1[e] > OCCUPANCY_EPS {
            clamp_prob(num10[e] / den1[e])
        } else {
            params_hat.eps0_hat[e]
        });
        eps1.push(if den0[e] > OCCUPANCY_EPS {
            clamp_prob(num01[e] / den0[e])
        } else {
            params_hat.eps1_hat[e]
        });
    }
    Ok((eps0, eps1))
}

/// Runs the full estimation loop and returns every iterate: index 0 is the
/// (clamped) starting point, the last entry the final estimate with its
/// convergence flag set.
pub fn em_iterate_history(
    trace: &ObservationTrace,
    init: EstimatedParams,
    max_iters: usize,
    em_seed: u64,
) -> Result<Vec<EstimatedParams>> {
    if max_iters == 0 {
        return Err(Error::ContractViolation(
            "the estimation loop needs at least one iteration".into(),
        ));
    }
    if trace.n_devices() != init.n_devices() {
        return Err(Error::DimensionMismatch(format!(
            "trace covers {} devices, initial estimates cover {}",
            trace.n_devices(),
            init.n_devices()
        )));
    }
    let n_events = init.n_events();
    let n_devices = init.n_devices();
    let mut current = init;
    current.clamp_all();
    current.iterations_run = 0;
    current.converged = false;
    let mut history = vec![current.clone()];

    for iter in 0..max_iters {
        let model = current.to_model_params(1)?;
        let states = decode_map_states(&model, trace)?;
        let (eps0, eps1) = baum_welch_epsilon(trace, &current)?;
        let mut q = current.q_hat.clone();
        for k in 0..n_devices {
            // The restart points are re-derived from the same seed every
            // iteration, so a converged estimate stays put.
            let mut restart_rng = RngStream::new(subseed(em_seed, "q-restart", k as u64));
            let col = estimate_q_ml(trace, &states, k, &mut restart_rng)?;
            for n in 0..n_events {
                q[n * n_devices + k] = col[n];
            }
        }
        let mut next = EstimatedParams::new(eps0, eps1, q, n_devices)?;
        next.iterations_run = iter + 1;
        let delta = next.sup_distance(&current);
        current = next;
        if delta < CONVERGENCE_TOL {
            current.converged = true;
            history.push(current.clone());
            break;
        }
        history.push(current.clone());
    }
    Ok(history)
}

/// Runs the estimation loop and returns the final estimate. Stops early
/// once no parameter moves more than [`CONVERGENCE_TOL`] in one iteration.
pub fn em_iterate(
    trace: &ObservationTrace,
    init: EstimatedParams,
    max_iters: usize,
    em_seed: u64,
) -> Result<EstimatedParams> {
    em_iterate_history(trace, init, max_iters, em_seed)
        .map(|mut h| h.pop().expect("history always contains the start"))
}

/// How much scheduling quality the estimation error costs: the absolute
/// difference in cumulative regret between a predictive scheduler using
/// the true parameters and one using the estimates, averaged over shared
/// evaluation trajectories.
pub fn estimation_error(
    params_true: &ModelParams,
    params_hat: &EstimatedParams,
    horizon: usize,
    eval_seeds: &[u64],
) -> Result<f64> {
    if eval_seeds.is_empty() {
        return Err(Error::ContractViolation(
            "estimation-error evaluation needs at least one seed".into(),
        ));
    }
    let believed = params_hat.to_model_params(params_true.n_slots())?;
    if believed.n_devices() != params_true.n_devices()
        || believed.n_events() != params_true.n_events()
    {
        return Err(Error::DimensionMismatch(format!(
            "estimates cover {}x{} (events x devices), truth is {}x{}",
            believed.n_events(),
            believed.n_devices(),
            params_true.n_events(),
            params_true.n_devices()
        )));
    }
    let mut total = 0.0;
    for &seed in eval_seeds {
        let trajectory = generate_trajectory(params_true, horizon, seed)?;
        let mut with_truth = Scheduler::new(PolicyKind::FuFeedback, params_true.clone(), 0.0)?;
        let mut with_estimate = Scheduler::new(PolicyKind::FuFeedback, believed.clone(), 0.0)?;
        let regret_truth = run_scheduler(&mut with_truth, &trajectory)?.cumulative_regret();
        let regret_estimate = run_scheduler(&mut with_estimate, &trajectory)?.cumulative_regret();
        total += (regret_truth as f64 - regret_estimate as f64).abs();
    }
    Ok(total / eval_seeds.len() as f64)
}
