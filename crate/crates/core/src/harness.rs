//! Experiment runner: draws parameters, generates shared ground-truth
//! trajectories, replays them against every configured policy, and collects
//! the metric traces.
//!
//! Randomness discipline: every run is keyed by one seed per experiment
//! replication. Named substreams are derived from that seed (parameter
//! draw, event chain, activations, grant-free contention, learning
//! initialization), so each policy sees the identical ground truth and
//! adding a policy never perturbs another policy's draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BetaSetting, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimation::{em_iterate, EstimatedParams, ObservationTrace};
use crate::inference::Observation;
use crate::metrics::{missed_allocations, wrong_allocations, MetricsTrace};
use crate::model::{
    sample_activations, step_events, ActivationVector, EventStateVector, ModelParams,
};
use crate::rng::{subseed, RngStream};
use crate::sched::{PolicyKind, Scheduler, SlotContext};
use crate::tuning::{optimize_beta, BetaSearchConfig};

/// One realization of the hidden events and the activations they caused,
/// over a full horizon. Entry `t` holds the state and activations of slot
/// `t + 1`; the slot-1 predecessor state is all-Off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EventStateVector>,
    pub activations: Vec<ActivationVector>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }
}

/// Simulates the ground truth for one run. The event chain and the
/// activation draws come from separate substreams of `seed`.
pub fn generate_trajectory(params: &ModelParams, horizon: usize, seed: u64) -> Result<Trajectory> {
    let mut event_rng = RngStream::new(subseed(seed, "events", 0));
    let mut activation_rng = RngStream::new(subseed(seed, "activations", 0));
    let mut state = EventStateVector::all_off(params.n_events());
    let mut states = Vec::with_capacity(horizon);
    let mut activations = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        state = step_events(params, &state, &mut event_rng)?;
        activations.push(sample_activations(params, &state, &mut activation_rng)?);
        states.push(state.clone());
    }
    Ok(Trajectory {
        states,
        activations,
    })
}

/// Replays one policy against a trajectory, slot by slot: schedule before
/// the truth, score the grants, feed the observation back.
///
/// For grant-free access the wrong-allocation count is the number of
/// transmission slots that carried no successful transmission (the grant
/// vector records only successes, so the literal count would always be
/// zero); all other policies use the literal granted-but-idle count.
pub fn run_scheduler(scheduler: &mut Scheduler, trajectory: &Trajectory) -> Result<MetricsTrace> {
    let n_slots = scheduler.n_slots();
    let mut trace = MetricsTrace::new(n_slots);
    let Some(first_state) = trajectory.states.first() else {
        return Ok(trace);
    };
    if trajectory.activations.len() != trajectory.states.len() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} states but {} activation rows",
            trajectory.states.len(),
            trajectory.activations.len()
        )));
    }
    let origin = EventStateVector::all_off(first_state.len());
    for t in 0..trajectory.horizon() {
        let prev_state = if t == 0 {
            &origin
        } else {
            &trajectory.states[t - 1]
        };
        let truth = &trajectory.activations[t];
        let grants = scheduler.schedule(&SlotContext {
            true_prev_state: Some(prev_state),
            truth: Some(truth),
        })?;
        let omega = if scheduler.kind() == PolicyKind::Gf {
            n_slots - grants.count_granted()
        } else {
            wrong_allocations(&grants, truth)
        };
        let mu = missed_allocations(&grants, truth);
        scheduler.observe(truth, &grants)?;
        trace.push(omega, mu, scheduler.ages());
    }
    Ok(trace)
}

/// Builds the scheduler for one policy within one seeded run, including
/// the training pass of the offline learner and the initialization of the
/// online learner. `beta` applies only to the age-compensated policies;
/// everything else runs uncompensated.
pub fn build_scheduler(
    config: &ExperimentConfig,
    params: &ModelParams,
    policy: PolicyKind,
    seed: u64,
    beta: f64,
) -> Result<Scheduler> {
    let policy_beta = if policy.uses_beta_by_default() {
        beta
    } else {
        0.0
    };
    let scheduler = match policy {
        PolicyKind::Gf => Scheduler::new_grant_free(
            params.n_devices(),
            params.n_slots(),
            RngStream::new(subseed(seed, "gf-choices", 0)),
        )?,
        PolicyKind::FuOffline => {
            let training =
                generate_trajectory(params, config.train_horizon, subseed(seed, "train", 0))?;
            let mut trace = ObservationTrace::empty(params.n_devices());
            for activations in &training.activations {
                trace.push(Observation::Full(activations.clone()))?;
            }
            let mut init_rng = RngStream::new(subseed(seed, "em-init", 0));
            let init =
                EstimatedParams::random_init(params.n_events(), params.n_devices(), &mut init_rng);
            let learned = em_iterate(&trace, init, config.em_max_iters, subseed(seed, "em", 0))?;
            Scheduler::new(
                PolicyKind::FuOffline,
                learned.to_model_params(params.n_slots())?,
                0.0,
            )?
        }
        PolicyKind::FuOnlineAoi => {
            let mut init_rng = RngStream::new(subseed(seed, "em-init", 1));
            let init =
                EstimatedParams::random_init(params.n_events(), params.n_devices(), &mut init_rng);
            Scheduler::new_online(
                params.n_events(),
                params.n_devices(),
                params.n_slots(),
                init,
                policy_beta,
                config.em_max_iters,
                subseed(seed, "em", 1),
                config.online_window,
            )?
        }
        other => Scheduler::new(other, params.clone(), policy_beta)?,
    };
    Ok(scheduler.with_steady_aggregate(config.steady_aggregate))
}

/// Metric trace of one policy over one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: PolicyKind,
    pub trace: MetricsTrace,
}

/// All policies replayed against one seed's shared ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRunResult {
    pub seed: u64,
    pub policies: Vec<PolicyRun>,
}

/// Everything a multi-seed experiment produced, with the configuration
/// echo that reproduces it (the age weight resolved to its value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub beta: f64,
    /// Set when the weight was tuned and the cost profile was not
    /// unimodal, so the tuner fell back to the grid minimum.
    pub beta_warning: bool,
    pub seeds: Vec<SeedRunResult>,
}

fn params_for_seed(config: &ExperimentConfig, seed: u64) -> Result<ModelParams> {
    if let Some(p) = config.explicit_params()? {
        return Ok(p);
    }
    let mut rng = RngStream::new(subseed(seed, "params", 0));
    ModelParams::sample(config.n_events, config.n_devices, config.n_slots, &mut rng)
}

fn run_seed(config: &ExperimentConfig, seed: u64, beta: f64) -> Result<SeedRunResult> {
    let params = params_for_seed(config, seed)?;
    let trajectory = generate_trajectory(&params, config.horizon, seed)?;
    let mut policies = Vec::with_capacity(config.policies.len());
    for &policy in &config.policies {
        let mut scheduler = build_scheduler(config, &params, policy, seed, beta)?;
        let trace = run_scheduler(&mut scheduler, &trajectory)?;
        policies.push(PolicyRun { policy, trace });
    }
    Ok(SeedRunResult { seed, policies })
}

/// Runs the configured experiment: one shared ground-truth trajectory per
/// seed, every policy replayed against it, seeds fanned out across worker
/// threads. When the config asks for the age weight to be tuned, tuning
/// happens once (on the first seed's parameter draw) and the tuned value
/// applies to every seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let (beta, beta_warning) = match &config.beta {
        BetaSetting::Value(v) => (*v, false),
        BetaSetting::Keyword(_) => {
            let first_seed = config.seeds[0];
            let tuning_params = params_for_seed(config, first_seed)?;
            let mut search = BetaSearchConfig::new(subseed(first_seed, "beta-search", 0));
            search.horizon = config.horizon;
            search.steady_aggregate = config.steady_aggregate;
            let optimum = optimize_beta(&search, &tuning_params)?;
            (optimum.beta, !optimum.unimodal)
        }
    };
    let seeds: Vec<SeedRunResult> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed, beta))
        .collect::<Result<Vec<_>>>()?;
    let mut echo = config.clone();
    echo.beta = BetaSetting::Value(beta);
    Ok(ExperimentResult {
        config: echo,
        beta,
        beta_warning,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n_events: 2,
            n_devices: 6,
            n_slots: 2,
            horizon: 25,
            seeds: vec![11, 12],
            policies: vec![
                PolicyKind::Tdma,
                PolicyKind::Gf,
                PolicyKind::FuBaseline,
                PolicyKind::FuFeedback,
                PolicyKind::FuGenie,
                PolicyKind::FuLimited,
            ],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn trajectory_is_deterministic_and_sized() {
        let params = ModelParams::sample(2, 4, 2, &mut RngStream::new(61)).unwrap();
        let a = generate_trajectory(&params, 30, 5).unwrap();
        let b = generate_trajectory(&params, 30, 5).unwrap();
        let c = generate_trajectory(&params, 30, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.horizon(), 30);
        assert_eq!(a.activations.len(), 30);
    }

    #[test]
    fn experiment_runs_all_policies_over_all_seeds() {
        let config = tiny_config();
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.seeds.len(), 2);
        for seed_result in &result.seeds {
            assert_eq!(seed_result.policies.len(), 6);
            for run in &seed_result.policies {
                assert_eq!(run.trace.len(), 25);
            }
        }
        // The config echo resolves the weight to a value.
        assert_eq!(result.config.beta, BetaSetting::Value(result.beta));
    }

    #[test]
    fn repeat_runs_are_identical() {
        let config = tiny_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn policies_share_the_ground_truth_per_seed() {
        // Reordering or dropping policies must not change any other
        // policy's trace.
        let config = tiny_config();
        let full = run_experiment(&config).unwrap();

        let mut reduced_config = config.clone();
        reduced_config.policies = vec![PolicyKind::FuFeedback];
        let reduced = run_experiment(&reduced_config).unwrap();

        let pick = |r: &ExperimentResult, seed: u64| {
            r.seeds
                .iter()
                .find(|s| s.seed == seed)
                .unwrap()
                .policies
                .iter()
                .find(|p| p.policy == PolicyKind::FuFeedback)
                .unwrap()
                .trace
                .clone()
        };
        for &seed in &config.seeds {
            assert_eq!(pick(&full, seed), pick(&reduced, seed));
        }
    }

    #[test]
    fn saturated_round_robin_has_full_usage() {
        // Single always-On event, certain activation, L = K: every grant
        // is used every slot.
        let config = ExperimentConfig {
            n_events: 1,
            n_devices: 3,
            n_slots: 3,
            horizon: 10,
            seeds: vec![1],
            policies: vec![PolicyKind::Tdma],
            eps0: Some(vec![0.0]),
            eps1: Some(vec![1.0]),
            q: Some(vec![vec![1.0, 1.0, 1.0]]),
            ..ExperimentConfig::default()
        };
        let result = run_experiment(&config).unwrap();
        let trace = &result.seeds[0].policies[0].trace;
        assert_eq!(trace.final_usage(), 1.0);
        assert_eq!(trace.cumulative_regret(), 0);
    }

    #[test]
    fn explicit_params_apply_to_every_seed() {
        let config = ExperimentConfig {
            n_events: 1,
            n_devices: 2,
            n_slots: 1,
            horizon: 5,
            seeds: vec![3, 4],
            policies: vec![PolicyKind::FuFeedback],
            eps0: Some(vec![0.2]),
            eps1: Some(vec![0.4]),
            q: Some(vec![vec![0.9, 0.8]]),
            ..ExperimentConfig::default()
        };
        // Different seeds still see different trajectories under the same
        // parameters.
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.seeds.len(), 2);
    }

    #[test]
    fn learning_policies_run_end_to_end() {
        let config = ExperimentConfig {
            n_events: 1,
            n_devices: 4,
            n_slots: 1,
            horizon: 12,
            train_horizon: 30,
            em_max_iters: 10,
            seeds: vec![9],
            policies: vec![PolicyKind::FuOffline, PolicyKind::FuOnlineAoi],
            ..ExperimentConfig::default()
        };
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.seeds[0].policies.len(), 2);
        for run in &result.seeds[0].policies {
            assert_eq!(run.trace.len(), 12);
        }
    }
}
