//! The learning agent: two selection heads that prune the mode-decision
//! space (a feasibility regressor and a total-power regressor), a DQN
//! over the surviving actions, replay memory, and the episode loop.
//!
//! The same machinery runs the unfiltered variant: with filtering
//! bypassed, every action stays in play and the rest of the pipeline is
//! untouched, which isolates exactly what the selection heads buy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    build_state, state_len, DrlState, ScenarioConfig, UdnEnv,
};
use crate::error::{Error, Result};
use crate::lp::{allocate_power, feasibility_value};
use crate::nn::{
    backward_accumulate, fnv1a, forward, infer, init_mlp, opt_step, Checkpoint, MlpGrads,
    MlpParams, OptState,
};
use crate::powermodel::{
    compute_rates, power_breakdown, reward, ModeDecision, PowerBreakdown,
};

/// Index into the mode-decision space: bit `i` (LSB first) is station
/// `i`'s active flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionIndex {
    pub idx: usize,
}

impl ActionIndex {
    pub fn encode(alpha: &ModeDecision) -> Self {
        let mut idx = 0usize;
        for (bit, active) in alpha.iter().enumerate() {
            if active {
                idx |= 1 << bit;
            }
        }
        ActionIndex { idx }
    }

    pub fn decode(&self, m: usize) -> ModeDecision {
        crate::baselines::decision_from_index(self.idx, m)
    }

    pub fn all_on(m: usize) -> Self {
        ActionIndex {
            idx: (1usize << m) - 1,
        }
    }
}

/// Replay tuple.
#[derive(Debug, Clone)]
pub struct Transition {
    pub s: DrlState,
    pub a: ActionIndex,
    pub r: f64,
    pub v_ft: f64,
    pub p_tot: f64,
    pub s_next: DrlState,
}

/// Fixed-capacity FIFO transition store.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: std::collections::VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            buf: std::collections::VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.buf[i]
    }

    /// Uniform sample without replacement (partial Fisher-Yates), so a
    /// batch equal to the memory size is a permutation of all of it.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        debug_assert!(batch <= self.buf.len());
        let n = self.buf.len();
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..batch {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx[..batch].iter().map(|i| self.buf[*i].clone()).collect()
    }
}

/// Linear exploration decay: `start` at episode 0 down to `end` at
/// `decay_episodes`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            self.end
        } else {
            self.start + (self.end - self.start) * episode as f64 / self.decay_episodes as f64
        }
    }
}

/// Agent hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Feasibility-test threshold, in noise-normalized violation units.
    pub tau: f64,
    /// Power-test threshold (W).
    pub p_threshold: f64,
    pub batch: usize,
    pub lr_f: f64,
    pub lr_e: f64,
    pub lr_q: f64,
    pub epsilon: EpsilonSchedule,
    pub updates_per_episode: usize,
    pub target_network: bool,
    /// Hidden-layer widths of all three heads.
    pub hidden: Vec<usize>,
    pub memory_capacity: usize,
    /// Noise-scale normalizer for the feasibility head's targets;
    /// stamped from the training scenario at construction.
    #[serde(default = "default_v_scale")]
    pub v_scale: f64,
}

fn default_v_scale() -> f64 {
    1.0
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.9,
            tau: 0.01,
            p_threshold: 64.0,
            batch: 256,
            lr_f: 1e-3,
            lr_e: 1e-3,
            lr_q: 1e-3,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_episodes: 150,
            },
            updates_per_episode: 1,
            target_network: false,
            hidden: vec![64; 4],
            memory_capacity: 20_000,
            v_scale: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config("tau must be positive"));
        }
        if self.batch == 0 || self.batch > self.memory_capacity {
            return Err(Error::config("batch must satisfy 0 < batch <= capacity"));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|h| *h == 0) {
            return Err(Error::config("hidden widths must be nonzero"));
        }
        Ok(())
    }
}

/// Network-side view of a state: gain segments move to a compact log
/// scale (zero stays zero so padded entries are inert); requirements and
/// mode bits pass through unchanged.
pub fn net_input(s: &DrlState, m: usize, k: usize) -> Vec<f64> {
    let gains = 2 * m * k;
    s.vec
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i < gains && v != 0.0 {
                v.log10() / 10.0
            } else {
                v
            }
        })
        .collect()
}

/// Recovers `(m, k)` from a head's geometry.
fn dims_from_net(w: &MlpParams) -> Result<(usize, usize)> {
    let out = w.output_len();
    if !out.is_power_of_two() {
        return Err(Error::contract("head output length must be a power of two"));
    }
    let m = out.trailing_zeros() as usize;
    let input = w.input_len();
    if m == 0 || input <= m {
        return Err(Error::contract("head geometry is not a state reader"));
    }
    let k = (input - m) / (2 * m + 1);
    if state_len(m, k) != input {
        return Err(Error::contract("head input length does not match any (m, k)"));
    }
    Ok((m, k))
}

/// Outcome of the two filtering tests for one state.
#[derive(Debug, Clone)]
pub struct DsnFilter {
    /// Actions passing the feasibility test.
    pub a_f: Vec<usize>,
    /// Actions passing both tests, or the fallback set.
    pub a_d: Vec<usize>,
    /// Noise-normalized infeasibility estimate per action.
    pub v_hat: Vec<f64>,
    /// Total-power estimate per action (W).
    pub p_hat: Vec<f64>,
    /// True when the thresholded set came up empty and a fallback was
    /// substituted.
    pub fallback: bool,
}

impl DsnFilter {
    /// Bypass: every allowed action stays in play.
    pub fn unfiltered(allowed: usize) -> Self {
        let all: Vec<usize> = (0..allowed).collect();
        DsnFilter {
            a_f: all.clone(),
            a_d: all,
            v_hat: Vec::new(),
            p_hat: Vec::new(),
            fallback: false,
        }
    }
}

/// Pure filtering core over already-priced actions. Only indices below
/// `allowed` participate; on an empty desirable set the feasible set is
/// substituted, and failing that the all-on action within the allowed
/// prefix.
pub fn filter_by_values(
    v_hat: &[f64],
    p_hat: &[f64],
    cfg: &AgentConfig,
    allowed: usize,
) -> DsnFilter {
    let a_f: Vec<usize> = (0..allowed).filter(|&a| v_hat[a] <= cfg.tau).collect();
    let strict: Vec<usize> = a_f
        .iter()
        .copied()
        .filter(|&a| p_hat[a] <= cfg.p_threshold)
        .collect();
    let (a_d, fallback) = if !strict.is_empty() {
        (strict, false)
    } else if !a_f.is_empty() {
        (a_f.clone(), true)
    } else {
        (vec![allowed - 1], true)
    };
    DsnFilter {
        a_f,
        a_d,
        v_hat: v_hat.to_vec(),
        p_hat: p_hat.to_vec(),
        fallback,
    }
}

/// Scores every action with both heads and applies the two tests.
pub fn dsn_filter(
    theta_f: &MlpParams,
    theta_e: &MlpParams,
    s: &DrlState,
    cfg: &AgentConfig,
) -> Result<DsnFilter> {
    let allowed = theta_f.output_len();
    dsn_filter_limited(theta_f, theta_e, s, cfg, allowed)
}

/// As [`dsn_filter`], restricted to the first `allowed` action indices
/// (used when high station bits are forced asleep).
pub fn dsn_filter_limited(
    theta_f: &MlpParams,
    theta_e: &MlpParams,
    s: &DrlState,
    cfg: &AgentConfig,
    allowed: usize,
) -> Result<DsnFilter> {
    let (m, k) = dims_from_net(theta_f)?;
    let x = net_input(s, m, k);
    let u = infer(theta_f, &x)?;
    // The head regresses a compressed violation score; invert the
    // compression so the threshold compares in normalized units.
    let v_hat: Vec<f64> = u.iter().map(|v| v.sinh()).collect();
    let p_hat = infer(theta_e, &x)?;
    Ok(filter_by_values(&v_hat, &p_hat, cfg, allowed))
}

/// Epsilon-greedy choice over the surviving actions; greedy ties go to
/// the lowest index.
pub fn select_action<R: Rng>(
    w: &MlpParams,
    s: &DrlState,
    a_d: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<ActionIndex> {
    if a_d.is_empty() {
        return Err(Error::contract("action set must be non-empty"));
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(ActionIndex {
            idx: a_d[rng.gen_range(0..a_d.len())],
        });
    }
    let (m, k) = dims_from_net(w)?;
    let q = infer(w, &net_input(s, m, k))?;
    let mut best = a_d[0];
    for &a in &a_d[1..] {
        if q[a] > q[best] {
            best = a;
        }
    }
    Ok(ActionIndex { idx: best })
}

/// Bootstrap targets `r + gamma * max Q(s', a')`, the max running over
/// the filtered action set of the next state (or every action when
/// filtering is bypassed). `w_frozen`, when present, prices the next
/// state instead of `w`.
pub fn q_targets(
    w: &MlpParams,
    w_frozen: Option<&MlpParams>,
    batch: &[Transition],
    gamma: f64,
    dsn_heads: Option<(&MlpParams, &MlpParams)>,
    cfg: &AgentConfig,
) -> Result<Vec<f64>> {
    let (m, k) = dims_from_net(w)?;
    let allowed = w.output_len();
    let pricer = w_frozen.unwrap_or(w);
    let mut out = Vec::with_capacity(batch.len());
    for tr in batch {
        let a_d = match dsn_heads {
            Some((tf, te)) => dsn_filter_limited(tf, te, &tr.s_next, cfg, allowed)?.a_d,
            None => (0..allowed).collect(),
        };
        let q = infer(pricer, &net_input(&tr.s_next, m, k))?;
        let max_q = a_d
            .iter()
            .map(|&a| q[a])
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(tr.r + gamma * max_q);
    }
    Ok(out)
}

/// Mean squared training losses of one update, in each head's own
/// target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLosses {
    pub l_f: f64,
    pub l_e: f64,
    pub l_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeMode {
    Train,
    Eval,
}

/// Per-slot record of an episode.
#[derive(Debug, Clone)]
pub struct SlotLog {
    pub t: usize,
    pub action: ActionIndex,
    pub alpha: ModeDecision,
    pub breakdown: PowerBreakdown,
    pub rates: Vec<f64>,
    pub reward: f64,
    pub v_ft: f64,
    pub feasible: bool,
    pub fallback: bool,
    pub size_a_f: usize,
    pub size_a_d: usize,
    pub min_rate_margin: f64,
}

/// Episode summary plus the raw slot records.
#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub slots: Vec<SlotLog>,
    /// Sum of slot totals (W accumulated over slots).
    pub energy: f64,
    pub cum_reward: f64,
    pub epsilon: f64,
    /// Mean losses over this episode's updates; `None` when the memory
    /// was still too small for a batch.
    pub losses: Option<TrainLosses>,
}

struct PendingTransition {
    s: DrlState,
    a: ActionIndex,
    r: f64,
    v_ft: f64,
    p_tot: f64,
}

/// The full agent: three heads, their optimizer states, replay memory,
/// and the exploration counter.
#[derive(Debug, Clone)]
pub struct DreemAgent {
    pub m: usize,
    pub k: usize,
    pub cfg: AgentConfig,
    /// When false the filtering stage is bypassed (plain DQN).
    pub use_dsn: bool,
    pub memory: ReplayMemory,
    pub episodes_trained: usize,
    theta_f: MlpParams,
    theta_e: MlpParams,
    q_net: MlpParams,
    opt_f: OptState,
    opt_e: OptState,
    opt_q: OptState,
    target_q: Option<MlpParams>,
    rng: ChaCha8Rng,
}

impl DreemAgent {
    pub fn new(
        scenario: &ScenarioConfig,
        mut cfg: AgentConfig,
        use_dsn: bool,
        seed: u64,
    ) -> Result<Self> {
        scenario.validate()?;
        cfg.v_scale = crate::env::noise_power(scenario);
        cfg.validate()?;
        let (m, k) = (scenario.m, scenario.k);
        let mut dims = Vec::with_capacity(cfg.hidden.len() + 2);
        dims.push(state_len(m, k));
        dims.extend_from_slice(&cfg.hidden);
        dims.push(1usize << m);
        let mut rng = crate::harness::seeded_rng(seed);
        let theta_f = init_mlp(&dims, &mut rng)?;
        let theta_e = init_mlp(&dims, &mut rng)?;
        let q_net = init_mlp(&dims, &mut rng)?;
        let target_q = cfg.target_network.then(|| q_net.clone());
        Ok(DreemAgent {
            m,
            k,
            memory: ReplayMemory::new(cfg.memory_capacity),
            episodes_trained: 0,
            opt_f: OptState::adam(cfg.lr_f, &theta_f),
            opt_e: OptState::adam(cfg.lr_e, &theta_e),
            opt_q: OptState::adam(cfg.lr_q, &q_net),
            theta_f,
            theta_e,
            q_net,
            target_q,
            cfg,
            use_dsn,
            rng,
        })
    }

    pub fn heads(&self) -> (&MlpParams, &MlpParams, &MlpParams) {
        (&self.theta_f, &self.theta_e, &self.q_net)
    }

    /// One mini-batch update of all three heads. Returns `None` (and
    /// changes nothing) while the memory holds fewer than a batch.
    pub fn train_step(&mut self) -> Result<Option<TrainLosses>> {
        let b = self.cfg.batch;
        if self.memory.len() < b {
            return Ok(None);
        }
        let batch = self.memory.sample(b, &mut self.rng);
        let heads = self
            .use_dsn
            .then_some((&self.theta_f, &self.theta_e));
        let targets = q_targets(
            &self.q_net,
            self.target_q.as_ref(),
            &batch,
            self.cfg.gamma,
            heads,
            &self.cfg,
        )?;
        let out_len = self.q_net.output_len();
        let mut g_f = MlpGrads::zeros_like(&self.theta_f);
        let mut g_e = MlpGrads::zeros_like(&self.theta_e);
        let mut g_q = MlpGrads::zeros_like(&self.q_net);
        let (mut l_f, mut l_e, mut l_q) = (0.0, 0.0, 0.0);
        let scale = 1.0 / b as f64;
        let mut dy = vec![0.0; out_len];
        for (tr, y) in batch.iter().zip(&targets) {
            let x = net_input(&tr.s, self.m, self.k);
            let a = tr.a.idx;

            let (v, cache) = forward(&self.theta_f, &x)?;
            let target_f = (tr.v_ft / self.cfg.v_scale).asinh();
            let err = v[a] - target_f;
            l_f += err * err;
            dy[a] = 2.0 * err * scale;
            backward_accumulate(&self.theta_f, &cache, &dy, &mut g_f);
            dy[a] = 0.0;

            let (p, cache) = forward(&self.theta_e, &x)?;
            let err = p[a] - tr.p_tot;
            l_e += err * err;
            dy[a] = 2.0 * err * scale;
            backward_accumulate(&self.theta_e, &cache, &dy, &mut g_e);
            dy[a] = 0.0;

            let (q, cache) = forward(&self.q_net, &x)?;
            let err = q[a] - y;
            l_q += err * err;
            dy[a] = 2.0 * err * scale;
            backward_accumulate(&self.q_net, &cache, &dy, &mut g_q);
            dy[a] = 0.0;
        }
        let (p, o) = opt_step(self.theta_f.clone(), &g_f, self.opt_f.clone());
        self.theta_f = p;
        self.opt_f = o;
        let (p, o) = opt_step(self.theta_e.clone(), &g_e, self.opt_e.clone());
        self.theta_e = p;
        self.opt_e = o;
        let (p, o) = opt_step(self.q_net.clone(), &g_q, self.opt_q.clone());
        self.q_net = p;
        self.opt_q = o;
        Ok(Some(TrainLosses {
            l_f: l_f * scale,
            l_e: l_e * scale,
            l_q: l_q * scale,
        }))
    }

    /// Runs one episode at the agent's native dimensions.
    pub fn run_episode(
        &mut self,
        scenario: &ScenarioConfig,
        env_seed: u64,
        mode: EpisodeMode,
    ) -> Result<EpisodeLog> {
        if scenario.m != self.m || scenario.k != self.k {
            return Err(Error::contract(
                "scenario dimensions must match the agent; use eval_zero_padded for smaller ones",
            ));
        }
        self.episode_core(scenario, env_seed, mode)
    }

    /// Evaluates a smaller scenario by zero-padding the state up to the
    /// trained dimensions and masking actions that would wake the
    /// non-existent stations.
    pub fn eval_zero_padded(
        &mut self,
        scenario: &ScenarioConfig,
        env_seed: u64,
    ) -> Result<EpisodeLog> {
        if scenario.m > self.m || scenario.k > self.k {
            return Err(Error::contract(format!(
                "scenario ({}, {}) exceeds trained dimensions ({}, {})",
                scenario.m, scenario.k, self.m, self.k
            )));
        }
        self.episode_core(scenario, env_seed, EpisodeMode::Eval)
    }

    fn pad_state(&self, s: &DrlState, m_eff: usize, k_eff: usize) -> DrlState {
        if m_eff == self.m && k_eff == self.k {
            return s.clone();
        }
        let (m, k) = (self.m, self.k);
        let mut vec = vec![0.0; state_len(m, k)];
        let src = &s.vec;
        for (seg, offset_src, offset_dst) in [
            (0, 0, 0),
            (1, m_eff * k_eff, m * k),
        ] {
            let _ = seg;
            for mi in 0..m_eff {
                for ki in 0..k_eff {
                    vec[offset_dst + mi * k + ki] = src[offset_src + mi * k_eff + ki];
                }
            }
        }
        let src_r = 2 * m_eff * k_eff;
        let dst_r = 2 * m * k;
        vec[dst_r..dst_r + k_eff].copy_from_slice(&src[src_r..src_r + k_eff]);
        let src_a = src_r + k_eff;
        let dst_a = dst_r + k;
        vec[dst_a..dst_a + m_eff].copy_from_slice(&src[src_a..src_a + m_eff]);
        DrlState { vec }
    }

    fn episode_core(
        &mut self,
        scenario: &ScenarioConfig,
        env_seed: u64,
        mode: EpisodeMode,
    ) -> Result<EpisodeLog> {
        let (m_eff, k_eff) = (scenario.m, scenario.k);
        let allowed = 1usize << m_eff;
        let mut env = UdnEnv::new(scenario, env_seed)?;
        let sigma2 = env.sigma2;
        let all_on = ModeDecision::all_on(m_eff);
        let mut alpha_prev = all_on.clone();
        let epsilon = match mode {
            EpisodeMode::Train => self.cfg.epsilon.value(self.episodes_trained),
            EpisodeMode::Eval => 0.0,
        };
        let mut slots = Vec::with_capacity(scenario.t);
        let mut pending: Option<PendingTransition> = None;
        let mut energy = 0.0;
        let mut cum_reward = 0.0;
        for t in 0..scenario.t {
            env.advance()?;
            let raw = build_state(env.h_cur(), env.h_prev(), &scenario.r_min, &alpha_prev)?;
            let s = self.pad_state(&raw, m_eff, k_eff);
            if let Some(pt) = pending.take() {
                self.memory.push(Transition {
                    s: pt.s,
                    a: pt.a,
                    r: pt.r,
                    v_ft: pt.v_ft,
                    p_tot: pt.p_tot,
                    s_next: s.clone(),
                });
            }
            let filt = if self.use_dsn {
                dsn_filter_limited(&self.theta_f, &self.theta_e, &s, &self.cfg, allowed)?
            } else {
                DsnFilter::unfiltered(allowed)
            };
            let action = select_action(&self.q_net, &s, &filt.a_d, epsilon, &mut self.rng)?;
            let alpha = action.decode(m_eff);

            let alloc = allocate_power(env.h_cur(), &alpha, &scenario.r_min, sigma2, scenario)?;
            let (v_ft, p_ft) =
                feasibility_value(env.h_cur(), &alpha, &scenario.r_min, sigma2, scenario)?;
            let feasible = alloc.is_feasible();
            let p = if feasible { alloc.p } else { p_ft };
            let breakdown = power_breakdown(&p, &alpha, &alpha_prev, scenario)?;
            let p_all_on = crate::baselines::all_on_reference_power(
                env.h_cur(),
                &scenario.r_min,
                sigma2,
                scenario,
            )?;
            let r = reward(&breakdown, p_all_on, feasible);
            let rates = compute_rates(&p, env.h_cur(), sigma2);
            let min_rate_margin = rates
                .iter()
                .zip(&scenario.r_min)
                .map(|(rate, req)| rate - req)
                .fold(f64::INFINITY, f64::min);

            if mode == EpisodeMode::Train {
                pending = Some(PendingTransition {
                    s,
                    a: action,
                    r,
                    v_ft,
                    p_tot: breakdown.p_tot,
                });
            }
            energy += breakdown.p_tot;
            cum_reward += r;
            slots.push(SlotLog {
                t,
                action,
                alpha: alpha.clone(),
                breakdown,
                rates,
                reward: r,
                v_ft,
                feasible,
                fallback: filt.fallback,
                size_a_f: filt.a_f.len(),
                size_a_d: filt.a_d.len(),
                min_rate_margin,
            });
            alpha_prev = alpha;
        }
        if let Some(pt) = pending.take() {
            env.advance()?;
            let raw = build_state(env.h_cur(), env.h_prev(), &scenario.r_min, &alpha_prev)?;
            let s_next = self.pad_state(&raw, m_eff, k_eff);
            self.memory.push(Transition {
                s: pt.s,
                a: pt.a,
                r: pt.r,
                v_ft: pt.v_ft,
                p_tot: pt.p_tot,
                s_next,
            });
        }
        let losses = if mode == EpisodeMode::Train {
            let mut acc: Vec<TrainLosses> = Vec::new();
            for _ in 0..self.cfg.updates_per_episode {
                if let Some(l) = self.train_step()? {
                    acc.push(l);
                }
            }
            self.episodes_trained += 1;
            if self.cfg.target_network {
                self.target_q = Some(self.q_net.clone());
            }
            if acc.is_empty() {
                None
            } else {
                let n = acc.len() as f64;
                Some(TrainLosses {
                    l_f: acc.iter().map(|l| l.l_f).sum::<f64>() / n,
                    l_e: acc.iter().map(|l| l.l_e).sum::<f64>() / n,
                    l_q: acc.iter().map(|l| l.l_q).sum::<f64>() / n,
                })
            }
        } else {
            None
        };
        Ok(EpisodeLog {
            slots,
            energy,
            cum_reward,
            epsilon,
            losses,
        })
    }

    fn config_hash(&self) -> u64 {
        fnv1a(
            serde_json::to_string(&self.cfg)
                .expect("agent config serializes")
                .as_bytes(),
        )
    }

    /// Writes one checkpoint per head plus a manifest into `dir`.
    pub fn save(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let hash = self.config_hash();
        Checkpoint::capture(&self.theta_f, &self.opt_f, &self.rng, hash)
            .save(dir.join("theta_f.json"))?;
        Checkpoint::capture(&self.theta_e, &self.opt_e, &self.rng, hash)
            .save(dir.join("theta_e.json"))?;
        Checkpoint::capture(&self.q_net, &self.opt_q, &self.rng, hash).save(dir.join("q.json"))?;
        let manifest = AgentManifest {
            m: self.m,
            k: self.k,
            use_dsn: self.use_dsn,
            episodes_trained: self.episodes_trained,
            config_hash: hash,
            agent_cfg: self.cfg.clone(),
            rng: self.rng.clone(),
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// Restores an agent saved by [`DreemAgent::save`]. The replay
    /// memory starts empty; parameters, optimizer states, counters, and
    /// the RNG pick up where they left off.
    pub fn load(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: AgentManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let (theta_f, opt_f) = Checkpoint::load(dir.join("theta_f.json"))?.restore()?;
        let (theta_e, opt_e) = Checkpoint::load(dir.join("theta_e.json"))?.restore()?;
        let (q_net, opt_q) = Checkpoint::load(dir.join("q.json"))?.restore()?;
        let target_q = manifest.agent_cfg.target_network.then(|| q_net.clone());
        Ok(DreemAgent {
            m: manifest.m,
            k: manifest.k,
            memory: ReplayMemory::new(manifest.agent_cfg.memory_capacity),
            episodes_trained: manifest.episodes_trained,
            cfg: manifest.agent_cfg,
            use_dsn: manifest.use_dsn,
            theta_f,
            theta_e,
            q_net,
            opt_f,
            opt_e,
            opt_q,
            target_q,
            rng: manifest.rng,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentManifest {
    m: usize,
    k: usize,
    use_dsn: bool,
    episodes_trained: usize,
    config_hash: u64,
    agent_cfg: AgentConfig,
    rng: ChaCha8Rng,
}
