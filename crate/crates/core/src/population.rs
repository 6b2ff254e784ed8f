//! Integer population process on the reaction graph: statistically exact
//! event-driven simulation plus two fixed-step approximation families
//! (Poisson tau-leaping and the multinomial discrete-time scheme), each with
//! an optional stochastic-shielding mask.
//!
//! Shielded edges contribute their conditional mean flux instead of a sampled
//! count, which makes the state real-valued; unshielded runs stay on the
//! integer lattice and conserve the population exactly.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{MeasurementVector, ReactionNetwork};
use crate::rng::StreamKey;

/// Edges whose fluctuations are replaced by their mean.
pub type ShieldingMask = BTreeSet<usize>;

#[derive(Clone, Debug)]
pub struct PopulationState {
    pub counts: Vec<f64>,
    pub t: f64,
}

/// A decimated population trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Steps on which any component had to be clamped at zero.
    pub clamped_steps: usize,
    pub total_steps: usize,
}

impl Trajectory {
    /// Runs with more than 0.1% clamped steps are not trustworthy.
    pub fn flagged_invalid(&self) -> bool {
        self.clamped_steps * 1000 > self.total_steps
    }

    pub fn stationary_mean(&self, burn_in: f64) -> Vec<f64> {
        let n = self.states.first().map(|s| s.len()).unwrap_or(0);
        let mut acc = vec![0.0; n];
        let mut count = 0usize;
        for (i, &t) in self.times.iter().enumerate() {
            if t >= burn_in {
                for (a, &s) in acc.iter_mut().zip(&self.states[i]) {
                    *a += s;
                }
                count += 1;
            }
        }
        acc.iter().map(|a| a / count.max(1) as f64).collect()
    }

    pub fn stationary_variance(&self, burn_in: f64) -> Vec<f64> {
        let mean = self.stationary_mean(burn_in);
        let n = mean.len();
        let mut acc = vec![0.0; n];
        let mut count = 0usize;
        for (i, &t) in self.times.iter().enumerate() {
            if t >= burn_in {
                for j in 0..n {
                    let d = self.states[i][j] - mean[j];
                    acc[j] += d * d;
                }
                count += 1;
            }
        }
        acc.iter().map(|a| a / count.max(1) as f64).collect()
    }
}

fn check_state(net: &ReactionNetwork, n0: &[f64]) -> Result<()> {
    if n0.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch { context: "initial state length".into() });
    }
    if n0.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput { context: "initial counts must be >= 0".into() });
    }
    if n0.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidInput { context: "total population must be positive".into() });
    }
    Ok(())
}

/// Exact continuous-time simulation (Gillespie direct method), sampled on a
/// uniform grid of spacing `sample_dt`.
pub fn ssa_exact(
    net: &ReactionNetwork,
    n0: &[u64],
    t_final: f64,
    sample_dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    let counts_f: Vec<f64> = n0.iter().map(|&c| c as f64).collect();
    check_state(net, &counts_f)?;
    if !(sample_dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidInput { context: "t_final and sample_dt must be > 0".into() });
    }
    let key = StreamKey::new(seed, 0, 0);
    let mut counts: Vec<i64> = n0.iter().map(|&c| c as i64).collect();
    let total: i64 = counts.iter().sum();
    let mut t = 0.0f64;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut next_sample = 0.0f64;
    let mut events = 0u64;
    loop {
        let mut a_total = 0.0;
        for e in net.edges() {
            a_total += e.rate * counts[e.from] as f64;
        }
        if !(a_total > 0.0) {
            return Err(Error::InvalidInput {
                context: "total propensity vanished; state has no outgoing reactions".into(),
            });
        }
        let t_next = t + key.exponential(events, 0, a_total);
        while next_sample <= t_next.min(t_final) {
            times.push(next_sample);
            states.push(counts.iter().map(|&c| c as f64).collect());
            next_sample += sample_dt;
        }
        if t_next > t_final {
            break;
        }
        // choose the firing reaction proportionally to propensity
        let mut u = key.uniform(events, 1) * a_total;
        let mut chosen = net.num_edges() - 1;
        for (k, e) in net.edges().iter().enumerate() {
            u -= e.rate * counts[e.from] as f64;
            if u <= 0.0 {
                chosen = k;
                break;
            }
        }
        let e = net.edges()[chosen];
        counts[e.from] -= 1;
        counts[e.to] += 1;
        debug_assert_eq!(counts.iter().sum::<i64>(), total);
        debug_assert!(counts[e.from] >= 0);
        t = t_next;
        events += 1;
    }
    Ok(Trajectory { times, states, clamped_steps: 0, total_steps: events as usize })
}

fn max_exit_rate(net: &ReactionNetwork) -> f64 {
    let mut out = vec![0.0f64; net.num_nodes()];
    for e in net.edges() {
        out[e.from] += e.rate;
    }
    out.into_iter().fold(0.0, f64::max)
}

/// Fixed-step Poisson leaping; shielded edges contribute mean flux.
pub fn tau_leap(
    net: &ReactionNetwork,
    n0: &[f64],
    tau: f64,
    t_final: f64,
    seed: u64,
    mask: &ShieldingMask,
    stride: usize,
) -> Result<Trajectory> {
    check_state(net, n0)?;
    validate_mask(net, mask)?;
    let worst = max_exit_rate(net) * tau;
    if worst >= 1.0 {
        return Err(Error::TauTooLarge { tau, worst, suggested: 0.9 / max_exit_rate(net) });
    }
    let mut sim = LeapSim::new(net, n0.to_vec(), seed, 0, mask.clone());
    let steps = (t_final / tau).ceil() as u64;
    let mut traj = Recorder::new(steps, stride.max(1));
    traj.record(0.0, &sim.state);
    for step in 0..steps {
        sim.step_tau(net, tau, step);
        traj.maybe_record((step + 1) as f64 * tau, &sim.state, step + 1 == steps, step);
    }
    Ok(Trajectory {
        times: traj.times,
        states: traj.states,
        clamped_steps: sim.clamped_steps,
        total_steps: steps as usize,
    })
}

/// Multinomial discrete-time scheme of step `h`; destinations of the
/// individuals at each node are drawn jointly, so counts can never overdraw.
pub fn discrete_multinomial(
    net: &ReactionNetwork,
    n0: &[f64],
    h: f64,
    t_final: f64,
    seed: u64,
    mask: &ShieldingMask,
    stride: usize,
) -> Result<Trajectory> {
    check_state(net, n0)?;
    validate_mask(net, mask)?;
    let worst = max_exit_rate(net) * h;
    if worst > 1.0 {
        let node = worst_node(net);
        return Err(Error::StepTooLarge { h, node, suggested: 0.99 / max_exit_rate(net) });
    }
    let mut sim = LeapSim::new(net, n0.to_vec(), seed, 0, mask.clone());
    let steps = (t_final / h).ceil() as u64;
    let mut traj = Recorder::new(steps, stride.max(1));
    traj.record(0.0, &sim.state);
    for step in 0..steps {
        sim.step_multinomial(net, h, step);
        traj.maybe_record((step + 1) as f64 * h, &sim.state, step + 1 == steps, step);
    }
    Ok(Trajectory {
        times: traj.times,
        states: traj.states,
        clamped_steps: sim.clamped_steps,
        total_steps: steps as usize,
    })
}

fn worst_node(net: &ReactionNetwork) -> usize {
    let mut out = vec![0.0f64; net.num_nodes()];
    for e in net.edges() {
        out[e.from] += e.rate;
    }
    out.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(i, _)| i).unwrap_or(0)
}

fn validate_mask(net: &ReactionNetwork, mask: &ShieldingMask) -> Result<()> {
    for &k in mask {
        if k >= net.num_edges() {
            return Err(Error::IndexError { k, m: net.num_edges() });
        }
    }
    Ok(())
}

struct Recorder {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    stride: usize,
}

impl Recorder {
    fn new(steps: u64, stride: usize) -> Self {
        let cap = (steps / stride as u64 + 2) as usize;
        Self { times: Vec::with_capacity(cap), states: Vec::with_capacity(cap), stride }
    }

    fn record(&mut self, t: f64, state: &[f64]) {
        self.times.push(t);
        self.states.push(state.to_vec());
    }

    fn maybe_record(&mut self, t: f64, state: &[f64], last: bool, step: u64) {
        if (step + 1).is_multiple_of(self.stride as u64) || last {
            self.record(t, state);
        }
    }
}

/// Shared stepping machinery for the two fixed-step schemes.
struct LeapSim {
    state: Vec<f64>,
    keys: Vec<StreamKey>,
    masked: Vec<bool>,
    out_edges: Vec<Vec<usize>>,
    clamped_steps: usize,
    scratch: Vec<f64>,
}

impl LeapSim {
    fn new(net: &ReactionNetwork, state: Vec<f64>, seed: u64, trial: u64, mask: ShieldingMask) -> Self {
        let mut masked = vec![false; net.num_edges()];
        for &k in &mask {
            masked[k] = true;
        }
        let mut out_edges = vec![Vec::new(); net.num_nodes()];
        for (k, e) in net.edges().iter().enumerate() {
            out_edges[e.from].push(k);
        }
        let keys =
            (0..net.num_edges()).map(|k| StreamKey::new(seed, trial, k as u64)).collect();
        let scratch = vec![0.0; state.len()];
        Self { state, keys, masked, out_edges, clamped_steps: 0, scratch }
    }

    fn step_tau(&mut self, net: &ReactionNetwork, tau: f64, step: u64) {
        self.scratch.copy_from_slice(&self.state);
        for (k, e) in net.edges().iter().enumerate() {
            let lam = tau * e.rate * self.state[e.from].max(0.0);
            let flux = if self.masked[k] { lam } else { self.keys[k].poisson(step, 0, lam) };
            self.scratch[e.from] -= flux;
            self.scratch[e.to] += flux;
        }
        let mut clamped = false;
        for x in self.scratch.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
                clamped = true;
            }
        }
        if clamped {
            self.clamped_steps += 1;
        }
        self.state.copy_from_slice(&self.scratch);
    }

    fn step_multinomial(&mut self, net: &ReactionNetwork, h: f64, step: u64) {
        self.scratch.iter_mut().for_each(|x| *x = 0.0);
        let mut clamped = false;
        for i in 0..self.state.len() {
            let n_i = self.state[i];
            if n_i <= 0.0 {
                continue;
            }
            let n_int = n_i.floor();
            let frac = n_i - n_int;
            let mut n_rem = n_int as u64;
            let mut p_rem = 1.0f64;
            let mut outflow = 0.0f64;
            for &k in &self.out_edges[i] {
                let e = net.edges()[k];
                let p_k = e.rate * h;
                let cond = (p_k / p_rem).clamp(0.0, 1.0);
                let sampled = self.keys[k].binomial(step, 0, n_rem, cond);
                let applied = if self.masked[k] {
                    n_i * p_k
                } else {
                    sampled as f64 + frac * p_k
                };
                n_rem -= sampled;
                p_rem -= p_k;
                self.scratch[e.to] += applied;
                outflow += applied;
            }
            let mut stay = n_i - outflow;
            if stay < 0.0 {
                stay = 0.0;
                clamped = true;
            }
            self.scratch[i] += stay;
        }
        if clamped {
            self.clamped_steps += 1;
        }
        self.state.copy_from_slice(&self.scratch);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopMethod {
    TauLeap,
    Multinomial,
}

#[derive(Clone, Copy, Debug)]
pub struct PairedPopConfig {
    pub step: f64,
    pub t_final: f64,
    pub burn_in: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Stationary variance of `M^T (N_shielded - N_full)` from paired runs with
/// common random numbers per (edge, step).
pub fn population_shielding_error(
    net: &ReactionNetwork,
    m: &MeasurementVector,
    n_tot: u64,
    mask: &ShieldingMask,
    method: PopMethod,
    cfg: &PairedPopConfig,
) -> Result<f64> {
    population_shielding_error_detailed(net, m, n_tot, mask, method, cfg).map(|(v, _)| v)
}

/// As [`population_shielding_error`], also returning the standard error of
/// the variance estimate across trials.
pub fn population_shielding_error_detailed(
    net: &ReactionNetwork,
    m: &MeasurementVector,
    n_tot: u64,
    mask: &ShieldingMask,
    method: PopMethod,
    cfg: &PairedPopConfig,
) -> Result<(f64, f64)> {
    if m.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch { context: "measurement length".into() });
    }
    validate_mask(net, mask)?;
    if mask.is_empty() {
        return Ok((0.0, 0.0));
    }
    match method {
        PopMethod::TauLeap => {
            let worst = max_exit_rate(net) * cfg.step;
            if worst >= 1.0 {
                return Err(Error::TauTooLarge {
                    tau: cfg.step,
                    worst,
                    suggested: 0.9 / max_exit_rate(net),
                });
            }
        }
        PopMethod::Multinomial => {
            if max_exit_rate(net) * cfg.step > 1.0 {
                return Err(Error::StepTooLarge {
                    h: cfg.step,
                    node: worst_node(net),
                    suggested: 0.99 / max_exit_rate(net),
                });
            }
        }
    }
    let n0 = stationary_integer_state(net, n_tot)?;
    let steps = (cfg.t_final / cfg.step).ceil() as u64;
    let variances: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let full_state: Vec<f64> = n0.iter().map(|&c| c as f64).collect();
            let mut full = LeapSim::new(net, full_state.clone(), cfg.seed, trial, ShieldingMask::new());
            let mut shielded = LeapSim::new(net, full_state, cfg.seed, trial, mask.clone());
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            let mut count = 0u64;
            for step in 0..steps {
                match method {
                    PopMethod::TauLeap => {
                        full.step_tau(net, cfg.step, step);
                        shielded.step_tau(net, cfg.step, step);
                    }
                    PopMethod::Multinomial => {
                        full.step_multinomial(net, cfg.step, step);
                        shielded.step_multinomial(net, cfg.step, step);
                    }
                }
                let t = (step + 1) as f64 * cfg.step;
                if t > cfg.burn_in {
                    let mut d = 0.0;
                    for j in 0..net.num_nodes() {
                        d += m.entries[j] * (shielded.state[j] - full.state[j]);
                    }
                    sum += d;
                    sum_sq += d * d;
                    count += 1;
                }
            }
            let mean = sum / count.max(1) as f64;
            (sum_sq / count.max(1) as f64 - mean * mean).max(0.0)
        })
        .collect();
    let n = variances.len() as f64;
    let mean = variances.iter().sum::<f64>() / n;
    let stderr = if variances.len() > 1 {
        let var =
            variances.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok((mean, stderr))
}

/// Round pi * N_tot to an integer state summing exactly to N_tot.
pub fn stationary_integer_state(net: &ReactionNetwork, n_tot: u64) -> Result<Vec<u64>> {
    let pi = net.stationary_distribution()?;
    let target: Vec<f64> = pi.iter().map(|&p| p * n_tot as f64).collect();
    let mut counts: Vec<u64> = target.iter().map(|&x| x.floor() as u64).collect();
    let mut deficit = n_tot - counts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = target[a] - target[a].floor();
        let fb = target[b] - target[b].floor();
        fb.partial_cmp(&fa).unwrap()
    });
    for &i in &order {
        if deficit == 0 {
            break;
        }
        counts[i] += 1;
        deficit -= 1;
    }
    Ok(counts)
}

/// Conditional covariance of the one-step increment deviations under the
/// multinomial scheme: within a node, Cov[N_ij, N_ij'] = -N_i a_ij a_ij' h^2
/// for j != j' and `V[N_ij] = N_i a_ij h (1 - a_ij h)`; across nodes, zero.
pub fn multinomial_increment_covariance(
    net: &ReactionNetwork,
    state: &[f64],
    h: f64,
) -> DMatrix<f64> {
    let n = net.num_nodes();
    let m = net.num_edges();
    let mut cov = DMatrix::zeros(n, n);
    let add = |cov: &mut DMatrix<f64>, ka: &crate::graph::Edge, kb: &crate::graph::Edge, c: f64| {
        // contribution c * zeta_a zeta_b^T + symmetric handled by loop order
        for (ia, sa) in [(ka.from, -1.0), (ka.to, 1.0)] {
            for (ib, sb) in [(kb.from, -1.0), (kb.to, 1.0)] {
                cov[(ia, ib)] += c * sa * sb;
            }
        }
    };
    for a in 0..m {
        let ea = net.edges()[a];
        let pa = ea.rate * h;
        for b in 0..m {
            let eb = net.edges()[b];
            if ea.from != eb.from {
                continue;
            }
            let c = if a == b {
                state[ea.from] * pa * (1.0 - pa)
            } else {
                -state[ea.from] * pa * (eb.rate * h)
            };
            add(&mut cov, &ea, &eb, c);
        }
    }
    cov
}

/// Monte Carlo estimate of the single-step conditional moments at a fixed
/// state: per-edge count means/variances and the covariance matrix of the
/// increment deviations, with standard errors.
pub struct StepMoments {
    pub samples: usize,
    pub mean_counts: Vec<f64>,
    pub mean_counts_stderr: Vec<f64>,
    pub var_counts: Vec<f64>,
    pub var_counts_stderr: Vec<f64>,
    pub cov_increments: DMatrix<f64>,
    pub cov_increments_stderr: DMatrix<f64>,
    /// Sampled covariance between a designated pair of counts (edge_a, edge_b).
    pub count_pair_cov: Option<(usize, usize, f64, f64)>,
}

pub fn estimate_multinomial_step_moments(
    net: &ReactionNetwork,
    state: &[u64],
    h: f64,
    samples: usize,
    seed: u64,
    count_pair: Option<(usize, usize)>,
) -> Result<StepMoments> {
    let state_f: Vec<f64> = state.iter().map(|&c| c as f64).collect();
    check_state(net, &state_f)?;
    if max_exit_rate(net) * h > 1.0 {
        return Err(Error::StepTooLarge { h, node: worst_node(net), suggested: 0.99 / max_exit_rate(net) });
    }
    let n = net.num_nodes();
    let m = net.num_edges();
    let keys: Vec<StreamKey> = (0..m).map(|k| StreamKey::new(seed, 0, k as u64)).collect();
    let mut out_edges = vec![Vec::new(); n];
    for (k, e) in net.edges().iter().enumerate() {
        out_edges[e.from].push(k);
    }
    let expected: Vec<f64> =
        net.edges().iter().map(|e| state_f[e.from] * e.rate * h).collect();

    let mut s_counts = vec![0.0f64; m];
    let mut s_counts_sq = vec![0.0f64; m];
    let mut s_counts_quad = vec![0.0f64; m];
    let mut s_dd = DMatrix::<f64>::zeros(n, n);
    let mut s_dd_sq = DMatrix::<f64>::zeros(n, n);
    let mut s_pair = 0.0f64;
    let mut s_pair_sq = 0.0f64;

    let mut counts = vec![0.0f64; m];
    for s in 0..samples as u64 {
        // one multinomial step from the fixed state
        for i in 0..n {
            let mut n_rem = state[i];
            let mut p_rem = 1.0f64;
            for &k in &out_edges[i] {
                let p_k = net.edges()[k].rate * h;
                let cond = (p_k / p_rem).clamp(0.0, 1.0);
                let c = keys[k].binomial(s, 0, n_rem, cond);
                counts[k] = c as f64;
                n_rem -= c;
                p_rem -= p_k;
            }
        }
        for k in 0..m {
            let c = counts[k];
            s_counts[k] += c;
            s_counts_sq[k] += c * c;
            let d = c - expected[k];
            s_counts_quad[k] += d * d * d * d;
        }
        // increment deviations per node
        let mut dd = vec![0.0f64; n];
        for (k, e) in net.edges().iter().enumerate() {
            let dev = counts[k] - expected[k];
            dd[e.from] -= dev;
            dd[e.to] += dev;
        }
        for i in 0..n {
            for j in 0..n {
                let prod = dd[i] * dd[j];
                s_dd[(i, j)] += prod;
                s_dd_sq[(i, j)] += prod * prod;
            }
        }
        if let Some((a, b)) = count_pair {
            let prod = (counts[a] - expected[a]) * (counts[b] - expected[b]);
            s_pair += prod;
            s_pair_sq += prod * prod;
        }
    }

    let ns = samples as f64;
    let mean_counts: Vec<f64> = s_counts.iter().map(|s| s / ns).collect();
    let var_counts: Vec<f64> = (0..m)
        .map(|k| s_counts_sq[k] / ns - mean_counts[k] * mean_counts[k])
        .collect();
    let mean_counts_stderr: Vec<f64> =
        (0..m).map(|k| (var_counts[k].max(0.0) / ns).sqrt()).collect();
    // stderr of the variance estimate from the fourth central moment
    let var_counts_stderr: Vec<f64> = (0..m)
        .map(|k| {
            let m4 = s_counts_quad[k] / ns;
            let v = var_counts[k];
            ((m4 - v * v).max(0.0) / ns).sqrt()
        })
        .collect();
    let cov_increments = s_dd.map(|x| x / ns);
    let mut cov_increments_stderr = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mean = cov_increments[(i, j)];
            let var = (s_dd_sq[(i, j)] / ns - mean * mean).max(0.0);
            cov_increments_stderr[(i, j)] = (var / ns).sqrt();
        }
    }
    let count_pair_cov = count_pair.map(|(a, b)| {
        let mean = s_pair / ns;
        let var = (s_pair_sq / ns - mean * mean).max(0.0);
        (a, b, mean, (var / ns).sqrt())
    });
    Ok(StepMoments {
        samples,
        mean_counts,
        mean_counts_stderr,
        var_counts,
        var_counts_stderr,
        cov_increments,
        cov_increments_stderr,
        count_pair_cov,
    })
}
