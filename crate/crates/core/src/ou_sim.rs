//! Coupled simulation of the full and reduced OU processes.
//!
//! Both processes are integrated by Euler-Maruyama on the *same* per-edge
//! Wiener increments; the reduced process simply zeroes the noise columns of
//! the neglected edges. The measurement-projected deficiency then estimates
//! the analytic error `sum_{k in E'} R_k` directly.
//!
//! Noise streams are keyed by (seed, trial, edge, step), so a trial is
//! bitwise reproducible and the coupling is exact by construction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{MeasurementVector, NoiseSpec, ReactionNetwork};
use crate::importance::ReductionPlan;
use crate::rng::StreamKey;
use crate::spectral::eigendecompose;

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub trials: usize,
    /// Keep every `stride`-th step in the stored path (statistics see the
    /// same samples). 1 keeps everything.
    pub stride: usize,
    /// Also store full state snapshots, not just measurement projections.
    pub store_states: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64, burn_in: f64, seed: u64, trials: usize) -> Self {
        Self { dt, t_final, burn_in, seed, trials, stride: 1, store_states: false }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > self.burn_in) || self.burn_in < 0.0 {
            return Err(Error::InvalidInput {
                context: format!(
                    "need dt > 0 and t_final > burn_in >= 0 (dt={}, t_final={}, burn_in={})",
                    self.dt, self.t_final, self.burn_in
                ),
            });
        }
        if self.trials == 0 || self.stride == 0 {
            return Err(Error::InvalidInput { context: "trials and stride must be >= 1".into() });
        }
        Ok(())
    }
}

/// One coupled trajectory pair, decimated by `stride`.
#[derive(Clone, Debug)]
pub struct PairedOUPath {
    pub times: Vec<f64>,
    /// Y = M^T X at the stored times.
    pub y: Vec<f64>,
    /// Y~ = M^T X~ at the stored times.
    pub y_tilde: Vec<f64>,
    /// Full states, present when `store_states` was set.
    pub x: Option<Vec<DVector<f64>>>,
    pub x_tilde: Option<Vec<DVector<f64>>>,
    pub measurement: MeasurementVector,
    pub trial: u64,
    /// |Re lambda_2| of the generating Laplacian, for horizon checks.
    pub relaxation_rate: f64,
    /// Max |1^T X| drift observed over the whole run.
    pub conservation_drift: f64,
}

impl PairedOUPath {
    /// Measurement-projected deficiency M^T U = Y~ - Y at the stored times.
    pub fn u_measured(&self) -> Vec<f64> {
        self.y.iter().zip(&self.y_tilde).map(|(a, b)| b - a).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DeficiencyStats {
    pub empirical_mse: f64,
    pub stderr: f64,
    /// False when the usable horizon is shorter than 20 relaxation times.
    pub horizon_ok: bool,
}

struct System {
    l: DMatrix<f64>,
    /// (from, to, sigma) per edge.
    cols: Vec<(usize, usize, f64)>,
    kept: Vec<bool>,
    relaxation_rate: f64,
}

fn build_system(
    net: &ReactionNetwork,
    spec: &NoiseSpec,
    plan: &ReductionPlan,
    dt: f64,
) -> Result<System> {
    let sigmas = spec.sigmas(net)?;
    let mut kept = vec![true; net.num_edges()];
    for &k in &plan.neglected {
        if k >= kept.len() {
            return Err(Error::IndexError { k, m: kept.len() });
        }
        kept[k] = false;
    }
    let l = net.laplacian();
    let eig = eigendecompose(&l, false)?;
    let stiff = eig.stiffest_rate();
    if dt * stiff >= 0.5 {
        return Err(Error::StabilityError { dt, suggested: 0.45 / stiff });
    }
    let cols = net.edges().iter().map(|e| (e.from, e.to, 0.0)).zip(sigmas).map(
        |((from, to, _), s)| (from, to, s),
    ).collect();
    Ok(System { l, cols, kept, relaxation_rate: eig.relaxation_rate() })
}

fn run_trial(
    sys: &System,
    m: &MeasurementVector,
    cfg: &SimConfig,
    trial: u64,
) -> PairedOUPath {
    let n = sys.l.nrows();
    let steps = (cfg.t_final / cfg.dt).round() as u64;
    let sqrt_dt = cfg.dt.sqrt();
    let keys: Vec<StreamKey> =
        (0..sys.cols.len()).map(|k| StreamKey::new(cfg.seed, trial, k as u64)).collect();

    let mut x = DVector::<f64>::zeros(n);
    let mut xt = DVector::<f64>::zeros(n);
    let mut drift = DVector::<f64>::zeros(n);
    let stored = (steps / cfg.stride as u64 + 2) as usize;
    let mut times = Vec::with_capacity(stored);
    let mut y = Vec::with_capacity(stored);
    let mut y_tilde = Vec::with_capacity(stored);
    let mut xs = cfg.store_states.then(|| Vec::with_capacity(stored));
    let mut xts = cfg.store_states.then(|| Vec::with_capacity(stored));
    let mut conservation_drift = 0.0f64;

    let record = |t: f64,
                      x: &DVector<f64>,
                      xt: &DVector<f64>,
                      times: &mut Vec<f64>,
                      y: &mut Vec<f64>,
                      yt: &mut Vec<f64>,
                      xs: &mut Option<Vec<DVector<f64>>>,
                      xts: &mut Option<Vec<DVector<f64>>>| {
        times.push(t);
        y.push(m.entries.dot(x));
        yt.push(m.entries.dot(xt));
        if let Some(v) = xs.as_mut() {
            v.push(x.clone());
        }
        if let Some(v) = xts.as_mut() {
            v.push(xt.clone());
        }
    };

    record(0.0, &x, &xt, &mut times, &mut y, &mut y_tilde, &mut xs, &mut xts);
    for step in 0..steps {
        drift.gemv(1.0, &sys.l, &x, 0.0);
        x.axpy(cfg.dt, &drift, 1.0);
        drift.gemv(1.0, &sys.l, &xt, 0.0);
        xt.axpy(cfg.dt, &drift, 1.0);
        for (k, &(from, to, sigma)) in sys.cols.iter().enumerate() {
            let dw = sqrt_dt * keys[k].normal(step, 0);
            let amp = sigma * dw;
            x[from] -= amp;
            x[to] += amp;
            if sys.kept[k] {
                xt[from] -= amp;
                xt[to] += amp;
            }
        }
        if (step + 1).is_multiple_of(cfg.stride as u64) || step + 1 == steps {
            let t = (step + 1) as f64 * cfg.dt;
            record(t, &x, &xt, &mut times, &mut y, &mut y_tilde, &mut xs, &mut xts);
            conservation_drift = conservation_drift.max(x.sum().abs()).max(xt.sum().abs());
        }
    }

    PairedOUPath {
        times,
        y,
        y_tilde,
        x: xs,
        x_tilde: xts,
        measurement: m.clone(),
        trial,
        relaxation_rate: sys.relaxation_rate,
        conservation_drift,
    }
}

/// Simulate one coupled pair (trial 0 of the configuration).
pub fn simulate_pair(
    net: &ReactionNetwork,
    m: &MeasurementVector,
    spec: &NoiseSpec,
    plan: &ReductionPlan,
    cfg: &SimConfig,
) -> Result<PairedOUPath> {
    cfg.validate()?;
    if m.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch { context: "measurement length".into() });
    }
    let sys = build_system(net, spec, plan, cfg.dt)?;
    Ok(run_trial(&sys, m, cfg, 0))
}

/// Simulate all trials of the configuration, in parallel, deterministically
/// ordered by trial index.
pub fn simulate_ensemble(
    net: &ReactionNetwork,
    m: &MeasurementVector,
    spec: &NoiseSpec,
    plan: &ReductionPlan,
    cfg: &SimConfig,
) -> Result<Vec<PairedOUPath>> {
    cfg.validate()?;
    if m.len() != net.num_nodes() {
        return Err(Error::DimensionMismatch { context: "measurement length".into() });
    }
    let sys = build_system(net, spec, plan, cfg.dt)?;
    Ok((0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(&sys, m, cfg, trial))
        .collect())
}

/// Time-and-trial average of (M^T U)^2 after burn-in, with the standard error
/// across trials.
pub fn deficiency_stats(
    paths: &[PairedOUPath],
    m: &MeasurementVector,
    burn_in: f64,
) -> Result<DeficiencyStats> {
    let per_trial = per_trial_stat(paths, m, burn_in, |y, yt| {
        let u = yt - y;
        u * u
    })?;
    let (mean, stderr) = mean_stderr(&per_trial);
    let horizon_ok = paths.iter().all(|p| {
        let t_final = p.times.last().copied().unwrap_or(0.0);
        (t_final - burn_in) * p.relaxation_rate >= 20.0
    });
    Ok(DeficiencyStats { empirical_mse: mean, stderr, horizon_ok })
}

/// Mean of M^T U per trial (should vanish), with its standard error.
pub fn deficiency_mean(
    paths: &[PairedOUPath],
    m: &MeasurementVector,
    burn_in: f64,
) -> Result<(f64, f64)> {
    let per_trial = per_trial_stat(paths, m, burn_in, |y, yt| yt - y)?;
    Ok(mean_stderr(&per_trial))
}

/// Empirical stationary variance of Y = M^T X after burn-in.
pub fn variance_estimate(
    paths: &[PairedOUPath],
    m: &MeasurementVector,
    burn_in: f64,
) -> Result<f64> {
    let means = per_trial_stat(paths, m, burn_in, |y, _| y)?;
    let sqs = per_trial_stat(paths, m, burn_in, |y, _| y * y)?;
    let v: Vec<f64> =
        means.iter().zip(&sqs).map(|(mu, s2)| (s2 - mu * mu).max(0.0)).collect();
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn per_trial_stat(
    paths: &[PairedOUPath],
    m: &MeasurementVector,
    burn_in: f64,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    if paths.is_empty() {
        return Err(Error::InvalidInput { context: "empty path ensemble".into() });
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        if p.measurement != *m {
            return Err(Error::DimensionMismatch {
                context: "measurement differs from the one used in simulation".into(),
            });
        }
        let mut acc = 0.0;
        let mut count = 0usize;
        for (i, &t) in p.times.iter().enumerate() {
            if t > burn_in {
                acc += f(p.y[i], p.y_tilde[i]);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidInput {
                context: "no samples after burn-in".into(),
            });
        }
        out.push(acc / count as f64);
    }
    Ok(out)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
