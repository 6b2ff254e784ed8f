//! Voltage-parameterized Hodgkin-Huxley channel graphs: the 5-state
//! potassium chain and the 8-state sodium scheme (two 4-state activation
//! chains linked by inactivation transitions).
//!
//! Under voltage clamp the rates are constant, the channel population is a
//! stationary process, and the noise amplitudes follow the stationary-flux
//! rule sigma_k = sqrt(Nbar_{i(k)} alpha_k).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Edge, MeasurementVector, NoiseSpec, ReactionNetwork};
use crate::importance::edge_importance;
use crate::spectral::eigendecompose;

/// Transition rates (1/ms) at a membrane voltage (mV).
#[derive(Clone, Copy, Debug)]
pub struct RateSet {
    pub v: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
    pub alpha_m: f64,
    pub beta_m: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
}

/// x / (1 - e^{-x/scale}) evaluated stably through the removable singularity
/// at x = 0.
fn ratio_expm1(x: f64, scale: f64) -> f64 {
    let u = x / scale;
    if u.abs() < 1e-6 {
        // x / (1 - e^-u) = scale / (1 - u/2 + u^2/6 - ...)^-1 expansion
        scale * (1.0 + u / 2.0 + u * u / 12.0)
    } else {
        x / (-(-u).exp_m1())
    }
}

/// Evaluate the six voltage-dependent rate formulas.
pub fn rates(v: f64) -> RateSet {
    RateSet {
        v,
        alpha_n: 0.01 * ratio_expm1(v + 55.0, 10.0),
        beta_n: 0.125 * (-(v + 65.0) / 80.0).exp(),
        alpha_m: 0.1 * ratio_expm1(v + 40.0, 10.0),
        beta_m: 4.0 * (-(v + 65.0) / 18.0).exp(),
        alpha_h: 0.07 * (-(v + 65.0) / 20.0).exp(),
        beta_h: 1.0 / (1.0 + (-(v + 35.0) / 10.0).exp()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    K,
    Na,
}

impl ChannelKind {
    pub fn reversal_potential(&self) -> f64 {
        match self {
            ChannelKind::K => -77.0,
            ChannelKind::Na => 45.0,
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            ChannelKind::K => 5,
            ChannelKind::Na => 8,
        }
    }

    pub fn conducting_state(&self) -> usize {
        self.num_states() - 1
    }
}

/// A channel graph frozen at one voltage.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub v: f64,
    pub n_tot: f64,
    pub network: ReactionNetwork,
    pub measurement: MeasurementVector,
    pub v_rev: f64,
    /// Unitary conductance; fixed at 1 (a choice of units).
    pub g_unit: f64,
}

/// Potassium edge table, 0-based:
/// 0: 0->1 (4a), 1: 1->0 (b), 2: 1->2 (3a), 3: 2->1 (2b),
/// 4: 2->3 (2a), 5: 3->2 (3b), 6: 3->4 (a),  7: 4->3 (4b).
fn k_edges(r: &RateSet) -> Vec<Edge> {
    let (a, b) = (r.alpha_n, r.beta_n);
    vec![
        Edge { from: 0, to: 1, rate: 4.0 * a },
        Edge { from: 1, to: 0, rate: b },
        Edge { from: 1, to: 2, rate: 3.0 * a },
        Edge { from: 2, to: 1, rate: 2.0 * b },
        Edge { from: 2, to: 3, rate: 2.0 * a },
        Edge { from: 3, to: 2, rate: 3.0 * b },
        Edge { from: 3, to: 4, rate: a },
        Edge { from: 4, to: 3, rate: 4.0 * b },
    ]
}

/// Sodium edge table, 0-based. States 0-3 carry h closed (m = 0..3 open
/// gates), states 4-7 carry h open; state 7 conducts.
/// Edges 0-5: m-transitions of the h-closed chain; 6-11: m-transitions of the
/// h-open chain (10/11 are the 6<->7 pair); 12-19: h-transitions by state
/// (18/19 are the 3<->7 pair).
fn na_edges(r: &RateSet) -> Vec<Edge> {
    let (am, bm, ah, bh) = (r.alpha_m, r.beta_m, r.alpha_h, r.beta_h);
    let mut edges = Vec::with_capacity(20);
    for base in [0usize, 4] {
        edges.push(Edge { from: base, to: base + 1, rate: 3.0 * am });
        edges.push(Edge { from: base + 1, to: base, rate: bm });
        edges.push(Edge { from: base + 1, to: base + 2, rate: 2.0 * am });
        edges.push(Edge { from: base + 2, to: base + 1, rate: 2.0 * bm });
        edges.push(Edge { from: base + 2, to: base + 3, rate: am });
        edges.push(Edge { from: base + 3, to: base + 2, rate: 3.0 * bm });
    }
    for i in 0..4usize {
        edges.push(Edge { from: i, to: i + 4, rate: ah });
        edges.push(Edge { from: i + 4, to: i, rate: bh });
    }
    edges
}

/// Build the channel network at voltage `v` with `n_tot` channels.
pub fn build_channel(kind: ChannelKind, v: f64, n_tot: f64) -> Result<ChannelModel> {
    if !v.is_finite() {
        return Err(Error::InvalidInput { context: "voltage must be finite".into() });
    }
    if !(n_tot > 0.0) {
        return Err(Error::InvalidInput { context: "N_tot must be positive".into() });
    }
    let r = rates(v);
    let (n, edges) = match kind {
        ChannelKind::K => (5, k_edges(&r)),
        ChannelKind::Na => (8, na_edges(&r)),
    };
    let network = ReactionNetwork::new(n, edges)?;
    let mut m = vec![0.0; n];
    m[kind.conducting_state()] = 1.0;
    Ok(ChannelModel {
        kind,
        v,
        n_tot,
        network,
        measurement: MeasurementVector::new(m)?,
        v_rev: kind.reversal_potential(),
        g_unit: 1.0,
    })
}

impl ChannelModel {
    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec::StationaryFlux { population: self.n_tot }
    }
}

/// Closed-form stationary law of the potassium chain: Binom(4, a/(a+b)).
pub fn k_stationary_binomial(v: f64) -> Vec<f64> {
    let r = rates(v);
    let x = r.alpha_n / (r.alpha_n + r.beta_n);
    (0..5).map(|i| binom(4, i) * x.powi(i as i32) * (1.0 - x).powi(4 - i as i32)).collect()
}

/// Closed-form stationary law of the sodium scheme:
/// Binom(3, am/(am+bm)) (x) Bernoulli(ah/(ah+bh)).
pub fn na_stationary_product(v: f64) -> Vec<f64> {
    let r = rates(v);
    let y = r.alpha_m / (r.alpha_m + r.beta_m);
    let z = r.alpha_h / (r.alpha_h + r.beta_h);
    let mut pi = Vec::with_capacity(8);
    for &h_open in &[false, true] {
        for m_open in 0..4usize {
            let pm = binom(3, m_open) * y.powi(m_open as i32) * (1.0 - y).powi(3 - m_open as i32);
            pi.push(pm * if h_open { z } else { 1.0 - z });
        }
    }
    pi
}

fn binom(n: u32, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n as f64 - i as f64) / (i as f64 + 1.0);
    }
    c
}

/// Per-edge importance curves over a voltage grid.
#[derive(Clone, Debug)]
pub struct VoltageSweep {
    pub kind: ChannelKind,
    pub v: Vec<f64>,
    /// Edge endpoints, voltage-independent.
    pub edges: Vec<(usize, usize)>,
    /// `rk[grid_point][edge]`
    pub rk: Vec<Vec<f64>>,
    pub v_rev: f64,
}

impl VoltageSweep {
    /// R_k(V) * (V - V_rev)^2 with unit single-channel conductance.
    pub fn current_variance(&self) -> Vec<Vec<f64>> {
        self.v
            .iter()
            .zip(&self.rk)
            .map(|(&v, row)| {
                let drive = (v - self.v_rev) * (v - self.v_rev);
                row.iter().map(|r| r * drive).collect()
            })
            .collect()
    }

    /// Index of the maximal R_k at each grid point.
    pub fn argmax_per_voltage(&self) -> Vec<usize> {
        self.rk
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                    .unwrap()
            })
            .collect()
    }
}

/// Uniform voltage grid, inclusive of both ends.
pub fn voltage_grid(vmin: f64, vmax: f64, dv: f64) -> Result<Vec<f64>> {
    if !(dv > 0.0) || !(vmax > vmin) {
        return Err(Error::InvalidInput { context: "need vmax > vmin and dv > 0".into() });
    }
    let steps = ((vmax - vmin) / dv).round() as usize;
    Ok((0..=steps).map(|i| vmin + i as f64 * dv).collect())
}

/// Non-symmetric edge importances across the grid with stationary-flux noise.
pub fn voltage_sweep_importance(
    kind: ChannelKind,
    v_grid: &[f64],
    n_tot: f64,
) -> Result<VoltageSweep> {
    if v_grid.is_empty() {
        return Err(Error::InvalidInput { context: "empty voltage grid".into() });
    }
    let first = build_channel(kind, v_grid[0], n_tot)?;
    let edges: Vec<(usize, usize)> =
        first.network.edges().iter().map(|e| (e.from, e.to)).collect();
    let rk: Vec<Vec<f64>> = v_grid
        .par_iter()
        .map(|&v| -> Result<Vec<f64>> {
            let model = build_channel(kind, v, n_tot)?;
            let l = model.network.laplacian();
            let eig = eigendecompose(&l, false).map_err(|e| match e {
                Error::DefectiveMatrix { cluster } => Error::InvalidInput {
                    context: format!("defective spectrum at V={v} (cluster {cluster:?})"),
                },
                other => other,
            })?;
            let report =
                edge_importance(&model.network, &eig, &model.measurement, &model.noise_spec())?;
            Ok(report.values)
        })
        .collect::<Result<_>>()?;
    Ok(VoltageSweep { kind, v: v_grid.to_vec(), edges, rk, v_rev: kind.reversal_potential() })
}

/// Stationary occupancy of each state across the grid.
pub fn occupancy_curves(kind: ChannelKind, v_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    v_grid
        .par_iter()
        .map(|&v| -> Result<Vec<f64>> {
            let model = build_channel(kind, v, 1.0)?;
            Ok(model.network.stationary_distribution()?.iter().copied().collect())
        })
        .collect()
}

/// CSV with one row per (V, edge): importance and current variance together.
pub fn sweep_csv(sweep: &VoltageSweep) -> String {
    let cur = sweep.current_variance();
    let mut out = String::from("V,k,from,to,R_k,current_variance\n");
    for (gi, &v) in sweep.v.iter().enumerate() {
        for (k, &(from, to)) in sweep.edges.iter().enumerate() {
            out.push_str(&format!(
                "{v:.16e},{k},{from},{to},{:.16e},{:.16e}\n",
                sweep.rk[gi][k], cur[gi][k]
            ));
        }
    }
    out
}

pub fn occupancy_csv(v_grid: &[f64], occ: &[Vec<f64>]) -> String {
    let mut out = String::from("V,state,probability\n");
    for (gi, &v) in v_grid.iter().enumerate() {
        for (s, &p) in occ[gi].iter().enumerate() {
            out.push_str(&format!("{v:.16e},{s},{p:.16e}\n"));
        }
    }
    out
}
