//! Per-edge deficiency contributions R_k, rankings and reduction plans.
//!
//! Dropping the fluctuations of edge set E' from the noise matrix leaves the
//! mean dynamics intact and costs a stationary measurement-projected variance
//! of exactly `sum_{k in E'} R_k`, where
//!
//!   R_k = sigma_k^2 sum_{i,j>=2} (-1/(li+lj)) (M^T v_i)(w_i^T z_k)(z_k^T w_j)(v_j^T M)
//!
//! over the nonzero modes of the Laplacian. For symmetric networks w = v.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::graph::{MeasurementVector, NoiseSpec, ReactionNetwork};
use crate::spectral::EigenSystem;

/// Per-edge importance values with the descending ranking.
#[derive(Clone, Debug)]
pub struct EdgeImportanceReport {
    pub values: Vec<f64>,
    /// Edge indices sorted by descending R_k; ties broken by lower index.
    pub ranking: Vec<usize>,
    pub measurement: MeasurementVector,
    pub sigmas: Vec<f64>,
}

/// A chosen set of edges to neglect and the analytic error it costs.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionPlan {
    /// Neglected edge indices, ascending.
    pub neglected: Vec<usize>,
    pub predicted_error: f64,
}

impl ReductionPlan {
    pub fn empty() -> Self {
        Self { neglected: Vec::new(), predicted_error: 0.0 }
    }
}

/// Compute R_k for every edge.
pub fn edge_importance(
    net: &ReactionNetwork,
    eig: &EigenSystem,
    m: &MeasurementVector,
    spec: &NoiseSpec,
) -> Result<EdgeImportanceReport> {
    let n = net.num_nodes();
    if eig.dim() != n || m.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!("network n={n}, eigen dim={}, measurement len={}", eig.dim(), m.len()),
        });
    }
    let sigmas = spec.sigmas(net)?;
    let modes = n - 1;

    // b_i = M^T v_i over nonzero modes
    let b: Vec<Complex<f64>> = (0..modes)
        .map(|i| {
            let v = eig.right.column(i + 1);
            (0..n).map(|r| Complex::new(m.entries[r], 0.0) * v[r]).sum()
        })
        .collect();
    // g[i][j] = -(b_i b_j)/(li + lj)
    let mut g = vec![Complex::new(0.0, 0.0); modes * modes];
    for i in 0..modes {
        for j in 0..modes {
            let denom = eig.eigenvalues[i + 1] + eig.eigenvalues[j + 1];
            if denom.norm() <= 1e-12 * eig.scale.max(1.0) {
                return Err(Error::SpectralSingularity);
            }
            g[i * modes + j] = -(b[i] * b[j]) / denom;
        }
    }

    let mut values = Vec::with_capacity(net.num_edges());
    let mut max_magnitude = 0.0f64;
    for (k, e) in net.edges().iter().enumerate() {
        // a_i = w_i^T zeta_k = w_i(to) - w_i(from)
        let a: Vec<Complex<f64>> =
            (0..modes).map(|i| eig.left[(e.to, i + 1)] - eig.left[(e.from, i + 1)]).collect();
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..modes {
            let ai = a[i];
            if ai.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..modes {
                acc += g[i * modes + j] * ai * a[j];
            }
        }
        let r = sigmas[k] * sigmas[k] * acc.re;
        let imag = sigmas[k] * sigmas[k] * acc.im;
        max_magnitude = max_magnitude.max(r.abs());
        if imag.abs() > 1e-10 * max_magnitude.max(1.0) {
            return Err(Error::SpectralSingularity);
        }
        values.push(r);
    }
    // rounding may leave tiny negatives
    let floor = -1e-10 * max_magnitude.max(1.0);
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::InvalidInput {
                    context: format!("negative edge importance {v} beyond rounding"),
                });
            }
            *v = 0.0;
        }
    }
    let mut ranking: Vec<usize> = (0..values.len()).collect();
    ranking.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b))
    });
    Ok(EdgeImportanceReport { values, ranking, measurement: m.clone(), sigmas })
}

/// Total predicted deficiency of a plan: additive over the neglected edges.
pub fn total_deficiency(report: &EdgeImportanceReport, plan: &ReductionPlan) -> Result<f64> {
    let mut sum = 0.0;
    for &k in &plan.neglected {
        if k >= report.values.len() {
            return Err(Error::IndexError { k, m: report.values.len() });
        }
        sum += report.values[k];
    }
    Ok(sum)
}

/// Neglect the `budget` smallest-R_k edges; minimal by additivity of R.
pub fn optimal_reduction(report: &EdgeImportanceReport, budget: usize) -> Result<ReductionPlan> {
    let m = report.values.len();
    if budget > m {
        return Err(Error::InvalidInput {
            context: format!("budget {budget} exceeds edge count {m}"),
        });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        report.values[a].partial_cmp(&report.values[b]).unwrap().then(a.cmp(&b))
    });
    let mut neglected: Vec<usize> = order.into_iter().take(budget).collect();
    neglected.sort_unstable();
    let predicted_error = neglected.iter().map(|&k| report.values[k]).sum();
    Ok(ReductionPlan { neglected, predicted_error })
}

/// Leading-order expected R_k for a binary measurement on a random graph
/// ensemble with mean edge weight mu_a: `sigma^2 |M^T zeta_k| / (n * 2 mu_a)`.
/// Unit noise, matching the ensemble convention.
pub fn theorem2_prediction(
    net: &ReactionNetwork,
    m: &MeasurementVector,
    k: usize,
    mu_a: f64,
) -> Result<f64> {
    if !m.is_binary() {
        return Err(Error::InvalidInput { context: "measurement must be binary".into() });
    }
    net.edge(k)?;
    let c = 2.0 * mu_a;
    Ok(m.stoich_projection(net, k).abs() / (net.num_nodes() as f64 * c))
}

/// Graded generalization: `sigma^2 (M^T zeta_k)^2 / (n * 2 mu_a)`.
pub fn graded_prediction(
    net: &ReactionNetwork,
    m: &MeasurementVector,
    k: usize,
    mu_a: f64,
) -> Result<f64> {
    net.edge(k)?;
    let c = 2.0 * mu_a;
    let x = m.stoich_projection(net, k);
    Ok(x * x / (net.num_nodes() as f64 * c))
}

/// CSV export: one row per edge with its rank (0 = most important).
pub fn importance_csv(net: &ReactionNetwork, report: &EdgeImportanceReport) -> String {
    let mut rank_of = vec![0usize; report.values.len()];
    for (rank, &k) in report.ranking.iter().enumerate() {
        rank_of[k] = rank;
    }
    let mut out = String::from("k,from,to,rate,sigma,R_k,rank\n");
    for (k, e) in net.edges().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{}\n",
            k, e.from, e.to, e.rate, report.sigmas[k], report.values[k], rank_of[k]
        ));
    }
    out
}
