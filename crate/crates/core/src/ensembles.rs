//! Symmetric Erdos-Renyi ensemble experiments: eigenvector moment scalings,
//! the S-statistic, the two-cluster structure of the edge importances under a
//! binary measurement, and the graded-measurement quadratic law.
//!
//! Pairwise and fourth-order eigenvector moments are evaluated as exact
//! averages over all index tuples via power sums of the eigenvector
//! components; this reproduces the near-cancellations (orthogonality to the
//! neutral mode, orthonormality across modes) that random tuple subsampling
//! would drown in Monte Carlo noise.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Edge, MeasurementVector, NoiseSpec, ReactionNetwork};
use crate::importance::edge_importance;
use crate::rng::StreamKey;
use crate::spectral::eigendecompose;

#[derive(Clone, Copy, Debug)]
pub struct ErConfig {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct ErSample {
    pub network: ReactionNetwork,
    pub rejections: usize,
}

/// Draw one symmetric ER graph with unit rates on both directions of every
/// included pair; disconnected draws are rejected and resampled.
pub fn sample_er(n: usize, p: f64, seed: u64) -> Result<ErSample> {
    if n < 3 || !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput { context: format!("bad ER parameters n={n}, p={p}") });
    }
    const MAX_ATTEMPTS: usize = 1000;
    for attempt in 0..MAX_ATTEMPTS {
        let key = StreamKey::new(seed, attempt as u64, 0);
        let mut edges = Vec::new();
        let mut pair = 0u64;
        for i in 0..n {
            for j in (i + 1)..n {
                if key.uniform(pair, 0) < p {
                    edges.push(Edge { from: i, to: j, rate: 1.0 });
                    edges.push(Edge { from: j, to: i, rate: 1.0 });
                }
                pair += 1;
            }
        }
        match ReactionNetwork::new(n, edges) {
            Ok(network) => return Ok(ErSample { network, rejections: attempt }),
            Err(Error::IrreducibleViolation) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ConnectivityError { attempts: MAX_ATTEMPTS })
}

/// Exact full-index moment averages for one sampled graph at one size.
#[derive(Clone, Copy, Debug)]
pub struct MomentSample {
    pub n: usize,
    pub p: f64,
    pub samples: usize,
    /// E[v_i(l)^4]
    pub e_v4: f64,
    /// |E[v_i(l) v_i(l')]|, l != l'
    pub e_cross_ii: f64,
    /// |E[v_i(l) v_j(l')]|, i != j
    pub e_cross_ij: f64,
    /// E[v_i(l)^2 v_i(l')^2], l != l'
    pub e_sq_sq: f64,
    /// |E[v_i(l1)^2 v_i(l2) v_i(l3)]|, distinct components
    pub e_third_sq: f64,
    /// |E[v_i(l1) v_i(l2) v_i(l3) v_i(l4)]|, distinct components
    pub e_fourth_distinct: f64,
}

/// Moment table over a size grid plus the fitted exponent q in
/// E[v^4] ~ n^-q.
#[derive(Clone, Debug)]
pub struct MomentReport {
    pub rows: Vec<MomentSample>,
    pub q_fit: f64,
}

/// Estimate the A2-A5 moment quantities at one size, averaging the exact
/// per-graph index sums over `samples` independent graphs. Eigenvector signs
/// are randomized before averaging.
pub fn eigenvector_moments(n: usize, p: f64, samples: usize, seed: u64) -> Result<MomentSample> {
    if samples == 0 {
        return Err(Error::InvalidInput { context: "need at least one sample".into() });
    }
    let per_sample: Vec<[f64; 6]> = (0..samples as u64)
        .into_par_iter()
        .map(|s| -> Result<[f64; 6]> {
            let g = sample_er(n, p, mix_seed(seed, s))?;
            let l = g.network.laplacian();
            let eig = eigendecompose(&l, true)?;
            let sign_key = StreamKey::new(seed, s, 0xf1ee);
            let nf = n as f64;
            let modes = n - 1;
            let mut acc = [0.0f64; 6];
            let mut p1s = Vec::with_capacity(modes);
            let mut vs: Vec<DVector<f64>> = Vec::with_capacity(modes);
            for i in 1..n {
                let mut v: DVector<f64> =
                    DVector::from_iterator(n, eig.right.column(i).iter().map(|z| z.re));
                if sign_key.uniform(i as u64, 0) < 0.5 {
                    v = -v;
                }
                let (mut p1, mut p2, mut p3, mut p4) = (0.0, 0.0, 0.0, 0.0);
                for &x in v.iter() {
                    p1 += x;
                    p2 += x * x;
                    p3 += x * x * x;
                    p4 += x * x * x * x;
                }
                // e_v4: all (i, l)
                acc[0] += p4;
                // e_cross_ii: ordered l != l' pairs: p1^2 - p2
                acc[1] += p1 * p1 - p2;
                // e_sq_sq: p2^2 - p4
                acc[3] += p2 * p2 - p4;
                // v^2 v v over distinct ordered triples
                acc[4] += p2 * p1 * p1 - 2.0 * p3 * p1 - p2 * p2 + 2.0 * p4;
                // v v v v over distinct ordered quadruples
                acc[5] += p1 * p1 * p1 * p1 - 6.0 * p2 * p1 * p1 + 8.0 * p3 * p1
                    + 3.0 * p2 * p2
                    - 6.0 * p4;
                p1s.push(p1);
                vs.push(v);
            }
            // e_cross_ij over i != j: sum p1_i p1_j - v_i . v_j
            let sum_p1: f64 = p1s.iter().sum();
            let sum_p1_sq: f64 = p1s.iter().map(|x| x * x).sum();
            let mut vsum = DVector::<f64>::zeros(n);
            for v in &vs {
                vsum += v;
            }
            let cross_dot = vsum.norm_squared() - modes as f64;
            acc[2] = (sum_p1 * sum_p1 - sum_p1_sq) - cross_dot;

            let modes_f = modes as f64;
            Ok([
                acc[0] / (modes_f * nf),
                acc[1] / (modes_f * nf * (nf - 1.0)),
                acc[2] / (modes_f * (modes_f - 1.0) * nf * (nf - 1.0)),
                acc[3] / (modes_f * nf * (nf - 1.0)),
                acc[4] / (modes_f * nf * (nf - 1.0) * (nf - 2.0)),
                acc[5] / (modes_f * nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0)),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = [0.0f64; 6];
    for row in &per_sample {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= samples as f64;
    }
    Ok(MomentSample {
        n,
        p,
        samples,
        e_v4: mean[0],
        e_cross_ii: mean[1].abs(),
        e_cross_ij: mean[2].abs(),
        e_sq_sq: mean[3],
        e_third_sq: mean[4].abs(),
        e_fourth_distinct: mean[5].abs(),
    })
}

fn mix_seed(seed: u64, s: u64) -> u64 {
    crate::rng::mix64(seed ^ s.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Moment table over a grid of sizes with the log-log fit of E[v^4].
pub fn moment_report(ns: &[usize], p: f64, samples: usize, seed: u64) -> Result<MomentReport> {
    let rows: Vec<MomentSample> = ns
        .iter()
        .map(|&n| eigenvector_moments(n, p, samples, mix_seed(seed, n as u64)))
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> =
        rows.iter().map(|r| ((r.n as f64).ln(), r.e_v4.ln())).collect();
    let q_fit = -least_squares_slope(&pts);
    Ok(MomentReport { rows, q_fit })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// S = (n-1)^-2 sum_{i,j >= 2} -1/(lambda_i + lambda_j).
pub fn s_statistic(net: &ReactionNetwork) -> Result<f64> {
    let l = net.laplacian();
    let n = net.num_nodes();
    // ER networks are symmetric; take the cheap eigenvalue-only path.
    let lambdas: Vec<f64> = if l == l.transpose() {
        let mut ev: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    } else {
        eigendecompose(&l, false)?.eigenvalues.iter().map(|z| z.re).collect()
    };
    let mut s = 0.0;
    for i in 1..n {
        for j in 1..n {
            let denom = lambdas[i] + lambdas[j];
            if denom >= 0.0 {
                return Err(Error::SpectralSingularity);
            }
            s += -1.0 / denom;
        }
    }
    Ok(s / ((n - 1) as f64 * (n - 1) as f64))
}

#[derive(Clone, Copy, Debug)]
pub struct SStatRow {
    pub n: usize,
    pub p: f64,
    pub mean_s: f64,
    pub std_s: f64,
    /// mean_s * 2pn; approaches 1 from above as n grows.
    pub s2pn: f64,
}

/// Sample means of S over `samples` graphs for each (n, p) pair.
pub fn s_sweep(ns: &[usize], ps: &[f64], samples: usize, seed: u64) -> Result<Vec<SStatRow>> {
    let mut rows = Vec::new();
    for &p in ps {
        for &n in ns {
            let values: Vec<f64> = (0..samples as u64)
                .into_par_iter()
                .map(|s| -> Result<f64> {
                    let g = sample_er(n, p, mix_seed(seed, (n as u64) << 20 | s))?;
                    s_statistic(&g.network)
                })
                .collect::<Result<_>>()?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() as f64 - 1.0).max(1.0);
            rows.push(SStatRow {
                n,
                p,
                mean_s: mean,
                std_s: var.sqrt(),
                s2pn: mean * 2.0 * p * n as f64,
            });
        }
    }
    Ok(rows)
}

/// One edge of the rank-ordered importance listing.
#[derive(Clone, Copy, Debug)]
pub struct ClusterEdge {
    pub sample: usize,
    pub rank: usize,
    pub k: usize,
    pub from: usize,
    pub to: usize,
    /// |M^T zeta_k| is 1 (spans the labels) or 0.
    pub important: bool,
    pub r_k: f64,
}

#[derive(Clone, Debug)]
pub struct ClusterReport {
    pub n: usize,
    pub p: f64,
    pub n1: usize,
    pub samples: usize,
    pub important_mean: f64,
    pub important_min: f64,
    pub unimportant_mean: f64,
    pub unimportant_max: f64,
    /// Per-sample min(important)/max(unimportant).
    pub gap_ratios: Vec<f64>,
    pub mean_gap_ratio: f64,
    pub edges: Vec<ClusterEdge>,
}

/// The two-cluster experiment: binary measurement with n1 ones, unit noise.
pub fn rk_cluster_experiment(cfg: &ErConfig, n1: usize) -> Result<ClusterReport> {
    if n1 == 0 || n1 >= cfg.n {
        return Err(Error::InvalidInput { context: format!("need 0 < n1 < n, got n1={n1}") });
    }
    let mut m_entries = vec![0.0; cfg.n];
    for e in m_entries.iter_mut().take(n1) {
        *e = 1.0;
    }
    let m = MeasurementVector::new(m_entries)?;
    let per_sample: Vec<(Vec<ClusterEdge>, f64)> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| -> Result<(Vec<ClusterEdge>, f64)> {
            let g = sample_er(cfg.n, cfg.p, mix_seed(cfg.seed, s as u64))?;
            let net = &g.network;
            let eig = eigendecompose(&net.laplacian(), true)?;
            let report = edge_importance(net, &eig, &m, &NoiseSpec::Unit)?;
            let mut edges: Vec<ClusterEdge> = Vec::with_capacity(net.num_edges());
            for (rank, &k) in report.ranking.iter().enumerate() {
                let e = net.edges()[k];
                let important = m.stoich_projection(net, k).abs() > 0.5;
                edges.push(ClusterEdge {
                    sample: s,
                    rank,
                    k,
                    from: e.from,
                    to: e.to,
                    important,
                    r_k: report.values[k],
                });
            }
            let imp_min = edges
                .iter()
                .filter(|e| e.important)
                .map(|e| e.r_k)
                .fold(f64::INFINITY, f64::min);
            let unimp_max = edges
                .iter()
                .filter(|e| !e.important)
                .map(|e| e.r_k)
                .fold(0.0f64, f64::max);
            let gap = if unimp_max > 0.0 { imp_min / unimp_max } else { f64::INFINITY };
            Ok((edges, gap))
        })
        .collect::<Result<_>>()?;

    let mut edges = Vec::new();
    let mut gap_ratios = Vec::new();
    for (e, g) in per_sample {
        edges.extend(e);
        gap_ratios.push(g);
    }
    let stats = |pred: bool| -> (f64, f64, f64, f64) {
        let vals: Vec<f64> =
            edges.iter().filter(|e| e.important == pred).map(|e| e.r_k).collect();
        if vals.is_empty() {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(0.0f64, f64::max);
        (mean, min, max, vals.len() as f64)
    };
    let (important_mean, important_min, _, _) = stats(true);
    let (unimportant_mean, _, unimportant_max, _) = stats(false);
    let mean_gap_ratio = gap_ratios.iter().sum::<f64>() / gap_ratios.len() as f64;
    Ok(ClusterReport {
        n: cfg.n,
        p: cfg.p,
        n1,
        samples: cfg.samples,
        important_mean,
        important_min,
        unimportant_mean,
        unimportant_max,
        gap_ratios,
        mean_gap_ratio,
        edges,
    })
}

#[derive(Clone, Debug)]
pub struct GradedReport {
    pub n: usize,
    pub p: f64,
    pub samples: usize,
    /// (|M^T zeta_k|, R_k) for every edge of every sample.
    pub points: Vec<(f64, f64)>,
    /// Least-squares coefficient in R_k ~ a (M^T zeta_k)^2.
    pub fit_a: f64,
}

/// Graded-measurement experiment: components of M drawn uniformly on `[0,1]`.
pub fn graded_experiment(cfg: &ErConfig) -> Result<GradedReport> {
    let per_sample: Vec<Vec<(f64, f64)>> = (0..cfg.samples)
        .into_par_iter()
        .map(|s| -> Result<Vec<(f64, f64)>> {
            let g = sample_er(cfg.n, cfg.p, mix_seed(cfg.seed, s as u64))?;
            let net = &g.network;
            let m_key = StreamKey::new(cfg.seed, s as u64, 0x6ead);
            let m = MeasurementVector::new(
                (0..cfg.n).map(|i| m_key.uniform(i as u64, 0)).collect(),
            )?;
            let eig = eigendecompose(&net.laplacian(), true)?;
            let report = edge_importance(net, &eig, &m, &NoiseSpec::Unit)?;
            Ok((0..net.num_edges())
                .map(|k| (m.stoich_projection(net, k).abs(), report.values[k]))
                .collect())
        })
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = per_sample.into_iter().flatten().collect();
    let sxy: f64 = points.iter().map(|(x, y)| x * x * y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x.powi(4)).sum();
    let fit_a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(GradedReport { n: cfg.n, p: cfg.p, samples: cfg.samples, points, fit_a })
}

/// Direct (A2) check helper: mean of sign-randomized eigenvector components
/// over random (mode, component) draws, with its standard error.
pub fn component_mean_check(n: usize, p: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for s in 0..samples as u64 {
        let g = sample_er(n, p, mix_seed(seed, s))?;
        let eig = eigendecompose(&g.network.laplacian(), true)?;
        let key = StreamKey::new(seed, s, 0xa2);
        for draw in 0..1000u64 {
            let i = 1 + (key.uniform(draw, 0) * (n - 1) as f64) as usize;
            let l = (key.uniform(draw, 1) * n as f64) as usize;
            let sign = if key.uniform(i as u64, 2) < 0.5 { -1.0 } else { 1.0 };
            let x = sign * eig.right[(l.min(n - 1), i.min(n - 1))].re;
            sum += x;
            sum_sq += x * x;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let var = (sum_sq / count as f64 - mean * mean).max(0.0);
    Ok((mean, (var / count as f64).sqrt()))
}

/// CSV writers for the figure-data exports.
pub mod csv {
    use super::*;

    pub fn moments(report: &MomentReport) -> String {
        let mut out = String::from(
            "n,p,samples,e_v4,e_cross_ii,e_cross_ij,e_sq_sq,e_third_sq,e_fourth_distinct\n",
        );
        for r in &report.rows {
            out.push_str(&format!(
                "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.n, r.p, r.samples, r.e_v4, r.e_cross_ii, r.e_cross_ij, r.e_sq_sq,
                r.e_third_sq, r.e_fourth_distinct
            ));
        }
        out
    }

    pub fn s_stat(rows: &[SStatRow]) -> String {
        let mut out = String::from("n,p,mean_S,std_S,S_times_2pn\n");
        for r in rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.n, r.p, r.mean_s, r.std_s, r.s2pn
            ));
        }
        out
    }

    pub fn clusters(report: &ClusterReport) -> String {
        let mut out = String::from("sample,rank,k,from,to,important,R_k\n");
        for e in &report.edges {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.16e}\n",
                e.sample,
                e.rank,
                e.k,
                e.from,
                e.to,
                if e.important { 1 } else { 0 },
                e.r_k
            ));
        }
        out
    }

    pub fn graded(report: &GradedReport) -> String {
        let mut out = String::from("abs_m_zeta,R_k\n");
        for (x, y) in &report.points {
            out.push_str(&format!("{x:.16e},{y:.16e}\n"));
        }
        out
    }
}
