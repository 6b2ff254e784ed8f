//! Reaction networks on directed graphs.
//!
//! A network is a strongly connected directed graph whose edges carry strictly
//! positive per-capita rates. It is the common input for the Laplacian,
//! stoichiometry vectors, stationary distribution and noise matrix.
//!
//! Node and edge indices are 0-based everywhere in this crate and in all file
//! formats.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};

/// One directed reaction `from -> to` firing at per-capita rate `rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Net state change of one firing of reaction `k`: -1 at the source node,
/// +1 at the destination, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoichiometryVector {
    pub entries: Vec<i32>,
}

impl StoichiometryVector {
    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|&e| e as f64))
    }
}

/// Linear readout over states; binary {0,1} for conducting/non-conducting
/// labels, graded in `[0,1]` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    pub entries: DVector<f64>,
}

impl MeasurementVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput {
                context: "measurement entries must be finite".into(),
            });
        }
        Ok(Self { entries: DVector::from_vec(entries) })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() == 0
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// Measurement difference across edge `k`: M(to) - M(from).
    pub fn stoich_projection(&self, net: &ReactionNetwork, k: usize) -> f64 {
        let e = net.edges[k];
        self.entries[e.to] - self.entries[e.from]
    }
}

/// Per-edge noise amplitudes for the diffusion matrix B.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseSpec {
    /// sigma_k = 1 for every edge.
    Unit,
    /// sigma_k = sqrt(Nbar_{i(k)} * alpha_k) with Nbar = pi * population.
    StationaryFlux { population: f64 },
    /// Explicit per-edge sigmas.
    Explicit { sigmas: Vec<f64> },
}

impl NoiseSpec {
    /// Resolve the per-edge sigma vector for a given network.
    pub fn sigmas(&self, net: &ReactionNetwork) -> Result<Vec<f64>> {
        match self {
            NoiseSpec::Unit => Ok(vec![1.0; net.num_edges()]),
            NoiseSpec::StationaryFlux { population } => {
                if !(*population > 0.0) {
                    return Err(Error::InvalidInput {
                        context: format!("stationary-flux population must be > 0, got {population}"),
                    });
                }
                let pi = net.stationary_distribution()?;
                Ok(net
                    .edges
                    .iter()
                    .map(|e| (population * pi[e.from] * e.rate).max(0.0).sqrt())
                    .collect())
            }
            NoiseSpec::Explicit { sigmas } => {
                if sigmas.len() != net.num_edges() {
                    return Err(Error::DimensionMismatch {
                        context: format!(
                            "expected {} sigmas, got {}",
                            net.num_edges(),
                            sigmas.len()
                        ),
                    });
                }
                if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
                    return Err(Error::InvalidInput {
                        context: "sigmas must be finite and >= 0".into(),
                    });
                }
                Ok(sigmas.clone())
            }
        }
    }
}

/// Directed weighted reaction graph with dense, stable 0-based edge indices.
#[derive(Clone, Debug)]
pub struct ReactionNetwork {
    n: usize,
    edges: Vec<Edge>,
    pub labels: Option<Vec<String>>,
}

impl ReactionNetwork {
    /// Validates all invariants: indices in range, no self-loops, no duplicate
    /// directed edges, strictly positive finite rates, strong connectivity.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput {
                context: format!("need at least 2 states, got {n}"),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for (k, e) in edges.iter().enumerate() {
            if e.from >= n {
                return Err(Error::NodeOutOfRange { k, node: e.from, n });
            }
            if e.to >= n {
                return Err(Error::NodeOutOfRange { k, node: e.to, n });
            }
            if e.from == e.to {
                return Err(Error::SelfLoop { k, node: e.from });
            }
            if !(e.rate > 0.0) || !e.rate.is_finite() {
                return Err(Error::NonPositiveRate { k, rate: e.rate });
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::DuplicateEdge { k, from: e.from, to: e.to });
            }
        }
        let net = Self { n, edges, labels: None };
        if !net.strongly_connected() {
            return Err(Error::IrreducibleViolation);
        }
        Ok(net)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> Result<Edge> {
        self.edges
            .get(k)
            .copied()
            .ok_or(Error::IndexError { k, m: self.edges.len() })
    }

    /// Stoichiometry vector of edge `k`.
    pub fn stoichiometry(&self, k: usize) -> Result<StoichiometryVector> {
        let e = self.edge(k)?;
        let mut entries = vec![0i32; self.n];
        entries[e.from] = -1;
        entries[e.to] = 1;
        Ok(StoichiometryVector { entries })
    }

    /// Graph Laplacian L = (A - D)^T: column sums vanish, off-diagonal entry
    /// `L[j][i]` accumulates the rate of edge i -> j.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.to, e.from)] += e.rate;
            l[(e.from, e.from)] -= e.rate;
        }
        l
    }

    /// Stationary distribution pi with L pi = 0, pi >= 0, sum pi = 1.
    ///
    /// Uses the GTH (state-reduction) elimination, which involves no
    /// subtractions and therefore gives componentwise relative accuracy even
    /// when occupancies span many orders of magnitude.
    pub fn stationary_distribution(&self) -> Result<DVector<f64>> {
        let n = self.n;
        // a[i][j] = rate i -> j (generator off-diagonals)
        let mut a = vec![vec![0.0f64; n]; n];
        for e in &self.edges {
            a[e.from][e.to] += e.rate;
        }
        // GTH elimination from the last state down. Explicit indices mirror
        // the elimination algebra.
        #[allow(clippy::needless_range_loop)]
        for s in (1..n).rev() {
            let total: f64 = a[s][..s].iter().sum();
            if !(total > 0.0) {
                return Err(Error::DegenerateKernel);
            }
            for i in 0..s {
                a[i][s] /= total;
            }
            for i in 0..s {
                let f = a[i][s];
                if f == 0.0 {
                    continue;
                }
                for j in 0..s {
                    if j != i {
                        a[i][j] += f * a[s][j];
                    }
                }
            }
        }
        let mut pi = vec![0.0f64; n];
        pi[0] = 1.0;
        for s in 1..n {
            let mut x = 0.0;
            for i in 0..s {
                x += pi[i] * a[i][s];
            }
            pi[s] = x;
        }
        let total: f64 = pi.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateKernel);
        }
        Ok(DVector::from_iterator(n, pi.into_iter().map(|x| x / total)))
    }

    /// Noise matrix B (n x m): column k is sigma_k * zeta_k.
    pub fn noise_matrix(&self, spec: &NoiseSpec) -> Result<DMatrix<f64>> {
        let sigmas = spec.sigmas(self)?;
        let mut b = DMatrix::zeros(self.n, self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            b[(e.from, k)] = -sigmas[k];
            b[(e.to, k)] = sigmas[k];
        }
        Ok(b)
    }

    fn strongly_connected(&self) -> bool {
        let mut fwd = vec![Vec::new(); self.n];
        let mut bwd = vec![Vec::new(); self.n];
        for e in &self.edges {
            fwd[e.from].push(e.to);
            bwd[e.to].push(e.from);
        }
        reaches_all(&fwd, self.n) && reaches_all(&bwd, self.n)
    }
}

fn reaches_all(adj: &[Vec<usize>], n: usize) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

// --- JSON network format ------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeFile {
    from: usize,
    to: usize,
    rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    mode: String,
    #[serde(default)]
    sigmas: Option<Vec<f64>>,
    #[serde(default)]
    population: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: usize,
    edges: Vec<EdgeFile>,
    #[serde(default)]
    measurement: Option<Vec<f64>>,
    #[serde(default)]
    noise: Option<NoiseFile>,
}

/// A parsed network file: the graph plus optional measurement and noise.
#[derive(Clone, Debug)]
pub struct NetworkInput {
    pub network: ReactionNetwork,
    pub measurement: Option<MeasurementVector>,
    pub noise: NoiseSpec,
}

/// Parse the JSON network format. Unknown fields are rejected.
pub fn parse_network_json(text: &str) -> Result<NetworkInput> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::SchemaError {
        context: e.to_string(),
    })?;
    let edges = file
        .edges
        .iter()
        .map(|e| Edge { from: e.from, to: e.to, rate: e.rate })
        .collect();
    let network = ReactionNetwork::new(file.nodes, edges)?;
    let measurement = match file.measurement {
        Some(m) => {
            if m.len() != file.nodes {
                return Err(Error::SchemaError {
                    context: format!(
                        "measurement has {} entries for {} nodes",
                        m.len(),
                        file.nodes
                    ),
                });
            }
            Some(MeasurementVector::new(m)?)
        }
        None => None,
    };
    let noise = match file.noise {
        None => NoiseSpec::Unit,
        Some(nf) => match nf.mode.as_str() {
            "unit" => NoiseSpec::Unit,
            "stationary-flux" => NoiseSpec::StationaryFlux {
                population: nf.population.ok_or_else(|| Error::SchemaError {
                    context: "stationary-flux mode requires \"population\"".into(),
                })?,
            },
            "explicit" => NoiseSpec::Explicit {
                sigmas: nf.sigmas.ok_or_else(|| Error::SchemaError {
                    context: "explicit mode requires \"sigmas\"".into(),
                })?,
            },
            other => {
                return Err(Error::SchemaError {
                    context: format!("unknown noise mode {other:?}"),
                })
            }
        },
    };
    // Validate the noise spec eagerly so schema errors surface at parse time.
    noise.sigmas(&network)?;
    Ok(NetworkInput { network, measurement, noise })
}

/// The 3-state chain with unit rates, edges ordered 0->1, 1->0, 1->2, 2->1.
pub fn three_state_chain() -> ReactionNetwork {
    ReactionNetwork::new(
        3,
        vec![
            Edge { from: 0, to: 1, rate: 1.0 },
            Edge { from: 1, to: 0, rate: 1.0 },
            Edge { from: 1, to: 2, rate: 1.0 },
            Edge { from: 2, to: 1, rate: 1.0 },
        ],
    )
    .expect("static network")
}

/// Two states joined by a forward/backward pair with the given rates.
pub fn two_state(rate_fwd: f64, rate_bwd: f64) -> ReactionNetwork {
    ReactionNetwork::new(
        2,
        vec![
            Edge { from: 0, to: 1, rate: rate_fwd },
            Edge { from: 1, to: 0, rate: rate_bwd },
        ],
    )
    .expect("static network")
}
