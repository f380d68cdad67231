//! Radial distribution network and the linearized DistFlow voltage model.
//!
//! Squared node voltages relate to nodal real-power consumption through
//! `v = 1 - 2 R p`, where `R[i][j]` is the total resistance of the path that
//! nodes `i` and `j` share on their way to the substation. Everything here is
//! in per-unit: resistances as given, powers divided by the network's
//! `base_power_kw`, and the substation held at 1 p.u.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, RevsError, Result};
use crate::table::{self, Table};

/// Default power base used to convert kW to per-unit.
pub const DEFAULT_BASE_POWER_KW: f64 = 100.0;

/// Index of a node; 0 is the substation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const SUBSTATION: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Substation,
    Residence,
    Transformer,
    Auxiliary,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Substation => "substation",
            NodeKind::Residence => "residence",
            NodeKind::Transformer => "transformer",
            NodeKind::Auxiliary => "auxiliary",
        }
    }

    fn parse_child(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "residence" => Some(NodeKind::Residence),
            "transformer" => Some(NodeKind::Transformer),
            "auxiliary" => Some(NodeKind::Auxiliary),
            _ => None,
        }
    }
}

/// A line segment from `parent` down to `child`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    /// Per-unit resistance.
    pub resistance: f64,
    /// Line rating in kW.
    pub capacity_kw: f64,
}

/// A radial network rooted at the substation (node 0).
///
/// Construction validates the tree structure, so every value of this type
/// is connected, acyclic and has exactly one parent per non-root node.
#[derive(Debug, Clone)]
pub struct DistributionNetwork {
    kinds: Vec<NodeKind>,
    edges: Vec<Edge>,
    base_power_kw: f64,
    parent_edge: Vec<Option<usize>>,
    /// Breadth-first order from the root; parents precede children.
    order: Vec<usize>,
    residences: Vec<NodeId>,
}

impl DistributionNetwork {
    /// Builds a network from its node list and edge list.
    ///
    /// Nodes must be numbered `0..=N` with the substation at 0, and there
    /// must be exactly `N` edges forming a spanning tree.
    pub fn new(nodes: Vec<(NodeId, NodeKind)>, edges: Vec<Edge>, base_power_kw: f64) -> Result<Self> {
        if !(base_power_kw.is_finite() && base_power_kw > 0.0) {
            return Err(RevsError::InvalidParameter(format!(
                "base power must be positive, got {base_power_kw}"
            )));
        }
        let n_nodes = nodes.len();
        if n_nodes == 0 {
            return Err(RevsError::Structure("network has no nodes".into()));
        }
        let mut kinds: Vec<Option<NodeKind>> = vec![None; n_nodes];
        for (id, kind) in nodes {
            let slot = kinds.get_mut(id.0).ok_or_else(|| {
                RevsError::Structure(format!("node ids must be 0..={}, found {id}", n_nodes - 1))
            })?;
            if slot.is_some() {
                return Err(RevsError::Structure(format!("duplicate node id {id}")));
            }
            *slot = Some(kind);
        }
        let kinds: Vec<NodeKind> = kinds.into_iter().map(|k| k.expect("all ids seen")).collect();
        match kinds.first() {
            Some(NodeKind::Substation) => {}
            _ => return Err(RevsError::Structure("node 0 must be the substation".into())),
        }
        if let Some(i) = kinds.iter().skip(1).position(|k| *k == NodeKind::Substation) {
            return Err(RevsError::Structure(format!(
                "node {} is a substation; only node 0 may be",
                i + 1
            )));
        }
        if edges.len() + 1 != n_nodes {
            return Err(RevsError::Structure(format!(
                "a tree on {} nodes needs {} edges, found {}",
                n_nodes,
                n_nodes - 1,
                edges.len()
            )));
        }

        let mut parent_edge = vec![None; n_nodes];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for (k, e) in edges.iter().enumerate() {
            if e.parent.0 >= n_nodes || e.child.0 >= n_nodes {
                return Err(RevsError::Structure(format!(
                    "edge {}->{} references an unknown node",
                    e.parent, e.child
                )));
            }
            if e.child.0 == 0 {
                return Err(RevsError::Structure("the substation cannot be a child".into()));
            }
            if e.parent == e.child {
                return Err(RevsError::Structure(format!("self-loop at node {}", e.child)));
            }
            if !(e.resistance.is_finite() && e.resistance >= 0.0) {
                return Err(RevsError::Structure(format!(
                    "edge {}->{} has invalid resistance {}",
                    e.parent, e.child, e.resistance
                )));
            }
            if !(e.capacity_kw.is_finite() && e.capacity_kw > 0.0) {
                return Err(RevsError::Structure(format!(
                    "edge {}->{} has non-positive capacity {}",
                    e.parent, e.child, e.capacity_kw
                )));
            }
            if parent_edge[e.child.0].is_some() {
                return Err(RevsError::Structure(format!("node {} has more than one parent", e.child)));
            }
            parent_edge[e.child.0] = Some(k);
            children[e.parent.0].push(e.child.0);
        }

        let mut order = Vec::with_capacity(n_nodes);
        let mut seen = vec![false; n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &children[u] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n_nodes {
            let missing = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(RevsError::Structure(format!(
                "node {missing} is not reachable from the substation (cycle or disconnected part)"
            )));
        }

        let residences = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == NodeKind::Residence)
            .map(|(i, _)| NodeId(i))
            .collect();

        Ok(Self {
            kinds,
            edges,
            base_power_kw,
            parent_edge,
            order,
            residences,
        })
    }

    /// Number of non-substation nodes (`N`).
    pub fn n(&self) -> usize {
        self.kinds.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, id: NodeId) -> Option<NodeKind> {
        self.kinds.get(id.0).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn base_power_kw(&self) -> f64 {
        self.base_power_kw
    }

    /// Residence nodes in increasing id order.
    pub fn residences(&self) -> &[NodeId] {
        &self.residences
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent_edge
            .get(id.0)
            .copied()
            .flatten()
            .map(|k| self.edges[k].parent)
    }

    /// Index into [`edges`](Self::edges) of the edge feeding `id`.
    pub fn parent_edge(&self, id: NodeId) -> Option<usize> {
        self.parent_edge.get(id.0).copied().flatten()
    }

    /// Nodes in breadth-first order from the substation.
    pub fn bfs_order(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.order.iter().map(|&i| NodeId(i))
    }

    /// Returns a copy with every resistance multiplied by `factor`.
    pub fn with_scaled_resistance(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(RevsError::InvalidParameter(format!(
                "resistance scale must be non-negative, got {factor}"
            )));
        }
        let mut out = self.clone();
        for e in &mut out.edges {
            e.resistance *= factor;
        }
        Ok(out)
    }

    /// Returns a copy with edge capacities replaced.
    pub fn with_capacities(&self, capacities_kw: &[f64]) -> Result<Self> {
        check_len("edge capacities", self.edges.len(), capacities_kw.len())?;
        let mut out = self.clone();
        for (e, &c) in out.edges.iter_mut().zip(capacities_kw) {
            if !(c.is_finite() && c > 0.0) {
                return Err(RevsError::Structure(format!(
                    "edge {}->{} has non-positive capacity {c}",
                    e.parent, e.child
                )));
            }
            e.capacity_kw = c;
        }
        Ok(out)
    }

    /// Converts a kW vector over `1..=N` to per-unit.
    pub fn to_per_unit(&self, p_kw: &[f64]) -> Vec<f64> {
        p_kw.iter().map(|p| p / self.base_power_kw).collect()
    }

    /// Reads the edge-list file format:
    /// `parent_id,child_id,kind_of_child,resistance_pu,capacity_kw` with a header row.
    /// A `# base_power_kw = <kW>` comment overrides the default power base.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        Self::from_table(&t).map_err(|e| match e {
            RevsError::Parse { message, .. } => RevsError::parse(path, message),
            other => other,
        })
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let t = Table::parse(text).map_err(|m| RevsError::parse("<network>", m))?;
        Self::from_table(&t)
    }

    fn from_table(t: &Table) -> Result<Self> {
        let err = |m: String| RevsError::parse("<network>", m);
        if t.headers.len() < 5 {
            return Err(err(format!(
                "expected header parent_id,child_id,kind_of_child,resistance_pu,capacity_kw; found {}",
                t.headers.join(",")
            )));
        }
        let base = match t.meta.get("base_power_kw") {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| err(format!("invalid base_power_kw '{s}'")))?,
            None => DEFAULT_BASE_POWER_KW,
        };
        let mut nodes = vec![(NodeId(0), NodeKind::Substation)];
        let mut edges = Vec::with_capacity(t.rows.len());
        for (line, row) in &t.rows {
            let line = *line;
            let parent = table::parse_usize(row, 0, line).map_err(err)?;
            let child = table::parse_usize(row, 1, line).map_err(err)?;
            let kind_s = table::field(row, 2, line).map_err(err)?;
            let kind = NodeKind::parse_child(kind_s)
                .ok_or_else(|| err(format!("line {line}: unknown node kind '{kind_s}'")))?;
            let resistance = table::parse_f64(row, 3, line).map_err(err)?;
            let capacity_kw = table::parse_f64(row, 4, line).map_err(err)?;
            nodes.push((NodeId(child), kind));
            edges.push(Edge {
                parent: NodeId(parent),
                child: NodeId(child),
                resistance,
                capacity_kw,
            });
        }
        Self::new(nodes, edges, base)
    }

    /// Serializes to the edge-list format read by [`read_csv`](Self::read_csv).
    pub fn to_csv(&self) -> String {
        let mut out = format!("# base_power_kw = {}\n", self.base_power_kw);
        out.push_str("parent_id,child_id,kind_of_child,resistance_pu,capacity_kw\n");
        for e in &self.edges {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.parent,
                e.child,
                self.kinds[e.child.0].as_str(),
                e.resistance,
                e.capacity_kw
            ));
        }
        out
    }
}

/// Per-unit path-resistance matrix over the non-substation nodes.
///
/// Row/column `k` corresponds to node `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    r: DMatrix<f64>,
}

impl SensitivityMatrix {
    pub fn from_matrix(r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() {
            return Err(RevsError::Dimension {
                context: "sensitivity matrix",
                expected: r.nrows(),
                got: r.ncols(),
            });
        }
        Ok(Self { r })
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Entry for a pair of non-substation nodes.
    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.r[(i.0 - 1, j.0 - 1)]
    }

    /// Rows `rows` and columns `cols` (node ids) as a dense matrix.
    pub fn submatrix(&self, rows: &[NodeId], cols: &[NodeId]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.get(rows[a], cols[b]))
    }
}

/// Squared-voltage limits `alpha <= v <= beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageLimits {
    pub alpha: f64,
    pub beta: f64,
}

impl VoltageLimits {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0 && beta > 1.0 && beta.is_finite()) {
            return Err(RevsError::InvalidParameter(format!(
                "voltage limits need 0 < alpha < 1 < beta, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Limits given as voltage magnitudes in p.u.
    pub fn from_magnitudes(v_min: f64, v_max: f64) -> Result<Self> {
        Self::new(v_min * v_min, v_max * v_max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.alpha && v <= self.beta
    }
}

impl Default for VoltageLimits {
    /// ANSI C84.1 range A, 0.95 to 1.05 p.u., squared.
    fn default() -> Self {
        Self {
            alpha: 0.9025,
            beta: 1.1025,
        }
    }
}

/// Builds `R` where `R[i][j]` sums the resistances on the common root path of `i` and `j`.
///
/// Walking nodes in breadth-first order, a node shares with every earlier
/// node exactly the path its parent shares with it, which gives O(N^2).
pub fn build_sensitivity(network: &DistributionNetwork) -> SensitivityMatrix {
    let n = network.n();
    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut done: Vec<usize> = Vec::with_capacity(n);
    for node in network.bfs_order().skip(1) {
        let i = node.0 - 1;
        let e = &network.edges[network.parent_edge(node).expect("non-root has a parent")];
        let parent = e.parent.0;
        if parent == 0 {
            r[(i, i)] = e.resistance;
        } else {
            let p = parent - 1;
            for &j in &done {
                let shared = r[(p, j)];
                r[(i, j)] = shared;
                r[(j, i)] = shared;
            }
            r[(i, i)] = r[(p, p)] + e.resistance;
        }
        done.push(i);
    }
    SensitivityMatrix { r }
}

/// Squared voltages `v = 1 - 2 R p` for a per-unit consumption vector over `1..=N`.
pub fn voltages(r: &SensitivityMatrix, p_pu: &[f64]) -> Result<Vec<f64>> {
    check_len("power vector", r.dim(), p_pu.len())?;
    let m = &r.r;
    Ok((0..m.nrows())
        .map(|i| {
            let drop: f64 = m.row(i).iter().zip(p_pu).map(|(a, b)| a * b).sum();
            1.0 - 2.0 * drop
        })
        .collect())
}

/// Per-unit power flowing through the edge above each node (index = node id; root entry is the total).
pub fn subtree_flows(network: &DistributionNetwork, p_pu: &[f64]) -> Result<Vec<f64>> {
    check_len("power vector", network.n(), p_pu.len())?;
    let mut flow = vec![0.0; network.node_count()];
    flow[1..].copy_from_slice(p_pu);
    for &u in network.order.iter().rev() {
        if let Some(parent) = network.parent(NodeId(u)) {
            flow[parent.0] += flow[u];
        }
    }
    Ok(flow)
}

/// Squared voltages by a forward sweep: each node's voltage is its parent's
/// minus `2 r_e` times the subtree flow through the connecting edge.
///
/// Equivalent to [`voltages`] under the linearized model; O(N) per call.
pub fn sweep_voltages(network: &DistributionNetwork, p_pu: &[f64]) -> Result<Vec<f64>> {
    let flow = subtree_flows(network, p_pu)?;
    let mut v = vec![0.0; network.node_count()];
    v[0] = 1.0;
    for node in network.bfs_order().skip(1) {
        let e = &network.edges[network.parent_edge(node).expect("non-root has a parent")];
        v[node.0] = v[e.parent.0] - 2.0 * e.resistance * flow[node.0];
    }
    v.remove(0);
    Ok(v)
}

/// Flow through one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeFlow {
    pub parent: NodeId,
    pub child: NodeId,
    pub flow_kw: f64,
    /// Flow as a percentage of the line rating.
    pub loading_pct: f64,
}

/// Lossless edge flows: each edge carries the total consumption of the subtree below it.
pub fn edge_flows(network: &DistributionNetwork, p_pu: &[f64]) -> Result<Vec<EdgeFlow>> {
    let flow = subtree_flows(network, p_pu)?;
    Ok(network
        .edges
        .iter()
        .map(|e| {
            let kw = flow[e.child.0] * network.base_power_kw;
            EdgeFlow {
                parent: e.parent,
                child: e.child,
                flow_kw: kw,
                loading_pct: kw / e.capacity_kw * 100.0,
            }
        })
        .collect())
}

/// Per-unit consumption vector over `1..=N` at interval `t`, from kW
/// trajectories of the listed nodes; every other node draws nothing.
pub fn injection_at(network: &DistributionNetwork, nodes: &[NodeId], p_kw: &[Vec<f64>], t: usize) -> Vec<f64> {
    let mut p = vec![0.0; network.n()];
    for (node, traj) in nodes.iter().zip(p_kw) {
        p[node.0 - 1] += traj[t] / network.base_power_kw;
    }
    p
}

/// Squared voltages `[t][node - 1]` over a horizon of kW trajectories.
pub fn voltage_trajectories(network: &DistributionNetwork, nodes: &[NodeId], p_kw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_len("trajectories", nodes.len(), p_kw.len())?;
    let horizon = horizon_of(network, nodes, p_kw)?;
    (0..horizon)
        .map(|t| sweep_voltages(network, &injection_at(network, nodes, p_kw, t)))
        .collect()
}

/// Edge flows `[t][edge]` over a horizon of kW trajectories.
pub fn flow_trajectories(network: &DistributionNetwork, nodes: &[NodeId], p_kw: &[Vec<f64>]) -> Result<Vec<Vec<EdgeFlow>>> {
    check_len("trajectories", nodes.len(), p_kw.len())?;
    let horizon = horizon_of(network, nodes, p_kw)?;
    (0..horizon)
        .map(|t| edge_flows(network, &injection_at(network, nodes, p_kw, t)))
        .collect()
}

fn horizon_of(network: &DistributionNetwork, nodes: &[NodeId], p_kw: &[Vec<f64>]) -> Result<usize> {
    let horizon = p_kw.first().map_or(0, Vec::len);
    for (node, traj) in nodes.iter().zip(p_kw) {
        if node.0 == 0 || node.0 > network.n() {
            return Err(RevsError::Structure(format!("node {node} is not a load node")));
        }
        check_len("trajectory length", horizon, traj.len())?;
    }
    Ok(horizon)
}

/// Outcome of checking squared voltages against limits.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCheck {
    pub violated: Vec<bool>,
    /// Largest distance outside `[alpha, beta]`, zero when all nodes comply.
    pub worst: f64,
}

impl LimitCheck {
    pub fn ok(&self) -> bool {
        !self.violated.iter().any(|&b| b)
    }
}

/// Flags nodes outside the closed band `[alpha, beta]`.
pub fn check_limits(v: &[f64], limits: &VoltageLimits) -> LimitCheck {
    let mut worst = 0.0f64;
    let violated = v
        .iter()
        .map(|&x| {
            let excess = (limits.alpha - x).max(x - limits.beta);
            if excess > 0.0 {
                worst = worst.max(excess);
                true
            } else {
                false
            }
        })
        .collect();
    LimitCheck { violated, worst }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    /// Random tree on `n + 1` nodes: each node attaches to a uniformly chosen earlier node.
    pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> DistributionNetwork {
        let mut nodes = vec![(NodeId(0), NodeKind::Substation)];
        let mut edges = Vec::new();
        for c in 1..=n {
            let parent = rng.gen_range(0..c);
            let kind = if rng.gen_bool(0.5) {
                NodeKind::Residence
            } else {
                NodeKind::Auxiliary
            };
            nodes.push((NodeId(c), kind));
            edges.push(Edge {
                parent: NodeId(parent),
                child: NodeId(c),
                resistance: rng.gen_range(0.0..0.02),
                capacity_kw: 100.0,
            });
        }
        DistributionNetwork::new(nodes, edges, 100.0).unwrap()
    }

    pub fn path_network(resistances: &[f64], base: f64, capacity: f64) -> DistributionNetwork {
        let mut nodes = vec![(NodeId(0), NodeKind::Substation)];
        let mut edges = Vec::new();
        for (k, &r) in resistances.iter().enumerate() {
            nodes.push((NodeId(k + 1), NodeKind::Residence));
            edges.push(Edge {
                parent: NodeId(k),
                child: NodeId(k + 1),
                resistance: r,
                capacity_kw: capacity,
            });
        }
        DistributionNetwork::new(nodes, edges, base).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star(r: f64) -> DistributionNetwork {
        let nodes = vec![
            (NodeId(0), NodeKind::Substation),
            (NodeId(1), NodeKind::Residence),
            (NodeId(2), NodeKind::Residence),
        ];
        let edges = vec![
            Edge { parent: NodeId(0), child: NodeId(1), resistance: r, capacity_kw: 20.0 },
            Edge { parent: NodeId(0), child: NodeId(2), resistance: r, capacity_kw: 20.0 },
        ];
        DistributionNetwork::new(nodes, edges, 10.0).unwrap()
    }

    /// Common-path resistance by intersecting explicit root paths.
    fn common_path_oracle(net: &DistributionNetwork, i: NodeId, j: NodeId) -> f64 {
        let path = |mut u: NodeId| {
            let mut edges = Vec::new();
            while let Some(k) = net.parent_edge(u) {
                edges.push(k);
                u = net.edges()[k].parent;
            }
            edges
        };
        let pi = path(i);
        let pj = path(j);
        pi.iter()
            .filter(|k| pj.contains(k))
            .map(|&k| net.edges()[k].resistance)
            .sum()
    }

    #[test]
    fn single_edge_sensitivity() {
        let net = path_network(&[0.05], 100.0, 10.0);
        let r = build_sensitivity(&net);
        assert_eq!(r.matrix().as_slice(), &[0.05]);
        let v = voltages(&r, &[1.0]).unwrap();
        assert!((v[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn path_sensitivity_and_voltages() {
        let net = path_network(&[0.01, 0.01], 10.0, 20.0);
        let r = build_sensitivity(&net);
        let expect = DMatrix::from_row_slice(2, 2, &[0.01, 0.01, 0.01, 0.02]);
        assert!((r.matrix() - expect).abs().max() < 1e-15);
        let v = voltages(&r, &[0.5, 0.5]).unwrap();
        assert!((v[0] - 0.98).abs() < 1e-12);
        assert!((v[1] - 0.97).abs() < 1e-12);
    }

    #[test]
    fn star_sensitivity_is_diagonal() {
        let r = build_sensitivity(&star(0.01));
        let expect = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.01]);
        assert_eq!(r.matrix(), &expect);
    }

    #[test]
    fn zero_load_gives_unit_voltage() {
        let net = path_network(&[0.01, 0.02, 0.03], 100.0, 10.0);
        let v = voltages(&build_sensitivity(&net), &[0.0; 3]).unwrap();
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn voltages_reject_wrong_length() {
        let r = build_sensitivity(&star(0.01));
        assert!(matches!(voltages(&r, &[1.0]), Err(RevsError::Dimension { .. })));
    }

    #[test]
    fn path_edge_flows() {
        let net = path_network(&[0.01, 0.01], 10.0, 20.0);
        let f = edge_flows(&net, &[0.5, 0.5]).unwrap();
        assert!((f[0].flow_kw - 10.0).abs() < 1e-12);
        assert!((f[0].loading_pct - 50.0).abs() < 1e-12);
        assert!((f[1].flow_kw - 5.0).abs() < 1e-12);
        assert!((f[1].loading_pct - 25.0).abs() < 1e-12);
        let zero = edge_flows(&net, &[0.0, 0.0]).unwrap();
        assert!(zero.iter().all(|e| e.loading_pct == 0.0));
    }

    #[test]
    fn star_edge_flow_for_unloaded_branch() {
        let f = edge_flows(&star(0.01), &[1.0, 0.0]).unwrap();
        let to_two = f.iter().find(|e| e.child == NodeId(2)).unwrap();
        assert_eq!(to_two.flow_kw, 0.0);
    }

    #[test]
    fn limit_checks() {
        let lim = VoltageLimits::new(0.9025, 1.1025).unwrap();
        assert!(check_limits(&[1.0], &lim).ok());
        let c = check_limits(&[0.90], &lim);
        assert!(c.violated[0]);
        assert!((c.worst - 0.0025).abs() < 1e-12);
        assert!(check_limits(&[1.1025], &lim).ok());
        assert!(check_limits(&[0.9025], &lim).ok());
    }

    #[test]
    fn limits_validate() {
        assert!(VoltageLimits::new(1.0, 1.1).is_err());
        assert!(VoltageLimits::new(0.9, 0.99).is_err());
        let d = VoltageLimits::from_magnitudes(0.95, 1.05).unwrap();
        assert!((d.alpha - VoltageLimits::default().alpha).abs() < 1e-15);
    }

    #[test]
    fn structural_errors() {
        let kinds = |n: usize| {
            (0..n)
                .map(|i| (NodeId(i), if i == 0 { NodeKind::Substation } else { NodeKind::Residence }))
                .collect::<Vec<_>>()
        };
        let e = |p, c| Edge { parent: NodeId(p), child: NodeId(c), resistance: 0.01, capacity_kw: 1.0 };
        // 1 -> 2 -> 1 cycle, node 3 hangs off root
        let cyclic = DistributionNetwork::new(kinds(4), vec![e(2, 1), e(1, 2), e(0, 3)], 100.0);
        assert!(matches!(cyclic, Err(RevsError::Structure(_))));
        let two_parents = DistributionNetwork::new(kinds(3), vec![e(0, 1), e(0, 1)], 100.0);
        assert!(matches!(two_parents, Err(RevsError::Structure(_))));
        let too_few = DistributionNetwork::new(kinds(3), vec![e(0, 1)], 100.0);
        assert!(matches!(too_few, Err(RevsError::Structure(_))));
        let mut bad_cap = e(0, 1);
        bad_cap.capacity_kw = 0.0;
        assert!(DistributionNetwork::new(kinds(2), vec![bad_cap], 100.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "# base_power_kw = 50\nparent_id,child_id,kind_of_child,resistance_pu,capacity_kw\n\
                    0,1,auxiliary,0.01,100\n1,2,transformer,0.02,50\n2,3,residence,0.03,10\n";
        let net = DistributionNetwork::parse_csv(text).unwrap();
        assert_eq!(net.base_power_kw(), 50.0);
        assert_eq!(net.residences(), &[NodeId(3)]);
        let again = DistributionNetwork::parse_csv(&net.to_csv()).unwrap();
        assert_eq!(again.edges(), net.edges());
    }

    #[test]
    fn csv_rejects_cycles_and_bad_kinds() {
        let header = "parent_id,child_id,kind_of_child,resistance_pu,capacity_kw\n";
        let cyc = format!("{header}2,1,residence,0.01,1\n1,2,residence,0.01,1\n");
        assert!(matches!(DistributionNetwork::parse_csv(&cyc), Err(RevsError::Structure(_))));
        let kind = format!("{header}0,1,house,0.01,1\n");
        assert!(matches!(DistributionNetwork::parse_csv(&kind), Err(RevsError::Parse { .. })));
    }

    #[test]
    fn feeder_end_has_minimum_voltage() {
        let net = path_network(&[0.01, 0.005, 0.02, 0.001, 0.01], 100.0, 10.0);
        let v = voltages(&build_sensitivity(&net), &[0.1, 0.0, 0.3, 0.2, 0.05]).unwrap();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    proptest! {
        #[test]
        fn sensitivity_matches_common_paths(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_tree(&mut rng, n);
            let r = build_sensitivity(&net);
            for i in 1..=n {
                for j in 1..=n {
                    let want = common_path_oracle(&net, NodeId(i), NodeId(j));
                    prop_assert!((r.get(NodeId(i), NodeId(j)) - want).abs() < 1e-14);
                }
                let rii = r.get(NodeId(i), NodeId(i));
                for j in 1..=n {
                    let rij = r.get(NodeId(i), NodeId(j));
                    prop_assert!(rii >= rij && rij >= 0.0);
                }
            }
            prop_assert_eq!(r.matrix().transpose(), r.matrix().clone());
        }

        #[test]
        fn sweep_matches_matrix(seed in any::<u64>(), n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = random_tree(&mut rng, n);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.05..0.2)).collect();
            let a = voltages(&build_sensitivity(&net), &p).unwrap();
            let b = sweep_voltages(&net, &p).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
