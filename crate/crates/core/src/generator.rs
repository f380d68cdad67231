//! Synthetic radial feeders with residential base-load profiles.
//!
//! Each feeder is a trunk of auxiliary nodes leaving the substation. Every
//! transformer adds `depth` trunk segments and hangs off the trunk's current
//! end, so transformers further down the feeder see larger voltage drops.
//! Homes are spread over transformers, at most `homes_per_transformer` each.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RevsError, Result};
use crate::network::{subtree_flows, DistributionNetwork, Edge, NodeId, NodeKind, DEFAULT_BASE_POWER_KW};
use crate::tariff::{BaseLoadProfile, HOURS_PER_DAY};

/// Mean household demand in kW by clock hour, shaped like a summer weekday.
pub const SUMMER_TEMPLATE_KW: [f64; HOURS_PER_DAY] = [
    1.1, 1.0, 0.95, 0.9, 0.9, 1.0, 1.3, 1.6, 1.5, 1.4, 1.5, 1.6, //
    1.8, 2.0, 2.3, 2.6, 3.0, 3.5, 4.0, 4.0, 3.8, 3.2, 2.4, 1.6,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub feeders: usize,
    /// Homes over all feeders.
    pub homes: usize,
    pub homes_per_transformer: usize,
    /// Trunk segments added per transformer.
    pub depth: usize,
    /// Per-unit resistance ranges `[lo, hi)` of trunk segments, transformer
    /// taps and service drops.
    pub trunk_resistance: (f64, f64),
    pub transformer_resistance: (f64, f64),
    pub service_resistance: (f64, f64),
    /// Line rating as a multiple of the peak base-load flow through it.
    pub capacity_headroom: f64,
    pub base_power_kw: f64,
    /// Per-home scale factor range on the template.
    pub home_scale: (f64, f64),
    /// Per-hour multiplicative noise range.
    pub noise: (f64, f64),
    /// If set, all resistances are scaled so that the lowest node voltage
    /// under base load alone is this many p.u.
    pub min_base_voltage_pu: Option<f64>,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            feeders: 1,
            homes: 30,
            homes_per_transformer: 5,
            depth: 1,
            trunk_resistance: (0.002, 0.006),
            transformer_resistance: (0.004, 0.008),
            service_resistance: (0.01, 0.02),
            capacity_headroom: 2.0,
            base_power_kw: DEFAULT_BASE_POWER_KW,
            home_scale: (0.85, 1.25),
            noise: (0.9, 1.1),
            min_base_voltage_pu: None,
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
        return Err(RevsError::InvalidParameter(format!("{name} range [{lo}, {hi}) is invalid")));
    }
    Ok(())
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.feeders == 0 || self.homes == 0 || self.homes_per_transformer == 0 || self.depth == 0 {
            return Err(RevsError::InvalidParameter(
                "feeders, homes, homes_per_transformer and depth must be positive".into(),
            ));
        }
        if self.homes < self.feeders {
            return Err(RevsError::InvalidParameter(format!(
                "{} homes cannot populate {} feeders",
                self.homes, self.feeders
            )));
        }
        check_range("trunk resistance", self.trunk_resistance)?;
        check_range("transformer resistance", self.transformer_resistance)?;
        check_range("service resistance", self.service_resistance)?;
        check_range("home scale", self.home_scale)?;
        check_range("noise", self.noise)?;
        if !(self.capacity_headroom.is_finite() && self.capacity_headroom > 0.0) {
            return Err(RevsError::InvalidParameter("capacity headroom must be positive".into()));
        }
        if !(self.base_power_kw.is_finite() && self.base_power_kw > 0.0) {
            return Err(RevsError::InvalidParameter("base power must be positive".into()));
        }
        if let Some(v) = self.min_base_voltage_pu {
            if !(v > 0.0 && v < 1.0) {
                return Err(RevsError::InvalidParameter(format!("target voltage {v} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// A generated network with profiles on clock hours `0..24`.
#[derive(Debug, Clone)]
pub struct GeneratedFeeder {
    pub network: DistributionNetwork,
    pub profiles: Vec<BaseLoadProfile>,
    /// One community per feeder, named `com-1`, `com-2`, ...
    pub communities: BTreeMap<String, Vec<NodeId>>,
}

fn draw<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

pub fn generate_network(params: &GeneratorParams) -> Result<GeneratedFeeder> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // homes per feeder, then transformer sizes per feeder
    let mut feeder_homes = vec![params.homes / params.feeders; params.feeders];
    for h in feeder_homes.iter_mut().take(params.homes % params.feeders) {
        *h += 1;
    }

    let mut nodes = vec![(NodeId::SUBSTATION, NodeKind::Substation)];
    let mut edges = Vec::new();
    let mut communities = BTreeMap::new();
    let add = |nodes: &mut Vec<(NodeId, NodeKind)>, kind| {
        let id = NodeId(nodes.len());
        nodes.push((id, kind));
        id
    };
    for (f, &homes) in feeder_homes.iter().enumerate() {
        let mut members = Vec::with_capacity(homes);
        let mut tip = NodeId::SUBSTATION;
        let mut left = homes;
        while left > 0 {
            let size = left.min(params.homes_per_transformer);
            left -= size;
            for _ in 0..params.depth {
                let aux = add(&mut nodes, NodeKind::Auxiliary);
                edges.push(Edge {
                    parent: tip,
                    child: aux,
                    resistance: draw(&mut rng, params.trunk_resistance),
                    capacity_kw: 1.0,
                });
                tip = aux;
            }
            let tx = add(&mut nodes, NodeKind::Transformer);
            edges.push(Edge {
                parent: tip,
                child: tx,
                resistance: draw(&mut rng, params.transformer_resistance),
                capacity_kw: 1.0,
            });
            for _ in 0..size {
                let home = add(&mut nodes, NodeKind::Residence);
                edges.push(Edge {
                    parent: tx,
                    child: home,
                    resistance: draw(&mut rng, params.service_resistance),
                    capacity_kw: 1.0,
                });
                members.push(home);
            }
        }
        communities.insert(format!("com-{}", f + 1), members);
    }
    let mut network = DistributionNetwork::new(nodes, edges, params.base_power_kw)?;

    let profiles: Vec<BaseLoadProfile> = network
        .residences()
        .iter()
        .map(|&node| {
            let scale = draw(&mut rng, params.home_scale);
            let load = SUMMER_TEMPLATE_KW
                .iter()
                .map(|&x| x * scale * draw(&mut rng, params.noise))
                .collect();
            BaseLoadProfile::new(node, load)
        })
        .collect::<Result<_>>()?;

    // ratings from the peak base-load flow through each edge
    let mut peak = vec![0.0f64; network.node_count()];
    for t in 0..HOURS_PER_DAY {
        let mut p = vec![0.0; network.n()];
        for prof in &profiles {
            p[prof.node.0 - 1] = prof.load_kw[t] / params.base_power_kw;
        }
        for (pk, f) in peak.iter_mut().zip(subtree_flows(&network, &p)?) {
            *pk = pk.max(f * params.base_power_kw);
        }
    }
    let capacities: Vec<f64> = network
        .edges()
        .iter()
        .map(|e| (params.capacity_headroom * peak[e.child.0]).max(f64::MIN_POSITIVE))
        .collect();
    network = network.with_capacities(&capacities)?;

    if let Some(target) = params.min_base_voltage_pu {
        let lowest = lowest_base_voltage(&network, &profiles)?;
        let drop = 1.0 - lowest;
        if drop <= 0.0 {
            return Err(RevsError::InvalidParameter(
                "base load causes no voltage drop to scale".into(),
            ));
        }
        network = network.with_scaled_resistance((1.0 - target * target) / drop)?;
    }

    Ok(GeneratedFeeder {
        network,
        profiles,
        communities,
    })
}

/// Lowest squared voltage of any node under base load, over all hours.
pub fn lowest_base_voltage(network: &DistributionNetwork, profiles: &[BaseLoadProfile]) -> Result<f64> {
    let nodes: Vec<NodeId> = profiles.iter().map(|p| p.node).collect();
    let loads: Vec<Vec<f64>> = profiles.iter().map(|p| p.load_kw.clone()).collect();
    let v = crate::network::voltage_trajectories(network, &nodes, &loads)?;
    Ok(v.iter().flatten().copied().fold(f64::INFINITY, f64::min))
}
