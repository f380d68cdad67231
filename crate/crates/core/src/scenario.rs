//! Individual-versus-distributed comparison runs and the reliability metrics
//! computed from them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{run_admm, AdmmConfig, AdmmTrace};
use crate::error::{RevsError, Result};
use crate::network::{flow_trajectories, voltage_trajectories, DistributionNetwork, EdgeFlow, NodeId, NodeKind};
use crate::residence::solve_individual;
use crate::table::Table;
use crate::tariff::{BaseLoadProfile, EvDefaults, EvSpec, Tariff, HOURS_PER_DAY, INTERVAL_HOURS};

/// Lower edges of the reporting bands in p.u.; a band is `[edge[k-1], edge[k])`
/// with the first one open below.
pub const BAND_EDGES_PU: [f64; 3] = [0.92, 0.95, 0.98];
pub const BAND_NAMES: [&str; 3] = ["below_0.92", "0.92_to_0.95", "0.95_to_0.98"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Individual,
    Distributed,
    Both,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Individual => "individual",
            Mode::Distributed => "distributed",
            Mode::Both => "both",
        }
    }

    pub fn runs_individual(self) -> bool {
        matches!(self, Mode::Individual | Mode::Both)
    }

    pub fn runs_distributed(self) -> bool {
        matches!(self, Mode::Distributed | Mode::Both)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = RevsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "individual" => Ok(Mode::Individual),
            "distributed" => Ok(Mode::Distributed),
            "both" => Ok(Mode::Both),
            other => Err(RevsError::InvalidParameter(format!(
                "mode must be individual, distributed or both, got {other:?}"
            ))),
        }
    }
}

/// Everything needed for a comparison. Profiles and tariff are indexed by
/// clock hour; the run rotates them to start at `horizon_start_hour`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: DistributionNetwork,
    pub profiles: Vec<BaseLoadProfile>,
    pub tariff: Tariff,
    pub community: Vec<NodeId>,
    pub adoption: Vec<f64>,
    pub seeds: Vec<u64>,
    pub ev: EvDefaults,
    pub mode: Mode,
    pub horizon_start_hour: usize,
    pub admm: AdmmConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.community.is_empty() {
            return Err(RevsError::InvalidParameter("community is empty".into()));
        }
        let residences = self.network.residences();
        for n in &self.community {
            if residences.binary_search(n).is_err() {
                return Err(RevsError::InvalidParameter(format!("community member {n} is not a residence")));
            }
        }
        if self.adoption.is_empty() {
            return Err(RevsError::InvalidParameter("no adoption levels given".into()));
        }
        for &a in &self.adoption {
            check_fraction(a)?;
        }
        if self.seeds.is_empty() {
            return Err(RevsError::InvalidParameter("no seeds given".into()));
        }
        if self.tariff.len() != HOURS_PER_DAY {
            return Err(RevsError::Tariff(format!("expected {HOURS_PER_DAY} hourly rates, got {}", self.tariff.len())));
        }
        if self.horizon_start_hour >= HOURS_PER_DAY {
            return Err(RevsError::InvalidParameter("horizon start must be a clock hour".into()));
        }
        self.ev.spec_for_horizon(self.horizon_start_hour, HOURS_PER_DAY)?;
        self.admm.validate()
    }

    /// Clock hour at the start of interval `t`.
    pub fn hour_of(&self, t: usize) -> usize {
        (t + self.horizon_start_hour) % HOURS_PER_DAY
    }
}

fn check_fraction(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(RevsError::InvalidParameter(format!("adoption fraction {a} must lie in [0, 1]")));
    }
    Ok(())
}

/// `round(fraction * |community|)` members drawn uniformly without
/// replacement, returned in id order. Deterministic per seed.
pub fn sample_adopters(community: &[NodeId], fraction: f64, seed: u64) -> Result<Vec<NodeId>> {
    if community.is_empty() {
        return Err(RevsError::InvalidParameter("cannot sample from an empty community".into()));
    }
    check_fraction(fraction)?;
    let k = (fraction * community.len() as f64).round() as usize;
    let mut pool = community.to_vec();
    pool.sort();
    pool.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<NodeId> = pool.choose_multiple(&mut rng, k.min(pool.len())).copied().collect();
    picked.sort();
    Ok(picked)
}

/// Residence counts per interval in each reporting band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViolationBands {
    /// `counts[t][band]`.
    pub counts: Vec<[usize; 3]>,
    /// Residences considered at every interval.
    pub residences: usize,
}

impl ViolationBands {
    /// Residences below 0.95 p.u. at interval `t`.
    pub fn undervoltage(&self, t: usize) -> usize {
        self.counts[t][0] + self.counts[t][1]
    }

    /// Residences at or above 0.98 p.u. at interval `t`.
    pub fn unbanded(&self, t: usize) -> usize {
        self.residences - self.counts[t].iter().sum::<usize>()
    }
}

/// Bands the residence voltages of squared-voltage trajectories `[t][node - 1]`.
pub fn band_voltages(v_squared: &[Vec<f64>], residences: &[NodeId]) -> Result<ViolationBands> {
    let counts = v_squared
        .iter()
        .enumerate()
        .map(|(t, vt)| {
            let mut c = [0usize; 3];
            for n in residences {
                let v = *vt
                    .get(n.0.wrapping_sub(1))
                    .ok_or_else(|| RevsError::Structure(format!("no voltage for node {n}")))?;
                if v < 0.0 || v.is_nan() {
                    return Err(RevsError::NegativeVoltage {
                        node: n.0,
                        interval: t,
                        value: v,
                    });
                }
                let pu = v.sqrt();
                if let Some(b) = BAND_EDGES_PU.iter().position(|&edge| pu < edge) {
                    c[b] += 1;
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    Ok(ViolationBands {
        counts,
        residences: residences.len(),
    })
}

/// Result of one mode for one adoption level and seed.
#[derive(Debug, Clone, Serialize)]
pub struct ModeOutcome {
    /// Consumption `[residence][interval]` in kW, residences in network order.
    pub p: Vec<Vec<f64>>,
    /// Squared voltages `[t][node - 1]`.
    pub voltages: Vec<Vec<f64>>,
    /// Edge flows `[t][edge]`.
    pub flows: Vec<Vec<EdgeFlow>>,
    pub bands: ViolationBands,
    /// Energy cost over the horizon per residence, base load included.
    pub costs: Vec<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    #[serde(skip)]
    pub trace: Option<AdmmTrace>,
}

impl ModeOutcome {
    pub fn min_voltage_pu(&self) -> f64 {
        self.voltages.iter().flatten().copied().fold(f64::INFINITY, f64::min).sqrt()
    }

    pub fn max_loading_pct(&self) -> f64 {
        self.flows.iter().flatten().map(|f| f.loading_pct).fold(0.0, f64::max)
    }
}

/// Why a mode produced no outcome for one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub message: String,
    /// The solver failed, as opposed to the input data.
    pub solver: bool,
}

impl From<RevsError> for RunError {
    fn from(e: RevsError) -> Self {
        RunError {
            solver: e.is_solver_failure(),
            message: e.to_string(),
        }
    }
}

/// One adoption level and seed. `None` means the mode was not requested.
#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub adoption: f64,
    pub seed: u64,
    pub adopters: Vec<NodeId>,
    pub individual: Option<std::result::Result<ModeOutcome, RunError>>,
    pub distributed: Option<std::result::Result<ModeOutcome, RunError>>,
}

impl SeedRun {
    pub fn outcome(&self, mode: Mode) -> Option<&ModeOutcome> {
        let slot = match mode {
            Mode::Individual => &self.individual,
            Mode::Distributed => &self.distributed,
            Mode::Both => return None,
        };
        slot.as_ref().and_then(|r| r.as_ref().ok())
    }

    pub fn error(&self, mode: Mode) -> Option<&RunError> {
        let slot = match mode {
            Mode::Individual => &self.individual,
            Mode::Distributed => &self.distributed,
            Mode::Both => return None,
        };
        slot.as_ref().and_then(|r| r.as_ref().err())
    }
}

/// Band counts across seeds for one adoption level, mode, interval and band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandAggregate {
    pub adoption: f64,
    pub mode: Mode,
    pub interval: usize,
    pub hour: usize,
    pub band: usize,
    pub n_seeds: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub residences: Vec<NodeId>,
    pub horizon_start_hour: usize,
    pub runs: Vec<SeedRun>,
    pub aggregates: Vec<BandAggregate>,
}

fn energy_cost(tariff: &Tariff, p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(t, &x)| tariff.rate(t) * x * INTERVAL_HOURS).sum()
}

fn outcome(
    network: &DistributionNetwork,
    tariff: &Tariff,
    p: Vec<Vec<f64>>,
    voltages: Option<Vec<Vec<f64>>>,
) -> Result<ModeOutcome> {
    let residences = network.residences();
    let voltages = match voltages {
        Some(v) => v,
        None => voltage_trajectories(network, residences, &p)?,
    };
    let flows = flow_trajectories(network, residences, &p)?;
    let bands = band_voltages(&voltages, residences)?;
    let costs = p.iter().map(|x| energy_cost(tariff, x)).collect();
    Ok(ModeOutcome {
        p,
        voltages,
        flows,
        bands,
        costs,
        converged: None,
        iterations: None,
        trace: None,
    })
}

/// Every adopter follows its cheapest schedule.
pub fn run_individual(
    network: &DistributionNetwork,
    profiles: &[BaseLoadProfile],
    specs: &BTreeMap<NodeId, EvSpec>,
    tariff: &Tariff,
) -> Result<ModeOutcome> {
    let p = profiles
        .iter()
        .map(|prof| match specs.get(&prof.node) {
            Some(spec) => solve_individual(prof, spec, tariff).map(|s| s.p),
            None => Ok(prof.load_kw.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    outcome(network, tariff, p, None)
}

/// The distributed scheme; a run that does not converge is still an outcome.
pub fn run_distributed(
    network: &DistributionNetwork,
    profiles: &[BaseLoadProfile],
    specs: &BTreeMap<NodeId, EvSpec>,
    tariff: &Tariff,
    config: &AdmmConfig,
) -> Result<ModeOutcome> {
    let res = run_admm(network, profiles, specs, tariff, config)?;
    let mut out = outcome(network, tariff, res.p_final, Some(res.voltages))?;
    out.converged = Some(res.converged);
    out.iterations = Some(res.iterations);
    out.trace = Some(res.trace);
    Ok(out)
}

pub fn run_comparison(scenario: &Scenario) -> Result<ComparisonReport> {
    scenario.validate()?;
    let start = scenario.horizon_start_hour;
    let network = &scenario.network;
    if scenario.profiles.len() != network.residences().len()
        || scenario.profiles.iter().zip(network.residences()).any(|(p, n)| p.node != *n)
    {
        return Err(RevsError::Profile("profiles must list every residence in node order".into()));
    }
    let profiles: Vec<BaseLoadProfile> = scenario.profiles.iter().map(|p| p.rotated(start)).collect();
    let tariff = scenario.tariff.rotated(start);
    let spec = scenario.ev.spec_for_horizon(start, tariff.len())?;

    let jobs: Vec<(f64, u64)> = scenario
        .adoption
        .iter()
        .flat_map(|&a| scenario.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(adoption, seed)| -> Result<SeedRun> {
            let adopters = sample_adopters(&scenario.community, adoption, seed)?;
            let specs: BTreeMap<NodeId, EvSpec> = adopters.iter().map(|&n| (n, spec)).collect();
            let individual = scenario
                .mode
                .runs_individual()
                .then(|| run_individual(network, &profiles, &specs, &tariff).map_err(RunError::from));
            let distributed = scenario.mode.runs_distributed().then(|| {
                run_distributed(network, &profiles, &specs, &tariff, &scenario.admm).map_err(RunError::from)
            });
            Ok(SeedRun {
                adoption,
                seed,
                adopters,
                individual,
                distributed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let aggregates = aggregate(scenario, &runs, tariff.len());
    Ok(ComparisonReport {
        residences: network.residences().to_vec(),
        horizon_start_hour: start,
        runs,
        aggregates,
    })
}

fn aggregate(scenario: &Scenario, runs: &[SeedRun], horizon: usize) -> Vec<BandAggregate> {
    let mut out = Vec::new();
    for &adoption in &scenario.adoption {
        for mode in [Mode::Individual, Mode::Distributed] {
            let bands: Vec<&ViolationBands> = runs
                .iter()
                .filter(|r| r.adoption == adoption)
                .filter_map(|r| r.outcome(mode))
                .map(|o| &o.bands)
                .collect();
            if bands.is_empty() {
                continue;
            }
            for t in 0..horizon {
                for band in 0..BAND_NAMES.len() {
                    let counts: Vec<usize> = bands.iter().map(|b| b.counts[t][band]).collect();
                    out.push(BandAggregate {
                        adoption,
                        mode,
                        interval: t,
                        hour: scenario.hour_of(t),
                        band,
                        n_seeds: counts.len(),
                        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
                        min: *counts.iter().min().expect("non-empty"),
                        max: *counts.iter().max().expect("non-empty"),
                    });
                }
            }
        }
    }
    out
}

/// Named communities, `community,node_id` rows.
pub fn parse_communities(text: &str, network: &DistributionNetwork) -> Result<BTreeMap<String, Vec<NodeId>>> {
    parse_communities_at(text, network, Path::new("<communities>"))
}

pub fn read_communities(path: &Path, network: &DistributionNetwork) -> Result<BTreeMap<String, Vec<NodeId>>> {
    let text = std::fs::read_to_string(path).map_err(|e| RevsError::io(path, e))?;
    parse_communities_at(&text, network, path)
}

fn parse_communities_at(
    text: &str,
    network: &DistributionNetwork,
    path: &Path,
) -> Result<BTreeMap<String, Vec<NodeId>>> {
    let table = Table::parse(text).map_err(|m| RevsError::parse(path, m))?;
    let mut out: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for (line, row) in &table.rows {
        if row.len() != 2 {
            return Err(RevsError::parse(path, format!("line {line}: expected community,node_id")));
        }
        let name = row[0].trim();
        if name.is_empty() {
            return Err(RevsError::parse(path, format!("line {line}: empty community name")));
        }
        let node = NodeId(crate::table::parse_usize(row, 1, *line).map_err(|m| RevsError::parse(path, m))?);
        if network.kind(node) != Some(NodeKind::Residence) {
            return Err(RevsError::parse(path, format!("line {line}: node {node} is not a residence")));
        }
        let members = out.entry(name.to_string()).or_default();
        if members.contains(&node) {
            return Err(RevsError::parse(path, format!("line {line}: node {node} listed twice in {name}")));
        }
        members.push(node);
    }
    for members in out.values_mut() {
        members.sort();
    }
    Ok(out)
}

pub fn communities_to_csv(communities: &BTreeMap<String, Vec<NodeId>>) -> String {
    let mut out = String::from("community,node_id\n");
    for (name, members) in communities {
        for n in members {
            out.push_str(&format!("{name},{}\n", n.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_network, GeneratorParams};
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<NodeId> {
        (1..=n).map(NodeId).collect()
    }

    #[test]
    fn sampling_rules() {
        let c = ids(10);
        assert_eq!(sample_adopters(&c, 1.0, 3).unwrap(), c);
        assert_eq!(sample_adopters(&c, 0.3, 3).unwrap().len(), 3);
        assert_eq!(sample_adopters(&c, 0.5, 11).unwrap(), sample_adopters(&c, 0.5, 11).unwrap());
        assert!(sample_adopters(&c, 0.0, 1).unwrap().is_empty());
        assert!(sample_adopters(&[], 0.5, 1).is_err());
        assert!(sample_adopters(&c, 1.5, 1).is_err());
        // different seeds eventually differ
        let a = sample_adopters(&c, 0.5, 1).unwrap();
        assert!((2..20).any(|s| sample_adopters(&c, 0.5, s).unwrap() != a));
    }

    #[test]
    fn band_boundaries() {
        let res = ids(3);
        let b = band_voltages(&[vec![0.9025, 1.0, 0.84]], &res).unwrap();
        // 0.95 exactly is in the upper band, 1.0 in none, sqrt(0.84) ~ 0.9165 in the lowest
        assert_eq!(b.counts[0], [1, 0, 1]);
        assert_eq!(b.undervoltage(0), 1);
        assert_eq!(b.unbanded(0), 1);
        let b = band_voltages(&[vec![0.92 * 0.92, 0.98 * 0.98, 0.9]], &res).unwrap();
        assert_eq!(b.counts[0], [0, 2, 0]);
        let err = band_voltages(&[vec![1.0, -0.1, 1.0]], &res).unwrap_err();
        assert!(matches!(err, RevsError::NegativeVoltage { node: 2, interval: 0, .. }));
    }

    #[test]
    fn bands_ignore_non_residences() {
        let b = band_voltages(&[vec![0.5, 1.0]], &[NodeId(2)]).unwrap();
        assert_eq!(b.counts[0], [0, 0, 0]);
    }

    proptest! {
        #[test]
        fn band_counts_partition_residences(v in proptest::collection::vec(proptest::collection::vec(0.7f64..1.1, 8), 1..6)) {
            let res = ids(8);
            let b = band_voltages(&v, &res).unwrap();
            for (vt, counts) in v.iter().zip(&b.counts) {
                let inside = vt.iter().filter(|x| x.sqrt() >= 0.98).count();
                prop_assert_eq!(counts.iter().sum::<usize>() + inside, res.len());
            }
        }

        #[test]
        fn sample_size_is_rounded_fraction(n in 1usize..60, f in 0.0f64..=1.0, seed in any::<u64>()) {
            let s = sample_adopters(&ids(n), f, seed).unwrap();
            prop_assert_eq!(s.len(), (f * n as f64).round() as usize);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }

    fn small_scenario(mode: Mode) -> Scenario {
        let g = generate_network(&GeneratorParams {
            homes: 12,
            min_base_voltage_pu: Some(0.96),
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        Scenario {
            community: g.communities["com-1"].clone(),
            network: g.network,
            profiles: g.profiles,
            tariff: Tariff::experiment_default(),
            adoption: vec![0.0, 0.5, 1.0],
            seeds: vec![1, 2],
            ev: EvDefaults::default(),
            mode,
            horizon_start_hour: 16,
            admm: AdmmConfig::default(),
        }
    }

    #[test]
    fn comparison_runs_every_level_and_seed() {
        let sc = small_scenario(Mode::Both);
        let rep = run_comparison(&sc).unwrap();
        assert_eq!(rep.runs.len(), 6);
        // 2 modes x 3 levels x 24 intervals x 3 bands
        assert_eq!(rep.aggregates.len(), 2 * 3 * 24 * 3);
        for run in &rep.runs {
            let ind = run.outcome(Mode::Individual).unwrap();
            let dist = run.outcome(Mode::Distributed).unwrap();
            // recompute individual voltages from the stored consumption
            let v = voltage_trajectories(&sc.network, &rep.residences, &ind.p).unwrap();
            for (a, b) in v.iter().flatten().zip(ind.voltages.iter().flatten()) {
                assert!((a - b).abs() <= 1e-12);
            }
            if run.adoption == 0.0 {
                assert!(run.adopters.is_empty());
                assert_eq!(ind.p, dist.p);
                assert_eq!(ind.bands, dist.bands);
            }
            if dist.converged == Some(true) {
                for t in 0..24 {
                    assert!(dist.bands.undervoltage(t) <= ind.bands.undervoltage(t));
                }
            }
        }
    }

    #[test]
    fn single_mode_leaves_the_other_empty() {
        let rep = run_comparison(&small_scenario(Mode::Individual)).unwrap();
        assert!(rep.runs.iter().all(|r| r.distributed.is_none() && r.individual.is_some()));
        assert!(rep.aggregates.iter().all(|a| a.mode == Mode::Individual));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut sc = small_scenario(Mode::Both);
        sc.community = vec![NodeId(1)];
        assert!(run_comparison(&sc).is_err());
        let mut sc = small_scenario(Mode::Both);
        sc.seeds.clear();
        assert!(run_comparison(&sc).is_err());
        let mut sc = small_scenario(Mode::Both);
        sc.adoption = vec![1.2];
        assert!(run_comparison(&sc).is_err());
    }

    #[test]
    fn communities_round_trip() {
        let g = generate_network(&GeneratorParams {
            homes: 9,
            feeders: 2,
            ..Default::default()
        })
        .unwrap();
        let text = communities_to_csv(&g.communities);
        assert_eq!(parse_communities(&text, &g.network).unwrap(), g.communities);
        assert!(parse_communities("community,node_id\ncom-1,1\n", &g.network).is_err());
        let dup = format!("community,node_id\ncom-1,{0}\ncom-1,{0}\n", g.communities["com-1"][0].0);
        assert!(parse_communities(&dup, &g.network).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("both".parse::<Mode>().unwrap(), Mode::Both);
        assert_eq!("individual".parse::<Mode>().unwrap(), Mode::Individual);
        assert!("neither".parse::<Mode>().is_err());
    }
}
