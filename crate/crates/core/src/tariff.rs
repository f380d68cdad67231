//! Tariffs, base-load profiles and the EV charging model.
//!
//! Intervals are one hour long. Files are indexed by clock hour (0 = midnight);
//! [`Tariff::rotated`] and [`BaseLoadProfile::rotated`] re-index them onto a
//! simulation horizon that starts at an arbitrary hour.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, RevsError, Result};
use crate::network::{DistributionNetwork, NodeId, NodeKind};
use crate::table::{self, Table};

/// Hours per day; the default horizon length.
pub const HOURS_PER_DAY: usize = 24;

/// Interval length in hours.
pub const INTERVAL_HOURS: f64 = 1.0;

/// Slack used when comparing state-of-charge values.
pub const SOC_TOLERANCE: f64 = 1e-9;

/// Per-interval electricity rate in $/kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    rates: Vec<f64>,
}

impl Tariff {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(RevsError::Tariff("no rates".into()));
        }
        if let Some((t, r)) = rates
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r > 0.0))
        {
            return Err(RevsError::Tariff(format!("rate at interval {t} must be positive, got {r}")));
        }
        Ok(Self { rates })
    }

    /// Off-peak time-of-use plan used in the experiments, by clock hour.
    pub fn experiment_default() -> Self {
        let rates = (0..HOURS_PER_DAY)
            .map(|h| match h {
                0..=4 => 0.07866,
                5..=14 => 0.09511,
                15..=17 => 0.21436,
                _ => 0.09511,
            })
            .collect();
        Self { rates }
    }

    pub fn flat(rate: f64, len: usize) -> Result<Self> {
        Self::new(vec![rate; len])
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rate(&self, t: usize) -> f64 {
        self.rates[t]
    }

    /// Re-indexes so that interval 0 is clock hour `start`.
    pub fn rotated(&self, start: usize) -> Self {
        let n = self.rates.len();
        Self {
            rates: (0..n).map(|t| self.rates[(start + t) % n]).collect(),
        }
    }

    /// Reads a 24-hour tariff file.
    ///
    /// Two layouts are accepted: `hour,rate_usd_per_kwh` with one row per
    /// hour, or `start_hour,end_hour,rate` ranges with `end_hour` exclusive.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        Self::from_table(&t, HOURS_PER_DAY).map_err(|e| match e {
            RevsError::Parse { message, .. } => RevsError::parse(path, message),
            other => other,
        })
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let t = Table::parse(text).map_err(|m| RevsError::parse("<tariff>", m))?;
        Self::from_table(&t, HOURS_PER_DAY)
    }

    fn from_table(t: &Table, hours: usize) -> Result<Self> {
        let err = |m: String| RevsError::parse("<tariff>", m);
        let mut rates: Vec<Option<f64>> = vec![None; hours];
        let mut set = |h: usize, r: f64, line: usize| -> Result<()> {
            let slot = rates
                .get_mut(h)
                .ok_or_else(|| RevsError::Tariff(format!("line {line}: hour {h} is outside 0..{hours}")))?;
            if slot.is_some() {
                return Err(RevsError::Tariff(format!("line {line}: hour {h} given twice")));
            }
            *slot = Some(r);
            Ok(())
        };
        match t.headers.len() {
            2 => {
                for (line, row) in &t.rows {
                    let h = table::parse_usize(row, 0, *line).map_err(err)?;
                    let r = table::parse_f64(row, 1, *line).map_err(err)?;
                    set(h, r, *line)?;
                }
            }
            3 => {
                for (line, row) in &t.rows {
                    let a = table::parse_usize(row, 0, *line).map_err(err)?;
                    let b = table::parse_usize(row, 1, *line).map_err(err)?;
                    let r = table::parse_f64(row, 2, *line).map_err(err)?;
                    if b <= a {
                        return Err(RevsError::Tariff(format!("line {line}: empty range {a}..{b}")));
                    }
                    for h in a..b {
                        set(h, r, *line)?;
                    }
                }
            }
            _ => {
                return Err(err(format!(
                    "expected header hour,rate_usd_per_kwh or start_hour,end_hour,rate; found {}",
                    t.headers.join(",")
                )))
            }
        }
        let given = rates.iter().filter(|r| r.is_some()).count();
        if given != hours {
            return Err(RevsError::Tariff(format!("expected {hours} hourly rates, found {given}")));
        }
        Self::new(rates.into_iter().map(|r| r.expect("counted")).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("hour,rate_usd_per_kwh\n");
        for (h, r) in self.rates.iter().enumerate() {
            out.push_str(&format!("{h},{r}\n"));
        }
        out
    }
}

/// Reads a tariff file; see [`Tariff::read_csv`].
pub fn load_tariff(path: &Path) -> Result<Tariff> {
    Tariff::read_csv(path)
}

/// Uncontrollable consumption of one residence, in kW per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseLoadProfile {
    pub node: NodeId,
    pub load_kw: Vec<f64>,
}

impl BaseLoadProfile {
    pub fn new(node: NodeId, load_kw: Vec<f64>) -> Result<Self> {
        if let Some((t, p)) = load_kw
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(RevsError::Profile(format!(
                "node {node}: load at interval {t} must be non-negative, got {p}"
            )));
        }
        Ok(Self { node, load_kw })
    }

    pub fn len(&self) -> usize {
        self.load_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_kw.is_empty()
    }

    pub fn rotated(&self, start: usize) -> Self {
        let n = self.load_kw.len();
        Self {
            node: self.node,
            load_kw: (0..n).map(|t| self.load_kw[(start + t) % n]).collect(),
        }
    }
}

/// Reads `node_id,h0,...,h23` rows (kW) and returns one profile per residence, sorted by node.
pub fn load_profiles(path: &Path, network: &DistributionNetwork) -> Result<Vec<BaseLoadProfile>> {
    let t = Table::read(path)?;
    profiles_from_table(&t, network).map_err(|e| match e {
        RevsError::Parse { message, .. } => RevsError::parse(path, message),
        other => other,
    })
}

pub fn parse_profiles(text: &str, network: &DistributionNetwork) -> Result<Vec<BaseLoadProfile>> {
    let t = Table::parse(text).map_err(|m| RevsError::parse("<profiles>", m))?;
    profiles_from_table(&t, network)
}

fn profiles_from_table(t: &Table, network: &DistributionNetwork) -> Result<Vec<BaseLoadProfile>> {
    let err = |m: String| RevsError::parse("<profiles>", m);
    let hours = t.headers.len().saturating_sub(1);
    if hours == 0 {
        return Err(err("expected header node_id,h0,...".into()));
    }
    let mut by_node: Vec<Option<BaseLoadProfile>> = vec![None; network.node_count()];
    for (line, row) in &t.rows {
        let line = *line;
        let id = table::parse_usize(row, 0, line).map_err(err)?;
        match network.kind(NodeId(id)) {
            Some(NodeKind::Residence) => {}
            Some(kind) => {
                return Err(RevsError::Profile(format!(
                    "line {line}: node {id} is a {} node, not a residence",
                    kind.as_str()
                )))
            }
            None => return Err(RevsError::Profile(format!("line {line}: unknown node {id}"))),
        }
        if row.len() != hours + 1 {
            return Err(err(format!(
                "line {line}: expected {} values, found {}",
                hours + 1,
                row.len()
            )));
        }
        let load = (1..=hours)
            .map(|c| table::parse_f64(row, c, line))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(err)?;
        if by_node[id].is_some() {
            return Err(RevsError::Profile(format!("line {line}: duplicate profile for node {id}")));
        }
        by_node[id] = Some(BaseLoadProfile::new(NodeId(id), load)?);
    }
    let mut out = Vec::with_capacity(network.residences().len());
    for &r in network.residences() {
        match by_node[r.0].take() {
            Some(p) => out.push(p),
            None => return Err(RevsError::Profile(format!("residence {r} has no load profile"))),
        }
    }
    Ok(out)
}

pub fn profiles_to_csv(profiles: &[BaseLoadProfile]) -> String {
    let hours = profiles.first().map_or(HOURS_PER_DAY, |p| p.len());
    let mut out = String::from("node_id");
    for h in 0..hours {
        out.push_str(&format!(",h{h}"));
    }
    out.push('\n');
    for p in profiles {
        out.push_str(&p.node.to_string());
        for v in &p.load_kw {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Closed range of interval indices during which the EV may charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeWindow {
    pub start: usize,
    pub end: usize,
}

impl ChargeWindow {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end < start {
            return Err(RevsError::InvalidParameter(format!("empty charge window {start}..={end}")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..=self.end).contains(&t)
    }

    pub fn intervals(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// A single EV with an on/off charger of fixed rating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvSpec {
    pub capacity_kwh: f64,
    pub charger_kw: f64,
    pub window: ChargeWindow,
    pub soc_init: f64,
    pub soc_final: f64,
}

impl EvSpec {
    /// Validates the specification, including that some schedule reaches `soc_final`.
    pub fn new(
        capacity_kwh: f64,
        charger_kw: f64,
        window: ChargeWindow,
        soc_init: f64,
        soc_final: f64,
    ) -> Result<Self> {
        let spec = Self {
            capacity_kwh,
            charger_kw,
            window,
            soc_init,
            soc_final,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kwh.is_finite() && self.capacity_kwh > 0.0) {
            return Err(RevsError::InfeasibleSpec(format!(
                "battery capacity must be positive, got {}",
                self.capacity_kwh
            )));
        }
        if !(self.charger_kw.is_finite() && self.charger_kw > 0.0) {
            return Err(RevsError::InfeasibleSpec(format!(
                "charger rating must be positive, got {}",
                self.charger_kw
            )));
        }
        if !(0.0 <= self.soc_init && self.soc_init <= self.soc_final && self.soc_final <= 1.0) {
            return Err(RevsError::InfeasibleSpec(format!(
                "need 0 <= soc_init <= soc_final <= 1, got {} and {}",
                self.soc_init, self.soc_final
            )));
        }
        if self.window.end < self.window.start {
            return Err(RevsError::InfeasibleSpec("empty charge window".into()));
        }
        let (lo, hi) = (self.min_charges(), self.max_charges());
        if lo > hi.min(self.window.len()) {
            return Err(RevsError::InfeasibleSpec(format!(
                "needs {lo} charging intervals but at most {} fit (window {}, battery headroom {hi})",
                hi.min(self.window.len()),
                self.window.len()
            )));
        }
        Ok(())
    }

    /// Validates against a horizon of `horizon` intervals.
    pub fn validate_for(&self, horizon: usize) -> Result<()> {
        self.validate()?;
        if self.window.end >= horizon {
            return Err(RevsError::InfeasibleSpec(format!(
                "charge window ends at interval {} but the horizon has {horizon}",
                self.window.end
            )));
        }
        Ok(())
    }

    /// SOC gained per charging interval.
    pub fn soc_step(&self) -> f64 {
        self.charger_kw * INTERVAL_HOURS / self.capacity_kwh
    }

    /// Fewest charging intervals that reach `soc_final`.
    pub fn min_charges(&self) -> usize {
        let x = (self.soc_final - self.soc_init) / self.soc_step();
        (x - SOC_TOLERANCE).ceil().max(0.0) as usize
    }

    /// Most charging intervals before the battery exceeds full charge.
    pub fn max_charges(&self) -> usize {
        let x = (1.0 - self.soc_init) / self.soc_step();
        (x + SOC_TOLERANCE).floor().max(0.0) as usize
    }

    /// Feasible on-counts within the window.
    pub fn charge_count_range(&self) -> std::ops::RangeInclusive<usize> {
        self.min_charges()..=self.max_charges().min(self.window.len())
    }
}

/// Fleet-wide EV defaults, expressed in clock hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvDefaults {
    pub capacity_kwh: f64,
    pub charger_kw: f64,
    pub soc_init: f64,
    pub soc_final: f64,
    /// First clock hour the EV is plugged in.
    pub window_start_hour: usize,
    /// Clock hour the EV leaves; the interval starting at this hour is
    /// chargeable only if `include_end_hour` is set.
    pub window_end_hour: usize,
    pub include_end_hour: bool,
}

impl Default for EvDefaults {
    fn default() -> Self {
        Self {
            capacity_kwh: 20.0,
            charger_kw: 4.8,
            soc_init: 0.2,
            soc_final: 0.9,
            window_start_hour: 16,
            window_end_hour: 5,
            include_end_hour: false,
        }
    }
}

impl EvDefaults {
    /// EV specification on a horizon of `horizon` intervals beginning at clock hour `horizon_start`.
    pub fn spec_for_horizon(&self, horizon_start: usize, horizon: usize) -> Result<EvSpec> {
        let day = HOURS_PER_DAY;
        if self.window_start_hour >= day || self.window_end_hour >= day || horizon_start >= day {
            return Err(RevsError::InvalidParameter("clock hours must be in 0..24".into()));
        }
        let start = (self.window_start_hour + day - horizon_start) % day;
        let mut len = (self.window_end_hour + day - self.window_start_hour) % day;
        if self.include_end_hour {
            len += 1;
        }
        if len == 0 {
            return Err(RevsError::InfeasibleSpec("charge window is empty".into()));
        }
        let window = ChargeWindow::new(start, start + len - 1)?;
        let spec = EvSpec::new(
            self.capacity_kwh,
            self.charger_kw,
            window,
            self.soc_init,
            self.soc_final,
        )?;
        spec.validate_for(horizon)?;
        Ok(spec)
    }
}

/// On/off charger status per interval and SOC at every instant `0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeSchedule {
    pub on: Vec<bool>,
    pub soc: Vec<f64>,
}

impl ChargeSchedule {
    pub fn on_count(&self) -> usize {
        self.on.iter().filter(|&&z| z).count()
    }

    pub fn on_intervals(&self) -> Vec<usize> {
        self.on
            .iter()
            .enumerate()
            .filter(|(_, &z)| z)
            .map(|(t, _)| t)
            .collect()
    }

    /// Charger power in kW per interval.
    pub fn ev_power(&self, spec: &EvSpec) -> Vec<f64> {
        self.on
            .iter()
            .map(|&z| if z { spec.charger_kw } else { 0.0 })
            .collect()
    }
}

fn check_window(spec: &EvSpec, z: &[bool]) -> Result<()> {
    if let Some(t) = (0..z.len()).find(|&t| z[t] && !spec.window.contains(t)) {
        return Err(RevsError::InfeasibleSchedule(format!(
            "charging at interval {t} outside window {}..={}",
            spec.window.start, spec.window.end
        )));
    }
    Ok(())
}

/// Total consumption `p = p0 + z * P` in kW.
pub fn apply_schedule(profile: &BaseLoadProfile, spec: &EvSpec, z: &[bool]) -> Result<Vec<f64>> {
    check_len("charge schedule", profile.len(), z.len())?;
    check_window(spec, z)?;
    Ok(profile
        .load_kw
        .iter()
        .zip(z)
        .map(|(p0, &on)| if on { p0 + spec.charger_kw } else { *p0 })
        .collect())
}

/// Simulates the battery over the horizon and checks every SOC constraint.
///
/// The battery holds `soc_init` until the window opens; each charging
/// interval adds `P * dt / Q`. SOC must stay within `[0, 1]` at every
/// instant and reach `soc_final` by the end of the window.
pub fn soc_trajectory(spec: &EvSpec, z: &[bool]) -> Result<ChargeSchedule> {
    check_window(spec, z)?;
    if spec.window.end >= z.len() {
        return Err(RevsError::InfeasibleSchedule(format!(
            "window ends at interval {} beyond horizon {}",
            spec.window.end,
            z.len()
        )));
    }
    let step = spec.soc_step();
    let mut soc = Vec::with_capacity(z.len() + 1);
    let mut s = spec.soc_init;
    soc.push(s);
    for (t, &on) in z.iter().enumerate() {
        if on {
            s += step;
        }
        if !(-SOC_TOLERANCE..=1.0 + SOC_TOLERANCE).contains(&s) {
            return Err(RevsError::InfeasibleSchedule(format!(
                "state of charge {s:.4} at instant {} is outside [0, 1]",
                t + 1
            )));
        }
        soc.push(s);
    }
    let at_end = soc[spec.window.end + 1];
    if at_end < spec.soc_final - SOC_TOLERANCE {
        return Err(RevsError::InfeasibleSchedule(format!(
            "state of charge {at_end:.4} at the end of the window is below the required {}",
            spec.soc_final
        )));
    }
    Ok(ChargeSchedule {
        on: z.to_vec(),
        soc,
    })
}
