//! Network scenario: topology, wireless channel state, task and
//! service-request processes, and all simulation parameters.
//!
//! Everything random flows from one seeded generator with named substreams
//! (positions, channels, tasks, requests, solver anchors, scheme draws) so
//! that each component is independently reproducible. A scenario is
//! immutable after generation within a slot and safe to share read-only
//! across worker threads.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::units;

/// UEs redraw their requested service every this many long-term frames.
pub const REQUEST_REDRAW_PERIOD: usize = 5;

/// Full network parameterization in SI units.
///
/// Defaults follow the standard small-cell setting: 200x200 m area, 10 MHz
/// bandwidth, -174 dBm/Hz noise, 23 dBm UE transmit power, 1/2/4 GHz
/// UE/ES/cloud processing rates, 1354-byte tasks with 200-500 cycles/byte
/// complexity, 2 ms deadline and 1 Mbps rate floor.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub num_ues: usize,
    pub num_ess: usize,
    pub num_services: usize,
    pub antennas: usize,
    /// Side of the square deployment area (m).
    pub area_side: f64,
    pub es_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    /// Fiber distance from each ES to the central cloud (m).
    pub cloud_distance: f64,
    /// Total system bandwidth W (Hz).
    pub bandwidth: f64,
    /// Noise power density N0 (W/Hz).
    pub noise_density: f64,
    /// UE transmit power (W).
    pub tx_power: f64,
    /// UE processing rate (cycles/s).
    pub ue_rate: f64,
    /// Per-UE processing rate allocated by an ES (cycles/s).
    pub es_rate: f64,
    /// Per-UE processing rate allocated by the cloud (cycles/s).
    pub cloud_rate: f64,
    /// Maximum computing capacity of each ES (cycles/s).
    pub es_capacity: f64,
    /// Maximum computing capacity of the cloud (cycles/s).
    pub cloud_capacity: f64,
    /// Edge-edge link rate (bits/s).
    pub fronthaul_rate: f64,
    /// Edge-cloud link rate (bits/s).
    pub backhaul_rate: f64,
    /// Signal propagation speed in fiber (m/s).
    pub propagation_speed: f64,
    pub max_services_per_es: usize,
    /// Price for installing a service ($/service).
    pub price_install: f64,
    /// Price for uninstalling a service ($/service).
    pub price_uninstall: f64,
    /// Price for operating a service ($/service).
    pub price_operate: f64,
    /// Price per cloud request ($/request).
    pub price_request: f64,
    /// Maximum allowed system cost per frame ($).
    pub cost_cap: f64,
    /// Maximum UE energy per task (J).
    pub energy_cap: f64,
    /// Maximum end-to-end latency per task (s).
    pub latency_cap: f64,
    /// Minimum uplink data rate (bits/s).
    pub rate_floor: f64,
    /// Latency weight in the scalarized objective.
    pub weight_latency: f64,
    /// Cost weight in the scalarized objective.
    pub weight_cost: f64,
    /// Effective capacitance coefficient mu (W s^3 / cycle^3).
    pub eff_capacitance: f64,
    /// Task size (bytes); fixed each slot.
    pub task_size_bytes: f64,
    /// Lower edge of the task complexity band (cycles/byte).
    pub complexity_min: f64,
    /// Upper edge of the task complexity band (cycles/byte).
    pub complexity_max: f64,
    /// Long-term frames per run.
    pub frames: usize,
    /// Short-term slots per frame.
    pub slots_per_frame: usize,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_ues: 8,
            num_ess: 2,
            num_services: 8,
            antennas: 8,
            area_side: 200.0,
            es_positions: Vec::new(),
            ue_positions: Vec::new(),
            cloud_distance: 10_000.0,
            bandwidth: 10e6,
            noise_density: units::dbm_per_hz_to_watts_per_hz(-174.0),
            tx_power: units::dbm_to_watts(23.0),
            ue_rate: 1e9,
            es_rate: 2e9,
            cloud_rate: 4e9,
            es_capacity: 20e9,
            cloud_capacity: 30e9,
            fronthaul_rate: 5e9,
            backhaul_rate: 1e9,
            propagation_speed: 2e8,
            max_services_per_es: 6,
            price_install: 0.1,
            price_uninstall: 0.05,
            price_operate: 0.1,
            price_request: 0.01,
            cost_cap: 20.0,
            energy_cap: 1.0,
            latency_cap: 2e-3,
            rate_floor: 1e6,
            weight_latency: 0.9,
            weight_cost: 0.1,
            eff_capacitance: 1e-27,
            task_size_bytes: 1354.0,
            complexity_min: 200.0,
            complexity_max: 500.0,
            frames: 10,
            slots_per_frame: 5,
            rng_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// A named invariant does not hold.
    Invalid(String),
    /// The configuration file could not be read or parsed.
    Parse(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Invalid(msg) => write!(f, "invalid configuration: {msg}"),
            ConfigError::Parse(msg) => write!(f, "configuration parse error: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| Err(ConfigError::Invalid(msg));
        if self.num_ues == 0 || self.num_ess == 0 || self.num_services == 0 {
            return err("num_ues, num_ess and num_services must be >= 1".into());
        }
        if self.antennas == 0 {
            return err("antennas must be >= 1".into());
        }
        if (self.weight_latency + self.weight_cost - 1.0).abs() > 1e-9 {
            return err(format!(
                "weights must sum to 1 (got {} + {})",
                self.weight_latency, self.weight_cost
            ));
        }
        if self.weight_latency < 0.0 || self.weight_cost < 0.0 {
            return err("weights must be nonnegative".into());
        }
        if self.max_services_per_es > self.num_services {
            return err(format!(
                "max_services_per_es ({}) exceeds num_services ({})",
                self.max_services_per_es, self.num_services
            ));
        }
        if self.price_uninstall > self.price_install {
            return err(format!(
                "uninstall price ({}) must not exceed install price ({})",
                self.price_uninstall, self.price_install
            ));
        }
        let positive = [
            ("area_side", self.area_side),
            ("cloud_distance", self.cloud_distance),
            ("bandwidth", self.bandwidth),
            ("noise_density", self.noise_density),
            ("tx_power", self.tx_power),
            ("ue_rate", self.ue_rate),
            ("es_rate", self.es_rate),
            ("cloud_rate", self.cloud_rate),
            ("es_capacity", self.es_capacity),
            ("cloud_capacity", self.cloud_capacity),
            ("fronthaul_rate", self.fronthaul_rate),
            ("backhaul_rate", self.backhaul_rate),
            ("propagation_speed", self.propagation_speed),
            ("price_install", self.price_install),
            ("price_uninstall", self.price_uninstall),
            ("price_operate", self.price_operate),
            ("price_request", self.price_request),
            ("cost_cap", self.cost_cap),
            ("energy_cap", self.energy_cap),
            ("latency_cap", self.latency_cap),
            ("rate_floor", self.rate_floor),
            ("eff_capacitance", self.eff_capacitance),
            ("task_size_bytes", self.task_size_bytes),
            ("complexity_min", self.complexity_min),
            ("complexity_max", self.complexity_max),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return err(format!("{name} must be strictly positive (got {value})"));
            }
        }
        if self.complexity_min > self.complexity_max {
            return err("complexity band is empty".into());
        }
        for (label, positions, expect) in [
            ("es_positions", &self.es_positions, self.num_ess),
            ("ue_positions", &self.ue_positions, self.num_ues),
        ] {
            if !positions.is_empty() {
                if positions.len() != expect {
                    return err(format!("{label} has {} entries, expected {expect}", positions.len()));
                }
                for p in positions {
                    if p[0] < 0.0 || p[0] > self.area_side || p[1] < 0.0 || p[1] > self.area_side {
                        return err(format!("{label} entry {p:?} lies outside the area"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Load from a TOML file; unspecified fields keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = file.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Task size in bits.
    pub fn task_size_bits(&self) -> f64 {
        self.task_size_bytes * 8.0
    }
}

/// On-disk configuration. Sections mirror the config fields; power figures
/// are given in dBm and converted at load.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    radio: RadioSection,
    #[serde(default)]
    compute: ComputeSection,
    #[serde(default)]
    links: LinksSection,
    #[serde(default)]
    services: ServicesSection,
    #[serde(default)]
    prices: PricesSection,
    #[serde(default)]
    caps: CapsSection,
    #[serde(default)]
    weights: WeightsSection,
    #[serde(default)]
    sim: SimSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    num_ues: Option<usize>,
    num_ess: Option<usize>,
    area_side: Option<f64>,
    es_positions: Option<Vec<[f64; 2]>>,
    ue_positions: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioSection {
    bandwidth: Option<f64>,
    antennas: Option<usize>,
    noise_density_dbm_per_hz: Option<f64>,
    tx_power_dbm: Option<f64>,
    rate_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComputeSection {
    ue_rate: Option<f64>,
    es_rate: Option<f64>,
    cloud_rate: Option<f64>,
    es_capacity: Option<f64>,
    cloud_capacity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinksSection {
    fronthaul_rate: Option<f64>,
    backhaul_rate: Option<f64>,
    propagation_speed: Option<f64>,
    cloud_distance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServicesSection {
    num_services: Option<usize>,
    max_services_per_es: Option<usize>,
    task_size_bytes: Option<f64>,
    complexity_min: Option<f64>,
    complexity_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PricesSection {
    install: Option<f64>,
    uninstall: Option<f64>,
    operate: Option<f64>,
    request: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapsSection {
    cost: Option<f64>,
    energy: Option<f64>,
    latency: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    latency: Option<f64>,
    cost: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    frames: Option<usize>,
    slots_per_frame: Option<usize>,
    rng_seed: Option<u64>,
}

impl ConfigFile {
    fn into_config(self) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        let n = self.network;
        if let Some(v) = n.num_ues {
            cfg.num_ues = v;
        }
        if let Some(v) = n.num_ess {
            cfg.num_ess = v;
        }
        if let Some(v) = n.area_side {
            cfg.area_side = v;
        }
        if let Some(v) = n.es_positions {
            cfg.es_positions = v;
        }
        if let Some(v) = n.ue_positions {
            cfg.ue_positions = v;
        }
        let r = self.radio;
        if let Some(v) = r.bandwidth {
            cfg.bandwidth = v;
        }
        if let Some(v) = r.antennas {
            cfg.antennas = v;
        }
        if let Some(v) = r.noise_density_dbm_per_hz {
            cfg.noise_density = units::dbm_per_hz_to_watts_per_hz(v);
        }
        if let Some(v) = r.tx_power_dbm {
            cfg.tx_power = units::dbm_to_watts(v);
        }
        if let Some(v) = r.rate_floor {
            cfg.rate_floor = v;
        }
        let c = self.compute;
        if let Some(v) = c.ue_rate {
            cfg.ue_rate = v;
        }
        if let Some(v) = c.es_rate {
            cfg.es_rate = v;
        }
        if let Some(v) = c.cloud_rate {
            cfg.cloud_rate = v;
        }
        if let Some(v) = c.es_capacity {
            cfg.es_capacity = v;
        }
        if let Some(v) = c.cloud_capacity {
            cfg.cloud_capacity = v;
        }
        let l = self.links;
        if let Some(v) = l.fronthaul_rate {
            cfg.fronthaul_rate = v;
        }
        if let Some(v) = l.backhaul_rate {
            cfg.backhaul_rate = v;
        }
        if let Some(v) = l.propagation_speed {
            cfg.propagation_speed = v;
        }
        if let Some(v) = l.cloud_distance {
            cfg.cloud_distance = v;
        }
        let s = self.services;
        if let Some(v) = s.num_services {
            cfg.num_services = v;
        }
        if let Some(v) = s.max_services_per_es {
            cfg.max_services_per_es = v;
        }
        if let Some(v) = s.task_size_bytes {
            cfg.task_size_bytes = v;
        }
        if let Some(v) = s.complexity_min {
            cfg.complexity_min = v;
        }
        if let Some(v) = s.complexity_max {
            cfg.complexity_max = v;
        }
        let p = self.prices;
        if let Some(v) = p.install {
            cfg.price_install = v;
        }
        if let Some(v) = p.uninstall {
            cfg.price_uninstall = v;
        }
        if let Some(v) = p.operate {
            cfg.price_operate = v;
        }
        if let Some(v) = p.request {
            cfg.price_request = v;
        }
        let caps = self.caps;
        if let Some(v) = caps.cost {
            cfg.cost_cap = v;
        }
        if let Some(v) = caps.energy {
            cfg.energy_cap = v;
        }
        if let Some(v) = caps.latency {
            cfg.latency_cap = v;
        }
        let w = self.weights;
        if let Some(v) = w.latency {
            cfg.weight_latency = v;
        }
        if let Some(v) = w.cost {
            cfg.weight_cost = v;
        }
        let sim = self.sim;
        if let Some(v) = sim.frames {
            cfg.frames = v;
        }
        if let Some(v) = sim.slots_per_frame {
            cfg.slots_per_frame = v;
        }
        if let Some(v) = sim.rng_seed {
            cfg.rng_seed = v;
        }
        cfg
    }
}

/// Named RNG substreams off the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Positions,
    Channels,
    Tasks,
    Requests,
    Anchors,
    Scheme,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Positions => 1,
            Stream::Channels => 2,
            Stream::Tasks => 3,
            Stream::Requests => 4,
            Stream::Anchors => 5,
            Stream::Scheme => 6,
        }
    }
}

/// Seeded generator for one substream.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Place ESs on the horizontal midline and UEs uniformly in the square.
///
/// K = 2 and K = 4 use the reference layouts ((66,100),(133,100) and
/// (40,100)...(160,100) for a 200 m side); other K fall back to even
/// spacing at x = side*k/(K+1), which reproduces the K = 4 layout exactly.
/// Positions already present in the config are kept.
pub fn generate_topology(mut cfg: ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    cfg.validate()?;
    if cfg.es_positions.is_empty() {
        let scale = cfg.area_side / 200.0;
        let mid = cfg.area_side / 2.0;
        cfg.es_positions = match cfg.num_ess {
            2 => vec![[66.0 * scale, mid], [133.0 * scale, mid]],
            k => (1..=k)
                .map(|i| [cfg.area_side * i as f64 / (k + 1) as f64, mid])
                .collect(),
        };
    }
    if cfg.ue_positions.is_empty() {
        let mut rng = substream(cfg.rng_seed, Stream::Positions);
        cfg.ue_positions = (0..cfg.num_ues)
            .map(|_| {
                [
                    rng.random::<f64>() * cfg.area_side,
                    rng.random::<f64>() * cfg.area_side,
                ]
            })
            .collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Path loss in dB at the given distance (m): -35.3 - 37.6 log10(d).
pub fn path_loss_db(distance: f64) -> Result<f64, ConfigError> {
    if !(distance > 0.0) {
        return Err(ConfigError::Invalid(format!(
            "path loss undefined at distance {distance}"
        )));
    }
    Ok(-35.3 - 37.6 * distance.log10())
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Static geometry derived from positions.
#[derive(Debug, Clone)]
pub struct Distances {
    /// UE-to-ES distance (m), indexed [m][k].
    pub ue_es: Vec<Vec<f64>>,
    /// ES-to-ES distance (m), indexed [k][k'].
    pub es_es: Vec<Vec<f64>>,
    /// ES-to-cloud fiber distance (m), per ES.
    pub es_cloud: Vec<f64>,
}

/// Per-link channel entry for one slot.
#[derive(Debug, Clone)]
pub struct ChannelEntry {
    /// Large-scale linear power gain; fixed within a long-term frame.
    pub path_loss: f64,
    /// Small-scale Rayleigh fading vector, one complex coefficient per antenna.
    pub small_scale: Vec<Complex64>,
    /// Effective linear power gain: path_loss * |small_scale|^2.
    pub gain: f64,
}

/// Channel realizations for one short-term slot, indexed [m][k].
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub entries: Vec<Vec<ChannelEntry>>,
}

impl ChannelState {
    pub fn gain(&self, ue: usize, es: usize) -> f64 {
        self.entries[ue][es].gain
    }
}

/// Draw one Rayleigh-faded channel entry: i.i.d. complex Gaussian taps with
/// zero mean and unit variance per antenna, so E[|h|^2] = L.
pub fn draw_channel(rng: &mut ChaCha8Rng, antennas: usize, path_loss: f64) -> ChannelEntry {
    let mut small_scale = Vec::with_capacity(antennas);
    let mut norm_sq = 0.0;
    for _ in 0..antennas {
        let re: f64 = standard_normal(rng) * std::f64::consts::FRAC_1_SQRT_2;
        let im: f64 = standard_normal(rng) * std::f64::consts::FRAC_1_SQRT_2;
        norm_sq += re * re + im * im;
        small_scale.push(Complex64::new(re, im));
    }
    ChannelEntry {
        path_loss,
        small_scale,
        gain: path_loss * norm_sq,
    }
}

/// Box-Muller standard normal; keeps the channel substream self-contained.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.random();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}

/// One UE's task for one slot.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    /// Maximum end-to-end latency (s).
    pub deadline: f64,
    /// Task size (bits).
    pub size_bits: f64,
    /// Required CPU cycles.
    pub cycles: f64,
    /// Requested service.
    pub service_id: usize,
}

/// Requested service per UE for the current long-term frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestState {
    pub service: Vec<usize>,
    /// How many times the request set has been redrawn.
    pub regenerations: usize,
}

/// Redraw every UE's requested service at frame 0 and every
/// [`REQUEST_REDRAW_PERIOD`] frames thereafter; otherwise leave unchanged.
pub fn advance_requests(
    state: &mut RequestState,
    frame_index: usize,
    rng: &mut ChaCha8Rng,
    num_services: usize,
) {
    if frame_index % REQUEST_REDRAW_PERIOD == 0 {
        for s in state.service.iter_mut() {
            *s = rng.random_range(0..num_services);
        }
        state.regenerations += 1;
    }
}

/// A fully generated scenario: validated config, geometry, and the fixed
/// large-scale fading. Small-scale fading and tasks are drawn per slot.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub distances: Distances,
    /// Large-scale linear power gain per (m, k); fixed for the whole run.
    pub path_loss: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn build(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        let cfg = generate_topology(cfg)?;
        let ue_es: Vec<Vec<f64>> = cfg
            .ue_positions
            .iter()
            .map(|&u| cfg.es_positions.iter().map(|&e| euclid(u, e).max(1.0)).collect())
            .collect();
        let es_es: Vec<Vec<f64>> = cfg
            .es_positions
            .iter()
            .map(|&a| cfg.es_positions.iter().map(|&b| euclid(a, b)).collect())
            .collect();
        let es_cloud = vec![cfg.cloud_distance; cfg.num_ess];
        let mut path_loss = Vec::with_capacity(cfg.num_ues);
        for m in 0..cfg.num_ues {
            let mut row = Vec::with_capacity(cfg.num_ess);
            for k in 0..cfg.num_ess {
                row.push(units::db_to_linear(path_loss_db(ue_es[m][k])?));
            }
            path_loss.push(row);
        }
        Ok(Scenario {
            cfg,
            distances: Distances { ue_es, es_es, es_cloud },
            path_loss,
        })
    }

    pub fn substream(&self, stream: Stream) -> ChaCha8Rng {
        substream(self.cfg.rng_seed, stream)
    }

    /// Draw the small-scale fading for one slot from the channel substream.
    pub fn draw_slot_channel(&self, rng: &mut ChaCha8Rng) -> ChannelState {
        let entries = (0..self.cfg.num_ues)
            .map(|m| {
                (0..self.cfg.num_ess)
                    .map(|k| draw_channel(rng, self.cfg.antennas, self.path_loss[m][k]))
                    .collect()
            })
            .collect();
        ChannelState { entries }
    }

    /// Draw the per-UE tasks for one slot: fixed size, cycle counts uniform
    /// within the complexity band, service from the current requests.
    pub fn draw_slot_tasks(&self, rng: &mut ChaCha8Rng, requests: &RequestState) -> Vec<TaskSpec> {
        (0..self.cfg.num_ues)
            .map(|m| {
                let cpb = rng.random_range(self.cfg.complexity_min..=self.cfg.complexity_max);
                TaskSpec {
                    deadline: self.cfg.latency_cap,
                    size_bits: self.cfg.task_size_bits(),
                    cycles: cpb * self.cfg.task_size_bytes,
                    service_id: requests.service[m],
                }
            })
            .collect()
    }

    pub fn initial_requests(&self, rng: &mut ChaCha8Rng) -> RequestState {
        let mut state = RequestState {
            service: vec![0; self.cfg.num_ues],
            regenerations: 0,
        };
        advance_requests(&mut state, 0, rng, self.cfg.num_services);
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_reference_layouts() {
        let cfg = ScenarioConfig { num_ess: 2, ..Default::default() };
        let cfg = generate_topology(cfg).unwrap();
        assert_eq!(cfg.es_positions, vec![[66.0, 100.0], [133.0, 100.0]]);

        let cfg = ScenarioConfig { num_ess: 4, ..Default::default() };
        let cfg = generate_topology(cfg).unwrap();
        assert_eq!(
            cfg.es_positions,
            vec![[40.0, 100.0], [80.0, 100.0], [120.0, 100.0], [160.0, 100.0]]
        );
    }

    #[test]
    fn topology_general_k_even_spacing() {
        let cfg = ScenarioConfig { num_ess: 3, ..Default::default() };
        let cfg = generate_topology(cfg).unwrap();
        for (k, pos) in cfg.es_positions.iter().enumerate() {
            let expect = 200.0 * (k + 1) as f64 / 4.0;
            assert!((pos[0] - expect).abs() < 1e-12);
            assert_eq!(pos[1], 100.0);
        }
    }

    #[test]
    fn ue_positions_inside_area_and_reproducible() {
        let cfg = generate_topology(ScenarioConfig::default()).unwrap();
        assert_eq!(cfg.ue_positions.len(), 8);
        for p in &cfg.ue_positions {
            assert!(p[0] >= 0.0 && p[0] <= 200.0 && p[1] >= 0.0 && p[1] <= 200.0);
        }
        let again = generate_topology(ScenarioConfig::default()).unwrap();
        assert_eq!(cfg.ue_positions, again.ue_positions);
    }

    #[test]
    fn path_loss_reference_points() {
        assert!((path_loss_db(1.0).unwrap() - (-35.3)).abs() < 1e-12);
        assert!((path_loss_db(10.0).unwrap() - (-72.9)).abs() < 1e-12);
        let d50 = -35.3 - 37.6 * 50f64.log10();
        assert!((path_loss_db(50.0).unwrap() - d50).abs() < 1e-12);
        assert!((d50 - (-99.2)).abs() < 0.1);
        assert!(path_loss_db(0.0).is_err());
    }

    #[test]
    fn path_loss_decreasing_in_distance() {
        let mut prev = f64::INFINITY;
        for d in [1.0, 2.0, 5.0, 10.0, 50.0, 100.0, 200.0] {
            let g = units::db_to_linear(path_loss_db(d).unwrap());
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn channel_gain_is_product() {
        let mut rng = substream(7, Stream::Channels);
        let e = draw_channel(&mut rng, 4, 0.5);
        let norm_sq: f64 = e.small_scale.iter().map(|h| h.norm_sqr()).sum();
        assert!((e.gain - 0.5 * norm_sq).abs() < 1e-12);
        // PL = 0.5 with |h|^2 = 4 gives gain 2.
        assert!((0.5 * 4.0 - 2.0_f64).abs() < 1e-12);
    }

    #[test]
    fn channel_norm_mean_matches_antenna_count() {
        let mut rng = substream(42, Stream::Channels);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let e = draw_channel(&mut rng, 8, 1.0);
            acc += e.gain;
        }
        let mean = acc / n as f64;
        assert!((7.9..=8.1).contains(&mean), "mean |h|^2 = {mean}");
    }

    #[test]
    fn requests_redraw_every_five_frames() {
        let cfg = ScenarioConfig::default();
        let scenario = Scenario::build(cfg).unwrap();
        let mut rng = scenario.substream(Stream::Requests);
        let mut state = scenario.initial_requests(&mut rng);
        assert_eq!(state.regenerations, 1);
        let frame0 = state.service.clone();
        for frame in 1..REQUEST_REDRAW_PERIOD {
            advance_requests(&mut state, frame, &mut rng, 8);
            assert_eq!(state.service, frame0, "frame {frame} must keep frame-0 requests");
        }
        advance_requests(&mut state, REQUEST_REDRAW_PERIOD, &mut rng, 8);
        assert_eq!(state.regenerations, 2);

        // Seeded replay reproduces the redraw bit for bit.
        let mut rng2 = scenario.substream(Stream::Requests);
        let mut state2 = scenario.initial_requests(&mut rng2);
        for frame in 1..=REQUEST_REDRAW_PERIOD {
            advance_requests(&mut state2, frame, &mut rng2, 8);
        }
        assert_eq!(state, state2);
    }

    #[test]
    fn same_seed_identical_channels_and_tasks() {
        let scenario = Scenario::build(ScenarioConfig::default()).unwrap();
        let mut a = scenario.substream(Stream::Channels);
        let mut b = scenario.substream(Stream::Channels);
        let ca = scenario.draw_slot_channel(&mut a);
        let cb = scenario.draw_slot_channel(&mut b);
        for m in 0..8 {
            for k in 0..2 {
                assert_eq!(ca.gain(m, k).to_bits(), cb.gain(m, k).to_bits());
            }
        }
        let mut ta = scenario.substream(Stream::Tasks);
        let mut tb = scenario.substream(Stream::Tasks);
        let req = RequestState { service: vec![0; 8], regenerations: 0 };
        let xs = scenario.draw_slot_tasks(&mut ta, &req);
        let ys = scenario.draw_slot_tasks(&mut tb, &req);
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(x.cycles.to_bits(), y.cycles.to_bits());
        }
    }

    #[test]
    fn task_complexity_band_holds() {
        let scenario = Scenario::build(ScenarioConfig::default()).unwrap();
        let mut rng = scenario.substream(Stream::Tasks);
        let req = RequestState { service: vec![3; 8], regenerations: 0 };
        for _ in 0..50 {
            for t in scenario.draw_slot_tasks(&mut rng, &req) {
                let cpb = t.cycles / (t.size_bits / 8.0);
                assert!((200.0..=500.0).contains(&cpb));
                assert_eq!(t.service_id, 3);
            }
        }
    }

    #[test]
    fn config_file_roundtrip_and_defaults() {
        let text = r#"
            [network]
            num_ues = 4
            num_ess = 2

            [radio]
            tx_power_dbm = 23.0
            noise_density_dbm_per_hz = -174.0

            [prices]
            install = 0.2

            [sim]
            rng_seed = 9
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.num_ues, 4);
        assert!((cfg.tx_power - 0.19953).abs() < 1e-4);
        assert!((cfg.price_install - 0.2).abs() < 1e-12);
        assert!((cfg.bandwidth - 10e6).abs() < 1e-6);
        assert_eq!(cfg.rng_seed, 9);
        assert!(ScenarioConfig::from_toml_str("[radio]\nbogus = 1").is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        let cfg = ScenarioConfig { weight_latency: 0.8, weight_cost: 0.1, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
