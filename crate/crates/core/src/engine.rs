//! Scenarios, seeding, the run loop and external commands.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{MetricsRecord, MetricsTracker};
use crate::maps::{KineticMap, MapSchedule, MapSpec};
use crate::network::{NetworkState, Quantum};
use crate::topology::{Neighborhood, Topology};
use crate::{Error, Result};

/// Largest seed a scenario document can hold: TOML integers are signed.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Relative noise amplitude of near-equilibrium seeding when none is given.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// A reproducible experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub topology: TopologySpec,
    pub initial: InitialSpec,
    pub maps: Vec<ScheduleEntry>,
    pub run: RunSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Ring {
        n: usize,
    },
    Torus {
        width: usize,
        height: usize,
        #[serde(default)]
        neighborhood: Neighborhood,
    },
    Edges {
        nodes: usize,
        edges: Vec<[usize; 2]>,
    },
}

/// Initial condition. All quantity starts in storage; link buffers are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Uniform {
        #[serde(default)]
        total: Total,
        #[serde(default)]
        seed: u64,
    },
    NearEquilibrium {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        total: Total,
        #[serde(default)]
        seed: u64,
    },
    Singularity {
        positions: Vec<Position>,
        #[serde(default)]
        total: Total,
        #[serde(default)]
        seed: u64,
    },
    Random {
        #[serde(default)]
        seed: u64,
    },
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Network total: `auto` is half the node count (mean storage 0.5).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TotalRepr", into = "TotalRepr")]
pub enum Total {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TotalRepr {
    Word(String),
    Number(f64),
}

impl TryFrom<TotalRepr> for Total {
    type Error = String;

    fn try_from(repr: TotalRepr) -> std::result::Result<Self, String> {
        match repr {
            TotalRepr::Word(w) if w == "auto" => Ok(Total::Auto),
            TotalRepr::Word(w) => Err(format!("total must be \"auto\" or a number, got {w:?}")),
            TotalRepr::Number(v) => Ok(Total::Value(v)),
        }
    }
}

impl From<Total> for TotalRepr {
    fn from(t: Total) -> Self {
        match t {
            Total::Auto => TotalRepr::Word("auto".into()),
            Total::Value(v) => TotalRepr::Number(v),
        }
    }
}

/// A node index, or an `[x, y]` cell on a torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Position {
    Index(usize),
    Cell([usize; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub from_step: u64,
    pub map: MapSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub steps: u64,
    #[serde(default = "one")]
    pub frame_every: u64,
    #[serde(default = "one")]
    pub metrics_every: u64,
}

fn one() -> u64 {
    1
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        match self {
            TopologySpec::Ring { n } => Topology::ring(*n),
            TopologySpec::Torus { width, height, neighborhood } => Topology::torus(*width, *height, *neighborhood),
            TopologySpec::Edges { nodes, edges } => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                Topology::from_edges(*nodes, &pairs)
            }
        }
    }
}

impl InitialSpec {
    pub fn seed(&self) -> u64 {
        match self {
            InitialSpec::Uniform { seed, .. }
            | InitialSpec::NearEquilibrium { seed, .. }
            | InitialSpec::Singularity { seed, .. }
            | InitialSpec::Random { seed } => *seed,
        }
    }

    pub fn set_seed(&mut self, value: u64) {
        match self {
            InitialSpec::Uniform { seed, .. }
            | InitialSpec::NearEquilibrium { seed, .. }
            | InitialSpec::Singularity { seed, .. }
            | InitialSpec::Random { seed } => *seed = value,
        }
    }

    /// The network total this condition asks for, or `None` when it is
    /// whatever the random draw produces.
    pub fn resolved_total(&self, topology: &Topology) -> Option<f64> {
        let total = match self {
            InitialSpec::Uniform { total, .. }
            | InitialSpec::NearEquilibrium { total, .. }
            | InitialSpec::Singularity { total, .. } => *total,
            InitialSpec::Random { .. } => return None,
        };
        Some(match total {
            Total::Auto => topology.node_count() as f64 / 2.0,
            Total::Value(v) => v,
        })
    }

    /// Seeds a fresh state on `topology`.
    pub fn build(&self, topology: &Arc<Topology>) -> Result<NetworkState> {
        if let Some(q) = self.resolved_total(topology) {
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::invalid("initial.total", format!("{q} is not a positive finite quantity")));
            }
        }
        let q = self.resolved_total(topology).unwrap_or(0.0);
        let mut rng = rng_from_seed(self.seed());
        match self {
            InitialSpec::Uniform { .. } => Ok(seed_uniform(topology.clone(), q)),
            InitialSpec::NearEquilibrium { epsilon, .. } => seed_near_equilibrium(topology.clone(), q, *epsilon, &mut rng),
            InitialSpec::Singularity { positions, .. } => {
                let nodes = positions
                    .iter()
                    .enumerate()
                    .map(|(i, p)| resolve_position(topology, *p).ok_or_else(|| Error::invalid(format!("initial.positions[{i}]"), format!("{p:?} is not a node of this topology"))))
                    .collect::<Result<Vec<_>>>()?;
                seed_singularity(topology.clone(), q, &nodes)
            }
            InitialSpec::Random { .. } => Ok(seed_random(topology.clone(), &mut rng)),
        }
    }
}

fn resolve_position(topology: &Topology, p: Position) -> Option<usize> {
    match p {
        Position::Index(i) if i < topology.node_count() => Some(i),
        Position::Index(_) => None,
        Position::Cell([x, y]) => topology.cell(x, y),
    }
}

impl Scenario {
    /// Checks every field and returns the built topology and schedule.
    pub fn validate(&self) -> Result<(Arc<Topology>, MapSchedule)> {
        let topology = Arc::new(self.topology.build()?);
        let schedule = self.schedule()?;
        if self.initial.seed() > MAX_SEED {
            return Err(Error::invalid("initial.seed", format!("{} exceeds {MAX_SEED}", self.initial.seed())));
        }
        if self.run.steps < 1 {
            return Err(Error::invalid("run.steps", "must be at least 1"));
        }
        if self.run.frame_every < 1 {
            return Err(Error::invalid("run.frame_every", "must be at least 1"));
        }
        if self.run.metrics_every < 1 {
            return Err(Error::invalid("run.metrics_every", "must be at least 1"));
        }
        if let InitialSpec::NearEquilibrium { epsilon, .. } = self.initial {
            if !(0.0..0.5).contains(&epsilon) {
                return Err(Error::invalid("initial.epsilon", format!("{epsilon} is not in [0, 0.5)")));
            }
        }
        self.initial.build(&topology)?;
        Ok((topology, schedule))
    }

    pub fn schedule(&self) -> Result<MapSchedule> {
        let specs: Vec<(u64, MapSpec)> = self.maps.iter().map(|e| (e.from_step, e.map.clone())).collect();
        MapSchedule::from_specs(&specs)
    }

    /// A copy whose schedule is a single map from step 0.
    pub fn with_map(&self, map: &KineticMap) -> Scenario {
        Scenario { maps: vec![ScheduleEntry { from_step: 0, map: map.spec() }], ..self.clone() }
    }
}

/// The portable generator behind every seeded draw: ChaCha with 8 rounds,
/// keyed through `SeedableRng::seed_from_u64`.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A uniform draw from `[0, 1)`: the top 53 bits of the next `u64`.
pub fn unit_draw(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn empty_links(topology: &Topology) -> Vec<f64> {
    vec![0.0; topology.half_link_count()]
}

/// Every kinon stores `q / node_count`.
pub fn seed_uniform(topology: Arc<Topology>, q: f64) -> NetworkState {
    let quantum = Quantum::for_bound(q);
    let share = quantum.snap(q / topology.node_count() as f64);
    let storage = vec![share; topology.node_count()];
    let links = empty_links(&topology);
    NetworkState::on_grid(topology, storage, links, quantum)
}

/// Uniform storage perturbed by `u * epsilon` relative noise, `u` uniform in
/// `[-1, 1]`, then rescaled so the total is exactly `q`.
pub fn seed_near_equilibrium(topology: Arc<Topology>, q: f64, epsilon: f64, rng: &mut impl RngCore) -> Result<NetworkState> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::invalid("initial.epsilon", format!("{epsilon} is not in [0, 0.5)")));
    }
    let n = topology.node_count();
    let mean = q / n as f64;
    let raw: Vec<f64> = (0..n).map(|_| mean * (1.0 + (2.0 * unit_draw(rng) - 1.0) * epsilon)).collect();
    let raw_total = crate::sum::compensated_sum(raw.iter().copied());
    let quantum = Quantum::for_bound(q);
    let mut storage: Vec<f64> = raw.iter().map(|v| quantum.snap(v * (q / raw_total))).collect();
    let residual = quantum.snap(q) - storage.iter().sum::<f64>();
    storage[0] += residual;
    let links = empty_links(&topology);
    Ok(NetworkState::on_grid(topology, storage, links, quantum))
}

/// `q` split evenly over `positions`, nothing elsewhere.
pub fn seed_singularity(topology: Arc<Topology>, q: f64, positions: &[usize]) -> Result<NetworkState> {
    if positions.is_empty() {
        return Err(Error::invalid("initial.positions", "no positions given"));
    }
    let mut storage = vec![0.0; topology.node_count()];
    let quantum = Quantum::for_bound(q);
    let share = quantum.snap(q / positions.len() as f64);
    for (i, &p) in positions.iter().enumerate() {
        if p >= storage.len() {
            return Err(Error::invalid(format!("initial.positions[{i}]"), format!("node {p} does not exist")));
        }
        if storage[p] != 0.0 {
            return Err(Error::invalid(format!("initial.positions[{i}]"), format!("node {p} listed twice")));
        }
        storage[p] = share;
    }
    let links = empty_links(&topology);
    Ok(NetworkState::on_grid(topology, storage, links, quantum))
}

/// Each storage drawn uniformly from `[0, 1)`.
pub fn seed_random(topology: Arc<Topology>, rng: &mut impl RngCore) -> NetworkState {
    let quantum = Quantum::for_bound(topology.node_count() as f64);
    let storage = (0..topology.node_count()).map(|_| unit_draw(rng)).collect();
    let links = empty_links(&topology);
    NetworkState::on_grid(topology, storage, links, quantum)
}

/// An operator command, applied only between steps.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    /// Use `map` from the current step on, discarding later schedule entries.
    SetMap(KineticMap),
    Pause,
    Resume,
    /// Advance exactly one step. Only valid while paused.
    Step,
    /// Re-seed with a different initial condition, keeping the current map.
    Reseed(InitialSpec),
    /// Restore the scenario's initial state and schedule.
    Reset,
}

/// Owns the state of one scenario between observation points.
#[derive(Clone, Debug)]
pub struct Engine {
    scenario: Scenario,
    topology: Arc<Topology>,
    state: NetworkState,
    schedule: MapSchedule,
    paused: bool,
    tracker: MetricsTracker,
}

impl Engine {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let (topology, schedule) = scenario.validate()?;
        let state = scenario.initial.build(&topology)?;
        Ok(Engine { scenario, topology, state, schedule, paused: false, tracker: MetricsTracker::default() })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn schedule(&self) -> &MapSchedule {
        &self.schedule
    }

    pub fn step_index(&self) -> u64 {
        self.state.step()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool) {
        self.paused = paused;
    }

    /// The map the next step will use.
    pub fn current_map(&self) -> &KineticMap {
        self.schedule.lookup(self.state.step())
    }

    /// Advances one step with the scheduled map, ignoring the pause flag.
    pub fn advance(&mut self) -> Result<()> {
        let map = self.schedule.lookup(self.state.step()).clone();
        self.state.step_network(&map)
    }

    /// Measures the current state and feeds the temporal-activity window.
    pub fn record_metrics(&mut self) -> MetricsRecord {
        self.tracker.record(&self.state)
    }

    /// Applies a command at the current step boundary. On error the engine is
    /// left untouched.
    pub fn apply(&mut self, command: Command) -> Result<()> {
        match command {
            Command::SetMap(map) => self.schedule.replace_tail(self.state.step(), map),
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Step => {
                if !self.paused {
                    return Err(Error::invalid("transport", "step is only accepted while paused"));
                }
                self.advance()?;
            }
            Command::Reseed(initial) => {
                let state = initial.build(&self.topology)?;
                self.schedule = MapSchedule::constant(self.current_map().clone());
                self.state = state;
                self.tracker.clear();
            }
            Command::Reset => {
                self.state = self.scenario.initial.build(&self.topology)?;
                self.schedule = self.scenario.schedule()?;
                self.tracker.clear();
            }
        }
        Ok(())
    }
}

/// Runs a scenario to completion.
///
/// `on_frame` sees the state at step 0 and every `frame_every` steps after;
/// `on_metrics` likewise every `metrics_every` steps.
pub fn run<F, M>(scenario: &Scenario, mut on_frame: F, mut on_metrics: M) -> Result<NetworkState>
where
    F: FnMut(&NetworkState) -> Result<()>,
    M: FnMut(&MetricsRecord) -> Result<()>,
{
    let mut engine = Engine::new(scenario.clone())?;
    let RunSpec { steps, frame_every, metrics_every } = scenario.run;
    loop {
        let step = engine.step_index();
        if step % frame_every == 0 {
            on_frame(engine.state())?;
        }
        if step % metrics_every == 0 {
            let record = engine.record_metrics();
            on_metrics(&record)?;
        }
        if step >= steps {
            break;
        }
        engine.advance()?;
    }
    Ok(engine.state)
}

/// Runs `steps` steps and hands every intermediate state to `observe`.
pub fn trajectory(scenario: &Scenario, steps: u64, mut observe: impl FnMut(&NetworkState)) -> Result<NetworkState> {
    let mut engine = Engine::new(scenario.clone())?;
    observe(engine.state());
    for _ in 0..steps {
        engine.advance()?;
        observe(engine.state());
    }
    Ok(engine.state)
}
