//! Energy audit, order parameters, regime classification and parameter sweeps.

use std::collections::VecDeque;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, Scenario};
use crate::maps::{KineticMap, MapSpec};
use crate::network::NetworkState;
use crate::{Error, Result};

pub use crate::contour::{circularity, circularity_of_field, Circularity};

/// One sample of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub total: f64,
    /// Sum of storage.
    pub internal: f64,
    /// Sum of quantity in transit.
    pub external: f64,
    pub spatial_std: f64,
    pub spatial_entropy: f64,
    pub temporal_activity: f64,
}

/// `(internal, external)` energy.
pub fn energies(state: &NetworkState) -> (f64, f64) {
    (state.internal(), state.external())
}

/// Population standard deviation of storage across kinons.
pub fn order_parameter(state: &NetworkState) -> f64 {
    population_std(state.storage())
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    if values.is_empty() {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Shannon entropy of storage normalized to a distribution, divided by
/// `ln(n)` so it lies in `[0, 1]`. An empty network has entropy 0.
pub fn spatial_entropy(storage: &[f64]) -> f64 {
    let total: f64 = storage.iter().sum();
    if total <= 0.0 || storage.len() < 2 {
        return 0.0;
    }
    let h: f64 = storage
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    h / (storage.len() as f64).ln()
}

/// Mean over kinons of each kinon's storage standard deviation over time.
pub fn temporal_activity<'a>(window: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let frames: Vec<&[f64]> = window.into_iter().collect();
    let Some(first) = frames.first() else { return 0.0 };
    let n = first.len();
    if n == 0 || frames.len() < 2 {
        return 0.0;
    }
    let t = frames.len() as f64;
    let mut acc = 0.0;
    for node in 0..n {
        let m = frames.iter().map(|f| f[node]).sum::<f64>() / t;
        let var = frames.iter().map(|f| (f[node] - m).powi(2)).sum::<f64>() / t;
        acc += var.sqrt();
    }
    acc / n as f64
}

/// Produces [`MetricsRecord`]s, keeping the last few sampled storage fields
/// for the temporal-activity column.
#[derive(Clone, Debug)]
pub struct MetricsTracker {
    window: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl Default for MetricsTracker {
    fn default() -> Self {
        Self::new(16)
    }
}

impl MetricsTracker {
    pub fn new(capacity: usize) -> Self {
        MetricsTracker { window: VecDeque::with_capacity(capacity), capacity: capacity.max(1) }
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn record(&mut self, state: &NetworkState) -> MetricsRecord {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(state.storage().to_vec());
        let (internal, external) = energies(state);
        MetricsRecord {
            step: state.step(),
            total: internal + external,
            internal,
            external,
            spatial_std: order_parameter(state),
            spatial_entropy: spatial_entropy(state.storage()),
            temporal_activity: temporal_activity(self.window.iter().map(Vec::as_slice)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Uniform,
    StableNonuniform,
    Periodic,
    Chaotic,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Uniform => "uniform",
            Regime::StableNonuniform => "stable_nonuniform",
            Regime::Periodic => "periodic",
            Regime::Chaotic => "chaotic",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A regime plus the evidence behind it. Spatial and temporal figures are in
/// units of the mean quantity per kinon.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeLabel {
    pub regime: Regime,
    /// Largest spatial standard deviation seen in the window.
    pub spatial_std: f64,
    pub temporal_activity: f64,
    /// Best correlation of the spatial-std series with a lagged copy, when
    /// the classifier got that far.
    pub autocorrelation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    /// Fraction of a run discarded as transient before the window.
    pub transient_fraction: f64,
    /// Number of consecutive per-step storage fields classified.
    pub window: usize,
    pub spatial_threshold: f64,
    pub temporal_threshold: f64,
    pub max_lag: usize,
    pub periodic_correlation: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            transient_fraction: 0.2,
            window: 512,
            spatial_threshold: 1e-3,
            temporal_threshold: 1e-3,
            max_lag: 128,
            periodic_correlation: 0.9,
        }
    }
}

impl ClassifierConfig {
    /// Fewest steps a run needs for a full window after the transient.
    pub fn min_steps(&self) -> u64 {
        (self.window as f64 / (1.0 - self.transient_fraction)).ceil() as u64
    }
}

/// Classifies consecutive storage fields.
///
/// `unit` is the mean quantity per kinon; thresholds are relative to it. A
/// window that is spatially flat at every sample is uniform whatever its
/// temporal behaviour; otherwise low activity means a stable non-uniform
/// pattern, and active windows are periodic when the spatial-std series
/// correlates above the threshold with a lagged copy of itself, chaotic if not.
pub fn classify(window: &[Vec<f64>], unit: f64, config: &ClassifierConfig) -> Result<RegimeLabel> {
    if window.len() < config.window {
        return Err(Error::invalid("window", format!("{} fields, classifier needs {}", window.len(), config.window)));
    }
    let window = &window[window.len() - config.window..];
    let unit = if unit > 0.0 { unit } else { 1.0 };
    let series: Vec<f64> = window.iter().map(|f| population_std(f) / unit).collect();
    let spatial_std = series.iter().copied().fold(0.0, f64::max);
    let temporal = temporal_activity(window.iter().map(Vec::as_slice)) / unit;
    let label = |regime, autocorrelation| RegimeLabel { regime, spatial_std, temporal_activity: temporal, autocorrelation };
    if spatial_std < config.spatial_threshold {
        return Ok(label(Regime::Uniform, None));
    }
    if temporal < config.temporal_threshold {
        return Ok(label(Regime::StableNonuniform, None));
    }
    let rho = max_lagged_correlation(&series, config.max_lag);
    let regime = if rho > config.periodic_correlation { Regime::Periodic } else { Regime::Chaotic };
    Ok(label(regime, Some(rho)))
}

/// Largest Pearson correlation between `series` and itself shifted by
/// `1..=max_lag`. A constant series (a pattern moving rigidly) counts as
/// perfectly self-similar.
fn max_lagged_correlation(series: &[f64], max_lag: usize) -> f64 {
    let spread = series.iter().copied().fold(f64::NEG_INFINITY, f64::max) - series.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = series.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if spread <= 1e-12 * scale {
        return 1.0;
    }
    let mut best = f64::NEG_INFINITY;
    for lag in 1..=max_lag.min(series.len().saturating_sub(2)) {
        let (a, b) = (&series[..series.len() - lag], &series[lag..]);
        let (ma, mb) = (mean(a), mean(b));
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        let r = if va > 0.0 && vb > 0.0 { cov / (va * vb).sqrt() } else { 0.0 };
        best = best.max(r);
    }
    best
}

/// Runs `scenario` and classifies the last `config.window` steps.
pub fn run_and_classify(scenario: &Scenario, config: &ClassifierConfig) -> Result<ClassifiedRun> {
    let steps = scenario.run.steps;
    if steps < config.min_steps() {
        return Err(Error::invalid("run.steps", format!("{steps} steps leave no full window; need at least {}", config.min_steps())));
    }
    let mut engine = Engine::new(scenario.clone())?;
    let first_kept = steps + 1 - config.window as u64;
    let mut window = Vec::with_capacity(config.window);
    for _ in 0..steps {
        engine.advance()?;
        if engine.step_index() >= first_kept {
            window.push(engine.state().storage().to_vec());
        }
    }
    let state = engine.state();
    let unit = state.total() / state.topology().node_count() as f64;
    let label = classify(&window, unit, config)?;
    let phis: Vec<f64> = window.iter().map(|f| population_std(f)).collect();
    Ok(ClassifiedRun { phi_mean: mean(&phis), phi_last: *phis.last().unwrap_or(&0.0), label })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifiedRun {
    pub phi_mean: f64,
    pub phi_last: f64,
    pub label: RegimeLabel,
}

/// One-parameter map families for sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapFamily {
    /// `min(k r, 1)`.
    Gain,
    /// `r^k`.
    Gamma,
    /// `max(1 - k r, 0)`; `k = 1` is the negative map.
    NegativeGain,
}

impl MapFamily {
    pub fn map(self, k: f64) -> Result<KineticMap> {
        let spec = match self {
            MapFamily::Gain => MapSpec::Gain { k },
            MapFamily::Gamma => MapSpec::Gamma { gamma: k },
            MapFamily::NegativeGain => negative_gain_spec(k)?,
        };
        KineticMap::from_spec(&spec)
    }

    pub fn name(self) -> &'static str {
        match self {
            MapFamily::Gain => "gain",
            MapFamily::Gamma => "gamma",
            MapFamily::NegativeGain => "negative_gain",
        }
    }
}

impl std::str::FromStr for MapFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "gain" => Ok(MapFamily::Gain),
            "gamma" => Ok(MapFamily::Gamma),
            "negative_gain" => Ok(MapFamily::NegativeGain),
            _ => Err(Error::invalid("family", format!("unknown map family {s:?}; expected gain, gamma or negative_gain"))),
        }
    }
}

/// `max(1 - k r, 0)` as a piecewise-linear map. `k = 1` is the negative map.
pub fn negative_gain_spec(k: f64) -> Result<MapSpec> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid("map.k", format!("{k} is not a positive finite number")));
    }
    let points = if k <= 1.0 { vec![[0.0, 1.0], [1.0, 1.0 - k]] } else { vec![[0.0, 1.0], [1.0 / k, 0.0], [1.0, 0.0]] };
    Ok(MapSpec::PiecewiseLinear { points })
}

/// One row of a sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    pub outcome: std::result::Result<ClassifiedRun, String>,
}

impl SweepRow {
    pub fn label(&self) -> Option<Regime> {
        self.outcome.as_ref().ok().map(|r| r.label.regime)
    }
}

/// `count` evenly spaced values from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..count).map(|i| min + (max - min) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// Runs `template` once per `k` with the family's map from step 0 and
/// classifies each run. Failed rows carry their error; rows come back sorted
/// by `k`.
pub fn sweep(family: MapFamily, ks: &[f64], template: &Scenario, config: &ClassifierConfig) -> Result<Vec<SweepRow>> {
    if ks.len() < 2 {
        return Err(Error::invalid("k_values", format!("a sweep needs at least 2 values, got {}", ks.len())));
    }
    template.validate()?;
    let row = |&k: &f64| {
        let outcome = family
            .map(k)
            .and_then(|map| run_and_classify(&template.with_map(&map), config))
            .map_err(|e| e.to_string());
        SweepRow { k, outcome }
    };
    #[cfg(feature = "parallel")]
    let mut rows: Vec<SweepRow> = ks.par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let mut rows: Vec<SweepRow> = ks.iter().map(row).collect();
    rows.sort_by(|a, b| a.k.total_cmp(&b.k));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::engine::{seed_singularity, seed_uniform, InitialSpec, RunSpec, ScheduleEntry, Total, TopologySpec};
    use crate::topology::Topology;

    #[test]
    fn fresh_state_energies() {
        let s = seed_uniform(Arc::new(Topology::ring(10).unwrap()), 5.0);
        assert_eq!(energies(&s), (5.0, 0.0));
    }

    #[test]
    fn energy_moves_outward_after_a_step() {
        let mut s = seed_singularity(Arc::new(Topology::ring(3).unwrap()), 1.5, &[0]).unwrap();
        s.step_network(&KineticMap::Negative).unwrap();
        let (internal, external) = energies(&s);
        assert!(external > 0.0);
        assert_eq!(internal + external, 1.5);
    }

    #[test]
    fn order_parameter_closed_forms() {
        let u = seed_uniform(Arc::new(Topology::ring(10).unwrap()), 5.0);
        assert_eq!(order_parameter(&u), 0.0);
        let n = 12;
        let q = 6.0;
        let s = seed_singularity(Arc::new(Topology::ring(n).unwrap()), q, &[5]).unwrap();
        let expected = q / n as f64 * ((n - 1) as f64).sqrt();
        assert!((order_parameter(&s) - expected).abs() < 1e-12);
        let t = seed_singularity(Arc::new(Topology::ring(n).unwrap()), q, &[0]).unwrap();
        assert_eq!(order_parameter(&s), order_parameter(&t));
    }

    #[test]
    fn entropy_bounds() {
        assert!((spatial_entropy(&[0.5; 8]) - 1.0).abs() < 1e-12);
        assert_eq!(spatial_entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(spatial_entropy(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn temporal_activity_of_alternation() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        assert_eq!(temporal_activity([a.as_slice(), b.as_slice()]), 0.5);
        assert_eq!(temporal_activity([a.as_slice(), a.as_slice()]), 0.0);
    }

    fn small_config() -> ClassifierConfig {
        ClassifierConfig { window: 64, max_lag: 16, ..ClassifierConfig::default() }
    }

    #[test]
    fn classify_synthetic_windows() {
        let cfg = small_config();
        let flat = vec![vec![0.5; 3]; 64];
        assert_eq!(classify(&flat, 0.5, &cfg).unwrap().regime, Regime::Uniform);

        let still = vec![vec![1.0, 0.25, 0.25]; 64];
        assert_eq!(classify(&still, 0.5, &cfg).unwrap().regime, Regime::StableNonuniform);

        let alternating: Vec<Vec<f64>> = (0..64).map(|t| if t % 2 == 0 { vec![1.0, 0.25, 0.25] } else { vec![0.5, 0.5, 0.5] }).collect();
        let label = classify(&alternating, 0.5, &cfg).unwrap();
        assert_eq!(label.regime, Regime::Periodic);
        assert!(label.autocorrelation.unwrap() > 0.99);

        let mut rng = crate::engine::rng_from_seed(11);
        let noisy: Vec<Vec<f64>> = (0..64).map(|_| (0..3).map(|_| crate::engine::unit_draw(&mut rng)).collect()).collect();
        assert_eq!(classify(&noisy, 0.5, &cfg).unwrap().regime, Regime::Chaotic);

        assert!(classify(&flat[..10], 0.5, &cfg).is_err());
        assert_eq!(classify(&noisy, 0.5, &cfg).unwrap(), classify(&noisy, 0.5, &cfg).unwrap());
    }

    fn ring_template(initial: InitialSpec, steps: u64) -> Scenario {
        Scenario {
            topology: TopologySpec::Ring { n: 32 },
            initial,
            maps: vec![ScheduleEntry { from_step: 0, map: MapSpec::Identity }],
            run: RunSpec { steps, frame_every: 1, metrics_every: 1 },
        }
    }

    #[test]
    fn identity_run_has_no_activity() {
        let cfg = small_config();
        let t = ring_template(InitialSpec::Random { seed: 4 }, 100);
        let r = run_and_classify(&t, &cfg).unwrap();
        assert_eq!(r.label.temporal_activity, 0.0);
        assert_eq!(r.label.regime, Regime::StableNonuniform);
    }

    #[test]
    fn uniform_seed_classifies_uniform() {
        let cfg = small_config();
        for map in [KineticMap::Negative, KineticMap::Gamma(0.5), KineticMap::Gain(3.0), negative_gain(2.0)] {
            let t = ring_template(InitialSpec::Uniform { total: Total::Auto, seed: 0 }, 100).with_map(&map);
            assert_eq!(run_and_classify(&t, &cfg).unwrap().label.regime, Regime::Uniform, "{map}");
        }
    }

    fn negative_gain(k: f64) -> KineticMap {
        MapFamily::NegativeGain.map(k).unwrap()
    }

    #[test]
    fn negative_gain_family_shape() {
        let m = negative_gain(4.0);
        assert_eq!(m.eval(0.5).unwrap(), 0.0);
        assert!((m.eval(0.1).unwrap() - 0.6).abs() < 1e-12);
        assert!((negative_gain(0.5).eval(0.6).unwrap() - 0.7).abs() < 1e-12);
        let one = negative_gain(1.0);
        for i in 0..=10 {
            let r = i as f64 / 10.0;
            assert!((one.eval(r).unwrap() - (1.0 - r)).abs() < 1e-15);
        }
    }

    #[test]
    fn sweep_rows_are_ordered_and_annotated() {
        let cfg = small_config();
        let t = ring_template(InitialSpec::NearEquilibrium { epsilon: 1e-3, total: Total::Auto, seed: 1 }, 100);
        let rows = sweep(MapFamily::Gain, &[4.0, 0.5, 2.0, 1.0], &t, &cfg).unwrap();
        let ks: Vec<f64> = rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![0.5, 1.0, 2.0, 4.0]);
        let one = rows.iter().find(|r| r.k == 1.0).unwrap();
        assert_eq!(one.outcome.as_ref().unwrap().label.temporal_activity, 0.0);

        let rows = sweep(MapFamily::Gamma, &[-1.0, 1.0], &t, &cfg).unwrap();
        assert!(rows[0].outcome.is_err());
        assert!(rows[1].outcome.is_ok());
        assert!(sweep(MapFamily::Gain, &[1.0], &t, &cfg).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.5, 4.0, 32);
        assert_eq!(v.len(), 32);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[31], 4.0);
    }
}
