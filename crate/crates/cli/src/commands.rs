use std::fs;
use std::io::BufWriter;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use kinon::analysis::{linspace, sweep as run_sweep, ClassifierConfig, MapFamily};
use kinon::engine::{run as run_scenario, InitialSpec, RunSpec, Scenario, ScheduleEntry, TopologySpec, Total};
use kinon::io::{decode_pgm, encode_pgm, frame_pixels, read_scenario, write_frame, write_sweep, MetricsWriter, SpaceTime};
use kinon::{presets, MapSpec};
use kinon_steer::{ServeError, Server};

use crate::{Overrides, Source};

pub enum Failure {
    Validation(String),
    Numerical(String),
    Bind(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Bind(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Bind(m) | Failure::Io(m) => m,
        }
    }
}

impl From<kinon::Error> for Failure {
    fn from(e: kinon::Error) -> Self {
        match e {
            kinon::Error::NumericalFault { .. } => Failure::Numerical(e.to_string()),
            e if e.is_validation() => Failure::Validation(e.to_string()),
            e => Failure::Io(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn io_failure(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn apply(mut scenario: Scenario, overrides: &Overrides) -> Result<Scenario> {
    if let Some(steps) = overrides.steps {
        scenario.run.steps = steps;
    }
    if let Some(every) = overrides.frame_every {
        scenario.run.frame_every = every;
    }
    if let Some(seed) = overrides.seed {
        scenario.initial.set_seed(seed);
    }
    scenario.validate()?;
    Ok(scenario)
}

pub(crate) fn load(source: &Source, overrides: &Overrides) -> Result<Scenario> {
    let scenario = match (&source.scenario, &source.preset) {
        (Some(path), None) => read_scenario(path)?,
        (None, Some(name)) => presets::load(name)?,
        _ => return Err(Failure::Validation("exactly one of --scenario or --preset is required".into())),
    };
    apply(scenario, overrides)
}

/// Near-equilibrium ring of 256 kinons, long enough for the classifier.
fn default_sweep_template() -> Scenario {
    Scenario {
        topology: TopologySpec::Ring { n: 256 },
        initial: InitialSpec::NearEquilibrium { epsilon: 1e-3, total: Total::Auto, seed: 1 },
        maps: vec![ScheduleEntry { from_step: 0, map: MapSpec::Identity }],
        run: RunSpec { steps: 1000, frame_every: 1, metrics_every: 1 },
    }
}

pub(crate) fn load_or_default(source: &Source, overrides: &Overrides) -> Result<Scenario> {
    if source.scenario.is_none() && source.preset.is_none() {
        return apply(default_sweep_template(), overrides);
    }
    load(source, overrides)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_failure(dir))
}

pub(crate) fn run(scenario: &Scenario, out: &Path) -> Result<()> {
    create_dir(out)?;
    let metrics_path = out.join("metrics.csv");
    let file = fs::File::create(&metrics_path).map_err(io_failure(&metrics_path))?;
    let mut metrics = MetricsWriter::new(BufWriter::new(file))?;
    let mut space_time = SpaceTime::default();
    let one_row = scenario.topology.build()?.frame_dims().1 == 1;
    run_scenario(
        scenario,
        |state| {
            if one_row {
                space_time.push(&frame_pixels(state));
            }
            write_frame(state, out.join(frame_name(state.step())))
        },
        |record| metrics.push(record),
    )?;
    metrics.finish().map_err(io_failure(&metrics_path))?;
    if one_row {
        let path = out.join("spacetime.pgm");
        fs::write(&path, space_time.to_pgm()).map_err(io_failure(&path))?;
    }
    Ok(())
}

fn frame_name(step: u64) -> String {
    format!("frame_{step:06}.pgm")
}

pub(crate) fn sweep(template: &Scenario, family: &str, k_min: f64, k_max: f64, k_count: usize, out: &Path) -> Result<()> {
    let family: MapFamily = family.parse()?;
    if k_count < 2 {
        return Err(Failure::Validation(format!("invalid k_count: need at least 2, got {k_count}")));
    }
    if !(k_min.is_finite() && k_max.is_finite() && k_min < k_max) {
        return Err(Failure::Validation(format!("invalid k range: need k_min < k_max, got {k_min} and {k_max}")));
    }
    let config = ClassifierConfig::default();
    if template.run.steps < config.min_steps() {
        return Err(Failure::Validation(format!("invalid run.steps: a sweep needs at least {} steps, got {}", config.min_steps(), template.run.steps)));
    }
    let rows = run_sweep(family, &linspace(k_min, k_max, k_count), template, &config)?;
    create_dir(out)?;
    write_sweep(&rows, out.join("sweep.csv"))?;
    if let Some(Err(first)) = rows.first().map(|r| &r.outcome).filter(|_| rows.iter().all(|r| r.outcome.is_err())) {
        return Err(Failure::Numerical(format!("every sweep row failed; first: {first}")));
    }
    Ok(())
}

/// Frames in `dir` named like `frame_000010.pgm`, in step order.
fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("frame_") && n.ends_with(".pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Validation(format!("{}: no frame_*.pgm files", dir.display())));
    }
    Ok(files)
}

const SHEET_GAP: usize = 2;

pub(crate) fn render(frames: &Path, out: &Path) -> Result<()> {
    let mut images = Vec::new();
    for path in frame_files(frames)? {
        let bytes = fs::read(&path).map_err(io_failure(&path))?;
        let image = decode_pgm(&bytes).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        images.push(image);
    }
    let (w, h) = (images[0].0, images[0].1);
    if images.iter().any(|(iw, ih, _)| (*iw, *ih) != (w, h)) {
        return Err(Failure::Validation("frames have different sizes".into()));
    }
    let bytes = if h == 1 {
        let mut sheet = SpaceTime::default();
        for (_, _, row) in &images {
            sheet.push(row);
        }
        sheet.to_pgm()
    } else {
        let cols = (images.len() as f64).sqrt().ceil() as usize;
        let rows = images.len().div_ceil(cols);
        let sw = cols * w + (cols - 1) * SHEET_GAP;
        let sh = rows * h + (rows - 1) * SHEET_GAP;
        let mut pixels = vec![255u8; sw * sh];
        for (i, (_, _, px)) in images.iter().enumerate() {
            let (x0, y0) = ((i % cols) * (w + SHEET_GAP), (i / cols) * (h + SHEET_GAP));
            for y in 0..h {
                let at = (y0 + y) * sw + x0;
                pixels[at..at + w].copy_from_slice(&px[y * w..(y + 1) * w]);
            }
        }
        encode_pgm(sw, sh, &pixels)
    };
    fs::write(out, bytes).map_err(io_failure(out))
}

fn socket_addr(bind: &str, port: &str) -> Result<SocketAddr> {
    let port: u16 = port.parse().map_err(|_| Failure::Bind(format!("invalid port {port:?}")))?;
    let ip: IpAddr = bind.parse().map_err(|_| Failure::Bind(format!("invalid bind address {bind:?}")))?;
    Ok(SocketAddr::new(ip, port))
}

pub(crate) fn serve(scenario: Scenario, bind: &str, port: &str) -> Result<()> {
    let addr = socket_addr(bind, port)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime.block_on(async {
        let server = Server::start(scenario, addr).await.map_err(|e| match e {
            ServeError::Scenario(e) => Failure::from(e),
            ServeError::Bind(e) => Failure::Bind(format!("cannot bind {addr}: {e}")),
        })?;
        println!("listening on ws://{}", server.local_addr());
        server.wait().await;
        Ok(())
    })
}
