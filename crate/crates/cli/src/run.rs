//! Subcommand pipelines. Every failure carries the name of the stage it came from.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ctap_core::chipgeom::{ChipLayout, Ordering, WireId};
use ctap_core::consts::HBAR;
use ctap_core::initial::{coherent_length, initial_state, transverse_ground_state, Envelope, TransverseGroundState};
use ctap_core::magfield::{assemble_potential, chip_grid, transverse_spectrum, PotentialGrid};
use ctap_core::observables::{
    build_partition, density_xz, write_density_xz, GuidePartition, PopulationObserver, PopulationTrace,
};
use ctap_core::propagator::{
    evolve_real, EvolveReport, ImaginaryTimeOptions, Observer, ProgressReporter, StepPlan, TimeMode,
};
use ctap_core::qgrid::{gaussian_packet, SimGrid, Wavefunction};
use ctap_core::qwf::{self, QwfHeader};
use ctap_core::threemode::{self, PulsePair, ThreeModeState};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ExperimentConfig, SigmaZ};
use crate::manifest::{inventory, unix_now, RunManifest};

#[derive(Debug, Error)]
#[error("stage `{stage}` failed: {source:#}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: anyhow::Error,
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, source: e.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ThreeMode,
    Potential,
    GroundState,
    Evolve,
    Sweep,
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ThreeMode => "threemode",
            Command::Potential => "potential",
            Command::GroundState => "groundstate",
            Command::Evolve => "evolve",
            Command::Sweep => "sweep",
            Command::Bench => "bench",
        }
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, StageError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().stage("threads")?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `command` with outputs under `out` and writes the manifest.
pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<RunManifest, StageError> {
    fs::create_dir_all(out).stage("output")?;
    with_threads(threads.or(cfg.threads), || {
        let started = unix_now();
        let clock = Instant::now();
        let result = match command {
            Command::ThreeMode => run_threemode(cfg, out),
            Command::Potential => run_potential(cfg, out),
            Command::GroundState => run_groundstate(cfg, out),
            Command::Evolve => run_evolve(cfg, out),
            Command::Sweep => run_sweep(cfg, out),
            Command::Bench => run_bench(cfg, out),
        };
        let (artifacts, error) = match result {
            Ok(a) => (a, None),
            Err(Failed { artifacts, error }) => (artifacts, Some(error)),
        };
        let manifest = RunManifest {
            command: command.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: error.as_ref().map_or("ok".to_string(), |e| format!("failed: {e}")),
            started,
            finished: unix_now(),
            wall_seconds: clock.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            steps_per_sec: artifacts.steps_per_sec,
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            outputs: inventory(out, &artifacts.files).stage("manifest")?,
            summary: artifacts.summary,
        };
        manifest.write(out).stage("manifest")?;
        match error {
            Some(e) => Err(e),
            None => Ok(manifest),
        }
    })?
}

/// Files and figures produced by a pipeline.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    pub summary: BTreeMap<String, Value>,
    pub steps_per_sec: Option<f64>,
}

impl Artifacts {
    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

/// A pipeline error together with whatever was written before it.
#[derive(Debug)]
pub struct Failed {
    pub artifacts: Artifacts,
    pub error: StageError,
}

impl From<StageError> for Failed {
    fn from(error: StageError) -> Self {
        Failed { artifacts: Artifacts::default(), error }
    }
}

type Pipeline = Result<Artifacts, Failed>;

fn write_file(out: &Path, name: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> anyhow::Result<()>) -> Result<PathBuf, StageError> {
    let write = || -> anyhow::Result<()> {
        let mut w = BufWriter::new(fs::File::create(out.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    };
    write().stage("output")?;
    Ok(PathBuf::from(name))
}

pub fn pulse_pair(cfg: &ExperimentConfig) -> PulsePair {
    let t = &cfg.threemode;
    let base = PulsePair { shape: t.shape, ..PulsePair::counter_intuitive(t.peak, t.total_time) };
    match t.ordering {
        Ordering::CounterIntuitive => base,
        Ordering::Intuitive => base.swapped(),
    }
}

fn run_threemode(cfg: &ExperimentConfig, out: &Path) -> Pipeline {
    let pulses = pulse_pair(cfg);
    let trace = threemode::evolve(&pulses, &ThreeModeState::left(), cfg.threemode.dt).stage("threemode")?;
    let file = write_file(out, "threemode.csv", |w| {
        writeln!(w, "t,p_l,p_m,p_r,norm")?;
        for (t, s) in trace.times.iter().zip(&trace.states) {
            let p = s.populations();
            writeln!(w, "{t},{},{},{},{}", p[0], p[1], p[2], s.norm())?;
        }
        Ok(())
    })?;
    let mut a = Artifacts { files: vec![file], ..Default::default() };
    let p = trace.last().populations();
    a.note("p_final", json!(p));
    a.note("max_p_m", trace.max_population(1));
    a.note("coarse_step", trace.coarse_step);
    Ok(a)
}

/// Layout, sampled potential and guide partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub layout: ChipLayout,
    pub potential: PotentialGrid,
    pub partition: GuidePartition,
}

pub fn prepare_potential(cfg: &ExperimentConfig) -> Result<Prepared, StageError> {
    let layout = ChipLayout::new(cfg.layout.clone()).stage("layout")?;
    let grid = chip_grid(&cfg.layout, cfg.grid).stage("grid")?;
    let potential = assemble_potential(&layout, &grid).stage("potential")?;
    let partition = build_partition(&potential);
    Ok(Prepared { layout, potential, partition })
}

fn run_potential(cfg: &ExperimentConfig, out: &Path) -> Pipeline {
    let p = prepare_potential(cfg)?;
    let pot = &p.potential;
    let files = vec![
        write_file(out, "potential.qwf", |w| Ok(pot.write_qwf(w)?))?,
        write_file(out, "minima.csv", |w| Ok(pot.write_minima_csv(w)?))?,
    ];
    let mut a = Artifacts { files, ..Default::default() };
    let nz = pot.grid.counts()[2];
    a.note("slices", nz);
    a.note("slices_with_three_guides", pot.minima.iter().filter(|m| m.n_guides == 3).count());
    a.note("partition_fallback_slices", p.partition.fallback_count());
    a.note("v_min_joule", pot.min_value());
    a.note("v_max_joule", pot.max_value());
    for (label, iz) in [("entry", 0), ("centre", nz / 2)] {
        for g in WireId::ALL {
            if let Ok(s) = transverse_spectrum(pot, iz, g) {
                a.note(&format!("f_x_{}_{label}_hz", g.name()), s.omega_x / (2.0 * std::f64::consts::PI));
                a.note(&format!("f_y_{}_{label}_hz", g.name()), s.omega_y / (2.0 * std::f64::consts::PI));
            }
        }
    }
    Ok(a)
}

/// The prepared initial wavefunction and how it was built.
#[derive(Debug, Clone)]
pub struct Initial {
    pub ground: TransverseGroundState,
    pub z_index: usize,
    pub envelope: Envelope,
    pub psi: Wavefunction,
}

fn nearest_index(grid: &SimGrid, axis: usize, x: f64) -> usize {
    let n = grid.counts()[axis];
    let i = ((x - grid.origin()[axis]) / grid.spacing()[axis]).round();
    i.clamp(0.0, (n - 1) as f64) as usize
}

pub fn ground_state_options(cfg: &ExperimentConfig) -> ImaginaryTimeOptions {
    ImaginaryTimeOptions {
        tau: cfg.ground_state_tau,
        check_every: cfg.ground_state_check,
        tol: cfg.ground_state_tol,
        max_iterations: cfg.ground_state_max_iterations,
    }
}

/// Left-guide transverse ground state times the longitudinal envelope.
pub fn prepare_initial(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Initial, StageError> {
    let grid = &prepared.potential.grid;
    let l = &cfg.layout;
    let margin = ctap_core::initial::ENVELOPE_MARGIN;
    let guess = match cfg.sigma_z {
        SigmaZ::Coherent => Some(coherent_length(l.mass, l.omega_z)),
        SigmaZ::Fixed(s) => Some(s),
        SigmaZ::Transverse => None,
    };
    let z_guess = cfg.z0.or(guess.map(|s| margin * s)).unwrap_or(0.0);
    let z_index = nearest_index(grid, 2, z_guess);
    let opts = ground_state_options(cfg);
    let ground = transverse_ground_state(&prepared.potential, &prepared.partition, z_index, WireId::Left, &opts)
        .stage("groundstate")?;
    let sigma = guess.unwrap_or_else(|| (ground.rms[0] * ground.rms[1]).sqrt());
    let center = cfg.z0.unwrap_or(margin * sigma);
    let envelope = Envelope { center, sigma };
    let psi = initial_state(grid, &ground.profile, envelope).stage("initial")?;
    Ok(Initial { ground, z_index, envelope, psi })
}

fn note_ground(a: &mut Artifacts, init: &Initial, prepared: &Prepared) {
    let g = &init.ground;
    a.note("ground_energy_joule", g.energy);
    a.note("ground_energy_hz", g.energy / (2.0 * std::f64::consts::PI * HBAR));
    a.note("ground_iterations", g.iterations);
    a.note("ground_rms_m", json!(g.rms));
    a.note("ground_z_index", init.z_index);
    a.note("sigma_z_m", init.envelope.sigma);
    a.note("z0_m", init.envelope.center);
    if let Ok(s) = transverse_spectrum(&prepared.potential, init.z_index, WireId::Left) {
        a.note("harmonic_ground_energy_joule", s.energies[0] + s.floor);
    }
}

fn run_groundstate(cfg: &ExperimentConfig, out: &Path) -> Pipeline {
    let prepared = prepare_potential(cfg)?;
    let init = prepare_initial(cfg, &prepared)?;
    let grid = &prepared.potential.grid;
    let [nx, ny, _] = grid.counts();
    let header = QwfHeader {
        counts: [nx as u64, ny as u64, 1],
        origin: [grid.origin()[0], grid.origin()[1], grid.coord(2, init.z_index)],
        spacing: grid.spacing(),
        time: 0.0,
    };
    let file = write_file(out, "groundstate.qwf", |w| Ok(qwf::write_complex(w, &header, &init.ground.profile)?))?;
    let mut a = Artifacts { files: vec![file], ..Default::default() };
    note_ground(&mut a, &init, &prepared);
    Ok(a)
}

/// Writes y-integrated density maps at a fixed stride.
#[derive(Debug)]
pub struct SnapshotWriter {
    pub dir: PathBuf,
    pub stride: usize,
    pub files: Vec<PathBuf>,
}

impl Observer for SnapshotWriter {
    fn stride(&self) -> usize {
        self.stride
    }

    fn observe(&mut self, _step: usize, psi: &Wavefunction) -> ctap_core::Result<()> {
        let name = PathBuf::from(format!("density_{:04}.qwf", self.files.len()));
        let mut w = BufWriter::new(fs::File::create(self.dir.join(&name))?);
        write_density_xz(&mut w, psi, &density_xz(psi))?;
        w.flush()?;
        self.files.push(name);
        Ok(())
    }
}

/// Output of one real-time run.
#[derive(Debug)]
pub struct Simulation {
    pub trace: PopulationTrace,
    pub report: Option<EvolveReport>,
    pub snapshots: Vec<PathBuf>,
    pub error: Option<StageError>,
    pub final_state: Option<Wavefunction>,
    pub initial: Initial,
    pub n_steps: usize,
}

/// Potential, initial state and real-time evolution. Snapshots go to `snapshot_dir` when given.
pub fn simulate(cfg: &ExperimentConfig, snapshot_dir: Option<&Path>) -> Result<(Prepared, Simulation), StageError> {
    let prepared = prepare_potential(cfg)?;
    let initial = prepare_initial(cfg, &prepared)?;
    let plan = StepPlan::from_potential(&prepared.potential, cfg.dt, TimeMode::Real).stage("propagator")?;
    let n_steps = cfg.n_steps();

    let mut populations = PopulationObserver::new(prepared.partition.clone(), cfg.population_stride);
    populations.margin_cells = cfg.edge_margin;
    populations.edge_threshold = cfg.edge_threshold;
    let mut snapshots = snapshot_dir.filter(|_| cfg.snapshots > 0).map(|dir| SnapshotWriter {
        dir: dir.to_path_buf(),
        stride: (n_steps / cfg.snapshots).max(1),
        files: Vec::new(),
    });
    let mut progress = (cfg.progress_stride > 0).then(|| ProgressReporter::new(cfg.progress_stride));

    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut populations];
        if let Some(s) = snapshots.as_mut() {
            observers.push(s);
        }
        if let Some(p) = progress.as_mut() {
            observers.push(p);
        }
        evolve_real(initial.psi.clone(), &plan, n_steps, &mut observers)
    };
    let (final_state, report, error) = match result {
        Ok((psi, report)) => (Some(psi), Some(report), None),
        Err(e) => (None, None, Some(StageError { stage: "evolve", source: e.into() })),
    };
    let sim = Simulation {
        trace: populations.trace,
        report,
        snapshots: snapshots.map(|s| s.files).unwrap_or_default(),
        error,
        final_state,
        initial,
        n_steps,
    };
    Ok((prepared, sim))
}

fn run_evolve(cfg: &ExperimentConfig, out: &Path) -> Pipeline {
    let (prepared, sim) = simulate(cfg, Some(out))?;
    let mut a = Artifacts { files: sim.snapshots.clone(), ..Default::default() };
    let trace = &sim.trace;
    a.files.insert(0, write_file(out, "populations.csv", |w| Ok(trace.write_csv(w)?))?);
    note_ground(&mut a, &sim.initial, &prepared);
    a.note("steps", sim.n_steps);
    a.note("partition_fallback_slices", prepared.partition.fallback_count());
    if let Some(last) = trace.last() {
        a.note("p_final", json!(last.p));
        a.note("norm_final", last.norm);
    }
    a.note("max_p_m", trace.max_population(WireId::Middle));
    a.note("max_edge", trace.rows.iter().map(|r| r.edge).fold(0.0, f64::max));
    if let Some(r) = sim.report {
        a.steps_per_sec = Some(r.steps_per_sec);
        a.note("evolve_seconds", r.wall_seconds);
    }
    if let Some(error) = sim.error {
        return Err(Failed { artifacts: a, error });
    }
    if let (true, Some(psi)) = (cfg.save_final_state, &sim.final_state) {
        let file = write_file(out, "final_state.qwf", |w| Ok(qwf::write_wavefunction(w, psi)?))?;
        a.files.push(file);
    }
    Ok(a)
}

/// Final populations of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub current_middle: f64,
    pub ordering: Ordering,
    pub p_final: [f64; 3],
    pub max_p_m: f64,
}

/// One real-time run per middle-wire current and ordering.
pub fn sweep(cfg: &ExperimentConfig, trace_dir: Option<&Path>) -> Result<Vec<SweepPoint>, StageError> {
    let mut points = Vec::new();
    for (i, current) in cfg.sweep.values().into_iter().enumerate() {
        for ordering in [Ordering::CounterIntuitive, Ordering::Intuitive] {
            let mut c = cfg.clone();
            c.layout.currents[1] = current;
            c.layout.ordering = ordering;
            log::info!("sweep point I_M = {current} A, {}", ordering.name());
            let (_, sim) = simulate(&c, None)?;
            if let Some(dir) = trace_dir {
                let name = format!("populations_{}_{i:02}.csv", ordering.name());
                write_file(dir, &name, |w| Ok(sim.trace.write_csv(w)?))?;
            }
            if let Some(e) = sim.error {
                return Err(e);
            }
            let last = sim.trace.last().copied().ok_or(ctap_core::Error::EmptyTrace).stage("evolve")?;
            points.push(SweepPoint {
                current_middle: current,
                ordering,
                p_final: last.p,
                max_p_m: sim.trace.max_population(WireId::Middle),
            });
        }
    }
    Ok(points)
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Pipeline {
    let traces = out.join("points");
    fs::create_dir_all(&traces).stage("output")?;
    let points = sweep(cfg, Some(&traces))?;
    let p_r = |o: Ordering| -> Vec<f64> { points.iter().filter(|p| p.ordering == o).map(|p| p.p_final[2]).collect() };
    let (ci, intuitive) = (p_r(Ordering::CounterIntuitive), p_r(Ordering::Intuitive));
    let file = write_file(out, "sweep.csv", |w| {
        writeln!(w, "current_middle,p_r_counter_intuitive,p_r_intuitive")?;
        for (k, current) in cfg.sweep.values().iter().enumerate() {
            writeln!(w, "{current},{},{}", ci[k], intuitive[k])?;
        }
        Ok(())
    })?;
    let mut files = vec![file];
    let mut point_files: Vec<PathBuf> = fs::read_dir(&traces)
        .stage("output")?
        .filter_map(|e| e.ok())
        .map(|e| PathBuf::from("points").join(e.file_name()))
        .collect();
    point_files.sort();
    files.extend(point_files);
    let mut a = Artifacts { files, ..Default::default() };
    a.note("points", points.len());
    a.note("p_r_spread_counter_intuitive", spread(&ci));
    a.note("p_r_spread_intuitive", spread(&intuitive));
    a.note("min_p_r_counter_intuitive", ci.iter().copied().fold(f64::INFINITY, f64::min));
    Ok(a)
}

/// Median rate over repeats for one thread count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub threads: usize,
    pub steps_per_sec: f64,
    /// `(max − min) / median` over the repeats.
    pub spread: f64,
}

/// 1, 2, 4, … up to the hardware thread count, which is always included.
pub fn default_thread_counts() -> Vec<usize> {
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut v: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2)).take_while(|&n| n <= max).collect();
    if *v.last().unwrap() != max {
        v.push(max);
    }
    v
}

/// Times the split-operator step on the configured grid at each thread count.
pub fn bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>, StageError> {
    let grid = chip_grid(&cfg.layout, cfg.grid).stage("grid")?;
    let counts = if cfg.bench.threads.is_empty() { default_thread_counts() } else { cfg.bench.threads.clone() };
    let mut rows = Vec::new();
    for threads in counts {
        let rates = with_threads(Some(threads), || -> Result<Vec<f64>, StageError> {
            let potential = vec![0.0; grid.len()];
            let plan = StepPlan::new(&grid, &potential, cfg.layout.mass, cfg.dt, TimeMode::Real).stage("bench")?;
            let e = grid.extents();
            let center = [0, 1, 2].map(|a| grid.origin()[a] + 0.5 * e[a]);
            let mut psi = gaussian_packet(&grid, center, e.map(|x| x / 16.0), [0.0; 3]).stage("bench")?;
            plan.advance(&mut psi, cfg.bench.warmup).stage("bench")?;
            (0..cfg.bench.repeats)
                .map(|_| {
                    let t = Instant::now();
                    plan.advance(&mut psi, cfg.bench.steps).stage("bench")?;
                    Ok(cfg.bench.steps as f64 / t.elapsed().as_secs_f64().max(1e-12))
                })
                .collect()
        })??;
        let mut sorted = rates.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        rows.push(BenchRow { threads, steps_per_sec: median, spread: spread(&rates) / median });
        log::info!("bench {threads} threads: {median:.2} steps/s");
    }
    Ok(rows)
}

fn run_bench(cfg: &ExperimentConfig, out: &Path) -> Pipeline {
    let rows = bench(cfg)?;
    let file = write_file(out, "bench.csv", |w| {
        writeln!(w, "threads,steps_per_sec")?;
        for r in &rows {
            writeln!(w, "{},{}", r.threads, r.steps_per_sec)?;
        }
        Ok(())
    })?;
    let mut a = Artifacts { files: vec![file], ..Default::default() };
    let base = rows[0].steps_per_sec;
    let best = rows.iter().map(|r| r.steps_per_sec).fold(0.0, f64::max);
    a.steps_per_sec = Some(best);
    a.note("grid", json!(cfg.grid));
    a.note("spread", json!(rows.iter().map(|r| r.spread).collect::<Vec<_>>()));
    a.note("speedup", json!(rows.iter().map(|r| r.steps_per_sec / base).collect::<Vec<_>>()));
    a.note("projected_seconds_for_1e5_steps", 1e5 / best);
    Ok(a)
}
