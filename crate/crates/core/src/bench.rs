//! Experiment driver: parameter sampling, offline builds, test sweeps,
//! averaged errors, spectra and speed-up timing.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deim::{chi_snapshots, DeimModel};
use crate::error::{Error, Result};
use crate::fem::Problem;
use crate::geor::recast_problem_on;
use crate::lpod::{lpod_offline, IntervalPartition, LpodSettings};
use crate::mesh::{Geometry, Rect};
use crate::ocp::{solve_hf, HfSolution, ParameterPoint, DEFAULT_ALPHA};
use crate::parallel;
use crate::rom::{
    build_aggregated, collect_snapshots, pod, relative_errors, ControlReduction, PodBasis, ReducedModel, RomSolution,
    SnapshotSet, Strategy,
};

/// Hole of the default holed-square geometry.
pub const DEFAULT_HOLE: Rect = Rect {
    x0: 0.3,
    x1: 0.7,
    y0: 0.3,
    y1: 0.7,
};

pub fn default_holed_square() -> Geometry {
    Geometry::HoledSquare { hole: DEFAULT_HOLE }
}

/// Control treatment of the local models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpodControl {
    Exact,
    Deim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub h: f64,
    pub mu1_range: [f64; 2],
    pub mu2_range: [f64; 2],
    /// Defaults to the geometry's admissible interval.
    pub muu_range: Option<[f64; 2]>,
    pub alpha: f64,
    /// Dirichlet value `g`.
    pub dirichlet: f64,
    pub n_train: usize,
    pub n_train_geor: usize,
    pub n_test: usize,
    pub n_deim_train: usize,
    pub deim_tol: f64,
    pub n_list: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub tau: f64,
    pub max_splits: usize,
    pub absolute_tau: bool,
    pub lpod_control: LpodControl,
    pub seed: u64,
    pub measure_speedup: bool,
    /// Basis size of the timed models; the largest entry of `n_list` if unset.
    pub speedup_n: Option<usize>,
    pub timing_repeats: usize,
    pub timing_discard: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk(Geometry::Test1)
    }
}

impl ExperimentConfig {
    /// CI-sized setup.
    pub fn desk(geometry: Geometry) -> Self {
        let (h, strategies) = match geometry {
            Geometry::Test1 => (1.0 / 30.0, vec![Strategy::Pod, Strategy::DeimPod, Strategy::Lpod, Strategy::GeoR]),
            Geometry::HoledSquare { .. } => (1.0 / 40.0, vec![Strategy::Pod, Strategy::DeimPod, Strategy::Lpod]),
        };
        ExperimentConfig {
            geometry,
            h,
            mu1_range: [6.0, 20.0],
            mu2_range: [0.5, 3.0],
            muu_range: None,
            alpha: DEFAULT_ALPHA,
            dirichlet: 1.0,
            n_train: 60,
            n_train_geor: 60,
            n_test: 30,
            n_deim_train: 80,
            deim_tol: crate::deim::DEFAULT_TOL,
            n_list: vec![5, 10, 15, 20, 25, 30],
            strategies,
            tau: 1e-3,
            max_splits: 10,
            absolute_tau: false,
            lpod_control: LpodControl::Deim,
            seed: 7,
            measure_speedup: true,
            speedup_n: Some(30),
            timing_repeats: 11,
            timing_discard: 2,
        }
    }

    /// Full-size setup.
    pub fn paper_scale(geometry: Geometry) -> Self {
        let h = match geometry {
            Geometry::Test1 => 1.0 / 50.0,
            Geometry::HoledSquare { .. } => 1.0 / 60.0,
        };
        ExperimentConfig {
            h,
            n_train: 300,
            n_train_geor: 100,
            n_test: 150,
            n_deim_train: 350,
            n_list: (1..=16).map(|k| 5 * k).collect(),
            ..Self::desk(geometry)
        }
    }

    pub fn muu_interval(&self) -> (f64, f64) {
        match self.muu_range {
            Some([a, b]) => (a, b),
            None => self.geometry.muu_interval(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let (ga, gb) = self.geometry.muu_interval();
        let (ua, ub) = self.muu_interval();
        for (name, [a, b]) in [("mu1_range", self.mu1_range), ("mu2_range", self.mu2_range), ("muu_range", [ua, ub])] {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return bad(format!("{name} = [{a}, {b}] is empty"));
            }
        }
        if !(self.mu1_range[0] > 0.0) {
            return bad("mu1_range must be positive".into());
        }
        if ua < ga || ub > gb {
            return bad(format!("muu_range [{ua}, {ub}] leaves the admissible interval ({ga}, {gb})"));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be positive".into());
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return bad("n_list must hold positive sizes".into());
        }
        let mut seen = HashSet::new();
        if self.strategies.is_empty() || !self.strategies.iter().all(|s| seen.insert(*s)) {
            return bad("strategies must be nonempty and distinct".into());
        }
        let wants_deim = self.strategies.contains(&Strategy::DeimPod)
            || (self.strategies.contains(&Strategy::Lpod) && self.lpod_control == LpodControl::Deim);
        if wants_deim && self.n_deim_train == 0 {
            return bad("n_deim_train must be positive".into());
        }
        if self.strategies.contains(&Strategy::GeoR) {
            if self.geometry != Geometry::Test1 {
                return bad("geometric recasting is only available on Test1".into());
            }
            if self.n_train_geor == 0 {
                return bad("n_train_geor must be positive".into());
            }
        }
        if self.measure_speedup && self.timing_repeats <= self.timing_discard {
            return bad("timing_repeats must exceed timing_discard".into());
        }
        Ok(())
    }

    fn max_n(&self) -> usize {
        self.n_list.iter().copied().max().unwrap_or(1)
    }

    fn timed_n(&self) -> usize {
        self.speedup_n.unwrap_or_else(|| self.max_n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRole {
    Train,
    Test,
    Deim,
    GeorTrain,
}

impl SampleRole {
    fn stream(self) -> u64 {
        match self {
            SampleRole::Train => 1,
            SampleRole::Test => 2,
            SampleRole::Deim => 3,
            SampleRole::GeorTrain => 4,
        }
    }

    fn count(self, config: &ExperimentConfig) -> usize {
        match self {
            SampleRole::Train => config.n_train,
            SampleRole::Test => config.n_test,
            SampleRole::Deim => config.n_deim_train,
            SampleRole::GeorTrain => config.n_train_geor,
        }
    }
}

/// Uniform draws from the open parameter box; each role reads its own
/// stream of the seeded generator.
pub fn sample_params(config: &ExperimentConfig, role: SampleRole) -> Vec<ParameterPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(role.stream());
    let (ua, ub) = config.muu_interval();
    let mut open = |a: f64, b: f64| loop {
        let v = rng.random_range(a..b);
        if v > a {
            break v;
        }
    };
    (0..role.count(config))
        .map(|_| {
            let mu1 = open(config.mu1_range[0], config.mu1_range[1]);
            let mu2 = open(config.mu2_range[0], config.mu2_range[1]);
            let muu = open(ua, ub);
            ParameterPoint::new(mu1, mu2, muu).with_alpha(config.alpha)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub n: usize,
    pub e_y: f64,
    pub e_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub n: usize,
    pub bounds: Vec<(f64, f64)>,
    pub n_snapshots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeimSummary {
    pub n_deim: usize,
    pub patterns: usize,
    pub rcond: f64,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub n_snapshots: usize,
    pub errors: Vec<ErrorPoint>,
    /// State and adjoint POD spectra (averaged over intervals for L-POD).
    pub eig_y: Vec<f64>,
    pub eig_p: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub partitions: Vec<PartitionSummary>,
}

impl StrategyReport {
    pub fn errors_at(&self, n: usize) -> Option<ErrorPoint> {
        self.errors.iter().copied().find(|e| e.n == n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTiming {
    pub strategy: Strategy,
    pub offline_s: f64,
    pub n: usize,
    pub online_median_s: Option<f64>,
    pub speedup: Option<f64>,
}

/// Wall-clock data; hardware dependent, kept apart from the numerical results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub threads: usize,
    pub snapshots_s: f64,
    pub geor_snapshots_s: Option<f64>,
    pub deim_s: Option<f64>,
    pub hf_median_s: Option<f64>,
    pub strategies: Vec<StrategyTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ExperimentConfig,
    pub n_free: usize,
    pub mesh_hash: String,
    /// Largest relative KKT residual over every high-fidelity solve.
    pub hf_max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub deim: Option<DeimSummary>,
    pub strategies: Vec<StrategyReport>,
    pub timings: Timings,
}

impl BenchReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    /// `λ_n / λ₁` of the state (`adjoint = false`) or adjoint spectrum, `n` 1-based.
    pub fn relative_eigenvalue(&self, s: Strategy, adjoint: bool, n: usize) -> Option<f64> {
        let r = self.strategy(s)?;
        let eig = if adjoint { &r.eig_p } else { &r.eig_y };
        let first = *eig.first()?;
        Some(eig.get(n - 1).copied().unwrap_or(0.0) / first)
    }
}

/// Number of reduced solves that fit in one high-fidelity solve.
pub fn speedup_index(hf_seconds: f64, reduced_seconds: f64) -> f64 {
    hf_seconds / reduced_seconds
}

/// Median wall time of `repeats` calls after dropping the first `discard`.
/// Call `k` receives index `k`.
pub fn median_time(repeats: usize, discard: usize, mut f: impl FnMut(usize) -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for k in 0..repeats {
        let t = Instant::now();
        f(k)?;
        if k >= discard {
            times.push(t.elapsed().as_secs_f64());
        }
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("no timed repetitions left".into()));
    }
    times.sort_by(f64::total_cmp);
    let m = times.len();
    Ok(if m % 2 == 1 {
        times[m / 2]
    } else {
        0.5 * (times[m / 2 - 1] + times[m / 2])
    })
}

fn stage(name: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| e.at_stage(name)
}

fn average_errors(
    problem: &Problem,
    hfs: &[HfSolution],
    solve: impl Fn(&ParameterPoint) -> Result<RomSolution> + Sync,
) -> Result<(f64, f64)> {
    let per: Vec<(f64, f64)> = parallel::install(|| {
        hfs.par_iter()
            .map(|hf| relative_errors(problem, hf, &solve(&hf.mu)?))
            .collect::<Result<Vec<_>>>()
    })?;
    let k = per.len() as f64;
    let (sy, sp) = per.iter().fold((0.0, 0.0), |acc, e| (acc.0 + e.0, acc.1 + e.1));
    Ok((sy / k, sp / k))
}

fn solve_all(problem: &Problem, params: &[ParameterPoint]) -> Result<Vec<HfSolution>> {
    parallel::install(|| params.par_iter().map(|mu| solve_hf(problem, mu)).collect())
}

fn max_residual(hfs: &[HfSolution]) -> f64 {
    hfs.iter().map(|s| s.residual).fold(0.0, f64::max)
}

struct GlobalPod {
    y: PodBasis,
    p: PodBasis,
}

impl GlobalPod {
    fn build(problem: &Problem, s: &SnapshotSet, n: usize) -> Result<Self> {
        let n = n.min(s.len());
        Ok(GlobalPod {
            y: pod(&s.y, problem.norm_matrix(), n)?,
            p: pod(&s.p, problem.norm_matrix(), n)?,
        })
    }

    fn model(&self, problem: &Problem, n: usize, strategy: Strategy, control: ControlReduction<'_>) -> Result<ReducedModel> {
        let agg = build_aggregated(&self.y, &self.p, n, problem.norm_matrix());
        ReducedModel::project(problem, agg.q, strategy, control)
    }
}

/// Something that answers online queries.
enum Online {
    Single(ReducedModel),
    Local(IntervalPartition),
}

impl Online {
    fn model(&self, muu: f64) -> &ReducedModel {
        match self {
            Online::Single(m) => m,
            Online::Local(p) => p.model_for(muu),
        }
    }
}

struct Built {
    report: StrategyReport,
    offline_s: f64,
    timed: Option<(usize, Online, usize)>,
}

/// Runs every configured strategy; see [`run_experiment_with`].
pub fn run_experiment(config: &ExperimentConfig) -> Result<BenchReport> {
    run_experiment_with(config, |_| Ok(()))
}

/// Runs every configured strategy and hands each finished strategy report
/// to `on_strategy` before moving on.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut on_strategy: impl FnMut(&StrategyReport) -> Result<()>,
) -> Result<BenchReport> {
    config.validate()?;
    let geometry = config.geometry;
    let mesh = geometry.generate(config.h).map_err(stage("mesh"))?;
    let mesh_hash = mesh.content_hash();
    let problem = Problem::physical(mesh.clone(), geometry, config.dirichlet).map_err(stage("assembly"))?;
    let train = sample_params(config, SampleRole::Train);
    let test = sample_params(config, SampleRole::Test);

    let t = Instant::now();
    let snapshots = parallel::install(|| collect_snapshots(&problem, &train)).map_err(stage("snapshots"))?;
    let snapshots_s = t.elapsed().as_secs_f64();
    let hf_test = solve_all(&problem, &test).map_err(stage("test solves"))?;
    let mut residual = snapshots.max_residual.max(max_residual(&hf_test));

    let wants_deim = config.strategies.contains(&Strategy::DeimPod)
        || (config.strategies.contains(&Strategy::Lpod) && config.lpod_control == LpodControl::Deim);
    let t = Instant::now();
    let deim = if wants_deim {
        let muus: Vec<f64> = sample_params(config, SampleRole::Deim).iter().map(|m| m.muu).collect();
        let chi = chi_snapshots(problem.mesh(), &geometry, &muus).map_err(stage("deim"))?;
        Some(DeimModel::build(&chi, config.deim_tol).map_err(stage("deim"))?)
    } else {
        None
    };
    let deim_s = deim.as_ref().map(|_| t.elapsed().as_secs_f64());

    let timed_n = config.timed_n();
    let needs_global = config
        .strategies
        .iter()
        .any(|s| matches!(s, Strategy::Pod | Strategy::DeimPod));
    let t = Instant::now();
    let global = if needs_global {
        Some(GlobalPod::build(&problem, &snapshots, config.max_n()).map_err(stage("pod"))?)
    } else {
        None
    };
    let global_s = t.elapsed().as_secs_f64();

    let mut reports = Vec::new();
    let mut timing_rows = Vec::new();
    let mut timed_models: Vec<(Strategy, Online, usize)> = Vec::new();
    let mut geor_problem = None;
    let mut geor_snapshots_s = None;

    for &strategy in &config.strategies {
        let built = match strategy {
            Strategy::Pod | Strategy::DeimPod => {
                let g = global.as_ref().expect("global POD built");
                let control = match strategy {
                    Strategy::Pod => ControlReduction::Exact,
                    _ => ControlReduction::Deim(deim.as_ref().expect("DEIM built")),
                };
                let t = Instant::now();
                let mut errors = Vec::new();
                let mut timed = None;
                for &n in &config.n_list {
                    let model = g.model(&problem, n, strategy, control).map_err(stage(strategy.name()))?;
                    let (e_y, e_p) = average_errors(&problem, &hf_test, |mu| model.solve(&problem, mu))
                        .map_err(stage(strategy.name()))?;
                    errors.push(ErrorPoint { n, e_y, e_p });
                    if n == timed_n {
                        timed = Some((n, Online::Single(model), 0));
                    }
                }
                Built {
                    report: StrategyReport {
                        strategy,
                        n_snapshots: snapshots.len(),
                        errors,
                        eig_y: g.y.eigenvalues.clone(),
                        eig_p: g.p.eigenvalues.clone(),
                        partitions: Vec::new(),
                    },
                    offline_s: global_s + t.elapsed().as_secs_f64(),
                    timed,
                }
            }
            Strategy::Lpod => {
                let control = match config.lpod_control {
                    LpodControl::Exact => ControlReduction::Exact,
                    LpodControl::Deim => ControlReduction::Deim(deim.as_ref().expect("DEIM built")),
                };
                let t = Instant::now();
                let mut errors = Vec::new();
                let mut partitions = Vec::new();
                let mut spectra = None;
                let mut timed = None;
                let max_n = config.max_n();
                for &n in &config.n_list {
                    let settings = LpodSettings {
                        n,
                        tau: config.tau,
                        max_splits: config.max_splits,
                        absolute_tau: config.absolute_tau,
                    };
                    let part = lpod_offline(&problem, &snapshots, config.muu_interval(), settings, control)
                        .map_err(stage("lpod"))?;
                    let (e_y, e_p) =
                        average_errors(&problem, &hf_test, |mu| part.model_for(mu.muu).solve(&problem, mu))
                            .map_err(stage("lpod"))?;
                    errors.push(ErrorPoint { n, e_y, e_p });
                    partitions.push(PartitionSummary {
                        n,
                        bounds: part.bounds(),
                        n_snapshots: part.intervals.iter().map(|i| i.n_snapshots).collect(),
                    });
                    if n == max_n {
                        spectra = Some(part.averaged_eigenvalues(snapshots.len()));
                    }
                    if n == timed_n {
                        timed = Some((n, Online::Local(part), 0));
                    }
                }
                let (eig_y, eig_p) = spectra.expect("largest size visited");
                Built {
                    report: StrategyReport {
                        strategy,
                        n_snapshots: snapshots.len(),
                        errors,
                        eig_y,
                        eig_p,
                        partitions,
                    },
                    offline_s: snapshots_s + t.elapsed().as_secs_f64(),
                    timed,
                }
            }
            Strategy::GeoR => {
                let t = Instant::now();
                let gp = recast_problem_on(mesh.clone(), config.dirichlet).map_err(stage("geor"))?;
                let geor_train = sample_params(config, SampleRole::GeorTrain);
                let s = parallel::install(|| collect_snapshots(&gp, &geor_train)).map_err(stage("geor snapshots"))?;
                geor_snapshots_s = Some(t.elapsed().as_secs_f64());
                let hf_ref = solve_all(&gp, &test).map_err(stage("geor test solves"))?;
                residual = residual.max(s.max_residual).max(max_residual(&hf_ref));
                let g = GlobalPod::build(&gp, &s, config.max_n()).map_err(stage("geor"))?;
                let mut errors = Vec::new();
                let mut timed = None;
                for &n in &config.n_list {
                    let model = g.model(&gp, n, strategy, ControlReduction::Exact).map_err(stage("geor"))?;
                    let (e_y, e_p) =
                        average_errors(&gp, &hf_ref, |mu| model.solve(&gp, mu)).map_err(stage("geor"))?;
                    errors.push(ErrorPoint { n, e_y, e_p });
                    if n == timed_n {
                        timed = Some((n, Online::Single(model), 1));
                    }
                }
                let report = StrategyReport {
                    strategy,
                    n_snapshots: s.len(),
                    errors,
                    eig_y: g.y.eigenvalues.clone(),
                    eig_p: g.p.eigenvalues.clone(),
                    partitions: Vec::new(),
                };
                geor_problem = Some(gp);
                Built {
                    report,
                    offline_s: t.elapsed().as_secs_f64(),
                    timed,
                }
            }
        };
        on_strategy(&built.report)?;
        timing_rows.push(StrategyTiming {
            strategy,
            offline_s: built.offline_s,
            n: built.timed.as_ref().map_or(timed_n, |t| t.0),
            online_median_s: None,
            speedup: None,
        });
        if let Some((n, online, _)) = built.timed {
            timed_models.push((strategy, online, n));
        }
        reports.push(built.report);
    }

    let mut hf_median_s = None;
    if config.measure_speedup {
        let (r, d) = (config.timing_repeats, config.timing_discard);
        let hf = median_time(r, d, |k| solve_hf(&problem, &test[k % test.len()]).map(|_| ()))
            .map_err(stage("timing"))?;
        hf_median_s = Some(hf);
        for (strategy, online, _) in &timed_models {
            let pb = match strategy {
                Strategy::GeoR => geor_problem.as_ref().expect("recast problem kept"),
                _ => &problem,
            };
            let rom = median_time(r, d, |k| {
                let mu = &test[k % test.len()];
                online.model(mu.muu).solve_coords(pb, mu).map(|_| ())
            })
            .map_err(stage("timing"))?;
            let row = timing_rows.iter_mut().find(|t| t.strategy == *strategy).expect("row exists");
            row.online_median_s = Some(rom);
            row.speedup = Some(speedup_index(hf, rom));
        }
    }

    Ok(BenchReport {
        config: config.clone(),
        n_free: problem.n_free(),
        mesh_hash,
        hf_max_residual: residual,
        deim: deim.map(|d| DeimSummary {
            n_deim: d.len(),
            patterns: d.pattern_count,
            rcond: d.rcond,
            eigenvalues: d.eigenvalues,
        }),
        strategies: reports,
        timings: Timings {
            threads: parallel::current_threads(),
            snapshots_s,
            geor_snapshots_s,
            deim_s,
            hf_median_s,
            strategies: timing_rows,
        },
    })
}

/// High-fidelity problem a strategy works on: the physical one, or the
/// recast reference problem for Geo-R.
pub fn problem_for(config: &ExperimentConfig, strategy: Strategy) -> Result<Problem> {
    let mesh = config.geometry.generate(config.h)?;
    match strategy {
        Strategy::GeoR => recast_problem_on(mesh, config.dirichlet),
        _ => Problem::physical(mesh, config.geometry, config.dirichlet),
    }
}

/// Result of a single offline build.
#[derive(Debug, Clone)]
pub enum Offline {
    Global {
        /// Modes per variable.
        n: usize,
        model: ReducedModel,
        eig_y: Vec<f64>,
        eig_p: Vec<f64>,
    },
    Local(IntervalPartition),
}

impl Offline {
    pub fn solve(&self, problem: &Problem, mu: &ParameterPoint) -> Result<RomSolution> {
        match self {
            Offline::Global { model, .. } => model.solve(problem, mu),
            Offline::Local(p) => p.model_for(mu.muu).solve(problem, mu),
        }
    }

    /// Writes the artifact with [`crate::persist`].
    pub fn save(&self, dir: &Path, problem: &Problem, seed: u64) -> Result<()> {
        let hash = problem.mesh().content_hash();
        match self {
            Offline::Global { n, model, eig_y, eig_p } => {
                let meta = crate::persist::ModelMeta {
                    strategy: model.strategy,
                    n: *n,
                    dim: model.dim(),
                    seed,
                    mesh_hash: hash,
                };
                crate::persist::save_model(dir, model, &meta, eig_y, eig_p)
            }
            Offline::Local(p) => crate::persist::save_partition(dir, p, seed, &hash),
        }
    }

    /// Reads a directory written by [`Offline::save`].
    pub fn load(dir: &Path, problem: &Problem) -> Result<Self> {
        if dir.join("partition.json").exists() {
            return Ok(Offline::Local(crate::persist::load_partition(dir, problem)?));
        }
        let (model, meta) = crate::persist::load_model(dir, problem)?;
        let eig_y = crate::persist::read_values(&dir.join("eigvals_y.txt"))?;
        let eig_p = crate::persist::read_values(&dir.join("eigvals_p.txt"))?;
        Ok(Offline::Global {
            n: meta.n,
            model,
            eig_y,
            eig_p,
        })
    }
}

/// Builds one strategy at basis size `n` with the configured training set.
pub fn build_offline(config: &ExperimentConfig, problem: &Problem, strategy: Strategy, n: usize) -> Result<Offline> {
    config.validate()?;
    let role = match strategy {
        Strategy::GeoR => SampleRole::GeorTrain,
        _ => SampleRole::Train,
    };
    let train = sample_params(config, role);
    let snapshots = parallel::install(|| collect_snapshots(problem, &train)).map_err(stage("snapshots"))?;
    let deim = match (strategy, config.lpod_control) {
        (Strategy::DeimPod, _) | (Strategy::Lpod, LpodControl::Deim) => {
            let muus: Vec<f64> = sample_params(config, SampleRole::Deim).iter().map(|m| m.muu).collect();
            let chi = chi_snapshots(problem.mesh(), &config.geometry, &muus).map_err(stage("deim"))?;
            Some(DeimModel::build(&chi, config.deim_tol).map_err(stage("deim"))?)
        }
        _ => None,
    };
    let control = match &deim {
        Some(d) => ControlReduction::Deim(d),
        None => ControlReduction::Exact,
    };
    match strategy {
        Strategy::Lpod => {
            let settings = LpodSettings {
                n,
                tau: config.tau,
                max_splits: config.max_splits,
                absolute_tau: config.absolute_tau,
            };
            Ok(Offline::Local(
                lpod_offline(problem, &snapshots, config.muu_interval(), settings, control).map_err(stage("lpod"))?,
            ))
        }
        _ => {
            let g = GlobalPod::build(problem, &snapshots, n).map_err(stage("pod"))?;
            Ok(Offline::Global {
                n: n.min(g.y.len()),
                model: g.model(problem, n, strategy, control).map_err(stage("projection"))?,
                eig_y: g.y.eigenvalues,
                eig_p: g.p.eigenvalues,
            })
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct ErrorRow {
    strategy: &'static str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "E_y")]
    e_y: f64,
    #[serde(rename = "E_p")]
    e_p: f64,
}

#[derive(Serialize)]
struct EigRow {
    n: usize,
    lambda: f64,
    relative: f64,
}

#[derive(Serialize)]
struct TimingRow {
    strategy: &'static str,
    #[serde(rename = "N")]
    n: usize,
    offline_s: f64,
    online_median_s: Option<f64>,
    hf_median_s: Option<f64>,
    speedup: Option<f64>,
}

fn error_rows(r: &StrategyReport) -> impl Iterator<Item = ErrorRow> + '_ {
    r.errors.iter().map(|e| ErrorRow {
        strategy: r.strategy.name(),
        n: e.n,
        e_y: e.e_y,
        e_p: e.e_p,
    })
}

fn eig_rows(eig: &[f64]) -> Vec<EigRow> {
    let first = eig.first().copied().unwrap_or(0.0);
    eig.iter()
        .enumerate()
        .map(|(k, &l)| EigRow {
            n: k + 1,
            lambda: l,
            relative: if first > 0.0 { l / first } else { 0.0 },
        })
        .collect()
}

/// Writes `report.json`, `errors.csv`, `eig_<strategy>_<var>.csv` and
/// `timings.csv` into `dir`.
pub fn write_outputs(dir: &Path, report: &BenchReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))?;
    write_csv(&dir.join("errors.csv"), report.strategies.iter().flat_map(error_rows))?;
    for r in &report.strategies {
        for (var, eig) in [("y", &r.eig_y), ("p", &r.eig_p)] {
            write_csv(&dir.join(format!("eig_{}_{var}.csv", r.strategy.name())), eig_rows(eig))?;
        }
    }
    if let Some(d) = &report.deim {
        write_csv(&dir.join("eig_deim_chi.csv"), eig_rows(&d.eigenvalues))?;
    }
    let t = &report.timings;
    write_csv(
        &dir.join("timings.csv"),
        t.strategies.iter().map(|s| TimingRow {
            strategy: s.strategy.name(),
            n: s.n,
            offline_s: s.offline_s,
            online_median_s: s.online_median_s,
            hf_median_s: t.hf_median_s,
            speedup: s.speedup,
        }),
    )
}

/// Runs the experiment and writes its outputs to `dir`. `errors.csv` is
/// rewritten after every strategy, so a failing stage leaves the finished
/// rows behind.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<BenchReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let partial = dir.join("errors.csv");
    let mut done: Vec<StrategyReport> = Vec::new();
    let report = run_experiment_with(config, |r| {
        done.push(r.clone());
        write_csv(&partial, done.iter().flat_map(error_rows))
    })?;
    write_outputs(dir, &report)?;
    Ok(report)
}

/// The report as JSON with the `timings` section removed.
pub fn numerical_json(report: &BenchReport) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(report)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("timings");
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_inside_the_box() {
        let c = ExperimentConfig::default();
        let a = sample_params(&c, SampleRole::Train);
        assert_eq!(a, sample_params(&c, SampleRole::Train));
        assert_eq!(a.len(), 60);
        for p in &a {
            assert!(p.mu1 > 6.0 && p.mu1 < 20.0);
            assert!(p.mu2 > 0.5 && p.mu2 < 3.0);
            assert!(p.muu > 0.0 && p.muu < 1.0);
            assert_eq!(p.alpha, DEFAULT_ALPHA);
        }
    }

    #[test]
    fn streams_do_not_share_draws() {
        let c = ExperimentConfig::default();
        let train = sample_params(&c, SampleRole::Train);
        let test = sample_params(&c, SampleRole::Test);
        assert!(train.iter().all(|p| !test.contains(p)));
        assert!(train.iter().all(|p| test.iter().all(|q| p.mu1 != q.mu1)));
    }

    #[test]
    fn speedup_arithmetic() {
        assert_eq!(speedup_index(1.0, 0.1), 10.0);
    }

    #[test]
    fn median_discards_warmup() {
        let mut calls = 0;
        let m = median_time(5, 2, |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 5);
        assert!(m >= 0.0);
        assert!(median_time(2, 2, |_| Ok(())).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let mut c = ExperimentConfig::desk(default_holed_square());
        assert!(c.validate().is_ok());
        c.strategies.push(Strategy::GeoR);
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            mu1_range: [3.0, 3.0],
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            strategies: vec![Strategy::Pod, Strategy::Pod],
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_uses_snake_case_and_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"n_train": 12, "strategies": ["pod", "geor"]}"#).unwrap();
        assert_eq!(c.n_train, 12);
        assert_eq!(c.strategies, vec![Strategy::Pod, Strategy::GeoR]);
        assert_eq!(c.n_test, 30);
        let round: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"n_trian": 1}"#).is_err());
    }
}
