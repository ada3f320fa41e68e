//! Experiment configuration, Monte Carlo sweeps, and CSV emission.
//!
//! Everything here is deterministic for a fixed config and seed: trials get
//! seeds derived from the base seed and trial index only, so grid points
//! reuse the same underlying noise draws and results aggregate
//! order-independently across worker threads.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closed_loop::{build_family, vk_from_gain, PriorKnowledge};
use crate::data::{
    build_batch, derive_seed, simulate, t_concat_disturbance, BatchTag, DataBatch,
    DisturbanceConcat, InputPolicy, LinearSystem,
};
use crate::error::{Error, Result};
use crate::sets::{Polytope, Zonotope};
use crate::synthesis::{
    synth_polytope, verify_contractive, ContractivityReport, PolytopeOptions, SafeSet,
    SynthesisCertificate, SynthesisProblem,
};
use crate::sysid::{build_info_set, refine_prior};

/// Whether synthesis enforces the family's latent constraints (prior and
/// data-explainability knowledge) in the disturbance-amplification bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Prior,
    NoPrior,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Prior => "prior",
            Mode::NoPrior => "noprior",
        }
    }
}

/// Which modes a run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelect {
    Prior,
    NoPrior,
    #[default]
    Both,
}

impl ModeSelect {
    pub fn modes(&self) -> Vec<Mode> {
        match self {
            ModeSelect::Prior => vec![Mode::Prior],
            ModeSelect::NoPrior => vec![Mode::NoPrior],
            ModeSelect::Both => vec![Mode::Prior, Mode::NoPrior],
        }
    }
}

/// Which grid a sweep walks (the other factor stays at its scalar value).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    #[default]
    Alpha,
    Lambda,
}

/// Plant description: nominal dynamics plus the unscaled disturbance
/// zonotope (the noise scale multiplies the generators).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(with = "crate::io::a2")]
    pub a: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub b: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub noise_generators: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    pub noise_center: Array1<f64>,
}

/// How prior knowledge is manufactured: a recorded loose box refined by
/// set-membership identification on source-task data collected under a
/// different disturbance set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PriorConfig {
    pub box_halfwidth: f64,
    #[serde(with = "crate::io::a2")]
    pub source_noise_generators: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    pub source_noise_center: Array1<f64>,
    pub source_horizon: usize,
}

/// Data-collection policy: stabilizing feedback plus uniform excitation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(with = "crate::io::a2")]
    pub stabilizing_gain: Array2<f64>,
    pub excitation: f64,
    #[serde(with = "crate::io::a1")]
    pub x0: Array1<f64>,
}

/// One experiment file: plant, safe set, contraction factor, horizons,
/// prior recipe, seeds, and sweep grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(with = "crate::io::a2")]
    pub safe_h: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    pub safe_offsets: Array1<f64>,
    pub alpha: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub prior: PriorConfig,
    pub data: DataConfig,
    pub seed: u64,
    pub trials: usize,
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub horizon_grid: Vec<usize>,
    #[serde(default)]
    pub sweep_over: SweepAxis,
    #[serde(default)]
    pub modes: ModeSelect,
}

impl ExperimentConfig {
    /// The benchmark experiment used throughout the tests: a second-order
    /// plant with scalar input, a symmetric four-row safe polytope, and a
    /// prior identified from source-task data under a separate noise set.
    pub fn benchmark() -> Self {
        ExperimentConfig {
            system: SystemConfig {
                a: ndarray::array![[0.8, 0.5], [-0.4, 1.2]],
                b: ndarray::array![[0.0], [1.0]],
                noise_generators: ndarray::array![[0.05, 0.08], [0.01, 0.06]],
                noise_center: ndarray::array![0.0, 0.0],
            },
            safe_h: ndarray::array![
                [0.2, 0.4],
                [-0.2, -0.4],
                [-0.15, 0.2],
                [0.15, -0.2]
            ],
            safe_offsets: ndarray::array![1.0, 1.0, 1.0, 1.0],
            alpha: 1.0,
            lambda: 0.98,
            horizon: 10,
            prior: PriorConfig {
                box_halfwidth: 5.0,
                source_noise_generators: ndarray::array![[0.03, -0.01], [-0.04, 0.05]],
                source_noise_center: ndarray::array![1.0, -1.0],
                source_horizon: 8,
            },
            data: DataConfig {
                stabilizing_gain: ndarray::array![[0.4, -1.2]],
                excitation: 1.0,
                x0: ndarray::array![0.0, 0.0],
            },
            seed: 2024,
            trials: 100,
            alpha_grid: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            lambda_grid: vec![0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99],
            horizon_grid: vec![5, 10, 15],
            sweep_over: SweepAxis::Alpha,
            modes: ModeSelect::Both,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.a.nrows();
        if self.system.a.ncols() != n
            || self.system.b.nrows() != n
            || self.system.noise_generators.nrows() != n
            || self.system.noise_center.len() != n
        {
            return Err(Error::shape(
                "system matrices disagree on the state dimension",
            ));
        }
        if self.safe_h.ncols() != n || self.safe_offsets.len() != self.safe_h.nrows() {
            return Err(Error::shape(
                "safe set shapes do not match the state dimension",
            ));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must lie in (0,1), got {}",
                self.lambda
            )));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be nonnegative".into()));
        }
        if self.horizon < n + self.system.b.ncols() {
            return Err(Error::InvalidParameter(format!(
                "horizon {} cannot give a full-row-rank data matrix",
                self.horizon
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trial count must be positive".into()));
        }
        if self.alpha_grid.is_empty() || self.lambda_grid.is_empty() || self.horizon_grid.is_empty()
        {
            return Err(Error::InvalidParameter("sweep grids must be nonempty".into()));
        }
        if self.prior.source_horizon == 0 {
            return Err(Error::InvalidParameter("source horizon must be >= 1".into()));
        }
        Ok(())
    }

    pub fn safe_polytope(&self) -> Result<Polytope> {
        Polytope::new(self.safe_h.clone(), self.safe_offsets.clone())
    }

    /// The plant at noise scale `alpha`.
    pub fn system_at(&self, alpha: f64) -> Result<LinearSystem> {
        LinearSystem::new(
            self.system.a.clone(),
            self.system.b.clone(),
            Zonotope::new(
                &self.system.noise_generators * alpha,
                self.system.noise_center.clone(),
            )?,
        )
    }

    /// The source-task plant used to manufacture prior knowledge.
    pub fn source_system(&self) -> Result<LinearSystem> {
        LinearSystem::new(
            self.system.a.clone(),
            self.system.b.clone(),
            Zonotope::new(
                self.prior.source_noise_generators.clone(),
                self.prior.source_noise_center.clone(),
            )?,
        )
    }

    /// The recorded loose box prior before identification.
    pub fn box_prior(&self) -> PriorKnowledge {
        let n = self.system.a.nrows();
        let m = self.system.b.ncols();
        PriorKnowledge::entry_box(Array2::zeros((n, n + m)), self.prior.box_halfwidth)
    }
}

/// Per-trial artifacts shared by both modes.
pub struct TrialData {
    pub sys: LinearSystem,
    pub batch: DataBatch,
    pub dc: DisturbanceConcat,
    pub prior: PriorKnowledge,
    pub source_batch: DataBatch,
}

/// Collect source data, refine the box prior, and collect target data for
/// one trial.
pub fn prepare_trial(
    cfg: &ExperimentConfig,
    alpha: f64,
    horizon: usize,
    seed: u64,
) -> Result<TrialData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = InputPolicy::Feedback {
        gain: cfg.data.stabilizing_gain.clone(),
        excitation: cfg.data.excitation,
    };

    let source_sys = cfg.source_system()?;
    let source_traj = simulate(
        &source_sys,
        &cfg.data.x0,
        &policy,
        cfg.prior.source_horizon,
        &mut rng,
    )?;
    let source_batch = build_batch(&source_traj, BatchTag::SourceTask)?;
    let source_dc = t_concat_disturbance(&source_sys.disturbance, cfg.prior.source_horizon)?;
    let info = build_info_set(&source_batch, &source_dc)?;
    let prior = refine_prior(&cfg.box_prior(), &info)?;

    let sys = cfg.system_at(alpha)?;
    let traj = simulate(&sys, &cfg.data.x0, &policy, horizon, &mut rng)?;
    let batch = build_batch(&traj, BatchTag::TargetTask)?;
    let dc = t_concat_disturbance(&sys.disturbance, horizon)?;
    Ok(TrialData {
        sys,
        batch,
        dc,
        prior,
        source_batch,
    })
}

/// One mode's outcome within a trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_value: f64,
    pub horizon: usize,
    pub trial: usize,
    pub mode: Mode,
    pub feasible: bool,
    pub l_inf: f64,
    pub rho: Option<f64>,
}

/// Aggregated sweep row (one grid point and mode).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_value: f64,
    pub mode: Mode,
    pub horizon: usize,
    pub feasible_count: usize,
    pub total: usize,
    pub mean_l_inf: f64,
    /// Mean over feasible trials; `None` when nothing was feasible.
    pub mean_rho: Option<f64>,
}

/// Full sweep output: aggregates plus the per-trial records they came from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRecord>,
    pub runtime_seconds: f64,
}

/// Run one trial at a grid point; returns one record per requested mode.
pub fn run_trial(
    cfg: &ExperimentConfig,
    alpha: f64,
    lambda: f64,
    horizon: usize,
    trial: usize,
    modes: &[Mode],
) -> Result<Vec<TrialRecord>> {
    let seed = derive_seed(cfg.seed, trial as u64);
    let data = prepare_trial(cfg, alpha, horizon, seed)?;
    let family = build_family(&data.batch, &data.dc, &data.prior)?;
    let safe = cfg.safe_polytope()?;
    let (_, m_x) = safe.interval_hull()?;
    let h_mat = safe.h_mat().clone();
    let problem = SynthesisProblem {
        family,
        safe_set: SafeSet::Polytope(safe),
        disturbance: data.sys.disturbance.clone(),
        lambda,
        batch: data.batch.clone(),
    };
    let grid_value = match cfg.sweep_over {
        SweepAxis::Alpha => alpha,
        SweepAxis::Lambda => lambda,
    };
    let mut out = Vec::with_capacity(modes.len());
    for mode in modes {
        let options = PolytopeOptions {
            use_family_constraints: *mode == Mode::Prior,
            rho_cap: None,
        };
        let cert = synth_polytope(&problem, &options)?;
        let (feasible, l_inf, rho) = match &cert {
            Some(c) => (
                true,
                c.diagnostics
                    .l_bound
                    .as_ref()
                    .map(|l| l.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                    .unwrap_or(0.0),
                c.rho(),
            ),
            None => {
                // Infeasible runs still report the bound that killed them.
                let l = crate::synthesis::compute_l(
                    &problem.family,
                    &h_mat,
                    m_x,
                    *mode == Mode::Prior,
                )?;
                (false, l.iter().fold(0.0f64, |a, v| a.max(v.abs())), None)
            }
        };
        out.push(TrialRecord {
            grid_value,
            horizon,
            trial,
            mode: *mode,
            feasible,
            l_inf,
            rho,
        });
    }
    Ok(out)
}

/// Monte Carlo sweep over the configured grid with a small worker pool.
/// Trials derive their seeds from the base seed and trial index only, so the
/// same draws back every grid point.
pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let modes = cfg.modes.modes();
    let grid: Vec<f64> = match cfg.sweep_over {
        SweepAxis::Alpha => cfg.alpha_grid.clone(),
        SweepAxis::Lambda => cfg.lambda_grid.clone(),
    };

    // Work items: (grid value, horizon, trial index).
    let mut items = Vec::new();
    for &g in &grid {
        for &t in &cfg.horizon_grid {
            for trial in 0..cfg.trials {
                items.push((g, t, trial));
            }
        }
    }

    let results: Mutex<Vec<(usize, Vec<TrialRecord>)>> =
        Mutex::new(Vec::with_capacity(items.len()));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let workers = jobs.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= items.len() {
                    break;
                }
                let (g, t, trial) = items[idx];
                let (alpha, lambda) = match cfg.sweep_over {
                    SweepAxis::Alpha => (g, cfg.lambda),
                    SweepAxis::Lambda => (cfg.alpha, g),
                };
                match run_trial(cfg, alpha, lambda, t, trial, &modes) {
                    Ok(records) => results.lock().unwrap().push((idx, records)),
                    Err(e) => {
                        let mut slot = first_error.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }

    let mut indexed = results.into_inner().unwrap();
    indexed.sort_by_key(|(idx, _)| *idx);
    let trials: Vec<TrialRecord> = indexed.into_iter().flat_map(|(_, r)| r).collect();

    // Aggregate per (grid value, horizon, mode), in grid order.
    let mut rows = Vec::new();
    for &g in &grid {
        for &t in &cfg.horizon_grid {
            for mode in &modes {
                let group: Vec<&TrialRecord> = trials
                    .iter()
                    .filter(|r| r.grid_value == g && r.horizon == t && r.mode == *mode)
                    .collect();
                let total = group.len();
                let feasible_count = group.iter().filter(|r| r.feasible).count();
                let mean_l_inf = if total > 0 {
                    group.iter().map(|r| r.l_inf).sum::<f64>() / total as f64
                } else {
                    0.0
                };
                let rhos: Vec<f64> = group.iter().filter_map(|r| r.rho).collect();
                let mean_rho = if rhos.is_empty() {
                    None
                } else {
                    Some(rhos.iter().sum::<f64>() / rhos.len() as f64)
                };
                rows.push(SweepRow {
                    grid_value: g,
                    mode: *mode,
                    horizon: t,
                    feasible_count,
                    total,
                    mean_l_inf,
                    mean_rho,
                });
            }
        }
    }
    Ok(SweepResult {
        rows,
        trials,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Sweep aggregate CSV: `grid_value, mode, T, feasible_count, total,
/// mean_l_inf, mean_rho`.
pub fn sweep_to_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "grid_value",
        "mode",
        "T",
        "feasible_count",
        "total",
        "mean_l_inf",
        "mean_rho",
    ])?;
    for row in &result.rows {
        w.write_record(&[
            format!("{}", row.grid_value),
            row.mode.label().to_string(),
            row.horizon.to_string(),
            row.feasible_count.to_string(),
            row.total.to_string(),
            format!("{}", row.mean_l_inf),
            row.mean_rho.map(|r| format!("{r}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial CSV alongside the aggregates.
pub fn trials_to_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["grid_value", "T", "trial", "mode", "feasible", "l_inf", "rho"])?;
    for r in &result.trials {
        w.write_record(&[
            format!("{}", r.grid_value),
            r.horizon.to_string(),
            r.trial.to_string(),
            r.mode.label().to_string(),
            (r.feasible as u8).to_string(),
            format!("{}", r.l_inf),
            r.rho.map(|v| format!("{v}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Output of a single-shot synthesis run.
pub struct SynthRun {
    pub certificate: Option<SynthesisCertificate>,
    pub report: Option<ContractivityReport>,
    pub trial: TrialData,
}

/// Synthesize once at the configured point and verify empirically.
pub fn run_synth(cfg: &ExperimentConfig, verify_trials: usize) -> Result<SynthRun> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, 0);
    let trial = prepare_trial(cfg, cfg.alpha, cfg.horizon, seed)?;
    let family = build_family(&trial.batch, &trial.dc, &trial.prior)?;
    let problem = SynthesisProblem {
        family,
        safe_set: SafeSet::Polytope(cfg.safe_polytope()?),
        disturbance: trial.sys.disturbance.clone(),
        lambda: cfg.lambda,
        batch: trial.batch.clone(),
    };
    let certificate = synth_polytope(&problem, &PolytopeOptions::default())?;
    let report = match &certificate {
        Some(cert) if verify_trials > 0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
            Some(verify_contractive(
                &cert.gain.k,
                &trial.sys,
                &problem.safe_set,
                cfg.lambda,
                verify_trials,
                1e-7,
                &mut rng,
            )?)
        }
        _ => None,
    };
    Ok(SynthRun {
        certificate,
        report,
        trial,
    })
}

/// Evenly spread boundary points of a 2-D polytope (ray scaling from the
/// hull center).
pub fn boundary_starts(polytope: &Polytope, count: usize) -> Result<Vec<Array1<f64>>> {
    if polytope.dim() != 2 {
        return Err(Error::InvalidParameter(
            "boundary starts are implemented for planar safe sets".into(),
        ));
    }
    let (hull, _) = polytope.interval_hull()?;
    let center =
        Array1::from_iter((0..2).map(|i| 0.5 * (hull.lower()[[i, 0]] + hull.upper()[[i, 0]])));
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let angle = 2.0 * std::f64::consts::PI * (k as f64) / (count as f64);
        let dir = ndarray::array![angle.cos(), angle.sin()];
        let tau = polytope
            .ray_to_boundary(&center, &dir)
            .ok_or_else(|| Error::Unbounded("safe set has an unbounded direction".into()))?;
        out.push(&center + &(&dir * tau));
    }
    Ok(out)
}

/// Synthesize at the configured point, then roll out closed-loop
/// trajectories from evenly spread boundary starts under fresh disturbances.
pub fn run_simulate(
    cfg: &ExperimentConfig,
    starts: usize,
    steps: usize,
) -> Result<(SynthesisCertificate, Vec<(usize, crate::data::Trajectory)>)> {
    let run = run_synth(cfg, 0)?;
    let cert = run
        .certificate
        .ok_or_else(|| Error::EmptySet("synthesis infeasible at the configured point".into()))?;
    let polytope = cfg.safe_polytope()?;
    let mut trajectories = Vec::with_capacity(starts);
    for (idx, x0) in boundary_starts(&polytope, starts)?.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 100 + idx as u64));
        let traj = simulate(
            &run.trial.sys,
            &x0,
            &InputPolicy::Feedback {
                gain: cert.gain.k.clone(),
                excitation: 0.0,
            },
            steps,
            &mut rng,
        )?;
        trajectories.push((idx, traj));
    }
    Ok((cert, trajectories))
}

/// Trajectories CSV: `start, t, x1..xn, u1..um` (inputs empty on the final
/// row of each start).
pub fn trajectories_to_csv(
    trajectories: &[(usize, crate::data::Trajectory)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let n = trajectories
        .first()
        .map(|(_, t)| t.states[0].len())
        .unwrap_or(0);
    let m = trajectories
        .first()
        .map(|(_, t)| t.inputs.first().map(|u| u.len()).unwrap_or(0))
        .unwrap_or(0);
    let mut header = vec!["start".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for (start, traj) in trajectories {
        for (t, x) in traj.states.iter().enumerate() {
            let mut rec = vec![start.to_string(), t.to_string()];
            rec.extend(x.iter().map(|v| format!("{v}")));
            if t < traj.inputs.len() {
                rec.extend(traj.inputs[t].iter().map(|v| format!("{v}")));
            } else {
                rec.extend((0..m).map(|_| String::new()));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sampled members of the three nested closed-loop families for a fixed
/// gain parameter, as labelled entry rows for external plotting.
pub struct NestingSamples {
    /// `(set label, sample index, row, col, value)`.
    pub rows: Vec<(String, usize, usize, usize, f64)>,
}

pub fn run_nesting(cfg: &ExperimentConfig, samples: usize) -> Result<NestingSamples> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, 0);
    let trial = prepare_trial(cfg, cfg.alpha, cfg.horizon, seed)?;
    let gain = vk_from_gain(&trial.batch, &cfg.data.stabilizing_gain)?;

    let unconstrained =
        crate::closed_loop::unconstrained_family(&trial.batch, &trial.dc)?.instantiate(&gain)?;
    let noise =
        crate::closed_loop::noise_refined_family(&trial.batch, &trial.dc)?.instantiate(&gain)?;
    let full = build_family(&trial.batch, &trial.dc, &trial.prior)?.instantiate(&gain)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut rows = Vec::new();
    for (label, set) in [
        ("unconstrained", &unconstrained),
        ("noise-refined", &noise),
        ("prior-refined", &full),
    ] {
        for (idx, x) in set.sample(&mut rng, samples)?.into_iter().enumerate() {
            for ((r, c), v) in x.indexed_iter() {
                rows.push((label.to_string(), idx, r, c, *v));
            }
        }
    }
    Ok(NestingSamples { rows })
}

pub fn nesting_to_csv(samples: &NestingSamples, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["set", "sample", "row", "col", "value"])?;
    for (label, idx, r, c, v) in &samples.rows {
        w.write_record(&[
            label.clone(),
            idx.to_string(),
            r.to_string(),
            c.to_string(),
            format!("{v}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Identification run: refine a prior with a source batch and report the
/// per-entry hull shrinkage.
pub struct IdRun {
    pub refined: PriorKnowledge,
    /// `(row, col, old_lo, old_hi, new_lo, new_hi)`.
    pub shrinkage: Vec<(usize, usize, f64, f64, f64, f64)>,
}

pub fn run_id(cfg: &ExperimentConfig, source: &DataBatch, prior: &PriorKnowledge) -> Result<IdRun> {
    let source_sys = cfg.source_system()?;
    let dc = t_concat_disturbance(&source_sys.disturbance, source.t)?;
    let info = build_info_set(source, &dc)?;
    let refined = refine_prior(prior, &info)?;
    let before = prior.set.interval_hull_exact()?;
    let after = refined.set.interval_hull_exact()?;
    let mut shrinkage = Vec::new();
    for ((r, c), _) in before.lower().indexed_iter() {
        shrinkage.push((
            r,
            c,
            before.lower()[[r, c]],
            before.upper()[[r, c]],
            after.lower()[[r, c]],
            after.upper()[[r, c]],
        ));
    }
    Ok(IdRun { refined, shrinkage })
}

pub fn shrinkage_to_csv(run: &IdRun, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["entry", "old_lo", "old_hi", "new_lo", "new_hi"])?;
    for (r, c, ol, oh, nl, nh) in &run.shrinkage {
        w.write_record(&[
            format!("({r},{c})"),
            format!("{ol}"),
            format!("{oh}"),
            format!("{nl}"),
            format!("{nh}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run metadata written next to every output: config fingerprint, seed, and
/// crate version.
#[derive(Serialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub subcommand: String,
}

pub fn write_metadata(
    out_dir: impl AsRef<Path>,
    cfg: &ExperimentConfig,
    subcommand: &str,
) -> Result<()> {
    let canonical = serde_json::to_string(cfg)?;
    let meta = RunMetadata {
        config_hash: crate::io::fnv1a_hex(canonical.as_bytes()),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
    };
    crate::io::save_json(out_dir.as_ref().join("run_meta.json"), &meta)
}

/// Human-readable summary of a sweep (used by the CLI).
pub fn sweep_summary(result: &SweepResult) -> String {
    let mut out = String::new();
    for row in &result.rows {
        let _ = writeln!(
            out,
            "grid={:<6} T={:<3} mode={:<8} feasible {}/{} mean_l_inf={:.4} mean_rho={}",
            row.grid_value,
            row.horizon,
            row.mode.label(),
            row.feasible_count,
            row.total,
            row.mean_l_inf,
            row.mean_rho
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    out
}
