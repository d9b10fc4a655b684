use super::{
    make_inputs, median, run_trial, HarnessError, InputParams, Timing, TrialInputs, TrialKind,
    TrialReport, Variant,
};
use crate::filter::{FilterConfig, Mode};
use crate::image::CameraIntrinsics;
use crate::scene::SceneModel;
use crate::vpr::{build_anchor_db, AnchorDatabase, GridSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// A multi-trial experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: TrialKind,
    pub trials: usize,
    /// Trial `t` uses seed `seed + t`.
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub filter: FilterConfig,
    pub inputs: InputParams,
    pub scene_seed: u64,
    pub dense_grid: GridSpec,
    pub sparse_grid: GridSpec,
    pub anchor_intrinsics: CameraIntrinsics,
    pub convergence_window: usize,
    /// Kidnap trials: error below which the filter counts as recovered...
    pub recovery_error: f64,
    /// ...within this many frames of the teleport.
    pub recovery_window: usize,
    /// Frames allowed after `patience` for the mode to return to global.
    pub detection_slack: usize,
    /// Anchor databases are cached here when set.
    pub database_dir: Option<PathBuf>,
    pub gates: Vec<Gate>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            kind: TrialKind::Global,
            trials: 20,
            seed: 1000,
            variants: Variant::ALL.to_vec(),
            filter: desk_filter(),
            inputs: InputParams::default(),
            scene_seed: 7,
            dense_grid: GridSpec::anchors_2502(),
            sparse_grid: GridSpec::anchors_504(),
            anchor_intrinsics: CameraIntrinsics {
                width: 80,
                height: 64,
                horizontal_fov: 1.4,
            },
            convergence_window: 5,
            recovery_error: 0.6,
            recovery_window: 40,
            detection_slack: 5,
            database_dir: None,
            gates: Vec::new(),
        }
    }
}

/// Filter defaults with the tracking resolution scaled down so that a
/// 20-trial suite finishes in tens of minutes on one core. The likelihood
/// is sharpened to match: SSIM differences at 120 px are too small for
/// `alpha_lik = 10` to pull a tracked cloud tighter than about 5 cm.
pub fn desk_filter() -> FilterConfig {
    let f = FilterConfig::default();
    FilterConfig {
        alpha_lik: 20.0,
        k_plus: CameraIntrinsics {
            width: 120,
            height: 102,
            horizontal_fov: f.k_plus.horizontal_fov,
        },
        ..f
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 || self.variants.is_empty() {
            return Err(HarnessError::Config("need at least one trial and one variant".into()));
        }
        self.filter.validate().map_err(HarnessError::Config)?;
        self.anchor_intrinsics
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.inputs.trajectory.frames < 2 {
            return Err(HarnessError::Config("trials need at least two frames".into()));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn scene(&self) -> SceneModel {
        SceneModel::default_room(self.scene_seed)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The anchor databases a suite needs.
#[derive(Debug, Clone, Default)]
pub struct DatabaseSet {
    pub dense: Option<AnchorDatabase>,
    pub sparse: Option<AnchorDatabase>,
}

fn database_for(
    cfg: &ExperimentConfig,
    scene: &SceneModel,
    grid: &GridSpec,
) -> Result<AnchorDatabase, HarnessError> {
    let artifacts = cfg.filter.artifacts.as_ref();
    let path = cfg.database_dir.as_ref().map(|d| {
        d.join(format!(
            "anchors_{}_s{}_{}x{}.nldb",
            grid.cardinality(),
            cfg.scene_seed,
            cfg.anchor_intrinsics.width,
            cfg.anchor_intrinsics.height
        ))
    });
    if let Some(p) = &path {
        if let Ok(db) = AnchorDatabase::load(p) {
            let i = db.info();
            if i.grid == *grid
                && i.intrinsics == cfg.anchor_intrinsics
                && i.artifacts.as_ref() == artifacts
                && i.scene_seed == scene.seed
            {
                return Ok(db);
            }
        }
    }
    let db = build_anchor_db(scene, grid, &cfg.anchor_intrinsics, artifacts)?;
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        db.save(p)?;
    }
    Ok(db)
}

impl DatabaseSet {
    /// Builds (or loads from the cache) the databases the configured
    /// variants use.
    pub fn for_config(cfg: &ExperimentConfig, scene: &SceneModel) -> Result<Self, HarnessError> {
        let need = |dense: bool| cfg.variants.iter().any(|v| v.uses_dense_grid() == Some(dense));
        Ok(Self {
            dense: need(true).then(|| database_for(cfg, scene, &cfg.dense_grid)).transpose()?,
            sparse: need(false).then(|| database_for(cfg, scene, &cfg.sparse_grid)).transpose()?,
        })
    }

    pub fn for_variant(&self, v: Variant) -> Option<&AnchorDatabase> {
        match v.uses_dense_grid() {
            Some(true) => self.dense.as_ref(),
            Some(false) => self.sparse.as_ref(),
            None => None,
        }
    }
}

/// Runs every configured variant on trial `trial`'s inputs.
pub fn run_suite_trial(
    cfg: &ExperimentConfig,
    scene: &SceneModel,
    dbs: &DatabaseSet,
    trial: usize,
) -> Result<(TrialInputs, Vec<TrialReport>), HarnessError> {
    let inputs = make_inputs(
        cfg.trial_seed(trial),
        cfg.kind,
        &cfg.inputs,
        &cfg.filter.k_plus,
        scene,
    )?;
    let reports = cfg
        .variants
        .iter()
        .map(|v| run_trial(scene, dbs.for_variant(*v), &cfg.filter, &inputs, *v, trial, cfg.convergence_window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((inputs, reports))
}

/// Min, quartiles and max with linear interpolation between order
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(v.len() - 1);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    Some(BoxStats {
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

/// Per-trial outcome of a kidnap run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KidnapOutcome {
    pub trial: usize,
    /// Frames from the teleport until the filter chose global mode.
    pub detection_delay: Option<usize>,
    /// Frames from the teleport until the error first fell below the
    /// recovery threshold after detection.
    pub recovery_delay: Option<usize>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KidnapStats {
    pub outcomes: Vec<KidnapOutcome>,
    pub successes: usize,
}

fn kidnap_outcome(cfg: &ExperimentConfig, report: &TrialReport, kidnap_frame: usize) -> KidnapOutcome {
    let frames = &report.frames;
    let detect = frames
        .iter()
        .filter(|r| r.frame >= kidnap_frame)
        .find(|r| r.next_mode == Mode::Global)
        .map(|r| r.frame);
    let recover = detect.and_then(|d| {
        frames
            .iter()
            .filter(|r| r.frame > d)
            .find(|r| r.position_error.is_some_and(|e| e < cfg.recovery_error))
            .map(|r| r.frame)
    });
    let detection_delay = detect.map(|d| d - kidnap_frame);
    let recovery_delay = recover.map(|r| r - kidnap_frame);
    let success = detection_delay.is_some_and(|d| d <= cfg.filter.patience + cfg.detection_slack)
        && recovery_delay.is_some_and(|r| r <= cfg.recovery_window);
    KidnapOutcome {
        trial: report.trial,
        detection_delay,
        recovery_delay,
        success,
    }
}

/// Aggregate over the trials of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub variant: Variant,
    pub trials: usize,
    pub failed: usize,
    pub converged: usize,
    pub final_error: Option<BoxStats>,
    /// Mean over trials of the per-trial mean position error.
    pub mean_position_error: Option<f64>,
    /// Mean over trials of the per-trial mean (yaw, pitch, roll) error.
    pub mean_ypr_error_deg: Option<[f64; 3]>,
    /// Non-converged trials count as converging at the last frame.
    pub median_convergence_frame: f64,
    pub mean_convergence_frame: f64,
    pub kidnap: Option<KidnapStats>,
    pub timing: Option<Timing>,
}

impl VariantAggregate {
    pub fn from_reports(cfg: &ExperimentConfig, variant: Variant, reports: &[&TrialReport]) -> Self {
        let finals: Vec<f64> = reports.iter().filter_map(|r| r.summary.final_position_error).collect();
        let means: Vec<f64> = reports.iter().filter_map(|r| r.summary.mean_position_error).collect();
        let ypr: Vec<[f64; 3]> = reports.iter().filter_map(|r| r.summary.mean_ypr_error_deg).collect();
        let conv: Vec<f64> = reports
            .iter()
            .map(|r| match (r.converged(), r.summary.convergence_frame) {
                (true, Some(c)) => c as f64,
                _ => cfg.inputs.trajectory.frames as f64,
            })
            .collect();
        let kidnap = (cfg.kind == TrialKind::Kidnap).then(|| {
            let outcomes: Vec<KidnapOutcome> = reports
                .iter()
                .map(|r| kidnap_outcome(cfg, r, cfg.inputs.kidnap_frame))
                .collect();
            KidnapStats {
                successes: outcomes.iter().filter(|o| o.success).count(),
                outcomes,
            }
        });
        let timings: Vec<Timing> = reports.iter().filter_map(|r| r.timing).collect();
        let timing = (!timings.is_empty()).then(|| {
            // pool frames so long and short trials weigh by frame
            let (ms, n) = reports.iter().fold((0.0, 0usize), |(ms, n), r| {
                (ms + r.frames.iter().map(|f| f.wall_ms).sum::<f64>(), n + r.frames.len())
            });
            let mean_ms = if n > 0 { ms / n as f64 } else { 0.0 };
            Timing {
                mean_step_ms: mean_ms,
                mean_step_hz: if mean_ms > 0.0 { 1e3 / mean_ms } else { 0.0 },
            }
        });
        let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        VariantAggregate {
            variant,
            trials: reports.len(),
            failed: reports.iter().filter(|r| r.error.is_some()).count(),
            converged: reports.iter().filter(|r| r.converged()).count(),
            final_error: box_stats(&finals),
            mean_position_error: avg(&means),
            mean_ypr_error_deg: (!ypr.is_empty()).then(|| {
                std::array::from_fn(|i| ypr.iter().map(|e| e[i]).sum::<f64>() / ypr.len() as f64)
            }),
            median_convergence_frame: median(&conv).unwrap_or(f64::NAN),
            mean_convergence_frame: avg(&conv).unwrap_or(f64::NAN),
            kidnap,
            timing,
        }
    }
}

/// A pass/fail check on suite aggregates. Variants named in a gate must be
/// part of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    /// Median final position error below `max`.
    FinalErrorBelow { variant: Variant, max: f64 },
    /// Median final error of `lower` below (or, unless strict, equal to) `higher`.
    FinalErrorOrder { lower: Variant, higher: Variant, strict: bool },
    /// Interquartile range of `lower` not above that of `higher`.
    IqrOrder { lower: Variant, higher: Variant },
    /// Median convergence frame of `fast` at most `max_ratio` times `slow`'s.
    ConvergenceRatio { fast: Variant, slow: Variant, max_ratio: f64 },
    /// Mean per-trial position error below `max`.
    MeanErrorBelow { variant: Variant, max: f64 },
    /// Mean yaw error of `lower` strictly below `higher`.
    YawErrorOrder { lower: Variant, higher: Variant },
    /// Mean step frequency of `faster` at least that of `slower`.
    StepFrequencyOrder { faster: Variant, slower: Variant },
    /// At least `min_successes` kidnap trials detected and recovered.
    KidnapRecovery { variant: Variant, min_successes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub gate: Gate,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub config: ExperimentConfig,
    pub reports: Vec<TrialReport>,
    pub aggregates: Vec<VariantAggregate>,
    pub gates: Vec<GateResult>,
}

impl SuiteResult {
    pub fn aggregate(&self, v: Variant) -> Option<&VariantAggregate> {
        self.aggregates.iter().find(|a| a.variant == v)
    }

    pub fn reports_for(&self, v: Variant) -> impl Iterator<Item = &TrialReport> {
        self.reports.iter().filter(move |r| r.variant == v)
    }

    pub fn gates_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }
}

fn check(gate: &Gate, result: &SuiteResult) -> GateResult {
    let fail = |detail: String| GateResult {
        gate: gate.clone(),
        passed: false,
        detail,
    };
    let get = |v: Variant| result.aggregate(v).ok_or_else(|| format!("variant {} not in suite", v.name()));
    let med = |a: &VariantAggregate| a.final_error.map(|b| b.median);
    let outcome: Result<(bool, String), String> = (|| match gate {
        Gate::FinalErrorBelow { variant, max } => {
            let m = med(get(*variant)?).ok_or("no final errors")?;
            Ok((m < *max, format!("median final error {m:.3} m vs {max}")))
        }
        Gate::FinalErrorOrder { lower, higher, strict } => {
            let a = med(get(*lower)?).ok_or("no final errors")?;
            let b = med(get(*higher)?).ok_or("no final errors")?;
            let ok = if *strict { a < b } else { a <= b };
            Ok((ok, format!("{} {a:.3} m vs {} {b:.3} m", lower.name(), higher.name())))
        }
        Gate::IqrOrder { lower, higher } => {
            let a = get(*lower)?.final_error.ok_or("no final errors")?.iqr();
            let b = get(*higher)?.final_error.ok_or("no final errors")?.iqr();
            Ok((a <= b, format!("IQR {} {a:.3} m vs {} {b:.3} m", lower.name(), higher.name())))
        }
        Gate::ConvergenceRatio { fast, slow, max_ratio } => {
            let a = get(*fast)?.median_convergence_frame;
            let b = get(*slow)?.median_convergence_frame;
            let ratio = a / b;
            Ok((
                a <= max_ratio * b,
                format!("median convergence frame {a} vs {b} (ratio {ratio:.3}, speedup {:.2}x)", b / a),
            ))
        }
        Gate::MeanErrorBelow { variant, max } => {
            let m = get(*variant)?.mean_position_error.ok_or("no errors")?;
            Ok((m < *max, format!("mean position error {m:.3} m vs {max}")))
        }
        Gate::YawErrorOrder { lower, higher } => {
            let a = get(*lower)?.mean_ypr_error_deg.ok_or("no errors")?[0];
            let b = get(*higher)?.mean_ypr_error_deg.ok_or("no errors")?[0];
            Ok((a < b, format!("mean yaw error {} {a:.2} deg vs {} {b:.2} deg", lower.name(), higher.name())))
        }
        Gate::StepFrequencyOrder { faster, slower } => {
            let a = get(*faster)?.timing.ok_or("no timing")?.mean_step_hz;
            let b = get(*slower)?.timing.ok_or("no timing")?.mean_step_hz;
            Ok((a >= b, format!("step rate {} {a:.3} Hz vs {} {b:.3} Hz", faster.name(), slower.name())))
        }
        Gate::KidnapRecovery { variant, min_successes } => {
            let agg = get(*variant)?;
            let k = agg.kidnap.as_ref().ok_or("not a kidnap suite")?;
            Ok((
                k.successes >= *min_successes,
                format!("{} of {} trials recovered (need {min_successes})", k.successes, agg.trials),
            ))
        }
    })();
    match outcome {
        Ok((passed, detail)) => GateResult {
            gate: gate.clone(),
            passed,
            detail,
        },
        Err(e) => fail(e),
    }
}

pub fn evaluate_gates(result: &SuiteResult, gates: &[Gate]) -> Vec<GateResult> {
    gates.iter().map(|g| check(g, result)).collect()
}

/// Runs `cfg.trials` paired trials of every configured variant.
pub fn run_experiment_suite(
    cfg: &ExperimentConfig,
    dbs: Option<&DatabaseSet>,
) -> Result<SuiteResult, HarnessError> {
    cfg.validate()?;
    let scene = cfg.scene();
    let built;
    let dbs = match dbs {
        Some(d) => d,
        None => {
            built = DatabaseSet::for_config(cfg, &scene)?;
            &built
        }
    };
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let r = run_suite_trial(cfg, &scene, dbs, t).map(|(_, r)| r);
            if let Ok(reports) = &r {
                for rep in reports {
                    log::info!(
                        "{} trial {t} {}: final error {}",
                        cfg.name,
                        rep.variant.name(),
                        rep.summary.final_position_error.map_or("-".into(), |e| format!("{e:.3} m"))
                    );
                }
            }
            r
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<TrialReport> = per_trial.into_iter().flatten().collect();
    Ok(finish_suite(cfg, reports))
}

/// Aggregates and gates for a set of reports.
pub fn finish_suite(cfg: &ExperimentConfig, reports: Vec<TrialReport>) -> SuiteResult {
    let aggregates = cfg
        .variants
        .iter()
        .map(|v| {
            let mine: Vec<&TrialReport> = reports.iter().filter(|r| r.variant == *v).collect();
            VariantAggregate::from_reports(cfg, *v, &mine)
        })
        .collect();
    let mut result = SuiteResult {
        config: cfg.clone(),
        reports,
        aggregates,
        gates: Vec::new(),
    };
    result.gates = evaluate_gates(&result, &cfg.gates);
    result
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// Writes `results.json`, `summary.csv`, `plotdata.csv`, `timing.csv` and
/// one `frames/<variant>_trial<NNN>.jsonl` per trial into `dir`.
pub fn write_outputs(result: &SuiteResult, dir: &Path) -> Result<(), HarnessError> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir)?;
    std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(result)?)?;

    let mut summary = String::from(
        "variant,trials,failed,converged,final_min,final_q1,final_median,final_q3,final_max,\
         mean_position_error,mean_yaw_error_deg,mean_pitch_error_deg,mean_roll_error_deg,\
         median_convergence_frame,mean_convergence_frame,kidnap_successes,mean_step_ms,mean_step_hz\n",
    );
    for a in &result.aggregates {
        let b = a.final_error;
        let ypr = a.mean_ypr_error_deg;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.variant.name(),
            a.trials,
            a.failed,
            a.converged,
            opt(b.map(|b| b.min)),
            opt(b.map(|b| b.q1)),
            opt(b.map(|b| b.median)),
            opt(b.map(|b| b.q3)),
            opt(b.map(|b| b.max)),
            opt(a.mean_position_error),
            opt(ypr.map(|e| e[0])),
            opt(ypr.map(|e| e[1])),
            opt(ypr.map(|e| e[2])),
            a.median_convergence_frame,
            a.mean_convergence_frame,
            a.kidnap.as_ref().map_or(String::new(), |k| k.successes.to_string()),
            opt(a.timing.map(|t| t.mean_step_ms)),
            opt(a.timing.map(|t| t.mean_step_hz)),
        );
    }
    std::fs::write(dir.join("summary.csv"), summary)?;

    let mut plot = String::from(
        "variant,trial,seed,frame,mode,sigma2,position_error,yaw_error_deg,pitch_error_deg,roll_error_deg,nudge_accepted,kidnap\n",
    );
    let mut timing = String::from("variant,trial,frame,wall_ms\n");
    for r in &result.reports {
        for f in &r.frames {
            let ypr = f.ypr_error_deg;
            let _ = writeln!(
                plot,
                "{},{},{},{},{},{:.6e},{},{},{},{},{},{}",
                r.variant.name(),
                r.trial,
                r.seed,
                f.frame,
                match f.mode {
                    Mode::Global => "global",
                    Mode::Tracking => "tracking",
                },
                f.sigma2,
                opt(f.position_error),
                opt(ypr.map(|e| e[0])),
                opt(ypr.map(|e| e[1])),
                opt(ypr.map(|e| e[2])),
                f.nudge_accepted,
                f.kidnap as u8,
            );
            let _ = writeln!(timing, "{},{},{},{:.3}", r.variant.name(), r.trial, f.frame, f.wall_ms);
        }
        std::fs::write(
            frames_dir.join(format!("{}_trial{:03}.jsonl", r.variant.name(), r.trial)),
            r.frames_jsonl(),
        )?;
    }
    std::fs::write(dir.join("plotdata.csv"), plot)?;
    std::fs::write(dir.join("timing.csv"), timing)?;
    Ok(())
}

/// Outcome of a threshold calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub lambda: f64,
    pub target_error: f64,
    /// (σ², position error) of every frame of the calibration runs.
    pub samples: Vec<(f64, f64)>,
}

/// Picks λ from seeded global runs that never switch to tracking: the
/// largest dispersion at which every frame at or below it had a position
/// error under `target_error`. Returns `None` when no frame qualifies.
pub fn calibrate_lambda(
    cfg: &ExperimentConfig,
    dbs: &DatabaseSet,
    trials: usize,
    target_error: f64,
) -> Result<Option<CalibrationReport>, HarnessError> {
    let scene = cfg.scene();
    let mut filter = cfg.filter.clone();
    filter.mode_switching = false;
    let mut samples = Vec::new();
    for t in 0..trials {
        let inputs = make_inputs(cfg.trial_seed(t), TrialKind::Global, &cfg.inputs, &filter.k_plus, &scene)?;
        let r = run_trial(&scene, dbs.dense.as_ref(), &filter, &inputs, Variant::Nudged, t, cfg.convergence_window)?;
        if let Some(e) = r.error {
            return Err(HarnessError::Config(format!("calibration run failed: {e}")));
        }
        samples.extend(r.frames.iter().filter_map(|f| f.position_error.map(|e| (f.sigma2, e))));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut lambda = None;
    for (s, e) in &samples {
        if *e >= target_error {
            break;
        }
        lambda = Some(*s);
    }
    Ok(lambda.map(|lambda| CalibrationReport {
        lambda,
        target_error,
        samples,
    }))
}
