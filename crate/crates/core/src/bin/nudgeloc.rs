use clap::{Args, Parser, Subcommand};
use nudgeloc::geometry::Pose;
use nudgeloc::harness::{
    calibrate_lambda, run_experiment_suite, write_outputs, DatabaseSet, ExperimentConfig,
    HarnessError, SuiteResult, TrialKind, Variant,
};
use nudgeloc::image::CameraIntrinsics;
use nudgeloc::scene::render;
use nudgeloc::vpr::{build_anchor_db, GridSpec};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nudgeloc", version, about = "Nudged particle filter localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of trials per variant.
    #[arg(long)]
    trials: Option<usize>,
    /// Variants to run (nudged, bootstrap, attenuated); repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<String>,
    /// Frames per trial.
    #[arg(long)]
    frames: Option<usize>,
    /// Directory for cached anchor databases.
    #[arg(long)]
    anchors: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render and encode an anchor database.
    BuildAnchors {
        #[command(flatten)]
        common: Common,
        /// "dense", "sparse", 504 or 2502.
        #[arg(long, default_value = "dense")]
        grid: String,
    },
    /// Global localization from a uniform prior.
    RunGlobal {
        #[command(flatten)]
        common: Common,
        /// Calibrate the dispersion threshold first and use the result.
        #[arg(long)]
        calibrate: bool,
        /// Position error the calibrated threshold must guarantee (m).
        #[arg(long, default_value_t = 0.3)]
        target_error: f64,
    },
    /// Calibrate the dispersion threshold on global runs without mode switching.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.3)]
        target_error: f64,
    },
    /// Pose tracking from the initial tracking prior.
    RunTrack {
        #[command(flatten)]
        common: Common,
    },
    /// Tracking start with a mid-run teleport, exercising kidnap recovery.
    RunFull {
        #[command(flatten)]
        common: Common,
    },
    /// All three variants on paired global trials.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Render the map from one pose to a PNG.
    RenderPreview {
        #[command(flatten)]
        common: Common,
        /// x,y,z in meters and yaw,pitch,roll in degrees.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.0, 0.0, 0.9, 0.0, 0.0, 0.0])]
        pose: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        width: usize,
        #[arg(long, default_value_t = 340)]
        height: usize,
        /// Composite the map floaters.
        #[arg(long)]
        artifacts: bool,
    },
}

fn load_config(common: &Common, kind: Option<TrialKind>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let mut c = ExperimentConfig::default();
            if kind == Some(TrialKind::Tracking) {
                c.inputs.trajectory.frames = 40;
            }
            c
        }
    };
    if let Some(k) = kind {
        cfg.kind = k;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(f) = common.frames {
        cfg.inputs.trajectory.frames = f;
    }
    if let Some(d) = &common.anchors {
        cfg.database_dir = Some(d.clone());
    }
    if !common.variant.is_empty() {
        cfg.variants = common
            .variant
            .iter()
            .map(|s| Variant::parse(s).ok_or_else(|| HarnessError::Config(format!("unknown variant {s}"))))
            .collect::<Result<_, _>>()?;
        let keep = cfg.variants.clone();
        // gates on variants that are not run cannot be evaluated
        cfg.gates.retain(|g| gate_variants(g).iter().all(|v| keep.contains(v)));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gate_variants(g: &nudgeloc::harness::Gate) -> Vec<Variant> {
    use nudgeloc::harness::Gate::*;
    match g {
        FinalErrorBelow { variant, .. } | MeanErrorBelow { variant, .. } | KidnapRecovery { variant, .. } => {
            vec![*variant]
        }
        FinalErrorOrder { lower, higher, .. } | IqrOrder { lower, higher } | YawErrorOrder { lower, higher } => {
            vec![*lower, *higher]
        }
        ConvergenceRatio { fast, slow, .. } => vec![*fast, *slow],
        StepFrequencyOrder { faster, slower } => vec![*faster, *slower],
    }
}

fn report(result: &SuiteResult, out: &Path) {
    println!("{} ({} trials)", result.config.name, result.config.trials);
    for a in &result.aggregates {
        let b = a.final_error;
        println!(
            "  {:<10} final error median {} IQR {}  convergence frame median {}  converged {}/{}  failed {}{}{}",
            a.variant.name(),
            b.map_or("-".into(), |b| format!("{:.3} m", b.median)),
            b.map_or("-".into(), |b| format!("{:.3} m", b.iqr())),
            a.median_convergence_frame,
            a.converged,
            a.trials,
            a.failed,
            a.timing.map_or(String::new(), |t| format!("  {:.3} Hz", t.mean_step_hz)),
            a.kidnap
                .as_ref()
                .map_or(String::new(), |k| format!("  kidnap recovered {}/{}", k.successes, a.trials)),
        );
    }
    for g in &result.gates {
        println!("  [{}] {:?}: {}", if g.passed { "PASS" } else { "FAIL" }, g.gate, g.detail);
    }
    println!("outputs in {}", out.display());
}

fn run_suite(cfg: &ExperimentConfig, out: &Path) -> Result<bool, HarnessError> {
    let result = run_experiment_suite(cfg, None)?;
    write_outputs(&result, out)?;
    report(&result, out);
    Ok(result.gates_passed())
}

fn calibrate_into(cfg: &mut ExperimentConfig, out: &Path, target_error: f64, trials: usize) -> Result<(), HarnessError> {
    let scene = cfg.scene();
    let mut dense_only = cfg.clone();
    dense_only.variants = vec![Variant::Nudged];
    let dbs = DatabaseSet::for_config(&dense_only, &scene)?;
    let Some(c) = calibrate_lambda(cfg, &dbs, trials.min(cfg.trials), target_error)? else {
        return Err(HarnessError::Config(format!(
            "no frame reached a position error below {target_error} m"
        )));
    };
    println!("calibrated lambda {:.5} (target error {target_error} m)", c.lambda);
    cfg.filter.lambda = c.lambda;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("calibration.json"), serde_json::to_string_pretty(&c)?)?;
    std::fs::write(out.join("config.calibrated.json"), serde_json::to_string_pretty(&cfg)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::BuildAnchors { common, grid } => {
            let cfg = load_config(&common, None)?;
            let grid = match grid.as_str() {
                "dense" | "2502" => cfg.dense_grid.clone(),
                "sparse" | "504" => cfg.sparse_grid.clone(),
                other => {
                    let p = Path::new(other);
                    serde_json::from_str::<GridSpec>(&std::fs::read_to_string(p)?)?
                }
            };
            let scene = cfg.scene();
            let db = build_anchor_db(&scene, &grid, &cfg.anchor_intrinsics, cfg.filter.artifacts.as_ref())?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join(format!("anchors_{}.nldb", db.len()));
            db.save(&path)?;
            std::fs::write(
                common.out.join(format!("anchors_{}.json", db.len())),
                serde_json::to_string_pretty(db.info())?,
            )?;
            println!("wrote {} anchors to {}", db.len(), path.display());
            Ok(true)
        }
        Command::RunGlobal {
            common,
            calibrate,
            target_error,
        } => {
            let mut cfg = load_config(&common, Some(TrialKind::Global))?;
            if calibrate {
                calibrate_into(&mut cfg, &common.out, target_error, 3)?;
            }
            run_suite(&cfg, &common.out)
        }
        Command::Calibrate { common, target_error } => {
            let mut cfg = load_config(&common, Some(TrialKind::Global))?;
            let n = cfg.trials;
            calibrate_into(&mut cfg, &common.out, target_error, n)?;
            Ok(true)
        }
        Command::RunTrack { common } => run_suite(&load_config(&common, Some(TrialKind::Tracking))?, &common.out),
        Command::RunFull { common } => run_suite(&load_config(&common, Some(TrialKind::Kidnap))?, &common.out),
        Command::Ablate { common } => {
            let mut cfg = load_config(&common, Some(TrialKind::Global))?;
            if common.variant.is_empty() {
                cfg.variants = Variant::ALL.to_vec();
            }
            run_suite(&cfg, &common.out)
        }
        Command::RenderPreview {
            common,
            pose,
            width,
            height,
            artifacts,
        } => {
            let cfg = load_config(&common, None)?;
            if pose.len() != 6 {
                return Err(HarnessError::Config(format!("--pose needs 6 values, got {}", pose.len())));
            }
            let k = CameraIntrinsics::new(width, height, cfg.filter.k_plus.horizontal_fov)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let p = Pose::from_ypr(
                nalgebra::Vector3::new(pose[0], pose[1], pose[2]),
                pose[3].to_radians(),
                pose[4].to_radians(),
                pose[5].to_radians(),
            );
            let scene = cfg.scene();
            let img = render(&scene, &p, &k, artifacts.then_some(()).and(cfg.filter.artifacts.as_ref()))?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("preview.png");
            img.save(&path).map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
