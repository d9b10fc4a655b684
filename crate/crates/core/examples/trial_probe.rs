//! Runs a few seeded trials with the default experiment config and prints
//! one summary line per variant, or every frame with `--frames`.
//!
//! Usage: trial_probe <global|tracking|kidnap> [trials] [--frames]

use nudgeloc::harness::{run_suite_trial, DatabaseSet, ExperimentConfig, TrialKind};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(String::as_str) {
        Some("tracking") => TrialKind::Tracking,
        Some("kidnap") => TrialKind::Kidnap,
        _ => TrialKind::Global,
    };
    let trials: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let verbose = args.iter().any(|a| a == "--frames");
    let mut cfg = ExperimentConfig {
        kind,
        ..ExperimentConfig::default()
    };
    if kind == TrialKind::Tracking {
        cfg.inputs.trajectory.frames = 40;
    }
    let scene = cfg.scene();
    let dbs = DatabaseSet::for_config(&cfg, &scene).unwrap();
    for t in 0..trials {
        let (_, reports) = run_suite_trial(&cfg, &scene, &dbs, t).unwrap();
        for r in &reports {
            if verbose {
                for f in &r.frames {
                    println!(
                        "  {:>3} {:?}->{:?} s2={:.4} err={:.3} yaw={:.1} acc={} kid={} {:.0}ms",
                        f.frame,
                        f.mode,
                        f.next_mode,
                        f.sigma2,
                        f.position_error.unwrap_or(f64::NAN),
                        f.ypr_error_deg.map_or(f64::NAN, |e| e[0]),
                        f.nudge_accepted,
                        f.kidnap,
                        f.wall_ms
                    );
                }
            }
            let s = &r.summary;
            println!(
                "trial {} {:>10}: final {:.3} m, mean {:.3} m, conv {:?}, tracking frames {}, kidnaps {:?}",
                r.trial,
                r.variant.name(),
                s.final_position_error.unwrap_or(f64::NAN),
                s.mean_position_error.unwrap_or(f64::NAN),
                s.convergence_frame,
                s.tracking_frames,
                s.kidnap_frames
            );
        }
    }
}
