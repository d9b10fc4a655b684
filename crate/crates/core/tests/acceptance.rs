//! End-to-end acceptance checks. Runs the full experiment protocol, so it
//! takes about an hour on one core. Prints one PASS/FAIL line per
//! criterion and fails if any criterion fails.
//!
//! `NUDGELOC_ACCEPTANCE_TRIALS` overrides the trial count for quick local
//! runs; the criteria are defined at the default of 20.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::Vector3;
use nudgeloc::filter::{Filter, FilterConfig, Mode};
use nudgeloc::geometry::{compose, exp_map, log_map, weighted_mean, Pose, Twist};
use nudgeloc::harness::{
    make_inputs, run_experiment_suite, run_suite_trial, stream_rng, write_outputs, DatabaseSet,
    ExperimentConfig, SuiteResult, TrialKind, Variant,
};
use nudgeloc::image::resample_area;
use nudgeloc::scene::{render, SceneModel};
use nudgeloc::vpr::{build_anchor_db, encode, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn out_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

fn trials() -> usize {
    std::env::var("NUDGELOC_ACCEPTANCE_TRIALS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(20)
}

fn base_config(name: &str, kind: TrialKind) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        kind,
        trials: trials(),
        database_dir: Some(out_dir("anchors")),
        ..ExperimentConfig::default()
    }
}

fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
    let u = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
    let axis = loop {
        let a = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n: f64 = a.norm();
        if n > 1e-3 && n <= 1.0 {
            break a / n;
        }
    };
    Twist::new(u, axis * rng.gen_range(0.0..max_angle)).unwrap()
}

fn geometry_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut round_trip: f64 = 0.0;
    let mut group: f64 = 0.0;
    for _ in 0..1000 {
        let t = random_twist(&mut rng, std::f64::consts::PI - 1e-3);
        let back = log_map(&exp_map(&t)).unwrap();
        for (a, b) in back.to_array().iter().zip(t.to_array()) {
            round_trip = round_trip.max((a - b).abs());
        }
        let a = exp_map(&random_twist(&mut rng, 3.0));
        let b = exp_map(&random_twist(&mut rng, 3.0));
        let c = exp_map(&random_twist(&mut rng, 3.0));
        group = group
            .max(compose(&compose(&a, &b), &c).max_abs_diff(&compose(&a, &compose(&b, &c))))
            .max(compose(&a, &a.inverse()).max_abs_diff(&Pose::identity()))
            .max(compose(&a.inverse(), &a).max_abs_diff(&Pose::identity()))
            .max(compose(&Pose::identity(), &a).max_abs_diff(&a))
            .max(compose(&a, &Pose::identity()).max_abs_diff(&a));
    }
    // symmetric pairs average to the midpoint exactly
    let mut symmetric = true;
    for th in [0.1, 0.7, 1.3] {
        let p = |s: f64| Pose::from_ypr(Vector3::new(s * 0.5, -s * 0.25, 1.0), s * th, 0.0, 0.0);
        let m = weighted_mean(&[(0.5, p(1.0)), (0.5, p(-1.0))]).unwrap();
        symmetric &= m.translation == Vector3::new(0.0, 0.0, 1.0);
        symmetric &= m.ypr().0 == 0.0;
    }
    let p = Pose::from_ypr(Vector3::new(0.3, 0.2, 0.1), 0.4, 0.1, -0.2);
    symmetric &= weighted_mean(&[(2.0, p), (7.0, p)]).unwrap() == p;
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        name: "geometry suite",
        passed: round_trip < 1e-8 && group < 1e-9 && symmetric && secs < 5.0,
        detail: format!("exp/log max error {round_trip:.2e}, group {group:.2e}, symmetric means {symmetric}, {secs:.2} s"),
    }
}

fn random_view(rng: &mut ChaCha8Rng) -> Pose {
    let t = Vector3::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.3..1.3), rng.gen_range(0.6..1.2));
    Pose::from_ypr(
        t,
        rng.gen_range(-3.1..3.1),
        rng.gen_range(-3f64..3.0).to_radians(),
        rng.gen_range(-3f64..3.0).to_radians(),
    )
}

fn resolution_consistency(scene: &SceneModel, cfg: &FilterConfig) -> Outcome {
    let start = Instant::now();
    let hi = FilterConfig::default().k_plus;
    let lo = cfg.k_minus;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut sum = 0.0;
    for _ in 0..50 {
        let p = random_view(&mut rng);
        let a = render(scene, &p, &lo, None).unwrap();
        let b = resample_area(&render(scene, &p, &hi, None).unwrap(), &hi, &lo).unwrap();
        let mad = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>()
            / a.data().len() as f64;
        worst = worst.max(mad);
        sum += mad;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 2,
        name: "resolution consistency",
        passed: worst < 0.1 && secs < 30.0,
        detail: format!(
            "{}x{} vs {}x{}: mean abs diff mean {:.4}, worst {worst:.4}, {secs:.1} s",
            lo.width, lo.height, hi.width, hi.height, sum / 50.0
        ),
    }
}

fn retrieval_calibration(scene: &SceneModel, cfg: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::anchors_504();
    let db = build_anchor_db(scene, &grid, &cfg.anchor_intrinsics, cfg.filter.artifacts.as_ref()).unwrap();
    let (sx, sy) = grid.spacing();
    let limit = 1.5 * sx.max(sy);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0;
    for _ in 0..50 {
        // off-grid but on the anchor surface: level, at anchor height
        let t = Vector3::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.3..1.3), grid.height);
        let p = Pose::from_ypr(t, rng.gen_range(-PI..PI), 0.0, 0.0);
        let img = render(scene, &p, &cfg.anchor_intrinsics, None).unwrap();
        let r = db.retrieve_top_m(&encode(&img).unwrap(), 1).unwrap();
        let d = (r.hits[0].pose.translation - p.translation).xy().norm();
        hits += (d <= limit) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 3,
        name: "retrieval calibration",
        passed: hits >= 40 && secs < 60.0,
        detail: format!("{hits}/50 nearest anchors within {limit:.2} m, {secs:.1} s"),
    }
}

fn nudging_guarantee(scene: &SceneModel, cfg: &ExperimentConfig, dbs: &DatabaseSet) -> Outcome {
    let inputs = make_inputs(cfg.trial_seed(0), TrialKind::Global, &cfg.inputs, &cfg.filter.k_plus, scene).unwrap();
    let db = dbs.dense.as_ref().unwrap();
    let filter = Filter::new(cfg.filter.clone(), scene, Some(db)).unwrap();
    let mut rng = stream_rng(inputs.seed, 3);
    let mut set = filter.init_global(&mut rng);
    let (mut frames, mut violations, mut accepted, mut global) = (0, 0, 0, 0);
    for f in 0..inputs.frames() {
        let obs = inputs.observation(scene, f).unwrap();
        let odom = if f == 0 { Pose::identity() } else { inputs.odometry[f - 1] };
        let mode = set.mode;
        let n = set.len() as f64;
        let out = filter.step(&mut set, &obs, &inputs.camera, &odom, &mut rng).unwrap();
        let r = out.nudge.expect("nudging ran");
        frames += 1;
        global += (mode == Mode::Global) as usize;
        let pre = r.pre_mean_weight;
        let acc: Vec<f64> = r.accepted().map(|c| c.weight).collect();
        violations += acc.iter().filter(|w| !(**w > pre)).count();
        // recompute the Ξ⁺ mean from the candidates
        let post = (pre * n + acc.iter().sum::<f64>()) / (n + acc.len() as f64);
        if mode == Mode::Global {
            accepted += acc.len();
            if !(post >= pre) || (post - r.post_mean_weight).abs() > 1e-12 * post.abs().max(1e-300) {
                violations += 1;
            }
        }
    }
    Outcome {
        id: 4,
        name: "nudging guarantee",
        passed: violations == 0 && frames == inputs.frames(),
        detail: format!("{frames} frames ({global} global), {accepted} accepted anchors, {violations} violations"),
    }
}

fn global_criteria(res: &SuiteResult) -> Vec<Outcome> {
    let agg = |v| res.aggregate(v).unwrap();
    let (nu, bp, at) = (agg(Variant::Nudged), agg(Variant::Bootstrap), agg(Variant::Attenuated));
    let (nf, bf, af) = (nu.final_error.unwrap(), bp.final_error.unwrap(), at.final_error.unwrap());
    let ratio = nu.median_convergence_frame / bp.median_convergence_frame;
    let hz = |a: &nudgeloc::harness::VariantAggregate| a.timing.unwrap().mean_step_hz;
    vec![
        Outcome {
            id: 5,
            name: "global localization",
            passed: nf.median < 0.6 && nf.median < bf.median && nf.iqr() <= bf.iqr(),
            detail: format!(
                "median final error nudged {:.3} m vs bootstrap {:.3} m; IQR {:.3} vs {:.3}; converged {}/{} vs {}/{}",
                nf.median,
                bf.median,
                nf.iqr(),
                bf.iqr(),
                nu.converged,
                nu.trials,
                bp.converged,
                bp.trials
            ),
        },
        Outcome {
            id: 6,
            name: "convergence speed",
            passed: ratio <= 0.5,
            detail: format!(
                "median convergence frame nudged {} vs bootstrap {} (ratio {ratio:.2})",
                nu.median_convergence_frame, bp.median_convergence_frame
            ),
        },
        Outcome {
            id: 8,
            name: "anchor ablation",
            passed: nf.median <= af.median && af.median <= bf.median && hz(bp) >= hz(at) && hz(at) >= hz(nu),
            detail: format!(
                "median final error 2502 {:.3} / 504 {:.3} / bootstrap {:.3} m; step rate bootstrap {:.3} / 504 {:.3} / 2502 {:.3} Hz",
                nf.median,
                af.median,
                bf.median,
                hz(bp),
                hz(at),
                hz(nu)
            ),
        },
    ]
}

fn tracking_criterion(res: &SuiteResult) -> Outcome {
    let nu = res.aggregate(Variant::Nudged).unwrap();
    let bp = res.aggregate(Variant::Bootstrap).unwrap();
    let e = nu.mean_position_error.unwrap();
    let (ny, by) = (nu.mean_ypr_error_deg.unwrap()[0], bp.mean_ypr_error_deg.unwrap()[0]);
    Outcome {
        id: 7,
        name: "tracking",
        passed: e < 0.3 && ny < by,
        detail: format!(
            "nudged mean error {e:.3} m (bootstrap {:.3} m); mean yaw error nudged {ny:.2} deg vs bootstrap {by:.2} deg",
            bp.mean_position_error.unwrap()
        ),
    }
}

fn kidnap_criterion(res: &SuiteResult) -> Outcome {
    let k = res.aggregate(Variant::Nudged).unwrap().kidnap.clone().unwrap();
    let need = (res.config.trials * 4).div_ceil(5);
    let delays: Vec<String> = k
        .outcomes
        .iter()
        .map(|o| {
            format!(
                "{}/{}",
                o.detection_delay.map_or("-".into(), |d| d.to_string()),
                o.recovery_delay.map_or("-".into(), |d| d.to_string())
            )
        })
        .collect();
    Outcome {
        id: 9,
        name: "kidnap recovery",
        passed: k.successes >= need,
        detail: format!(
            "{}/{} recovered (need {need}); detection/recovery delays {}",
            k.successes,
            res.config.trials,
            delays.join(" ")
        ),
    }
}

fn determinism(scene: &SceneModel, cfg: &ExperimentConfig, dbs: &DatabaseSet, res: &SuiteResult) -> Outcome {
    let trial = 3.min(cfg.trials - 1);
    let (_, again) = run_suite_trial(cfg, scene, dbs, trial).unwrap();
    let mut same = 0;
    for rep in &again {
        let orig = res.reports.iter().find(|r| r.trial == trial && r.variant == rep.variant).unwrap();
        let on_disk = std::fs::read_to_string(
            out_dir("global").join(format!("frames/{}_trial{trial:03}.jsonl", rep.variant.name())),
        )
        .unwrap();
        same += (orig.frames_jsonl() == rep.frames_jsonl() && on_disk == rep.frames_jsonl()) as usize;
    }
    Outcome {
        id: 10,
        name: "determinism",
        passed: same == again.len(),
        detail: format!("trial {trial} rerun: {same}/{} frames.jsonl byte-identical", again.len()),
    }
}

fn report(o: &Outcome) {
    println!(
        "criterion {:>2} {:<24} {}  {}",
        o.id,
        o.name,
        if o.passed { "PASS" } else { "FAIL" },
        o.detail
    );
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    let mut run = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };

    let global = base_config("global", TrialKind::Global);
    let scene = global.scene();
    run(geometry_suite());
    run(resolution_consistency(&scene, &global.filter));
    run(retrieval_calibration(&scene, &global));

    let dbs = DatabaseSet::for_config(&global, &scene).unwrap();
    run(nudging_guarantee(&scene, &global, &dbs));

    let start = Instant::now();
    let g = run_experiment_suite(&global, Some(&dbs)).unwrap();
    write_outputs(&g, &out_dir("global")).unwrap();
    println!("global suite: {:.0} s", start.elapsed().as_secs_f64());
    for o in global_criteria(&g) {
        run(o);
    }

    let mut tracking = base_config("tracking", TrialKind::Tracking);
    tracking.inputs.trajectory.frames = 40;
    tracking.variants = vec![Variant::Nudged, Variant::Bootstrap];
    let start = Instant::now();
    let t = run_experiment_suite(&tracking, Some(&dbs)).unwrap();
    write_outputs(&t, &out_dir("tracking")).unwrap();
    println!("tracking suite: {:.0} s", start.elapsed().as_secs_f64());
    run(tracking_criterion(&t));

    let mut kidnap = base_config("kidnap", TrialKind::Kidnap);
    kidnap.variants = vec![Variant::Nudged];
    let start = Instant::now();
    let k = run_experiment_suite(&kidnap, Some(&dbs)).unwrap();
    write_outputs(&k, &out_dir("kidnap")).unwrap();
    println!("kidnap suite: {:.0} s", start.elapsed().as_secs_f64());
    run(kidnap_criterion(&k));

    run(determinism(&scene, &global, &dbs, &g));

    outcomes.sort_by_key(|o| o.id);
    println!("\nacceptance summary");
    for o in &outcomes {
        report(o);
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
