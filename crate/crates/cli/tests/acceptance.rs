//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::Vector3;
use radcal::correspondence::{associate, block_sample, MatcherConfig};
use radcal::metrics::evaluate;
use radcal::solver::{calibrate, dlt_pose, jacobian, lm_refine, residuals, LmConfig, RansacConfig};
use radcal::synth::{displace_radar_point, generate, pose_error, SceneConfig, SyntheticDataset};
use radcal::{
    mare, project, rmsre, CameraIntrinsics, Correspondence, Error, ExtrinsicPose, PixelPoint,
    RadarPoint,
};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn k() -> CameraIntrinsics {
    CameraIntrinsics::new(1000.0, 1000.0, 640.0, 360.0).unwrap()
}

fn id_matched(ds: &SyntheticDataset, cfg: &SceneConfig) -> Vec<Correspondence> {
    associate(
        &ds.camera_detections,
        &ds.radar_detections,
        &cfg.intrinsics,
        &MatcherConfig::id_oracle(),
    )
    .unwrap()
}

fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_trans: f64) -> ExtrinsicPose {
    let mut p = [0.0; 6];
    for (i, v) in p.iter_mut().enumerate() {
        let bound = if i < 3 { max_angle } else { max_trans };
        *v = rng.random_range(-bound..bound);
    }
    ExtrinsicPose::from_params(&p).unwrap()
}

/// Points spread over the view frustum at depths in `[2, 30]` m, expressed in
/// the radar frame of `pose`.
fn frustum_points(rng: &mut ChaCha8Rng, pose: &ExtrinsicPose, n: usize) -> Vec<RadarPoint> {
    (0..n)
        .map(|_| {
            let z = rng.random_range(2.0..30.0);
            let c = Vector3::new(
                rng.random_range(-0.6..0.6) * z,
                rng.random_range(-0.35..0.35) * z,
                z,
            );
            pose.inverse_transform(&c)
        })
        .collect()
}

fn exact_corrs(pose: &ExtrinsicPose, points: &[RadarPoint]) -> Vec<Correspondence> {
    points
        .iter()
        .map(|p| Correspondence::new(project(&k(), pose, p).unwrap().0, *p, 0))
        .collect()
}

fn closed_loop() -> Outcome {
    let start = Instant::now();
    let cfg = SceneConfig {
        n_frames: 600,
        ..SceneConfig::two_targets(11)
    };
    let ds = generate(&cfg).map_err(|e| e.to_string())?;
    let corrs = block_sample(
        &id_matched(&ds, &cfg),
        cfg.image_width,
        cfg.image_height,
        20,
        2,
    )
    .map_err(|e| e.to_string())?;
    let est = calibrate(
        &corrs,
        &cfg.intrinsics,
        &RansacConfig::default(),
        &LmConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let report = evaluate(&est.pose, &cfg.intrinsics, &corrs, 20.0).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let (rot, trans) = pose_error(&est.pose, &cfg.true_pose);
    let detail = format!(
        "n={} rot={rot:.2e} rad trans={trans:.2e} m rmsre_all={:.2e} px time={elapsed:.2}s",
        corrs.len(),
        report.rmsre_all
    );
    ensure(
        rot < 1e-5 && trans < 1e-5 && report.rmsre_all < 1e-6 && elapsed < 5.0,
        || detail.clone(),
    )?;
    Ok(detail)
}

/// 24 spread-out block-sampled correspondences with σ = 6 px pixel noise,
/// three of them displaced by at least 500 px.
fn robustness_trial(seed: u64) -> Result<(), String> {
    let mut cfg = SceneConfig::two_targets(1000 + seed);
    cfg.pixel_noise_sigma = 6.0;
    let ds = generate(&cfg).unwrap();
    let pool = block_sample(
        &id_matched(&ds, &cfg),
        cfg.image_width,
        cfg.image_height,
        20,
        2,
    )
    .unwrap();
    ensure(pool.len() >= 24, || format!("pool of {}", pool.len()))?;
    let mut corrs: Vec<Correspondence> = (0..24).map(|i| pool[i * pool.len() / 24]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outliers = sample(&mut rng, 24, 3).into_vec();
    for &i in &outliers {
        let offset = 500.0 * (1.0 + 0.5 * rng.random::<f64>());
        let angle = rng.random_range(0.0..TAU);
        let c = &mut corrs[i];
        c.radar = displace_radar_point(
            &cfg.intrinsics,
            &cfg.true_pose,
            &c.radar,
            &c.pixel,
            offset,
            angle,
        );
        // independent check that the injection really is gross
        let d = project(&cfg.intrinsics, &cfg.true_pose, &c.radar)
            .unwrap()
            .0
            .distance(&c.pixel);
        ensure(d >= 500.0 - 1e-6, || format!("injected offset {d}"))?;
    }

    let est = calibrate(
        &corrs,
        &cfg.intrinsics,
        &RansacConfig::with_seed(seed),
        &LmConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let r = evaluate(&est.pose, &cfg.intrinsics, &corrs, 20.0).unwrap();
    let excluded = outliers
        .iter()
        .all(|&i| !r.per_point[i].is_inlier && !est.inlier_mask[i]);
    ensure(
        r.n_all == 24 && (19..=22).contains(&r.n_inliers) && excluded && r.rmsre_inliers < 20.0,
        || {
            format!(
                "n_all={} n_inliers={} outliers_excluded={excluded} rmsre_inliers={:.2}",
                r.n_all, r.n_inliers, r.rmsre_inliers
            )
        },
    )
}

fn robustness() -> Outcome {
    let trials = 100;
    let mut failures = Vec::new();
    for seed in 0..trials {
        if let Err(e) = robustness_trial(seed) {
            failures.push(format!("seed {seed}: {e}"));
        }
    }
    let passed = trials - failures.len() as u64;
    let detail = format!("{passed}/{trials} seeds pass");
    ensure(passed * 100 >= 95 * trials, || {
        format!(
            "{detail}; first: {}",
            failures.first().cloned().unwrap_or_default()
        )
    })?;
    Ok(detail)
}

fn noise_consistency() -> Outcome {
    let mut values = Vec::new();
    for seed in 0..20 {
        let mut cfg = SceneConfig::two_targets(2000 + seed);
        cfg.pixel_noise_sigma = 2.0;
        let ds = generate(&cfg).unwrap();
        let all = id_matched(&ds, &cfg);
        let corrs: Vec<_> = all
            .iter()
            .step_by(all.len() / 100)
            .take(100)
            .copied()
            .collect();
        let est = calibrate(
            &corrs,
            &cfg.intrinsics,
            &RansacConfig::with_seed(seed),
            &LmConfig::default(),
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let r = evaluate(&est.pose, &cfg.intrinsics, &corrs, 20.0).unwrap();
        ensure((1.2..=2.8).contains(&r.rmsre_inliers), || {
            format!("seed {seed}: rmsre_inliers={:.3}", r.rmsre_inliers)
        })?;
        values.push(r.rmsre_inliers);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(format!(
        "rmsre_inliers in [{lo:.3}, {hi:.3}], mean {mean:.3} (expected ≈ {:.3})",
        2.0 * (1.0f64 - 6.0 / 200.0).sqrt()
    ))
}

fn jacobian_fd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pose = random_pose(&mut rng, PI * 0.9 / 3f64.sqrt(), 1.0);
        let corrs = exact_corrs(&pose, &frustum_points(&mut rng, &pose, 10));
        let params = pose.to_params();
        let jac = jacobian(&params, &k(), &corrs).unwrap();
        for j in 0..6 {
            let eval = |delta: f64| {
                let mut p = params;
                p[j] += delta;
                residuals(&ExtrinsicPose::from_params(&p).unwrap(), &k(), &corrs)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = jac.column(j);
            let scale = fd.amax().max(1.0);
            worst = worst.max((analytic - &fd).amax() / scale);
        }
    }
    let detail = format!("max relative error {worst:.2e} over 100 configurations");
    ensure(worst < 1e-4, || detail.clone())?;
    Ok(detail)
}

fn dlt_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let pose = random_pose(&mut rng, PI * 0.9 / 3f64.sqrt(), 2.0);
        let corrs = exact_corrs(&pose, &frustum_points(&mut rng, &pose, 8));
        let est = dlt_pose(&corrs, &k()).map_err(|e| format!("instance {i}: {e}"))?;
        let (rot, trans) = pose_error(&est, &pose);
        worst = worst.max(rot).max(trans);
    }
    ensure(worst < 1e-6, || format!("worst pose error {worst:.2e}"))?;

    let mut rejected = 0;
    for _ in 0..100 {
        let pose = random_pose(&mut rng, 0.5, 1.0);
        let a = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            8.0,
        );
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            1.0,
        );
        let points: Vec<RadarPoint> = (0..8)
            .map(|t| pose.inverse_transform(&(a + dir * t as f64)))
            .collect();
        if matches!(
            dlt_pose(&exact_corrs(&pose, &points), &k()),
            Err(Error::DegenerateConfiguration(_))
        ) {
            rejected += 1;
        }
    }
    let detail = format!(
        "worst pose error {worst:.2e} on 1000 instances; {rejected}/100 collinear rejected"
    );
    ensure(rejected == 100, || detail.clone())?;
    Ok(detail)
}

fn lm_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    for i in 0..100 {
        let truth = random_pose(&mut rng, 0.5, 1.0);
        let mut corrs = exact_corrs(&truth, &frustum_points(&mut rng, &truth, 40));
        for c in &mut corrs {
            c.pixel.u += rng.random_range(-3.0..3.0);
            c.pixel.v += rng.random_range(-3.0..3.0);
        }
        let start = truth.then(&random_pose(&mut rng, 0.05, 0.3));
        let est = match lm_refine(&start, &k(), &corrs, &LmConfig::default()) {
            Ok(e) => e,
            // a start with points behind the camera is a legitimate refusal
            Err(Error::InvalidInitialization { .. }) => continue,
            Err(e) => return Err(format!("start {i}: {e}")),
        };
        let h = &est.cost_history;
        ensure(h.windows(2).all(|w| w[1] <= w[0]), || {
            format!("start {i}: cost rose")
        })?;
        ensure(est.final_cost <= h[0], || {
            format!("start {i}: final above initial")
        })?;
        checked += 1;
    }
    let detail = format!("{checked}/100 starts refined, all non-increasing");
    ensure(checked >= 90, || detail.clone())?;
    Ok(detail)
}

fn metric_identities() -> Outcome {
    let identity = ExtrinsicPose::identity();
    let at = |du: f64, dv: f64| {
        Correspondence::new(
            PixelPoint::new(640.0 + du, 360.0 + dv),
            RadarPoint::new(0.0, 0.0, 5.0),
            0,
        )
    };
    let pair = [at(3.0, 0.0), at(0.0, 4.0)];
    let r = rmsre(&identity, &k(), &pair).unwrap();
    ensure(r == 12.5f64.sqrt(), || format!("rmsre {{3,4}} = {r}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for set in 0..1000 {
        let n = rng.random_range(1..40);
        let corrs: Vec<_> = (0..n)
            .map(|_| at(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
            .collect();
        let (rms, mean) = (
            rmsre(&identity, &k(), &corrs).unwrap(),
            mare(&identity, &k(), &corrs).unwrap(),
        );
        ensure(rms >= mean, || {
            format!("set {set}: rmsre {rms} < mare {mean}")
        })?;

        let threshold = rng.random_range(0.0..60.0);
        let report = evaluate(&identity, &k(), &corrs, threshold).unwrap();
        let inliers: Vec<_> = corrs
            .iter()
            .zip(&report.per_point)
            .filter(|(_, p)| p.is_inlier)
            .map(|(c, _)| *c)
            .collect();
        ensure(report.n_inliers == inliers.len(), || {
            format!("set {set}: count")
        })?;
        if !inliers.is_empty() {
            let sub_rms = rmsre(&identity, &k(), &inliers).unwrap();
            let sub_mean = mare(&identity, &k(), &inliers).unwrap();
            ensure(
                (sub_rms - report.rmsre_inliers).abs() < 1e-9
                    && (sub_mean - report.mare_inliers).abs() < 1e-9,
                || format!("set {set}: inlier metrics disagree with subset"),
            )?;
        }
    }
    Ok("rmsre{3,4} = √12.5 exactly; 1000 sets consistent".into())
}

/// Brute-force sampler: enumerate selected cells and keep the point nearest
/// each cell center (ties: frame, u, v).
fn sampler_oracle(
    corrs: &[Correspondence],
    w: u32,
    h: u32,
    block: u32,
    stride: u32,
) -> Vec<Correspondence> {
    let b = block as f64;
    let mut best: HashMap<(u64, u64), Correspondence> = HashMap::new();
    for c in corrs {
        let (u, v) = (c.pixel.u, c.pixel.v);
        if !(u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64) {
            continue;
        }
        let cell = ((u / b).floor() as u64, (v / b).floor() as u64);
        if !cell.0.is_multiple_of(stride as u64) || !cell.1.is_multiple_of(stride as u64) {
            continue;
        }
        let center = PixelPoint::new((cell.0 as f64 + 0.5) * b, (cell.1 as f64 + 0.5) * b);
        let key =
            |c: &Correspondence| (c.pixel.distance(&center), c.frame_id, c.pixel.u, c.pixel.v);
        best.entry(cell)
            .and_modify(|cur| {
                if key(c).partial_cmp(&key(cur)) == Some(std::cmp::Ordering::Less) {
                    *cur = *c;
                }
            })
            .or_insert(*c);
    }
    let mut out: Vec<_> = best.into_values().collect();
    out.sort_by(|a, b| {
        (a.frame_id, a.pixel.u, a.pixel.v)
            .partial_cmp(&(b.frame_id, b.pixel.u, b.pixel.v))
            .unwrap()
    });
    out
}

fn block_sampler() -> Outcome {
    let px = |u: f64, v: f64| {
        Correspondence::new(PixelPoint::new(u, v), RadarPoint::new(0.0, 1.0, 0.0), 0)
    };
    let worked = block_sample(
        &[px(5.0, 5.0), px(10.0, 12.0), px(45.0, 48.0)],
        100,
        100,
        20,
        2,
    )
    .unwrap();
    let got: Vec<_> = worked.iter().map(|c| (c.pixel.u, c.pixel.v)).collect();
    ensure(got == [(10.0, 12.0), (45.0, 48.0)], || {
        format!("worked example gave {got:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for set in 0..10_000 {
        let (w, h) = (rng.random_range(1..400), rng.random_range(1..300));
        let block = rng.random_range(1..60);
        let stride = rng.random_range(1..4);
        let n = rng.random_range(0..80);
        let corrs: Vec<Correspondence> = (0..n)
            .map(|_| {
                // a few points fall outside the image or on coarse lattice ties
                let u = if rng.random_bool(0.3) {
                    rng.random_range(0..w + 20) as f64 - 10.0
                } else {
                    rng.random_range(0.0..w as f64)
                };
                let v = rng.random_range(-5.0..h as f64 + 5.0);
                let mut c = px(u, v);
                c.frame_id = rng.random_range(0..5);
                c
            })
            .collect();
        let out = block_sample(&corrs, w, h, block, stride).map_err(|e| e.to_string())?;
        let fail =
            |what: &str| format!("set {set} ({w}x{h}, block {block}, stride {stride}): {what}");
        ensure(out.iter().all(|c| corrs.contains(c)), || fail("membership"))?;
        let mut cells: Vec<_> = out
            .iter()
            .map(|c| {
                (
                    (c.pixel.u / block as f64) as u32,
                    (c.pixel.v / block as f64) as u32,
                )
            })
            .collect();
        ensure(
            cells
                .iter()
                .all(|(x, y)| x % stride == 0 && y % stride == 0),
            || fail("unselected cell"),
        )?;
        cells.sort_unstable();
        cells.dedup();
        ensure(cells.len() == out.len(), || fail("two points in one cell"))?;
        ensure(
            block_sample(&out, w, h, block, stride).unwrap() == out,
            || fail("idempotence"),
        )?;
        ensure(out == sampler_oracle(&corrs, w, h, block, stride), || {
            fail("differs from brute force")
        })?;
    }
    Ok("worked example exact; 10000 random sets agree with brute force".into())
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_radcal");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_targets.json");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let status = Command::new(bin)
        .arg("synth")
        .arg(&config)
        .arg(&data)
        .output()
        .unwrap();
    ensure(status.status.success(), || "synth failed".into())?;

    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let res = Command::new(bin)
            .env("RAYON_NUM_THREADS", threads)
            .arg("calibrate")
            .arg(data.join("camera.csv"))
            .arg(data.join("radar.csv"))
            .arg(data.join("intrinsics.json"))
            .arg("--out-dir")
            .arg(&out)
            .args(["--seed", "17", "--timestamp", "2026-01-01T00:00:00Z"])
            .output()
            .unwrap();
        (res.status.success(), out)
    };
    let runs = [run("a", "4"), run("b", "4"), run("c", "1")];
    ensure(runs.iter().all(|(ok, _)| *ok), || "calibrate failed".into())?;
    for file in ["calibration.json", "report.json", "overlay.csv"] {
        let first = fs::read(runs[0].1.join(file)).unwrap();
        for (_, dir) in &runs[1..] {
            ensure(fs::read(dir.join(file)).unwrap() == first, || {
                format!("{file} differs")
            })?;
        }
    }
    Ok(
        "calibration.json, report.json, overlay.csv byte-identical (repeat and 1 vs 4 threads)"
            .into(),
    )
}

fn unit_fidelity() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let cases = [
        (
            ExtrinsicPose::identity(),
            [0.0, 0.0, 5.0],
            (640.0, 360.0, 5.0),
        ),
        (
            ExtrinsicPose::identity(),
            [1.0, 0.5, 5.0],
            (840.0, 460.0, 5.0),
        ),
        (
            ExtrinsicPose::from_params(&[0.0, 0.0, 0.0, 0.0, 0.0, 2.0]).unwrap(),
            [1.0, 0.0, 2.0],
            (890.0, 360.0, 4.0),
        ),
    ];
    for (pose, [x, y, z], (u, v, s)) in cases {
        let (px, depth) = project(&k(), &pose, &RadarPoint::new(x, y, z)).unwrap();
        ensure(close(px.u, u) && close(px.v, v) && close(depth, s), || {
            format!("({x},{y},{z}) → ({}, {}, {depth})", px.u, px.v)
        })?;
    }
    let identity = ExtrinsicPose::identity();
    let p = RadarPoint::new(0.0, 0.0, 5.0);
    let single = [Correspondence::new(PixelPoint::new(643.0, 364.0), p, 0)];
    let pair = [
        Correspondence::new(PixelPoint::new(643.0, 360.0), p, 0),
        Correspondence::new(PixelPoint::new(640.0, 364.0), p, 0),
    ];
    let (a, b) = (
        rmsre(&identity, &k(), &single).unwrap(),
        rmsre(&identity, &k(), &pair).unwrap(),
    );
    ensure(close(a, 5.0) && close(b, 12.5f64.sqrt()), || {
        format!("rmsre {a}, {b}")
    })?;
    Ok("3 projection and 2 RMSRE examples within 1e-9".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("noiseless closed loop", closed_loop),
        ("robustness to gross outliers", robustness),
        ("noise consistency", noise_consistency),
        ("jacobian vs finite differences", jacobian_fd),
        ("DLT oracle", dlt_oracle),
        ("LM monotonicity", lm_monotone),
        ("metric identities", metric_identities),
        ("block sampler", block_sampler),
        ("calibrate determinism", determinism),
        ("projection and RMSRE examples", unit_fidelity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(check).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or("panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
