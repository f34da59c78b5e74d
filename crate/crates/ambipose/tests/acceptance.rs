//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed in order. The
//! process fails on any unexpected result, including a listed known failure
//! that starts passing.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ambipose::config::RunConfig;
use ambipose::runner::run_pipeline;
use ambipose_core::ambiguity::*;
use ambipose_core::graph::*;
use ambipose_core::liegroups::{Pose, Rotation, Twist};
use ambipose_core::metrics::*;
use ambipose_core::object_model::*;
use ambipose_core::pipeline::*;
use ambipose_core::pose_init::*;
use ambipose_core::sim::*;
use nalgebra::{Matrix6, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that do not meet their target in this implementation. Each
/// entry still runs and prints FAIL.
const KNOWN_FAILING: &[u32] = &[10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller keeps the oracle independent of the simulator's sampler
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn unit3(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

fn random_pose(rng: &mut impl Rng, trans: f64, rot: f64) -> Pose {
    let mut v = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Pose::exp(&Twist::new(v() * trans, v() * rot))
}

fn rotation_angle(a: &Pose, b: &Pose) -> f64 {
    let r = a.rotation.matrix().transpose() * b.rotation.matrix();
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

fn pinhole(k: &CameraIntrinsics, pose: &Pose, p: &Vector3<f64>) -> Vector2<f64> {
    let m = pose.matrix();
    let c = m.fixed_view::<3, 3>(0, 0) * p + m.fixed_view::<3, 1>(0, 3);
    Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy)
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut c, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        c += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma).powi(2);
        vb += (rb[i] - mb).powi(2);
    }
    c / (va * vb).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Run {
    config: ScenarioConfig,
    scenario: Scenario,
    models: Vec<ObjectModel>,
    result: ScenarioResult,
}

fn run_scenario(config: ScenarioConfig) -> Run {
    let scenario = generate(&config).unwrap();
    let models: Vec<ObjectModel> = config.objects.iter().map(|o| o.model.clone()).collect();
    let result = run(&scenario.frames, &models, &config.intrinsics, &PipelineConfig::default()).unwrap();
    Run {
        config,
        scenario,
        models,
        result,
    }
}

// ---------------------------------------------------------------- 1

/// Batch-mean form of the selection rule.
fn brute_select(preds: &[AxisPrediction; 3], layout: &PrimitiveLayout, sigma_o: f64) -> Result<Option<MergedKeypoints>, ()> {
    if !(sigma_o >= 0.0) || preds.iter().any(|p| !(p.sigma >= 0.0)) {
        return Err(());
    }
    let valid: Vec<&AxisPrediction> = preds.iter().filter(|p| p.sigma <= sigma_o).collect();
    if valid.is_empty() {
        return Ok(None);
    }
    let n = valid.len() as f64;
    let mut points: Vec<Vector2<f64>> = (0..WHITE_KEYPOINTS)
        .map(|j| valid.iter().map(|p| p.keypoints[j]).sum::<Vector2<f64>>() / n)
        .collect();
    let mut corr: Vec<Vector3<f64>> = layout.white.to_vec();
    for p in &valid {
        points.extend_from_slice(&p.keypoints[WHITE_KEYPOINTS..]);
        corr.extend_from_slice(&layout.colored[p.axis.index()]);
    }
    let sigmas: Vec<f64> = valid.iter().map(|p| p.sigma).collect();
    Ok(Some(MergedKeypoints {
        points,
        correspondences: corr,
        valid_axes: valid.iter().map(|p| p.axis).collect(),
        sigma_norm: sigmas.iter().map(|s| s * s).sum::<f64>().sqrt(),
        valid_sigmas: sigmas,
    }))
}

fn c1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for case in 0..10_000 {
        let layout = make_primitive_layout(rng.random_range(0.01..0.2)).unwrap();
        let sigma_o = match case % 50 {
            0 => -rng.random_range(0.0..1.0),
            1 => 0.0,
            _ => rng.random_range(0.0..1.0),
        };
        let preds: [AxisPrediction; 3] = core::array::from_fn(|i| {
            let sigma = match rng.random_range(0..20) {
                0 => sigma_o,
                1 => -0.1,
                _ => rng.random_range(0.0..1.0),
            };
            AxisPrediction {
                axis: Axis::ALL[i],
                keypoints: core::array::from_fn(|_| Vector2::new(rng.random_range(-50.0..700.0), rng.random_range(-50.0..500.0))),
                sigma,
            }
        });
        let got = select_and_merge(&preds, &layout, sigma_o);
        let want = brute_select(&preds, &layout, sigma_o);
        let ok = match (&got, &want) {
            (Err(_), Err(())) => true,
            (Ok(None), Ok(None)) => {
                failures += 1;
                true
            }
            (Ok(Some(g)), Ok(Some(w))) => {
                let white = (0..WHITE_KEYPOINTS).map(|j| (g.points[j] - w.points[j]).amax()).fold(0.0, f64::max);
                worst = worst.max(white);
                white <= 1e-12
                    && g.points[WHITE_KEYPOINTS..] == w.points[WHITE_KEYPOINTS..]
                    && g.correspondences == w.correspondences
                    && g.valid_axes == w.valid_axes
                    && g.valid_sigmas == w.valid_sigmas
                    && (g.sigma_norm - w.sigma_norm).abs() <= 1e-15
            }
            _ => false,
        };
        if !ok {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("10000 inputs, {mismatches} mismatches, {failures} all-rejected, max white diff {worst:.1e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 2

fn nll_oracle(errors: &[Vector2<f64>], xi: f64) -> f64 {
    errors.iter().map(|e| 2.0 * xi + (e.x * e.x + e.y * e.y) / xi.exp()).sum()
}

fn c2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_grad: f64 = 0.0;
    let mut worst_value: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let scale = 10f64.powf(rng.random_range(-2.0..3.0));
        let errors: Vec<Vector2<f64>> = (0..n).map(|_| Vector2::new(normal(&mut rng), normal(&mut rng)) * scale).collect();
        let xi = rng.random_range(-6.0..12.0);
        let s = nll_loss(&errors, xi);
        let h = 1e-5;
        let fd = (nll_oracle(&errors, xi + h) - nll_oracle(&errors, xi - h)) / (2.0 * h);
        worst_grad = worst_grad.max((s.gradient - fd).abs() / s.gradient.abs().max(1.0));
        let v = nll_oracle(&errors, xi);
        worst_value = worst_value.max((s.value - v).abs() / v.abs().max(1.0));
    }
    let mut worst_xi: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..40);
        let scale = 10f64.powf(rng.random_range(-2.0..3.0));
        let errors: Vec<Vector2<f64>> = (0..n).map(|_| Vector2::new(normal(&mut rng), normal(&mut rng)) * scale).collect();
        let mut best = (f64::INFINITY, 0.0);
        let mut i = 0;
        loop {
            let xi = -12.0 + 1e-4 * i as f64;
            if xi > 16.0 {
                break;
            }
            let v = nll_oracle(&errors, xi);
            if v < best.0 {
                best = (v, xi);
            }
            i += 1;
        }
        worst_xi = worst_xi.max((optimal_xi(&errors).unwrap() - best.1).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_grad < 1e-6 && worst_value < 1e-12 && worst_xi < 2e-4 && secs < 10.0,
        format!("gradient rel err {worst_grad:.1e} (1000 pts), value rel err {worst_value:.1e}, |xi* - grid| {worst_xi:.1e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 3

fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let k = default_intrinsics();
    let mut worst = (0.0f64, 0.0f64);
    let mut exact_failures = 0;
    for _ in 0..500 {
        let layout = make_primitive_layout(rng.random_range(0.03..0.1)).unwrap();
        let model: Vec<Vector3<f64>> = layout.white.iter().chain(layout.colored.iter().flatten()).copied().collect();
        let depth = rng.random_range(0.4..2.0);
        let t = Vector3::new(rng.random_range(-0.15..0.15) * depth, rng.random_range(-0.1..0.1) * depth, depth);
        let gt = Pose::new(Rotation::exp(&(unit3(&mut rng) * rng.random_range(0.0..3.1))), t);
        let image: Vec<Vector2<f64>> = model.iter().map(|p| pinhole(&k, &gt, p)).collect();
        match solve_pnp_points(&k, &image, &model, 0.1) {
            Ok(p) => {
                worst.0 = worst.0.max((p.pose.translation - gt.translation).norm());
                worst.1 = worst.1.max(rotation_angle(&p.pose, &gt));
            }
            Err(_) => exact_failures += 1,
        }
    }
    let mut rot = Vec::new();
    let mut trans = Vec::new();
    let layout = make_primitive_layout(0.06).unwrap();
    let model: Vec<Vector3<f64>> = layout.white.iter().chain(layout.colored.iter().flatten()).copied().collect();
    for _ in 0..500 {
        let gt = Pose::new(
            Rotation::exp(&(unit3(&mut rng) * rng.random_range(0.0..3.1))),
            Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 1.0),
        );
        let image: Vec<Vector2<f64>> = model
            .iter()
            .map(|p| pinhole(&k, &gt, p) + Vector2::new(normal(&mut rng), normal(&mut rng)) * 0.5)
            .collect();
        let p = match solve_pnp_points(&k, &image, &model, 0.1) {
            Ok(p) => p,
            Err(PoseInitError::NoConvergence { best }) => best,
            Err(_) => {
                rot.push(f64::INFINITY);
                trans.push(f64::INFINITY);
                continue;
            }
        };
        rot.push(rotation_angle(&p.pose, &gt).to_degrees());
        trans.push((p.pose.translation - gt.translation).norm());
    }
    let (mr, mt) = (median(rot), median(trans));
    outcome(
        exact_failures == 0 && worst.0 < 1e-6 && worst.1 < 1e-6 && mr < 1.0 && mt < 0.01,
        format!(
            "noiseless max err {:.1e} m / {:.1e} rad over 500 poses; 0.5 px at 1 m: median {mr:.3} deg, {:.2} mm",
            worst.0,
            worst.1,
            mt * 1000.0
        ),
    )
}

// ---------------------------------------------------------------- 4

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let objects = demo_objects().unwrap();
    let cylinder = objects.iter().find(|o| matches!(o.model.symmetry.kind, SymmetryKind::Continuous { .. })).unwrap();
    let axis = cylinder.model.dominant_axis;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let cam = random_pose(&mut rng, 1.0, 3.0);
        let obj = random_pose(&mut rng, 1.0, 3.0);
        let meas = random_pose(&mut rng, 0.5, 3.0);
        let spun = meas.compose(&Pose::from_rotation(Rotation::from_axis_angle(&axis, rng.random_range(-10.0..10.0))));
        let a = symmetric_object_residual(&cam, &obj, &meas, 0.1, &axis).value;
        let b = symmetric_object_residual(&cam, &obj, &spun, 0.1, &axis).value;
        worst = worst.max((a - b).amax());
    }
    outcome(worst < 1e-12, format!("max residual change {worst:.1e} over 1000 spins"))
}

// ---------------------------------------------------------------- 5

fn fd_jacobian(f: impl Fn(&Pose) -> Vector6<f64>, x: &Pose) -> Matrix6<f64> {
    let h = 1e-6;
    let mut j = Matrix6::zeros();
    for i in 0..6 {
        let mut d = Vector6::zeros();
        d[i] = h;
        let col = (f(&x.retract(&d)) - f(&x.retract(&-d))) / (2.0 * h);
        j.set_column(i, &col);
    }
    j
}

fn rel(analytic: &Matrix6<f64>, numeric: &Matrix6<f64>) -> f64 {
    (analytic - numeric).amax() / analytic.amax().max(1.0)
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, v: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(v);
    };
    let cov = [1e-6, 2e-6, 3e-6, 1e-5, 2e-5, 3e-5];
    for i in 0..100 {
        let a = random_pose(&mut rng, 1.0, 1.5);
        let b = random_pose(&mut rng, 1.0, 1.5);
        let meas = a.between(&b).compose(&random_pose(&mut rng, 0.1, 0.5));
        let r = camera_residual(&a, &b, &meas, &cov).unwrap();
        note("camera", rel(&r.jacobians[0], &fd_jacobian(|x| camera_residual(x, &b, &meas, &cov).unwrap().value, &a)));
        note("camera", rel(&r.jacobians[1], &fd_jacobian(|x| camera_residual(&a, x, &meas, &cov).unwrap().value, &b)));
        let r = asymmetric_object_residual(&a, &b, &meas, 0.2).unwrap();
        note("asymmetric", rel(&r.jacobians[0], &fd_jacobian(|x| asymmetric_object_residual(x, &b, &meas, 0.2).unwrap().value, &a)));
        note("asymmetric", rel(&r.jacobians[1], &fd_jacobian(|x| asymmetric_object_residual(&a, x, &meas, 0.2).unwrap().value, &b)));
        let axis = if i % 2 == 0 { Vector3::z() } else { unit3(&mut rng) };
        let m2 = random_pose(&mut rng, 1.0, 2.0);
        let r = symmetric_object_residual(&a, &b, &m2, 0.3, &axis);
        note("symmetric", rel(&r.jacobians[0], &fd_jacobian(|x| symmetric_object_residual(x, &b, &m2, 0.3, &axis).value, &a)));
        note("symmetric", rel(&r.jacobians[1], &fd_jacobian(|x| symmetric_object_residual(&a, x, &m2, 0.3, &axis).value, &b)));
        let r = prior_residual(&a, &b, &[1.0; 6]).unwrap();
        note("prior", rel(&r.jacobians[0], &fd_jacobian(|x| prior_residual(x, &b, &[1.0; 6]).unwrap().value, &a)));
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(max < 1e-5, format!("max relative error: {detail} (100 points each)"))
}

// ---------------------------------------------------------------- 6

fn c6() -> Outcome {
    let start = Instant::now();
    let mut config = demo_scenario(0).unwrap();
    config.noise = NoiseConfig::zero();
    let r = run_scenario(config);
    let mut worst_t: f64 = 0.0;
    let mut worst_r: f64 = 0.0;
    let mut worst_mssd: f64 = 0.0;
    let mut missing = 0;
    for o in &r.config.objects {
        let Some(est) = r.result.state().objects.get(&o.model.id) else {
            missing += 1;
            continue;
        };
        if o.model.is_symmetric() {
            worst_mssd = worst_mssd.max(mssd(est, &o.pose, &o.model).unwrap());
        } else {
            worst_t = worst_t.max((est.translation - o.pose.translation).norm());
            worst_r = worst_r.max(rotation_angle(est, &o.pose));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        missing == 0 && worst_t < 1e-6 && worst_r < 1e-6 && worst_mssd < 1e-6 && secs < 30.0,
        format!(
            "asymmetric max {worst_t:.1e} m / {worst_r:.1e} rad, symmetric max mssd {worst_mssd:.1e} m, {} objects, {secs:.2}s",
            r.config.objects.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn c7() -> Outcome {
    let mut wins = 0;
    let mut raw_mssd = Vec::new();
    let mut opt_mssd = Vec::new();
    let runs = 100;
    for seed in 0..runs {
        let r = run_scenario(demo_scenario(1000 + seed).unwrap());
        let gt: BTreeMap<u32, &SceneObject> = r.config.objects.iter().map(|o| (o.model.id, o)).collect();
        let by_id: BTreeMap<u32, &ObjectModel> = r.models.iter().map(|m| (m.id, m)).collect();
        // per frame: world-frame PnP positions of accepted objects
        let mut frames: BTreeMap<usize, Vec<(u32, Pose)>> = BTreeMap::new();
        for d in &r.result.detections {
            if let FrontEnd::Accepted { pnp, proposal, .. } = &d.outcome {
                let fk = &r.scenario.frames[d.t].fk;
                frames.entry(d.t).or_default().push((d.object, fk.compose(pnp)));
                let raw = fk.compose(&proposal.pose);
                let opt = r.result.state().objects[&d.object];
                let (g, m) = (&gt[&d.object].pose, by_id[&d.object]);
                raw_mssd.push(mssd(&raw, g, m).unwrap());
                opt_mssd.push(mssd(&opt, g, m).unwrap());
            }
        }
        let most = frames.values().map(Vec::len).max().unwrap_or(0);
        let rmse = |pairs: &mut dyn Iterator<Item = (u32, Pose)>| {
            let sq: Vec<f64> = pairs.map(|(id, p)| (p.translation - gt[&id].pose.translation).norm_squared()).collect();
            (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
        };
        let best = frames
            .values()
            .filter(|v| v.len() == most)
            .map(|v| rmse(&mut v.iter().copied()))
            .fold(f64::INFINITY, f64::min);
        let optimized = rmse(&mut r.result.state().objects.iter().map(|(id, p)| (*id, *p)));
        if optimized < best {
            wins += 1;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let improvement = 1.0 - mean(&opt_mssd) / mean(&raw_mssd);
    outcome(
        wins * 100 >= 95 * runs && improvement >= 0.3,
        format!(
            "optimized RMSE beats best single frame in {wins}/{runs} runs; mean mssd {:.2} mm -> {:.2} mm ({:.0}% better)",
            mean(&raw_mssd) * 1000.0,
            mean(&opt_mssd) * 1000.0,
            improvement * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 8

fn jitter(errors: &[Vector2<f64>]) -> f64 {
    if errors.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<Vector2<f64>> = errors.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = diffs.iter().sum::<Vector2<f64>>() / diffs.len() as f64;
    (diffs.iter().map(|d| (d - mean).norm_squared()).sum::<f64>() / diffs.len() as f64).sqrt()
}

fn c8() -> Outcome {
    let r = run_scenario(demo_scenario(0).unwrap());
    let k = r.config.intrinsics;
    let mut raw_total = 0.0;
    let mut opt_total = 0.0;
    let mut per_object = Vec::new();
    for o in &r.config.objects {
        let id = o.model.id;
        let mut raw = Vec::new();
        let mut opt = Vec::new();
        for d in r.result.detections.iter().filter(|d| d.object == id) {
            let Some(p) = d.proposal() else { continue };
            let obs = r.scenario.frames[d.t].objects.iter().find(|x| x.object == id).unwrap();
            let centre = |pose: &Pose| pinhole(&k, pose, &Vector3::zeros());
            let truth = centre(&obs.gt_camera_from_object);
            raw.push(centre(&p.pose) - truth);
            opt.push(centre(&r.result.optimized(d.t, id).unwrap()) - truth);
        }
        let (jr, jo) = (jitter(&raw), jitter(&opt));
        per_object.push(format!("{id}: {jr:.2}->{jo:.2}"));
        raw_total += jr;
        opt_total += jo;
    }
    let ratio = opt_total / raw_total;
    outcome(
        ratio <= 0.5,
        format!("center jitter optimized/raw = {ratio:.3} (px, per object {})", per_object.join(", ")),
    )
}

// ---------------------------------------------------------------- 9

fn c9() -> Outcome {
    let config = demo_scenario(0).unwrap();
    let scenario = generate(&config).unwrap();
    let models: Vec<ObjectModel> = config.objects.iter().map(|o| o.model.clone()).collect();
    let grid = threshold_grid(0.0, 0.6, 0.05);
    let rows = sweep_sigma_o(
        &scenario.frames,
        &models,
        &config.intrinsics,
        &PipelineConfig::default(),
        &BopThresholds::default(),
        &grid,
    )
    .unwrap();
    let ar: Vec<f64> = rows.iter().map(|r| r.ar_raw).collect();
    let (max_i, max) = ar.iter().copied().enumerate().fold((0, f64::MIN), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let (first, last) = (ar[0], ar[ar.len() - 1]);
    outcome(
        rows.len() == 13 && max > first && max > last,
        format!(
            "AR at sigma_o=0: {first:.3}, max {max:.3} at sigma_o={:.2}, at 0.6: {last:.3} ({} thresholds)",
            grid[max_i],
            rows.len()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn c10() -> Outcome {
    let mut sigma = Vec::new();
    let mut kp_error = Vec::new();
    let mut sigma_norm = Vec::new();
    let mut add = Vec::new();
    let mut seed = 2000;
    while sigma.len() < 5000 {
        let r = run_scenario(demo_scenario(seed).unwrap());
        seed += 1;
        let by_id: BTreeMap<u32, &ObjectModel> = r.models.iter().map(|m| (m.id, m)).collect();
        for f in &r.scenario.frames {
            for o in f.objects.iter().filter(|o| o.in_view) {
                let m = by_id[&o.object];
                for p in &o.predictions {
                    let truth = m.layout.axis_keypoints(p.axis);
                    let e = p
                        .keypoints
                        .iter()
                        .zip(&truth)
                        .map(|(kp, x)| (kp - pinhole(&r.config.intrinsics, &o.gt_camera_from_object, x)).norm())
                        .sum::<f64>()
                        / truth.len() as f64;
                    sigma.push(p.sigma);
                    kp_error.push(e);
                }
            }
        }
        for d in &r.result.detections {
            if let FrontEnd::Accepted { pnp, proposal, .. } = &d.outcome {
                let obs = r.scenario.frames[d.t].objects.iter().find(|x| x.object == d.object).unwrap();
                let m = by_id[&d.object];
                let e = if m.is_symmetric() {
                    adds_error(pnp, &obs.gt_camera_from_object, m)
                } else {
                    add_error(pnp, &obs.gt_camera_from_object, m)
                };
                sigma_norm.push(proposal.sigma_norm);
                add.push(e.unwrap());
            }
        }
    }
    let rho_kp = spearman(&sigma, &kp_error);
    let rho_add = spearman(&sigma_norm, &add);
    outcome(
        rho_kp >= 0.8 && rho_add >= 0.5,
        format!(
            "spearman(sigma, keypoint error) = {rho_kp:.3} over {} axis samples (target 0.8); spearman(|sigma|, ADD(-S) of PnP) = {rho_add:.3} over {} accepted proposals (target 0.5)",
            sigma.len(),
            add.len()
        ),
    )
}

// ---------------------------------------------------------------- 11

fn brute_adds(est: &Pose, gt: &Pose, m: &ObjectModel) -> f64 {
    let mut sum = 0.0;
    for p in &m.surface_points {
        let a = est.act(p);
        sum += m.surface_points.iter().map(|q| (a - gt.act(q)).norm_squared()).fold(f64::INFINITY, f64::min).sqrt();
    }
    sum / m.surface_points.len() as f64
}

fn brute_mssd(est: &Pose, gt: &Pose, m: &ObjectModel) -> f64 {
    m.symmetry
        .transforms
        .iter()
        .map(|s| {
            let g = gt.compose(&Pose::from_rotation(*s));
            m.surface_points.iter().map(|p| (est.act(p) - g.act(p)).norm()).fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

fn c11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let build = |shape, symmetry| {
        let spec = ObjectSpec {
            surface_samples: 200,
            ..ObjectSpec::new(5, shape, symmetry)
        };
        spec.build().unwrap()
    };
    let models = [
        build(Shape::Box { size: Vector3::new(0.1, 0.06, 0.04) }, SymmetryKind::Asymmetric),
        build(Shape::Box { size: Vector3::new(0.06, 0.06, 0.1) }, SymmetryKind::Discrete { order: 4, axis: Vector3::z() }),
        build(Shape::Box { size: Vector3::new(0.08, 0.05, 0.1) }, SymmetryKind::Discrete { order: 2, axis: Vector3::z() }),
    ];
    let mut mismatches = 0;
    for i in 0..100 {
        let m = &models[i % 3];
        let est = Pose::from_translation(Vector3::new(0.0, 0.0, 0.8)).compose(&random_pose(&mut rng, 0.1, 2.0));
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 0.8)).compose(&random_pose(&mut rng, 0.1, 2.0));
        if adds_error(&est, &gt, m).unwrap() != brute_adds(&est, &gt, m) || mssd(&est, &gt, m).unwrap() != brute_mssd(&est, &gt, m) {
            mismatches += 1;
        }
    }
    let errors: Vec<f64> = (0..20_000).map(|_| rng.random_range(0.0..0.1)).collect();
    let a = auc(&errors, 0.1).unwrap();
    let n = models.iter().map(|m| m.surface_points.len()).max().unwrap();
    outcome(
        mismatches == 0 && n == 200 && (a - 0.5).abs() <= 0.02,
        format!("{mismatches} exact mismatches over 100 pose pairs at N={n}; AUC of U(0, 0.1 m) errors = {a:.4}"),
    )
}

// ---------------------------------------------------------------- 12

fn c12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run_into = |name: &str, replay: Option<&Path>| {
        let mut cfg = RunConfig::demo();
        cfg.scenario.seed = 7;
        cfg.out = dir.path().join(name);
        cfg.dump_graph = true;
        if let Some(p) = replay {
            cfg.input = ambipose::Input::Replay(p.to_path_buf());
        }
        run_pipeline(&cfg).unwrap();
        cfg.out
    };
    let a = run_into("a", None);
    let b = run_into("b", None);
    let c = run_into("c", Some(&a.join("measurements.txt")));
    let same = |x: &Path, y: &Path, f: &str| std::fs::read(x.join(f)).unwrap() == std::fs::read(y.join(f)).unwrap();
    let files = ["measurements.txt", "metrics.csv", "poses.csv", "cost.csv", "graph.txt"];
    let repeat = files.iter().all(|f| same(&a, &b, f));
    let replay = files[1..].iter().all(|f| same(&a, &c, f));
    outcome(
        repeat && replay,
        format!("same-seed outputs identical: {repeat}; generate->save->replay metric CSV identical: {replay}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "axis selection oracle equivalence", c1),
        (2, "NLL gradient and optimal xi", c2),
        (3, "PnP recovery", c3),
        (4, "symmetric factor spin invariance", c4),
        (5, "factor Jacobians", c5),
        (6, "noiseless end-to-end recovery", c6),
        (7, "multi-view improvement", c7),
        (8, "jitter reduction", c8),
        (9, "threshold sweep shape", c9),
        (10, "uncertainty-error correlation", c10),
        (11, "metric oracles", c11),
        (12, "determinism and replay", c12),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let known = KNOWN_FAILING.contains(&id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (listed as known failure)",
        };
        println!("[{tag}] {id:>2}. {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected results for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
