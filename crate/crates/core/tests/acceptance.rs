//! Acceptance suite: every criterion runs against the built-in phantom
//! oracle at its pinned tolerance and prints one pass/fail line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anfc::analysis::{classify, detect_keypoints, measure_diameters, MorphClass};
use anfc::config::PipelineConfig;
use anfc::flow::{
    analyze_video, radon, stabilize, SpatioTemporalProfile, StabilizeParams, VideoParams,
};
use anfc::imaging::{distance_transform, BinaryMask, Point, ScaleConfig};
use anfc::phantom::{synth_image, synth_video, Direction, LoopSpec, TransitSpec, VideoSpec};
use anfc::report::{
    classification_metrics, diagnose, regression_metrics, FeatureFlag, NormalRanges, Nullable,
};
use anfc::segmentation::SegmentationBackend;
use anfc::skeleton::{component_count, graphify, main_path, prune, thin, CapillaryPath};

fn check(criterion: u32, description: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} - {description} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {description}: {detail}");
}

/// Skeleton path of the largest instance of a mask.
fn mask_main_path(mask: &BinaryMask) -> CapillaryPath {
    let skel = prune(&thin(mask), 8.0);
    main_path(&graphify(&skel, 8.0)).expect("phantom mask has a skeleton")
}

#[test]
fn criterion_1_diameter_recovery() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut limb_pred = Vec::new();
    let mut limb_truth = Vec::new();
    let mut apex_pred = Vec::new();
    let mut apex_truth = Vec::new();

    for trial in 0..50u64 {
        let arterial = rng.random_range(6.0..=14.0f64);
        let venous = rng.random_range(6.0..=14.0f64);
        let apex = rng.random_range(8.0..=16.0f64);
        let spec = LoopSpec {
            apex_center: [45.0, 60.0],
            limb_length: rng.random_range(50.0..=65.0),
            limb_spacing: 32.0,
            arterial_width: arterial,
            venous_width: venous,
            apex_width: apex,
            noise_sigma: 0.02,
            seed: 9000 + trial,
            ..LoopSpec::default()
        };
        let phantom = synth_image(&[spec], (150, 170), false).unwrap();
        let truth = &phantom.truths[0];
        let edt = distance_transform(&phantom.mask);
        let path = mask_main_path(&phantom.mask);
        let kp = detect_keypoints(&path, &edt).unwrap();
        let d = measure_diameters(&kp, &edt, &path).unwrap();
        limb_pred.extend([d.arterial_px, d.venous_px]);
        limb_truth.extend([truth.arterial_width, truth.venous_width]);
        apex_pred.push(d.apical_px);
        apex_truth.push(truth.apex_width);
    }

    let (limb_mae, _) = regression_metrics(&limb_pred, &limb_truth).unwrap();
    let (apex_mae, _) = regression_metrics(&apex_pred, &apex_truth).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    check(
        1,
        "diameter recovery on 50 phantom loops",
        limb_mae <= 1.0 && apex_mae <= 2.0 && elapsed < 60.0,
        &format!("limb MAE {limb_mae:.3} px (<= 1.0), apical MAE {apex_mae:.3} px (<= 2.0), {elapsed:.1} s (< 60)"),
    );
}

fn classify_phantom(spec: &LoopSpec, canvas: (usize, usize)) -> (MorphClass, MorphClass) {
    let phantom = synth_image(std::slice::from_ref(spec), canvas, false).unwrap();
    let skel = prune(&thin(&phantom.mask), 8.0);
    let graph = graphify(&skel, 8.0);
    let path = main_path(&graph).unwrap();
    let predicted = classify(&graph, &path, 1.7, None);
    (predicted, phantom.truths[0].class)
}

#[test]
fn criterion_2_morphology_classification() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut failures = Vec::new();

    // 10 normal loops.
    for i in 0..10u64 {
        let spec = LoopSpec {
            arterial_width: rng.random_range(7.0..=10.0),
            venous_width: rng.random_range(10.0..=13.0),
            apex_width: rng.random_range(10.0..=14.0),
            limb_length: rng.random_range(50.0..=70.0),
            noise_sigma: 0.01,
            seed: 300 + i,
            ..LoopSpec::default()
        };
        let (pred, truth) = classify_phantom(&spec, (150, 170));
        assert_eq!(truth, MorphClass::Normal);
        total += 1;
        if pred == truth {
            correct += 1;
        } else {
            failures.push(format!("normal {i}: predicted {pred:?}"));
        }
    }
    // 10 crossing loops.
    for i in 0..10u64 {
        let spec = LoopSpec {
            crossing: true,
            apex_center: [40.0, 75.0],
            arterial_width: rng.random_range(7.0..=10.0),
            venous_width: rng.random_range(10.0..=13.0),
            limb_length: rng.random_range(55.0..=65.0),
            noise_sigma: 0.01,
            seed: 400 + i,
            ..LoopSpec::default()
        };
        let (pred, truth) = classify_phantom(&spec, (160, 150));
        assert_eq!(truth, MorphClass::Crossing);
        total += 1;
        if pred == truth {
            correct += 1;
        } else {
            failures.push(format!("crossing {i}: predicted {pred:?}"));
        }
    }
    // 10 tortuous loops (analytic limb tortuosity >= 2.0).
    for i in 0..10u64 {
        let spec = LoopSpec {
            limb_length: 160.0,
            apex_center: [26.0, 62.0],
            limb_spacing: 28.0,
            arterial_width: 6.0,
            venous_width: 6.5,
            apex_width: 8.0,
            tortuosity_amp: rng.random_range(38.0..=42.0),
            tortuosity_wavelength: 80.0,
            noise_sigma: 0.01,
            seed: 500 + i,
            ..LoopSpec::default()
        };
        let phantom = synth_image(&[spec.clone()], (130, 200), false).unwrap();
        assert!(
            phantom.truths[0].limb_tortuosity >= 2.0,
            "tortuous phantom {i} has analytic tortuosity {}",
            phantom.truths[0].limb_tortuosity
        );
        let (pred, truth) = classify_phantom(&spec, (130, 200));
        assert_eq!(truth, MorphClass::Tortuous);
        total += 1;
        if pred == truth {
            correct += 1;
        } else {
            failures.push(format!("tortuous {i}: predicted {pred:?}"));
        }
    }

    check(
        2,
        "native three-way morphology classification",
        correct == total,
        &format!("{correct}/{total} correct{}", if failures.is_empty() { String::new() } else { format!("; {failures:?}") }),
    );
}

#[test]
fn criterion_3_diagnosis_boundaries() {
    let ranges = NormalRanges::default();
    let eps = 0.01;
    let mut cases = 0usize;
    let mut passed = 0usize;

    // (name, lo, hi); portions have an implicit lower bound of 0.
    let features: [(&str, f64, f64); 6] = [
        ("crossing_portion", 0.0, ranges.crossing_portion_max),
        ("tortuous_portion", 0.0, ranges.tortuous_portion_max),
        ("venous_um", ranges.venous_um[0], ranges.venous_um[1]),
        ("arterial_um", ranges.arterial_um[0], ranges.arterial_um[1]),
        ("apical_um", ranges.apical_um[0], ranges.apical_um[1]),
        ("length_um", ranges.length_um[0], ranges.length_um[1]),
    ];

    let base = anfc::analysis::ImageFeatures {
        n_total: 5,
        n_kept: 5,
        n_excluded: 0,
        crossing_portion: Nullable::value(0.1),
        tortuous_portion: Nullable::value(0.0),
        normal_portion: Nullable::value(0.9),
        density_per_mm: Nullable::value(9.0),
        mean_apical_px: Nullable::value(14.0),
        mean_arterial_px: Nullable::value(10.0),
        mean_venous_px: Nullable::value(13.0),
        mean_length_px: Nullable::value(200.0),
        mean_apical_um: Nullable::value(14.0),
        mean_arterial_um: Nullable::value(10.0),
        mean_venous_um: Nullable::value(13.0),
        mean_length_um: Nullable::value(200.0),
    };

    for (name, lo, hi) in features {
        for (value, expect_normal) in [
            (lo, true),
            (lo - eps, false),
            (hi, true),
            (hi + eps, false),
        ] {
            let mut f = base.clone();
            match name {
                "crossing_portion" => f.crossing_portion = Nullable::value(value),
                "tortuous_portion" => f.tortuous_portion = Nullable::value(value),
                "venous_um" => f.mean_venous_um = Nullable::value(value),
                "arterial_um" => f.mean_arterial_um = Nullable::value(value),
                "apical_um" => f.mean_apical_um = Nullable::value(value),
                "length_um" => f.mean_length_um = Nullable::value(value),
                _ => unreachable!(),
            }
            let flags = diagnose(&f, &ranges);
            let flag = match name {
                "crossing_portion" => flags.crossing_portion,
                "tortuous_portion" => flags.tortuous_portion,
                "venous_um" => flags.venous_um,
                "arterial_um" => flags.arterial_um,
                "apical_um" => flags.apical_um,
                "length_um" => flags.length_um,
                _ => unreachable!(),
            };
            let expected = if expect_normal { FeatureFlag::Normal } else { FeatureFlag::Abnormal };
            cases += 1;
            if flag == expected {
                passed += 1;
            } else {
                println!("  boundary case {name} = {value}: got {flag:?}, expected {expected:?}");
            }
        }
    }
    check(
        3,
        "inclusive-boundary abnormality diagnosis",
        passed == cases && cases == 24,
        &format!("{passed}/{cases} boundary cases exact"),
    );
}

/// Loop for velocity phantoms: short arc so slow transits reach the
/// midpoint within the video, and unequal limbs so the arc midpoint falls
/// on a straight limb (the skeleton-to-centerline mapping is exact there,
/// keeping occurrence timing sharp).
fn velocity_loop(seed: u64) -> LoopSpec {
    LoopSpec {
        apex_center: [18.0, 45.0],
        limb_length: 50.0,
        venous_limb_length: Some(8.0),
        limb_spacing: 16.0,
        arterial_width: 9.0,
        venous_width: 9.0,
        apex_width: 10.0,
        noise_sigma: 0.05,
        seed,
        ..LoopSpec::default()
    }
}

fn velocity_video_params() -> VideoParams {
    VideoParams {
        stabilize: StabilizeParams {
            n_corners: 16,
            search_radius: 5,
            ..StabilizeParams::default()
        },
        ..VideoParams::default()
    }
}

const VELOCITY_CANVAS: [usize; 2] = [90, 84];

#[test]
fn criterion_4_velocity_recovery() {
    let start = Instant::now();
    let speeds = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut trials = 0usize;
    let mut ok = 0usize;
    let mut details = Vec::new();

    for (si, &speed) in speeds.iter().enumerate() {
        for trial in 0..5u64 {
            let seed = 700 + 10 * si as u64 + trial;
            let loop_spec = velocity_loop(seed);
            // Place the transit so the midpoint crossing sits inside the video.
            let probe = synth_video(&VideoSpec {
                loop_spec: loop_spec.clone(),
                canvas: VELOCITY_CANVAS,
                transits: vec![],
                n_frames: 2,
                fps: 20.0,
                jitter: vec![],
                texture_amp: 0.0,
            })
            .unwrap();
            let half_arc = probe.truth.path_arc_length / 2.0;
            let start_frame = (100.0 - half_arc / speed).clamp(2.0, 150.0) as usize;
            let spec = VideoSpec {
                loop_spec,
                canvas: VELOCITY_CANVAS,
                transits: vec![TransitSpec {
                    speed_px_per_frame: speed,
                    start_frame,
                    blob_sigma: 3.0,
                    blob_amplitude: 0.35,
                    direction: Direction::Forward,
                }],
                n_frames: 200,
                fps: 20.0,
                jitter: vec![],
                texture_amp: 0.0,
            };
            let video = synth_video(&spec).unwrap();
            let path = mask_main_path(&video.mask);
            let analysis = analyze_video(
                &video.sequence,
                &video.mask,
                &path,
                &velocity_video_params(),
                &ScaleConfig::default(),
            )
            .unwrap();
            trials += 1;
            let truth = &video.truth.transits[0];
            let tol = (0.1f64).max(0.05 * speed);
            let best = analysis
                .events
                .iter()
                .min_by(|a, b| {
                    let da = (a.speed_px_per_frame.abs() - speed).abs();
                    let db = (b.speed_px_per_frame.abs() - speed).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .copied();
            match best {
                Some(event) => {
                    let speed_err = (event.speed_px_per_frame.abs() - speed).abs();
                    let occ_frames = event.occurrence_time_s * 20.0;
                    let occ_err = (occ_frames - truth.mid_crossing_frame).abs();
                    if speed_err <= tol && occ_err <= 2.0 {
                        ok += 1;
                    } else {
                        details.push(format!(
                            "v={speed} trial {trial}: speed err {speed_err:.3} (tol {tol:.3}), occurrence err {occ_err:.2} frames"
                        ));
                    }
                }
                None => details.push(format!("v={speed} trial {trial}: no event detected")),
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        4,
        "velocity and occurrence recovery",
        ok == trials && elapsed < 120.0,
        &format!("{ok}/{trials} trials within tolerance, {elapsed:.1} s (< 120){}",
            if details.is_empty() { String::new() } else { format!("; {details:?}") }),
    );
}

#[test]
fn criterion_5_wbc_counting() {
    let counts = [0usize, 1, 2, 3, 5];
    let mut exact = 0usize;
    let mut trials = 0usize;
    let mut miscounts = Vec::new();

    for (ci, &k) in counts.iter().enumerate() {
        for trial in 0..10u64 {
            let seed = 1100 + 100 * ci as u64 + trial;
            let speeds = [2.0, 1.5, 2.5, 1.0, 3.0];
            let transits: Vec<TransitSpec> = (0..k)
                .map(|i| TransitSpec {
                    speed_px_per_frame: speeds[i % speeds.len()],
                    start_frame: 10 + i * 35,
                    blob_sigma: 2.5,
                    blob_amplitude: 0.35,
                    direction: Direction::Forward,
                })
                .collect();
            let spec = VideoSpec {
                loop_spec: velocity_loop(seed),
                canvas: VELOCITY_CANVAS,
                transits,
                n_frames: 200,
                fps: 20.0,
                jitter: vec![],
                texture_amp: 0.0,
            };
            let video = synth_video(&spec).unwrap();
            let path = mask_main_path(&video.mask);
            let analysis = analyze_video(
                &video.sequence,
                &video.mask,
                &path,
                &velocity_video_params(),
                &ScaleConfig::default(),
            )
            .unwrap();
            trials += 1;
            if analysis.wbc_count == k {
                exact += 1;
            } else {
                miscounts.push(format!("k={k} trial {trial}: counted {}", analysis.wbc_count));
            }
        }
    }
    let count_rate = exact as f64 / trials as f64;

    // Noise-only trials: no transit may be detected.
    let mut false_positive_trials = 0usize;
    for trial in 0..100u64 {
        let spec = VideoSpec {
            loop_spec: velocity_loop(2000 + trial),
            canvas: VELOCITY_CANVAS,
            transits: vec![],
            n_frames: 200,
            fps: 20.0,
            jitter: vec![],
            texture_amp: 0.0,
        };
        let video = synth_video(&spec).unwrap();
        let path = mask_main_path(&video.mask);
        let analysis = analyze_video(
            &video.sequence,
            &video.mask,
            &path,
            &velocity_video_params(),
            &ScaleConfig::default(),
        )
        .unwrap();
        if analysis.wbc_count != 0 {
            false_positive_trials += 1;
        }
    }

    check(
        5,
        "WBC counting and noise-only false positives",
        count_rate >= 0.95 && false_positive_trials == 0,
        &format!(
            "exact count in {exact}/{trials} ({:.0}%), {false_positive_trials}/100 noise-only trials with spurious events{}",
            100.0 * count_rate,
            if miscounts.is_empty() { String::new() } else { format!("; {miscounts:?}") }
        ),
    );
}

#[test]
fn criterion_6_stabilization() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut ok = 0usize;
    let mut trials = 0usize;
    let mut details = Vec::new();

    for trial in 0..20u64 {
        let integer_trial = trial < 10;
        let n_frames = 12;
        let mut jitter = vec![(0.0, 0.0)];
        for _ in 1..n_frames {
            if integer_trial {
                jitter.push((
                    rng.random_range(-10..=10) as f64,
                    rng.random_range(-10..=10) as f64,
                ));
            } else {
                jitter.push((
                    rng.random_range(-8..=8) as f64 * 0.25,
                    rng.random_range(-8..=8) as f64 * 0.25,
                ));
            }
        }
        let spec = VideoSpec {
            loop_spec: LoopSpec {
                noise_sigma: 0.0,
                seed: 3000 + trial,
                ..velocity_loop(3000 + trial)
            },
            canvas: [120, 100],
            transits: vec![],
            n_frames,
            fps: 20.0,
            jitter: jitter.clone(),
            texture_amp: 0.12,
        };
        let video = synth_video(&spec).unwrap();
        let (shifts, _) = stabilize(&video.sequence, &StabilizeParams::default()).unwrap();
        trials += 1;
        let mut worst = 0.0f64;
        let mut exact = true;
        for (s, j) in shifts.iter().zip(&jitter) {
            let dr = (s.translation.0 - j.0).abs();
            let dc = (s.translation.1 - j.1).abs();
            worst = worst.max(dr).max(dc);
            if integer_trial && (s.translation.0 != j.0 || s.translation.1 != j.1) {
                exact = false;
            }
        }
        let pass = if integer_trial { exact } else { worst <= 0.25 };
        if pass {
            ok += 1;
        } else {
            details.push(format!(
                "trial {trial} ({}): worst error {worst:.4}",
                if integer_trial { "integer" } else { "quarter-pixel" }
            ));
        }
    }
    check(
        6,
        "stabilization recovery (integer exact, subpixel within 0.25 px)",
        ok == trials,
        &format!("{ok}/{trials} trials{}", if details.is_empty() { String::new() } else { format!("; {details:?}") }),
    );
}

#[test]
fn criterion_7_radon_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mass_ok = true;

    for _ in 0..100 {
        let t_len = rng.random_range(4..40);
        let s_len = rng.random_range(4..40);
        let values: Vec<f64> = (0..t_len * s_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let profile = SpatioTemporalProfile { t_len, s_len, values };
        let total: f64 = profile.values.iter().sum();
        let sino = radon(&profile, 90).unwrap();
        for j in 0..sino.n_theta {
            let row: f64 = sino.sums[j * sino.n_rho..(j + 1) * sino.n_rho].iter().sum();
            if (row - total).abs() > 1e-9 {
                mass_ok = false;
            }
            let hits: u32 = sino.hits[j * sino.n_rho..(j + 1) * sino.n_rho].iter().sum();
            if hits as usize != t_len * s_len {
                mass_ok = false;
            }
        }
    }

    // Linearity.
    let t_len = 24;
    let s_len = 31;
    let p = SpatioTemporalProfile {
        t_len,
        s_len,
        values: (0..t_len * s_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let q = SpatioTemporalProfile {
        t_len,
        s_len,
        values: (0..t_len * s_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let combined = SpatioTemporalProfile {
        t_len,
        s_len,
        values: p.values.iter().zip(&q.values).map(|(a, b)| 1.75 * a - 0.6 * b).collect(),
    };
    let (sp, sq, sc) = (radon(&p, 60).unwrap(), radon(&q, 60).unwrap(), radon(&combined, 60).unwrap());
    let linear_ok = sc
        .sums
        .iter()
        .enumerate()
        .all(|(i, v)| (v - (1.75 * sp.sums[i] - 0.6 * sq.sums[i])).abs() < 1e-9);

    // Slope +1 streak peaks at 135 degrees.
    let streak = SpatioTemporalProfile {
        t_len: 101,
        s_len: 101,
        values: (0..101 * 101)
            .map(|i| if i / 101 == i % 101 { 1.0 } else { 0.0 })
            .collect(),
    };
    let sino = radon(&streak, 180).unwrap();
    let norm = sino.normalized();
    let max_hits = *sino.hits.iter().max().unwrap();
    let mut best = (0usize, f64::MIN);
    for j in 0..sino.n_theta {
        for b in 0..sino.n_rho {
            let idx = j * sino.n_rho + b;
            if sino.hits[idx] >= max_hits / 4 && norm[idx] > best.1 {
                best = (j, norm[idx]);
            }
        }
    }
    let streak_theta = sino.theta_deg(best.0);
    let streak_ok = (streak_theta - 135.0).abs() <= sino.theta_step_deg() + 1e-9;

    check(
        7,
        "Radon mass conservation, linearity, streak angle",
        mass_ok && linear_ok && streak_ok,
        &format!("mass {} / linearity {} / streak at {streak_theta:.1} deg", mass_ok, linear_ok),
    );
}

#[test]
fn criterion_8_skeleton_and_edt_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut skeleton_ok = true;
    let mut edt_ok = true;

    for trial in 0..200 {
        // Mostly small masks with some up to 64x64.
        let (w, h) = if trial % 10 == 0 {
            (rng.random_range(33..=64), rng.random_range(33..=64))
        } else {
            (rng.random_range(1..=32), rng.random_range(1..=32))
        };
        let density = rng.random_range(0.2..0.7);
        let data: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
        let mask = BinaryMask::from_vec(w, h, data).unwrap();

        let skel = thin(&mask);
        for p in skel.points() {
            if !mask.get(p.row, p.col) {
                skeleton_ok = false;
            }
        }
        if component_count(&mask) != component_count(&skel.to_mask()) {
            skeleton_ok = false;
        }
        if thin(&skel.to_mask()).to_mask() != skel.to_mask() {
            skeleton_ok = false;
        }

        let fast = distance_transform(&mask);
        let brute = brute_force_edt(&mask);
        for (a, b) in fast.data.iter().zip(&brute.data) {
            if (a - b).abs() > 1e-9 {
                edt_ok = false;
            }
        }
    }
    check(
        8,
        "skeleton invariants and exact EDT on 200 random masks",
        skeleton_ok && edt_ok,
        &format!("skeleton {} / edt-vs-brute-force {}", skeleton_ok, edt_ok),
    );
}

/// O(N^2) distance oracle with the border-as-background rule.
fn brute_force_edt(mask: &BinaryMask) -> anfc::imaging::ScalarField {
    let (w, h) = (mask.width(), mask.height());
    let mut bg: Vec<(i64, i64)> = Vec::new();
    for r in -1..=(h as i64) {
        for c in -1..=(w as i64) {
            let inside = r >= 0 && r < h as i64 && c >= 0 && c < w as i64;
            if !inside || !mask.get(r as usize, c as usize) {
                bg.push((r, c));
            }
        }
    }
    let mut field = anfc::imaging::ScalarField::zeros(w, h);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let mut best = f64::INFINITY;
            for &(br, bc) in &bg {
                let d = ((r as i64 - br).pow(2) + (c as i64 - bc).pow(2)) as f64;
                if d < best {
                    best = d;
                }
            }
            field.set(r, c, best.sqrt());
        }
    }
    field
}

#[test]
fn criterion_9_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut ok = true;

    for _ in 0..50 {
        // Regression oracle.
        let n = rng.random_range(1..40);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (mae, rmse) = regression_metrics(&pred, &truth).unwrap();
        let mut abs = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            abs += (pred[i] - truth[i]).abs();
            sq += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        }
        if (mae - abs / n as f64).abs() > 1e-12 || (rmse - (sq / n as f64).sqrt()).abs() > 1e-12 {
            ok = false;
        }

        // Classification oracle: hand-built confusion matrix.
        let labels = ["normal", "crossing", "tortuous"];
        let m = rng.random_range(1..60);
        let pv: Vec<String> = (0..m).map(|_| labels[rng.random_range(0..3)].to_string()).collect();
        let tv: Vec<String> = (0..m).map(|_| labels[rng.random_range(0..3)].to_string()).collect();
        let metrics = classification_metrics(&pv, &tv).unwrap();
        let classes = &metrics.classes;
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (p, t) in pv.iter().zip(&tv) {
            let pi = classes.iter().position(|c| c == p).unwrap();
            let ti = classes.iter().position(|c| c == t).unwrap();
            confusion[ti][pi] += 1;
        }
        if confusion != metrics.confusion {
            ok = false;
        }
        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        if (metrics.accuracy - trace as f64 / m as f64).abs() > 1e-12 {
            ok = false;
        }
        if (metrics.weighted_recall - metrics.accuracy).abs() > 1e-12 {
            ok = false;
        }
        for (i, cm) in metrics.per_class.iter().enumerate() {
            let tp = confusion[i][i] as f64;
            let support: usize = confusion[i].iter().sum();
            let pred_count: usize = (0..k).map(|t| confusion[t][i]).sum();
            let precision = if pred_count > 0 { tp / pred_count as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            if (cm.precision - precision).abs() > 1e-12 || (cm.recall - recall).abs() > 1e-12 {
                ok = false;
            }
        }

        // Detection oracle: independent greedy matcher.
        let np = rng.random_range(0..12);
        let nt = rng.random_range(1..12);
        let pp: Vec<Point> = (0..np)
            .map(|_| Point::new(rng.random_range(0..60), rng.random_range(0..60)))
            .collect();
        let tp: Vec<Point> = (0..nt)
            .map(|_| Point::new(rng.random_range(0..60), rng.random_range(0..60)))
            .collect();
        let s = anfc::report::detection_sensitivity(&pp, &tp, 10.0).unwrap();
        let oracle = greedy_sensitivity_oracle(&pp, &tp, 10.0);
        if (s - oracle).abs() > 1e-12 {
            ok = false;
        }
    }
    check(9, "metric oracle equivalence on 50 random vectors", ok, "regression, classification, detection");
}

fn greedy_sensitivity_oracle(pred: &[Point], truth: &[Point], radius: f64) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            let d = (((p.row as f64) - (t.row as f64)).powi(2)
                + ((p.col as f64) - (t.col as f64)).powi(2))
            .sqrt();
            if d <= radius {
                pairs.push((d, pi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matched = 0;
    for (_, pi, ti) in pairs {
        if !used_p[pi] && !used_t[ti] {
            used_p[pi] = true;
            used_t[ti] = true;
            matched += 1;
        }
    }
    matched as f64 / truth.len() as f64
}

#[test]
fn criterion_10_determinism_and_nan_policy() {
    // Byte-identical image pipeline reports across two runs.
    let spec = LoopSpec {
        noise_sigma: 0.02,
        seed: 4242,
        ..LoopSpec::default()
    };
    let phantom = synth_image(&[spec], (150, 160), false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mask_path = dir.path().join("mask.png");
    anfc::io::save_mask(&mask_path, &phantom.mask).unwrap();
    let config = PipelineConfig {
        scale: ScaleConfig {
            microns_per_pixel: Some(1.5),
            fps: 20.0,
        },
        scale_area_gates: false,
        min_clear: 1,
        seed: 77,
        ..PipelineConfig::default()
    };
    let backend = SegmentationBackend::External(mask_path);
    let a = anfc::pipeline::analyze_image(&phantom.image, &backend, None, &config).unwrap();
    let b = anfc::pipeline::analyze_image(&phantom.image, &backend, None, &config).unwrap();
    let bytes_a = serde_json::to_vec_pretty(&a).unwrap();
    let bytes_b = serde_json::to_vec_pretty(&b).unwrap();
    let deterministic = bytes_a == bytes_b;

    // Zero kept capillaries: every feature null with the stated reason.
    let empty_img = anfc::imaging::GrayImage::filled(120, 100, 0.55).unwrap();
    let empty_mask_path = dir.path().join("empty.png");
    anfc::io::save_mask(&empty_mask_path, &BinaryMask::empty(120, 100)).unwrap();
    let report = anfc::pipeline::analyze_image(
        &empty_img,
        &SegmentationBackend::External(empty_mask_path),
        None,
        &PipelineConfig::default(),
    )
    .unwrap();
    use anfc::report::NullReason::InsufficientClearCapillaries as Insufficient;
    let nan_policy = report.features.n_kept == 0
        && report.features.crossing_portion.reason() == Some(Insufficient)
        && report.features.tortuous_portion.reason() == Some(Insufficient)
        && report.features.density_per_mm.reason() == Some(Insufficient)
        && report.features.mean_apical_px.reason() == Some(Insufficient)
        && report.features.mean_arterial_um.reason() == Some(Insufficient)
        && report.features.mean_length_um.reason() == Some(Insufficient)
        && report.flags.venous_um == FeatureFlag::Null(Insufficient);

    check(
        10,
        "pipeline determinism and NaN policy",
        deterministic && nan_policy,
        &format!("byte-identical {} / null-with-reason {}", deterministic, nan_policy),
    );
}
