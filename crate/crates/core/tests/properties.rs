use physinv_core::bench::io::trajectory_csv;
use physinv_core::bench::read_trajectory;
use physinv_core::dynscore::{dynamical_score, nmse};
use physinv_core::gate::{discard_rate, gate, GateConfig, GateReason, GateVerdict};
use physinv_core::invariants::{
    aggregate_scores, invariance_score, window_score, window_scores, InvariantKind, InvariantSeries,
};
use physinv_core::kinematics::{
    central_difference, estimate_kinematics, estimate_velocity, kinematics_from_positions, savitzky_golay,
    window_regression_slope,
};
use physinv_core::simulate::{corrupt, simulate, Corruption, SimSpec};
use physinv_core::{ExperimentKind, KinematicsConfig, Sample, ScoreConfig, Trajectory, Unit, YAxis};
use proptest::prelude::*;

fn grid(n: usize, t0: f64, h: f64) -> Vec<f64> {
    (0..n).map(|i| t0 + i as f64 * h).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn series(values: Vec<f64>) -> InvariantSeries {
    let t = grid(values.len(), 0.0, 0.01);
    InvariantSeries::new(InvariantKind::EnergyPerMass, values, t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn central_difference_exact_on_quadratics(
        c in prop::array::uniform3(-5.0f64..5.0), n in 3usize..80, t0 in -2.0f64..2.0, fps in 24.0f64..240.0
    ) {
        let t = grid(n, t0, 1.0 / fps);
        let v: Vec<f64> = t.iter().map(|t| c[0] + c[1] * t + c[2] * t * t).collect();
        let d = central_difference(&v, &t).unwrap();
        prop_assert_eq!(d.len(), n);
        for i in 1..n - 1 {
            prop_assert!(rel(d[i], c[1] + 2.0 * c[2] * t[i]) <= 1e-9);
        }
    }

    #[test]
    fn savitzky_golay_reproduces_low_degree_polynomials(
        c in prop::array::uniform4(-3.0f64..3.0), half in 2usize..6, n in 12usize..60, order in 0usize..4
    ) {
        let window = 2 * half + 1;
        prop_assume!(order < window && n >= window);
        let t = grid(n, 0.0, 1.0 / 60.0);
        let v: Vec<f64> = t
            .iter()
            .map(|t| (0..=order).map(|k| c[k] * t.powi(k as i32)).sum())
            .collect();
        let s = savitzky_golay(&v, window, order).unwrap();
        prop_assert_eq!(s.len(), n);
        for (a, b) in s.iter().zip(&v) {
            prop_assert!(rel(*a, *b) <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn regression_slope_matches_normal_equations(
        v in prop::collection::vec(-10.0f64..10.0, 9..60), half in 1usize..4
    ) {
        let w = 2 * half + 1;
        let t = grid(v.len(), 1.0, 1.0 / 30.0);
        let s = window_regression_slope(&v, &t, w).unwrap();
        prop_assert_eq!(s.len(), v.len());
        let n = v.len();
        for (i, slope) in s.iter().enumerate() {
            let start = i.saturating_sub(w / 2).min(n - w);
            let (xs, ys) = (&t[start..start + w], &v[start..start + w]);
            let k = w as f64;
            let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
            let sxx = xs.iter().map(|x| x * x).sum::<f64>();
            let sxy = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>();
            let m = (k * sxy - sx * sy) / (k * sxx - sx * sx);
            prop_assert!((slope - m).abs() <= 1e-9 * m.abs().max(1.0), "{} vs {}", slope, m);
        }
    }

    #[test]
    fn kinematics_commute_with_spatial_scaling(
        ys in prop::collection::vec(-1.0f64..1.0, 12..50), c in 0.01f64..100.0, pow in -4i32..5
    ) {
        let t = grid(ys.len(), 0.0, 1.0 / 120.0);
        let pos: Vec<[f64; 2]> = ys.iter().enumerate().map(|(i, y)| [0.01 * i as f64, *y]).collect();
        let cfg = KinematicsConfig::default();
        let base = kinematics_from_positions(&t, &pos, &cfg).unwrap();
        prop_assert_eq!(base.vel.len(), ys.len());
        prop_assert_eq!(base.acc.len(), ys.len());
        // Powers of two scale every intermediate exactly.
        let exact = 2f64.powi(pow);
        let scaled: Vec<[f64; 2]> = pos.iter().map(|p| [p[0] * exact, p[1] * exact]).collect();
        let k = kinematics_from_positions(&t, &scaled, &cfg).unwrap();
        for i in 0..ys.len() {
            for a in 0..2 {
                prop_assert_eq!(k.vel[i][a], exact * base.vel[i][a]);
                prop_assert_eq!(k.acc[i][a], exact * base.acc[i][a]);
            }
        }
        let scaled: Vec<[f64; 2]> = pos.iter().map(|p| [p[0] * c, p[1] * c]).collect();
        let k = kinematics_from_positions(&t, &scaled, &cfg).unwrap();
        let vmax = base.vel.iter().flatten().fold(1e-12f64, |m, v| m.max(v.abs()));
        let amax = base.acc.iter().flatten().fold(1e-12f64, |m, v| m.max(v.abs()));
        for i in 0..ys.len() {
            for a in 0..2 {
                prop_assert!((k.vel[i][a] - c * base.vel[i][a]).abs() <= 1e-12 * c * vmax);
                prop_assert!((k.acc[i][a] - c * base.acc[i][a]).abs() <= 1e-12 * c * amax);
            }
        }
    }

    #[test]
    fn velocity_length_is_preserved(v in prop::collection::vec(-5.0f64..5.0, 7..40)) {
        let t = grid(v.len(), 0.0, 0.01);
        prop_assert_eq!(estimate_velocity(&v, &t, &KinematicsConfig::default()).unwrap().len(), v.len());
    }

    #[test]
    fn scores_lie_in_unit_interval(v in prop::collection::vec(-1e3f64..1e3, 4..80), reference: bool) {
        let cfg = ScoreConfig::default();
        let s = series(v);
        let all = window_scores(&s, &cfg, reference).unwrap();
        let best = invariance_score(&s, &cfg, reference).unwrap();
        prop_assert!(all.iter().all(|w| *w > 0.0 && *w <= 1.0));
        // Window-max property.
        prop_assert!(all.iter().all(|w| *w <= best));
        prop_assert!(all.contains(&best));
    }

    #[test]
    fn relative_branch_is_scale_invariant(
        offset in 5.0f64..50.0, wiggle in prop::collection::vec(-0.1f64..0.1, 8..60), c in 0.001f64..1000.0
    ) {
        // |mean| >= 10 sigma in every window because |wiggle| <= 0.1 << offset.
        let v: Vec<f64> = wiggle.iter().map(|w| offset + w).collect();
        let cfg = ScoreConfig::default();
        let a = invariance_score(&series(v.clone()), &cfg, false).unwrap();
        let b = invariance_score(&series(v.iter().map(|x| x * c).collect()), &cfg, false).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn constant_series_scores_one(c in -1e3f64..1e3, n in 4usize..50) {
        prop_assert!(1.0 - window_score(&vec![c; n], &ScoreConfig::default()) < 1e-12);
    }

    #[test]
    fn aggregate_is_arithmetic_mean(s in prop::collection::vec(0.0f64..=1.0, 1..6)) {
        let a = aggregate_scores(&s);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        prop_assert!((a - mean).abs() <= 1e-12);
        let (lo, hi) = s.iter().fold((1.0f64, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        prop_assert!(a >= lo - 1e-15 && a <= hi + 1e-15);
    }

    #[test]
    fn nmse_and_score_bounds(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40)
    ) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(e) = nmse(&pred, &truth) {
            prop_assert!(e >= 0.0);
            let s = dynamical_score(e);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s == 1.0, e == 0.0);
        }
        if let Ok(e) = nmse(&truth, &truth) {
            prop_assert_eq!(e, 0.0);
            prop_assert_eq!(dynamical_score(e), 1.0);
        }
    }

    #[test]
    fn discard_rate_partitions(reasons in prop::collection::vec(0u8..4, 1..50)) {
        let verdicts: Vec<GateVerdict> = reasons
            .iter()
            .map(|r| GateVerdict::from_reason(match r {
                0 => GateReason::Kept,
                1 => GateReason::Disappear,
                2 => GateReason::Duplicate,
                _ => GateReason::Still,
            }))
            .collect();
        let (rate, c) = discard_rate(&verdicts).unwrap();
        prop_assert_eq!(c.total, verdicts.len());
        prop_assert_eq!(c.discarded(), verdicts.iter().filter(|v| !v.kept).count());
        prop_assert_eq!(rate, (c.disappear + c.duplicate + c.still) as f64 / c.total as f64);
        prop_assert!((0.0..=1.0).contains(&rate));
    }

    #[test]
    fn gate_is_scale_invariant(
        seed in 0u64..1000, hidden in 0usize..8, dup in 0usize..30, freeze: bool, c in 0.01f64..500.0
    ) {
        let mut traj = simulate(&SimSpec { seed, noise_sigma: 1e-3, ..SimSpec::new(ExperimentKind::Projectile) }).unwrap();
        if freeze {
            traj = corrupt(&traj, &Corruption::Freeze { start_t: 0.02 }, 0).unwrap();
        }
        for s in traj.samples.iter_mut().take(hidden) {
            s.visible = false;
            s.object_count = 0;
        }
        for s in traj.samples.iter_mut().rev().take(dup) {
            s.object_count = 2;
        }
        let cfg = GateConfig::default();
        let scaled_cfg = GateConfig { frame_diagonal: cfg.frame_diagonal * c, ..cfg.clone() };
        prop_assert_eq!(gate(&traj, &cfg).unwrap(), gate(&traj.scaled(c), &scaled_cfg).unwrap());
    }

    #[test]
    fn trajectory_files_round_trip_bit_identically(
        rows in prop::collection::vec((1e-6f64..0.1, -1e4f64..1e4, -1e4f64..1e4, any::<bool>(), 0u32..4), 1..40),
        pixels: bool, joint: bool
    ) {
        let mut t = 0.0;
        let samples: Vec<Sample> = rows
            .iter()
            .map(|&(dt, x, y, visible, count)| {
                t += dt;
                Sample { t, x, y, visible, object_count: if visible { count.max(1) } else { count } }
            })
            .collect();
        let n = samples.len();
        let traj = Trajectory {
            joint: joint.then(|| samples.iter().map(|s| [s.x / 3.0, s.y / 7.0]).collect()),
            samples,
            fps: 59.94,
            unit: if pixels { Unit::Pixels } else { Unit::Meters },
            pixels_per_meter: pixels.then_some(312.5),
            y_axis: if pixels { YAxis::Down } else { YAxis::Up },
            experiment: ExperimentKind::DoublePendulum,
            pivot: Some([0.1, 1.0 / 3.0]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = physinv_core::bench::write_trajectory(&traj, dir.path(), "rt").unwrap();
        let back = read_trajectory(&path).unwrap();
        prop_assert_eq!(back.len(), n);
        prop_assert_eq!(&back, &traj);
        prop_assert_eq!(trajectory_csv(&back), std::fs::read_to_string(&path).unwrap());
    }
}

#[test]
fn more_noise_never_raises_acceleration_score() {
    let base = simulate(&SimSpec::new(ExperimentKind::FallingBall)).unwrap();
    let sigmas = [0.0, 1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3];
    let spec = physinv_core::ExperimentSpec::new(ExperimentKind::FallingBall);
    let means: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            (0..20u64)
                .map(|seed| {
                    let t = corrupt(&base, &Corruption::AdditiveNoise { sigma }, seed).unwrap();
                    physinv_core::invariants::physical_invariance(
                        &t,
                        &spec,
                        &KinematicsConfig::default(),
                        &ScoreConfig::default(),
                        false,
                    )
                    .unwrap()
                    .components[1]
                        .score
                })
                .sum::<f64>()
                / 20.0
        })
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}

#[test]
fn kinematics_of_pixel_trajectory_match_metric() {
    let spec = SimSpec::new(ExperimentKind::Projectile);
    let metric = simulate(&spec).unwrap();
    let px = simulate(&SimSpec {
        output: physinv_core::simulate::OutputFrame::Pixels {
            pixels_per_meter: 250.0,
            origin: [100.0, 600.0],
        },
        ..spec
    })
    .unwrap();
    let cfg = KinematicsConfig::default();
    let (a, b) = (
        estimate_kinematics(&metric, &cfg).unwrap(),
        estimate_kinematics(&px, &cfg).unwrap(),
    );
    for (u, v) in a.acc.iter().zip(&b.acc) {
        assert!((u[1] - v[1]).abs() < 1e-6 * u[1].abs().max(1.0));
    }
}
