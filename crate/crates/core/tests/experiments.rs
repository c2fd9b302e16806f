use std::f64::consts::{PI, TAU};

use spinarray_core::experiments::{
    run_cascade_calibration, run_chevron, run_cz_calibration, run_exchange_spectroscopy, run_feedback, run_fingerprint,
    run_hahn, run_ramsey_purity, Sampling,
};
use spinarray_core::{Backend, Config, ExperimentKind, ExperimentOutput, ExperimentSpec, ReadoutMode};

fn circular(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn exact(mut spec: ExperimentSpec) -> ExperimentSpec {
    spec.backend = Backend::Analytic;
    spec.sampling = Sampling::Expectation;
    spec
}

fn row_at<'a>(out: &'a ExperimentOutput, pred: impl Fn(&[f64]) -> bool) -> &'a [f64] {
    out.rows.iter().find(|r| pred(r)).expect("row present")
}

#[test]
fn chevron_pi_pulse_node_and_symmetry() {
    let mut cfg = Config::bundled();
    cfg.device.qubits[1].rabi_frequency = 200e3;
    let shots = 400;
    let spec = ExperimentSpec { shots, ..ExperimentSpec::new(ExperimentKind::Chevron, 2).with_seed(3) }
        .with_axis("detuning", -400e3, 400e3, 9)
        .with_axis("duration", 0.0, 10e-6, 41);
    let out = run_chevron(&cfg, &spec).unwrap();
    let at = |d: f64, t: f64| row_at(&out, |r| (r[0] - d).abs() < 1.0 && (r[1] - t).abs() < 1e-9)[2];
    assert!(at(0.0, 2.5e-6) > 0.95, "pi pulse {}", at(0.0, 2.5e-6));
    assert!(at(0.0, 5e-6) < 0.05, "node {}", at(0.0, 5e-6));
    // Δ = ±fR mirror points agree within 3σ of the binomial difference
    for k in 0..41 {
        let t = 10e-6 * k as f64 / 40.0;
        let (a, b) = (at(200e3, t), at(-200e3, t));
        let p = 0.5 * (a + b);
        let sigma = (2.0 * (p * (1.0 - p)).max(1.0 / shots as f64) / shots as f64).sqrt();
        assert!((a - b).abs() <= 3.0 * sigma + 1e-12, "t = {t}: {a} vs {b}");
    }
    let fr = out.summary["rabi_frequency_fit"];
    assert!((fr / 200e3 - 1.0).abs() < 0.03, "{fr}");
}

#[test]
fn ramsey_envelope_points() {
    let mut cfg = Config::bundled();
    cfg.sensor.sigma_signal = 0.0;
    let spec = exact(ExperimentSpec::new(ExperimentKind::RamseyPurity, 1)).with_axis("delay", 0.0, 164e-6, 5);
    let out = run_ramsey_purity(&cfg, &spec).unwrap();
    assert!((out.rows[0][1] - 1.0).abs() < 1e-9);
    assert!((out.rows[1][1] - (-1.0f64).exp()).abs() < 1e-9, "{}", out.rows[1][1]);
    assert!((out.summary["t2_star_fit"] / 41e-6 - 1.0).abs() < 1e-6);
}

#[test]
fn ramsey_bloch_length_within_statistical_bound() {
    let cfg = Config::bundled();
    let spec = cfg.experiment("ramsey-q3").unwrap();
    let out = run_ramsey_purity(&cfg, spec).unwrap();
    let bound = 1.0 + 3.0 / (spec.shots() as f64).sqrt();
    let norms: Vec<f64> = out.rows.iter().map(|r| (r[2] * r[2] + r[3] * r[3] + r[4] * r[4]).sqrt()).collect();
    assert!(norms.iter().all(|&n| n <= bound), "{norms:?}");
    assert!((out.rows[0][6] - 1.0).abs() < 0.05, "delay 0 purity {}", out.rows[0][6]);
}

#[test]
fn quasi_static_noise_gives_flat_echo() {
    let cfg = Config::bundled();
    let mut spec = ExperimentSpec::new(ExperimentKind::Hahn, 1).with_seed(4);
    spec.params.drift = false;
    let out = run_hahn(&cfg, &spec).unwrap();
    let ceiling = cfg.sensor.expected_visibility(0, ReadoutMode::Direct).unwrap();
    for r in &out.rows {
        assert!((r[1] - ceiling).abs() < 0.05, "delay {}: amplitude {}", r[0], r[1]);
    }
    assert!(out.summary["t2_hahn_fit"].is_infinite());
    assert!(!out.warnings.is_empty());
}

#[test]
fn echo_outlives_ramsey() {
    let cfg = Config::bundled();
    for q in [1, 6] {
        let star = run_ramsey_purity(&cfg, cfg.experiment(&format!("ramsey-q{q}")).unwrap()).unwrap();
        let hahn = run_hahn(&cfg, cfg.experiment(&format!("hahn-q{q}")).unwrap()).unwrap();
        assert!(hahn.summary["t2_hahn_fit"] >= star.summary["t2_star_fit"]);
    }
}

fn oracle_phase(cfg: &Config, vj: f64, eps: f64, wait: f64) -> f64 {
    let m = &cfg.exchange;
    let j = m.j0 * 10f64.powf(m.slope * (vj - m.v0)) * (eps / m.eps_scale).exp();
    PI * j.min(m.j_max) * wait
}

#[test]
fn fingerprint_matches_exchange_oracle() {
    let cfg = Config::bundled();
    let out = run_fingerprint(&cfg, cfg.experiment("fingerprint").unwrap()).unwrap();
    let vmin = out.rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
    let mut excluded = 0;
    for r in &out.rows {
        if r[5] == 0.0 {
            assert!(r[3].is_nan());
            excluded += 1;
            continue;
        }
        let want = oracle_phase(&cfg, r[0], r[1], 1e-6);
        assert!(circular(r[3], want) < 1e-6, "({}, {}): {} vs {want}", r[0], r[1], r[3]);
        if r[0] == vmin {
            assert!(circular(r[3], 0.0) < 1e-3, "J -> 0 corner phase {}", r[3]);
        }
    }
    assert!(excluded > 0);
    assert_eq!(out.summary["excluded_points"], excluded as f64);
}

#[test]
fn fingerprint_phase_increases_with_detuning() {
    let cfg = Config::bundled();
    let v0 = cfg.exchange.v0;
    let spec = exact(ExperimentSpec::new(ExperimentKind::Fingerprint, 3))
        .with_axis("vj", v0 - 0.08, v0 - 0.01, 8)
        .with_axis("eps", -0.04, 0.04, 21);
    let out = run_fingerprint(&cfg, &spec).unwrap();
    for chunk in out.rows.chunks(21) {
        let vj = chunk[0][0];
        assert!(chunk.iter().all(|r| r[0] == vj));
        let phases: Vec<f64> = chunk.iter().map(|r| r[3]).collect();
        assert!(phases.windows(2).all(|w| w[1] > w[0]), "vj {vj}: {phases:?}");
    }
}

/// Iso-phase contours `φ = 2πk` sit at `log10(2k / (j0·t))/slope` above `v0`.
#[test]
fn fingerprint_contour_spacing_follows_slope() {
    let cfg = Config::bundled();
    let m = &cfg.exchange;
    let wait = 1e-6;
    let spec = exact(ExperimentSpec::new(ExperimentKind::Fingerprint, 1))
        .with_axis("vj", m.v0 + 0.02, m.v0 + 0.06, 801)
        .with_axis("eps", 0.0, 0.0, 2);
    let out = run_fingerprint(&cfg, &spec).unwrap();
    let rows: Vec<&Vec<f64>> = out.rows.iter().filter(|r| r[1] == 0.0).step_by(2).collect();
    let mut unwrapped = vec![rows[0][3]];
    for w in rows.windows(2) {
        let mut d = w[1][3] - w[0][3];
        d -= TAU * (d / TAU).round();
        unwrapped.push(unwrapped.last().unwrap() + d);
    }
    let offset = TAU * ((oracle_phase(&cfg, rows[0][0], 0.0, wait) - unwrapped[0]) / TAU).round();
    let mut found = 0;
    for k in 1..=5 {
        let target = TAU * k as f64 - offset;
        let Some(i) = unwrapped.windows(2).position(|w| w[0] < target && w[1] >= target) else { continue };
        let (a, b) = (unwrapped[i], unwrapped[i + 1]);
        let v = rows[i][0] + (rows[i + 1][0] - rows[i][0]) * (target - a) / (b - a);
        let want = m.v0 + (2.0 * k as f64 / (m.j0 * wait)).log10() / m.slope;
        assert!((v - want).abs() < 1e-5, "contour {k}: {v} vs {want}");
        found += 1;
    }
    assert!(found >= 3);
}

#[test]
fn spectroscopy_phase_doubles_with_time_and_drops_unresolved() {
    let cfg = Config::bundled();
    let spec = exact(ExperimentSpec::new(ExperimentKind::ExchangeSpectroscopy, 2));
    let out = run_exchange_spectroscopy(&cfg, &spec).unwrap();
    let table = &out.tables["phases"];
    let times = spec.axis(&cfg, "time").unwrap().values();
    let span = times[times.len() - 1] - times[0];
    for row in &out.rows {
        let (vj, j_model, included) = (row[0], row[3], row[4]);
        let acc: Vec<f64> = table.rows.iter().filter(|r| r[0] == vj).map(|r| r[2]).collect();
        for k in 1..acc.len() / 2 {
            assert!((acc[2 * k] - 2.0 * acc[k]).abs() < 1e-6, "vj {vj}, k {k}: {} vs {}", acc[2 * k], acc[k]);
        }
        assert_eq!(included == 1.0, 0.5 * j_model * span >= 1.0, "vj {vj}: J {j_model}");
    }
    assert!(out.summary["included_points"] < out.rows.len() as f64);
    assert!((out.summary["slope_fit"] - 33.69).abs() < 0.05);
}

#[test]
fn spectroscopy_needs_three_resolved_points() {
    let cfg = Config::bundled();
    let v0 = cfg.exchange.v0;
    let spec =
        exact(ExperimentSpec::new(ExperimentKind::ExchangeSpectroscopy, 2)).with_axis("vj", v0 - 0.2, v0 - 0.1, 5);
    assert!(run_exchange_spectroscopy(&cfg, &spec).is_err());
}

fn cz_spec(cfg: &Config) -> ExperimentSpec {
    cfg.experiment("cz-calibration").unwrap().clone()
}

#[test]
fn cz_corrections_equal_model_single_qubit_phase() {
    let cfg = Config::bundled();
    let out = run_cz_calibration(&cfg, &cz_spec(&cfg)).unwrap();
    let s = &out.summary;
    let model = PI * s["exchange"] * s["gate_duration"];
    assert!((model - PI / 2.0).abs() < 1e-9);
    assert!(circular(s["correction_target"], model) < 1e-3, "{}", s["correction_target"]);
    assert!(circular(s["correction_control"], model) < 1e-3, "{}", s["correction_control"]);
    assert!(s["even_repetition_identity_error"] < 1e-9);
    assert!(s["conditional_phase_error_deg"].abs() < 1.0);
}

#[test]
fn cz_calibration_is_a_fixed_point() {
    let cfg = Config::bundled();
    let mut spec = cz_spec(&cfg);
    let first = run_cz_calibration(&cfg, &spec).unwrap().summary;
    // bundled CZ targets qubit 2: the right dot of the first cell
    spec.params.cz_precorrection = Some([first["correction_control"], first["correction_target"]]);
    let second = run_cz_calibration(&cfg, &spec).unwrap().summary;
    assert!(circular(second["correction_target"], 0.0) < 1e-3, "{}", second["correction_target"]);
    assert!(circular(second["correction_control"], 0.0) < 1e-3, "{}", second["correction_control"]);
    assert!((second["conditional_phase"].abs() - PI).abs() < 1e-6);
}

#[test]
fn cz_line_cuts_are_complementary() {
    let cfg = Config::bundled();
    let out = run_cz_calibration(&cfg, &cz_spec(&cfg)).unwrap();
    let slopes = &out.tables["slopes"];
    let chosen = out.summary["correction_target"];
    // slope of phase per repetition rises by one radian per radian of correction
    for r in &slopes.rows {
        let expected = (r[0] - chosen + PI).rem_euclid(TAU) - PI;
        if (expected.abs() - PI).abs() > 0.3 {
            assert!(
                (r[1] - expected).abs() < 1e-3 && (r[2] - expected).abs() < 1e-3,
                "correction {}: slope {} vs {expected}",
                r[0],
                r[1]
            );
        }
    }
}

#[test]
fn cascade_visibility_tracks_arming_window() {
    let cfg = Config::bundled();
    let spec = cfg.experiment("cascade-calibration").unwrap();
    let out = run_cascade_calibration(&cfg, spec).unwrap();
    let half = spec.shots() as f64 / 2.0;
    let sigma = (0.5 / half).sqrt();
    let center = cfg.sensor.cascade_center;
    let centre_row = out.rows.iter().min_by(|a, b| (a[0] - center).abs().total_cmp(&(b[0] - center).abs())).unwrap();
    assert_eq!(centre_row[2], 1.0);
    let far = out.rows.iter().max_by(|a, b| (a[0] - center).abs().total_cmp(&(b[0] - center).abs())).unwrap();
    assert_eq!(far[2], 0.0);
    for r in &out.rows {
        assert!((r[1] - r[3]).abs() < 4.0 * sigma, "eps {}: visibility {} vs {}", r[0], r[1], r[3]);
    }
    assert!(out.summary["cascaded_visibility"] > out.summary["direct_visibility"]);
    assert_eq!(out.summary["charge_conserved"], 1.0);
}

#[test]
fn cascade_requires_central_qubit() {
    let cfg = Config::bundled();
    let spec = ExperimentSpec::new(ExperimentKind::CascadeCalibration, 1);
    assert!(run_cascade_calibration(&cfg, &spec).is_err());
}

fn quiet_feedback() -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(ExperimentKind::FeedbackDemo, 1).with_seed(5);
    spec.noise = false;
    spec.sampling = Sampling::Expectation;
    spec.params.larmor_step = 0.0;
    spec.params.set_step = 0.0;
    spec.params.set_noise = 0.0;
    spec
}

#[test]
fn feedback_without_drift_never_corrects() {
    let cfg = Config::bundled();
    let out = run_feedback(&cfg, &quiet_feedback()).unwrap();
    assert!(out.summary["max_abs_correction"] < 1e-6);
    assert!(out.rows.iter().all(|r| r[7].abs() < 1e-6));
    assert_eq!(out.summary["lock_lost_events"], 0.0);
}

#[test]
fn feedback_flags_lock_loss_on_large_step() {
    let cfg = Config::bundled();
    let mut spec = quiet_feedback();
    spec.params.cycles = 40;
    spec.params.inject_cycle = Some(10);
    spec.params.inject_step = 3.0 / (4.0 * spec.params.probe_time);
    let out = run_feedback(&cfg, &spec).unwrap();
    assert!(out.summary["lock_lost_events"] >= 1.0);
    assert_eq!(out.rows[10][5], 1.0);
    assert!(out.rows[..10].iter().all(|r| r[5] == 0.0));
    assert!(out.warnings.iter().any(|w| w.contains("lock lost")));
}

#[test]
fn feedback_bounds_random_walk() {
    let cfg = Config::bundled();
    let spec = cfg.experiment("feedback").unwrap();
    let out = run_feedback(&cfg, spec).unwrap();
    let s = &out.summary;
    assert!(s["larmor_rms_residual"] < 3.0 * spec.params.larmor_step, "{}", s["larmor_rms_residual"]);
    assert!(s["larmor_rms_residual"] < s["larmor_rms_uncorrected"]);
    assert!(s["set_rms_error"] < s["set_rms_uncorrected"]);
    assert_eq!(s["lock_lost_events"], 0.0);
}

#[test]
fn shot_records_are_deterministic() {
    let cfg = Config::bundled();
    let spec = ExperimentSpec {
        record_shots: true,
        shots: 20,
        ..ExperimentSpec::new(ExperimentKind::Chevron, 1).with_seed(9)
    }
    .with_axis("detuning", -300e3, 300e3, 5)
    .with_axis("duration", 0.0, 8e-6, 9);
    let a = run_chevron(&cfg, &spec).unwrap();
    let b = run_chevron(&cfg, &spec).unwrap();
    assert_eq!(a.records.len(), 5 * 9 * 20);
    assert_eq!(a.records, b.records);
    assert_eq!(a.rows, b.rows);
    let c = run_chevron(&cfg, &spec.clone().with_seed(10)).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn lateral_and_central_differ_only_in_sensing() {
    let mut cfg = Config::bundled();
    cfg.sensor.sigma_signal = 0.0;
    let (q1, q2) = (cfg.device.qubits[0].clone(), cfg.device.qubits[1].clone());
    for (dot, src) in [(2, &q1), (3, &q2)] {
        let q = &mut cfg.device.qubits[dot];
        q.g_factor = src.g_factor;
        q.rabi_frequency = src.rabi_frequency;
        q.t2_star = src.t2_star;
        q.t2_hahn = src.t2_hahn;
    }
    let spec = |qubit| {
        ExperimentSpec {
            record_shots: true,
            shots: 30,
            ..ExperimentSpec::new(ExperimentKind::Chevron, qubit).with_seed(2)
        }
        .with_axis("detuning", -300e3, 300e3, 5)
        .with_axis("duration", 0.0, 8e-6, 9)
    };
    let lateral = run_chevron(&cfg, &spec(1)).unwrap();
    let central = run_chevron(&cfg, &spec(3)).unwrap();
    let hits = |o: &ExperimentOutput| o.records.iter().map(|r| (r.point.clone(), r.shot, r.hit)).collect::<Vec<_>>();
    assert_eq!(hits(&lateral), hits(&central));
    assert!(lateral.records.iter().all(|r| r.mode == ReadoutMode::Direct));
    assert!(central.records.iter().all(|r| r.mode == ReadoutMode::Cascaded));
    let signals = |o: &ExperimentOutput| o.records.iter().map(|r| r.outcome.unwrap().raw_signal).collect::<Vec<_>>();
    assert_ne!(signals(&lateral), signals(&central));
}
