//! Acceptance criteria. Runs as a plain binary (`harness = false`) and prints
//! one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinsqz_core::estimators::{
    circle_fit, fit_spin_spectrum, fit_t1, fit_t2, resonator_rates, BackgroundModel, ComplexSpectrum, ResidualKind,
    SpinSpectrumMap,
};
use spinsqz_core::experiments::{
    efficiency_map, predict_squeezing, AxisSpec, ReferenceRow, Scenario, ScenarioTag, SqueezingReferenceTable,
    SweepParam,
};
use spinsqz_core::hybrid::{
    cooperativity, scatter_coefficients, transfer_efficiency, variance_from_db, CovarianceState, HybridParams,
};
use spinsqz_core::spin::{resonance_field, spin_levels, transition_frequency, SpinSystem, Transition};
use spinsqz_core::synth;
use spinsqz_core::tomography::{moments, purity, reconstruct_gaussian, PlanckCalibration};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn rel(value: f64, target: f64) -> f64 {
    ((value - target) / target).abs()
}

fn paper() -> HybridParams {
    HybridParams::default()
}

fn c1_transfer_efficiency() -> Outcome {
    let p = paper();
    let start = Instant::now();
    let t2 = transfer_efficiency(&p, 0.0).map_err(|e| e.to_string())?;
    let dt = start.elapsed();
    check(
        within(t2, 0.606, 0.005) && dt < Duration::from_millis(1),
        format!("|t(0)|^2 = {t2:.5} (target 0.606 +- 0.005, ~61 %), {dt:?}"),
    )
}

fn c2_cooperativity() -> Outcome {
    let c = cooperativity(&paper());
    check(within(c, 0.31, 0.01), format!("C = {c:.5} (target 0.31 +- 0.01)"))
}

fn c3_sum_rule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let mut draw = || 10f64.powf(rng.random_range(3.0..8.0));
        let p = HybridParams {
            kappa_ext: draw(),
            kappa_int: draw(),
            g_eff: draw(),
            gamma_s: draw(),
            ..paper()
        };
        let c = scatter_coefficients(&p, 0.0).map_err(|e| e.to_string())?;
        worst = worst.max((c.sum_rule() - 1.0).abs());
    }
    let detuned = scatter_coefficients(&paper().with_delta_sr(9.2e6), 0.0).map_err(|e| e.to_string())?;
    let dev = (detuned.sum_rule() - 1.0).abs();
    check(
        worst < 1e-12 && dev < 3e-3,
        format!(
            "max |sum-1| over 1e4 random rates = {worst:.2e}; at 9.2 MHz sum = {:.5}",
            detuned.sum_rule()
        ),
    )
}

fn c4_squeezing_predictions() -> Outcome {
    let start = Instant::now();
    let table = SqueezingReferenceTable::new(vec![ReferenceRow {
        pump_power: -35.0,
        sigma_sq: 0.0740,
        sigma_as: 1.0,
    }])
    .map_err(|e| e.to_string())?;
    let p = paper();
    let rr =
        predict_squeezing(&table, &p, &Scenario::new(ScenarioTag::ResonatorResonant)).map_err(|e| e.to_string())?;
    let fr = predict_squeezing(&table, &p, &Scenario::new(ScenarioTag::FullyResonant)).map_err(|e| e.to_string())?;
    let dt = start.elapsed();
    let (s_rr, s_fr) = (rr[0].squeezing_db, fr[0].squeezing_db);
    check(
        within(s_rr, 1.47, 0.2) && within(s_fr, 0.12, 0.2) && dt < Duration::from_secs(1),
        format!(
            "resonator-resonant S = {s_rr:.3} dB (1.47 +- 0.2), fully-resonant S = {s_fr:.3} dB (0.12 +- 0.2), {dt:?}"
        ),
    )
}

fn c5_optimal_coupling() -> Outcome {
    // κ_ext at 1 kHz resolution, κ_int log-spaced down to 0.1 kHz.
    let p = paper();
    let x = AxisSpec::linear(SweepParam::KappaExt, 0.01e6, 2e6, 1991);
    let y = AxisSpec::log(SweepParam::KappaInt, 1e2, 1e6, 201);
    let m = efficiency_map(&p, &x, &y, None).map_err(|e| e.to_string())?;
    let (ke, ki) = m.argmax;
    let map_ok = m.efficiency_at_max >= 0.999
        && within(m.cooperativity_at_max, 1.0, 0.005)
        && within(ke, 556e3, 5e3)
        && ki <= 1e3;
    let bound_ok = m.efficiency_at_max <= ke / (ke + ki) + 1e-12;

    // Analytic optimum against a fine g_eff grid on random parameter sets.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_val: f64 = 0.0;
    let mut worst_arg: f64 = 0.0;
    for _ in 0..50 {
        let mut draw = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        let q = HybridParams {
            kappa_ext: draw(5.0, 7.0),
            kappa_int: draw(3.0, 6.5),
            gamma_s: draw(4.0, 7.0),
            ..p
        };
        let g_opt = (q.gamma_s * q.kappa()).sqrt();
        let n = 100_001;
        let gx = AxisSpec::linear(SweepParam::GEff, 0.0, 2.0 * g_opt, n);
        let gy = AxisSpec::linear(SweepParam::GammaS, q.gamma_s, q.gamma_s, 1);
        let gm = efficiency_map(&q, &gx, &gy, None).map_err(|e| e.to_string())?;
        let step = 2.0 * g_opt / (n - 1) as f64;
        worst_val = worst_val.max((gm.efficiency_at_max - q.kappa_ext / q.kappa()).abs());
        worst_arg = worst_arg.max((gm.argmax.0 - g_opt).abs() / step);
    }
    check(
        map_ok && bound_ok && worst_val < 1e-9 && worst_arg <= 1.0,
        format!(
            "argmax kappa_ext = {:.1} kHz, kappa_int = {:.2} kHz, efficiency = {:.5}, C = {:.4}; \
             analytic optimum: max |grid - kext/k| = {worst_val:.1e}, argmax within {worst_arg:.2} grid steps",
            ke / 1e3,
            ki / 1e3,
            m.efficiency_at_max,
            m.cooperativity_at_max
        ),
    )
}

fn paper_background() -> BackgroundModel {
    BackgroundModel {
        a_mw: 0.021,
        alpha: 1.585,
        tau: 97.35e-9,
        phi: -0.002,
        q_ext_mag: 1900.0,
        q_loaded: 1586.0,
        f_r: 5.645e9,
    }
}

fn circle_errors(fit: &BackgroundModel, truth: &BackgroundModel) -> [(&'static str, f64); 7] {
    [
        ("a", rel(fit.a_mw, truth.a_mw)),
        ("alpha", rel(fit.alpha, truth.alpha)),
        ("tau", rel(fit.tau, truth.tau)),
        ("Q_ext", rel(fit.q_ext_mag, truth.q_ext_mag)),
        ("Q_l", rel(fit.q_loaded, truth.q_loaded)),
        ("phi", rel(fit.phi, truth.phi)),
        ("f_r", rel(fit.f_r, truth.f_r)),
    ]
}

fn c6_circle_fit() -> Outcome {
    let start = Instant::now();
    let bg = paper_background();
    let freqs: Vec<f64> = (0..401).map(|k| bg.f_r - 20e6 + 40e6 * k as f64 / 400.0).collect();
    let clean = ComplexSpectrum::from_fn(freqs.clone(), |f| bg.eval(f)).map_err(|e| e.to_string())?;
    let (fit0, _) = circle_fit(&clean).map_err(|e| e.to_string())?;
    let noisy =
        synth::resonator_spectrum(&bg, freqs, synth::noise_for_snr(bg.a_mw, 40.0), 6).map_err(|e| e.to_string())?;
    let (fit1, _) = circle_fit(&noisy).map_err(|e| e.to_string())?;
    let rates = resonator_rates(&fit1).map_err(|e| e.to_string())?;
    let dt = start.elapsed();

    let e0 = circle_errors(&fit0, &bg);
    let e1 = circle_errors(&fit1, &bg);
    let worst0 = e0.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let worst1 = e1.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let k_ok = rel(rates.kappa, 1.78e6) <= 0.01 && rel(rates.kappa_ext, 1.49e6) <= 0.01;
    let failing: Vec<String> = e1
        .iter()
        .filter(|e| e.1 > 0.01)
        .map(|e| format!("{} {:.2}%", e.0, 100.0 * e.1))
        .collect();
    check(
        worst0.1 <= 1e-3 && worst1.1 <= 1e-2 && k_ok && dt < Duration::from_secs(5),
        format!(
            "noiseless worst {} {:.1e}; 40 dB worst {} {:.2e}{}; kappa = {:.4} MHz, kappa_ext = {:.4} MHz, {dt:?}",
            worst0.0,
            worst0.1,
            worst1.0,
            worst1.1,
            if failing.is_empty() {
                String::new()
            } else {
                format!(" (above 1 %: {})", failing.join(", "))
            },
            rates.kappa / 1e6,
            rates.kappa_ext / 1e6
        ),
    )
}

fn c7_spin_fit() -> Outcome {
    let start = Instant::now();
    let p = paper();
    let rates = spinsqz_core::estimators::ResonatorRates {
        f_r: p.f_r,
        kappa: p.kappa(),
        kappa_ext: p.kappa_ext,
    };
    let probe: Vec<f64> = (0..101).map(|k| p.f_r - 5e6 + 10e6 * k as f64 / 100.0).collect();
    let det: Vec<f64> = (0..41).map(|k| -10e6 + 20e6 * k as f64 / 40.0).collect();
    let clean = SpinSpectrumMap::synthesize(&p, probe.clone(), det.clone()).map_err(|e| e.to_string())?;
    let f0 = fit_spin_spectrum(&clean, &rates, ResidualKind::Complex).map_err(|e| e.to_string())?;
    let noisy = synth::spin_map(&p, probe, det, 0.01, 7).map_err(|e| e.to_string())?;
    let f1 = fit_spin_spectrum(&noisy, &rates, ResidualKind::Complex).map_err(|e| e.to_string())?;
    let dt = start.elapsed();
    let e0 = (rel(f0.gamma_s, 382e3), rel(f0.g_eff, 460e3));
    let e1 = (rel(f1.gamma_s, 382e3), rel(f1.g_eff, 460e3));
    check(
        e0.0 <= 5e-3 && e0.1 <= 5e-3 && e1.0 <= 0.05 && e1.1 <= 0.05 && dt < Duration::from_secs(30),
        format!(
            "noiseless gamma_s err {:.1e}, g_eff err {:.1e}; 1 % noise gamma_s = {:.1} kHz, g_eff = {:.1} kHz, {dt:?}",
            e0.0,
            e0.1,
            f1.gamma_s / 1e3,
            f1.g_eff / 1e3
        ),
    )
}

fn c8_decay_fits() -> Outcome {
    let (t2_true, a2, c2) = (2.16e-3, 1.0, 0.02);
    let t2_model = move |t: f64| a2 * (-2.0 * t / t2_true).exp() + c2;
    let delays2: Vec<f64> = (0..30).map(|k| 20e-6 + k as f64 * 0.1e-3).collect();
    let (t1_true, a1, k1) = (85.49, 1.0, 0.95);
    let t1_model = move |t: f64| a1 * (1.0 - 2.0 * k1 * (-t / t1_true).exp());
    let delays1: Vec<f64> = (0..25).map(|i| 0.5 * 1.25f64.powi(i)).collect();

    let err = |e: spinsqz_core::Error| e.to_string();
    let (t2_0, _) = fit_t2(&synth::decay_series(delays2.clone(), t2_model, 0.0, 0).map_err(err)?).map_err(err)?;
    let (t1_0, _) = fit_t1(&synth::decay_series(delays1.clone(), t1_model, 0.0, 0).map_err(err)?).map_err(err)?;
    let exact = rel(t2_0, t2_true) <= 1e-9 && rel(t1_0, t1_true) <= 1e-9;

    // Noise level chosen so the fitted 1σ is at most the quoted uncertainty.
    let (t2_n, f2) = fit_t2(&synth::decay_series(delays2, t2_model, 0.01, 8).map_err(err)?).map_err(err)?;
    let (t1_n, f1) = fit_t1(&synth::decay_series(delays1, t1_model, 0.003, 8).map_err(err)?).map_err(err)?;
    let s2 = f2.uncertainty("T2").unwrap_or(f64::INFINITY);
    let s1 = f1.uncertainty("T1").unwrap_or(f64::INFINITY);
    let noisy = (t2_n - t2_true).abs() <= 0.11e-3 && (t1_n - t1_true).abs() <= 0.99 && s2 <= 0.11e-3 && s1 <= 0.99;
    check(
        exact && noisy,
        format!(
            "noiseless rel err T2 {:.1e}, T1 {:.1e}; noisy T2 = {:.3} +- {:.3} ms, T1 = {:.2} +- {:.2} s",
            rel(t2_0, t2_true),
            rel(t1_0, t1_true),
            t2_n * 1e3,
            s2 * 1e3,
            t1_n,
            s1
        ),
    )
}

fn c9_tomography() -> Outcome {
    let start = Instant::now();
    let angle = 30f64.to_radians();
    let truth = CovarianceState::squeezed(variance_from_db(5.29), 1.0, angle);
    // Unit gain and no added noise at the HEMT input.
    let calib = PlanckCalibration::new(1.0, 0.0, 5.645e9)
        .map_err(|e| e.to_string())?
        .with_path_loss_db(0.0);
    let samples = synth::iq_samples(&truth, &calib, 1_000_000, 9).map_err(|e| e.to_string())?;
    let m = moments(&samples).map_err(|e| e.to_string())?;
    let r = reconstruct_gaussian(&m, &calib).map_err(|e| e.to_string())?;
    let dt = start.elapsed();
    let s = r.squeezing_db.unwrap_or(f64::NAN);
    let mu_true = purity(&truth).map_err(|e| e.to_string())?;
    let mu = r.purity.unwrap_or(f64::NAN);
    check(
        within(s, 5.29, 0.05)
            && within(r.angle.to_degrees(), 30.0, 0.5)
            && rel(mu, mu_true) <= 0.01
            && dt < Duration::from_secs(10),
        format!(
            "S = {s:.4} dB (5.29), angle = {:.3} deg (30), purity = {mu:.4} ({mu_true:.4}), {dt:?}",
            r.angle.to_degrees()
        ),
    )
}

fn c10_spin_physics() -> Outcome {
    let sys = SpinSystem::default();
    let zero = spin_levels(&sys, 0.0).map_err(|e| e.to_string())?;
    let split = zero.energies[3] - zero.energies[0];
    let split_ok = (split - sys.hyperfine_a).abs() <= 1e-6;

    let mut worst_rt: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    for k in 0..=60 {
        let f = 4e9 + 3e9 * k as f64 / 60.0;
        for tr in [Transition::ESR_NUCLEAR_DOWN, Transition::ESR_NUCLEAR_UP] {
            let b = resonance_field(&sys, f, tr).map_err(|e| e.to_string())?;
            let back = transition_frequency(&sys, b, tr).map_err(|e| e.to_string())?;
            worst_rt = worst_rt.max((back - f).abs());
            let levels = spin_levels(&sys, b).map_err(|e| e.to_string())?;
            let h = sys.hamiltonian(b);
            let scale = levels.energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            worst_trace = worst_trace.max((levels.energies.iter().sum::<f64>() - h.trace()).abs() / scale);
        }
    }
    check(
        split_ok && worst_rt <= 1.0 && worst_trace <= 1e-9,
        format!(
            "zero-field splitting = {split} Hz; max round-trip error {worst_rt:.2e} Hz over [4, 7] GHz; max trace deviation {worst_trace:.1e}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("transfer efficiency", c1_transfer_efficiency),
        ("cooperativity", c2_cooperativity),
        ("sum rule", c3_sum_rule),
        ("squeezing predictions", c4_squeezing_predictions),
        ("optimal-coupling map", c5_optimal_coupling),
        ("circle-fit round trip", c6_circle_fit),
        ("spin-spectrum fit round trip", c7_spin_fit),
        ("decay fits", c8_decay_fits),
        ("tomography", c9_tomography),
        ("spin physics", c10_spin_physics),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {:>2}. {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
