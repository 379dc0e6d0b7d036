use spinsqz_core::hybrid::CovarianceState;
use spinsqz_core::synth;
use spinsqz_core::tomography::{moments, reconstruct_gaussian, PlanckCalibration};

fn identity_calibration() -> PlanckCalibration {
    PlanckCalibration::new(1.0, 0.0, 5.645e9)
        .unwrap()
        .with_path_loss_db(0.0)
}

#[test]
fn vacuum_samples_have_quarter_variance_and_no_excess_kurtosis() {
    let calib = identity_calibration();
    let samples = synth::iq_samples(&CovarianceState::vacuum(), &calib, 1_000_000, 21).unwrap();
    let m = moments(&samples).unwrap();
    let r = reconstruct_gaussian(&m, &calib).unwrap();
    assert!((r.state.var_q - 0.25).abs() < 1e-3, "{}", r.state.var_q);
    assert!((r.state.var_p - 0.25).abs() < 1e-3, "{}", r.state.var_p);
    assert!(r.state.cov_qp.abs() < 1e-3);
    let (ki, kq) = r.excess_kurtosis;
    assert!(ki.abs() < 0.02 && kq.abs() < 0.02, "{ki} {kq}");
    assert!(r.squeezing_db.unwrap().abs() < 0.02);
}

#[test]
fn chunked_moments_match_a_direct_two_pass_sum() {
    let calib = identity_calibration();
    let st = CovarianceState::squeezed(0.1, 0.9, 0.4);
    let samples = synth::iq_samples(&st, &calib, 300_001, 3).unwrap();
    let m = moments(&samples).unwrap();
    let n = samples.len() as f64;
    let (mi, mq) = samples.iter().fold((0.0, 0.0), |a, s| (a.0 + s.0 / n, a.1 + s.1 / n));
    for (a, b) in [(2, 0), (1, 1), (0, 2), (3, 1), (2, 2), (0, 4)] {
        let direct: f64 = samples
            .iter()
            .map(|s| (s.0 - mi).powi(a) * (s.1 - mq).powi(b))
            .sum::<f64>()
            / n;
        let got = m.central(a as usize, b as usize).unwrap();
        assert!(
            (got - direct).abs() <= 1e-10 * direct.abs().max(1e-3),
            "({a},{b}) {got} vs {direct}"
        );
    }
}
