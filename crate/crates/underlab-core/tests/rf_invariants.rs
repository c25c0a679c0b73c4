//! Cross-route invariants of the random-features experiments: the mean-shift
//! risk decomposition checked per realization, the orthogonality reading of
//! the sensitivity, and a theory-vs-Monte-Carlo risk smoke test.

use ndarray::Array1;
use underlab_core::activation::{activation_moments, Activation};
use underlab_core::rf::empirical::*;
use underlab_core::rf::theory::{risk_asymptotic, sensitivity_asymptotic, G1Convention, TheoryInputs};
use underlab_core::rng::derive_rng;

fn relu_config(d: usize, n: usize, width: usize) -> RfConfig {
    RfConfig { d, n, width, r: 1.0, s: 0.0, lambda: 0.0, activation: Activation::Relu }
}

#[test]
fn shifted_risk_decomposes_into_base_plus_projection_term() {
    // R(W, P_shift) - R(W, P) = delta^2 mu1^2 <P_perp W^T theta, x0_hat>^2
    // per realization, within 3 unpaired MC standard errors
    let config = relu_config(160, 320, 640);
    let moments = activation_moments(Activation::Relu).unwrap();
    let delta = 0.8;
    for rep in 0..3u64 {
        let mut rng_data = derive_rng(51, "test.decomp.data", rep);
        let mut rng_w0 = derive_rng(51, "test.decomp.w0", rep);
        let mut rng_w = derive_rng(51, "test.decomp.w", rep);
        let mut rng_base = derive_rng(51, "test.decomp.base", rep);
        let mut rng_shift = derive_rng(51, "test.decomp.shift", rep);

        let data = sample_dataset(&config, &mut rng_data).unwrap();
        let source = train_predictor(&config, &data, &mut rng_w0).unwrap();
        let probe = train_predictor(&config, &data, &mut rng_w).unwrap();
        let shift = adversarial_shift(&source, &data.beta0.view(), delta, rep).unwrap();

        let base = estimate_risk(&probe, &data.beta0.view(), 0.0, 40_000, &mut rng_base).unwrap();
        let shifted = shifted_risk(&probe, &shift, &data.beta0.view(), 0.0, 40_000, &mut rng_shift).unwrap();

        let v = probe.w.t().dot(&probe.theta);
        let x0_hat: Array1<f64> = &shift.x0 / delta;
        let predicted = delta * delta * moments.mu1 * moments.mu1 * v.dot(&x0_hat).powi(2);

        let diff = shifted.mean - base.mean;
        let se = (base.stderr.powi(2) + shifted.stderr.powi(2)).sqrt();
        assert!(
            (diff - predicted).abs() <= 3.0 * se,
            "rep {rep}: shifted - base = {diff:.5} vs predicted {predicted:.5} (3se = {:.5})",
            3.0 * se
        );
    }
}

#[test]
fn sensitivity_near_two_means_error_functions_decorrelate() {
    // where theory puts S/R near 2, the error functions h_i = f_i - f* of two
    // independently featurized predictors are nearly orthogonal:
    // E[h1 h2] = R - S/2, checked against a direct estimate on shared draws
    let zeta = activation_moments(Activation::Relu).unwrap().zeta;
    let config = relu_config(60, 300, 450); // psi2 = 5, N/n = 1.5
    let inputs = TheoryInputs {
        zeta,
        psi1: 7.5,
        psi2: 5.0,
        lambda_bar: 0.0,
        r: 1.0,
        s: 0.0,
        g1_convention: G1Convention::ClosedAtEnd,
    };
    let s_over_r =
        sensitivity_asymptotic(&inputs).unwrap() / risk_asymptotic(&inputs).unwrap();
    assert!(s_over_r > 1.8, "pick a point where theory S/R is near 2, got {s_over_r}");

    let reps = 8;
    let mut cross = Vec::new();
    let mut risks = Vec::new();
    for rep in 0..reps {
        let mut rng_data = derive_rng(52, "test.orth.data", rep);
        let mut rng_w1 = derive_rng(52, "test.orth.w1", rep);
        let mut rng_w2 = derive_rng(52, "test.orth.w2", rep);
        let mut rng_eval = derive_rng(52, "test.orth.eval", rep);
        let data = sample_dataset(&config, &mut rng_data).unwrap();
        let p1 = train_predictor(&config, &data, &mut rng_w1).unwrap();
        let p2 = train_predictor(&config, &data, &mut rng_w2).unwrap();
        let x = sample_sphere_rows(&mut rng_eval, 8000, config.d, (config.d as f64).sqrt());
        let target = x.dot(&data.beta0);
        let h1 = &predict(&p1, &x.view()) - &target;
        let h2 = &predict(&p2, &x.view()) - &target;
        cross.push(h1.dot(&h2) / 8000.0);
        risks.push(h1.dot(&h1) / 8000.0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let se = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0) / v.len() as f64).sqrt()
    };
    let normalized = mean(&cross) / mean(&risks);
    // theory: E[h1 h2]/R = 1 - (S/R)/2, small when S/R is near 2
    let predicted = 1.0 - s_over_r / 2.0;
    assert!(
        (mean(&cross) - predicted * mean(&risks)).abs() <= 3.0 * se(&cross).max(1e-4),
        "E[h1 h2] = {:.5} vs predicted {:.5}",
        mean(&cross),
        predicted * mean(&risks)
    );
    assert!(normalized.abs() < 0.15, "normalized cross-correlation {normalized}");
}

#[test]
fn min_norm_risk_matches_asymptotics_at_figure_scale() {
    // d = 80, psi2 = 5, N/n = 4 smoke version of the published-figure check
    let zeta = activation_moments(Activation::Relu).unwrap().zeta;
    let config = relu_config(80, 400, 1600);
    let reps = 12;
    let mut total = 0.0;
    for rep in 0..reps {
        let mut rng_data = derive_rng(53, "test.figrisk.data", rep);
        let mut rng_w = derive_rng(53, "test.figrisk.w", rep);
        let mut rng_eval = derive_rng(53, "test.figrisk.eval", rep);
        let data = sample_dataset(&config, &mut rng_data).unwrap();
        let pred = train_predictor(&config, &data, &mut rng_w).unwrap();
        total += estimate_risk(&pred, &data.beta0.view(), 0.0, 4000, &mut rng_eval).unwrap().mean;
    }
    let mc = total / reps as f64;
    let theory = risk_asymptotic(&TheoryInputs {
        zeta,
        psi1: 20.0,
        psi2: 5.0,
        lambda_bar: 0.0,
        r: 1.0,
        s: 0.0,
        g1_convention: G1Convention::ClosedAtEnd,
    })
    .unwrap();
    let rel = (mc - theory).abs() / theory;
    assert!(rel <= 0.15, "MC {mc:.4} vs theory {theory:.4} (rel {rel:.3})");
}
