use ndarray::Array1;
use underlab_core::activation::{activation_moments, Activation};
use underlab_core::rf::empirical::*;
use underlab_core::rng::derive_rng;

fn main() {
    let m = activation_moments(Activation::Relu).unwrap();
    for (d, delta) in [(160usize, 0.8), (160, 1.5), (320, 0.8), (320, 1.5)] {
        let config = RfConfig { d, n: 2 * d, width: 4 * d, r: 1.0, s: 0.0, lambda: 0.0, activation: Activation::Relu };
        for rep in 0..3u64 {
            let mut rng_data = derive_rng(51, "test.decomp.data", rep);
            let mut rng_w0 = derive_rng(51, "test.decomp.w0", rep);
            let mut rng_base = derive_rng(51, "test.decomp.base", rep);
            let mut rng_shift = derive_rng(51, "test.decomp.shift", rep);
            let data = sample_dataset(&config, &mut rng_data).unwrap();
            let source = train_predictor(&config, &data, &mut rng_w0).unwrap();
            let shift = adversarial_shift(&source, &data.beta0.view(), delta, rep).unwrap();
            let base = estimate_risk(&source, &data.beta0.view(), 0.0, 40_000, &mut rng_base).unwrap();
            let shifted = shifted_risk(&source, &shift, &data.beta0.view(), 0.0, 40_000, &mut rng_shift).unwrap();
            let v = source.w.t().dot(&source.theta);
            let x0_hat: Array1<f64> = &shift.x0 / delta;
            let predicted = delta * delta * m.mu1 * m.mu1 * v.dot(&x0_hat).powi(2);
            let diff = shifted.mean - base.mean;
            let se = (base.stderr.powi(2) + shifted.stderr.powi(2)).sqrt();
            println!(
                "d={d} delta={delta} rep={rep}: diff {diff:+.5} pred {predicted:+.5} gap/se {:+.2} (se {se:.5})",
                (diff - predicted) / se
            );
        }
    }
}
