use p2s_core::phantom::mean_b0_tissue;
use p2s_core::{
    apply_noise, clean_signal, patch2self, residual_map, rmse, DenoiseConfig, GradientTable, NoiseSpec, PhantomSpec,
    Volume4D,
};

fn brain(dims: [usize; 3], volumes: usize) -> (PhantomSpec, Volume4D) {
    let spec = PhantomSpec::brain(dims, GradientTable::two_shell(volumes).unwrap(), 1).unwrap();
    let clean = clean_signal(&spec).unwrap();
    (spec, clean)
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn magnitudes_are_nonnegative_and_biased_upward_at_low_signal() {
    let clean = Volume4D::new([40, 50, 50, 1], vec![1.0; 100_000]).unwrap();
    let out = apply_noise(&clean, &NoiseSpec::new(2.0, 8).unwrap(), 5).unwrap();
    assert!(out.data().iter().all(|&v| v >= 0.0));
    let (mean, _) = moments(out.data());
    // Noise floor of an 8-channel magnitude is near σ·E[χ16] ≈ 3.94σ.
    assert!(mean > 7.0, "mean {mean}");
}

#[test]
fn single_channel_high_snr_is_nearly_gaussian() {
    // With C = 1 and S ≫ σ the magnitude is approximately N(S, σ²).
    let clean = Volume4D::new([40, 50, 50, 1], vec![1000.0; 100_000]).unwrap();
    let out = apply_noise(&clean, &NoiseSpec::new(1.0, 1).unwrap(), 8).unwrap();
    let (mean, var) = moments(out.data());
    assert!((mean - 1000.0).abs() < 0.02, "mean {mean}");
    assert!((var - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn different_seeds_differ_but_share_moments() {
    let clean = Volume4D::new([40, 50, 50, 1], vec![20.0; 100_000]).unwrap();
    let noise = NoiseSpec::new(3.0, 8).unwrap();
    let a = apply_noise(&clean, &noise, 1).unwrap();
    let b = apply_noise(&clean, &noise, 2).unwrap();
    assert_ne!(a.data(), b.data());
    assert_eq!(a.data(), apply_noise(&clean, &noise, 1).unwrap().data());
    let ((ma, va), (mb, vb)) = (moments(a.data()), moments(b.data()));
    assert!((ma - mb).abs() / ma < 0.02);
    assert!((va - vb).abs() / va < 0.02);
}

#[test]
fn corruption_grows_with_sigma() {
    let (_, clean) = brain([12, 12, 12], 8);
    let errors: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&s| rmse(&clean, &apply_noise(&clean, &NoiseSpec::new(s, 8).unwrap(), 3).unwrap(), None).unwrap())
        .collect();
    assert!(errors.windows(2).all(|w| w[1] > w[0]), "{errors:?}");
}

#[test]
fn snr_target_sets_sigma() {
    let (spec, clean) = brain([16, 16, 16], 10);
    let b0 = spec.gradients.b0_indices();
    let mask = spec.tissue_mask();
    for snr in [10.0, 15.0, 30.0] {
        let noise = NoiseSpec::for_snr(snr, 8, &clean, &b0, &mask).unwrap();
        let measured = mean_b0_tissue(&clean, &b0, &mask).unwrap() / noise.sigma;
        assert!((measured - snr).abs() < 1e-12 * snr);
        assert_eq!(noise.snr_target, Some(snr));
    }
}

#[test]
fn residual_map_tracks_noise_power() {
    let (spec, clean) = brain([16, 16, 16], 40);
    let mask = spec.tissue_mask();
    let noise = NoiseSpec::for_snr(30.0, 8, &clean, &spec.gradients.b0_indices(), &mask).unwrap();
    let noisy = apply_noise(&clean, &noise, 11).unwrap();
    let den = patch2self(&noisy, &DenoiseConfig::new(0)).unwrap();
    let res = residual_map(&noisy, &den).unwrap();
    let tissue = mask.indices();
    let mean_in_tissue = |v: &Volume4D| {
        let total: f64 = (0..v.volumes()).map(|j| tissue.iter().map(|&i| v.slab(j)[i]).sum::<f64>()).sum();
        total / (tissue.len() * v.volumes()) as f64
    };

    // Noise power: per-sample variance of the magnitude across independent
    // realizations, averaged over tissue.
    let draws: Vec<Volume4D> = (100..116).map(|s| apply_noise(&clean, &noise, s).unwrap()).collect();
    let k = draws.len() as f64;
    let mut var = vec![0.0; clean.data().len()];
    for (i, slot) in var.iter_mut().enumerate() {
        let m = draws.iter().map(|d| d.data()[i]).sum::<f64>() / k;
        *slot = draws.iter().map(|d| (d.data()[i] - m).powi(2)).sum::<f64>() / (k - 1.0);
    }
    let power = mean_in_tissue(&Volume4D::new(clean.dims(), var).unwrap());
    let observed = mean_in_tissue(&res);
    let rel = (observed - power).abs() / power;
    assert!(rel < 0.2, "mean residual {observed} vs noise power {power}");
}
