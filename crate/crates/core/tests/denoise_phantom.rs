use p2s_core::baseline::svd_rank_denoise;
use p2s_core::{
    apply_noise, clean_signal, evaluate, patch2self, patch2self_with_progress, rmse, DenoiseConfig, Error,
    GradientTable, NoiseSpec, Passthrough, PhantomSpec, Regularization, Volume4D,
};
use std::sync::Mutex;

fn phantom(volumes: usize, snr: Option<f64>) -> (PhantomSpec, Volume4D, Volume4D) {
    let spec = PhantomSpec::brain([14, 14, 14], GradientTable::two_shell(volumes).unwrap(), 3).unwrap();
    let clean = clean_signal(&spec).unwrap();
    let noisy = match snr {
        Some(snr) => {
            let noise = NoiseSpec::for_snr(snr, 8, &clean, &spec.gradients.b0_indices(), &spec.tissue_mask()).unwrap();
            apply_noise(&clean, &noise, 9).unwrap()
        }
        None => clean.clone(),
    };
    (spec, clean, noisy)
}

#[test]
fn noiseless_piecewise_constant_phantom_is_a_fixed_point() {
    // Every volume is a function of the tissue label alone, so with enough
    // other volumes each one lies exactly in their affine span.
    let (_, clean, _) = phantom(12, None);
    let out = patch2self(&clean, &DenoiseConfig::new(0)).unwrap();
    let scale = clean.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in clean.data().iter().zip(out.data()) {
        assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
    }
}

#[test]
fn every_volume_improves_at_low_snr() {
    let (spec, clean, noisy) = phantom(20, Some(10.0));
    let mask = spec.tissue_mask();
    let den = patch2self(&noisy, &DenoiseConfig::new(0)).unwrap();
    let before = evaluate(&clean, &noisy, Some(&mask), true).unwrap();
    let after = evaluate(&clean, &den, Some(&mask), true).unwrap();
    for (j, (b, a)) in before.per_volume.unwrap().iter().zip(after.per_volume.unwrap()).enumerate() {
        assert!(a.rmse < b.rmse, "volume {j}: {} -> {}", b.rmse, a.rmse);
    }
}

#[test]
fn ridge_and_radius_one_also_denoise() {
    let (spec, clean, noisy) = phantom(12, Some(15.0));
    let mask = spec.tissue_mask();
    let base = rmse(&clean, &noisy, Some(&mask)).unwrap();
    for cfg in [
        DenoiseConfig::new(0).with_regularization(Regularization::Ridge(1.0)),
        DenoiseConfig::new(1),
    ] {
        let den = patch2self(&noisy, &cfg).unwrap();
        assert!(den.data().iter().all(|v| v.is_finite()));
        assert!(rmse(&clean, &den, Some(&mask)).unwrap() < base);
    }
}

#[test]
fn masked_denoising_leaves_background_alone() {
    let (spec, _, noisy) = phantom(8, Some(15.0));
    let mask = spec.tissue_mask();
    let flags = mask.flags().to_vec();
    let copy = patch2self(&noisy, &DenoiseConfig::new(1).with_mask(Some(mask.clone()))).unwrap();
    let zero = patch2self(
        &noisy,
        &DenoiseConfig::new(1).with_mask(Some(mask)).with_passthrough(Passthrough::Zero),
    )
    .unwrap();
    for j in 0..noisy.volumes() {
        for (i, &inside) in flags.iter().enumerate() {
            if inside {
                assert_eq!(copy.slab(j)[i].to_bits(), zero.slab(j)[i].to_bits());
            } else {
                assert_eq!(copy.slab(j)[i].to_bits(), noisy.slab(j)[i].to_bits());
                assert_eq!(zero.slab(j)[i], 0.0);
            }
        }
    }
}

#[test]
fn progress_reports_each_volume_once() {
    let (_, _, noisy) = phantom(6, Some(20.0));
    let seen = Mutex::new(Vec::new());
    patch2self_with_progress(&noisy, &DenoiseConfig::new(0), |r| seen.lock().unwrap().push(r.index)).unwrap();
    let mut seen = seen.into_inner().unwrap();
    seen.sort_unstable();
    assert_eq!(seen, (0..6).collect::<Vec<_>>());
}

#[test]
fn single_volume_is_rejected() {
    let vol = Volume4D::zeros([4, 4, 4, 1]).unwrap();
    let err = patch2self(&vol, &DenoiseConfig::new(0)).unwrap_err();
    assert!(matches!(err, Error::TooFewVolumes(1)));
    assert!(err.to_string().contains("at least 2 volumes"));
}

#[test]
fn svd_baseline_runs_on_phantom() {
    let (spec, clean, noisy) = phantom(12, Some(15.0));
    let out = svd_rank_denoise(&noisy, 3, 5).unwrap();
    assert_eq!(out.dims(), noisy.dims());
    let mask = spec.tissue_mask();
    assert!(rmse(&clean, &out, Some(&mask)).unwrap().is_finite());
}
