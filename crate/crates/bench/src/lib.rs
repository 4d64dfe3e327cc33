//! Shared inputs for the benchmarks.

use p2s_core::{apply_noise, clean_signal, DesignMatrix, GradientTable, NoiseSpec, PhantomSpec, Volume4D};

/// Noisy brain phantom: 2 b=0 volumes plus a b=1000 shell, SNR 15.
pub fn noisy_phantom(edge: usize, volumes: usize) -> Volume4D {
    let gradients = GradientTable::shells(2, &[(1000.0, volumes - 2)]).unwrap();
    let b0 = gradients.b0_indices();
    let spec = PhantomSpec::brain([edge; 3], gradients, 1).unwrap();
    let clean = clean_signal(&spec).unwrap();
    let noise = NoiseSpec::for_snr(15.0, 8, &clean, &b0, &spec.tissue_mask()).unwrap();
    apply_noise(&clean, &noise, 2).unwrap()
}

/// Deterministic dense design with a target that depends on every column.
pub fn random_system(rows: usize, cols: usize) -> (DesignMatrix, Vec<f64>) {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let values: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
    let y = values.chunks(cols).map(|r| r.iter().sum::<f64>() + next()).collect();
    (DesignMatrix::new(rows, cols, values).unwrap(), y)
}
