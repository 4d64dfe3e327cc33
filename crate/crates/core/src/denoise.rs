//! Hold-out regression denoising of 4D volumes.
//!
//! For each volume `j`, the center voxels of `j` are regressed on the
//! p-neighbourhoods of every other volume, and the fitted map's predictions
//! become the denoised volume. The fitted map never reads volume `j`, so its
//! prediction noise is independent of the noise it is asked to remove.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regress::{self, DesignMatrix, GramSystem, LinearModel, Regularization};
use crate::volume::{Mask3D, Neighbourhoods, PatchFeatures, VoxelIndex, Volume4D};

/// Designs at most this wide are fitted by QR; wider ones through the
/// shared normal equations.
pub const AUTO_QR_MAX_COLS: usize = 64;

const ROW_CHUNK: usize = 2048;

/// Read access to a `rows × patch_len × volumes` feature tensor.
pub trait PatchSource: Sync {
    fn rows(&self) -> usize;
    fn patch_len(&self) -> usize;
    fn volumes(&self) -> usize;
    fn voxel_index(&self) -> &VoxelIndex;
    fn value(&self, row: usize, k: usize, v: usize) -> f64;
}

impl PatchSource for PatchFeatures {
    fn rows(&self) -> usize {
        PatchFeatures::rows(self)
    }
    fn patch_len(&self) -> usize {
        PatchFeatures::patch_len(self)
    }
    fn volumes(&self) -> usize {
        PatchFeatures::volumes(self)
    }
    fn voxel_index(&self) -> &VoxelIndex {
        PatchFeatures::voxel_index(self)
    }
    fn value(&self, row: usize, k: usize, v: usize) -> f64 {
        self.get(row, k, v)
    }
}

/// Patches read straight from the volume through a neighbour table, without
/// materializing the feature tensor.
pub struct LazyPatches<'a> {
    vol: &'a Volume4D,
    index: VoxelIndex,
    hoods: Neighbourhoods,
}

impl<'a> LazyPatches<'a> {
    pub fn new(vol: &'a Volume4D, radius: usize, mask: Option<&Mask3D>) -> Result<Self> {
        let index = VoxelIndex::for_mask(vol.spatial_dims(), mask)?;
        let hoods = Neighbourhoods::new(&index, radius);
        Ok(Self { vol, index, hoods })
    }
}

impl PatchSource for LazyPatches<'_> {
    fn rows(&self) -> usize {
        self.index.len()
    }
    fn patch_len(&self) -> usize {
        self.hoods.patch_len()
    }
    fn volumes(&self) -> usize {
        self.vol.volumes()
    }
    fn voxel_index(&self) -> &VoxelIndex {
        &self.index
    }
    fn value(&self, row: usize, k: usize, v: usize) -> f64 {
        self.vol.data()[v * self.vol.voxels() + self.hoods.row(row)[k]]
    }
}

/// Writes the hold-out feature row: volumes ascending with `j` skipped,
/// patch elements in raster order within each volume.
fn fill_holdout_row<S: PatchSource + ?Sized>(src: &S, row: usize, j: usize, out: &mut [f64]) {
    let p = src.patch_len();
    let mut c = 0;
    for v in (0..src.volumes()).filter(|&v| v != j) {
        for k in 0..p {
            out[c] = src.value(row, k, v);
            c += 1;
        }
    }
}

fn fill_full_row<S: PatchSource + ?Sized>(src: &S, row: usize, out: &mut [f64]) {
    let p = src.patch_len();
    for v in 0..src.volumes() {
        for k in 0..p {
            out[v * p + k] = src.value(row, k, v);
        }
    }
}

fn center_of<S: PatchSource + ?Sized>(src: &S) -> usize {
    (src.patch_len() - 1) / 2
}

fn check_holdout<S: PatchSource + ?Sized>(src: &S, j: usize) -> Result<()> {
    let n = src.volumes();
    if n < 2 {
        return Err(Error::TooFewVolumes(n));
    }
    if j >= n {
        return Err(Error::IndexOutOfBounds { index: j, len: n });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub held_out: usize,
    pub design: DesignMatrix,
    pub target: Vec<f64>,
}

/// Design `Y[*, *, -j]` and target `Y[*, center, j]` for volume `j`.
pub fn build_holdout<S: PatchSource + ?Sized>(features: &S, j: usize) -> Result<HoldoutSplit> {
    check_holdout(features, j)?;
    let m = features.rows();
    let d = features.patch_len() * (features.volumes() - 1);
    let mut values = vec![0.0; m * d];
    if d > 0 {
        values
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(row, out)| fill_holdout_row(features, row, j, out));
    }
    let c = center_of(features);
    let target = (0..m).map(|row| features.value(row, c, j)).collect();
    Ok(HoldoutSplit {
        held_out: j,
        design: DesignMatrix::new(m, d, values)?,
        target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    /// QR up to [`AUTO_QR_MAX_COLS`] design columns, normal equations beyond.
    #[default]
    Auto,
    Qr,
    NormalEquations,
}

/// What unmasked voxels hold in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Passthrough {
    #[default]
    CopyInput,
    Zero,
}

#[derive(Debug, Clone, Default)]
pub struct DenoiseConfig {
    pub radius: usize,
    pub regularization: Regularization,
    pub solver: SolverChoice,
    pub mask: Option<Mask3D>,
    pub passthrough: Passthrough,
}

impl DenoiseConfig {
    pub fn new(radius: usize) -> Self {
        Self {
            radius,
            ..Self::default()
        }
    }

    pub fn with_regularization(mut self, reg: Regularization) -> Self {
        self.regularization = reg;
        self
    }

    pub fn with_solver(mut self, solver: SolverChoice) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_mask(mut self, mask: Option<Mask3D>) -> Self {
        self.mask = mask;
        self
    }

    pub fn with_passthrough(mut self, passthrough: Passthrough) -> Self {
        self.passthrough = passthrough;
        self
    }

    fn uses_qr(&self, design_cols: usize) -> bool {
        match self.solver {
            SolverChoice::Qr => true,
            SolverChoice::NormalEquations => false,
            SolverChoice::Auto => design_cols <= AUTO_QR_MAX_COLS,
        }
    }
}

fn full_gram<S: PatchSource + ?Sized>(src: &S) -> GramSystem {
    let dim = src.patch_len() * src.volumes();
    GramSystem::accumulate(src.rows(), dim, true, |row, out| fill_full_row(src, row, out))
}

fn solve_from_gram<S: PatchSource + ?Sized>(
    src: &S,
    gram: &GramSystem,
    j: usize,
    reg: Regularization,
) -> Result<LinearModel> {
    let p = src.patch_len();
    let predictors: Vec<usize> = (0..src.volumes())
        .filter(|&v| v != j)
        .flat_map(|v| v * p..(v + 1) * p)
        .collect();
    gram.solve(&predictors, j * p + center_of(src), reg)
}

/// Predictions of a hold-out model for every row, computed in row chunks
/// without building the design. Equal bit for bit to
/// `predict(model, &build_holdout(src, j)?.design)`.
pub fn predict_holdout<S: PatchSource + ?Sized>(src: &S, j: usize, model: &LinearModel) -> Result<Vec<f64>> {
    check_holdout(src, j)?;
    let d = src.patch_len() * (src.volumes() - 1);
    if model.coefficients.len() != d {
        return Err(Error::mismatch(format!("{d} coefficients"), model.coefficients.len()));
    }
    let mut out = vec![0.0; src.rows()];
    out.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(ci, chunk)| {
        let mut buf = vec![0.0; d];
        for (i, o) in chunk.iter_mut().enumerate() {
            fill_holdout_row(src, ci * ROW_CHUNK + i, j, &mut buf);
            *o = model.predict_row(&buf);
        }
    });
    Ok(out)
}

/// Self-supervised reconstruction of volume `j`'s center voxels.
pub fn denoise_volume<S: PatchSource + ?Sized>(features: &S, j: usize, cfg: &DenoiseConfig) -> Result<Vec<f64>> {
    check_holdout(features, j)?;
    let d = features.patch_len() * (features.volumes() - 1);
    if cfg.uses_qr(d) {
        let split = build_holdout(features, j)?;
        let model = regress::fit(&split.design, &split.target, cfg.regularization)?;
        regress::predict(&model, &split.design)
    } else {
        let gram = full_gram(features);
        let model = solve_from_gram(features, &gram, j, cfg.regularization)?;
        predict_holdout(features, j, &model)
    }
}

/// One fitted hold-out model per volume.
#[derive(Debug, Clone)]
pub struct LinearDenoiser {
    pub radius: usize,
    pub models: Vec<LinearModel>,
}

impl LinearDenoiser {
    /// Fits every hold-out model. Fits for different volumes run in parallel.
    pub fn fit<S: PatchSource + ?Sized>(src: &S, cfg: &DenoiseConfig) -> Result<Self> {
        let n = src.volumes();
        if n < 2 {
            return Err(Error::TooFewVolumes(n));
        }
        let radius = (src.patch_len() as f64).cbrt().round() as usize / 2;
        let d = src.patch_len() * (n - 1);
        let models = if cfg.uses_qr(d) {
            (0..n)
                .into_par_iter()
                .map(|j| {
                    let split = build_holdout(src, j)?;
                    regress::fit(&split.design, &split.target, cfg.regularization)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            let gram = full_gram(src);
            (0..n)
                .into_par_iter()
                .map(|j| solve_from_gram(src, &gram, j, cfg.regularization))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(Self { radius, models })
    }

    pub fn predict<S: PatchSource + ?Sized>(&self, src: &S, j: usize) -> Result<Vec<f64>> {
        let model = self
            .models
            .get(j)
            .ok_or(Error::IndexOutOfBounds { index: j, len: self.models.len() })?;
        predict_holdout(src, j, model)
    }
}

/// Per-volume progress record.
#[derive(Debug, Clone, Copy)]
pub struct VolumeReport {
    pub index: usize,
    pub rank: usize,
    pub elapsed: Duration,
}

/// Denoises every volume of `vol`.
pub fn patch2self(vol: &Volume4D, cfg: &DenoiseConfig) -> Result<Volume4D> {
    patch2self_with_progress(vol, cfg, |_| {})
}

/// [`patch2self`] with a callback invoked after each volume's predictions
/// are ready. The callback may run on worker threads.
pub fn patch2self_with_progress<F>(vol: &Volume4D, cfg: &DenoiseConfig, on_volume: F) -> Result<Volume4D>
where
    F: Fn(VolumeReport) + Sync,
{
    let n = vol.volumes();
    if n < 2 {
        return Err(Error::TooFewVolumes(n));
    }
    let src = LazyPatches::new(vol, cfg.radius, cfg.mask.as_ref())?;
    let d = src.patch_len() * (n - 1);
    let started = Instant::now();
    let gram = (!cfg.uses_qr(d)).then(|| full_gram(&src));
    let gram_time = started.elapsed();

    let predictions = (0..n)
        .into_par_iter()
        .map(|j| {
            let t0 = Instant::now();
            let model = match &gram {
                Some(g) => solve_from_gram(&src, g, j, cfg.regularization)?,
                None => {
                    let split = build_holdout(&src, j)?;
                    regress::fit(&split.design, &split.target, cfg.regularization)?
                }
            };
            let pred = predict_holdout(&src, j, &model)?;
            on_volume(VolumeReport {
                index: j,
                rank: model.rank,
                elapsed: t0.elapsed() + if j == 0 { gram_time } else { Duration::ZERO },
            });
            Ok(pred)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = match cfg.passthrough {
        Passthrough::CopyInput => vol.data().to_vec(),
        Passthrough::Zero => vec![0.0; vol.data().len()],
    };
    let m = vol.voxels();
    for (j, pred) in predictions.iter().enumerate() {
        crate::volume::scatter_into(pred, src.voxel_index(), &mut data[j * m..(j + 1) * m])?;
    }
    Ok(Volume4D::new(vol.dims(), data)?.with_metadata_of(vol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{extract_patches, patch_center};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(dims: [usize; 4], seed: u64) -> Volume4D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = dims.iter().product::<usize>();
        Volume4D::new(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn minimal_holdout() {
        let vol = noisy([2, 2, 2, 2], 1);
        let f = extract_patches(&vol, 0, None).unwrap();
        let s = build_holdout(&f, 0).unwrap();
        assert_eq!(s.design.cols(), 1);
        assert_eq!(s.design.column(0), vol.slab(1).to_vec());
        assert_eq!(s.target, vol.slab(0).to_vec());
    }

    #[test]
    fn radius_one_holdout_width_excludes_target_volume() {
        let vol = noisy([4, 4, 4, 5], 2);
        let f = extract_patches(&vol, 1, None).unwrap();
        let s = build_holdout(&f, 2).unwrap();
        assert_eq!(s.design.cols(), 108);
        // column c belongs to volume (c / 27) in [0, 1, 3, 4]
        for c in [0, 27, 54, 81] {
            let expect_vol = [0, 1, 3, 4][c / 27];
            let col = s.design.column(c);
            for row in 0..f.rows() {
                assert_eq!(col[row], f.get(row, 0, expect_vol));
            }
        }
    }

    #[test]
    fn holdout_errors() {
        let vol = noisy([2, 2, 2, 3], 3);
        let f = extract_patches(&vol, 0, None).unwrap();
        assert!(matches!(build_holdout(&f, 3), Err(Error::IndexOutOfBounds { .. })));
        let single = noisy([2, 2, 2, 1], 3);
        let f = extract_patches(&single, 0, None).unwrap();
        assert!(matches!(build_holdout(&f, 0), Err(Error::TooFewVolumes(1))));
        assert!(matches!(
            patch2self(&single, &DenoiseConfig::default()),
            Err(Error::TooFewVolumes(1))
        ));
    }

    #[test]
    fn perturbing_target_volume_leaves_design_unchanged() {
        let vol = noisy([3, 3, 3, 4], 4);
        let base = build_holdout(&extract_patches(&vol, 1, None).unwrap(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let mut data = vol.data().to_vec();
            let m = vol.voxels();
            let i = rng.random_range(0..m);
            data[m + i] += rng.random_range(0.5..3.0);
            let pert = Volume4D::new(vol.dims(), data).unwrap();
            let s = build_holdout(&extract_patches(&pert, 1, None).unwrap(), 1).unwrap();
            assert!(s.design.values().iter().zip(base.design.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_ne!(s.target, base.target);
        }
    }

    #[test]
    fn exact_linear_relation_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 27;
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
        let c: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        let vol = Volume4D::from_slabs([3, 3, 3], vec![a, b, c.clone()]).unwrap();
        let f = extract_patches(&vol, 0, None).unwrap();
        let out = denoise_volume(&f, 2, &DenoiseConfig::default()).unwrap();
        let res: f64 = out.iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-8, "residual {res}");
    }

    #[test]
    fn constant_data_fixed_point() {
        let vol = Volume4D::new([3, 3, 3, 3], vec![4.5; 81]).unwrap();
        let f = extract_patches(&vol, 1, None).unwrap();
        for solver in [SolverChoice::Qr, SolverChoice::NormalEquations] {
            let cfg = DenoiseConfig::new(1).with_solver(solver);
            let out = denoise_volume(&f, 0, &cfg).unwrap();
            assert!(out.iter().all(|v| (v - 4.5).abs() < 1e-12), "{solver:?}");
        }
    }

    #[test]
    fn lazy_and_materialized_paths_agree_bitwise() {
        let vol = noisy([5, 4, 3, 4], 6);
        let mask = Mask3D::from_fn([5, 4, 3], |x, y, _| x + y > 1);
        for (radius, solver) in [(0, SolverChoice::Qr), (1, SolverChoice::Qr), (1, SolverChoice::NormalEquations)] {
            let cfg = DenoiseConfig::new(radius)
                .with_solver(solver)
                .with_mask(Some(mask.clone()));
            let f = extract_patches(&vol, radius, Some(&mask)).unwrap();
            let out = patch2self(&vol, &cfg).unwrap();
            for j in 0..4 {
                let direct = denoise_volume(&f, j, &cfg).unwrap();
                let via = crate::volume::gather_rows(out.slab(j), f.voxel_index()).unwrap();
                assert!(direct.iter().zip(&via).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn chunked_prediction_matches_design_prediction() {
        let vol = noisy([20, 15, 10, 3], 7);
        let f = extract_patches(&vol, 1, None).unwrap();
        let split = build_holdout(&f, 1).unwrap();
        let model = regress::fit(&split.design, &split.target, Regularization::Ols).unwrap();
        let a = regress::predict(&model, &split.design).unwrap();
        let b = predict_holdout(&f, 1, &model).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn masked_passthrough() {
        let vol = noisy([4, 4, 2, 3], 8);
        let mask = Mask3D::from_fn([4, 4, 2], |x, _, _| x < 2);
        let cfg = DenoiseConfig::default().with_mask(Some(mask.clone()));
        let out = patch2self(&vol, &cfg).unwrap();
        let zero = patch2self(&vol, &cfg.clone().with_passthrough(Passthrough::Zero)).unwrap();
        for v in 0..3 {
            for (i, &inside) in mask.flags().iter().enumerate() {
                if !inside {
                    assert_eq!(out.slab(v)[i].to_bits(), vol.slab(v)[i].to_bits());
                    assert_eq!(zero.slab(v)[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn solvers_agree() {
        let vol = noisy([6, 6, 6, 4], 9);
        let f = extract_patches(&vol, 1, None).unwrap();
        let a = denoise_volume(&f, 3, &DenoiseConfig::new(1).with_solver(SolverChoice::Qr)).unwrap();
        let b = denoise_volume(&f, 3, &DenoiseConfig::new(1).with_solver(SolverChoice::NormalEquations)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn denoiser_radius_and_center() {
        let vol = noisy([3, 3, 3, 3], 10);
        let f = extract_patches(&vol, 1, None).unwrap();
        let den = LinearDenoiser::fit(&f, &DenoiseConfig::new(1)).unwrap();
        assert_eq!(den.radius, 1);
        assert_eq!(den.models.len(), 3);
        assert_eq!(center_of(&f), patch_center(1));
    }
}
