//! Self-supervised denoising of 4D diffusion-weighted volumes by hold-out
//! linear regression on spatial patches.
//!
//! For each volume `j`, a linear model is fit that predicts the centre voxel
//! of volume `j` from the patches of every *other* volume. Because the
//! prediction never sees the noise of volume `j`, noise that is independent
//! across volumes cannot be copied through, while shared structure is.
//!
//! ```
//! use p2s_core::{patch2self, DenoiseConfig, Volume4D};
//!
//! let vol = Volume4D::from_fn([6, 6, 6, 4], |x, y, z, v| 1.0 + (x + y + z) as f64 * (v + 1) as f64).unwrap();
//! let out = patch2self(&vol, &DenoiseConfig::new(0)).unwrap();
//! assert_eq!(out.dims(), vol.dims());
//! ```

pub mod baseline;
pub mod denoise;
pub mod error;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod regress;
pub mod volume;

pub use denoise::{
    build_holdout, denoise_volume, patch2self, patch2self_with_progress, predict_holdout, DenoiseConfig, HoldoutSplit,
    LazyPatches, LinearDenoiser, Passthrough, PatchSource, SolverChoice, VolumeReport,
};
pub use error::{Error, ErrorKind, FormatError, Result};
pub use metrics::{evaluate, r_squared, residual_map, rmse, EvalReport};
pub use phantom::{apply_noise, clean_signal, GradientTable, NoiseSpec, PhantomSpec};
pub use regress::{fit, fit_normal_equations, predict, DesignMatrix, LinearModel, Regularization};
pub use volume::{extract_patches, Mask3D, PatchFeatures, Volume4D, VoxelIndex};
