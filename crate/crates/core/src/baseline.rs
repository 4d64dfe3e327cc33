//! Fixed-rank local SVD truncation.
//!
//! A deliberately naive comparison method: tile the volume into
//! non-overlapping cubes, form each cube's voxels × volumes (Casorati)
//! matrix, and keep its leading `rank` singular components. There is no
//! noise-adaptive threshold and no overlap averaging; it exists so that
//! sweeps have a second method to tabulate.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::Volume4D;

pub const DEFAULT_BLOCK_EDGE: usize = 5;

/// Rank-`rank` truncation of every `block_edge`³ tile (edge tiles are clipped).
pub fn svd_rank_denoise(vol: &Volume4D, rank: usize, block_edge: usize) -> Result<Volume4D> {
    if block_edge == 0 {
        return Err(Error::InvalidInput("block edge must be positive".into()));
    }
    if rank == 0 {
        return Err(Error::InvalidInput("rank must be positive".into()));
    }
    let [l, w, h] = vol.spatial_dims();
    let n = vol.volumes();
    let tiles: Vec<[usize; 3]> = (0..h)
        .step_by(block_edge)
        .flat_map(|z| (0..w).step_by(block_edge).flat_map(move |y| (0..l).step_by(block_edge).map(move |x| [x, y, z])))
        .collect();

    let results: Vec<Result<(Vec<usize>, DMatrix<f64>)>> = tiles
        .par_iter()
        .map(|&[x0, y0, z0]| {
            let mut voxels = Vec::new();
            for z in z0..(z0 + block_edge).min(h) {
                for y in y0..(y0 + block_edge).min(w) {
                    for x in x0..(x0 + block_edge).min(l) {
                        voxels.push(x + l * (y + w * z));
                    }
                }
            }
            let m = DMatrix::from_fn(voxels.len(), n, |r, v| vol.slab(v)[voxels[r]]);
            if rank >= m.nrows().min(n) {
                return Ok((voxels, m));
            }
            let mut svd = m.svd(true, true);
            for s in svd.singular_values.iter_mut().skip(rank) {
                *s = 0.0;
            }
            let low = svd
                .recompose()
                .map_err(|e| Error::Numerical(format!("svd recomposition failed: {e}")))?;
            Ok((voxels, low))
        })
        .collect();

    let mut out = vec![0.0; vol.data().len()];
    let stride = vol.voxels();
    for res in results {
        let (voxels, m) = res?;
        for (r, &i) in voxels.iter().enumerate() {
            for v in 0..n {
                out[v * stride + i] = m[(r, v)];
            }
        }
    }
    Ok(Volume4D::new(vol.dims(), out)?.with_metadata_of(vol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_data_is_kept() {
        // Outer product u·vᵀ is exactly rank one in every tile.
        let vol = Volume4D::from_fn([6, 4, 3, 5], |x, y, z, v| (1.0 + x as f64 + 2.0 * y as f64 + z as f64) * (v as f64 + 0.5))
            .unwrap();
        let out = svd_rank_denoise(&vol, 1, 3).unwrap();
        for (a, b) in vol.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn full_rank_is_identity() {
        let vol = Volume4D::from_fn([4, 4, 4, 3], |x, y, z, v| ((x * 7 + y * 3 + z * 5 + v * 11) % 13) as f64).unwrap();
        assert_eq!(svd_rank_denoise(&vol, 3, 2).unwrap().data(), vol.data());
        assert!(svd_rank_denoise(&vol, 0, 2).is_err());
        assert!(svd_rank_denoise(&vol, 1, 0).is_err());
    }
}
