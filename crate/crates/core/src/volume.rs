//! 4D data model, masks, and p-neighbourhood extraction.
//!
//! Voxels are stored with x varying fastest, then y, then z, with the volume
//! index slowest: `data[x + l*(y + w*(z + h*v))]`. The same ordering is used
//! for every voxel-index mapping in this crate.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Spatial affine carried through from NIfTI files without interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    /// quatern_b, quatern_c, quatern_d, qoffset_x, qoffset_y, qoffset_z
    pub quatern: [f32; 6],
    pub qfac: f32,
    pub srow: [[f32; 4]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    dims: [usize; 4],
    data: Vec<f64>,
    spacing: [f64; 3],
    orientation: Option<Orientation>,
}

impl Volume4D {
    /// Builds a volume, rejecting zero extents, length mismatches, and
    /// non-finite samples.
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!("zero extent in dims {dims:?}")));
        }
        let len = dims.iter().product::<usize>();
        if data.len() != len {
            return Err(Error::mismatch(format!("{len} samples for {dims:?}"), data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self {
            dims,
            data,
            spacing: [1.0; 3],
            orientation: None,
        })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.iter().product()])
    }

    /// Builds a volume from `f(x, y, z, v)`.
    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for v in 0..dims[3] {
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        data.push(f(x, y, z, v));
                    }
                }
            }
        }
        Self::new(dims, data)
    }

    /// Stacks equally-sized 3D slabs (each of length l*w*h) into a 4D volume.
    pub fn from_slabs(spatial: [usize; 3], slabs: Vec<Vec<f64>>) -> Result<Self> {
        let m = spatial.iter().product::<usize>();
        let n = slabs.len();
        let mut data = Vec::with_capacity(m * n);
        for (j, s) in slabs.into_iter().enumerate() {
            if s.len() != m {
                return Err(Error::mismatch(format!("slab {j} of {m} voxels"), s.len()));
            }
            data.extend(s);
        }
        Self::new([spatial[0], spatial[1], spatial[2], n], data)
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_orientation(mut self, orientation: Option<Orientation>) -> Self {
        self.orientation = orientation;
        self
    }

    /// Copies spacing and orientation metadata from another volume.
    pub fn with_metadata_of(self, other: &Volume4D) -> Self {
        self.with_spacing(other.spacing)
            .with_orientation(other.orientation.clone())
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    /// Voxels per volume (`l*w*h`).
    pub fn voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn volumes(&self) -> usize {
        self.dims[3]
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn orientation(&self) -> Option<&Orientation> {
        self.orientation.as_ref()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, x: usize, y: usize, z: usize, v: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * (z + self.dims[2] * v))
    }

    pub fn get(&self, x: usize, y: usize, z: usize, v: usize) -> f64 {
        self.data[self.index(x, y, z, v)]
    }

    /// Contiguous samples of volume `j`.
    pub fn slab(&self, j: usize) -> &[f64] {
        let m = self.voxels();
        &self.data[j * m..(j + 1) * m]
    }

    /// Replaces volume `j` with `values`.
    pub fn set_slab(&mut self, j: usize, values: &[f64]) -> Result<()> {
        let m = self.voxels();
        if j >= self.volumes() {
            return Err(Error::IndexOutOfBounds {
                index: j,
                len: self.volumes(),
            });
        }
        if values.len() != m {
            return Err(Error::mismatch(m, values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(j * m + pos));
        }
        self.data[j * m..(j + 1) * m].copy_from_slice(values);
        Ok(())
    }

    /// Keeps the listed volumes, in the given order.
    pub fn select_volumes(&self, indices: &[usize]) -> Result<Volume4D> {
        let slabs = indices
            .iter()
            .map(|&j| {
                if j >= self.volumes() {
                    Err(Error::IndexOutOfBounds {
                        index: j,
                        len: self.volumes(),
                    })
                } else {
                    Ok(self.slab(j).to_vec())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Volume4D::from_slabs(self.spatial_dims(), slabs)?.with_metadata_of(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3D {
    dims: [usize; 3],
    flags: Vec<bool>,
}

impl Mask3D {
    pub fn new(dims: [usize; 3], flags: Vec<bool>) -> Result<Self> {
        let len = dims.iter().product::<usize>();
        if flags.len() != len {
            return Err(Error::mismatch(len, flags.len()));
        }
        Ok(Self { dims, flags })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            flags: vec![true; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut flags = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    flags.push(f(x, y, z));
                }
            }
        }
        Self { dims, flags }
    }

    /// Mask of voxels whose value in volume 0 is nonzero.
    pub fn from_volume(vol: &Volume4D) -> Self {
        Self {
            dims: vol.spatial_dims(),
            flags: vol.slab(0).iter().map(|&v| v != 0.0).collect(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Linear spatial indices of the selected voxels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub(crate) fn check_against(&self, spatial: [usize; 3]) -> Result<()> {
        if self.dims != spatial {
            return Err(Error::mismatch(format!("mask {spatial:?}"), format!("{:?}", self.dims)));
        }
        Ok(())
    }
}

/// Maps rows of a feature matrix back to spatial voxels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelIndex {
    dims: [usize; 3],
    linear: Vec<usize>,
}

impl VoxelIndex {
    pub fn new(dims: [usize; 3], linear: Vec<usize>) -> Result<Self> {
        let m = dims.iter().product::<usize>();
        if let Some(&bad) = linear.iter().find(|&&i| i >= m) {
            return Err(Error::IndexOutOfBounds { index: bad, len: m });
        }
        Ok(Self { dims, linear })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            dims,
            linear: (0..dims.iter().product()).collect(),
        }
    }

    /// All voxels when `mask` is `None`, otherwise the masked voxels in
    /// ascending linear order.
    pub fn for_mask(dims: [usize; 3], mask: Option<&Mask3D>) -> Result<Self> {
        match mask {
            None => Ok(Self::full(dims)),
            Some(mask) => {
                mask.check_against(dims)?;
                let linear = mask.indices();
                if linear.is_empty() {
                    return Err(Error::EmptyMask);
                }
                Ok(Self { dims, linear })
            }
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn linear(&self) -> &[usize] {
        &self.linear
    }

    pub fn coords(&self, row: usize) -> (usize, usize, usize) {
        let i = self.linear[row];
        let [l, w, _] = self.dims;
        (i % l, (i / l) % w, i / (l * w))
    }
}

/// Edge length of the cubic patch for a given radius.
pub fn patch_edge(radius: usize) -> usize {
    2 * radius + 1
}

/// Number of samples in one patch, `(2r+1)^3`.
pub fn patch_len(radius: usize) -> usize {
    patch_edge(radius).pow(3)
}

/// Position of the patch center in raster order.
pub fn patch_center(radius: usize) -> usize {
    (patch_len(radius) - 1) / 2
}

/// Clamped spatial source indices of every patch element, one row per
/// included voxel. Patch elements are in raster order (dx fastest).
#[derive(Debug, Clone)]
pub struct Neighbourhoods {
    radius: usize,
    patch_len: usize,
    offsets: Vec<usize>,
}

impl Neighbourhoods {
    pub fn new(index: &VoxelIndex, radius: usize) -> Self {
        let p = patch_len(radius);
        let [l, w, h] = index.dims();
        let r = radius as isize;
        let clamp = |c: isize, n: usize| c.clamp(0, n as isize - 1) as usize;
        let mut offsets = vec![0usize; index.len() * p];
        offsets
            .par_chunks_mut(p)
            .enumerate()
            .for_each(|(row, out)| {
                let (x, y, z) = index.coords(row);
                let (x, y, z) = (x as isize, y as isize, z as isize);
                let mut k = 0;
                for dz in -r..=r {
                    let zz = clamp(z + dz, h);
                    for dy in -r..=r {
                        let yy = clamp(y + dy, w);
                        for dx in -r..=r {
                            let xx = clamp(x + dx, l);
                            out[k] = xx + l * (yy + w * zz);
                            k += 1;
                        }
                    }
                }
            });
        Self {
            radius,
            patch_len: p,
            offsets,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn row(&self, row: usize) -> &[usize] {
        &self.offsets[row * self.patch_len..(row + 1) * self.patch_len]
    }
}

/// Materialized `m × (2r+1)^3 × n` feature tensor, laid out as
/// `features[(row * patch_len + k) * n + v]`.
#[derive(Debug, Clone)]
pub struct PatchFeatures {
    radius: usize,
    patch_len: usize,
    volumes: usize,
    features: Vec<f64>,
    voxel_index: VoxelIndex,
}

impl PatchFeatures {
    pub fn rows(&self) -> usize {
        self.voxel_index.len()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn volumes(&self) -> usize {
        self.volumes
    }

    pub fn voxel_index(&self) -> &VoxelIndex {
        &self.voxel_index
    }

    pub fn get(&self, row: usize, k: usize, v: usize) -> f64 {
        self.features[(row * self.patch_len + k) * self.volumes + v]
    }

    pub fn raw(&self) -> &[f64] {
        &self.features
    }

    /// Center-voxel values of volume `v`, one per row.
    pub fn centers(&self, v: usize) -> Vec<f64> {
        let c = patch_center(self.radius);
        (0..self.rows()).map(|row| self.get(row, c, v)).collect()
    }
}

/// Extracts the clamp-padded p-neighbourhood of every included voxel across
/// all volumes.
pub fn extract_patches(vol: &Volume4D, radius: usize, mask: Option<&Mask3D>) -> Result<PatchFeatures> {
    let voxel_index = VoxelIndex::for_mask(vol.spatial_dims(), mask)?;
    let hoods = Neighbourhoods::new(&voxel_index, radius);
    let p = hoods.patch_len();
    let n = vol.volumes();
    let m = vol.voxels();
    let data = vol.data();
    let mut features = vec![0.0; voxel_index.len() * p * n];
    features
        .par_chunks_mut(p * n)
        .enumerate()
        .for_each(|(row, out)| {
            for (k, &src) in hoods.row(row).iter().enumerate() {
                for v in 0..n {
                    out[k * n + v] = data[v * m + src];
                }
            }
        });
    Ok(PatchFeatures {
        radius,
        patch_len: p,
        volumes: n,
        features,
        voxel_index,
    })
}

/// Values of one 3D slab at the mapped voxels, in row order.
pub fn gather_rows(slab: &[f64], voxel_index: &VoxelIndex) -> Result<Vec<f64>> {
    let m = voxel_index.dims().iter().product::<usize>();
    if slab.len() != m {
        return Err(Error::mismatch(m, slab.len()));
    }
    Ok(voxel_index.linear().iter().map(|&i| slab[i]).collect())
}

/// Places `values` at their mapped voxels; every other voxel gets `passthrough`.
pub fn scatter_rows(values: &[f64], voxel_index: &VoxelIndex, passthrough: f64) -> Result<Vec<f64>> {
    let mut out = vec![passthrough; voxel_index.dims().iter().product()];
    scatter_into(values, voxel_index, &mut out)?;
    Ok(out)
}

/// Like [`scatter_rows`], but writes into an existing slab so unmapped voxels
/// keep their current values.
pub fn scatter_into(values: &[f64], voxel_index: &VoxelIndex, slab: &mut [f64]) -> Result<()> {
    if values.len() != voxel_index.len() {
        return Err(Error::mismatch(voxel_index.len(), values.len()));
    }
    for (&v, &i) in values.iter().zip(voxel_index.linear()) {
        let len = slab.len();
        *slab.get_mut(i).ok_or(Error::IndexOutOfBounds { index: i, len })? = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(dims: [usize; 4]) -> Volume4D {
        let len = dims.iter().product::<usize>();
        Volume4D::new(dims, (0..len).map(|i| i as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Volume4D::new([2, 2, 2, 0], vec![]).is_err());
        assert!(Volume4D::new([2, 2, 2, 2], vec![0.0; 15]).is_err());
        let mut d = vec![0.0; 16];
        d[3] = f64::NAN;
        assert!(matches!(Volume4D::new([2, 2, 2, 2], d), Err(Error::NonFinite(3))));
    }

    #[test]
    fn radius_zero_is_voxel_itself() {
        let vol = ramp([2, 2, 2, 3]);
        let f = extract_patches(&vol, 0, None).unwrap();
        assert_eq!((f.rows(), f.patch_len(), f.volumes()), (8, 1, 3));
        for row in 0..8 {
            for v in 0..3 {
                assert_eq!(f.get(row, 0, v), vol.data()[v * 8 + row]);
            }
        }
    }

    #[test]
    fn radius_one_layout() {
        let vol = ramp([10, 10, 10, 5]);
        let f = extract_patches(&vol, 1, None).unwrap();
        assert_eq!((f.rows(), f.patch_len(), f.volumes()), (1000, 27, 5));
        assert_eq!(f.raw().len(), 1000 * 27 * 5);
    }

    #[test]
    fn clamp_padding_on_a_line() {
        let vol = Volume4D::new([3, 1, 1, 1], vec![10.0, 20.0, 30.0]).unwrap();
        let f = extract_patches(&vol, 1, None).unwrap();
        // Every (dy, dz) plane clamps onto the single row, so each 3-run along
        // x repeats [v0, v0, v1] for the corner voxel.
        for plane in 0..9 {
            let xs: Vec<f64> = (0..3).map(|dx| f.get(0, plane * 3 + dx, 0)).collect();
            assert_eq!(xs, vec![10.0, 10.0, 20.0]);
        }
        let last: Vec<f64> = (0..3).map(|dx| f.get(2, dx, 0)).collect();
        assert_eq!(last, vec![20.0, 30.0, 30.0]);
    }

    #[test]
    fn clamp_padding_matches_brute_force() {
        let dims = [4, 3, 5, 2];
        let vol = ramp(dims);
        for radius in 0..3 {
            let f = extract_patches(&vol, radius, None).unwrap();
            let r = radius as isize;
            for row in 0..f.rows() {
                let (x, y, z) = f.voxel_index().coords(row);
                let mut k = 0;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let cx = (x as isize + dx).clamp(0, dims[0] as isize - 1) as usize;
                            let cy = (y as isize + dy).clamp(0, dims[1] as isize - 1) as usize;
                            let cz = (z as isize + dz).clamp(0, dims[2] as isize - 1) as usize;
                            for v in 0..dims[3] {
                                assert_eq!(f.get(row, k, v), vol.get(cx, cy, cz, v));
                            }
                            k += 1;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn center_element_is_source_voxel() {
        let vol = ramp([5, 4, 3, 3]);
        let mask = Mask3D::from_fn([5, 4, 3], |x, y, z| (x + y + z) % 2 == 0);
        let f = extract_patches(&vol, 2, Some(&mask)).unwrap();
        let c = patch_center(2);
        assert_eq!(c, 62);
        for row in 0..f.rows() {
            let (x, y, z) = f.voxel_index().coords(row);
            for v in 0..3 {
                assert_eq!(f.get(row, c, v).to_bits(), vol.get(x, y, z, v).to_bits());
            }
        }
    }

    #[test]
    fn mask_errors() {
        let vol = ramp([2, 2, 2, 2]);
        let wrong = Mask3D::full([2, 2, 3]);
        assert!(matches!(
            extract_patches(&vol, 0, Some(&wrong)),
            Err(Error::DimensionMismatch { .. })
        ));
        let empty = Mask3D::new([2, 2, 2], vec![false; 8]).unwrap();
        assert!(matches!(extract_patches(&vol, 0, Some(&empty)), Err(Error::EmptyMask)));
    }

    #[test]
    fn scatter_single_voxel() {
        let idx = VoxelIndex::new([2, 2, 2], vec![5]).unwrap();
        let out = scatter_rows(&[7.5], &idx, 0.0).unwrap();
        assert_eq!(out.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(out[5], 7.5);
    }

    #[test]
    fn scatter_rejects_bad_lengths() {
        let idx = VoxelIndex::full([2, 2, 2]);
        assert!(scatter_rows(&[1.0; 7], &idx, 0.0).is_err());
        assert!(VoxelIndex::new([2, 2, 2], vec![8]).is_err());
    }

    #[test]
    fn gather_scatter_round_trip_under_permutations() {
        let vol = ramp([4, 4, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..64).collect();
            perm.shuffle(&mut rng);
            let idx = VoxelIndex::new([4, 4, 4], perm).unwrap();
            let g = gather_rows(vol.slab(1), &idx).unwrap();
            let s = scatter_rows(&g, &idx, f64::NAN).unwrap();
            assert!(s.iter().zip(vol.slab(1)).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn radius_zero_matches_masked_slab() {
        let vol = ramp([3, 3, 3, 4]);
        let mask = Mask3D::from_fn([3, 3, 3], |x, _, z| x != z);
        let f = extract_patches(&vol, 0, Some(&mask)).unwrap();
        for v in 0..4 {
            let expect = gather_rows(vol.slab(v), f.voxel_index()).unwrap();
            assert_eq!(f.centers(v), expect);
        }
    }
}
