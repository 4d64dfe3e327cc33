//! RMSE, R², and residual maps against a reference volume.
//!
//! Scores pool every included voxel of every volume into one number. `rmse`
//! is symmetric in its arguments; `r_squared` is not, since its denominator
//! is the spread of the reference alone.

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume4D};

/// Header row of the evaluation CSV. The first column carries the schema
/// version of each record.
pub const REPORT_HEADER: &str = "schema,snr,method,rmse,r2,voxel_count";
pub const REPORT_SCHEMA: &str = "p2s-eval/1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeScore {
    pub rmse: f64,
    /// `None` when the reference volume is constant over the mask.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub r2: f64,
    /// Included spatial voxels (per volume).
    pub voxel_count: usize,
    pub per_volume: Option<Vec<VolumeScore>>,
}

impl EvalReport {
    /// One CSV record matching [`REPORT_HEADER`].
    pub fn csv_record(&self, snr: Option<f64>, method: &str) -> String {
        format!(
            "{REPORT_SCHEMA},{},{},{},{},{}",
            snr.map(|s| s.to_string()).unwrap_or_default(),
            method,
            self.rmse,
            self.r2,
            self.voxel_count
        )
    }
}

fn included(ref_: &Volume4D, est: &Volume4D, mask: Option<&Mask3D>) -> Result<Vec<usize>> {
    if ref_.dims() != est.dims() {
        return Err(Error::mismatch(format!("{:?}", ref_.dims()), format!("{:?}", est.dims())));
    }
    match mask {
        None => Ok((0..ref_.voxels()).collect()),
        Some(mask) => {
            mask.check_against(ref_.spatial_dims())?;
            let idx = mask.indices();
            if idx.is_empty() {
                return Err(Error::EmptyMask);
            }
            Ok(idx)
        }
    }
}

struct Sums {
    sse: f64,
    sum_sq_dev: f64,
    count: usize,
}

fn sums(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> Sums {
    let mut sse = 0.0;
    let mut sum = 0.0;
    let mut count = 0;
    for (r, e) in pairs.clone() {
        sse += (r - e) * (r - e);
        sum += r;
        count += 1;
    }
    let mean = sum / count as f64;
    let sum_sq_dev = pairs.map(|(r, _)| (r - mean) * (r - mean)).sum();
    Sums {
        sse,
        sum_sq_dev,
        count,
    }
}

fn pairs<'a>(ref_: &'a Volume4D, est: &'a Volume4D, idx: &'a [usize], vols: std::ops::Range<usize>) -> impl Iterator<Item = (f64, f64)> + Clone + 'a {
    vols.flat_map(move |v| {
        let (r, e) = (ref_.slab(v), est.slab(v));
        idx.iter().map(move |&i| (r[i], e[i]))
    })
}

/// Root of the mean squared difference over included voxels and volumes.
pub fn rmse(ref_: &Volume4D, est: &Volume4D, mask: Option<&Mask3D>) -> Result<f64> {
    let idx = included(ref_, est, mask)?;
    let s = sums(pairs(ref_, est, &idx, 0..ref_.volumes()));
    Ok((s.sse / s.count as f64).sqrt())
}

/// `1 − SS_res / SS_tot`, with `SS_tot` about the mean of the reference.
pub fn r_squared(ref_: &Volume4D, est: &Volume4D, mask: Option<&Mask3D>) -> Result<f64> {
    let idx = included(ref_, est, mask)?;
    let s = sums(pairs(ref_, est, &idx, 0..ref_.volumes()));
    if s.sum_sq_dev == 0.0 {
        return Err(Error::ConstantReference);
    }
    Ok(1.0 - s.sse / s.sum_sq_dev)
}

/// Pooled RMSE and R², optionally broken down per volume.
pub fn evaluate(ref_: &Volume4D, est: &Volume4D, mask: Option<&Mask3D>, per_volume: bool) -> Result<EvalReport> {
    let idx = included(ref_, est, mask)?;
    let s = sums(pairs(ref_, est, &idx, 0..ref_.volumes()));
    if s.sum_sq_dev == 0.0 {
        return Err(Error::ConstantReference);
    }
    let per_volume = per_volume.then(|| {
        (0..ref_.volumes())
            .map(|v| {
                let sv = sums(pairs(ref_, est, &idx, v..v + 1));
                VolumeScore {
                    rmse: (sv.sse / sv.count as f64).sqrt(),
                    r2: (sv.sum_sq_dev > 0.0).then(|| 1.0 - sv.sse / sv.sum_sq_dev),
                }
            })
            .collect()
    });
    Ok(EvalReport {
        rmse: (s.sse / s.count as f64).sqrt(),
        r2: 1.0 - s.sse / s.sum_sq_dev,
        voxel_count: idx.len(),
        per_volume,
    })
}

/// Voxel-wise squared difference.
pub fn residual_map(noisy: &Volume4D, denoised: &Volume4D) -> Result<Volume4D> {
    if noisy.dims() != denoised.dims() {
        return Err(Error::mismatch(format!("{:?}", noisy.dims()), format!("{:?}", denoised.dims())));
    }
    let data = noisy
        .data()
        .iter()
        .zip(denoised.data())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(Volume4D::new(noisy.dims(), data)?.with_metadata_of(noisy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(v: &[f64]) -> Volume4D {
        Volume4D::new([v.len(), 1, 1, 1], v.to_vec()).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = line(&[1.0, 2.0, 3.0]);
        assert_eq!(rmse(&a, &a, None).unwrap(), 0.0);
        let b = line(&[1.0, 2.0, 5.0]);
        assert!((rmse(&a, &b, None).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&a, &b, None).unwrap(), rmse(&b, &a, None).unwrap());
    }

    #[test]
    fn r2_examples() {
        let a = line(&[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(r_squared(&a, &a, None).unwrap(), 1.0);
        let mean = line(&[3.0; 4]);
        assert!(r_squared(&a, &mean, None).unwrap().abs() < 1e-15);
        assert!(matches!(r_squared(&mean, &a, None), Err(Error::ConstantReference)));
    }

    #[test]
    fn r2_is_not_symmetric() {
        let a = line(&[1.0, 2.0, 3.0, 6.0]);
        let b = line(&[0.0, 2.5, 2.0, 9.0]);
        assert_ne!(r_squared(&a, &b, None).unwrap(), r_squared(&b, &a, None).unwrap());
    }

    #[test]
    fn masked_and_errors() {
        let a = Volume4D::new([2, 1, 1, 2], vec![1.0, 100.0, 2.0, -50.0]).unwrap();
        let b = Volume4D::new([2, 1, 1, 2], vec![1.0, 0.0, 4.0, 0.0]).unwrap();
        let mask = Mask3D::new([2, 1, 1], vec![true, false]).unwrap();
        assert!((rmse(&a, &b, Some(&mask)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let empty = Mask3D::new([2, 1, 1], vec![false, false]).unwrap();
        assert!(matches!(rmse(&a, &b, Some(&empty)), Err(Error::EmptyMask)));
        let c = line(&[1.0, 2.0]);
        assert!(rmse(&a, &c, None).is_err());
        assert!(residual_map(&a, &c).is_err());
    }

    #[test]
    fn residuals() {
        let a = line(&[3.0, 1.0]);
        let b = line(&[1.0, 1.0]);
        assert_eq!(residual_map(&a, &b).unwrap().data(), &[4.0, 0.0]);
        assert!(residual_map(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn report_breakdown_and_csv() {
        let a = Volume4D::new([2, 1, 1, 2], vec![1.0, 3.0, 5.0, 5.0]).unwrap();
        let b = Volume4D::new([2, 1, 1, 2], vec![1.0, 3.0, 4.0, 6.0]).unwrap();
        let r = evaluate(&a, &b, None, true).unwrap();
        let pv = r.per_volume.as_ref().unwrap();
        assert_eq!(pv[0].rmse, 0.0);
        assert_eq!(pv[0].r2, Some(1.0));
        assert_eq!(pv[1].r2, None);
        assert_eq!(r.voxel_count, 2);
        let rec = r.csv_record(Some(10.0), "noisy");
        assert!(rec.starts_with("p2s-eval/1,10,noisy,"));
        assert_eq!(rec.split(',').count(), REPORT_HEADER.split(',').count());
    }
}
