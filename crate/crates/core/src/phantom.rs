//! Synthetic diffusion-weighted phantoms and multi-channel magnitude noise.
//!
//! Clean signal follows the single-tensor model `S0 · exp(-b gᵀ D g)` per
//! tissue region. Noise is complex Gaussian per receive channel, combined by
//! root sum of squares.
//!
//! Noise draws are reproducible across platforms and thread counts: every
//! (voxel, volume) pair owns ChaCha8 stream `voxel · n + volume` under the
//! 32-byte key derived from `ChaCha8Rng::seed_from_u64(seed)`, and draws
//! `2 · channels` standard normals (rand_distr ziggurat) ordered channel by
//! channel, real part first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume4D};

/// Symmetric positive-definite diffusion tensor in mm²/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionTensor([[f64; 3]; 3]);

impl DiffusionTensor {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        for i in 0..3 {
            for j in 0..3 {
                if !m[i][j].is_finite() {
                    return Err(Error::InvalidInput("tensor has non-finite entries".into()));
                }
                let scale = m[i][j].abs().max(m[j][i].abs());
                if (m[i][j] - m[j][i]).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidInput(format!("tensor is not symmetric: {m:?}")));
                }
            }
        }
        // Sylvester: all leading principal minors positive.
        let m1 = m[0][0];
        let m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let m3 = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0) {
            return Err(Error::InvalidInput(format!("tensor is not positive definite: {m:?}")));
        }
        Ok(Self(m))
    }

    pub fn isotropic(d: f64) -> Result<Self> {
        Self::new([[d, 0.0, 0.0], [0.0, d, 0.0], [0.0, 0.0, d]])
    }

    pub fn diagonal(d: [f64; 3]) -> Result<Self> {
        Self::new([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    /// Cylindrically symmetric tensor `λ⊥ I + (λ∥ − λ⊥) e eᵀ`.
    pub fn axial(parallel: f64, perpendicular: f64, axis: [f64; 3]) -> Result<Self> {
        let e = normalized(axis).ok_or_else(|| Error::InvalidInput("zero tensor axis".into()))?;
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (parallel - perpendicular) * e[i] * e[j];
            }
            m[i][i] += perpendicular;
        }
        Self::new(m)
    }

    /// Apparent diffusivity `gᵀ D g` along direction `g`.
    pub fn quadratic_form(&self, g: [f64; 3]) -> f64 {
        let d = &self.0;
        (0..3)
            .map(|i| g[i] * (0..3).map(|j| d[i][j] * g[j]).sum::<f64>())
            .sum()
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.0
    }
}

fn normalized(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    /// s/mm²
    pub b: f64,
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable {
    entries: Vec<Gradient>,
}

impl GradientTable {
    /// Validates b ≥ 0 and unit-norm directions on diffusion-weighted entries.
    pub fn new(entries: Vec<Gradient>) -> Result<Self> {
        for (i, g) in entries.iter().enumerate() {
            if !(g.b.is_finite() && g.b >= 0.0) {
                return Err(Error::InvalidInput(format!("gradient {i}: b-value {} must be >= 0", g.b)));
            }
            if g.b > 0.0 {
                let n = g.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !((n - 1.0).abs() <= 1e-6) {
                    return Err(Error::InvalidInput(format!("gradient {i}: direction norm {n} is not 1")));
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::InvalidInput("gradient table is empty".into()));
        }
        Ok(Self { entries })
    }

    /// `b0_count` unweighted volumes followed by each shell's directions,
    /// spread over the hemisphere on a golden-angle spiral.
    pub fn shells(b0_count: usize, shells: &[(f64, usize)]) -> Result<Self> {
        Self::new(shell_entries(b0_count, shells))
    }

    /// Two b=0 volumes, then the remaining volumes split between b=1000 and
    /// b=2000 shells (the b=1000 shell takes the odd one out).
    pub fn two_shell(volumes: usize) -> Result<Self> {
        if volumes < 3 {
            return Err(Error::InvalidInput(format!("two-shell table needs >= 3 volumes, got {volumes}")));
        }
        let dw = volumes - 2;
        let hi = dw / 2;
        Self::shells(2, &[(1000.0, dw - hi), (2000.0, hi)])
    }

    pub fn entries(&self) -> &[Gradient] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn b0_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, g)| (g.b == 0.0).then_some(i))
            .collect()
    }
}

fn shell_entries(b0_count: usize, shells: &[(f64, usize)]) -> Vec<Gradient> {
    let mut entries = vec![
        Gradient {
            b: 0.0,
            direction: [0.0; 3]
        };
        b0_count
    ];
    for (s, &(b, count)) in shells.iter().enumerate() {
        entries.extend(
            hemisphere_directions(count, s as f64 * 0.5)
                .into_iter()
                .map(|direction| Gradient { b, direction }),
        );
    }
    entries
}

fn hemisphere_directions(count: usize, twist: f64) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64 + twist;
            normalized([r * phi.cos(), r * phi.sin(), z]).expect("unit vector")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Shape {
    /// Tests a voxel-center position given in index coordinates.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Shape::Ellipsoid { center, radii } => {
                (0..3).map(|i| ((p[i] - center[i]) / radii[i]).powi(2)).sum::<f64>() <= 1.0
            }
            Shape::Box { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tissue {
    pub name: String,
    pub s0: f64,
    pub tensor: DiffusionTensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub shape: Shape,
    /// Index into the tissue list.
    pub tissue: usize,
}

/// Geometry, tissues, and acquisition scheme. Later regions paint over
/// earlier ones; unpainted voxels are background with zero signal.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub tissues: Vec<Tissue>,
    pub regions: Vec<Region>,
    pub gradients: GradientTable,
    pub seed: u64,
}

impl PhantomSpec {
    /// Brain-like phantom: gray-matter ellipsoid, three orthogonal white
    /// matter tracts, and CSF-filled ventricles.
    pub fn brain(dims: [usize; 3], gradients: GradientTable, seed: u64) -> Result<Self> {
        let f = |a: f64, b: f64, c: f64| [a * dims[0] as f64, b * dims[1] as f64, c * dims[2] as f64];
        let center = f(0.5, 0.5, 0.5).map(|v| v - 0.5);
        let tissues = vec![
            Tissue {
                name: "gray".into(),
                s0: 100.0,
                tensor: DiffusionTensor::isotropic(0.8e-3)?,
            },
            Tissue {
                name: "white_x".into(),
                s0: 80.0,
                tensor: DiffusionTensor::axial(1.7e-3, 0.3e-3, [1.0, 0.0, 0.0])?,
            },
            Tissue {
                name: "white_y".into(),
                s0: 80.0,
                tensor: DiffusionTensor::axial(1.7e-3, 0.3e-3, [0.0, 1.0, 0.0])?,
            },
            Tissue {
                name: "white_z".into(),
                s0: 80.0,
                tensor: DiffusionTensor::axial(1.7e-3, 0.3e-3, [0.0, 0.0, 1.0])?,
            },
            Tissue {
                name: "csf".into(),
                s0: 150.0,
                tensor: DiffusionTensor::isotropic(3.0e-3)?,
            },
        ];
        let regions = vec![
            Region {
                shape: Shape::Ellipsoid {
                    center,
                    radii: f(0.45, 0.45, 0.42),
                },
                tissue: 0,
            },
            Region {
                shape: Shape::Box {
                    min: f(0.2, 0.3, 0.55),
                    max: f(0.8, 0.42, 0.68),
                },
                tissue: 1,
            },
            Region {
                shape: Shape::Box {
                    min: f(0.58, 0.18, 0.3),
                    max: f(0.7, 0.82, 0.45),
                },
                tissue: 2,
            },
            Region {
                shape: Shape::Box {
                    min: f(0.25, 0.6, 0.2),
                    max: f(0.38, 0.72, 0.8),
                },
                tissue: 3,
            },
            Region {
                shape: Shape::Ellipsoid {
                    center: f(0.42, 0.5, 0.45),
                    radii: f(0.08, 0.14, 0.08),
                },
                tissue: 4,
            },
        ];
        let spec = Self {
            dims,
            tissues,
            regions,
            gradients,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidInput(format!("phantom dims {:?} must be positive", self.dims)));
        }
        for r in &self.regions {
            if r.tissue >= self.tissues.len() {
                return Err(Error::InvalidInput(format!("region refers to missing tissue {}", r.tissue)));
            }
            if let Shape::Ellipsoid { radii, .. } = r.shape {
                if radii.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidInput("ellipsoid radii must be positive".into()));
                }
            }
        }
        for t in &self.tissues {
            if !(t.s0.is_finite() && t.s0 >= 0.0) {
                return Err(Error::InvalidInput(format!("tissue {}: S0 must be >= 0", t.name)));
            }
            DiffusionTensor::new(t.tensor.0)?;
        }
        GradientTable::new(self.gradients.entries.clone())?;
        Ok(())
    }

    /// Tissue index per voxel (`None` for background), x fastest.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let [l, w, h] = self.dims;
        let mut out = Vec::with_capacity(l * w * h);
        for z in 0..h {
            for y in 0..w {
                for x in 0..l {
                    let p = [x as f64, y as f64, z as f64];
                    out.push(self.regions.iter().rev().find(|r| r.shape.contains(p)).map(|r| r.tissue));
                }
            }
        }
        out
    }

    pub fn tissue_mask(&self) -> Mask3D {
        Mask3D::new(self.dims, self.labels().iter().map(Option::is_some).collect()).expect("label count matches dims")
    }

    /// Loads a spec from its TOML text form.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.into_spec()
    }
}

/// Noise-free signal for every voxel and gradient.
pub fn clean_signal(spec: &PhantomSpec) -> Result<Volume4D> {
    spec.validate()?;
    let labels = spec.labels();
    let slabs = spec
        .gradients
        .entries()
        .iter()
        .map(|g| {
            let per_tissue: Vec<f64> = spec
                .tissues
                .iter()
                .map(|t| {
                    if g.b == 0.0 {
                        t.s0
                    } else {
                        t.s0 * (-g.b * t.tensor.quadratic_form(g.direction)).exp()
                    }
                })
                .collect();
            labels.iter().map(|l| l.map_or(0.0, |t| per_tissue[t])).collect()
        })
        .collect();
    Volume4D::from_slabs(spec.dims, slabs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub channels: usize,
    /// Standard deviation of each channel's real and imaginary parts.
    pub sigma: f64,
    /// Set when `sigma` was derived from a target SNR.
    pub snr_target: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            sigma: 0.0,
            snr_target: None,
        }
    }
}

impl NoiseSpec {
    pub fn new(sigma: f64, channels: usize) -> Result<Self> {
        let spec = Self {
            channels,
            sigma,
            snr_target: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Picks σ so that mean clean b=0 signal over `tissue` divided by σ
    /// equals `snr`.
    pub fn for_snr(snr: f64, channels: usize, clean: &Volume4D, b0_volumes: &[usize], tissue: &Mask3D) -> Result<Self> {
        if !(snr.is_finite() && snr > 0.0) {
            return Err(Error::InvalidInput(format!("SNR must be positive, got {snr}")));
        }
        let mean = mean_b0_tissue(clean, b0_volumes, tissue)?;
        let spec = Self {
            channels,
            sigma: mean / snr,
            snr_target: Some(snr),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::InvalidInput("channel count must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Mean clean signal over tissue voxels of the b=0 volumes.
pub fn mean_b0_tissue(clean: &Volume4D, b0_volumes: &[usize], tissue: &Mask3D) -> Result<f64> {
    tissue.check_against(clean.spatial_dims())?;
    if b0_volumes.is_empty() {
        return Err(Error::InvalidInput("no b=0 volumes to measure SNR against".into()));
    }
    let idx = tissue.indices();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut sum = 0.0;
    for &v in b0_volumes {
        if v >= clean.volumes() {
            return Err(Error::IndexOutOfBounds { index: v, len: clean.volumes() });
        }
        let slab = clean.slab(v);
        sum += idx.iter().map(|&i| slab[i]).sum::<f64>();
    }
    Ok(sum / (idx.len() * b0_volumes.len()) as f64)
}

/// Corrupts `clean` with complex Gaussian noise on `noise.channels` receive
/// channels and returns the root-sum-of-squares magnitude. Each channel
/// carries `S/√C` as its real part, so the noiseless combination is `S`;
/// σ = 0 returns the input unchanged.
pub fn apply_noise(clean: &Volume4D, noise: &NoiseSpec, seed: u64) -> Result<Volume4D> {
    noise.validate()?;
    if noise.sigma == 0.0 {
        return Ok(clean.clone());
    }
    let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
    let (m, n) = (clean.voxels(), clean.volumes());
    let c = noise.channels;
    let per_channel_scale = 1.0 / (c as f64).sqrt();
    let sigma = noise.sigma;
    let src = clean.data();
    let mut data = vec![0.0; src.len()];
    data.par_iter_mut().enumerate().for_each(|(i, out)| {
        let (v, voxel) = (i / m, i % m);
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((voxel * n + v) as u64);
        let re0 = src[i] * per_channel_scale;
        let mut power = 0.0;
        for _ in 0..c {
            let re = re0 + sigma * rng.sample::<f64, _>(StandardNormal);
            let im = sigma * rng.sample::<f64, _>(StandardNormal);
            power += re * re + im * im;
        }
        *out = power.sqrt();
    });
    Ok(Volume4D::new(clean.dims(), data)?.with_metadata_of(clean))
}

// ---- TOML form -------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dims: [usize; 3],
    #[serde(default)]
    seed: u64,
    #[serde(rename = "tissue")]
    tissues: Vec<RawTissue>,
    #[serde(rename = "region", default)]
    regions: Vec<RawRegion>,
    gradients: RawGradients,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTissue {
    name: String,
    s0: f64,
    diffusivity: Option<f64>,
    tensor: Option<[[f64; 3]; 3]>,
    axial: Option<[f64; 2]>,
    axis: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    tissue: String,
    shape: String,
    center: Option<[f64; 3]>,
    radii: Option<[f64; 3]>,
    min: Option<[f64; 3]>,
    max: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGradients {
    #[serde(default)]
    b0: usize,
    #[serde(default)]
    shells: Vec<RawShell>,
    /// Explicit rows of `[b, gx, gy, gz]`, appended after the shells.
    #[serde(default)]
    table: Vec<[f64; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShell {
    b: f64,
    directions: usize,
}

impl RawSpec {
    fn into_spec(self) -> Result<PhantomSpec> {
        let tissues = self
            .tissues
            .into_iter()
            .map(|t| {
                let tensor = match (t.diffusivity, t.tensor, t.axial) {
                    (Some(d), None, None) => DiffusionTensor::isotropic(d)?,
                    (None, Some(m), None) => DiffusionTensor::new(m)?,
                    (None, None, Some([par, perp])) => DiffusionTensor::axial(
                        par,
                        perp,
                        t.axis
                            .ok_or_else(|| Error::Config(format!("tissue {}: axial needs axis", t.name)))?,
                    )?,
                    _ => {
                        return Err(Error::Config(format!(
                            "tissue {}: give exactly one of diffusivity, tensor, axial",
                            t.name
                        )))
                    }
                };
                Ok(Tissue {
                    name: t.name,
                    s0: t.s0,
                    tensor,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let regions = self
            .regions
            .into_iter()
            .map(|r| {
                let tissue = tissues
                    .iter()
                    .position(|t| t.name == r.tissue)
                    .ok_or_else(|| Error::Config(format!("unknown tissue {:?}", r.tissue)))?;
                let shape = match (r.shape.as_str(), r.center, r.radii, r.min, r.max) {
                    ("ellipsoid", Some(center), Some(radii), None, None) => Shape::Ellipsoid { center, radii },
                    ("box", None, None, Some(min), Some(max)) => Shape::Box { min, max },
                    (other, ..) => {
                        return Err(Error::Config(format!(
                            "region shape {other:?}: ellipsoid needs center+radii, box needs min+max"
                        )))
                    }
                };
                Ok(Region { shape, tissue })
            })
            .collect::<Result<Vec<_>>>()?;
        let shells: Vec<(f64, usize)> = self.gradients.shells.iter().map(|s| (s.b, s.directions)).collect();
        let mut entries = shell_entries(self.gradients.b0, &shells);
        entries.extend(self.gradients.table.iter().map(|r| Gradient {
            b: r[0],
            direction: [r[1], r[2], r[3]],
        }));
        let spec = PhantomSpec {
            dims: self.dims,
            tissues,
            regions,
            gradients: GradientTable::new(entries)?,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}
