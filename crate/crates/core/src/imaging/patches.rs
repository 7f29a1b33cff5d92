use crate::error::{LsedError, Result};
use crate::imaging::Image;

/// Sample variance below which a patch is treated as flat.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Region grid and patch geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGridConfig {
    pub regions_x: usize,
    pub regions_y: usize,
    pub patch_size: usize,
    /// Fraction of a patch shared with its neighbour, in `[0, 1)`.
    pub overlap_fraction: f64,
}

impl Default for PatchGridConfig {
    fn default() -> Self {
        PatchGridConfig {
            regions_x: 3,
            regions_y: 3,
            patch_size: 8,
            overlap_fraction: 0.75,
        }
    }
}

impl PatchGridConfig {
    pub fn num_regions(&self) -> usize {
        self.regions_x * self.regions_y
    }

    /// Patch stride in pixels. Fails unless it is a positive integer.
    pub fn stride(&self) -> Result<usize> {
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(LsedError::config(format!(
                "overlap fraction {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        let s = self.patch_size as f64 * (1.0 - self.overlap_fraction);
        let rounded = s.round();
        if rounded < 1.0 || (s - rounded).abs() > 1e-9 {
            return Err(LsedError::config(format!(
                "patch size {} with overlap {} gives non-integer stride {s}",
                self.patch_size, self.overlap_fraction
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(LsedError::config("patch size must be at least 2"));
        }
        if self.regions_x == 0 || self.regions_y == 0 {
            return Err(LsedError::config("region grid must be non-empty"));
        }
        self.stride().map(|_| ())
    }

    /// Stable byte encoding, used when hashing descriptor metadata.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32);
        out.extend_from_slice(&(self.regions_x as u64).to_le_bytes());
        out.extend_from_slice(&(self.regions_y as u64).to_le_bytes());
        out.extend_from_slice(&(self.patch_size as u64).to_le_bytes());
        out.extend_from_slice(&self.overlap_fraction.to_le_bytes());
        out
    }
}

/// Splits `len` pixels into `count` contiguous blocks of `len / count`
/// pixels, with the remainder appended to the last block.
/// Returns `(offset, size)` pairs.
pub fn region_blocks(len: usize, count: usize) -> Vec<(usize, usize)> {
    let base = len / count;
    (0..count)
        .map(|i| {
            let size = if i + 1 == count { len - base * i } else { base };
            (base * i, size)
        })
        .collect()
}

/// A square block of pixels in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub values: Vec<f64>,
}

impl Patch {
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(LsedError::dims(size * size, values.len()));
        }
        Ok(Patch { size, values })
    }

    fn crop(image: &Image, x0: usize, y0: usize, size: usize) -> Patch {
        let mut values = Vec::with_capacity(size * size);
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                values.push(image.get(x, y));
            }
        }
        Patch { size, values }
    }
}

/// Cuts `image` into regions (row-major) and each region into patches
/// enumerated at a fixed stride in row-major order.
pub fn extract_patches(image: &Image, cfg: &PatchGridConfig) -> Result<Vec<Vec<Patch>>> {
    cfg.validate()?;
    let stride = cfg.stride()?;
    let p = cfg.patch_size;
    let cols = region_blocks(image.width(), cfg.regions_x);
    let rows = region_blocks(image.height(), cfg.regions_y);
    let mut regions = Vec::with_capacity(cfg.num_regions());
    for &(ry, rh) in &rows {
        for &(rx, rw) in &cols {
            if rw < p || rh < p {
                return Err(LsedError::config(format!(
                    "region of {rw}x{rh} pixels cannot hold a {p}x{p} patch"
                )));
            }
            let mut patches = Vec::with_capacity(((rh - p) / stride + 1) * ((rw - p) / stride + 1));
            for y in (ry..=ry + rh - p).step_by(stride) {
                for x in (rx..=rx + rw - p).step_by(stride) {
                    patches.push(Patch::crop(image, x, y, p));
                }
            }
            regions.push(patches);
        }
    }
    Ok(regions)
}

/// Zero mean, unit sample standard deviation. Patches whose sample variance
/// is below [`VARIANCE_FLOOR`] map to all zeros.
pub fn normalize_patch(patch: &Patch) -> Patch {
    let n = patch.values.len();
    if n < 2 {
        return Patch {
            size: patch.size,
            values: vec![0.0; n],
        };
    }
    let mean = patch.values.iter().sum::<f64>() / n as f64;
    let var = patch
        .values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    if var < VARIANCE_FLOOR {
        return Patch {
            size: patch.size,
            values: vec![0.0; n],
        };
    }
    let inv = 1.0 / var.sqrt();
    let mut values: Vec<f64> = patch.values.iter().map(|v| (v - mean) * inv).collect();
    // Remove the rounding residue of the mean so it is zero to ~1e-16.
    let drift = values.iter().sum::<f64>() / n as f64;
    values.iter_mut().for_each(|v| *v -= drift);
    Patch {
        size: patch.size,
        values,
    }
}
