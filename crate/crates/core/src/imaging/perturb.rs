use std::fmt;
use std::str::FromStr;

use crate::error::{LsedError, Result};
use crate::imaging::Image;

/// Simulated alignment error or sharpness loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// Horizontal translation in pixels (positive moves content right).
    ShiftX(i32),
    /// Vertical translation in pixels (positive moves content down).
    ShiftY(i32),
    /// In-plane rotation about the image centre, degrees counter-clockwise.
    Rotate(f64),
    /// Zoom about the image centre (> 1 enlarges content).
    Scale(f64),
    /// Downscale to `n x n` then back to the original size.
    Blur(usize),
}

const MAX_SHIFT: i32 = 8;
const MAX_ROTATION: f64 = 30.0;
const SCALE_RANGE: (f64, f64) = (0.7, 1.3);

impl Perturbation {
    pub fn kind(&self) -> &'static str {
        match self {
            Perturbation::ShiftX(_) => "shift_x",
            Perturbation::ShiftY(_) => "shift_y",
            Perturbation::Rotate(_) => "rotate",
            Perturbation::Scale(_) => "scale",
            Perturbation::Blur(_) => "blur",
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Perturbation::ShiftX(m) | Perturbation::ShiftY(m) => m as f64,
            Perturbation::Rotate(d) => d,
            Perturbation::Scale(s) => s,
            Perturbation::Blur(n) => n as f64,
        }
    }

    /// The identity element of this perturbation's family.
    pub fn is_identity(&self) -> bool {
        match *self {
            Perturbation::ShiftX(m) | Perturbation::ShiftY(m) => m == 0,
            Perturbation::Rotate(d) => d == 0.0,
            Perturbation::Scale(s) => s == 1.0,
            Perturbation::Blur(_) => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Perturbation::ShiftX(m) | Perturbation::ShiftY(m) => m.abs() <= MAX_SHIFT,
            Perturbation::Rotate(d) => d.is_finite() && d.abs() <= MAX_ROTATION,
            Perturbation::Scale(s) => s.is_finite() && (SCALE_RANGE.0..=SCALE_RANGE.1).contains(&s),
            Perturbation::Blur(n) => n >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(LsedError::config(format!("unsupported perturbation {self}")))
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.magnitude())
    }
}

impl FromStr for Perturbation {
    type Err = LsedError;

    /// Parses `kind:magnitude`, e.g. `shift_x:-4`, `rotate:20`, `blur:16`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, mag) = s
            .split_once(':')
            .ok_or_else(|| LsedError::config(format!("perturbation '{s}' is not kind:magnitude")))?;
        let bad = || LsedError::config(format!("bad magnitude in perturbation '{s}'"));
        let p = match kind.trim() {
            "shift_x" => Perturbation::ShiftX(mag.trim().parse().map_err(|_| bad())?),
            "shift_y" => Perturbation::ShiftY(mag.trim().parse().map_err(|_| bad())?),
            "rotate" => Perturbation::Rotate(mag.trim().parse().map_err(|_| bad())?),
            "scale" => Perturbation::Scale(mag.trim().parse().map_err(|_| bad())?),
            "blur" => Perturbation::Blur(mag.trim().parse().map_err(|_| bad())?),
            other => {
                return Err(LsedError::config(format!(
                    "unsupported perturbation kind '{other}'"
                )))
            }
        };
        p.validate()?;
        Ok(p)
    }
}

/// The full alignment-error and sharpness grid: shifts of ±2, ±4, ±6, ±8
/// pixels on both axes, rotations of ±10°, ±20°, ±30°, scale factors
/// 0.7–1.3, and blur through 48, 32 and 16 pixel resolutions.
pub fn robustness_grid() -> Vec<Perturbation> {
    let mut grid = Vec::new();
    for m in [-8, -6, -4, -2, 2, 4, 6, 8] {
        grid.push(Perturbation::ShiftX(m));
    }
    for m in [-8, -6, -4, -2, 2, 4, 6, 8] {
        grid.push(Perturbation::ShiftY(m));
    }
    for d in [-30.0, -20.0, -10.0, 10.0, 20.0, 30.0] {
        grid.push(Perturbation::Rotate(d));
    }
    for s in [0.7, 0.8, 0.9, 1.1, 1.2, 1.3] {
        grid.push(Perturbation::Scale(s));
    }
    for n in [48, 32, 16] {
        grid.push(Perturbation::Blur(n));
    }
    grid
}

/// Applies `p` to `image`, keeping the original size. Shifts replicate edge
/// pixels; rotation, scaling and blur use bilinear interpolation with
/// clamped borders.
pub fn perturb(image: &Image, p: &Perturbation) -> Result<Image> {
    p.validate()?;
    let (w, h) = (image.width(), image.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    match *p {
        Perturbation::ShiftX(m) => Image::from_fn(w, h, |x, y| {
            image.get_clamped(x as isize - m as isize, y as isize)
        }),
        Perturbation::ShiftY(m) => Image::from_fn(w, h, |x, y| {
            image.get_clamped(x as isize, y as isize - m as isize)
        }),
        Perturbation::Rotate(deg) => {
            let (s, c) = deg.to_radians().sin_cos();
            Image::from_fn(w, h, |x, y| {
                // inverse map: rotate output coordinates by -theta
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = c * dx - s * dy + cx;
                let sy = s * dx + c * dy + cy;
                image.sample_bilinear(sx, sy)
            })
        }
        Perturbation::Scale(f) => Image::from_fn(w, h, |x, y| {
            image.sample_bilinear((x as f64 - cx) / f + cx, (y as f64 - cy) / f + cy)
        }),
        Perturbation::Blur(n) => image.resize_bilinear(n, n)?.resize_bilinear(w, h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{dct2, Patch};
    use proptest::prelude::*;

    fn step_edge(col: usize) -> Image {
        Image::from_fn(64, 64, |x, _| if x >= col { 1.0 } else { 0.0 }).unwrap()
    }

    fn edge_column(img: &Image) -> usize {
        (0..img.width()).find(|&x| img.get(x, 10) > 0.5).unwrap()
    }

    fn textured(seed: u64) -> Image {
        crate::imaging::synth_identity_image(seed, 0, &Default::default()).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let img = textured(1);
        assert_eq!(perturb(&img, &Perturbation::ShiftX(0)).unwrap(), img);
        assert_eq!(perturb(&img, &Perturbation::ShiftY(0)).unwrap(), img);
    }

    #[test]
    fn shift_moves_step_edge() {
        let img = step_edge(30);
        assert_eq!(edge_column(&img), 30);
        assert_eq!(edge_column(&perturb(&img, &Perturbation::ShiftX(2)).unwrap()), 32);
        assert_eq!(edge_column(&perturb(&img, &Perturbation::ShiftX(-4)).unwrap()), 26);
    }

    #[test]
    fn zero_rotation_and_unit_scale_are_identity() {
        let img = textured(2);
        let r = perturb(&img, &Perturbation::Rotate(0.0)).unwrap();
        let s = perturb(&img, &Perturbation::Scale(1.0)).unwrap();
        for ((a, b), c) in img.pixels().iter().zip(r.pixels()).zip(s.pixels()) {
            assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_moves_points_counter_clockwise() {
        let img = Image::from_fn(65, 65, |x, y| if x == 52 && y == 32 { 1.0 } else { 0.0 }).unwrap();
        let out = perturb(&img, &Perturbation::Rotate(30.0)).unwrap();
        let (mut best, mut at) = (0.0, (0, 0));
        for y in 0..65 {
            for x in 0..65 {
                if out.get(x, y) > best {
                    best = out.get(x, y);
                    at = (x, y);
                }
            }
        }
        // y grows downwards, so counter-clockwise means towards smaller rows
        let expected_x = 32.0 + 20.0 * 30f64.to_radians().cos();
        let expected_y = 32.0 - 20.0 * 30f64.to_radians().sin();
        assert!((at.0 as f64 - expected_x).abs() <= 1.0, "{at:?}");
        assert!((at.1 as f64 - expected_y).abs() <= 1.0, "{at:?}");
    }

    #[test]
    fn blur_removes_high_frequency_energy() {
        let img = textured(3);
        let blurred = perturb(&img, &Perturbation::Blur(16)).unwrap();
        assert_ne!(blurred, img);
        let hf = |im: &Image| {
            let mut e = 0.0;
            for by in (0..64).step_by(8) {
                for bx in (0..64).step_by(8) {
                    let mut v = Vec::with_capacity(64);
                    for y in by..by + 8 {
                        for x in bx..bx + 8 {
                            v.push(im.get(x, y));
                        }
                    }
                    let coeffs = dct2(&Patch::new(8, v).unwrap());
                    let zz = crate::imaging::zigzag_order(8);
                    e += zz[16..].iter().map(|&(u, w)| coeffs[u * 8 + w].powi(2)).sum::<f64>();
                }
            }
            e
        };
        assert!(hf(&blurred) < hf(&img));
    }

    #[test]
    fn unsupported_values_are_rejected() {
        assert!("shear:3".parse::<Perturbation>().is_err());
        assert!("shift_x:9".parse::<Perturbation>().is_err());
        assert!(perturb(&textured(0), &Perturbation::Scale(2.0)).is_err());
        assert_eq!("rotate:-20".parse::<Perturbation>().unwrap(), Perturbation::Rotate(-20.0));
    }

    #[test]
    fn grid_has_expected_cells() {
        let grid = robustness_grid();
        assert_eq!(grid.len(), 8 + 8 + 6 + 6 + 3);
        let shifts: Vec<i32> = grid
            .iter()
            .filter_map(|p| match p {
                Perturbation::ShiftX(m) => Some(*m),
                _ => None,
            })
            .collect();
        assert_eq!(shifts, vec![-8, -6, -4, -2, 2, 4, 6, 8]);
    }

    proptest! {
        #[test]
        fn shift_round_trip_restores_interior(m in -8i32..=8, vertical in any::<bool>(), seed in 0u64..50) {
            let img = textured(seed);
            let (fwd, back) = if vertical {
                (Perturbation::ShiftY(m), Perturbation::ShiftY(-m))
            } else {
                (Perturbation::ShiftX(m), Perturbation::ShiftX(-m))
            };
            let out = perturb(&perturb(&img, &fwd).unwrap(), &back).unwrap();
            let k = m.unsigned_abs() as usize;
            for y in k..64 - k {
                for x in k..64 - k {
                    prop_assert_eq!(out.get(x, y), img.get(x, y));
                }
            }
        }
    }
}
