//! Procedural grayscale image-classification data in the shape of a small
//! FashionMNIST: a few prototype "styles" per class built from Gaussian
//! blobs, sampled with random shifts, contrast changes, cross-class blending
//! and pixel noise, then quantized to 8 bits.

use crate::data::idx::IdxArray;
use crate::data::task::{TaskData, Targets};
use crate::error::Result;
use crate::rng::RngState;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImages {
    pub side: usize,
    pub classes: usize,
    pub styles: usize,
    pub pixel_noise: f64,
    pub max_shift: usize,
    pub blend: f64,
    /// Seed of the class prototypes; fixes the task distribution.
    pub seed: u64,
}

impl Default for SyntheticImages {
    fn default() -> Self {
        Self {
            side: 12,
            classes: 10,
            styles: 4,
            pixel_noise: 0.25,
            max_shift: 1,
            blend: 0.35,
            seed: 2023,
        }
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

fn random_blob(rng: &mut RngState, side: f64, amp: (f64, f64)) -> Blob {
    Blob {
        cx: rng.uniform_range(0.2, 0.8) * side,
        cy: rng.uniform_range(0.2, 0.8) * side,
        sigma: rng.uniform_range(0.08, 0.2) * side,
        amp: rng.uniform_range(amp.0, amp.1),
    }
}

fn render(blobs: &[Blob], side: usize) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            let v: f64 = blobs
                .iter()
                .map(|b| {
                    let dx = x as f64 + 0.5 - b.cx;
                    let dy = y as f64 + 0.5 - b.cy;
                    b.amp * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum();
            img[y * side + x] = v;
        }
    }
    let max = img.iter().cloned().fold(0.0, f64::max).max(1e-12);
    img.iter_mut().for_each(|v| *v /= max);
    img
}

impl SyntheticImages {
    pub fn input_dim(&self) -> usize {
        self.side * self.side
    }

    /// `[class][style]` prototype images, a pure function of `self.seed`.
    pub fn prototypes(&self) -> Vec<Vec<Vec<f64>>> {
        let mut rng = RngState::new(self.seed).fork_named("prototypes");
        let side = self.side as f64;
        (0..self.classes)
            .map(|_| {
                let base: Vec<Blob> = (0..3).map(|_| random_blob(&mut rng, side, (0.6, 1.0))).collect();
                (0..self.styles)
                    .map(|_| {
                        let mut blobs: Vec<Blob> = base
                            .iter()
                            .map(|b| Blob {
                                cx: b.cx + rng.uniform_range(-0.06, 0.06) * side,
                                cy: b.cy + rng.uniform_range(-0.06, 0.06) * side,
                                sigma: b.sigma,
                                amp: b.amp,
                            })
                            .collect();
                        blobs.extend((0..2).map(|_| random_blob(&mut rng, side, (0.3, 0.6))));
                        render(&blobs, self.side)
                    })
                    .collect()
            })
            .collect()
    }

    /// `n` labelled samples drawn with `sample_seed`; class labels uniform.
    pub fn generate(&self, n: usize, sample_seed: u64, task_id: &str) -> Result<TaskData> {
        let protos = self.prototypes();
        let mut rng = RngState::new(sample_seed).fork_named("samples");
        let side = self.side;
        let d = side * side;
        let mut pixels = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let shift = self.max_shift as i64;
        for _ in 0..n {
            let class = rng.below(self.classes);
            let style = rng.below(self.styles);
            let proto = &protos[class][style];
            let other = &protos[rng.below(self.classes)][rng.below(self.styles)];
            let dx = rng.below((2 * shift + 1) as usize) as i64 - shift;
            let dy = rng.below((2 * shift + 1) as usize) as i64 - shift;
            let contrast = rng.uniform_range(0.6, 1.2);
            let beta = rng.uniform_range(0.0, self.blend);
            for y in 0..side as i64 {
                for x in 0..side as i64 {
                    let (sx, sy) = (x - dx, y - dy);
                    let p = if sx >= 0 && sy >= 0 && sx < side as i64 && sy < side as i64 {
                        proto[(sy as usize) * side + sx as usize]
                    } else {
                        0.0
                    };
                    let o = other[(y as usize) * side + x as usize];
                    let v = contrast * ((1.0 - beta) * p + beta * o) + self.pixel_noise * rng.normal();
                    let q = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
                    pixels.push(q);
                }
            }
            labels.push(class);
        }
        TaskData::new(
            task_id,
            DenseTensor::matrix(n, d, pixels)?,
            Targets::Classes {
                labels,
                num_classes: self.classes,
            },
        )
    }

    /// The same samples as IDX image and label arrays.
    pub fn to_idx(&self, n: usize, sample_seed: u64) -> Result<(IdxArray, IdxArray)> {
        let task = self.generate(n, sample_seed, "synthetic")?;
        let images = IdxArray {
            dims: vec![n, self.side, self.side],
            data: task.inputs().data().iter().map(|v| (v * 255.0).round() as u8).collect(),
        };
        let labels = IdxArray {
            dims: vec![n],
            data: task.labels().unwrap_or(&[]).iter().map(|&y| y as u8).collect(),
        };
        Ok((images, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let g = SyntheticImages::default();
        let a = g.generate(50, 1, "a").unwrap();
        let b = g.generate(50, 1, "a").unwrap();
        assert_eq!(a, b);
        assert!(a.inputs().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_ne!(a, g.generate(50, 2, "a").unwrap());
    }

    #[test]
    fn idx_roundtrip_is_exact() {
        let g = SyntheticImages { side: 6, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = g.to_idx(20, 3).unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        crate::data::write_idx(&ip, &img).unwrap();
        crate::data::write_idx(&lp, &lab).unwrap();
        let loaded = crate::data::load_idx(&ip, &lp, "synthetic").unwrap();
        let direct = g.generate(20, 3, "synthetic").unwrap();
        assert_eq!(loaded.inputs(), direct.inputs());
        assert_eq!(loaded.labels(), direct.labels());
    }
}
