//! Gaussian blur probe: how fast plate reading degrades as detail is removed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{cra, mse_psnr, BBox, PlateAnnotation, PredictedPlate, Predictions};
use crate::tensor::Image;

pub const KERNEL_SIZE: usize = 11;
pub const DEFAULT_SIGMAS: [f64; 6] = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurParams {
    pub sigma: f64,
    pub kernel_size: usize,
}

impl BlurParams {
    pub fn new(sigma: f64) -> Result<Self> {
        let p = Self {
            sigma,
            kernel_size: KERNEL_SIZE,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Argument(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    fn radius(&self) -> isize {
        (self.kernel_size / 2) as isize
    }
}

/// Normalized 1-D Gaussian taps on the centred integer grid.
pub fn gaussian_taps(params: &BlurParams) -> Result<Vec<f64>> {
    params.validate()?;
    let r = params.radius();
    let two_s2 = 2.0 * params.sigma * params.sigma;
    let raw: Vec<f64> = (-r..=r).map(|x| (-((x * x) as f64) / two_s2).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Row-major `size x size` weights `w(x, y) ∝ exp(-(x² + y²) / 2σ²)`, summing to 1.
pub fn gaussian_kernel(params: &BlurParams) -> Result<Vec<f64>> {
    params.validate()?;
    let r = params.radius();
    let two_s2 = 2.0 * params.sigma * params.sigma;
    let raw: Vec<f64> = (-r..=r)
        .flat_map(|y| (-r..=r).map(move |x| (x, y)))
        .map(|(x, y)| (-((x * x + y * y) as f64) / two_s2).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur with replicated borders.
pub fn blur_image(img: &Image, params: &BlurParams) -> Result<Image> {
    let taps = gaussian_taps(params)?;
    let r = params.radius();
    let (h, w) = (img.height(), img.width());
    let mut out = Vec::with_capacity(img.data().len());
    for p in 0..img.planes() {
        let src = img.plane(p);
        let mut tmp = vec![0f64; h * w];
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                tmp[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| t * f64::from(row[clamp_index(x as isize + k as isize - r, w)]))
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(k, &t)| t * tmp[clamp_index(y as isize + k as isize - r, h) * w + x])
                    .sum();
                out.push(v as f32);
            }
        }
    }
    Image::new(h, w, img.planes(), out)
}

/// Direct 2-D convolution with the full kernel; reference for [`blur_image`].
pub fn blur_image_direct(img: &Image, params: &BlurParams) -> Result<Image> {
    let kernel = gaussian_kernel(params)?;
    let size = params.kernel_size;
    let r = params.radius();
    let (h, w) = (img.height(), img.width());
    let mut out = Vec::with_capacity(img.data().len());
    for p in 0..img.planes() {
        let src = img.plane(p);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0f64;
                for ky in 0..size {
                    let sy = clamp_index(y as isize + ky as isize - r, h);
                    for kx in 0..size {
                        let sx = clamp_index(x as isize + kx as isize - r, w);
                        acc += kernel[ky * size + kx] * f64::from(src[sy * w + sx]);
                    }
                }
                out.push(acc as f32);
            }
        }
    }
    Image::new(h, w, img.planes(), out)
}

/// One image of a blur-sweep corpus together with its plate annotations.
pub struct BlurSample<'a> {
    pub image_id: &'a str,
    pub image: &'a Image,
    pub plates: &'a [PlateAnnotation],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurRow {
    pub sigma: f64,
    pub mse: f64,
    pub cra: f64,
}

/// Blurs every corpus image at each `sigma`, reporting the corpus-mean MSE
/// and the recognizer's CRA. Rows come back in ascending `sigma`.
///
/// A recognizer error on one image counts as reading nothing there.
pub fn blur_sweep<R>(corpus: &[BlurSample<'_>], sigmas: &[f64], recognize: R) -> Result<Vec<BlurRow>>
where
    R: Fn(&Image, &[BBox]) -> Result<Vec<String>> + Sync,
{
    if corpus.is_empty() {
        return Err(Error::Argument("blur sweep needs a non-empty corpus".into()));
    }
    let mut sigmas = sigmas.to_vec();
    sigmas.sort_by(f64::total_cmp);
    let ground: Vec<PlateAnnotation> = corpus.iter().flat_map(|s| s.plates.iter().cloned()).collect();

    sigmas
        .iter()
        .map(|&sigma| {
            let params = BlurParams::new(sigma)?;
            let per_image = corpus
                .par_iter()
                .map(|s| {
                    let blurred = blur_image(s.image, &params)?;
                    let (m, _) = mse_psnr(s.image, &blurred)?;
                    let boxes: Vec<BBox> = s.plates.iter().map(|p| p.bbox).collect();
                    let texts = recognize(&blurred, &boxes).unwrap_or_default();
                    let plates = boxes
                        .into_iter()
                        .zip(texts)
                        .map(|(bbox, text)| PredictedPlate { bbox, text })
                        .collect::<Vec<_>>();
                    Ok((m, s.image_id.to_string(), plates))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = 0.0;
            let mut predictions = Predictions::new();
            for (m, id, plates) in per_image {
                total += m;
                predictions.entry(id).or_default().extend(plates);
            }
            Ok(BlurRow {
                sigma,
                mse: total / corpus.len() as f64,
                cra: cra(&ground, &predictions)?.cra,
            })
        })
        .collect()
}

pub fn write_blur_csv<W: Write>(rows: &[BlurRow], mut out: W) -> Result<()> {
    writeln!(out, "sigma,mse,cra")?;
    for r in rows {
        writeln!(out, "{},{:.6e},{:.4}", r.sigma, r.mse, r.cra)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::gray(h, w, (0..h * w).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn variance(v: &[f32]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        v.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn kernel_normalized() {
        for sigma in [0.1, 0.5, 1.0, 3.3, 100.0] {
            let k = gaussian_kernel(&BlurParams::new(sigma).unwrap()).unwrap();
            assert_eq!(k.len(), 121);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_limits() {
        let wide = gaussian_kernel(&BlurParams::new(1e6).unwrap()).unwrap();
        assert!(wide.iter().all(|w| (w - 1.0 / 121.0).abs() < 1e-6));
        let narrow = gaussian_kernel(&BlurParams::new(0.1).unwrap()).unwrap();
        assert!(narrow[60] > 0.999);
    }

    #[test]
    fn kernel_symmetry() {
        let k = gaussian_kernel(&BlurParams::new(1.7).unwrap()).unwrap();
        for y in 0..11 {
            for x in 0..11 {
                assert_eq!(k[y * 11 + x], k[(10 - y) * 11 + (10 - x)]);
                assert_eq!(k[y * 11 + x], k[x * 11 + y]);
            }
        }
    }

    #[test]
    fn bad_params() {
        assert!(matches!(BlurParams::new(0.0), Err(Error::Argument(_))));
        assert!(BlurParams::new(-1.0).is_err());
        let even = BlurParams {
            sigma: 1.0,
            kernel_size: 10,
        };
        assert!(gaussian_kernel(&even).is_err());
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image::gray(9, 13, vec![0.37; 9 * 13]).unwrap();
        let b = blur_image(&img, &BlurParams::new(2.0).unwrap()).unwrap();
        assert!(b.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn separable_matches_direct() {
        let img = textured(1, 17, 23);
        for sigma in [0.5, 1.3, 4.0] {
            let p = BlurParams::new(sigma).unwrap();
            let a = blur_image(&img, &p).unwrap();
            let b = blur_image_direct(&img, &p).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn commutes_with_transpose() {
        let img = textured(2, 12, 19);
        let p = BlurParams::new(1.5).unwrap();
        let a = blur_image(&img.transpose(), &p).unwrap();
        let b = blur_image(&img, &p).unwrap().transpose();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn mse_grows_and_variance_shrinks() {
        let img = textured(3, 32, 32);
        let mut last = 0.0;
        for sigma in [0.5, 1.0, 2.0, 4.0] {
            let b = blur_image(&img, &BlurParams::new(sigma).unwrap()).unwrap();
            let (m, _) = mse_psnr(&img, &b).unwrap();
            assert!(m > last, "sigma {sigma}: {m} <= {last}");
            assert!(variance(b.data()) <= variance(img.data()));
            last = m;
        }
    }

    #[test]
    fn sweep_rows_and_failures() {
        let img = textured(4, 16, 16);
        let plates = vec![PlateAnnotation {
            image_id: "a".into(),
            bbox: BBox::new(0, 0, 8, 4),
            text: "12".into(),
            readable: true,
        }];
        let corpus = [BlurSample {
            image_id: "a",
            image: &img,
            plates: &plates,
        }];
        let ok = |_: &Image, b: &[BBox]| Ok(vec!["12".to_string(); b.len()]);
        let rows = blur_sweep(&corpus, &[2.0, 0.5], ok).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].sigma < rows[1].sigma);
        assert_eq!(rows[0].cra, 100.0);
        let failing = |_: &Image, _: &[BBox]| Err(Error::Decode("boom".into()));
        let rows = blur_sweep(&corpus, &[1.0], failing).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cra, 0.0);
        assert!(blur_sweep(&[], &[1.0], ok).is_err());
    }
}
