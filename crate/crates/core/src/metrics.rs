//! Spectral fidelity metrics: RMSE (0-255 scale), RMSERel, GFC and
//! CIEDE2000, evaluated over non-black pixels.

use crate::colorimetry::{spectrum_to_xyz, CmfTable, SpectralImage, BANDS};
use crate::error::{Error, Result};

/// D65 reference white, `Y = 100`.
pub const D65_WHITE: [f64; 3] = [95.047, 100.0, 108.883];

/// Per-pixel participation flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub height: usize,
    pub width: usize,
    valid: Vec<bool>,
}

impl PixelMask {
    pub fn all(height: usize, width: usize) -> Self {
        PixelMask {
            height,
            width,
            valid: vec![true; height * width],
        }
    }

    pub fn from_flags(height: usize, width: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != height * width {
            return Err(Error::Dimension {
                op: "PixelMask",
                axis: "pixel count",
                expected: height * width,
                found: valid.len(),
            });
        }
        Ok(PixelMask { height, width, valid })
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn flags(&self) -> &[bool] {
        &self.valid
    }
}

/// A pixel is masked out when every band is `<= threshold`.
pub fn black_mask(reference: &SpectralImage, threshold: f32) -> PixelMask {
    PixelMask {
        height: reference.height(),
        width: reference.width(),
        valid: reference.pixels().map(|px| px.iter().any(|&v| v > threshold)).collect(),
    }
}

fn check_pair(reference: &SpectralImage, estimate: &SpectralImage, mask: &PixelMask) -> Result<()> {
    for (axis, a, b) in [
        ("height", reference.height(), estimate.height()),
        ("width", reference.width(), estimate.width()),
    ] {
        if a != b {
            return Err(Error::Dimension {
                op: "metrics",
                axis,
                expected: a,
                found: b,
            });
        }
    }
    if mask.height != reference.height() || mask.width != reference.width() {
        return Err(Error::Dimension {
            op: "metrics",
            axis: "mask",
            expected: reference.height() * reference.width(),
            found: mask.height * mask.width,
        });
    }
    if mask.valid_count() == 0 {
        return Err(Error::Empty("metric mask selects no pixels"));
    }
    Ok(())
}

fn masked_pixels<'a>(
    reference: &'a SpectralImage,
    estimate: &'a SpectralImage,
    mask: &'a PixelMask,
) -> impl Iterator<Item = (&'a [f32], &'a [f32])> {
    reference
        .pixels()
        .zip(estimate.pixels())
        .zip(mask.flags())
        .filter(|(_, &m)| m)
        .map(|(p, _)| p)
}

fn pixel_rmse(s: &[f32], e: &[f32]) -> f64 {
    let sq: f64 = s.iter().zip(e).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    (sq / BANDS as f64).sqrt()
}

/// Mean over masked pixels of the per-pixel spectral RMSE, on the 0-255
/// scale.
pub fn rmse(reference: &SpectralImage, estimate: &SpectralImage, mask: &PixelMask) -> Result<f64> {
    check_pair(reference, estimate, mask)?;
    let (sum, n) = masked_pixels(reference, estimate, mask).fold((0.0, 0usize), |(acc, n), (s, e)| {
        (acc + 255.0 * pixel_rmse(s, e), n + 1)
    });
    Ok(sum / n as f64)
}

/// Denominator convention of [`rmse_rel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelativeMode {
    /// Pixel RMSE divided by the pixel's mean reference value.
    #[default]
    PixelMean,
    /// Root mean of per-band squared relative errors.
    PerBand,
}

/// A metric averaged over the usable subset of masked pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedMean {
    pub value: f64,
    pub used: usize,
    /// Masked pixels dropped because the metric is undefined there.
    pub excluded: usize,
}

fn masked_mean(values: impl Iterator<Item = Option<f64>>, what: &'static str) -> Result<MaskedMean> {
    let (mut sum, mut used, mut excluded) = (0.0, 0, 0);
    for v in values {
        match v {
            Some(v) if v.is_finite() => {
                sum += v;
                used += 1;
            }
            _ => excluded += 1,
        }
    }
    if used == 0 {
        return Err(Error::Empty(what));
    }
    Ok(MaskedMean {
        value: sum / used as f64,
        used,
        excluded,
    })
}

/// Dimensionless RMSE relative to the reference signal. Pixels where the
/// ratio is infinite are excluded and counted.
pub fn rmse_rel(
    reference: &SpectralImage,
    estimate: &SpectralImage,
    mask: &PixelMask,
    mode: RelativeMode,
) -> Result<MaskedMean> {
    check_pair(reference, estimate, mask)?;
    let per_pixel = masked_pixels(reference, estimate, mask).map(|(s, e)| match mode {
        RelativeMode::PixelMean => {
            let mean = s.iter().map(|&v| v as f64).sum::<f64>() / BANDS as f64;
            (mean > 0.0).then(|| pixel_rmse(s, e) / mean)
        }
        RelativeMode::PerBand => {
            if s.iter().any(|&v| v <= 0.0) {
                return None;
            }
            let sq: f64 = s
                .iter()
                .zip(e)
                .map(|(&a, &b)| ((a as f64 - b as f64) / a as f64).powi(2))
                .sum();
            Some((sq / BANDS as f64).sqrt())
        }
    });
    masked_mean(per_pixel, "no pixel with a positive reference for RMSERel")
}

/// Goodness-of-fit coefficient: mean normalized inner product. Zero-norm
/// pixels are excluded and counted.
pub fn gfc(reference: &SpectralImage, estimate: &SpectralImage, mask: &PixelMask) -> Result<MaskedMean> {
    check_pair(reference, estimate, mask)?;
    let per_pixel = masked_pixels(reference, estimate, mask).map(|(s, e)| {
        let (mut dot, mut ns, mut ne) = (0.0f64, 0.0f64, 0.0f64);
        for (&a, &b) in s.iter().zip(e) {
            let (a, b) = (a as f64, b as f64);
            dot += a * b;
            ns += a * a;
            ne += b * b;
        }
        (ns > 0.0 && ne > 0.0).then(|| (dot.abs() / (ns.sqrt() * ne.sqrt())).min(1.0))
    });
    masked_mean(per_pixel, "no pixel with non-zero spectra for GFC")
}

pub type Lab = [f64; 3];

/// CIE L*a*b* relative to `white`.
pub fn xyz_to_lab(xyz: [f64; 3], white: [f64; 3]) -> Lab {
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA.powi(3) {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(xyz[0] / white[0]), f(xyz[1] / white[1]), f(xyz[2] / white[2]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIEDE2000 color difference with `kL = kC = kH = 1`.
pub fn ciede2000(reference: Lab, estimate: Lab) -> f64 {
    use std::f64::consts::PI;
    let [l1, a1, b1] = reference;
    let [l2, a2, b2] = estimate;
    let deg = |r: f64| r.to_degrees();
    let rad = |d: f64| d.to_radians();

    let c1 = a1.hypot(b1);
    let c2 = a2.hypot(b2);
    let c_bar = (c1 + c2) / 2.0;
    let c7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c7 / (c7 + 25f64.powi(7))).sqrt());
    let a1p = (1.0 + g) * a1;
    let a2p = (1.0 + g) * a2;
    let c1p = a1p.hypot(b1);
    let c2p = a2p.hypot(b2);
    let hue = |b: f64, a: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            let h = deg(b.atan2(a));
            if h < 0.0 {
                h + 360.0
            } else {
                h
            }
        }
    };
    let h1p = hue(b1, a1p);
    let h2p = hue(b2, a2p);

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let dh = if c1p * c2p == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh_big = 2.0 * (c1p * c2p).sqrt() * rad(dh / 2.0).sin();

    let l_bar = (l1 + l2) / 2.0;
    let cp_bar = (c1p + c2p) / 2.0;
    let h_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        (h1p + h2p) / 2.0
    } else if h1p + h2p < 360.0 {
        (h1p + h2p + 360.0) / 2.0
    } else {
        (h1p + h2p - 360.0) / 2.0
    };
    let t = 1.0 - 0.17 * rad(h_bar - 30.0).cos() + 0.24 * rad(2.0 * h_bar).cos() + 0.32 * rad(3.0 * h_bar + 6.0).cos()
        - 0.20 * rad(4.0 * h_bar - 63.0).cos();
    let d_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let cp7 = cp_bar.powi(7);
    let r_c = 2.0 * (cp7 / (cp7 + 25f64.powi(7))).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * cp_bar;
    let s_h = 1.0 + 0.015 * cp_bar * t;
    let r_t = -(2.0 * d_theta * PI / 180.0).sin() * r_c;

    let (tl, tc, th) = (dl / s_l, dc / s_c, dh_big / s_h);
    (tl * tl + tc * tc + th * th + r_t * tc * th).sqrt()
}

/// Per-image (or aggregated) metric values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// 0-255 scale.
    pub rmse: f64,
    pub rmse_rel: f64,
    pub gfc: f64,
    pub delta_e00: f64,
    pub valid_pixel_count: usize,
    pub rmse_rel_excluded: usize,
    pub gfc_excluded: usize,
}

pub const CSV_HEADER: &str = "image_id,rmse,rmse_rel,gfc,de00,valid_pixels";

impl MetricReport {
    pub fn csv_row(&self, image_id: &str) -> String {
        format!(
            "{image_id},{},{},{},{},{}",
            self.rmse, self.rmse_rel, self.gfc, self.delta_e00, self.valid_pixel_count
        )
    }

    /// Parses one row written by [`MetricReport::csv_row`].
    pub fn from_csv_row(line: &str) -> Result<(String, Self)> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(Error::parse(
                "metric CSV row",
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|e| Error::parse("metric CSV row", format!("field {i}: {e}")))
        };
        let count = f[5]
            .parse()
            .map_err(|e| Error::parse("metric CSV row", format!("valid_pixels: {e}")))?;
        Ok((
            f[0].to_string(),
            MetricReport {
                rmse: num(1)?,
                rmse_rel: num(2)?,
                gfc: num(3)?,
                delta_e00: num(4)?,
                valid_pixel_count: count,
                rmse_rel_excluded: 0,
                gfc_excluded: 0,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub black_threshold: f32,
    pub relative_mode: RelativeMode,
    pub white: [f64; 3],
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            black_threshold: 0.0,
            relative_mode: RelativeMode::PixelMean,
            white: D65_WHITE,
        }
    }
}

/// Mean CIEDE2000 over masked pixels after rendering both cubes to Lab.
pub fn mean_delta_e00(
    reference: &SpectralImage,
    estimate: &SpectralImage,
    mask: &PixelMask,
    cmf: &CmfTable,
    white: [f64; 3],
) -> Result<f64> {
    check_pair(reference, estimate, mask)?;
    let (sum, n) = masked_pixels(reference, estimate, mask).fold((0.0, 0usize), |(acc, n), (s, e)| {
        let ls = xyz_to_lab(spectrum_to_xyz(s, cmf), white);
        let le = xyz_to_lab(spectrum_to_xyz(e, cmf), white);
        (acc + ciede2000(ls, le), n + 1)
    });
    Ok(sum / n as f64)
}

/// All four metrics over an explicit mask.
pub fn evaluate_masked(
    reference: &SpectralImage,
    estimate: &SpectralImage,
    mask: &PixelMask,
    cmf: &CmfTable,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let rel = rmse_rel(reference, estimate, mask, opts.relative_mode)?;
    let fit = gfc(reference, estimate, mask)?;
    Ok(MetricReport {
        rmse: rmse(reference, estimate, mask)?,
        rmse_rel: rel.value,
        gfc: fit.value,
        delta_e00: mean_delta_e00(reference, estimate, mask, cmf, opts.white)?,
        valid_pixel_count: mask.valid_count(),
        rmse_rel_excluded: rel.excluded,
        gfc_excluded: fit.excluded,
    })
}

pub fn evaluate_image_with(
    reference: &SpectralImage,
    estimate: &SpectralImage,
    cmf: &CmfTable,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let mask = black_mask(reference, opts.black_threshold);
    evaluate_masked(reference, estimate, &mask, cmf, opts)
}

/// Metrics with the default options: black pixels (all bands `<= 0`)
/// ignored, pixel-mean RMSERel, D65 white for CIEDE2000.
pub fn evaluate_image(reference: &SpectralImage, estimate: &SpectralImage, cmf: &CmfTable) -> Result<MetricReport> {
    evaluate_image_with(reference, estimate, cmf, &EvalOptions::default())
}

/// Valid-pixel-weighted mean of each metric.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Empty("no metric reports to aggregate"));
    }
    let total: usize = reports.iter().map(|r| r.valid_pixel_count).sum();
    if total == 0 {
        return Err(Error::Empty("metric reports carry no valid pixels"));
    }
    let wmean = |f: fn(&MetricReport) -> f64| -> f64 {
        reports.iter().map(|r| f(r) * r.valid_pixel_count as f64).sum::<f64>() / total as f64
    };
    Ok(MetricReport {
        rmse: wmean(|r| r.rmse),
        rmse_rel: wmean(|r| r.rmse_rel),
        gfc: wmean(|r| r.gfc),
        delta_e00: wmean(|r| r.delta_e00),
        valid_pixel_count: total,
        rmse_rel_excluded: reports.iter().map(|r| r.rmse_rel_excluded).sum(),
        gfc_excluded: reports.iter().map(|r| r.gfc_excluded).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(h: usize, w: usize, seed: u64) -> SpectralImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralImage::new(
            h,
            w,
            (0..h * w * BANDS).map(|_| rng.random_range(0.05f32..1.0)).collect(),
        )
        .unwrap()
    }

    fn map(img: &SpectralImage, f: impl Fn(f32) -> f32) -> SpectralImage {
        SpectralImage::new(img.height(), img.width(), img.data().iter().map(|&v| f(v)).collect()).unwrap()
    }

    #[test]
    fn black_mask_cases() {
        let c = cube(3, 3, 1);
        assert_eq!(black_mask(&c, 0.0).valid_count(), 9);
        assert_eq!(black_mask(&SpectralImage::zeros(3, 3), 0.0).valid_count(), 0);
        let mut half = cube(4, 4, 2);
        for y in 0..4 {
            for x in 0..2 {
                half.pixel_mut(y, x).fill(0.0);
            }
        }
        let m = black_mask(&half, 0.0);
        assert_eq!(m.valid_count(), 8);
        assert!(!m.is_valid(0, 0) && m.is_valid(0, 3));
    }

    #[test]
    fn empty_mask_is_error() {
        let z = SpectralImage::zeros(2, 2);
        let m = black_mask(&z, 0.0);
        assert!(matches!(rmse(&z, &z, &m), Err(Error::Empty(_))));
        assert!(evaluate_image(&z, &z, CmfTable::cie1964_10deg()).is_err());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let (a, b) = (cube(2, 2, 3), cube(2, 3, 4));
        assert!(matches!(
            rmse(&a, &b, &PixelMask::all(2, 2)),
            Err(Error::Dimension { axis: "width", .. })
        ));
    }

    #[test]
    fn rmse_cases() {
        let a = cube(2, 2, 5);
        let m = PixelMask::all(2, 2);
        assert_eq!(rmse(&a, &a, &m).unwrap(), 0.0);
        // Sterbenz: est - ref is exact in f32, so RMSE is exactly 255 * d.
        let est = map(&a, |v| v + 1.0 / 255.0);
        let got = rmse(&a, &est, &m).unwrap();
        assert!((got - 1.0).abs() < 1e-4, "{got}");
        let b = cube(2, 2, 6);
        let mut oracle = 0.0;
        for y in 0..2 {
            for x in 0..2 {
                let mut sq = 0.0f64;
                for k in 0..BANDS {
                    sq += ((a.pixel(y, x)[k] as f64 - b.pixel(y, x)[k] as f64) * 255.0).powi(2);
                }
                oracle += (sq / 31.0).sqrt();
            }
        }
        assert!((rmse(&a, &b, &m).unwrap() - oracle / 4.0).abs() < 1e-9);
    }

    #[test]
    fn rmse_rel_cases() {
        let m = PixelMask::all(1, 2);
        let flat = SpectralImage::new(1, 2, [vec![0.4f32; 31], vec![0.8f32; 31]].concat()).unwrap();
        let r = rmse_rel(&flat, &flat, &m, RelativeMode::PixelMean).unwrap();
        assert_eq!(r.value, 0.0);
        let scaled = map(&flat, |v| (v as f64 * 1.1) as f32);
        let r = rmse_rel(&flat, &scaled, &m, RelativeMode::PixelMean).unwrap();
        assert!((r.value - 0.1).abs() < 1e-7, "{}", r.value);
        let r = rmse_rel(&flat, &scaled, &m, RelativeMode::PerBand).unwrap();
        assert!((r.value - 0.1).abs() < 1e-7);

        let a = cube(2, 2, 7);
        let b = cube(2, 2, 8);
        let mut oracle = 0.0;
        for (s, e) in a.pixels().zip(b.pixels()) {
            let mean: f64 = s.iter().map(|&v| v as f64).sum::<f64>() / 31.0;
            let sq: f64 = s.iter().zip(e).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            oracle += (sq / 31.0).sqrt() / mean;
        }
        let r = rmse_rel(&a, &b, &PixelMask::all(2, 2), RelativeMode::PixelMean).unwrap();
        assert!((r.value - oracle / 4.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_rel_excludes_zero_mean_pixels() {
        let mut a = cube(1, 3, 9);
        a.pixel_mut(0, 1).fill(0.0);
        let b = cube(1, 3, 10);
        let r = rmse_rel(&a, &b, &PixelMask::all(1, 3), RelativeMode::PixelMean).unwrap();
        assert_eq!((r.used, r.excluded), (2, 1));
    }

    #[test]
    fn gfc_cases() {
        let a = cube(2, 2, 11);
        let m = PixelMask::all(2, 2);
        assert!((gfc(&a, &a, &m).unwrap().value - 1.0).abs() < 1e-9);
        let doubled = map(&a, |v| 2.0 * v);
        assert!((gfc(&a, &doubled, &m).unwrap().value - 1.0).abs() < 1e-9);
        let mut s1 = vec![0.0f32; 31];
        s1[0] = 1.0;
        let mut s2 = vec![0.0f32; 31];
        s2[1] = 1.0;
        let (p, q) = (
            SpectralImage::new(1, 1, s1).unwrap(),
            SpectralImage::new(1, 1, s2).unwrap(),
        );
        assert_eq!(gfc(&p, &q, &PixelMask::all(1, 1)).unwrap().value, 0.0);
        let z = SpectralImage::zeros(1, 1);
        let r = gfc(&p, &z, &PixelMask::all(1, 1));
        assert!(matches!(r, Err(Error::Empty(_))));
    }

    #[test]
    fn lab_cases() {
        let w = D65_WHITE;
        let lab = xyz_to_lab(w, w);
        assert!((lab[0] - 100.0).abs() < 1e-12 && lab[1].abs() < 1e-12 && lab[2].abs() < 1e-12);
        assert_eq!(xyz_to_lab([0.0; 3], w)[0], 0.0);
        let gray = xyz_to_lab([w[0] * 0.2, 20.0, w[2] * 0.2], w);
        let expect = 116.0 * 0.2f64.powf(1.0 / 3.0) - 16.0;
        assert!((gray[0] - expect).abs() < 1e-12);
        assert!(gray[1].abs() < 1e-12);
    }

    #[test]
    fn ciede2000_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let a = [
                rng.random_range(0.0..100.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
            ];
            let b = [
                rng.random_range(0.0..100.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
            ];
            assert_eq!(ciede2000(a, a), 0.0);
            assert!((ciede2000(a, b) - ciede2000(b, a)).abs() < 1e-9);
            assert!(ciede2000(a, b) > 0.0);
        }
    }

    #[test]
    fn identical_estimate_reports_perfect_scores() {
        let a = cube(3, 3, 13);
        let r = evaluate_image(&a, &a, CmfTable::cie1964_10deg()).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.rmse_rel, 0.0);
        assert!((r.gfc - 1.0).abs() < 1e-9);
        assert_eq!(r.delta_e00, 0.0);
        assert_eq!(r.valid_pixel_count, 9);
    }

    #[test]
    fn band_shift_fixture() {
        // Estimate is the reference shifted by one band.
        let a = cube(2, 2, 14);
        let mut shifted = a.clone();
        for (dst, src) in shifted.data_mut().chunks_exact_mut(31).zip(a.pixels()) {
            dst[1..].copy_from_slice(&src[..30]);
            dst[0] = src[0];
        }
        let cmf = CmfTable::cie1964_10deg();
        let r = evaluate_image(&a, &shifted, cmf).unwrap();
        let m = PixelMask::all(2, 2);
        assert_eq!(r.rmse, rmse(&a, &shifted, &m).unwrap());
        assert_eq!(r.gfc, gfc(&a, &shifted, &m).unwrap().value);
        let mut de = 0.0;
        for (s, e) in a.pixels().zip(shifted.pixels()) {
            de += ciede2000(
                xyz_to_lab(spectrum_to_xyz(s, cmf), D65_WHITE),
                xyz_to_lab(spectrum_to_xyz(e, cmf), D65_WHITE),
            );
        }
        assert!((r.delta_e00 - de / 4.0).abs() < 1e-12);
        assert!(r.rmse > 0.0 && r.gfc < 1.0 && r.delta_e00 > 0.0);
    }

    #[test]
    fn half_masked_counts_valid_only() {
        let mut a = cube(2, 4, 15);
        let b = cube(2, 4, 16);
        for y in 0..2 {
            a.pixel_mut(y, 0).fill(0.0);
            a.pixel_mut(y, 1).fill(0.0);
        }
        let r = evaluate_image(&a, &b, CmfTable::cie1964_10deg()).unwrap();
        assert_eq!(r.valid_pixel_count, 4);
        let right_a = a.crop(0, 2, 2, 2).unwrap();
        let right_b = b.crop(0, 2, 2, 2).unwrap();
        let r2 = evaluate_image(&right_a, &right_b, CmfTable::cie1964_10deg()).unwrap();
        assert!((r.rmse - r2.rmse).abs() < 1e-12);
        assert!((r.delta_e00 - r2.delta_e00).abs() < 1e-12);
    }

    fn report(v: f64, n: usize) -> MetricReport {
        MetricReport {
            rmse: v,
            rmse_rel: v / 10.0,
            gfc: 1.0 - v / 100.0,
            delta_e00: 2.0 * v,
            valid_pixel_count: n,
            rmse_rel_excluded: 0,
            gfc_excluded: 0,
        }
    }

    #[test]
    fn aggregate_cases() {
        assert!(aggregate(&[]).is_err());
        let r = report(3.0, 10);
        assert_eq!(aggregate(&[r]).unwrap(), r);
        let two = aggregate(&[report(2.0, 5), report(4.0, 5)]).unwrap();
        assert!((two.rmse - 3.0).abs() < 1e-12 && two.valid_pixel_count == 10);
        let w = aggregate(&[report(1.0, 1), report(5.0, 3)]).unwrap();
        assert!((w.rmse - (1.0 + 15.0) / 4.0).abs() < 1e-12);
        assert!((w.delta_e00 - (2.0 + 30.0) / 4.0).abs() < 1e-12);
        let k = aggregate(&[r, r, r, r]).unwrap();
        assert!((k.rmse - r.rmse).abs() < 1e-12 && (k.gfc - r.gfc).abs() < 1e-12);
    }

    #[test]
    fn csv_row_round_trip() {
        let r = report(1.25, 42);
        let row = r.csv_row("img_01");
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        let (id, back) = MetricReport::from_csv_row(&row).unwrap();
        assert_eq!(id, "img_01");
        assert_eq!(back.rmse, r.rmse);
        assert_eq!(back.valid_pixel_count, 42);
    }

    proptest::proptest! {
        #[test]
        fn gfc_scale_invariant(k1 in 0.01f32..50.0, k2 in 0.01f32..50.0, seed in 0u64..1000) {
            let a = cube(2, 2, seed);
            let b = cube(2, 2, seed + 1);
            let m = PixelMask::all(2, 2);
            let base = gfc(&a, &b, &m).unwrap().value;
            let scaled = gfc(&map(&a, |v| v * k1), &map(&b, |v| v * k2), &m).unwrap().value;
            proptest::prop_assert!((base - scaled).abs() < 1e-6);
        }

        #[test]
        fn rmse_scales_with_255(seed in 0u64..1000) {
            let a = cube(2, 2, seed);
            let b = cube(2, 2, seed + 7);
            let m = PixelMask::all(2, 2);
            let normalized: f64 = a.pixels().zip(b.pixels()).map(|(s, e)| pixel_rmse(s, e)).sum::<f64>() / 4.0;
            proptest::prop_assert!((rmse(&a, &b, &m).unwrap() - 255.0 * normalized).abs() < 1e-9);
        }
    }
}
