//! Spectral rendering: 31-band cubes to CIE XYZ (10° observer, equal-energy
//! normalization) to 8-bit sRGB, plus the dataset min/max normalization.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const BANDS: usize = 31;
pub const FIRST_WAVELENGTH_NM: f32 = 400.0;
pub const WAVELENGTH_STEP_NM: f32 = 10.0;
/// Upper clamp for normalized values of images outside the training split.
pub const NORMALIZED_CEILING: f32 = 1.2;

/// IEC 61966-2-1 XYZ to linear sRGB, applied to XYZ / 100.
pub const XYZ_TO_LINEAR_SRGB: [[f64; 3]; 3] = [
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
];

pub const SRGB_LINEAR_THRESHOLD: f64 = 0.0031308;
/// Slope of the linear toe. The nominal 12.92 leaves a 2.9e-8 jump at the
/// threshold; this value is the power branch at the threshold divided by
/// the threshold, so both branches meet exactly.
pub const SRGB_LINEAR_SLOPE: f64 = 12.919990891366469;

const CIE1964_CSV: &str = include_str!("../data/cie1964_10deg_400_700.csv");

pub fn wavelengths() -> [f32; BANDS] {
    std::array::from_fn(|i| FIRST_WAVELENGTH_NM + WAVELENGTH_STEP_NM * i as f32)
}

/// `H x W x 31` relative spectral power, pixel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl SpectralImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Empty("spectral image with zero extent"));
        }
        if data.len() != height * width * BANDS {
            return Err(Error::Dimension {
                op: "SpectralImage",
                axis: "data length",
                expected: height * width * BANDS,
                found: data.len(),
            });
        }
        Ok(SpectralImage { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        SpectralImage {
            height,
            width,
            data: vec![0.0; height * width * BANDS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * BANDS;
        &self.data[i..i + BANDS]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f32] {
        let i = (y * self.width + x) * BANDS;
        &mut self.data[i..i + BANDS]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(BANDS)
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(Error::Geometry {
                op: "SpectralImage::crop",
                reason: format!("window {h}x{w} at ({y0}, {x0}) outside {}x{}", self.height, self.width),
            });
        }
        let mut data = Vec::with_capacity(h * w * BANDS);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * BANDS;
            data.extend_from_slice(&self.data[start..start + w * BANDS]);
        }
        SpectralImage::new(h, w, data)
    }

    /// `(1, 31, H, W)` tensor with values mapped `[0, 1] -> [-1, 1]`.
    pub fn to_model_tensor(&self) -> Tensor {
        let plane = self.height * self.width;
        let mut out = vec![0.0f32; plane * BANDS];
        for (p, px) in self.pixels().enumerate() {
            for (b, &v) in px.iter().enumerate() {
                out[b * plane + p] = 2.0 * v - 1.0;
            }
        }
        Tensor::from_vec(Shape::new(1, BANDS, self.height, self.width), out).expect("sized")
    }

    /// Inverse of [`SpectralImage::to_model_tensor`] for batch item 0.
    pub fn from_model_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.channels != BANDS {
            return Err(Error::Dimension {
                op: "SpectralImage::from_model_tensor",
                axis: "channel",
                expected: BANDS,
                found: s.channels,
            });
        }
        let plane = s.plane();
        let mut data = vec![0.0f32; plane * BANDS];
        for b in 0..BANDS {
            for p in 0..plane {
                data[p * BANDS + b] = (t.data()[b * plane + p] + 1.0) * 0.5;
            }
        }
        SpectralImage::new(s.height, s.width, data)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Color matching functions sampled at the 31 band centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CmfTable {
    rows: [[f64; 3]; BANDS],
}

impl CmfTable {
    /// CIE 1964 10° standard observer, 400-700 nm at 10 nm.
    pub fn cie1964_10deg() -> &'static CmfTable {
        static TABLE: OnceLock<CmfTable> = OnceLock::new();
        TABLE.get_or_init(|| CmfTable::from_csv(CIE1964_CSV).expect("embedded CMF table is valid"))
    }

    pub fn embedded_csv() -> &'static str {
        CIE1964_CSV
    }

    /// Parses `wavelength_nm,xbar,ybar,zbar` with a header and 31 rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("CMF table", "empty file"))?;
        if header.trim() != "wavelength_nm,xbar,ybar,zbar" {
            return Err(Error::parse("CMF table", format!("unexpected header {header:?}")));
        }
        let wl = wavelengths();
        let mut rows = [[0.0f64; 3]; BANDS];
        let mut n = 0;
        for line in lines {
            if n == BANDS {
                return Err(Error::parse("CMF table", "more than 31 rows"));
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse("CMF table", format!("row {}: {e}", n + 1)))?;
            if fields.len() != 4 {
                return Err(Error::parse(
                    "CMF table",
                    format!("row {} has {} fields", n + 1, fields.len()),
                ));
            }
            if (fields[0] - wl[n] as f64).abs() > 1e-9 {
                return Err(Error::parse(
                    "CMF table",
                    format!("row {} wavelength {} != {}", n + 1, fields[0], wl[n]),
                ));
            }
            rows[n] = [fields[1], fields[2], fields[3]];
            n += 1;
        }
        if n != BANDS {
            return Err(Error::parse("CMF table", format!("expected 31 rows, found {n}")));
        }
        let table = CmfTable { rows };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        if self.rows.iter().flatten().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::parse("CMF table", "negative or non-finite entry"));
        }
        // ybar must be strictly positive on 420-680 nm.
        if self.rows[2..=28].iter().any(|r| r[1] <= 0.0) {
            return Err(Error::parse("CMF table", "ybar not positive on 420-680 nm"));
        }
        Ok(())
    }

    pub fn rows(&self) -> &[[f64; 3]; BANDS] {
        &self.rows
    }

    /// Normalization constant `100 / sum(L * ybar * dl)` for the
    /// equal-energy illuminant `L = 1`.
    pub fn k_equal_energy(&self) -> f64 {
        let sum_y: f64 = self.rows.iter().map(|r| r[1] * WAVELENGTH_STEP_NM as f64).sum();
        100.0 / sum_y
    }
}

/// `H x W` CIE XYZ values, reference white at `Y = 100`.
#[derive(Debug, Clone, PartialEq)]
pub struct XyzImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<[f64; 3]>,
}

/// `H x W x 3` 8-bit sRGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl SrgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Empty("sRGB image with zero extent"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Dimension {
                op: "SrgbImage",
                axis: "data length",
                expected: height * width * 3,
                found: data.len(),
            });
        }
        Ok(SrgbImage { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(Error::Geometry {
                op: "SrgbImage::crop",
                reason: format!("window {h}x{w} at ({y0}, {x0}) outside {}x{}", self.height, self.width),
            });
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        SrgbImage::new(h, w, data)
    }

    /// `(1, 3, H, W)` tensor with bytes mapped to `v / 127.5 - 1`.
    pub fn to_model_tensor(&self) -> Tensor {
        let plane = self.height * self.width;
        let mut out = vec![0.0f32; plane * 3];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = px[c] as f32 / 127.5 - 1.0;
            }
        }
        Tensor::from_vec(Shape::new(1, 3, self.height, self.width), out).expect("sized")
    }
}

/// Global min/max of the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    /// Minimum raw value over every pixel and band.
    pub global_min: f64,
    /// Maximum of `raw - global_min`.
    pub global_max: f64,
}

impl DatasetStats {
    pub fn identity() -> Self {
        DatasetStats {
            global_min: 0.0,
            global_max: 1.0,
        }
    }

    pub fn to_text(&self) -> String {
        format!("global_min={:?}\nglobal_max={:?}\n", self.global_min, self.global_max)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut min = None;
        let mut max = None;
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("dataset stats", format!("malformed line {line:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::parse("dataset stats", format!("{k}: {e}")))?;
            match k.trim() {
                "global_min" => min = Some(v),
                "global_max" => max = Some(v),
                other => return Err(Error::parse("dataset stats", format!("unknown key {other}"))),
            }
        }
        let (Some(global_min), Some(global_max)) = (min, max) else {
            return Err(Error::parse("dataset stats", "missing global_min or global_max"));
        };
        if !(global_max > 0.0) {
            return Err(Error::parse("dataset stats", "global_max must be positive"));
        }
        Ok(DatasetStats { global_min, global_max })
    }
}

pub fn compute_stats(train_images: &[SpectralImage]) -> Result<DatasetStats> {
    if train_images.is_empty() {
        return Err(Error::Empty("training image set"));
    }
    let (lo, hi) = train_images
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), img| {
            let (a, b) = img.min_max();
            (lo.min(a as f64), hi.max(b as f64))
        });
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::Contract(format!(
            "degenerate training set: every value equals {lo}"
        )));
    }
    Ok(DatasetStats {
        global_min: lo,
        global_max: span,
    })
}

/// `(S' - min) / max`, clamped to `[0, 1.2]`.
pub fn normalize(image: &SpectralImage, stats: &DatasetStats) -> SpectralImage {
    let mut clamped = 0usize;
    let data = image
        .data
        .iter()
        .map(|&v| {
            let s = ((v as f64 - stats.global_min) / stats.global_max) as f32;
            let c = s.clamp(0.0, NORMALIZED_CEILING);
            if c != s {
                clamped += 1;
            }
            c
        })
        .collect();
    if clamped > 0 {
        log::warn!("normalize: clamped {clamped} values to [0, {NORMALIZED_CEILING}]");
    }
    SpectralImage {
        height: image.height,
        width: image.width,
        data,
    }
}

/// `X = K * sum(S * xbar * dl)` for one spectrum.
pub fn spectrum_to_xyz(spectrum: &[f32], cmf: &CmfTable) -> [f64; 3] {
    let k = cmf.k_equal_energy();
    let dl = WAVELENGTH_STEP_NM as f64;
    let mut acc = [0.0f64; 3];
    for (&s, row) in spectrum.iter().zip(cmf.rows()) {
        for c in 0..3 {
            acc[c] += s as f64 * row[c] * dl;
        }
    }
    acc.map(|v| k * v)
}

pub fn spectral_to_xyz(image: &SpectralImage, cmf: &CmfTable) -> XyzImage {
    XyzImage {
        height: image.height,
        width: image.width,
        data: image.pixels().map(|px| spectrum_to_xyz(px, cmf)).collect(),
    }
}

/// Linear sRGB of `xyz / 100` (not clamped).
pub fn xyz_to_linear_srgb(xyz: [f64; 3]) -> [f64; 3] {
    let v = xyz.map(|c| c / 100.0);
    XYZ_TO_LINEAR_SRGB.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

/// sRGB transfer function on `[0, 1]`.
pub fn gamma_encode(c: f64) -> f64 {
    if c <= SRGB_LINEAR_THRESHOLD {
        SRGB_LINEAR_SLOPE * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

/// Round-half-up quantization of `[0, 1]` to a byte.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor().min(255.0) as u8
}

pub fn xyz_pixel_to_srgb(xyz: [f64; 3]) -> [u8; 3] {
    xyz_to_linear_srgb(xyz).map(|c| quantize(gamma_encode(c.clamp(0.0, 1.0))))
}

pub fn xyz_to_srgb(image: &XyzImage) -> SrgbImage {
    let data = image.data.iter().flat_map(|&xyz| xyz_pixel_to_srgb(xyz)).collect();
    SrgbImage {
        height: image.height,
        width: image.width,
        data,
    }
}

/// sRGB rendition and normalized cube of one raw image.
pub fn render_pair(image: &SpectralImage, stats: &DatasetStats, cmf: &CmfTable) -> (SrgbImage, SpectralImage) {
    let normalized = normalize(image, stats);
    let rgb = xyz_to_srgb(&spectral_to_xyz(&normalized, cmf));
    (rgb, normalized)
}

/// Renders an already normalized cube.
pub fn render_srgb(image: &SpectralImage, cmf: &CmfTable) -> SrgbImage {
    xyz_to_srgb(&spectral_to_xyz(image, cmf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn cmf() -> &'static CmfTable {
        CmfTable::cie1964_10deg()
    }

    #[test]
    fn embedded_table_checksum() {
        let digest = Sha256::digest(CmfTable::embedded_csv().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "38f7dc16ebc2d371f96b09b48ee26a3537e445ea8a694dfda7ef988f29573309");
    }

    #[test]
    fn table_spot_values() {
        let r = cmf().rows();
        assert_eq!(r[15], [0.529826, 0.991761, 0.003988]); // 550 nm
        assert_eq!(r[0], [0.02214302, 0.002452194, 0.1096090]);
        assert!(r[16..].iter().all(|row| row[2] == 0.0));
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(CmfTable::from_csv("").is_err());
        assert!(CmfTable::from_csv("wavelength_nm,xbar,ybar,zbar\n400,0,0,0\n").is_err());
        let mut bad = CmfTable::embedded_csv().replacen("400,", "401,", 1);
        assert!(CmfTable::from_csv(&bad).is_err());
        bad = CmfTable::embedded_csv().replacen("0.991761000", "-0.1", 1);
        assert!(CmfTable::from_csv(&bad).is_err());
    }

    #[test]
    fn stats_examples() {
        let a = SpectralImage::new(1, 1, (0..31).map(|i| if i % 2 == 0 { 2.0 } else { 4.0 }).collect()).unwrap();
        let s = compute_stats(std::slice::from_ref(&a)).unwrap();
        assert_eq!((s.global_min, s.global_max), (2.0, 2.0));

        let lo = SpectralImage::new(1, 1, vec![0.5; 31]).unwrap();
        let mut hi = SpectralImage::new(1, 1, vec![1.0; 31]).unwrap();
        hi.data_mut()[7] = 3.5;
        let s = compute_stats(&[lo, hi]).unwrap();
        assert_eq!((s.global_min, s.global_max), (0.5, 3.0));
    }

    #[test]
    fn stats_errors() {
        assert!(matches!(compute_stats(&[]), Err(Error::Empty(_))));
        let flat = SpectralImage::new(2, 2, vec![0.3; 4 * 31]).unwrap();
        assert!(compute_stats(&[flat]).is_err());
    }

    #[test]
    fn normalize_endpoints_and_mid() {
        let mut img = SpectralImage::new(1, 2, vec![1.0; 62]).unwrap();
        img.data_mut()[0] = 0.5;
        img.data_mut()[40] = 3.5;
        let stats = compute_stats(std::slice::from_ref(&img)).unwrap();
        let n = normalize(&img, &stats);
        assert_eq!(n.data()[0], 0.0);
        assert_eq!(n.data()[40], 1.0);
        assert!((n.data()[1] - (0.5 / 3.0)).abs() < 1e-7);
    }

    #[test]
    fn normalize_clamps_test_values() {
        let img = SpectralImage::new(1, 1, (0..31).map(|i| i as f32).collect()).unwrap();
        let stats = DatasetStats {
            global_min: 1.0,
            global_max: 10.0,
        };
        let n = normalize(&img, &stats);
        assert_eq!(n.data()[0], 0.0);
        assert_eq!(n.data()[30], NORMALIZED_CEILING);
    }

    #[test]
    fn stats_text_round_trip() {
        let s = DatasetStats {
            global_min: 0.1234567891234,
            global_max: 4096.5,
        };
        assert_eq!(DatasetStats::from_text(&s.to_text()).unwrap(), s);
        assert!(DatasetStats::from_text("global_min=1").is_err());
        assert!(DatasetStats::from_text("global_min=0\nglobal_max=0").is_err());
    }

    #[test]
    fn zero_and_equal_energy_spectra() {
        assert_eq!(spectrum_to_xyz(&[0.0; 31], cmf()), [0.0; 3]);
        let xyz = spectrum_to_xyz(&[1.0; 31], cmf());
        assert!((xyz[1] - 100.0).abs() < 1e-9, "{xyz:?}");
    }

    #[test]
    fn single_band_spectrum() {
        let mut s = [0.0f32; 31];
        s[15] = 0.7;
        let xyz = spectrum_to_xyz(&s, cmf());
        let sum_y: f64 = cmf().rows().iter().map(|r| r[1]).sum::<f64>() * 10.0;
        let k = 100.0 / sum_y;
        let expect = [0.529826, 0.991761, 0.003988].map(|c| k * 0.7f32 as f64 * c * 10.0);
        for c in 0..3 {
            assert!((xyz[c] - expect[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_branch_continuity() {
        let c = SRGB_LINEAR_THRESHOLD;
        let linear = SRGB_LINEAR_SLOPE * c;
        let power = 1.055 * c.powf(1.0 / 2.4) - 0.055;
        assert!((linear - power).abs() < 1e-9, "{linear} {power}");
        assert!((SRGB_LINEAR_SLOPE - 12.92).abs() < 1e-5);
        assert!((gamma_encode(c) - gamma_encode(c + 1e-12)).abs() < 1e-9);
    }

    #[test]
    fn d65_white_renders_white() {
        let rgb = xyz_pixel_to_srgb([95.047, 100.0, 108.883]);
        for v in rgb {
            assert!(v >= 254, "{rgb:?}");
        }
        assert_eq!(xyz_pixel_to_srgb([0.0; 3]), [0, 0, 0]);
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(0.49 / 255.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-0.2), 0);
    }

    #[test]
    fn render_pair_composes_stages() {
        let data: Vec<f32> = (0..4 * 31).map(|i| ((i * 37) % 101) as f32 / 50.0).collect();
        let img = SpectralImage::new(2, 2, data).unwrap();
        let stats = compute_stats(std::slice::from_ref(&img)).unwrap();
        let (rgb, hs) = render_pair(&img, &stats, cmf());
        assert_eq!((rgb.height(), rgb.width()), (hs.height(), hs.width()));
        for y in 0..2 {
            for x in 0..2 {
                let raw = img.pixel(y, x);
                let norm: Vec<f32> = raw
                    .iter()
                    .map(|&v| ((v as f64 - stats.global_min) / stats.global_max) as f32)
                    .collect();
                assert_eq!(hs.pixel(y, x), &norm[..]);
                assert_eq!(rgb.pixel(y, x), xyz_pixel_to_srgb(spectrum_to_xyz(&norm, cmf())));
            }
        }
        let (black, cube) = render_pair(&SpectralImage::zeros(2, 2), &DatasetStats::identity(), cmf());
        assert!(black.data().iter().all(|&v| v == 0));
        assert!(cube.data().iter().all(|&v| v == 0.0));
        let n = normalize(&hs, &DatasetStats::identity());
        assert_eq!(n, hs);
    }

    #[test]
    fn model_tensor_round_trip() {
        let data: Vec<f32> = (0..6 * 31).map(|i| (i % 17) as f32 / 16.0).collect();
        let img = SpectralImage::new(2, 3, data).unwrap();
        let t = img.to_model_tensor();
        assert_eq!(t.shape(), Shape::new(1, 31, 2, 3));
        let back = SpectralImage::from_model_tensor(&t).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    proptest::proptest! {
        #[test]
        fn xyz_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s1 in proptest::collection::vec(0.0f32..1.0, 31), s2 in proptest::collection::vec(0.0f32..1.0, 31)) {
            let mix: Vec<f32> = s1.iter().zip(&s2).map(|(&x, &y)| (a * x as f64 + b * y as f64) as f32).collect();
            let (x1, x2, xm) = (spectrum_to_xyz(&s1, cmf()), spectrum_to_xyz(&s2, cmf()), spectrum_to_xyz(&mix, cmf()));
            for c in 0..3 {
                let want = a * x1[c] + b * x2[c];
                proptest::prop_assert!((xm[c] - want).abs() <= 1e-5 * want.abs().max(1.0));
            }
        }

        #[test]
        fn gamma_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(gamma_encode(lo) <= gamma_encode(hi));
        }
    }
}
