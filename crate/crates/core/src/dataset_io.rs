//! On-disk formats: `HSI1` spectral cubes, binary PPM, split manifests,
//! and a deterministic synthetic dataset.
//!
//! `HSI1` layout (little-endian): magic `HSI1`, version `u16`, height,
//! width and band count as `u32`, `bands` wavelengths as `f32` (nm,
//! strictly increasing), then `bands` planes of `height * width` `f32`
//! values in row-major order.
//!
//! Other sources (for example MATLAB `.mat` cubes) are expected to be
//! converted externally: resample to 31 bands at 400..700 nm, transpose to
//! band-major planes, and write with [`write_hsi`].

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorimetry::{wavelengths, SpectralImage, SrgbImage, BANDS};
use crate::error::{Error, Result};

pub const HSI_MAGIC: &[u8; 4] = b"HSI1";
pub const HSI_VERSION: u16 = 1;
const HSI_HEADER_LEN: usize = 4 + 2 + 12;

/// A decoded `HSI1` file with an arbitrary band count.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub height: usize,
    pub width: usize,
    pub wavelengths: Vec<f32>,
    /// Band-major: `planes[b * height * width + y * width + x]`.
    pub planes: Vec<f32>,
}

impl HsiCube {
    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn from_image(image: &SpectralImage) -> Self {
        let (h, w) = (image.height(), image.width());
        let mut planes = vec![0.0; h * w * BANDS];
        for (p, px) in image.pixels().enumerate() {
            for (b, &v) in px.iter().enumerate() {
                planes[b * h * w + p] = v;
            }
        }
        HsiCube {
            height: h,
            width: w,
            wavelengths: wavelengths().to_vec(),
            planes,
        }
    }

    /// Requires the canonical 31-band 400..700 nm sampling.
    pub fn into_image(self) -> Result<SpectralImage> {
        if self.wavelengths.as_slice() != wavelengths() {
            return Err(Error::parse(
                "HSI1 file",
                format!(
                    "expected {BANDS} bands at 400..700 nm, found {} bands starting at {:?}",
                    self.bands(),
                    self.wavelengths.first()
                ),
            ));
        }
        let n = self.height * self.width;
        let mut data = vec![0.0; n * BANDS];
        for b in 0..BANDS {
            for p in 0..n {
                data[p * BANDS + b] = self.planes[b * n + p];
            }
        }
        SpectralImage::new(self.height, self.width, data)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        validate_wavelengths(&self.wavelengths)?;
        let expected = self.height * self.width * self.bands();
        if self.planes.len() != expected {
            return Err(Error::Dimension {
                op: "write_hsi",
                axis: "payload length",
                expected,
                found: self.planes.len(),
            });
        }
        let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Contract(format!("HSI1 dimension {v} exceeds u32")));
        let mut out = Vec::with_capacity(HSI_HEADER_LEN + 4 * (self.bands() + expected));
        out.extend_from_slice(HSI_MAGIC);
        out.extend_from_slice(&HSI_VERSION.to_le_bytes());
        for v in [self.height, self.width, self.bands()] {
            out.extend_from_slice(&dim(v)?.to_le_bytes());
        }
        for v in self.wavelengths.iter().chain(&self.planes) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::parse("HSI1 file", reason);
        if bytes.len() < HSI_HEADER_LEN {
            return Err(bad(format!("truncated header: {} bytes", bytes.len())));
        }
        if &bytes[..4] != HSI_MAGIC {
            return Err(bad(format!("bad magic {:?}", &bytes[..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != HSI_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (height, width, bands) = (u32_at(6), u32_at(10), u32_at(14));
        if height == 0 || width == 0 || bands == 0 {
            return Err(bad(format!("zero extent {height}x{width}x{bands}")));
        }
        let count = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(bands))
            .and_then(|n| n.checked_add(bands))
            .ok_or_else(|| bad("dimensions overflow".into()))?;
        let body = &bytes[HSI_HEADER_LEN..];
        if body.len() != count * 4 {
            return Err(bad(format!(
                "payload is {} bytes, header implies {}",
                body.len(),
                count.saturating_mul(4)
            )));
        }
        let mut floats = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let wl: Vec<f32> = floats.by_ref().take(bands).collect();
        validate_wavelengths(&wl)?;
        Ok(HsiCube {
            height,
            width,
            wavelengths: wl,
            planes: floats.collect(),
        })
    }
}

fn validate_wavelengths(wl: &[f32]) -> Result<()> {
    if wl.is_empty() {
        return Err(Error::parse("HSI1 file", "no wavelengths"));
    }
    if let Some(i) = wl.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::parse(
            "HSI1 file",
            format!(
                "wavelengths not strictly increasing at index {}: {} then {}",
                i + 1,
                wl[i],
                wl[i + 1]
            ),
        ));
    }
    Ok(())
}

pub fn write_hsi(image: &SpectralImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, HsiCube::from_image(image).encode()?)?;
    Ok(())
}

pub fn read_hsi(path: impl AsRef<Path>) -> Result<SpectralImage> {
    read_hsi_cube(path)?.into_image()
}

pub fn read_hsi_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    HsiCube::decode(&fs::read(path)?)
}

/// Binary `P6` encoding, maxval 255.
pub fn encode_ppm(image: &SrgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn write_ppm(image: &SrgbImage, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ppm(image))?;
    Ok(())
}

/// Decodes a `P6` file with maxval 255, tolerating `#` comments in the
/// header.
pub fn decode_ppm(bytes: &[u8]) -> Result<SrgbImage> {
    let bad = |reason: &str| Error::parse("PPM file", reason);
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| !c.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(bad("not a binary P6 file"));
    }
    let mut num = || -> Result<usize> { token()?.parse().map_err(|_| bad("non-numeric header field")) };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let expected = width * height * 3;
    if bytes.len() != start + expected {
        return Err(bad("raster size does not match header"));
    }
    SrgbImage::new(height, width, bytes[start..].to_vec())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<SrgbImage> {
    decode_ppm(&fs::read(path)?)
}

/// One fold of a train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub fold: String,
    pub ids: Vec<String>,
}

impl SplitManifest {
    /// Parses one identifier per line; blank lines and `#` comments are
    /// skipped.
    pub fn parse(fold: impl Into<String>, text: &str) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let id = line.trim();
            if id.is_empty() || id.starts_with('#') {
                continue;
            }
            if !seen.insert(id) {
                return Err(Error::parse(
                    "split manifest",
                    format!("duplicate id {id:?} on line {}", n + 1),
                ));
            }
            ids.push(id.to_string());
        }
        if ids.is_empty() {
            return Err(Error::Empty("split manifest lists no ids"));
        }
        Ok(SplitManifest { fold: fold.into(), ids })
    }

    pub fn to_text(&self) -> String {
        self.ids.iter().map(|id| format!("{id}\n")).collect()
    }
}

/// Loads a manifest; the fold id is the file stem.
pub fn load_split(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    let fold = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SplitManifest::parse(fold, &fs::read_to_string(path)?)
}

/// Checks that folds are pairwise disjoint and together cover `all_ids`.
pub fn check_folds(folds: &[SplitManifest], all_ids: &[String]) -> Result<()> {
    let mut owner: std::collections::HashMap<&str, &str> = Default::default();
    for f in folds {
        for id in &f.ids {
            if let Some(prev) = owner.insert(id, &f.fold) {
                return Err(Error::Contract(format!(
                    "id {id:?} appears in folds {prev:?} and {:?}",
                    f.fold
                )));
            }
        }
    }
    let universe: HashSet<&str> = all_ids.iter().map(String::as_str).collect();
    if let Some(id) = owner.keys().find(|id| !universe.contains(*id)) {
        return Err(Error::Contract(format!("fold id {id:?} is not in the dataset")));
    }
    if let Some(id) = universe.iter().find(|id| !owner.contains_key(*id)) {
        return Err(Error::Contract(format!("dataset id {id:?} is in no fold")));
    }
    Ok(())
}

/// `(id, path)` for every file with `extension` in `dir`, sorted by id.
pub fn scan_dir(dir: impl AsRef<Path>, extension: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == extension) {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            out.push((id, path));
        }
    }
    out.sort();
    Ok(out)
}

fn gaussian(x: f32, mu: f32, sigma: f32) -> f32 {
    (-((x - mu) / sigma).powi(2) / 2.0).exp()
}

/// Smooth random spectrum: a sum of broad Gaussians plus a small floor,
/// peak-normalized to 1.
fn random_spectrum<R: Rng>(rng: &mut R) -> [f32; BANDS] {
    let wl = wavelengths();
    let mut s = [0.05f32; BANDS];
    for _ in 0..rng.random_range(1..=3) {
        let (mu, sigma, amp) = (
            rng.random_range(380.0..720.0f32),
            rng.random_range(35.0..90.0f32),
            rng.random_range(0.3..1.0f32),
        );
        for (v, &l) in s.iter_mut().zip(&wl) {
            *v += amp * gaussian(l, mu, sigma);
        }
    }
    let peak = s.iter().cloned().fold(0.0, f32::max);
    s.map(|v| v / peak)
}

/// Narrow component near the long-wavelength end, where every color
/// matching function is close to zero.
fn hidden_component(l: f32) -> f32 {
    gaussian(l, 690.0, 20.0)
}

/// Deterministic synthetic cubes.
///
/// Each image is a Voronoi partition into regions with their own smooth
/// spectrum and a linear brightness gradient. Roughly half of the regions
/// carry a fine checkerboard texture together with an extra long-wavelength
/// component whose strength follows the texture contrast; the component is
/// nearly invisible in RGB, so recovering it needs spatial context.
pub fn synth_dataset(n: usize, size: usize, seed: u64) -> Vec<SpectralImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synth_image(size, &mut rng)).collect()
}

struct Region {
    cy: f32,
    cx: f32,
    spectrum: [f32; BANDS],
    level: f32,
    grad: (f32, f32),
    contrast: f32,
}

fn synth_image<R: Rng>(size: usize, rng: &mut R) -> SpectralImage {
    let regions: Vec<Region> = (0..rng.random_range(3..=6))
        .map(|_| Region {
            cy: rng.random_range(0.0..size as f32),
            cx: rng.random_range(0.0..size as f32),
            spectrum: random_spectrum(rng),
            level: rng.random_range(0.35..0.75),
            grad: (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
            contrast: if rng.random_bool(0.5) {
                rng.random_range(0.15..0.3)
            } else {
                0.0
            },
        })
        .collect();
    let wl = wavelengths();
    let hidden: Vec<f32> = wl.iter().map(|&l| hidden_component(l)).collect();
    let mut data = Vec::with_capacity(size * size * BANDS);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f32 + 0.5, x as f32 + 0.5);
            let r = regions
                .iter()
                .min_by(|a, b| {
                    let da = (a.cy - fy).powi(2) + (a.cx - fx).powi(2);
                    let db = (b.cy - fy).powi(2) + (b.cx - fx).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            let (u, v) = (fy / size as f32 - 0.5, fx / size as f32 - 0.5);
            let checker = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
            let brightness = (r.level + r.grad.0 * u + r.grad.1 * v) * (1.0 + r.contrast * checker);
            for b in 0..BANDS {
                let value = 0.75 * brightness * r.spectrum[b] + 1.2 * r.contrast * hidden[b];
                data.push(value.clamp(0.0, 1.0));
            }
        }
    }
    SpectralImage::new(size, size, data).expect("sized to shape")
}
