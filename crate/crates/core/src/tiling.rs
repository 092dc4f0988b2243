//! Full-image inference over a grid of non-overlapping square tiles.

use crate::colorimetry::{SpectralImage, SrgbImage, BANDS};
use crate::error::{Error, Result};
use crate::models::UNetGenerator;
use crate::tensor::Tensor;

pub const DEFAULT_TILE: usize = 256;

/// Top-left anchored grid; the remainder past the last full tile is
/// discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub effective_height: usize,
    pub effective_width: usize,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left corner `(y, x)` of tile `index` (row-major).
    pub fn origin(&self, index: usize) -> (usize, usize) {
        (
            (index / self.cols) * self.tile_size,
            (index % self.cols) * self.tile_size,
        )
    }
}

pub fn plan_tiles(height: usize, width: usize, tile_size: usize) -> Result<TileGrid> {
    if tile_size == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    if height < tile_size || width < tile_size {
        return Err(Error::Geometry {
            op: "plan_tiles",
            reason: format!("image {height}x{width} is smaller than one {tile_size}x{tile_size} tile"),
        });
    }
    let (rows, cols) = (height / tile_size, width / tile_size);
    Ok(TileGrid {
        tile_size,
        rows,
        cols,
        effective_height: rows * tile_size,
        effective_width: cols * tile_size,
    })
}

/// Anything that maps a `(1, 3, T, T)` model-range RGB tile to a
/// `(1, 31, T, T)` tanh-range spectral tile.
pub trait TileModel {
    fn tile_size(&self) -> usize;
    fn predict_tile(&self, rgb: &Tensor) -> Result<Tensor>;
}

impl TileModel for UNetGenerator {
    fn tile_size(&self) -> usize {
        self.config().input_size
    }

    fn predict_tile(&self, rgb: &Tensor) -> Result<Tensor> {
        self.predict(rgb)
    }
}

pub fn reconstruct<M: TileModel + ?Sized>(model: &M, rgb: &SrgbImage) -> Result<SpectralImage> {
    let grid = plan_tiles(rgb.height(), rgb.width(), model.tile_size())?;
    let order: Vec<usize> = (0..grid.len()).collect();
    reconstruct_with_order(model, rgb, &order)
}

/// Like [`reconstruct`], visiting tiles in the given permutation of
/// row-major tile indices.
pub fn reconstruct_with_order<M: TileModel + ?Sized>(
    model: &M,
    rgb: &SrgbImage,
    order: &[usize],
) -> Result<SpectralImage> {
    let grid = plan_tiles(rgb.height(), rgb.width(), model.tile_size())?;
    let mut seen = vec![false; grid.len()];
    for &i in order {
        if i >= grid.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Contract(format!(
                "tile order is not a permutation of 0..{}",
                grid.len()
            )));
        }
    }
    if order.len() != grid.len() {
        return Err(Error::Contract(format!(
            "tile order is not a permutation of 0..{}",
            grid.len()
        )));
    }
    let t = grid.tile_size;
    let mut out = SpectralImage::zeros(grid.effective_height, grid.effective_width);
    for &i in order {
        let (y0, x0) = grid.origin(i);
        let tile = rgb.crop(y0, x0, t, t)?.to_model_tensor();
        let pred = model.predict_tile(&tile)?;
        if pred.shape().dims() != [1, BANDS, t, t] {
            return Err(Error::Dimension {
                op: "reconstruct",
                axis: "tile output channels",
                expected: BANDS,
                found: pred.shape().channels,
            });
        }
        let spec = SpectralImage::from_model_tensor(&pred)?;
        for y in 0..t {
            for x in 0..t {
                out.pixel_mut(y0 + y, x0 + x).copy_from_slice(spec.pixel(y, x));
            }
        }
    }
    Ok(out)
}
