//! Convolution geometry and the im2col/GEMM kernels behind `conv2d` and
//! `conv_transpose2d`. All inner products accumulate in f64.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Geometry of a 2-D convolution or transposed convolution.
///
/// `in_channels`/`out_channels` always refer to the op's own input and
/// output. Weights are laid out `(out, in, kh, kw)` for `conv2d` and
/// `(in, out, kh, kw)` for `conv_transpose2d`, so a convolution and the
/// transposed convolution with swapped channel counts share one buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended to a transposed convolution's output.
    pub output_padding: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    /// Same geometry with the channel roles exchanged.
    pub fn transposed(&self) -> Self {
        ConvSpec {
            in_channels: self.out_channels,
            out_channels: self.in_channels,
            ..*self
        }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Geometry {
                op,
                reason: "channel counts must be positive".into(),
            });
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return Err(Error::Geometry {
                op,
                reason: "kernel and stride must be positive".into(),
            });
        }
        Ok(())
    }

    /// `floor((in + 2p - k) / s) + 1` per spatial axis.
    pub fn conv_output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.validate("conv2d")?;
        let axis = |n: usize, k: usize, name: &str| -> Result<usize> {
            let padded = n + 2 * self.padding;
            if padded < k {
                return Err(Error::Geometry {
                    op: "conv2d",
                    reason: format!("{name} {n} with padding {} is smaller than kernel {k}", self.padding),
                });
            }
            Ok((padded - k) / self.stride + 1)
        };
        Ok((
            axis(height, self.kernel.0, "height")?,
            axis(width, self.kernel.1, "width")?,
        ))
    }

    /// `(in - 1) * s - 2p + k + output_padding` per spatial axis.
    pub fn transpose_output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.validate("conv_transpose2d")?;
        if self.output_padding >= self.stride {
            return Err(Error::Geometry {
                op: "conv_transpose2d",
                reason: format!(
                    "output padding {} must be smaller than stride {}",
                    self.output_padding, self.stride
                ),
            });
        }
        let axis = |n: usize, k: usize, name: &str| -> Result<usize> {
            let full = (n as isize - 1) * self.stride as isize + k as isize + self.output_padding as isize;
            let out = full - 2 * self.padding as isize;
            if n == 0 || out <= 0 {
                return Err(Error::Geometry {
                    op: "conv_transpose2d",
                    reason: format!("non-positive output {name} {out}"),
                });
            }
            Ok(out as usize)
        };
        Ok((
            axis(height, self.kernel.0, "height")?,
            axis(width, self.kernel.1, "width")?,
        ))
    }

    pub fn conv_weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel.0, self.kernel.1)
    }

    pub fn transpose_weight_shape(&self) -> Shape {
        Shape::new(self.in_channels, self.out_channels, self.kernel.0, self.kernel.1)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }
}

/// Sliding-window geometry between a "wide" plane and a "narrow" plane.
/// For `conv2d` the wide plane is the input; for `conv_transpose2d` it is
/// the output.
#[derive(Clone, Copy)]
struct Window {
    channels: usize,
    wide_h: usize,
    wide_w: usize,
    narrow_h: usize,
    narrow_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.narrow_h * self.narrow_w
    }

    fn wide_coord(&self, narrow: usize, tap: usize) -> Option<usize> {
        let v = (narrow * self.stride + tap) as isize - self.pad as isize;
        (v >= 0).then_some(v as usize)
    }

    /// `[C*kh*kw, narrow_h*narrow_w]` patch matrix of one wide plane.
    fn im2col(&self, plane: &[f32]) -> Vec<f64> {
        let n = self.cols();
        let mut cols = vec![0.0f64; self.rows() * n];
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.narrow_h {
                        let Some(iy) = self.wide_coord(oy, ky).filter(|&v| v < self.wide_h) else {
                            continue;
                        };
                        let src = &plane[(c * self.wide_h + iy) * self.wide_w..];
                        for ox in 0..self.narrow_w {
                            if let Some(ix) = self.wide_coord(ox, kx).filter(|&v| v < self.wide_w) {
                                dst[oy * self.narrow_w + ox] = src[ix] as f64;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds a patch matrix back onto a wide plane.
    fn col2im(&self, cols: &[f64], plane: &mut [f64]) {
        let n = self.cols();
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.narrow_h {
                        let Some(iy) = self.wide_coord(oy, ky).filter(|&v| v < self.wide_h) else {
                            continue;
                        };
                        let base = (c * self.wide_h + iy) * self.wide_w;
                        for ox in 0..self.narrow_w {
                            if let Some(ix) = self.wide_coord(ox, kx).filter(|&v| v < self.wide_w) {
                                plane[base + ix] += src[oy * self.narrow_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, row-major, f64.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn check_channels(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            op,
            axis: "channel",
            expected,
            found,
        });
    }
    Ok(())
}

fn check_shape(op: &'static str, axes: [&'static str; 4], expected: Shape, found: Shape) -> Result<()> {
    for (axis, (e, f)) in axes.into_iter().zip(expected.dims().into_iter().zip(found.dims())) {
        if e != f {
            return Err(Error::Dimension {
                op,
                axis,
                expected: e,
                found: f,
            });
        }
    }
    Ok(())
}

const CONV_WEIGHT_AXES: [&str; 4] = [
    "weight out-channel",
    "weight in-channel",
    "kernel height",
    "kernel width",
];
const TRANSPOSE_WEIGHT_AXES: [&str; 4] = [
    "weight in-channel",
    "weight out-channel",
    "kernel height",
    "kernel width",
];
const BIAS_AXES: [&str; 4] = ["bias batch", "bias channel", "bias height", "bias width"];

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f32>>,
    pub weight: Option<Vec<f32>>,
    pub bias: Option<Vec<f32>>,
}

fn conv_window(spec: &ConvSpec, in_shape: Shape, out_h: usize, out_w: usize) -> Window {
    Window {
        channels: spec.in_channels,
        wide_h: in_shape.height,
        wide_w: in_shape.width,
        narrow_h: out_h,
        narrow_w: out_w,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        stride: spec.stride,
        pad: spec.padding,
    }
}

fn transpose_window(spec: &ConvSpec, in_shape: Shape, out_h: usize, out_w: usize) -> Window {
    Window {
        channels: spec.out_channels,
        wide_h: out_h,
        wide_w: out_w,
        narrow_h: in_shape.height,
        narrow_w: in_shape.width,
        kh: spec.kernel.0,
        kw: spec.kernel.1,
        stride: spec.stride,
        pad: spec.padding,
    }
}

pub(crate) fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let s = input.shape();
    check_channels("conv2d", spec.in_channels, s.channels)?;
    check_shape("conv2d", CONV_WEIGHT_AXES, spec.conv_weight_shape(), weight.shape())?;
    if let Some(b) = bias {
        check_shape("conv2d", BIAS_AXES, spec.bias_shape(), b.shape())?;
    }
    let (oh, ow) = spec.conv_output_size(s.height, s.width)?;
    let win = conv_window(spec, s, oh, ow);
    let w64 = to_f64(weight.data());
    let n = oh * ow;
    let mut out = Vec::with_capacity(s.batch * spec.out_channels * n);
    let in_plane = s.channels * s.plane();
    let mut acc = vec![0.0f64; spec.out_channels * n];
    for b in 0..s.batch {
        let cols = win.im2col(&input.data()[b * in_plane..(b + 1) * in_plane]);
        gemm(
            spec.out_channels,
            win.rows(),
            n,
            &w64,
            false,
            &cols,
            false,
            0.0,
            &mut acc,
        );
        for (co, chunk) in acc.chunks(n).enumerate() {
            let bv = bias.map_or(0.0, |t| t.data()[co] as f64);
            out.extend(chunk.iter().map(|&v| (v + bv) as f32));
        }
    }
    Tensor::from_vec(Shape::new(s.batch, spec.out_channels, oh, ow), out)
}

pub(crate) fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    upstream: &[f32],
    out_shape: Shape,
    need: (bool, bool, bool),
) -> ConvGrads {
    let s = input.shape();
    let win = conv_window(spec, s, out_shape.height, out_shape.width);
    let n = out_shape.plane();
    let k = win.rows();
    let w64 = to_f64(weight.data());
    let in_plane = s.channels * s.plane();
    let mut gi = need.0.then(|| vec![0.0f32; input.numel()]);
    let mut gw = need.1.then(|| vec![0.0f64; weight.numel()]);
    let mut gb = need.2.then(|| vec![0.0f64; spec.out_channels]);
    let mut dcols = vec![0.0f64; k * n];
    for b in 0..s.batch {
        let dy = to_f64(&upstream[b * spec.out_channels * n..(b + 1) * spec.out_channels * n]);
        if let Some(gb) = gb.as_mut() {
            for (co, chunk) in dy.chunks(n).enumerate() {
                gb[co] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(gw) = gw.as_mut() {
            let cols = win.im2col(&input.data()[b * in_plane..(b + 1) * in_plane]);
            gemm(spec.out_channels, n, k, &dy, false, &cols, true, 1.0, gw);
        }
        if let Some(gi) = gi.as_mut() {
            gemm(k, spec.out_channels, n, &w64, true, &dy, false, 0.0, &mut dcols);
            let mut plane = vec![0.0f64; in_plane];
            win.col2im(&dcols, &mut plane);
            gi[b * in_plane..(b + 1) * in_plane]
                .iter_mut()
                .zip(plane)
                .for_each(|(d, v)| *d = v as f32);
        }
    }
    ConvGrads {
        input: gi,
        weight: gw.map(|v| v.into_iter().map(|x| x as f32).collect()),
        bias: gb.map(|v| v.into_iter().map(|x| x as f32).collect()),
    }
}

pub(crate) fn conv_transpose2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    let s = input.shape();
    check_channels("conv_transpose2d", spec.in_channels, s.channels)?;
    check_shape(
        "conv_transpose2d",
        TRANSPOSE_WEIGHT_AXES,
        spec.transpose_weight_shape(),
        weight.shape(),
    )?;
    if let Some(b) = bias {
        check_shape("conv_transpose2d", BIAS_AXES, spec.bias_shape(), b.shape())?;
    }
    let (oh, ow) = spec.transpose_output_size(s.height, s.width)?;
    let win = transpose_window(spec, s, oh, ow);
    let w64 = to_f64(weight.data());
    let n = s.plane();
    let k = win.rows();
    let out_plane = spec.out_channels * oh * ow;
    let mut out = Vec::with_capacity(s.batch * out_plane);
    let mut cols = vec![0.0f64; k * n];
    for b in 0..s.batch {
        let x = to_f64(&input.data()[b * spec.in_channels * n..(b + 1) * spec.in_channels * n]);
        gemm(k, spec.in_channels, n, &w64, true, &x, false, 0.0, &mut cols);
        let mut plane = vec![0.0f64; out_plane];
        win.col2im(&cols, &mut plane);
        for (co, chunk) in plane.chunks(oh * ow).enumerate() {
            let bv = bias.map_or(0.0, |t| t.data()[co] as f64);
            out.extend(chunk.iter().map(|&v| (v + bv) as f32));
        }
    }
    Tensor::from_vec(Shape::new(s.batch, spec.out_channels, oh, ow), out)
}

pub(crate) fn conv_transpose2d_backward(
    input: &Tensor,
    weight: &Tensor,
    spec: &ConvSpec,
    upstream: &[f32],
    out_shape: Shape,
    need: (bool, bool, bool),
) -> ConvGrads {
    let s = input.shape();
    let win = transpose_window(spec, s, out_shape.height, out_shape.width);
    let n = s.plane();
    let k = win.rows();
    let w64 = to_f64(weight.data());
    let out_plane = spec.out_channels * out_shape.plane();
    let in_plane = spec.in_channels * n;
    let mut gi = need.0.then(|| vec![0.0f32; input.numel()]);
    let mut gw = need.1.then(|| vec![0.0f64; weight.numel()]);
    let mut gb = need.2.then(|| vec![0.0f64; spec.out_channels]);
    let mut dx = vec![0.0f64; in_plane];
    for b in 0..s.batch {
        let dy = &upstream[b * out_plane..(b + 1) * out_plane];
        if let Some(gb) = gb.as_mut() {
            for (co, chunk) in dy.chunks(out_shape.plane()).enumerate() {
                gb[co] += chunk.iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        if !(need.0 || need.1) {
            continue;
        }
        let dcols = win.im2col(dy);
        if let Some(gi) = gi.as_mut() {
            gemm(spec.in_channels, k, n, &w64, false, &dcols, false, 0.0, &mut dx);
            gi[b * in_plane..(b + 1) * in_plane]
                .iter_mut()
                .zip(&dx)
                .for_each(|(d, &v)| *d = v as f32);
        }
        if let Some(gw) = gw.as_mut() {
            let x = to_f64(&input.data()[b * in_plane..(b + 1) * in_plane]);
            gemm(spec.in_channels, n, k, &x, false, &dcols, true, 1.0, gw);
        }
    }
    ConvGrads {
        input: gi,
        weight: gw.map(|v| v.into_iter().map(|x| x as f32).collect()),
        bias: gb.map(|v| v.into_iter().map(|x| x as f32).collect()),
    }
}
