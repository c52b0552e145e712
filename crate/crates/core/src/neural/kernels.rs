//! Raw compute kernels behind the graph ops.
//!
//! Activations are `[batch, height, width, channels]`, convolution weights
//! `[kh, kw, c_in, c_out]`. A [`ConvGeom`] always describes the forward
//! (strided, shrinking) convolution; the transposed op maps its output
//! space back to its input space.

use crate::error::{Error, Result};
use crate::par;

use super::tensor::{fmt_shape, Shape, Tensor4};

/// Geometry of a 2-D convolution with "same"-style padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    /// Spatial size of the convolution input.
    pub input: (usize, usize),
    /// Spatial size of the convolution output, `input / stride`.
    pub output: (usize, usize),
}

impl ConvGeom {
    /// `out = in / stride`, `pad_begin = (kernel - stride) / 2`.
    pub fn same(
        kernel: (usize, usize),
        stride: (usize, usize),
        input: (usize, usize),
    ) -> Result<Self> {
        if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::shape("kernel and stride must be >= 1"));
        }
        if kernel.0 < stride.0 || kernel.1 < stride.1 {
            return Err(Error::shape(
                "kernel must be at least as large as the stride",
            ));
        }
        if !input.0.is_multiple_of(stride.0) || !input.1.is_multiple_of(stride.1) {
            return Err(Error::shape(format!(
                "input {}x{} not divisible by stride {}x{}",
                input.0, input.1, stride.0, stride.1
            )));
        }
        Ok(Self {
            kernel,
            stride,
            pad: ((kernel.0 - stride.0) / 2, (kernel.1 - stride.1) / 2),
            input,
            output: (input.0 / stride.0, input.1 / stride.1),
        })
    }

    #[inline]
    fn source(&self, o: (usize, usize), k: (usize, usize)) -> Option<(usize, usize)> {
        let h = (o.0 * self.stride.0 + k.0).checked_sub(self.pad.0)?;
        let w = (o.1 * self.stride.1 + k.1).checked_sub(self.pad.1)?;
        (h < self.input.0 && w < self.input.1).then_some((h, w))
    }

    pub(crate) fn check_weight(&self, w: &Shape) -> Result<(usize, usize)> {
        if w[0] != self.kernel.0 || w[1] != self.kernel.1 {
            return Err(Error::shape(format!(
                "weight {} does not match kernel {}x{}",
                fmt_shape(w),
                self.kernel.0,
                self.kernel.1
            )));
        }
        Ok((w[2], w[3]))
    }

    pub(crate) fn check_spatial(
        &self,
        x: &Shape,
        expect: (usize, usize),
        what: &str,
    ) -> Result<()> {
        if (x[1], x[2]) != expect {
            return Err(Error::shape(format!(
                "{what} {} does not match expected spatial size {}x{}",
                fmt_shape(x),
                expect.0,
                expect.1
            )));
        }
        Ok(())
    }
}

/// Forward convolution: `[B, H, W, Ci] * [kh, kw, Ci, Co] -> [B, H/sh, W/sw, Co]`.
pub fn conv2d(x: &Tensor4, w: &Tensor4, g: &ConvGeom) -> Tensor4 {
    let [b, _, _, ci] = x.shape();
    let co = w.shape()[3];
    let (oh, ow) = g.output;
    let (kh, kw) = g.kernel;
    let mut out = Tensor4::zeros([b, oh, ow, co]);
    let xd = x.data();
    let wd = w.data();
    let (ih, iw) = g.input;
    par::for_each_chunk_mut(out.data_mut(), ow * co, |row, dst| {
        let (bi, r) = (row / oh, row % oh);
        for c in 0..ow {
            let y = &mut dst[c * co..(c + 1) * co];
            for i in 0..kh {
                for j in 0..kw {
                    let Some((h, v)) = g.source((r, c), (i, j)) else {
                        continue;
                    };
                    let xs = &xd[((bi * ih + h) * iw + v) * ci..][..ci];
                    let wbase = (i * kw + j) * ci * co;
                    for (p, &xv) in xs.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wr = &wd[wbase + p * co..][..co];
                        for (yv, &wv) in y.iter_mut().zip(wr) {
                            *yv += xv * wv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Adjoint of [`conv2d`] with respect to its input:
/// `[B, H/sh, W/sw, Co] -> [B, H, W, Ci]`.
pub fn conv2d_transpose(gy: &Tensor4, w: &Tensor4, g: &ConvGeom) -> Tensor4 {
    let b = gy.shape()[0];
    let [kh, kw, ci, co] = w.shape();
    let (oh, ow) = g.output;
    let (ih, iw) = g.input;
    let mut out = Tensor4::zeros([b, ih, iw, ci]);
    let gd = gy.data();
    let wd = w.data();
    par::for_each_chunk_mut(out.data_mut(), ih * iw * ci, |bi, dst| {
        for r in 0..oh {
            for c in 0..ow {
                let gs = &gd[((bi * oh + r) * ow + c) * co..][..co];
                for i in 0..kh {
                    for j in 0..kw {
                        let Some((h, v)) = g.source((r, c), (i, j)) else {
                            continue;
                        };
                        let xs = &mut dst[(h * iw + v) * ci..][..ci];
                        let wbase = (i * kw + j) * ci * co;
                        for (p, xv) in xs.iter_mut().enumerate() {
                            let wr = &wd[wbase + p * co..][..co];
                            let mut acc = 0.0;
                            for (&gv, &wv) in gs.iter().zip(wr) {
                                acc += gv * wv;
                            }
                            *xv += acc;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Adjoint of [`conv2d`] with respect to its weight:
/// `([B, H, W, Ci], [B, H/sh, W/sw, Co]) -> [kh, kw, Ci, Co]`.
pub fn conv2d_weight(x: &Tensor4, gy: &Tensor4, g: &ConvGeom) -> Tensor4 {
    let [b, ih, iw, ci] = x.shape();
    let co = gy.shape()[3];
    let (oh, ow) = g.output;
    let (kh, kw) = g.kernel;
    let mut out = Tensor4::zeros([kh, kw, ci, co]);
    let xd = x.data();
    let gd = gy.data();
    par::for_each_chunk_mut(out.data_mut(), ci * co, |tap, dst| {
        let (i, j) = (tap / kw, tap % kw);
        for bi in 0..b {
            for r in 0..oh {
                for c in 0..ow {
                    let Some((h, v)) = g.source((r, c), (i, j)) else {
                        continue;
                    };
                    let xs = &xd[((bi * ih + h) * iw + v) * ci..][..ci];
                    let gs = &gd[((bi * oh + r) * ow + c) * co..][..co];
                    for (p, &xv) in xs.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        for (dv, &gv) in dst[p * co..(p + 1) * co].iter_mut().zip(gs) {
                            *dv += xv * gv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// `op(a) @ op(b)` on the matrix views `[rows, cols]` of both operands.
pub fn matmul(a: &Tensor4, b: &Tensor4, ta: bool, tb: bool) -> Result<Tensor4> {
    let (ar, ac) = matrix_dims(&a.shape());
    let (br, bc) = matrix_dims(&b.shape());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dims differ: {} vs {}",
            fmt_shape(&a.shape()),
            fmt_shape(&b.shape())
        )));
    }
    let ad = a.data();
    let bd = b.data();
    let mut out = Tensor4::zeros([m, 1, 1, n]);
    par::for_each_chunk_mut(out.data_mut(), n, |i, row| {
        for p in 0..k {
            let av = if ta { ad[p * ac + i] } else { ad[i * ac + p] };
            if av == 0.0 {
                continue;
            }
            if tb {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * bd[j * bc + p];
                }
            } else {
                for (o, &bv) in row.iter_mut().zip(&bd[p * bc..(p + 1) * bc]) {
                    *o += av * bv;
                }
            }
        }
    });
    Ok(out)
}

/// Rows are the leading three dims flattened, columns the last.
pub fn matrix_dims(s: &Shape) -> (usize, usize) {
    (s[0] * s[1] * s[2], s[3])
}
