//! Forward and backward kernels for the spatial tensor operations.
//!
//! Each output element is accumulated serially in a fixed order
//! (channel, then kz, ky, kx), so parallelism across output blocks keeps
//! results bitwise identical to the naive single-threaded oracles. The
//! convolution pads with zeros; adding a 0 * w term leaves an f64
//! accumulator unchanged, so the padded inner loop matches a bounds-checked
//! loop exactly.

use super::Tensor;
use rayon::prelude::*;

fn idx5(shape: [usize; 5], n: usize, c: usize, z: usize, y: usize, x: usize) -> usize {
    (((n * shape[1] + c) * shape[2] + z) * shape[3] + y) * shape[4] + x
}

/// Zero-pads the spatial axes of one batch element into `buf`.
fn pad_batch(x: &Tensor, xs: [usize; 5], ni: usize, pad: usize, buf: &mut [f64]) {
    let [_, c, d0, d1, d2] = xs;
    let (p0, p1, p2) = (d0 + 2 * pad, d1 + 2 * pad, d2 + 2 * pad);
    buf.fill(0.0);
    let xd = x.data();
    for ci in 0..c {
        for z in 0..d0 {
            for y in 0..d1 {
                let src = idx5(xs, ni, ci, z, y, 0);
                let dst = ((ci * p0 + z + pad) * p1 + y + pad) * p2 + pad;
                buf[dst..dst + d2].copy_from_slice(&xd[src..src + d2]);
            }
        }
    }
}

/// Same-shape 3D cross-correlation plus bias.
pub(crate) fn conv3d_forward(x: &Tensor, w: &Tensor, b: &Tensor, pad: usize) -> Tensor {
    let xs = x.dims5().expect("checked by caller");
    let ws = w.dims5().expect("checked by caller");
    let [n, c_in, d0, d1, d2] = xs;
    let (c_out, k) = (ws[0], ws[2]);
    let (p1, p2) = (d1 + 2 * pad, d2 + 2 * pad);
    let spatial = d0 * d1 * d2;
    let wd = w.data();
    let bd = b.data();
    let mut out = Tensor::zeros(vec![n, c_out, d0, d1, d2]);
    let mut padded = vec![0.0; c_in * (d0 + 2 * pad) * p1 * p2];
    for ni in 0..n {
        pad_batch(x, xs, ni, pad, &mut padded);
        let batch_out = &mut out.data_mut()[ni * c_out * spatial..(ni + 1) * c_out * spatial];
        let padded_ref = &padded;
        batch_out
            .par_chunks_mut(spatial)
            .enumerate()
            .for_each(|(co, chunk)| {
                for z in 0..d0 {
                    for y in 0..d1 {
                        for xx in 0..d2 {
                            let mut acc = bd[co];
                            for ci in 0..c_in {
                                for kz in 0..k {
                                    for ky in 0..k {
                                        let pbase =
                                            ((ci * (d0 + 2 * pad) + z + kz) * p1 + y + ky) * p2
                                                + xx;
                                        let wbase = (((co * c_in + ci) * k + kz) * k + ky) * k;
                                        for kx in 0..k {
                                            acc += padded_ref[pbase + kx] * wd[wbase + kx];
                                        }
                                    }
                                }
                            }
                            chunk[(z * d1 + y) * d2 + xx] = acc;
                        }
                    }
                }
            });
    }
    out
}

/// Gradients of conv3d with respect to input, weights, and bias.
pub(crate) fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let xs = x.dims5().expect("rank 5");
    let ws = w.dims5().expect("rank 5");
    let gs = gy.dims5().expect("rank 5");
    let [n, c_in, d0, d1, d2] = xs;
    let (c_out, k) = (ws[0], ws[2]);
    let wd = w.data();
    let gd = gy.data();

    let mut db = Tensor::zeros(vec![c_out]);
    for co in 0..c_out {
        let mut acc = 0.0;
        for ni in 0..n {
            for z in 0..d0 {
                for y in 0..d1 {
                    for xx in 0..d2 {
                        acc += gd[idx5(gs, ni, co, z, y, xx)];
                    }
                }
            }
        }
        db.data_mut()[co] = acc;
    }

    // dL/dx as a gather: contributions from every kernel offset that maps
    // this input position into a valid output position
    let mut dx = Tensor::zeros(vec![n, c_in, d0, d1, d2]);
    let spatial = d0 * d1 * d2;
    for ni in 0..n {
        let dx_batch = &mut dx.data_mut()[ni * c_in * spatial..(ni + 1) * c_in * spatial];
        dx_batch
            .par_chunks_mut(spatial)
            .enumerate()
            .for_each(|(ci, chunk)| {
                for z in 0..d0 {
                    for y in 0..d1 {
                        for xx in 0..d2 {
                            let mut acc = 0.0;
                            for co in 0..c_out {
                                for kz in 0..k {
                                    let oz = (z + pad).wrapping_sub(kz);
                                    if oz >= d0 {
                                        continue;
                                    }
                                    for ky in 0..k {
                                        let oy = (y + pad).wrapping_sub(ky);
                                        if oy >= d1 {
                                            continue;
                                        }
                                        for kx in 0..k {
                                            let ox = (xx + pad).wrapping_sub(kx);
                                            if ox >= d2 {
                                                continue;
                                            }
                                            acc += gd[idx5(gs, ni, co, oz, oy, ox)]
                                                * wd[(((co * c_in + ci) * k + kz) * k + ky) * k
                                                    + kx];
                                        }
                                    }
                                }
                            }
                            chunk[(z * d1 + y) * d2 + xx] = acc;
                        }
                    }
                }
            });
    }

    let mut dw = Tensor::zeros(vec![c_out, c_in, k, k, k]);
    let wlen_per_co = c_in * k * k * k;
    let xd = x.data();
    dw.data_mut()
        .par_chunks_mut(wlen_per_co)
        .enumerate()
        .for_each(|(co, chunk)| {
            for ci in 0..c_in {
                for kz in 0..k {
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for ni in 0..n {
                                for z in 0..d0 {
                                    let iz = (z + kz).wrapping_sub(pad);
                                    if iz >= d0 {
                                        continue;
                                    }
                                    for y in 0..d1 {
                                        let iy = (y + ky).wrapping_sub(pad);
                                        if iy >= d1 {
                                            continue;
                                        }
                                        for xx in 0..d2 {
                                            let ix = (xx + kx).wrapping_sub(pad);
                                            if ix >= d2 {
                                                continue;
                                            }
                                            acc += gd[idx5(gs, ni, co, z, y, xx)]
                                                * xd[idx5(xs, ni, ci, iz, iy, ix)];
                                        }
                                    }
                                }
                            }
                            chunk[((ci * k + kz) * k + ky) * k + kx] = acc;
                        }
                    }
                }
            }
        });

    (dx, dw, db)
}

/// Non-overlapping max pooling; also returns per-output argmax indices
/// (first occurrence in window scan order on ties).
pub(crate) fn maxpool3d_forward(x: &Tensor, pool: [usize; 3]) -> (Tensor, Vec<usize>) {
    let xs = x.dims5().expect("rank 5");
    let [n, c, d0, d1, d2] = xs;
    let [q0, q1, q2] = pool;
    let (o0, o1, o2) = (d0 / q0, d1 / q1, d2 / q2);
    let xd = x.data();
    let mut out = Tensor::zeros(vec![n, c, o0, o1, o2]);
    let mut argmax = vec![0usize; out.len()];
    let os = [n, c, o0, o1, o2];
    for ni in 0..n {
        for ci in 0..c {
            for z in 0..o0 {
                for y in 0..o1 {
                    for xx in 0..o2 {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0usize;
                        for kz in 0..q0 {
                            for ky in 0..q1 {
                                for kx in 0..q2 {
                                    let src = idx5(
                                        xs,
                                        ni,
                                        ci,
                                        z * q0 + kz,
                                        y * q1 + ky,
                                        xx * q2 + kx,
                                    );
                                    if xd[src] > best {
                                        best = xd[src];
                                        best_i = src;
                                    }
                                }
                            }
                        }
                        let oi = idx5(os, ni, ci, z, y, xx);
                        out.data_mut()[oi] = best;
                        argmax[oi] = best_i;
                    }
                }
            }
        }
    }
    (out, argmax)
}

/// Per-axis interpolation stencil for align-corners-false upsampling.
fn axis_stencil(d_in: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let d_out = d_in * factor;
    (0..d_out)
        .map(|o| {
            let q = (o as f64 + 0.5) / factor as f64 - 0.5;
            let qc = q.clamp(0.0, (d_in - 1) as f64);
            let i0 = qc.floor() as usize;
            let t = qc - i0 as f64;
            let i1 = (i0 + 1).min(d_in - 1);
            (i0, i1, t)
        })
        .collect()
}

/// Trilinear upsampling by integer factors, align-corners-false.
pub(crate) fn upsample_trilinear_forward(x: &Tensor, factor: [usize; 3]) -> Tensor {
    let xs = x.dims5().expect("rank 5");
    let [n, c, d0, d1, d2] = xs;
    let (o0, o1, o2) = (d0 * factor[0], d1 * factor[1], d2 * factor[2]);
    let sz = axis_stencil(d0, factor[0]);
    let sy = axis_stencil(d1, factor[1]);
    let sx = axis_stencil(d2, factor[2]);
    let xd = x.data();
    let mut out = Tensor::zeros(vec![n, c, o0, o1, o2]);
    let os = [n, c, o0, o1, o2];
    for ni in 0..n {
        for ci in 0..c {
            for (z, &(z0, z1, tz)) in sz.iter().enumerate() {
                for (y, &(y0, y1, ty)) in sy.iter().enumerate() {
                    for (xx, &(x0, x1, tx)) in sx.iter().enumerate() {
                        let f = |zz, yy, xc| xd[idx5(xs, ni, ci, zz, yy, xc)];
                        let c00 = f(z0, y0, x0) + tx * (f(z0, y0, x1) - f(z0, y0, x0));
                        let c01 = f(z0, y1, x0) + tx * (f(z0, y1, x1) - f(z0, y1, x0));
                        let c10 = f(z1, y0, x0) + tx * (f(z1, y0, x1) - f(z1, y0, x0));
                        let c11 = f(z1, y1, x0) + tx * (f(z1, y1, x1) - f(z1, y1, x0));
                        let c0 = c00 + ty * (c01 - c00);
                        let c1 = c10 + ty * (c11 - c10);
                        out.data_mut()[idx5(os, ni, ci, z, y, xx)] = c0 + tz * (c1 - c0);
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of trilinear upsampling: scatter output gradients back through
/// the same interpolation weights.
pub(crate) fn upsample_trilinear_backward(x: &Tensor, gy: &Tensor, factor: [usize; 3]) -> Tensor {
    let xs = x.dims5().expect("rank 5");
    let [n, c, d0, d1, d2] = xs;
    let gs = gy.dims5().expect("rank 5");
    let sz = axis_stencil(d0, factor[0]);
    let sy = axis_stencil(d1, factor[1]);
    let sx = axis_stencil(d2, factor[2]);
    let gd = gy.data();
    let mut dx = Tensor::zeros(vec![n, c, d0, d1, d2]);
    for ni in 0..n {
        for ci in 0..c {
            for (z, &(z0, z1, tz)) in sz.iter().enumerate() {
                for (y, &(y0, y1, ty)) in sy.iter().enumerate() {
                    for (xx, &(x0, x1, tx)) in sx.iter().enumerate() {
                        let g = gd[idx5(gs, ni, ci, z, y, xx)];
                        let d = dx.data_mut();
                        d[idx5(xs, ni, ci, z0, y0, x0)] +=
                            g * (1.0 - tz) * (1.0 - ty) * (1.0 - tx);
                        d[idx5(xs, ni, ci, z0, y0, x1)] += g * (1.0 - tz) * (1.0 - ty) * tx;
                        d[idx5(xs, ni, ci, z0, y1, x0)] += g * (1.0 - tz) * ty * (1.0 - tx);
                        d[idx5(xs, ni, ci, z0, y1, x1)] += g * (1.0 - tz) * ty * tx;
                        d[idx5(xs, ni, ci, z1, y0, x0)] += g * tz * (1.0 - ty) * (1.0 - tx);
                        d[idx5(xs, ni, ci, z1, y0, x1)] += g * tz * (1.0 - ty) * tx;
                        d[idx5(xs, ni, ci, z1, y1, x0)] += g * tz * ty * (1.0 - tx);
                        d[idx5(xs, ni, ci, z1, y1, x1)] += g * tz * ty * tx;
                    }
                }
            }
        }
    }
    dx
}

/// Transposed convolution with kernel = stride, computed as a gather:
/// each output position has exactly one source voxel.
pub(crate) fn transposed_conv3d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let xs = x.dims5().expect("rank 5");
    let ws = w.dims5().expect("rank 5");
    let [n, c_in, d0, d1, d2] = xs;
    let [_, c_out, s0, s1, s2] = ws;
    let (o0, o1, o2) = (d0 * s0, d1 * s1, d2 * s2);
    let spatial = o0 * o1 * o2;
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut out = Tensor::zeros(vec![n, c_out, o0, o1, o2]);
    for ni in 0..n {
        let batch = &mut out.data_mut()[ni * c_out * spatial..(ni + 1) * c_out * spatial];
        batch
            .par_chunks_mut(spatial)
            .enumerate()
            .for_each(|(co, chunk)| {
                for oz in 0..o0 {
                    let (z, kz) = (oz / s0, oz % s0);
                    for oy in 0..o1 {
                        let (y, ky) = (oy / s1, oy % s1);
                        for ox in 0..o2 {
                            let (xx, kx) = (ox / s2, ox % s2);
                            let mut acc = bd[co];
                            for ci in 0..c_in {
                                acc += xd[idx5(xs, ni, ci, z, y, xx)]
                                    * wd[(((ci * c_out + co) * s0 + kz) * s1 + ky) * s2 + kx];
                            }
                            chunk[(oz * o1 + oy) * o2 + ox] = acc;
                        }
                    }
                }
            });
    }
    out
}

/// Gradients of the non-overlapping transposed convolution.
pub(crate) fn transposed_conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let xs = x.dims5().expect("rank 5");
    let ws = w.dims5().expect("rank 5");
    let gs = gy.dims5().expect("rank 5");
    let [n, c_in, d0, d1, d2] = xs;
    let [_, c_out, s0, s1, s2] = ws;
    let xd = x.data();
    let wd = w.data();
    let gd = gy.data();

    let mut db = Tensor::zeros(vec![c_out]);
    for co in 0..c_out {
        let mut acc = 0.0;
        for ni in 0..n {
            for oz in 0..gs[2] {
                for oy in 0..gs[3] {
                    for ox in 0..gs[4] {
                        acc += gd[idx5(gs, ni, co, oz, oy, ox)];
                    }
                }
            }
        }
        db.data_mut()[co] = acc;
    }

    let spatial = d0 * d1 * d2;
    let mut dx = Tensor::zeros(vec![n, c_in, d0, d1, d2]);
    for ni in 0..n {
        let batch = &mut dx.data_mut()[ni * c_in * spatial..(ni + 1) * c_in * spatial];
        batch
            .par_chunks_mut(spatial)
            .enumerate()
            .for_each(|(ci, chunk)| {
                for z in 0..d0 {
                    for y in 0..d1 {
                        for xx in 0..d2 {
                            let mut acc = 0.0;
                            for co in 0..c_out {
                                for kz in 0..s0 {
                                    for ky in 0..s1 {
                                        for kx in 0..s2 {
                                            acc += gd[idx5(
                                                gs,
                                                ni,
                                                co,
                                                z * s0 + kz,
                                                y * s1 + ky,
                                                xx * s2 + kx,
                                            )] * wd[(((ci * c_out + co) * s0 + kz) * s1 + ky)
                                                * s2
                                                + kx];
                                        }
                                    }
                                }
                            }
                            chunk[(z * d1 + y) * d2 + xx] = acc;
                        }
                    }
                }
            });
    }

    let per_ci = c_out * s0 * s1 * s2;
    let mut dw = Tensor::zeros(vec![c_in, c_out, s0, s1, s2]);
    dw.data_mut()
        .par_chunks_mut(per_ci)
        .enumerate()
        .for_each(|(ci, chunk)| {
            for co in 0..c_out {
                for kz in 0..s0 {
                    for ky in 0..s1 {
                        for kx in 0..s2 {
                            let mut acc = 0.0;
                            for ni in 0..n {
                                for z in 0..d0 {
                                    for y in 0..d1 {
                                        for xx in 0..d2 {
                                            acc += xd[idx5(xs, ni, ci, z, y, xx)]
                                                * gd[idx5(
                                                    gs,
                                                    ni,
                                                    co,
                                                    z * s0 + kz,
                                                    y * s1 + ky,
                                                    xx * s2 + kx,
                                                )];
                                        }
                                    }
                                }
                            }
                            chunk[((co * s0 + kz) * s1 + ky) * s2 + kx] = acc;
                        }
                    }
                }
            }
        });

    (dx, dw, db)
}
