//! Naive reference implementations ("oracles").
//!
//! Deliberately simple, loop-based routes used by the test suites to
//! validate the engineered kernels. None of these are used by the pipeline
//! itself; they trade speed for obviousness.

use crate::volume::{Mask, Volume};

/// O(N²) signed Euclidean distance: per voxel, scan every voxel of the
/// opposite class. Matches `signed_edt`'s sign and sentinel conventions.
pub fn edt_brute_force(m: &Mask) -> Vec<f64> {
    let g = &m.grid;
    let n = g.len();
    let fg = m.labels.iter().any(|&l| l == 1);
    let bg = m.labels.iter().any(|&l| l == 0);
    if !fg {
        return vec![g.diagonal(); n];
    }
    if !bg {
        return vec![-g.diagonal(); n];
    }
    let coords: Vec<[usize; 3]> = (0..n)
        .map(|i| {
            let x = i % g.dims[0];
            let y = (i / g.dims[0]) % g.dims[1];
            let z = i / (g.dims[0] * g.dims[1]);
            [x, y, z]
        })
        .collect();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let opposite = 1 - m.labels[i];
        let ci = coords[i];
        let mut best = f64::INFINITY;
        for j in 0..n {
            if m.labels[j] != opposite {
                continue;
            }
            let cj = coords[j];
            let mut d2 = 0.0;
            for a in 0..3 {
                let d = (ci[a] as f64 - cj[a] as f64) * g.spacing[a];
                d2 += d * d;
            }
            if d2 < best {
                best = d2;
            }
        }
        let d = best.sqrt();
        out[i] = if m.labels[i] == 1 { -d } else { d };
    }
    out
}

/// Union-find largest component (independent route from the BFS labeling).
/// Same tie rule: among maximal components, the one whose minimal linear
/// index is smallest survives.
pub fn largest_component_union_find(m: &Mask, offsets: &[[i32; 3]]) -> Mask {
    let g = &m.grid;
    let n = g.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let i = g.index(x, y, z);
                if m.labels[i] == 0 {
                    continue;
                }
                for off in offsets {
                    let (nx, ny, nz) = (
                        x as i32 + off[0],
                        y as i32 + off[1],
                        z as i32 + off[2],
                    );
                    if nx < 0
                        || ny < 0
                        || nz < 0
                        || nx as usize >= g.dims[0]
                        || ny as usize >= g.dims[1]
                        || nz as usize >= g.dims[2]
                    {
                        continue;
                    }
                    let j = g.index(nx as usize, ny as usize, nz as usize);
                    if m.labels[j] == 1 {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            // union by smaller root index keeps roots = minimal members
                            let (lo, hi) = (ri.min(rj), ri.max(rj));
                            parent[hi] = lo;
                        }
                    }
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut size: std::collections::BTreeMap<usize, usize> = Default::default();
    for i in 0..n {
        if m.labels[i] == 1 {
            *size.entry(roots[i]).or_default() += 1;
        }
    }
    // BTreeMap iterates by root (= minimal member index); strict > keeps the first maximal
    let mut best_root = None;
    let mut best_size = 0usize;
    for (&root, &sz) in &size {
        if sz > best_size {
            best_size = sz;
            best_root = Some(root);
        }
    }
    let labels = match best_root {
        None => m.labels.clone(),
        Some(r) => (0..n).map(|i| (m.labels[i] == 1 && roots[i] == r) as u8).collect(),
    };
    Mask::new(m.grid, labels).expect("same grid")
}

/// O(n*m) directed nearest-neighbor distances from `xs` to `ys`.
pub fn directed_dists_all_pairs(xs: &[[f64; 3]], ys: &[[f64; 3]]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            ys.iter()
                .map(|y| {
                    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Average boundary distance by exhaustive scan.
pub fn abd_all_pairs(xs: &[[f64; 3]], ys: &[[f64; 3]]) -> f64 {
    let fwd: f64 = directed_dists_all_pairs(xs, ys).iter().sum();
    let bwd: f64 = directed_dists_all_pairs(ys, xs).iter().sum();
    (fwd + bwd) / (xs.len() + ys.len()) as f64
}

/// 95th-percentile Hausdorff distance by exhaustive scan; the percentile is
/// linear interpolation between order statistics at rank p/100 * (n-1).
pub fn hd95_all_pairs(xs: &[[f64; 3]], ys: &[[f64; 3]]) -> f64 {
    let pct95 = |mut d: Vec<f64>| -> f64 {
        d.sort_by(f64::total_cmp);
        let rank = 0.95 * (d.len() - 1) as f64;
        let lo = rank.floor() as usize;
        let frac = rank - lo as f64;
        if frac == 0.0 {
            d[lo]
        } else {
            d[lo] + frac * (d[lo + 1] - d[lo])
        }
    };
    let fwd = pct95(directed_dists_all_pairs(xs, ys));
    let bwd = pct95(directed_dists_all_pairs(ys, xs));
    fwd.max(bwd)
}

/// True (maximum) Hausdorff distance by exhaustive scan.
pub fn hausdorff_all_pairs(xs: &[[f64; 3]], ys: &[[f64; 3]]) -> f64 {
    let max = |d: Vec<f64>| d.into_iter().fold(0.0, f64::max);
    let fwd = max(directed_dists_all_pairs(xs, ys));
    let bwd = max(directed_dists_all_pairs(ys, xs));
    fwd.max(bwd)
}

/// Wilcoxon signed-rank null distribution by full enumeration of all 2^n
/// sign assignments. Ranks are computed per element by counting, not by
/// sorting. Returns (w_plus, p_two_sided, p_greater, p_less).
pub fn wilcoxon_enumeration(a: &[f64], b: &[f64]) -> (f64, f64, f64, f64) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = d.len();
    assert!(n >= 1 && n <= 20, "enumeration oracle limited to small n");
    // rank by counting: count_less + (count_equal_including_self + 1) / 2
    let ranks: Vec<f64> = (0..n)
        .map(|i| {
            let ai = d[i].abs();
            let less = d.iter().filter(|x| x.abs() < ai).count();
            let equal = d.iter().filter(|x| x.abs() == ai).count();
            less as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect();
    let w_obs: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mut count_geq = 0u64;
    let mut count_leq = 0u64;
    for bits in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w >= w_obs {
            count_geq += 1;
        }
        if w <= w_obs {
            count_leq += 1;
        }
    }
    let total = (1u64 << n) as f64;
    let p_geq = count_geq as f64 / total;
    let p_leq = count_leq as f64 / total;
    let p_two = (2.0 * p_geq.min(p_leq)).min(1.0);
    (w_obs, p_two, p_geq, p_leq)
}

use crate::tensor::Tensor;

fn tidx(shape: &[usize], n: usize, c: usize, z: usize, y: usize, x: usize) -> usize {
    (((n * shape[1] + c) * shape[2] + z) * shape[3] + y) * shape[4] + x
}

/// Seven-loop reference convolution: bounds-checked (no padding buffer),
/// accumulating bias first, then channel -> kz -> ky -> kx.
pub fn conv3d_naive(x: &Tensor, w: &Tensor, b: &Tensor, pad: usize) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let (n, c_in, d0, d1, d2) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (c_out, k) = (ws[0], ws[2]);
    let mut out = Tensor::zeros(vec![n, c_out, d0, d1, d2]);
    for ni in 0..n {
        for co in 0..c_out {
            for z in 0..d0 {
                for y in 0..d1 {
                    for xx in 0..d2 {
                        let mut acc = b.data()[co];
                        for ci in 0..c_in {
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iz = z as i64 + kz as i64 - pad as i64;
                                        let iy = y as i64 + ky as i64 - pad as i64;
                                        let ix = xx as i64 + kx as i64 - pad as i64;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= d0 as i64
                                            || iy >= d1 as i64
                                            || ix >= d2 as i64
                                        {
                                            continue;
                                        }
                                        acc += x.data()[tidx(
                                            xs,
                                            ni,
                                            ci,
                                            iz as usize,
                                            iy as usize,
                                            ix as usize,
                                        )] * w.data()
                                            [(((co * c_in + ci) * k + kz) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        let os = [n, c_out, d0, d1, d2];
                        out.data_mut()[tidx(&os, ni, co, z, y, xx)] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Window-scan reference max pooling.
pub fn maxpool3d_naive(x: &Tensor, pool: [usize; 3]) -> Tensor {
    let xs = x.shape();
    let (n, c, d0, d1, d2) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (o0, o1, o2) = (d0 / pool[0], d1 / pool[1], d2 / pool[2]);
    let mut out = Tensor::zeros(vec![n, c, o0, o1, o2]);
    let os = [n, c, o0, o1, o2];
    for ni in 0..n {
        for ci in 0..c {
            for z in 0..o0 {
                for y in 0..o1 {
                    for xx in 0..o2 {
                        let mut best = f64::NEG_INFINITY;
                        for kz in 0..pool[0] {
                            for ky in 0..pool[1] {
                                for kx in 0..pool[2] {
                                    let v = x.data()[tidx(
                                        xs,
                                        ni,
                                        ci,
                                        z * pool[0] + kz,
                                        y * pool[1] + ky,
                                        xx * pool[2] + kx,
                                    )];
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                        }
                        out.data_mut()[tidx(&os, ni, ci, z, y, xx)] = best;
                    }
                }
            }
        }
    }
    out
}

/// Scatter-accumulate reference transposed convolution (kernel = stride).
/// Output starts at the bias; input channels scatter in ascending order.
pub fn transposed_conv3d_naive(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let (n, c_in, d0, d1, d2) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (c_out, s0, s1, s2) = (ws[1], ws[2], ws[3], ws[4]);
    let (o0, o1, o2) = (d0 * s0, d1 * s1, d2 * s2);
    let os = [n, c_out, o0, o1, o2];
    let mut out = Tensor::zeros(vec![n, c_out, o0, o1, o2]);
    for ni in 0..n {
        for co in 0..c_out {
            for oz in 0..o0 {
                for oy in 0..o1 {
                    for ox in 0..o2 {
                        out.data_mut()[tidx(&os, ni, co, oz, oy, ox)] = b.data()[co];
                    }
                }
            }
        }
    }
    for ni in 0..n {
        for ci in 0..c_in {
            for co in 0..c_out {
                for z in 0..d0 {
                    for y in 0..d1 {
                        for xx in 0..d2 {
                            let v = x.data()[tidx(xs, ni, ci, z, y, xx)];
                            for kz in 0..s0 {
                                for ky in 0..s1 {
                                    for kx in 0..s2 {
                                        out.data_mut()[tidx(
                                            &os,
                                            ni,
                                            co,
                                            z * s0 + kz,
                                            y * s1 + ky,
                                            xx * s2 + kx,
                                        )] += v
                                            * w.data()[(((ci * c_out + co) * s0 + kz) * s1 + ky)
                                                * s2
                                                + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Direct per-output trilinear interpolation (align-corners-false).
pub fn upsample_trilinear_naive(x: &Tensor, factor: [usize; 3]) -> Tensor {
    let xs = x.shape();
    let (n, c, d0, d1, d2) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let (o0, o1, o2) = (d0 * factor[0], d1 * factor[1], d2 * factor[2]);
    let os = [n, c, o0, o1, o2];
    let coord = |o: usize, f: usize, d: usize| -> (usize, usize, f64) {
        let q = ((o as f64 + 0.5) / f as f64 - 0.5).clamp(0.0, (d - 1) as f64);
        let i0 = q.floor() as usize;
        (i0, (i0 + 1).min(d - 1), q - i0 as f64)
    };
    let mut out = Tensor::zeros(vec![n, c, o0, o1, o2]);
    for ni in 0..n {
        for ci in 0..c {
            for oz in 0..o0 {
                let (z0, z1, tz) = coord(oz, factor[0], d0);
                for oy in 0..o1 {
                    let (y0, y1, ty) = coord(oy, factor[1], d1);
                    for ox in 0..o2 {
                        let (x0, x1, tx) = coord(ox, factor[2], d2);
                        let mut acc = 0.0;
                        for (zz, wz) in [(z0, 1.0 - tz), (z1, tz)] {
                            for (yy, wy) in [(y0, 1.0 - ty), (y1, ty)] {
                                for (xc, wx) in [(x0, 1.0 - tx), (x1, tx)] {
                                    acc += wz * wy * wx * x.data()[tidx(xs, ni, ci, zz, yy, xc)];
                                }
                            }
                        }
                        out.data_mut()[tidx(&os, ni, ci, oz, oy, ox)] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Valid strided convolution that is the formal adjoint of the
/// transposed convolution above (weight layout [c_in, c_out, s0, s1, s2],
/// consuming a tensor with c_out channels and producing c_in channels).
pub fn conv_strided_adjoint(a: &Tensor, w: &Tensor) -> Tensor {
    let ashape = a.shape();
    let ws = w.shape();
    let (n, c_out, a0, a1, a2) = (ashape[0], ashape[1], ashape[2], ashape[3], ashape[4]);
    let (c_in, s0, s1, s2) = (ws[0], ws[2], ws[3], ws[4]);
    let (o0, o1, o2) = (a0 / s0, a1 / s1, a2 / s2);
    let os = [n, c_in, o0, o1, o2];
    let mut out = Tensor::zeros(vec![n, c_in, o0, o1, o2]);
    for ni in 0..n {
        for ci in 0..c_in {
            for z in 0..o0 {
                for y in 0..o1 {
                    for xx in 0..o2 {
                        let mut acc = 0.0;
                        for co in 0..c_out {
                            for kz in 0..s0 {
                                for ky in 0..s1 {
                                    for kx in 0..s2 {
                                        acc += a.data()[tidx(
                                            ashape,
                                            ni,
                                            co,
                                            z * s0 + kz,
                                            y * s1 + ky,
                                            xx * s2 + kx,
                                        )] * w.data()[(((ci * c_out + co) * s0 + kz) * s1
                                            + ky)
                                            * s2
                                            + kx];
                                    }
                                }
                            }
                        }
                        out.data_mut()[tidx(&os, ni, ci, z, y, xx)] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Integer translation by index shifting: out[x] = in[x - t], zero outside.
pub fn shift_volume(v: &Volume, t: [i64; 3]) -> Volume {
    let [nx, ny, nz] = v.grid.dims;
    let mut samples = vec![0.0; v.samples.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let sx = x as i64 - t[0];
                let sy = y as i64 - t[1];
                let sz = z as i64 - t[2];
                if sx >= 0
                    && sy >= 0
                    && sz >= 0
                    && (sx as usize) < nx
                    && (sy as usize) < ny
                    && (sz as usize) < nz
                {
                    samples[v.grid.index(x, y, z)] =
                        v.at(sx as usize, sy as usize, sz as usize);
                }
            }
        }
    }
    Volume { grid: v.grid, samples }
}

/// Left-right mirror by index reversal along x.
pub fn flip_x_volume(v: &Volume) -> Volume {
    let [nx, ny, nz] = v.grid.dims;
    let mut samples = vec![0.0; v.samples.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                samples[v.grid.index(x, y, z)] = v.at(nx - 1 - x, y, z);
            }
        }
    }
    Volume { grid: v.grid, samples }
}
