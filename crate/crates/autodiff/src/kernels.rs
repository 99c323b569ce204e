//! Raw numeric kernels over flat slices. Shapes are validated by the caller.

use crate::scalar::Scalar;

/// `out = op(a)·op(b) + beta·out`, where `op` optionally transposes.
/// `a` is stored `m×k` (or `k×m` when `ta`), `b` is `k×n` (or `n×k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    beta: T,
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths were checked against the stated dimensions above
    // and `out` is a distinct mutable borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds one `C×H×W` image into a `(C·9)×(H·W)` patch matrix for a 3×3,
/// stride-1, pad-1 convolution.
pub(crate) fn im2col3x3<T: Scalar>(img: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    debug_assert_eq!(cols.len(), c * 9 * hw);
    for ch in 0..c {
        let plane = &img[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3x3`]: accumulates patch gradients back into the image.
pub(crate) fn col2im3x3<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, img: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut img[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] = dst[x - 1] + src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] = dst[x] + src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] = dst[x + 1] + src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3×3 same-padding convolution over a batch. Returns the output and the
/// per-image patch matrices needed by the backward pass.
pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    weight: &[T],
    bias: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
) -> (Vec<T>, Vec<T>) {
    let hw = h * w;
    let k = c * 9;
    let mut cols = vec![T::zero(); n * k * hw];
    let mut out = vec![T::zero(); n * o * hw];
    for img in 0..n {
        let col = &mut cols[img * k * hw..(img + 1) * k * hw];
        im2col3x3(&x[img * c * hw..(img + 1) * c * hw], c, h, w, col);
        let dst = &mut out[img * o * hw..(img + 1) * o * hw];
        for (oc, plane) in dst.chunks_exact_mut(hw).enumerate() {
            plane.fill(bias[oc]);
        }
        gemm(o, k, hw, weight, false, col, false, T::one(), dst);
    }
    (out, cols)
}

/// Gradients of [`conv2d_forward`]. `dx` is skipped when `want_dx` is false.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    dy: &[T],
    cols: &[T],
    weight: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let hw = h * w;
    let k = c * 9;
    let mut dw = vec![T::zero(); o * k];
    let mut db = vec![T::zero(); o];
    let mut dx = want_dx.then(|| vec![T::zero(); n * c * hw]);
    let mut dcols = if want_dx { vec![T::zero(); k * hw] } else { Vec::new() };
    for img in 0..n {
        let g = &dy[img * o * hw..(img + 1) * o * hw];
        let col = &cols[img * k * hw..(img + 1) * k * hw];
        gemm(o, hw, k, g, false, col, true, T::one(), &mut dw);
        for (oc, plane) in g.chunks_exact(hw).enumerate() {
            db[oc] = plane.iter().fold(db[oc], |acc, &v| acc + v);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(k, o, hw, weight, true, g, false, T::zero(), &mut dcols);
            col2im3x3(&dcols, c, h, w, &mut dx[img * c * hw..(img + 1) * c * hw]);
        }
    }
    (dx, dw, db)
}

/// 2×2 stride-2 max pooling; returns output and the flat argmax per output cell.
pub(crate) fn maxpool2x2_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + (2 * y) * w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Splits a shape around `axis` into (outer, axis extent, inner) strides.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct loop convolution used as an oracle for the im2col path.
    fn conv_naive(
        x: &[f64],
        wt: &[f64],
        b: &[f64],
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        o: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; n * o * h * w];
        for img in 0..n {
            for oc in 0..o {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = b[oc];
                        for ic in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    acc += wt[((oc * c + ic) * 3 + ky) * 3 + kx]
                                        * x[((img * c + ic) * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                        out[((img * o + oc) * h + y) * w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        let (n, c, h, w, o) = (2, 3, 5, 4, 2);
        let x: Vec<f64> = (0..n * c * h * w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let wt: Vec<f64> = (0..o * c * 9).map(|i| ((i * 13 % 7) as f64) * 0.25 - 0.7).collect();
        let b = vec![0.5, -1.0];
        let (fast, _) = conv2d_forward(&x, &wt, &b, n, c, h, w, o);
        let slow = conv_naive(&x, &wt, &b, n, c, h, w, o);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w) = (2, 4, 3);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut cols = vec![0.0; c * 9 * h * w];
        im2col3x3(&x, c, h, w, &mut cols);
        let mut back = vec![0.0; c * h * w];
        col2im3x3(&y, c, h, w, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut out);
        assert_eq!(out, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut out);
        assert_eq!(out, [17.0, 23.0, 39.0, 53.0]);
    }
}
