//! Dense kernels shared by forward and backward passes.

use super::tape::ConvGeometry;

/// `c[m x n] += a[m x k] * b[k x n]`, all row-major. `ta`/`tb` read the
/// operand transposed (`a` stored k x m, `b` stored n x k).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover m*k, k*n and m*n elements with the strides above.
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
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub geom: ConvGeometry,
}

impl ConvShape {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Visits every (column row, column index, input offset) triple that lands
    /// inside the padded input.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (sh, sw) = self.geom.stride;
        let (ph, pw) = (self.geom.padding.0 as isize, self.geom.padding.1 as isize);
        let p = self.col_cols();
        for c in 0..self.channels {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    for oy in 0..self.out_h {
                        let y = (oy * sh + i) as isize - ph;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        let base = (c * self.height + y as usize) * self.width;
                        for ox in 0..self.out_w {
                            let x = (ox * sw + j) as isize - pw;
                            if x < 0 || x >= self.width as isize {
                                continue;
                            }
                            f(row * p + oy * self.out_w + ox, 0, base + x as usize);
                        }
                    }
                }
            }
        }
    }

    pub fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.col_rows() * self.col_cols()];
        self.for_each(|ci, _, ii| cols[ci] = input[ii]);
        cols
    }

    pub fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.channels * self.height * self.width];
        self.for_each(|ci, _, ii| out[ii] += cols[ci]);
        out
    }
}

/// Output extent of a strided, padded correlation; `None` when the geometry
/// does not tile the padded input exactly.
pub(crate) fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || padded < kernel || !(padded - kernel).is_multiple_of(stride) {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}
