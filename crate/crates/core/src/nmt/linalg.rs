//! Dense row-major kernels used by the recurrent model.

/// `out += W x` for a `rows x cols` matrix.
#[inline]
pub fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += W^T g` for a `rows x cols` matrix.
#[inline]
pub fn matvec_t_add(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), cols);
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi != 0.0 {
            axpy(gi, row, out);
        }
    }
}

/// `dw += g x^T`.
#[inline]
pub fn outer_add(dw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (&gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if gi != 0.0 {
            axpy(gi, x, row);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn add_into(src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable in-place softmax.
pub fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels() {
        // W = [[1, 2], [3, 4], [5, 6]]
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = vec![0.0; 3];
        matvec_add(&w, 2, &[1.0, -1.0], &mut y);
        assert_eq!(y, vec![-1.0, -1.0, -1.0]);
        let mut x = vec![0.0; 2];
        matvec_t_add(&w, 2, &[1.0, 0.0, 1.0], &mut x);
        assert_eq!(x, vec![6.0, 8.0]);
        let mut dw = vec![0.0; 6];
        outer_add(&mut dw, 2, &[1.0, 2.0, 0.0], &[3.0, 4.0]);
        assert_eq!(dw, vec![3.0, 4.0, 6.0, 8.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_is_normalised() {
        let mut v = vec![1000.0, 1001.0, 999.0];
        softmax(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v[1] > v[0] && v[0] > v[2]);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
