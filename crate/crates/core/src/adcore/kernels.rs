/// `c += a * b` for row-major `a: m x k`, `b: k x n`, `c: m x n`.
///
/// Each output element accumulates over `k` in ascending order, independent
/// of `m` and of the row's position, so a row's result never depends on
/// which other rows share the call.
pub(crate) fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 0 || k == 0 {
        return;
    }
    let mut rows = c.chunks_exact_mut(n).zip(a.chunks_exact(k));
    // Four rows at a time share each loaded row of `b`.
    loop {
        let Some((c0, a0)) = rows.next() else { break };
        let Some((c1, a1)) = rows.next() else {
            row_kernel(c0, a0, b, n);
            break;
        };
        let Some((c2, a2)) = rows.next() else {
            row_kernel(c0, a0, b, n);
            row_kernel(c1, a1, b, n);
            break;
        };
        let Some((c3, a3)) = rows.next() else {
            row_kernel(c0, a0, b, n);
            row_kernel(c1, a1, b, n);
            row_kernel(c2, a2, b, n);
            break;
        };
        for (p, brow) in b.chunks_exact(n).enumerate() {
            let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
            for j in 0..n {
                let bv = brow[j];
                c0[j] += x0 * bv;
                c1[j] += x1 * bv;
                c2[j] += x2 * bv;
                c3[j] += x3 * bv;
            }
        }
    }
}

#[inline]
fn row_kernel(c: &mut [f64], a: &[f64], b: &[f64], n: usize) {
    for (&x, brow) in a.iter().zip(b.chunks_exact(n)) {
        for (cv, &bv) in c.iter_mut().zip(brow) {
            *cv += x * bv;
        }
    }
}

/// Row-major transpose of an `m x n` matrix.
pub(crate) fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
