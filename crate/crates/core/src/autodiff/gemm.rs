use super::tensor::Scalar;

/// `c = op(a) · op(b) (+ c when accumulate)` for row-major matrices.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    c: &mut [T],
    accumulate: bool,
) {
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm_raw(m, k, n, T::one(), a, a_trans, b, b_trans, beta, c);
}
