//! Exact orthonormal 8×8 type-II DCT and its inverse, separable form.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// `basis()[u][x] = c(u)/2 * cos((2x+1)uπ/16)` with `c(0) = 1/√2`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let cu = if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * cu * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos();
            }
        }
        b
    })
}

pub fn forward(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp[y][u] = sum_x f[y][x] b[u][x]
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| block[y * 8 + x] * b[u][x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| tmp[y * 8 + u] * b[v][y]).sum();
        }
    }
    out
}

pub fn inverse(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| coef[v * 8 + u] * b[u][x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| tmp[v * 8 + x] * b[v][y]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block_dc() {
        let out = forward(&[127.0; 64]);
        assert!((out[0] - 1016.0).abs() < 1e-9);
        assert!(out[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn inverse_roundtrip() {
        let mut blk = [0.0; 64];
        for (i, v) in blk.iter_mut().enumerate() {
            *v = ((i * 37) % 255) as f64 - 128.0;
        }
        let back = inverse(&forward(&blk));
        for (a, b) in blk.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_direct_definition() {
        let mut blk = [0.0; 64];
        for (i, v) in blk.iter_mut().enumerate() {
            *v = ((i * 13 + 5) % 61) as f64;
        }
        let fast = forward(&blk);
        for v in 0..8 {
            for u in 0..8 {
                let cu = if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
                let cv = if v == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += blk[y * 8 + x]
                            * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos()
                            * ((2 * y + 1) as f64 * v as f64 * PI / 16.0).cos();
                    }
                }
                let direct = 0.25 * cu * cv * s;
                assert!((direct - fast[v * 8 + u]).abs() < 1e-9);
            }
        }
    }
}
