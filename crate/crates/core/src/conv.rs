//! Linear convolution of probability mass vectors.
//!
//! Small inputs use the direct O(nm) sum, which is exact up to ordinary
//! floating-point rounding. Large inputs go through a real-to-complex FFT;
//! round-off there is at the 1e-15 level relative to the largest mass, and
//! tiny negative values are clamped to zero.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Below this many multiply-adds the direct sum is used.
const DIRECT_WORK_LIMIT: usize = 1 << 18;

pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= DIRECT_WORK_LIMIT {
        convolve_direct(a, b)
    } else {
        convolve_fft(a, b)
    }
}

pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(size, Complex::new(0.0, 0.0));
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..out_len].iter().map(|c| (c.re * scale).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_matches_hand_values() {
        assert_eq!(convolve(&[0.5, 0.5], &[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
        assert_eq!(convolve(&[0.0, 1.0], &[0.0, 0.0, 1.0]), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn fft_path_agrees_with_direct() {
        let a: Vec<f64> = (0..900).map(|k| ((k * 37 % 101) as f64) / 5000.0).collect();
        let b: Vec<f64> = (0..700).map(|k| ((k * 13 % 53) as f64) / 9000.0).collect();
        let fast = convolve_fft(&a, &b);
        let slow = convolve_direct(&a, &b);
        assert_eq!(fast.len(), slow.len());
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}
