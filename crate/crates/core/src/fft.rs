//! Thin 2-D FFT helpers over rustfft, used by the background generators.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// In-place 2-D forward FFT of a row-major `width x height` buffer.
pub(crate) fn fft2(data: &mut [Complex<f64>], width: usize, height: usize) {
    transform2(data, width, height, rustfft::FftDirection::Forward);
}

/// In-place 2-D inverse FFT, normalized by `1/(width*height)`.
pub(crate) fn ifft2(data: &mut [Complex<f64>], width: usize, height: usize) {
    transform2(data, width, height, rustfft::FftDirection::Inverse);
    let scale = 1.0 / (width * height) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

fn transform2(
    data: &mut [Complex<f64>],
    width: usize,
    height: usize,
    direction: rustfft::FftDirection,
) {
    assert_eq!(data.len(), width * height);
    let mut planner = FftPlanner::new();

    let row_fft = planner.plan_fft(width, direction);
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }

    let col_fft = planner.plan_fft(height, direction);
    let mut col = vec![Complex::default(); height];
    for c in 0..width {
        for r in 0..height {
            col[r] = data[r * width + c];
        }
        col_fft.process(&mut col);
        for r in 0..height {
            data[r * width + c] = col[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recovers_input() {
        let width = 6;
        let height = 4;
        let orig: Vec<Complex<f64>> = (0..width * height)
            .map(|i| Complex::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut data = orig.clone();
        fft2(&mut data, width, height);
        ifft2(&mut data, width, height);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dc_bin_is_the_sum() {
        let width = 3;
        let height = 3;
        let mut data: Vec<Complex<f64>> =
            (0..9).map(|i| Complex::new(i as f64, 0.0)).collect();
        fft2(&mut data, width, height);
        assert!((data[0].re - 36.0).abs() < 1e-12);
        assert!(data[0].im.abs() < 1e-12);
    }
}
