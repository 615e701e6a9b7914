use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D transform; the inverse is normalized by `1/(rows*cols)`.
pub(crate) fn fft2(data: &mut Array2<Complex64>, inverse: bool) {
    let (rows, cols) = data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    let col_fft = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };

    let mut buf = vec![Complex64::default(); cols.max(rows)];
    for mut row in data.axis_iter_mut(Axis(0)) {
        let line = &mut buf[..cols];
        for (b, v) in line.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        row_fft.process(line);
        for (v, b) in row.iter_mut().zip(line.iter()) {
            *v = *b;
        }
    }
    for mut col in data.axis_iter_mut(Axis(1)) {
        let line = &mut buf[..rows];
        for (b, v) in line.iter_mut().zip(col.iter()) {
            *b = *v;
        }
        col_fft.process(line);
        for (v, b) in col.iter_mut().zip(line.iter()) {
            *v = *b;
        }
    }
    if inverse {
        let scale = 1.0 / (rows * cols) as f64;
        data.mapv_inplace(|v| v * scale);
    }
}

pub(crate) fn spectrum(image: &Array2<f64>) -> Array2<Complex64> {
    let mut data = image.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut data, false);
    data
}

/// Angular frequency in radians/sample of DFT bin `k` out of `n`, with bins
/// above `n/2` mapped to negative frequencies.
pub(crate) fn bin_frequency(k: usize, n: usize) -> f64 {
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * std::f64::consts::PI * signed / n as f64
}

/// Magnitude of the analytic signal of each column, computed through a
/// one-sided spectrum on a zero-padded copy to limit wrap-around.
pub(crate) fn column_envelope(values: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = values.dim();
    let n = (2 * rows).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = Array2::zeros((rows, cols));
    let mut buf = vec![Complex64::default(); n];
    for c in 0..cols {
        buf.fill(Complex64::default());
        for r in 0..rows {
            buf[r] = Complex64::new(values[[r, c]], 0.0);
        }
        fwd.process(&mut buf);
        // DC and Nyquist keep unit weight, positive frequencies double.
        for v in buf.iter_mut().take(n / 2).skip(1) {
            *v *= 2.0;
        }
        for v in buf.iter_mut().skip(n / 2 + 1) {
            *v = Complex64::default();
        }
        inv.process(&mut buf);
        let scale = 1.0 / n as f64;
        for r in 0..rows {
            out[[r, c]] = buf[r].norm() * scale;
        }
    }
    out
}
