//! Separable 3D filtering over a single volume stored x-fastest.

/// Mirror an out-of-range index back into `0..n` (half-sample symmetric).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Normalized Gaussian taps truncated at four standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

fn convolve_axis(data: &[f64], dims: [usize; 3], axis: usize, taps: &[f64]) -> Vec<f64> {
    if taps.len() == 1 {
        return data.to_vec();
    }
    let radius = (taps.len() / 2) as isize;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let n = dims[axis];
    let stride = strides[axis];
    let mut out = vec![0.0; data.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let idx = x + dims[0] * (y + dims[1] * z);
                let pos = [x, y, z][axis] as isize;
                let base = idx - pos as usize * stride;
                let mut acc = 0.0;
                for (t, &w) in taps.iter().enumerate() {
                    let j = reflect(pos + t as isize - radius, n);
                    acc += w * data[base + j * stride];
                }
                out[idx] = acc;
            }
        }
    }
    out
}

/// Gaussian smoothing with per-axis widths in voxels and reflected borders.
pub fn gaussian_filter_3d(data: &[f64], dims: [usize; 3], sigma_vox: [f64; 3]) -> Vec<f64> {
    let mut cur = data.to_vec();
    for axis in 0..3 {
        cur = convolve_axis(&cur, dims, axis, &gaussian_kernel(sigma_vox[axis]));
    }
    cur
}

/// Variance of `(I - G) n` relative to that of white noise `n`, for the
/// separable Gaussian `G` away from borders.
pub fn highpass_variance_factor(sigma_vox: [f64; 3]) -> f64 {
    let mut center = 1.0;
    let mut energy = 1.0;
    for s in sigma_vox {
        let k = gaussian_kernel(s);
        center *= k[k.len() / 2];
        energy *= k.iter().map(|w| w * w).sum::<f64>();
    }
    1.0 - 2.0 * center + energy
}

/// Sample standard deviation over a `(2r+1)³` window with reflected borders.
pub fn local_std(data: &[f64], dims: [usize; 3], radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut out = vec![0.0; data.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let mut count = 0.0;
                for dz in -r..=r {
                    let zz = reflect(z as isize + dz, dims[2]);
                    for dy in -r..=r {
                        let yy = reflect(y as isize + dy, dims[1]);
                        for dx in -r..=r {
                            let xx = reflect(x as isize + dx, dims[0]);
                            let v = data[xx + dims[0] * (yy + dims[1] * zz)];
                            sum += v;
                            sum_sq += v * v;
                            count += 1.0;
                        }
                    }
                }
                let mean = sum / count;
                let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
                out[x + dims[0] * (y + dims[1] * z)] = var.sqrt();
            }
        }
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
