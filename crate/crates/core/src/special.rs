//! Special functions backing the noise model: exponentially scaled modified
//! Bessel functions, the confluent hypergeometric function 1F1(-1/2; N; x),
//! Gaussian cdf/quantile and adaptive Gauss–Kronrod quadrature.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

const RESCALE_HIGH: f64 = 1e250;
const RESCALE_FACTOR: f64 = 1e-250;

/// `e^{-z} I_k(z)` for `k = 0..=kmax`, `z >= 0`.
///
/// Small arguments use the power series per order; otherwise Miller's
/// backward recurrence normalized with `e^z = I_0 + 2 Σ I_k`.
pub fn bessel_i_scaled_seq(z: f64, kmax: usize) -> Vec<f64> {
    debug_assert!(z >= 0.0);
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if z < 1.0 {
        let half = 0.5 * z;
        let q = half * half;
        for (k, slot) in out.iter_mut().enumerate() {
            let log_lead = k as f64 * half.ln() - ln_gamma(k as f64 + 1.0) - z;
            if log_lead < -745.0 {
                break;
            }
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut j = 0.0;
            loop {
                j += 1.0;
                term *= q / (j * (j + k as f64));
                sum += term;
                if term < 1e-17 * sum {
                    break;
                }
            }
            *slot = log_lead.exp() * sum;
        }
        return out;
    }

    let start = kmax + 32 + (12.0 * z.sqrt()).ceil() as usize;
    let mut above = 0.0; // I_{k+1}
    let mut current = 1.0; // I_k
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        if k <= kmax {
            out[k] = current;
        }
        sum += 2.0 * current;
        let below = (2.0 * k as f64 / z) * current + above;
        above = current;
        current = below;
        if current > RESCALE_HIGH {
            current *= RESCALE_FACTOR;
            above *= RESCALE_FACTOR;
            sum *= RESCALE_FACTOR;
            for v in out.iter_mut() {
                *v *= RESCALE_FACTOR;
            }
        }
    }
    out[0] = current;
    sum += current;
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Scaled Bessel `e^{-z} I_k(z)` for a single integer order.
pub fn bessel_i_scaled(k: usize, z: f64) -> f64 {
    match scaled_asymptotic(k, z) {
        Some(v) => v,
        None => bessel_i_scaled_seq(z, k)[k],
    }
}

/// Hankel's large-argument expansion of `e^{-z} I_k(z)`, used once
/// `z ≥ max(2000, 20 k²)` where the backward recurrence would need O(√z) steps.
fn scaled_asymptotic(k: usize, z: f64) -> Option<f64> {
    let mu = 4.0 * (k * k) as f64;
    if z < 2000.0 || z < 5.0 * mu {
        return None;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..60 {
        let odd = (2 * j - 1) as f64;
        let next = -term * (mu - odd * odd) / (j as f64 * 8.0 * z);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    Some(sum / (2.0 * std::f64::consts::PI * z).sqrt())
}

/// `ln(e^{-z} I_k(z))`, finite even where the scaled value underflows.
pub fn ln_bessel_i_scaled(k: usize, z: f64) -> f64 {
    if z <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if z < 1.0 {
        let half = 0.5 * z;
        let q = half * half;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 0.0;
        loop {
            j += 1.0;
            term *= q / (j * (j + k as f64));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        return k as f64 * half.ln() - ln_gamma(k as f64 + 1.0) - z + sum.ln();
    }
    bessel_i_scaled(k, z).ln()
}

/// Argument magnitude above which the Kummer-transformed series (positive
/// terms only) replaces the alternating direct series.
pub const KUMMER_SWITCH: f64 = 1.0;

fn asymptotic_switch(n: usize) -> f64 {
    let n = n as f64;
    (30.0 * n * n).max(700.0)
}

/// `1F1(-1/2; n; x)` for `x <= 0`.
pub fn hyp1f1_neg_half(n: usize, x: f64) -> f64 {
    debug_assert!(n >= 1);
    debug_assert!(x <= 0.0);
    let y = -x;
    let b = n as f64;
    if y <= KUMMER_SWITCH {
        // direct series: terms alternate for k >= 1
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 0.0;
        loop {
            term *= (-0.5 + k) / (b + k) * x / (k + 1.0);
            sum += term;
            k += 1.0;
            if term.abs() < 1e-17 * sum.abs() && k > 2.0 {
                break;
            }
            if k > 2000.0 {
                break;
            }
        }
        sum
    } else if y <= asymptotic_switch(n) {
        // Kummer: 1F1(a; b; x) = e^x 1F1(b - a; b; -x)
        let a = b + 0.5;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut log_scale = 0.0;
        let mut k = 0.0;
        loop {
            term *= (a + k) / (b + k) * y / (k + 1.0);
            sum += term;
            k += 1.0;
            if term > RESCALE_HIGH {
                term *= RESCALE_FACTOR;
                sum *= RESCALE_FACTOR;
                log_scale -= RESCALE_FACTOR.ln();
            }
            if k > y && term < 1e-17 * sum {
                break;
            }
        }
        sum * (log_scale - y).exp()
    } else {
        // large-argument expansion: Γ(n)/Γ(n+1/2) √y Σ (-1/2)_s (1/2-n)_s / s! y^-s
        let mut term = 1.0;
        let mut sum = 1.0;
        for s in 0..60 {
            let s = s as f64;
            let next = term * (-0.5 + s) * (0.5 - b + s) / ((s + 1.0) * y);
            if next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        let ratio = (ln_gamma(b) - ln_gamma(b + 0.5)).exp();
        ratio * y.sqrt() * sum
    }
}

/// Standard normal cdf.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile for `0 < p < 1`, polished with one Newton step.
pub fn std_normal_quantile(p: f64) -> f64 {
    let mut z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    let dens = std_normal_pdf(z);
    if dens > 1e-300 {
        z -= (std_normal_cdf(z) - p) / dens;
    }
    z
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

const MAX_INTERVALS: usize = 4000;

/// Globally adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`:
/// the interval with the largest error estimate is bisected until the summed
/// estimate meets the tolerance or the interval budget runs out.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (value, err) = gk15(f, a, b);
    let mut parts = vec![(a, b, value, err)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * total.abs()) || parts.len() >= MAX_INTERVALS {
            return total;
        }
        let worst = (0..parts.len()).max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3)).unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return total;
        }
        let (lv, le) = gk15(f, lo, mid);
        let (rv, re) = gk15(f, mid, hi);
        parts.push((lo, mid, lv, le));
        parts.push((mid, hi, rv, re));
    }
}
