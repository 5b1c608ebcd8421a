//! Real spherical harmonics, ACN channel order, SN3D normalization, no
//! Condon-Shortley phase.

use crate::geometry::Vec3;

pub const MAX_ORDER: u32 = 7;

/// Number of coefficients for an expansion of the given order.
pub fn sh_count(order: u32) -> usize {
    ((order + 1) * (order + 1)) as usize
}

/// ACN index of degree `l`, order `m`.
pub fn acn(l: u32, m: i32) -> usize {
    ((l * l + l) as i64 + m as i64) as usize
}

fn factorial_ratio(l: u32, m: u32) -> f64 {
    // (l - m)! / (l + m)!
    let mut r = 1.0;
    for k in (l - m + 1)..=(l + m) {
        r /= k as f64;
    }
    r
}

/// Evaluates all harmonics up to `order` at unit direction `d` into `out`.
pub fn eval_into(order: u32, d: Vec3, out: &mut [f64]) {
    let n = sh_count(order);
    assert!(out.len() >= n);
    let d = d.normalized();
    let (x, y, z) = (d.x, d.y, d.z);
    let lmax = order as usize;
    // cos/sin parts: Re and Im of (x + iy)^m, which equal cos^m(el)·cos(m·az) and cos^m(el)·sin(m·az).
    let mut re = vec![1.0; lmax + 1];
    let mut im = vec![0.0; lmax + 1];
    for m in 1..=lmax {
        re[m] = re[m - 1] * x - im[m - 1] * y;
        im[m] = re[m - 1] * y + im[m - 1] * x;
    }
    for m in 0..=lmax {
        // Q_l^m(z) with P_l^m(z) = (1 - z²)^{m/2} Q_l^m(z).
        let mut q_mm = 1.0;
        for k in 1..=m {
            q_mm *= (2 * k - 1) as f64;
        }
        let mut q_prev2 = 0.0;
        let mut q_prev = q_mm;
        for l in m..=lmax {
            let q = if l == m {
                q_mm
            } else if l == m + 1 {
                z * (2 * m + 1) as f64 * q_mm
            } else {
                ((2 * l - 1) as f64 * z * q_prev - (l + m - 1) as f64 * q_prev2) / (l - m) as f64
            };
            if l > m {
                q_prev2 = q_prev;
                q_prev = q;
            }
            let norm = ((if m == 0 { 1.0 } else { 2.0 }) * factorial_ratio(l as u32, m as u32)).sqrt();
            let base = norm * q;
            if m == 0 {
                out[acn(l as u32, 0)] = base;
            } else {
                out[acn(l as u32, m as i32)] = base * re[m];
                out[acn(l as u32, -(m as i32))] = base * im[m];
            }
        }
    }
}

pub fn eval(order: u32, d: Vec3) -> Vec<f64> {
    let mut v = vec![0.0; sh_count(order)];
    eval_into(order, d, &mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn first_order_is_yzx() {
        let d = Vec3::new(0.3, -0.5, 0.8).normalized();
        let v = eval(1, d);
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[1] - d.y).abs() < 1e-15);
        assert!((v[2] - d.z).abs() < 1e-15);
        assert!((v[3] - d.x).abs() < 1e-15);
    }

    #[test]
    fn second_order_closed_forms() {
        let d = Vec3::new(0.2, 0.7, -0.4).normalized();
        let v = eval(2, d);
        let s3 = 3f64.sqrt();
        assert!((v[4] - s3 * d.x * d.y).abs() < 1e-12);
        assert!((v[5] - s3 * d.y * d.z).abs() < 1e-12);
        assert!((v[6] - 0.5 * (3.0 * d.z * d.z - 1.0)).abs() < 1e-12);
        assert!((v[7] - s3 * d.x * d.z).abs() < 1e-12);
        assert!((v[8] - 0.5 * s3 * (d.x * d.x - d.y * d.y)).abs() < 1e-12);
    }

    #[test]
    fn sn3d_integral_norm() {
        // ∫ Y_lm² dΩ = 4π / (2l + 1) under SN3D.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut acc = vec![0.0; sh_count(3)];
        let mut buf = vec![0.0; sh_count(3)];
        for _ in 0..n {
            eval_into(3, crate::geometry::sample_uniform_sphere(&mut rng), &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b * b;
            }
        }
        for l in 0..=3u32 {
            for m in -(l as i32)..=(l as i32) {
                let mean = acc[acn(l, m)] / n as f64;
                let expect = 1.0 / (2 * l + 1) as f64;
                assert!((mean - expect).abs() < 0.01, "l={l} m={m} {mean} vs {expect}");
            }
        }
    }
}
