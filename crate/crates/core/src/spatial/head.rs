//! Spherical-head model: Woodworth interaural delays and a one-pole
//! head-shadow filter.

use std::f64::consts::PI;

use crate::geometry::Vec3;

pub const HEAD_RADIUS: f64 = 0.0875;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    /// Ear axis in the listener frame (y points left).
    pub fn axis(self) -> Vec3 {
        match self {
            Ear::Left => Vec3::Y,
            Ear::Right => -Vec3::Y,
        }
    }
}

/// Rigid spherical head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadModel {
    pub radius: f64,
    /// High-frequency gain of the shadow filter opposite the ear, 0.1 in Brown and Duda.
    pub alpha_min: f64,
    pub speed_of_sound: f64,
}

impl Default for HeadModel {
    fn default() -> Self {
        HeadModel { radius: HEAD_RADIUS, alpha_min: 0.1, speed_of_sound: 343.0 }
    }
}

fn ear_angle(dir: Vec3, ear: Ear) -> f64 {
    dir.normalized().dot(ear.axis()).clamp(-1.0, 1.0).acos()
}

impl HeadModel {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(crate::Error::config("head radius must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha_min) || !(self.speed_of_sound > 0.0) {
            return Err(crate::Error::config("invalid head model"));
        }
        Ok(())
    }

    /// Arrival delay at `ear` relative to the head centre plus `a/c`, so it is never negative.
    pub fn ear_delay(&self, dir: Vec3, ear: Ear) -> f64 {
        let th = ear_angle(dir, ear);
        let rel = if th < PI / 2.0 { -th.cos() } else { th - PI / 2.0 };
        self.radius / self.speed_of_sound * (1.0 + rel)
    }

    /// Woodworth interaural time difference `a (θ + sin θ) / c` for lateral angle θ.
    pub fn woodworth_itd(&self, lateral: f64) -> f64 {
        self.radius * (lateral + lateral.sin()) / self.speed_of_sound
    }

    /// Magnitude of the head-shadow filter at frequency `f` for a source in direction `dir`.
    pub fn shadow_gain(&self, dir: Vec3, ear: Ear, f: f64) -> f64 {
        let th = ear_angle(dir, ear);
        let alpha = (1.0 + self.alpha_min / 2.0) + (1.0 - self.alpha_min / 2.0) * (th * 180.0 / 150.0).cos();
        let w0 = self.speed_of_sound / self.radius;
        let x = 2.0 * PI * f.abs() / (2.0 * w0);
        ((1.0 + (alpha * x).powi(2)) / (1.0 + x * x)).sqrt()
    }
}

/// Roughly uniform directions on the sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lateral_itd_matches_woodworth() {
        let h = HeadModel::default();
        let left = Vec3::Y;
        let itd = h.ear_delay(left, Ear::Right) - h.ear_delay(left, Ear::Left);
        assert!((itd - h.woodworth_itd(PI / 2.0)).abs() < 1e-12);
        assert!((itd * 44100.0 - 28.9).abs() < 0.2);
        let front = Vec3::X;
        assert!((h.ear_delay(front, Ear::Left) - h.ear_delay(front, Ear::Right)).abs() < 1e-15);
        for deg in [10.0f64, 45.0, 80.0] {
            let d = Vec3::new(deg.to_radians().cos(), deg.to_radians().sin(), 0.0);
            let itd = h.ear_delay(d, Ear::Right) - h.ear_delay(d, Ear::Left);
            assert!((itd - h.woodworth_itd(deg.to_radians())).abs() < 1e-12);
        }
    }

    #[test]
    fn shadow_attenuates_far_ear() {
        let h = HeadModel::default();
        let near = h.shadow_gain(Vec3::Y, Ear::Left, 8000.0);
        let far = h.shadow_gain(Vec3::Y, Ear::Right, 8000.0);
        assert!(near > 1.5 && far < 0.5);
        assert!((h.shadow_gain(Vec3::Y, Ear::Right, 10.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fibonacci_is_balanced() {
        let d = fibonacci_sphere(50);
        let m = d.iter().fold(Vec3::ZERO, |a, &b| a + b) / 50.0;
        assert!(m.norm() < 0.05);
    }
}
