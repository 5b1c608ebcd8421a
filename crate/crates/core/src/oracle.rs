//! Closed-form references: image sources in a rectangular room and the
//! Sabine and Eyring reverberation formulas.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Axis-aligned rectangular room `[0, Lx] × [0, Ly] × [0, Lz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShoeboxRoom {
    pub dims: Vec3,
    /// Per-band absorption of the walls at x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
    pub wall_absorption: [Vec<f64>; 6],
    pub speed_of_sound: f64,
}

impl ShoeboxRoom {
    /// All six walls share one per-band absorption spectrum.
    pub fn uniform(dims: Vec3, absorption: &[f64], speed_of_sound: f64) -> Self {
        let a = absorption.to_vec();
        ShoeboxRoom {
            dims,
            wall_absorption: [a.clone(), a.clone(), a.clone(), a.clone(), a.clone(), a],
            speed_of_sound,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    fn wall_areas(&self) -> [f64; 6] {
        let Vec3 { x, y, z } = self.dims;
        [y * z, y * z, x * z, x * z, x * y, x * y]
    }

    pub fn surface_area(&self) -> f64 {
        self.wall_areas().iter().sum()
    }

    pub fn band_count(&self) -> usize {
        self.wall_absorption[0].len()
    }

    fn check(&self) -> Result<()> {
        let n = self.band_count();
        if n == 0 || self.wall_absorption.iter().any(|w| w.len() != n) {
            return Err(Error::invalid("every wall needs the same non-zero number of bands"));
        }
        if self.wall_absorption.iter().flatten().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("absorption must lie in [0, 1]"));
        }
        if !(self.dims.x > 0.0 && self.dims.y > 0.0 && self.dims.z > 0.0) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        Ok(())
    }

    /// Area-weighted mean absorption per band.
    pub fn mean_absorption(&self) -> Vec<f64> {
        let areas = self.wall_areas();
        let s: f64 = areas.iter().sum();
        (0..self.band_count())
            .map(|b| (0..6).map(|w| areas[w] * self.wall_absorption[w][b]).sum::<f64>() / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSource {
    pub position: Vec3,
    /// Reflection count per wall, in the same order as `wall_absorption`.
    pub hits: [u32; 6],
    pub order: u32,
    pub distance: f64,
    pub delay: f64,
    /// Per-band arrival intensity for a unit-power source.
    pub energy: Vec<f64>,
}

/// Reflection counts on the low and high wall for image index `i` along one axis.
fn axis_hits(i: i64) -> (u32, u32) {
    let n = i.unsigned_abs() as u32;
    if i >= 0 {
        (n / 2, n.div_ceil(2))
    } else {
        (n.div_ceil(2), n / 2)
    }
}

fn axis_coord(i: i64, len: f64, s: f64) -> f64 {
    if i.rem_euclid(2) == 0 {
        i as f64 * len + s
    } else {
        i as f64 * len + (len - s)
    }
}

/// Every image source up to `max_order` reflections, sorted by delay.
///
/// `air` is an optional per-band energy attenuation coefficient in 1/m.
pub fn image_sources(
    room: &ShoeboxRoom,
    source: Vec3,
    listener: Vec3,
    max_order: u32,
    air: Option<&[f64]>,
) -> Result<Vec<ImageSource>> {
    room.check()?;
    let bands = room.band_count();
    if let Some(a) = air {
        if a.len() != bands {
            return Err(Error::invalid("air coefficients must match the band count"));
        }
    }
    let n = max_order as i64;
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -(n - i.abs())..=(n - i.abs()) {
            let rest = n - i.abs() - j.abs();
            for k in -rest..=rest {
                let (x0, x1) = axis_hits(i);
                let (y0, y1) = axis_hits(j);
                let (z0, z1) = axis_hits(k);
                let hits = [x0, x1, y0, y1, z0, z1];
                let position = Vec3::new(
                    axis_coord(i, room.dims.x, source.x),
                    axis_coord(j, room.dims.y, source.y),
                    axis_coord(k, room.dims.z, source.z),
                );
                let distance = position.distance(listener);
                let spread = 1.0 / (4.0 * PI * distance * distance);
                let energy = (0..bands)
                    .map(|b| {
                        let mut e = spread;
                        for (w, &h) in hits.iter().enumerate() {
                            e *= (1.0 - room.wall_absorption[w][b]).powi(h as i32);
                        }
                        if let Some(a) = air {
                            e *= (-a[b] * distance).exp();
                        }
                        e
                    })
                    .collect();
                out.push(ImageSource {
                    position,
                    hits,
                    order: hits.iter().sum(),
                    distance,
                    delay: distance / room.speed_of_sound,
                    energy,
                });
            }
        }
    }
    out.sort_by(|a, b| a.delay.total_cmp(&b.delay).then(a.order.cmp(&b.order)));
    Ok(out)
}

/// Direct-to-reverberant ratio in dB from image-source arrivals.
///
/// The direct part is the order-0 arrival; everything else is reverberant.
/// Energies are combined across bands with `weights`.
pub fn drr_from_images(images: &[ImageSource], weights: &[f64]) -> Option<f64> {
    let total = |im: &ImageSource| im.energy.iter().zip(weights).map(|(e, w)| e * w).sum::<f64>();
    let direct: f64 = images.iter().filter(|im| im.order == 0).map(total).sum();
    let rest: f64 = images.iter().filter(|im| im.order > 0).map(total).sum();
    (direct > 0.0 && rest > 0.0).then(|| 10.0 * (direct / rest).log10())
}

/// Decay constant `24 ln 10 / c`, about 0.161 s/m at 343 m/s.
fn sabine_constant(c: f64) -> f64 {
    24.0 * std::f64::consts::LN_10 / c
}

/// Sabine reverberation time per band. `air` adds the `4 m V` term.
pub fn sabine_rt60(room: &ShoeboxRoom, air: Option<&[f64]>) -> Result<Vec<f64>> {
    room.check()?;
    let v = room.volume();
    let s = room.surface_area();
    let k = sabine_constant(room.speed_of_sound);
    room.mean_absorption()
        .iter()
        .enumerate()
        .map(|(b, &a)| {
            let m = air.map_or(0.0, |x| x[b]);
            let total = s * a + 4.0 * m * v;
            if total <= 0.0 {
                return Err(Error::invalid("total absorption is zero"));
            }
            Ok(k * v / total)
        })
        .collect()
}

/// Eyring reverberation time per band.
pub fn eyring_rt60(room: &ShoeboxRoom, air: Option<&[f64]>) -> Result<Vec<f64>> {
    room.check()?;
    let v = room.volume();
    let s = room.surface_area();
    let k = sabine_constant(room.speed_of_sound);
    room.mean_absorption()
        .iter()
        .enumerate()
        .map(|(b, &a)| {
            if a >= 1.0 {
                return Err(Error::invalid("mean absorption must be below 1"));
            }
            let m = air.map_or(0.0, |x| x[b]);
            let total = -s * (1.0 - a).ln() + 4.0 * m * v;
            if total <= 0.0 {
                return Err(Error::invalid("total absorption is zero"));
            }
            Ok(k * v / total)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> ShoeboxRoom {
        ShoeboxRoom::uniform(Vec3::new(4.0, 3.0, 2.5), &[0.2, 0.4], 343.0)
    }

    #[test]
    fn first_order_images_mirror_walls() {
        let src = Vec3::new(1.0, 1.0, 1.0);
        let ims = image_sources(&room(), src, Vec3::new(3.0, 2.0, 1.5), 1, None).unwrap();
        assert_eq!(ims.len(), 7);
        assert_eq!(ims.iter().filter(|i| i.order == 0).count(), 1);
        let expect = [
            Vec3::new(-1.0, 1.0, 1.0),
            Vec3::new(7.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, 1.0),
            Vec3::new(1.0, 5.0, 1.0),
            Vec3::new(1.0, 1.0, -1.0),
            Vec3::new(1.0, 1.0, 4.0),
        ];
        for e in expect {
            let im = ims.iter().find(|i| (i.position - e).norm() < 1e-12).expect("image present");
            assert_eq!(im.order, 1);
            assert!((im.energy[0] - 0.8 / (4.0 * PI * im.distance.powi(2))).abs() < 1e-15);
        }
    }

    #[test]
    fn image_count_matches_octahedral_number() {
        // Lattice points with |i|+|j|+|k| <= n: (2n+1)(2n²+2n+3)/3.
        for n in 0..6u32 {
            let ims = image_sources(&room(), Vec3::splat(1.0), Vec3::splat(1.2), n, None).unwrap();
            let n = n as usize;
            assert_eq!(ims.len(), (2 * n + 1) * (2 * n * n + 2 * n + 3) / 3);
        }
    }

    #[test]
    fn second_order_hit_counts() {
        assert_eq!(axis_hits(2), (1, 1));
        assert_eq!(axis_hits(-3), (2, 1));
        assert_eq!(axis_hits(3), (1, 2));
        assert_eq!(axis_coord(2, 4.0, 1.0), 9.0);
        assert_eq!(axis_coord(-2, 4.0, 1.0), -7.0);
    }

    #[test]
    fn sabine_and_eyring() {
        let r = room();
        let s = sabine_rt60(&r, None).unwrap();
        let e = eyring_rt60(&r, None).unwrap();
        let v = 30.0;
        let area = 2.0 * (12.0 + 10.0 + 7.5);
        assert!((s[0] - 0.1611 * v / (area * 0.2)).abs() < 1e-3);
        assert!(e[0] < s[0] && e[1] < s[1]);
        assert!(s[1] < s[0]);
    }

    #[test]
    fn textbook_room() {
        let r = ShoeboxRoom::uniform(Vec3::new(10.0, 8.0, 3.0), &[0.2], 343.0);
        assert!((sabine_rt60(&r, None).unwrap()[0] - 0.721).abs() < 2e-3);
        assert!((eyring_rt60(&r, None).unwrap()[0] - 0.646).abs() < 2e-3);
        let src = Vec3::new(1.0, 1.0, 1.0);
        let ims = image_sources(&r, src, Vec3::new(3.0, 2.0, 1.5), 1, None).unwrap();
        assert!((ims[0].delay - 5.25f64.sqrt() / 343.0).abs() < 1e-12);
        let floor = ims.iter().find(|i| i.hits[4] == 1).unwrap();
        assert!((floor.delay - 11.25f64.sqrt() / 343.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_absorption() {
        let dead = ShoeboxRoom::uniform(Vec3::new(4.0, 3.0, 2.5), &[0.0], 343.0);
        assert!(sabine_rt60(&dead, None).is_err());
        assert!(sabine_rt60(&dead, Some(&[0.001])).is_ok());
        let open = ShoeboxRoom::uniform(Vec3::new(4.0, 3.0, 2.5), &[1.0], 343.0);
        assert!(eyring_rt60(&open, None).is_err());
    }

    #[test]
    fn rejects_bad_rooms() {
        let mut r = room();
        r.wall_absorption[2] = vec![0.1];
        assert!(sabine_rt60(&r, None).is_err());
    }
}
