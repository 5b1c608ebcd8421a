use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::bands::{FrequencyBands, Spectrum};

/// Piecewise (frequency, value) samples, stored sorted by frequency.
///
/// Serialized as a flat list `[f1, v1, f2, v2, ...]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientCurve {
    points: Vec<(f64, f64)>,
}

impl CoefficientCurve {
    pub fn new(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        CoefficientCurve { points }
    }

    pub fn constant(v: f64) -> Self {
        CoefficientCurve { points: vec![(1000.0, v)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn points_mut(&mut self) -> &mut Vec<(f64, f64)> {
        &mut self.points
    }

    /// Linear interpolation in log frequency, constant outside the sampled range.
    pub fn at(&self, f: f64) -> Option<f64> {
        let p = &self.points;
        let first = p.first()?;
        let last = p.last()?;
        if f <= first.0 {
            return Some(first.1);
        }
        if f >= last.0 {
            return Some(last.1);
        }
        let i = p.partition_point(|q| q.0 <= f);
        let (f0, v0) = p[i - 1];
        let (f1, v1) = p[i];
        let t = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
        Some(v0 + t * (v1 - v0))
    }
}

impl Serialize for CoefficientCurve {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<f64> = self.points.iter().flat_map(|&(f, v)| [f, v]).collect();
        flat.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientCurve {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        if flat.len() % 2 != 0 {
            return Err(D::Error::custom("coefficient list must hold (frequency, value) pairs"));
        }
        let points: Vec<(f64, f64)> = flat.chunks(2).map(|c| (c[0], c[1])).collect();
        if points.iter().any(|&(f, v)| !(f > 0.0 && f.is_finite() && v.is_finite())) {
            return Err(D::Error::custom("coefficient frequencies must be positive and values finite"));
        }
        Ok(CoefficientCurve::new(points))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientKind {
    Absorption,
    Scattering,
    Transmission,
    /// Energy loss in dB per metre inside the material.
    Damping,
}

impl CoefficientKind {
    pub const ALL: [CoefficientKind; 4] = [
        CoefficientKind::Absorption,
        CoefficientKind::Scattering,
        CoefficientKind::Transmission,
        CoefficientKind::Damping,
    ];

    /// Value used when a material has no samples for this kind.
    pub fn default_value(self) -> f64 {
        match self {
            CoefficientKind::Absorption => 0.1,
            CoefficientKind::Scattering => 0.5,
            CoefficientKind::Transmission => 0.0,
            CoefficientKind::Damping => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcousticMaterial {
    #[serde(default)]
    pub absorption: CoefficientCurve,
    #[serde(default)]
    pub scattering: CoefficientCurve,
    #[serde(default)]
    pub transmission: CoefficientCurve,
    #[serde(default)]
    pub damping: CoefficientCurve,
}

impl AcousticMaterial {
    /// Frequency-independent material.
    pub fn constant(absorption: f64, scattering: f64, transmission: f64) -> Self {
        AcousticMaterial {
            absorption: CoefficientCurve::constant(absorption),
            scattering: CoefficientCurve::constant(scattering),
            transmission: CoefficientCurve::constant(transmission),
            damping: CoefficientCurve::default(),
        }
    }

    pub fn curve(&self, kind: CoefficientKind) -> &CoefficientCurve {
        match kind {
            CoefficientKind::Absorption => &self.absorption,
            CoefficientKind::Scattering => &self.scattering,
            CoefficientKind::Transmission => &self.transmission,
            CoefficientKind::Damping => &self.damping,
        }
    }

    pub fn curve_mut(&mut self, kind: CoefficientKind) -> &mut CoefficientCurve {
        match kind {
            CoefficientKind::Absorption => &mut self.absorption,
            CoefficientKind::Scattering => &mut self.scattering,
            CoefficientKind::Transmission => &mut self.transmission,
            CoefficientKind::Damping => &mut self.damping,
        }
    }

    /// Checks ranges and that absorption plus transmission never exceeds one.
    pub fn validate(&self) -> Result<(), String> {
        for kind in CoefficientKind::ALL {
            for &(_, v) in self.curve(kind).points() {
                let ok = match kind {
                    CoefficientKind::Damping => v >= 0.0,
                    _ => (0.0..=1.0).contains(&v),
                };
                if !ok {
                    return Err(format!("{kind:?} coefficient {v} out of range"));
                }
            }
        }
        let mut freqs: Vec<f64> = self
            .absorption
            .points()
            .iter()
            .chain(self.transmission.points())
            .map(|p| p.0)
            .collect();
        freqs.push(1000.0);
        for f in freqs {
            let a = coefficient_at(self, CoefficientKind::Absorption, f);
            let t = coefficient_at(self, CoefficientKind::Transmission, f);
            if a + t > 1.0 + 1e-9 {
                return Err(format!("absorption + transmission = {} at {f} Hz", a + t));
            }
        }
        Ok(())
    }
}

/// Coefficient of `kind` at frequency `f`, interpolated linearly in log frequency.
pub fn coefficient_at(material: &AcousticMaterial, kind: CoefficientKind, f: f64) -> f64 {
    material.curve(kind).at(f).unwrap_or_else(|| kind.default_value())
}

/// Coefficients evaluated at each band center.
pub fn band_coefficients(material: &AcousticMaterial, kind: CoefficientKind, bands: &FrequencyBands) -> Spectrum {
    let mut s = Spectrum::zeros(bands.len());
    for (i, &f) in bands.centers().iter().enumerate() {
        s[i] = coefficient_at(material, kind, f);
    }
    s
}
