//! Atmospheric absorption after ISO 9613-1.

use serde::{Deserialize, Serialize};

use super::bands::{FrequencyBands, Spectrum};
use crate::error::{Error, Result};

const T0: f64 = 293.15;
const T01: f64 = 273.16;
const P_REF: f64 = 101.325;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirModel {
    pub temperature_c: f64,
    /// Relative humidity in percent.
    pub relative_humidity: f64,
    pub pressure_kpa: f64,
}

impl Default for AirModel {
    fn default() -> Self {
        AirModel { temperature_c: 20.0, relative_humidity: 50.0, pressure_kpa: P_REF }
    }
}

impl AirModel {
    /// Pure-tone attenuation in dB per metre.
    pub fn attenuation_db_per_m(&self, f: f64) -> f64 {
        let t = self.temperature_c + 273.15;
        let pa = self.pressure_kpa / P_REF;
        let c = -6.8346 * (T01 / t).powf(1.261) + 4.6151;
        let h = self.relative_humidity * 10f64.powf(c) / pa;
        let fro = pa * (24.0 + 4.04e4 * h * (0.02 + h) / (0.391 + h));
        let frn = pa * (t / T0).powf(-0.5) * (9.0 + 280.0 * h * (-4.170 * ((t / T0).powf(-1.0 / 3.0) - 1.0)).exp());
        let f2 = f * f;
        8.686
            * f2
            * (1.84e-11 / pa * (t / T0).sqrt()
                + (t / T0).powf(-2.5)
                    * (0.01275 * (-2239.1 / t).exp() / (fro + f2 / fro)
                        + 0.1068 * (-3352.0 / t).exp() / (frn + f2 / frn)))
    }

    /// Checks the ranges the formula is specified for.
    pub fn validate(&self) -> Result<()> {
        if !(-20.0..=50.0).contains(&self.temperature_c) {
            return Err(Error::validation(format!("temperature {} °C outside [-20, 50]", self.temperature_c)));
        }
        if !(0.0..=100.0).contains(&self.relative_humidity) {
            return Err(Error::validation(format!("humidity {} % outside [0, 100]", self.relative_humidity)));
        }
        if !(self.pressure_kpa > 0.0) {
            return Err(Error::validation("pressure must be positive"));
        }
        Ok(())
    }

    /// Like [`attenuation_db_per_m`](Self::attenuation_db_per_m) with range checks.
    pub fn attenuation_checked(&self, f: f64) -> Result<f64> {
        self.validate()?;
        if !(20.0..=40_000.0).contains(&f) {
            return Err(Error::validation(format!("frequency {f} Hz outside [20, 40000]")));
        }
        Ok(self.attenuation_db_per_m(f))
    }

    /// Energy attenuation coefficient `m` per band so that intensity decays as `exp(-m d)`.
    pub fn energy_coefficients(&self, bands: &FrequencyBands) -> Spectrum {
        let mut s = Spectrum::zeros(bands.len());
        for (i, &f) in bands.centers().iter().enumerate() {
            s[i] = self.attenuation_db_per_m(f) * std::f64::consts::LN_10 / 10.0;
        }
        s
    }

    /// Speed of sound for the model's temperature.
    pub fn speed_of_sound(&self) -> f64 {
        331.3 * (1.0 + self.temperature_c / 273.15).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iso_reference_values() {
        // Tabulated values at 20 °C and 101.325 kPa.
        let air = AirModel { temperature_c: 20.0, relative_humidity: 70.0, pressure_kpa: 101.325 };
        assert!((air.attenuation_db_per_m(4000.0) * 1000.0 - 22.9).abs() < 0.3);
        assert!((air.attenuation_db_per_m(1000.0) * 1000.0 - 4.98).abs() < 0.1);
        let dry = AirModel { relative_humidity: 10.0, ..air };
        assert!(dry.attenuation_db_per_m(4000.0) > air.attenuation_db_per_m(4000.0));
    }

    #[test]
    fn low_frequency_and_ranges() {
        let air = AirModel::default();
        assert!(air.attenuation_checked(50.0).unwrap() < 1e-3);
        assert!(air.attenuation_checked(10.0).is_err());
        assert!(AirModel { relative_humidity: 120.0, ..air }.validate().is_err());
        assert!(AirModel { temperature_c: -40.0, ..air }.attenuation_checked(1000.0).is_err());
    }

    #[test]
    fn grows_with_frequency() {
        let air = AirModel::default();
        let m = air.energy_coefficients(&FrequencyBands::octaves());
        for w in m.as_slice().windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
