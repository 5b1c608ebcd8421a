use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{AirModel, FrequencyBands};
use crate::scene::DEFAULT_SPEED_OF_SOUND;
use crate::spatial::sh;

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    HighQuality,
    HighSpeed,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "high_quality" | "hq" => Ok(Mode::HighQuality),
            "high_speed" | "hs" => Ok(Mode::HighSpeed),
            _ => Err(Error::config(format!("unknown preset '{s}'"))),
        }
    }
}

/// Which parts of the response are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stages {
    pub direct: bool,
    pub indirect: bool,
    pub diffraction: bool,
    pub transmission: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { direct: true, indirect: true, diffraction: true, transmission: true }
    }
}

/// Fully resolved simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub mode: Mode,
    pub sampling_rate: u32,
    pub bands: FrequencyBands,
    pub direct_sh_order: u32,
    pub indirect_sh_order: u32,
    pub num_direct_rays: usize,
    pub num_source_rays: usize,
    pub max_source_depth: u32,
    pub num_listener_rays: usize,
    pub max_listener_depth: u32,
    pub max_ir_seconds: f64,
    /// Samples per histogram bin.
    pub histogram_bin_samples: u32,
    pub stages: Stages,
    pub path_cache: bool,
    /// 0 picks the number of available cores.
    pub thread_count: usize,
    pub rng_seed: u64,
    /// `None` disables air absorption.
    pub air: Option<AirModel>,
    pub speed_of_sound: f64,
    /// Energy gain applied to every arrival.
    pub initial_pressure: f64,
    /// Radius of the spheres used to detect rays at the source and listener.
    pub detector_radius: f64,
    pub unit_scale: f64,
    /// Simulation step for moving sources, seconds.
    pub time_step: f64,
    pub custom_materials: bool,
}

impl SimulationParams {
    pub fn preset(mode: Mode) -> Self {
        let (src, lst) = match mode {
            Mode::HighQuality => (65_536, 65_536),
            Mode::HighSpeed => (8_192, 8_192),
        };
        SimulationParams {
            mode,
            sampling_rate: 44_100,
            bands: FrequencyBands::octaves(),
            direct_sh_order: 1,
            indirect_sh_order: 1,
            num_direct_rays: 5_000,
            num_source_rays: src,
            max_source_depth: 64,
            num_listener_rays: lst,
            max_listener_depth: 8,
            max_ir_seconds: 2.0,
            histogram_bin_samples: 1,
            stages: Stages::default(),
            path_cache: mode == Mode::HighSpeed,
            thread_count: 0,
            rng_seed: 0,
            air: Some(AirModel::default()),
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            initial_pressure: 1.0,
            detector_radius: 0.4,
            unit_scale: 1.0,
            time_step: 0.15,
            custom_materials: false,
        }
    }

    pub fn high_quality() -> Self {
        Self::preset(Mode::HighQuality)
    }

    pub fn high_speed() -> Self {
        Self::preset(Mode::HighSpeed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.sampling_rate < 8_000 {
            return bad("sampling_rate must be at least 8000 Hz");
        }
        if self.bands.is_empty() {
            return bad("at least one frequency band is required");
        }
        if *self.bands.centers().last().unwrap() >= self.sampling_rate as f64 / 2.0 {
            return bad("band centres must lie below the Nyquist frequency");
        }
        if self.indirect_sh_order > sh::MAX_ORDER || self.direct_sh_order > sh::MAX_ORDER {
            return bad("spherical harmonic order is limited to 7");
        }
        if !(self.max_ir_seconds > 0.0 && self.max_ir_seconds <= 60.0) {
            return bad("max_ir_seconds must be in (0, 60]");
        }
        if self.histogram_bin_samples == 0 {
            return bad("histogram_bin_samples must be positive");
        }
        if !(self.speed_of_sound > 0.0) {
            return bad("speed_of_sound must be positive");
        }
        if !(self.initial_pressure >= 0.0 && self.initial_pressure.is_finite()) {
            return bad("initial_pressure must be finite and non-negative");
        }
        if !(self.detector_radius > 0.0) {
            return bad("detector_radius must be positive");
        }
        if !(self.unit_scale > 0.0) {
            return bad("unit_scale must be positive");
        }
        if !(self.time_step > 0.0) {
            return bad("time_step must be positive");
        }
        if let Some(air) = &self.air {
            air.validate().map_err(|e| Error::config(e.to_string()))?;
        }
        Ok(())
    }

    /// Length of the impulse response in samples.
    pub fn ir_samples(&self) -> usize {
        (self.max_ir_seconds * self.sampling_rate as f64).round() as usize
    }
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self::high_quality()
    }
}

/// On-disk parameter file. Omitted fields come from the preset named by `mode`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub schema_version: u32,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub sampling_rate: Option<u32>,
    #[serde(default)]
    pub bands: Option<FrequencyBands>,
    #[serde(default)]
    pub direct_sh_order: Option<u32>,
    #[serde(default)]
    pub indirect_sh_order: Option<u32>,
    #[serde(default)]
    pub num_direct_rays: Option<usize>,
    #[serde(default)]
    pub num_source_rays: Option<usize>,
    #[serde(default)]
    pub max_source_depth: Option<u32>,
    #[serde(default)]
    pub num_listener_rays: Option<usize>,
    #[serde(default)]
    pub max_listener_depth: Option<u32>,
    #[serde(default)]
    pub max_ir_seconds: Option<f64>,
    #[serde(default)]
    pub histogram_bin_samples: Option<u32>,
    #[serde(default)]
    pub stages: Option<Stages>,
    #[serde(default)]
    pub path_cache: Option<bool>,
    #[serde(default)]
    pub thread_count: Option<usize>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
    /// `null` disables air absorption.
    #[serde(default, with = "double_option")]
    pub air: Option<Option<AirModel>>,
    #[serde(default)]
    pub speed_of_sound: Option<f64>,
    #[serde(default)]
    pub initial_pressure: Option<f64>,
    #[serde(default)]
    pub detector_radius: Option<f64>,
    #[serde(default)]
    pub unit_scale: Option<f64>,
    #[serde(default)]
    pub time_step: Option<f64>,
    #[serde(default)]
    pub custom_materials: Option<bool>,
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(v: &Option<Option<T>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(inner) => inner.serialize(s),
        }
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(d).map(Some)
    }
}

impl ParamsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: ParamsFile = serde_json::from_str(text).map_err(|e| Error::config(format!("parameter file: {e}")))?;
        if f.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "parameter schema_version {} is not supported (expected {PARAMS_SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        Ok(f)
    }

    /// Applies the overrides on top of the preset for `mode` (or `fallback`).
    pub fn resolve(&self, fallback: Mode) -> Result<SimulationParams> {
        let mut p = SimulationParams::preset(self.mode.unwrap_or(fallback));
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { p.$f = v; } )* };
        }
        take!(
            sampling_rate, bands, direct_sh_order, indirect_sh_order, num_direct_rays, num_source_rays,
            max_source_depth, num_listener_rays, max_listener_depth, max_ir_seconds, histogram_bin_samples,
            stages, path_cache, thread_count, rng_seed, air, speed_of_sound, initial_pressure, detector_radius,
            unit_scale, time_step, custom_materials
        );
        p.validate()?;
        Ok(p)
    }
}

impl From<&SimulationParams> for ParamsFile {
    fn from(p: &SimulationParams) -> Self {
        ParamsFile {
            schema_version: PARAMS_SCHEMA_VERSION,
            mode: Some(p.mode),
            sampling_rate: Some(p.sampling_rate),
            bands: Some(p.bands.clone()),
            direct_sh_order: Some(p.direct_sh_order),
            indirect_sh_order: Some(p.indirect_sh_order),
            num_direct_rays: Some(p.num_direct_rays),
            num_source_rays: Some(p.num_source_rays),
            max_source_depth: Some(p.max_source_depth),
            num_listener_rays: Some(p.num_listener_rays),
            max_listener_depth: Some(p.max_listener_depth),
            max_ir_seconds: Some(p.max_ir_seconds),
            histogram_bin_samples: Some(p.histogram_bin_samples),
            stages: Some(p.stages),
            path_cache: Some(p.path_cache),
            thread_count: Some(p.thread_count),
            rng_seed: Some(p.rng_seed),
            air: Some(p.air),
            speed_of_sound: Some(p.speed_of_sound),
            initial_pressure: Some(p.initial_pressure),
            detector_radius: Some(p.detector_radius),
            unit_scale: Some(p.unit_scale),
            time_step: Some(p.time_step),
            custom_materials: Some(p.custom_materials),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_differ_in_ray_counts() {
        let hq = SimulationParams::high_quality();
        let hs = SimulationParams::high_speed();
        assert_eq!(hq.num_source_rays, 8 * hs.num_source_rays);
        assert_eq!(hq.max_source_depth, 64);
        assert!(hq.validate().is_ok());
    }

    #[test]
    fn file_overrides_preset() {
        let f = ParamsFile::from_json(r#"{"schema_version":1,"mode":"high_speed","rng_seed":7,"air":null}"#).unwrap();
        let p = f.resolve(Mode::HighQuality).unwrap();
        assert_eq!(p.num_source_rays, 8_192);
        assert_eq!(p.rng_seed, 7);
        assert_eq!(p.air, None);
    }

    #[test]
    fn roundtrip_through_file() {
        let mut p = SimulationParams::high_speed();
        p.rng_seed = 99;
        p.stages.diffraction = false;
        let text = serde_json::to_string(&ParamsFile::from(&p)).unwrap();
        assert_eq!(ParamsFile::from_json(&text).unwrap().resolve(Mode::HighQuality).unwrap(), p);
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        assert!(ParamsFile::from_json(r#"{"schema_version":1,"rays":5}"#).is_err());
        assert!(ParamsFile::from_json(r#"{"schema_version":9}"#).is_err());
        let f = ParamsFile::from_json(r#"{"schema_version":1,"sampling_rate":100}"#).unwrap();
        assert!(matches!(f.resolve(Mode::HighQuality), Err(Error::Config(_))));
    }
}
