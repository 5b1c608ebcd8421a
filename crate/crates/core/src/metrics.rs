//! Room-acoustic metrics of impulse responses: Schroeder decay curves,
//! reverberation time, direct-to-reverberant ratio.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::FrequencyBands;
use crate::spatial::filterbank::Filterbank;

pub const DEFAULT_DIRECT_WINDOW: f64 = 2.5e-3;
/// Part of the direct window before the onset.
pub const PRE_ONSET: f64 = 0.5e-3;
/// Required gap between the lower end of the fit and the tail floor.
pub const FLOOR_MARGIN_DB: f64 = 10.0;
const MIN_FIT_POINTS: usize = 4;

/// Schroeder backward-integrated energy, 0 dB at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecayCurve {
    pub sampling_rate: u32,
    pub db: Vec<f64>,
}

impl EnergyDecayCurve {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sampling_rate as f64
    }

    pub fn len(&self) -> usize {
        self.db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.db.is_empty()
    }

    /// CSV with a header line; levels after the last sample are written as `-inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,edc_db\n");
        for (i, d) in self.db.iter().enumerate() {
            if d.is_finite() {
                let _ = writeln!(s, "{:.6},{:.4}", self.time(i), d);
            } else {
                let _ = writeln!(s, "{:.6},-inf", self.time(i));
            }
        }
        s
    }
}

/// `None` for a silent response.
pub fn schroeder_edc(x: &[f64], sampling_rate: u32) -> Option<EnergyDecayCurve> {
    let mut cum = vec![0.0; x.len()];
    let mut acc = 0.0;
    for i in (0..x.len()).rev() {
        acc += x[i] * x[i];
        cum[i] = acc;
    }
    if !(acc > 0.0) {
        return None;
    }
    let db = cum.iter().map(|&c| if c > 0.0 { 10.0 * (c / acc).log10() } else { f64::NEG_INFINITY }).collect();
    Some(EnergyDecayCurve { sampling_rate, db })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rt60Method {
    T20,
    #[default]
    T30,
}

impl Rt60Method {
    /// Fit range in dB.
    pub fn range(self) -> (f64, f64) {
        match self {
            Rt60Method::T20 => (-5.0, -25.0),
            Rt60Method::T30 => (-5.0, -35.0),
        }
    }
}

impl std::str::FromStr for Rt60Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t20" => Ok(Rt60Method::T20),
            "t30" => Ok(Rt60Method::T30),
            _ => Err(Error::config(format!("unknown RT60 method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invalid {
    Silent,
    InsufficientDecay,
    NoiseFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rt60 {
    /// `None` when the decay could not be estimated.
    pub seconds: Option<f64>,
    pub method: Rt60Method,
    /// Slope of the fitted line in dB per second.
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    /// Tail floor in dB relative to total energy.
    pub floor_db: Option<f64>,
    pub invalid: Option<Invalid>,
}

impl Rt60 {
    fn invalid(method: Rt60Method, why: Invalid, floor_db: Option<f64>) -> Self {
        Rt60 { seconds: None, method, slope: None, r_squared: None, floor_db, invalid: Some(why) }
    }

    pub fn is_valid(&self) -> bool {
        self.seconds.is_some()
    }
}

/// Least-squares line `y = a + b x`, with R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}

/// Level of the last 10 % of the response, spread over its full length, in dB re total energy.
pub fn tail_floor_db(x: &[f64]) -> Option<f64> {
    let total: f64 = x.iter().map(|v| v * v).sum();
    if !(total > 0.0) {
        return None;
    }
    let tail = &x[x.len() - (x.len() / 10).max(1)..];
    let mean = tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64;
    Some(10.0 * (mean * x.len() as f64 / total).log10())
}

pub fn rt60_from_edc(edc: &EnergyDecayCurve, method: Rt60Method, floor_db: Option<f64>) -> Rt60 {
    let (hi, lo) = method.range();
    if let Some(f) = floor_db {
        if f > lo - FLOOR_MARGIN_DB {
            return Rt60::invalid(method, Invalid::NoiseFloor, floor_db);
        }
    }
    let start = edc.db.iter().position(|&d| d <= hi);
    let end = edc.db.iter().rposition(|&d| d >= lo);
    let reaches = edc.db.iter().any(|&d| d <= lo);
    let (Some(start), Some(end)) = (start, end) else {
        return Rt60::invalid(method, Invalid::InsufficientDecay, floor_db);
    };
    if !reaches || end < start || end + 1 - start < MIN_FIT_POINTS {
        return Rt60::invalid(method, Invalid::InsufficientDecay, floor_db);
    }
    let t: Vec<f64> = (start..=end).map(|i| edc.time(i)).collect();
    let (_, slope, r2) = linear_fit(&t, &edc.db[start..=end]);
    if !(slope < 0.0) {
        return Rt60::invalid(method, Invalid::InsufficientDecay, floor_db);
    }
    Rt60 { seconds: Some(-60.0 / slope), method, slope: Some(slope), r_squared: Some(r2), floor_db, invalid: None }
}

/// Reverberation time of one channel.
pub fn rt60(x: &[f64], sampling_rate: u32, method: Rt60Method) -> Rt60 {
    match schroeder_edc(x, sampling_rate) {
        None => Rt60::invalid(method, Invalid::Silent, None),
        Some(edc) => rt60_from_edc(&edc, method, tail_floor_db(x)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drr {
    /// `None` when there is no energy after the direct window.
    pub db: Option<f64>,
    pub direct_only: bool,
    pub onset: f64,
    /// Direct window in seconds.
    pub window: [f64; 2],
    pub direct_energy: f64,
    pub reverberant_energy: f64,
}

/// First sample within 20 dB of the peak, moved to the largest sample in the following millisecond.
pub fn detect_onset(x: &[f64], sampling_rate: u32) -> Option<usize> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v * v));
    if !(peak > 0.0) {
        return None;
    }
    let first = x.iter().position(|v| v * v >= peak * 0.01)?;
    let span = (sampling_rate as f64 * 1e-3).round() as usize;
    let end = (first + span + 1).min(x.len());
    let best = (first..end).max_by(|&a, &b| (x[a] * x[a]).total_cmp(&(x[b] * x[b])).then(b.cmp(&a)))?;
    Some(best)
}

/// Direct-to-reverberant ratio. `onset` overrides detection, in seconds.
pub fn drr(x: &[f64], sampling_rate: u32, direct_window: f64, onset: Option<f64>) -> Result<Drr> {
    let fs = sampling_rate as f64;
    let onset_idx = match onset {
        Some(t) => (t * fs).round().max(0.0) as usize,
        None => detect_onset(x, sampling_rate).ok_or_else(|| Error::invalid("silent impulse response"))?,
    };
    let a = (onset_idx as f64 - PRE_ONSET * fs).round().max(0.0) as usize;
    let b = ((onset_idx as f64 + direct_window * fs).round() as usize + 1).min(x.len());
    let energy = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let direct = energy(&x[a.min(x.len())..b]);
    let late = energy(&x[b..]);
    let direct_only = !(late > 0.0);
    Ok(Drr {
        db: (!direct_only && direct > 0.0).then(|| 10.0 * (direct / late).log10()),
        direct_only,
        onset: onset_idx as f64 / fs,
        window: [a as f64 / fs, b as f64 / fs],
        direct_energy: direct,
        reverberant_energy: late,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    pub mean_percent: f64,
    pub std_percent: f64,
    pub median_percent: f64,
    pub pairs: usize,
    pub excluded: usize,
}

/// Mean of `|a − b| / b` over pairs where both are valid, in percent.
pub fn relative_rt60_error(a: &[Option<f64>], b: &[Option<f64>]) -> Result<RelativeError> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("{} against {} reverberation times", a.len(), b.len())));
    }
    let mut errs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) if *y > 0.0 && x.is_finite() => Some((x - y).abs() / y * 100.0),
            _ => None,
        })
        .collect();
    if errs.is_empty() {
        return Err(Error::invalid("no valid reverberation-time pairs"));
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    errs.sort_by(f64::total_cmp);
    let mid = errs.len() / 2;
    let median = if errs.len() % 2 == 1 { errs[mid] } else { 0.5 * (errs[mid - 1] + errs[mid]) };
    Ok(RelativeError {
        mean_percent: mean,
        std_percent: var.sqrt(),
        median_percent: median,
        pairs: errs.len(),
        excluded: a.len() - errs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsOptions {
    pub method: Rt60Method,
    pub direct_window: f64,
    /// Restrict the broadband RT60 to octave bands with centres in this range (Hz).
    pub band_range: Option<[f64; 2]>,
    /// Known direct arrival time in seconds.
    pub onset: Option<f64>,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions { method: Rt60Method::T30, direct_window: DEFAULT_DIRECT_WINDOW, band_range: None, onset: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRt60 {
    pub center: f64,
    #[serde(flatten)]
    pub rt60: Rt60,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticSummary {
    pub rt60: Rt60,
    pub bands: Vec<BandRt60>,
    pub drr: Option<Drr>,
}

/// RT60 (broadband and per octave band) and DRR of one channel.
pub fn analyze(x: &[f64], sampling_rate: u32, opts: &MetricsOptions) -> AcousticSummary {
    let bands = FrequencyBands::octaves();
    let fb = Filterbank::new(&bands, sampling_rate as f64);
    let nyquist = sampling_rate as f64 / 2.0;
    let broadband = match opts.band_range {
        None => rt60(x, sampling_rate, opts.method),
        Some([lo, hi]) => {
            let sel: Vec<usize> =
                bands.centers().iter().enumerate().filter(|(_, c)| **c >= lo && **c <= hi).map(|(i, _)| i).collect();
            rt60(&fb.filter_group(x, &sel), sampling_rate, opts.method)
        }
    };
    let per_band = bands
        .centers()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c < nyquist)
        .map(|(b, &center)| BandRt60 { center, rt60: rt60(&fb.filter_amplitude(x, b), sampling_rate, opts.method) })
        .collect();
    AcousticSummary {
        rt60: broadband,
        bands: per_band,
        drr: drr(x, sampling_rate, opts.direct_window, opts.onset).ok(),
    }
}
