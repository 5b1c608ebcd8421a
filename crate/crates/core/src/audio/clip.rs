use std::io::{Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::spatial::ImpulseResponse;

/// Multichannel audio at a fixed sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sampling_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl AudioClip {
    pub fn new(sampling_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        let clip = AudioClip { sampling_rate, channels };
        clip.validate()?;
        Ok(clip)
    }

    pub fn mono(sampling_rate: u32, samples: Vec<f64>) -> Self {
        AudioClip { sampling_rate, channels: vec![samples] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampling_rate == 0 {
            return Err(Error::validation("sampling rate must be positive"));
        }
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::validation("channels differ in length"));
        }
        if self.channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("audio contains non-finite samples"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sampling_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Downmix by averaging channels.
    pub fn to_mono(&self) -> AudioClip {
        let n = self.len();
        let c = self.channel_count().max(1) as f64;
        let mut out = vec![0.0; n];
        for ch in &self.channels {
            for (o, v) in out.iter_mut().zip(ch) {
                *o += v / c;
            }
        }
        AudioClip::mono(self.sampling_rate, out)
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let reader = WavReader::open(path)?;
        Self::from_reader(reader)
    }

    /// Reads float or integer PCM.
    pub fn from_reader<R: Read>(reader: WavReader<R>) -> Result<Self> {
        let spec = reader.spec();
        let nch = spec.channels as usize;
        if nch == 0 {
            return Err(Error::invalid("wav file has no channels"));
        }
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Float, 32) => {
                reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
            }
            (SampleFormat::Int, bits) if (8..=32).contains(&bits) => {
                let scale = 1.0 / (1u64 << (bits - 1)) as f64;
                reader
                    .into_samples::<i32>()
                    .map(|s| s.map(|v| v as f64 * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
            (fmt, bits) => return Err(Error::invalid(format!("unsupported wav format {fmt:?} {bits}-bit"))),
        };
        let mut channels = vec![Vec::with_capacity(interleaved.len() / nch); nch];
        for frame in interleaved.chunks_exact(nch) {
            for (c, v) in channels.iter_mut().zip(frame) {
                c.push(*v);
            }
        }
        AudioClip::new(spec.sample_rate, channels)
    }

    /// Writes 32-bit float PCM.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.to_writer(file)
    }

    pub fn to_writer<W: Write + Seek>(&self, w: W) -> Result<()> {
        write_f32(w, self.sampling_rate, &self.channels)
    }
}

impl From<ImpulseResponse> for AudioClip {
    fn from(ir: ImpulseResponse) -> Self {
        AudioClip { sampling_rate: ir.sampling_rate, channels: ir.channels }
    }
}

impl From<&ImpulseResponse> for AudioClip {
    fn from(ir: &ImpulseResponse) -> Self {
        AudioClip { sampling_rate: ir.sampling_rate, channels: ir.channels.clone() }
    }
}

pub(crate) fn write_f32<W: Write + Seek>(w: W, sampling_rate: u32, channels: &[Vec<f64>]) -> Result<()> {
    if channels.is_empty() || channels.len() > u16::MAX as usize {
        return Err(Error::invalid("wav output needs between 1 and 65535 channels"));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: sampling_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::new(w, spec)?;
    let n = channels[0].len();
    for t in 0..n {
        for c in channels {
            writer.write_sample(c[t] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_ir_wav(path: impl AsRef<Path>, ir: &ImpulseResponse) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_f32(file, ir.sampling_rate, &ir.channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn float_round_trip() {
        let clip = AudioClip::new(22050, vec![vec![0.5, -0.25, 0.0], vec![1.0, 0.125, -1.0]]).unwrap();
        let mut buf = Cursor::new(Vec::new());
        clip.to_writer(&mut buf).unwrap();
        buf.set_position(0);
        let back = AudioClip::from_reader(WavReader::new(buf).unwrap()).unwrap();
        assert_eq!(back, clip);
    }

    #[test]
    fn reads_pcm16() {
        let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            for v in [0i16, 16384, -32768] {
                w.write_sample(v).unwrap();
            }
            w.finalize().unwrap();
        }
        buf.set_position(0);
        let clip = AudioClip::from_reader(WavReader::new(buf).unwrap()).unwrap();
        assert_eq!(clip.channels[0], vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn rejects_ragged_channels() {
        assert!(AudioClip::new(44100, vec![vec![0.0; 3], vec![0.0; 2]]).is_err());
        assert!(AudioClip::new(44100, vec![vec![f64::NAN]]).is_err());
    }
}
