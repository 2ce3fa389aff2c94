use std::fs;
use std::path::Path;

use super::{AudioError, Result};


/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(AudioError::Argument("waveform has no samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Quantizes to PCM16, clamping to the representable range.
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples
            .iter()
            .map(|s| (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
            .collect()
    }
}

fn fmt_err(field: &'static str, detail: impl Into<String>) -> AudioError {
    AudioError::Format {
        field,
        detail: detail.into(),
    }
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Reads a RIFF/WAVE PCM16 mono file as raw integers plus sample rate.
pub fn read_pcm16(path: impl AsRef<Path>) -> Result<(Vec<i16>, u32)> {
    let bytes = fs::read(path.as_ref()).map_err(crate::with_path(path.as_ref()))?;
    if bytes.len() < 12 {
        return Err(fmt_err("riff", format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(fmt_err("riff", "missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(fmt_err("wave", "missing WAVE tag"));
    }
    let mut off = 12;
    let mut format: Option<(u32,)> = None;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(&bytes, off + 4) as usize;
        let body = off + 8;
        if body + size > bytes.len() {
            return Err(fmt_err(
                "chunk_size",
                format!(
                    "chunk {:?} at byte {off} claims {size} bytes, only {} remain",
                    String::from_utf8_lossy(id),
                    bytes.len() - body
                ),
            ));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(fmt_err("fmt", format!("chunk too small ({size} bytes)")));
                }
                let audio_format = u16_at(&bytes, body);
                let channels = u16_at(&bytes, body + 2);
                let rate = u32_at(&bytes, body + 4);
                let bits = u16_at(&bytes, body + 14);
                if audio_format != 1 {
                    return Err(fmt_err(
                        "audio_format",
                        format!("expected 1 (PCM), got {audio_format}"),
                    ));
                }
                if channels != 1 {
                    return Err(fmt_err("channels", format!("expected mono, got {channels}")));
                }
                if bits != 16 {
                    return Err(fmt_err("bits_per_sample", format!("expected 16, got {bits}")));
                }
                if rate == 0 {
                    return Err(fmt_err("sample_rate", "zero"));
                }
                format = Some((rate,));
            }
            b"data" => {
                let (rate,) = format.ok_or_else(|| fmt_err("fmt", "data chunk before fmt chunk"))?;
                if !size.is_multiple_of(2) {
                    return Err(fmt_err("data", format!("odd byte count {size}")));
                }
                let pcm = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                return Ok((pcm, rate));
            }
            _ => {}
        }
        off = body + size + (size & 1);
    }
    Err(fmt_err(
        if format.is_some() { "data" } else { "fmt" },
        "chunk not found",
    ))
}

/// Loads a PCM16 mono WAV file, scaling samples by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let (pcm, rate) = read_pcm16(path)?;
    let samples = pcm.iter().map(|&s| s as f64 / 32768.0).collect();
    Waveform::new(samples, rate)
}

pub fn write_pcm16(path: impl AsRef<Path>, pcm: &[i16], sample_rate: u32) -> Result<()> {
    let data_len = (pcm.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + pcm.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in pcm {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    write_pcm16(path, &w.to_pcm16(), w.sample_rate)
}
