//! RIFF/WAVE reading and writing.
//!
//! Writers always emit IEEE float 32-bit samples (format tag 3) with an
//! 18-byte `fmt ` chunk (`cbSize = 0`) and a `fact` chunk, channels
//! interleaved in W, X, Y, Z order for FOA. Readers additionally accept
//! integer PCM (16/24/32-bit), 64-bit float and WAVE_FORMAT_EXTENSIBLE
//! headers so third-party IR sets and mono corpora can be ingested.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::foa::{FoaSignal, MonoSignal};
use crate::SAMPLE_RATE_HZ;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Decoded channels at their native sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate_hz: u32,
}

/// Encode interleaved f32 samples into a complete WAV byte buffer.
pub fn encode_f32(channels: &[&[f64]], sample_rate_hz: u32) -> Result<Vec<u8>> {
    let count = channels.len();
    if count == 0 || count > u16::MAX as usize {
        return Err(Error::Wav(format!("cannot write {count} channels")));
    }
    let frames = channels[0].len();
    if channels.iter().any(|c| c.len() != frames) {
        return Err(Error::Wav("channels differ in length".into()));
    }
    let data_len = frames * count * 4;
    let riff_len = 4 + (8 + 18) + (8 + 4) + (8 + data_len);
    if riff_len > u32::MAX as usize {
        return Err(Error::Wav("signal too long for RIFF".into()));
    }

    let mut out = Vec::with_capacity(riff_len + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&18u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_FLOAT.to_le_bytes());
    out.extend_from_slice(&(count as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * count as u32 * 4).to_le_bytes());
    out.extend_from_slice(&(count as u16 * 4).to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());

    out.extend_from_slice(b"fact");
    out.extend_from_slice(&4u32.to_le_bytes());
    out.extend_from_slice(&(frames as u32).to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..frames {
        for ch in channels {
            out.extend_from_slice(&(ch[i] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode(bytes: &[u8]) -> Result<WavData> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Wav(format!("chunk {:?} overruns file", String::from_utf8_lossy(id))))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let mut tag = u16_at(body, 0);
                let channels = u16_at(body, 2);
                let rate = u32_at(body, 4);
                let bits = u16_at(body, 14);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(Error::Wav("extensible fmt chunk too short".into()));
                    }
                    tag = u16_at(body, 24);
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    let (tag, channels, rate, bits) = fmt.ok_or_else(|| Error::Wav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("no data chunk".into()))?;
    if channels == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    let width = match (tag, bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_PCM, 24) => 3,
        (FORMAT_PCM, 32) | (FORMAT_FLOAT, 32) => 4,
        (FORMAT_FLOAT, 64) => 8,
        _ => return Err(Error::Wav(format!("unsupported encoding: tag {tag}, {bits} bits"))),
    };
    let frame = width * channels as usize;
    if data.len() % frame != 0 {
        return Err(Error::Wav("data chunk is not a whole number of frames".into()));
    }
    let frames = data.len() / frame;
    let mut out = vec![Vec::with_capacity(frames); channels as usize];
    for f in data.chunks_exact(frame) {
        for (c, s) in f.chunks_exact(width).enumerate() {
            let v = match (tag, width) {
                (FORMAT_PCM, 2) => i16::from_le_bytes([s[0], s[1]]) as f64 / 32_768.0,
                (FORMAT_PCM, 3) => (i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8) as f64 / 8_388_608.0,
                (FORMAT_PCM, 4) => i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64 / 2_147_483_648.0,
                (_, 4) => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
                _ => f64::from_le_bytes(s.try_into().expect("8-byte sample")),
            };
            out[c].push(v);
        }
    }
    Ok(WavData {
        channels: out,
        sample_rate_hz: rate,
    })
}

pub fn read_wav(path: &Path) -> Result<WavData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::parse(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_foa_wav(sig: &FoaSignal, path: &Path) -> Result<()> {
    if sig.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::SampleRateMismatch {
            expected: SAMPLE_RATE_HZ,
            actual: sig.sample_rate_hz,
        });
    }
    let chans: Vec<&[f64]> = sig.channels.iter().map(Vec::as_slice).collect();
    write_bytes(path, &encode_f32(&chans, sig.sample_rate_hz)?)
}

fn expect_rate(data: &WavData) -> Result<()> {
    if data.sample_rate_hz != SAMPLE_RATE_HZ {
        return Err(Error::SampleRateMismatch {
            expected: SAMPLE_RATE_HZ,
            actual: data.sample_rate_hz,
        });
    }
    Ok(())
}

pub fn foa_from_wav(data: WavData) -> Result<FoaSignal> {
    if data.channels.len() != 4 {
        return Err(Error::Wav(format!("expected 4 channels, found {}", data.channels.len())));
    }
    expect_rate(&data)?;
    let channels: [Vec<f64>; 4] = data.channels.try_into().expect("checked length");
    FoaSignal::from_channels(channels, SAMPLE_RATE_HZ)
}

pub fn read_foa_wav(path: &Path) -> Result<FoaSignal> {
    foa_from_wav(read_wav(path)?).map_err(|e| Error::parse(path, e))
}

pub fn write_mono_wav(sig: &MonoSignal, path: &Path) -> Result<()> {
    write_bytes(path, &encode_f32(&[&sig.samples], sig.sample_rate_hz)?)
}

pub fn read_mono_wav(path: &Path) -> Result<MonoSignal> {
    let data = read_wav(path)?;
    if data.channels.len() != 1 {
        return Err(Error::parse(
            path,
            format!("expected 1 channel, found {}", data.channels.len()),
        ));
    }
    expect_rate(&data).map_err(|e| Error::parse(path, e))?;
    let samples = data.channels.into_iter().next().expect("one channel");
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(path, "non-finite sample"));
    }
    Ok(MonoSignal::new(samples))
}
