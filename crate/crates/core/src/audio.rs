//! PCM WAV ingest/emit, band-limited resampling and training-segment slicing.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;

/// Largest value representable by the 16-bit writer, `1 - 2^-15`.
pub const PCM16_MAX: f64 = 1.0 - 1.0 / 32768.0;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Multichannel sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    /// Builds a buffer from per-channel sample vectors.
    ///
    /// Requires one or two channels of equal length and a positive rate.
    pub fn new(channels: Vec<Vec<f64>>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::shape("sample rate must be positive"));
        }
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::shape(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::shape("channels have unequal length"));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate_hz)
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    /// Average of all channels.
    pub fn downmix(&self) -> AudioBuffer {
        let c = self.channels.len() as f64;
        let mixed = (0..self.len())
            .map(|i| self.channels.iter().map(|ch| ch[i]).sum::<f64>() / c)
            .collect();
        AudioBuffer {
            channels: vec![mixed],
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Copy of samples `[start, start + len)` of every channel.
    pub fn window(&self, start: usize, len: usize) -> AudioBuffer {
        AudioBuffer {
            channels: self
                .channels
                .iter()
                .map(|c| c[start..start + len].to_vec())
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Zero-extends every channel to `len` samples (no-op when already longer).
    pub fn zero_padded(&self, len: usize) -> AudioBuffer {
        let mut out = self.clone();
        for ch in &mut out.channels {
            if ch.len() < len {
                ch.resize(len, 0.0);
            }
        }
        out
    }
}

/// Reads a RIFF/WAVE file holding PCM16 or float32 samples.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes)
}

/// Writes `buf` as 16-bit PCM.
pub fn write_wav(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_wav(buf)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::parse("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(Error::parse("truncated WAVE_FORMAT_EXTENSIBLE header"));
        }
        // First two bytes of the subformat GUID carry the real format tag.
        tag = u16_at(body, 24);
    }
    Ok(Format {
        tag,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits: u16_at(body, 14),
    })
}

/// Decodes an in-memory WAV image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::parse("missing RIFF/WAVE header"));
    }
    let mut fmt: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::parse(format!(
                    "chunk {:?} overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::parse("no fmt chunk"))?;
    let data = data.ok_or_else(|| Error::parse("no data chunk"))?;

    let (bytes_per_sample, float) = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => (2usize, false),
        (FORMAT_FLOAT, 32) => (4usize, true),
        (tag, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels",
            fmt.channels
        )));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::parse("sample rate is zero"));
    }
    let nch = fmt.channels as usize;
    let frame = bytes_per_sample * nch;
    if fmt.block_align as usize != frame {
        return Err(Error::parse(format!(
            "block align {} does not match {} channels of {} bytes",
            fmt.block_align, nch, bytes_per_sample
        )));
    }
    if data.len() % frame != 0 {
        return Err(Error::parse(format!(
            "data chunk of {} bytes is not a whole number of {}-byte frames",
            data.len(),
            frame
        )));
    }
    let frames = data.len() / frame;
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for f in data.chunks_exact(frame) {
        for (c, s) in f.chunks_exact(bytes_per_sample).enumerate() {
            let v = if float {
                f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64
            } else {
                i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0
            };
            channels[c].push(v);
        }
    }
    AudioBuffer::new(channels, fmt.sample_rate)
}

/// Quantizes one sample to 16-bit PCM, clamping to `[-1, 1 - 2^-15]`.
pub fn quantize_pcm16(x: f64) -> i16 {
    let clamped = x.clamp(-1.0, PCM16_MAX);
    (clamped * 32768.0).round() as i16
}

/// Encodes `buf` as a canonical 44-byte-header PCM16 WAV image.
pub fn encode_wav(buf: &AudioBuffer) -> Result<Vec<u8>> {
    if buf.channels.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::UnsupportedFormat("non-finite sample".into()));
    }
    let nch = buf.channel_count() as u16;
    let block_align = 2 * nch;
    let data_len = buf.len() * block_align as usize;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&nch.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate_hz * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..buf.len() {
        for ch in &buf.channels {
            out.extend_from_slice(&quantize_pcm16(ch[i]).to_le_bytes());
        }
    }
    if data_len % 2 == 1 {
        out.push(0);
    }
    Ok(out)
}

/// Kaiser window shape parameter of the resampling filter.
pub const RESAMPLE_KAISER_BETA: f64 = 8.0;
/// Filter taps per polyphase branch, counted at the lower of the two rates.
pub const RESAMPLE_TAPS: usize = 64;
/// Cutoff as a fraction of the lower Nyquist frequency. Places the Kaiser
/// transition band below the output Nyquist.
const RESAMPLE_CUTOFF: f64 = 0.9;
/// Above this many phases the polyphase table is not materialised.
const MAX_TABLE_PHASES: usize = 16_384;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct SincFilter {
    up: usize,
    half: usize,
    cutoff: f64,
    i0_beta: f64,
    table: Option<Vec<f64>>,
}

impl SincFilter {
    fn new(up: usize, down: usize) -> Self {
        let ratio = up as f64 / down as f64;
        let stretch = if ratio < 1.0 { 1.0 / ratio } else { 1.0 };
        let half = ((RESAMPLE_TAPS as f64 * stretch) / 2.0).ceil() as usize;
        // Cutoff in cycles per input sample.
        let cutoff = 0.5 * ratio.min(1.0) * RESAMPLE_CUTOFF;
        let mut f = SincFilter {
            up,
            half,
            cutoff,
            i0_beta: bessel_i0(RESAMPLE_KAISER_BETA),
            table: None,
        };
        if up <= MAX_TABLE_PHASES {
            let taps = 2 * half;
            let mut table = vec![0.0; up * taps];
            for (p, row) in table.chunks_mut(taps).enumerate() {
                f.fill_branch(p, row);
            }
            f.table = Some(table);
        }
        f
    }

    fn taps(&self) -> usize {
        2 * self.half
    }

    /// Coefficients for output phase `p`, applied to input samples
    /// `i0 - half + 1 ..= i0 + half`. Each branch is normalised to unit DC gain.
    fn fill_branch(&self, p: usize, out: &mut [f64]) {
        let frac = p as f64 / self.up as f64;
        let span = self.half as f64;
        let fc2 = 2.0 * self.cutoff;
        let mut sum = 0.0;
        for (q, o) in out.iter_mut().enumerate() {
            let d = frac + span - 1.0 - q as f64;
            let x = d / span;
            let kaiser = if x.abs() >= 1.0 {
                0.0
            } else {
                bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta
            };
            let arg = PI * fc2 * d;
            let sinc = if arg.abs() < 1e-12 {
                1.0
            } else {
                arg.sin() / arg
            };
            *o = fc2 * sinc * kaiser;
            sum += *o;
        }
        if sum != 0.0 {
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
    }
}

/// Band-limited polyphase windowed-sinc resampling.
///
/// Output length is `floor(len * target / source)`. Equal rates return an
/// exact copy.
pub fn resample(buf: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer> {
    if target_rate_hz == 0 {
        return Err(Error::shape("target sample rate must be positive"));
    }
    let src = buf.sample_rate_hz as u64;
    let dst = target_rate_hz as u64;
    if src == dst {
        return Ok(buf.clone());
    }
    let g = gcd(src, dst);
    let up = (dst / g) as usize;
    let down = (src / g) as usize;
    let out_len = (buf.len() as u64 * dst / src) as usize;
    let filter = SincFilter::new(up, down);
    let taps = filter.taps();
    let half = filter.half as i64;

    let channels = buf
        .channels
        .iter()
        .map(|input| {
            par::map_range(out_len, |n| {
                let pos = n as u64 * down as u64;
                let i0 = (pos / up as u64) as i64;
                let p = (pos % up as u64) as usize;
                let mut scratch;
                let coeffs: &[f64] = match &filter.table {
                    Some(t) => &t[p * taps..(p + 1) * taps],
                    None => {
                        scratch = vec![0.0; taps];
                        filter.fill_branch(p, &mut scratch);
                        &scratch
                    }
                };
                let first = i0 - half + 1;
                let mut acc = 0.0;
                for (q, &c) in coeffs.iter().enumerate() {
                    let j = first + q as i64;
                    if j >= 0 && (j as usize) < input.len() {
                        acc += c * input[j as usize];
                    }
                }
                acc
            })
        })
        .collect();
    AudioBuffer::new(channels, target_rate_hz)
}

/// Fixed-length segments starting at `0, hop, 2*hop, ...`.
///
/// A trailing partial segment is dropped; a buffer shorter than one segment
/// yields an empty list.
pub fn slice_segments(buf: &AudioBuffer, segment_samples: usize, hop: usize) -> Vec<AudioBuffer> {
    if segment_samples == 0 || hop == 0 || segment_samples > buf.len() {
        return Vec::new();
    }
    (0..=(buf.len() - segment_samples))
        .step_by(hop)
        .map(|start| buf.window(start, segment_samples))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(fmt_tag: u16, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let block_align = channels * bits / 8;
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&fmt_tag.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&44100u32.to_le_bytes());
        v.extend_from_slice(&(44100 * block_align as u32).to_le_bytes());
        v.extend_from_slice(&block_align.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn reads_minimal_pcm16() {
        let data: Vec<u8> = [0i16, 16384, -16384, 32767]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let bytes = wav_bytes(1, 1, 16, &data);
        assert_eq!(bytes.len(), 44 + 8);
        let buf = decode_wav(&bytes).unwrap();
        assert_eq!(buf.sample_rate_hz(), 44100);
        assert_eq!(buf.channel_count(), 1);
        assert_eq!(buf.channel(0), &[0.0, 0.5, -0.5, 32767.0 / 32768.0]);
    }

    #[test]
    fn odd_stereo_data_chunk_is_parse_error() {
        let mut bytes = wav_bytes(1, 2, 16, &[0u8; 7]);
        bytes.push(0); // pad byte
        assert!(matches!(decode_wav(&bytes), Err(Error::Parse(_))));
    }

    #[test]
    fn pcm24_is_unsupported() {
        let bytes = wav_bytes(1, 1, 24, &[0u8; 6]);
        assert!(matches!(
            decode_wav(&bytes),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn float32_is_read() {
        let data: Vec<u8> = [0.25f32, -1.0]
            .iter()
            .flat_map(|s| s.to_le_bytes())
            .collect();
        let buf = decode_wav(&wav_bytes(3, 1, 32, &data)).unwrap();
        assert_eq!(buf.channel(0), &[0.25, -1.0]);
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let mut bytes = wav_bytes(1, 1, 16, &[1, 0]);
        // Insert an odd-sized LIST chunk (with pad byte) before "fmt ".
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), &[7, 7, 7, 0]].concat();
        bytes.splice(12..12, list);
        let buf = decode_wav(&bytes).unwrap();
        assert_eq!(buf.channel(0), &[1.0 / 32768.0]);
    }

    #[test]
    fn garbage_is_parse_error() {
        assert!(matches!(decode_wav(b"hello"), Err(Error::Parse(_))));
    }

    #[test]
    fn zero_and_clamp_roundtrip() {
        let buf = AudioBuffer::mono(vec![0.0, 2.0, -3.0], 22016).unwrap();
        let back = decode_wav(&encode_wav(&buf).unwrap()).unwrap();
        assert_eq!(back.sample_rate_hz(), 22016);
        assert_eq!(back.channel(0), &[0.0, PCM16_MAX, -1.0]);
    }

    #[test]
    fn non_finite_rejected() {
        let buf = AudioBuffer::mono(vec![f64::NAN], 8000).unwrap();
        assert!(encode_wav(&buf).is_err());
    }

    #[test]
    fn buffer_invariants() {
        assert!(AudioBuffer::new(vec![vec![0.0; 3], vec![0.0; 2]], 8000).is_err());
        assert!(AudioBuffer::mono(vec![0.0], 0).is_err());
        assert!(AudioBuffer::new(vec![], 8000).is_err());
    }

    #[test]
    fn slicing() {
        let buf = AudioBuffer::mono((0..10).map(|i| i as f64).collect(), 100).unwrap();
        let s = slice_segments(&buf, 4, 4);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].channel(0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(s[1].channel(0), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(slice_segments(&buf, 4, 2).len(), 4);
        let short = AudioBuffer::mono(vec![0.0; 3], 100).unwrap();
        assert!(slice_segments(&short, 4, 1).is_empty());
    }

    #[test]
    fn resample_identity_is_exact() {
        let buf = AudioBuffer::mono(vec![0.1, -0.7, 0.3], 44100).unwrap();
        assert_eq!(resample(&buf, 44100).unwrap(), buf);
    }

    #[test]
    fn resample_length_rounds_down() {
        let buf = AudioBuffer::mono(vec![0.0; 1001], 44100).unwrap();
        let out = resample(&buf, 22016).unwrap();
        assert_eq!(out.len(), 1001 * 22016 / 44100);
        assert_eq!(out.sample_rate_hz(), 22016);
    }

    #[test]
    fn resample_preserves_dc_in_interior() {
        let buf = AudioBuffer::mono(vec![0.5; 4000], 44100).unwrap();
        let out = resample(&buf, 22016).unwrap();
        for &x in &out.channel(0)[200..out.len() - 200] {
            assert!((x - 0.5).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn bessel_matches_known_value() {
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
    }
}
