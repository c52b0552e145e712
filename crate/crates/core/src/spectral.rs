//! Spectrogram rendering, tonality series and octave-folded reduced
//! spectrograms.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::MdctTensor;

/// Default display floor relative to the spectrogram maximum, in dB.
pub const DEFAULT_DB_FLOOR: f64 = -100.0;

/// Squared MDCT amplitudes, blocks x bands x channels in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<f64>,
    blocks: usize,
    bands: usize,
    channels: usize,
    /// Display floor relative to the maximum, in dB.
    pub db_floor: f64,
}

impl Spectrogram {
    pub fn from_vec(
        values: Vec<f64>,
        blocks: usize,
        bands: usize,
        channels: usize,
    ) -> Result<Self> {
        if values.len() != blocks * bands * channels {
            return Err(Error::shape("spectrogram size does not match its shape"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::shape("spectrogram values must be non-negative"));
        }
        Ok(Self {
            values,
            blocks,
            bands,
            channels,
            db_floor: DEFAULT_DB_FLOOR,
        })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize, c: usize) -> f64 {
        self.values[(m * self.bands + k) * self.channels + c]
    }

    /// Channel-averaged power at `(m, k)`.
    pub fn power(&self, m: usize, k: usize) -> f64 {
        (0..self.channels).map(|c| self.get(m, k, c)).sum::<f64>() / self.channels as f64
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Energy per band summed over blocks and channels.
    pub fn band_totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.bands];
        for m in 0..self.blocks {
            for (k, o) in out.iter_mut().enumerate() {
                *o += (0..self.channels).map(|c| self.get(m, k, c)).sum::<f64>();
            }
        }
        out
    }

    /// Band with the most energy.
    pub fn argmax_band(&self) -> usize {
        let totals = self.band_totals();
        (0..totals.len())
            .max_by(|&a, &b| totals[a].total_cmp(&totals[b]))
            .unwrap_or(0)
    }
}

/// `A_k(m)^2` for every block, band and channel.
pub fn spectrogram(tensor: &MdctTensor) -> Spectrogram {
    Spectrogram {
        values: tensor.amplitudes().iter().map(|a| a * a).collect(),
        blocks: tensor.blocks(),
        bands: tensor.bands(),
        channels: tensor.channels(),
        db_floor: DEFAULT_DB_FLOOR,
    }
}

/// 8-bit grayscale raster, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Binary PGM (P5) image.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Writes PGM, or PNG when the path ends in `.png` and the `png`
    /// feature is enabled.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            return self.save_png(path);
        }
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    #[cfg(feature = "png")]
    fn save_png(&self, path: &Path) -> Result<()> {
        let img =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .ok_or_else(|| Error::shape("pixel buffer does not match image size"))?;
        img.save(path)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    #[cfg(not(feature = "png"))]
    fn save_png(&self, _path: &Path) -> Result<()> {
        Err(Error::UnsupportedFormat(
            "PNG output requires the `png` feature".into(),
        ))
    }
}

/// Parses a binary PGM image.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::parse("only 8-bit P5 PGM is supported"));
    }
    let width: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse("bad PGM width"))?;
    let height: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse("bad PGM height"))?;
    let pixels = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::parse("truncated PGM raster"))?
        .to_vec();
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

/// Channel-averaged power in dB mapped linearly onto `[0, 255]` over
/// `[max + db_floor, max]`. Time runs along x; band 0 is the bottom row.
pub fn db_image(spec: &Spectrogram) -> GrayImage {
    let (w, h) = (spec.blocks, spec.bands);
    let mut power = vec![0.0; w * h];
    for m in 0..w {
        for k in 0..h {
            power[k * w + m] = spec.power(m, k);
        }
    }
    let max = power.iter().copied().fold(0.0, f64::max);
    let mut pixels = vec![0u8; w * h];
    if max > 0.0 {
        let top = 10.0 * max.log10();
        let floor_db = top + spec.db_floor;
        let floor_lin = 10f64.powf(floor_db / 10.0);
        for k in 0..h {
            let y = h - 1 - k;
            for m in 0..w {
                let db = 10.0 * power[k * w + m].max(floor_lin).log10();
                let t = ((db - floor_db) / (top - floor_db)).clamp(0.0, 1.0);
                pixels[y * w + m] = (t * 255.0).round() as u8;
            }
        }
    }
    GrayImage {
        width: w,
        height: h,
        pixels,
    }
}

pub fn to_db_image(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    db_image(spec).save(path)
}

/// Mid-gray value representing a zero amplitude.
pub const MID_GRAY: u8 = 128;

/// Signed amplitudes of channel 0: zero is mid-gray, positive values are
/// lighter and negative values darker, with the deviation proportional to
/// `20 log10 |A|` above a floor `db_floor` below the largest magnitude.
pub fn signed_image(tensor: &MdctTensor, db_floor: f64) -> GrayImage {
    let (w, h) = (tensor.blocks(), tensor.bands());
    let peak = (0..w)
        .flat_map(|m| (0..h).map(move |k| (m, k)))
        .map(|(m, k)| tensor.get(m, k, 0).abs())
        .fold(0.0, f64::max);
    let mut pixels = vec![MID_GRAY; w * h];
    if peak > 0.0 {
        let top = 20.0 * peak.log10();
        let floor_db = top + db_floor;
        for k in 0..h {
            let y = h - 1 - k;
            for m in 0..w {
                let a = tensor.get(m, k, 0);
                if a == 0.0 {
                    continue;
                }
                let db = 20.0 * a.abs().log10();
                let t = ((db - floor_db) / (top - floor_db)).clamp(0.0, 1.0);
                let dev = (t * 127.0).round() as i32;
                let v = MID_GRAY as i32 + if a > 0.0 { dev } else { -dev };
                pixels[y * w + m] = v as u8;
            }
        }
    }
    GrayImage {
        width: w,
        height: h,
        pixels,
    }
}

pub fn signed_db_image(tensor: &MdctTensor, path: impl AsRef<Path>) -> Result<()> {
    signed_image(tensor, DEFAULT_DB_FLOOR).save(path)
}

/// CSV with columns `block_index,time_seconds,tau`.
pub fn tonality_csv(per_block: &[f64], bands: usize, sample_rate_hz: u32) -> String {
    let mut out = String::from("block_index,time_seconds,tau\n");
    for (m, tau) in per_block.iter().enumerate() {
        let t = (m * bands) as f64 / sample_rate_hz as f64;
        out.push_str(&format!("{m},{t},{tau}\n"));
    }
    out
}

/// Successively folded spectrograms, `levels[0]` being the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSpectrogram {
    pub levels: Vec<Spectrogram>,
    pub fold_count: usize,
}

impl ReducedSpectrogram {
    pub fn last(&self) -> &Spectrogram {
        self.levels.last().expect("at least the input level")
    }
}

/// Averages adjacent block pairs, halving the block count.
pub fn blur_time(spec: &Spectrogram) -> Result<Spectrogram> {
    if !spec.blocks.is_multiple_of(2) {
        return Err(Error::shape(format!("cannot halve {} blocks", spec.blocks)));
    }
    let row = spec.bands * spec.channels;
    let values = (0..spec.blocks / 2)
        .flat_map(|m| {
            let a = &spec.values[2 * m * row..(2 * m + 1) * row];
            let b = &spec.values[(2 * m + 1) * row..(2 * m + 2) * row];
            a.iter()
                .zip(b)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Spectrogram {
        values,
        blocks: spec.blocks / 2,
        ..*spec
    })
}

/// Folds the top octave onto the one below: bands `2k'` and `2k'+1` of
/// `[N/2, N)` are added to band `k'` of `[N/4, N/2)`. Output has `N/2` bands.
pub fn fold_octave(spec: &Spectrogram) -> Result<Spectrogram> {
    let n = spec.bands;
    if n < 4 || !n.is_multiple_of(4) {
        return Err(Error::shape(format!(
            "cannot fold {n} bands; need a multiple of 4"
        )));
    }
    let half = n / 2;
    let ch = spec.channels;
    let mut values = Vec::with_capacity(spec.blocks * half * ch);
    for m in 0..spec.blocks {
        for k in 0..half {
            for c in 0..ch {
                let mut v = spec.get(m, k, c);
                if k >= n / 4 {
                    v += spec.get(m, 2 * k, c) + spec.get(m, 2 * k + 1, c);
                }
                values.push(v);
            }
        }
    }
    Ok(Spectrogram {
        values,
        bands: half,
        ..*spec
    })
}

/// Applies `folds` rounds of time blur followed by octave folding.
pub fn reduce_spectrogram(spec: &Spectrogram, folds: usize) -> Result<ReducedSpectrogram> {
    let factor = 1usize
        .checked_shl(folds as u32)
        .filter(|&f| f > 0)
        .ok_or_else(|| Error::shape("fold count too large"))?;
    if folds > 0 && (!spec.blocks.is_multiple_of(factor) || !spec.bands.is_multiple_of(2 * factor))
    {
        return Err(Error::shape(format!(
            "{folds} folds need blocks divisible by {factor} and bands divisible by {} \
             (have {} x {})",
            2 * factor,
            spec.blocks,
            spec.bands
        )));
    }
    let mut levels = vec![spec.clone()];
    for _ in 0..folds {
        let blurred = blur_time(levels.last().unwrap())?;
        levels.push(fold_octave(&blurred)?);
    }
    Ok(ReducedSpectrogram {
        levels,
        fold_count: folds,
    })
}
