use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::info;
use mdctgan::audio::{read_wav, resample, slice_segments, write_wav};
use mdctgan::mdct::Mdct;
use mdctgan::neural::{train_with_progress, Checkpoint, ModelConfig, ShapeTable, TrainOutcome};
use mdctgan::psycho::{bark_partition, psychoacoustic_noise, PsychoModel};
use mdctgan::spectral::{
    db_image, reduce_spectrogram, signed_image, spectrogram, tonality_csv, ReducedSpectrogram,
};
use mdctgan::synth::ToneCorpus;
use mdctgan::{AudioBuffer, MdctTensor};

use crate::config::AppConfig;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::compute(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::compute(format!("cannot write {}: {e}", path.display())))
}

fn read_input(path: &Path) -> Result<AudioBuffer, CliError> {
    read_wav(path).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

/// Zero-pads to a whole number of blocks.
fn pad_to_blocks(buf: &AudioBuffer, bands: usize) -> AudioBuffer {
    let len = buf.len().div_ceil(bands).max(1) * bands;
    buf.zero_padded(len)
}

/// Reads a WAV at the configured rate and transforms it.
fn load_tensor(cfg: &AppConfig, wav: &Path) -> Result<MdctTensor, CliError> {
    let buf = read_input(wav)?;
    let buf = if buf.sample_rate_hz() == cfg.sample_rate_hz {
        buf
    } else {
        info!(
            "resampling {} Hz -> {} Hz",
            buf.sample_rate_hz(),
            cfg.sample_rate_hz
        );
        resample(&buf, cfg.sample_rate_hz)?
    };
    Ok(Mdct::new(cfg.mdct_bands)?.forward(&pad_to_blocks(&buf, cfg.mdct_bands))?)
}

fn psycho_model(cfg: &AppConfig, sample_rate_hz: u32) -> Result<PsychoModel, CliError> {
    Ok(PsychoModel::new(
        bark_partition(sample_rate_hz, cfg.mdct_bands)?,
        cfg.psycho(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeReport {
    pub blocks: usize,
    pub bands: usize,
    pub channels: usize,
    pub argmax_band: usize,
    pub mean_tonality: f64,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for AnalyzeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} blocks x {} bands x {} channels",
            self.blocks, self.bands, self.channels
        )?;
        writeln!(f, "loudest band: {}", self.argmax_band)?;
        writeln!(f, "mean tonality: {:.4}", self.mean_tonality)?;
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Spectrogram and signed-amplitude images, per-block tonality and masking
/// thresholds (of the channel downmix).
pub fn analyze(cfg: &AppConfig, wav: &Path, out_dir: &Path) -> Result<AnalyzeReport, CliError> {
    let tensor = load_tensor(cfg, wav)?;
    create_dir(out_dir)?;
    let mut spec = spectrogram(&tensor);
    spec.db_floor = cfg.db_floor;
    let mono = tensor.downmix();
    let thresholds = psycho_model(cfg, cfg.sample_rate_hz)?.analyze(&mono, 0);

    let files = vec![
        out_dir.join("spectrogram.pgm"),
        out_dir.join("signed_amplitudes.pgm"),
        out_dir.join("tonality.csv"),
        out_dir.join("thresholds.csv"),
        out_dir.join("transform.mdct"),
    ];
    write_file(&files[0], &db_image(&spec).to_pgm())?;
    write_file(&files[1], &signed_image(&tensor, cfg.db_floor).to_pgm())?;
    let csv = tonality_csv(
        &thresholds.tonality_per_block,
        tensor.bands(),
        cfg.sample_rate_hz,
    );
    write_file(&files[2], csv.as_bytes())?;
    write_file(&files[3], thresholds.to_csv().as_bytes())?;
    write_file(&files[4], &tensor.to_bytes())?;

    Ok(AnalyzeReport {
        blocks: tensor.blocks(),
        bands: tensor.bands(),
        channels: tensor.channels(),
        argmax_band: spec.argmax_band(),
        mean_tonality: thresholds.mean_tonality(),
        files,
    })
}

/// Added noise in one Bark band, averaged over blocks, bins and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BandNoise {
    pub band: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub bins: usize,
    /// Mean squared amplitude change per bin.
    pub noise_power: f64,
    /// `(c/2)^2 * threshold` per bin.
    pub predicted: f64,
    /// `threshold / 4`, the power of an error of half a quantization step.
    pub bound: f64,
}

impl BandNoise {
    pub fn ratio_to_prediction(&self) -> f64 {
        self.noise_power / self.predicted
    }

    pub fn ratio_to_bound(&self) -> f64 {
        self.noise_power / self.bound
    }

    /// Beyond the bound by more than Monte-Carlo scatter allows.
    pub fn audible(&self) -> bool {
        self.ratio_to_bound() > AUDIBLE_MARGIN
    }
}

/// Tolerance on the noise-to-bound ratio before a band is flagged.
pub const AUDIBLE_MARGIN: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripReport {
    pub noise_scale: f64,
    pub blocks: usize,
    /// Non-empty Bark bands only.
    pub bands: Vec<BandNoise>,
}

impl RoundtripReport {
    pub fn audible_bands(&self) -> Vec<usize> {
        self.bands
            .iter()
            .filter(|b| b.audible())
            .map(|b| b.band)
            .collect()
    }
}

impl fmt::Display for RoundtripReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "noise scale c = {}, {} blocks",
            self.noise_scale, self.blocks
        )?;
        writeln!(
            f,
            "{:>4} {:>16} {:>5} {:>12} {:>12} {:>10} {:>9}  flag",
            "band", "range_hz", "bins", "noise", "predicted", "measured/", "ntr_db"
        )?;
        for b in &self.bands {
            let ratio = if b.predicted > 0.0 {
                format!("{:.3}", b.ratio_to_prediction())
            } else {
                "-".into()
            };
            writeln!(
                f,
                "{:>4} {:>16} {:>5} {:>12.4e} {:>12.4e} {:>10} {:>9.2}  {}",
                b.band,
                format!("{:.0}-{:.0}", b.low_hz, b.high_hz),
                b.bins,
                b.noise_power,
                b.predicted,
                ratio,
                10.0 * b.ratio_to_bound().log10(),
                if b.audible() { "AUDIBLE" } else { "ok" }
            )?;
        }
        let audible = self.audible_bands();
        if audible.is_empty() {
            writeln!(f, "all bands within the threshold")
        } else {
            writeln!(
                f,
                "{} bands exceed the threshold: {audible:?}",
                audible.len()
            )
        }
    }
}

/// WAV -> MDCT -> noise(c) -> IMDCT -> WAV at the file's own sample rate.
pub fn roundtrip(
    cfg: &AppConfig,
    wav: &Path,
    out_wav: &Path,
    noise_scale: f64,
) -> Result<RoundtripReport, CliError> {
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(CliError::usage(format!(
            "--noise must be >= 0, got {noise_scale}"
        )));
    }
    let input = read_input(wav)?;
    let rate = input.sample_rate_hz();
    let mdct = Mdct::new(cfg.mdct_bands)?;
    let clean = mdct.forward(&pad_to_blocks(&input, cfg.mdct_bands))?;
    let model = psycho_model(cfg, rate)?;
    let noisy = psychoacoustic_noise(&clean, &model, noise_scale, cfg.seed);
    let out = mdct.inverse(&noisy)?.window(0, input.len());
    if let Some(dir) = out_wav.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_wav(&out, out_wav)
        .map_err(|e| CliError::compute(format!("cannot write {}: {e}", out_wav.display())))?;

    let partition = model.partition();
    let edges = partition.band_edges_hz();
    let channels = clean.channels();
    let per_channel: Vec<_> = (0..channels).map(|c| model.analyze(&clean, c)).collect();
    let mut bands = Vec::new();
    for j in 0..partition.band_count() {
        let bins = partition.band_bins(j);
        if bins.is_empty() {
            continue;
        }
        let mut noise = 0.0;
        let mut threshold = 0.0;
        for (c, th) in per_channel.iter().enumerate() {
            for m in 0..clean.blocks() {
                threshold += th.combined_at(m, j);
                for k in bins.clone() {
                    let d = noisy.get(m, k, c) - clean.get(m, k, c);
                    noise += d * d;
                }
            }
        }
        let cells = (clean.blocks() * channels) as f64;
        let threshold = threshold / cells;
        bands.push(BandNoise {
            band: j,
            low_hz: edges[j],
            high_hz: edges[j + 1],
            bins: bins.len(),
            noise_power: noise / (cells * bins.len() as f64),
            predicted: noise_scale * noise_scale / 4.0 * threshold,
            bound: threshold / 4.0,
        });
    }
    Ok(RoundtripReport {
        noise_scale,
        blocks: clean.blocks(),
        bands,
    })
}

/// Writes `level_0.pgm` .. `level_<folds>.pgm`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceReport {
    pub files: Vec<PathBuf>,
    pub reduced: ReducedSpectrogram,
}

impl ReduceReport {
    /// Band row holding the most energy at `level`, with its share of the
    /// level's total.
    pub fn dominant_row(&self, level: usize) -> (usize, f64) {
        let spec = &self.reduced.levels[level];
        let rows = spec.band_totals();
        let total: f64 = rows.iter().sum();
        let k = spec.argmax_band();
        (k, if total > 0.0 { rows[k] / total } else { 0.0 })
    }
}

impl fmt::Display for ReduceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (level, path)) in self.reduced.levels.iter().zip(&self.files).enumerate() {
            let (k, share) = self.dominant_row(i);
            writeln!(
                f,
                "level {i}: {} x {}, band {k} holds {:.1}% of the energy -> {}",
                level.blocks(),
                level.bands(),
                100.0 * share,
                path.display()
            )?;
        }
        Ok(())
    }
}

pub fn reduce(
    cfg: &AppConfig,
    wav: &Path,
    folds: usize,
    out_dir: &Path,
) -> Result<ReduceReport, CliError> {
    let tensor = load_tensor(cfg, wav)?;
    let factor = 1usize
        .checked_shl(folds as u32)
        .filter(|f| *f > 0)
        .ok_or_else(|| {
            CliError::compute(format!("{folds} folds is far beyond any spectrogram size"))
        })?;
    let usable = tensor.blocks() / factor * factor;
    if usable == 0 {
        return Err(CliError::compute(format!(
            "{folds} folds need at least {factor} blocks (a multiple of {factor}); the file has {}",
            tensor.blocks()
        )));
    }
    let mut spec = spectrogram(&tensor.truncate_blocks(usable));
    spec.db_floor = cfg.db_floor;
    let reduced = reduce_spectrogram(&spec, folds)?;
    create_dir(out_dir)?;
    let mut files = Vec::new();
    for (i, level) in reduced.levels.iter().enumerate() {
        let mut level = level.clone();
        level.db_floor = cfg.db_floor;
        let path = out_dir.join(format!("level_{i}.pgm"));
        write_file(&path, &db_image(&level).to_pgm())?;
        files.push(path);
    }
    Ok(ReduceReport { files, reduced })
}

/// Parses `MxN`, accepting `x`, `X` or `×` as the separator.
pub fn parse_seed_shape(s: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).map(str::trim).collect();
    match parts.as_slice() {
        [m, n] => match (m.parse(), n.parse()) {
            (Ok(m), Ok(n)) => Ok((m, n)),
            _ => Err(CliError::usage(format!(
                "bad seed shape {s:?}; expected MxN"
            ))),
        },
        _ => Err(CliError::usage(format!(
            "bad seed shape {s:?}; expected MxN"
        ))),
    }
}

/// Activation shapes and parameter counts. Any invalid setting is a usage
/// error.
pub fn shapes(model: &ModelConfig) -> Result<ShapeTable, CliError> {
    model
        .shape_table()
        .map_err(|e| CliError::usage(e.to_string()))
}

/// Builds the training set: synthetic tones or segments of every WAV in the
/// dataset directory, shaped like the generator output.
pub fn dataset(cfg: &AppConfig) -> Result<Vec<MdctTensor>, CliError> {
    let (m, n, c) = cfg.model.output_shape();
    if n != cfg.mdct_bands {
        return Err(CliError::config(format!(
            "model output has {n} bands but mdct_bands = {}",
            cfg.mdct_bands
        )));
    }
    let tensors = match &cfg.data.dataset_dir {
        None => {
            // Dataset and training draw from distinct streams of the one seed.
            let mono = ToneCorpus::default().dataset(
                cfg.data.count,
                m,
                n,
                cfg.sample_rate_hz,
                cfg.seed.wrapping_add(1),
            )?;
            mono.iter()
                .map(|t| widen(t, c))
                .collect::<Result<Vec<_>, _>>()?
        }
        Some(dir) => wav_segments(cfg, dir, m, c)?,
    };
    if tensors.is_empty() {
        return Err(CliError::config("dataset is empty".to_string()));
    }
    Ok(tensors)
}

/// Repeats a mono tensor across `channels`.
fn widen(t: &MdctTensor, channels: usize) -> Result<MdctTensor, CliError> {
    if channels == t.channels() {
        return Ok(t.clone());
    }
    let v = t
        .amplitudes()
        .iter()
        .flat_map(|&a| std::iter::repeat_n(a, channels))
        .collect();
    Ok(MdctTensor::from_vec(
        v,
        t.blocks(),
        t.bands(),
        channels,
        t.sample_rate_hz(),
    )?)
}

fn wav_segments(
    cfg: &AppConfig,
    dir: &Path,
    blocks: usize,
    channels: usize,
) -> Result<Vec<MdctTensor>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::parse(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    let mdct = Mdct::new(cfg.mdct_bands)?;
    let seg = blocks * cfg.mdct_bands;
    let mut out = Vec::new();
    for p in paths {
        let buf = resample(&read_input(&p)?, cfg.sample_rate_hz)?;
        let buf = match (buf.channel_count(), channels) {
            (a, b) if a == b => buf,
            (_, 1) => buf.downmix(),
            (1, c) => AudioBuffer::new(vec![buf.channel(0).to_vec(); c], buf.sample_rate_hz())?,
            (a, b) => {
                return Err(CliError::config(format!(
                    "{} has {a} channels; the model needs {b}",
                    p.display()
                )))
            }
        };
        for s in slice_segments(&buf, seg, seg) {
            out.push(mdct.forward(&s)?);
        }
    }
    Ok(out)
}

/// Trains on the configured dataset, writing `losses.csv` and checkpoints
/// under `out_dir`.
pub fn train(cfg: &AppConfig, out_dir: &Path) -> Result<TrainOutcome, CliError> {
    let data = dataset(cfg)?;
    info!(
        "training {} iterations on {} samples of {:?}",
        cfg.train.iterations,
        data.len(),
        cfg.model.output_shape()
    );
    create_dir(out_dir)?;
    let every = (cfg.train.iterations / 20).max(1);
    let outcome = train_with_progress(
        &data,
        cfg.model.clone(),
        cfg.train.clone(),
        cfg.psycho(),
        Some(out_dir),
        |s| {
            if s.iteration % every == 0 {
                info!(
                    "iter {:>6}  loss_d {:>10.4}  loss_g {:>10.4}  w {:>9.4}  tau {:.4}",
                    s.iteration, s.loss_d, s.loss_g, s.wasserstein, s.gen_tonality
                );
            }
        },
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub files: Vec<PathBuf>,
    pub samples_per_file: usize,
    pub elapsed: Duration,
}

impl fmt::Display for SampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        writeln!(
            f,
            "sampled {} files of {} samples in {:.3} s",
            self.files.len(),
            self.samples_per_file,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Draws `count` latents, runs the generator and writes one WAV each.
pub fn sample(
    checkpoint: &Path,
    count: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<SampleReport, CliError> {
    if count == 0 {
        return Err(CliError::usage("--count must be >= 1".to_string()));
    }
    let ck = Checkpoint::read(checkpoint)
        .map_err(|e| CliError::parse(format!("{}: {e}", checkpoint.display())))?;
    let start = Instant::now();
    let (_, bands, _) = ck.model.output_shape();
    let mdct = Mdct::new(bands)?;
    let audio = ck
        .generate(count, seed)?
        .iter()
        .map(|t| mdct.inverse(t))
        .collect::<Result<Vec<_>, _>>()?;
    let elapsed = start.elapsed();
    create_dir(out_dir)?;
    let mut files = Vec::new();
    for (i, buf) in audio.iter().enumerate() {
        let path = out_dir.join(format!("sample_{i:03}.wav"));
        write_wav(buf, &path)
            .map_err(|e| CliError::compute(format!("cannot write {}: {e}", path.display())))?;
        files.push(path);
    }
    Ok(SampleReport {
        files,
        samples_per_file: audio.first().map_or(0, AudioBuffer::len),
        elapsed,
    })
}
