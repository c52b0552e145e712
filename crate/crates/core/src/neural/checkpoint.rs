//! Binary checkpoint: magic `MP3N`, version, a `key = value` config echo
//! and named float64 parameter tensors (all integers little-endian u32
//! unless noted).

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::MdctTensor;

use super::graph::Graph;
use super::model::{generator, ModelConfig, Params};
use super::tensor::Tensor4;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MP3N";
pub const CHECKPOINT_VERSION: u32 = 1;

const GEN_PREFIX: &str = "generator/";
const DISC_PREFIX: &str = "discriminator/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub sample_rate_hz: u32,
    pub iteration: u64,
    pub generator: Params,
    pub discriminator: Params,
}

fn config_echo(c: &Checkpoint) -> String {
    let m = &c.model;
    let ch: Vec<String> = m.channel_schedule().iter().map(|v| v.to_string()).collect();
    format!(
        "latent_dim = {}\nnum_blocks = {}\nseed_blocks = {}\nseed_bands = {}\nchannels = {}\n\
         output_channels = {}\nsample_rate_hz = {}\niteration = {}\n",
        m.latent_dim,
        m.num_blocks,
        m.seed_blocks,
        m.seed_bands,
        ch.join(","),
        m.output_channels,
        c.sample_rate_hz,
        c.iteration
    )
}

fn parse_echo(text: &str) -> Result<(ModelConfig, u32, u64)> {
    let mut m = ModelConfig::default();
    let (mut rate, mut iteration) = (None, 0u64);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("bad config line {line:?}")))?;
        let v = v.trim();
        let num = || -> Result<u64> {
            v.parse()
                .map_err(|_| Error::parse(format!("bad value {v:?} for {}", k.trim())))
        };
        match k.trim() {
            "latent_dim" => m.latent_dim = num()? as usize,
            "num_blocks" => m.num_blocks = num()? as usize,
            "seed_blocks" => m.seed_blocks = num()? as usize,
            "seed_bands" => m.seed_bands = num()? as usize,
            "output_channels" => m.output_channels = num()? as usize,
            "sample_rate_hz" => rate = Some(num()? as u32),
            "iteration" => iteration = num()?,
            "channels" => {
                m.channels = v
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| Error::parse(format!("bad channels {v:?}")))
                    })
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::parse(format!("unknown config key {other:?}"))),
        }
    }
    let rate = rate.ok_or_else(|| Error::parse("config echo lacks sample_rate_hz"))?;
    Ok((m, rate, iteration))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse("checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::parse("checkpoint string is not UTF-8"))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let echo = config_echo(self);
        put_u32(&mut out, echo.len());
        out.extend_from_slice(echo.as_bytes());
        let all: Vec<(String, &Tensor4)> = self
            .generator
            .entries()
            .iter()
            .map(|(n, t)| (format!("{GEN_PREFIX}{n}"), t))
            .chain(
                self.discriminator
                    .entries()
                    .iter()
                    .map(|(n, t)| (format!("{DISC_PREFIX}{n}"), t)),
            )
            .collect();
        put_u32(&mut out, all.len());
        for (name, t) in all {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            for d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::parse("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "checkpoint version {version}"
            )));
        }
        let (model, sample_rate_hz, iteration) = parse_echo(&r.string()?)?;
        let count = r.u32()? as usize;
        let (mut gen, mut disc) = (Vec::new(), Vec::new());
        for _ in 0..count {
            let name = r.string()?;
            let shape = [
                r.u32()? as usize,
                r.u32()? as usize,
                r.u32()? as usize,
                r.u32()? as usize,
            ];
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::parse("tensor too large"))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor4::new(shape, data).map_err(|e| Error::parse(e.to_string()))?;
            if let Some(n) = name.strip_prefix(GEN_PREFIX) {
                gen.push((n.to_string(), t));
            } else if let Some(n) = name.strip_prefix(DISC_PREFIX) {
                disc.push((n.to_string(), t));
            } else {
                return Err(Error::parse(format!("unexpected tensor {name:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::parse("trailing bytes after checkpoint"));
        }
        let ck = Checkpoint {
            model,
            sample_rate_hz,
            iteration,
            generator: Params::from_entries(gen),
            discriminator: Params::from_entries(disc),
        };
        ck.model.validate()?;
        ck.generator.check(&ck.model.generator_params())?;
        ck.discriminator.check(&ck.model.discriminator_params())?;
        Ok(ck)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Fresh randomly initialized networks.
    pub fn random(model: ModelConfig, sample_rate_hz: u32, seed: u64) -> Result<Self> {
        model.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generator = Params::init(&model.generator_params(), &mut rng);
        let discriminator = Params::init(&model.discriminator_params(), &mut rng);
        Ok(Self {
            model,
            sample_rate_hz,
            iteration: 0,
            generator,
            discriminator,
        })
    }

    /// Runs the generator on `count` latents `z ~ N(0, I)`.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<MdctTensor>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, c) = self.model.output_shape();
        let mut out = Vec::with_capacity(count);
        let mut left = count;
        while left > 0 {
            let b = left.min(8);
            let mut g = Graph::new();
            let p = self.generator.bind(&mut g);
            let z = g.leaf(Tensor4::randn(
                [b, 1, 1, self.model.latent_dim],
                1.0,
                &mut rng,
            ));
            let y = generator(&mut g, &self.model, &p, z)?;
            for i in 0..b {
                let item = g.value(y).batch_item(i).into_data();
                out.push(MdctTensor::from_vec(item, m, n, c, self.sample_rate_hz)?);
            }
            left -= b;
        }
        Ok(out)
    }
}
