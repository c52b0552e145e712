//! Generator and critic networks built from octave up/downsampling blocks.
//!
//! Activation layout is `[batch, blocks M, bands N, channels]`. Each
//! generator block quadruples `M` and appends one octave (doubles `N`); each
//! critic block undoes one generator block.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::tensor::{Shape, Tensor4};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const MAX_CHANNELS: usize = 512;

/// Kernel for the ×4 time resampling convolutions.
pub const TIME_KERNEL: (usize, usize) = (8, 3);
pub const TIME_STRIDE: (usize, usize) = (4, 1);
/// Kernel for octave synthesis/analysis along the band axis.
pub const OCTAVE_KERNEL: (usize, usize) = (1, 4);
pub const OCTAVE_STRIDE: (usize, usize) = (1, 2);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub num_blocks: usize,
    /// Seed activation size `(M0, N0)`.
    pub seed_blocks: usize,
    pub seed_bands: usize,
    /// Feature channels per depth `0..=num_blocks`; empty selects
    /// [`default_channels`].
    pub channels: Vec<usize>,
    pub output_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 512,
            num_blocks: 6,
            seed_blocks: 4,
            seed_bands: 2,
            channels: Vec::new(),
            output_channels: 2,
        }
    }
}

/// `min(512, 16 * 2^(num_blocks - d))` for depth `d`.
pub fn default_channels(num_blocks: usize) -> Vec<usize> {
    (0..=num_blocks)
        .map(|d| {
            let e = (num_blocks - d).min(20) as u32;
            (16usize << e).min(MAX_CHANNELS)
        })
        .collect()
}

impl ModelConfig {
    pub fn channel_schedule(&self) -> Vec<usize> {
        if self.channels.is_empty() {
            default_channels(self.num_blocks)
        } else {
            self.channels.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::shape(m));
        if self.latent_dim == 0 || self.output_channels == 0 || self.seed_blocks == 0 {
            return bad("latent_dim, output_channels and seed_blocks must be >= 1".into());
        }
        if self.num_blocks > 12 {
            return bad(format!("num_blocks {} is too large", self.num_blocks));
        }
        if self.num_blocks > 0 && (self.seed_bands < 2 || !self.seed_bands.is_multiple_of(2)) {
            return bad(format!(
                "seed_bands must be even and >= 2 to split octaves, got {}",
                self.seed_bands
            ));
        }
        if self.seed_bands == 0 {
            return bad("seed_bands must be >= 1".into());
        }
        let ch = self.channel_schedule();
        if ch.len() != self.num_blocks + 1 {
            return bad(format!(
                "channel schedule needs {} entries, got {}",
                self.num_blocks + 1,
                ch.len()
            ));
        }
        if let Some(c) = ch.iter().find(|&&c| c == 0 || c > MAX_CHANNELS) {
            return bad(format!("channel count {c} outside 1..={MAX_CHANNELS}"));
        }
        Ok(())
    }

    /// Activation size `(M, N)` after `depth` generator blocks.
    pub fn spatial(&self, depth: usize) -> (usize, usize) {
        (self.seed_blocks << (2 * depth), self.seed_bands << depth)
    }

    /// `(M0 4^b, N0 2^b, output_channels)`.
    pub fn output_shape(&self) -> (usize, usize, usize) {
        let (m, n) = self.spatial(self.num_blocks);
        (m, n, self.output_channels)
    }

    fn seed_features(&self) -> usize {
        self.seed_blocks * self.seed_bands * self.channel_schedule()[0]
    }

    pub fn generator_params(&self) -> Vec<ParamSpec> {
        let ch = self.channel_schedule();
        let mut p = Vec::new();
        let f = self.seed_features();
        p.push(ParamSpec::weight(
            "dense.w",
            [self.latent_dim, 1, 1, f],
            self.latent_dim,
        ));
        p.push(ParamSpec::bias("dense.b", f));
        for d in 1..=self.num_blocks {
            let (cin, c) = (ch[d - 1], ch[d]);
            let t = TIME_KERNEL.0 * TIME_KERNEL.1 / (TIME_STRIDE.0 * TIME_STRIDE.1);
            let o = OCTAVE_KERNEL.0 * OCTAVE_KERNEL.1 / (OCTAVE_STRIDE.0 * OCTAVE_STRIDE.1);
            p.push(ParamSpec::weight(
                &format!("block{d}.up.w"),
                [TIME_KERNEL.0, TIME_KERNEL.1, c, cin],
                t * cin,
            ));
            p.push(ParamSpec::bias(&format!("block{d}.up.b"), c));
            p.push(ParamSpec::weight(
                &format!("block{d}.octave.w"),
                [OCTAVE_KERNEL.0, OCTAVE_KERNEL.1, c, c],
                o * c,
            ));
            p.push(ParamSpec::bias(&format!("block{d}.octave.b"), c));
            p.push(ParamSpec::weight(
                &format!("block{d}.balance.w"),
                [1, 1, c, c],
                c,
            ));
            p.push(ParamSpec::bias(&format!("block{d}.balance.b"), c));
        }
        let last = ch[self.num_blocks];
        p.push(ParamSpec::weight(
            "out.w",
            [1, 1, last, self.output_channels],
            last,
        ));
        p.push(ParamSpec::bias("out.b", self.output_channels));
        p
    }

    pub fn discriminator_params(&self) -> Vec<ParamSpec> {
        let ch = self.channel_schedule();
        let b = self.num_blocks;
        let mut p = Vec::new();
        p.push(ParamSpec::weight(
            "in.w",
            [1, 1, self.output_channels, ch[b]],
            self.output_channels,
        ));
        p.push(ParamSpec::bias("in.b", ch[b]));
        for d in (1..=b).rev() {
            let cin = ch[d] + usize::from(d == 1);
            let cout = ch[d - 1];
            p.push(ParamSpec::weight(
                &format!("block{d}.octave.w"),
                [OCTAVE_KERNEL.0, OCTAVE_KERNEL.1, cin, cin],
                OCTAVE_KERNEL.0 * OCTAVE_KERNEL.1 * cin,
            ));
            p.push(ParamSpec::bias(&format!("block{d}.octave.b"), cin));
            p.push(ParamSpec::weight(
                &format!("block{d}.balance.w"),
                [1, 1, cin, cin],
                cin,
            ));
            p.push(ParamSpec::bias(&format!("block{d}.balance.b"), cin));
            p.push(ParamSpec::weight(
                &format!("block{d}.down.w"),
                [TIME_KERNEL.0, TIME_KERNEL.1, cin, cout],
                TIME_KERNEL.0 * TIME_KERNEL.1 * cin,
            ));
            p.push(ParamSpec::bias(&format!("block{d}.down.b"), cout));
        }
        let f = self.seed_features()
            + if b == 0 {
                self.seed_blocks * self.seed_bands
            } else {
                0
            };
        p.push(ParamSpec::weight("score.w", [f, 1, 1, 1], f));
        p.push(ParamSpec::bias("score.b", 1));
        p
    }

    /// Per-stage activation shapes and parameter counts.
    pub fn shape_table(&self) -> Result<ShapeTable> {
        self.validate()?;
        let ch = self.channel_schedule();
        let count = |specs: &[ParamSpec], pred: &dyn Fn(&str) -> bool| -> usize {
            specs
                .iter()
                .filter(|s| pred(&s.name))
                .map(|s| s.shape.iter().product::<usize>())
                .sum()
        };
        let gp = self.generator_params();
        let dp = self.discriminator_params();
        let block = |d: usize| move |n: &str| n.starts_with(&format!("block{d}."));

        let mut generator = vec![ShapeRow::new("latent", (1, 1, self.latent_dim), 0)];
        let (m0, n0) = self.spatial(0);
        generator.push(ShapeRow::new(
            "seed",
            (m0, n0, ch[0]),
            count(&gp, &|n| n.starts_with("dense.")),
        ));
        for d in 1..=self.num_blocks {
            let (m, n) = self.spatial(d);
            generator.push(ShapeRow::new(
                &format!("block{d}"),
                (m, n, ch[d]),
                count(&gp, &block(d)),
            ));
        }
        let (m, n, c) = self.output_shape();
        generator.push(ShapeRow::new(
            "output",
            (m, n, c),
            count(&gp, &|n| n.starts_with("out.")),
        ));

        let mut discriminator = vec![ShapeRow::new("input", (m, n, c), 0)];
        let b = self.num_blocks;
        let (mb, nb) = self.spatial(b);
        discriminator.push(ShapeRow::new(
            "from_mdct",
            (mb, nb, ch[b]),
            count(&dp, &|n| n.starts_with("in.")),
        ));
        for d in (1..=b).rev() {
            if d == 1 {
                let (m, n) = self.spatial(1);
                discriminator.push(ShapeRow::new("minibatch_stddev", (m, n, ch[1] + 1), 0));
            }
            let (m, n) = self.spatial(d - 1);
            discriminator.push(ShapeRow::new(
                &format!("block{d}"),
                (m, n, ch[d - 1]),
                count(&dp, &block(d)),
            ));
        }
        if b == 0 {
            discriminator.push(ShapeRow::new("minibatch_stddev", (m0, n0, ch[0] + 1), 0));
        }
        discriminator.push(ShapeRow::new(
            "score",
            (1, 1, 1),
            count(&dp, &|n| n.starts_with("score.")),
        ));
        Ok(ShapeTable {
            generator,
            discriminator,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRow {
    pub stage: String,
    pub shape: (usize, usize, usize),
    pub params: usize,
}

impl ShapeRow {
    fn new(stage: &str, shape: (usize, usize, usize), params: usize) -> Self {
        Self {
            stage: stage.to_string(),
            shape,
            params,
        }
    }

    /// `"M × N × C"`.
    pub fn shape_string(&self) -> String {
        format!("{} × {} × {}", self.shape.0, self.shape.1, self.shape.2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTable {
    pub generator: Vec<ShapeRow>,
    pub discriminator: Vec<ShapeRow>,
}

impl ShapeTable {
    pub fn generator_params(&self) -> usize {
        self.generator.iter().map(|r| r.params).sum()
    }

    pub fn discriminator_params(&self) -> usize {
        self.discriminator.iter().map(|r| r.params).sum()
    }
}

impl fmt::Display for ShapeTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (title, rows, total) in [
            ("generator", &self.generator, self.generator_params()),
            (
                "discriminator",
                &self.discriminator,
                self.discriminator_params(),
            ),
        ] {
            writeln!(f, "{title}")?;
            writeln!(f, "  {:<18} {:>24} {:>12}", "stage", "shape", "params")?;
            for r in rows {
                writeln!(
                    f,
                    "  {:<18} {:>24} {:>12}",
                    r.stage,
                    r.shape_string(),
                    r.params
                )?;
            }
            writeln!(f, "  {:<18} {:>24} {:>12}", "total", "", total)?;
        }
        Ok(())
    }
}

/// Name, shape and initialization scale of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    /// `None` for zero-initialized biases.
    pub fan_in: Option<usize>,
}

impl ParamSpec {
    fn weight(name: &str, shape: Shape, fan_in: usize) -> Self {
        Self {
            name: name.to_string(),
            shape,
            fan_in: Some(fan_in.max(1)),
        }
    }

    fn bias(name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            shape: [1, 1, 1, channels],
            fan_in: None,
        }
    }
}

/// Ordered named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    entries: Vec<(String, Tensor4)>,
}

impl Params {
    /// Weights `N(0, 1/fan_in)`, biases zero.
    pub fn init(specs: &[ParamSpec], rng: &mut impl Rng) -> Self {
        let entries = specs
            .iter()
            .map(|s| {
                let t = match s.fan_in {
                    Some(f) => Tensor4::randn(s.shape, 1.0 / (f as f64).sqrt(), rng),
                    None => Tensor4::zeros(s.shape),
                };
                (s.name.clone(), t)
            })
            .collect();
        Self { entries }
    }

    pub fn zeros(specs: &[ParamSpec]) -> Self {
        Self {
            entries: specs
                .iter()
                .map(|s| (s.name.clone(), Tensor4::zeros(s.shape)))
                .collect(),
        }
    }

    pub fn from_entries(entries: Vec<(String, Tensor4)>) -> Self {
        Self { entries }
    }

    /// Checks names and shapes against `specs`.
    pub fn check(&self, specs: &[ParamSpec]) -> Result<()> {
        if self.entries.len() != specs.len() {
            return Err(Error::shape(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                self.entries.len()
            )));
        }
        for ((name, t), s) in self.entries.iter().zip(specs) {
            if *name != s.name || t.shape() != s.shape {
                return Err(Error::shape(format!(
                    "parameter {name} {:?} does not match {} {:?}",
                    t.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[(String, Tensor4)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor4)] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor4> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor4> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Places every tensor in `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let mut vars = Vec::with_capacity(self.entries.len());
        let mut index = HashMap::with_capacity(self.entries.len());
        for (i, (name, t)) in self.entries.iter().enumerate() {
            vars.push(g.leaf(t.clone()));
            index.insert(name.clone(), i);
        }
        Bound { vars, index }
    }
}

/// Parameters placed in a graph.
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    /// Names vars that already live in a graph, e.g. parameters placed as
    /// leaves by other code.
    pub fn from_vars(names: &[String], vars: &[Var]) -> Self {
        Self {
            vars: vars.to_vec(),
            index: names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::shape(format!("missing parameter {name}")))
    }

    /// Vars in parameter order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn pair(&self, prefix: &str) -> Result<(Var, Var)> {
        Ok((
            self.get(&format!("{prefix}.w"))?,
            self.get(&format!("{prefix}.b"))?,
        ))
    }
}

/// `x W + b` on `[B, 1, 1, F]` rows.
pub fn dense(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w, false, false)?;
    g.add_bias(y, b)
}

fn conv(g: &mut Graph, x: Var, (w, b): (Var, Var), stride: (usize, usize)) -> Result<Var> {
    let y = g.conv2d(x, w, stride)?;
    g.add_bias(y, b)
}

fn conv_t(g: &mut Graph, x: Var, (w, b): (Var, Var), stride: (usize, usize)) -> Result<Var> {
    let y = g.conv2d_transpose(x, w, stride)?;
    g.add_bias(y, b)
}

/// Weights and biases of one generator block.
#[derive(Debug, Clone, Copy)]
pub struct GenBlockParams {
    pub up: (Var, Var),
    pub octave: (Var, Var),
    pub balance: (Var, Var),
}

/// Weights and biases of one critic block.
#[derive(Debug, Clone, Copy)]
pub struct DiscBlockParams {
    pub octave: (Var, Var),
    pub balance: (Var, Var),
    pub down: (Var, Var),
}

/// `B x M x N x C -> B x 4M x 2N x C'`.
///
/// Time upsampling first, then the top octave of the upsampled tensor
/// seeds a new octave which is balanced and concatenated above it.
pub fn generator_block(g: &mut Graph, x: Var, p: &GenBlockParams) -> Result<Var> {
    let n = g.shape(x)[2];
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::shape(format!(
            "generator block needs an even band count, got {n}"
        )));
    }
    let up = conv_t(g, x, p.up, TIME_STRIDE)?;
    let up = g.leaky_relu(up, LEAKY_SLOPE);
    let top = g.slice(up, 2, n / 2, n / 2)?;
    let oct = conv_t(g, top, p.octave, OCTAVE_STRIDE)?;
    let oct = g.leaky_relu(oct, LEAKY_SLOPE);
    let bal = conv(g, oct, p.balance, (1, 1))?;
    g.concat(up, bal, 2)
}

/// `B x 4M x 2N x C -> B x M x N x C'`.
///
/// The top `N` bands are downsampled to `N/2`, balanced and summed onto
/// the upper half of the remaining bands, then time is downsampled by 4.
pub fn discriminator_block(g: &mut Graph, x: Var, p: &DiscBlockParams) -> Result<Var> {
    let [_, m4, n2, _] = g.shape(x);
    if n2 < 4 || n2 % 4 != 0 || m4 % 4 != 0 {
        return Err(Error::shape(format!(
            "critic block needs 4M x 2N input with N even, got {m4} x {n2}"
        )));
    }
    let n = n2 / 2;
    let low = g.slice(x, 2, 0, n)?;
    let top = g.slice(x, 2, n, n)?;
    let down = conv(g, top, p.octave, OCTAVE_STRIDE)?;
    let down = g.leaky_relu(down, LEAKY_SLOPE);
    let bal = conv(g, down, p.balance, (1, 1))?;
    let bal = g.pad(bal, 2, n / 2, n)?;
    let sum = g.add(low, bal)?;
    let y = conv(g, sum, p.down, TIME_STRIDE)?;
    Ok(g.leaky_relu(y, LEAKY_SLOPE))
}

/// Appends the batch-averaged per-element standard deviation as one
/// constant channel.
pub fn minibatch_stddev(g: &mut Graph, x: Var) -> Result<Var> {
    let [b, m, n, c] = g.shape(x);
    // Shift by the first sample so a constant batch gives exact zeros.
    let first = g.slice(x, 0, 0, 1)?;
    let first = g.broadcast_to(first, [b, m, n, c])?;
    let d = g.sub(x, first)?;
    let mean = g.sum_to(d, [1, m, n, c])?;
    let mean = g.scale(mean, 1.0 / b as f64);
    let mean = g.broadcast_to(mean, [b, m, n, c])?;
    let centered = g.sub(d, mean)?;
    let sq = g.square(centered);
    let var = g.sum_to(sq, [1, m, n, c])?;
    let var = g.scale(var, 1.0 / b as f64);
    let std = g.sqrt(var);
    let avg = g.mean_all(std);
    let feature = g.broadcast_to(avg, [b, m, n, 1])?;
    g.concat(x, feature, 3)
}

fn gen_block_params(p: &Bound, d: usize) -> Result<GenBlockParams> {
    Ok(GenBlockParams {
        up: p.pair(&format!("block{d}.up"))?,
        octave: p.pair(&format!("block{d}.octave"))?,
        balance: p.pair(&format!("block{d}.balance"))?,
    })
}

fn disc_block_params(p: &Bound, d: usize) -> Result<DiscBlockParams> {
    Ok(DiscBlockParams {
        octave: p.pair(&format!("block{d}.octave"))?,
        balance: p.pair(&format!("block{d}.balance"))?,
        down: p.pair(&format!("block{d}.down"))?,
    })
}

/// `z: [B, 1, 1, latent] -> [B, M_out, N_out, output_channels]`, linear output.
pub fn generator(g: &mut Graph, cfg: &ModelConfig, p: &Bound, z: Var) -> Result<Var> {
    cfg.validate()?;
    let [b, _, _, l] = g.shape(z);
    if l != cfg.latent_dim || g.value(z).len() != b * l {
        return Err(Error::shape(format!(
            "latent must be [B, 1, 1, {}], got {:?}",
            cfg.latent_dim,
            g.shape(z)
        )));
    }
    let ch = cfg.channel_schedule();
    let h = dense(g, z, p.get("dense.w")?, p.get("dense.b")?)?;
    let h = g.leaky_relu(h, LEAKY_SLOPE);
    let mut x = g.reshape(h, [b, cfg.seed_blocks, cfg.seed_bands, ch[0]])?;
    for d in 1..=cfg.num_blocks {
        x = generator_block(g, x, &gen_block_params(p, d)?)?;
    }
    conv(g, x, p.pair("out")?, (1, 1))
}

/// `x: [B, M_out, N_out, output_channels] -> [B, 1, 1, 1]` scores.
pub fn discriminator(g: &mut Graph, cfg: &ModelConfig, p: &Bound, x: Var) -> Result<Var> {
    cfg.validate()?;
    let (m, n, c) = cfg.output_shape();
    let s = g.shape(x);
    if (s[1], s[2], s[3]) != (m, n, c) {
        return Err(Error::shape(format!(
            "critic input must be B x {m} x {n} x {c}, got {:?}",
            s
        )));
    }
    let h = conv(g, x, p.pair("in")?, (1, 1))?;
    let mut h = g.leaky_relu(h, LEAKY_SLOPE);
    for d in (1..=cfg.num_blocks).rev() {
        if d == 1 {
            h = minibatch_stddev(g, h)?;
        }
        h = discriminator_block(g, h, &disc_block_params(p, d)?)?;
    }
    if cfg.num_blocks == 0 {
        h = minibatch_stddev(g, h)?;
    }
    let flat = g.value(h).len() / s[0];
    let h = g.reshape(h, [s[0], 1, 1, flat])?;
    dense(g, h, p.get("score.w")?, p.get("score.b")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            latent_dim: 8,
            num_blocks: 2,
            seed_blocks: 2,
            seed_bands: 2,
            channels: vec![4, 3, 2],
            output_channels: 1,
        }
    }

    #[test]
    fn published_shapes() {
        let big = ModelConfig::default();
        assert_eq!(big.output_shape(), (16384, 128, 2));
        let t = big.shape_table().unwrap();
        assert_eq!(
            t.generator.last().unwrap().shape_string(),
            "16384 × 128 × 2"
        );
        let short = ModelConfig {
            num_blocks: 5,
            seed_blocks: 1,
            seed_bands: 4,
            ..ModelConfig::default()
        };
        assert_eq!(
            short
                .shape_table()
                .unwrap()
                .generator
                .last()
                .unwrap()
                .shape_string(),
            "1024 × 128 × 2"
        );
    }

    #[test]
    fn schedule_is_capped() {
        assert!(default_channels(6).iter().all(|&c| c <= MAX_CHANNELS));
        assert_eq!(default_channels(2), vec![64, 32, 16]);
        let bad = ModelConfig {
            channels: vec![1024; 7],
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn block_shapes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let x = g.leaf(Tensor4::randn([2, 4, 2, 3], 1.0, &mut rng));
        let mut w = |g: &mut Graph, s: Shape| {
            let t = Tensor4::randn(s, 0.3, &mut rng);
            g.leaf(t)
        };
        let gp = GenBlockParams {
            up: (w(&mut g, [8, 3, 5, 3]), w(&mut g, [1, 1, 1, 5])),
            octave: (w(&mut g, [1, 4, 5, 5]), w(&mut g, [1, 1, 1, 5])),
            balance: (w(&mut g, [1, 1, 5, 5]), w(&mut g, [1, 1, 1, 5])),
        };
        let y = generator_block(&mut g, x, &gp).unwrap();
        assert_eq!(g.shape(y), [2, 16, 4, 5]);
        let dp = DiscBlockParams {
            octave: (w(&mut g, [1, 4, 5, 5]), w(&mut g, [1, 1, 1, 5])),
            balance: (w(&mut g, [1, 1, 5, 5]), w(&mut g, [1, 1, 1, 5])),
            down: (w(&mut g, [8, 3, 5, 3]), w(&mut g, [1, 1, 1, 3])),
        };
        let back = discriminator_block(&mut g, y, &dp).unwrap();
        assert_eq!(g.shape(back), [2, 4, 2, 3]);
        let odd = g.leaf(Tensor4::zeros([1, 4, 3, 3]));
        assert!(generator_block(&mut g, odd, &gp).is_err());
    }

    #[test]
    fn critic_block_zero_in_zero_out() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor4::zeros([1, 16, 4, 2]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = |g: &mut Graph, s: Shape| {
            let t = Tensor4::randn(s, 1.0, &mut rng);
            g.leaf(t)
        };
        let zb = |g: &mut Graph, c: usize| g.leaf(Tensor4::zeros([1, 1, 1, c]));
        let dp = DiscBlockParams {
            octave: (w(&mut g, [1, 4, 2, 2]), zb(&mut g, 2)),
            balance: (w(&mut g, [1, 1, 2, 2]), zb(&mut g, 2)),
            down: (w(&mut g, [8, 3, 2, 3]), zb(&mut g, 3)),
        };
        let y = discriminator_block(&mut g, x, &dp).unwrap();
        assert_eq!(g.shape(y), [1, 4, 2, 3]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_formula_for_depths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for b in 1..=4 {
            let cfg = ModelConfig {
                latent_dim: 4,
                num_blocks: b,
                seed_blocks: 1,
                seed_bands: 2,
                channels: vec![2; b + 1],
                output_channels: 2,
            };
            let params = Params::init(&cfg.generator_params(), &mut rng);
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let z = g.leaf(Tensor4::randn([1, 1, 1, 4], 1.0, &mut rng));
            let y = generator(&mut g, &cfg, &p, z).unwrap();
            let (m, n, c) = cfg.output_shape();
            assert_eq!(g.shape(y), [1, m, n, c]);
            assert_eq!((m, n), (4usize.pow(b as u32), 2 << b));
        }
    }

    #[test]
    fn zero_weights_zero_output() {
        let cfg = ModelConfig {
            latent_dim: 8,
            num_blocks: 2,
            seed_blocks: 2,
            seed_bands: 2,
            channels: vec![],
            output_channels: 2,
        };
        let params = Params::zeros(&cfg.generator_params());
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let z = g.leaf(Tensor4::zeros([2, 1, 1, 8]));
        let y = generator(&mut g, &cfg, &p, z).unwrap();
        assert_eq!(g.shape(y), [2, 32, 8, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn critic_scores_generated_batch() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gp = Params::init(&cfg.generator_params(), &mut rng);
        let dp = Params::init(&cfg.discriminator_params(), &mut rng);
        let mut g = Graph::new();
        let gb = gp.bind(&mut g);
        let db = dp.bind(&mut g);
        let z = g.leaf(Tensor4::randn([3, 1, 1, 8], 1.0, &mut rng));
        let x = generator(&mut g, &cfg, &gb, z).unwrap();
        let s = discriminator(&mut g, &cfg, &db, x).unwrap();
        assert_eq!(g.shape(s), [3, 1, 1, 1]);
        assert!(g.value(s).is_finite());
    }

    #[test]
    fn param_counts_match_table() {
        let cfg = tiny();
        let t = cfg.shape_table().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            t.generator_params(),
            Params::init(&cfg.generator_params(), &mut rng).scalar_count()
        );
        assert_eq!(
            t.discriminator_params(),
            Params::init(&cfg.discriminator_params(), &mut rng).scalar_count()
        );
        let zero = ModelConfig {
            num_blocks: 0,
            channels: vec![8],
            ..tiny()
        };
        let rows = zero.shape_table().unwrap();
        assert_eq!(rows.generator.last().unwrap().shape, (2, 2, 1));
    }

    #[test]
    fn stddev_constant_batch_is_zero() {
        let mut g = Graph::new();
        let one = Tensor4::new([1, 2, 1, 2], vec![0.1, 0.7, 1.0000000000000002, -3.3]).unwrap();
        let x = g.leaf(Tensor4::stack(&[one.clone(), one.clone(), one]).unwrap());
        let y = minibatch_stddev(&mut g, x).unwrap();
        assert_eq!(g.shape(y), [3, 2, 1, 3]);
        for b in 0..3 {
            for m in 0..2 {
                assert_eq!(g.value(y).at(b, m, 0, 2), 0.0);
            }
        }
    }

    #[test]
    fn stddev_of_opposite_pair_is_mean_abs() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor4::new([2, 1, 1, 1], vec![0.75, -0.75]).unwrap());
        let y = minibatch_stddev(&mut g, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.75, 0.75, -0.75, 0.75]);
    }
}
