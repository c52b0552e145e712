//! WGAN-GP critic/generator losses with a drift term and the
//! psychoacoustic noise input layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psycho::{psychoacoustic_noise, PsychoModel};
use crate::MdctTensor;

use super::graph::{Graph, Var};
use super::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanLossConfig {
    pub gp_lambda: f64,
    pub drift_epsilon: f64,
}

impl Default for GanLossConfig {
    fn default() -> Self {
        Self {
            gp_lambda: 10.0,
            drift_epsilon: 0.001,
        }
    }
}

/// Scalar loss nodes plus their components.
#[derive(Debug, Clone, Copy)]
pub struct GanLosses {
    pub loss_d: Var,
    pub loss_g: Var,
    /// `E[D(real)] - E[D(fake)]`.
    pub wasserstein: Var,
    /// `E[(||grad D(x_hat)|| - 1)^2]`, before the lambda factor.
    pub gradient_penalty: Var,
    /// `E[D(real)^2]`, before the epsilon factor.
    pub drift: Var,
}

/// Builds both losses for critic `critic` on `real` and `fake` batches.
///
/// `u ~ U[0, 1]` is drawn per sample from `rng`. Any noise layer must be
/// applied to `real`/`fake` beforehand (see [`noise_input`]).
pub fn wgan_gp_losses<R, F>(
    g: &mut Graph,
    real: Var,
    fake: Var,
    mut critic: F,
    cfg: &GanLossConfig,
    rng: &mut R,
) -> Result<GanLosses>
where
    R: Rng + ?Sized,
    F: FnMut(&mut Graph, Var) -> Result<Var>,
{
    let shape = g.shape(real);
    if g.shape(fake) != shape {
        return Err(Error::shape(format!(
            "real {:?} and fake {:?} differ",
            shape,
            g.shape(fake)
        )));
    }
    let b = shape[0];
    let d_real = critic(g, real)?;
    let d_fake = critic(g, fake)?;

    let u: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
    let one_minus: Vec<f64> = u.iter().map(|v| 1.0 - v).collect();
    let u = g.leaf(Tensor4::new([b, 1, 1, 1], u)?);
    let v = g.leaf(Tensor4::new([b, 1, 1, 1], one_minus)?);
    let u = g.broadcast_to(u, shape)?;
    let v = g.broadcast_to(v, shape)?;
    let a = g.mul(u, real)?;
    let c = g.mul(v, fake)?;
    let x_hat = g.add(a, c)?;
    let d_hat = critic(g, x_hat)?;
    let total = g.sum_all(d_hat);
    let grad = g.grad(total, &[x_hat])?[0];
    let sq = g.square(grad);
    let per_sample = g.sum_to(sq, [b, 1, 1, 1])?;
    let norm = g.sqrt(per_sample);
    let dev = g.add_scalar(norm, -1.0);
    let dev2 = g.square(dev);
    let gradient_penalty = g.mean_all(dev2);

    let real_sq = g.square(d_real);
    let drift = g.mean_all(real_sq);
    let mean_real = g.mean_all(d_real);
    let mean_fake = g.mean_all(d_fake);
    let wasserstein = g.sub(mean_real, mean_fake)?;

    let base = g.sub(mean_fake, mean_real)?;
    let gp = g.scale(gradient_penalty, cfg.gp_lambda);
    let dr = g.scale(drift, cfg.drift_epsilon);
    let loss_d = g.add(base, gp)?;
    let loss_d = g.add(loss_d, dr)?;
    let loss_g = g.scale(mean_fake, -1.0);
    Ok(GanLosses {
        loss_d,
        loss_g,
        wasserstein,
        gradient_penalty,
        drift,
    })
}

/// Adds psychoacoustic noise to every `[M, N, C]` item of `x`.
///
/// Thresholds are computed from the current values and enter the graph as
/// constants, so the gradient through this layer is the identity. One seed
/// per batch item is drawn from `rng`.
pub fn noise_input<R: Rng + ?Sized>(
    g: &mut Graph,
    x: Var,
    model: &PsychoModel,
    scale: f64,
    rng: &mut R,
) -> Result<Var> {
    let [b, m, n, c] = g.shape(x);
    let seeds: Vec<u64> = (0..b).map(|_| rng.random()).collect();
    if scale == 0.0 {
        return Ok(x);
    }
    if model.partition().bin_count() != n {
        return Err(Error::shape(format!(
            "noise model has {} bins, tensor has {n}",
            model.partition().bin_count()
        )));
    }
    let rate = model.partition().sample_rate_hz();
    let value = g.value(x).clone();
    let mut noise = Vec::with_capacity(value.len());
    for (i, seed) in seeds.into_iter().enumerate() {
        let item = value.batch_item(i).into_data();
        let t = MdctTensor::from_vec(item.clone(), m, n, c, rate)?;
        let noisy = psychoacoustic_noise(&t, model, scale, seed);
        noise.extend(noisy.amplitudes().iter().zip(&item).map(|(y, x)| y - x));
    }
    let noise = g.leaf(Tensor4::new([b, m, n, c], noise)?);
    g.add(x, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psycho::{bark_partition, PsychoConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_critic_penalty_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let shape = [3, 4, 2, 2];
        let real = g.leaf(Tensor4::randn(shape, 1.0, &mut rng));
        let fake = g.leaf(Tensor4::randn(shape, 1.0, &mut rng));
        let cfg = GanLossConfig::default();
        let l = wgan_gp_losses(
            &mut g,
            real,
            fake,
            |g, x| g.sum_to(x, [3, 1, 1, 1]),
            &cfg,
            &mut rng,
        )
        .unwrap();
        let expect = (16f64.sqrt() - 1.0).powi(2);
        assert!((g.value(l.gradient_penalty).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_critic_has_zero_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let real = g.leaf(Tensor4::randn([2, 1, 2, 1], 1.0, &mut rng));
        let fake = g.leaf(Tensor4::randn([2, 1, 2, 1], 1.0, &mut rng));
        let l = wgan_gp_losses(
            &mut g,
            real,
            fake,
            |g, x| {
                let s = g.sum_to(x, [2, 1, 1, 1])?;
                Ok(g.scale(s, 0.0))
            },
            &GanLossConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.value(l.drift).item(), 0.0);
        assert_eq!(g.value(l.loss_g).item(), 0.0);
    }

    #[test]
    fn mismatched_batches_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor4::zeros([2, 1, 1, 1]));
        let b = g.leaf(Tensor4::zeros([3, 1, 1, 1]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = wgan_gp_losses(
            &mut g,
            a,
            b,
            |_, x| Ok(x),
            &GanLossConfig::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn noise_layer_passes_gradient_through() {
        let model = PsychoModel::new(bark_partition(22016, 16).unwrap(), PsychoConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let x = g.leaf(Tensor4::randn([2, 4, 16, 1], 0.1, &mut rng));
        let y = noise_input(&mut g, x, &model, 1.0, &mut rng).unwrap();
        assert!(g.value(y).max_abs_diff(g.value(x)) > 0.0);
        let s = g.sum_all(y);
        let gx = g.grad(s, &[x]).unwrap()[0];
        assert!(g.value(gx).data().iter().all(|&v| v == 1.0));
        let z = noise_input(&mut g, x, &model, 0.0, &mut rng).unwrap();
        assert_eq!(z, x);
    }
}
