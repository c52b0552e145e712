//! Central finite-difference check of graph gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::graph::{Graph, Var};
use super::tensor::Tensor4;

/// Entries whose analytic and numeric gradients are both below this are
/// compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub entries: usize,
}

fn objective<F>(build: &F, inputs: &[Tensor4]) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let y = build(&mut g, &vars)?;
    // Random projection so every output element matters.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let r = g.leaf(Tensor4::randn(g.shape(y), 1.0, &mut rng));
    let p = g.mul(y, r)?;
    let s = g.sum_all(p);
    Ok((g, vars, s))
}

/// Compares reverse-mode gradients of `build` against central differences
/// with step `h`, for every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor4], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let (mut g, vars, s) = objective(&build, inputs)?;
    let grads = g.grad(s, &vars)?;
    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut moved = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = g.value(grads[k]).clone();
        for e in 0..input.len() {
            let x0 = input.data()[e];
            moved[k].data_mut()[e] = x0 + h;
            let (gp, _, sp) = objective(&build, &moved)?;
            moved[k].data_mut()[e] = x0 - h;
            let (gm, _, sm) = objective(&build, &moved)?;
            moved[k].data_mut()[e] = x0;
            let fd = (gp.value(sp).item() - gm.value(sm).item()) / (2.0 * h);
            let a = analytic.data()[e];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(GRADCHECK_FLOOR);
            worst = worst.max(err);
            entries += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        entries,
    })
}
