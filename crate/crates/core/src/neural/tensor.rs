use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Dimensions `[batch, blocks, bands, channels]`.
pub type Shape = [usize; 4];

pub(crate) fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

pub(crate) fn fmt_shape(shape: &Shape) -> String {
    format!("{}x{}x{}x{}", shape[0], shape[1], shape[2], shape[3])
}

/// Dense 4-D array in row-major `(b, m, k, c)` order.
///
/// Matrices are stored as `[rows, 1, 1, cols]`, scalars as `[1, 1, 1, 1]`.
#[derive(Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor4({}, ", fmt_shape(&self.shape))?;
        if self.data.len() <= 8 {
            write!(f, "{:?})", self.data)
        } else {
            write!(f, "[{} values])", self.data.len())
        }
    }
}

impl Tensor4 {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!(
                "tensor dims must be >= 1, got {}",
                fmt_shape(&shape)
            )));
        }
        if data.len() != numel(&shape) {
            return Err(Error::shape(format!(
                "{} values for shape {}",
                data.len(),
                fmt_shape(&shape)
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; numel(&shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled([1, 1, 1, 1], value)
    }

    /// Entries drawn from `N(0, std^2)`.
    pub fn randn(shape: Shape, std: f64, rng: &mut impl Rng) -> Self {
        let data = (0..numel(&shape))
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, b: usize, m: usize, k: usize, c: usize) -> usize {
        let [_, sm, sk, sc] = self.shape;
        ((b * sm + m) * sk + k) * sc + c
    }

    #[inline]
    pub fn at(&self, b: usize, m: usize, k: usize, c: usize) -> f64 {
        self.data[self.index(b, m, k, c)]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn reshaped(&self, shape: Shape) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Batch item `b` as a `[1, M, N, C]` tensor.
    pub fn batch_item(&self, b: usize) -> Tensor4 {
        let per = numel(&self.shape) / self.shape[0];
        Tensor4 {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Stacks `[1, M, N, C]` items along the batch axis.
    pub fn stack(items: &[Tensor4]) -> Result<Tensor4> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
        let [_, m, n, c] = first.shape;
        let mut data = Vec::with_capacity(items.len() * m * n * c);
        for t in items {
            if t.shape != [1, m, n, c] {
                return Err(Error::shape(format!(
                    "cannot stack {} with {}",
                    fmt_shape(&t.shape),
                    fmt_shape(&first.shape)
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Tensor4::new([items.len(), m, n, c], data)
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
