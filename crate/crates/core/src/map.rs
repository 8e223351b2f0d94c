use crate::error::{Error, Result};

/// A continuous map between real vector spaces that can be evaluated pointwise.
///
/// Targets, fitted modules, cascades and continuations all implement this so
/// the geometry and recoverability code can treat them uniformly.
pub trait VectorMap: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl<M: VectorMap + ?Sized> VectorMap for &M {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).eval(x)
    }
}

impl<M: VectorMap + ?Sized> VectorMap for Box<M> {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).eval(x)
    }
}

/// Adapts an infallible closure into a [`VectorMap`].
pub struct FnMap<F> {
    dim_in: usize,
    dim_out: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim_in: usize, dim_out: usize, f: F) -> Self {
        Self { dim_in, dim_out, f }
    }
}

impl<F> VectorMap for FnMap<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim_in, x.len())?;
        Ok((self.f)(x))
    }
}

/// Zero-pads the output of `inner` to `width` coordinates.
pub struct Padded<M> {
    pub inner: M,
    pub width: usize,
}

impl<M: VectorMap> VectorMap for Padded<M> {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.width.max(self.inner.dim_out())
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.inner.eval(x)?;
        y.resize(self.dim_out(), 0.0);
        Ok(y)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
