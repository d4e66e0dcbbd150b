//! Query access to a pseudo-boolean function.

use crate::spectrum::{PointVector, SparseSpectrum};
use crate::tree::TreeEnsemble;

/// Anything that can be evaluated on `{0,1}^n`. Implementations must be
/// deterministic: the same point always yields the same value.
pub trait Predictor: Send + Sync {
    fn dim(&self) -> usize;
    fn predict(&self, x: &PointVector) -> f64;
}

impl Predictor for SparseSpectrum {
    fn dim(&self) -> usize {
        self.n()
    }

    fn predict(&self, x: &PointVector) -> f64 {
        self.evaluate(x).expect("dimension checked by caller")
    }
}

impl Predictor for TreeEnsemble {
    fn dim(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &PointVector) -> f64 {
        TreeEnsemble::predict(self, x)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict(&self, x: &PointVector) -> f64 {
        (**self).predict(x)
    }
}
