use num_complex::{Complex64, ComplexFloat};
use std::fmt::Debug;

/// Real or complex field used by the orbit solvers.
pub trait Scalar:
    ComplexFloat<Real = f64> + From<f64> + Default + Send + Sync + Debug + 'static
{
    fn lift(x: f64) -> Self {
        <Self as From<f64>>::from(x)
    }
    fn to_c64(self) -> Complex64;
    /// Converts back from a complex value; real scalars keep the real part.
    fn from_c64(z: Complex64) -> Self;
    fn imag_part(self) -> f64 {
        self.to_c64().im
    }
}

impl Scalar for f64 {
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_c64(z: Complex64) -> Self {
        z.re
    }
}

impl Scalar for Complex64 {
    fn to_c64(self) -> Complex64 {
        self
    }
    fn from_c64(z: Complex64) -> Self {
        z
    }
}
