//! Exact rational matrices, polynomials and a number field `Q(λ)`.

mod field;
mod poly;
mod qmat;

pub use field::NumberField;
pub use poly::QPoly;
pub use qmat::QMat;

use num_bigint::BigInt;
use num_rational::BigRational;

pub fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn qfrac(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}
