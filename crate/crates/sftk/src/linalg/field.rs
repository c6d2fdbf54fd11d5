use num_rational::BigRational;
use num_traits::Zero;

use super::{QMat, QPoly};
use crate::error::{Error, Result};

/// The field `Q[x]/(p)` for an irreducible polynomial `p`. Elements are
/// polynomials reduced modulo `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberField {
    modulus: QPoly,
}

impl NumberField {
    /// `modulus` must be irreducible; the caller is responsible for that.
    pub fn new(modulus: QPoly) -> Result<Self> {
        match modulus.degree() {
            Some(d) if d >= 1 => Ok(NumberField {
                modulus: modulus.monic(),
            }),
            _ => Err(Error::InvalidInput("field modulus must have degree >= 1".into())),
        }
    }

    pub fn modulus(&self) -> &QPoly {
        &self.modulus
    }

    pub fn degree(&self) -> usize {
        self.modulus.degree().expect("degree >= 1")
    }

    pub fn reduce(&self, a: &QPoly) -> QPoly {
        a.rem(&self.modulus)
    }

    pub fn from_rational(&self, a: BigRational) -> QPoly {
        QPoly::constant(a)
    }

    /// The generator, i.e. the class of `x`.
    pub fn gen(&self) -> QPoly {
        self.reduce(&QPoly::x())
    }

    pub fn add(&self, a: &QPoly, b: &QPoly) -> QPoly {
        a.add(b)
    }

    pub fn sub(&self, a: &QPoly, b: &QPoly) -> QPoly {
        a.sub(b)
    }

    pub fn mul(&self, a: &QPoly, b: &QPoly) -> QPoly {
        self.reduce(&a.mul(b))
    }

    /// Inverse by the extended Euclidean algorithm.
    pub fn inv(&self, a: &QPoly) -> Result<QPoly> {
        if a.is_zero() {
            return Err(Error::InvalidInput("inverse of zero".into()));
        }
        let (mut r0, mut r1) = (self.modulus.clone(), self.reduce(a));
        let (mut s0, mut s1) = (QPoly::zero(), QPoly::one());
        while !r1.is_zero() {
            let (qt, r) = r0.divrem(&r1);
            let s = s0.sub(&qt.mul(&s1));
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s;
        }
        if r0.degree() != Some(0) {
            return Err(Error::InvalidInput("modulus is not irreducible".into()));
        }
        let c = r0.coeff(0).recip();
        Ok(self.reduce(&s0.scale(&c)))
    }

    /// A nonzero vector in the kernel of `A - x I` where `x` is the generator.
    /// The kernel is one dimensional when the generator is a simple eigenvalue.
    pub fn eigenvector(&self, a: &QMat) -> Result<Vec<QPoly>> {
        let n = a.rows();
        let x = self.gen();
        let mut m: Vec<Vec<QPoly>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let e = QPoly::constant(a.get(i, j).clone());
                        if i == j {
                            e.sub(&x)
                        } else {
                            e
                        }
                    })
                    .collect()
            })
            .collect();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..n {
            if row == n {
                break;
            }
            let Some(p) = (row..n).find(|&i| !m[i][col].is_zero()) else {
                continue;
            };
            m.swap(p, row);
            let inv = self.inv(&m[row][col])?;
            for j in 0..n {
                m[row][j] = self.mul(&m[row][j], &inv);
            }
            for i in 0..n {
                if i == row || m[i][col].is_zero() {
                    continue;
                }
                let f = m[i][col].clone();
                for j in 0..n {
                    let v = m[i][j].sub(&self.mul(&f, &m[row][j]));
                    m[i][j] = v;
                }
            }
            pivots.push(col);
            row += 1;
        }
        let free = (0..n)
            .find(|c| !pivots.contains(c))
            .ok_or_else(|| Error::InvalidInput("generator is not an eigenvalue".into()))?;
        let mut v = vec![QPoly::zero(); n];
        v[free] = QPoly::one();
        for (r, &p) in pivots.iter().enumerate() {
            v[p] = m[r][free].scale(&-BigRational::from_integer(1.into()));
        }
        Ok(v)
    }

    pub fn to_f64(&self, a: &QPoly, root: f64) -> f64 {
        a.eval_f64(root)
    }

    pub fn is_zero(&self, a: &QPoly) -> bool {
        self.reduce(a).is_zero()
    }

    pub fn sum(&self, xs: impl IntoIterator<Item = QPoly>) -> QPoly {
        xs.into_iter().fold(QPoly::zero(), |acc, x| acc.add(&x))
    }

    pub fn dot(&self, a: &[QPoly], b: &[QPoly]) -> QPoly {
        self.sum(a.iter().zip(b).map(|(x, y)| self.mul(x, y)))
    }

    pub fn zero(&self) -> QPoly {
        QPoly::zero()
    }

    pub fn rational_vec(&self, v: &[BigRational]) -> Vec<QPoly> {
        v.iter()
            .map(|x| if x.is_zero() { QPoly::zero() } else { QPoly::constant(x.clone()) })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_field() {
        let k = NumberField::new(QPoly::from_ints(&[-1, -1, 1])).unwrap();
        let x = k.gen();
        // x^2 = x + 1
        assert_eq!(k.mul(&x, &x), QPoly::from_ints(&[1, 1]));
        let xi = k.inv(&x).unwrap();
        assert_eq!(k.mul(&x, &xi), QPoly::one());
        let t = QMat::from_ints(&[vec![1, 1], vec![1, 0]]);
        let v = k.eigenvector(&t).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let vf: Vec<f64> = v.iter().map(|c| c.eval_f64(phi)).collect();
        assert!((vf[0] / vf[1] - phi).abs() < 1e-12);
    }
}
