//! The coefficient algebras R = F_{p^m}[eps]/(eps^k).

use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use super::field::FiniteField;
use crate::error::{Error, Result};

/// An element of R as its eps-adic digits `c_0 + c_1 eps + ... + c_{k-1} eps^{k-1}`,
/// each digit an index into F_{p^m}. Arithmetic goes through [`CoeffRing`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoeffElement(pub(crate) SmallVec<[u32; 4]>);

impl CoeffElement {
    pub fn digits(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Debug for CoeffElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "{:?}", &self.0[..])
        }
    }
}

/// Serialized description of a coefficient ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RingSpec {
    pub p: u32,
    #[serde(default = "one_u32")]
    pub m: u32,
    #[serde(default = "one_usize")]
    pub k: usize,
}

fn one_u32() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}

impl RingSpec {
    pub fn build(&self) -> Result<CoeffRing> {
        CoeffRing::new(self.p, self.m, self.k)
    }
}

struct Inner {
    field: FiniteField,
    k: usize,
}

/// Shared handle to a coefficient algebra. Cloning is cheap.
#[derive(Clone)]
pub struct CoeffRing(Arc<Inner>);

impl fmt::Debug for CoeffRing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}^{}[eps]/(eps^{})", self.p(), self.m(), self.k())
    }
}

impl PartialEq for CoeffRing {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.p() == other.p() && self.m() == other.m() && self.k() == other.k())
    }
}
impl Eq for CoeffRing {}

impl CoeffRing {
    pub fn new(p: u32, m: u32, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidRing("nilpotency order must be at least 1".into()));
        }
        let field = FiniteField::new(p, m)?;
        Ok(CoeffRing(Arc::new(Inner { field, k })))
    }

    pub fn spec(&self) -> RingSpec {
        RingSpec { p: self.p(), m: self.m(), k: self.k() }
    }

    /// The prime field F_p.
    pub fn prime_field(p: u32) -> Result<Self> {
        Self::new(p, 1, 1)
    }

    pub fn p(&self) -> u32 {
        self.0.field.p()
    }
    pub fn m(&self) -> u32 {
        self.0.field.m()
    }
    pub fn k(&self) -> usize {
        self.0.k
    }
    /// Largest n with m^n != 0.
    pub fn n(&self) -> usize {
        self.0.k - 1
    }
    pub fn field(&self) -> &FiniteField {
        &self.0.field
    }
    pub fn is_field(&self) -> bool {
        self.0.k == 1
    }

    /// Number of elements of R.
    pub fn size(&self) -> u64 {
        (self.0.field.order() as u64).pow(self.0.k as u32)
    }

    pub fn zero(&self) -> CoeffElement {
        CoeffElement(SmallVec::from_elem(0, self.0.k))
    }

    pub fn one(&self) -> CoeffElement {
        self.from_int(1)
    }

    pub fn from_int(&self, n: i64) -> CoeffElement {
        let mut z = self.zero();
        z.0[0] = self.0.field.from_int(n);
        z
    }

    /// Element with the given eps-adic digits (missing digits are zero).
    pub fn from_digits(&self, digits: &[u32]) -> Result<CoeffElement> {
        if digits.len() > self.0.k {
            return Err(Error::Parse(format!(
                "{} eps-digits given for a ring with k = {}",
                digits.len(),
                self.0.k
            )));
        }
        let mut z = self.zero();
        for (slot, &d) in z.0.iter_mut().zip(digits) {
            if !self.0.field.contains(d) {
                return Err(Error::Parse(format!("{d} is not an element of F_{}", self.0.field.order())));
            }
            *slot = d;
        }
        Ok(z)
    }

    /// Element of F_{p^m} (by index) embedded as a constant.
    pub fn from_field(&self, a: u32) -> CoeffElement {
        let mut z = self.zero();
        z.0[0] = a;
        z
    }

    /// `eps^j`, zero when `j >= k`.
    pub fn eps_pow(&self, j: usize) -> CoeffElement {
        let mut z = self.zero();
        if j < self.0.k {
            z.0[j] = 1;
        }
        z
    }

    pub fn is_zero(&self, a: &CoeffElement) -> bool {
        a.0.iter().all(|&d| d == 0)
    }

    pub fn is_one(&self, a: &CoeffElement) -> bool {
        *a == self.one()
    }

    pub fn is_unit(&self, a: &CoeffElement) -> bool {
        a.0[0] != 0
    }

    /// Membership in m^t: the digits below eps^t vanish.
    pub fn in_max_ideal_pow(&self, a: &CoeffElement, t: usize) -> bool {
        a.0.iter().take(t).all(|&d| d == 0)
    }

    /// Residue in F_{p^m}.
    pub fn residue(&self, a: &CoeffElement) -> u32 {
        a.0[0]
    }

    pub fn add(&self, a: &CoeffElement, b: &CoeffElement) -> CoeffElement {
        let f = &self.0.field;
        CoeffElement(a.0.iter().zip(&b.0).map(|(&x, &y)| f.add(x, y)).collect())
    }

    pub fn sub(&self, a: &CoeffElement, b: &CoeffElement) -> CoeffElement {
        let f = &self.0.field;
        CoeffElement(a.0.iter().zip(&b.0).map(|(&x, &y)| f.sub(x, y)).collect())
    }

    pub fn neg(&self, a: &CoeffElement) -> CoeffElement {
        let f = &self.0.field;
        CoeffElement(a.0.iter().map(|&x| f.neg(x)).collect())
    }

    pub fn mul(&self, a: &CoeffElement, b: &CoeffElement) -> CoeffElement {
        let f = &self.0.field;
        let k = self.0.k;
        if k == 1 {
            return CoeffElement(SmallVec::from_elem(f.mul(a.0[0], b.0[0]), 1));
        }
        let mut out = self.zero();
        for i in 0..k {
            if a.0[i] == 0 {
                continue;
            }
            for j in 0..k - i {
                out.0[i + j] = f.add(out.0[i + j], f.mul(a.0[i], b.0[j]));
            }
        }
        out
    }

    /// `a + b*c`, the inner step of every convolution.
    pub fn mul_add(&self, a: &CoeffElement, b: &CoeffElement, c: &CoeffElement) -> CoeffElement {
        self.add(a, &self.mul(b, c))
    }

    pub fn inv(&self, a: &CoeffElement) -> Result<CoeffElement> {
        let f = &self.0.field;
        let a0inv = f.inv(a.0[0]).ok_or(Error::NotInvertible)?;
        let k = self.0.k;
        let mut b = self.zero();
        b.0[0] = a0inv;
        // b_j = -a0^{-1} * sum_{i=1..j} a_i b_{j-i}
        for j in 1..k {
            let mut acc = 0;
            for i in 1..=j {
                acc = f.add(acc, f.mul(a.0[i], b.0[j - i]));
            }
            b.0[j] = f.neg(f.mul(a0inv, acc));
        }
        Ok(b)
    }

    pub fn div(&self, a: &CoeffElement, b: &CoeffElement) -> Result<CoeffElement> {
        Ok(self.mul(a, &self.inv(b)?))
    }

    pub fn pow(&self, a: &CoeffElement, mut e: u64) -> CoeffElement {
        let mut base = a.clone();
        let mut acc = self.one();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &base);
            }
            base = self.mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    /// All elements, in index order (digit 0 fastest). Only sensible for tiny rings.
    pub fn elements(&self) -> Vec<CoeffElement> {
        let q = self.0.field.order();
        let k = self.0.k;
        let total = self.size();
        (0..total)
            .map(|mut idx| {
                let mut z = self.zero();
                for j in 0..k {
                    z.0[j] = (idx % q as u64) as u32;
                    idx /= q as u64;
                }
                z
            })
            .collect()
    }

    pub fn random<G: rand::Rng + ?Sized>(&self, rng: &mut G) -> CoeffElement {
        let q = self.0.field.order();
        CoeffElement((0..self.0.k).map(|_| rng.gen_range(0..q)).collect())
    }

    pub fn random_unit<G: rand::Rng + ?Sized>(&self, rng: &mut G) -> CoeffElement {
        let mut a = self.random(rng);
        a.0[0] = rng.gen_range(1..self.0.field.order());
        a
    }

    /// A random element of the maximal ideal.
    pub fn random_nonunit<G: rand::Rng + ?Sized>(&self, rng: &mut G) -> CoeffElement {
        let mut a = self.random(rng);
        a.0[0] = 0;
        a
    }

    /// Decimal-string digits used in serialized output.
    pub fn to_strings(&self, a: &CoeffElement) -> Vec<String> {
        a.0.iter().map(|d| d.to_string()).collect()
    }

    pub fn from_strings(&self, s: &[String]) -> Result<CoeffElement> {
        let digits = s
            .iter()
            .map(|t| t.trim().parse::<u32>().map_err(|e| Error::Parse(format!("field digit {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        self.from_digits(&digits)
    }
}
