//! Truncated power series over R in `u` and in `v = u^e`.
//!
//! Every series carries the precision `prec` to which it is known: the stored
//! value is the class modulo `X^prec`. Results of arithmetic carry the largest
//! precision that is actually determined by the operands.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::ring::{CoeffElement, CoeffRing};
use crate::error::{Error, Result};

/// JSON shape shared by both series types.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeriesRepr {
    pub prec: usize,
    pub terms: Vec<(usize, Vec<String>)>,
}

/// A power series in `v`, stored densely up to its precision.
#[derive(Clone)]
pub struct VSeries {
    ring: CoeffRing,
    c: Vec<CoeffElement>,
}

impl PartialEq for VSeries {
    fn eq(&self, other: &Self) -> bool {
        self.c == other.c
    }
}
impl Eq for VSeries {}

impl fmt::Debug for VSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, a) in self.c.iter().enumerate() {
            if self.ring.is_zero(a) {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match j {
                0 => write!(f, "{a:?}")?,
                1 => write!(f, "{a:?}*v")?,
                _ => write!(f, "{a:?}*v^{j}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + O(v^{})", self.c.len())
    }
}

impl VSeries {
    pub fn zero(ring: &CoeffRing, prec: usize) -> Self {
        VSeries { ring: ring.clone(), c: vec![ring.zero(); prec] }
    }

    /// Coefficients of `v^0, v^1, ...`; padded with zeros or truncated to `prec`.
    pub fn from_coeffs(ring: &CoeffRing, mut coeffs: Vec<CoeffElement>, prec: usize) -> Self {
        coeffs.resize(prec, ring.zero());
        VSeries { ring: ring.clone(), c: coeffs }
    }

    pub fn from_ints(ring: &CoeffRing, coeffs: &[i64], prec: usize) -> Self {
        Self::from_coeffs(ring, coeffs.iter().map(|&n| ring.from_int(n)).collect(), prec)
    }

    pub fn constant(ring: &CoeffRing, a: CoeffElement, prec: usize) -> Self {
        Self::monomial(ring, a, 0, prec)
    }

    pub fn one(ring: &CoeffRing, prec: usize) -> Self {
        Self::constant(ring, ring.one(), prec)
    }

    pub fn monomial(ring: &CoeffRing, a: CoeffElement, exp: usize, prec: usize) -> Self {
        let mut s = Self::zero(ring, prec);
        if exp < prec {
            s.c[exp] = a;
        }
        s
    }

    pub fn random<G: rand::Rng + ?Sized>(ring: &CoeffRing, prec: usize, rng: &mut G) -> Self {
        VSeries { ring: ring.clone(), c: (0..prec).map(|_| ring.random(rng)).collect() }
    }

    pub fn ring(&self) -> &CoeffRing {
        &self.ring
    }

    pub fn prec(&self) -> usize {
        self.c.len()
    }

    pub fn coeffs(&self) -> &[CoeffElement] {
        &self.c
    }

    /// Coefficient of `v^j`; zero when `j` is at or beyond the precision.
    pub fn coeff(&self, j: usize) -> CoeffElement {
        self.c.get(j).cloned().unwrap_or_else(|| self.ring.zero())
    }

    pub fn constant_part(&self) -> CoeffElement {
        self.coeff(0)
    }

    pub fn set_coeff(&mut self, j: usize, a: CoeffElement) {
        if j < self.c.len() {
            self.c[j] = a;
        }
    }

    /// Smallest exponent with a nonzero coefficient, `None` if all known
    /// coefficients vanish.
    pub fn valuation(&self) -> Option<usize> {
        self.c.iter().position(|a| !self.ring.is_zero(a))
    }

    fn val_or_prec(&self) -> usize {
        self.valuation().unwrap_or(self.prec())
    }

    pub fn is_zero(&self) -> bool {
        self.valuation().is_none()
    }

    /// Unit of R[[v]]: the constant term is a unit of R.
    pub fn is_unit(&self) -> bool {
        self.prec() > 0 && self.ring.is_unit(&self.c[0])
    }

    /// True when every coefficient beyond the constant term vanishes.
    pub fn is_scalar(&self) -> bool {
        self.c.iter().skip(1).all(|a| self.ring.is_zero(a))
    }

    pub fn truncate(&self, prec: usize) -> Self {
        let mut c = self.c.clone();
        c.truncate(prec);
        VSeries { ring: self.ring.clone(), c }
    }

    /// Equality of the known coefficients below the smaller precision.
    pub fn eq_at(&self, other: &Self) -> bool {
        let n = self.prec().min(other.prec());
        self.c[..n] == other.c[..n]
    }

    pub fn scale(&self, a: &CoeffElement) -> Self {
        VSeries { ring: self.ring.clone(), c: self.c.iter().map(|x| self.ring.mul(x, a)).collect() }
    }

    /// Multiplication by `v^r`; the precision grows by `r`.
    pub fn mul_v_pow(&self, r: usize) -> Self {
        let mut c = vec![self.ring.zero(); r];
        c.extend(self.c.iter().cloned());
        VSeries { ring: self.ring.clone(), c }
    }

    /// Exact division by `v^r`; the precision drops by `r`.
    pub fn div_v_pow(&self, r: usize) -> Result<Self> {
        if r > self.prec() {
            return Err(Error::PrecisionExhausted(format!(
                "dividing a series known to v^{} by v^{r}",
                self.prec()
            )));
        }
        if self.c[..r].iter().any(|a| !self.ring.is_zero(a)) {
            return Err(Error::NonDivisible);
        }
        if r == self.prec() && r > 0 {
            return Err(Error::PrecisionExhausted("quotient carries no known coefficient".into()));
        }
        Ok(VSeries { ring: self.ring.clone(), c: self.c[r..].to_vec() })
    }

    /// The substitution `v -> v^p`, truncated at `cap`.
    pub fn phi(&self, p: usize, cap: usize) -> Self {
        let prec = (self.prec() * p).min(cap);
        let mut out = Self::zero(&self.ring, prec);
        for (j, a) in self.c.iter().enumerate() {
            if j * p >= prec {
                break;
            }
            out.c[j * p] = a.clone();
        }
        out
    }

    pub fn inverse(&self) -> Result<Self> {
        let r = &self.ring;
        if !self.is_unit() {
            return Err(Error::NotInvertible);
        }
        let a0inv = r.inv(&self.c[0])?;
        let n = self.prec();
        let mut b = Vec::with_capacity(n);
        b.push(a0inv.clone());
        for j in 1..n {
            let mut acc = r.zero();
            for i in 1..=j {
                if !r.is_zero(&self.c[i]) {
                    acc = r.mul_add(&acc, &self.c[i], &b[j - i]);
                }
            }
            b.push(r.neg(&r.mul(&a0inv, &acc)));
        }
        Ok(VSeries { ring: r.clone(), c: b })
    }

    pub fn to_repr(&self) -> SeriesRepr {
        SeriesRepr {
            prec: self.prec(),
            terms: self
                .c
                .iter()
                .enumerate()
                .filter(|(_, a)| !self.ring.is_zero(a))
                .map(|(j, a)| (j, self.ring.to_strings(a)))
                .collect(),
        }
    }

    pub fn from_repr(ring: &CoeffRing, repr: &SeriesRepr) -> Result<Self> {
        let mut s = Self::zero(ring, repr.prec);
        for (j, digits) in &repr.terms {
            if *j >= repr.prec {
                return Err(Error::Parse(format!("term v^{j} at or beyond precision {}", repr.prec)));
            }
            s.c[*j] = ring.from_strings(digits)?;
        }
        Ok(s)
    }

    pub fn to_useries(&self, e: usize) -> USeries {
        let coeffs = self
            .c
            .iter()
            .enumerate()
            .filter(|(_, a)| !self.ring.is_zero(a))
            .map(|(j, a)| (j * e, a.clone()))
            .collect();
        USeries { ring: self.ring.clone(), e, prec: self.prec() * e, coeffs }
    }
}

impl Add for &VSeries {
    type Output = VSeries;
    fn add(self, rhs: &VSeries) -> VSeries {
        let n = self.prec().min(rhs.prec());
        VSeries {
            ring: self.ring.clone(),
            c: (0..n).map(|j| self.ring.add(&self.c[j], &rhs.c[j])).collect(),
        }
    }
}

impl Sub for &VSeries {
    type Output = VSeries;
    fn sub(self, rhs: &VSeries) -> VSeries {
        let n = self.prec().min(rhs.prec());
        VSeries {
            ring: self.ring.clone(),
            c: (0..n).map(|j| self.ring.sub(&self.c[j], &rhs.c[j])).collect(),
        }
    }
}

impl Neg for &VSeries {
    type Output = VSeries;
    fn neg(self) -> VSeries {
        VSeries { ring: self.ring.clone(), c: self.c.iter().map(|a| self.ring.neg(a)).collect() }
    }
}

impl Mul for &VSeries {
    type Output = VSeries;
    fn mul(self, rhs: &VSeries) -> VSeries {
        let (pa, pb) = (self.prec(), rhs.prec());
        let (va, vb) = (self.val_or_prec(), rhs.val_or_prec());
        let n = (pa + vb).min(pb + va).min(pa.max(pb));
        let r = &self.ring;
        let mut c = vec![r.zero(); n];
        for (i, a) in self.c.iter().enumerate().take(n) {
            if r.is_zero(a) {
                continue;
            }
            for (j, b) in rhs.c.iter().enumerate().take(n - i) {
                if !r.is_zero(b) {
                    c[i + j] = r.mul_add(&c[i + j], a, b);
                }
            }
        }
        VSeries { ring: r.clone(), c }
    }
}

/// A power series in `u`, stored sparsely, with the ramification index `e`
/// needed to recognize series in `R[[v]]`.
#[derive(Clone)]
pub struct USeries {
    ring: CoeffRing,
    e: usize,
    prec: usize,
    coeffs: BTreeMap<usize, CoeffElement>,
}

impl PartialEq for USeries {
    fn eq(&self, other: &Self) -> bool {
        self.prec == other.prec && self.coeffs == other.coeffs
    }
}

impl fmt::Debug for USeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, a) in &self.coeffs {
            write!(f, "{a:?}*u^{j} + ")?;
        }
        write!(f, "O(u^{})", self.prec)
    }
}

impl USeries {
    pub fn zero(ring: &CoeffRing, e: usize, prec: usize) -> Self {
        USeries { ring: ring.clone(), e, prec, coeffs: BTreeMap::new() }
    }

    pub fn monomial(ring: &CoeffRing, e: usize, a: CoeffElement, exp: usize, prec: usize) -> Self {
        let mut s = Self::zero(ring, e, prec);
        s.set_coeff(exp, a);
        s
    }

    pub fn from_terms(
        ring: &CoeffRing,
        e: usize,
        terms: impl IntoIterator<Item = (usize, CoeffElement)>,
        prec: usize,
    ) -> Self {
        let mut s = Self::zero(ring, e, prec);
        for (j, a) in terms {
            s.set_coeff(j, a);
        }
        s
    }

    pub fn ring(&self) -> &CoeffRing {
        &self.ring
    }
    pub fn e(&self) -> usize {
        self.e
    }
    pub fn prec(&self) -> usize {
        self.prec
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &CoeffElement)> {
        self.coeffs.iter().map(|(&j, a)| (j, a))
    }

    pub fn coeff(&self, j: usize) -> CoeffElement {
        self.coeffs.get(&j).cloned().unwrap_or_else(|| self.ring.zero())
    }

    /// Sets a coefficient; terms at or beyond the precision are dropped.
    pub fn set_coeff(&mut self, j: usize, a: CoeffElement) {
        if j >= self.prec || self.ring.is_zero(&a) {
            self.coeffs.remove(&j);
        } else {
            self.coeffs.insert(j, a);
        }
    }

    pub fn valuation(&self) -> Option<usize> {
        self.coeffs.keys().next().copied()
    }

    /// Every nonzero exponent is a multiple of `e`.
    pub fn lies_in_v(&self) -> bool {
        self.coeffs.keys().all(|j| j % self.e == 0)
    }

    /// Every nonzero exponent is congruent to `r` modulo `e`.
    pub fn exponents_congruent(&self, r: usize) -> bool {
        self.coeffs.keys().all(|j| j % self.e == r % self.e)
    }

    pub fn truncate(&self, prec: usize) -> Self {
        let prec = prec.min(self.prec);
        let coeffs = self.coeffs.range(..prec).map(|(&j, a)| (j, a.clone())).collect();
        USeries { ring: self.ring.clone(), e: self.e, prec, coeffs }
    }

    /// The substitution `u -> u^p`, truncated at `cap`.
    pub fn phi_substitute(&self, p: usize, cap: usize) -> Self {
        let prec = (self.prec * p).min(cap);
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(&j, _)| j * p < prec)
            .map(|(&j, a)| (j * p, a.clone()))
            .collect();
        USeries { ring: self.ring.clone(), e: self.e, prec, coeffs }
    }

    /// Multiplication by `u^r`.
    pub fn shift(&self, r: usize) -> Self {
        let coeffs = self.coeffs.iter().map(|(&j, a)| (j + r, a.clone())).collect();
        USeries { ring: self.ring.clone(), e: self.e, prec: self.prec + r, coeffs }
    }

    /// Exact division by `u^r`, refusing results known to fewer than `e` terms.
    pub fn divide_exact(&self, r: usize) -> Result<Self> {
        self.divide_exact_with_floor(r, self.e)
    }

    pub fn divide_exact_with_floor(&self, r: usize, floor: usize) -> Result<Self> {
        if self.coeffs.range(..r).next().is_some() {
            return Err(Error::NonDivisible);
        }
        if self.prec < r + floor {
            return Err(Error::PrecisionExhausted(format!(
                "u^{r} division leaves precision {} below the floor {floor}",
                self.prec.saturating_sub(r)
            )));
        }
        let coeffs = self.coeffs.iter().map(|(&j, a)| (j - r, a.clone())).collect();
        Ok(USeries { ring: self.ring.clone(), e: self.e, prec: self.prec - r, coeffs })
    }

    /// Reads the series as a series in `v`; fails unless it lies in `R[[v]]`.
    pub fn to_vseries(&self) -> Result<VSeries> {
        if !self.lies_in_v() {
            return Err(Error::Mismatch("series has exponents outside eZ".into()));
        }
        let prec = self.prec.div_ceil(self.e);
        let mut s = VSeries::zero(&self.ring, prec);
        for (&j, a) in &self.coeffs {
            s.set_coeff(j / self.e, a.clone());
        }
        Ok(s)
    }

    pub fn to_repr(&self) -> SeriesRepr {
        SeriesRepr {
            prec: self.prec,
            terms: self.coeffs.iter().map(|(&j, a)| (j, self.ring.to_strings(a))).collect(),
        }
    }

    pub fn from_repr(ring: &CoeffRing, e: usize, repr: &SeriesRepr) -> Result<Self> {
        let mut s = Self::zero(ring, e, repr.prec);
        for (j, digits) in &repr.terms {
            if *j >= repr.prec {
                return Err(Error::Parse(format!("term u^{j} at or beyond precision {}", repr.prec)));
            }
            s.set_coeff(*j, ring.from_strings(digits)?);
        }
        Ok(s)
    }
}

impl Add for &USeries {
    type Output = USeries;
    fn add(self, rhs: &USeries) -> USeries {
        let prec = self.prec.min(rhs.prec);
        let mut out = self.truncate(prec);
        for (&j, b) in rhs.coeffs.range(..prec) {
            let s = self.ring.add(&out.coeff(j), b);
            out.set_coeff(j, s);
        }
        out
    }
}

impl Neg for &USeries {
    type Output = USeries;
    fn neg(self) -> USeries {
        let coeffs = self.coeffs.iter().map(|(&j, a)| (j, self.ring.neg(a))).collect();
        USeries { ring: self.ring.clone(), e: self.e, prec: self.prec, coeffs }
    }
}

impl Sub for &USeries {
    type Output = USeries;
    fn sub(self, rhs: &USeries) -> USeries {
        self + &(-rhs)
    }
}

impl Mul for &USeries {
    type Output = USeries;
    fn mul(self, rhs: &USeries) -> USeries {
        let va = self.valuation().unwrap_or(self.prec);
        let vb = rhs.valuation().unwrap_or(rhs.prec);
        let prec = (self.prec + vb).min(rhs.prec + va).min(self.prec.max(rhs.prec));
        let mut out = USeries::zero(&self.ring, self.e, prec);
        for (&i, a) in &self.coeffs {
            for (&j, b) in rhs.coeffs.range(..prec.saturating_sub(i)) {
                let s = self.ring.mul_add(&out.coeff(i + j), a, b);
                out.set_coeff(i + j, s);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn f3() -> CoeffRing {
        CoeffRing::prime_field(3).unwrap()
    }

    fn useries(r: &CoeffRing, e: usize, terms: &[(usize, i64)], prec: usize) -> USeries {
        USeries::from_terms(r, e, terms.iter().map(|&(j, a)| (j, r.from_int(a))), prec)
    }

    #[test]
    fn phi_examples() {
        let r = f3();
        let z = USeries::zero(&r, 2, 10);
        assert_eq!(z.phi_substitute(3, 30), USeries::zero(&r, 2, 30));
        let s = useries(&r, 2, &[(0, 1), (1, 1)], 10);
        assert_eq!(s.phi_substitute(3, 30), useries(&r, 2, &[(0, 1), (3, 1)], 30));
        // term-by-term: each a*u^j lands on u^{3j}
        let s = useries(&r, 2, &[(0, 2), (2, 1)], 10);
        let phi = s.phi_substitute(3, 24);
        assert_eq!(phi.prec(), 24);
        for j in 0..24 {
            let expected = if j % 3 == 0 { s.coeff(j / 3) } else { r.zero() };
            assert_eq!(phi.coeff(j), expected);
        }
        assert_eq!(phi, useries(&r, 2, &[(0, 2), (6, 1)], 24));
    }

    #[test]
    fn valuation_examples() {
        let r = f3();
        assert_eq!(VSeries::from_ints(&r, &[0, 0, 1, 1], 6).valuation(), Some(2));
        assert_eq!(VSeries::zero(&r, 7).valuation(), None);
        let re = CoeffRing::new(3, 1, 2).unwrap();
        assert_eq!(VSeries::monomial(&re, re.eps_pow(1), 1, 4).valuation(), Some(1));
    }

    #[test]
    fn divide_exact_examples() {
        let r = f3();
        let e = 8;
        let ue = useries(&r, e, &[(e, 1)], 40);
        assert_eq!(ue.divide_exact(e).unwrap(), useries(&r, e, &[(0, 1)], 32));
        // (v - v^2) / u^e = 1 - v
        let s = useries(&r, e, &[(e, 1), (2 * e, -1)], 40);
        assert_eq!(s.divide_exact(e).unwrap(), useries(&r, e, &[(0, 1), (e, -1)], 32));
        let s = useries(&r, 2, &[(1, 1), (2, 1)], 40);
        assert_eq!(s.divide_exact(2), Err(Error::NonDivisible));
        // below the floor
        let s = useries(&r, 8, &[(9, 1)], 10);
        assert!(matches!(s.divide_exact(8), Err(Error::PrecisionExhausted(_))));
    }

    #[test]
    fn v_and_u_views_agree() {
        let r = f3();
        let s = VSeries::from_ints(&r, &[1, 2, 0, 1], 5);
        let u = s.to_useries(4);
        assert!(u.lies_in_v());
        assert_eq!(u.prec(), 20);
        assert_eq!(u.to_vseries().unwrap(), s);
        assert!(useries(&r, 4, &[(3, 1)], 20).to_vseries().is_err());
    }

    #[test]
    fn product_precision_accounts_for_valuations() {
        let r = f3();
        let a = VSeries::monomial(&r, r.one(), 3, 10);
        let b = VSeries::from_ints(&r, &[1, 1], 6);
        let ab = &a * &b;
        // known modulo v^{min(10+0, 6+3)}
        assert_eq!(ab.prec(), 9);
        assert_eq!(ab, VSeries::from_ints(&r, &[0, 0, 0, 1, 1], 9));
    }

    #[test]
    fn series_json_round_trip() {
        let r = CoeffRing::new(3, 2, 2).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let s = VSeries::random(&r, 7, &mut rng);
        let json = serde_json::to_string(&s.to_repr()).unwrap();
        let back: SeriesRepr = serde_json::from_str(&json).unwrap();
        assert_eq!(VSeries::from_repr(&r, &back).unwrap(), s);
        let u = s.to_useries(8);
        assert_eq!(USeries::from_repr(&r, 8, &u.to_repr()).unwrap(), u);
    }

    fn ring_for(which: usize) -> CoeffRing {
        match which {
            0 => CoeffRing::new(3, 1, 1),
            1 => CoeffRing::new(5, 2, 1),
            _ => CoeffRing::new(3, 1, 2),
        }
        .unwrap()
    }

    proptest! {
        #[test]
        fn series_ring_axioms(seed in any::<u64>(), which in 0usize..3, n in 1usize..12) {
            let r = ring_for(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let a = VSeries::random(&r, n, &mut rng);
            let b = VSeries::random(&r, n, &mut rng);
            let c = VSeries::random(&r, n, &mut rng);
            prop_assert!((&(&a * &b) * &c).eq_at(&(&a * &(&b * &c))));
            prop_assert!((&a * &(&b + &c)).eq_at(&(&(&a * &b) + &(&a * &c))));
            prop_assert!((&a * &b).eq_at(&(&b * &a)));
        }

        #[test]
        fn inverse_is_two_sided(seed in any::<u64>(), which in 0usize..3, n in 1usize..12) {
            let r = ring_for(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut a = VSeries::random(&r, n, &mut rng);
            a.set_coeff(0, r.random_unit(&mut rng));
            let b = a.inverse().unwrap();
            prop_assert_eq!(&a * &b, VSeries::one(&r, n));
            let mut z = a.clone();
            z.set_coeff(0, r.random_nonunit(&mut rng));
            prop_assert_eq!(z.inverse(), Err(Error::NotInvertible));
        }

        #[test]
        fn phi_is_multiplicative(seed in any::<u64>(), which in 0usize..3, n in 1usize..10) {
            let r = ring_for(which);
            let p = r.p() as usize;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let a = VSeries::random(&r, n, &mut rng);
            let b = VSeries::random(&r, n, &mut rng);
            let cap = 3 * n;
            prop_assert!((&a * &b).phi(p, cap).eq_at(&(&a.phi(p, cap) * &b.phi(p, cap))));
            let (ua, ub) = (a.to_useries(2), b.to_useries(2));
            let cap = 6 * n;
            prop_assert_eq!(
                (&ua * &ub).phi_substitute(p, cap).truncate(2 * n),
                (&ua.phi_substitute(p, cap) * &ub.phi_substitute(p, cap)).truncate(2 * n)
            );
        }

        #[test]
        fn divide_exact_undoes_shift(seed in any::<u64>(), which in 0usize..3, r in 0usize..6) {
            let ring = ring_for(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let s = VSeries::random(&ring, 10, &mut rng).to_useries(2);
            prop_assert_eq!(s.shift(r).divide_exact(r).unwrap(), s.clone());
            let v = VSeries::random(&ring, 5, &mut rng);
            prop_assert_eq!(v.mul_v_pow(r).div_v_pow(r).unwrap(), v);
        }
    }
}
