//! Tame principal series types, obstruction predicates, shapes and the
//! dictionary between shapes and Serre weights.
//!
//! Indices live in `Z/f`; every vector indexed by `i` is read cyclically.

use serde::{Deserialize, Serialize};

use crate::coeffring::is_prime;
use crate::error::{Error, Result};

/// A subset of `Z/f`. Used both for shapes `J` and for the set `T` of indices
/// whose Frobenius is in eta-form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SubsetRepr", into = "SubsetRepr")]
pub struct Subset {
    mask: Vec<bool>,
}

pub type Shape = Subset;
pub type TSet = Subset;

#[derive(Serialize, Deserialize)]
struct SubsetRepr {
    f: usize,
    members: Vec<usize>,
}

impl TryFrom<SubsetRepr> for Subset {
    type Error = Error;
    fn try_from(r: SubsetRepr) -> Result<Self> {
        Subset::from_indices(r.f, &r.members)
    }
}

impl From<Subset> for SubsetRepr {
    fn from(s: Subset) -> Self {
        SubsetRepr { f: s.f(), members: s.members() }
    }
}

impl Subset {
    pub fn full(f: usize) -> Self {
        Subset { mask: vec![true; f] }
    }

    pub fn empty(f: usize) -> Self {
        Subset { mask: vec![false; f] }
    }

    pub fn from_indices(f: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; f];
        for &i in members {
            if i >= f {
                return Err(Error::OutOfRange(format!("index {i} not in Z/{f}")));
            }
            mask[i] = true;
        }
        Ok(Subset { mask })
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Subset { mask }
    }

    /// All subsets of `Z/f`, in binary order.
    pub fn all(f: usize) -> impl Iterator<Item = Subset> {
        (0..1usize << f).map(move |bits| Subset { mask: (0..f).map(|i| bits >> i & 1 == 1).collect() })
    }

    pub fn f(&self) -> usize {
        self.mask.len()
    }

    /// Membership of `i mod f` (accepts any integer index).
    pub fn contains(&self, i: i64) -> bool {
        self.mask[i.rem_euclid(self.f() as i64) as usize]
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.f()).filter(|&i| self.mask[i]).collect()
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    /// `(i-1, i)` is a transition when exactly one of the two lies in the set.
    pub fn is_transition(&self, i: usize) -> bool {
        self.contains(i as i64 - 1) != self.contains(i as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TameTypeRepr", into = "TameTypeRepr")]
pub struct TameType {
    p: u32,
    z: Vec<u32>,
    gamma: Vec<u64>,
    e: u64,
    eta_prime_exp: u64,
}

#[derive(Serialize, Deserialize)]
struct TameTypeRepr {
    p: u32,
    f: usize,
    z: Vec<u32>,
    #[serde(default, skip_serializing_if = "is_zero")]
    eta_prime_exp: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

impl TryFrom<TameTypeRepr> for TameType {
    type Error = Error;
    fn try_from(r: TameTypeRepr) -> Result<Self> {
        if r.z.len() != r.f {
            return Err(Error::OutOfRange(format!("z has length {} but f = {}", r.z.len(), r.f)));
        }
        Ok(TameType::new(r.p, r.z)?.with_eta_prime_exp(r.eta_prime_exp))
    }
}

impl From<TameType> for TameTypeRepr {
    fn from(t: TameType) -> Self {
        TameTypeRepr { p: t.p, f: t.f(), eta_prime_exp: t.eta_prime_exp, z: t.z }
    }
}

/// `e = p^f - 1`, refusing sizes that would not fit the index arithmetic.
pub fn ramification(p: u32, f: usize) -> Result<u64> {
    (p as u64)
        .checked_pow(f as u32)
        .filter(|&q| q < 1 << 40)
        .map(|q| q - 1)
        .ok_or_else(|| Error::OutOfRange(format!("{p}^{f} is too large")))
}

/// `gamma_i = sum_j z_{i-j} p^j`.
pub fn gamma_from_z(p: u32, z: &[u32]) -> Result<Vec<u64>> {
    let f = z.len();
    if f == 0 {
        return Err(Error::OutOfRange("f must be at least 1".into()));
    }
    if let Some(&bad) = z.iter().find(|&&d| d >= p) {
        return Err(Error::OutOfRange(format!("digit {bad} not in [0, {}]", p - 1)));
    }
    ramification(p, f)?;
    Ok((0..f)
        .map(|i| {
            (0..f).fold(0u64, |acc, j| acc + z[(i + f - j) % f] as u64 * (p as u64).pow(j as u32))
        })
        .collect())
}

impl TameType {
    pub fn new(p: u32, z: Vec<u32>) -> Result<Self> {
        if p == 2 || !is_prime(p) {
            return Err(Error::OutOfRange(format!("p = {p} must be an odd prime")));
        }
        let gamma = gamma_from_z(p, &z)?;
        let e = ramification(p, z.len())?;
        Ok(TameType { p, z, gamma, e, eta_prime_exp: 0 })
    }

    pub fn with_eta_prime_exp(mut self, exp: u64) -> Self {
        self.eta_prime_exp = exp % self.e;
        self
    }

    pub fn p(&self) -> u32 {
        self.p
    }
    pub fn f(&self) -> usize {
        self.z.len()
    }
    pub fn e(&self) -> u64 {
        self.e
    }
    pub fn z(&self) -> &[u32] {
        &self.z
    }
    pub fn gamma(&self) -> &[u64] {
        &self.gamma
    }
    pub fn eta_prime_exp(&self) -> u64 {
        self.eta_prime_exp
    }

    /// `z_i` with `i` read modulo `f`.
    pub fn z_at(&self, i: i64) -> u32 {
        self.z[i.rem_euclid(self.f() as i64) as usize]
    }

    pub fn gamma_at(&self, i: i64) -> u64 {
        self.gamma[i.rem_euclid(self.f() as i64) as usize]
    }

    /// eta = eta' exactly when the digits are all 0 or all p-1.
    pub fn eta_equals_eta_prime(&self) -> bool {
        self.z.iter().all(|&d| d == 0) || self.z.iter().all(|&d| d == self.p - 1)
    }

    /// The digits seen by the obstruction predicates: `z` itself, or the
    /// modified digits attached to a set `T` of eta-form indices.
    pub fn tilde_z(&self, t: &TSet) -> Vec<u32> {
        (0..self.f())
            .map(|i| {
                let z = self.z[i];
                match (t.contains(i as i64 - 1), t.contains(i as i64)) {
                    (true, true) => z,
                    (false, true) => z + 1,
                    (true, false) => self.p - z,
                    (false, false) => self.p - 1 - z,
                }
            })
            .collect()
    }

    fn digits_for(&self, t: Option<&TSet>) -> Vec<u32> {
        match t {
            Some(t) => self.tilde_z(t),
            None => self.z.clone(),
        }
    }

    pub fn first_obstruction(&self, t: Option<&TSet>) -> bool {
        first_obstruction(self.p, &self.digits_for(t))
    }

    pub fn second_obstruction(&self, t: Option<&TSet>) -> bool {
        second_obstruction(self.p, &self.digits_for(t))
    }

    /// Neither obstruction and eta != eta'.
    pub fn is_unobstructed(&self) -> bool {
        !self.eta_equals_eta_prime() && !self.first_obstruction(None) && !self.second_obstruction(None)
    }

    pub fn p_tau_contains(&self, j: &Shape) -> bool {
        (0..self.f() as i64).all(|i| {
            let (prev, cur) = (j.contains(i - 1), j.contains(i));
            let z = self.z_at(i);
            !(prev && !cur && z == self.p - 1) && !(!prev && cur && z == 0)
        })
    }

    pub fn weight_from_shape(&self, j: &Shape) -> Result<SerreWeight> {
        if !self.p_tau_contains(j) {
            return Err(Error::ShapeNotAdmissible);
        }
        let p = self.p as i64;
        let delta = |b: bool| b as i64;
        let mut a = Vec::with_capacity(self.f());
        let mut b = Vec::with_capacity(self.f());
        for i in 0..self.f() as i64 {
            let z = self.z_at(i) as i64;
            let in_j = j.contains(i);
            if j.contains(i - 1) {
                a.push(z + delta(!in_j));
                b.push(p - 1 - z - delta(!in_j));
            } else {
                a.push(0);
                b.push(z - delta(in_j));
            }
        }
        let a = a.into_iter().map(|x| x as u32).collect();
        let b = b.into_iter().map(|x| x as u32).collect();
        Ok(SerreWeight { p: self.p, a, b, twist: self.eta_prime_exp })
    }

    /// The exponents `r_i` of the maximal refined shape attached to `J`.
    pub fn max_refined_shape(&self, j: &Shape) -> Vec<u64> {
        (0..self.f() as i64)
            .map(|i| match (j.contains(i - 1), j.contains(i)) {
                (true, false) => self.gamma_at(i),
                (false, true) => self.e - self.gamma_at(i),
                _ => self.e,
            })
            .collect()
    }
}

/// The periodic word is a concatenation of the blocks `1` and `(0, p-1)`.
pub fn first_obstruction(p: u32, w: &[u32]) -> bool {
    let f = w.len();
    // A tiling of a periodic word is unique, hence periodic, so some rotation
    // starts on a block boundary and tiles the length-f word exactly.
    (0..f).any(|r| {
        let rot: Vec<u32> = (0..f).map(|i| w[(i + r) % f]).collect();
        let mut i = 0;
        while i < f {
            if rot[i] == 1 {
                i += 1;
            } else if rot[i] == 0 && i + 1 < f && rot[i + 1] == p - 1 {
                i += 2;
            } else {
                return false;
            }
        }
        true
    })
}

/// The periodic word contains `(p-1, 1, ..., 1, 0)` with zero or more ones.
pub fn second_obstruction(p: u32, w: &[u32]) -> bool {
    find_pattern(w, p - 1, 1, 0).is_some()
}

/// Start index of a cyclic occurrence of `(start, middle*, end)`.
fn find_pattern(w: &[u32], start: u32, middle: u32, end: u32) -> Option<usize> {
    let f = w.len();
    (0..f).find(|&i| {
        if w[i] != start {
            return false;
        }
        for step in 1..=f {
            let d = w[(i + step) % f];
            if d == end {
                return true;
            }
            if d != middle {
                return false;
            }
        }
        false
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SerreWeight {
    pub p: u32,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    #[serde(default)]
    pub twist: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ineligibility {
    Steinberg,
    AllZero,
    AllPMinusTwo,
    /// `(0, p-2, ..., p-2, p-1)` occurs starting at this index.
    Pattern(usize),
}

impl std::fmt::Display for Ineligibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ineligibility::Steinberg => write!(f, "Steinberg (b = p-1 everywhere)"),
            Ineligibility::AllZero => write!(f, "b = 0 everywhere"),
            Ineligibility::AllPMinusTwo => write!(f, "b = p-2 everywhere"),
            Ineligibility::Pattern(i) => write!(f, "contains (0, p-2, ..., p-2, p-1) starting at index {i}"),
        }
    }
}

impl SerreWeight {
    pub fn new(p: u32, a: Vec<u32>, b: Vec<u32>, twist: u64) -> Result<Self> {
        if p == 2 || !is_prime(p) {
            return Err(Error::OutOfRange(format!("p = {p} must be an odd prime")));
        }
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::OutOfRange("a and b must be nonempty of equal length".into()));
        }
        if a.iter().chain(&b).any(|&x| x >= p) {
            return Err(Error::OutOfRange(format!("entries must lie in [0, {}]", p - 1)));
        }
        if a.iter().all(|&x| x == p - 1) {
            return Err(Error::OutOfRange("a must not be p-1 everywhere".into()));
        }
        Ok(SerreWeight { p, a, b, twist })
    }

    pub fn f(&self) -> usize {
        self.b.len()
    }

    pub fn e(&self) -> u64 {
        (self.p as u64).pow(self.f() as u32) - 1
    }

    pub fn is_steinberg(&self) -> bool {
        self.b.iter().all(|&x| x == self.p - 1)
    }

    /// Exponent of the total determinant character relative to kappa_0,
    /// using kappa_i = kappa_0^{p^{f-i}}.
    pub fn det_exponent(&self) -> u64 {
        let e = self.e();
        let f = self.f();
        let folded: u64 = self
            .a
            .iter()
            .enumerate()
            .map(|(i, &a)| a as u64 * (self.p as u64).pow(((f - i) % f) as u32) % e)
            .sum();
        (folded + self.twist) % e
    }

    /// Same isomorphism class: equal `b` and equal determinant character.
    pub fn is_isomorphic(&self, other: &SerreWeight) -> bool {
        self.p == other.p && self.b == other.b && self.det_exponent() == other.det_exponent()
    }

    pub fn eligibility(&self) -> std::result::Result<(), Ineligibility> {
        let p = self.p;
        if self.is_steinberg() {
            return Err(Ineligibility::Steinberg);
        }
        if self.b.iter().all(|&x| x == 0) {
            return Err(Ineligibility::AllZero);
        }
        if self.b.iter().all(|&x| x == p - 2) {
            return Err(Ineligibility::AllPMinusTwo);
        }
        match find_pattern(&self.b, 0, p - 2, p - 1) {
            Some(i) => Err(Ineligibility::Pattern(i)),
            None => Ok(()),
        }
    }

    pub fn is_eligible(&self) -> bool {
        self.eligibility().is_ok()
    }

    /// The principal series type attached to the weight, `z_i = p - 1 - b_i`.
    pub fn tau(&self) -> Result<TameType> {
        let p = self.p;
        if self.b.iter().all(|&x| x == 0) || self.is_steinberg() {
            return Err(Error::NotCovered);
        }
        let z: Vec<u32> = self.b.iter().map(|&b| p - 1 - b).collect();
        let e = self.e() as i64;
        let f = self.f();
        let mut exp = self.twist as i64;
        for i in 0..f {
            let w = (p as i64).pow(((f - i) % f) as u32) % e;
            exp += (self.a[i] as i64 - z[i] as i64) * w;
        }
        Ok(TameType::new(p, z)?.with_eta_prime_exp(exp.rem_euclid(e) as u64))
    }
}

pub fn tau_from_weight(sigma: &SerreWeight) -> Result<TameType> {
    sigma.tau()
}

/// All `b`-vectors in `[0, p-1]^f`, lexicographic with index 0 slowest.
pub fn all_b_vectors(p: u32, f: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..f {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..p).map(move |d| {
                    let mut w = v.clone();
                    w.push(d);
                    w
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau(p: u32, z: &[u32]) -> TameType {
        TameType::new(p, z.to_vec()).unwrap()
    }

    // Local characterization of a tiling by 1 and (0, p-1): every digit is
    // 0, 1 or p-1; every 0 is followed by p-1 and every p-1 follows a 0.
    fn tiles_locally(p: u32, w: &[u32]) -> bool {
        let f = w.len();
        (0..f).all(|i| match w[i] {
            1 => true,
            0 => w[(i + 1) % f] == p - 1,
            d if d == p - 1 => w[(i + f - 1) % f] == 0,
            _ => false,
        })
    }

    // Scan of the tripled word for (s, m, ..., m, t) of every length up to f + 1.
    fn contains_by_scan(w: &[u32], s: u32, m: u32, t: u32) -> bool {
        let f = w.len();
        let long: Vec<u32> = w.iter().cycle().take(3 * f).copied().collect();
        (0..f).any(|i| {
            (0..f).any(|k| {
                long[i] == s && long[i + 1..=i + k].iter().all(|&d| d == m) && long[i + k + 1] == t
            })
        })
    }

    #[test]
    fn gamma_examples() {
        let t = tau(3, &[2]);
        assert_eq!((t.gamma(), t.e()), (&[2][..], 2));
        assert_eq!(tau(3, &[0, 0]).gamma(), &[0, 0]);
        let t = tau(3, &[1, 2]);
        assert_eq!(t.gamma(), &[7, 5]);
        assert_eq!(3 * 7, 2 * 8 + 5);
        assert!(matches!(TameType::new(3, vec![3]), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn tilde_z_examples() {
        let t = tau(3, &[1, 2]);
        assert_eq!(t.tilde_z(&Subset::full(2)), vec![1, 2]);
        assert_eq!(t.tilde_z(&Subset::empty(2)), vec![1, 0]);
        let t = tau(3, &[1, 1]);
        // i = 0: (1 in T, 0 not in T) -> p - z; i = 1: (0 not in T, 1 in T) -> z + 1
        assert_eq!(t.tilde_z(&Subset::from_indices(2, &[1]).unwrap()), vec![2, 2]);
    }

    #[test]
    fn obstruction_examples() {
        assert!(tau(3, &[1]).first_obstruction(None));
        assert!(!tau(3, &[2]).first_obstruction(None));
        assert!(tau(3, &[0, 2]).first_obstruction(None));
        assert!(tau(3, &[2, 0]).second_obstruction(None));
        assert!(!tau(3, &[2, 2]).second_obstruction(None));
        assert!(tau(3, &[2, 1, 0]).second_obstruction(None));
    }

    #[test]
    fn p_tau_examples() {
        let t = tau(3, &[0, 1]);
        assert!(t.p_tau_contains(&Subset::full(2)));
        assert!(t.p_tau_contains(&Subset::empty(2)));
        // i=0: 1 in J, 0 not in J, z_0 = 0 != 2; i=1: 0 not in J, 1 in J, z_1 = 1 != 0
        assert!(t.p_tau_contains(&Subset::from_indices(2, &[1]).unwrap()));
        // J = {0}: i=1 has 0 in J, 1 not in J and needs z_1 != 2, fine; i=0 needs z_0 != 0
        assert!(!t.p_tau_contains(&Subset::from_indices(2, &[0]).unwrap()));
    }

    #[test]
    fn weight_from_shape_examples() {
        let t = tau(3, &[1, 2]);
        let w = t.weight_from_shape(&Subset::full(2)).unwrap();
        assert_eq!((w.a.clone(), w.b.clone()), (vec![1, 2], vec![1, 0]));
        let w = tau(5, &[0, 0, 0]).weight_from_shape(&Subset::full(3)).unwrap();
        assert_eq!((w.a.clone(), w.b.clone()), (vec![0, 0, 0], vec![4, 4, 4]));
        assert!(w.is_steinberg());
        // J = {0} is not in P_tau since z_1 = p - 1 and 0 in J, 1 not in J
        assert_eq!(
            t.weight_from_shape(&Subset::from_indices(2, &[0]).unwrap()),
            Err(Error::ShapeNotAdmissible)
        );
        // J = {1}: i=0: prev in, cur out: a=z+1=2, b=p-1-z-1=0; i=1: prev out, cur in: a=0, b=z-1=1
        let w = t.weight_from_shape(&Subset::from_indices(2, &[1]).unwrap()).unwrap();
        assert_eq!((w.a, w.b), (vec![2, 0], vec![0, 1]));
    }

    #[test]
    fn tau_from_weight_examples() {
        let s = SerreWeight::new(3, vec![1, 2], vec![1, 0], 0).unwrap();
        let t = s.tau().unwrap();
        assert_eq!((t.z(), t.eta_prime_exp()), (&[1, 2][..], 0));
        assert_eq!(t.weight_from_shape(&Subset::full(2)).unwrap(), s);
        assert_eq!(SerreWeight::new(3, vec![0, 0], vec![0, 0], 0).unwrap().tau(), Err(Error::NotCovered));
        let s = SerreWeight::new(5, vec![0], vec![2], 0).unwrap();
        let t = s.tau().unwrap();
        assert_eq!(t.z(), &[2]);
        assert_eq!(t.eta_prime_exp(), 2);
        assert!(t.weight_from_shape(&Subset::full(1)).unwrap().is_isomorphic(&s));
    }

    #[test]
    fn eligibility_examples() {
        let w = |b: &[u32]| SerreWeight::new(3, vec![0; b.len()], b.to_vec(), 0).unwrap();
        assert!(w(&[1, 0]).is_eligible());
        assert_eq!(w(&[1, 1]).eligibility(), Err(Ineligibility::AllPMinusTwo));
        assert_eq!(w(&[0, 2]).eligibility(), Err(Ineligibility::Pattern(0)));
    }

    #[test]
    fn max_refined_shape_examples() {
        let t = tau(3, &[1, 2]);
        assert_eq!(t.max_refined_shape(&Subset::full(2)), vec![8, 8]);
        assert_eq!(t.max_refined_shape(&Subset::empty(2)), vec![8, 8]);
        assert_eq!(t.max_refined_shape(&Subset::from_indices(2, &[0]).unwrap()), vec![1, 5]);
    }

    #[test]
    fn eligibility_matches_unobstructed_type() {
        for p in [3u32, 5] {
            for f in 1..=3 {
                for b in all_b_vectors(p, f) {
                    let s = SerreWeight::new(p, vec![0; f], b.clone(), 0).unwrap();
                    if s.is_steinberg() {
                        continue;
                    }
                    let stated = !b.iter().all(|&x| x == 0)
                        && !b.iter().all(|&x| x == p - 2)
                        && !contains_by_scan(&b, 0, p - 2, p - 1);
                    assert_eq!(s.is_eligible(), stated, "{b:?}");
                    if b.iter().all(|&x| x == 0) {
                        continue;
                    }
                    assert_eq!(s.tau().unwrap().is_unobstructed(), stated, "{b:?}");
                }
            }
        }
    }

    #[test]
    fn round_trip_for_eligible_weights() {
        for p in [3u32, 5, 7] {
            for f in 1..=3 {
                let e = (p as u64).pow(f as u32) - 1;
                for b in all_b_vectors(p, f) {
                    for (a, twist) in [(vec![0; f], 0), (vec![1; f], e - 1)] {
                        let s = SerreWeight::new(p, a, b.clone(), twist).unwrap();
                        if !s.is_eligible() {
                            continue;
                        }
                        let back = s.tau().unwrap().weight_from_shape(&Subset::full(f)).unwrap();
                        assert!(back.is_isomorphic(&s), "{s:?} -> {back:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn json_shapes() {
        let t = tau(3, &[1, 2]);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"p":3,"f":2,"z":[1,2]}"#);
        assert_eq!(serde_json::from_str::<TameType>(&s).unwrap(), t);
        assert!(serde_json::from_str::<TameType>(r#"{"p":3,"f":2,"z":[1]}"#).is_err());
        let w = SerreWeight::new(3, vec![1, 2], vec![1, 0], 4).unwrap();
        assert_eq!(serde_json::from_str::<SerreWeight>(&serde_json::to_string(&w).unwrap()).unwrap(), w);
    }

    proptest! {
        #[test]
        fn gamma_recurrence(p in prop::sample::select(vec![3u32, 5, 7, 11]), z in prop::collection::vec(0u32..11, 1..5)) {
            let z: Vec<u32> = z.into_iter().map(|d| d % p).collect();
            let t = TameType::new(p, z).unwrap();
            for i in 0..t.f() as i64 {
                prop_assert!(t.gamma_at(i) < t.e() || t.z().iter().all(|&d| d == p - 1));
                prop_assert_eq!(p as u64 * t.gamma_at(i), t.z_at(i + 1) as u64 * t.e() + t.gamma_at(i + 1));
            }
        }

        #[test]
        fn obstruction_predicates_match_oracles(p in prop::sample::select(vec![3u32, 5, 7]), z in prop::collection::vec(0u32..7, 1..7)) {
            let z: Vec<u32> = z.into_iter().map(|d| d % p).collect();
            prop_assert_eq!(first_obstruction(p, &z), tiles_locally(p, &z));
            prop_assert_eq!(second_obstruction(p, &z), contains_by_scan(&z, p - 1, 1, 0));
        }

        #[test]
        fn tilde_z_on_transitions(p in prop::sample::select(vec![3u32, 5]), z in prop::collection::vec(0u32..5, 1..5), bits in any::<u8>()) {
            let z: Vec<u32> = z.into_iter().map(|d| d % p).collect();
            let f = z.len();
            let t = Subset::from_mask((0..f).map(|i| bits >> i & 1 == 1).collect());
            let ty = TameType::new(p, z.clone()).unwrap();
            prop_assert_eq!(ty.tilde_z(&Subset::full(f)), z);
            let zt = ty.tilde_z(&t);
            for i in 0..f {
                if t.is_transition(i) {
                    prop_assert!(zt[i] != 0);
                }
            }
        }
    }
}
