//! Breuil-Kisin data: shaped Frobenius matrices, genres, Hodge type v0,
//! inertial base change and the restriction to the eta'-eigenspace.
//!
//! A shaped matrix for the exponent `gamma` is the full matrix
//! `[[s1, u^{e-gamma} s2], [u^gamma s3, s4]]` with `s_j` in `R[[v]]`; only the
//! four series are stored. Frobenius matrices and inertial base changes at
//! index `i` are both shaped for `gamma_i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coeffring::{CoeffElement, CoeffRing, RingSpec, SeriesRepr, USeries, VSeries};
use crate::error::{Error, Result};
use crate::tametype::TameType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Genre {
    #[serde(rename = "I_eta")]
    IEta,
    #[serde(rename = "I_eta_prime")]
    IEtaPrime,
    #[serde(rename = "II")]
    II,
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Genre::IEta => "I_eta",
            Genre::IEtaPrime => "I_eta'",
            Genre::II => "II",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Eta,
    EtaPrime,
}

/// Working precision in `v` used when none is given: `p (f + 2)`.
pub fn default_nv(tau: &TameType) -> usize {
    tau.p() as usize * (tau.f() + 2)
}

/// A 2x2 matrix over `R[[v]]`, row-major `[a, b, c, d]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Mat2(pub [VSeries; 4]);

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{:?}, {:?}], [{:?}, {:?}]]", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

impl Mat2 {
    pub fn new(a: VSeries, b: VSeries, c: VSeries, d: VSeries) -> Self {
        Mat2([a, b, c, d])
    }

    pub fn from_scalars(ring: &CoeffRing, x: [CoeffElement; 4], prec: usize) -> Self {
        Mat2(x.map(|a| VSeries::constant(ring, a, prec)))
    }

    pub fn identity(ring: &CoeffRing, prec: usize) -> Self {
        Self::diag(ring, ring.one(), ring.one(), prec)
    }

    pub fn diag(ring: &CoeffRing, x: CoeffElement, y: CoeffElement, prec: usize) -> Self {
        Self::from_scalars(ring, [x, ring.zero(), ring.zero(), y], prec)
    }

    pub fn ring(&self) -> &CoeffRing {
        self.0[0].ring()
    }

    pub fn prec(&self) -> usize {
        self.0.iter().map(VSeries::prec).min().unwrap_or(0)
    }

    pub fn entry(&self, r: usize, c: usize) -> &VSeries {
        &self.0[2 * r + c]
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let [a, b, c, d] = &self.0;
        let [x, y, z, w] = &o.0;
        Mat2([&(a * x) + &(b * z), &(a * y) + &(b * w), &(c * x) + &(d * z), &(c * y) + &(d * w)])
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2(std::array::from_fn(|j| &self.0[j] + &o.0[j]))
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2(std::array::from_fn(|j| &self.0[j] - &o.0[j]))
    }

    pub fn det(&self) -> VSeries {
        &(&self.0[0] * &self.0[3]) - &(&self.0[1] * &self.0[2])
    }

    pub fn adjugate(&self) -> Mat2 {
        let [a, b, c, d] = &self.0;
        Mat2([d.clone(), -b, -c, a.clone()])
    }

    pub fn scale(&self, s: &VSeries) -> Mat2 {
        Mat2(std::array::from_fn(|j| &self.0[j] * s))
    }

    /// Inverse over `R[[v]]`; the determinant must be a unit.
    pub fn inverse(&self) -> Result<Mat2> {
        let dinv = self.det().inverse()?;
        Ok(self.adjugate().scale(&dinv))
    }

    pub fn phi(&self, p: usize, cap: usize) -> Mat2 {
        Mat2(std::array::from_fn(|j| self.0[j].phi(p, cap)))
    }

    /// `Ad(diag(v^{p-1-z}, 1))(phi(self))`; the lower-left entry must be
    /// divisible by `v`, which makes the result integral.
    pub fn ad_phi(&self, p: usize, z: usize, cap: usize) -> Result<Mat2> {
        let [q, r, s, t] = &self.0;
        let s_over_v = s.div_v_pow(1)?;
        Ok(Mat2([
            q.phi(p, cap),
            r.phi(p, cap).mul_v_pow(p - 1 - z).truncate(cap),
            s_over_v.phi(p, cap).mul_v_pow(1 + z).truncate(cap),
            t.phi(p, cap),
        ]))
    }

    pub fn truncate(&self, prec: usize) -> Mat2 {
        Mat2(std::array::from_fn(|j| self.0[j].truncate(prec)))
    }

    pub fn eq_at(&self, o: &Mat2) -> bool {
        (0..4).all(|j| self.0[j].eq_at(&o.0[j]))
    }

    pub fn constants(&self) -> [CoeffElement; 4] {
        std::array::from_fn(|j| self.0[j].constant_part())
    }

    pub fn is_scalar(&self) -> bool {
        self.0.iter().all(VSeries::is_scalar)
    }

    /// Smallest v-valuation among the entries, `None` if all vanish.
    pub fn valuation(&self) -> Option<usize> {
        self.0.iter().filter_map(VSeries::valuation).min()
    }
}

/// A 2x2 matrix over `R[[u]]` of the inertial shape for `gamma`.
#[derive(Clone, PartialEq, Eq)]
pub struct Shaped {
    gamma: u64,
    e: u64,
    s: [VSeries; 4],
}

impl fmt::Debug for Shaped {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [s1, s2, s3, s4] = &self.s;
        let (e, g) = (self.e, self.gamma);
        write!(f, "[[{s1:?}, u^{}*({s2:?})], [u^{g}*({s3:?}), {s4:?}]]", e - g)
    }
}

pub type FrobeniusMatrix = Shaped;

impl Shaped {
    pub fn new(gamma: u64, e: u64, s: [VSeries; 4]) -> Self {
        Shaped { gamma, e, s }
    }

    pub fn identity(ring: &CoeffRing, gamma: u64, e: u64, prec: usize) -> Self {
        Self::from_scalars(ring, gamma, e, [ring.one(), ring.zero(), ring.zero(), ring.one()], prec)
    }

    pub fn from_scalars(ring: &CoeffRing, gamma: u64, e: u64, x: [CoeffElement; 4], prec: usize) -> Self {
        Shaped { gamma, e, s: x.map(|a| VSeries::constant(ring, a, prec)) }
    }

    /// `[[v a, u^{e-gamma} b], [u^gamma c, d]]` with scalars `a, b, c, d`.
    pub fn eta_scalars(ring: &CoeffRing, gamma: u64, e: u64, x: [CoeffElement; 4], prec: usize) -> Self {
        let [a, b, c, d] = x;
        let mut m = Self::from_scalars(ring, gamma, e, [ring.zero(), b, c, d], prec);
        m.s[0] = VSeries::monomial(ring, a, 1, prec);
        m
    }

    /// `[[a, u^{e-gamma} b], [u^gamma c, v d]]` with scalars `a, b, c, d`.
    pub fn eta_prime_scalars(ring: &CoeffRing, gamma: u64, e: u64, x: [CoeffElement; 4], prec: usize) -> Self {
        let [a, b, c, d] = x;
        let mut m = Self::from_scalars(ring, gamma, e, [a, b, c, ring.zero()], prec);
        m.s[3] = VSeries::monomial(ring, d, 1, prec);
        m
    }

    pub fn gamma(&self) -> u64 {
        self.gamma
    }
    pub fn e(&self) -> u64 {
        self.e
    }
    pub fn ring(&self) -> &CoeffRing {
        self.s[0].ring()
    }
    pub fn s(&self) -> &[VSeries; 4] {
        &self.s
    }
    pub fn s1(&self) -> &VSeries {
        &self.s[0]
    }
    pub fn s2(&self) -> &VSeries {
        &self.s[1]
    }
    pub fn s3(&self) -> &VSeries {
        &self.s[2]
    }
    pub fn s4(&self) -> &VSeries {
        &self.s[3]
    }

    pub fn prec(&self) -> usize {
        self.s.iter().map(VSeries::prec).min().unwrap_or(0)
    }

    pub fn constants(&self) -> [CoeffElement; 4] {
        std::array::from_fn(|j| self.s[j].constant_part())
    }

    pub fn is_scalar(&self) -> bool {
        self.s.iter().all(VSeries::is_scalar)
    }

    pub fn truncate(&self, prec: usize) -> Shaped {
        Shaped { gamma: self.gamma, e: self.e, s: std::array::from_fn(|j| self.s[j].truncate(prec)) }
    }

    pub fn eq_at(&self, o: &Shaped) -> bool {
        self.gamma == o.gamma && (0..4).all(|j| self.s[j].eq_at(&o.s[j]))
    }

    pub fn mul(&self, o: &Shaped) -> Shaped {
        assert_eq!(self.gamma, o.gamma, "multiplying matrices of different shapes");
        let [a1, a2, a3, a4] = &self.s;
        let [b1, b2, b3, b4] = &o.s;
        Shaped {
            gamma: self.gamma,
            e: self.e,
            s: [
                &(a1 * b1) + &(a2 * b3).mul_v_pow(1),
                &(a1 * b2) + &(a2 * b4),
                &(a3 * b1) + &(a4 * b3),
                &(a3 * b2).mul_v_pow(1) + &(a4 * b4),
            ],
        }
    }

    pub fn add(&self, o: &Shaped) -> Shaped {
        Shaped { gamma: self.gamma, e: self.e, s: std::array::from_fn(|j| &self.s[j] + &o.s[j]) }
    }

    pub fn sub(&self, o: &Shaped) -> Shaped {
        Shaped { gamma: self.gamma, e: self.e, s: std::array::from_fn(|j| &self.s[j] - &o.s[j]) }
    }

    /// Left multiplication by the diagonal scalar matrix `diag(x, y)`.
    pub fn scale_rows(&self, x: &CoeffElement, y: &CoeffElement) -> Shaped {
        let [s1, s2, s3, s4] = &self.s;
        Shaped { gamma: self.gamma, e: self.e, s: [s1.scale(x), s2.scale(x), s3.scale(y), s4.scale(y)] }
    }

    /// Right multiplication by the diagonal scalar matrix `diag(x, y)`.
    pub fn scale_cols(&self, x: &CoeffElement, y: &CoeffElement) -> Shaped {
        let [s1, s2, s3, s4] = &self.s;
        Shaped { gamma: self.gamma, e: self.e, s: [s1.scale(x), s2.scale(y), s3.scale(x), s4.scale(y)] }
    }

    /// The determinant `s1 s4 - v s2 s3`.
    pub fn det(&self) -> VSeries {
        &(&self.s[0] * &self.s[3]) - &(&self.s[1] * &self.s[2]).mul_v_pow(1)
    }

    pub fn inverse(&self) -> Result<Shaped> {
        let dinv = self.det().inverse()?;
        let [s1, s2, s3, s4] = &self.s;
        Ok(Shaped { gamma: self.gamma, e: self.e, s: [s4 * &dinv, &(-s2) * &dinv, &(-s3) * &dinv, s1 * &dinv] })
    }

    /// Applies `u -> u^p` to a matrix shaped for `gamma_{i-1}`, giving one
    /// shaped for `gamma_i`, using `p gamma_{i-1} = z_i e + gamma_i`.
    pub fn phi(&self, tau: &TameType, i: usize, cap: usize) -> Shaped {
        let p = tau.p() as usize;
        let z = tau.z_at(i as i64) as usize;
        debug_assert_eq!(self.gamma, tau.gamma_at(i as i64 - 1));
        let [s1, s2, s3, s4] = &self.s;
        Shaped {
            gamma: tau.gamma_at(i as i64),
            e: self.e,
            s: [
                s1.phi(p, cap),
                s2.phi(p, cap).mul_v_pow(p - 1 - z).truncate(cap),
                s3.phi(p, cap).mul_v_pow(z).truncate(cap),
                s4.phi(p, cap),
            ],
        }
    }

    pub fn genre(&self) -> Result<Genre> {
        let r = self.ring();
        let (c1, c4) = (self.s[0].constant_part(), self.s[3].constant_part());
        if !r.is_zero(&r.mul(&c1, &c4)) {
            return Err(Error::NotHodgeV0(0));
        }
        Ok(match (r.is_unit(&c1), r.is_unit(&c4)) {
            (false, true) => Genre::IEta,
            (true, false) => Genre::IEtaPrime,
            _ => Genre::II,
        })
    }

    /// eta-form when `v | s1`, else eta'-form when `v | s4`.
    pub fn form(&self) -> Option<Form> {
        let r = self.ring();
        if r.is_zero(&self.s[0].constant_part()) {
            Some(Form::Eta)
        } else if r.is_zero(&self.s[3].constant_part()) {
            Some(Form::EtaPrime)
        } else {
            None
        }
    }

    /// The four entries as series in `u`.
    pub fn to_full(&self) -> [USeries; 4] {
        let e = self.e as usize;
        let g = self.gamma as usize;
        [
            self.s[0].to_useries(e),
            self.s[1].to_useries(e).shift(e - g),
            self.s[2].to_useries(e).shift(g),
            self.s[3].to_useries(e),
        ]
    }

    /// Reads a full matrix over `R[[u]]`, checking the exponent classes.
    pub fn from_full(full: &[USeries; 4], gamma: u64, e: u64) -> Result<Shaped> {
        let shifts = [0, (e - gamma) as usize, gamma as usize, 0];
        let mut s = Vec::with_capacity(4);
        for (entry, &shift) in full.iter().zip(&shifts) {
            if !entry.exponents_congruent(shift) || entry.valuation().is_some_and(|v| v < shift) {
                return Err(Error::Mismatch(format!("entry has exponents outside {shift} + eZ")));
            }
            s.push(entry.divide_exact_with_floor(shift, 1)?.to_vseries()?);
        }
        let s: [VSeries; 4] = s.try_into().expect("four entries");
        Ok(Shaped { gamma, e, s })
    }

    /// Hodge type v0, computed on the full determinant in `u`: the terms below
    /// `u^e` vanish and the `u^e` coefficient is a unit.
    pub fn is_hodge_v0(&self) -> Result<bool> {
        let [a, b, c, d] = self.to_full();
        let det = &(&a * &d) - &(&b * &c);
        let e = self.e as usize;
        if det.prec() <= e {
            return Err(Error::PrecisionExhausted("determinant not known beyond u^e".into()));
        }
        Ok(det.terms().all(|(j, _)| j >= e) && self.ring().is_unit(&det.coeff(e)))
    }

    /// `[[s1, s2], [v s3, s4]]`, the Frobenius on the eta'-eigenspace.
    pub fn restrict(&self) -> Mat2 {
        let [s1, s2, s3, s4] = &self.s;
        Mat2([s1.clone(), s2.clone(), s3.mul_v_pow(1), s4.clone()])
    }

    pub fn from_restricted(m: &Mat2, gamma: u64, e: u64) -> Result<Shaped> {
        let [a, b, c, d] = &m.0;
        Ok(Shaped { gamma, e, s: [a.clone(), b.clone(), c.div_v_pow(1)?, d.clone()] })
    }
}

pub fn genre_of(f: &FrobeniusMatrix) -> Result<Genre> {
    f.genre()
}

pub fn eta_prime_restrict(f: &FrobeniusMatrix) -> Mat2 {
    f.restrict()
}

/// The rank-2 Breuil-Kisin datum: one Frobenius matrix per index in `Z/f`.
#[derive(Debug, Clone, PartialEq)]
pub struct BKModule {
    tau: TameType,
    ring: CoeffRing,
    frobs: Vec<Shaped>,
}

impl BKModule {
    pub fn new(tau: TameType, ring: CoeffRing, frobs: Vec<Shaped>) -> Result<Self> {
        if frobs.len() != tau.f() {
            return Err(Error::Mismatch(format!("{} Frobenius matrices for f = {}", frobs.len(), tau.f())));
        }
        if ring.p() != tau.p() {
            return Err(Error::Mismatch("ring and type have different characteristic".into()));
        }
        for (i, m) in frobs.iter().enumerate() {
            if m.gamma() != tau.gamma()[i] || m.e() != tau.e() {
                return Err(Error::Mismatch(format!("matrix {i} is not shaped for gamma_{i}")));
            }
            if m.ring() != &ring {
                return Err(Error::Mismatch(format!("matrix {i} has coefficients in another ring")));
            }
        }
        Ok(BKModule { tau, ring, frobs })
    }

    pub fn tau(&self) -> &TameType {
        &self.tau
    }
    pub fn ring(&self) -> &CoeffRing {
        &self.ring
    }
    pub fn frobs(&self) -> &[Shaped] {
        &self.frobs
    }
    pub fn frob(&self, i: i64) -> &Shaped {
        &self.frobs[i.rem_euclid(self.frobs.len() as i64) as usize]
    }
    pub fn f(&self) -> usize {
        self.frobs.len()
    }

    /// Working precision: the largest precision among the entries.
    pub fn nv(&self) -> usize {
        self.frobs.iter().flat_map(|m| m.s.iter().map(VSeries::prec)).max().unwrap_or(0)
    }

    pub fn hodge_v0(&self) -> Result<bool> {
        for m in &self.frobs {
            if !m.is_hodge_v0()? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn genres(&self) -> Result<Vec<Genre>> {
        self.frobs
            .iter()
            .enumerate()
            .map(|(i, m)| m.genre().map_err(|_| Error::NotHodgeV0(i)))
            .collect()
    }

    pub fn forms(&self) -> Vec<Option<Form>> {
        self.frobs.iter().map(Shaped::form).collect()
    }

    pub fn is_regular(&self) -> Result<bool> {
        Ok(self.hodge_v0()? && self.frobs.iter().all(|m| m.form().is_some()))
    }

    /// `F_i -> P_i^{-1} F_i phi(P_{i-1})`.
    pub fn apply_base_change(&self, p: &[Shaped]) -> Result<BKModule> {
        if p.len() != self.f() {
            return Err(Error::Mismatch("base change has the wrong length".into()));
        }
        let cap = self.nv();
        let f = self.f();
        let frobs = (0..f)
            .map(|i| {
                let pinv = p[i].inverse()?;
                let phi_prev = p[(i + f - 1) % f].phi(&self.tau, i, cap);
                Ok(pinv.mul(&self.frobs[i]).mul(&phi_prev))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BKModule { tau: self.tau.clone(), ring: self.ring.clone(), frobs })
    }

    pub fn eta_prime_restrict(&self) -> Vec<Mat2> {
        self.frobs.iter().map(Shaped::restrict).collect()
    }

    pub fn truncate(&self, prec: usize) -> BKModule {
        BKModule { frobs: self.frobs.iter().map(|m| m.truncate(prec)).collect(), ..self.clone() }
    }

    pub fn eq_at(&self, o: &BKModule) -> bool {
        self.frobs.len() == o.frobs.len() && self.frobs.iter().zip(&o.frobs).all(|(a, b)| a.eq_at(b))
    }

    pub fn to_repr(&self) -> BKModuleRepr {
        BKModuleRepr {
            tau: self.tau.clone(),
            ring: Some(self.ring.spec()),
            frobs: self
                .frobs
                .iter()
                .enumerate()
                .map(|(i, m)| FrobRepr {
                    i,
                    s1: m.s[0].to_repr(),
                    s2: m.s[1].to_repr(),
                    s3: m.s[2].to_repr(),
                    s4: m.s[3].to_repr(),
                })
                .collect(),
        }
    }

    pub fn from_repr(repr: &BKModuleRepr) -> Result<BKModule> {
        let tau = repr.tau.clone();
        let spec = match repr.ring {
            Some(spec) => spec,
            None => {
                let k = repr
                    .frobs
                    .iter()
                    .flat_map(|fr| [&fr.s1, &fr.s2, &fr.s3, &fr.s4])
                    .flat_map(|s| s.terms.iter().map(|(_, d)| d.len()))
                    .max()
                    .unwrap_or(1)
                    .max(1);
                RingSpec { p: tau.p(), m: 1, k }
            }
        };
        let ring = spec.build()?;
        let mut frobs: Vec<Option<Shaped>> = vec![None; tau.f()];
        for fr in &repr.frobs {
            let slot = frobs
                .get_mut(fr.i)
                .ok_or_else(|| Error::Parse(format!("Frobenius index {} out of range", fr.i)))?;
            let s = [&fr.s1, &fr.s2, &fr.s3, &fr.s4].map(|r| VSeries::from_repr(&ring, r));
            let [a, b, c, d] = s;
            *slot = Some(Shaped::new(tau.gamma()[fr.i], tau.e(), [a?, b?, c?, d?]));
        }
        let frobs = frobs
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or_else(|| Error::Parse(format!("missing Frobenius matrix {i}"))))
            .collect::<Result<Vec<_>>>()?;
        BKModule::new(tau, ring, frobs)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrobRepr {
    pub i: usize,
    pub s1: SeriesRepr,
    pub s2: SeriesRepr,
    pub s3: SeriesRepr,
    pub s4: SeriesRepr,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BKModuleRepr {
    pub tau: TameType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingSpec>,
    pub frobs: Vec<FrobRepr>,
}

pub fn hodge_v0(m: &BKModule) -> Result<bool> {
    m.hodge_v0()
}

pub fn apply_base_change(m: &BKModule, p: &[Shaped]) -> Result<BKModule> {
    m.apply_base_change(p)
}

/// Checks full `u`-matrices against the inertial exponent classes and
/// invertibility over `R[[u]]`.
pub fn validate_base_change(full: &[[USeries; 4]], tau: &TameType) -> bool {
    full.len() == tau.f()
        && full.iter().enumerate().all(|(i, m)| {
            let [a, b, c, d] = m;
            let det = &(a * d) - &(b * c);
            Shaped::from_full(m, tau.gamma()[i], tau.e()).is_ok() && a.ring().is_unit(&det.coeff(0))
        })
}

/// `G_i -> J_i^{-1} G_i Ad(diag(v^{p-1-z_i}, 1))(phi(J_{i-1}))` on the
/// eta'-eigenspace.
pub fn restricted_base_change(g: &[Mat2], j: &[Mat2], tau: &TameType, cap: usize) -> Result<Vec<Mat2>> {
    let f = tau.f();
    let p = tau.p() as usize;
    (0..f)
        .map(|i| {
            let twisted = j[(i + f - 1) % f].ad_phi(p, tau.z()[i] as usize, cap)?;
            Ok(j[i].inverse()?.mul(&g[i]).mul(&twisted))
        })
        .collect()
}

/// A series whose constant term is the given element and whose higher terms
/// are random (or zero when `scalar`).
fn series_with_constant<G: rand::Rng + ?Sized>(
    ring: &CoeffRing,
    c: CoeffElement,
    prec: usize,
    scalar: bool,
    rng: &mut G,
) -> VSeries {
    let mut s = if scalar { VSeries::zero(ring, prec) } else { VSeries::random(ring, prec, rng) };
    s.set_coeff(0, c);
    s
}

/// A random regular Frobenius matrix at index `i` in the given form and genre.
/// With `scalar`, the four series are constants (the top-left, resp.
/// bottom-right, entry is then a scalar times `v`).
pub fn random_frobenius<G: rand::Rng + ?Sized>(
    ring: &CoeffRing,
    tau: &TameType,
    i: usize,
    form: Form,
    genre: Genre,
    prec: usize,
    scalar: bool,
    rng: &mut G,
) -> Result<Shaped> {
    // Write the matrix as [[x, b], [c, y]] where the diagonal entry in the
    // chosen form is v * w; the cofactor w * other - b c must be a unit.
    let (unit_diag, bc_units) = match (form, genre) {
        (Form::Eta, Genre::IEta) | (Form::EtaPrime, Genre::IEtaPrime) => (true, false),
        (_, Genre::II) => (false, true),
        _ => return Err(Error::Mismatch(format!("genre {genre} is impossible in {form:?}-form"))),
    };
    let pick = |rng: &mut G, unit: bool| if unit { ring.random_unit(rng) } else { ring.random(rng) };
    let (b, c) = (pick(rng, bc_units), pick(rng, bc_units));
    let (other, w) = if unit_diag {
        let other = ring.random_unit(rng);
        let target = ring.random_unit(rng);
        let w = ring.div(&ring.add(&target, &ring.mul(&b, &c)), &other)?;
        (other, w)
    } else {
        (ring.random_nonunit(rng), ring.random(rng))
    };
    let b = series_with_constant(ring, b, prec, scalar, rng);
    let c = series_with_constant(ring, c, prec, scalar, rng);
    let other = series_with_constant(ring, other, prec, scalar, rng);
    let w = series_with_constant(ring, w, prec, scalar, rng).mul_v_pow(1).truncate(prec);
    let s = match form {
        Form::Eta => [w, b, c, other],
        Form::EtaPrime => [other, b, c, w],
    };
    Ok(Shaped::new(tau.gamma()[i], tau.e(), s))
}

/// A random regular module with prescribed forms; genres are drawn at random
/// among those compatible with each form (genre II only when the residue
/// field allows a non-unit diagonal, which it always does).
pub fn random_module<G: rand::Rng + ?Sized>(
    ring: &CoeffRing,
    tau: &TameType,
    forms: &[Form],
    prec: usize,
    scalar: bool,
    rng: &mut G,
) -> Result<BKModule> {
    let frobs = forms
        .iter()
        .enumerate()
        .map(|(i, &form)| {
            let genre = if rng.gen_bool(0.5) {
                Genre::II
            } else if form == Form::Eta {
                Genre::IEta
            } else {
                Genre::IEtaPrime
            };
            random_frobenius(ring, tau, i, form, genre, prec, scalar, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    BKModule::new(tau.clone(), ring.clone(), frobs)
}

/// A random inertial base change (unit diagonal constants).
pub fn random_base_change<G: rand::Rng + ?Sized>(
    ring: &CoeffRing,
    tau: &TameType,
    prec: usize,
    rng: &mut G,
) -> Vec<Shaped> {
    (0..tau.f())
        .map(|i| {
            let mut s: [VSeries; 4] = std::array::from_fn(|_| VSeries::random(ring, prec, rng));
            s[0].set_coeff(0, ring.random_unit(rng));
            s[3].set_coeff(0, ring.random_unit(rng));
            Shaped::new(tau.gamma()[i], tau.e(), s)
        })
        .collect()
}
