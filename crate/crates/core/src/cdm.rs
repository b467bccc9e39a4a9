//! The B-operator, the bad-genre predicates, the iterative reduction to CDM
//! normal form, its closed forms on scalar input, and the base changes
//! between CDM forms.

use serde::{Deserialize, Serialize};

use crate::bkmod::{BKModule, Form, Genre, Shaped};
use crate::coeffring::{CoeffElement, CoeffRing, VSeries};
use crate::error::{Error, Result};
use crate::tametype::{TSet, TameType};

/// Which of the four CDM shapes a Frobenius matrix takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CdmKind {
    /// `[[v, 0], [A u^gamma, 1]]`
    IEta,
    /// `[[0, -u^{e-gamma}], [u^gamma, A']]`
    IIEta,
    /// `[[1, A' u^{e-gamma}], [0, v]]`
    IEtaPrime,
    /// `[[A, -u^{e-gamma}], [u^gamma, 0]]`
    IIEtaPrime,
}

impl CdmKind {
    pub fn new(genre: Genre, form: Form) -> Result<Self> {
        match (genre, form) {
            (Genre::IEta, Form::Eta) => Ok(CdmKind::IEta),
            (Genre::II, Form::Eta) => Ok(CdmKind::IIEta),
            (Genre::IEtaPrime, Form::EtaPrime) => Ok(CdmKind::IEtaPrime),
            (Genre::II, Form::EtaPrime) => Ok(CdmKind::IIEtaPrime),
            _ => Err(Error::Mismatch(format!("genre {genre} cannot occur in {form:?}-form"))),
        }
    }

    pub fn genre(self) -> Genre {
        match self {
            CdmKind::IEta => Genre::IEta,
            CdmKind::IEtaPrime => Genre::IEtaPrime,
            CdmKind::IIEta | CdmKind::IIEtaPrime => Genre::II,
        }
    }

    pub fn form(self) -> Form {
        match self {
            CdmKind::IEta | CdmKind::IIEta => Form::Eta,
            CdmKind::IEtaPrime | CdmKind::IIEtaPrime => Form::EtaPrime,
        }
    }
}

/// `(alpha, alpha', A_i, A'_i)` together with the genre and form of each map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdmParams {
    pub alpha: CoeffElement,
    pub alpha_prime: CoeffElement,
    pub a: Vec<CoeffElement>,
    pub a_prime: Vec<CoeffElement>,
    pub genres: Vec<Genre>,
    pub forms: Vec<Form>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdmParamsRepr {
    pub alpha: Vec<String>,
    pub alpha_prime: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<String>>,
    #[serde(rename = "A_prime")]
    pub a_prime: Vec<Vec<String>>,
    pub genres: Vec<Genre>,
    pub forms: Vec<Form>,
}

impl CdmParams {
    pub fn f(&self) -> usize {
        self.a.len()
    }

    pub fn kind(&self, i: usize) -> CdmKind {
        CdmKind::new(self.genres[i], self.forms[i]).expect("params hold compatible genres and forms")
    }

    /// Unit prefactors, the vanishing of unused slots, and the mixed
    /// genre-II entries lying in the maximal ideal.
    pub fn validate(&self, ring: &CoeffRing) -> Result<()> {
        if !ring.is_unit(&self.alpha) || !ring.is_unit(&self.alpha_prime) {
            return Err(Error::Mismatch("alpha and alpha' must be units".into()));
        }
        for i in 0..self.f() {
            CdmKind::new(self.genres[i], self.forms[i])?;
            let (used, unused) = match self.kind(i) {
                CdmKind::IEta | CdmKind::IIEtaPrime => (&self.a[i], &self.a_prime[i]),
                CdmKind::IEtaPrime | CdmKind::IIEta => (&self.a_prime[i], &self.a[i]),
            };
            if !ring.is_zero(unused) {
                return Err(Error::Mismatch(format!("unused parameter at index {i} is nonzero")));
            }
            if self.genres[i] == Genre::II && ring.is_unit(used) {
                return Err(Error::Mismatch(format!("genre II parameter at index {i} is a unit")));
            }
        }
        Ok(())
    }

    /// The CDM Frobenius matrix at index `i`.
    pub fn matrix(&self, ring: &CoeffRing, tau: &TameType, i: usize, prec: usize) -> Shaped {
        let (g, e) = (tau.gamma()[i], tau.e());
        let (zero, one, minus_one) = (ring.zero(), ring.one(), ring.from_int(-1));
        let m = match self.kind(i) {
            CdmKind::IEta => Shaped::eta_scalars(ring, g, e, [one.clone(), zero, self.a[i].clone(), one], prec),
            CdmKind::IIEta => {
                Shaped::from_scalars(ring, g, e, [zero, minus_one, one, self.a_prime[i].clone()], prec)
            }
            CdmKind::IEtaPrime => {
                Shaped::eta_prime_scalars(ring, g, e, [one.clone(), self.a_prime[i].clone(), zero, one], prec)
            }
            CdmKind::IIEtaPrime => Shaped::from_scalars(ring, g, e, [self.a[i].clone(), minus_one, one, zero], prec),
        };
        if i == 0 {
            m.scale_rows(&self.alpha, &self.alpha_prime)
        } else {
            m
        }
    }

    pub fn module(&self, ring: &CoeffRing, tau: &TameType, prec: usize) -> Result<BKModule> {
        let frobs = (0..self.f()).map(|i| self.matrix(ring, tau, i, prec)).collect();
        BKModule::new(tau.clone(), ring.clone(), frobs)
    }

    pub fn to_repr(&self, ring: &CoeffRing) -> CdmParamsRepr {
        CdmParamsRepr {
            alpha: ring.to_strings(&self.alpha),
            alpha_prime: ring.to_strings(&self.alpha_prime),
            a: self.a.iter().map(|x| ring.to_strings(x)).collect(),
            a_prime: self.a_prime.iter().map(|x| ring.to_strings(x)).collect(),
            genres: self.genres.clone(),
            forms: self.forms.clone(),
        }
    }

    pub fn from_repr(ring: &CoeffRing, r: &CdmParamsRepr) -> Result<Self> {
        let f = r.genres.len();
        if r.a.len() != f || r.a_prime.len() != f || r.forms.len() != f {
            return Err(Error::Parse("parameter vectors have different lengths".into()));
        }
        let elems = |v: &[Vec<String>]| v.iter().map(|x| ring.from_strings(x)).collect::<Result<Vec<_>>>();
        Ok(CdmParams {
            alpha: ring.from_strings(&r.alpha)?,
            alpha_prime: ring.from_strings(&r.alpha_prime)?,
            a: elems(&r.a)?,
            a_prime: elems(&r.a_prime)?,
            genres: r.genres.clone(),
            forms: r.forms.clone(),
        })
    }
}

/// `G = B(G) M` with `M` the CDM factor of shape `kind`.
#[derive(Debug, Clone, PartialEq)]
pub struct BFactorization {
    pub b: Shaped,
    pub m: Shaped,
    pub kind: CdmKind,
    pub scalar: CoeffElement,
}

/// The B-operator on a matrix in the given form whose determinant is `v`
/// times a unit.
pub fn b_operation(g: &Shaped, form: Form) -> Result<BFactorization> {
    let ring = g.ring().clone();
    let det_over_v = g.det().div_v_pow(1).map_err(|e| match e {
        Error::NonDivisible => Error::DetNotUnitTimesV,
        other => other,
    })?;
    if !det_over_v.is_unit() {
        return Err(Error::DetNotUnitTimesV);
    }
    let (gamma, e) = (g.gamma(), g.e());
    let prec = g.prec();
    let [s1, s2, s3, s4] = g.s();
    let c = g.constants();
    let (zero, one) = (ring.zero(), ring.one());
    let div_v = |x: VSeries| x.div_v_pow(1);
    let (b, kind, scalar, m) = match form {
        Form::Eta => {
            if !ring.is_zero(&c[0]) {
                return Err(Error::NotRegular("matrix is not in eta-form".into()));
            }
            let t1 = s1.div_v_pow(1)?;
            if ring.is_unit(&c[3]) {
                let a = ring.div(&c[2], &c[3])?;
                let b = [&t1 - &s2.scale(&a), s2.clone(), div_v(s3 - &s4.scale(&a))?, s4.clone()];
                let m = Shaped::eta_scalars(&ring, gamma, e, [one.clone(), zero.clone(), a.clone(), one], prec);
                (b, CdmKind::IEta, a, m)
            } else {
                let a = ring.div(&c[3], &c[2])?;
                let b = [s2 - &t1.scale(&a), t1.clone(), div_v(s4 - &s3.scale(&a))?, s3.clone()];
                let m = Shaped::from_scalars(&ring, gamma, e, [zero, one.clone(), one, a.clone()], prec);
                (b, CdmKind::IIEta, a, m)
            }
        }
        Form::EtaPrime => {
            if !ring.is_zero(&c[3]) {
                return Err(Error::NotRegular("matrix is not in eta'-form".into()));
            }
            let t4 = s4.div_v_pow(1)?;
            if ring.is_unit(&c[0]) {
                let a = ring.div(&c[1], &c[0])?;
                let b = [s1.clone(), div_v(s2 - &s1.scale(&a))?, s3.clone(), &t4 - &s3.scale(&a)];
                let m = Shaped::eta_prime_scalars(&ring, gamma, e, [one.clone(), a.clone(), zero, one], prec);
                (b, CdmKind::IEtaPrime, a, m)
            } else {
                let a = ring.div(&c[0], &c[1])?;
                let b = [s2.clone(), div_v(s1 - &s2.scale(&a))?, t4.clone(), s3 - &t4.scale(&a)];
                let m = Shaped::from_scalars(&ring, gamma, e, [a.clone(), one.clone(), one, zero], prec);
                (b, CdmKind::IIEtaPrime, a, m)
            }
        }
    };
    Ok(BFactorization { b: Shaped::new(gamma, e, b), m, kind, scalar })
}

fn ensure_regular(m: &BKModule) -> Result<Vec<Form>> {
    resolve_forms(m, None)
}

/// Checks regularity and fixes the form of each map: the given forms when
/// they fit, else eta-form wherever both forms fit.
pub fn resolve_forms(m: &BKModule, forms: Option<&[Form]>) -> Result<Vec<Form>> {
    if !m.hodge_v0()? {
        return Err(Error::NotRegular("not of Hodge type v0".into()));
    }
    if let Some(forms) = forms {
        if forms.len() != m.f() {
            return Err(Error::Mismatch("one form per Frobenius matrix expected".into()));
        }
        let ring = m.ring();
        for (i, (fr, form)) in m.frobs().iter().zip(forms).enumerate() {
            let c = match form {
                Form::Eta => fr.s1().constant_part(),
                Form::EtaPrime => fr.s4().constant_part(),
            };
            if !ring.is_zero(&c) {
                return Err(Error::NotRegular(format!("map {i} is not in {form:?}-form")));
            }
        }
        return Ok(forms.to_vec());
    }
    m.forms()
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.ok_or_else(|| Error::NotRegular(format!("map {i} is in neither form"))))
        .collect()
}

/// The bad-genre conditions on the pairs `(genre_i, z_i)`.
pub fn is_bad_genre(m: &BKModule) -> Result<bool> {
    ensure_regular(m)?;
    Ok(bad_genre_pattern(m.tau().p(), &m.genres()?, m.tau().z()))
}

pub fn bad_genre_pattern(p: u32, genres: &[Genre], z: &[u32]) -> bool {
    use Genre::*;
    let f = z.len();
    let pair = |i: usize| (genres[i % f], z[i % f]);
    let cond1 = [(II, 0), (II, p - 1), (IEta, 1), (IEta, p - 1), (IEtaPrime, 0), (IEtaPrime, p - 2)];
    let if2 = [(II, 0), (IEtaPrime, 0), (IEtaPrime, p - 2)];
    let then2 = [(II, p - 1), (IEta, p - 1), (IEtaPrime, p - 2)];
    let if3 = [(II, p - 1), (IEta, 1), (IEta, p - 1)];
    let then3 = [(II, 0), (IEta, 1), (IEtaPrime, 0)];
    (0..f).all(|i| {
        let (cur, next) = (pair(i), pair(i + 1));
        cond1.contains(&cur)
            && (!if2.contains(&cur) || then2.contains(&next))
            && (!if3.contains(&cur) || then3.contains(&next))
    })
}

/// The bad-genre conditions for mixed forms, with `T` the set of eta-form
/// indices, stated on the modified digits and the transitions of `T`.
pub fn is_bad_genre_with(m: &BKModule, t: &TSet) -> Result<bool> {
    ensure_regular(m)?;
    Ok(bad_genre_pattern_with(m.tau(), &m.genres()?, t))
}

pub fn bad_genre_pattern_with(tau: &TameType, genres: &[Genre], t: &TSet) -> bool {
    #[derive(PartialEq, Clone, Copy)]
    enum G {
        I,
        II,
    }
    let p = tau.p();
    let zt = tau.tilde_z(t);
    let f = zt.len();
    let coarse = |g: Genre| if g == Genre::II { G::II } else { G::I };
    let pair = |i: usize| (coarse(genres[i % f]), zt[i % f]);
    let trans = |i: usize| t.is_transition(i % f);
    let follows = |i: usize| {
        let next = pair(i + 1);
        (next == (G::II, 0) && !trans(i + 1)) || (next == (G::II, 1) && trans(i + 1)) || next == (G::I, 1)
    };
    (0..f).all(|i| {
        let cur = pair(i);
        if trans(i) {
            [(G::II, 1), (G::I, 1), (G::I, p - 1)].contains(&cur) && follows(i)
        } else {
            if ![(G::II, 0), (G::II, p - 1), (G::I, 1), (G::I, p - 1)].contains(&cur) {
                return false;
            }
            if cur == (G::II, 0) {
                let next = pair(i + 1);
                next.0 == G::I && next.1 == p - 1 || next == (G::II, p - 1) && !trans(i + 1)
            } else {
                follows(i)
            }
        }
    })
}

/// The largest `t` with `s` in `I_t`, where `n` is the largest power with
/// `m^n != 0`; a series vanishing to its precision gives `n + prec`.
pub fn ideal_level(s: &VSeries, n: usize) -> usize {
    let ring = s.ring();
    let c0 = s.constant_part();
    if !ring.is_zero(&c0) {
        return (0..=n).rev().find(|&t| ring.in_max_ideal_pow(&c0, t)).unwrap_or(0);
    }
    n + s.valuation().unwrap_or(s.prec())
}

pub fn in_ideal(s: &VSeries, t: usize, n: usize) -> bool {
    ideal_level(s, n) >= t
}

/// The largest `t` for which the two matrices are `t`-close.
pub fn closeness(a: &Shaped, b: &Shaped) -> usize {
    let n = a.ring().k() - 1;
    let d = a.sub(b);
    d.s().iter().map(|s| ideal_level(s, n)).min().unwrap_or(0)
}

pub fn t_close(a: &Shaped, b: &Shaped, t: usize) -> bool {
    closeness(a, b) >= t
}

/// Step budget of the reduction: `f (n + N_v + 4)`.
pub fn default_cdm_budget(m: &BKModule) -> usize {
    m.f() * (m.ring().k() - 1 + m.nv() + 4)
}

#[derive(Debug, Clone)]
pub struct CdmReduction {
    pub params: CdmParams,
    /// The limits `P^{(i)}`, with diagonal entries `1 mod v`.
    pub limit: Vec<Shaped>,
    /// The final diagonal rescaling `Q_i`.
    pub rescale: Vec<(CoeffElement, CoeffElement)>,
    /// The total base change `P^{(i)} Q_i`.
    pub base_change: Vec<Shaped>,
    /// `(P^{(i)})^{-1} F_i phi(P^{(i-1)})` before the rescaling.
    pub intermediate: Vec<Shaped>,
    /// The Frobenius matrices after the total base change.
    pub reduced: BKModule,
    /// `t_s`: the closeness of `P_s` and `P_{s+f}`.
    pub trace: Vec<usize>,
    pub steps: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CdmOptions {
    /// Forms to use where a map is in both; see [`resolve_forms`].
    pub forms: Option<Vec<Form>>,
    /// Step budget, [`default_cdm_budget`] when absent.
    pub max_steps: Option<usize>,
}

/// Runs `P_{s+1} = B(F_{s+1} phi(P_s)) Delta^{-1}` from `P_0 = Id` until
/// `P_{s+f} = P_s`, then rescales by diagonal scalars into CDM form.
pub fn cdm_reduce(m: &BKModule, opts: &CdmOptions) -> Result<CdmReduction> {
    let forms = resolve_forms(m, opts.forms.as_deref())?;
    let max_steps = opts.max_steps;
    let ring = m.ring().clone();
    let tau = m.tau().clone();
    let f = m.f();
    let cap = m.nv();
    let budget = max_steps.unwrap_or_else(|| default_cdm_budget(m));
    let mut history = vec![Shaped::identity(&ring, tau.gamma()[0], tau.e(), cap)];
    let mut trace = Vec::new();
    let mut s = 0usize;
    let start = loop {
        if s >= f {
            let (old, new) = (&history[s - f], &history[s]);
            if old == new {
                break s - f;
            }
            trace.push(closeness(old, new));
        }
        if s >= budget {
            let tail = trace[trace.len().saturating_sub(2 * f)..].to_vec();
            return Err(Error::NoConvergence { steps: s, trace: tail });
        }
        let i = (s + 1) % f;
        let g = m.frobs()[i].mul(&history[s].phi(&tau, i, cap));
        let fac = b_operation(&g, forms[i])?;
        let d = fac.b.constants();
        let (d1, d4) = (ring.inv(&d[0]), ring.inv(&d[3]));
        let (Ok(d1), Ok(d4)) = (d1, d4) else {
            return Err(Error::NotRegular(format!("B-operator diagonal is not a unit at index {i}")));
        };
        history.push(fac.b.scale_cols(&d1, &d4));
        s += 1;
    };
    let mut limit: Vec<Option<Shaped>> = vec![None; f];
    for (offset, p) in history[start..start + f].iter().enumerate() {
        limit[(start + offset) % f] = Some(p.clone());
    }
    let limit: Vec<Shaped> = limit.into_iter().map(|p| p.expect("one limit per index")).collect();
    let intermediate = m.apply_base_change(&limit)?.frobs().to_vec();

    let kinds = (0..f)
        .map(|i| CdmKind::new(m.frobs()[i].genre().map_err(|_| Error::NotHodgeV0(i))?, forms[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut q = vec![(ring.one(), ring.one()); f];
    let mut a = vec![ring.zero(); f];
    let mut a_prime = vec![ring.zero(); f];
    for i in (1..f).chain(std::iter::once(0)) {
        let prev = q[(i + f - 1) % f].clone();
        let (next, param) = rescale_step(&ring, kinds[i], &intermediate[i], &prev)?;
        match kinds[i] {
            CdmKind::IEta | CdmKind::IIEtaPrime => a[i] = param,
            CdmKind::IIEta | CdmKind::IEtaPrime => a_prime[i] = param,
        }
        q[i] = next;
    }
    let (alpha, alpha_prime) = q[0].clone();
    q[0] = (ring.one(), ring.one());
    let params = CdmParams {
        alpha,
        alpha_prime,
        a,
        a_prime,
        genres: kinds.iter().map(|k| k.genre()).collect(),
        forms,
    };
    let base_change: Vec<Shaped> = limit.iter().zip(&q).map(|(p, (x, y))| p.scale_cols(x, y)).collect();
    let reduced = m.apply_base_change(&base_change)?;
    Ok(CdmReduction { params, limit, rescale: q, base_change, intermediate, reduced, trace, steps: s })
}

/// Given `Q_{i-1} = diag(q, q')` and `F'_i`, returns `Q_i` and the parameter
/// of `Q_i^{-1} F'_i Q_{i-1}`. At `i = 0` the returned pair is `(alpha, alpha')`.
fn rescale_step(
    ring: &CoeffRing,
    kind: CdmKind,
    fp: &Shaped,
    prev: &(CoeffElement, CoeffElement),
) -> Result<((CoeffElement, CoeffElement), CoeffElement)> {
    let (q, qp) = prev;
    let [s1, s2, s3, s4] = fp.s();
    let c = |s: &VSeries, j: usize| s.coeff(j);
    let mul = |x: &CoeffElement, y: &CoeffElement| ring.mul(x, y);
    Ok(match kind {
        CdmKind::IEta => {
            let (x, y, w) = (c(s1, 1), c(s3, 0), c(s4, 0));
            let (qi, qpi) = (mul(&x, q), mul(&w, qp));
            let a = ring.div(&mul(&y, q), &qpi)?;
            ((qi, qpi), a)
        }
        CdmKind::IEtaPrime => {
            let (x, y, w) = (c(s1, 0), c(s2, 0), c(s4, 1));
            let (qi, qpi) = (mul(&x, q), mul(&w, qp));
            let a = ring.div(&mul(&y, qp), &qi)?;
            ((qi, qpi), a)
        }
        CdmKind::IIEta => {
            let (x, y, w) = (c(s2, 0), c(s3, 0), c(s4, 0));
            let (qi, qpi) = (ring.neg(&mul(&x, qp)), mul(&y, q));
            let a = ring.div(&mul(&w, qp), &qpi)?;
            ((qi, qpi), a)
        }
        CdmKind::IIEtaPrime => {
            let (w, x, y) = (c(s1, 0), c(s2, 0), c(s3, 0));
            let (qi, qpi) = (ring.neg(&mul(&x, qp)), mul(&y, q));
            let a = ring.div(&mul(&w, q), &qi)?;
            ((qi, qpi), a)
        }
    })
}

/// Checks that the reduced matrices are exactly the CDM matrices of the
/// parameters, and that the parameters are valid.
pub fn verify_reduction(m: &BKModule, red: &CdmReduction) -> bool {
    let Ok(again) = m.apply_base_change(&red.base_change) else {
        return false;
    };
    red.params.validate(m.ring()).is_ok()
        && again.frobs().iter().enumerate().all(|(i, fr)| {
            let want = red.params.matrix(m.ring(), m.tau(), i, m.nv());
            fr.eq_at(&want) && fr.prec() + 1 >= m.nv()
        })
}

/// The scalars `(a, b, c, d)` of a matrix `[[v a, b], [c, d]]` (eta-form) or
/// `[[a, b], [c, v d]]` (eta'-form), entries read up to their u-shifts.
pub fn scalar_entries(fr: &Shaped, form: Form) -> Result<[CoeffElement; 4]> {
    let ring = fr.ring();
    let [s1, s2, s3, s4] = fr.s();
    let only = |s: &VSeries, j: usize| {
        (0..s.prec()).all(|k| k == j || ring.is_zero(&s.coeff(k)))
    };
    let ok = match form {
        Form::Eta => only(s1, 1) && only(s2, 0) && only(s3, 0) && only(s4, 0),
        Form::EtaPrime => only(s1, 0) && only(s2, 0) && only(s3, 0) && only(s4, 1),
    };
    if !ok {
        return Err(Error::Mismatch("matrix does not have scalar entries".into()));
    }
    Ok(match form {
        Form::Eta => [s1.coeff(1), s2.coeff(0), s3.coeff(0), s4.coeff(0)],
        Form::EtaPrime => [s1.coeff(0), s2.coeff(0), s3.coeff(0), s4.coeff(1)],
    })
}

/// The intermediate matrices `F'_i` in closed form for scalar-entry input,
/// given the limit base change `P^{(i)}`.
pub fn closed_form_cdm(m: &BKModule, limit: &[Shaped], forms: Option<&[Form]>) -> Result<Vec<Shaped>> {
    let forms = resolve_forms(m, forms)?;
    let ring = m.ring();
    let tau = m.tau();
    let f = m.f();
    let prec = m.nv();
    let p = tau.p();
    (0..f)
        .map(|i| {
            let fr = &m.frobs()[i];
            let genre = fr.genre().map_err(|_| Error::NotHodgeV0(i))?;
            let [a, b, c, d] = scalar_entries(fr, forms[i])?;
            let z = tau.z()[i];
            let prev = &limit[(i + f - 1) % f];
            let (g, e) = (fr.gamma(), fr.e());
            let mul = |x: &CoeffElement, y: &CoeffElement| ring.mul(x, y);
            let need_unit = |x: &CoeffElement| if ring.is_unit(x) { Ok(()) } else { Err(Error::NonUnitDenominator(i)) };
            let out = match CdmKind::new(genre, forms[i])? {
                CdmKind::IEta => {
                    need_unit(&d)?;
                    let a2 = ring.sub(&a, &ring.div(&mul(&c, &b), &d)?);
                    let low = if z == 0 { ring.add(&c, &mul(&d, &prev.s3().constant_part())) } else { c };
                    Shaped::eta_scalars(ring, g, e, [a2, ring.zero(), low, d], prec)
                }
                CdmKind::IIEta => {
                    need_unit(&c)?;
                    let b2 = ring.sub(&b, &ring.div(&mul(&d, &a), &c)?);
                    let (up, low) = if z == 0 {
                        let low = ring.add(&c, &mul(&d, &prev.s3().constant_part()));
                        (ring.div(&mul(&b2, &c), &low)?, low)
                    } else {
                        (b2, c)
                    };
                    Shaped::from_scalars(ring, g, e, [ring.zero(), up, low, d], prec)
                }
                CdmKind::IEtaPrime => {
                    need_unit(&a)?;
                    let d2 = ring.sub(&d, &ring.div(&mul(&b, &c), &a)?);
                    let up = if z == p - 1 { ring.add(&b, &mul(&a, &prev.s2().constant_part())) } else { b };
                    Shaped::eta_prime_scalars(ring, g, e, [a, up, ring.zero(), d2], prec)
                }
                CdmKind::IIEtaPrime => {
                    need_unit(&b)?;
                    let c2 = ring.sub(&c, &ring.div(&mul(&a, &d), &b)?);
                    let (up, low) = if z == p - 1 {
                        let up = ring.add(&b, &mul(&a, &prev.s2().constant_part()));
                        let low = ring.div(&mul(&c2, &b), &up)?;
                        (up, low)
                    } else {
                        (b, c2)
                    };
                    Shaped::from_scalars(ring, g, e, [a, up, low, ring.zero()], prec)
                }
            };
            Ok(out)
        })
        .collect()
}

/// Propagates `(lambda_0, mu_0)` through the genres (kept across genre I,
/// swapped across genre II) and conjugates each CDM matrix by
/// `diag(lambda_i, mu_i)`, re-reading the parameters.
pub fn cdm_base_change(
    ring: &CoeffRing,
    params: &CdmParams,
    lambda: &CoeffElement,
    mu: &CoeffElement,
) -> Result<(CdmParams, Vec<(CoeffElement, CoeffElement)>)> {
    let f = params.f();
    let mut scal = vec![(lambda.clone(), mu.clone())];
    for i in 1..f {
        let (l, m) = scal[i - 1].clone();
        scal.push(if params.genres[i] == Genre::II { (m, l) } else { (l, m) });
    }
    let mut out = params.clone();
    for i in 0..f {
        let kind = params.kind(i);
        let (li, mi) = &scal[i];
        let (lp, mp) = &scal[(i + f - 1) % f];
        let k = template(ring, params, i);
        let scale = [ring.div(lp, li)?, ring.div(mp, li)?, ring.div(lp, mi)?, ring.div(mp, mi)?];
        let h: [CoeffElement; 4] = std::array::from_fn(|j| ring.mul(&k[j], &scale[j]));
        let (pre, param) = read_cdm(ring, kind, &h)?;
        if i == 0 {
            out.alpha = pre.0;
            out.alpha_prime = pre.1;
        } else if !ring.is_one(&pre.0) || !ring.is_one(&pre.1) {
            return Err(Error::Mismatch(format!("conjugated matrix {i} is not normalized")));
        }
        match kind {
            CdmKind::IEta | CdmKind::IIEtaPrime => out.a[i] = param,
            CdmKind::IIEta | CdmKind::IEtaPrime => out.a_prime[i] = param,
        }
    }
    Ok((out, scal))
}

/// Coefficients `[k11, k12, k21, k22]` of the CDM matrix at `i`, each in
/// front of its fixed monomial.
fn template(ring: &CoeffRing, params: &CdmParams, i: usize) -> [CoeffElement; 4] {
    let (zero, one, m1) = (ring.zero(), ring.one(), ring.from_int(-1));
    let k = match params.kind(i) {
        CdmKind::IEta => [one.clone(), zero, params.a[i].clone(), one],
        CdmKind::IIEta => [zero, m1, one, params.a_prime[i].clone()],
        CdmKind::IEtaPrime => [one.clone(), params.a_prime[i].clone(), zero, one],
        CdmKind::IIEtaPrime => [params.a[i].clone(), m1, one, zero],
    };
    if i == 0 {
        let (a, ap) = (&params.alpha, &params.alpha_prime);
        [ring.mul(a, &k[0]), ring.mul(a, &k[1]), ring.mul(ap, &k[2]), ring.mul(ap, &k[3])]
    } else {
        k
    }
}

/// Reads `((alpha, alpha'), parameter)` off prefixed CDM coefficients.
fn read_cdm(
    ring: &CoeffRing,
    kind: CdmKind,
    k: &[CoeffElement; 4],
) -> Result<((CoeffElement, CoeffElement), CoeffElement)> {
    Ok(match kind {
        CdmKind::IEta => ((k[0].clone(), k[3].clone()), ring.div(&k[2], &k[3])?),
        CdmKind::IIEta => ((ring.neg(&k[1]), k[2].clone()), ring.div(&k[3], &k[2])?),
        CdmKind::IEtaPrime => ((k[0].clone(), k[3].clone()), ring.div(&k[1], &k[0])?),
        CdmKind::IIEtaPrime => {
            let alpha = ring.neg(&k[1]);
            let a = ring.div(&k[0], &alpha)?;
            ((alpha, k[2].clone()), a)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bkmod::{default_nv, random_base_change, random_frobenius, random_module};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ints(r: &CoeffRing, x: [i64; 4]) -> [CoeffElement; 4] {
        x.map(|n| r.from_int(n))
    }

    fn f3_tau(z: Vec<u32>) -> (CoeffRing, TameType) {
        (CoeffRing::prime_field(3).unwrap(), TameType::new(3, z).unwrap())
    }

    fn eta_module(r: &CoeffRing, tau: &TameType, entries: &[[i64; 4]], prec: usize) -> BKModule {
        let frobs = entries
            .iter()
            .enumerate()
            .map(|(i, x)| Shaped::eta_scalars(r, tau.gamma()[i], tau.e(), ints(r, *x), prec))
            .collect();
        BKModule::new(tau.clone(), r.clone(), frobs).unwrap()
    }

    #[test]
    fn b_operation_examples() {
        let (r, tau) = f3_tau(vec![2]);
        let (g, e) = (tau.gamma()[0], tau.e());
        assert_eq!((g, e), (2, 2));
        // [[2v, 1], [v, 1]] with gamma = e
        let m = Shaped::eta_scalars(&r, g, e, ints(&r, [2, 1, 1, 1]), 6);
        let fac = b_operation(&m, Form::Eta).unwrap();
        assert_eq!(fac.kind, CdmKind::IEta);
        assert_eq!(fac.scalar, r.one());
        assert!(fac.b.eq_at(&Shaped::from_scalars(&r, g, e, ints(&r, [1, 1, 0, 1]), 6)));
        assert!(fac.b.mul(&fac.m).eq_at(&m));
        // already factored
        let cdm = Shaped::eta_scalars(&r, 1, 2, ints(&r, [1, 0, 2, 1]), 6);
        let fac = b_operation(&cdm, Form::Eta).unwrap();
        assert!(fac.b.eq_at(&Shaped::identity(&r, 1, 2, 6)));
        assert!(fac.m.eq_at(&cdm));
        let two = Shaped::from_scalars(&r, 1, 2, ints(&r, [0, 1, 1, 0]), 6);
        let fac = b_operation(&two, Form::Eta).unwrap();
        assert_eq!(fac.kind, CdmKind::IIEta);
        assert!(fac.b.eq_at(&Shaped::identity(&r, 1, 2, 6)));
        // determinant v^2
        let bad = Shaped::eta_scalars(&r, 1, 2, ints(&r, [1, 0, 0, 0]), 6);
        assert_eq!(b_operation(&bad, Form::Eta).unwrap_err(), Error::DetNotUnitTimesV);
    }

    #[test]
    fn bad_genre_examples() {
        use Genre::*;
        assert!(bad_genre_pattern(3, &[IEta], &[1]));
        assert!(!bad_genre_pattern(3, &[IEta], &[2]));
        assert!(bad_genre_pattern(3, &[II, II], &[0, 2]));
        assert!(bad_genre_pattern(5, &[IEta, IEta], &[1, 1]));
        assert!(!bad_genre_pattern(5, &[IEta, IEta], &[1, 2]));
        let (r, tau) = f3_tau(vec![1]);
        let m = eta_module(&r, &tau, &[[2, 1, 1, 1]], 8);
        assert!(is_bad_genre(&m).unwrap());
    }

    #[test]
    fn closeness_examples() {
        let r = CoeffRing::prime_field(3).unwrap();
        let id = Shaped::identity(&r, 1, 2, 8);
        assert_eq!(closeness(&id, &id), 8);
        let mut other = id.clone();
        let mut s = VSeries::zero(&r, 8);
        s.set_coeff(3, r.one());
        other = Shaped::new(1, 2, [other.s1().clone(), s, other.s3().clone(), other.s4().clone()]);
        assert!(t_close(&id, &other, 3));
        assert!(!t_close(&id, &other, 4));
        let re = CoeffRing::new(3, 1, 2).unwrap();
        let id = Shaped::identity(&re, 1, 2, 8);
        let eps = Shaped::from_scalars(&re, 1, 2, [re.zero(), re.eps_pow(1), re.zero(), re.zero()], 8);
        let moved = id.add(&eps);
        assert!(t_close(&id, &moved, 1));
        assert!(!t_close(&id, &moved, 2));
    }

    #[test]
    fn reduce_spec_example() {
        let (r, tau) = f3_tau(vec![2]);
        let m = eta_module(&r, &tau, &[[2, 1, 1, 1]], 12);
        let red = cdm_reduce(&m, &CdmOptions::default()).unwrap();
        assert_eq!(red.params.alpha, r.one());
        assert_eq!(red.params.alpha_prime, r.one());
        assert_eq!(red.params.a, vec![r.one()]);
        assert_eq!(red.params.genres, vec![Genre::IEta]);
        assert!(verify_reduction(&m, &red));
        let cdm = Shaped::eta_scalars(&r, 2, 2, ints(&r, [1, 0, 1, 1]), 12);
        assert!(red.reduced.frobs()[0].eq_at(&cdm));
    }

    #[test]
    fn reduce_fixes_cdm_input() {
        let (r, tau) = f3_tau(vec![1, 2]);
        let m = eta_module(&r, &tau, &[[1, 0, 2, 1], [1, 0, 1, 1]], 12);
        let red = cdm_reduce(&m, &CdmOptions::default()).unwrap();
        for p in &red.base_change {
            assert!(p.eq_at(&Shaped::identity(&r, p.gamma(), p.e(), 12)));
        }
        assert_eq!(red.params.a, ints(&r, [2, 1, 0, 0])[..2].to_vec());
        assert!(verify_reduction(&m, &red));
    }

    #[test]
    fn bad_genre_instance_does_not_converge() {
        let (r, tau) = f3_tau(vec![1]);
        let nv = default_nv(&tau);
        let mut s3 = VSeries::one(&r, nv);
        s3.set_coeff(1, r.one());
        let fr = Shaped::new(
            tau.gamma()[0],
            tau.e(),
            [VSeries::monomial(&r, r.from_int(2), 1, nv), VSeries::one(&r, nv), s3, VSeries::one(&r, nv)],
        );
        let m = BKModule::new(tau, r, vec![fr]).unwrap();
        assert!(is_bad_genre(&m).unwrap());
        assert!(matches!(cdm_reduce(&m, &CdmOptions::default()), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn scalar_bad_genre_instance_converges() {
        // With scalar entries the lower-left constant of the limit stays 0,
        // so the bad-genre chain never activates.
        let (r, tau) = f3_tau(vec![1]);
        let m = eta_module(&r, &tau, &[[2, 1, 1, 1]], default_nv(&tau));
        assert!(is_bad_genre(&m).unwrap());
        let res = cdm_reduce(&m, &CdmOptions::default());
        assert!(res.is_ok());
    }

    #[test]
    fn base_change_examples() {
        let r = CoeffRing::prime_field(5).unwrap();
        let params = CdmParams {
            alpha: r.from_int(2),
            alpha_prime: r.from_int(3),
            a: ints(&r, [1, 4, 0, 0])[..2].to_vec(),
            a_prime: vec![r.zero(); 2],
            genres: vec![Genre::IEta; 2],
            forms: vec![Form::Eta; 2],
        };
        let (same, _) = cdm_base_change(&r, &params, &r.one(), &r.one()).unwrap();
        assert_eq!(same, params);
        let (l, m) = (r.from_int(2), r.from_int(3));
        let (out, scal) = cdm_base_change(&r, &params, &l, &m).unwrap();
        let ratio = r.div(&l, &m).unwrap();
        assert_eq!(out.alpha, params.alpha);
        assert_eq!(out.alpha_prime, params.alpha_prime);
        for i in 0..2 {
            assert_eq!(out.a[i], r.mul(&ratio, &params.a[i]));
            assert_eq!(scal[i], (l.clone(), m.clone()));
        }
        let mixed = CdmParams {
            genres: vec![Genre::IEta, Genre::II],
            a: vec![r.one(), r.zero()],
            ..params
        };
        let (_, scal) = cdm_base_change(&r, &mixed, &l, &m).unwrap();
        assert_eq!(scal[1], (m, l));
    }

    fn config(which: usize) -> (CoeffRing, TameType) {
        let (ring, z) = match which {
            0 => (CoeffRing::new(3, 1, 1), vec![2]),
            1 => (CoeffRing::new(3, 2, 1), vec![1, 2]),
            2 => (CoeffRing::new(3, 1, 2), vec![2, 1]),
            3 => (CoeffRing::new(5, 1, 1), vec![3, 1]),
            _ => (CoeffRing::new(5, 1, 2), vec![0, 2]),
        };
        let tau = TameType::new(ring.as_ref().unwrap().p(), z).unwrap();
        (ring.unwrap(), tau)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn factorization_is_exact(seed in any::<u64>(), which in 0usize..5, prime in any::<bool>(), two in any::<bool>()) {
            let (r, tau) = config(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let form = if prime { Form::EtaPrime } else { Form::Eta };
            let genre = match (two, prime) { (true, _) => Genre::II, (false, false) => Genre::IEta, _ => Genre::IEtaPrime };
            let g = random_frobenius(&r, &tau, 0, form, genre, default_nv(&tau), false, &mut rng).unwrap();
            let fac = b_operation(&g, form).unwrap();
            prop_assert!(fac.b.mul(&fac.m).eq_at(&g));
            prop_assert!(fac.b.det().is_unit());
            prop_assert_eq!(fac.kind.genre(), genre);
        }

        #[test]
        fn reduction_identity(seed in any::<u64>(), which in 0usize..5, prime in any::<bool>()) {
            let (r, tau) = config(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let nv = default_nv(&tau);
            let form = if prime { Form::EtaPrime } else { Form::Eta };
            let genre = if rng.gen_bool(0.5) { Genre::II } else if prime { Genre::IEtaPrime } else { Genre::IEta };
            let i = tau.f() - 1;
            let fr = random_frobenius(&r, &tau, 0, form, genre, nv, false, &mut rng).unwrap();
            let p = random_base_change(&r, &tau, nv, &mut rng).swap_remove(i);
            let pp = p.phi(&tau, 0, nv);
            let lhs = b_operation(&fr.mul(&pp), form).unwrap().b;
            let bf = b_operation(&fr, form).unwrap();
            let rhs = bf.b.mul(&b_operation(&bf.m.mul(&pp), form).unwrap().b);
            prop_assert!(lhs.eq_at(&rhs));
        }

        #[test]
        fn reduce_outputs_cdm_form(seed in any::<u64>(), which in 0usize..5) {
            let (r, tau) = config(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let forms = vec![Form::Eta; tau.f()];
            let m = random_module(&r, &tau, &forms, default_nv(&tau), false, &mut rng).unwrap();
            prop_assume!(!is_bad_genre(&m).unwrap());
            let red = cdm_reduce(&m, &CdmOptions::default()).unwrap();
            prop_assert!(verify_reduction(&m, &red));
            prop_assert_eq!(&red.params.genres, &m.genres().unwrap());
        }

        #[test]
        fn closed_form_matches_limit(seed in any::<u64>(), which in 0usize..5, prime in any::<bool>()) {
            let (r, tau) = config(which);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let form = if prime { Form::EtaPrime } else { Form::Eta };
            let m = random_module(&r, &tau, &vec![form; tau.f()], default_nv(&tau), true, &mut rng).unwrap();
            let t = if prime { TSet::empty(tau.f()) } else { TSet::full(tau.f()) };
            prop_assume!(!is_bad_genre_with(&m, &t).unwrap());
            let forms = vec![form; tau.f()];
            let opts = CdmOptions { forms: Some(forms.clone()), max_steps: None };
            let red = cdm_reduce(&m, &opts).unwrap();
            let closed = closed_form_cdm(&m, &red.limit, Some(&forms)).unwrap();
            for (a, b) in closed.iter().zip(&red.intermediate) {
                prop_assert!(a.eq_at(b));
            }
        }

        #[test]
        fn both_bad_genre_predicates_agree_on_eta_form(seed in any::<u64>(), p in prop::sample::select(vec![3u32, 5, 7]), f in 1usize..4) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let z: Vec<u32> = (0..f).map(|_| rng.gen_range(0..p)).collect();
            let tau = TameType::new(p, z.clone()).unwrap();
            let genres: Vec<Genre> = (0..f).map(|_| if rng.gen_bool(0.5) { Genre::II } else { Genre::IEta }).collect();
            prop_assert_eq!(bad_genre_pattern(p, &genres, &z), bad_genre_pattern_with(&tau, &genres, &TSet::full(f)));
        }

        #[test]
        fn base_change_is_a_group_action(seed in any::<u64>(), f in 1usize..4) {
            let r = CoeffRing::new(5, 1, 2).unwrap();
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let genres: Vec<Genre> = (0..f).map(|_| if rng.gen_bool(0.5) { Genre::II } else { Genre::IEta }).collect();
            let params = CdmParams {
                alpha: r.random_unit(&mut rng),
                alpha_prime: r.random_unit(&mut rng),
                a: genres.iter().map(|g| if *g == Genre::IEta { r.random(&mut rng) } else { r.zero() }).collect(),
                a_prime: genres.iter().map(|g| if *g == Genre::II { r.random_nonunit(&mut rng) } else { r.zero() }).collect(),
                forms: vec![Form::Eta; f],
                genres,
            };
            params.validate(&r).unwrap();
            let (l1, m1, l2, m2) = (r.random_unit(&mut rng), r.random_unit(&mut rng), r.random_unit(&mut rng), r.random_unit(&mut rng));
            let (step, _) = cdm_base_change(&r, &params, &l1, &m1).unwrap();
            let (twice, _) = cdm_base_change(&r, &step, &l2, &m2).unwrap();
            let (once, _) = cdm_base_change(&r, &params, &r.mul(&l1, &l2), &r.mul(&m1, &m2)).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
