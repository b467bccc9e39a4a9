//! The presentation data: points of `X = GL2 x SL2^{f-1}`, the group `G`
//! acting on them, the functor `T` into Breuil-Kisin modules, the two
//! invariant functions, and an integrality checker for base changes given on
//! finite Laurent windows.

use serde::{Deserialize, Serialize};

use crate::bkmod::{BKModule, Mat2, Shaped};
use crate::coeffring::{CoeffElement, CoeffRing, SeriesRepr, VSeries};
use crate::error::{Error, Result};
use crate::tametype::TameType;

/// Entries `[a, b, c, d]` of `[[a, b], [c, d]]` over `R`.
pub type Scalar2 = [CoeffElement; 4];

fn smul(r: &CoeffRing, x: &Scalar2, y: &Scalar2) -> Scalar2 {
    let [a, b, c, d] = x;
    let [p, q, s, t] = y;
    [
        r.add(&r.mul(a, p), &r.mul(b, s)),
        r.add(&r.mul(a, q), &r.mul(b, t)),
        r.add(&r.mul(c, p), &r.mul(d, s)),
        r.add(&r.mul(c, q), &r.mul(d, t)),
    ]
}

fn sdet(r: &CoeffRing, x: &Scalar2) -> CoeffElement {
    r.sub(&r.mul(&x[0], &x[3]), &r.mul(&x[1], &x[2]))
}

fn sdiag(r: &CoeffRing, x: CoeffElement, y: CoeffElement) -> Scalar2 {
    [x, r.zero(), r.zero(), y]
}

/// A point of `X`: `det A_0` a unit, `det A_i = 1` for `i >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XPoint {
    ring: CoeffRing,
    a: Vec<Scalar2>,
}

impl XPoint {
    pub fn new(ring: &CoeffRing, a: Vec<Scalar2>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::OutOfRange("an X-point needs at least one matrix".into()));
        }
        if !ring.is_unit(&sdet(ring, &a[0])) {
            return Err(Error::Mismatch("det A_0 is not a unit".into()));
        }
        if let Some(i) = (1..a.len()).find(|&i| !ring.is_one(&sdet(ring, &a[i]))) {
            return Err(Error::Mismatch(format!("det A_{i} is not 1")));
        }
        Ok(XPoint { ring: ring.clone(), a })
    }

    pub fn identity(ring: &CoeffRing, f: usize) -> Self {
        XPoint { ring: ring.clone(), a: vec![sdiag(ring, ring.one(), ring.one()); f] }
    }

    pub fn random<G: rand::Rng + ?Sized>(ring: &CoeffRing, f: usize, rng: &mut G) -> Self {
        let a = (0..f)
            .map(|i| loop {
                let m: Scalar2 = std::array::from_fn(|_| ring.random(rng));
                let det = sdet(ring, &m);
                if let Ok(inv) = ring.inv(&det) {
                    if i == 0 {
                        break m;
                    }
                    let [a, b, c, d] = m;
                    break [ring.mul(&a, &inv), ring.mul(&b, &inv), c, d];
                }
            })
            .collect();
        XPoint { ring: ring.clone(), a }
    }

    pub fn ring(&self) -> &CoeffRing {
        &self.ring
    }

    pub fn f(&self) -> usize {
        self.a.len()
    }

    pub fn matrices(&self) -> &[Scalar2] {
        &self.a
    }

    pub fn to_repr(&self) -> XPointRepr {
        XPointRepr { a: self.a.iter().map(|m| m.each_ref().map(|x| self.ring.to_strings(x))).collect() }
    }

    pub fn from_repr(ring: &CoeffRing, repr: &XPointRepr) -> Result<Self> {
        let a = repr
            .a
            .iter()
            .map(|m| {
                let [a, b, c, d] = m.each_ref().map(|x| ring.from_strings(x));
                Ok([a?, b?, c?, d?])
            })
            .collect::<Result<Vec<_>>>()?;
        XPoint::new(ring, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XPointRepr {
    pub a: Vec<[Vec<String>; 4]>,
}

/// `(lambda, mu, r_1, ..., r_{f-1}, m_0, ..., m_{f-1})` with `m_i = [[1, y_i], [0, 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupElement {
    pub lambda: CoeffElement,
    pub mu: CoeffElement,
    pub r: Vec<CoeffElement>,
    pub y: Vec<CoeffElement>,
}

impl GroupElement {
    pub fn identity(ring: &CoeffRing, f: usize) -> Self {
        GroupElement {
            lambda: ring.one(),
            mu: ring.one(),
            r: vec![ring.one(); f.saturating_sub(1)],
            y: vec![ring.zero(); f],
        }
    }

    pub fn random<G: rand::Rng + ?Sized>(ring: &CoeffRing, f: usize, rng: &mut G) -> Self {
        GroupElement {
            lambda: ring.random_unit(rng),
            mu: ring.random_unit(rng),
            r: (1..f).map(|_| ring.random_unit(rng)).collect(),
            y: (0..f).map(|_| ring.random(rng)).collect(),
        }
    }

    pub fn f(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self, ring: &CoeffRing) -> Result<()> {
        if self.r.len() + 1 != self.y.len() {
            return Err(Error::Mismatch("r must have one entry fewer than y".into()));
        }
        let units = [&self.lambda, &self.mu].into_iter().chain(&self.r);
        if units.into_iter().any(|x| !ring.is_unit(x)) {
            return Err(Error::Mismatch("lambda, mu and r must be units".into()));
        }
        Ok(())
    }

    /// `r_i`, with `r_0 = 1`.
    pub fn r_at(&self, ring: &CoeffRing, i: usize) -> CoeffElement {
        if i == 0 {
            ring.one()
        } else {
            self.r[i - 1].clone()
        }
    }

    /// The product with `compose(g, h) . x = g . (h . x)`. The torus parts
    /// multiply; moving `m_i` of `g` past the diagonal part of `h` rescales
    /// its parameter by `lambda_h / (mu_h r_{h,i}^2)`.
    pub fn compose(&self, h: &GroupElement, ring: &CoeffRing) -> Result<GroupElement> {
        let f = self.f();
        let y = (0..f)
            .map(|i| {
                let r = h.r_at(ring, i);
                let denom = ring.mul(&h.mu, &ring.mul(&r, &r));
                let twist = ring.div(&h.lambda, &denom)?;
                Ok(ring.add(&h.y[i], &ring.mul(&self.y[i], &twist)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupElement {
            lambda: ring.mul(&self.lambda, &h.lambda),
            mu: ring.mul(&self.mu, &h.mu),
            r: self.r.iter().zip(&h.r).map(|(a, b)| ring.mul(a, b)).collect(),
            y,
        })
    }

    pub fn to_repr(&self, ring: &CoeffRing) -> GroupElementRepr {
        let s = |v: &[CoeffElement]| v.iter().map(|x| ring.to_strings(x)).collect();
        GroupElementRepr {
            lambda: ring.to_strings(&self.lambda),
            mu: ring.to_strings(&self.mu),
            r: s(&self.r),
            y: s(&self.y),
        }
    }

    pub fn from_repr(ring: &CoeffRing, repr: &GroupElementRepr) -> Result<Self> {
        let s = |v: &[Vec<String>]| v.iter().map(|x| ring.from_strings(x)).collect::<Result<Vec<_>>>();
        let g = GroupElement {
            lambda: ring.from_strings(&repr.lambda)?,
            mu: ring.from_strings(&repr.mu)?,
            r: s(&repr.r)?,
            y: s(&repr.y)?,
        };
        g.validate(ring)?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupElementRepr {
    pub lambda: Vec<String>,
    pub mu: Vec<String>,
    pub r: Vec<Vec<String>>,
    pub y: Vec<Vec<String>>,
}

/// `A_i -> diag(l, m)^{-1} diag(r_i, r_i^{-1}) m_i A_i diag(r_{i-1}^{-1}, r_{i-1}) diag(l, m)`
/// with `r_0 = 1` and indices mod `f`.
pub fn g_action(g: &GroupElement, x: &XPoint) -> Result<XPoint> {
    let ring = &x.ring;
    let f = x.f();
    if g.f() != f {
        return Err(Error::Mismatch("group element and point have different f".into()));
    }
    g.validate(ring)?;
    let (li, mi) = (ring.inv(&g.lambda)?, ring.inv(&g.mu)?);
    let a = (0..f)
        .map(|i| {
            let r = g.r_at(ring, i);
            let rp = g.r_at(ring, (i + f - 1) % f);
            let left = sdiag(ring, ring.mul(&li, &r), ring.mul(&mi, &ring.inv(&r)?));
            let right = sdiag(ring, ring.mul(&ring.inv(&rp)?, &g.lambda), ring.mul(&rp, &g.mu));
            let m = [ring.one(), g.y[i].clone(), ring.zero(), ring.one()];
            Ok(smul(ring, &smul(ring, &left, &smul(ring, &m, &x.a[i])), &right))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(XPoint { ring: ring.clone(), a })
}

/// The module whose `i`-th Frobenius is `[[v a_i, u^{e-gamma_i} b_i], [u^{gamma_i} c_i, d_i]]`.
pub fn functor_t(x: &XPoint, tau: &TameType, prec: usize) -> Result<BKModule> {
    if tau.f() != x.f() {
        return Err(Error::Mismatch("tame type and point have different f".into()));
    }
    let frobs = x
        .a
        .iter()
        .enumerate()
        .map(|(i, m)| Shaped::eta_scalars(&x.ring, tau.gamma()[i], tau.e(), m.clone(), prec))
        .collect();
    BKModule::new(tau.clone(), x.ring.clone(), frobs)
}

/// `(det A_0, d_0 d_1 ... d_{f-1})`.
pub fn invariant_functions(x: &XPoint) -> (CoeffElement, CoeffElement) {
    let r = &x.ring;
    let pd = x.a.iter().fold(r.one(), |acc, m| r.mul(&acc, &m[3]));
    (sdet(r, &x.a[0]), pd)
}

/// Rank over the residue field of the differential of `(D, Pd)` at a point of
/// `X` over a field. Tangent vectors are read off from `x (1 + eps xi)` over
/// `F[eps]/eps^2`, with `xi` running through a basis of `gl2` at index 0 and
/// of `sl2` elsewhere, so the perturbed points stay on `X`.
pub fn invariant_jacobian_rank(x: &XPoint) -> Result<usize> {
    let base = &x.ring;
    if base.k() != 1 {
        return Err(Error::InvalidRing("the Jacobian is taken at a point over a field".into()));
    }
    let dual = CoeffRing::new(base.p(), base.m(), 2)?;
    let lift = |a: &CoeffElement| dual.from_field(a.digits()[0]);
    let eps = dual.eps_pow(1);
    let (o, z) = (dual.one(), dual.zero());
    let gl2 = [
        [o.clone(), z.clone(), z.clone(), z.clone()],
        [z.clone(), o.clone(), z.clone(), z.clone()],
        [z.clone(), z.clone(), o.clone(), z.clone()],
        [z.clone(), z.clone(), z.clone(), o.clone()],
    ];
    let sl2 = [[o.clone(), z.clone(), z.clone(), dual.neg(&o)], gl2[1].clone(), gl2[2].clone()];
    let point: Vec<Scalar2> = x.a.iter().map(|m| m.each_ref().map(lift)).collect();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(), Vec::new()];
    for i in 0..x.f() {
        let dirs: Vec<Scalar2> = if i == 0 { gl2.to_vec() } else { sl2.to_vec() };
        for xi in dirs {
            let one_plus = [
                dual.add(&o, &dual.mul(&eps, &xi[0])),
                dual.mul(&eps, &xi[1]),
                dual.mul(&eps, &xi[2]),
                dual.add(&o, &dual.mul(&eps, &xi[3])),
            ];
            let mut a = point.clone();
            a[i] = smul(&dual, &a[i], &one_plus);
            let moved = XPoint::new(&dual, a)?;
            let (d, pd) = invariant_functions(&moved);
            rows[0].push(d.digits()[1]);
            rows[1].push(pd.digits()[1]);
        }
    }
    Ok(field_rank(base, rows))
}

fn field_rank(ring: &CoeffRing, mut rows: Vec<Vec<u32>>) -> usize {
    let fld = ring.field();
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|&r| rows[r][c] != 0) else {
            continue;
        };
        rows.swap(rank, piv);
        let inv = fld.inv(rows[rank][c]).expect("nonzero pivot");
        for r in 0..rows.len() {
            if r != rank && rows[r][c] != 0 {
                let factor = fld.mul(rows[r][c], inv);
                for j in 0..cols {
                    let t = fld.mul(factor, rows[rank][j]);
                    rows[r][j] = fld.sub(rows[r][j], t);
                }
            }
        }
        rank += 1;
    }
    rank
}

/// A matrix over `R((v))` known on the window `[-pole, prec - pole)`, stored
/// as `v^{-pole}` times an integral numerator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaurentMat2 {
    pub pole: usize,
    pub num: Mat2,
}

impl LaurentMat2 {
    pub fn integral(m: Mat2) -> Self {
        LaurentMat2 { pole: 0, num: m }
    }

    /// `m` read with a pole bound of `pole`.
    pub fn with_pole(m: &Mat2, pole: usize) -> Self {
        LaurentMat2 { pole, num: Mat2(std::array::from_fn(|j| m.0[j].mul_v_pow(pole))) }
    }

    /// `v`-adic valuation of entry `j` relative to `v^0`, `None` if it vanishes
    /// on the window.
    fn entry_val(&self, j: usize) -> Option<i64> {
        self.num.0[j].valuation().map(|v| v as i64 - self.pole as i64)
    }

    pub fn to_repr(&self) -> LaurentRepr {
        LaurentRepr { pole: self.pole, num: self.num.0.each_ref().map(VSeries::to_repr) }
    }

    pub fn from_repr(ring: &CoeffRing, r: &LaurentRepr) -> Result<Self> {
        let [a, b, c, d] = r.num.each_ref().map(|s| VSeries::from_repr(ring, s));
        Ok(LaurentMat2 { pole: r.pole, num: Mat2([a?, b?, c?, d?]) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentRepr {
    pub pole: usize,
    pub num: [SeriesRepr; 4],
}

/// Outcome of [`check_etale_base_change`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtaleReport {
    /// `det B_i` is a unit of `R[[v]]`.
    pub det_unit: bool,
    /// `v B_i` is integral.
    pub v_times_b_integral: bool,
    /// `B_i` is integral and upper triangular mod `v`.
    pub integral_upper_mod_v: bool,
}

impl EtaleReport {
    pub fn passed(&self) -> bool {
        self.det_unit && self.v_times_b_integral && self.integral_upper_mod_v
    }
}

/// Checks `G_i = B_i^{-1} F_i Ad(diag(v^{p-1-z_i}, 1))(phi(B_{i-1}))` on the
/// window, in the pole-free form
/// `v^{(p-1) w + k} N_i G_i = F_i diag(v^k, 1) phi(N_{i-1}) diag(1, v^k)`
/// with `N = v^w B` and `k = p-1-z_i`, then reports the integrality
/// conclusions.
pub fn check_etale_base_change(
    f_mats: &[Mat2],
    g_mats: &[Mat2],
    b: &[LaurentMat2],
    tau: &TameType,
) -> Result<EtaleReport> {
    let f = tau.f();
    if f_mats.len() != f || g_mats.len() != f || b.len() != f {
        return Err(Error::Mismatch("tuples must have length f".into()));
    }
    let p = tau.p() as usize;
    let w = b.iter().map(|m| m.pole).max().unwrap_or(0);
    let nums: Vec<Mat2> = b.iter().map(|m| Mat2(std::array::from_fn(|j| m.num.0[j].mul_v_pow(w - m.pole)))).collect();
    let cap = nums.iter().map(Mat2::prec).min().unwrap_or(0);
    if cap <= 2 * w {
        return Err(Error::WindowTooSmall(format!("numerators known to v^{cap}, pole order {w}")));
    }
    for i in 0..f {
        let k = p - 1 - tau.z()[i] as usize;
        let prev = &nums[(i + f - 1) % f];
        let lhs = nums[i].mul(&g_mats[i]);
        let lhs = Mat2(std::array::from_fn(|j| lhs.0[j].mul_v_pow((p - 1) * w + k)));
        let [q, r, s, t] = &prev.0;
        let cap_phi = cap * p;
        let twisted = Mat2([
            q.phi(p, cap_phi).mul_v_pow(k),
            r.phi(p, cap_phi).mul_v_pow(2 * k),
            s.phi(p, cap_phi),
            t.phi(p, cap_phi).mul_v_pow(k),
        ]);
        let rhs = f_mats[i].mul(&twisted);
        let known = lhs.prec().min(rhs.prec());
        if known <= (p - 1) * w + k {
            return Err(Error::WindowTooSmall(format!("relation at index {i} carries no information")));
        }
        if !lhs.eq_at(&rhs) {
            return Err(Error::RelationFails(i));
        }
    }
    let mut report = EtaleReport { det_unit: true, v_times_b_integral: true, integral_upper_mod_v: true };
    for m in b {
        let det = m.num.det();
        let two_w = 2 * m.pole;
        if det.prec() <= two_w {
            return Err(Error::WindowTooSmall("determinant not known at v^0".into()));
        }
        let low_vanish = (0..two_w).all(|j| m.num.ring().is_zero(&det.coeff(j)));
        report.det_unit &= low_vanish && m.num.ring().is_unit(&det.coeff(two_w));
        let vals: Vec<Option<i64>> = (0..4).map(|j| m.entry_val(j)).collect();
        let at_least = |j: usize, t: i64| vals[j].is_none_or(|v| v >= t);
        report.v_times_b_integral &= (0..4).all(|j| at_least(j, -1));
        report.integral_upper_mod_v &= (0..4).all(|j| at_least(j, 0)) && at_least(2, 1);
    }
    Ok(report)
}
