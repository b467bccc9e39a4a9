//! Unipotent star actions, the v-adic construction of the straightening
//! matrices `J_i`, the assembled base change for the group action, and the
//! reachability diagnostic behind the second obstruction.

use serde::{Deserialize, Serialize};

use crate::bkmod::{BKModule, Form, Mat2, Shaped};
use crate::cdm::resolve_forms;
use crate::coeffring::{CoeffElement, CoeffRing, SeriesRepr, VSeries};
use crate::error::{Error, Result};
use crate::quotient::{functor_t, GroupElement, XPoint};
use crate::tametype::TameType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// `U_i = [[1, y_i], [0, 1]]` or `[[1, 0], [y_i, 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnipotentTuple {
    pub y: Vec<CoeffElement>,
    pub side: Side,
}

impl UnipotentTuple {
    pub fn upper(y: Vec<CoeffElement>) -> Self {
        UnipotentTuple { y, side: Side::Upper }
    }

    pub fn identity(ring: &CoeffRing, f: usize) -> Self {
        Self::upper(vec![ring.zero(); f])
    }

    pub fn matrix(&self, ring: &CoeffRing, i: usize, prec: usize) -> Mat2 {
        let (o, z, y) = (ring.one(), ring.zero(), self.y[i].clone());
        let x = match self.side {
            Side::Upper => [o.clone(), y, z, o],
            Side::Lower => [o.clone(), z, y, o],
        };
        Mat2::from_scalars(ring, x, prec)
    }
}

/// `[[v(a + yc), u^{e-gamma}(b + yd)], [u^gamma c, d]]`, i.e. left
/// multiplication on the eta'-restriction.
pub fn star_upper(y: &CoeffElement, f: &Shaped) -> Shaped {
    let [s1, s2, s3, s4] = f.s();
    Shaped::new(f.gamma(), f.e(), [s1 + &s3.mul_v_pow(1).scale(y), s2 + &s4.scale(y), s3.clone(), s4.clone()])
}

/// `[[a, u^{e-gamma} b], [u^gamma (c + ya), v(d + yb)]]`.
pub fn star_lower(y: &CoeffElement, f: &Shaped) -> Shaped {
    let [s1, s2, s3, s4] = f.s();
    Shaped::new(f.gamma(), f.e(), [s1.clone(), s2.clone(), s3 + &s1.scale(y), s4 + &s2.mul_v_pow(1).scale(y)])
}

/// Acts entrywise with `U_i` on a tuple in the form matching its side.
pub fn star(u: &UnipotentTuple, frobs: &[Shaped]) -> Vec<Shaped> {
    frobs
        .iter()
        .zip(&u.y)
        .map(|(fr, y)| match u.side {
            Side::Upper => star_upper(y, fr),
            Side::Lower => star_lower(y, fr),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StraighteningData {
    pub j: Vec<Mat2>,
    /// Per iteration, the valuation of `J_i^{(n+1)} - J_i^{(n)}` for each
    /// `i`, with a vanishing difference recorded as its precision.
    pub trace: Vec<Vec<usize>>,
    pub iterations: usize,
    /// The per-index lower bounds on the differences held throughout.
    pub growth_ok: bool,
}

impl StraighteningData {
    /// The functorial base change `J_i^{-1}`, which carries `G` to `U * G`.
    pub fn functorial(&self) -> Result<Vec<Mat2>> {
        self.j.iter().map(Mat2::inverse).collect()
    }

    pub fn to_repr(&self) -> StraighteningRepr {
        StraighteningRepr {
            j: self.j.iter().map(|m| m.0.each_ref().map(VSeries::to_repr)).collect(),
            trace: self.trace.clone(),
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraighteningRepr {
    pub j: Vec<[SeriesRepr; 4]>,
    pub trace: Vec<Vec<usize>>,
    pub iterations: usize,
}

pub fn default_straighten_budget(f: usize, nv: usize) -> usize {
    f * (nv + 2 * f + 4)
}

fn diff_valuation(a: &Mat2, b: &Mat2) -> usize {
    let d = a.sub(b);
    d.valuation().unwrap_or(d.prec())
}

/// Solves `G_i = J_i^{-1} (U_i G_i) Ad(diag(v^{p-1-z_i}, 1))(phi(J_{i-1}))`
/// by iterating `J_i <- U_i G_i Ad(..)(phi(J_{i-1})) G_i^{-1}` from the
/// identity, with `G_i^{-1} = adj(G_i) / (v D_i)`.
pub fn straighten(
    u: &UnipotentTuple,
    g: &[Mat2],
    tau: &TameType,
    cap: usize,
    max_iter: Option<usize>,
) -> Result<StraighteningData> {
    let f = tau.f();
    if u.side != Side::Upper {
        return Err(Error::Mismatch("straightening is built for upper unipotent tuples".into()));
    }
    if g.len() != f || u.y.len() != f {
        return Err(Error::Mismatch("tuples must have length f".into()));
    }
    let ring = g[0].ring().clone();
    let p = tau.p() as usize;
    let z: Vec<usize> = tau.z().iter().map(|&x| x as usize).collect();
    let mut left = Vec::with_capacity(f);
    let mut right = Vec::with_capacity(f);
    for (i, gi) in g.iter().enumerate() {
        let dinv = gi.det().div_v_pow(1).and_then(|d| d.inverse()).map_err(|_| Error::DetNotUnitTimesV)?;
        left.push(u.matrix(&ring, i, cap).mul(gi));
        right.push(gi.adjugate().scale(&dinv));
    }
    let budget = max_iter.unwrap_or_else(|| default_straighten_budget(f, cap));
    let mut cur: Vec<Mat2> = (0..f).map(|_| Mat2::identity(&ring, cap)).collect();
    let mut trace: Vec<Vec<usize>> = Vec::new();
    let mut growth_ok = true;
    let stalled = |trace: &[Vec<usize>], steps: usize| {
        let tail = trace.iter().rev().take(2 * f).rev().map(|v| v.iter().copied().min().unwrap_or(0)).collect();
        Error::NoConvergence { steps, trace: tail }
    };
    for n in 0..budget {
        let next = (0..f)
            .map(|i| {
                let twisted = cur[(i + f - 1) % f].ad_phi(p, z[i], cap)?;
                let m = left[i].mul(&twisted).mul(&right[i]);
                div_v(&m)
            })
            .collect::<Result<Vec<Mat2>>>();
        // an iterate whose lower-left entry is a unit mod v has left the
        // integral locus: a difference of valuation 0 reached it
        let next = match next {
            Err(Error::NonDivisible) => return Err(stalled(&trace, n)),
            other => other?,
        };
        // the first step only moves Id to U
        if n > 0 {
            let vals: Vec<usize> = (0..f).map(|i| diff_valuation(&next[i], &cur[i])).collect();
            if trace.is_empty() {
                for i in 0..f {
                    growth_ok &= vals[i] >= (p - z[i]).min(next[i].prec());
                }
            }
            if let Some(prev) = trace.last() {
                for i in 0..f {
                    let r = prev[(i + f - 1) % f];
                    let bound = (p * r.saturating_sub(1) + z[i]).min(next[i].prec());
                    growth_ok &= vals[i] >= bound;
                }
                let (old, new) = (prev.iter().min(), vals.iter().min());
                if old.is_some_and(|&o| o >= 2) {
                    growth_ok &= new >= old;
                }
            }
            let done = (0..f).all(|i| next[i].eq_at(&cur[i]));
            trace.push(vals);
            if done {
                return Ok(StraighteningData { j: next, trace, iterations: n + 1, growth_ok });
            }
        }
        cur = next;
    }
    Err(stalled(&trace, budget))
}

fn div_v(m: &Mat2) -> Result<Mat2> {
    let [a, b, c, d] = m.0.each_ref().map(|s| s.div_v_pow(1));
    Ok(Mat2([a?, b?, c?, d?]))
}

/// For each index, whether `F'_i = U_i * F_i` for some unipotent `U_i`,
/// where `F'` is the module after the base change `limit`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachability {
    pub reachable: Vec<bool>,
    /// The parameter `y_i` when reachable.
    pub y: Vec<Option<CoeffElement>>,
    /// The constant term of the limit's off-diagonal entry at `i - 1`: lower
    /// left in eta-form, upper right in eta'-form.
    pub sbar: Vec<CoeffElement>,
}

pub fn reachability(m: &BKModule, limit: &[Shaped], forms: Option<&[Form]>) -> Result<Reachability> {
    let forms = resolve_forms(m, forms)?;
    let f = m.f();
    let ring = m.ring();
    let moved = m.apply_base_change(limit)?;
    let mut out = Reachability { reachable: Vec::new(), y: Vec::new(), sbar: Vec::new() };
    for i in 0..f {
        let (fr, fp) = (&m.frobs()[i], &moved.frobs()[i]);
        let prev = &limit[(i + f - 1) % f];
        let [s1, s2, s3, s4] = fr.s();
        let [t1, t2, t3, t4] = fp.s();
        let y = match forms[i] {
            Form::Eta => {
                out.sbar.push(prev.s3().constant_part());
                let d1 = (t1 - s1).div_v_pow(1)?;
                let d2 = t2 - s2;
                let y = solve_scalar(ring, [(&d1, s3), (&d2, s4)]);
                y.filter(|y| t3.eq_at(s3) && t4.eq_at(s4) && d1.eq_at(&s3.scale(y)) && d2.eq_at(&s4.scale(y)))
            }
            Form::EtaPrime => {
                out.sbar.push(prev.s2().constant_part());
                let d3 = t3 - s3;
                let d4 = (t4 - s4).div_v_pow(1)?;
                let y = solve_scalar(ring, [(&d3, s1), (&d4, s2)]);
                y.filter(|y| t1.eq_at(s1) && t2.eq_at(s2) && d3.eq_at(&s1.scale(y)) && d4.eq_at(&s2.scale(y)))
            }
        };
        out.reachable.push(y.is_some());
        out.y.push(y);
    }
    Ok(out)
}

/// A candidate `y` with `lhs = y rhs`, read off from the constant terms of
/// whichever pair has a unit on the right.
fn solve_scalar(ring: &CoeffRing, pairs: [(&VSeries, &VSeries); 2]) -> Option<CoeffElement> {
    pairs.iter().find_map(|(lhs, rhs)| ring.div(&lhs.constant_part(), &rhs.constant_part()).ok())
}

/// The eta'-eigenspace base change `J_0 = F_0(m) diag(l, mu)` and
/// `J_i = F_i(m) diag(r_i^{-1}, r_i) diag(l, mu)`, where `F(m)` is the
/// functorial straightening of `T(x)` by the unipotent part of `g`.
pub fn assemble_f(g: &GroupElement, x: &XPoint, tau: &TameType, cap: usize) -> Result<Vec<Mat2>> {
    let ring = x.ring();
    g.validate(ring)?;
    let restricted = functor_t(x, tau, cap)?.eta_prime_restrict();
    let data = straighten(&UnipotentTuple::upper(g.y.clone()), &restricted, tau, cap, None)?;
    let fm = data.functorial()?;
    fm.iter()
        .enumerate()
        .map(|(i, k)| {
            let r = g.r_at(ring, i);
            let x = ring.div(&g.lambda, &r)?;
            let y = ring.mul(&r, &g.mu);
            Ok(k.mul(&Mat2::diag(ring, x, y, cap)))
        })
        .collect()
}

/// Full `u`-matrices of an eta'-eigenspace base change.
pub fn full_base_change(j: &[Mat2], tau: &TameType) -> Result<Vec<Shaped>> {
    j.iter().enumerate().map(|(i, m)| Shaped::from_restricted(m, tau.gamma()[i], tau.e())).collect()
}
