use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use bkstack::bkmod::{random_module, restricted_base_change, BKModule, Form, Mat2};
use bkstack::cdm::{cdm_reduce, closed_form_cdm, default_cdm_budget, is_bad_genre, verify_reduction, CdmOptions};
use bkstack::coeffring::{CoeffRing, VSeries};
use bkstack::quotient::{functor_t, g_action, invariant_functions, invariant_jacobian_rank, GroupElement, XPoint};
use bkstack::straighten::{
    assemble_f, default_straighten_budget, full_base_change, reachability, straighten, UnipotentTuple,
};
use bkstack::tametype::TameType;
use bkstack::Error;

use crate::{ring_header, Failure, Suite};

pub struct Config {
    pub tau: TameType,
    pub samples: usize,
    pub seed: u64,
    pub nv: usize,
    pub max_sweeps: Option<usize>,
}

pub struct Report {
    pub json: Value,
    pub passed: bool,
    pub failures: usize,
}

/// Pass/fail tallies per named check.
#[derive(Default)]
struct Tally {
    checks: BTreeMap<&'static str, (usize, usize, Option<usize>)>,
    notes: BTreeMap<&'static str, Value>,
    /// Serialized input of the current sample.
    context: Value,
    counterexamples: BTreeMap<&'static str, Value>,
}

impl Tally {
    fn record(&mut self, name: &'static str, sample: usize, ok: bool) {
        let e = self.checks.entry(name).or_default();
        if ok {
            e.0 += 1;
        } else {
            e.1 += 1;
            e.2.get_or_insert(sample);
            self.counterexamples.entry(name).or_insert_with(|| self.context.clone());
        }
    }

    fn count(&mut self, name: &'static str) {
        let n = self.notes.entry(name).or_insert(json!(0));
        *n = json!(n.as_u64().unwrap_or(0) + 1);
    }

    fn failures(&self) -> usize {
        self.checks.values().map(|c| c.1).sum()
    }

    fn to_json(&self) -> Value {
        let checks: BTreeMap<_, _> = self
            .checks
            .iter()
            .map(|(k, (p, f, first))| (*k, json!({"passed": p, "failed": f, "first_failure": first})))
            .collect();
        json!({"checks": checks, "notes": self.notes, "counterexamples": self.counterexamples})
    }
}

fn rings(p: u32) -> Result<Vec<CoeffRing>, Failure> {
    Ok(vec![CoeffRing::new(p, 1, 1)?, CoeffRing::new(p, 2, 1)?, CoeffRing::new(p, 1, 2)?])
}

fn ring_label(r: &CoeffRing) -> String {
    match (r.m(), r.k()) {
        (1, 1) => format!("F{}", r.p()),
        (m, 1) => format!("F{}^{}", r.p(), m),
        (1, k) => format!("F{}[eps]/eps^{}", r.p(), k),
        (m, k) => format!("F{}^{}[eps]/eps^{}", r.p(), m, k),
    }
}

pub fn run(suite: Suite, cfg: &Config) -> Result<Report, Failure> {
    let suites: &[Suite] = match suite {
        Suite::All => &[Suite::Coeffring, Suite::Cdm, Suite::Straighten, Suite::Quotient],
        Suite::Coeffring => &[Suite::Coeffring],
        Suite::Cdm => &[Suite::Cdm],
        Suite::Straighten => &[Suite::Straighten],
        Suite::Quotient => &[Suite::Quotient],
    };
    let tau = &cfg.tau;
    let nv = cfg.nv;
    let mut per_ring = BTreeMap::new();
    let mut failures = 0;
    for (ri, ring) in rings(tau.p())?.iter().enumerate() {
        let mut out = BTreeMap::new();
        for (si, s) in suites.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((ri as u64) << 32) ^ ((si as u64) << 40));
            let mut t = Tally::default();
            let name = match s {
                Suite::Coeffring => {
                    coeffring_suite(ring, nv, cfg.samples, &mut rng, &mut t);
                    "coeffring"
                }
                Suite::Cdm => {
                    cdm_suite(ring, tau, nv, cfg, &mut rng, &mut t)?;
                    "cdm"
                }
                Suite::Straighten => {
                    straighten_suite(ring, tau, nv, cfg, &mut rng, &mut t)?;
                    "straighten"
                }
                Suite::Quotient => {
                    quotient_suite(ring, tau, nv, cfg.samples, &mut rng, &mut t)?;
                    "quotient"
                }
                Suite::All => unreachable!(),
            };
            failures += t.failures();
            out.insert(name, t.to_json());
        }
        let mut header = ring_header(ring, tau, nv);
        header["suites"] = json!(out);
        per_ring.insert(ring_label(ring), header);
    }
    let json = json!({
        "tau": tau,
        "seed": cfg.seed,
        "samples": cfg.samples,
        "N_v": nv,
        "N_u": nv as u64 * tau.e(),
        "first_obstruction": tau.first_obstruction(None),
        "second_obstruction": tau.second_obstruction(None),
        "rings": per_ring,
        "failures": failures,
        "passed": failures == 0,
    });
    Ok(Report { json, passed: failures == 0, failures })
}

fn coeffring_suite(r: &CoeffRing, nv: usize, samples: usize, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let p = r.p() as usize;
    for s in 0..samples {
        let (a, b, c) = (r.random(rng), r.random(rng), r.random(rng));
        t.context = json!({"a": r.to_strings(&a), "b": r.to_strings(&b), "c": r.to_strings(&c)});
        t.record("associative", s, r.mul(&r.mul(&a, &b), &c) == r.mul(&a, &r.mul(&b, &c)));
        t.record("distributive", s, r.mul(&a, &r.add(&b, &c)) == r.add(&r.mul(&a, &b), &r.mul(&a, &c)));
        let u = r.random_unit(rng);
        t.record("unit_inverse", s, r.inv(&u).map(|w| r.is_one(&r.mul(&u, &w))).unwrap_or(false));
        t.record("nonunit_not_invertible", s, r.is_field() || r.inv(&r.random_nonunit(rng)).is_err());

        let (x, y) = (VSeries::random(r, nv, rng), VSeries::random(r, nv, rng));
        t.record("series_phi_multiplicative", s, (&x * &y).phi(p, nv).eq_at(&(&x.phi(p, nv) * &y.phi(p, nv))));
        let mut w = VSeries::random(r, nv, rng);
        w.set_coeff(0, r.random_unit(rng));
        let ok = w.inverse().map(|i| (&w * &i).eq_at(&VSeries::one(r, nv))).unwrap_or(false);
        t.record("series_inverse", s, ok);
    }
}

fn cdm_suite(
    r: &CoeffRing,
    tau: &TameType,
    nv: usize,
    cfg: &Config,
    rng: &mut ChaCha8Rng,
    t: &mut Tally,
) -> Result<(), Failure> {
    let f = tau.f();
    for s in 0..cfg.samples {
        let scalar = rng.gen_bool(0.5);
        let forms = vec![Form::Eta; f];
        let m = random_module(r, tau, &forms, nv, scalar, rng)?;
        t.context = json!({"module": m.to_repr()});
        if is_bad_genre(&m)? {
            t.count("skipped_bad_genre");
            continue;
        }
        let budget = cfg.max_sweeps.unwrap_or_else(|| default_cdm_budget(&m));
        let opts = CdmOptions { forms: Some(forms.clone()), max_steps: Some(budget) };
        let red = match cdm_reduce(&m, &opts) {
            Ok(red) => red,
            Err(Error::NoConvergence { .. }) => {
                t.record("converged", s, false);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        t.record("converged", s, true);
        t.record("within_budget", s, red.steps <= budget);
        t.record("reduction_identity", s, verify_reduction(&m, &red));
        t.record("genres_preserved", s, m.genres()? == red.params.genres);
        if scalar {
            let closed = closed_form_cdm(&m, &red.limit, Some(&forms))?;
            t.record("closed_form", s, closed.iter().zip(&red.intermediate).all(|(a, b)| a.eq_at(b)));
        }
    }
    Ok(())
}

fn straighten_suite(
    r: &CoeffRing,
    tau: &TameType,
    nv: usize,
    cfg: &Config,
    rng: &mut ChaCha8Rng,
    t: &mut Tally,
) -> Result<(), Failure> {
    let f = tau.f();
    let budget = cfg.max_sweeps.unwrap_or_else(|| default_straighten_budget(f, nv));
    let obstructed = tau.first_obstruction(None) || tau.second_obstruction(None);
    let mut witness: Option<Value> = None;
    for s in 0..cfg.samples {
        let x = XPoint::random(r, f, rng);
        let tx = functor_t(&x, tau, nv)?;
        let g = tx.eta_prime_restrict();
        let u = UnipotentTuple::upper((0..f).map(|_| r.random(rng)).collect());
        t.context = json!({"x": x.to_repr(), "y": u.y.iter().map(|y| r.to_strings(y)).collect::<Vec<_>>()});
        match straighten(&u, &g, tau, nv, Some(budget)) {
            Ok(data) => {
                t.count("straightened");
                let ug: Vec<Mat2> = g.iter().enumerate().map(|(i, gi)| u.matrix(r, i, nv).mul(gi)).collect();
                let back = restricted_base_change(&ug, &data.j, tau, nv)?;
                t.record("straightening_identity", s, back.iter().zip(&g).all(|(a, b)| a.eq_at(b)));
                if !obstructed {
                    t.record("growth_bounds", s, data.growth_ok);
                }
            }
            Err(Error::NoConvergence { .. }) => {
                t.count("stalled");
                if !obstructed {
                    t.record("unobstructed_converges", s, false);
                }
            }
            Err(e) => return Err(e.into()),
        }

        let gel = GroupElement::random(r, f, rng);
        t.context = json!({"x": x.to_repr(), "g": gel.to_repr(r)});
        match assemble_f(&gel, &x, tau, nv) {
            Ok(j) => {
                let tgx = functor_t(&g_action(&gel, &x)?, tau, nv)?;
                let ok = tx.apply_base_change(&full_base_change(&j, tau)?)?.eq_at(&tgx);
                t.record("assembled_intertwines", s, ok);
            }
            Err(Error::NoConvergence { .. }) if obstructed => t.count("assembly_stalled"),
            Err(e) => return Err(e.into()),
        }

        if is_bad_genre(&tx)? {
            t.count("skipped_bad_genre");
            continue;
        }
        let red = cdm_reduce(&tx, &CdmOptions::default())?;
        let reach = reachability(&tx, &red.limit, None)?;
        let all = reach.reachable.iter().all(|&b| b);
        if !tau.second_obstruction(None) {
            t.record("reachable", s, all);
        } else if !all && witness.is_none() {
            let i = reach.reachable.iter().position(|&b| !b).unwrap_or(0);
            witness = Some(json!({
                "sample": s,
                "x": x.to_repr(),
                "index": i,
                "sbar": r.to_strings(&reach.sbar[i]),
            }));
        }
    }
    t.notes.insert("budget", json!(budget));
    if tau.second_obstruction(None) {
        t.notes.insert("reachability_witness", witness.unwrap_or(Value::Null));
    }
    Ok(())
}

fn same_point(a: &XPoint, b: &XPoint) -> bool {
    a.matrices() == b.matrices()
}

fn quotient_suite(
    r: &CoeffRing,
    tau: &TameType,
    nv: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
    t: &mut Tally,
) -> Result<(), Failure> {
    let f = tau.f();
    for s in 0..samples {
        let x = XPoint::random(r, f, rng);
        let (g, h) = (GroupElement::random(r, f, rng), GroupElement::random(r, f, rng));
        t.context = json!({"x": x.to_repr(), "g": g.to_repr(r), "h": h.to_repr(r)});
        let id = GroupElement::identity(r, f);
        t.record("identity_acts_trivially", s, same_point(&g_action(&id, &x)?, &x));
        let lhs = g_action(&g.compose(&h, r)?, &x)?;
        let rhs = g_action(&g, &g_action(&h, &x)?)?;
        t.record("action_composes", s, same_point(&lhs, &rhs));
        t.record("invariants_invariant", s, invariant_functions(&x) == invariant_functions(&g_action(&g, &x)?));

        let m: BKModule = functor_t(&x, tau, nv)?;
        t.record("t_hodge_v0", s, m.hodge_v0()?);
        t.record("t_regular", s, m.is_regular()?);

        let back = XPoint::from_repr(r, &serde_json::from_value(json!(x.to_repr())).expect("repr round trip"))?;
        t.record("serialization", s, same_point(&back, &x));

        if r.k() == 1 && !r.is_zero(&invariant_functions(&x).1) {
            t.record("jacobian_rank_two", s, invariant_jacobian_rank(&x)? == 2);
        }
    }
    Ok(())
}
