use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use bkstack::bkmod::{default_nv, BKModule, BKModuleRepr, Shaped};
use bkstack::cdm::{cdm_reduce, default_cdm_budget, is_bad_genre, verify_reduction, CdmOptions};
use bkstack::coeffring::{CoeffRing, RingSpec};
use bkstack::quotient::{functor_t, g_action, GroupElement, GroupElementRepr, XPoint, XPointRepr};
use bkstack::straighten::{assemble_f, default_straighten_budget, full_base_change};
use bkstack::tametype::{all_b_vectors, SerreWeight, Subset, TameType};
use bkstack::Error;

mod suites;

#[derive(Parser, Debug)]
#[command(name = "bkstack", version, about = "Rank-2 Breuil-Kisin modules with tame descent data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduce a module to CDM normal form.
    Reduce {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Working precision N_u in powers of u; the module is truncated to it.
        #[arg(long)]
        prec: Option<u64>,
        /// Step budget for the reduction.
        #[arg(long = "max-sweeps")]
        max_sweeps: Option<usize>,
    },
    /// Assemble the base change for a group element acting on an X-point.
    Straighten {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Working precision N_u in powers of u.
        #[arg(long)]
        prec: Option<u64>,
    },
    /// Obstructions, admissible shapes and the attached weight of a type.
    CheckType {
        #[arg(long)]
        p: u32,
        #[arg(long)]
        f: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        z: Option<Vec<u32>>,
        /// b-vector of a weight; the type is then the one attached to it.
        #[arg(long, value_delimiter = ',')]
        weight: Option<Vec<u32>>,
        /// Indices of the eta-form set for the generalized obstructions.
        #[arg(long = "T", value_delimiter = ',')]
        t: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the eligibility of every weight for (p, f).
    EnumerateWeights {
        #[arg(long)]
        p: u32,
        #[arg(long)]
        f: usize,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suites.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 3)]
        p: u32,
        #[arg(long)]
        f: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        z: Option<Vec<u32>>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Working precision N_u in powers of u.
        #[arg(long)]
        prec: Option<u64>,
        #[arg(long = "max-sweeps")]
        max_sweeps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Coeffring,
    Cdm,
    Straighten,
    Quotient,
    All,
}

/// Exit status of a command.
#[derive(Debug)]
enum Failure {
    Input(String),
    Budget(String),
    Property(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::PrecisionExhausted(_) => Failure::Budget(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Property(_) => 1,
            Failure::Input(_) => 2,
            Failure::Budget(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(m) => eprintln!("input error: {m}"),
                Failure::Budget(m) => eprintln!("budget exhausted: {m}"),
                Failure::Property(m) => eprintln!("property failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => {
            // a closed pipe downstream is not an error
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn emit_json(v: &Value, out: &Option<PathBuf>) -> Result<(), Failure> {
    emit(&serde_json::to_string_pretty(v).expect("reports serialize"), out)
}

/// The reproducibility header shared by all reports.
pub fn ring_header(ring: &CoeffRing, tau: &TameType, nv: usize) -> Value {
    json!({
        "p": ring.p(),
        "m": ring.m(),
        "k": ring.k(),
        "field_polynomial": ring.field().modulus_string(),
        "N_v": nv,
        "N_u": nv as u64 * tau.e(),
    })
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Reduce { input, out, prec, max_sweeps } => cmd_reduce(&input, &out, prec, max_sweeps),
        Command::Straighten { input, out, prec } => cmd_straighten(&input, &out, prec),
        Command::CheckType { p, f, z, weight, t, out } => cmd_check_type(p, f, z, weight, t, &out),
        Command::EnumerateWeights { p, f, format, out } => cmd_enumerate_weights(p, f, format, &out),
        Command::Verify { suite, p, f, z, samples, seed, prec, max_sweeps, out } => {
            let z = resolve_z(p, f, z)?;
            let tau = TameType::new(p, z)?;
            let nv = match prec {
                Some(nu) => nv_from_nu(&tau, nu)?,
                None => default_nv(&tau),
            };
            if max_sweeps == Some(0) {
                return Err(Failure::Input("budget must be positive".into()));
            }
            let cfg = suites::Config { tau, samples, seed, nv, max_sweeps };
            let report = suites::run(suite, &cfg)?;
            emit_json(&report.json, &out)?;
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Property(format!("{} failing checks", report.failures)))
            }
        }
    }
}

/// Precision in `v` covering `nu` powers of `u = v^{1/e}`.
fn nv_from_nu(tau: &TameType, nu: u64) -> Result<usize, Failure> {
    let nv = nu.div_ceil(tau.e()) as usize;
    if nv < 2 {
        return Err(Failure::Input(format!("precision N_u = {nu} is below 2e = {}", 2 * tau.e())));
    }
    Ok(nv)
}

fn resolve_z(p: u32, f: Option<usize>, z: Option<Vec<u32>>) -> Result<Vec<u32>, Failure> {
    let z = match (f, z) {
        (_, Some(z)) => z,
        (Some(f), None) => (0..f).map(|i| if i % 2 == 0 { 1 } else { p - 1 }).collect(),
        (None, None) => vec![1, p - 1],
    };
    if let Some(f) = f {
        if f != z.len() {
            return Err(Failure::Input(format!("--f {f} but z has {} digits", z.len())));
        }
    }
    Ok(z)
}

fn cmd_reduce(input: &PathBuf, out: &Option<PathBuf>, prec: Option<u64>, max_sweeps: Option<usize>) -> Result<(), Failure> {
    let repr: BKModuleRepr = read_json(input)?;
    let mut m = BKModule::from_repr(&repr)?;
    if let Some(nu) = prec {
        let nv = nv_from_nu(m.tau(), nu)?;
        if nv > m.nv() {
            return Err(Failure::Input(format!("input is only known to v^{}, below the requested v^{nv}", m.nv())));
        }
        m = m.truncate(nv);
    }
    let budget = max_sweeps.unwrap_or_else(|| default_cdm_budget(&m));
    if budget == 0 {
        return Err(Failure::Input("budget must be positive".into()));
    }
    let bad = is_bad_genre(&m)?;
    let red = cdm_reduce(&m, &CdmOptions { forms: None, max_steps: Some(budget) })?;
    let verified = verify_reduction(&m, &red);
    let report = json!({
        "ring": ring_header(m.ring(), m.tau(), m.nv()),
        "tau": m.tau(),
        "budget": budget,
        "bad_genre": bad,
        "steps": red.steps,
        "trace": red.trace,
        "params": red.params.to_repr(m.ring()),
        "limit": red.limit.iter().map(shaped_repr).collect::<Vec<_>>(),
        "base_change": red.base_change.iter().map(shaped_repr).collect::<Vec<_>>(),
        "reduced": red.reduced.to_repr(),
        "verified": verified,
    });
    emit_json(&report, out)?;
    if verified {
        Ok(())
    } else {
        Err(Failure::Property("reduced matrices differ from the CDM matrices of the parameters".into()))
    }
}

fn shaped_repr(s: &Shaped) -> Value {
    json!({
        "gamma": s.gamma(),
        "s": s.s().each_ref().map(|x| x.to_repr()),
    })
}

#[derive(serde::Deserialize)]
struct Action {
    tau: TameType,
    ring: Option<RingSpec>,
    g: GroupElementRepr,
    x: XPointRepr,
}

fn cmd_straighten(input: &PathBuf, out: &Option<PathBuf>, prec: Option<u64>) -> Result<(), Failure> {
    let action: Action = read_json(input)?;
    let tau = action.tau;
    let ring = action.ring.unwrap_or(RingSpec { p: tau.p(), m: 1, k: 1 }).build()?;
    if ring.p() != tau.p() {
        return Err(Failure::Input("ring and type have different p".into()));
    }
    let g = GroupElement::from_repr(&ring, &action.g)?;
    let x = XPoint::from_repr(&ring, &action.x)?;
    if g.f() != tau.f() || x.f() != tau.f() {
        return Err(Failure::Input("group element, point and type must share f".into()));
    }
    let nv = match prec {
        Some(nu) => nv_from_nu(&tau, nu)?,
        None => default_nv(&tau),
    };
    let budget = default_straighten_budget(tau.f(), nv);
    let j = assemble_f(&g, &x, &tau, nv)?;
    let tx = functor_t(&x, &tau, nv)?;
    let gx = g_action(&g, &x)?;
    let tgx = functor_t(&gx, &tau, nv)?;
    let identity = tx.apply_base_change(&full_base_change(&j, &tau)?)?.eq_at(&tgx);
    let report = json!({
        "ring": ring_header(&ring, &tau, nv),
        "tau": tau,
        "budget": budget,
        "J": j.iter().map(|m| m.0.each_ref().map(|s| s.to_repr())).collect::<Vec<_>>(),
        "g_dot_x": gx.to_repr(),
        "identity_holds": identity,
    });
    emit_json(&report, out)?;
    if identity {
        Ok(())
    } else {
        Err(Failure::Property("assembled base change does not intertwine T(x) and T(g.x)".into()))
    }
}

fn cmd_check_type(
    p: u32,
    f: Option<usize>,
    z: Option<Vec<u32>>,
    weight: Option<Vec<u32>>,
    t: Option<Vec<usize>>,
    out: &Option<PathBuf>,
) -> Result<(), Failure> {
    let tau = match (z, weight) {
        (Some(z), None) => TameType::new(p, resolve_z(p, f, Some(z))?)?,
        (None, Some(b)) => SerreWeight::new(p, vec![0; b.len()], b, 0)?.tau()?,
        _ => return Err(Failure::Input("give exactly one of --z and --weight".into())),
    };
    let f = tau.f();
    let shape_data = |j: &Subset| {
        json!({
            "contains": tau.p_tau_contains(j),
            "weight": tau.weight_from_shape(j).ok(),
            "max_refined_shape": tau.max_refined_shape(j),
        })
    };
    let weight = tau.weight_from_shape(&Subset::full(f))?;
    let mut report = json!({
        "tau": tau,
        "gamma": tau.gamma(),
        "e": tau.e(),
        "eta_equals_eta_prime": tau.eta_equals_eta_prime(),
        "first_obstruction": tau.first_obstruction(None),
        "second_obstruction": tau.second_obstruction(None),
        "P_tau": {"full": shape_data(&Subset::full(f)), "empty": shape_data(&Subset::empty(f))},
        "weight": weight,
        "eligible": weight.is_eligible(),
        "diagnosis": weight.eligibility().err().map(|r| r.to_string()),
    });
    if let Some(t) = t {
        let t = Subset::from_indices(f, &t)?;
        report["T"] = json!({
            "set": t,
            "tilde_z": tau.tilde_z(&t),
            "first_obstruction": tau.first_obstruction(Some(&t)),
            "second_obstruction": tau.second_obstruction(Some(&t)),
        });
    }
    emit_json(&report, out)
}

fn cmd_enumerate_weights(p: u32, f: usize, format: Format, out: &Option<PathBuf>) -> Result<(), Failure> {
    if p > 13 || f > 6 || f == 0 {
        return Err(Error::BoundsExceeded(format!("p = {p}, f = {f}; limits are p <= 13, 1 <= f <= 6")).into());
    }
    let mut rows = Vec::new();
    for b in all_b_vectors(p, f) {
        let w = SerreWeight::new(p, vec![0; f], b.clone(), 0)?;
        if w.is_steinberg() {
            continue;
        }
        rows.push((b, w.eligibility().err()));
    }
    let eligible = rows.iter().filter(|(_, d)| d.is_none()).count();
    let text = match format {
        Format::Csv => {
            let mut s = String::from("b,eligible,diagnosis\n");
            for (b, d) in &rows {
                let b: Vec<String> = b.iter().map(u32::to_string).collect();
                let diag = d.map(|r| r.to_string()).unwrap_or_default();
                s.push_str(&format!("\"{}\",{},\"{}\"\n", b.join(","), d.is_none(), diag));
            }
            s.push_str(&format!("# eligible {eligible} of {} non-Steinberg", rows.len()));
            s
        }
        Format::Json => serde_json::to_string_pretty(&json!({
            "p": p,
            "f": f,
            "rows": rows.iter().map(|(b, d)| json!({
                "b": b,
                "eligible": d.is_none(),
                "diagnosis": d.map(|r| r.to_string()),
            })).collect::<Vec<_>>(),
            "eligible": eligible,
            "non_steinberg": rows.len(),
        }))
        .expect("reports serialize"),
    };
    emit(&text, out)
}
