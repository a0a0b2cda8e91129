//! `isomono` command line: closed-form and numeric monodromy, the t-flow,
//! Toda scans and the inverse map. JSON in and out, exit codes
//! 0 ok, 2 input, 3 domain, 4 tolerance.

mod plot;

use clap::{Parser, Subcommand, ValueEnum};
use isomono::closed::{monodromy_data, BoundaryDatum, MonodromyData};
use isomono::flow::{boundary_to_hat, picard_flow, Coordinates, FlowOptions};
use isomono::inverse::{inverse_monodromy, InverseOptions};
use isomono::io::mat_rows;
use isomono::matrix::{c, eye, max_abs, CMat, C64};
use isomono::ode::{numeric, richardson_estimate, EndData, LinearSystemSpec, NumericOptions};
use isomono::tt::{axis, toda_scan, ScanRecord, StokesSource, TabulatedPoint};
use isomono::{Error, ErrorClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const FORMAT: u32 = 1;

#[derive(Parser)]
#[command(name = "isomono", version, about = "Monodromy data of linear systems with two second-order poles")]
struct Cli {
    /// seed for randomized subcommands
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monodromy data of a boundary datum (A_hat0, G0) from the closed formulas
    ClosedForm {
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        direction: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Stokes, monodromy and connection matrices by integrating the ODE
    Numeric {
        input: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        direction: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        anchor_radius: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Isomonodromic flow from a boundary datum to the given |t|
    Flow {
        input: PathBuf,
        /// comma-separated moduli of t
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        t_values: Vec<f64>,
        /// argument of t
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t_arg: f64,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Strictly-log-confined scan of tt*-Toda data over a (gamma, delta) grid
    TodaScan {
        /// "a:b:step" for both axes, or "a:b:step,c:d:step" for gamma and delta
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, value_enum, default_value_t = Mode::Synthetic)]
        mode: Mode,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// JSON array of {gamma, delta, S1, S2}
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// CSV output (stdout when absent)
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// SVG scatter of the verdicts
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Boundary datum from monodromy data (closed-form output is accepted)
    InverseMonodromy {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// A random shrinking boundary datum, keyed by --seed
    RandomDatum {
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// bound on the entries of A_hat0
        #[arg(long, default_value_t = 0.3)]
        scale: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Synthetic,
    Tabulated,
}

/// Failure with the exit code it maps to.
struct Fail {
    code: u8,
    msg: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Input => 2,
            ErrorClass::Domain => 3,
            ErrorClass::Tolerance => 4,
        };
        Fail { code, msg: e.to_string() }
    }
}

fn input_err(msg: impl Into<String>) -> Fail {
    Fail { code: 2, msg: msg.into() }
}

type Res<T> = std::result::Result<T, Fail>;

fn read_json(path: &Path) -> Res<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    match v.get("format") {
        None => Ok(v),
        Some(f) if f.as_u64() == Some(FORMAT as u64) => Ok(v),
        Some(f) => Err(input_err(format!("unsupported format {f}"))),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value, what: &str) -> Res<T> {
    serde_json::from_value(v).map_err(|e| input_err(format!("malformed {what}: {e}")))
}

fn write_out(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| input_err(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json(out: Option<&Path>, v: &Value) -> Res<()> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    write_out(out, &s)
}

fn manifest(sub: &str, inputs: &[&Path], out: Option<&Path>, tol: Value, seed: Option<u64>) -> Value {
    json!({
        "subcommand": sub,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": out.map(|p| vec![p.display().to_string()]).unwrap_or_default(),
        "tolerances": tol,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn rows(m: &CMat) -> Value {
    json!(mat_rows(m))
}

#[derive(Deserialize)]
struct DatumInput {
    #[serde(with = "isomono::io::cmat")]
    a_hat0: CMat,
    #[serde(with = "isomono::io::cmat")]
    g0: CMat,
    #[serde(default)]
    direction: Option<f64>,
}

fn datum_json(bd: &BoundaryDatum) -> Value {
    json!({ "a_hat0": rows(&bd.a_hat0), "g0": rows(&bd.g0) })
}

fn is_diagonal(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == C64::from(0.0)))
}

fn cmd_closed_form(input: &Path, direction: Option<f64>, out: Option<&Path>) -> Res<()> {
    let di: DatumInput = parse(read_json(input)?, "boundary datum")?;
    let d = direction.or(di.direction).unwrap_or(0.0);
    let bd = BoundaryDatum::new(di.a_hat0, di.g0)?;
    if let Err(e) = bd.check() {
        let levels = |l: &isomono::matrix::SpectrumLadder| l.resonance_gap();
        let (gh, kh, _) = levels(&bd.hat);
        let (gt, kt, _) = levels(&bd.til);
        let (gap, level, end) = if gh <= gt { (gh, kh, "A_hat0") } else { (gt, kt, "A_til0") };
        return Err(Fail {
            code: 3,
            msg: format!("{e} (closest integer gap {gap:.3e} at level {level} of {end})"),
        });
    }
    let md = monodromy_data(&bd, d)?;
    let mut formulas = vec!["Stokes pairs from the unit LDU factorization of nu"];
    for (name, m) in [("A_hat0", &bd.a_hat0), ("A_til0", &bd.a_til0)] {
        if is_diagonal(m) {
            formulas.push(if name == "A_hat0" {
                "A_hat0 diagonal: identity rigid factors"
            } else {
                "A_til0 diagonal: identity rigid factors"
            });
        } else {
            formulas.push(if name == "A_hat0" {
                "A_hat0: gamma-product rigid factors and minor-normalized diagonalizer"
            } else {
                "A_til0: gamma-product rigid factors and minor-normalized diagonalizer"
            });
        }
    }
    let lu = md.lu_residual();
    let sim = md.similarity_residual()?;
    write_json(
        out,
        &json!({
            "format": FORMAT,
            "n": md.n(),
            "monodromy": md,
            "checks": { "lu_residual": lu, "similarity_residual": sim },
            "provenance": {
                "formulas": formulas,
                "branch": "principal logarithms; powers of 2 and of t on the branch of the direction",
                "chamber": md.chamber.description,
            },
            "manifest": manifest("closed-form", &[input], out, json!({}), None),
        }),
    )
}

fn end_json(e: &EndData) -> Value {
    json!({
        "s_plus": rows(&e.s_plus),
        "s_minus": rows(&e.s_minus),
        "nu": rows(&e.nu),
        "r_match": e.r_match,
        "r_anchor": e.r_anchor,
        "anchor_err": e.anchor_err,
        "tri_residual": e.tri_residual,
    })
}

fn cmd_numeric(input: &Path, direction: f64, tol: f64, anchor: Option<f64>, out: Option<&Path>) -> Res<()> {
    if !(tol > 0.0) {
        return Err(input_err("--tol must be positive"));
    }
    let spec: LinearSystemSpec = parse(read_json(input)?, "linear system")?;
    let opt = NumericOptions { tol, anchor_radius: anchor };
    let nm = numeric(&spec, direction, opt)?;
    let est = richardson_estimate(&spec, direction, opt)?;
    write_json(
        out,
        &json!({
            "format": FORMAT,
            "n": spec.n(),
            "direction": nm.direction,
            "infinity": end_json(&nm.inf),
            "zero": nm.zero.as_ref().map(end_json),
            "connection": rows(&nm.connection),
            "richardson_estimate": est,
            "manifest": manifest("numeric", &[input], out, json!({ "tol": tol, "anchor_radius": anchor }), None),
        }),
    )
}

#[derive(Deserialize)]
struct FlowInput {
    #[serde(default, with = "isomono::io::cmat_opt")]
    a_hat0: Option<CMat>,
    #[serde(default, with = "isomono::io::cmat_opt")]
    g0: Option<CMat>,
    /// (Â, Ĝ) given directly, for n ≥ 3
    #[serde(default, with = "isomono::io::cmat_opt")]
    a_hat: Option<CMat>,
    #[serde(default, with = "isomono::io::cmat_opt")]
    g_hat: Option<CMat>,
    coordinates: Coordinates,
}

/// Largest `|t|/2^k` (k ≤ 20) where the flow converges, for the message.
fn suggest_eps(a: &CMat, g: &CMat, co: &Coordinates, t: C64, opt: FlowOptions) -> Option<f64> {
    (1..=20)
        .map(|k| t / 2f64.powi(k))
        .find(|&s| picard_flow(a, g, co, s, opt).is_ok())
        .map(|s| s.norm())
}

fn cmd_flow(input: &Path, t_values: &[f64], t_arg: f64, tol: f64, out: Option<&Path>) -> Res<()> {
    let fi: FlowInput = parse(read_json(input)?, "flow input")?;
    let co = Coordinates::new(fi.coordinates.u, fi.coordinates.v_shape, fi.coordinates.w0, fi.coordinates.direction)?;
    let (a, g) = match (fi.a_hat, fi.g_hat, fi.a_hat0, fi.g0) {
        (Some(a), Some(g), _, _) => (a, g),
        (None, None, Some(a0), Some(g0)) => {
            let bd = BoundaryDatum::new(a0, g0)?;
            bd.check()?;
            boundary_to_hat(&bd, &co)?
        }
        _ => return Err(input_err("flow input needs a_hat0 and g0, or a_hat and g_hat")),
    };
    let opt = FlowOptions { tol, ..FlowOptions::default() };
    let mut ts: Vec<f64> = t_values.to_vec();
    if ts.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(input_err("t values must be positive moduli"));
    }
    ts.sort_by(|x, y| y.total_cmp(x));
    let mut snaps = Vec::new();
    for r in ts {
        let t = C64::from_polar(r, t_arg);
        let st = match picard_flow(&a, &g, &co, t, opt) {
            Ok(st) => st,
            Err(e @ (Error::DivergentIteration(_) | Error::QuadratureFailure(_))) => {
                let hint = match suggest_eps(&a, &g, &co, t, opt) {
                    Some(eps) => format!("; converges for |t| <= {eps:.3e}"),
                    None => String::new(),
                };
                return Err(Fail { code: 3, msg: format!("{e} at |t| = {r}{hint}") });
            }
            Err(e) => return Err(e.into()),
        };
        snaps.push(json!({
            "t": st.t,
            "a": rows(&st.a),
            "g": rows(&st.g),
            "drift": st.drift,
            "sigma1": st.sigma1,
            "iterations": st.iteration,
            "ratio": st.ratio,
            "b_consistency": st.b_consistency,
        }));
    }
    write_json(
        out,
        &json!({
            "format": FORMAT,
            "a_hat": rows(&a),
            "g_hat": rows(&g),
            "snapshots": snaps,
            "manifest": manifest("flow", &[input], out, json!({ "tol": tol }), None),
        }),
    )
}

/// `a:b:step` or `a:b:step,c:d:step`.
fn parse_grid(s: &str) -> Res<(Vec<f64>, Vec<f64>)> {
    let one = |p: &str| -> Res<Vec<f64>> {
        let f: Vec<f64> = p
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|_| input_err(format!("bad grid component {x:?}"))))
            .collect::<Res<_>>()?;
        if f.len() != 3 {
            return Err(input_err(format!("grid axis {p:?} is not a:b:step")));
        }
        Ok(axis(f[0], f[1], f[2])?)
    };
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [g] => {
            let a = one(g)?;
            Ok((a.clone(), a))
        }
        [g, d] => Ok((one(g)?, one(d)?)),
        _ => Err(input_err("grid has more than two axes")),
    }
}

fn csv_text(recs: &[ScanRecord]) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Fail { code: 2, msg: e.to_string() };
    w.write_record(["gamma", "delta", "verdict", "failing_levels", "cause"]).map_err(io)?;
    for r in recs {
        let levels: Vec<String> = r.failing_levels.iter().map(|k| k.to_string()).collect();
        let mut causes: Vec<String> = r.causes.iter().map(|c| c.to_string()).collect();
        if let Some(e) = &r.error {
            causes.push(format!("error: {e}"));
        }
        w.write_record([
            r.gamma.to_string(),
            r.delta.to_string(),
            r.verdict.to_string(),
            levels.join(";"),
            causes.join(";"),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Fail { code: 2, msg: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv of ascii fields"))
}

fn cmd_toda_scan(
    grid: Option<&str>,
    mode: Mode,
    order: usize,
    fixture: Option<&Path>,
    out: Option<&Path>,
    plot_path: Option<&Path>,
) -> Res<()> {
    let opt = Default::default();
    let recs = match mode {
        Mode::Synthetic => {
            let (g, d) = parse_grid(grid.ok_or_else(|| input_err("--grid is required in synthetic mode"))?)?;
            toda_scan(&g, &d, &StokesSource::Synthetic { order }, opt)?
        }
        Mode::Tabulated => {
            let path = fixture.ok_or_else(|| Fail::from(Error::TabulatedFileMissing("--fixture not given".into())))?;
            if !path.exists() {
                return Err(Error::TabulatedFileMissing(path.display().to_string()).into());
            }
            if order != 4 {
                return Err(Error::UnsupportedRank(order).into());
            }
            let tab: Vec<TabulatedPoint> = parse(read_json(path)?, "Stokes table")?;
            let mut recs = toda_scan(&[], &[], &StokesSource::Tabulated(tab), opt)?;
            if let Some(g) = grid {
                let (gs, ds) = parse_grid(g)?;
                let inside = |x: f64, ax: &[f64]| ax.iter().any(|a| (a - x).abs() < 1e-9);
                recs.retain(|r| inside(r.gamma, &gs) && inside(r.delta, &ds));
            }
            recs
        }
    };
    write_out(out, &csv_text(&recs)?)?;
    if let Some(p) = plot_path {
        std::fs::write(p, plot::scatter_svg(&recs)).map_err(|e| input_err(format!("{}: {e}", p.display())))?;
    }
    let flagged = recs.iter().filter(|r| !r.verdict).count();
    eprintln!("{} points, {flagged} not strictly log-confined", recs.len());
    Ok(())
}

fn cmd_inverse(input: &Path, out: Option<&Path>) -> Res<()> {
    let mut v = read_json(input)?;
    if let Some(m) = v.get_mut("monodromy") {
        v = m.take();
    }
    let md: MonodromyData = parse(v, "monodromy data")?;
    let opt = InverseOptions::default();
    let inv = inverse_monodromy(&md, opt)?;
    write_json(
        out,
        &json!({
            "format": FORMAT,
            "a_hat0": rows(&inv.datum.a_hat0),
            "g0": rows(&inv.datum.g0),
            "direction": md.chamber.direction,
            "residual": inv.residual,
            "iterations": inv.iterations,
            "manifest": manifest("inverse-monodromy", &[input], out, json!({ "stall": opt.stall }), None),
        }),
    )
}

fn cmd_random(n: usize, scale: f64, seed: u64, out: Option<&Path>) -> Res<()> {
    if n < 1 || !(scale > 0.0) {
        return Err(input_err("need n >= 1 and a positive scale"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let a = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)));
        let g = eye(n) + CMat::from_fn(n, n, |_, _| c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)));
        if let Ok(bd) = BoundaryDatum::new(a, g) {
            if bd.check().is_ok() && max_abs(&bd.a_til0).is_finite() {
                let mut v = datum_json(&bd);
                v["format"] = json!(FORMAT);
                v["manifest"] = manifest("random-datum", &[], out, json!({ "scale": scale }), Some(seed));
                return write_json(out, &v);
            }
        }
    }
    Err(Fail { code: 3, msg: "no shrinking datum found at this scale".into() })
}

fn run(cli: Cli) -> Res<()> {
    match &cli.cmd {
        Cmd::ClosedForm { input, direction, out } => cmd_closed_form(input, *direction, out.as_deref()),
        Cmd::Numeric {
            input,
            direction,
            tol,
            anchor_radius,
            out,
        } => cmd_numeric(input, *direction, *tol, *anchor_radius, out.as_deref()),
        Cmd::Flow {
            input,
            t_values,
            t_arg,
            tol,
            out,
        } => cmd_flow(input, t_values, *t_arg, *tol, out.as_deref()),
        Cmd::TodaScan {
            grid,
            mode,
            order,
            fixture,
            out,
            plot,
        } => cmd_toda_scan(grid.as_deref(), *mode, *order, fixture.as_deref(), out.as_deref(), plot.as_deref()),
        Cmd::InverseMonodromy { input, out } => cmd_inverse(input, out.as_deref()),
        Cmd::RandomDatum { n, scale, out } => cmd_random(*n, *scale, cli.seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("isomono: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
