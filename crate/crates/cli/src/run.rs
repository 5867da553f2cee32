//! Subcommand drivers. Residuals are evaluated per point on the rayon pool,
//! collected in sample order and reduced sequentially.

use crate::registry::{self, Suite};
use crate::{parse_convention, Common, Failure};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use weylforge::congruence::congruence_decompose;
use weylforge::expr::Evaluator;
use weylforge::families::{family_defaults, FamilySpec, FAMILY_TAGS};
use weylforge::{GeomError, Point, StarConvention};

pub fn init_pool() -> Result<(), Failure> {
    let Ok(v) = std::env::var("WEYLFORGE_WORKERS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure::Usage(format!("WEYLFORGE_WORKERS='{}' is not a positive integer", v)))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))
}

#[derive(Serialize)]
struct FamilyOut {
    tag: String,
    params: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct CheckOut {
    name: String,
    points: usize,
    max_residual: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MeasurementOut {
    name: String,
    points: usize,
    mean: f64,
}

#[derive(Serialize)]
struct Report {
    family: FamilyOut,
    convention: String,
    seed: u64,
    points: usize,
    checks: Vec<CheckOut>,
    measurements: Vec<MeasurementOut>,
    pass: bool,
}

fn parse_tols(tols: &[String], tag: &str) -> Result<BTreeMap<String, f64>, Failure> {
    let names = registry::check_names(tag);
    let mut out = BTreeMap::new();
    for t in tols {
        let (k, v) = t.split_once('=').ok_or_else(|| Failure::Usage(format!("tolerance '{}' is not check=value", t)))?;
        let k = k.trim();
        if !names.contains(&k) {
            return Err(Failure::Usage(format!("family {} has no check '{}' (checks: {})", tag, k, names.join(", "))));
        }
        let x: f64 = v.trim().parse().ok().filter(|x: &f64| x.is_finite() && *x > 0.0).ok_or_else(|| Failure::Usage(format!("tolerance '{}' is not a positive number", v)))?;
        out.insert(k.to_string(), x);
    }
    Ok(out)
}

/// Worst residual over the points; NaN poisons the result.
fn max_residual(vals: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for &v in vals {
        if v.is_nan() {
            return f64::NAN;
        }
        m = m.max(v.abs());
    }
    m
}

fn evaluate(f: &registry::PointFn, pts: &[Point]) -> Result<Vec<f64>, GeomError> {
    pts.par_iter().map(|p| f(p)).collect()
}

fn run_suite(spec: &FamilySpec, conv: StarConvention, points: usize, seed: u64, tols: &BTreeMap<String, f64>) -> Result<Report, Failure> {
    if points == 0 {
        return Err(Failure::Usage("--points must be positive".into()));
    }
    let Suite { chart, checks, measurements } = registry::build(spec, conv)?;
    let pts = chart.sample(points, seed)?;
    let mut out = Vec::with_capacity(checks.len());
    for c in &checks {
        let vals = evaluate(&c.residual, &pts)?;
        let max = max_residual(&vals);
        let tol = tols.get(c.name).copied().unwrap_or(c.tolerance);
        out.push(CheckOut { name: c.name.to_string(), points: pts.len(), max_residual: max, tolerance: tol, pass: max < tol });
    }
    let mut meas = Vec::with_capacity(measurements.len());
    for m in &measurements {
        let vals = evaluate(&m.value, &pts)?;
        let mut sum = 0.0;
        for v in &vals {
            sum += v;
        }
        meas.push(MeasurementOut { name: m.name.to_string(), points: pts.len(), mean: sum / pts.len() as f64 });
    }
    let pass = out.iter().all(|c| c.pass);
    Ok(Report {
        family: FamilyOut { tag: spec.tag.clone(), params: spec.params.clone() },
        convention: conv_name(conv).into(),
        seed,
        points,
        checks: out,
        measurements: meas,
        pass,
    })
}

fn conv_name(c: StarConvention) -> &'static str {
    match c {
        StarConvention::Tilde => "tilde",
        StarConvention::Paper => "paper",
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn verify(a: &Common, report: Option<&Path>) -> Result<bool, Failure> {
    let start = Instant::now();
    let spec = FamilySpec::from_pairs(&a.family, &a.params)?;
    let conv = parse_convention(&a.convention)?;
    let tols = parse_tols(&a.tols, &spec.tag)?;
    let rep = run_suite(&spec, conv, a.points, a.seed, &tols)?;
    let mut text = serde_json::to_string_pretty(&rep).map_err(|e| Failure::Numerical(e.to_string()))?;
    text.push('\n');
    let mut w = sink(report)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    for c in rep.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: max residual {:e} (tolerance {:e})", c.name, c.max_residual, c.tolerance);
    }
    eprintln!("wall_time_ms={}", start.elapsed().as_millis());
    Ok(rep.pass)
}

struct Axis {
    key: String,
    values: Vec<f64>,
}

fn parse_axis(s: &str) -> Result<Axis, Failure> {
    let bad = || Failure::Usage(format!("grid '{}' is not key=start:stop:steps", s));
    let (k, r) = s.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = r.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let values = match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    };
    Ok(Axis { key: k.trim().to_string(), values })
}

/// Cartesian product, first axis outermost.
fn cells(axes: &[Axis]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for ax in axes {
        out = out.into_iter().flat_map(|c| ax.values.iter().map(move |&v| [c.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Shortest round-trip text; exponent form outside [1e-4, 1e16).
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{}", x)
    } else {
        format!("{:e}", x)
    }
}

pub fn scan(a: &Common, grid: &[String], out: Option<&Path>) -> Result<bool, Failure> {
    let start = Instant::now();
    let axes = grid.iter().map(|g| parse_axis(g)).collect::<Result<Vec<_>, _>>()?;
    let grid_cells = cells(&axes);
    if axes.is_empty() || grid_cells.is_empty() {
        return Err(Failure::Usage("empty grid: give at least one --grid key=start:stop:steps with steps > 0".into()));
    }
    let conv = parse_convention(&a.convention)?;
    // Validate parameter names and tolerances once, before any cell runs.
    let base = FamilySpec::from_pairs(&a.family, &a.params)?;
    for ax in &axes {
        if a.params.iter().any(|p| p.split_once('=').map(|(k, _)| k.trim()) == Some(ax.key.as_str())) {
            return Err(Failure::Usage(format!("parameter '{}' is given both as --param and --grid", ax.key)));
        }
        FamilySpec::new(&base.tag, &[(ax.key.as_str(), "0")])?;
    }
    let tols = parse_tols(&a.tols, &base.tag)?;
    let params: Vec<String> = base.params.keys().cloned().collect();
    let checks = registry::check_names(&base.tag);
    let meas = registry::measurement_names(&base.tag);

    let mut wtr = csv::Writer::from_writer(sink(out)?);
    let mut header: Vec<String> = params.clone();
    header.extend(checks.iter().map(|c| format!("{}_max", c)));
    header.extend(checks.iter().map(|c| format!("{}_pass", c)));
    header.extend(meas.iter().map(|m| m.to_string()));
    header.push("pass".into());
    header.push("error".into());
    wtr.write_record(&header).map_err(csv_err)?;

    let mut all_pass = true;
    let mut worst: Option<Failure> = None;
    for cell in &grid_cells {
        let mut spec = base.clone();
        for (ax, v) in axes.iter().zip(cell) {
            spec.params.insert(ax.key.clone(), num(*v));
        }
        let mut row: Vec<String> = params.iter().map(|k| spec.params[k].clone()).collect();
        match run_suite(&spec, conv, a.points, a.seed, &tols) {
            Ok(rep) => {
                row.extend(rep.checks.iter().map(|c| format!("{:e}", c.max_residual)));
                row.extend(rep.checks.iter().map(|c| c.pass.to_string()));
                row.extend(rep.measurements.iter().map(|m| num(m.mean)));
                row.push(rep.pass.to_string());
                row.push(String::new());
                all_pass &= rep.pass;
            }
            Err(f) => {
                let msg = match &f {
                    Failure::Usage(m) | Failure::Numerical(m) => m.clone(),
                };
                row.extend(std::iter::repeat(String::new()).take(2 * checks.len() + meas.len()));
                row.push("false".into());
                row.push(msg);
                all_pass = false;
                if !matches!(worst, Some(Failure::Numerical(_))) {
                    worst = Some(f);
                }
            }
        }
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush()?;
    eprintln!("wall_time_ms={}", start.elapsed().as_millis());
    match worst {
        Some(f) => Err(f),
        None => Ok(all_pass),
    }
}

fn csv_err(e: csv::Error) -> Failure {
    Failure::Usage(format!("csv: {}", e))
}

pub fn emit(family: &str, params: &[String], selector: &str, samples: usize, seed: u64, out: Option<&Path>) -> Result<bool, Failure> {
    if samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let (ws, chi) = registry::congruence(family, params, selector)?;
    let pts = ws.chart.sample(samples, seed)?;
    let rows: Vec<Vec<f64>> = pts
        .par_iter()
        .map(|p| {
            let inv = congruence_decompose(&ws, &chi, p)?;
            let mut ev = Evaluator::new(&p.coords, 0);
            let mut row = p.coords.clone();
            for e in &chi.chi {
                row.push(ev.real(e)?.value());
            }
            row.extend([inv.tau, inv.kappa, inv.shear_norm, inv.accel_norm]);
            Ok(row)
        })
        .collect::<Result<_, GeomError>>()?;
    let mut wtr = csv::Writer::from_writer(sink(out)?);
    wtr.write_record(["c1", "c2", "c3", "chi1", "chi2", "chi3", "tau", "kappa", "shear", "accel"]).map_err(csv_err)?;
    for r in rows {
        wtr.write_record(r.iter().map(|x| num(*x))).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(true)
}

pub fn list_families() -> Result<bool, Failure> {
    for tag in FAMILY_TAGS {
        let defaults = family_defaults(tag).unwrap_or(&[]);
        let params: Vec<String> = defaults.iter().map(|(k, v)| format!("{}={}", k, v)).collect();
        println!("{}", tag);
        println!("  params: {}", params.join("  "));
        println!("  checks: {}", registry::check_names(tag).join(", "));
        let m = registry::measurement_names(tag);
        if !m.is_empty() {
            println!("  measurements: {}", m.join(", "));
        }
    }
    Ok(true)
}
