//! Explicit Einstein–Weyl spaces, monopoles and selfdual 4-spaces.
//!
//! Default domains are part of each constructor's contract. They are chosen to
//! keep guards comfortably satisfied.

use std::collections::BTreeMap;
use std::fmt;

use crate::chart::Chart;
use crate::congruence::{monopole_residual, Congruence, MonopoleSolution};
use crate::error::{GeomError, Result};
use crate::expr::{Evaluator, Expr, Symbols, EPS_GUARD};
use crate::jones_tod::{lift, LiftedChart};
use crate::weyl::{ComplexStructureField, WeylStructure};

fn v(i: usize) -> Expr {
    Expr::var(i)
}
fn c(x: f64) -> Expr {
    Expr::num(x)
}

/// Metric from row-major entries given for the upper triangle only.
fn sym_metric(n: usize, upper: Vec<Expr>) -> Vec<Expr> {
    let mut m = vec![Expr::zero(); n * n];
    let mut it = upper.into_iter();
    for i in 0..n {
        for j in i..n {
            let e = it.next().expect("upper triangle");
            m[i * n + j] = e.clone();
            m[j * n + i] = e;
        }
    }
    m
}

/// Fail with a precondition error if `e` is not above EPS_GUARD on a sample.
fn require_positive(chart: &Chart, e: &Expr, what: &str) -> Result<()> {
    let mut probe = chart.clone();
    probe.guards.clear();
    let pts = probe.sample(64, 0x5eed).map_err(|err| GeomError::Precondition(format!("{}: {}", what, err)))?;
    for p in pts {
        let x = Evaluator::new(&p.coords, 0).real(e)?.value();
        if !(x > EPS_GUARD) {
            return Err(GeomError::Precondition(format!("{} fails at {:?} (value {:e})", what, p.coords, x)));
        }
    }
    Ok(())
}

/// Largest |f| over a deterministic sample of the chart domain (guards ignored,
/// so preconditions are diagnosed before guard failures).
fn sample_max(chart: &Chart, f: &Expr, count: usize) -> Result<f64> {
    let mut probe = chart.clone();
    probe.guards.clear();
    let mut m: f64 = 0.0;
    for p in probe.sample(count, 0xa11ce)? {
        m = m.max(Evaluator::new(&p.coords, 0).real(f)?.value().abs());
    }
    Ok(m)
}

/// Winding number of re + i·im around the boundary of the (x0, x1) rectangle of
/// `domain`, other coordinates at their midpoints. Errors if f is tiny on it.
fn winding_number(re: &Expr, im: &Expr, domain: &[(f64, f64)], what: &str) -> Result<i64> {
    const STEPS: usize = 400;
    let (x, y) = (domain[0], domain[1]);
    let corners = [(x.0, y.0), (x.1, y.0), (x.1, y.1), (x.0, y.1), (x.0, y.0)];
    let mut coords: Vec<f64> = domain.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for w in corners.windows(2) {
        for k in 0..STEPS {
            let t = k as f64 / STEPS as f64;
            coords[0] = w[0].0 + t * (w[1].0 - w[0].0);
            coords[1] = w[0].1 + t * (w[1].1 - w[0].1);
            let mut ev = Evaluator::new(&coords, 0);
            let (a, b) = (ev.real(re)?.value(), ev.real(im)?.value());
            if a.hypot(b) < EPS_GUARD {
                return Err(GeomError::Precondition(format!("{} vanishes at {:?}", what, &coords[..2])));
            }
            let ang = b.atan2(a);
            if let Some(p) = prev {
                let mut d = ang - p;
                d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
                total += d;
            }
            prev = Some(ang);
        }
    }
    let (a, b) = (corners[0].0, corners[0].1);
    coords[0] = a;
    coords[1] = b;
    let mut ev = Evaluator::new(&coords, 0);
    let ang = ev.real(im)?.value().atan2(ev.real(re)?.value());
    let mut d = ang - prev.unwrap_or(ang);
    d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
    total += d;
    Ok((total / std::f64::consts::TAU).round() as i64)
}

fn stereographic(x: usize, y: usize) -> (Expr, Expr) {
    // ζ and 1 + |ζ|²
    let zeta = v(x) + Expr::i() * v(y);
    let s = c(1.0) + v(x).powi(2) + v(y).powi(2);
    (zeta, s)
}

// ---------------------------------------------------------------------------
// Einstein–Weyl spaces with geodesic symmetry

/// An Einstein–Weyl space together with a shear-free geodesic congruence and
/// its divergence and twist in the chart gauge.
#[derive(Clone, Debug)]
pub struct EwWithCongruence {
    pub ws: WeylStructure,
    pub chi: Congruence,
    pub tau: Expr,
    pub kappa: Expr,
}

/// Coordinates (X, Y, psi), ζ = X + iY. `h_text` may use zeta, X, Y.
pub fn geodesic_symmetry_ew(h_text: &str) -> Result<EwWithCongruence> {
    geodesic_symmetry_on(h_text, vec![(0.2, 0.8), (0.2, 0.8), (0.0, 1.0)])
}

pub fn geodesic_symmetry_on(h_text: &str, domain: Vec<(f64, f64)>) -> Result<EwWithCongruence> {
    let (zeta, s) = stereographic(0, 1);
    let mut syms = Symbols::new(&["X", "Y", "psi"]).with_alias("zeta", zeta.clone());
    let h = syms.define_text("H", h_text)?;
    if h.max_var().map_or(false, |m| m > 1) {
        return Err(GeomError::Invalid("H must be a function of ζ only".into()));
    }
    let q = c(1.0) / (zeta.clone() * h.clone());
    let bx = c(-2.0) * q.im() / s.clone();
    let by = c(-2.0) * q.re() / s.clone();
    let habs2 = h.abs2();
    let sig = c(4.0) / (s.powi(2) * habs2.clone());
    let metric = sym_metric(
        3,
        vec![
            sig.clone() + bx.clone() * bx.clone(),
            bx.clone() * by.clone(),
            bx.clone(),
            sig + by.clone() * by.clone(),
            by.clone(),
            c(1.0),
        ],
    );
    let mut chart = Chart::new("geodesic_symmetry", syms, domain, metric, GS_ORIENTATION)?;
    chart = chart.with_guard("|H|^2", habs2.clone()).with_guard("|zeta|^2", v(0).powi(2) + v(1).powi(2));
    require_positive(&chart, &habs2, "H nonvanishing")?;
    let zh = zeta.clone() * h.clone();
    if winding_number(&zh.re(), &zh.im(), &chart.domain, "ζH")? != 0 {
        return Err(GeomError::Precondition("ζH vanishes inside the domain".into()));
    }
    let tau = -h.im();
    let kappa = c(0.5) * h.re();
    let omega = vec![tau.clone() * bx, tau.clone() * by, tau.clone()];
    let ws = WeylStructure::new(chart, omega)?;
    let chi = Congruence::new(vec![c(0.0), c(0.0), c(1.0)]);
    Ok(EwWithCongruence { ws, chi, tau, kappa })
}

/// Orientation of (X, Y, psi) making the twist of ∂ψ equal to +¼(H + H̄).
pub const GS_ORIENTATION: f64 = 1.0;

/// The monopole w = c·κ with its potential, from *D^Bκ = ½F − d(τχ).
pub fn kappa_monopole(gs: &EwWithCongruence, scale: f64) -> MonopoleSolution {
    let w = c(scale) * gs.kappa.clone();
    let a = gs.ws.omega.iter().map(|o| c(-0.5 * scale) * o.clone()).collect();
    MonopoleSolution { w, a }
}

/// The 2-metric |H|⁻²(σ₁² + σ₂²) on the ζ-plane, whose scalar curvature is 2|H|².
pub fn gs_quotient_surface(h_text: &str) -> Result<Chart> {
    let (zeta, s) = stereographic(0, 1);
    let mut syms = Symbols::new(&["X", "Y"]).with_alias("zeta", zeta);
    let h = syms.define_text("H", h_text)?;
    let f = c(4.0) / (s.powi(2) * h.abs2());
    Chart::new("gs_quotient", syms, vec![(0.2, 0.8), (0.2, 0.8)], sym_metric(2, vec![f.clone(), c(0.0), f]), 1.0)
}

// ---------------------------------------------------------------------------
// Flat space and Gibbons–Hawking

/// Flat R³ in spherical coordinates (r, th, ph) with Cartesian aliases.
pub fn flat_spherical() -> Result<WeylStructure> {
    let syms = Symbols::new(&["r", "th", "ph"])
        .with_alias("x", v(0) * v(1).sin() * v(2).cos())
        .with_alias("y", v(0) * v(1).sin() * v(2).sin())
        .with_alias("z", v(0) * v(1).cos());
    let metric = sym_metric(3, vec![c(1.0), c(0.0), c(0.0), v(0).powi(2), c(0.0), v(0).powi(2) * v(1).sin().powi(2)]);
    let chart = Chart::new("flat_spherical", syms, vec![(0.5, 2.0), (0.3, 2.8), (0.0, 6.0)], metric, 1.0)?;
    Ok(WeylStructure::exact(chart))
}

/// Flat R³ in Cartesian coordinates (x, y, z).
pub fn flat_cartesian() -> Result<WeylStructure> {
    let syms = Symbols::new(&["x", "y", "z"]);
    let metric = sym_metric(3, vec![c(1.0), c(0.0), c(0.0), c(1.0), c(0.0), c(1.0)]);
    let chart = Chart::new("flat_cartesian", syms, vec![(-1.0, 1.0), (-1.0, 1.0), (0.5, 1.5)], metric, 1.0)?;
    Ok(WeylStructure::exact(chart))
}

/// The Dirac monopole of charge q on flat R³ (spherical chart): w = q/(2r),
/// A = (q/2) cos θ dφ for the positively oriented (r, θ, φ).
pub fn dirac_potential(q: f64) -> Vec<Expr> {
    vec![c(0.0), c(0.0), c(0.5 * q) * v(1).cos()]
}

/// W g_flat + W⁻¹(dt + A)²: the lift of flat space by (W, A), rescaled by W.
pub fn gibbons_hawking(w_text: &str, a_text: &[&str]) -> Result<LiftedChart> {
    let base = flat_spherical()?;
    let m = MonopoleSolution::from_text(&base.chart, w_text, a_text)?;
    require_positive(&base.chart, &m.w, "W > 0")?;
    for p in base.chart.sample(16, 0x9e11)? {
        let r = monopole_residual(&base, &m, &p)?;
        if r > 1e-6 {
            return Err(GeomError::Precondition(format!("(W, A) is not a monopole: residual {:e} at {:?}", r, p.coords)));
        }
    }
    let l = lift(&base, &m)?;
    l.rescaled("gibbons_hawking", &m.w)
}

// ---------------------------------------------------------------------------
// LeBrun–Ward geometries

/// ρ⁻¹(ρV_ρ)_ρ + V_ηη, the axially symmetric Laplacian.
fn axial_laplacian(vv: &Expr, rho: usize, eta: usize, eta_weight: &Expr) -> Expr {
    let vr = vv.diff(rho);
    (v(rho) * vr).diff(rho) / v(rho) + eta_weight.clone() * vv.diff(eta).diff(eta)
}

fn require_harmonic(chart: &Chart, lap: &Expr) -> Result<()> {
    let m = sample_max(chart, lap, 32)?;
    if m > 1e-8 {
        return Err(GeomError::Precondition(format!("V is not harmonic: Laplacian residual {:e}", m)));
    }
    Ok(())
}

/// Ward's construction from an axially symmetric harmonic V(ρ, η);
/// coordinates (rho, eta, psi). τ is the divergence of χ in the LW gauge.
pub fn ward_toda(v_text: &str) -> Result<EwWithCongruence> {
    let syms = Symbols::new(&["rho", "eta", "psi"]);
    let vv = crate::expr::parse(v_text, &syms)?;
    let (vr, ve) = (vv.diff(0), vv.diff(1));
    let q = ve.clone().powi(2) + vr.clone().powi(2);
    let r2 = v(0).powi(2);
    let conf = r2.clone() * q.clone();
    let metric = sym_metric(3, vec![conf.clone(), c(0.0), c(0.0), conf.clone(), c(0.0), r2.clone()]);
    let chart = Chart::new("ward_toda", syms, vec![(0.5, 1.5), (0.5, 1.5), (0.0, 1.0)], metric, 1.0)?
        .with_guard("V_eta^2", ve.clone().powi(2));
    require_harmonic(&chart, &axial_laplacian(&vv, 0, 1, &c(1.0)))?;
    require_positive(&chart, &ve.clone().powi(2), "V_eta nonvanishing")?;
    let k = c(2.0) * ve.clone() / conf.clone();
    let omega = vec![-(k.clone() * v(0) * ve.clone()), k * v(0) * vr.clone(), c(0.0)];
    let ws = WeylStructure::new(chart, omega)?;
    // χ = θ♯ with θ = ρV_ρ dη − ρV_η dρ, a unit 1-form
    let chi = Congruence::new(vec![-(ve.clone() / (v(0) * q.clone())), vr / (v(0) * q.clone()), c(0.0)]);
    let tau = ve / (r2 * q);
    Ok(EwWithCongruence { ws, chi, tau, kappa: c(0.0) })
}

/// The LeBrun–Ward geometry for a general Killing field with parameters (b, c);
/// coordinates (rho, zeta, psi).
pub fn killing_toda(v_text: &str, b: f64, cc: f64) -> Result<WeylStructure> {
    if b == 0.0 && cc == 0.0 {
        return Err(GeomError::Precondition("(b, c) must not both vanish".into()));
    }
    let syms = Symbols::new(&["rho", "zeta", "psi"]);
    let vv = crate::expr::parse(v_text, &syms)?;
    let (vr, vz) = (vv.diff(0), vv.diff(1));
    let s2 = b * b + cc * cc;
    let r2 = v(0).powi(2);
    let den = c(b * b) * r2.clone() + c(cc * cc);
    let f = c(s2) * r2.clone() / den.clone();
    let finv = den.clone() / (c(s2) * r2.clone());
    let g = (den.clone() * vz.clone().powi(2) + c(s2) * r2.clone() * vr.clone().powi(2)) / c(s2);
    // bracket ρV_ρ dζ − F⁻¹ρV_ζ dρ
    let br_rho = -(finv.clone() * v(0) * vz.clone());
    let br_zeta = v(0) * vr.clone();
    let coef = c(-b * cc) * (c(1.0) - r2.clone()) / den.clone();
    let beta = [coef.clone() * br_rho.clone(), coef * br_zeta.clone(), c(1.0)];
    let fib = r2.clone() * finv.clone();
    let metric = sym_metric(
        3,
        vec![
            g.clone() + fib.clone() * beta[0].clone() * beta[0].clone(),
            fib.clone() * beta[0].clone() * beta[1].clone(),
            fib.clone() * beta[0].clone(),
            g.clone() * f + fib.clone() * beta[1].clone() * beta[1].clone(),
            fib.clone() * beta[1].clone(),
            fib,
        ],
    );
    let chart = Chart::new("killing_toda", syms, vec![(0.5, 1.5), (0.5, 1.5), (0.0, 1.0)], metric, 1.0)?
        .with_guard("G", g.clone())
        .with_guard("b^2 rho^2 + c^2", den);
    require_harmonic(&chart, &axial_laplacian(&vv, 0, 1, &finv))?;
    require_positive(&chart, &g, "G > 0")?;
    let k = c(2.0 * b) * vz / (c(s2) * g);
    let omega = vec![k.clone() * c(b) * br_rho, k.clone() * c(b) * br_zeta, k * c(-cc)];
    WeylStructure::new(chart, omega)
}

/// Toda data e^u = 4(az² + bz + c)/(1 + a(x² + y²))² on (x, y, z).
#[derive(Clone, Debug)]
pub struct TodaCc {
    pub ws: WeylStructure,
    pub u: Expr,
    pub chi: Congruence,
    pub params: (f64, f64, f64),
}

pub fn toda_cc(a: f64, b: f64, cc: f64) -> Result<TodaCc> {
    let zr = if a >= 0.0 { (0.5, 1.5) } else { (0.2, 0.8) };
    toda_cc_on(a, b, cc, vec![(-0.5, 0.5), (-0.5, 0.5), zr])
}

pub fn toda_cc_on(a: f64, b: f64, cc: f64, domain: Vec<(f64, f64)>) -> Result<TodaCc> {
    let syms = Symbols::new(&["x", "y", "z"]);
    let p = c(a) * v(2).powi(2) + c(b) * v(2) + c(cc);
    let dp = c(2.0 * a) * v(2) + c(b);
    let rad = c(1.0) + c(a) * (v(0).powi(2) + v(1).powi(2));
    let eu = c(4.0) * p.clone() / rad.clone().powi(2);
    let u = (c(4.0) * p.clone()).ln() - c(2.0) * rad.clone().ln();
    let metric = sym_metric(3, vec![eu.clone(), c(0.0), c(0.0), eu, c(0.0), c(1.0)]);
    let chart = Chart::new("toda_cc", syms, domain, metric, 1.0)?
        .with_guard("az^2+bz+c", p.clone())
        .with_guard("1+a(x^2+y^2)", rad.clone());
    require_positive(&chart, &p, "az^2+bz+c > 0")?;
    require_positive(&chart, &rad, "1+a(x^2+y^2) > 0")?;
    let omega = vec![c(0.0), c(0.0), -(dp / p)];
    Ok(TodaCc { ws: WeylStructure::new(chart, omega)?, u, chi: Congruence::new(vec![c(0.0), c(0.0), c(1.0)]), params: (a, b, cc) })
}

/// u_xx + u_yy + (e^u)_zz at a point.
pub fn toda_residual(u: &Expr, coords: &[f64]) -> Result<f64> {
    let mut ev = Evaluator::new(coords, 2);
    let uj = ev.real(u)?;
    let eu = uj.exp();
    Ok((uj.d2(0, 0) + uj.d2(1, 1) + eu.d2(2, 2)).abs())
}

/// w = α(1 − ½zu_z) + ½βu_z on toda_cc(a, b, c), with the potential
/// A = 2(½αb + aβ)(x dy − y dx)/(1 + a(x² + y²)).
pub fn tod_monopole(t: &TodaCc, alpha: f64, beta: f64) -> Result<MonopoleSolution> {
    let (a, b, _) = t.params;
    let uz = t.u.diff(2);
    let w = c(alpha) * (c(1.0) - c(0.5) * v(2) * uz.clone()) + c(0.5 * beta) * uz;
    let k = 2.0 * (0.5 * alpha * b + a * beta);
    let rad = c(1.0) + c(a) * (v(0).powi(2) + v(1).powi(2));
    let aa = vec![c(-k) * v(1) / rad.clone(), c(k) * v(0) / rad, c(0.0)];
    let probe = t.ws.chart.clone().with_guard("w^2", w.clone().powi(2));
    require_positive(&probe, &w.clone().powi(2), "w nonvanishing")?;
    Ok(MonopoleSolution { w, a: aa })
}

/// Closedness of ∗D^B w for a general LeBrun–Ward u (no explicit potential):
/// max-norm of d(∗D^B w) at p.
pub fn monopole_closedness(ws: &WeylStructure, w: &Expr, p: &crate::chart::Point) -> Result<f64> {
    use crate::jet::Jet;
    let geo = crate::weyl::Geometry::at(ws, p, 2)?;
    let mut ev = Evaluator::new(&p.coords, 2);
    let wj = ev.real(w)?;
    let dw: Vec<Jet> = (0..3).map(|i| wj.partial(i) - geo.omega[i].truncate(1) * wj.truncate(1)).collect();
    let gi: Vec<Jet> = geo.ginv.iter().map(|x| x.truncate(1)).collect();
    let sq = geo.sqrt_det.truncate(1) * geo.orientation;
    let up: Vec<Jet> = (0..3).map(|k| (0..3).map(|l| gi[k * 3 + l] * dw[l]).sum()).collect();
    // ∗D^Bw = Σ_k up^k ι_{∂k} vol; d of it is the divergence density
    let div: f64 = (0..3).map(|k| (sq * up[k]).d1(k)).sum();
    Ok(div.abs() / geo.sqrt_det_value())
}

/// LeBrun–Ward geometries with a conformal-to-Toda structure, coordinates (X, Y, z).
pub fn ct_toda(h_text: &str) -> Result<EwWithCongruence> {
    let (zeta, s) = stereographic(0, 1);
    let mut syms = Symbols::new(&["X", "Y", "z"]).with_alias("zeta", zeta);
    let h = syms.define_text("h", h_text)?;
    let zh = v(2) + h.clone();
    let m2 = zh.abs2();
    let sig = c(4.0) * m2.clone() / s.powi(2);
    let metric = sym_metric(3, vec![sig.clone(), c(0.0), c(0.0), sig, c(0.0), c(1.0)]);
    let chart = Chart::new("ct_toda", syms, vec![(-0.5, 0.5), (-0.5, 0.5), (0.5, 1.5)], metric, 1.0)?
        .with_guard("|z+h|^2", m2.clone())
        .with_guard("|h|^2", h.abs2());
    require_positive(&chart, &h.abs2(), "h nonvanishing")?;
    require_positive(&chart, &m2, "(z+h)(z+h̄) > 0")?;
    let om_z = -(c(2.0) * (v(2) + h.re()) / m2.clone());
    let ws = WeylStructure::new(chart, vec![c(0.0), c(0.0), om_z.clone()])?;
    Ok(EwWithCongruence { ws, chi: Congruence::new(vec![c(0.0), c(0.0), c(1.0)]), tau: c(0.5) * om_z, kappa: c(0.0) })
}

// ---------------------------------------------------------------------------
// Selfdual Einstein metrics and the hyperkähler dilation family

/// The constant curvature LeBrun–Ward space (z² + c)g_{S²} + dz² on (z, th, ph).
pub fn lw_constant_curvature(cc: f64) -> Result<WeylStructure> {
    let syms = Symbols::new(&["z", "th", "ph"]);
    let q = v(0).powi(2) + c(cc);
    let metric = sym_metric(3, vec![c(1.0), c(0.0), c(0.0), q.clone(), c(0.0), q.clone() * v(1).sin().powi(2)]);
    let chart = Chart::new("lw_cc", syms, vec![(0.5, 1.5), (0.3, 2.8), (0.0, 6.0)], metric, 1.0)?.with_guard("z^2+c", q.clone());
    require_positive(&chart, &q, "z^2+c > 0")?;
    WeylStructure::new(chart, vec![c(-2.0) * v(0) / q, c(0.0), c(0.0)])
}

/// The selfdual Einstein metrics with scal −12ac/(a² + c²), as the lift of the
/// constant curvature LW space by w = (a + bz)/(z² + c), rescaled.
pub fn einstein_tod(a: f64, b: f64, cc: f64) -> Result<LiftedChart> {
    if a * a + cc * cc <= 0.0 {
        return Err(GeomError::Precondition("a^2 + c^2 must be positive".into()));
    }
    let base = lw_constant_curvature(cc)?;
    let q = v(0).powi(2) + c(cc);
    let w = (c(a) + c(b) * v(0)) / q;
    let m = MonopoleSolution { w: w.clone(), a: vec![c(0.0), c(0.0), c(-b) * v(1).cos()] };
    let lin = c(a) * v(0) - c(b * cc);
    let probe = base.chart.clone();
    require_positive(&probe, &(c(a) + c(b) * v(0)), "a+bz > 0")?;
    require_positive(&probe, &lin.clone().powi(2), "az-bc nonvanishing")?;
    let l = lift(&base, &m)?;
    let factor = c(a * a + cc * cc) / lin.clone().powi(2) * w;
    let mut out = l.rescaled("einstein_tod", &factor)?;
    out.chart4 = out.chart4.with_guard("a+bz", c(a) + c(b) * v(0)).with_guard("(az-bc)^2", lin.powi(2));
    Ok(out)
}

/// Hyperkähler metrics with a homothety: e^t(W g_B + W⁻¹(dt + A)²) over the
/// geodesic symmetry space with H = 1/h, W = 2κ = Re H.
pub fn dilation_gh(h_text: &str) -> Result<(LiftedChart, FamilySpec)> {
    let (zeta, _) = stereographic(0, 1);
    let mut syms = Symbols::new(&["X", "Y"]).with_alias("zeta", zeta);
    let h = syms.define_text("h", h_text)?;
    let probe = Chart::new("probe", syms, vec![(0.2, 0.8), (0.2, 0.8)], sym_metric(2, vec![c(1.0), c(0.0), c(1.0)]), 1.0)?;
    require_positive(&probe, &h.re(), "Re h > 0")?;
    let htext = format!("1/({})", h_text);
    let gs = geodesic_symmetry_ew(&htext)?;
    let m = kappa_monopole(&gs, 2.0);
    let l = lift(&gs.ws, &m)?;
    let factor = v(3).exp() * m.w.clone();
    let mut out = l.rescaled("dilation_gh", &factor)?;
    out.chart4.domain[3] = (-0.5, 0.5);
    let spec = FamilySpec::new("geodesic_symmetry", &[("H", &htext)])?;
    Ok((out, spec))
}

// ---------------------------------------------------------------------------
// Conformal vector fields on flat R⁴

#[derive(Clone, Debug)]
pub struct FlatR4 {
    /// Cartesian chart (x1..x4), orientation +1.
    pub cartesian: Chart,
    /// K = A x with A = a·1 + ½(b+c)J⁺ + ½(b−c)J⁻.
    pub k: Vec<Expr>,
    pub j_plus: ComplexStructureField,
    pub j_minus: ComplexStructureField,
    /// Parallel structures of the inverted flat metric r⁻⁴g, labelled by type.
    pub j_plus_tilde: ComplexStructureField,
    pub j_minus_tilde: ComplexStructureField,
    /// The chart (s, th, ph, psi) with r = e^s and g = dr² + ¼r²(…).
    pub euler: Chart,
    pub k_euler: Vec<Expr>,
    pub params: (f64, f64, f64),
}

impl FlatR4 {
    /// The stated (τ⁻, κ⁻) = ((b+c), a)|K|⁻¹ in the flat gauge at a Cartesian point.
    /// Measured, these belong to the congruence of `j_minus_tilde`; see
    /// `predicted_tilde` for the other one.
    pub fn predicted(&self, coords: &[f64]) -> Result<(f64, f64)> {
        let kn = self.k_norm(coords)?;
        let (a, b, cc) = self.params;
        Ok(((b + cc) / kn, a / kn))
    }

    /// The stated (τ̃⁻, κ̃⁻) = ((b−c), −a)|K|⁻¹; measured on `j_minus`.
    pub fn predicted_tilde(&self, coords: &[f64]) -> Result<(f64, f64)> {
        let kn = self.k_norm(coords)?;
        let (a, b, cc) = self.params;
        Ok(((b - cc) / kn, -a / kn))
    }

    pub fn k_norm(&self, coords: &[f64]) -> Result<f64> {
        let mut ev = Evaluator::new(coords, 0);
        let mut k2 = 0.0;
        for e in &self.k {
            k2 += ev.real(e)?.value().powi(2);
        }
        Ok(k2.sqrt())
    }
}

fn constant_j(pairs: &[(usize, usize, f64)]) -> [[f64; 4]; 4] {
    // J∂_i = s ∂_j, J∂_j = −s ∂_i; stored as m[k][i] = J^k_i
    let mut m = [[0.0; 4]; 4];
    for &(i, j, s) in pairs {
        m[j][i] = s;
        m[i][j] = -s;
    }
    m
}

/// Sign of Ω_J under the tilde star on flat R⁴ with orientation +1.
fn j_type(m: &[[f64; 4]; 4]) -> f64 {
    let g: Vec<f64> = (0..16).map(|a| if a / 4 == a % 4 { 1.0 } else { 0.0 }).collect();
    let om: Vec<f64> = (0..16).map(|a| m[a % 4][a / 4]).collect();
    let st = crate::forms::hodge_star_values(&om, 4, 2, &g, 1.0, crate::forms::StarConvention::Tilde).expect("flat metric");
    let dot: f64 = om.iter().zip(&st).map(|(x, y)| x * y).sum();
    dot.signum()
}

pub fn flat_r4_conformal(a: f64, b: f64, cc: f64) -> Result<FlatR4> {
    if a == 0.0 && b == 0.0 && cc == 0.0 {
        return Err(GeomError::Precondition("the conformal field vanishes identically".into()));
    }
    let j1 = constant_j(&[(0, 1, 1.0), (2, 3, 1.0)]);
    let j2 = constant_j(&[(0, 1, 1.0), (2, 3, -1.0)]);
    let (jp, jm) = if j_type(&j1) > 0.0 { (j1, j2) } else { (j2, j1) };
    let to_field = |m: &[[f64; 4]; 4]| ComplexStructureField { j: (0..16).map(|a| c(m[a / 4][a % 4])).collect() };
    let mut k = Vec::with_capacity(4);
    for kx in 0..4 {
        let mut e = c(0.0);
        for i in 0..4 {
            let coef = if kx == i { a } else { 0.0 } + 0.5 * (b + cc) * jp[kx][i] + 0.5 * (b - cc) * jm[kx][i];
            if coef != 0.0 {
                e = e + c(coef) * v(i);
            }
        }
        k.push(e);
    }
    // Parallel structures of r⁻⁴g: conjugate by the inversion differential,
    // which reverses orientation, so SD constants become ASD.
    let r2 = (0..4).map(|i| v(i) * v(i)).fold(c(0.0), |acc, t| acc + t);
    let refl = |k: usize, i: usize| c(if k == i { 1.0 } else { 0.0 }) - c(2.0) * v(k) * v(i) / r2.clone();
    let invert = |m: &[[f64; 4]; 4]| {
        let mut out = Vec::with_capacity(16);
        for k in 0..4 {
            for i in 0..4 {
                let mut e = c(0.0);
                for a in 0..4 {
                    for b in 0..4 {
                        if m[a][b] != 0.0 {
                            e = e + refl(k, a) * c(m[a][b]) * refl(b, i);
                        }
                    }
                }
                out.push(e);
            }
        }
        ComplexStructureField { j: out }
    };
    let (jt_plus, jt_minus) = (invert(&jm), invert(&jp));
    let id: Vec<Expr> = (0..16).map(|a| c(if a / 4 == a % 4 { 1.0 } else { 0.0 })).collect();
    let cart = Chart::new("flat_r4", Symbols::new(&["x1", "x2", "x3", "x4"]), vec![(0.2, 1.0); 4], id, 1.0)?;
    let e2 = (c(2.0) * v(0)).exp();
    let qt = c(0.25) * e2.clone();
    let euler_metric = sym_metric(
        4,
        vec![e2, c(0.0), c(0.0), c(0.0), qt.clone(), c(0.0), c(0.0), qt.clone(), qt.clone() * v(1).cos(), qt],
    );
    let euler = Chart::new("flat_r4_euler", Symbols::new(&["s", "th", "ph", "psi"]), vec![(-0.5, 0.5), (0.3, 2.8), (0.0, 6.0), (0.0, 6.0)], euler_metric, 1.0)?;
    let k_euler = vec![c(a), c(0.0), c(-(b + cc)), c(-(b - cc))];
    Ok(FlatR4 { cartesian: cart, k, j_plus: to_field(&jp), j_minus: to_field(&jm), j_plus_tilde: jt_plus, j_minus_tilde: jt_minus, euler, k_euler, params: (a, b, cc) })
}

// ---------------------------------------------------------------------------
// Family specifications

pub const FAMILY_TAGS: [&str; 10] = [
    "geodesic_symmetry",
    "gibbons_hawking",
    "ward_toda",
    "killing_toda",
    "toda_cc",
    "einstein_tod",
    "tod_monopole",
    "ct_toda",
    "dilation_gh",
    "flat_r4",
];

/// A family tag with key=value parameters (values are numbers or expression text).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FamilySpec {
    pub tag: String,
    pub params: BTreeMap<String, String>,
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag)?;
        for (k, v) in &self.params {
            write!(f, " {}={}", k, v)?;
        }
        Ok(())
    }
}

/// Parameters each family accepts, with defaults.
pub fn family_defaults(tag: &str) -> Option<&'static [(&'static str, &'static str)]> {
    Some(match tag {
        "geodesic_symmetry" => &[("H", "1")],
        "gibbons_hawking" => &[("W", "1+1/(2*r)"), ("A", "0,0,cos(th)/2")],
        "ward_toda" => &[("V", "eta^2-rho^2/2")],
        "killing_toda" => &[("V", "zeta"), ("b", "1"), ("c", "1")],
        "toda_cc" => &[("a", "1"), ("b", "0"), ("c", "1")],
        "einstein_tod" => &[("a", "1"), ("b", "0"), ("c", "1")],
        "tod_monopole" => &[("a", "1"), ("b", "0"), ("c", "1"), ("alpha", "1"), ("beta", "0")],
        "ct_toda" => &[("h", "1")],
        "dilation_gh" => &[("h", "1")],
        "flat_r4" => &[("a", "1"), ("b", "1"), ("c", "0")],
        _ => return None,
    })
}

impl FamilySpec {
    pub fn new(tag: &str, params: &[(&str, &str)]) -> Result<FamilySpec> {
        let defaults = family_defaults(tag).ok_or_else(|| GeomError::Invalid(format!("unknown family '{}'", tag)))?;
        let mut map: BTreeMap<String, String> = defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in params {
            if !map.contains_key(*k) {
                let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(GeomError::Invalid(format!("family {} has no parameter '{}' (known: {})", tag, k, known.join(", "))));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(FamilySpec { tag: tag.to_string(), params: map })
    }

    /// Parse "k=v" strings.
    pub fn from_pairs(tag: &str, pairs: &[String]) -> Result<FamilySpec> {
        let mut kv = Vec::new();
        for p in pairs {
            let (k, v) = p.split_once('=').ok_or_else(|| GeomError::Invalid(format!("parameter '{}' is not key=value", p)))?;
            kv.push((k.trim(), v));
        }
        FamilySpec::new(tag, &kv)
    }

    /// Plain-text block: first line the tag, then one key=value per line.
    pub fn parse_block(text: &str) -> Result<FamilySpec> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let tag = lines.next().ok_or_else(|| GeomError::Invalid("empty family block".into()))?;
        let pairs: Vec<String> = lines.map(String::from).collect();
        FamilySpec::from_pairs(tag, &pairs)
    }

    pub fn to_block(&self) -> String {
        let mut s = format!("{}\n", self.tag);
        for (k, v) in &self.params {
            s.push_str(&format!("{}={}\n", k, v));
        }
        s
    }

    pub fn text(&self, key: &str) -> &str {
        self.params.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        let t = self.text(key);
        let e = crate::expr::parse(t, &Symbols::default())?;
        let x = Evaluator::new(&[], 0).real(&e)?.value();
        if !x.is_finite() {
            return Err(GeomError::Invalid(format!("parameter {} = '{}' is not a finite number", key, t)));
        }
        Ok(x)
    }

    /// Comma-separated expression list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.text(key).split(',').map(|s| s.trim().to_string()).collect()
    }
}
