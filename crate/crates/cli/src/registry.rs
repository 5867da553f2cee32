//! Per-family check suites. Each family builds its objects once and exposes
//! pointwise residuals over the sample points of one chart.

use std::sync::Arc;
use weylforge::chart::{Chart, Point};
use weylforge::congruence::*;
use weylforge::expr::Evaluator;
use weylforge::families::*;
use weylforge::jones_tod::*;
use weylforge::weyl::*;
use weylforge::{Expr, GeomError, Result, StarConvention};

pub type PointFn = Arc<dyn Fn(&Point) -> Result<f64> + Send + Sync>;

pub struct Check {
    pub name: &'static str,
    pub tolerance: f64,
    pub residual: PointFn,
}

/// A value reported alongside the checks, averaged over the sample points.
pub struct Measurement {
    pub name: &'static str,
    pub value: PointFn,
}

pub struct Suite {
    pub chart: Chart,
    pub checks: Vec<Check>,
    pub measurements: Vec<Measurement>,
}

/// Default tolerances: closed-form identities and residuals that need
/// third-order jets.
const CLOSED: f64 = 1e-7;
const JET3: f64 = 1e-6;

fn check(name: &'static str, tolerance: f64, f: impl Fn(&Point) -> Result<f64> + Send + Sync + 'static) -> Check {
    Check { name, tolerance, residual: Arc::new(f) }
}

fn value(e: &Expr, p: &Point) -> Result<f64> {
    Ok(Evaluator::new(&p.coords, 0).real(e)?.value())
}

/// Names of the checks a family registers, independent of parameters.
pub fn check_names(tag: &str) -> Vec<&'static str> {
    match tag {
        "geodesic_symmetry" => vec!["ew_residual", "tau_formula", "kappa_formula", "special_monopole", "kappa_monopole", "hypercr_residual", "hypercr_gt", "scalmon"],
        "gibbons_hawking" => vec!["monopole_residual", "w_minus", "ricci"],
        "ward_toda" => vec!["ew_residual", "special_monopole", "twist_free"],
        "killing_toda" => vec!["ew_residual"],
        "toda_cc" => vec!["toda_pde", "ew_residual", "special_monopole"],
        "tod_monopole" => vec!["monopole_residual", "w_minus", "complex_structure_dj"],
        "ct_toda" => vec!["ew_residual", "special_monopole"],
        "einstein_tod" => vec!["einstein", "w_minus", "scal_formula"],
        "dilation_gh" => vec!["ricci", "w_minus", "quotient_matches_base"],
        "flat_r4" => vec!["conformal_killing", "tilde_structure_prediction", "flat_structure_prediction", "shear_free_geodesic"],
        _ => vec![],
    }
}

pub fn measurement_names(tag: &str) -> Vec<&'static str> {
    match tag {
        "einstein_tod" => vec!["measured_scal"],
        "geodesic_symmetry" => vec!["measured_tau", "measured_kappa"],
        _ => vec![],
    }
}

/// W⁻ under the requested star convention. A lift is calibrated for the
/// tilde star; on 2-forms the other star at the opposite orientation agrees
/// with it, so the chart orientation is flipped for `Paper`.
fn w_minus_check(l: &LiftedChart, conv: StarConvention) -> Check {
    let mut chart = l.chart4.clone();
    if conv == StarConvention::Paper {
        let o = -chart.orientation;
        chart = chart.with_orientation(o);
    }
    let ws = WeylStructure::exact(chart);
    check("w_minus", JET3, move |p| weyl_part_residual(&ws, p, conv, false))
}

fn ew_check(ws: &WeylStructure) -> Check {
    let ws = ws.clone();
    check("ew_residual", JET3, move |p| ew_residual(&ws, p))
}

fn special_check(ws: &WeylStructure, chi: &Congruence) -> Check {
    let (ws, chi) = (ws.clone(), chi.clone());
    check("special_monopole", JET3, move |p| Ok(special_monopole_residuals(&ws, &chi, p)?.max()))
}

fn ricci_check(l: &LiftedChart) -> Check {
    let ws = l.structure();
    check("ricci", JET3, move |p| Ok(curvature_decompose(&ws, p)?.ricci_norm()))
}

pub fn build(spec: &FamilySpec, conv: StarConvention) -> Result<Suite> {
    let suite = match spec.tag.as_str() {
        "geodesic_symmetry" => {
            let h = spec.text("H").to_string();
            let g = geodesic_symmetry_ew(&h)?;
            let hexpr = g.ws.chart.parse(&h)?;
            let mut checks = vec![ew_check(&g.ws)];
            let (ws, chi, he) = (g.ws.clone(), g.chi.clone(), hexpr.clone());
            checks.push(check("tau_formula", CLOSED, move |p| {
                let inv = congruence_decompose(&ws, &chi, p)?;
                Ok((inv.tau + value(&he.im(), p)?).abs())
            }));
            let (ws, chi, he) = (g.ws.clone(), g.chi.clone(), hexpr);
            checks.push(check("kappa_formula", CLOSED, move |p| {
                let inv = congruence_decompose(&ws, &chi, p)?;
                Ok((inv.kappa - 0.5 * value(&he.re(), p)?).abs())
            }));
            checks.push(special_check(&g.ws, &g.chi));
            let (ws, m) = (g.ws.clone(), kappa_monopole(&g, 1.0));
            checks.push(check("kappa_monopole", CLOSED, move |p| monopole_residual(&ws, &m, p)));
            let neg = Expr::num(-1.0) * g.kappa.clone();
            let (ws, k) = (g.ws.clone(), neg.clone());
            checks.push(check("hypercr_residual", JET3, move |p| Ok(hypercr_residual(&ws, &k, p)?.curvature)));
            let (ws, k) = (g.ws.clone(), neg.clone());
            checks.push(check("hypercr_gt", JET3, move |p| Ok(hypercr_residual(&ws, &k, p)?.gt)));
            let (ws, k) = (g.ws.clone(), neg);
            checks.push(check("scalmon", JET3, move |p| Ok(hypercr_residual(&ws, &k, p)?.scalmon)));
            let (ws, chi) = (g.ws.clone(), g.chi.clone());
            let (ws2, chi2) = (g.ws.clone(), g.chi.clone());
            let measurements = vec![
                Measurement { name: "measured_tau", value: Arc::new(move |p| Ok(congruence_decompose(&ws, &chi, p)?.tau)) },
                Measurement { name: "measured_kappa", value: Arc::new(move |p| Ok(congruence_decompose(&ws2, &chi2, p)?.kappa)) },
            ];
            Suite { chart: g.ws.chart.clone(), checks, measurements }
        }
        "gibbons_hawking" => {
            let a = spec.list("A");
            if a.len() != 3 {
                return Err(GeomError::Invalid("A needs three comma-separated components".into()));
            }
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            let l = gibbons_hawking(spec.text("W"), &refs)?;
            let (base, m, l2) = (l.base.clone(), l.monopole.clone(), l.clone());
            let checks = vec![
                check("monopole_residual", CLOSED, move |p| monopole_residual(&base, &m, &l2.base_point(p)?)),
                w_minus_check(&l, conv),
                ricci_check(&l),
            ];
            Suite { chart: l.chart4.clone(), checks, measurements: vec![] }
        }
        "ward_toda" => {
            let g = ward_toda(spec.text("V"))?;
            let (ws, chi) = (g.ws.clone(), g.chi.clone());
            let checks = vec![
                ew_check(&g.ws),
                special_check(&g.ws, &g.chi),
                check("twist_free", CLOSED, move |p| Ok(congruence_decompose(&ws, &chi, p)?.kappa.abs())),
            ];
            Suite { chart: g.ws.chart.clone(), checks, measurements: vec![] }
        }
        "killing_toda" => {
            let ws = killing_toda(spec.text("V"), spec.real("b")?, spec.real("c")?)?;
            Suite { chart: ws.chart.clone(), checks: vec![ew_check(&ws)], measurements: vec![] }
        }
        "toda_cc" => {
            let t = toda_cc(spec.real("a")?, spec.real("b")?, spec.real("c")?)?;
            let u = t.u.clone();
            let checks = vec![
                check("toda_pde", 1e-9, move |p| toda_residual(&u, &p.coords)),
                ew_check(&t.ws),
                special_check(&t.ws, &t.chi),
            ];
            Suite { chart: t.ws.chart.clone(), checks, measurements: vec![] }
        }
        "tod_monopole" => {
            let t = toda_cc(spec.real("a")?, spec.real("b")?, spec.real("c")?)?;
            let m = tod_monopole(&t, spec.real("alpha")?, spec.real("beta")?)?;
            let l = lift(&t.ws, &m)?;
            let (base, mm, l2) = (t.ws.clone(), m.clone(), l.clone());
            let (l3, chi) = (l.clone(), t.chi.clone());
            let checks = vec![
                check("monopole_residual", CLOSED, move |p| monopole_residual(&base, &mm, &l2.base_point(p)?)),
                w_minus_check(&l, conv),
                check("complex_structure_dj", CLOSED, move |p| Ok(j_from_congruence(&l3, &chi, p)?.dj_residual)),
            ];
            Suite { chart: l.chart4.clone(), checks, measurements: vec![] }
        }
        "ct_toda" => {
            let g = ct_toda(spec.text("h"))?;
            Suite { chart: g.ws.chart.clone(), checks: vec![ew_check(&g.ws), special_check(&g.ws, &g.chi)], measurements: vec![] }
        }
        "einstein_tod" => {
            let (a, b, c) = (spec.real("a")?, spec.real("b")?, spec.real("c")?);
            let l = einstein_tod(a, b, c)?;
            let want = -12.0 * a * c / (a * a + c * c);
            let (ws, ws2, ws3) = (l.structure(), l.structure(), l.structure());
            let checks = vec![
                check("einstein", JET3, move |p| Ok(curvature_decompose(&ws, p)?.einstein_residual())),
                w_minus_check(&l, conv),
                check("scal_formula", JET3, move |p| Ok((curvature_decompose(&ws2, p)?.scal - want).abs() / want.abs().max(1.0))),
            ];
            let measurements = vec![Measurement { name: "measured_scal", value: Arc::new(move |p| Ok(curvature_decompose(&ws3, p)?.scal)) }];
            Suite { chart: l.chart4.clone(), checks, measurements }
        }
        "dilation_gh" => {
            let (l, base_spec) = dilation_gh(spec.text("h"))?;
            let gs = geodesic_symmetry_ew(base_spec.text("H"))?;
            let l2 = l.clone();
            let checks = vec![
                ricci_check(&l),
                w_minus_check(&l, conv),
                check("quotient_matches_base", JET3, move |p| {
                    let q = quotient(&l2.chart4, &l2.killing(), p)?;
                    let base = q.base.as_ref().ok_or_else(|| GeomError::Invalid("quotient has no coordinate base".into()))?;
                    gauge_comparison(base, &gs.ws, &l2.base_point(p)?)
                }),
            ];
            Suite { chart: l.chart4.clone(), checks, measurements: vec![] }
        }
        "flat_r4" => {
            let fr = Arc::new(flat_r4_conformal(spec.real("a")?, spec.real("b")?, spec.real("c")?)?);
            let f1 = fr.clone();
            let f2 = fr.clone();
            let f3 = fr.clone();
            let f4 = fr.clone();
            let checks = vec![
                check("conformal_killing", CLOSED, move |p| Ok(quotient(&f1.cartesian, &f1.k, p)?.conformal_killing)),
                check("tilde_structure_prediction", CLOSED, move |p| {
                    let m = quotient_congruence(&f2.cartesian, &f2.k, &f2.j_minus_tilde, p, StarConvention::Tilde)?;
                    let kn = f2.k_norm(&p.coords)?;
                    let (t, k) = f2.predicted(&p.coords)?;
                    Ok((m.tau / kn - t).abs().max((m.kappa / kn - k).abs()))
                }),
                check("flat_structure_prediction", CLOSED, move |p| {
                    let m = quotient_congruence(&f3.cartesian, &f3.k, &f3.j_minus, p, StarConvention::Tilde)?;
                    let kn = f3.k_norm(&p.coords)?;
                    let (t, k) = f3.predicted_tilde(&p.coords)?;
                    Ok((m.tau / kn - t).abs().max((m.kappa / kn - k).abs()))
                }),
                check("shear_free_geodesic", CLOSED, move |p| {
                    let a = quotient_congruence(&f4.cartesian, &f4.k, &f4.j_minus_tilde, p, StarConvention::Tilde)?;
                    let b = quotient_congruence(&f4.cartesian, &f4.k, &f4.j_minus, p, StarConvention::Tilde)?;
                    Ok(a.shear.max(a.accel).max(b.shear).max(b.accel))
                }),
            ];
            Suite { chart: fr.cartesian.clone(), checks, measurements: vec![] }
        }
        other => return Err(GeomError::Invalid(format!("unknown family '{}'", other))),
    };
    debug_assert_eq!(suite.checks.iter().map(|c| c.name).collect::<Vec<_>>(), check_names(&spec.tag));
    Ok(suite)
}

/// Congruences available to `emit-congruence`: the base Weyl structure and χ.
/// `flat_r3` (flat space in spherical coordinates) is available here only.
pub fn congruence(tag: &str, params: &[String], selector: &str) -> Result<(WeylStructure, Congruence)> {
    if tag == "flat_r3" {
        if !params.is_empty() {
            return Err(GeomError::Invalid("flat_r3 takes no parameters".into()));
        }
        return match selector {
            "radial" => Ok((flat_spherical()?, Congruence::new(vec![Expr::one(), Expr::zero(), Expr::zero()]))),
            _ => Err(GeomError::Invalid("flat_r3 offers the 'radial' congruence".into())),
        };
    }
    let spec = FamilySpec::from_pairs(tag, params)?;
    let canonical = |ws: WeylStructure, chi: Congruence| -> Result<(WeylStructure, Congruence)> {
        if selector == "canonical" {
            Ok((ws, chi))
        } else {
            Err(GeomError::Invalid(format!("family {} has only the 'canonical' congruence", spec.tag)))
        }
    };
    match spec.tag.as_str() {
        "geodesic_symmetry" => {
            let g = geodesic_symmetry_ew(spec.text("H"))?;
            canonical(g.ws, g.chi)
        }
        "ward_toda" => {
            let g = ward_toda(spec.text("V"))?;
            canonical(g.ws, g.chi)
        }
        "toda_cc" => {
            let t = toda_cc(spec.real("a")?, spec.real("b")?, spec.real("c")?)?;
            canonical(t.ws, t.chi)
        }
        "ct_toda" => {
            let g = ct_toda(spec.text("h"))?;
            canonical(g.ws, g.chi)
        }
        other => Err(GeomError::Invalid(format!("family {} has no congruence to emit", other))),
    }
}
