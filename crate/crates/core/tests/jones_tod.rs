use weylforge::congruence::*;
use weylforge::expr::Evaluator;
use weylforge::families::*;
use weylforge::jones_tod::*;
use weylforge::weyl::*;
use weylforge::*;

fn flat() -> WeylStructure {
    flat_spherical().unwrap()
}

fn taub_nut_monopole(b: &WeylStructure, a_sign: &str) -> MonopoleSolution {
    MonopoleSolution::from_text(&b.chart, "1+1/(2*r)", &["0", "0", &format!("{}cos(th)/2", a_sign)]).unwrap()
}

fn w_minus(ws: &WeylStructure, p: &Point) -> f64 {
    weyl_part_residual(ws, p, StarConvention::Tilde, false).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn flat_lift_is_flat() {
    let b = flat();
    let m = MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap();
    let l = lift(&b, &m).unwrap();
    for p in l.chart4.sample(10, 3).unwrap() {
        let d = curvature_decompose(&l.structure(), &p).unwrap();
        let rm = d.riemann.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(rm < 1e-10, "{rm:e}");
    }
}

#[test]
fn taub_nut_calibration_picks_one_sign() {
    // Both candidate signs of the Dirac potential; only one gives W⁻ = 0.
    let b = flat();
    let plus = lift(&b, &taub_nut_monopole(&b, "")).unwrap();
    let minus = lift(&b, &taub_nut_monopole(&b, "-")).unwrap();
    let mut worst_plus: f64 = 0.0;
    let mut best_minus = f64::INFINITY;
    for p in plus.chart4.sample(20, 5).unwrap() {
        let gh = plus.rescaled("gh", &plus.monopole.w).unwrap();
        worst_plus = worst_plus.max(w_minus(&gh.structure(), &p));
        assert!(curvature_decompose(&gh.structure(), &p).unwrap().ricci_norm() < 1e-7);
        best_minus = best_minus.min(w_minus(&minus.structure(), &p));
    }
    assert!(worst_plus < 1e-7, "{worst_plus:e}");
    assert!(best_minus > 1e-3, "{best_minus:e}");
}

#[test]
fn second_star_convention_calibration_is_equivalent() {
    let b = flat();
    let m = taub_nut_monopole(&b, "");
    let l = lift_with(&b, &m, StarConvention::Paper).unwrap();
    let p = l.chart4.point(&[0.9, 1.1, 0.7, 0.2]).unwrap();
    let r = weyl_part_residual(&l.structure(), &p, StarConvention::Paper, false).unwrap();
    assert!(r < 1e-7, "{r:e}");
}

#[test]
fn non_monopole_lift_is_not_selfdual() {
    let b = flat_cartesian().unwrap();
    let m = MonopoleSolution::from_text(&b.chart, "2+x", &["0", "0", "0"]).unwrap();
    assert!(monopole_residual(&b, &m, &b.chart.point(&[0.3, 0.2, 1.0]).unwrap()).unwrap() > 0.1);
    let l = lift(&b, &m).unwrap();
    for p in l.chart4.sample(10, 9).unwrap() {
        assert!(w_minus(&l.structure(), &p) > 1e-3);
    }
}

#[test]
fn lift_rejects_vanishing_w() {
    let b = flat_cartesian().unwrap();
    let m = MonopoleSolution::from_text(&b.chart, "x", &["0", "0", "0"]).unwrap();
    assert!(lift(&b, &m).is_err());
}

#[test]
fn quotient_of_flat_by_translation() {
    let b = flat_cartesian().unwrap();
    let m = MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap();
    let l = lift(&b, &m).unwrap();
    let p = l.chart4.point(&[0.1, -0.3, 0.8, 0.4]).unwrap();
    let q = quotient(&l.chart4, &l.killing(), &p).unwrap();
    assert!((q.w - 1.0).abs() < 1e-12);
    assert!(q.omega.iter().all(|x| x.abs() < 1e-12));
    let base = q.base.unwrap();
    assert!(max_diff(&base.metric_value(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]) < 1e-12);
}

#[test]
fn pure_dilation_quotient_is_round_sphere() {
    let fr = flat_r4_conformal(1.0, 0.0, 0.0).unwrap();
    let mut scal = Vec::new();
    for p in fr.euler.sample(8, 17).unwrap() {
        let q = quotient(&fr.euler, &fr.k_euler, &p).unwrap();
        assert!(q.omega_jt.iter().all(|x| x.abs() < 1e-10), "{:?}", q.omega_jt);
        let base = q.base.unwrap();
        // the constant length gauge is the chart metric times e^{-2s}
        let s = p.coords[0];
        let unit = Geometry::from_jets(
            base.point.clone(),
            base.g.iter().map(|x| *x * (-2.0 * s).exp()).collect(),
            base.omega.iter().map(|x| *x * 0.0).collect(),
            base.orientation,
        )
        .unwrap();
        let d = unit.decompose();
        assert!(d.r0_norm() < 1e-9);
        scal.push(d.scal);
    }
    // unit 3-sphere: scal = 6 with the engine's normalization
    assert!(scal.iter().all(|s| (s - 6.0).abs() < 1e-8), "{scal:?}");
}

struct Corpus {
    name: &'static str,
    base: WeylStructure,
    m: MonopoleSolution,
    p: Vec<f64>,
}

fn round_trip_corpus() -> Vec<Corpus> {
    let b = flat();
    let gs = geodesic_symmetry_ew("2").unwrap();
    let t = toda_cc(1.0, 0.0, 1.0).unwrap();
    vec![
        Corpus { name: "flat", m: taub_nut_monopole(&b, ""), base: b, p: vec![0.9, 1.1, 0.7, 0.2] },
        Corpus { name: "gs", m: kappa_monopole(&gs, 1.0), base: gs.ws.clone(), p: vec![0.4, 0.6, 0.3, -0.1] },
        Corpus { name: "toda", m: tod_monopole(&t, 1.0, 0.0).unwrap(), base: t.ws.clone(), p: vec![0.1, -0.2, 0.9, 0.3] },
    ]
}

#[test]
fn round_trip_reproduces_base_and_monopole() {
    for c in round_trip_corpus() {
        let l = lift(&c.base, &c.m).unwrap();
        let p = l.chart4.point(&c.p).unwrap();
        let q = quotient(&l.chart4, &l.killing(), &p).unwrap();
        let qb = q.base.as_ref().unwrap();
        let bp = l.base_point(&p).unwrap();
        let geo = Geometry::at(&c.base, &bp, 1).unwrap();
        let om: Vec<f64> = geo.omega.iter().map(|x| x.value()).collect();
        let qom: Vec<f64> = qb.omega.iter().map(|x| x.value()).collect();
        let w = Evaluator::new(&bp.coords, 0).real(&c.m.w).unwrap().value();
        assert!(max_diff(&qb.metric_value(), &geo.metric_value()) < 1e-8, "{}", c.name);
        assert!(max_diff(&qom, &om) < 1e-8, "{} {:?} {:?}", c.name, qom, om);
        assert!((q.w - w).abs() < 1e-10, "{}", c.name);
        assert!(q.omega_k < 1e-9 && q.lie_residual.unwrap() < 1e-8, "{}", c.name);
    }
}

#[test]
fn quotient_is_gauge_independent() {
    // Rescaling the 4-metric changes only the chart gauge of the quotient.
    let c = &round_trip_corpus()[1];
    let l = lift(&c.base, &c.m).unwrap();
    let l2 = l.rescaled("scaled", &l.chart4.parse("exp(X*Y)*(2+cos(psi))").unwrap()).unwrap();
    let p = l.chart4.point(&c.p).unwrap();
    let q1 = quotient(&l.chart4, &l.killing(), &p).unwrap();
    let q2 = quotient(&l2.chart4, &l2.killing(), &p).unwrap();
    assert!(max_diff(&q1.omega_jt, &q2.omega_jt) < 1e-10);
    let d = gauge_comparison(q2.base.as_ref().unwrap(), &c.base, &l.base_point(&p).unwrap()).unwrap();
    assert!(d < 1e-8, "{d:e}");
}

#[test]
fn quotient_rejects_non_conformal_fields() {
    let b = flat_cartesian().unwrap();
    let m = MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap();
    let l = lift(&b, &m).unwrap();
    let p = l.chart4.point(&[0.1, -0.3, 0.8, 0.4]).unwrap();
    let k = vec![l.chart4.parse("x^2").unwrap(), Expr::zero(), Expr::zero(), Expr::one()];
    assert!(matches!(quotient(&l.chart4, &k, &p), Err(GeomError::Precondition(_))));
    let zero = vec![Expr::zero(); 4];
    assert!(quotient(&l.chart4, &zero, &p).is_err());
}

#[test]
fn dsd_gauge_self_test() {
    let b = flat();
    let l = lift(&b, &taub_nut_monopole(&b, "")).unwrap();
    let p = l.chart4.point(&[0.9, 1.1, 0.7, 0.2]).unwrap();
    assert!(dsd_residual(&l.chart4, &l.killing(), &p).unwrap() < 1e-8);
    let fr = flat_r4_conformal(1.0, 1.0, 0.0).unwrap();
    for p in fr.cartesian.sample(10, 1).unwrap() {
        assert!(dsd_residual(&fr.cartesian, &fr.k, &p).unwrap() < 1e-8);
    }
}

#[test]
fn j_from_translation_lift_is_constant() {
    let b = flat_cartesian().unwrap();
    let m = MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap();
    let l = lift(&b, &m).unwrap();
    let chi = Congruence::from_text(&b.chart, &["0", "0", "1"]).unwrap();
    let p = l.chart4.point(&[0.1, -0.3, 0.8, 0.4]).unwrap();
    let r = j_from_congruence(&l, &chi, &p).unwrap();
    assert!(r.dj_residual < 1e-12 && r.theta.iter().all(|x| x.abs() < 1e-12));
    let jets = LiftedJ { lift: &l, chi: &chi }.jets(&p, 1).unwrap();
    assert!(jets.iter().all(|j| j.gradient().iter().all(|d| d.abs() < 1e-12)));
}

fn csthm_corpus() -> Vec<(&'static str, LiftedChart, Congruence, Vec<f64>)> {
    let mut out = Vec::new();
    for h in ["2", "1+zeta/4"] {
        let gs = geodesic_symmetry_ew(h).unwrap();
        out.push(("gs", lift(&gs.ws, &kappa_monopole(&gs, 1.0)).unwrap(), gs.chi.clone(), vec![0.4, 0.6, 0.3, -0.1]));
    }
    let b = flat();
    // radial congruence on the Taub-NUT lift
    let radial = Congruence::from_text(&b.chart, &["1", "0", "0"]).unwrap();
    out.push(("taub-nut", lift(&b, &taub_nut_monopole(&b, "")).unwrap(), radial, vec![0.9, 1.1, 0.7, 0.2]));
    let t = toda_cc(1.0, 0.0, 1.0).unwrap();
    out.push(("toda", lift(&t.ws, &tod_monopole(&t, 1.0, 0.0).unwrap()).unwrap(), t.chi.clone(), vec![0.1, -0.2, 0.9, 0.3]));
    out
}

#[test]
fn csthm_dj_vanishes_on_lifts() {
    for (name, l, chi, x) in csthm_corpus() {
        let p = l.chart4.point(&x).unwrap();
        let r = j_from_congruence(&l, &chi, &p).unwrap();
        assert!(r.defect < 1e-9, "{name}");
        assert!(r.dj_residual < 1e-7, "{name} {:e}", r.dj_residual);
        assert!(r.theta_mismatch < 1e-7, "{name} {:e}", r.theta_mismatch);
    }
}

#[test]
fn csthm_perturbed_congruence_fails() {
    let b = flat_cartesian().unwrap();
    let m = MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap();
    let l = lift(&b, &m).unwrap();
    let nrm = "sqrt(1+1e-4*(x^2+y^2))";
    let chi = Congruence::from_text(&b.chart, &[&format!("1e-2*x/{nrm}"), &format!("-1e-2*y/{nrm}"), &format!("1/{nrm}")]).unwrap();
    let p = l.chart4.point(&[0.1, -0.3, 0.8, 0.4]).unwrap();
    assert!(j_from_congruence(&l, &chi, &p).is_err());
    let r = j_from_congruence_unchecked(&l, &chi, &p).unwrap();
    assert!(r.dj_residual > 1e-4, "{:e}", r.dj_residual);
}

#[test]
fn twist_free_lift_is_scalar_flat_kahler() {
    let t = toda_cc(1.0, 0.0, 1.0).unwrap();
    let l = lift(&t.ws, &tod_monopole(&t, 1.0, 0.0).unwrap()).unwrap();
    for p in l.chart4.sample(6, 2).unwrap() {
        let r = j_from_congruence(&l, &t.chi, &p).unwrap();
        assert!(r.kappa.abs() < 1e-9);
        assert!(r.faraday_k() < 1e-7, "{:e}", r.faraday_k());
    }
}

#[test]
fn ricci_and_faraday_same_type_parts_vanish_on_selfdual_lifts() {
    for (name, l, chi, x) in csthm_corpus() {
        let p = l.chart4.point(&x).unwrap();
        let r = j_from_congruence(&l, &chi, &p).unwrap();
        let (rho, _) = r.kw.ricci_form();
        let dec = r.kw.geom.decompose();
        assert!(r.kw.same_type_part_norm(&rho) < 1e-7, "{name} rho {:e}", r.kw.same_type_part_norm(&rho));
        assert!(r.kw.same_type_part_norm(&dec.faraday) < 1e-7, "{name} F {:e}", r.kw.same_type_part_norm(&dec.faraday));
        assert!(r.kw.wminus_formula_residual() < 1e-8, "{name}");
    }
}

#[test]
fn maxwell_fields_from_second_monopoles() {
    let b = flat();
    let m = MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap();
    let l = lift(&b, &m).unwrap();
    let p = l.chart4.point(&[0.9, 1.1, 0.7, 0.2]).unwrap();
    let same = maxwell_from_monopole(&l, &m, &p).unwrap();
    assert!(same.asd < 1e-12 && same.sd < 1e-12);
    let dirac = MonopoleSolution { w: b.chart.parse("1/(2*r)").unwrap(), a: dirac_potential(1.0) };
    let mx = maxwell_from_monopole(&l, &dirac, &p).unwrap();
    assert!(mx.asd < 1e-7, "{:e}", mx.asd);
    assert!(mx.sd > 1e-2);
    let bad = MonopoleSolution::from_text(&b.chart, "x", &["0", "0", "0"]).unwrap();
    assert!(matches!(maxwell_from_monopole(&l, &bad, &p), Err(GeomError::Precondition(_))));
}

#[test]
fn jones_tod_equivalence_over_corpus() {
    let b = flat_cartesian().unwrap();
    // The lift sees only (g_B, w, A), so a non-EW control needs a metric
    // that carries no compatible Einstein–Weyl structure at all.
    let bent = WeylStructure::exact(b.chart.with_metric("bent", ["1", "0", "0", "0", "1+x^2", "0", "0", "0", "1"].iter().map(|t| b.chart.parse(t).unwrap()).collect()).unwrap());
    let gs = geodesic_symmetry_ew("1+zeta/4").unwrap();
    let cases: Vec<(&str, WeylStructure, MonopoleSolution)> = vec![
        ("gs+kappa", gs.ws.clone(), kappa_monopole(&gs, 1.0)),
        ("gs+constant", gs.ws.clone(), MonopoleSolution { w: Expr::num(1.0), a: vec![Expr::zero(); 3] }),
        ("flat+translation", b.clone(), MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap()),
        ("flat+linear", b.clone(), MonopoleSolution::from_text(&b.chart, "2+x", &["0", "0", "0"]).unwrap()),
        ("non-ew", bent.clone(), MonopoleSolution::from_text(&b.chart, "1", &["0", "0", "0"]).unwrap()),
    ];
    for (name, base, m) in cases {
        let l = lift(&base, &m).unwrap();
        let pts = l.chart4.sample(8, 21).unwrap();
        let sd = pts.iter().all(|p| w_minus(&l.structure(), p) < 1e-6);
        let ok = pts.iter().all(|p| {
            let bp = l.base_point(p).unwrap();
            ew_residual(&base, &bp).unwrap() < 1e-6 && monopole_residual(&base, &m, &bp).unwrap() < 1e-6
        });
        assert_eq!(sd, ok, "{name}");
    }
}

#[test]
fn quotient_congruence_recovers_base_invariants() {
    let gs = geodesic_symmetry_ew("1+zeta/4").unwrap();
    let l = lift(&gs.ws, &kappa_monopole(&gs, 1.0)).unwrap();
    for p in l.chart4.sample(5, 4).unwrap() {
        let bp = l.base_point(&p).unwrap();
        let inv = congruence_decompose(&gs.ws, &gs.chi, &bp).unwrap();
        let qc = quotient_congruence(&l.chart4, &l.killing(), &LiftedJ { lift: &l, chi: &gs.chi }, &p, StarConvention::Tilde).unwrap();
        // the constant length gauge is w² g_B, where τ and κ scale by 1/w = |K|
        assert!((qc.tau / qc.k_norm - inv.tau).abs() < 1e-9);
        assert!((qc.kappa / qc.k_norm - inv.kappa).abs() < 1e-9);
        assert!(qc.shear < 1e-9 && qc.accel < 1e-9);
    }
}
