//! Selfdual 4-spaces with a conformal vector field and their Einstein–Weyl
//! quotients: lift, quotient, the D^sd gauge, complex structures from
//! shear-free geodesic congruences, and Maxwell fields from monopoles.
//!
//! The lift chart uses coordinates (base..., t) with K = ∂t and the metric
//! g_B + w⁻²(dt + A)², so that the quotient, read in the chart gauge,
//! returns (g_B, ω, w) unchanged.

use crate::chart::{Chart, Point};
use crate::congruence::{congruence_decompose, monopole_residual, Congruence, MonopoleSolution, ELIGIBILITY_TOL};
use crate::error::{GeomError, Result};
use crate::expr::{Evaluator, Expr, Symbols};
use crate::forms::{exterior_d_jets, hodge_star_generic, StarConvention};
use crate::jet::Jet;
use crate::linalg::{self, det_jet, frame_max_norm_covariant, inverse_jet, levi_civita};
use crate::weyl::{covariant_derivative_11, kahler_weyl_from_jets, project_two_form, Geometry, JField, KahlerWeyl, WeylStructure};

/// Orientation of (base coords, t) relative to the base orientation, for the
/// tilde star. Frozen by requiring the Taub-NUT lift to have W⁻ = 0.
pub const LIFT_ORIENTATION_TILDE: f64 = -1.0;

/// The calibration constant for a given star convention. The two stars differ
/// by a sign on 2-forms in four dimensions, which swaps SD and ASD.
pub fn lift_orientation(conv: StarConvention) -> f64 {
    match conv {
        StarConvention::Tilde => LIFT_ORIENTATION_TILDE,
        StarConvention::Paper => -LIFT_ORIENTATION_TILDE,
    }
}

/// vol_B(X,Y,Z) = σ vol_M(ξ,X,Y,Z); σ follows from the lift calibration.
fn base_volume_sign(conv: StarConvention) -> f64 {
    -lift_orientation(conv)
}

#[derive(Clone, Debug)]
pub struct LiftedChart {
    pub chart4: Chart,
    pub base: WeylStructure,
    pub monopole: MonopoleSolution,
    pub conv: StarConvention,
}

impl LiftedChart {
    /// K = ∂t.
    pub fn killing(&self) -> Vec<Expr> {
        vec![Expr::zero(), Expr::zero(), Expr::zero(), Expr::one()]
    }

    pub fn structure(&self) -> WeylStructure {
        WeylStructure::exact(self.chart4.clone())
    }

    /// The representative w²g_B + (dt + A)², in which K is a unit Killing field.
    pub fn unit_killing_chart(&self) -> Result<Chart> {
        let w2 = self.monopole.w.clone() * self.monopole.w.clone();
        self.chart4.rescaled(&format!("{}:unit", self.chart4.id), &w2)
    }

    /// The same lift with the metric multiplied by `factor`.
    pub fn rescaled(&self, id: &str, factor: &Expr) -> Result<LiftedChart> {
        Ok(LiftedChart { chart4: self.chart4.rescaled(id, factor)?, ..self.clone() })
    }

    /// Base point under the projection (drop t).
    pub fn base_point(&self, p: &Point) -> Result<Point> {
        self.base.chart.point_unboxed(&p.coords[..3])
    }
}

pub fn lift(base: &WeylStructure, m: &MonopoleSolution) -> Result<LiftedChart> {
    lift_with(base, m, StarConvention::Tilde)
}

pub fn lift_with(base: &WeylStructure, m: &MonopoleSolution, conv: StarConvention) -> Result<LiftedChart> {
    let bc = &base.chart;
    if bc.dim() != 3 || m.a.len() != 3 {
        return Err(GeomError::Invalid("lift needs a 3-dimensional base and a 1-form A".into()));
    }
    // w must not vanish anywhere on the base domain; probe a sample for
    // small values or a change of sign.
    let mut sign = 0.0;
    for p in bc.sample(64, 0x11f7)? {
        let w = Evaluator::new(&p.coords, 0).real(&m.w)?.value();
        if !(w.abs() > crate::expr::EPS_GUARD) || w.signum() * sign < 0.0 {
            return Err(GeomError::Guard(format!("monopole w vanishes near {:?}", p.coords)));
        }
        sign = w.signum();
    }
    let tname = ["t", "t4", "tt"].iter().find(|c| !bc.syms.coords.iter().any(|x| x == *c)).unwrap();
    let mut coords: Vec<&str> = bc.syms.coords.iter().map(|s| s.as_str()).collect();
    coords.push(tname);
    let mut syms = Symbols::new(&coords);
    syms.aliases = bc.syms.aliases.clone();
    let inv_w2 = Expr::one() / (m.w.clone() * m.w.clone());
    let n = 4;
    let mut metric = vec![Expr::zero(); 16];
    for a in 0..3 {
        for b in a..3 {
            let e = bc.metric[a * 3 + b].clone() + m.a[a].clone() * m.a[b].clone() * inv_w2.clone();
            metric[a * n + b] = e.clone();
            metric[b * n + a] = e;
        }
        metric[a * n + 3] = m.a[a].clone() * inv_w2.clone();
        metric[3 * n + a] = m.a[a].clone() * inv_w2.clone();
    }
    metric[15] = inv_w2;
    let mut domain = bc.domain.clone();
    domain.push((-1.0, 1.0));
    let orientation = lift_orientation(conv) * bc.orientation;
    let mut chart4 = Chart::new(&format!("{}+lift", bc.id), syms, domain, metric, orientation)?;
    chart4.guards = bc.guards.clone();
    let w2 = m.w.clone() * m.w.clone();
    chart4 = chart4.with_guard("w^2", w2);
    Ok(LiftedChart { chart4, base: base.clone(), monopole: m.clone(), conv })
}

// ---------------------------------------------------------------------------
// Quotient

/// Pointwise data of the Jones–Tod quotient at a point of M.
#[derive(Clone, Debug)]
pub struct QuotientData {
    pub point: Point,
    /// Horizontal part of the chart metric (4×4, degenerate along K).
    pub h: Vec<f64>,
    /// The Jones–Tod 1-form ω = D^B − D^{|K|}, gauge independent.
    pub omega_jt: Vec<f64>,
    /// Gauge form of D^B relative to the horizontal chart metric h.
    pub omega: Vec<f64>,
    /// w = |K|⁻¹ in the chart gauge.
    pub w: f64,
    /// |ω(K)| measured with K normalized.
    pub omega_k: f64,
    /// sym₀ of the covariant derivative of K in the constant length gauge.
    pub conformal_killing: f64,
    /// Largest K-derivative of the gauge-invariant base data (coordinate K only).
    pub lie_residual: Option<f64>,
    /// Base jets (metric order 3, ω order 2) when K is a multiple of a
    /// coordinate field; coordinates are the remaining three.
    pub base: Option<Geometry>,
}

/// Jets shared by quotient, dsd_residual and the O'Neill measurement.
struct KFrame {
    n: usize,
    g: Vec<Jet>,
    k: Vec<Jet>,
    /// |K|² in the chart metric.
    k2: Jet,
    ghat: Vec<Jet>,
    /// Φ_ij = ĝ(D̂_i K, ∂_j), D̂ the Levi-Civita connection of ĝ.
    phi: Vec<Jet>,
    /// K♭ with respect to ĝ.
    kflat_hat: Vec<Jet>,
    omega_jt: Vec<Jet>,
    orientation: f64,
}

impl KFrame {
    fn new(chart: &Chart, k: &[Expr], p: &Point, order: u8, conv: StarConvention) -> Result<KFrame> {
        let n = chart.dim();
        if n != 4 || k.len() != 4 {
            return Err(GeomError::Invalid("quotients need a 4-dimensional chart and a vector field".into()));
        }
        let mut ev = Evaluator::new(&p.coords, order);
        let g = chart.metric_jets(&mut ev)?;
        let kj = k.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
        let mut k2 = g[0] * 0.0;
        for i in 0..n {
            for j in 0..n {
                k2 = k2 + g[i * n + j] * kj[i] * kj[j];
            }
        }
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.value().abs()));
        if !(k2.value() > 1e-12 * scale) {
            return Err(GeomError::Precondition(format!("K vanishes at {:?}", p.coords)));
        }
        let inv = k2.recip();
        let ghat: Vec<Jet> = g.iter().map(|x| *x * inv).collect();
        let kflat_hat: Vec<Jet> = (0..n).map(|i| (0..n).map(|j| ghat[i * n + j] * kj[j]).sum()).collect();
        let mut phi = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut v = kflat_hat[j].partial(i);
                for m in 0..n {
                    let lc = (ghat[m * n + j].partial(i) + ghat[m * n + i].partial(j) - ghat[i * n + j].partial(m)) * 0.5;
                    v = v - lc * kj[m].truncate(lc.order());
                }
                phi.push(v);
            }
        }
        let lo = phi[0].order();
        let gl: Vec<Jet> = ghat.iter().map(|x| x.truncate(lo)).collect();
        let ginv = inverse_jet(&gl, n)?;
        let sq = det_jet(&gl, n).sqrt();
        let star = hodge_star_generic(&phi, n, 2, &ginv, sq, chart.orientation, conv);
        let kk: Vec<Jet> = kj.iter().map(|x| x.truncate(lo)).collect();
        let norm: Jet = (0..n).map(|i| kflat_hat[i].truncate(lo) * kk[i]).sum();
        let omega_jt: Vec<Jet> = (0..n).map(|j| (0..n).map(|i| kk[i] * star[i * n + j]).sum::<Jet>() * norm.recip() * -2.0).collect();
        Ok(KFrame { n, g, k: kj, k2, ghat, phi, kflat_hat, omega_jt, orientation: chart.orientation })
    }

    fn ghat_value(&self) -> Vec<f64> {
        self.ghat.iter().map(|x| x.value()).collect()
    }

    fn conformal_killing(&self) -> Result<f64> {
        let n = self.n;
        let gh = self.ghat_value();
        let gi = linalg::inverse(&gh, n)?;
        let s: Vec<f64> = (0..n * n).map(|a| 0.5 * (self.phi[a].value() + self.phi[(a % n) * n + a / n].value())).collect();
        let tr: f64 = (0..n * n).map(|a| gi[a] * s[a]).sum::<f64>() / n as f64;
        let s0: Vec<f64> = (0..n * n).map(|a| s[a] - tr * gh[a]).collect();
        Ok(frame_max_norm_covariant(&s0, n, 2, &linalg::orthonormal_frame(&gh, n)?))
    }
}

/// If K = λ ∂_i for a constant λ ≠ 0, return i.
fn coordinate_field(k: &[Expr]) -> Option<usize> {
    let nz: Vec<usize> = (0..k.len()).filter(|&i| !k[i].is_zero()).collect();
    match nz.as_slice() {
        [i] if k[*i].as_num().is_some() => Some(*i),
        _ => None,
    }
}

/// Quotient data at p, with the default (tilde) star.
pub fn quotient(m: &Chart, k: &[Expr], p: &Point) -> Result<QuotientData> {
    quotient_with(m, k, p, StarConvention::Tilde)
}

pub fn quotient_with(m: &Chart, k: &[Expr], p: &Point, conv: StarConvention) -> Result<QuotientData> {
    let kf = KFrame::new(m, k, p, 3, conv)?;
    let ck = kf.conformal_killing()?;
    if ck > 1e-7 {
        return Err(GeomError::Precondition(format!("K is not a conformal vector field at {:?} (residual {:e})", p.coords, ck)));
    }
    let n = kf.n;
    let (g, kj) = (&kf.g, &kf.k);
    let kflat: Vec<Jet> = (0..n).map(|i| (0..n).map(|j| g[i * n + j] * kj[j]).sum()).collect();
    let inv = kf.k2.recip();
    let h: Vec<Jet> = (0..n * n).map(|a| g[a] - kflat[a / n] * kflat[a % n] * inv).collect();
    let w = kf.k2.sqrt().recip();
    let lo = kf.omega_jt[0].order();
    // gauge form relative to h = |K|² ĝ|_hor: ω + d log w
    let omega: Vec<Jet> = (0..n).map(|j| kf.omega_jt[j] + w.partial(j).truncate(lo) * w.truncate(lo).recip()).collect();
    // K has unit length in the constant length gauge
    let omega_k = (0..n).map(|j| kf.omega_jt[j].value() * kj[j].value()).sum::<f64>().abs();
    let (mut lie_residual, mut base) = (None, None);
    if let Some(kt) = coordinate_field(k) {
        let keep: Vec<usize> = (0..n).filter(|&i| i != kt).collect();
        let mut lie: f64 = 0.0;
        for a in &keep {
            for b in &keep {
                lie = lie.max((h[a * n + b] * inv).d1(kt).abs());
            }
            lie = lie.max(kf.omega_jt[*a].d1(kt).abs());
        }
        lie_residual = Some(lie);
        let h3: Vec<Jet> = keep.iter().flat_map(|&a| keep.iter().map(move |&b| (a, b))).map(|(a, b)| h[a * n + b].restrict(&keep)).collect();
        let om3: Vec<Jet> = keep.iter().map(|&a| omega[a].restrict(&keep)).collect();
        // ι_{∂kt} dx⁰∧…∧dx³ = (−1)^kt dx^(others)
        let sign = if kt % 2 == 0 { 1.0 } else { -1.0 };
        let lam = k[kt].as_num().unwrap_or(1.0).signum();
        let or_b = sign * lam * base_volume_sign(conv) * m.orientation;
        let coords: Vec<f64> = keep.iter().map(|&i| p.coords[i]).collect();
        let bp = Point { chart_id: format!("{}/K", p.chart_id), coords };
        base = Some(Geometry::from_jets(bp, h3, om3, or_b)?);
    }
    let v = |x: &[Jet]| x.iter().map(|j| j.value()).collect::<Vec<_>>();
    Ok(QuotientData {
        point: p.clone(),
        h: v(&h),
        omega_jt: v(&kf.omega_jt),
        omega: v(&omega),
        w: w.value(),
        omega_k,
        conformal_killing: ck,
        lie_residual,
        base,
    })
}

/// Max-norm of the ASD part of ⟨D^sd K, ·⟩ = Φ + ½ ω∧K♭ in the constant
/// length gauge. Zero by construction; a self-test of the assembled formulas.
pub fn dsd_residual(m: &Chart, k: &[Expr], p: &Point) -> Result<f64> {
    dsd_residual_with(m, k, p, StarConvention::Tilde)
}

pub fn dsd_residual_with(m: &Chart, k: &[Expr], p: &Point, conv: StarConvention) -> Result<f64> {
    let kf = KFrame::new(m, k, p, 1, conv)?;
    let ck = kf.conformal_killing()?;
    if ck > 1e-7 {
        return Err(GeomError::Precondition(format!("K is not a conformal vector field (residual {:e})", ck)));
    }
    let n = 4;
    let om: Vec<f64> = kf.omega_jt.iter().map(|x| x.value()).collect();
    let kb: Vec<f64> = kf.kflat_hat.iter().map(|x| x.value()).collect();
    let psi: Vec<f64> = (0..16).map(|a| kf.phi[a].value() + 0.5 * (om[a / n] * kb[a % n] - om[a % n] * kb[a / n])).collect();
    let gh = kf.ghat_value();
    let asd = project_two_form(&psi, &gh, kf.orientation, conv, -1.0);
    Ok(frame_max_norm_covariant(&asd, n, 2, &linalg::orthonormal_frame(&gh, n)?))
}

/// Compare a quotient base (jets in some gauge) with a Weyl structure on the
/// same coordinates, up to a conformal change of gauge. Returns the larger of
/// the relative metric mismatch and the ω mismatch after the gauge shift.
pub fn gauge_comparison(base: &Geometry, ws: &WeylStructure, p: &Point) -> Result<f64> {
    let n = ws.dim();
    if base.n != n {
        return Err(GeomError::Invalid("dimension mismatch in gauge comparison".into()));
    }
    let mut ev = Evaluator::new(&p.coords, 1);
    let g: Vec<Jet> = ws.chart.metric_jets(&mut ev)?;
    let om = ws.omega.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
    let h: Vec<Jet> = base.g.iter().map(|x| x.truncate(1)).collect();
    let gi = inverse_jet(&g, n)?;
    let tr: Jet = (0..n * n).map(|a| gi[a] * h[a]).sum();
    // e^{2f} = tr(g⁻¹h)/n
    let f = (tr * (1.0 / n as f64)).ln() * 0.5;
    let e2f = (f * 2.0).exp();
    let hv: Vec<f64> = h.iter().map(|x| x.value()).collect();
    let scale = hv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let frame = linalg::orthonormal_frame(&hv, n)?;
    let dm: Vec<f64> = (0..n * n).map(|a| (h[a].value() - e2f.value() * g[a].value()) / scale).collect();
    let domg: Vec<f64> = (0..n).map(|i| base.omega[i].value() - (om[i].value() - f.d1(i))).collect();
    let mut wm: f64 = 0.0;
    for a in 0..n {
        let s: f64 = (0..n).map(|i| frame[a * n + i] * domg[i]).sum();
        wm = wm.max(s.abs());
    }
    Ok(dm.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(wm))
}

// ---------------------------------------------------------------------------
// Complex structures from congruences

#[derive(Clone, Debug)]
pub struct JFromCongruence {
    /// J^k_i at k·4 + i.
    pub j: Vec<f64>,
    /// Gauge form of D = D^sd − κξ − τχ relative to the chart metric.
    pub theta: Vec<f64>,
    pub dj_residual: f64,
    /// The Kähler–Weyl connection recovered from J alone (trace formula).
    pub kw: KahlerWeyl,
    /// |θ − θ_trace| in the chart frame.
    pub theta_mismatch: f64,
    /// J² + 1 and orthogonality defect.
    pub defect: f64,
    /// Base invariants (chart gauge of the base) at the projected point.
    pub tau: f64,
    pub kappa: f64,
}

impl JFromCongruence {
    /// F^D(K, ·) in the chart frame, with K normalized; zero iff the
    /// Kähler–Weyl structure is locally scalar-flat Kähler along K.
    pub fn faraday_k(&self) -> f64 {
        let geo = &self.kw.geom;
        let n = 4;
        let f = geo.d_omega();
        let g = geo.metric_value();
        let k2 = g[15];
        let fk: Vec<f64> = (0..n).map(|j| f[3 * n + j] / k2.sqrt()).collect();
        let frame = geo.frame();
        (0..n).map(|a| (0..n).map(|i| frame[a * n + i] * fk[i]).sum::<f64>().abs()).fold(0.0, f64::max)
    }
}

struct LiftedJJets {
    g: Vec<Jet>,
    j: Vec<Jet>,
    k2: Jet,
    xi_flat: Vec<Jet>,
    chat_flat: Vec<Jet>,
    /// |χ̃|² in the chart metric for the horizontal lift χ̃ of the base χ.
    s: Jet,
}

fn lifted_j_jets(l: &LiftedChart, chi: &Congruence, p: &Point, order: u8) -> Result<LiftedJJets> {
    let n = 4;
    let c4 = &l.chart4;
    let mut ev = Evaluator::new(&p.coords, order);
    let g = c4.metric_jets(&mut ev)?;
    let chi_b = chi.chi.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
    let a = l.monopole.a.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
    let k2 = g[15];
    let xi_flat: Vec<Jet> = (0..n).map(|i| g[i * n + 3] * k2.sqrt().recip()).collect();
    let mut chit: Vec<Jet> = chi_b.clone();
    chit.push(-(0..3).map(|b| a[b] * chi_b[b]).sum::<Jet>());
    let mut s = g[0] * 0.0;
    for i in 0..n {
        for j in 0..n {
            s = s + g[i * n + j] * chit[i] * chit[j];
        }
    }
    let chat: Vec<Jet> = chit.iter().map(|x| *x * s.sqrt().recip()).collect();
    let chat_flat: Vec<Jet> = (0..n).map(|i| (0..n).map(|j| g[i * n + j] * chat[j]).sum()).collect();
    let sigma: Vec<Jet> = (0..16).map(|ij| xi_flat[ij / n] * chat_flat[ij % n] - xi_flat[ij % n] * chat_flat[ij / n]).collect();
    let ginv = inverse_jet(&g, n)?;
    let sq = det_jet(&g, n).sqrt();
    let st = hodge_star_generic(&sigma, n, 2, &ginv, sq, c4.orientation, l.conv);
    let om: Vec<Jet> = (0..16).map(|a| sigma[a] - st[a]).collect();
    // Ω_ij = J^k_i g_kj  ⇒  J^k_i = Ω_ij g^{jk}
    let j: Vec<Jet> = (0..16).map(|ki| (0..n).map(|jx| om[(ki % n) * n + jx] * ginv[jx * n + ki / n]).sum()).collect();
    Ok(LiftedJJets { g, j, k2, xi_flat, chat_flat, s })
}

/// The complex structure ξ∧χ − ∗(ξ∧χ) of a lift as a field.
pub struct LiftedJ<'a> {
    pub lift: &'a LiftedChart,
    pub chi: &'a Congruence,
}

impl JField for LiftedJ<'_> {
    fn jets(&self, p: &Point, order: u8) -> Result<Vec<Jet>> {
        Ok(lifted_j_jets(self.lift, self.chi, p, order)?.j)
    }
}

/// J = ξ∧χ − ∗(ξ∧χ) on the lift, checked against eligibility of χ.
pub fn j_from_congruence(l: &LiftedChart, chi: &Congruence, p: &Point) -> Result<JFromCongruence> {
    let bp = l.base_point(p)?;
    let inv = congruence_decompose(&l.base, chi, &bp)?;
    if inv.shear_norm > ELIGIBILITY_TOL || inv.accel_norm > ELIGIBILITY_TOL {
        return Err(GeomError::Ineligible(format!(
            "χ is not shear-free geodesic (shear {:e}, acceleration {:e})",
            inv.shear_norm, inv.accel_norm
        )));
    }
    j_from_congruence_unchecked(l, chi, p)
}

/// As `j_from_congruence` without the eligibility check (for controls).
pub fn j_from_congruence_unchecked(l: &LiftedChart, chi: &Congruence, p: &Point) -> Result<JFromCongruence> {
    let conv = l.conv;
    let n = 4;
    let bp = l.base_point(p)?;
    let inv = congruence_decompose(&l.base, chi, &bp)?;
    let c4 = &l.chart4;
    let lj = lifted_j_jets(l, chi, p, 3)?;
    let (g, jj, k2, xi_flat, chat_flat, s) = (lj.g, lj.j, lj.k2, lj.xi_flat, lj.chat_flat, lj.s);
    let jv: Vec<f64> = jj.iter().map(|x| x.value()).collect();
    let gv: Vec<f64> = g.iter().map(|x| x.value()).collect();
    let defect = crate::weyl::almost_hermitian_defect(&gv, &jv, n);
    let kw = kahler_weyl_from_jets(p, g.clone(), jj.clone(), c4.orientation, conv)?;

    // D = D^sd − κξ − τχ, all read in the chart gauge.
    let kf = KFrame::new(c4, &l.killing(), p, 1, conv)?;
    let sv = s.value().sqrt();
    let (tau4, kappa4) = (inv.tau / sv, inv.kappa / sv);
    let theta: Vec<f64> = (0..n)
        .map(|i| {
            0.5 * kf.omega_jt[i].value() - 0.5 * k2.d1(i) / k2.value() - kappa4 * xi_flat[i].value() - tau4 * chat_flat[i].value()
        })
        .collect();
    let th_jets: Vec<Jet> = theta.iter().map(|&v| Jet::constant(n, 0, v)).collect();
    let g0: Vec<Jet> = g.iter().map(|x| x.truncate(2)).collect();
    let geo = Geometry::from_jets(p.clone(), g0, th_jets, c4.orientation)?;
    let dj = covariant_derivative_11(&geo, &jj);
    let mut dj_low = vec![0.0; 64];
    for i in 0..n {
        for m in 0..n {
            for l2 in 0..n {
                dj_low[(i * n + m) * n + l2] = (0..n).map(|k| gv[m * n + k] * dj[(i * n + k) * n + l2]).sum();
            }
        }
    }
    let frame = geo.frame();
    let dj_residual = frame_max_norm_covariant(&dj_low, n, 3, &frame);
    let tr = kw.omega_value();
    let diff: Vec<f64> = (0..n).map(|i| theta[i] - tr[i]).collect();
    let theta_mismatch = (0..n).map(|a| (0..n).map(|i| frame[a * n + i] * diff[i]).sum::<f64>().abs()).fold(0.0, f64::max);
    Ok(JFromCongruence { j: jv, theta, dj_residual, kw, theta_mismatch, defect, tau: inv.tau, kappa: inv.kappa })
}

// ---------------------------------------------------------------------------
// Maxwell fields

#[derive(Clone, Copy, Debug)]
pub struct MaxwellParts {
    pub asd: f64,
    pub sd: f64,
}

/// dÃ₁ for Ã₁ = A₁ − (w₁/w)(dt + A), split into SD and ASD parts.
pub fn maxwell_from_monopole(l: &LiftedChart, m1: &MonopoleSolution, p: &Point) -> Result<MaxwellParts> {
    let bp = l.base_point(p)?;
    let r = monopole_residual(&l.base, m1, &bp)?;
    if r > 1e-6 {
        return Err(GeomError::Precondition(format!("second field is not a monopole (residual {:e})", r)));
    }
    let ratio = m1.w.clone() / l.monopole.w.clone();
    let mut at: Vec<Expr> = (0..3).map(|i| m1.a[i].clone() - ratio.clone() * l.monopole.a[i].clone()).collect();
    at.push(-ratio);
    let mut ev = Evaluator::new(&p.coords, 1);
    let aj = at.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
    let f: Vec<f64> = exterior_d_jets(&aj, 4, 1).iter().map(|x| x.value()).collect();
    let g = l.chart4.metric_value(p)?;
    let frame = linalg::orthonormal_frame(&g, 4)?;
    let part = |s: f64| frame_max_norm_covariant(&project_two_form(&f, &g, l.chart4.orientation, l.conv, s), 4, 2, &frame);
    Ok(MaxwellParts { asd: part(-1.0), sd: part(1.0) })
}

// ---------------------------------------------------------------------------
// Congruence of the quotient, measured upstairs

#[derive(Clone, Copy, Debug)]
pub struct QuotientCongruence {
    /// Divergence and twist of JK/|K| on the quotient, in the constant length gauge.
    pub tau: f64,
    pub kappa: f64,
    pub shear: f64,
    pub accel: f64,
    /// |K| in the chart metric (divide by it to read τ, κ in the chart gauge).
    pub k_norm: f64,
}

/// The congruence χ = JK/|K| on the quotient of M by K, via O'Neill: for
/// basic horizontal fields the quotient Levi-Civita derivative is the
/// horizontal part of the one upstairs.
pub fn quotient_congruence(m: &Chart, k: &[Expr], j: &dyn JField, p: &Point, conv: StarConvention) -> Result<QuotientCongruence> {
    let n = 4;
    let kf = KFrame::new(m, k, p, 2, conv)?;
    let ck = kf.conformal_killing()?;
    if ck > 1e-7 {
        return Err(GeomError::Precondition(format!("K is not a conformal vector field (residual {:e})", ck)));
    }
    let jj = j.jets(p, 2)?;
    let gh: Vec<Jet> = kf.ghat.iter().map(|x| x.truncate(1)).collect();
    let ghv: Vec<f64> = gh.iter().map(|x| x.value()).collect();
    let gi = linalg::inverse(&ghv, n)?;
    let kk: Vec<Jet> = kf.k.iter().map(|x| x.truncate(1)).collect();
    let mut chi: Vec<Jet> = (0..n).map(|a| (0..n).map(|i| jj[a * n + i].truncate(1) * kk[i]).sum()).collect();
    let mut nn = chi[0] * 0.0;
    for a in 0..n {
        for b in 0..n {
            nn = nn + gh[a * n + b] * chi[a] * chi[b];
        }
    }
    let r = nn.sqrt().recip();
    chi = chi.iter().map(|x| *x * r).collect();
    let chiv: Vec<f64> = chi.iter().map(|x| x.value()).collect();
    let kv: Vec<f64> = kk.iter().map(|x| x.value()).collect();
    let kfl: Vec<f64> = kf.kflat_hat.iter().map(|x| x.value()).collect();
    let om: Vec<f64> = kf.omega_jt.iter().map(|x| x.value()).collect();
    let om_up: Vec<f64> = (0..n).map(|a| (0..n).map(|b| gi[a * n + b] * om[b]).sum()).collect();
    let gam = |k: usize, i: usize, jx: usize| -> f64 {
        0.5 * (0..n).map(|l| gi[k * n + l] * (gh[l * n + jx].d1(i) + gh[l * n + i].d1(jx) - gh[i * n + jx].d1(l))).sum::<f64>()
    };
    // ∇̂_X χ for coordinate X = ∂_i
    let mut nab = vec![0.0; 16];
    for i in 0..n {
        for kx in 0..n {
            nab[i * n + kx] = chi[kx].d1(i) + (0..n).map(|jx| gam(kx, i, jx) * chiv[jx]).sum::<f64>();
        }
    }
    let ip = |u: &[f64], v: &[f64]| -> f64 { (0..n).map(|a| (0..n).map(|b| ghv[a * n + b] * u[a] * v[b]).sum::<f64>()).sum() };
    let horiz = |v: &[f64]| -> Vec<f64> {
        let c: f64 = (0..n).map(|a| kfl[a] * v[a]).sum();
        (0..n).map(|a| v[a] - c * kv[a]).collect()
    };
    // horizontal orthonormal frame e1, e2, e3 with e1 = χ
    let mut frame: Vec<Vec<f64>> = vec![chiv.clone()];
    for c in 0..n {
        let mut v = vec![0.0; n];
        v[c] = 1.0;
        v = horiz(&v);
        for e in &frame {
            let s = ip(&v, e);
            for a in 0..n {
                v[a] -= s * e[a];
            }
        }
        let l2 = ip(&v, &v);
        if l2 > 1e-8 && frame.len() < 3 {
            let s = l2.sqrt();
            frame.push(v.iter().map(|x| x / s).collect());
        }
    }
    if frame.len() != 3 {
        return Err(GeomError::Degenerate("could not build a horizontal frame".into()));
    }
    let om_chi: f64 = (0..n).map(|a| om[a] * chiv[a]).sum();
    // M(X, Y) = ⟨D^B_X χ, Y⟩
    let dbx = |x: &[f64]| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|kx| (0..n).map(|i| x[i] * nab[i * n + kx]).sum()).collect();
        let v = horiz(&v);
        let xc = ip(x, &chiv);
        (0..n).map(|a| v[a] + om_chi * x[a] - xc * om_up[a]).collect()
    };
    let mut mm = [[0.0; 3]; 3];
    for a in 0..3 {
        let d = dbx(&frame[a]);
        for b in 0..3 {
            mm[a][b] = ip(&d, &frame[b]);
        }
    }
    let sq = linalg::det(&ghv, n).sqrt() * m.orientation;
    let xi: Vec<f64> = kv.clone();
    let vol4 = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for jx in 0..n {
                for kx in 0..n {
                    for l in 0..n {
                        let e = levi_civita(&[i, jx, kx, l]);
                        if e != 0.0 {
                            s += e * a[i] * b[jx] * c[kx] * d[l];
                        }
                    }
                }
            }
        }
        s * sq
    };
    let sb = base_volume_sign(conv);
    let tau = 0.5 * (mm[1][1] + mm[2][2]);
    let mut kappa = 0.0;
    for a in 1..3 {
        for b in 1..3 {
            kappa += sb * vol4(&xi, &frame[0], &frame[a], &frame[b]) * mm[a][b];
        }
    }
    kappa *= 0.5;
    let shear = (0.5 * (mm[1][1] - mm[2][2])).abs().max((0.5 * (mm[1][2] + mm[2][1])).abs());
    let accel = mm[0][1].abs().max(mm[0][2].abs());
    Ok(QuotientCongruence { tau, kappa, shear, accel, k_norm: kf.k2.value().sqrt() })
}
