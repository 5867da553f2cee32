//! Weyl connections, curvature decomposition, SD/ASD Weyl parts and the
//! Kähler–Weyl construction.
//!
//! Index conventions: D_{∂i}∂j = Γ^k_{ij}∂k stored at k·n² + i·n + j, and
//! R(∂i,∂j)∂l = R^k_{lij}∂k stored at ((k·n + l)·n + i)·n + j.

use crate::chart::{Chart, Point};
use crate::error::{GeomError, Result};
use crate::expr::{Evaluator, Expr};
use crate::forms::{self, exterior_d_jets, hodge_star_generic, StarConvention};
use crate::jet::Jet;
use crate::linalg::{self, det_jet, frame_max_norm_covariant, inverse_jet};

/// A representative metric (the chart) plus the gauge 1-form ω: D = D^g + ω.
#[derive(Clone, Debug)]
pub struct WeylStructure {
    pub chart: Chart,
    pub omega: Vec<Expr>,
}

impl WeylStructure {
    pub fn new(chart: Chart, omega: Vec<Expr>) -> Result<WeylStructure> {
        if omega.len() != chart.dim() {
            return Err(GeomError::Invalid("ω must have one component per coordinate".into()));
        }
        Ok(WeylStructure { chart, omega })
    }

    pub fn exact(chart: Chart) -> WeylStructure {
        let n = chart.dim();
        WeylStructure { chart, omega: vec![Expr::zero(); n] }
    }

    pub fn from_text(chart: Chart, omega: &[&str]) -> Result<WeylStructure> {
        let om = omega.iter().map(|t| chart.parse(t)).collect::<Result<Vec<_>>>()?;
        WeylStructure::new(chart, om)
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Same structure in the gauge e^{2f} g: ω ↦ ω − df.
    pub fn regauge(&self, f: &Expr) -> Result<WeylStructure> {
        let n = self.dim();
        let factor = (Expr::num(2.0) * f.clone()).exp();
        let chart = self.chart.rescaled(&format!("{}~", self.chart.id), &factor)?;
        let omega = (0..n).map(|i| self.omega[i].clone() - f.diff(i)).collect();
        WeylStructure::new(chart, omega)
    }
}

/// Connection coefficients and their first derivatives at a point.
#[derive(Clone, Debug)]
pub struct ConnectionJet {
    pub n: usize,
    pub gamma: Vec<f64>,
    /// ∂_l Γ^k_{ij} at ((k·n + i)·n + j)·n + l.
    pub dgamma: Vec<f64>,
}

/// Jets of the metric, its inverse, ω and the Weyl connection at one point.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub n: usize,
    pub point: Point,
    pub g: Vec<Jet>,
    pub ginv: Vec<Jet>,
    pub sqrt_det: Jet,
    pub omega: Vec<Jet>,
    pub gamma: Vec<Jet>,
    pub orientation: f64,
}

impl Geometry {
    /// Evaluate with metric jets of the given order (Γ is one order lower).
    pub fn at(ws: &WeylStructure, p: &Point, order: u8) -> Result<Geometry> {
        let mut ev = Evaluator::new(&p.coords, order);
        let g = ws.chart.metric_jets(&mut ev)?;
        let omega = ws.omega.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
        Geometry::from_jets(p.clone(), g, omega, ws.chart.orientation)
    }

    pub fn from_jets(point: Point, g: Vec<Jet>, omega: Vec<Jet>, orientation: f64) -> Result<Geometry> {
        let n = omega.len();
        if g.len() != n * n {
            return Err(GeomError::Invalid("metric/ω size mismatch".into()));
        }
        let gv: Vec<f64> = g.iter().map(|j| j.value()).collect();
        linalg::orthonormal_frame(&gv, n)?;
        let ginv = inverse_jet(&g, n)?;
        let sqrt_det = det_jet(&g, n).sqrt();
        let mut geo = Geometry { n, point, g, ginv, sqrt_det, omega, gamma: Vec::new(), orientation };
        geo.gamma = geo.weyl_gamma();
        Ok(geo)
    }

    fn weyl_gamma(&self) -> Vec<Jet> {
        let n = self.n;
        let (g, gi, om) = (&self.g, &self.ginv, &self.omega);
        let om_up: Vec<Jet> = (0..n).map(|k| (0..n).map(|l| gi[k * n + l] * om[l]).sum()).collect();
        let mut out = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut lc: Jet = (0..n)
                        .map(|l| gi[k * n + l] * (g[l * n + j].partial(i) + g[l * n + i].partial(j) - g[i * n + j].partial(l)))
                        .sum::<Jet>()
                        * 0.5;
                    if k == i {
                        lc = lc + om[j];
                    }
                    if k == j {
                        lc = lc + om[i];
                    }
                    lc = lc - g[i * n + j] * om_up[k];
                    out.push(lc);
                }
            }
        }
        out
    }

    pub fn metric_value(&self) -> Vec<f64> {
        self.g.iter().map(|j| j.value()).collect()
    }

    pub fn frame(&self) -> Vec<f64> {
        linalg::orthonormal_frame(&self.metric_value(), self.n).expect("checked at construction")
    }

    pub fn connection(&self) -> ConnectionJet {
        let n = self.n;
        let gamma = self.gamma.iter().map(|j| j.value()).collect();
        let mut dgamma = Vec::with_capacity(n.pow(4));
        for gj in &self.gamma {
            for l in 0..n {
                dgamma.push(if gj.order() >= 1 { gj.d1(l) } else { f64::NAN });
            }
        }
        ConnectionJet { n, gamma, dgamma }
    }

    /// Curvature jets of the Weyl connection on TM.
    pub fn riemann(&self) -> Vec<Jet> {
        curvature_of(&self.gamma, self.n)
    }

    /// Max over (k,i,j) of |D_k g_ij + 2 ω_k g_ij| in an orthonormal frame.
    pub fn compatibility_residual(&self) -> f64 {
        let n = self.n;
        let (g, ga) = (&self.g, &self.gamma);
        let mut t = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = g[i * n + j].d1(k) + 2.0 * self.omega[k].value() * g[i * n + j].value();
                    for m in 0..n {
                        v -= ga[m * n * n + k * n + i].value() * g[m * n + j].value();
                        v -= ga[m * n * n + k * n + j].value() * g[i * n + m].value();
                    }
                    t[(k * n + i) * n + j] = v;
                }
            }
        }
        frame_max_norm_covariant(&t, n, 3, &self.frame())
    }

    /// Exterior derivative of ω (needs ω jets of order ≥ 1).
    pub fn d_omega(&self) -> Vec<f64> {
        exterior_d_jets(&self.omega, self.n, 1).iter().map(|j| j.value()).collect()
    }

    pub fn decompose(&self) -> CurvatureDecomposition {
        let r: Vec<f64> = self.riemann().iter().map(|j| j.value()).collect();
        let mut d = CurvatureDecomposition::from_riemann(self.n, &r, &self.metric_value());
        d.d_omega = self.d_omega();
        d
    }

    pub fn sqrt_det_value(&self) -> f64 {
        self.sqrt_det.value()
    }
    pub fn ginv_value(&self) -> Vec<f64> {
        self.ginv.iter().map(|j| j.value()).collect()
    }
}

/// R^k_{lij} = ∂_iΓ^k_{jl} − ∂_jΓ^k_{il} + Γ^k_{im}Γ^m_{jl} − Γ^k_{jm}Γ^m_{il}
/// for arbitrary (possibly torsionful) coefficients Γ^k_{ij}.
pub fn curvature_of(gamma: &[Jet], n: usize) -> Vec<Jet> {
    let ga = |k: usize, i: usize, j: usize| gamma[(k * n + i) * n + j];
    let mut out = Vec::with_capacity(n.pow(4));
    for k in 0..n {
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = ga(k, j, l).partial(i) - ga(k, i, l).partial(j);
                    for m in 0..n {
                        v = v + ga(k, i, m).truncate(v.order()) * ga(m, j, l).truncate(v.order())
                            - ga(k, j, m).truncate(v.order()) * ga(m, i, l).truncate(v.order());
                    }
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Split of the curvature of a Weyl connection (weight 1).
#[derive(Clone, Debug)]
pub struct CurvatureDecomposition {
    pub n: usize,
    pub g: Vec<f64>,
    pub riemann: Vec<f64>,
    pub weyl: Vec<f64>,
    /// Ric_{jl} = R^i_{lij}, not symmetric in general.
    pub ricci: Vec<f64>,
    pub r0: Vec<f64>,
    pub scal: f64,
    /// F_ij = (1/n) R^k_{kij}.
    pub faraday: Vec<f64>,
    /// Normalized Ricci r = r0 + scal/(2n(n−1)) g − ½F.
    pub r: Vec<f64>,
    pub d_omega: Vec<f64>,
}

impl CurvatureDecomposition {
    pub fn from_riemann(n: usize, rm: &[f64], g: &[f64]) -> CurvatureDecomposition {
        let ginv = linalg::inverse(g, n).expect("metric invertible");
        let at = |k: usize, l: usize, i: usize, j: usize| rm[((k * n + l) * n + i) * n + j];
        let mut faraday = vec![0.0; n * n];
        let mut ricci = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                faraday[i * n + j] = (0..n).map(|k| at(k, k, i, j)).sum::<f64>() / n as f64;
                ricci[i * n + j] = (0..n).map(|m| at(m, j, m, i)).sum();
            }
        }
        let sym = |a: &[f64], i: usize, j: usize| 0.5 * (a[i * n + j] + a[j * n + i]);
        let scal: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| ginv[i * n + j] * sym(&ricci, i, j)).sum();
        let mut r0 = vec![0.0; n * n];
        if n > 2 {
            for i in 0..n {
                for j in 0..n {
                    r0[i * n + j] = (sym(&ricci, i, j) - scal / n as f64 * g[i * n + j]) / (n as f64 - 2.0);
                }
            }
        }
        let c = scal / (2.0 * n as f64 * (n as f64 - 1.0));
        let r: Vec<f64> = (0..n * n).map(|a| r0[a] + c * g[a] - 0.5 * faraday[a]).collect();
        let assembled = assemble(n, g, &ginv, &r, &faraday);
        let weyl = rm.iter().zip(&assembled).map(|(a, b)| a - b).collect();
        CurvatureDecomposition { n, g: g.to_vec(), riemann: rm.to_vec(), weyl, ricci, r0, scal, faraday, r, d_omega: Vec::new() }
    }

    /// R rebuilt from (W, r, F); should equal the raw curvature.
    pub fn reassembled(&self) -> Vec<f64> {
        let ginv = linalg::inverse(&self.g, self.n).expect("metric invertible");
        let base = assemble(self.n, &self.g, &ginv, &self.r, &self.faraday);
        base.iter().zip(&self.weyl).map(|(a, b)| a + b).collect()
    }

    pub fn frame(&self) -> Vec<f64> {
        linalg::orthonormal_frame(&self.g, self.n).expect("metric positive definite")
    }

    /// Max-norm of a (1,3) tensor in the orthonormal frame (first index lowered).
    pub fn norm_13(&self, t: &[f64]) -> f64 {
        frame_max_norm_covariant(&lower_first(t, &self.g, self.n), self.n, 4, &self.frame())
    }

    pub fn norm_2(&self, t: &[f64]) -> f64 {
        frame_max_norm_covariant(t, self.n, 2, &self.frame())
    }

    pub fn reassembly_residual(&self) -> f64 {
        let diff: Vec<f64> = self.riemann.iter().zip(self.reassembled()).map(|(a, b)| a - b).collect();
        self.norm_13(&diff)
    }

    pub fn r0_norm(&self) -> f64 {
        self.norm_2(&self.r0)
    }

    /// Traces of W that must vanish: W^k_{kij} and W^i_{lij}.
    pub fn weyl_trace_residual(&self) -> f64 {
        let n = self.n;
        let at = |k: usize, l: usize, i: usize, j: usize| self.weyl[((k * n + l) * n + i) * n + j];
        let mut t1 = vec![0.0; n * n];
        let mut t2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                t1[i * n + j] = (0..n).map(|k| at(k, k, i, j)).sum();
                t2[i * n + j] = (0..n).map(|m| at(m, j, m, i)).sum();
            }
        }
        self.norm_2(&t1).max(self.norm_2(&t2))
    }

    /// Fully covariant ⟨W_{U,V}X, Y⟩ at index (u,v,x,y).
    pub fn weyl_bilinear(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n.pow(4)];
        for u in 0..n {
            for v in 0..n {
                for x in 0..n {
                    for y in 0..n {
                        out[((u * n + v) * n + x) * n + y] =
                            (0..n).map(|k| self.g[y * n + k] * self.weyl[((k * n + x) * n + u) * n + v]).sum();
                    }
                }
            }
        }
        out
    }

    /// Max-norm of the SD or ASD part of W (4D), labeled by `conv` and `orientation`.
    pub fn weyl_part_norm(&self, orientation: f64, conv: StarConvention, selfdual: bool) -> f64 {
        let wb = self.weyl_bilinear();
        let part = project_pairs(&wb, &self.g, orientation, conv, if selfdual { 1.0 } else { -1.0 });
        frame_max_norm_covariant(&part, 4, 4, &self.frame())
    }

    /// Standard Ricci residuals of the representative metric (meaningful for ω = 0).
    pub fn ricci_norm(&self) -> f64 {
        self.norm_2(&self.ricci)
    }

    pub fn einstein_residual(&self) -> f64 {
        let n = self.n;
        let t: Vec<f64> = (0..n * n).map(|a| 0.5 * (self.ricci[a] + self.ricci[(a % n) * n + a / n]) - self.scal / n as f64 * self.g[a]).collect();
        self.norm_2(&t)
    }
}

fn lower_first(t: &[f64], g: &[f64], n: usize) -> Vec<f64> {
    let rest = t.len() / n;
    let mut out = vec![0.0; t.len()];
    for m in 0..n {
        for r in 0..rest {
            out[m * rest + r] = (0..n).map(|k| g[m * n + k] * t[k * rest + r]).sum();
        }
    }
    out
}

/// F δ^k_l − (r_il δ^k_j − g_jl r_i^k) + (r_jl δ^k_i − g_il r_j^k).
fn assemble(n: usize, g: &[f64], ginv: &[f64], r: &[f64], f: &[f64]) -> Vec<f64> {
    let r_up = |i: usize, k: usize| -> f64 { (0..n).map(|m| ginv[k * n + m] * r[i * n + m]).sum() };
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut out = vec![0.0; n.pow(4)];
    for k in 0..n {
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[((k * n + l) * n + i) * n + j] = f[i * n + j] * d(k, l)
                        - (r[i * n + l] * d(k, j) - g[j * n + l] * r_up(i, k))
                        + (r[j * n + l] * d(k, i) - g[i * n + l] * r_up(j, k));
                }
            }
        }
    }
    out
}

/// Apply ½(1 + s∗) to both 2-form pairs of a covariant 4-tensor in 4D.
pub fn project_pairs(t: &[f64], g: &[f64], orientation: f64, conv: StarConvention, s: f64) -> Vec<f64> {
    let ginv = linalg::inverse(g, 4).expect("metric invertible");
    let sq = linalg::det(g, 4).sqrt();
    let p = |x: &[f64], slot: usize| -> Vec<f64> {
        let st = forms::star_on_pair(x, 4, slot, &ginv, sq, orientation, conv);
        x.iter().zip(&st).map(|(a, b)| 0.5 * (a + s * b)).collect()
    };
    p(&p(t, 0), 2)
}

/// Apply ½(1 + s∗) to a 2-form in 4D.
pub fn project_two_form(t: &[f64], g: &[f64], orientation: f64, conv: StarConvention, s: f64) -> Vec<f64> {
    let ginv = linalg::inverse(g, 4).expect("metric invertible");
    let sq = linalg::det(g, 4).sqrt();
    let st = hodge_star_generic(t, 4, 2, &ginv, sq, orientation, conv);
    t.iter().zip(&st).map(|(a, b)| 0.5 * (a + s * b)).collect()
}

pub fn weyl_connection(ws: &WeylStructure, p: &Point) -> Result<ConnectionJet> {
    Ok(Geometry::at(ws, p, 2)?.connection())
}

pub fn curvature_decompose(ws: &WeylStructure, p: &Point) -> Result<CurvatureDecomposition> {
    Ok(Geometry::at(ws, p, 2)?.decompose())
}

/// Max-norm of W⁻ (or W⁺) at p, labeled by the chart orientation and `conv`.
pub fn weyl_part_residual(ws: &WeylStructure, p: &Point, conv: StarConvention, selfdual: bool) -> Result<f64> {
    if ws.dim() != 4 {
        return Err(GeomError::Invalid("W± needs dimension 4".into()));
    }
    let d = curvature_decompose(ws, p)?;
    Ok(d.weyl_part_norm(ws.chart.orientation, conv, selfdual))
}

// ---------------------------------------------------------------------------
// Complex structures and the Kähler–Weyl connection

/// Anything that yields jets of a (1,1)-tensor J^k_i (index k·n + i) at a point.
pub trait JField {
    fn jets(&self, p: &Point, order: u8) -> Result<Vec<Jet>>;
}

/// J given by expressions, J(∂_i) = J^k_i ∂_k with `j[k*n + i]`.
#[derive(Clone, Debug)]
pub struct ComplexStructureField {
    pub j: Vec<Expr>,
}

impl JField for ComplexStructureField {
    fn jets(&self, p: &Point, order: u8) -> Result<Vec<Jet>> {
        let mut ev = Evaluator::new(&p.coords, order);
        self.j.iter().map(|e| ev.real(e)).collect()
    }
}

/// Checks J² = −1 and orthogonality; returns the worst violation.
pub fn almost_hermitian_defect(g: &[f64], j: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for i in 0..n {
            let sq: f64 = (0..n).map(|m| j[k * n + m] * j[m * n + i]).sum();
            worst = worst.max((sq + if k == i { 1.0 } else { 0.0 }).abs());
            let mut gg = 0.0;
            for a in 0..n {
                for b in 0..n {
                    gg += g[a * n + b] * j[a * n + k] * j[b * n + i];
                }
            }
            let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            worst = worst.max((gg - g[k * n + i]).abs() / scale);
        }
    }
    worst
}

/// The Kähler–Weyl data of (g, J) at a point.
#[derive(Clone, Debug)]
pub struct KahlerWeyl {
    pub geom: Geometry,
    pub j: Vec<Jet>,
    /// Ω_ij = ⟨J∂i, ∂j⟩.
    pub omega_j: Vec<Jet>,
    pub dj_residual: f64,
    /// Eigenvalue of Ω_J under the star used for labeling (±1).
    pub omega_type: f64,
    pub conv: StarConvention,
}

/// Build the unique Weyl derivative with d^DΩ trace-free (4D: d^DΩ = 0),
/// ω = −tr(dΩ)/(2(n−2)), and measure DJ.
pub fn kahler_weyl_at(chart: &Chart, jf: &dyn JField, p: &Point, order: u8, conv: StarConvention) -> Result<KahlerWeyl> {
    let n = chart.dim();
    if n != 4 {
        return Err(GeomError::Invalid("Kähler–Weyl construction needs dimension 4".into()));
    }
    let mut ev = Evaluator::new(&p.coords, order);
    let g = chart.metric_jets(&mut ev)?;
    kahler_weyl_from_jets(p, g, jf.jets(p, order)?, chart.orientation, conv)
}

pub fn kahler_weyl_from_jets(p: &Point, g: Vec<Jet>, j: Vec<Jet>, orientation: f64, conv: StarConvention) -> Result<KahlerWeyl> {
    let n = 4;
    let gv: Vec<f64> = g.iter().map(|x| x.value()).collect();
    let jv: Vec<f64> = j.iter().map(|x| x.value()).collect();
    let defect = almost_hermitian_defect(&gv, &jv, n);
    if defect > 1e-9 {
        return Err(GeomError::Precondition(format!("J is not an orthogonal almost complex structure (defect {:e})", defect)));
    }
    let mut om = Vec::with_capacity(n * n);
    for i in 0..n {
        for jj in 0..n {
            om.push((0..n).map(|k| j[k * n + i] * g[k * n + jj]).sum::<Jet>());
        }
    }
    let d_om = exterior_d_jets(&om, n, 2);
    let om_low: Vec<Jet> = om.iter().map(|x| x.truncate(d_om[0].order())).collect();
    let e = inverse_jet(&om_low, n)?;
    let mut gamma = Vec::with_capacity(n);
    for z in 0..n {
        let mut tr = d_om[0] * 0.0;
        for i in 0..n {
            for b in 0..n {
                tr = tr + d_om[(i * n + b) * n + z] * e[b * n + i];
            }
        }
        gamma.push(tr * (-1.0 / (2.0 * (n as f64 - 2.0))));
    }
    let geom = Geometry::from_jets(p.clone(), g, gamma, orientation)?;
    let dj = covariant_derivative_11(&geom, &j);
    let mut dj_low = vec![0.0; n * n * n];
    for i in 0..n {
        for m in 0..n {
            for l in 0..n {
                dj_low[(i * n + m) * n + l] = (0..n).map(|k| gv[m * n + k] * dj[(i * n + k) * n + l]).sum();
            }
        }
    }
    let dj_residual = frame_max_norm_covariant(&dj_low, n, 3, &geom.frame());
    let omv: Vec<f64> = om.iter().map(|x| x.value()).collect();
    let st = hodge_star_generic(&omv, n, 2, &geom.ginv_value(), geom.sqrt_det_value(), orientation, conv);
    let dot: f64 = omv.iter().zip(&st).map(|(a, b)| a * b).sum();
    let omega_type = if dot >= 0.0 { 1.0 } else { -1.0 };
    Ok(KahlerWeyl { geom, j, omega_j: om, dj_residual, omega_type, conv })
}

/// (D_i J)^k_l = ∂_i J^k_l + Γ^k_{im} J^m_l − Γ^m_{il} J^k_m, at (i·n + k)·n + l.
pub fn covariant_derivative_11(geom: &Geometry, j: &[Jet]) -> Vec<f64> {
    let n = geom.n;
    let ga = |k: usize, i: usize, jj: usize| geom.gamma[(k * n + i) * n + jj].value();
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                let mut v = j[k * n + l].d1(i);
                for m in 0..n {
                    v += ga(k, i, m) * j[m * n + l].value() - ga(m, i, l) * j[k * n + m].value();
                }
                out[(i * n + k) * n + l] = v;
            }
        }
    }
    out
}

impl KahlerWeyl {
    pub fn omega_value(&self) -> Vec<f64> {
        self.geom.omega.iter().map(|x| x.value()).collect()
    }

    fn jv(&self) -> Vec<f64> {
        self.j.iter().map(|x| x.value()).collect()
    }

    /// F^D in the eigenspace of the star containing Ω_J (F⁻ when Ω_J is ASD).
    pub fn f_minus(&self, dec: &CurvatureDecomposition) -> Vec<f64> {
        project_two_form(&dec.faraday, &dec.g, self.geom.orientation, self.conv, self.omega_type)
    }

    /// Imaginary part of ρ^D: (assembled from r0, scal, F⁻; direct curvature trace).
    pub fn ricci_form(&self) -> (Vec<f64>, Vec<f64>) {
        let n = 4;
        let dec = self.geom.decompose();
        let jv = self.jv();
        let fm = self.f_minus(&dec);
        let omv: Vec<f64> = self.omega_j.iter().map(|x| x.value()).collect();
        let mut assembled = vec![0.0; 16];
        for x in 0..n {
            for y in 0..n {
                let mut v = 0.25 * dec.scal * omv[x * n + y];
                for k in 0..n {
                    v += 2.0 * jv[k * n + x] * dec.r0[k * n + y] + 2.0 * jv[k * n + x] * fm[k * n + y];
                }
                assembled[x * n + y] = v;
            }
        }
        let ginv = linalg::inverse(&dec.g, n).expect("metric invertible");
        let mut direct = vec![0.0; 16];
        for x in 0..n {
            for y in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    for q in 0..n {
                        for m in 0..n {
                            for pp in 0..n {
                                s += ginv[l * n + q] * dec.riemann[((m * n + l) * n + x) * n + y] * dec.g[m * n + pp] * jv[pp * n + q];
                            }
                        }
                    }
                }
                direct[x * n + y] = -0.5 * s;
            }
        }
        (assembled, direct)
    }

    /// Max-norm difference of the two Ricci-form routes.
    pub fn ricci_form_residual(&self) -> f64 {
        let (a, b) = self.ricci_form();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        frame_max_norm_covariant(&d, 4, 2, &self.geom.frame())
    }

    /// Norm of the part of a 2-form of Ω_J's type (the ASD part when Ω_J is ASD).
    pub fn same_type_part_norm(&self, t: &[f64]) -> f64 {
        let g = self.geom.metric_value();
        let part = project_two_form(t, &g, self.geom.orientation, self.conv, self.omega_type);
        frame_max_norm_covariant(&part, 4, 2, &self.geom.frame())
    }

    /// |W⁻ (curvature route) − W⁻ (formula route)| where "−" is Ω_J's type.
    pub fn wminus_formula_residual(&self) -> f64 {
        let n = 4;
        let dec = self.geom.decompose();
        let g = &dec.g;
        let s = self.omega_type;
        let wb = dec.weyl_bilinear();
        let w_minus = project_pairs(&wb, g, self.geom.orientation, self.conv, s);
        let omv: Vec<f64> = self.omega_j.iter().map(|x| x.value()).collect();
        let jv = self.jv();
        let fm = self.f_minus(&dec);
        let mut jf = vec![0.0; 16];
        for x in 0..n {
            for y in 0..n {
                jf[x * n + y] = (0..n).map(|k| jv[k * n + x] * fm[k * n + y]).sum();
            }
        }
        let mut gg = vec![0.0; 256];
        for u in 0..n {
            for v in 0..n {
                for x in 0..n {
                    for y in 0..n {
                        gg[((u * n + v) * n + x) * n + y] = g[u * n + x] * g[v * n + y] - g[u * n + y] * g[v * n + x];
                    }
                }
            }
        }
        let proj = project_pairs(&gg, g, self.geom.orientation, self.conv, s);
        let mut formula = vec![0.0; 256];
        for u in 0..n {
            for v in 0..n {
                for x in 0..n {
                    for y in 0..n {
                        let a = (u * n + v) * n * n + x * n + y;
                        formula[a] = 0.25 * dec.scal * (proj[a] / 3.0 - 0.5 * omv[u * n + v] * omv[x * n + y])
                            - 0.5 * (jf[u * n + v] * omv[x * n + y] + omv[u * n + v] * jf[x * n + y]);
                    }
                }
            }
        }
        let d: Vec<f64> = w_minus.iter().zip(&formula).map(|(a, b)| a - b).collect();
        frame_max_norm_covariant(&d, 4, 4, &dec.frame())
    }
}

/// (ω at p, DJ residual) for the Kähler–Weyl structure determined by J.
pub fn kahler_weyl_from_j(chart: &Chart, jf: &dyn JField, p: &Point) -> Result<(Vec<f64>, f64)> {
    let kw = kahler_weyl_at(chart, jf, p, 2, StarConvention::Tilde)?;
    Ok((kw.omega_value(), kw.dj_residual))
}

/// Im ρ^D assembled from (r0, scal, F⁻) using the KW structure of J on ws's chart.
pub fn ricci_form(ws: &WeylStructure, jf: &dyn JField, p: &Point) -> Result<Vec<f64>> {
    let kw = kahler_weyl_with_omega(ws, jf, p, StarConvention::Tilde)?;
    Ok(kw.ricci_form().0)
}

pub fn wminus_formula_residual(ws: &WeylStructure, jf: &dyn JField, p: &Point) -> Result<f64> {
    Ok(kahler_weyl_with_omega(ws, jf, p, StarConvention::Tilde)?.wminus_formula_residual())
}

/// Kähler–Weyl data using the ω carried by `ws` instead of the trace formula.
pub fn kahler_weyl_with_omega(ws: &WeylStructure, jf: &dyn JField, p: &Point, conv: StarConvention) -> Result<KahlerWeyl> {
    let kw = kahler_weyl_at(&ws.chart, jf, p, 3, conv)?;
    let geom = Geometry::at(ws, p, 3)?;
    let dj = covariant_derivative_11(&geom, &kw.j);
    let gv = geom.metric_value();
    let n = 4;
    let mut dj_low = vec![0.0; 64];
    for i in 0..n {
        for m in 0..n {
            for l in 0..n {
                dj_low[(i * n + m) * n + l] = (0..n).map(|k| gv[m * n + k] * dj[(i * n + k) * n + l]).sum();
            }
        }
    }
    let dj_residual = frame_max_norm_covariant(&dj_low, n, 3, &geom.frame());
    Ok(KahlerWeyl { geom, dj_residual, ..kw })
}
