//! Congruences on Weyl 3-spaces: divergence, twist, shear, acceleration, the
//! Einstein–Weyl and monopole residuals, hyperCR flatness and Jacobi transport.
//!
//! All quantities live in the chart gauge. A section of L^w picks up w·ω under
//! D^B, so weight −1 objects (τ, κ, w, χ) use D = d − ω. Equations containing
//! the star of a 2-form use the `Paper` star convention, the one their signs
//! were worked out in.

use crate::chart::{Chart, Point};
use crate::error::{GeomError, Result};
use crate::expr::{Evaluator, Expr};
use crate::jet::Jet;
use crate::linalg::{self, frame_max_norm_covariant, levi_civita};
use crate::weyl::{curvature_of, CurvatureDecomposition, Geometry, WeylStructure};

/// Threshold below which a congruence counts as shear-free or geodesic.
pub const ELIGIBILITY_TOL: f64 = 1e-7;

/// A unit vector field, contravariant components in chart coordinates.
#[derive(Clone, Debug)]
pub struct Congruence {
    pub chi: Vec<Expr>,
}

impl Congruence {
    pub fn new(chi: Vec<Expr>) -> Congruence {
        Congruence { chi }
    }

    pub fn from_text(chart: &Chart, comps: &[&str]) -> Result<Congruence> {
        Ok(Congruence { chi: comps.iter().map(|t| chart.parse(t)).collect::<Result<Vec<_>>>()? })
    }
}

#[derive(Clone, Debug)]
pub struct CongruenceInvariants {
    pub tau: f64,
    pub kappa: f64,
    /// Covariant symmetric trace-free shear Σ_ij.
    pub sigma: Vec<f64>,
    /// Covariant acceleration a_j = ⟨D_χχ, ∂j⟩.
    pub accel: Vec<f64>,
    pub shear_norm: f64,
    pub accel_norm: f64,
    /// |M − [τ(g − χχ) + κ∗χ + Σ + χ⊗a]| in an orthonormal frame.
    pub reassembly: f64,
}

/// Jets of everything the congruence equations need at one point.
#[derive(Clone, Debug)]
pub struct CongruenceJets {
    pub geom: Geometry,
    pub chi: Vec<Jet>,
    /// χ lowered with g.
    pub chi_flat: Vec<Jet>,
    /// M_ij = ⟨D_iχ, ∂j⟩.
    pub m: Vec<Jet>,
    pub tau: Jet,
    pub kappa: Jet,
    /// vol_{ijk} = √det g · ε_{ijk} · orientation.
    pub vol: Vec<Jet>,
}

impl CongruenceJets {
    /// `order` is the order of the metric jets; τ and κ come out one lower.
    pub fn at(ws: &WeylStructure, chi: &Congruence, p: &Point, order: u8) -> Result<CongruenceJets> {
        if ws.dim() != 3 || chi.chi.len() != 3 {
            return Err(GeomError::Invalid("congruences live on 3-dimensional Weyl spaces".into()));
        }
        let geom = Geometry::at(ws, p, order)?;
        let mut ev = Evaluator::new(&p.coords, order);
        let chi_j = chi.chi.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
        CongruenceJets::from_jets(geom, chi_j)
    }

    pub fn from_jets(geom: Geometry, chi: Vec<Jet>) -> Result<CongruenceJets> {
        let n = 3;
        let g = &geom.g;
        let norm2: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[i * n + j].value() * chi[i].value() * chi[j].value()).sum();
        if (norm2.sqrt() - 1.0).abs() > 1e-10 {
            return Err(GeomError::Precondition(format!("χ is not unit: |χ| = {}", norm2.sqrt())));
        }
        let chi_flat: Vec<Jet> = (0..n).map(|i| (0..n).map(|j| g[i * n + j] * chi[j]).sum()).collect();
        let ga = &geom.gamma;
        let mut m_up = Vec::with_capacity(9);
        for i in 0..n {
            for k in 0..n {
                let mut v = chi[k].partial(i) - geom.omega[i] * chi[k];
                for j in 0..n {
                    v = v + ga[(k * n + i) * n + j] * chi[j];
                }
                m_up.push(v);
            }
        }
        let m: Vec<Jet> = (0..n * n)
            .map(|a| {
                let (i, j) = (a / n, a % n);
                (0..n).map(|l| m_up[i * n + l] * g[l * n + j]).sum()
            })
            .collect();
        let vol: Vec<Jet> = (0..27).map(|a| geom.sqrt_det * (levi_civita(&[a / 9, (a / 3) % 3, a % 3]) * geom.orientation)).collect();
        let tau: Jet = (0..n).map(|i| m_up[i * n + i]).sum::<Jet>() * 0.5;
        let gi = &geom.ginv;
        let mut kappa = tau * 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut sc = tau * 0.0;
                for a in 0..n {
                    for b in 0..n {
                        let star = (0..n).map(|k| vol[(k * n + a) * n + b] * chi[k]).sum::<Jet>();
                        sc = sc + gi[i * n + a] * gi[j * n + b] * star;
                    }
                }
                kappa = kappa + sc * m[i * n + j];
            }
        }
        kappa = kappa * 0.5;
        Ok(CongruenceJets { geom, chi, chi_flat, m, tau, kappa, vol })
    }

    pub fn frame(&self) -> Vec<f64> {
        self.geom.frame()
    }

    fn v(x: &[Jet]) -> Vec<f64> {
        x.iter().map(|j| j.value()).collect()
    }

    /// ∗χ as a 2-form: (∗χ)_ij = vol_{kij} χ^k.
    pub fn star_chi(&self) -> Vec<f64> {
        (0..9).map(|a| (0..3).map(|k| self.vol[k * 9 + a].value() * self.chi[k].value()).sum()).collect()
    }

    pub fn invariants(&self) -> CongruenceInvariants {
        let n = 3;
        let m = Self::v(&self.m);
        let g = self.geom.metric_value();
        let chi = Self::v(&self.chi);
        let cf = Self::v(&self.chi_flat);
        let (tau, kappa) = (self.tau.value(), self.kappa.value());
        let accel: Vec<f64> = (0..n).map(|j| (0..n).map(|i| chi[i] * m[i * n + j]).sum()).collect();
        let mut sigma = vec![0.0; 9];
        for i in 0..n {
            for j in 0..n {
                let p = |a: usize, b: usize| m[a * n + b] - cf[a] * accel[b];
                sigma[i * n + j] = 0.5 * (p(i, j) + p(j, i)) - tau * (g[i * n + j] - cf[i] * cf[j]);
            }
        }
        let sc = self.star_chi();
        let model: Vec<f64> = (0..9)
            .map(|a| {
                let (i, j) = (a / n, a % n);
                tau * (g[a] - cf[i] * cf[j]) + kappa * sc[a] + sigma[a] + cf[i] * accel[j]
            })
            .collect();
        let e = self.frame();
        let diff: Vec<f64> = m.iter().zip(&model).map(|(x, y)| x - y).collect();
        CongruenceInvariants {
            tau,
            kappa,
            shear_norm: frame_max_norm_covariant(&sigma, n, 2, &e),
            accel_norm: frame_max_norm_covariant(&accel, n, 1, &e),
            reassembly: frame_max_norm_covariant(&diff, n, 2, &e),
            sigma,
            accel,
        }
    }

    /// D^B of a weight −1 scalar jet: d f − ω f (one order lower).
    pub fn d_weighted(&self, f: &Jet) -> Vec<Jet> {
        (0..3).map(|i| f.partial(i) - self.geom.omega[i].truncate(f.order() - 1) * f.truncate(f.order() - 1)).collect()
    }

    /// Residuals of (long1), (long2), (short1), (short2), (CReqn).
    pub fn special_monopole_residuals(&self, dec: &CurvatureDecomposition) -> Result<SpecialMonopoleResiduals> {
        let inv = self.invariants();
        if inv.shear_norm > ELIGIBILITY_TOL || inv.accel_norm > ELIGIBILITY_TOL {
            return Err(GeomError::Ineligible(format!(
                "congruence must be shear-free and geodesic (|Σ| = {:e}, |a| = {:e})",
                inv.shear_norm, inv.accel_norm
            )));
        }
        if self.tau.order() < 1 {
            return Err(GeomError::Invalid("special monopole residuals need metric jets of order 3".into()));
        }
        let n = 3;
        let e = self.frame();
        let g = self.geom.metric_value();
        let gi = self.geom.ginv_value();
        let chi = Self::v(&self.chi);
        let cf = Self::v(&self.chi_flat);
        let vol: Vec<f64> = Self::v(&self.vol);
        let f = &dec.faraday;
        let (tau, kappa, scal) = (self.tau.value(), self.kappa.value(), dec.scal);
        let dtau: Vec<f64> = Self::v(&self.d_weighted(&self.tau));
        let dkap: Vec<f64> = Self::v(&self.d_weighted(&self.kappa));
        let star1 = |a: &[f64]| -> Vec<f64> {
            let up: Vec<f64> = (0..n).map(|k| (0..n).map(|l| gi[k * n + l] * a[l]).sum()).collect();
            (0..9).map(|ij| (0..n).map(|k| vol[k * 9 + ij] * up[k]).sum()).collect()
        };
        // d(f χ♭) for a jet f: ∂_i(fχ_j) − ∂_j(fχ_i)
        let d_fchi = |fj: &Jet| -> Vec<f64> {
            let prod: Vec<Jet> = self.chi_flat.iter().map(|c| c.truncate(fj.order()) * *fj).collect();
            (0..9).map(|a| prod[a % n].partial(a / n).value() - prod[a / n].partial(a % n).value()).collect()
        };
        let iota_f: Vec<f64> = (0..n).map(|j| (0..n).map(|i| chi[i] * f[i * n + j]).sum()).collect();
        let star_chi = star1(&cf);
        let star_iota = star1(&iota_f);
        let dkc = d_fchi(&self.kappa);
        let dtc = d_fchi(&self.tau);
        let lhs1 = star1(&dtau);
        let long1: Vec<f64> = (0..9)
            .map(|a| lhs1[a] - (-0.5 * star_iota[a] - scal / 6.0 * star_chi[a] - (tau * tau + kappa * kappa) * star_chi[a] + dkc[a]))
            .collect();
        let lhs2 = star1(&dkap);
        let long2: Vec<f64> = (0..9).map(|a| lhs2[a] - (0.5 * f[a] - dtc[a])).collect();
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let short1 = dot(&chi, &dtau) + tau * tau - kappa * kappa + scal / 6.0;
        // `Paper`-convention star of F: −½ vol_{ijk} F^{ij}
        let f_up = crate::forms::raise_all(f, n, 2, &gi);
        let star_f: Vec<f64> = (0..n).map(|k| -0.5 * (0..9).map(|ij| vol[ij * 3 + k] * f_up[ij]).sum::<f64>()).collect();
        let short2 = dot(&chi, &dkap) + 2.0 * tau * kappa + 0.5 * dot(&chi, &star_f);
        // (CReqn) on an orthonormal basis of χ⊥
        let sc = self.star_chi();
        let mut cr: f64 = 0.0;
        for a in 0..n {
            let ea = &e[a * n..a * n + n];
            let proj: f64 = dot(ea, &cf);
            let x: Vec<f64> = (0..n).map(|i| ea[i] - proj * chi[i]).collect();
            // JX = (∗χ)(X,·)♯
            let jx_flat: Vec<f64> = (0..n).map(|j| (0..n).map(|i| x[i] * sc[i * n + j]).sum()).collect();
            let jx: Vec<f64> = (0..n).map(|k| (0..n).map(|l| gi[k * n + l] * jx_flat[l]).sum()).collect();
            let fx: f64 = (0..n).map(|i| (0..n).map(|j| chi[i] * f[i * n + j] * x[j]).sum::<f64>()).sum();
            cr = cr.max((dot(&dtau, &x) - dot(&dkap, &jx) + 0.5 * fx).abs());
        }
        let _ = g;
        Ok(SpecialMonopoleResiduals {
            long1: frame_max_norm_covariant(&long1, n, 2, &e),
            long2: frame_max_norm_covariant(&long2, n, 2, &e),
            short1: short1.abs(),
            short2: short2.abs(),
            creqn: cr,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecialMonopoleResiduals {
    pub long1: f64,
    pub long2: f64,
    pub short1: f64,
    pub short2: f64,
    pub creqn: f64,
}

impl SpecialMonopoleResiduals {
    pub fn max(&self) -> f64 {
        [self.long1, self.long2, self.short1, self.short2, self.creqn].iter().fold(0.0, |m, v| m.max(*v))
    }
}

pub fn congruence_decompose(ws: &WeylStructure, chi: &Congruence, p: &Point) -> Result<CongruenceInvariants> {
    Ok(CongruenceJets::at(ws, chi, p, 1)?.invariants())
}

/// Differences of shear and twist between two gauge forms on the same chart.
pub fn weyl_invariance_check(chart: &Chart, chi: &Congruence, p: &Point, omega1: &[Expr], omega2: &[Expr]) -> Result<(f64, f64)> {
    let a = congruence_decompose(&WeylStructure::new(chart.clone(), omega1.to_vec())?, chi, p)?;
    let b = congruence_decompose(&WeylStructure::new(chart.clone(), omega2.to_vec())?, chi, p)?;
    let e = linalg::orthonormal_frame(&chart.metric_value(p)?, 3)?;
    let d: Vec<f64> = a.sigma.iter().zip(&b.sigma).map(|(x, y)| x - y).collect();
    Ok((frame_max_norm_covariant(&d, 3, 2, &e), (a.kappa - b.kappa).abs()))
}

/// Max-norm of r0 in an orthonormal frame.
pub fn ew_residual(ws: &WeylStructure, p: &Point) -> Result<f64> {
    if ws.dim() != 3 {
        return Err(GeomError::Invalid("Einstein–Weyl residual is defined in dimension 3".into()));
    }
    Ok(crate::weyl::curvature_decompose(ws, p)?.r0_norm())
}

/// (w, A): w a weight −1 scalar in the chart gauge, A a 1-form.
#[derive(Clone, Debug)]
pub struct MonopoleSolution {
    pub w: Expr,
    pub a: Vec<Expr>,
}

impl MonopoleSolution {
    pub fn from_text(chart: &Chart, w: &str, a: &[&str]) -> Result<MonopoleSolution> {
        Ok(MonopoleSolution { w: chart.parse(w)?, a: a.iter().map(|t| chart.parse(t)).collect::<Result<Vec<_>>>()? })
    }
}

/// ∗D^B w − dA as a 2-form at p, plus its orthonormal max-norm.
pub fn monopole_defect(ws: &WeylStructure, m: &MonopoleSolution, p: &Point) -> Result<(Vec<f64>, f64)> {
    if ws.dim() != 3 || m.a.len() != 3 {
        return Err(GeomError::Invalid("monopoles live on 3-dimensional Weyl spaces".into()));
    }
    let geom = Geometry::at(ws, p, 1)?;
    let mut ev = Evaluator::new(&p.coords, 1);
    let w = ev.real(&m.w)?;
    let a = m.a.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
    let dw: Vec<f64> = (0..3).map(|i| w.d1(i) - geom.omega[i].value() * w.value()).collect();
    let gi = geom.ginv_value();
    let up: Vec<f64> = (0..3).map(|k| (0..3).map(|l| gi[k * 3 + l] * dw[l]).sum()).collect();
    let sq = geom.sqrt_det_value() * geom.orientation;
    let out: Vec<f64> = (0..9)
        .map(|ij| {
            let (i, j) = (ij / 3, ij % 3);
            let star: f64 = (0..3).map(|k| sq * levi_civita(&[k, i, j]) * up[k]).sum();
            star - (a[j].d1(i) - a[i].d1(j))
        })
        .collect();
    let nrm = frame_max_norm_covariant(&out, 3, 2, &geom.frame());
    Ok((out, nrm))
}

pub fn monopole_residual(ws: &WeylStructure, m: &MonopoleSolution, p: &Point) -> Result<f64> {
    Ok(monopole_defect(ws, m, p)?.1)
}

pub fn special_monopole_residuals(ws: &WeylStructure, chi: &Congruence, p: &Point) -> Result<SpecialMonopoleResiduals> {
    let cj = CongruenceJets::at(ws, chi, p, 3)?;
    let dec = cj.geom.decompose();
    cj.special_monopole_residuals(&dec)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperCrResiduals {
    /// Curvature of D^B − κ∗1 computed from its connection coefficients.
    pub curvature: f64,
    /// Same curvature assembled from (r0, scal, F, Dκ, κ).
    pub curvature_formula: f64,
    /// |κ² − scal/6|.
    pub scalmon: f64,
    /// |∗D^Bκ − ½F|.
    pub gt: f64,
}

/// Flatness of D^κ = D^B − κ∗1 on L^{-1}TB, acting by D^κ_X Z = D^B_X Z − κ Z×X with
/// (X×Z)^m = vol(X, Z, ·)^m. This is the sign for which flatness goes with ∗D^Bκ = ½F.
pub fn hypercr_residual(ws: &WeylStructure, kappa: &Expr, p: &Point) -> Result<HyperCrResiduals> {
    if ws.dim() != 3 {
        return Err(GeomError::Invalid("hyperCR residual is defined in dimension 3".into()));
    }
    let n = 3;
    let geom = Geometry::at(ws, p, 3)?;
    let mut ev = Evaluator::new(&p.coords, 2);
    let k = ev.real(kappa)?;
    let gamma: Vec<Jet> = geom.gamma.iter().map(|j| j.truncate(2)).collect();
    let om: Vec<Jet> = geom.omega.iter().map(|j| j.truncate(2)).collect();
    let gi: Vec<Jet> = geom.ginv.iter().map(|j| j.truncate(2)).collect();
    let sq = geom.sqrt_det.truncate(2) * geom.orientation;
    let mut coef = Vec::with_capacity(27);
    for kk in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut v = gamma[(kk * n + i) * n + j];
                if kk == j {
                    v = v - om[i];
                }
                for m in 0..n {
                    let e = levi_civita(&[i, j, m]);
                    if e != 0.0 {
                        v = v + k * sq * gi[m * n + kk] * e;
                    }
                }
                coef.push(v);
            }
        }
    }
    let r: Vec<f64> = curvature_of(&coef, n).iter().map(|j| j.value()).collect();
    let dec = geom.decompose();
    let g = dec.g.clone();
    let giv = geom.ginv_value();
    let vol = |a: usize, b: usize, c: usize| geom.sqrt_det_value() * geom.orientation * levi_civita(&[a, b, c]);
    let dk: Vec<f64> = (0..n).map(|i| k.d1(i) - geom.omega[i].value() * k.value()).collect();
    // endomorphism of a 2-form α: Z ↦ α(Z,·)♯, entry [k][l] = g^{km} α_{lm}
    let mut formula = vec![0.0; 81];
    let r0 = &dec.r0;
    let f = &dec.faraday;
    let kv = k.value();
    for kk in 0..n {
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 0.0;
                    for m in 0..n {
                        // two-form built from (X=∂i, Y=∂j) evaluated on (∂l, ∂m), raised on m
                        let wedge = |a: &[f64], b: &[f64]| a[l] * b[m] - b[l] * a[m];
                        let ei: Vec<f64> = (0..n).map(|q| g[i * n + q]).collect();
                        let ej: Vec<f64> = (0..n).map(|q| g[j * n + q]).collect();
                        let ri: Vec<f64> = (0..n).map(|q| r0[i * n + q]).collect();
                        let rj: Vec<f64> = (0..n).map(|q| r0[j * n + q]).collect();
                        let fi: Vec<f64> = (0..n).map(|q| f[i * n + q]).collect();
                        let fj: Vec<f64> = (0..n).map(|q| f[j * n + q]).collect();
                        let mut t = -wedge(&ri, &ej) + wedge(&rj, &ei) - dec.scal / 6.0 * wedge(&ei, &ej)
                            + 0.5 * wedge(&fi, &ej)
                            - 0.5 * wedge(&fj, &ei)
                            + kv * kv * wedge(&ei, &ej);
                        // D_Xκ ∗Y − D_Yκ ∗X with (∗Y)_{lm} = vol_{j l m}
                        t += dk[i] * vol(j, l, m) - dk[j] * vol(i, l, m);
                        v += giv[kk * n + m] * t;
                    }
                    formula[((kk * n + l) * n + i) * n + j] = v;
                }
            }
        }
    }
    let curvature = dec.norm_13(&r);
    let curvature_formula = dec.norm_13(&formula);
    let sq0 = geom.sqrt_det_value() * geom.orientation;
    let up: Vec<f64> = (0..n).map(|a| (0..n).map(|b| giv[a * n + b] * dk[b]).sum()).collect();
    let gt: Vec<f64> = (0..9)
        .map(|ij| (0..n).map(|q| sq0 * levi_civita(&[q, ij / 3, ij % 3]) * up[q]).sum::<f64>() - 0.5 * f[ij])
        .collect();
    Ok(HyperCrResiduals {
        curvature,
        curvature_formula,
        scalmon: (kv * kv - dec.scal / 6.0).abs(),
        gt: dec.norm_2(&gt),
    })
}

/// Integrate the D^B-geodesic from `start` (unit initial tangent) with RK4 in
/// g-arclength, transporting (τ, κ, Σ) by the Jacobi evolution equations, and
/// return the largest deviation from the pointwise decomposition along the way.
pub fn jacobi_transport_check(
    ws: &WeylStructure,
    start: &Point,
    tangent: &[f64],
    chi: &Congruence,
    t_max: f64,
    steps: usize,
) -> Result<f64> {
    let n = 3;
    let inv0 = CongruenceJets::at(ws, chi, start, 1)?;
    let chi0: Vec<f64> = inv0.chi.iter().map(|j| j.value()).collect();
    if tangent.iter().zip(&chi0).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(GeomError::Precondition("initial tangent must equal χ at the start point".into()));
    }
    let i0 = inv0.invariants();
    if i0.accel_norm > ELIGIBILITY_TOL {
        return Err(GeomError::Ineligible(format!("congruence is not geodesic (|a| = {:e})", i0.accel_norm)));
    }
    // state: x(3), v(3), τ, κ, Σ^k_i(9)
    let mut state = vec![0.0; 17];
    state[..3].copy_from_slice(&start.coords);
    state[3..6].copy_from_slice(tangent);
    state[6] = i0.tau;
    state[7] = i0.kappa;
    let gi0 = inv0.geom.ginv_value();
    for k in 0..n {
        for i in 0..n {
            state[8 + k * n + i] = (0..n).map(|m| gi0[k * n + m] * i0.sigma[m * n + i]).sum();
        }
    }
    let rhs = |s: &[f64]| -> Result<Vec<f64>> {
        let p = ws.chart.point_unboxed(&s[..3])?;
        let geo = Geometry::at(ws, &p, 2)?;
        let dec = geo.decompose();
        let v = &s[3..6];
        let ga: Vec<f64> = geo.gamma.iter().map(|j| j.value()).collect();
        let om: Vec<f64> = geo.omega.iter().map(|j| j.value()).collect();
        let om_v: f64 = (0..n).map(|i| om[i] * v[i]).sum();
        let g = &dec.g;
        let gi = geo.ginv_value();
        let (tau, kappa) = (s[6], s[7]);
        let sig = &s[8..17];
        let mut out = vec![0.0; 17];
        for k in 0..n {
            out[k] = v[k];
            out[3 + k] = om_v * v[k] - (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| ga[(k * n + i) * n + j] * v[i] * v[j]).sum::<f64>();
        }
        let vf: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g[i * n + j] * v[j]).sum()).collect();
        let r0vv: f64 = (0..n).map(|i| (0..n).map(|j| dec.r0[i * n + j] * v[i] * v[j]).sum::<f64>()).sum();
        // |Σ|² = Σ^k_i Σ^i_k for the g-symmetric endomorphism
        let sig2: f64 = (0..n).map(|k| (0..n).map(|i| sig[k * n + i] * sig[i * n + k]).sum::<f64>()).sum();
        let f_up = crate::forms::raise_all(&dec.faraday, n, 2, &gi);
        let sq = geo.sqrt_det_value() * geo.orientation;
        let star_f: Vec<f64> = (0..n).map(|k| -0.5 * sq * (0..9).map(|ij| levi_civita(&[ij / 3, ij % 3, k]) * f_up[ij]).sum::<f64>()).collect();
        let chi_star_f: f64 = (0..n).map(|k| v[k] * star_f[k]).sum();
        out[6] = om_v * tau - tau * tau + kappa * kappa - 0.5 * sig2 - 0.5 * r0vv - dec.scal / 6.0;
        out[7] = om_v * kappa - 2.0 * tau * kappa - 0.5 * chi_star_f;
        // sym₀ of r0 on χ⊥, as an endomorphism
        let pr = |a: usize, b: usize| (if a == b { 1.0 } else { 0.0 }) - v[a] * vf[b];
        let mut rp = vec![0.0; 9];
        for a in 0..n {
            for b in 0..n {
                let mut s2 = 0.0;
                for c in 0..n {
                    for d in 0..n {
                        s2 += pr(c, a) * dec.r0[c * n + d] * pr(d, b);
                    }
                }
                rp[a * n + b] = s2;
            }
        }
        let tr: f64 = (0..n).map(|a| (0..n).map(|b| gi[a * n + b] * rp[a * n + b]).sum::<f64>()).sum();
        for k in 0..n {
            for i in 0..n {
                let mut d = om_v * sig[k * n + i] - 2.0 * tau * sig[k * n + i];
                for l in 0..n {
                    for m in 0..n {
                        d -= v[l] * ga[(k * n + l) * n + m] * sig[m * n + i];
                        d += v[l] * ga[(m * n + l) * n + i] * sig[k * n + m];
                    }
                }
                let sym0: f64 = (0..n).map(|m| gi[k * n + m] * (rp[m * n + i] - 0.5 * tr * (g[m * n + i] - vf[m] * vf[i]))).sum();
                out[8 + k * n + i] = d - sym0;
            }
        }
        Ok(out)
    };
    let h = t_max / steps as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let k1 = rhs(&state)?;
        let s2: Vec<f64> = state.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = rhs(&s2)?;
        let s3: Vec<f64> = state.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = rhs(&s3)?;
        let s4: Vec<f64> = state.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = rhs(&s4)?;
        for a in 0..17 {
            state[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::Integration("non-finite state".into()));
        }
        let p = ws.chart.point_unboxed(&state[..3]).map_err(|e| GeomError::Integration(format!("geodesic left the admissible region: {}", e)))?;
        let cj = CongruenceJets::at(ws, chi, &p, 1)?;
        let inv = cj.invariants();
        let gv = cj.geom.metric_value();
        let mut dev = (inv.tau - state[6]).abs().max((inv.kappa - state[7]).abs());
        let chi_v: Vec<f64> = cj.chi.iter().map(|j| j.value()).collect();
        dev = dev.max(chi_v.iter().zip(&state[3..6]).fold(0.0, |m, (a, b)| m.max((a - b).abs())));
        let mut sd = vec![0.0; 9];
        for m in 0..n {
            for i in 0..n {
                let low: f64 = (0..n).map(|k| gv[m * n + k] * state[8 + k * n + i]).sum();
                sd[m * n + i] = inv.sigma[m * n + i] - low;
            }
        }
        dev = dev.max(frame_max_norm_covariant(&sd, n, 2, &cj.frame()));
        worst = worst.max(dev);
    }
    Ok(worst)
}
