//! Exterior algebra at a point: d on jets, Hodge star, musical maps, SD/ASD split.
//!
//! A k-form is stored by all n^k components (antisymmetric), with
//! α = (1/k!) α_{i1..ik} dx^{i1}∧…∧dx^{ik}, so (dx∧dy)_{01} = 1.

use crate::chart::{Chart, Point};
use crate::error::{GeomError, Result};
use crate::expr::{Evaluator, Expr};
use crate::jet::Jet;
use crate::linalg::{self, flat_index, levi_civita, multi_indices, unflatten};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variance {
    Up,
    Down,
}

/// Which Hodge star. `Tilde` satisfies α∧*β = ⟨α,β⟩ vol; `Paper` differs by
/// (−1)^{k(k−1)/2} on k-forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarConvention {
    Tilde,
    Paper,
}

impl StarConvention {
    pub fn sign(self, k: usize) -> f64 {
        match self {
            StarConvention::Tilde => 1.0,
            StarConvention::Paper => {
                if (k * k.saturating_sub(1) / 2) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            StarConvention::Tilde => "tilde",
            StarConvention::Paper => "paper",
        }
    }
}

impl std::str::FromStr for StarConvention {
    type Err = GeomError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tilde" => Ok(StarConvention::Tilde),
            "paper" => Ok(StarConvention::Paper),
            _ => Err(GeomError::Invalid(format!("unknown star convention '{}'", s))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorValue {
    pub base: Point,
    pub dim: usize,
    pub variance: Vec<Variance>,
    pub weight: i32,
    pub comps: Vec<f64>,
}

impl TensorValue {
    pub fn form(base: Point, dim: usize, k: usize, comps: Vec<f64>) -> TensorValue {
        assert_eq!(comps.len(), dim.pow(k as u32));
        TensorValue { base, dim, variance: vec![Variance::Down; k], weight: 0, comps }
    }
    pub fn rank(&self) -> usize {
        self.variance.len()
    }
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.comps[flat_index(idx, self.dim)]
    }
    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Arithmetic shared by f64 and jets so the algebra is written once.
pub trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self> + Neg<Output = Self> {
    fn zero_like(&self) -> Self;
}
impl Scalar for f64 {
    fn zero_like(&self) -> f64 {
        0.0
    }
}
impl Scalar for Jet {
    fn zero_like(&self) -> Jet {
        *self * 0.0
    }
}

fn sum<T: Scalar>(z: T, it: impl Iterator<Item = T>) -> T {
    it.fold(z, |a, b| a + b)
}

/// Antisymmetrized derivative of a k-form given as jets; result one order lower.
pub fn exterior_d_jets(alpha: &[Jet], n: usize, k: usize) -> Vec<Jet> {
    let idxs = multi_indices(n, k + 1);
    idxs.iter()
        .map(|idx| {
            let mut acc = alpha[0].partial(0) * 0.0;
            for a in 0..=k {
                let mut rest = idx.clone();
                let i = rest.remove(a);
                let term = alpha[flat_index(&rest, n)].partial(i);
                acc = if a % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        })
        .collect()
}

/// d of a k-form field given by expressions for all n^k components.
pub fn exterior_d(chart: &Chart, form: &[Expr], k: usize, p: &Point) -> Result<TensorValue> {
    let n = chart.dim();
    if k >= n {
        return Err(GeomError::Invalid(format!("d of a {}-form in dimension {}", k, n)));
    }
    if form.len() != n.pow(k as u32) {
        return Err(GeomError::Invalid("form component count does not match n^k".into()));
    }
    let mut ev = Evaluator::new(&p.coords, 1);
    let jets = form.iter().map(|e| ev.real(e)).collect::<Result<Vec<_>>>()?;
    let d = exterior_d_jets(&jets, n, k);
    Ok(TensorValue::form(p.clone(), n, k + 1, d.iter().map(|j| j.value()).collect()))
}

/// Expand a 1-form given by n components into the k = 1 component list (identity),
/// and wedge two 1-forms: (α∧β)_ij = α_i β_j − α_j β_i.
pub fn wedge11<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(a[i] * b[j] - a[j] * b[i]);
        }
    }
    out
}

/// Raise every index of a covariant rank-k tensor.
pub fn raise_all<T: Scalar>(t: &[T], n: usize, k: usize, ginv: &[T]) -> Vec<T> {
    let mut cur = t.to_vec();
    for slot in 0..k {
        let next: Vec<T> = (0..cur.len())
            .map(|flat| {
                let mut idx = unflatten(flat, n, k);
                let a = idx[slot];
                let z = cur[0].zero_like();
                sum(
                    z,
                    (0..n).map(|j| {
                        idx[slot] = j;
                        ginv[a * n + j] * cur[flat_index(&idx, n)]
                    }),
                )
            })
            .collect();
        cur = next;
    }
    cur
}

/// Hodge star of a k-form: (∗̃α)_J = (1/k!) √det g α^I ε_{IJ} · orientation,
/// times the convention sign.
pub fn hodge_star_generic<T: Scalar>(
    alpha: &[T],
    n: usize,
    k: usize,
    ginv: &[T],
    sqrt_det: T,
    orientation: f64,
    conv: StarConvention,
) -> Vec<T> {
    let up = raise_all(alpha, n, k, ginv);
    let fact: f64 = (1..=k).map(|x| x as f64).product();
    let coef = orientation * conv.sign(k) / fact;
    let ins = multi_indices(n, k);
    multi_indices(n, n - k)
        .iter()
        .map(|jdx| {
            let z = sqrt_det.zero_like();
            let s = sum(
                z,
                ins.iter().filter_map(|idx| {
                    let mut full = idx.clone();
                    full.extend_from_slice(jdx);
                    let e = levi_civita(&full);
                    if e == 0.0 {
                        None
                    } else {
                        Some(up[flat_index(idx, n)] * e)
                    }
                }),
            );
            s * sqrt_det * coef
        })
        .collect()
}

pub fn hodge_star_values(alpha: &[f64], n: usize, k: usize, g: &[f64], orientation: f64, conv: StarConvention) -> Result<Vec<f64>> {
    let d = linalg::det(g, n);
    if !(d > 0.0) {
        return Err(GeomError::Degenerate("metric determinant not positive".into()));
    }
    let ginv = linalg::inverse(g, n)?;
    Ok(hodge_star_generic(alpha, n, k, &ginv, d.sqrt(), orientation, conv))
}

pub fn hodge_star(form: &TensorValue, g: &[f64], orientation: f64, conv: StarConvention) -> Result<TensorValue> {
    if form.variance.iter().any(|v| *v != Variance::Down) {
        return Err(GeomError::Invalid("hodge star expects a covariant form".into()));
    }
    let (n, k) = (form.dim, form.rank());
    let comps = hodge_star_values(&form.comps, n, k, g, orientation, conv)?;
    Ok(TensorValue { base: form.base.clone(), dim: n, variance: vec![Variance::Down; n - k], weight: form.weight, comps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Musical {
    Raise,
    Lower,
}

/// Flip the variance of one slot with g or g⁻¹. Weight moves by −2 on raising.
pub fn musical(g: &[f64], t: &TensorValue, slot: usize, direction: Musical) -> Result<TensorValue> {
    let (n, k) = (t.dim, t.rank());
    if slot >= k {
        return Err(GeomError::Invalid(format!("slot {} out of range for rank {}", slot, k)));
    }
    let want = match direction {
        Musical::Raise => Variance::Down,
        Musical::Lower => Variance::Up,
    };
    if t.variance[slot] != want {
        return Err(GeomError::Invalid("slot already has the target variance".into()));
    }
    let m = match direction {
        Musical::Raise => linalg::inverse(g, n)?,
        Musical::Lower => g.to_vec(),
    };
    let comps = (0..t.comps.len())
        .map(|flat| {
            let mut idx = unflatten(flat, n, k);
            let a = idx[slot];
            (0..n)
                .map(|j| {
                    idx[slot] = j;
                    m[a * n + j] * t.comps[flat_index(&idx, n)]
                })
                .sum()
        })
        .collect();
    let mut variance = t.variance.clone();
    variance[slot] = if want == Variance::Down { Variance::Up } else { Variance::Down };
    let weight = t.weight + if direction == Musical::Raise { -2 } else { 2 };
    Ok(TensorValue { base: t.base.clone(), dim: n, variance, weight, comps })
}

/// Star applied to slots (s, s+1) of a covariant tensor of rank `rank` in 4D.
pub fn star_on_pair(t: &[f64], rank: usize, s: usize, ginv: &[f64], sqrt_det: f64, orientation: f64, conv: StarConvention) -> Vec<f64> {
    let n = 4;
    let mut out = vec![0.0; t.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let idx = unflatten(flat, n, rank);
        let mut two = vec![0.0; 16];
        for a in 0..4 {
            for b in 0..4 {
                let mut j = idx.clone();
                j[s] = a;
                j[s + 1] = b;
                two[a * 4 + b] = t[flat_index(&j, n)];
            }
        }
        let st = hodge_star_generic(&two, 4, 2, ginv, sqrt_det, orientation, conv);
        *o = st[idx[s] * 4 + idx[s + 1]];
    }
    out
}

/// Selfdual and antiselfdual parts ½(α ± ∗α) of a 2-form, or of a tensor with
/// 2-form pairs in slots (0,1) and (2,3) (both pairs projected).
pub fn sd_asd_split(t: &TensorValue, g: &[f64], orientation: f64, conv: StarConvention) -> Result<(TensorValue, TensorValue)> {
    if t.dim != 4 {
        return Err(GeomError::Invalid(format!("SD/ASD split needs dimension 4, got {}", t.dim)));
    }
    let d = linalg::det(g, 4);
    if !(d > 0.0) {
        return Err(GeomError::Degenerate("metric determinant not positive".into()));
    }
    let ginv = linalg::inverse(g, 4)?;
    let sq = d.sqrt();
    let rank = t.rank();
    let proj = |x: &[f64], sign: f64, s: usize| -> Vec<f64> {
        let st = star_on_pair(x, rank, s, &ginv, sq, orientation, conv);
        x.iter().zip(&st).map(|(a, b)| 0.5 * (a + sign * b)).collect()
    };
    let (sd, asd) = match rank {
        2 => (proj(&t.comps, 1.0, 0), proj(&t.comps, -1.0, 0)),
        4 => (proj(&proj(&t.comps, 1.0, 0), 1.0, 2), proj(&proj(&t.comps, -1.0, 0), -1.0, 2)),
        _ => return Err(GeomError::Invalid("SD/ASD split expects a 2-form or a 4-index tensor".into())),
    };
    let wrap = |c: Vec<f64>| TensorValue { base: t.base.clone(), dim: 4, variance: t.variance.clone(), weight: t.weight, comps: c };
    Ok((wrap(sd), wrap(asd)))
}
