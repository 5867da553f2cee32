//! Dense helpers for matrices of size at most 4, over f64 and over jets.

use crate::error::{GeomError, Result};
use crate::jet::Jet;

/// Sign of the permutation `idx` of 0..n, or 0 if an index repeats.
pub fn levi_civita(idx: &[usize]) -> f64 {
    let n = idx.len();
    let mut sign = 1.0;
    for a in 0..n {
        for b in (a + 1)..n {
            if idx[a] == idx[b] {
                return 0.0;
            }
            if idx[a] > idx[b] {
                sign = -sign;
            }
        }
    }
    sign
}

/// All length-`k` index tuples over 0..n, lexicographic.
pub fn multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * n);
        for t in &out {
            for i in 0..n {
                let mut u = t.clone();
                u.push(i);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

/// Strictly increasing length-`k` index tuples over 0..n.
pub fn increasing_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    multi_indices(n, k).into_iter().filter(|t| t.windows(2).all(|w| w[0] < w[1])).collect()
}

pub fn flat_index(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Inverse of an n×n jet matrix (row-major) by Gauss–Jordan with pivoting on values.
pub fn inverse_jet(m: &[Jet], n: usize) -> Result<Vec<Jet>> {
    let dim = m[0].dim();
    let order = m.iter().map(|j| j.order()).min().unwrap_or(0);
    let mut a: Vec<Jet> = m.to_vec();
    let mut inv: Vec<Jet> =
        (0..n * n).map(|k| Jet::constant(dim, order, if k / n == k % n { 1.0 } else { 0.0 })).collect();
    let scale = m.iter().map(|j| j.value().abs()).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x * n + col].value().abs().total_cmp(&a[y * n + col].value().abs()))
            .unwrap();
        if a[piv * n + col].value().abs() <= 1e-14 * scale.max(1e-300) {
            return Err(GeomError::Degenerate("singular matrix".into()));
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let r = a[col * n + col].recip();
        for k in 0..n {
            a[col * n + k] = a[col * n + k] * r;
            inv[col * n + k] = inv[col * n + k] * r;
        }
        for row in 0..n {
            if row != col {
                let f = a[row * n + col];
                if f.max_abs() == 0.0 {
                    continue;
                }
                for k in 0..n {
                    a[row * n + k] = a[row * n + k] - f * a[col * n + k];
                    inv[row * n + k] = inv[row * n + k] - f * inv[col * n + k];
                }
            }
        }
    }
    Ok(inv)
}

/// Determinant of an n×n jet matrix by cofactor expansion (n ≤ 4).
pub fn det_jet(m: &[Jet], n: usize) -> Jet {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            let mut acc: Option<Jet> = None;
            for c in 0..n {
                let minor: Vec<Jet> = (1..n)
                    .flat_map(|r| (0..n).filter(move |&k| k != c).map(move |k| (r, k)))
                    .map(|(r, k)| m[r * n + k])
                    .collect();
                let term = m[c] * det_jet(&minor, n - 1);
                let term = if c % 2 == 0 { term } else { -term };
                acc = Some(match acc {
                    None => term,
                    Some(a) => a + term,
                });
            }
            acc.unwrap()
        }
    }
}

pub fn det(m: &[f64], n: usize) -> f64 {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => (0..n)
            .map(|c| {
                let minor: Vec<f64> = (1..n)
                    .flat_map(|r| (0..n).filter(move |&k| k != c).map(move |k| m[r * n + k]))
                    .collect();
                let s = if c % 2 == 0 { 1.0 } else { -1.0 };
                s * m[c] * det(&minor, n - 1)
            })
            .sum(),
    }
}

pub fn inverse(m: &[f64], n: usize) -> Result<Vec<f64>> {
    let jets: Vec<Jet> = m.iter().map(|&v| Jet::constant(n, 0, v)).collect();
    Ok(inverse_jet(&jets, n)?.iter().map(|j| j.value()).collect())
}

/// Columns e_a of a g-orthonormal frame: returns `e` with e[a*n + i] = e_a^i.
/// Built by Gram–Schmidt on the coordinate basis, so e_a is upper triangular.
pub fn orthonormal_frame(g: &[f64], n: usize) -> Result<Vec<f64>> {
    let ip = |u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g[i * n + j] * u[i] * v[j];
            }
        }
        s
    };
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n);
    for a in 0..n {
        let mut v = vec![0.0; n];
        v[a] = 1.0;
        for e in &frame {
            let c = ip(&v, e);
            for i in 0..n {
                v[i] -= c * e[i];
            }
        }
        let nn = ip(&v, &v);
        if !(nn > 0.0) || !nn.is_finite() {
            return Err(GeomError::Degenerate("metric is not positive definite".into()));
        }
        let s = nn.sqrt();
        frame.push(v.iter().map(|x| x / s).collect());
    }
    Ok(frame.concat())
}

/// Express a fully covariant tensor (components over all n^k multi-indices)
/// in the frame `e`, and return the largest absolute component.
pub fn frame_max_norm_covariant(t: &[f64], n: usize, k: usize, e: &[f64]) -> f64 {
    let mut cur = t.to_vec();
    // contract one slot at a time
    for slot in 0..k {
        let mut next = vec![0.0; cur.len()];
        for (flat, out) in next.iter_mut().enumerate() {
            let mut idx = unflatten(flat, n, k);
            let a = idx[slot];
            let mut s = 0.0;
            for i in 0..n {
                idx[slot] = i;
                s += e[a * n + i] * cur[flat_index(&idx, n)];
            }
            *out = s;
        }
        cur = next;
    }
    cur.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn unflatten(mut flat: usize, n: usize, k: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for s in (0..k).rev() {
        idx[s] = flat % n;
        flat /= n;
    }
    idx
}
