//! Finite-difference oracles shared by the integration tests. They work on
//! plain closures so they share no code with the jet engine.
#![allow(dead_code)]

pub fn fd_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn inv(m: &[f64], n: usize) -> Vec<f64> {
    // plain Gauss-Jordan, no pivoting: oracle metrics are well conditioned
    let mut a = m.to_vec();
    let mut r: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    for c in 0..n {
        let p = a[c * n + c];
        for k in 0..n {
            a[c * n + k] /= p;
            r[c * n + k] /= p;
        }
        for row in 0..n {
            if row != c {
                let f = a[row * n + c];
                for k in 0..n {
                    a[row * n + k] -= f * a[c * n + k];
                    r[row * n + k] -= f * r[c * n + k];
                }
            }
        }
    }
    r
}

/// Weyl Christoffel symbols Γ^k_ij from a metric closure and ω closure, by central differences.
pub fn fd_gamma(g: &dyn Fn(&[f64]) -> Vec<f64>, om: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let g0 = g(x);
    let gi = inv(&g0, n);
    let w = om(x);
    let dg: Vec<Vec<f64>> = (0..n)
        .map(|l| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[l] += h;
            b[l] -= h;
            g(&a).iter().zip(g(&b)).map(|(p, q)| (p - q) / (2.0 * h)).collect()
        })
        .collect();
    let wu: Vec<f64> = (0..n).map(|k| (0..n).map(|l| gi[k * n + l] * w[l]).sum()).collect();
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += 0.5 * gi[k * n + l] * (dg[i][l * n + j] + dg[j][l * n + i] - dg[l][i * n + j]);
                }
                if k == i {
                    s += w[j];
                }
                if k == j {
                    s += w[i];
                }
                s -= g0[i * n + j] * wu[k];
                out[(k * n + i) * n + j] = s;
            }
        }
    }
    out
}

/// R^k_lij from nested finite differences of `fd_gamma`.
pub fn fd_riemann(g: &dyn Fn(&[f64]) -> Vec<f64>, om: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h = 1e-3;
    let ga = fd_gamma(g, om, x, 1e-4);
    let dga: Vec<Vec<f64>> = (0..n)
        .map(|l| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[l] += h;
            b[l] -= h;
            let p = fd_gamma(g, om, &a, 1e-4);
            let q = fd_gamma(g, om, &b, 1e-4);
            p.iter().zip(q).map(|(u, v)| (u - v) / (2.0 * h)).collect()
        })
        .collect();
    let at = |k: usize, i: usize, j: usize| ga[(k * n + i) * n + j];
    let mut out = vec![0.0; n.pow(4)];
    for k in 0..n {
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = dga[i][(k * n + j) * n + l] - dga[j][(k * n + i) * n + l];
                    for m in 0..n {
                        v += at(k, i, m) * at(m, j, l) - at(k, j, m) * at(m, i, l);
                    }
                    out[((k * n + l) * n + i) * n + j] = v;
                }
            }
        }
    }
    out
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
