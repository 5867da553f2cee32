//! Truncated Taylor jets in up to four variables, order at most three.
//!
//! Only sorted index tuples are computed; the mirrored entries are copies, so
//! the second and third derivative arrays are symmetric bit for bit.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const MAX_DIM: usize = 4;
pub const MAX_ORDER: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    order: u8,
    dim: u8,
    v: f64,
    d1: [f64; MAX_DIM],
    d2: [[f64; MAX_DIM]; MAX_DIM],
    d3: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl Jet {
    pub fn constant(dim: usize, order: u8, v: f64) -> Jet {
        assert!(dim <= MAX_DIM && order <= MAX_ORDER);
        Jet {
            order,
            dim: dim as u8,
            v,
            d1: [0.0; MAX_DIM],
            d2: [[0.0; MAX_DIM]; MAX_DIM],
            d3: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM],
        }
    }

    /// The coordinate function x_i with value `v`.
    pub fn variable(dim: usize, order: u8, i: usize, v: f64) -> Jet {
        let mut j = Jet::constant(dim, order, v);
        if order >= 1 {
            j.d1[i] = 1.0;
        }
        j
    }

    pub fn value(&self) -> f64 {
        self.v
    }
    pub fn order(&self) -> u8 {
        self.order
    }
    pub fn dim(&self) -> usize {
        self.dim as usize
    }
    pub fn d1(&self, i: usize) -> f64 {
        self.d1[i]
    }
    pub fn d2(&self, i: usize, j: usize) -> f64 {
        self.d2[i][j]
    }
    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.d3[i][j][k]
    }
    pub fn gradient(&self) -> Vec<f64> {
        self.d1[..self.dim()].to_vec()
    }

    /// Drop derivative information above `order`.
    pub fn truncate(&self, order: u8) -> Jet {
        let order = order.min(self.order);
        let mut out = Jet::constant(self.dim(), order, self.v);
        if order >= 1 {
            out.d1 = self.d1;
        }
        if order >= 2 {
            out.d2 = self.d2;
        }
        if order >= 3 {
            out.d3 = self.d3;
        }
        out
    }

    /// ∂_i of the jet, one order lower.
    pub fn partial(&self, i: usize) -> Jet {
        assert!(self.order >= 1, "partial of an order-0 jet");
        let n = self.dim();
        let mut out = Jet::constant(n, self.order - 1, self.d1[i]);
        if self.order >= 2 {
            for a in 0..n {
                out.d1[a] = self.d2[i][a];
            }
        }
        if self.order >= 3 {
            for a in 0..n {
                for b in 0..n {
                    out.d2[a][b] = self.d3[i][a][b];
                }
            }
        }
        out
    }

    /// The same jet viewed as a function of the variables in `keep` only,
    /// the others frozen at the base point.
    pub fn restrict(&self, keep: &[usize]) -> Jet {
        let mut out = Jet::constant(keep.len(), self.order, self.v);
        for (a, &i) in keep.iter().enumerate() {
            out.d1[a] = self.d1[i];
            for (b, &j) in keep.iter().enumerate() {
                out.d2[a][b] = self.d2[i][j];
                for (c, &k) in keep.iter().enumerate() {
                    out.d3[a][b][c] = self.d3[i][j][k];
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        let n = self.dim();
        if !self.v.is_finite() {
            return false;
        }
        for i in 0..n {
            if !self.d1[i].is_finite() {
                return false;
            }
            for j in 0..n {
                if !self.d2[i][j].is_finite() {
                    return false;
                }
                for k in 0..n {
                    if !self.d3[i][j][k].is_finite() {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn mirror(&mut self) {
        let n = self.dim();
        for i in 0..n {
            for j in i..n {
                self.d2[j][i] = self.d2[i][j];
                for k in j..n {
                    let x = self.d3[i][j][k];
                    self.d3[i][k][j] = x;
                    self.d3[j][i][k] = x;
                    self.d3[j][k][i] = x;
                    self.d3[k][i][j] = x;
                    self.d3[k][j][i] = x;
                }
            }
        }
    }

    fn combine_dims(&self, other: &Jet) -> (usize, u8) {
        debug_assert!(self.dim == other.dim || self.order == 0 || other.order == 0);
        (self.dim().max(other.dim()), self.order.min(other.order))
    }

    /// Compose with a univariate function given its value and first three
    /// derivatives at `self.value()`.
    pub fn chain(&self, f: [f64; 4]) -> Jet {
        let n = self.dim();
        let mut out = Jet::constant(n, self.order, f[0]);
        if self.order >= 1 {
            for i in 0..n {
                out.d1[i] = f[1] * self.d1[i];
            }
        }
        if self.order >= 2 {
            for i in 0..n {
                for j in i..n {
                    out.d2[i][j] = f[2] * self.d1[i] * self.d1[j] + f[1] * self.d2[i][j];
                }
            }
        }
        if self.order >= 3 {
            let (a, b) = (&self.d1, &self.d2);
            for i in 0..n {
                for j in i..n {
                    for k in j..n {
                        out.d3[i][j][k] = f[3] * a[i] * a[j] * a[k]
                            + f[2] * (b[i][j] * a[k] + b[i][k] * a[j] + b[j][k] * a[i])
                            + f[1] * self.d3[i][j][k];
                    }
                }
            }
        }
        out.mirror();
        out
    }

    pub fn recip(&self) -> Jet {
        let v = self.v;
        let r = 1.0 / v;
        self.chain([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sqrt(&self) -> Jet {
        let s = self.v.sqrt();
        let v = self.v;
        self.chain([s, 0.5 / s, -0.25 / (s * v), 0.375 / (s * v * v)])
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.chain([e, e, e, e])
    }

    pub fn ln(&self) -> Jet {
        let v = self.v;
        self.chain([v.ln(), 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain([c, -s, -c, s])
    }

    pub fn atan(&self) -> Jet {
        let u = self.v;
        let q = 1.0 / (1.0 + u * u);
        self.chain([u.atan(), q, -2.0 * u * q * q, (6.0 * u * u - 2.0) * q * q * q])
    }

    /// Integer power. Nonnegative exponents keep exact zeros beyond degree n.
    pub fn powi(&self, n: i32) -> Jet {
        let v = self.v;
        let mut f = [0.0; 4];
        let mut coef = 1.0;
        for (k, slot) in f.iter_mut().enumerate() {
            let e = n - k as i32;
            if n >= 0 && e < 0 {
                break;
            }
            *slot = coef * v.powi(e);
            coef *= e as f64;
        }
        self.chain(f)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = *self;
        out.v *= s;
        for i in 0..MAX_DIM {
            out.d1[i] *= s;
            for j in 0..MAX_DIM {
                out.d2[i][j] *= s;
                for k in 0..MAX_DIM {
                    out.d3[i][j][k] *= s;
                }
            }
        }
        out
    }

    /// Largest absolute entry over value and all stored derivatives.
    pub fn max_abs(&self) -> f64 {
        let n = self.dim();
        let mut m = self.v.abs();
        for i in 0..n {
            if self.order >= 1 {
                m = m.max(self.d1[i].abs());
            }
            for j in 0..n {
                if self.order >= 2 {
                    m = m.max(self.d2[i][j].abs());
                }
                for k in 0..n {
                    if self.order >= 3 {
                        m = m.max(self.d3[i][j][k].abs());
                    }
                }
            }
        }
        m
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let (n, order) = self.combine_dims(&o);
        let mut out = Jet::constant(n, order, self.v + o.v);
        for i in 0..MAX_DIM {
            out.d1[i] = self.d1[i] + o.d1[i];
            for j in 0..MAX_DIM {
                out.d2[i][j] = self.d2[i][j] + o.d2[i][j];
                for k in 0..MAX_DIM {
                    out.d3[i][j][k] = self.d3[i][j][k] + o.d3[i][j][k];
                }
            }
        }
        out.truncate(order)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (n, order) = self.combine_dims(&o);
        let (f, g) = (&self, &o);
        let mut out = Jet::constant(n, order, f.v * g.v);
        if order >= 1 {
            for i in 0..n {
                out.d1[i] = f.d1[i] * g.v + f.v * g.d1[i];
            }
        }
        if order >= 2 {
            for i in 0..n {
                for j in i..n {
                    out.d2[i][j] = f.d2[i][j] * g.v
                        + f.d1[i] * g.d1[j]
                        + f.d1[j] * g.d1[i]
                        + f.v * g.d2[i][j];
                }
            }
        }
        if order >= 3 {
            for i in 0..n {
                for j in i..n {
                    for k in j..n {
                        out.d3[i][j][k] = f.d3[i][j][k] * g.v
                            + f.d2[i][j] * g.d1[k]
                            + f.d2[i][k] * g.d1[j]
                            + f.d2[j][k] * g.d1[i]
                            + f.d1[i] * g.d2[j][k]
                            + f.d1[j] * g.d2[i][k]
                            + f.d1[k] * g.d2[i][j]
                            + f.v * g.d3[i][j][k];
                    }
                }
            }
        }
        out.mirror();
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self.scale(1.0 / c)
    }
}

impl std::iter::Sum for Jet {
    fn sum<I: Iterator<Item = Jet>>(mut iter: I) -> Jet {
        let first = iter.next().expect("sum of an empty jet iterator");
        iter.fold(first, |a, b| a + b)
    }
}
