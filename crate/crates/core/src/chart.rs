//! Oriented coordinate charts: symbol table, domain box, guards, metric.

use crate::error::{GeomError, Result};
use crate::expr::{parse, Evaluator, Expr, Symbols, EPS_GUARD};
use crate::jet::Jet;
use crate::linalg;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub chart_id: String,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub id: String,
    pub syms: Symbols,
    pub domain: Vec<(f64, f64)>,
    pub guards: Vec<(String, Expr)>,
    /// Row-major symmetric metric components.
    pub metric: Vec<Expr>,
    /// +1 if the coordinate order is positively oriented.
    pub orientation: f64,
}

impl Chart {
    pub fn new(id: &str, syms: Symbols, domain: Vec<(f64, f64)>, metric: Vec<Expr>, orientation: f64) -> Result<Chart> {
        let n = syms.coords.len();
        if !(2..=4).contains(&n) {
            return Err(GeomError::Invalid(format!("chart dimension {} not supported", n)));
        }
        if domain.len() != n || metric.len() != n * n {
            return Err(GeomError::Invalid("domain or metric size does not match the coordinates".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if metric[i * n + j] != metric[j * n + i] {
                    return Err(GeomError::Invalid(format!("metric not symmetric in ({}, {})", i, j)));
                }
            }
        }
        Ok(Chart { id: id.to_string(), syms, domain, guards: Vec::new(), metric, orientation: orientation.signum() })
    }

    /// Build from text: the upper triangle is read row by row.
    pub fn from_text(
        id: &str,
        syms: Symbols,
        domain: Vec<(f64, f64)>,
        upper: &[&str],
        orientation: f64,
    ) -> Result<Chart> {
        let n = syms.coords.len();
        let mut metric = vec![Expr::zero(); n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in i..n {
                let text = it.next().ok_or_else(|| GeomError::Invalid("too few metric entries".into()))?;
                let e = parse(text, &syms)?;
                metric[i * n + j] = e.clone();
                metric[j * n + i] = e;
            }
        }
        Chart::new(id, syms, domain, metric, orientation)
    }

    pub fn dim(&self) -> usize {
        self.syms.coords.len()
    }

    pub fn coord_names(&self) -> &[String] {
        &self.syms.coords
    }

    pub fn parse(&self, text: &str) -> Result<Expr> {
        parse(text, &self.syms)
    }

    pub fn with_guard(mut self, label: &str, e: Expr) -> Chart {
        self.guards.push((label.to_string(), e));
        self
    }

    pub fn with_guard_text(self, text: &str) -> Result<Chart> {
        let e = self.parse(text)?;
        Ok(self.with_guard(text, e))
    }

    /// Same chart and guards with a new metric.
    pub fn with_metric(&self, id: &str, metric: Vec<Expr>) -> Result<Chart> {
        let mut c = Chart::new(id, self.syms.clone(), self.domain.clone(), metric, self.orientation)?;
        c.guards = self.guards.clone();
        Ok(c)
    }

    /// Metric multiplied by a scalar field.
    pub fn rescaled(&self, id: &str, factor: &Expr) -> Result<Chart> {
        let metric = self.metric.iter().map(|e| factor.clone() * e.clone()).collect();
        self.with_metric(id, metric)
    }

    pub fn with_orientation(mut self, orientation: f64) -> Chart {
        self.orientation = orientation.signum();
        self
    }

    /// Validate coordinates: inside the open domain box, guards above margin,
    /// metric positive definite.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        let n = self.dim();
        if coords.len() != n {
            return Err(GeomError::Invalid(format!("expected {} coordinates, got {}", n, coords.len())));
        }
        for (k, (&x, &(lo, hi))) in coords.iter().zip(&self.domain).enumerate() {
            if !(x > lo && x < hi) {
                return Err(GeomError::Domain(format!("{} = {} not in ({}, {})", self.syms.coords[k], x, lo, hi)));
            }
        }
        self.check_guards(coords)?;
        let g = self.metric_value_raw(coords)?;
        linalg::orthonormal_frame(&g, n)?;
        Ok(Point { chart_id: self.id.clone(), coords: coords.to_vec() })
    }

    /// Like `point` but without the domain box (used along integrated paths).
    pub fn point_unboxed(&self, coords: &[f64]) -> Result<Point> {
        self.check_guards(coords)?;
        let g = self.metric_value_raw(coords)?;
        linalg::orthonormal_frame(&g, self.dim())?;
        Ok(Point { chart_id: self.id.clone(), coords: coords.to_vec() })
    }

    fn check_guards(&self, coords: &[f64]) -> Result<()> {
        let mut ev = Evaluator::new(coords, 0);
        for (label, gexpr) in &self.guards {
            let v = ev.real(gexpr)?.value();
            if !(v > EPS_GUARD) {
                return Err(GeomError::Guard(format!("{} = {:e} at {:?}", label, v, coords)));
            }
        }
        Ok(())
    }

    pub fn metric_jets(&self, ev: &mut Evaluator) -> Result<Vec<Jet>> {
        self.metric.iter().map(|e| ev.real(e)).collect()
    }

    fn metric_value_raw(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let mut ev = Evaluator::new(coords, 0);
        Ok(self.metric_jets(&mut ev)?.iter().map(|j| j.value()).collect())
    }

    pub fn metric_value(&self, p: &Point) -> Result<Vec<f64>> {
        self.metric_value_raw(&p.coords)
    }

    /// Deterministic admissible sample points: a Halton sequence with a
    /// seeded Cranley–Patterson shift, mapped into the domain box shrunk by 2%.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Point>> {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut out = Vec::with_capacity(count);
        let limit = 50 * count.max(1) + 100;
        let mut idx = 1u64;
        while out.len() < count {
            if idx as usize > limit {
                return Err(GeomError::Guard(format!(
                    "guards exhausted: only {} of {} admissible points on chart {}",
                    out.len(),
                    count,
                    self.id
                )));
            }
            let coords: Vec<f64> = (0..n)
                .map(|k| {
                    let u = (halton(idx, PRIMES[k]) + shift[k]).fract();
                    let (lo, hi) = self.domain[k];
                    let m = 0.02 * (hi - lo);
                    lo + m + u * (hi - lo - 2.0 * m)
                })
                .collect();
            idx += 1;
            if let Ok(p) = self.point(&coords) {
                out.push(p);
            }
        }
        Ok(out)
    }
}

const PRIMES: [u64; 4] = [2, 3, 5, 7];

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}
