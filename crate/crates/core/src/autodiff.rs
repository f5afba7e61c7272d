//! Second-order forward automatic differentiation and small dense linear
//! algebra.
//!
//! [`HyperDual`] carries a value, a gradient, and a full symmetric Hessian
//! with respect to a declared set of active variables; one evaluation pass
//! over an expression tree yields all first and second partials exactly.
//! [`SmallMatrix`] is the partially pivoted dense solver that inverts
//! velocity Hessians in the dynamics modules; its singularity report is how
//! a non-regular Lagrangian surfaces to callers.

use std::collections::BTreeMap;

use crate::error::{EvalError, LinAlgError};
use crate::expr::{as_integer_exponent, eval, powi, BinOp, Expr, Func, VarLayout};

/// Hard cap on dense matrix dimension (and thus on mechanical degrees of
/// freedom the engine will process).
pub const MAX_DIM: usize = 16;

/// Scalar with exact gradient and Hessian with respect to `k` active
/// variables. The Hessian is stored as a packed upper triangle, so symmetry
/// holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperDual {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

#[inline]
fn tri_len(k: usize) -> usize {
    k * (k + 1) / 2
}

#[inline]
fn tri_idx(k: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // row i of the packed upper triangle starts at sum_{r<i} (k - r)
    i * (2 * k - i + 1) / 2 + (j - i)
}

impl HyperDual {
    pub fn constant(value: f64, k: usize) -> HyperDual {
        HyperDual {
            value,
            grad: vec![0.0; k],
            hess: vec![0.0; tri_len(k)],
        }
    }

    /// Seed for the active variable in slot `idx`.
    pub fn variable(value: f64, idx: usize, k: usize) -> HyperDual {
        let mut hd = HyperDual::constant(value, k);
        hd.grad[idx] = 1.0;
        hd
    }

    /// A first-order quantity: known value and gradient, zero Hessian.
    /// Arithmetic on such values propagates values and gradients exactly;
    /// the Hessian slots are not meaningful.
    pub fn first_order(value: f64, grad: Vec<f64>) -> HyperDual {
        let k = grad.len();
        HyperDual {
            value,
            grad,
            hess: vec![0.0; tri_len(k)],
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn k(&self) -> usize {
        self.grad.len()
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[tri_idx(self.k(), i, j)]
    }

    /// Dense k-by-k Hessian, expanded from packed storage.
    pub fn hess_dense(&self) -> Vec<Vec<f64>> {
        let k = self.k();
        (0..k)
            .map(|i| (0..k).map(|j| self.hess_at(i, j)).collect())
            .collect()
    }

    fn is_numerically_constant(&self) -> bool {
        self.grad.iter().all(|g| *g == 0.0) && self.hess.iter().all(|h| *h == 0.0)
    }

    fn check_k(&self, rhs: &HyperDual) {
        assert_eq!(
            self.k(),
            rhs.k(),
            "hyper-dual arithmetic on mismatched variable counts ({} vs {})",
            self.k(),
            rhs.k()
        );
    }

    pub fn neg(&self) -> HyperDual {
        HyperDual {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn add(&self, rhs: &HyperDual) -> HyperDual {
        self.check_k(rhs);
        HyperDual {
            value: self.value + rhs.value,
            grad: self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(a, b)| a + b)
                .collect(),
            hess: self
                .hess
                .iter()
                .zip(&rhs.hess)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, rhs: &HyperDual) -> HyperDual {
        self.check_k(rhs);
        HyperDual {
            value: self.value - rhs.value,
            grad: self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(a, b)| a - b)
                .collect(),
            hess: self
                .hess
                .iter()
                .zip(&rhs.hess)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn mul(&self, rhs: &HyperDual) -> HyperDual {
        self.check_k(rhs);
        let k = self.k();
        let mut grad = vec![0.0; k];
        for i in 0..k {
            grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
        }
        let mut hess = vec![0.0; tri_len(k)];
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                hess[idx] = self.hess[idx] * rhs.value
                    + self.value * rhs.hess[idx]
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i];
                idx += 1;
            }
        }
        HyperDual {
            value: self.value * rhs.value,
            grad,
            hess,
        }
    }

    /// Division; the caller has already rejected a zero denominator.
    fn div_unchecked(&self, rhs: &HyperDual) -> HyperDual {
        self.check_k(rhs);
        let k = self.k();
        let w = self.value / rhs.value;
        let mut grad = vec![0.0; k];
        for i in 0..k {
            grad[i] = (self.grad[i] - w * rhs.grad[i]) / rhs.value;
        }
        let mut hess = vec![0.0; tri_len(k)];
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                hess[idx] = (self.hess[idx]
                    - w * rhs.hess[idx]
                    - grad[i] * rhs.grad[j]
                    - grad[j] * rhs.grad[i])
                    / rhs.value;
                idx += 1;
            }
        }
        HyperDual {
            value: w,
            grad,
            hess,
        }
    }

    /// Chain a scalar function through this value: given f(u), f'(u), f''(u),
    /// produce f applied to self.
    fn chain(&self, value: f64, d1: f64, d2: f64) -> HyperDual {
        let k = self.k();
        let mut grad = vec![0.0; k];
        for i in 0..k {
            grad[i] = d1 * self.grad[i];
        }
        let mut hess = vec![0.0; tri_len(k)];
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                hess[idx] = d1 * self.hess[idx] + d2 * self.grad[i] * self.grad[j];
                idx += 1;
            }
        }
        HyperDual {
            value,
            grad,
            hess,
        }
    }

    fn powi(&self, n: i64) -> HyperDual {
        let u = self.value;
        let value = powi(u, n);
        let nf = n as f64;
        let d1 = nf * powi(u, n - 1);
        let d2 = nf * (nf - 1.0) * powi(u, n - 2);
        self.chain(value, d1, d2)
    }

    /// General power with a hyper-dual exponent; requires a positive base.
    fn pow_general(&self, w: &HyperDual) -> HyperDual {
        self.check_k(w);
        let k = self.k();
        let u = self.value;
        let z = u.powf(w.value);
        let ln_u = u.ln();
        // da = d(w ln u), with a = w ln u and z = e^a
        let mut da = vec![0.0; k];
        for i in 0..k {
            da[i] = w.grad[i] * ln_u + w.value * self.grad[i] / u;
        }
        let mut grad = vec![0.0; k];
        for i in 0..k {
            grad[i] = z * da[i];
        }
        let mut hess = vec![0.0; tri_len(k)];
        let mut idx = 0;
        for i in 0..k {
            for j in i..k {
                let ha = w.hess[idx] * ln_u
                    + (w.grad[i] * self.grad[j] + w.grad[j] * self.grad[i]) / u
                    + w.value * self.hess[idx] / u
                    - w.value * self.grad[i] * self.grad[j] / (u * u);
                hess[idx] = z * (ha + da[i] * da[j]);
                idx += 1;
            }
        }
        HyperDual {
            value: z,
            grad,
            hess,
        }
    }
}

/// Evaluate `e` as a hyper-dual number: exact value, gradient, and Hessian
/// with respect to the `active` subset of the layout's variables, in the
/// order given.
pub fn eval_hyperdual(
    e: &Expr,
    layout: &VarLayout,
    point: &[f64],
    active: &[String],
    params: &BTreeMap<String, f64>,
) -> Result<HyperDual, EvalError> {
    if point.len() != layout.len() {
        return Err(EvalError::PointLength {
            expected: layout.len(),
            found: point.len(),
        });
    }
    // Map layout slot -> active index.
    let mut seed = vec![None; layout.len()];
    for (idx, name) in active.iter().enumerate() {
        let slot = layout
            .slot(name)
            .ok_or_else(|| EvalError::ActiveNotInLayout { name: name.clone() })?;
        seed[slot] = Some(idx);
    }
    let ctx = HdContext {
        layout,
        point,
        params,
        seed: &seed,
        k: active.len(),
    };
    ctx.eval(e)
}

struct HdContext<'a> {
    layout: &'a VarLayout,
    point: &'a [f64],
    params: &'a BTreeMap<String, f64>,
    seed: &'a [Option<usize>],
    k: usize,
}

fn domain(e: &Expr, reason: &str) -> EvalError {
    EvalError::Domain {
        subexpr: e.to_string(),
        reason: reason.to_owned(),
    }
}

impl HdContext<'_> {
    fn eval(&self, e: &Expr) -> Result<HyperDual, EvalError> {
        let out = match e {
            Expr::Const(v) => HyperDual::constant(*v, self.k),
            Expr::Ident(name) => match self.layout.slot(name) {
                Some(slot) => match self.seed[slot] {
                    Some(idx) => HyperDual::variable(self.point[slot], idx, self.k),
                    None => HyperDual::constant(self.point[slot], self.k),
                },
                None => HyperDual::constant(
                    *self
                        .params
                        .get(name)
                        .ok_or_else(|| EvalError::Unbound { name: name.clone() })?,
                    self.k,
                ),
            },
            Expr::Neg(inner) => self.eval(inner)?.neg(),
            Expr::Binary(op, lhs, rhs) => {
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => {
                        if b.value == 0.0 {
                            return Err(domain(e, "division by zero"));
                        }
                        a.div_unchecked(&b)
                    }
                    BinOp::Pow => {
                        if b.is_numerically_constant() {
                            match as_integer_exponent(b.value) {
                                Some(n) => {
                                    if a.value == 0.0 && n < 0 {
                                        return Err(domain(
                                            e,
                                            "zero base with negative exponent",
                                        ));
                                    }
                                    a.powi(n)
                                }
                                None => {
                                    if a.value <= 0.0 {
                                        return Err(domain(
                                            e,
                                            "non-integer power of a non-positive base",
                                        ));
                                    }
                                    a.pow_general(&b)
                                }
                            }
                        } else {
                            if a.value <= 0.0 {
                                return Err(domain(
                                    e,
                                    "variable exponent requires a positive base",
                                ));
                            }
                            a.pow_general(&b)
                        }
                    }
                }
            }
            Expr::Call(func, arg) => {
                let u = self.eval(arg)?;
                let x = u.value;
                match func {
                    Func::Sin => u.chain(x.sin(), x.cos(), -x.sin()),
                    Func::Cos => u.chain(x.cos(), -x.sin(), -x.cos()),
                    Func::Tan => {
                        if x.cos() == 0.0 {
                            return Err(domain(e, "tangent pole"));
                        }
                        let t = x.tan();
                        let sec2 = 1.0 + t * t;
                        u.chain(t, sec2, 2.0 * t * sec2)
                    }
                    Func::Exp => {
                        let ex = x.exp();
                        u.chain(ex, ex, ex)
                    }
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain(e, "logarithm of a non-positive value"));
                        }
                        u.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain(e, "square root of a negative value"));
                        }
                        if x == 0.0 && !u.is_numerically_constant() {
                            return Err(domain(e, "square root derivative at zero"));
                        }
                        let s = x.sqrt();
                        if x == 0.0 {
                            u.chain(s, 0.0, 0.0)
                        } else {
                            u.chain(s, 0.5 / s, -0.25 / (s * s * s))
                        }
                    }
                    Func::Abs => {
                        if x == 0.0 && !u.is_numerically_constant() {
                            return Err(EvalError::AbsKink {
                                subexpr: e.to_string(),
                            });
                        }
                        u.chain(x.abs(), x.signum(), 0.0)
                    }
                }
            }
        };
        if !out.value.is_finite() {
            return Err(domain(e, "non-finite result"));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Small dense matrices
// ---------------------------------------------------------------------------

/// Dense square matrix of dimension at most [`MAX_DIM`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SmallMatrix {
    pub fn zeros(n: usize) -> Result<SmallMatrix, LinAlgError> {
        if n > MAX_DIM {
            return Err(LinAlgError::DimensionCap { n, cap: MAX_DIM });
        }
        Ok(SmallMatrix {
            n,
            data: vec![0.0; n * n],
        })
    }

    pub fn identity(n: usize) -> Result<SmallMatrix, LinAlgError> {
        let mut m = SmallMatrix::zeros(n)?;
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SmallMatrix, LinAlgError> {
        let n = rows.len();
        let mut m = SmallMatrix::zeros(n)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinAlgError::Shape { n, len: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    fn max_row_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Solve `A x = b` by Gaussian elimination with partial pivoting.
    ///
    /// Reports [`LinAlgError::Singular`] with the offending pivot index when
    /// a pivot falls below `1e-12` times the largest row norm; dynamics
    /// modules translate that into a singular-Lagrangian diagnostic.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
        let cols = self.solve_columns(&[b.to_vec()])?;
        Ok(cols.into_iter().next().expect("one column"))
    }

    /// Solve for several right-hand sides at once (shared factorization).
    pub fn solve_columns(&self, bs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LinAlgError> {
        let n = self.n;
        for b in bs {
            if b.len() != n {
                return Err(LinAlgError::Shape { n, len: b.len() });
            }
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(LinAlgError::NonFinite);
        }
        if n == 0 {
            return Ok(bs.iter().map(|_| Vec::new()).collect());
        }
        let threshold = 1e-12 * self.max_row_norm();
        let mut a = self.data.clone();
        let mut rhs: Vec<Vec<f64>> = bs.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();

        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = a[perm[col] * n + col].abs();
            for row in (col + 1)..n {
                let mag = a[perm[row] * n + col].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            if pivot_mag < threshold || pivot_mag == 0.0 {
                return Err(LinAlgError::Singular {
                    pivot_index: col,
                    pivot_magnitude: pivot_mag,
                    threshold,
                });
            }
            perm.swap(col, pivot_row);
            let prow = perm[col];
            let pivot = a[prow * n + col];
            for row in (col + 1)..n {
                let r = perm[row];
                let factor = a[r * n + col] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[r * n + col] = 0.0;
                for j in (col + 1)..n {
                    a[r * n + j] -= factor * a[prow * n + j];
                }
                for b in rhs.iter_mut() {
                    b[r] -= factor * b[prow];
                }
            }
        }

        let mut out = Vec::with_capacity(rhs.len());
        for b in &rhs {
            let mut x = vec![0.0; n];
            for col in (0..n).rev() {
                let prow = perm[col];
                let mut acc = b[prow];
                for j in (col + 1)..n {
                    acc -= a[prow * n + j] * x[j];
                }
                x[col] = acc / a[prow * n + col];
            }
            out.push(x);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<SmallMatrix, LinAlgError> {
        let n = self.n;
        let eye: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let cols = self.solve_columns(&eye)?;
        let mut inv = SmallMatrix::zeros(n)?;
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                inv.set(i, j, *v);
            }
        }
        Ok(inv)
    }
}

/// Solve a linear system whose entries are hyper-dual numbers, propagating
/// first and second derivatives through the elimination. Pivoting is on the
/// value part. `a` is n-by-n row-major, `b` a single right-hand side.
pub fn solve_hyperdual(
    a: &[HyperDual],
    b: &[HyperDual],
    n: usize,
) -> Result<Vec<HyperDual>, LinAlgError> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let threshold = {
        let max_row = (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j].value().abs()).sum::<f64>())
            .fold(0.0, f64::max);
        1e-12 * max_row
    };
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_mag = a[perm[col] * n + col].value().abs();
        for row in (col + 1)..n {
            let mag = a[perm[row] * n + col].value().abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag < threshold || pivot_mag == 0.0 {
            return Err(LinAlgError::Singular {
                pivot_index: col,
                pivot_magnitude: pivot_mag,
                threshold,
            });
        }
        perm.swap(col, pivot_row);
        let prow = perm[col];
        for row in (col + 1)..n {
            let r = perm[row];
            let factor = a[r * n + col].div_unchecked(&a[prow * n + col]);
            for j in col..n {
                let delta = factor.mul(&a[prow * n + j]);
                a[r * n + j] = a[r * n + j].sub(&delta);
            }
            let delta = factor.mul(&b[prow]);
            b[r] = b[r].sub(&delta);
        }
    }
    let k = b[0].k();
    let mut x = vec![HyperDual::constant(0.0, k); n];
    for col in (0..n).rev() {
        let prow = perm[col];
        let mut acc = b[prow].clone();
        for j in (col + 1)..n {
            let delta = a[prow * n + j].mul(&x[j]);
            acc = acc.sub(&delta);
        }
        x[col] = acc.div_unchecked(&a[prow * n + col]);
    }
    Ok(x)
}

/// Convenience: plain value and gradient of `e` with respect to all layout
/// variables at `point`.
pub fn grad_all(
    e: &Expr,
    layout: &VarLayout,
    point: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<(f64, Vec<f64>), EvalError> {
    let hd = eval_hyperdual(e, layout, point, &layout.names().to_vec(), params)?;
    Ok((hd.value(), hd.grad().to_vec()))
}

/// Plain (non-dual) evaluation, re-exported next to the AD entry point.
pub fn eval_plain(
    e: &Expr,
    layout: &VarLayout,
    point: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<f64, EvalError> {
    eval(e, layout, point, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    fn hd(
        src: &str,
        vars: &[(&str, f64)],
        active: &[&str],
        pars: &[(&str, f64)],
    ) -> HyperDual {
        let layout =
            VarLayout::from_names(&vars.iter().map(|(n, _)| *n).collect::<Vec<_>>()).unwrap();
        let point: Vec<f64> = vars.iter().map(|(_, v)| *v).collect();
        let active: Vec<String> = active.iter().map(|s| s.to_string()).collect();
        eval_hyperdual(&parse(src).unwrap(), &layout, &point, &active, &params(pars)).unwrap()
    }

    #[test]
    fn bilinear_form() {
        let out = hd("q*v", &[("q", 2.0), ("v", 3.0)], &["q", "v"], &[]);
        assert_eq!(out.value(), 6.0);
        assert_eq!(out.grad(), &[3.0, 2.0]);
        assert_eq!(out.hess_at(0, 0), 0.0);
        assert_eq!(out.hess_at(0, 1), 1.0);
        assert_eq!(out.hess_at(1, 1), 0.0);
    }

    #[test]
    fn ho_lagrangian_velocity_block() {
        // grad and hess with respect to v only, at v = 2, m = k = 1
        let out = hd(
            "0.5*m*v^2 - 0.5*k*q^2",
            &[("q", 1.0), ("v", 2.0)],
            &["v"],
            &[("m", 1.0), ("k", 1.0)],
        );
        assert_eq!(out.grad(), &[2.0]);
        assert_eq!(out.hess_at(0, 0), 1.0);
    }

    #[test]
    fn value_matches_plain_eval_bitwise() {
        let sources = [
            "sin(q)*exp(v) + cos(q*v)",
            "q^3 - v^2/(1 + q^2)",
            "sqrt(1 + q^2) * log(2 + v^2)",
            "tan(q/4) + abs(v) - q^v",
        ];
        let layout = VarLayout::from_names(&["q", "v"]).unwrap();
        let point = [0.7, 1.3];
        let pars = params(&[]);
        for src in sources {
            let e = parse(src).unwrap();
            let plain = eval(&e, &layout, &point, &pars).unwrap();
            let dual = eval_hyperdual(
                &e,
                &layout,
                &point,
                &["q".to_string(), "v".to_string()],
                &pars,
            )
            .unwrap();
            assert_eq!(plain.to_bits(), dual.value().to_bits(), "{src}");
        }
    }

    /// Central finite differences on the plain evaluator: the independent
    /// oracle for gradients and Hessians.
    pub(crate) fn fd_grad_hess(
        e: &Expr,
        layout: &VarLayout,
        point: &[f64],
        active_slots: &[usize],
        pars: &BTreeMap<String, f64>,
        h1: f64,
        h2: f64,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = active_slots.len();
        let f = |pt: &[f64]| eval(e, layout, pt, pars).unwrap();
        let mut grad = vec![0.0; k];
        for (i, &s) in active_slots.iter().enumerate() {
            let mut plus = point.to_vec();
            let mut minus = point.to_vec();
            plus[s] += h1;
            minus[s] -= h1;
            grad[i] = (f(&plus) - f(&minus)) / (2.0 * h1);
        }
        let mut hess = vec![vec![0.0; k]; k];
        for (i, &si) in active_slots.iter().enumerate() {
            for (j, &sj) in active_slots.iter().enumerate() {
                if i == j {
                    let mut plus = point.to_vec();
                    let mut minus = point.to_vec();
                    plus[si] += h2;
                    minus[si] -= h2;
                    hess[i][i] = (f(&plus) - 2.0 * f(point) + f(&minus)) / (h2 * h2);
                } else {
                    let mut pp = point.to_vec();
                    let mut pm = point.to_vec();
                    let mut mp = point.to_vec();
                    let mut mm = point.to_vec();
                    pp[si] += h2;
                    pp[sj] += h2;
                    pm[si] += h2;
                    pm[sj] -= h2;
                    mp[si] -= h2;
                    mp[sj] += h2;
                    mm[si] -= h2;
                    mm[sj] -= h2;
                    hess[i][j] = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h2 * h2);
                }
            }
        }
        (grad, hess)
    }

    #[test]
    fn sin_exp_matches_finite_differences() {
        let layout = VarLayout::from_names(&["q", "v"]).unwrap();
        let e = parse("sin(q)*exp(v)").unwrap();
        let point = [0.3, 0.7];
        let pars = params(&[]);
        let dual = eval_hyperdual(
            &e,
            &layout,
            &point,
            &["q".to_string(), "v".to_string()],
            &pars,
        )
        .unwrap();
        let (g, h) = fd_grad_hess(&e, &layout, &point, &[0, 1], &pars, 1e-4, 1e-4);
        for i in 0..2 {
            let rel = (dual.grad()[i] - g[i]).abs() / g[i].abs().max(1.0);
            assert!(rel < 1e-6, "grad[{i}]: {} vs {}", dual.grad()[i], g[i]);
            for j in 0..2 {
                let rel = (dual.hess_at(i, j) - h[i][j]).abs() / h[i][j].abs().max(1.0);
                assert!(rel < 1e-4, "hess[{i}][{j}]");
            }
        }
    }

    #[test]
    fn every_function_node_matches_finite_differences() {
        // One composite per supported function, evaluated at a few points.
        let cases = [
            ("sin(q*v)", 0.4, 0.9),
            ("cos(q + v^2)", 0.4, 0.9),
            ("tan(q*v/3)", 0.5, 0.8),
            ("exp(q - v)", 0.4, 1.2),
            ("log(1 + q^2 + v^2)", 0.6, 0.3),
            ("sqrt(2 + q*v)", 0.5, 0.7),
            ("abs(q - v)", 1.5, 0.2),
            ("q^v", 1.7, 1.3),
            ("(q + v)^3", 0.4, 0.2),
            ("q/(v + 2)", 0.9, 0.4),
        ];
        let layout = VarLayout::from_names(&["q", "v"]).unwrap();
        let pars = params(&[]);
        let active = vec!["q".to_string(), "v".to_string()];
        for (src, q, v) in cases {
            let e = parse(src).unwrap();
            let point = [q, v];
            let dual = eval_hyperdual(&e, &layout, &point, &active, &pars).unwrap();
            let (g, h) = fd_grad_hess(&e, &layout, &point, &[0, 1], &pars, 1e-4, 1e-3);
            for i in 0..2 {
                let rel = (dual.grad()[i] - g[i]).abs() / g[i].abs().max(1.0);
                assert!(rel < 1e-6, "{src}: grad[{i}] {} vs {}", dual.grad()[i], g[i]);
                for j in 0..2 {
                    let rel = (dual.hess_at(i, j) - h[i][j]).abs() / h[i][j].abs().max(1.0);
                    assert!(
                        rel < 1e-4,
                        "{src}: hess[{i}][{j}] {} vs {}",
                        dual.hess_at(i, j),
                        h[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn abs_second_derivative_at_zero_is_an_error() {
        let layout = VarLayout::from_names(&["q"]).unwrap();
        let e = parse("abs(q)").unwrap();
        let err =
            eval_hyperdual(&e, &layout, &[0.0], &["q".to_string()], &params(&[])).unwrap_err();
        assert!(matches!(err, EvalError::AbsKink { .. }));
    }

    #[test]
    fn solve_identity() {
        let a = SmallMatrix::identity(3).unwrap();
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(a.solve(&b).unwrap(), b);
    }

    #[test]
    fn solve_diagonal() {
        let a = SmallMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(a.solve(&[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn solve_rank_deficient_reports_pivot() {
        let a = SmallMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        match a.solve(&[1.0, 2.0]).unwrap_err() {
            LinAlgError::Singular { pivot_index, .. } => assert_eq!(pivot_index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        assert!(matches!(
            SmallMatrix::zeros(MAX_DIM + 1),
            Err(LinAlgError::DimensionCap { .. })
        ));
    }

    #[test]
    fn solve_residual_bound_on_random_matrices() {
        // 1000 random well-conditioned systems: residual within the
        // documented bound.
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=8);
            let mut rows = vec![vec![0.0; n]; n];
            for (i, row) in rows.iter_mut().enumerate() {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
                // diagonal dominance keeps the sample well-conditioned
                row[i] += 4.0;
            }
            let a = SmallMatrix::from_rows(&rows).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let x = a.solve(&b).unwrap();
            let ax = a.mul_vec(&x);
            let resid = ax
                .iter()
                .zip(&b)
                .map(|(l, r)| (l - r).abs())
                .fold(0.0, f64::max);
            let a_norm = (0..n)
                .map(|i| (0..n).map(|j| a.get(i, j).abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let x_norm = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let b_norm = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(resid <= 1e-10 * (a_norm * x_norm + b_norm));
        }
    }

    #[test]
    fn hyperdual_solve_matches_value_solve() {
        // A 2x2 system whose entries depend on one active variable.
        let layout = VarLayout::from_names(&["r"]).unwrap();
        let point = [2.0];
        let pars = params(&[]);
        let active = vec!["r".to_string()];
        let entry = |src: &str| {
            eval_hyperdual(&parse(src).unwrap(), &layout, &point, &active, &pars).unwrap()
        };
        let a = vec![entry("1"), entry("0"), entry("0"), entry("r^2")];
        let b = vec![entry("r"), entry("r^3")];
        let x = solve_hyperdual(&a, &b, 2).unwrap();
        // x = (r, r). Values and derivatives are known in closed form.
        assert!((x[0].value() - 2.0).abs() < 1e-14);
        assert!((x[1].value() - 2.0).abs() < 1e-14);
        assert!((x[0].grad()[0] - 1.0).abs() < 1e-14);
        assert!((x[1].grad()[0] - 1.0).abs() < 1e-14);
        assert!(x[0].hess_at(0, 0).abs() < 1e-14);
        assert!(x[1].hess_at(0, 0).abs() < 1e-14);
    }

    #[test]
    fn packed_hessian_is_exactly_symmetric() {
        let out = hd(
            "sin(q)*v^2 + q^3/(1 + v^2)",
            &[("q", 0.8), ("v", 1.1)],
            &["q", "v"],
            &[],
        );
        assert_eq!(out.hess_at(0, 1).to_bits(), out.hess_at(1, 0).to_bits());
    }
}
