//! Newtonian mechanics on Riemannian configuration spaces: metric fields,
//! Levi-Civita Christoffel symbols, geodesics, curvature, the Newton
//! equation, holonomic force projection, and nonholonomic Lagrange
//! multipliers for velocity-linear constraints.
//!
//! Christoffel derivatives are obtained by running the Christoffel formula
//! through hyper-dual position variables (the metric entries are evaluated
//! with exact gradients and Hessians, and the linear solve propagates first
//! derivatives), never by symbolic differentiation.

use std::collections::BTreeMap;

use crate::autodiff::{eval_hyperdual, solve_hyperdual, HyperDual, SmallMatrix};
use crate::error::{LinAlgError, MechError, Result};
use crate::expr::{eval, Expr, VarLayout};
use crate::phase::{velocity_name, TIME_NAME};

const METRIC_SYMMETRY_TOL: f64 = 1e-12;
const CONSTRAINT_VELOCITY_TOL: f64 = 1e-9;

/// A metric given entry-wise as expressions `g_ij(q)` over the coordinates.
#[derive(Debug, Clone)]
pub struct MetricField {
    coords: Vec<String>,
    entries: Vec<Vec<Expr>>,
}

impl MetricField {
    pub fn new(coords: Vec<String>, entries: Vec<Vec<Expr>>) -> Result<MetricField> {
        let n = coords.len();
        if entries.len() != n || entries.iter().any(|row| row.len() != n) {
            return Err(MechError::Validation(format!(
                "metric must be a {n}x{n} array of expressions"
            )));
        }
        Ok(MetricField { coords, entries })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn entries(&self) -> &[Vec<Expr>] {
        &self.entries
    }

    fn base_layout(&self) -> Result<VarLayout> {
        Ok(VarLayout::from_names(&self.coords)?)
    }

    /// Evaluate the metric at `q`, checking symmetry and positive
    /// definiteness.
    pub fn value_at(&self, q: &[f64], params: &BTreeMap<String, f64>) -> Result<SmallMatrix> {
        let layout = self.base_layout()?;
        let n = self.n();
        let mut m = SmallMatrix::zeros(n)?;
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, eval(&self.entries[i][j], &layout, q, params)?);
            }
        }
        let scale = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).abs())
            .fold(1.0_f64, f64::max);
        for i in 0..n {
            for j in (i + 1)..n {
                if (m.get(i, j) - m.get(j, i)).abs() > METRIC_SYMMETRY_TOL * scale {
                    return Err(MechError::Validation(format!(
                        "metric is not symmetric at the queried point: g[{i}][{j}] = {} vs g[{j}][{i}] = {}",
                        m.get(i, j),
                        m.get(j, i)
                    )));
                }
            }
        }
        cholesky_check(&m)?;
        Ok(m)
    }

    /// Evaluate every entry as a hyper-dual number over the coordinates.
    fn duals_at(
        &self,
        q: &[f64],
        params: &BTreeMap<String, f64>,
    ) -> Result<Vec<Vec<HyperDual>>> {
        let layout = self.base_layout()?;
        let active = layout.names().to_vec();
        let mut out = Vec::with_capacity(self.n());
        for row in &self.entries {
            let mut r = Vec::with_capacity(self.n());
            for e in row {
                r.push(eval_hyperdual(e, &layout, q, &active, params)?);
            }
            out.push(r);
        }
        Ok(out)
    }
}

fn cholesky_check(m: &SmallMatrix) -> Result<()> {
    let n = m.n();
    let mut l = vec![vec![0.0_f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(MechError::NotPositiveDefinite {
                        detail: format!("Cholesky pivot {i} is {sum:e}"),
                    });
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(())
}

fn singular_metric(err: LinAlgError) -> MechError {
    match err {
        LinAlgError::Singular {
            pivot_index,
            pivot_magnitude,
            ..
        } => MechError::SingularMetric {
            detail: format!("pivot {pivot_index} has magnitude {pivot_magnitude:e}"),
        },
        other => MechError::LinAlg(other),
    }
}

/// Christoffel symbols and their first derivatives at a point, as produced
/// by the hyper-dual pipeline. Indexing is `gamma[k][i][j]` for
/// `Gamma^k_{ij}`; `grad[k][i][j][m]` holds `d Gamma^k_{ij} / d q_m`.
struct ChristoffelDuals {
    n: usize,
    gamma: Vec<HyperDual>, // flattened k*n*n + i*n + j
}

impl ChristoffelDuals {
    fn at(&self, k: usize, i: usize, j: usize) -> &HyperDual {
        &self.gamma[k * self.n * self.n + i * self.n + j]
    }
}

fn christoffel_duals(
    g: &MetricField,
    q: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<ChristoffelDuals> {
    let n = g.n();
    // symmetry / positive definiteness gate
    g.value_at(q, params)?;
    let duals = g.duals_at(q, params)?;

    // Metric matrix as first-order duals: values and gradients propagate
    // exactly through the solve, which is all the curvature needs.
    let mut g_flat = Vec::with_capacity(n * n);
    for row in &duals {
        for e in row {
            g_flat.push(HyperDual::first_order(e.value(), e.grad().to_vec()));
        }
    }

    // rhs_{l,(i,j)} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij), with its own
    // gradient assembled from the metric Hessians.
    let rhs_dual = |l: usize, i: usize, j: usize| -> HyperDual {
        let value = 0.5
            * (duals[j][l].grad()[i] + duals[i][l].grad()[j] - duals[i][j].grad()[l]);
        let grad: Vec<f64> = (0..n)
            .map(|m| {
                0.5 * (duals[j][l].hess_at(i, m) + duals[i][l].hess_at(j, m)
                    - duals[i][j].hess_at(l, m))
            })
            .collect();
        HyperDual::first_order(value, grad)
    };

    let mut gamma = vec![HyperDual::constant(0.0, n); n * n * n];
    for i in 0..n {
        for j in i..n {
            let rhs: Vec<HyperDual> = (0..n).map(|l| rhs_dual(l, i, j)).collect();
            let x = solve_hyperdual(&g_flat, &rhs, n).map_err(singular_metric)?;
            for (k, xk) in x.iter().enumerate() {
                gamma[k * n * n + i * n + j] = xk.clone();
                gamma[k * n * n + j * n + i] = xk.clone();
            }
        }
    }
    Ok(ChristoffelDuals { n, gamma })
}

/// Christoffel symbols `Gamma^k_{ij}` of the Levi-Civita connection at `q`,
/// indexed `[k][i][j]`; symmetric in the lower pair.
pub fn christoffel(
    g: &MetricField,
    q: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let duals = christoffel_duals(g, q, params)?;
    let n = duals.n;
    Ok((0..n)
        .map(|k| {
            (0..n)
                .map(|i| (0..n).map(|j| duals.at(k, i, j).value()).collect())
                .collect()
        })
        .collect())
}

/// Geodesic acceleration `dv^k = -Gamma^k_{ij} v^i v^j`.
pub fn geodesic_accel(
    g: &MetricField,
    q: &[f64],
    v: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    let gamma = christoffel(g, q, params)?;
    let n = g.n();
    Ok((0..n)
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc -= gamma[k][i][j] * v[i] * v[j];
                }
            }
            acc
        })
        .collect())
}

/// A contravariant force field with expression components `F^i(q [, v, t])`.
#[derive(Debug, Clone)]
pub struct ForceField {
    components: Vec<Expr>,
}

impl ForceField {
    pub fn new(components: Vec<Expr>) -> ForceField {
        ForceField { components }
    }

    pub fn zero(n: usize) -> ForceField {
        ForceField {
            components: vec![Expr::constant(0.0); n],
        }
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn velocity_dependent(&self, coords: &[String]) -> bool {
        self.components.iter().any(|c| {
            coords
                .iter()
                .any(|coord| c.depends_on(&velocity_name(coord)))
        })
    }

    pub fn time_dependent(&self) -> bool {
        self.components.iter().any(|c| c.depends_on(TIME_NAME))
    }

    /// Evaluate at `(q, v, t)` over the layout `q.. v.. t`.
    pub fn eval_at(
        &self,
        coords: &[String],
        q: &[f64],
        v: &[f64],
        t: f64,
        params: &BTreeMap<String, f64>,
    ) -> Result<Vec<f64>> {
        let layout = force_layout(coords)?;
        let mut point = q.to_vec();
        point.extend_from_slice(v);
        point.push(t);
        self.components
            .iter()
            .map(|c| Ok(eval(c, &layout, &point, params)?))
            .collect()
    }
}

fn force_layout(coords: &[String]) -> Result<VarLayout> {
    let mut names: Vec<String> = coords.to_vec();
    names.extend(coords.iter().map(|c| velocity_name(c)));
    names.push(TIME_NAME.to_owned());
    Ok(VarLayout::new(names)?)
}

/// Newton equation acceleration `dv^k = F^k - Gamma^k_{ij} v^i v^j`.
pub fn newton_field(
    g: &MetricField,
    force: &ForceField,
    q: &[f64],
    v: &[f64],
    t: f64,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    if force.components().len() != g.n() {
        return Err(MechError::Validation(format!(
            "force field has {} components, metric dimension is {}",
            force.components().len(),
            g.n()
        )));
    }
    let mut accel = geodesic_accel(g, q, v, params)?;
    let f = force.eval_at(g.coords(), q, v, t, params)?;
    for (a, fi) in accel.iter_mut().zip(&f) {
        *a += fi;
    }
    Ok(accel)
}

/// Curvature data at a point.
#[derive(Debug, Clone)]
pub struct Curvature {
    /// `riemann[l][i][j][k]` = `R^l_{ijk}`.
    pub riemann: Vec<Vec<Vec<Vec<f64>>>>,
    /// `ricci[j][k]` = `R_{jk} = R^i_{ijk}`.
    pub ricci: Vec<Vec<f64>>,
    /// Scalar curvature `S = g^{jk} R_{jk}`.
    pub scalar: f64,
}

/// Curvature tensor
/// `R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
///            + Gamma^m_{jk} Gamma^l_{im} - Gamma^m_{ik} Gamma^l_{jm}`,
/// with Ricci and scalar contractions.
pub fn curvature(
    g: &MetricField,
    q: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<Curvature> {
    let duals = christoffel_duals(g, q, params)?;
    let n = duals.n;
    let gamma = |k: usize, i: usize, j: usize| duals.at(k, i, j).value();
    let dgamma = |k: usize, i: usize, j: usize, m: usize| duals.at(k, i, j).grad()[m];

    let mut riemann = vec![vec![vec![vec![0.0; n]; n]; n]; n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut r = dgamma(l, j, k, i) - dgamma(l, i, k, j);
                    for m in 0..n {
                        r += gamma(m, j, k) * gamma(l, i, m) - gamma(m, i, k) * gamma(l, j, m);
                    }
                    riemann[l][i][j][k] = r;
                }
            }
        }
    }
    let mut ricci = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            ricci[j][k] = (0..n).map(|i| riemann[i][i][j][k]).sum();
        }
    }
    let g_val = g.value_at(q, params)?;
    let g_inv = g_val.inverse().map_err(singular_metric)?;
    let mut scalar = 0.0;
    for j in 0..n {
        for k in 0..n {
            scalar += g_inv.get(j, k) * ricci[j][k];
        }
    }
    Ok(Curvature {
        riemann,
        ricci,
        scalar,
    })
}

/// Result of the d'Alembert orthogonal projection of a force.
#[derive(Debug, Clone)]
pub struct ProjectedForce {
    /// Tangential part `F^S`, metric-orthogonal to every constraint normal.
    pub tangential: Vec<f64>,
    /// Normal part; `F = tangential + normal`.
    pub normal: Vec<f64>,
}

/// Project a force onto the holonomic constraint surface `phi_a(q) = 0`:
/// the normal space is spanned by `X_a = g^{-1} d phi_a`, and the normal
/// component solves the Gram system `dphi_a(X_b) lambda^b = dphi_a(F)`.
pub fn holonomic_project(
    g: &MetricField,
    force_value: &[f64],
    constraints: &[Expr],
    q: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<ProjectedForce> {
    let n = g.n();
    if constraints.is_empty() {
        return Ok(ProjectedForce {
            tangential: force_value.to_vec(),
            normal: vec![0.0; n],
        });
    }
    let layout = VarLayout::from_names(g.coords())?;
    let g_val = g.value_at(q, params)?;
    let mut dphis = Vec::with_capacity(constraints.len());
    for phi in constraints {
        let hd = eval_hyperdual(phi, &layout, q, &layout.names().to_vec(), params)?;
        dphis.push(hd.grad().to_vec());
    }
    // normals X_a = g^{-1} dphi_a
    let normals = g_val
        .solve_columns(&dphis)
        .map_err(|e| match e {
            LinAlgError::Singular { .. } => singular_metric(e),
            other => MechError::LinAlg(other),
        })?;
    let r = constraints.len();
    let mut gram = SmallMatrix::zeros(r)?;
    for a in 0..r {
        for b in 0..r {
            let dot: f64 = dphis[a].iter().zip(&normals[b]).map(|(d, x)| d * x).sum();
            gram.set(a, b, dot);
        }
    }
    let rhs: Vec<f64> = dphis
        .iter()
        .map(|d| d.iter().zip(force_value).map(|(di, fi)| di * fi).sum())
        .collect();
    let lambda = gram.solve(&rhs).map_err(|e| match e {
        LinAlgError::Singular { .. } => MechError::DependentConstraints,
        other => MechError::LinAlg(other),
    })?;
    let mut normal = vec![0.0; n];
    for (a, l) in lambda.iter().enumerate() {
        for i in 0..n {
            normal[i] += l * normals[a][i];
        }
    }
    let tangential: Vec<f64> = force_value
        .iter()
        .zip(&normal)
        .map(|(f, nn)| f - nn)
        .collect();
    Ok(ProjectedForce { tangential, normal })
}

/// Result of a nonholonomic multiplier solve.
#[derive(Debug, Clone)]
pub struct NonholonomicStep {
    /// Accelerations satisfying Newton's equation plus the constraint force.
    pub accelerations: Vec<f64>,
    /// Lagrange multipliers, one per constraint.
    pub multipliers: Vec<f64>,
    /// Residual of the enforced condition `d/dt (a^k_j v^j) = 0`.
    pub derivative_residual: f64,
}

/// One nonholonomic dynamics evaluation for constraints linear in the
/// velocities, `phi^k(q, v) = a^k_j(q) v^j = 0`. The constraint force is
/// `R = f_k a^k_j g^{jk'} d/dq_{k'}`, with multipliers from the induced
/// linear system; constraints that are not velocity-linear are rejected.
pub fn nonholonomic_step(
    g: &MetricField,
    force: &ForceField,
    constraints: &[Expr],
    q: &[f64],
    v: &[f64],
    t: f64,
    params: &BTreeMap<String, f64>,
) -> Result<NonholonomicStep> {
    let n = g.n();
    let base = newton_field(g, force, q, v, t, params)?;
    if constraints.is_empty() {
        return Ok(NonholonomicStep {
            accelerations: base,
            multipliers: Vec::new(),
            derivative_residual: 0.0,
        });
    }
    // Layout (q.., v..) for constraint inspection.
    let mut names: Vec<String> = g.coords().to_vec();
    names.extend(g.coords().iter().map(|c| velocity_name(c)));
    let layout = VarLayout::new(names)?;
    let mut point = q.to_vec();
    point.extend_from_slice(v);
    let active = layout.names().to_vec();

    let r = constraints.len();
    let mut a = vec![vec![0.0; n]; r]; // a[k][j] = dphi^k/dv_j
    let mut dq_dot_v = vec![0.0; r]; // sum_l dphi^k/dq_l v_l
    for (k, phi) in constraints.iter().enumerate() {
        let hd = eval_hyperdual(phi, &layout, &point, &active, params)?;
        // linearity in v: zero vv Hessian block and Euler homogeneity
        let scale = hd.grad().iter().map(|g| g.abs()).fold(1.0_f64, f64::max);
        for i in 0..n {
            for j in 0..n {
                if hd.hess_at(n + i, n + j).abs() > 1e-12 * scale {
                    return Err(MechError::NonlinearVelocityConstraint {
                        constraint: phi.to_string(),
                    });
                }
            }
        }
        let homog: f64 = (0..n).map(|j| hd.grad()[n + j] * v[j]).sum();
        if (hd.value() - homog).abs() > 1e-9 * scale.max(hd.value().abs()) {
            return Err(MechError::NonlinearVelocityConstraint {
                constraint: phi.to_string(),
            });
        }
        if hd.value().abs() > CONSTRAINT_VELOCITY_TOL * scale {
            return Err(MechError::OffConstraintVelocity {
                residual: hd.value().abs(),
                tolerance: CONSTRAINT_VELOCITY_TOL * scale,
            });
        }
        for j in 0..n {
            a[k][j] = hd.grad()[n + j];
        }
        dq_dot_v[k] = (0..n).map(|l| hd.grad()[l] * v[l]).sum();
    }

    let g_val = g.value_at(q, params)?;
    // columns g^{-1} a^k
    let ginv_at = g_val
        .solve_columns(&a)
        .map_err(singular_metric)?;
    let mut gram = SmallMatrix::zeros(r)?;
    for k in 0..r {
        for l in 0..r {
            let dot: f64 = a[k].iter().zip(&ginv_at[l]).map(|(x, y)| x * y).sum();
            gram.set(k, l, dot);
        }
    }
    let rhs: Vec<f64> = (0..r)
        .map(|k| {
            -dq_dot_v[k]
                - a[k]
                    .iter()
                    .zip(&base)
                    .map(|(ak, b)| ak * b)
                    .sum::<f64>()
        })
        .collect();
    let multipliers = gram.solve(&rhs).map_err(|e| match e {
        LinAlgError::Singular { .. } => MechError::DependentConstraints,
        other => MechError::LinAlg(other),
    })?;

    let mut accelerations = base;
    for (k, f) in multipliers.iter().enumerate() {
        for j in 0..n {
            accelerations[j] += f * ginv_at[k][j];
        }
    }
    let derivative_residual = (0..r)
        .map(|k| {
            (dq_dot_v[k]
                + a[k]
                    .iter()
                    .zip(&accelerations)
                    .map(|(ak, acc)| ak * acc)
                    .sum::<f64>())
            .abs()
        })
        .fold(0.0, f64::max);
    Ok(NonholonomicStep {
        accelerations,
        multipliers,
        derivative_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    fn metric(coords: &[&str], rows: &[&[&str]]) -> MetricField {
        let entries = rows
            .iter()
            .map(|row| row.iter().map(|s| parse(s).unwrap()).collect())
            .collect();
        MetricField::new(coords.iter().map(|s| s.to_string()).collect(), entries).unwrap()
    }

    fn euclidean2() -> MetricField {
        metric(&["x", "y"], &[&["1", "0"], &["0", "1"]])
    }

    fn polar() -> MetricField {
        metric(&["r", "phi"], &[&["1", "0"], &["0", "r^2"]])
    }

    fn sphere() -> MetricField {
        metric(&["theta", "phi"], &[&["1", "0"], &["0", "sin(theta)^2"]])
    }

    /// Brute-force Christoffel oracle: the displayed formula with centered
    /// finite differences on the metric entries, independent of the
    /// hyper-dual pipeline.
    fn christoffel_fd(g: &MetricField, q: &[f64], pr: &BTreeMap<String, f64>) -> Vec<Vec<Vec<f64>>> {
        let n = g.n();
        let h = 1e-6;
        let layout = VarLayout::from_names(g.coords()).unwrap();
        let gv = |q: &[f64], i: usize, j: usize| eval(&g.entries()[i][j], &layout, q, pr).unwrap();
        let dg = |i: usize, j: usize, l: usize| {
            let mut plus = q.to_vec();
            let mut minus = q.to_vec();
            plus[l] += h;
            minus[l] -= h;
            (gv(&plus, i, j) - gv(&minus, i, j)) / (2.0 * h)
        };
        let g_val = g.value_at(q, pr).unwrap();
        let g_inv = g_val.inverse().unwrap();
        let mut out = vec![vec![vec![0.0; n]; n]; n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += 0.5 * g_inv.get(k, l) * (dg(j, l, i) + dg(i, l, j) - dg(i, j, l));
                    }
                    out[k][i][j] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn euclidean_christoffel_vanishes() {
        let gamma = christoffel(&euclidean2(), &[0.3, -1.2], &params(&[])).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(gamma[k][i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn polar_christoffel_at_r2() {
        let pr = params(&[]);
        let q = [2.0, 0.7];
        let gamma = christoffel(&polar(), &q, &pr).unwrap();
        assert!((gamma[0][1][1] + 2.0).abs() < 1e-12); // Gamma^r_{phi phi} = -r
        assert!((gamma[1][0][1] - 0.5).abs() < 1e-12); // Gamma^phi_{r phi} = 1/r
        assert!((gamma[1][1][0] - 0.5).abs() < 1e-12);
        // everything else zero
        assert!(gamma[0][0][0].abs() < 1e-12);
        assert!(gamma[0][0][1].abs() < 1e-12);
        assert!(gamma[1][1][1].abs() < 1e-12);
        // against the finite-difference oracle
        let fd = christoffel_fd(&polar(), &q, &pr);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((gamma[k][i][j] - fd[k][i][j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn sphere_christoffel_at_pi_over_4() {
        let q = [std::f64::consts::FRAC_PI_4, 0.3];
        let gamma = christoffel(&sphere(), &q, &params(&[])).unwrap();
        assert!((gamma[0][1][1] + 0.5).abs() < 1e-12); // -sin cos = -1/2
        assert!((gamma[1][0][1] - 1.0).abs() < 1e-12); // cot = 1
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices_at_random_points() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(31);
        // a metric with genuinely position-dependent off-diagonal entries
        let g = metric(
            &["x", "y"],
            &[
                &["2 + x^2", "0.3*x*y"],
                &["0.3*x*y", "1 + y^2"],
            ],
        );
        let pr = params(&[]);
        for _ in 0..20 {
            let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let gamma = christoffel(&g, &q, &pr).unwrap();
            let fd = christoffel_fd(&g, &q, &pr);
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((gamma[k][i][j] - gamma[k][j][i]).abs() <= 1e-12);
                        assert!(
                            (gamma[k][i][j] - fd[k][i][j]).abs() < 1e-7,
                            "Gamma[{k}][{i}][{j}]"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn geodesic_accelerations() {
        let pr = params(&[]);
        // Euclidean: zero
        let a = geodesic_accel(&euclidean2(), &[0.1, 0.2], &[1.0, -2.0], &pr).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
        // polar at (1, 0) with v = (0, 1): dv_r = r vphi^2 = 1
        let a = geodesic_accel(&polar(), &[1.0, 0.0], &[0.0, 1.0], &pr).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12);
        assert!(a[1].abs() < 1e-12);
        // great circle on the equator stays geodesic
        let a = geodesic_accel(
            &sphere(),
            &[std::f64::consts::FRAC_PI_2, 0.0],
            &[0.0, 1.0],
            &pr,
        )
        .unwrap();
        assert!(a[0].abs() < 1e-12 && a[1].abs() < 1e-12);
    }

    #[test]
    fn newton_field_zero_force_is_geodesic() {
        let pr = params(&[]);
        let q = [1.3, 0.4];
        let v = [0.2, 0.8];
        let a = newton_field(&polar(), &ForceField::zero(2), &q, &v, 0.0, &pr).unwrap();
        let b = geodesic_accel(&polar(), &q, &v, &pr).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn newton_field_matches_kepler_euler_lagrange() {
        // metric m diag(1, r^2) with radial force K/(m r^2) reproduces the
        // Kepler Euler-Lagrange accelerations (cross-module oracle)
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(13);
        let g = metric(&["r", "phi"], &[&["m", "0"], &["0", "m*r^2"]]);
        let force = ForceField::new(vec![
            parse("K/(m*r^2)").unwrap(),
            parse("0").unwrap(),
        ]);
        let pr = params(&[("m", 1.0), ("K", -1.0)]);
        let lag = parse("0.5*m*(vr^2 + r^2*vphi^2) - K/r").unwrap();
        let cs = vec!["r".to_string(), "phi".to_string()];
        for _ in 0..50 {
            let q = [rng.gen_range(0.5..2.5), rng.gen_range(-3.0..3.0)];
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let a = newton_field(&g, &force, &q, &v, 0.0, &pr).unwrap();
            let spt =
                crate::phase::SymplecticPoint::tangent(q.to_vec(), v.to_vec()).unwrap();
            let el = crate::symplectic::euler_lagrange_field(&lag, &cs, &spt, &pr).unwrap();
            assert!((a[0] - el.components[2]).abs() <= 1e-10);
            assert!((a[1] - el.components[3]).abs() <= 1e-10);
        }
        // constant force in the Euclidean metric: uniform acceleration
        let f = ForceField::new(vec![parse("3").unwrap(), parse("-1").unwrap()]);
        let a = newton_field(&euclidean2(), &f, &[0.4, 0.1], &[5.0, -2.0], 0.0, &params(&[]))
            .unwrap();
        assert_eq!(a, vec![3.0, -1.0]);
    }

    #[test]
    fn curvature_flat_cases() {
        let pr = params(&[]);
        let c = curvature(&euclidean2(), &[0.7, -0.3], &pr).unwrap();
        assert_eq!(c.scalar, 0.0);
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert_eq!(c.riemann[l][i][j][k], 0.0);
                    }
                }
            }
        }
        // the plane in polar coordinates is still flat
        let c = curvature(&polar(), &[1.7, 0.4], &pr).unwrap();
        assert!(c.scalar.abs() <= 1e-10, "polar scalar {:e}", c.scalar);
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert!(c.riemann[l][i][j][k].abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn unit_sphere_scalar_curvature_is_two() {
        let c = curvature(&sphere(), &[std::f64::consts::FRAC_PI_3, 0.2], &params(&[])).unwrap();
        assert!((c.scalar - 2.0).abs() <= 1e-8, "S = {}", c.scalar);
        // antisymmetry in the first two lower indices
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert!(
                            (c.riemann[l][i][j][k] + c.riemann[l][j][i][k]).abs() <= 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn metric_must_be_positive_definite() {
        let g = metric(&["x", "y"], &[&["1", "0"], &["0", "-1"]]);
        assert!(matches!(
            g.value_at(&[0.0, 0.0], &params(&[])),
            Err(MechError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn holonomic_projection_axis_plane() {
        let g = euclidean2();
        let phi = parse("y").unwrap();
        let out = holonomic_project(&g, &[1.0, 2.0], &[phi], &[0.5, 0.0], &params(&[])).unwrap();
        assert_eq!(out.tangential, vec![1.0, 0.0]);
        assert_eq!(out.normal, vec![0.0, 2.0]);
    }

    #[test]
    fn holonomic_projection_circle() {
        let g = euclidean2();
        let phi = parse("x^2 + y^2 - 1").unwrap();
        let out = holonomic_project(&g, &[3.0, 4.0], &[phi], &[1.0, 0.0], &params(&[])).unwrap();
        assert!((out.tangential[0]).abs() < 1e-14);
        assert!((out.tangential[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn holonomic_projection_zero_force() {
        let g = euclidean2();
        let phi = parse("x + y").unwrap();
        let out = holonomic_project(&g, &[0.0, 0.0], &[phi], &[0.3, -0.3], &params(&[])).unwrap();
        assert_eq!(out.tangential, vec![0.0, 0.0]);
        assert_eq!(out.normal, vec![0.0, 0.0]);
    }

    #[test]
    fn holonomic_dependent_gradients_rejected() {
        let g = euclidean2();
        let phi1 = parse("x + y").unwrap();
        let phi2 = parse("2*x + 2*y").unwrap();
        assert!(matches!(
            holonomic_project(&g, &[1.0, 0.0], &[phi1, phi2], &[0.0, 0.0], &params(&[])),
            Err(MechError::DependentConstraints)
        ));
    }

    #[test]
    fn holonomic_tangential_part_is_orthogonal_to_normals() {
        // g(F^S, X_a) = 0 on a curved metric
        let g = polar();
        let phi = parse("r - 1.5").unwrap();
        let pr = params(&[]);
        let q = [1.5, 0.8];
        let out = holonomic_project(&g, &[0.7, -0.4], &[phi.clone()], &q, &pr).unwrap();
        let layout = VarLayout::from_names(g.coords()).unwrap();
        let hd = eval_hyperdual(&phi, &layout, &q, &layout.names().to_vec(), &pr).unwrap();
        // g(F^S, g^{-1} dphi) = dphi(F^S)
        let dot: f64 = hd
            .grad()
            .iter()
            .zip(&out.tangential)
            .map(|(d, f)| d * f)
            .sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn nonholonomic_flat_constraint_cancels_gravity() {
        let g = euclidean2();
        let force = ForceField::new(vec![parse("0").unwrap(), parse("-9.8").unwrap()]);
        let phi = parse("vy").unwrap();
        let out = nonholonomic_step(
            &g,
            &force,
            &[phi],
            &[0.0, 1.0],
            &[2.0, 0.0],
            0.0,
            &params(&[]),
        )
        .unwrap();
        assert_eq!(out.accelerations, vec![0.0, 0.0]);
        assert!((out.multipliers[0] - 9.8).abs() < 1e-14);
    }

    #[test]
    fn nonholonomic_no_constraints_is_plain_newton() {
        let g = polar();
        let force = ForceField::new(vec![parse("0.3").unwrap(), parse("0").unwrap()]);
        let pr = params(&[]);
        let q = [1.2, 0.5];
        let v = [0.4, -0.2];
        let out = nonholonomic_step(&g, &force, &[], &q, &v, 0.0, &pr).unwrap();
        let plain = newton_field(&g, &force, &q, &v, 0.0, &pr).unwrap();
        assert_eq!(out.accelerations, plain);
        assert!(out.multipliers.is_empty());
    }

    #[test]
    fn knife_edge_constraint_derivative_vanishes() {
        let g = euclidean2();
        let force = ForceField::new(vec![parse("1.3").unwrap(), parse("-2.1").unwrap()]);
        let theta: f64 = 0.6;
        let phi = parse(&format!("vy*{} - vx*{}", theta.cos(), theta.sin())).unwrap();
        // velocity along the blade direction (cos theta, sin theta)
        let speed = 0.8;
        let v = [speed * theta.cos(), speed * theta.sin()];
        let out = nonholonomic_step(&g, &force, &[phi], &[0.2, 0.1], &v, 0.0, &params(&[]))
            .unwrap();
        assert!(out.derivative_residual <= 1e-12);
    }

    #[test]
    fn nonlinear_velocity_constraint_rejected() {
        let g = euclidean2();
        let force = ForceField::zero(2);
        let phi = parse("vx^2 + vy^2 - 1").unwrap();
        let err = nonholonomic_step(
            &g,
            &force,
            &[phi],
            &[0.0, 0.0],
            &[1.0, 0.0],
            0.0,
            &params(&[]),
        )
        .unwrap_err();
        assert!(matches!(err, MechError::NonlinearVelocityConstraint { .. }));
    }

    #[test]
    fn off_constraint_velocity_rejected() {
        let g = euclidean2();
        let force = ForceField::zero(2);
        let phi = parse("vy").unwrap();
        let err = nonholonomic_step(
            &g,
            &force,
            &[phi],
            &[0.0, 0.0],
            &[1.0, 0.5],
            0.0,
            &params(&[]),
        )
        .unwrap_err();
        assert!(matches!(err, MechError::OffConstraintVelocity { .. }));
    }

    #[test]
    fn force_dependence_flags() {
        let cs = vec!["x".to_string(), "y".to_string()];
        let f = ForceField::new(vec![parse("-k*x").unwrap(), parse("0").unwrap()]);
        assert!(!f.velocity_dependent(&cs));
        assert!(!f.time_dependent());
        let f = ForceField::new(vec![parse("-c*vx").unwrap(), parse("cos(t)").unwrap()]);
        assert!(f.velocity_dependent(&cs));
        assert!(f.time_dependent());
    }
}
