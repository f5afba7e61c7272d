//! Autonomous conservative dynamics in Darboux coordinates: Hamiltonian
//! vector fields, the coordinate Poisson bracket, the Lagrangian formalism
//! (Cartan data and the Euler-Lagrange SODE), the Legendre map, the
//! Lagrangian/Hamiltonian equivalence residual, the Hamilton-Jacobi
//! residual, and an a-posteriori symplecticity check of the flow.
//!
//! Abstract forms never materialize; the engine works with their coordinate
//! consequences only.

use std::collections::BTreeMap;

use crate::autodiff::eval_hyperdual;
use crate::error::{MechError, Result};
use crate::expr::{Expr, VarLayout};
use crate::integrate::{integrate, IntegratorConfig};
pub use crate::lagdata::LagrangianData;
use crate::phase::{symplectic_layout, FieldEval, Side, SymplecticPoint};

fn expect_side(pt_side: Side, want: Side, what: &str) -> Result<()> {
    if pt_side != want {
        return Err(MechError::Validation(format!(
            "{what} expects a {} point",
            match want {
                Side::Tangent => "tangent (q, v)",
                Side::Cotangent => "cotangent (q, p)",
            }
        )));
    }
    Ok(())
}

/// Hamiltonian vector field `X_h` in canonical coordinates:
/// `dq_i/dt = dh/dp_i`, `dp_i/dt = -dh/dq_i`.
pub fn hamiltonian_field(
    h: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<FieldEval> {
    expect_side(pt.side, Side::Cotangent, "hamiltonian_field")?;
    let n = pt.n();
    let layout = symplectic_layout(coords, Side::Cotangent)?;
    let point = pt.flat();
    let hd = eval_hyperdual(h, &layout, &point, &layout.names().to_vec(), params)?;
    let grad = hd.grad();
    let mut components = Vec::with_capacity(2 * n);
    components.extend((0..n).map(|i| grad[n + i]));
    components.extend((0..n).map(|i| -grad[i]));
    Ok(FieldEval::new(&layout, components).with_diagnostic("h", hd.value()))
}

/// Coordinate Poisson bracket
/// `{f, g} = sum_i (df/dq_i dg/dp_i - df/dp_i dg/dq_i)`.
pub fn poisson_bracket(
    f: &Expr,
    g: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    expect_side(pt.side, Side::Cotangent, "poisson_bracket")?;
    let n = pt.n();
    let layout = symplectic_layout(coords, Side::Cotangent)?;
    let point = pt.flat();
    let active = layout.names().to_vec();
    let fd = eval_hyperdual(f, &layout, &point, &active, params)?;
    let gd = eval_hyperdual(g, &layout, &point, &active, params)?;
    let mut acc = 0.0;
    for i in 0..n {
        acc += fd.grad()[i] * gd.grad()[n + i] - fd.grad()[n + i] * gd.grad()[i];
    }
    Ok(acc)
}

/// Cartan data of a Lagrangian at a tangent point.
pub fn lagrangian_data(
    lag: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<LagrangianData> {
    expect_side(pt.side, Side::Tangent, "lagrangian_data")?;
    let layout = symplectic_layout(coords, Side::Tangent)?;
    crate::lagdata::lagrangian_data(lag, &layout, &pt.flat(), coords, params)
}

/// Euler-Lagrange SODE: `dq = v`, `dv = W^{-1}(dL/dq - crossQ . v)`.
pub fn euler_lagrange_field(
    lag: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<FieldEval> {
    expect_side(pt.side, Side::Tangent, "euler_lagrange_field")?;
    let layout = symplectic_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, coords, pt, params)?;
    let accel = data.solve_w(&data.el_rhs(&pt.pv))?;
    let mut components = pt.pv.clone();
    components.extend_from_slice(&accel);
    // <dE_L, X_L> should vanish identically; reported as a diagnostic.
    let cross_v = data.cross_q.mul_vec(&pt.pv);
    let wv = data.w.mul_vec(&pt.pv);
    let mut energy_rate = 0.0;
    for i in 0..pt.n() {
        // dE/dq_j = (crossQ^T v - dL/dq)_j ; dE/dv_j = (W v)_j
        let de_dq: f64 = (0..pt.n())
            .map(|k| data.cross_q.get(k, i) * pt.pv[k])
            .sum::<f64>()
            - data.grad_q[i];
        energy_rate += de_dq * pt.pv[i] + wv[i] * accel[i];
    }
    let _ = cross_v;
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("E_L", data.e_l)
        .with_diagnostic("energy_rate", energy_rate))
}

/// Legendre map: `(q, v) -> (q, dL/dv)`.
pub fn legendre_map(
    lag: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<SymplecticPoint> {
    expect_side(pt.side, Side::Tangent, "legendre_map")?;
    let data = lagrangian_data(lag, coords, pt, params)?;
    SymplecticPoint::cotangent(pt.q.clone(), data.p)
}

/// Pushforward residual of the Equivalence Theorem:
/// `|| DFL(pt) . X_L(pt) - X_h(FL(pt)) ||_inf`.
///
/// The two sides are computed independently: the left from Lagrangian data
/// and the Euler-Lagrange field, the right from the Hamiltonian field at the
/// Legendre image.
pub fn equivalence_residual(
    lag: &Expr,
    h: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    expect_side(pt.side, Side::Tangent, "equivalence_residual")?;
    let n = pt.n();
    let data = lagrangian_data(lag, coords, pt, params)?;
    let el = euler_lagrange_field(lag, coords, pt, params)?;
    let q_dot = &el.components[..n];
    let v_dot = &el.components[n..];
    // D(FL) = [[I, 0], [crossQ, W]]: pushforward is (q_dot, crossQ q_dot + W v_dot).
    let mut push = q_dot.to_vec();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += data.cross_q.get(i, j) * q_dot[j] + data.w.get(i, j) * v_dot[j];
        }
        push.push(acc);
    }
    let image = SymplecticPoint::cotangent(pt.q.clone(), data.p)?;
    let xh = hamiltonian_field(h, coords, &image, params)?;
    let resid = push
        .iter()
        .zip(&xh.components)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(resid)
}

/// Result of sampling the Hamilton-Jacobi residual.
#[derive(Debug, Clone)]
pub struct HjReport {
    /// `max_i |h_i - mean(h)|` over the sample set; zero iff the generating
    /// function solves the Hamilton-Jacobi equation there.
    pub deviation: f64,
    pub mean_h: f64,
    pub h_values: Vec<f64>,
    /// Base vector field `X(q) = dh/dp` at `p = dS/dq`, one per sample.
    pub base_fields: Vec<Vec<f64>>,
}

/// Hamilton-Jacobi residual for a generating function `S(q)` (parameters may
/// appear in `S`): evaluates `h(q, dS/dq)` on the sample set and reports the
/// spread around its mean together with the projected base dynamics.
pub fn hj_residual(
    h: &Expr,
    s: &Expr,
    coords: &[String],
    samples: &[Vec<f64>],
    params: &BTreeMap<String, f64>,
) -> Result<HjReport> {
    let base_layout = VarLayout::from_names(coords)?;
    for name in s.free_identifiers() {
        if base_layout.slot(&name).is_none() && !params.contains_key(&name) {
            return Err(MechError::Validation(format!(
                "generating function must depend only on base coordinates and parameters; `{name}` is neither"
            )));
        }
    }
    let grad_of_s = |q: &[f64]| -> Result<Vec<f64>> {
        let hd = eval_hyperdual(s, &base_layout, q, &base_layout.names().to_vec(), params)?;
        Ok(hd.grad().to_vec())
    };
    hj_residual_from_momenta(h, &grad_of_s, coords, samples, params)
}

/// Hamilton-Jacobi residual with the momentum section `p(q)` supplied
/// directly (e.g. an analytically known `dS/dq`).
pub fn hj_residual_from_momenta(
    h: &Expr,
    momenta: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    coords: &[String],
    samples: &[Vec<f64>],
    params: &BTreeMap<String, f64>,
) -> Result<HjReport> {
    if samples.is_empty() {
        return Err(MechError::Validation("no sample points supplied".into()));
    }
    let n = coords.len();
    let mut h_values = Vec::with_capacity(samples.len());
    let mut base_fields = Vec::with_capacity(samples.len());
    for q in samples {
        if q.len() != n {
            return Err(MechError::Validation(format!(
                "sample point has {} coordinates, expected {n}",
                q.len()
            )));
        }
        let p = momenta(q)?;
        let pt = SymplecticPoint::cotangent(q.clone(), p)?;
        let field = hamiltonian_field(h, coords, &pt, params)?;
        h_values.push(field.diagnostic("h").expect("h diagnostic"));
        base_fields.push(field.components[..n].to_vec());
    }
    let mean_h = h_values.iter().sum::<f64>() / h_values.len() as f64;
    let deviation = h_values
        .iter()
        .map(|v| (v - mean_h).abs())
        .fold(0.0, f64::max);
    Ok(HjReport {
        deviation,
        mean_h,
        h_values,
        base_fields,
    })
}

/// Deviation of the time-`t_final` flow from symplecticity:
/// `|| J^T O J - O ||_inf`, where `J` is the centered finite-difference
/// Jacobian of the flow map and `O` the canonical matrix on `(q, p)`.
/// The norm is the induced infinity norm (max absolute row sum).
pub fn flow_symplecticity(
    h: &Expr,
    coords: &[String],
    pt: &SymplecticPoint,
    params: &BTreeMap<String, f64>,
    t_final: f64,
    fd_step: f64,
    config: &IntegratorConfig,
) -> Result<f64> {
    expect_side(pt.side, Side::Cotangent, "flow_symplecticity")?;
    let n = pt.n();
    let dim = 2 * n;
    if t_final == 0.0 {
        // The time-0 flow is the identity; its Jacobian is exactly canonical.
        return Ok(0.0);
    }

    let flow = |x0: &[f64]| -> Result<Vec<f64>> {
        let provider = |_t: f64, state: &[f64]| -> Result<Vec<f64>> {
            let p = SymplecticPoint::cotangent(state[..n].to_vec(), state[n..].to_vec())?;
            Ok(hamiltonian_field(h, coords, &p, params)?.components)
        };
        let traj = integrate(&provider, x0, (0.0, t_final), &[0.0, t_final], config, &[])?;
        Ok(traj.final_state().to_vec())
    };

    let base = pt.flat();
    // jac[i][j] = d(flow_i)/d(x_j), centered differences
    let mut jac = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[j] += fd_step;
        minus[j] -= fd_step;
        let fp = flow(&plus)?;
        let fm = flow(&minus)?;
        for i in 0..dim {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * fd_step);
        }
    }

    // O J has rows: (O J)_{i.} = J_{n+i,.} for i < n, and -J_{i-n,.} otherwise.
    let oj = |i: usize, j: usize| -> f64 {
        if i < n {
            jac[n + i][j]
        } else {
            -jac[i - n][j]
        }
    };
    let mut deviation = 0.0_f64;
    for i in 0..dim {
        let mut row_sum = 0.0;
        for j in 0..dim {
            let mut m = 0.0;
            for k in 0..dim {
                m += jac[k][i] * oj(k, j);
            }
            let o = if i < n && j == n + i {
                1.0
            } else if i >= n && j == i - n {
                -1.0
            } else {
                0.0
            };
            row_sum += (m - o).abs();
        }
        deviation = deviation.max(row_sum);
    }
    Ok(deviation)
}
