//! Shared Lagrangian derivative bundle.
//!
//! Every Lagrangian-side dynamics formula consumes the same derivative data:
//! the fiber derivative `p = dL/dv`, the velocity Hessian `W`, the
//! position-velocity cross block, and (in the nonautonomous and contact
//! charts) the `t`- and `s`-mixed second derivatives. One hyper-dual
//! evaluation yields all of them.

use std::collections::BTreeMap;

use crate::autodiff::{eval_hyperdual, SmallMatrix};
use crate::error::{LinAlgError, MechError, Result};
use crate::expr::{Expr, VarLayout};
use crate::phase::{ACTION_NAME, TIME_NAME};

/// First- and second-derivative data of a Lagrangian at one phase point.
///
/// `cross_q[i][j] = d^2 L / (dv_i dq_j)`, i.e. the derivative of the momentum
/// `p_i` along `q_j`; the Euler-Lagrange acceleration term contracts it with
/// the velocity vector.
#[derive(Debug, Clone)]
pub struct LagrangianData {
    /// Lagrangian value at the point.
    pub lag: f64,
    /// Lagrangian energy `E_L = v . p - L`.
    pub e_l: f64,
    /// Fiber derivative `p_i = dL/dv_i`.
    pub p: Vec<f64>,
    /// `dL/dq_i`.
    pub grad_q: Vec<f64>,
    /// Velocity Hessian `W_ij = d^2 L / (dv_i dv_j)`.
    pub w: SmallMatrix,
    /// Cross block `d^2 L / (dv_i dq_j)`.
    pub cross_q: SmallMatrix,
    /// `dL/dt` and `d^2 L / (dt dv_i)`, when the chart carries time.
    pub dl_dt: Option<f64>,
    pub d2l_tv: Option<Vec<f64>>,
    /// `dL/ds` and `d^2 L / (ds dv_i)`, when the chart carries the action.
    pub dl_ds: Option<f64>,
    pub d2l_sv: Option<Vec<f64>>,
}

impl LagrangianData {
    /// Solve `W x = rhs`, reporting a singular Lagrangian on failure.
    pub fn solve_w(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.w.solve(rhs).map_err(singular_lagrangian)
    }

    /// The Euler-Lagrange acceleration right-hand side common to all
    /// formalisms: `dL/dq - cross_q . v`, before any `t`/`s` corrections.
    pub fn el_rhs(&self, v: &[f64]) -> Vec<f64> {
        let cross_v = self.cross_q.mul_vec(v);
        self.grad_q
            .iter()
            .zip(&cross_v)
            .map(|(g, c)| g - c)
            .collect()
    }
}

pub(crate) fn singular_lagrangian(err: LinAlgError) -> MechError {
    match err {
        LinAlgError::Singular {
            pivot_index,
            pivot_magnitude,
            ..
        } => MechError::SingularLagrangian {
            detail: format!(
                "velocity Hessian is singular (pivot {pivot_index}, magnitude {pivot_magnitude:e})"
            ),
        },
        other => MechError::LinAlg(other),
    }
}

/// Compute [`LagrangianData`] for `lag` on a tangent-side chart.
///
/// `layout` must contain the coordinates, their velocities, and optionally
/// `t` and/or `s`; `point` is the flat state in layout order.
pub fn lagrangian_data(
    lag: &Expr,
    layout: &VarLayout,
    point: &[f64],
    coords: &[String],
    params: &BTreeMap<String, f64>,
) -> Result<LagrangianData> {
    let n = coords.len();
    let has_t = layout.slot(TIME_NAME).is_some();
    let has_s = layout.slot(ACTION_NAME).is_some();

    // Active order: q_0..q_{n-1}, v_0..v_{n-1}, then t, then s.
    let mut active: Vec<String> = coords.to_vec();
    for c in coords {
        active.push(crate::phase::velocity_name(c));
    }
    if has_t {
        active.push(TIME_NAME.to_owned());
    }
    if has_s {
        active.push(ACTION_NAME.to_owned());
    }

    let hd = eval_hyperdual(lag, layout, point, &active, params)?;
    let grad = hd.grad();
    let grad_q = grad[..n].to_vec();
    let p = grad[n..2 * n].to_vec();
    let t_idx = has_t.then_some(2 * n);
    let s_idx = has_s.then(|| if has_t { 2 * n + 1 } else { 2 * n });

    let mut w = SmallMatrix::zeros(n)?;
    let mut cross_q = SmallMatrix::zeros(n)?;
    for i in 0..n {
        for j in 0..n {
            w.set(i, j, hd.hess_at(n + i, n + j));
            cross_q.set(i, j, hd.hess_at(n + i, j));
        }
    }

    let v: Vec<f64> = coords
        .iter()
        .map(|c| point[layout.slot(&crate::phase::velocity_name(c)).expect("velocity slot")])
        .collect();
    let e_l = v.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() - hd.value();

    Ok(LagrangianData {
        lag: hd.value(),
        e_l,
        p,
        grad_q,
        w,
        cross_q,
        dl_dt: t_idx.map(|i| grad[i]),
        d2l_tv: t_idx.map(|ti| (0..n).map(|i| hd.hess_at(ti, n + i)).collect()),
        dl_ds: s_idx.map(|i| grad[i]),
        d2l_sv: s_idx.map(|si| (0..n).map(|i| hd.hess_at(si, n + i)).collect()),
    })
}
