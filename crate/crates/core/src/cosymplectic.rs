//! Time-dependent (nonautonomous) dynamics on the chart `(t, q, .)`.
//!
//! The evolution field is the trajectory generator (`dt = 1` by
//! construction); the Hamiltonian and gradient variants differ only in their
//! `t`-component, selected by [`CosymplecticMode`]. On the Lagrangian side
//! the Reeb field acquires velocity components whenever the momenta depend
//! explicitly on time.

use std::collections::BTreeMap;

use crate::autodiff::eval_hyperdual;
use crate::error::{MechError, Result};
use crate::expr::Expr;
use crate::lagdata::lagrangian_data;
use crate::phase::{cosymplectic_layout, CosymplecticPoint, FieldEval, Side};

/// Which of the three cosymplectic vector fields to evaluate; they share the
/// `(q, p)` components and differ in `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosymplecticMode {
    /// `dt = 0`.
    Hamiltonian,
    /// `dt = dh/dt`.
    Gradient,
    /// `dt = 1`; the trajectory generator.
    Evolution,
}

/// Cosymplectic Hamiltonian / gradient / evolution field at a cotangent
/// point: `(dt, dq_i, dp_i) = (mode, dh/dp_i, -dh/dq_i)`.
pub fn evolution_field(
    h: &Expr,
    coords: &[String],
    pt: &CosymplecticPoint,
    params: &BTreeMap<String, f64>,
    mode: CosymplecticMode,
) -> Result<FieldEval> {
    if pt.side != Side::Cotangent {
        return Err(MechError::Validation(
            "evolution_field expects a cotangent (t, q, p) point".into(),
        ));
    }
    let n = pt.n();
    let layout = cosymplectic_layout(coords, Side::Cotangent)?;
    let point = pt.flat();
    let hd = eval_hyperdual(h, &layout, &point, &layout.names().to_vec(), params)?;
    let grad = hd.grad(); // order: t, q.., p..
    let t_dot = match mode {
        CosymplecticMode::Hamiltonian => 0.0,
        CosymplecticMode::Gradient => grad[0],
        CosymplecticMode::Evolution => 1.0,
    };
    let mut components = vec![t_dot];
    components.extend((0..n).map(|i| grad[1 + n + i]));
    components.extend((0..n).map(|i| -grad[1 + i]));
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("h", hd.value())
        .with_diagnostic("dh_dt", grad[0]))
}

/// Lagrangian Reeb field on `(t, q, v)`:
/// `R_L = d/dt + R^i d/dv_i` with `W R = -d2L/(dt dv)`.
///
/// The returned diagnostics carry `R_L(E_L)` (assembled by contraction) and
/// `-dL/dt`; the two must agree for any Lagrangian.
pub fn lagrangian_reeb(
    lag: &Expr,
    coords: &[String],
    pt: &CosymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<FieldEval> {
    if pt.side != Side::Tangent {
        return Err(MechError::Validation(
            "lagrangian_reeb expects a tangent (t, q, v) point".into(),
        ));
    }
    let n = pt.n();
    let layout = cosymplectic_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
    let d2l_tv = data.d2l_tv.as_ref().expect("time block present");
    let rhs: Vec<f64> = d2l_tv.iter().map(|v| -v).collect();
    let reeb_v = data.solve_w(&rhs)?;

    // R_L(E_L) by contraction: dE/dt + sum_i R^i dE/dv_i,
    // with dE/dt = v . d2L/(dt dv) - dL/dt and dE/dv_i = (W v)_i.
    let wv = data.w.mul_vec(&pt.pv);
    let de_dt: f64 = pt
        .pv
        .iter()
        .zip(d2l_tv)
        .map(|(v, d)| v * d)
        .sum::<f64>()
        - data.dl_dt.expect("time block present");
    let reeb_energy: f64 = de_dt + reeb_v.iter().zip(&wv).map(|(r, w)| r * w).sum::<f64>();

    let mut components = vec![1.0];
    components.extend(std::iter::repeat(0.0).take(n));
    components.extend(reeb_v);
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("reeb_energy_rate", reeb_energy)
        .with_diagnostic("minus_dl_dt", -data.dl_dt.expect("time block present")))
}

/// Nonautonomous Euler-Lagrange SODE:
/// `dt = 1`, `dq = v`, `dv = W^{-1}(dL/dq - crossQ . v - d2L/(dt dv))`.
pub fn nonautonomous_el_field(
    lag: &Expr,
    coords: &[String],
    pt: &CosymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<FieldEval> {
    if pt.side != Side::Tangent {
        return Err(MechError::Validation(
            "nonautonomous_el_field expects a tangent (t, q, v) point".into(),
        ));
    }
    let layout = cosymplectic_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
    let d2l_tv = data.d2l_tv.as_ref().expect("time block present");
    let mut rhs = data.el_rhs(&pt.pv);
    for (r, d) in rhs.iter_mut().zip(d2l_tv) {
        *r -= d;
    }
    let accel = data.solve_w(&rhs)?;
    let mut components = vec![1.0];
    components.extend_from_slice(&pt.pv);
    components.extend(accel);
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("E_L", data.e_l)
        .with_diagnostic("dl_dt", data.dl_dt.expect("time block present")))
}

/// Pushforward residual of the nonautonomous equivalence:
/// `|| DFL(pt) . Gamma_L(pt) - E_h(FL(pt)) ||_inf`, with
/// `FL: (t, q, v) -> (t, q, dL/dv)`.
pub fn equivalence_residual(
    lag: &Expr,
    h: &Expr,
    coords: &[String],
    pt: &CosymplecticPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    if pt.side != Side::Tangent {
        return Err(MechError::Validation(
            "equivalence_residual expects a tangent (t, q, v) point".into(),
        ));
    }
    let n = pt.n();
    let layout = cosymplectic_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
    let el = nonautonomous_el_field(lag, coords, pt, params)?;
    let q_dot = &el.components[1..1 + n];
    let v_dot = &el.components[1 + n..];
    let d2l_tv = data.d2l_tv.as_ref().expect("time block");
    // rows of DFL: t -> t; q -> q; p_i = d2L/(dt dv_i) dt + crossQ dq + W dv
    let mut push = vec![1.0];
    push.extend_from_slice(q_dot);
    for i in 0..n {
        let mut acc = d2l_tv[i];
        for j in 0..n {
            acc += data.cross_q.get(i, j) * q_dot[j] + data.w.get(i, j) * v_dot[j];
        }
        push.push(acc);
    }
    let image = CosymplecticPoint::cotangent(pt.t, pt.q.clone(), data.p)?;
    let eh = evolution_field(h, coords, &image, params, CosymplecticMode::Evolution)?;
    Ok(push
        .iter()
        .zip(&eh.components)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
