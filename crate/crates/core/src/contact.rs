//! Dissipative dynamics on the contact charts `(q, p, s)` and `(q, v, s)`:
//! contact Hamiltonian / gradient / evolution fields, the contact Reeb field
//! of a Lagrangian, the Herglotz-Euler-Lagrange SODE, and the dissipation
//! bookkeeping (rate residuals, dissipated quantities, conserved quotients).

use std::collections::BTreeMap;

use crate::autodiff::eval_hyperdual;
use crate::error::{MechError, Result};
use crate::expr::{eval, Expr, VarLayout};
use crate::integrate::Trajectory;
use crate::lagdata::lagrangian_data;
use crate::phase::{contact_layout, ContactPoint, FieldEval, Side};

/// Which contact vector field to evaluate. All three share
/// `dq = dh/dp` and `dp = -(dh/dq + p dh/ds)`; only `ds` differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactMode {
    /// `ds = p . dh/dp - h`; the trajectory generator.
    Hamiltonian,
    /// `ds = p . dh/dp + dh/ds`.
    Gradient,
    /// `ds = p . dh/dp`.
    Evolution,
}

/// Contact Hamiltonian / gradient / evolution field at a cotangent point.
pub fn contact_hamiltonian_field(
    h: &Expr,
    coords: &[String],
    pt: &ContactPoint,
    params: &BTreeMap<String, f64>,
    mode: ContactMode,
) -> Result<FieldEval> {
    if pt.side != Side::Cotangent {
        return Err(MechError::Validation(
            "contact_hamiltonian_field expects a cotangent (q, p, s) point".into(),
        ));
    }
    let n = pt.n();
    let layout = contact_layout(coords, Side::Cotangent)?;
    let point = pt.flat();
    let hd = eval_hyperdual(h, &layout, &point, &layout.names().to_vec(), params)?;
    let grad = hd.grad(); // order: q.., p.., s
    let dh_ds = grad[2 * n];
    let p_dot_dhdp: f64 = (0..n).map(|i| pt.pv[i] * grad[n + i]).sum();

    let mut components = Vec::with_capacity(2 * n + 1);
    components.extend((0..n).map(|i| grad[n + i]));
    components.extend((0..n).map(|i| -(grad[i] + pt.pv[i] * dh_ds)));
    components.push(match mode {
        ContactMode::Hamiltonian => p_dot_dhdp - hd.value(),
        ContactMode::Gradient => p_dot_dhdp + dh_ds,
        ContactMode::Evolution => p_dot_dhdp,
    });
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("h", hd.value())
        .with_diagnostic("reeb_h", dh_ds))
}

/// Contact Reeb field of a Lagrangian on `(q, v, s)`:
/// `R_L = d/ds - W^{-1} d2L/(ds dv) . d/dv`.
///
/// Diagnostics carry `R_L(E_L)` assembled by contraction and `-dL/ds`,
/// which must agree.
pub fn contact_reeb_lagrangian(
    lag: &Expr,
    coords: &[String],
    pt: &ContactPoint,
    params: &BTreeMap<String, f64>,
) -> Result<FieldEval> {
    if pt.side != Side::Tangent {
        return Err(MechError::Validation(
            "contact_reeb_lagrangian expects a tangent (q, v, s) point".into(),
        ));
    }
    let n = pt.n();
    let layout = contact_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
    let d2l_sv = data.d2l_sv.as_ref().expect("action block present");
    let rhs: Vec<f64> = d2l_sv.iter().map(|v| -v).collect();
    let reeb_v = data.solve_w(&rhs)?;

    // R_L(E_L) = dE/ds + sum_i R^i dE/dv_i,
    // with dE/ds = v . d2L/(ds dv) - dL/ds and dE/dv = W v.
    let wv = data.w.mul_vec(&pt.pv);
    let de_ds: f64 = pt
        .pv
        .iter()
        .zip(d2l_sv)
        .map(|(v, d)| v * d)
        .sum::<f64>()
        - data.dl_ds.expect("action block present");
    let reeb_energy = de_ds + reeb_v.iter().zip(&wv).map(|(r, w)| r * w).sum::<f64>();

    let mut components = vec![0.0; n];
    components.extend(reeb_v);
    components.push(1.0);
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("reeb_energy_rate", reeb_energy)
        .with_diagnostic("minus_dl_ds", -data.dl_ds.expect("action block present")))
}

/// Herglotz-Euler-Lagrange SODE:
/// `dq = v`, `ds = L`,
/// `dv = W^{-1}(dL/dq - crossQ . v - L d2L/(ds dv) + (dL/ds) dL/dv)`.
pub fn herglotz_el_field(
    lag: &Expr,
    coords: &[String],
    pt: &ContactPoint,
    params: &BTreeMap<String, f64>,
) -> Result<FieldEval> {
    if pt.side != Side::Tangent {
        return Err(MechError::Validation(
            "herglotz_el_field expects a tangent (q, v, s) point".into(),
        ));
    }
    let layout = contact_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
    let d2l_sv = data.d2l_sv.as_ref().expect("action block present");
    let dl_ds = data.dl_ds.expect("action block present");
    let mut rhs = data.el_rhs(&pt.pv);
    for i in 0..rhs.len() {
        rhs[i] += -data.lag * d2l_sv[i] + dl_ds * data.p[i];
    }
    let accel = data.solve_w(&rhs)?;
    let mut components = pt.pv.clone();
    components.extend(accel);
    components.push(data.lag);
    Ok(FieldEval::new(&layout, components)
        .with_diagnostic("E_L", data.e_l)
        .with_diagnostic("L", data.lag)
        .with_diagnostic("reeb_energy_rate", -dl_ds))
}

/// Which side of a contact system a check runs on.
pub enum ContactSystem<'a> {
    /// Hamiltonian side: the function is `h(q, p, s)`.
    Hamiltonian(&'a Expr),
    /// Lagrangian side: the function is `L(q, v, s)`; the energy `E_L` plays
    /// the role of `h`.
    Lagrangian(&'a Expr),
}

/// Residual of the energy dissipation law `<dh, X_h> + R(h) h = 0`
/// (on the Lagrangian side, `<dE_L, X_L> + R_L(E_L) E_L = 0`).
/// Both contractions are assembled from independent hyper-dual data.
pub fn dissipation_rate_check(
    system: &ContactSystem,
    coords: &[String],
    pt: &ContactPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    let n = pt.n();
    match system {
        ContactSystem::Hamiltonian(h) => {
            let layout = contact_layout(coords, Side::Cotangent)?;
            let field = contact_hamiltonian_field(h, coords, pt, params, ContactMode::Hamiltonian)?;
            let hd = eval_hyperdual(h, &layout, &pt.flat(), &layout.names().to_vec(), params)?;
            let dh_x: f64 = hd
                .grad()
                .iter()
                .zip(&field.components)
                .map(|(g, x)| g * x)
                .sum();
            let reeb_h = hd.grad()[2 * n];
            Ok((dh_x + reeb_h * hd.value()).abs())
        }
        ContactSystem::Lagrangian(lag) => {
            let layout = contact_layout(coords, Side::Tangent)?;
            let field = herglotz_el_field(lag, coords, pt, params)?;
            let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
            // dE_L over (q, v, s):
            //   dE/dq_j = (crossQ^T v - dL/dq)_j
            //   dE/dv_j = (W v)_j
            //   dE/ds   = v . d2L/(ds dv) - dL/ds
            let wv = data.w.mul_vec(&pt.pv);
            let d2l_sv = data.d2l_sv.as_ref().expect("action block");
            let dl_ds = data.dl_ds.expect("action block");
            let mut de = Vec::with_capacity(2 * n + 1);
            for j in 0..n {
                let cross: f64 = (0..n).map(|k| data.cross_q.get(k, j) * pt.pv[k]).sum();
                de.push(cross - data.grad_q[j]);
            }
            de.extend(wv);
            de.push(
                pt.pv
                    .iter()
                    .zip(d2l_sv)
                    .map(|(v, d)| v * d)
                    .sum::<f64>()
                    - dl_ds,
            );
            let de_x: f64 = de
                .iter()
                .zip(&field.components)
                .map(|(g, x)| g * x)
                .sum();
            // R_L(E_L) = -dL/ds for any contact Lagrangian
            Ok((de_x + (-dl_ds) * data.e_l).abs())
        }
    }
}

/// Dissipated quantity of a symmetry generator `Y` against the contact form:
/// `F = -i(Y) eta`. On the cotangent side `eta = ds - p_i dq_i`, so
/// `F = p . Y_q - Y_s`; on the tangent side the momenta are `dL/dv`.
///
/// `generator` lists one component expression per phase coordinate, in
/// layout order.
pub fn dissipated_quantity(
    generator: &[Expr],
    lag_for_tangent: Option<&Expr>,
    coords: &[String],
    pt: &ContactPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    let n = pt.n();
    let layout = contact_layout(coords, pt.side)?;
    if generator.len() != layout.len() {
        return Err(MechError::Validation(format!(
            "generator has {} components, phase space has {}",
            generator.len(),
            layout.len()
        )));
    }
    let point = pt.flat();
    let comp = |e: &Expr| eval(e, &layout, &point, params);
    let y_s = comp(&generator[2 * n])?;
    let momenta: Vec<f64> = match pt.side {
        Side::Cotangent => pt.pv.clone(),
        Side::Tangent => {
            let lag = lag_for_tangent.ok_or_else(|| {
                MechError::Validation(
                    "tangent-side dissipated quantity needs the Lagrangian".into(),
                )
            })?;
            lagrangian_data(lag, &layout, &point, coords, params)?.p
        }
    };
    let mut acc = -y_s;
    for i in 0..n {
        acc += momenta[i] * comp(&generator[i])?;
    }
    Ok(acc)
}

/// Pushforward residual of the contact equivalence:
/// `|| DFL(pt) . X_L(pt) - X_h(FL(pt)) ||_inf`, with
/// `FL: (q, v, s) -> (q, dL/dv, s)`.
pub fn equivalence_residual(
    lag: &Expr,
    h: &Expr,
    coords: &[String],
    pt: &ContactPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    if pt.side != Side::Tangent {
        return Err(MechError::Validation(
            "equivalence_residual expects a tangent (q, v, s) point".into(),
        ));
    }
    let n = pt.n();
    let layout = contact_layout(coords, Side::Tangent)?;
    let data = lagrangian_data(lag, &layout, &pt.flat(), coords, params)?;
    let el = herglotz_el_field(lag, coords, pt, params)?;
    let q_dot = &el.components[..n];
    let v_dot = &el.components[n..2 * n];
    let s_dot = el.components[2 * n];
    let d2l_sv = data.d2l_sv.as_ref().expect("action block");
    // rows of DFL: q -> q; p_i = crossQ dq + W dv + d2L/(ds dv_i) ds; s -> s
    let mut push = q_dot.to_vec();
    for i in 0..n {
        let mut acc = d2l_sv[i] * s_dot;
        for j in 0..n {
            acc += data.cross_q.get(i, j) * q_dot[j] + data.w.get(i, j) * v_dot[j];
        }
        push.push(acc);
    }
    push.push(s_dot);
    let image = ContactPoint::cotangent(pt.q.clone(), data.p, pt.s)?;
    let xh = contact_hamiltonian_field(h, coords, &image, params, ContactMode::Hamiltonian)?;
    Ok(push
        .iter()
        .zip(&xh.components)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Drift statistics of the quotient of two quantities along a trajectory.
#[derive(Debug, Clone)]
pub struct QuotientDrift {
    pub initial: f64,
    pub max_drift: f64,
    pub values: Vec<f64>,
}

/// Monitor `F1 / F2` along a trajectory; errors if `|F2|` falls inside the
/// zero guard. The quotient of two dissipated quantities is conserved.
pub fn conserved_quotient(
    f1: &Expr,
    f2: &Expr,
    state_layout: &VarLayout,
    traj: &Trajectory,
    params: &BTreeMap<String, f64>,
    zero_guard: f64,
) -> Result<QuotientDrift> {
    let mut values = Vec::with_capacity(traj.len());
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let denom = eval(f2, state_layout, state, params)?;
        if denom.abs() < zero_guard {
            return Err(MechError::QuotientZeroGuard {
                magnitude: denom.abs(),
                guard: zero_guard,
                t: *t,
            });
        }
        let numer = eval(f1, state_layout, state, params)?;
        values.push(numer / denom);
    }
    let initial = values[0];
    let max_drift = values
        .iter()
        .map(|v| (v - initial).abs())
        .fold(0.0, f64::max);
    Ok(QuotientDrift {
        initial,
        max_drift,
        values,
    })
}
