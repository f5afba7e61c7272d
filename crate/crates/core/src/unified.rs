//! Skinner-Rusk unified Lagrangian-Hamiltonian formalism on the Pontryagin
//! bundles `(q, v, p)`, `(t, q, v, p)`, and `(q, v, p, s)`.
//!
//! The compatibility constraints of the formalism reproduce the Legendre map
//! (`p = dL/dv` defines the first constraint surface); the tangency condition
//! on that surface determines the accelerations. For regular Lagrangians the
//! algorithm stops there; a singular Hessian is reported, not iterated.

use std::collections::BTreeMap;

use crate::error::{MechError, Result};
use crate::expr::{Expr, VarLayout};
use crate::lagdata::{lagrangian_data, LagrangianData};
use crate::phase::{
    unified_layout, ContactPoint, CosymplecticPoint, FieldEval, PontryaginPoint, SymplecticPoint,
    UnifiedFlavor,
};

/// Default tolerance for the on-constraint precondition.
pub const ON_CONSTRAINT_TOL: f64 = 1e-9;

/// Coupling function `C = <v | p> = v . p`.
pub fn coupling(pt: &PontryaginPoint) -> f64 {
    pt.v.iter().zip(&pt.p).map(|(a, b)| a * b).sum()
}

/// The chart the Lagrangian lives on for a given flavor: the tangent-side
/// variables plus `t`/`s` as the flavor requires. The unified layout is a
/// superset, so evaluation uses the unified layout directly.
fn unified_point_layout(coords: &[String], flavor: UnifiedFlavor) -> Result<VarLayout> {
    unified_layout(coords, flavor)
}

fn flat_point(pt: &PontryaginPoint) -> Vec<f64> {
    let mut out = Vec::new();
    if let Some(t) = pt.t {
        out.push(t);
    }
    out.extend_from_slice(&pt.q);
    out.extend_from_slice(&pt.v);
    out.extend_from_slice(&pt.p);
    if let Some(s) = pt.s {
        out.push(s);
    }
    out
}

fn data_at(
    lag: &Expr,
    coords: &[String],
    pt: &PontryaginPoint,
    params: &BTreeMap<String, f64>,
) -> Result<LagrangianData> {
    let layout = unified_point_layout(coords, pt.flavor)?;
    lagrangian_data(lag, &layout, &flat_point(pt), coords, params)
}

/// Unified Hamiltonian `H = C - L`.
pub fn unified_hamiltonian(
    lag: &Expr,
    coords: &[String],
    pt: &PontryaginPoint,
    params: &BTreeMap<String, f64>,
) -> Result<f64> {
    let data = data_at(lag, coords, pt, params)?;
    Ok(coupling(pt) - data.lag)
}

/// Componentwise residual of the first constraint surface: `p - dL/dv`.
/// Zero iff the point sits on the graph of the Legendre map.
pub fn constraint_residuals(
    lag: &Expr,
    coords: &[String],
    pt: &PontryaginPoint,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    let data = data_at(lag, coords, pt, params)?;
    Ok(pt.p.iter().zip(&data.p).map(|(p, lp)| p - lp).collect())
}

fn require_on_constraint(residuals: &[f64], tol: f64) -> Result<()> {
    let max = residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    if max > tol {
        return Err(MechError::OffConstraint {
            residual: max,
            tolerance: tol,
        });
    }
    Ok(())
}

/// Accelerations from the tangency condition, plus the full unified field.
#[derive(Debug, Clone)]
pub struct UnifiedField {
    /// Accelerations `F^i` solving the flavor's tangency system.
    pub accelerations: Vec<f64>,
    /// Full field over the unified layout.
    pub field: FieldEval,
}

/// Solve the tangency condition on the first constraint surface and
/// assemble the unified vector field.
///
/// Flavors:
/// - autonomous: `W F = dL/dq - crossQ . v`; field `(dq = v, dv = F, dp = dL/dq)`
/// - extended:   extra `-d2L/(dt dv)` in the solve; `dt = 1`
/// - contact:    extra `+ p dL/ds - L d2L/(ds dv)`; `dp = dL/dq + p dL/ds`, `ds = L`
pub fn tangency_solve(
    lag: &Expr,
    coords: &[String],
    pt: &PontryaginPoint,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<UnifiedField> {
    let residuals = constraint_residuals(lag, coords, pt, params)?;
    require_on_constraint(&residuals, tol)?;
    let layout = unified_point_layout(coords, pt.flavor)?;
    let data = data_at(lag, coords, pt, params)?;
    let n = pt.n();

    let mut rhs = data.el_rhs(&pt.v);
    match pt.flavor {
        UnifiedFlavor::Autonomous => {}
        UnifiedFlavor::Extended => {
            let d2l_tv = data.d2l_tv.as_ref().expect("time block");
            for (r, d) in rhs.iter_mut().zip(d2l_tv) {
                *r -= d;
            }
        }
        UnifiedFlavor::Contact => {
            let d2l_sv = data.d2l_sv.as_ref().expect("action block");
            let dl_ds = data.dl_ds.expect("action block");
            for i in 0..n {
                rhs[i] += -data.lag * d2l_sv[i] + dl_ds * pt.p[i];
            }
        }
    }
    let accel = data.solve_w(&rhs)?;

    let mut components = Vec::with_capacity(layout.len());
    if pt.flavor == UnifiedFlavor::Extended {
        components.push(1.0);
    }
    components.extend_from_slice(&pt.v);
    components.extend_from_slice(&accel);
    match pt.flavor {
        UnifiedFlavor::Contact => {
            let dl_ds = data.dl_ds.expect("action block");
            components.extend((0..n).map(|i| data.grad_q[i] + pt.p[i] * dl_ds));
            components.push(data.lag);
        }
        _ => {
            components.extend(data.grad_q.iter().copied());
        }
    }
    let field = FieldEval::new(&layout, components)
        .with_diagnostic("H", coupling(pt) - data.lag)
        .with_diagnostic("E_L", data.e_l);
    Ok(UnifiedField {
        accelerations: accel,
        field,
    })
}

/// Residuals between the projected unified field and the matching
/// Lagrangian-side and (optionally) canonical Hamiltonian-side fields.
#[derive(Debug, Clone)]
pub struct ProjectionCheck {
    /// `|| rho_1(X_H) - X_L ||_inf` over the Lagrangian chart components.
    pub lagrangian_residual: f64,
    /// `|| rho_2(X_H) - X_h ||_inf` at the Legendre image, when `h` given.
    pub hamiltonian_residual: Option<f64>,
}

/// Compare the unified field's projections with the independently computed
/// Lagrangian-side field, and with the canonical Hamiltonian field when the
/// paired `h` expression is supplied.
pub fn projection_check(
    lag: &Expr,
    h: Option<&Expr>,
    coords: &[String],
    pt: &PontryaginPoint,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<ProjectionCheck> {
    let n = pt.n();
    let unified = tangency_solve(lag, coords, pt, params, tol)?;

    // Lagrangian side: (dq, dv) (plus dt/ds as the flavor dictates).
    let lagrangian_residual = match pt.flavor {
        UnifiedFlavor::Autonomous => {
            let spt = SymplecticPoint::tangent(pt.q.clone(), pt.v.clone())?;
            let el = crate::symplectic::euler_lagrange_field(lag, coords, &spt, params)?;
            let accel = &el.components[n..];
            max_abs_diff(&unified.accelerations, accel)
        }
        UnifiedFlavor::Extended => {
            let cpt = CosymplecticPoint::tangent(pt.t.expect("t"), pt.q.clone(), pt.v.clone())?;
            let el = crate::cosymplectic::nonautonomous_el_field(lag, coords, &cpt, params)?;
            let accel = &el.components[1 + n..];
            max_abs_diff(&unified.accelerations, accel)
        }
        UnifiedFlavor::Contact => {
            let cpt = ContactPoint::tangent(pt.q.clone(), pt.v.clone(), pt.s.expect("s"))?;
            let el = crate::contact::herglotz_el_field(lag, coords, &cpt, params)?;
            let accel = &el.components[n..2 * n];
            let mut r = max_abs_diff(&unified.accelerations, accel);
            // ds components must agree as well
            let ds_unified = *unified.field.components.last().expect("ds");
            let ds_el = el.components[2 * n];
            r = r.max((ds_unified - ds_el).abs());
            r
        }
    };

    // Hamiltonian side: (dq, dp) at the Legendre image.
    let hamiltonian_residual = match h {
        None => None,
        Some(h) => {
            let data = data_at(lag, coords, pt, params)?;
            let offset = if pt.flavor == UnifiedFlavor::Extended { 1 } else { 0 };
            let uq = &unified.field.components[offset..offset + n];
            let up = &unified.field.components[offset + 2 * n..offset + 3 * n];
            let resid = match pt.flavor {
                UnifiedFlavor::Autonomous => {
                    let image = SymplecticPoint::cotangent(pt.q.clone(), data.p.clone())?;
                    let xh = crate::symplectic::hamiltonian_field(h, coords, &image, params)?;
                    max_abs_diff(uq, &xh.components[..n])
                        .max(max_abs_diff(up, &xh.components[n..]))
                }
                UnifiedFlavor::Extended => {
                    let image = CosymplecticPoint::cotangent(
                        pt.t.expect("t"),
                        pt.q.clone(),
                        data.p.clone(),
                    )?;
                    let xh = crate::cosymplectic::evolution_field(
                        h,
                        coords,
                        &image,
                        params,
                        crate::cosymplectic::CosymplecticMode::Evolution,
                    )?;
                    max_abs_diff(uq, &xh.components[1..1 + n])
                        .max(max_abs_diff(up, &xh.components[1 + n..]))
                }
                UnifiedFlavor::Contact => {
                    let image =
                        ContactPoint::cotangent(pt.q.clone(), data.p.clone(), pt.s.expect("s"))?;
                    let xh = crate::contact::contact_hamiltonian_field(
                        h,
                        coords,
                        &image,
                        params,
                        crate::contact::ContactMode::Hamiltonian,
                    )?;
                    let ds_unified = *unified.field.components.last().expect("ds");
                    max_abs_diff(uq, &xh.components[..n])
                        .max(max_abs_diff(up, &xh.components[n..2 * n]))
                        .max((ds_unified - xh.components[2 * n]).abs())
                }
            };
            Some(resid)
        }
    };

    Ok(ProjectionCheck {
        lagrangian_residual,
        hamiltonian_residual,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    fn coords(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn coupling_is_the_dot_product() {
        let pt = PontryaginPoint::autonomous(vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 4.0])
            .unwrap();
        assert_eq!(coupling(&pt), 11.0);
        let pt = PontryaginPoint::autonomous(vec![0.0], vec![0.0], vec![5.0]).unwrap();
        assert_eq!(coupling(&pt), 0.0);
        let pt = PontryaginPoint::autonomous(vec![1.0], vec![2.0], vec![2.0]).unwrap();
        assert_eq!(coupling(&pt), 4.0);
    }

    #[test]
    fn ho_unified_hamiltonian() {
        let lag = parse("0.5*(m*v^2 - k*q^2)").unwrap();
        let pt = PontryaginPoint::autonomous(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let h = unified_hamiltonian(&lag, &coords(&["q"]), &pt, &params(&[("m", 1.0), ("k", 1.0)]))
            .unwrap();
        assert!((h - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unified_hamiltonian_on_constraint_is_the_energy() {
        let lag = parse("0.5*(m*v^2 - k*q^2)").unwrap();
        let pr = params(&[("m", 2.0), ("k", 0.5)]);
        // on the constraint p = m v
        let pt = PontryaginPoint::autonomous(vec![0.7], vec![1.3], vec![2.6]).unwrap();
        let h = unified_hamiltonian(&lag, &coords(&["q"]), &pt, &pr).unwrap();
        let spt = SymplecticPoint::tangent(vec![0.7], vec![1.3]).unwrap();
        let data = crate::symplectic::lagrangian_data(&lag, &coords(&["q"]), &spt, &pr).unwrap();
        assert!((h - data.e_l).abs() < 1e-12);
    }

    #[test]
    fn friction_kepler_unified_hamiltonian_matches_contact_energy() {
        let lag = parse("0.5*m*(vr^2 + r^2*vphi^2) - K/r - gamma*s").unwrap();
        let pr = params(&[("m", 1.0), ("K", -1.0), ("gamma", 0.1)]);
        let cs = coords(&["r", "phi"]);
        // matched momenta: pr = m vr, pphi = m r^2 vphi
        let (r, vr, vphi, s) = (1.4, 0.3, 0.8, 0.2);
        let pt = PontryaginPoint::contact(
            vec![r, 0.5],
            vec![vr, vphi],
            vec![vr, r * r * vphi],
            s,
        )
        .unwrap();
        let h = unified_hamiltonian(&lag, &cs, &pt, &pr).unwrap();
        let layout = crate::phase::contact_layout(&cs, crate::phase::Side::Tangent).unwrap();
        let data = crate::lagdata::lagrangian_data(
            &lag,
            &layout,
            &[r, 0.5, vr, vphi, s],
            &cs,
            &pr,
        )
        .unwrap();
        assert!((h - data.e_l).abs() < 1e-12);
    }

    #[test]
    fn ho_constraint_residuals() {
        let lag = parse("0.5*(m*v^2 - k*q^2)").unwrap();
        let pr = params(&[("m", 1.0), ("k", 1.0)]);
        let cs = coords(&["q"]);
        let on = PontryaginPoint::autonomous(vec![0.3], vec![2.0], vec![2.0]).unwrap();
        assert_eq!(constraint_residuals(&lag, &cs, &on, &pr).unwrap(), vec![0.0]);
        let off = PontryaginPoint::autonomous(vec![0.3], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(
            constraint_residuals(&lag, &cs, &off, &pr).unwrap(),
            vec![-1.0]
        );
    }

    #[test]
    fn kepler_constraint_residuals() {
        let lag = parse("0.5*m*(vr^2 + r^2*vphi^2) - K/r").unwrap();
        let pr = params(&[("m", 1.0), ("K", -1.0)]);
        let pt = PontryaginPoint::autonomous(vec![2.0, 0.0], vec![0.0, 1.0], vec![0.0, 4.0])
            .unwrap();
        let res = constraint_residuals(&lag, &coords(&["r", "phi"]), &pt, &pr).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn ho_tangency_acceleration() {
        let lag = parse("0.5*(m*v^2 - k*q^2)").unwrap();
        let pt = PontryaginPoint::autonomous(vec![1.0], vec![0.0], vec![0.0]).unwrap();
        let out = tangency_solve(
            &lag,
            &coords(&["q"]),
            &pt,
            &params(&[("m", 1.0), ("k", 1.0)]),
            ON_CONSTRAINT_TOL,
        )
        .unwrap();
        assert!((out.accelerations[0] + 1.0).abs() < 1e-15);
        // dp = dL/dq = -k q
        assert!((out.field.components[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn free_particle_tangency_is_zero() {
        let lag = parse("0.5*m*v^2").unwrap();
        let pt = PontryaginPoint::autonomous(vec![0.4], vec![1.7], vec![1.7]).unwrap();
        let out = tangency_solve(
            &lag,
            &coords(&["q"]),
            &pt,
            &params(&[("m", 1.0)]),
            ON_CONSTRAINT_TOL,
        )
        .unwrap();
        assert_eq!(out.accelerations, vec![0.0]);
    }

    #[test]
    fn friction_kepler_contact_tangency() {
        let lag = parse("0.5*m*(vr^2 + r^2*vphi^2) - K/r - gamma*s").unwrap();
        let pt = PontryaginPoint::contact(
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            0.0,
        )
        .unwrap();
        let out = tangency_solve(
            &lag,
            &coords(&["r", "phi"]),
            &pt,
            &params(&[("m", 1.0), ("K", -1.0), ("gamma", 0.1)]),
            ON_CONSTRAINT_TOL,
        )
        .unwrap();
        // F_r = 0, F_phi = -0.1 (as the Herglotz field gives)
        assert!(out.accelerations[0].abs() < 1e-14);
        assert!((out.accelerations[1] + 0.1).abs() < 1e-14);
    }

    #[test]
    fn off_constraint_point_is_rejected() {
        let lag = parse("0.5*(m*v^2 - k*q^2)").unwrap();
        let pt = PontryaginPoint::autonomous(vec![1.0], vec![1.0], vec![0.5]).unwrap();
        let err = tangency_solve(
            &lag,
            &coords(&["q"]),
            &pt,
            &params(&[("m", 1.0), ("k", 1.0)]),
            ON_CONSTRAINT_TOL,
        )
        .unwrap_err();
        assert!(matches!(err, MechError::OffConstraint { .. }));
    }

    #[test]
    fn projection_check_all_flavors_on_random_points() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        let cs2 = coords(&["r", "phi"]);
        let cs1 = coords(&["q"]);

        // autonomous: Kepler
        let lag = parse("0.5*m*(vr^2 + r^2*vphi^2) - K/r").unwrap();
        let h = parse("pr^2/(2*m) + pphi^2/(2*m*r^2) + K/r").unwrap();
        let pr = params(&[("m", 1.0), ("K", -1.0)]);
        for _ in 0..100 {
            let (r, phi) = (rng.gen_range(0.5..2.5), rng.gen_range(-3.0..3.0));
            let (vr, vphi) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let pt = PontryaginPoint::autonomous(
                vec![r, phi],
                vec![vr, vphi],
                vec![vr, r * r * vphi],
            )
            .unwrap();
            let check =
                projection_check(&lag, Some(&h), &cs2, &pt, &pr, ON_CONSTRAINT_TOL).unwrap();
            assert!(check.lagrangian_residual <= 1e-10);
            assert!(check.hamiltonian_residual.unwrap() <= 1e-10);
        }

        // extended: forced oscillator
        let lag = parse("0.5*(m*v^2 - k*q^2) + A*q*cos(w*t)").unwrap();
        let h = parse("p^2/(2*m) + 0.5*k*q^2 - A*q*cos(w*t)").unwrap();
        let pr = params(&[("m", 1.0), ("k", 1.0), ("A", 2.0), ("w", 1.0)]);
        for _ in 0..100 {
            let (t, q, v) = (
                rng.gen_range(0.0..5.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let pt = PontryaginPoint::extended(t, vec![q], vec![v], vec![v]).unwrap();
            let check =
                projection_check(&lag, Some(&h), &cs1, &pt, &pr, ON_CONSTRAINT_TOL).unwrap();
            assert!(check.lagrangian_residual <= 1e-10);
            assert!(check.hamiltonian_residual.unwrap() <= 1e-10);
        }

        // contact: damped oscillator
        let lag = parse("0.5*m*v^2 - 0.5*k*q^2 - gamma*s").unwrap();
        let h = parse("p^2/(2*m) + 0.5*k*q^2 + gamma*s").unwrap();
        let pr = params(&[("m", 1.0), ("k", 1.0), ("gamma", 0.1)]);
        for _ in 0..100 {
            let (q, v, s) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let pt = PontryaginPoint::contact(vec![q], vec![v], vec![v], s).unwrap();
            let check =
                projection_check(&lag, Some(&h), &cs1, &pt, &pr, ON_CONSTRAINT_TOL).unwrap();
            assert!(check.lagrangian_residual <= 1e-10);
            assert!(check.hamiltonian_residual.unwrap() <= 1e-10);
        }
    }

    #[test]
    fn tangency_matches_lagrangian_accelerations_everywhere() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(23);
        let lag = parse("0.5*m*(vr^2 + r^2*vphi^2) - K/r").unwrap();
        let pr = params(&[("m", 1.0), ("K", -1.0)]);
        let cs = coords(&["r", "phi"]);
        for _ in 0..50 {
            let (r, phi) = (rng.gen_range(0.5..2.5), rng.gen_range(-3.0..3.0));
            let (vr, vphi) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let pt = PontryaginPoint::autonomous(
                vec![r, phi],
                vec![vr, vphi],
                vec![vr, r * r * vphi],
            )
            .unwrap();
            let out = tangency_solve(&lag, &cs, &pt, &pr, ON_CONSTRAINT_TOL).unwrap();
            let spt = SymplecticPoint::tangent(vec![r, phi], vec![vr, vphi]).unwrap();
            let el = crate::symplectic::euler_lagrange_field(&lag, &cs, &spt, &pr).unwrap();
            for (a, b) in out.accelerations.iter().zip(&el.components[2..]) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
