//! Phase-space points, coordinate layouts, and evaluated vector fields.
//!
//! Every formalism works in a fixed Darboux-style chart built from the
//! configuration coordinate names. Velocity and momentum names derive from
//! the coordinate: `r -> vr, pr`; the coordinate literally named `q` keeps
//! the classical `v`, `p`. Time is named `t`, the action coordinate `s`.

use crate::error::{MechError, Result};
use crate::expr::VarLayout;

pub const TIME_NAME: &str = "t";
pub const ACTION_NAME: &str = "s";

pub fn velocity_name(coord: &str) -> String {
    if coord == "q" {
        "v".to_owned()
    } else {
        format!("v{coord}")
    }
}

pub fn momentum_name(coord: &str) -> String {
    if coord == "q" {
        "p".to_owned()
    } else {
        format!("p{coord}")
    }
}

/// Which bundle a point lives in: velocities (tangent) or momenta (cotangent).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Tangent,
    Cotangent,
}

/// Point in the autonomous phase space: `(q, v)` or `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticPoint {
    pub side: Side,
    pub q: Vec<f64>,
    pub pv: Vec<f64>,
}

impl SymplecticPoint {
    pub fn tangent(q: Vec<f64>, v: Vec<f64>) -> Result<SymplecticPoint> {
        check_lengths(&q, &v)?;
        Ok(SymplecticPoint {
            side: Side::Tangent,
            q,
            pv: v,
        })
    }

    pub fn cotangent(q: Vec<f64>, p: Vec<f64>) -> Result<SymplecticPoint> {
        check_lengths(&q, &p)?;
        Ok(SymplecticPoint {
            side: Side::Cotangent,
            q,
            pv: p,
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.q.clone();
        out.extend_from_slice(&self.pv);
        out
    }
}

/// Point in the nonautonomous phase space: `(t, q, v)` or `(t, q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosymplecticPoint {
    pub t: f64,
    pub side: Side,
    pub q: Vec<f64>,
    pub pv: Vec<f64>,
}

impl CosymplecticPoint {
    pub fn tangent(t: f64, q: Vec<f64>, v: Vec<f64>) -> Result<CosymplecticPoint> {
        check_lengths(&q, &v)?;
        Ok(CosymplecticPoint {
            t,
            side: Side::Tangent,
            q,
            pv: v,
        })
    }

    pub fn cotangent(t: f64, q: Vec<f64>, p: Vec<f64>) -> Result<CosymplecticPoint> {
        check_lengths(&q, &p)?;
        Ok(CosymplecticPoint {
            t,
            side: Side::Cotangent,
            q,
            pv: p,
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = vec![self.t];
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.pv);
        out
    }
}

/// Point in the contact phase space: `(q, v, s)` or `(q, p, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPoint {
    pub side: Side,
    pub q: Vec<f64>,
    pub pv: Vec<f64>,
    pub s: f64,
}

impl ContactPoint {
    pub fn tangent(q: Vec<f64>, v: Vec<f64>, s: f64) -> Result<ContactPoint> {
        check_lengths(&q, &v)?;
        Ok(ContactPoint {
            side: Side::Tangent,
            q,
            pv: v,
            s,
        })
    }

    pub fn cotangent(q: Vec<f64>, p: Vec<f64>, s: f64) -> Result<ContactPoint> {
        check_lengths(&q, &p)?;
        Ok(ContactPoint {
            side: Side::Cotangent,
            q,
            pv: p,
            s,
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.q.clone();
        out.extend_from_slice(&self.pv);
        out.push(self.s);
        out
    }
}

/// Flavor of the unified (Pontryagin-bundle) formalism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnifiedFlavor {
    Autonomous,
    Extended,
    Contact,
}

/// Point in a unified bundle: `(q, v, p)` plus `t` (extended) or `s` (contact).
#[derive(Debug, Clone, PartialEq)]
pub struct PontryaginPoint {
    pub flavor: UnifiedFlavor,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Option<f64>,
    pub s: Option<f64>,
}

impl PontryaginPoint {
    pub fn autonomous(q: Vec<f64>, v: Vec<f64>, p: Vec<f64>) -> Result<PontryaginPoint> {
        check_lengths(&q, &v)?;
        check_lengths(&q, &p)?;
        Ok(PontryaginPoint {
            flavor: UnifiedFlavor::Autonomous,
            q,
            v,
            p,
            t: None,
            s: None,
        })
    }

    pub fn extended(t: f64, q: Vec<f64>, v: Vec<f64>, p: Vec<f64>) -> Result<PontryaginPoint> {
        check_lengths(&q, &v)?;
        check_lengths(&q, &p)?;
        Ok(PontryaginPoint {
            flavor: UnifiedFlavor::Extended,
            q,
            v,
            p,
            t: Some(t),
            s: None,
        })
    }

    pub fn contact(q: Vec<f64>, v: Vec<f64>, p: Vec<f64>, s: f64) -> Result<PontryaginPoint> {
        check_lengths(&q, &v)?;
        check_lengths(&q, &p)?;
        Ok(PontryaginPoint {
            flavor: UnifiedFlavor::Contact,
            q,
            v,
            p,
            t: None,
            s: Some(s),
        })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }
}

fn check_lengths(q: &[f64], other: &[f64]) -> Result<()> {
    if q.len() != other.len() {
        return Err(MechError::Validation(format!(
            "phase point has {} coordinates but {} fiber components",
            q.len(),
            other.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Layout builders
// ---------------------------------------------------------------------------

pub fn symplectic_layout<S: AsRef<str>>(coords: &[S], side: Side) -> Result<VarLayout> {
    let mut names: Vec<String> = coords.iter().map(|c| c.as_ref().to_owned()).collect();
    names.extend(fiber_names(coords, side));
    Ok(VarLayout::new(names)?)
}

pub fn cosymplectic_layout<S: AsRef<str>>(coords: &[S], side: Side) -> Result<VarLayout> {
    let mut names: Vec<String> = vec![TIME_NAME.to_owned()];
    names.extend(coords.iter().map(|c| c.as_ref().to_owned()));
    names.extend(fiber_names(coords, side));
    Ok(VarLayout::new(names)?)
}

pub fn contact_layout<S: AsRef<str>>(coords: &[S], side: Side) -> Result<VarLayout> {
    let mut names: Vec<String> = coords.iter().map(|c| c.as_ref().to_owned()).collect();
    names.extend(fiber_names(coords, side));
    names.push(ACTION_NAME.to_owned());
    Ok(VarLayout::new(names)?)
}

pub fn unified_layout<S: AsRef<str>>(coords: &[S], flavor: UnifiedFlavor) -> Result<VarLayout> {
    let mut names: Vec<String> = Vec::new();
    if flavor == UnifiedFlavor::Extended {
        names.push(TIME_NAME.to_owned());
    }
    names.extend(coords.iter().map(|c| c.as_ref().to_owned()));
    names.extend(fiber_names(coords, Side::Tangent));
    names.extend(fiber_names(coords, Side::Cotangent));
    if flavor == UnifiedFlavor::Contact {
        names.push(ACTION_NAME.to_owned());
    }
    Ok(VarLayout::new(names)?)
}

fn fiber_names<S: AsRef<str>>(coords: &[S], side: Side) -> Vec<String> {
    coords
        .iter()
        .map(|c| match side {
            Side::Tangent => velocity_name(c.as_ref()),
            Side::Cotangent => momentum_name(c.as_ref()),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Field evaluations
// ---------------------------------------------------------------------------

/// Components of a dynamical vector field at one phase point, with named
/// diagnostic scalars (energy, Reeb contractions, residuals).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub names: Vec<String>,
    pub components: Vec<f64>,
    pub diagnostics: Vec<(String, f64)>,
}

impl FieldEval {
    pub fn new(layout: &VarLayout, components: Vec<f64>) -> FieldEval {
        debug_assert_eq!(layout.len(), components.len());
        FieldEval {
            names: layout.names().to_vec(),
            components,
            diagnostics: Vec::new(),
        }
    }

    pub fn with_diagnostic(mut self, name: &str, value: f64) -> FieldEval {
        self.diagnostics.push((name.to_owned(), value));
        self
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.components[i])
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}
