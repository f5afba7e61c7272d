//! System definitions: the JSON system-file schema, validation into a typed
//! [`SystemSpec`], and the bridge from a spec to integrable field providers
//! and pointwise derivations.
//!
//! Integration state never contains `t`; time is the independent variable
//! and is bound separately, so one integrator serves every formalism.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::MAX_DIM;
use crate::contact::{ContactMode, ContactSystem};
use crate::cosymplectic::CosymplecticMode;
use crate::error::{MechError, Result};
use crate::expr::{parse, Expr, VarLayout};
use crate::phase::{
    contact_layout, cosymplectic_layout, momentum_name, symplectic_layout, unified_layout,
    velocity_name, ContactPoint, CosymplecticPoint, FieldEval, PontryaginPoint, Side,
    SymplecticPoint, UnifiedFlavor, ACTION_NAME, TIME_NAME,
};
use crate::riemann::{ForceField, MetricField};

/// The formalism a system is defined in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formalism {
    #[serde(rename = "symplectic-lagrangian")]
    SymplecticLagrangian,
    #[serde(rename = "symplectic-hamiltonian")]
    SymplecticHamiltonian,
    #[serde(rename = "cosymplectic")]
    Cosymplectic,
    #[serde(rename = "contact-lagrangian")]
    ContactLagrangian,
    #[serde(rename = "contact-hamiltonian")]
    ContactHamiltonian,
    #[serde(rename = "unified-autonomous")]
    UnifiedAutonomous,
    #[serde(rename = "unified-extended")]
    UnifiedExtended,
    #[serde(rename = "unified-contact")]
    UnifiedContact,
    #[serde(rename = "riemann-newton")]
    RiemannNewton,
}

impl Formalism {
    pub fn tag(&self) -> &'static str {
        match self {
            Formalism::SymplecticLagrangian => "symplectic-lagrangian",
            Formalism::SymplecticHamiltonian => "symplectic-hamiltonian",
            Formalism::Cosymplectic => "cosymplectic",
            Formalism::ContactLagrangian => "contact-lagrangian",
            Formalism::ContactHamiltonian => "contact-hamiltonian",
            Formalism::UnifiedAutonomous => "unified-autonomous",
            Formalism::UnifiedExtended => "unified-extended",
            Formalism::UnifiedContact => "unified-contact",
            Formalism::RiemannNewton => "riemann-newton",
        }
    }

    pub fn has_time(&self) -> bool {
        matches!(self, Formalism::Cosymplectic | Formalism::UnifiedExtended)
    }

    pub fn has_action(&self) -> bool {
        matches!(
            self,
            Formalism::ContactLagrangian
                | Formalism::ContactHamiltonian
                | Formalism::UnifiedContact
        )
    }
}

/// Expected behavior of a monitored quantity.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorFile {
    Conserved,
    Decay { rate: String },
}

/// One named symmetry generator, componentwise over the phase layout.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SymmetryFile {
    pub name: String,
    pub components: Vec<String>,
}

/// One declared expectation: a quantity expression with its behavior and
/// the trajectory tolerance the check suite enforces.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExpectationFile {
    pub name: String,
    pub quantity: String,
    pub behavior: BehaviorFile,
    pub tolerance: f64,
    /// Whether the tolerance is on the relative or absolute deviation.
    #[serde(default)]
    pub relative: bool,
}

/// The JSON document describing a system. Expressions are strings in the
/// engine grammar; the registry exports entries in exactly this schema.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub id: String,
    pub formalism: Formalism,
    pub coordinates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub symmetries: Vec<SymmetryFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<ExpectationFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_deviation: Option<String>,
}

/// A validated symmetry generator.
#[derive(Debug, Clone)]
pub struct SymmetrySpec {
    pub name: String,
    pub components: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub enum Behavior {
    Conserved,
    Decay { rate: Expr },
}

#[derive(Debug, Clone)]
pub struct Expectation {
    pub name: String,
    pub quantity: Expr,
    pub behavior: Behavior,
    pub tolerance: f64,
    pub relative: bool,
}

/// A parsed and validated system.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub id: String,
    pub formalism: Formalism,
    pub coords: Vec<String>,
    pub lagrangian: Option<Expr>,
    pub hamiltonian: Option<Expr>,
    pub metric: Option<MetricField>,
    pub force: Option<ForceField>,
    pub constraints: Vec<Expr>,
    pub params: BTreeMap<String, f64>,
    pub symmetries: Vec<SymmetrySpec>,
    pub initial: BTreeMap<String, f64>,
    pub expectations: Vec<Expectation>,
    pub paper_deviation: Option<String>,
}

impl SystemFile {
    pub fn from_json(text: &str) -> Result<SystemFile> {
        serde_json::from_str(text)
            .map_err(|e| MechError::Validation(format!("system file is not schema-valid: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("system file serializes")
    }

    /// Validate the document into a typed spec: parse every expression,
    /// check dimensions, and check that free identifiers are bound.
    pub fn validate(&self) -> Result<SystemSpec> {
        let n = self.coordinates.len();
        if n == 0 {
            return Err(MechError::Validation("system needs at least one coordinate".into()));
        }
        if n > MAX_DIM {
            return Err(MechError::Validation(format!(
                "system has {n} coordinates; the engine cap is {MAX_DIM}"
            )));
        }
        for c in &self.coordinates {
            if !crate::expr::is_valid_identifier(c) {
                return Err(MechError::Validation(format!(
                    "coordinate name `{c}` is not a valid identifier"
                )));
            }
            if c == TIME_NAME || c == ACTION_NAME {
                return Err(MechError::Validation(format!(
                    "coordinate name `{c}` is reserved"
                )));
            }
        }

        let parse_named = |what: &str, text: &str| -> Result<Expr> {
            parse(text).map_err(|e| MechError::Validation(format!("{what}: {e}")))
        };

        let lagrangian = self
            .lagrangian
            .as_deref()
            .map(|t| parse_named("lagrangian", t))
            .transpose()?;
        let hamiltonian = self
            .hamiltonian
            .as_deref()
            .map(|t| parse_named("hamiltonian", t))
            .transpose()?;

        match self.formalism {
            Formalism::SymplecticLagrangian
            | Formalism::ContactLagrangian
            | Formalism::UnifiedAutonomous
            | Formalism::UnifiedExtended
            | Formalism::UnifiedContact => {
                if lagrangian.is_none() {
                    return Err(MechError::Validation(format!(
                        "formalism `{}` requires a lagrangian",
                        self.formalism.tag()
                    )));
                }
            }
            Formalism::SymplecticHamiltonian | Formalism::ContactHamiltonian => {
                if hamiltonian.is_none() {
                    return Err(MechError::Validation(format!(
                        "formalism `{}` requires a hamiltonian",
                        self.formalism.tag()
                    )));
                }
            }
            Formalism::Cosymplectic => {
                if lagrangian.is_none() && hamiltonian.is_none() {
                    return Err(MechError::Validation(
                        "cosymplectic systems require a lagrangian or a hamiltonian".into(),
                    ));
                }
            }
            Formalism::RiemannNewton => {
                if self.metric.is_none() {
                    return Err(MechError::Validation(
                        "riemann-newton systems require a metric".into(),
                    ));
                }
            }
        }

        let metric = match &self.metric {
            None => None,
            Some(rows) => {
                let mut entries = Vec::with_capacity(rows.len());
                for row in rows {
                    let mut out = Vec::with_capacity(row.len());
                    for e in row {
                        out.push(parse_named("metric entry", e)?);
                    }
                    entries.push(out);
                }
                Some(MetricField::new(self.coordinates.clone(), entries)?)
            }
        };
        let force = match &self.force {
            None => None,
            Some(comps) => {
                if comps.len() != n {
                    return Err(MechError::Validation(format!(
                        "force has {} components, expected {n}",
                        comps.len()
                    )));
                }
                let mut out = Vec::with_capacity(n);
                for c in comps {
                    out.push(parse_named("force component", c)?);
                }
                Some(ForceField::new(out))
            }
        };
        let constraints = self
            .constraints
            .iter()
            .map(|c| parse_named("constraint", c))
            .collect::<Result<Vec<_>>>()?;

        let spec = SystemSpec {
            id: self.id.clone(),
            formalism: self.formalism,
            coords: self.coordinates.clone(),
            lagrangian,
            hamiltonian,
            metric,
            force,
            constraints,
            params: self.params.clone(),
            symmetries: Vec::new(),
            initial: self.initial.clone(),
            expectations: Vec::new(),
            paper_deviation: self.paper_deviation.clone(),
        };

        // binding check: free identifiers of the defining expressions must be
        // phase variables (on the chart each expression lives on) or
        // parameters
        let layout = spec.phase_layout()?;
        let check_in = |what: &str, e: &Expr, chart: &VarLayout| -> Result<()> {
            for name in e.free_identifiers() {
                if chart.slot(&name).is_none() && !spec.params.contains_key(&name) {
                    return Err(MechError::Validation(format!(
                        "{what} mentions `{name}`, which is neither a phase variable nor a parameter"
                    )));
                }
            }
            Ok(())
        };
        let check_bound =
            |what: &str, e: &Expr| -> Result<()> { check_in(what, e, &layout) };
        if let Some(l) = &spec.lagrangian {
            check_in("lagrangian", l, &spec.side_layout(Side::Tangent)?)?;
        }
        if let Some(h) = &spec.hamiltonian {
            check_in("hamiltonian", h, &spec.side_layout(Side::Cotangent)?)?;
        }
        if let Some(m) = &spec.metric {
            let base = VarLayout::from_names(&spec.coords)?;
            for row in m.entries() {
                for e in row {
                    for name in e.free_identifiers() {
                        if base.slot(&name).is_none() && !spec.params.contains_key(&name) {
                            return Err(MechError::Validation(format!(
                                "metric entry mentions `{name}`, which is neither a coordinate nor a parameter"
                            )));
                        }
                    }
                }
            }
        }
        for key in spec.initial.keys() {
            if layout.slot(key).is_none() && key != TIME_NAME {
                return Err(MechError::Validation(format!(
                    "initial condition names unknown variable `{key}`"
                )));
            }
        }

        // symmetries and expectations evaluate over the phase layout
        let mut symmetries = Vec::with_capacity(self.symmetries.len());
        for s in &self.symmetries {
            if s.components.len() != layout.len() {
                return Err(MechError::Validation(format!(
                    "symmetry `{}` has {} components, phase space has {}",
                    s.name,
                    s.components.len(),
                    layout.len()
                )));
            }
            let components = s
                .components
                .iter()
                .map(|c| parse_named("symmetry component", c))
                .collect::<Result<Vec<_>>>()?;
            for c in &components {
                check_bound("symmetry component", c)?;
            }
            symmetries.push(SymmetrySpec {
                name: s.name.clone(),
                components,
            });
        }
        let mut expectations = Vec::with_capacity(self.expectations.len());
        for e in &self.expectations {
            let quantity = parse_named("expectation quantity", &e.quantity)?;
            check_bound("expectation quantity", &quantity)?;
            let behavior = match &e.behavior {
                BehaviorFile::Conserved => Behavior::Conserved,
                BehaviorFile::Decay { rate } => Behavior::Decay {
                    rate: parse_named("decay rate", rate)?,
                },
            };
            expectations.push(Expectation {
                name: e.name.clone(),
                quantity,
                behavior,
                tolerance: e.tolerance,
                relative: e.relative,
            });
        }

        Ok(SystemSpec {
            symmetries,
            expectations,
            ..spec
        })
    }
}

impl SystemSpec {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// The side of the chart the defining expression lives on.
    pub fn primary_side(&self) -> Side {
        match self.formalism {
            Formalism::SymplecticLagrangian
            | Formalism::ContactLagrangian
            | Formalism::RiemannNewton
            | Formalism::UnifiedAutonomous
            | Formalism::UnifiedExtended
            | Formalism::UnifiedContact => Side::Tangent,
            Formalism::SymplecticHamiltonian | Formalism::ContactHamiltonian => Side::Cotangent,
            Formalism::Cosymplectic => {
                if self.lagrangian.is_some() {
                    Side::Tangent
                } else {
                    Side::Cotangent
                }
            }
        }
    }

    /// The chart of the formalism on a chosen side (the unified flavors
    /// carry both fibers and ignore the side).
    pub fn side_layout(&self, side: Side) -> Result<VarLayout> {
        match self.formalism {
            Formalism::SymplecticLagrangian | Formalism::SymplecticHamiltonian => {
                symplectic_layout(&self.coords, side)
            }
            Formalism::Cosymplectic => cosymplectic_layout(&self.coords, side),
            Formalism::ContactLagrangian | Formalism::ContactHamiltonian => {
                contact_layout(&self.coords, side)
            }
            Formalism::UnifiedAutonomous => unified_layout(&self.coords, UnifiedFlavor::Autonomous),
            Formalism::UnifiedExtended => unified_layout(&self.coords, UnifiedFlavor::Extended),
            Formalism::UnifiedContact => unified_layout(&self.coords, UnifiedFlavor::Contact),
            Formalism::RiemannNewton => symplectic_layout(&self.coords, Side::Tangent),
        }
    }

    /// The full phase chart of the formalism, including `t` where the
    /// formalism carries it.
    pub fn phase_layout(&self) -> Result<VarLayout> {
        let side = self.primary_side();
        match self.formalism {
            Formalism::SymplecticLagrangian | Formalism::SymplecticHamiltonian => {
                symplectic_layout(&self.coords, side)
            }
            Formalism::Cosymplectic => cosymplectic_layout(&self.coords, side),
            Formalism::ContactLagrangian | Formalism::ContactHamiltonian => {
                contact_layout(&self.coords, side)
            }
            Formalism::UnifiedAutonomous => unified_layout(&self.coords, UnifiedFlavor::Autonomous),
            Formalism::UnifiedExtended => unified_layout(&self.coords, UnifiedFlavor::Extended),
            Formalism::UnifiedContact => unified_layout(&self.coords, UnifiedFlavor::Contact),
            Formalism::RiemannNewton => symplectic_layout(&self.coords, Side::Tangent),
        }
    }

    /// The integration state: the phase chart minus `t`.
    pub fn state_layout(&self) -> Result<VarLayout> {
        let layout = self.phase_layout()?;
        let names: Vec<String> = layout
            .names()
            .iter()
            .filter(|n| n.as_str() != TIME_NAME)
            .cloned()
            .collect();
        Ok(VarLayout::new(names)?)
    }

    /// Assemble the full initial state in state-layout order; every state
    /// variable must be given by `initial` overlaid with `overrides`.
    pub fn initial_state(&self, overrides: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let layout = self.state_layout()?;
        let mut out = Vec::with_capacity(layout.len());
        for name in layout.names() {
            let v = overrides
                .get(name)
                .or_else(|| self.initial.get(name))
                .copied()
                .ok_or_else(|| {
                    MechError::Validation(format!("missing value for state variable `{name}`"))
                })?;
            out.push(v);
        }
        Ok(out)
    }

    /// State derivative at `(t, state)`; the unified flavors use a loose
    /// on-constraint guard so bounded drift does not abort a trajectory.
    pub fn field_at(&self, t: f64, state: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        match self.formalism {
            Formalism::SymplecticLagrangian => {
                let pt = SymplecticPoint::tangent(state[..n].to_vec(), state[n..].to_vec())?;
                Ok(crate::symplectic::euler_lagrange_field(
                    self.lagrangian.as_ref().expect("validated"),
                    &self.coords,
                    &pt,
                    &self.params,
                )?
                .components)
            }
            Formalism::SymplecticHamiltonian => {
                let pt = SymplecticPoint::cotangent(state[..n].to_vec(), state[n..].to_vec())?;
                Ok(crate::symplectic::hamiltonian_field(
                    self.hamiltonian.as_ref().expect("validated"),
                    &self.coords,
                    &pt,
                    &self.params,
                )?
                .components)
            }
            Formalism::Cosymplectic => {
                let full = match self.primary_side() {
                    Side::Tangent => {
                        let pt = CosymplecticPoint::tangent(
                            t,
                            state[..n].to_vec(),
                            state[n..].to_vec(),
                        )?;
                        crate::cosymplectic::nonautonomous_el_field(
                            self.lagrangian.as_ref().expect("validated"),
                            &self.coords,
                            &pt,
                            &self.params,
                        )?
                    }
                    Side::Cotangent => {
                        let pt = CosymplecticPoint::cotangent(
                            t,
                            state[..n].to_vec(),
                            state[n..].to_vec(),
                        )?;
                        crate::cosymplectic::evolution_field(
                            self.hamiltonian.as_ref().expect("validated"),
                            &self.coords,
                            &pt,
                            &self.params,
                            CosymplecticMode::Evolution,
                        )?
                    }
                };
                // drop the dt = 1 component; t is the independent variable
                Ok(full.components[1..].to_vec())
            }
            Formalism::ContactLagrangian => {
                let pt = ContactPoint::tangent(
                    state[..n].to_vec(),
                    state[n..2 * n].to_vec(),
                    state[2 * n],
                )?;
                Ok(crate::contact::herglotz_el_field(
                    self.lagrangian.as_ref().expect("validated"),
                    &self.coords,
                    &pt,
                    &self.params,
                )?
                .components)
            }
            Formalism::ContactHamiltonian => {
                let pt = ContactPoint::cotangent(
                    state[..n].to_vec(),
                    state[n..2 * n].to_vec(),
                    state[2 * n],
                )?;
                Ok(crate::contact::contact_hamiltonian_field(
                    self.hamiltonian.as_ref().expect("validated"),
                    &self.coords,
                    &pt,
                    &self.params,
                    ContactMode::Hamiltonian,
                )?
                .components)
            }
            Formalism::UnifiedAutonomous | Formalism::UnifiedExtended | Formalism::UnifiedContact => {
                let pt = self.unified_point(t, state)?;
                let out = crate::unified::tangency_solve(
                    self.lagrangian.as_ref().expect("validated"),
                    &self.coords,
                    &pt,
                    &self.params,
                    TRAJECTORY_CONSTRAINT_GUARD,
                )?;
                if self.formalism == Formalism::UnifiedExtended {
                    Ok(out.field.components[1..].to_vec())
                } else {
                    Ok(out.field.components)
                }
            }
            Formalism::RiemannNewton => {
                let metric = self.metric.as_ref().expect("validated");
                let force = self.force.clone().unwrap_or_else(|| ForceField::zero(n));
                let q = &state[..n];
                let v = &state[n..];
                let accel = if self.constraints.is_empty() {
                    crate::riemann::newton_field(metric, &force, q, v, t, &self.params)?
                } else {
                    crate::riemann::nonholonomic_step(
                        metric,
                        &force,
                        &self.constraints,
                        q,
                        v,
                        t,
                        &self.params,
                    )?
                    .accelerations
                };
                let mut out = v.to_vec();
                out.extend(accel);
                Ok(out)
            }
        }
    }

    fn unified_point(&self, t: f64, state: &[f64]) -> Result<PontryaginPoint> {
        let n = self.n();
        match self.formalism {
            Formalism::UnifiedAutonomous => PontryaginPoint::autonomous(
                state[..n].to_vec(),
                state[n..2 * n].to_vec(),
                state[2 * n..3 * n].to_vec(),
            ),
            Formalism::UnifiedExtended => PontryaginPoint::extended(
                t,
                state[..n].to_vec(),
                state[n..2 * n].to_vec(),
                state[2 * n..3 * n].to_vec(),
            ),
            Formalism::UnifiedContact => PontryaginPoint::contact(
                state[..n].to_vec(),
                state[n..2 * n].to_vec(),
                state[2 * n..3 * n].to_vec(),
                state[3 * n],
            ),
            _ => unreachable!("not a unified formalism"),
        }
    }

    /// Pointwise derivation: the dynamical field plus side diagnostics
    /// (energy, Legendre image, Reeb data) where the formalism defines them.
    pub fn derive_at(&self, t: f64, state: &[f64]) -> Result<DeriveOutput> {
        let n = self.n();
        let components = self.field_at(t, state)?;
        let layout = self.state_layout()?;
        let mut field = FieldEval::new(&layout, components);
        let mut legendre = None;
        let mut reeb = None;

        match self.formalism {
            Formalism::SymplecticLagrangian => {
                let pt = SymplecticPoint::tangent(state[..n].to_vec(), state[n..].to_vec())?;
                let lag = self.lagrangian.as_ref().expect("validated");
                let data =
                    crate::symplectic::lagrangian_data(lag, &self.coords, &pt, &self.params)?;
                field = field.with_diagnostic("E_L", data.e_l);
                legendre = Some(
                    self.coords
                        .iter()
                        .zip(&data.p)
                        .map(|(c, p)| (momentum_name(c), *p))
                        .collect(),
                );
            }
            Formalism::Cosymplectic if self.primary_side() == Side::Tangent => {
                let pt =
                    CosymplecticPoint::tangent(t, state[..n].to_vec(), state[n..].to_vec())?;
                let lag = self.lagrangian.as_ref().expect("validated");
                let el = crate::cosymplectic::nonautonomous_el_field(
                    lag,
                    &self.coords,
                    &pt,
                    &self.params,
                )?;
                field = field.with_diagnostic("E_L", el.diagnostic("E_L").expect("E_L"));
                reeb = Some(crate::cosymplectic::lagrangian_reeb(
                    lag,
                    &self.coords,
                    &pt,
                    &self.params,
                )?);
            }
            Formalism::ContactLagrangian => {
                let pt = ContactPoint::tangent(
                    state[..n].to_vec(),
                    state[n..2 * n].to_vec(),
                    state[2 * n],
                )?;
                let lag = self.lagrangian.as_ref().expect("validated");
                let el =
                    crate::contact::herglotz_el_field(lag, &self.coords, &pt, &self.params)?;
                field = field.with_diagnostic("E_L", el.diagnostic("E_L").expect("E_L"));
                reeb = Some(crate::contact::contact_reeb_lagrangian(
                    lag,
                    &self.coords,
                    &pt,
                    &self.params,
                )?);
            }
            _ => {}
        }
        Ok(DeriveOutput {
            field,
            legendre,
            reeb,
        })
    }

    /// The dissipation-rate residual, defined for contact systems.
    pub fn dissipation_residual(&self, state: &[f64]) -> Result<Option<f64>> {
        let n = self.n();
        match self.formalism {
            Formalism::ContactLagrangian => {
                let pt = ContactPoint::tangent(
                    state[..n].to_vec(),
                    state[n..2 * n].to_vec(),
                    state[2 * n],
                )?;
                Ok(Some(crate::contact::dissipation_rate_check(
                    &ContactSystem::Lagrangian(self.lagrangian.as_ref().expect("validated")),
                    &self.coords,
                    &pt,
                    &self.params,
                )?))
            }
            Formalism::ContactHamiltonian => {
                let pt = ContactPoint::cotangent(
                    state[..n].to_vec(),
                    state[n..2 * n].to_vec(),
                    state[2 * n],
                )?;
                Ok(Some(crate::contact::dissipation_rate_check(
                    &ContactSystem::Hamiltonian(self.hamiltonian.as_ref().expect("validated")),
                    &self.coords,
                    &pt,
                    &self.params,
                )?))
            }
            _ => Ok(None),
        }
    }

    /// Velocity names in coordinate order.
    pub fn velocity_names(&self) -> Vec<String> {
        self.coords.iter().map(|c| velocity_name(c)).collect()
    }

    /// Legendre-pushforward equivalence residual at a state, for systems
    /// that carry both a Lagrangian and a Hamiltonian on a Lagrangian-side
    /// chart. `None` when the check does not apply.
    pub fn equivalence_residual_at(&self, t: f64, state: &[f64]) -> Result<Option<f64>> {
        let (Some(lag), Some(h)) = (&self.lagrangian, &self.hamiltonian) else {
            return Ok(None);
        };
        let n = self.n();
        match self.formalism {
            Formalism::SymplecticLagrangian => {
                let pt = SymplecticPoint::tangent(state[..n].to_vec(), state[n..].to_vec())?;
                Ok(Some(crate::symplectic::equivalence_residual(
                    lag,
                    h,
                    &self.coords,
                    &pt,
                    &self.params,
                )?))
            }
            Formalism::Cosymplectic if self.primary_side() == Side::Tangent => {
                let pt =
                    CosymplecticPoint::tangent(t, state[..n].to_vec(), state[n..].to_vec())?;
                Ok(Some(crate::cosymplectic::equivalence_residual(
                    lag,
                    h,
                    &self.coords,
                    &pt,
                    &self.params,
                )?))
            }
            Formalism::ContactLagrangian => {
                let pt = ContactPoint::tangent(
                    state[..n].to_vec(),
                    state[n..2 * n].to_vec(),
                    state[2 * n],
                )?;
                Ok(Some(crate::contact::equivalence_residual(
                    lag,
                    h,
                    &self.coords,
                    &pt,
                    &self.params,
                )?))
            }
            _ => Ok(None),
        }
    }

    /// The unified flavor matching this system's Lagrangian chart, if any.
    pub fn unified_flavor(&self) -> Option<UnifiedFlavor> {
        match self.formalism {
            Formalism::SymplecticLagrangian | Formalism::UnifiedAutonomous => {
                Some(UnifiedFlavor::Autonomous)
            }
            Formalism::Cosymplectic if self.lagrangian.is_some() => Some(UnifiedFlavor::Extended),
            Formalism::UnifiedExtended => Some(UnifiedFlavor::Extended),
            Formalism::ContactLagrangian | Formalism::UnifiedContact => {
                Some(UnifiedFlavor::Contact)
            }
            _ => None,
        }
    }

    /// Lift a Lagrangian-side state to an on-constraint Pontryagin point.
    pub fn unified_point_from_state(&self, t: f64, state: &[f64]) -> Result<PontryaginPoint> {
        let lag = self
            .lagrangian
            .as_ref()
            .ok_or_else(|| MechError::Validation("system has no Lagrangian".into()))?;
        let flavor = self
            .unified_flavor()
            .ok_or_else(|| MechError::Validation("system has no unified flavor".into()))?;
        let n = self.n();
        let q = state[..n].to_vec();
        let v = state[n..2 * n].to_vec();
        let chart = match flavor {
            UnifiedFlavor::Autonomous => symplectic_layout(&self.coords, Side::Tangent)?,
            UnifiedFlavor::Extended => cosymplectic_layout(&self.coords, Side::Tangent)?,
            UnifiedFlavor::Contact => contact_layout(&self.coords, Side::Tangent)?,
        };
        let mut point = Vec::new();
        if flavor == UnifiedFlavor::Extended {
            point.push(t);
        }
        point.extend_from_slice(state);
        let data = crate::lagdata::lagrangian_data(lag, &chart, &point, &self.coords, &self.params)?;
        match flavor {
            UnifiedFlavor::Autonomous => PontryaginPoint::autonomous(q, v, data.p),
            UnifiedFlavor::Extended => PontryaginPoint::extended(t, q, v, data.p),
            UnifiedFlavor::Contact => PontryaginPoint::contact(q, v, data.p, state[2 * n]),
        }
    }
}

/// Loose on-constraint guard used while integrating unified trajectories;
/// pointwise derivations use the strict default instead.
pub const TRAJECTORY_CONSTRAINT_GUARD: f64 = 1e-5;

/// Output of a pointwise derivation.
#[derive(Debug, Clone)]
pub struct DeriveOutput {
    pub field: FieldEval,
    /// Momentum names and values of the Legendre image, for Lagrangian-side
    /// systems.
    pub legendre: Option<Vec<(String, f64)>>,
    /// Reeb field evaluation, where the formalism has one.
    pub reeb: Option<FieldEval>,
}
