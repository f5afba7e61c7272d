//! Built-in example systems with default parameters, declared symmetries,
//! and expected conservation/dissipation behavior. Entries export in the
//! same JSON schema the CLI ingests, so they double as templates.
//!
//! Where a source display carries an arithmetic slip (a missing 1/2, a
//! momentum-squared denominator), the registry stores the version forced by
//! the surrounding equations and records the correction in
//! `paper_deviation`.

use std::collections::BTreeMap;

use crate::error::{MechError, Result};
use crate::system::{BehaviorFile, ExpectationFile, Formalism, SymmetryFile, SystemFile, SystemSpec};

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn harmonic_oscillator() -> SystemFile {
    SystemFile {
        id: "harmonic-oscillator".into(),
        formalism: Formalism::SymplecticLagrangian,
        coordinates: strings(&["q"]),
        lagrangian: Some("0.5*(m*v^2 - k*q^2)".into()),
        hamiltonian: Some("p^2/(2*m) + 0.5*k*q^2".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m", 1.0), ("k", 1.0)]),
        symmetries: Vec::new(),
        initial: params(&[("q", 1.0), ("v", 0.0)]),
        expectations: vec![ExpectationFile {
            name: "energy".into(),
            quantity: "0.5*(m*v^2 + k*q^2)".into(),
            behavior: BehaviorFile::Conserved,
            tolerance: 1e-8,
            relative: false,
        }],
        paper_deviation: Some(
            "The source prints the canonical Hamiltonian as p^2/(2m) + k q^2; its own \
             differential and Legendre data force p^2/(2m) + (1/2) k q^2, which is what \
             this entry uses."
                .into(),
        ),
    }
}

fn free_particle() -> SystemFile {
    SystemFile {
        id: "free-particle".into(),
        formalism: Formalism::SymplecticLagrangian,
        coordinates: strings(&["q"]),
        lagrangian: Some("0.5*m*v^2".into()),
        hamiltonian: Some("p^2/(2*m)".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m", 1.0)]),
        symmetries: vec![SymmetryFile {
            name: "translation".into(),
            components: strings(&["1", "0"]),
        }],
        initial: params(&[("q", 0.0), ("v", 1.0)]),
        expectations: vec![ExpectationFile {
            name: "momentum".into(),
            quantity: "m*v".into(),
            behavior: BehaviorFile::Conserved,
            tolerance: 1e-10,
            relative: false,
        }],
        paper_deviation: None,
    }
}

fn kepler() -> SystemFile {
    SystemFile {
        id: "kepler".into(),
        formalism: Formalism::SymplecticLagrangian,
        coordinates: strings(&["r", "phi"]),
        lagrangian: Some("0.5*m*(vr^2 + r^2*vphi^2) - K/r".into()),
        hamiltonian: Some("pr^2/(2*m) + pphi^2/(2*m*r^2) + K/r".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m", 1.0), ("K", -1.0)]),
        symmetries: vec![SymmetryFile {
            name: "rotation".into(),
            components: strings(&["0", "1", "0", "0"]),
        }],
        // circular orbit: vphi^2 = -K/(m r^3)
        initial: params(&[("r", 1.0), ("phi", 0.0), ("vr", 0.0), ("vphi", 1.0)]),
        expectations: vec![
            ExpectationFile {
                name: "angular-momentum".into(),
                quantity: "m*r^2*vphi".into(),
                behavior: BehaviorFile::Conserved,
                tolerance: 1e-9,
                relative: false,
            },
            ExpectationFile {
                name: "energy".into(),
                quantity: "0.5*m*(vr^2 + r^2*vphi^2) + K/r".into(),
                behavior: BehaviorFile::Conserved,
                tolerance: 1e-8,
                relative: false,
            },
        ],
        paper_deviation: None,
    }
}

fn forced_oscillator() -> SystemFile {
    SystemFile {
        id: "forced-oscillator".into(),
        formalism: Formalism::Cosymplectic,
        coordinates: strings(&["q"]),
        lagrangian: Some("0.5*(m*v^2 - k*q^2) + A*q*cos(w*t)".into()),
        hamiltonian: Some("p^2/(2*m) + 0.5*k*q^2 - A*q*cos(w*t)".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m", 1.0), ("k", 1.0), ("A", 2.0), ("w", 1.0)]),
        symmetries: Vec::new(),
        initial: params(&[("q", 0.0), ("v", 0.0)]),
        expectations: Vec::new(),
        paper_deviation: Some(
            "The source prints the canonical Hamiltonian with k q^2; the evolution field \
             it derives corresponds to (1/2) k q^2, which is what this entry uses."
                .into(),
        ),
    }
}

fn variable_mass_kepler() -> SystemFile {
    SystemFile {
        id: "variable-mass-kepler".into(),
        formalism: Formalism::Cosymplectic,
        coordinates: strings(&["r", "phi"]),
        lagrangian: Some("0.5*m0*(1 + kappa*t)*(vr^2 + r^2*vphi^2) - K/r".into()),
        hamiltonian: Some("(pr^2 + pphi^2/r^2)/(2*m0*(1 + kappa*t)) + K/r".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m0", 1.0), ("kappa", 0.1), ("K", -1.0)]),
        symmetries: vec![SymmetryFile {
            name: "rotation".into(),
            components: strings(&["0", "0", "1", "0", "0"]),
        }],
        initial: params(&[("r", 1.0), ("phi", 0.0), ("vr", 0.0), ("vphi", 1.0)]),
        expectations: vec![ExpectationFile {
            name: "angular-momentum".into(),
            quantity: "m0*(1 + kappa*t)*r^2*vphi".into(),
            behavior: BehaviorFile::Conserved,
            tolerance: 1e-6,
            relative: false,
        }],
        paper_deviation: Some(
            "The mass profile is unspecified in the source; the default is m(t) = m0 (1 + kappa t) \
             with kappa = 0.1, chosen smooth and positive. The source also prints the Lagrangian \
             Reeb field with + (dm/dt / m) velocity components; its defining linear system gives \
             the opposite sign, which is what the engine computes."
                .into(),
        ),
    }
}

fn damped_oscillator() -> SystemFile {
    SystemFile {
        id: "damped-oscillator".into(),
        formalism: Formalism::ContactLagrangian,
        coordinates: strings(&["q"]),
        lagrangian: Some("0.5*m*v^2 - 0.5*k*q^2 - gamma*s".into()),
        hamiltonian: Some("p^2/(2*m) + 0.5*k*q^2 + gamma*s".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m", 1.0), ("k", 1.0), ("gamma", 0.1)]),
        symmetries: Vec::new(),
        initial: params(&[("q", 1.0), ("v", 0.0), ("s", 0.0)]),
        expectations: vec![ExpectationFile {
            name: "energy".into(),
            quantity: "0.5*m*v^2 + 0.5*k*q^2 + gamma*s".into(),
            behavior: BehaviorFile::Decay {
                rate: "gamma".into(),
            },
            tolerance: 1e-5,
            relative: true,
        }],
        paper_deviation: Some(
            "The source prints the canonical Hamiltonian with p^2/(2 m^2); the Hamilton \
             equations and Legendre map it derives correspond to p^2/(2m), which is what \
             this entry uses."
                .into(),
        ),
    }
}

fn kepler_friction() -> SystemFile {
    SystemFile {
        id: "kepler-friction".into(),
        formalism: Formalism::ContactLagrangian,
        coordinates: strings(&["r", "phi"]),
        lagrangian: Some("0.5*m*(vr^2 + r^2*vphi^2) - K/r - gamma*s".into()),
        hamiltonian: Some("pr^2/(2*m) + pphi^2/(2*m*r^2) + K/r + gamma*s".into()),
        metric: None,
        force: None,
        constraints: Vec::new(),
        params: params(&[("m", 1.0), ("K", -1.0), ("gamma", 0.1)]),
        symmetries: vec![SymmetryFile {
            name: "rotation".into(),
            components: strings(&["0", "1", "0", "0", "0"]),
        }],
        initial: params(&[
            ("r", 1.0),
            ("phi", 0.0),
            ("vr", 0.0),
            ("vphi", 1.0),
            ("s", 0.0),
        ]),
        expectations: vec![
            ExpectationFile {
                name: "angular-momentum".into(),
                quantity: "m*r^2*vphi".into(),
                behavior: BehaviorFile::Decay {
                    rate: "gamma".into(),
                },
                tolerance: 1e-6,
                relative: true,
            },
            ExpectationFile {
                name: "energy".into(),
                quantity: "0.5*m*(vr^2 + r^2*vphi^2) + K/r + gamma*s".into(),
                behavior: BehaviorFile::Decay {
                    rate: "gamma".into(),
                },
                tolerance: 1e-5,
                relative: true,
            },
        ],
        paper_deviation: None,
    }
}

fn sphere_geodesic() -> SystemFile {
    SystemFile {
        id: "sphere-geodesic".into(),
        formalism: Formalism::RiemannNewton,
        coordinates: strings(&["theta", "phi"]),
        lagrangian: None,
        hamiltonian: None,
        metric: Some(vec![
            strings(&["1", "0"]),
            strings(&["0", "sin(theta)^2"]),
        ]),
        force: Some(strings(&["0", "0"])),
        constraints: Vec::new(),
        params: BTreeMap::new(),
        symmetries: Vec::new(),
        initial: params(&[
            ("theta", std::f64::consts::FRAC_PI_2),
            ("phi", 0.0),
            ("vtheta", 0.0),
            ("vphi", 1.0),
        ]),
        expectations: vec![ExpectationFile {
            name: "speed-squared".into(),
            quantity: "vtheta^2 + sin(theta)^2*vphi^2".into(),
            behavior: BehaviorFile::Conserved,
            tolerance: 1e-8,
            relative: false,
        }],
        paper_deviation: None,
    }
}

/// All registered system ids, with their formalism tags.
pub fn list() -> Vec<(String, &'static str)> {
    all_files()
        .into_iter()
        .map(|f| (f.id.clone(), f.formalism.tag()))
        .collect()
}

fn all_files() -> Vec<SystemFile> {
    vec![
        harmonic_oscillator(),
        free_particle(),
        kepler(),
        forced_oscillator(),
        variable_mass_kepler(),
        damped_oscillator(),
        kepler_friction(),
        sphere_geodesic(),
    ]
}

/// The raw registry entry for an id, in the CLI's JSON schema.
pub fn get_file(id: &str) -> Result<SystemFile> {
    all_files()
        .into_iter()
        .find(|f| f.id == id)
        .ok_or_else(|| MechError::UnknownSystem(id.to_owned()))
}

/// The validated spec for an id.
pub fn get(id: &str) -> Result<SystemSpec> {
    get_file(id)?.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn registry_lists_the_classic_systems() {
        let ids: Vec<String> = list().into_iter().map(|(id, _)| id).collect();
        for expected in [
            "harmonic-oscillator",
            "kepler",
            "forced-oscillator",
            "variable-mass-kepler",
            "damped-oscillator",
            "kepler-friction",
            "free-particle",
            "sphere-geodesic",
        ] {
            assert!(ids.contains(&expected.to_string()), "missing {expected}");
        }
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!(matches!(
            get("no-such-system"),
            Err(MechError::UnknownSystem(_))
        ));
    }

    #[test]
    fn every_entry_validates_and_is_regular_at_its_initial_point() {
        for (id, _) in list() {
            let spec = get(&id).unwrap_or_else(|e| panic!("{id}: {e}"));
            let state = spec
                .initial_state(&BTreeMap::new())
                .unwrap_or_else(|e| panic!("{id}: {e}"));
            // evaluating the field exercises the regularity (Hessian) check
            spec.field_at(0.0, &state)
                .unwrap_or_else(|e| panic!("{id}: {e}"));
        }
    }

    #[test]
    fn entries_round_trip_through_the_json_schema() {
        for (id, _) in list() {
            let file = get_file(&id).unwrap();
            let text = file.to_json_pretty();
            let back = SystemFile::from_json(&text).unwrap();
            assert_eq!(file, back, "{id}");
            back.validate().unwrap();
        }
    }

    #[test]
    fn kepler_friction_entry_matches_the_fixture() {
        let spec = get("kepler-friction").unwrap();
        assert_eq!(spec.formalism, Formalism::ContactLagrangian);
        assert_eq!(spec.params["gamma"], 0.1);
        assert_eq!(spec.symmetries.len(), 1);
        // declared dissipated quantity at rate gamma
        assert!(spec
            .expectations
            .iter()
            .any(|e| matches!(e.behavior, crate::system::Behavior::Decay { .. })));
    }

    #[test]
    fn variable_mass_kepler_mass_profile_is_documented() {
        let file = get_file("variable-mass-kepler").unwrap();
        assert!(file.paper_deviation.unwrap().contains("kappa = 0.1"));
    }
}
