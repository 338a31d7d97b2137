//! Named boundary-data presets behind a common trait, so configs and the
//! CLI select problem setups by string.

use std::sync::Arc;

use crate::geometry::{BoundaryData, DomainSpec};
use crate::oracle;
use crate::vec3::Vec3;

/// A fully specified problem: the domain to solve on, its boundary data,
/// and, for oracle-backed presets, the exact solution and probe points.
pub struct PresetProblem {
    pub domain: DomainSpec,
    pub data: BoundaryData,
    pub exact: Option<Arc<dyn Fn(Vec3) -> f64 + Send + Sync>>,
    pub probes: Vec<Vec3>,
}

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("unknown boundary preset {name:?}; available: {available}")]
    Unknown { name: String, available: String },
    #[error("preset {name:?}: bad parameter {detail}")]
    BadParameter { name: String, detail: String },
    #[error("preset {name:?} needs at least one electrode in the domain")]
    NeedsElectrodes { name: String },
}

pub trait BoundaryPreset: Send + Sync {
    /// Name pattern this strategy answers to, e.g. `constant:<V>`.
    fn pattern(&self) -> &str;
    /// `None` when `name` belongs to a different strategy.
    fn build(&self, name: &str, domain: &DomainSpec)
        -> Option<Result<PresetProblem, PresetError>>;
}

struct Cos4Theta;

impl BoundaryPreset for Cos4Theta {
    fn pattern(&self) -> &str {
        "cos4theta"
    }

    fn build(
        &self,
        name: &str,
        domain: &DomainSpec,
    ) -> Option<Result<PresetProblem, PresetError>> {
        if name != "cos4theta" {
            return None;
        }
        if domain.electrodes.is_empty() {
            return Some(Err(PresetError::NeedsElectrodes { name: name.into() }));
        }
        Some(Ok(PresetProblem {
            domain: domain.clone(),
            data: BoundaryData::cos4theta(domain),
            exact: None,
            probes: Vec::new(),
        }))
    }
}

struct Constant;

impl BoundaryPreset for Constant {
    fn pattern(&self) -> &str {
        "constant:<V>"
    }

    fn build(
        &self,
        name: &str,
        domain: &DomainSpec,
    ) -> Option<Result<PresetProblem, PresetError>> {
        let v = if name == "zero" {
            0.0
        } else {
            match name.strip_prefix("constant:")?.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Some(Err(PresetError::BadParameter {
                        name: name.into(),
                        detail: "expected a finite number after `constant:`".into(),
                    }))
                }
            }
        };
        if domain.electrodes.is_empty() && v != 0.0 {
            return Some(Err(PresetError::NeedsElectrodes { name: name.into() }));
        }
        Some(Ok(PresetProblem {
            domain: domain.clone(),
            data: BoundaryData::constant(domain, v),
            exact: None,
            probes: Vec::new(),
        }))
    }
}

/// Oracle cases ship their own domain; the configured one is replaced so
/// the exact solution stays meaningful.
struct Oracle {
    index: usize,
    name: String,
}

impl BoundaryPreset for Oracle {
    fn pattern(&self) -> &str {
        &self.name
    }

    fn build(&self, name: &str, _domain: &DomainSpec) -> Option<Result<PresetProblem, PresetError>> {
        if name != self.name {
            return None;
        }
        let case = oracle::standard_suite().swap_remove(self.index);
        Some(Ok(PresetProblem {
            domain: case.domain,
            data: case.data,
            exact: Some(case.exact),
            probes: case.probes,
        }))
    }
}

pub struct PresetRegistry {
    entries: Vec<Box<dyn BoundaryPreset>>,
}

impl PresetRegistry {
    pub fn standard() -> Self {
        let mut entries: Vec<Box<dyn BoundaryPreset>> =
            vec![Box::new(Cos4Theta), Box::new(Constant)];
        for (index, case) in oracle::standard_suite().into_iter().enumerate() {
            entries.push(Box::new(Oracle {
                index,
                name: case.name,
            }));
        }
        PresetRegistry { entries }
    }

    pub fn patterns(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.pattern()).collect()
    }

    pub fn resolve(&self, name: &str, domain: &DomainSpec) -> Result<PresetProblem, PresetError> {
        for e in &self.entries {
            if let Some(r) = e.build(name, domain) {
                return r;
            }
        }
        Err(PresetError::Unknown {
            name: name.into(),
            available: {
                let mut p = self.patterns().join(", ");
                p.push_str(", zero");
                p
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_every_standard_oracle_case_by_name() {
        let reg = PresetRegistry::standard();
        let ball = DomainSpec::unit_ball();
        for case in oracle::standard_suite() {
            let p = reg.resolve(&case.name, &ball).unwrap();
            assert!(p.exact.is_some(), "{} lost its exact solution", case.name);
            assert_eq!(p.probes, case.probes);
            assert_eq!(p.domain.anomaly_radius, case.domain.anomaly_radius);
        }
    }

    #[test]
    fn oracle_preset_replaces_the_configured_domain() {
        let reg = PresetRegistry::standard();
        let configured = DomainSpec::default_problem();
        let p = reg.resolve("annulus-r0.5-g1", &configured).unwrap();
        assert!(p.domain.electrodes.is_empty());
        assert_eq!(p.domain.anomaly_radius, 0.5);
    }

    #[test]
    fn constant_parses_its_value_and_zero_is_an_alias() {
        let reg = PresetRegistry::standard();
        let domain = DomainSpec::default_problem();
        let p = reg.resolve("constant:2.5", &domain).unwrap();
        assert_eq!((p.data.phi1)(1, [0.0, 0.0, 1.0]), 2.5);
        let z = reg.resolve("zero", &domain).unwrap();
        assert_eq!((z.data.phi1)(1, [0.0, 0.0, 1.0]), 0.0);
        assert!(matches!(
            reg.resolve("constant:abc", &domain),
            Err(PresetError::BadParameter { .. })
        ));
    }

    #[test]
    fn cos4theta_needs_electrodes_and_unknown_names_list_options() {
        let reg = PresetRegistry::standard();
        let ball = DomainSpec::unit_ball();
        assert!(matches!(
            reg.resolve("cos4theta", &ball),
            Err(PresetError::NeedsElectrodes { .. })
        ));
        let Err(err) = reg.resolve("nope", &ball) else {
            panic!("unknown preset resolved");
        };
        let msg = err.to_string();
        assert!(msg.contains("cos4theta") && msg.contains("annulus-r0.5-g1"), "{msg}");
    }

    #[test]
    fn cos4theta_matches_the_drive_on_electrode_centers() {
        let reg = PresetRegistry::standard();
        let domain = DomainSpec::default_problem();
        let p = reg.resolve("cos4theta", &domain).unwrap();
        for (l, e) in domain.electrodes.iter().enumerate() {
            let v = (p.data.phi1)(e.id, e.center);
            let expect = if l % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - expect).abs() < 1e-12, "electrode {} drive {v}", e.id);
        }
    }
}
