//! Conductor types and the conductor catalog.
//!
//! In memory every length is in meters. The on-disk catalog stores the
//! diameter and projected width in millimeters and converts on load.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_CATALOG: &str = include_str!("../data/conductors.json");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown conductor `{0}`")]
    UnknownConductor(String),
    #[error("invalid conductor `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("failed to read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog: {0}")]
    Json(#[from] serde_json::Error),
}

/// Physical and electrical description of one (sub-)conductor type.
#[derive(Debug, Clone, PartialEq)]
pub struct Conductor {
    pub name: String,
    /// Outside diameter, m.
    pub diameter: f64,
    /// Projected area per unit length, m (equals the diameter for a round conductor).
    pub projected_area_per_length: f64,
    /// Heat capacity per unit length mC_p, J/(m·°C).
    pub heat_capacity_per_length: f64,
    /// Resistance at `reference_temp`, Ω/m.
    pub resistance_ref: f64,
    /// Reference temperature of `resistance_ref`, °C.
    pub reference_temp: f64,
    /// Resistance slope α_R, Ω/(m·°C).
    pub resistance_slope: f64,
    pub emissivity: f64,
    pub absorptivity: f64,
    /// Sub-conductors per phase. Each carries an equal share of the phase current.
    pub bundle_count: u32,
    /// Phase rating, A.
    pub rated_current: f64,
}

impl Conductor {
    /// Single (unbundled) ACSR Drake with the catalog's datasheet values.
    pub fn drake() -> Self {
        Catalog::builtin()
            .get("Drake")
            .expect("builtin catalog contains Drake")
            .clone()
            .with_bundle_count(1)
    }

    pub fn with_bundle_count(mut self, bundle_count: u32) -> Self {
        self.bundle_count = bundle_count;
        self
    }

    /// Resistance R(T) = R_0 + α_R (T − T_0), Ω/m.
    pub fn resistance(&self, temp: f64) -> f64 {
        self.resistance_ref + self.resistance_slope * (temp - self.reference_temp)
    }

    /// Current through one sub-conductor when the phase carries `phase_current`.
    pub fn sub_conductor_current(&self, phase_current: f64) -> f64 {
        phase_current / f64::from(self.bundle_count.max(1))
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let fail = |reason: &str| {
            Err(CatalogError::Invalid {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.diameter > 0.0) {
            return fail("diameter must be positive");
        }
        if !(self.projected_area_per_length > 0.0) {
            return fail("projected area per length must be positive");
        }
        if !(self.heat_capacity_per_length > 0.0) {
            return fail("heat capacity per length must be positive");
        }
        if !(self.resistance_ref > 0.0) {
            return fail("reference resistance must be positive");
        }
        if !(self.resistance_slope >= 0.0) {
            return fail("resistance slope must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.emissivity) {
            return fail("emissivity must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.absorptivity) {
            return fail("absorptivity must lie in [0, 1]");
        }
        if self.bundle_count < 1 {
            return fail("bundle count must be at least 1");
        }
        if !(self.rated_current > 0.0) {
            return fail("rated current must be positive");
        }
        Ok(())
    }
}

/// On-disk conductor record. `diameter` and `projected_area_per_length` are in mm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConductorRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_class: Option<String>,
    pub diameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projected_area_per_length: Option<f64>,
    pub heat_capacity_per_length: f64,
    pub resistance_ref: f64,
    #[serde(default = "default_reference_temp")]
    pub reference_temp: f64,
    pub resistance_slope: f64,
    pub emissivity: f64,
    pub absorptivity: f64,
    #[serde(default = "default_bundle")]
    pub bundle_count: u32,
    pub rated_current: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

fn default_reference_temp() -> f64 {
    25.0
}

fn default_bundle() -> u32 {
    1
}

impl From<&ConductorRecord> for Conductor {
    fn from(r: &ConductorRecord) -> Self {
        let mm = 1e-3;
        Conductor {
            name: r.name.clone(),
            diameter: r.diameter * mm,
            projected_area_per_length: r.projected_area_per_length.unwrap_or(r.diameter) * mm,
            heat_capacity_per_length: r.heat_capacity_per_length,
            resistance_ref: r.resistance_ref,
            reference_temp: r.reference_temp,
            resistance_slope: r.resistance_slope,
            emissivity: r.emissivity,
            absorptivity: r.absorptivity,
            bundle_count: r.bundle_count,
            rated_current: r.rated_current,
        }
    }
}

impl From<&Conductor> for ConductorRecord {
    fn from(c: &Conductor) -> Self {
        ConductorRecord {
            name: c.name.clone(),
            voltage_class: None,
            diameter: c.diameter * 1e3,
            projected_area_per_length: Some(c.projected_area_per_length * 1e3),
            heat_capacity_per_length: c.heat_capacity_per_length,
            resistance_ref: c.resistance_ref,
            reference_temp: c.reference_temp,
            resistance_slope: c.resistance_slope,
            emissivity: c.emissivity,
            absorptivity: c.absorptivity,
            bundle_count: c.bundle_count,
            rated_current: c.rated_current,
            provenance: None,
        }
    }
}

/// A named set of conductor types.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    conductors: Vec<Conductor>,
}

impl Catalog {
    /// The five typical ACSR types shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_CATALOG).expect("builtin catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let records: Vec<ConductorRecord> = serde_json::from_str(text)?;
        let conductors = records.iter().map(Conductor::from).collect::<Vec<_>>();
        for c in &conductors {
            c.validate()?;
        }
        Ok(Catalog { conductors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<ConductorRecord> =
            self.conductors.iter().map(ConductorRecord::from).collect();
        serde_json::to_string_pretty(&records).expect("records serialize")
    }

    pub fn get(&self, name: &str) -> Result<&Conductor, CatalogError> {
        self.conductors
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| CatalogError::UnknownConductor(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Conductor> {
        self.conductors.iter()
    }

    pub fn len(&self) -> usize {
        self.conductors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conductors.is_empty()
    }

    pub fn insert(&mut self, conductor: Conductor) {
        self.conductors.retain(|c| c.name != conductor.name);
        self.conductors.push(conductor);
    }
}
