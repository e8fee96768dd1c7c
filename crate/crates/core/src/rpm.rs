//! Recommended spindle speeds for drilling, by material and drill diameter.
//!
//! The entries are stored, not computed: they were generated once from
//! `round(1000 * Vc / (pi * d))` and are checked against that formula in
//! the tests.

use alloc::string::String;
use alloc::vec::Vec;

use serde_json::Value;

pub const MAX_DIAMETER_MM: f64 = 50.0;

/// Cutting speed in m/min per material, in table row order.
pub const CUTTING_SPEEDS_M_PER_MIN: [(&str, u32); 4] = [("aluminum", 100), ("brass", 60), ("steel", 30), ("stainless", 20)];

pub const DIAMETERS_MM: [u32; 12] = [3, 5, 6, 8, 10, 12, 16, 20, 25, 30, 40, 50];

const RPM: [[u32; 12]; 4] = [
    [10610, 6366, 5305, 3979, 3183, 2653, 1989, 1592, 1273, 1061, 796, 637],
    [6366, 3820, 3183, 2387, 1910, 1592, 1194, 955, 764, 637, 477, 382],
    [3183, 1910, 1592, 1194, 955, 796, 597, 477, 382, 318, 239, 191],
    [2122, 1273, 1061, 796, 637, 531, 398, 318, 255, 212, 159, 127],
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LookupError {
    #[error("unknown material `{0}`")]
    UnknownMaterial(String),
    #[error("diameter must be ≤ 50 mm")]
    AboveMaximum(f64),
    #[error("diameter {0} mm is not listed in the RPM table")]
    UnsupportedDiameter(f64),
}

impl LookupError {
    pub fn category(&self) -> &'static str {
        match self {
            LookupError::UnknownMaterial(_) => "unknown_material",
            LookupError::AboveMaximum(_) => "constraint_violation",
            LookupError::UnsupportedDiameter(_) => "unsupported_diameter",
        }
    }
}

/// Lowercase and trim; no other normalization.
pub fn normalize_material(material: &str) -> String {
    material.trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RpmTable;

impl RpmTable {
    pub fn materials(&self) -> impl Iterator<Item = &'static str> {
        CUTTING_SPEEDS_M_PER_MIN.iter().map(|(m, _)| *m)
    }

    pub fn diameters(&self) -> &'static [u32] {
        &DIAMETERS_MM
    }

    pub fn cutting_speed(&self, material: &str) -> Option<u32> {
        CUTTING_SPEEDS_M_PER_MIN.iter().find(|(m, _)| *m == material).map(|(_, v)| *v)
    }

    /// Every `(material, diameter, rpm)` entry in table order.
    pub fn entries(&self) -> impl Iterator<Item = (&'static str, u32, u32)> {
        CUTTING_SPEEDS_M_PER_MIN.iter().enumerate().flat_map(|(row, (m, _))| {
            DIAMETERS_MM.iter().enumerate().map(move |(col, d)| (*m, *d, RPM[row][col]))
        })
    }

    pub fn supported_materials(&self) -> Vec<Value> {
        self.materials().map(Value::from).collect()
    }

    pub fn supported_diameters(&self) -> Vec<Value> {
        DIAMETERS_MM.iter().map(|d| Value::from(*d)).collect()
    }

    /// Exact-match lookup. Material is checked first, then the 50 mm cap,
    /// then table membership.
    pub fn lookup(&self, material: &str, diameter_mm: f64) -> Result<u32, LookupError> {
        let material = normalize_material(material);
        let row = CUTTING_SPEEDS_M_PER_MIN
            .iter()
            .position(|(m, _)| *m == material)
            .ok_or(LookupError::UnknownMaterial(material))?;
        if diameter_mm > MAX_DIAMETER_MM {
            return Err(LookupError::AboveMaximum(diameter_mm));
        }
        let col = DIAMETERS_MM
            .iter()
            .position(|d| f64::from(*d) == diameter_mm)
            .ok_or(LookupError::UnsupportedDiameter(diameter_mm))?;
        Ok(RPM[row][col])
    }
}
