//! Formal eligibility gate: location routing and the income and status
//! screens that run before any model is consulted.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{is_normalized_location, ApplicantProfile, ProgramId};

/// Location key to program id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoutingTable {
    entries: BTreeMap<String, ProgramId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoutingError {
    UnnormalizedKey(String),
    UnknownProgram { key: String, program: ProgramId },
}

impl fmt::Display for RoutingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoutingError::UnnormalizedKey(k) => write!(f, "routing key `{k}` is not normalized"),
            RoutingError::UnknownProgram { key, program } => {
                write!(f, "routing key `{key}` references unknown program `{program}`")
            }
        }
    }
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, program: ProgramId) {
        self.entries.insert(key.into(), program);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ProgramId)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Checks key normalization and that every target exists in `registry`.
    pub fn validate<'a>(
        &self,
        registry: impl IntoIterator<Item = &'a ProgramId>,
    ) -> Result<(), RoutingError> {
        let known: BTreeSet<&ProgramId> = registry.into_iter().collect();
        for (key, program) in &self.entries {
            if !is_normalized_location(key) {
                return Err(RoutingError::UnnormalizedKey(key.clone()));
            }
            if !known.contains(program) {
                return Err(RoutingError::UnknownProgram { key: key.clone(), program: program.clone() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteError {
    /// The location is outside every service area.
    NotServed,
    /// Caller passed a raw location instead of a normalized key.
    NotNormalized(String),
}

impl fmt::Display for RouteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteError::NotServed => f.write_str("location is not served by any program"),
            RouteError::NotNormalized(k) => write!(f, "location `{k}` must be normalized before routing"),
        }
    }
}

/// Exact-key lookup of the program serving `location`.
pub fn route_program<'t>(location: &str, table: &'t RoutingTable) -> Result<&'t ProgramId, RouteError> {
    if !is_normalized_location(location) {
        return Err(RouteError::NotNormalized(location.into()));
    }
    table.entries.get(location).ok_or(RouteError::NotServed)
}

/// Annual poverty guideline amounts for households of one to eight people,
/// plus the amount added for each member beyond eight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PovertyGuideline {
    pub amounts: [u64; 8],
    pub additional_member: u64,
}

impl PovertyGuideline {
    pub fn for_household(&self, size: u32) -> u64 {
        match size {
            0 => self.amounts[0],
            1..=8 => self.amounts[size as usize - 1],
            n => self.amounts[7].saturating_add(self.additional_member.saturating_mul(u64::from(n - 8))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormalConfig {
    pub poverty_guideline: PovertyGuideline,
    pub income_ceiling_percent: u32,
    /// When empty the status screen is disabled and the field is not requested.
    #[serde(default)]
    pub allowed_status_categories: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormalConfigError {
    ZeroCeiling,
}

impl fmt::Display for FormalConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("income_ceiling_percent must be positive")
    }
}

impl FormalConfig {
    pub fn validate(&self) -> Result<(), FormalConfigError> {
        if self.income_ceiling_percent == 0 {
            return Err(FormalConfigError::ZeroCeiling);
        }
        Ok(())
    }

    /// True when `income` is above the ceiling for `household_size`.
    ///
    /// Compares `income * 100 > guideline * percent` so no fractional
    /// ceiling is ever rounded.
    pub fn income_exceeds(&self, income: u64, household_size: u32) -> bool {
        let guideline = u128::from(self.poverty_guideline.for_household(household_size));
        u128::from(income) * 100 > guideline * u128::from(self.income_ceiling_percent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IneligibleReason {
    IncomeExceedsCeiling,
    StatusNotAllowed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum FormalResult {
    Eligible,
    Ineligible { reason: IneligibleReason },
    Unknown { missing_fields: Vec<String> },
}

pub const FIELD_ANNUAL_INCOME: &str = "annual_income";
pub const FIELD_STATUS_CATEGORY: &str = "status_category";

/// Runs the income and status screens.
///
/// A failing check on a present field beats missing fields; the income
/// check runs before the status check. Income equal to the ceiling passes.
pub fn check_formal_eligibility(profile: &ApplicantProfile, cfg: &FormalConfig) -> FormalResult {
    debug_assert!(profile.household_size >= 1);
    let status_screen = !cfg.allowed_status_categories.is_empty();

    if let Some(income) = profile.annual_income {
        if cfg.income_exceeds(income, profile.household_size) {
            return FormalResult::Ineligible { reason: IneligibleReason::IncomeExceedsCeiling };
        }
    }
    if status_screen {
        if let Some(status) = &profile.status_category {
            if !cfg.allowed_status_categories.contains(status) {
                return FormalResult::Ineligible { reason: IneligibleReason::StatusNotAllowed };
            }
        }
    }

    let mut missing = Vec::new();
    if profile.annual_income.is_none() {
        missing.push(FIELD_ANNUAL_INCOME.into());
    }
    if status_screen && profile.status_category.is_none() {
        missing.push(FIELD_STATUS_CATEGORY.into());
    }
    if missing.is_empty() {
        FormalResult::Eligible
    } else {
        FormalResult::Unknown { missing_fields: missing }
    }
}
