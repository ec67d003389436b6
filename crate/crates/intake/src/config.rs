//! TOML configuration for the service and for evaluation runs.
//!
//! Paths inside a config file are resolved against that file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use intake_core::screener::prompt::DEFAULT_INSTRUCTIONS_VERSION;
use intake_core::screener::{DecodeParams, InstructionSet};
use intake_core::{normalize_location, validate_program, FormalConfig, Program, ProgramId, RoutingTable, Timestamp};

use crate::providers::{validate_registry, ProviderConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {field}: {message}")]
    Invalid { path: PathBuf, field: String, message: String },
}

fn default_port() -> u16 {
    8080
}

fn default_host() -> String {
    "127.0.0.1".into()
}

fn default_admin_env() -> String {
    "INTAKE_ADMIN_TOKEN".into()
}

fn default_statewide() -> String {
    "Your location is outside the areas served by the programs on this site. \
     Contact your state's legal aid hotline to find the program that serves your area."
        .into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProgram {
    id: String,
    name: String,
    service_area: Vec<String>,
    #[serde(default)]
    rules_text: Option<String>,
    #[serde(default)]
    rules_file: Option<PathBuf>,
    #[serde(default)]
    website: String,
    #[serde(default)]
    phone: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServiceConfig {
    #[serde(default = "default_host")]
    listen_host: String,
    #[serde(default = "default_port")]
    listen_port: u16,
    #[serde(default)]
    instruction_version: Option<String>,
    #[serde(default)]
    instructions_file: Option<PathBuf>,
    #[serde(default)]
    max_output_tokens: Option<u32>,
    #[serde(default)]
    screening_provider: Option<String>,
    #[serde(default = "default_admin_env")]
    admin_token_env: String,
    #[serde(default)]
    transcript_log: Option<PathBuf>,
    #[serde(default = "default_statewide")]
    statewide_referral: String,
    formal: FormalConfig,
    #[serde(default)]
    programs: Vec<RawProgram>,
    #[serde(default)]
    routing: BTreeMap<String, String>,
    #[serde(default)]
    providers: Vec<ProviderConfig>,
}

/// Fully validated service configuration.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen_host: String,
    pub listen_port: u16,
    pub instructions: InstructionSet,
    pub params: DecodeParams,
    pub screening_provider: Option<String>,
    pub admin_token_env: String,
    pub transcript_log: Option<PathBuf>,
    pub statewide_referral: String,
    pub formal: FormalConfig,
    pub programs: BTreeMap<ProgramId, Program>,
    pub routing: RoutingTable,
    pub providers: Vec<ProviderConfig>,
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

fn resolve_provider_paths(base: &Path, providers: &mut [ProviderConfig]) {
    for p in providers {
        if let Some(s) = &p.store {
            p.store = Some(resolve(base, s));
        }
        if let Some(s) = &p.record_to {
            p.record_to = Some(resolve(base, s));
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let raw: RawServiceConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_raw(raw, path)
    }

    fn from_raw(raw: RawServiceConfig, path: &Path) -> Result<Self, ConfigError> {
        let base = base_dir(path);
        let invalid = |field: String, message: String| ConfigError::Invalid { path: path.to_path_buf(), field, message };

        raw.formal.validate().map_err(|e| invalid("formal.income_ceiling_percent".into(), e.to_string()))?;

        let mut programs = BTreeMap::new();
        for (i, rp) in raw.programs.into_iter().enumerate() {
            let field = format!("programs[{i}] ({})", rp.id);
            let rules_text = match (rp.rules_text, rp.rules_file) {
                (Some(t), None) => t,
                (None, Some(f)) => read(&resolve(&base, &f))?,
                _ => return Err(invalid(field, "exactly one of rules_text and rules_file is required".into())),
            };
            let mut area = BTreeSet::new();
            for key in &rp.service_area {
                area.insert(normalize_location(key).map_err(|e| invalid(field.clone(), e.to_string()))?);
            }
            let program = Program {
                id: ProgramId::new(rp.id),
                name: rp.name,
                service_area: area,
                rules_text,
                website: rp.website,
                phone: rp.phone,
                rules_updated_at: crate::now(),
            };
            let program = validate_program(program).map_err(|e| invalid(field.clone(), e.to_string()))?;
            if programs.insert(program.id.clone(), program).is_some() {
                return Err(invalid(field, "duplicate program id".into()));
            }
        }

        let mut routing = RoutingTable::new();
        for p in programs.values() {
            for key in &p.service_area {
                routing.insert(key.clone(), p.id.clone());
            }
        }
        for (key, id) in raw.routing {
            let field = format!("routing.{key}");
            let norm = normalize_location(&key).map_err(|e| invalid(field.clone(), e.to_string()))?;
            let id = ProgramId::new(id);
            if !programs.contains_key(&id) {
                return Err(invalid(field, format!("unknown program `{id}`")));
            }
            routing.insert(norm, id);
        }
        routing.validate(programs.keys()).map_err(|e| invalid("routing".into(), e.to_string()))?;

        let mut providers = raw.providers;
        resolve_provider_paths(&base, &mut providers);
        validate_registry(&providers).map_err(|e| invalid("providers".into(), e.to_string()))?;
        if let Some(name) = &raw.screening_provider {
            if !providers.iter().any(|p| &p.name == name) {
                return Err(invalid("screening_provider".into(), format!("no provider named `{name}`")));
            }
        }

        let instructions = match (raw.instructions_file, raw.instruction_version) {
            (Some(f), version) => InstructionSet::new(
                version.unwrap_or_else(|| "custom".into()),
                read(&resolve(&base, &f))?,
            ),
            (None, None) => InstructionSet::default(),
            (None, Some(v)) if v == DEFAULT_INSTRUCTIONS_VERSION => InstructionSet::default(),
            (None, Some(v)) => {
                return Err(invalid(
                    "instruction_version".into(),
                    format!("unknown built-in version `{v}` (available: {DEFAULT_INSTRUCTIONS_VERSION})"),
                ))
            }
        };

        Ok(ServiceConfig {
            listen_host: raw.listen_host,
            listen_port: raw.listen_port,
            instructions,
            params: raw.max_output_tokens.map(DecodeParams::new).unwrap_or_default(),
            screening_provider: raw.screening_provider,
            admin_token_env: raw.admin_token_env,
            transcript_log: raw.transcript_log.map(|p| resolve(&base, &p)),
            statewide_referral: raw.statewide_referral,
            formal: raw.formal,
            programs,
            routing,
            providers,
        })
    }

    pub fn provider(&self, name: &str) -> Option<&ProviderConfig> {
        self.providers.iter().find(|p| p.name == name)
    }

    /// Sets every program's `rules_updated_at`; used to make loads reproducible.
    pub fn stamp_rules(&mut self, at: Timestamp) {
        for p in self.programs.values_mut() {
            p.rules_updated_at = at;
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvidersFile {
    #[serde(default)]
    programs_config: Option<PathBuf>,
    providers: Vec<ProviderConfig>,
}

/// The model matrix for an evaluation run, kept apart from deployment config.
#[derive(Debug, Clone)]
pub struct ProvidersFile {
    /// Service config supplying programs and instructions, if named.
    pub programs_config: Option<PathBuf>,
    pub providers: Vec<ProviderConfig>,
}

impl ProvidersFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let raw: RawProvidersFile =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        let base = base_dir(path);
        let mut providers = raw.providers;
        resolve_provider_paths(&base, &mut providers);
        validate_registry(&providers).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            field: "providers".into(),
            message: e.to_string(),
        })?;
        Ok(ProvidersFile { programs_config: raw.programs_config.map(|p| resolve(&base, &p)), providers })
    }
}
