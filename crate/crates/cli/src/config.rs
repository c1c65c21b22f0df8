//! Run configuration: one JSON document drives one deterministic campaign.

use std::path::Path;

use anyhow::{bail, Context, Result};
use groupquant::group::BianchiFamily;
use groupquant::quant::TauKind;
use groupquant::setup::{
    affine_line_setup, affine_setup, bianchi_setup, euclidean_setup, Setup,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Group selector with family parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GroupChoice {
    Euclidean {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_extent")]
        extent: f64,
    },
    Affine,
    AffineLine {
        #[serde(default = "default_c_base")]
        c_base: usize,
    },
    Bianchi {
        variant: String,
        #[serde(default)]
        parameter: Option<f64>,
    },
}

fn default_dim() -> usize {
    1
}
fn default_extent() -> f64 {
    8.0
}
fn default_c_base() -> usize {
    8
}

impl GroupChoice {
    pub fn label(&self) -> String {
        match self {
            GroupChoice::Euclidean { dim, .. } => format!("euclidean({dim})"),
            GroupChoice::Affine => "affine".into(),
            GroupChoice::AffineLine { .. } => "affine_line".into(),
            GroupChoice::Bianchi { variant, parameter } => match parameter {
                Some(p) => format!("bianchi({variant} {p})"),
                None => format!("bianchi({variant})"),
            },
        }
    }

    pub fn bianchi_family(&self) -> Result<Option<BianchiFamily>> {
        let GroupChoice::Bianchi { variant, parameter } = self else {
            return Ok(None);
        };
        let family = match (variant.as_str(), parameter) {
            ("IV", None) => BianchiFamily::Four,
            ("V", None) => BianchiFamily::Five,
            ("VI", Some(q)) => BianchiFamily::Six { q: *q },
            ("VII", Some(p)) => BianchiFamily::Seven { p: *p },
            ("VI", None) => bail!("bianchi VI needs a `parameter` field (the exponent q)"),
            ("VII", None) => bail!("bianchi VII needs a `parameter` field (the rotation rate p)"),
            (other, _) => bail!("unknown bianchi variant '{other}' (expected IV, V, VI, VII)"),
        };
        Ok(Some(family))
    }

    /// Default base lattice count for this family's resolution ladder.
    pub fn default_base(&self) -> usize {
        match self {
            GroupChoice::Euclidean { .. } => 128,
            GroupChoice::Affine => 17,
            GroupChoice::AffineLine { .. } => 9,
            GroupChoice::Bianchi { .. } => 9,
        }
    }

    /// Build the matched grid/dual pair at a refinement level.
    pub fn setup(&self, base: usize, level: u32) -> Result<Setup> {
        let s = match self {
            GroupChoice::Euclidean { dim, extent } => euclidean_setup(*dim, *extent, base, level)?,
            GroupChoice::Affine => affine_setup(base, level)?,
            GroupChoice::AffineLine { c_base } => affine_line_setup(base, *c_base, level)?,
            GroupChoice::Bianchi { .. } => {
                let family = self.bianchi_family()?.expect("bianchi variant checked above");
                bianchi_setup(family, base, level)?
            }
        };
        Ok(s)
    }
}

/// Test-function family specification: builtin spec strings, sampled in
/// order when a check needs deterministic non-random data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionSpec {
    pub builtins: Vec<String>,
}

impl Default for FunctionSpec {
    fn default() -> Self {
        Self { builtins: Vec::new() }
    }
}

/// One campaign configuration; see the repository README for examples.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub group: GroupChoice,
    /// Base lattice count of the resolution ladder (family default if absent).
    #[serde(default)]
    pub base: Option<usize>,
    #[serde(default = "default_tau")]
    pub tau: String,
    #[serde(default)]
    pub functions: FunctionSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_tau() -> String {
    "kohn_nirenberg".into()
}
fn default_levels() -> u32 {
    1
}
fn default_format() -> String {
    "csv".into()
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.tau_kind()?;
        self.group.bianchi_family()?;
        if self.levels < 1 {
            bail!("levels must be at least 1");
        }
        if !matches!(self.format.as_str(), "csv" | "json") {
            bail!("format must be 'csv' or 'json', got '{}'", self.format);
        }
        if let GroupChoice::Euclidean { dim, extent } = &self.group {
            if !(1..=3).contains(dim) {
                bail!("euclidean dim must be 1..=3, got {dim}");
            }
            if !(*extent > 0.0) {
                bail!("euclidean extent must be positive");
            }
        }
        for spec in &self.functions.builtins {
            crate::builtins::Builtin::parse(spec)
                .with_context(|| format!("in functions.builtins entry '{spec}'"))?;
        }
        Ok(())
    }

    pub fn tau_kind(&self) -> Result<TauKind> {
        TauKind::parse(&self.tau).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn base(&self) -> usize {
        self.base.unwrap_or_else(|| self.group.default_base())
    }

    pub fn setup(&self, level: u32) -> Result<Setup> {
        self.group.setup(self.base(), level)
    }

    /// Hash of the canonical serialized form; identifies a campaign in
    /// reports without embedding the whole document.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
