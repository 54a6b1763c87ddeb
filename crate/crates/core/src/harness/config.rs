use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BetisError, Result};
use crate::filter::Prior;
use crate::metrics::TestPolicy;
use crate::model::{Compartment, EpidemicParams};

/// Population size at which the reference contact radius applies.
pub const REFERENCE_POPULATION: usize = 10_000;
/// Contact radius at the reference population.
pub const REFERENCE_D_INF: f64 = 0.007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// N = 2,000 with the contact radius rescaled to the reference density.
    #[default]
    Desk,
    /// N = 10,000, d_inf = 0.007.
    Paper,
}

impl Preset {
    pub fn population(self) -> usize {
        match self {
            Preset::Desk => 2_000,
            Preset::Paper => REFERENCE_POPULATION,
        }
    }
}

impl FromStr for Preset {
    type Err = BetisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(BetisError::invalid("preset", format!("`{other}` is not one of desk, paper"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

/// Where the non-user contact distribution `f(m)` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ContactModelSource {
    /// Measured from the ground-truth contacts of the same run.
    Empirical,
    /// Poisson with the given rate, or `(N - N_u) * pi * d_inf^2` if absent.
    Poisson { lambda: Option<f64> },
    /// Two-column CSV `m,f`.
    File { path: PathBuf },
}

/// A fully resolved and validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub preset: Preset,
    pub n: usize,
    pub c0: f64,
    pub horizon: u32,
    /// Stop once nobody is in E, I or I_a.
    pub early_stop: bool,
    pub params: EpidemicParams,
    pub prior: Prior,
    pub f_source: ContactModelSource,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub test_policy: TestPolicy,
}

/// On-disk form: every key optional, flat.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    preset: Option<String>,
    n: Option<usize>,
    c0: Option<f64>,
    horizon: Option<u32>,
    early_stop: Option<bool>,
    beta: Option<f64>,
    delta: Option<f64>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    vartheta: Option<f64>,
    p_fa: Option<f64>,
    p_tp: Option<f64>,
    d_inf: Option<f64>,
    p_move: Option<f64>,
    prior_s: Option<f64>,
    prior_s_fa: Option<f64>,
    prior_e: Option<f64>,
    prior_i: Option<f64>,
    prior_i_a: Option<f64>,
    prior_r: Option<f64>,
    f_source: Option<String>,
    f_lambda: Option<f64>,
    f_file: Option<PathBuf>,
    n_test: Option<usize>,
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
    exposed_positive: Option<bool>,
}

impl RawConfig {
    fn resolve(self, preset_override: Option<Preset>) -> Result<ScenarioConfig> {
        let preset = match (preset_override, self.preset.as_deref()) {
            (Some(p), _) => p,
            (None, Some(s)) => s.parse()?,
            (None, None) => Preset::default(),
        };
        let n = self.n.unwrap_or_else(|| preset.population());
        if n == 0 {
            return Err(BetisError::invalid("n", "population must contain at least one individual"));
        }
        let defaults = EpidemicParams::default();
        let d_inf = self
            .d_inf
            .unwrap_or_else(|| REFERENCE_D_INF * (REFERENCE_POPULATION as f64 / n as f64).sqrt());
        let params = EpidemicParams {
            beta: self.beta.unwrap_or(defaults.beta),
            delta: self.delta.unwrap_or(defaults.delta),
            gamma: self.gamma.unwrap_or(defaults.gamma),
            alpha: self.alpha.unwrap_or(defaults.alpha),
            vartheta: self.vartheta.unwrap_or(defaults.vartheta),
            p_fa: self.p_fa.unwrap_or(defaults.p_fa),
            p_tp: self.p_tp.unwrap_or(defaults.p_tp),
            d_inf,
            p_move: self.p_move.unwrap_or(defaults.p_move),
        };
        params.validate()?;

        let c0 = self.c0.unwrap_or(0.6);
        if !(c0 > 0.0 && c0 <= 1.0) {
            return Err(BetisError::invalid("c0", format!("user fraction {c0} must lie in (0, 1]")));
        }
        let horizon = self.horizon.unwrap_or(150);
        if horizon == 0 {
            return Err(BetisError::invalid("horizon", "at least one step is required"));
        }

        let prior_keys = [
            self.prior_s,
            self.prior_s_fa,
            self.prior_e,
            self.prior_i,
            self.prior_i_a,
            self.prior_r,
        ];
        let prior = if prior_keys.iter().all(Option::is_none) {
            Prior::seeded(params.alpha)
        } else {
            Prior::from_probs(prior_keys.map(|p| p.unwrap_or(0.0))).map_err(|e| BetisError::invalid("prior_*", e.to_string()))?
        };

        let f_source = match self.f_source.as_deref().unwrap_or("empirical") {
            "empirical" => ContactModelSource::Empirical,
            "poisson" => {
                if let Some(l) = self.f_lambda {
                    if !(l >= 0.0 && l.is_finite()) {
                        return Err(BetisError::invalid("f_lambda", format!("{l} must be a finite rate >= 0")));
                    }
                }
                ContactModelSource::Poisson { lambda: self.f_lambda }
            }
            "file" => ContactModelSource::File {
                path: self
                    .f_file
                    .ok_or_else(|| BetisError::invalid("f_file", "required when f_source = \"file\""))?,
            },
            other => {
                return Err(BetisError::invalid(
                    "f_source",
                    format!("`{other}` is not one of empirical, poisson, file"),
                ))
            }
        };

        let seeds = self.seeds.unwrap_or_else(|| (1..=5).collect());
        if seeds.is_empty() {
            return Err(BetisError::invalid("seeds", "at least one seed is required"));
        }
        let mut cfg = ScenarioConfig {
            name: self.name.unwrap_or_else(|| "scenario".to_string()),
            preset,
            n,
            c0,
            horizon,
            early_stop: self.early_stop.unwrap_or(true),
            params,
            prior,
            f_source,
            n_test: 0,
            seeds,
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            test_policy: TestPolicy {
                exposed_positive: self.exposed_positive.unwrap_or(false),
            },
        };
        if cfg.n_users() == 0 {
            return Err(BetisError::invalid("c0", format!("n * c0 = {} leaves no app users", n as f64 * c0)));
        }
        cfg.n_test = self.n_test.unwrap_or_else(|| cfg.n_users() / 50);
        Ok(cfg)
    }
}

impl ScenarioConfig {
    /// Parses a flat TOML document; missing keys take the reference
    /// defaults.
    pub fn from_toml_str(text: &str, preset_override: Option<Preset>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| BetisError::ConfigParse(e.to_string()))?;
        raw.resolve(preset_override)
    }

    pub fn defaults(preset: Preset) -> Self {
        RawConfig::default()
            .resolve(Some(preset))
            .expect("built-in defaults are valid")
    }

    /// Number of app users, `floor(n * c0)`.
    pub fn n_users(&self) -> usize {
        let exact = self.n as f64 * self.c0;
        let rounded = (exact + 1e-9).floor();
        if (exact - rounded).abs() > 1e-9 {
            log::warn!("n * c0 = {exact} is not integral; using {rounded} users");
        }
        rounded as usize
    }

    /// Re-validates a config assembled in code.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n == 0 {
            return Err(BetisError::invalid("n", "population must contain at least one individual"));
        }
        if !(self.c0 > 0.0 && self.c0 <= 1.0) || self.n_users() == 0 {
            return Err(BetisError::invalid("c0", format!("user fraction {} leaves no app users", self.c0)));
        }
        if self.horizon == 0 {
            return Err(BetisError::invalid("horizon", "at least one step is required"));
        }
        if self.seeds.is_empty() {
            return Err(BetisError::invalid("seeds", "at least one seed is required"));
        }
        Prior::from_probs(*self.prior.belief().probs())?;
        Ok(())
    }

    /// Stable identifier of everything that influences a run's results
    /// (seeds and output location excluded).
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    pub fn prior_mass(&self, c: Compartment) -> f64 {
        self.prior.belief().get(c)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path, preset_override: Option<Preset>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| BetisError::io(path, e))?;
    ScenarioConfig::from_toml_str(&text, preset_override)
}

pub const SUITE_NAMES: [&str; 6] = ["fig1", "fig2", "fig3", "fig1_limits", "fig2_limits", "fig3_limits"];

/// Expands a named experiment family into concrete scenarios derived from
/// `base`.
pub fn scenario_suite(name: &str, base: &ScenarioConfig) -> Result<Vec<ScenarioConfig>> {
    let (family, limits) = match name.strip_suffix("_limits") {
        Some(f) => (f, true),
        None => (name, false),
    };
    let mut base = base.clone();
    if limits {
        base.params.p_fa = 0.2;
        base.params.p_tp = 0.75;
    }
    let variant = |label: String, c0: f64, n_test: Option<usize>| {
        let mut cfg = base.clone();
        cfg.c0 = c0;
        cfg.n_test = n_test.unwrap_or_else(|| cfg.n_users() / 50);
        cfg.name = format!("{name}_{label}");
        cfg.output_dir = base.output_dir.join(name).join(&label);
        cfg
    };
    let configs = match family {
        "fig1" => [0.2, 0.4, 0.6, 0.8, 1.0]
            .into_iter()
            .map(|c0| variant(format!("c0_{c0}"), c0, None))
            .collect(),
        "fig2" => vec![variant("c0_0.6".to_string(), 0.6, None)],
        "fig3" => [25, 50, 100]
            .into_iter()
            .map(|t| variant(format!("ntest_{t}"), 0.6, Some(t)))
            .collect(),
        _ => return Err(BetisError::UnknownSuite(name.to_string())),
    };
    Ok(configs)
}
