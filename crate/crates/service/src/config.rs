use clap::Args;
use knowlens_core::embednet::Hyperparams;

#[derive(Debug, Clone, Args)]
pub struct ServiceConfig {
    /// Maximum number of live sessions.
    #[arg(long, env = "KNOWLENS_MAX_SESSIONS", default_value_t = 16)]
    pub max_sessions: usize,
    /// Maximum number of CSV rows per dataset.
    #[arg(long, env = "KNOWLENS_MAX_ROWS", default_value_t = 100_000)]
    pub max_rows: usize,
    /// Maximum number of attributes per dataset.
    #[arg(long, env = "KNOWLENS_MAX_COLUMNS", default_value_t = 20_000)]
    pub max_columns: usize,
    /// Request body limit in bytes.
    #[arg(long, env = "KNOWLENS_BODY_LIMIT", default_value_t = 256 * 1024 * 1024)]
    pub body_limit: usize,
    /// Default training hyperparameters as JSON, e.g. `{"epochs":50,"eta":0.1}`.
    #[arg(long = "default-hp", env = "KNOWLENS_DEFAULT_HP", value_parser = parse_hp, default_value = "{}")]
    pub default_hp: Hyperparams,
}

fn parse_hp(s: &str) -> Result<Hyperparams, String> {
    let hp: Hyperparams = serde_json::from_str(s).map_err(|e| e.to_string())?;
    hp.validate().map_err(|e| e.to_string())?;
    Ok(hp)
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: 16,
            max_rows: 100_000,
            max_columns: 20_000,
            body_limit: 256 * 1024 * 1024,
            default_hp: Hyperparams::default(),
        }
    }
}
