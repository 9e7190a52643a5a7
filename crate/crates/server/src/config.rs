//! Server and provider configuration.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::str::FromStr;

use cnd_core::query::MAX_PAGE_SIZE;

pub const ENV_DATA_DIR: &str = "CND_DATA_DIR";
pub const ENV_EMBED_URL: &str = "CND_EMBED_URL";
pub const ENV_EMBED_KEY: &str = "CND_EMBED_API_KEY";
pub const ENV_LLM_URL: &str = "CND_LLM_URL";
pub const ENV_LLM_KEY: &str = "CND_LLM_API_KEY";

/// Which implementation backs the embedding and generation providers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderMode {
    /// Deterministic offline stubs.
    Stub,
    /// Remote services named by the environment.
    #[default]
    Http,
}

impl FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(ProviderMode::Stub),
            "http" => Ok(ProviderMode::Http),
            other => Err(format!("unknown provider mode {other:?}; expected stub or http")),
        }
    }
}

/// Remote endpoints and keys, read from the environment.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Endpoints {
    pub embed_url: Option<String>,
    pub embed_key: Option<String>,
    pub llm_url: Option<String>,
    pub llm_key: Option<String>,
}

impl std::fmt::Debug for Endpoints {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let hide = |k: &Option<String>| k.as_ref().map(|_| "[redacted]");
        f.debug_struct("Endpoints")
            .field("embed_url", &self.embed_url)
            .field("embed_key", &hide(&self.embed_key))
            .field("llm_url", &self.llm_url)
            .field("llm_key", &hide(&self.llm_key))
            .finish()
    }
}

impl Endpoints {
    pub fn from_env() -> Self {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.is_empty());
        Endpoints {
            embed_url: var(ENV_EMBED_URL),
            embed_key: var(ENV_EMBED_KEY),
            llm_url: var(ENV_LLM_URL),
            llm_key: var(ENV_LLM_KEY),
        }
    }

    /// Key values that must never appear in responses or logs.
    pub fn secrets(&self) -> Vec<String> {
        [&self.embed_key, &self.llm_key].into_iter().flatten().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiConfig {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    pub endpoints: Endpoints,
    pub providers: ProviderMode,
    pub page_size_cap: usize,
    /// Generation requests per minute; 0 disables limiting.
    pub llm_rate_per_minute: u32,
    pub ui_dir: Option<PathBuf>,
}

impl ApiConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ApiConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            data_dir: data_dir.into(),
            endpoints: Endpoints::default(),
            providers: ProviderMode::Stub,
            page_size_cap: MAX_PAGE_SIZE,
            llm_rate_per_minute: 60,
            ui_dir: None,
        }
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.data_dir.is_dir() {
            return Err(format!("data directory {} does not exist", self.data_dir.display()));
        }
        if !(1..=MAX_PAGE_SIZE).contains(&self.page_size_cap) {
            return Err(format!("page size cap must lie in [1, {MAX_PAGE_SIZE}]"));
        }
        if let Some(ui) = &self.ui_dir {
            if !ui.is_dir() {
                return Err(format!("ui directory {} does not exist", ui.display()));
            }
        }
        if self.providers == ProviderMode::Http {
            if self.endpoints.embed_url.is_none() {
                return Err(format!("{ENV_EMBED_URL} must be set for http providers (or use --providers stub)"));
            }
            if self.endpoints.llm_url.is_none() {
                return Err(format!("{ENV_LLM_URL} must be set for http providers (or use --providers stub)"));
            }
        }
        Ok(())
    }
}
