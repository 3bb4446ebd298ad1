//! Engine configuration file (TOML).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use ww_core::watersim::TankConfig;
use ww_engine::agents::{AgentConfig, ChatProvider, Dialogue, DialogueOptions, HttpChatProvider, HttpStyle, MockChatProvider, ProviderRegistry};
use ww_engine::emotion::{EmotionProvider, HttpEmotion, ReferenceEmotion};
use ww_engine::tts::{HttpTts, ReferenceTts, TtsProvider};

use crate::asr::{AsrProvider, HttpAsr, SidecarAsr};
use crate::error::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChatKind {
    Mock,
    HttpOpenaiStyle,
    HttpAnthropicStyle,
}

/// A named chat backend. Endpoints and keys are referenced by environment
/// variable name; their values never appear in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderRef {
    pub name: String,
    pub kind: ChatKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_env: Option<String>,
    /// Only for `mock`.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceKind {
    /// In-process, deterministic.
    Reference,
    #[serde(alias = "http")]
    External,
}

/// An auxiliary service (emotion, speech, transcription).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceRef {
    pub kind: ServiceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_env: Option<String>,
}

impl ServiceRef {
    pub fn reference() -> Self {
        Self { kind: ServiceKind::Reference, endpoint_env: None, key_env: None }
    }

    fn endpoint(&self, what: &str) -> Result<(String, Option<String>), GatewayError> {
        let var = self
            .endpoint_env
            .as_deref()
            .ok_or_else(|| GatewayError::Config(format!("{what}: external provider needs endpoint_env")))?;
        let endpoint = std::env::var(var).map_err(|_| GatewayError::Config(format!("{what}: environment variable {var} is not set")))?;
        let key = match self.key_env.as_deref() {
            Some(k) => Some(std::env::var(k).map_err(|_| GatewayError::Config(format!("{what}: environment variable {k} is not set")))?),
            None => None,
        };
        Ok((endpoint, key))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub output_dir: PathBuf,
    /// Frame snapshots per simulated second.
    pub frame_rate: u32,
    /// Keep `.wwr` records on disk after sealing.
    pub retain_sealed: bool,
    pub rounds_2_3_repeats: u32,
    pub tank: TankConfig,
    pub emotion_provider: ServiceRef,
    pub tts_provider: ServiceRef,
    pub asr_provider: ServiceRef,
    pub providers: Vec<ProviderRef>,
    pub agents: Vec<AgentConfig>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("ww-out"),
            frame_rate: 10,
            retain_sealed: true,
            rounds_2_3_repeats: 1,
            tank: TankConfig::default(),
            emotion_provider: ServiceRef::reference(),
            tts_provider: ServiceRef::reference(),
            asr_provider: ServiceRef::reference(),
            providers: vec![ProviderRef { name: "mock".into(), kind: ChatKind::Mock, endpoint_env: None, key_env: None, seed: 0 }],
            agents: AgentConfig::default_roster("mock"),
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let config: Self = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, GatewayError> {
        toml::to_string(self).map_err(|e| GatewayError::Config(e.to_string()))
    }

    /// Structural checks that need no network or environment.
    pub fn validate(&self) -> Result<(), GatewayError> {
        self.tank.validate()?;
        if self.frame_rate as f64 > 1.0 / self.tank.dt() {
            return Err(GatewayError::Config(format!("frame_rate {} exceeds the simulation rate", self.frame_rate)));
        }
        if self.rounds_2_3_repeats == 0 {
            return Err(GatewayError::Config("rounds_2_3_repeats must be at least 1".into()));
        }
        let mut names: Vec<&str> = self.providers.iter().map(|p| p.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(GatewayError::Config("duplicate provider name".into()));
        }
        for p in &self.providers {
            if p.kind != ChatKind::Mock && p.endpoint_env.is_none() {
                return Err(GatewayError::Config(format!("provider {:?} needs endpoint_env", p.name)));
            }
        }
        // Agent-id and provider-name checks live in the dialogue; run them
        // against a registry of placeholders.
        let mut registry = ProviderRegistry::new();
        for p in &self.providers {
            registry.register(p.name.clone(), Arc::new(MockChatProvider::new(0)));
        }
        Dialogue::new(self.agents.clone(), registry, self.dialogue_options())?;
        Ok(())
    }

    pub fn dialogue_options(&self) -> DialogueOptions {
        DialogueOptions { rounds_2_3_repeats: self.rounds_2_3_repeats, ..Default::default() }
    }

    /// Replaces every external service with its offline counterpart, keeping
    /// agent prompts. Chat agents all share one seeded mock.
    pub fn into_mock(mut self, seed: u64) -> Self {
        self.providers = vec![ProviderRef { name: "mock".into(), kind: ChatKind::Mock, endpoint_env: None, key_env: None, seed }];
        for a in &mut self.agents {
            a.provider_name = "mock".into();
        }
        self.emotion_provider = ServiceRef::reference();
        self.tts_provider = ServiceRef::reference();
        self.asr_provider = ServiceRef::reference();
        self
    }

    pub fn registry(&self) -> Result<ProviderRegistry, GatewayError> {
        let mut registry = ProviderRegistry::new();
        for p in &self.providers {
            let provider: Arc<dyn ChatProvider> = match p.kind {
                ChatKind::Mock => Arc::new(MockChatProvider::new(p.seed)),
                ChatKind::HttpOpenaiStyle | ChatKind::HttpAnthropicStyle => {
                    let style = if p.kind == ChatKind::HttpOpenaiStyle { HttpStyle::OpenAi } else { HttpStyle::Anthropic };
                    let endpoint_var = p.endpoint_env.as_deref().expect("validated");
                    Arc::new(HttpChatProvider::from_env(style, endpoint_var, p.key_env.as_deref())?)
                }
            };
            registry.register(p.name.clone(), provider);
        }
        Ok(registry)
    }

    pub fn dialogue(&self) -> Result<Dialogue, GatewayError> {
        Ok(Dialogue::new(self.agents.clone(), self.registry()?, self.dialogue_options())?)
    }

    pub fn tts(&self) -> Result<Arc<dyn TtsProvider>, GatewayError> {
        Ok(match self.tts_provider.kind {
            ServiceKind::Reference => Arc::new(ReferenceTts),
            ServiceKind::External => {
                let (endpoint, key) = self.tts_provider.endpoint("tts_provider")?;
                Arc::new(HttpTts::new(endpoint, key)?)
            }
        })
    }

    pub fn emotion(&self) -> Result<Arc<dyn EmotionProvider>, GatewayError> {
        Ok(match self.emotion_provider.kind {
            ServiceKind::Reference => Arc::new(ReferenceEmotion),
            ServiceKind::External => {
                let (endpoint, key) = self.emotion_provider.endpoint("emotion_provider")?;
                Arc::new(HttpEmotion::new(endpoint, key)?)
            }
        })
    }

    pub fn asr(&self) -> Result<Arc<dyn AsrProvider>, GatewayError> {
        Ok(match self.asr_provider.kind {
            ServiceKind::Reference => Arc::new(SidecarAsr),
            ServiceKind::External => {
                let (endpoint, key) = self.asr_provider.endpoint("asr_provider")?;
                Arc::new(HttpAsr::new(endpoint, key)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let config = EngineConfig::default();
        config.validate().unwrap();
        let text = config.to_toml().unwrap();
        let back = EngineConfig::from_toml(&text).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(EngineConfig::from_toml("").unwrap(), EngineConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(EngineConfig::from_toml("colour = 3").is_err());
        assert!(EngineConfig::from_toml("[tank]\nlength = 2.0").is_err());
        assert!(EngineConfig::from_toml("[emotion_provider]\nkind = \"reference\"\nurl = \"x\"").is_err());
    }

    #[test]
    fn sub_configs_validated() {
        assert!(EngineConfig::from_toml("[tank]\ngrid_nx = 40").is_err(), "aspect mismatch");
        assert!(EngineConfig::from_toml("rounds_2_3_repeats = 0").is_err());
        assert!(EngineConfig::from_toml("frame_rate = 100000").is_err());
        let one_agent = r#"
            [[agents]]
            agent_id = 0
            provider_name = "mock"
            system_prompt = "p"
        "#;
        assert!(EngineConfig::from_toml(one_agent).is_err());
    }

    #[test]
    fn http_providers_need_endpoints() {
        let mut config = EngineConfig::default();
        config.providers.push(ProviderRef {
            name: "remote".into(),
            kind: ChatKind::HttpAnthropicStyle,
            endpoint_env: None,
            key_env: None,
            seed: 0,
        });
        assert!(config.validate().is_err());
        config.providers[1].endpoint_env = Some("WW_TEST_UNSET_ENDPOINT".into());
        config.validate().unwrap();
        assert!(config.registry().is_err(), "unset variable is reported when building");
        let text = config.to_toml().unwrap();
        assert!(text.contains("http-anthropic-style"));
        assert_eq!(EngineConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn mock_override_is_offline() {
        let mut config = EngineConfig::default();
        config.providers = vec![ProviderRef {
            name: "remote".into(),
            kind: ChatKind::HttpOpenaiStyle,
            endpoint_env: Some("WW_TEST_UNSET".into()),
            key_env: None,
            seed: 0,
        }];
        for a in &mut config.agents {
            a.provider_name = "remote".into();
        }
        config.tts_provider = ServiceRef { kind: ServiceKind::External, endpoint_env: Some("WW_TEST_UNSET".into()), key_env: None };
        let mock = config.into_mock(1);
        mock.validate().unwrap();
        mock.dialogue().unwrap();
        mock.tts().unwrap();
    }
}
