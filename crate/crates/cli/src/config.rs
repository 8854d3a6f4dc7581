//! Backend configuration file and construction of the model and cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use osst::backend::{
    BackendDescriptor, LanguageModel, NgramModel, NgramOptions, RemoteModel, UniformModel,
};
use osst::datasets::load_documents_jsonl;
use osst::neutralizer::DEFAULT_TEMPLATE_VERSION;
use osst::store::Store;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    OfflineNgram,
    RemoteHttp,
    Uniform,
}

/// Flat key/value backend configuration, usually read from a TOML file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub backend: BackendChoice,
    pub model_id: Option<String>,
    pub endpoint: Option<String>,
    #[serde(default = "default_order")]
    pub order: usize,
    /// Documents (JSONL) the offline model is trained on; defaults to the command's inputs.
    pub train_corpus: Option<PathBuf>,
    #[serde(default)]
    pub in_context: bool,
    #[serde(default = "default_context_weight")]
    pub context_weight: u32,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    pub concurrency: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_template")]
    pub template_version: String,
    /// Extra request fields forwarded to a remote server.
    #[serde(default)]
    pub request_params: BTreeMap<String, serde_json::Value>,
}

fn default_order() -> usize {
    3
}

fn default_context_weight() -> u32 {
    1
}

fn default_vocab_size() -> usize {
    256
}

fn default_template() -> String {
    DEFAULT_TEMPLATE_VERSION.to_string()
}

impl Default for BackendConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl BackendConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading backend config {}", path.display()))?;
        let mut config: BackendConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.train_corpus, &mut config.cache_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Builds the model. `fallback_training` supplies the offline training
    /// texts when no `train_corpus` is configured.
    pub fn build_backend(&self, fallback_training: &[String]) -> anyhow::Result<Box<dyn LanguageModel>> {
        Ok(match self.backend {
            BackendChoice::OfflineNgram => {
                let texts: Vec<String> = match &self.train_corpus {
                    Some(path) => load_documents_jsonl(path)?.into_iter().map(|d| d.text).collect(),
                    None => fallback_training.to_vec(),
                };
                let options = if self.in_context {
                    NgramOptions::in_context(self.order, self.context_weight)
                } else {
                    NgramOptions::static_model(self.order)
                };
                Box::new(NgramModel::train(&texts, options)?)
            }
            BackendChoice::Uniform => Box::new(UniformModel::new(self.vocab_size)?),
            BackendChoice::RemoteHttp => {
                let (Some(model_id), Some(endpoint)) = (&self.model_id, &self.endpoint) else {
                    bail!(UsageError("remote_http backend needs model_id and endpoint".into()));
                };
                let mut descriptor = BackendDescriptor::remote(model_id, endpoint);
                for (k, v) in &self.request_params {
                    descriptor = descriptor.with_param(k, v.clone());
                }
                if let Some(n) = self.concurrency {
                    descriptor = descriptor.with_param("concurrency", n.into());
                }
                Box::new(RemoteModel::new(descriptor)?)
            }
        })
    }

    pub fn open_store(&self, no_cache: bool) -> anyhow::Result<Store> {
        Ok(match (&self.cache_dir, no_cache) {
            (Some(dir), false) => Store::on_disk(dir)?,
            _ => Store::memory(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = BackendConfig::default();
        assert_eq!(c.backend, BackendChoice::OfflineNgram);
        assert_eq!(c.order, 3);
        assert_eq!(c.template_version, "v1");
        assert!(!c.in_context);
    }

    #[test]
    fn parses_flat_keys() {
        let c: BackendConfig = toml::from_str(
            "backend = \"remote_http\"\nmodel_id = \"m\"\nendpoint = \"http://x/v1\"\nconcurrency = 2\n\n[request_params]\ntemperature = 0.0\n",
        )
        .unwrap();
        assert_eq!(c.backend, BackendChoice::RemoteHttp);
        assert_eq!(c.concurrency, Some(2));
        let model = c.build_backend(&[]).unwrap();
        assert_eq!(model.concurrency_limit(), 2);
        assert!(toml::from_str::<BackendConfig>("colour = 1").is_err());
    }

    #[test]
    fn remote_requires_endpoint() {
        let c: BackendConfig = toml::from_str("backend = \"remote_http\"\nmodel_id = \"m\"").unwrap();
        assert!(c.build_backend(&[]).is_err());
    }
}
