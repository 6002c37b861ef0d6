//! Run configuration and construction of the runtime pieces it describes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::generation::{
    Backoff, BackoffConfig, Generator, GeneratorBackend, OutputFormat, PromptRequest, RemoteChatBackend,
    RemoteChatConfig, ScriptedGenerator,
};
use crate::metrics::{MetricDef, MetricRegistry};
use crate::proof_model::TheoremEntry;
use crate::retrieval::{Embedder, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig, RetrievalCounts, Retriever, HASHING_DIM};
use crate::sampling::{SamplerConfig, SamplerContext};
use crate::verifier::{MockBackend, ReplBackend, ReplConfig, ResultCache, Verifier, VerifierBackend};

/// Environment variable naming the verifier executable (a command line).
pub const REPL_ENV: &str = "PROOFOPT_REPL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "hashing_dim")]
        dim: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn hashing_dim() -> usize {
    HASHING_DIM
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashing { dim: HASHING_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Root of the stores written by `index`. Without it nothing is
    /// retrieved.
    pub store_dir: Option<PathBuf>,
    pub syntax_docs: usize,
    pub library_docs: usize,
    pub lambda: f64,
    pub embedder: EmbedderConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let counts = RetrievalCounts::default();
        RetrievalConfig {
            store_dir: None,
            syntax_docs: counts.syntax_docs,
            library_docs: counts.library_docs,
            lambda: crate::retrieval::DEFAULT_LAMBDA,
            embedder: EmbedderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub backend: GeneratorKind,
    /// Replay file for the scripted backend.
    pub script: Option<PathBuf>,
    pub remote: RemoteChatConfig,
    pub backoff: BackoffConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierKind {
    #[default]
    Repl,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    pub backend: VerifierKind,
    /// REPL command line; falls back to the `PROOFOPT_REPL` environment
    /// variable.
    pub command: Option<String>,
    /// Fixture file for the mock backend.
    pub fixtures: Option<PathBuf>,
    pub pool_size: usize,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            backend: VerifierKind::Repl,
            command: None,
            fixtures: None,
            pool_size: 1,
            timeout_secs: 60,
            cache_dir: None,
        }
    }
}

/// Everything one optimization or benchmark run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub metric: String,
    /// Extra metric definitions (`[[metric]]` tables).
    pub metrics_file: Option<PathBuf>,
    pub output_format: OutputFormat,
    /// Chain-of-States annotation of the current proof.
    pub cos: bool,
    /// Number of retrieved optimization examples.
    pub examples: usize,
    /// Retrieve syntax and library documentation.
    pub rag: bool,
    pub retrieval: RetrievalConfig,
    pub sampler: SamplerConfig,
    pub generator: GeneratorConfig,
    pub verifier: VerifierConfig,
    pub seed: u64,
    /// Theorems optimized at once during a benchmark.
    pub concurrency: usize,
    /// Run best-of-n branches on separate threads.
    pub parallel_samples: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metric: "length".into(),
            metrics_file: None,
            output_format: OutputFormat::Flat,
            cos: true,
            examples: 10,
            rag: true,
            retrieval: RetrievalConfig::default(),
            sampler: SamplerConfig::default(),
            generator: GeneratorConfig::default(),
            verifier: VerifierConfig::default(),
            seed: 0,
            concurrency: 4,
            parallel_samples: true,
        }
    }
}

/// Recursively merges `overlay` into `base`; tables merge, other values
/// replace. A table whose `kind` changes is replaced as a whole.
pub fn merge_toml(base: &mut toml::Value, overlay: &toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o))
            if o.get("kind").is_none() || o.get("kind") == b.get("kind") =>
        {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge_toml(existing, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        };
        fix(&mut self.metrics_file);
        fix(&mut self.retrieval.store_dir);
        fix(&mut self.generator.script);
        fix(&mut self.verifier.fixtures);
        fix(&mut self.verifier.cache_dir);
    }

    /// This config with `overrides` (a TOML table) merged on top.
    pub fn with_overrides(&self, overrides: &toml::Value) -> Result<Self, ConfigError> {
        let mut base = toml::Value::try_from(self).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        merge_toml(&mut base, overrides);
        let cfg: RunConfig = base.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sampler
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid("concurrency must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.retrieval.lambda) {
            return Err(ConfigError::Invalid("retrieval.lambda must lie in [0, 1]".into()));
        }
        if self.verifier.pool_size == 0 {
            return Err(ConfigError::Invalid("verifier.pool_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn counts(&self) -> RetrievalCounts {
        RetrievalCounts {
            examples: self.examples,
            syntax_docs: if self.rag { self.retrieval.syntax_docs } else { 0 },
            library_docs: if self.rag { self.retrieval.library_docs } else { 0 },
        }
    }

    pub fn metric_def(&self) -> Result<MetricDef, ConfigError> {
        let registry = match &self.metrics_file {
            Some(p) => MetricRegistry::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => MetricRegistry::builtin(),
        };
        registry
            .get(&self.metric)
            .cloned()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn build_verifier(&self) -> Result<Verifier, ConfigError> {
        let backend: Arc<dyn VerifierBackend> = match self.verifier.backend {
            VerifierKind::Mock => match &self.verifier.fixtures {
                Some(p) => Arc::new(MockBackend::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?),
                None => Arc::new(MockBackend::default()),
            },
            VerifierKind::Repl => {
                let line = match &self.verifier.command {
                    Some(c) => c.clone(),
                    None => std::env::var(REPL_ENV).map_err(|_| {
                        ConfigError::Invalid(format!("no verifier command: set verifier.command or {REPL_ENV}"))
                    })?,
                };
                let mut rc = ReplConfig::from_command_line(&line);
                rc.pool_size = self.verifier.pool_size;
                rc.timeout = Duration::from_secs(self.verifier.timeout_secs);
                Arc::new(ReplBackend::new(rc))
            }
        };
        let cache = match &self.verifier.cache_dir {
            Some(dir) => ResultCache::on_disk(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => ResultCache::in_memory(),
        };
        Ok(Verifier::with_cache(backend, cache))
    }

    pub fn build_generator_backend(&self) -> Result<Arc<dyn GeneratorBackend>, ConfigError> {
        Ok(match self.generator.backend {
            GeneratorKind::Scripted => {
                let path = self
                    .generator
                    .script
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("scripted generator needs generator.script".into()))?;
                Arc::new(ScriptedGenerator::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
            GeneratorKind::Remote => Arc::new(
                RemoteChatBackend::new(self.generator.remote.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
        })
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match &self.retrieval.embedder {
            EmbedderConfig::Hashing { dim } => Arc::new(HashingEmbedder::new(*dim)),
            EmbedderConfig::Remote(rc) => {
                Arc::new(RemoteEmbedder::new(rc.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
        })
    }

    /// The retriever, or `None` when no store directory is configured or
    /// nothing is to be retrieved.
    pub fn build_retriever(&self) -> Result<Option<Arc<Retriever>>, ConfigError> {
        let counts = self.counts();
        if counts == RetrievalCounts::zero() {
            return Ok(None);
        }
        let Some(dir) = &self.retrieval.store_dir else {
            return Ok(None);
        };
        let retriever = Retriever::open(dir, self.build_embedder()?, self.retrieval.lambda)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Some(Arc::new(retriever)))
    }

    /// Prompt request for `entry` under this config.
    pub fn request(&self, metric: &MetricDef, entry: &TheoremEntry) -> PromptRequest {
        let mut r = PromptRequest::new(metric.clone(), entry.clone());
        r.cos_enabled = self.cos;
        r.output_format = self.output_format;
        r
    }
}

/// Long-lived objects built from a [`RunConfig`], shared across theorems.
#[derive(Clone)]
pub struct Runtime {
    pub config: RunConfig,
    pub metric: MetricDef,
    pub generator: Generator,
    pub retriever: Option<Arc<Retriever>>,
}

impl Runtime {
    pub fn new(
        config: RunConfig,
        backend: Arc<dyn GeneratorBackend>,
        verifier: Arc<Verifier>,
        retriever: Option<Arc<Retriever>>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let metric = config.metric_def()?;
        let backoff = Backoff::new(config.generator.backoff, config.seed);
        Ok(Runtime {
            generator: Generator::new(backend, verifier, backoff),
            metric,
            retriever,
            config,
        })
    }

    /// Builds every piece from the config alone.
    pub fn from_config(config: RunConfig) -> Result<Self, ConfigError> {
        let backend = config.build_generator_backend()?;
        let verifier = Arc::new(config.build_verifier()?);
        let retriever = config.build_retriever()?;
        Self::new(config, backend, verifier, retriever)
    }

    /// Same backends, different run settings. The retriever is reopened
    /// when the retrieval settings change.
    pub fn reconfigured(&self, config: RunConfig) -> Result<Self, ConfigError> {
        let retriever = match &self.retriever {
            Some(r) if config.retrieval == self.config.retrieval => Some(r.clone()),
            _ => config.build_retriever()?,
        };
        Self::new(config, self.generator.backend.clone(), self.generator.verifier.clone(), retriever)
    }

    pub fn sampler_context(&self, label: &str) -> SamplerContext {
        let mut ctx = SamplerContext::new(self.generator.clone())
            .parallel(self.config.parallel_samples)
            .seed(self.config.seed);
        ctx.label = label.to_string();
        if let Some(r) = &self.retriever {
            ctx = ctx.with_retrieval(r.clone(), self.config.counts());
        }
        ctx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_best_configuration() {
        let c = RunConfig::default();
        assert_eq!(c.output_format, OutputFormat::Flat);
        assert!(c.cos && c.rag);
        assert_eq!(c.examples, 10);
        assert_eq!(c.sampler.calls(), 15);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn overrides_merge() {
        let c = RunConfig::default();
        let o: toml::Value = toml::from_str("examples = 3\n[sampler]\nkind = \"best_of_n\"\nn = 7\n").unwrap();
        let d = c.with_overrides(&o).unwrap();
        assert_eq!(d.examples, 3);
        assert_eq!(d.sampler, SamplerConfig::best_of_n(7, SamplerConfig::Single));
        assert_eq!(d.metric, "length");
        let bad: toml::Value = toml::from_str("concurrency = 0").unwrap();
        assert!(c.with_overrides(&bad).is_err());
    }

    #[test]
    fn overrides_merge_into_nested_sampler() {
        let o: toml::Value = toml::from_str("[sampler.inner]\nn = 2\n").unwrap();
        let d = RunConfig::default().with_overrides(&o).unwrap();
        assert_eq!(d.sampler.calls(), 10);
    }

    #[test]
    fn counts_respect_rag_flag() {
        let mut c = RunConfig::default();
        c.rag = false;
        assert_eq!(
            c.counts(),
            RetrievalCounts {
                examples: 10,
                syntax_docs: 0,
                library_docs: 0
            }
        );
        assert!(c.build_retriever().unwrap().is_none());
    }
}
