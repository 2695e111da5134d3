//! Layered `key=value` configuration: built-in defaults, then an optional
//! config file, then `--set` overrides, then dedicated command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use telemb_core::corpus::ChunkConfig;
use telemb_core::evaluation::ProjectionMethod;
use telemb_core::io_util::parse_kv;
use telemb_core::trainer::TrainConfig;
use telemb_core::Error;

/// Every recognised key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    // corpus
    ("min_chars", "200"),
    ("max_chars", "2000"),
    ("art_line_ratio", "0.7"),
    ("dedup_jaccard", "0.9"),
    ("shingle_len", "5"),
    // dataset
    ("negatives_per_query", "5"),
    ("querygen", "stub"),
    ("llm_endpoint", "http://127.0.0.1:8080/generate"),
    ("llm_model", "default"),
    ("llm_api_key_env", "TELEMB_LLM_API_KEY"),
    ("llm_timeout_secs", "30"),
    ("llm_max_retries", "2"),
    ("llm_max_in_flight", "4"),
    // tokenizer
    ("vocab_size", "4096"),
    // encoder
    ("d", "64"),
    ("h", "128"),
    // training
    ("margin_alpha", "0.2"),
    ("learning_rate", "0.001"),
    ("epochs", "10"),
    ("batch_size", "32"),
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.999"),
    ("adam_eps", "1e-8"),
    // evaluation / analysis
    ("k", "5"),
    ("bins", "20"),
    ("projection_method", "tsne"),
    ("projection_triplets", "100"),
    ("perplexity", "30"),
    ("tsne_iterations", "1000"),
    // index
    ("lambda", "0.5"),
];

fn canonical(key: &str) -> &str {
    match key {
        "alpha" => "margin_alpha",
        "lr" => "learning_rate",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let key = canonical(key.trim());
        if !self.values.contains_key(key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), Error> {
        let text = std::fs::read_to_string(path)?;
        for (k, v) in parse_kv(&text).map_err(Error::Config)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, Error> {
        let raw = self.get(key);
        raw.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
    }

    /// The resolved configuration, recorded verbatim in manifests.
    pub fn map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn seed(&self) -> Result<u64, Error> {
        self.parse("seed")
    }

    pub fn chunk(&self) -> Result<ChunkConfig, Error> {
        let cfg = ChunkConfig {
            min_chars: self.parse("min_chars")?,
            max_chars: self.parse("max_chars")?,
            art_line_ratio: self.parse("art_line_ratio")?,
            dedup_jaccard: self.parse("dedup_jaccard")?,
            shingle_len: self.parse("shingle_len")?,
            ..ChunkConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Training config; its seed is left for the caller to derive.
    pub fn train(&self) -> Result<TrainConfig, Error> {
        let mut cfg = TrainConfig::default();
        for key in [
            "margin_alpha",
            "learning_rate",
            "epochs",
            "batch_size",
            "adam_beta1",
            "adam_beta2",
            "adam_eps",
        ] {
            cfg.set(key, self.get(key))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn projection_method(&self) -> Result<ProjectionMethod, Error> {
        match self.get("projection_method") {
            "tsne" => Ok(ProjectionMethod::Tsne),
            "pca" => Ok(ProjectionMethod::Pca),
            other => Err(Error::Config(format!("projection_method must be tsne or pca, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_layers_override_and_aliases_resolve() {
        let mut s = Settings::default();
        s.set("lr", "0.01").unwrap();
        s.set("epochs", "3").unwrap();
        let t = s.train().unwrap();
        assert_eq!(t.learning_rate, 0.01);
        assert_eq!(t.epochs, 3);
        assert_eq!(s.get("learning_rate"), "0.01");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = Settings::default().set("nope", "1").unwrap_err();
        assert_eq!(err.name(), "ConfigError");
    }

    #[test]
    fn bad_value_surfaces_as_config_error() {
        let mut s = Settings::default();
        s.set("min_chars", "lots").unwrap();
        assert_eq!(s.chunk().unwrap_err().name(), "ConfigError");
    }

    #[test]
    fn config_file_uses_comments_and_aliases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "# training\nalpha = 0.3\nk=10\n").unwrap();
        let mut s = Settings::default();
        s.load_file(&p).unwrap();
        assert_eq!(s.train().unwrap().margin_alpha, 0.3);
        assert_eq!(s.parse::<usize>("k").unwrap(), 10);
    }
}
