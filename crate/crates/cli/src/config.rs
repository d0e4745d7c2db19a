//! Run configuration, resolved key by key from four layers: built-in
//! defaults, a TOML file, `FACTDEBATE_*` environment variables and flags.
//! Later layers win.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use factdebate::gateway::{BackendDescriptor, BackendKind, ModelParams};
use factdebate::{DebateConfig, TransitionPolicy};
use serde::Serialize;

pub const ENV_PREFIX: &str = "FACTDEBATE_";

/// Every configurable key with its default, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("backend", "http"),
    ("script", ""),
    ("fixtures", ""),
    ("endpoint", "https://api.openai.com/v1/chat/completions"),
    ("api_key", ""),
    ("timeout_secs", "60"),
    ("model", "gpt-3.5-turbo"),
    ("temperature", "0"),
    ("max_tokens", "1024"),
    ("call_budget", "500"),
    ("rate_limit_rpm", "0"),
    ("cache_dir", ""),
    ("policy", "true-to-skeptic"),
    ("min_rounds", "2"),
    ("max_rounds", "5"),
    ("evidence_k", "10"),
    ("opinion_retries", "2"),
    ("search", "none"),
    ("search_fixtures", ""),
    ("search_endpoint", "https://www.googleapis.com/customsearch/v1"),
    ("search_api_key", ""),
    ("search_cx", ""),
    ("parallel", "1"),
    ("seed", "0"),
];

pub type Layer = BTreeMap<String, String>;

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

pub fn defaults() -> Layer {
    KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// A flat TOML table. Unknown keys are rejected so typos surface.
pub fn file_layer(text: &str) -> Result<Layer> {
    let table: toml::Table = text.parse().context("config file is not valid TOML")?;
    let mut layer = Layer::new();
    for (key, value) in table {
        if !known(&key) {
            bail!("unknown config key `{key}`");
        }
        let value = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => bail!("config key `{key}` must be a scalar, got {other}"),
        };
        layer.insert(key, value);
    }
    Ok(layer)
}

/// `FACTDEBATE_MIN_ROUNDS=3` sets `min_rounds`. Other variables are ignored.
pub fn env_layer<I: IntoIterator<Item = (String, String)>>(vars: I) -> Layer {
    vars.into_iter()
        .filter_map(|(name, value)| {
            let key = name.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            known(&key).then_some((key, value))
        })
        .collect()
}

pub fn merge(layers: &[&Layer]) -> Layer {
    let mut out = Layer::new();
    for layer in layers {
        out.extend(layer.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    out
}

/// Where the config file comes from: `--config`, else `FACTDEBATE_CONFIG`.
pub fn config_path(flag: Option<&Path>, env: &BTreeMap<String, String>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| env.get("FACTDEBATE_CONFIG").map(PathBuf::from))
}

/// Resolves every layer; `env` is injected so tests need not touch the process environment.
pub fn resolve(config_file: Option<&Path>, env: &BTreeMap<String, String>, flags: &Layer) -> Result<RunConfig> {
    let file = match config_path(config_file, env) {
        Some(path) => {
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read config {}", path.display()))?;
            file_layer(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => Layer::new(),
    };
    let env = env_layer(env.iter().map(|(k, v)| (k.clone(), v.clone())));
    RunConfig::from_layer(&merge(&[&defaults(), &file, &env, flags]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchChoice {
    None,
    Fixture,
    Web,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub backend: BackendDescriptor,
    pub model: ModelParams,
    /// `None` means unlimited.
    pub call_budget: Option<usize>,
    pub rate_limit_rpm: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub debate: DebateConfig,
    pub opinion_retries: u32,
    pub search: SearchChoice,
    #[serde(skip)]
    pub search_config: BTreeMap<String, String>,
    pub parallel: usize,
    pub seed: u64,
}

fn parse<T: FromStr>(layer: &Layer, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = layer.get(key).map(String::as_str).unwrap_or_default();
    raw.trim()
        .parse()
        .map_err(|e| anyhow!("invalid value {raw:?} for `{key}`: {e}"))
}

fn optional(layer: &Layer, key: &str) -> Option<String> {
    layer.get(key).filter(|v| !v.is_empty()).cloned()
}

impl RunConfig {
    pub fn from_layer(layer: &Layer) -> Result<Self> {
        let kind = match layer.get("backend").map(String::as_str) {
            Some("http") => BackendKind::HttpProvider,
            Some("scripted") => BackendKind::Scripted,
            Some("replay") => BackendKind::Replay,
            other => bail!(
                "invalid value {:?} for `backend`: expected http, scripted or replay",
                other.unwrap_or("")
            ),
        };
        let keys: &[&str] = match kind {
            BackendKind::HttpProvider => &["endpoint", "api_key", "timeout_secs"],
            BackendKind::Scripted => &["script"],
            BackendKind::Replay => &["fixtures"],
        };
        let backend = BackendDescriptor {
            kind,
            config: keys
                .iter()
                .filter_map(|k| optional(layer, k).map(|v| (k.to_string(), v)))
                .collect(),
        };
        let model = ModelParams {
            model_id: parse(layer, "model")?,
            temperature: parse(layer, "temperature")?,
            max_tokens: parse(layer, "max_tokens")?,
        };
        let policy: TransitionPolicy = parse(layer, "policy")?;
        let debate = DebateConfig {
            policy,
            min_rounds: parse(layer, "min_rounds")?,
            max_rounds: parse(layer, "max_rounds")?,
            evidence_k: parse(layer, "evidence_k")?,
        };
        debate.validate()?;
        let search = match layer.get("search").map(String::as_str) {
            Some("none") => SearchChoice::None,
            Some("fixture") => SearchChoice::Fixture,
            Some("web") => SearchChoice::Web,
            other => bail!(
                "invalid value {:?} for `search`: expected none, fixture or web",
                other.unwrap_or("")
            ),
        };
        let search_config = ["search_fixtures", "search_endpoint", "search_api_key", "search_cx"]
            .iter()
            .filter_map(|k| optional(layer, k).map(|v| (k.to_string(), v)))
            .collect();
        let call_budget: usize = parse(layer, "call_budget")?;
        let rpm: u32 = parse(layer, "rate_limit_rpm")?;
        let parallel: usize = parse(layer, "parallel")?;
        if parallel == 0 {
            bail!("`parallel` must be at least 1");
        }
        Ok(Self {
            backend,
            model,
            call_budget: (call_budget > 0).then_some(call_budget),
            rate_limit_rpm: (rpm > 0).then_some(rpm),
            cache_dir: optional(layer, "cache_dir").map(PathBuf::from),
            debate,
            opinion_retries: parse(layer, "opinion_retries")?,
            search,
            search_config,
            parallel,
            seed: parse(layer, "seed")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A value for `key` that parses and differs per layer.
    fn sample(key: &str, layer: usize) -> String {
        match key {
            "backend" => ["http", "scripted", "replay", "http"][layer].into(),
            "policy" => ["always-trust", "always-skeptic", "true-to-trust", "true-to-skeptic"][layer].into(),
            "search" => ["fixture", "web", "none", "fixture"][layer].into(),
            "temperature" => format!("0.{}", layer + 1),
            "min_rounds" => (layer + 1).to_string(),
            "max_rounds" | "evidence_k" | "parallel" | "max_tokens" | "call_budget" | "rate_limit_rpm"
            | "timeout_secs" | "opinion_retries" | "seed" => (layer + 6).to_string(),
            _ => format!("{key}-layer{layer}"),
        }
    }

    /// Reads back the effective value of `key` from the resolved layer.
    fn effective(key: &str, file: &Layer, env: &BTreeMap<String, String>, flags: &Layer) -> String {
        let env = env_layer(env.iter().map(|(k, v)| (k.clone(), v.clone())));
        merge(&[&defaults(), file, &env, flags])[key].clone()
    }

    #[test]
    fn precedence_holds_for_every_key() {
        for (key, default) in KEYS {
            let toml_line = format!("{key} = {:?}\n", sample(key, 0));
            let file = file_layer(&toml_line).unwrap();
            let env = BTreeMap::from([(format!("{ENV_PREFIX}{}", key.to_ascii_uppercase()), sample(key, 1))]);
            let flags = Layer::from([(key.to_string(), sample(key, 2))]);
            let none = BTreeMap::new();
            assert_eq!(
                effective(key, &Layer::new(), &none, &Layer::new()),
                *default,
                "{key}: default"
            );
            assert_eq!(
                effective(key, &file, &none, &Layer::new()),
                sample(key, 0),
                "{key}: file over default"
            );
            assert_eq!(
                effective(key, &file, &env, &Layer::new()),
                sample(key, 1),
                "{key}: env over file"
            );
            assert_eq!(
                effective(key, &file, &env, &flags),
                sample(key, 2),
                "{key}: flag over env"
            );
        }
    }

    #[test]
    fn typed_resolution_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("factdebate.toml");
        fs::write(
            &path,
            "backend = \"scripted\"\nscript = \"s.json\"\nmin_rounds = 1\npolicy = \"always-trust\"\n",
        )
        .unwrap();
        let env = BTreeMap::from([("FACTDEBATE_MIN_ROUNDS".to_string(), "3".to_string())]);
        let flags = Layer::from([("policy".to_string(), "true-to-trust".to_string())]);
        let cfg = resolve(Some(&path), &env, &flags).unwrap();
        assert_eq!(cfg.backend.kind, BackendKind::Scripted);
        assert_eq!(cfg.backend.config["script"], "s.json");
        assert_eq!(cfg.debate.min_rounds, 3);
        assert_eq!(cfg.debate.policy, TransitionPolicy::TrueToTrust);
        assert_eq!(cfg.call_budget, Some(500));

        let env = BTreeMap::from([("FACTDEBATE_CONFIG".to_string(), path.display().to_string())]);
        assert_eq!(
            resolve(None, &env, &Layer::new()).unwrap().debate.policy,
            TransitionPolicy::AlwaysTrust
        );
    }

    #[test]
    fn bad_values_name_their_key() {
        let flags = Layer::from([("min_rounds".to_string(), "many".to_string())]);
        let err = resolve(None, &BTreeMap::new(), &flags).unwrap_err().to_string();
        assert!(err.contains("min_rounds"), "{err}");
        assert!(file_layer("mystery = 1").unwrap_err().to_string().contains("mystery"));
        let flags = Layer::from([("min_rounds".to_string(), "9".to_string())]);
        assert!(resolve(None, &BTreeMap::new(), &flags).is_err());
    }
}
