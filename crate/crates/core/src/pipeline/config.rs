use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{PipelineError, Result};
use crate::hash::sha256_hex;

/// Photorealism-enhancement prompt sent to the diffusion backend by default.
pub const DEFAULT_ENHANCE_PROMPT: &str = include_str!("../../resources/enhance_prompt_v1.txt");
pub const DEFAULT_PROMPT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    DiffusionEnhance,
    Im2imTranslate,
}

impl PhaseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseKind::DiffusionEnhance => "diffusion_enhance",
            PhaseKind::Im2imTranslate => "im2im_translate",
        }
    }
}

/// Real-world dataset an im2im backend translates towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDomain {
    Kitti,
    Cs,
}

impl TargetDomain {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetDomain::Kitti => "kitti",
            TargetDomain::Cs => "cs",
        }
    }
}

impl fmt::Display for TargetDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown target domain {0:?}, expected \"kitti\" or \"cs\"")]
pub struct UnknownDomain(pub String);

impl FromStr for TargetDomain {
    type Err = UnknownDomain;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kitti" => Ok(TargetDomain::Kitti),
            "cs" => Ok(TargetDomain::Cs),
            other => Err(UnknownDomain(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhaseParams {
    Diffusion { prompt: String, seed: u64 },
    Im2im { target_domain: TargetDomain },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSpec {
    pub endpoint: String,
    pub params: PhaseParams,
}

impl PhaseSpec {
    pub fn diffusion(endpoint: impl Into<String>, prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            endpoint: endpoint.into(),
            params: PhaseParams::Diffusion {
                prompt: prompt.into(),
                seed,
            },
        }
    }

    pub fn im2im(endpoint: impl Into<String>, target_domain: TargetDomain) -> Self {
        Self {
            endpoint: endpoint.into(),
            params: PhaseParams::Im2im { target_domain },
        }
    }

    pub fn kind(&self) -> PhaseKind {
        match self.params {
            PhaseParams::Diffusion { .. } => PhaseKind::DiffusionEnhance,
            PhaseParams::Im2im { .. } => PhaseKind::Im2imTranslate,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let params = match &self.params {
            PhaseParams::Diffusion { prompt, seed } => json!({ "prompt": prompt, "seed": seed }),
            PhaseParams::Im2im { target_domain } => json!({ "target_domain": target_domain }),
        };
        json!({ "endpoint": self.endpoint, "kind": self.kind(), "params": params })
    }

    /// Compact JSON with lexicographically sorted keys.
    pub fn canonical_json(&self) -> String {
        self.to_json().to_string()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizePolicy {
    /// Images keep their native resolution through every phase.
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub phases: Vec<PhaseSpec>,
    pub concurrency: usize,
    /// Maximum attempts per backend request, including the first.
    pub retries: u32,
    pub cache_dir: PathBuf,
    pub resize_policy: ResizePolicy,
    pub backoff_base: Duration,
    pub request_timeout: Duration,
    /// Dataset manifest named by the config file, if any.
    pub dataset: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(phases: Vec<PhaseSpec>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            phases,
            concurrency: 4,
            retries: 3,
            cache_dir: cache_dir.into(),
            resize_policy: ResizePolicy::None,
            backoff_base: Duration::from_millis(500),
            request_timeout: Duration::from_secs(300),
            dataset: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.phases.is_empty() {
            return err("at least one phase is required".into());
        }
        if self.concurrency == 0 {
            return err("concurrency must be at least 1".into());
        }
        if self.retries == 0 {
            return err("retries must be at least 1".into());
        }
        let mut seen_im2im = false;
        for (i, phase) in self.phases.iter().enumerate() {
            match &phase.params {
                PhaseParams::Diffusion { prompt, .. } => {
                    if seen_im2im {
                        return err(format!(
                            "phase {i}: diffusion_enhance must precede im2im_translate"
                        ));
                    }
                    if prompt.trim().is_empty() {
                        return err(format!("phase {i}: diffusion prompt is empty"));
                    }
                }
                PhaseParams::Im2im { .. } => seen_im2im = true,
            }
            if phase.endpoint.is_empty() {
                return err(format!("phase {i}: endpoint is empty"));
            }
            if let Err(e) = reqwest::Url::parse(&phase.endpoint) {
                return err(format!("phase {i}: endpoint {:?}: {e}", phase.endpoint));
            }
        }
        Ok(())
    }

    /// Digest over everything that affects output bytes: the phases and the
    /// resize policy. Scheduling knobs (concurrency, retries, paths) are excluded.
    pub fn config_hash(&self) -> String {
        let phases: Vec<_> = self.phases.iter().map(PhaseSpec::to_json).collect();
        let canonical = json!({ "phases": phases, "resize_policy": self.resize_policy });
        sha256_hex(canonical.to_string().as_bytes())
    }

    /// Parses a TOML config. Relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        raw.into_config(base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    kind: PhaseKind,
    endpoint: String,
    prompt: Option<String>,
    prompt_file: Option<PathBuf>,
    seed: Option<u64>,
    target_domain: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    phases: Vec<RawPhase>,
    dataset: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    concurrency: Option<usize>,
    retries: Option<u32>,
    resize_policy: Option<String>,
    backoff_base_ms: Option<u64>,
    timeout_secs: Option<u64>,
}

impl RawConfig {
    fn into_config(self, base: &Path) -> Result<PipelineConfig> {
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut phases = Vec::with_capacity(self.phases.len());
        for (i, raw) in self.phases.into_iter().enumerate() {
            let cfg_err = |m: String| PipelineError::Config(format!("phase {i}: {m}"));
            let params = match raw.kind {
                PhaseKind::DiffusionEnhance => {
                    if raw.target_domain.is_some() {
                        return Err(cfg_err(
                            "target_domain is not valid for diffusion_enhance".into(),
                        ));
                    }
                    let prompt = match (raw.prompt, raw.prompt_file) {
                        (Some(_), Some(_)) => {
                            return Err(cfg_err("set prompt or prompt_file, not both".into()))
                        }
                        (Some(p), None) => p,
                        (None, Some(f)) => {
                            let f = resolve(f);
                            std::fs::read_to_string(&f)
                                .map_err(|source| PipelineError::Io { path: f, source })?
                        }
                        (None, None) => DEFAULT_ENHANCE_PROMPT.to_owned(),
                    };
                    PhaseParams::Diffusion {
                        prompt,
                        seed: raw.seed.unwrap_or(0),
                    }
                }
                PhaseKind::Im2imTranslate => {
                    if raw.prompt.is_some() || raw.prompt_file.is_some() || raw.seed.is_some() {
                        return Err(cfg_err(
                            "prompt and seed are not valid for im2im_translate".into(),
                        ));
                    }
                    let domain = raw
                        .target_domain
                        .ok_or_else(|| cfg_err("im2im_translate needs target_domain".into()))?;
                    PhaseParams::Im2im {
                        target_domain: domain
                            .parse()
                            .map_err(|e: UnknownDomain| cfg_err(e.to_string()))?,
                    }
                }
            };
            phases.push(PhaseSpec {
                endpoint: raw.endpoint,
                params,
            });
        }
        let resize_policy = match self.resize_policy.as_deref() {
            None | Some("none") => ResizePolicy::None,
            Some(other) => {
                return Err(PipelineError::Config(format!(
                    "resize_policy must be \"none\", found {other:?}"
                )))
            }
        };
        let mut config = PipelineConfig::new(
            phases,
            resolve(
                self.cache_dir
                    .unwrap_or_else(|| PathBuf::from("sim2real-cache")),
            ),
        );
        config.resize_policy = resize_policy;
        config.dataset = self.dataset.map(resolve);
        if let Some(c) = self.concurrency {
            config.concurrency = c;
        }
        if let Some(r) = self.retries {
            config.retries = r;
        }
        if let Some(ms) = self.backoff_base_ms {
            config.backoff_base = Duration::from_millis(ms);
        }
        if let Some(s) = self.timeout_secs {
            config.request_timeout = Duration::from_secs(s);
        }
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prompt_is_the_bundled_text() {
        assert!(DEFAULT_ENHANCE_PROMPT
            .starts_with("Ultra-photorealistic cinematic recreation of the input image."));
        assert!(DEFAULT_ENHANCE_PROMPT.ends_with("pure real-world realism."));
        assert!(!DEFAULT_ENHANCE_PROMPT.contains('\n'));
    }

    const HYBRID: &str = r#"
        cache_dir = "c"
        concurrency = 2
        [[phases]]
        kind = "diffusion_enhance"
        endpoint = "http://127.0.0.1:9000"
        seed = 7
        [[phases]]
        kind = "im2im_translate"
        endpoint = "http://127.0.0.1:9001"
        target_domain = "cs"
    "#;

    #[test]
    fn parses_hybrid_config() {
        let c = PipelineConfig::from_toml(HYBRID, Path::new("/base")).unwrap();
        assert_eq!(c.phases.len(), 2);
        assert_eq!(c.cache_dir, Path::new("/base/c"));
        assert_eq!(c.concurrency, 2);
        assert_eq!(c.retries, 3);
        assert_eq!(
            c.phases[0].params,
            PhaseParams::Diffusion {
                prompt: DEFAULT_ENHANCE_PROMPT.into(),
                seed: 7
            }
        );
        assert_eq!(c.phases[1].kind(), PhaseKind::Im2imTranslate);
    }

    #[test]
    fn im2im_before_diffusion_is_config_error() {
        let c = PipelineConfig::new(
            vec![
                PhaseSpec::im2im("http://a", TargetDomain::Kitti),
                PhaseSpec::diffusion("http://b", "p", 0),
            ],
            "c",
        );
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn unknown_domain_and_resize_policy_rejected() {
        let bad = HYBRID.replace("\"cs\"", "\"foo\"");
        let err = PipelineConfig::from_toml(&bad, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let bad = format!("resize_policy = \"fit\"\n{HYBRID}");
        assert!(PipelineConfig::from_toml(&bad, Path::new(".")).is_err());
        assert!("foo".parse::<TargetDomain>().is_err());
    }

    #[test]
    fn toml_error_carries_location() {
        let err = PipelineConfig::from_toml("concurrency = = 3\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn config_hash_tracks_phases_only() {
        let mut a = PipelineConfig::from_toml(HYBRID, Path::new(".")).unwrap();
        let h = a.config_hash();
        a.concurrency = 9;
        a.cache_dir = "elsewhere".into();
        assert_eq!(a.config_hash(), h);
        a.phases[0] = PhaseSpec::diffusion("http://127.0.0.1:9000", "other", 7);
        assert_ne!(a.config_hash(), h);
    }

    #[test]
    fn canonical_phase_json_sorts_keys() {
        let p = PhaseSpec::im2im("http://x", TargetDomain::Cs);
        assert_eq!(
            p.canonical_json(),
            r#"{"endpoint":"http://x","kind":"im2im_translate","params":{"target_domain":"cs"}}"#
        );
    }
}
