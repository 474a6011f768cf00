use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Result, SegLabelMap};

const VKITTI2_MAPPING: &str = include_str!("../../resources/vkitti2_to_cityscapes.json");

/// One relabeling rule. `to: None` sends the category to the ignore index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub from: String,
    pub to: Option<String>,
}

/// Category relabeling table, loaded from data rather than compiled in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMapping {
    #[serde(default)]
    pub name: String,
    /// Order of the evaluated categories. When absent, targets are numbered
    /// in order of first appearance in `rules`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    pub rules: Vec<MappingRule>,
}

/// A mapping bound to a concrete source category list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedMapping {
    /// `lut[source_index]` is the target index, or `None` for ignored categories.
    pub lut: Vec<Option<u8>>,
    pub targets: Vec<String>,
}

impl CategoryMapping {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            DatasetError::Parse { message, .. } => DatasetError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DatasetError::Parse {
            path: "<mapping>".into(),
            message: e.to_string(),
        })
    }

    /// Mapping that sends every name in `categories` to itself.
    pub fn identity<S: AsRef<str>>(categories: &[S]) -> Self {
        Self {
            name: "identity".into(),
            targets: Some(categories.iter().map(|c| c.as_ref().to_owned()).collect()),
            rules: categories
                .iter()
                .map(|c| MappingRule {
                    from: c.as_ref().to_owned(),
                    to: Some(c.as_ref().to_owned()),
                })
                .collect(),
        }
    }

    /// Binds the rules to `source` categories. Every source category needs
    /// exactly one rule, and every rule must name a source category.
    pub fn resolve<S: AsRef<str>>(&self, source: &[S]) -> Result<ResolvedMapping> {
        let mut rule_for: HashMap<&str, Option<&str>> = HashMap::new();
        for rule in &self.rules {
            if rule_for
                .insert(rule.from.as_str(), rule.to.as_deref())
                .is_some()
            {
                return Err(DatasetError::Mapping(format!(
                    "more than one rule for {:?}",
                    rule.from
                )));
            }
        }
        for rule in &self.rules {
            if !source.iter().any(|s| s.as_ref() == rule.from) {
                return Err(DatasetError::Mapping(format!(
                    "rule for {:?} names no source category",
                    rule.from
                )));
            }
        }

        let mut targets: Vec<String> = match &self.targets {
            Some(t) => t.clone(),
            None => Vec::new(),
        };
        let explicit = self.targets.is_some();
        let mut lut = Vec::with_capacity(source.len());
        for name in source {
            let name = name.as_ref();
            let to = rule_for
                .get(name)
                .ok_or_else(|| DatasetError::Mapping(format!("no rule for category {name:?}")))?;
            let Some(to) = to else {
                lut.push(None);
                continue;
            };
            let idx = match targets.iter().position(|t| t == to) {
                Some(i) => i,
                None if explicit => {
                    return Err(DatasetError::Mapping(format!(
                        "rule {name:?} -> {to:?} targets an undeclared category"
                    )))
                }
                None => {
                    targets.push((*to).to_owned());
                    targets.len() - 1
                }
            };
            lut.push(Some(idx as u8));
        }
        if targets.len() > 255 {
            return Err(DatasetError::Mapping(
                "more than 255 target categories".into(),
            ));
        }
        Ok(ResolvedMapping { lut, targets })
    }
}

/// The VKITTI2 to Cityscapes-compatible table: tree merges into vegetation,
/// truck into van, and misc plus the unlabeled category are ignored.
pub fn default_vkitti2_mapping() -> CategoryMapping {
    CategoryMapping::from_json(VKITTI2_MAPPING).expect("bundled mapping parses")
}

/// Relabels every pixel through `mapping`. Ignored pixels keep the map's
/// ignore index.
pub fn apply_category_mapping(map: &SegLabelMap, mapping: &ResolvedMapping) -> Result<SegLabelMap> {
    let ignore = map.ignore_index;
    let mut labels = Vec::with_capacity(map.labels.len());
    for (i, &label) in map.labels.iter().enumerate() {
        if label == ignore {
            labels.push(ignore);
            continue;
        }
        match mapping.lut.get(label as usize) {
            Some(Some(t)) => labels.push(*t),
            Some(None) => labels.push(ignore),
            None => {
                let (x, y) = map.coords(i);
                return Err(DatasetError::LabelOutOfRange {
                    x,
                    y,
                    label,
                    categories: mapping.lut.len(),
                });
            }
        }
    }
    Ok(SegLabelMap {
        width: map.width,
        height: map.height,
        labels,
        ignore_index: ignore,
    })
}
