//! Comparison tables across enhancement variants, built from metric result
//! files written by the `cmmd`, `eval-seg` and `eval-det` commands.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::pipeline::RunManifest;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("{source_name}: {message}")]
    BadResult {
        source_name: String,
        message: String,
    },

    #[error(
        "both {first} and {second} report {metric} for variant {variant} on {dataset}/{domain}"
    )]
    ConflictingCell {
        variant: Variant,
        dataset: String,
        metric: MetricKind,
        domain: String,
        first: String,
        second: String,
    },

    #[error("no metric results given")]
    Empty,
}

/// Pipeline variants compared in a report, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Synthetic,
    DiffusionOnly,
    Im2imOnly,
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Synthetic,
        Variant::DiffusionOnly,
        Variant::Im2imOnly,
        Variant::Hybrid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Synthetic => "synthetic",
            Variant::DiffusionOnly => "diffusion_only",
            Variant::Im2imOnly => "im2im_only",
            Variant::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}; expected synthetic, diffusion_only, im2im_only or hybrid"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Cmmd,
    Miou,
    Map50,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Cmmd => "cmmd",
            MetricKind::Miou => "miou",
            MetricKind::Map50 => "map50",
        }
    }

    fn display_name(&self) -> &'static str {
        match self {
            MetricKind::Cmmd => "CMMD",
            MetricKind::Miou => "mIoU",
            MetricKind::Map50 => "mAP@50",
        }
    }

    pub fn lower_is_better(&self) -> bool {
        matches!(self, MetricKind::Cmmd)
    }

    fn format_value(&self, v: f64) -> String {
        match self {
            MetricKind::Cmmd => format!("{v:.3}"),
            MetricKind::Miou | MetricKind::Map50 => format!("{:.2}%", v * 100.0),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies which table cell a metric result belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultLabel {
    pub variant: Variant,
    pub dataset: String,
    /// Real-world target domain, e.g. `kitti` or `cs`.
    pub domain: String,
}

/// Adds the common envelope (`schema_version`, `metric`, optional `label`)
/// to a metric command's JSON body.
pub fn envelope(metric: MetricKind, body: Value, label: Option<&ResultLabel>) -> Value {
    let mut out = serde_json::Map::new();
    out.insert("schema_version".into(), crate::SCHEMA_VERSION.into());
    out.insert("metric".into(), metric.as_str().into());
    if let Value::Object(fields) = body {
        out.extend(fields);
    }
    if let Some(label) = label {
        out.insert(
            "label".into(),
            serde_json::to_value(label).expect("label serializes"),
        );
    }
    Value::Object(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub metric: MetricKind,
    pub value: f64,
    pub label: ResultLabel,
    pub source: String,
}

impl MetricResult {
    pub fn from_json(source: &str, json: &Value) -> Result<Self, ReportError> {
        let bad = |message: String| ReportError::BadResult {
            source_name: source.to_owned(),
            message,
        };
        let metric: MetricKind =
            serde_json::from_value(json.get("metric").cloned().unwrap_or(Value::Null))
                .map_err(|_| bad("missing or unknown \"metric\" field".into()))?;
        let value = json
            .get(metric.as_str())
            .and_then(Value::as_f64)
            .ok_or_else(|| bad(format!("missing numeric {:?} field", metric.as_str())))?;
        let label: ResultLabel = serde_json::from_value(
            json.get("label").cloned().unwrap_or(Value::Null),
        )
        .map_err(|_| {
            bad("missing \"label\"; rerun the metric with --variant, --dataset and --domain".into())
        })?;
        Ok(Self {
            metric,
            value,
            label,
            source: source.to_owned(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Column {
    pub dataset: String,
    pub metric: MetricKind,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub variant: Variant,
    /// Aligned with [`ComparisonReport::columns`].
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub dataset: String,
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub datasets: Vec<String>,
    pub config_hashes: Vec<String>,
    pub runs: Vec<RunSummary>,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub columns: Vec<Column>,
    /// Ordered synthetic, diffusion_only, im2im_only, hybrid; variants without
    /// any result are omitted.
    pub rows: Vec<Row>,
    pub metadata: ReportMetadata,
}

impl ComparisonReport {
    pub fn build(results: &[MetricResult], runs: &[RunManifest]) -> Result<Self, ReportError> {
        if results.is_empty() {
            return Err(ReportError::Empty);
        }
        let mut cells: BTreeMap<(Variant, Column), &MetricResult> = BTreeMap::new();
        for r in results {
            let column = Column {
                dataset: r.label.dataset.clone(),
                metric: r.metric,
                domain: r.label.domain.clone(),
            };
            if let Some(prev) = cells.insert((r.label.variant, column.clone()), r) {
                return Err(ReportError::ConflictingCell {
                    variant: r.label.variant,
                    dataset: column.dataset,
                    metric: column.metric,
                    domain: column.domain,
                    first: prev.source.clone(),
                    second: r.source.clone(),
                });
            }
        }
        let mut columns: Vec<Column> = cells.keys().map(|(_, c)| c.clone()).collect();
        columns.sort();
        columns.dedup();
        let rows = Variant::ALL
            .into_iter()
            .filter(|v| cells.keys().any(|(cv, _)| cv == v))
            .map(|variant| Row {
                variant,
                values: columns
                    .iter()
                    .map(|c| cells.get(&(variant, c.clone())).map(|r| r.value))
                    .collect(),
            })
            .collect();

        let mut datasets: Vec<String> = results.iter().map(|r| r.label.dataset.clone()).collect();
        datasets.extend(runs.iter().map(|r| r.dataset.clone()));
        datasets.sort();
        datasets.dedup();
        let mut config_hashes: Vec<String> = runs.iter().map(|r| r.config_hash.clone()).collect();
        config_hashes.sort();
        config_hashes.dedup();
        Ok(Self {
            schema_version: crate::SCHEMA_VERSION,
            columns,
            rows,
            metadata: ReportMetadata {
                datasets,
                config_hashes,
                runs: runs
                    .iter()
                    .map(|r| RunSummary {
                        config_hash: r.config_hash.clone(),
                        dataset: r.dataset.clone(),
                        started: r.started.clone(),
                        finished: r.finished.clone(),
                    })
                    .collect(),
                sources: results.iter().map(|r| r.source.clone()).collect(),
            },
        })
    }

    /// Fixed-width text table. Depends only on `columns` and `rows`.
    pub fn render_text(&self) -> String {
        let mut header_a = vec!["".to_owned()];
        let mut header_b = vec!["Variant".to_owned()];
        for c in &self.columns {
            header_a.push(format!("{} {}", c.dataset, c.metric.display_name()));
            header_b.push(c.domain.clone());
        }
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                std::iter::once(row.variant.as_str().to_owned())
                    .chain(row.values.iter().zip(&self.columns).map(|(v, c)| match v {
                        Some(v) => c.metric.format_value(*v),
                        None => "-".to_owned(),
                    }))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..header_a.len())
            .map(|i| {
                std::iter::once(&header_a)
                    .chain(std::iter::once(&header_b))
                    .chain(body.iter())
                    .map(|r| r[i].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "  {cell:>w$}");
                }
            }
            s.trim_end().to_owned() + "\n"
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)) + "\n";
        let mut out = String::new();
        out.push_str(&line(&header_a));
        out.push_str(&line(&header_b));
        out.push_str(&rule);
        for row in &body {
            out.push_str(&line(row));
        }
        out.push_str(&rule);
        let mut metrics: Vec<MetricKind> = self.columns.iter().map(|c| c.metric).collect();
        metrics.dedup();
        let notes: Vec<String> = metrics
            .iter()
            .map(|m| {
                format!(
                    "{}: {} is better",
                    m.display_name(),
                    if m.lower_is_better() {
                        "lower"
                    } else {
                        "higher"
                    }
                )
            })
            .collect();
        out.push_str(&notes.join("; "));
        out.push('\n');
        out
    }
}
