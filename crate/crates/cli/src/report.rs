use anyhow::{Context, Result};
use sim2real_core::report::{ComparisonReport, MetricResult};
use sim2real_core::RunManifest;

use crate::{ReportArgs, ReportFormat, EXIT_OK};

pub fn report(args: ReportArgs) -> Result<i32> {
    let mut results = Vec::with_capacity(args.results.len());
    for path in &args.results {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let json: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        results.push(MetricResult::from_json(&path.display().to_string(), &json)?);
    }
    let runs = args
        .runs
        .iter()
        .map(|p| RunManifest::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let report = ComparisonReport::build(&results, &runs)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    let text = report.render_text();
    if let Some(p) = &args.json_out {
        std::fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.text_out {
        std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    match args.format {
        ReportFormat::Text => print!("{text}"),
        ReportFormat::Json => print!("{json}"),
    }
    Ok(EXIT_OK)
}
