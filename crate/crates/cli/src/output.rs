//! CSV and JSON artifacts of a campaign.

use std::fs;
use std::path::Path;

use rarefuse_core::estimators::format_float;
use rarefuse_core::subset_sim::SubsetResult;

use crate::error::CliError;
use crate::runner::CampaignReport;

pub const DENSITIES_FILE: &str = "densities.json";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const SUBSET_FILE: &str = "subset.csv";
pub const REPORT_FILE: &str = "report.json";

fn optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Writes every artifact the campaign produced into `dir`.
pub fn write_outputs(report: &CampaignReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let seed = report.config.seed.to_string();
    let hash = report.config_hash.as_str();

    if !report.densities.is_empty() {
        fs::write(
            dir.join(DENSITIES_FILE),
            serde_json::to_string_pretty(&report.densities)? + "\n",
        )?;
    }

    if !report.weights.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(ESTIMATES_FILE))?;
        w.write_record([
            "config_hash", "seed", "repetition", "n_total", "estimator_id", "kind", "n",
            "estimate", "variance", "hits", "rmse", "cv", "status",
        ])?;
        for r in &report.estimates {
            w.write_record([
                hash.to_string(),
                seed.clone(),
                r.repetition.to_string(),
                r.n_total.to_string(),
                r.estimator_id.clone(),
                r.kind.clone(),
                r.n.to_string(),
                optional(r.estimate),
                optional(r.variance),
                r.hits.to_string(),
                optional(r.rmse),
                optional(r.cv),
                r.status.as_str().to_string(),
            ])?;
        }
        w.flush()?;

        let ids = report.density_ids();
        let mut w = csv::Writer::from_path(dir.join(WEIGHTS_FILE))?;
        let mut header: Vec<String> = ["config_hash", "seed", "repetition", "n_total"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(ids.iter().cloned());
        header.extend(["excluded".to_string(), "status".to_string()]);
        w.write_record(&header)?;
        for row in &report.weights {
            let mut record = vec![
                hash.to_string(),
                seed.clone(),
                row.repetition.to_string(),
                row.n_total.to_string(),
            ];
            if row.weights.is_empty() {
                record.extend(ids.iter().map(|_| String::new()));
            } else {
                record.extend(row.weights.iter().map(|x| format_float(*x)));
            }
            let excluded: Vec<&str> = row.excluded.iter().map(|&i| ids[i].as_str()).collect();
            record.push(excluded.join(";"));
            record.push(row.status.as_str().to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    if !report.subset.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(SUBSET_FILE))?;
        let mut header = vec!["config_hash", "seed", "repetition"];
        header.extend(SubsetResult::CSV_HEADER);
        header.push("converged");
        w.write_record(&header)?;
        for (rep, r) in report.subset.iter().enumerate() {
            let mut record = vec![hash.to_string(), seed.clone(), rep.to_string()];
            record.extend(r.csv_fields());
            record.push(r.converged.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    fs::write(
        dir.join(REPORT_FILE),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    Ok(())
}
