use std::path::Path;

use irn_core::eval::{write_report, MetricRecord};
use irn_core::Result;
use serde::Serialize;

/// Prints `split<TAB>metric<TAB>value` lines and writes the JSON report.
pub fn emit(records: &[MetricRecord], path: Option<&Path>) -> Result<()> {
    for r in records {
        println!("{}\t{}\t{}", r.split, r.metric, r.value);
    }
    if let Some(p) = path {
        write_report(p, records)?;
        log::info!("report written to {}", p.display());
    }
    Ok(())
}

/// Logs the fully resolved configuration of a run.
pub fn log_config<T: Serialize>(command: &str, seed: u64, config: &T) {
    let json = serde_json::to_string(config).unwrap_or_else(|e| format!("<unserialisable: {e}>"));
    log::info!("{command} seed={seed} config={json}");
}
