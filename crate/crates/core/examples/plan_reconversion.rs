//! Decide which papers to reconvert after a handler change and what that
//! costs.

use std::collections::BTreeSet;

use structex::corpus::{estimate_cost, plan_reconversion, CorpusReport, PaperRecord, Usd};
use structex::pipeline::Status;

fn record(id: &str, version: &str, unknown: &[&str]) -> PaperRecord {
    PaperRecord {
        paper_id: id.into(),
        status: Status::Success,
        converter_version: version.into(),
        unknown_packages: unknown.iter().map(|s| s.to_string()).collect(),
        errors: 0,
        warnings: unknown.len(),
        infos: 0,
        timing_ms: 3,
    }
}

fn main() {
    let rate: Usd = "0.015".parse().unwrap();
    println!("full reconversion of 2,000,000 articles: {}", estimate_cost(2_000_000, rate));

    let previous = CorpusReport::from_records(
        vec![
            record("2401.00001", "0.1.0", &["tikz"]),
            record("2401.00002", "0.1.0", &[]),
            record("2401.00003", "0.0.9", &[]),
            record("2401.00004", "0.1.0", &["tikz", "pgfplots"]),
        ],
        rate,
        1.0,
    );
    let changed = BTreeSet::from(["tikz".to_string()]);
    let plan = plan_reconversion(&previous, "0.1.0", &changed);
    println!("reconvert {:?}", plan);
    println!("cost: {}", estimate_cost(plan.len() as u64, rate));
}
