mod support;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use structex::corpus::{estimate_cost, plan_reconversion, run_batch, BatchOptions, CorpusReport, Usd};
use structex::pipeline::{convert, ConvertOptions, SourceBundle, Status};
use structex::registry::PackageRegistry;
use structex::CONVERTER_VERSION;

#[test]
fn every_fixture_has_its_intended_status() {
    let registry = PackageRegistry::with_defaults();
    let mut wrong = Vec::new();
    for (id, expected, files) in support::fixture_bundles() {
        let status = match SourceBundle::from_files(id.clone(), files, None) {
            Ok(bundle) => {
                let result = convert(&bundle, &registry, &ConvertOptions::default());
                if result.status != expected {
                    wrong.push(format!("{id}: {expected} became {} {:?}", result.status, result.diagnostics));
                }
                result.status
            }
            Err(_) => Status::Failed,
        };
        if status != expected && !wrong.iter().any(|w| w.starts_with(&id)) {
            wrong.push(format!("{id}: {expected} became {status}"));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[test]
fn batch_over_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let expected = support::write_fixture_corpus(dir.path());
    let report_path = dir.path().join("report.json");
    let options = BatchOptions {
        jobs: 4,
        report_path: Some(report_path.clone()),
        ..BatchOptions::default()
    };
    let report = run_batch(dir.path(), &PackageRegistry::with_defaults(), &options).unwrap();

    assert_eq!(report.total, 100);
    for (status, count) in support::FIXTURE_COUNTS {
        assert_eq!(report.count(status), count, "{status}");
    }
    assert_eq!(report.fail_rate, 0.03);
    assert_eq!(report.error_rate, 0.25);
    assert_eq!(report.cost_estimate, "1.5".parse().unwrap());
    let got: BTreeMap<String, Status> = report.papers.iter().map(|p| (p.paper_id.clone(), p.status)).collect();
    assert_eq!(got, expected);

    // Pages are written beside the sources, for every readable paper.
    for p in &report.papers {
        let page = dir.path().join(&p.paper_id).join(format!("{}.html", p.paper_id));
        assert_eq!(page.exists(), p.status != Status::Failed, "{}", p.paper_id);
    }
    let from_disk = CorpusReport::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(from_disk, report);
    assert!(report_path.with_extension("txt").exists());
}

#[test]
fn batch_results_do_not_depend_on_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    support::write_fixture_corpus(dir.path());
    let registry = PackageRegistry::with_defaults();
    let run = |jobs| {
        let options = BatchOptions {
            jobs,
            write_html: false,
            ..BatchOptions::default()
        };
        let report = run_batch(dir.path(), &registry, &options).unwrap();
        report
            .papers
            .into_iter()
            .map(|p| (p.paper_id, p.status, p.unknown_packages))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn unreadable_corpus_directory() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    assert!(run_batch(&missing, &PackageRegistry::with_defaults(), &BatchOptions::default()).is_err());
}

#[test]
fn reconversion_plan_from_batch_report() {
    let dir = tempfile::tempdir().unwrap();
    support::write_fixture_corpus(dir.path());
    let options = BatchOptions {
        write_html: false,
        ..BatchOptions::default()
    };
    let report = run_batch(dir.path(), &PackageRegistry::with_defaults(), &options).unwrap();
    assert!(plan_reconversion(&report, CONVERTER_VERSION, &BTreeSet::new()).is_empty());
    let tikz = BTreeSet::from(["tikz".to_string()]);
    let plan = plan_reconversion(&report, CONVERTER_VERSION, &tikz);
    let expected: Vec<String> = report
        .papers
        .iter()
        .filter(|p| p.unknown_packages.contains("tikz"))
        .map(|p| p.paper_id.clone())
        .collect();
    assert!(!expected.is_empty());
    assert_eq!(plan, expected);
    assert_eq!(plan_reconversion(&report, "0.0.0-old", &BTreeSet::new()).len(), 100);
}

proptest! {
    /// Cost is additive over any split of the article count.
    #[test]
    fn cost_is_linear(total in 0u64..10_000_000, cut in 0.0f64..=1.0, cents in 0u32..100_000) {
        let rate = Usd(rust_decimal::Decimal::new(cents as i64, 4));
        let left = (total as f64 * cut) as u64;
        prop_assert_eq!(estimate_cost(left, rate) + estimate_cost(total - left, rate), estimate_cost(total, rate));
    }
}

fn arb_record() -> impl Strategy<Value = structex::corpus::PaperRecord> {
    let pkgs = prop::collection::btree_set(prop::sample::select(vec!["tikz", "pgfplots", "siunitx", "minted"]), 0..3);
    ("[a-z]{1,4}", prop::sample::select(vec!["0.0.9", CONVERTER_VERSION]), pkgs).prop_map(|(id, version, pkgs)| {
        structex::corpus::PaperRecord {
            paper_id: id,
            status: Status::Success,
            converter_version: version.to_string(),
            unknown_packages: pkgs.into_iter().map(str::to_string).collect(),
            errors: 0,
            warnings: 0,
            infos: 0,
            timing_ms: 0,
        }
    })
}

proptest! {
    /// A paper is selected exactly when one of the two rules applies, and
    /// the output is sorted without repeats.
    #[test]
    fn plan_selects_exactly_the_rule_matches(
        records in prop::collection::vec(arb_record(), 0..30),
        changed in prop::collection::btree_set(prop::sample::select(vec!["tikz", "siunitx", "amsmath"]), 0..3),
    ) {
        let changed: BTreeSet<String> = changed.into_iter().map(str::to_string).collect();
        let report = CorpusReport::from_records(records.clone(), Usd::ZERO, 0.0);
        let plan = plan_reconversion(&report, CONVERTER_VERSION, &changed);
        prop_assert!(plan.windows(2).all(|w| w[0] < w[1]));
        for r in &records {
            let should = r.converter_version != CONVERTER_VERSION || !r.unknown_packages.is_disjoint(&changed);
            // Ids may repeat across records; a paper is in the plan if any of its records qualifies.
            if should {
                prop_assert!(plan.contains(&r.paper_id));
            }
        }
        for id in &plan {
            prop_assert!(records.iter().any(|r| &r.paper_id == id
                && (r.converter_version != CONVERTER_VERSION || !r.unknown_packages.is_disjoint(&changed))));
        }
    }
}
