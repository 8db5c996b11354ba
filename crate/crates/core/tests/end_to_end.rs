//! Public-API flow: generate, write to disk, ingest back, audit all three
//! model configurations, render every report format.

use opinion_audit::heatmap::render_heatmap;
use opinion_audit::ingest::write_jsonl;
use opinion_audit::pipeline::{run_audit, AuditOptions};
use opinion_audit::synth::{generate, SynthConfig};
use opinion_audit::{
    ingest, parse_report, render_report, DatasetManifest, FileFormat, ModelKind, ReportFormat,
    TrainConfig,
};

#[test]
fn generate_ingest_audit_render() {
    let config = SynthConfig {
        n_samples: 200,
        n_annotators: 30,
        seed: 17,
        ..Default::default()
    };
    let (dataset, _) = generate(&config).unwrap();

    // Round-trip through the JSONL format.
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.jsonl");
    write_jsonl(&dataset, &data_path).unwrap();
    let manifest = DatasetManifest {
        labels: dataset.label_set().to_vec(),
        demographics: dataset.demographic_vocab().clone(),
    };
    let loaded = ingest(&data_path, FileFormat::Jsonl, &manifest).unwrap();
    assert_eq!(loaded.fingerprint(), dataset.fingerprint());
    assert_eq!(loaded.annotations().len(), dataset.annotations().len());

    // Audit the ingested copy with all three configurations.
    let options = AuditOptions {
        models: vec![ModelKind::Mv, ModelKind::Annotator, ModelKind::Oracle],
        n_text_buckets: 1 << 12,
        tune: false,
        train_config: TrainConfig {
            max_epochs: 40,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_audit(&loaded, &options).unwrap();
    assert_eq!(report.models.len(), 3);
    let oracle = report
        .models
        .iter()
        .find(|m| m.kind == ModelKind::Oracle)
        .unwrap();
    assert_eq!(oracle.score.unfairness, 0.0);
    assert_eq!(oracle.score.general_performance, 1.0);

    // Every format renders; JSON parses back to the same report.
    let json = render_report(&report, ReportFormat::Json).unwrap();
    assert_eq!(parse_report(&json).unwrap(), report);
    let csv = String::from_utf8(render_report(&report, ReportFormat::Csv).unwrap()).unwrap();
    assert!(csv.lines().count() > report.models.len());
    let text = String::from_utf8(render_report(&report, ReportFormat::Text).unwrap()).unwrap();
    assert!(text.contains("ranking (most to least fair):"));
    assert!(text.contains("oracle"));

    let columns: Vec<(String, &opinion_audit::GroupedEvaluation)> = report
        .models
        .iter()
        .map(|m| (m.kind.name().to_string(), &m.grouped[0]))
        .collect();
    let svg = String::from_utf8(render_heatmap(&columns).unwrap()).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("oracle"));
}

#[test]
fn csv_ingest_matches_jsonl_ingest() {
    let config = SynthConfig {
        n_samples: 60,
        n_annotators: 12,
        seed: 23,
        ..Default::default()
    };
    let (dataset, _) = generate(&config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let jsonl_path = dir.path().join("data.jsonl");
    write_jsonl(&dataset, &jsonl_path).unwrap();

    // Build the CSV flat form of the same annotations.
    let mut csv = String::from("sample_id,text,annotator_id,label,age,education,gender\n");
    let mut rows: Vec<_> = dataset.annotations().iter().collect();
    rows.sort_by(|a, b| {
        (a.sample_id.as_str(), a.annotator_id.as_str())
            .cmp(&(b.sample_id.as_str(), b.annotator_id.as_str()))
    });
    for ann in rows {
        let sample = dataset.sample(&ann.sample_id).unwrap();
        let annotator = dataset.annotator(&ann.annotator_id).unwrap();
        let demo = annotator.demographics.as_ref();
        let get = |attr: &str| {
            demo.and_then(|d| d.get(attr))
                .cloned()
                .unwrap_or_default()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            ann.sample_id,
            sample.text,
            ann.annotator_id,
            ann.label,
            get("age"),
            get("education"),
            get("gender"),
        ));
    }
    let csv_path = dir.path().join("data.csv");
    std::fs::write(&csv_path, csv).unwrap();

    let manifest = DatasetManifest {
        labels: dataset.label_set().to_vec(),
        demographics: dataset.demographic_vocab().clone(),
    };
    let from_jsonl = ingest(&jsonl_path, FileFormat::Jsonl, &manifest).unwrap();
    let from_csv = ingest(&csv_path, FileFormat::Csv, &manifest).unwrap();
    assert_eq!(from_jsonl.fingerprint(), from_csv.fingerprint());
    assert_eq!(
        from_jsonl.annotator("a00000").unwrap().demographics,
        from_csv.annotator("a00000").unwrap().demographics
    );
}
