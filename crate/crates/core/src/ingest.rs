//! File ingestion: JSONL and CSV annotation files plus the sidecar manifest.
//!
//! Ingestion is strict. A malformed row, a duplicate annotation or an
//! out-of-vocabulary value aborts the load with an error naming the line,
//! because silently dropped rows would bias every disagreement statistic
//! computed afterwards.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, Annotation, Annotator, Sample};
use crate::error::{AuditError, Result};

/// Sidecar manifest declaring the label set and demographic vocabularies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub labels: Vec<String>,
    #[serde(default)]
    pub demographics: BTreeMap<String, Vec<String>>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Annotation file formats understood by [`ingest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Jsonl,
    Csv,
}

impl FileFormat {
    /// Guess the format from the file extension; defaults to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::Csv,
            _ => FileFormat::Jsonl,
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonlRow {
    sample_id: String,
    text: String,
    annotator_id: String,
    label: String,
    #[serde(default)]
    demographics: Option<BTreeMap<String, String>>,
}

/// Accumulates rows into samples, annotators and annotations while checking
/// cross-row consistency (same text per sample, same demographics per
/// annotator).
#[derive(Default)]
struct RowCollector {
    samples: Vec<Sample>,
    sample_by_id: BTreeMap<String, usize>,
    annotators: Vec<Annotator>,
    annotator_by_id: BTreeMap<String, usize>,
    annotations: Vec<Annotation>,
}

impl RowCollector {
    fn push(&mut self, line: usize, row: JsonlRow) -> Result<()> {
        match self.sample_by_id.get(&row.sample_id) {
            None => {
                self.sample_by_id
                    .insert(row.sample_id.clone(), self.samples.len());
                self.samples.push(Sample {
                    sample_id: row.sample_id.clone(),
                    text: row.text,
                });
            }
            Some(&i) => {
                if self.samples[i].text != row.text {
                    return Err(AuditError::Parse {
                        line,
                        message: format!(
                            "sample {} has conflicting text across rows",
                            row.sample_id
                        ),
                    });
                }
            }
        }

        match self.annotator_by_id.get(&row.annotator_id) {
            None => {
                self.annotator_by_id
                    .insert(row.annotator_id.clone(), self.annotators.len());
                self.annotators.push(Annotator {
                    annotator_id: row.annotator_id.clone(),
                    demographics: row.demographics,
                });
            }
            Some(&i) => {
                if let Some(new_demo) = row.demographics {
                    match &mut self.annotators[i].demographics {
                        slot @ None => *slot = Some(new_demo),
                        Some(existing) => {
                            for (attr, value) in new_demo {
                                match existing.get(&attr) {
                                    Some(old) if *old != value => {
                                        return Err(AuditError::Parse {
                                            line,
                                            message: format!(
                                                "annotator {} has conflicting {attr} values",
                                                row.annotator_id
                                            ),
                                        });
                                    }
                                    Some(_) => {}
                                    None => {
                                        existing.insert(attr, value);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        self.annotations.push(Annotation {
            sample_id: row.sample_id,
            annotator_id: row.annotator_id,
            label: row.label,
        });
        Ok(())
    }

    fn finish(self, manifest: &DatasetManifest) -> Result<AnnotatedDataset> {
        AnnotatedDataset::new(
            manifest.labels.clone(),
            manifest.demographics.clone(),
            self.samples,
            self.annotators,
            self.annotations,
        )
    }
}

/// Load an annotation file and validate it against the manifest.
pub fn ingest(path: &Path, format: FileFormat, manifest: &DatasetManifest) -> Result<AnnotatedDataset> {
    match format {
        FileFormat::Jsonl => ingest_jsonl(path, manifest),
        FileFormat::Csv => ingest_csv(path, manifest),
    }
}

fn ingest_jsonl(path: &Path, manifest: &DatasetManifest) -> Result<AnnotatedDataset> {
    let raw = fs::read_to_string(path)?;
    let mut collector = RowCollector::default();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(line).map_err(|e| AuditError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        collector.push(line_no, row)?;
    }
    collector.finish(manifest)
}

fn ingest_csv(path: &Path, manifest: &DatasetManifest) -> Result<AnnotatedDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();

    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AuditError::Schema(format!("csv is missing required column {name}")))
    };
    let sample_col = column("sample_id")?;
    let text_col = column("text")?;
    let annotator_col = column("annotator_id")?;
    let label_col = column("label")?;

    // Remaining columns must be declared demographic attributes.
    let mut demo_cols: Vec<(usize, String)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == sample_col || i == text_col || i == annotator_col || i == label_col {
            continue;
        }
        if manifest.demographics.contains_key(h) {
            demo_cols.push((i, h.to_string()));
        } else {
            return Err(AuditError::Schema(format!(
                "csv column {h} is not a declared demographic attribute"
            )));
        }
    }

    let mut collector = RowCollector::default();
    for (idx, record) in reader.records().enumerate() {
        let line_no = idx + 2; // header is line 1
        let record = record.map_err(|e| AuditError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let field = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| AuditError::Parse {
                line: line_no,
                message: "row has too few fields".into(),
            })
        };
        let mut demographics = BTreeMap::new();
        for (col, attr) in &demo_cols {
            let value = field(*col)?;
            if !value.is_empty() {
                demographics.insert(attr.clone(), value.to_string());
            }
        }
        let row = JsonlRow {
            sample_id: field(sample_col)?.to_string(),
            text: field(text_col)?.to_string(),
            annotator_id: field(annotator_col)?.to_string(),
            label: field(label_col)?.to_string(),
            demographics: if demographics.is_empty() {
                None
            } else {
                Some(demographics)
            },
        };
        collector.push(line_no, row)?;
    }
    collector.finish(manifest)
}

/// Write a dataset back out as JSONL, one annotation per line, in a canonical
/// order (sorted by sample then annotator). Used by the synthetic generator.
pub fn write_jsonl(dataset: &AnnotatedDataset, path: &Path) -> Result<()> {
    let mut rows: Vec<&Annotation> = dataset.annotations().iter().collect();
    rows.sort_by(|a, b| {
        (a.sample_id.as_str(), a.annotator_id.as_str())
            .cmp(&(b.sample_id.as_str(), b.annotator_id.as_str()))
    });
    let mut out = String::new();
    for ann in rows {
        let sample = dataset
            .sample(&ann.sample_id)
            .expect("annotation references a known sample");
        let annotator = dataset
            .annotator(&ann.annotator_id)
            .expect("annotation references a known annotator");
        let row = serde_json::json!({
            "sample_id": ann.sample_id,
            "text": sample.text,
            "annotator_id": ann.annotator_id,
            "label": ann.label,
            "demographics": annotator.demographics,
        });
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn manifest() -> DatasetManifest {
        DatasetManifest {
            labels: vec!["T".into(), "NT".into()],
            demographics: BTreeMap::from([(
                "gender".to_string(),
                vec!["f".to_string(), "m".to_string()],
            )]),
        }
    }

    fn write_temp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn jsonl_three_rows() {
        let f = write_temp(
            concat!(
                r#"{"sample_id":"s1","text":"hello there","annotator_id":"a1","label":"T"}"#,
                "\n",
                r#"{"sample_id":"s1","text":"hello there","annotator_id":"a2","label":"NT"}"#,
                "\n",
                r#"{"sample_id":"s2","text":"other words","annotator_id":"a1","label":"NT"}"#,
                "\n",
            ),
            ".jsonl",
        );
        let ds = ingest(f.path(), FileFormat::Jsonl, &manifest()).unwrap();
        assert_eq!(ds.samples().len(), 2);
        assert_eq!(ds.annotators().len(), 2);
        assert_eq!(ds.annotations().len(), 3);
    }

    #[test]
    fn jsonl_duplicate_pair_names_pair() {
        let f = write_temp(
            concat!(
                r#"{"sample_id":"s1","text":"hello","annotator_id":"a1","label":"T"}"#,
                "\n",
                r#"{"sample_id":"s1","text":"hello","annotator_id":"a1","label":"NT"}"#,
                "\n",
            ),
            ".jsonl",
        );
        let err = ingest(f.path(), FileFormat::Jsonl, &manifest()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s1") && msg.contains("a1"), "{msg}");
    }

    #[test]
    fn jsonl_unknown_label_rejected() {
        let f = write_temp(
            concat!(r#"{"sample_id":"s1","text":"hello","annotator_id":"a1","label":"X"}"#, "\n"),
            ".jsonl",
        );
        let err = ingest(f.path(), FileFormat::Jsonl, &manifest()).unwrap_err();
        assert!(err.to_string().contains("X"));
    }

    #[test]
    fn jsonl_malformed_row_reports_line() {
        let f = write_temp(
            concat!(
                r#"{"sample_id":"s1","text":"hello","annotator_id":"a1","label":"T"}"#,
                "\n",
                "{not json}\n",
            ),
            ".jsonl",
        );
        let err = ingest(f.path(), FileFormat::Jsonl, &manifest()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn jsonl_conflicting_text_rejected() {
        let f = write_temp(
            concat!(
                r#"{"sample_id":"s1","text":"hello","annotator_id":"a1","label":"T"}"#,
                "\n",
                r#"{"sample_id":"s1","text":"different","annotator_id":"a2","label":"T"}"#,
                "\n",
            ),
            ".jsonl",
        );
        let err = ingest(f.path(), FileFormat::Jsonl, &manifest()).unwrap_err();
        assert!(err.to_string().contains("conflicting text"));
    }

    #[test]
    fn csv_with_optional_demographics() {
        let f = write_temp(
            "sample_id,text,annotator_id,label,gender\n\
             s1,hello there,a1,T,f\n\
             s1,hello there,a2,NT,\n\
             s2,other words,a1,NT,f\n",
            ".csv",
        );
        let ds = ingest(f.path(), FileFormat::Csv, &manifest()).unwrap();
        assert_eq!(ds.annotations().len(), 3);
        assert_eq!(
            ds.annotator("a1").unwrap().demographics.as_ref().unwrap()["gender"],
            "f"
        );
        assert!(ds.annotator("a2").unwrap().demographics.is_none());
    }

    #[test]
    fn csv_unknown_column_rejected() {
        let f = write_temp(
            "sample_id,text,annotator_id,label,shoe_size\ns1,hello,a1,T,42\n",
            ".csv",
        );
        let err = ingest(f.path(), FileFormat::Csv, &manifest()).unwrap_err();
        assert!(err.to_string().contains("shoe_size"));
    }

    #[test]
    fn jsonl_roundtrip_via_write() {
        let f = write_temp(
            concat!(
                r#"{"sample_id":"s1","text":"hello there","annotator_id":"a1","label":"T","demographics":{"gender":"f"}}"#,
                "\n",
                r#"{"sample_id":"s1","text":"hello there","annotator_id":"a2","label":"NT"}"#,
                "\n",
            ),
            ".jsonl",
        );
        let m = manifest();
        let ds = ingest(f.path(), FileFormat::Jsonl, &m).unwrap();
        let out = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        write_jsonl(&ds, out.path()).unwrap();
        let ds2 = ingest(out.path(), FileFormat::Jsonl, &m).unwrap();
        assert_eq!(ds.annotations().len(), ds2.annotations().len());
        assert_eq!(ds.fingerprint(), ds2.fingerprint());
    }
}
