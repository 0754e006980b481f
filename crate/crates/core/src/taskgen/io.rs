//! On-disk layout for probing datasets.
//!
//! A dataset directory holds `train.tsv`, `dev.tsv`, `test.tsv` and a
//! `metadata.json`. The data files carry one instance per line:
//!
//! ```text
//! form<TAB>label                  single-form tasks
//! form1<TAB>form2<TAB>label       pair tasks
//! sentence<TAB>index<TAB>label    token-level tasks
//! ```
//!
//! The metadata records the label set, the generation settings and one
//! provenance code character per line, which makes [`read_dataset`] an
//! exact inverse of [`write_dataset`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    DatasetMeta, InstanceKind, InstanceShape, ProbingDataset, ProbingInstance, Provenance, Split,
    TaskKind,
};

/// Problems reading or writing a dataset directory.
#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("inconsistent dataset directory: {message}")]
    Schema { message: String },
}

impl DatasetIoError {
    fn io(path: &Path, source: std::io::Error) -> DatasetIoError {
        DatasetIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, line: usize, message: impl Into<String>) -> DatasetIoError {
        DatasetIoError::Format {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn schema(message: impl Into<String>) -> DatasetIoError {
        DatasetIoError::Schema {
            message: message.into(),
        }
    }
}

/// Sidecar file describing the data files next to it.
#[derive(Serialize, Deserialize)]
struct MetadataFile {
    language: String,
    task: String,
    label_set: Vec<String>,
    /// One provenance code character per data line, keyed by split name.
    provenance: BTreeMap<String, String>,
    meta: DatasetMeta,
}

/// Writes the dataset into `dir`, creating it if necessary.
pub fn write_dataset(dataset: &ProbingDataset, dir: &Path) -> Result<(), DatasetIoError> {
    fs::create_dir_all(dir).map_err(|e| DatasetIoError::io(dir, e))?;

    let mut provenance = BTreeMap::new();
    for split in Split::ALL {
        let path = dir.join(format!("{}.tsv", split.name()));
        let mut text = String::new();
        let mut codes = String::new();
        for (i, instance) in dataset.split(split).iter().enumerate() {
            text.push_str(&instance_line(instance, &path, i + 1)?);
            text.push('\n');
            codes.push(instance.provenance.code());
        }
        fs::write(&path, text).map_err(|e| DatasetIoError::io(&path, e))?;
        provenance.insert(split.name().to_string(), codes);
    }

    let metadata = MetadataFile {
        language: dataset.language.clone(),
        task: dataset.task.id(),
        label_set: dataset.label_set.clone(),
        provenance,
        meta: dataset.meta.clone(),
    };
    let path = dir.join("metadata.json");
    let json = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    fs::write(&path, json + "\n").map_err(|e| DatasetIoError::io(&path, e))
}

fn instance_line(
    instance: &ProbingInstance,
    path: &Path,
    line: usize,
) -> Result<String, DatasetIoError> {
    let fields: Vec<String> = match &instance.kind {
        InstanceKind::SingleForm { form } => vec![form.clone(), instance.label.clone()],
        InstanceKind::FormPair { first, second } => {
            vec![first.clone(), second.clone(), instance.label.clone()]
        }
        InstanceKind::TokenInContext { sentence, index } => {
            vec![sentence.clone(), index.to_string(), instance.label.clone()]
        }
    };
    for field in &fields {
        if field.contains(['\t', '\n', '\r']) {
            return Err(DatasetIoError::format(
                path,
                line,
                format!("field {field:?} contains a tab or line break"),
            ));
        }
    }
    Ok(fields.join("\t"))
}

/// Reads a dataset directory back into memory. The result is validated
/// against its own metadata; edits to the data files or the provenance
/// record surface as [`DatasetIoError::Schema`].
pub fn read_dataset(dir: &Path) -> Result<ProbingDataset, DatasetIoError> {
    let meta_path = dir.join("metadata.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| DatasetIoError::io(&meta_path, e))?;
    let metadata: MetadataFile = serde_json::from_str(&text)
        .map_err(|e| DatasetIoError::format(&meta_path, e.line(), e.to_string()))?;

    let task = TaskKind::parse(&metadata.task)
        .ok_or_else(|| DatasetIoError::schema(format!("unknown task id {:?}", metadata.task)))?;
    let shape = task.instance_shape();

    let mut splits = Vec::with_capacity(3);
    for split in Split::ALL {
        let path = dir.join(format!("{}.tsv", split.name()));
        let codes = metadata.provenance.get(split.name()).ok_or_else(|| {
            DatasetIoError::schema(format!("no provenance record for the {} split", split.name()))
        })?;
        splits.push(read_split(&path, shape, codes)?);
    }
    let mut splits = splits.into_iter();
    let dataset = ProbingDataset {
        language: metadata.language,
        task,
        label_set: metadata.label_set,
        train: splits.next().unwrap(),
        dev: splits.next().unwrap(),
        test: splits.next().unwrap(),
        meta: metadata.meta,
    };
    dataset.validate().map_err(DatasetIoError::schema)?;
    Ok(dataset)
}

fn read_split(
    path: &Path,
    shape: InstanceShape,
    codes: &str,
) -> Result<Vec<ProbingInstance>, DatasetIoError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetIoError::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != codes.chars().count() {
        return Err(DatasetIoError::schema(format!(
            "{} has {} lines but {} provenance codes",
            path.display(),
            lines.len(),
            codes.chars().count()
        )));
    }

    let mut instances = Vec::with_capacity(lines.len());
    for ((i, line), code) in lines.into_iter().enumerate().zip(codes.chars()) {
        let provenance = Provenance::from_code(code)
            .ok_or_else(|| DatasetIoError::schema(format!("unknown provenance code {code:?}")))?;
        let fields: Vec<&str> = line.split('\t').collect();
        let kind = match shape {
            InstanceShape::SingleForm => match fields.as_slice() {
                [form, _] => InstanceKind::SingleForm {
                    form: form.to_string(),
                },
                _ => {
                    return Err(DatasetIoError::format(
                        path,
                        i + 1,
                        format!("expected 2 tab-separated fields, found {}", fields.len()),
                    ))
                }
            },
            InstanceShape::FormPair => match fields.as_slice() {
                [first, second, _] => InstanceKind::FormPair {
                    first: first.to_string(),
                    second: second.to_string(),
                },
                _ => {
                    return Err(DatasetIoError::format(
                        path,
                        i + 1,
                        format!("expected 3 tab-separated fields, found {}", fields.len()),
                    ))
                }
            },
            InstanceShape::TokenInContext => match fields.as_slice() {
                [sentence, index, _] => InstanceKind::TokenInContext {
                    sentence: sentence.to_string(),
                    index: index.parse().map_err(|_| {
                        DatasetIoError::format(path, i + 1, format!("bad token index {index:?}"))
                    })?,
                },
                _ => {
                    return Err(DatasetIoError::format(
                        path,
                        i + 1,
                        format!("expected 3 tab-separated fields, found {}", fields.len()),
                    ))
                }
            },
        };
        let label = fields.last().expect("shape match checked arity").to_string();
        instances.push(ProbingInstance {
            kind,
            label,
            provenance,
        });
    }
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{LanguageConfig, SplitSizes};

    fn dataset_for(task: TaskKind, instances: Vec<ProbingInstance>) -> ProbingDataset {
        let mut cfg = LanguageConfig::new("tr", 11);
        let n = instances.len();
        cfg.splits = SplitSizes::new(n - 2, 1, 1);
        let mut meta = DatasetMeta::new(&task, &cfg);
        meta.label_counts = super::super::count_labels(&instances);
        let label_set = super::super::collect_label_set(&instances);
        let mut rest = instances;
        let test = vec![rest.pop().unwrap()];
        let dev = vec![rest.pop().unwrap()];
        ProbingDataset {
            language: cfg.language.clone(),
            task,
            label_set,
            train: rest,
            dev,
            test,
            meta,
        }
    }

    fn single_dataset() -> ProbingDataset {
        dataset_for(
            TaskKind::SingleFeature(crate::schema::FeatureDimension::Case),
            vec![
                ProbingInstance::single("evine", "DAT", Provenance::Frequent),
                ProbingInstance::single("evlerinden", "ABL", Provenance::Rare),
                ProbingInstance::single("koştu", "None", Provenance::NoneClass),
                ProbingInstance::single("eve", "DAT", Provenance::Frequent),
            ],
        )
    }

    #[test]
    fn roundtrip_is_exact_for_every_shape() {
        let pair = dataset_for(
            TaskKind::SameFeat,
            vec![
                ProbingInstance::pair("evine", "okula", "Case"),
                ProbingInstance::pair("geldi", "gitti", "Tense"),
                ProbingInstance::pair("ev", "evler", "Number"),
                ProbingInstance::pair("al", "ver", "Lemma"),
            ],
        );
        let token = dataset_for(
            TaskKind::TokenFeature(crate::schema::FeatureDimension::Person),
            vec![
                ProbingInstance::token("Looks good", 0, "3SG"),
                ProbingInstance::token("they look away", 1, "3PL"),
                ProbingInstance::token("I look", 1, "1SG"),
                ProbingInstance::token("you look", 1, "2SG"),
            ],
        );
        for dataset in [single_dataset(), pair, token] {
            let dir = tempfile::tempdir().unwrap();
            write_dataset(&dataset, dir.path()).unwrap();
            let reread = read_dataset(dir.path()).unwrap();
            assert_eq!(reread, dataset);
        }
    }

    #[test]
    fn data_files_use_tab_separated_lines() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&single_dataset(), dir.path()).unwrap();
        let train = fs::read_to_string(dir.path().join("train.tsv")).unwrap();
        assert_eq!(train, "evine\tDAT\nevlerinden\tABL\n");
        let token = dataset_for(
            TaskKind::TokenFeature(crate::schema::FeatureDimension::Person),
            vec![
                ProbingInstance::token("Looks good", 0, "3SG"),
                ProbingInstance::token("I look", 1, "1SG"),
                ProbingInstance::token("you look", 1, "2SG"),
            ],
        );
        write_dataset(&token, dir.path()).unwrap();
        let train = fs::read_to_string(dir.path().join("train.tsv")).unwrap();
        assert_eq!(train, "Looks good\t0\t3SG\n");
    }

    #[test]
    fn extra_line_in_a_split_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&single_dataset(), dir.path()).unwrap();
        let path = dir.path().join("train.tsv");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("sneaky\tDAT\n");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DatasetIoError::Schema { .. })
        ));
    }

    #[test]
    fn edited_provenance_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&single_dataset(), dir.path()).unwrap();
        let path = dir.path().join("metadata.json");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("\"FR\"", "\"FRF\"")).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DatasetIoError::Schema { .. })
        ));
    }

    #[test]
    fn label_outside_the_label_set_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&single_dataset(), dir.path()).unwrap();
        let path = dir.path().join("dev.tsv");
        fs::write(&path, "evlerinden\tGEN\n").unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DatasetIoError::Schema { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_its_position() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&single_dataset(), dir.path()).unwrap();
        let path = dir.path().join("dev.tsv");
        fs::write(&path, "only-one-field\n").unwrap();
        match read_dataset(dir.path()) {
            Err(DatasetIoError::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn field_with_a_tab_cannot_be_written() {
        let dataset = dataset_for(
            TaskKind::SingleFeature(crate::schema::FeatureDimension::Case),
            vec![
                ProbingInstance::single("bad\tform", "DAT", Provenance::Frequent),
                ProbingInstance::single("a", "DAT", Provenance::Frequent),
                ProbingInstance::single("b", "ABL", Provenance::Rare),
            ],
        );
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_dataset(&dataset, dir.path()),
            Err(DatasetIoError::Format { .. })
        ));
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_dataset(&dir.path().join("nope")),
            Err(DatasetIoError::Io { .. })
        ));
    }
}
