//! Datasets: user records, heterogeneous graphs, splits, and trims.
//!
//! On disk a dataset is a directory of `users.jsonl`, `schema.json`
//! (ordered metadata field names), and optionally `edges.jsonl`. Edges are
//! stored directed; undirected graphs are expressed by storing both
//! directions. Unlabeled users stay in the dataset as graph context but
//! never enter splits or metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Account class. Bot is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Bot,
}

impl Label {
    /// Class index used by classifiers: human = 0, bot = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Human => 0,
            Label::Bot => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Option<Label> {
        match idx {
            0 => Some(Label::Human),
            1 => Some(Label::Bot),
            _ => None,
        }
    }
}

/// One social-media account.
///
/// `metadata` is an ordered list of (field name, value) pairs whose order
/// must match the dataset schema. `tweets` are most recent first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub metadata: Vec<(String, String)>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tweets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Typed multi-relation graph over record indices.
///
/// Relation names map to directed edge lists `(src, dst)`. The map is
/// ordered by name so per-relation parameters bind deterministically.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub relations: BTreeMap<String, Vec<(usize, usize)>>,
}

impl HeteroGraph {
    pub fn relation_names(&self) -> Vec<&str> {
        self.relations.keys().map(|s| s.as_str()).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.relations.values().map(Vec::len).sum()
    }

    /// Checks that every edge endpoint indexes a record.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        for (name, edges) in &self.relations {
            for &(src, dst) in edges {
                if src >= node_count || dst >= node_count {
                    return Err(Error::Data(format!(
                        "relation {name}: edge ({src}, {dst}) exceeds node count {node_count}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// In-neighbor lists per relation: `out[r][i]` holds sources of edges
    /// into node `i` under relation `r`, relations in name order.
    pub fn in_neighbors(&self, node_count: usize) -> Vec<Vec<Vec<usize>>> {
        self.relations
            .values()
            .map(|edges| {
                let mut nbrs = vec![Vec::new(); node_count];
                for &(src, dst) in edges {
                    nbrs[dst].push(src);
                }
                nbrs
            })
            .collect()
    }
}

/// A corpus of accounts with an optional graph.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<UserRecord>,
    pub graph: Option<HeteroGraph>,
    /// Ordered metadata field names every record must follow.
    pub schema: Vec<String>,
}

impl Dataset {
    /// Validates user-id uniqueness, schema order, and edge endpoints.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for rec in &self.records {
            if !seen.insert(rec.user_id.as_str()) {
                return Err(Error::Data(format!("duplicate user_id {}", rec.user_id)));
            }
            let names: Vec<&str> = rec.metadata.iter().map(|(n, _)| n.as_str()).collect();
            let schema: Vec<&str> = self.schema.iter().map(String::as_str).collect();
            if names != schema {
                return Err(Error::Data(format!(
                    "user {}: metadata fields {:?} do not match schema {:?}",
                    rec.user_id, names, schema
                )));
            }
        }
        if let Some(graph) = &self.graph {
            graph.validate(self.records.len())?;
        }
        Ok(())
    }

    /// Indices of records that carry a label.
    pub fn labeled_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.label.map(|_| i))
            .collect()
    }

    pub fn label_of(&self, index: usize) -> Option<Label> {
        self.records[index].label
    }

    /// Map from user_id to record index.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.user_id.as_str(), i))
            .collect()
    }
}

/// Train/validation/test indices over labeled records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitAssignment {
    /// Train and validation together: the default distillation target set.
    pub fn train_valid(&self) -> Vec<usize> {
        let mut out = self.train.clone();
        out.extend_from_slice(&self.valid);
        out
    }
}

// --- disk formats -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    relation: String,
    src: String,
    dst: String,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(line);
        } else {
            // keep numbering consistent for error messages
            let _ = lineno;
        }
    }
    Ok(out)
}

/// Loads a dataset directory: `users.jsonl` + `schema.json` (+ `edges.jsonl`).
///
/// Unknown label strings, duplicate ids, schema mismatches, and edges that
/// name absent users are data errors identifying the offending line.
pub fn load_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let schema_path = dir.join("schema.json");
    let schema_file = File::open(&schema_path).map_err(|e| Error::io(&schema_path, e))?;
    let schema: Vec<String> = serde_json::from_reader(BufReader::new(schema_file))
        .map_err(|e| Error::Data(format!("{}: {e}", schema_path.display())))?;

    let users_path = dir.join("users.jsonl");
    let mut records = Vec::new();
    for (i, line) in read_lines(&users_path)?.iter().enumerate() {
        let rec: UserRecord = serde_json::from_str(line).map_err(|e| {
            Error::Data(format!("{} line {}: {e}", users_path.display(), i + 1))
        })?;
        records.push(rec);
    }

    let edges_path = dir.join("edges.jsonl");
    let graph = if edges_path.exists() {
        let ids: HashMap<&str, usize> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.user_id.as_str(), i))
            .collect();
        let mut relations: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (i, line) in read_lines(&edges_path)?.iter().enumerate() {
            let row: EdgeRow = serde_json::from_str(line).map_err(|e| {
                Error::Data(format!("{} line {}: {e}", edges_path.display(), i + 1))
            })?;
            let src = *ids.get(row.src.as_str()).ok_or_else(|| {
                Error::Data(format!(
                    "{} line {}: unknown src user {}",
                    edges_path.display(),
                    i + 1,
                    row.src
                ))
            })?;
            let dst = *ids.get(row.dst.as_str()).ok_or_else(|| {
                Error::Data(format!(
                    "{} line {}: unknown dst user {}",
                    edges_path.display(),
                    i + 1,
                    row.dst
                ))
            })?;
            relations.entry(row.relation).or_default().push((src, dst));
        }
        Some(HeteroGraph { relations })
    } else {
        None
    };

    let dataset = Dataset { name: name.to_string(), records, graph, schema };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes `users.jsonl`, `schema.json`, and `edges.jsonl` (when a graph is
/// present) under `dir`. Round-trips through [`load_dataset`].
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let schema_path = dir.join("schema.json");
    let schema_json = serde_json::to_string_pretty(&dataset.schema)
        .map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&schema_path, schema_json).map_err(|e| Error::io(&schema_path, e))?;

    let users_path = dir.join("users.jsonl");
    let mut w = BufWriter::new(File::create(&users_path).map_err(|e| Error::io(&users_path, e))?);
    for rec in &dataset.records {
        let line = serde_json::to_string(rec).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&users_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&users_path, e))?;

    if let Some(graph) = &dataset.graph {
        let edges_path = dir.join("edges.jsonl");
        let mut w =
            BufWriter::new(File::create(&edges_path).map_err(|e| Error::io(&edges_path, e))?);
        for (relation, edges) in &graph.relations {
            for &(src, dst) in edges {
                let row = EdgeRow {
                    relation: relation.clone(),
                    src: dataset.records[src].user_id.clone(),
                    dst: dataset.records[dst].user_id.clone(),
                };
                let line = serde_json::to_string(&row).map_err(|e| Error::Data(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| Error::io(&edges_path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&edges_path, e))?;
    }
    Ok(())
}

/// Splits labeled records into train/valid/test by integer ratios.
///
/// The labeled indices are shuffled with a seeded stream, then cut at
/// `floor(n * r / sum)` for train and valid; the remainder is test. Every
/// part must end up nonempty.
pub fn split_dataset(
    dataset: &Dataset,
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<SplitAssignment> {
    let (r_train, r_valid, r_test) = ratios;
    let total = u64::from(r_train) + u64::from(r_valid) + u64::from(r_test);
    if r_train == 0 || r_valid == 0 || r_test == 0 {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }

    let mut labeled = dataset.labeled_indices();
    let n = labeled.len();
    let mut rng = rng::stream(seed, "split", 0);
    labeled.shuffle(&mut rng);

    let n_train = (n as u64 * u64::from(r_train) / total) as usize;
    let n_valid = (n as u64 * u64::from(r_valid) / total) as usize;
    let train: Vec<usize> = labeled[..n_train].to_vec();
    let valid: Vec<usize> = labeled[n_train..n_train + n_valid].to_vec();
    let test: Vec<usize> = labeled[n_train + n_valid..].to_vec();

    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(Error::Data(format!(
            "{n} labeled records cannot fill a {ratios:?} split; every part must be nonempty"
        )));
    }
    Ok(SplitAssignment { train, valid, test, seed })
}

/// Persists a split as `split_<seed>.json` under `dir`.
pub fn save_split(split: &SplitAssignment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("split_{}.json", split.seed));
    let json = serde_json::to_string_pretty(split).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_split(dir: &Path, seed: u64) -> Result<SplitAssignment> {
    let path = dir.join(format!("split_{seed}.json"));
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Keeps `ceil(fraction * |train|)` training labels, sampled uniformly with
/// a seeded stream. Validation and test are untouched.
pub fn trim_labels(split: &SplitAssignment, fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("label fraction must be in (0, 1], got {fraction}")));
    }
    let keep = (fraction * split.train.len() as f64).ceil() as usize;
    let mut order: Vec<usize> = split.train.clone();
    let mut rng = rng::stream(seed, "trim_labels", 0);
    order.shuffle(&mut rng);
    let mut train: Vec<usize> = order.into_iter().take(keep).collect();
    train.sort_unstable();
    Ok(SplitAssignment {
        train,
        valid: split.valid.clone(),
        test: split.test.clone(),
        seed: split.seed,
    })
}

/// Keeps `ceil(fraction * |edges|)` edges of every relation independently,
/// sampled uniformly with a per-relation seeded stream.
pub fn trim_edges(graph: &HeteroGraph, fraction: f64, seed: u64) -> Result<HeteroGraph> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("edge fraction must be in (0, 1], got {fraction}")));
    }
    let mut relations = BTreeMap::new();
    for (name, edges) in &graph.relations {
        let keep = (fraction * edges.len() as f64).ceil() as usize;
        let mut idx: Vec<usize> = (0..edges.len()).collect();
        let mut rng = rng::stream(seed, &format!("trim_edges:{name}"), 0);
        idx.shuffle(&mut rng);
        let mut chosen: Vec<usize> = idx.into_iter().take(keep).collect();
        chosen.sort_unstable();
        relations.insert(name.clone(), chosen.into_iter().map(|i| edges[i]).collect());
    }
    Ok(HeteroGraph { relations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize, labeled: usize) -> Dataset {
        let records = (0..n)
            .map(|i| UserRecord {
                user_id: format!("u{i:04}"),
                metadata: vec![("followers".into(), format!("{i}"))],
                description: String::new(),
                tweets: vec![],
                label: if i < labeled {
                    Some(if i % 2 == 0 { Label::Bot } else { Label::Human })
                } else {
                    None
                },
            })
            .collect();
        Dataset {
            name: "toy".into(),
            records,
            graph: None,
            schema: vec!["followers".into()],
        }
    }

    #[test]
    fn split_sizes_follow_ratio_arithmetic() {
        // 100 labeled at 1:1:8 -> (10, 10, 80)
        let ds = toy_dataset(120, 100);
        let split = split_dataset(&ds, (1, 1, 8), 7).unwrap();
        assert_eq!(split.train.len(), 10);
        assert_eq!(split.valid.len(), 10);
        assert_eq!(split.test.len(), 80);
    }

    #[test]
    fn split_parts_partition_labeled_set() {
        let ds = toy_dataset(60, 41);
        let split = split_dataset(&ds, (1, 1, 8), 3).unwrap();
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        let mut labeled = ds.labeled_indices();
        labeled.sort_unstable();
        assert_eq!(all, labeled);
        // unlabeled never appear
        assert!(all.iter().all(|&i| ds.records[i].label.is_some()));
    }

    #[test]
    fn split_is_deterministic_across_seeds() {
        let ds = toy_dataset(80, 50);
        for seed in 0..100 {
            let a = split_dataset(&ds, (1, 1, 8), seed).unwrap();
            let b = split_dataset(&ds, (1, 1, 8), seed).unwrap();
            assert_eq!(a, b, "seed {seed}");
        }
    }

    #[test]
    fn split_rejects_too_few_labeled() {
        let ds = toy_dataset(10, 2);
        assert!(split_dataset(&ds, (1, 1, 8), 0).is_err());
    }

    #[test]
    fn trim_labels_keeps_ceil_and_subset() {
        let ds = toy_dataset(120, 100);
        let split = split_dataset(&ds, (1, 1, 8), 7).unwrap();
        for (fraction, expect) in [(0.3, 3), (0.05, 1), (1.0, 10)] {
            let trimmed = trim_labels(&split, fraction, 11).unwrap();
            assert_eq!(trimmed.train.len(), expect, "fraction {fraction}");
            assert!(trimmed.train.iter().all(|i| split.train.contains(i)));
            assert_eq!(trimmed.valid, split.valid);
            assert_eq!(trimmed.test, split.test);
        }
    }

    #[test]
    fn trim_edges_keeps_ceil_per_relation() {
        let mut relations = BTreeMap::new();
        relations.insert("follows".to_string(), (0..10).map(|i| (i, (i + 1) % 10)).collect());
        relations.insert("mentions".to_string(), (0..4).map(|i| (i, i + 1)).collect());
        let graph = HeteroGraph { relations };
        let trimmed = trim_edges(&graph, 0.25, 5).unwrap();
        assert_eq!(trimmed.relations["follows"].len(), 3); // ceil(2.5)
        assert_eq!(trimmed.relations["mentions"].len(), 1);
        for name in ["follows", "mentions"] {
            for e in &trimmed.relations[name] {
                assert!(graph.relations[name].contains(e));
            }
        }
    }

    #[test]
    fn dataset_roundtrip_through_disk() {
        let mut ds = toy_dataset(12, 8);
        let mut relations = BTreeMap::new();
        relations.insert("follows".to_string(), vec![(0, 1), (1, 0), (2, 5)]);
        ds.graph = Some(HeteroGraph { relations });
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path(), "toy").unwrap();
        assert_eq!(back.records.len(), ds.records.len());
        for (a, b) in back.records.iter().zip(&ds.records) {
            assert_eq!(a.user_id, b.user_id);
            assert_eq!(a.metadata, b.metadata);
            assert_eq!(a.label, b.label);
        }
        assert_eq!(
            back.graph.as_ref().unwrap().relations,
            ds.graph.as_ref().unwrap().relations
        );
    }

    #[test]
    fn unknown_label_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("schema.json"), "[]").unwrap();
        std::fs::write(
            dir.path().join("users.jsonl"),
            concat!(
                r#"{"user_id":"a","metadata":[],"description":"","tweets":[]}"#,
                "\n",
                r#"{"user_id":"b","metadata":[],"description":"","tweets":[],"label":"cyborg"}"#,
                "\n"
            ),
        )
        .unwrap();
        let err = load_dataset(dir.path(), "bad").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "got: {msg}");
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("schema.json"), "[]").unwrap();
        std::fs::write(
            dir.path().join("users.jsonl"),
            concat!(r#"{"user_id":"a","metadata":[],"description":"","tweets":[]}"#, "\n"),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("edges.jsonl"),
            concat!(r#"{"relation":"follows","src":"a","dst":"ghost"}"#, "\n"),
        )
        .unwrap();
        let err = load_dataset(dir.path(), "bad").unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let mut ds = toy_dataset(3, 3);
        ds.records[1].metadata = vec![("following".into(), "5".into())];
        assert!(ds.validate().is_err());
    }
}
