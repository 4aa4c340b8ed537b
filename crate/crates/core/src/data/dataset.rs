use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose, NUM_JOINTS};

/// Action categories of the evaluation tables, in column order.
pub const CATEGORIES: [&str; 15] = [
    "Direct", "Discuss", "Eat", "Greet", "Phone", "Pose", "Purch", "Sit", "SitD", "Smoke", "TakeP", "Wait", "Walk",
    "WalkD", "WalkT",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub id: String,
    pub category: String,
    pub pose2d: Pose,
    /// World coordinates in millimeters, when known.
    pub pose3d: Option<Pose>,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Ingested { source: String },
    Synthetic { seed: u64 },
    Derived { from: Box<Provenance>, note: String },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Ingested { source } => write!(f, "ingested from {source}"),
            Provenance::Synthetic { seed } => write!(f, "synthetic (seed {seed})"),
            Provenance::Derived { from, note } => write!(f, "{note} of {from}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<PoseRecord>,
    pub provenance: Provenance,
}

/// One JSON Lines record.
#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    category: String,
    joints2d: Vec<Vec<f64>>,
    joints3d: Option<Vec<Vec<f64>>>,
}

fn parse_joints(rows: &[Vec<f64>], dim: usize) -> std::result::Result<Pose, String> {
    if rows.len() != NUM_JOINTS {
        return Err(format!("expected {NUM_JOINTS} joints, found {}", rows.len()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(format!("expected {dim} coordinates per joint, found {}", r.len()));
    }
    Pose::new(rows).map_err(|e| e.to_string())
}

impl Dataset {
    pub fn new(records: Vec<PoseRecord>, provenance: Provenance) -> Self {
        Dataset { records, provenance }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Whether every record carries a 3D pose.
    pub fn has_3d(&self) -> bool {
        self.records.iter().all(|r| r.pose3d.is_some())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| Error::Record { path: path.to_path_buf(), line: i + 1, message };
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
            let pose2d = parse_joints(&raw.joints2d, 2).map_err(|m| fail(format!("joints2d: {m}")))?;
            let pose3d = match &raw.joints3d {
                Some(rows) => Some(parse_joints(rows, 3).map_err(|m| fail(format!("joints3d: {m}")))?),
                None => None,
            };
            records.push(PoseRecord { id: raw.id, category: raw.category, pose2d, pose3d });
        }
        if records.is_empty() {
            log::warn!("{} holds no pose records", path.display());
        }
        Ok(Dataset { records, provenance: Provenance::Ingested { source: path.display().to_string() } })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            let raw = RawRecord {
                id: r.id.clone(),
                category: r.category.clone(),
                joints2d: r.pose2d.to_rows(),
                joints3d: r.pose3d.as_ref().map(Pose::to_rows),
            };
            out.push_str(&serde_json::to_string(&raw)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl()?.as_bytes())
    }
}

/// Seeded shuffle into 5/6 training and 1/6 test records.
pub fn split_dataset(dataset: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 6 {
        return Err(Error::invalid(format!("need at least 6 records to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = n * 5 / 6;
    let part = |idx: &[usize], note: &str| Dataset {
        records: idx.iter().map(|&i| dataset.records[i].clone()).collect(),
        provenance: Provenance::Derived {
            from: Box::new(dataset.provenance.clone()),
            note: format!("{note} split (seed {seed})"),
        },
    };
    Ok((part(&order[..cut], "train"), part(&order[cut..], "test")))
}
