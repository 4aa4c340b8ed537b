use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pose::{JointMask, NUM_JOINTS};

pub const PLAN_FORMAT: &str = "edmrec-occlusions";
pub const PLAN_FORMAT_VERSION: u32 = 1;

/// How many joints each record loses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Fixed(usize),
    /// 1, 2 or 3 joints, drawn uniformly per record.
    Mixed,
}

impl Regime {
    fn validate(self) -> Result<()> {
        match self {
            // at least two joints must stay visible for normalization
            Regime::Fixed(m) if m == 0 || m > NUM_JOINTS - 2 => {
                Err(Error::invalid(format!("cannot occlude {m} of {NUM_JOINTS} joints")))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in report rows: `1mis`, `2mis`, `Mix`.
    pub fn label(self) -> String {
        match self {
            Regime::Fixed(m) => format!("{m}mis"),
            Regime::Mixed => "Mix".into(),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Fixed(m) => write!(f, "{m}"),
            Regime::Mixed => f.write_str("mixed"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mixed") || s.eq_ignore_ascii_case("mix") {
            return Ok(Regime::Mixed);
        }
        let m: usize =
            s.parse().map_err(|_| Error::invalid(format!("regime must be a joint count or 'mixed', got '{s}'")))?;
        let r = Regime::Fixed(m);
        r.validate()?;
        Ok(r)
    }
}

/// One mask per dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionPlan {
    pub regime: Regime,
    pub seed: u64,
    pub masks: Vec<JointMask>,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    format: String,
    format_version: u32,
    library_version: String,
    #[serde(flatten)]
    plan: OcclusionPlan,
}

/// Uniformly chosen occluded joints, distinct within each record.
pub fn sample_occlusions(dataset: &Dataset, regime: Regime, seed: u64) -> Result<OcclusionPlan> {
    sample_masks(dataset.len(), regime, seed)
}

pub fn sample_masks(count: usize, regime: Regime, seed: u64) -> Result<OcclusionPlan> {
    regime.validate()?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let masks = (0..count)
        .map(|_| {
            let m = match regime {
                Regime::Fixed(m) => m,
                Regime::Mixed => r.random_range(1..=3),
            };
            JointMask::new(rand::seq::index::sample(&mut r, NUM_JOINTS, m), NUM_JOINTS)
        })
        .collect::<Result<_>>()?;
    Ok(OcclusionPlan { regime, seed, masks })
}

impl OcclusionPlan {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Checks the plan against a dataset of `records` poses.
    pub fn check(&self, records: usize) -> Result<()> {
        if self.masks.len() != records {
            return Err(Error::invalid(format!("plan has {} masks for {records} records", self.masks.len())));
        }
        for m in &self.masks {
            m.validate(NUM_JOINTS)?;
            let ok = match self.regime {
                Regime::Fixed(k) => m.len() == k,
                Regime::Mixed => (1..=3).contains(&m.len()),
            };
            if !ok {
                return Err(Error::invalid(format!("mask of size {} does not fit regime {}", m.len(), self.regime)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PlanFile {
            format: PLAN_FORMAT.into(),
            format_version: PLAN_FORMAT_VERSION,
            library_version: crate::VERSION.into(),
            plan: self.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PlanFile = serde_json::from_str(text)?;
        if file.format != PLAN_FORMAT || file.format_version != PLAN_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {PLAN_FORMAT} version {PLAN_FORMAT_VERSION}, found {} version {} (written by {})",
                file.format, file.format_version, file.library_version
            )));
        }
        Ok(file.plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_sizes_and_seeding() {
        let p = sample_masks(500, Regime::Fixed(3), 2).unwrap();
        assert!(p.masks.iter().all(|m| m.len() == 3));
        assert_eq!(p, sample_masks(500, Regime::Fixed(3), 2).unwrap());
        assert_ne!(p, sample_masks(500, Regime::Fixed(3), 3).unwrap());
        p.check(500).unwrap();
        assert!(p.check(499).is_err());
    }

    #[test]
    fn mixed_uses_all_sizes() {
        let p = sample_masks(3000, Regime::Mixed, 5).unwrap();
        for m in 1..=3 {
            let share = p.masks.iter().filter(|k| k.len() == m).count() as f64 / 3000.0;
            assert!((share - 1.0 / 3.0).abs() < 0.03, "{m}: {share}");
        }
    }

    #[test]
    fn single_occlusions_are_uniform() {
        let p = sample_masks(10_000, Regime::Fixed(1), 11).unwrap();
        let mut counts = [0usize; NUM_JOINTS];
        for m in &p.masks {
            counts[m.occluded().next().unwrap()] += 1;
        }
        let expected = 10_000.0 / NUM_JOINTS as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 13 degrees of freedom, 0.999 quantile
        assert!(chi2 < 34.5, "chi2 {chi2}");
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0 / 14.0).abs() <= 0.01);
        }
    }

    #[test]
    fn plan_file_round_trip() {
        let p = sample_masks(20, Regime::Mixed, 1).unwrap();
        assert_eq!(OcclusionPlan::from_json(&p.to_json().unwrap()).unwrap(), p);
        let bumped = p.to_json().unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(OcclusionPlan::from_json(&bumped).is_err());
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("mixed".parse::<Regime>().unwrap(), Regime::Mixed);
        assert_eq!("2".parse::<Regime>().unwrap(), Regime::Fixed(2));
        assert!("0".parse::<Regime>().is_err());
        assert!("13".parse::<Regime>().is_err());
        assert_eq!(Regime::Fixed(1).label(), "1mis");
    }
}
