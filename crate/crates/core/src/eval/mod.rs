//! Evaluation protocol: per-record recovery or 2D→3D prediction, scored
//! with the relative EDM error and aggregated per action category.

mod methods;
mod report;
mod sweep;

use std::time::Instant;

use rayon::prelude::*;

pub use methods::{Identity, Method, NetRecoverer, Pipeline, Recoverer, SparseRecoverer, StackedPipeline, TwoStage};
pub use report::{table_csv, timing_json, weighted_overall, EvalReport, GroupStat, SampleResult, TimingStats};
pub use sweep::{error_plot, sweep_sizes, time_plot, SweepRow};

use crate::data::{Dataset, OcclusionPlan};
use crate::edm::{assemble_final, edm_from_pose, vectorize, DistanceMatrix, EdmVector};
use crate::error::{Error, Result};
use crate::metrics::pose_error;
use crate::net::{Example, StackInput};
use crate::pose::{JointMask, Pose};
use crate::represent::{normalize_observed, represent_zero, Representation};

/// Complete 2D EDM a recovery is scored against.
///
/// For `zero` the whole pose goes through the similarity fixed by the
/// observed joints, so observed entries coincide exactly with the input. For
/// `average` the complete pose is normalized on its own, which is what the
/// scheme would produce without occlusion.
pub fn ground_truth_2d(representation: Representation, pose: &Pose, mask: &JointMask) -> Result<DistanceMatrix> {
    match representation {
        Representation::Zero => Ok(edm_from_pose(&normalize_observed(pose, mask)?)),
        Representation::Average => representation.build(pose, &JointMask::empty()),
    }
}

/// 3D EDM in meters.
pub fn edm_3d(pose: &Pose) -> DistanceMatrix {
    edm_from_pose(pose).scaled(1e-3).expect("a positive finite factor keeps the matrix valid")
}

fn pose3d(dataset: &Dataset, index: usize) -> Result<&Pose> {
    dataset.records[index]
        .pose3d
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("record {} has no 3D pose", dataset.records[index].id)))
}

fn check_plan(dataset: &Dataset, plan: &OcclusionPlan) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("nothing to evaluate: the dataset is empty"));
    }
    plan.check(dataset.len())
}

/// Scores `method` on every record under the plan's masks.
pub fn evaluate_recovery(method: &dyn Recoverer, dataset: &Dataset, plan: &OcclusionPlan) -> Result<EvalReport> {
    check_plan(dataset, plan)?;
    let rep = method.representation();
    let samples = dataset
        .records
        .par_iter()
        .zip(&plan.masks)
        .enumerate()
        .map(|(index, (rec, mask))| {
            let input = rep.build(&rec.pose2d, mask)?;
            let gt = ground_truth_2d(rep, &rec.pose2d, mask)?;
            let start = Instant::now();
            let recovered = method.recover(index, &input, mask)?;
            let fin = assemble_final(&input, &recovered, mask)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(SampleResult {
                index,
                id: rec.id.clone(),
                category: rec.category.clone(),
                occluded: mask.len(),
                err_ave: pose_error(&fin, &gt)?,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_samples(&method.label(), &plan.regime.label(), "2d", &dataset.provenance.to_string(), samples))
}

/// Scores the 3D EDMs predicted from occluded 2D input.
pub fn evaluate_pipeline(pipeline: &dyn Pipeline, dataset: &Dataset, plan: &OcclusionPlan) -> Result<EvalReport> {
    check_plan(dataset, plan)?;
    let rep = pipeline.representation();
    let samples = dataset
        .records
        .par_iter()
        .zip(&plan.masks)
        .enumerate()
        .map(|(index, (rec, mask))| {
            let gt = edm_3d(pose3d(dataset, index)?);
            let input = rep.build(&rec.pose2d, mask)?;
            let start = Instant::now();
            let predicted = pipeline.predict_3d(index, &input, mask)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(SampleResult {
                index,
                id: rec.id.clone(),
                category: rec.category.clone(),
                occluded: mask.len(),
                err_ave: pose_error(&predicted, &gt)?,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_samples(
        &pipeline.label(),
        &plan.regime.label(),
        "3d",
        &dataset.provenance.to_string(),
        samples,
    ))
}

/// Complete normalized 2D EDMs as dictionary training vectors.
pub fn dictionary_samples(dataset: &Dataset) -> Result<Vec<EdmVector>> {
    dataset.records.par_iter().map(|r| Ok(vectorize(&represent_zero(&r.pose2d, &JointMask::empty())?))).collect()
}

/// (occluded 2D EDM, complete 2D EDM) pairs for a recovery network.
pub fn recovery_examples(
    dataset: &Dataset,
    plan: &OcclusionPlan,
    representation: Representation,
) -> Result<Vec<Example<Vec<f64>>>> {
    plan.check(dataset.len())?;
    dataset
        .records
        .par_iter()
        .zip(&plan.masks)
        .map(|(r, mask)| {
            Ok(Example {
                input: representation.build(&r.pose2d, mask)?.into_vec(),
                target: ground_truth_2d(representation, &r.pose2d, mask)?.into_vec(),
            })
        })
        .collect()
}

/// (complete normalized 2D EDM, 3D EDM in meters) pairs for the regressor.
pub fn regression_examples(dataset: &Dataset) -> Result<Vec<Example<Vec<f64>>>> {
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            Ok(Example {
                input: represent_zero(&dataset.records[i].pose2d, &JointMask::empty())?.into_vec(),
                target: edm_3d(pose3d(dataset, i)?).into_vec(),
            })
        })
        .collect()
}

/// (occluded 2D EDM with its mask, 3D EDM in meters) pairs for end-to-end
/// fine-tuning.
pub fn stack_examples(
    dataset: &Dataset,
    plan: &OcclusionPlan,
    representation: Representation,
) -> Result<Vec<Example<StackInput>>> {
    plan.check(dataset.len())?;
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let mask = plan.masks[i].clone();
            Ok(Example {
                input: StackInput { edm: representation.build(&dataset.records[i].pose2d, &mask)?, mask },
                target: edm_3d(pose3d(dataset, i)?).into_vec(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_occlusions, synth_poses, Camera, Regime, CATEGORIES};
    use crate::net::{net_init, NetConfig};

    /// Returns the true complete matrix for each record.
    struct Oracle(Vec<DistanceMatrix>);

    impl Recoverer for Oracle {
        fn label(&self) -> String {
            "oracle".into()
        }
        fn representation(&self) -> Representation {
            Representation::Zero
        }
        fn recover(&self, index: usize, _: &DistanceMatrix, _: &JointMask) -> Result<DistanceMatrix> {
            Ok(self.0[index].clone())
        }
    }

    struct Oracle3d(Vec<DistanceMatrix>);

    impl Pipeline for Oracle3d {
        fn label(&self) -> String {
            "oracle".into()
        }
        fn representation(&self) -> Representation {
            Representation::Zero
        }
        fn predict_3d(&self, index: usize, _: &DistanceMatrix, _: &JointMask) -> Result<DistanceMatrix> {
            Ok(self.0[index].clone())
        }
    }

    fn data() -> (Dataset, OcclusionPlan) {
        let d = synth_poses(120, 3, &Camera::default()).unwrap();
        let p = sample_occlusions(&d, Regime::Mixed, 4).unwrap();
        (d, p)
    }

    #[test]
    fn oracle_scores_zero() {
        let (d, p) = data();
        let gts = d
            .records
            .iter()
            .zip(&p.masks)
            .map(|(r, m)| ground_truth_2d(Representation::Zero, &r.pose2d, m).unwrap())
            .collect();
        let r = evaluate_recovery(&Oracle(gts), &d, &p).unwrap();
        assert_eq!(r.overall, 0.0);
        assert_eq!(r.variance, 0.0);
        assert_eq!(r.categories.len(), CATEGORIES.len());
        let gts3 = d.records.iter().map(|r| edm_3d(r.pose3d.as_ref().unwrap())).collect();
        assert_eq!(evaluate_pipeline(&Oracle3d(gts3), &d, &p).unwrap().overall, 0.0);
    }

    #[test]
    fn zero_ground_truth_matches_observed_input() {
        let (d, p) = data();
        for (r, m) in d.records.iter().zip(&p.masks) {
            let input = represent_zero(&r.pose2d, m).unwrap();
            let gt = ground_truth_2d(Representation::Zero, &r.pose2d, m).unwrap();
            for i in m.observed(14) {
                for j in m.observed(14) {
                    assert_eq!(input.get(i, j).to_bits(), gt.get(i, j).to_bits());
                }
            }
        }
    }

    #[test]
    fn identity_baseline_and_overall_weighting() {
        let (d, p) = data();
        let r = evaluate_recovery(&Identity { representation: Representation::Zero }, &d, &p).unwrap();
        assert!(r.overall > 0.0);
        assert_eq!(r.overall, weighted_overall(&r.categories));
        assert_eq!(r.samples.len(), d.len());
        assert!(r.variance >= 0.0);
    }

    #[test]
    fn plan_must_match() {
        let (d, p) = data();
        let short = OcclusionPlan { masks: p.masks[..10].to_vec(), ..p };
        assert!(evaluate_recovery(&Identity { representation: Representation::Zero }, &d, &short).is_err());
    }

    #[test]
    fn pipeline_requires_3d() {
        let (mut d, p) = data();
        d.records[5].pose3d = None;
        let net = net_init(NetConfig::with_channels(2), 0).unwrap();
        let id = Identity { representation: Representation::Zero };
        assert!(evaluate_pipeline(&TwoStage { recoverer: &id, regressor: &net }, &d, &p).is_err());
        assert!(regression_examples(&d).is_err());
    }

    #[test]
    fn example_builders() {
        let (d, p) = data();
        let rec = recovery_examples(&d, &p, Representation::Average).unwrap();
        assert_eq!(rec.len(), d.len());
        assert!(rec.iter().all(|e| e.input.len() == 196 && e.target.len() == 196));
        let reg = regression_examples(&d).unwrap();
        // 3D distances are in meters: a forearm is 0.25
        assert!((reg[0].target[3 * 14 + 4] - 0.25).abs() < 1e-9);
        assert_eq!(stack_examples(&d, &p, Representation::Zero).unwrap().len(), d.len());
        assert_eq!(dictionary_samples(&d).unwrap()[0].len(), 91);
    }
}
