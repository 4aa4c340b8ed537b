use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edmrec::data::{synth_poses, Camera};
use edmrec::net::{net_init, NetConfig};
use edmrec::{edm_from_pose, recover_sparse, represent_zero, Dictionary, JointMask, LassoOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dictionary(k: usize, seed: u64) -> Dictionary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = (0..91 * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    Dictionary::normalized(91, atoms).unwrap()
}

fn edm(c: &mut Criterion) {
    let poses = synth_poses(64, 1, &Camera::default()).unwrap();
    c.bench_function("edm_from_pose/64", |b| {
        b.iter(|| {
            for r in &poses.records {
                black_box(edm_from_pose(black_box(&r.pose2d)));
            }
        })
    });
}

fn lasso(c: &mut Criterion) {
    let poses = synth_poses(1, 2, &Camera::default()).unwrap();
    let pose = &poses.records[0].pose2d;
    let mut group = c.benchmark_group("recover_sparse");
    for k in [128, 256, 512] {
        let dict = random_dictionary(k, 7);
        for missing in [1usize, 3] {
            let mask = JointMask::new((0..missing).map(|i| 3 * i + 1), 14).unwrap();
            let input = represent_zero(pose, &mask).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("k{k}"), missing), &input, |b, input| {
                b.iter(|| recover_sparse(input, &mask, &dict, 0.1, &LassoOptions::default()).unwrap())
            });
        }
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let poses = synth_poses(1, 3, &Camera::default()).unwrap();
    let input = edm_from_pose(&poses.records[0].pose2d);
    let mut group = c.benchmark_group("net_forward");
    for channels in [16, 64] {
        let params = net_init(NetConfig::with_channels(channels), 0).unwrap();
        group.bench_function(BenchmarkId::from_parameter(channels), |b| {
            b.iter(|| params.forward(black_box(&input)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, edm, lasso, forward);
criterion_main!(benches);
