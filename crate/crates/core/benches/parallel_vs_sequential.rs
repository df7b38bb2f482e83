use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use proxsplit::certify::{property_suite, Subject, SuiteConfig};
use proxsplit::funcs::L1Norm;
use proxsplit::problems::fixtures;
use proxsplit::solvers::SolverConfig;

fn workloads() -> Vec<(&'static str, Box<dyn Fn() + Send + Sync>)> {
    let l1 = L1Norm::new(0.5).unwrap();
    let suite = SuiteConfig {
        dim: 256,
        trials: 2000,
        ..Default::default()
    };
    let denoise = fixtures::tv_denoise_8x8();
    let ppxa = denoise.recipe("ppxa").unwrap().clone();
    let cfg = SolverConfig::default().with_max_iter(200).with_keep_every(0);
    vec![
        ("property_suite_l1_256", Box::new(move || {
            black_box(property_suite(Subject::Prox(&l1), &suite));
        })),
        ("ppxa_tv_8x8", Box::new({
            let cfg = cfg.clone();
            move || {
                black_box(ppxa.run(&cfg).unwrap());
            }
        })),
        ("run_all_tv_8x8", Box::new(move || {
            black_box(denoise.run_all(&cfg, &BTreeMap::new()).unwrap());
        })),
    ]
}

fn parallel_vs_sequential(c: &mut Criterion) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    for (name, work) in workloads() {
        let mut group = c.benchmark_group(name);
        group.sample_size(10);
        group.bench_function("parallel", |b| b.iter(&work));
        group.bench_function("sequential", |b| b.iter(|| single.install(&work)));
        group.finish();
    }
}

criterion_group!(benches, parallel_vs_sequential);
criterion_main!(benches);
