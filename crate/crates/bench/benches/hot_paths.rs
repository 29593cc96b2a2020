use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use echonav::control::{run_episode, BaselineKind, Policy};
use echonav::env::{Cell, Heading, Pose, World};
use echonav::geodesy::{shortest_plan, DistanceField};
use echonav::harness::ExperimentConfig;
use echonav::lang::{encode_pathlet, parse, Kind};
use echonav::oracle::{Oracle, OracleConfig};

fn suite() -> Vec<World> {
    let cfg = ExperimentConfig {
        test_episodes_per_map: 2,
        train_episodes_per_map: 0,
        ..ExperimentConfig::default()
    };
    cfg.suite().expect("standard suite builds").test
}

fn planning(c: &mut Criterion) {
    let worlds = suite();
    let w = &worlds[0];
    let start = w.episode.start;
    let goal = w.goal();
    c.bench_function("distance_field", |b| {
        b.iter(|| DistanceField::from_cell(black_box(&w.map), black_box(goal)))
    });
    c.bench_function("shortest_plan", |b| {
        b.iter(|| shortest_plan(black_box(&w.map), black_box(start), black_box(goal)))
    });
}

fn language(c: &mut Criterion) {
    let text = "question forward 2 ; turn left ; forward 1 ; endpoint 2.23607 0.89443 0.44721";
    c.bench_function("parse_question", |b| b.iter(|| parse(black_box(text))));
    let actions = echonav::env::parse_action_string("FFLF").expect("valid actions");
    let pose = Pose::at(Cell::new(0, 0), Heading::East);
    c.bench_function("encode_pathlet", |b| {
        b.iter(|| encode_pathlet(black_box(&actions), pose, Kind::Question))
    });
}

fn episodes(c: &mut Criterion) {
    let worlds = suite();
    let cfg = ExperimentConfig::default().run_config();
    let mut group = c.benchmark_group("run_episode");
    for (name, policy) in [
        ("nav-only", Policy::NavOnly),
        ("uniform", Policy::Baseline(BaselineKind::Uniform)),
    ] {
        group.bench_function(name, |b| {
            let mut i = 0u64;
            b.iter(|| {
                let w = &worlds[i as usize % worlds.len()];
                i += 1;
                run_episode(
                    w,
                    &policy,
                    &mut Oracle::new(OracleConfig::default()),
                    &cfg,
                    i,
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, planning, language, episodes);
criterion_main!(benches);
