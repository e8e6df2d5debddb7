use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eqk::corpus::ClaimRecord;
use eqk::par::{self, Mode};
use eqk::promptgen::{find_template, select_few_shot_examples, FewShotOptions, StubBackend};
use eqk::textmetrics::SimilarityReport;

const WORDS: &[&str] = &[
    "oecd", "growth", "forecast", "treasury", "borrowing", "galileo", "brexit", "nhs", "waiting",
    "list", "million", "per", "cent", "trade", "deal", "britain", "climate", "summit", "coal",
];

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn records(n: usize) -> Vec<ClaimRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n)
        .map(|i| ClaimRecord {
            claim_id: format!("b{i:03}"),
            article_id: format!("a{}", i / 4),
            claim_text: sentence(&mut rng, 20),
            target_query: sentence(&mut rng, 4),
            target_url: format!("https://example.org/{i}"),
            context_sentences: None,
        })
        .collect()
}

fn modes() -> [(&'static str, Mode); 2] {
    [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)]
}

fn similarity(c: &mut Criterion) {
    let recs = records(2000);
    let mut g = c.benchmark_group("similarity_batch");
    for (name, mode) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| par::map(mode, &recs, |r| SimilarityReport::compute(&r.target_query, black_box(&r.claim_text))))
        });
    }
    g.finish();
}

fn few_shot(c: &mut Criterion) {
    let recs = records(40);
    let tpl = find_template("template-05").unwrap();
    let backend = StubBackend::default();
    let mut g = c.benchmark_group("few_shot_screening");
    g.sample_size(10);
    for (name, mode) in modes() {
        let opts = FewShotOptions {
            mode,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| select_few_shot_examples(&recs, &backend, &tpl, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, similarity, few_shot);
criterion_main!(benches);
