use criterion::{criterion_group, criterion_main, Criterion};

use catvrnn::evaluation::{bleu_backward, bleu_forward, category_accuracy, perplexity, WordMembershipOracle};
use catvrnn::model::InitMode;
use catvrnn_bench::{fixture, token_corpus};

fn bleu(c: &mut Criterion) {
    let f = fixture(InitMode::Static, false);
    let corpus = token_corpus(&f);
    let (generated, training) = corpus.split_at(100);
    let mut group = c.benchmark_group("bleu");
    for n in [2, 5] {
        group.bench_function(format!("forward_{n}"), |b| b.iter(|| bleu_forward(generated, training, n).unwrap()));
        group.bench_function(format!("backward_{n}"), |b| b.iter(|| bleu_backward(generated, training, n).unwrap()));
    }
    group.finish();
}

fn perplexity_and_accuracy(c: &mut Criterion) {
    let f = fixture(InitMode::Static, false);
    c.bench_function("perplexity_400", |b| b.iter(|| perplexity(&f.model, &f.batch, 0).unwrap()));
    let oracle = WordMembershipOracle::from_corpus(&f.corpus);
    c.bench_function("oracle_accuracy_400", |b| b.iter(|| category_accuracy(f.corpus.sentences(), &oracle).unwrap()));
}

criterion_group!(benches, bleu, perplexity_and_accuracy);
criterion_main!(benches);
