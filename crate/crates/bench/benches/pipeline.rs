use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use ikit_core::{build_index, cider, corpus_stats, mark_sequence, pack, topk, unpack, StatsOptions, WhitespaceTokenizer};

fn retrieval(c: &mut Criterion) {
    let index = build_index(ikit_bench::vectors(10_000, 128, 1)).unwrap();
    let query = ikit_bench::vectors(1, 128, 2).remove(0).1;
    let mut g = c.benchmark_group("topk");
    g.throughput(Throughput::Elements(index.len() as u64));
    for k in [4, 32] {
        g.bench_function(format!("n10000_d128_k{k}"), |b| b.iter(|| topk(&index, black_box(&query), k).unwrap()));
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let (cands, refs) = ikit_bench::captions(1_000, 3);
    c.bench_function("cider_1000_images", |b| b.iter(|| cider(black_box(&cands), &refs).unwrap()));
}

fn sequences(c: &mut Criterion) {
    let docs = ikit_bench::docs(1_000, 4);
    let tok = WhitespaceTokenizer::fit(docs.iter().flat_map(|d| d.spans.iter()));
    let mut g = c.benchmark_group("sequence");
    g.throughput(Throughput::Elements(docs.len() as u64));
    g.bench_function("mark_1000_docs", |b| b.iter(|| docs.iter().map(|d| mark_sequence(d, &tok).unwrap().len()).sum::<usize>()));
    g.finish();
}

fn curation(c: &mut Criterion) {
    let docs = ikit_bench::docs(10_000, 5);
    let tok = WhitespaceTokenizer::fit(docs.iter().flat_map(|d| d.spans.iter()));
    let mut g = c.benchmark_group("curation");
    g.sample_size(20);
    g.throughput(Throughput::Elements(docs.len() as u64));
    let sampled = StatsOptions { sample_size: Some(1_000), reject_single_prob: Some(0.5), ..Default::default() };
    g.bench_function("corpus_stats_10000", |b| b.iter(|| corpus_stats(docs.iter().cloned(), &tok, &StatsOptions::default()).unwrap()));
    g.bench_function("corpus_stats_10000_sampled", |b| b.iter(|| corpus_stats(docs.iter().cloned(), &tok, &sampled).unwrap()));
    g.finish();
}

fn shards(c: &mut Criterion) {
    let samples = ikit_bench::samples(1_000, 4096, 6);
    let mut g = c.benchmark_group("shard");
    g.sample_size(20);
    g.throughput(Throughput::Bytes(samples.len() as u64 * 4096));
    g.bench_function("pack_1000x4k", |b| {
        b.iter_batched(
            || tempfile::tempdir().unwrap(),
            |dir| pack(samples.iter().cloned(), 250, &dir.path().join("b")).unwrap(),
            BatchSize::PerIteration,
        )
    });
    let dir = tempfile::tempdir().unwrap();
    let set = pack(samples.iter().cloned(), 1_000, &dir.path().join("b")).unwrap();
    let path = set.paths().next().unwrap().to_path_buf();
    g.bench_function("unpack_1000x4k", |b| b.iter(|| unpack(&path).unwrap().len()));
    g.finish();
}

criterion_group!(benches, retrieval, metrics, sequences, curation, shards);
criterion_main!(benches);
