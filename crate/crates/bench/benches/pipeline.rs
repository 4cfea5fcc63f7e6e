use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use erpchat_bench::{reasoner_reply, transcript, SELECTS};
use erpchat_core::extract::parse_fences;
use erpchat_core::fixture;
use erpchat_core::llm::estimate_tokens;
use erpchat_core::sandbox::{validate_select, Dialect};
use erpchat_core::schema::IntrospectOptions;

fn validator(c: &mut Criterion) {
    let mut group = c.benchmark_group("validate_select");
    for (name, sql) in SELECTS {
        group.bench_with_input(BenchmarkId::from_parameter(name), sql, |b, sql| {
            b.iter(|| validate_select(black_box(sql), Dialect::Sqlite).unwrap())
        });
    }
    group.bench_function("rejected_delete", |b| {
        b.iter(|| validate_select(black_box("DELETE FROM T_A WHERE idA = 1"), Dialect::Sqlite).unwrap_err())
    });
    group.finish();
}

fn fences(c: &mut Criterion) {
    let mut group = c.benchmark_group("parse_fences");
    for blocks in [1, 4, 16] {
        let doc = reasoner_reply(blocks);
        group.bench_with_input(BenchmarkId::from_parameter(blocks), &doc, |b, doc| b.iter(|| parse_fences(black_box(doc))));
    }
    group.finish();
}

fn schema(c: &mut Criterion) {
    let db = fixture::database().unwrap();
    let options = IntrospectOptions::default();
    c.bench_function("schema_document", |b| b.iter(|| fixture::schema_document(&db, &options).unwrap()));
}

fn tokens(c: &mut Criterion) {
    let messages = transcript(5);
    c.bench_function("estimate_tokens", |b| b.iter(|| estimate_tokens(black_box(&messages))));
}

criterion_group!(benches, validator, fences, schema, tokens);
criterion_main!(benches);
