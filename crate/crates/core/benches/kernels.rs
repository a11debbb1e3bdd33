//! Data-parallel kernels vs their sequential fallbacks, plus end-to-end
//! protocol baselines. With `--no-default-features` the parallel variants
//! degrade to the sequential path, so the comparison collapses to parity.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use secrel::oblivious::{bitonic_sort, SharedSeq, SortKey, SortOrder};
use secrel::relational::{binary_join, ColData, Column, PayloadSel, SharedTable};
use secrel::ring::FixedPoint;
use secrel::sharing::PartyCtx;
use secrel::transport::{run_protocol, Mode, Wire};
use std::hint::black_box;

fn vecs(n: usize) -> (Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    (
        (0..n).map(|_| rng.random()).collect(),
        (0..n).map(|_| rng.random()).collect(),
    )
}

fn beaver_combine(c: &mut Criterion) {
    let n = 1 << 20;
    let (a, b) = vecs(n);
    let f = |x: u64, y: u64| x.wrapping_mul(y).wrapping_add(x.rotate_left(17) ^ y);
    let mut g = c.benchmark_group("beaver_combine_1m");
    g.bench_function("parallel", |bench| {
        bench.iter(|| black_box(secrel::par::map2(&a, &b, f)))
    });
    g.bench_function("sequential", |bench| {
        bench.iter(|| black_box(secrel::par::map2_seq(&a, &b, f)))
    });
    g.finish();
}

fn kogge_stone_layer(c: &mut Criterion) {
    let n = 1 << 20;
    let (g1, p1) = vecs(n);
    let f = |g: u64, p: u64| g ^ (p & (g << 8));
    let mut grp = c.benchmark_group("prefix_layer_1m");
    grp.bench_function("parallel", |bench| {
        bench.iter(|| black_box(secrel::par::map2(&g1, &p1, f)))
    });
    grp.bench_function("sequential", |bench| {
        bench.iter(|| black_box(secrel::par::map2_seq(&g1, &p1, f)))
    });
    grp.finish();
}

fn fixed_point_codec(c: &mut Criterion) {
    let fp = FixedPoint::default();
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let xs: Vec<f64> = (0..1 << 18)
        .map(|_| rng.random_range(-100.0..100.0))
        .collect();
    c.bench_function("fixed_encode_256k", |bench| {
        bench.iter(|| {
            let enc: Vec<u64> = xs.iter().map(|&x| fp.encode(x)).collect();
            black_box(enc)
        })
    });
}

fn protocol_sort_512(c: &mut Criterion) {
    c.bench_function("bitonic_sort_512_inproc", |bench| {
        bench.iter_batched(
            || (),
            |_| {
                let run = |w: &mut Wire| {
                    let mut ctx = PartyCtx::new(w, 5, FixedPoint::default());
                    let mut rng = ChaCha12Rng::seed_from_u64(3);
                    let data: Vec<u64> = (0..512).map(|_| rng.random()).collect();
                    let seq = SharedSeq::from_rows(1, data);
                    let sorted = bitonic_sort(
                        &mut ctx,
                        &seq,
                        &[SortKey {
                            col: 0,
                            order: SortOrder::Asc,
                        }],
                    )?;
                    Ok(black_box(sorted.data.len()))
                };
                run_protocol(Mode::InProcess, run, run).unwrap()
            },
            BatchSize::PerIteration,
        )
    });
}

fn protocol_join_256(c: &mut Criterion) {
    c.bench_function("binary_join_256_inproc", |bench| {
        bench.iter_batched(
            || (),
            |_| {
                let run = |w: &mut Wire| {
                    let mut ctx = PartyCtx::new(w, 6, FixedPoint::default());
                    let mut rng = ChaCha12Rng::seed_from_u64(4);
                    let n = 256usize;
                    let me = ctx.party();
                    let mk_col = |owner: u8, vals: Vec<u64>| ColData::Plain {
                        owner,
                        vals: if me == owner { vals } else { Vec::new() },
                    };
                    let r = SharedTable {
                        name: "r".into(),
                        rows: n,
                        pk: Some("rid".into()),
                        cols: vec![
                            Column {
                                name: "rid".into(),
                                data: mk_col(0, (0..n as u64).collect()),
                            },
                            Column {
                                name: "b".into(),
                                data: mk_col(
                                    0,
                                    (0..n).map(|_| rng.random_range(0..n as u64)).collect(),
                                ),
                            },
                        ],
                        indicator: None,
                    };
                    let s = SharedTable {
                        name: "s".into(),
                        rows: n,
                        pk: Some("b".into()),
                        cols: vec![
                            Column {
                                name: "b".into(),
                                data: mk_col(1, (0..n as u64).collect()),
                            },
                            Column {
                                name: "c".into(),
                                data: mk_col(1, (0..n).map(|_| rng.random_range(0..999)).collect()),
                            },
                        ],
                        indicator: None,
                    };
                    let out = binary_join(&mut ctx, &r, "b", &s, PayloadSel::Full, 9)?;
                    Ok(black_box(out.rows))
                };
                run_protocol(Mode::InProcess, run, run).unwrap()
            },
            BatchSize::PerIteration,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = beaver_combine, kogge_stone_layer, fixed_point_codec, protocol_sort_512, protocol_join_256
}
criterion_main!(benches);
