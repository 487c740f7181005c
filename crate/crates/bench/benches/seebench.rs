use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seebench::classify::{chip_status, detect_reset_runs, ResetLog, RunParams};
use seebench::io::{load_preset, load_reference_tables, parse_telemetry, write_telemetry, TelemetryHeader};
use seebench::physics::{dose_gy, event_rate, expected_mission_events, mean_period, mission_seconds, sel_fw_cross_section};
use seebench::simulator::{draw_event_times, run_campaign, run_campaign_with, Recording};
use seebench::{traces, verify};

fn physics(c: &mut Criterion) {
    c.bench_function("physics/ion_row", |b| {
        b.iter(|| {
            let sigma = sel_fw_cross_section(black_box(0), black_box(816), black_box(1.01e7)).unwrap();
            let rate = event_rate(sigma, black_box(1.68e3)).unwrap();
            let period = mean_period(rate).unwrap();
            let dose = dose_gy(black_box(1.01e7), black_box(45.0)).unwrap();
            let n = expected_mission_events(rate, mission_seconds(3.0)).unwrap();
            (period, dose, n)
        })
    });
    let tables = load_reference_tables().unwrap();
    c.bench_function("verify/reference_tables", |b| {
        b.iter(|| verify::verify(black_box(&tables), &verify::Tolerances::default()))
    });
}

fn sampling(c: &mut Criterion) {
    c.bench_function("draw_event_times/0.135Hz_6000s", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(7),
            |mut rng| draw_event_times(black_box(0.135), 0.0, 6000.0, &mut rng),
            BatchSize::SmallInput,
        )
    });
}

fn campaigns(c: &mut Criterion) {
    let st01 = load_preset("ST01").unwrap();
    let mut group = c.benchmark_group("campaign");
    group.sample_size(20);
    group.bench_function("ST01_events_only", |b| {
        b.iter(|| run_campaign_with(black_box(&st01), Recording::EventsOnly).unwrap())
    });
    let mut short = st01.clone();
    short.total_duration = 600.0;
    group.bench_function("600s_full_telemetry", |b| b.iter(|| run_campaign(black_box(&short)).unwrap()));
    group.finish();
}

fn classification(c: &mut Criterion) {
    let windows = traces::test_windows(0.0, 50_000.0, 40.0, 40.0);
    let tail: Vec<(f64, f64)> = windows.iter().copied().filter(|w| w.0 >= 25_000.0).collect();
    let resets = traces::merge(&traces::scattered(0.0, 25_000.0, 400), &traces::bunched(&tail, 7.0, 6.8));
    c.bench_function("detect_reset_runs/2000_resets", |b| {
        b.iter(|| detect_reset_runs(black_box(&resets), 7.0, 1.0, 5).unwrap())
    });
    let log = ResetLog::new(resets.clone(), windows, (0.0, 50_000.0));
    c.bench_function("chip_status/50000s", |b| {
        b.iter(|| chip_status(black_box(&log), None, &RunParams::default()).unwrap())
    });
}

fn telemetry_io(c: &mut Criterion) {
    let mut cfg = load_preset("ST01").unwrap();
    cfg.total_duration = 600.0;
    let run = run_campaign(&cfg).unwrap();
    let header = TelemetryHeader::new("ST01", "bench", cfg.tick, "2021-04-27T09:00:00Z");
    let mut text = Vec::new();
    write_telemetry(&run.telemetry, &header, &mut text).unwrap();

    let mut group = c.benchmark_group("telemetry");
    group.throughput(criterion::Throughput::Bytes(text.len() as u64));
    group.bench_function("write_6000_records", |b| {
        b.iter(|| {
            let mut buf = Vec::with_capacity(text.len());
            write_telemetry(black_box(&run.telemetry), &header, &mut buf).unwrap();
            buf
        })
    });
    group.bench_function("parse_6000_records", |b| b.iter(|| parse_telemetry(black_box(text.as_slice())).unwrap()));
    group.finish();
}

criterion_group!(benches, physics, sampling, campaigns, classification, telemetry_io);
criterion_main!(benches);
