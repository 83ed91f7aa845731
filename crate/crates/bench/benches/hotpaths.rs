use criterion::{black_box, criterion_group, criterion_main, Criterion};
use std::collections::BTreeMap;
use twinbed_core::detect::{zscore_detect, DetectorConfig};
use twinbed_core::dose::RadiationSource;
use twinbed_core::historian::Sample;
use twinbed_core::plc::{ControlGains, PlcEmu, SimStatus};
use twinbed_core::tagbus::{decode_frame, encode_frame, Message, Quality, TagValue};

fn bench_frame_roundtrip(c: &mut Criterion) {
    let mut tags = BTreeMap::new();
    for i in 0..8 {
        let name = format!("TAG_{i}");
        tags.insert(name.clone(), TagValue::float(&name, i as f64 * 1.5, 1000 + i));
    }
    let msg = Message::reply_ok(42, tags);
    c.bench_function("frame_encode", |b| {
        b.iter(|| encode_frame(black_box(&msg)).unwrap())
    });
    let bytes = encode_frame(&msg).unwrap();
    c.bench_function("frame_decode", |b| {
        b.iter(|| decode_frame(black_box(&bytes)).unwrap())
    });
}

fn bench_plc_scan(c: &mut Criterion) {
    let mut plc = PlcEmu::new(ControlGains::default(), 50.0);
    let mut inputs = BTreeMap::new();
    inputs.insert(
        "SIM_STATUS".to_string(),
        TagValue::text("SIM_STATUS", SimStatus::Run.as_str(), 0),
    );
    inputs.insert("SG_LEVEL".to_string(), TagValue::float("SG_LEVEL", 49.8, 0));
    inputs.insert("FW_FLOW".to_string(), TagValue::float("FW_FLOW", 250.0, 0));
    inputs.insert("ST_FLOW".to_string(), TagValue::float("ST_FLOW", 251.0, 0));
    let mut now = 0u64;
    c.bench_function("plc_scan_cycle", |b| {
        b.iter(|| {
            now += 10;
            plc.refresh_inputs(inputs.clone(), now);
            black_box(plc.scan_cycle(now).unwrap());
        })
    });
}

fn bench_dose_update(c: &mut Criterion) {
    let table = twinbed_core::dose::parse_dose_table(
        "name,i,j,k,sv_s,sv_hr\nsrc,2,2,2,1.0e-3,3.6\n",
        [5, 5, 5],
    )
    .unwrap();
    let src =
        RadiationSource::new([0.0; 3], 0.1, [5, 5, 5], table, 0.2, 1.0e-4, 10.0).unwrap();
    let mut i = 0u64;
    c.bench_function("dose_update", |b| {
        b.iter(|| {
            i += 1;
            let x = 0.6 + (i % 100) as f64 * 0.03;
            black_box(src.update_dose([x, 0.25, 0.25]).unwrap());
        })
    });
}

fn bench_zscore(c: &mut Criterion) {
    let series: Vec<Sample> = (0..4096)
        .map(|i| Sample {
            t_ms: i as u64 * 100,
            value: 14.77 + ((i * 2654435761u64 as usize) % 1000) as f64 * 1e-5,
            quality: Quality::Good,
        })
        .collect();
    let cfg = DetectorConfig::default();
    c.bench_function("zscore_4096", |b| {
        b.iter(|| zscore_detect("CW_TEMP", black_box(&series), &cfg).unwrap())
    });
}

criterion_group!(
    benches,
    bench_frame_roundtrip,
    bench_plc_scan,
    bench_dose_update,
    bench_zscore
);
criterion_main!(benches);
