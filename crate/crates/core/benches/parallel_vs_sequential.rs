use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::{Array3, Array4};
use omniseg::metrics::evaluate_cases;
use omniseg::pyramid::segment_tissue;
use omniseg::{Exec, Magnification, Mask, ModelConfig, OmniSeg, TissueClass};

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn model() -> OmniSeg<f32> {
    OmniSeg::new(ModelConfig::desk(), 0).expect("desk config is valid")
}

fn image(side: usize) -> Array3<f32> {
    Array3::from_shape_fn((3, side, side), |(c, y, x)| {
        ((c * 31 + y * 7 + x * 13) % 97) as f32 / 97.0
    })
}

fn bench_backbone(c: &mut Criterion) {
    let m = model();
    let px = m.config.patch_px;
    let batch = Array4::from_shape_fn((8, 3, px, px), |(n, c, y, x)| {
        ((n + c * 3 + y * 5 + x) % 17) as f32 / 17.0
    });
    let mut g = c.benchmark_group("backbone_batch8");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| m.backbone_forward(&batch, exec).expect("forward"))
        });
    }
    g.finish();
}

fn bench_segment(c: &mut Criterion) {
    let m = model();
    let img = image(512);
    let mut g = c.benchmark_group("segment_tissue_512_10x");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                segment_tissue(
                    &m,
                    &img,
                    TissueClass::Pt,
                    Magnification::X10,
                    m.config.patch_px,
                    1.0,
                    exec,
                )
                .expect("segment")
            })
        });
    }
    g.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let masks: Vec<(Mask, Mask)> = (0..16)
        .map(|k| {
            let a = Mask::from_shape_fn((256, 256), |(y, x)| {
                (y as i64 - 128).pow(2) + (x as i64 - 128).pow(2) < 3600 + 40 * k
            });
            let b = Mask::from_shape_fn((256, 256), |(y, x)| {
                (y as i64 - 120).pow(2) + (x as i64 - 131).pow(2) < 3500
            });
            (a, b)
        })
        .collect();
    let pairs: Vec<(&Mask, &Mask)> = masks.iter().map(|(a, b)| (a, b)).collect();
    let mut g = c.benchmark_group("evaluate_cases_16x256");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_cases(&pairs, 0.25, exec).expect("metrics"))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_backbone, bench_segment, bench_metrics);
criterion_main!(benches);
