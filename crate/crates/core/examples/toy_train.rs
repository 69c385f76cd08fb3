use std::time::Instant;

use artic::conditioning::{sample_camera, synthetic_features, SYNTH_DIM};
use artic::dataset::{category_index, encode_attributes, synth::synth_dataset};
use artic::diffusion::{ConditioningBundle, Denoiser, DenoiserConfig, TrainConfig, TrainSample, Trainer};
use artic::kinematics::{adjacency_matrix, MAX_PARTS};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let ts: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let data: Vec<TrainSample> = synth_dataset(50, 1, &["StorageFurniture"])
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let (f, m) = synthetic_features(&r.object, &sample_camera(i as u64)).unwrap();
            TrainSample {
                x0: encode_attributes(&r.object).unwrap(),
                cond: ConditioningBundle {
                    features: Some(f),
                    graph: Some(adjacency_matrix(&r.object.graph(), MAX_PARTS).unwrap()),
                    category: r.category().and_then(category_index),
                    fg_mask: Some(m),
                },
            }
        })
        .collect();
    let parts: Vec<usize> = data.iter().map(|d| d.x0.n_parts()).collect();
    println!("parts {:?}", parts);
    let model = Denoiser::new(DenoiserConfig::toy(SYNTH_DIM), 0).unwrap();
    println!("params {}", model.parameter_count());
    let cfg = TrainConfig {
        lr_base: lr,
        lr_ica: lr,
        warmup_epochs: 1,
        final_lr: lr * 0.1,
        epochs,
        batch_size: batch,
        timesteps_per_object: ts,
        ..Default::default()
    };
    let spe = 50usize.div_ceil(batch);
    let mut tr = Trainer::new(model, cfg, spe).unwrap();
    let t0 = Instant::now();
    let init = tr.eval_loss(&data, 4, 7).unwrap();
    println!("init eval {init:.4} ({:.1}s)", t0.elapsed().as_secs_f64());
    for e in 0..epochs {
        let l = tr.epoch::<std::io::Sink>(&data, None).unwrap();
        if e % 5 == 4 || e + 1 == epochs {
            let ev = tr.eval_loss(&data, 4, 7).unwrap();
            println!("epoch {e} train {:.4} fg {:?} eval {ev:.4} ratio {:.3} t={:.0}s", l.eps, l.fg, ev / init, t0.elapsed().as_secs_f64());
        }
    }
}
