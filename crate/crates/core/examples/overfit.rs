use std::time::Instant;

use artic::conditioning::{synthetic_features, CameraSpec, SYNTH_DIM};
use artic::dataset::{decode_attributes, encode_attributes, synth::synth_object};
use artic::diffusion::{sample, ConditioningBundle, Denoiser, DenoiserConfig, SamplerConfig, TrainConfig, TrainSample, Trainer};
use artic::kinematics::{adjacency_matrix, MAX_PARTS};
use artic::metrics::{eval_d, DistanceKind, EvalConfig, EvalObject, StateMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let ts: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let omega: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let rec = synth_object("StorageFurniture", 3);
    let (f, m) = synthetic_features(&rec.object, &CameraSpec { azimuth: 20.0, elevation: 20.0, ..Default::default() }).unwrap();
    let g = rec.object.graph();
    let cond = ConditioningBundle {
        features: Some(f),
        graph: Some(adjacency_matrix(&g, MAX_PARTS).unwrap()),
        category: Some(0),
        fg_mask: Some(m),
    };
    let data = vec![TrainSample { x0: encode_attributes(&rec.object).unwrap(), cond: cond.clone() }];
    println!("parts {}", rec.object.parts.len());
    let cfg = TrainConfig {
        lr_base: lr,
        lr_ica: lr,
        warmup_epochs: 0,
        final_lr: lr * 0.05,
        epochs: steps,
        batch_size: 1,
        timesteps_per_object: ts,
        ..Default::default()
    };
    let mut tr = Trainer::new(Denoiser::new(DenoiserConfig::toy(SYNTH_DIM), 0).unwrap(), cfg, 1).unwrap();
    let t0 = Instant::now();
    let init = tr.eval_loss(&data, 64, 7).unwrap();
    let probe = |model: &Denoiser| -> Vec<f64> {
        let sched = model.config().schedule().unwrap();
        (0..5)
            .map(|seed| {
                let x = sample(model, &cond, &SamplerConfig { omega, steps: 0, seed }, &sched, &[]).unwrap();
                let mut gen = decode_attributes(&x, &g).unwrap();
                for (part, (_, label)) in gen.parts.iter_mut().zip(&g.nodes) {
                    part.label = *label;
                }
                eval_d(
                    &EvalObject::abstraction_only(gen),
                    &EvalObject::abstraction_only(rec.object.clone()),
                    DistanceKind::Cdist,
                    StateMode::Rs,
                    &EvalConfig::default(),
                )
                .unwrap()
            })
            .collect()
    };
    for s in 0..steps {
        tr.training_step(&data).unwrap();
        if s % 100 == 99 {
            let mut ds = probe(tr.model());
            ds.sort_by(f64::total_cmp);
            println!(
                "step {s} eval ratio {:.4} median cdist {:.4} t={:.0}s",
                tr.eval_loss(&data, 64, 7).unwrap() / init,
                ds[2],
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
