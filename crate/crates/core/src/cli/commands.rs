use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;

use artic::conditioning::{
    load_feature_file, sample_camera, save_feature_file, synthetic_features, CameraSpec, ForegroundMask, PatchFeatureGrid,
    SYNTH_DIM,
};
use artic::dataset::synth::synth_dataset;
use artic::dataset::{
    augment_dataset, category_index, encode_attributes, load_object, record_seed, save_object, split_dataset,
    AugmentConfig, DatasetManifest, ManifestEntry, ObjectRecord, CATEGORIES,
};
use artic::diffusion::{
    add_noise, eval_loss, export_attention, load_checkpoint, sample_noise, save_checkpoint, ConditioningBundle, Denoiser,
    DenoiserConfig, SamplerConfig, TrainConfig, TrainLog, TrainSample, Trainer,
};
use artic::graph::{predict_stub, GraphPrediction, ImageRef, VlmClient, VlmConfig};
use artic::kinematics::{adjacency_matrix, ConnectivityGraph, MAX_PARTS};
use artic::metrics::{report, summarize, to_csv, EvalConfig};
use artic::pipeline::{eval_object, generate, resolve_category, GenerateParams, PartPin, MAX_SAMPLES};
use artic::retrieval::{assemble, export_package, write_box_meshes, PartLibrary, RetrievalConfig};
use artic::service::{serve as serve_http, ServiceConfig};

use super::{
    usage, AttnArgs, AugmentArgs, CliResult, Ctx, EvaluateArgs, FeatureSource, FeaturesArgs, IngestArgs, PredictGraphArgs,
    RetrieveArgs, SampleArgs, ServeArgs, SynthArgs, TrainArgs,
};

const MANIFEST: &str = "manifest.json";

fn require_file(flag: &str, p: &Path) -> CliResult {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(flag, format!("{} is not a file", p.display())))
    }
}

fn require_dir(flag: &str, p: &Path) -> CliResult {
    if p.is_dir() {
        Ok(())
    } else {
        Err(usage(flag, format!("{} is not a directory", p.display())))
    }
}

/// File-name-safe form of an object id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> CliResult {
    std::fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| path.display().to_string())?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(flag: &str, path: &Path) -> CliResult<T> {
    require_file(flag, path)?;
    let text = std::fs::read_to_string(path).map_err(|e| usage(flag, e))?;
    serde_json::from_str(&text).map_err(|e| usage(flag, format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> CliResult<DatasetManifest> {
    require_file("--manifest", path)?;
    let m = DatasetManifest::load(path).map_err(|e| usage("--manifest", e))?;
    m.check_files().map_err(|e| usage("--manifest", e))?;
    Ok(m)
}

/// Writes `records` under `<dir>/objects` and returns manifest entries with
/// paths relative to `dir`.
fn save_records(dir: &Path, records: &[ObjectRecord], split: &str) -> CliResult<Vec<ManifestEntry>> {
    let objects = dir.join("objects");
    std::fs::create_dir_all(&objects)?;
    records
        .iter()
        .map(|r| {
            let rel = PathBuf::from("objects").join(format!("{}.aoj.json", file_stem(&r.id)));
            save_object(r, &dir.join(&rel))?;
            Ok(ManifestEntry {
                object: rel,
                features: Vec::new(),
                split: split.into(),
            })
        })
        .collect()
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> CliResult {
    if let Some(c) = a.categories.iter().find(|c| category_index(c).is_none()) {
        return Err(usage("--category", format!("unknown category {c:?}; expected one of {CATEGORIES:?}")));
    }
    if a.n == 0 {
        return Err(usage("--n", "must be positive"));
    }
    let cats: Vec<&str> = a.categories.iter().map(String::as_str).collect();
    let mut records = synth_dataset(a.n, ctx.seed, &cats);
    let out = ctx.out_dir()?;
    if a.meshes {
        let mesh_dir = out.join("meshes");
        for r in &mut records {
            write_box_meshes(r, &mesh_dir)?;
        }
    }
    let entries = save_records(out, &records, "")?;
    DatasetManifest { entries }.save(&out.join(MANIFEST))?;
    println!("wrote {} objects to {}", records.len(), out.display());
    Ok(())
}

fn collect_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "json" || x == "aoj"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(usage("INPUTS", format!("{} does not exist", p.display())));
        }
    }
    Ok(files)
}

pub fn ingest(ctx: &Ctx, a: IngestArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.train_ratio) {
        return Err(usage("--train-ratio", "must lie in [0, 1]"));
    }
    let files = collect_inputs(&a.inputs)?;
    let mut failures = Vec::new();
    let mut entries = Vec::new();
    for f in &files {
        match load_object(f) {
            Ok(_) => entries.push(ManifestEntry {
                object: std::fs::canonicalize(f)?,
                features: Vec::new(),
                split: String::new(),
            }),
            Err(e) => failures.push(format!("{}: {e}", f.display())),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("invalid: {f}");
        }
        return Err(anyhow!("{} of {} files failed validation", failures.len(), files.len()).into());
    }
    let m = split_dataset(&DatasetManifest { entries }, (a.train_ratio, 1.0 - a.train_ratio), ctx.seed)?;
    let path = ctx.out_path(MANIFEST)?;
    m.save(&path)?;
    println!(
        "{} objects ({} train, {} test) -> {}",
        m.entries.len(),
        m.with_split("train").len(),
        m.with_split("test").len(),
        path.display()
    );
    Ok(())
}

fn in_training_split(e: &ManifestEntry) -> bool {
    e.split.is_empty() || e.split == "train"
}

pub fn augment(ctx: &Ctx, a: AugmentArgs) -> CliResult {
    let cfg = ctx.config.section(
        "augment",
        AugmentConfig {
            seed: ctx.seed,
            ..Default::default()
        },
    )?;
    cfg.check().map_err(|e| usage("--config", e))?;
    let m = load_manifest(&a.manifest)?;
    let (train, held): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) = m.entries.iter().partition(|e| in_training_split(e));
    let records = train.iter().map(|e| load_object(&e.object)).collect::<Result<Vec<_>, _>>()?;
    let out = augment_dataset(&records, &cfg)?;
    let dir = ctx.subdir("augment")?;
    let mut entries = save_records(&dir, &out, "train")?;
    for e in held {
        entries.push(ManifestEntry {
            object: std::fs::canonicalize(&e.object)?,
            ..e.clone()
        });
    }
    DatasetManifest { entries }.save(&dir.join(MANIFEST))?;
    println!("{} originals, {} augmented -> {}", records.len(), out.len() - records.len(), dir.display());
    Ok(())
}

pub fn features(ctx: &Ctx, a: FeaturesArgs) -> CliResult {
    if a.views == 0 {
        return Err(usage("--views", "must be positive"));
    }
    let m = load_manifest(&a.manifest)?;
    let dir = ctx.subdir("features")?;
    let mut cameras = BTreeMap::new();
    let mut entries = Vec::new();
    for e in &m.entries {
        let rec = load_object(&e.object)?;
        let mut feats = Vec::new();
        for v in 0..a.views {
            let cam = sample_camera(record_seed(ctx.seed, &rec.id).wrapping_add(v as u64));
            let (grid, mask) = synthetic_features(&rec.object, &cam)?;
            let name = format!("{}_{v}.feat", file_stem(&rec.id));
            save_feature_file(&dir.join(&name), &grid, &mask)?;
            cameras.insert(name.clone(), cam);
            feats.push(PathBuf::from(name));
        }
        entries.push(ManifestEntry {
            object: std::fs::canonicalize(&e.object)?,
            features: feats,
            split: e.split.clone(),
        });
    }
    DatasetManifest { entries }.save(&dir.join(MANIFEST))?;
    write_json(&dir.join("cameras.json"), &cameras)?;
    println!("{} feature files -> {}", cameras.len(), dir.display());
    Ok(())
}

fn train_sample(rec: &ObjectRecord, grid: PatchFeatureGrid, mask: ForegroundMask) -> CliResult<TrainSample> {
    Ok(TrainSample {
        x0: encode_attributes(&rec.object)?,
        cond: ConditioningBundle {
            features: Some(grid),
            graph: Some(adjacency_matrix(&rec.object.graph(), MAX_PARTS)?),
            category: rec.category().and_then(category_index),
            fg_mask: Some(mask),
        },
    })
}

/// One sample per feature file; objects without features get one synthetic
/// view from a camera seeded by their id.
fn training_data(ctx: &Ctx, a: &TrainArgs) -> CliResult<Vec<TrainSample>> {
    let with_synthetic_view = |rec: &ObjectRecord| -> CliResult<TrainSample> {
        let (g, m) = synthetic_features(&rec.object, &sample_camera(record_seed(ctx.seed, &rec.id)))?;
        train_sample(rec, g, m)
    };
    let Some(path) = &a.manifest else {
        if a.synthetic == 0 {
            return Err(usage("--synthetic", "must be positive"));
        }
        return synth_dataset(a.synthetic, ctx.seed, &["StorageFurniture"])
            .iter()
            .map(with_synthetic_view)
            .collect();
    };
    let m = load_manifest(path)?;
    let mut data = Vec::new();
    for e in m.entries.iter().filter(|e| in_training_split(e)) {
        let rec = load_object(&e.object)?;
        if e.features.is_empty() {
            data.push(with_synthetic_view(&rec)?);
        }
        for f in &e.features {
            let (g, mask) = load_feature_file(f)?;
            data.push(train_sample(&rec, g, mask)?);
        }
    }
    if data.is_empty() {
        return Err(usage("--manifest", "no training entries"));
    }
    Ok(data)
}

/// Desk-scale optimizer settings used unless the config says otherwise.
fn toy_train_config() -> TrainConfig {
    TrainConfig {
        lr_base: 1e-3,
        lr_ica: 1e-3,
        warmup_epochs: 1,
        final_lr: 1e-4,
        batch_size: 10,
        timesteps_per_object: 4,
        epochs: 20,
        ..Default::default()
    }
}

pub fn train(ctx: &Ctx, a: TrainArgs) -> CliResult {
    let mut tcfg = ctx.config.section("train", toy_train_config())?;
    tcfg.seed = ctx.seed;
    if let Some(e) = a.epochs {
        tcfg.epochs = e;
    }
    tcfg.check().map_err(|e| usage("--config", e))?;
    if a.save_every == Some(0) {
        return Err(usage("--save-every", "must be positive"));
    }
    let data = training_data(ctx, &a)?;
    let d_f = data[0].cond.features.as_ref().map_or(SYNTH_DIM, |f| f.d_f);
    if let Some(bad) = data.iter().find_map(|s| s.cond.features.as_ref().filter(|f| f.d_f != d_f)) {
        return Err(usage("--manifest", format!("mixed feature widths {d_f} and {}", bad.d_f)));
    }
    let mcfg = ctx.config.section("model", DenoiserConfig::toy(d_f))?;
    mcfg.check().map_err(|e| usage("--config", e))?;
    if mcfg.d_f != d_f {
        return Err(usage("--config", format!("model.d_f is {} but the features have {d_f}", mcfg.d_f)));
    }

    let model = Denoiser::new(mcfg, ctx.seed)?;
    let steps_per_epoch = data.len().div_ceil(tcfg.batch_size);
    let epochs = tcfg.epochs;
    let mut trainer = Trainer::new(model, tcfg, steps_per_epoch)?;
    let eval_seed = ctx.seed ^ 0x5EED;
    let initial = trainer.eval_loss(&data, 4, eval_seed)?;
    let out = ctx.out_dir()?;
    let log_path = out.join("train_log.jsonl");
    let mut log = TrainLog::new(std::io::BufWriter::new(
        std::fs::File::create(&log_path).with_context(|| log_path.display().to_string())?,
    ));
    for e in 0..epochs {
        let l = trainer.epoch(&data, Some(&mut log))?;
        println!("epoch {e} loss {:.6} eps {:.6}", l.total, l.eps);
        if a.save_every.is_some_and(|k| (e + 1) % k == 0) {
            save_checkpoint(trainer.model(), &out.join(format!("checkpoint_epoch{}.safetensors", e + 1)))?;
        }
    }
    log.into_inner().flush()?;
    let model = trainer.into_model();
    let ckpt = out.join("checkpoint.safetensors");
    save_checkpoint(&model, &ckpt)?;
    let schedule = model.config().schedule()?;
    let last = eval_loss(&model, &schedule, &data, 4, eval_seed)?;
    write_json(
        &out.join("train_summary.json"),
        &json!({
            "samples": data.len(),
            "epochs": epochs,
            "initial_eval_loss": initial,
            "final_eval_loss": last,
            "ratio": last / initial,
        }),
    )?;
    println!("eval loss {initial:.6} -> {last:.6}; checkpoint {}", ckpt.display());
    Ok(())
}

struct Inputs {
    object: Option<ObjectRecord>,
    features: Option<(PatchFeatureGrid, ForegroundMask)>,
}

fn resolve_inputs(s: &FeatureSource) -> CliResult<Inputs> {
    if let Some(p) = &s.features {
        require_file("--features", p)?;
    }
    let object = match &s.object {
        Some(p) => {
            require_file("--object", p)?;
            Some(load_object(p).map_err(|e| usage("--object", e))?)
        }
        None => None,
    };
    let features = match (&s.features, &object) {
        (Some(p), _) => Some(load_feature_file(p).map_err(|e| usage("--features", e))?),
        (None, Some(rec)) => {
            let cam = CameraSpec {
                azimuth: s.azimuth,
                elevation: s.elevation,
                ..Default::default()
            };
            Some(synthetic_features(&rec.object, &cam)?)
        }
        (None, None) => None,
    };
    Ok(Inputs { object, features })
}

fn load_model(p: &Path) -> CliResult<Denoiser> {
    require_file("--checkpoint", p)?;
    load_checkpoint(p).map_err(|e| usage("--checkpoint", e))
}

pub fn sample(ctx: &Ctx, a: SampleArgs) -> CliResult {
    let sampler = ctx.config.section("sampler", SamplerConfig::default())?;
    let omega = a.omega.unwrap_or(sampler.omega);
    if !omega.is_finite() || omega < 0.0 {
        return Err(usage("--omega", "must be a nonnegative number"));
    }
    if !(1..=MAX_SAMPLES).contains(&a.num_samples) {
        return Err(usage("--num-samples", format!("must be in 1..={MAX_SAMPLES}")));
    }
    let pins: Vec<PartPin> = match &a.pins {
        Some(p) => read_json("--pins", p)?,
        None => Vec::new(),
    };
    let graph_file: Option<ConnectivityGraph> = a.graph.as_deref().map(|p| read_json("--graph", p)).transpose()?;
    let model = load_model(&a.checkpoint)?;
    let inputs = resolve_inputs(&a.source)?;
    let category_name = a
        .category
        .clone()
        .or_else(|| inputs.object.as_ref().and_then(|r| r.category().map(str::to_string)));
    let category = resolve_category(category_name.as_deref()).map_err(|e| usage("--category", e))?;
    let graph = match (graph_file, &inputs.object, &inputs.features) {
        (Some(g), _, _) => g,
        (None, Some(rec), _) => rec.object.graph(),
        (None, None, Some((grid, _))) => predict_stub(grid)?.graph,
        (None, None, None) => return Err(usage("--graph", "needed when neither --features nor --object is given")),
    };
    let schedule = model.config().schedule()?;
    let params = GenerateParams {
        omega,
        num_samples: a.num_samples,
        seed: ctx.seed,
        pins,
    };
    let samples = generate(&model, &schedule, &graph, inputs.features, category, &params)?;
    let dir = ctx.subdir("samples")?;
    write_json(&dir.join("graph.json"), &graph)?;
    for s in samples {
        let mut rec = ObjectRecord::new(format!("sample-{}", s.seed), s.object);
        rec.object.category = category_name.clone();
        let path = dir.join(format!("sample_{}.aoj.json", s.seed));
        save_object(&rec, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn predict_graph(ctx: &Ctx, a: PredictGraphArgs) -> CliResult {
    let pred: GraphPrediction = if let Some(img) = &a.image {
        let mut cfg = ctx.config.section("vlm", VlmConfig::default())?;
        if let Some(e) = &a.vlm_endpoint {
            cfg.endpoint = e.clone();
        }
        if let Some(m) = &a.vlm_model {
            cfg.model = m.clone();
        }
        cfg.check().map_err(|e| usage("--config", e))?;
        let image = if img.starts_with("http://") || img.starts_with("https://") || img.starts_with("data:") {
            ImageRef::Url(img.clone())
        } else {
            require_file("--image", Path::new(img))?;
            ImageRef::Path(img.into())
        };
        VlmClient::new(cfg)?.predict(&image)?
    } else {
        let inputs = resolve_inputs(&a.source)?;
        let Some((grid, _)) = inputs.features else {
            return Err(usage("--features", "one of --image, --features or --object is required"));
        };
        predict_stub(&grid)?
    };
    let out = ctx.out_dir()?;
    write_json(&out.join("graph.json"), &pred.graph)?;
    std::fs::write(out.join("graph_raw.txt"), &pred.raw_response)?;
    println!("{}", serde_json::to_string_pretty(&pred.graph)?);
    Ok(())
}

pub fn retrieve(ctx: &Ctx, a: RetrieveArgs) -> CliResult {
    let mut cfg = ctx.config.section("retrieval", RetrievalConfig::default())?;
    if a.no_reuse {
        cfg.reuse_per_label = false;
    }
    require_file("--object", &a.object)?;
    require_dir("--library", &a.library)?;
    let rec = load_object(&a.object).map_err(|e| usage("--object", e))?;
    let name = a.name.clone().unwrap_or_else(|| file_stem(&rec.id));
    if name.is_empty() || name != file_stem(&name) {
        return Err(usage("--name", "use letters, digits, '-', '_' or '.'"));
    }
    let lib = PartLibrary::load_dir(&a.library)?;
    let asm = assemble(&rec.object, &lib, &cfg)?;
    let dir = ctx.subdir(&name)?;
    let manifest = export_package(&asm, &name, &dir)?;
    let sources: Vec<_> = asm.parts.iter().map(|p| json!({"part": p.id, "source": p.source})).collect();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "candidate": asm.candidate,
            "parts": sources,
            "package": dir,
            "manifest": manifest,
        }))?
    );
    Ok(())
}

fn read_pairs(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    require_file("--pairs", path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "gen,gt") {
            continue;
        }
        let Some((g, t)) = line.split_once(',') else {
            return Err(usage("--pairs", format!("line {}: expected gen,gt", i + 1)));
        };
        pairs.push((base.join(g.trim()), base.join(t.trim())));
    }
    Ok(pairs)
}

pub fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> CliResult {
    let mut cfg = ctx.config.section("eval", EvalConfig::default())?;
    cfg.seed = ctx.seed;
    if a.gen.len() != a.gt.len() {
        return Err(usage("--gen", format!("{} --gen paths but {} --gt paths", a.gen.len(), a.gt.len())));
    }
    let mut pairs: Vec<(PathBuf, PathBuf)> = a.gen.iter().cloned().zip(a.gt.iter().cloned()).collect();
    if let Some(p) = &a.pairs {
        pairs.extend(read_pairs(p)?);
    }
    if pairs.is_empty() {
        return Err(usage("--gen", "no pairs to evaluate"));
    }
    for (g, t) in &pairs {
        require_file("--gen", g)?;
        require_file("--gt", t)?;
    }
    let mut reports = Vec::new();
    for (g, t) in &pairs {
        let gen = load_object(g).with_context(|| g.display().to_string())?;
        let gt = load_object(t).with_context(|| t.display().to_string())?;
        let id = gt.id.clone();
        reports.push(report(&id, &eval_object(gen)?, &eval_object(gt)?, &cfg)?);
    }
    let csv = to_csv(&reports);
    let out = ctx.out_dir()?;
    std::fs::write(out.join("report.csv"), &csv)?;
    write_json(
        &out.join("report.json"),
        &json!({"reports": reports, "summary": summarize(&reports)}),
    )?;
    print!("{csv}");
    Ok(())
}

pub fn attn(ctx: &Ctx, a: AttnArgs) -> CliResult {
    let model = load_model(&a.checkpoint)?;
    let cfg = model.config().clone();
    let t = a.t.unwrap_or(cfg.steps / 2);
    if t == 0 || t > cfg.steps {
        return Err(usage("--t", format!("must be in 1..={}", cfg.steps)));
    }
    if a.layer.is_some_and(|l| l >= cfg.layers) {
        return Err(usage("--layer", format!("the model has {} layers", cfg.layers)));
    }
    let inputs = resolve_inputs(&a.source)?;
    let Some(rec) = inputs.object else {
        return Err(usage("--object", "required"));
    };
    let (grid, mask) = inputs.features.expect("an object always yields features");
    if grid.d_f != cfg.d_f {
        return Err(usage("--features", format!("width {} does not match the model's {}", grid.d_f, cfg.d_f)));
    }
    let x0 = encode_attributes(&rec.object)?;
    let schedule = cfg.schedule()?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(ctx.seed);
    let eps = sample_noise(&x0, &mut rng);
    let x_t = add_noise(&x0, t, &eps, &schedule)?;
    let cond = ConditioningBundle {
        features: Some(grid),
        graph: Some(adjacency_matrix(&rec.object.graph(), MAX_PARTS)?),
        category: rec.category().and_then(category_index),
        fg_mask: Some(mask),
    };
    let map = export_attention(&model, &x_t, t, &cond, a.layer)?;
    let path = ctx.out_path(format!("attn_layer{}_t{t}.csv", map.layer))?;
    std::fs::write(&path, map.to_csv(rec.object.len()))?;
    println!("{}", path.display());
    Ok(())
}

pub fn serve(ctx: &Ctx, a: ServeArgs) -> CliResult {
    let assets_from_env = std::env::var_os("ARTIC_ASSETS").is_some();
    let mut cfg = ctx.config.section("service", ServiceConfig::from_env())?;
    if !assets_from_env && !ctx.config.has_key("service", "assets_dir") {
        cfg.assets_dir = ctx.out.join("assets");
    }
    if let Some(b) = a.bind {
        cfg.bind = b;
    }
    if let Some(d) = a.assets {
        cfg.assets_dir = d;
    }
    if a.checkpoint.is_some() {
        cfg.checkpoint = a.checkpoint;
    }
    if a.library.is_some() {
        cfg.library = a.library;
    }
    if a.objects.is_some() {
        cfg.objects_dir = a.objects;
    }
    if a.report_csv.is_some() {
        cfg.report_csv = a.report_csv;
    }
    if a.token.is_some() {
        cfg.token = a.token;
    }
    if let Some(p) = &cfg.checkpoint {
        require_file("--checkpoint", p)?;
    }
    if let Some(p) = &cfg.library {
        require_dir("--library", p)?;
    }
    if let Some(p) = &cfg.objects_dir {
        require_dir("--objects", p)?;
    }
    if std::net::ToSocketAddrs::to_socket_addrs(&cfg.bind).is_err() {
        return Err(usage("--bind", format!("{:?} is not host:port", cfg.bind)));
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve_http(cfg))?;
    Ok(())
}
