use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use masknet::checkpoint;
use masknet::checks::run_suite;
use masknet::data::{
    build_schema_and_encode, dataset_manifest, encode_with_schema, export_columns, format_column_specs,
    gen_synthetic, parse_column_specs, split_indices, write_delimited, Dataset, Manifest, RawTable, Split,
    SyntheticConfig,
};
use masknet::eval::{inspect_masks, EvalReport};
use masknet::experiment::{
    ablation_study, compare_topologies, results_delimited, run_one, RunResult, Splits, SweepParam,
};
use masknet::maskblock::Ablation;
use masknet::model::{Model, Topology};
use masknet::numeric::GradcheckConfig;

use crate::config::{default_columns_path, delimiter_byte, RunConfig};
use crate::{CliError, GenSynthArgs, InspectArgs, RunArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn gen_synth(a: &GenSynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        fields: a.fields,
        vocab_per_field: a.vocab,
        latent_dim: a.latent_dim,
        instances: a.instances,
        scale: a.scale,
        seed: a.seed,
    };
    let delim = delimiter_byte(a.delimiter)?;
    let data = gen_synthetic(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let file = fs::File::create(a.out.join("data.csv"))?;
    write_delimited(&data, BufWriter::new(file), delim)?;
    fs::write(a.out.join("columns.txt"), format_column_specs(&export_columns(&data)))?;
    let manifest = dataset_manifest(&data, Some(&cfg), a.split_seed);
    fs::write(a.out.join("manifest.txt"), manifest.to_text())?;
    println!("wrote {} instances to {}", data.len(), a.out.display());
    print!("{}", manifest.to_text());
    Ok(())
}

/// Config file plus command-line overrides.
fn resolve(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &a.data {
        cfg.data.path = Some(p.clone());
    }
    if let Some(p) = &a.columns {
        cfg.data.columns = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.output.dir = p.clone();
    }
    let m = &mut cfg.model;
    if let Some(t) = &a.topology {
        m.topology = t.parse()?;
    }
    if let Some(s) = &a.ablate {
        m.ablation = Ablation::parse(s)?;
    }
    if let Some(w) = a.block_width {
        m.block_widths.iter_mut().for_each(|x| *x = w);
    }
    if let Some(n) = a.blocks {
        let w = m.block_widths.first().copied().unwrap_or(64);
        m.block_widths = vec![w; n];
    }
    if let Some(k) = a.embedding_dim {
        m.embedding_dim = k;
    }
    if let Some(r) = a.reduction_ratio {
        m.reduction_ratio = r;
    }
    let t = &mut cfg.train;
    if let Some(e) = a.epochs {
        t.max_epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        t.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    if let Some(l2) = a.l2 {
        t.l2 = l2;
    }
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    cfg.model.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}

fn columns_for(data: &Path, columns: Option<PathBuf>) -> Result<Vec<masknet::data::ColumnSpec>> {
    let path = columns.unwrap_or_else(|| default_columns_path(data));
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read column schema {}: {e}", path.display())))?;
    Ok(parse_column_specs(&text)?)
}

fn read_raw(path: &Path, delim: u8) -> Result<RawTable> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("data file {} not found", path.display())));
    }
    Ok(RawTable::read_path(path, delim)?)
}

struct Loaded {
    data: Dataset,
    splits: Splits,
    manifest: Manifest,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let seed = cfg.split_seed();
    let (data, synthetic) = match &cfg.data.path {
        Some(path) => {
            let raw = read_raw(path, cfg.data.delimiter_byte()?)?;
            let cols = columns_for(path, cfg.data.columns_path())?;
            let (train_rows, _, _) = split_indices(raw.rows.len(), seed);
            let (_, data) = build_schema_and_encode(&raw, &cols, Some(&train_rows), cfg.data.numeric_prep()?)?;
            (data, None)
        }
        None => (gen_synthetic(&cfg.data.synthetic)?, Some(&cfg.data.synthetic)),
    };
    if data.len() < 3 {
        return Err(CliError::Usage(format!("need at least 3 instances to split, got {}", data.len())));
    }
    let manifest = dataset_manifest(&data, synthetic, seed);
    let splits = Splits::new(&data, seed);
    Ok(Loaded { data, splits, manifest })
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let resolved = toml::to_string(cfg).map_err(|e| CliError::Runtime(format!("serializing config: {e}")))?;
    fs::write(dir.join("config.toml"), resolved)?;
    Ok(dir)
}

fn run_manifest(res: &RunResult, data: &Manifest) -> Manifest {
    let mut m = Manifest::new();
    m.set("label", &res.label);
    m.set("topology", res.spec.topology);
    m.set("ablation", res.spec.ablation.label());
    m.set("blocks", res.spec.blocks());
    m.set(
        "block_widths",
        res.spec.block_widths.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
    );
    m.set("embedding_dim", res.spec.embedding_dim);
    m.set("reduction_ratio", res.spec.reduction_ratio);
    m.set("params", res.param_count);
    for (k, v) in res.test.to_manifest("test_").entries() {
        m.set(k.clone(), v);
    }
    m.set("best_valid_auc", res.history.best_valid_auc);
    m.set("best_epoch", res.history.best_epoch);
    m.set("epochs", res.history.epochs.len());
    m.set("steps", res.history.steps);
    m.set("stopped_early", res.history.stopped_early);
    m.set("seconds", format!("{:.3}", res.seconds));
    for key in ["bayes_auc_test", "marginal_auc_test"] {
        if let Some(v) = data.get(key) {
            m.set(key, v);
        }
    }
    m
}

fn write_run(dir: &Path, res: &RunResult, model: Option<&Model>, data: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("history.csv"), res.history.to_delimited())?;
    let losses: String = std::iter::once("step,loss\n".to_owned())
        .chain(res.history.batch_losses.iter().enumerate().map(|(i, l)| format!("{},{l}\n", i + 1)))
        .collect();
    fs::write(dir.join("batch_loss.csv"), losses)?;
    fs::write(dir.join("report.txt"), run_manifest(res, data).to_text())?;
    if let Some(model) = model {
        checkpoint::save(model, dir.join("model.ckpt"))?;
    }
    Ok(())
}

pub fn train(a: &RunArgs) -> Result<()> {
    let cfg = resolve(a)?;
    let loaded = load_data(&cfg)?;
    let dir = prepare_out(&cfg)?;
    fs::write(dir.join("data_manifest.txt"), loaded.manifest.to_text())?;
    let label = if cfg.model.ablation == Ablation::none() {
        cfg.model.topology.to_string()
    } else {
        format!("{} {}", cfg.model.topology, cfg.model.ablation.label())
    };
    let (model, res) = run_one(label, &cfg.model, &cfg.train, &loaded.splits)?;
    write_run(&dir, &res, cfg.output.checkpoint.then_some(&model), &loaded.manifest)?;
    println!(
        "trained {} instances ({} train / {} valid / {} test)",
        loaded.data.len(),
        loaded.splits.train.len(),
        loaded.splits.valid.len(),
        loaded.splits.test.len()
    );
    println!("{}", res.summary());
    println!("outputs in {}", dir.display());
    Ok(())
}

fn parse_topologies(s: &str) -> Result<Vec<Topology>> {
    let ts = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<Topology>())
        .collect::<masknet::Result<Vec<_>>>()?;
    if ts.is_empty() {
        return Err(CliError::Usage("no topologies given".into()));
    }
    Ok(ts)
}

fn write_runs(dir: &Path, runs: &[RunResult], data: &Manifest, file: &str) -> Result<()> {
    for r in runs {
        let sub = dir.join(r.label.replace([' ', '/'], "_"));
        write_run(&sub, r, None, data)?;
    }
    fs::write(dir.join(file), results_delimited(runs))?;
    for r in runs {
        println!("{}", r.summary());
    }
    Ok(())
}

pub fn compare(a: &RunArgs, topologies: &str) -> Result<()> {
    let topologies = parse_topologies(topologies)?;
    let cfg = resolve(a)?;
    let loaded = load_data(&cfg)?;
    let dir = prepare_out(&cfg)?;
    let runs = compare_topologies(&cfg.model, &cfg.train, &loaded.splits, &topologies)?;
    write_runs(&dir, &runs, &loaded.manifest, "comparison.csv")?;
    for r in &runs {
        if let Some((base, v)) = &r.test.relaimp {
            println!("{:<10} RelaImp vs {base}: {v:+.2}%", r.label);
        }
    }
    Ok(())
}

pub fn ablation(a: &RunArgs) -> Result<()> {
    let cfg = resolve(a)?;
    let loaded = load_data(&cfg)?;
    let dir = prepare_out(&cfg)?;
    let report = ablation_study(&cfg.model, &cfg.train, &loaded.splits)?;
    write_runs(&dir, &report.runs, &loaded.manifest, "ablation_runs.csv")?;
    fs::write(dir.join("ablation.csv"), report.to_delimited())?;
    print!("{report}");
    Ok(())
}

pub fn sweep(a: &RunArgs, param: &str, values: &str) -> Result<()> {
    let param: SweepParam = param.parse()?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("sweep value {v:?} is not a non-negative integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("no sweep values given".into()));
    }
    let cfg = resolve(a)?;
    for &v in &values {
        param.apply(&cfg.model, v).validate()?;
    }
    let loaded = load_data(&cfg)?;
    let dir = prepare_out(&cfg)?;
    let runs = masknet::experiment::sweep(param, &values, &cfg.model, &cfg.train, &loaded.splits)?;
    write_runs(&dir, &runs, &loaded.manifest, &format!("sweep_{}.csv", param.as_str()))
}

pub fn gradcheck(tolerance: f64, step: f64) -> Result<()> {
    if !(tolerance > 0.0 && step > 0.0) {
        return Err(CliError::Usage("tolerance and step must be positive".into()));
    }
    let start = Instant::now();
    let suite = run_suite(GradcheckConfig {
        step,
        tolerance,
        ..GradcheckConfig::default()
    });
    let mut failed = 0;
    for e in &suite {
        let status = if e.report.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<24} max_rel_err={:.3e} checked={} kinks={}",
            e.name,
            e.report.max_rel_err,
            e.report.checked(),
            e.report.kinks()
        );
        if !e.report.passed() {
            failed += 1;
            print!("{}", e.report);
        }
    }
    println!(
        "{} of {} checks passed in {:.1}s",
        suite.len() - failed,
        suite.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

pub fn inspect_mask(a: &InspectArgs) -> Result<()> {
    let model = checkpoint::load(&a.checkpoint)
        .map_err(|e| CliError::Runtime(format!("loading {}: {e}", a.checkpoint.display())))?;
    let raw = read_raw(&a.data, delimiter_byte(a.delimiter)?)?;
    let cols = columns_for(&a.data, a.columns.clone())?;
    let data = encode_with_schema(&raw, &cols, &model.schema)?;
    let split = match a.split.as_str() {
        "all" => None,
        "train" => Some(Split::Train),
        "valid" => Some(Split::Valid),
        "test" => Some(Split::Test),
        other => return Err(CliError::Usage(format!("unknown split {other:?}"))),
    };
    let data = match split {
        None => data,
        Some(s) => {
            let (tr, va, te) = split_indices(data.len(), a.split_seed);
            let rows = match s {
                Split::Train => tr,
                Split::Valid => va,
                Split::Test => te,
            };
            data.subset(&rows, Some(s))
        }
    };
    let report = inspect_masks(&model, &data.instances, a.sample, a.examples, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let mut summary = Manifest::new();
    summary.set("checkpoint", a.checkpoint.display());
    summary.set("sampled", report.sampled);
    for b in &report.blocks {
        let label = format!("block{}", b.block);
        fs::write(a.out.join(format!("mask_{label}.csv")), b.histogram.to_delimited(&label))?;
        summary.set(format!("{label}.mean"), b.mean);
        summary.set(format!("{label}.std"), b.std);
        summary.set(format!("{label}.min"), b.histogram.min);
        summary.set(format!("{label}.max"), b.histogram.max);
        println!(
            "{label}: mean={:.4} std={:.4} min={:.4} max={:.4} values={}",
            b.mean,
            b.std,
            b.histogram.min,
            b.histogram.max,
            b.histogram.total()
        );
    }
    fs::write(a.out.join("mask_examples.csv"), report.examples_delimited())?;
    fs::write(a.out.join("mask_summary.txt"), summary.to_text())?;
    if let Ok(probs) = model.predict_dataset(&data) {
        if let Ok(r) = EvalReport::compute(&probs, &data.labels()) {
            println!("auc on inspected data: {:.4}", r.auc);
        }
    }
    Ok(())
}
