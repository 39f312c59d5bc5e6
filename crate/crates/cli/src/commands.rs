use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scope_core::alignment::{dimension_stats, write_stats_csv};
use scope_core::evalmetrics::{win_rate_summary, win_rate_svg, write_summary_csv, Metric};
use scope_core::intervene::{ResidualHook, SaeHook};
use scope_core::sae::train_with_history;
use scope_core::toylm::planted::{dictionary_from_atoms, planted_recall};
use scope_core::toylm::{
    build_corpus, decode_greedy, extract_activations, generate_planted, labeled_windows,
    parse_passages, sample_passages, train_toy_lm_with, CorpusConfig, LmTrainConfig,
    PlantedConfig, ToyLm, ToyLmConfig,
};
use scope_core::{
    levenshtein_similarity, load_dump, save_dump, score_report, select_top_n, AlignmentReport,
    GenerationRecord, InterventionConfig, MetricMatrix, SaeModel, SubspaceSpec, TrainConfig,
};

use crate::args::*;
use crate::summary::Summary;
use crate::usage;

pub fn run(command: Command) -> Result<Summary> {
    match command {
        Command::GenPlanted(a) => gen_planted(a),
        Command::TrainLm(a) => train_lm(a),
        Command::Extract(a) => extract(a),
        Command::TrainSae(a) => train_sae(a),
        Command::Score(a) => score(a),
        Command::Select(a) => select(a),
        Command::ClampDecode(a) => clamp_decode(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

fn require_file(path: &Path, flag: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("--{flag}: {} does not exist", path.display())));
    }
    Ok(())
}

/// Creates `<out_dir>/<sub>` and returns it.
fn stage_dir(out_dir: &Path, sub: &str) -> Result<PathBuf> {
    let dir = out_dir.join(sub);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn load_passages(path: Option<&Path>) -> Result<Vec<String>> {
    let passages = match path {
        Some(p) => {
            require_file(p, "protected")?;
            parse_passages(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => sample_passages(),
    };
    Ok(passages)
}

/// Ground truth written next to a planted dump.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub planted: Vec<usize>,
    pub d: usize,
    pub k: usize,
    /// One unit-norm atom (length d) per dictionary column.
    pub dictionary: Vec<Vec<f64>>,
}

pub fn truth_path(dump: &Path) -> PathBuf {
    let stem = dump.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dump.with_file_name(format!("{stem}.truth.json"))
}

fn gen_planted(a: GenPlantedArgs) -> Result<Summary> {
    let defaults = PlantedConfig::default();
    let config = PlantedConfig {
        d: a.d,
        k: a.k,
        planted: a.planted.unwrap_or(defaults.planted),
        density: a.density,
        activation_scale: (a.scale_lo, a.scale_hi),
        noise_sigma: a.noise_sigma,
        tokens_per_sample: a.tokens_per_sample,
        tau: a.tau,
        seed: a.seed,
    };
    let data = generate_planted(&config, a.n_cr, a.n_gen)?;
    create_parent(&a.out)?;
    save_dump(&data.dataset, &a.out)?;
    let truth = PlantedTruth {
        planted: data.ground_truth.clone(),
        d: config.d,
        k: config.k,
        dictionary: data.dictionary.columns().into_iter().map(|c| c.to_vec()).collect(),
    };
    let truth_file = truth_path(&a.out);
    fs::write(&truth_file, serde_json::to_string(&truth)? + "\n")?;
    Ok(Summary::new("gen-planted")
        .add("dump", a.out.display())
        .add("truth", truth_file.display())
        .add("records", data.dataset.len())
        .add("d", config.d)
        .add("k", config.k)
        .add("planted", data.ground_truth.len()))
}

fn train_lm(a: TrainLmArgs) -> Result<Summary> {
    let passages = load_passages(a.protected.as_deref())?;
    let corpus = match &a.corpus {
        Some(p) => {
            require_file(p, "corpus")?;
            fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => build_corpus(
            &passages,
            &CorpusConfig {
                repeats: a.repeats,
                filler_chars: a.filler_chars,
                seed: a.seed,
            },
        )?,
    };
    let config = ToyLmConfig {
        vocab: 0,
        d_model: a.d_model,
        n_layers: a.n_layers,
        n_heads: a.n_heads,
        context_len: a.context_len,
        hook_layer: a.hook_layer,
        seed: a.seed,
    };
    let train = LmTrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        ..LmTrainConfig::default()
    };
    let (lm, report) = train_toy_lm_with(&corpus, &passages, &config, &train)?;
    create_parent(&a.out)?;
    lm.save(&a.out)?;
    let worst = report.similarities.iter().copied().fold(1.0, f64::min);
    Ok(Summary::new("train-lm")
        .add("checkpoint", a.out.display())
        .add("vocab", lm.vocab().len())
        .add("passages", passages.len())
        .add("epochs", report.epoch_losses.len())
        .add_f64("final_loss", *report.epoch_losses.last().unwrap_or(&f32::NAN) as f64)
        .add_f64("min_similarity", worst))
}

fn extract(a: ExtractArgs) -> Result<Summary> {
    require_file(&a.lm, "lm")?;
    let lm = ToyLm::load(&a.lm)?;
    let passages = load_passages(a.protected.as_deref())?;
    let samples = labeled_windows(&passages, a.width, a.per_label, a.seed)?;
    let dataset = extract_activations(&lm, &samples)?;
    create_parent(&a.out)?;
    save_dump(&dataset, &a.out)?;
    Ok(Summary::new("extract")
        .add("dump", a.out.display())
        .add("records", dataset.len())
        .add("tokens", dataset.total_tokens())
        .add("d", dataset.dim))
}

fn train_sae(a: TrainSaeArgs) -> Result<Summary> {
    require_file(&a.dataset, "dataset")?;
    let dataset = load_dump(&a.dataset)?;
    let config = TrainConfig {
        lambda: a.lambda,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        normalize_decoder: a.normalize_decoder,
    };
    let (model, history) = train_with_history(&dataset, a.k, a.tau, &config)?;
    let dir = stage_dir(&a.out_dir, "sae")?;
    let path = dir.join("sae.scpm");
    model.save(&path)?;
    let mut log = csv::Writer::from_path(dir.join("train_log.csv"))?;
    log.write_record(["epoch", "loss"])?;
    log.write_record(["0".to_string(), history.initial_loss.to_string()])?;
    for (i, l) in history.epoch_losses.iter().enumerate() {
        log.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    log.flush()?;
    let reduction = 1.0 - history.final_loss() / history.initial_loss;
    Ok(Summary::new("train-sae")
        .add("checkpoint", path.display())
        .add("k", a.k)
        .add("tau", a.tau)
        .add_f64("initial_loss", history.initial_loss)
        .add_f64("final_loss", history.final_loss())
        .add_f64("loss_reduction", reduction))
}

fn score(a: ScoreArgs) -> Result<Summary> {
    require_file(&a.dataset, "dataset")?;
    require_file(&a.sae, "sae")?;
    let dataset = load_dump(&a.dataset)?;
    let model = SaeModel::load(&a.sae)?;
    let pooled = model.pooled_codes(&dataset)?;
    let report = score_report(&pooled)?;
    let stats = dimension_stats(&pooled, model.tau)?;
    let dir = stage_dir(&a.out_dir, "scores")?;
    let path = dir.join("alignment.csv");
    report.write_csv(BufWriter::new(File::create(&path)?))?;
    write_stats_csv(&stats, BufWriter::new(File::create(dir.join("dim_stats.csv"))?))?;
    let max = report.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Summary::new("score")
        .add("scores", path.display())
        .add("k", report.k)
        .add("n_cr", report.n_cr)
        .add("n_gen", report.n_gen)
        .add_f64("max_score", max))
}

fn select(a: SelectArgs) -> Result<Summary> {
    require_file(&a.scores, "scores")?;
    let report = AlignmentReport::read_csv(BufReader::new(File::open(&a.scores)?))?;
    let tau = match (a.tau, &a.sae) {
        (Some(t), _) => t,
        (None, Some(p)) => {
            require_file(p, "sae")?;
            SaeModel::load(p)?.tau
        }
        (None, None) => scope_core::sae::DEFAULT_TAU,
    };
    if a.n == 0 || a.n > report.k {
        return Err(usage(format!("--n must be in 1..={} (the SAE width), got {}", report.k, a.n)));
    }
    let mut spec = select_top_n(&report, a.n, tau)?;
    spec.provenance.insert("scores_sha256".into(), sha256_file(&a.scores)?);
    spec.provenance.insert("n_cr".into(), report.n_cr.to_string());
    spec.provenance.insert("n_gen".into(), report.n_gen.to_string());
    let dir = stage_dir(&a.out_dir, "subspace")?;
    let path = dir.join("subspace.json");
    spec.save(&path)?;
    let idx: Vec<usize> = spec.indices().collect();
    let mean = scope_core::subspace_score(&report, &idx)?;
    Ok(Summary::new("select")
        .add("subspace", path.display())
        .add("n", spec.n)
        .add_f64("cutoff", spec.cutoff().unwrap_or(f64::NAN))
        .add_f64("mean_score", mean))
}

struct Prompt {
    id: String,
    prompt: String,
    reference: String,
}

fn build_prompts(passages: &[String], cuts: &[usize], max_tokens: usize) -> Result<Vec<Prompt>> {
    let mut prompts = Vec::new();
    for (p, passage) in passages.iter().enumerate() {
        let chars: Vec<char> = passage.chars().collect();
        for &cut in cuts {
            if cut == 0 || cut >= chars.len() {
                return Err(usage(format!(
                    "--cuts: {cut} must lie in 1..{} for passage {p}",
                    chars.len()
                )));
            }
            let end = (cut + max_tokens).min(chars.len());
            prompts.push(Prompt {
                id: format!("p{p}_c{cut}"),
                prompt: chars[..cut].iter().collect(),
                reference: chars[cut..end].iter().collect(),
            });
        }
    }
    Ok(prompts)
}

fn clamp_decode(a: ClampDecodeArgs) -> Result<Summary> {
    require_file(&a.lm, "lm")?;
    if a.max_tokens == 0 {
        return Err(usage("--max-tokens must be at least 1"));
    }
    let lm = ToyLm::load(&a.lm)?;
    let passages = load_passages(a.protected.as_deref())?;
    let prompts = build_prompts(&passages, &a.cuts, a.max_tokens)?;

    let parts = match a.mode {
        DecodeMode::None => None,
        mode => {
            let (Some(sae_path), Some(spec_path)) = (&a.sae, &a.subspace) else {
                return Err(usage(format!("--mode {mode:?} needs --sae and --subspace").to_lowercase()));
            };
            require_file(sae_path, "sae")?;
            require_file(spec_path, "subspace")?;
            let sae = SaeModel::load(sae_path)?;
            let spec = SubspaceSpec::load(spec_path)?;
            let tau = a.tau.unwrap_or(spec.tau);
            let mut config = match mode {
                DecodeMode::Clamp => InterventionConfig::clamp(spec, tau),
                DecodeMode::Amplify => InterventionConfig::amplify(spec, a.alpha),
                _ => InterventionConfig::passthrough(spec),
            };
            config.hook_prompt = a.hook_prompt;
            Some((sae, config))
        }
    };
    let hook = match &parts {
        Some((sae, config)) => Some(SaeHook::new(sae, config)?),
        None => None,
    };
    let method = a.method.unwrap_or_else(|| match a.mode {
        DecodeMode::None => "vanilla".into(),
        DecodeMode::Clamp => "clamp".into(),
        DecodeMode::Amplify => format!("amplify-{}", a.alpha),
        DecodeMode::Passthrough => "passthrough".into(),
    });
    if method.is_empty() || method.contains(char::is_whitespace) {
        return Err(usage("--method must be non-empty and contain no whitespace"));
    }

    let records: Vec<GenerationRecord> = prompts
        .par_iter()
        .map(|p| -> Result<GenerationRecord> {
            let hook = hook.as_ref().map(|h| h as &dyn ResidualHook);
            let n = p.reference.chars().count();
            let generated = decode_greedy(&lm, &p.prompt, n, hook)?;
            Ok(GenerationRecord::new(&method, &p.id, generated, &p.reference)?)
        })
        .collect::<Result<_>>()?;

    let dir = stage_dir(&a.out_dir, "generations")?;
    let path = dir.join(format!("{method}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush()?;
    let mean = records
        .iter()
        .map(|r| levenshtein_similarity(&r.generated, &r.reference))
        .sum::<f64>()
        / records.len().max(1) as f64;
    Ok(Summary::new("clamp-decode")
        .add("generations", path.display())
        .add("method", &method)
        .add("prompts", records.len())
        .add_f64("mean_levenshtein", mean))
}

fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    require_file(path, "generations")?;
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: GenerationRecord = rec.with_context(|| format!("parsing {}", path.display()))?;
        out.push(rec);
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs) -> Result<Summary> {
    let mut records = Vec::new();
    for path in &a.generations {
        records.extend(read_generations(path)?);
    }
    let metrics = Metric::defaults(a.seed);
    let matrix = MetricMatrix::from_generations(&records, &metrics)?;
    let dir = stage_dir(&a.out_dir, "reports")?;
    let path = dir.join("metrics.csv");
    matrix.write_csv(BufWriter::new(File::create(&path)?))?;
    let mut summary = Summary::new("evaluate")
        .add("metrics", path.display())
        .add("methods", matrix.methods.len())
        .add("examples", matrix.examples.len());
    if let Some(lev) = matrix.metrics.iter().position(|m| m == "levenshtein") {
        for (i, m) in matrix.methods.iter().enumerate() {
            summary = summary.add_f64(&format!("levenshtein_{m}"), matrix.mean(i, lev));
        }
    }
    Ok(summary)
}

fn report(a: ReportArgs) -> Result<Summary> {
    if a.metrics.is_empty() && a.truth.is_none() {
        return Err(usage("nothing to report: pass --metrics and/or --truth"));
    }
    let dir = stage_dir(&a.out_dir, "reports")?;
    let mut summary = Summary::new("report");
    let mut text = String::new();

    if !a.metrics.is_empty() {
        for p in &a.metrics {
            require_file(p, "metrics")?;
        }
        let readers = a
            .metrics
            .iter()
            .map(|p| File::open(p).map(BufReader::new))
            .collect::<std::io::Result<Vec<_>>>()?;
        let matrix = MetricMatrix::read_csvs(readers)?;
        let rows = win_rate_summary(&matrix)?;
        write_summary_csv(&rows, BufWriter::new(File::create(dir.join("win_rates.csv"))?))?;
        let pooled: Vec<(String, f64)> = rows
            .iter()
            .filter(|r| r.metric == "all")
            .map(|r| (r.method.clone(), r.win_rate))
            .collect();
        fs::write(dir.join("win_rates.svg"), win_rate_svg(&pooled))?;
        for (method, rate) in &pooled {
            summary = summary.add_f64(&format!("win_rate_{method}"), *rate);
            text.push_str(&format!("win_rate_{method}={rate:.6}\n"));
        }
    }

    if let Some(truth_file) = &a.truth {
        require_file(truth_file, "truth")?;
        let (Some(sae_path), Some(spec_path)) = (&a.sae, &a.subspace) else {
            return Err(usage("--truth needs --sae and --subspace"));
        };
        require_file(sae_path, "sae")?;
        require_file(spec_path, "subspace")?;
        let truth: PlantedTruth = serde_json::from_reader(BufReader::new(File::open(truth_file)?))
            .with_context(|| format!("parsing {}", truth_file.display()))?;
        if truth.dictionary.len() != truth.k || truth.dictionary.iter().any(|a| a.len() != truth.d) {
            anyhow::bail!("{}: dictionary shape does not match d={} k={}", truth_file.display(), truth.d, truth.k);
        }
        let dictionary = dictionary_from_atoms(&truth.dictionary, truth.d)?;
        let sae = SaeModel::load(sae_path)?;
        let spec = SubspaceSpec::load(spec_path)?;
        let recall = planted_recall(&sae, &spec, &dictionary, &truth.planted)?;
        summary = summary.add_f64("recall", recall);
        text.push_str(&format!("planted_recall={recall:.6}\nplanted={}\nselected={}\n", truth.planted.len(), spec.n));
    }

    let path = dir.join("report.txt");
    let mut f = File::create(&path)?;
    f.write_all(text.as_bytes())?;
    Ok(summary.add("report", path.display()))
}
