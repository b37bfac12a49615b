use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use catvrnn::data::{
    build_ica_series, build_icq_variant, encode_batch, make_synthetic_corpus, write_tsv_string, IcqVariant,
    LabeledCorpus, LabeledSentence, Vocabulary,
};
use catvrnn::evaluation::{
    eval_report, score_generated, CnnConfig, EvalClassifier, EvalOptions, SentenceClassifier, WordMembershipOracle,
};
use catvrnn::gradcheck::GradCheckOptions;
use catvrnn::gradsuite::run_suite;
use catvrnn::model::{CatVrnn, InitMode, ModelConfig};
use catvrnn::rng::Rng;
use catvrnn::training::{append_stats, AdamConfig, Checkpoint, TrainPlan, Trainer};

use crate::args::{BuildDataArgs, EvaluateArgs, GenerateArgs, GradCheckArgs, ModelArgs, TrainArgs};
use crate::{NumericFailure, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| usage(format!("{what}: `{p}` is not a non-negative integer"))))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// TSV with a leading comment that records the command, seed and settings.
fn tsv_with_header(command: &str, seed: u64, settings: &serde_json::Value, body: &str) -> String {
    format!("# catvrnn {command} seed={seed} settings={settings}\n{body}")
}

pub fn build_data(a: &BuildDataArgs, settings: &serde_json::Value) -> Result<()> {
    let mut corpus = if a.synthetic {
        if a.min_len > a.max_len {
            return Err(usage("--min-len exceeds --max-len"));
        }
        make_synthetic_corpus(a.categories, a.per_category, a.vocab_per_category, a.min_len..=a.max_len, a.seed)?
    } else {
        let input = a.input.as_ref().ok_or_else(|| usage("--input is required unless --synthetic is set"))?;
        LabeledCorpus::load_tsv(input)?
    };
    if let Some(range) = &a.filter_len {
        let (lo, hi) = range.split_once(':').ok_or_else(|| usage("--filter-len expects MIN:MAX"))?;
        let lo: usize = lo.trim().parse().map_err(|_| usage("--filter-len: bad MIN"))?;
        let hi: usize = hi.trim().parse().map_err(|_| usage("--filter-len: bad MAX"))?;
        corpus = corpus.filter_by_length(lo, hi)?;
        if corpus.is_empty() {
            eprintln!("warning: length filter {lo}:{hi} removed every sentence");
        }
    }
    if let Some(v) = &a.variant {
        let variant = IcqVariant::parse(v).ok_or_else(|| usage(format!("unknown variant `{v}`")))?;
        corpus = build_icq_variant(&corpus, variant)?;
    }
    if let Some(k) = a.ica {
        corpus = build_ica_series(&corpus, k)?;
    }
    if let Some(n) = a.subsample {
        corpus = corpus.subsample(n, a.seed)?;
    }
    let vocab_size = if corpus.is_empty() { 2 } else { Vocabulary::build(&corpus, 1)?.len() };
    write_file(&a.output, tsv_with_header("build-data", a.seed, settings, &corpus.to_tsv()).as_bytes())?;
    let manifest = json!({
        "provenance": corpus.provenance(),
        "sentences": corpus.len(),
        "num_categories": corpus.num_categories(),
        "counts_per_category": corpus.counts_per_category(),
        "vocab_size": vocab_size,
        "seed": a.seed,
        "settings": settings,
    });
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        let mut p = a.output.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    write_file(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

fn model_config(m: &ModelArgs, vocab_size: usize, num_categories: usize) -> Result<ModelConfig> {
    let init_mode = InitMode::parse(&m.init).ok_or_else(|| usage(format!("unknown init mode `{}`", m.init)))?;
    let cfg = ModelConfig {
        vocab_size,
        num_categories,
        embed_dim: m.embed_dim,
        hidden_dim: m.hidden_dim,
        latent_dim: m.latent_dim,
        max_len: m.max_len,
        init_mode,
        static_omega: m.omega,
        use_kl_term: m.kl,
        use_feature_extractors: m.feature_extractors,
        temperature: m.temperature,
        encoder_widths: parse_list(&m.encoder_widths, "--encoder-widths")?,
        decoder_widths: parse_list(&m.decoder_widths, "--decoder-widths")?,
        prior_width: m.prior_width,
        multitask: !m.single_task,
        mask_padding: m.mask_padding,
        adaptive_train_noise: m.adaptive_noise,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs, settings: &serde_json::Value) -> Result<()> {
    let corpus = LabeledCorpus::load_tsv(&a.corpus)?;
    if corpus.is_empty() {
        return Err(catvrnn::Error::Empty("training corpus").into());
    }
    let vocab = Vocabulary::build(&corpus, a.min_freq)?;
    let plan = TrainPlan {
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        max_grad_norm: a.max_grad_norm,
    };
    plan.validate()?;
    let metrics = a.metrics.clone().unwrap_or_else(|| a.out.join("metrics.jsonl"));
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            match &ckpt.vocab {
                Some(v) if v.digest() == vocab.digest() => {}
                _ => return Err(catvrnn::Error::Data("checkpoint vocabulary does not match the corpus".into()).into()),
            }
            eprintln!("resuming from {} at epoch {}", path.display(), ckpt.epoch);
            Trainer::from_checkpoint(&ckpt, plan)?
        }
        None => {
            let cfg = model_config(&a.model, vocab.len(), corpus.num_categories())?;
            if metrics.exists() {
                std::fs::remove_file(&metrics).with_context(|| format!("removing {}", metrics.display()))?;
            }
            Trainer::new(CatVrnn::new(cfg, a.seed)?, plan)?
        }
    };
    let cfg = trainer.model().config().clone();
    if corpus.num_categories() > cfg.num_categories {
        return Err(catvrnn::Error::Data(format!(
            "corpus has {} categories, model has {}",
            corpus.num_categories(),
            cfg.num_categories
        ))
        .into());
    }
    let data = encode_batch(corpus.sentences(), &vocab, cfg.max_len)?;
    eprintln!("training {} parameters on {} sentences (|V| = {})", trainer.model().parameter_count(), data.len(), vocab.len());
    let meta = json!({ "command": "train", "seed": a.seed, "settings": settings });
    trainer.fit(&data, |t, stats| {
        append_stats(&metrics, &json!({ "seed": a.seed, "stats": stats }))?;
        eprintln!(
            "epoch {:4}  gen {:.4}  cls {:.4}  kl {:.4}",
            stats.epoch, stats.gen_nll, stats.cls_nll, stats.kl
        );
        if a.save_every > 0 && stats.epoch % a.save_every == 0 {
            t.checkpoint(Some(&vocab), meta.clone()).save(a.out.join(format!("epoch-{:04}.ckpt", stats.epoch)))?;
        }
        Ok(())
    })?;
    let last = trainer.checkpoint(Some(&vocab), meta);
    last.save(a.out.join("last.ckpt"))?;
    println!("{}", json!({ "epoch": last.epoch, "state_digest": last.state_digest()?, "checkpoint": a.out.join("last.ckpt") }));
    Ok(())
}

fn load_model(path: &Path) -> Result<(CatVrnn, Vocabulary, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    let vocab = ckpt.vocab.clone().ok_or_else(|| catvrnn::Error::Checkpoint("checkpoint carries no vocabulary".into()))?;
    let model = CatVrnn::from_parts(ckpt.config.clone(), ckpt.params.clone())?;
    Ok((model, vocab, ckpt))
}

pub fn generate(a: &GenerateArgs, settings: &serde_json::Value) -> Result<()> {
    let (mut model, vocab, _) = load_model(&a.checkpoint)?;
    if let Some(t) = a.temperature {
        model.set_temperature(t).map_err(|e| usage(e.to_string()))?;
    }
    let k = model.config().num_categories;
    let cats = match &a.categories {
        Some(s) => parse_list(s, "--categories")?,
        None => (0..k).collect(),
    };
    if let Some(&bad) = cats.iter().find(|&&c| c >= k) {
        return Err(usage(format!("category {bad} is out of range for a model with {k} categories")));
    }
    let mut rng = Rng::new(a.seed);
    let mut rows: Vec<(usize, Vec<String>)> = Vec::with_capacity(cats.len() * a.count);
    for &c in &cats {
        for ids in model.generate(c, a.count, &mut rng)? {
            rows.push((c, vocab.decode(&ids)));
        }
    }
    let body = write_tsv_string(rows.iter().map(|(c, t)| (*c, t.as_slice())));
    let text = tsv_with_header("generate", a.seed, settings, &body);
    match &a.output {
        Some(p) => write_file(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, settings: &serde_json::Value) -> Result<()> {
    let corpus = LabeledCorpus::load_tsv(&a.corpus)?;
    let chosen = [a.classifier.is_some(), a.train_classifier, a.oracle].iter().filter(|b| **b).count();
    if chosen != 1 {
        return Err(usage("choose exactly one of --classifier, --train-classifier or --oracle"));
    }
    if a.checkpoint.is_some() == a.generated.is_some() {
        return Err(usage("provide exactly one of --checkpoint or --generated"));
    }
    let opts = EvalOptions {
        orders: parse_list(&a.orders, "--orders")?,
        seed: a.seed,
        max_backward_references: Some(a.max_backward_refs),
        min_freq: a.min_freq,
    };
    let mut classifier_info = json!(null);
    let clf: Box<dyn SentenceClassifier> = if a.oracle {
        classifier_info = json!({ "kind": "word-membership" });
        Box::new(WordMembershipOracle::from_corpus(&corpus))
    } else if let Some(p) = &a.classifier {
        let c = EvalClassifier::load(p)?;
        classifier_info = json!({ "kind": "cnn", "path": p, "validation_accuracy": c.validation_accuracy() });
        Box::new(c)
    } else {
        let cfg = CnnConfig {
            embed_dim: a.cnn_embed,
            feature_maps: a.cnn_maps,
            epochs: a.cnn_epochs,
            max_len: a.cnn_max_len,
            ..CnnConfig::default()
        };
        let c = EvalClassifier::train(&corpus, cfg, a.seed)?;
        eprintln!("classifier validation accuracy: {:?}", c.validation_accuracy());
        if let Some(out) = &a.classifier_out {
            c.save(out)?;
        }
        if classifier_info.is_null() {
            classifier_info = json!({ "kind": "cnn", "trained": true, "validation_accuracy": c.validation_accuracy() });
        }
        Box::new(c)
    };
    let report = if let Some(ckpt_path) = &a.checkpoint {
        let (model, vocab, _) = load_model(ckpt_path)?;
        let (report, generated) = eval_report(&model, &vocab, &corpus, clf.as_ref(), a.count, &opts)?;
        if let Some(p) = &a.write_generated {
            let body = write_tsv_string(generated.iter().map(|s| (s.category, s.tokens.as_slice())));
            write_file(p, tsv_with_header("evaluate", a.seed, settings, &body).as_bytes())?;
        }
        report
    } else {
        let path = a.generated.as_ref().expect("checked above");
        let generated: Vec<LabeledSentence> = LabeledCorpus::load_generated_tsv(path)?.into_sentences();
        let mut report = score_generated(&generated, &corpus, clf.as_ref(), &opts)?;
        report.config = settings.clone();
        report
    };
    let out = json!({
        "report": report,
        "classifier": classifier_info,
        "run": { "command": "evaluate", "seed": a.seed, "settings": settings },
    });
    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &a.output {
        Some(p) => write_file(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn grad_check(a: &GradCheckArgs, settings: &serde_json::Value) -> Result<()> {
    let opts = GradCheckOptions {
        step: a.step,
        tolerance: a.tolerance,
        seed: a.seed,
        corrupt_backward: a.corrupt_backward,
        ..GradCheckOptions::default()
    };
    let report = run_suite(&opts)?;
    for e in &report.entries {
        println!(
            "{:<24} {:>6} checked  max rel err {:.3e}  {}",
            e.name,
            e.checked,
            e.max_rel_err,
            if e.passed { "PASS" } else { "FAIL" }
        );
    }
    println!("overall: {}", if report.passed { "PASS" } else { "FAIL" });
    if let Some(p) = &a.output {
        let out = json!({ "report": report, "run": { "command": "grad-check", "seed": a.seed, "settings": settings } });
        write_file(p, (serde_json::to_string_pretty(&out)? + "\n").as_bytes())?;
    }
    if !report.passed {
        return Err(NumericFailure(format!("gradient check failed at tolerance {:e}", a.tolerance)).into());
    }
    Ok(())
}
