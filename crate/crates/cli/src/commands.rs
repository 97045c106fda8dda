use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use kairos::corpus::{
    escape_field, filter_claims, find_claim, parse_corpus_str, prediction_target, split as split_claims, unescape_field,
    write_corpus, ArgumentTree, CorpusError, FilterConfig, LabeledClaim, Scheme, Split, SplitRatios, StatsFilters,
};
use kairos::eval::{fmt2, render_report, EvalReport, ReportFormat};
use kairos::features::{Lexicon, Lexicons};
use kairos::models::{argmax, ContextStrategy, ModelError, ModelFamily, TrainedModel};
use kairos::synth::{generate, SynthSpec};
use kairos::training::{multi_run, MeanStd, Resources, Summary, TrainConfig, TrainError};
use kairos::corpus::{corpus_stats, ImpactClass3};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ConfigFile, Resolver};
use crate::{
    CliError, CliResult, EvalArgs, FilterArgs, FilterCmdArgs, PredictArgs, SplitArgs, SplitCmdArgs, StatsArgs,
    SynthArgs, TrainArgs,
};

fn data<E: Display>(context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

fn usage<E: Display>(context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content).map_err(data(path.display()))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(data(path.display()))
}

/// SHA-256 of the git blob object for `bytes`.
pub fn git_blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_corpus(path: &Path) -> CliResult<(Vec<ArgumentTree>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(data(path.display()))?;
    let text = std::str::from_utf8(&bytes).map_err(data(path.display()))?;
    let trees = parse_corpus_str(text).map_err(data(path.display()))?;
    Ok((trees, bytes))
}

fn parse_format(s: &str) -> CliResult<ReportFormat> {
    s.parse().map_err(usage("--format"))
}

struct Filtered {
    trees: Vec<ArgumentTree>,
    bytes: Vec<u8>,
    filter: FilterConfig,
    claims: Vec<LabeledClaim>,
}

fn load_filtered(args: &FilterArgs, cfg: &ConfigFile, r: &mut Resolver) -> CliResult<Filtered> {
    let min_votes = r.pick("min_votes", args.min_votes, cfg.min_votes, 5);
    let min_agreement = r.pick("min_agreement", args.min_agreement, cfg.min_agreement, 60.0);
    let scheme_name = r.pick("scheme", args.scheme.clone(), cfg.scheme.clone(), "three".to_string());
    let scheme = Scheme::parse(&scheme_name)
        .ok_or_else(|| CliError::Usage(format!("--scheme: unknown scheme `{scheme_name}`")))?;
    let filter = FilterConfig::new(min_votes, min_agreement, scheme).map_err(usage("filter"))?;
    let (trees, bytes) = read_corpus(&args.corpus)?;
    let claims = filter_claims(&trees, &filter);
    Ok(Filtered {
        trees,
        bytes,
        filter,
        claims,
    })
}

fn parse_ratios(s: &str) -> CliResult<SplitRatios> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(usage("--split-ratios"))?;
    let [a, b, c] = parts[..] else {
        return Err(CliError::Usage(format!("--split-ratios: expected three values, got `{s}`")));
    };
    SplitRatios::new(a, b, c).map_err(usage("--split-ratios"))
}

fn split_error(e: CorpusError) -> CliError {
    match e {
        CorpusError::InvalidRatios(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(format!("split: {other}")),
    }
}

fn write_split_file(path: &Path, claims: &[LabeledClaim]) -> CliResult<()> {
    let mut s = String::from("# topic\tclaim_id\tlabel\n");
    for c in claims {
        let _ = writeln!(s, "{}\t{}\t{}", escape_field(&c.topic), escape_field(&c.claim.id), c.label);
    }
    write_file(path, &s)
}

fn read_split_file(path: &Path, claims: &[LabeledClaim]) -> CliResult<Vec<LabeledClaim>> {
    let text = std::fs::read_to_string(path).map_err(data(path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(topic), Some(id)) = (fields.next(), fields.next()) else {
            return Err(CliError::Data(format!("{}:{}: expected topic and claim id", path.display(), n + 1)));
        };
        let topic = unescape_field(topic).map_err(data(format!("{}:{}", path.display(), n + 1)))?;
        let id = unescape_field(id).map_err(data(format!("{}:{}", path.display(), n + 1)))?;
        let claim = claims
            .iter()
            .find(|c| c.topic == topic && c.claim.id == id)
            .ok_or_else(|| {
                CliError::Data(format!(
                    "{}:{}: claim `{topic}/{id}` is not among the filtered claims",
                    path.display(),
                    n + 1
                ))
            })?;
        out.push(claim.clone());
    }
    Ok(out)
}

struct ResolvedSplit {
    split: Split,
    seed: u64,
    source: serde_json::Value,
}

fn resolve_split(args: &SplitArgs, cfg: &ConfigFile, r: &mut Resolver, claims: &[LabeledClaim]) -> CliResult<ResolvedSplit> {
    let seed = r.pick("seed", args.seed, cfg.seed, 1);
    if let Some(dir) = r.pick_opt("split_dir", args.split_dir.clone(), cfg.split_dir.clone()) {
        let split = Split {
            train: read_split_file(&dir.join("train.tsv"), claims)?,
            validation: read_split_file(&dir.join("validation.tsv"), claims)?,
            test: read_split_file(&dir.join("test.tsv"), claims)?,
        };
        return Ok(ResolvedSplit {
            split,
            seed,
            source: json!({ "split_dir": dir.display().to_string() }),
        });
    }
    let ratios_text = r.pick(
        "split_ratios",
        args.split_ratios.clone(),
        cfg.split_ratios.clone(),
        "0.7,0.15,0.15".to_string(),
    );
    let ratios = parse_ratios(&ratios_text)?;
    let split = split_claims(claims, ratios, seed).map_err(split_error)?;
    Ok(ResolvedSplit {
        split,
        seed,
        source: json!({ "split_ratios": [ratios.train, ratios.validation, ratios.test], "split_seed": seed }),
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn stats(a: StatsArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(a.filter.config.as_deref())?;
    let mut r = Resolver::default();
    let f = load_filtered(&a.filter, &cfg, &mut r)?;
    let format = parse_format(&r.pick("format", a.format, cfg.format, "text".into()))?;
    let report = corpus_stats(&f.trees, &StatsFilters { filter: f.filter });
    let text = match format {
        ReportFormat::Text => report.render_text(),
        ReportFormat::Kv => report.render_kv(),
    };
    emit(a.out.as_deref(), &text)
}

pub fn filter(a: FilterCmdArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(a.filter.config.as_deref())?;
    let mut r = Resolver::default();
    let f = load_filtered(&a.filter, &cfg, &mut r)?;
    let mut s = String::from(
        "# topic\tclaim_id\tparent_id\tlabel\tagreement\tcontext_length\tno\tlow\tmedium\thigh\tvery_high\ttext\n",
    );
    for c in &f.claims {
        let v = c.claim.votes.counts;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            escape_field(&c.topic),
            escape_field(&c.claim.id),
            escape_field(c.claim.parent_id.as_deref().unwrap_or("")),
            c.label,
            fmt2(c.agreement),
            c.context_len(),
            v[0],
            v[1],
            v[2],
            v[3],
            v[4],
            escape_field(&c.claim.text)
        );
    }
    write_file(&a.out, &s)?;
    let total: usize = f.trees.iter().map(|t| t.len() - 1).sum();
    println!("kept={} of={}", f.claims.len(), total);
    Ok(())
}

pub fn split(a: SplitCmdArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(a.filter.config.as_deref())?;
    let mut r = Resolver::default();
    let f = load_filtered(&a.filter, &cfg, &mut r)?;
    let args = SplitArgs {
        split_ratios: a.split_ratios,
        seed: a.seed,
        split_dir: None,
    };
    let cfg_no_dir = ConfigFile {
        split_dir: None,
        ..cfg
    };
    let s = resolve_split(&args, &cfg_no_dir, &mut r, &f.claims)?;
    create_dir(&a.out)?;
    write_split_file(&a.out.join("train.tsv"), &s.split.train)?;
    write_split_file(&a.out.join("validation.tsv"), &s.split.validation)?;
    write_split_file(&a.out.join("test.tsv"), &s.split.test)?;
    println!("seed={}", s.seed);
    println!("train={}", s.split.train.len());
    println!("validation={}", s.split.validation.len());
    println!("test={}", s.split.test.len());
    Ok(())
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_)
        | TrainError::Model(ModelError::UnsupportedStrategy { .. })
        | TrainError::Model(ModelError::InvalidWindow(_))
        | TrainError::Model(ModelError::Unknown { .. }) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn load_lexicons(flags: &[String], cfg: Option<&std::collections::BTreeMap<String, PathBuf>>, r: &mut Resolver) -> CliResult<Lexicons> {
    let mut entries: Vec<(String, PathBuf)> = Vec::new();
    for f in flags {
        let (name, path) = f
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--lexicon: expected NAME=FILE, got `{f}`")))?;
        entries.push((name.to_string(), PathBuf::from(path)));
    }
    let chosen = r.pick_opt(
        "lexicon",
        (!entries.is_empty()).then_some(entries),
        cfg.map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
    );
    let Some(entries) = chosen else {
        return Ok(Lexicons::shipped());
    };
    let mut lex = Lexicons::new();
    for (name, path) in entries {
        lex.insert(name, Lexicon::load(&path).map_err(data("--lexicon"))?);
    }
    Ok(lex)
}

fn summary_json(s: &Summary) -> serde_json::Value {
    let m = |x: &MeanStd| json!({ "mean": x.mean, "std": x.std });
    json!({
        "precision": m(&s.precision),
        "recall": m(&s.recall),
        "f1": m(&s.f1),
        "accuracy": m(&s.accuracy),
    })
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let started = Instant::now();
    let cfg = ConfigFile::load(a.filter.config.as_deref())?;
    let mut r = Resolver::default();
    let f = load_filtered(&a.filter, &cfg, &mut r)?;
    let s = resolve_split(&a.split, &cfg, &mut r, &f.claims)?;

    let model_name = r.pick("model", a.model, cfg.model.clone(), "bilstm".to_string());
    let model = ModelFamily::parse(&model_name).map_err(usage("--model"))?;
    let context = r.pick("context", a.context, cfg.context.clone(), "none".to_string());
    let window = r.pick("window", a.window, cfg.window, 1);
    let strategy = ContextStrategy::parse(&context, window).map_err(usage("--context"))?;
    let mut tc = TrainConfig::new(model, strategy);
    let n_seeds = r.pick("seeds", a.seeds, cfg.seeds, 1);
    tc.seeds = (0..n_seeds as u64).map(|k| s.seed + k).collect();
    tc.epochs = r.pick("epochs", a.epochs, cfg.epochs, tc.epochs);
    tc.lr = r.pick("lr", a.lr, cfg.lr, tc.lr);
    tc.batch_size = r.pick("batch_size", a.batch_size, cfg.batch_size, tc.batch_size);
    tc.patience = r.pick("patience", a.patience, cfg.patience, tc.patience);
    tc.embed_dim = r.pick("embed_dim", a.embed_dim, cfg.embed_dim, tc.embed_dim);
    tc.hidden = r.pick("hidden", a.hidden, cfg.hidden, tc.hidden);
    tc.validate().map_err(train_error)?;

    let embeddings_path = r.pick_opt("embeddings", a.embeddings, cfg.embeddings.clone());
    let embeddings = match &embeddings_path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(data(p.display()))?),
        None => None,
    };
    let lexicons = load_lexicons(&a.lexicon, cfg.lexicon.as_ref(), &mut r)?;
    let format = parse_format(&r.pick("format", a.format, cfg.format.clone(), "text".into()))?;
    let lexicon_names: Vec<String> = lexicons.0.keys().cloned().collect();
    let resources = Resources { lexicons, embeddings };

    let result = multi_run(&tc, &s.split, &resources).map_err(train_error)?;

    create_dir(&a.out)?;
    let mut runs = Vec::new();
    for run in &result.runs {
        let name = format!("checkpoint-seed-{}.json", run.seed);
        let model = run.model.as_ref().expect("trained model");
        write_file(&a.out.join(&name), &model.to_json())?;
        runs.push(json!({
            "seed": run.seed,
            "precision": run.test.precision,
            "recall": run.test.recall,
            "f1": run.test.f1,
            "accuracy": run.report.accuracy,
            "best_epoch": run.best_epoch,
            "epochs_run": run.epochs_run,
            "checkpoint": name,
        }));
    }
    let manifest = json!({
        "command": "train",
        "config": {
            "min_votes": f.filter.min_votes,
            "min_agreement": f.filter.min_agreement,
            "scheme": f.filter.scheme.name(),
            "split": s.source,
            "seed": s.seed,
            "seeds": tc.seeds,
            "model": model.name(),
            "context": strategy.name(),
            "window": strategy.window(),
            "epochs": tc.epochs,
            "lr": tc.lr,
            "batch_size": tc.batch_size,
            "patience": tc.patience,
            "embed_dim": tc.embed_dim,
            "hidden": tc.hidden,
            "embeddings": embeddings_path.map(|p| p.display().to_string()),
            "lexicons": lexicon_names,
        },
        "sources": r.sources,
        "corpus": {
            "path": a.filter.corpus.display().to_string(),
            "sha256": git_blob_sha256(&f.bytes),
        },
        "split_sizes": {
            "train": s.split.train.len(),
            "validation": s.split.validation.len(),
            "test": s.split.test.len(),
        },
        "runs": runs,
        "summary": summary_json(&result.summary),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&a.out.join("manifest.json"), &(text + "\n"))?;

    let sm = &result.summary;
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            let _ = writeln!(out, "{:<8} {:>9} {:>9} {:>9} {:>6}", "seed", "precision", "recall", "f1", "epoch");
            for run in &result.runs {
                let _ = writeln!(
                    out,
                    "{:<8} {:>9} {:>9} {:>9} {:>6}",
                    run.seed,
                    fmt2(run.test.precision),
                    fmt2(run.test.recall),
                    fmt2(run.test.f1),
                    run.best_epoch
                );
            }
            let pm = |x: &MeanStd| format!("{} ± {}", fmt2(x.mean), fmt2(x.std));
            let _ = writeln!(out, "mean ± std: P {}  R {}  F1 {}", pm(&sm.precision), pm(&sm.recall), pm(&sm.f1));
        }
        ReportFormat::Kv => {
            for run in &result.runs {
                let _ = writeln!(out, "run.{}.precision={}", run.seed, fmt2(run.test.precision));
                let _ = writeln!(out, "run.{}.recall={}", run.seed, fmt2(run.test.recall));
                let _ = writeln!(out, "run.{}.f1={}", run.seed, fmt2(run.test.f1));
            }
            for (k, x) in [("precision", &sm.precision), ("recall", &sm.recall), ("f1", &sm.f1)] {
                let _ = writeln!(out, "mean.{k}={}", fmt2(x.mean));
                let _ = writeln!(out, "std.{k}={}", fmt2(x.std));
            }
        }
    }
    print!("{out}");
    Ok(())
}

fn load_checkpoint(path: &Path) -> CliResult<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(data(path.display()))?;
    TrainedModel::from_json(&text).map_err(data(path.display()))
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(a.filter.config.as_deref())?;
    let mut r = Resolver::default();
    let f = load_filtered(&a.filter, &cfg, &mut r)?;
    let s = resolve_split(&a.split, &cfg, &mut r, &f.claims)?;
    let subset = r.pick("subset", a.subset, cfg.subset.clone(), "test".to_string());
    let claims = match subset.as_str() {
        "train" => &s.split.train,
        "validation" => &s.split.validation,
        "test" => &s.split.test,
        other => return Err(CliError::Usage(format!("--subset: unknown subset `{other}`"))),
    };
    let format = parse_format(&r.pick("format", a.format, cfg.format.clone(), "text".into()))?;
    let min_f1 = r.pick_opt("min_f1", a.min_f1, cfg.min_f1);

    let mut out = String::new();
    let mut f1s = Vec::new();
    for path in &a.checkpoint {
        let model = load_checkpoint(path)?;
        let preds = claims
            .iter()
            .map(|c| model.predict(c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(data(path.display()))?;
        let golds: Vec<ImpactClass3> = claims.iter().map(|c| c.label).collect();
        let lens: Vec<usize> = claims.iter().map(|c| c.context_len()).collect();
        let report = EvalReport::new(&golds, &preds, &lens).map_err(data(&subset))?;
        f1s.push(report.macro_avg.f1);
        match format {
            ReportFormat::Text => {
                let _ = writeln!(out, "checkpoint: {}", path.display());
                let _ = writeln!(out, "model: {}", model.family().name());
                out.push_str(&render_report(&report, format));
                out.push('\n');
            }
            ReportFormat::Kv => {
                let _ = writeln!(out, "checkpoint={}", path.display());
                let _ = writeln!(out, "model={}", model.family().name());
                out.push_str(&render_report(&report, format));
            }
        }
    }
    let m = MeanStd::of(&f1s);
    if f1s.len() > 1 {
        match format {
            ReportFormat::Text => {
                let _ = writeln!(out, "macro f1 over {} checkpoints: {} ± {}", f1s.len(), fmt2(m.mean), fmt2(m.std));
            }
            ReportFormat::Kv => {
                let _ = writeln!(out, "summary.f1.mean={}", fmt2(m.mean));
                let _ = writeln!(out, "summary.f1.std={}", fmt2(m.std));
            }
        }
    }
    print!("{out}");
    if let Some(min) = min_f1 {
        if m.mean < min {
            return Err(CliError::Threshold(format!(
                "macro f1 {} is below --min-f1 {}",
                fmt2(m.mean),
                fmt2(min)
            )));
        }
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> CliResult<()> {
    let (trees, _) = read_corpus(&a.corpus)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let format = parse_format(a.format.as_deref().unwrap_or("text"))?;
    let targets: Vec<LabeledClaim> = match &a.claim {
        Some(id) => {
            let (tree, _) = find_claim(&trees, a.topic.as_deref(), id)
                .ok_or_else(|| CliError::Data(format!("unknown claim `{id}`")))?;
            vec![prediction_target(tree, id).map_err(data("predict"))?]
        }
        None => {
            if a.topic.is_some() {
                return Err(CliError::Usage("--topic requires --claim".into()));
            }
            let mut all = Vec::new();
            for tree in &trees {
                for c in tree.claims().filter(|c| !c.is_thesis()) {
                    all.push(prediction_target(tree, &c.id).map_err(data("predict"))?);
                }
            }
            all
        }
    };
    let mut out = String::new();
    for t in &targets {
        let p = model.predict_proba(t).map_err(data(format!("{}/{}", t.topic, t.claim.id)))?;
        let label = ImpactClass3::from_index(argmax(&p)).expect("three classes");
        match format {
            ReportFormat::Text => {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    escape_field(&t.topic),
                    escape_field(&t.claim.id),
                    label,
                    ImpactClass3::ALL
                        .iter()
                        .map(|c| format!("{}={:.6}", c.name(), p[c.index()]))
                        .collect::<Vec<_>>()
                        .join("\t")
                );
            }
            ReportFormat::Kv => {
                let key = format!("{}/{}", escape_field(&t.topic), escape_field(&t.claim.id));
                let _ = writeln!(out, "{key}.label={label}");
                for c in ImpactClass3::ALL {
                    let _ = writeln!(out, "{key}.p.{}={:.6}", c.name(), p[c.index()]);
                }
            }
        }
    }
    print!("{out}");
    Ok(())
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let cfg = ConfigFile::load(a.config.as_deref())?;
    let mut r = Resolver::default();
    let d = SynthSpec::default();
    let spec = SynthSpec {
        trees: r.pick("trees", a.trees, cfg.trees, d.trees),
        min_depth: r.pick("min_depth", a.min_depth, cfg.min_depth, d.min_depth),
        max_depth: r.pick("max_depth", a.max_depth, cfg.max_depth, d.max_depth),
        min_branching: r.pick("min_branching", a.min_branching, cfg.min_branching, d.min_branching),
        max_branching: r.pick("max_branching", a.max_branching, cfg.max_branching, d.max_branching),
        vocab_size: r.pick("vocab_size", a.vocab_size, cfg.vocab_size, d.vocab_size),
        signal_strength: r.pick("signal", a.signal, cfg.signal, d.signal_strength),
        noise_rate: r.pick("noise", a.noise, cfg.noise, d.noise_rate),
        signal_ancestor: r.pick("signal_ancestor", a.signal_ancestor, cfg.signal_ancestor, d.signal_ancestor),
        duplication_rate: r.pick("duplication", a.duplication, cfg.duplication, d.duplication_rate),
        seed: r.pick("seed", a.seed, cfg.seed, d.seed),
    };
    let corpus = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(&a.out)?;
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, &corpus.trees).map_err(data("corpus"))?;
    std::fs::write(a.out.join("corpus.tsv"), &bytes).map_err(data(a.out.join("corpus.tsv").display()))?;
    write_file(&a.out.join("oracle.kv"), &corpus.oracle.render())?;
    let rates = corpus.oracle.analytic();
    println!("trees={}", corpus.trees.len());
    println!("claims={}", corpus.oracle.claims.len());
    println!("bayes.claim_only={}", rates.claim_only);
    println!("bayes.context={}", rates.context);
    Ok(())
}
