use std::fs::File;
use std::io::{BufReader, Write};

use avmc_core::data::{aggregate_csv, generate_synthetic, load_feature_archive, write_feature_archive, Dataset};
use avmc_core::eval::{evaluate, predict_split, Metrics, MetricsReport, PredictionFile};
use avmc_core::training::{fit, load_checkpoint, save_checkpoint, validation_report, TrainMode};
use avmc_core::{Error, FeatureSpec, ModalityKind, PerModality, Result};

use crate::config::RunConfig;
use crate::output::{atomic_write, atomic_write_bytes, atomic_write_via_path};
use crate::{AblationArg, AggregateArgs, EvalArgs, PredictArgs, Preset, SynthArgs, TrainArgs};

fn summary(report: &MetricsReport) -> String {
    let Metrics {
        acc2,
        f1,
        acc2_weak,
        mae,
        corr,
        r_square,
        ..
    } = report.metrics;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
    format!(
        "{} ({} labels): acc2 {acc2:.2} f1 {f1:.2} acc2_weak {} mae {mae:.4} corr {} r_square {}",
        report.task.short(),
        report.label_source,
        opt(acc2_weak),
        opt(corr),
        opt(r_square),
    )
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config, &args.overrides)?;
    if args.semi {
        config.train.mode = TrainMode::Semi;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(ablate) = args.ablate {
        let (a, v, unimodal) = match ablate {
            AblationArg::MixupA => (true, false, false),
            AblationArg::MixupV => (false, true, false),
            AblationArg::MixupAv => (true, true, false),
            AblationArg::MixupAvUnimodal => (true, true, true),
        };
        let flags = &mut config.train.ablation;
        flags.disable_mixup_a |= a;
        flags.disable_mixup_v |= v;
        flags.disable_unimodal_tasks |= unimodal;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    config.validate()?;

    let data = load_feature_archive(&config.data)?;
    let stats = data.stats();
    eprintln!(
        "{}: {} train / {} valid / {} test / {} unlabeled",
        config.data.display(),
        stats.train,
        stats.valid,
        stats.test,
        stats.n_unsupervised
    );
    let outcome = fit(&data, &config.model, &config.train, config.seed)?;
    for record in &outcome.state.history {
        let valid = record.validation.as_ref().map_or(f64::NAN, |r| r.metrics.mae);
        eprintln!(
            "epoch {:>3}  steps {:>4}  loss {:.4}  valid mae {valid:.4}",
            record.epoch, record.steps, record.phase1.total
        );
    }
    let report = validation_report(&outcome.best_params, &data)?;

    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let best = outcome.best_state();
    atomic_write_via_path(&dir.join("checkpoint.zip"), |p| save_checkpoint(&best, p))?;
    let history_path = dir.join("history.jsonl");
    atomic_write(&history_path, |w| {
        for record in &outcome.state.history {
            serde_json::to_writer(&mut *w, record)?;
            w.write_all(b"\n").map_err(|e| io_err(&history_path, e))?;
        }
        Ok(())
    })?;
    atomic_write_bytes(&dir.join("report.json"), &serde_json::to_vec_pretty(&report)?)?;
    atomic_write_bytes(&dir.join("config.json"), &serde_json::to_vec_pretty(&config)?)?;
    println!("best epoch {} of {}", outcome.best_epoch, outcome.state.epoch);
    println!("{}", summary(&report));
    Ok(())
}

fn check_specs(model: &PerModality<FeatureSpec>, data: &Dataset) -> Result<()> {
    for kind in ModalityKind::FEATURES {
        let (m, d) = (model.get(kind), data.specs().get(kind));
        if m != d {
            return Err(Error::Validation(format!(
                "{kind} features: archive has [{}x{}], checkpoint expects [{}x{}]",
                d.seq_len, d.feat_dim, m.seq_len, m.feat_dim
            )));
        }
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let data = load_feature_archive(&args.archive)?;
    check_specs(&state.params.specs, &data)?;
    let reports = evaluate(&state.params, &data, args.split, &args.tasks, &[args.label_source])?;
    atomic_write_bytes(&args.out, &serde_json::to_vec_pretty(&reports)?)?;
    for report in &reports {
        println!("{}", summary(report));
    }
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let data = load_feature_archive(&args.archive)?;
    check_specs(&state.params.specs, &data)?;
    let preds = predict_split(&state.params, &data, args.split, 64)?;
    let file = PredictionFile::from_split(&preds, args.task, args.label_source);
    atomic_write(&args.out, |w| file.write_csv(w))?;
    println!("{} predictions written to {}", file.records.len(), args.out.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let specs = match args.preset {
        Preset::Small => FeatureSpec::small(),
        Preset::Canonical => FeatureSpec::canonical(),
    };
    let data = generate_synthetic(args.n_labeled, args.n_unlabeled, &specs, args.seed)?;
    atomic_write_via_path(&args.out, |p| write_feature_archive(&data, p))?;
    println!("{} instances written to {}", data.len(), args.out.display());
    Ok(())
}

pub fn aggregate(args: AggregateArgs) -> Result<()> {
    let input = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
    let mut rows = 0;
    atomic_write(&args.output, |w| {
        rows = aggregate_csv(BufReader::new(input), w)?;
        Ok(())
    })?;
    println!("{rows} labels written to {}", args.output.display());
    Ok(())
}
