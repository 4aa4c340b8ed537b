use std::path::{Path, PathBuf};
use std::time::Instant;

use edmrec::data::{sample_occlusions, split_dataset, synth_poses, Camera, Dataset, OcclusionPlan};
use edmrec::dictlearn::{learn_dictionary, LearnConfig};
use edmrec::eval::{
    dictionary_samples, error_plot, evaluate_pipeline, evaluate_recovery, recovery_examples, regression_examples,
    stack_examples, sweep_sizes, table_csv, time_plot, timing_json, EvalReport, Identity, Method, NetRecoverer,
    Recoverer, SparseRecoverer, StackedPipeline, TwoStage,
};
use edmrec::io::write_atomic;
use edmrec::net::{
    curve_csv, net_init, stack_finetune, train, CurvePoint, ModelFile, ModelRole, NetConfig, TrainConfig,
};
use edmrec::sparse::DictionaryHeader;
use edmrec::{assemble_final, Dictionary, Error, LassoOptions, Representation, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{Cli, Command, LassoArgs, LearnArgs, NetArgs, Task};

struct Ctx<'a> {
    data_dir: Option<&'a Path>,
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        match self.data_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn load_dataset(&self, p: &Path) -> Result<Dataset> {
        let d = Dataset::load(&self.path(p))?;
        log::info!("{}: {} records", p.display(), d.len());
        Ok(d)
    }
}

/// Every report carries the command, library version and resolved flags.
fn envelope(command: &str, config: &impl Serialize, body: serde_json::Value) -> Result<Vec<u8>> {
    let mut doc = json!({
        "command": command,
        "library_version": edmrec::VERSION,
        "config": config,
    });
    if let (Some(d), serde_json::Value::Object(b)) = (doc.as_object_mut(), body) {
        d.extend(b);
    }
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// `model.json` becomes `model.curve.csv` and so on.
fn sibling(p: &Path, ext: &str) -> PathBuf {
    p.with_extension(ext)
}

fn lasso_options(a: &LassoArgs) -> LassoOptions {
    LassoOptions { tol: a.tol, max_iters: a.max_iters, ..Default::default() }
}

fn learn_config(k: usize, seed: u64, lasso: &LassoArgs, learn: &LearnArgs) -> LearnConfig {
    LearnConfig {
        k,
        lambda: lasso.lambda,
        epochs: learn.epochs,
        batch_size: learn.batch_size,
        seed,
        atom_replacement_threshold: learn.replacement_threshold,
        validation_size: learn.validation_size,
        statistics_decay: learn.statistics_decay,
        coding: lasso_options(lasso),
    }
}

fn train_config(net: &NetArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: net.learning_rate,
        momentum: net.momentum,
        epochs: net.epochs,
        batch_size: net.batch_size,
        seed,
        weight_init_scale: net.init_scale,
    }
}

fn require<'p>(p: &'p Option<PathBuf>, what: &str) -> Result<&'p PathBuf> {
    p.as_ref().ok_or_else(|| Error::MissingArtifact(format!("{what} is required")))
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx { data_dir: cli.data_dir.as_deref() };
    match &cli.command {
        Command::Synth(a) => {
            let camera = Camera { focal_length: a.focal_length, ..Default::default() };
            let d = synth_poses(a.count, a.seed, &camera)?;
            d.save(&ctx.path(&a.out))
        }
        Command::Split(a) => {
            let d = ctx.load_dataset(&a.input)?;
            let (train, test) = split_dataset(&d, a.seed)?;
            train.save(&ctx.path(&a.train_out))?;
            test.save(&ctx.path(&a.test_out))
        }
        Command::LearnDict(a) => {
            let d = ctx.load_dataset(&a.train)?;
            let samples = dictionary_samples(&d)?;
            let config = learn_config(a.k, a.seed, &a.lasso, &a.learn);
            let (dict, report) = learn_dictionary(&samples, &config)?;
            let out = ctx.path(&a.out);
            dict.save(&DictionaryHeader { lambda_used_in_training: config.lambda, seed: config.seed }, &out)?;
            let report_path = a.report.as_ref().map(|p| ctx.path(p)).unwrap_or_else(|| sibling(&out, "report.json"));
            let epochs: Vec<_> = report
                .epochs
                .iter()
                .map(|e| json!({"epoch": e.epoch, "objective": e.objective, "replaced_atoms": e.replaced_atoms}))
                .collect();
            let body = json!({
                "provenance": d.provenance.to_string(),
                "samples": report.samples,
                "initial_objective": report.initial_objective,
                "epochs": epochs,
                "not_converged_codes": report.not_converged_codes,
            });
            write_atomic(&report_path, &envelope("learn-dict", a, body)?)?;
            let timing = json!({
                "total_seconds": report.total_seconds,
                "epochs": report.epochs.iter().map(|e| json!({"epoch": e.epoch, "seconds": e.seconds})).collect::<Vec<_>>(),
            });
            write_atomic(&sibling(&out, "timing.json"), serde_json::to_string_pretty(&timing)?.as_bytes())
        }
        Command::TrainNet(a) => train_net(&ctx, a),
        Command::Recover(a) => recover(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Sweep(a) => {
            let train = ctx.load_dataset(&a.train)?;
            let test = ctx.load_dataset(&a.test)?;
            let plan = sample_occlusions(&test, a.regime, a.mask_seed)?;
            let mut config = learn_config(0, a.seed, &a.lasso, &a.learn);
            config.lambda = a.learn_lambda.unwrap_or(a.lasso.lambda);
            let rows = sweep_sizes(
                &dictionary_samples(&train)?,
                &test,
                &plan,
                &a.sizes,
                &config,
                a.lasso.lambda,
                &lasso_options(&a.lasso),
            )?;
            let dir = ctx.path(&a.out_dir);
            write_atomic(
                &dir.join("sweep.json"),
                &envelope("sweep", a, json!({ "regime": a.regime.label(), "rows": rows }))?,
            )?;
            write_atomic(&dir.join("err_vs_k.txt"), error_plot(&rows).as_bytes())?;
            // timing is measured, so it lives apart from the reproducible files
            write_atomic(&dir.join("time_vs_k.txt"), time_plot(&rows).as_bytes())?;
            let timing: Vec<_> = rows
                .iter()
                .map(
                    |r| json!({"k": r.k, "seconds_per_sample": r.seconds_per_sample, "learn_seconds": r.learn_seconds}),
                )
                .collect();
            write_atomic(&dir.join("sweep.timing.json"), serde_json::to_string_pretty(&timing)?.as_bytes())
        }
    }
}

fn write_training_outputs(
    out: &Path,
    curve_path: Option<&Path>,
    model: &ModelFile,
    curve: &[CurvePoint],
    seconds: f64,
) -> Result<()> {
    model.save(out)?;
    let curve_path = curve_path.map(Path::to_path_buf).unwrap_or_else(|| sibling(out, "curve.csv"));
    write_atomic(&curve_path, &curve_csv(curve)?)?;
    write_atomic(
        &sibling(out, "timing.json"),
        serde_json::to_string_pretty(&json!({ "train_seconds": seconds }))?.as_bytes(),
    )
}

fn train_net(ctx: &Ctx, a: &crate::TrainNetArgs) -> Result<()> {
    let train_set = ctx.load_dataset(&a.train)?;
    let val_set = a.val.as_ref().map(|p| ctx.load_dataset(p)).transpose()?;
    let config = train_config(&a.net, a.seed);
    let net_config = NetConfig { channels: a.net.channels, weight_init_scale: a.net.init_scale, ..Default::default() };
    let started = Instant::now();
    let out = ctx.path(&a.out);
    let curve_path = a.curve.as_ref().map(|p| ctx.path(p));
    match a.task {
        Task::Recover2d => {
            let plan = sample_occlusions(&train_set, a.regime, a.mask_seed)?;
            let examples = recovery_examples(&train_set, &plan, a.representation)?;
            let val = match &val_set {
                Some(v) => recovery_examples(
                    v,
                    &sample_occlusions(v, a.regime, a.mask_seed.wrapping_add(1))?,
                    a.representation,
                )?,
                None => Vec::new(),
            };
            let mut params = net_init(net_config, a.seed)?;
            let curve = train(&mut params, &examples, &val, &config)?;
            let model = ModelFile::single(ModelRole::Recover2d, Some(a.representation), params);
            write_training_outputs(&out, curve_path.as_deref(), &model, &curve, started.elapsed().as_secs_f64())
        }
        Task::Regress3d => {
            let examples = regression_examples(&train_set)?;
            let val = val_set.as_ref().map(regression_examples).transpose()?.unwrap_or_default();
            let mut params = net_init(net_config, a.seed)?;
            let curve = train(&mut params, &examples, &val, &config)?;
            let model = ModelFile::single(ModelRole::Regress3d, None, params);
            write_training_outputs(&out, curve_path.as_deref(), &model, &curve, started.elapsed().as_secs_f64())
        }
        Task::Stack => {
            let recover = ModelFile::load(&ctx.path(require(&a.recover_model, "--recover-model")?))?;
            if recover.representation.is_some_and(|r| r != a.representation) {
                return Err(Error::InvalidInput(
                    "--representation differs from the one the recovery model was trained on".into(),
                ));
            }
            let recover = recover.into_net(ModelRole::Recover2d)?;
            let regress = ModelFile::load(&ctx.path(require(&a.regress_model, "--regress-model")?))?
                .into_net(ModelRole::Regress3d)?;
            let plan = sample_occlusions(&train_set, a.regime, a.mask_seed)?;
            let examples = stack_examples(&train_set, &plan, a.representation)?;
            let val = match &val_set {
                Some(v) => {
                    stack_examples(v, &sample_occlusions(v, a.regime, a.mask_seed.wrapping_add(1))?, a.representation)?
                }
                None => Vec::new(),
            };
            let (net, curve) = stack_finetune(recover, regress, &examples, &val, &config)?;
            let model = ModelFile::stacked(Some(a.representation), net);
            write_training_outputs(&out, curve_path.as_deref(), &model, &curve, started.elapsed().as_secs_f64())
        }
    }
}

fn load_recover_net(ctx: &Ctx, path: &Path, representation: Representation) -> Result<NetRecoverer> {
    let file = ModelFile::load(&ctx.path(path))?;
    if file.representation.is_some_and(|r| r != representation) {
        return Err(Error::Format(format!("{} was trained on a different representation", path.display())));
    }
    Ok(NetRecoverer { params: file.into_net(ModelRole::Recover2d)?, representation })
}

fn build_recoverer(
    ctx: &Ctx,
    method: Method,
    dictionary: Option<&PathBuf>,
    zero_model: Option<&PathBuf>,
    ave_model: Option<&PathBuf>,
    lasso: &LassoArgs,
    baseline: Representation,
) -> Result<Box<dyn Recoverer>> {
    let missing = |what: &str| Error::MissingArtifact(format!("method {method} needs {what}"));
    Ok(match method {
        Method::Identity => Box::new(Identity { representation: baseline }),
        Method::Sparse => {
            let path = dictionary.ok_or_else(|| missing("--dictionary"))?;
            let (dictionary, _) = Dictionary::load(&ctx.path(path))?;
            Box::new(SparseRecoverer { dictionary, lambda: lasso.lambda, options: lasso_options(lasso) })
        }
        Method::ZeroNet => Box::new(load_recover_net(
            ctx,
            zero_model.ok_or_else(|| missing("a zero-representation model"))?,
            Representation::Zero,
        )?),
        Method::AveNet => Box::new(load_recover_net(
            ctx,
            ave_model.ok_or_else(|| missing("an average-representation model"))?,
            Representation::Average,
        )?),
    })
}

fn recover(ctx: &Ctx, a: &crate::RecoverArgs) -> Result<()> {
    let d = ctx.load_dataset(&a.input)?;
    let plan = match &a.masks {
        Some(p) => OcclusionPlan::load(&ctx.path(p))?,
        None => sample_occlusions(&d, a.regime, a.mask_seed)?,
    };
    plan.check(d.len())?;
    let model = a.model.as_ref();
    let method = build_recoverer(ctx, a.method, a.dictionary.as_ref(), model, model, &a.lasso, Representation::Zero)?;
    let rep = method.representation();
    let lines = d
        .records
        .par_iter()
        .zip(&plan.masks)
        .enumerate()
        .map(|(i, (rec, mask))| {
            let input = rep.build(&rec.pose2d, mask)?;
            let fin = assemble_final(&input, &method.recover(i, &input, mask)?, mask)?;
            let line = json!({
                "id": rec.id,
                "occluded": mask.occluded().collect::<Vec<_>>(),
                "representation": rep,
                "edm": fin.to_rows(),
            });
            Ok(serde_json::to_string(&line)? + "\n")
        })
        .collect::<Result<Vec<String>>>()?;
    write_atomic(&ctx.path(&a.out), lines.concat().as_bytes())
}

fn evaluate(ctx: &Ctx, a: &crate::EvaluateArgs) -> Result<()> {
    let test = ctx.load_dataset(&a.test)?;
    let plans: Vec<OcclusionPlan> = match &a.plan {
        Some(p) => vec![OcclusionPlan::load(&ctx.path(p))?],
        None => a.regimes.iter().map(|r| sample_occlusions(&test, *r, a.mask_seed)).collect::<Result<_>>()?,
    };
    let mut methods = Vec::new();
    for m in &a.methods {
        if !methods.iter().any(|(k, _)| k == m) {
            let r = build_recoverer(
                ctx,
                *m,
                a.dictionary.as_ref(),
                a.zero_model.as_ref(),
                a.ave_model.as_ref(),
                &a.lasso,
                a.baseline_representation,
            )?;
            methods.push((*m, r));
        }
    }
    let regressor =
        a.regressor.as_ref().map(|p| ModelFile::load(&ctx.path(p))?.into_net(ModelRole::Regress3d)).transpose()?;
    let stacked = match &a.stacked_model {
        Some(p) => {
            let file = ModelFile::load(&ctx.path(p))?;
            let rep = file.representation.unwrap_or(Representation::Zero);
            Some((file.into_stacked()?, rep))
        }
        None => None,
    };
    let mut reports: Vec<EvalReport> = Vec::new();
    for plan in &plans {
        for (_, m) in &methods {
            reports.push(evaluate_recovery(m.as_ref(), &test, plan)?);
        }
        if let Some(reg) = &regressor {
            for (_, m) in &methods {
                reports.push(evaluate_pipeline(&TwoStage { recoverer: m.as_ref(), regressor: reg }, &test, plan)?);
            }
        }
        if let Some((net, rep)) = &stacked {
            reports.push(evaluate_pipeline(&StackedPipeline { net, representation: *rep }, &test, plan)?);
        }
    }
    let dir = ctx.path(&a.out_dir);
    let body = json!({ "provenance": test.provenance.to_string(), "reports": reports });
    write_atomic(&dir.join("report.json"), &envelope("evaluate", a, body)?)?;
    write_atomic(&dir.join("table.csv"), &table_csv(&reports)?)?;
    write_atomic(&dir.join("timing.json"), timing_json(&reports)?.as_bytes())?;
    for r in &reports {
        write_atomic(
            &dir.join(format!("trace-{}-{}-{}.txt", r.method, r.regime, r.target)),
            r.trace_plot().as_bytes(),
        )?;
    }
    for r in &reports {
        eprintln!(
            "{:<10} {:<5} {}  overall {:>8.3}  variance {:>9.3}",
            r.method, r.regime, r.target, r.overall, r.variance
        );
    }
    Ok(())
}
