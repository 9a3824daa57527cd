use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ratspn_core::data::{random_missing_mask, scale_features, ScalingMode};
use ratspn_core::inference::{classify, forward_log, joint_from_roots, logsumexp_rows};
use ratspn_core::metrics::{accuracy, auroc, histogram, percentile, shared_edges};
use ratspn_core::params::FeatureRange;
use ratspn_core::serde_model::LoadedModel;
use ratspn_core::training::{evaluate, hybrid_objective, Evaluation};
use ratspn_core::{
    load_model, random_region_graph, save_model, Circuit, CircuitShape, Dataset, Encoding,
    LeafKind, LogPrior, ModelMeta, ParameterSet, TrainConfig, Trainer,
};
use serde::Serialize;

use crate::inputs::{load_raw, load_scaled, DataSpec};
use crate::manifest::RunManifest;
use crate::{
    CliError, EncodingArg, EvalArgs, LeafArg, OodArgs, OptimArgs, PriorArg, ScaleArg,
    SweepLambdaArgs, SweepMissingArgs, TrainArgs,
};

impl Serialize for DataSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn write_file(manifest: &mut RunManifest, path: PathBuf, text: &str) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    manifest.output(&path);
    Ok(())
}

fn encoding(e: EncodingArg) -> Encoding {
    match e {
        EncodingArg::Raw => Encoding::Raw,
        EncodingArg::Text => Encoding::Text,
    }
}

fn train_config(o: &OptimArgs, lambda: f64) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        lambda,
        epochs: o.epochs,
        batch_size: o.batch_size,
        keep_input: o.keep_input,
        keep_sum: o.keep_sum,
        learning_rate: o.lr,
        beta1: o.beta1,
        beta2: o.beta2,
        epsilon: o.eps,
        seed: o.seed,
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

fn labels(data: &Dataset, spec: &DataSpec) -> Result<Vec<usize>, CliError> {
    data.labels()
        .map(<[usize]>::to_vec)
        .ok_or_else(|| CliError::data(format!("{spec}: labels are required")))
}

fn check_labels(data: &Dataset, spec: &DataSpec, classes: usize) -> Result<(), CliError> {
    if let Some(&l) = data
        .labels()
        .and_then(|l| l.iter().find(|&&l| l >= classes))
    {
        return Err(CliError::data(format!(
            "{spec}: label {l} but the model has {classes} classes"
        )));
    }
    Ok(())
}

fn prior(kind: PriorArg, data: &Dataset, classes: usize) -> Result<LogPrior, CliError> {
    match kind {
        PriorArg::Uniform => Ok(LogPrior::uniform(classes)),
        PriorArg::Empirical => {
            let labels = data
                .labels()
                .ok_or_else(|| CliError::usage("--prior empirical needs labelled data"))?;
            Ok(LogPrior::empirical(labels, classes)?)
        }
    }
}

const METRIC_HEADER: &str =
    "epoch,objective,cross_entropy,nll,train_accuracy,valid_objective,valid_accuracy";

fn metric_row(epoch: usize, train: &Evaluation, valid: Option<&Evaluation>) -> String {
    let (vo, va) = valid.map_or((String::new(), String::new()), |v| {
        (v.objective.to_string(), v.accuracy.to_string())
    });
    format!(
        "{epoch},{},{},{},{},{vo},{va}",
        train.objective, train.cross_entropy, train.nll, train.accuracy
    )
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = train_config(&a.optim, a.lambda)?;
    if let Some(f) = a.valid_fraction {
        if !(0.0..1.0).contains(&f) {
            return Err(CliError::usage(format!(
                "--valid-fraction {f} not in [0, 1)"
            )));
        }
    }
    let mut manifest = RunManifest::start("train", config_json(a));
    manifest.seed("seed", cfg.seed);

    let warm = a.warm_start.as_deref().map(load_model).transpose()?;
    let (raw, record) = load_raw(&a.data, a.csv.options())?;
    manifest.data.push(record);
    if raw.is_empty() {
        return Err(CliError::data(format!("{}: dataset is empty", a.data)));
    }
    labels(&raw, &a.data)?;
    let (raw_train, raw_valid) = match a.valid_fraction {
        Some(f) if f > 0.0 => {
            let (t, v) = raw.split(f, cfg.seed)?;
            (t, Some(v))
        }
        _ => (raw, None),
    };
    let scaling = match &warm {
        Some(m) => m.meta.scaling.clone(),
        None => {
            let mode = match a.scale {
                ScaleArg::None => ScalingMode::None,
                ScaleArg::Divmax => ScalingMode::DivMax,
                ScaleArg::Zscore => ScalingMode::ZScore,
            };
            scale_features(&raw_train, mode)?.scaling().clone()
        }
    };
    let train_data = raw_train.apply_scaling(&scaling)?;
    let valid_data = match (&a.valid_data, raw_valid) {
        (Some(spec), _) => {
            let (d, record) = load_raw(spec, a.csv.options())?;
            manifest.data.push(record);
            labels(&d, spec)?;
            Some(d.apply_scaling(&scaling)?)
        }
        (None, Some(v)) => Some(v.apply_scaling(&scaling)?),
        (None, None) => None,
    };

    let (circuit, mut params, prior_epochs) = match warm {
        Some(LoadedModel {
            circuit,
            params,
            meta,
            ..
        }) => (circuit, params, meta.epochs),
        None => {
            let s = &a.structure;
            let classes = s.classes.unwrap_or_else(|| train_data.num_classes());
            let graph =
                random_region_graph(train_data.num_vars(), s.depth, s.repetitions, cfg.seed)
                    .map_err(|e| CliError::usage(e.to_string()))?;
            let shape = CircuitShape {
                classes,
                sums: s.sums,
                leaves: s.leaves,
                leaf: match s.leaf {
                    LeafArg::Gaussian => LeafKind::Gaussian,
                    LeafArg::Bernoulli => LeafKind::Bernoulli,
                },
            };
            let circuit = Circuit::new(graph, shape).map_err(|e| CliError::usage(e.to_string()))?;
            let range = FeatureRange::of(train_data.features());
            let params = ParameterSet::init(&circuit, s.train_variance, Some(&range), cfg.seed);
            (circuit, params, 0)
        }
    };
    if train_data.num_vars() != circuit.num_vars() {
        return Err(CliError::data(format!(
            "{}: {} features, model expects {}",
            a.data,
            train_data.num_vars(),
            circuit.num_vars()
        )));
    }
    check_labels(&train_data, &a.data, circuit.num_classes())?;
    if let Some(v) = &valid_data {
        check_labels(v, &a.data, circuit.num_classes())?;
    }

    prepare_out(&a.out)?;
    let mut trainer = Trainer::new(cfg.clone(), &params)?;
    let mut table = String::from(METRIC_HEADER) + "\n";
    say!("{METRIC_HEADER}");
    for epoch in 1..=cfg.epochs {
        trainer.run_epoch(&circuit, &mut params, &train_data)?;
        let t = evaluate(&circuit, &params, &train_data, None, cfg.lambda)?;
        let v = valid_data
            .as_ref()
            .map(|d| evaluate(&circuit, &params, d, None, cfg.lambda))
            .transpose()?;
        let row = metric_row(prior_epochs + epoch, &t, v.as_ref());
        say!("{row}");
        table += &row;
        table.push('\n');
    }
    write_file(&mut manifest, a.out.join("metrics.csv"), &table)?;

    let meta = ModelMeta {
        scaling,
        lambda: Some(cfg.lambda),
        epochs: prior_epochs + cfg.epochs,
        train_seed: Some(cfg.seed),
    };
    let model_path = a.out.join("model.json");
    save_model(&model_path, &circuit, &params, &meta, encoding(a.encoding))?;
    manifest.output(&model_path);
    manifest.finish(&a.out)?;
    eprintln!("wrote {}", model_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalRecord {
    samples: usize,
    accuracy: f64,
    cross_entropy: f64,
    nll: f64,
    mean_log_px: f64,
}

fn eval_record(
    m: &LoadedModel,
    data: &Dataset,
    spec: &DataSpec,
    prior: &LogPrior,
) -> Result<EvalRecord, CliError> {
    let y = labels(data, spec)?;
    check_labels(data, spec, m.circuit.num_classes())?;
    let roots = forward_log(&m.circuit, &m.params, data.features(), None, None)?;
    let joint = joint_from_roots(roots.view(), prior)?;
    let pred = ratspn_core::inference::argmax_rows(joint.view());
    let obj = hybrid_objective(roots.view(), &y, m.circuit.num_vars(), 1.0)?;
    let log_px = logsumexp_rows(joint.view());
    Ok(EvalRecord {
        samples: data.len(),
        accuracy: accuracy(&pred, &y)?,
        cross_entropy: obj.cross_entropy,
        nll: obj.nll,
        mean_log_px: log_px.mean().unwrap_or(f64::NAN),
    })
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("eval", config_json(a));
    let m = load_model(&a.model)?;
    let (data, record) = load_scaled(
        &a.data,
        a.csv.options(),
        &m.meta.scaling,
        m.circuit.num_vars(),
    )?;
    manifest.data.push(record);
    let prior = prior(a.prior, &data, m.circuit.num_classes())?;
    let r = eval_record(&m, &data, &a.data, &prior)?;
    let header = "samples,accuracy,cross_entropy,nll,mean_log_px";
    let row = format!(
        "{},{},{},{},{}",
        r.samples, r.accuracy, r.cross_entropy, r.nll, r.mean_log_px
    );
    say!("{header}\n{row}");
    prepare_out(&a.out)?;
    write_file(
        &mut manifest,
        a.out.join("eval.csv"),
        &format!("{header}\n{row}\n"),
    )?;
    manifest.finish(&a.out)?;
    Ok(())
}

pub fn sweep_missing(a: &SweepMissingArgs) -> Result<(), CliError> {
    if let Some(p) = a.fractions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::usage(format!(
            "missing fraction {p} not in [0, 1]"
        )));
    }
    let mut manifest = RunManifest::start("sweep-missing", config_json(a));
    manifest.seed("mask_seed", a.seed);
    let m = load_model(&a.model)?;
    let (data, record) = load_scaled(
        &a.data,
        a.csv.options(),
        &m.meta.scaling,
        m.circuit.num_vars(),
    )?;
    manifest.data.push(record);
    let y = labels(&data, &a.data)?;
    check_labels(&data, &a.data, m.circuit.num_classes())?;
    let prior = prior(a.prior, &data, m.circuit.num_classes())?;
    let header = "p,accuracy,observed_missing_fraction";
    let mut table = format!("{header}\n");
    say!("{header}");
    for &p in &a.fractions {
        let mask = random_missing_mask(data.len(), data.num_vars(), p, a.seed)?;
        let pred = classify(&m.circuit, &m.params, data.features(), Some(&mask), &prior)?;
        let observed = mask.count_missing() as f64 / (data.len() * data.num_vars()) as f64;
        let row = format!("{p},{},{observed}", accuracy(&pred, &y)?);
        say!("{row}");
        table += &row;
        table.push('\n');
    }
    prepare_out(&a.out)?;
    write_file(&mut manifest, a.out.join("sweep_missing.csv"), &table)?;
    manifest.finish(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct OodSummary {
    in_domain_samples: usize,
    out_domain_samples: usize,
    in_domain_mean_log_px: f64,
    out_domain_mean_log_px: f64,
    auroc: f64,
    outlier_threshold: f64,
    inlier_threshold: f64,
}

pub fn ood(a: &OodArgs) -> Result<(), CliError> {
    if !(0.0..=50.0).contains(&a.outlier_percentile) {
        return Err(CliError::usage("--outlier-percentile must be in [0, 50]"));
    }
    if a.bins == 0 {
        return Err(CliError::usage("--bins must be at least 1"));
    }
    let mut manifest = RunManifest::start("ood", config_json(a));
    let m = load_model(&a.model)?;
    let classes = m.circuit.num_classes();
    let mut score = |spec: &DataSpec| -> Result<Vec<f64>, CliError> {
        let (data, record) =
            load_scaled(spec, a.csv.options(), &m.meta.scaling, m.circuit.num_vars())?;
        manifest.data.push(record);
        let prior = prior(a.prior, &data, classes)?;
        Ok(ratspn_core::inference::log_marginal_input(
            &m.circuit,
            &m.params,
            data.features(),
            None,
            &prior,
        )?
        .to_vec())
    };
    let s_in = score(&a.in_domain)?;
    let s_out = score(&a.out_domain)?;

    let edges = shared_edges(&[&s_in, &s_out], a.bins)?;
    let h_in = histogram(&s_in, &edges)?;
    let h_out = histogram(&s_out, &edges)?;
    let mut hist = String::from("bin_lo,bin_hi,in_domain,out_domain\n");
    for k in 0..a.bins {
        writeln!(
            hist,
            "{},{},{},{}",
            edges[k],
            edges[k + 1],
            h_in.counts[k],
            h_out.counts[k]
        )
        .expect("string write");
    }
    let mut scores = String::from("set,index,log_px\n");
    for (set, s) in [("in", &s_in), ("out", &s_out)] {
        for (i, v) in s.iter().enumerate() {
            writeln!(scores, "{set},{i},{v}").expect("string write");
        }
    }
    let q = a.outlier_percentile / 100.0;
    let lo = percentile(&s_in, q)?;
    let hi = percentile(&s_in, 1.0 - q)?;
    let mut flagged = String::from("index,log_px,kind\n");
    for (i, &v) in s_in.iter().enumerate() {
        let kind = if v < lo {
            "outlier"
        } else if v > hi {
            "inlier"
        } else {
            continue;
        };
        writeln!(flagged, "{i},{v},{kind}").expect("string write");
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let summary = OodSummary {
        in_domain_samples: s_in.len(),
        out_domain_samples: s_out.len(),
        in_domain_mean_log_px: mean(&s_in),
        out_domain_mean_log_px: mean(&s_out),
        auroc: auroc(&s_in, &s_out)?,
        outlier_threshold: lo,
        inlier_threshold: hi,
    };
    let summary_text =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::data(e.to_string()))?;
    say!("{summary_text}");

    prepare_out(&a.out)?;
    write_file(&mut manifest, a.out.join("histogram.csv"), &hist)?;
    write_file(&mut manifest, a.out.join("scores.csv"), &scores)?;
    write_file(&mut manifest, a.out.join("outliers.csv"), &flagged)?;
    write_file(
        &mut manifest,
        a.out.join("summary.json"),
        &(summary_text + "\n"),
    )?;
    manifest.finish(&a.out)?;
    Ok(())
}

pub fn sweep_lambda(a: &SweepLambdaArgs) -> Result<(), CliError> {
    if a.lambdas.is_empty() {
        return Err(CliError::usage("--lambdas is empty"));
    }
    let configs = a
        .lambdas
        .iter()
        .map(|&l| train_config(&a.optim, l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut manifest = RunManifest::start("sweep-lambda", config_json(a));
    manifest.seed("seed", a.optim.seed);
    let base = load_model(&a.model)?;
    let n = base.circuit.num_vars();
    let (train_data, record) = load_scaled(&a.data, a.csv.options(), &base.meta.scaling, n)?;
    manifest.data.push(record);
    let (test_data, record) = load_scaled(&a.test, a.csv.options(), &base.meta.scaling, n)?;
    manifest.data.push(record);
    labels(&train_data, &a.data)?;
    check_labels(&train_data, &a.data, base.circuit.num_classes())?;
    let uniform = LogPrior::uniform(base.circuit.num_classes());

    prepare_out(&a.out)?;
    let header = "lambda,test_accuracy,test_cross_entropy,test_nll,test_mean_log_px,model";
    let mut table = format!("{header}\n");
    say!("{header}");
    for cfg in &configs {
        let (start, prior_epochs) = if a.from_scratch {
            let range = FeatureRange::of(train_data.features());
            (
                ParameterSet::init(
                    &base.circuit,
                    base.params.train_variance(),
                    Some(&range),
                    cfg.seed,
                ),
                0,
            )
        } else {
            (base.params.clone(), base.meta.epochs)
        };
        let (params, _) =
            ratspn_core::training::train(&base.circuit, &start, &train_data, None, cfg)?;
        let model = LoadedModel {
            circuit: base.circuit.clone(),
            params,
            meta: ModelMeta {
                scaling: base.meta.scaling.clone(),
                lambda: Some(cfg.lambda),
                epochs: prior_epochs + cfg.epochs,
                train_seed: Some(cfg.seed),
            },
            encoding: encoding(a.encoding),
        };
        let r = eval_record(&model, &test_data, &a.test, &uniform)?;
        let path = a.out.join(format!("model-lambda-{}.json", cfg.lambda));
        save_model(
            &path,
            &model.circuit,
            &model.params,
            &model.meta,
            model.encoding,
        )?;
        manifest.output(&path);
        let row = format!(
            "{},{},{},{},{},{}",
            cfg.lambda,
            r.accuracy,
            r.cross_entropy,
            r.nll,
            r.mean_log_px,
            path.display()
        );
        say!("{row}");
        table += &row;
        table.push('\n');
    }
    write_file(&mut manifest, a.out.join("lambda_sweep.csv"), &table)?;
    manifest.finish(&a.out)?;
    Ok(())
}
