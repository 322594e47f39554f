mod args;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use condsel::cluster_filter::Norm;
use condsel::cost_model::{
    calibrate, estimate_cost, supervised_imagenet_observations, CostObservation, CostProfile,
    OverheadKind,
};
use condsel::data::{load_labelled, save_labels};
use condsel::domain_filter::DomainTrainConfig;
use condsel::filter::FilterModel;
use condsel::kmeans::{fit_kmeans, KMeansParams};
use condsel::selection::{write_selection, RunReport};
use condsel::sequential::{
    compare_independent, run_plan, MockTrainer, Plan, ProxyTrainer, SequentialRun, TaskOutcome,
    Trainer,
};
use condsel::synth::{generate_mixture, MixtureSpec};
use condsel::{
    load_embeddings, run_filter, save_embeddings, EmbeddingFormat, FilterSettings, Method,
};

use args::*;

enum Failure {
    Usage(String),
    Data(condsel::Error),
    Internal(String),
}

impl From<condsel::Error> for Failure {
    fn from(e: condsel::Error) -> Self {
        match e {
            condsel::Error::Trainer(_) | condsel::Error::Serialize(_) => {
                Failure::Internal(e.to_string())
            }
            other => Failure::Data(other),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };

    let level = if cli.global.quiet {
        log::LevelFilter::Error
    } else if cli.global.debug {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    log::debug!("resolved arguments: {cli:#?}");

    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    }

    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli)));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Data(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
        Err(_) => ExitCode::from(3),
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Kmeans(a) => kmeans(g, a),
        Command::Filter(f) => filter(g, f),
        Command::Sequential(SequentialCommand::Run { opts, out_dir }) => {
            sequential_run(g, opts, out_dir)
        }
        Command::Sequential(SequentialCommand::Compare {
            opts,
            independent_epochs,
        }) => sequential_compare(g, opts, *independent_epochs),
        Command::Cost(c) => match &c.command {
            None => cost_estimate(g, &c.estimate),
            Some(CostCommand::Estimate(e)) => cost_estimate(g, e),
            Some(CostCommand::Calibrate(a)) => cost_calibrate(g, a),
        },
        Command::Synth(a) => synth(g, a),
    }
}

fn load(path: &Path) -> condsel::Result<condsel::EmbeddingSet> {
    load_embeddings(path, EmbeddingFormat::from_path(path))
}

/// Report for commands that do not select rows.
fn plain_report(name: &str, seed: u64, start: Instant) -> RunReport {
    RunReport {
        method: name.into(),
        order: "none".into(),
        budget: 0,
        selected_count: 0,
        source_count: 0,
        score_min: 0.0,
        score_max: 0.0,
        score_mean: 0.0,
        seed,
        wall_ms: start.elapsed().as_millis() as u64,
        selection_digest: String::new(),
        input_digests: Vec::new(),
        warnings: Vec::new(),
        params: Default::default(),
    }
}

fn emit_report(g: &GlobalOpts, report: &RunReport) -> Outcome {
    if let Some(path) = &g.report {
        report.write(path)?;
    }
    Ok(())
}

fn train_config(t: &TrainOpts, seed: u64) -> DomainTrainConfig {
    DomainTrainConfig {
        epochs: t.epochs,
        learning_rate: t.lr,
        val_fraction: t.val_fraction,
        accuracy_band: (t.band[0], t.band[1]),
        seed,
    }
}

fn kmeans(g: &GlobalOpts, a: &KmeansArgs) -> Outcome {
    let start = Instant::now();
    let target = load(&a.target)?;
    let params = KMeansParams {
        k: a.k,
        seed: g.seed(),
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        n_init: a.n_init,
    };
    let model = fit_kmeans(&target, &params)?;
    save_embeddings(&model.to_embeddings()?, &a.out)?;
    println!(
        "k={} inertia={} iterations={}",
        model.k, model.inertia, model.iterations_run
    );
    let mut report = plain_report("kmeans", g.seed(), start);
    report.source_count = target.count() as u64;
    report.input_digests = vec![target.digest()];
    report
        .param("k", model.k)
        .param("inertia", model.inertia)
        .param("iterations", model.iterations_run)
        .param("n_init", a.n_init);
    emit_report(g, &report)
}

fn filter(g: &GlobalOpts, cmd: &FilterCommand) -> Outcome {
    let mut settings = FilterSettings {
        seed: g.seed(),
        ..Default::default()
    };
    let (io, method, target) = match cmd {
        FilterCommand::Cluster {
            io,
            k,
            agg,
            p,
            n_init,
            ..
        } => {
            settings.kmeans = KMeansParams {
                k: *k,
                n_init: *n_init,
                ..KMeansParams::default()
            };
            settings.p = Norm::from_p(*p)?;
            let method = match agg {
                Agg::Avg => Method::ClusterAvg,
                Agg::Min => Method::ClusterMin,
            };
            (io, method, load(&io.target)?)
        }
        FilterCommand::Domain { io, train, .. } => {
            settings.train = train_config(train, g.seed());
            (io, Method::Domain, load(&io.target)?)
        }
        FilterCommand::Entropy {
            io,
            target_labels,
            mode,
            train,
            ..
        } => {
            settings.train = train_config(train, g.seed());
            let method = match mode {
                EntropyModeArg::Active => Method::EntropyActive,
                EntropyModeArg::Inverse => Method::EntropyInverse,
            };
            (io, method, load_labelled(&io.target, Some(target_labels))?)
        }
    };
    log::debug!("filter settings: {settings:#?}");
    let source = load(&io.source)?;
    let run = run_filter(method, &source, &target, io.budget, &settings)?;

    match &io.out {
        Some(path) => write_selection(&run.selection, path)?,
        None => {
            let mut text = String::with_capacity(run.selection.selected.len() * 8);
            for i in &run.selection.selected {
                let _ = writeln!(text, "{i}");
            }
            print!("{text}");
        }
    }
    if let Some(path) = &io.scores {
        let mut text = String::with_capacity(run.selection.scores.len() * 20);
        for s in &run.selection.scores {
            let _ = writeln!(text, "{s}");
        }
        fs::write(path, text).map_err(|e| Failure::Data(io_error(path, e)))?;
    }
    match (cmd, &run.model) {
        (
            FilterCommand::Cluster {
                centers: Some(path),
                ..
            },
            FilterModel::Centers(m),
        ) => save_embeddings(&m.to_embeddings()?, path)?,
        (
            FilterCommand::Domain {
                classifier: Some(path),
                ..
            },
            FilterModel::Domain(c),
        ) => c.save(path)?,
        (
            FilterCommand::Entropy {
                classifier: Some(path),
                ..
            },
            FilterModel::Target(c),
        ) => c.save(path)?,
        _ => {}
    }
    for w in &run.report.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{}: kept {} of {} source rows (digest {})",
        method,
        run.selection.selected.len(),
        source.count(),
        run.selection.digest()
    );
    emit_report(g, &run.report)
}

fn io_error(path: &Path, e: std::io::Error) -> condsel::Error {
    condsel::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn plan_base(plan: &Path) -> PathBuf {
    plan.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn absolute(path: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(path).map_err(|e| Failure::Data(io_error(path, e)))
}

fn sequential_settings(g: &GlobalOpts, o: &SequentialOpts) -> FilterSettings {
    FilterSettings {
        seed: g.seed(),
        kmeans: KMeansParams::new(o.k, g.seed()),
        p: Norm::L2,
        train: train_config(&o.train, g.seed()),
    }
}

fn print_run<S>(run: &SequentialRun<S>) {
    for r in &run.results {
        match &r.outcome {
            TaskOutcome::Completed {
                metric,
                cumulative_epochs,
                state_digest,
                ..
            } => println!(
                "{}\tcompleted\tepochs={}\tcumulative={}\tmetric={:.6}\tstate={}",
                r.task_id, r.epochs, cumulative_epochs, metric, state_digest
            ),
            TaskOutcome::Skipped { error } => println!("{}\tskipped\t{error}", r.task_id),
            TaskOutcome::Aborted { error } => println!("{}\taborted\t{error}", r.task_id),
        }
    }
    println!("total_epochs={}", run.state.cumulative_epochs);
}

fn sequential_run(g: &GlobalOpts, o: &SequentialOpts, out_dir: &Path) -> Outcome {
    let start = Instant::now();
    let plan = Plan::load(&o.plan)?;
    let base = plan_base(&o.plan);
    let source = absolute(&o.source)?;
    let mut settings = sequential_settings(g, o);
    log::debug!("filter settings: {settings:#?}");

    fn go<T: Trainer>(
        plan: &Plan,
        base: &Path,
        source: &Path,
        trainer: &mut T,
        settings: &mut FilterSettings,
        out_dir: &Path,
    ) -> Result<(u64, usize, Option<String>), Failure> {
        let run = run_plan(plan, base, source, trainer, settings, Some(out_dir))?;
        print_run(&run);
        let completed = run
            .results
            .iter()
            .filter(|r| matches!(r.outcome, TaskOutcome::Completed { .. }))
            .count();
        Ok((run.state.cumulative_epochs, completed, run.aborted))
    }

    let (epochs, completed, aborted) = match o.trainer {
        TrainerKind::Proxy => go(
            &plan,
            &base,
            &source,
            &mut ProxyTrainer::new(o.prototypes, g.seed()),
            &mut settings,
            out_dir,
        )?,
        TrainerKind::Mock => go(
            &plan,
            &base,
            &source,
            &mut MockTrainer::new(),
            &mut settings,
            out_dir,
        )?,
    };
    let mut report = plain_report("sequential", g.seed(), start);
    report
        .param("tasks", plan.tasks.len())
        .param("completed", completed)
        .param("cumulative_epochs", epochs);
    if let Some(e) = &aborted {
        report.warnings.push(format!("run aborted: {e}"));
    }
    emit_report(g, &report)?;
    match aborted {
        Some(e) => Err(Failure::Internal(format!("run aborted: {e}"))),
        None => Ok(()),
    }
}

fn sequential_compare(g: &GlobalOpts, o: &SequentialOpts, independent_epochs: u32) -> Outcome {
    let start = Instant::now();
    let plan = Plan::load(&o.plan)?;
    let tasks = plan.load_tasks(&plan_base(&o.plan))?;
    let source = load(&o.source)?;
    let mut settings = sequential_settings(g, o);
    let cmp = match o.trainer {
        TrainerKind::Proxy => compare_independent(
            &tasks,
            &source,
            &mut ProxyTrainer::new(o.prototypes, g.seed()),
            &mut settings,
            independent_epochs,
        )?,
        TrainerKind::Mock => compare_independent(
            &tasks,
            &source,
            &mut MockTrainer::new(),
            &mut settings,
            independent_epochs,
        )?,
    };
    print!("{}", cmp.to_text()?);
    let mut report = plain_report("sequential-compare", g.seed(), start);
    report.source_count = source.count() as u64;
    report.input_digests = vec![source.digest()];
    report
        .param("sequential_total", cmp.sequential_total)
        .param("independent_total", cmp.independent_total);
    emit_report(g, &report)
}

fn default_profile() -> condsel::Result<CostProfile> {
    Ok(calibrate(
        &supervised_imagenet_observations(),
        OverheadKind::PerImageEpoch,
    )?
    .profile)
}

fn cost_estimate(g: &GlobalOpts, e: &EstimateArgs) -> Outcome {
    let start = Instant::now();
    let profile = match &e.profile {
        Some(p) => CostProfile::load(p)?,
        None => {
            log::debug!("no profile given; fitting to full supervised ImageNet runs");
            default_profile()?
        }
    };
    log::debug!("cost profile: {profile:?}");
    let mut rows = Vec::new();
    for &images in &e.images {
        for &epochs in &e.epochs {
            for &resolution in &e.resolution {
                rows.push((
                    images,
                    epochs,
                    resolution,
                    estimate_cost(images, epochs, resolution, &profile)?,
                ));
            }
        }
    }
    if let [(images, epochs, resolution, hours)] = rows[..] {
        println!("{hours:.2} h (images={images} epochs={epochs} resolution={resolution})");
    } else {
        println!(
            "{:>12} {:>8} {:>10} {:>10}",
            "images", "epochs", "resolution", "hours"
        );
        for (images, epochs, resolution, hours) in &rows {
            println!("{images:>12} {epochs:>8} {resolution:>10} {hours:>10.2}");
        }
    }
    let mut report = plain_report("cost-estimate", g.seed(), start);
    report.param("estimates", rows.len());
    emit_report(g, &report)
}

fn parse_observation(text: &str) -> Result<CostObservation, Failure> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || {
        Failure::Usage(format!(
            "observation {text:?} is not IMAGES,EPOCHS,RESOLUTION,HOURS"
        ))
    };
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok(CostObservation::new(
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
        parts[3].parse().map_err(|_| bad())?,
    ))
}

fn cost_calibrate(g: &GlobalOpts, a: &CalibrateArgs) -> Outcome {
    let start = Instant::now();
    let mut obs = a
        .observations
        .iter()
        .map(|o| parse_observation(o))
        .collect::<Result<Vec<_>, _>>()?;
    if a.imagenet {
        obs.extend(supervised_imagenet_observations());
    }
    let kind = match a.overhead {
        OverheadArg::Fixed => OverheadKind::Fixed,
        OverheadArg::PerImageEpoch => OverheadKind::PerImageEpoch,
    };
    let cal = calibrate(&obs, kind)?;
    cal.profile.save(&a.out)?;
    println!(
        "throughput_coeff={:e} overhead={:e} rms_residual={:.4}",
        cal.profile.throughput_coeff, cal.profile.overhead, cal.rms
    );
    for (o, r) in obs.iter().zip(&cal.residuals) {
        println!(
            "images={} epochs={} resolution={} observed={} residual={:+.4}",
            o.images, o.epochs, o.resolution, o.hours, r
        );
    }
    let mut report = plain_report("cost-calibrate", g.seed(), start);
    report
        .param("observations", obs.len())
        .param("rms_residual", cal.rms);
    emit_report(g, &report)
}

fn synth(g: &GlobalOpts, a: &SynthArgs) -> Outcome {
    let start = Instant::now();
    let mut spec = MixtureSpec::load(&a.spec)?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let mix = generate_mixture(&spec)?;
    save_embeddings(&mix.set, &a.out)?;
    if let Some(path) = &a.labels {
        let labels: Vec<i32> = mix.components.iter().map(|&c| c as i32).collect();
        save_labels(&labels, path)?;
    }
    log::info!(
        "wrote {} rows of dimension {}",
        mix.set.count(),
        mix.set.dim()
    );
    let mut report = plain_report("synth", spec.seed, start);
    report.source_count = mix.set.count() as u64;
    report.input_digests = vec![mix.set.digest()];
    report.param("components", spec.components.len());
    emit_report(g, &report)
}
