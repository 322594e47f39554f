//! Sequential conditional pre-training.
//!
//! Target tasks arrive over time. Each one is pulled from a bounded blocking
//! queue by a single consumer which filters the source conditioned on that
//! task's target, continues training the chained model on the subset for the
//! task's epoch budget, and then evaluates it on the target. Tasks complete in
//! arrival order and task `i` always starts from task `i - 1`'s final state.
//!
//! Actual network pre-training is behind the [`Trainer`] trait. Two
//! implementations ship here: [`MockTrainer`], which only records calls, and
//! [`ProxyTrainer`], a nearest-prototype model over embeddings cheap enough
//! for statistical tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::thread;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_labelled, EmbeddingFormat, EmbeddingSet};
use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterSettings};
use crate::kmeans::{fit_kmeans, nearest, refine_kmeans, ClusterModel, KMeansParams};
use crate::selection::{digest_indices, write_indices, Method, RunReport, ScoredSelection};

/// Epochs given to every task when it is pre-trained from scratch.
pub const DEFAULT_INDEPENDENT_EPOCHS: u32 = 100;

const QUEUE_CAPACITY: usize = 4;

/// `[100, 40, 20]`, then 20 for every further task.
pub fn default_epoch_schedule(tasks: usize) -> Vec<u32> {
    (0..tasks)
        .map(|i| match i {
            0 => 100,
            1 => 40,
            _ => 20,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub task_id: String,
    pub target_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_labels_path: Option<PathBuf>,
    pub arrival_index: u64,
    pub filter_method: Method,
    pub budget: usize,
    pub epochs: u32,
}

/// Plan file: a TOML array of `[[task]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    #[serde(rename = "task")]
    pub tasks: Vec<TaskDescriptor>,
}

impl Plan {
    pub fn validate(&self) -> Result<()> {
        validate_descriptors(self.tasks.iter())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: Plan = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Read every target named by the plan; relative paths resolve against `base`.
    pub fn load_tasks(&self, base: &Path) -> Result<Vec<Task>> {
        self.tasks
            .iter()
            .map(|d| {
                Ok(Task {
                    target: load_target(d, base)?,
                    descriptor: d.clone(),
                })
            })
            .collect()
    }
}

fn validate_descriptors<'a>(tasks: impl Iterator<Item = &'a TaskDescriptor>) -> Result<()> {
    let mut last: Option<u64> = None;
    let mut any = false;
    for t in tasks {
        any = true;
        if t.budget == 0 || t.epochs == 0 {
            return Err(Error::arg(format!(
                "task {}: budget and epochs must be positive",
                t.task_id
            )));
        }
        if last.is_some_and(|l| t.arrival_index <= l) {
            return Err(Error::arg(format!(
                "task {}: arrival indices must be strictly increasing",
                t.task_id
            )));
        }
        last = Some(t.arrival_index);
    }
    if !any {
        return Err(Error::arg("plan has no tasks"));
    }
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_target(d: &TaskDescriptor, base: &Path) -> Result<EmbeddingSet> {
    let labels = d.target_labels_path.as_ref().map(|p| resolve(base, p));
    load_labelled(resolve(base, &d.target_path), labels.as_deref())
}

/// A task with its target already in memory.
#[derive(Debug, Clone)]
pub struct Task {
    pub descriptor: TaskDescriptor,
    pub target: EmbeddingSet,
}

/// Pre-training backend driven by the scheduler.
pub trait Trainer {
    type State: Clone;

    fn init(&mut self) -> Result<Self::State>;
    /// Continue training `state` on `subset` for `epochs` passes.
    fn train(
        &mut self,
        state: Self::State,
        subset: &EmbeddingSet,
        epochs: u32,
    ) -> Result<Self::State>;
    /// Task metric of `state` on `target`; larger is better.
    fn evaluate(&mut self, state: &Self::State, target: &EmbeddingSet) -> Result<f64>;
    fn state_digest(&self, state: &Self::State) -> String;
}

/// Source rows chosen for one task.
#[derive(Debug, Clone)]
pub struct Selected {
    pub indices: Vec<usize>,
    pub report: RunReport,
    pub selection: Option<ScoredSelection>,
}

/// Produces the conditioned subset for a task.
pub trait Selector {
    fn select(
        &mut self,
        task: &TaskDescriptor,
        source: &EmbeddingSet,
        target: &EmbeddingSet,
    ) -> Result<Selected>;
}

/// Filters with the method named in each task descriptor.
impl Selector for FilterSettings {
    fn select(
        &mut self,
        task: &TaskDescriptor,
        source: &EmbeddingSet,
        target: &EmbeddingSet,
    ) -> Result<Selected> {
        let run = run_filter(task.filter_method, source, target, task.budget, self)?;
        Ok(Selected {
            indices: run.selection.selected.clone(),
            report: run.report,
            selection: Some(run.selection),
        })
    }
}

/// Unconditioned baseline: a uniform sample of `budget` rows, ignoring the target.
#[derive(Debug, Clone)]
pub struct UniformSelector {
    pub seed: u64,
}

impl Selector for UniformSelector {
    fn select(
        &mut self,
        task: &TaskDescriptor,
        source: &EmbeddingSet,
        _target: &EmbeddingSet,
    ) -> Result<Selected> {
        let seed = self.seed ^ task.arrival_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let budget = task.budget.min(source.count());
        let mut indices = index::sample(&mut rng, source.count(), budget).into_vec();
        indices.sort_unstable();
        let report = RunReport {
            method: "uniform".into(),
            order: "none".into(),
            budget: task.budget as u64,
            selected_count: indices.len() as u64,
            source_count: source.count() as u64,
            score_min: 0.0,
            score_max: 0.0,
            score_mean: 0.0,
            seed,
            wall_ms: 0,
            selection_digest: digest_indices(&indices),
            input_digests: vec![source.digest()],
            warnings: Vec::new(),
            params: Default::default(),
        };
        Ok(Selected {
            indices,
            report,
            selection: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub task_id: String,
    pub epochs: u32,
    pub subset_digest: String,
}

/// The chained model plus its training history.
#[derive(Debug, Clone)]
pub struct TrainerState<S> {
    pub model: S,
    pub cumulative_epochs: u64,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutcome {
    Completed {
        metric: f64,
        subset_digest: String,
        state_digest: String,
        cumulative_epochs: u64,
    },
    /// Loading or filtering failed; the chained state was left untouched.
    Skipped { error: String },
    /// The trainer failed; no later task was run.
    Aborted { error: String },
}

#[derive(Debug, Clone)]
pub struct TaskResult {
    pub task_id: String,
    pub arrival_index: u64,
    pub epochs: u32,
    pub outcome: TaskOutcome,
    pub selected: Option<Selected>,
}

impl TaskResult {
    pub fn metric(&self) -> Option<f64> {
        match self.outcome {
            TaskOutcome::Completed { metric, .. } => Some(metric),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequentialRun<S> {
    pub results: Vec<TaskResult>,
    pub state: TrainerState<S>,
    pub aborted: Option<String>,
}

/// Core consumer loop. `load` turns a queued item into its descriptor, the
/// source to filter and the target; `sink` sees every result as it is produced.
fn drive<I, T, Sel, L, K>(
    items: Vec<I>,
    mut load: L,
    trainer: &mut T,
    selector: &mut Sel,
    mut sink: K,
) -> Result<SequentialRun<T::State>>
where
    I: Send,
    T: Trainer,
    Sel: Selector,
    L: FnMut(
        I,
    ) -> (
        TaskDescriptor,
        Result<(std::sync::Arc<EmbeddingSet>, EmbeddingSet)>,
    ),
    K: FnMut(&TaskResult, &TrainerState<T::State>) -> Result<()>,
{
    let (tx, rx) = sync_channel::<I>(QUEUE_CAPACITY);
    thread::scope(|scope| {
        scope.spawn(move || {
            for item in items {
                // the consumer hung up after an abort
                if tx.send(item).is_err() {
                    break;
                }
            }
        });

        let mut state = TrainerState {
            model: trainer.init()?,
            cumulative_epochs: 0,
            history: Vec::new(),
        };
        let mut results = Vec::new();
        let mut aborted = None;

        for item in rx.iter() {
            let (desc, loaded) = load(item);
            let mut result = TaskResult {
                task_id: desc.task_id.clone(),
                arrival_index: desc.arrival_index,
                epochs: desc.epochs,
                outcome: TaskOutcome::Skipped {
                    error: String::new(),
                },
                selected: None,
            };

            let prepared = loaded.and_then(|(source, target)| {
                let selected = selector.select(&desc, &source, &target)?;
                let subset = source.subset(&selected.indices)?;
                Ok((selected, subset, target))
            });
            let (selected, subset, target) = match prepared {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("task {} skipped: {e}", desc.task_id);
                    result.outcome = TaskOutcome::Skipped {
                        error: e.to_string(),
                    };
                    sink(&result, &state)?;
                    results.push(result);
                    continue;
                }
            };
            let subset_digest = digest_indices(&selected.indices);
            result.selected = Some(selected);

            let trained = trainer
                .train(state.model.clone(), &subset, desc.epochs)
                .and_then(|model| {
                    let metric = trainer.evaluate(&model, &target)?;
                    Ok((model, metric))
                });
            match trained {
                Ok((model, metric)) => {
                    state.model = model;
                    state.cumulative_epochs += desc.epochs as u64;
                    state.history.push(HistoryEntry {
                        task_id: desc.task_id.clone(),
                        epochs: desc.epochs,
                        subset_digest: subset_digest.clone(),
                    });
                    result.outcome = TaskOutcome::Completed {
                        metric,
                        subset_digest,
                        state_digest: trainer.state_digest(&state.model),
                        cumulative_epochs: state.cumulative_epochs,
                    };
                    sink(&result, &state)?;
                    results.push(result);
                }
                Err(e) => {
                    log::error!("task {} aborted the run: {e}", desc.task_id);
                    result.outcome = TaskOutcome::Aborted {
                        error: e.to_string(),
                    };
                    sink(&result, &state)?;
                    results.push(result);
                    aborted = Some(e.to_string());
                    break;
                }
            }
        }
        drop(rx);
        Ok(SequentialRun {
            results,
            state,
            aborted,
        })
    })
}

/// Run in-memory tasks against a fixed source.
pub fn run_sequential<T: Trainer, Sel: Selector>(
    tasks: Vec<Task>,
    source: &EmbeddingSet,
    trainer: &mut T,
    selector: &mut Sel,
) -> Result<SequentialRun<T::State>> {
    validate_descriptors(tasks.iter().map(|t| &t.descriptor))?;
    let source = std::sync::Arc::new(source.clone());
    drive(
        tasks,
        |t| (t.descriptor, Ok((source.clone(), t.target))),
        trainer,
        selector,
        |_, _| Ok(()),
    )
}

/// File-driven run. The source is re-read for every task (it may have grown
/// between arrivals). With `out_dir`, each finished task leaves
/// `<task_id>.sel.txt`, `<task_id>.report.toml` and `<task_id>.state.toml`.
pub fn run_plan<T: Trainer, Sel: Selector>(
    plan: &Plan,
    base: &Path,
    source_path: &Path,
    trainer: &mut T,
    selector: &mut Sel,
    out_dir: Option<&Path>,
) -> Result<SequentialRun<T::State>> {
    plan.validate()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let source_path = resolve(base, source_path);
    let load = |d: TaskDescriptor| {
        let loaded = (|| {
            let source = crate::data::load_embeddings(
                &source_path,
                EmbeddingFormat::from_path(&source_path),
            )?;
            let target = load_target(&d, base)?;
            Ok((std::sync::Arc::new(source), target))
        })();
        (d, loaded)
    };
    let sink = |r: &TaskResult, state: &TrainerState<T::State>| -> Result<()> {
        let Some(dir) = out_dir else { return Ok(()) };
        write_task_outputs(dir, r, state)
    };
    drive(plan.tasks.clone(), load, trainer, selector, sink)
}

#[derive(Serialize)]
struct StateRecord<'a> {
    task_id: &'a str,
    status: &'a str,
    cumulative_epochs: u64,
    state_digest: &'a str,
    subset_digest: &'a str,
    metric: Option<f64>,
    error: Option<&'a str>,
    history: &'a [HistoryEntry],
}

fn write_task_outputs<S>(dir: &Path, r: &TaskResult, state: &TrainerState<S>) -> Result<()> {
    if let Some(sel) = &r.selected {
        write_indices(&sel.indices, dir.join(format!("{}.sel.txt", r.task_id)))?;
        sel.report
            .write(dir.join(format!("{}.report.toml", r.task_id)))?;
    }
    let record = match &r.outcome {
        TaskOutcome::Completed {
            metric,
            subset_digest,
            state_digest,
            cumulative_epochs,
        } => StateRecord {
            task_id: &r.task_id,
            status: "completed",
            cumulative_epochs: *cumulative_epochs,
            state_digest,
            subset_digest,
            metric: Some(*metric),
            error: None,
            history: &state.history,
        },
        TaskOutcome::Skipped { error } | TaskOutcome::Aborted { error } => StateRecord {
            task_id: &r.task_id,
            status: if matches!(r.outcome, TaskOutcome::Skipped { .. }) {
                "skipped"
            } else {
                "aborted"
            },
            cumulative_epochs: state.cumulative_epochs,
            state_digest: "",
            subset_digest: "",
            metric: None,
            error: Some(error),
            history: &state.history,
        },
    };
    let text = toml::to_string(&record).map_err(|e| Error::Serialize(e.to_string()))?;
    let path = dir.join(format!("{}.state.toml", r.task_id));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskMetric {
    pub task_id: String,
    pub epochs: u32,
    pub metric: Option<f64>,
}

/// Epoch accounting for chained versus from-scratch training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochComparison {
    pub sequential_total: u64,
    pub independent_total: u64,
    pub sequential: Vec<TaskMetric>,
    pub independent: Vec<TaskMetric>,
}

impl EpochComparison {
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Run the plan sequentially, then again with every task trained from a
/// fresh `init()` for `default_epochs`.
pub fn compare_independent<T: Trainer, Sel: Selector>(
    tasks: &[Task],
    source: &EmbeddingSet,
    trainer: &mut T,
    selector: &mut Sel,
    default_epochs: u32,
) -> Result<EpochComparison> {
    validate_descriptors(tasks.iter().map(|t| &t.descriptor))?;
    if default_epochs == 0 {
        return Err(Error::arg("default epoch budget must be positive"));
    }
    let seq = run_sequential(tasks.to_vec(), source, trainer, selector)?;
    let sequential: Vec<TaskMetric> = seq
        .results
        .iter()
        .map(|r| TaskMetric {
            task_id: r.task_id.clone(),
            epochs: r.epochs,
            metric: r.metric(),
        })
        .collect();

    let mut independent = Vec::with_capacity(tasks.len());
    let mut independent_total = 0u64;
    for task in tasks {
        let mut fresh = task.clone();
        fresh.descriptor.epochs = default_epochs;
        let run = run_sequential(vec![fresh], source, trainer, selector)?;
        let r = &run.results[0];
        independent_total += run.state.cumulative_epochs;
        independent.push(TaskMetric {
            task_id: r.task_id.clone(),
            epochs: default_epochs,
            metric: r.metric(),
        });
    }
    Ok(EpochComparison {
        sequential_total: seq.state.cumulative_epochs,
        independent_total,
        sequential,
        independent,
    })
}

/// One recorded trainer call.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerCall {
    Init {
        state: u64,
    },
    Train {
        from: u64,
        to: u64,
        rows: usize,
        epochs: u32,
        subset_digest: String,
    },
    Evaluate {
        state: u64,
        rows: usize,
    },
}

/// Trains nothing; hands out fresh state ids and logs every call.
#[derive(Debug, Default)]
pub struct MockTrainer {
    pub calls: Vec<TrainerCall>,
    next_id: u64,
    /// Fail the n-th (0-based) `train` call.
    pub fail_on_train: Option<usize>,
    trains: usize,
}

impl MockTrainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn failing_on(n: usize) -> Self {
        Self {
            fail_on_train: Some(n),
            ..Self::default()
        }
    }

    pub fn train_calls(&self) -> Vec<&TrainerCall> {
        self.calls
            .iter()
            .filter(|c| matches!(c, TrainerCall::Train { .. }))
            .collect()
    }

    fn fresh(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }
}

impl Trainer for MockTrainer {
    type State = u64;

    fn init(&mut self) -> Result<u64> {
        let state = self.fresh();
        self.calls.push(TrainerCall::Init { state });
        Ok(state)
    }

    fn train(&mut self, state: u64, subset: &EmbeddingSet, epochs: u32) -> Result<u64> {
        let n = self.trains;
        self.trains += 1;
        if self.fail_on_train == Some(n) {
            return Err(Error::Trainer(format!("mock failure on train call {n}")));
        }
        let to = self.fresh();
        self.calls.push(TrainerCall::Train {
            from: state,
            to,
            rows: subset.count(),
            epochs,
            subset_digest: subset.digest(),
        });
        Ok(to)
    }

    fn evaluate(&mut self, state: &u64, target: &EmbeddingSet) -> Result<f64> {
        self.calls.push(TrainerCall::Evaluate {
            state: *state,
            rows: target.count(),
        });
        Ok(0.0)
    }

    fn state_digest(&self, state: &u64) -> String {
        format!("mock-{state}")
    }
}

/// Nearest-prototype stand-in for pre-training.
///
/// The model is a set of prototype vectors. Training runs one Lloyd pass
/// per epoch over the subset, starting from the previous prototypes (or
/// k-means++ seeds on the first task). The metric is the negated mean squared
/// distance from target rows to their nearest prototype, so prototypes that
/// cover the target's region score higher.
#[derive(Debug, Clone)]
pub struct ProxyTrainer {
    pub prototypes: usize,
    pub seed: u64,
}

impl ProxyTrainer {
    pub fn new(prototypes: usize, seed: u64) -> Self {
        Self { prototypes, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProxyModel {
    pub dim: usize,
    /// Row-major prototypes; empty before the first task.
    pub centers: Vec<f64>,
}

impl Trainer for ProxyTrainer {
    type State = ProxyModel;

    fn init(&mut self) -> Result<ProxyModel> {
        if self.prototypes == 0 {
            return Err(Error::Trainer(
                "proxy trainer needs at least one prototype".into(),
            ));
        }
        Ok(ProxyModel::default())
    }

    fn train(
        &mut self,
        state: ProxyModel,
        subset: &EmbeddingSet,
        epochs: u32,
    ) -> Result<ProxyModel> {
        if subset.is_empty() {
            return Err(Error::Trainer("empty training subset".into()));
        }
        let fitted = if state.centers.is_empty() {
            let params = KMeansParams {
                k: self.prototypes.min(subset.count()),
                seed: self.seed,
                max_iters: epochs as usize,
                rel_tol: 0.0,
                n_init: 1,
            };
            fit_kmeans(subset, &params)?
        } else {
            let model = ClusterModel::from_centers(state.dim, state.centers)?;
            refine_kmeans(subset, &model, epochs as usize, 0.0)?
        };
        Ok(ProxyModel {
            dim: fitted.dim,
            centers: fitted.centers,
        })
    }

    fn evaluate(&mut self, state: &ProxyModel, target: &EmbeddingSet) -> Result<f64> {
        if state.centers.is_empty() {
            return Err(Error::Trainer("proxy model has not been trained".into()));
        }
        target.check_dim(state.dim, "proxy evaluation")?;
        if target.is_empty() {
            return Err(Error::Trainer("empty evaluation target".into()));
        }
        let total: f64 = target
            .rows()
            .map(|r| nearest(r, &state.centers, state.dim).1)
            .sum();
        Ok(-total / target.count() as f64)
    }

    fn state_digest(&self, state: &ProxyModel) -> String {
        let mut h = Sha256::new();
        h.update((state.dim as u64).to_le_bytes());
        for c in &state.centers {
            h.update(c.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, arrival: u64, epochs: u32, target: EmbeddingSet) -> Task {
        Task {
            descriptor: TaskDescriptor {
                task_id: id.into(),
                target_path: PathBuf::from(format!("{id}.emb")),
                target_labels_path: None,
                arrival_index: arrival,
                filter_method: Method::ClusterMin,
                budget: 3,
                epochs,
            },
            target,
        }
    }

    fn settings() -> FilterSettings {
        FilterSettings {
            kmeans: KMeansParams::new(1, 0),
            ..Default::default()
        }
    }

    fn source() -> EmbeddingSet {
        EmbeddingSet::new(1, (0..20).map(|i| i as f32).collect()).unwrap()
    }

    fn target_at(x: f32) -> EmbeddingSet {
        EmbeddingSet::new(1, vec![x, x + 0.5]).unwrap()
    }

    #[test]
    fn schedule() {
        assert_eq!(default_epoch_schedule(3), vec![100, 40, 20]);
        assert_eq!(default_epoch_schedule(5), vec![100, 40, 20, 20, 20]);
        assert_eq!(default_epoch_schedule(3).iter().sum::<u32>(), 160);
    }

    #[test]
    fn chained_states_and_call_order() {
        let tasks = vec![
            task("a", 0, 100, target_at(2.0)),
            task("b", 1, 40, target_at(10.0)),
            task("c", 2, 20, target_at(17.0)),
        ];
        let mut trainer = MockTrainer::new();
        let run = run_sequential(tasks, &source(), &mut trainer, &mut settings()).unwrap();
        assert!(run.aborted.is_none());
        assert_eq!(run.state.cumulative_epochs, 160);
        let trains = trainer.train_calls();
        assert_eq!(trains.len(), 3);
        let mut expected_from = 1;
        for (call, epochs) in trains.iter().zip([100, 40, 20]) {
            match call {
                TrainerCall::Train {
                    from,
                    to,
                    epochs: e,
                    rows,
                    ..
                } => {
                    assert_eq!(*from, expected_from);
                    assert_eq!(*e, epochs);
                    assert_eq!(*rows, 3);
                    expected_from = *to;
                }
                _ => unreachable!(),
            }
        }
        let ids: Vec<_> = run.results.iter().map(|r| r.task_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn subset_digest_tracks_each_target() {
        let tasks = vec![
            task("a", 0, 1, target_at(2.0)),
            task("b", 1, 1, target_at(15.0)),
        ];
        let run =
            run_sequential(tasks, &source(), &mut MockTrainer::new(), &mut settings()).unwrap();
        assert_eq!(
            run.state.history[0].subset_digest,
            digest_indices(&[1, 2, 3])
        );
        assert_eq!(
            run.state.history[1].subset_digest,
            digest_indices(&[14, 15, 16])
        );
    }

    #[test]
    fn filter_failure_skips_task_and_keeps_state() {
        let bad = EmbeddingSet::new(2, vec![0.0, 0.0]).unwrap();
        let tasks = vec![
            task("a", 0, 100, target_at(2.0)),
            task("bad", 1, 40, bad),
            task("c", 2, 20, target_at(17.0)),
        ];
        let mut trainer = MockTrainer::new();
        let run = run_sequential(tasks, &source(), &mut trainer, &mut settings()).unwrap();
        assert!(matches!(
            run.results[1].outcome,
            TaskOutcome::Skipped { .. }
        ));
        assert_eq!(run.state.cumulative_epochs, 120);
        assert_eq!(trainer.train_calls().len(), 2);
    }

    #[test]
    fn trainer_failure_aborts_with_partial_results() {
        let tasks = vec![
            task("a", 0, 100, target_at(2.0)),
            task("b", 1, 40, target_at(10.0)),
            task("c", 2, 20, target_at(17.0)),
        ];
        let mut trainer = MockTrainer::failing_on(1);
        let run = run_sequential(tasks, &source(), &mut trainer, &mut settings()).unwrap();
        assert!(run.aborted.is_some());
        assert_eq!(run.results.len(), 2);
        assert!(matches!(
            run.results[1].outcome,
            TaskOutcome::Aborted { .. }
        ));
        assert_eq!(run.state.cumulative_epochs, 100);
    }

    #[test]
    fn plan_validation() {
        let empty: Vec<Task> = Vec::new();
        assert!(
            run_sequential(empty, &source(), &mut MockTrainer::new(), &mut settings()).is_err()
        );
        let out_of_order = vec![
            task("a", 1, 1, target_at(2.0)),
            task("b", 1, 1, target_at(3.0)),
        ];
        assert!(run_sequential(
            out_of_order,
            &source(),
            &mut MockTrainer::new(),
            &mut settings()
        )
        .is_err());
    }

    #[test]
    fn independent_totals() {
        let tasks = vec![
            task("a", 0, 100, target_at(2.0)),
            task("b", 1, 40, target_at(10.0)),
            task("c", 2, 20, target_at(17.0)),
        ];
        let cmp = compare_independent(
            &tasks,
            &source(),
            &mut MockTrainer::new(),
            &mut settings(),
            100,
        )
        .unwrap();
        assert_eq!(cmp.sequential_total, 160);
        assert_eq!(cmp.independent_total, 300);
        assert!(cmp.sequential_total <= cmp.independent_total);
        assert!(cmp.to_text().unwrap().contains("independent_total = 300"));
    }

    #[test]
    fn single_task_matches_independent() {
        let tasks = vec![task("a", 0, 100, target_at(5.0))];
        let src = source();
        let mut trainer = ProxyTrainer::new(2, 0);
        let cmp = compare_independent(&tasks, &src, &mut trainer, &mut settings(), 100).unwrap();
        assert_eq!(cmp.sequential_total, cmp.independent_total);
        assert_eq!(cmp.sequential[0].metric, cmp.independent[0].metric);
    }

    #[test]
    fn proxy_metric_prefers_covering_prototypes() {
        let mut trainer = ProxyTrainer::new(1, 0);
        let state = trainer.init().unwrap();
        let near = trainer.train(state.clone(), &target_at(5.0), 5).unwrap();
        let far = trainer.train(state, &target_at(50.0), 5).unwrap();
        let t = target_at(5.0);
        assert!(trainer.evaluate(&near, &t).unwrap() > trainer.evaluate(&far, &t).unwrap());
        assert!(trainer.evaluate(&ProxyModel::default(), &t).is_err());
    }

    #[test]
    fn plan_toml_roundtrip() {
        let plan = Plan {
            tasks: vec![task("a", 0, 100, target_at(0.0)).descriptor],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.toml");
        plan.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("[[task]]"));
        assert!(text.contains("filter_method = \"cluster_min\""));
        assert_eq!(Plan::load(&path).unwrap(), plan);
    }
}
