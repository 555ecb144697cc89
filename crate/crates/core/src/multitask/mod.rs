//! Multi-task fine-tuning: a shared encoder, per-task heads over the
//! pooled output, a shuffled cross-task schedule, and task-level
//! inference.

mod train;

pub use train::{
    batch_gradients, build_schedule, fit, train_step, FitHistory, OptimizerState, ScheduleEntry,
    TrainConfig,
};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::CSQAItem;
use crate::encoder::{
    encode_pair, forward, EncodedPair, EncoderConfig, EncoderParams, ParamGroup, TensorView,
    TensorViewMut, Vocabulary,
};
use crate::{Error, Result};

/// Which text fields feed the two encoder segments and their budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRecipe {
    pub max_a: usize,
    pub max_b: usize,
}

/// What a task predicts.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// Fixed label set; the head is an affine map pooled → |labels|.
    Classification { labels: Vec<String> },
    /// Per-item variable choice list; a shared scalar scorer ranks each
    /// choice and a softmax across choices yields probabilities.
    MultipleChoice,
}

/// Declaration of one task: name, output structure, input recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub recipe: InputRecipe,
}

impl TaskSpec {
    fn validate(&self, config: &EncoderConfig) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['\t', '\n']) {
            return Err(Error::domain(
                "task names must be non-empty and free of tabs/newlines",
            ));
        }
        if let TaskKind::Classification { labels } = &self.kind {
            if labels.is_empty() {
                return Err(Error::domain(format!(
                    "task `{}` declares an empty label set",
                    self.name
                )));
            }
            if labels.iter().any(|l| l.contains(['\t', '\n'])) {
                return Err(Error::domain("labels must be free of tabs/newlines"));
            }
        }
        if self.recipe.max_a == 0 {
            return Err(Error::domain("segment A budget must be positive"));
        }
        if self.recipe.max_a > config.max_positions || self.recipe.max_b > config.max_positions {
            return Err(Error::domain(format!(
                "recipe budgets {}×{} exceed the encoder position budget {}",
                self.recipe.max_a, self.recipe.max_b, config.max_positions
            )));
        }
        Ok(())
    }
}

/// Head parameters: an affine map from the pooled vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl HeadParams {
    fn init(out_dim: usize, in_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.02).unwrap();
        HeadParams {
            w: Array2::from_shape_fn((out_dim, in_dim), |_| dist.sample(&mut rng)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        HeadParams {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.len()),
        }
    }
}

impl ParamGroup for HeadParams {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        vec![
            ("w".into(), TensorView::Mat(&self.w)),
            ("b".into(), TensorView::Vec1(&self.b)),
        ]
    }
    fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        vec![
            ("w".into(), TensorViewMut::Mat(&mut self.w)),
            ("b".into(), TensorViewMut::Vec1(&mut self.b)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RegisteredTask {
    pub spec: TaskSpec,
    pub head: HeadParams,
}

/// Shared encoder plus every registered task head. Heads read only the
/// pooled encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: EncoderConfig,
    pub params: EncoderParams,
    pub vocab: Vocabulary,
    pub(crate) tasks: BTreeMap<String, RegisteredTask>,
}

impl ModelBundle {
    /// Fresh bundle with seeded encoder parameters and no tasks.
    pub fn new(config: EncoderConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if vocab.len() != config.vocab_size {
            return Err(Error::domain(format!(
                "vocabulary has {} entries but the config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let params = EncoderParams::init(&config, seed)?;
        Ok(ModelBundle {
            config,
            params,
            vocab,
            tasks: BTreeMap::new(),
        })
    }

    /// Wrap pretrained encoder parameters.
    pub fn from_encoder(
        config: EncoderConfig,
        params: EncoderParams,
        vocab: Vocabulary,
    ) -> Result<Self> {
        if vocab.len() != config.vocab_size {
            return Err(Error::domain(format!(
                "vocabulary has {} entries but the config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        config.validate()?;
        Ok(ModelBundle {
            config,
            params,
            vocab,
            tasks: BTreeMap::new(),
        })
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.keys().map(String::as_str).collect()
    }

    pub fn task_spec(&self, name: &str) -> Result<&TaskSpec> {
        self.tasks
            .get(name)
            .map(|t| &t.spec)
            .ok_or_else(|| Error::domain(format!("unknown task `{name}`")))
    }

    pub fn head(&self, name: &str) -> Result<&HeadParams> {
        self.tasks
            .get(name)
            .map(|t| &t.head)
            .ok_or_else(|| Error::domain(format!("unknown task `{name}`")))
    }

    /// Replace a head wholesale (used by tests to zero a head).
    pub fn set_head(&mut self, name: &str, head: HeadParams) -> Result<()> {
        let task = self
            .tasks
            .get_mut(name)
            .ok_or_else(|| Error::domain(format!("unknown task `{name}`")))?;
        if task.head.w.raw_dim() != head.w.raw_dim() || task.head.b.len() != head.b.len() {
            return Err(Error::domain("replacement head has the wrong shape"));
        }
        task.head = head;
        Ok(())
    }

    pub(crate) fn task(&self, name: &str) -> Result<&RegisteredTask> {
        self.tasks
            .get(name)
            .ok_or_else(|| Error::domain(format!("unknown task `{name}`")))
    }

    /// Encode one input according to a task's recipe.
    pub fn encode_input(
        &self,
        task_name: &str,
        segment_a: &str,
        segment_b: Option<&str>,
    ) -> Result<EncodedPair> {
        let spec = self.task_spec(task_name)?;
        encode_pair(
            segment_a,
            segment_b,
            spec.recipe.max_a,
            spec.recipe.max_b,
            &self.vocab,
        )
    }
}

/// Add a task head. The shared encoder is untouched; the head weights
/// are drawn from `seed` (small Gaussian, zero bias), so an untrained
/// K-class head scores ≈ ln K cross-entropy.
pub fn register_task(bundle: &mut ModelBundle, spec: TaskSpec, seed: u64) -> Result<()> {
    spec.validate(&bundle.config)?;
    if bundle.tasks.contains_key(&spec.name) {
        return Err(Error::domain(format!(
            "task `{}` is already registered",
            spec.name
        )));
    }
    let out_dim = match &spec.kind {
        TaskKind::Classification { labels } => labels.len(),
        TaskKind::MultipleChoice => 1,
    };
    let head = HeadParams::init(out_dim, bundle.config.dim, seed);
    bundle
        .tasks
        .insert(spec.name.clone(), RegisteredTask { spec, head });
    Ok(())
}

/// One training example, already encoded per its task's recipe.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskExample {
    Classification {
        input: EncodedPair,
        label_index: usize,
    },
    MultipleChoice {
        choices: Vec<EncodedPair>,
        answer_index: usize,
    },
}

/// All examples of one task, in a fixed order; batches are consecutive
/// `batch_size` chunks of this order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub name: String,
    pub examples: Vec<TaskExample>,
}

/// Build a classification example, mapping the label string through the
/// task's label set.
pub fn classification_example(
    bundle: &ModelBundle,
    task_name: &str,
    segment_a: &str,
    segment_b: Option<&str>,
    label: &str,
) -> Result<TaskExample> {
    let spec = bundle.task_spec(task_name)?;
    let TaskKind::Classification { labels } = &spec.kind else {
        return Err(Error::domain(format!(
            "task `{task_name}` is not a classification task"
        )));
    };
    let label_index = labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::domain(format!("label `{label}` not in task `{task_name}`")))?;
    Ok(TaskExample::Classification {
        input: bundle.encode_input(task_name, segment_a, segment_b)?,
        label_index,
    })
}

/// Build a multiple-choice example: one `[CLS] question [SEP] choice
/// [SEP]` encoding per choice.
pub fn choice_example(
    bundle: &ModelBundle,
    task_name: &str,
    item: &CSQAItem,
) -> Result<TaskExample> {
    let spec = bundle.task_spec(task_name)?;
    if spec.kind != TaskKind::MultipleChoice {
        return Err(Error::domain(format!(
            "task `{task_name}` is not a multiple-choice task"
        )));
    }
    if item.choices.len() < 2 {
        return Err(Error::domain(format!(
            "item `{}` offers fewer than 2 choices",
            item.question
        )));
    }
    if item.answer_index >= item.choices.len() {
        return Err(Error::domain(format!(
            "item `{}` marks answer {} of {} choices",
            item.question,
            item.answer_index,
            item.choices.len()
        )));
    }
    let choices = item
        .choices
        .iter()
        .map(|c| bundle.encode_input(task_name, &item.question, Some(c)))
        .collect::<Result<_>>()?;
    Ok(TaskExample::MultipleChoice {
        choices,
        answer_index: item.answer_index,
    })
}

pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Classify one input: label with the highest softmax probability
/// (ties resolve to the lowest label index) plus the full vector.
pub fn predict_class(
    bundle: &ModelBundle,
    task_name: &str,
    segment_a: &str,
    segment_b: Option<&str>,
) -> Result<(String, Vec<f64>)> {
    let task = bundle.task(task_name)?;
    let TaskKind::Classification { labels } = &task.spec.kind else {
        return Err(Error::domain(format!(
            "task `{task_name}` is not a classification task"
        )));
    };
    let input = bundle.encode_input(task_name, segment_a, segment_b)?;
    let (_, pooled) = forward(&input, &bundle.params, &bundle.config)?;
    let logits = task.head.w.dot(&pooled) + &task.head.b;
    let probs = softmax(&logits);
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((labels[best].clone(), probs.to_vec()))
}

/// Score a multiple-choice item: one forward pass per choice, the shared
/// scalar scorer on each pooled vector, and a softmax across choices.
pub fn score_choices(bundle: &ModelBundle, task_name: &str, item: &CSQAItem) -> Result<Vec<f64>> {
    let task = bundle.task(task_name)?;
    if task.spec.kind != TaskKind::MultipleChoice {
        return Err(Error::domain(format!(
            "task `{task_name}` is not a multiple-choice task"
        )));
    }
    if item.choices.len() < 2 {
        return Err(Error::domain(format!(
            "item `{}` offers fewer than 2 choices",
            item.question
        )));
    }
    let mut scores = Array1::zeros(item.choices.len());
    for (c, choice) in item.choices.iter().enumerate() {
        let input = bundle.encode_input(task_name, &item.question, Some(choice))?;
        let (_, pooled) = forward(&input, &bundle.params, &bundle.config)?;
        scores[c] = task.head.w.row(0).dot(&pooled) + task.head.b[0];
    }
    Ok(softmax(&scores).to_vec())
}

/// The bundle as one parameter group: encoder tensors first, then each
/// head's tensors under `head.<task>.` in task-name order.
impl ParamGroup for ModelBundle {
    fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        let mut out = self.params.tensors();
        for (name, task) in &self.tasks {
            out.push((format!("head.{name}.w"), TensorView::Mat(&task.head.w)));
            out.push((format!("head.{name}.b"), TensorView::Vec1(&task.head.b)));
        }
        out
    }
    fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        let mut out = self.params.tensors_mut();
        for (name, task) in &mut self.tasks {
            out.push((format!("head.{name}.w"), TensorViewMut::Mat(&mut task.head.w)));
            out.push((format!("head.{name}.b"), TensorViewMut::Vec1(&mut task.head.b)));
        }
        out
    }
}

const BUNDLE_MAGIC: &str = "bundle v1";

/// Serialize the whole bundle: encoder section, vocabulary, then one
/// block per task (spec line, labels for classification, head tensors).
pub fn save_bundle<W: Write>(out: &mut W, bundle: &ModelBundle) -> Result<()> {
    writeln!(out, "{BUNDLE_MAGIC}")?;
    crate::encoder::write_config_line(out, &bundle.config)?;
    crate::encoder::write_param_group(out, &bundle.params)?;
    crate::encoder::write_vocab_section(out, &bundle.vocab)?;
    writeln!(out, "tasks {}", bundle.tasks.len())?;
    for (name, task) in &bundle.tasks {
        let kind = match &task.spec.kind {
            TaskKind::Classification { .. } => "classification",
            TaskKind::MultipleChoice => "multiple_choice",
        };
        writeln!(
            out,
            "task\t{name}\t{kind}\t{}\t{}",
            task.spec.recipe.max_a, task.spec.recipe.max_b
        )?;
        if let TaskKind::Classification { labels } = &task.spec.kind {
            writeln!(out, "labels\t{}", labels.join("\t"))?;
        }
        crate::encoder::write_param_group(out, &task.head)?;
    }
    writeln!(out, "end")?;
    Ok(())
}

/// Parse a checkpoint written by [`save_bundle`].
pub fn load_bundle<R: BufRead>(input: R) -> Result<ModelBundle> {
    let mut lines = input.lines();
    let mut next_line = move || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Checkpoint("checkpoint ended early".into()))?
            .map_err(Error::from)
    };
    let magic = next_line()?;
    if magic != BUNDLE_MAGIC {
        return Err(Error::Checkpoint(format!(
            "not a bundle checkpoint (leading line `{magic}`)"
        )));
    }
    let config = crate::encoder::parse_config_line(&next_line()?)?;
    let mut params = EncoderParams::init(&config, 0)?;
    params.zero_all();
    crate::encoder::read_param_group(&mut next_line, &mut params)?;
    let vocab = crate::encoder::read_vocab_section(&mut next_line)?;
    let mut bundle = ModelBundle::from_encoder(config, params, vocab)?;

    let tasks_header = next_line()?;
    let task_count: usize = tasks_header
        .strip_prefix("tasks ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("expected a tasks header, got `{tasks_header}`")))?;
    for _ in 0..task_count {
        let line = next_line()?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 || fields[0] != "task" {
            return Err(Error::Checkpoint(format!("malformed task line `{line}`")));
        }
        let name = fields[1].to_string();
        let max_a: usize = fields[3]
            .parse()
            .map_err(|_| Error::Checkpoint("bad segment A budget".into()))?;
        let max_b: usize = fields[4]
            .parse()
            .map_err(|_| Error::Checkpoint("bad segment B budget".into()))?;
        let kind = match fields[2] {
            "classification" => {
                let label_line = next_line()?;
                let labels: Vec<String> = label_line
                    .strip_prefix("labels\t")
                    .ok_or_else(|| Error::Checkpoint("missing labels line".into()))?
                    .split('\t')
                    .map(str::to_string)
                    .collect();
                TaskKind::Classification { labels }
            }
            "multiple_choice" => TaskKind::MultipleChoice,
            other => {
                return Err(Error::Checkpoint(format!("unknown task kind `{other}`")));
            }
        };
        let spec = TaskSpec {
            name: name.clone(),
            kind,
            recipe: InputRecipe { max_a, max_b },
        };
        register_task(&mut bundle, spec, 0)?;
        let task = bundle.tasks.get_mut(&name).unwrap();
        task.head.w.fill(0.0);
        task.head.b.fill(0.0);
        crate::encoder::read_param_group(&mut next_line, &mut task.head)?;
    }
    if next_line()? != "end" {
        return Err(Error::Checkpoint("missing end marker".into()));
    }
    Ok(bundle)
}

pub fn save_bundle_file(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    save_bundle(&mut out, bundle)
}

pub fn load_bundle_file(path: &Path) -> Result<ModelBundle> {
    load_bundle(BufReader::new(File::open(path)?))
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::*;
    use crate::encoder::build_vocab;

    pub fn news_labels() -> Vec<String> {
        ["satire", "hoax", "propaganda", "clickbait", "conspiracy", "reliable"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    /// Fresh Gaussian init maps every input to nearly the same pooled
    /// vector (content enters only through small projections), so toy
    /// training stalls. Adding seeded noise moves the encoder to a
    /// developed point where representations respond to content.
    pub fn develop(params: &mut EncoderParams) {
        crate::encoder::add_parameter_noise(params, 0.25, 99);
    }

    /// Bundle with a 6-class classification task and a multiple-choice
    /// task over a tiny shared vocabulary, at a developed parameter point.
    pub fn two_task_bundle() -> ModelBundle {
        let texts = vec![
            "the satire piece mocked the council decision".to_string(),
            "miracle cure from kitchen spice shocks doctors".to_string(),
            "agenda driven outlet repeats the same slogan daily".to_string(),
            "you will never believe what the mayor did next".to_string(),
            "secret network controls the weather says insider".to_string(),
            "officials confirmed the reservoir upgrade plan yesterday".to_string(),
            "what would you use to find directions a map for directions".to_string(),
            "what would you eat soup with a spoon for soup".to_string(),
            "what drops rain from the sky a cloud full of rain".to_string(),
            "what would you play music with a song of music".to_string(),
            "what would you climb to fix a roof a ladder to the roof".to_string(),
        ];
        let vocab = build_vocab(&texts, 64).unwrap();
        let config = EncoderConfig {
            layers: 2,
            heads: 2,
            dim: 8,
            ffn_dim: 16,
            max_positions: 48,
            vocab_size: vocab.len(),
            dropout: 0.0,
        };
        let mut bundle = ModelBundle::new(config, vocab, 42).unwrap();
        register_task(
            &mut bundle,
            TaskSpec {
                name: "news".into(),
                kind: TaskKind::Classification {
                    labels: news_labels(),
                },
                recipe: InputRecipe { max_a: 12, max_b: 24 },
            },
            1,
        )
        .unwrap();
        register_task(
            &mut bundle,
            TaskSpec {
                name: "csqa".into(),
                kind: TaskKind::MultipleChoice,
                recipe: InputRecipe { max_a: 16, max_b: 8 },
            },
            2,
        )
        .unwrap();
        develop(&mut bundle.params);
        bundle
    }

    pub fn sample_item() -> CSQAItem {
        CSQAItem {
            question: "what would you use to find directions".into(),
            choices: vec![
                "a map".into(),
                "a spoon".into(),
                "a cloud".into(),
                "a song".into(),
                "a ladder".into(),
            ],
            answer_index: 0,
        }
    }
}
