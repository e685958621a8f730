//! Word-frequency MapReduce over a generated corpus or a directory of
//! text files: `map_tasks` mappers count disjoint shards, one reducer sums
//! the counts and writes the top-n words.

use super::{App, AppError, AppSummary, RunContext};
use crate::engine::{TaskInput, TaskSpawner};
use crate::registry::{arg, TaskRegistry};
use crate::rng::SeededRng;
use crate::task::TaskError;
use crate::value::Value;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Word frequencies. Sorted keys make the value encoding canonical, so
/// equal counts serialize identically.
pub type WordCount = BTreeMap<String, u64>;

pub fn word_count_to_value(counts: &WordCount) -> Value {
    Value::List(
        counts
            .iter()
            .map(|(word, count)| {
                Value::List(vec![Value::Text(word.clone()), Value::Int(*count as i64)])
            })
            .collect(),
    )
}

pub fn word_count_from_value(value: &Value) -> Result<WordCount, TaskError> {
    let bad = || TaskError::Application("malformed word count value".to_owned());
    let mut counts = WordCount::new();
    for entry in value.as_list().ok_or_else(bad)? {
        let pair = entry.as_list().ok_or_else(bad)?;
        let word = pair.first().and_then(Value::as_text).ok_or_else(bad)?;
        let count = pair.get(1).and_then(Value::as_int).ok_or_else(bad)?;
        if count < 1 {
            return Err(bad());
        }
        counts.insert(word.to_owned(), count as u64);
    }
    Ok(counts)
}

/// Lowercases, splits on every non-alphanumeric character, drops empties.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(|token| token.to_lowercase())
}

/// Counts tokens across a set of documents.
pub fn map_task(documents: &[String]) -> WordCount {
    let mut counts = WordCount::new();
    for document in documents {
        for token in tokenize(document) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    counts
}

/// Pointwise sum of partial counts; order-independent.
pub fn reduce_task(parts: &[WordCount]) -> WordCount {
    let mut total = WordCount::new();
    for part in parts {
        for (word, count) in part {
            *total.entry(word.clone()).or_insert(0) += count;
        }
    }
    total
}

/// Deterministic corpus: each document is `words_per_doc` tokens drawn
/// uniformly with replacement from the vocabulary `w000000..`, space
/// separated.
pub fn generate_corpus(
    docs: usize,
    words_per_doc: usize,
    vocab_size: usize,
    seed: u64,
) -> Vec<String> {
    assert!(docs >= 1 && words_per_doc >= 1 && vocab_size >= 1);
    let vocabulary: Vec<String> = (0..vocab_size).map(|i| format!("w{i:06}")).collect();
    let mut rng = SeededRng::derive(seed, "mapreduce-corpus");
    let mut corpus = Vec::with_capacity(docs);
    for _ in 0..docs {
        let mut words = Vec::with_capacity(words_per_doc);
        for _ in 0..words_per_doc {
            words.push(vocabulary[rng.below(vocab_size as u64) as usize].as_str());
        }
        corpus.push(words.join(" "));
    }
    corpus
}

pub const MAP_TEXT_TASK: &str = "mapreduce_map_text";
pub const MAP_FILES_TASK: &str = "mapreduce_map_files";
pub const REDUCE_TASK: &str = "mapreduce_reduce";

pub(crate) fn register_tasks(registry: &mut TaskRegistry) {
    registry.register(MAP_TEXT_TASK, |args| {
        let documents = text_list(arg(args, 0)?)?;
        Ok(word_count_to_value(&map_task(&documents)))
    });
    registry.register(MAP_FILES_TASK, |args| {
        let paths = text_list(arg(args, 0)?)?;
        let mut documents = Vec::with_capacity(paths.len());
        for path in &paths {
            let text = fs::read_to_string(path)
                .map_err(|e| TaskError::Application(format!("cannot read {path}: {e}")))?;
            documents.push(text);
        }
        Ok(word_count_to_value(&map_task(&documents)))
    });
    registry.register(REDUCE_TASK, |args| {
        let parts_value = arg(args, 0)?;
        let mut parts = Vec::new();
        for part in parts_value
            .as_list()
            .ok_or_else(|| TaskError::Application("reduce expects a list of counts".to_owned()))?
        {
            parts.push(word_count_from_value(part)?);
        }
        Ok(word_count_to_value(&reduce_task(&parts)))
    });
}

fn text_list(value: &Value) -> Result<Vec<String>, TaskError> {
    let bad = || TaskError::Application("expected a list of text values".to_owned());
    value
        .as_list()
        .ok_or_else(bad)?
        .iter()
        .map(|v| v.as_text().map(str::to_owned).ok_or_else(bad))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CorpusMode {
    Generated {
        docs: usize,
        words_per_doc: usize,
        vocab_size: usize,
        seed: u64,
    },
    Files {
        root: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReduceConfig {
    #[serde(flatten)]
    pub corpus: CorpusMode,
    pub map_tasks: u64,
    pub n_top: usize,
}

impl MapReduceConfig {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.map_tasks < 1 || self.n_top < 1 {
            return Err(AppError::InvalidConfig(
                "mapreduce needs map_tasks >= 1 and n_top >= 1".into(),
            ));
        }
        if let CorpusMode::Generated {
            docs,
            words_per_doc,
            vocab_size,
            ..
        } = &self.corpus
        {
            if *docs < 1 || *words_per_doc < 1 || *vocab_size < 1 {
                return Err(AppError::InvalidConfig(
                    "generated corpus needs counts >= 1".into(),
                ));
            }
            if self.map_tasks > *docs as u64 {
                return Err(AppError::InvalidConfig(format!(
                    "map_tasks ({}) exceeds document count ({docs})",
                    self.map_tasks
                )));
            }
        }
        Ok(())
    }
}

/// Contiguous split of `items` into `shards` nearly equal pieces, in order.
fn shard_ranges(items: usize, shards: usize) -> Vec<std::ops::Range<usize>> {
    let base = items / shards;
    let extra = items % shards;
    let mut ranges = Vec::with_capacity(shards);
    let mut start = 0;
    for s in 0..shards {
        let len = base + usize::from(s < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

/// Every regular file under `root`, sorted by path for reproducible shards.
fn collect_files(root: &Path) -> Result<Vec<PathBuf>, AppError> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Formats the top-n selection: descending count, ties broken by word
/// ascending, one `word<TAB>count` line each.
pub fn format_top_n(counts: &WordCount, n_top: usize) -> String {
    let mut entries: Vec<(&String, &u64)> = counts.iter().collect();
    entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    entries
        .into_iter()
        .take(n_top)
        .map(|(word, count)| format!("{word}\t{count}\n"))
        .collect()
}

/// Submits the map/reduce DAG and writes `top_words.txt` in the run
/// directory. Task count is `map_tasks + 1`.
pub fn run_mapreduce(
    spawner: &dyn TaskSpawner,
    config: &MapReduceConfig,
    run_dir: &Path,
) -> Result<PathBuf, AppError> {
    config.validate()?;
    let map_tasks = config.map_tasks as usize;

    let map_futures = match &config.corpus {
        CorpusMode::Generated {
            docs,
            words_per_doc,
            vocab_size,
            seed,
        } => {
            let corpus = generate_corpus(*docs, *words_per_doc, *vocab_size, *seed);
            shard_ranges(corpus.len(), map_tasks)
                .into_iter()
                .map(|range| {
                    let shard: Vec<Value> = corpus[range]
                        .iter()
                        .map(|doc| Value::Text(doc.clone()))
                        .collect();
                    spawner.submit(MAP_TEXT_TASK, vec![TaskInput::Value(Value::List(shard))])
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        CorpusMode::Files { root } => {
            let files = collect_files(root)?;
            if files.is_empty() {
                return Err(AppError::InvalidConfig(format!(
                    "no files under {}",
                    root.display()
                )));
            }
            if map_tasks > files.len() {
                return Err(AppError::InvalidConfig(format!(
                    "map_tasks ({map_tasks}) exceeds file count ({})",
                    files.len()
                )));
            }
            shard_ranges(files.len(), map_tasks)
                .into_iter()
                .map(|range| {
                    let shard: Vec<Value> = files[range]
                        .iter()
                        .map(|p| Value::Text(p.to_string_lossy().into_owned()))
                        .collect();
                    spawner.submit(MAP_FILES_TASK, vec![TaskInput::Value(Value::List(shard))])
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };

    let reduce_args = TaskInput::Seq(map_futures.iter().map(TaskInput::future).collect());
    let reduce_future = spawner.submit(REDUCE_TASK, vec![reduce_args])?;
    let total = word_count_from_value(&reduce_future.result(None)?)
        .map_err(|e| AppError::Other(e.to_string()))?;

    let output_path = run_dir.join("top_words.txt");
    fs::write(&output_path, format_top_n(&total, config.n_top))?;
    Ok(output_path)
}

pub struct MapReduceApp {
    config: MapReduceConfig,
}

impl MapReduceApp {
    pub fn new(config: MapReduceConfig) -> MapReduceApp {
        MapReduceApp { config }
    }
}

impl App for MapReduceApp {
    fn run(
        &mut self,
        spawner: &dyn TaskSpawner,
        ctx: &mut RunContext,
    ) -> Result<AppSummary, AppError> {
        ctx.log(format!(
            "mapreduce map_tasks={} n_top={}",
            self.config.map_tasks, self.config.n_top
        ));
        let output = run_mapreduce(spawner, &self.config, ctx.run_dir())?;
        let output_bytes = fs::metadata(&output)?.len();
        ctx.log(format!(
            "mapreduce wrote {} ({output_bytes} B)",
            output.display()
        ));
        let mut summary = AppSummary::new();
        summary.insert("map_tasks".into(), self.config.map_tasks.into());
        summary.insert("n_top".into(), self.config.n_top.into());
        summary.insert("task_count".into(), (self.config.map_tasks + 1).into());
        summary.insert(
            "output".into(),
            output.to_string_lossy().into_owned().into(),
        );
        summary.insert("output_bytes".into(), output_bytes.into());
        Ok(summary)
    }
}
