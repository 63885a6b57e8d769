//! End-to-end zero-shot runs: fit a map on training pairs, map the test
//! sources (plus optional auxiliary pivots), retrieve over the whole target
//! space with each configured method, and score the top-1 predictions.
//!
//! Config files are flat `key = value` lines; `#` starts a comment and
//! relative paths resolve against the config file's directory.
//!
//! | key                 | value                                      | default          |
//! |---------------------|--------------------------------------------|------------------|
//! | `source_embeddings` | path                                       | required         |
//! | `target_embeddings` | path                                       | required         |
//! | `train_pairs`       | path to `source<TAB>target` lines          | required         |
//! | `test_pairs`        | path                                       | required         |
//! | `embedding_format`  | `header` or `headerless`                   | `header`         |
//! | `aux_pivots`        | count                                      | `0`              |
//! | `train_sizes`       | comma list, or `all`                       | `all`            |
//! | `lambda_modes`      | comma list of `none`, `gcv`, `fixed:<λ>`   | `gcv`            |
//! | `methods`           | comma list of `nn`, `nn_nrm`, `gc`         | `nn,nn_nrm,gc`   |
//! | `hubness_k`         | positive count                             | `20`             |
//! | `bins`              | comma list of `lo-hi` rank intervals       | 1-5000,…,100000-200000 |
//! | `seed`              | integer                                    | `0`              |
//! | `objective`         | `ridge` or `margin`                        | `ridge`          |
//! | `margin_gamma`, `margin_negatives`, `margin_epochs`, `margin_learning_rate` | margin trainer settings | trainer defaults |

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dictionary::{accuracy_at_1, bin_accuracy, check_disjoint, default_bins, BinAccuracy, GoldDictionary, RankBin};
use crate::embedding::{EmbeddingFormat, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::hubness::{cosine_to_mean_correlation, hub_scores, HubnessReport, HubnessSummary};
use crate::mapper::ridge::{default_lambda_grid, RidgeProblem};
use crate::mapper::{fit_margin, MarginConfig, Objective};
use crate::retrieval::{cosine_matrix, nn_query, query, Method, SimilarityMatrix};

/// Hubs listed per method in the report.
pub const TOP_HUBS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    /// Unregularized least squares.
    None,
    Gcv,
    Fixed(f64),
}

impl fmt::Display for LambdaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaMode::None => f.write_str("none"),
            LambdaMode::Gcv => f.write_str("gcv"),
            LambdaMode::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

impl FromStr for LambdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(LambdaMode::None),
            "gcv" => Ok(LambdaMode::Gcv),
            other => {
                let v = other
                    .strip_prefix("fixed:")
                    .unwrap_or(other)
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad lambda mode `{other}`")))?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("lambda must be >= 0, got {v}")));
                }
                Ok(LambdaMode::Fixed(v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub source_embeddings: PathBuf,
    pub target_embeddings: PathBuf,
    pub train_pairs: PathBuf,
    pub test_pairs: PathBuf,
    pub embedding_format: EmbeddingFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub aux_pivots: usize,
    /// Empty means "all training pairs".
    pub train_sizes: Vec<usize>,
    pub lambda_modes: Vec<LambdaMode>,
    pub methods: Vec<Method>,
    pub hubness_k: usize,
    pub bins: Vec<RankBin>,
    pub seed: u64,
    pub objective: Objective,
    /// Used when `objective` is margin; its seed is replaced by `seed`.
    pub margin: MarginConfig,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            aux_pivots: 0,
            train_sizes: Vec::new(),
            lambda_modes: vec![LambdaMode::Gcv],
            methods: Method::ALL.to_vec(),
            hubness_k: 20,
            bins: default_bins(),
            seed: 0,
            objective: Objective::Ridge,
            margin: MarginConfig::default(),
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.methods.is_empty() {
            return bad("no retrieval methods configured");
        }
        if self.lambda_modes.is_empty() {
            return bad("no lambda modes configured");
        }
        if self.hubness_k == 0 {
            return bad("hubness_k must be positive");
        }
        if self.train_sizes.contains(&0) {
            return bad("train sizes must be positive");
        }
        if self.objective == Objective::Margin && self.lambda_modes != [LambdaMode::None] {
            return bad("the margin objective takes no lambda; set lambda_modes = none");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataPaths,
    pub settings: ExperimentSettings,
}

fn list<T, F: Fn(&str) -> Result<T>>(v: &str, f: F) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut paths: BTreeMap<&str, PathBuf> = BTreeMap::new();
        let mut st = ExperimentSettings::default();
        let mut format = EmbeddingFormat::TextHeader;
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cfg = |m: String| Error::Config(format!("line {}: {m}", i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                return Err(cfg(format!("`{key}` given twice")));
            }
            let num = |v: &str| v.parse::<usize>().map_err(|_| cfg(format!("`{key}`: bad count `{v}`")));
            let real = |v: &str| v.parse::<f64>().map_err(|_| cfg(format!("`{key}`: bad number `{v}`")));
            let wrap = |e: Error| cfg(format!("`{key}`: {e}"));
            match key {
                "source_embeddings" | "target_embeddings" | "train_pairs" | "test_pairs" => {
                    paths.insert(key, base_dir.join(value));
                }
                "embedding_format" => {
                    format = match value {
                        "header" => EmbeddingFormat::TextHeader,
                        "headerless" => EmbeddingFormat::TextHeaderless,
                        v => return Err(cfg(format!("unknown embedding format `{v}`"))),
                    }
                }
                "aux_pivots" => st.aux_pivots = num(value)?,
                "train_sizes" => {
                    st.train_sizes = if value == "all" { Vec::new() } else { list(value, num)? }
                }
                "lambda_modes" => st.lambda_modes = list(value, |v| v.parse()).map_err(wrap)?,
                "methods" => st.methods = list(value, |v| v.parse()).map_err(wrap)?,
                "hubness_k" => st.hubness_k = num(value)?,
                "bins" => st.bins = list(value, |v| v.parse()).map_err(wrap)?,
                "seed" => {
                    st.seed = value
                        .parse()
                        .map_err(|_| cfg(format!("bad seed `{value}`")))?
                }
                "objective" => st.objective = value.parse().map_err(wrap)?,
                "margin_gamma" => st.margin.gamma = real(value)?,
                "margin_negatives" => st.margin.negatives = num(value)?,
                "margin_epochs" => st.margin.epochs = num(value)?,
                "margin_learning_rate" => st.margin.learning_rate = real(value)?,
                other => return Err(cfg(format!("unknown key `{other}`"))),
            }
        }
        let mut take = |k: &str| {
            paths
                .remove(k)
                .ok_or_else(|| Error::Config(format!("missing required key `{k}`")))
        };
        let data = DataPaths {
            source_embeddings: take("source_embeddings")?,
            target_embeddings: take("target_embeddings")?,
            train_pairs: take("train_pairs")?,
            test_pairs: take("test_pairs")?,
            embedding_format: format,
        };
        st.validate()?;
        Ok(ExperimentConfig { data, settings: st })
    }
}

/// Loaded inputs of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    /// Frequency ranks come from [`EmbeddingSpace::freq_rank`].
    pub source: EmbeddingSpace,
    pub target: EmbeddingSpace,
    pub train: GoldDictionary,
    pub test: GoldDictionary,
}

impl ExperimentData {
    /// Reads the dictionaries first so that a train/test overlap is
    /// reported before any embedding is parsed.
    pub fn load(paths: &DataPaths) -> Result<Self> {
        let train = GoldDictionary::load(&paths.train_pairs)?;
        let test = GoldDictionary::load(&paths.test_pairs)?;
        check_disjoint(&train, &test)?;
        Ok(ExperimentData {
            source: EmbeddingSpace::load(&paths.source_embeddings, paths.embedding_format)?,
            target: EmbeddingSpace::load(&paths.target_embeddings, paths.embedding_format)?,
            train,
            test,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub accuracy: f64,
    /// Accuracy when only the test pivots enter retrieval; present when
    /// auxiliary pivots were used.
    pub accuracy_test_pivots_only: Option<f64>,
    pub bins: Vec<BinAccuracy>,
    pub hubness: HubnessSummary,
    #[serde(skip)]
    pub histogram: BTreeMap<u32, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    /// `None` when all pairs were requested.
    pub train_size_requested: Option<usize>,
    pub train_size: usize,
    pub lambda_mode: String,
    pub lambda: f64,
    /// `(λ, GCV(λ))` over the grid for GCV runs.
    pub gcv_scores: Option<Vec<(f64, f64)>>,
    pub methods: Vec<MethodReport>,
}

/// Everything here is a deterministic function of the inputs and seed;
/// wall-clock timings are kept out of the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub objective: String,
    pub hubness_k: usize,
    pub targets: usize,
    pub test_items: usize,
    pub average_gold_size: f64,
    pub train_pairs_available: usize,
    pub train_pairs_dropped: usize,
    pub aux_pivots_requested: usize,
    pub aux_pivots_used: usize,
    /// NN hubness with the test items' gold target vectors as pivots.
    pub original: Option<HubnessSummary>,
    pub runs: Vec<RunReport>,
    #[serde(skip)]
    pub original_histogram: BTreeMap<u32, usize>,
    /// `(phase, seconds)`.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Accuracy table for one lambda mode: one row per train size, one
    /// column per method.
    pub fn accuracy_table(&self, lambda_mode: &str) -> String {
        let mut out = String::from("train_size");
        let Some(first) = self.runs.iter().find(|r| r.lambda_mode == lambda_mode) else {
            return out + "\n";
        };
        for m in &first.methods {
            out.push(',');
            out.push_str(&m.method);
        }
        out.push('\n');
        for run in self.runs.iter().filter(|r| r.lambda_mode == lambda_mode) {
            out.push_str(&run.train_size.to_string());
            for m in &run.methods {
                out.push_str(&format!(",{:.3}", m.accuracy));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.json`, one `accuracy_<mode>.csv` per lambda mode and
    /// `value,count` histograms of `N_k` per run and method. Returns the
    /// written paths.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<(String, String)> = vec![("report.json".into(), self.to_json())];
        let mut modes: Vec<&str> = Vec::new();
        for r in &self.runs {
            if !modes.contains(&r.lambda_mode.as_str()) {
                modes.push(&r.lambda_mode);
            }
        }
        for m in modes {
            files.push((format!("accuracy_{}.csv", m.replace(':', "_")), self.accuracy_table(m)));
        }
        if self.original.is_some() {
            files.push(("hubness_original.csv".into(), histogram_csv(&self.original_histogram)));
        }
        for r in &self.runs {
            for m in &r.methods {
                let name = format!(
                    "hubness_{}_{}_{}.csv",
                    r.train_size,
                    r.lambda_mode.replace(':', "_"),
                    m.method
                );
                files.push((name, histogram_csv(&m.histogram)));
            }
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

fn histogram_csv(h: &BTreeMap<u32, usize>) -> String {
    let mut s = String::from("value,count\n");
    for (v, c) in h {
        s.push_str(&format!("{v},{c}\n"));
    }
    s
}

/// Loads the configured files and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.settings.validate()?;
    let data = ExperimentData::load(&config.data)?;
    run_with_data(&config.settings, &data)
}

struct Timer(Vec<(String, f64)>, Instant);

impl Timer {
    fn lap(&mut self, phase: impl Into<String>) {
        let now = Instant::now();
        let phase = phase.into();
        let secs = (now - self.1).as_secs_f64();
        log::info!("{phase}: {secs:.2}s");
        self.0.push((phase, secs));
        self.1 = now;
    }
}

/// Runs the experiment on already loaded data.
pub fn run_with_data(settings: &ExperimentSettings, data: &ExperimentData) -> Result<ExperimentReport> {
    settings.validate()?;
    check_disjoint(&data.train, &data.test)?;
    if data.test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    if data.source.is_empty() || data.target.is_empty() {
        return Err(Error::Empty);
    }
    let mut timer = Timer(Vec::new(), Instant::now());

    let test_sources: Vec<&str> = data.test.sources().collect();
    let missing: Vec<&str> = test_sources
        .iter()
        .copied()
        .filter(|s| !data.source.contains(s))
        .collect();
    if let Some(first) = missing.first() {
        log::error!("{} test sources have no source vector", missing.len());
        return Err(Error::UnknownToken((*first).to_owned()));
    }

    let mut train: Vec<(usize, usize, usize)> = Vec::new();
    let mut dropped = 0usize;
    for (s, t) in data.train.pairs() {
        match (data.source.lookup(s), data.target.lookup(t)) {
            (Some(i), Some(j)) => train.push((data.source.freq_rank(s).unwrap_or(usize::MAX), i, j)),
            _ => {
                log::warn!("dropping train pair {s} -> {t}: missing vector");
                dropped += 1;
            }
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} of {} train pairs", data.train.pairs().len());
    }
    train.sort_by_key(|&(rank, ..)| rank);

    let aux = sample_aux(settings, data);
    if aux.len() < settings.aux_pivots {
        log::warn!(
            "only {} auxiliary pivots available, {} requested",
            aux.len(),
            settings.aux_pivots
        );
    }
    let mut pivot_rows: Vec<usize> = test_sources
        .iter()
        .map(|s| data.source.lookup(s).expect("checked above"))
        .collect();
    pivot_rows.extend(&aux);
    let pivot_src = data.source.matrix().select(Axis(0), &pivot_rows);
    let n_test = test_sources.len();
    let k = settings.hubness_k.min(data.target.len());
    let targets = data.target.matrix();

    let (original, original_histogram) = original_hubness(data, &test_sources, k)?;
    timer.lap("setup");

    let sizes: Vec<Option<usize>> = if settings.train_sizes.is_empty() {
        vec![None]
    } else {
        settings.train_sizes.iter().map(|&s| Some(s)).collect()
    };
    let mut runs = Vec::new();
    for requested in sizes {
        let n = requested.map_or(train.len(), |r| r.min(train.len()));
        if n == 0 {
            return Err(Error::InvalidArgument("no usable training pairs".into()));
        }
        if requested.is_some_and(|r| r > n) {
            log::warn!("train size {} capped at {n} available pairs", requested.unwrap());
        }
        let src_rows: Vec<usize> = train[..n].iter().map(|t| t.1).collect();
        let tgt_rows: Vec<usize> = train[..n].iter().map(|t| t.2).collect();
        let x = data.source.matrix().select(Axis(0), &src_rows);
        let y = targets.select(Axis(0), &tgt_rows);

        let fits = fit_all(settings, &x, &y)?;
        timer.lap(format!("fit n={n}"));
        for (mode, lambda, gcv_scores, w) in fits {
            let mapped = pivot_src.dot(&w);
            let sim = cosine_matrix(mapped.view(), targets)?;
            let test_sim = if aux.is_empty() {
                None
            } else {
                Some(SimilarityMatrix::from_scores(sim.scores().slice(s![..n_test, ..]).to_owned())?)
            };
            timer.lap(format!("similarities n={n} {mode}"));
            let mut methods = Vec::new();
            for &method in &settings.methods {
                let result = query(&sim, method, k)?;
                let top1 = &result.top1()[..n_test];
                let predicted = predictions(&test_sources, top1, data);
                let accuracy = accuracy_at_1(&predicted, &data.test)?;
                let bins = bin_accuracy(&predicted, &data.test, |s| data.source.freq_rank(s), &settings.bins)?;
                let accuracy_test_pivots_only = match &test_sim {
                    None => None,
                    Some(ts) => {
                        let r = query(ts, method, 1)?;
                        Some(accuracy_at_1(&predictions(&test_sources, &r.top1(), data), &data.test)?)
                    }
                };
                let hub = hub_scores(&result, data.target.vocab())?;
                let corr = if data.target.len() >= 3 {
                    Some(cosine_to_mean_correlation(targets, mapped.view(), &hub.n_k, None)?)
                } else {
                    None
                };
                methods.push(MethodReport {
                    method: method.to_string(),
                    accuracy,
                    accuracy_test_pivots_only,
                    bins,
                    hubness: hub.summary(corr.as_ref(), TOP_HUBS),
                    histogram: hub.histogram,
                });
                timer.lap(format!("{method} n={n} {mode}"));
            }
            runs.push(RunReport {
                train_size_requested: requested,
                train_size: n,
                lambda_mode: mode.to_string(),
                lambda,
                gcv_scores,
                methods,
            });
        }
    }

    Ok(ExperimentReport {
        seed: settings.seed,
        objective: settings.objective.to_string(),
        hubness_k: k,
        targets: data.target.len(),
        test_items: n_test,
        average_gold_size: data.test.average_gold_size(),
        train_pairs_available: train.len(),
        train_pairs_dropped: dropped,
        aux_pivots_requested: settings.aux_pivots,
        aux_pivots_used: aux.len(),
        original,
        runs,
        original_histogram,
        timings: timer.0,
    })
}

type Fit = (LambdaMode, f64, Option<Vec<(f64, f64)>>, Array2<f64>);

fn fit_all(settings: &ExperimentSettings, x: &Array2<f64>, y: &Array2<f64>) -> Result<Vec<Fit>> {
    if settings.objective == Objective::Margin {
        let cfg = MarginConfig {
            seed: settings.seed,
            ..settings.margin.clone()
        };
        let fit = fit_margin(x.view(), y.view(), &cfg)?;
        return Ok(vec![(LambdaMode::None, 0.0, None, fit.map.weights().to_owned())]);
    }
    let problem = RidgeProblem::new(x.view(), y.view())?;
    settings
        .lambda_modes
        .iter()
        .map(|&mode| {
            let (lambda, scores) = match mode {
                LambdaMode::None => (0.0, None),
                LambdaMode::Fixed(l) => (l, None),
                LambdaMode::Gcv => {
                    let sel = problem.select_gcv(&default_lambda_grid())?;
                    log::info!("gcv selected lambda {}", sel.lambda);
                    (sel.lambda, Some(sel.scores))
                }
            };
            Ok((mode, lambda, scores, problem.solve(lambda)?))
        })
        .collect()
}

fn predictions(sources: &[&str], top1: &[usize], data: &ExperimentData) -> BTreeMap<String, String> {
    sources
        .iter()
        .zip(top1)
        .map(|(s, &t)| ((*s).to_owned(), data.target.vocab()[t].clone()))
        .collect()
}

/// Uniform sample of source rows outside both dictionaries.
fn sample_aux(settings: &ExperimentSettings, data: &ExperimentData) -> Vec<usize> {
    if settings.aux_pivots == 0 {
        return Vec::new();
    }
    let excluded: HashSet<&str> = data.train.sources().chain(data.test.sources()).collect();
    let pool: Vec<usize> = (0..data.source.len())
        .filter(|&i| !excluded.contains(data.source.vocab()[i].as_str()))
        .collect();
    let n = settings.aux_pivots.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// NN hubness in the target space itself, using the first resolvable gold
/// target of every test item as a pivot.
fn original_hubness(
    data: &ExperimentData,
    test_sources: &[&str],
    k: usize,
) -> Result<(Option<HubnessSummary>, BTreeMap<u32, usize>)> {
    let rows: Vec<usize> = test_sources
        .iter()
        .filter_map(|s| {
            data.test
                .gold(s)
                .and_then(|g| g.iter().find_map(|t| data.target.lookup(t)))
        })
        .collect();
    if rows.is_empty() {
        return Ok((None, BTreeMap::new()));
    }
    let pivots = data.target.matrix().select(Axis(0), &rows);
    let sim = cosine_matrix(pivots.view(), data.target.matrix())?;
    let report: HubnessReport = hub_scores(&nn_query(&sim, k)?, data.target.vocab())?;
    let corr = if data.target.len() >= 3 {
        Some(cosine_to_mean_correlation(data.target.matrix(), pivots.view(), &report.n_k, None)?)
    } else {
        None
    };
    Ok((Some(report.summary(corr.as_ref(), TOP_HUBS)), report.histogram))
}
