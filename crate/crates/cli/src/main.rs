use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use zeroshot::evaluation::{
    generate_synthetic_pair_spaces, run_experiment, ExperimentConfig, GoldDictionary, SynthConfig,
};
use zeroshot::hubness::{cosine_to_mean_correlation, group_average, hub_scores};
use zeroshot::mapper::{default_lambda_grid, fit_margin, MarginConfig, Objective, RidgeProblem};
use zeroshot::retrieval::{cosine_matrix, query, Method};
use zeroshot::{EmbeddingFormat, EmbeddingSpace, LinearMap};

mod exit;

use exit::{exit_code, Usage};

#[derive(Parser, Debug)]
#[command(name = "zeroshot", version, about = "Linear cross-space mapping with hubness-corrected retrieval")]
struct Cli {
    /// Worker threads for parallel kernels; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a linear map on dictionary pairs and write it to a file.
    Train(TrainArgs),
    /// Apply a map to source vectors and write the mapped space.
    Map(MapArgs),
    /// Retrieve target neighbours for mapped pivots as TSV.
    Retrieve(RetrieveArgs),
    /// Per-target hubness scores, their distribution and correlation.
    Hubness(HubnessArgs),
    /// Run an experiment described by a config file.
    Eval(EvalArgs),
    /// Write a synthetic pair of spaces, dictionaries and an eval config.
    Synth(SynthArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Header,
    Headerless,
}

impl From<Format> for EmbeddingFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Header => EmbeddingFormat::TextHeader,
            Format::Headerless => EmbeddingFormat::TextHeaderless,
        }
    }
}

#[derive(Args, Debug)]
struct SpaceArgs {
    /// Source-space embeddings.
    #[arg(long)]
    source: PathBuf,
    /// Target-space embeddings.
    #[arg(long)]
    target: PathBuf,
    /// Embedding text format.
    #[arg(long, value_enum, default_value = "header")]
    format: Format,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    spaces: SpaceArgs,
    /// Training pairs, `source<TAB>target` per line.
    #[arg(long)]
    dict: PathBuf,
    /// `none`, `gcv` or a fixed non-negative penalty.
    #[arg(long, default_value = "gcv")]
    lambda: String,
    /// Comma-separated penalty grid for `--lambda gcv`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value = "ridge")]
    objective: Objective,
    /// Keep only the N most frequent training pairs by source rank.
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long, default_value_t = MarginConfig::default().gamma)]
    gamma: f64,
    #[arg(long, default_value_t = MarginConfig::default().negatives)]
    negatives: usize,
    #[arg(long, default_value_t = MarginConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = MarginConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the map.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MapArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long, value_enum, default_value = "header")]
    format: Format,
    /// Only map these tokens (one per line; first TAB field).
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long)]
    map: PathBuf,
    #[command(flatten)]
    spaces: SpaceArgs,
    /// Pivot source tokens, one per line (first TAB field).
    #[arg(long)]
    pivots: PathBuf,
    #[arg(long, default_value = "nn")]
    method: Method,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Extra unlabeled source words mapped alongside the pivots.
    #[arg(long, default_value_t = 0)]
    aux_pivots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct HubnessArgs {
    /// Target-space embeddings.
    #[arg(long)]
    target: PathBuf,
    /// Map applied to source pivots; without it pivots are target-space
    /// tokens.
    #[arg(long, requires = "source")]
    map: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "header")]
    format: Format,
    /// Pivot tokens, one per line (first TAB field); all tokens when absent.
    #[arg(long)]
    pivots: Option<PathBuf>,
    #[arg(long, default_value = "nn")]
    method: Method,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// `token<TAB>label` lines; targets are averaged per label first.
    #[arg(long)]
    group_targets: Option<PathBuf>,
    /// JSON summary with k, method, max, skewness and rho.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// `value,count` histogram of N_k.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// Hubs listed in the summary.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Experiment config file.
    config: PathBuf,
    /// Report directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    d: usize,
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 1500)]
    n_test: usize,
    #[arg(long, default_value_t = 5000)]
    n_targets: usize,
    #[arg(long, default_value_t = 3.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    info!("{cli:?}");
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Train(a) => train(a),
        Command::Map(a) => map(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Hubness(a) => hubness(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    }
}

fn load_space(path: &Path, format: Format) -> Result<EmbeddingSpace> {
    EmbeddingSpace::load(path, format.into()).with_context(|| format!("loading {}", path.display()))
}

/// One token per line, first TAB field, duplicates dropped.
fn read_tokens(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| zeroshot::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let mut seen = std::collections::HashSet::new();
    Ok(text
        .lines()
        .filter_map(|l| l.split('\t').next())
        .map(str::trim)
        .filter(|t| !t.is_empty() && seen.insert(t.to_string()))
        .map(str::to_owned)
        .collect())
}

fn rows_of(space: &EmbeddingSpace, tokens: &[String]) -> Result<ndarray::Array2<f64>> {
    let (m, missing) = space.subset(tokens);
    if let Some(t) = missing.first() {
        return Err(zeroshot::Error::UnknownToken(t.clone()))
            .with_context(|| format!("{} requested tokens have no vector", missing.len()));
    }
    Ok(m)
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn train(a: TrainArgs) -> Result<()> {
    let dict = GoldDictionary::load(&a.dict)?;
    let source = load_space(&a.spaces.source, a.spaces.format)?;
    let target = load_space(&a.spaces.target, a.spaces.format)?;
    let mut pairs: Vec<(usize, &str, &str)> = Vec::new();
    for (s, t) in dict.pairs() {
        if source.contains(s) && target.contains(t) {
            pairs.push((source.freq_rank(s).unwrap_or(usize::MAX), s, t));
        } else {
            warn!("dropping pair {s} -> {t}: missing vector");
        }
    }
    if a.train_size.is_some() {
        pairs.sort_by_key(|p| p.0);
        pairs.truncate(a.train_size.unwrap_or(usize::MAX));
    }
    if pairs.is_empty() {
        bail!(zeroshot::Error::InvalidArgument("no usable training pairs".into()));
    }
    let src: Vec<String> = pairs.iter().map(|p| p.1.to_owned()).collect();
    let tgt: Vec<String> = pairs.iter().map(|p| p.2.to_owned()).collect();
    let x = rows_of(&source, &src)?;
    let y = rows_of(&target, &tgt)?;
    info!("training on {} pairs ({} -> {} dims)", x.nrows(), x.ncols(), y.ncols());

    let (map, residual) = match a.objective {
        Objective::Ridge => {
            let problem = RidgeProblem::new(x.view(), y.view())?;
            let lambda = match a.lambda.as_str() {
                "none" => 0.0,
                "gcv" => {
                    let grid = a.grid.clone().unwrap_or_else(default_lambda_grid);
                    let sel = problem.select_gcv(&grid)?;
                    for (l, g) in &sel.scores {
                        info!("gcv lambda={l:e} score={g:.6e}");
                    }
                    sel.lambda
                }
                v => v
                    .parse::<f64>()
                    .ok()
                    .filter(|l| *l >= 0.0 && l.is_finite())
                    .ok_or_else(|| Usage(format!("--lambda expects none, gcv or a number >= 0, got `{v}`")))?,
            };
            (problem.fit(lambda)?, problem.residual_ss(lambda))
        }
        Objective::Margin => {
            if a.lambda != "none" && a.lambda != "gcv" {
                bail!(Usage("the margin objective takes no --lambda".into()));
            }
            let cfg = MarginConfig {
                gamma: a.gamma,
                negatives: a.negatives,
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                heldout_frac: None,
                seed: a.seed,
            };
            let fit = fit_margin(x.view(), y.view(), &cfg)?;
            let pred = fit.map.apply(x.view())?;
            let rss = (&pred - &y).mapv(|e| e * e).sum();
            (fit.map, rss)
        }
    };
    map.save(&a.out)?;
    let mut out = stdout();
    writeln!(out, "lambda\t{}", map.lambda())?;
    writeln!(out, "residual\t{residual:e}")?;
    writeln!(out, "pairs\t{}", x.nrows())?;
    Ok(())
}

fn map(a: MapArgs) -> Result<()> {
    let map = LinearMap::load(&a.map)?;
    let source = load_space(&a.source, a.format)?;
    let (vocab, x) = match &a.tokens {
        Some(p) => {
            let tokens = read_tokens(p)?;
            let x = rows_of(&source, &tokens)?;
            (tokens, x)
        }
        None => (source.vocab().to_vec(), source.matrix().to_owned()),
    };
    let mapped = EmbeddingSpace::new(vocab, map.apply(x.view())?)?;
    match &a.out {
        Some(p) => mapped.save(p, a.format.into())?,
        None => {
            let mut out = stdout();
            mapped.write(&mut out, a.format.into())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let map = LinearMap::load(&a.map)?;
    let source = load_space(&a.spaces.source, a.spaces.format)?;
    let target = load_space(&a.spaces.target, a.spaces.format)?;
    let mut names = read_tokens(&a.pivots)?;
    if names.is_empty() {
        bail!(zeroshot::Error::InvalidArgument("pivot file lists no tokens".into()));
    }
    let k = a.k as usize;
    if k > target.len() {
        bail!(Usage(format!("--k {k} exceeds the {} targets", target.len())));
    }
    let n_pivots = names.len();
    if a.aux_pivots > 0 {
        let chosen: std::collections::HashSet<&str> = names.iter().map(String::as_str).collect();
        let pool: Vec<&String> = source.vocab().iter().filter(|t| !chosen.contains(t.as_str())).collect();
        let n = a.aux_pivots.min(pool.len());
        if n < a.aux_pivots {
            warn!("only {n} auxiliary pivots available");
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
        let extra: Vec<String> = rand::seq::index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        names.extend(extra);
    }
    let x = rows_of(&source, &names)?;
    let mapped = map.apply(x.view())?;
    let sim = cosine_matrix(mapped.view(), target.matrix())?;
    let result = query(&sim, a.method, k)?.truncate_pivots(n_pivots);
    let mut out = stdout();
    let extra = format!("aux_pivots={}", names.len() - n_pivots);
    result.write_tsv(&mut out, &names, target.vocab(), &extra)?;
    out.flush()?;
    Ok(())
}

fn hubness(a: HubnessArgs) -> Result<()> {
    let mut target = load_space(&a.target, a.format)?;
    if let Some(p) = &a.group_targets {
        let labels = read_labels(p)?;
        target = group_average(&target, &labels)?;
        info!("grouped targets into {} labels", target.len());
    }
    let pivots = match (&a.map, &a.source) {
        (Some(m), Some(s)) => {
            let map = LinearMap::load(m)?;
            let source = load_space(s, a.format)?;
            let tokens = match &a.pivots {
                Some(p) => read_tokens(p)?,
                None => source.vocab().to_vec(),
            };
            map.apply(rows_of(&source, &tokens)?.view())?
        }
        (None, None) => match &a.pivots {
            Some(p) => rows_of(&target, &read_tokens(p)?)?,
            None => target.matrix().to_owned(),
        },
        _ => bail!(Usage("--source and --map go together".into())),
    };
    let k = a.k as usize;
    if k > target.len() {
        bail!(Usage(format!("--k {k} exceeds the {} targets", target.len())));
    }
    let sim = cosine_matrix(pivots.view(), target.matrix())?;
    let report = hub_scores(&query(&sim, a.method, k)?, target.vocab())?;
    let corr = if target.len() >= 3 {
        Some(cosine_to_mean_correlation(target.matrix(), pivots.view(), &report.n_k, None)?)
    } else {
        None
    };
    info!(
        "max N_{k} = {}, skewness = {:.4}, rho = {:?}",
        report.max_nk,
        report.skewness,
        corr.map(|c| c.rho)
    );
    let mut out = stdout();
    report.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.summary {
        let json = serde_json::to_string_pretty(&report.summary(corr.as_ref(), a.top))?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.histogram {
        let mut f = BufWriter::new(File::create(p).with_context(|| format!("writing {}", p.display()))?);
        report.write_histogram_csv(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn read_labels(path: &Path) -> Result<HashMap<String, String>> {
    let d = GoldDictionary::load(path)?;
    let mut labels = HashMap::new();
    for (tok, label) in d.pairs() {
        if labels.insert(tok.clone(), label.clone()).is_some() {
            bail!(zeroshot::Error::InvalidArgument(format!("`{tok}` has several labels")));
        }
    }
    Ok(labels)
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        config.settings.seed = s;
    }
    info!("resolved config: {config:?}");
    let report = run_experiment(&config)?;
    let written = report.write_files(&a.out)?;
    let timings: Vec<serde_json::Value> = report
        .timings
        .iter()
        .map(|(phase, secs)| serde_json::json!({ "phase": phase, "seconds": secs }))
        .collect();
    let tp = a.out.join("timings.json");
    fs::write(&tp, serde_json::to_string_pretty(&timings)? + "\n")
        .with_context(|| format!("writing {}", tp.display()))?;
    let mut out = stdout();
    for p in written.iter().chain([&tp]) {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        d: a.d,
        n_train: a.n_train,
        n_test: a.n_test,
        n_targets: a.n_targets,
        noise_sigma: a.noise,
    };
    info!("{cfg:?}");
    let data = generate_synthetic_pair_spaces(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    data.source.save(a.out.join("source.txt"), EmbeddingFormat::TextHeader)?;
    data.target.save(a.out.join("target.txt"), EmbeddingFormat::TextHeader)?;
    for (name, dict) in [("train.tsv", &data.train), ("test.tsv", &data.test)] {
        let mut body = String::new();
        for (s, t) in dict.pairs() {
            body.push_str(&format!("{s}\t{t}\n"));
        }
        fs::write(a.out.join(name), body)?;
    }
    let config = format!(
        "source_embeddings = source.txt\ntarget_embeddings = target.txt\n\
         train_pairs = train.tsv\ntest_pairs = test.tsv\n\
         lambda_modes = none\nmethods = nn,nn_nrm,gc\nhubness_k = 20\nseed = {}\n",
        a.seed
    );
    fs::write(a.out.join("experiment.cfg"), config)?;
    let mut out = stdout();
    for f in ["source.txt", "target.txt", "train.tsv", "test.tsv", "experiment.cfg"] {
        writeln!(out, "{}", a.out.join(f).display())?;
    }
    Ok(())
}
