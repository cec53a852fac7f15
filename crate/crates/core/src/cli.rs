//! The `pqgram` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{gen_strings, load_tsv, save_tsv, LabeledCorpus, LabeledTree};
use crate::error::Error;
use crate::knn::{
    benchmark_inference, cross_validate, BenchResult, PqGramDistance, TedDistance,
    WeightedPqGramDistance, CSV_HEADER,
};
use crate::lmnn::{train, TrainConfig, TrainedModel};
use crate::metric::{pq_distance, weighted_distance, WeightModel};
use crate::model_file::{load_model, save_model};
use crate::pqgram::{build_vocabulary, extract_grams, profile, GramShape};
use crate::ted::{tree_edit_distance, EditCostTable};
use crate::tree::parse_tree;

#[derive(Debug, Parser)]
#[command(name = "pqgram", version, about = "Weighted pq-gram distances for ordered labeled trees")]
struct Cli {
    /// Worker threads for distance evaluation (0 = all cores). Defaults to
    /// 1 for `bench` and all cores otherwise.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic Strings corpus as TSV.
    GenStrings {
        /// Strings per class.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the pq-gram label tuples of a tree with their counts.
    Grams {
        #[arg(long)]
        tree: String,
        #[arg(short, default_value_t = 2)]
        p: usize,
        #[arg(short, default_value_t = 2)]
        q: usize,
    },
    /// Distance between two trees.
    Dist {
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long)]
        t1: String,
        #[arg(long)]
        t2: String,
        #[arg(short)]
        p: Option<usize>,
        #[arg(short)]
        q: Option<usize>,
        /// Trained model for `wpq`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Learn pq-gram weights on a TSV corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated k-NN error of the unweighted (E1) or learned (E2)
    /// distance.
    KnnEval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        setting: Setting,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        train: TrainArgs,
        /// Write the per-fold CSV report here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Record wall-clock seconds in the CSV (makes it non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Time k-NN inference with several distances on one split.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "pq,ted")]
        algos: Vec<Algo>,
        #[arg(short, default_value_t = 3)]
        k: usize,
        #[arg(short, default_value_t = 2)]
        p: usize,
        #[arg(short, default_value_t = 2)]
        q: usize,
        /// Trained model for `wpq`; unit weights over the training split if
        /// omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Fraction of the corpus held out as queries.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    Pq,
    Wpq,
    Ted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Setting {
    #[value(name = "E1")]
    E1,
    #[value(name = "E2")]
    E2,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(short, default_value_t = 2)]
    p: usize,
    #[arg(short, default_value_t = 2)]
    q: usize,
    #[arg(short, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 5.0)]
    mu1: f64,
    #[arg(long, default_value_t = 5.0)]
    mu2: f64,
    #[arg(long, default_value_t = 1e-4)]
    beta: f64,
    #[arg(long, default_value_t = 1e-2)]
    eta: f64,
    #[arg(long, default_value_t = 600)]
    epochs: usize,
    /// Recompute impostors every this many epochs.
    #[arg(long, default_value_t = 50)]
    refresh: usize,
    /// Subsample cap for pair construction.
    #[arg(long, default_value_t = 200)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainArgs {
    fn shape(&self) -> Result<GramShape, CliError> {
        GramShape::new(self.p, self.q).map_err(usage)
    }

    fn config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            k: self.k,
            mu1: self.mu1,
            mu2: self.mu2,
            beta: self.beta,
            eta: self.eta,
            epochs: self.epochs,
            impostor_refresh_every: self.refresh,
            subsample_cap: self.cap,
            seed: self.seed,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(Error::io(path, e)))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_owned())
}

/// Runs the CLI with `argv` (including the program name) and returns the
/// process exit code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let threads = cli
        .threads
        .unwrap_or(if matches!(cli.command, Command::Bench { .. }) { 1 } else { 0 });
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start thread pool: {e}");
            return 1;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| execute(cli.command, threads != 1, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn execute(command: Command, parallel: bool, out: &mut Vec<u8>) -> Result<(), CliError> {
    let mut emit = |text: String| {
        out.write_all(text.as_bytes())
            .map_err(|e| CliError::Data(Error::io("<stdout>", e)))
    };
    match command {
        Command::GenStrings { n, seed, out } => {
            if n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            let corpus = gen_strings(n, seed)?;
            match out {
                Some(path) => save_tsv(&corpus, path)?,
                None => emit(corpus.to_tsv())?,
            }
        }
        Command::Grams { tree, p, q } => {
            let shape = GramShape::new(p, q).map_err(usage)?;
            let t = parse_tree(&tree).map_err(Error::from)?;
            let mut text = String::new();
            for (tuple, count) in extract_grams(&t, shape).iter() {
                text.push_str(&format!("{tuple}\t{count}\n"));
            }
            emit(text)?;
        }
        Command::Dist { algo, t1, t2, p, q, model } => {
            let text = dist(algo, &t1, &t2, p, q, model.as_deref())?;
            emit(format!("{text}\n"))?;
        }
        Command::Train { data, train: args, out } => {
            let shape = args.shape()?;
            let cfg = args.config()?;
            let corpus = load_tsv(&data)?;
            let model = train(corpus.items(), shape, &cfg)?;
            save_model(&model, &out)?;
            emit(format!(
                "trained on {} trees, {} weights; loss {:.6} -> {:.6}\n",
                corpus.len(),
                model.weights.dim(),
                model.initial_loss().unwrap_or(model.final_loss),
                model.final_loss
            ))?;
        }
        Command::KnnEval { data, setting, folds, train: args, csv, timing } => {
            let shape = args.shape()?;
            let cfg = args.config()?;
            if folds < 2 {
                return Err(usage("--folds must be at least 2"));
            }
            let corpus = load_tsv(&data)?;
            let name = match setting {
                Setting::E1 => "E1",
                Setting::E2 => "E2",
            };
            let report = match setting {
                Setting::E1 => cross_validate(
                    corpus.items(),
                    |train| unweighted(train, shape),
                    name,
                    cfg.k,
                    folds,
                    cfg.seed,
                    parallel,
                )?,
                Setting::E2 => cross_validate(
                    corpus.items(),
                    |train| Ok(WeightedPqGramDistance::new(crate::lmnn::train(train, shape, &cfg)?.weights)),
                    name,
                    cfg.k,
                    folds,
                    cfg.seed,
                    parallel,
                )?,
            };
            if let Some(path) = csv {
                write_file(&path, &report.to_csv(&dataset_name(&data), timing))?;
            }
            emit(report.to_table())?;
        }
        Command::Bench { data, algos, k, p, q, model, repeats, test_fraction, seed, csv } => {
            let shape = GramShape::new(p, q).map_err(usage)?;
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(usage("--test-fraction must be in (0, 1)"));
            }
            if repeats == 0 {
                return Err(usage("--repeats must be at least 1"));
            }
            if k == 0 {
                return Err(usage("-k must be at least 1"));
            }
            if model.is_some() && !algos.contains(&Algo::Wpq) {
                return Err(usage("--model only applies to the wpq algorithm"));
            }
            let corpus = load_tsv(&data)?;
            let (train_set, test_set) = split(&corpus, test_fraction, seed);
            if train_set.is_empty() {
                return Err(usage("--test-fraction leaves no training data"));
            }
            let model = model.map(load_model).transpose()?;
            let mut results = Vec::new();
            for algo in algos {
                let r = match algo {
                    Algo::Pq => {
                        let d = unweighted(&train_set, shape)?;
                        benchmark_inference(&train_set, &test_set, &d, k, repeats, parallel)?
                    }
                    Algo::Wpq => {
                        let d = weighted(&train_set, shape, model.as_ref())?;
                        benchmark_inference(&train_set, &test_set, &d, k, repeats, parallel)?
                    }
                    Algo::Ted => benchmark_inference(
                        &train_set,
                        &test_set,
                        &TedDistance::default(),
                        k,
                        repeats,
                        parallel,
                    )?,
                };
                results.push((algo, r));
            }
            if let Some(path) = csv {
                write_file(&path, &bench_csv(&dataset_name(&data), &results))?;
            }
            emit(bench_table(train_set.len(), test_set.len(), &results))?;
        }
    }
    Ok(())
}

fn unweighted(train: &[LabeledTree], shape: GramShape) -> crate::Result<PqGramDistance> {
    let vocab = build_vocabulary(train.iter().map(|it| &it.tree), shape)?;
    Ok(PqGramDistance::new(Arc::new(vocab)))
}

fn weighted(
    train: &[LabeledTree],
    shape: GramShape,
    model: Option<&TrainedModel>,
) -> crate::Result<WeightedPqGramDistance> {
    match model {
        Some(m) => Ok(WeightedPqGramDistance::new(m.weights.clone())),
        None => {
            let vocab = build_vocabulary(train.iter().map(|it| &it.tree), shape)?;
            Ok(WeightedPqGramDistance::new(WeightModel::unit(Arc::new(vocab))))
        }
    }
}

fn split(corpus: &LabeledCorpus, test_fraction: f64, seed: u64) -> (Vec<LabeledTree>, Vec<LabeledTree>) {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((corpus.len() as f64) * test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test.min(corpus.len()));
    let pick = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.into_iter().map(|i| corpus.items()[i].clone()).collect()
    };
    (pick(train), pick(test))
}

fn algo_name(a: Algo) -> &'static str {
    match a {
        Algo::Pq => "pq",
        Algo::Wpq => "wpq",
        Algo::Ted => "ted",
    }
}

fn bench_csv(dataset: &str, results: &[(Algo, BenchResult)]) -> String {
    let mut out = String::from(CSV_HEADER);
    for (algo, r) in results {
        for (i, s) in r.runs.iter().enumerate() {
            out.push_str(&format!("{dataset},{},{},{},{s}\n", algo_name(*algo), i + 1, r.error));
        }
    }
    out
}

fn bench_table(n_train: usize, n_test: usize, results: &[(Algo, BenchResult)]) -> String {
    let mut out = format!("{n_train} training trees, {n_test} queries\n");
    out.push_str(&format!("{:<6} {:>24} {:>8}\n", "algo", "seconds (mean ± std)", "error"));
    for (algo, r) in results {
        let (mean, std) = r.mean_std();
        out.push_str(&format!(
            "{:<6} {:>24} {:>8.4}\n",
            algo_name(*algo),
            format!("{mean:.6} ± {std:.6}"),
            r.error
        ));
    }
    out
}

fn dist(
    algo: Algo,
    t1: &str,
    t2: &str,
    p: Option<usize>,
    q: Option<usize>,
    model: Option<&Path>,
) -> Result<String, CliError> {
    if model.is_some() && algo != Algo::Wpq {
        return Err(usage("--model only applies to --algo wpq"));
    }
    if algo == Algo::Ted && (p.is_some() || q.is_some()) {
        return Err(usage("-p/-q do not apply to --algo ted"));
    }
    let requested = GramShape::new(p.unwrap_or(2), q.unwrap_or(2)).map_err(usage)?;
    let (t1, t2) = (parse_tree(t1).map_err(Error::from)?, parse_tree(t2).map_err(Error::from)?);
    match algo {
        Algo::Ted => Ok(format!(
            "{:.6}",
            tree_edit_distance(&t1, &t2, &EditCostTable::unit())
        )),
        Algo::Pq => {
            let vocab = build_vocabulary([&t1, &t2], requested)?;
            let x = profile(&t1, &vocab, requested)?;
            let y = profile(&t2, &vocab, requested)?;
            Ok(pq_distance(&x, &y)?.to_string())
        }
        Algo::Wpq => {
            let weights = match model {
                Some(path) => {
                    let m = load_model(path)?;
                    let shape = m.shape();
                    if p.is_some_and(|p| p != shape.p()) || q.is_some_and(|q| q != shape.q()) {
                        return Err(usage(format!(
                            "-p/-q conflict with the model's {shape}"
                        )));
                    }
                    m.weights
                }
                None => WeightModel::unit(Arc::new(build_vocabulary([&t1, &t2], requested)?)),
            };
            let vocab = weights.vocabulary().clone();
            let x = profile(&t1, &vocab, vocab.shape())?;
            let y = profile(&t2, &vocab, vocab.shape())?;
            Ok(format!("{:.6}", weighted_distance(&weights, &x, &y)?))
        }
    }
}
