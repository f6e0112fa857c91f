//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use cbir_core::classifier::{accuracy, init_network, train, Features, TrainConfig, DEFAULT_HIDDEN};
use cbir_core::imagecore::{decode_image, encode_ppm, RasterImage};
use cbir_core::retrieval::{enroll, query, refit_normalization, EnrollRequest, QueryOptions, RetrievalError};
use cbir_core::shape::{shape_descriptor, shape_descriptor_traced};
use cbir_core::store::{QueryParams, Store};
use cbir_core::synth::{generate, ShapeKind, DEFAULT_SIDE};
use cbir_core::Category;
use serde_json::json;

use crate::eval::{ground_truth, render_csv, render_table, run_eval, EvalQuery, LABEL_KEY, SOURCE_KEY};
use crate::labels::{file_name_of, read_labels, LabelEntry};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

const IMAGE_EXTENSIONS: [&str; 7] = ["ppm", "pgm", "png", "jpg", "jpeg", "bmp", "gif"];

#[derive(Debug, Parser)]
#[command(name = "cbir", version, about = "Content-based image retrieval engine")]
pub struct Cli {
    /// Store file.
    #[arg(long, global = true, default_value = "cbir.db")]
    pub db: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enroll every image in a directory.
    Enroll {
        dir: PathBuf,
        /// `path,category` file; listed images are enrolled under that label.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Extra keywords attached to every image (comma separated).
        #[arg(long, value_delimiter = ',')]
        keywords: Vec<String>,
    },
    /// Train the shape classifier on labeled images.
    Train {
        #[arg(long)]
        labels: PathBuf,
        /// Directory relative label paths resolve against (default: the labels file's).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_HIDDEN)]
        hidden: usize,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Refit color/texture normalization over the enrolled corpus.
    FitNorm,
    /// Search with one image.
    Query {
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        json: bool,
    },
    /// CRR/FRR report for a labeled query set.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Compare against every record instead of the predicted category only.
        #[arg(long)]
        ungated: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Directory served under `/` (the web client).
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Write a procedurally generated labeled corpus (one shape family per category).
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SIDE)]
        side: usize,
    },
    /// Write the intermediate shape-pipeline images of one file as PGMs.
    ShapeTrace { image: PathBuf, out: PathBuf },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), BoxError> {
    match cli.command {
        Command::Enroll { dir, labels, keywords } => cmd_enroll(&cli.db, &dir, labels.as_deref(), &keywords, out, err),
        Command::Train { labels, corpus, seed, hidden, epochs, learning_rate, batch_size } => {
            if hidden == 0 {
                return Err("--hidden must be at least 1".into());
            }
            let cfg = TrainConfig { learning_rate, batch_size, max_epochs: epochs, ..TrainConfig::default() };
            cmd_train(&cli.db, &labels, corpus.as_deref(), seed, hidden, &cfg, out)
        }
        Command::FitNorm => {
            let store = Store::open_existing(&cli.db)?;
            let n = refit_normalization(&store)?;
            writeln!(out, "normalization fitted on {} records", n.fitted_on)?;
            Ok(())
        }
        Command::Query { image, top, threshold, json } => cmd_query(&cli.db, &image, top, threshold, json, out),
        Command::Eval { corpus, labels, top, threshold, ungated, json } => {
            cmd_eval(&cli.db, &corpus, &labels, QueryParams { top_k: top, threshold }, !ungated, json, out)
        }
        Command::Serve { port, bind, static_dir } => {
            let store = Arc::new(Store::open(&cli.db)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::api::serve(store, SocketAddr::new(bind, port), static_dir))?;
            Ok(())
        }
        Command::Synth { out: dir, per_class, seed, side } => cmd_synth(&dir, per_class, seed, side, out),
        Command::ShapeTrace { image, out: dir } => {
            let img = read_image(&image)?;
            let (d, trace) = shape_descriptor_traced(&img)?;
            trace.dump(&dir)?;
            writeln!(out, "wrote 5 images to {}", dir.display())?;
            let values: Vec<String> = d.values().iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "descriptor: {}", values.join(" "))?;
            let _ = err;
            Ok(())
        }
    }
}

fn read_image(path: &Path) -> Result<RasterImage, BoxError> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(decode_image(&bytes).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, BoxError> {
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| IMAGE_EXTENSIONS.contains(&x.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Lower-case alphabetic tokens of the file stem.
fn name_keywords(path: &Path) -> Vec<String> {
    let stem = path.file_stem().map(|s| s.to_string_lossy().to_lowercase()).unwrap_or_default();
    stem.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn cmd_enroll(
    db: &Path,
    dir: &Path,
    labels: Option<&Path>,
    extra_keywords: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), BoxError> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(format!("no images found in {}", dir.display()).into());
    }
    let labels: BTreeMap<String, Category> = match labels {
        Some(p) => read_labels(p, Some(dir))?.into_iter().map(|e| (e.file_name(), e.category)).collect(),
        None => BTreeMap::new(),
    };
    let store = Store::open(db)?;
    let mut enrolled = 0;
    let mut skipped = 0;
    for path in &files {
        let name = file_name_of(path);
        let label = labels.get(&name).copied();
        let mut metadata = BTreeMap::from([(SOURCE_KEY.to_string(), name.clone())]);
        if let Some(c) = label {
            metadata.insert(LABEL_KEY.to_string(), c.name().to_string());
        }
        let mut keywords = name_keywords(path);
        keywords.extend(extra_keywords.iter().cloned());
        let bytes = std::fs::read(path)?;
        match enroll(&store, &bytes, EnrollRequest { label, keywords, metadata }) {
            Ok(o) => {
                enrolled += 1;
                writeln!(out, "{}\t{}\t{}", o.image_id, o.category, name)?;
            }
            Err(e @ (RetrievalError::Shape(_) | RetrievalError::Image(_))) => {
                skipped += 1;
                writeln!(err, "skipping {name}: {e}")?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if enrolled == 0 {
        return Err(format!("none of the {} images in {} could be enrolled", files.len(), dir.display()).into());
    }
    writeln!(out, "enrolled {enrolled} images ({skipped} skipped); run fit-norm before querying")?;
    Ok(())
}

fn shape_samples(entries: &[LabelEntry]) -> Result<Vec<(Features, Category)>, BoxError> {
    entries
        .iter()
        .map(|e| {
            let img = read_image(&e.path)?;
            let d = shape_descriptor(&img).map_err(|err| format!("{}: {err}", e.path.display()))?;
            Ok((d.0, e.category))
        })
        .collect()
}

fn cmd_train(
    db: &Path,
    labels: &Path,
    corpus: Option<&Path>,
    seed: u64,
    hidden: usize,
    cfg: &TrainConfig,
    out: &mut dyn Write,
) -> Result<(), BoxError> {
    let entries = read_labels(labels, corpus)?;
    let samples = shape_samples(&entries)?;
    let outcome = train(&init_network(seed, hidden), &samples, cfg)?;
    let store = Store::open(db)?;
    store.put_weights(&outcome.weights)?;
    writeln!(
        out,
        "trained on {} samples: {} epochs, final loss {:.5}, training accuracy {:.2}%",
        samples.len(),
        outcome.epoch_losses.len(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
        100.0 * accuracy(&outcome.weights, &samples)
    )?;
    Ok(())
}

fn cmd_query(db: &Path, image: &Path, top: usize, threshold: f64, as_json: bool, out: &mut dyn Write) -> Result<(), BoxError> {
    let store = Store::open_existing(db)?;
    let img = read_image(image)?;
    let opts = QueryOptions { params: QueryParams { top_k: top, threshold }, ..QueryOptions::default() };
    let res = query(&store, &img, &opts)?;
    let query_id = res.query.as_ref().map(|q| q.query_id);
    let sources: Vec<Option<String>> = {
        let state = store.read();
        res.results
            .iter()
            .map(|r| state.record(r.image_id).and_then(|rec| rec.metadata.get(SOURCE_KEY).cloned()))
            .collect()
    };
    if as_json {
        let results: Vec<_> = res
            .results
            .iter()
            .zip(&sources)
            .map(|(r, s)| {
                json!({
                    "image_id": r.image_id, "rank": r.rank, "score": r.score,
                    "color_sim": r.color_sim, "texture_sim": r.texture_sim, "source": s,
                })
            })
            .collect();
        let doc = json!({
            "query_id": query_id,
            "predicted_category": res.predicted.name(),
            "probs": res.probs,
            "comparisons": res.comparisons,
            "results": results,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    } else {
        writeln!(
            out,
            "query {} predicted {} ({} comparisons, {} results)",
            query_id.unwrap_or_default(),
            res.predicted,
            res.comparisons,
            res.results.len()
        )?;
        writeln!(out, "{:>4}  {:>8}  {:>7}  {:>7}  {:>7}  source", "rank", "image_id", "score", "color", "texture")?;
        for (r, s) in res.results.iter().zip(&sources) {
            writeln!(
                out,
                "{:>4}  {:>8}  {:>7.4}  {:>7.4}  {:>7.4}  {}",
                r.rank,
                r.image_id,
                r.score,
                r.color_sim,
                r.texture_sim,
                s.as_deref().unwrap_or("-")
            )?;
        }
    }
    Ok(())
}

fn cmd_eval(
    db: &Path,
    corpus: &Path,
    labels: &Path,
    params: QueryParams,
    gated: bool,
    as_json: bool,
    out: &mut dyn Write,
) -> Result<(), BoxError> {
    let store = Store::open_existing(db)?;
    let entries = read_labels(labels, Some(corpus))?;
    let queries = entries
        .iter()
        .map(|e| Ok(EvalQuery { source: e.file_name(), label: e.category, image: read_image(&e.path)? }))
        .collect::<Result<Vec<_>, BoxError>>()?;
    let truth = ground_truth(&store, &entries);
    let report = run_eval(&store, &queries, &truth, params, gated)?;
    if as_json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        write!(out, "{}", render_table(&report))?;
        writeln!(out)?;
        write!(out, "{}", render_csv(&report))?;
    }
    Ok(())
}

fn cmd_synth(dir: &Path, per_class: usize, seed: u64, side: usize, out: &mut dyn Write) -> Result<(), BoxError> {
    if per_class == 0 || side < 16 {
        return Err("--per-class must be positive and --side at least 16".into());
    }
    std::fs::create_dir_all(dir)?;
    let mut csv = String::from("path,category\n");
    let mut counters = BTreeMap::new();
    for s in generate(&ShapeKind::ALL, per_class, side, seed) {
        let n = counters.entry(s.kind.name()).or_insert(0);
        *n += 1;
        let name = format!("{}_{:03}.ppm", s.kind.name(), n);
        std::fs::write(dir.join(&name), encode_ppm(&s.image))?;
        csv.push_str(&format!("{},{}\n", name, s.kind.category()));
    }
    std::fs::write(dir.join("labels.csv"), csv)?;
    writeln!(out, "wrote {} images and labels.csv to {}", per_class * ShapeKind::ALL.len(), dir.display())?;
    Ok(())
}
