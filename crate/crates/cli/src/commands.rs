use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use tagtrust::eval::{run_experiment_on_store, ExperimentConfig, ExperimentVariant, CSV_HEADER};
use tagtrust::ingest::{
    filter_rare_items, group_transactions, parse_tag_assignments_with, split_per_user, Corpus, CorpusRole,
    DatasetStats, Transaction,
};
use tagtrust::profiles::build_profiles;
use tagtrust::recommend::recommend_top_n;
use tagtrust::scoring::{FusionConfig, ScoringConfig};
use tagtrust::store::{ShardMap, ShardedStore};

use crate::args::{BackendArg, Metric, PlotArgs, RecommendArgs, RunConfig};
use crate::manifest::{sha256_hex, Manifest, SplitSettings, FORMAT};
use crate::Failure;

const PROFILES_DIR: &str = "profiles";
const TESTING_FILE: &str = "testing.jsonl";

type CmdResult<T = ()> = Result<T, Failure>;

/// Bad flags or settings that disagree with a previous ingest.
fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Unreadable, malformed or missing data.
fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

fn engine(e: tagtrust::Error) -> Failure {
    match e {
        tagtrust::Error::InvalidArgument(_) => usage(e),
        _ => data(e),
    }
}

/// A filtered, split corpus with its training profiles.
struct Prepared {
    manifest: Manifest,
    store: ShardedStore,
    testing: Corpus,
}

impl RunConfig {
    fn split_settings(&self) -> SplitSettings {
        SplitSettings {
            layout: self.layout.layout(),
            header: format!("{:?}", self.layout.header).to_lowercase(),
            min_taggers: self.min_taggers,
            test_fraction: self.test_fraction,
            seed: self.seed,
        }
    }

    fn input_path(&self) -> CmdResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| usage(anyhow!("--input (or TAGTRUST_INPUT) is required")))
    }

    fn experiment(&self, total_users: usize) -> CmdResult<ExperimentConfig> {
        Ok(ExperimentConfig {
            variants: self.variants.clone(),
            k_values: self.k_values.clone(),
            top_n: self.top_n,
            scoring: self.scoring(total_users)?,
            precision: self.precision_denominator.into(),
        })
    }

    fn scoring(&self, total_users: usize) -> CmdResult<ScoringConfig> {
        Ok(ScoringConfig {
            fusion: FusionConfig::new(self.lambda).map_err(engine)?,
            similarity_mode: self.similarity_mode.into(),
            importance_pool: self.eq6_pool.resolve(total_users),
            trust_denominator: self.eq7_denominator.into(),
        })
    }

    fn prepare(&self) -> CmdResult<Prepared> {
        let path = self.input_path()?;
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(data)?;
        let rows = parse_tag_assignments_with(&bytes[..], &self.layout.layout(), self.layout.header.into())
            .map_err(|e| data(anyhow!("{}: {e}", path.display())))?;
        let raw = DatasetStats::from_assignments(&rows);
        if raw.tag_assignments == 0 {
            eprintln!("warning: {} contains no tag assignments", path.display());
        }
        let filtered = filter_rare_items(&group_transactions(&rows), self.min_taggers).map_err(engine)?;
        let (training, testing) = split_per_user(&filtered, self.test_fraction, self.seed).map_err(engine)?;
        let map = ShardMap::new(self.shard_count as usize).map_err(engine)?;
        let store = ShardedStore::new(map);
        build_profiles(&training.transactions, &store).map_err(engine)?;

        let distinct = |f: fn(&Transaction) -> &str| filtered.iter().map(f).collect::<BTreeSet<_>>().len();
        let manifest = Manifest {
            format: FORMAT.into(),
            input: path.display().to_string(),
            input_sha256: sha256_hex(&bytes),
            raw,
            filtered_transactions: filtered.len(),
            filtered_users: distinct(|t| &t.user_id),
            filtered_items: distinct(|t| &t.item_id),
            training_transactions: training.len(),
            training_users: store.user_ids().len(),
            testing_transactions: testing.len(),
            min_taggers: self.min_taggers,
            test_fraction: self.test_fraction,
            seed: self.seed,
            store_backend: format!("{:?}", self.store_backend).to_lowercase(),
            shard_count: self.shard_count as usize,
            config_hash: self.split_settings().hash(),
        };
        Ok(Prepared {
            manifest,
            store,
            testing,
        })
    }

    /// Profiles and test set: rebuilt from the input for the memory backend,
    /// loaded from the store directory for the file backend.
    fn open(&self) -> CmdResult<Prepared> {
        if self.store_backend == BackendArg::Memory {
            return self.prepare();
        }
        let dir = &self.store_dir;
        let manifest = Manifest::read(dir).map_err(data)?;
        let expected = self.split_settings().hash();
        if manifest.config_hash != expected {
            return Err(usage(anyhow!(
                "split settings differ from the ingest recorded in {} (config hash {} vs {}); \
                 rerun ingest or pass the same --seed, --test-fraction, --min-taggers and layout",
                dir.display(),
                manifest.config_hash,
                expected
            )));
        }
        if let Some(input) = &self.input {
            let bytes = fs::read(input).with_context(|| format!("reading {}", input.display())).map_err(data)?;
            if sha256_hex(&bytes) != manifest.input_sha256 {
                return Err(usage(anyhow!("{} changed since ingest", input.display())));
            }
        }
        let store = ShardedStore::load(&dir.join(PROFILES_DIR)).map_err(engine)?;
        let testing = read_testing(&dir.join(TESTING_FILE))?;
        Ok(Prepared {
            manifest,
            store,
            testing,
        })
    }

    fn thread_pool(&self) -> CmdResult<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n as usize);
        }
        builder.build().map_err(usage)
    }
}

fn write_testing(path: &Path, testing: &Corpus) -> CmdResult {
    let file = File::create(path).with_context(|| format!("creating {}", path.display())).map_err(data)?;
    let mut out = BufWriter::new(file);
    for tx in &testing.transactions {
        serde_json::to_writer(&mut out, tx).map_err(data)?;
        out.write_all(b"\n").map_err(data)?;
    }
    out.flush().map_err(data)
}

fn read_testing(path: &Path) -> CmdResult<Corpus> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(data)?;
    let mut transactions = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        let tx: Transaction = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), n + 1))
            .map_err(data)?;
        transactions.push(tx);
    }
    Ok(Corpus {
        role: CorpusRole::Testing,
        transactions,
    })
}

/// Writes to `path`, or standard output when `path` is `None`.
fn emit(path: Option<&PathBuf>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(data),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(data)?;
            stdout.flush().map_err(data)
        }
    }
}

pub fn ingest(cfg: &RunConfig) -> CmdResult {
    let prepared = cfg.prepare()?;
    let dir = &cfg.store_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(data)?;
    if cfg.store_backend == BackendArg::File {
        let profiles = dir.join(PROFILES_DIR);
        if profiles.exists() {
            fs::remove_dir_all(&profiles).with_context(|| format!("clearing {}", profiles.display())).map_err(data)?;
        }
        prepared.store.save(&profiles).map_err(engine)?;
    }
    write_testing(&dir.join(TESTING_FILE), &prepared.testing)?;
    prepared.manifest.write(dir).map_err(data)?;
    let mut text = serde_json::to_string_pretty(&prepared.manifest).map_err(data)?;
    text.push('\n');
    emit(cfg.output.as_ref(), &text)
}

pub fn evaluate(cfg: &RunConfig) -> CmdResult {
    let prepared = cfg.open()?;
    let experiment = cfg.experiment(prepared.manifest.training_users)?;
    let pool = cfg.thread_pool()?;
    let report = pool
        .install(|| run_experiment_on_store(&prepared.store, &prepared.testing, &experiment))
        .map_err(engine)?;
    if report.excluded_isolated > 0 {
        eprintln!(
            "note: {} of {} test users have no neighbors and are excluded",
            report.excluded_isolated, report.test_users
        );
    }
    emit(cfg.output.as_ref(), &report.to_csv())
}

pub fn recommend(args: &RecommendArgs) -> CmdResult {
    let cfg = &args.run;
    let prepared = cfg.open()?;
    let scoring = cfg.scoring(prepared.manifest.training_users)?;
    let list = match recommend_top_n(&args.user, args.k as usize, cfg.top_n, args.variant, &scoring, &prepared.store) {
        Err(tagtrust::Error::MissingProfile(_)) => {
            return Err(usage(anyhow!("unknown user {:?}", args.user)));
        }
        other => other.map_err(engine)?,
    };
    let mut text = String::new();
    for entry in &list.entries {
        text.push_str(&format!("{}\t{:.6}\n", entry.item_id, entry.score));
    }
    emit(cfg.output.as_ref(), &text)
}

pub fn plot(args: &PlotArgs) -> CmdResult {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))
        .map_err(data)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(data(anyhow!("{} is not an evaluation report", args.report.display())));
    }
    let column = match args.metric {
        Metric::Recall => 2,
        Metric::Precision => 3,
        Metric::Coverage => 4,
    };
    let mut variants: Vec<ExperimentVariant> = Vec::new();
    let mut table: BTreeMap<usize, BTreeMap<ExperimentVariant, String>> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || data(anyhow!("{}:{}: malformed row", args.report.display(), n + 2));
        if fields.len() != 6 {
            return Err(bad());
        }
        let variant: ExperimentVariant = fields[0].parse().map_err(|_| bad())?;
        let k: usize = fields[1].parse().map_err(|_| bad())?;
        if !variants.contains(&variant) {
            variants.push(variant);
        }
        table.entry(k).or_default().insert(variant, fields[column].to_string());
    }
    let mut out = String::from("# k");
    for v in &variants {
        out.push('\t');
        out.push_str(v.name());
    }
    out.push('\n');
    for (k, row) in &table {
        out.push_str(&k.to_string());
        for v in &variants {
            out.push('\t');
            out.push_str(row.get(v).map(String::as_str).unwrap_or("NaN"));
        }
        out.push('\n');
    }
    emit(args.output.as_ref(), &out)
}
