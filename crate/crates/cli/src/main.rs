use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use relneurons::ablate::{evaluate_all, evaluate_offline, random_mask, Evaluation, Prediction};
use relneurons::expert::{k_from_fraction, score_all, top_k_mask, NeuronRanking};
use relneurons::pipeline::{
    layout, prepare_with_world, seed_stability, train_on_corpus, Lab, LabConfig, ResilienceRun,
    SeedStability,
};
use relneurons::probes::{
    build_labeled_set, build_tokenizer, continuations, render_prompts, validate_prompts,
    PromptInstance,
};
use relneurons::store::{self, RunManifest};
use relneurons::tinylm::{neuron_count, SuppressionMask, Tokenizer};
use relneurons::world::{emit_pretraining_corpus, generate_world, World};
use relneurons::Model;

/// Environment variable overriding the default output directory.
const OUT_ENV: &str = "RELNEURONS_OUT";

#[derive(Parser)]
#[command(name = "relneurons", version, about = "Relation-specific neuron lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Lab config JSON; defaults to <out>/config.json, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (default: $RELNEURONS_OUT or the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic world.
    GenWorld(Common),
    /// Emit the pretraining corpus and tokenizer.
    EmitCorpus(Common),
    /// Train the model.
    Train(Common),
    /// Render det, eva and eva2 prompt sets.
    BuildPrompts(Common),
    /// Keep the det prompts the model answers correctly.
    Validate(Common),
    /// Build labeled example sets per relation.
    BuildSets {
        #[command(flatten)]
        common: Common,
        /// Negative-sampling seed (default: first configured seed).
        #[arg(long)]
        negative_seed: Option<u64>,
    },
    /// Capture token-averaged activations for every labeled set.
    Capture(Common),
    /// Rank neurons by average precision.
    Score {
        #[command(flatten)]
        common: Common,
        /// A single activation file; `--out` may then name the CSV directly.
        #[arg(long)]
        activations: Option<PathBuf>,
    },
    /// Write top-k masks, layer histograms and overlaps.
    Select {
        #[command(flatten)]
        common: Common,
        /// Neuron count, or a percentage such as `1%`.
        #[arg(long)]
        k: Option<String>,
    },
    /// Evaluate prompts under a mask, or score offline predictions.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// `none`, `top:relation=R:k=1%`, `random:k=26:seed=3`, `file:PATH` or a mask CSV path.
        #[arg(long, default_value = "none")]
        mask: String,
        /// Prompt JSON-lines to evaluate (default: prompts/eva.jsonl).
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Score an existing predictions file instead of generating.
        #[arg(long, conflicts_with_all = ["prompts"])]
        predictions: Option<PathBuf>,
    },
    /// Intra- and inter-relation accuracy drops.
    DropMatrix(Common),
    /// Accuracy over the neuron-count grid.
    Sweep(Common),
    /// Cumulativity over consecutive sweep ranges.
    Cumulativity(Common),
    /// Concept-specific neurons and their overlap with relation neurons.
    Concepts(Common),
    /// Perplexity of object-in-neutral-context sentences before and after masking.
    Ppl(Common),
    /// Resilient and sensitive facts over every negative-sampling seed.
    Resilience(Common),
    /// Render SVG figures and an index from the results.
    Report(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenWorld(c)
            | Command::EmitCorpus(c)
            | Command::Train(c)
            | Command::BuildPrompts(c)
            | Command::Validate(c)
            | Command::Capture(c)
            | Command::DropMatrix(c)
            | Command::Sweep(c)
            | Command::Cumulativity(c)
            | Command::Concepts(c)
            | Command::Ppl(c)
            | Command::Resilience(c)
            | Command::Report(c) => c,
            Command::BuildSets { common, .. }
            | Command::Score { common, .. }
            | Command::Select { common, .. }
            | Command::Ablate { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::GenWorld(_) => "gen-world",
            Command::EmitCorpus(_) => "emit-corpus",
            Command::Train(_) => "train",
            Command::BuildPrompts(_) => "build-prompts",
            Command::Validate(_) => "validate",
            Command::BuildSets { .. } => "build-sets",
            Command::Capture(_) => "capture",
            Command::Score { .. } => "score",
            Command::Select { .. } => "select",
            Command::Ablate { .. } => "ablate",
            Command::DropMatrix(_) => "drop-matrix",
            Command::Sweep(_) => "sweep",
            Command::Cumulativity(_) => "cumulativity",
            Command::Concepts(_) => "concepts",
            Command::Ppl(_) => "ppl",
            Command::Resilience(_) => "resilience",
            Command::Report(_) => "report",
        }
    }
}

/// One experiment's result document.
#[derive(Serialize, Deserialize)]
struct ResultDoc<T> {
    experiment: String,
    config: LabConfig,
    seed: u64,
    k: usize,
    data: T,
}

#[derive(Serialize, Deserialize)]
struct Selection {
    relations: Vec<String>,
    layer_histograms: BTreeMap<String, Vec<usize>>,
    overlap: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct ResilienceData {
    runs: Vec<ResilienceRun>,
    seed_stability: Vec<SeedStability>,
}

#[derive(Serialize)]
struct AblateData {
    mask: String,
    mask_size: usize,
    accuracy: BTreeMap<String, f64>,
    evaluations: BTreeMap<String, Evaluation>,
}

/// Files written by the running stage, removed again if it fails.
struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
    new_dirs: Vec<PathBuf>,
}

impl Outputs {
    fn new(root: &Path) -> Self {
        Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
            new_dirs: Vec::new(),
        }
    }

    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut d = dir;
        while !d.as_os_str().is_empty() && !d.exists() {
            missing.push(d.to_path_buf());
            match d.parent() {
                Some(p) => d = p,
                None => break,
            }
        }
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.new_dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    /// Registers `rel` (relative to the run directory unless absolute) as an output.
    fn file(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        self.files.push(path.clone());
        Ok(path)
    }

    fn write(&mut self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.file(rel)?;
        std::fs::write(&path, bytes).map_err(|e| relneurons::Error::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(rel, text + "\n")
    }

    fn rollback(&self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        for d in self.new_dirs.iter().rev() {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}

struct Ctx {
    out: PathBuf,
    /// Set when `--out` names a CSV file rather than a run directory.
    csv_target: Option<PathBuf>,
    config: LabConfig,
    inputs: Vec<PathBuf>,
    outputs: Outputs,
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path).map_err(|e| relneurons::Error::io(path, e))?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(relneurons::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

/// Files in `dir` with the given extension, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| relneurons::Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| relneurons::Error::io(dir, e))?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if path.is_file() && name.ends_with(ext) && !name.ends_with(".manifest.json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> Result<String> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| anyhow!("bad file name {}", path.display()))?;
    Ok(name.split('.').next().unwrap_or(name).to_string())
}

/// `26` or `1%` (of `n`, rounded up).
fn parse_k(text: &str, n: usize) -> Result<usize> {
    let k = if let Some(p) = text.strip_suffix('%') {
        let pct: f64 = p
            .trim()
            .parse()
            .with_context(|| format!("bad percentage `{text}`"))?;
        if !(pct > 0.0 && pct <= 100.0) {
            bail!(relneurons::Error::Config(format!(
                "percentage `{text}` outside (0, 100]"
            )));
        }
        k_from_fraction(pct / 100.0, n)
    } else {
        text.trim()
            .parse()
            .with_context(|| format!("bad neuron count `{text}`"))?
    };
    if k == 0 || k > n {
        bail!(relneurons::Error::KOutOfRange { k, n });
    }
    Ok(k)
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let out = common
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let (out, csv_target) = if out.extension().is_some_and(|e| e == "csv") {
            let dir = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            (dir.to_path_buf(), Some(out))
        } else {
            (out, None)
        };
        let config_path = common.config.clone().or_else(|| {
            let p = out.join(layout::CONFIG);
            p.exists().then_some(p)
        });
        let mut config = match &config_path {
            Some(p) => LabConfig::from_json(&read_text(p)?)
                .with_context(|| format!("config {}", p.display()))?,
            None => LabConfig::default(),
        };
        if let Some(s) = common.seed {
            config.seed = s;
        }
        config.validate()?;
        let outputs = Outputs::new(&out);
        Ok(Ctx {
            out,
            csv_target,
            config,
            inputs: Vec::new(),
            outputs,
        })
    }

    fn input(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if !path.exists() {
            bail!(relneurons::Error::io(
                &path,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "missing input; run the earlier stage first"
                ),
            ));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    fn world(&mut self) -> Result<World> {
        let p = self.input(layout::WORLD)?;
        Ok(World::from_json(&read_text(&p)?)?)
    }

    fn tokenizer(&mut self) -> Result<Tokenizer> {
        let p = self.input(layout::TOKENIZER)?;
        Ok(Tokenizer::load(p)?)
    }

    fn model(&mut self) -> Result<Model> {
        let p = self.input(layout::MODEL)?;
        Ok(Model::load(p)?)
    }

    fn prompts(&mut self, rel: impl AsRef<Path>) -> Result<Vec<PromptInstance>> {
        let p = self.input(rel)?;
        Ok(store::read_prompts(p)?)
    }

    /// A lab rebuilt from the world, tokenizer and model in the run directory.
    fn lab(&mut self) -> Result<Lab> {
        let world = self.world()?;
        let tokenizer = self.tokenizer()?;
        let model = self.model()?;
        let prepared = prepare_with_world(&self.config, world)?;
        if prepared.tokenizer != tokenizer {
            bail!(relneurons::Error::Invalid(
                "tokenizer.json does not match the world and templates".into()
            ));
        }
        Ok(Lab::new(self.config.clone(), prepared, model)?)
    }

    /// Relation rankings written by `score`, in relation order.
    fn rankings(&mut self) -> Result<Vec<NeuronRanking>> {
        let dir = self.out.join(layout::RANKINGS_DIR);
        let files = files_with_ext(&dir, ".csv")?;
        if files.is_empty() {
            bail!(relneurons::Error::Invalid(format!(
                "no rankings in {}",
                dir.display()
            )));
        }
        files
            .into_iter()
            .map(|f| {
                self.inputs.push(f.clone());
                Ok(store::read_ranking(&f)?)
            })
            .collect()
    }

    fn result<T: Serialize>(&mut self, experiment: &str, k: usize, data: T) -> Result<()> {
        let doc = ResultDoc {
            experiment: experiment.to_string(),
            config: self.config.clone(),
            seed: self.config.seed,
            k,
            data,
        };
        self.outputs.write_json(
            Path::new(layout::RESULTS_DIR).join(format!("{experiment}.json")),
            &doc,
        )?;
        Ok(())
    }

    fn finish(&self, stage: &str, started: u128) -> Result<()> {
        let mut manifest = RunManifest::load_or_default(&self.out)?;
        manifest.record(
            &self.out,
            stage,
            &self.config,
            self.config.seed,
            &self.inputs,
            &self.outputs.files,
            started,
        )?;
        manifest.save(&self.out)?;
        Ok(())
    }
}

fn group_by_relation(prompts: Vec<PromptInstance>) -> BTreeMap<String, Vec<PromptInstance>> {
    let mut map: BTreeMap<String, Vec<PromptInstance>> = BTreeMap::new();
    for p in prompts {
        map.entry(p.relation.clone()).or_default().push(p);
    }
    map
}

enum MaskSpec {
    None,
    Top { relation: String, k: String },
    Random { k: String, seed: Option<u64> },
    File(PathBuf),
}

fn parse_mask_spec(spec: &str) -> Result<MaskSpec> {
    let fields = |rest: &str| -> Result<BTreeMap<String, String>> {
        rest.split(':')
            .filter(|s| !s.is_empty())
            .map(|kv| {
                let (k, v) = kv.split_once('=').ok_or_else(|| {
                    relneurons::Error::Config(format!("mask field `{kv}` is not key=value"))
                })?;
                Ok((k.to_string(), v.to_string()))
            })
            .collect()
    };
    let take = |m: &mut BTreeMap<String, String>, key: &str| -> Result<String> {
        m.remove(key).ok_or_else(|| {
            anyhow!(relneurons::Error::Config(format!(
                "mask spec `{spec}` lacks `{key}=`"
            )))
        })
    };
    let check_empty = |m: &BTreeMap<String, String>| -> Result<()> {
        if let Some(k) = m.keys().next() {
            bail!(relneurons::Error::Config(format!(
                "unknown mask field `{k}`"
            )));
        }
        Ok(())
    };
    if spec == "none" {
        return Ok(MaskSpec::None);
    }
    if let Some(rest) = spec.strip_prefix("top:") {
        let mut m = fields(rest)?;
        let relation = take(&mut m, "relation")?;
        let k = take(&mut m, "k")?;
        check_empty(&m)?;
        return Ok(MaskSpec::Top { relation, k });
    }
    if let Some(rest) = spec.strip_prefix("random:") {
        let mut m = fields(rest)?;
        let k = take(&mut m, "k")?;
        let seed = m
            .remove("seed")
            .map(|s| s.parse::<u64>())
            .transpose()
            .map_err(|e| relneurons::Error::Config(format!("bad mask seed: {e}")))?;
        check_empty(&m)?;
        return Ok(MaskSpec::Random { k, seed });
    }
    Ok(MaskSpec::File(PathBuf::from(
        spec.strip_prefix("file:").unwrap_or(spec),
    )))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn run(command: &Command, ctx: &mut Ctx) -> Result<()> {
    let seed = ctx.config.seed;
    match command {
        Command::GenWorld(_) => {
            let world = generate_world(&ctx.config.world, seed)?;
            let config = ctx.config.clone();
            ctx.outputs.write_json(layout::CONFIG, &config)?;
            ctx.outputs.write(layout::WORLD, world.to_json())?;
            println!(
                "world: {} relations, {} triples",
                world.relation_names().len(),
                world.n_triples()
            );
        }
        Command::EmitCorpus(_) => {
            let world = ctx.world()?;
            let templates = ctx.config.templates_for();
            let corpus = emit_pretraining_corpus(&world, &templates, seed)?;
            let tokenizer = build_tokenizer(&world, &templates)?;
            let mut text = corpus.join("\n");
            text.push('\n');
            ctx.outputs.write(layout::CORPUS, text)?;
            let p = ctx.outputs.file(layout::TOKENIZER)?;
            tokenizer.save(p)?;
            println!(
                "corpus: {} lines, vocabulary {}",
                corpus.len(),
                tokenizer.len()
            );
        }
        Command::Train(_) => {
            let world = ctx.world()?;
            let tokenizer = ctx.tokenizer()?;
            let corpus_path = ctx.input(layout::CORPUS)?;
            let corpus: Vec<String> = read_text(&corpus_path)?
                .lines()
                .map(str::to_string)
                .collect();
            let prepared = prepare_with_world(&ctx.config, world)?;
            let (model, report) =
                train_on_corpus(&ctx.config, &tokenizer, &corpus, &prepared.prompts.det)?;
            let p = ctx.outputs.file(layout::MODEL)?;
            model.save(p)?;
            ctx.outputs.write_json(layout::TRAIN_REPORT, &report)?;
            println!(
                "trained {} steps, final loss {:.4}, det accuracy {:.3}",
                report.steps,
                report.final_loss,
                report.det_accuracy.unwrap_or(0.0)
            );
        }
        Command::BuildPrompts(_) => {
            let world = ctx.world()?;
            let templates = ctx.config.templates_for();
            let splits = relneurons::pipeline::splits_for(&world, ctx.config.n_eva, seed)?;
            let prompts = render_prompts(&world, &templates, &splits)?;
            for (name, set) in [
                ("det", &prompts.det),
                ("eva", &prompts.eva),
                ("eva2", &prompts.eva2),
            ] {
                let flat: Vec<PromptInstance> = set.values().flatten().cloned().collect();
                let p = ctx
                    .outputs
                    .file(Path::new(layout::PROMPTS_DIR).join(format!("{name}.jsonl")))?;
                store::write_prompts(p, &flat)?;
            }
            println!(
                "prompts: {} det, {} eva",
                prompts.det.values().map(Vec::len).sum::<usize>(),
                prompts.eva.values().map(Vec::len).sum::<usize>()
            );
        }
        Command::Validate(_) => {
            let tokenizer = ctx.tokenizer()?;
            let model = ctx.model()?;
            let det =
                group_by_relation(ctx.prompts(Path::new(layout::PROMPTS_DIR).join("det.jsonl"))?);
            let (kept, report) =
                validate_prompts(&model, &tokenizer, &det, &SuppressionMask::empty())?;
            let flat: Vec<PromptInstance> = kept.values().flatten().cloned().collect();
            let p = ctx.outputs.file(layout::VALIDATED_DET)?;
            store::write_prompts(p, &flat)?;
            ctx.outputs.write_json(layout::VALIDATION, &report)?;
            for (rel, (k, n)) in &report.survivors {
                println!("{rel}: {k}/{n} survive");
            }
            for rel in report.empty_relations() {
                eprintln!("warning: no det prompt of `{rel}` survives validation");
            }
        }
        Command::BuildSets { negative_seed, .. } => {
            let det = group_by_relation(ctx.prompts(layout::VALIDATED_DET)?);
            let nseed = negative_seed.unwrap_or(ctx.config.negative_seeds[0]);
            for (rel, prompts) in &det {
                if prompts.is_empty() {
                    continue;
                }
                let set = build_labeled_set(rel, &det, ctx.config.negative_ratio, nseed)?;
                let dir = ctx.out.join(layout::SETS_DIR);
                ctx.outputs.file(dir.join(format!("{rel}.jsonl")))?;
                ctx.outputs.file(dir.join(format!("{rel}.manifest.json")))?;
                store::write_labeled_set(&dir, rel, &set)?;
                if set.shortfall > 0 {
                    eprintln!("warning: `{rel}` is {} negatives short", set.shortfall);
                }
            }
        }
        Command::Capture(_) => {
            let tokenizer = ctx.tokenizer()?;
            let model = ctx.model()?;
            let tap = relneurons::tinylm::NeuronTapSpec::new(ctx.config.kinds.iter().copied())?;
            let dir = ctx.out.join(layout::SETS_DIR);
            for f in files_with_ext(&dir, ".jsonl")? {
                let name = stem(&f)?;
                ctx.inputs.push(f.clone());
                let set = store::read_labeled_set(&dir, &name)?;
                let matrix = set.capture(&model, &tokenizer, &tap)?;
                let p = ctx
                    .outputs
                    .file(Path::new(layout::ACTIVATIONS_DIR).join(format!("{name}.bin")))?;
                store::write_activation_file(p, &matrix)?;
            }
        }
        Command::Score { activations, .. } => {
            let files = match activations {
                Some(a) => vec![ctx.input(a)?],
                None => files_with_ext(&ctx.out.join(layout::ACTIVATIONS_DIR), ".bin")?,
            };
            if ctx.csv_target.is_some() && files.len() != 1 {
                bail!(relneurons::Error::Config(
                    "a CSV --out needs exactly one --activations file".into()
                ));
            }
            for f in files {
                if !ctx.inputs.contains(&f) {
                    ctx.inputs.push(f.clone());
                }
                let name = stem(&f)?;
                let matrix = store::read_activation_file(&f)?;
                let ranking = score_all(name.clone(), &matrix)?;
                let target = if let Some(t) = &ctx.csv_target {
                    PathBuf::from(t.file_name().expect("csv file name"))
                } else {
                    Path::new(layout::RANKINGS_DIR).join(format!("{name}.csv"))
                };
                let p = ctx.outputs.file(target)?;
                store::write_ranking(&p, &ranking)?;
                println!(
                    "{name}: top AP {:.4}",
                    ranking.entries.first().map_or(0.0, |e| e.ap)
                );
            }
        }
        Command::Select { k, .. } => {
            let rankings = ctx.rankings()?;
            let n = rankings[0].len();
            let k = match k {
                Some(t) => parse_k(t, n)?,
                None => k_from_fraction(ctx.config.top_fraction, n),
            };
            let mut layer_histograms = BTreeMap::new();
            for r in &rankings {
                let mask = top_k_mask(r, k)?;
                let p = ctx
                    .outputs
                    .file(Path::new(layout::MASKS_DIR).join(format!("{}.csv", r.target)))?;
                store::write_mask(p, &mask, Some(r))?;
                layer_histograms
                    .insert(r.target.clone(), relneurons::expert::layer_histogram(r, k)?);
            }
            let selection = Selection {
                relations: rankings.iter().map(|r| r.target.clone()).collect(),
                layer_histograms,
                overlap: relneurons::expert::overlap_matrix(&rankings, k)?,
            };
            ctx.result("selection", k, selection)?;
        }
        Command::Ablate {
            mask,
            prompts,
            predictions,
            ..
        } => {
            if let Some(pred_path) = predictions {
                let pred_path = ctx.input(pred_path)?;
                let preds = store::read_predictions(pred_path)?;
                let evals = evaluate_offline(&preds)?;
                let data = AblateData {
                    mask: "offline".into(),
                    mask_size: 0,
                    accuracy: evals.iter().map(|(r, e)| (r.clone(), e.accuracy)).collect(),
                    evaluations: evals,
                };
                ctx.result("ablate_offline", 0, data)?;
            } else {
                let spec = parse_mask_spec(mask)?;
                let tokenizer = ctx.tokenizer()?;
                let model = ctx.model()?;
                let n = neuron_count(model.config(), &ctx.config.kinds);
                let (m, id, k) = match spec {
                    MaskSpec::None => (SuppressionMask::empty(), "none".to_string(), 0),
                    MaskSpec::Top { relation, k } => {
                        let p = ctx.input(
                            Path::new(layout::RANKINGS_DIR).join(format!("{relation}.csv")),
                        )?;
                        let ranking = store::read_ranking(p)?;
                        let k = parse_k(&k, ranking.len())?;
                        (top_k_mask(&ranking, k)?, format!("top_{relation}_k{k}"), k)
                    }
                    MaskSpec::Random { k, seed: s } => {
                        let k = parse_k(&k, n)?;
                        let s = s.unwrap_or(seed);
                        let m = random_mask(model.config(), &ctx.config.kinds, k, s)?;
                        (m, format!("random_k{k}_s{s}"), k)
                    }
                    MaskSpec::File(p) => {
                        let p = ctx.input(p)?;
                        let m = store::read_mask(&p)?;
                        let k = m.len();
                        (m, format!("file_{}", stem(&p)?), k)
                    }
                };
                let id = sanitize(&id);
                let prompt_path = prompts
                    .clone()
                    .unwrap_or_else(|| Path::new(layout::PROMPTS_DIR).join("eva.jsonl"));
                let set = group_by_relation(ctx.prompts(prompt_path)?);
                let evals = evaluate_all(&model, &tokenizer, &set, &m, &id)?;
                let flat: Vec<PromptInstance> = set.values().flatten().cloned().collect();
                let conts = continuations(&model, &tokenizer, &flat, &m)?;
                let preds: Vec<Prediction> = flat
                    .iter()
                    .zip(conts)
                    .map(|(p, (tokens, text))| Prediction {
                        relation: p.relation.clone(),
                        subject: p.subject.clone(),
                        object: p.object.clone(),
                        text: p.text.clone(),
                        predicted_tokens: tokens,
                        predicted_text: text,
                        mask_id: id.clone(),
                    })
                    .collect();
                let pp = ctx
                    .outputs
                    .file(Path::new(layout::RESULTS_DIR).join(format!("predictions_{id}.jsonl")))?;
                store::write_predictions(pp, &preds)?;
                for (r, e) in &evals {
                    println!("{r}: {:.3}", e.accuracy);
                }
                let data = AblateData {
                    mask: mask.clone(),
                    mask_size: m.len(),
                    accuracy: evals.iter().map(|(r, e)| (r.clone(), e.accuracy)).collect(),
                    evaluations: evals,
                };
                ctx.result(&format!("ablate_{id}"), k, data)?;
            }
        }
        Command::DropMatrix(_) => {
            let rankings = ctx.rankings()?;
            let lab = ctx.lab()?;
            let intra = lab.intra(&rankings)?;
            let matrix = lab.drop_matrix(&rankings)?;
            for row in &intra {
                println!(
                    "{}: baseline {:.3}, top-k {:.3}, random {:.3}",
                    row.relation, row.baseline, row.top_k, row.random_mean
                );
            }
            let mut csv = String::from("relation");
            for r in &matrix.relations {
                csv.push(',');
                csv.push_str(r);
            }
            csv.push('\n');
            for (i, r) in matrix.relations.iter().enumerate() {
                csv.push_str(r);
                for c in &matrix.cells[i] {
                    csv.push(',');
                    if let Some(v) = c {
                        csv.push_str(&v.to_string());
                    }
                }
                csv.push('\n');
            }
            ctx.outputs
                .write(Path::new(layout::RESULTS_DIR).join("drop_matrix.csv"), csv)?;
            ctx.result("intra", lab.k, intra)?;
            ctx.result("drop_matrix", lab.k, matrix)?;
        }
        Command::Sweep(_) => {
            let rankings = ctx.rankings()?;
            let lab = ctx.lab()?;
            let curves = lab.sweeps(&rankings)?;
            let mut csv = String::from("relation,k,acc_self,acc_others_mean\n");
            for c in &curves {
                for p in &c.points {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        c.relation, p.k, p.acc_self, p.acc_others_mean
                    ));
                }
            }
            ctx.outputs
                .write(Path::new(layout::RESULTS_DIR).join("sweep.csv"), csv)?;
            ctx.result("sweep", lab.k, curves)?;
        }
        Command::Cumulativity(_) => {
            let rankings = ctx.rankings()?;
            let lab = ctx.lab()?;
            let rows = lab.cumulativity(&rankings)?;
            for row in &rows {
                for r in &row.reports {
                    println!(
                        "{} {}..{}: total {}, affected {}",
                        row.relation, r.k_small, r.k_large, r.n_total, r.n_affected
                    );
                }
            }
            ctx.result("cumulativity", lab.k, rows)?;
        }
        Command::Concepts(_) => {
            let rankings = ctx.rankings()?;
            let lab = ctx.lab()?;
            let report = lab.concepts(&rankings)?;
            ctx.result("concepts", lab.k, report)?;
        }
        Command::Ppl(_) => {
            let rankings = ctx.rankings()?;
            let lab = ctx.lab()?;
            let ppl = lab.ppl(&rankings)?;
            for (r, p) in &ppl {
                println!("{r}: {:.3} -> {:.3}", p.before, p.after);
            }
            ctx.result("ppl", lab.k, ppl)?;
        }
        Command::Resilience(_) => {
            let lab = ctx.lab()?;
            let mut runs = Vec::new();
            let mut per_seed = Vec::new();
            for &s in &lab.config.negative_seeds {
                let rankings = lab.rankings(s)?;
                runs.push(ResilienceRun {
                    negative_seed: s,
                    groups: lab.resilience(&rankings)?,
                });
                per_seed.push(rankings);
            }
            let stability = seed_stability(&per_seed, lab.k)?;
            for st in &stability {
                println!(
                    "{}: top-k jaccard across seeds mean {:.3} min {:.3}",
                    st.relation, st.mean_jaccard, st.min_jaccard
                );
            }
            ctx.result(
                "resilience",
                lab.k,
                ResilienceData {
                    runs,
                    seed_stability: stability,
                },
            )?;
        }
        Command::Report(_) => {
            let results = ctx.out.join(layout::RESULTS_DIR);
            let mut input = store::ReportInput::default();
            let mut load = |name: &str| -> Option<PathBuf> {
                let p = results.join(name);
                p.exists().then(|| {
                    ctx.inputs.push(p.clone());
                    p
                })
            };
            if let Some(p) = load("drop_matrix.json") {
                let doc: ResultDoc<relneurons::ablate::DropMatrix> = read_json(&p)?;
                input
                    .drop_matrices
                    .push((format!("drop matrix (k = {})", doc.k), doc.data));
            }
            if let Some(p) = load("sweep.json") {
                let doc: ResultDoc<Vec<relneurons::ablate::SweepCurve>> = read_json(&p)?;
                input.sweeps = doc.data;
            }
            if let Some(p) = load("selection.json") {
                let doc: ResultDoc<Selection> = read_json(&p)?;
                for (r, h) in doc.data.layer_histograms {
                    input.histograms.push(store::HistogramFigure {
                        name: format!("{r} top-{} by layer", doc.k),
                        counts: h,
                    });
                }
                input.overlaps.push(store::OverlapFigure {
                    name: format!("relation overlap (k = {})", doc.k),
                    labels: doc.data.relations,
                    counts: doc.data.overlap,
                });
            }
            if let Some(p) = load("concepts.json") {
                let doc: ResultDoc<relneurons::pipeline::ConceptReport> = read_json(&p)?;
                input.overlaps.push(store::OverlapFigure {
                    name: format!("concept and relation overlap (k = {})", doc.k),
                    labels: doc.data.labels,
                    counts: doc.data.overlap,
                });
            }
            let dir = ctx.out.join(layout::REPORT_DIR);
            ctx.outputs.ensure_dir(&dir)?;
            let files = store::render_report(&input, &dir)?;
            ctx.outputs.files.extend(files.iter().cloned());
            println!("report: {} files in {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<relneurons::Error>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = store::now_ms();
    let name = cli.command.name();
    let mut ctx = match Ctx::new(cli.command.common()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if ctx.csv_target.is_some() && !matches!(cli.command, Command::Score { .. }) {
        eprintln!("error: {name}: --out must be a directory");
        return ExitCode::from(1);
    }
    let result = run(&cli.command, &mut ctx).and_then(|()| {
        if ctx.csv_target.is_some() {
            Ok(())
        } else {
            ctx.finish(name, started)
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            ctx.outputs.rollback();
            eprintln!("error: {name}: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
