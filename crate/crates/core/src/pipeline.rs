//! End-to-end orchestration of a lab run from a single JSON config.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ablate::{
    cumulativity, drop_matrix, evaluate, ppl_by_relation, random_mask, resilience_groups, sweep_k,
    template_robustness, CumulativityReport, DropMatrix, PplPair, ResilienceGroups, SweepCurve,
    TemplateRobustness, RANDOM_BASELINE_SEEDS, SWEEP_FRACTIONS,
};
use crate::error::{Error, Result};
use crate::expert::{
    jaccard, k_from_fraction, layer_histogram, overlap_matrix, score_all, top_k, top_k_mask,
    NeuronRanking, DEFAULT_TOP_FRACTION,
};
use crate::probes::{
    build_concept_set, build_labeled_set, build_tokenizer, render_prompts, validate_prompts,
    LabeledExampleSet, PromptInstance, RenderedPrompts, TemplateSet, ValidationReport,
};
use crate::tinylm::{
    neuron_count, ModelConfig, NeuronKind, NeuronTapSpec, PositionEncoding, SuppressionMask,
    Tokenizer, TrainConfig, TrainReport, Trainer,
};
use crate::world::{
    emit_pretraining_corpus, generate_world, split_det_eva, SplitTriples, World, WorldConfig,
};
use crate::Model;

/// Model dimensions without the vocabulary size, which follows from the tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::desk(0, 12);
        ModelShape {
            n_layers: d.n_layers,
            d_model: d.d_model,
            n_heads: d.n_heads,
            d_ff: d.d_ff,
            max_seq_len: d.max_seq_len,
        }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            vocab_size,
            max_seq_len: self.max_seq_len,
            position_encoding: PositionEncoding::LearnedAbsolute,
        }
    }
}

/// Stop training once greedy 2-token det accuracy reaches a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub target_det_accuracy: f64,
    pub check_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub seed: u64,
    pub world: WorldConfig,
    /// `None` uses [`TemplateSet::default_for`].
    pub templates: Option<TemplateSet>,
    pub n_eva: usize,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub early_stop: Option<EarlyStop>,
    pub negative_ratio: usize,
    /// Negative-sampling seeds; the first one produces the main rankings.
    pub negative_seeds: Vec<u64>,
    pub kinds: BTreeSet<NeuronKind>,
    pub top_fraction: f64,
    pub sweep_fractions: Vec<f64>,
    pub random_seeds: u64,
    /// Sweep-grid index pairs `(small, large)`; empty means consecutive pairs.
    pub cumulativity_pairs: Vec<(usize, usize)>,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            seed: 0,
            world: WorldConfig::default(),
            templates: None,
            n_eva: 50,
            model: ModelShape::default(),
            train: TrainConfig::default(),
            early_stop: Some(EarlyStop {
                target_det_accuracy: 0.97,
                check_every: 250,
            }),
            negative_ratio: 4,
            negative_seeds: (0..5).collect(),
            kinds: NeuronKind::FFN.into_iter().collect(),
            top_fraction: DEFAULT_TOP_FRACTION,
            sweep_fractions: SWEEP_FRACTIONS.to_vec(),
            random_seeds: RANDOM_BASELINE_SEEDS,
            cumulativity_pairs: Vec::new(),
        }
    }
}

impl LabConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: LabConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if let Some(t) = &self.templates {
            t.validate()?;
        }
        if self.negative_seeds.is_empty() {
            return Err(Error::Config("negative_seeds must not be empty".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("kinds must not be empty".into()));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::Config("top_fraction must be in (0, 1]".into()));
        }
        if self
            .sweep_fractions
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
            || self.sweep_fractions.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "sweep_fractions must be increasing values in (0, 1]".into(),
            ));
        }
        if let Some(es) = &self.early_stop {
            if es.check_every == 0 {
                return Err(Error::Config(
                    "early_stop.check_every must be positive".into(),
                ));
            }
        }
        for &(a, b) in &self.cumulativity_pairs {
            if a >= b || b >= self.sweep_fractions.len() {
                return Err(Error::Config(format!("bad cumulativity pair ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn templates_for(&self) -> TemplateSet {
        self.templates
            .clone()
            .unwrap_or_else(|| TemplateSet::default_for(&self.world))
    }
}

/// Everything derived deterministically from the config before training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub world: World,
    pub templates: TemplateSet,
    pub tokenizer: Tokenizer,
    pub splits: BTreeMap<String, SplitTriples>,
    pub prompts: RenderedPrompts,
}

pub fn splits_for(
    world: &World,
    n_eva: usize,
    seed: u64,
) -> Result<BTreeMap<String, SplitTriples>> {
    world
        .relation_names()
        .into_iter()
        .map(|r| {
            Ok((
                r.to_string(),
                split_det_eva(world.triples_of(r), n_eva, seed)?,
            ))
        })
        .collect()
}

/// Derives templates, tokenizer, splits and prompts from an existing world.
pub fn prepare_with_world(config: &LabConfig, world: World) -> Result<Prepared> {
    let templates = config.templates_for();
    templates.validate()?;
    let tokenizer = build_tokenizer(&world, &templates)?;
    let splits = splits_for(&world, config.n_eva, config.seed)?;
    let prompts = render_prompts(&world, &templates, &splits)?;
    Ok(Prepared {
        world,
        templates,
        tokenizer,
        splits,
        prompts,
    })
}

pub fn prepare(config: &LabConfig) -> Result<Prepared> {
    config.validate()?;
    let world = generate_world(&config.world, config.seed)?;
    prepare_with_world(config, world)
}

/// Share of prompts whose unmasked 2-token continuation is correct.
pub fn det_accuracy(report: &ValidationReport) -> f64 {
    let (kept, total) = report
        .survivors
        .values()
        .fold((0, 0), |(k, n), &(a, b)| (k + a, n + b));
    if total == 0 {
        0.0
    } else {
        kept as f64 / total as f64
    }
}

/// Trains on the emitted corpus, checking det accuracy when early stopping is configured.
pub fn train_model(config: &LabConfig, prepared: &Prepared) -> Result<(Model, TrainReport)> {
    let corpus = emit_pretraining_corpus(&prepared.world, &prepared.templates, config.seed)?;
    train_on_corpus(config, &prepared.tokenizer, &corpus, &prepared.prompts.det)
}

/// Trains on explicit corpus lines; `det` drives early stopping and the
/// reported det accuracy.
pub fn train_on_corpus(
    config: &LabConfig,
    tokenizer: &Tokenizer,
    corpus: &[String],
    det: &BTreeMap<String, Vec<PromptInstance>>,
) -> Result<(Model, TrainReport)> {
    let data: Vec<Vec<u32>> = corpus
        .iter()
        .map(|l| tokenizer.encode_line(l))
        .collect::<Result<_>>()?;
    let mc = config.model.config(tokenizer.len());
    let model = Model::init(mc, config.seed)?;
    let mut trainer = Trainer::new(
        model,
        data,
        config.train.clone(),
        config.seed.wrapping_add(1),
    )?;
    let empty = SuppressionMask::empty();
    let mut last_acc = None;
    while !trainer.is_done() {
        let chunk = config
            .early_stop
            .map_or(config.train.steps, |e| e.check_every);
        trainer.run(chunk)?;
        if let Some(es) = config.early_stop {
            let (_, rep) = validate_prompts(trainer.model(), tokenizer, det, &empty)?;
            let acc = det_accuracy(&rep);
            last_acc = Some(acc);
            if acc >= es.target_det_accuracy {
                break;
            }
        }
    }
    let (model, mut report) = trainer.finish();
    report.det_accuracy = match last_acc {
        Some(a) => Some(a),
        None => {
            let (_, rep) = validate_prompts(&model, tokenizer, det, &empty)?;
            Some(det_accuracy(&rep))
        }
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraRelation {
    pub relation: String,
    pub baseline: f64,
    pub top_k: f64,
    pub random: Vec<f64>,
    pub random_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativityRow {
    pub relation: String,
    pub reports: Vec<CumulativityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceRun {
    pub negative_seed: u64,
    pub groups: Vec<ResilienceGroups>,
}

/// Agreement of one relation's top-k set across negative-sampling seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStability {
    pub relation: String,
    pub mean_jaccard: f64,
    pub min_jaccard: f64,
}

/// Pairwise Jaccard of each relation's top-k set over every pair of seeds.
/// Relations missing from some seed are skipped.
pub fn seed_stability(per_seed: &[Vec<NeuronRanking>], k: usize) -> Result<Vec<SeedStability>> {
    let Some(first) = per_seed.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for r in first {
        let sets: Vec<_> = per_seed
            .iter()
            .filter_map(|rs| rs.iter().find(|x| x.target == r.target))
            .map(|x| top_k(x, k))
            .collect::<Result<_>>()?;
        if sets.len() != per_seed.len() || sets.len() < 2 {
            continue;
        }
        let mut js = Vec::new();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                js.push(jaccard(&sets[i], &sets[j]));
            }
        }
        out.push(SeedStability {
            relation: r.target.clone(),
            mean_jaccard: js.iter().sum::<f64>() / js.len() as f64,
            min_jaccard: js.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub concepts: Vec<String>,
    pub top_ap: BTreeMap<String, f64>,
    /// Labels are the concepts followed by the relations.
    pub labels: Vec<String>,
    pub overlap: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResults {
    pub config: LabConfig,
    pub n_neurons: usize,
    pub k: usize,
    pub sweep_ks: Vec<usize>,
    pub train: Option<TrainReport>,
    pub validation: ValidationReport,
    pub intra: Vec<IntraRelation>,
    pub drop_matrix: DropMatrix,
    pub sweeps: Vec<SweepCurve>,
    pub cumulativity: Vec<CumulativityRow>,
    pub template_robustness: BTreeMap<String, TemplateRobustness>,
    pub resilience: Vec<ResilienceRun>,
    pub seed_stability: Vec<SeedStability>,
    pub overlap: Vec<Vec<usize>>,
    pub layer_histograms: BTreeMap<String, Vec<usize>>,
    pub concepts: ConceptReport,
    pub ppl: BTreeMap<String, PplPair>,
}

/// A trained model plus its validated prompts, ready for experiments.
pub struct Lab {
    pub config: LabConfig,
    pub prepared: Prepared,
    pub model: Model,
    pub det: BTreeMap<String, Vec<PromptInstance>>,
    pub validation: ValidationReport,
    pub n_neurons: usize,
    pub k: usize,
}

impl Lab {
    pub fn new(config: LabConfig, prepared: Prepared, model: Model) -> Result<Self> {
        config.validate()?;
        let (det, validation) = validate_prompts(
            &model,
            &prepared.tokenizer,
            &prepared.prompts.det,
            &SuppressionMask::empty(),
        )?;
        let n_neurons = neuron_count(model.config(), &config.kinds);
        let k = k_from_fraction(config.top_fraction, n_neurons);
        Ok(Lab {
            config,
            prepared,
            model,
            det,
            validation,
            n_neurons,
            k,
        })
    }

    pub fn tap(&self) -> Result<NeuronTapSpec> {
        NeuronTapSpec::new(self.config.kinds.iter().copied())
    }

    pub fn eva(&self) -> &BTreeMap<String, Vec<PromptInstance>> {
        &self.prepared.prompts.eva
    }

    /// Relations with at least one validated det prompt.
    pub fn scorable_relations(&self) -> Vec<String> {
        self.det
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(r, _)| r.clone())
            .collect()
    }

    pub fn labeled_set(&self, relation: &str, seed: u64) -> Result<LabeledExampleSet> {
        build_labeled_set(relation, &self.det, self.config.negative_ratio, seed)
    }

    pub fn rank(&self, set: &LabeledExampleSet) -> Result<NeuronRanking> {
        let m = set.capture(&self.model, &self.prepared.tokenizer, &self.tap()?)?;
        score_all(set.relation_or_concept.clone(), &m)
    }

    pub fn rankings(&self, seed: u64) -> Result<Vec<NeuronRanking>> {
        self.scorable_relations()
            .iter()
            .map(|r| self.rank(&self.labeled_set(r, seed)?))
            .collect()
    }

    pub fn sweep_ks(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self
            .config
            .sweep_fractions
            .iter()
            .map(|&f| k_from_fraction(f, self.n_neurons))
            .collect();
        ks.dedup();
        ks
    }

    pub fn top_masks(
        &self,
        rankings: &[NeuronRanking],
    ) -> Result<BTreeMap<String, SuppressionMask>> {
        rankings
            .iter()
            .map(|r| Ok((r.target.clone(), top_k_mask(r, self.k)?)))
            .collect()
    }

    /// Own-relation accuracy: unmasked, top-k masked, and under equally sized random masks.
    pub fn intra(&self, rankings: &[NeuronRanking]) -> Result<Vec<IntraRelation>> {
        let tok = &self.prepared.tokenizer;
        let empty = SuppressionMask::empty();
        let mut out = Vec::new();
        for r in rankings {
            let prompts = &self.eva()[&r.target];
            let baseline = evaluate(&self.model, tok, prompts, &empty, "none")?.accuracy;
            let top = evaluate(&self.model, tok, prompts, &top_k_mask(r, self.k)?, "top")?.accuracy;
            let random = (0..self.config.random_seeds)
                .map(|s| {
                    let m = random_mask(self.model.config(), &self.config.kinds, self.k, s)?;
                    Ok(evaluate(&self.model, tok, prompts, &m, &format!("random{s}"))?.accuracy)
                })
                .collect::<Result<Vec<f64>>>()?;
            let random_mean = if random.is_empty() {
                baseline
            } else {
                random.iter().sum::<f64>() / random.len() as f64
            };
            out.push(IntraRelation {
                relation: r.target.clone(),
                baseline,
                top_k: top,
                random,
                random_mean,
            });
        }
        Ok(out)
    }

    pub fn drop_matrix(&self, rankings: &[NeuronRanking]) -> Result<DropMatrix> {
        drop_matrix(
            &self.model,
            &self.prepared.tokenizer,
            rankings,
            self.eva(),
            self.k,
        )
    }

    pub fn sweeps(&self, rankings: &[NeuronRanking]) -> Result<Vec<SweepCurve>> {
        let mut ks = vec![0];
        ks.extend(self.sweep_ks());
        rankings
            .iter()
            .map(|r| sweep_k(&self.model, &self.prepared.tokenizer, r, self.eva(), &ks))
            .collect()
    }

    pub fn cumulativity_ranges(&self) -> Vec<(usize, usize)> {
        let ks = self.sweep_ks();
        let pairs: Vec<(usize, usize)> = if self.config.cumulativity_pairs.is_empty() {
            (1..ks.len()).map(|i| (i - 1, i)).collect()
        } else {
            self.config.cumulativity_pairs.clone()
        };
        pairs
            .into_iter()
            .filter(|&(a, b)| b < ks.len() && ks[a] < ks[b])
            .map(|(a, b)| (ks[a], ks[b]))
            .collect()
    }

    pub fn cumulativity(&self, rankings: &[NeuronRanking]) -> Result<Vec<CumulativityRow>> {
        let ranges = self.cumulativity_ranges();
        rankings
            .iter()
            .map(|r| {
                let prompts = &self.eva()[&r.target];
                let reports = ranges
                    .iter()
                    .map(|&(a, b)| {
                        cumulativity(&self.model, &self.prepared.tokenizer, r, prompts, a, b)
                    })
                    .collect::<Result<_>>()?;
                Ok(CumulativityRow {
                    relation: r.target.clone(),
                    reports,
                })
            })
            .collect()
    }

    pub fn template_robustness(
        &self,
        rankings: &[NeuronRanking],
    ) -> Result<BTreeMap<String, TemplateRobustness>> {
        template_robustness(
            &self.model,
            &self.prepared.tokenizer,
            self.eva(),
            &self.prepared.prompts.eva2,
            &self.top_masks(rankings)?,
        )
    }

    /// Resilient/sensitive eva facts under each relation's own top-k mask.
    pub fn resilience(&self, rankings: &[NeuronRanking]) -> Result<Vec<ResilienceGroups>> {
        let tok = &self.prepared.tokenizer;
        let mut out = Vec::new();
        for r in rankings {
            let prompts = &self.eva()[&r.target];
            let before = evaluate(&self.model, tok, prompts, &SuppressionMask::empty(), "none")?;
            let after = evaluate(&self.model, tok, prompts, &top_k_mask(r, self.k)?, "top")?;
            let groups =
                resilience_groups(&before.outcomes, &after.outcomes, &self.prepared.world)?;
            out.extend(groups.into_values());
        }
        Ok(out)
    }

    /// Concept rankings and their top-k overlap with the relation rankings.
    pub fn concepts(&self, rankings: &[NeuronRanking]) -> Result<ConceptReport> {
        let mut concept_rankings = Vec::new();
        let patterns = &self.prepared.templates.concept_prompts;
        let seed = self.config.negative_seeds[0];
        for c in self.prepared.world.concepts() {
            let set = build_concept_set(c, &self.prepared.world, patterns, seed)?;
            concept_rankings.push(self.rank(&set)?);
        }
        let concepts: Vec<String> = concept_rankings.iter().map(|r| r.target.clone()).collect();
        let top_ap = concept_rankings
            .iter()
            .map(|r| (r.target.clone(), r.entries.first().map_or(0.0, |e| e.ap)))
            .collect();
        let all: Vec<NeuronRanking> = concept_rankings
            .into_iter()
            .chain(rankings.iter().cloned())
            .collect();
        let labels = all.iter().map(|r| r.target.clone()).collect();
        let overlap = overlap_matrix(&all, self.k)?;
        Ok(ConceptReport {
            concepts,
            top_ap,
            labels,
            overlap,
        })
    }

    pub fn ppl(&self, rankings: &[NeuronRanking]) -> Result<BTreeMap<String, PplPair>> {
        ppl_by_relation(
            &self.model,
            &self.prepared.tokenizer,
            &self.prepared.world,
            &self.prepared.templates,
            &self.top_masks(rankings)?,
        )
    }

    pub fn layer_histograms(
        &self,
        rankings: &[NeuronRanking],
    ) -> Result<BTreeMap<String, Vec<usize>>> {
        rankings
            .iter()
            .map(|r| Ok((r.target.clone(), layer_histogram(r, self.k)?)))
            .collect()
    }

    /// Every experiment; rankings from the first negative seed drive all but
    /// the resilience runs, which repeat over every negative seed.
    pub fn run_all(&self, train: Option<TrainReport>) -> Result<LabResults> {
        let seeds = &self.config.negative_seeds;
        let per_seed: Vec<Vec<NeuronRanking>> = seeds
            .iter()
            .map(|&s| self.rankings(s))
            .collect::<Result<_>>()?;
        let rankings = &per_seed[0];
        let resilience = seeds
            .iter()
            .zip(&per_seed)
            .map(|(&s, r)| {
                Ok(ResilienceRun {
                    negative_seed: s,
                    groups: self.resilience(r)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LabResults {
            config: self.config.clone(),
            n_neurons: self.n_neurons,
            k: self.k,
            sweep_ks: self.sweep_ks(),
            train,
            validation: self.validation.clone(),
            intra: self.intra(rankings)?,
            drop_matrix: self.drop_matrix(rankings)?,
            sweeps: self.sweeps(rankings)?,
            cumulativity: self.cumulativity(rankings)?,
            template_robustness: self.template_robustness(rankings)?,
            resilience,
            seed_stability: seed_stability(&per_seed, self.k)?,
            overlap: overlap_matrix(rankings, self.k)?,
            layer_histograms: self.layer_histograms(rankings)?,
            concepts: self.concepts(rankings)?,
            ppl: self.ppl(rankings)?,
        })
    }
}

/// Generates, trains and runs every experiment in memory.
pub fn run_lab(config: &LabConfig) -> Result<(Lab, LabResults)> {
    let prepared = prepare(config)?;
    let (model, report) = train_model(config, &prepared)?;
    let lab = Lab::new(config.clone(), prepared, model)?;
    let results = lab.run_all(Some(report))?;
    Ok((lab, results))
}

/// Fixed file names inside a run directory.
pub mod layout {
    pub const CONFIG: &str = "config.json";
    pub const WORLD: &str = "world.json";
    pub const CORPUS: &str = "corpus.txt";
    pub const TOKENIZER: &str = "tokenizer.json";
    pub const MODEL: &str = "model.ckpt";
    pub const TRAIN_REPORT: &str = "train_report.json";
    pub const PROMPTS_DIR: &str = "prompts";
    pub const VALIDATED_DET: &str = "prompts/det_validated.jsonl";
    pub const VALIDATION: &str = "validation.json";
    pub const SETS_DIR: &str = "sets";
    pub const ACTIVATIONS_DIR: &str = "activations";
    pub const RANKINGS_DIR: &str = "rankings";
    pub const MASKS_DIR: &str = "masks";
    pub const RESULTS_DIR: &str = "results";
    pub const REPORT_DIR: &str = "report";
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ConceptSpec, FrequencyLaw, RelationSpec};

    fn small_world() -> WorldConfig {
        let concept = |n: &str, k| ConceptSpec {
            name: n.into(),
            n_entities: k,
            two_token_fraction: 0.0,
        };
        let rel = |n: &str, s: &str, o: &str| RelationSpec {
            name: n.into(),
            subject_concept: s.into(),
            object_concept: o.into(),
            n_facts: 60,
            object_cardinality: 4,
            fact_frequency_law: FrequencyLaw::Uniform,
        };
        WorldConfig {
            concepts: vec![
                concept("person", 80),
                concept("city", 80),
                concept("color", 10),
            ],
            relations: vec![
                rel("person_color", "person", "color"),
                rel("city_color", "city", "color"),
            ],
            sibling_pairs: vec![],
            two_token_object_fraction: 0.0,
            max_weight: 8.0,
        }
    }

    fn small_config() -> LabConfig {
        LabConfig {
            world: small_world(),
            n_eva: 10,
            model: ModelShape {
                n_layers: 1,
                d_model: 16,
                n_heads: 2,
                d_ff: 32,
                max_seq_len: 10,
            },
            train: TrainConfig {
                steps: 300,
                batch_size: 16,
                warmup_steps: 5,
                ..TrainConfig::default()
            },
            early_stop: None,
            negative_seeds: vec![0, 1],
            random_seeds: 2,
            sweep_fractions: vec![0.01, 0.1, 0.5],
            ..LabConfig::default()
        }
    }

    #[test]
    fn seed_stability_compares_top_k_sets_across_seeds() {
        use crate::tinylm::NeuronId;
        let ids: Vec<NeuronId> = (0..4)
            .map(|c| NeuronId::new(NeuronKind::Up, 0, c))
            .collect();
        let rank = |aps: [f64; 4]| vec![NeuronRanking::from_scores("r", &ids, &aps)];
        let same = rank([0.9, 0.8, 0.1, 0.0]);
        let shifted = rank([0.9, 0.1, 0.8, 0.0]);
        let s = seed_stability(&[same.clone(), same.clone(), shifted], 2).unwrap();
        assert_eq!(s.len(), 1);
        // Pairs: identical (1.0) and twice {0,1} vs {0,2} (1/3).
        assert!((s[0].mean_jaccard - (1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!((s[0].min_jaccard - 1.0 / 3.0).abs() < 1e-12);
        assert!(seed_stability(&[same], 2).unwrap().is_empty());
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let c = LabConfig::default();
        assert_eq!(LabConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = LabConfig::from_json(r#"{"seed": 7}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.negative_ratio, 4);
        assert!(LabConfig::from_json(r#"{"sweep_fractions": [0.5, 0.1]}"#).is_err());
        assert!(LabConfig::from_json(r#"{"negative_seeds": []}"#).is_err());
    }

    #[test]
    fn desk_neuron_count_and_k() {
        let c = LabConfig::default();
        let mc = c.model.config(100);
        let n = neuron_count(&mc, &c.kinds);
        assert_eq!(n, 4 * (256 + 256 + 128));
        assert_eq!(k_from_fraction(c.top_fraction, n), 26);
    }

    #[test]
    fn small_run_is_complete_and_deterministic() {
        let c = small_config();
        let (lab, r1) = run_lab(&c).unwrap();
        let (_, r2) = run_lab(&c).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
        assert_eq!(r1.resilience.len(), 2);
        assert_eq!(
            r1.sweeps.iter().map(|s| s.points.len()).max(),
            Some(lab.sweep_ks().len() + 1)
        );
        for row in &r1.cumulativity {
            for rep in &row.reports {
                assert!(rep.n_affected <= rep.n_total);
            }
        }
        assert_eq!(r1.concepts.concepts.len(), 3);
    }
}
