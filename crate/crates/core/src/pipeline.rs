//! Stage runner: every stage reads and writes plain files in the work
//! directory, and `manifest.json` records a config hash per finished stage so
//! an interrupted run resumes where it stopped.
//!
//! | stage            | reads                               | writes                                   |
//! |------------------|-------------------------------------|------------------------------------------|
//! | clean            | the raw log                         | `cleaned.tsv`, `crawlers.txt`            |
//! | split            | `cleaned.tsv`                       | `visible.tsv`, `answer.txt`, `answer_buys.tsv` |
//! | build-instances  | `visible.tsv`                       | `instances_eNNN.tsv` per feature end     |
//! | extract-features | `visible.tsv`, `instances_eNNN.tsv` | `features_eNNN.bin`, `schema.tsv`        |
//! | train            | `features_eNNN.bin`, `schema.tsv`   | `models/<name>.json`                     |
//! | blend            | models, fixed-end features          | `blend.json`                             |
//! | tune             | models, blend, prediction features  | `ensemble.json`, `validation.tsv`        |
//! | predict          | models, blend, ensemble             | `prediction.txt`                         |
//! | evaluate         | `prediction.txt`, `answer.txt`      | `report.txt`, `report.csv`, `baselines.tsv` |
//! | analyze-hits     | `prediction.txt`, `answer_buys.tsv` | `hit_days.csv`                           |
//!
//! A stage's hash covers its own settings and the hash of the stage before
//! it, so changing one setting reruns that stage and everything downstream.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{fingerprint, RunConfig};
use crate::ensemble::{
    blend_fit, blend_scores, combine, decide, score_matrix, split_for_blend, tune_decision,
    tune_ensemble, BlendModel, EnsembleModel, ScoreMatrix,
};
use crate::error::{Error, Result};
use crate::eval::baseline::tune_baselines;
use crate::eval::{evaluate, hit_day_histogram, histogram_csv, write_text};
use crate::features::{extract, FeatureSchema};
use crate::instances::{
    build_prediction_set, build_training_set, read_instances, read_instances_bin,
    write_instances, write_instances_bin, Instance, TimeSpanConfig,
};
use crate::log::{read_log, write_log, ActionRecord};
use crate::models::{Model, ModelFile, ModelKind, PairHistoryIndex, REGISTRY};
use crate::preprocess::{cleanse, split};
use crate::submission::PredictionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Clean,
    Split,
    BuildInstances,
    ExtractFeatures,
    Train,
    Blend,
    Tune,
    Predict,
    Evaluate,
    AnalyzeHits,
}

impl Stage {
    /// Pipeline order.
    pub const ALL: [Stage; 10] = [
        Stage::Clean,
        Stage::Split,
        Stage::BuildInstances,
        Stage::ExtractFeatures,
        Stage::Train,
        Stage::Blend,
        Stage::Tune,
        Stage::Predict,
        Stage::Evaluate,
        Stage::AnalyzeHits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Clean => "clean",
            Stage::Split => "split",
            Stage::BuildInstances => "build-instances",
            Stage::ExtractFeatures => "extract-features",
            Stage::Train => "train",
            Stage::Blend => "blend",
            Stage::Tune => "tune",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::AnalyzeHits => "analyze-hits",
        }
    }

    fn position(self) -> usize {
        Stage::ALL.iter().position(|s| *s == self).unwrap()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// File layout of a work directory.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workdir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn cleaned(&self) -> PathBuf {
        self.file("cleaned.tsv")
    }
    pub fn crawlers(&self) -> PathBuf {
        self.file("crawlers.txt")
    }
    pub fn visible(&self) -> PathBuf {
        self.file("visible.tsv")
    }
    pub fn answer(&self) -> PathBuf {
        self.file("answer.txt")
    }
    pub fn answer_buys(&self) -> PathBuf {
        self.file("answer_buys.tsv")
    }
    pub fn skeleton(&self, end: u16) -> PathBuf {
        self.file(&format!("instances_e{end:03}.tsv"))
    }
    pub fn features(&self, end: u16) -> PathBuf {
        self.file(&format!("features_e{end:03}.bin"))
    }
    pub fn schema(&self) -> PathBuf {
        self.file("schema.tsv")
    }
    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.json"))
    }
    pub fn blend(&self) -> PathBuf {
        self.file("blend.json")
    }
    pub fn ensemble(&self) -> PathBuf {
        self.file("ensemble.json")
    }
    pub fn validation(&self) -> PathBuf {
        self.file("validation.tsv")
    }
    pub fn prediction(&self) -> PathBuf {
        self.file("prediction.txt")
    }
    pub fn report(&self) -> PathBuf {
        self.file("report.txt")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.file("report.csv")
    }
    pub fn baselines(&self) -> PathBuf {
        self.file("baselines.tsv")
    }
    pub fn hit_days(&self) -> PathBuf {
        self.file("hit_days.csv")
    }
    pub fn manifest(&self) -> PathBuf {
        self.file("manifest.json")
    }
}

pub const MANIFEST_FORMAT: &str = "tmpp-manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    /// Output paths relative to the work directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Finished stages in pipeline order.
    pub stages: Vec<StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            version: 1,
            stages: Vec::new(),
        }
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT || m.version != 1 {
            return Err(Error::Schema(format!(
                "{} is not a version 1 {MANIFEST_FORMAT}",
                path.display()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        write_text(path, &(text + "\n"))
    }

    pub fn get(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage.name())
    }

    /// Records `record`, keeping pipeline order.
    pub fn put(&mut self, record: StageRecord) {
        self.stages.retain(|r| r.stage != record.stage);
        self.stages.push(record);
        self.stages.sort_by_key(|r| {
            r.stage
                .parse::<Stage>()
                .map_or(usize::MAX, Stage::position)
        });
    }

    pub fn stage_names(&self) -> Vec<&str> {
        self.stages.iter().map(|r| r.stage.as_str()).collect()
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Expected config hash of every stage, in pipeline order.
pub fn stage_hashes(cfg: &RunConfig) -> Result<Vec<String>> {
    let log_digest = if cfg.paths.log.exists() {
        file_digest(&cfg.paths.log)?
    } else {
        String::new()
    };
    let own: Vec<serde_json::Value> = Stage::ALL
        .iter()
        .map(|s| -> serde_json::Value {
            match s {
                Stage::Clean => serde_json::json!([cfg.clean, log_digest]),
                Stage::Split => serde_json::json!(cfg.split),
                Stage::BuildInstances => serde_json::json!([cfg.spans, cfg.prediction_end()]),
                Stage::ExtractFeatures => serde_json::json!(cfg.features),
                Stage::Train => {
                    let per_model: Vec<_> = REGISTRY
                        .iter()
                        .map(|spec| (spec.name, cfg.models_for(spec)))
                        .collect();
                    serde_json::json!(per_model)
                }
                Stage::Blend => serde_json::json!(cfg.blend),
                Stage::Tune => serde_json::json!(cfg.decision),
                Stage::Predict => serde_json::Value::Null,
                Stage::Evaluate => serde_json::json!(cfg.seed_for("baseline")),
                Stage::AnalyzeHits => serde_json::Value::Null,
            }
        })
        .collect();
    let mut prev = String::new();
    let mut out = Vec::with_capacity(own.len());
    for (s, v) in Stage::ALL.iter().zip(own) {
        prev = fingerprint(&(s.name(), v, &prev));
        out.push(prev.clone());
    }
    Ok(out)
}

fn need(stage: Stage, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput {
            stage: stage.name().into(),
            path: path.to_path_buf(),
        })
    }
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for l in lines {
        writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Runs stages against one work directory.
pub struct Runner {
    pub cfg: RunConfig,
    pub shards: usize,
    pub dir: Workdir,
}

fn rel(dir: &Workdir, p: &Path) -> String {
    p.strip_prefix(dir.root())
        .unwrap_or(p)
        .to_string_lossy()
        .into_owned()
}

impl Runner {
    pub fn new(cfg: RunConfig, shards: Option<usize>) -> Self {
        let shards = shards.unwrap_or(cfg.shards).max(1);
        let dir = Workdir::new(cfg.paths.workdir.clone());
        Runner { cfg, shards, dir }
    }

    fn visible_log(&self, stage: Stage) -> Result<Vec<ActionRecord>> {
        need(stage, &self.dir.visible())?;
        read_log(self.dir.visible())
    }

    fn load_features(&self, stage: Stage, end: u16) -> Result<Vec<Instance>> {
        let p = self.dir.features(end);
        need(stage, &p)?;
        read_instances_bin(p)
    }

    fn load_schema(&self, stage: Stage) -> Result<FeatureSchema> {
        need(stage, &self.dir.schema())?;
        FeatureSchema::read(self.dir.schema())
    }

    pub fn load_models(&self, stage: Stage) -> Result<Vec<ModelFile>> {
        REGISTRY
            .iter()
            .map(|spec| {
                let p = self.dir.model(spec.name);
                need(stage, &p)?;
                ModelFile::load(p)
            })
            .collect()
    }

    fn load_blend(&self, stage: Stage) -> Result<Vec<BlendModel>> {
        let p = self.dir.blend();
        need(stage, &p)?;
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", p.display())))
    }

    fn load_ensemble(&self, stage: Stage) -> Result<EnsembleModel> {
        let p = self.dir.ensemble();
        need(stage, &p)?;
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", p.display())))
    }

    fn history(&self, log: &[ActionRecord], end: u16) -> PairHistoryIndex {
        PairHistoryIndex::build(log, self.cfg.models.global.day_origin, end)
    }

    /// Score matrix of the prediction instances.
    pub fn prediction_matrix(&self, stage: Stage) -> Result<ScoreMatrix> {
        let models = self.load_models(stage)?;
        let schema = self.load_schema(stage)?;
        let end = self.cfg.prediction_end();
        let insts = self.load_features(stage, end)?;
        let log = self.visible_log(stage)?;
        score_matrix(&models, &insts, &schema, Some(&self.history(&log, end)))
    }

    fn prediction_set(&self, stage: Stage) -> Result<PredictionSet> {
        need(stage, &self.dir.prediction())?;
        PredictionSet::read(self.dir.prediction())
    }

    /// Runs one stage and returns the files it wrote.
    pub fn execute(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(self.dir.root()).map_err(|e| Error::io(self.dir.root(), e))?;
        let started = Instant::now();
        let outputs = match stage {
            Stage::Clean => self.clean()?,
            Stage::Split => self.split()?,
            Stage::BuildInstances => self.build_instances()?,
            Stage::ExtractFeatures => self.extract_features()?,
            Stage::Train => self.train_all()?,
            Stage::Blend => self.blend()?,
            Stage::Tune => self.tune()?,
            Stage::Predict => self.predict()?,
            Stage::Evaluate => self.evaluate()?,
            Stage::AnalyzeHits => self.analyze_hits()?,
        };
        log::info!("{stage} finished in {:.1?}", started.elapsed());
        Ok(outputs)
    }

    /// Runs one stage and records it in the manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<StageRecord> {
        let hashes = stage_hashes(&self.cfg)?;
        let outputs = self.execute(stage)?;
        let record = StageRecord {
            stage: stage.name().into(),
            config_hash: hashes[stage.position()].clone(),
            outputs: outputs.iter().map(|p| rel(&self.dir, p)).collect(),
        };
        let mut manifest = Manifest::load(&self.dir.manifest())?;
        manifest.put(record.clone());
        manifest.save(&self.dir.manifest())?;
        Ok(record)
    }

    /// Runs every stage, skipping those whose recorded hash matches and whose
    /// outputs all exist. Returns the stages that actually ran.
    pub fn run_pipeline(&self) -> Result<Vec<Stage>> {
        fs::create_dir_all(self.dir.root()).map_err(|e| Error::io(self.dir.root(), e))?;
        let hashes = stage_hashes(&self.cfg)?;
        let mut manifest = Manifest::load(&self.dir.manifest())?;
        let mut ran = Vec::new();
        for (stage, hash) in Stage::ALL.into_iter().zip(hashes) {
            let fresh = manifest.get(stage).is_some_and(|r| {
                r.config_hash == hash && r.outputs.iter().all(|o| self.dir.root().join(o).exists())
            });
            if fresh {
                log::info!("{stage} is up to date");
                continue;
            }
            let outputs = self.execute(stage)?;
            manifest.put(StageRecord {
                stage: stage.name().into(),
                config_hash: hash,
                outputs: outputs.iter().map(|p| rel(&self.dir, p)).collect(),
            });
            manifest.save(&self.dir.manifest())?;
            ran.push(stage);
        }
        Ok(ran)
    }

    fn clean(&self) -> Result<Vec<PathBuf>> {
        need(Stage::Clean, &self.cfg.paths.log)?;
        let log = read_log(&self.cfg.paths.log)?;
        let (kept, removed) = cleanse(&log, self.cfg.clean.click_threshold, self.shards);
        log::info!("clean: kept {} records, removed {} users", kept.len(), removed.len());
        write_log(self.dir.cleaned(), &kept)?;
        write_lines(&self.dir.crawlers(), removed.iter().map(u64::to_string))?;
        Ok(vec![self.dir.cleaned(), self.dir.crawlers()])
    }

    fn split(&self) -> Result<Vec<PathBuf>> {
        need(Stage::Split, &self.dir.cleaned())?;
        let log = read_log(self.dir.cleaned())?;
        let s = split(&log, &self.cfg.split)?;
        write_log(self.dir.visible(), &s.visible)?;
        s.answer.write(self.dir.answer())?;
        write_log(self.dir.answer_buys(), &s.answer_buys)?;
        Ok(vec![self.dir.visible(), self.dir.answer(), self.dir.answer_buys()])
    }

    fn build_instances(&self) -> Result<Vec<PathBuf>> {
        let log = self.visible_log(Stage::BuildInstances)?;
        let ws = self.cfg.spans.window_start;
        let we = self.cfg.window_end();
        let mut outputs = Vec::new();
        for end in self.cfg.training_ends() {
            let insts = build_training_set(&log, &TimeSpanConfig::fixed(end, ws, we), self.shards)?;
            log::info!("build-instances: {} training instances at day {end}", insts.len());
            write_instances(self.dir.skeleton(end), &insts)?;
            outputs.push(self.dir.skeleton(end));
        }
        let end = self.cfg.prediction_end();
        let insts = build_prediction_set(&log, ws, end, self.shards);
        log::info!("build-instances: {} prediction instances at day {end}", insts.len());
        write_instances(self.dir.skeleton(end), &insts)?;
        outputs.push(self.dir.skeleton(end));
        Ok(outputs)
    }

    fn all_ends(&self) -> Vec<u16> {
        let mut ends = self.cfg.training_ends();
        ends.push(self.cfg.prediction_end());
        ends.dedup();
        ends
    }

    fn extract_features(&self) -> Result<Vec<PathBuf>> {
        let log = self.visible_log(Stage::ExtractFeatures)?;
        let mut outputs = Vec::new();
        let mut schema = None;
        for end in self.all_ends() {
            need(Stage::ExtractFeatures, &self.dir.skeleton(end))?;
            let mut insts = read_instances(self.dir.skeleton(end))?;
            let s = extract(
                &mut insts,
                &log,
                &self.cfg.features,
                self.cfg.spans.window_start,
                self.shards,
            )?;
            write_instances_bin(self.dir.features(end), &insts)?;
            outputs.push(self.dir.features(end));
            schema = Some(s);
        }
        let schema = schema.unwrap_or_else(|| crate::features::schema(&self.cfg.features));
        schema.write(self.dir.schema())?;
        outputs.push(self.dir.schema());
        Ok(outputs)
    }

    /// Trains one registry entry on the non-blend users of its scheme's ends.
    pub fn train_one(&self, name: &str, cache: &mut HashMap<u16, Vec<Instance>>) -> Result<PathBuf> {
        let spec = crate::models::spec_by_name(name)?;
        let schema = self.load_schema(Stage::Train)?;
        let configs = self.cfg.models_for(&spec);
        let model = match spec.scheme {
            None => Model::fit(ModelKind::Global, &[], &configs)?,
            Some(scheme) => {
                let ends = self.cfg.spans_for(scheme).feature_ends;
                cache.retain(|e, _| ends.contains(e));
                for &end in &ends {
                    if let Entry::Vacant(slot) = cache.entry(end) {
                        slot.insert(self.load_features(Stage::Train, end)?);
                    }
                }
                let mut rows: Vec<&Instance> = Vec::new();
                for end in &ends {
                    rows.extend(split_for_blend(&cache[end]).0);
                }
                log::info!("train: {name} on {} instances", rows.len());
                Model::fit(spec.kind, &rows, &configs)?
            }
        };
        let path = self.dir.model(name);
        let parent = path.parent().unwrap();
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        ModelFile::new(spec, schema.hash(), model)?.save(&path)?;
        Ok(path)
    }

    fn train_all(&self) -> Result<Vec<PathBuf>> {
        let mut cache = HashMap::new();
        REGISTRY
            .iter()
            .map(|spec| {
                let started = Instant::now();
                let p = self.train_one(spec.name, &mut cache)?;
                log::info!("train: {} took {:.1?}", spec.name, started.elapsed());
                Ok(p)
            })
            .collect()
    }

    fn blend(&self) -> Result<Vec<PathBuf>> {
        let models = self.load_models(Stage::Blend)?;
        let schema = self.load_schema(Stage::Blend)?;
        let end = self.cfg.spans.fixed_end;
        let insts = self.load_features(Stage::Blend, end)?;
        let (_, held_out) = split_for_blend(&insts);
        let held_out: Vec<Instance> = held_out.into_iter().cloned().collect();
        drop(insts);
        let log = self.visible_log(Stage::Blend)?;
        let matrix = score_matrix(&models, &held_out, &schema, Some(&self.history(&log, end)))?;
        let labels: Vec<u8> = held_out.iter().map(|i| i.label().unwrap_or(0)).collect();
        log::info!("blend: {} held-out instances", labels.len());
        let blends = blend_fit(&matrix, &labels, &self.cfg.blend.groups, &self.cfg.blend.config())?;
        let text = serde_json::to_string(&blends).map_err(|e| Error::Serde(e.to_string()))?;
        write_text(self.dir.blend(), &(text + "\n"))?;
        Ok(vec![self.dir.blend()])
    }

    fn tune(&self) -> Result<Vec<PathBuf>> {
        let matrix = self.prediction_matrix(Stage::Tune)?;
        let blends = self.load_blend(Stage::Tune)?;
        need(Stage::Tune, &self.dir.answer())?;
        let answer = PredictionSet::read(self.dir.answer())?;
        let groups = blend_scores(&blends, &matrix)?;
        let names: Vec<String> = blends.iter().map(|b| b.group.clone()).collect();
        let (model, tuned) = tune_ensemble(&names, &matrix.keys, &groups, &answer, &self.cfg.decision)?;

        let mut lines = vec!["level\tname\tf1\tthreshold\ttop_k\tpairs".to_string()];
        let mut row = |level: &str, name: &str, scores: &[f64]| -> Result<()> {
            let t = tune_decision(&matrix.keys, scores, &answer, &self.cfg.decision)?;
            lines.push(format!(
                "{level}\t{name}\t{:.6}\t{}\t{}\t{}",
                t.f1,
                t.decision.threshold,
                t.decision.top_k.map_or("all".to_string(), |k| k.to_string()),
                t.n_pairs
            ));
            Ok(())
        };
        for name in &matrix.columns {
            row("model", name, &matrix.column(name)?)?;
        }
        for (name, scores) in names.iter().zip(&groups) {
            row("group", name, scores)?;
        }
        row("ensemble", "final", &combine(&groups, &model.weights))?;
        log::info!("tune: weights {:?}, local f1 {:.6}", model.weights, tuned.f1);
        write_lines(&self.dir.validation(), lines)?;
        let text = serde_json::to_string_pretty(&model).map_err(|e| Error::Serde(e.to_string()))?;
        write_text(self.dir.ensemble(), &(text + "\n"))?;
        Ok(vec![self.dir.ensemble(), self.dir.validation()])
    }

    fn predict(&self) -> Result<Vec<PathBuf>> {
        let matrix = self.prediction_matrix(Stage::Predict)?;
        let blends = self.load_blend(Stage::Predict)?;
        let ensemble = self.load_ensemble(Stage::Predict)?;
        let names: Vec<&str> = blends.iter().map(|b| b.group.as_str()).collect();
        if names != ensemble.groups.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Schema("ensemble groups differ from the blend groups".into()));
        }
        let groups = blend_scores(&blends, &matrix)?;
        let pred = decide(&matrix.keys, &combine(&groups, &ensemble.weights), &ensemble.decision);
        log::info!("predict: {} pairs for {} users", pred.n_pairs(), pred.n_users());
        pred.write(self.dir.prediction())?;
        Ok(vec![self.dir.prediction()])
    }

    fn evaluate(&self) -> Result<Vec<PathBuf>> {
        let pred = self.prediction_set(Stage::Evaluate)?;
        need(Stage::Evaluate, &self.dir.answer())?;
        let answer = PredictionSet::read(self.dir.answer())?;
        let report = evaluate(&pred, &answer);
        write_text(self.dir.report(), &report.to_string())?;
        write_text(self.dir.report_csv(), &report.to_csv())?;
        let log = self.visible_log(Stage::Evaluate)?;
        let baselines = tune_baselines(
            &log,
            self.cfg.spans.window_start,
            self.cfg.prediction_end(),
            &answer,
            self.cfg.seed_for("baseline"),
        );
        let mut lines = vec!["baseline\tparams\tprecision\trecall\tf1".to_string()];
        for b in &baselines {
            lines.push(format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                b.kind.name(),
                b.params,
                b.report.precision,
                b.report.recall,
                b.report.f1
            ));
        }
        write_lines(&self.dir.baselines(), lines)?;
        Ok(vec![self.dir.report(), self.dir.report_csv(), self.dir.baselines()])
    }

    fn analyze_hits(&self) -> Result<Vec<PathBuf>> {
        let pred = self.prediction_set(Stage::AnalyzeHits)?;
        need(Stage::AnalyzeHits, &self.dir.answer_buys())?;
        let buys = read_log(self.dir.answer_buys())?;
        let hist = hit_day_histogram(&pred, &buys, self.cfg.split.target_span());
        write_text(self.dir.hit_days(), &histogram_csv(&hist))?;
        Ok(vec![self.dir.hit_days()])
    }
}
