//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits nonzero if any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use common::{brute_features, brute_scores, random_log, rational_value, rec, rng, set_of};
use tmpp::config::RunConfig;
use tmpp::datagen::{generate, planted_crawlers, GenConfig};
use tmpp::eval::evaluate;
use tmpp::features::{extract, DateBucketSet, Family};
use tmpp::instances::{Instance, Scheme};
use tmpp::log::{write_log, ActionRecord, ActionType, Day, Month, MAX_DAY};
use tmpp::models::{
    global_score, lr::LrObjective, GbrtConfig, GbrtModel, GlobalScorerConfig, ModelKind, RfConfig,
    RfModel, REGISTRY,
};
use tmpp::pipeline::{Manifest, Runner, Stage};
use tmpp::preprocess::{cleanse, split, SplitSpec};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed <= limit, || {
        format!("{what} took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64())
    })
}

fn io<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn metric_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng(101);
    for case in 0..500 {
        let (users, brands) = if case % 2 == 0 { (6, 6) } else { (300, 40) };
        let mut draw = |max: usize| -> Vec<(u64, u64)> {
            let n = r.gen_range(0..=max);
            (0..n).map(|_| (r.gen_range(1..=users), r.gen_range(1..=brands))).collect()
        };
        let pred = draw(250);
        let answer = draw(250);
        let want = brute_scores(&pred, &answer);
        let got = evaluate(&set_of(&pred), &set_of(&answer));
        ensure(got.total_hits == want.hits, || format!("case {case}: hit count"))?;
        for (g, w) in [(got.precision, want.precision), (got.recall, want.recall), (got.f1, want.f1)] {
            ensure((g - rational_value(w)).abs() <= 1e-12, || format!("case {case}: {g} vs {w:?}"))?;
        }
    }
    let ex = evaluate(
        &set_of(&[(1, 10), (1, 11), (2, 10)]),
        &set_of(&[(1, 10), (3, 12)]),
    );
    ensure(ex.precision == 1.0 / 3.0 && ex.recall == 0.5 && ex.f1 == 0.4, || {
        format!("worked example gave P={} R={} F1={}", ex.precision, ex.recall, ex.f1)
    })?;
    within(start.elapsed(), Duration::from_secs(1), "metric checks")?;
    Ok(format!("500 cases exact, worked example F1=0.4, {:.0} ms", start.elapsed().as_secs_f64() * 1e3))
}

fn calendar_and_split() -> Check {
    let table = [
        (Month::April, "04-15", "05-16"),
        (Month::May, "05-17", "06-20"),
        (Month::June, "06-21", "07-18"),
        (Month::July, "07-19", "08-15"),
    ];
    for (m, from, to) in table {
        let a = io(Day::parse(from))?;
        let b = io(Day::parse(to))?;
        ensure(a.month() == m && b.month() == m, || format!("{from}..{to} not in {}", m.name()))?;
        ensure((a.get(), b.get()) == m.range(), || format!("{} range {:?}", m.name(), m.range()))?;
        if a.get() > 0 {
            let before = io(Day::new(a.get() - 1))?;
            ensure(before.month() != m, || format!("day before {from} is still {}", m.name()))?;
        }
    }
    let mut covered = vec![0u8; usize::from(MAX_DAY) + 1];
    for m in Month::ALL {
        let (lo, hi) = m.range();
        for d in lo..=hi {
            covered[usize::from(d)] += 1;
        }
    }
    ensure(covered.iter().all(|&c| c == 1), || "months do not partition the window".into())?;

    let spec = SplitSpec::local();
    let log = [
        rec(1, 1, ActionType::Buy, 94),
        rec(1, 2, ActionType::Buy, 95),
        rec(1, 3, ActionType::Click, 95),
        rec(2, 1, ActionType::Buy, 122),
    ];
    let s = io(split(&log, &spec))?;
    ensure(s.visible.len() == 1 && s.visible[0].day() == 94, || "visible part".into())?;
    let answer: Vec<(u64, u64)> = s.answer.pairs().collect();
    ensure(answer == vec![(1, 2), (2, 1)], || format!("answer pairs {answer:?}"))?;
    Ok("month boundaries, partition and local split".into())
}

fn cleansing() -> Check {
    let cfg = GenConfig {
        n_users: 7_000,
        crawler_fraction: 0.05,
        seed: 31,
        ..GenConfig::default()
    };
    let log = io(generate(&cfg))?;
    ensure(log.len() >= 1_000_000, || format!("only {} records generated", log.len()))?;
    let planted = io(planted_crawlers(&cfg))?;
    let start = Instant::now();
    let (kept, removed) = cleanse(&log, 500, 4);
    let took = start.elapsed();
    ensure(removed == planted, || {
        format!("removed {} users, planted {}", removed.len(), planted.len())
    })?;
    let (again, none) = cleanse(&kept, 500, 4);
    ensure(none.is_empty() && again == kept, || "second pass changed the log".into())?;

    let mut edge: Vec<ActionRecord> = (0..500).map(|i| rec(1, 1, ActionType::Click, i % 123)).collect();
    edge.extend((0..501).map(|i| rec(2, 1, ActionType::Click, i % 123)));
    let (_, gone) = cleanse(&edge, 500, 1);
    ensure(gone == vec![2], || format!("boundary case removed {gone:?}"))?;
    within(took, Duration::from_secs(10), "cleansing")?;
    Ok(format!(
        "{} of {} users removed from {} records in {:.2}s",
        removed.len(),
        cfg.n_users,
        log.len(),
        took.as_secs_f64()
    ))
}

fn instances_for(pairs: &[(u64, u64)], end: u16) -> Vec<Instance> {
    pairs
        .iter()
        .map(|&(user, brand)| Instance { user, brand, feature_end: end, features: vec![], target: None })
        .collect()
}

fn no_leakage() -> Check {
    let start = Instant::now();
    let mut r = rng(102);
    let log = random_log(&mut r, 3000, 25, 10);
    let pairs: Vec<(u64, u64)> = (1..=30).flat_map(|u| (1..=12).map(move |b| (u, b))).collect();
    let buckets = DateBucketSet::default();
    let mut changed = 0usize;
    for trial in 0..200 {
        let end = [47, 67, 95][trial % 3];
        let mut base = instances_for(&pairs, end);
        io(extract(&mut base, &log, &buckets, 0, 2))?;
        let mut edited: Vec<ActionRecord> = Vec::with_capacity(log.len());
        for x in &log {
            if x.day() < end {
                edited.push(*x);
            } else if r.gen_bool(0.3) {
                let action = ActionType::ALL[r.gen_range(0..4)];
                edited.push(rec(x.user, x.brand, action, r.gen_range(end..=MAX_DAY)));
            } else if r.gen_bool(0.6) {
                edited.push(*x);
            }
        }
        for _ in 0..r.gen_range(1..200) {
            edited.push(rec(
                r.gen_range(1..=30),
                r.gen_range(1..=12),
                ActionType::ALL[r.gen_range(0..4)],
                r.gen_range(end..=MAX_DAY),
            ));
        }
        let mut other = instances_for(&pairs, end);
        io(extract(&mut other, &edited, &buckets, 0, 1 + trial % 8))?;
        changed += base
            .iter()
            .zip(&other)
            .map(|(a, b)| a.features.iter().zip(&b.features).filter(|(x, y)| x != y).count())
            .sum::<usize>();
    }
    ensure(changed == 0, || format!("{changed} feature values changed"))?;
    within(start.elapsed(), Duration::from_secs(30), "perturbation checks")?;
    Ok(format!("200 perturbations, 0 changed values, {:.1}s", start.elapsed().as_secs_f64()))
}

fn feature_oracle() -> Check {
    let mut r = rng(103);
    let mut compared = 0usize;
    for case in 0..60 {
        let n = r.gen_range(0..=1000);
        let log = random_log(&mut r, n, 12, 8);
        let buckets = if case % 2 == 0 {
            DateBucketSet::default()
        } else {
            io(DateBucketSet::new(vec![2, 9, 40]))?
        };
        let end = r.gen_range(1..=123);
        let pairs: Vec<(u64, u64)> = (0..8).map(|_| (r.gen_range(1..=14), r.gen_range(1..=10))).collect();
        let mut inst = instances_for(&pairs, end);
        let schema = io(extract(&mut inst, &log, &buckets, 0, 1 + case % 5))?;
        for i in &inst {
            let want = brute_features(&log, i.user, i.brand, &buckets.lengths, 0, end);
            ensure(want.len() == schema.len(), || "oracle and schema differ in size".into())?;
            for (j, f) in schema.features.iter().enumerate() {
                let name = f.name();
                let w = *want.get(&name).ok_or_else(|| format!("oracle lacks {name}"))? as f32;
                ensure(i.features[j] == w, || format!("{name}: {} vs {w}", i.features[j]))?;
                compared += 1;
            }
        }
    }
    for _ in 0..100 {
        let n = r.gen_range(1..=1000);
        let log = random_log(&mut r, n, 8, 5);
        let buckets = DateBucketSet::default();
        let end = r.gen_range(1..=123);
        let pairs: Vec<(u64, u64)> = (1..=8).flat_map(|u| (1..=5).map(move |b| (u, b))).collect();
        let mut inst = instances_for(&pairs, end);
        let schema = io(extract(&mut inst, &log, &buckets, 0, 3))?;
        let idx: HashMap<String, usize> =
            schema.features.iter().enumerate().map(|(j, f)| (f.name(), j)).collect();
        for f in schema.features.iter().filter(|f| f.family == Family::Count) {
            let k = f.bucket.unwrap_or_default();
            let pos = buckets.lengths.iter().position(|&l| l == k).unwrap_or_default();
            let Some(next) = buckets.lengths.get(pos + 1) else { continue };
            let a = idx[&f.name()];
            let b = idx[&format!("{}_{}_{next}d", f.granularity.name(), f.base)];
            ensure(inst.iter().all(|i| i.features[a] <= i.features[b]), || {
                format!("{} exceeds its {next}d value", f.name())
            })?;
        }
        for &k in &buckets.lengths {
            let v = idx[&format!("pair_valid_click_count_{k}d")];
            let c = idx[&format!("pair_click_count_{k}d")];
            ensure(inst.iter().all(|i| i.features[v] <= i.features[c]), || {
                format!("valid clicks exceed clicks at {k}d")
            })?;
        }
    }
    Ok(format!("{compared} values match the oracle; properties hold on 100 logs"))
}

fn model_suite() -> Check {
    let mut r = rng(104);
    let data: Vec<Vec<f32>> = (0..400)
        .map(|_| (0..6).map(|_| r.gen_range(-3.0..3.0f32)).collect())
        .collect();
    let rows: Vec<&[f32]> = data.iter().map(Vec::as_slice).collect();
    let labels: Vec<u8> = data
        .iter()
        .map(|x| u8::from(x[0] - 0.5 * x[1] + r.gen_range(-1.0..1.0f32) > 0.0))
        .collect();

    let obj = io(LrObjective::new(&rows, &labels, 1e-3))?;
    let params: Vec<f64> = (0..obj.dim()).map(|_| r.gen_range(-0.5..0.5)).collect();
    let (_, grad) = obj.loss_and_grad(&params);
    let h = 1e-5;
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for j in 0..params.len() {
        let mut up = params.clone();
        let mut dn = params.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (obj.loss_and_grad(&up).0 - obj.loss_and_grad(&dn).0) / (2.0 * h);
        diff += (grad[j] - fd).powi(2);
        norm += grad[j].powi(2).max(fd.powi(2));
    }
    let rel = diff.sqrt() / norm.sqrt();
    ensure(rel < 1e-5, || format!("LR gradient relative error {rel:e}"))?;

    let targets: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
    let gcfg = GbrtConfig { n_trees: 50, min_samples_leaf: 5, ..GbrtConfig::default() };
    let (_, history) = io(GbrtModel::fit_with_history(&rows, &targets, &gcfg))?;
    ensure(history.len() == 51, || "GBRT history length".into())?;
    ensure(history.windows(2).all(|w| w[1] <= w[0]), || "GBRT training MSE increased".into())?;

    let rcfg = RfConfig { n_trees: 12, seed: 77, ..RfConfig::default() };
    let mut fits = Vec::new();
    for threads in [1, 2, 8] {
        let pool = io(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
        let model = io(pool.install(|| RfModel::fit(&rows, &labels, &rcfg)))?;
        fits.push(io(serde_json::to_string(&model))?);
    }
    ensure(fits.windows(2).all(|w| w[0] == w[1]), || "RF differs across thread counts".into())?;

    let hand = [rec(1, 1, ActionType::Click, 1), rec(1, 1, ActionType::Buy, 9)];
    let g = global_score(&hand, &GlobalScorerConfig::default());
    ensure(g == 404.0, || format!("global score {g}"))?;
    Ok(format!("LR grad rel err {rel:.1e}; GBRT MSE {:.4} -> {:.4}; RF identical at 1/2/8 threads; global 404", history[0], history[50]))
}

struct PlantedRun {
    manifest: Manifest,
    f1: BTreeMap<(String, String), f64>,
    baselines: Vec<(String, String, f64)>,
    hits: u64,
    hist: Vec<u64>,
    groups: Vec<(String, Vec<String>)>,
    elapsed: Duration,
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse {s:?}"))
}

fn planted_run(root: &Path) -> Result<PlantedRun, String> {
    let start = Instant::now();
    let mut cfg = RunConfig { seed: 1, ..RunConfig::default() };
    cfg.generate.n_users = 100_000;
    cfg.generate.n_brands = 200;
    cfg.paths.log = root.join("log.tsv");
    cfg.paths.workdir = root.join("work");
    let log = io(generate(&cfg.generator()))?;
    io(write_log(&cfg.paths.log, &log))?;
    drop(log);
    let runner = Runner::new(cfg.clone(), None);
    io(runner.run_pipeline())?;
    let elapsed = start.elapsed();

    let dir = &runner.dir;
    let mut f1 = BTreeMap::new();
    for line in read(&dir.validation())?.lines().skip(1) {
        let c: Vec<&str> = line.split('\t').collect();
        f1.insert((c[0].to_string(), c[1].to_string()), parse(c[2])?);
    }
    let mut baselines = Vec::new();
    for line in read(&dir.baselines())?.lines().skip(1) {
        let c: Vec<&str> = line.split('\t').collect();
        baselines.push((c[0].to_string(), c[1].to_string(), parse(c[4])?));
    }
    let mut hits = None;
    for line in read(&dir.report())?.lines() {
        if let Some(v) = line.strip_prefix("hits") {
            hits = Some(parse(v)?);
        }
    }
    let mut hist = Vec::new();
    for line in read(&dir.hit_days())?.lines().skip(1) {
        let (_, h) = line.split_once(',').ok_or("bad histogram line")?;
        hist.push(parse(h)?);
    }
    Ok(PlantedRun {
        manifest: io(Manifest::load(&dir.manifest()))?,
        f1,
        baselines,
        hits: hits.ok_or("report lacks hits")?,
        hist,
        groups: cfg.blend.groups.iter().map(|g| (g.name.clone(), g.members.clone())).collect(),
        elapsed,
    })
}

fn planted_signal(run: &Result<PlantedRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let final_f1 = *run
        .f1
        .get(&("ensemble".into(), "final".into()))
        .ok_or("validation lacks the final ensemble")?;
    let (bname, bparams, best) = run
        .baselines
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or("no baselines")?;
    let gain = final_f1 / best - 1.0;
    ensure(gain >= 0.2, || {
        format!("final F1 {final_f1:.4} vs {bname} ({bparams}) {best:.4}: +{:.1}%", gain * 100.0)
    })?;
    let mut groups = Vec::new();
    for (name, members) in &run.groups {
        let g = *run.f1.get(&("group".into(), name.clone())).ok_or("missing group row")?;
        let m = members
            .iter()
            .map(|m| run.f1.get(&("model".into(), m.clone())).copied().ok_or("missing model row"))
            .collect::<Result<Vec<f64>, _>>()?
            .into_iter()
            .fold(f64::MIN, f64::max);
        ensure(g >= m - 0.005, || format!("group {name} F1 {g:.4} vs best member {m:.4}"))?;
        groups.push(format!("{name} {g:.4}/{m:.4}"));
    }
    within(run.elapsed, Duration::from_secs(600), "planted-signal run")?;
    Ok(format!(
        "final F1 {final_f1:.4} vs best baseline {bname} {best:.4} (+{:.0}%); groups {}; {:.0}s",
        gain * 100.0,
        groups.join(", "),
        run.elapsed.as_secs_f64()
    ))
}

fn framework(run: &Result<PlantedRun, String>) -> Check {
    let want = [
        (ModelKind::Lr, Some(Scheme::Fixed)),
        (ModelKind::Gbrt, Some(Scheme::Fixed)),
        (ModelKind::Gbrt, Some(Scheme::Sliding)),
        (ModelKind::Rf, Some(Scheme::Fixed)),
        (ModelKind::Rf, Some(Scheme::Sliding)),
        (ModelKind::Global, None),
    ];
    let got: Vec<(ModelKind, Option<Scheme>)> = REGISTRY.iter().map(|s| (s.kind, s.scheme)).collect();
    ensure(got.len() == want.len() && want.iter().all(|w| got.contains(w)), || {
        format!("registry {got:?}")
    })?;
    let run = run.as_ref().map_err(Clone::clone)?;
    let names = run.manifest.stage_names();
    let expected: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
    ensure(names == expected, || format!("manifest stages {names:?}"))?;
    let pos = |s: &str| names.iter().position(|n| *n == s).unwrap_or(usize::MAX);
    ensure(pos("train") < pos("blend") && pos("blend") < pos("tune") && pos("tune") < pos("predict"), || {
        "individual models must precede blending and tuning".into()
    })?;
    let train = run.manifest.get(Stage::Train).ok_or("no train record")?;
    for spec in REGISTRY {
        ensure(train.outputs.iter().any(|o| o.contains(spec.name)), || {
            format!("train outputs lack {}", spec.name)
        })?;
    }
    Ok(format!("registry of 6 models; manifest {}", names.join(" > ")))
}

fn determinism(root: &Path) -> Check {
    let mut cfg = RunConfig { seed: 5, ..RunConfig::default() };
    cfg.generate.n_users = 3_000;
    cfg.generate.n_brands = 60;
    cfg.models.gbrt.n_trees = 10;
    cfg.models.rf.n_trees = 6;
    cfg.paths.log = root.join("log.tsv");
    io(write_log(&cfg.paths.log, &io(generate(&cfg.generator()))?))?;
    let run = |name: &str, shards: usize| -> Result<Vec<u8>, String> {
        let mut c = cfg.clone();
        c.paths.workdir = root.join(name);
        let runner = Runner::new(c, Some(shards));
        io(runner.run_pipeline())?;
        std::fs::read(runner.dir.prediction()).map_err(|e| e.to_string())
    };
    let a = run("a", 4)?;
    let b = run("b", 4)?;
    let one = run("one", 1)?;
    let eight = run("eight", 8)?;
    ensure(!a.is_empty(), || "empty prediction".into())?;
    ensure(a == b, || "repeated runs differ".into())?;
    ensure(one == eight, || "shards 1 and 8 differ".into())?;
    ensure(a == one, || "shards 4 and 1 differ".into())?;
    Ok(format!("prediction files identical ({} bytes) across repeats and 1/4/8 shards", a.len()))
}

fn hit_days(run: &Result<PlantedRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let total: u64 = run.hist.iter().sum();
    ensure(total == run.hits, || format!("histogram total {total} vs hits {}", run.hits))?;
    let early_days = run.hist.len().div_ceil(4);
    let early: u64 = run.hist[..early_days].iter().sum();
    let share = early as f64 / total.max(1) as f64;
    ensure(share >= 0.5, || format!("first {early_days} days hold {:.1}% of hits", share * 100.0))?;
    Ok(format!("{total} hits; first {early_days} of {} days hold {:.1}%", run.hist.len(), share * 100.0))
}

fn main() {
    // `cargo test -- <filter>` passes arguments; this binary runs everything.
    let tmp = tempfile::tempdir().expect("temporary directory");
    let planted_dir = tmp.path().join("planted");
    let small_dir = tmp.path().join("small");
    std::fs::create_dir_all(&planted_dir).expect("planted dir");
    std::fs::create_dir_all(&small_dir).expect("small dir");

    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    results.push((1, "metric oracle", metric_oracle()));
    results.push((2, "calendar and split", calendar_and_split()));
    results.push((3, "cleansing", cleansing()));
    results.push((4, "no leakage", no_leakage()));
    results.push((5, "feature oracle", feature_oracle()));
    results.push((6, "model unit suite", model_suite()));
    let planted = planted_run(&planted_dir);
    results.push((7, "planted signal end to end", planted_signal(&planted)));
    results.push((8, "framework fidelity", framework(&planted)));
    results.push((9, "determinism", determinism(&small_dir)));
    results.push((10, "hit-day analysis", hit_days(&planted)));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
