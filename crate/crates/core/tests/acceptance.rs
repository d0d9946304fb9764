//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.
//!
//! The learning-curve run behind criteria 6 and 7 dominates the runtime.

use std::fmt::Display;
use std::time::{Duration, Instant};

use deepmatch::baselines::{FeatureSet, Felr};
use deepmatch::eval::{
    auc, calibration, calibration_gain, combine_average, slice_tail_torso_head, Dimension, FrequencyIndex,
    ScoredImpression, Stratum,
};
use deepmatch::gradcheck::{gradient_check, FD_STEP};
use deepmatch::harness::{
    cmd_eval, cmd_train, compare_on, generate, load_scorer, CurveRow, RunConfig, SyntheticData, SyntheticSpec,
};
use deepmatch::layers::{sigmoid, Activation, Mode, SeededRng};
use deepmatch::model::{count_parameters, cross_product, DeepModel, ModelCache, ModelConfig, ModelKind};
use deepmatch::params::Parameters;
use deepmatch::text::{write_dataset, QueryAdRecord};
use deepmatch::train::{cross_entropy_loss, logit_gradient, PROB_CLAMP};
use deepmatch::Tensor2;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: impl Display) -> Outcome {
    if cond {
        Ok(detail.to_string())
    } else {
        Err(detail.to_string())
    }
}

fn random_tensor(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn one_hot(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor2 {
    let mut t = Tensor2::zeros(rows, cols);
    for r in 0..rows {
        // Some all-zero rows, as padding produces.
        if rng.random_bool(0.8) {
            t[(r, rng.random_range(0..cols))] = 1.0;
        }
    }
    t
}

// ---------------------------------------------------------------- 1

fn toy_gradient_check(config: ModelConfig) -> (f64, Duration) {
    let start = Instant::now();
    let mut model = DeepModel::new(config).unwrap();
    let mut rng = SeededRng::seed_from_u64(2024);
    let (qs, as_) = (model.config().query_input_shape(), model.config().ad_input_shape());
    let make = |rng: &mut SeededRng, (r, c): (usize, usize)| match model.kind() {
        ModelKind::Char => one_hot(rng, r, c),
        ModelKind::Word => random_tensor(rng, r, c),
    };
    let q: Vec<Tensor2> = (0..3).map(|_| make(&mut rng, qs)).collect();
    let a: Vec<Tensor2> = (0..3).map(|_| make(&mut rng, as_)).collect();
    let c = [1.0, 0.0, 1.0];
    let report = gradient_check(
        &mut model,
        |m, with_grads| {
            let mut cache = ModelCache::default();
            let z = m.logits(&q, &a, Mode::Train, &mut cache).unwrap();
            let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
            if with_grads {
                m.backward(&logit_gradient(&p, &c).unwrap(), &mut cache).unwrap();
            }
            cross_entropy_loss(&p, &c, PROB_CLAMP).unwrap()
        },
        FD_STEP,
    );
    assert_eq!(report.blocks.len(), model.params().len());
    (report.max_rel_err(), start.elapsed())
}

fn gradient_integrity() -> Outcome {
    let (ce, ct) = toy_gradient_check(ModelConfig::char_toy());
    let (we, wt) = toy_gradient_check(ModelConfig::word_toy());
    let limit = Duration::from_secs(120);
    check(
        ce < 1e-4 && we < 1e-4 && ct < limit && wt < limit,
        format!(
            "char max rel err {ce:.2e} in {:.1}s, word {we:.2e} in {:.1}s",
            ct.as_secs_f64(),
            wt.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn cross_product_oracle() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(5);
    let mut cases = 0;
    for k in 1..=6 {
        for m in 1..=6 {
            for l in 1..=6 {
                for r in 1..=6 {
                    let hq = random_tensor(&mut rng, k, l);
                    let ha = random_tensor(&mut rng, m, r);
                    let got = cross_product(&hq, &ha);
                    let mut want = Tensor2::zeros(k * m, l + r);
                    for i in 0..k {
                        for j in 0..m {
                            for c in 0..l {
                                want[(i * m + j, c)] = hq[(i, c)];
                            }
                            for c in 0..r {
                                want[(i * m + j, l + c)] = ha[(j, c)];
                            }
                        }
                    }
                    let same = got.shape() == want.shape()
                        && got.data().iter().zip(want.data()).all(|(x, y)| x.to_bits() == y.to_bits());
                    if !same {
                        return Err(format!("mismatch at k={k} m={m} l={l} r={r}"));
                    }
                    cases += 1;
                }
            }
        }
    }
    check(true, format!("{cases} shapes bit-exact"))
}

// ---------------------------------------------------------------- 3

fn pairwise_auc(s: &[f64], c: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if c[i] == 1.0 && c[j] == 0.0 {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn auc_oracle() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let n = rng.random_range(2..=500);
        // Coarse scores on odd instances to force ties.
        let levels = if inst % 2 == 1 { 7.0 } else { 1e9 };
        let s: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() / levels).collect();
        let mut c: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        c[0] = 1.0;
        c[1] = 0.0;
        let fast = auc(&s, &c).ok_or("auc undefined with both classes present")?;
        worst = worst.max((fast - pairwise_auc(&s, &c)).abs());
    }
    let s: Vec<f64> = (0..50).map(f64::from).collect();
    let c: Vec<f64> = (0..50).map(|i| f64::from(u8::from(i >= 25))).collect();
    let perfect = auc(&s, &c);
    let reversed: Vec<f64> = s.iter().map(|v| -v).collect();
    let rev = auc(&reversed, &c);
    check(
        worst < 1e-12 && perfect == Some(1.0) && rev == Some(0.0),
        format!("max |rank-sum - pairwise| {worst:.1e} over 100 instances; perfect {perfect:?}, reversed {rev:?}"),
    )
}

// ---------------------------------------------------------------- 4

fn loss_oracle() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=256);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(1e-6..1.0 - 1e-6)).collect();
        let c: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let direct = -p
            .iter()
            .zip(&c)
            .map(|(&p, &c)| c * p.ln() + (1.0 - c) * (1.0 - p).ln())
            .sum::<f64>()
            / n as f64;
        let got = cross_entropy_loss(&p, &c, PROB_CLAMP).map_err(|e| e.to_string())?;
        worst = worst.max((got - direct).abs());
    }
    check(worst < 1e-12, format!("max abs diff {worst:.1e} over 200 batches"))
}

// ---------------------------------------------------------------- 5

fn calibration_check() -> Outcome {
    let spec = SyntheticSpec {
        train_pairs: 100_000,
        test_pairs: 1,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let p: Vec<f64> = data.train.iter().map(|r| r.true_ctr.unwrap()).collect();
    let c: Vec<f64> = data.train.iter().map(QueryAdRecord::label).collect();
    let cal = calibration(&p, &c).ok_or("no clicks")?;
    let gain = calibration_gain(1.5, 1.25).ok_or("gain undefined")?;
    check(
        (0.97..=1.03).contains(&cal) && (gain - 0.5).abs() < 1e-12,
        format!("oracle calibration {cal:.4} on 1e5; gain(1.5, 1.25) = {gain}"),
    )
}

// ---------------------------------------------------------------- 9

fn random_config(rng: &mut SeededRng) -> ModelConfig {
    let act = |rng: &mut SeededRng| if rng.random_bool(0.5) { Activation::Relu } else { Activation::Identity };
    loop {
        let kind = if rng.random_bool(0.5) { ModelKind::Char } else { ModelKind::Word };
        let word = kind == ModelKind::Word;
        let c = ModelConfig {
            kind,
            query_len: rng.random_range(if word { 2..=8 } else { 11..=20 }),
            ad_len: rng.random_range(if word { 4..=12 } else { 11..=24 }),
            input_channels: rng.random_range(1..=6),
            subnet_filters: if word { 0 } else { rng.random_range(1..=4) },
            lead_activation: act(rng),
            cross_filters: rng.random_range(1..=4),
            cross_activation: act(rng),
            cross_pool: if word { 2 } else { rng.random_range(1..=3) },
            final_filters: [rng.random_range(1..=4), rng.random_range(1..=4)],
            final_pools: if word { [2, 2] } else { [rng.random_range(1..=2), rng.random_range(1..=2)] },
            dense: [rng.random_range(1..=5), rng.random_range(1..=5)],
            seed: rng.random(),
        };
        if c.validate().is_ok() {
            return c;
        }
    }
}

fn structural_counts() -> Outcome {
    let mut rng = SeededRng::seed_from_u64(9);
    for i in 0..50 {
        let config = random_config(&mut rng);
        let model = DeepModel::new(config.clone()).map_err(|e| e.to_string())?;
        let brute: usize = model.params().iter().map(|p| p.value.len()).sum();
        let closed = count_parameters(&config).map_err(|e| e.to_string())?;
        if brute != closed {
            return Err(format!("config {i}: enumeration {brute} vs closed form {closed}: {config:?}"));
        }
    }
    let felr = Felr::new(FeatureSet::All).param_count();
    check(felr == 43, format!("50 random configs agree; FELR has {felr} parameters"))
}

// ---------------------------------------------------------------- 10

fn index_with(counts: &[(&str, u64)]) -> FrequencyIndex {
    let mut index = FrequencyIndex::new();
    for &(q, n) in counts {
        for _ in 0..n {
            index.observe(q, "ad");
        }
    }
    index
}

fn imp(q: &str) -> ScoredImpression {
    ScoredImpression::from_record(&QueryAdRecord::new(q, "ad", "", "", 0), 0.5)
}

fn slicing() -> Outcome {
    let mut notes = Vec::new();
    let point_checks = [
        (0.0, Stratum::Tail),
        (9.99e-7, Stratum::Tail),
        (1e-6, Stratum::Torso),
        (0.00999, Stratum::Torso),
        (1e-2, Stratum::Head),
        (1.0, Stratum::Head),
    ];
    for (nf, want) in point_checks {
        if Stratum::of(nf) != want {
            return Err(format!("nf = {nf:e} classified {:?}, expected {want:?}", Stratum::of(nf)));
        }
    }
    // nf = 1/1e6 and 1e4/1e6 land exactly on the thresholds.
    let index = index_with(&[("max", 1_000_000), ("one", 1), ("tenk", 10_000), ("mid", 500)]);
    let imps: Vec<ScoredImpression> = ["max", "one", "tenk", "mid", "one"].iter().map(|q| imp(q)).collect();
    let s = slice_tail_torso_head(&imps, &index, Dimension::Query);
    let want = (vec![], vec![1, 3, 4], vec![0, 2]);
    if (s.tail.clone(), s.torso.clone(), s.head.clone()) != want {
        return Err(format!("boundary slicing gave {s:?}"));
    }
    notes.push("nf=1e-6 -> torso, nf=1e-2 -> head");
    let index = index_with(&[("max", 2_000_000), ("one", 1)]);
    let s = slice_tail_torso_head(&[imp("one"), imp("max")], &index, Dimension::Query);
    if s.tail != [0] || s.head != [1] {
        return Err(format!("nf=5e-7 case gave {s:?}"));
    }
    notes.push("nf=5e-7 -> tail");

    // Disjoint cover on generated traffic, every dimension.
    let data = generate(&SyntheticSpec {
        train_pairs: 20_000,
        test_pairs: 5_000,
        ..SyntheticSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let index = FrequencyIndex::from_records(&data.train);
    let imps: Vec<ScoredImpression> = data.test.iter().map(|r| ScoredImpression::from_record(r, 0.5)).collect();
    for dim in Dimension::ALL {
        let s = slice_tail_torso_head(&imps, &index, dim);
        let mut all: Vec<usize> = s.tail.iter().chain(&s.torso).chain(&s.head).copied().collect();
        all.sort_unstable();
        if all != (0..imps.len()).collect::<Vec<_>>() {
            return Err(format!("{} slices are not a disjoint cover", dim.as_str()));
        }
    }
    notes.push("disjoint cover on query/ad/pair");
    check(true, notes.join("; "))
}

// ---------------------------------------------------------------- 6, 7, 8, 11

/// Desk-scale configurations used for the learning-curve run.
const CHAR_CFG: &str = "model = char\nname = char\npreset = desk\nlearning_rate = 0.003\nepochs = 3\n";
const WORD_CFG: &str =
    "model = word\nname = word\npreset = desk\nbatch_size = 16\nlearning_rate = 0.001\nepochs = 4\n";
const FELR_LEN_CFG: &str = "model = felr\nname = felr_length\nfelr_features = length_only\nepochs = 2\n";
const DATA_KEYS: &str = "train_data = data/train.tsv\ntest_data = data/test.tsv\nembeddings = data/embeddings.txt\n";

struct World {
    dir: tempfile::TempDir,
    data: SyntheticData,
}

impl World {
    fn new() -> World {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&SyntheticSpec::default()).unwrap();
        let d = dir.path().join("data");
        std::fs::create_dir_all(&d).unwrap();
        write_dataset(&d.join("train.tsv"), &data.train).unwrap();
        write_dataset(&d.join("test.tsv"), &data.test).unwrap();
        data.embeddings.write(&d.join("embeddings.txt")).unwrap();
        World { dir, data }
    }

    fn config(&self, name: &str, body: &str, out: &str) -> RunConfig {
        let path = self.dir.path().join(format!("{name}.cfg"));
        std::fs::write(&path, format!("{body}{DATA_KEYS}out_dir = {out}\n")).unwrap();
        let mut cfg = RunConfig::read(&path).unwrap();
        cfg.apply_env().unwrap();
        cfg
    }
}

fn auc_of(rows: &[CurveRow], model: &str, size: usize) -> Option<f64> {
    rows.iter().find(|r| r.model == model && r.size == size).and_then(|r| r.auc)
}

fn learning_runs(world: &World) -> (Result<Vec<CurveRow>, String>, Duration) {
    let configs = [
        world.config("char", CHAR_CFG, "curve"),
        world.config("word", WORD_CFG, "curve"),
        world.config("felr_length", FELR_LEN_CFG, "curve"),
    ];
    let start = Instant::now();
    let rows = compare_on(&configs, &world.data.train, &world.data.test, &[1_000, 10_000, 100_000]);
    (rows.map_err(|e| e.to_string()), start.elapsed())
}

fn learnability(rows: &[CurveRow], elapsed: Duration) -> Outcome {
    let n = 100_000;
    let (c, w, f) = (auc_of(rows, "char", n), auc_of(rows, "word", n), auc_of(rows, "felr_length", n));
    let (Some(c), Some(w), Some(f)) = (c, w, f) else {
        return Err(format!("undefined AUC: char {c:?}, word {w:?}, felr {f:?}"));
    };
    check(
        c >= 0.80 && w >= 0.80 && c >= f + 0.05 && w >= f + 0.05 && elapsed < Duration::from_secs(1800),
        format!(
            "AUC char {c:.4}, word {w:.4}, length-only FELR {f:.4}; {:.1} min",
            elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn learning_curve(rows: &[CurveRow]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for model in ["char", "word", "felr_length"] {
        let a: Vec<Option<f64>> = [1_000, 10_000, 100_000].iter().map(|&s| auc_of(rows, model, s)).collect();
        let fmt: Vec<String> = a.iter().map(|v| v.map_or("undef".into(), |v| format!("{v:.3}"))).collect();
        parts.push(format!("{model} {}", fmt.join(" -> ")));
        match (a[0], a[1], a[2]) {
            (Some(x), Some(y), Some(z)) => ok &= y >= x - 0.02 && z >= y - 0.02,
            _ => ok = false,
        }
    }
    check(ok, parts.join("; "))
}

fn combination(world: &World, model: &deepmatch::harness::Scorer) -> Outcome {
    let test = &world.data.test;
    let p = model.score_all(test).map_err(|e| e.to_string())?;
    let c: Vec<f64> = test.iter().map(QueryAdRecord::label).collect();
    let ext: Vec<f64> = test.iter().map(|r| r.external_score.unwrap() * 0.5).collect();
    let comb: Vec<f64> = p
        .iter()
        .zip(&ext)
        .map(|(&a, &b)| combine_average(a, b))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let ce = calibration(&ext, &c).ok_or("no clicks")?;
    let cc = calibration(&comb, &c).ok_or("no clicks")?;
    let gain = calibration_gain(ce, cc).ok_or("gain undefined")?;
    check(
        (cc - 1.0).abs() < (ce - 1.0).abs() && gain > 0.0,
        format!("external calibration {ce:.4}, combined {cc:.4}, gain {:.1}%", gain * 100.0),
    )
}

const DET_CFG: &str = "model = word\nname = det\npreset = desk\nmax_steps = 300\nlearning_rate = 0.003\nseed = 17\n";

fn determinism(world: &World) -> (Outcome, Option<deepmatch::harness::Scorer>) {
    let run = |out: &str| -> Result<(Vec<u8>, String, String, deepmatch::harness::Scorer), String> {
        let cfg = world.config("det", DET_CFG, out);
        let t = cmd_train(&cfg).map_err(|e| e.to_string())?;
        cmd_eval(&cfg, &t.checkpoint).map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read_to_string(cfg.out_dir.join(f)).unwrap();
        let scorer = load_scorer(&cfg, &t.checkpoint).map_err(|e| e.to_string())?;
        Ok((std::fs::read(&t.checkpoint).unwrap(), read("report.tsv"), read("report.json"), scorer))
    };
    let (a, b) = match (run("det_a"), run("det_b")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (Err(e), None),
    };
    let same = a.0 == b.0 && a.1 == b.1 && a.2 == b.2;
    let outcome = check(
        same,
        format!(
            "checkpoints {} ({} bytes), report.tsv {}, report.json {}",
            if a.0 == b.0 { "identical" } else { "differ" },
            a.0.len(),
            if a.1 == b.1 { "identical" } else { "differ" },
            if a.2 == b.2 { "identical" } else { "differ" },
        ),
    );
    (outcome, Some(a.3))
}

// ---------------------------------------------------------------- driver

fn report(id: u32, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(d) => println!("criterion {id:>2} {name}: PASS ({d})"),
        Err(d) => println!("criterion {id:>2} {name}: FAIL ({d})"),
    }
    outcome.is_ok()
}

fn main() {
    let mut all = true;
    all &= report(1, "gradient integrity", &gradient_integrity());
    all &= report(2, "cross-product oracle", &cross_product_oracle());
    all &= report(3, "AUC oracle", &auc_oracle());
    all &= report(4, "loss oracle", &loss_oracle());
    all &= report(5, "calibration", &calibration_check());

    let world = World::new();
    let (rows, elapsed) = learning_runs(&world);
    match rows {
        Ok(rows) => {
            all &= report(6, "learnability", &learnability(&rows, elapsed));
            all &= report(7, "learning-curve shape", &learning_curve(&rows));
        }
        Err(e) => {
            all &= report(6, "learnability", &Err(e.clone()));
            all &= report(7, "learning-curve shape", &Err(e));
        }
    }
    let (det, scorer) = determinism(&world);
    let comb = match &scorer {
        Some(s) => combination(&world, s),
        None => Err("no trained model".into()),
    };
    all &= report(8, "combination", &comb);
    all &= report(9, "structural counts", &structural_counts());
    all &= report(10, "partition/slicing", &slicing());
    all &= report(11, "determinism", &det);

    if !all {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
