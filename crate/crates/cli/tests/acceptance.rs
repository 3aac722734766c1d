//! Acceptance suite. Runs every gating criterion, prints one line per
//! criterion and exits non-zero when any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traitgen_annotate::{
    records_from_csv, records_from_jsonl, records_to_csv, records_to_jsonl, AnnotateError,
    AnnotationStore, StoreOptions, TaskInput,
};
use traitgen_core::classifier::{
    train, BackboneConfig, EncoderBackbone, HashedNgramBackbone, RawTraitScore, TrainConfig,
    TrainingStrategy,
};
use traitgen_core::datastore::{
    load_corpus, split_holdout, CorpusSource, DatasetRecord, Split, SplitSpec,
};
use traitgen_core::dialogue_gen::{
    default_user_lines, generate_corpus, render_context, ConversationTurn, CorpusPlan,
    LabeledMessage, MockProvider, Speaker,
};
use traitgen_core::evaluation::{
    accuracy_by_trait, binarize_annotations, pearson, predict, processed_output, AnnotationRecord,
    EvaluationReport, GoldLabel, GoldProvenance, PredictionRecord, ProcessedOutputFormula,
};
use traitgen_core::personas::{
    build_prompt_header, enumerate_personas, find_persona, trait_description, HeaderStyle,
    Polarity, TraitClass, TraitDimension,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let result = result.and_then(|detail| {
        if elapsed > budget {
            Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}"))
        } else {
            Ok(detail)
        }
    });
    match &result {
        Ok(detail) => println!("[{id}] PASS {title}: {detail} ({elapsed:.2?})"),
        Err(why) => println!("[{id}] FAIL {title}: {why} ({elapsed:.2?})"),
    }
    result.is_ok()
}

fn p1() -> Check {
    let personas = enumerate_personas();
    ensure(personas.len() == 20, || {
        format!("{} personas", personas.len())
    })?;
    let ids: BTreeSet<&str> = personas.iter().map(|p| p.id.as_str()).collect();
    ensure(ids.len() == 20, || "persona ids are not unique".into())?;
    for t in TraitDimension::ALL {
        let n = personas.iter().filter(|p| p.trait_dim == t).count();
        ensure(n == 4, || format!("{t} has {n} personas"))?;
    }
    let reference = [
        (
            TraitDimension::Neuroticism,
            Polarity::Positive,
            "Anxious, depressed, angry, and insecure",
        ),
        (
            TraitDimension::Openness,
            Polarity::Negative,
            "down-to-earth, insensitive, and conventional.",
        ),
        (
            TraitDimension::Extroversion,
            Polarity::Positive,
            "sociable, talkative, assertive, and active.",
        ),
    ];
    for (t, p, want) in reference {
        ensure(trait_description(t, p) == want, || {
            format!("{t}/{p} description differs")
        })?;
    }
    let style = HeaderStyle::default();
    for p in &personas {
        let header = build_prompt_header(p, &style);
        ensure(
            header.contains(trait_description(p.trait_dim, p.polarity)),
            || format!("{} header lacks its description", p.id),
        )?;
    }
    let user = [ConversationTurn {
        speaker: Speaker::User,
        text: "The boss keeps making things difficult for me.".into(),
        turn_index: 0,
    }];
    let examples = [
        ("OPE-pos-A", "The following is your conversation with your friend, who is intellectual, imaginative, sensitive, and open-minded."),
        ("OPE-neg-A", "The following is your conversation with your friend, who is down-to-earth, insensitive, and conventional."),
    ];
    for (id, want) in examples {
        let persona = find_persona(id).ok_or_else(|| format!("no persona {id}"))?;
        let header = build_prompt_header(&persona, &HeaderStyle::plain());
        ensure(header == want, || format!("{id}: `{header}`"))?;
        let prompt =
            render_context(&persona, &user, &HeaderStyle::plain()).map_err(|e| e.to_string())?;
        let expected =
            format!("{want}\nYou: The boss keeps making things difficult for me.\nFriend:");
        ensure(prompt == expected, || format!("{id} prompt: `{prompt}`"))?;
    }
    Ok("20 personas, all headers embed the trait descriptions, both worked examples verbatim".into())
}

fn traitgen(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_traitgen"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "traitgen {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn p2(dir: &Path) -> Check {
    let mut outputs = Vec::new();
    for (run, workers) in [("a", "8"), ("b", "8"), ("c", "1")] {
        let path = dir.join(format!("gen-{run}.jsonl"));
        let p = path.to_str().unwrap();
        traitgen(&["generate", "--seed", "7", "--workers", workers, "--out", p])?;
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    let lines = outputs[0].iter().filter(|&&b| b == b'\n').count();
    ensure(lines == 2000, || format!("{lines} messages"))?;
    ensure(outputs[0] == outputs[1], || {
        "two runs at 8 workers differ".into()
    })?;
    ensure(outputs[0] == outputs[2], || {
        "1 worker differs from 8 workers".into()
    })?;
    Ok(format!(
        "2000 messages, {} bytes identical across 3 runs (workers 8, 8, 1)",
        outputs[0].len()
    ))
}

fn synthetic(n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| {
            let c = TraitClass::from_index(i % 10).unwrap();
            DatasetRecord::new(
                LabeledMessage {
                    id: format!("g{i:05}"),
                    text: format!("synthetic message {i}"),
                    trait_dim: Some(c.trait_dim),
                    polarity: Some(c.polarity),
                    source: CorpusSource::Generated,
                    conversation_id: None,
                    turn_index: None,
                },
                Split::Unassigned,
            )
        })
        .collect()
}

fn p3() -> Check {
    let records = synthetic(25_000);
    let spec = SplitSpec {
        holdout_count: 1000,
        seed: 0,
    };
    let a = split_holdout(&records, spec).map_err(|e| e.to_string())?;
    let b = split_holdout(&records, spec).map_err(|e| e.to_string())?;
    let other =
        split_holdout(&records, SplitSpec { seed: 1, ..spec }).map_err(|e| e.to_string())?;
    ensure(a == b, || "same seed gave different splits".into())?;
    ensure(a != other, || "different seeds gave the same split".into())?;
    let test: BTreeSet<&str> = a
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|r| r.message.id.as_str())
        .collect();
    let train: BTreeSet<&str> = a
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| r.message.id.as_str())
        .collect();
    ensure(test.len() == 1000, || format!("{} TEST", test.len()))?;
    ensure(train.len() == 24_000, || format!("{} TRAIN", train.len()))?;
    ensure(test.is_disjoint(&train), || {
        "TEST and TRAIN share ids".into()
    })?;
    let all: BTreeSet<&str> = records.iter().map(|r| r.message.id.as_str()).collect();
    let union: BTreeSet<&str> = test.union(&train).copied().collect();
    ensure(union == all, || "split lost or invented records".into())?;
    Ok("1000 TEST + 24000 TRAIN, disjoint, covering, deterministic per seed".into())
}

struct Corpus {
    train: Vec<LabeledMessage>,
    test: Vec<LabeledMessage>,
}

fn mock_corpus(seed: u64) -> Corpus {
    let plan = CorpusPlan {
        user_lines: default_user_lines(),
        scripts: 10,
        exchanges: 10,
        seed,
        header_style: HeaderStyle::default(),
        params: Default::default(),
        retry: Default::default(),
    };
    let messages = generate_corpus(&MockProvider::new(seed), &plan, 8).expect("mock generation");
    let records: Vec<DatasetRecord> = messages
        .into_iter()
        .map(|m| DatasetRecord::new(m, Split::Unassigned))
        .collect();
    let split = split_holdout(
        &records,
        SplitSpec {
            holdout_count: 200,
            seed,
        },
    )
    .expect("split");
    let (test, train): (Vec<_>, Vec<_>) = split.into_iter().partition(|r| r.split == Split::Test);
    Corpus {
        train: train.into_iter().map(|r| r.message).collect(),
        test: test.into_iter().map(|r| r.message).collect(),
    }
}

fn p4(corpus: &Corpus) -> Check {
    let backbone = HashedNgramBackbone::new(&BackboneConfig::default());
    let projection = backbone.projection().cloned();
    let cfg = |strategy| TrainConfig {
        strategy,
        seed: 7,
        ..TrainConfig::default()
    };
    let together = train(&corpus.train, &backbone, &cfg(TrainingStrategy::Together))
        .map_err(|e| e.to_string())?;
    ensure(together.head_widths() == vec![10], || {
        format!("TOGETHER heads {:?}", together.head_widths())
    })?;
    let separate = train(&corpus.train, &backbone, &cfg(TrainingStrategy::Separate))
        .map_err(|e| e.to_string())?;
    ensure(separate.head_widths() == vec![2; 5], || {
        format!("SEPARATE heads {:?}", separate.head_widths())
    })?;
    ensure(
        separate.towers().iter().all(|t| t.encoder.is_some()),
        || "SEPARATE model without its own encoder".into(),
    )?;
    let adapter = train(&corpus.train, &backbone, &cfg(TrainingStrategy::Adapter))
        .map_err(|e| e.to_string())?;
    ensure(adapter.head_widths() == vec![2; 5], || {
        format!("ADAPTER heads {:?}", adapter.head_widths())
    })?;
    ensure(adapter.frozen_encoder() == projection.as_ref(), || {
        "ADAPTER backbone changed during training".into()
    })?;
    ensure(backbone.projection().cloned() == projection, || {
        "reference backbone mutated".into()
    })?;
    let mut worst = 0.0f64;
    for m in &corpus.test {
        let par = adapter.score(&m.text).map_err(|e| e.to_string())?;
        let seq = adapter
            .score_sequential(&m.text)
            .map_err(|e| e.to_string())?;
        for t in TraitDimension::ALL {
            worst = worst
                .max((par[&t].positive - seq[&t].positive).abs())
                .max((par[&t].negative - seq[&t].negative).abs());
        }
    }
    ensure(worst <= 1e-6, || {
        format!("parallel vs sequential max diff {worst:e}")
    })?;
    let ratio = adapter.trainable_param_count() as f64 / separate.trainable_param_count() as f64;
    Ok(format!(
        "heads 10 / 5x2 / 5x2, backbone frozen, parallel-sequential max diff {worst:.1e}, adapter trains {:.1}% of separate's parameters",
        100.0 * ratio
    ))
}

/// Multinomial naive Bayes over lower-cased word unigrams.
fn unigram_oracle_accuracy(corpus: &Corpus) -> f64 {
    let words = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    };
    let mut counts: Vec<HashMap<String, f64>> = vec![HashMap::new(); 10];
    let mut totals = [0.0f64; 10];
    let mut priors = [0.0f64; 10];
    let mut vocab = BTreeSet::new();
    for m in &corpus.train {
        let k = m.class().unwrap().index();
        priors[k] += 1.0;
        for w in words(&m.text) {
            *counts[k].entry(w.clone()).or_default() += 1.0;
            totals[k] += 1.0;
            vocab.insert(w);
        }
    }
    let v = vocab.len() as f64;
    let correct = corpus
        .test
        .iter()
        .filter(|m| {
            let ws = words(&m.text);
            let best = (0..10)
                .max_by(|&a, &b| {
                    let score = |k: usize| {
                        priors[k].ln()
                            + ws.iter()
                                .map(|w| {
                                    ((counts[k].get(w).copied().unwrap_or(0.0) + 1.0)
                                        / (totals[k] + v))
                                        .ln()
                                })
                                .sum::<f64>()
                    };
                    score(a).total_cmp(&score(b))
                })
                .unwrap();
            best == m.class().unwrap().index()
        })
        .count();
    correct as f64 / corpus.test.len() as f64
}

fn p5(corpus: &Corpus) -> Check {
    ensure(corpus.train.len() + corpus.test.len() == 2000, || {
        "corpus is not 2000 messages".into()
    })?;
    ensure(corpus.test.len() == 200, || {
        format!("holdout of {}", corpus.test.len())
    })?;
    let oracle = unigram_oracle_accuracy(corpus);
    ensure(oracle >= 0.95, || {
        format!("unigram oracle only {oracle:.3}; corpus not separable")
    })?;
    let backbone = HashedNgramBackbone::new(&BackboneConfig::default());
    let golds: Vec<GoldLabel> = corpus
        .test
        .iter()
        .filter_map(GoldLabel::from_message)
        .collect();
    let mut summary = vec![format!("unigram oracle {oracle:.3}")];
    for strategy in [
        TrainingStrategy::Together,
        TrainingStrategy::Separate,
        TrainingStrategy::Adapter,
    ] {
        let cfg = TrainConfig {
            strategy,
            seed: 7,
            epochs: 50,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let bundle = train(&corpus.train, &backbone, &cfg).map_err(|e| e.to_string())?;
        let preds = predict(&bundle, &corpus.test, ProcessedOutputFormula::SumOfAbs)
            .map_err(|e| e.to_string())?;
        let row = accuracy_by_trait(strategy.short(), "holdout", &preds, &golds, |_| true)
            .map_err(|e| e.to_string())?;
        let accs: Vec<(TraitDimension, f64)> = TraitDimension::ALL
            .iter()
            .map(|&t| (t, row.accuracy(t).unwrap_or(0.0)))
            .collect();
        let min = accs.iter().map(|(_, a)| *a).fold(1.0, f64::min);
        ensure(min >= 0.90, || {
            format!(
                "{strategy}: {}",
                accs.iter()
                    .map(|(t, a)| format!("{t}={a:.3}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            )
        })?;
        summary.push(format!("{} min {min:.3}", strategy.short()));
    }
    Ok(summary.join(", "))
}

fn p6() -> Check {
    let cases = [
        ((-0.1, -0.8), 0.9),
        ((0.1, 0.1), 0.2),
        ((-0.3, 0.9), 1.2),
        ((0.1, 0.2), 0.3),
    ];
    for ((p, n), want) in cases {
        let got = processed_output(RawTraitScore::new(p, n)).map_err(|e| e.to_string())?;
        ensure((got - want).abs() < 1e-12, || {
            format!("({p},{n}) -> {got}, want {want}")
        })?;
    }
    ensure(
        processed_output(RawTraitScore::new(0.0, 0.0)).unwrap() == 0.0,
        || "zero case".into(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10_000 {
        let (p, n): (f64, f64) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let v = processed_output(RawTraitScore::new(p, n)).unwrap();
        let flipped = processed_output(RawTraitScore::new(-p, -n)).unwrap();
        ensure(v >= 0.0 && v == flipped, || {
            format!("symmetry fails at ({p},{n})")
        })?;
    }
    Ok("4 worked examples within 1e-12, zero case, sign-flip symmetry on 10000 draws".into())
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn p7() -> Check {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| 5.0 - 3.0 * v).collect();
    let r_up = pearson(&x, &up).map_err(|e| e.to_string())?.r;
    let r_down = pearson(&x, &down).map_err(|e| e.to_string())?.r;
    ensure(
        (r_up - 1.0).abs() < 1e-15 && (r_down + 1.0).abs() < 1e-15,
        || format!("r = {r_up}, {r_down}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(3..200);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|v| 0.3 * v + rng.gen_range(-10.0..10.0))
            .collect();
        let r = pearson(&a, &b).map_err(|e| e.to_string())?.r;
        worst = worst.max((r - brute_pearson(&a, &b)).abs());
    }
    ensure(worst < 1e-12, || format!("oracle mismatch {worst:e}"))?;

    let difficulty: Vec<f64> = (0..500)
        .map(|_| f64::from(rng.gen_range(1u8..=10)))
        .collect();
    let confidence: Vec<f64> = difficulty
        .iter()
        .map(|d| 3.0 / d + rng.gen_range(-0.2..0.2))
        .collect();
    let res = pearson(&difficulty, &confidence).map_err(|e| e.to_string())?;
    ensure(res.r < 0.0 && res.p_value < 0.001, || {
        format!("r = {}, p = {}", res.r, res.p_value)
    })?;
    Ok(format!(
        "r = +-1 exact, oracle max diff {worst:.1e} over 100 vectors, monotone-inverse n=500 r = {:.3} p = {:.1e}",
        res.r, res.p_value
    ))
}

fn prediction(id: &str, pol: Polarity) -> PredictionRecord {
    let s = match pol {
        Polarity::Positive => RawTraitScore::new(0.9, -0.2),
        Polarity::Negative => RawTraitScore::new(-0.4, 0.6),
    };
    PredictionRecord::from_scores(
        id,
        TraitDimension::ALL.into_iter().map(|t| (t, s)).collect(),
        ProcessedOutputFormula::SumOfAbs,
    )
    .unwrap()
}

fn p8() -> Check {
    use Polarity::*;
    use TraitDimension::*;
    let gold = |id: &str, t, p| GoldLabel {
        message_id: id.into(),
        polarities: BTreeMap::from([(t, p)]),
        provenance: GoldProvenance::Generated,
    };
    // 4 messages, 3 right: a (OPE+) right, b (OPE-) right, c (EXT+) right, d (EXT-) wrong
    let preds = [
        prediction("a", Positive),
        prediction("b", Negative),
        prediction("c", Positive),
        prediction("d", Positive),
    ];
    let golds = [
        gold("a", Openness, Positive),
        gold("b", Openness, Negative),
        gold("c", Extroversion, Positive),
        gold("d", Extroversion, Negative),
    ];
    let row =
        accuracy_by_trait("hand", "toy", &preds, &golds, |_| true).map_err(|e| e.to_string())?;
    let pooled = row.pooled().unwrap();
    let avg = row.average().unwrap();
    ensure(pooled == 0.75 && avg == 0.75, || {
        format!("pooled {pooled}, avg {avg}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = vec![row];
    for k in 0..5 {
        let n = 60;
        let preds: Vec<_> = (0..n)
            .map(|i| {
                prediction(
                    &format!("m{i}"),
                    if rng.gen_bool(0.5) {
                        Positive
                    } else {
                        Negative
                    },
                )
            })
            .collect();
        let golds: Vec<_> = (0..n)
            .map(|i| {
                gold(
                    &format!("m{i}"),
                    TraitDimension::ALL[rng.gen_range(0..5)],
                    if rng.gen_bool(0.7) {
                        Positive
                    } else {
                        Negative
                    },
                )
            })
            .collect();
        rows.push(
            accuracy_by_trait(&format!("model{k}"), "random", &preds, &golds, |_| true)
                .map_err(|e| e.to_string())?,
        );
    }
    for r in &rows {
        let cells: Vec<f64> = TraitDimension::ALL
            .iter()
            .filter_map(|&t| r.accuracy(t))
            .collect();
        let mean = cells.iter().sum::<f64>() / cells.len() as f64;
        ensure((r.average().unwrap() - mean).abs() < 1e-12, || {
            format!("{}: Avg != mean", r.model)
        })?;
    }
    let report = EvaluationReport { rows };
    let csv = report.to_csv().map_err(|e| e.to_string())?;
    let header = csv.lines().next().unwrap_or_default();
    ensure(
        header.starts_with("model,dataset,EXT,AGR,OPE,CON,NEU,Avg"),
        || format!("csv header `{header}`"),
    )?;
    let text = report.render_text("Accuracy");
    let cols: Vec<&str> = text
        .lines()
        .nth(1)
        .unwrap_or_default()
        .split_whitespace()
        .collect();
    ensure(cols == ["EXT", "AGR", "OPE", "CON", "NEU", "Avg"], || {
        format!("table columns {cols:?}")
    })?;
    Ok("columns EXT AGR OPE CON NEU Avg, Avg = row mean within 1e-12, hand case = 0.75".into())
}

fn annotation(annotator: &str, message: &str, rating: u8) -> AnnotationRecord {
    AnnotationRecord {
        annotator_id: annotator.into(),
        message_id: message.into(),
        ratings: TraitDimension::ALL
            .into_iter()
            .map(|t| (t, rating))
            .collect(),
        difficulty: TraitDimension::ALL
            .into_iter()
            .map(|t| (t, 11 - rating))
            .collect(),
        submitted_at: chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
    }
}

fn p9(dir: &Path) -> Check {
    let annotators = ["ann1", "ann2", "ann3", "ann4"];
    let tasks: Vec<TaskInput> = (0..40)
        .map(|i| TaskInput {
            message_id: format!("msg{i:02}"),
            text: format!("test message {i}"),
        })
        .collect();
    let mut detail = Vec::new();
    for redundancy in [1usize, 2, 4] {
        let journal = dir.join(format!("journal-{redundancy}.jsonl"));
        let opts = || StoreOptions {
            redundancy,
            annotators: annotators.iter().map(|s| s.to_string()).collect(),
        };
        let store = AnnotationStore::open(&journal, opts()).map_err(|e| e.to_string())?;
        store.enqueue_tasks(&tasks);
        let mut active = annotators.to_vec();
        let mut step = 0u8;
        while !active.is_empty() {
            let mut next = Vec::new();
            for a in active {
                if let Some(task) = store.next_task(a).map_err(|e| e.to_string())? {
                    let mut bad = annotation(a, &task.message_id, 11);
                    bad.ratings.insert(TraitDimension::Openness, 3);
                    ensure(
                        matches!(store.submit(bad), Err(AnnotateError::Validation(_))),
                        || "rating 11 accepted".into(),
                    )?;
                    store
                        .submit(annotation(a, &task.message_id, 1 + step % 10))
                        .map_err(|e| e.to_string())?;
                    step = step.wrapping_add(1);
                    next.push(a);
                }
            }
            active = next;
        }
        let counts: Vec<usize> = store
            .annotation_counts()
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        ensure(hi - lo <= 1 && lo == redundancy, || {
            format!("redundancy {redundancy}: counts {lo}..{hi}")
        })?;
        let exported = store.export();
        for r in &exported {
            ensure(r.validation_errors().is_empty(), || {
                format!("invalid exported record {}", r.message_id)
            })?;
        }
        drop(store);
        let reopened = AnnotationStore::open(&journal, opts()).map_err(|e| e.to_string())?;
        reopened.enqueue_tasks(&tasks);
        ensure(reopened.export() == exported, || {
            "journal lost records on restart".into()
        })?;
        ensure(reopened.progress().done == 40, || {
            "restart forgot completed tasks".into()
        })?;
        let csv = records_to_csv(&exported).map_err(|e| e.to_string())?;
        let jsonl = records_to_jsonl(&exported).map_err(|e| e.to_string())?;
        ensure(
            records_from_csv(&csv).map_err(|e| e.to_string())? == exported,
            || "csv round trip".into(),
        )?;
        ensure(
            records_from_jsonl(&jsonl).map_err(|e| e.to_string())? == exported,
            || "jsonl round trip".into(),
        )?;
        detail.push(format!("r={redundancy}: {} records", exported.len()));
    }
    let gold = binarize_annotations(&[
        annotation("a", "pos", 7),
        annotation("b", "pos", 8),
        annotation("a", "neg", 5),
        annotation("b", "neg", 5),
    ])
    .map_err(|e| e.to_string())?;
    ensure(
        gold["pos"]
            .gold
            .polarities
            .values()
            .all(|&p| p == Polarity::Positive),
        || "{7,8} not POSITIVE".into(),
    )?;
    ensure(
        gold["neg"]
            .gold
            .polarities
            .values()
            .all(|&p| p == Polarity::Negative),
        || "{5,5} not NEGATIVE".into(),
    )?;
    Ok(format!(
        "4 annotators x 40 tasks balanced ({}), restart-safe, csv/jsonl round trip, {{7,8}}->POSITIVE {{5,5}}->NEGATIVE",
        detail.join(", ")
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let started = Instant::now();
    let mut ok = true;
    ok &= run(
        "P1",
        "persona and prompt golden suite",
        Duration::from_secs(1),
        p1,
    );
    ok &= run(
        "P2",
        "deterministic generation",
        Duration::from_secs(60),
        || p2(dir.path()),
    );
    ok &= run("P3", "split correctness", Duration::from_secs(5), p3);
    let corpus = mock_corpus(7);
    ok &= run(
        "P4",
        "architecture topology",
        Duration::from_secs(120),
        || p4(&corpus),
    );
    ok &= run("P5", "learnability floor", Duration::from_secs(300), || {
        p5(&corpus)
    });
    ok &= run("P6", "processed output", Duration::from_secs(5), p6);
    ok &= run("P7", "Pearson correctness", Duration::from_secs(5), p7);
    ok &= run("P8", "report fidelity", Duration::from_secs(5), p8);
    ok &= run("P9", "annotation backend", Duration::from_secs(30), || {
        p9(dir.path())
    });
    println!("[P10] SKIP transformer backbone regime check: non-gating stretch, see README recipe");
    // sanity: the corpus file written by P2 loads as a valid dataset
    if let Err(e) = load_corpus(&dir.path().join("gen-a.jsonl")) {
        println!("note: generated corpus did not reload: {e}");
        ok = false;
    }
    println!(
        "acceptance: {} in {:.2?}",
        if ok {
            "all gating criteria passed"
        } else {
            "FAILED"
        },
        started.elapsed()
    );
    if !ok {
        std::process::exit(1);
    }
}
