//! Acceptance suite: one PASS/FAIL line per criterion, with its time limit.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force, grid_intervals, interval_relation, random_consistent_graph, random_problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use temprel_core::eval::{awareness, mcnemar, mcnemar_from_counts, score, threshold_predict, Confusion, Prf};
use temprel_core::features::LexicalResource;
use temprel_core::inference::{build_problem, infer_ilp, SolverOptions};
use temprel_core::kb::{bootstrap_priors, DEFAULT_MIN_COUNT};
use temprel_core::perceptron::ScoredPrediction;
use temprel_core::pipeline::{build_kb, framed_graphs, infer_document, train_models, InferenceConfig, TrainOptions};
use temprel_core::synth::{generate, SynthConfig};
use temprel_core::{
    check_consistent, close, CandidatePair, CompositionTable, Document, Event, KnowledgeBase, Rational, Relation,
    RelationSet, TemporalGraph, Token,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const EXTREME_ROWS: [(&str, &str, u64, u64); 12] = [
    ("chop.01", "taste.01", 133, 8),
    ("concern.01", "protect.01", 110, 10),
    ("conspire.01", "kill.01", 113, 6),
    ("debate.01", "vote.01", 48, 5),
    ("dedicate.01", "promote.02", 67, 7),
    ("fight.01", "overthrow.01", 98, 8),
    ("achieve.01", "desire.01", 7, 104),
    ("admire.01", "respect.01", 7, 121),
    ("clean.02", "contaminate.01", 3, 82),
    ("defend.01", "accuse.01", 13, 160),
    ("die.01", "crash.01", 8, 223),
    ("overthrow.01", "elect.01", 3, 100),
];

fn extreme_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for (a, b, before, after) in EXTREME_ROWS {
        kb.add(a, b, Relation::Before, before);
        kb.add(a, b, Relation::After, after);
    }
    kb
}

fn composition_oracle() -> Outcome {
    let intervals = grid_intervals(8);
    let mut sampled: BTreeMap<(Relation, Relation), RelationSet> = BTreeMap::new();
    for &a in &intervals {
        for &b in &intervals {
            for &c in &intervals {
                sampled
                    .entry((interval_relation(a, b), interval_relation(b, c)))
                    .or_insert(RelationSet::EMPTY)
                    .insert(interval_relation(a, c));
            }
        }
    }
    let table = CompositionTable::derive();
    for r1 in Relation::ALL {
        for r2 in Relation::ALL {
            let expected = if r1.is_vague() || r2.is_vague() {
                RelationSet::FULL
            } else {
                sampled[&(r1, r2)]
            };
            ensure(table.compose(r1, r2) == expected, format!("entry ({r1}, {r2}) differs"))?;
        }
    }
    Ok("36/36 entries agree".into())
}

fn closure_correctness() -> Outcome {
    let table = CompositionTable::shared();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..500 {
        let n = rng.gen_range(0..=8);
        let g = random_consistent_graph(&mut rng, n, 0.5);
        let closed = close(&g, table).map_err(|e| format!("graph {trial}: {e}"))?;
        ensure(
            close(&closed, table).ok().as_ref() == Some(&closed),
            format!("graph {trial}: not idempotent"),
        )?;
        for v in check_consistent(&closed, table) {
            let set = table.compose(closed.get(v.i, v.j).unwrap(), closed.get(v.j, v.k).unwrap());
            ensure(
                set.singleton().is_none_or(|r| r.is_vague()),
                format!("graph {trial}: singleton violation at ({}, {}, {})", v.i, v.j, v.k),
            )?;
        }
    }
    Ok("500 graphs".into())
}

fn ilp_exactness() -> Outcome {
    let table = CompositionTable::shared();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..1000 {
        let problem = random_problem(&mut rng);
        let got = infer_ilp(&problem, table, SolverOptions::default());
        let (labels, value) = brute_force(&problem, table);
        ensure(got.labels == labels, format!("problem {trial}: labels differ"))?;
        ensure(
            (got.objective - value).abs() <= 1e-9,
            format!("problem {trial}: objective differs"),
        )?;
    }
    Ok("1000 problems".into())
}

fn extreme_rows_fixture() -> Outcome {
    let kb = extreme_kb();
    let chop = kb.eta::<Rational>("chop.01", "taste.01");
    ensure(
        chop.before == Rational::new(134, 143),
        format!("chop/taste eta_before = {}", chop.before),
    )?;
    let achieve = kb.eta::<Rational>("achieve.01", "desire.01");
    ensure(
        achieve.after == Rational::new(105, 113),
        format!("achieve/desire eta_after = {}", achieve.after),
    )?;
    let extreme = kb.extreme_pairs(0.9, DEFAULT_MIN_COUNT).map_err(|e| e.to_string())?;
    ensure(
        extreme.len() == 12,
        format!("{} of 12 rows pass tau=0.9", extreme.len()),
    )?;
    Ok("134/143, 105/113, 12/12 rows".into())
}

fn threshold_monotonicity() -> Outcome {
    let mut kb = extreme_kb();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frames = ["a.01", "b.01", "c.01", "d.01"];
    for a in frames {
        for b in frames {
            kb.add(a, b, Relation::Before, rng.gen_range(0..50));
            kb.add(a, b, Relation::After, rng.gen_range(0..50));
        }
    }
    let mut pairs: Vec<(String, String)> = EXTREME_ROWS
        .iter()
        .map(|(a, b, _, _)| (a.to_string(), b.to_string()))
        .collect();
    for a in frames {
        for b in frames {
            pairs.push((a.into(), b.into()));
        }
    }
    let gold: Vec<Relation> = pairs
        .iter()
        .map(|_| {
            if rng.gen_bool(0.5) {
                Relation::Before
            } else {
                Relation::After
            }
        })
        .collect();
    let taus = [0.5, 0.6, 0.7, 0.8, 0.9];
    let sets: Vec<Vec<usize>> = taus
        .iter()
        .map(|&t| {
            let pred = threshold_predict(&kb, &pairs, t).unwrap();
            (0..pred.len()).filter(|&i| !pred[i].is_vague()).collect()
        })
        .collect();
    for i in 0..taus.len() {
        for j in i..taus.len() {
            ensure(
                sets[j].iter().all(|p| sets[i].contains(p)),
                format!("set at {} not within set at {}", taus[j], taus[i]),
            )?;
        }
    }
    let mut last = f64::INFINITY;
    for &t in &taus {
        let pred = threshold_predict(&kb, &pairs, t).unwrap();
        let mut c = Confusion::default();
        for (p, g) in pred.iter().zip(&gold) {
            c.add(*g, *p);
        }
        let recall = c.standard().recall;
        ensure(recall <= last, format!("recall rises at tau={t}"))?;
        last = recall;
    }
    Ok(format!("sizes {:?}", sets.iter().map(Vec::len).collect::<Vec<_>>()))
}

fn learnability() -> Outcome {
    let docs = generate(&SynthConfig {
        documents: 100,
        seed: 6,
        ..SynthConfig::default()
    });
    let (train, test) = docs.split_at(70);
    let lex = LexicalResource::default();
    let options = TrainOptions {
        epoch_candidates: vec![1, 3, 5, 10, 20, 50],
        ..TrainOptions::default()
    };
    let models = train_models(train, &lex, &options).map_err(|e| e.to_string())?;
    let mut total = Confusion::default();
    for d in test {
        let out = infer_document(d, &models, &lex, None, &InferenceConfig::default()).map_err(|e| e.to_string())?;
        total.merge(&score(&out.graph, &d.gold_graph()).map_err(|e| e.to_string())?);
    }
    let f1 = total.standard().f1;
    ensure(f1 >= 0.95, format!("held-out F1 {f1:.4} < 0.95"))?;
    Ok(format!("held-out F1 {f1:.4}"))
}

fn two_event_doc(i: usize) -> Document {
    let words = [
        ("the", "DT"),
        ("rebels", "NNS"),
        ("conquered", "VBD"),
        ("and", "CC"),
        ("ruled", "VBD"),
        (".", "PUNCT"),
    ];
    Document {
        doc_id: format!("prior-{i}"),
        sentences: vec![words.iter().map(|(w, p)| Token::new(w, p, w)).collect()],
        events: vec![
            Event {
                id: 0,
                sentence: 0,
                token: 2,
                frame: "conquer.01".into(),
                properties: None,
            },
            Event {
                id: 1,
                sentence: 0,
                token: 4,
                frame: "rule.01".into(),
                properties: None,
            },
        ],
        relations: None,
    }
}

fn prior_regularization() -> Outcome {
    let table = CompositionTable::shared();
    let mut kb = KnowledgeBase::new();
    kb.add("conquer.01", "rule.01", Relation::Before, 190);
    kb.add("conquer.01", "rule.01", Relation::After, 10);
    let eta = kb.eta::<f64>("conquer.01", "rule.01").before;
    ensure(eta > 0.9, format!("fixture eta_before {eta}"))?;

    // classifier torn between before and after
    let noise: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..400).map(|_| rng.gen_range(-0.02..0.02)).collect()
    };
    let docs: Vec<Document> = (0..noise.len()).map(two_event_doc).collect();
    let rate = |lambda: f64| -> Result<f64, String> {
        let mut agree = 0;
        for (i, d) in docs.iter().enumerate() {
            let e = noise[i];
            let scorer = move |_: &Document, _: CandidatePair| {
                ScoredPrediction::from_scores([0.45 + e, 0.45 - e, 0.025, 0.025, 0.025, 0.025])
            };
            let problem = build_problem(d, &scorer, Some(&kb), lambda).map_err(|e| e.to_string())?;
            let a = infer_ilp(&problem, table, SolverOptions::default());
            if a.labels[0] == Relation::Before {
                agree += 1;
            }
        }
        Ok(agree as f64 / docs.len() as f64)
    };
    let with_prior = rate(0.5)?;
    let without = rate(0.0)?;
    ensure(with_prior >= 0.95, format!("lambda=0.5 agreement {with_prior:.3}"))?;
    ensure(
        (0.35..=0.65).contains(&without),
        format!("lambda=0 agreement {without:.3} not near 0.5"),
    )?;
    Ok(format!(
        "agreement {with_prior:.3} at lambda=0.5, {without:.3} at lambda=0"
    ))
}

fn kb_determinism() -> Outcome {
    let lex = LexicalResource::default();
    let labeled = generate(&SynthConfig {
        documents: 60,
        seed: 8,
        ..SynthConfig::default()
    });
    let models = train_models(&labeled, &lex, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let docs = generate(&SynthConfig {
        documents: 1000,
        seed: 9,
        gold: false,
        ..SynthConfig::default()
    });
    let config = InferenceConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for threads in [1, 8] {
        let (kb, _) = build_kb(&docs, &models, &lex, None, &config, threads).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("kb-{threads}.tsv"));
        kb.save(&path).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], "1-thread and 8-thread files differ")?;

    let kb = KnowledgeBase::load(dir.path().join("kb-1.tsv")).map_err(|e| e.to_string())?;
    let mut oracle: BTreeMap<(String, String, Relation), u64> = BTreeMap::new();
    for d in &docs {
        let g = infer_document(d, &models, &lex, None, &config)
            .map_err(|e| e.to_string())?
            .graph;
        for m in 0..d.events.len() {
            for n in m + 1..d.events.len() {
                if let Some(r) = g.get(m, n) {
                    *oracle
                        .entry((d.events[m].frame.clone(), d.events[n].frame.clone(), r))
                        .or_default() += 1;
                }
            }
        }
    }
    let mut stored = 0;
    for (a, b, counts) in kb.entries() {
        for r in Relation::ALL {
            let expected = oracle.get(&(a.to_string(), b.to_string(), r)).copied().unwrap_or(0);
            ensure(
                counts[r.index()] == expected,
                format!("count ({a}, {b}, {r}) differs from recount"),
            )?;
            stored += counts[r.index()];
        }
    }
    ensure(
        stored == oracle.values().sum::<u64>(),
        "recount has entries missing from the KB",
    )?;
    ensure(kb.graph_count() == 1000, "graph count")?;
    Ok(format!(
        "{} bytes identical, {} edges recounted",
        files[0].len(),
        stored
    ))
}

fn awareness_metric() -> Outcome {
    let table = CompositionTable::shared();
    let gold = TemporalGraph::from_edges(3, [(0, 1, Relation::Before), (1, 2, Relation::Before)]).unwrap();
    let closed = close(&gold, table).unwrap();
    let full = awareness(&closed, &gold, table).map_err(|e| e.to_string())?.prf();
    ensure(full.f1 == 1.0, format!("close(gold) F1 {}", full.f1))?;
    let missing = awareness(&gold, &closed, table).map_err(|e| e.to_string())?.prf();
    ensure(missing.f1 == 1.0, format!("implied edge removed: F1 {}", missing.f1))?;
    let contradicted = TemporalGraph::from_edges(3, [(0, 1, Relation::Before), (1, 2, Relation::After)]).unwrap();
    let got = awareness(&contradicted, &gold, table).map_err(|e| e.to_string())?.prf();
    ensure(got == Prf::new(0.5, 0.5), format!("contradicted chain: {got:?}"))?;
    Ok("1.0, 1.0, P=R=1/2".into())
}

fn mcnemar_test() -> Outcome {
    let p = mcnemar_from_counts(0, 10).p_value;
    ensure((p - 0.001953).abs() < 1e-6, format!("b=0, c=10 gives {p}"))?;
    let a = vec![true, false, true, true, false];
    let same = mcnemar(&a, &a).map_err(|e| e.to_string())?.p_value;
    ensure(same == 1.0, format!("identical systems give {same}"))?;
    Ok(format!("p = {p:.9}"))
}

fn bootstrap_wellformed() -> Outcome {
    let docs = generate(&SynthConfig {
        documents: 200,
        seed: 11,
        ..SynthConfig::default()
    });
    let graphs = framed_graphs(&docs);
    let pairs: Vec<(String, String)> = vec![
        ("chop.01".into(), "taste.01".into()),
        ("buy.01".into(), "sell.01".into()),
        ("never.01".into(), "seen.01".into()),
    ];
    let run = || bootstrap_priors::<f64>(&graphs, &pairs, 10, 0.5, 42).map_err(|e| e.to_string());
    let first = run()?;
    ensure(first == run()?, "not reproducible under the same seed")?;
    for pb in &first {
        ensure(
            pb.folds.len() == 10,
            format!("{} folds for {}/{}", pb.folds.len(), pb.frame1, pb.frame2),
        )?;
        for fold in &pb.folds {
            ensure((fold.sum() - 1.0).abs() < 1e-9, "fold does not sum to 1")?;
        }
        for r in Relation::ALL {
            ensure(pb.values(r).len() == 10, "values per relation")?;
        }
    }
    Ok("3 pairs x 10 folds".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "composition table matches endpoint oracle",
            Duration::from_secs(1),
            composition_oracle,
        ),
        (
            "closure idempotent, no singleton violations",
            Duration::from_secs(5),
            closure_correctness,
        ),
        (
            "ILP equals brute-force enumeration",
            Duration::from_secs(30),
            ilp_exactness,
        ),
        (
            "ratio fixture and extreme-pair filter",
            Duration::from_secs(1),
            extreme_rows_fixture,
        ),
        (
            "threshold predictor monotonicity",
            Duration::from_secs(1),
            threshold_monotonicity,
        ),
        ("end-to-end learnability", Duration::from_secs(60), learnability),
        (
            "prior regularization effect",
            Duration::from_secs(60),
            prior_regularization,
        ),
        ("KB determinism and recount", Duration::from_secs(60), kb_determinism),
        ("awareness metric", Duration::from_secs(1), awareness_metric),
        ("McNemar test", Duration::from_secs(1), mcnemar_test),
        (
            "bootstrap well-formedness",
            Duration::from_secs(10),
            bootstrap_wellformed,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took longer than {limit:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({elapsed:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({elapsed:.2?})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
