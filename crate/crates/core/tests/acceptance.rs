//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use toxprune::cli::{cmd_sweep, load_corpus, ExperimentConfig, SweepRow};
use toxprune::decoding::log_softmax;
use toxprune::metrics::{rouge, EvalItem};
use toxprune::prunelist::selection_size;
use toxprune::{
    apply_prune_mask, beam_search, bleu, build_prune_set, data_dir, decode, distinct_n,
    full_distribution, top_k_distribution, top_p_distribution, EvalCorpus, LogitSource,
    MetricReport, NgramLm, PruneSet, SamplingConfig, ScriptedLm, Strategy, SurfaceVariants,
    TokenId,
};

use common::{
    random_logits, random_prune_set, random_scripted_lm, rng, sparse_scripted_lm, toy_vocab,
    toy_words,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exclusion() -> Check {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut runs = 0;
    let mut emitted = 0usize;
    for i in 0..10_000 {
        let v = r.random_range(3..=16);
        let lm = sparse_scripted_lm(&mut r, v, 12);
        let prune = random_prune_set(&mut r, v, lm.eos());
        let strategy = match i % 4 {
            0 => Strategy::Greedy,
            1 => Strategy::TopK {
                k: r.random_range(1..=v),
            },
            2 => Strategy::TopP {
                p: r.random_range(0.05..=1.0),
            },
            _ => Strategy::Beam {
                beam_width: r.random_range(1..=4),
                length_normalize: r.random_bool(0.5),
            },
        };
        let cfg = SamplingConfig::new(strategy)
            .with_max_len(r.random_range(1..=12))
            .with_temperature(r.random_range(0.3..3.0))
            .with_seed(r.random());
        let prompt: Vec<TokenId> = (0..r.random_range(0..3))
            .map(|_| r.random_range(0..v) as TokenId)
            .collect();
        let generation =
            decode(&lm, &prompt, &cfg, &prune, i).map_err(|e| format!("run {i}: {e}"))?;
        emitted += generation.output_ids.len();
        ensure(
            generation.output_ids.iter().all(|id| !prune.contains(*id)),
            || format!("run {i} emitted a pruned id"),
        )?;
        if let Strategy::Beam { .. } = cfg.strategy {
            for h in beam_search(&lm, &prompt, &cfg, &prune).map_err(|e| e.to_string())? {
                ensure(h.ids.iter().all(|id| !prune.contains(*id)), || {
                    format!("run {i}: pruned id in a hypothesis")
                })?;
            }
        }
        runs += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{runs} generations over 4 strategies, {emitted} tokens, 0 pruned ids emitted, {elapsed:.1?}"))
}

fn distribution_validity() -> Check {
    let mut r = rng(7);
    for case in 0..1000 {
        let v = r.random_range(1..=64);
        let mut logits = random_logits(&mut r, v, case % 3 == 0);
        if case % 5 == 0 {
            logits.iter_mut().for_each(|x| *x *= 40.0);
        }
        let eos = r.random_range(0..v) as TokenId;
        let prune = random_prune_set(&mut r, v, eos);
        let masked = apply_prune_mask(&logits, &prune).map_err(|e| e.to_string())?;
        let t = r.random_range(0.1..4.0);
        let dist = match case % 3 {
            0 => full_distribution(&masked, t),
            1 => top_k_distribution(&masked, r.random_range(1..=v), t),
            _ => top_p_distribution(&masked, r.random_range(0.01..=1.0), t),
        }
        .map_err(|e| e.to_string())?;
        let sum: f64 = dist.probs().iter().sum();
        ensure((sum - 1.0).abs() <= 1e-9, || {
            format!("case {case}: sum {sum}")
        })?;
        ensure(prune.ids.iter().all(|&id| dist.prob(id) == 0.0), || {
            format!("case {case}: mass on a pruned id")
        })?;
        ensure(dist.support_size() > 0, || {
            format!("case {case}: empty support")
        })?;
    }
    Ok("1000 cases sum to 1 within 1e-9, pruned ids at exactly 0".into())
}

/// Every sequence the decoder could produce, scored the way beam search
/// scores it: running sum of masked log-probabilities, mean per token.
fn best_by_enumeration(lm: &ScriptedLm, prune: &PruneSet, max_len: usize) -> (Vec<TokenId>, f64) {
    fn walk(
        lm: &ScriptedLm,
        prune: &PruneSet,
        max_len: usize,
        ids: &mut Vec<TokenId>,
        logprob: f64,
        best: &mut Option<(Vec<TokenId>, f64)>,
    ) {
        let lp = log_softmax(
            &apply_prune_mask(&lm.score(ids).unwrap(), prune).unwrap(),
            1.0,
        )
        .unwrap();
        for (id, step) in lp.into_iter().enumerate() {
            if !step.is_finite() {
                continue;
            }
            ids.push(id as TokenId);
            let total = logprob + step;
            if id as TokenId == lm.eos() || ids.len() == max_len {
                let score = total / ids.len() as f64;
                let better = match best {
                    None => true,
                    Some((b_ids, b_score)) => {
                        score > *b_score || (score == *b_score && *ids < *b_ids)
                    }
                };
                if better {
                    *best = Some((ids.clone(), score));
                }
            } else {
                walk(lm, prune, max_len, ids, total, best);
            }
            ids.pop();
        }
    }
    let mut best = None;
    walk(lm, prune, max_len, &mut Vec::new(), 0.0, &mut best);
    best.unwrap()
}

fn beam_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng(99);
    let mut ties = 0;
    for case in 0..200 {
        let v = r.random_range(2..=8);
        let max_len = r.random_range(1..=5);
        let coarse = case % 2 == 0;
        let lm = random_scripted_lm(&mut r, v, max_len, coarse);
        let prune = if case % 3 == 0 {
            PruneSet::empty("oracle")
        } else {
            random_prune_set(&mut r, v, lm.eos())
        };
        // wide enough that nothing is ever cut: at least vocab, in fact vocab^max_len twice over
        let width = 2 * v.pow(max_len as u32);
        let cfg = SamplingConfig::new(Strategy::Beam {
            beam_width: width,
            length_normalize: true,
        })
        .with_max_len(max_len);
        let hyps = beam_search(&lm, &[], &cfg, &prune).map_err(|e| format!("case {case}: {e}"))?;
        let top = &hyps[0];
        let (ids, score) = best_by_enumeration(&lm, &prune, max_len);
        ensure(top.ids == ids, || {
            format!("case {case}: beam {:?} vs enumeration {:?}", top.ids, ids)
        })?;
        ensure(top.score(true) == score, || {
            format!("case {case}: score {} vs {score}", top.score(true))
        })?;
        if hyps.len() > 1 && hyps[1].score(true) == score {
            ties += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "200 scripted models (V<=8, max_len<=5, {ties} with tied optima), {elapsed:.1?}"
    ))
}

fn run_default_sweep() -> Result<(Vec<SweepRow>, Vec<u8>), String> {
    let mut cfg =
        ExperimentConfig::load(data_dir().join("sweep.json")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    cfg.out_dir = dir.path().to_path_buf();
    let rows = cmd_sweep(&cfg).map_err(|e| e.to_string())?;
    let csv = fs::read(dir.path().join("summary.csv")).map_err(|e| e.to_string())?;
    Ok((rows, csv))
}

fn fraction_monotonicity(rows: &[SweepRow]) -> Check {
    let fractions: Vec<f64> = rows.iter().map(|r| r.fraction).collect();
    ensure(fractions == [0.0, 0.25, 0.5, 0.75, 1.0], || {
        format!("fractions {fractions:?}")
    })?;
    let tox: Vec<f64> = rows.iter().map(|r| r.report.toxicity_rate).collect();
    ensure(tox.windows(2).all(|w| w[1] <= w[0]), || {
        format!("toxicity {tox:?}")
    })?;
    ensure(tox[4] == 0.0, || format!("toxicity at 1.0 is {}", tox[4]))?;
    Ok(format!("toxicity {tox:.3?}"))
}

fn diversity_trend(rows: &[SweepRow]) -> Check {
    let (base, full) = (&rows[0].report, &rows[rows.len() - 1].report);
    ensure(full.distinct_1 > base.distinct_1, || {
        format!("D-1 {} -> {}", base.distinct_1, full.distinct_1)
    })?;
    ensure(full.distinct_2 > base.distinct_2, || {
        format!("D-2 {} -> {}", base.distinct_2, full.distinct_2)
    })?;
    Ok(format!(
        "D-1 {:.3} -> {:.3}, D-2 {:.3} -> {:.3}",
        base.distinct_1, full.distinct_1, base.distinct_2, full.distinct_2
    ))
}

fn prune_arithmetic() -> Check {
    let v = toy_vocab();
    let e = v
        .expand_words(&toy_words(), SurfaceVariants::default())
        .map_err(|e| e.to_string())?;
    let n = e.all_ids().iter().filter(|&&id| !v.is_special(id)).count();
    let mut previous: Option<BTreeSet<TokenId>> = None;
    let mut sizes = Vec::new();
    for f in [0.25, 0.5, 0.75, 1.0] {
        let p = build_prune_set(&e, f, 0, &v).map_err(|e| e.to_string())?;
        let expected = (f * n as f64).ceil() as usize;
        ensure(
            p.len() == expected && selection_size(f, n) == expected,
            || format!("f={f}: {} ids, want {expected}", p.len()),
        )?;
        if let Some(prev) = &previous {
            ensure(prev.is_subset(&p.ids) && prev.len() < p.len(), || {
                format!("f={f} does not strictly contain the previous set")
            })?;
        }
        sizes.push(p.len());
        previous = Some(p.ids);
    }
    Ok(format!("N={n}, sizes {sizes:?}, strictly nested"))
}

fn metric_fixtures() -> Check {
    let refs: Vec<String> = fs::read_to_string(data_dir().join("refs.jsonl"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["references"][0]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let identity = EvalCorpus::new(
        refs.iter()
            .map(|r| EvalItem {
                candidate: r.clone(),
                references: vec![r.clone()],
            })
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let b = bleu(&identity, 4).bleu;
    ensure((b - 100.0).abs() <= 1e-6, || format!("identity BLEU {b}"))?;
    let rl = rouge(&identity).rouge_l;
    ensure(rl == 1.0, || format!("identity ROUGE-L {rl}"))?;
    let d = distinct_n(&["a b a"], 1);
    ensure(d == 2.0 / 3.0, || format!("distinct {d}"))?;
    let pair = EvalCorpus::new(vec![EvalItem {
        candidate: "a c".into(),
        references: vec!["a b c".into()],
    }])
    .unwrap();
    let rl = rouge(&pair).rouge_l;
    ensure(rl == 0.8, || format!("rouge_l {rl}"))?;

    let fixture = EvalCorpus::load(data_dir().join("golden/eval_fixture.jsonl"))
        .map_err(|e| e.to_string())?;
    let golden: MetricReport = serde_json::from_str(
        &fs::read_to_string(data_dir().join("golden/metric_report.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let got = MetricReport::evaluate(&fixture, &toy_words()).map_err(|e| e.to_string())?;
    let again = MetricReport::evaluate(&fixture, &toy_words()).map_err(|e| e.to_string())?;
    ensure(got == again, || "report differs between runs".into())?;
    ensure(got.n_items == golden.n_items, || {
        "n_items differs from golden".into()
    })?;
    for (name, (a, g)) in MetricReport::csv_header()
        .split(',')
        .zip(got.values().iter().zip(golden.values()))
    {
        ensure((a - g).abs() <= 1e-9, || {
            format!("{name}: {a} vs golden {g}")
        })?;
    }
    Ok(format!(
        "identity B={b:.6}, R-L=1, distinct 2/3, rouge_l 0.8, golden report ({} items)",
        got.n_items
    ))
}

fn round_trips() -> Check {
    let v = toy_vocab();
    let chars: Vec<char> = v
        .tokens()
        .iter()
        .filter(|t| t.chars().count() == 1 && v.id(&format!("{t}</w>")).is_some())
        .flat_map(|t| t.chars())
        .collect();
    let mut r = rng(5);
    for case in 0..1000 {
        let words: Vec<String> = (0..r.random_range(0..8))
            .map(|_| {
                (0..r.random_range(1..10))
                    .map(|_| chars[r.random_range(0..chars.len())])
                    .collect()
            })
            .collect();
        let text = words.join(if case % 2 == 0 { " " } else { "  \t" });
        let decoded = v.decode(&v.encode(&text)).map_err(|e| e.to_string())?;
        ensure(decoded == words.join(" "), || {
            format!("{text:?} -> {decoded:?}")
        })?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let e = v
        .expand_words(&toy_words(), SurfaceVariants::default())
        .unwrap();
    for seed in 0..100u64 {
        let fraction = (seed % 20 + 1) as f64 / 20.0;
        let p = build_prune_set(&e, fraction, seed, &v).unwrap();
        let path = dir.path().join(format!("p{seed}.json"));
        p.save(&path).map_err(|e| e.to_string())?;
        let back = PruneSet::load(&path, &v).map_err(|e| e.to_string())?;
        ensure(back == p, || format!("prune set {seed} changed on reload"))?;
    }

    let corpus = load_corpus(data_dir().join("corpus.txt"), &v).map_err(|e| e.to_string())?;
    let lm = NgramLm::train(&corpus, 3, 0.1, &v).map_err(|e| e.to_string())?;
    let path = dir.path().join("model.json");
    lm.save(&path).map_err(|e| e.to_string())?;
    let back = NgramLm::load(&path).map_err(|e| e.to_string())?;
    ensure(back == lm, || "n-gram model changed on reload".into())?;
    ensure(
        back.score(&[5, 6]).unwrap() == lm.score(&[5, 6]).unwrap(),
        || "scores changed on reload".into(),
    )?;
    Ok("1000 encode/decode strings, 100 prune sets, n-gram model".into())
}

fn determinism(first: &[u8]) -> Check {
    let (_, second) = run_default_sweep()?;
    ensure(first == second.as_slice(), || {
        "summary.csv differs between runs".into()
    })?;
    Ok(format!(
        "summary.csv identical across two runs ({} bytes)",
        first.len()
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, check: Check| match check {
        Ok(detail) => println!("PASS  {name}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("FAIL  {name}: {why}");
        }
    };

    report("exclusion guarantee", exclusion());
    report("distribution validity", distribution_validity());
    report("beam oracle", beam_oracle());
    match run_default_sweep() {
        Ok((rows, csv)) => {
            report("fraction monotonicity", fraction_monotonicity(&rows));
            report("diversity trend", diversity_trend(&rows));
            report("prune-set arithmetic", prune_arithmetic());
            report("metric fixtures", metric_fixtures());
            report("round-trips", round_trips());
            report("determinism", determinism(&csv));
        }
        Err(why) => {
            for name in ["fraction monotonicity", "diversity trend", "determinism"] {
                report(name, Err(format!("sweep failed: {why}")));
            }
            report("prune-set arithmetic", prune_arithmetic());
            report("metric fixtures", metric_fixtures());
            report("round-trips", round_trips());
        }
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
