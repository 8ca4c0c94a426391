mod common;

use proptest::prelude::*;
use toxprune::metrics::{BleuStats, BLEU_EPSILON};
use toxprune::{
    bleu, data_dir, distinct_n, lexical_toxicity, rouge, EvalCorpus, EvalItem, MetricReport,
};

use common::toy_words;

fn corpus(pairs: &[(&str, &[&str])]) -> EvalCorpus {
    EvalCorpus::new(
        pairs
            .iter()
            .map(|(c, refs)| EvalItem {
                candidate: c.to_string(),
                references: refs.iter().map(|r| r.to_string()).collect(),
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn distinct_examples() {
    assert_eq!(distinct_n(&["a b a"], 1), 2.0 / 3.0);
    assert_eq!(distinct_n(&["a b", "a b"], 2), 0.5);
    assert_eq!(distinct_n(&["a b c", "d e"], 1), 1.0);
    assert_eq!(distinct_n::<&str>(&[], 1), 0.0);
}

#[test]
fn rouge_examples() {
    assert_eq!(rouge(&corpus(&[("a c", &["a b c"])])).rouge_l, 0.8);
    let same = rouge(&corpus(&[("x y z", &["x y z"])]));
    assert_eq!((same.rouge_1, same.rouge_2, same.rouge_l), (1.0, 1.0, 1.0));
    let disjoint = rouge(&corpus(&[("a b", &["c d"])]));
    assert_eq!(
        (disjoint.rouge_1, disjoint.rouge_2, disjoint.rouge_l),
        (0.0, 0.0, 0.0)
    );
}

#[test]
fn identity_corpus_scores_perfectly() {
    let c = corpus(&[
        ("the cat sat on the mat", &["the cat sat on the mat"]),
        ("a dog runs home", &["a dog runs home"]),
    ]);
    let report = MetricReport::evaluate(&c, &toy_words()).unwrap();
    for b in [
        report.bleu_1,
        report.bleu_2,
        report.bleu_3,
        report.bleu_4,
        report.bleu,
    ] {
        assert!((b - 100.0).abs() < 1e-6);
    }
    assert_eq!(report.rouge_l, 1.0);
}

#[test]
fn no_overlap_hits_the_epsilon_floor() {
    let c = corpus(&[("x y", &["a b"])]);
    let b = bleu(&c, 4);
    assert!(b.cumulative[0] > 0.0 && b.cumulative[0] < 1e-6);
}

/// Hand computation for the three-sentence fixture, clipped matches per order:
///
/// 1. "the cat sat on the mat" vs "the cat is on the mat": 5/6, 3/5, 1/4, 0/3
/// 2. "a dog runs" vs "a dog runs fast": 3/3, 2/2, 1/1, 0/0
/// 3. "hello world" vs "hello there world": 2/2, 0/1, 0/0, 0/0
///
/// p1 = 10/11, p2 = 5/8, p3 = 2/5, p4 = 0 -> epsilon; c = 11, r = 13, BP = exp(1 - 13/11).
#[test]
fn three_sentence_fixture() {
    let c = corpus(&[
        ("the cat sat on the mat", &["the cat is on the mat"]),
        ("a dog runs", &["a dog runs fast"]),
        ("hello world", &["hello there world"]),
    ]);
    let stats = BleuStats::collect(&c, 4);
    assert_eq!(stats.matches, vec![10, 5, 2, 0]);
    assert_eq!(stats.totals, vec![11, 8, 5, 3]);
    assert_eq!((stats.candidate_len, stats.reference_len), (11, 13));

    let bp = (1.0f64 - 13.0 / 11.0).exp();
    let p = [10.0 / 11.0, 5.0 / 8.0, 2.0 / 5.0, BLEU_EPSILON];
    let expected: Vec<f64> = (1..=4)
        .map(|n| 100.0 * bp * (p[..n].iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp())
        .collect();
    let pinned = [
        75.7957198250164,
        62.846490843620415,
        50.880707482667624,
        0.32372347808478036,
    ];
    let got = bleu(&c, 4);
    for n in 0..4 {
        assert!(
            (got.cumulative[n] - expected[n]).abs() < 1e-9,
            "B-{}",
            n + 1
        );
        assert!((got.cumulative[n] - pinned[n]).abs() < 1e-9, "B-{}", n + 1);
    }
    assert_eq!(got.bleu, got.cumulative[3]);
}

#[test]
fn closest_reference_length_prefers_shorter_on_ties() {
    // candidate length 3, references of length 2 and 4: r = 2 -> no penalty
    let c = corpus(&[("a b c", &["a b", "a b c d"])]);
    assert_eq!(BleuStats::collect(&c, 1).reference_len, 2);
}

#[test]
fn lexicon_respects_word_boundaries() {
    assert_eq!(lexical_toxicity(&["FUmble along"], &["fu"]).unwrap(), 0.0);
    assert_eq!(lexical_toxicity(&["oh FU, really"], &["fu"]).unwrap(), 1.0);
    assert_eq!(
        lexical_toxicity(&["nice day", "what an idiot"], &toy_words()).unwrap(),
        0.5
    );
    assert!(lexical_toxicity(&["x"], &Vec::<String>::new()).is_err());
}

#[test]
fn golden_report() {
    let c = EvalCorpus::load(data_dir().join("golden/eval_fixture.jsonl")).unwrap();
    let expected: MetricReport = serde_json::from_str(
        &std::fs::read_to_string(data_dir().join("golden/metric_report.json")).unwrap(),
    )
    .unwrap();
    let got = MetricReport::evaluate(&c, &toy_words()).unwrap();
    assert_eq!(got.n_items, expected.n_items);
    for (a, b) in got.values().iter().zip(expected.values()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert_eq!(got, MetricReport::evaluate(&c, &toy_words()).unwrap());
}

#[test]
fn csv_columns_follow_the_tables() {
    assert_eq!(
        MetricReport::csv_header(),
        "B-1,B-2,B-3,B-4,B,R-1,R-2,R-L,D-1,D-2,Toxicity"
    );
}

fn sentence() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        proptest::sample::select(vec!["a", "b", "c", "d", "idiot", "e"]),
        0..7,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_ignore_item_order(
        items in proptest::collection::vec((sentence(), proptest::collection::vec(sentence(), 1..3)), 1..8),
        rotate in 0usize..8,
    ) {
        let build = |items: &[(String, Vec<String>)]| EvalCorpus::new(
            items.iter().map(|(c, r)| EvalItem { candidate: c.clone(), references: r.clone() }).collect()
        ).unwrap();
        let mut shuffled = items.clone();
        shuffled.reverse();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let a = MetricReport::evaluate(&build(&items), &["idiot"]).unwrap();
        let b = MetricReport::evaluate(&build(&shuffled), &["idiot"]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn toxicity_grows_with_the_word_list(
        texts in proptest::collection::vec(sentence(), 1..10),
        words in proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "idiot", "e"]), 1..4),
        extra in proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "idiot", "e"]), 0..4),
    ) {
        let mut more = words.clone();
        more.extend(extra);
        prop_assert!(lexical_toxicity(&texts, &more).unwrap() >= lexical_toxicity(&texts, &words).unwrap());
    }

    #[test]
    fn distinct_is_one_for_unique_tokens(n in 1usize..20) {
        let text: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        prop_assert_eq!(distinct_n(&[text.join(" ")], 1), 1.0);
    }
}
