use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use hasoc_core::classifier::{argmax, gradient_check, softmax, DropoutMask, HeadParams};
use hasoc_core::corpus::{self, LabeledDataset, Row, Task, Task1};
use hasoc_core::embedkit::cosine;
use hasoc_core::emojikit::{pool, EmbeddingTable};
use hasoc_core::hashseg::{brute_force_segment, segment, Lexicon};
use hasoc_core::metrics::{confusion, macro_f1};
use hasoc_core::textprep::{clean, detect_scripts, entity_spans, Language, RawPost};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn post_text() -> impl Strategy<Value = String> {
    let pieces = prop::sample::select(vec![
        "hello",
        "world",
        "#IPL2019Final",
        "##Jitega",
        "@user",
        "@RT",
        "RT",
        "http://t.co/x",
        "😂",
        "🙏🏽",
        ":)",
        ":-(",
        "42",
        "3.5",
        "नमस्ते",
        "भारत",
        "سلام",
        "a,b",
        "x-y",
        "don't",
        "!!",
        "\n",
        "\t",
        "  ",
    ]);
    prop::collection::vec(pieces, 1..12).prop_map(|v| v.join(" "))
}

fn lexicon() -> impl Strategy<Value = Lexicon> {
    prop::collection::vec(("[abc]{1,3}", 1u64..40), 1..6)
        .prop_map(|e| Lexicon::from_counts(e).unwrap())
}

fn row(i: usize, hof: bool) -> Row {
    Row {
        hasoc_id: format!("r{i}"),
        tweet_id: i.to_string(),
        text: format!("text {i}"),
        task_1: if hof { Task1::Hof } else { Task1::Not },
        task_2: None,
        language: Language::En,
    }
}

proptest! {
    #[test]
    fn entity_spans_are_ordered_and_disjoint(text in post_text()) {
        let spans = entity_spans(&text);
        for w in spans.windows(2) {
            prop_assert!(w[0].range.end <= w[1].range.start);
        }
        for s in &spans {
            prop_assert!(text.get(s.range.clone()).is_some());
        }
    }

    #[test]
    fn cleaning_is_idempotent(text in post_text()) {
        let Ok(post) = RawPost::new(text, Language::En) else { return Ok(()) };
        let once = match clean(&post) {
            Ok(c) => c.tokens,
            Err(_) => return Ok(()),
        };
        let again = clean(&RawPost::new(once.join(" "), Language::En).unwrap()).unwrap();
        prop_assert_eq!(again.tokens, once);
        prop_assert!(again.entities.is_empty());
    }

    #[test]
    fn script_runs_partition_non_whitespace(text in post_text()) {
        let spans = detect_scripts(&text);
        let chars: Vec<char> = text.chars().collect();
        let mut covered = String::new();
        let mut last = 0;
        for s in &spans {
            prop_assert!(s.start >= last && s.start < s.end);
            last = s.end;
            covered.extend(&chars[s.start..s.end]);
        }
        let expected: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(covered, expected);
    }

    #[test]
    fn segmenter_matches_brute_force(raw in "[abcA1]{1,10}", lex in lexicon()) {
        let fast = segment(&raw, &lex);
        let slow = brute_force_segment(&raw, &lex).unwrap();
        prop_assert_eq!(&fast.tokens, &slow.tokens);
        prop_assert_eq!(fast.score.to_bits(), slow.score.to_bits());
        prop_assert_eq!(fast.tokens.concat(), raw);
    }

    #[test]
    fn digits_never_share_a_token_with_letters(raw in "[a-zA-Z0-9]{1,30}", lex in lexicon()) {
        for t in segment(&raw, &lex).tokens {
            let digits = t.chars().filter(char::is_ascii_digit).count();
            prop_assert!(digits == 0 || digits == t.chars().count(), "{t}");
        }
    }

    #[test]
    fn pooling_ignores_order_and_repetition(
        vectors in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4),
        picks in prop::collection::vec(0usize..6, 1..10),
        seed in any::<u64>(),
    ) {
        let names = ["a", "b", "c", "d", "missing", "gone"];
        let table = EmbeddingTable::from_entries(
            "t", 3, names.iter().zip(&vectors).map(|(n, v)| (n.to_string(), v.clone())),
        ).unwrap();
        let items: Vec<&str> = picks.iter().map(|&i| names[i]).collect();
        let base = pool(&items, &table);

        let mut shuffled = items.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&pool(&shuffled, &table), &base);

        let doubled: Vec<&str> = items.iter().chain(&items).copied().collect();
        let twice = pool(&doubled, &table);
        prop_assert_eq!(twice.present, base.present);
        for (a, b) in twice.values.iter().zip(&base.values) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        let found: Vec<&[f64]> = items.iter().filter_map(|i| table.get(i)).collect();
        prop_assert_eq!(base.present, !found.is_empty());
        for (k, x) in base.values.iter().enumerate() {
            if found.is_empty() {
                prop_assert_eq!(*x, 0.0);
            } else {
                let lo = found.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
                let hi = found.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= *x && *x <= hi);
            }
        }
    }

    #[test]
    fn macro_f1_is_invariant_to_row_order_and_relabeling(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 1..40),
        seed in any::<u64>(),
    ) {
        let labels = ["x", "y", "z"];
        let score = |pairs: &[(usize, usize)], names: &[&str; 3]| {
            let g: Vec<&str> = pairs.iter().map(|p| names[p.0]).collect();
            let p: Vec<&str> = pairs.iter().map(|p| names[p.1]).collect();
            macro_f1(&confusion(&g, &p, names).unwrap())
        };
        let base = score(&pairs, &labels);
        prop_assert!((0.0..=1.0).contains(&base));

        let mut shuffled = pairs.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(score(&shuffled, &labels), base);

        let renamed = score(&pairs, &["q", "a", "m"]);
        prop_assert_eq!(renamed, base);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-800.0f64..800.0, 1..8)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn argmax_ignores_constant_shifts(logits in prop::collection::vec(-50i32..50, 1..8), shift in -1000i32..1000) {
        let a: Vec<f64> = logits.iter().map(|&x| x as f64).collect();
        let b: Vec<f64> = logits.iter().map(|&x| (x + shift) as f64).collect();
        prop_assert_eq!(argmax(&a), argmax(&b));
        prop_assert_eq!(argmax(&softmax(&a)), argmax(&a));
    }

    #[test]
    fn gradients_agree_with_finite_differences(
        d in 1usize..6, h in 1usize..5, four in any::<bool>(), seed in any::<u64>(),
    ) {
        use rand::Rng;
        let c = if four { 4 } else { 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = HeadParams::init(d, h, c, seed);
        // Non-zero biases keep pre-activations off the ReLU kink when inputs are dropped.
        params.b1 = (0..h).map(|_| rng.gen_range(0.1..0.5) * if rng.gen() { 1.0 } else { -1.0 }).collect();
        params.b2 = (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let xs: Vec<Vec<f64>> = (0..2).map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| (x.as_slice(), rng.gen_range(0..c))).collect();
        let masks: Vec<DropoutMask> = (0..2).map(|_| DropoutMask::draw(d, h, 0.25, &mut rng)).collect();
        prop_assert!(gradient_check(&params, &batch, &masks, 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn split_partitions_indices(
        labels in prop::collection::vec(0u8..3, 0..60),
        frac in 0.0f64..0.6,
        seed in any::<u64>(),
    ) {
        let (train, val, _) = corpus::split_indices(&labels, frac, seed);
        let all: BTreeSet<usize> = train.iter().chain(&val).copied().collect();
        prop_assert_eq!(all.len(), labels.len());
        prop_assert_eq!(train.len() + val.len(), labels.len());
        prop_assert!(all.iter().all(|&i| i < labels.len()));
    }

    #[test]
    fn combine_keeps_every_row(sizes in prop::collection::vec(0usize..15, 1..4)) {
        let sets: Vec<LabeledDataset> = sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| LabeledDataset::new(Language::En, (0..n).map(|i| row(100 * k + i, i % 2 == 0)).collect()))
            .collect();
        let combined = corpus::combine(&sets);
        prop_assert_eq!(combined.len(), sizes.iter().sum::<usize>());
        let mut ids: BTreeMap<String, usize> = BTreeMap::new();
        for r in &combined.rows {
            *ids.entry(r.hasoc_id.clone()).or_default() += 1;
        }
        prop_assert!(ids.values().all(|&n| n == 1));
    }

    #[test]
    fn soup_balances_classes(
        hof in 1usize..12, not in 1usize..12,
        vectors in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 24),
        seed in any::<u64>(),
    ) {
        let rows: Vec<Row> = (0..hof + not).map(|i| row(i, i < hof)).collect();
        let data = LabeledDataset::new(Language::En, rows);
        let embed = |r: &Row| vectors[r.tweet_id.parse::<usize>().unwrap()].clone();
        let out = corpus::soup_resample(&data, Task::Task1A, embed, seed).unwrap();
        let target = ((hof + not) as f64 / 2.0).round() as usize;
        let stats = corpus::class_stats(&out);
        prop_assert_eq!((stats.hof, stats.not), (target, target));
    }

    #[test]
    fn soup_drops_later_row_of_most_similar_pair(
        not in 2usize..8,
        vectors in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 20),
        seed in any::<u64>(),
    ) {
        // One surplus HOF row: exactly one removal.
        let hof = not + 2;
        let rows: Vec<Row> = (0..hof + not).map(|i| row(i, i < hof)).collect();
        let data = LabeledDataset::new(Language::En, rows);
        let embed = |r: &Row| vectors[r.tweet_id.parse::<usize>().unwrap()].clone();

        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..hof {
            for j in i + 1..hof {
                let s = cosine(&vectors[i], &vectors[j]);
                if s > best.0 {
                    best = (s, j);
                }
            }
        }
        let out = corpus::soup_resample(&data, Task::Task1A, embed, seed).unwrap();
        let kept: Vec<usize> = out
            .rows
            .iter()
            .filter(|r| r.task_1 == Task1::Hof)
            .map(|r| r.tweet_id.parse().unwrap())
            .collect();
        let expected: Vec<usize> = (0..hof).filter(|&i| i != best.1).collect();
        prop_assert_eq!(kept, expected);
    }
}
