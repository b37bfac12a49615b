mod common;

use proptest::prelude::*;
use rand::Rng as _;

use catvrnn::data::{encode_batch, pad_sequence, LabeledCorpus, LabeledSentence, Vocabulary, PAD};
use catvrnn::evaluation::{
    bleu_corpus, bleu_harmonic, category_accuracy, corpus_perplexity, CnnConfig, EvalClassifier, SentenceClassifier,
};
use catvrnn::model::{CatVrnn, ModelConfig};
use catvrnn::training::Checkpoint;

fn sentence() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 0..=8)
}

fn corpus() -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(sentence(), 1..=5)
}

proptest! {
    #[test]
    fn bleu_matches_counting_oracle(c in corpus(), r in corpus(), n in 1usize..=5) {
        let got = bleu_corpus(&c, &r, n).unwrap();
        prop_assert!((got - common::bleu_oracle(&c, &r, n)).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn bleu_is_one_on_itself(c in corpus(), n in 1usize..=5) {
        prop_assume!(c.iter().any(|s| !s.is_empty()));
        prop_assert!((bleu_corpus(&c, &c, n).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_ignores_reference_order(c in corpus(), mut r in corpus(), n in 1usize..=5) {
        let a = bleu_corpus(&c, &r, n).unwrap();
        r.reverse();
        prop_assert_eq!(a, bleu_corpus(&c, &r, n).unwrap());
    }

    #[test]
    fn harmonic_mean_is_bracketed(f in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let h = bleu_harmonic(f, b);
        prop_assert!(f.min(b) - 1e-15 <= h && h <= f.max(b) + 1e-15);
        prop_assert_eq!(h, bleu_harmonic(b, f));
    }

    #[test]
    fn padding_shifts_by_one(ids in prop::collection::vec(2usize..50, 0..=12), extra in 0usize..5) {
        let t = ids.len() + extra + 1;
        let (inputs, targets) = pad_sequence(&ids, t).unwrap();
        prop_assert_eq!(inputs.len(), t);
        prop_assert_eq!(inputs[0], PAD);
        prop_assert_eq!(&inputs[1..], &targets[..t - 1]);
        prop_assert_eq!(&targets[..ids.len()], &ids[..]);
        prop_assert!(targets[ids.len()..].iter().all(|&x| x == PAD));
    }

    #[test]
    fn perplexity_at_least_one(seed in 0u64..1000, words in prop::collection::vec("[a-f]{1,2}", 1..6)) {
        let s = vec![LabeledSentence::new(words, 0)];
        let c = LabeledCorpus::new(s.clone(), 1, "p").unwrap();
        let v = Vocabulary::build(&c, 1).unwrap();
        let m = CatVrnn::new(ModelConfig { max_len: 7, ..ModelConfig::tiny(v.len(), 1) }, seed).unwrap();
        prop_assert!(corpus_perplexity(&m, &s, &v, seed).unwrap() >= 1.0);
    }
}

#[test]
fn checkpoint_file_roundtrip_preserves_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let c = LabeledCorpus::new(vec![LabeledSentence::from_text("x y z", 0), LabeledSentence::from_text("u v", 1)], 2, "c").unwrap();
    let v = Vocabulary::build(&c, 1).unwrap();
    let m = CatVrnn::new(ModelConfig::tiny(v.len(), 2), 4).unwrap();
    let ckpt = Checkpoint {
        config: m.config().clone(),
        params: m.params().clone(),
        adam: None,
        rng: catvrnn::rng::Rng::new(1).state(),
        epoch: 0,
        vocab: Some(v.clone()),
        meta: serde_json::json!({"seed": 4}),
    };
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let m2 = CatVrnn::from_parts(back.config, back.params).unwrap();
    let batch = encode_batch(c.sentences(), &v, 5).unwrap();
    assert_eq!(
        catvrnn::evaluation::perplexity(&m, &batch, 2).unwrap().to_bits(),
        catvrnn::evaluation::perplexity(&m2, &batch, 2).unwrap().to_bits()
    );
    assert_eq!(back.vocab.unwrap().digest(), v.digest());
}

/// Labels that are independent of the text cannot be predicted: a classifier
/// trained on shuffled labels scores at chance on held-out text whose labels
/// are shuffled too, while the same recipe on true labels is near perfect.
#[test]
fn shuffled_labels_give_chance_accuracy() {
    use rand::seq::SliceRandom;
    let mut rng = common::rng(12);
    let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<LabeledSentence> {
        (0..n)
            .map(|i| {
                let k = i % 2;
                let own: Vec<String> = (0..5).map(|_| format!("c{k}w{}", rng.gen_range(0..30))).collect();
                LabeledSentence::new(own, k)
            })
            .collect()
    };
    let shuffle = |rng: &mut rand_chacha::ChaCha8Rng, s: &[LabeledSentence]| -> Vec<LabeledSentence> {
        let mut labels: Vec<usize> = s.iter().map(|x| x.category).collect();
        labels.shuffle(rng);
        s.iter().zip(labels).map(|(x, k)| LabeledSentence::new(x.tokens.clone(), k)).collect()
    };
    let train = make(&mut rng, 400);
    let test = make(&mut rng, 400);
    let cfg = CnnConfig { embed_dim: 12, feature_maps: 8, epochs: 6, lr: 0.01, max_len: 10, ..CnnConfig::default() };

    let honest = EvalClassifier::train(&LabeledCorpus::new(train.clone(), 2, "t").unwrap(), cfg.clone(), 3).unwrap();
    let acc = category_accuracy(&test, &honest).unwrap();
    assert!(acc > 0.95, "true-label classifier {acc}");

    let noisy_train = shuffle(&mut rng, &train);
    let noisy_test = shuffle(&mut rng, &test);
    let noisy = EvalClassifier::train(&LabeledCorpus::new(noisy_train, 2, "s").unwrap(), cfg, 3).unwrap();
    assert_eq!(noisy.num_categories(), 2);
    let acc = category_accuracy(&noisy_test, &noisy).unwrap();
    // Binomial(400, 0.5) stays inside 0.5 +- 0.1 with probability above 0.9999.
    assert!((acc - 0.5).abs() < 0.1, "shuffled-label accuracy {acc}");
}
