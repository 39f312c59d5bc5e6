//! Library-level walk through the toy-LM pipeline: train the LM, fit an SAE
//! on its hook-layer activations, select the protected subspace, then compare
//! vanilla, clamped and amplified decoding.
//!
//! ```sh
//! cargo run --release -p scope-core --example toy_pipeline
//! ```

use scope_core::evalmetrics::levenshtein_similarity;
use scope_core::intervene::{ResidualHook, SaeHook};
use scope_core::sae::{train_with_history, TrainConfig};
use scope_core::toylm::{
    build_corpus, decode_greedy, extract_activations, labeled_windows, sample_passages, train_toy_lm_with,
    CorpusConfig, LmTrainConfig, ToyLm, ToyLmConfig,
};
use scope_core::{score_report, select_top_n, InterventionConfig};

const TAU: f64 = 0.5;

fn mean_similarity(lm: &ToyLm, prompts: &[(String, String)], hook: Option<&dyn ResidualHook>) -> f64 {
    let total: f64 = prompts
        .iter()
        .map(|(prompt, reference)| {
            let generated = decode_greedy(lm, prompt, reference.chars().count(), hook).expect("decode");
            levenshtein_similarity(&generated, reference)
        })
        .sum();
    total / prompts.len() as f64
}

fn main() {
    let passages = sample_passages();
    let corpus = build_corpus(&passages, &CorpusConfig::default()).expect("corpus");
    let (lm, report) = train_toy_lm_with(&corpus, &passages, &ToyLmConfig::default(), &LmTrainConfig::default())
        .expect("toy LM memorizes");
    println!("memorization per passage: {:.3?}", report.similarities);

    let samples = labeled_windows(&passages, 64, 200, 1).expect("windows");
    let dataset = extract_activations(&lm, &samples).expect("activations");
    let config = TrainConfig { lambda: 1.0, learning_rate: 1e-4, epochs: 30, ..TrainConfig::default() };
    let (sae, history) = train_with_history(&dataset, 512, TAU, &config).expect("sae");
    println!("sae loss {:.2} -> {:.2}", history.initial_loss, history.final_loss());

    let scores = score_report(&sae.pooled_codes(&dataset).expect("codes")).expect("scores");
    let spec = select_top_n(&scores, 64, TAU).expect("subspace");

    let prompts: Vec<(String, String)> = passages
        .iter()
        .flat_map(|p| {
            let chars: Vec<char> = p.chars().collect();
            [60, 100, 140].map(|cut| (chars[..cut].iter().collect(), chars[cut..cut + 60].iter().collect()))
        })
        .collect();
    println!("vanilla   {:.3}", mean_similarity(&lm, &prompts, None));
    let clamp = InterventionConfig::clamp(spec.clone(), TAU);
    let hook = SaeHook::new(&sae, &clamp).expect("hook");
    println!("clamp     {:.3}", mean_similarity(&lm, &prompts, Some(&hook)));
    for alpha in [1.2, 1.5, 2.0] {
        let amplify = InterventionConfig::amplify(spec.clone(), alpha);
        let hook = SaeHook::new(&sae, &amplify).expect("hook");
        println!("amplify {alpha:.1} {:.3}", mean_similarity(&lm, &prompts, Some(&hook)));
    }
}
