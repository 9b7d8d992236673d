//! Sample-quality metrics: likelihood of held-out data, BLEU and its
//! backward variant, multiset Jaccard over n-grams, and a Fréchet distance
//! between Gaussians fitted to projected n-gram features.
//!
//! Sentences are token-id sequences.

mod frechet;
mod ngram;

pub use frechet::{frechet_feature_distance, FeatureGaussian, DEFAULT_FEATURE_DIM};
pub use ngram::{backward_bleu_n, bleu_n, ms_jaccard, ms_jaccard_n, NGramMultiset, BLEU_EPS};

use crate::corpus::TokenizedCorpus;
use crate::error::{Error, Result};
use crate::models::RecurrentLM;

const NLL_CHUNK: usize = 512;

/// Mean over sentences of `−ln q(s)`, each sentence scored from the start
/// token with no prefix. In nats.
pub fn nll(m: &RecurrentLM, corpus: &TokenizedCorpus) -> Result<f64> {
    nll_sentences(m, corpus.sentences())
}

pub fn nll_sentences(m: &RecurrentLM, sentences: &[Vec<usize>]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = 0.0;
    for chunk in sentences.chunks(NLL_CHUNK) {
        let pairs: Vec<(&[usize], &[usize])> = chunk.iter().map(|s| (&[][..], s.as_slice())).collect();
        total -= m.score_values(&pairs)?.iter().sum::<f64>();
    }
    Ok(total / sentences.len() as f64)
}
