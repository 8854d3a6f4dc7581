//! Character-level n-gram model with add-one smoothing.
//!
//! `P(c | h) = (N(h, c) + 1) / (N(h) + V)` where `h` is the previous
//! `order - 1` characters (left-padded with a start symbol), `N` counts come
//! from the training texts and `V` is the size of the observed alphabet plus
//! one reserved unknown symbol. The start symbol only ever appears in
//! contexts, so the distribution over the `V` outcomes sums to one.
//!
//! With `in_context` enabled, n-grams seen earlier in the scored prompt are
//! added to the training counts (weighted by `context_weight`) before each
//! prediction. This is what lets an offline model pick up a one-shot
//! example's style; the static model only ever sees `order - 1` characters.

use std::collections::{BTreeSet, HashMap};

use serde_json::json;

use super::{char_tokens, select_span, BackendDescriptor, EchoScoreRequest, LanguageModel};
use crate::error::{BackendError, Error, Result};
use crate::model::{content_hash, TokenLogprob};

pub const MAX_ORDER: usize = 5;

type Symbol = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramOptions {
    pub order: usize,
    pub in_context: bool,
    pub context_weight: u32,
}

impl NgramOptions {
    pub fn static_model(order: usize) -> Self {
        NgramOptions {
            order,
            in_context: false,
            context_weight: 1,
        }
    }

    pub fn in_context(order: usize, context_weight: u32) -> Self {
        NgramOptions {
            order,
            in_context: true,
            context_weight,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    descriptor: BackendDescriptor,
    options: NgramOptions,
    alphabet: HashMap<char, Symbol>,
    unk: Symbol,
    bos: Symbol,
    /// Keyed by the packed `(context, next)` symbols.
    ngram_counts: HashMap<u128, u64>,
    /// Keyed by the packed context.
    context_totals: HashMap<u128, u64>,
}

/// Trains a static character n-gram model.
pub fn train_offline<S: AsRef<str>>(corpus_texts: &[S], order: usize) -> Result<NgramModel> {
    NgramModel::train(corpus_texts, NgramOptions::static_model(order))
}

fn pack(symbols: &[Symbol]) -> u128 {
    symbols
        .iter()
        .fold(0u128, |acc, &s| (acc << 16) | u128::from(s))
}

impl NgramModel {
    pub fn train<S: AsRef<str>>(corpus_texts: &[S], options: NgramOptions) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&options.order) {
            return Err(Error::invalid(format!(
                "n-gram order must be between 1 and {MAX_ORDER}, got {}",
                options.order
            )));
        }
        if corpus_texts.iter().all(|t| t.as_ref().is_empty()) {
            return Err(Error::invalid("cannot train an n-gram model on an empty corpus"));
        }
        let chars: BTreeSet<char> = corpus_texts.iter().flat_map(|t| t.as_ref().chars()).collect();
        // two ids are reserved for the unknown and start symbols
        if chars.len() > usize::from(Symbol::MAX) - 2 {
            return Err(Error::invalid("alphabet too large for the n-gram model"));
        }
        let alphabet: HashMap<char, Symbol> = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as Symbol))
            .collect();
        let unk = alphabet.len() as Symbol;
        let bos = unk + 1;

        let mut model = NgramModel {
            descriptor: BackendDescriptor::offline("pending"),
            options,
            alphabet,
            unk,
            bos,
            ngram_counts: HashMap::new(),
            context_totals: HashMap::new(),
        };
        for text in corpus_texts {
            let seq = model.encode(text.as_ref());
            for window in seq.windows(options.order) {
                *model.ngram_counts.entry(pack(window)).or_default() += 1;
                *model
                    .context_totals
                    .entry(pack(&window[..options.order - 1]))
                    .or_default() += 1;
            }
        }

        let corpus_digest = content_hash(
            &serde_json::to_string(&corpus_texts.iter().map(|t| t.as_ref()).collect::<Vec<_>>())
                .expect("strings serialize"),
        );
        let mut descriptor =
            BackendDescriptor::offline(format!("char-ngram-o{}-{}", options.order, &corpus_digest[..16]))
                .with_param("order", json!(options.order));
        if options.in_context {
            descriptor = descriptor
                .with_param("in_context", json!(true))
                .with_param("context_weight", json!(options.context_weight));
        }
        model.descriptor = descriptor;
        Ok(model)
    }

    pub fn options(&self) -> NgramOptions {
        self.options
    }

    /// Alphabet size plus the unknown symbol.
    pub fn vocab_size(&self) -> usize {
        self.alphabet.len() + 1
    }

    fn symbol(&self, c: char) -> Symbol {
        self.alphabet.get(&c).copied().unwrap_or(self.unk)
    }

    fn encode(&self, text: &str) -> Vec<Symbol> {
        let mut seq = vec![self.bos; self.options.order - 1];
        seq.extend(text.chars().map(|c| self.symbol(c)));
        seq
    }

    /// Static-count probability of `next` after `context`; only the last
    /// `order - 1` characters of `context` matter, shorter contexts are padded.
    pub fn probability(&self, context: &str, next: char) -> f64 {
        let h = self.options.order - 1;
        let ctx_syms: Vec<Symbol> = context.chars().map(|c| self.symbol(c)).collect();
        let mut window = vec![self.bos; h.saturating_sub(ctx_syms.len())];
        window.extend_from_slice(&ctx_syms[ctx_syms.len().saturating_sub(h)..]);
        let ctx_key = pack(&window);
        window.push(self.symbol(next));
        let n = self.ngram_counts.get(&pack(&window)).copied().unwrap_or(0);
        let total = self.context_totals.get(&ctx_key).copied().unwrap_or(0);
        (n as f64 + 1.0) / (total as f64 + self.vocab_size() as f64)
    }

    /// Log-probability of every character of `text`, left to right.
    pub fn score_all(&self, text: &str) -> Vec<TokenLogprob> {
        let order = self.options.order;
        let v = self.vocab_size() as f64;
        let w = u64::from(self.options.context_weight);
        let seq = self.encode(text);
        let mut seen_ngrams: HashMap<u128, u64> = HashMap::new();
        let mut seen_contexts: HashMap<u128, u64> = HashMap::new();

        char_tokens(text)
            .zip(seq.windows(order))
            .map(|((offset, c), window)| {
                let key = pack(window);
                let ctx_key = pack(&window[..order - 1]);
                let mut n = self.ngram_counts.get(&key).copied().unwrap_or(0);
                let mut total = self.context_totals.get(&ctx_key).copied().unwrap_or(0);
                if self.options.in_context {
                    n += w * seen_ngrams.get(&key).copied().unwrap_or(0);
                    total += w * seen_contexts.get(&ctx_key).copied().unwrap_or(0);
                    *seen_ngrams.entry(key).or_default() += 1;
                    *seen_contexts.entry(ctx_key).or_default() += 1;
                }
                TokenLogprob {
                    token_text: c.to_string(),
                    logprob: ((n as f64 + 1.0) / (total as f64 + v)).ln(),
                    byte_offset: offset,
                }
            })
            .collect()
    }
}

impl LanguageModel for NgramModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn echo_score(&self, req: &EchoScoreRequest) -> Result<Vec<TokenLogprob>, BackendError> {
        select_span(self.score_all(req.full_prompt()), req.score_span())
    }

    fn generate(&self, _instruction_prompt: &str) -> Result<String, BackendError> {
        Err(BackendError::Unsupported {
            operation: "generate".into(),
            model_id: self.descriptor.model_id.clone(),
        })
    }
}
