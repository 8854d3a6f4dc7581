use serde_json::json;

use super::{char_tokens, select_span, BackendDescriptor, EchoScoreRequest, LanguageModel};
use crate::error::{BackendError, Error, Result};
use crate::model::TokenLogprob;

/// Context-free model assigning `-ln(vocab_size)` to every character.
#[derive(Debug, Clone)]
pub struct UniformModel {
    descriptor: BackendDescriptor,
    logprob: f64,
}

impl UniformModel {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid("uniform model needs a positive vocabulary size"));
        }
        Ok(UniformModel {
            descriptor: BackendDescriptor::offline(format!("uniform-{vocab_size}"))
                .with_param("vocab_size", json!(vocab_size)),
            logprob: -(vocab_size as f64).ln(),
        })
    }
}

impl LanguageModel for UniformModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn echo_score(&self, req: &EchoScoreRequest) -> Result<Vec<TokenLogprob>, BackendError> {
        let tokens = char_tokens(req.full_prompt())
            .map(|(offset, c)| TokenLogprob {
                token_text: c.to_string(),
                logprob: self.logprob,
                byte_offset: offset,
            })
            .collect();
        select_span(tokens, req.score_span())
    }

    fn generate(&self, _instruction_prompt: &str) -> Result<String, BackendError> {
        Err(BackendError::Unsupported {
            operation: "generate".into(),
            model_id: self.descriptor.model_id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ByteSpan;

    #[test]
    fn three_chars_each_minus_ln4() {
        let m = UniformModel::new(4).unwrap();
        let req = EchoScoreRequest::new("xxabcyy", ByteSpan::new(2, 5)).unwrap();
        let toks = m.echo_score(&req).unwrap();
        assert_eq!(toks.len(), 3);
        for t in &toks {
            assert!((t.logprob + 1.3862943611198906).abs() < 1e-12);
        }
        let joined: String = toks.iter().map(|t| t.token_text.as_str()).collect();
        assert_eq!(joined, "abc");
    }
}
