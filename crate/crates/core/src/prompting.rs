//! Transfer prompt layout.
//!
//! ```text
//! Neutral text: {N(t1)}
//! Styled text: {t1}
//!
//! Neutral text: {N(t2)}
//! Styled text: {t2}
//! ```
//!
//! One newline inside a pair, a blank line between pairs, no trailing
//! newline. The zero-shot prompt is the final pair alone. Target spans are
//! computed from the lengths of the pieces, never by searching the text,
//! because documents may themselves contain the markers.

use serde::{Deserialize, Serialize};

use crate::model::{ByteSpan, NeutralizedText};

pub const LAYOUT_VERSION: &str = "osst-layout-v1";

const NEUTRAL_MARKER: &str = "Neutral text: ";
const STYLED_MARKER: &str = "\nStyled text: ";
const PAIR_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPrompt {
    pub full_text: String,
    pub target_span: ByteSpan,
    pub layout_version: String,
}

impl TransferPrompt {
    pub fn target_text(&self) -> &str {
        &self.full_text[self.target_span.start..self.target_span.end]
    }
}

fn push_pair(buf: &mut String, text: &NeutralizedText) -> ByteSpan {
    buf.push_str(NEUTRAL_MARKER);
    buf.push_str(text.neutral_text());
    buf.push_str(STYLED_MARKER);
    let start = buf.len();
    buf.push_str(text.text());
    ByteSpan::new(start, buf.len())
}

/// Prompt with `example` as the in-context pair and `target` as the pair to score.
pub fn build_one_shot(example: &NeutralizedText, target: &NeutralizedText) -> TransferPrompt {
    let mut full_text = String::with_capacity(
        2 * (NEUTRAL_MARKER.len() + STYLED_MARKER.len())
            + PAIR_SEPARATOR.len()
            + example.text().len()
            + example.neutral_text().len()
            + target.text().len()
            + target.neutral_text().len(),
    );
    push_pair(&mut full_text, example);
    full_text.push_str(PAIR_SEPARATOR);
    let target_span = push_pair(&mut full_text, target);
    TransferPrompt {
        full_text,
        target_span,
        layout_version: LAYOUT_VERSION.to_string(),
    }
}

/// Prompt with the target pair only.
pub fn build_zero_shot(target: &NeutralizedText) -> TransferPrompt {
    let mut full_text = String::new();
    let target_span = push_pair(&mut full_text, target);
    TransferPrompt {
        full_text,
        target_span,
        layout_version: LAYOUT_VERSION.to_string(),
    }
}
