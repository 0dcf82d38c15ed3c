use std::ops::Range;

use super::Transcript;

/// A sentence as a token range plus the matching byte range of the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub tokens: Range<usize>,
    /// Byte range into [`Transcript::text`].
    pub chars: Range<usize>,
    /// Inside a `<think>` … `</think>` block.
    pub in_think: bool,
}

impl SentenceSpan {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";

/// Lower-cased words whose trailing period never ends a sentence.
const ABBREVIATIONS: [&str; 3] = ["e.g.", "i.e.", "vs."];

/// Splits a transcript into sentences.
///
/// A sentence ends after a token whose text ends in `.`, `!`, `?` or a
/// newline, provided the next token starts with whitespace or an uppercase
/// letter (or the token itself carries trailing spaces). Decimal points and
/// the abbreviations e.g./i.e./vs. never split. `<think>` and `</think>`
/// tokens close any open sentence and toggle the think region without
/// belonging to a sentence. Whitespace-only tokens between sentences belong
/// to none.
pub fn segment_sentences(transcript: &Transcript) -> Vec<SentenceSpan> {
    let tokens = &transcript.tokens;
    let offsets = transcript.token_offsets();
    let mut spans = Vec::new();
    let mut in_think = false;
    let mut open: Option<(usize, bool)> = None;

    let close = |spans: &mut Vec<SentenceSpan>, start: usize, end: usize, think: bool| {
        spans.push(SentenceSpan {
            tokens: start..end,
            chars: offsets[start]..offsets[end],
            in_think: think,
        });
    };

    for (i, tok) in tokens.iter().enumerate() {
        let trimmed = tok.text.trim();
        if trimmed == THINK_OPEN || trimmed == THINK_CLOSE {
            if let Some((start, think)) = open.take() {
                close(&mut spans, start, i, think);
            }
            in_think = trimmed == THINK_OPEN;
            continue;
        }
        let (start, think) = match open {
            Some(o) => o,
            None if tok.is_whitespace() => continue,
            None => {
                open = Some((i, in_think));
                (i, in_think)
            }
        };
        let sentence_so_far = &transcript.text[offsets[start]..offsets[i + 1]];
        if ends_sentence(&tok.text, tokens.get(i + 1).map(|t| t.text.as_str()), sentence_so_far) {
            close(&mut spans, start, i + 1, think);
            open = None;
        }
    }
    if let Some((start, think)) = open {
        close(&mut spans, start, tokens.len(), think);
    }
    spans
}

fn ends_sentence(text: &str, next: Option<&str>, sentence_so_far: &str) -> bool {
    let core = text.trim_end_matches([' ', '\t']);
    let trailing_space = core.len() < text.len();
    let Some(last) = core.chars().last() else {
        return false;
    };
    if !matches!(last, '.' | '!' | '?' | '\n') {
        return false;
    }
    if last == '.' {
        let word = sentence_so_far
            .trim_end()
            .rsplit(char::is_whitespace)
            .next()
            .unwrap_or("")
            .to_lowercase();
        if ABBREVIATIONS.iter().any(|a| word.ends_with(a)) {
            return false;
        }
    }
    if trailing_space {
        return true;
    }
    match next.and_then(|n| n.chars().next()) {
        None => true,
        Some(c) => c.is_whitespace() || c.is_uppercase(),
    }
}

/// First token of the span with leading whitespace removed, for reporting.
pub fn beginning_token<'a>(span: &SentenceSpan, transcript: &'a Transcript) -> &'a str {
    beginning_token_raw(span, transcript).trim_start()
}

/// First token of the span exactly as generated.
pub fn beginning_token_raw<'a>(span: &SentenceSpan, transcript: &'a Transcript) -> &'a str {
    &transcript.tokens[span.tokens.start].text
}
