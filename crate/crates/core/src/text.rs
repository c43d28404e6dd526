//! Word-level tokenisation shared by the class-text encoder and corpus chunking.

/// Byte ranges of the tokens in `text`.
///
/// A token is a run of alphanumeric characters, except that CJK ideographs and every
/// other non-space character stand alone.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut run: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        let word_char = ch.is_alphanumeric() && !is_cjk(ch);
        if word_char {
            run.get_or_insert(i);
            continue;
        }
        if let Some(start) = run.take() {
            spans.push((start, i));
        }
        if !ch.is_whitespace() {
            spans.push((i, i + ch.len_utf8()));
        }
    }
    if let Some(start) = run {
        spans.push((start, text.len()));
    }
    spans
}

pub fn tokens(text: &str) -> impl Iterator<Item = &str> + '_ {
    token_spans(text).into_iter().map(move |(a, b)| &text[a..b])
}

fn is_cjk(ch: char) -> bool {
    matches!(ch as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F | 0x3040..=0x30FF | 0xAC00..=0xD7AF)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
