use crate::text::{fnv1a, tokens};

pub const PAD_TOKEN: u32 = 0;
pub const START_TOKEN: u32 = 1;
pub const END_TOKEN: u32 = 2;
const RESERVED: u32 = 3;

/// Lower-cased words hashed into a fixed vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashTokenizer {
    vocab_size: usize,
}

impl HashTokenizer {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size > RESERVED as usize, "vocabulary too small");
        HashTokenizer { vocab_size }
    }

    /// `[START, words..., END]`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let buckets = self.vocab_size as u64 - RESERVED as u64;
        let mut ids = vec![START_TOKEN];
        ids.extend(tokens(text).map(|w| RESERVED + (fnv1a(w.to_lowercase().as_bytes()) % buckets) as u32));
        ids.push(END_TOKEN);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_and_case_folding() {
        let t = HashTokenizer::new(100);
        let a = t.encode("Raise the Arm");
        assert_eq!(a.len(), 5);
        assert_eq!((a[0], a[4]), (START_TOKEN, END_TOKEN));
        assert_eq!(a, t.encode("raise the arm"));
        assert!(a.iter().all(|&i| (i as usize) < 100));
    }
}
