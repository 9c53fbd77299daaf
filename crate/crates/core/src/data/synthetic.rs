//! Seeded synthetic comment/reply corpora for smoke tests and demos.
//!
//! The label is a deterministic function of trigger-token co-occurrence: a
//! pair is sarcastic exactly when the comment contains [`COMMENT_TRIGGER`]
//! and the reply contains [`REPLY_TRIGGER`]. Negative pairs carry at most
//! one of the two triggers, so the signal is unambiguous and a working model
//! can drive training accuracy toward 1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RawPair, Source};

pub const COMMENT_TRIGGER: &str = "honestly";
pub const REPLY_TRIGGER: &str = "sure";

const FILLERS: [&str; 48] = [
    "the", "a", "this", "that", "day", "game", "movie", "team", "coffee", "weather", "news",
    "thread", "post", "song", "plan", "idea", "book", "show", "city", "train", "pizza", "meeting",
    "update", "phone", "garden", "river", "market", "road", "winter", "summer", "morning",
    "evening", "works", "looks", "feels", "seems", "went", "came", "good", "bad", "fine", "slow",
    "fast", "late", "early", "really", "again", "maybe",
];

/// Sentence length bounds and filler vocabulary size.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticOptions {
    pub min_words: usize,
    pub max_words: usize,
    pub vocab_size: usize,
    pub source: Source,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            min_words: 3,
            max_words: 6,
            vocab_size: FILLERS.len(),
            source: Source::Reddit,
        }
    }
}

impl SyntheticOptions {
    /// Longer sentences and the twitter length convention.
    pub fn twitter_scale() -> Self {
        SyntheticOptions {
            min_words: 8,
            max_words: 30,
            vocab_size: FILLERS.len(),
            source: Source::Twitter,
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, opts: &SyntheticOptions, trigger: Option<&str>) -> String {
    let vocab = &FILLERS[..opts.vocab_size.clamp(1, FILLERS.len())];
    let len = rng.gen_range(opts.min_words..=opts.max_words);
    let mut words: Vec<&str> = (0..len)
        .map(|_| *vocab.choose(rng).expect("vocabulary is non-empty"))
        .collect();
    if let Some(trigger) = trigger {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, trigger);
    }
    words.join(" ")
}

/// Generate `count` pairs, alternating positive and negative so every prefix
/// of the list is close to balanced. Same seed, same corpus.
pub fn synthetic_pairs(count: usize, seed: u64, opts: &SyntheticOptions) -> Vec<RawPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let positive = i % 2 == 0;
        let (comment_trigger, reply_trigger) = if positive {
            (Some(COMMENT_TRIGGER), Some(REPLY_TRIGGER))
        } else {
            // At most one trigger: 0 = neither, 1 = comment only, 2 = reply only.
            match rng.gen_range(0..3u8) {
                1 => (Some(COMMENT_TRIGGER), None),
                2 => (None, Some(REPLY_TRIGGER)),
                _ => (None, None),
            }
        };
        pairs.push(RawPair {
            comment: sentence(&mut rng, opts, comment_trigger),
            reply: sentence(&mut rng, opts, reply_trigger),
            label: u8::from(positive),
            source: opts.source,
        });
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn has_trigger(text: &str, trigger: &str) -> bool {
        text.split_whitespace().any(|w| w == trigger)
    }

    #[test]
    fn labels_follow_trigger_cooccurrence() {
        let pairs = synthetic_pairs(200, 3, &SyntheticOptions::default());
        for p in &pairs {
            let both = has_trigger(&p.comment, COMMENT_TRIGGER) && has_trigger(&p.reply, REPLY_TRIGGER);
            assert_eq!(p.label == 1, both, "{p:?}");
        }
    }

    #[test]
    fn halves_are_balanced_and_seeded() {
        let a = synthetic_pairs(64, 9, &SyntheticOptions::default());
        let b = synthetic_pairs(64, 9, &SyntheticOptions::default());
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|p| p.label == 1).count(), 32);
        let c = synthetic_pairs(64, 10, &SyntheticOptions::default());
        assert_ne!(a, c);
    }

    #[test]
    fn twitter_scale_respects_length_filter() {
        let pairs = synthetic_pairs(100, 4, &SyntheticOptions::twitter_scale());
        let filtered = super::super::filter_by_length(pairs, 40);
        assert_eq!(filtered.len(), 100);
    }
}
