//! Small generated datasets that exercise the decoders without a real model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{encode_bytes, DatasetItem};

/// Copy task: random lowercase prompt, reference = the prompt reversed.
pub fn copy_task(n: usize, prompt_len: usize, seed: u64) -> Vec<DatasetItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let text: String = (0..prompt_len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            let reversed: String = text.chars().rev().collect();
            DatasetItem {
                id: format!("copy-{i:03}"),
                prompt: encode_bytes(&text),
                reference: encode_bytes(&reversed),
            }
        })
        .collect()
}

const SENTENCES: &[&str] = &[
    "the cat sat on the mat and the dog sat on the rug",
    "the sun is hot and the sea is blue and the sand is warm",
    "a bird sat in the tree and sang to the sun",
    "the man ran to the car and the car ran out of gas",
    "she said that the tea was hot and the cake was sweet",
    "the rain fell on the town and the town was wet",
    "he sat at the desk and read the news to the cat",
    "the dog ran on the sand and the cat sat in the sun",
];

/// Text completion: a sentence split at a word boundary into prompt and reference.
pub fn text_task(n: usize, seed: u64) -> Vec<DatasetItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let sentence = SENTENCES.choose(&mut rng).expect("non-empty corpus");
            let words: Vec<&str> = sentence.split(' ').collect();
            let cut = rng.gen_range(2..words.len() - 1);
            let prompt = words[..cut].join(" ") + " ";
            let reference = words[cut..].join(" ");
            DatasetItem {
                id: format!("text-{i:03}"),
                prompt: encode_bytes(&prompt),
                reference: encode_bytes(&reference),
            }
        })
        .collect()
}
