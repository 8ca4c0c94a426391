//! Encodes text with the bundled BPE vocabulary and expands a word into its
//! surface variants.
//!
//! ```bash
//! cargo run -p toxprune --example tokenize -- "you are such a jerk"
//! ```

use toxprune::{data_dir, SurfaceVariants, Vocabulary};

fn main() -> toxprune::Result<()> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "that movie was great".to_string());
    let dir = data_dir();
    let vocab = Vocabulary::load(dir.join("vocab.json"), dir.join("merges.txt"))?;
    println!(
        "vocabulary: {} tokens, fingerprint {}",
        vocab.len(),
        &vocab.fingerprint()[..16]
    );

    let ids = vocab.encode(&text);
    let pieces: Vec<&str> = ids
        .iter()
        .map(|&id| vocab.token(id).unwrap_or("?"))
        .collect();
    println!("text:    {text:?}");
    println!("ids:     {ids:?}");
    println!("pieces:  {pieces:?}");
    println!("decoded: {:?}", vocab.decode(&ids)?);

    for word in text.split_whitespace() {
        let (symbols, ranks) = vocab.merge_trace(word);
        println!("  {word:>12} -> {symbols:?} via merge ranks {ranks:?}");
    }

    let expansion = vocab.expand_words(&["jerk", "idiot"], SurfaceVariants::default())?;
    for entry in &expansion.entries {
        let variants: Vec<Vec<&str>> = entry
            .variants
            .iter()
            .map(|v| v.iter().map(|&id| vocab.token(id).unwrap_or("?")).collect())
            .collect();
        println!("variants of {:?}: {variants:?}", entry.word);
    }
    Ok(())
}
