use crate::error::Result;
use crate::tinylm::Tokenizer;

/// String form of the correctness rule: after stripping leading whitespace,
/// the continuation must be a prefix of the object, or start with the whole
/// object followed by whitespace or punctuation. Case-sensitive.
pub fn is_correct_text(continuation: &str, object: &str) -> bool {
    let c = continuation.trim_start();
    let o = object.trim_start();
    if c.is_empty() {
        return o.is_empty();
    }
    if o.starts_with(c) {
        return true;
    }
    match c.strip_prefix(o) {
        Some(rest) if !o.is_empty() => rest
            .chars()
            .next()
            .is_some_and(|ch| ch.is_whitespace() || ch.is_ascii_punctuation()),
        _ => false,
    }
}

/// Checks a greedy 2-token continuation against the expected object.
pub fn is_correct(predicted: [u32; 2], object: &str, tokenizer: &Tokenizer) -> Result<bool> {
    let text = tokenizer.decode(&predicted)?;
    Ok(is_correct_text(&text, object))
}
