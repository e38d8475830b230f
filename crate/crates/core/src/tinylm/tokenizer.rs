//! Word-level tokenizer: one token per whitespace-separated word.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    /// `tokens[i]` gets id `i`. The two special tokens must be present.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::Invalid(format!(
                    "token {t:?} is empty or contains whitespace"
                )));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate token {t:?}")));
            }
        }
        for special in [BOS, EOS] {
            if !index.contains_key(special) {
                return Err(Error::Invalid(format!("missing special token {special}")));
            }
        }
        Ok(Tokenizer { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bos(&self) -> u32 {
        self.index[BOS]
    }

    pub fn eos(&self) -> u32 {
        self.index[EOS]
    }

    pub fn id(&self, word: &str) -> Result<u32> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::TokenOutOfVocab {
                id,
                vocab: self.tokens.len(),
            })
    }

    pub fn encode_words(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Begin-of-sequence marker followed by the words of `text`.
    pub fn encode_prompt(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = vec![self.bos()];
        ids.extend(self.encode_words(text)?);
        Ok(ids)
    }

    /// A full corpus line: marker, words, end marker.
    pub fn encode_line(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = self.encode_prompt(text)?;
        ids.push(self.eos());
        Ok(ids)
    }

    /// Words joined by single spaces; special tokens render literally.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let words: Result<Vec<&str>> = ids.iter().map(|&i| self.token(i)).collect();
        Ok(words?.join(" "))
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, u32> = self
            .tokens
            .iter()
            .map(|t| (t.as_str(), self.index[t]))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, u32> = serde_json::from_str(text)?;
        let mut tokens = vec![None; map.len()];
        for (t, id) in map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| Error::Invalid(format!("token id {id} is not dense")))?;
            if slot.replace(t).is_some() {
                return Err(Error::Invalid(format!("token id {id} assigned twice")));
            }
        }
        Tokenizer::new(tokens.into_iter().map(|t| t.expect("dense ids")).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok() -> Tokenizer {
        Tokenizer::new(
            [
                BOS, EOS, "the", "ceo", "of", "Nvida", "is", "Jensen", "Huang",
            ]
            .map(String::from)
            .to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn encode_decode() {
        let t = tok();
        let ids = t.encode_prompt("the ceo of Nvida is").unwrap();
        assert_eq!(ids, vec![0, 2, 3, 4, 5, 6]);
        assert_eq!(t.decode(&[7, 8]).unwrap(), "Jensen Huang");
        assert!(matches!(t.encode_words("the cfo"), Err(Error::UnknownWord(w)) if w == "cfo"));
    }

    #[test]
    fn json_round_trip() {
        let t = tok();
        assert_eq!(Tokenizer::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn rejects_duplicates_and_missing_specials() {
        assert!(Tokenizer::new(vec![BOS.into(), EOS.into(), "a".into(), "a".into()]).is_err());
        assert!(Tokenizer::new(vec!["a".into()]).is_err());
    }
}
