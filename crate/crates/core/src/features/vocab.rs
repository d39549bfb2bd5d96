//! Training-split vocabulary and embedding lookup.
//!
//! Embedding files are plain text, one token per line followed by its
//! space-separated components.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::tokenize::{PAD, UNK};
use crate::tensor::Tensor;

pub const EMBEDDING_DIM: usize = 300;
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Tensor,
    missing: Vec<String>,
}

impl Vocabulary {
    /// Indexes every distinct training token (sorted, after `pad` and `unk`)
    /// and pulls its vector from `embeddings`. Tokens absent from the file
    /// get a zero vector and are reported by [`Vocabulary::missing`].
    pub fn build<R: BufRead>(train: &[Vec<String>], embeddings: R, dim: usize) -> Result<Self> {
        let distinct: BTreeSet<&str> = train
            .iter()
            .flatten()
            .map(String::as_str)
            .filter(|t| *t != PAD && *t != UNK)
            .collect();
        let mut tokens = vec![PAD.to_string(), UNK.to_string()];
        tokens.extend(distinct.into_iter().map(str::to_string));
        let index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

        let mut data = vec![0.0; tokens.len() * dim];
        let mut found = vec![false; tokens.len()];
        found[PAD_INDEX] = true;
        found[UNK_INDEX] = true;
        for (lineno, line) in embeddings.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(format!("embedding line {}: {e}", lineno + 1)))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if values.len() != dim {
                return Err(Error::Format(format!(
                    "embedding line {}: expected {dim} values for {token:?}, found {}",
                    lineno + 1,
                    values.len()
                )));
            }
            let Some(&i) = index.get(token) else { continue };
            if i == PAD_INDEX {
                continue;
            }
            for (j, v) in values.iter().enumerate() {
                data[i * dim + j] = v.parse().map_err(|_| {
                    Error::Format(format!("embedding line {}: {v:?} is not a number", lineno + 1))
                })?;
            }
            found[i] = true;
        }
        let missing = tokens
            .iter()
            .zip(&found)
            .filter(|(_, f)| !**f)
            .map(|(t, _)| t.clone())
            .collect();
        let embeddings = Tensor::matrix(tokens.len(), dim, data)?;
        Ok(Self { tokens, index, embeddings, missing })
    }

    pub fn build_from_path(train: &[Vec<String>], path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::build(train, BufReader::new(file), dim)
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

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    /// Training tokens that had no pretrained vector.
    pub fn missing(&self) -> &[String] {
        &self.missing
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Index of `token`, or of `unk` when the token was not seen in training.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    /// Embedding rows for a token sequence, len × dim.
    pub fn embed(&self, tokens: &[String]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(Error::Contract("cannot embed an empty token list".into()));
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim());
        for t in tokens {
            data.extend_from_slice(self.embeddings.row(self.lookup(t)));
        }
        Tensor::matrix(tokens.len(), self.dim(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tokenize::tokenize;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn vocabulary_from_train_tokens_plus_reserved() {
        let file = "a 1 2\nb 3 4\nc 5 6\nzzz 7 8\n";
        let v = Vocabulary::build(&corpus(&["a b", "b c"]), file.as_bytes(), 2).unwrap();
        assert_eq!(v.tokens(), &["pad", "unk", "a", "b", "c"]);
        assert!(v.missing().is_empty());
        assert!(!v.contains("zzz"));
        let e = v.embed(&["c".into(), "nope".into()]).unwrap();
        assert_eq!(e.row(0), &[5.0, 6.0]);
        assert_eq!(e.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn absent_token_gets_zero_vector_and_is_reported() {
        let v = Vocabulary::build(&corpus(&["known stranger"]), "known 1 1\n".as_bytes(), 2).unwrap();
        assert_eq!(v.missing(), &["stranger"]);
        assert_eq!(v.embed(&["stranger".into()]).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = Vocabulary::build(&corpus(&["a"]), "a 1 2 3\n".as_bytes(), 2).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(Vocabulary::build_from_path(&corpus(&["a"]), "/nonexistent/glove.txt", 2).is_err());
    }

    #[test]
    fn oov_lookup_is_unk() {
        let v = Vocabulary::build(&corpus(&["x"]), "".as_bytes(), 3).unwrap();
        assert_eq!(v.lookup("y"), UNK_INDEX);
        assert_eq!(v.lookup("x"), 2);
    }
}
