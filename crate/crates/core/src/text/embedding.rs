use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Pre-trained word vectors keyed by token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            vocab: HashMap::new(),
            tokens: Vec::new(),
            vectors: Vec::new(),
            dim,
        }
    }

    /// Adds a vector; a token already present keeps its first vector.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::shape("EmbeddingTable::insert", self.dim, vector.len()));
        }
        if self.vocab.contains_key(token) {
            return Ok(false);
        }
        self.vocab.insert(token.to_owned(), self.tokens.len());
        self.tokens.push(token.to_owned());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vocab
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Writes the single-space separated text format read by
    /// [`load_embedding_table`].
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(w, "{tok}")?;
            for v in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `token v1 ... vd` lines. Every line must carry the same `d`.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let reader = BufReader::new(File::open(path)?);
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut table: Option<EmbeddingTable> = None;
    let mut buf = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line has a field");
        buf.clear();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| err(lineno, format!("cannot parse {f:?} as a real")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {f:?}")));
            }
            buf.push(v);
        }
        if buf.is_empty() {
            return Err(err(lineno, format!("token {token:?} has no vector")));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(buf.len()));
        if buf.len() != t.dim {
            return Err(err(
                lineno,
                format!("inconsistent dimension: expected {}, found {}", t.dim, buf.len()),
            ));
        }
        t.insert(token, &buf)?;
    }
    table.ok_or_else(|| err(0, "empty vocabulary".into()))
}

/// `length x d_w` matrix of token vectors. Unknown tokens and padding rows
/// are zero; tokens past `length` are dropped.
pub fn encode_words<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable, length: usize) -> Tensor2 {
    let mut m = Tensor2::zeros(length, table.dim());
    for (i, tok) in tokens.iter().take(length).enumerate() {
        if let Some(v) = table.get(tok.as_ref()) {
            m.row_mut(i).copy_from_slice(v);
        }
    }
    m
}
