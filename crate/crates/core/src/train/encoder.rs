use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind};
use crate::tensor::Tensor2;
use crate::text::{encode_chars, encode_words, tokenize, Alphabet, EmbeddingTable, QueryAdRecord};

/// Turns records into the fixed-shape input pair a model expects.
#[derive(Clone, Debug)]
pub enum Encoder {
    Char {
        alphabet: Alphabet,
        query_len: usize,
        ad_len: usize,
    },
    Word {
        table: EmbeddingTable,
        query_len: usize,
        ad_len: usize,
    },
}

impl Encoder {
    pub fn chars(config: &ModelConfig, alphabet: Alphabet) -> Result<Self> {
        if config.kind != ModelKind::Char {
            return Err(Error::KindMismatch {
                model: config.kind.as_str(),
                input: ModelKind::Char.as_str(),
            });
        }
        if alphabet.len() != config.input_channels {
            return Err(Error::Config(vec![format!(
                "alphabet has {} symbols but input_channels = {}",
                alphabet.len(),
                config.input_channels
            )]));
        }
        Ok(Encoder::Char {
            alphabet,
            query_len: config.query_len,
            ad_len: config.ad_len,
        })
    }

    pub fn words(config: &ModelConfig, table: EmbeddingTable) -> Result<Self> {
        if config.kind != ModelKind::Word {
            return Err(Error::KindMismatch {
                model: config.kind.as_str(),
                input: ModelKind::Word.as_str(),
            });
        }
        if table.dim() != config.input_channels {
            return Err(Error::Config(vec![format!(
                "embeddings have dimension {} but input_channels = {}",
                table.dim(),
                config.input_channels
            )]));
        }
        Ok(Encoder::Word {
            table,
            query_len: config.query_len,
            ad_len: config.ad_len,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Encoder::Char { .. } => ModelKind::Char,
            Encoder::Word { .. } => ModelKind::Word,
        }
    }

    pub fn encode_query(&self, record: &QueryAdRecord) -> Tensor2 {
        let text = record.query_text();
        match self {
            Encoder::Char {
                alphabet, query_len, ..
            } => encode_chars(&text, *query_len, alphabet),
            Encoder::Word { table, query_len, .. } => encode_words(&tokenize(&text), table, *query_len),
        }
    }

    pub fn encode_ad(&self, record: &QueryAdRecord) -> Tensor2 {
        let text = record.ad_text();
        match self {
            Encoder::Char { alphabet, ad_len, .. } => encode_chars(&text, *ad_len, alphabet),
            Encoder::Word { table, ad_len, .. } => encode_words(&tokenize(&text), table, *ad_len),
        }
    }

    pub fn encode(&self, record: &QueryAdRecord) -> (Tensor2, Tensor2) {
        (self.encode_query(record), self.encode_ad(record))
    }
}
