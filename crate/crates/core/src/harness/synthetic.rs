//! Synthetic query-ad logs with a known click probability per impression.
//!
//! Each query has 1-4 vocabulary words and, sometimes, a brand. Each ad has
//! a five-word title sharing `k` of the query words (the rest filler), a
//! filler description, and a `brand.com › word` display URL. The click probability is
//!
//! ```text
//! sigmoid(bias + w_overlap * k / |query words| + w_brand * brand_match
//!         + w_url * url_match + noise * N(0, 1))
//! ```
//!
//! Title and description lengths do not depend on the overlap.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal, Zipf};

use super::kv::KvFile;
use crate::error::{Error, Result};
use crate::layers::{sigmoid, SeededRng};
use crate::text::{write_dataset, Device, EmbeddingTable, QueryAdRecord};

const TITLE_WORDS: usize = 5;
const DESCRIPTION_WORDS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub brand_count: usize,
    /// Distinct queries; impressions draw from them with a Zipf law.
    pub query_pool: usize,
    pub zipf_exponent: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub brand_rate: f64,
    pub url_match_rate: f64,
    pub bias: f64,
    pub w_overlap: f64,
    pub w_brand: f64,
    pub w_url: f64,
    pub noise: f64,
    /// Logit noise of the simulated external scorer.
    pub external_noise: f64,
    pub embedding_dim: usize,
    /// Coordinates set to 1 in each word vector, the rest 0. Zero gives
    /// dense Gaussian vectors instead.
    pub embedding_active: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab_size: 12,
            brand_count: 8,
            query_pool: 5000,
            zipf_exponent: 1.1,
            train_pairs: 100_000,
            test_pairs: 20_000,
            brand_rate: 0.3,
            url_match_rate: 0.3,
            bias: -4.0,
            w_overlap: 6.0,
            w_brand: 1.5,
            w_url: 1.0,
            noise: 0.3,
            external_noise: 1.0,
            embedding_dim: 32,
            embedding_active: 3,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.vocab_size < TITLE_WORDS + 4 {
            errs.push(format!("vocab_size must be at least {}", TITLE_WORDS + 4));
        }
        if self.brand_count == 0 {
            errs.push("brand_count must be at least 1".into());
        }
        if self.query_pool == 0 {
            errs.push("query_pool must be at least 1".into());
        }
        if self.train_pairs == 0 {
            errs.push("train_pairs must be at least 1".into());
        }
        if !(self.zipf_exponent > 0.0) {
            errs.push("zipf_exponent must be positive".into());
        }
        for (name, v) in [("brand_rate", self.brand_rate), ("url_match_rate", self.url_match_rate)] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, v) in [("noise", self.noise), ("external_noise", self.external_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be a non-negative number"));
            }
        }
        if self.embedding_dim == 0 {
            errs.push("embedding_dim must be at least 1".into());
        }
        if self.embedding_active > self.embedding_dim {
            errs.push(format!(
                "embedding_active {} exceeds embedding_dim {}",
                self.embedding_active, self.embedding_dim
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn from_kv(mut kv: KvFile) -> Result<Self> {
        let d = SyntheticSpec::default();
        let spec = SyntheticSpec {
            vocab_size: kv.get_or("vocab_size", d.vocab_size),
            brand_count: kv.get_or("brand_count", d.brand_count),
            query_pool: kv.get_or("query_pool", d.query_pool),
            zipf_exponent: kv.get_or("zipf_exponent", d.zipf_exponent),
            train_pairs: kv.get_or("train_pairs", d.train_pairs),
            test_pairs: kv.get_or("test_pairs", d.test_pairs),
            brand_rate: kv.get_or("brand_rate", d.brand_rate),
            url_match_rate: kv.get_or("url_match_rate", d.url_match_rate),
            bias: kv.get_or("bias", d.bias),
            w_overlap: kv.get_or("w_overlap", d.w_overlap),
            w_brand: kv.get_or("w_brand", d.w_brand),
            w_url: kv.get_or("w_url", d.w_url),
            noise: kv.get_or("noise", d.noise),
            external_noise: kv.get_or("external_noise", d.external_noise),
            embedding_dim: kv.get_or("embedding_dim", d.embedding_dim),
            embedding_active: kv.get_or("embedding_active", d.embedding_active),
            seed: kv.get_or("seed", d.seed),
        };
        let mut errs = kv.into_errors();
        if let Err(Error::Config(v)) = spec.validate() {
            errs.extend(v);
        }
        if errs.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(KvFile::read(path)?)
    }
}

struct Query {
    words: Vec<String>,
    brand: Option<usize>,
}

struct World {
    words: Vec<String>,
    brands: Vec<String>,
    queries: Vec<Query>,
}

fn random_token(rng: &mut SeededRng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
}

fn distinct_tokens(rng: &mut SeededRng, n: usize, min: usize, max: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let t = random_token(rng, min, max);
        if taken.insert(t.clone()) {
            out.push(t);
        }
    }
    out
}

fn build_world(spec: &SyntheticSpec, rng: &mut SeededRng) -> World {
    let mut taken = BTreeSet::new();
    let words = distinct_tokens(rng, spec.vocab_size, 7, 10, &mut taken);
    let brands = distinct_tokens(rng, spec.brand_count, 4, 7, &mut taken);
    let queries = (0..spec.query_pool)
        .map(|_| {
            let n = rng.random_range(1..=3);
            let words: Vec<String> = words.choose_multiple(rng, n).cloned().collect();
            let brand = rng.random_bool(spec.brand_rate).then(|| rng.random_range(0..brands.len()));
            Query { words, brand }
        })
        .collect();
    World { words, brands, queries }
}

fn domain(brand: &str) -> String {
    format!("{brand}.com")
}

fn filler(world: &World, query: &Query, rng: &mut SeededRng) -> String {
    loop {
        let w = world.words.choose(rng).unwrap();
        if !query.words.contains(w) {
            return w.clone();
        }
    }
}

fn impression(spec: &SyntheticSpec, world: &World, zipf: &Zipf<f64>, rng: &mut SeededRng) -> QueryAdRecord {
    let qi = zipf.sample(rng) as usize - 1;
    let q = &world.queries[qi];

    let k = rng.random_range(0..=q.words.len());
    // The shared words keep their query order, as one phrase.
    let start = rng.random_range(0..=q.words.len() - k);
    let mut title: Vec<String> = (k..TITLE_WORDS).map(|_| filler(world, q, rng)).collect();
    let at = rng.random_range(0..=title.len());
    title.splice(at..at, q.words[start..start + k].iter().cloned());
    let description: Vec<String> = (0..DESCRIPTION_WORDS).map(|_| filler(world, q, rng)).collect();

    let ad_brand = match q.brand {
        Some(b) if rng.random_bool(0.5) => b,
        _ => rng.random_range(0..world.brands.len()),
    };
    let brand_match = q.brand == Some(ad_brand);
    let url_match = rng.random_bool(spec.url_match_rate);
    let url_word = if url_match {
        q.words.choose(rng).unwrap().clone()
    } else {
        filler(world, q, rng)
    };

    let mut query_text = q.words.join(" ");
    if let Some(b) = q.brand {
        query_text = format!("{} {query_text}", world.brands[b]);
    }
    let overlap = k as f64 / q.words.len() as f64;
    let n1: f64 = rng.sample(StandardNormal);
    let logit = spec.bias
        + spec.w_overlap * overlap
        + spec.w_brand * f64::from(u8::from(brand_match))
        + spec.w_url * f64::from(u8::from(url_match))
        + spec.noise * n1;
    let ctr = sigmoid(logit);
    let click = u8::from(rng.random_bool(ctr));
    let n2: f64 = rng.sample(StandardNormal);
    let device = if rng.random_bool(0.5) { Device::Desktop } else { Device::Mobile };

    let mut r = QueryAdRecord::new(
        &query_text,
        &title.join(" "),
        &description.join(" "),
        &format!("{} › {url_word}", domain(&world.brands[ad_brand])),
        click,
    );
    r.true_ctr = Some(ctr);
    r.external_score = Some(sigmoid(logit + spec.external_noise * n2));
    r.device = Some(device);
    r
}

/// Generated train and test logs plus word vectors for every token.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: Vec<QueryAdRecord>,
    pub test: Vec<QueryAdRecord>,
    pub embeddings: EmbeddingTable,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = SeededRng::seed_from_u64(spec.seed);
    let world = build_world(spec, &mut rng);
    let zipf = Zipf::new(spec.query_pool as f64, spec.zipf_exponent)
        .map_err(|e| Error::Config(vec![format!("zipf: {e}")]))?;
    let train: Vec<QueryAdRecord> = (0..spec.train_pairs)
        .map(|_| impression(spec, &world, &zipf, &mut rng))
        .collect();
    let test: Vec<QueryAdRecord> = (0..spec.test_pairs)
        .map(|_| impression(spec, &world, &zipf, &mut rng))
        .collect();

    let ctrs = train.iter().chain(&test).filter_map(|r| r.true_ctr);
    let (lo, hi) = ctrs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
    if !(hi - lo > 1e-9) {
        return Err(Error::Config(vec![
            "spec gives every pair the same click probability; raise a link weight or the noise".into(),
        ]));
    }

    let scale = 1.0 / (spec.embedding_dim as f64).sqrt();
    let dims: Vec<usize> = (0..spec.embedding_dim).collect();
    let mut embeddings = EmbeddingTable::new(spec.embedding_dim);
    for tok in world.words.iter().chain(&world.brands) {
        let v: Vec<f64> = if spec.embedding_active == 0 {
            (0..spec.embedding_dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            let mut v = vec![0.0; spec.embedding_dim];
            for &d in dims.choose_multiple(&mut rng, spec.embedding_active) {
                v[d] = 1.0;
            }
            v
        };
        embeddings.insert(tok, &v)?;
    }
    // A domain token shares its brand's vector.
    for b in &world.brands {
        let v = embeddings.get(b).expect("brand vector").to_vec();
        embeddings.insert(&domain(b), &v)?;
    }
    Ok(SyntheticData { train, test, embeddings })
}

/// Paths written by [`gen_synthetic`].
#[derive(Clone, Debug)]
pub struct SyntheticFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub embeddings: PathBuf,
}

pub fn gen_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticFiles> {
    let data = generate(spec)?;
    std::fs::create_dir_all(out_dir)?;
    let files = SyntheticFiles {
        train: out_dir.join("train.tsv"),
        test: out_dir.join("test.tsv"),
        embeddings: out_dir.join("embeddings.txt"),
    };
    write_dataset(&files.train, &data.train)?;
    write_dataset(&files.test, &data.test)?;
    data.embeddings.write(&files.embeddings)?;
    Ok(files)
}
