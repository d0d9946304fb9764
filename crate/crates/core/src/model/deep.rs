//! DeepCharMatch and DeepWordMatch.
//!
//! Character model: query bloc and ad bloc (lead conv + 2 conv blocks each),
//! cross-convolution, final bloc. Word model: the embedding matrices go
//! straight into the cross-convolution.

use rand::SeedableRng;

use super::blocks::{SubNet, SubNetCache};
use super::config::{ModelConfig, ModelKind, Shapes};
use super::cross::{CrossCache, CrossConv};
use super::final_bloc::{FinalBloc, FinalCache};
use crate::error::{Error, Result};
use crate::layers::{sigmoid, Mode, SeededRng};
use crate::params::{Buffer, Param, Parameters};
use crate::tensor::Tensor2;

#[derive(Clone, Debug)]
pub struct DeepModel {
    config: ModelConfig,
    shapes: Shapes,
    pub query_net: Option<SubNet>,
    pub ad_net: Option<SubNet>,
    pub cross: CrossConv,
    pub final_bloc: FinalBloc,
}

#[derive(Clone, Debug, Default)]
pub struct ModelCache {
    query: SubNetCache,
    ad: SubNetCache,
    cross: Vec<CrossCache>,
    final_bloc: FinalCache,
}

impl DeepModel {
    /// Builds and He-initialises a model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let shapes = config.validate()?;
        let (query_net, ad_net) = match config.kind {
            ModelKind::Char => (
                Some(SubNet::new(
                    "query",
                    config.input_channels,
                    config.subnet_filters,
                    config.lead_activation,
                )),
                Some(SubNet::new(
                    "ad",
                    config.input_channels,
                    config.subnet_filters,
                    config.lead_activation,
                )),
            ),
            ModelKind::Word => (None, None),
        };
        let cross = CrossConv::new(
            "cross",
            shapes.query.1,
            shapes.ad.1,
            config.cross_filters,
            config.cross_activation,
            config.cross_pool,
        )?;
        let final_bloc = FinalBloc::new(
            "final",
            config.cross_filters,
            config.final_filters,
            config.final_pools,
            shapes.flatten,
            config.dense,
        )?;
        let mut model = DeepModel {
            config,
            shapes,
            query_net,
            ad_net,
            cross,
            final_bloc,
        };
        let mut rng = SeededRng::seed_from_u64(model.config.seed);
        if let Some(n) = model.query_net.as_mut() {
            n.init(&mut rng);
        }
        if let Some(n) = model.ad_net.as_mut() {
            n.init(&mut rng);
        }
        model.cross.init(&mut rng);
        model.final_bloc.init(&mut rng);
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn shapes(&self) -> &Shapes {
        &self.shapes
    }

    fn check_inputs(&self, queries: &[Tensor2], ads: &[Tensor2]) -> Result<()> {
        if queries.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if queries.len() != ads.len() {
            return Err(Error::LengthMismatch(queries.len(), ads.len()));
        }
        let (qr, qc) = self.config.query_input_shape();
        let (ar, ac) = self.config.ad_input_shape();
        for (q, a) in queries.iter().zip(ads) {
            q.expect_shape("model query input", qr, qc)?;
            a.expect_shape("model ad input", ar, ac)?;
        }
        Ok(())
    }

    /// Pre-sigmoid scores. Pure: training-mode batch statistics stay in the cache.
    pub fn logits(&self, queries: &[Tensor2], ads: &[Tensor2], mode: Mode, cache: &mut ModelCache) -> Result<Vec<f64>> {
        self.check_inputs(queries, ads)?;
        let (hq, ha) = match (&self.query_net, &self.ad_net) {
            (Some(qn), Some(an)) => (
                qn.run(queries, mode, &mut cache.query)?,
                an.run(ads, mode, &mut cache.ad)?,
            ),
            _ => (queries.to_vec(), ads.to_vec()),
        };
        cache.cross.clear();
        cache.cross.resize_with(hq.len(), CrossCache::default);
        let crossed: Vec<Tensor2> = hq
            .iter()
            .zip(&ha)
            .zip(cache.cross.iter_mut())
            .map(|((q, a), c)| self.cross.forward(q, a, c))
            .collect::<Result<_>>()?;
        self.final_bloc.run(&crossed, mode, &mut cache.final_bloc)
    }

    /// Click probabilities. In train mode the batch-norm running statistics
    /// are updated.
    pub fn forward(&mut self, queries: &[Tensor2], ads: &[Tensor2], mode: Mode, cache: &mut ModelCache) -> Result<Vec<f64>> {
        let z = self.logits(queries, ads, mode, cache)?;
        if mode == Mode::Train {
            self.commit(cache);
        }
        Ok(z.into_iter().map(sigmoid).collect())
    }

    /// Folds the batch statistics of a train-mode pass into the running ones.
    pub fn commit(&mut self, cache: &ModelCache) {
        if let Some(n) = self.query_net.as_mut() {
            n.commit(&cache.query);
        }
        if let Some(n) = self.ad_net.as_mut() {
            n.commit(&cache.ad);
        }
        self.final_bloc.commit(&cache.final_bloc);
    }

    /// Backpropagates d(loss)/d(logit) for each batch member, accumulating
    /// into every parameter gradient.
    pub fn backward(&mut self, dlogits: &[f64], cache: &mut ModelCache) -> Result<()> {
        let g = self.final_bloc.backward(dlogits, &mut cache.final_bloc)?;
        if g.len() != cache.cross.len() {
            return Err(Error::LengthMismatch(g.len(), cache.cross.len()));
        }
        match (self.query_net.as_mut(), self.ad_net.as_mut()) {
            (Some(qn), Some(an)) => {
                let mut gq = Vec::with_capacity(g.len());
                let mut ga = Vec::with_capacity(g.len());
                for (g, c) in g.iter().zip(cache.cross.iter_mut()) {
                    let (q, a) = self.cross.backward(g, c)?;
                    gq.push(q);
                    ga.push(a);
                }
                qn.backward(gq, &mut cache.query)?;
                an.backward(ga, &mut cache.ad)?;
            }
            _ => {
                for (g, c) in g.iter().zip(cache.cross.iter_mut()) {
                    self.cross.backward_params(g, c)?;
                }
            }
        }
        Ok(())
    }

    /// Inference-mode probability for one pair.
    pub fn predict_one(&self, query: &Tensor2, ad: &Tensor2) -> Result<f64> {
        let z = self.logits(
            std::slice::from_ref(query),
            std::slice::from_ref(ad),
            Mode::Infer,
            &mut ModelCache::default(),
        )?;
        Ok(sigmoid(z[0]))
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::KindMismatch {
                model: self.kind().as_str(),
                input: kind.as_str(),
            });
        }
        Ok(())
    }
}

/// Character-level forward over one-hot query/ad encodings.
pub fn deepcharmatch_forward(
    model: &mut DeepModel,
    queries: &[Tensor2],
    ads: &[Tensor2],
    mode: Mode,
    cache: &mut ModelCache,
) -> Result<Vec<f64>> {
    model.expect_kind(ModelKind::Char)?;
    model.forward(queries, ads, mode, cache)
}

/// Word-level forward over embedding matrices.
pub fn deepwordmatch_forward(
    model: &mut DeepModel,
    queries: &[Tensor2],
    ads: &[Tensor2],
    mode: Mode,
    cache: &mut ModelCache,
) -> Result<Vec<f64>> {
    model.expect_kind(ModelKind::Word)?;
    model.forward(queries, ads, mode, cache)
}

impl Parameters for DeepModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        if let Some(n) = &self.query_net {
            v.extend(n.params());
        }
        if let Some(n) = &self.ad_net {
            v.extend(n.params());
        }
        v.extend(self.cross.params());
        v.extend(self.final_bloc.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        if let Some(n) = self.query_net.as_mut() {
            v.extend(n.params_mut());
        }
        if let Some(n) = self.ad_net.as_mut() {
            v.extend(n.params_mut());
        }
        v.extend(self.cross.params_mut());
        v.extend(self.final_bloc.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer> {
        let mut v = Vec::new();
        if let Some(n) = &self.query_net {
            v.extend(n.buffers());
        }
        if let Some(n) = &self.ad_net {
            v.extend(n.buffers());
        }
        v.extend(self.final_bloc.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        let mut v = Vec::new();
        if let Some(n) = self.query_net.as_mut() {
            v.extend(n.buffers_mut());
        }
        if let Some(n) = self.ad_net.as_mut() {
            v.extend(n.buffers_mut());
        }
        v.extend(self.final_bloc.buffers_mut());
        v
    }
}
