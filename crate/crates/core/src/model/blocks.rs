//! Conv blocks and the query/ad subnets, operating on whole batches because
//! batch normalization couples the batch members.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{
    relu_backward, relu_forward, Activation, BatchNorm, BatchNormCache, ConvCache, Mode, ReluCache, TemporalConv,
};
use crate::params::{Buffer, Param, Parameters};
use crate::tensor::Tensor2;

pub(crate) fn activate(act: Activation, x: Tensor2, cache: &mut ReluCache) -> Tensor2 {
    match act {
        Activation::Identity => x,
        Activation::Relu => relu_forward(&x, cache),
    }
}

pub(crate) fn activate_backward(act: Activation, grad: Tensor2, cache: &mut ReluCache) -> Result<Tensor2> {
    match act {
        Activation::Identity => Ok(grad),
        Activation::Relu => relu_backward(&grad, cache),
    }
}

pub(crate) fn conv_batch(conv: &TemporalConv, batch: &[Tensor2], caches: &mut Vec<ConvCache>) -> Result<Vec<Tensor2>> {
    caches.clear();
    caches.resize_with(batch.len(), ConvCache::default);
    batch
        .iter()
        .zip(caches.iter_mut())
        .map(|(x, c)| conv.forward(x, c))
        .collect()
}

fn check_batch_len(got: usize, cached: usize) -> Result<()> {
    if got != cached {
        return Err(Error::LengthMismatch(got, cached));
    }
    Ok(())
}

/// Convolution, batch normalization, ReLU.
#[derive(Clone, Debug)]
pub struct SubBlock {
    pub conv: TemporalConv,
    pub bn: BatchNorm,
}

#[derive(Clone, Debug, Default)]
pub struct SubBlockCache {
    conv: Vec<ConvCache>,
    bn: BatchNormCache,
    relu: Vec<ReluCache>,
}

impl SubBlock {
    fn new(name: &str, in_channels: usize, filters: usize) -> Self {
        SubBlock {
            conv: TemporalConv::new(&format!("{name}.conv"), in_channels, filters),
            bn: BatchNorm::new(&format!("{name}.bn"), filters),
        }
    }

    fn run(&self, batch: &[Tensor2], mode: Mode, cache: &mut SubBlockCache) -> Result<Vec<Tensor2>> {
        let z = conv_batch(&self.conv, batch, &mut cache.conv)?;
        let y = self.bn.normalize(&z, mode, &mut cache.bn)?;
        cache.relu.clear();
        cache.relu.resize_with(y.len(), ReluCache::default);
        Ok(y.iter().zip(cache.relu.iter_mut()).map(|(v, c)| relu_forward(v, c)).collect())
    }

    fn backward(&mut self, grads: Vec<Tensor2>, cache: &mut SubBlockCache) -> Result<Vec<Tensor2>> {
        check_batch_len(grads.len(), cache.relu.len())?;
        let g: Vec<Tensor2> = grads
            .iter()
            .zip(cache.relu.iter_mut())
            .map(|(g, c)| relu_backward(g, c))
            .collect::<Result<_>>()?;
        let g = self.bn.backward(&g, &mut cache.bn)?;
        g.iter()
            .zip(cache.conv.iter_mut())
            .map(|(g, c)| self.conv.backward(g, c))
            .collect()
    }
}

/// Two consecutive conv/batch-norm/ReLU sub-blocks; shortens the sequence by 4.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub subs: [SubBlock; 2],
}

#[derive(Clone, Debug, Default)]
pub struct ConvBlockCache {
    subs: [SubBlockCache; 2],
}

impl ConvBlock {
    pub fn new(name: &str, in_channels: usize, filters: usize) -> Self {
        ConvBlock {
            subs: [
                SubBlock::new(&format!("{name}.0"), in_channels, filters),
                SubBlock::new(&format!("{name}.1"), filters, filters),
            ],
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for s in &mut self.subs {
            s.conv.init(rng);
        }
    }

    pub fn out_channels(&self) -> usize {
        self.subs[1].conv.filters()
    }

    /// Runs the block and, in train mode, updates the batch-norm running
    /// statistics.
    pub fn forward(&mut self, batch: &[Tensor2], mode: Mode, cache: &mut ConvBlockCache) -> Result<Vec<Tensor2>> {
        let out = self.run(batch, mode, cache)?;
        self.commit(cache);
        Ok(out)
    }

    /// Forward pass without touching running statistics.
    pub fn run(&self, batch: &[Tensor2], mode: Mode, cache: &mut ConvBlockCache) -> Result<Vec<Tensor2>> {
        for x in batch {
            if x.rows() < 5 {
                return Err(Error::TooShort {
                    op: "conv_block_forward",
                    len: x.rows(),
                    min: 5,
                });
            }
        }
        let [c0, c1] = &mut cache.subs;
        let h = self.subs[0].run(batch, mode, c0)?;
        self.subs[1].run(&h, mode, c1)
    }

    pub fn commit(&mut self, cache: &ConvBlockCache) {
        for (s, c) in self.subs.iter_mut().zip(&cache.subs) {
            s.bn.update_running(&c.bn);
        }
    }

    pub fn backward(&mut self, grads: Vec<Tensor2>, cache: &mut ConvBlockCache) -> Result<Vec<Tensor2>> {
        let [c0, c1] = &mut cache.subs;
        let g = self.subs[1].backward(grads, c1)?;
        self.subs[0].backward(g, c0)
    }
}

impl Parameters for ConvBlock {
    fn params(&self) -> Vec<&Param> {
        self.subs
            .iter()
            .flat_map(|s| s.conv.params().into_iter().chain(s.bn.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.subs
            .iter_mut()
            .flat_map(|s| s.conv.params_mut().into_iter().chain(s.bn.params_mut()))
            .collect()
    }

    fn buffers(&self) -> Vec<&Buffer> {
        self.subs.iter().flat_map(|s| s.bn.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.subs.iter_mut().flat_map(|s| s.bn.buffers_mut()).collect()
    }
}

/// Query or ad bloc: a lead convolution followed by two conv blocks, with no
/// pooling. Output length is input length minus 10.
#[derive(Clone, Debug)]
pub struct SubNet {
    pub lead: TemporalConv,
    pub lead_activation: Activation,
    pub blocks: [ConvBlock; 2],
}

#[derive(Clone, Debug, Default)]
pub struct SubNetCache {
    lead: Vec<ConvCache>,
    act: Vec<ReluCache>,
    blocks: [ConvBlockCache; 2],
}

impl SubNet {
    pub fn new(name: &str, in_channels: usize, filters: usize, lead_activation: Activation) -> Self {
        SubNet {
            lead: TemporalConv::new(&format!("{name}.lead"), in_channels, filters),
            lead_activation,
            blocks: [
                ConvBlock::new(&format!("{name}.block0"), filters, filters),
                ConvBlock::new(&format!("{name}.block1"), filters, filters),
            ],
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.lead.init(rng);
        for b in &mut self.blocks {
            b.init(rng);
        }
    }

    pub fn forward(&mut self, batch: &[Tensor2], mode: Mode, cache: &mut SubNetCache) -> Result<Vec<Tensor2>> {
        let out = self.run(batch, mode, cache)?;
        self.commit(cache);
        Ok(out)
    }

    pub fn run(&self, batch: &[Tensor2], mode: Mode, cache: &mut SubNetCache) -> Result<Vec<Tensor2>> {
        for x in batch {
            if x.rows() < 11 {
                return Err(Error::TooShort {
                    op: "subnet_forward",
                    len: x.rows(),
                    min: 11,
                });
            }
        }
        let h = conv_batch(&self.lead, batch, &mut cache.lead)?;
        cache.act.clear();
        cache.act.resize_with(h.len(), ReluCache::default);
        let h: Vec<Tensor2> = h
            .into_iter()
            .zip(cache.act.iter_mut())
            .map(|(x, c)| activate(self.lead_activation, x, c))
            .collect();
        let [b0, b1] = &mut cache.blocks;
        let h = self.blocks[0].run(&h, mode, b0)?;
        self.blocks[1].run(&h, mode, b1)
    }

    pub fn commit(&mut self, cache: &SubNetCache) {
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            b.commit(c);
        }
    }

    /// Parameter gradients only; the subnet input is a fixed encoding.
    pub fn backward(&mut self, grads: Vec<Tensor2>, cache: &mut SubNetCache) -> Result<()> {
        let [b0, b1] = &mut cache.blocks;
        let g = self.blocks[1].backward(grads, b1)?;
        let g = self.blocks[0].backward(g, b0)?;
        check_batch_len(g.len(), cache.lead.len())?;
        for ((g, act), lead) in g.into_iter().zip(cache.act.iter_mut()).zip(cache.lead.iter_mut()) {
            let g = activate_backward(self.lead_activation, g, act)?;
            self.lead.backward_params(&g, lead)?;
        }
        Ok(())
    }
}

impl Parameters for SubNet {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.lead.params();
        for b in &self.blocks {
            v.extend(b.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.lead.params_mut();
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v
    }

    fn buffers(&self) -> Vec<&Buffer> {
        self.blocks.iter().flat_map(|b| b.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.blocks.iter_mut().flat_map(|b| b.buffers_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradient_check, FD_STEP};
    use crate::layers::SeededRng;
    use rand::SeedableRng;

    fn random_batch(rng: &mut SeededRng, sizes: &[usize], c: usize) -> Vec<Tensor2> {
        use rand::Rng;
        sizes
            .iter()
            .map(|&r| Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect()
    }

    fn weighted_sum(out: &[Tensor2], w: &[Tensor2]) -> f64 {
        out.iter()
            .zip(w)
            .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    #[test]
    fn block_shrinks_by_four() {
        let mut rng = SeededRng::seed_from_u64(0);
        let mut block = ConvBlock::new("b", 3, 4);
        block.init(&mut rng);
        let x = random_batch(&mut rng, &[33, 33], 3);
        let y = block.forward(&x, Mode::Train, &mut ConvBlockCache::default()).unwrap();
        assert_eq!(y[0].shape(), (29, 4));
        let short = random_batch(&mut rng, &[4], 3);
        assert!(block.run(&short, Mode::Train, &mut ConvBlockCache::default()).is_err());
    }

    #[test]
    fn block_matches_hand_composition() {
        let mut rng = SeededRng::seed_from_u64(4);
        let mut block = ConvBlock::new("b", 2, 2);
        block.init(&mut rng);
        let x = random_batch(&mut rng, &[7, 6], 2);
        let y = block.run(&x, Mode::Train, &mut ConvBlockCache::default()).unwrap();

        // conv -> per-channel standardization over all rows -> relu, twice.
        let mut h = x.clone();
        for s in &block.subs {
            let z: Vec<Tensor2> = h.iter().map(|t| s.conv.apply(t).unwrap()).collect();
            let c = z[0].cols();
            let n: usize = z.iter().map(|t| t.rows()).sum();
            let mut out = z.clone();
            for ch in 0..c {
                let vals: Vec<f64> = z.iter().flat_map(|t| (0..t.rows()).map(move |r| t[(r, ch)])).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                for t in out.iter_mut() {
                    for r in 0..t.rows() {
                        let v = (t[(r, ch)] - mean) / (var + 1e-5).sqrt();
                        t[(r, ch)] = v.max(0.0);
                    }
                }
            }
            h = out;
        }
        for (a, b) in y.iter().zip(&h) {
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_gradients() {
        let mut rng = SeededRng::seed_from_u64(6);
        let mut block = ConvBlock::new("b", 2, 3);
        block.init(&mut rng);
        let x = random_batch(&mut rng, &[8, 9], 2);
        let w = random_batch(&mut rng, &[4, 5], 3);
        let report = gradient_check(
            &mut block,
            |block, with_grads| {
                let mut cache = ConvBlockCache::default();
                let y = block.run(&x, Mode::Train, &mut cache).unwrap();
                if with_grads {
                    block.backward(w.clone(), &mut cache).unwrap();
                }
                weighted_sum(&y, &w)
            },
            FD_STEP,
        );
        // Conv biases feeding batch norm have an exactly zero gradient, so
        // their relative error is pure difference noise over the floor.
        assert!(report.passed(1e-4), "{report:?}");
    }

    #[test]
    fn subnet_lengths() {
        let mut rng = SeededRng::seed_from_u64(1);
        let mut net = SubNet::new("q", 5, 3, Activation::Identity);
        net.init(&mut rng);
        for (len, expected) in [(35, 25), (140, 130), (11, 1)] {
            let x = random_batch(&mut rng, &[len, len], 5);
            let y = net.run(&x, Mode::Train, &mut SubNetCache::default()).unwrap();
            assert_eq!(y[0].shape(), (expected, 3));
        }
        let x = random_batch(&mut rng, &[10], 5);
        assert!(net.run(&x, Mode::Train, &mut SubNetCache::default()).is_err());
    }

    #[test]
    fn subnet_gradients() {
        let mut rng = SeededRng::seed_from_u64(13);
        let mut net = SubNet::new("q", 3, 2, Activation::Relu);
        net.init(&mut rng);
        let x = random_batch(&mut rng, &[13, 13], 3);
        let w = random_batch(&mut rng, &[3, 3], 2);
        let report = gradient_check(
            &mut net,
            |net, with_grads| {
                let mut cache = SubNetCache::default();
                let y = net.run(&x, Mode::Train, &mut cache).unwrap();
                if with_grads {
                    net.backward(w.clone(), &mut cache).unwrap();
                }
                weighted_sum(&y, &w)
            },
            FD_STEP,
        );
        // Conv biases feeding batch norm have an exactly zero gradient, so
        // their relative error is pure difference noise over the floor.
        assert!(report.passed(1e-4), "{report:?}");
    }
}
