use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    global_avg_pool, relu_backward_in_place, relu_in_place, Conv1d, Dense, FeatureMap,
};
use super::loss::softmax;
use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub conv1: Conv1d<T>,
    pub conv2: Conv1d<T>,
    pub shortcut: Conv1d<T>,
}

struct BlockCache<T> {
    a1: FeatureMap<T>,
    a2: FeatureMap<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    fn zeros(cin: usize, n: usize, k: usize, d: usize) -> Self {
        Self {
            conv1: Conv1d::zeros(cin, n, k, d),
            conv2: Conv1d::zeros(n, n, k, d),
            shortcut: Conv1d::zeros(cin, n, 1, 1),
        }
    }

    fn init(cin: usize, n: usize, k: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv1d::init(cin, n, k, d, 2.0, rng),
            conv2: Conv1d::init(n, n, k, d, 2.0, rng),
            shortcut: Conv1d::init(cin, n, 1, 1, 1.0, rng),
        }
    }

    fn check(&self) -> Result<()> {
        if self.conv1.dilation != self.conv2.dilation {
            return Err(Error::Shape(format!(
                "block convolutions disagree on dilation: {} vs {}",
                self.conv1.dilation, self.conv2.dilation
            )));
        }
        if self.shortcut.kernel_size != 1 || self.shortcut.dilation != 1 {
            return Err(Error::Shape("shortcut must be a 1x1 convolution".into()));
        }
        if self.conv1.out_channels != self.conv2.in_channels
            || self.conv2.out_channels != self.shortcut.out_channels
            || self.conv1.in_channels != self.shortcut.in_channels
        {
            return Err(Error::Shape("residual block layer shapes do not chain".into()));
        }
        Ok(())
    }

    fn forward_cached(&self, x: &FeatureMap<T>) -> Result<(FeatureMap<T>, BlockCache<T>)> {
        self.check()?;
        let mut a1 = self.conv1.forward(x)?;
        relu_in_place(a1.data_mut());
        let mut a2 = self.conv2.forward(&a1)?;
        relu_in_place(a2.data_mut());
        let mut y = self.shortcut.forward(x)?;
        for (yv, &a) in y.data_mut().iter_mut().zip(a2.data()) {
            *yv += a;
        }
        Ok((y, BlockCache { a1, a2 }))
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.forward_cached(x).map(|(y, _)| y)
    }

    fn backward(
        &self,
        x: &FeatureMap<T>,
        cache: &BlockCache<T>,
        dy: &FeatureMap<T>,
        grad: &mut ResidualBlock<T>,
        want_dx: bool,
    ) -> Option<FeatureMap<T>> {
        let len = x.len();
        let mut dz2 = dy.clone();
        relu_backward_in_place(dz2.data_mut(), cache.a2.data());
        let mut da1 = FeatureMap::zeros(self.conv2.in_channels, len);
        self.conv2.backward(&cache.a1, &dz2, &mut grad.conv2, Some(&mut da1));
        relu_backward_in_place(da1.data_mut(), cache.a1.data());
        let mut dx = want_dx.then(|| FeatureMap::zeros(x.channels(), len));
        self.conv1.backward(x, &da1, &mut grad.conv1, dx.as_mut());
        self.shortcut.backward(x, dy, &mut grad.shortcut, dx.as_mut());
        dx
    }
}

/// `relu(conv2(relu(conv1(x)))) + shortcut(x)`.
pub fn residual_block_forward<T: Scalar>(
    x: &FeatureMap<T>,
    params: &ResidualBlock<T>,
) -> Result<FeatureMap<T>> {
    params.forward(x)
}

/// Per-example activations kept for the backward pass.
struct ExampleCache<T> {
    /// Input of every block followed by the last block's output.
    block_io: Vec<FeatureMap<T>>,
    blocks: Vec<BlockCache<T>>,
    pooled: Vec<T>,
    hidden: Vec<T>,
    probs: Vec<T>,
}

/// Output of [`Network::forward`]: class probabilities plus the cached
/// activations [`Network::backward`] needs.
pub struct ForwardPass<T> {
    n_classes: usize,
    caches: Vec<ExampleCache<T>>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn batch_size(&self) -> usize {
        self.caches.len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.caches[i].probs
    }

    /// Row-major `B x n_classes` probabilities.
    pub fn probs(&self) -> Vec<T> {
        self.caches.iter().flat_map(|c| c.probs.iter().copied()).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
}

/// Named view of one parameter tensor.
#[derive(Debug)]
pub struct ParamTensor<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    pub blocks: Vec<ResidualBlock<T>>,
    pub hidden: Dense<T>,
    pub output: Dense<T>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = Network<T>;

impl<T: Scalar> Network<T> {
    /// Seeded initialization: weights uniform with variance `2 / fan_in` ahead of
    /// a ReLU and `1 / fan_in` otherwise; biases start at zero.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (config.n_filters, config.kernel_size);
        let blocks = config
            .dilations
            .iter()
            .enumerate()
            .map(|(b, &d)| {
                let cin = if b == 0 { config.in_channels } else { n };
                ResidualBlock::init(cin, n, k, d, &mut rng)
            })
            .collect();
        let hidden = Dense::init(n, config.hidden_width, 2.0, &mut rng);
        let output = Dense::init(config.hidden_width, config.n_classes, 1.0, &mut rng);
        Ok(Self {
            config,
            blocks,
            hidden,
            output,
        })
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (n, k) = (config.n_filters, config.kernel_size);
        let blocks = config
            .dilations
            .iter()
            .enumerate()
            .map(|(b, &d)| ResidualBlock::zeros(if b == 0 { config.in_channels } else { n }, n, k, d))
            .collect();
        let hidden = Dense::zeros(n, config.hidden_width);
        let output = Dense::zeros(config.hidden_width, config.n_classes);
        Ok(Self {
            config,
            blocks,
            hidden,
            output,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config was validated at construction")
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn tensors(&self) -> Vec<ParamTensor<'_, T>> {
        let mut out = Vec::with_capacity(6 * self.blocks.len() + 4);
        for (b, blk) in self.blocks.iter().enumerate() {
            for (part, c) in [("conv1", &blk.conv1), ("conv2", &blk.conv2), ("shortcut", &blk.shortcut)] {
                out.push(ParamTensor {
                    name: format!("block{b}.{part}.weight"),
                    shape: vec![c.out_channels, c.in_channels, c.kernel_size],
                    data: &c.weight,
                });
                out.push(ParamTensor {
                    name: format!("block{b}.{part}.bias"),
                    shape: vec![c.out_channels],
                    data: &c.bias,
                });
            }
        }
        for (part, d) in [("hidden", &self.hidden), ("output", &self.output)] {
            out.push(ParamTensor {
                name: format!("head.{part}.weight"),
                shape: vec![d.out_features, d.in_features],
                data: &d.weight,
            });
            out.push(ParamTensor {
                name: format!("head.{part}.bias"),
                shape: vec![d.out_features],
                data: &d.bias,
            });
        }
        out
    }

    /// Mutable parameter slices in the same order as [`Network::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::with_capacity(6 * self.blocks.len() + 4);
        for (b, blk) in self.blocks.iter_mut().enumerate() {
            for (part, c) in [
                ("conv1", &mut blk.conv1),
                ("conv2", &mut blk.conv2),
                ("shortcut", &mut blk.shortcut),
            ] {
                out.push((format!("block{b}.{part}.weight"), c.weight.as_mut_slice()));
                out.push((format!("block{b}.{part}.bias"), c.bias.as_mut_slice()));
            }
        }
        for (part, d) in [("hidden", &mut self.hidden), ("output", &mut self.output)] {
            out.push((format!("head.{part}.weight"), d.weight.as_mut_slice()));
            out.push((format!("head.{part}.bias"), d.bias.as_mut_slice()));
        }
        out
    }

    /// Number of scalars actually stored.
    pub fn stored_parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out = Network::<U>::zeros(self.config.clone()).expect("validated config");
        for ((_, dst), src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.data) {
                *d = U::of(s.to_f64_lossy());
            }
        }
        out
    }

    /// Wraps a channel-major window as the network input.
    pub fn input_map(&self, window: &[T]) -> Result<FeatureMap<T>> {
        let c = self.config.in_channels;
        if window.is_empty() || window.len() % c != 0 {
            return Err(Error::Shape(format!(
                "input of {} values does not split into {c} channels",
                window.len()
            )));
        }
        FeatureMap::new(c, window.len() / c, window.to_vec())
    }

    fn head(&self, last: &FeatureMap<T>) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
        let pooled = global_avg_pool(last)?;
        let mut hidden = self.hidden.forward(&pooled)?;
        relu_in_place(&mut hidden);
        let logits = self.output.forward(&hidden)?;
        Ok((pooled, hidden, logits))
    }

    /// Raw output-layer scores for one window.
    pub fn logits(&self, window: &[T]) -> Result<Vec<T>> {
        let mut x = self.input_map(window)?;
        for blk in &self.blocks {
            x = blk.forward(&x)?;
        }
        self.head(&x).map(|(_, _, logits)| logits)
    }

    /// Class probabilities for one window, without keeping activations.
    pub fn predict(&self, window: &[T]) -> Result<Vec<T>> {
        self.logits(window).map(|l| softmax(&l))
    }

    /// Most probable class; ties go to the lowest class id.
    pub fn classify(&self, window: &[T]) -> Result<usize> {
        let logits = self.logits(window)?;
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    fn forward_example(&self, window: &[T]) -> Result<ExampleCache<T>> {
        let mut block_io = Vec::with_capacity(self.blocks.len() + 1);
        let mut caches = Vec::with_capacity(self.blocks.len());
        block_io.push(self.input_map(window)?);
        for blk in &self.blocks {
            let (y, cache) = blk.forward_cached(block_io.last().unwrap())?;
            block_io.push(y);
            caches.push(cache);
        }
        let (pooled, hidden, logits) = self.head(block_io.last().unwrap())?;
        Ok(ExampleCache {
            block_io,
            blocks: caches,
            pooled,
            hidden,
            probs: softmax(&logits),
        })
    }

    /// Batch forward pass; every window is channel-major `in_channels x L`.
    pub fn forward<X: AsRef<[T]>>(&self, batch: &[X]) -> Result<ForwardPass<T>> {
        let caches = batch
            .iter()
            .map(|w| self.forward_example(w.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = caches.first() {
            let len = first.block_io[0].len();
            if caches.iter().any(|c| c.block_io[0].len() != len) {
                return Err(Error::Shape("batch windows differ in length".into()));
            }
        }
        Ok(ForwardPass {
            n_classes: self.config.n_classes,
            caches,
        })
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.config.n_classes {
            return Err(Error::Domain(format!(
                "label {label} out of range for {} classes",
                self.config.n_classes
            )));
        }
        Ok(())
    }

    /// Propagates `dlogits` through one cached example, accumulating into `grads`.
    fn backprop(&self, cache: &ExampleCache<T>, dlogits: &[T], grads: &mut Gradients<T>) {
        let mut dh = self.output.backward(&cache.hidden, dlogits, &mut grads.output);
        relu_backward_in_place(&mut dh, &cache.hidden);
        let dpooled = self.hidden.backward(&cache.pooled, &dh, &mut grads.hidden);

        let last = cache.block_io.last().unwrap();
        let inv_len = T::one() / T::of(last.len() as f64);
        let mut dy = FeatureMap::zeros(last.channels(), last.len());
        for (c, &g) in dpooled.iter().enumerate() {
            dy.channel_mut(c).fill(g * inv_len);
        }
        for b in (0..self.blocks.len()).rev() {
            let dx = self.blocks[b].backward(
                &cache.block_io[b],
                &cache.blocks[b],
                &dy,
                &mut grads.blocks[b],
                b > 0,
            );
            if let Some(dx) = dx {
                dy = dx;
            }
        }
    }

    fn dlogits(probs: &[T], label: usize, scale: T) -> Vec<T> {
        probs
            .iter()
            .enumerate()
            .map(|(c, &p)| (if c == label { p - T::one() } else { p }) * scale)
            .collect()
    }

    /// Exact gradients of the mean cross-entropy of `labels` under `pass`.
    pub fn backward(&self, pass: &ForwardPass<T>, labels: &[usize]) -> Result<Gradients<T>> {
        if labels.len() != pass.batch_size() {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                pass.batch_size()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Domain("backward on an empty batch".into()));
        }
        labels.iter().try_for_each(|&l| self.check_label(l))?;
        let scale = T::one() / T::of(labels.len() as f64);
        let mut grads = self.zeros_like();
        for (cache, &label) in pass.caches.iter().zip(labels) {
            self.backprop(cache, &Self::dlogits(&cache.probs, label, scale), &mut grads);
        }
        Ok(grads)
    }

    /// Forward and backward for one example without keeping the batch cache.
    /// Adds `scale` times the example's loss gradient to `grads` and returns
    /// the example's (unscaled) cross-entropy and its probabilities.
    pub fn accumulate_example(
        &self,
        window: &[T],
        label: usize,
        scale: T,
        grads: &mut Gradients<T>,
    ) -> Result<(T, Vec<T>)> {
        self.check_label(label)?;
        let cache = self.forward_example(window)?;
        let loss = -cache.probs[label].max(T::of(PROB_FLOOR)).ln();
        self.backprop(&cache, &Self::dlogits(&cache.probs, label, scale), grads);
        Ok((loss, cache.probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcn::{cross_entropy, parameter_count};
    use rand::Rng;

    fn small_cfg() -> NetworkConfig {
        NetworkConfig::standard(5, 2, 2, 2, 6, 3)
    }

    fn random_window(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_transform_with_identity_shortcut_passes_input_through() {
        let mut blk = ResidualBlock::<f64>::zeros(3, 3, 5, 2);
        blk.shortcut = Conv1d::identity(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FeatureMap::new(3, 10, random_window(&mut rng, 30)).unwrap();
        assert_eq!(residual_block_forward(&x, &blk).unwrap(), x);
    }

    #[test]
    fn all_zero_block_outputs_zero() {
        let blk = ResidualBlock::<f64>::zeros(2, 4, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = FeatureMap::new(2, 12, random_window(&mut rng, 24)).unwrap();
        let y = blk.forward(&x).unwrap();
        assert_eq!(y.channels(), 4);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    /// Scalar step-by-step evaluation of one block.
    fn scalar_block(x: &[Vec<f64>], blk: &ResidualBlock<f64>) -> Vec<Vec<f64>> {
        let len = x[0].len() as isize;
        let conv = |inp: &[Vec<f64>], p: &Conv1d<f64>| -> Vec<Vec<f64>> {
            let pad = (p.dilation * (p.kernel_size - 1) / 2) as isize;
            (0..p.out_channels)
                .map(|o| {
                    (0..len)
                        .map(|t| {
                            let mut s = p.bias[o];
                            for (i, row) in inp.iter().enumerate() {
                                for j in 0..p.kernel_size {
                                    let src = t + (j * p.dilation) as isize - pad;
                                    if src >= 0 && src < len {
                                        s += p.weight_at(o, i, j) * row[src as usize];
                                    }
                                }
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        };
        let relu = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
        };
        let a2 = relu(conv(&relu(conv(x, &blk.conv1)), &blk.conv2));
        let s = conv(x, &blk.shortcut);
        a2.iter()
            .zip(&s)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
            .collect()
    }

    #[test]
    fn block_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let mut blk = ResidualBlock::<f64>::init(2, 2, 5, 1 + trial % 3, &mut rng);
            for c in [&mut blk.conv1, &mut blk.conv2, &mut blk.shortcut] {
                c.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            }
            let rows: Vec<Vec<f64>> = (0..2).map(|_| random_window(&mut rng, 8)).collect();
            let x = FeatureMap::new(2, 8, rows.concat()).unwrap();
            let y = blk.forward(&x).unwrap();
            let want = scalar_block(&rows, &blk);
            for c in 0..2 {
                for t in 0..8 {
                    assert!((y.channel(c)[t] - want[c][t]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rows_sum_to_one_and_duplicates_match() {
        let net = Network::<f32>::new(small_cfg(), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w: Vec<f32> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pass = net.forward(&[w.clone(), w]).unwrap();
        let probs = pass.probs();
        for row in probs.chunks(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
        assert_eq!(pass.row(0), pass.row(1));
    }

    #[test]
    fn zero_output_layer_gives_uniform() {
        let cfg = NetworkConfig::default();
        let mut net = Network::<f32>::new(cfg, 6).unwrap();
        net.output.weight.iter_mut().for_each(|w| *w = 0.0);
        net.output.bias.iter_mut().for_each(|w| *w = 0.0);
        let w = vec![0.3f32; 2 * 64];
        for p in net.predict(&w).unwrap() {
            assert!((p - 1.0 / 9.0).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_head_bias_gradient_is_mean_residual() {
        let mut net = Network::<f64>::new(small_cfg(), 7).unwrap();
        net.output.weight.iter_mut().for_each(|w| *w = 0.0);
        net.output.bias.iter_mut().for_each(|w| *w = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch: Vec<Vec<f64>> = (0..4).map(|_| random_window(&mut rng, 40)).collect();
        let labels = [0, 2, 2, 1];
        let pass = net.forward(&batch).unwrap();
        let g = net.backward(&pass, &labels).unwrap();
        for c in 0..3 {
            let want: f64 = labels
                .iter()
                .map(|&l| 1.0 / 3.0 - if l == c { 1.0 } else { 0.0 })
                .sum::<f64>()
                / 4.0;
            assert!((g.output.bias[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn stored_count_matches_formula() {
        let net = Network::<f32>::new(NetworkConfig::default(), 0).unwrap();
        assert_eq!(net.stored_parameter_count(), 357_129);
        assert_eq!(net.stored_parameter_count(), parameter_count(net.config()));
    }

    #[test]
    fn tensor_views_agree() {
        let mut net = Network::<f64>::new(small_cfg(), 1).unwrap();
        let names: Vec<String> = net.tensors().into_iter().map(|t| t.name).collect();
        let lens: Vec<usize> = net.tensors().iter().map(|t| t.shape.iter().product()).collect();
        let mut_names: Vec<(String, usize)> =
            net.tensors_mut().into_iter().map(|(n, d)| (n, d.len())).collect();
        assert_eq!(names.len(), 2 * 6 + 4);
        for ((n, l), (mn, ml)) in names.iter().zip(&lens).zip(&mut_names) {
            assert_eq!(n, mn);
            assert_eq!(l, ml);
        }
    }

    #[test]
    fn accumulate_matches_batch_backward() {
        let net = Network::<f64>::new(small_cfg(), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let batch: Vec<Vec<f64>> = (0..3).map(|_| random_window(&mut rng, 24)).collect();
        let labels = [1, 0, 2];
        let pass = net.forward(&batch).unwrap();
        let g = net.backward(&pass, &labels).unwrap();
        let loss = cross_entropy(&pass.probs(), 3, &labels).unwrap();
        let mut acc = net.zeros_like();
        let mut total = 0.0;
        for (w, &l) in batch.iter().zip(&labels) {
            total += net.accumulate_example(w, l, 1.0 / 3.0, &mut acc).unwrap().0;
        }
        assert!((total / 3.0 - loss).abs() < 1e-12);
        for (a, b) in acc.tensors().iter().zip(g.tensors()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn bad_labels_and_shapes() {
        let net = Network::<f64>::new(small_cfg(), 1).unwrap();
        let pass = net.forward(&[vec![0.1; 16]]).unwrap();
        assert!(matches!(net.backward(&pass, &[3]), Err(Error::Domain(_))));
        assert!(matches!(net.backward(&pass, &[0, 1]), Err(Error::Shape(_))));
        assert!(matches!(net.forward(&[vec![0.1; 15]]), Err(Error::Shape(_))));
        assert!(matches!(
            net.forward(&[vec![0.1; 16], vec![0.1; 18]]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cast_round_trip_f32_f64() {
        let net = Network::<f32>::new(small_cfg(), 11).unwrap();
        assert_eq!(net.cast::<f64>().cast::<f32>(), net);
    }
}
