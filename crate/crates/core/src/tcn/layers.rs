use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel-major `channels x len` activation array.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::Shape(format!(
                "{} values cannot form a {channels} x {len} feature map",
                data.len()
            )));
        }
        Ok(Self { channels, len, data })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![T::zero(); channels * len],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Indices `t` with `0 <= t + off < len`.
fn valid_range(off: isize, len: usize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes;
/// the summation order is fixed, which keeps results deterministic.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn uniform_fill<T: Scalar>(n: usize, bound: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect()
}

/// Dilated 1-D convolution with centered zero padding.
///
/// `weight` is laid out `[out][in][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize, dilation: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weight: vec![T::zero(); out_channels * in_channels * kernel_size],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Weights uniform in +-sqrt(3 gain / fan_in), biases zero. Use gain 2
    /// ahead of a ReLU and 1 otherwise.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = (3.0 * gain / (in_channels * kernel_size) as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weight: uniform_fill(out_channels * in_channels * kernel_size, bound, rng),
            bias: vec![T::zero(); out_channels],
        }
    }

    /// 1x1 convolution that copies input channel `c` to output channel `c`.
    pub fn identity(channels: usize) -> Self {
        let mut conv = Self::zeros(channels, channels, 1, 1);
        for c in 0..channels {
            conv.weight[c * channels + c] = T::one();
        }
        conv
    }

    pub fn padding(&self) -> usize {
        self.dilation * (self.kernel_size - 1) / 2
    }

    pub fn weight_at(&self, out: usize, inp: usize, tap: usize) -> T {
        self.weight[(out * self.in_channels + inp) * self.kernel_size + tap]
    }

    fn tap_offset(&self, tap: usize) -> isize {
        (tap * self.dilation) as isize - self.padding() as isize
    }

    fn check(&self, input: &FeatureMap<T>) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::Shape(format!(
                "kernel size {} is even; centered padding needs an odd kernel",
                self.kernel_size
            )));
        }
        if self.dilation == 0 {
            return Err(Error::Shape("dilation must be positive".into()));
        }
        if input.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.check(input)?;
        let len = input.len();
        let mut out = FeatureMap::zeros(self.out_channels, len);
        for o in 0..self.out_channels {
            let y = out.channel_mut(o);
            y.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let x = input.channel(i);
                for tap in 0..self.kernel_size {
                    let off = self.tap_offset(tap);
                    let (lo, hi) = valid_range(off, len);
                    if lo < hi {
                        let xs = &x[(lo as isize + off) as usize..(hi as isize + off) as usize];
                        axpy(&mut y[lo..hi], self.weight_at(o, i, tap), xs);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grad` and, when `dx` is given,
    /// the input gradient into `dx`.
    pub fn backward(
        &self,
        input: &FeatureMap<T>,
        dy: &FeatureMap<T>,
        grad: &mut Conv1d<T>,
        mut dx: Option<&mut FeatureMap<T>>,
    ) {
        let len = input.len();
        for o in 0..self.out_channels {
            let g = dy.channel(o);
            grad.bias[o] += g.iter().copied().sum::<T>();
            for i in 0..self.in_channels {
                let x = input.channel(i);
                for tap in 0..self.kernel_size {
                    let off = self.tap_offset(tap);
                    let (lo, hi) = valid_range(off, len);
                    if lo >= hi {
                        continue;
                    }
                    let (xlo, xhi) = ((lo as isize + off) as usize, (hi as isize + off) as usize);
                    let idx = (o * self.in_channels + i) * self.kernel_size + tap;
                    grad.weight[idx] += dot(&g[lo..hi], &x[xlo..xhi]);
                    if let Some(dx) = dx.as_deref_mut() {
                        axpy(&mut dx.channel_mut(i)[xlo..xhi], self.weight[idx], &g[lo..hi]);
                    }
                }
            }
        }
    }
}

/// Centered dilated convolution; output length equals input length.
pub fn conv1d_same<T: Scalar>(input: &FeatureMap<T>, params: &Conv1d<T>) -> Result<FeatureMap<T>> {
    params.forward(input)
}

/// Fully connected layer, `weight` laid out `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: vec![T::zero(); in_features * out_features],
            bias: vec![T::zero(); out_features],
        }
    }

    pub fn init(in_features: usize, out_features: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let bound = (3.0 * gain / in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weight: uniform_fill(in_features * out_features, bound, rng),
            bias: vec![T::zero(); out_features],
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_features {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.in_features,
                x.len()
            )));
        }
        Ok((0..self.out_features)
            .map(|o| {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                self.bias[o] + dot(row, x)
            })
            .collect())
    }

    /// Accumulates into `grad` and returns the input gradient.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.in_features];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let span = o * self.in_features..(o + 1) * self.in_features;
            axpy(&mut grad.weight[span.clone()], g, x);
            axpy(&mut dx, g, &self.weight[span]);
        }
        dx
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` where the ReLU output was not positive.
pub(crate) fn relu_backward_in_place<T: Scalar>(grad: &mut [T], activated: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Per-channel mean over positions.
pub fn global_avg_pool<T: Scalar>(x: &FeatureMap<T>) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::Shape("global average pooling needs at least one position".into()));
    }
    let n = T::of(x.len() as f64);
    Ok((0..x.channels())
        .map(|c| x.channel(c).iter().copied().sum::<T>() / n)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn fm(channels: usize, data: Vec<f64>) -> FeatureMap<f64> {
        let len = data.len() / channels;
        FeatureMap::new(channels, len, data).unwrap()
    }

    /// Direct evaluation of the defining sum, one output at a time.
    fn brute_conv(x: &FeatureMap<f64>, p: &Conv1d<f64>) -> Vec<f64> {
        let len = x.len() as isize;
        let pad = p.padding() as isize;
        let mut out = Vec::new();
        for o in 0..p.out_channels {
            for t in 0..len {
                let mut acc = p.bias[o];
                for i in 0..p.in_channels {
                    for j in 0..p.kernel_size {
                        let src = t + (j * p.dilation) as isize - pad;
                        if (0..len).contains(&src) {
                            acc += p.weight_at(o, i, j) * x.channel(i)[src as usize];
                        }
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    #[test]
    fn center_delta_kernel_is_identity() {
        let mut p = Conv1d::<f64>::zeros(1, 1, 5, 3);
        p.weight[2] = 1.0;
        let x = fm(1, (0..20).map(|v| v as f64 * 0.5 - 3.0).collect());
        assert_eq!(p.forward(&x).unwrap(), x);
    }

    #[test]
    fn constant_input_interior_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Conv1d::<f64>::init(1, 1, 5, 2, 1.0, &mut rng);
        p.bias[0] = 0.3;
        let c = 1.75;
        let x = fm(1, vec![c; 40]);
        let y = p.forward(&x).unwrap();
        let s: f64 = p.weight.iter().sum();
        // interior: every tap lands inside the signal
        for t in p.padding()..40 - p.padding() {
            assert!((y.channel(0)[t] - (c * s + p.bias[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (cin, cout, k, d, len) in [(2, 3, 5, 1, 17), (3, 2, 3, 4, 9), (1, 1, 5, 8, 6), (2, 2, 1, 1, 5)] {
            let mut p = Conv1d::<f64>::init(cin, cout, k, d, 1.0, &mut rng);
            p.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            let x = fm(cin, (0..cin * len).map(|_| rng.random_range(-1.0..1.0)).collect());
            let y = p.forward(&x).unwrap();
            for (a, b) in y.data().iter().zip(brute_conv(&x, &p)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_preserved_for_every_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = FeatureMap::<f32>::zeros(2, 2048);
        for d in [2, 4, 8, 16, 32, 64, 128, 256] {
            let p = Conv1d::<f32>::init(2, 4, 5, d, 2.0, &mut rng);
            assert_eq!(p.forward(&x).unwrap().len(), 2048);
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let p = Conv1d::<f64>::zeros(3, 1, 5, 1);
        assert!(matches!(p.forward(&fm(2, vec![0.0; 8])), Err(Error::Shape(_))));
    }

    #[test]
    fn even_kernel_rejected() {
        let p = Conv1d::<f64>::zeros(1, 1, 4, 1);
        assert!(matches!(p.forward(&fm(1, vec![0.0; 8])), Err(Error::Shape(_))));
    }

    #[test]
    fn gap_values() {
        assert_eq!(global_avg_pool(&fm(1, vec![3.5; 6])).unwrap(), vec![3.5]);
        assert_eq!(global_avg_pool(&fm(1, vec![1.0, 2.0, 3.0, 4.0])).unwrap(), vec![2.5]);
        let mut perm = vec![4.0, 1.0, 3.0, 2.0];
        let a = global_avg_pool(&fm(1, perm.clone())).unwrap();
        perm.reverse();
        assert_eq!(global_avg_pool(&fm(1, perm)).unwrap(), a);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|v| v as f64).collect();
        let b: Vec<f64> = (0..37).map(|v| 1.0 / (1.0 + v as f64)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn dense_forward_backward_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = Dense::<f64>::init(3, 2, 1.0, &mut rng);
        assert!(d.forward(&[1.0, 2.0]).is_err());
        let y = d.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y.len(), 2);
        let mut g = Dense::zeros(3, 2);
        let dx = d.backward(&[1.0, 2.0, 3.0], &[1.0, 0.0], &mut g);
        assert_eq!(dx, d.weight[0..3].to_vec());
        assert_eq!(g.weight[0..3], [1.0, 2.0, 3.0]);
        assert_eq!(g.bias, vec![1.0, 0.0]);
    }
}
