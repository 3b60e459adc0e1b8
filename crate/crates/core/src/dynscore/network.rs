//! Fully connected tanh network of a scalar input, evaluated together with
//! its first and second derivatives with respect to that input.
//!
//! Every activation is carried as a truncated Taylor jet `(value, d/ds,
//! d²/ds²)`. Batches are stored unit-major (`unit * points + point`) so the
//! inner loops run over contiguous points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Value, first and second derivative of a scalar with respect to the
/// network input.
pub type Jet = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Units per layer, input (always 1) first.
    pub sizes: Vec<usize>,
    /// Weights (row-major, `out x in`) then biases, layer by layer.
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: Vec<usize>) -> Self {
        let n = Self::param_count(&sizes);
        Mlp {
            sizes,
            params: vec![0.0; n],
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mlp = Self::zeros(sizes);
        let mut offset = 0;
        for w in mlp.sizes.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut mlp.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        mlp
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offsets of the weight block and bias block of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// Jets of every output at input `s`.
    pub fn eval(&self, s: f64) -> Vec<Jet> {
        let mut h: Vec<Jet> = vec![[s, 1.0, 0.0]];
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.offsets(l);
            let mut z = vec![[0.0; 3]; n_out];
            for (i, zi) in z.iter_mut().enumerate() {
                zi[0] = self.params[b_off + i];
                for (j, hj) in h.iter().enumerate() {
                    let w = self.params[w_off + i * n_in + j];
                    for k in 0..3 {
                        zi[k] += w * hj[k];
                    }
                }
            }
            if l + 1 < self.layers() {
                for zi in &mut z {
                    *zi = tanh_jet(*zi);
                }
            }
            h = z;
        }
        h
    }
}

/// `tanh` through one `exp`; about twice as fast as `f64::tanh` and within
/// an ulp or two of it.
#[inline]
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn tanh_jet(z: Jet) -> Jet {
    let f = tanh(z[0]);
    let f1 = 1.0 - f * f;
    let f2 = -2.0 * f * f1;
    [f, f1 * z[1], f2 * z[1] * z[1] + f1 * z[2]]
}

/// Forward activations for a fixed set of inputs, reused across iterations.
#[derive(Debug, Clone)]
pub struct BatchCache {
    points: usize,
    comps: usize,
    /// `acts[l][k]`: jet component `k` of layer-`l` activations (layer 0 is
    /// the input, the last layer is the linear output).
    acts: Vec<Vec<Vec<f64>>>,
    /// Pre-activation d/ds and d²/ds² of hidden layers (indices 0 and 1).
    pre: Vec<Vec<Vec<f64>>>,
    /// Scratch adjoint buffers with the same shape as `acts`.
    adj: Vec<Vec<Vec<f64>>>,
}

impl BatchCache {
    /// `derivatives` selects whether the d/ds and d²/ds² components are
    /// propagated.
    pub fn new(mlp: &Mlp, inputs: &[f64], derivatives: bool) -> Self {
        let points = inputs.len();
        let comps = if derivatives { 3 } else { 1 };
        let mut acts: Vec<Vec<Vec<f64>>> = mlp.sizes.iter().map(|&u| vec![vec![0.0; u * points]; comps]).collect();
        acts[0][0].copy_from_slice(inputs);
        if derivatives {
            acts[0][1].iter_mut().for_each(|v| *v = 1.0);
        }
        let adj = acts.clone();
        let pre = mlp
            .sizes
            .iter()
            .map(|&u| {
                if derivatives {
                    vec![vec![0.0; u * points]; 2]
                } else {
                    Vec::new()
                }
            })
            .collect();
        BatchCache {
            points,
            comps,
            acts,
            pre,
            adj,
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Output jet component `k` of output unit `o`, one value per point.
    pub fn output(&self, o: usize, k: usize) -> &[f64] {
        let last = self.acts.len() - 1;
        &self.acts[last][k][o * self.points..(o + 1) * self.points]
    }

    /// Adjoint buffer for output unit `o`, component `k`; fill before
    /// calling [`backward`].
    pub fn output_adjoint_mut(&mut self, o: usize, k: usize) -> &mut [f64] {
        let last = self.adj.len() - 1;
        let p = self.points;
        &mut self.adj[last][k][o * p..(o + 1) * p]
    }
}

/// Row-major `C = A·B + beta·C` with `A` given as `(data, row stride, col
/// stride)` so transposes need no copy.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize), beta: f64, c: &mut [f64]) {
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.0.len() >= span(m, k, a.1, a.2));
    assert!(b.0.len() >= span(k, n, b.1, b.2));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access in bounds, and `c`
    // is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn forward(mlp: &Mlp, cache: &mut BatchCache) {
    let p = cache.points;
    let layers = mlp.sizes.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (mlp.sizes[l], mlp.sizes[l + 1]);
        let (w_off, b_off) = mlp.offsets(l);
        let w = &mlp.params[w_off..b_off];
        let (lower, upper) = cache.acts.split_at_mut(l + 1);
        let (h, z) = (&lower[l], &mut upper[0]);
        for k in 0..cache.comps {
            if k == 0 {
                for (i, zi) in z[0].chunks_exact_mut(p).enumerate() {
                    zi.iter_mut().for_each(|v| *v = mlp.params[b_off + i]);
                }
            }
            let beta = if k == 0 { 1.0 } else { 0.0 };
            gemm(n_out, n_in, p, (w, n_in, 1), (&h[k], p, 1), beta, &mut z[k]);
        }
        if l + 1 < layers {
            let z = &mut cache.acts[l + 1];
            if cache.comps == 3 {
                let [z0, z1, z2] = &mut z[..] else { unreachable!() };
                let [p1, p2] = &mut cache.pre[l + 1][..] else {
                    unreachable!()
                };
                p1.copy_from_slice(z1);
                p2.copy_from_slice(z2);
                for ((v0, v1), v2) in z0.iter_mut().zip(z1.iter_mut()).zip(z2.iter_mut()) {
                    let [a, b, c] = tanh_jet([*v0, *v1, *v2]);
                    *v0 = a;
                    *v1 = b;
                    *v2 = c;
                }
            } else {
                z[0].iter_mut().for_each(|v| *v = tanh(*v));
            }
        }
    }
}

/// Accumulate the parameter gradient for the output adjoints currently in
/// the cache, using the activations of the latest [`forward`] call.
pub fn backward(mlp: &Mlp, cache: &mut BatchCache, grad: &mut [f64]) {
    let p = cache.points;
    let layers = mlp.sizes.len() - 1;
    let comps = cache.comps;
    for l in (0..layers).rev() {
        let (n_in, n_out) = (mlp.sizes[l], mlp.sizes[l + 1]);
        let (w_off, b_off) = mlp.offsets(l);

        // Turn the adjoint of layer l+1's activation into the adjoint of its
        // pre-activation (tanh layers only).
        if l + 1 < layers {
            let h = &cache.acts[l + 1];
            let zbar = &mut cache.adj[l + 1];
            if comps == 3 {
                let pre = &cache.pre[l + 1];
                let [a0, a1, a2] = &mut zbar[..] else { unreachable!() };
                let rows = h[0].iter().zip(&pre[0]).zip(&pre[1]);
                let adj = a0.iter_mut().zip(a1.iter_mut()).zip(a2.iter_mut());
                for (((&f, &z1), &z2), ((g0, g1), g2)) in rows.zip(adj) {
                    let f1 = 1.0 - f * f;
                    let f2 = -2.0 * f * f1;
                    let f3 = -2.0 * (f1 * f1 + f * f2);
                    let (b0, b1, b2) = (*g0, *g1, *g2);
                    *g0 = b0 * f1 + b1 * f2 * z1 + b2 * (f3 * z1 * z1 + f2 * z2);
                    *g1 = b1 * f1 + 2.0 * b2 * f2 * z1;
                    *g2 = b2 * f1;
                }
            } else {
                for (a, f) in zbar[0].iter_mut().zip(&h[0]) {
                    *a *= 1.0 - f * f;
                }
            }
        }

        let (adj_lower, adj_upper) = cache.adj.split_at_mut(l + 1);
        let zbar = &adj_upper[0];
        let hbar = &mut adj_lower[l];
        let h = &cache.acts[l];
        for (i, zi) in zbar[0].chunks_exact(p).enumerate() {
            grad[b_off + i] += zi.iter().sum::<f64>();
        }
        let (grad_w, _) = grad[w_off..].split_at_mut(n_out * n_in);
        for k in 0..comps {
            // dW += Zbar_k · H_kᵀ
            gemm(n_out, p, n_in, (&zbar[k], p, 1), (&h[k], 1, p), 1.0, grad_w);
            if l > 0 {
                // Hbar_k = Wᵀ · Zbar_k
                let w = &mlp.params[w_off..b_off];
                gemm(n_in, n_out, p, (w, 1, n_in), (&zbar[k], p, 1), 0.0, &mut hbar[k]);
            }
        }
    }
}
