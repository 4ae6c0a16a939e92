//! Two-head Gaussian policy `N(mu(s), diag(sigma(s)^2))`.

use rand_distr::{Distribution, StandardNormal};

use super::mlp::{validate_dims, Dense, OUTPUT_INIT_SCALE};
use super::{Parameterized, Policy, ScorePolicy};
use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Positive output map `x + sqrt(x^2 + 1)`.
#[inline]
pub fn std_map(x: f64) -> f64 {
    // Written as 1 / (sqrt(x^2 + 1) - x) for x < 0 to avoid cancellation.
    let r = (x * x + 1.0).sqrt();
    if x >= 0.0 {
        x + r
    } else {
        1.0 / (r - x)
    }
}

/// A shared tanh trunk feeding a linear mean head and a standard-deviation
/// head passed through [`std_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    trunk: Vec<Dense>,
    mean_head: Dense,
    std_head: Dense,
}

#[derive(Debug, Clone)]
struct Forward {
    acts: Vec<Vec<f64>>,
    mean: Vec<f64>,
    pre_std: Vec<f64>,
    std: Vec<f64>,
}

impl GaussianPolicy {
    /// `layer_dims = [d_s, h_1, ..., h_k, d_a]`: the trunk maps through the
    /// hidden widths and both heads map `h_k -> d_a`. Trunk layers are uniform
    /// on `+-1/sqrt(fan_in)`, head layers on `+-5e-3`.
    pub fn init(layer_dims: &[usize], rng: &mut StreamRng) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n = layer_dims.len();
        let trunk = layer_dims[..n - 1]
            .windows(2)
            .map(|w| Dense::uniform(w[0], w[1], 1.0 / (w[0] as f64).sqrt(), rng))
            .collect();
        let (h, da) = (layer_dims[n - 2], layer_dims[n - 1]);
        let mean_head = Dense::uniform(h, da, OUTPUT_INIT_SCALE, rng);
        let std_head = Dense::uniform(h, da, OUTPUT_INIT_SCALE, rng);
        Ok(Self { trunk, mean_head, std_head })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n = layer_dims.len();
        let trunk = layer_dims[..n - 1].windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        let (h, da) = (layer_dims[n - 2], layer_dims[n - 1]);
        Ok(Self { trunk, mean_head: Dense::zeros(h, da), std_head: Dense::zeros(h, da) })
    }

    pub fn from_parts(trunk: Vec<Dense>, mean_head: Dense, std_head: Dense) -> Result<Self> {
        for pair in trunk.windows(2) {
            check_dim(pair[0].out_dim(), pair[1].in_dim())?;
        }
        let h = trunk.last().map_or(mean_head.in_dim(), Dense::out_dim);
        check_dim(h, mean_head.in_dim())?;
        check_dim(h, std_head.in_dim())?;
        check_dim(mean_head.out_dim(), std_head.out_dim())?;
        Ok(Self { trunk, mean_head, std_head })
    }

    pub fn from_flat(layer_dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(layer_dims)?;
        p.set_flat_params(flat)?;
        Ok(p)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.state_dim_inner()];
        dims.extend(self.trunk.iter().map(Dense::out_dim));
        dims.push(self.mean_head.out_dim());
        dims
    }

    fn state_dim_inner(&self) -> usize {
        self.trunk.first().map_or(self.mean_head.in_dim(), Dense::in_dim)
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain([&self.mean_head, &self.std_head])
    }

    fn forward(&self, s: &[f64]) -> Forward {
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(s.to_vec());
        for layer in &self.trunk {
            let mut out = vec![0.0; layer.out_dim()];
            layer.forward(acts.last().unwrap(), &mut out);
            out.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(out);
        }
        let h = acts.last().unwrap();
        let da = self.mean_head.out_dim();
        let mut mean = vec![0.0; da];
        let mut pre_std = vec![0.0; da];
        self.mean_head.forward(h, &mut mean);
        self.std_head.forward(h, &mut pre_std);
        let std = pre_std.iter().map(|&x| std_map(x)).collect();
        Forward { acts, mean, pre_std, std }
    }

    pub fn mean(&self, s: &[f64]) -> Vec<f64> {
        self.forward(s).mean
    }

    pub fn std(&self, s: &[f64]) -> Vec<f64> {
        self.forward(s).std
    }

    /// `a = mu(s) + sigma(s) * z`, returning `(a, z)`.
    pub fn sample(&self, s: &[f64], rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        let f = self.forward(s);
        let z: Vec<f64> = (0..f.mean.len()).map(|_| StandardNormal.sample(rng)).collect();
        let a = f.mean.iter().zip(&f.std).zip(&z).map(|((m, sd), z)| m + sd * z).collect();
        (a, z)
    }

    /// Action for a given standard-normal draw.
    pub fn action_for(&self, s: &[f64], z: &[f64]) -> Vec<f64> {
        let f = self.forward(s);
        f.mean.iter().zip(&f.std).zip(z).map(|((m, sd), z)| m + sd * z).collect()
    }
}

impl Parameterized for GaussianPolicy {
    fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(l.weights());
            out.extend_from_slice(l.bias());
        }
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.param_count(), flat.len())?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite policy parameters".into()));
        }
        let mut off = 0;
        let mut rebuild = |l: &Dense| -> Result<Dense> {
            let nw = l.weights().len();
            let nb = l.bias().len();
            let d = Dense::from_parts(
                l.in_dim(),
                l.out_dim(),
                flat[off..off + nw].to_vec(),
                flat[off + nw..off + nw + nb].to_vec(),
            )?;
            off += nw + nb;
            Ok(d)
        };
        let trunk = self.trunk.iter().map(&mut rebuild).collect::<Result<Vec<_>>>()?;
        let mean_head = rebuild(&self.mean_head)?;
        let std_head = rebuild(&self.std_head)?;
        *self = Self { trunk, mean_head, std_head };
        Ok(())
    }
}

impl Policy for GaussianPolicy {
    fn state_dim(&self) -> usize {
        self.state_dim_inner()
    }

    fn action_dim(&self) -> usize {
        self.mean_head.out_dim()
    }

    fn act(&self, s: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let (a, _) = self.sample(s, rng);
        out.copy_from_slice(&a);
    }
}

impl ScorePolicy for GaussianPolicy {
    fn log_prob(&self, s: &[f64], a: &[f64]) -> f64 {
        let f = self.forward(s);
        f.mean
            .iter()
            .zip(&f.std)
            .zip(a)
            .map(|((m, sd), a)| {
                let u = (a - m) / sd;
                -HALF_LN_2PI - sd.ln() - 0.5 * u * u
            })
            .sum()
    }

    fn accumulate_score(&self, s: &[f64], a: &[f64], scale: f64, grad: &mut [f64]) {
        let f = self.forward(s);
        let da = f.mean.len();
        let mut d_mean = vec![0.0; da];
        let mut d_pre = vec![0.0; da];
        for i in 0..da {
            let sd = f.std[i];
            let diff = a[i] - f.mean[i];
            d_mean[i] = diff / (sd * sd);
            let d_std = -1.0 / sd + diff * diff / (sd * sd * sd);
            // d sigma / dx = sigma / sqrt(x^2 + 1)
            let x = f.pre_std[i];
            d_pre[i] = d_std * sd / (x * x + 1.0).sqrt();
        }

        let trunk_params: usize = self.trunk.iter().map(Dense::param_count).sum();
        let mean_params = self.mean_head.param_count();
        let (g_trunk, g_heads) = grad.split_at_mut(trunk_params);
        let (g_mean, g_std) = g_heads.split_at_mut(mean_params);

        let h = f.acts.last().unwrap();
        let mut dh = vec![0.0; h.len()];
        let mut dh_std = vec![0.0; h.len()];
        self.mean_head.backward(h, &d_mean, scale, g_mean, Some(&mut dh));
        self.std_head.backward(h, &d_pre, scale, g_std, Some(&mut dh_std));
        for (d, e) in dh.iter_mut().zip(&dh_std) {
            *d += e;
        }

        let mut offsets = Vec::with_capacity(self.trunk.len());
        let mut off = 0;
        for l in &self.trunk {
            offsets.push(off);
            off += l.param_count();
        }
        for l in (0..self.trunk.len()).rev() {
            let layer = &self.trunk[l];
            // dh is w.r.t. tanh output acts[l + 1]; convert to pre-activation.
            for (d, &y) in dh.iter_mut().zip(&f.acts[l + 1]) {
                *d *= 1.0 - y * y;
            }
            let g = &mut g_trunk[offsets[l]..offsets[l] + layer.param_count()];
            if l > 0 {
                let mut d_prev = vec![0.0; layer.in_dim()];
                layer.backward(&f.acts[l], &dh, scale, g, Some(&mut d_prev));
                dh = d_prev;
            } else {
                layer.backward(&f.acts[l], &dh, scale, g, None);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn unit_policy() -> GaussianPolicy {
        // No trunk: mean = 0, std = std_map(0) = 1 for every state.
        GaussianPolicy::zeros(&[2, 1]).unwrap()
    }

    #[test]
    fn std_map_is_positive_and_stable() {
        assert_eq!(std_map(0.0), 1.0);
        for &x in &[-1e8, -50.0, -1.0, 0.3, 10.0, 1e8] {
            let y = std_map(x);
            assert!(y > 0.0 && y.is_finite());
            let direct = x + (x * x + 1.0).sqrt();
            if x > -10.0 {
                assert!((y - direct).abs() <= 1e-12 * y.max(1.0));
            }
        }
    }

    #[test]
    fn log_prob_at_mean() {
        let p = unit_policy();
        assert!((p.log_prob(&[0.3, 0.2], &[0.0]) + 0.918_938_5).abs() < 1e-7);
        assert!((p.log_prob(&[0.3, 0.2], &[1.0]) + 0.918_938_5 + 0.5).abs() < 1e-7);
    }

    #[test]
    fn log_prob_is_maximized_at_mean() {
        let p = GaussianPolicy::init(&[2, 4, 1], &mut stream(1, 0, 0, Domain::Init)).unwrap();
        let s = [0.4, -0.1];
        let m = p.mean(&s)[0];
        let best = p.log_prob(&s, &[m]);
        for d in [-1.0, -1e-3, 1e-3, 0.5] {
            assert!(p.log_prob(&s, &[m + d]) < best);
        }
    }

    #[test]
    fn zero_draw_returns_mean() {
        let p = GaussianPolicy::init(&[2, 4, 2], &mut stream(2, 0, 0, Domain::Init)).unwrap();
        let s = [0.1, 0.9];
        assert_eq!(p.action_for(&s, &[0.0, 0.0]), p.mean(&s));
    }

    #[test]
    fn initial_std_is_close_to_one() {
        let p = GaussianPolicy::init(&[2, 32, 32, 1], &mut stream(3, 0, 0, Domain::Init)).unwrap();
        let sd = p.std(&[-0.5, 0.0])[0];
        assert!((sd - 1.0).abs() < 0.2);
    }

    #[test]
    fn flatten_round_trip() {
        let p = GaussianPolicy::init(&[3, 5, 4, 2], &mut stream(4, 0, 0, Domain::Init)).unwrap();
        let flat = p.flat_params();
        assert_eq!(flat.len(), p.param_count());
        let q = GaussianPolicy::from_flat(&p.layer_dims(), &flat).unwrap();
        assert_eq!(p, q);
    }
}
