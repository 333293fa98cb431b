//! Complex-valued masked autoregressive network.
//!
//! The network maps a spin configuration to the unnormalized amplitudes
//! `φ[h, s, a]`. Every layer is a dense complex layer whose weight matrix is
//! block-lower-triangular over sites: the first layer uses an exclusive mask
//! (output site `h` sees input sites `< h`), all deeper layers an inclusive
//! one (`≤ h`). Hidden layers are followed by SELU acting separately on the
//! real and imaginary parts. The final layer emits `2·R` values per site,
//! laid out as `(s, a)` with `s = 0` for σ_h = −1.
//!
//! Weights are stored densely, masked entries included, so the parameter
//! count depends only on the [`NetworkSpec`]. Masked entries never enter the
//! forward pass and always receive a zero gradient.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GhdoError, Result};
use crate::model::{log_rho_adjoints, AmplitudeModel, VariationalModel};
use crate::spins::{AmplitudeTable, SpinConfig};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

#[inline]
fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// SELU applied independently to the real and imaginary parts.
#[inline]
pub fn selu_complex(z: Complex64) -> Complex64 {
    Complex64::new(selu(z.re), selu(z.im))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    /// Output block `h` sees input blocks `< h`.
    Exclusive,
    /// Output block `h` sees input blocks `≤ h`.
    Inclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedLayerSpec {
    pub sites: usize,
    pub in_features_per_site: usize,
    pub out_features_per_site: usize,
    pub mask_kind: MaskKind,
}

impl MaskedLayerSpec {
    pub fn in_total(&self) -> usize {
        self.sites * self.in_features_per_site
    }

    pub fn out_total(&self) -> usize {
        self.sites * self.out_features_per_site
    }

    /// Number of leading inputs that feed output `o`. Inputs are grouped by
    /// site, so the allowed set is always a prefix.
    #[inline]
    pub fn visible_inputs(&self, o: usize) -> usize {
        let site = o / self.out_features_per_site;
        match self.mask_kind {
            MaskKind::Exclusive => site * self.in_features_per_site,
            MaskKind::Inclusive => (site + 1) * self.in_features_per_site,
        }
    }

    #[inline]
    pub fn is_connected(&self, o: usize, i: usize) -> bool {
        i < self.visible_inputs(o)
    }

    /// Complex parameters: dense weights followed by biases.
    pub fn complex_params(&self) -> usize {
        self.out_total() * self.in_total() + self.out_total()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub sites: usize,
    pub local_rank: usize,
    /// Hidden complex features per site, one entry per hidden layer.
    pub feature_densities: Vec<usize>,
    pub init_width: f64,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 || self.sites > crate::spins::MAX_SITES {
            return Err(GhdoError::Config(format!(
                "sites must be in 1..={}, got {}",
                crate::spins::MAX_SITES,
                self.sites
            )));
        }
        if self.local_rank == 0 {
            return Err(GhdoError::Config("local_rank must be at least 1".into()));
        }
        if self.feature_densities.is_empty() {
            return Err(GhdoError::Config(
                "feature_densities must not be empty".into(),
            ));
        }
        if self.feature_densities.iter().any(|&f| f == 0) {
            return Err(GhdoError::Config(
                "feature densities must be positive".into(),
            ));
        }
        if !(self.init_width > 0.0 && self.init_width <= 1.0) {
            return Err(GhdoError::Config(format!(
                "init_width must lie in (0, 1], got {}",
                self.init_width
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<MaskedLayerSpec> {
        let mut layers = Vec::with_capacity(self.feature_densities.len() + 1);
        let mut fan_in = 1;
        for (l, &f) in self.feature_densities.iter().enumerate() {
            layers.push(MaskedLayerSpec {
                sites: self.sites,
                in_features_per_site: fan_in,
                out_features_per_site: f,
                mask_kind: if l == 0 {
                    MaskKind::Exclusive
                } else {
                    MaskKind::Inclusive
                },
            });
            fan_in = f;
        }
        layers.push(MaskedLayerSpec {
            sites: self.sites,
            in_features_per_site: fan_in,
            out_features_per_site: 2 * self.local_rank,
            mask_kind: MaskKind::Inclusive,
        });
        layers
    }

    pub fn num_complex_params(&self) -> usize {
        self.layers().iter().map(|l| l.complex_params()).sum()
    }

    /// `d`, the number of real parameters.
    pub fn num_params(&self) -> usize {
        2 * self.num_complex_params()
    }
}

/// Complex network parameters. The flat real view interleaves `(Re, Im)`
/// of each complex entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    values: Vec<Complex64>,
}

impl ParameterVector {
    pub fn from_complex(values: Vec<Complex64>) -> Self {
        ParameterVector { values }
    }

    pub fn unflatten(real: &[f64]) -> Result<Self> {
        if real.len() % 2 != 0 {
            return Err(GhdoError::Input(format!(
                "real parameter vector has odd length {}",
                real.len()
            )));
        }
        Ok(ParameterVector {
            values: real
                .chunks_exact(2)
                .map(|c| Complex64::new(c[0], c[1]))
                .collect(),
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    /// Real length `d`.
    pub fn len(&self) -> usize {
        2 * self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn complex(&self) -> &[Complex64] {
        &self.values
    }

    pub fn complex_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
}

/// Draws every real and imaginary part from a normal distribution of standard
/// deviation `init_width`, truncated at two widths by rejection.
pub fn init_params(spec: &NetworkSpec) -> Result<ParameterVector> {
    spec.validate()?;
    let width = spec.init_width;
    let normal = Normal::new(0.0, width)
        .map_err(|e| GhdoError::Config(format!("invalid init width: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = || loop {
        let x: f64 = normal.sample(&mut rng);
        if x.abs() <= 2.0 * width {
            break x;
        }
    };
    let values = (0..spec.num_complex_params())
        .map(|_| {
            let re = draw();
            let im = draw();
            Complex64::new(re, im)
        })
        .collect();
    Ok(ParameterVector { values })
}

/// Activations recorded during a forward pass, needed for backpropagation.
pub struct ForwardCache {
    /// Input of each layer (the spin values for layer 0).
    inputs: Vec<Vec<Complex64>>,
    /// Pre-activation output of each layer; the last one is `φ`.
    outputs: Vec<Vec<Complex64>>,
}

impl ForwardCache {
    pub fn phi(&self, sites: usize, rank: usize) -> AmplitudeTable {
        AmplitudeTable::from_values(sites, rank, self.outputs.last().unwrap().clone())
    }
}

#[derive(Clone, Debug)]
pub struct AghdoNetwork {
    spec: NetworkSpec,
    layers: Vec<MaskedLayerSpec>,
    /// Complex offset of each layer's block in the parameter vector.
    offsets: Vec<usize>,
    params: ParameterVector,
}

impl AghdoNetwork {
    /// Builds a network with freshly initialized parameters.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let params = init_params(&spec)?;
        Self::with_params(spec, params)
    }

    pub fn with_params(spec: NetworkSpec, params: ParameterVector) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(GhdoError::Input(format!(
                "parameter vector has {} real entries, network needs {}",
                params.len(),
                spec.num_params()
            )));
        }
        let layers = spec.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut acc = 0;
        for l in &layers {
            offsets.push(acc);
            acc += l.complex_params();
        }
        Ok(AghdoNetwork {
            spec,
            layers,
            offsets,
            params,
        })
    }

    /// A network whose weights are all zero and whose hidden biases are zero,
    /// so that `φ[h, s, a] = f(h, s, a)` for every input. Useful for product
    /// states with known amplitudes.
    pub fn with_output_bias<F>(spec: NetworkSpec, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, usize) -> Complex64,
    {
        let zeros = ParameterVector::from_complex(vec![
            Complex64::new(0.0, 0.0);
            spec.num_complex_params()
        ]);
        let mut net = Self::with_params(spec, zeros)?;
        let r = net.spec.local_rank;
        for h in 0..net.spec.sites {
            for s in 0..2 {
                for a in 0..r {
                    let k = net.bias_index(net.layers.len() - 1, (h * 2 + s) * r + a);
                    net.params.values[k] = f(h, s, a);
                }
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layer_specs(&self) -> &[MaskedLayerSpec] {
        &self.layers
    }

    pub fn parameters(&self) -> &ParameterVector {
        &self.params
    }

    /// Complex index of weight `(o, i)` of layer `l`.
    pub fn weight_index(&self, l: usize, o: usize, i: usize) -> usize {
        self.offsets[l] + o * self.layers[l].in_total() + i
    }

    pub fn bias_index(&self, l: usize, o: usize) -> usize {
        let layer = &self.layers[l];
        self.offsets[l] + layer.out_total() * layer.in_total() + o
    }

    /// `φ[h, s, a]` for a configuration given as a slice of ±1 values.
    pub fn forward_amplitudes(&self, sigma: &[i8]) -> Result<AmplitudeTable> {
        if sigma.len() != self.spec.sites {
            return Err(GhdoError::Input(format!(
                "configuration has {} sites, model has {}",
                sigma.len(),
                self.spec.sites
            )));
        }
        let cfg = SpinConfig::from_spins(sigma)?;
        Ok(self.raw_amplitudes(cfg))
    }

    pub fn forward(&self, sigma: SpinConfig) -> ForwardCache {
        let input: Vec<Complex64> = (0..self.spec.sites)
            .map(|h| Complex64::new(f64::from(sigma.get(h)), 0.0))
            .collect();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input;
        let w = self.params.complex();
        for (l, layer) in self.layers.iter().enumerate() {
            let n_in = layer.in_total();
            let wbase = self.offsets[l];
            let bbase = wbase + layer.out_total() * n_in;
            let z: Vec<Complex64> = (0..layer.out_total())
                .map(|o| {
                    let row = &w[wbase + o * n_in..wbase + o * n_in + layer.visible_inputs(o)];
                    let mut acc = w[bbase + o];
                    for (wi, xi) in row.iter().zip(&x) {
                        acc += wi * xi;
                    }
                    acc
                })
                .collect();
            inputs.push(x);
            x = if l + 1 < self.layers.len() {
                z.iter().map(|&v| selu_complex(v)).collect()
            } else {
                Vec::new()
            };
            outputs.push(z);
        }
        ForwardCache { inputs, outputs }
    }

    /// Accumulates into `grad` (interleaved real/imag parameter order) the
    /// derivatives of a complex scalar `F` given its adjoints with respect to
    /// the real and imaginary parts of every network output.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        adj_re: &[Complex64],
        adj_im: &[Complex64],
        grad: &mut [Complex64],
    ) {
        debug_assert_eq!(grad.len(), self.params.len());
        let w = self.params.complex();
        let mut gr = adj_re.to_vec();
        let mut gi = adj_im.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let n_in = layer.in_total();
            let x = &cache.inputs[l];
            let wbase = self.offsets[l];
            let bbase = wbase + layer.out_total() * n_in;
            let need_input_adj = l > 0;
            let zero = Complex64::new(0.0, 0.0);
            let mut xr_adj = vec![zero; if need_input_adj { n_in } else { 0 }];
            let mut xi_adj = vec![zero; if need_input_adj { n_in } else { 0 }];
            for o in 0..layer.out_total() {
                let (a, b) = (gr[o], gi[o]);
                if a == zero && b == zero {
                    continue;
                }
                let vis = layer.visible_inputs(o);
                let row = wbase + o * n_in;
                for i in 0..vis {
                    let xv = x[i];
                    let k = row + i;
                    grad[2 * k] += a * xv.re + b * xv.im;
                    grad[2 * k + 1] += b * xv.re - a * xv.im;
                    if need_input_adj {
                        let wv = w[k];
                        xr_adj[i] += a * wv.re + b * wv.im;
                        xi_adj[i] += b * wv.re - a * wv.im;
                    }
                }
                grad[2 * (bbase + o)] += a;
                grad[2 * (bbase + o) + 1] += b;
            }
            if need_input_adj {
                let z_prev = &cache.outputs[l - 1];
                gr = xr_adj
                    .iter()
                    .zip(z_prev)
                    .map(|(g, z)| g * selu_derivative(z.re))
                    .collect();
                gi = xi_adj
                    .iter()
                    .zip(z_prev)
                    .map(|(g, z)| g * selu_derivative(z.im))
                    .collect();
            }
        }
    }
}

impl AmplitudeModel for AghdoNetwork {
    fn sites(&self) -> usize {
        self.spec.sites
    }

    fn local_rank(&self) -> usize {
        self.spec.local_rank
    }

    fn raw_amplitudes(&self, sigma: SpinConfig) -> AmplitudeTable {
        self.forward(sigma).phi(self.spec.sites, self.spec.local_rank)
    }
}

impl VariationalModel for AghdoNetwork {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> Vec<f64> {
        self.params.flatten()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(GhdoError::Input(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = ParameterVector::unflatten(params)?;
        Ok(())
    }

    fn log_derivatives(
        &self,
        sigma: SpinConfig,
        eta: SpinConfig,
    ) -> Result<(Complex64, Vec<Complex64>)> {
        let n = self.spec.sites;
        let r = self.spec.local_rank;
        let cs = self.forward(sigma);
        let ce = self.forward(eta);
        let adj = log_rho_adjoints(&cs.phi(n, r), &ce.phi(n, r), sigma, eta)?;
        let mut grad = vec![Complex64::new(0.0, 0.0); self.params.len()];
        self.backward(&cs, &adj.sigma_re, &adj.sigma_im, &mut grad);
        self.backward(&ce, &adj.eta_re, &adj.eta_im, &mut grad);
        Ok((adj.log_rho, grad))
    }
}
