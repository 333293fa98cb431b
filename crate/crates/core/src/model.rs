//! Interfaces shared by every AGHDO amplitude provider, whether a trained
//! network or an exact tabulation.

use num_complex::Complex64;

use crate::error::{GhdoError, Result};
use crate::spins::{AmplitudeTable, SpinConfig};

/// |ρ(σ,η)| below this is treated as an exact zero.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-150;

/// Supplies the unnormalized conditional amplitudes `φ[h, s, a]` of an AGHDO.
///
/// Implementations must be autoregressive: the block at site `h` may depend
/// on `σ_{<h}` only.
pub trait AmplitudeModel: Send + Sync {
    fn sites(&self) -> usize;

    fn local_rank(&self) -> usize;

    fn raw_amplitudes(&self, sigma: SpinConfig) -> AmplitudeTable;

    /// Normalized amplitudes `ψ[h, s, a]`.
    fn amplitudes(&self, sigma: SpinConfig) -> AmplitudeTable {
        self.raw_amplitudes(sigma).normalized()
    }
}

/// An amplitude model with a flat real parameter vector that can be
/// differentiated.
pub trait VariationalModel: AmplitudeModel {
    /// Number of real parameters `d`.
    fn num_params(&self) -> usize;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// Returns `log ρ(σ,η)` and `O_i = ∂ log ρ(σ,η) / ∂w_i` for every real
    /// parameter `w_i`.
    fn log_derivatives(&self, sigma: SpinConfig, eta: SpinConfig)
        -> Result<(Complex64, Vec<Complex64>)>;
}

/// Adjoints of `log ρ(σ,η)` with respect to the real and imaginary parts of
/// every entry of the raw tables `φ(σ)` and `φ(η)`.
///
/// Each adjoint is itself complex because `log ρ` is complex-valued:
/// `sigma_re[k] = ∂ log ρ / ∂ Re φ_σ[k]` and so on.
pub(crate) struct PairAdjoints {
    pub log_rho: Complex64,
    pub sigma_re: Vec<Complex64>,
    pub sigma_im: Vec<Complex64>,
    pub eta_re: Vec<Complex64>,
    pub eta_im: Vec<Complex64>,
}

pub(crate) fn log_rho_adjoints(
    phi_sigma: &AmplitudeTable,
    phi_eta: &AmplitudeTable,
    sigma: SpinConfig,
    eta: SpinConfig,
) -> Result<PairAdjoints> {
    let n = phi_sigma.sites();
    let r = phi_sigma.rank();
    let len = phi_sigma.values().len();
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out = PairAdjoints {
        log_rho: zero,
        sigma_re: vec![zero; len],
        sigma_im: vec![zero; len],
        eta_re: vec![zero; len],
        eta_im: vec![zero; len],
    };
    for h in 0..n {
        let ns = phi_sigma.site_norm_sqr(h);
        let ne = phi_eta.site_norm_sqr(h);
        let (ss, se) = (sigma.bit(h), eta.bit(h));
        let bs = phi_sigma.block(h, ss);
        let be = phi_eta.block(h, se);
        let u: Complex64 = bs.iter().zip(be).map(|(a, b)| a * b.conj()).sum();
        if u == zero || ns == 0.0 || ne == 0.0 {
            return Err(GhdoError::DegenerateAmplitude);
        }
        out.log_rho += u.ln() - 0.5 * ns.ln() - 0.5 * ne.ln();
        let inv_u = 1.0 / u;

        let os = phi_sigma.offset(h, 0);
        for k in 0..2 * r {
            let p = phi_sigma.values()[os + k];
            out.sigma_re[os + k] -= p.re / ns;
            out.sigma_im[os + k] -= p.im / ns;
            let q = phi_eta.values()[os + k];
            out.eta_re[os + k] -= q.re / ne;
            out.eta_im[os + k] -= q.im / ne;
        }
        let o_s = phi_sigma.offset(h, ss);
        let o_e = phi_eta.offset(h, se);
        for a in 0..r {
            let c = be[a].conj() * inv_u;
            out.sigma_re[o_s + a] += c;
            out.sigma_im[o_s + a] += i * c;
            let d = bs[a] * inv_u;
            out.eta_re[o_e + a] += d;
            out.eta_im[o_e + a] -= i * d;
        }
    }
    if out.log_rho.re < UNDERFLOW_THRESHOLD.ln() {
        return Err(GhdoError::DegenerateAmplitude);
    }
    Ok(out)
}
