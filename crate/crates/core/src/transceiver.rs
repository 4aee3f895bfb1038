//! Closed-form precoder and combiner updates and the MSE bookkeeping around them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::channel::{FrequencyChannel, Subcarrier};
use crate::error::{Error, Result};
use crate::model::C64;

/// Precoders `b_{k,n}` (K × N) and combiners `w_n` (columns of an M × N matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverState {
    pub precoders: DMatrix<C64>,
    pub combiners: DMatrix<C64>,
}

impl TransceiverState {
    pub fn max_precoder_power(&self) -> f64 {
        self.precoders.iter().map(|b| b.norm_sqr()).fold(0.0, f64::max)
    }
}

/// Every user at full power `√P` with zero phase on every subcarrier.
pub fn full_power_precoders(num_users: usize, num_subcarriers: usize, power: f64) -> DMatrix<C64> {
    DMatrix::from_element(num_users, num_subcarriers, C64::new(power.sqrt(), 0.0))
}

/// Optimal precoders for fixed combiners:
/// `b_{k,n} = min(√P, |w_nᴴ h_{k,n}|⁻¹) · exp(-j ∠ w_nᴴ h_{k,n})`.
///
/// A vanishing effective gain leaves every phase optimal; `√P` with zero
/// phase is returned there.
pub fn update_precoders(fc: &FrequencyChannel, combiners: &DMatrix<C64>, power: f64) -> DMatrix<C64> {
    let sqrt_p = power.sqrt();
    DMatrix::from_fn(fc.num_users(), fc.num_subcarriers(), |k, idx| {
        let gain = combiners.column(idx).dotc(&fc.h(idx).column(k));
        let mag = gain.norm();
        if mag == 0.0 {
            return C64::new(sqrt_p, 0.0);
        }
        let amp = sqrt_p.min(mag.recip());
        C64::from_polar(amp, -gain.arg())
    })
}

/// Per-subcarrier quantities shared by the combiner update, the MSE
/// identities and the position surrogate.
#[derive(Debug, Clone)]
pub struct SubcarrierWorkspace {
    /// Diagonal of `B_n`: `|b_{k,n}|²`.
    pub b_power: DVector<f64>,
    /// `b̄_n`.
    pub b_bar: DVector<C64>,
    /// `V_n = H_n B_n H_nᴴ + σ² I`.
    pub v: DMatrix<C64>,
    /// `H_n b̄_n`.
    pub h_b: DVector<C64>,
    /// `V_n⁻¹ H_n b̄_n`, the MMSE combiner.
    pub combiner: DVector<C64>,
    chol: Cholesky<C64, Dyn>,
}

impl SubcarrierWorkspace {
    pub fn new(fc: &FrequencyChannel, precoders: &DMatrix<C64>, noise_power: f64, index: usize) -> Result<Self> {
        let h = fc.h(index);
        let b_bar: DVector<C64> = precoders.column(index).into_owned();
        let b_power = b_bar.map(|b| b.norm_sqr());
        let mut scaled = h.clone();
        for (k, p) in b_power.iter().enumerate() {
            scaled.column_mut(k).scale_mut(p.sqrt());
        }
        let mut v = &scaled * scaled.adjoint();
        for i in 0..v.nrows() {
            v[(i, i)] += C64::new(noise_power, 0.0);
        }
        let chol = Cholesky::new(v.clone()).ok_or(Error::NotPositiveDefinite {
            subcarrier: Subcarrier::from_index(index).number(),
        })?;
        let h_b = h * &b_bar;
        let combiner = chol.solve(&h_b);
        if combiner.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                subcarrier: Subcarrier::from_index(index).number(),
            });
        }
        Ok(Self {
            b_power,
            b_bar,
            v,
            h_b,
            combiner,
            chol,
        })
    }

    /// `b̄ᴴ Hᴴ V⁻¹ H b̄`, real and non-negative.
    pub fn objective_term(&self) -> f64 {
        self.h_b.dotc(&self.combiner).re
    }

    /// MSE attained by the MMSE combiner: `ξ_n = K - b̄ᴴ Hᴴ V⁻¹ H b̄`.
    pub fn xi(&self) -> f64 {
        self.b_bar.len() as f64 - self.objective_term()
    }

    /// `V_n⁻¹ x`.
    pub fn solve(&self, x: &DVector<C64>) -> DVector<C64> {
        self.chol.solve(x)
    }
}

/// MMSE combiners `w_n = V_n⁻¹ H_n b̄_n` for fixed precoders.
pub fn update_combiners(fc: &FrequencyChannel, precoders: &DMatrix<C64>, noise_power: f64) -> Result<DMatrix<C64>> {
    let mut w = DMatrix::zeros(fc.num_antennas(), fc.num_subcarriers());
    for idx in 0..fc.num_subcarriers() {
        let ws = SubcarrierWorkspace::new(fc, precoders, noise_power, idx)?;
        w.set_column(idx, &ws.combiner);
    }
    Ok(w)
}

pub(crate) fn mse_at(
    fc: &FrequencyChannel,
    precoders: &DMatrix<C64>,
    combiners: &DMatrix<C64>,
    noise_power: f64,
    index: usize,
) -> f64 {
    let w = combiners.column(index);
    let h = fc.h(index);
    let residual: f64 = (0..fc.num_users())
        .map(|k| (w.dotc(&h.column(k)) * precoders[(k, index)] - 1.0).norm_sqr())
        .sum();
    residual + noise_power * w.norm_squared()
}

/// `MSE_n = Σ_k |w_nᴴ h_{k,n} b_{k,n} - 1|² + σ² ‖w_n‖²` for the 1-based subcarrier `n`.
pub fn mse_per_subcarrier(
    fc: &FrequencyChannel,
    precoders: &DMatrix<C64>,
    combiners: &DMatrix<C64>,
    noise_power: f64,
    n: usize,
) -> Result<f64> {
    let sc = Subcarrier::new(n, fc.num_subcarriers())?;
    Ok(mse_at(fc, precoders, combiners, noise_power, sc.index()))
}

/// Mean of `MSE_n` over all subcarriers.
pub fn overall_mse(fc: &FrequencyChannel, precoders: &DMatrix<C64>, combiners: &DMatrix<C64>, noise_power: f64) -> f64 {
    let n_sub = fc.num_subcarriers();
    (0..n_sub)
        .map(|idx| mse_at(fc, precoders, combiners, noise_power, idx))
        .sum::<f64>()
        / n_sub as f64
}

/// `Σ_n b̄_nᴴ H_nᴴ V_n⁻¹ H_n b̄_n`, the quantity the position update maximizes.
/// With MMSE combiners, `overall_mse = K - position_objective / N`.
pub fn position_objective(fc: &FrequencyChannel, precoders: &DMatrix<C64>, noise_power: f64) -> Result<f64> {
    let mut total = 0.0;
    for idx in 0..fc.num_subcarriers() {
        total += SubcarrierWorkspace::new(fc, precoders, noise_power, idx)?.objective_term();
    }
    Ok(total)
}
