//! Sample-level OFDM link: IDFT, cyclic prefix, multipath delay line, CP
//! removal and DFT. It shares nothing with [`crate::channel`] beyond the
//! geometry primitive, so agreement between the two checks the
//! frequency-domain model and its subcarrier index convention.
//!
//! Time indices run `t = 1..=N` and subcarriers `n = 1..=N`; the IDFT kernel
//! is `exp(+j 2π t n / N)` and the DFT kernel `exp(-j 2π t n / N)`, both
//! scaled by `1/√N`.
//!
//! The delay line uses taps `h̃_{k,l} / √N`. With the unitary transform pair
//! this is the normalization under which the per-subcarrier channel is
//! `h_{k,n} = (1/√N) Σ_l h̃_{k,l} exp(-j 2π n p_{k,l} / N)` and
//! `Σ_n ‖h_{k,n}‖²` equals the tap energy.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::channel::path_difference;
use crate::error::{Error, Result};
use crate::model::{AntennaLayout, ChannelRealization, C64};

/// One OFDM symbol per user, cyclic prefix first.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainFrame {
    /// `samples[k]` has length `cp_len + N`.
    pub samples: Vec<Vec<C64>>,
    pub cp_len: usize,
    pub num_subcarriers: usize,
}

impl TimeDomainFrame {
    /// Useful part (CP stripped) of user `k`; entry `t - 1` is sample `t`.
    pub fn symbol(&self, k: usize) -> &[C64] {
        &self.samples[k][self.cp_len..]
    }

    pub fn prefix(&self, k: usize) -> &[C64] {
        &self.samples[k][..self.cp_len]
    }
}

fn kernel(t: usize, n: usize, count: usize, sign: f64) -> C64 {
    let turns = ((t * n) % count) as f64 / count as f64;
    C64::from_polar(1.0, sign * 2.0 * PI * turns)
}

fn idft(freq: &[C64]) -> Vec<C64> {
    let count = freq.len();
    let scale = 1.0 / (count as f64).sqrt();
    (1..=count)
        .map(|t| (1..=count).map(|n| freq[n - 1] * kernel(t, n, count, 1.0)).sum::<C64>() * scale)
        .collect()
}

fn dft(time: &[C64]) -> Vec<C64> {
    let count = time.len();
    let scale = 1.0 / (count as f64).sqrt();
    (1..=count)
        .map(|n| {
            (1..=count)
                .map(|t| time[t - 1] * kernel(t, n, count, -1.0))
                .sum::<C64>()
                * scale
        })
        .collect()
}

/// IDFT of each user's row of `symbols` (K × N) followed by a cyclic prefix of
/// `cp_len` samples. Fails when the prefix cannot cover `max_delay`.
pub fn modulate(symbols: &DMatrix<C64>, cp_len: usize, max_delay: usize) -> Result<TimeDomainFrame> {
    if cp_len < max_delay {
        return Err(Error::CyclicPrefixTooShort { cp_len, max_delay });
    }
    let count = symbols.ncols();
    if cp_len > count {
        return Err(Error::Dimension(format!(
            "cyclic prefix {cp_len} longer than the symbol ({count} samples)"
        )));
    }
    let samples = symbols
        .row_iter()
        .map(|row| {
            let freq: Vec<C64> = row.iter().copied().collect();
            let body = idft(&freq);
            let mut frame = Vec::with_capacity(cp_len + count);
            frame.extend_from_slice(&body[count - cp_len..]);
            frame.extend_from_slice(&body);
            frame
        })
        .collect();
    Ok(TimeDomainFrame {
        samples,
        cp_len,
        num_subcarriers: count,
    })
}

/// Strips the prefix and applies the DFT; the inverse of [`modulate`] over an
/// ideal channel.
pub fn demodulate(frame: &TimeDomainFrame) -> DMatrix<C64> {
    let rows: Vec<Vec<C64>> = (0..frame.samples.len()).map(|k| dft(frame.symbol(k))).collect();
    DMatrix::from_fn(rows.len(), frame.num_subcarriers, |k, i| rows[k][i])
}

/// Noiseless receive chain: each path of each user is a delayed, phase-rotated
/// copy of the transmitted frame at every antenna (tap `h̃_{k,l}/√N`); the CP
/// is removed and the DFT taken. Returns `z_n` for `n = 1..=N` (index `n - 1`), each of length M.
pub fn propagate_and_demodulate(
    frame: &TimeDomainFrame,
    chan: &ChannelRealization,
    layout: &AntennaLayout,
    wavelength: f64,
) -> Result<Vec<DVector<C64>>> {
    if chan.max_delay() > frame.cp_len {
        return Err(Error::CyclicPrefixTooShort {
            cp_len: frame.cp_len,
            max_delay: chan.max_delay(),
        });
    }
    let count = frame.num_subcarriers;
    let frame_len = frame.cp_len + count;
    let m_ant = layout.len();
    let tap_scale = 1.0 / (count as f64).sqrt();
    // received[m][i] over the whole frame, linear convolution.
    let mut received = vec![vec![C64::default(); frame_len]; m_ant];
    for k in 0..chan.num_users() {
        let tx = &frame.samples[k];
        for l in 0..chan.num_paths() {
            let delay = chan.delays[(k, l)];
            for (m, rx) in received.iter_mut().enumerate() {
                let rho = path_difference(layout.get(m), chan.elevations[(k, l)], chan.azimuths[(k, l)]);
                let coeff = chan.gains[(k, l)] * C64::from_polar(tap_scale, -2.0 * PI / wavelength * rho);
                for i in delay..frame_len {
                    rx[i] += coeff * tx[i - delay];
                }
            }
        }
    }
    let spectra: Vec<Vec<C64>> = received.iter().map(|rx| dft(&rx[frame.cp_len..])).collect();
    Ok((0..count)
        .map(|i| DVector::from_fn(m_ant, |m, _| spectra[m][i]))
        .collect())
}
