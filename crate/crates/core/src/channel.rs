//! Geometry-to-channel synthesis.
//!
//! Subcarriers are numbered `n = 1..=N` in every formula, matching the phase
//! factor `exp(-j 2π n p / N)`; storage is 0-based, so subcarrier `n` lives at
//! index `n - 1`. [`Subcarrier`] carries that mapping.
//!
//! The stacked path index used by `F`, `G` and `E_n` is `k * L + l`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{AntennaLayout, ChannelRealization, Position, C64};

/// A 1-based subcarrier number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subcarrier(usize);

impl Subcarrier {
    pub fn new(n: usize, count: usize) -> Result<Self> {
        if n == 0 || n > count {
            return Err(Error::SubcarrierOutOfRange { index: n, count });
        }
        Ok(Self(n))
    }

    /// Subcarrier stored at 0-based `index`.
    pub fn from_index(index: usize) -> Self {
        Self(index + 1)
    }

    pub fn number(self) -> usize {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 - 1
    }
}

/// Far-field path length difference `x sinθ cosφ + y cosθ`.
pub fn path_difference(r: Position, elevation: f64, azimuth: f64) -> f64 {
    r.x * elevation.sin() * azimuth.cos() + r.y * elevation.cos()
}

fn phase(r: Position, chan: &ChannelRealization, k: usize, l: usize, wavenumber: f64) -> f64 {
    wavenumber * path_difference(r, chan.elevations[(k, l)], chan.azimuths[(k, l)])
}

/// Receive field-response vector `f_k(r)` of user `k` (0-based), length L.
pub fn field_response_vector(r: Position, k: usize, chan: &ChannelRealization, wavelength: f64) -> DVector<C64> {
    let wavenumber = 2.0 * PI / wavelength;
    DVector::from_fn(chan.num_paths(), |l, _| {
        C64::from_polar(1.0, phase(r, chan, k, l, wavenumber))
    })
}

/// `η(r) = [f_1(r)ᵀ, …, f_K(r)ᵀ]ᵀ`, the block of `vec(Fᴴ)` that belongs to an
/// antenna at `r`.
pub fn response_block(r: Position, chan: &ChannelRealization, wavelength: f64) -> DVector<C64> {
    let mut out = DVector::zeros(chan.num_users() * chan.num_paths());
    write_response_block(r, chan, wavelength, out.as_mut_slice());
    out
}

pub(crate) fn write_response_block(r: Position, chan: &ChannelRealization, wavelength: f64, out: &mut [C64]) {
    let wavenumber = 2.0 * PI / wavelength;
    let paths = chan.num_paths();
    for k in 0..chan.num_users() {
        for l in 0..paths {
            out[k * paths + l] = C64::from_polar(1.0, phase(r, chan, k, l, wavenumber));
        }
    }
}

/// Per-subcarrier channels `H_n` together with the factors `H_n = F G E_n`.
#[derive(Debug, Clone)]
pub struct FrequencyChannel {
    f: DMatrix<C64>,
    g: DVector<C64>,
    /// Column `n - 1` stacks `e_{1,n}, …, e_{K,n}`.
    e: DMatrix<C64>,
    h: Vec<DMatrix<C64>>,
    num_users: usize,
    num_paths: usize,
}

/// Builds `F`, `G`, `E_n` for the layout and multiplies them out into `H_n`.
pub fn assemble_factors(
    layout: &AntennaLayout,
    chan: &ChannelRealization,
    num_subcarriers: usize,
    wavelength: f64,
) -> FrequencyChannel {
    let (k_users, l_paths) = (chan.num_users(), chan.num_paths());
    let kl = k_users * l_paths;
    let m_ant = layout.len();

    let mut f = DMatrix::zeros(m_ant, kl);
    let mut block = vec![C64::default(); kl];
    for (m, r) in layout.positions().iter().enumerate() {
        write_response_block(*r, chan, wavelength, &mut block);
        for (j, v) in block.iter().enumerate() {
            f[(m, j)] = v.conj();
        }
    }

    let g = DVector::from_fn(kl, |j, _| chan.gains[(j / l_paths, j % l_paths)]);

    let n_sub = num_subcarriers;
    let norm = 1.0 / (n_sub as f64).sqrt();
    let e = DMatrix::from_fn(kl, n_sub, |j, idx| {
        let n = Subcarrier::from_index(idx).number();
        let p = chan.delays[(j / l_paths, j % l_paths)];
        // n * p mod N keeps the angle small and exact.
        let turns = ((n * p) % n_sub) as f64 / n_sub as f64;
        C64::from_polar(norm, -2.0 * PI * turns)
    });

    // H_n = (F G) E_n with E_n applied blockwise.
    let fg = DMatrix::from_fn(m_ant, kl, |m, j| f[(m, j)] * g[j]);
    let h = (0..n_sub)
        .map(|idx| {
            DMatrix::from_fn(m_ant, k_users, |m, k| {
                (0..l_paths)
                    .map(|l| fg[(m, k * l_paths + l)] * e[(k * l_paths + l, idx)])
                    .sum()
            })
        })
        .collect();

    FrequencyChannel {
        f,
        g,
        e,
        h,
        num_users: k_users,
        num_paths: l_paths,
    }
}

impl FrequencyChannel {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn num_antennas(&self) -> usize {
        self.f.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.h.len()
    }

    /// `F = [F_1ᴴ, …, F_Kᴴ]`, size `M × KL`.
    pub fn f(&self) -> &DMatrix<C64> {
        &self.f
    }

    /// Diagonal of `G`.
    pub fn g(&self) -> &DVector<C64> {
        &self.g
    }

    /// `H_n` by 0-based storage index.
    pub fn h(&self, index: usize) -> &DMatrix<C64> {
        &self.h[index]
    }

    pub fn all_h(&self) -> &[DMatrix<C64>] {
        &self.h
    }

    /// Entry `j = k L + l` of the stacked delay vector on storage index `index`.
    pub fn e_entry(&self, j: usize, index: usize) -> C64 {
        self.e[(j, index)]
    }

    /// `E_n x` for a length-K vector `x`, without forming `E_n`.
    pub fn apply_e(&self, index: usize, x: &DVector<C64>) -> DVector<C64> {
        let l_paths = self.num_paths;
        DVector::from_fn(self.e.nrows(), |j, _| self.e[(j, index)] * x[j / l_paths])
    }

    /// Dense `E_n` (`KL × K`), for checks.
    pub fn e_matrix(&self, index: usize) -> DMatrix<C64> {
        let l_paths = self.num_paths;
        DMatrix::from_fn(self.e.nrows(), self.num_users, |j, k| {
            if j / l_paths == k {
                self.e[(j, index)]
            } else {
                C64::default()
            }
        })
    }

    /// Dense diagonal `G`, for checks.
    pub fn g_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_diagonal(&self.g)
    }

    /// `η = vec(Fᴴ)`; block `m` is the response of antenna `m`.
    pub fn eta(&self) -> DVector<C64> {
        self.f.adjoint().as_slice().to_vec().into()
    }
}

/// `H_n` for the 1-based subcarrier number `n`.
pub fn channel_matrix(fc: &FrequencyChannel, n: usize) -> Result<&DMatrix<C64>> {
    let sc = Subcarrier::new(n, fc.num_subcarriers())?;
    Ok(fc.h(sc.index()))
}
