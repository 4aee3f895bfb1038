//! Antenna position update: a minorize-maximize surrogate of the position
//! objective followed by a sequential lattice search per antenna.
//!
//! Around the expansion layout `r⁽ᵗ⁾`, with `u_n = V_n⁻¹ H_n b̄_n` and
//! `a_n = G E_n b̄_n`, the objective `Σ_n b̄_nᴴ H_nᴴ V_n⁻¹ H_n b̄_n` is bounded
//! below by
//!
//! ```text
//! Σ_m -2 Re{ η(r_m)ᴴ φ_m } + Σ_n κ_n
//! ```
//!
//! with equality at `r⁽ᵗ⁾`. Two facts keep this cheap:
//!
//! * `S_n = u_n u_nᴴ` is rank one, so `λ_max(S_n) = ‖u_n‖²`.
//! * `Λ_n = G E_n B_n E_nᴴ Gᴴ` is block diagonal with rank-one blocks
//!   `a_{n,k} a_{n,k}ᴴ`, so `λ_max(Λ_n) = max_k ‖a_{n,k}‖²`.
//!
//! `Ψ_n = S_nᵀ ⊗ Λ_n` is never formed; `Ψ_n η = vec(Λ_n Fᴴ S_n)` is used instead.

use nalgebra::{DMatrix, DVector};

use crate::channel::{assemble_factors, write_response_block, FrequencyChannel};
use crate::error::{Error, Result};
use crate::model::{axis_lattice, well_spaced, AntennaLayout, ChannelRealization, Position, Region, SystemConfig, C64};
use crate::transceiver::{position_objective, SubcarrierWorkspace};

/// Surrogate pieces contributed by one subcarrier.
#[derive(Debug, Clone)]
pub struct SubcarrierSurrogate {
    /// `u_n = V_n⁻¹ H_n b̄_n`; `S_n = u_n u_nᴴ`.
    pub u: DVector<C64>,
    /// `a_n = G E_n b̄_n` (length KL).
    pub a: DVector<C64>,
    /// `λ_max(S_n) · λ_max(Λ_n)`.
    pub beta: f64,
    pub kappa: f64,
    /// `b̄_nᴴ Hᴴ V⁻¹ H b̄_n` at the expansion point.
    pub upsilon3: f64,
    /// `Λ_n Fᴴ u_n - a_n`.
    c: DVector<C64>,
    num_paths: usize,
}

impl SubcarrierSurrogate {
    pub fn s_matrix(&self) -> DMatrix<C64> {
        &self.u * self.u.adjoint()
    }

    /// Dense `Λ_n`.
    pub fn lambda_matrix(&self) -> DMatrix<C64> {
        let l = self.num_paths;
        DMatrix::from_fn(self.a.len(), self.a.len(), |i, j| {
            if i / l == j / l {
                self.a[i] * self.a[j].conj()
            } else {
                C64::default()
            }
        })
    }

    pub fn lambda_max_s(&self) -> f64 {
        self.u.norm_squared()
    }

    pub fn lambda_max_lambda(&self) -> f64 {
        self.a
            .as_slice()
            .chunks(self.num_paths)
            .map(|blk| blk.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `ω_n = vec(a_n u_nᴴ)`.
    pub fn omega(&self) -> DVector<C64> {
        let m_ant = self.u.len();
        let kl = self.a.len();
        DVector::from_fn(kl * m_ant, |i, _| self.a[i % kl] * self.u[i / kl].conj())
    }

    /// `ψ_n = (Ψ_n - β_n I) η⁽ᵗ⁾ - ω_n`.
    pub fn psi(&self, expansion: &DVector<C64>) -> DVector<C64> {
        let kl = self.a.len();
        DVector::from_fn(expansion.len(), |i, _| {
            self.c[i % kl] * self.u[i / kl].conj() - expansion[i] * self.beta
        })
    }
}

/// The assembled separable surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateCoefficients {
    pub subcarriers: Vec<SubcarrierSurrogate>,
    /// `φ_m = Σ_n ψ_{n,m}`, one length-KL block per antenna.
    pub phi: Vec<DVector<C64>>,
    /// `η⁽ᵗ⁾ = vec(Fᴴ)` at the expansion layout.
    pub expansion: DVector<C64>,
}

impl SurrogateCoefficients {
    /// `Σ_n κ_n`, the layout-independent part of the bound.
    pub fn constant(&self) -> f64 {
        self.subcarriers.iter().map(|s| s.kappa).sum()
    }

    /// The position objective at the expansion point.
    pub fn expansion_objective(&self) -> f64 {
        self.subcarriers.iter().map(|s| s.upsilon3).sum()
    }

    pub fn block_len(&self) -> usize {
        self.phi.first().map_or(0, |p| p.len())
    }
}

/// Builds the surrogate at the layout `fc` was assembled for.
pub fn build_surrogate(
    fc: &FrequencyChannel,
    precoders: &DMatrix<C64>,
    noise_power: f64,
) -> Result<SurrogateCoefficients> {
    let m_ant = fc.num_antennas();
    let l_paths = fc.num_paths();
    let kl = fc.num_users() * l_paths;
    let eta_norm_sq = (kl * m_ant) as f64;
    let expansion = fc.eta();

    let mut subcarriers = Vec::with_capacity(fc.num_subcarriers());
    let mut phi = vec![DVector::<C64>::zeros(kl); m_ant];
    for idx in 0..fc.num_subcarriers() {
        let ws = SubcarrierWorkspace::new(fc, precoders, noise_power, idx)?;
        let u = ws.combiner.clone();
        let a_scaled = DVector::from_fn(kl, |j, _| fc.g()[j] * fc.e_entry(j, idx) * ws.b_bar[j / l_paths]);
        // x = Fᴴ u, then Λ x blockwise.
        let x = fc.f().ad_mul(&u);
        let mut lambda_x = DVector::<C64>::zeros(kl);
        let mut quad = 0.0;
        for k in 0..fc.num_users() {
            let blk = k * l_paths..(k + 1) * l_paths;
            let a_k = a_scaled.rows(blk.start, l_paths);
            let proj: C64 = a_k.dotc(&x.rows(blk.start, l_paths));
            quad += proj.norm_sqr();
            for j in blk {
                lambda_x[j] = a_scaled[j] * proj;
            }
        }
        let c = &lambda_x - &a_scaled;
        let mut sc = SubcarrierSurrogate {
            u,
            a: a_scaled,
            beta: 0.0,
            kappa: 0.0,
            upsilon3: ws.objective_term(),
            c,
            num_paths: l_paths,
        };
        sc.beta = sc.lambda_max_s() * sc.lambda_max_lambda();
        // κ_n = -β‖η‖² - η⁽ᵗ⁾ᴴ(βI - Ψ)η⁽ᵗ⁾ - σ² tr(S_n), with ‖η‖² = ‖η⁽ᵗ⁾‖² = KLM.
        sc.kappa = -2.0 * sc.beta * eta_norm_sq + quad - noise_power * sc.lambda_max_s();
        for (m, phi_m) in phi.iter_mut().enumerate() {
            let um = sc.u[m].conj();
            for j in 0..kl {
                *phi_m.index_mut(j) += sc.c[j] * um - expansion[m * kl + j] * sc.beta;
            }
        }
        subcarriers.push(sc);
    }
    Ok(SurrogateCoefficients {
        subcarriers,
        phi,
        expansion,
    })
}

fn block_score(eta: &[C64], phi: &DVector<C64>) -> f64 {
    -2.0 * eta
        .iter()
        .zip(phi.iter())
        .map(|(e, p)| e.re * p.re + e.im * p.im)
        .sum::<f64>()
}

/// `Σ_m -2 Re{η(r_m)ᴴ φ_m}` with `η(r_m)` recomputed from geometry.
pub fn surrogate_value(
    coeffs: &SurrogateCoefficients,
    layout: &AntennaLayout,
    chan: &ChannelRealization,
    wavelength: f64,
) -> f64 {
    let mut block = vec![C64::default(); coeffs.block_len()];
    layout
        .positions()
        .iter()
        .zip(&coeffs.phi)
        .map(|(r, phi)| {
            write_response_block(*r, chan, wavelength, &mut block);
            block_score(&block, phi)
        })
        .sum()
}

/// Surrogate including constants: a lower bound on [`position_objective`]
/// that is tight at the expansion layout.
pub fn surrogate_bound(
    coeffs: &SurrogateCoefficients,
    layout: &AntennaLayout,
    chan: &ChannelRealization,
    wavelength: f64,
) -> f64 {
    surrogate_value(coeffs, layout, chan, wavelength) + coeffs.constant()
}

/// Disk of radius `radius` around an already placed antenna. Points exactly
/// `radius` away stay admissible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExclusionDisk {
    pub center: Position,
    pub radius: f64,
}

impl ExclusionDisk {
    pub fn excludes(&self, p: &Position) -> bool {
        !well_spaced(p, &self.center, self.radius)
    }
}

/// Lattice of candidate positions over the region, with the response blocks
/// `η(r)` of every candidate precomputed for one channel realization.
#[derive(Debug, Clone)]
pub struct PositionGrid {
    step: f64,
    points: Vec<Position>,
    responses: Vec<C64>,
    block_len: usize,
}

impl PositionGrid {
    /// Points are stored x-major, so scan order is lexicographic in `(x, y)`.
    pub fn new(region: &Region, step: f64, chan: &ChannelRealization, wavelength: f64) -> Self {
        let points: Vec<Position> = axis_lattice(region.x_lo, region.x_hi, step)
            .flat_map(|x| axis_lattice(region.y_lo, region.y_hi, step).map(move |y| Position::new(x, y)))
            .collect();
        let block_len = chan.num_users() * chan.num_paths();
        let mut responses = vec![C64::default(); points.len() * block_len];
        for (p, out) in points.iter().zip(responses.chunks_mut(block_len)) {
            write_response_block(*p, chan, wavelength, out);
        }
        Self {
            step,
            points,
            responses,
            block_len,
        }
    }

    pub fn for_config(cfg: &SystemConfig, chan: &ChannelRealization) -> Self {
        Self::new(&cfg.region, cfg.grid_step, chan, cfg.wavelength)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> &[Position] {
        &self.points
    }

    pub fn response(&self, i: usize) -> &[C64] {
        &self.responses[i * self.block_len..(i + 1) * self.block_len]
    }

    /// Per-antenna surrogate score `-2 Re{η(r)ᴴ φ}` at every lattice point.
    pub fn scores(&self, phi: &DVector<C64>) -> Vec<f64> {
        (0..self.points.len())
            .map(|i| block_score(self.response(i), phi))
            .collect()
    }
}

/// Best admissible lattice point for antenna `m` (0-based). Ties go to the
/// lexicographically smallest `(x, y)`.
pub fn optimize_position(
    m: usize,
    coeffs: &SurrogateCoefficients,
    grid: &PositionGrid,
    exclusions: &[ExclusionDisk],
) -> Result<Position> {
    let phi = &coeffs.phi[m];
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in grid.points.iter().enumerate() {
        if exclusions.iter().any(|d| d.excludes(p)) {
            continue;
        }
        let score = block_score(grid.response(i), phi);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| grid.points[i])
        .ok_or(Error::EmptyFeasibleSet { antenna: m })
}

/// Places antennas `0..M` in order, each avoiding the disks of those placed
/// before it in this pass. An antenna with no admissible point keeps its
/// previous position.
pub fn place_sequentially(
    layout: &AntennaLayout,
    coeffs: &SurrogateCoefficients,
    grid: &PositionGrid,
    min_spacing: f64,
) -> AntennaLayout {
    let mut placed: Vec<Position> = Vec::with_capacity(layout.len());
    let mut disks: Vec<ExclusionDisk> = Vec::with_capacity(layout.len());
    for m in 0..layout.len() {
        let p = match optimize_position(m, coeffs, grid, &disks) {
            Ok(p) => p,
            Err(_) => layout.get(m),
        };
        placed.push(p);
        disks.push(ExclusionDisk {
            center: p,
            radius: min_spacing,
        });
    }
    AntennaLayout::new(placed)
}

#[derive(Debug, Clone)]
pub struct MmStep {
    pub layout: AntennaLayout,
    pub channel: FrequencyChannel,
    pub objective: f64,
    /// False when the candidate layout was rejected and the input returned.
    pub accepted: bool,
}

/// One MM iteration: surrogate at the current layout, sequential placement,
/// then the candidate is kept only if it is feasible and the true objective
/// did not decrease.
pub fn mm_position_step(
    layout: &AntennaLayout,
    fc: &FrequencyChannel,
    chan: &ChannelRealization,
    precoders: &DMatrix<C64>,
    cfg: &SystemConfig,
    grid: &PositionGrid,
) -> Result<MmStep> {
    let coeffs = build_surrogate(fc, precoders, cfg.noise_power)?;
    let current = coeffs.expansion_objective();
    let candidate = place_sequentially(layout, &coeffs, grid, cfg.min_spacing);
    let reject = || MmStep {
        layout: layout.clone(),
        channel: fc.clone(),
        objective: current,
        accepted: false,
    };
    if !candidate.is_feasible(&cfg.region, cfg.min_spacing) {
        return Ok(reject());
    }
    let channel = assemble_factors(&candidate, chan, cfg.num_subcarriers, cfg.wavelength);
    let objective = position_objective(&channel, precoders, cfg.noise_power)?;
    if objective < current {
        return Ok(reject());
    }
    Ok(MmStep {
        layout: candidate,
        channel,
        objective,
        accepted: true,
    })
}

#[derive(Debug, Clone)]
pub struct MmOutcome {
    pub layout: AntennaLayout,
    pub channel: FrequencyChannel,
    pub objective: f64,
    pub steps: usize,
}

/// Repeats [`mm_position_step`] until a rejection, a relative gain below
/// `mm_tol`, or `max_mm_iters` steps.
pub fn optimize_layout(
    layout: &AntennaLayout,
    fc: &FrequencyChannel,
    chan: &ChannelRealization,
    precoders: &DMatrix<C64>,
    cfg: &SystemConfig,
    grid: &PositionGrid,
) -> Result<MmOutcome> {
    let mut layout = layout.clone();
    let mut channel = fc.clone();
    let mut objective = position_objective(fc, precoders, cfg.noise_power)?;
    let mut steps = 0;
    while steps < cfg.max_mm_iters {
        let step = mm_position_step(&layout, &channel, chan, precoders, cfg, grid)?;
        steps += 1;
        if !step.accepted {
            break;
        }
        let gain = step.objective - objective;
        layout = step.layout;
        channel = step.channel;
        objective = step.objective;
        if gain <= cfg.mm_tol * objective.abs() {
            break;
        }
    }
    Ok(MmOutcome {
        layout,
        channel,
        objective,
        steps,
    })
}
